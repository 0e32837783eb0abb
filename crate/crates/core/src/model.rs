//! The treatment-adaptive network: a shared confounding representation,
//! one mediator representation per arm, and one outcome head per arm.
//!
//! Counterfactual mediator values are realised by feeding a head the other
//! arm's mediator representation, so that for every individual
//! `ite = mte(t) + dte(1 − t)` holds algebraically.

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::DenseNet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Treated,
    Control,
}

impl Arm {
    pub fn from_indicator(t: u8) -> Arm {
        if t == 1 {
            Arm::Treated
        } else {
            Arm::Control
        }
    }

    pub fn other(self) -> Arm {
        match self {
            Arm::Treated => Arm::Control,
            Arm::Control => Arm::Treated,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Arm::Treated => "treated",
            Arm::Control => "control",
        }
    }
}

/// Layer widths of every sub-network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    /// Width of the hidden layers of Φ and Ψ.
    pub rep_width: usize,
    /// Number of dense layers in Φ and Ψ, the last producing the representation.
    pub rep_layers: usize,
    pub r_z: usize,
    pub r_m: usize,
    pub head_width: usize,
    /// Hidden layers in each outcome head (followed by a linear scalar output).
    pub head_layers: usize,
}

impl Architecture {
    pub fn new(input_dim: usize) -> Self {
        Architecture {
            input_dim,
            rep_width: 200,
            rep_layers: 3,
            r_z: 200,
            r_m: 200,
            head_width: 200,
            head_layers: 3,
        }
    }

    fn rep_dims(&self, out: usize) -> Vec<usize> {
        let mut dims = vec![self.input_dim];
        dims.extend(std::iter::repeat_n(self.rep_width, self.rep_layers.saturating_sub(1)));
        dims.push(out);
        dims
    }

    fn head_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.r_z + self.r_m];
        dims.extend(std::iter::repeat_n(self.head_width, self.head_layers));
        dims.push(1);
        dims
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DtanetModel {
    pub phi: DenseNet,
    pub psi_t: DenseNet,
    pub psi_c: DenseNet,
    pub head_t: DenseNet,
    pub head_c: DenseNet,
}

/// Names used for the five parameter bundles, in [`DtanetModel::nets`] order.
pub const NET_NAMES: [&str; 5] = ["phi", "psi_t", "psi_c", "head_t", "head_c"];

#[derive(Debug, Clone)]
pub struct Representations {
    pub z: Array2<f64>,
    pub m_t: Array2<f64>,
    pub m_c: Array2<f64>,
}

impl DtanetModel {
    pub fn new(phi: DenseNet, psi_t: DenseNet, psi_c: DenseNet, head_t: DenseNet, head_c: DenseNet) -> Result<Self> {
        let d = phi.input_dim();
        for (name, net) in [("psi_t", &psi_t), ("psi_c", &psi_c)] {
            if net.input_dim() != d {
                return Err(Error::shape("mediator network input", d, format!("{name}: {}", net.input_dim())));
            }
        }
        if psi_t.output_dim() != psi_c.output_dim() {
            return Err(Error::shape("mediator representation width", psi_t.output_dim(), psi_c.output_dim()));
        }
        let width = phi.output_dim() + psi_t.output_dim();
        for (name, head) in [("head_t", &head_t), ("head_c", &head_c)] {
            if head.input_dim() != width {
                return Err(Error::shape("head input", width, format!("{name}: {}", head.input_dim())));
            }
            if head.output_dim() != 1 {
                return Err(Error::shape("head output", 1, format!("{name}: {}", head.output_dim())));
            }
        }
        Ok(DtanetModel { phi, psi_t, psi_c, head_t, head_c })
    }

    /// Freshly initialised model; networks are drawn in the order Φ, Ψ_t, Ψ_c, head_t, head_c.
    pub fn init<R: Rng + ?Sized>(arch: &Architecture, rng: &mut R) -> Result<Self> {
        if arch.rep_layers == 0 {
            return Err(Error::InvalidInput("representation networks need at least one layer".into()));
        }
        let phi = DenseNet::init(&arch.rep_dims(arch.r_z), rng)?;
        let psi_t = DenseNet::init(&arch.rep_dims(arch.r_m), rng)?;
        let psi_c = DenseNet::init(&arch.rep_dims(arch.r_m), rng)?;
        let head_t = DenseNet::init(&arch.head_dims(), rng)?;
        let head_c = DenseNet::init(&arch.head_dims(), rng)?;
        DtanetModel::new(phi, psi_t, psi_c, head_t, head_c)
    }

    pub fn input_dim(&self) -> usize {
        self.phi.input_dim()
    }

    pub fn r_z(&self) -> usize {
        self.phi.output_dim()
    }

    pub fn r_m(&self) -> usize {
        self.psi_t.output_dim()
    }

    pub fn nets(&self) -> [&DenseNet; 5] {
        [&self.phi, &self.psi_t, &self.psi_c, &self.head_t, &self.head_c]
    }

    pub fn nets_mut(&mut self) -> [&mut DenseNet; 5] {
        [&mut self.phi, &mut self.psi_t, &mut self.psi_c, &mut self.head_t, &mut self.head_c]
    }

    pub fn head(&self, arm: Arm) -> &DenseNet {
        match arm {
            Arm::Treated => &self.head_t,
            Arm::Control => &self.head_c,
        }
    }

    pub fn mediator(&self, arm: Arm) -> &DenseNet {
        match arm {
            Arm::Treated => &self.psi_t,
            Arm::Control => &self.psi_c,
        }
    }

    pub fn represent(&self, x: ArrayView2<f64>) -> Result<Representations> {
        if x.ncols() != self.input_dim() {
            return Err(Error::shape("covariates", self.input_dim(), x.ncols()));
        }
        Ok(Representations {
            z: self.phi.predict_batch(x)?,
            m_t: self.psi_t.predict_batch(x)?,
            m_c: self.psi_c.predict_batch(x)?,
        })
    }

    /// `head(concat(Φ(x), Ψ_mediator(x)))` for every row of `x`.
    pub fn predict_outcomes(&self, x: ArrayView2<f64>, head: Arm, mediator: Arm) -> Result<Array1<f64>> {
        let reps = self.represent(x)?;
        let m = match mediator {
            Arm::Treated => &reps.m_t,
            Arm::Control => &reps.m_c,
        };
        head_predict(self.head(head), &reps.z, m)
    }

    pub fn predict_outcome(&self, x: ArrayView1<f64>, head: Arm, mediator: Arm) -> Result<f64> {
        Ok(self.predict_outcomes(x.insert_axis(Axis(0)), head, mediator)?[0])
    }

    /// Factual-mediator predictions `(ŷ_t, ŷ_c)` for every row.
    pub fn predict_potential_outcomes(&self, x: ArrayView2<f64>) -> Result<(Array1<f64>, Array1<f64>)> {
        let reps = self.represent(x)?;
        Ok((head_predict(&self.head_t, &reps.z, &reps.m_t)?, head_predict(&self.head_c, &reps.z, &reps.m_c)?))
    }

    /// Individual and population effects. `t` is the factual treatment of
    /// each row; MTE is taken at the factual status, DTE at both statuses.
    pub fn estimate_effects(&self, x: ArrayView2<f64>, t: &[u8]) -> Result<EffectEstimates> {
        if t.len() != x.nrows() {
            return Err(Error::shape("treatment vector", x.nrows(), t.len()));
        }
        let reps = self.represent(x)?;
        let tt = head_predict(&self.head_t, &reps.z, &reps.m_t)?;
        let tc = head_predict(&self.head_t, &reps.z, &reps.m_c)?;
        let ct = head_predict(&self.head_c, &reps.z, &reps.m_t)?;
        let cc = head_predict(&self.head_c, &reps.z, &reps.m_c)?;
        Ok(EffectEstimates::from_predictions(t, PotentialPredictions { tt, tc, ct, cc }))
    }
}

fn head_predict(head: &DenseNet, z: &Array2<f64>, m: &Array2<f64>) -> Result<Array1<f64>> {
    let input = concatenate(Axis(1), &[z.view(), m.view()]).map_err(|e| Error::shape("head input concat", "matching rows", e))?;
    Ok(head.predict_batch(input.view())?.column(0).to_owned())
}

/// Head outputs for every (head arm, mediator arm) pair; the first letter is
/// the head, the second the mediator representation.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialPredictions {
    pub tt: Array1<f64>,
    pub tc: Array1<f64>,
    pub ct: Array1<f64>,
    pub cc: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimates {
    pub treatment: Vec<u8>,
    /// ŷ_t with the treated mediator representation.
    pub y_treated: Vec<f64>,
    /// ŷ_c with the control mediator representation.
    pub y_control: Vec<f64>,
    pub ite: Vec<f64>,
    /// Mediated effect at each individual's factual status.
    pub mte: Vec<f64>,
    /// Direct effect with the mediator held at the factual arm.
    pub dte: Vec<f64>,
    /// Direct effect with the mediator held at the opposite arm; `ite = mte + dte_complement`.
    pub dte_complement: Vec<f64>,
    pub ate: f64,
    /// `None` when no individual is treated.
    pub att: Option<f64>,
    pub ame: f64,
    pub ade: f64,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

impl EffectEstimates {
    pub fn from_predictions(t: &[u8], p: PotentialPredictions) -> Self {
        let n = t.len();
        let mut ite = Vec::with_capacity(n);
        let mut mte = Vec::with_capacity(n);
        let mut dte = Vec::with_capacity(n);
        let mut dte_complement = Vec::with_capacity(n);
        for i in 0..n {
            let (tt, tc, ct, cc) = (p.tt[i], p.tc[i], p.ct[i], p.cc[i]);
            ite.push(tt - cc);
            // DTE with mediator at m(1) and at m(0).
            let dte_m1 = tt - ct;
            let dte_m0 = tc - cc;
            if t[i] == 1 {
                mte.push(tt - tc);
                dte.push(dte_m1);
                dte_complement.push(dte_m0);
            } else {
                mte.push(ct - cc);
                dte.push(dte_m0);
                dte_complement.push(dte_m1);
            }
        }
        let treated: Vec<f64> = ite.iter().zip(t).filter(|(_, &ti)| ti == 1).map(|(&e, _)| e).collect();
        EffectEstimates {
            treatment: t.to_vec(),
            y_treated: p.tt.to_vec(),
            y_control: p.cc.to_vec(),
            ate: mean(&ite),
            att: (!treated.is_empty()).then(|| mean(&treated)),
            ame: mean(&mte),
            ade: mean(&dte),
            ite,
            mte,
            dte,
            dte_complement,
        }
    }

    pub fn len(&self) -> usize {
        self.ite.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ite.is_empty()
    }
}

/// Split a head-input gradient into its Φ and Ψ column blocks.
pub(crate) fn split_head_input(grad: &Array2<f64>, r_z: usize) -> (Array2<f64>, Array2<f64>) {
    (grad.slice(s![.., ..r_z]).to_owned(), grad.slice(s![.., r_z..]).to_owned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Layer};
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn identity_net(d: usize) -> DenseNet {
        DenseNet::new(vec![Layer { weight: Array2::eye(d), bias: Array1::zeros(d), activation: Activation::Identity }]).unwrap()
    }

    fn constant_head(width: usize, value: f64) -> DenseNet {
        DenseNet::new(vec![Layer {
            weight: Array2::zeros((1, width)),
            bias: array![value],
            activation: Activation::Identity,
        }])
        .unwrap()
    }

    fn small_arch() -> Architecture {
        Architecture { input_dim: 3, rep_width: 4, rep_layers: 2, r_z: 3, r_m: 2, head_width: 4, head_layers: 2 }
    }

    #[test]
    fn empty_batch_represents_to_empty_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let model = DtanetModel::init(&small_arch(), &mut rng).unwrap();
        let reps = model.represent(Array2::zeros((0, 3)).view()).unwrap();
        assert_eq!(reps.z.dim(), (0, 3));
        assert_eq!(reps.m_t.dim(), (0, 2));
        assert_eq!(reps.m_c.dim(), (0, 2));
    }

    #[test]
    fn identity_representations() {
        let model = DtanetModel::new(identity_net(2), identity_net(2), identity_net(2), constant_head(4, 1.0), constant_head(4, 0.0)).unwrap();
        let x = array![[0.5, 2.0], [1.0, 3.0]];
        let reps = model.represent(x.view()).unwrap();
        assert_eq!(reps.z, x);
        assert_eq!(reps.m_t, x);
        assert_eq!(reps.m_c, x);
    }

    #[test]
    fn constant_heads() {
        let model = DtanetModel::new(identity_net(2), identity_net(2), identity_net(2), constant_head(4, 1.0), constant_head(4, 0.0)).unwrap();
        let x = array![[0.5, -2.0], [10.0, 3.0], [0.0, 0.0]];
        for row in x.outer_iter() {
            assert_eq!(model.predict_outcome(row, Arm::Treated, Arm::Control).unwrap(), 1.0);
            assert_eq!(model.predict_outcome(row, Arm::Control, Arm::Treated).unwrap(), 0.0);
        }
        let est = model.estimate_effects(x.view(), &[1, 0, 1]).unwrap();
        assert!(est.ite.iter().all(|&e| e == 1.0));
        assert_eq!(est.ate, 1.0);
        assert_eq!(est.att, Some(1.0));
    }

    #[test]
    fn rejects_inconsistent_widths() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let psi_narrow = DenseNet::init(&[2, 1], &mut rng).unwrap();
        let r = DtanetModel::new(identity_net(2), identity_net(2), psi_narrow, constant_head(4, 1.0), constant_head(4, 0.0));
        assert!(r.is_err());
        let r = DtanetModel::new(identity_net(2), identity_net(2), identity_net(2), constant_head(3, 1.0), constant_head(4, 0.0));
        assert!(r.is_err());
    }

    #[test]
    fn shared_mediator_weights_null_the_mediated_effect() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut model = DtanetModel::init(&small_arch(), &mut rng).unwrap();
        model.psi_c = model.psi_t.clone();
        let x = Array2::from_shape_fn((7, 3), |(i, j)| (i as f64 - 3.0) * 0.4 + j as f64 * 0.3);
        let est = model.estimate_effects(x.view(), &[1, 0, 1, 1, 0, 0, 1]).unwrap();
        assert!(est.mte.iter().all(|&m| m == 0.0));
        assert_eq!(est.ame, 0.0);
        assert_eq!(est.ite, est.dte);
        for row in x.outer_iter() {
            let a = model.predict_outcome(row, Arm::Treated, Arm::Treated).unwrap();
            let b = model.predict_outcome(row, Arm::Treated, Arm::Control).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn aggregates_follow_individual_effects() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let model = DtanetModel::init(&small_arch(), &mut rng).unwrap();
        let x = Array2::from_shape_fn((5, 3), |(i, j)| ((i * 3 + j) as f64).sin());
        let t = [1, 1, 0, 0, 1];
        let est = model.estimate_effects(x.view(), &t).unwrap();
        let ate = est.ite.iter().sum::<f64>() / 5.0;
        let att = (est.ite[0] + est.ite[1] + est.ite[4]) / 3.0;
        assert!((est.ate - ate).abs() < 1e-15);
        assert!((est.att.unwrap() - att).abs() < 1e-15);
        assert!((est.ame - est.mte.iter().sum::<f64>() / 5.0).abs() < 1e-15);
        assert!((est.ade - est.dte.iter().sum::<f64>() / 5.0).abs() < 1e-15);
        let none = model.estimate_effects(x.view(), &[0; 5]).unwrap();
        assert_eq!(none.att, None);
    }
}
