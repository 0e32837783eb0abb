//! Synthetic benchmark with known potential mediators and outcomes.
//!
//! Covariates are i.i.d. standard normal. Only the first five drive the
//! treatment rule, the mediator and the outcome:
//!
//! - `t = 1` iff `Σₖ basis(k, x_k) > 0` for k = 1..5
//! - `m(t) = Σₖ basis(k + 10, x_k) + c·t + ε_m`
//! - `y(t, m) = Σₖ basis(k + 5, x_k) + a·t + b·m + ε_y`
//!
//! `(ε_m, ε_y)` is bivariate standard normal with correlation `ρ` and is
//! shared by all potential worlds of an individual, so the true effects are
//! `ITE = a + b·c`, `MTE = b·c`, `DTE = a` for everyone.

use ndarray::{Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{CrossWorld, GroundTruth, ObservationalDataset};
use crate::error::{Error, Result};

/// The fifteen basis functions; `k` is 1-based.
pub fn basis(k: usize, x: f64) -> Result<f64> {
    let v = match k {
        1 => -2.0 * (2.0 * x).sin(),
        2 => x * x - 1.0 / 3.0,
        3 => x - 0.5,
        4 => (-x).exp() - (-1.0f64).exp() - 1.0,
        5 => (x - 0.5) * (x - 0.5) + 2.0,
        6 => f64::from(u8::from(x > 0.0)),
        7 => (-x).exp(),
        8 => x.cos(),
        9 => x * x,
        10 => x,
        11 => x.sin() - 2.0 * (5.0 * x).cos(),
        12 => -2.0 * x.exp(),
        13 => -2.0 * x * x + 1.0,
        14 => (3.0 * x).sin(),
        15 => -2.0 * (x / 2.0).cos(),
        _ => return Err(Error::InvalidInput(format!("basis index {k} outside 1..=15"))),
    };
    Ok(v)
}

fn basis_sum(offset: usize, row: ndarray::ArrayView1<f64>) -> f64 {
    (1..=5).map(|k| basis(k + offset, row[k - 1]).expect("index in range")).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n: usize,
    pub d: usize,
    /// Direct effect of treatment on outcome.
    pub a: f64,
    /// Mediator-to-outcome coefficient.
    pub b: f64,
    /// Treatment-to-mediator coefficient.
    pub c: f64,
    /// Correlation between mediator and outcome noise.
    pub rho: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig { n: 1500, d: 25, a: 2.0, b: 0.5, c: 1.0, rho: 0.0, seed: 42 }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidInput(format!("synthetic n must be at least 2, got {}", self.n)));
        }
        if self.d < 5 {
            return Err(Error::InvalidInput(format!("synthetic d must be at least 5, got {}", self.d)));
        }
        if !(self.rho.abs() <= 1.0) {
            return Err(Error::InvalidInput(format!("rho must lie in [-1, 1], got {}", self.rho)));
        }
        if ![self.a, self.b, self.c].iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("synthetic coefficients".into()));
        }
        Ok(())
    }
}

/// Mediator and outcome noise per individual.
#[derive(Debug, Clone, PartialEq)]
pub struct Noise {
    pub eps_m: Vec<f64>,
    pub eps_y: Vec<f64>,
}

/// `n` draws of `(ε_m, ε_y)` with unit variances and correlation `rho`.
pub fn draw_noise<R: Rng + ?Sized>(n: usize, rho: f64, rng: &mut R) -> Noise {
    let tail = (1.0 - rho * rho).max(0.0).sqrt();
    let mut eps_m = Vec::with_capacity(n);
    let mut eps_y = Vec::with_capacity(n);
    for _ in 0..n {
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        eps_m.push(z1);
        eps_y.push(rho * z1 + tail * z2);
    }
    Noise { eps_m, eps_y }
}

/// Realised and noiseless potential worlds.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTruth {
    pub realized: GroundTruth,
    pub expected: GroundTruth,
}

/// Treatment assignment and all potential worlds for given covariates and noise.
pub fn simulate(cfg: &SynthConfig, x: ArrayView2<f64>, noise: &Noise) -> Result<(Vec<u8>, SyntheticTruth)> {
    if x.ncols() < 5 {
        return Err(Error::shape("synthetic covariates", ">= 5 columns", x.ncols()));
    }
    let n = x.nrows();
    if noise.eps_m.len() != n || noise.eps_y.len() != n {
        return Err(Error::shape("synthetic noise", n, noise.eps_m.len()));
    }
    let mut t = Vec::with_capacity(n);
    let worlds = |with_noise: bool| {
        let mut gt = GroundTruth {
            y0: Vec::with_capacity(n),
            y1: Vec::with_capacity(n),
            m0: Vec::with_capacity(n),
            m1: Vec::with_capacity(n),
            cross: Some(CrossWorld { y1_m0: Vec::with_capacity(n), y0_m1: Vec::with_capacity(n) }),
        };
        for (i, row) in x.outer_iter().enumerate() {
            let (em, ey) = if with_noise { (noise.eps_m[i], noise.eps_y[i]) } else { (0.0, 0.0) };
            let m_base = basis_sum(10, row) + em;
            let y_base = basis_sum(5, row) + ey;
            let m0 = m_base;
            let m1 = m_base + cfg.c;
            let y = |treat: f64, m: f64| y_base + cfg.a * treat + cfg.b * m;
            gt.m0.push(m0);
            gt.m1.push(m1);
            gt.y0.push(y(0.0, m0));
            gt.y1.push(y(1.0, m1));
            let cross = gt.cross.as_mut().expect("cross worlds");
            cross.y1_m0.push(y(1.0, m0));
            cross.y0_m1.push(y(0.0, m1));
        }
        gt
    };
    let realized = worlds(true);
    let expected = worlds(false);
    for row in x.outer_iter() {
        t.push(u8::from(basis_sum(0, row) > 0.0));
    }
    Ok((t, SyntheticTruth { realized, expected }))
}

/// Draws a dataset; the realised ground truth is attached to the dataset.
pub fn generate(cfg: &SynthConfig) -> Result<(ObservationalDataset, SyntheticTruth)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let x = Array2::from_shape_simple_fn((cfg.n, cfg.d), || rng.sample::<f64, _>(StandardNormal));
    let noise = draw_noise(cfg.n, cfg.rho, &mut rng);
    let (t, truth) = simulate(cfg, x.view(), &noise)?;
    let y: Array1<f64> = t
        .iter()
        .enumerate()
        .map(|(i, &ti)| if ti == 1 { truth.realized.y1[i] } else { truth.realized.y0[i] })
        .collect();
    let ds = ObservationalDataset::new(x, t, y, ObservationalDataset::default_names(cfg.d), Some(truth.realized.clone()))?;
    Ok((ds, truth))
}

/// Arm sizes and per-arm covariate means.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateSummary {
    pub n_treated: usize,
    pub n_control: usize,
    /// `None` for an empty arm.
    pub mean_treated: Option<Vec<f64>>,
    pub mean_control: Option<Vec<f64>>,
}

impl CovariateSummary {
    /// One row per arm: name, size, covariate means (empty when the arm is empty).
    pub fn rows(&self) -> Vec<(&'static str, usize, Vec<f64>)> {
        vec![
            ("treated", self.n_treated, self.mean_treated.clone().unwrap_or_default()),
            ("control", self.n_control, self.mean_control.clone().unwrap_or_default()),
        ]
    }
}

pub fn covariate_distribution_check(ds: &ObservationalDataset) -> CovariateSummary {
    let arm_mean = |want: u8| -> (usize, Option<Vec<f64>>) {
        let rows: Vec<usize> = (0..ds.len()).filter(|&i| ds.t[i] == want).collect();
        if rows.is_empty() {
            return (0, None);
        }
        let mut acc = vec![0.0; ds.dim()];
        for &i in &rows {
            for (a, v) in acc.iter_mut().zip(ds.x.row(i)) {
                *a += v;
            }
        }
        let k = rows.len() as f64;
        (rows.len(), Some(acc.into_iter().map(|s| s / k).collect()))
    };
    let (n_treated, mean_treated) = arm_mean(1);
    let (n_control, mean_control) = arm_mean(0);
    CovariateSummary { n_treated, n_control, mean_treated, mean_control }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_values() {
        assert_eq!(basis(10, 0.7).unwrap(), 0.7);
        assert!((basis(2, 0.0).unwrap() + 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(basis(6, -1.0).unwrap(), 0.0);
        assert_eq!(basis(6, 1.0).unwrap(), 1.0);
        assert!(basis(0, 1.0).is_err());
        assert!(basis(16, 1.0).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(SynthConfig { n: 1, ..Default::default() }.validate().is_err());
        assert!(SynthConfig { d: 4, ..Default::default() }.validate().is_err());
        assert!(SynthConfig { rho: 1.5, ..Default::default() }.validate().is_err());
        assert!(SynthConfig::default().validate().is_ok());
    }

    #[test]
    fn zero_mediation_when_treatment_leaves_mediator() {
        let cfg = SynthConfig { n: 50, c: 0.0, b: 3.0, ..Default::default() };
        let (ds, truth) = generate(&cfg).unwrap();
        let eff = truth.realized.effects(&ds.t);
        assert!(eff.mte.unwrap().iter().all(|&m| m == 0.0));
    }

    #[test]
    fn factual_outcome_is_consistent() {
        let (ds, truth) = generate(&SynthConfig { n: 200, ..Default::default() }).unwrap();
        for i in 0..ds.len() {
            let expect = if ds.t[i] == 1 { truth.realized.y1[i] } else { truth.realized.y0[i] };
            assert_eq!(ds.y[i], expect);
        }
    }

    #[test]
    fn zero_covariates_follow_the_rule_at_origin() {
        let cfg = SynthConfig { n: 4, d: 5, ..Default::default() };
        let x = Array2::zeros((4, 5));
        let noise = Noise { eps_m: vec![0.0; 4], eps_y: vec![0.0; 4] };
        let (t, _) = simulate(&cfg, x.view(), &noise).unwrap();
        let at_origin: f64 = (1..=5).map(|k| basis(k, 0.0).unwrap()).sum();
        let expected = u8::from(at_origin > 0.0);
        assert!(t.iter().all(|&v| v == expected));
        let ds = ObservationalDataset::new(x, t, Array1::zeros(4), ObservationalDataset::default_names(5), None).unwrap();
        let summary = covariate_distribution_check(&ds);
        assert_eq!(summary.n_treated + summary.n_control, 4);
        assert!(summary.n_treated == 0 || summary.n_control == 0);
    }

    #[test]
    fn default_config_populates_both_arms() {
        let (ds, _) = generate(&SynthConfig::default()).unwrap();
        let s = covariate_distribution_check(&ds);
        assert!(s.n_treated > 0 && s.n_control > 0);
        assert_eq!(s.n_treated + s.n_control, 1500);
        // The selection rule depends on x1..x5, so arm means differ there.
        let (mt, mc) = (s.mean_treated.unwrap(), s.mean_control.unwrap());
        let gap: f64 = (0..5).map(|j| (mt[j] - mc[j]).abs()).sum();
        assert!(gap > 0.5, "arm mean gap {gap}");
    }

    #[test]
    fn minimal_summary_has_two_rows() {
        let (ds, _) = generate(&SynthConfig { n: 2, ..Default::default() }).unwrap();
        let rows = covariate_distribution_check(&ds).rows();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].1 + rows[1].1, 2);
    }
}
