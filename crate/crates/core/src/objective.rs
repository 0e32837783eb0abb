//! Loss terms and the assembled gradient of
//! `L = L_y + λ₁ L_sim + λ₂ L_balan`.
//!
//! Gradient routing: Ψ_t and head_t only see treated rows, Ψ_c and head_c
//! only control rows, Φ sees both. The transport plan is a constant during
//! differentiation.

use ndarray::{concatenate, Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::model::{split_head_input, DtanetModel};
use crate::nn::{DenseNet, Gradients, Tape};
use crate::ot::{self, CostMatrix, SinkhornOptions, TransportPlan};

/// Covariates and factual outcomes of one arm's mini-batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub x: Array2<f64>,
    pub y: Array1<f64>,
}

impl Batch {
    pub fn new(x: Array2<f64>, y: Array1<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::shape("batch rows", x.nrows(), y.len()));
        }
        Ok(Batch { x, y })
    }

    pub fn empty(d: usize) -> Self {
        Batch { x: Array2::zeros((0, d)), y: Array1::zeros(0) }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// The three loss weights; `lambda0` splits `L_y` between the arms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda0: f64,
    pub lambda1: f64,
    pub lambda2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub l_y: f64,
    pub l_sim: f64,
    pub l_balan: f64,
    pub total: f64,
}

/// `(λ₀/n_t) Σ (ŷ_t − y_t)² + ((1 − λ₀)/n_c) Σ (ŷ_c − y_c)²`; an empty arm contributes 0.
pub fn loss_outcome(
    yhat_t: ArrayView1<f64>,
    y_t: ArrayView1<f64>,
    yhat_c: ArrayView1<f64>,
    y_c: ArrayView1<f64>,
    lambda0: f64,
) -> Result<f64> {
    Ok(lambda0 * mean_squared(yhat_t, y_t)? + (1.0 - lambda0) * mean_squared(yhat_c, y_c)?)
}

fn mean_squared(pred: ArrayView1<f64>, truth: ArrayView1<f64>) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::shape("outcome predictions", truth.len(), pred.len()));
    }
    if pred.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = pred.iter().zip(truth.iter()).map(|(p, y)| (p - y) * (p - y)).sum();
    Ok(sum / pred.len() as f64)
}

/// `‖Mᵀ Z‖²_F` for one arm.
pub fn orthogonality_term(m: ArrayView2<f64>, z: ArrayView2<f64>) -> Result<f64> {
    if m.nrows() != z.nrows() {
        return Err(Error::shape("orthogonality rows", z.nrows(), m.nrows()));
    }
    Ok(m.t().dot(&z).iter().map(|g| g * g).sum())
}

/// Scale-free orthogonality `‖Mᵀ Z‖_F / (‖M‖_F ‖Z‖_F)`, in `[0, 1]`;
/// 0 when either block is all zero.
pub fn orthogonality_ratio(m: ArrayView2<f64>, z: ArrayView2<f64>) -> Result<f64> {
    let cross = orthogonality_term(m, z)?.sqrt();
    let norms = m.iter().map(|v| v * v).sum::<f64>().sqrt() * z.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(if norms > 0.0 { cross / norms } else { 0.0 })
}

/// `‖M_tᵀ Z_t‖²_F + ‖M_cᵀ Z_c‖²_F`.
pub fn loss_orthogonal(m_t: ArrayView2<f64>, z_t: ArrayView2<f64>, m_c: ArrayView2<f64>, z_c: ArrayView2<f64>) -> Result<f64> {
    Ok(orthogonality_term(m_t, z_t)? + orthogonality_term(m_c, z_c)?)
}

/// Gradients of `‖Mᵀ Z‖²_F` with respect to `M` and `Z`.
pub fn orthogonality_gradient(m: ArrayView2<f64>, z: ArrayView2<f64>) -> (Array2<f64>, Array2<f64>) {
    let g = m.t().dot(&z);
    (z.dot(&g.t()) * 2.0, m.dot(&g) * 2.0)
}

/// Forward state of one arm.
struct ArmForward {
    z: Array2<f64>,
    z_tape: Tape,
    m: Array2<f64>,
    m_tape: Tape,
    yhat: Array1<f64>,
    head_tape: Tape,
}

fn forward_arm(phi: &DenseNet, psi: &DenseNet, head: &DenseNet, x: ArrayView2<f64>) -> Result<ArmForward> {
    let (z, z_tape) = phi.forward_batch(x)?;
    let (m, m_tape) = psi.forward_batch(x)?;
    let joint = concatenate(Axis(1), &[z.view(), m.view()]).map_err(|e| Error::shape("head input concat", "matching rows", e))?;
    let (out, head_tape) = head.forward_batch(joint.view())?;
    Ok(ArmForward { z, z_tape, m, m_tape, yhat: out.column(0).to_owned(), head_tape })
}

/// Loss parts for a given transport plan (`None` when either arm is empty,
/// in which case the balancing term is 0).
fn parts_from_forward(
    fw_t: &ArmForward,
    fw_c: &ArmForward,
    batch_t: &Batch,
    batch_c: &Batch,
    cost: Option<&CostMatrix>,
    gamma: Option<ArrayView2<f64>>,
    w: &LossWeights,
) -> Result<LossParts> {
    let l_y = loss_outcome(fw_t.yhat.view(), batch_t.y.view(), fw_c.yhat.view(), batch_c.y.view(), w.lambda0)?;
    let l_sim = loss_orthogonal(fw_t.m.view(), fw_t.z.view(), fw_c.m.view(), fw_c.z.view())?;
    let l_balan = match (cost, gamma) {
        (Some(c), Some(g)) => {
            if c.dim() != g.dim() {
                return Err(Error::shape("frozen plan", format!("{:?}", c.dim()), format!("{:?}", g.dim())));
            }
            c.0.iter().zip(g.iter()).map(|(a, b)| a * b).sum()
        }
        _ => 0.0,
    };
    let total = l_y + w.lambda1 * l_sim + w.lambda2 * l_balan;
    Ok(LossParts { l_y, l_sim, l_balan, total })
}

/// `L = L_y + λ₁ L_sim + λ₂ L_balan` on a pair of nonempty batches, with
/// `L_balan` the transport cost of the Sinkhorn plan between the Φ clouds.
pub fn total_loss(
    model: &DtanetModel,
    batch_t: &Batch,
    batch_c: &Batch,
    weights: &LossWeights,
    sinkhorn: &SinkhornOptions,
) -> Result<(f64, LossParts, TransportPlan)> {
    if batch_t.is_empty() || batch_c.is_empty() {
        return Err(Error::InvalidInput("total loss needs a nonempty batch for each arm".into()));
    }
    let fw_t = forward_arm(&model.phi, &model.psi_t, &model.head_t, batch_t.x.view())?;
    let fw_c = forward_arm(&model.phi, &model.psi_c, &model.head_c, batch_c.x.view())?;
    let cost = ot::cost_matrix(fw_c.z.view(), fw_t.z.view())?;
    let plan = ot::sinkhorn_uniform(&cost, sinkhorn)?;
    let parts = parts_from_forward(&fw_t, &fw_c, batch_t, batch_c, Some(&cost), Some(plan.gamma.view()), weights)?;
    Ok((parts.total, parts, plan))
}

/// Objective value with a fixed coupling `gamma` (`n_c × n_t`). As in
/// [`objective_gradients`], an empty arm drops the balancing term and `gamma`
/// is ignored.
pub fn frozen_plan_loss(
    model: &DtanetModel,
    batch_t: &Batch,
    batch_c: &Batch,
    gamma: ArrayView2<f64>,
    weights: &LossWeights,
) -> Result<LossParts> {
    let fw_t = forward_arm(&model.phi, &model.psi_t, &model.head_t, batch_t.x.view())?;
    let fw_c = forward_arm(&model.phi, &model.psi_c, &model.head_c, batch_c.x.view())?;
    if batch_t.is_empty() || batch_c.is_empty() {
        return parts_from_forward(&fw_t, &fw_c, batch_t, batch_c, None, None, weights);
    }
    let cost = ot::cost_matrix(fw_c.z.view(), fw_t.z.view())?;
    parts_from_forward(&fw_t, &fw_c, batch_t, batch_c, Some(&cost), Some(gamma), weights)
}

/// Gradient bundle for the five networks, in [`DtanetModel::nets`] order.
#[derive(Debug, Clone)]
pub struct ModelGradients {
    pub phi: Gradients,
    pub psi_t: Gradients,
    pub psi_c: Gradients,
    pub head_t: Gradients,
    pub head_c: Gradients,
}

impl ModelGradients {
    pub fn as_array(&self) -> [&Gradients; 5] {
        [&self.phi, &self.psi_t, &self.psi_c, &self.head_t, &self.head_c]
    }
}

/// Loss parts, gradients and the plan used for them.
#[derive(Debug, Clone)]
pub struct ObjectiveEval {
    pub parts: LossParts,
    pub grads: ModelGradients,
    pub plan: Option<TransportPlan>,
}

/// How the balancing coupling is obtained for a gradient evaluation.
#[derive(Debug, Clone, Copy)]
pub enum PlanSource<'a> {
    Solve(&'a SinkhornOptions),
    Frozen(ArrayView2<'a, f64>),
}

/// Evaluates the objective and its gradient. Either batch may be empty; the
/// empty arm's networks then receive all-zero gradients and the balancing
/// term is dropped.
pub fn objective_gradients(
    model: &DtanetModel,
    batch_t: &Batch,
    batch_c: &Batch,
    weights: &LossWeights,
    plan_source: PlanSource<'_>,
) -> Result<ObjectiveEval> {
    if batch_t.is_empty() && batch_c.is_empty() {
        return Err(Error::InvalidInput("objective needs at least one nonempty batch".into()));
    }
    let fw_t = forward_arm(&model.phi, &model.psi_t, &model.head_t, batch_t.x.view())?;
    let fw_c = forward_arm(&model.phi, &model.psi_c, &model.head_c, batch_c.x.view())?;

    let both = !batch_t.is_empty() && !batch_c.is_empty();
    let (cost, plan, gamma) = if both {
        let cost = ot::cost_matrix(fw_c.z.view(), fw_t.z.view())?;
        match plan_source {
            PlanSource::Solve(opts) => {
                let plan = ot::sinkhorn_uniform(&cost, opts)?;
                let gamma = plan.gamma.clone();
                (Some(cost), Some(plan), Some(gamma))
            }
            PlanSource::Frozen(g) => (Some(cost), None, Some(g.to_owned())),
        }
    } else {
        (None, None, None)
    };
    let parts = parts_from_forward(&fw_t, &fw_c, batch_t, batch_c, cost.as_ref(), gamma.as_ref().map(|g| g.view()), weights)?;

    let r_z = model.r_z();

    // ∂L_y/∂ŷ per arm.
    let dy_t = outcome_upstream(&fw_t.yhat, &batch_t.y, weights.lambda0);
    let dy_c = outcome_upstream(&fw_c.yhat, &batch_c.y, 1.0 - weights.lambda0);

    let head_t = model.head_t.backward(&fw_t.head_tape, dy_t.view())?;
    let head_c = model.head_c.backward(&fw_c.head_tape, dy_c.view())?;
    let (mut dz_t, mut dm_t) = split_head_input(&head_t.input, r_z);
    let (mut dz_c, mut dm_c) = split_head_input(&head_c.input, r_z);

    if weights.lambda1 != 0.0 {
        let (gm, gz) = orthogonality_gradient(fw_t.m.view(), fw_t.z.view());
        dm_t.scaled_add(weights.lambda1, &gm);
        dz_t.scaled_add(weights.lambda1, &gz);
        let (gm, gz) = orthogonality_gradient(fw_c.m.view(), fw_c.z.view());
        dm_c.scaled_add(weights.lambda1, &gm);
        dz_c.scaled_add(weights.lambda1, &gz);
    }

    if let (Some(gamma), true) = (gamma.as_ref(), weights.lambda2 != 0.0) {
        let (gc, gt) = ot::balancing_gradient(gamma.view(), fw_c.z.view(), fw_t.z.view())?;
        dz_c.scaled_add(weights.lambda2, &gc);
        dz_t.scaled_add(weights.lambda2, &gt);
    }

    let mut phi = model.phi.backward(&fw_t.z_tape, dz_t.view())?;
    phi.accumulate(&model.phi.backward(&fw_c.z_tape, dz_c.view())?)?;
    let psi_t = model.psi_t.backward(&fw_t.m_tape, dm_t.view())?;
    let psi_c = model.psi_c.backward(&fw_c.m_tape, dm_c.view())?;

    Ok(ObjectiveEval {
        parts,
        grads: ModelGradients { phi, psi_t, psi_c, head_t, head_c },
        plan,
    })
}

fn outcome_upstream(yhat: &Array1<f64>, y: &Array1<f64>, weight: f64) -> Array2<f64> {
    let n = y.len();
    if n == 0 {
        return Array2::zeros((0, 1));
    }
    let scale = 2.0 * weight / n as f64;
    ((yhat - y) * scale).insert_axis(Axis(1))
}
