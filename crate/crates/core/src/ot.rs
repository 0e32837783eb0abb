//! Entropic optimal transport between two representation clouds.
//!
//! The coupling is `γ = diag(u) K diag(v)` with `K = exp(-λ C)`, obtained by
//! alternating the scaling updates `v ← q / Kᵀu`, `u ← p / Kv`. The balancing
//! loss is the Frobenius product `⟨C, γ⟩` with `γ` held fixed when
//! differentiating.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TOLERANCE: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 1000;

/// Squared Euclidean distances, rows indexed by the control cloud and
/// columns by the treated cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix(pub Array2<f64>);

impl CostMatrix {
    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn dim(&self) -> (usize, usize) {
        self.0.dim()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub gamma: Array2<f64>,
    pub row_marginal: Array1<f64>,
    pub col_marginal: Array1<f64>,
    pub iterations: usize,
    /// `max(‖γ1 − p‖∞, ‖γᵀ1 − q‖∞)` at exit.
    pub residual: f64,
    pub converged: bool,
}

impl TransportPlan {
    pub fn mass(&self) -> f64 {
        self.gamma.sum()
    }

    /// Shannon entropy `−Σ γ log γ` with `0 log 0 = 0`.
    pub fn entropy(&self) -> f64 {
        -self
            .gamma
            .iter()
            .filter(|&&g| g > 0.0)
            .map(|&g| g * g.ln())
            .sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SinkhornMethod {
    /// Scaling vectors on the kernel `exp(-λC)` directly.
    #[default]
    Standard,
    /// Dual potentials with log-sum-exp reductions; survives large `λC`.
    LogDomain,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinkhornOptions {
    /// Entropic sharpness; the kernel is `exp(-lambda * C)`.
    pub lambda: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub method: SinkhornMethod,
}

impl SinkhornOptions {
    pub fn new(lambda: f64) -> Self {
        SinkhornOptions {
            lambda,
            max_iter: DEFAULT_MAX_ITER,
            tol: DEFAULT_TOLERANCE,
            method: SinkhornMethod::Standard,
        }
    }

    pub fn log_domain(mut self) -> Self {
        self.method = SinkhornMethod::LogDomain;
        self
    }
}

pub fn cost_matrix(z_c: ArrayView2<f64>, z_t: ArrayView2<f64>) -> Result<CostMatrix> {
    if z_c.nrows() == 0 || z_t.nrows() == 0 {
        return Err(Error::InvalidInput("cost matrix needs two nonempty clouds".into()));
    }
    if z_c.ncols() != z_t.ncols() {
        return Err(Error::shape("cost matrix columns", z_c.ncols(), z_t.ncols()));
    }
    let mut c = Array2::zeros((z_c.nrows(), z_t.nrows()));
    for (i, a) in z_c.outer_iter().enumerate() {
        for (j, b) in z_t.outer_iter().enumerate() {
            c[[i, j]] = Zip::from(&a).and(&b).fold(0.0, |acc, &x, &y| {
                let d = x - y;
                acc + d * d
            });
        }
    }
    Ok(CostMatrix(c))
}

pub fn uniform_marginal(n: usize) -> Array1<f64> {
    Array1::from_elem(n, 1.0 / n as f64)
}

fn validate_marginal(m: &Array1<f64>, name: &str, expected: usize) -> Result<()> {
    if m.len() != expected {
        return Err(Error::shape("sinkhorn marginal", expected, m.len()));
    }
    if !m.iter().all(|&x| x > 0.0 && x.is_finite()) {
        return Err(Error::InvalidInput(format!("marginal {name} must be strictly positive")));
    }
    if (m.sum() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!("marginal {name} sums to {} instead of 1", m.sum())));
    }
    Ok(())
}

/// Entropy-regularized transport plan between marginals `p` (rows) and `q`
/// (columns). Returns the plan with its residual even when `max_iter` is
/// exhausted; `converged` reports which case occurred.
pub fn sinkhorn(cost: &CostMatrix, p: &Array1<f64>, q: &Array1<f64>, opts: &SinkhornOptions) -> Result<TransportPlan> {
    let (n_c, n_t) = cost.dim();
    if n_c == 0 || n_t == 0 {
        return Err(Error::InvalidInput("empty cost matrix".into()));
    }
    if !cost.0.iter().all(|c| c.is_finite()) {
        return Err(Error::NonFinite("cost matrix".into()));
    }
    if !(opts.lambda > 0.0 && opts.lambda.is_finite()) {
        return Err(Error::InvalidInput(format!("lambda must be positive, got {}", opts.lambda)));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be positive, got {}", opts.tol)));
    }
    validate_marginal(p, "p", n_c)?;
    validate_marginal(q, "q", n_t)?;
    match opts.method {
        SinkhornMethod::Standard => sinkhorn_scaling(cost, p, q, opts),
        SinkhornMethod::LogDomain => sinkhorn_log(cost, p, q, opts),
    }
}

fn sinkhorn_scaling(cost: &CostMatrix, p: &Array1<f64>, q: &Array1<f64>, opts: &SinkhornOptions) -> Result<TransportPlan> {
    let kernel = cost.0.mapv(|c| (-opts.lambda * c).exp());
    let mut u = Array1::<f64>::ones(p.len());
    let mut v = Array1::<f64>::ones(q.len());
    let mut ktu = kernel.t().dot(&u);
    let mut iterations = 0;

    let underflow = |x: &Array1<f64>| x.iter().any(|&e| e == 0.0 || !e.is_finite());

    while iterations < opts.max_iter {
        iterations += 1;
        if underflow(&ktu) {
            return Err(Error::SinkhornUnderflow { which: "K^T u", iteration: iterations });
        }
        v = q / &ktu;
        let kv = kernel.dot(&v);
        if underflow(&kv) {
            return Err(Error::SinkhornUnderflow { which: "K v", iteration: iterations });
        }
        u = p / &kv;
        if underflow(&u) || underflow(&v) {
            return Err(Error::SinkhornUnderflow { which: "scaling vectors", iteration: iterations });
        }
        ktu = kernel.t().dot(&u);
        let row_err = (&u * &kv - p).mapv(f64::abs).fold(0.0f64, |a, &b| a.max(b));
        let col_err = (&v * &ktu - q).mapv(f64::abs).fold(0.0f64, |a, &b| a.max(b));
        let residual = row_err.max(col_err);
        if residual < opts.tol {
            break;
        }
    }

    let mut gamma = kernel;
    for (mut row, &ui) in gamma.axis_iter_mut(Axis(0)).zip(u.iter()) {
        row.zip_mut_with(&v, |g, &vj| *g *= ui * vj);
    }
    finish(gamma, p, q, iterations, opts.tol)
}

fn log_sum_exp(values: impl Iterator<Item = f64>) -> f64 {
    let vals: Vec<f64> = values.collect();
    let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + vals.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

fn sinkhorn_log(cost: &CostMatrix, p: &Array1<f64>, q: &Array1<f64>, opts: &SinkhornOptions) -> Result<TransportPlan> {
    let (n_c, n_t) = cost.dim();
    let scaled = cost.0.mapv(|c| -opts.lambda * c);
    let log_p = p.mapv(f64::ln);
    let log_q = q.mapv(f64::ln);
    let mut f = Array1::<f64>::zeros(n_c);
    let mut g = Array1::<f64>::zeros(n_t);
    let mut iterations = 0;

    let col_lse = |f: &Array1<f64>, j: usize| log_sum_exp((0..n_c).map(|i| f[i] + scaled[[i, j]]));
    let row_lse = |g: &Array1<f64>, i: usize| log_sum_exp((0..n_t).map(|j| g[j] + scaled[[i, j]]));

    while iterations < opts.max_iter {
        iterations += 1;
        for j in 0..n_t {
            g[j] = log_q[j] - col_lse(&f, j);
        }
        for i in 0..n_c {
            f[i] = log_p[i] - row_lse(&g, i);
        }
        // Rows match p after the f-update; only columns can be off.
        let col_err = (0..n_t)
            .map(|j| ((g[j] + col_lse(&f, j)).exp() - q[j]).abs())
            .fold(0.0f64, f64::max);
        if col_err < opts.tol {
            break;
        }
    }
    if !f.iter().chain(g.iter()).all(|x| x.is_finite()) {
        return Err(Error::NonFinite("log-domain sinkhorn potentials".into()));
    }
    let gamma = Array2::from_shape_fn((n_c, n_t), |(i, j)| (f[i] + g[j] + scaled[[i, j]]).exp());
    finish(gamma, p, q, iterations, opts.tol)
}

fn finish(gamma: Array2<f64>, p: &Array1<f64>, q: &Array1<f64>, iterations: usize, tol: f64) -> Result<TransportPlan> {
    let rows = gamma.sum_axis(Axis(1));
    let cols = gamma.sum_axis(Axis(0));
    let residual = (&rows - p)
        .iter()
        .chain((&cols - q).iter())
        .fold(0.0f64, |a, &b| a.max(b.abs()));
    if !residual.is_finite() {
        return Err(Error::NonFinite("transport plan".into()));
    }
    Ok(TransportPlan {
        gamma,
        row_marginal: p.clone(),
        col_marginal: q.clone(),
        iterations,
        residual,
        converged: residual < tol,
    })
}

/// Sinkhorn with uniform marginals; falls back to the log-domain path when
/// the kernel underflows.
pub fn sinkhorn_uniform(cost: &CostMatrix, opts: &SinkhornOptions) -> Result<TransportPlan> {
    let (n_c, n_t) = cost.dim();
    let p = uniform_marginal(n_c);
    let q = uniform_marginal(n_t);
    match sinkhorn(cost, &p, &q, opts) {
        Err(Error::SinkhornUnderflow { .. }) if opts.method == SinkhornMethod::Standard => {
            sinkhorn(cost, &p, &q, &opts.log_domain())
        }
        other => other,
    }
}

/// `⟨C, γ⟩_F`.
pub fn transport_cost(cost: &CostMatrix, plan: &TransportPlan) -> Result<f64> {
    if cost.dim() != plan.gamma.dim() {
        return Err(Error::shape("transport cost", format!("{:?}", cost.dim()), format!("{:?}", plan.gamma.dim())));
    }
    Ok(Zip::from(&cost.0).and(&plan.gamma).fold(0.0, |acc, &c, &g| acc + c * g))
}

/// Gradient of `⟨C(Z_c, Z_t), γ⟩` with respect to both clouds, `γ` frozen.
pub fn balancing_gradient(
    gamma: ArrayView2<f64>,
    z_c: ArrayView2<f64>,
    z_t: ArrayView2<f64>,
) -> Result<(Array2<f64>, Array2<f64>)> {
    if gamma.dim() != (z_c.nrows(), z_t.nrows()) {
        return Err(Error::shape(
            "balancing gradient",
            format!("({}, {})", z_c.nrows(), z_t.nrows()),
            format!("{:?}", gamma.dim()),
        ));
    }
    if z_c.ncols() != z_t.ncols() {
        return Err(Error::shape("balancing gradient columns", z_c.ncols(), z_t.ncols()));
    }
    let rows = gamma.sum_axis(Axis(1)).insert_axis(Axis(1));
    let cols = gamma.sum_axis(Axis(0)).insert_axis(Axis(1));
    let grad_c = (&z_c * &rows - gamma.dot(&z_t)) * 2.0;
    let grad_t = (&z_t * &cols - gamma.t().dot(&z_c)) * 2.0;
    Ok((grad_c, grad_t))
}

/// First Wasserstein distance between two empirical distributions on the
/// line, `∫ |F_a(x) − F_b(x)| dx`.
pub fn wasserstein_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidInput("wasserstein_1d needs two nonempty samples".into()));
    }
    if !a.iter().chain(b).all(|x| x.is_finite()) {
        return Err(Error::NonFinite("wasserstein_1d sample".into()));
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    let mut all: Vec<f64> = sa.iter().chain(&sb).copied().collect();
    all.sort_by(f64::total_cmp);

    let cdf = |sorted: &[f64], x: f64| sorted.partition_point(|&v| v <= x) as f64 / sorted.len() as f64;
    Ok(all
        .windows(2)
        .map(|w| (cdf(&sa, w[0]) - cdf(&sb, w[0])).abs() * (w[1] - w[0]))
        .sum())
}
