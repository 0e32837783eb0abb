//! Mini-batch training loop, validation selection and the λ grid search.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use ndarray::Array1;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{sample_arm_batch, ObservationalDataset};
use crate::error::{Error, Result};
use crate::model::{Architecture, Arm, DtanetModel};
use crate::nn::{AdamConfig, AdamState};
use crate::objective::{loss_outcome, objective_gradients, Batch, LossParts, LossWeights, PlanSource};
use crate::ot::{SinkhornOptions, DEFAULT_MAX_ITER, DEFAULT_TOLERANCE};

/// Every hyperparameter of a training run. Field names double as config keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lambda0: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Entropic strength of the Sinkhorn kernel.
    pub lambda3: f64,
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub epochs: usize,
    pub batch_size_t: usize,
    pub batch_size_c: usize,
    pub sinkhorn_max_iter: usize,
    pub sinkhorn_tol: f64,
    pub seed: u64,
    pub rep_width: usize,
    pub rep_layers: usize,
    pub r_z: usize,
    pub r_m: usize,
    pub head_width: usize,
    pub head_layers: usize,
    pub grid_lambda1: Vec<f64>,
    pub grid_lambda2: Vec<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        TrainConfig {
            lambda0: 0.5,
            lambda1: 0.15,
            lambda2: 0.375,
            lambda3: 0.1,
            alpha: adam.alpha,
            beta1: adam.beta1,
            beta2: adam.beta2,
            adam_epsilon: adam.epsilon,
            epochs: 300,
            batch_size_t: 64,
            batch_size_c: 64,
            sinkhorn_max_iter: DEFAULT_MAX_ITER,
            sinkhorn_tol: DEFAULT_TOLERANCE,
            seed: 42,
            rep_width: 200,
            rep_layers: 3,
            r_z: 200,
            r_m: 200,
            head_width: 200,
            head_layers: 3,
            grid_lambda1: vec![0.1, 0.15, 0.2],
            grid_lambda2: vec![0.3, 0.375, 0.45],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidInput(msg.to_string()));
        if !(self.lambda0 > 0.0 && self.lambda0 < 1.0) {
            return bad("lambda0 must lie in (0, 1)");
        }
        if !(self.lambda1 >= 0.0 && self.lambda1.is_finite()) || !(self.lambda2 >= 0.0 && self.lambda2.is_finite()) {
            return bad("lambda1 and lambda2 must be finite and nonnegative");
        }
        if !(self.lambda3 > 0.0 && self.lambda3.is_finite()) {
            return bad("lambda3 must be positive");
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta1 and beta2 must lie in [0, 1)");
        }
        if !(self.adam_epsilon > 0.0) {
            return bad("adam_epsilon must be positive");
        }
        if self.batch_size_t == 0 || self.batch_size_c == 0 {
            return bad("batch sizes must be at least 1");
        }
        if self.sinkhorn_max_iter == 0 || !(self.sinkhorn_tol > 0.0) {
            return bad("sinkhorn_max_iter and sinkhorn_tol must be positive");
        }
        if [self.rep_width, self.rep_layers, self.r_z, self.r_m, self.head_width, self.head_layers].contains(&0) {
            return bad("layer widths and depths must be at least 1");
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { alpha: self.alpha, beta1: self.beta1, beta2: self.beta2, epsilon: self.adam_epsilon }
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights { lambda0: self.lambda0, lambda1: self.lambda1, lambda2: self.lambda2 }
    }

    pub fn sinkhorn(&self) -> SinkhornOptions {
        SinkhornOptions { max_iter: self.sinkhorn_max_iter, tol: self.sinkhorn_tol, ..SinkhornOptions::new(self.lambda3) }
    }

    pub fn architecture(&self, input_dim: usize) -> Architecture {
        Architecture {
            input_dim,
            rep_width: self.rep_width,
            rep_layers: self.rep_layers,
            r_z: self.r_z,
            r_m: self.r_m,
            head_width: self.head_width,
            head_layers: self.head_layers,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub l_y: f64,
    pub l_sim: f64,
    pub l_balan: f64,
    pub total: f64,
    /// Worst marginal residual over the epoch's Sinkhorn solves.
    pub sinkhorn_residual: f64,
    pub val_l_y: Option<f64>,
    pub wall_seconds: f64,
}

/// Loss parts are means over the epoch's mini-batches.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub records: Vec<EpochRecord>,
    /// Epoch whose parameters were kept; `None` means the final (or initial) ones.
    pub best_epoch: Option<usize>,
}

pub const TRACE_COLUMNS: [&str; 6] = ["epoch", "l_y", "l_sim", "l_balan", "total", "sinkhorn_residual"];

impl TrainTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(TRACE_COLUMNS)?;
        for r in &self.records {
            let mut row = vec![r.epoch.to_string()];
            row.extend([r.l_y, r.l_sim, r.l_balan, r.total, r.sinkhorn_residual].iter().map(|v| format!("{v:.16e}")));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// What one optimisation step saw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub parts: LossParts,
    pub sinkhorn_residual: Option<f64>,
    pub sinkhorn_converged: bool,
}

/// Owns a model, its Adam states and the batch RNG.
#[derive(Debug, Clone)]
pub struct Trainer {
    cfg: TrainConfig,
    model: DtanetModel,
    adam: [AdamState; 5],
    batch_rng: ChaCha8Rng,
}

impl Trainer {
    /// Initialises the networks from `cfg.seed`; batches use a separate stream.
    pub fn new(cfg: TrainConfig, input_dim: usize) -> Result<Self> {
        cfg.validate()?;
        let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let model = DtanetModel::init(&cfg.architecture(input_dim), &mut init_rng)?;
        Self::from_model(cfg, model)
    }

    pub fn from_model(cfg: TrainConfig, model: DtanetModel) -> Result<Self> {
        cfg.validate()?;
        let adam = model.nets().map(|net| AdamState::for_net(cfg.adam(), net));
        let mut batch_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        batch_rng.set_stream(1);
        Ok(Trainer { cfg, model, adam, batch_rng })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn model(&self) -> &DtanetModel {
        &self.model
    }

    pub fn into_model(self) -> DtanetModel {
        self.model
    }

    /// One gradient step on a treated and a control batch. The networks of an
    /// arm whose batch is empty are left untouched, Adam moments included.
    pub fn step(&mut self, batch_t: &Batch, batch_c: &Batch) -> Result<StepReport> {
        let opts = self.cfg.sinkhorn();
        let eval = objective_gradients(&self.model, batch_t, batch_c, &self.cfg.weights(), PlanSource::Solve(&opts))?;
        if !eval.parts.total.is_finite() {
            return Err(Error::NonFinite("training objective".into()));
        }
        let grads = eval.grads.as_array();
        let active = [true, !batch_t.is_empty(), !batch_c.is_empty(), !batch_t.is_empty(), !batch_c.is_empty()];
        for (k, net) in self.model.nets_mut().into_iter().enumerate() {
            if active[k] {
                self.adam[k].step_net(net, grads[k])?;
            }
        }
        Ok(StepReport {
            parts: eval.parts,
            sinkhorn_residual: eval.plan.as_ref().map(|p| p.residual),
            sinkhorn_converged: eval.plan.as_ref().is_none_or(|p| p.converged),
        })
    }

    /// Runs `cfg.epochs` epochs over `train_idx`. When `val_idx` is nonempty
    /// the parameters with the lowest validation `L_y` are kept.
    pub fn fit(&mut self, data: &ObservationalDataset, train_idx: &[usize], val_idx: &[usize]) -> Result<TrainTrace> {
        if data.dim() != self.model.input_dim() {
            return Err(Error::shape("training covariates", self.model.input_dim(), data.dim()));
        }
        let n_t = data.arm_members(train_idx, Arm::Treated).len();
        let n_c = data.arm_members(train_idx, Arm::Control).len();
        if n_t == 0 || n_c == 0 {
            return Err(Error::InvalidInput(format!(
                "training needs both arms, got {n_t} treated and {n_c} control"
            )));
        }
        let steps = n_t.max(n_c).div_ceil(self.cfg.batch_size_t.max(self.cfg.batch_size_c));
        let start = Instant::now();
        let mut trace = TrainTrace::default();
        let mut best: Option<(f64, DtanetModel)> = None;

        for epoch in 1..=self.cfg.epochs {
            let mut sums = [0.0; 4];
            let mut worst_residual: f64 = 0.0;
            let mut unconverged = 0usize;
            for batch in 0..steps {
                let (bt, _) = sample_arm_batch(data, train_idx, Arm::Treated, self.cfg.batch_size_t, &mut self.batch_rng)?;
                let (bc, _) = sample_arm_batch(data, train_idx, Arm::Control, self.cfg.batch_size_c, &mut self.batch_rng)?;
                let report = self.step(&bt, &bc).map_err(|e| match e {
                    Error::NonFinite(reason) => Error::Training { epoch, batch, reason: format!("non-finite {reason}") },
                    other => other,
                })?;
                let p = report.parts;
                for (s, v) in sums.iter_mut().zip([p.l_y, p.l_sim, p.l_balan, p.total]) {
                    *s += v;
                }
                if let Some(r) = report.sinkhorn_residual {
                    worst_residual = worst_residual.max(r);
                }
                if !report.sinkhorn_converged {
                    unconverged += 1;
                }
            }
            if unconverged > 0 {
                log::warn!("epoch {epoch}: Sinkhorn did not converge on {unconverged} of {steps} batches");
            }
            let val_l_y = if val_idx.is_empty() {
                None
            } else {
                let v = validation_loss(&self.model, data, val_idx, self.cfg.lambda0)?;
                if !v.is_finite() {
                    return Err(Error::Training { epoch, batch: steps, reason: "non-finite validation loss".into() });
                }
                if best.as_ref().is_none_or(|(b, _)| v < *b) {
                    best = Some((v, self.model.clone()));
                    trace.best_epoch = Some(epoch);
                }
                Some(v)
            };
            let k = steps as f64;
            trace.records.push(EpochRecord {
                epoch,
                l_y: sums[0] / k,
                l_sim: sums[1] / k,
                l_balan: sums[2] / k,
                total: sums[3] / k,
                sinkhorn_residual: worst_residual,
                val_l_y,
                wall_seconds: start.elapsed().as_secs_f64(),
            });
            log::info!("epoch {epoch}: total {:.4} l_y {:.4} val_l_y {val_l_y:?}", sums[3] / k, sums[0] / k);
        }
        if let Some((_, model)) = best {
            self.model = model;
        }
        Ok(trace)
    }
}

/// Factual outcome loss of `model` on the rows `idx`, weighted like `L_y`.
pub fn validation_loss(model: &DtanetModel, data: &ObservationalDataset, idx: &[usize], lambda0: f64) -> Result<f64> {
    let mut parts = Vec::with_capacity(2);
    for arm in [Arm::Treated, Arm::Control] {
        let rows = data.arm_members(idx, arm);
        let b = data.batch(&rows);
        let yhat = if rows.is_empty() { Array1::zeros(0) } else { model.predict_outcomes(b.x.view(), arm, arm)? };
        parts.push((yhat, b.y));
    }
    loss_outcome(parts[0].0.view(), parts[0].1.view(), parts[1].0.view(), parts[1].1.view(), lambda0)
}

/// Trains on every row of `data` without validation selection.
pub fn train(data: &ObservationalDataset, cfg: &TrainConfig) -> Result<(DtanetModel, TrainTrace)> {
    let mut trainer = Trainer::new(cfg.clone(), data.dim())?;
    let all: Vec<usize> = (0..data.len()).collect();
    let trace = trainer.fit(data, &all, &[])?;
    Ok((trainer.into_model(), trace))
}

/// Trains on `train_idx` and keeps the best model on `val_idx`.
pub fn train_split(
    data: &ObservationalDataset,
    cfg: &TrainConfig,
    train_idx: &[usize],
    val_idx: &[usize],
) -> Result<(DtanetModel, TrainTrace)> {
    let mut trainer = Trainer::new(cfg.clone(), data.dim())?;
    let trace = trainer.fit(data, train_idx, val_idx)?;
    Ok((trainer.into_model(), trace))
}

/// One grid cell; `val_l_y` holds the failure message when training failed.
#[derive(Debug, Clone)]
pub struct GridCell {
    pub lambda1: f64,
    pub lambda2: f64,
    pub val_l_y: std::result::Result<f64, String>,
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub cells: Vec<GridCell>,
    /// Index into `cells` of the first minimum, if any cell succeeded.
    pub best: Option<usize>,
}

impl GridResult {
    pub fn best_cell(&self) -> Option<&GridCell> {
        self.best.map(|i| &self.cells[i])
    }
}

/// Trains one model per `(λ₁, λ₂)` pair (row-major over `grid1 × grid2`) and
/// selects the lowest validation `L_y`; ties keep the earliest cell.
pub fn grid_search(
    data: &ObservationalDataset,
    cfg: &TrainConfig,
    grid1: &[f64],
    grid2: &[f64],
    train_idx: &[usize],
    val_idx: &[usize],
) -> Result<GridResult> {
    if grid1.is_empty() || grid2.is_empty() {
        return Err(Error::InvalidInput("grid must be nonempty".into()));
    }
    if val_idx.is_empty() {
        return Err(Error::InvalidInput("grid search needs validation rows".into()));
    }
    let mut cells = Vec::with_capacity(grid1.len() * grid2.len());
    let mut best: Option<(usize, f64)> = None;
    for &lambda1 in grid1 {
        for &lambda2 in grid2 {
            let cell_cfg = TrainConfig { lambda1, lambda2, ..cfg.clone() };
            let outcome = train_split(data, &cell_cfg, train_idx, val_idx)
                .and_then(|(model, _)| validation_loss(&model, data, val_idx, cfg.lambda0))
                .map_err(|e| e.to_string());
            if let Ok(v) = outcome {
                if best.is_none_or(|(_, b)| v < b) {
                    best = Some((cells.len(), v));
                }
            }
            cells.push(GridCell { lambda1, lambda2, val_l_y: outcome });
        }
    }
    Ok(GridResult { cells, best: best.map(|(i, _)| i) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SynthConfig};

    pub(crate) fn small_cfg() -> TrainConfig {
        TrainConfig {
            epochs: 2,
            batch_size_t: 8,
            batch_size_c: 8,
            rep_width: 4,
            rep_layers: 2,
            r_z: 3,
            r_m: 3,
            head_width: 4,
            head_layers: 2,
            ..TrainConfig::default()
        }
    }

    fn small_data() -> ObservationalDataset {
        generate(&SynthConfig { n: 40, d: 5, ..SynthConfig::default() }).unwrap().0
    }

    #[test]
    fn default_config_is_valid() {
        TrainConfig::default().validate().unwrap();
        let bad = TrainConfig { lambda0: 1.0, ..TrainConfig::default() };
        assert!(bad.validate().is_err());
        let bad = TrainConfig { batch_size_c: 0, ..TrainConfig::default() };
        assert!(bad.validate().is_err());
        let bad = TrainConfig { lambda3: 0.0, ..TrainConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn zero_epochs_keeps_init() {
        let data = small_data();
        let cfg = TrainConfig { epochs: 0, ..small_cfg() };
        let (model, trace) = train(&data, &cfg).unwrap();
        assert!(trace.is_empty());
        let init = Trainer::new(cfg, data.dim()).unwrap().into_model();
        assert_eq!(model, init);
    }

    #[test]
    fn one_record_per_epoch() {
        let data = small_data();
        let (_, trace) = train(&data, &TrainConfig { epochs: 3, ..small_cfg() }).unwrap();
        assert_eq!(trace.len(), 3);
        assert!(trace.records.iter().all(|r| r.total.is_finite() && r.sinkhorn_residual.is_finite()));
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("epoch,l_y,l_sim,l_balan,total,sinkhorn_residual\n"));
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn single_arm_training_is_rejected() {
        let data = small_data();
        let treated = data.arm_members(&(0..data.len()).collect::<Vec<_>>(), Arm::Treated);
        let mut trainer = Trainer::new(small_cfg(), data.dim()).unwrap();
        assert!(matches!(trainer.fit(&data, &treated, &[]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn validation_selection_records_best_epoch() {
        let data = small_data();
        let idx: Vec<usize> = (0..30).collect();
        let val: Vec<usize> = (30..40).collect();
        let (model, trace) = train_split(&data, &TrainConfig { epochs: 4, ..small_cfg() }, &idx, &val).unwrap();
        let best = trace.best_epoch.unwrap();
        let best_val = trace.records[best - 1].val_l_y.unwrap();
        assert!(trace.records.iter().all(|r| r.val_l_y.unwrap() >= best_val));
        assert_eq!(validation_loss(&model, &data, &val, 0.5).unwrap(), best_val);
    }

    #[test]
    fn one_by_one_grid_selects_its_cell() {
        let data = small_data();
        let idx: Vec<usize> = (0..30).collect();
        let val: Vec<usize> = (30..40).collect();
        let g = grid_search(&data, &small_cfg(), &[0.2], &[0.3], &idx, &val).unwrap();
        assert_eq!(g.cells.len(), 1);
        assert_eq!(g.best, Some(0));
    }

    #[test]
    fn duplicate_cells_pick_the_first() {
        let data = small_data();
        let idx: Vec<usize> = (0..30).collect();
        let val: Vec<usize> = (30..40).collect();
        let g = grid_search(&data, &small_cfg(), &[0.1, 0.1], &[0.3], &idx, &val).unwrap();
        assert_eq!(g.cells[0].val_l_y, g.cells[1].val_l_y);
        assert_eq!(g.best, Some(0));
    }
}
