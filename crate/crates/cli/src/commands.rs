//! Subcommand implementations. Each writes its CSV artefacts under the
//! manifest's output directory and returns what it wrote.

use std::fs;
use std::path::{Path, PathBuf};

use dtanet_core::baselines::{ols1_fit, ols1_ite, ols1_potential, ols2_fit, ols2_ite, ols2_potential};
use dtanet_core::data::TrueEffects;
use dtanet_core::metrics::{pehe, policy_risk, REPORT_FIELDS};
use dtanet_core::ot::wasserstein_1d;
use dtanet_core::synth::covariate_distribution_check;
use dtanet_core::trainer::{grid_search, train_split, GridResult};
use dtanet_core::{
    generate, split, Checkpoint, DtanetModel, Error, ErrorClass, MetricsReport, ObservationalDataset, SplitIndices,
    SynthConfig, TrainConfig,
};

use crate::config::ExperimentConfig;

pub const DEFAULT_TRIALS: usize = 20;

pub const DATA_FILE: &str = "data.csv";
pub const COVARIATE_FILE: &str = "covariates.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const TRACE_FILE: &str = "trace.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const GRID_FILE: &str = "grid.csv";
pub const EXPLAIN_SAMPLES_FILE: &str = "explain_samples.csv";
pub const EXPLAIN_DISTANCES_FILE: &str = "explain_distances.csv";
pub const EXPLAIN_TABLE_FILE: &str = "explain_table.csv";
pub const SENSITIVITY_TRIALS_FILE: &str = "sensitivity_trials.csv";
pub const SENSITIVITY_FILE: &str = "sensitivity.csv";

/// Label of the reference row comparing two halves of the baseline trials.
pub const NULL_SET: &str = "baseline_half_split";

#[derive(Debug, thiserror::Error)]
#[error("{context}: {source}")]
pub struct CliError {
    pub context: String,
    #[source]
    pub source: Error,
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        let msg = msg.into();
        CliError { context: "usage".into(), source: Error::InvalidInput(msg) }
    }

    pub fn exit_code(&self) -> i32 {
        match self.source.class() {
            ErrorClass::Usage => 1,
            ErrorClass::Data => 2,
            ErrorClass::Numerical => 3,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

trait Context<T> {
    fn context(self, ctx: impl FnOnce() -> String) -> CliResult<T>;
}

impl<T, E: Into<Error>> Context<T> for std::result::Result<T, E> {
    fn context(self, ctx: impl FnOnce() -> String) -> CliResult<T> {
        self.map_err(|e| CliError { context: ctx(), source: e.into() })
    }
}

/// Everything a subcommand needs.
#[derive(Debug, Clone)]
pub struct Manifest {
    pub config: ExperimentConfig,
    pub data: Option<PathBuf>,
    pub out: PathBuf,
    pub checkpoint: Option<PathBuf>,
    pub trials: usize,
    pub rhos: Vec<f64>,
    /// Each entry is one set of covariate names dropped together.
    pub exclude: Vec<Vec<String>>,
    pub grid: Option<(Vec<f64>, Vec<f64>)>,
}

impl Manifest {
    pub fn new(config: ExperimentConfig, out: impl Into<PathBuf>) -> Self {
        Manifest {
            config,
            data: None,
            out: out.into(),
            checkpoint: None,
            trials: DEFAULT_TRIALS,
            rhos: Vec::new(),
            exclude: Vec::new(),
            grid: None,
        }
    }

    fn out_file(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn prepare_out(&self) -> CliResult<()> {
        fs::create_dir_all(&self.out).context(|| format!("creating output directory {}", self.out.display()))
    }

    /// The `--data` file, or a fresh synthetic draw from the config.
    fn dataset(&self) -> CliResult<ObservationalDataset> {
        match &self.data {
            Some(path) => ObservationalDataset::load_csv(path).context(|| format!("reading {}", path.display())),
            None => Ok(generate(&self.config.synth).context(|| "generating synthetic data".into())?.0),
        }
    }

    fn split(&self, data: &ObservationalDataset) -> CliResult<SplitIndices> {
        split(data.len(), self.config.train.seed).context(|| "splitting dataset".into())
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

fn write_rows(path: &Path, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    let ctx = || format!("writing {}", path.display());
    let mut w = csv::Writer::from_path(path).context(ctx)?;
    w.write_record(header).context(ctx)?;
    for row in rows {
        w.write_record(row).context(ctx)?;
    }
    w.flush().map_err(Error::from).context(ctx)
}

pub fn cmd_generate(m: &Manifest) -> CliResult<Vec<PathBuf>> {
    m.prepare_out()?;
    let (data, _) = generate(&m.config.synth).context(|| "generating synthetic data".into())?;
    let data_path = m.out_file(DATA_FILE);
    data.save_csv(&data_path).context(|| format!("writing {}", data_path.display()))?;

    let summary = covariate_distribution_check(&data);
    let mut header = vec!["arm".to_string(), "n".to_string()];
    header.extend(data.covariate_names.iter().map(|c| format!("mean_{c}")));
    let rows: Vec<Vec<String>> = summary
        .rows()
        .into_iter()
        .map(|(arm, n, means)| {
            let mut row = vec![arm.to_string(), n.to_string()];
            row.extend(means.into_iter().map(fmt));
            row.resize(header.len(), String::new());
            row
        })
        .collect();
    let cov_path = m.out_file(COVARIATE_FILE);
    write_rows(&cov_path, &header.iter().map(String::as_str).collect::<Vec<_>>(), &rows)?;
    Ok(vec![data_path, cov_path])
}

fn train_and_save(m: &Manifest, data: &ObservationalDataset, s: &SplitIndices) -> CliResult<(DtanetModel, Vec<PathBuf>)> {
    let (model, trace) =
        train_split(data, &m.config.train, &s.train, &s.validation).context(|| "training DTANet".into())?;
    let ck_path = m.out_file(CHECKPOINT_FILE);
    Checkpoint::from_model(&model, &m.config.train)
        .save(&ck_path)
        .context(|| format!("writing {}", ck_path.display()))?;
    let trace_path = m.out_file(TRACE_FILE);
    trace.save_csv(&trace_path).context(|| format!("writing {}", trace_path.display()))?;
    Ok((model, vec![ck_path, trace_path]))
}

pub fn cmd_train(m: &Manifest) -> CliResult<Vec<PathBuf>> {
    m.prepare_out()?;
    let data = m.dataset()?;
    let s = m.split(&data)?;
    Ok(train_and_save(m, &data, &s)?.1)
}

/// One line of the metrics CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub method: &'static str,
    pub split: &'static str,
    pub n: usize,
    pub report: Result<MetricsReport, String>,
}

fn baseline_report(ite: &[f64], yt: &[f64], yc: &[f64], t: &[u8], truth: Option<&TrueEffects>) -> dtanet_core::Result<MetricsReport> {
    let mut r = MetricsReport { policy_risk: Some(policy_risk(yt, yc)?), ..Default::default() };
    if let Some(truth) = truth {
        r.sqrt_pehe = Some(pehe(ite, &truth.ite)?.sqrt());
        let ate = ite.iter().sum::<f64>() / ite.len() as f64;
        r.eps_ate = Some((ate - truth.ate).abs());
        let treated: Vec<f64> = ite.iter().zip(t).filter(|(_, &ti)| ti == 1).map(|(&e, _)| e).collect();
        if let (Some(att), false) = (truth.att, treated.is_empty()) {
            r.eps_att = Some((treated.iter().sum::<f64>() / treated.len() as f64 - att).abs());
        }
    }
    Ok(r)
}

/// Metrics of DTANet and both least-squares baselines (fitted on the
/// training rows) on the validation and test rows.
pub fn evaluate_rows(
    data: &ObservationalDataset,
    s: &SplitIndices,
    model: &DtanetModel,
) -> CliResult<Vec<MetricsRow>> {
    let train = data.subset(&s.train);
    let ols1 = ols1_fit(&train);
    let ols2 = ols2_fit(&train);
    let mut rows = Vec::new();
    for (split_name, idx) in [("validation", &s.validation), ("test", &s.test)] {
        let sub = data.subset(idx);
        let truth = sub.truth.as_ref().map(|gt| gt.effects(&sub.t));
        let est = model.estimate_effects(sub.x.view(), &sub.t).context(|| format!("estimating effects on {split_name}"))?;
        let dtanet = MetricsReport::evaluate(&est, truth.as_ref()).map_err(|e| e.to_string());
        rows.push(MetricsRow { method: "dtanet", split: split_name, n: sub.len(), report: dtanet });

        let r1 = ols1.as_ref().map_err(|e| e.to_string()).and_then(|m| {
            let ite = ols1_ite(m, sub.x.view()).map_err(|e| e.to_string())?;
            let (yt, yc) = ols1_potential(m, sub.x.view()).map_err(|e| e.to_string())?;
            baseline_report(&ite, &yt, &yc, &sub.t, truth.as_ref()).map_err(|e| e.to_string())
        });
        rows.push(MetricsRow { method: "ols1", split: split_name, n: sub.len(), report: r1 });

        let r2 = ols2.as_ref().map_err(|e| e.to_string()).and_then(|(mt, mc)| {
            let ite = ols2_ite(mt, mc, sub.x.view()).map_err(|e| e.to_string())?;
            let (yt, yc) = ols2_potential(mt, mc, sub.x.view()).map_err(|e| e.to_string())?;
            baseline_report(&ite, &yt, &yc, &sub.t, truth.as_ref()).map_err(|e| e.to_string())
        });
        rows.push(MetricsRow { method: "ols2", split: split_name, n: sub.len(), report: r2 });
    }
    Ok(rows)
}

pub fn write_metrics(path: &Path, rows: &[MetricsRow]) -> CliResult<()> {
    let mut header = vec!["method", "split", "n"];
    header.extend(REPORT_FIELDS);
    header.push("status");
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut row = vec![r.method.to_string(), r.split.to_string(), r.n.to_string()];
            match &r.report {
                Ok(rep) => {
                    row.extend(rep.csv_cells());
                    row.push("ok".into());
                }
                Err(msg) => {
                    row.extend(std::iter::repeat_n(String::new(), REPORT_FIELDS.len()));
                    row.push(msg.clone());
                }
            }
            row
        })
        .collect();
    write_rows(path, &header, &body)
}

/// Evaluates the `--checkpoint` model, or trains one first when none is given.
pub fn cmd_evaluate(m: &Manifest) -> CliResult<(Vec<MetricsRow>, Vec<PathBuf>)> {
    m.prepare_out()?;
    let data = m.dataset()?;
    let s = m.split(&data)?;
    let (model, mut written) = match &m.checkpoint {
        Some(path) => {
            let ck = Checkpoint::load(path).context(|| format!("reading {}", path.display()))?;
            (ck.to_model().context(|| format!("decoding {}", path.display()))?, Vec::new())
        }
        None => train_and_save(m, &data, &s)?,
    };
    if model.input_dim() != data.dim() {
        return Err(CliError {
            context: "evaluate".into(),
            source: Error::InvalidInput(format!(
                "model expects {} covariates, dataset has {}",
                model.input_dim(),
                data.dim()
            )),
        });
    }
    let rows = evaluate_rows(&data, &s, &model)?;
    let path = m.out_file(METRICS_FILE);
    write_metrics(&path, &rows)?;
    written.push(path);
    Ok((rows, written))
}

pub fn cmd_gridsearch(m: &Manifest) -> CliResult<GridResult> {
    m.prepare_out()?;
    let (g1, g2) = m
        .grid
        .clone()
        .unwrap_or_else(|| (m.config.train.grid_lambda1.clone(), m.config.train.grid_lambda2.clone()));
    if g1.is_empty() || g2.is_empty() {
        return Err(CliError::usage("grid must have at least one value per axis"));
    }
    let data = m.dataset()?;
    let s = m.split(&data)?;
    let result = grid_search(&data, &m.config.train, &g1, &g2, &s.train, &s.validation).context(|| "grid search".into())?;
    let rows: Vec<Vec<String>> = result
        .cells
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let (val, status) = match &c.val_l_y {
                Ok(v) => (fmt(*v), "ok".to_string()),
                Err(msg) => (String::new(), msg.clone()),
            };
            vec![fmt(c.lambda1), fmt(c.lambda2), val, u8::from(result.best == Some(i)).to_string(), status]
        })
        .collect();
    write_rows(&m.out_file(GRID_FILE), &["lambda1", "lambda2", "val_l_y", "selected", "status"], &rows)?;
    Ok(result)
}

/// Population effects of one trained model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectSample {
    pub ate: f64,
    pub ame: f64,
    pub ade: f64,
}

fn run_trial(data: &ObservationalDataset, cfg: &TrainConfig) -> dtanet_core::Result<EffectSample> {
    let s = split(data.len(), cfg.seed)?;
    let (model, _) = train_split(data, cfg, &s.train, &s.validation)?;
    let est = model.estimate_effects(data.x.view(), &data.t)?;
    Ok(EffectSample { ate: est.ate, ame: est.ame, ade: est.ade })
}

/// Per-set trial outcomes and distances to the all-covariate baseline.
#[derive(Debug, Clone)]
pub struct ExplainReport {
    /// `(label, per-trial results)`; the first entry is the baseline.
    pub samples: Vec<(String, Vec<Result<EffectSample, String>>)>,
    /// `(label, [ATE, AME, ADE] distances)`; `None` when a side has no successful trial.
    pub distances: Vec<(String, Option<[f64; 3]>)>,
}

fn successes(trials: &[Result<EffectSample, String>]) -> Vec<EffectSample> {
    trials.iter().filter_map(|r| r.as_ref().ok().copied()).collect()
}

fn distances(a: &[EffectSample], b: &[EffectSample]) -> Option<[f64; 3]> {
    if a.is_empty() || b.is_empty() {
        return None;
    }
    let pick = |s: &[EffectSample], f: fn(&EffectSample) -> f64| s.iter().map(f).collect::<Vec<_>>();
    let fields: [fn(&EffectSample) -> f64; 3] = [|e| e.ate, |e| e.ame, |e| e.ade];
    let mut out = [0.0; 3];
    for (slot, f) in out.iter_mut().zip(fields) {
        *slot = wasserstein_1d(&pick(a, f), &pick(b, f)).ok()?;
    }
    Some(out)
}

pub fn cmd_explain(m: &Manifest) -> CliResult<ExplainReport> {
    if m.trials < 2 {
        return Err(CliError::usage("explain needs --trials of at least 2"));
    }
    m.prepare_out()?;
    let data = m.dataset()?;
    let sets: Vec<Vec<String>> = if m.exclude.is_empty() {
        data.covariate_names.iter().map(|c| vec![c.clone()]).collect()
    } else {
        m.exclude.clone()
    };
    let mut variants = vec![("baseline".to_string(), data.clone())];
    for set in &sets {
        let dropped = data.drop_covariates(set).context(|| format!("excluding {}", set.join("+")))?;
        variants.push((set.join("+"), dropped));
    }

    let mut samples = Vec::with_capacity(variants.len());
    for (label, ds) in &variants {
        let mut trials = Vec::with_capacity(m.trials);
        for trial in 0..m.trials {
            let cfg = TrainConfig { seed: m.config.train.seed.wrapping_add(trial as u64), ..m.config.train.clone() };
            let outcome = run_trial(ds, &cfg).map_err(|e| e.to_string());
            if let Err(msg) = &outcome {
                log::warn!("explain {label} trial {trial} failed: {msg}");
            }
            trials.push(outcome);
        }
        samples.push((label.clone(), trials));
    }

    let base = successes(&samples[0].1);
    let half = base.len() / 2;
    let mut dist = vec![(NULL_SET.to_string(), distances(&base[..half], &base[half..]))];
    for (label, trials) in &samples[1..] {
        dist.push((label.clone(), distances(&base, &successes(trials))));
    }

    let mut sample_rows = Vec::new();
    for (label, trials) in &samples {
        for (k, r) in trials.iter().enumerate() {
            sample_rows.push(match r {
                Ok(e) => vec![label.clone(), k.to_string(), fmt(e.ate), fmt(e.ame), fmt(e.ade), "ok".into()],
                Err(msg) => vec![label.clone(), k.to_string(), String::new(), String::new(), String::new(), msg.clone()],
            });
        }
    }
    write_rows(&m.out_file(EXPLAIN_SAMPLES_FILE), &["set", "trial", "ate", "ame", "ade", "status"], &sample_rows)?;

    let names = ["ate", "ame", "ade"];
    let mut dist_rows = Vec::new();
    for (label, d) in &dist {
        for (q, name) in names.iter().enumerate() {
            let (raw, scaled, status) = match d {
                Some(v) => (fmt(v[q]), fmt(v[q] * 1e3), "ok"),
                None => (String::new(), String::new(), "insufficient trials"),
            };
            dist_rows.push(vec![label.clone(), name.to_string(), raw, scaled, status.to_string()]);
        }
    }
    write_rows(
        &m.out_file(EXPLAIN_DISTANCES_FILE),
        &["set", "quantity", "distance", "distance_x1e3", "status"],
        &dist_rows,
    )?;

    // Excluded sets as columns, Mediate/Direct rows, values in units of 10⁻³.
    let excluded = &dist[1..];
    let mut header = vec![String::new()];
    header.extend(excluded.iter().map(|(l, _)| l.clone()));
    let table_row = |name: &str, q: usize| {
        let mut row = vec![name.to_string()];
        row.extend(excluded.iter().map(|(_, d)| d.map(|v| fmt(v[q] * 1e3)).unwrap_or_default()));
        row
    };
    write_rows(
        &m.out_file(EXPLAIN_TABLE_FILE),
        &header.iter().map(String::as_str).collect::<Vec<_>>(),
        &[table_row("Mediate", 1), table_row("Direct", 2)],
    )?;

    Ok(ExplainReport { samples, distances: dist })
}

/// One trial of the ρ sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityTrial {
    pub rho: f64,
    pub trial: usize,
    pub outcome: Result<(EffectSample, f64, f64), String>,
}

/// Across-trial summary for one ρ; the interval is `mean ± 1.96 sd`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensitivityPoint {
    pub rho: f64,
    pub n_ok: usize,
    pub n_failed: usize,
    pub ame_mean: f64,
    pub ame_sd: f64,
    pub ade_mean: f64,
    pub ade_sd: f64,
    pub true_ame: f64,
    pub true_ade: f64,
}

impl SensitivityPoint {
    pub fn ame_interval(&self) -> (f64, f64) {
        (self.ame_mean - 1.96 * self.ame_sd, self.ame_mean + 1.96 * self.ame_sd)
    }

    pub fn ade_interval(&self) -> (f64, f64) {
        (self.ade_mean - 1.96 * self.ade_sd, self.ade_mean + 1.96 * self.ade_sd)
    }
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = if v.len() > 1 { (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
    (mean, sd)
}

fn sensitivity_trial(synth: &SynthConfig, cfg: &TrainConfig) -> dtanet_core::Result<(EffectSample, f64, f64)> {
    let (data, truth) = generate(synth)?;
    let effects = truth.realized.effects(&data.t);
    let sample = run_trial(&data, cfg)?;
    let nan = f64::NAN;
    Ok((sample, effects.ame.unwrap_or(nan), effects.ade.unwrap_or(nan)))
}

pub fn cmd_sensitivity(m: &Manifest) -> CliResult<(Vec<SensitivityPoint>, Vec<SensitivityTrial>)> {
    if m.rhos.is_empty() {
        return Err(CliError::usage("sensitivity needs at least one --rho"));
    }
    if let Some(r) = m.rhos.iter().find(|r| !(-1.0..=1.0).contains(*r)) {
        return Err(CliError::usage(format!("rho {r} outside [-1, 1]")));
    }
    if m.trials == 0 {
        return Err(CliError::usage("--trials must be at least 1"));
    }
    m.prepare_out()?;
    let mut rhos = m.rhos.clone();
    rhos.sort_by(f64::total_cmp);

    let mut trials = Vec::new();
    let mut points = Vec::new();
    for &rho in &rhos {
        let mut ok = Vec::new();
        let mut failed = 0;
        for trial in 0..m.trials {
            let seed = m.config.synth.seed.wrapping_add(trial as u64);
            let synth = SynthConfig { rho, seed, ..m.config.synth.clone() };
            let cfg = TrainConfig { seed, ..m.config.train.clone() };
            let outcome = sensitivity_trial(&synth, &cfg).map_err(|e| e.to_string());
            match &outcome {
                Ok(v) => ok.push(*v),
                Err(msg) => {
                    failed += 1;
                    log::warn!("sensitivity rho={rho} trial {trial} failed: {msg}");
                }
            }
            trials.push(SensitivityTrial { rho, trial, outcome });
        }
        let (ame_mean, ame_sd) = mean_sd(&ok.iter().map(|(s, ..)| s.ame).collect::<Vec<_>>());
        let (ade_mean, ade_sd) = mean_sd(&ok.iter().map(|(s, ..)| s.ade).collect::<Vec<_>>());
        let (true_ame, _) = mean_sd(&ok.iter().map(|(_, a, _)| *a).collect::<Vec<_>>());
        let (true_ade, _) = mean_sd(&ok.iter().map(|(.., d)| *d).collect::<Vec<_>>());
        points.push(SensitivityPoint {
            rho,
            n_ok: ok.len(),
            n_failed: failed,
            ame_mean,
            ame_sd,
            ade_mean,
            ade_sd,
            true_ame,
            true_ade,
        });
    }

    let trial_rows: Vec<Vec<String>> = trials
        .iter()
        .map(|t| match &t.outcome {
            Ok((s, ta, td)) => vec![fmt(t.rho), t.trial.to_string(), fmt(s.ate), fmt(s.ame), fmt(s.ade), fmt(*ta), fmt(*td), "ok".into()],
            Err(msg) => {
                let mut row = vec![fmt(t.rho), t.trial.to_string()];
                row.extend(std::iter::repeat_n(String::new(), 5));
                row.push(msg.clone());
                row
            }
        })
        .collect();
    write_rows(
        &m.out_file(SENSITIVITY_TRIALS_FILE),
        &["rho", "trial", "ate", "ame", "ade", "true_ame", "true_ade", "status"],
        &trial_rows,
    )?;

    let finite = |v: f64| v.is_finite().then_some(v);
    let point_rows: Vec<Vec<String>> = points
        .iter()
        .map(|p| {
            let (alo, ahi) = p.ame_interval();
            let (dlo, dhi) = p.ade_interval();
            vec![
                fmt(p.rho),
                p.n_ok.to_string(),
                p.n_failed.to_string(),
                opt(finite(p.ame_mean)),
                opt(finite(p.ame_sd)),
                opt(finite(alo)),
                opt(finite(ahi)),
                opt(finite(p.ade_mean)),
                opt(finite(p.ade_sd)),
                opt(finite(dlo)),
                opt(finite(dhi)),
                opt(finite(p.true_ame)),
                opt(finite(p.true_ade)),
            ]
        })
        .collect();
    write_rows(
        &m.out_file(SENSITIVITY_FILE),
        &[
            "rho", "n_ok", "n_failed", "ame_mean", "ame_sd", "ame_lo", "ame_hi", "ade_mean", "ade_sd", "ade_lo", "ade_hi",
            "true_ame", "true_ade",
        ],
        &point_rows,
    )?;
    Ok((points, trials))
}

/// Parses `--grid` as `l1,l1,...:l2,l2,...`.
pub fn parse_grid(spec: &str) -> CliResult<(Vec<f64>, Vec<f64>)> {
    let (a, b) = spec.split_once(':').ok_or_else(|| CliError::usage(format!("--grid '{spec}' needs the form L1S:L2S")))?;
    let list = |s: &str| -> CliResult<Vec<f64>> {
        s.split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| CliError::usage(format!("bad grid value '{v}'"))))
            .collect()
    };
    Ok((list(a)?, list(b)?))
}
