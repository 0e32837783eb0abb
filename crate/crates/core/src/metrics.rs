//! Effect-estimation metrics.

use serde::{Deserialize, Serialize};

use crate::data::TrueEffects;
use crate::error::{Error, Result};
use crate::model::EffectEstimates;

/// Mean squared error between estimated and true individual effects.
/// Reported tables use its square root.
pub fn pehe(est_ite: &[f64], true_ite: &[f64]) -> Result<f64> {
    if est_ite.len() != true_ite.len() {
        return Err(Error::shape("pehe", true_ite.len(), est_ite.len()));
    }
    if est_ite.is_empty() {
        return Err(Error::InvalidInput("pehe needs at least one individual".into()));
    }
    let sum: f64 = est_ite.iter().zip(true_ite).map(|(e, t)| (t - e) * (t - e)).sum();
    Ok(sum / est_ite.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AbsEffectErrors {
    pub eps_ate: Option<f64>,
    pub eps_att: Option<f64>,
    pub eps_mte: Option<f64>,
    pub eps_dte: Option<f64>,
}

/// Absolute errors of the population effects; a quantity whose truth (or
/// estimate) is unavailable is omitted.
pub fn abs_effect_errors(est: &EffectEstimates, truth: &TrueEffects) -> AbsEffectErrors {
    let diff = |a: Option<f64>, b: Option<f64>| match (a, b) {
        (Some(a), Some(b)) => Some((a - b).abs()),
        _ => None,
    };
    AbsEffectErrors {
        eps_ate: Some((est.ate - truth.ate).abs()),
        eps_att: diff(est.att, truth.att),
        eps_mte: diff(Some(est.ame), truth.ame),
        eps_dte: diff(Some(est.ade), truth.ade),
    }
}

/// `1 − E[ŷ_t | π=1] p(π=1) − E[ŷ_c | π=0] p(π=0)` with `π = 1` iff
/// `ŷ_t − ŷ_c > 0` (ties go to control). An empty policy group contributes 0.
pub fn policy_risk(yhat_t: &[f64], yhat_c: &[f64]) -> Result<f64> {
    if yhat_t.len() != yhat_c.len() {
        return Err(Error::shape("policy risk", yhat_t.len(), yhat_c.len()));
    }
    if yhat_t.is_empty() {
        return Err(Error::InvalidInput("policy risk needs at least one individual".into()));
    }
    let n = yhat_t.len() as f64;
    let (mut sum_treat, mut sum_control) = (0.0, 0.0);
    for (&t, &c) in yhat_t.iter().zip(yhat_c) {
        if t - c > 0.0 {
            sum_treat += t;
        } else {
            sum_control += c;
        }
    }
    // mean(ŷ_t | π=1) · p(π=1) = Σ_{π=1} ŷ_t / n
    Ok(1.0 - sum_treat / n - sum_control / n)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub sqrt_pehe: Option<f64>,
    pub eps_ate: Option<f64>,
    pub eps_att: Option<f64>,
    pub eps_mte: Option<f64>,
    pub eps_dte: Option<f64>,
    pub policy_risk: Option<f64>,
}

pub const REPORT_FIELDS: [&str; 6] = ["sqrt_pehe", "eps_ate", "eps_att", "eps_mte", "eps_dte", "policy_risk"];

impl MetricsReport {
    /// Everything computable from the estimates and (optional) truth.
    pub fn evaluate(est: &EffectEstimates, truth: Option<&TrueEffects>) -> Result<Self> {
        let mut report = MetricsReport {
            policy_risk: Some(policy_risk(&est.y_treated, &est.y_control)?),
            ..Default::default()
        };
        if let Some(truth) = truth {
            report.sqrt_pehe = Some(pehe(&est.ite, &truth.ite)?.sqrt());
            let errs = abs_effect_errors(est, truth);
            report.eps_ate = errs.eps_ate;
            report.eps_att = errs.eps_att;
            report.eps_mte = errs.eps_mte;
            report.eps_dte = errs.eps_dte;
        }
        Ok(report)
    }

    pub fn values(&self) -> [Option<f64>; 6] {
        [self.sqrt_pehe, self.eps_ate, self.eps_att, self.eps_mte, self.eps_dte, self.policy_risk]
    }

    /// `key=value` lines; absent metrics are skipped.
    pub fn to_key_values(&self) -> String {
        REPORT_FIELDS
            .iter()
            .zip(self.values())
            .filter_map(|(k, v)| v.map(|v| format!("{k}={v:.16e}\n")))
            .collect()
    }

    /// CSV cells in [`REPORT_FIELDS`] order; absent metrics are empty.
    pub fn csv_cells(&self) -> Vec<String> {
        self.values().iter().map(|v| v.map(|v| format!("{v:.16e}")).unwrap_or_default()).collect()
    }
}
