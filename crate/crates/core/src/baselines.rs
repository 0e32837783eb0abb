//! Least-squares baselines: one pooled regression with the treatment as a
//! feature (OLS-1) and one regression per arm (OLS-2).

use nalgebra::{DMatrix, DVector};
use ndarray::{ArrayView1, ArrayView2};

use crate::data::ObservationalDataset;
use crate::error::{Error, Result};
use crate::model::Arm;

/// Diagonal loading applied when the normal equations are not positive definite.
pub const RIDGE_FALLBACK: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitTag {
    /// `[1, x, t]` design.
    Pooled,
    /// `[1, x]` design on one arm.
    Arm(Arm),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    /// Intercept first, then one coefficient per covariate (then `t` for the pooled fit).
    pub coefficients: Vec<f64>,
    pub tag: FitTag,
    pub ridge_used: bool,
}

impl LinearModel {
    /// Prediction for one covariate row (and treatment, for the pooled fit).
    pub fn predict(&self, x: ArrayView1<f64>, t: Option<u8>) -> Result<f64> {
        let extra = usize::from(self.tag == FitTag::Pooled);
        if x.len() + 1 + extra != self.coefficients.len() {
            return Err(Error::shape("linear model input", self.coefficients.len() - 1 - extra, x.len()));
        }
        let mut y = self.coefficients[0] + x.iter().zip(&self.coefficients[1..]).map(|(a, b)| a * b).sum::<f64>();
        if self.tag == FitTag::Pooled {
            y += self.coefficients[x.len() + 1] * f64::from(t.unwrap_or(0));
        }
        Ok(y)
    }

    pub fn treatment_coefficient(&self) -> Option<f64> {
        (self.tag == FitTag::Pooled).then(|| *self.coefficients.last().expect("nonempty"))
    }
}

/// Least squares via the normal equations, with [`RIDGE_FALLBACK`] when the
/// Gram matrix is singular. Returns coefficients and whether the ridge was used.
pub fn least_squares(design: &DMatrix<f64>, y: &DVector<f64>) -> Result<(DVector<f64>, bool)> {
    if design.nrows() != y.len() {
        return Err(Error::shape("least squares rows", design.nrows(), y.len()));
    }
    let gram = design.transpose() * design;
    let rhs = design.transpose() * y;
    if let Some(chol) = gram.clone().cholesky().filter(well_conditioned) {
        let beta = chol.solve(&rhs);
        if beta.iter().all(|b| b.is_finite()) {
            return Ok((beta, false));
        }
    }
    let p = gram.nrows();
    let loaded = gram + DMatrix::identity(p, p) * RIDGE_FALLBACK;
    let chol = loaded
        .cholesky()
        .ok_or_else(|| Error::Fit("normal equations singular even with ridge".into()))?;
    Ok((chol.solve(&rhs), true))
}

/// Rejects factorisations whose pivots span more than ~14 orders of
/// magnitude in the Gram matrix, which rounding lets through for singular designs.
fn well_conditioned(chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>) -> bool {
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v.abs()), hi.max(v.abs())));
    hi > 0.0 && lo / hi > 1e-7
}

fn design(x: ArrayView2<f64>, rows: &[usize], t: Option<&[u8]>) -> DMatrix<f64> {
    let d = x.ncols();
    let width = d + 1 + usize::from(t.is_some());
    DMatrix::from_fn(rows.len(), width, |r, c| {
        let i = rows[r];
        match c {
            0 => 1.0,
            c if c <= d => x[[i, c - 1]],
            _ => f64::from(t.expect("pooled design")[i]),
        }
    })
}

pub fn ols1_fit(ds: &ObservationalDataset) -> Result<LinearModel> {
    let (n, d) = (ds.len(), ds.dim());
    if n <= d + 2 {
        return Err(Error::Fit(format!("OLS-1 needs more than {} rows, got {n}", d + 2)));
    }
    let rows: Vec<usize> = (0..n).collect();
    let a = design(ds.x.view(), &rows, Some(&ds.t));
    let y = DVector::from_iterator(n, ds.y.iter().copied());
    let (beta, ridge_used) = least_squares(&a, &y)?;
    Ok(LinearModel { coefficients: beta.iter().copied().collect(), tag: FitTag::Pooled, ridge_used })
}

/// The pooled fit's ITE: its treatment coefficient for every row.
pub fn ols1_ite(model: &LinearModel, x: ArrayView2<f64>) -> Result<Vec<f64>> {
    let tau = model
        .treatment_coefficient()
        .ok_or_else(|| Error::InvalidInput("OLS-1 ITE needs a pooled fit".into()))?;
    if x.ncols() + 2 != model.coefficients.len() {
        return Err(Error::shape("OLS-1 covariates", model.coefficients.len() - 2, x.ncols()));
    }
    Ok(vec![tau; x.nrows()])
}

fn arm_fit(ds: &ObservationalDataset, arm: Arm) -> Result<LinearModel> {
    let rows = ds.arm_members(&(0..ds.len()).collect::<Vec<_>>(), arm);
    let d = ds.dim();
    if rows.len() <= d + 1 {
        return Err(Error::Fit(format!(
            "OLS-2 {} arm needs more than {} rows, got {}",
            arm.name(),
            d + 1,
            rows.len()
        )));
    }
    let a = design(ds.x.view(), &rows, None);
    let y = DVector::from_iterator(rows.len(), rows.iter().map(|&i| ds.y[i]));
    let (beta, ridge_used) = least_squares(&a, &y)?;
    Ok(LinearModel { coefficients: beta.iter().copied().collect(), tag: FitTag::Arm(arm), ridge_used })
}

pub fn ols2_fit(ds: &ObservationalDataset) -> Result<(LinearModel, LinearModel)> {
    Ok((arm_fit(ds, Arm::Treated)?, arm_fit(ds, Arm::Control)?))
}

/// `ŷ_treated(x) − ŷ_control(x)` per row.
pub fn ols2_ite(treated: &LinearModel, control: &LinearModel, x: ArrayView2<f64>) -> Result<Vec<f64>> {
    x.outer_iter()
        .map(|row| Ok(treated.predict(row, None)? - control.predict(row, None)?))
        .collect()
}

/// Per-row `(ŷ_t, ŷ_c)` for either baseline, used for policy risk.
pub fn ols1_potential(model: &LinearModel, x: ArrayView2<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut yt = Vec::with_capacity(x.nrows());
    let mut yc = Vec::with_capacity(x.nrows());
    for row in x.outer_iter() {
        yt.push(model.predict(row, Some(1))?);
        yc.push(model.predict(row, Some(0))?);
    }
    Ok((yt, yc))
}

pub fn ols2_potential(treated: &LinearModel, control: &LinearModel, x: ArrayView2<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
    let yt = x.outer_iter().map(|r| treated.predict(r, None)).collect::<Result<Vec<_>>>()?;
    let yc = x.outer_iter().map(|r| control.predict(r, None)).collect::<Result<Vec<_>>>()?;
    Ok((yt, yc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1, Array2};

    fn dataset(x: Array2<f64>, t: Vec<u8>, y: Vec<f64>) -> ObservationalDataset {
        let d = x.ncols();
        ObservationalDataset::new(x, t, Array1::from(y), ObservationalDataset::default_names(d), None).unwrap()
    }

    #[test]
    fn pure_treatment_effect() {
        let x = Array2::from_shape_fn((8, 1), |(i, _)| (i as f64 * 0.7).sin());
        let t: Vec<u8> = (0..8).map(|i| (i % 2) as u8).collect();
        let y: Vec<f64> = t.iter().map(|&v| 3.0 * f64::from(v)).collect();
        let ds = dataset(x.clone(), t, y);
        let m = ols1_fit(&ds).unwrap();
        assert!((m.treatment_coefficient().unwrap() - 3.0).abs() < 1e-10);
        let ite = ols1_ite(&m, x.view()).unwrap();
        assert!(ite.iter().all(|&e| (e - 3.0).abs() < 1e-10));
        assert!(ite.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn per_arm_laws() {
        let x = Array2::from_shape_fn((10, 1), |(i, _)| i as f64);
        let t: Vec<u8> = (0..10).map(|i| u8::from(i % 2 == 0)).collect();
        let y: Vec<f64> = (0..10).map(|i| i as f64 + f64::from(t[i])).collect();
        let ds = dataset(x.clone(), t, y);
        let (mt, mc) = ols2_fit(&ds).unwrap();
        for e in ols2_ite(&mt, &mc, x.view()).unwrap() {
            assert!((e - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn same_law_both_arms() {
        let x = Array2::from_shape_fn((12, 2), |(i, j)| ((i + 3 * j) as f64).cos());
        let t: Vec<u8> = (0..12).map(|i| u8::from(i < 6)).collect();
        let y: Vec<f64> = (0..12).map(|i| 0.5 - 2.0 * x[[i, 0]] + x[[i, 1]]).collect();
        let ds = dataset(x.clone(), t, y);
        let (mt, mc) = ols2_fit(&ds).unwrap();
        for e in ols2_ite(&mt, &mc, x.view()).unwrap() {
            assert!(e.abs() < 1e-9);
        }
    }

    #[test]
    fn square_system_interpolates() {
        // Two points, intercept + slope: y = 1 + 2x exactly.
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 1.0]);
        let y = DVector::from_vec(vec![1.0, 3.0]);
        let (beta, ridge) = least_squares(&a, &y).unwrap();
        assert!(!ridge);
        assert!((beta[0] - 1.0).abs() < 1e-12 && (beta[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rank_deficiency_triggers_ridge() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 2.0, 1.0, 1.0, 1.0, 1.0, 3.0, 3.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let (beta, ridge) = least_squares(&a, &y).unwrap();
        assert!(ridge);
        assert!(beta.iter().all(|b| b.is_finite()));
    }

    #[test]
    fn small_arm_is_a_fit_error() {
        let x = array![[0.0], [1.0], [2.0], [3.0], [4.0]];
        let ds = dataset(x, vec![1, 1, 1, 1, 0], vec![0.0; 5]);
        assert!(matches!(ols2_fit(&ds), Err(Error::Fit(_))));
        let x = array![[0.0], [1.0], [2.0]];
        let ds = dataset(x, vec![1, 0, 1], vec![0.0; 3]);
        assert!(matches!(ols1_fit(&ds), Err(Error::Fit(_))));
    }
}
