use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::EncoderError;
use crate::linalg::{center, thin_svd};

/// Which normal equations to factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolvePath {
    /// Primal when `d_in <= n`, dual otherwise.
    #[default]
    Auto,
    /// `(XᵀX + αI)⁻¹ XᵀY`, a `d_in × d_in` system.
    Primal,
    /// `Xᵀ(XXᵀ + αI)⁻¹ Y`, an `n × n` system.
    Dual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RidgeOptions {
    pub path: SolvePath,
    /// Centre X and Y before solving and carry the means in the intercept.
    pub fit_intercept: bool,
}

impl Default for RidgeOptions {
    fn default() -> Self {
        Self { path: SolvePath::Auto, fit_intercept: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeFit {
    /// `d_in × d_out`.
    pub beta: DMatrix<f64>,
    pub alpha: f64,
    pub intercept: DVector<f64>,
}

pub fn ridge_solve(x: &DMatrix<f64>, y: &DMatrix<f64>, alpha: f64) -> Result<RidgeFit, EncoderError> {
    ridge_solve_with(x, y, alpha, RidgeOptions::default())
}

/// Closed-form ridge regression with a Cholesky solve and an SVD fallback.
///
/// `alpha = 0` is accepted only when the system is nonsingular.
pub fn ridge_solve_with(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    alpha: f64,
    opts: RidgeOptions,
) -> Result<RidgeFit, EncoderError> {
    let (n, d_in) = x.shape();
    if n == 0 || y.nrows() != n {
        return Err(EncoderError::Parameter(format!("X has {n} rows, Y has {}", y.nrows())));
    }
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(EncoderError::Parameter(format!("alpha must be >= 0, got {alpha}")));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(EncoderError::Parameter("non-finite value in X or Y".into()));
    }
    let (xc, yc, x_mean, y_mean) = if opts.fit_intercept {
        let (xc, xm) = center(x);
        let (yc, ym) = center(y);
        (xc, yc, Some(xm), Some(ym))
    } else {
        (x.clone(), y.clone(), None, None)
    };
    let dual = match opts.path {
        SolvePath::Auto => d_in > n,
        SolvePath::Primal => false,
        SolvePath::Dual => true,
    };
    let beta = match solve_cholesky(&xc, &yc, alpha, dual) {
        Some(beta) => beta,
        None if alpha == 0.0 => {
            return Err(EncoderError::Numerical(
                "normal equations are singular at alpha = 0; use a positive alpha".into(),
            ))
        }
        None => {
            log::debug!("Cholesky failed at alpha = {alpha}; falling back to SVD");
            solve_svd(&xc, &yc, alpha)
        }
    };
    let intercept = match (x_mean, y_mean) {
        (Some(xm), Some(ym)) => ym - beta.transpose() * xm,
        _ => DVector::zeros(y.ncols()),
    };
    Ok(RidgeFit { beta, alpha, intercept })
}

fn solve_cholesky(x: &DMatrix<f64>, y: &DMatrix<f64>, alpha: f64, dual: bool) -> Option<DMatrix<f64>> {
    let mut gram = if dual { x * x.transpose() } else { x.transpose() * x };
    let scale = gram.diagonal().amax().max(f64::MIN_POSITIVE);
    for i in 0..gram.nrows() {
        gram[(i, i)] += alpha;
    }
    let chol = gram.cholesky()?;
    // Reject numerically singular factors (relevant only at alpha ~ 0).
    let l = chol.l_dirty();
    let min_pivot = (0..l.nrows()).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
    if min_pivot <= 1e-13 * scale {
        return None;
    }
    Some(if dual { x.transpose() * chol.solve(y) } else { chol.solve(&(x.transpose() * y)) })
}

fn solve_svd(x: &DMatrix<f64>, y: &DMatrix<f64>, alpha: f64) -> DMatrix<f64> {
    let (u, s, v) = thin_svd(x);
    let mut uty = u.transpose() * y;
    for (i, mut row) in uty.row_iter_mut().enumerate() {
        row *= if s[i] > 0.0 { s[i] / (s[i] * s[i] + alpha) } else { 0.0 };
    }
    v * uty
}

pub fn predict(fit: &RidgeFit, x: &DMatrix<f64>) -> Result<DMatrix<f64>, EncoderError> {
    if x.ncols() != fit.beta.nrows() {
        return Err(EncoderError::Parameter(format!("X has {} columns, fit expects {}", x.ncols(), fit.beta.nrows())));
    }
    let mut out = x * &fit.beta;
    for mut row in out.row_iter_mut() {
        row += fit.intercept.transpose();
    }
    Ok(out)
}

/// Ridge solutions for many alphas from one SVD of the centred training data.
///
/// `β(α) = V diag(s / (s² + α)) Uᵀ Y`, equal to the normal-equation solution.
pub(crate) struct RidgeSpectrum {
    v: DMatrix<f64>,
    s: Vec<f64>,
    uty: DMatrix<f64>,
    x_mean: DVector<f64>,
    y_mean: DVector<f64>,
}

impl RidgeSpectrum {
    pub(crate) fn new(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Self {
        let (xc, x_mean) = center(x);
        let (yc, y_mean) = center(y);
        let (u, s, v) = thin_svd(&xc);
        Self { uty: u.transpose() * yc, s, v, x_mean, y_mean }
    }

    /// Composes the affine target map `z ↦ z·Cᵀ + m` into every later prediction.
    pub(crate) fn map_targets(&mut self, components: &DMatrix<f64>, mean: &DVector<f64>) {
        self.uty = &self.uty * components.transpose();
        self.y_mean = components * &self.y_mean + mean;
    }

    /// Projection of held-out rows onto the right singular vectors.
    pub(crate) fn project(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut xc = x.clone();
        for mut row in xc.row_iter_mut() {
            row -= self.x_mean.transpose();
        }
        xc * &self.v
    }

    pub(crate) fn predict_projected(&self, projected: &DMatrix<f64>, alpha: f64) -> DMatrix<f64> {
        let mut coef = self.uty.clone();
        for (i, mut row) in coef.row_iter_mut().enumerate() {
            let s = self.s[i];
            row *= if s > 0.0 { s / (s * s + alpha) } else { 0.0 };
        }
        let mut out = projected * coef;
        for mut row in out.row_iter_mut() {
            row += self.y_mean.transpose();
        }
        out
    }
}
