//! Linear filters for the gradient step of the detector.
//!
//! All three filters map an `M`-dimensional residual back to the
//! `N`-dimensional signal space. The regularised ones factor the `M x M`
//! Gram matrix `HH^T + alpha I`, which is the small side in overloaded
//! systems.

use nalgebra::{Cholesky, DMatrix};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Cholesky pivots below this fraction of the largest diagonal entry are
/// treated as singular.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MatrixMode {
    /// Matched filter `H^T`.
    #[serde(rename = "MF")]
    Mf,
    /// Moore-Penrose pseudo-inverse `H^T (HH^T)^{-1}`.
    #[serde(rename = "PINV")]
    Pinv,
    /// `H^T (HH^T + alpha I)^{-1}`.
    #[serde(rename = "LMMSE")]
    Lmmse,
}

impl MatrixMode {
    pub fn label(self) -> &'static str {
        match self {
            MatrixMode::Mf => "MF",
            MatrixMode::Pinv => "PINV",
            MatrixMode::Lmmse => "LMMSE",
        }
    }
}

impl std::str::FromStr for MatrixMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "MF" => Ok(MatrixMode::Mf),
            "PINV" => Ok(MatrixMode::Pinv),
            "LMMSE" => Ok(MatrixMode::Lmmse),
            _ => Err(Error::config("mode", format!("unknown matrix mode `{s}`"))),
        }
    }
}

/// A linear filter `W` built from one channel matrix. Immutable once built.
#[derive(Debug, Clone)]
pub struct LinearEstimator {
    pub w: DMatrix<f64>,
    pub mode: MatrixMode,
    pub alpha: f64,
    /// `(HH^T + alpha I)^{-1}`; absent for the matched filter.
    pub gram_inv: Option<DMatrix<f64>>,
}

/// Inverse of a symmetric positive-definite matrix via Cholesky.
pub fn spd_inverse(g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !g.is_square() {
        return Err(Error::ShapeMismatch(format!(
            "expected a square matrix, got {}x{}",
            g.nrows(),
            g.ncols()
        )));
    }
    let max_diag = g.diagonal().iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let threshold = PIVOT_TOLERANCE * max_diag.max(f64::MIN_POSITIVE);
    let chol = Cholesky::new(g.clone()).ok_or(Error::SingularGram {
        pivot: f64::NAN,
        threshold,
    })?;
    let min_pivot = chol
        .l_dirty()
        .diagonal()
        .iter()
        .map(|l| l * l)
        .fold(f64::INFINITY, f64::min);
    if !(min_pivot >= threshold) {
        return Err(Error::SingularGram {
            pivot: min_pivot,
            threshold,
        });
    }
    let mut inv = chol.inverse();
    // exact symmetry keeps downstream products symmetric
    inv.fill_lower_triangle_with_upper_triangle();
    Ok(inv)
}

fn regularised(h: &DMatrix<f64>, alpha: f64, mode: MatrixMode) -> Result<LinearEstimator> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::config("alpha", format!("must be finite and >= 0, got {alpha}")));
    }
    let mut gram = h * h.transpose();
    for i in 0..gram.nrows() {
        gram[(i, i)] += alpha;
    }
    let gram_inv = spd_inverse(&gram)?;
    let w = h.transpose() * &gram_inv;
    Ok(LinearEstimator {
        w,
        mode,
        alpha,
        gram_inv: Some(gram_inv),
    })
}

/// LMMSE-like matrix `W = H^T (HH^T + alpha I)^{-1}`.
pub fn lmmse_matrix(h: &DMatrix<f64>, alpha: f64) -> Result<LinearEstimator> {
    regularised(h, alpha, MatrixMode::Lmmse)
}

/// Pseudo-inverse `H^T (HH^T)^{-1}`; requires full row rank.
pub fn pinv_matrix(h: &DMatrix<f64>) -> Result<LinearEstimator> {
    regularised(h, 0.0, MatrixMode::Pinv)
}

pub fn matched_filter(h: &DMatrix<f64>) -> LinearEstimator {
    LinearEstimator {
        w: h.transpose(),
        mode: MatrixMode::Mf,
        alpha: 0.0,
        gram_inv: None,
    }
}

/// Build the filter for `mode`; `alpha` is only read in LMMSE mode.
pub fn build_estimator(h: &DMatrix<f64>, mode: MatrixMode, alpha: f64) -> Result<LinearEstimator> {
    match mode {
        MatrixMode::Mf => Ok(matched_filter(h)),
        MatrixMode::Pinv => pinv_matrix(h),
        MatrixMode::Lmmse => lmmse_matrix(h, alpha),
    }
}

/// `dW/d alpha = -H^T (HH^T + alpha I)^{-2} = -W (HH^T + alpha I)^{-1}`.
pub fn lmmse_alpha_gradient(est: &LinearEstimator) -> Result<DMatrix<f64>> {
    match (&est.gram_inv, est.mode) {
        (Some(g), MatrixMode::Lmmse) => Ok(-(&est.w * g)),
        (_, found) => Err(Error::ModeMismatch {
            expected: MatrixMode::Lmmse,
            found,
        }),
    }
}
