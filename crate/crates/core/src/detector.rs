//! The unrolled projected-gradient detector.
//!
//! Layer `t` performs a gradient step followed by a soft projection:
//!
//! ```text
//! r_t     = s_t + gamma_t W (y - H s_t)
//! s_{t+1} = tanh(r_t / |theta_t|)
//! ```
//!
//! starting from `s_1 = 0`. Step sizes are stored as square roots
//! (`gamma_t = gamma_raw_t^2`) so they can never turn negative during
//! training. With `W = H^T` and one softness shared by every layer this is
//! the plain trainable PG iteration with `xi = 1 / |theta|`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linalg::{build_estimator, LinearEstimator, MatrixMode};
use crate::{Error, Result};

/// Lower bound on `|theta_t|` inside the projection.
pub const SOFTNESS_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TpgParams {
    pub t_max: usize,
    pub gamma_raw: Vec<f64>,
    pub theta: Vec<f64>,
    pub alpha: f64,
    pub mode: MatrixMode,
    /// One softness for every layer; the value is replicated in `theta`.
    pub shared_softness: bool,
}

impl TpgParams {
    /// Uniform initialisation with effective step `gamma` in every layer.
    pub fn uniform(t_max: usize, mode: MatrixMode, gamma: f64, theta: f64, alpha: f64) -> Self {
        assert!(t_max >= 1, "at least one layer is required");
        Self {
            t_max,
            gamma_raw: vec![gamma.max(0.0).sqrt(); t_max],
            theta: vec![theta; t_max],
            alpha,
            mode,
            shared_softness: false,
        }
    }

    /// Matched-filter TPG with a single softness `xi` (the toy algorithm).
    pub fn toy(t_max: usize, gamma: f64, xi: f64) -> Self {
        let mut p = Self::uniform(t_max, MatrixMode::Mf, gamma, 1.0 / xi, 0.0);
        p.shared_softness = true;
        p
    }

    pub fn step_size(&self, layer: usize) -> f64 {
        self.gamma_raw[layer] * self.gamma_raw[layer]
    }

    /// Denominator of the projection, `max(|theta_t|, SOFTNESS_FLOOR)`.
    pub fn softness(&self, layer: usize) -> f64 {
        self.theta[layer].abs().max(SOFTNESS_FLOOR)
    }

    /// `2T + 1` scalars, or `T + 2` when the softness is shared.
    pub fn num_trainable(&self) -> usize {
        let thetas = if self.shared_softness { 1 } else { self.t_max };
        self.t_max + thetas + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_max == 0 {
            return Err(Error::config("t_max", "must be at least 1"));
        }
        if self.gamma_raw.len() != self.t_max {
            return Err(Error::LengthMismatch {
                field: "gamma_raw",
                expected: self.t_max,
                found: self.gamma_raw.len(),
            });
        }
        if self.theta.len() != self.t_max {
            return Err(Error::LengthMismatch {
                field: "theta",
                expected: self.t_max,
                found: self.theta.len(),
            });
        }
        let finite = self.gamma_raw.iter().chain(&self.theta).all(|v| v.is_finite());
        if !finite || !self.alpha.is_finite() {
            return Err(Error::NonFinite("detector parameters".into()));
        }
        Ok(())
    }

    pub fn estimator(&self, h: &DMatrix<f64>) -> Result<LinearEstimator> {
        build_estimator(h, self.mode, self.alpha)
    }
}

/// Iterates of one forward pass. `r[k]` and `s[k]` belong to layer `k + 1`,
/// so `s[k]` holds `s_{k+2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub r: Vec<DVector<f64>>,
    pub s: Vec<DVector<f64>>,
    pub t_run: usize,
}

impl Trajectory {
    pub fn output(&self) -> &DVector<f64> {
        self.s.last().expect("trajectory holds at least one layer")
    }
}

/// One layer of the recursion: returns `(r_t, s_{t+1})`.
fn layer(
    p: &TpgParams,
    t: usize,
    w: &DMatrix<f64>,
    h: &DMatrix<f64>,
    y: &DVector<f64>,
    s: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    let residual = y - h * s;
    let r = s + (w * residual) * p.step_size(t);
    let c = p.softness(t);
    let next = r.map(|v| (v / c).tanh());
    (r, next)
}

/// Run layers `first..first + count` starting from `s`.
pub fn tpg_forward_from(
    p: &TpgParams,
    est: &LinearEstimator,
    h: &DMatrix<f64>,
    y: &DVector<f64>,
    s_start: &DVector<f64>,
    first: usize,
    count: usize,
    record: bool,
) -> Trajectory {
    assert!(count >= 1 && first + count <= p.t_max, "layer range out of bounds");
    let mut r_hist = Vec::with_capacity(if record { count } else { 1 });
    let mut s_hist = Vec::with_capacity(if record { count } else { 1 });
    let mut s = s_start.clone();
    let mut last_r = DVector::zeros(s.len());
    for t in first..first + count {
        let (r, next) = layer(p, t, &est.w, h, y, &s);
        if record {
            r_hist.push(r);
            s_hist.push(next.clone());
        } else {
            last_r = r;
        }
        s = next;
    }
    if !record {
        r_hist.push(last_r);
        s_hist.push(s);
    }
    Trajectory {
        r: r_hist,
        s: s_hist,
        t_run: count,
    }
}

/// Forward pass through the first `t_run` layers from `s_1 = 0`.
///
/// With `record` unset only the final `(r, s)` pair is kept.
pub fn tpg_forward(
    p: &TpgParams,
    est: &LinearEstimator,
    h: &DMatrix<f64>,
    y: &DVector<f64>,
    t_run: usize,
    record: bool,
) -> Trajectory {
    assert!(t_run >= 1 && t_run <= p.t_max, "t_run must lie in 1..=t_max");
    assert_eq!(est.mode, p.mode, "estimator built for a different matrix mode");
    let s1 = DVector::zeros(h.ncols());
    tpg_forward_from(p, est, h, y, &s1, 0, t_run, record)
}

/// Componentwise `sgn` with `sgn(0) = -1`.
pub fn hard_decision(s: &DVector<f64>) -> DVector<f64> {
    s.map(|v| if v <= 0.0 { -1.0 } else { 1.0 })
}

/// Full detection: build `W`, run all layers, slice to `{-1, +1}`.
pub fn detect(p: &TpgParams, h: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let est = p.estimator(h)?;
    Ok(detect_with(p, &est, h, y))
}

/// Detection against a prebuilt estimator.
pub fn detect_with(
    p: &TpgParams,
    est: &LinearEstimator,
    h: &DMatrix<f64>,
    y: &DVector<f64>,
) -> DVector<f64> {
    hard_decision(tpg_forward(p, est, h, y, p.t_max, false).output())
}
