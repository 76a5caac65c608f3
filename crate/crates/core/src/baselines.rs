//! Reference detectors: linear MMSE and IW-SOAV, plus the untrained
//! projected-gradient iteration.
//!
//! IW-SOAV alternates between estimating per-symbol priors `w+_j` from
//! approximate LLRs and solving the weighted sum-of-absolute-values problem
//!
//! ```text
//! minimize_z  sum_j w+_j |z_j - 1| + w-_j |z_j + 1| + (alpha / 2) ||y - Hz||^2
//! ```
//!
//! with a Douglas-Rachford splitting whose linear step reuses one
//! precomputed `N x N` inverse.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::detector::{hard_decision, Trajectory};
use crate::linalg::{lmmse_matrix, spd_inverse};
use crate::{Error, Result};

/// Floor substituted for non-positive LLR denominators.
pub const LLR_DENOMINATOR_FLOOR: f64 = 1e-12;

/// `hard_decision(H^T (HH^T + sigma_w2/2 I)^{-1} y)`.
pub fn mmse_detect(h: &DMatrix<f64>, y: &DVector<f64>, sigma_w2: f64) -> Result<DVector<f64>> {
    let est = lmmse_matrix(h, sigma_w2 / 2.0)?;
    Ok(hard_decision(&(&est.w * y)))
}

/// Projected gradient with a fixed step and softness:
/// `r_t = s_t + gamma A^T (y - A s_t)`, `s_{t+1} = tanh(xi r_t)`.
pub fn plain_pg(a: &DMatrix<f64>, y: &DVector<f64>, gamma: f64, xi: f64, t_max: usize) -> Trajectory {
    let at = a.transpose();
    let mut s = DVector::zeros(a.ncols());
    let mut r_hist = Vec::with_capacity(t_max);
    let mut s_hist = Vec::with_capacity(t_max);
    for _ in 0..t_max {
        let r = &s + (&at * (y - a * &s)) * gamma;
        s = r.map(|v| (xi * v).tanh());
        r_hist.push(r);
        s_hist.push(s.clone());
    }
    Trajectory {
        r: r_hist,
        s: s_hist,
        t_run: t_max,
    }
}

/// Prior weights `w+_j = P(x_j = +1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WsoavWeights {
    pub w_plus: DVector<f64>,
}

impl WsoavWeights {
    pub fn new(w_plus: DVector<f64>) -> Result<Self> {
        if w_plus.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(Error::config("w_plus", "entries must lie in [0, 1]"));
        }
        Ok(Self { w_plus })
    }

    pub fn uniform(len: usize) -> Self {
        Self {
            w_plus: DVector::from_element(len, 0.5),
        }
    }

    pub fn w_minus(&self) -> DVector<f64> {
        self.w_plus.map(|w| 1.0 - w)
    }

    /// `d_j = w+_j - w-_j`.
    pub fn d(&self) -> DVector<f64> {
        self.w_plus.map(|w| 2.0 * w - 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IwsoavConfig {
    /// Weight of the data-fidelity term.
    pub alpha: f64,
    /// Proximal step.
    pub gamma: f64,
    /// Relaxation, kept constant over the inner iterations.
    pub theta: f64,
    pub k_itr: usize,
    pub l_outer: usize,
    /// Starting point of the inner loop; zero when absent.
    pub r0: Option<Vec<f64>>,
    pub epsilon: f64,
    /// Start the first outer loop from `w+ = 0.5` instead of LLRs at `s = 0`.
    pub uniform_first_weights: bool,
}

impl Default for IwsoavConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            gamma: 1.0,
            theta: 1.9,
            k_itr: 50,
            l_outer: 1,
            r0: None,
            epsilon: 0.0,
            uniform_first_weights: false,
        }
    }
}

impl IwsoavConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::config("alpha", "must be positive"));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::config("gamma", "must be positive"));
        }
        if !(self.epsilon >= 0.0 && self.epsilon < 1.0) {
            return Err(Error::config("epsilon", "must lie in [0, 1)"));
        }
        if !(self.theta >= self.epsilon && self.theta <= 2.0 - self.epsilon) {
            return Err(Error::config("theta", "must lie in [epsilon, 2 - epsilon]"));
        }
        if self.k_itr == 0 {
            return Err(Error::config("k_itr", "must be at least 1"));
        }
        if self.l_outer == 0 {
            return Err(Error::config("l_outer", "must be at least 1"));
        }
        Ok(())
    }
}

/// Scalar proximal map of `w+|u - 1| + w-|u + 1|` with step `gamma`.
pub fn soav_prox_scalar(v: f64, d: f64, gamma: f64) -> f64 {
    if v < -1.0 - gamma {
        v + gamma
    } else if v < -1.0 - d * gamma {
        -1.0
    } else if v < 1.0 - d * gamma {
        v + d * gamma
    } else if v < 1.0 + gamma {
        1.0
    } else {
        v - gamma
    }
}

pub fn soav_prox(v: &DVector<f64>, w: &WsoavWeights, gamma: f64) -> DVector<f64> {
    DVector::from_fn(v.len(), |j, _| {
        soav_prox_scalar(v[j], 2.0 * w.w_plus[j] - 1.0, gamma)
    })
}

/// Value of the W-SOAV objective at `z`.
pub fn wsoav_objective(
    h: &DMatrix<f64>,
    y: &DVector<f64>,
    w: &WsoavWeights,
    alpha: f64,
    z: &DVector<f64>,
) -> f64 {
    let penalty: f64 = z
        .iter()
        .zip(w.w_plus.iter())
        .map(|(&zj, &wp)| wp * (zj - 1.0).abs() + (1.0 - wp) * (zj + 1.0).abs())
        .sum();
    penalty + 0.5 * alpha * (y - h * z).norm_squared()
}

/// Douglas-Rachford solver for one channel matrix; holds
/// `(I + alpha gamma H^T H)^{-1}` so repeated solves skip the factorisation.
#[derive(Debug, Clone)]
pub struct WsoavSolver {
    h: DMatrix<f64>,
    inverse: DMatrix<f64>,
    cfg: IwsoavConfig,
}

impl WsoavSolver {
    pub fn new(h: &DMatrix<f64>, cfg: &IwsoavConfig) -> Result<Self> {
        cfg.validate()?;
        let n = h.ncols();
        if let Some(r0) = &cfg.r0 {
            if r0.len() != n {
                return Err(Error::LengthMismatch {
                    field: "r0",
                    expected: n,
                    found: r0.len(),
                });
            }
        }
        let scale = cfg.alpha * cfg.gamma;
        let mut system = h.tr_mul(h) * scale;
        for i in 0..n {
            system[(i, i)] += 1.0;
        }
        Ok(Self {
            h: h.clone(),
            inverse: spd_inverse(&system)?,
            cfg: cfg.clone(),
        })
    }

    /// Run the inner loop and return the final `z`.
    pub fn solve(&self, y: &DVector<f64>, w: &WsoavWeights) -> DVector<f64> {
        self.solve_with_history(y, w, |_| {})
    }

    /// Same as [`solve`](Self::solve), calling `visit` with every `z_t`.
    pub fn solve_with_history(
        &self,
        y: &DVector<f64>,
        w: &WsoavWeights,
        mut visit: impl FnMut(&DVector<f64>),
    ) -> DVector<f64> {
        let IwsoavConfig { alpha, gamma, theta, .. } = self.cfg;
        let offset = &self.inverse * (self.h.tr_mul(y) * (alpha * gamma));
        let mut r = match &self.cfg.r0 {
            Some(r0) => DVector::from_column_slice(r0),
            None => DVector::zeros(self.h.ncols()),
        };
        let d = w.d();
        let mut z = DVector::zeros(r.len());
        for _ in 0..self.cfg.k_itr {
            z = &self.inverse * &r + &offset;
            visit(&z);
            let reflected = &z * 2.0 - &r;
            let p = DVector::from_fn(r.len(), |j, _| soav_prox_scalar(reflected[j], d[j], gamma));
            r += (p - &z) * theta;
        }
        z
    }

    pub fn config(&self) -> &IwsoavConfig {
        &self.cfg
    }
}

/// One W-SOAV solve for weights `w`.
pub fn wsoav_solve(
    h: &DMatrix<f64>,
    y: &DVector<f64>,
    w: &WsoavWeights,
    cfg: &IwsoavConfig,
) -> Result<DVector<f64>> {
    Ok(WsoavSolver::new(h, cfg)?.solve(y, w))
}

/// Approximate LLRs and their weights, with a count of floored denominators.
#[derive(Debug, Clone, PartialEq)]
pub struct LlrEstimate {
    pub lambda: DVector<f64>,
    pub weights: WsoavWeights,
    pub floored: usize,
}

/// `1 / (1 + e^{-x})` without overflow for large `|x|`.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Per-symbol prior weights from a tentative estimate `s_hat`.
///
/// `s_hat` is clipped to `[-1, 1]`. Each symbol's LLR treats the other
/// symbols' interference as Gaussian with mean `mu_i - h_ij s'_j` and
/// variance `sigma_i^2 - h_ij^2 (1 - s'_j^2)`.
pub fn llr_weights(
    h: &DMatrix<f64>,
    y: &DVector<f64>,
    s_hat: &DVector<f64>,
    sigma_w2: f64,
) -> LlrEstimate {
    let clipped = s_hat.map(|v| v.clamp(-1.0, 1.0));
    let mu = h * &clipped;
    let spread = clipped.map(|v| 1.0 - v * v);
    let sigma2 = h.map(|v| v * v) * &spread;
    let mut floored = 0;
    let lambda = DVector::from_fn(h.ncols(), |j, _| {
        let mut acc = 0.0;
        for i in 0..h.nrows() {
            let hij = h[(i, j)];
            let mut denom = sigma2[i] + sigma_w2 / 2.0 - hij * hij * spread[j];
            if !(denom > 0.0) {
                floored += 1;
                denom = LLR_DENOMINATOR_FLOOR;
            }
            acc += 2.0 * hij * (y[i] - (mu[i] - hij * clipped[j])) / denom;
        }
        acc
    });
    let weights = WsoavWeights {
        w_plus: lambda.map(logistic),
    };
    LlrEstimate {
        lambda,
        weights,
        floored,
    }
}

/// Soft IW-SOAV estimate before slicing.
pub fn iwsoav_soft(
    h: &DMatrix<f64>,
    y: &DVector<f64>,
    sigma_w2: f64,
    cfg: &IwsoavConfig,
) -> Result<DVector<f64>> {
    let solver = WsoavSolver::new(h, cfg)?;
    let mut s_hat = DVector::zeros(h.ncols());
    for outer in 0..cfg.l_outer {
        let w = if outer == 0 && cfg.uniform_first_weights {
            WsoavWeights::uniform(h.ncols())
        } else {
            llr_weights(h, y, &s_hat, sigma_w2).weights
        };
        s_hat = solver.solve(y, &w);
    }
    Ok(s_hat)
}

pub fn iwsoav_detect(
    h: &DMatrix<f64>,
    y: &DVector<f64>,
    sigma_w2: f64,
    cfg: &IwsoavConfig,
) -> Result<DVector<f64>> {
    Ok(hard_decision(&iwsoav_soft(h, y, sigma_w2, cfg)?))
}
