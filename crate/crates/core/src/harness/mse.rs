use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{substream, InstanceSource, RealChannel};
use crate::{Error, Result};

/// Reported value for an exactly zero error.
pub const MSE_FLOOR_DB: f64 = -300.0;

/// `10 log10(E||x - x_hat_t||^2 / divisor)` for `t = 1..T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseSeries {
    pub mse_db: Vec<f64>,
    pub samples: usize,
    pub divisor: f64,
}

impl MseSeries {
    /// Value after `t` iterations (1-based).
    pub fn at(&self, t: usize) -> f64 {
        self.mse_db[t - 1]
    }
}

pub fn mse_db(mean_sq_error: f64, divisor: f64) -> f64 {
    if mean_sq_error <= 0.0 {
        MSE_FLOOR_DB
    } else {
        (10.0 * (mean_sq_error / divisor).log10()).max(MSE_FLOOR_DB)
    }
}

/// Average `||x - s_{t+1}||^2` over `samples` draws at every iteration.
///
/// `algorithm` returns the soft iterates `s_2, ..., s_{T+1}` for one
/// instance. The divisor follows `source`: the antenna count `n` for MIMO
/// (signals have length `2n`), the signal length for the toy problem.
pub fn mse_curve<F>(algorithm: F, source: &dyn InstanceSource, samples: usize, seed: u64) -> Result<MseSeries>
where
    F: Fn(&RealChannel) -> Result<Vec<DVector<f64>>> + Sync,
{
    if samples == 0 {
        return Err(Error::config("samples", "must be at least 1"));
    }
    let per_sample = (0..samples as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = substream(seed, k);
            let ch = source.sample(&mut rng);
            let iterates = algorithm(&ch)?;
            Ok(iterates
                .iter()
                .map(|s| (&ch.x_true - s).norm_squared())
                .collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;

    let t_len = per_sample[0].len();
    if per_sample.iter().any(|v| v.len() != t_len) {
        return Err(Error::ShapeMismatch("iterate counts differ between samples".into()));
    }
    let mut sums = vec![0.0; t_len];
    for errs in &per_sample {
        for (acc, e) in sums.iter_mut().zip(errs) {
            *acc += e;
        }
    }
    let divisor = source.mse_divisor();
    let mse_db = sums
        .iter()
        .map(|s| mse_db(s / samples as f64, divisor))
        .collect::<Vec<_>>();
    if mse_db.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("MSE curve".into()));
    }
    Ok(MseSeries {
        mse_db,
        samples,
        divisor,
    })
}
