use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{substream, ChannelConfig, InstanceSource, RealChannel};
use crate::{Error, Result};

/// Trials are evaluated in parallel blocks of this size and accumulated in
/// index order.
const BLOCK: u64 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StopRule {
    pub max_trials: u64,
    pub target_errors: u64,
}

impl Default for StopRule {
    fn default() -> Self {
        Self {
            max_trials: 1_000_000,
            target_errors: 200,
        }
    }
}

/// One row of a BER sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerPoint {
    pub detector_id: String,
    pub n: usize,
    pub m: usize,
    pub snr_db: f64,
    pub trials: u64,
    pub bit_errors: u64,
    pub ber: f64,
}

/// Count bit errors of `detect` over fresh channel draws until
/// `target_errors` accumulate or `max_trials` run out.
///
/// Trial `k` uses `substream(cfg.seed, k)`, and the stopping point is the
/// first trial index at which the running count reaches the target, so the
/// result is identical for any degree of parallelism.
pub fn ber_estimate<F>(detector_id: &str, detect: F, cfg: &ChannelConfig, stop: StopRule) -> Result<BerPoint>
where
    F: Fn(&RealChannel) -> Result<DVector<f64>> + Sync,
{
    cfg.validate()?;
    if stop.max_trials == 0 {
        return Err(Error::config("max_trials", "must be at least 1"));
    }
    let bits = cfg.signal_len() as u64;
    let trial = |k: u64| -> Result<u64> {
        let mut rng = substream(cfg.seed, k);
        let ch = cfg.sample(&mut rng);
        let x_hat = detect(&ch)?;
        if x_hat.len() != ch.x_true.len() {
            return Err(Error::ShapeMismatch(format!(
                "detector returned {} symbols, expected {}",
                x_hat.len(),
                ch.x_true.len()
            )));
        }
        Ok(x_hat.iter().zip(ch.x_true.iter()).filter(|(a, b)| a != b).count() as u64)
    };

    let mut trials = 0;
    let mut bit_errors = 0;
    'outer: while trials < stop.max_trials {
        let end = (trials + BLOCK).min(stop.max_trials);
        let counts = (trials..end)
            .into_par_iter()
            .map(trial)
            .collect::<Result<Vec<u64>>>()?;
        for c in counts {
            trials += 1;
            bit_errors += c;
            if bit_errors >= stop.target_errors {
                break 'outer;
            }
        }
    }
    Ok(BerPoint {
        detector_id: detector_id.to_string(),
        n: cfg.n,
        m: cfg.m,
        snr_db: cfg.snr_db,
        trials,
        bit_errors,
        ber: bit_errors as f64 / (trials * bits) as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn cfg() -> ChannelConfig {
        ChannelConfig::new(4, 3, 10.0, 17)
    }

    #[test]
    fn oracle_and_adversary() {
        let stop = StopRule {
            max_trials: 50,
            target_errors: 10_000,
        };
        let perfect = ber_estimate("oracle", |ch| Ok(ch.x_true.clone()), &cfg(), stop).unwrap();
        assert_eq!(perfect.ber, 0.0);
        assert_eq!(perfect.trials, 50);
        let worst = ber_estimate("adversary", |ch| Ok(-&ch.x_true), &cfg(), stop).unwrap();
        assert_eq!(worst.ber, 1.0);
        assert!(worst.bit_errors <= worst.trials * 8);
    }

    #[test]
    fn coin_flip_is_near_one_half() {
        let stop = StopRule {
            max_trials: 12_500,
            target_errors: u64::MAX,
        };
        let coin = |ch: &RealChannel| {
            // independent of the trial's own stream
            let mut rng = substream(99, ch.y[0].to_bits());
            Ok(DVector::from_fn(8, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 }))
        };
        let p = ber_estimate("coin", coin, &cfg(), stop).unwrap();
        assert_eq!(p.trials * 8, 100_000);
        assert!((0.47..=0.53).contains(&p.ber), "{}", p.ber);
    }

    #[test]
    fn stops_at_target_errors() {
        let stop = StopRule {
            max_trials: 1000,
            target_errors: 20,
        };
        let p = ber_estimate("adversary", |ch| Ok(-&ch.x_true), &cfg(), stop).unwrap();
        assert_eq!(p.trials, 3);
        assert_eq!(p.bit_errors, 24);
    }

    #[test]
    fn independent_of_thread_count() {
        let stop = StopRule {
            max_trials: 300,
            target_errors: 40,
        };
        let det = |ch: &RealChannel| crate::baselines::mmse_detect(&ch.h, &ch.y, ch.sigma_w2);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let a = pool.install(|| ber_estimate("mmse", det, &cfg(), stop).unwrap());
        let b = ber_estimate("mmse", det, &cfg(), stop).unwrap();
        assert_eq!(a, b);
    }
}
