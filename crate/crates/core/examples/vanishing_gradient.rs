//! Training all layers at once: early-layer gradients are much smaller than
//! late-layer ones, which is why training proceeds one layer at a time.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tpg_detector::train::train_with;
use tpg_detector::{ToyConfig, TrainConfig};

fn main() -> tpg_detector::Result<()> {
    let toy = ToyConfig { n: 64, sigma2: 0.256 };
    let mut cfg = TrainConfig::toy(toy, 20, 5e-3, 8.0);
    cfg.incremental = false;
    cfg.learning_rate = 2e-3;
    cfg.minibatches_per_generation = 10;
    let mut mean = vec![0.0; cfg.t_max];
    train_with(&cfg, &mut ChaCha8Rng::seed_from_u64(0), |step| {
        for (m, g) in mean.iter_mut().zip(&step.grad.d_gamma_raw) {
            *m += g.abs() / 10.0;
        }
    })?;
    for (t, g) in mean.iter().enumerate() {
        println!("layer {:>2}: mean |dL/dgamma~| = {g:.3e}", t + 1);
    }
    Ok(())
}
