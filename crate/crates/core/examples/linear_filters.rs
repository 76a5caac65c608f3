//! The three choices of W and the derivative of the LMMSE matrix in alpha.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tpg_detector::linalg::{build_estimator, lmmse_alpha_gradient, lmmse_matrix, MatrixMode};
use tpg_detector::{ChannelConfig, InstanceSource};

fn main() -> tpg_detector::Result<()> {
    let cfg = ChannelConfig::new(6, 4, 10.0, 0);
    let ch = cfg.sample(&mut ChaCha8Rng::seed_from_u64(3));
    for mode in [MatrixMode::Mf, MatrixMode::Pinv, MatrixMode::Lmmse] {
        let est = build_estimator(&ch.h, mode, 1.0)?;
        let estimate = &est.w * &ch.y;
        let errors = estimate
            .iter()
            .zip(ch.x_true.iter())
            .filter(|(e, x)| e.signum() != x.signum())
            .count();
        println!("{:>5}: {errors} sign errors out of {}", mode.label(), estimate.len());
    }

    let alpha = 0.7;
    let est = lmmse_matrix(&ch.h, alpha)?;
    let analytic = lmmse_alpha_gradient(&est)?;
    let h = 1e-6;
    let fd = (lmmse_matrix(&ch.h, alpha + h)?.w - lmmse_matrix(&ch.h, alpha - h)?.w) / (2.0 * h);
    println!("dW/dalpha: analytic vs central difference max gap {:.2e}", (analytic - fd).amax());
    Ok(())
}
