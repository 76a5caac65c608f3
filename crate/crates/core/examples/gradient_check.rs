//! Compare the hand-written backward pass with central differences.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tpg_detector::linalg::MatrixMode;
use tpg_detector::train::{backward, batch_loss, Trainable, TrainingBatch};
use tpg_detector::{ChannelConfig, TpgParams};

fn main() -> tpg_detector::Result<()> {
    let cfg = ChannelConfig::new(8, 6, 12.0, 0);
    let batch = TrainingBatch::sample(&cfg, 20, &mut ChaCha8Rng::seed_from_u64(4));
    let p = TpgParams::uniform(5, MatrixMode::Lmmse, 0.3, 0.8, 1.5);
    let g = backward(&p, &batch, 5, Trainable::ALL)?;
    println!("loss {:.6}", g.loss);

    let h = 1e-6;
    let fd = |nudge: &dyn Fn(&mut TpgParams, f64)| -> tpg_detector::Result<f64> {
        let (mut a, mut b) = (p.clone(), p.clone());
        nudge(&mut a, h);
        nudge(&mut b, -h);
        Ok((batch_loss(&a, &batch, 5)? - batch_loss(&b, &batch, 5)?) / (2.0 * h))
    };
    println!("{:>12} {:>14} {:>14}", "parameter", "analytic", "numeric");
    for t in 0..5 {
        let n = fd(&|q, d| q.gamma_raw[t] += d)?;
        println!("{:>12} {:>14.8} {:>14.8}", format!("gamma~[{t}]"), g.grad.d_gamma_raw[t], n);
    }
    for t in 0..5 {
        let n = fd(&|q, d| q.theta[t] += d)?;
        println!("{:>12} {:>14.8} {:>14.8}", format!("theta[{t}]"), g.grad.d_theta[t], n);
    }
    let n = fd(&|q, d| q.alpha += d)?;
    println!("{:>12} {:>14.8} {:>14.8}", "alpha", g.grad.d_alpha, n);
    Ok(())
}
