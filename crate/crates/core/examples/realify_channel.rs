//! Draw a complex MIMO channel, map it to the real model and check that
//! the map respects products.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tpg_detector::channel::{
    has_complex_block_structure, realify_vector, sample_complex_channel, sample_transmission,
    sigma_from_snr,
};
use tpg_detector::ChannelConfig;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let c = sample_complex_channel(3, 2, &mut rng);
    let h = c.realify();
    println!("complex {}x{} -> real {}x{}", c.m(), c.n(), h.nrows(), h.ncols());
    println!("block structure: {}", has_complex_block_structure(&h));

    let x = DVector::from_vec(vec![
        Complex64::new(1.0, -1.0),
        Complex64::new(-1.0, -1.0),
        Complex64::new(1.0, 1.0),
    ]);
    let gap = (realify_vector(&(&c.h_tilde * &x)) - &h * realify_vector(&x)).amax();
    println!("|realify(Hx) - realify(H) realify(x)| = {gap:.1e}");

    for snr in [0.0, 10.0, 20.0] {
        println!("n = 50, SNR {snr:>4} dB -> sigma_w^2 = {:.4}", sigma_from_snr(50, snr));
    }

    let cfg = ChannelConfig::new(4, 3, 15.0, 0);
    let ch = sample_transmission(&cfg, &mut rng);
    println!("x = {:?}", ch.x_true.as_slice());
    let draws = 2000;
    let power: f64 = (0..draws)
        .map(|_| sample_transmission(&cfg, &mut rng).noise().norm_squared() / 6.0)
        .sum::<f64>()
        / draws as f64;
    println!("noise power per component {power:.4} (expected {:.4})", cfg.sigma_w2() / 2.0);
}
