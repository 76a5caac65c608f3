//! The W-SOAV proximal map and solver, then IW-SOAV against MMSE.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tpg_detector::baselines::{
    iwsoav_detect, mmse_detect, soav_prox_scalar, wsoav_objective, WsoavSolver,
};
use tpg_detector::harness::{ber_estimate, StopRule};
use tpg_detector::{ChannelConfig, InstanceSource, IwsoavConfig, WsoavWeights};

fn main() -> tpg_detector::Result<()> {
    for v in [-3.0, -1.2, 0.0, 0.5, 1.4, 3.0] {
        println!("prox(v = {v:>4}, d = 0.5, gamma = 1) = {:.3}", soav_prox_scalar(v, 0.5, 1.0));
    }

    let cfg = ChannelConfig::new(8, 6, 14.0, 0);
    let ch = cfg.sample(&mut ChaCha8Rng::seed_from_u64(2));
    let icfg = IwsoavConfig::default();
    let solver = WsoavSolver::new(&ch.h, &icfg)?;
    let w = WsoavWeights::uniform(ch.h.ncols());
    let mut trace = Vec::new();
    let z = solver.solve_with_history(&ch.y, &w, |z: &DVector<f64>| {
        trace.push(wsoav_objective(&ch.h, &ch.y, &w, icfg.alpha, z))
    });
    println!("objective after 1, 10, 50 iterations: {:.4} {:.4} {:.4}", trace[0], trace[9], trace[49]);
    println!("solution {:.2?}", z.as_slice());

    let cfg = ChannelConfig::new(16, 12, 14.0, 0);
    let stop = StopRule { max_trials: 5000, target_errors: 300 };
    let mmse = ber_estimate("mmse", |c| mmse_detect(&c.h, &c.y, c.sigma_w2), &cfg, stop)?;
    for l_outer in [1, 2] {
        let icfg = IwsoavConfig { l_outer, ..Default::default() };
        let iw = ber_estimate("iwsoav", |c| iwsoav_detect(&c.h, &c.y, c.sigma_w2, &icfg), &cfg, stop)?;
        println!("IW-SOAV L = {l_outer}: BER {:.4}", iw.ber);
    }
    println!("MMSE: BER {:.4}", mmse.ber);
    Ok(())
}
