//! Train a small detector, save and reload its parameters, then compare
//! BER with the linear MMSE detector.

use tpg_detector::baselines::mmse_detect;
use tpg_detector::detector::detect_with;
use tpg_detector::harness::{ber_estimate, load_params, save_params, ParamsMeta, StopRule};
use tpg_detector::train::incremental_train;
use tpg_detector::{ChannelConfig, TrainConfig};

fn main() -> tpg_detector::Result<()> {
    let channel = ChannelConfig::new(16, 12, 14.0, 0);
    let mut cfg = TrainConfig::detector(channel, 20);
    cfg.seed = 42;
    let out = incremental_train(&cfg)?;
    for g in &out.loss_trace {
        println!("generation {:>2}: loss {:.4}", g.generation, g.mean_loss);
    }

    let meta = ParamsMeta { n: channel.n, m: channel.m, snr_db: channel.snr_db, seed: cfg.seed };
    let text = save_params(&out.params, &meta)?;
    let (params, _) = load_params(&text)?;
    assert_eq!(params, out.params);
    println!("alpha {:.4}, steps {:.3?}", params.alpha, (0..params.t_max).map(|t| params.step_size(t)).collect::<Vec<_>>());

    let eval = ChannelConfig { seed: 7, ..channel };
    let stop = StopRule { max_trials: 20_000, target_errors: 300 };
    let tpg = ber_estimate("tpg", |c| Ok(detect_with(&params, &params.estimator(&c.h)?, &c.h, &c.y)), &eval, stop)?;
    let mmse = ber_estimate("mmse", |c| mmse_detect(&c.h, &c.y, c.sigma_w2), &eval, stop)?;
    println!("BER trained {:.4}  MMSE {:.4}", tpg.ber, mmse.ber);
    Ok(())
}
