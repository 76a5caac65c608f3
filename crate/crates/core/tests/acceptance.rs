//! Acceptance criteria, one line each. Run a subset by naming it:
//! `cargo test --test acceptance -- P5 P6`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use tpg_detector::baselines::{
    iwsoav_detect, mmse_detect, soav_prox_scalar, wsoav_objective, wsoav_solve, IwsoavConfig,
    WsoavWeights,
};
use tpg_detector::channel::{
    has_complex_block_structure, realify_matrix, realify_vector, sample_complex_channel,
};
use tpg_detector::detector::{detect_with, tpg_forward, TpgParams};
use tpg_detector::harness::{
    ber_estimate, load_params, parse_experiment, run_experiment, run_toy, save_params, ParamsMeta,
    StopRule, ToyExperiment,
};
use tpg_detector::linalg::{lmmse_matrix, pinv_matrix, MatrixMode};
use tpg_detector::train::{backward, incremental_train, train_with, Trainable, TrainingBatch};
use tpg_detector::{ChannelConfig, InstanceSource, ToyConfig, TrainConfig};

// P1
const FD_STEP: f64 = 1e-6;
const FD_REL_TOL: f64 = 1e-4;
const FD_ABS_TOL: f64 = 1e-7;
// P2
const TOY_MARGIN_DB: f64 = 3.0;
// P3
const MMSE_BER_RANGE: (f64, f64) = (0.03, 0.3);
const MIN_ERRORS: u64 = 200;
// P4
const P4_TARGET_BER: f64 = 1.0e-4;
const P4_FACTOR: f64 = 3.0;
// P5
const PROX_TOL: f64 = 2e-4;
const PROX_GRID_STEP: f64 = 1e-4;
// P6
const SOLVER_TOL: f64 = 1e-3;
const SOLVER_GRID_STEP: f64 = 1e-3;
// P7
const PINV_TOL: f64 = 1e-10;
const HOMOMORPHISM_TOL: f64 = 1e-12;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Option<Outcome>);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn per_sample_loss(p: &TpgParams, batch: &TrainingBatch, t_run: usize) -> f64 {
    let est = p.estimator(&batch.h).unwrap();
    let d = batch.size();
    (0..d)
        .map(|k| {
            let y = batch.y.column(k).into_owned();
            let out = tpg_forward(p, &est, &batch.h, &y, t_run, false);
            (batch.x.column(k) - out.output()).norm_squared()
        })
        .sum::<f64>()
        / d as f64
}

fn central_difference(
    p: &TpgParams,
    batch: &TrainingBatch,
    t_run: usize,
    nudge: impl Fn(&mut TpgParams, f64),
) -> f64 {
    let mut plus = p.clone();
    nudge(&mut plus, FD_STEP);
    let mut minus = p.clone();
    nudge(&mut minus, -FD_STEP);
    (per_sample_loss(&plus, batch, t_run) - per_sample_loss(&minus, batch, t_run)) / (2.0 * FD_STEP)
}

fn p1_gradients() -> Outcome {
    let t_max = 5;
    let mut worst_rel: f64 = 0.0;
    let mut largest: f64 = 0.0;
    let mut checked = 0;
    let mut failures = Vec::new();
    for mode in [MatrixMode::Mf, MatrixMode::Pinv, MatrixMode::Lmmse] {
        for instance in 0..10u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + instance);
            let cfg = ChannelConfig::new(8, 6, 10.0, instance);
            let batch = TrainingBatch::sample(&cfg, 6, &mut rng);
            let gamma_scale = if mode == MatrixMode::Mf { 0.05 } else { 0.5 };
            let mut p = TpgParams {
                t_max,
                gamma_raw: (0..t_max).map(|_| gamma_scale * rng.random_range(0.4..1.4)).collect(),
                theta: (0..t_max).map(|_| rng.random_range(0.5..1.5)).collect(),
                alpha: rng.random_range(0.5..2.0),
                mode,
                shared_softness: instance % 3 == 2,
            };
            if p.shared_softness {
                let v = p.theta[0];
                p.theta.iter_mut().for_each(|t| *t = v);
            }
            let analytic = backward(&p, &batch, t_max, Trainable::ALL).unwrap().grad;

            let mut compare = |name: String, a: f64, f: f64| {
                checked += 1;
                largest = largest.max(a.abs());
                let diff = (a - f).abs();
                let rel = diff / a.abs().max(f.abs());
                if a.abs().max(f.abs()) > FD_ABS_TOL {
                    worst_rel = worst_rel.max(rel);
                }
                if diff >= FD_ABS_TOL && rel >= FD_REL_TOL {
                    failures.push(format!("{mode:?}#{instance} {name}: analytic {a:e} vs fd {f:e}"));
                }
            };
            for t in 0..t_max {
                let f = central_difference(&p, &batch, t_max, |q, h| q.gamma_raw[t] += h);
                compare(format!("gamma_raw[{t}]"), analytic.d_gamma_raw[t], f);
            }
            if p.shared_softness {
                let f = central_difference(&p, &batch, t_max, |q, h| q.theta.iter_mut().for_each(|v| *v += h));
                compare("shared theta".into(), analytic.d_theta[0], f);
            } else {
                for t in 0..t_max {
                    let f = central_difference(&p, &batch, t_max, |q, h| q.theta[t] += h);
                    compare(format!("theta[{t}]"), analytic.d_theta[t], f);
                }
            }
            let f = central_difference(&p, &batch, t_max, |q, h| q.alpha += h);
            compare("alpha".into(), analytic.d_alpha, f);
        }
    }
    check(
        failures.is_empty(),
        format!(
            "{checked} components up to {largest:.2e}, worst relative error {worst_rel:.2e} (tol {FD_REL_TOL:e}){}",
            failures.first().map(|f| format!("; {f}")).unwrap_or_default()
        ),
    )
}

fn p2_toy() -> Outcome {
    let exp = ToyExperiment::default();
    assert_eq!((exp.n, exp.t_max, exp.batch_size, exp.minibatches_per_generation), (64, 20, 200, 100));
    assert_eq!(exp.learning_rate, 2e-4);
    assert_eq!(exp.gamma_grid.points, 20);
    let report = run_toy(&exp).map_err(|e| e.to_string())?;
    let tpg = report.tpg.at(exp.eval_t);
    let (gamma, pg_curve) = &report.grid[report.best];
    let pg = pg_curve.at(exp.eval_t);
    check(
        tpg <= pg - TOY_MARGIN_DB,
        format!(
            "t = {}: trained {tpg:.2} dB, best plain PG {pg:.2} dB at gamma {gamma:.3e}, margin {:.2} dB (need {TOY_MARGIN_DB})",
            exp.eval_t,
            pg - tpg
        ),
    )
}

fn p3_ordering() -> Outcome {
    let eval = ChannelConfig::new(50, 32, 16.0, 7);
    let mut train = TrainConfig::detector(eval, 50);
    train.seed = 1234;
    let params = incremental_train(&train).map_err(|e| e.to_string())?.params;
    let stop = StopRule {
        max_trials: 1_000_000,
        target_errors: MIN_ERRORS,
    };
    let tpg = ber_estimate(
        "tpg",
        |ch| Ok(detect_with(&params, &params.estimator(&ch.h)?, &ch.h, &ch.y)),
        &eval,
        stop,
    )
    .map_err(|e| e.to_string())?;
    let mmse = ber_estimate("mmse", |ch| mmse_detect(&ch.h, &ch.y, ch.sigma_w2), &eval, stop)
        .map_err(|e| e.to_string())?;
    let icfg = IwsoavConfig {
        k_itr: 50,
        l_outer: 1,
        ..Default::default()
    };
    let iw = ber_estimate("iwsoav", |ch| iwsoav_detect(&ch.h, &ch.y, ch.sigma_w2, &icfg), &eval, stop)
        .map_err(|e| e.to_string())?;
    let enough = [&tpg, &mmse, &iw].iter().all(|p| p.bit_errors >= MIN_ERRORS);
    check(
        enough && tpg.ber < iw.ber && (MMSE_BER_RANGE.0..=MMSE_BER_RANGE.1).contains(&mmse.ber),
        format!(
            "BER tpg {:.4} ({} err), iw-soav {:.4} ({} err), mmse {:.4} ({} err)",
            tpg.ber, tpg.bit_errors, iw.ber, iw.bit_errors, mmse.ber, mmse.bit_errors
        ),
    )
}

fn p4_full_scale() -> Option<Outcome> {
    std::env::var_os("TPG_FULL_SCALE")?;
    let eval = ChannelConfig::new(100, 64, 20.0, 7);
    let mut train = TrainConfig::detector(eval, 50);
    train.seed = 1234;
    let params = match incremental_train(&train) {
        Ok(o) => o.params,
        Err(e) => return Some(Err(e.to_string())),
    };
    let stop = StopRule {
        max_trials: 10_000_000,
        target_errors: MIN_ERRORS,
    };
    let tpg = match ber_estimate(
        "tpg",
        |ch| Ok(detect_with(&params, &params.estimator(&ch.h)?, &ch.h, &ch.y)),
        &eval,
        stop,
    ) {
        Ok(p) => p,
        Err(e) => return Some(Err(e.to_string())),
    };
    let ratio = tpg.ber / P4_TARGET_BER;
    Some(check(
        (1.0 / P4_FACTOR..=P4_FACTOR).contains(&ratio),
        format!("BER {:.3e} over {} trials, {:.2}x the reference", tpg.ber, tpg.trials, ratio),
    ))
}

fn p5_prox() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let v: f64 = rng.random_range(-4.0..4.0);
        let w_plus: f64 = rng.random();
        let gamma: f64 = rng.random_range(0.01..2.0);
        let objective = |u: f64| gamma * (w_plus * (u - 1.0).abs() + (1.0 - w_plus) * (u + 1.0).abs()) + 0.5 * (u - v).powi(2);
        let steps = (12.0 / PROX_GRID_STEP) as i64;
        let best = (0..=steps)
            .map(|k| -6.0 + k as f64 * PROX_GRID_STEP)
            .min_by(|a, b| objective(*a).total_cmp(&objective(*b)))
            .unwrap();
        let prox = soav_prox_scalar(v, 2.0 * w_plus - 1.0, gamma);
        worst = worst.max((prox - best).abs());
    }
    check(worst < PROX_TOL, format!("1000 triples, worst |prox - grid| = {worst:.2e} (tol {PROX_TOL:e})"))
}

fn p6_solver() -> Outcome {
    let mut worst: f64 = f64::NEG_INFINITY;
    let steps = (6.0 / SOLVER_GRID_STEP).round() as usize;
    let axis: Vec<f64> = (0..=steps).map(|k| -3.0 + k as f64 * SOLVER_GRID_STEP).collect();
    for instance in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(600 + instance);
        let cfg = ChannelConfig::new(1, 1 + (instance % 2) as usize, 5.0, instance);
        let ch = cfg.sample(&mut rng);
        let w = WsoavWeights::new(DVector::from_fn(2, |_, _| rng.random::<f64>())).unwrap();
        let icfg = IwsoavConfig {
            alpha: rng.random_range(0.5..2.0),
            k_itr: 500,
            ..Default::default()
        };
        let z = wsoav_solve(&ch.h, &ch.y, &w, &icfg).map_err(|e| e.to_string())?;
        let solver_value = wsoav_objective(&ch.h, &ch.y, &w, icfg.alpha, &z);
        // same objective as `wsoav_objective`, unrolled for the grid
        let (h, y, wp) = (&ch.h, &ch.y, &w.w_plus);
        let penalty = |u: f64, wp: f64| wp * (u - 1.0).abs() + (1.0 - wp) * (u + 1.0).abs();
        let mut grid_min = f64::INFINITY;
        for &a in &axis {
            let pa = penalty(a, wp[0]);
            for &b in &axis {
                let mut fit = 0.0;
                for i in 0..h.nrows() {
                    let e = y[i] - h[(i, 0)] * a - h[(i, 1)] * b;
                    fit += e * e;
                }
                grid_min = grid_min.min(pa + penalty(b, wp[1]) + 0.5 * icfg.alpha * fit);
            }
        }
        worst = worst.max(solver_value - grid_min);
    }
    check(
        worst <= SOLVER_TOL,
        format!("20 instances, worst objective gap solver - grid = {worst:.2e} (tol {SOLVER_TOL:e})"),
    )
}

fn p7_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut pinv_gap: f64 = 0.0;
    let mut hom_gap: f64 = 0.0;
    let mut blocks = true;
    for _ in 0..20 {
        let n = rng.random_range(2..10);
        let m = rng.random_range(1..=n);
        let h = sample_complex_channel(n, m, &mut rng).realify();
        let a = lmmse_matrix(&h, 0.0).map_err(|e| e.to_string())?.w;
        let b = pinv_matrix(&h).map_err(|e| e.to_string())?.w;
        let svd = h.clone().pseudo_inverse(1e-12).map_err(|e| e.to_string())?;
        pinv_gap = pinv_gap.max((&a - b).amax()).max((a - svd).amax());
        blocks &= has_complex_block_structure(&h);

        let c = sample_complex_channel(n, m, &mut rng);
        let x = DVector::from_fn(n, |_, _| {
            Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
        });
        let lhs = realify_vector(&(&c.h_tilde * &x));
        let rhs = realify_matrix(&c.h_tilde) * realify_vector(&x);
        hom_gap = hom_gap.max((lhs - rhs).amax());
    }
    check(
        pinv_gap < PINV_TOL && hom_gap < HOMOMORPHISM_TOL && blocks,
        format!("lmmse(0) vs pinv and SVD pseudo-inverse {pinv_gap:.1e}, homomorphism {hom_gap:.1e}, block structure {blocks}"),
    )
}

fn p8_determinism() -> Outcome {
    let sweep = r#"{
        "kind": "ber-sweep", "n": 6, "m": 4, "snr_db": [6, 12], "seed": 21,
        "stop": {"max_trials": 300, "target_errors": 100},
        "detectors": [
            {"type": "mmse"},
            {"type": "iwsoav", "config": {"k_itr": 20}},
            {"type": "tpg", "source": {"train": {"t_max": 4, "batch_size": 20, "minibatches_per_generation": 5}}}
        ]
    }"#;
    let curve = r#"{
        "kind": "mse-curve", "samples": 200, "seed": 3,
        "problem": {"kind": "toy", "n": 16, "sigma2": 0.064},
        "algorithm": {"type": "plain-pg", "gamma": 0.02, "xi": 6.0, "t_max": 10}
    }"#;
    let mut identical = true;
    for text in [sweep, curve] {
        let exp = parse_experiment(text).map_err(|e| e.to_string())?;
        let a = run_experiment(&exp, Path::new(".")).map_err(|e| e.to_string())?;
        let b = run_experiment(&exp, Path::new(".")).map_err(|e| e.to_string())?;
        identical &= a == b;
    }

    let toy = ToyConfig { n: 8, sigma2: 0.1 };
    let mut cfg = TrainConfig::toy(toy, 4, 0.02, 8.0);
    cfg.minibatches_per_generation = 5;
    cfg.train_softness = true;
    let params = incremental_train(&cfg).map_err(|e| e.to_string())?.params;
    let meta = ParamsMeta { n: 8, m: 8, snr_db: 20.0, seed: 0 };
    let text = save_params(&params, &meta).map_err(|e| e.to_string())?;
    let (back, _) = load_params(&text).map_err(|e| e.to_string())?;
    let bits = |p: &TpgParams| {
        p.gamma_raw
            .iter()
            .chain(&p.theta)
            .chain(std::iter::once(&p.alpha))
            .map(|v| v.to_bits())
            .collect::<Vec<_>>()
    };
    let exact = bits(&params) == bits(&back) && back == params;
    check(identical && exact, format!("CSV reruns identical: {identical}, params round trip bit-exact: {exact}"))
}

fn p9_vanishing_gradient() -> Outcome {
    let toy = ToyConfig {
        n: 64,
        sigma2: 4.0 * 64.0 / 1000.0,
    };
    let mut cfg = TrainConfig::toy(toy, 20, ToyExperiment::default().init_gamma, 8.0);
    cfg.incremental = false;
    cfg.learning_rate = 2e-3;
    cfg.minibatches_per_generation = 10;
    let mut first = 0.0;
    let mut last = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    train_with(&cfg, &mut rng, |step| {
        first += step.grad.d_gamma_raw[0].abs() / 10.0;
        last += step.grad.d_gamma_raw[19].abs() / 10.0;
    })
    .map_err(|e| e.to_string())?;
    check(
        first < last,
        format!("mean |dL/dgamma~_1| = {first:.3e}, mean |dL/dgamma~_20| = {last:.3e}"),
    )
}

fn main() -> ExitCode {
    let wanted: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: Vec<Criterion> = vec![
        ("P1", || Some(p1_gradients())),
        ("P2", || Some(p2_toy())),
        ("P3", || Some(p3_ordering())),
        ("P4", p4_full_scale),
        ("P5", || Some(p5_prox())),
        ("P6", || Some(p6_solver())),
        ("P7", || Some(p7_identities())),
        ("P8", || Some(p8_determinism())),
        ("P9", || Some(p9_vanishing_gradient())),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        if !wanted.is_empty() && !wanted.iter().any(|w| w == name) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Some(Err(format!("panicked: {msg}")))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Some(Ok(detail)) => println!("{name} PASS  {detail}  [{secs:.1}s]"),
            Some(Err(detail)) => {
                failed += 1;
                println!("{name} FAIL  {detail}  [{secs:.1}s]");
            }
            None => println!("{name} SKIPPED  optional full-scale run, set TPG_FULL_SCALE=1 to enable"),
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
