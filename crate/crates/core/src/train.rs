//! Data-driven tuning of the detector's scalar parameters.
//!
//! Training samples a fresh channel matrix for every minibatch, pushes `D`
//! transmissions through the first `t` layers, and backpropagates the
//! squared loss `D^-1 sum_i ||x_i - s_{t+1,i}||^2` by hand. The schedule is
//! incremental: generation `t` trains the first `t` layers for `K`
//! minibatches, and layer `t + 1` starts from whatever generation `t` left.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelConfig, InstanceSource, ToyConfig};
use crate::detector::{TpgParams, SOFTNESS_FLOOR};
use crate::linalg::MatrixMode;
use crate::{Error, Result};

/// The training distribution: MIMO channels or the square toy problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Problem {
    Mimo(ChannelConfig),
    Toy(ToyConfig),
}

impl Problem {
    pub fn source(&self) -> &dyn InstanceSource {
        match self {
            Problem::Mimo(c) => c,
            Problem::Toy(t) => t,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Problem::Mimo(c) => c.validate(),
            Problem::Toy(t) => t.validate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub t_max: usize,
    /// Minibatch size `D`.
    pub batch_size: usize,
    /// Minibatches per generation `K`.
    pub minibatches_per_generation: usize,
    pub learning_rate: f64,
    pub problem: Problem,
    pub mode: MatrixMode,
    #[serde(default)]
    pub shared_softness: bool,
    #[serde(default = "default_true")]
    pub train_alpha: bool,
    #[serde(default = "default_true")]
    pub train_softness: bool,
    /// Initial effective step size `gamma_t` (stored as its square root).
    pub init_gamma: f64,
    pub init_theta: f64,
    /// `None` picks `n * sigma_w^2` for MIMO problems and 0 otherwise.
    #[serde(default)]
    pub init_alpha: Option<f64>,
    /// `false` trains all `T` layers at once for `K` minibatches.
    #[serde(default = "default_true")]
    pub incremental: bool,
    /// Restart Adam's moments at the start of every generation.
    #[serde(default = "default_true")]
    pub reset_optimizer_each_generation: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_true() -> bool {
    true
}

impl TrainConfig {
    /// Detector defaults for a MIMO problem.
    pub fn detector(channel: ChannelConfig, t_max: usize) -> Self {
        Self {
            t_max,
            batch_size: 200,
            minibatches_per_generation: 100,
            learning_rate: 2e-3,
            problem: Problem::Mimo(channel),
            mode: MatrixMode::Lmmse,
            shared_softness: false,
            train_alpha: true,
            train_softness: true,
            init_gamma: 0.01,
            init_theta: 1.0,
            init_alpha: None,
            incremental: true,
            reset_optimizer_each_generation: true,
            seed: channel.seed,
        }
    }

    /// Matched-filter TPG on the toy problem with a fixed softness `xi`.
    pub fn toy(toy: ToyConfig, t_max: usize, init_gamma: f64, xi: f64) -> Self {
        Self {
            t_max,
            batch_size: 200,
            minibatches_per_generation: 100,
            learning_rate: 2e-4,
            problem: Problem::Toy(toy),
            mode: MatrixMode::Mf,
            shared_softness: true,
            train_alpha: false,
            train_softness: false,
            init_gamma,
            init_theta: 1.0 / xi,
            init_alpha: Some(0.0),
            incremental: true,
            reset_optimizer_each_generation: true,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_max == 0 {
            return Err(Error::config("t_max", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be positive"));
        }
        if !(self.init_gamma >= 0.0 && self.init_gamma.is_finite()) {
            return Err(Error::config("init_gamma", "must be finite and non-negative"));
        }
        if !self.init_theta.is_finite() {
            return Err(Error::config("init_theta", "must be finite"));
        }
        if let Some(a) = self.init_alpha {
            if !(a >= 0.0 && a.is_finite()) {
                return Err(Error::config("init_alpha", "must be finite and non-negative"));
            }
        }
        self.problem.validate()
    }

    pub fn trainable(&self) -> Trainable {
        Trainable {
            alpha: self.train_alpha && self.mode == MatrixMode::Lmmse,
            softness: self.train_softness,
        }
    }

    pub fn initial_params(&self) -> TpgParams {
        let alpha = self.init_alpha.unwrap_or(match self.problem {
            Problem::Mimo(c) => c.n as f64 * c.sigma_w2(),
            Problem::Toy(_) => 0.0,
        });
        let mut p = TpgParams::uniform(self.t_max, self.mode, self.init_gamma, self.init_theta, alpha);
        p.shared_softness = self.shared_softness;
        p
    }
}

/// Which parameter groups receive updates. Step sizes always do.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Trainable {
    pub alpha: bool,
    pub softness: bool,
}

impl Trainable {
    pub const ALL: Trainable = Trainable {
        alpha: true,
        softness: true,
    };
}

/// `D` transmissions through one channel matrix; samples are columns.
#[derive(Debug, Clone)]
pub struct TrainingBatch {
    pub h: DMatrix<f64>,
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
}

impl TrainingBatch {
    pub fn sample(source: &dyn InstanceSource, d: usize, rng: &mut dyn rand::RngCore) -> Self {
        let h = source.sample_matrix(rng);
        let (x, y) = source.sample_block(&h, d, rng);
        Self { h, x, y }
    }

    pub fn size(&self) -> usize {
        self.x.ncols()
    }

    /// The batch with every sample repeated twice.
    pub fn duplicated(&self) -> Self {
        let d = self.size();
        let twice = |m: &DMatrix<f64>| DMatrix::from_fn(m.nrows(), 2 * d, |i, k| m[(i, k % d)]);
        Self {
            h: self.h.clone(),
            x: twice(&self.x),
            y: twice(&self.y),
        }
    }
}

/// `D^-1 sum_i ||x_i - s_i||^2` with samples stored as columns.
pub fn squared_loss(x: &DMatrix<f64>, s: &DMatrix<f64>) -> Result<f64> {
    if x.shape() != s.shape() {
        return Err(Error::ShapeMismatch(format!(
            "targets are {:?} but outputs are {:?}",
            x.shape(),
            s.shape()
        )));
    }
    if x.ncols() == 0 {
        return Err(Error::ShapeMismatch("empty batch".into()));
    }
    Ok((x - s).norm_squared() / x.ncols() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientVector {
    pub d_gamma_raw: Vec<f64>,
    pub d_theta: Vec<f64>,
    pub d_alpha: f64,
}

impl GradientVector {
    pub fn zeros(t_max: usize) -> Self {
        Self {
            d_gamma_raw: vec![0.0; t_max],
            d_theta: vec![0.0; t_max],
            d_alpha: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.d_gamma_raw
            .iter()
            .chain(&self.d_theta)
            .chain(std::iter::once(&self.d_alpha))
            .all(|v| v.is_finite())
    }
}

/// Loss of the batch and its gradient.
#[derive(Debug, Clone)]
pub struct Backward {
    pub loss: f64,
    pub grad: GradientVector,
}

/// Batched loss through `t_run` layers, without the gradient.
pub fn batch_loss(p: &TpgParams, batch: &TrainingBatch, t_run: usize) -> Result<f64> {
    let est = p.estimator(&batch.h)?;
    let mut s = DMatrix::zeros(batch.h.ncols(), batch.size());
    for t in 0..t_run {
        let r = &s + (&est.w * (&batch.y - &batch.h * &s)) * p.step_size(t);
        let c = p.softness(t);
        s = r.map(|v| (v / c).tanh());
    }
    squared_loss(&batch.x, &s)
}

/// Exact gradient of the batch loss after `t_run` layers.
///
/// Layers past `t_run` get zero gradient. With shared softness the softness
/// gradient is summed into `d_theta[0]`. Frozen groups are zeroed.
pub fn backward(
    p: &TpgParams,
    batch: &TrainingBatch,
    t_run: usize,
    trainable: Trainable,
) -> Result<Backward> {
    assert!(t_run >= 1 && t_run <= p.t_max, "t_run must lie in 1..=t_max");
    let est = p.estimator(&batch.h)?;
    let h = &batch.h;
    let ht = h.transpose();
    let wt = est.w.transpose();
    let with_alpha = trainable.alpha && p.mode == MatrixMode::Lmmse;
    let d = batch.size();

    struct Cache {
        r: DMatrix<f64>,
        we: DMatrix<f64>,
        e: Option<DMatrix<f64>>,
        out: DMatrix<f64>,
    }

    let mut layers: Vec<Cache> = Vec::with_capacity(t_run);
    let mut s = DMatrix::zeros(h.ncols(), d);
    for t in 0..t_run {
        let e = &batch.y - h * &s;
        let we = &est.w * &e;
        let r = &s + &we * p.step_size(t);
        let c = p.softness(t);
        let out = r.map(|v| (v / c).tanh());
        s = out.clone();
        layers.push(Cache {
            r,
            we,
            e: with_alpha.then_some(e),
            out,
        });
    }

    let loss = squared_loss(&batch.x, &s)?;
    let mut grad = GradientVector::zeros(p.t_max);
    let mut s_bar = (&s - &batch.x) * (2.0 / d as f64);
    let gram_inv = est.gram_inv.as_ref();

    for t in (0..t_run).rev() {
        let cache = &layers[t];
        let c = p.softness(t);
        let gamma = p.step_size(t);
        // through tanh(u), u = r / c
        let u_bar = s_bar.zip_map(&cache.out, |g, o| g * (1.0 - o * o));
        let r_bar = &u_bar / c;

        if trainable.softness && p.theta[t].abs() > SOFTNESS_FLOOR {
            let c_bar = -u_bar.dot(&cache.r) / (c * c);
            grad.d_theta[t] = c_bar * p.theta[t].signum();
        }
        grad.d_gamma_raw[t] = r_bar.dot(&cache.we) * 2.0 * p.gamma_raw[t];

        if t == 0 && !with_alpha {
            break;
        }
        let wt_rbar = &wt * &r_bar;
        if let (true, Some(g), Some(e)) = (with_alpha, gram_inv, &cache.e) {
            // r^T (dW/da) e = -(W^T r)^T (G^-1 e)
            grad.d_alpha -= gamma * wt_rbar.dot(&(g * e));
        }
        if t > 0 {
            s_bar = r_bar - &ht * (wt_rbar * gamma);
        }
    }

    if p.shared_softness {
        let total: f64 = grad.d_theta.iter().sum();
        grad.d_theta.iter_mut().for_each(|g| *g = 0.0);
        grad.d_theta[0] = total;
    }
    Ok(Backward { loss, grad })
}

/// Adam moments for the `2T + 1` slots `[gamma_raw.., theta.., alpha]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(t_max: usize) -> Self {
        let slots = 2 * t_max + 1;
        Self {
            m: vec![0.0; slots],
            v: vec![0.0; slots],
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn reset(&mut self) {
        self.m.iter_mut().for_each(|m| *m = 0.0);
        self.v.iter_mut().for_each(|v| *v = 0.0);
        self.step = 0;
    }
}

/// One bias-corrected Adam update of every unfrozen slot.
///
/// `alpha` is kept non-negative so the Gram matrix stays positive definite.
pub fn adam_step(
    state: &mut AdamState,
    p: &mut TpgParams,
    g: &GradientVector,
    lr: f64,
    trainable: Trainable,
) {
    let t_max = p.t_max;
    assert_eq!(state.m.len(), 2 * t_max + 1, "optimizer state does not match the parameters");
    state.step += 1;
    let bc1 = 1.0 - state.beta1.powi(state.step as i32);
    let bc2 = 1.0 - state.beta2.powi(state.step as i32);
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let mut update = |slot: usize, value: &mut f64, grad: f64| {
        let m = &mut state.m[slot];
        let v = &mut state.v[slot];
        *m = b1 * *m + (1.0 - b1) * grad;
        *v = b2 * *v + (1.0 - b2) * grad * grad;
        *value -= lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
    };

    for t in 0..t_max {
        update(t, &mut p.gamma_raw[t], g.d_gamma_raw[t]);
    }
    if trainable.softness {
        let thetas = if p.shared_softness { 1 } else { t_max };
        for t in 0..thetas {
            update(t_max + t, &mut p.theta[t], g.d_theta[t]);
        }
        if p.shared_softness {
            let shared = p.theta[0];
            p.theta.iter_mut().for_each(|v| *v = shared);
        }
    }
    if trainable.alpha && p.mode == MatrixMode::Lmmse {
        update(2 * t_max, &mut p.alpha, g.d_alpha);
        p.alpha = p.alpha.max(0.0);
    }
}

/// Mean minibatch loss of one generation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationLoss {
    pub generation: usize,
    pub mean_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: TpgParams,
    pub loss_trace: Vec<GenerationLoss>,
}

/// Per-minibatch progress handed to an observer.
#[derive(Debug, Clone, Copy)]
pub struct Step<'a> {
    pub generation: usize,
    pub minibatch: usize,
    pub loss: f64,
    pub grad: &'a GradientVector,
}

/// Train with the generator seeded from `cfg.seed`.
pub fn incremental_train(cfg: &TrainConfig) -> Result<TrainOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    train_with(cfg, &mut rng, |_| {})
}

/// The full schedule, reporting every minibatch to `observe` before the
/// parameters are updated with that minibatch's gradient.
pub fn train_with(
    cfg: &TrainConfig,
    rng: &mut dyn rand::RngCore,
    mut observe: impl FnMut(&Step),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut params = cfg.initial_params();
    let trainable = cfg.trainable();
    let source = cfg.problem.source();
    let mut adam = AdamState::new(cfg.t_max);
    let mut loss_trace = Vec::new();
    let generations: Vec<usize> = if cfg.incremental {
        (1..=cfg.t_max).collect()
    } else {
        vec![cfg.t_max]
    };

    for generation in generations {
        if cfg.reset_optimizer_each_generation {
            adam.reset();
        }
        let mut total = 0.0;
        for k in 0..cfg.minibatches_per_generation {
            let batch = TrainingBatch::sample(source, cfg.batch_size, rng);
            let Backward { loss, grad } = backward(&params, &batch, generation, trainable)?;
            if !loss.is_finite() || !grad.is_finite() {
                return Err(Error::NonFinite(format!(
                    "loss or gradient in generation {generation}, minibatch {k}"
                )));
            }
            observe(&Step {
                generation,
                minibatch: k,
                loss,
                grad: &grad,
            });
            adam_step(&mut adam, &mut params, &grad, cfg.learning_rate, trainable);
            total += loss;
        }
        if cfg.minibatches_per_generation > 0 {
            let mean_loss = total / cfg.minibatches_per_generation as f64;
            log::debug!("generation {generation}: mean loss {mean_loss:.6e}");
            loss_trace.push(GenerationLoss {
                generation,
                mean_loss,
            });
        }
    }
    Ok(TrainOutcome { params, loss_trace })
}
