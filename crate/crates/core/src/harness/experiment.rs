//! JSON-configured experiment pipelines producing CSV tables.

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::ber::{ber_estimate, BerPoint, StopRule};
use super::mse::{mse_curve, MseSeries};
use super::params::{load_params, save_params, ParamsMeta};
use crate::baselines::{iwsoav_detect, mmse_detect, plain_pg, IwsoavConfig};
use crate::channel::{ChannelConfig, RealChannel, ToyConfig};
use crate::detector::{detect_with, tpg_forward, TpgParams};
use crate::linalg::MatrixMode;
use crate::train::{incremental_train, GenerationLoss, Problem, TrainConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Experiment {
    Train(TrainExperiment),
    BerSweep(BerSweep),
    MseCurve(MseCurveExperiment),
    Toy(ToyExperiment),
}

impl Experiment {
    pub fn seed(&self) -> u64 {
        match self {
            Experiment::Train(t) => t.train.seed,
            Experiment::BerSweep(b) => b.seed,
            Experiment::MseCurve(c) => c.seed,
            Experiment::Toy(t) => t.seed,
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        match self {
            Experiment::Train(t) => t.train.seed = seed,
            Experiment::BerSweep(b) => b.seed = seed,
            Experiment::MseCurve(c) => c.seed = seed,
            Experiment::Toy(t) => t.seed = seed,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::Train(_) => "train",
            Experiment::BerSweep(_) => "ber-sweep",
            Experiment::MseCurve(_) => "mse-curve",
            Experiment::Toy(_) => "toy",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Experiment::Train(t) => t.train.validate(),
            Experiment::BerSweep(b) => b.validate(),
            Experiment::MseCurve(c) => c.validate(),
            Experiment::Toy(t) => t.validate(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainExperiment {
    pub train: TrainConfig,
}

/// Training hyperparameters with the problem supplied by the experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub t_max: usize,
    pub batch_size: usize,
    pub minibatches_per_generation: usize,
    pub learning_rate: f64,
    pub mode: MatrixMode,
    pub shared_softness: bool,
    pub train_alpha: bool,
    pub train_softness: bool,
    pub init_gamma: f64,
    pub init_theta: f64,
    pub init_alpha: Option<f64>,
    pub incremental: bool,
    /// Defaults to the experiment seed plus one.
    pub seed: Option<u64>,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let d = TrainConfig::detector(ChannelConfig::new(1, 1, 0.0, 0), 50);
        Self {
            t_max: d.t_max,
            batch_size: d.batch_size,
            minibatches_per_generation: d.minibatches_per_generation,
            learning_rate: d.learning_rate,
            mode: d.mode,
            shared_softness: d.shared_softness,
            train_alpha: d.train_alpha,
            train_softness: d.train_softness,
            init_gamma: d.init_gamma,
            init_theta: d.init_theta,
            init_alpha: d.init_alpha,
            incremental: d.incremental,
            seed: None,
        }
    }
}

impl TrainSettings {
    pub fn to_config(&self, problem: Problem, experiment_seed: u64) -> TrainConfig {
        TrainConfig {
            t_max: self.t_max,
            batch_size: self.batch_size,
            minibatches_per_generation: self.minibatches_per_generation,
            learning_rate: self.learning_rate,
            problem,
            mode: self.mode,
            shared_softness: self.shared_softness,
            train_alpha: self.train_alpha,
            train_softness: self.train_softness,
            init_gamma: self.init_gamma,
            init_theta: self.init_theta,
            init_alpha: self.init_alpha,
            incremental: self.incremental,
            reset_optimizer_each_generation: true,
            seed: self.seed.unwrap_or(experiment_seed.wrapping_add(1)),
        }
    }
}

/// Trained parameters come from a file or are trained on the spot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TpgSource {
    Params(PathBuf),
    Train(TrainSettings),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DetectorSpec {
    Mmse {
        #[serde(default)]
        id: Option<String>,
    },
    Iwsoav {
        #[serde(default)]
        id: Option<String>,
        #[serde(default)]
        config: IwsoavConfig,
        /// `[snr_db, alpha]` pairs overriding `config.alpha` at matching SNRs.
        #[serde(default)]
        alpha_by_snr: Vec<[f64; 2]>,
    },
    Tpg {
        #[serde(default)]
        id: Option<String>,
        source: TpgSource,
    },
}

impl DetectorSpec {
    pub fn id(&self) -> String {
        match self {
            DetectorSpec::Mmse { id } => id.clone().unwrap_or_else(|| "mmse".into()),
            DetectorSpec::Iwsoav { id, config, .. } => id
                .clone()
                .unwrap_or_else(|| format!("iwsoav-L{}", config.l_outer)),
            DetectorSpec::Tpg { id, .. } => id.clone().unwrap_or_else(|| "tpg".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BerSweep {
    pub n: usize,
    pub m: usize,
    pub snr_db: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub stop: StopRule,
    pub detectors: Vec<DetectorSpec>,
}

impl BerSweep {
    fn validate(&self) -> Result<()> {
        if self.snr_db.is_empty() {
            return Err(Error::config("snr_db", "needs at least one value"));
        }
        if self.detectors.is_empty() {
            return Err(Error::config("detectors", "needs at least one detector"));
        }
        for &snr in &self.snr_db {
            ChannelConfig::new(self.n, self.m, snr, self.seed).validate()?;
        }
        if self.stop.max_trials == 0 {
            return Err(Error::config("stop.max_trials", "must be at least 1"));
        }
        for (k, d) in self.detectors.iter().enumerate() {
            if let DetectorSpec::Iwsoav { config, .. } = d {
                config
                    .validate()
                    .map_err(|e| prefix_field(e, &format!("detectors[{k}].config")))?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CurveAlgorithm {
    Tpg { source: TpgSource },
    PlainPg { gamma: f64, xi: f64, t_max: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MseCurveExperiment {
    pub problem: Problem,
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
    pub algorithm: CurveAlgorithm,
}

impl MseCurveExperiment {
    fn validate(&self) -> Result<()> {
        self.problem.validate()?;
        if self.samples == 0 {
            return Err(Error::config("samples", "must be at least 1"));
        }
        if let CurveAlgorithm::PlainPg { t_max, xi, .. } = self.algorithm {
            if t_max == 0 {
                return Err(Error::config("algorithm.t_max", "must be at least 1"));
            }
            if !(xi > 0.0) {
                return Err(Error::config("algorithm.xi", "must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaGrid {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl GammaGrid {
    /// Log-spaced values from `min` to `max`.
    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.min];
        }
        let (lo, hi) = (self.min.ln(), self.max.ln());
        (0..self.points)
            .map(|k| (lo + (hi - lo) * k as f64 / (self.points - 1) as f64).exp())
            .collect()
    }
}

/// Trained TPG against a grid-searched plain PG on the square toy problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyExperiment {
    pub n: usize,
    pub sigma2: f64,
    pub t_max: usize,
    /// Softness of the trained algorithm.
    pub tpg_xi: f64,
    /// Softness of the plain PG baseline.
    pub pg_xi: f64,
    pub train_softness: bool,
    pub init_gamma: f64,
    pub batch_size: usize,
    pub minibatches_per_generation: usize,
    pub learning_rate: f64,
    pub gamma_grid: GammaGrid,
    pub samples: usize,
    /// Iteration at which the grid search picks its best step.
    pub eval_t: usize,
    pub seed: u64,
}

impl Default for ToyExperiment {
    fn default() -> Self {
        Self {
            n: 64,
            sigma2: 4.0 * 64.0 / 1000.0,
            t_max: 20,
            tpg_xi: 8.0,
            pg_xi: 6.0,
            train_softness: false,
            init_gamma: 5e-3,
            batch_size: 200,
            minibatches_per_generation: 100,
            learning_rate: 2e-4,
            gamma_grid: GammaGrid {
                min: 1e-4,
                max: 3e-2,
                points: 20,
            },
            samples: 10_000,
            eval_t: 10,
            seed: 0,
        }
    }
}

impl ToyExperiment {
    fn validate(&self) -> Result<()> {
        ToyConfig {
            n: self.n,
            sigma2: self.sigma2,
        }
        .validate()?;
        if self.eval_t == 0 || self.eval_t > self.t_max {
            return Err(Error::config("eval_t", "must lie in 1..=t_max"));
        }
        let g = self.gamma_grid;
        if !(g.min > 0.0 && g.max >= g.min && g.points >= 1) {
            return Err(Error::config("gamma_grid", "needs 0 < min <= max and at least one point"));
        }
        if !(self.tpg_xi > 0.0 && self.pg_xi > 0.0) {
            return Err(Error::config("tpg_xi", "softness values must be positive"));
        }
        if self.samples == 0 {
            return Err(Error::config("samples", "must be at least 1"));
        }
        Ok(())
    }

    pub fn toy(&self) -> ToyConfig {
        ToyConfig {
            n: self.n,
            sigma2: self.sigma2,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let mut cfg = TrainConfig::toy(self.toy(), self.t_max, self.init_gamma, self.tpg_xi);
        cfg.batch_size = self.batch_size;
        cfg.minibatches_per_generation = self.minibatches_per_generation;
        cfg.learning_rate = self.learning_rate;
        cfg.train_softness = self.train_softness;
        cfg.seed = self.seed.wrapping_add(1);
        cfg
    }
}

/// Outcome of [`run_toy`].
#[derive(Debug, Clone)]
pub struct ToyReport {
    pub params: TpgParams,
    pub tpg: MseSeries,
    /// `(gamma, curve)` for every grid point.
    pub grid: Vec<(f64, MseSeries)>,
    /// Index into `grid` with the lowest MSE at `eval_t`.
    pub best: usize,
    pub loss_trace: Vec<GenerationLoss>,
}

pub fn run_toy(exp: &ToyExperiment) -> Result<ToyReport> {
    exp.validate()?;
    let toy = exp.toy();
    let trained = incremental_train(&exp.train_config())?;
    let tpg = mse_curve(tpg_iterates(&trained.params), &toy, exp.samples, exp.seed)?;
    let mut grid = Vec::new();
    for gamma in exp.gamma_grid.values() {
        let (xi, t_max) = (exp.pg_xi, exp.t_max);
        let curve = mse_curve(
            move |ch: &RealChannel| Ok(plain_pg(&ch.h, &ch.y, gamma, xi, t_max).s),
            &toy,
            exp.samples,
            exp.seed,
        )?;
        grid.push((gamma, curve));
    }
    let best = (0..grid.len())
        .min_by(|&a, &b| grid[a].1.at(exp.eval_t).total_cmp(&grid[b].1.at(exp.eval_t)))
        .expect("grid is non-empty");
    Ok(ToyReport {
        params: trained.params,
        tpg,
        grid,
        best,
        loss_trace: trained.loss_trace,
    })
}

/// Soft iterates of the detector, for MSE curves.
pub fn tpg_iterates(p: &TpgParams) -> impl Fn(&RealChannel) -> Result<Vec<DVector<f64>>> + Sync + '_ {
    move |ch| {
        let est = p.estimator(&ch.h)?;
        Ok(tpg_forward(p, &est, &ch.h, &ch.y, p.t_max, true).s)
    }
}

/// A named CSV (or parameter) file produced by an experiment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvOutput {
    pub file_name: String,
    pub body: String,
}

/// Parse an experiment, reporting the offending line or field.
pub fn parse_experiment(text: &str) -> Result<Experiment> {
    let exp: Experiment = serde_json::from_str(text).map_err(|e| {
        // errors inside tagged enums carry no position
        let at = if e.line() == 0 {
            "experiment".to_string()
        } else {
            format!("line {} column {}", e.line(), e.column())
        };
        Error::config(at, e.to_string())
    })?;
    exp.validate()?;
    Ok(exp)
}

/// Parse after applying `path=value` overrides such as `train.t_max=30`
/// or `snr_db=[0,5,10]`. Values are read as JSON, falling back to a string.
pub fn parse_experiment_with(text: &str, overrides: &[String]) -> Result<Experiment> {
    if overrides.is_empty() {
        return parse_experiment(text);
    }
    let mut doc: Value = serde_json::from_str(text)
        .map_err(|e| Error::config(format!("line {} column {}", e.line(), e.column()), e.to_string()))?;
    for item in overrides {
        let (path, raw) = item
            .split_once('=')
            .ok_or_else(|| Error::config(item.clone(), "override must look like path=value"))?;
        let new = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut slot = &mut doc;
        for key in path.split('.') {
            slot = match slot {
                Value::Object(map) => map.entry(key).or_insert(Value::Null),
                Value::Array(items) => key
                    .parse::<usize>()
                    .ok()
                    .and_then(|i| items.get_mut(i))
                    .ok_or_else(|| Error::config(path, "index out of range"))?,
                _ => return Err(Error::config(path, "does not name a field")),
            };
        }
        *slot = new;
    }
    parse_experiment(&doc.to_string())
}

fn prefix_field(e: Error, prefix: &str) -> Error {
    match e {
        Error::InvalidConfig { field, reason } => Error::InvalidConfig {
            field: format!("{prefix}.{field}"),
            reason,
        },
        other => other,
    }
}

fn preamble(exp: &Experiment) -> String {
    let canonical = serde_json::to_string(exp).expect("experiment serialises");
    let hash = hex::encode(Sha256::digest(canonical.as_bytes()));
    format!(
        "# tpg-detector {}\n# git: {}\n# seed: {}\n# config-sha256: {}\n",
        env!("CARGO_PKG_VERSION"),
        option_env!("TPG_GIT_DESCRIBE").unwrap_or("unknown"),
        exp.seed(),
        hash
    )
}

fn csv_body<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Serialize)]
struct CurveRow {
    t: usize,
    mse_db: f64,
}

fn curve_csv(exp: &Experiment, series: &MseSeries) -> Result<String> {
    let rows = series
        .mse_db
        .iter()
        .enumerate()
        .map(|(k, &mse_db)| CurveRow { t: k + 1, mse_db });
    Ok(preamble(exp) + &csv_body(rows)?)
}

fn toy_snr_db(toy: &ToyConfig) -> f64 {
    10.0 * (toy.n as f64 / toy.sigma2).log10()
}

fn resolve_tpg(source: &TpgSource, problem: Problem, seed: u64, base: &Path) -> Result<TpgParams> {
    match source {
        TpgSource::Params(path) => {
            let text = std::fs::read_to_string(base.join(path))?;
            Ok(load_params(&text)?.0)
        }
        TpgSource::Train(settings) => Ok(incremental_train(&settings.to_config(problem, seed))?.params),
    }
}

/// Run a parsed experiment. Relative parameter paths resolve against `base`.
pub fn run_experiment(exp: &Experiment, base: &Path) -> Result<Vec<CsvOutput>> {
    exp.validate()?;
    match exp {
        Experiment::Train(t) => {
            let out = incremental_train(&t.train)?;
            let meta = match t.train.problem {
                Problem::Mimo(c) => ParamsMeta {
                    n: c.n,
                    m: c.m,
                    snr_db: c.snr_db,
                    seed: t.train.seed,
                },
                Problem::Toy(toy) => ParamsMeta {
                    n: toy.n,
                    m: toy.n,
                    snr_db: toy_snr_db(&toy),
                    seed: t.train.seed,
                },
            };
            Ok(vec![
                CsvOutput {
                    file_name: "loss_trace.csv".into(),
                    body: preamble(exp) + &csv_body(&out.loss_trace)?,
                },
                CsvOutput {
                    file_name: "params.json".into(),
                    body: save_params(&out.params, &meta)?,
                },
            ])
        }
        Experiment::BerSweep(sweep) => {
            let mut rows: Vec<BerPoint> = Vec::new();
            for spec in &sweep.detectors {
                let id = spec.id();
                for &snr in &sweep.snr_db {
                    let cfg = ChannelConfig::new(sweep.n, sweep.m, snr, sweep.seed);
                    rows.push(run_ber_point(spec, &id, &cfg, sweep, base)?);
                }
            }
            Ok(vec![CsvOutput {
                file_name: "ber.csv".into(),
                body: preamble(exp) + &csv_body(&rows)?,
            }])
        }
        Experiment::MseCurve(c) => {
            let source = c.problem.source();
            let series = match &c.algorithm {
                CurveAlgorithm::Tpg { source: tpg } => {
                    let p = resolve_tpg(tpg, c.problem, c.seed, base)?;
                    mse_curve(tpg_iterates(&p), source, c.samples, c.seed)?
                }
                &CurveAlgorithm::PlainPg { gamma, xi, t_max } => mse_curve(
                    |ch: &RealChannel| Ok(plain_pg(&ch.h, &ch.y, gamma, xi, t_max).s),
                    source,
                    c.samples,
                    c.seed,
                )?,
            };
            Ok(vec![CsvOutput {
                file_name: "mse.csv".into(),
                body: curve_csv(exp, &series)?,
            }])
        }
        Experiment::Toy(t) => {
            let report = run_toy(t)?;
            #[derive(Serialize)]
            struct GridRow {
                gamma: f64,
                mse_db: f64,
            }
            let grid_rows = report.grid.iter().map(|(gamma, s)| GridRow {
                gamma: *gamma,
                mse_db: s.at(t.eval_t),
            });
            let meta = ParamsMeta {
                n: t.n,
                m: t.n,
                snr_db: toy_snr_db(&t.toy()),
                seed: t.seed,
            };
            Ok(vec![
                CsvOutput {
                    file_name: "toy_tpg_mse.csv".into(),
                    body: curve_csv(exp, &report.tpg)?,
                },
                CsvOutput {
                    file_name: "toy_pg_best_mse.csv".into(),
                    body: curve_csv(exp, &report.grid[report.best].1)?,
                },
                CsvOutput {
                    file_name: "toy_pg_grid.csv".into(),
                    body: preamble(exp) + &csv_body(grid_rows)?,
                },
                CsvOutput {
                    file_name: "toy_params.json".into(),
                    body: save_params(&report.params, &meta)?,
                },
            ])
        }
    }
}

fn run_ber_point(
    spec: &DetectorSpec,
    id: &str,
    cfg: &ChannelConfig,
    sweep: &BerSweep,
    base: &Path,
) -> Result<BerPoint> {
    match spec {
        DetectorSpec::Mmse { .. } => ber_estimate(
            id,
            |ch| mmse_detect(&ch.h, &ch.y, ch.sigma_w2),
            cfg,
            sweep.stop,
        ),
        DetectorSpec::Iwsoav {
            config,
            alpha_by_snr,
            ..
        } => {
            let mut icfg = config.clone();
            if let Some([_, alpha]) = alpha_by_snr.iter().find(|[s, _]| (s - cfg.snr_db).abs() < 1e-9) {
                icfg.alpha = *alpha;
            }
            ber_estimate(
                id,
                |ch| iwsoav_detect(&ch.h, &ch.y, ch.sigma_w2, &icfg),
                cfg,
                sweep.stop,
            )
        }
        DetectorSpec::Tpg { source, .. } => {
            let p = resolve_tpg(source, Problem::Mimo(*cfg), sweep.seed, base)?;
            ber_estimate(
                id,
                |ch| Ok(detect_with(&p, &p.estimator(&ch.h)?, &ch.h, &ch.y)),
                cfg,
                sweep.stop,
            )
        }
    }
}
