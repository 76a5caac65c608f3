//! Monte-Carlo evaluation, parameter files and JSON-driven experiments.
//!
//! Every trial draws its randomness from its own ChaCha stream keyed by
//! `(seed, trial index)`, so estimates do not depend on thread count.

mod ber;
mod experiment;
mod mse;
mod params;

pub use ber::{ber_estimate, BerPoint, StopRule};
pub use experiment::{
    parse_experiment, parse_experiment_with, run_experiment, run_toy, tpg_iterates, BerSweep, CsvOutput, CurveAlgorithm,
    DetectorSpec, Experiment, GammaGrid, MseCurveExperiment, ToyExperiment, ToyReport, TpgSource,
    TrainExperiment, TrainSettings,
};
pub use mse::{mse_curve, mse_db, MseSeries, MSE_FLOOR_DB};
pub use params::{load_params, save_params, ParamsFile, ParamsMeta, PARAMS_VERSION};
