//! Trainable projected-gradient (TPG) detection for massive overloaded MIMO
//! channels.
//!
//! The crate is organised bottom-up:
//!
//! * [`channel`] draws Rayleigh-fading instances and maps them onto the
//!   equivalent real-valued model `y = Hx + w`.
//! * [`linalg`] builds the linear filters used inside the gradient step
//!   (matched filter, pseudo-inverse, LMMSE-like matrix).
//! * [`detector`] runs the unrolled projected-gradient recursion.
//! * [`train`] backpropagates through that recursion and tunes its scalar
//!   parameters with Adam, one layer-generation at a time.
//! * [`baselines`] holds the MMSE, plain PG and IW-SOAV detectors.
//! * [`harness`] estimates BER and MSE curves, persists parameters and drives
//!   JSON-configured experiments.

pub mod baselines;
pub mod channel;
pub mod detector;
mod error;
pub mod harness;
pub mod linalg;
pub mod train;

pub use error::{Error, Result};

pub use baselines::{IwsoavConfig, WsoavWeights};
pub use channel::{ChannelConfig, ComplexChannel, InstanceSource, RealChannel, ToyConfig};
pub use detector::{TpgParams, Trajectory};
pub use linalg::{LinearEstimator, MatrixMode};
pub use train::{AdamState, GradientVector, TrainConfig};
