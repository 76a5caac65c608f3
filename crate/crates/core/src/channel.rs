//! Flat Rayleigh-fading MIMO instances and their real-valued equivalent.
//!
//! A complex `m x n` channel `H~` acting on QPSK symbols is rewritten as the
//! real `2m x 2n` system
//!
//! ```text
//! [Re y]   [Re H  -Im H] [Re x]   [Re w]
//! [Im y] = [Im H   Re H] [Im x] + [Im w]
//! ```
//!
//! so that every detector works on bipolar vectors `x` in `{-1, +1}^N`.
//! Each complex gain has real and imaginary parts of variance 1/2, and each
//! real noise component has variance `sigma_w2 / 2`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Noise variance `sigma_w^2` such that `SNR = 2n / sigma_w^2`.
pub fn sigma_from_snr(n: usize, snr_db: f64) -> f64 {
    2.0 * n as f64 / 10f64.powf(snr_db / 10.0)
}

/// Independent generator for work item `index` under `seed`.
///
/// ChaCha keeps 2^64 streams per key; item `index` always sees the same
/// sequence regardless of which thread runs it or in what order.
pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexChannel {
    pub h_tilde: DMatrix<Complex64>,
}

impl ComplexChannel {
    pub fn n(&self) -> usize {
        self.h_tilde.ncols()
    }

    pub fn m(&self) -> usize {
        self.h_tilde.nrows()
    }

    pub fn realify(&self) -> DMatrix<f64> {
        realify_matrix(&self.h_tilde)
    }
}

/// Real-valued channel instance together with the transmitted vector.
#[derive(Debug, Clone, PartialEq)]
pub struct RealChannel {
    pub h: DMatrix<f64>,
    pub x_true: DVector<f64>,
    pub y: DVector<f64>,
    /// Noise variance per complex dimension; each real component carries half.
    pub sigma_w2: f64,
    pub snr_db: f64,
}

impl RealChannel {
    /// `y - H x_true`, i.e. the realised noise.
    pub fn noise(&self) -> DVector<f64> {
        &self.y - &self.h * &self.x_true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    /// Transmit antennas.
    pub n: usize,
    /// Receive antennas.
    pub m: usize,
    pub snr_db: f64,
    #[serde(default)]
    pub seed: u64,
}

impl ChannelConfig {
    pub fn new(n: usize, m: usize, snr_db: f64, seed: u64) -> Self {
        Self { n, m, snr_db, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::config("n", "must be at least 1"));
        }
        if self.m == 0 {
            return Err(Error::config("m", "must be at least 1"));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::config("snr_db", "must be finite"));
        }
        let s = self.sigma_w2();
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::config("snr_db", "derived noise variance must be positive"));
        }
        Ok(())
    }

    pub fn sigma_w2(&self) -> f64 {
        sigma_from_snr(self.n, self.snr_db)
    }
}

/// The square Gaussian toy problem `y = Ax + w`, `A` with i.i.d. N(0,1)
/// entries and `w` with per-component variance `sigma2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyConfig {
    pub n: usize,
    pub sigma2: f64,
}

impl ToyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::config("n", "must be at least 1"));
        }
        if !(self.sigma2 >= 0.0 && self.sigma2.is_finite()) {
            return Err(Error::config("sigma2", "must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Anything that can produce random linear-observation instances.
pub trait InstanceSource: Sync {
    /// Length of the transmitted bipolar vector.
    fn signal_len(&self) -> usize;

    /// Length of the observation.
    fn observation_len(&self) -> usize;

    /// Noise variance per real component.
    fn noise_variance(&self) -> f64;

    /// Divisor used when reporting `E||x - x_hat||^2 / divisor` in dB.
    fn mse_divisor(&self) -> f64;

    fn sample_matrix(&self, rng: &mut dyn rand::RngCore) -> DMatrix<f64>;

    /// Draw `x` and noise for a fixed matrix.
    fn sample_given(&self, h: DMatrix<f64>, rng: &mut dyn rand::RngCore) -> RealChannel;

    fn sample(&self, rng: &mut dyn rand::RngCore) -> RealChannel {
        let h = self.sample_matrix(rng);
        self.sample_given(h, rng)
    }

    /// `d` transmissions through one matrix, one per column: `(X, Y)`.
    fn sample_block(
        &self,
        h: &DMatrix<f64>,
        d: usize,
        rng: &mut dyn rand::RngCore,
    ) -> (DMatrix<f64>, DMatrix<f64>) {
        let std = self.noise_variance().sqrt();
        let mut x = DMatrix::zeros(h.ncols(), d);
        let mut y = DMatrix::zeros(h.nrows(), d);
        for k in 0..d {
            let (xk, yk) = draw_observation(h, std, rng);
            x.set_column(k, &xk);
            y.set_column(k, &yk);
        }
        (x, y)
    }
}

impl InstanceSource for ChannelConfig {
    fn signal_len(&self) -> usize {
        2 * self.n
    }

    fn observation_len(&self) -> usize {
        2 * self.m
    }

    fn noise_variance(&self) -> f64 {
        self.sigma_w2() / 2.0
    }

    fn mse_divisor(&self) -> f64 {
        self.n as f64
    }

    fn sample_matrix(&self, rng: &mut dyn rand::RngCore) -> DMatrix<f64> {
        sample_complex_channel(self.n, self.m, rng).realify()
    }

    fn sample_given(&self, h: DMatrix<f64>, rng: &mut dyn rand::RngCore) -> RealChannel {
        let sigma_w2 = self.sigma_w2();
        let (x, y) = draw_observation(&h, (sigma_w2 / 2.0).sqrt(), rng);
        RealChannel {
            h,
            x_true: x,
            y,
            sigma_w2,
            snr_db: self.snr_db,
        }
    }
}

impl InstanceSource for ToyConfig {
    fn signal_len(&self) -> usize {
        self.n
    }

    fn observation_len(&self) -> usize {
        self.n
    }

    fn noise_variance(&self) -> f64 {
        self.sigma2
    }

    fn mse_divisor(&self) -> f64 {
        self.n as f64
    }

    fn sample_matrix(&self, rng: &mut dyn rand::RngCore) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |_, _| rng.sample::<f64, _>(StandardNormal))
    }

    fn sample_given(&self, h: DMatrix<f64>, rng: &mut dyn rand::RngCore) -> RealChannel {
        let (x, y) = draw_observation(&h, self.sigma2.sqrt(), rng);
        RealChannel {
            h,
            x_true: x,
            y,
            sigma_w2: 2.0 * self.sigma2,
            snr_db: 10.0 * (self.n as f64 / self.sigma2).log10(),
        }
    }
}

fn draw_observation(
    h: &DMatrix<f64>,
    noise_std: f64,
    rng: &mut dyn rand::RngCore,
) -> (DVector<f64>, DVector<f64>) {
    let x = random_bipolar(h.ncols(), rng);
    let mut y = h * &x;
    for yi in y.iter_mut() {
        *yi += noise_std * rng.sample::<f64, _>(StandardNormal);
    }
    (x, y)
}

/// Uniform vector over `{-1, +1}^len`.
pub fn random_bipolar<R: Rng + ?Sized>(len: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(len, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 })
}

/// `m x n` matrix of circular Gaussian gains with unit total variance.
pub fn sample_complex_channel<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> ComplexChannel {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    // row-major draw order so the sequence does not depend on storage layout
    let mut entries = Vec::with_capacity(n * m);
    for _ in 0..m * n {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        entries.push(Complex64::new(scale * re, scale * im));
    }
    ComplexChannel {
        h_tilde: DMatrix::from_row_slice(m, n, &entries),
    }
}

/// `[[Re, -Im], [Im, Re]]` block form of a complex matrix.
pub fn realify_matrix(c: &DMatrix<Complex64>) -> DMatrix<f64> {
    let (m, n) = c.shape();
    DMatrix::from_fn(2 * m, 2 * n, |i, j| {
        let z = c[(i % m, j % n)];
        match (i < m, j < n) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    })
}

/// `[Re; Im]` stacking of a complex vector.
pub fn realify_vector(c: &DVector<Complex64>) -> DVector<f64> {
    let k = c.len();
    DVector::from_fn(2 * k, |i, _| if i < k { c[i].re } else { c[i - k].im })
}

/// Draw `H~` with a QPSK vector plus noise; returns the real-valued instance.
pub fn sample_transmission<R: Rng>(cfg: &ChannelConfig, rng: &mut R) -> RealChannel {
    cfg.sample(rng)
}

/// True when `h` has the real-equivalent block structure exactly.
pub fn has_complex_block_structure(h: &DMatrix<f64>) -> bool {
    let (rows, cols) = h.shape();
    if rows % 2 != 0 || cols % 2 != 0 {
        return false;
    }
    let (m, n) = (rows / 2, cols / 2);
    (0..m).all(|i| {
        (0..n).all(|j| h[(i, j)] == h[(i + m, j + n)] && h[(i, j + n)] == -h[(i + m, j)])
    })
}
