//! Transmit-side frame construction.
//!
//! A frame is `[Ng zero-padded guard | length-N training sequence | Nd data
//! samples]`, M = N + Ng + Nd samples total. The training sequence is an
//! even-length Zadoff-Chu sequence transmitted directly in the time domain;
//! the data portion carries QPSK symbols through a unitary inverse DFT.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::ops::Deref;

use num_complex::Complex64;
use rand::Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// All scalar frame parameters in one validated record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameSpec {
    /// Subcarrier count, also the training-sequence length.
    pub n: usize,
    /// Guard-interval length (zero padding ahead of the training sequence).
    pub ng: usize,
    /// Data-portion length.
    pub nd: usize,
    /// Number of correlation lags evaluated by the coarse stage.
    pub nlag: usize,
    /// Zadoff-Chu root; odd and coprime with `n`.
    pub zc_root: usize,
    /// Master seed for anything randomized that is keyed off this spec.
    pub rng_seed: u64,
}

impl FrameSpec {
    pub fn new(
        n: usize,
        ng: usize,
        nd: usize,
        nlag: usize,
        zc_root: usize,
        rng_seed: u64,
    ) -> Result<Self> {
        let spec = Self { n, ng, nd, nlag, zc_root, rng_seed };
        spec.validate()?;
        Ok(spec)
    }

    /// Receive-window length M = N + Ng + Nd.
    pub fn m(&self) -> usize {
        self.n + self.ng + self.nd
    }

    /// Observation-window length Nu = N + Ng.
    pub fn nu(&self) -> usize {
        self.n + self.ng
    }

    /// Length of the real-valued network input, 2(Nu - 1).
    pub fn feature_len(&self) -> usize {
        2 * (self.nu() - 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Config(format!("n must be at least 2, got {}", self.n)));
        }
        if self.ng < 2 {
            return Err(Error::Config(format!("ng must be at least 2, got {}", self.ng)));
        }
        let max_lag = self.m() - self.n + 1;
        if self.nlag == 0 || self.nlag > max_lag {
            return Err(Error::Config(format!(
                "nlag must lie in [1, {}] (= M - N + 1) so every lag fits the receive window, got {}",
                max_lag, self.nlag
            )));
        }
        if self.zc_root % 2 == 0 {
            return Err(Error::Config(format!(
                "zc_root must be odd, got {}",
                self.zc_root
            )));
        }
        if gcd(self.zc_root, self.n) != 1 {
            return Err(Error::Config(format!(
                "zc_root must be coprime with n: gcd({}, {}) != 1",
                self.zc_root, self.n
            )));
        }
        Ok(())
    }
}

impl Default for FrameSpec {
    fn default() -> Self {
        Self { n: 128, ng: 32, nd: 128, nlag: 160, zc_root: 25, rng_seed: 1 }
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Contiguous vector of complex baseband samples.
///
/// Construction rejects non-finite samples; emptiness is allowed so a zero
/// data portion (`nd = 0`) stays representable.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSequence {
    samples: Vec<Complex64>,
}

impl ComplexSequence {
    pub fn new(samples: Vec<Complex64>) -> Result<Self> {
        if samples.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::InvalidData(
                "complex sequence contains a non-finite sample".into(),
            ));
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }
}

impl Deref for ComplexSequence {
    type Target = [Complex64];

    fn deref(&self) -> &[Complex64] {
        &self.samples
    }
}

/// Generate the length-N training sequence s_n = exp(-j pi r n^2 / N).
///
/// The quadratic phase index is reduced modulo 2N in integer arithmetic, so
/// samples stay exact for large n (the formula is N-periodic for even N).
pub fn generate_zc(spec: &FrameSpec) -> Result<ComplexSequence> {
    spec.validate()?;
    let two_n = 2 * spec.n as u64;
    let root = spec.zc_root as u64;
    let samples = (0..spec.n as u64)
        .map(|i| {
            let q = root.wrapping_mul(i.wrapping_mul(i)) % two_n;
            Complex64::from_polar(1.0, -PI * q as f64 / spec.n as f64)
        })
        .collect();
    ComplexSequence::new(samples)
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn transform(input: &ComplexSequence, inverse: bool) -> Result<ComplexSequence> {
    if input.is_empty() {
        return Err(Error::Dimension("transform input must be non-empty".into()));
    }
    let n = input.len();
    let mut buf = input.samples().to_vec();
    PLANNER.with(|p| {
        let mut planner = p.borrow_mut();
        let fft = if inverse {
            planner.plan_fft_inverse(n)
        } else {
            planner.plan_fft_forward(n)
        };
        fft.process(&mut buf);
    });
    // Unitary scaling in both directions.
    let scale = 1.0 / (n as f64).sqrt();
    for v in &mut buf {
        *v *= scale;
    }
    ComplexSequence::new(buf)
}

/// Unitary inverse transform: x_n = (1/sqrt(N)) sum_k X_k exp(+j 2 pi k n / N).
pub fn idft(freq_symbols: &ComplexSequence) -> Result<ComplexSequence> {
    transform(freq_symbols, true)
}

/// Unitary forward transform, inverse of [`idft`].
pub fn dft(time_samples: &ComplexSequence) -> Result<ComplexSequence> {
    transform(time_samples, false)
}

/// Draw Nd i.i.d. unit-magnitude QPSK frequency symbols and move them to the
/// time domain with a size-Nd unitary inverse transform (average power 1).
pub fn generate_data_symbols<R: Rng>(spec: &FrameSpec, rng: &mut R) -> Result<ComplexSequence> {
    if spec.nd == 0 {
        return ComplexSequence::new(Vec::new());
    }
    let a = std::f64::consts::FRAC_1_SQRT_2;
    let freq: Vec<Complex64> = (0..spec.nd)
        .map(|_| {
            let bits: u8 = rng.random_range(0..4);
            Complex64::new(
                if bits & 1 == 0 { a } else { -a },
                if bits & 2 == 0 { a } else { -a },
            )
        })
        .collect();
    idft(&ComplexSequence::new(freq)?)
}

/// Concatenate `[Ng zeros | training | data]`; total length M, training
/// sequence starting at frame index Ng.
pub fn build_frame(
    spec: &FrameSpec,
    training: &ComplexSequence,
    data: &ComplexSequence,
) -> Result<ComplexSequence> {
    if training.len() != spec.n {
        return Err(Error::Dimension(format!(
            "training sequence length {} does not match n = {}",
            training.len(),
            spec.n
        )));
    }
    if data.len() != spec.nd {
        return Err(Error::Dimension(format!(
            "data length {} does not match nd = {}",
            data.len(),
            spec.nd
        )));
    }
    let mut frame = vec![Complex64::new(0.0, 0.0); spec.m()];
    frame[spec.ng..spec.ng + spec.n].copy_from_slice(training.samples());
    frame[spec.ng + spec.n..].copy_from_slice(data.samples());
    ComplexSequence::new(frame)
}

/// Training sequence plus fresh data symbols assembled into one frame.
pub fn synthesize_frame<R: Rng>(spec: &FrameSpec, rng: &mut R) -> Result<ComplexSequence> {
    let training = generate_zc(spec)?;
    let data = generate_data_symbols(spec, rng)?;
    build_frame(spec, &training, &data)
}
