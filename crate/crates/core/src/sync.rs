//! Coarse timing acquisition.
//!
//! The timing metric is the sliding cross-correlation of the received window
//! against the training sequence, equivalent to multiplying by the conjugate
//! transpose of the cyclic-shift matrix whose d-th column is the training
//! sequence delayed by d. The metric's peak gives the initial auxiliary
//! point, which narrows the first-path search to an Ng-wide window.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::frame::{ComplexSequence, FrameSpec};

/// Cross-correlation values and their magnitudes over all evaluated lags.
#[derive(Debug, Clone, PartialEq)]
pub struct TimingMetric {
    values: Vec<Complex64>,
    magnitudes: Vec<f64>,
}

impl TimingMetric {
    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn magnitudes(&self) -> &[f64] {
        &self.magnitudes
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Test helper for building a metric from raw magnitudes.
    pub fn from_values(values: Vec<Complex64>) -> Self {
        let magnitudes = values.iter().map(|v| v.norm()).collect();
        Self { values, magnitudes }
    }
}

/// Coarse estimate plus the narrowed first-path search window
/// `[max(tau_init - Ng, 0), tau_init]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InitEstimate {
    pub tau_init: usize,
    pub window_lo: usize,
    pub window_hi: usize,
}

/// Sliding correlation values[d] = sum_n conj(s_n) y(n + d) for d in [0, nlag).
pub fn cross_correlate(
    y: &ComplexSequence,
    s: &ComplexSequence,
    nlag: usize,
) -> Result<TimingMetric> {
    cross_correlate_instrumented(y, s, nlag).map(|(metric, _)| metric)
}

/// Same as [`cross_correlate`], also returning the number of complex
/// multiplications actually executed (the coarse-stage cost metric).
pub fn cross_correlate_instrumented(
    y: &ComplexSequence,
    s: &ComplexSequence,
    nlag: usize,
) -> Result<(TimingMetric, u64)> {
    let n = s.len();
    if n == 0 {
        return Err(Error::Dimension("training sequence must be non-empty".into()));
    }
    if y.len() < n {
        return Err(Error::Dimension(format!(
            "received window ({} samples) shorter than the training sequence ({n})",
            y.len()
        )));
    }
    let max_lag = y.len() - n + 1;
    if nlag == 0 || nlag > max_lag {
        return Err(Error::Dimension(format!(
            "nlag = {nlag} outside [1, {max_lag}] for window {} and sequence {n}",
            y.len()
        )));
    }
    let mut mults = 0u64;
    let mut values = Vec::with_capacity(nlag);
    for d in 0..nlag {
        let mut acc = Complex64::new(0.0, 0.0);
        for (sn, yn) in s.iter().zip(&y[d..d + n]) {
            acc += sn.conj() * yn;
            mults += 1;
        }
        values.push(acc);
    }
    Ok((TimingMetric::from_values(values), mults))
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Pick the metric peak (ties to the smallest index) and derive the narrowed
/// search window.
pub fn acquire_initial(metric: &TimingMetric, spec: &FrameSpec) -> Result<InitEstimate> {
    if metric.is_empty() {
        return Err(Error::Dimension("timing metric is empty".into()));
    }
    let tau_init = argmax(metric.magnitudes());
    Ok(InitEstimate {
        tau_init,
        window_lo: tau_init.saturating_sub(spec.ng),
        window_hi: tau_init,
    })
}

/// Coarse-only estimate: the lag of the strongest correlation peak. Used as
/// the comparison baseline that locks onto the strongest path.
pub fn strongest_path_baseline(metric: &TimingMetric) -> usize {
    argmax(metric.magnitudes())
}

/// First lag inside the narrowed window whose magnitude crosses
/// `alpha * |peak|`; falls back to the peak itself when nothing qualifies.
pub fn threshold_first_path_baseline(
    metric: &TimingMetric,
    est: &InitEstimate,
    alpha: f64,
) -> usize {
    debug_assert!(alpha > 0.0 && alpha <= 1.0);
    let mags = metric.magnitudes();
    let bar = alpha * mags[est.tau_init];
    (est.window_lo..=est.window_hi)
        .find(|&d| mags[d] >= bar)
        .unwrap_or(est.tau_init)
}
