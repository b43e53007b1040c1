//! Multipath Rayleigh fading channel with exponential power-delay profile.
//!
//! A realization shifts the frame by a random timing offset, sums L
//! sample-spaced taps with circularly-symmetric complex Gaussian gains, and
//! adds white Gaussian noise. The tap profile is normalized to unit average
//! power, and the SNR reference is the unit average power of the frame's
//! non-zero portion, so the configured SNR is the received SNR.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{ComplexSequence, FrameSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    /// Number of distinguishable paths.
    pub l: usize,
    /// Exponential decay factor of the power-delay profile.
    pub eta: f64,
    /// Signal-to-noise ratio in dB (`f64::INFINITY` disables noise).
    pub snr_db: f64,
    /// Largest random timing offset applied to the whole frame.
    pub tau_max: usize,
}

impl ChannelSpec {
    pub fn new(l: usize, eta: f64, snr_db: f64, tau_max: usize) -> Result<Self> {
        let spec = Self { l, eta, snr_db, tau_max };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.l == 0 {
            return Err(Error::Config("path count l must be at least 1".into()));
        }
        if !(self.eta > 0.0) {
            return Err(Error::Config(format!("eta must be positive, got {}", self.eta)));
        }
        if self.snr_db.is_nan() {
            return Err(Error::Config("snr_db must not be NaN".into()));
        }
        Ok(())
    }

    /// Joint constraint with the frame: all resolvable paths must fall
    /// inside the guard so the first-path offset fits the label range.
    pub fn validate_with(&self, frame: &FrameSpec) -> Result<()> {
        self.validate()?;
        if self.l > frame.ng {
            return Err(Error::Config(format!(
                "path count l = {} exceeds guard length ng = {}",
                self.l, frame.ng
            )));
        }
        Ok(())
    }
}

impl Default for ChannelSpec {
    fn default() -> Self {
        Self { l: 20, eta: 0.2, snr_db: 12.0, tau_max: 24 }
    }
}

/// One drawn channel: tap gains, tap delays, frame timing offset, and the
/// noise variance implied by the configured SNR.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub gains: Vec<Complex64>,
    pub delays: Vec<usize>,
    /// Timing offset of the whole frame inside the receive window.
    pub tau: usize,
    pub noise_var: f64,
}

/// Normalized exponential power-delay profile p_l = exp(-eta l) / sum_m exp(-eta m).
pub fn power_delay_profile(l: usize, eta: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..l).map(|i| (-eta * i as f64).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|p| p / total).collect()
}

/// Noise variance for a given SNR against a reference signal power.
pub fn snr_to_noise_var(snr_db: f64, signal_power: f64) -> f64 {
    signal_power / 10f64.powf(snr_db / 10.0)
}

/// Draw tap gains (Rayleigh magnitudes via complex Gaussians), a uniform
/// timing offset, and the noise variance for one trial.
pub fn draw_channel<R: Rng>(cspec: &ChannelSpec, rng: &mut R) -> ChannelRealization {
    let pdp = power_delay_profile(cspec.l, cspec.eta);
    let gains = pdp
        .iter()
        .map(|&p| {
            let s = (p / 2.0).sqrt();
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(s * re, s * im)
        })
        .collect();
    let delays = (0..cspec.l).collect();
    let tau = rng.random_range(0..=cspec.tau_max);
    ChannelRealization {
        gains,
        delays,
        tau,
        noise_var: snr_to_noise_var(cspec.snr_db, 1.0),
    }
}

/// Received signal y(n) = sum_l h_l x(n - tau - tau_l) + w(n), with x taken
/// as zero outside its support and w complex white Gaussian.
pub fn apply_channel<R: Rng>(
    frame: &ComplexSequence,
    real: &ChannelRealization,
    spec: &FrameSpec,
    rng: &mut R,
) -> Result<ComplexSequence> {
    let m = spec.m();
    if frame.len() != m {
        return Err(Error::Dimension(format!(
            "frame length {} does not match M = {}",
            frame.len(),
            m
        )));
    }
    if real.gains.len() != real.delays.len() {
        return Err(Error::Dimension("gain/delay count mismatch".into()));
    }
    if real.delays.iter().any(|&d| real.tau + d >= m) {
        return Err(Error::Dimension(
            "path delay plus timing offset exceeds the receive window".into(),
        ));
    }
    let mut y = vec![Complex64::new(0.0, 0.0); m];
    for (h, &d) in real.gains.iter().zip(&real.delays) {
        let shift = real.tau + d;
        for n in shift..m {
            y[n] += h * frame[n - shift];
        }
    }
    if real.noise_var > 0.0 {
        let s = (real.noise_var / 2.0).sqrt();
        for v in y.iter_mut() {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *v += Complex64::new(s * re, s * im);
        }
    }
    ComplexSequence::new(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;

    fn identity_realization() -> ChannelRealization {
        ChannelRealization {
            gains: vec![Complex64::new(1.0, 0.0)],
            delays: vec![0],
            tau: 0,
            noise_var: 0.0,
        }
    }

    #[test]
    fn pdp_single_tap_is_unit() {
        assert_eq!(power_delay_profile(1, 0.3), vec![1.0]);
    }

    #[test]
    fn pdp_ratio_matches_decay_factor() {
        let p = power_delay_profile(20, 0.2);
        assert!((p[0] / p[1] - 0.2f64.exp()).abs() < 1e-12);
        assert!((p[0] / p[1] - 1.2214).abs() < 1e-4);
    }

    #[test]
    fn pdp_sums_to_one() {
        for (l, eta) in [(1usize, 0.5), (3, 0.1), (20, 0.2), (32, 1.7)] {
            let sum: f64 = power_delay_profile(l, eta).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12, "l={l} eta={eta} sum={sum}");
        }
    }

    #[test]
    fn snr_conversion_values() {
        assert!((snr_to_noise_var(0.0, 1.0) - 1.0).abs() < 1e-15);
        assert!((snr_to_noise_var(10.0, 1.0) - 0.1).abs() < 1e-15);
        assert!((snr_to_noise_var(12.0, 0.5) - 0.031548).abs() < 1e-6);
        assert_eq!(snr_to_noise_var(f64::INFINITY, 1.0), 0.0);
    }

    #[test]
    fn channel_power_is_normalized_on_average() {
        let cspec = ChannelSpec::new(20, 0.2, 10.0, 24).unwrap();
        let mut rng = seeded_rng(123);
        let draws = 100_000;
        let mut total = 0.0;
        for _ in 0..draws {
            let r = draw_channel(&cspec, &mut rng);
            total += r.gains.iter().map(|g| g.norm_sqr()).sum::<f64>();
        }
        let mean = total / draws as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean channel power {mean}");
    }

    #[test]
    fn draw_has_consecutive_delays_and_bounded_tau() {
        let cspec = ChannelSpec::new(5, 0.4, 0.0, 7).unwrap();
        let mut rng = seeded_rng(2);
        for _ in 0..200 {
            let r = draw_channel(&cspec, &mut rng);
            assert_eq!(r.delays, vec![0, 1, 2, 3, 4]);
            assert!(r.tau <= 7);
        }
    }

    #[test]
    fn identity_channel_is_identity_map() {
        let spec = FrameSpec::new(16, 4, 8, 13, 5, 0).unwrap();
        let mut rng = seeded_rng(8);
        let frame = crate::frame::synthesize_frame(&spec, &mut rng).unwrap();
        let y = apply_channel(&frame, &identity_realization(), &spec, &mut rng).unwrap();
        assert_eq!(y, frame);
    }

    #[test]
    fn pure_delay_shifts_and_zero_fills() {
        let spec = FrameSpec::new(16, 4, 8, 13, 5, 0).unwrap();
        let mut rng = seeded_rng(8);
        let frame = crate::frame::synthesize_frame(&spec, &mut rng).unwrap();
        let real = ChannelRealization { tau: 5, ..identity_realization() };
        let y = apply_channel(&frame, &real, &spec, &mut rng).unwrap();
        assert!(y[..5].iter().all(|v| v.norm() == 0.0));
        for n in 5..spec.m() {
            assert_eq!(y[n], frame[n - 5]);
        }
    }

    #[test]
    fn two_tap_impulse_response() {
        let spec = FrameSpec::new(2, 2, 1, 2, 1, 0).unwrap();
        let mut frame = vec![Complex64::new(0.0, 0.0); spec.m()];
        frame[0] = Complex64::new(1.0, 0.0);
        let frame = ComplexSequence::new(frame).unwrap();
        let real = ChannelRealization {
            gains: vec![Complex64::new(1.0, 0.0), Complex64::new(0.5, 0.0)],
            delays: vec![0, 1],
            tau: 0,
            noise_var: 0.0,
        };
        let mut rng = seeded_rng(0);
        let y = apply_channel(&frame, &real, &spec, &mut rng).unwrap();
        assert!((y[0] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        assert!((y[1] - Complex64::new(0.5, 0.0)).norm() < 1e-15);
        assert!(y[2..].iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn channel_is_linear_in_the_frame() {
        let spec = FrameSpec::new(16, 4, 4, 9, 5, 0).unwrap();
        let mut rng = seeded_rng(21);
        let f1 = crate::frame::synthesize_frame(&spec, &mut rng).unwrap();
        let f2 = crate::frame::synthesize_frame(&spec, &mut rng).unwrap();
        let cspec = ChannelSpec::new(3, 0.5, f64::INFINITY, 2).unwrap();
        let real = draw_channel(&cspec, &mut rng);
        let (a, b) = (Complex64::new(2.0, -1.0), Complex64::new(-0.5, 0.25));
        let combo = ComplexSequence::new(
            f1.iter().zip(f2.iter()).map(|(x, y)| a * x + b * y).collect(),
        )
        .unwrap();
        let y_combo = apply_channel(&combo, &real, &spec, &mut rng).unwrap();
        let y1 = apply_channel(&f1, &real, &spec, &mut rng).unwrap();
        let y2 = apply_channel(&f2, &real, &spec, &mut rng).unwrap();
        for i in 0..spec.m() {
            assert!((y_combo[i] - (a * y1[i] + b * y2[i])).norm() < 1e-12);
        }
    }

    #[test]
    fn delay_past_window_is_rejected() {
        let spec = FrameSpec::new(4, 2, 2, 3, 3, 0).unwrap();
        let frame = ComplexSequence::new(vec![Complex64::new(0.0, 0.0); spec.m()]).unwrap();
        let real = ChannelRealization {
            gains: vec![Complex64::new(1.0, 0.0)],
            delays: vec![spec.m()],
            tau: 0,
            noise_var: 0.0,
        };
        let mut rng = seeded_rng(0);
        assert!(matches!(
            apply_channel(&frame, &real, &spec, &mut rng),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn apply_channel_deterministic_in_rng() {
        let spec = FrameSpec::new(16, 4, 8, 13, 5, 0).unwrap();
        let cspec = ChannelSpec::default();
        let frame = crate::frame::synthesize_frame(&spec, &mut seeded_rng(4)).unwrap();
        let run = |seed: u64| {
            let mut rng = seeded_rng(seed);
            let real = draw_channel(&ChannelSpec { l: 4, ..cspec }, &mut rng);
            apply_channel(&frame, &real, &spec, &mut rng).unwrap()
        };
        assert_eq!(run(99), run(99));
    }
}
