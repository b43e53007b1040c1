//! Batch normalization over (batch x position) per channel.

use super::batch::FeatureBatch;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormLayer {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub epsilon: f64,
    /// Weight of the previous running statistic in the exponential update.
    pub momentum: f64,
}

/// Intermediates needed by the backward pass.
#[derive(Debug, Clone)]
pub struct BnCache {
    pub(crate) xhat: Vec<f64>,
    pub(crate) inv_std: Vec<f64>,
}

impl BatchNormLayer {
    pub fn new(channels: usize, epsilon: f64, momentum: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::Config(format!("bn epsilon must be positive, got {epsilon}")));
        }
        if !(momentum > 0.0 && momentum < 1.0) {
            return Err(Error::Config(format!("bn momentum must lie in (0, 1), got {momentum}")));
        }
        Ok(Self {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            epsilon,
            momentum,
        })
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    fn check_channels(&self, x: &FeatureBatch) -> Result<()> {
        if x.channels() != self.channels() {
            return Err(Error::Dimension(format!(
                "bn input has {} channels, layer expects {}",
                x.channels(),
                self.channels()
            )));
        }
        Ok(())
    }

    /// Normalize with batch statistics (biased variance), update the running
    /// statistics, and return the affine output plus the backward cache.
    pub fn forward_train(&mut self, x: &FeatureBatch) -> Result<(FeatureBatch, BnCache)> {
        self.check_channels(x)?;
        if x.batch() < 2 {
            return Err(Error::Config(
                "batch normalization needs a batch of at least 2 in training mode".into(),
            ));
        }
        let ch = self.channels();
        let m = (x.batch() * x.length()) as f64;

        let mut mean = vec![0.0; ch];
        for frame in x.data().chunks_exact(ch) {
            for (s, v) in mean.iter_mut().zip(frame) {
                *s += v;
            }
        }
        for s in mean.iter_mut() {
            *s /= m;
        }

        let mut var = vec![0.0; ch];
        for frame in x.data().chunks_exact(ch) {
            for (c, (s, v)) in var.iter_mut().zip(frame).enumerate() {
                let d = v - mean[c];
                *s += d * d;
            }
        }
        for s in var.iter_mut() {
            *s /= m;
        }

        let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + self.epsilon).sqrt()).collect();

        let mut xhat = vec![0.0; x.data().len()];
        let mut out = FeatureBatch::zeros(x.batch(), x.length(), ch);
        for ((xh, ov), frame) in xhat
            .chunks_exact_mut(ch)
            .zip(out.data_mut().chunks_exact_mut(ch))
            .zip(x.data().chunks_exact(ch))
        {
            for c in 0..ch {
                let h = (frame[c] - mean[c]) * inv_std[c];
                xh[c] = h;
                ov[c] = self.gamma[c] * h + self.beta[c];
            }
        }

        for c in 0..ch {
            self.running_mean[c] = self.momentum * self.running_mean[c] + (1.0 - self.momentum) * mean[c];
            self.running_var[c] = self.momentum * self.running_var[c] + (1.0 - self.momentum) * var[c];
        }

        Ok((out, BnCache { xhat, inv_std }))
    }

    /// Normalize with the accumulated running statistics (inference mode).
    pub fn forward_infer(&self, x: &FeatureBatch) -> Result<FeatureBatch> {
        self.check_channels(x)?;
        let ch = self.channels();
        let inv_std: Vec<f64> = self
            .running_var
            .iter()
            .map(|&v| 1.0 / (v + self.epsilon).sqrt())
            .collect();
        let mut out = FeatureBatch::zeros(x.batch(), x.length(), ch);
        for (ov, frame) in out
            .data_mut()
            .chunks_exact_mut(ch)
            .zip(x.data().chunks_exact(ch))
        {
            for c in 0..ch {
                ov[c] = self.gamma[c] * (frame[c] - self.running_mean[c]) * inv_std[c] + self.beta[c];
            }
        }
        Ok(out)
    }

    /// Backward through the batch-statistics normalization:
    /// dx = gamma * inv_std * (g - mean(g) - xhat * mean(g * xhat)).
    pub fn backward(
        &self,
        cache: &BnCache,
        g_out: &FeatureBatch,
    ) -> Result<(Vec<f64>, Vec<f64>, FeatureBatch)> {
        self.check_channels(g_out)?;
        if cache.xhat.len() != g_out.data().len() {
            return Err(Error::Dimension("bn cache does not match gradient shape".into()));
        }
        let ch = self.channels();
        let m = (g_out.batch() * g_out.length()) as f64;

        let mut g_beta = vec![0.0; ch];
        let mut g_gamma = vec![0.0; ch];
        for (gf, xh) in g_out.data().chunks_exact(ch).zip(cache.xhat.chunks_exact(ch)) {
            for c in 0..ch {
                g_beta[c] += gf[c];
                g_gamma[c] += gf[c] * xh[c];
            }
        }

        let mut gx = FeatureBatch::zeros(g_out.batch(), g_out.length(), ch);
        for ((gxf, gf), xh) in gx
            .data_mut()
            .chunks_exact_mut(ch)
            .zip(g_out.data().chunks_exact(ch))
            .zip(cache.xhat.chunks_exact(ch))
        {
            for c in 0..ch {
                gxf[c] = self.gamma[c]
                    * cache.inv_std[c]
                    * (gf[c] - g_beta[c] / m - xh[c] * g_gamma[c] / m);
            }
        }
        Ok((g_gamma, g_beta, gx))
    }
}
