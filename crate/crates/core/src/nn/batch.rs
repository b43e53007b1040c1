//! Contiguous activation storage for a batch of 1-D feature maps.

use crate::error::{Error, Result};

/// A batch of feature maps stored as `[(b * length + t) * channels + c]`,
/// i.e. sample-major with interleaved channels. The interleaved layout makes
/// a valid 1-D convolution a sliding contiguous dot product.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBatch {
    data: Vec<f64>,
    batch: usize,
    length: usize,
    channels: usize,
}

impl FeatureBatch {
    pub fn zeros(batch: usize, length: usize, channels: usize) -> Self {
        Self { data: vec![0.0; batch * length * channels], batch, length, channels }
    }

    pub fn from_vec(data: Vec<f64>, batch: usize, length: usize, channels: usize) -> Result<Self> {
        if data.len() != batch * length * channels {
            return Err(Error::Dimension(format!(
                "buffer of {} values cannot hold {batch} x {length} x {channels}",
                data.len()
            )));
        }
        Ok(Self { data, batch, length, channels })
    }

    /// Single-sample, single-channel map (the network input shape).
    pub fn single(features: &[f64]) -> Self {
        Self { data: features.to_vec(), batch: 1, length: features.len(), channels: 1 }
    }

    /// Reinterpret the same buffer with a new (length, channels) split;
    /// used to flatten conv activations into dense-layer rows.
    pub fn reshaped(&self, length: usize, channels: usize) -> Result<Self> {
        Self::from_vec(self.data.clone(), self.batch, length, channels)
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Values of one sample: a contiguous `length * channels` slice.
    pub fn sample(&self, b: usize) -> &[f64] {
        let stride = self.length * self.channels;
        &self.data[b * stride..(b + 1) * stride]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, b: usize, t: usize, c: usize) -> f64 {
        self.data[(b * self.length + t) * self.channels + c]
    }

    pub fn set(&mut self, b: usize, t: usize, c: usize, v: f64) {
        self.data[(b * self.length + t) * self.channels + c] = v;
    }
}
