//! The first-path refinement network.
//!
//! Architecture, for guard length Ng and training-sequence length N:
//!
//! | layer   | output          | filter | count | activation |
//! |---------|-----------------|--------|-------|------------|
//! | input   | 2(Nu-1) x 1     |        |       |            |
//! | conv 1  | (2Ng-1) x 4     | 2N     | 4     |            |
//! | bn 1    | (2Ng-1) x 4     |        |       | ReLU       |
//! | conv 2  | Ng x 4          | Ng     | 4     |            |
//! | bn 2    | Ng x 4          |        |       | ReLU       |
//! | flatten | 4Ng             |        |       |            |
//! | dense   | Ng              |        |       | sigmoid    |
//! | output  | Ng              |        |       | softmax    |
//!
//! with Nu = N + Ng. The output layer carries no weights: softmax is applied
//! directly to the Ng sigmoid outputs of the dense layer. Flattening is
//! position-major (channel index fastest), which is simply the native
//! activation layout. All arithmetic is in f64.

use rand::Rng;
use rand_distr::StandardNormal;

use super::batch::FeatureBatch;
use super::batchnorm::{BatchNormLayer, BnCache};
use super::conv::Conv1dLayer;
use super::dense::DenseLayer;
use crate::error::{Error, Result};

/// Channel count of both convolution layers.
pub const CHANNELS: usize = 4;

/// Default batch-norm epsilon and running-statistics momentum.
pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

/// All layer sizes, derived from (N, Ng).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetworkDims {
    pub n: usize,
    pub ng: usize,
}

impl NetworkDims {
    pub fn new(n: usize, ng: usize) -> Result<Self> {
        if n < 2 || ng < 2 {
            return Err(Error::Config(format!(
                "network dimensions need n >= 2 and ng >= 2, got n = {n}, ng = {ng}"
            )));
        }
        Ok(Self { n, ng })
    }

    pub fn from_frame(spec: &crate::frame::FrameSpec) -> Self {
        Self { n: spec.n, ng: spec.ng }
    }

    /// Real-valued input length 2(Nu - 1).
    pub fn input_len(&self) -> usize {
        2 * (self.n + self.ng - 1)
    }

    pub fn conv1_kernel(&self) -> usize {
        2 * self.n
    }

    /// First convolution output length, 2Ng - 1.
    pub fn conv1_out_len(&self) -> usize {
        self.input_len() - self.conv1_kernel() + 1
    }

    pub fn conv2_kernel(&self) -> usize {
        self.ng
    }

    /// Second convolution output length, Ng.
    pub fn conv2_out_len(&self) -> usize {
        self.conv1_out_len() - self.conv2_kernel() + 1
    }

    /// Flattened dense input, 4Ng.
    pub fn flatten_len(&self) -> usize {
        self.conv2_out_len() * CHANNELS
    }

    /// Network output length, Ng.
    pub fn output_len(&self) -> usize {
        self.ng
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    pub dims: NetworkDims,
    pub conv1: Conv1dLayer,
    pub bn1: BatchNormLayer,
    pub conv2: Conv1dLayer,
    pub bn2: BatchNormLayer,
    pub dense: DenseLayer,
}

/// One buffer per trainable parameter array, in the canonical order used by
/// the optimizer, the gradient check and the serialized format.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub conv1_kernel: Vec<f64>,
    pub conv1_bias: Vec<f64>,
    pub bn1_gamma: Vec<f64>,
    pub bn1_beta: Vec<f64>,
    pub conv2_kernel: Vec<f64>,
    pub conv2_bias: Vec<f64>,
    pub bn2_gamma: Vec<f64>,
    pub bn2_beta: Vec<f64>,
    pub dense_weights: Vec<f64>,
    pub dense_bias: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(model: &NetworkModel) -> Self {
        Self {
            conv1_kernel: vec![0.0; model.conv1.kernel.len()],
            conv1_bias: vec![0.0; model.conv1.bias.len()],
            bn1_gamma: vec![0.0; model.bn1.gamma.len()],
            bn1_beta: vec![0.0; model.bn1.beta.len()],
            conv2_kernel: vec![0.0; model.conv2.kernel.len()],
            conv2_bias: vec![0.0; model.conv2.bias.len()],
            bn2_gamma: vec![0.0; model.bn2.gamma.len()],
            bn2_beta: vec![0.0; model.bn2.beta.len()],
            dense_weights: vec![0.0; model.dense.weights.len()],
            dense_bias: vec![0.0; model.dense.bias.len()],
        }
    }

    pub fn slices(&self) -> [(&'static str, &[f64]); 10] {
        [
            ("conv1.kernel", &self.conv1_kernel),
            ("conv1.bias", &self.conv1_bias),
            ("bn1.gamma", &self.bn1_gamma),
            ("bn1.beta", &self.bn1_beta),
            ("conv2.kernel", &self.conv2_kernel),
            ("conv2.bias", &self.conv2_bias),
            ("bn2.gamma", &self.bn2_gamma),
            ("bn2.beta", &self.bn2_beta),
            ("dense.weights", &self.dense_weights),
            ("dense.bias", &self.dense_bias),
        ]
    }

    pub fn slices_mut(&mut self) -> [(&'static str, &mut [f64]); 10] {
        [
            ("conv1.kernel", self.conv1_kernel.as_mut_slice()),
            ("conv1.bias", self.conv1_bias.as_mut_slice()),
            ("bn1.gamma", self.bn1_gamma.as_mut_slice()),
            ("bn1.beta", self.bn1_beta.as_mut_slice()),
            ("conv2.kernel", self.conv2_kernel.as_mut_slice()),
            ("conv2.bias", self.conv2_bias.as_mut_slice()),
            ("bn2.gamma", self.bn2_gamma.as_mut_slice()),
            ("bn2.beta", self.bn2_beta.as_mut_slice()),
            ("dense.weights", self.dense_weights.as_mut_slice()),
            ("dense.bias", self.dense_bias.as_mut_slice()),
        ]
    }
}

/// Intermediates retained by a training-mode forward pass.
pub struct ForwardCache {
    pub(crate) input: FeatureBatch,
    pub(crate) bn1: BnCache,
    pub(crate) act1: FeatureBatch,
    pub(crate) bn2: BnCache,
    pub(crate) act2: FeatureBatch,
    pub(crate) sigmoid_out: Vec<f64>,
    pub(crate) softmax_out: Vec<f64>,
    pub(crate) batch: usize,
}

fn relu(mut x: FeatureBatch) -> FeatureBatch {
    for v in x.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    x
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_rows(x: &mut [f64], dim: usize) {
    for row in x.chunks_exact_mut(dim) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

/// Mean categorical cross-entropy over one-hot (or soft) target rows.
pub fn cross_entropy_loss(outputs: &[f64], targets: &[f64], batch: usize, dim: usize) -> f64 {
    debug_assert_eq!(outputs.len(), batch * dim);
    debug_assert_eq!(targets.len(), batch * dim);
    let mut loss = 0.0;
    for (o, t) in outputs.chunks_exact(dim).zip(targets.chunks_exact(dim)) {
        for (ov, tv) in o.iter().zip(t) {
            if *tv != 0.0 {
                loss -= tv * ov.max(1e-300).ln();
            }
        }
    }
    loss / batch as f64
}

/// Index of the largest entry; ties go to the smallest index.
pub fn argmax_ties_first(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

impl NetworkModel {
    /// Zero-weight model (batch-norm at identity); useful as a fixed point
    /// in tests and as the allocation template.
    pub fn zeroed(dims: NetworkDims) -> Self {
        Self {
            dims,
            conv1: Conv1dLayer::zeros(dims.conv1_kernel(), 1, CHANNELS),
            bn1: BatchNormLayer::new(CHANNELS, BN_EPSILON, BN_MOMENTUM).expect("valid defaults"),
            conv2: Conv1dLayer::zeros(dims.conv2_kernel(), CHANNELS, CHANNELS),
            bn2: BatchNormLayer::new(CHANNELS, BN_EPSILON, BN_MOMENTUM).expect("valid defaults"),
            dense: DenseLayer::zeros(dims.flatten_len(), dims.output_len()),
        }
    }

    /// Random initialization: zero-mean Gaussian conv kernels with variance
    /// 2/fan_in, uniform Glorot dense weights, zero biases, identity batch
    /// norm. Deterministic in the generator state.
    pub fn init<R: Rng>(dims: NetworkDims, rng: &mut R) -> Self {
        let mut model = Self::zeroed(dims);
        let c1_std = (2.0 / (model.conv1.kernel_size * model.conv1.in_channels) as f64).sqrt();
        for w in model.conv1.kernel.iter_mut() {
            *w = c1_std * rng.sample::<f64, _>(StandardNormal);
        }
        let c2_std = (2.0 / (model.conv2.kernel_size * model.conv2.in_channels) as f64).sqrt();
        for w in model.conv2.kernel.iter_mut() {
            *w = c2_std * rng.sample::<f64, _>(StandardNormal);
        }
        let limit = (6.0 / (model.dense.in_dim + model.dense.out_dim) as f64).sqrt();
        for w in model.dense.weights.iter_mut() {
            *w = limit * (2.0 * rng.random::<f64>() - 1.0);
        }
        model
    }

    fn check_input(&self, x: &FeatureBatch) -> Result<()> {
        if x.length() != self.dims.input_len() || x.channels() != 1 {
            return Err(Error::Dimension(format!(
                "network input must be {} x 1, got {} x {}",
                self.dims.input_len(),
                x.length(),
                x.channels()
            )));
        }
        if x.batch() == 0 {
            return Err(Error::Dimension("empty batch".into()));
        }
        Ok(())
    }

    /// Training-mode forward pass: batch-norm uses batch statistics and
    /// updates its running statistics. Returns softmax outputs (batch x Ng,
    /// each row positive and summing to one) plus the backward cache.
    pub fn forward_training(&mut self, x: &FeatureBatch) -> Result<(Vec<f64>, ForwardCache)> {
        self.check_input(x)?;
        let batch = x.batch();
        let c1 = self.conv1.forward(x)?;
        let (b1, bn1_cache) = self.bn1.forward_train(&c1)?;
        let act1 = relu(b1);
        let c2 = self.conv2.forward(&act1)?;
        let (b2, bn2_cache) = self.bn2.forward_train(&c2)?;
        let act2 = relu(b2);
        let dense_out = self.dense.forward(act2.data(), batch)?;
        let sigmoid_out: Vec<f64> = dense_out.iter().map(|&v| sigmoid(v)).collect();
        let mut softmax_out = sigmoid_out.clone();
        softmax_rows(&mut softmax_out, self.dims.output_len());
        let cache = ForwardCache {
            input: x.clone(),
            bn1: bn1_cache,
            act1,
            bn2: bn2_cache,
            act2,
            sigmoid_out,
            softmax_out: softmax_out.clone(),
            batch,
        };
        Ok((softmax_out, cache))
    }

    /// Inference-mode forward pass over a batch: batch-norm uses running
    /// statistics; the model is untouched.
    pub fn forward_inference(&self, x: &FeatureBatch) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let batch = x.batch();
        let act1 = relu(self.bn1.forward_infer(&self.conv1.forward(x)?)?);
        let act2 = relu(self.bn2.forward_infer(&self.conv2.forward(&act1)?)?);
        let dense_out = self.dense.forward(act2.data(), batch)?;
        let mut out: Vec<f64> = dense_out.iter().map(|&v| sigmoid(v)).collect();
        softmax_rows(&mut out, self.dims.output_len());
        Ok(out)
    }

    /// Single-sample inference.
    pub fn infer(&self, features: &[f64]) -> Result<Vec<f64>> {
        self.forward_inference(&FeatureBatch::single(features))
    }

    /// Gradients of the mean cross-entropy loss with respect to every
    /// trainable parameter, for the batch recorded in `cache`.
    pub fn backward(&self, cache: &ForwardCache, targets: &[f64]) -> Result<Gradients> {
        let ng = self.dims.output_len();
        let batch = cache.batch;
        if targets.len() != batch * ng {
            return Err(Error::Dimension(format!(
                "targets of {} values cannot hold {batch} rows of {ng}",
                targets.len()
            )));
        }

        // softmax + cross-entropy: dL/dz = (O - T) / B, then through the
        // sigmoid: dL/da = dL/dz * z(1 - z)
        let inv_b = 1.0 / batch as f64;
        let g_dense_out: Vec<f64> = cache
            .softmax_out
            .iter()
            .zip(targets)
            .zip(&cache.sigmoid_out)
            .map(|((o, t), z)| (o - t) * inv_b * z * (1.0 - z))
            .collect();

        let (g_dense_w, g_dense_b, g_flat) =
            self.dense.backward(cache.act2.data(), &g_dense_out, batch)?;

        let mut g_act2 = FeatureBatch::from_vec(
            g_flat,
            batch,
            self.dims.conv2_out_len(),
            CHANNELS,
        )?;
        for (g, a) in g_act2.data_mut().iter_mut().zip(cache.act2.data()) {
            if *a <= 0.0 {
                *g = 0.0;
            }
        }
        let (g_bn2_gamma, g_bn2_beta, g_conv2_out) = self.bn2.backward(&cache.bn2, &g_act2)?;
        let (g_conv2_k, g_conv2_b, g_act1) =
            self.conv2.backward(&cache.act1, &g_conv2_out, true)?;

        let mut g_act1 = g_act1.expect("input gradient requested");
        for (g, a) in g_act1.data_mut().iter_mut().zip(cache.act1.data()) {
            if *a <= 0.0 {
                *g = 0.0;
            }
        }
        let (g_bn1_gamma, g_bn1_beta, g_conv1_out) = self.bn1.backward(&cache.bn1, &g_act1)?;
        let (g_conv1_k, g_conv1_b, _) = self.conv1.backward(&cache.input, &g_conv1_out, false)?;

        Ok(Gradients {
            conv1_kernel: g_conv1_k,
            conv1_bias: g_conv1_b,
            bn1_gamma: g_bn1_gamma,
            bn1_beta: g_bn1_beta,
            conv2_kernel: g_conv2_k,
            conv2_bias: g_conv2_b,
            bn2_gamma: g_bn2_gamma,
            bn2_beta: g_bn2_beta,
            dense_weights: g_dense_w,
            dense_bias: g_dense_b,
        })
    }

    /// Trainable parameter arrays in canonical order.
    pub fn param_slices(&self) -> [(&'static str, &[f64]); 10] {
        [
            ("conv1.kernel", &self.conv1.kernel),
            ("conv1.bias", &self.conv1.bias),
            ("bn1.gamma", &self.bn1.gamma),
            ("bn1.beta", &self.bn1.beta),
            ("conv2.kernel", &self.conv2.kernel),
            ("conv2.bias", &self.conv2.bias),
            ("bn2.gamma", &self.bn2.gamma),
            ("bn2.beta", &self.bn2.beta),
            ("dense.weights", &self.dense.weights),
            ("dense.bias", &self.dense.bias),
        ]
    }

    pub fn param_slices_mut(&mut self) -> [(&'static str, &mut [f64]); 10] {
        [
            ("conv1.kernel", self.conv1.kernel.as_mut_slice()),
            ("conv1.bias", self.conv1.bias.as_mut_slice()),
            ("bn1.gamma", self.bn1.gamma.as_mut_slice()),
            ("bn1.beta", self.bn1.beta.as_mut_slice()),
            ("conv2.kernel", self.conv2.kernel.as_mut_slice()),
            ("conv2.bias", self.conv2.bias.as_mut_slice()),
            ("bn2.gamma", self.bn2.gamma.as_mut_slice()),
            ("bn2.beta", self.bn2.beta.as_mut_slice()),
            ("dense.weights", self.dense.weights.as_mut_slice()),
            ("dense.bias", self.dense.bias.as_mut_slice()),
        ]
    }

    pub fn parameter_count(&self) -> usize {
        self.param_slices().iter().map(|(_, s)| s.len()).sum()
    }
}
