//! Valid (no padding, stride 1) 1-D convolution layer.

use rayon::prelude::*;

use super::batch::FeatureBatch;
use crate::error::{Error, Result};

/// Kernel stored as `[(co * kernel_size + k) * in_channels + ci]`: one
/// contiguous `kernel_size * in_channels` block per output channel, matching
/// the interleaved activation layout so the inner loop is a plain dot
/// product.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1dLayer {
    pub kernel: Vec<f64>,
    pub bias: Vec<f64>,
    pub kernel_size: usize,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl Conv1dLayer {
    pub fn zeros(kernel_size: usize, in_channels: usize, out_channels: usize) -> Self {
        Self {
            kernel: vec![0.0; kernel_size * in_channels * out_channels],
            bias: vec![0.0; out_channels],
            kernel_size,
            in_channels,
            out_channels,
        }
    }

    fn check_input(&self, x: &FeatureBatch) -> Result<usize> {
        if x.channels() != self.in_channels {
            return Err(Error::Dimension(format!(
                "conv input has {} channels, layer expects {}",
                x.channels(),
                self.in_channels
            )));
        }
        if x.length() < self.kernel_size {
            return Err(Error::Dimension(format!(
                "conv input length {} shorter than kernel {}",
                x.length(),
                self.kernel_size
            )));
        }
        Ok(x.length() - self.kernel_size + 1)
    }

    /// out[b,t,co] = bias[co] + sum_{k,ci} kernel[co][k,ci] * x[b,t+k,ci]
    pub fn forward(&self, x: &FeatureBatch) -> Result<FeatureBatch> {
        let out_len = self.check_input(x)?;
        let cin = self.in_channels;
        let cout = self.out_channels;
        let width = self.kernel_size * cin;
        let mut out = FeatureBatch::zeros(x.batch(), out_len, cout);
        let in_stride = x.length() * cin;
        out.data_mut()
            .par_chunks_mut(out_len * cout)
            .zip(x.data().par_chunks(in_stride))
            .for_each(|(ob, xb)| {
                for t in 0..out_len {
                    let window = &xb[t * cin..t * cin + width];
                    for co in 0..cout {
                        let kern = &self.kernel[co * width..(co + 1) * width];
                        let mut acc = self.bias[co];
                        for (kv, xv) in kern.iter().zip(window) {
                            acc += kv * xv;
                        }
                        ob[t * cout + co] = acc;
                    }
                }
            });
        Ok(out)
    }

    /// Gradients of the loss with respect to kernel, bias and (optionally)
    /// the input, given the upstream gradient at the output.
    ///
    /// Each kernel entry accumulates its sum over (batch, position) in a
    /// fixed sequential order, so results are bit-identical for any worker
    /// count.
    pub fn backward(
        &self,
        x: &FeatureBatch,
        g_out: &FeatureBatch,
        need_input_grad: bool,
    ) -> Result<(Vec<f64>, Vec<f64>, Option<FeatureBatch>)> {
        let out_len = self.check_input(x)?;
        if g_out.length() != out_len || g_out.channels() != self.out_channels
            || g_out.batch() != x.batch()
        {
            return Err(Error::Dimension("conv backward shape mismatch".into()));
        }
        let cin = self.in_channels;
        let cout = self.out_channels;
        let width = self.kernel_size * cin;
        let in_stride = x.length() * cin;
        let out_stride = out_len * cout;

        let mut g_bias = vec![0.0; cout];
        for b in 0..x.batch() {
            let gb = g_out.sample(b);
            for t in 0..out_len {
                for co in 0..cout {
                    g_bias[co] += gb[t * cout + co];
                }
            }
        }

        let mut g_kernel = vec![0.0; self.kernel.len()];
        g_kernel
            .par_chunks_mut(width)
            .enumerate()
            .for_each(|(co, gk)| {
                for b in 0..x.batch() {
                    let xb = &x.data()[b * in_stride..(b + 1) * in_stride];
                    let gb = &g_out.data()[b * out_stride..(b + 1) * out_stride];
                    for t in 0..out_len {
                        let g = gb[t * cout + co];
                        let window = &xb[t * cin..t * cin + width];
                        for (gv, xv) in gk.iter_mut().zip(window) {
                            *gv += g * xv;
                        }
                    }
                }
            });

        let g_input = if need_input_grad {
            let mut gx = FeatureBatch::zeros(x.batch(), x.length(), cin);
            gx.data_mut()
                .par_chunks_mut(in_stride)
                .zip(g_out.data().par_chunks(out_stride))
                .for_each(|(gxb, gb)| {
                    for t in 0..out_len {
                        for co in 0..cout {
                            let g = gb[t * cout + co];
                            let kern = &self.kernel[co * width..(co + 1) * width];
                            let dst = &mut gxb[t * cin..t * cin + width];
                            for (dv, kv) in dst.iter_mut().zip(kern) {
                                *dv += g * kv;
                            }
                        }
                    }
                });
            Some(gx)
        } else {
            None
        };

        Ok((g_kernel, g_bias, g_input))
    }
}
