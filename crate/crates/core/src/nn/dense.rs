//! Fully connected layer.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Weights stored row-major by output: `weights[j * in_dim + i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl DenseLayer {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self { weights: vec![0.0; in_dim * out_dim], bias: vec![0.0; out_dim], in_dim, out_dim }
    }

    fn check_rows(&self, x: &[f64], batch: usize) -> Result<()> {
        if x.len() != batch * self.in_dim {
            return Err(Error::Dimension(format!(
                "dense input of {} values cannot hold {batch} rows of {}",
                x.len(),
                self.in_dim
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64], batch: usize) -> Result<Vec<f64>> {
        self.check_rows(x, batch)?;
        let mut out = vec![0.0; batch * self.out_dim];
        out.par_chunks_mut(self.out_dim)
            .zip(x.par_chunks(self.in_dim))
            .for_each(|(ob, xb)| {
                for (j, ov) in ob.iter_mut().enumerate() {
                    let row = &self.weights[j * self.in_dim..(j + 1) * self.in_dim];
                    let mut acc = self.bias[j];
                    for (w, v) in row.iter().zip(xb) {
                        acc += w * v;
                    }
                    *ov = acc;
                }
            });
        Ok(out)
    }

    pub fn backward(
        &self,
        x: &[f64],
        g_out: &[f64],
        batch: usize,
    ) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        self.check_rows(x, batch)?;
        if g_out.len() != batch * self.out_dim {
            return Err(Error::Dimension("dense backward shape mismatch".into()));
        }
        let mut g_bias = vec![0.0; self.out_dim];
        for gb in g_out.chunks_exact(self.out_dim) {
            for (s, g) in g_bias.iter_mut().zip(gb) {
                *s += g;
            }
        }

        let mut g_weights = vec![0.0; self.weights.len()];
        g_weights
            .par_chunks_mut(self.in_dim)
            .enumerate()
            .for_each(|(j, gw)| {
                for b in 0..batch {
                    let g = g_out[b * self.out_dim + j];
                    let xb = &x[b * self.in_dim..(b + 1) * self.in_dim];
                    for (s, v) in gw.iter_mut().zip(xb) {
                        *s += g * v;
                    }
                }
            });

        let mut g_input = vec![0.0; batch * self.in_dim];
        g_input
            .par_chunks_mut(self.in_dim)
            .zip(g_out.par_chunks(self.out_dim))
            .for_each(|(gxb, gb)| {
                for (j, &g) in gb.iter().enumerate() {
                    let row = &self.weights[j * self.in_dim..(j + 1) * self.in_dim];
                    for (d, w) in gxb.iter_mut().zip(row) {
                        *d += g * w;
                    }
                }
            });

        Ok((g_weights, g_bias, g_input))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_matches_hand_case() {
        let mut layer = DenseLayer::zeros(2, 2);
        layer.weights = vec![1.0, 2.0, -1.0, 0.5]; // rows: [1,2], [-1,0.5]
        layer.bias = vec![0.1, -0.1];
        let out = layer.forward(&[3.0, 4.0], 1).unwrap();
        assert!((out[0] - 11.1).abs() < 1e-12);
        assert!((out[1] - (-1.1)).abs() < 1e-12);
    }

    #[test]
    fn backward_matches_hand_case() {
        let mut layer = DenseLayer::zeros(2, 1);
        layer.weights = vec![2.0, -3.0];
        let (gw, gb, gx) = layer.backward(&[5.0, 7.0], &[1.0], 1).unwrap();
        assert_eq!(gw, vec![5.0, 7.0]);
        assert_eq!(gb, vec![1.0]);
        assert_eq!(gx, vec![2.0, -3.0]);
    }
}
