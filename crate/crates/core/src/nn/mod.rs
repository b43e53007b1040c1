//! From-scratch trainable 1-D CNN engine: layers, forward/backward, Adam,
//! and the versioned model file format.

pub mod adam;
pub mod batch;
pub mod batchnorm;
pub mod conv;
pub mod dense;
pub mod io;
pub mod model;

pub use adam::{adam_step, AdamParams, TrainState};
pub use batch::FeatureBatch;
pub use batchnorm::BatchNormLayer;
pub use conv::Conv1dLayer;
pub use dense::DenseLayer;
pub use io::{deserialize, load_model, save_model, serialize, MODEL_MAGIC, MODEL_VERSION};
pub use model::{
    argmax_ties_first, cross_entropy_loss, ForwardCache, Gradients, NetworkDims, NetworkModel,
    BN_EPSILON, BN_MOMENTUM, CHANNELS,
};

/// Finite-difference gradient verification, shared by the unit tests and the
/// acceptance suite. Returns the largest relative error over all parameters.
///
/// The relative error divides by `max(|analytic|, |numeric|, 1e-4)`; the
/// floor keeps the quotient meaningful where the central difference of the
/// loss has no significant digits left (entries whose true gradient is at
/// the fp noise level of the loss evaluation).
pub fn gradient_check_max_rel_error(
    model: &NetworkModel,
    inputs: &FeatureBatch,
    targets: &[f64],
    h: f64,
) -> crate::Result<f64> {
    let dim = model.dims.output_len();
    let batch = inputs.batch();

    let loss_of = |m: &NetworkModel| -> crate::Result<f64> {
        let mut m = m.clone();
        let (out, _) = m.forward_training(inputs)?;
        Ok(cross_entropy_loss(&out, targets, batch, dim))
    };

    let mut probe = model.clone();
    let (_, cache) = probe.forward_training(inputs)?;
    let analytic = probe.backward(&cache, targets)?;

    let mut worst = 0.0f64;
    let n_arrays = model.param_slices().len();
    for array_idx in 0..n_arrays {
        let len = model.param_slices()[array_idx].1.len();
        for i in 0..len {
            let mut plus = model.clone();
            plus.param_slices_mut()[array_idx].1[i] += h;
            let mut minus = model.clone();
            minus.param_slices_mut()[array_idx].1[i] -= h;
            let numeric = (loss_of(&plus)? - loss_of(&minus)?) / (2.0 * h);
            let a = analytic.slices()[array_idx].1[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-4);
            if rel > worst {
                worst = rel;
            }
        }
    }
    Ok(worst)
}
