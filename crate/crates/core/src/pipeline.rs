//! Offline training pipeline and the online two-stage estimator.
//!
//! For each training sample the coarse stage produces the initial auxiliary
//! point tau_init, an observation window of Nu - 1 samples around it is cut
//! out of the received signal, interleaved into 2(Nu - 1) real features, and
//! labeled with the offset of the true timing point relative to tau_init
//! (one-hot over the Ng-wide search window). Samples whose relative offset
//! falls outside the window — the coarse stage missed — are rejected and
//! resampled. Online, the network's argmax over the window is subtracted
//! from tau_init to produce the timing estimate.

use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{apply_channel, draw_channel, ChannelSpec};
use crate::error::{Error, Result};
use crate::frame::{build_frame, generate_data_symbols, generate_zc, ComplexSequence, FrameSpec};
use crate::nn::{
    adam_step, argmax_ties_first, cross_entropy_loss, AdamParams, FeatureBatch, NetworkModel,
    TrainState,
};
use crate::rng::{derive_seed, seeded_rng, stream};
use crate::sync::{acquire_initial, cross_correlate};

/// Everything needed to generate one dataset deterministically.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub nt: usize,
    /// Per-sample SNR drawn uniformly from this range (dB).
    pub snr_range_db: (f64, f64),
    pub channel: ChannelSpec,
    pub frame: FrameSpec,
    pub seed: u64,
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        self.frame.validate()?;
        self.channel.validate_with(&self.frame)?;
        if self.nt == 0 {
            return Err(Error::Config("dataset needs at least one sample".into()));
        }
        if self.snr_range_db.0 > self.snr_range_db.1 {
            return Err(Error::Config(format!(
                "snr range is inverted: {} > {}",
                self.snr_range_db.0, self.snr_range_db.1
            )));
        }
        Ok(())
    }
}

/// Side information kept with each accepted sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleMeta {
    /// Frame timing offset drawn for the trial.
    pub tau: usize,
    /// Coarse initial auxiliary point.
    pub tau_init: usize,
    pub snr_db: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RejectionStats {
    pub accepted: u64,
    pub rejected: u64,
}

impl RejectionStats {
    pub fn rate(&self) -> f64 {
        let total = self.accepted + self.rejected;
        if total == 0 {
            0.0
        } else {
            self.rejected as f64 / total as f64
        }
    }
}

/// Feature rows plus one-hot label indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub feature_len: usize,
    /// One-hot label dimension (the guard length Ng).
    pub label_dim: usize,
    pub features: Vec<f64>,
    pub labels: Vec<u32>,
    /// Empty after loading from a file.
    pub meta: Vec<SampleMeta>,
    pub rejection: RejectionStats,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample_features(&self, i: usize) -> &[f64] {
        &self.features[i * self.feature_len..(i + 1) * self.feature_len]
    }
}

/// Cut the Nu - 1 observation samples around the initial auxiliary point:
/// `y[tau_init - Ng + 1 ..= tau_init + N - 1]` once the point clears the
/// window head, the fixed window `y[0 ..= N + Ng - 2]` otherwise. A window
/// reaching past the receive buffer is right-clamped with zero fill.
pub fn extract_observation(
    y: &ComplexSequence,
    tau_init: usize,
    spec: &FrameSpec,
) -> Result<ComplexSequence> {
    if y.len() != spec.m() {
        return Err(Error::Dimension(format!(
            "received window has {} samples, expected M = {}",
            y.len(),
            spec.m()
        )));
    }
    if tau_init >= spec.nlag {
        return Err(Error::Dimension(format!(
            "tau_init = {tau_init} outside the {} evaluated lags",
            spec.nlag
        )));
    }
    let len = spec.nu() - 1;
    let start = if tau_init >= spec.ng - 1 { tau_init + 1 - spec.ng } else { 0 };
    let mut out = vec![Complex64::new(0.0, 0.0); len];
    let avail = (y.len() - start).min(len);
    out[..avail].copy_from_slice(&y[start..start + avail]);
    ComplexSequence::new(out)
}

/// Interleave real and imaginary parts in sample order.
pub fn realify(r: &ComplexSequence) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * r.len());
    for v in r.iter() {
        out.push(v.re);
        out.push(v.im);
    }
    out
}

/// Offset of the true timing point relative to the initial auxiliary point,
/// when it falls inside the Ng-wide search window.
pub fn relative_offset(tau_init: usize, true_offset: usize, ng: usize) -> Option<usize> {
    if tau_init >= true_offset {
        let r = tau_init - true_offset;
        (r < ng).then_some(r)
    } else {
        None
    }
}

/// One-hot label over the search window, or `None` when the sample must be
/// rejected (the coarse stage landed outside the representable range).
pub fn make_label(tau_init: usize, true_offset: usize, spec: &FrameSpec) -> Option<Vec<f64>> {
    relative_offset(tau_init, true_offset, spec.ng).map(|r| {
        let mut label = vec![0.0; spec.ng];
        label[r] = 1.0;
        label
    })
}

// A slot whose rejection probability is at most the 50% usability gate fails
// to produce a sample within this many attempts with probability <= 2^-64.
const MAX_SLOT_ATTEMPTS: u64 = 64;

fn generate_sample(
    dspec: &DatasetSpec,
    zc: &ComplexSequence,
    slot: u64,
) -> Result<(Vec<f64>, u32, SampleMeta, u64)> {
    let (lo, hi) = dspec.snr_range_db;
    for attempt in 0..MAX_SLOT_ATTEMPTS {
        let seed = derive_seed(dspec.seed, &[stream::DATASET, slot, attempt]);
        let mut rng = seeded_rng(seed);
        let snr_db = lo + (hi - lo) * rng.random::<f64>();
        let cspec = ChannelSpec { snr_db, ..dspec.channel };
        let real = draw_channel(&cspec, &mut rng);
        let data = generate_data_symbols(&dspec.frame, &mut rng)?;
        let frame = build_frame(&dspec.frame, zc, &data)?;
        let y = apply_channel(&frame, &real, &dspec.frame, &mut rng)?;
        let metric = cross_correlate(&y, zc, dspec.frame.nlag)?;
        let est = acquire_initial(&metric, &dspec.frame)?;
        let true_offset = dspec.frame.ng + real.tau;
        if let Some(r) = relative_offset(est.tau_init, true_offset, dspec.frame.ng) {
            let obs = extract_observation(&y, est.tau_init, &dspec.frame)?;
            let features = realify(&obs);
            let meta = SampleMeta { tau: real.tau, tau_init: est.tau_init, snr_db };
            return Ok((features, r as u32, meta, attempt));
        }
    }
    Err(Error::Config(format!(
        "rejected {MAX_SLOT_ATTEMPTS} consecutive draws for one sample; the coarse stage is \
         unusable at these settings"
    )))
}

/// Generate `nt` accepted samples, resampling rejects, fully deterministic
/// in the seed regardless of worker count. Fails when the overall rejection
/// rate exceeds 50%.
pub fn generate_dataset(dspec: &DatasetSpec) -> Result<Dataset> {
    dspec.validate()?;
    let zc = generate_zc(&dspec.frame)?;
    let samples: Vec<(Vec<f64>, u32, SampleMeta, u64)> = (0..dspec.nt as u64)
        .into_par_iter()
        .map(|slot| generate_sample(dspec, &zc, slot))
        .collect::<Result<_>>()?;

    let feature_len = dspec.frame.feature_len();
    let mut features = Vec::with_capacity(dspec.nt * feature_len);
    let mut labels = Vec::with_capacity(dspec.nt);
    let mut meta = Vec::with_capacity(dspec.nt);
    let mut rejected = 0u64;
    for (f, l, m, attempts) in samples {
        features.extend_from_slice(&f);
        labels.push(l);
        meta.push(m);
        rejected += attempts;
    }
    let rejection = RejectionStats { accepted: dspec.nt as u64, rejected };
    if rejection.rate() > 0.5 {
        return Err(Error::Config(format!(
            "rejection rate {:.1}% exceeds 50%; the coarse stage is unusable at these settings",
            100.0 * rejection.rate()
        )));
    }
    Ok(Dataset {
        feature_len,
        label_dim: dspec.frame.ng,
        features,
        labels,
        meta,
        rejection,
    })
}

pub const DATASET_MAGIC: &[u8; 8] = b"TSDATSET";
pub const DATASET_VERSION: u32 = 1;

/// Write the binary dataset (header, then little-endian f64 feature rows,
/// then u32 label indices) plus a TOML sidecar `<path>.meta.toml` recording
/// the generating spec and rejection statistics.
pub fn write_dataset(ds: &Dataset, dspec: &DatasetSpec, path: &Path) -> Result<()> {
    let mut buf = Vec::with_capacity(32 + ds.features.len() * 8 + ds.labels.len() * 4);
    buf.extend_from_slice(DATASET_MAGIC);
    buf.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    buf.extend_from_slice(&(ds.len() as u64).to_le_bytes());
    buf.extend_from_slice(&(ds.feature_len as u64).to_le_bytes());
    buf.extend_from_slice(&(ds.label_dim as u64).to_le_bytes());
    for v in &ds.features {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for l in &ds.labels {
        buf.extend_from_slice(&l.to_le_bytes());
    }
    std::fs::write(path, buf)?;

    #[derive(Serialize)]
    struct Sidecar<'a> {
        dataset: &'a DatasetSpec,
        stats: SidecarStats,
    }
    #[derive(Serialize)]
    struct SidecarStats {
        accepted: u64,
        rejected: u64,
        rejection_rate: f64,
    }
    let sidecar = Sidecar {
        dataset: dspec,
        stats: SidecarStats {
            accepted: ds.rejection.accepted,
            rejected: ds.rejection.rejected,
            rejection_rate: ds.rejection.rate(),
        },
    };
    let text = toml::to_string_pretty(&sidecar)
        .map_err(|e| Error::Format(format!("sidecar serialization failed: {e}")))?;
    let mut meta_path = path.as_os_str().to_owned();
    meta_path.push(".meta.toml");
    std::fs::write(meta_path, text)?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let bytes = std::fs::read(path)?;
    let need = |n: usize, pos: usize| -> Result<()> {
        if pos + n > bytes.len() {
            Err(Error::Format("dataset file truncated".into()))
        } else {
            Ok(())
        }
    };
    need(16, 0)?;
    if &bytes[..8] != DATASET_MAGIC {
        return Err(Error::Format("bad dataset magic".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != DATASET_VERSION {
        return Err(Error::UnsupportedVersion { found: version, expected: DATASET_VERSION });
    }
    need(24, 12)?;
    let nt = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let feature_len = u64::from_le_bytes(bytes[20..28].try_into().unwrap()) as usize;
    let label_dim = u64::from_le_bytes(bytes[28..36].try_into().unwrap()) as usize;
    let mut pos = 36;
    need(nt * feature_len * 8 + nt * 4, pos)?;
    let mut features = Vec::with_capacity(nt * feature_len);
    for _ in 0..nt * feature_len {
        features.push(f64::from_le_bytes(bytes[pos..pos + 8].try_into().unwrap()));
        pos += 8;
    }
    let mut labels = Vec::with_capacity(nt);
    for _ in 0..nt {
        let l = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap());
        if l as usize >= label_dim {
            return Err(Error::Format(format!(
                "label index {l} out of range for dimension {label_dim}"
            )));
        }
        labels.push(l);
        pos += 4;
    }
    if pos != bytes.len() {
        return Err(Error::Format(format!("dataset file has {} trailing bytes", bytes.len() - pos)));
    }
    Ok(Dataset {
        feature_len,
        label_dim,
        features,
        labels,
        meta: Vec::new(),
        rejection: RejectionStats::default(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Stop after this many epochs without validation improvement.
    pub patience: usize,
    /// Fraction of samples held out for validation.
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            batch_size: 32,
            learning_rate: 2e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            patience: 10,
            val_fraction: 0.1,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

fn one_hot_rows(labels: &[u32], dim: usize) -> Vec<f64> {
    let mut t = vec![0.0; labels.len() * dim];
    for (b, &l) in labels.iter().enumerate() {
        t[b * dim + l as usize] = 1.0;
    }
    t
}

fn shuffled_indices(count: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..count).collect();
    let mut rng = seeded_rng(seed);
    // Fisher-Yates
    for i in (1..count).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    idx
}

fn gather_batch(ds: &Dataset, indices: &[usize]) -> (FeatureBatch, Vec<f64>) {
    let mut data = Vec::with_capacity(indices.len() * ds.feature_len);
    let mut labels = Vec::with_capacity(indices.len());
    for &i in indices {
        data.extend_from_slice(ds.sample_features(i));
        labels.push(ds.labels[i]);
    }
    let batch = FeatureBatch::from_vec(data, indices.len(), ds.feature_len, 1)
        .expect("gathered batch is consistent");
    let targets = one_hot_rows(&labels, ds.label_dim);
    (batch, targets)
}

fn mean_loss_inference(model: &NetworkModel, ds: &Dataset, indices: &[usize]) -> Result<f64> {
    if indices.is_empty() {
        return Ok(f64::NAN);
    }
    let mut total = 0.0;
    // bounded chunks keep the activation memory flat
    for chunk in indices.chunks(512) {
        let (batch, targets) = gather_batch(ds, chunk);
        let out = model.forward_inference(&batch)?;
        total += cross_entropy_loss(&out, &targets, chunk.len(), ds.label_dim) * chunk.len() as f64;
    }
    Ok(total / indices.len() as f64)
}

/// Mini-batch training with Adam and early stopping on a validation holdout.
/// Returns the model from the best validation epoch plus the loss history.
/// Deterministic in `cfg.seed` for a fixed dataset.
pub fn train(
    ds: &Dataset,
    mut model: NetworkModel,
    cfg: &TrainConfig,
) -> Result<(NetworkModel, TrainReport)> {
    if ds.is_empty() {
        return Err(Error::Config("cannot train on an empty dataset".into()));
    }
    if ds.feature_len != model.dims.input_len() || ds.label_dim != model.dims.output_len() {
        return Err(Error::Dimension(format!(
            "dataset shape {} -> {} does not match model {} -> {}",
            ds.feature_len,
            ds.label_dim,
            model.dims.input_len(),
            model.dims.output_len()
        )));
    }
    if cfg.batch_size < 2 {
        return Err(Error::Config("batch size must be at least 2 (batch norm)".into()));
    }
    if !(0.0..1.0).contains(&cfg.val_fraction) {
        return Err(Error::Config("val_fraction must lie in [0, 1)".into()));
    }

    let split = shuffled_indices(ds.len(), derive_seed(cfg.seed, &[stream::TRAIN_SPLIT]));
    let n_val = ((ds.len() as f64) * cfg.val_fraction).round() as usize;
    let (val_idx, train_idx) = split.split_at(n_val);
    if train_idx.len() < 2 {
        return Err(Error::Config("not enough samples left for training".into()));
    }

    let adam = AdamParams {
        learning_rate: cfg.learning_rate,
        beta1: cfg.beta1,
        beta2: cfg.beta2,
        epsilon: cfg.epsilon,
    };
    let mut state = TrainState::new(&model, adam);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, NetworkModel)> = None;
    let mut stale = 0usize;

    for epoch in 0..cfg.epochs {
        let order = shuffled_indices(
            train_idx.len(),
            derive_seed(cfg.seed, &[stream::TRAIN_EPOCH, epoch as u64]),
        );
        let mut train_loss = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            // a trailing single sample cannot be batch-normalized
            if chunk.len() < 2 {
                continue;
            }
            let indices: Vec<usize> = chunk.iter().map(|&i| train_idx[i]).collect();
            let (batch, targets) = gather_batch(ds, &indices);
            let (out, cache) = model.forward_training(&batch)?;
            let loss = cross_entropy_loss(&out, &targets, indices.len(), ds.label_dim);
            if !loss.is_finite() {
                return Err(Error::Training(format!(
                    "loss diverged to {loss} at epoch {epoch} after {} samples",
                    seen
                )));
            }
            let grads = model.backward(&cache, &targets)?;
            adam_step(&mut model, &grads, &mut state);
            train_loss += loss * indices.len() as f64;
            seen += indices.len();
        }
        train_loss /= seen as f64;

        let val_loss = if val_idx.is_empty() {
            train_loss
        } else {
            mean_loss_inference(&model, ds, val_idx)?
        };
        if !val_loss.is_finite() {
            return Err(Error::Training(format!("validation loss diverged at epoch {epoch}")));
        }
        history.push(EpochStats { epoch, train_loss, val_loss });

        let improved = best.as_ref().map_or(true, |(_, b, _)| val_loss < *b);
        if improved {
            best = Some((epoch, val_loss, model.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }

    let (best_epoch, best_val_loss, best_model) = best.expect("at least one epoch ran");
    Ok((best_model, TrainReport { history, best_epoch, best_val_loss }))
}

/// Result of one online two-stage estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimingEstimate {
    /// Final timing estimate tau_init - tau_r.
    pub tau_hat: i64,
    pub tau_init: usize,
    /// Network argmax over the Ng-wide window (ties to the smallest index).
    pub tau_r: usize,
}

/// Coarse acquisition, observation extraction and network refinement on one
/// received window.
pub fn estimate_timing(
    y: &ComplexSequence,
    model: &NetworkModel,
    spec: &FrameSpec,
) -> Result<TimingEstimate> {
    let zc = generate_zc(spec)?;
    let metric = cross_correlate(y, &zc, spec.nlag)?;
    let est = acquire_initial(&metric, spec)?;
    let obs = extract_observation(y, est.tau_init, spec)?;
    let features = realify(&obs);
    let out = model.infer(&features)?;
    let tau_r = argmax_ties_first(&out);
    Ok(TimingEstimate {
        tau_hat: est.tau_init as i64 - tau_r as i64,
        tau_init: est.tau_init,
        tau_r,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ChannelRealization;
    use crate::nn::NetworkDims;

    fn default_dspec(nt: usize, seed: u64) -> DatasetSpec {
        DatasetSpec {
            nt,
            snr_range_db: (0.0, 20.0),
            channel: ChannelSpec::default(),
            frame: FrameSpec::default(),
            seed,
        }
    }

    #[test]
    fn observation_window_indices() {
        let spec = FrameSpec::default();
        let y = ComplexSequence::new(
            (0..spec.m()).map(|i| Complex64::new(i as f64, -(i as f64))).collect(),
        )
        .unwrap();
        // tau_init = 50: indices 19 ..= 177 inclusive
        let obs = extract_observation(&y, 50, &spec).unwrap();
        assert_eq!(obs.len(), 159);
        assert_eq!(obs[0].re, 19.0);
        assert_eq!(obs[158].re, 177.0);
    }

    #[test]
    fn observation_boundary_matches_low_branch() {
        let spec = FrameSpec::default();
        let y = ComplexSequence::new(
            (0..spec.m()).map(|i| Complex64::new(i as f64, 0.0)).collect(),
        )
        .unwrap();
        // at tau_init = Ng - 1 the moving window starts at 0, identical to
        // the fixed low-branch window
        let at_boundary = extract_observation(&y, spec.ng - 1, &spec).unwrap();
        let below = extract_observation(&y, 0, &spec).unwrap();
        assert_eq!(at_boundary, below);
        assert_eq!(at_boundary[0].re, 0.0);
    }

    #[test]
    fn observation_length_is_nu_minus_one_in_both_branches() {
        let spec = FrameSpec::default();
        let y = ComplexSequence::new(vec![Complex64::new(1.0, 0.0); spec.m()]).unwrap();
        for tau_init in [0, 10, spec.ng - 1, spec.ng, 100, spec.nlag - 1] {
            let obs = extract_observation(&y, tau_init, &spec).unwrap();
            assert_eq!(obs.len(), 159, "tau_init = {tau_init}");
        }
    }

    #[test]
    fn observation_rejects_out_of_range_point() {
        let spec = FrameSpec::default();
        let y = ComplexSequence::new(vec![Complex64::new(0.0, 0.0); spec.m()]).unwrap();
        assert!(extract_observation(&y, spec.nlag, &spec).is_err());
    }

    #[test]
    fn realify_interleaves() {
        let r = ComplexSequence::new(vec![
            Complex64::new(1.0, 2.0),
            Complex64::new(3.0, -4.0),
        ])
        .unwrap();
        assert_eq!(realify(&r), vec![1.0, 2.0, 3.0, -4.0]);
        let spec = FrameSpec::default();
        let long = ComplexSequence::new(vec![Complex64::new(0.0, 0.0); spec.nu() - 1]).unwrap();
        assert_eq!(realify(&long).len(), 318);
    }

    #[test]
    fn label_arithmetic() {
        let spec = FrameSpec::default();
        let l = make_label(50, 47, &spec).unwrap();
        assert_eq!(l.iter().position(|&v| v == 1.0), Some(3));
        assert_eq!(l.iter().filter(|&&v| v != 0.0).count(), 1);

        let l0 = make_label(10, 10, &spec).unwrap();
        assert_eq!(l0.iter().position(|&v| v == 1.0), Some(0));

        // coarse landed before the true point
        assert!(make_label(5, 40, &spec).is_none());
        // outside the Ng-wide window
        assert!(make_label(100, 100 - spec.ng, &spec).is_none());
    }

    #[test]
    fn dataset_generation_is_deterministic() {
        let dspec = default_dspec(4, 11);
        let a = generate_dataset(&dspec).unwrap();
        let b = generate_dataset(&dspec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 4);
        assert_eq!(a.feature_len, 318);
    }

    #[test]
    fn dataset_differs_for_different_seeds() {
        let a = generate_dataset(&default_dspec(4, 11)).unwrap();
        let b = generate_dataset(&default_dspec(4, 12)).unwrap();
        assert_ne!(a.features, b.features);
    }

    #[test]
    fn noiseless_single_path_labels_are_all_zero() {
        let dspec = DatasetSpec {
            nt: 64,
            snr_range_db: (f64::INFINITY, f64::INFINITY),
            channel: ChannelSpec { l: 1, snr_db: f64::INFINITY, ..ChannelSpec::default() },
            ..default_dspec(64, 5)
        };
        let ds = generate_dataset(&dspec).unwrap();
        assert!(ds.labels.iter().all(|&l| l == 0));
        assert_eq!(ds.rejection.rejected, 0);
    }

    #[test]
    fn label_histogram_concentrates_at_small_offsets() {
        let ds = generate_dataset(&default_dspec(1000, 42)).unwrap();
        let mut hist = vec![0usize; ds.label_dim];
        for &l in &ds.labels {
            hist[l as usize] += 1;
        }
        let mode = hist.iter().enumerate().max_by_key(|(_, &c)| c).unwrap().0;
        assert!(mode <= 2, "histogram mode at {mode}");
        let early: usize = hist[..8].iter().sum();
        let late: usize = hist[8..].iter().sum();
        assert!(
            early > 2 * late,
            "no decaying tail: {early} early vs {late} late"
        );
    }

    #[test]
    fn hopeless_settings_are_a_configuration_error() {
        // at -35 dB the correlation peak is essentially random, so most
        // relative offsets fall outside the window
        let dspec = DatasetSpec {
            nt: 16,
            snr_range_db: (-35.0, -35.0),
            ..default_dspec(16, 3)
        };
        assert!(matches!(generate_dataset(&dspec), Err(Error::Config(_))));
    }

    #[test]
    fn dataset_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.tsds");
        let dspec = default_dspec(6, 21);
        let ds = generate_dataset(&dspec).unwrap();
        write_dataset(&ds, &dspec, &path).unwrap();
        let back = read_dataset(&path).unwrap();
        assert_eq!(back.features, ds.features);
        assert_eq!(back.labels, ds.labels);
        assert_eq!(back.feature_len, ds.feature_len);
        assert_eq!(back.label_dim, ds.label_dim);
        assert!(path.with_extension("tsds.meta.toml").exists() || {
            let mut p = path.as_os_str().to_owned();
            p.push(".meta.toml");
            std::path::PathBuf::from(p).exists()
        });
    }

    #[test]
    fn dataset_file_rejects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.tsds");
        let dspec = default_dspec(2, 1);
        let ds = generate_dataset(&dspec).unwrap();
        write_dataset(&ds, &dspec, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let truncated = &bytes[..bytes.len() - 3];
        std::fs::write(&path, truncated).unwrap();
        assert!(matches!(read_dataset(&path), Err(Error::Format(_))));
    }

    fn tiny_training_dataset() -> Dataset {
        // 32 copies of a single sample from a tiny frame
        let frame = FrameSpec::new(8, 4, 8, 13, 3, 0).unwrap();
        let dspec = DatasetSpec {
            nt: 1,
            snr_range_db: (30.0, 30.0),
            channel: ChannelSpec { l: 2, eta: 0.4, snr_db: 30.0, tau_max: 4 },
            frame,
            seed: 9,
        };
        let one = generate_dataset(&dspec).unwrap();
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..32 {
            features.extend_from_slice(&one.features);
            labels.push(one.labels[0]);
        }
        Dataset {
            feature_len: one.feature_len,
            label_dim: one.label_dim,
            features,
            labels,
            meta: Vec::new(),
            rejection: RejectionStats::default(),
        }
    }

    #[test]
    fn training_memorizes_a_repeated_sample() {
        let ds = tiny_training_dataset();
        let dims = NetworkDims::new(8, 4).unwrap();
        let model = NetworkModel::init(dims, &mut seeded_rng(2));
        let cfg = TrainConfig {
            epochs: 200,
            batch_size: 32,
            learning_rate: 1e-2,
            patience: 200,
            val_fraction: 0.0,
            seed: 4,
            ..TrainConfig::default()
        };
        let (trained, report) = train(&ds, model, &cfg).unwrap();
        // the sigmoid ahead of the softmax bounds the loss from below by
        // ln(1 + (Ng - 1)/e); training must close in on that floor
        let floor = (1.0 + (ds.label_dim as f64 - 1.0) / std::f64::consts::E).ln();
        let last = report.history.last().unwrap().train_loss;
        assert!(
            last - floor < 0.05,
            "loss {last} never approached its floor {floor}"
        );
        // and the memorized sample is classified perfectly
        let out = trained.infer(ds.sample_features(0)).unwrap();
        assert_eq!(argmax_ties_first(&out) as u32, ds.labels[0]);
    }

    #[test]
    fn zero_learning_rate_freezes_parameters() {
        let ds = tiny_training_dataset();
        let dims = NetworkDims::new(8, 4).unwrap();
        let model = NetworkModel::init(dims, &mut seeded_rng(2));
        let before = model.clone();
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 32,
            learning_rate: 0.0,
            patience: 10,
            val_fraction: 0.0,
            seed: 4,
            ..TrainConfig::default()
        };
        let (trained, report) = train(&ds, model, &cfg).unwrap();
        for ((_, a), (_, b)) in trained.param_slices().iter().zip(before.param_slices().iter()) {
            assert_eq!(a, b);
        }
        // single identical batch per epoch: the loss cannot move either
        let first = report.history[0].train_loss;
        for e in &report.history {
            assert!((e.train_loss - first).abs() < 1e-12);
        }
    }

    #[test]
    fn training_history_is_deterministic() {
        let ds = generate_dataset(&DatasetSpec {
            nt: 48,
            snr_range_db: (5.0, 15.0),
            channel: ChannelSpec { l: 3, eta: 0.3, snr_db: 10.0, tau_max: 3 },
            frame: FrameSpec::new(16, 4, 16, 21, 5, 0).unwrap(),
            seed: 13,
        })
        .unwrap();
        let dims = NetworkDims::new(16, 4).unwrap();
        let cfg = TrainConfig {
            epochs: 4,
            batch_size: 16,
            patience: 10,
            seed: 99,
            ..TrainConfig::default()
        };
        let run = || {
            let model = NetworkModel::init(dims, &mut seeded_rng(1));
            train(&ds, model, &cfg).unwrap()
        };
        let (m1, r1) = run();
        let (m2, r2) = run();
        assert_eq!(r1, r2);
        assert_eq!(m1, m2);
    }

    #[test]
    fn estimate_uses_network_argmax_relative_to_peak() {
        let spec = FrameSpec::default();
        let dims = NetworkDims::from_frame(&spec);
        // zero model outputs a uniform distribution; argmax ties to 0, so
        // tau_hat == tau_init
        let model = NetworkModel::zeroed(dims);
        let mut rng = seeded_rng(17);
        let real = ChannelRealization {
            gains: vec![Complex64::new(1.0, 0.0)],
            delays: vec![0],
            tau: 9,
            noise_var: 0.0,
        };
        let frame = crate::frame::synthesize_frame(&spec, &mut rng).unwrap();
        let y = apply_channel(&frame, &real, &spec, &mut rng).unwrap();
        let est = estimate_timing(&y, &model, &spec).unwrap();
        assert_eq!(est.tau_init, spec.ng + 9);
        assert_eq!(est.tau_r, 0);
        assert_eq!(est.tau_hat, (spec.ng + 9) as i64);

        // rig the dense bias so the argmax lands at offset 3
        let mut rigged = NetworkModel::zeroed(dims);
        rigged.dense.bias[3] = 5.0;
        let est = estimate_timing(&y, &rigged, &spec).unwrap();
        assert_eq!(est.tau_r, 3);
        assert_eq!(est.tau_hat, (spec.ng + 9) as i64 - 3);
    }

    #[test]
    fn trained_model_beats_strongest_path_on_a_dominated_second_tap() {
        // noiseless two-tap channel whose second tap always dominates: the
        // strongest-path baseline is systematically one sample late, the
        // trained network learns the constant offset
        let spec = FrameSpec::default();
        let gains = vec![Complex64::new(0.45, 0.0), Complex64::new(1.0, 0.0)];
        let build = |tau: usize, rng: &mut rand_chacha::ChaCha8Rng| {
            let real = ChannelRealization {
                gains: gains.clone(),
                delays: vec![0, 1],
                tau,
                noise_var: 0.0,
            };
            let frame = crate::frame::synthesize_frame(&spec, rng).unwrap();
            apply_channel(&frame, &real, &spec, rng).unwrap()
        };

        let zc = generate_zc(&spec).unwrap();
        let mut rng = seeded_rng(23);
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for i in 0..96 {
            let tau = i % 25;
            let y = build(tau, &mut rng);
            let metric = cross_correlate(&y, &zc, spec.nlag).unwrap();
            let est = acquire_initial(&metric, &spec).unwrap();
            let r = relative_offset(est.tau_init, spec.ng + tau, spec.ng).unwrap();
            assert_eq!(r, 1, "peak should sit on the second tap");
            features.extend_from_slice(&realify(&extract_observation(&y, est.tau_init, &spec).unwrap()));
            labels.push(r as u32);
        }
        let ds = Dataset {
            feature_len: spec.feature_len(),
            label_dim: spec.ng,
            features,
            labels,
            meta: Vec::new(),
            rejection: RejectionStats::default(),
        };
        let model = NetworkModel::init(NetworkDims::from_frame(&spec), &mut seeded_rng(3));
        let cfg = TrainConfig {
            epochs: 40,
            batch_size: 32,
            learning_rate: 3e-3,
            patience: 40,
            val_fraction: 0.0,
            seed: 8,
            ..TrainConfig::default()
        };
        let (trained, _) = train(&ds, model, &cfg).unwrap();

        let tau = 12;
        let y = build(tau, &mut rng);
        let est = estimate_timing(&y, &trained, &spec).unwrap();
        let metric = cross_correlate(&y, &zc, spec.nlag).unwrap();
        let first_path = (spec.ng + tau) as i64;
        assert_eq!(est.tau_hat, first_path);
        assert_eq!(
            crate::sync::strongest_path_baseline(&metric) as i64,
            first_path + 1
        );
    }
}
