//! Run configuration: one TOML file (plus key=value overrides) describing
//! the frame, channel, dataset, training and sweep settings.
//!
//! ```toml
//! seed = 1
//! workers = 0            # 0 = default thread pool
//!
//! [frame]
//! n = 128                # subcarriers / training-sequence length
//! ng = 32                # guard length
//! nd = 128               # data samples
//! nlag = 160             # correlation lags
//! zc_root = 25
//!
//! [channel]
//! l = 20
//! eta = 0.2
//! snr_db = 12.0
//! tau_max = 24
//!
//! [dataset]
//! nt = 50000
//! snr_range_db = [0.0, 20.0]
//!
//! [train]
//! epochs = 60
//! batch_size = 32
//! learning_rate = 2e-3
//! beta1 = 0.9
//! beta2 = 0.999
//! epsilon = 1e-8
//! patience = 10
//! val_fraction = 0.1
//!
//! [sweep]
//! snr_points_db = [0.0, 2.0, ..., 20.0]
//! l_values = [20]
//! eta_values = [0.2]
//! trials_per_point = 10000
//! methods = ["proposed", "strongest_path", "threshold"]
//! alpha = 0.3
//! tolerance = 0
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelSpec;
use crate::error::{Error, Result};
use crate::eval::{Method, SweepSpec};
use crate::frame::FrameSpec;
use crate::pipeline::{DatasetSpec, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrameSection {
    pub n: usize,
    pub ng: usize,
    pub nd: usize,
    pub nlag: usize,
    pub zc_root: usize,
}

impl Default for FrameSection {
    fn default() -> Self {
        let d = FrameSpec::default();
        Self { n: d.n, ng: d.ng, nd: d.nd, nlag: d.nlag, zc_root: d.zc_root }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    pub l: usize,
    pub eta: f64,
    pub snr_db: f64,
    pub tau_max: usize,
}

impl Default for ChannelSection {
    fn default() -> Self {
        let d = ChannelSpec::default();
        Self { l: d.l, eta: d.eta, snr_db: d.snr_db, tau_max: d.tau_max }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub nt: usize,
    pub snr_range_db: [f64; 2],
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self { nt: 50_000, snr_range_db: [0.0, 20.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub patience: usize,
    pub val_fraction: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            epochs: d.epochs,
            batch_size: d.batch_size,
            learning_rate: d.learning_rate,
            beta1: d.beta1,
            beta2: d.beta2,
            epsilon: d.epsilon,
            patience: d.patience,
            val_fraction: d.val_fraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub snr_points_db: Vec<f64>,
    pub l_values: Vec<usize>,
    pub eta_values: Vec<f64>,
    pub trials_per_point: usize,
    pub methods: Vec<String>,
    pub alpha: f64,
    pub tolerance: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            snr_points_db: (0..=10).map(|i| 2.0 * i as f64).collect(),
            l_values: vec![20],
            eta_values: vec![0.2],
            trials_per_point: 10_000,
            methods: vec![
                "proposed".into(),
                "strongest_path".into(),
                "threshold".into(),
            ],
            alpha: 0.3,
            tolerance: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Seed,
    /// Worker threads for trial-level parallelism; 0 keeps the default pool.
    pub workers: usize,
    pub frame: FrameSection,
    pub channel: ChannelSection,
    pub dataset: DatasetSection,
    pub train: TrainSection,
    pub sweep: SweepSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Seed(pub u64);

impl Default for Seed {
    fn default() -> Self {
        Seed(1)
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("cannot parse configuration: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    /// Apply `section.key=value` overrides on top of this configuration.
    /// Values are parsed as TOML fragments, so arrays work: `--set
    /// "sweep.l_values=[16, 24]"`.
    pub fn apply_overrides(&mut self, sets: &[String]) -> Result<()> {
        if sets.is_empty() {
            return Ok(());
        }
        let mut value = toml::Value::try_from(&self)
            .map_err(|e| Error::Config(format!("configuration not representable: {e}")))?;
        for kv in sets {
            let (path, raw) = kv.split_once('=').ok_or_else(|| {
                Error::Config(format!("override '{kv}' is not of the form key=value"))
            })?;
            let parsed: toml::Value = {
                let doc = format!("v = {}", raw.trim());
                match toml::from_str::<toml::Table>(&doc) {
                    Ok(mut t) => t.remove("v").unwrap(),
                    // bare words become strings (e.g. method names)
                    Err(_) => toml::Value::String(raw.trim().to_string()),
                }
            };
            let segments: Vec<&str> = path.trim().split('.').collect();
            let (last, parents) = segments.split_last().expect("split_once gave a key");
            let mut cursor = &mut value;
            for seg in parents {
                cursor = match cursor {
                    toml::Value::Table(t) => t
                        .entry(seg.to_string())
                        .or_insert_with(|| toml::Value::Table(Default::default())),
                    _ => {
                        return Err(Error::Config(format!(
                            "override path '{path}' does not address a table"
                        )))
                    }
                };
            }
            match cursor {
                toml::Value::Table(t) => {
                    t.insert(last.to_string(), parsed);
                }
                _ => {
                    return Err(Error::Config(format!(
                        "override path '{path}' does not address a table"
                    )))
                }
            }
        }
        *self = value
            .try_into()
            .map_err(|e| Error::Config(format!("invalid configuration after overrides: {e}")))?;
        Ok(())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("configuration is always representable")
    }

    pub fn frame_spec(&self) -> Result<FrameSpec> {
        FrameSpec::new(
            self.frame.n,
            self.frame.ng,
            self.frame.nd,
            self.frame.nlag,
            self.frame.zc_root,
            self.seed.0,
        )
    }

    pub fn channel_spec(&self) -> Result<ChannelSpec> {
        ChannelSpec::new(
            self.channel.l,
            self.channel.eta,
            self.channel.snr_db,
            self.channel.tau_max,
        )
    }

    pub fn dataset_spec(&self) -> Result<DatasetSpec> {
        let spec = DatasetSpec {
            nt: self.dataset.nt,
            snr_range_db: (self.dataset.snr_range_db[0], self.dataset.snr_range_db[1]),
            channel: self.channel_spec()?,
            frame: self.frame_spec()?,
            seed: self.seed.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let t = &self.train;
        if t.epochs == 0 {
            return Err(Error::Config("train.epochs must be at least 1".into()));
        }
        Ok(TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            beta1: t.beta1,
            beta2: t.beta2,
            epsilon: t.epsilon,
            patience: t.patience,
            val_fraction: t.val_fraction,
            seed: self.seed.0,
        })
    }

    pub fn sweep_spec(&self) -> Result<SweepSpec> {
        let methods = self
            .sweep
            .methods
            .iter()
            .map(|m| Method::parse(m))
            .collect::<Result<Vec<_>>>()?;
        let spec = SweepSpec {
            snr_points_db: self.sweep.snr_points_db.clone(),
            l_values: self.sweep.l_values.clone(),
            eta_values: self.sweep.eta_values.clone(),
            trials_per_point: self.sweep.trials_per_point,
            methods,
            seed: self.seed.0,
            frame: self.frame_spec()?,
            tau_max: self.channel.tau_max,
            alpha: self.sweep.alpha,
            tolerance: self.sweep.tolerance,
        };
        spec.validate()?;
        Ok(spec)
    }
}
