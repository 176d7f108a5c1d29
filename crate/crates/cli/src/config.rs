//! The flat run configuration: one human-readable TOML document whose
//! keys cover dataset generation and training, with command-line flags
//! overriding file values. Whatever actually ran is written back to
//! the output directory as `resolved.toml`, so every artifact
//! directory carries its own audit trail.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use modrec_core::classifier::{BaselineArch, SnrRegime};
use modrec_core::correction::Ablation;
use modrec_core::dataset::GenConfig;
use modrec_core::frame::Scheme;
use modrec_core::trainer::{SplitFractions, TrainConfig};

/// Every knob a run can turn, in one flat document. Unknown keys are
/// rejected so typos fail loudly instead of silently using defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    // --- paths
    /// Dataset file to generate or consume.
    pub dataset: String,
    /// Directory for bundles, reports, logs, and the resolved config.
    pub out_dir: String,

    // --- dataset generation
    /// Scheme names; empty means all supported schemes.
    pub schemes: Vec<String>,
    pub snr_min_db: f64,
    pub snr_max_db: f64,
    pub snr_step_db: f64,
    pub frames_per_cell: usize,
    pub gen_seed: u64,
    /// Store per-frame impairment truth blocks (diagnostics only).
    pub store_truth: bool,

    // --- training
    pub regime: String,
    pub ablation: String,
    pub k: usize,
    pub baseline_arch: String,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub patience: usize,
    pub train_seed: u64,
    pub split_seed: u64,
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        Self {
            dataset: "dataset.mrd".into(),
            out_dir: "out".into(),
            schemes: Vec::new(),
            snr_min_db: -20.0,
            snr_max_db: 18.0,
            snr_step_db: 2.0,
            frames_per_cell: 100,
            gen_seed: 0,
            store_truth: true,
            regime: train.regime.name().into(),
            ablation: train.ablation.name().into(),
            k: train.k,
            baseline_arch: train.baseline_arch.name().into(),
            epochs: train.epochs,
            batch_size: train.batch_size,
            lr: train.lr,
            patience: train.patience,
            train_seed: train.seed,
            split_seed: train.split_seed,
            train_fraction: train.fractions.train,
            val_fraction: train.fractions.val,
            test_fraction: train.fractions.test,
        }
    }
}

impl RunConfig {
    /// Loads a TOML file, or the defaults when no path is given.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("config file {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("config file {}", p.display()))
            }
        }
    }

    /// Writes the resolved document into `dir` as `resolved.toml`.
    pub fn write_resolved(&self, dir: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self).context("serializing resolved config")?;
        let path = dir.join("resolved.toml");
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }

    /// The generation recipe this config describes.
    pub fn gen_config(&self) -> Result<GenConfig> {
        let schemes = if self.schemes.is_empty() {
            Scheme::ALL.to_vec()
        } else {
            self.schemes
                .iter()
                .map(|name| Scheme::from_name(name).map_err(Into::into))
                .collect::<Result<Vec<_>>>()?
        };
        if self.snr_step_db <= 0.0 {
            bail!("snr_step_db must be positive, got {}", self.snr_step_db);
        }
        if self.snr_max_db < self.snr_min_db {
            bail!(
                "snr_max_db {} below snr_min_db {}",
                self.snr_max_db,
                self.snr_min_db
            );
        }
        let mut snrs_db = Vec::new();
        let mut snr = self.snr_min_db;
        while snr <= self.snr_max_db + 1e-9 {
            snrs_db.push(snr);
            snr += self.snr_step_db;
        }
        Ok(GenConfig {
            schemes,
            snrs_db,
            frames_per_cell: self.frames_per_cell,
            seed: self.gen_seed,
            store_truth: self.store_truth,
            ..GenConfig::default()
        })
    }

    /// The training recipe this config describes.
    pub fn train_config(&self) -> Result<TrainConfig> {
        Ok(TrainConfig {
            regime: SnrRegime::from_name(&self.regime)?,
            ablation: Ablation::from_name(&self.ablation)?,
            k: self.k,
            baseline_arch: BaselineArch::from_name(&self.baseline_arch)?,
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            patience: self.patience,
            seed: self.train_seed,
            split_seed: self.split_seed,
            fractions: SplitFractions {
                train: self.train_fraction,
                val: self.val_fraction,
                test: self.test_fraction,
            },
        })
    }
}

// ---------------------------------------------------------------------------
