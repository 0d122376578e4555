//! Pipeline configuration: TOML file with full defaulting, overridable field
//! by field from the command line.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use crate::data::{Dims, SynthSpec};
use crate::eval::{Ae2LstmPipeline, ExperimentConfig};
use crate::fusion::FusionConfig;
use crate::lstm::LstmTrainConfig;
use crate::nn::OptimizerKind;
use crate::sparse_ae::{AeTrainConfig, SparsityParams};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    /// Synthetic cohort size, ignored when `manifest` is set.
    pub n_patients: usize,
    pub poor_fraction: f64,
    pub manifest: Option<PathBuf>,
    pub feature_size: usize,
    pub final_feature_size: usize,
    pub hidden_size: usize,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub ae_optimizer: OptimizerKind,
    pub ae_lr: f64,
    pub ae_epochs: usize,
    pub ae_batch_size: usize,
    pub lstm_epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    pub rho: f64,
    pub beta: f64,
    pub lambda: f64,
    pub folds: usize,
    pub runs: usize,
    pub stratified: bool,
    pub threshold: f64,
    pub seed: u64,
    pub filter_empty_slices: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let sparsity = SparsityParams::default();
        let ae = AeTrainConfig::default();
        let lstm = LstmTrainConfig::default();
        let fusion = FusionConfig::default();
        let exp = ExperimentConfig::default();
        let synth = SynthSpec::default();
        Self {
            nx: 192,
            ny: 192,
            nz: 16,
            n_patients: synth.n,
            poor_fraction: synth.poor_fraction,
            manifest: None,
            feature_size: fusion.feature_size,
            final_feature_size: fusion.final_feature_size,
            hidden_size: 500,
            optimizer: lstm.optimizer,
            lr: lstm.learning_rate,
            ae_optimizer: ae.optimizer,
            ae_lr: ae.learning_rate,
            ae_epochs: ae.max_epochs,
            ae_batch_size: ae.batch_size,
            lstm_epochs: lstm.max_epochs,
            batch_size: lstm.batch_size,
            patience: lstm.patience,
            validation_fraction: lstm.validation_fraction,
            rho: sparsity.rho,
            beta: sparsity.beta,
            lambda: sparsity.lambda,
            folds: exp.folds,
            runs: exp.runs,
            stratified: exp.stratified,
            threshold: exp.threshold,
            seed: 0,
            filter_empty_slices: fusion.filter_empty_slices,
        }
    }
}

/// Command-line overrides; each flag carries the name of its config field.
#[derive(Debug, Clone, Default, Args)]
#[command(rename_all = "snake_case")]
pub struct ConfigOverrides {
    #[arg(long)]
    pub nx: Option<usize>,
    #[arg(long)]
    pub ny: Option<usize>,
    #[arg(long)]
    pub nz: Option<usize>,
    #[arg(long)]
    pub n_patients: Option<usize>,
    #[arg(long)]
    pub poor_fraction: Option<f64>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub feature_size: Option<usize>,
    #[arg(long)]
    pub final_feature_size: Option<usize>,
    #[arg(long)]
    pub hidden_size: Option<usize>,
    #[arg(long)]
    pub optimizer: Option<OptimizerKind>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub ae_optimizer: Option<OptimizerKind>,
    #[arg(long)]
    pub ae_lr: Option<f64>,
    #[arg(long)]
    pub ae_epochs: Option<usize>,
    #[arg(long)]
    pub ae_batch_size: Option<usize>,
    #[arg(long)]
    pub lstm_epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub validation_fraction: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub stratified: Option<bool>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub filter_empty_slices: Option<bool>,
}

macro_rules! apply {
    ($cfg:ident, $o:ident; $($field:ident),* $(,)?) => {
        $(if let Some(v) = $o.$field.clone() { $cfg.$field = v; })*
    };
}

fn parse_toml(text: &str) -> Result<PipelineConfig> {
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::config("config", e.message().trim()))?;
    let defaults = toml::Table::try_from(PipelineConfig::default()).expect("config serializes");
    // Deserialize one key at a time on top of the defaults so that a bad value
    // is reported against its own field.
    for (key, value) in &table {
        if !defaults.contains_key(key) && key != "manifest" {
            return Err(Error::config(key, "unknown field"));
        }
        let mut probe = defaults.clone();
        probe.insert(key.clone(), value.clone());
        PipelineConfig::deserialize(probe).map_err(|e| Error::config(key, e.message().trim()))?;
    }
    PipelineConfig::deserialize(table).map_err(|e| Error::config("config", e.message().trim()))
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg = parse_toml(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Defaults, then the file if given, then the flags. Validation runs
    /// once on the merged result.
    pub fn load(path: Option<&Path>, overrides: &ConfigOverrides) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                parse_toml(&text)?
            }
            None => Self::default(),
        };
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &ConfigOverrides) {
        if let Some(m) = &o.manifest {
            self.manifest = Some(m.clone());
        }
        apply!(self, o;
            nx, ny, nz, n_patients, poor_fraction, feature_size, final_feature_size, hidden_size,
            optimizer, lr, ae_optimizer, ae_lr, ae_epochs, ae_batch_size, lstm_epochs, batch_size,
            patience, validation_fraction, rho, beta, lambda, folds, runs, stratified, threshold,
            seed, filter_empty_slices,
        );
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("nx", self.nx), ("ny", self.ny), ("nz", self.nz)] {
            if v == 0 {
                return Err(Error::config(name, "must be >= 1"));
            }
        }
        if self.n_patients < 2 {
            return Err(Error::config("n_patients", "must be >= 2"));
        }
        if !(self.poor_fraction > 0.0 && self.poor_fraction < 1.0) {
            return Err(Error::config(
                "poor_fraction",
                format!("must lie in (0, 1), got {}", self.poor_fraction),
            ));
        }
        for (name, v) in [
            ("feature_size", self.feature_size),
            ("final_feature_size", self.final_feature_size),
            ("hidden_size", self.hidden_size),
            ("runs", self.runs),
        ] {
            if v == 0 {
                return Err(Error::config(name, "must be >= 1"));
            }
        }
        if self.folds < 2 {
            return Err(Error::config("folds", "must be >= 2"));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::config(
                "threshold",
                format!("must lie in (0, 1), got {}", self.threshold),
            ));
        }
        self.sparsity().validate()?;
        self.ae_train().validate()?;
        self.lstm_train().validate()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn dims(&self) -> Dims {
        Dims::new(self.nx, self.ny, self.nz)
    }

    pub fn sparsity(&self) -> SparsityParams {
        SparsityParams {
            rho: self.rho,
            beta: self.beta,
            lambda: self.lambda,
        }
    }

    pub fn ae_train(&self) -> AeTrainConfig {
        AeTrainConfig {
            max_epochs: self.ae_epochs,
            batch_size: self.ae_batch_size,
            optimizer: self.ae_optimizer,
            learning_rate: self.ae_lr,
            seed: self.seed,
        }
    }

    pub fn fusion(&self) -> FusionConfig {
        FusionConfig {
            feature_size: self.feature_size,
            final_feature_size: self.final_feature_size,
            sparsity: self.sparsity(),
            train: self.ae_train(),
            filter_empty_slices: self.filter_empty_slices,
        }
    }

    pub fn lstm_train(&self) -> LstmTrainConfig {
        LstmTrainConfig {
            optimizer: self.optimizer,
            learning_rate: self.lr,
            max_epochs: self.lstm_epochs,
            batch_size: self.batch_size,
            patience: self.patience,
            validation_fraction: self.validation_fraction,
            seed: self.seed,
        }
    }

    pub fn pipeline(&self) -> Ae2LstmPipeline {
        Ae2LstmPipeline {
            fusion: self.fusion(),
            lstm: self.lstm_train(),
            hidden_size: self.hidden_size,
        }
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            runs: self.runs,
            folds: self.folds,
            base_seed: self.seed,
            stratified: self.stratified,
            threshold: self.threshold,
        }
    }

    pub fn synth(&self) -> SynthSpec {
        SynthSpec {
            n: self.n_patients,
            dims: self.dims(),
            seed: self.seed,
            poor_fraction: self.poor_fraction,
        }
    }
}
