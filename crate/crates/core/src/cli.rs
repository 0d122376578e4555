//! The `ae2lstm` command-line tool.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::checkpoint::{
    features_from_checkpoint, features_to_checkpoint, fusion_from_checkpoint, fusion_to_checkpoint,
    lstm_from_checkpoint, lstm_to_checkpoint, Checkpoint,
};
use crate::config::{ConfigOverrides, PipelineConfig};
use crate::data::{
    generate_synthetic_cohort, load_manifest_cohort, write_manifest, write_nifti, Cohort, ManifestEntry, Modality,
    PatientRecord,
};
use crate::eval::run_experiment;
use crate::fusion::{FusionStack, FusionTrainReport};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "ae2lstm",
    version,
    about = "Multimodal MRI outcome prediction with fused sparse autoencoders and an LSTM"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic cohort as NIfTI-1 volumes plus a manifest.
    GenSynth {
        #[command(flatten)]
        common: Common,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the autoencoder stack and the LSTM on a whole cohort.
    Train {
        #[command(flatten)]
        common: Common,
        /// Output directory for checkpoints and the training report.
        #[arg(long)]
        out: PathBuf,
        /// Load this fusion checkpoint instead of training the autoencoders.
        #[arg(long = "fusion_checkpoint", requires = "skip_ae")]
        fusion_checkpoint: Option<PathBuf>,
        /// Skip autoencoder training; needs `--fusion_checkpoint`.
        #[arg(long = "skip_ae", requires = "fusion_checkpoint")]
        skip_ae: bool,
        /// Feature cache: read if it exists, otherwise written after encoding.
        #[arg(long = "feature_cache")]
        feature_cache: Option<PathBuf>,
    },
    /// Score every patient of a manifest with trained checkpoints.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        fusion: PathBuf,
        #[arg(long)]
        lstm: PathBuf,
        /// Output TSV with id, probability and class.
        #[arg(long)]
        out: PathBuf,
    },
    /// Repeated stratified cross-validation with aggregated metrics.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Output directory for report.tsv and report.json.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML config file; every key can also be given as a flag.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: ConfigOverrides,
}

impl Common {
    fn load(&self) -> Result<PipelineConfig> {
        PipelineConfig::load(self.config.as_deref(), &self.overrides)
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenSynth { common, out } => cmd_gen_synth(&common.load()?, &out),
        Command::Train {
            common,
            out,
            fusion_checkpoint,
            skip_ae,
            feature_cache,
        } => {
            let resume = if skip_ae { fusion_checkpoint.as_deref() } else { None };
            cmd_train(&common.load()?, &out, resume, feature_cache.as_deref())
        }
        Command::Predict {
            common,
            fusion,
            lstm,
            out,
        } => cmd_predict(&common.load()?, &fusion, &lstm, &out),
        Command::Evaluate { common, out } => cmd_evaluate(&common.load()?, &out),
    }
}

/// Single-line JSON error report for stderr.
pub fn error_line(err: &Error) -> String {
    json!({ "error": err.kind(), "message": err.to_string() }).to_string()
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn load_cohort(cfg: &PipelineConfig) -> Result<Cohort> {
    match &cfg.manifest {
        Some(m) => load_manifest_cohort(m),
        None => generate_synthetic_cohort(&cfg.synth()),
    }
}

pub fn cmd_gen_synth(cfg: &PipelineConfig, out: &Path) -> Result<()> {
    let cohort = generate_synthetic_cohort(&cfg.synth())?;
    create_dir(out)?;
    let mut entries = Vec::with_capacity(cohort.len());
    for p in &cohort.patients {
        let paths: [PathBuf; 5] = Modality::ALL.map(|m| PathBuf::from(format!("{}_{}.nii", p.id, m)));
        for (vol, name) in p.volumes.iter().zip(&paths) {
            write(&out.join(name), write_nifti(vol))?;
        }
        entries.push(ManifestEntry {
            id: p.id.clone(),
            paths,
            mrs: p.mrs,
        });
    }
    write(&out.join("manifest.tsv"), write_manifest(&entries))
}

fn fusion_report_json(report: &FusionTrainReport) -> serde_json::Value {
    let level1: serde_json::Map<String, serde_json::Value> = Modality::ALL
        .iter()
        .zip(&report.level1)
        .map(|(m, trace)| (m.name().to_string(), json!(trace)))
        .collect();
    json!({ "level1": level1, "level2": report.level2 })
}

pub fn cmd_train(
    cfg: &PipelineConfig,
    out: &Path,
    resume_fusion: Option<&Path>,
    feature_cache: Option<&Path>,
) -> Result<()> {
    let cohort = load_cohort(cfg)?;
    if !cohort.has_both_classes() {
        return Err(Error::Usage("training cohort must contain both outcome classes".into()));
    }
    create_dir(out)?;
    let pipeline = cfg.pipeline();
    let patients: Vec<&PatientRecord> = cohort.patients.iter().collect();

    let (stack, fusion_report) = match resume_fusion {
        Some(path) => {
            let stack = fusion_from_checkpoint(&Checkpoint::load(path)?)?;
            check_slice_len(&stack, &cohort)?;
            (stack, FusionTrainReport::default())
        }
        None => pipeline.fit_fusion(&patients, cfg.seed)?,
    };

    let features = match feature_cache {
        Some(path) if path.exists() => {
            let cached = features_from_checkpoint(&Checkpoint::load(path)?)?;
            let ids: Vec<&str> = cached.iter().map(|f| f.patient_id.as_str()).collect();
            let expected: Vec<&str> = patients.iter().map(|p| p.id.as_str()).collect();
            if ids != expected {
                return Err(Error::Compatibility(format!(
                    "feature cache {} does not match the cohort's patients",
                    path.display()
                )));
            }
            cached
        }
        _ => {
            let encoded = pipeline.encode(&stack, &patients)?;
            if let Some(path) = feature_cache {
                features_to_checkpoint(&encoded).save(path)?;
            }
            encoded
        }
    };

    let fitted = pipeline.fit_lstm(stack, fusion_report, features, cfg.seed)?;
    fusion_to_checkpoint(&fitted.stack).save(&out.join("fusion.ckpt"))?;
    lstm_to_checkpoint(&fitted.model).save(&out.join("lstm.ckpt"))?;

    let correct = fitted
        .features
        .iter()
        .map(|f| {
            fitted
                .model
                .predict(f)
                .map(|p| u8::from(p.probability >= cfg.threshold) == f.label)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|&c| c)
        .count();
    let o = &fitted.lstm_outcome;
    let report = json!({
        "patients": cohort.len(),
        "ae_trained": resume_fusion.is_none(),
        "fusion": fusion_report_json(&fitted.fusion_report),
        "lstm": {
            "train_loss": o.train_loss,
            "val_loss": o.val_loss,
            "best_epoch": o.best_epoch,
            "stopped_epoch": o.stopped_epoch,
        },
        "training_accuracy": correct as f64 / cohort.len() as f64,
    });
    write(
        &out.join("train_report.json"),
        serde_json::to_string_pretty(&report).expect("report serializes") + "\n",
    )
}

fn check_slice_len(stack: &FusionStack, cohort: &Cohort) -> Result<()> {
    if let Some(p) = cohort
        .patients
        .iter()
        .find(|p| p.dims().slice_len() != stack.slice_len())
    {
        return Err(Error::Compatibility(format!(
            "fusion checkpoint expects {} voxels per slice, patient {} has {} ({})",
            stack.slice_len(),
            p.id,
            p.dims().slice_len(),
            p.dims()
        )));
    }
    Ok(())
}

pub fn cmd_predict(cfg: &PipelineConfig, fusion: &Path, lstm: &Path, out: &Path) -> Result<()> {
    let stack = fusion_from_checkpoint(&Checkpoint::load(fusion)?)?;
    let model = lstm_from_checkpoint(&Checkpoint::load(lstm)?)?;
    if model.input_dim() != stack.final_feature_size() {
        return Err(Error::Compatibility(format!(
            "fusion checkpoint emits {}-dim features but the lstm checkpoint expects {}",
            stack.final_feature_size(),
            model.input_dim()
        )));
    }
    let manifest = cfg
        .manifest
        .as_deref()
        .ok_or_else(|| Error::Usage("predict needs --manifest".into()))?;
    let cohort = load_manifest_cohort(manifest)?;
    check_slice_len(&stack, &cohort)?;
    let mut text = String::from("id\tprobability\tclass\n");
    for p in &cohort.patients {
        let seq = stack.encode_patient(p, cfg.filter_empty_slices)?;
        let prob = model.predict(&seq)?.probability;
        text.push_str(&format!("{}\t{:.6}\t{}\n", p.id, prob, u8::from(prob >= cfg.threshold)));
    }
    write(out, text)
}

pub fn cmd_evaluate(cfg: &PipelineConfig, out: &Path) -> Result<()> {
    let cohort = load_cohort(cfg)?;
    if !cohort.has_both_classes() {
        return Err(Error::Usage(
            "evaluation cohort must contain both outcome classes".into(),
        ));
    }
    let summary = run_experiment(&cohort, &cfg.pipeline(), &cfg.experiment())?;
    create_dir(out)?;
    write(&out.join("report.tsv"), summary.to_tsv())?;
    write(
        &out.join("report.json"),
        serde_json::to_string_pretty(&summary.to_json()).expect("report serializes") + "\n",
    )
}
