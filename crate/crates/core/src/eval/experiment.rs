use std::collections::BTreeMap;

use serde::Serialize;

use super::{compute_metrics, fold_assignment, make_folds, Metric, MetricsReport};
use crate::data::{Cohort, PatientRecord};
use crate::fusion::{pool_slices, FeatureSequence, FusionConfig, FusionStack, FusionTrainReport};
use crate::lstm::{stratified_holdout, train_lstm, LstmModel, LstmTrainConfig, LstmTrainOutcome, Prediction};
use crate::nn::rng::mix_seed;
use crate::nn::Rng;
use crate::{Error, Result};

/// Anything that can be trained on one fold and score the held-out patients.
pub trait FoldPredictor {
    /// Poor-outcome probabilities for `test`, in order.
    fn predict_fold(&self, train: &[&PatientRecord], test: &[&PatientRecord], seed: u64) -> Result<Vec<f64>>;
}

/// The full two-stage pipeline: fusion autoencoders, then the LSTM.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ae2LstmPipeline {
    pub fusion: FusionConfig,
    pub lstm: LstmTrainConfig,
    pub hidden_size: usize,
}

/// A fitted pipeline with its training traces.
#[derive(Debug, Clone)]
pub struct TrainedPipeline {
    pub stack: FusionStack,
    pub model: LstmModel<f32>,
    pub fusion_report: FusionTrainReport,
    pub lstm_outcome: LstmTrainOutcome,
    pub features: Vec<FeatureSequence>,
}

impl TrainedPipeline {
    pub fn predict(&self, record: &PatientRecord, filter_empty: bool) -> Result<Prediction> {
        let seq = self.stack.encode_patient(record, filter_empty)?;
        self.model.predict(&seq)
    }
}

impl Ae2LstmPipeline {
    /// Seeds for the four random stages, derived from one pipeline seed.
    fn seeds(seed: u64) -> [u64; 4] {
        [1, 2, 3, 4].map(|s| mix_seed(seed, s))
    }

    /// Trains the autoencoder stack on the pooled slices of `train`, encodes
    /// every training patient, holds out a stratified validation subset and
    /// trains the LSTM with early stopping.
    pub fn fit(&self, train: &[&PatientRecord], seed: u64) -> Result<TrainedPipeline> {
        let (stack, fusion_report) = self.fit_fusion(train, seed)?;
        let features = self.encode(&stack, train)?;
        self.fit_lstm(stack, fusion_report, features, seed)
    }

    pub fn fit_fusion(&self, train: &[&PatientRecord], seed: u64) -> Result<(FusionStack, FusionTrainReport)> {
        let mut fusion = self.fusion;
        fusion.train.seed = Self::seeds(seed)[0];
        let slices = pool_slices(train, fusion.filter_empty_slices).map_err(|e| e.in_stage("slice pooling"))?;
        FusionStack::train(&slices, &fusion).map_err(|e| e.in_stage("fusion training"))
    }

    pub fn encode(&self, stack: &FusionStack, patients: &[&PatientRecord]) -> Result<Vec<FeatureSequence>> {
        patients
            .iter()
            .map(|p| stack.encode_patient(p, self.fusion.filter_empty_slices))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| e.in_stage("feature encoding"))
    }

    /// Second training step on already encoded sequences.
    pub fn fit_lstm(
        &self,
        stack: FusionStack,
        fusion_report: FusionTrainReport,
        features: Vec<FeatureSequence>,
        seed: u64,
    ) -> Result<TrainedPipeline> {
        let [_, init_seed, split_seed, lstm_seed] = Self::seeds(seed);
        if let Some(f) = features.iter().find(|f| f.feature_dim() != stack.final_feature_size()) {
            return Err(Error::shape(
                format!("features of {}", f.patient_id),
                stack.final_feature_size(),
                f.feature_dim(),
            ));
        }
        let (fit_set, val_set) = stratified_holdout(&features, |s| s.label, self.lstm.validation_fraction, split_seed)?;
        let fit_set: Vec<FeatureSequence> = fit_set.into_iter().cloned().collect();
        let val_set: Vec<FeatureSequence> = val_set.into_iter().cloned().collect();

        let mut rng = Rng::new(init_seed);
        let mut model = LstmModel::new(stack.final_feature_size(), self.hidden_size, &mut rng)?;
        let lstm = LstmTrainConfig {
            seed: lstm_seed,
            ..self.lstm
        };
        let lstm_outcome =
            train_lstm(&mut model, &fit_set, &val_set, &lstm).map_err(|e| e.in_stage("lstm training"))?;
        Ok(TrainedPipeline {
            stack,
            model,
            fusion_report,
            lstm_outcome,
            features,
        })
    }
}

impl FoldPredictor for Ae2LstmPipeline {
    fn predict_fold(&self, train: &[&PatientRecord], test: &[&PatientRecord], seed: u64) -> Result<Vec<f64>> {
        let fitted = self.fit(train, seed)?;
        test.iter()
            .map(|p| {
                fitted
                    .predict(p, self.fusion.filter_empty_slices)
                    .map(|pred| pred.probability)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentConfig {
    pub runs: usize,
    pub folds: usize,
    pub base_seed: u64,
    pub stratified: bool,
    pub threshold: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            runs: 10,
            folds: 5,
            base_seed: 0,
            stratified: true,
            threshold: 0.5,
        }
    }
}

/// Pooled held-out predictions of one cross-validated run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOutput {
    pub seed: u64,
    pub report: MetricsReport,
    /// `(patient id, probability, label)` in cohort order.
    pub predictions: Vec<(String, f64, u8)>,
}

/// Executes one k-fold cross-validation with every random choice derived from `seed`.
pub fn run_once<P: FoldPredictor + ?Sized>(
    cohort: &Cohort,
    predictor: &P,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<RunOutput> {
    let labels = cohort.labels();
    let assignment = fold_assignment(&labels, config.folds, seed, config.stratified)?;
    let mut probs = vec![f64::NAN; cohort.len()];
    for fold in 0..config.folds {
        let (test_idx, train_idx): (Vec<usize>, Vec<usize>) = (0..cohort.len()).partition(|&i| assignment[i] == fold);
        let train: Vec<&PatientRecord> = train_idx.iter().map(|&i| &cohort.patients[i]).collect();
        let test: Vec<&PatientRecord> = test_idx.iter().map(|&i| &cohort.patients[i]).collect();
        let fold_probs = predictor.predict_fold(&train, &test, mix_seed(seed, 1000 + fold as u64))?;
        if fold_probs.len() != test.len() {
            return Err(Error::State(format!(
                "fold {fold}: {} predictions for {} test patients",
                fold_probs.len(),
                test.len()
            )));
        }
        for (i, p) in test_idx.into_iter().zip(fold_probs) {
            probs[i] = p;
        }
    }
    let report = compute_metrics(&probs, &labels, config.threshold)?;
    let predictions = cohort
        .patients
        .iter()
        .zip(&probs)
        .map(|(p, &prob)| (p.id.clone(), prob, p.label))
        .collect();
    Ok(RunOutput {
        seed,
        report,
        predictions,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricStats {
    pub runs: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl MetricStats {
    pub fn from_values(runs: Vec<f64>) -> Self {
        let n = runs.len() as f64;
        let mean = runs.iter().sum::<f64>() / n;
        let var = runs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self {
            runs,
            mean,
            std: var.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub runs: Vec<RunOutput>,
    pub stats: Vec<(Metric, MetricStats)>,
    pub baseline: MetricsReport,
    pub config: ExperimentConfig,
}

impl RunSummary {
    pub fn from_runs(runs: Vec<RunOutput>, baseline: MetricsReport, config: ExperimentConfig) -> Self {
        let stats = Metric::ALL
            .iter()
            .map(|&m| {
                (
                    m,
                    MetricStats::from_values(runs.iter().map(|r| r.report.get(m)).collect()),
                )
            })
            .collect();
        Self {
            runs,
            stats,
            baseline,
            config,
        }
    }

    pub fn stat(&self, m: Metric) -> &MetricStats {
        &self
            .stats
            .iter()
            .find(|(k, _)| *k == m)
            .expect("every metric is aggregated")
            .1
    }

    /// Tab-separated table: one row per metric with per-run values, mean,
    /// population std and the majority-class baseline.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("metric");
        for r in 1..=self.runs.len() {
            out.push_str(&format!("\trun_{r}"));
        }
        out.push_str("\tmean\tstd\tmajority_baseline\n");
        for (m, s) in &self.stats {
            out.push_str(m.name());
            for v in &s.runs {
                out.push_str(&format!("\t{v:.6}"));
            }
            out.push_str(&format!(
                "\t{:.6}\t{:.6}\t{:.6}\n",
                s.mean,
                s.std,
                self.baseline.get(*m)
            ));
        }
        out
    }

    /// Machine-readable report. NaN values serialize as `null`.
    pub fn to_json(&self) -> serde_json::Value {
        let metrics: BTreeMap<&str, &MetricStats> = self.stats.iter().map(|(m, s)| (m.name(), s)).collect();
        let baseline: BTreeMap<&str, f64> = Metric::ALL.iter().map(|&m| (m.name(), self.baseline.get(m))).collect();
        serde_json::json!({
            "std": "population",
            "runs": self.runs.len(),
            "folds": self.config.folds,
            "base_seed": self.config.base_seed,
            "threshold": self.config.threshold,
            "metrics": metrics,
            "majority_baseline": baseline,
            "run_seeds": self.runs.iter().map(|r| r.seed).collect::<Vec<_>>(),
        })
    }
}

/// Repeats cross-validation `config.runs` times with seeds `base_seed + r`
/// and aggregates every metric.
pub fn run_experiment<P: FoldPredictor + ?Sized>(
    cohort: &Cohort,
    predictor: &P,
    config: &ExperimentConfig,
) -> Result<RunSummary> {
    if !cohort.has_both_classes() {
        return Err(Error::Usage("cohort must contain both outcome classes".into()));
    }
    if config.runs == 0 {
        return Err(Error::config("runs", "must be >= 1"));
    }
    make_folds(cohort, config.folds, config.base_seed, config.stratified)?;
    let baseline = majority_baseline(cohort)?;
    let runs = (0..config.runs)
        .map(|r| {
            run_once(cohort, predictor, config, config.base_seed.wrapping_add(r as u64)).map_err(|e| Error::Run {
                run: r,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RunSummary::from_runs(runs, baseline, *config))
}

/// Predicts the majority class for everyone with probability equal to the
/// poor-outcome rate.
pub fn majority_baseline(cohort: &Cohort) -> Result<MetricsReport> {
    if !cohort.has_both_classes() {
        return Err(Error::Usage("majority baseline needs both outcome classes".into()));
    }
    let labels = cohort.labels();
    let rate = cohort.poor_count() as f64 / cohort.len() as f64;
    compute_metrics(&vec![rate; labels.len()], &labels, 0.5)
}
