//! Two-level autoencoder stack: one sparse AE per modality, then a fusion AE
//! over the concatenated per-modality codes. Each AE minimizes its own loss;
//! the levels are trained one after the other.

use ndarray::{concatenate, Array1, Array2, ArrayView1, Axis};

use crate::data::{Modality, PatientRecord};
use crate::nn::Rng;
use crate::sparse_ae::{AeTrainConfig, SparseAe, SparsityParams};
use crate::{Error, Result};

/// Slices whose mean intensity across all modalities is below this are
/// considered empty by the optional slice filter.
pub const EMPTY_SLICE_THRESHOLD: f32 = 1e-4;

/// Per-slice multimodal features of one patient, ordered by slice index.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub patient_id: String,
    /// One row per slice.
    pub steps: Array2<f32>,
    pub label: u8,
}

impl FeatureSequence {
    pub fn new(patient_id: impl Into<String>, steps: Array2<f32>, label: u8) -> Result<Self> {
        let patient_id = patient_id.into();
        if steps.nrows() == 0 {
            return Err(Error::Data(format!("patient {patient_id}: empty feature sequence")));
        }
        if label > 1 {
            return Err(Error::Usage(format!("binary label expected, got {label}")));
        }
        Ok(Self {
            patient_id,
            steps,
            label,
        })
    }

    pub fn len(&self) -> usize {
        self.steps.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.nrows() == 0
    }

    pub fn feature_dim(&self) -> usize {
        self.steps.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionConfig {
    /// Code size of every level-1 autoencoder.
    pub feature_size: usize,
    /// Code size of the level-2 autoencoder.
    pub final_feature_size: usize,
    pub sparsity: SparsityParams,
    /// Training settings shared by all six autoencoders; `seed` is the base
    /// from which per-model seeds are derived.
    pub train: AeTrainConfig,
    pub filter_empty_slices: bool,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            feature_size: 1000,
            final_feature_size: 1000,
            sparsity: SparsityParams::default(),
            train: AeTrainConfig::default(),
            filter_empty_slices: false,
        }
    }
}

/// Per-epoch loss traces of every autoencoder in the stack.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FusionTrainReport {
    pub level1: Vec<Vec<f64>>,
    pub level2: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct FusionStack {
    /// Indexed by [`Modality::index`].
    pub level1: [SparseAe<f32>; 5],
    pub level2: SparseAe<f32>,
}

fn init_seed(base: u64, model: u64) -> u64 {
    crate::nn::rng::mix_seed(base, 100 + model)
}

fn train_seed(base: u64, model: u64) -> u64 {
    crate::nn::rng::mix_seed(base, 200 + model)
}

impl FusionStack {
    pub fn new(level1: [SparseAe<f32>; 5], level2: SparseAe<f32>) -> Result<Self> {
        let d = level1[0].code_dim();
        let px = level1[0].input_dim();
        for (m, ae) in Modality::ALL.iter().zip(&level1) {
            if ae.code_dim() != d || ae.input_dim() != px {
                return Err(Error::shape(
                    format!("{m} level-1 autoencoder"),
                    format!("{px} -> {d}"),
                    format!("{} -> {}", ae.input_dim(), ae.code_dim()),
                ));
            }
        }
        if level2.input_dim() != 5 * d {
            return Err(Error::shape("level-2 autoencoder input", 5 * d, level2.input_dim()));
        }
        Ok(Self { level1, level2 })
    }

    /// Untrained stack with Glorot-initialized weights.
    pub fn init(slice_len: usize, config: &FusionConfig) -> Result<Self> {
        let level1 = Modality::ALL
            .map(|m| {
                let mut rng = Rng::new(init_seed(config.train.seed, m.index() as u64));
                SparseAe::new(slice_len, config.feature_size, config.sparsity, &mut rng)
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let mut rng = Rng::new(init_seed(config.train.seed, 5));
        let level2 = SparseAe::new(
            5 * config.feature_size,
            config.final_feature_size,
            config.sparsity,
            &mut rng,
        )?;
        Self::new(level1.try_into().expect("five modalities"), level2)
    }

    pub fn slice_len(&self) -> usize {
        self.level1[0].input_dim()
    }

    pub fn feature_size(&self) -> usize {
        self.level1[0].code_dim()
    }

    pub fn final_feature_size(&self) -> usize {
        self.level2.code_dim()
    }

    /// Encodes one bundle of five aligned, normalized, flattened slices into `Z`.
    pub fn encode_slice(&self, bundle: [&[f32]; 5]) -> Result<Array1<f32>> {
        let mut codes = Vec::with_capacity(5 * self.feature_size());
        for (m, slice) in Modality::ALL.iter().zip(bundle) {
            if slice.len() != self.slice_len() {
                return Err(Error::shape(
                    format!("{m} slice"),
                    format!("{} pixels", self.slice_len()),
                    format!("{} pixels", slice.len()),
                ));
            }
            codes.extend(self.level1[m.index()].encode(ArrayView1::from(slice))?);
        }
        self.level2.encode(Array1::from(codes).view())
    }

    /// Encodes every slice position of a patient, inferior to superior.
    pub fn encode_patient(&self, record: &PatientRecord, filter_empty: bool) -> Result<FeatureSequence> {
        let dims = record.dims();
        for (m, v) in Modality::ALL.iter().zip(&record.volumes) {
            if v.dims != dims {
                return Err(Error::Data(format!(
                    "patient {}: {m} volume is {} but ADC is {dims}",
                    record.id, v.dims
                )));
            }
        }
        if dims.slice_len() != self.slice_len() {
            return Err(Error::Data(format!(
                "patient {}: slices have {} pixels ({}x{}) but the stack expects {}",
                record.id,
                dims.slice_len(),
                dims.nx,
                dims.ny,
                self.slice_len()
            )));
        }
        let mut rows = Vec::with_capacity(dims.nz);
        for z in slice_positions(record, filter_empty) {
            let bundle = Modality::ALL.map(|m| record.volume(m).slice(z));
            rows.push(self.encode_slice(bundle)?);
        }
        if rows.is_empty() {
            return Err(Error::Data(format!(
                "patient {}: every slice was filtered out",
                record.id
            )));
        }
        let views: Vec<_> = rows.iter().map(|r| r.view().insert_axis(Axis(0))).collect();
        let steps = concatenate(Axis(0), &views).expect("rows share the code size");
        FeatureSequence::new(record.id.clone(), steps, record.label)
    }

    /// Codes `Z_1..Z_5` concatenated in modality order, one row per aligned slice.
    pub fn level1_codes(&self, slices: &[Array2<f32>; 5]) -> Result<Array2<f32>> {
        let codes = Modality::ALL
            .iter()
            .map(|m| self.level1[m.index()].encode_batch(slices[m.index()].view()))
            .collect::<Result<Vec<_>>>()?;
        let views: Vec<_> = codes.iter().map(|c| c.view()).collect();
        Ok(concatenate(Axis(1), &views).expect("aligned slice counts"))
    }

    /// Trains the five level-1 autoencoders on their modality's slices, then
    /// the level-2 autoencoder on the concatenated level-1 codes.
    pub fn train(slices: &[Array2<f32>; 5], config: &FusionConfig) -> Result<(Self, FusionTrainReport)> {
        let count = slices[0].nrows();
        let px = slices[0].ncols();
        for (m, s) in Modality::ALL.iter().zip(slices) {
            if s.nrows() != count {
                return Err(Error::Data(format!(
                    "{m} has {} training slices but ADC has {count}; modality slice sets must be index-aligned",
                    s.nrows()
                )));
            }
            if s.ncols() != px {
                return Err(Error::Data(format!(
                    "{m} slices have {} pixels, ADC slices {px}",
                    s.ncols()
                )));
            }
        }
        if count == 0 {
            return Err(Error::Data("no training slices".into()));
        }

        let mut stack = Self::init(px, config)?;
        let mut report = FusionTrainReport::default();
        for m in Modality::ALL {
            let cfg = AeTrainConfig {
                seed: train_seed(config.train.seed, m.index() as u64),
                ..config.train
            };
            let trace = stack.level1[m.index()]
                .train(slices[m.index()].view(), &cfg)
                .map_err(|e| e.in_stage(stage_name(m)))?;
            report.level1.push(trace);
        }
        let codes = stack.level1_codes(slices)?;
        let cfg = AeTrainConfig {
            seed: train_seed(config.train.seed, 5),
            ..config.train
        };
        report.level2 = stack
            .level2
            .train(codes.view(), &cfg)
            .map_err(|e| e.in_stage("level-2 autoencoder"))?;
        Ok((stack, report))
    }
}

fn stage_name(m: Modality) -> &'static str {
    match m {
        Modality::Adc => "ADC autoencoder",
        Modality::Cbf => "CBF autoencoder",
        Modality::Cbv => "CBV autoencoder",
        Modality::Dwi => "DWI autoencoder",
        Modality::Tmax => "Tmax autoencoder",
    }
}

/// Slice indices kept for a patient, ascending.
pub fn slice_positions(record: &PatientRecord, filter_empty: bool) -> Vec<usize> {
    let dims = record.dims();
    (0..dims.nz)
        .filter(|&z| {
            if !filter_empty {
                return true;
            }
            let total: f64 = record
                .volumes
                .iter()
                .map(|v| v.slice(z).iter().map(|&x| x as f64).sum::<f64>())
                .sum();
            (total / (5 * dims.slice_len()) as f64) as f32 >= EMPTY_SLICE_THRESHOLD
        })
        .collect()
}

/// Pools aligned slices from several patients into one matrix per modality.
pub fn pool_slices(patients: &[&PatientRecord], filter_empty: bool) -> Result<[Array2<f32>; 5]> {
    let first = patients
        .first()
        .ok_or_else(|| Error::Data("no patients to pool slices from".into()))?;
    let px = first.dims().slice_len();
    let mut data: [Vec<f32>; 5] = Default::default();
    let mut rows = 0;
    for p in patients {
        if p.dims().slice_len() != px {
            return Err(Error::Data(format!(
                "patient {} has {} pixels per slice, expected {px}",
                p.id,
                p.dims().slice_len()
            )));
        }
        for z in slice_positions(p, filter_empty) {
            for m in Modality::ALL {
                data[m.index()].extend_from_slice(p.volume(m).slice(z));
            }
            rows += 1;
        }
    }
    Ok(data.map(|d| Array2::from_shape_vec((rows, px), d).expect("row-major slices")))
}
