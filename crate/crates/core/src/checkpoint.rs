//! Binary checkpoints and feature caches.
//!
//! Layout, all integers and reals little-endian:
//!
//! ```text
//! magic      b"AE2L"
//! version    u32
//! kind       u8
//! n_hyper    u32, then per entry: name_len u16, name (utf-8), value f64
//! n_tensors  u32, then per entry: name_len u16, name (utf-8),
//!            rows u32, cols u32, rows*cols f32 in row-major order
//! ```

use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::fusion::{FeatureSequence, FusionStack};
use crate::lstm::{LstmLayer, LstmModel};
use crate::nn::{Activation, Dense, ParamMatrix};
use crate::sparse_ae::{SparseAe, SparsityParams};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"AE2L";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckpointKind {
    SparseAe = 1,
    FusionStack = 2,
    Lstm = 3,
    FeatureCache = 4,
}

impl CheckpointKind {
    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            1 => Ok(Self::SparseAe),
            2 => Ok(Self::FusionStack),
            3 => Ok(Self::Lstm),
            4 => Ok(Self::FeatureCache),
            t => Err(Error::parse("kind", format!("unknown checkpoint kind tag {t}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::SparseAe => "sparse-ae",
            Self::FusionStack => "fusion-stack",
            Self::Lstm => "lstm",
            Self::FeatureCache => "feature-cache",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub values: Array2<f32>,
}

/// Decoded container, independent of the model it holds.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: CheckpointKind,
    pub hyper: Vec<(String, f64)>,
    pub tensors: Vec<Tensor>,
}

impl Checkpoint {
    pub fn new(kind: CheckpointKind) -> Self {
        Self {
            kind,
            hyper: Vec::new(),
            tensors: Vec::new(),
        }
    }

    fn push_hyper(&mut self, name: impl Into<String>, value: f64) {
        self.hyper.push((name.into(), value));
    }

    fn push_tensor(&mut self, name: impl Into<String>, values: &Array2<f32>) {
        self.tensors.push(Tensor {
            name: name.into(),
            values: values.clone(),
        });
    }

    pub fn hyper(&self, name: &str) -> Result<f64> {
        self.hyper
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| Error::parse(name, "missing hyperparameter"))
    }

    fn hyper_usize(&self, name: &str) -> Result<usize> {
        let v = self.hyper(name)?;
        if v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
            return Err(Error::parse(name, format!("expected a count, got {v}")));
        }
        Ok(v as usize)
    }

    pub fn tensor(&self, name: &str) -> Result<&Array2<f32>> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .map(|t| &t.values)
            .ok_or_else(|| Error::parse(name, "missing tensor"))
    }

    fn expect_kind(&self, kind: CheckpointKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::UnsupportedFormat(format!(
                "expected a {} checkpoint, found {}",
                kind.name(),
                self.kind.name()
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.push(self.kind as u8);
        out.extend_from_slice(&(self.hyper.len() as u32).to_le_bytes());
        for (name, value) in &self.hyper {
            write_name(&mut out, name);
            out.extend_from_slice(&value.to_le_bytes());
        }
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            write_name(&mut out, &t.name);
            let (rows, cols) = t.values.dim();
            out.extend_from_slice(&(rows as u32).to_le_bytes());
            out.extend_from_slice(&(cols as u32).to_le_bytes());
            for v in t.values.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4, "magic")? != MAGIC {
            return Err(Error::parse("magic", "not an AE2L checkpoint"));
        }
        let version = r.u32("version")?;
        if version != FORMAT_VERSION {
            return Err(Error::UnsupportedFormat(format!(
                "checkpoint version {version}, this build reads version {FORMAT_VERSION}"
            )));
        }
        let kind = CheckpointKind::from_tag(r.take(1, "kind")?[0])?;
        let n_hyper = r.u32("hyperparameter count")? as usize;
        let mut hyper = Vec::with_capacity(n_hyper.min(1024));
        for _ in 0..n_hyper {
            let name = r.name()?;
            let value = f64::from_le_bytes(r.take(8, &name)?.try_into().expect("8 bytes"));
            hyper.push((name, value));
        }
        let n_tensors = r.u32("tensor count")? as usize;
        let mut tensors = Vec::with_capacity(n_tensors.min(1024));
        for _ in 0..n_tensors {
            let name = r.name()?;
            let rows = r.u32(&name)? as usize;
            let cols = r.u32(&name)? as usize;
            let len = rows
                .checked_mul(cols)
                .and_then(|n| n.checked_mul(4))
                .ok_or_else(|| Error::parse(&name, "tensor size overflows"))?;
            let raw = r.take(len, &name)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            let values = Array2::from_shape_vec((rows, cols), data).expect("length checked above");
            tensors.push(Tensor { name, values });
        }
        if r.pos != bytes.len() {
            return Err(Error::parse(
                "trailer",
                format!("{} unexpected trailing bytes", bytes.len() - r.pos),
            ));
        }
        Ok(Self { kind, hyper, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn write_name(out: &mut Vec<u8>, name: &str) {
    let len = u16::try_from(name.len()).expect("names are short");
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(name.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, field: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::parse(field, "truncated checkpoint"))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, field: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().expect("4 bytes")))
    }

    fn name(&mut self) -> Result<String> {
        let len = u16::from_le_bytes(self.take(2, "name length")?.try_into().expect("2 bytes")) as usize;
        let raw = self.take(len, "name")?;
        String::from_utf8(raw.to_vec()).map_err(|_| Error::parse("name", "not valid utf-8"))
    }
}

fn push_ae(ck: &mut Checkpoint, prefix: &str, ae: &SparseAe<f32>) {
    ck.push_tensor(format!("{prefix}encoder.weight"), &ae.encoder.weight.values);
    ck.push_tensor(format!("{prefix}encoder.bias"), &ae.encoder.bias.values);
    ck.push_tensor(format!("{prefix}decoder.weight"), &ae.decoder.weight.values);
    ck.push_tensor(format!("{prefix}decoder.bias"), &ae.decoder.bias.values);
}

fn push_sparsity(ck: &mut Checkpoint, s: &SparsityParams) {
    ck.push_hyper("rho", s.rho);
    ck.push_hyper("beta", s.beta);
    ck.push_hyper("lambda", s.lambda);
}

fn read_sparsity(ck: &Checkpoint) -> Result<SparsityParams> {
    Ok(SparsityParams {
        rho: ck.hyper("rho")?,
        beta: ck.hyper("beta")?,
        lambda: ck.hyper("lambda")?,
    })
}

fn param(ck: &Checkpoint, name: &str) -> Result<ParamMatrix<f32>> {
    Ok(ParamMatrix::from_values(name, ck.tensor(name)?.clone()))
}

fn read_dense(ck: &Checkpoint, prefix: &str) -> Result<Dense<f32>> {
    Dense::from_params(
        param(ck, &format!("{prefix}.weight"))?,
        param(ck, &format!("{prefix}.bias"))?,
        Activation::Sigmoid,
    )
}

fn read_ae(ck: &Checkpoint, prefix: &str, sparsity: SparsityParams) -> Result<SparseAe<f32>> {
    SparseAe::from_parts(
        read_dense(ck, &format!("{prefix}encoder"))?,
        read_dense(ck, &format!("{prefix}decoder"))?,
        sparsity,
    )
}

pub fn sparse_ae_to_checkpoint(ae: &SparseAe<f32>) -> Checkpoint {
    let mut ck = Checkpoint::new(CheckpointKind::SparseAe);
    ck.push_hyper("input_dim", ae.input_dim() as f64);
    ck.push_hyper("code_dim", ae.code_dim() as f64);
    push_sparsity(&mut ck, &ae.sparsity);
    push_ae(&mut ck, "", ae);
    ck
}

pub fn sparse_ae_from_checkpoint(ck: &Checkpoint) -> Result<SparseAe<f32>> {
    ck.expect_kind(CheckpointKind::SparseAe)?;
    let ae = read_ae(ck, "", read_sparsity(ck)?)?;
    check_dim(ck, "input_dim", ae.input_dim())?;
    check_dim(ck, "code_dim", ae.code_dim())?;
    Ok(ae)
}

fn check_dim(ck: &Checkpoint, name: &str, actual: usize) -> Result<()> {
    let declared = ck.hyper_usize(name)?;
    if declared != actual {
        return Err(Error::shape(name, declared, actual));
    }
    Ok(())
}

const LEVEL1_PREFIX: [&str; 5] = ["adc.", "cbf.", "cbv.", "dwi.", "tmax."];

pub fn fusion_to_checkpoint(stack: &FusionStack) -> Checkpoint {
    let mut ck = Checkpoint::new(CheckpointKind::FusionStack);
    ck.push_hyper("slice_len", stack.slice_len() as f64);
    ck.push_hyper("feature_size", stack.feature_size() as f64);
    ck.push_hyper("final_feature_size", stack.final_feature_size() as f64);
    push_sparsity(&mut ck, &stack.level2.sparsity);
    for (prefix, ae) in LEVEL1_PREFIX.iter().zip(&stack.level1) {
        push_ae(&mut ck, prefix, ae);
    }
    push_ae(&mut ck, "fusion.", &stack.level2);
    ck
}

pub fn fusion_from_checkpoint(ck: &Checkpoint) -> Result<FusionStack> {
    ck.expect_kind(CheckpointKind::FusionStack)?;
    let sparsity = read_sparsity(ck)?;
    let level1 = LEVEL1_PREFIX
        .iter()
        .map(|p| read_ae(ck, p, sparsity))
        .collect::<Result<Vec<_>>>()?;
    let level1: [SparseAe<f32>; 5] = level1.try_into().expect("five modalities");
    let stack = FusionStack::new(level1, read_ae(ck, "fusion.", sparsity)?)?;
    check_dim(ck, "slice_len", stack.slice_len())?;
    check_dim(ck, "feature_size", stack.feature_size())?;
    check_dim(ck, "final_feature_size", stack.final_feature_size())?;
    Ok(stack)
}

fn push_layer(ck: &mut Checkpoint, prefix: &str, layer: &LstmLayer<f32>) {
    ck.push_tensor(format!("{prefix}.input_weights"), &layer.input_weights.values);
    ck.push_tensor(format!("{prefix}.recurrent_weights"), &layer.recurrent_weights.values);
    ck.push_tensor(format!("{prefix}.bias"), &layer.bias.values);
}

fn read_layer(ck: &Checkpoint, prefix: &str) -> Result<LstmLayer<f32>> {
    LstmLayer::from_params(
        param(ck, &format!("{prefix}.input_weights"))?,
        param(ck, &format!("{prefix}.recurrent_weights"))?,
        param(ck, &format!("{prefix}.bias"))?,
    )
}

pub fn lstm_to_checkpoint(model: &LstmModel<f32>) -> Checkpoint {
    let mut ck = Checkpoint::new(CheckpointKind::Lstm);
    ck.push_hyper("input_dim", model.input_dim() as f64);
    ck.push_hyper("hidden_dim", model.hidden_dim() as f64);
    push_layer(&mut ck, "lstm1", &model.layer1);
    push_layer(&mut ck, "lstm2", &model.layer2);
    ck.push_tensor("head.weight", &model.head.weight.values);
    ck.push_tensor("head.bias", &model.head.bias.values);
    ck
}

pub fn lstm_from_checkpoint(ck: &Checkpoint) -> Result<LstmModel<f32>> {
    ck.expect_kind(CheckpointKind::Lstm)?;
    let model = LstmModel::from_parts(
        read_layer(ck, "lstm1")?,
        read_layer(ck, "lstm2")?,
        read_dense(ck, "head")?,
    )?;
    check_dim(ck, "input_dim", model.input_dim())?;
    check_dim(ck, "hidden_dim", model.hidden_dim())?;
    Ok(model)
}

/// One tensor per patient, named by patient id; labels go in the
/// hyperparameter block as `label:<index>`.
pub fn features_to_checkpoint(features: &[FeatureSequence]) -> Checkpoint {
    let mut ck = Checkpoint::new(CheckpointKind::FeatureCache);
    ck.push_hyper("count", features.len() as f64);
    for (i, f) in features.iter().enumerate() {
        ck.push_hyper(format!("label:{i}"), f.label as f64);
        ck.push_tensor(f.patient_id.clone(), &f.steps);
    }
    ck
}

pub fn features_from_checkpoint(ck: &Checkpoint) -> Result<Vec<FeatureSequence>> {
    ck.expect_kind(CheckpointKind::FeatureCache)?;
    let count = ck.hyper_usize("count")?;
    if count != ck.tensors.len() {
        return Err(Error::shape("feature cache entries", count, ck.tensors.len()));
    }
    ck.tensors
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let field = format!("label:{i}");
            let label = ck.hyper_usize(&field)?;
            let label = u8::try_from(label).map_err(|_| Error::parse(&field, "label out of range"))?;
            FeatureSequence::new(t.name.clone(), t.values.clone(), label)
        })
        .collect()
}
