//! Two stacked LSTM layers and a sigmoid readout, trained with half mean
//! squared error on the final-step prediction of each sequence.
//!
//! Gate rows are stored in blocks of `hidden` rows in the order input,
//! forget, output, candidate. There are no peephole connections; the forget
//! bias starts at 1.

use ndarray::{s, Array1, Array2, Array3, ArrayView2, Axis};

use crate::fusion::FeatureSequence;
use crate::nn::{
    glorot_limit, Activation, Dense, OptimizerKind, OptimizerState, ParamMatrix, Parameterized, Real, Rng,
};
use crate::{Error, Result};

pub const FORGET_BIAS_INIT: f64 = 1.0;
/// Probabilities at or above this are classed as poor outcome.
pub const DECISION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct LstmLayer<T> {
    pub input_weights: ParamMatrix<T>,
    pub recurrent_weights: ParamMatrix<T>,
    pub bias: ParamMatrix<T>,
}

/// Everything the backward pass needs from one layer's forward pass.
#[derive(Debug, Clone)]
pub struct LayerTrace<T> {
    pub inputs: Array2<T>,
    /// Activated gates per step, `[i | f | o | g]`.
    pub gates: Array2<T>,
    pub cells: Array2<T>,
    pub tanh_cells: Array2<T>,
    pub hidden: Array2<T>,
}

impl<T: Real> LstmLayer<T> {
    pub fn new(name: &str, input: usize, hidden: usize, rng: &mut Rng) -> Self {
        let mut init = |suffix: &str, cols: usize| {
            let r = glorot_limit(cols, hidden);
            let values = Array2::from_shape_simple_fn((4 * hidden, cols), || T::of(rng.uniform_in(-r, r)));
            ParamMatrix::from_values(format!("{name}.{suffix}"), values)
        };
        let input_weights = init("input_weights", input);
        let recurrent_weights = init("recurrent_weights", hidden);
        let mut bias = ParamMatrix::zeros(format!("{name}.bias"), 4 * hidden, 1);
        bias.values
            .slice_mut(s![hidden..2 * hidden, ..])
            .fill(T::of(FORGET_BIAS_INIT));
        Self {
            input_weights,
            recurrent_weights,
            bias,
        }
    }

    pub fn from_params(
        input_weights: ParamMatrix<T>,
        recurrent_weights: ParamMatrix<T>,
        bias: ParamMatrix<T>,
    ) -> Result<Self> {
        let h4 = input_weights.rows();
        if !h4.is_multiple_of(4) || h4 == 0 {
            return Err(Error::shape("lstm gate rows", "a positive multiple of 4", h4));
        }
        let h = h4 / 4;
        if recurrent_weights.values.dim() != (h4, h) {
            return Err(Error::shape(
                &recurrent_weights.name,
                format!("{h4}x{h}"),
                format!("{:?}", recurrent_weights.values.dim()),
            ));
        }
        if bias.values.dim() != (h4, 1) {
            return Err(Error::shape(
                &bias.name,
                format!("{h4}x1"),
                format!("{:?}", bias.values.dim()),
            ));
        }
        Ok(Self {
            input_weights,
            recurrent_weights,
            bias,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_weights.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.recurrent_weights.cols()
    }

    /// Runs the recurrence from zero state over the rows of `inputs`.
    pub fn run(&self, inputs: ArrayView2<T>) -> Result<LayerTrace<T>> {
        if inputs.ncols() != self.input_dim() {
            return Err(Error::shape(
                format!("{} input", self.input_weights.name),
                format!("features of length {}", self.input_dim()),
                format!("features of length {}", inputs.ncols()),
            ));
        }
        let h = self.hidden_dim();
        let steps = inputs.nrows();
        let mut projected = inputs.dot(&self.input_weights.values.t());
        projected += &self.bias.values.t();

        let mut gates = Array2::zeros((steps, 4 * h));
        let mut cells = Array2::zeros((steps, h));
        let mut tanh_cells = Array2::zeros((steps, h));
        let mut hidden = Array2::zeros((steps, h));
        let mut h_prev = Array1::<T>::zeros(h);
        let mut c_prev = Array1::<T>::zeros(h);
        for t in 0..steps {
            let pre = &projected.row(t) + &self.recurrent_weights.values.dot(&h_prev);
            let mut gate = gates.row_mut(t);
            for k in 0..3 * h {
                gate[k] = pre[k].sigmoid();
            }
            for k in 3 * h..4 * h {
                gate[k] = pre[k].tanh();
            }
            for k in 0..h {
                let (i, f, o, g) = (gate[k], gate[h + k], gate[2 * h + k], gate[3 * h + k]);
                let c = f * c_prev[k] + i * g;
                let tc = c.tanh();
                cells[(t, k)] = c;
                tanh_cells[(t, k)] = tc;
                hidden[(t, k)] = o * tc;
            }
            h_prev.assign(&hidden.row(t));
            c_prev.assign(&cells.row(t));
        }
        Ok(LayerTrace {
            inputs: inputs.to_owned(),
            gates,
            cells,
            tanh_cells,
            hidden,
        })
    }

    /// Backpropagation through time. `d_hidden` holds `dL/dh_t` arriving from
    /// above at every step; returns `dL/dx_t` for every step.
    pub fn backward(&mut self, trace: &LayerTrace<T>, d_hidden: ArrayView2<T>) -> Array2<T> {
        let h = self.hidden_dim();
        let steps = trace.hidden.nrows();
        let mut d_pre = Array2::<T>::zeros((steps, 4 * h));
        let mut dh_next = Array1::<T>::zeros(h);
        let mut dc_next = Array1::<T>::zeros(h);
        let one = T::one();
        for t in (0..steps).rev() {
            let gate = trace.gates.row(t);
            let mut row = d_pre.row_mut(t);
            for k in 0..h {
                let (i, f, o, g) = (gate[k], gate[h + k], gate[2 * h + k], gate[3 * h + k]);
                let tc = trace.tanh_cells[(t, k)];
                let c_prev = if t > 0 { trace.cells[(t - 1, k)] } else { T::zero() };
                let dh = d_hidden[(t, k)] + dh_next[k];
                let d_o = dh * tc;
                let dc = dc_next[k] + dh * o * (one - tc * tc);
                let d_i = dc * g;
                let d_g = dc * i;
                let d_f = dc * c_prev;
                dc_next[k] = dc * f;
                row[k] = d_i * i * (one - i);
                row[h + k] = d_f * f * (one - f);
                row[2 * h + k] = d_o * o * (one - o);
                row[3 * h + k] = d_g * (one - g * g);
            }
            dh_next = self.recurrent_weights.values.t().dot(&row);
        }
        let mut h_prev = Array2::<T>::zeros((steps, h));
        if steps > 1 {
            h_prev
                .slice_mut(s![1.., ..])
                .assign(&trace.hidden.slice(s![..steps - 1, ..]));
        }
        self.input_weights.grad += &d_pre.t().dot(&trace.inputs);
        self.recurrent_weights.grad += &d_pre.t().dot(&h_prev);
        let db = d_pre.sum_axis(Axis(0));
        self.bias.grad.column_mut(0).zip_mut_with(&db, |g, &d| *g += d);
        d_pre.dot(&self.input_weights.values)
    }

    pub fn cast<U: Real>(&self) -> LstmLayer<U> {
        LstmLayer {
            input_weights: self.input_weights.cast(),
            recurrent_weights: self.recurrent_weights.cast(),
            bias: self.bias.cast(),
        }
    }

    fn params(&self) -> [&ParamMatrix<T>; 3] {
        [&self.input_weights, &self.recurrent_weights, &self.bias]
    }

    fn params_mut(&mut self) -> [&mut ParamMatrix<T>; 3] {
        [&mut self.input_weights, &mut self.recurrent_weights, &mut self.bias]
    }
}

/// Forward state of one sequence through the whole model.
#[derive(Debug, Clone)]
pub struct ModelTrace<T> {
    pub layer1: LayerTrace<T>,
    pub layer2: LayerTrace<T>,
    pub probability: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub probability: f64,
    /// 1 (poor outcome) iff `probability >= DECISION_THRESHOLD`.
    pub class: u8,
}

#[derive(Debug, Clone)]
pub struct LstmModel<T> {
    pub layer1: LstmLayer<T>,
    pub layer2: LstmLayer<T>,
    pub head: Dense<T>,
}

impl<T: Real> LstmModel<T> {
    pub fn new(input_dim: usize, hidden: usize, rng: &mut Rng) -> Result<Self> {
        if input_dim == 0 || hidden == 0 {
            return Err(Error::Usage(format!(
                "lstm sizes must be positive, got input {input_dim}, hidden {hidden}"
            )));
        }
        Ok(Self {
            layer1: LstmLayer::new("lstm1", input_dim, hidden, rng),
            layer2: LstmLayer::new("lstm2", hidden, hidden, rng),
            head: Dense::new("head", hidden, 1, Activation::Sigmoid, rng),
        })
    }

    pub fn from_parts(layer1: LstmLayer<T>, layer2: LstmLayer<T>, head: Dense<T>) -> Result<Self> {
        let h = layer1.hidden_dim();
        if layer2.input_dim() != h || layer2.hidden_dim() != h {
            return Err(Error::shape(
                "lstm layer 2",
                format!("{h} -> {h}"),
                format!("{} -> {}", layer2.input_dim(), layer2.hidden_dim()),
            ));
        }
        if head.input_dim() != h || head.output_dim() != 1 || head.activation != Activation::Sigmoid {
            return Err(Error::shape(
                "lstm head",
                format!("sigmoid {h} -> 1"),
                format!("{:?} {} -> {}", head.activation, head.input_dim(), head.output_dim()),
            ));
        }
        Ok(Self { layer1, layer2, head })
    }

    pub fn input_dim(&self) -> usize {
        self.layer1.input_dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.layer1.hidden_dim()
    }

    pub fn trace(&self, seq: ArrayView2<T>) -> Result<ModelTrace<T>> {
        if seq.nrows() == 0 {
            return Err(Error::Usage("lstm forward on an empty sequence".into()));
        }
        let layer1 = self.layer1.run(seq)?;
        let layer2 = self.layer2.run(layer1.hidden.view())?;
        let last = layer2.hidden.row(layer2.hidden.nrows() - 1);
        let probability = self.head.forward(last)?[0];
        Ok(ModelTrace {
            layer1,
            layer2,
            probability,
        })
    }

    /// Outcome probability from the final step of `seq` (one row per step).
    pub fn forward(&self, seq: ArrayView2<T>) -> Result<T> {
        Ok(self.trace(seq)?.probability)
    }

    /// Accumulates gradients for `dL/dp = d_probability` through head and both layers.
    pub fn backward(&mut self, trace: &ModelTrace<T>, d_probability: T) -> Result<()> {
        let steps = trace.layer2.hidden.nrows();
        let last = trace.layer2.hidden.row(steps - 1).insert_axis(Axis(0));
        self.head.forward_train(last)?;
        let d_last = self.head.backward(Array2::from_elem((1, 1), d_probability).view())?;

        let mut d_hidden2 = Array2::zeros(trace.layer2.hidden.raw_dim());
        d_hidden2.row_mut(steps - 1).assign(&d_last.row(0));
        let d_hidden1 = self.layer2.backward(&trace.layer2, d_hidden2.view());
        self.layer1.backward(&trace.layer1, d_hidden1.view());
        Ok(())
    }

    /// Probabilities for every sequence of a padded batch, each read at its own final step.
    pub fn forward_batch(&self, batch: &PaddedBatch<T>) -> Result<Vec<T>> {
        (0..batch.len()).map(|b| self.forward(batch.sequence(b))).collect()
    }

    /// Half-MSE over the batch without touching gradients.
    pub fn batch_loss(&self, batch: &PaddedBatch<T>) -> Result<f64> {
        let probs = self.forward_batch(batch)?;
        half_mse_f64(&probs, &batch.labels)
    }

    /// Half-MSE over the batch; accumulates its gradient.
    pub fn batch_loss_and_grad(&mut self, batch: &PaddedBatch<T>) -> Result<f64> {
        let n = T::of(batch.len() as f64);
        let mut probs = Vec::with_capacity(batch.len());
        for b in 0..batch.len() {
            let trace = self.trace(batch.sequence(b))?;
            let p = trace.probability;
            self.backward(&trace, (p - batch.labels[b]) / n)?;
            probs.push(p);
        }
        half_mse_f64(&probs, &batch.labels)
    }

    pub fn cast<U: Real>(&self) -> LstmModel<U> {
        LstmModel {
            layer1: self.layer1.cast(),
            layer2: self.layer2.cast(),
            head: self.head.cast(),
        }
    }
}

impl LstmModel<f32> {
    pub fn predict(&self, seq: &FeatureSequence) -> Result<Prediction> {
        let probability = self.forward(seq.steps.view())? as f64;
        Ok(Prediction {
            probability,
            class: u8::from(probability >= DECISION_THRESHOLD),
        })
    }
}

impl<T: Real> Parameterized<T> for LstmModel<T> {
    fn params(&self) -> Vec<&ParamMatrix<T>> {
        let mut p: Vec<_> = self.layer1.params().into_iter().collect();
        p.extend(self.layer2.params());
        p.extend(self.head.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut ParamMatrix<T>> {
        let mut p: Vec<_> = self.layer1.params_mut().into_iter().collect();
        p.extend(self.layer2.params_mut());
        p.extend(self.head.params_mut());
        p
    }
}

fn half_mse_f64<T: Real>(probs: &[T], labels: &[T]) -> Result<f64> {
    let p: Vec<f64> = probs.iter().map(|v| v.as_f64()).collect();
    let y: Vec<f64> = labels.iter().map(|v| v.as_f64()).collect();
    lstm_loss(&p, &y)
}

/// `(1/2N) Σ (p_i - y_i)^2`.
pub fn lstm_loss(predictions: &[f64], labels: &[f64]) -> Result<f64> {
    crate::nn::half_mse(predictions, labels)
}

/// Variable-length sequences zero-padded to a common length.
///
/// `features` is `batch x max_len x dim`; steps at or beyond a sequence's
/// length are padding and never reach the recurrence.
#[derive(Debug, Clone)]
pub struct PaddedBatch<T> {
    pub features: Array3<T>,
    pub lengths: Vec<usize>,
    pub labels: Vec<T>,
}

impl<T: Real> PaddedBatch<T> {
    pub fn from_arrays(seqs: &[ArrayView2<T>], labels: &[T]) -> Result<Self> {
        if seqs.is_empty() {
            return Err(Error::Usage("empty batch".into()));
        }
        if seqs.len() != labels.len() {
            return Err(Error::Usage(format!(
                "{} sequences but {} labels",
                seqs.len(),
                labels.len()
            )));
        }
        let dim = seqs[0].ncols();
        let max_len = seqs.iter().map(|s| s.nrows()).max().unwrap_or(0);
        let mut features = Array3::zeros((seqs.len(), max_len, dim));
        for (b, s) in seqs.iter().enumerate() {
            if s.nrows() == 0 {
                return Err(Error::Usage(format!("sequence {b} of the batch is empty")));
            }
            if s.ncols() != dim {
                return Err(Error::shape(
                    "batched sequence",
                    format!("features of length {dim}"),
                    s.ncols(),
                ));
            }
            features.slice_mut(s![b, ..s.nrows(), ..]).assign(s);
        }
        Ok(Self {
            features,
            lengths: seqs.iter().map(|s| s.nrows()).collect(),
            labels: labels.to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lengths.is_empty()
    }

    /// `mask[(b, t)]` is true for real (unpadded) steps.
    pub fn mask(&self) -> Array2<bool> {
        Array2::from_shape_fn((self.len(), self.features.dim().1), |(b, t)| t < self.lengths[b])
    }

    /// The unpadded steps of sequence `b`.
    pub fn sequence(&self, b: usize) -> ArrayView2<'_, T> {
        self.features.slice(s![b, ..self.lengths[b], ..])
    }
}

impl PaddedBatch<f32> {
    pub fn from_sequences(seqs: &[&FeatureSequence]) -> Result<Self> {
        let views: Vec<_> = seqs.iter().map(|s| s.steps.view()).collect();
        let labels: Vec<f32> = seqs.iter().map(|s| s.label as f32).collect();
        Self::from_arrays(&views, &labels)
    }
}

/// Groups sequence indices into mini-batches: shuffled, then bucketed by
/// length so most batches need no padding, with the batch order shuffled again.
pub fn make_batches(lengths: &[usize], batch_size: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..lengths.len()).collect();
    rng.shuffle(&mut order);
    order.sort_by_key(|&i| lengths[i]);
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size.max(1)).map(|c| c.to_vec()).collect();
    rng.shuffle(&mut batches);
    batches
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LstmTrainConfig {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for LstmTrainConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerKind::Adam,
            learning_rate: 1e-4,
            max_epochs: 1000,
            batch_size: 32,
            patience: 20,
            validation_fraction: 0.2,
            seed: 0,
        }
    }
}

impl LstmTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 {
            return Err(Error::config("lstm_epochs", "must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be >= 1"));
        }
        if self.patience == 0 {
            return Err(Error::config("patience", "must be >= 1"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::config(
                "validation_fraction",
                format!("must lie in (0, 1), got {}", self.validation_fraction),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("lr", format!("must be > 0, got {}", self.learning_rate)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmTrainOutcome {
    /// Sample-weighted mean mini-batch loss per epoch.
    pub train_loss: Vec<f64>,
    /// Validation loss after each epoch.
    pub val_loss: Vec<f64>,
    /// 1-based epoch whose weights were kept.
    pub best_epoch: usize,
    /// 1-based epoch at which training ended.
    pub stopped_epoch: usize,
}

/// Mini-batch training with early stopping on validation loss. On return the
/// model holds the weights of the best validation epoch.
pub fn train_lstm(
    model: &mut LstmModel<f32>,
    train: &[FeatureSequence],
    val: &[FeatureSequence],
    config: &LstmTrainConfig,
) -> Result<LstmTrainOutcome> {
    config.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Usage(format!(
            "lstm training needs non-empty train and validation sets, got {} and {}",
            train.len(),
            val.len()
        )));
    }
    for s in train.iter().chain(val) {
        if s.feature_dim() != model.input_dim() {
            return Err(Error::shape(
                format!("features of patient {}", s.patient_id),
                model.input_dim(),
                s.feature_dim(),
            ));
        }
    }
    let val_refs: Vec<_> = val.iter().collect();
    let val_batch = PaddedBatch::from_sequences(&val_refs)?;
    let lengths: Vec<usize> = train.iter().map(|s| s.len()).collect();

    let mut rng = Rng::new(config.seed);
    let mut opt = OptimizerState::<f32>::new(config.optimizer, config.learning_rate);
    let mut outcome = LstmTrainOutcome {
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        best_epoch: 0,
        stopped_epoch: 0,
    };
    let mut best_loss = f64::INFINITY;
    let mut best_weights: Vec<Array2<f32>> = model.params().iter().map(|p| p.values.clone()).collect();
    let mut since_best = 0;
    model.zero_grads();

    for epoch in 1..=config.max_epochs {
        let mut weighted = 0.0;
        for idx in make_batches(&lengths, config.batch_size, &mut rng) {
            let seqs: Vec<_> = idx.iter().map(|&i| &train[i]).collect();
            let batch = PaddedBatch::from_sequences(&seqs)?;
            let loss = model.batch_loss_and_grad(&batch)?;
            if !loss.is_finite() {
                return Err(Error::Training {
                    epoch,
                    detail: format!("non-finite lstm loss {loss}"),
                });
            }
            weighted += loss * seqs.len() as f64;
            opt.step(model.params_mut()).map_err(|e| Error::Training {
                epoch,
                detail: e.to_string(),
            })?;
        }
        outcome.train_loss.push(weighted / train.len() as f64);

        let val_loss = model.batch_loss(&val_batch)?;
        if !val_loss.is_finite() {
            return Err(Error::Training {
                epoch,
                detail: format!("non-finite validation loss {val_loss}"),
            });
        }
        outcome.val_loss.push(val_loss);
        outcome.stopped_epoch = epoch;
        if val_loss < best_loss {
            best_loss = val_loss;
            outcome.best_epoch = epoch;
            since_best = 0;
            for (dst, p) in best_weights.iter_mut().zip(model.params()) {
                dst.assign(&p.values);
            }
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }
    for (p, w) in model.params_mut().into_iter().zip(best_weights) {
        p.values = w;
    }
    Ok(outcome)
}

/// Splits off a label-stratified validation subset of roughly `fraction`
/// of each class. Both parts are non-empty when `items.len() >= 2`.
pub fn stratified_holdout<S>(
    items: &[S],
    label: impl Fn(&S) -> u8,
    fraction: f64,
    seed: u64,
) -> Result<(Vec<&S>, Vec<&S>)> {
    if items.len() < 2 {
        return Err(Error::Usage(format!(
            "need at least 2 sequences to hold out validation data, got {}",
            items.len()
        )));
    }
    let mut rng = Rng::new(seed);
    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut by_class: [Vec<&S>; 2] = [Vec::new(), Vec::new()];
    for it in items {
        by_class[usize::from(label(it) != 0)].push(it);
    }
    for class in by_class.iter_mut() {
        rng.shuffle(class);
        let k = ((class.len() as f64 * fraction).round() as usize).min(class.len().saturating_sub(1));
        val.extend(class.drain(..k));
        train.append(class);
    }
    if val.is_empty() {
        val.push(train.remove(0));
    }
    Ok((train, val))
}
