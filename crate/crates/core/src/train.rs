//! Model construction and the shared mini-batch training loop.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::baselines::{build_baseline, BaselineKind};
use crate::capsnet::{build_capsnet, margin_loss_batch, plan_for_case, CapsPlan, MarginLossConfig};
use crate::exec::{map_indexed, ExecMode};
use crate::grid::CaseName;
use crate::nn::{argmax, cross_entropy, Checkpoint, Network, OptimizerConfig, Optimizer, Pass, Tensor};
use crate::pmu::{window_features, Dataset, FEATURE_CHANNELS};
use crate::rng::{stream, Stream};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Capsnet,
    Mlp,
    Cnn1d,
    Cnn2d,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Capsnet, ModelKind::Mlp, ModelKind::Cnn1d, ModelKind::Cnn2d];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Capsnet => "capsnet",
            ModelKind::Mlp => "mlp",
            ModelKind::Cnn1d => "cnn1d",
            ModelKind::Cnn2d => "cnn2d",
        }
    }

    pub fn baseline(self) -> Option<BaselineKind> {
        match self {
            ModelKind::Capsnet => None,
            ModelKind::Mlp => Some(BaselineKind::Mlp),
            ModelKind::Cnn1d => Some(BaselineKind::Cnn1d),
            ModelKind::Cnn2d => Some(BaselineKind::Cnn2d),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "capsnet" | "cn" => Ok(ModelKind::Capsnet),
            other => other.parse::<BaselineKind>().map(|b| match b {
                BaselineKind::Mlp => ModelKind::Mlp,
                BaselineKind::Cnn1d => ModelKind::Cnn1d,
                BaselineKind::Cnn2d => ModelKind::Cnn2d,
            }).map_err(|_| Error::Config(format!("unknown model '{s}' (expected capsnet, mlp, cnn1d or cnn2d)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    Margin(MarginLossConfig),
    CrossEntropy,
}

impl LossKind {
    pub fn eval(&self, scores: &Tensor<f32>, labels: &[usize]) -> Result<(f32, Tensor<f32>)> {
        match self {
            LossKind::Margin(cfg) => margin_loss_batch(scores, labels, cfg),
            LossKind::CrossEntropy => cross_entropy(scores, labels),
        }
    }
}

/// A trainable classifier and the loss it is trained with.
pub struct Model {
    pub kind: ModelKind,
    pub net: Network<f32>,
    pub loss: LossKind,
}

impl Model {
    /// The model of `kind` for a case's window shape and load-bus classes.
    pub fn for_case(kind: ModelKind, case: CaseName, seed: u64, margin: MarginLossConfig) -> Result<Self> {
        let plan = plan_for_case(case);
        match kind.baseline() {
            None => Self::capsnet(&plan, seed, margin),
            Some(b) => Ok(Model { kind, net: build_baseline(b, plan.input, plan.digit_count, seed)?, loss: LossKind::CrossEntropy }),
        }
    }

    pub fn capsnet(plan: &CapsPlan, seed: u64, margin: MarginLossConfig) -> Result<Self> {
        margin.validate()?;
        Ok(Model { kind: ModelKind::Capsnet, net: build_capsnet(plan, seed)?, loss: LossKind::Margin(margin) })
    }

    pub fn classes(&self) -> usize {
        self.net.outputs()
    }

    pub fn checkpoint(&self, header: &str) -> Checkpoint {
        Checkpoint::from_network(&self.net, &format!("model = \"{}\"\n{header}", self.kind))
    }

    /// Predicted classes for a feature set, in batches.
    pub fn predict(&self, set: &FeatureSet, batch: usize, mode: ExecMode) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(set.len());
        for idx in (0..set.len()).collect::<Vec<_>>().chunks(batch.max(1)) {
            let scores = self.net.infer(&set.batch(idx)?, mode)?;
            out.extend(scores.data.chunks(self.classes()).map(argmax));
        }
        Ok(out)
    }
}

/// Model inputs and labels of a dataset, as f32 features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    /// `(H, W, C)` of one item.
    pub shape: (usize, usize, usize),
    pub data: Vec<f32>,
    pub labels: Vec<usize>,
}

impl FeatureSet {
    pub fn from_dataset(ds: &Dataset, mode: ExecMode) -> Self {
        let feats = map_indexed(mode, ds.len(), |i| window_features(&ds.samples[i].window));
        FeatureSet {
            shape: (ds.n_gen, ds.window_len, FEATURE_CHANNELS),
            data: feats.concat(),
            labels: ds.labels(),
        }
    }

    pub fn new(shape: (usize, usize, usize), data: Vec<f32>, labels: Vec<usize>) -> Result<Self> {
        if data.len() != labels.len() * shape.0 * shape.1 * shape.2 {
            return Err(Error::Shape(format!("{} feature values for {} items of {shape:?}", data.len(), labels.len())));
        }
        Ok(FeatureSet { shape, data, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn item_len(&self) -> usize {
        self.shape.0 * self.shape.1 * self.shape.2
    }

    pub fn batch(&self, idx: &[usize]) -> Result<Tensor<f32>> {
        let k = self.item_len();
        let mut data = Vec::with_capacity(idx.len() * k);
        for &i in idx {
            data.extend_from_slice(&self.data[i * k..(i + 1) * k]);
        }
        Tensor::new(vec![idx.len(), self.shape.0, self.shape.1, self.shape.2], data)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    /// Epochs without a validation-accuracy improvement before stopping.
    pub patience: usize,
    pub optimizer: OptimizerConfig,
    pub margin: MarginLossConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: 100,
            batch_size: 32,
            patience: 10,
            optimizer: OptimizerConfig::default(),
            margin: MarginLossConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("max_epochs and batch_size must be positive".into()));
        }
        self.optimizer.validate()?;
        self.margin.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub history: Vec<EpochStats>,
    /// Epoch whose parameters were kept (1-based).
    pub best_epoch: usize,
    pub best_val_acc: f64,
}

impl TrainReport {
    /// History as CSV: `epoch,train_loss,train_acc,val_loss,val_acc`.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epoch", "train_loss", "train_acc", "val_loss", "val_acc"]).map_err(csv_err)?;
        for e in &self.history {
            w.write_record([
                e.epoch.to_string(),
                format!("{:.6}", e.train_loss),
                format!("{:.6}", e.train_acc),
                format!("{:.6}", e.val_loss),
                format!("{:.6}", e.val_acc),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Mean loss and accuracy of the evaluation-mode model on a set.
pub fn evaluate(model: &Model, set: &FeatureSet, batch: usize, mode: ExecMode) -> Result<(f64, f64)> {
    if set.is_empty() {
        return Ok((0.0, 0.0));
    }
    let (mut loss, mut correct) = (0.0f64, 0usize);
    let idx: Vec<usize> = (0..set.len()).collect();
    for chunk in idx.chunks(batch.max(1)) {
        let labels: Vec<usize> = chunk.iter().map(|&i| set.labels[i]).collect();
        let scores = model.net.infer(&set.batch(chunk)?, mode)?;
        let (l, _) = model.loss.eval(&scores, &labels)?;
        loss += l as f64 * chunk.len() as f64;
        correct += scores.data.chunks(model.classes()).zip(&labels).filter(|(s, &l)| argmax(s) == l).count();
    }
    Ok((loss / set.len() as f64, correct as f64 / set.len() as f64))
}

/// Mini-batch training with early stopping on validation accuracy. The
/// parameters of the best validation epoch are restored before returning.
pub fn train(model: &mut Model, train_set: &FeatureSet, val_set: &FeatureSet, cfg: &TrainConfig, seed: u64, mode: ExecMode) -> Result<TrainReport> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Training("empty training set".into()));
    }
    if train_set.shape != val_set.shape {
        return Err(Error::Shape("training and validation inputs differ in shape".into()));
    }
    let q = model.classes();
    if let Some(&bad) = train_set.labels.iter().chain(&val_set.labels).find(|&&l| l >= q) {
        return Err(Error::Shape(format!("label {bad} outside the model's {q} classes")));
    }
    let mut opt = Optimizer::new(cfg.optimizer);
    let mut history = Vec::new();
    let mut best: Option<(usize, f64, Vec<Vec<f32>>)> = None;
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut batch_no = 0usize;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut stream(seed, Stream::Shuffle, epoch as u64));
        let (mut loss_sum, mut correct) = (0.0f64, 0usize);
        for idx in order.chunks(cfg.batch_size) {
            let labels: Vec<usize> = idx.iter().map(|&i| train_set.labels[i]).collect();
            model.net.zero_grad();
            let scores = model.net.forward(&train_set.batch(idx)?, Pass::train(mode))?;
            let (loss, grad) = model.loss.eval(&scores, &labels)?;
            if !loss.is_finite() {
                return Err(Error::Training(format!("non-finite loss at epoch {epoch}, batch {batch_no}")));
            }
            model.net.backward(&grad, mode)?;
            opt.step(model.net.params_mut(), batch_no)?;
            batch_no += 1;
            loss_sum += loss as f64 * idx.len() as f64;
            correct += scores.data.chunks(q).zip(&labels).filter(|(s, &l)| argmax(s) == l).count();
        }
        let n = train_set.len() as f64;
        let (val_loss, val_acc) = evaluate(model, val_set, cfg.batch_size, mode)?;
        let stats = EpochStats { epoch, train_loss: loss_sum / n, train_acc: correct as f64 / n, val_loss, val_acc };
        log::info!(
            "{} epoch {epoch}: train loss {:.4} acc {:.3}, val loss {:.4} acc {:.3}",
            model.kind,
            stats.train_loss,
            stats.train_acc,
            val_loss,
            val_acc
        );
        history.push(stats);
        if best.as_ref().is_none_or(|b| val_acc > b.1) {
            best = Some((epoch, val_acc, model.net.params().iter().map(|p| p.data().to_vec()).collect()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    let (best_epoch, best_val_acc, params) = best.expect("at least one epoch ran");
    for (p, v) in model.net.params_mut().into_iter().zip(params) {
        p.value.data = v;
    }
    Ok(TrainReport { history, best_epoch, best_val_acc })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two constant windows, one per class.
    fn toy(n: usize) -> FeatureSet {
        let shape = (3, 40, 2);
        let k = 240;
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let c = i % 2;
            data.extend((0..k).map(|j| if (j % 2 == 0) == (c == 0) { 0.8 } else { -0.3 }));
            labels.push(c);
        }
        FeatureSet::new(shape, data, labels).unwrap()
    }

    fn small_plan() -> CapsPlan {
        CapsPlan {
            input: (3, 40, 2),
            conv1_kernels: 8,
            conv1_size: (1, 5),
            conv1_stride: (1, 5),
            dropout: 0.1,
            conv2_kernels: 8,
            conv2_size: (1, 2),
            conv2_stride: (1, 2),
            primary_dim: 4,
            digit_count: 2,
            digit_dim: 4,
            routing_iters: 3,
        }
    }

    fn quick(epochs: usize) -> TrainConfig {
        TrainConfig { max_epochs: epochs, batch_size: 8, patience: 10, ..Default::default() }
    }

    #[test]
    fn separable_toy_capsnet() {
        let mut m = Model::capsnet(&small_plan(), 3, MarginLossConfig::default()).unwrap();
        let r = train(&mut m, &toy(64), &toy(16), &quick(5), 3, ExecMode::Parallel).unwrap();
        assert_eq!(r.best_val_acc, 1.0, "{:?}", r.history);
    }

    #[test]
    fn separable_toy_baselines() {
        for kind in [BaselineKind::Mlp, BaselineKind::Cnn1d, BaselineKind::Cnn2d] {
            let mut m = Model {
                kind: ModelKind::Mlp,
                net: build_baseline(kind, (3, 40, 2), 2, 1).unwrap(),
                loss: LossKind::CrossEntropy,
            };
            let r = train(&mut m, &toy(64), &toy(16), &quick(5), 1, ExecMode::Parallel).unwrap();
            assert_eq!(r.best_val_acc, 1.0, "{kind}: {:?}", r.history);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let run = |mode| {
            let mut m = Model::capsnet(&small_plan(), 9, MarginLossConfig::default()).unwrap();
            train(&mut m, &toy(40), &toy(10), &quick(3), 9, mode).unwrap();
            m.checkpoint("").to_bytes().unwrap()
        };
        let a = run(ExecMode::Parallel);
        assert_eq!(a, run(ExecMode::Parallel));
        assert_eq!(a, run(ExecMode::Sequential));
    }

    #[test]
    fn history_csv_header() {
        let mut m = Model::capsnet(&small_plan(), 1, MarginLossConfig::default()).unwrap();
        let r = train(&mut m, &toy(16), &toy(4), &quick(2), 1, ExecMode::Sequential).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("epoch,train_loss,train_acc,val_loss,val_acc\n"));
        assert_eq!(text.lines().count(), 1 + r.history.len());
    }

    #[test]
    fn model_kind_parsing() {
        assert_eq!("capsnet".parse::<ModelKind>().unwrap(), ModelKind::Capsnet);
        assert_eq!("cnn2d".parse::<ModelKind>().unwrap(), ModelKind::Cnn2d);
        assert!("svm".parse::<ModelKind>().is_err());
    }
}
