//! Training loop, trained classifiers and evaluation.

use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{histogram, ros, PreparedDataset, WindowSample};
use crate::error::{Error, Result};
use crate::hmm::{HmmClassifier, HmmConfig};
use crate::metrics::{report, EvalReport};
use crate::models::{batch_tensor, predict_logits, Architecture, ModelKind, Network, Standardizer};
use crate::optim::Adam;
use crate::rng::{stream_rng, Stream};
use crate::tape::Tape;
use crate::tensor::Real;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    /// 64-bit training; parameters are stored as 32-bit afterwards.
    Verify,
    #[default]
    Fast,
}

impl FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "verify" => Ok(Precision::Verify),
            "fast" => Ok(Precision::Fast),
            other => Err(Error::Config(format!("unknown precision {other:?} (expected verify or fast)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_initial: f64,
    pub lr_after: f64,
    /// Last epoch (1-based) trained at `lr_initial`.
    pub lr_switch_epoch: usize,
    pub seed: u64,
    /// Per-class cross-entropy weights.
    pub loss_weights: Option<Vec<f64>>,
    pub precision: Precision,
    /// Standardize inputs with statistics of the training windows.
    pub standardize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 60,
            batch_size: 256,
            lr_initial: 0.005,
            lr_after: 0.001,
            lr_switch_epoch: 40,
            seed: 0,
            loss_weights: None,
            precision: Precision::Fast,
            standardize: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        // epochs = 0 is a valid no-op run whatever the schedule says
        if self.epochs > 0 && self.lr_switch_epoch >= self.epochs {
            return Err(Error::Config(format!(
                "lr_switch_epoch ({}) must be smaller than epochs ({})",
                self.lr_switch_epoch, self.epochs
            )));
        }
        if !(self.lr_initial > 0.0 && self.lr_after > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if let Some(w) = &self.loss_weights {
            if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::Config("loss weights must be finite and non-negative".into()));
            }
        }
        Ok(())
    }

    /// Learning rate of a 1-based epoch.
    pub fn lr(&self, epoch: usize) -> f64 {
        if epoch <= self.lr_switch_epoch {
            self.lr_initial
        } else {
            self.lr_after
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Batch losses averaged with batch-size weights.
    pub loss: f64,
    pub lr: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,loss,lr,seconds\n");
        for e in &self.epochs {
            let _ = writeln!(s, "{},{},{},{:.3}", e.epoch, e.loss, e.lr, e.seconds);
        }
        s
    }
}

/// Runs the optimization schedule on `net` in place.
pub fn fit<T: Real>(
    net: &mut Network<T>,
    samples: &[WindowSample],
    cfg: &TrainConfig,
    standardizer: Option<&Standardizer>,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainLog> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let c = net.num_classes();
    if let Some((i, s)) = samples.iter().enumerate().find(|(_, s)| s.label >= c) {
        return Err(Error::Data(format!("training sample {i} has label {} but the model has {c} classes", s.label)));
    }
    let weights: Option<Vec<T>> = match &cfg.loss_weights {
        Some(w) if w.len() != c => {
            return Err(Error::Config(format!("{} loss weights for {c} classes", w.len())));
        }
        Some(w) => Some(w.iter().map(|&v| T::from_f64(v)).collect()),
        None => None,
    };
    let mut adam = Adam::new(&net.params, cfg.lr_initial);
    let mut log = TrainLog::default();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        adam.lr = cfg.lr(epoch);
        order.sort_unstable();
        order.shuffle(&mut stream_rng(cfg.seed, Stream::Shuffle { epoch }));
        let mut total = 0.0;
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&WindowSample> = chunk.iter().map(|&i| &samples[i]).collect();
            let labels: Vec<usize> = batch.iter().map(|s| s.label).collect();
            let x = batch_tensor::<T>(&batch, standardizer)?;
            let mut tape = Tape::new();
            let xv = tape.input(x);
            let z = net.logits(&mut tape, xv, true)?;
            let loss = tape.cross_entropy(z, &labels, weights.as_deref())?;
            let lv = tape.value(loss).data()[0].as_f64();
            if !lv.is_finite() {
                return Err(Error::NonFinite {
                    epoch,
                    batch: bi + 1,
                    loss: lv,
                });
            }
            total += lv * batch.len() as f64;
            net.params.zero_grad();
            tape.backward(loss)?.accumulate_into(&mut net.params)?;
            adam.step(&mut net.params)?;
        }
        let entry = EpochLog {
            epoch,
            loss: total / samples.len() as f64,
            lr: adam.lr,
            seconds: start.elapsed().as_secs_f64(),
        };
        on_epoch(&entry);
        log.epochs.push(entry);
    }
    // leftover gradients are not part of the trained model
    net.params.zero_grad();
    Ok(log)
}

/// A trained model of any kind, ready to predict.
#[derive(Clone, Debug, PartialEq)]
pub enum Classifier {
    Neural {
        kind: ModelKind,
        net: Network<f32>,
        standardizer: Option<Standardizer>,
        class_names: Vec<String>,
    },
    Hmm(HmmClassifier),
}

/// Batch size used for inference.
const PREDICT_BATCH: usize = 1024;

impl Classifier {
    pub fn kind(&self) -> ModelKind {
        match self {
            Classifier::Neural { kind, .. } => *kind,
            Classifier::Hmm(_) => ModelKind::Hmm,
        }
    }

    pub fn class_names(&self) -> &[String] {
        match self {
            Classifier::Neural { class_names, .. } => class_names,
            Classifier::Hmm(h) => &h.class_names,
        }
    }

    pub fn predict(&self, samples: &[WindowSample]) -> Result<Vec<usize>> {
        match self {
            Classifier::Neural { net, standardizer, .. } => {
                let mut out = Vec::with_capacity(samples.len());
                for chunk in samples.chunks(PREDICT_BATCH) {
                    let refs: Vec<&WindowSample> = chunk.iter().collect();
                    let x = batch_tensor::<f32>(&refs, standardizer.as_ref())?;
                    out.extend(predict_logits(&net.forward(&x)?));
                }
                Ok(out)
            }
            Classifier::Hmm(h) => samples.iter().map(|s| h.classify(&s.states)).collect(),
        }
    }
}

/// Trains a model of `kind` on `samples` (already resampled as configured).
pub fn train(
    kind: ModelKind,
    samples: &[WindowSample],
    class_names: &[String],
    cfg: &TrainConfig,
    hmm: &HmmConfig,
    on_epoch: impl FnMut(&EpochLog),
) -> Result<(Classifier, TrainLog)> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let Some(arch) = kind.architecture(class_names.len()) else {
        let clf = HmmClassifier::fit(samples, class_names, hmm, cfg.seed)?;
        return Ok((Classifier::Hmm(clf), TrainLog::default()));
    };
    let standardizer = if cfg.standardize { Some(Standardizer::fit(samples)?) } else { None };
    let (net, log) = train_network(arch, samples, cfg, standardizer.as_ref(), on_epoch)?;
    Ok((
        Classifier::Neural {
            kind,
            net,
            standardizer,
            class_names: class_names.to_vec(),
        },
        log,
    ))
}

fn train_network(
    arch: Architecture,
    samples: &[WindowSample],
    cfg: &TrainConfig,
    standardizer: Option<&Standardizer>,
    on_epoch: impl FnMut(&EpochLog),
) -> Result<(Network<f32>, TrainLog)> {
    match cfg.precision {
        Precision::Fast => {
            let mut net = Network::<f32>::new(arch, cfg.seed)?;
            let log = fit(&mut net, samples, cfg, standardizer, on_epoch)?;
            Ok((net, log))
        }
        Precision::Verify => {
            let mut net = Network::<f64>::new(arch, cfg.seed)?;
            let log = fit(&mut net, samples, cfg, standardizer, on_epoch)?;
            Ok((net.cast(), log))
        }
    }
}

/// Metrics of `clf` on `test`. The classifier's class list must match the data's.
pub fn evaluate(clf: &Classifier, test: &[WindowSample], class_names: &[String]) -> Result<EvalReport> {
    if clf.class_names() != class_names {
        return Err(Error::Config(format!(
            "model classes {:?} do not match dataset classes {:?}",
            clf.class_names(),
            class_names
        )));
    }
    if test.is_empty() {
        return Err(Error::Evaluation("test set is empty".into()));
    }
    let preds = clf.predict(test)?;
    let labels: Vec<usize> = test.iter().map(|s| s.label).collect();
    report(&preds, &labels, class_names)
}

/// One cell of the {ROS on/off} × {MSCNN on/off} grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub seed: u64,
    pub ros: bool,
    pub mscnn: bool,
    pub train_histogram: Vec<usize>,
    pub report: EvalReport,
}

impl AblationCell {
    pub fn name(&self) -> String {
        variant_name(self.ros, self.mscnn)
    }
}

pub fn variant_name(ros: bool, mscnn: bool) -> String {
    let base = if mscnn { "Bi-LSTM+MSCNN" } else { "Bi-LSTM" };
    if ros {
        format!("ROS+{base}")
    } else {
        base.to_string()
    }
}

/// Grid order within a seed: Bi-LSTM, Bi-LSTM+MSCNN, ROS+Bi-LSTM, ROS+Bi-LSTM+MSCNN.
pub const ABLATION_GRID: [(bool, bool); 4] = [(false, false), (false, true), (true, false), (true, true)];

/// Trains and evaluates every grid cell for each seed. The seed drives
/// initialization, shuffling and the ROS draw; all cells of a seed share it.
pub fn ablation_grid(
    ds: &PreparedDataset,
    seeds: &[u64],
    cfg: &TrainConfig,
    mut progress: impl FnMut(&AblationCell),
) -> Result<Vec<AblationCell>> {
    let c = ds.num_classes();
    let mut cells = Vec::with_capacity(seeds.len() * ABLATION_GRID.len());
    for &seed in seeds {
        let balanced = ros(&ds.split.train, c, seed)?;
        for (use_ros, mscnn) in ABLATION_GRID {
            let train_set = if use_ros { &balanced } else { &ds.split.train };
            let kind = if mscnn { ModelKind::Fusion } else { ModelKind::Bilstm };
            let run_cfg = TrainConfig { seed, ..cfg.clone() };
            let (clf, _) = train(kind, train_set, ds.class_names(), &run_cfg, &HmmConfig::default(), |_| {})?;
            let cell = AblationCell {
                seed,
                ros: use_ros,
                mscnn,
                train_histogram: histogram(train_set, c)?,
                report: evaluate(&clf, &ds.split.test, ds.class_names())?,
            };
            progress(&cell);
            cells.push(cell);
        }
    }
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule() {
        let c = TrainConfig::default();
        assert_eq!(c.lr(1), 0.005);
        assert_eq!(c.lr(40), 0.005);
        assert_eq!(c.lr(41), 0.001);
        assert_eq!(c.lr(60), 0.001);
    }

    #[test]
    fn validation() {
        TrainConfig::default().validate().unwrap();
        let bad = TrainConfig {
            epochs: 30,
            ..TrainConfig::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let zero = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        zero.validate().unwrap();
        let b = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(b.validate().is_err());
    }
}
