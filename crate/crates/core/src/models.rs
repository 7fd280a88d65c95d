//! The Bi-LSTM + multi-scale CNN fusion classifier and the two neural
//! baselines (vanilla LSTM, stacked Conv1D).
//!
//! Every model maps a `B×5×4` batch of windows to `B×C` logits. Parameter
//! names and shapes are a pure function of the architecture config, so a
//! checkpoint can be validated against its config on load.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{WindowSample, FEATURES, WINDOW};
use crate::error::{Error, Result};
use crate::nn::{dense, lstm_sequence, LstmWeights};
use crate::param::{Init, ParamSet, ParamSpec};
use crate::rng::{stream_rng, Stream};
use crate::tape::{Tape, Var};
use crate::tensor::{argmax, Real, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionConfig {
    pub lstm_layers: usize,
    pub lstm_hidden: usize,
    pub kernel_sizes: Vec<usize>,
    pub channels_per_kernel: usize,
    /// Width of the bottleneck after the pooled conv features.
    pub fc1_out: usize,
    pub num_classes: usize,
    pub input_channels: usize,
    pub seq_len: usize,
    /// `false` drops the conv branch and classifies from the Bi-LSTM feature alone.
    pub use_mscnn: bool,
}

impl FusionConfig {
    pub fn new(num_classes: usize) -> Self {
        FusionConfig {
            lstm_layers: 2,
            lstm_hidden: 64,
            kernel_sizes: vec![2, 3, 4],
            channels_per_kernel: 32,
            fc1_out: 32,
            num_classes,
            input_channels: FEATURES,
            seq_len: WINDOW,
            use_mscnn: true,
        }
    }

    /// Bi-LSTM-only variant.
    pub fn bilstm_only(num_classes: usize) -> Self {
        FusionConfig {
            use_mscnn: false,
            ..Self::new(num_classes)
        }
    }

    fn feature_width(&self) -> usize {
        2 * self.lstm_hidden + if self.use_mscnn { self.fc1_out } else { 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LstmConfig {
    pub layers: usize,
    pub hidden: usize,
    pub num_classes: usize,
    pub input_channels: usize,
    pub seq_len: usize,
}

impl LstmConfig {
    pub fn new(num_classes: usize) -> Self {
        LstmConfig {
            layers: 2,
            hidden: 64,
            num_classes,
            input_channels: FEATURES,
            seq_len: WINDOW,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Conv1dConfig {
    /// Output channels of each stacked conv layer.
    pub channels: Vec<usize>,
    pub kernel: usize,
    pub num_classes: usize,
    pub input_channels: usize,
    pub seq_len: usize,
}

impl Conv1dConfig {
    pub fn new(num_classes: usize) -> Self {
        Conv1dConfig {
            channels: vec![32, 32, 64, 64],
            kernel: 2,
            num_classes,
            input_channels: FEATURES,
            seq_len: WINDOW,
        }
    }

    fn final_len(&self) -> Option<usize> {
        let mut len = self.seq_len;
        for _ in &self.channels {
            len = (len + 1).checked_sub(self.kernel).filter(|&l| l >= 1)?;
        }
        Some(len)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Architecture {
    Fusion(FusionConfig),
    Lstm(LstmConfig),
    Conv1d(Conv1dConfig),
}

/// Model kinds selectable from the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Fusion,
    /// Fusion model without the conv branch.
    Bilstm,
    Lstm,
    Conv1d,
    Hmm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Fusion,
        ModelKind::Bilstm,
        ModelKind::Lstm,
        ModelKind::Conv1d,
        ModelKind::Hmm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Fusion => "fusion",
            ModelKind::Bilstm => "bilstm",
            ModelKind::Lstm => "lstm",
            ModelKind::Conv1d => "conv1d",
            ModelKind::Hmm => "hmm",
        }
    }

    /// Display name used in comparison tables.
    pub fn title(self) -> &'static str {
        match self {
            ModelKind::Fusion => "Bi-LSTM+MSCNN",
            ModelKind::Bilstm => "Bi-LSTM",
            ModelKind::Lstm => "LSTM",
            ModelKind::Conv1d => "Conv1D",
            ModelKind::Hmm => "HMM",
        }
    }

    /// Neural architecture for this kind, `None` for the HMM.
    pub fn architecture(self, num_classes: usize) -> Option<Architecture> {
        match self {
            ModelKind::Fusion => Some(Architecture::Fusion(FusionConfig::new(num_classes))),
            ModelKind::Bilstm => Some(Architecture::Fusion(FusionConfig::bilstm_only(num_classes))),
            ModelKind::Lstm => Some(Architecture::Lstm(LstmConfig::new(num_classes))),
            ModelKind::Conv1d => Some(Architecture::Conv1d(Conv1dConfig::new(num_classes))),
            ModelKind::Hmm => None,
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
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown model kind {s:?} (expected fusion, bilstm, lstm, conv1d or hmm)"
                ))
            })
    }
}

fn glorot(name: String, shape: &[usize], fan_in: usize, fan_out: usize) -> ParamSpec {
    ParamSpec::new(name, shape, Init::Glorot { fan_in, fan_out })
}

fn zeros(name: String, shape: &[usize]) -> ParamSpec {
    ParamSpec::new(name, shape, Init::Zeros)
}

fn lstm_specs(out: &mut Vec<ParamSpec>, prefix: &str, d_in: usize, hidden: usize) {
    out.push(glorot(format!("{prefix}.w_ih"), &[d_in, 4 * hidden], d_in, 4 * hidden));
    out.push(glorot(format!("{prefix}.w_hh"), &[hidden, 4 * hidden], hidden, 4 * hidden));
    out.push(ParamSpec::new(format!("{prefix}.bias"), &[4 * hidden], Init::LstmBias { hidden }));
}

fn conv_specs(out: &mut Vec<ParamSpec>, prefix: &str, cin: usize, cout: usize, k: usize) {
    out.push(glorot(format!("{prefix}.weight"), &[cout, cin, k], cin * k, cout * k));
    out.push(zeros(format!("{prefix}.bias"), &[cout]));
}

fn dense_specs(out: &mut Vec<ParamSpec>, prefix: &str, d_in: usize, d_out: usize) {
    out.push(glorot(format!("{prefix}.weight"), &[d_in, d_out], d_in, d_out));
    out.push(zeros(format!("{prefix}.bias"), &[d_out]));
}

impl Architecture {
    pub fn num_classes(&self) -> usize {
        match self {
            Architecture::Fusion(c) => c.num_classes,
            Architecture::Lstm(c) => c.num_classes,
            Architecture::Conv1d(c) => c.num_classes,
        }
    }

    fn input_shape(&self) -> (usize, usize) {
        match self {
            Architecture::Fusion(c) => (c.seq_len, c.input_channels),
            Architecture::Lstm(c) => (c.seq_len, c.input_channels),
            Architecture::Conv1d(c) => (c.seq_len, c.input_channels),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (seq_len, channels) = self.input_shape();
        if self.num_classes() < 2 {
            return Err(Error::Config(format!("need at least 2 classes, got {}", self.num_classes())));
        }
        if seq_len == 0 || channels == 0 {
            return Err(Error::Config("sequence length and input channels must be positive".into()));
        }
        match self {
            Architecture::Fusion(c) => {
                if c.lstm_layers == 0 || c.lstm_hidden == 0 {
                    return Err(Error::Config("Bi-LSTM needs at least one layer and hidden unit".into()));
                }
                if c.use_mscnn {
                    if c.kernel_sizes.is_empty() || c.channels_per_kernel == 0 || c.fc1_out == 0 {
                        return Err(Error::Config("conv branch needs kernels, channels and fc1 width".into()));
                    }
                    if let Some(&k) = c.kernel_sizes.iter().find(|&&k| k == 0 || k > c.seq_len) {
                        return Err(Error::Config(format!(
                            "kernel size {k} does not fit a sequence of length {}",
                            c.seq_len
                        )));
                    }
                }
            }
            Architecture::Lstm(c) => {
                if c.layers == 0 || c.hidden == 0 {
                    return Err(Error::Config("LSTM needs at least one layer and hidden unit".into()));
                }
            }
            Architecture::Conv1d(c) => {
                if c.channels.is_empty() || c.channels.contains(&0) || c.kernel == 0 {
                    return Err(Error::Config("Conv1D needs positive channel counts and kernel width".into()));
                }
                if c.final_len().is_none() {
                    return Err(Error::Config(format!(
                        "{} conv layers of width {} do not fit a sequence of length {}",
                        c.channels.len(),
                        c.kernel,
                        c.seq_len
                    )));
                }
            }
        }
        Ok(())
    }

    /// Names, shapes and initializers of every parameter, in storage order.
    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let mut s = Vec::new();
        match self {
            Architecture::Fusion(c) => {
                let h = c.lstm_hidden;
                for l in 0..c.lstm_layers {
                    let d_in = if l == 0 { c.input_channels } else { 2 * h };
                    for dir in ["fwd", "bwd"] {
                        lstm_specs(&mut s, &format!("bilstm.l{l}.{dir}"), d_in, h);
                    }
                }
                if c.use_mscnn {
                    for &k in &c.kernel_sizes {
                        conv_specs(&mut s, &format!("mscnn.k{k}"), c.input_channels, c.channels_per_kernel, k);
                    }
                    dense_specs(&mut s, "fc1", c.kernel_sizes.len() * c.channels_per_kernel, c.fc1_out);
                }
                dense_specs(&mut s, "fc2", c.feature_width(), c.num_classes);
            }
            Architecture::Lstm(c) => {
                for l in 0..c.layers {
                    let d_in = if l == 0 { c.input_channels } else { c.hidden };
                    lstm_specs(&mut s, &format!("lstm.l{l}"), d_in, c.hidden);
                }
                dense_specs(&mut s, "out", c.hidden, c.num_classes);
            }
            Architecture::Conv1d(c) => {
                let mut cin = c.input_channels;
                for (i, &cout) in c.channels.iter().enumerate() {
                    conv_specs(&mut s, &format!("conv{i}"), cin, cout, c.kernel);
                    cin = cout;
                }
                let flat = cin * c.final_len().unwrap_or(1);
                dense_specs(&mut s, "out", flat, c.num_classes);
            }
        }
        s
    }

    pub fn param_count(&self) -> usize {
        self.param_specs().iter().map(ParamSpec::numel).sum()
    }
}

/// A neural classifier: architecture plus its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    pub arch: Architecture,
    pub params: ParamSet<T>,
}

/// Parameters bound onto a tape, looked up by name.
struct Bound<'a> {
    names: Vec<&'a str>,
    vars: Vec<Var>,
}

impl Bound<'_> {
    fn get(&self, name: &str) -> Var {
        let i = self
            .names
            .iter()
            .position(|n| *n == name)
            .unwrap_or_else(|| panic!("parameter {name} missing; set was validated against the config"));
        self.vars[i]
    }

    fn lstm(&self, prefix: &str, hidden: usize) -> LstmWeights {
        LstmWeights {
            w_ih: self.get(&format!("{prefix}.w_ih")),
            w_hh: self.get(&format!("{prefix}.w_hh")),
            bias: self.get(&format!("{prefix}.bias")),
            hidden,
        }
    }
}

impl<T: Real> Network<T> {
    /// Fresh network with seeded initialization (the init stream of `seed`).
    /// `f32` and `f64` networks built from the same seed agree up to rounding.
    pub fn new(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = stream_rng(seed, Stream::Init);
        let params = ParamSet::from_specs(&arch.param_specs(), &mut rng);
        Ok(Network { arch, params })
    }

    /// Wraps existing parameters after checking names and shapes against the config.
    pub fn from_params(arch: Architecture, params: ParamSet<T>) -> Result<Self> {
        arch.validate()?;
        let specs = arch.param_specs();
        if specs.len() != params.len() {
            return Err(Error::Format(format!(
                "config expects {} parameter tensors, found {}",
                specs.len(),
                params.len()
            )));
        }
        for (s, p) in specs.iter().zip(params.iter()) {
            if s.name != p.name || s.shape != p.value.shape() {
                return Err(Error::Format(format!(
                    "parameter mismatch: config expects {} {:?}, found {} {:?}",
                    s.name,
                    s.shape,
                    p.name,
                    p.value.shape()
                )));
            }
        }
        Ok(Network { arch, params })
    }

    pub fn num_classes(&self) -> usize {
        self.arch.num_classes()
    }

    pub fn cast<U: Real>(&self) -> Network<U> {
        Network {
            arch: self.arch.clone(),
            params: self.params.cast(),
        }
    }

    fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> Bound<'_> {
        let vars = (0..self.params.len())
            .map(|id| {
                if trainable {
                    tape.param(&self.params, id)
                } else {
                    tape.input(self.params.get(id).value.clone())
                }
            })
            .collect();
        Bound {
            names: self.params.iter().map(|p| p.name.as_str()).collect(),
            vars,
        }
    }

    fn check_input(&self, tape: &Tape<T>, x: Var) -> Result<usize> {
        let (seq_len, channels) = self.arch.input_shape();
        let shape = tape.value(x).shape();
        if shape.len() != 3 || shape[1] != seq_len || shape[2] != channels {
            return Err(Error::dim("model input", shape, &[0, seq_len, channels]));
        }
        Ok(shape[0])
    }

    /// Logits `B×C` for a `B×T×F` input. With `trainable`, parameters are
    /// registered so [`crate::tape::Grads::accumulate_into`] reaches them.
    pub fn logits(&self, tape: &mut Tape<T>, x: Var, trainable: bool) -> Result<Var> {
        self.check_input(tape, x)?;
        let p = self.bind(tape, trainable);
        match &self.arch {
            Architecture::Fusion(c) => {
                let mut feats = vec![bilstm_feature(tape, &p, c, x)?];
                if c.use_mscnn {
                    feats.push(mscnn_feature(tape, &p, c, x)?);
                }
                let fused = tape.concat_cols(&feats)?;
                dense(tape, fused, p.get("fc2.weight"), p.get("fc2.bias"))
            }
            Architecture::Lstm(c) => {
                let mut xs = steps(tape, x, c.seq_len)?;
                for l in 0..c.layers {
                    xs = lstm_sequence(tape, &xs, &p.lstm(&format!("lstm.l{l}"), c.hidden), false)?;
                }
                let last = xs[c.seq_len - 1];
                dense(tape, last, p.get("out.weight"), p.get("out.bias"))
            }
            Architecture::Conv1d(c) => {
                let mut h = tape.swap_last_two(x)?;
                for i in 0..c.channels.len() {
                    let y = tape.conv1d(h, p.get(&format!("conv{i}.weight")), p.get(&format!("conv{i}.bias")))?;
                    h = tape.relu(y);
                }
                let s = tape.value(h).shape().to_vec();
                let flat = tape.reshape(h, &[s[0], s[1] * s[2]])?;
                dense(tape, flat, p.get("out.weight"), p.get("out.bias"))
            }
        }
    }

    /// Logits without recording gradients for the parameters.
    pub fn forward(&self, batch: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let x = tape.input(batch.clone());
        let y = self.logits(&mut tape, x, false)?;
        Ok(tape.value(y).clone())
    }

    /// Argmax class per row, ties to the lowest index.
    pub fn predict(&self, batch: &Tensor<T>) -> Result<Vec<usize>> {
        Ok(predict_logits(&self.forward(batch)?))
    }
}

pub fn predict_logits<T: Real>(logits: &Tensor<T>) -> Vec<usize> {
    (0..logits.shape()[0]).map(|i| argmax(logits.row(i))).collect()
}

fn steps<T: Real>(tape: &mut Tape<T>, x: Var, seq_len: usize) -> Result<Vec<Var>> {
    (0..seq_len).map(|t| tape.time_step(x, t)).collect()
}

/// Mean over time of the concatenated top-layer forward/backward hidden states.
fn bilstm_feature<T: Real>(tape: &mut Tape<T>, p: &Bound, c: &FusionConfig, x: Var) -> Result<Var> {
    let mut xs = steps(tape, x, c.seq_len)?;
    for l in 0..c.lstm_layers {
        let fwd = lstm_sequence(tape, &xs, &p.lstm(&format!("bilstm.l{l}.fwd"), c.lstm_hidden), false)?;
        let bwd = lstm_sequence(tape, &xs, &p.lstm(&format!("bilstm.l{l}.bwd"), c.lstm_hidden), true)?;
        xs = fwd
            .iter()
            .zip(&bwd)
            .map(|(&f, &b)| tape.concat_cols(&[f, b]))
            .collect::<Result<_>>()?;
    }
    let total = tape.sum(&xs)?;
    Ok(tape.scale(total, T::from_f64(1.0 / c.seq_len as f64)))
}

/// Parallel conv banks → ReLU → max over time → concat → FC-1 → ReLU.
fn mscnn_feature<T: Real>(tape: &mut Tape<T>, p: &Bound, c: &FusionConfig, x: Var) -> Result<Var> {
    let xt = tape.swap_last_two(x)?;
    let mut pooled = Vec::with_capacity(c.kernel_sizes.len());
    for &k in &c.kernel_sizes {
        let y = tape.conv1d(xt, p.get(&format!("mscnn.k{k}.weight")), p.get(&format!("mscnn.k{k}.bias")))?;
        let y = tape.relu(y);
        pooled.push(tape.max_over_time(y)?);
    }
    let cat = tape.concat_cols(&pooled)?;
    // the 32-wide layer is the bottleneck after pooling; the classifier
    // layer after fusion has to emit C logits
    let h = dense(tape, cat, p.get("fc1.weight"), p.get("fc1.bias"))?;
    Ok(tape.relu(h))
}

/// Per-feature standardization fitted on training windows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: [f64; FEATURES],
    pub std: [f64; FEATURES],
}

impl Standardizer {
    /// Features with (near-)zero spread get unit scale.
    pub fn fit(samples: &[WindowSample]) -> Result<Self> {
        let mut n = 0.0;
        let mut sum = [0.0; FEATURES];
        let mut sq = [0.0; FEATURES];
        for s in samples {
            for row in &s.states {
                n += 1.0;
                for j in 0..FEATURES {
                    sum[j] += row[j];
                    sq[j] += row[j] * row[j];
                }
            }
        }
        if n == 0.0 {
            return Err(Error::Config("cannot fit standardization on an empty set".into()));
        }
        let mut mean = [0.0; FEATURES];
        let mut std = [1.0; FEATURES];
        for j in 0..FEATURES {
            mean[j] = sum[j] / n;
            let var = (sq[j] / n - mean[j] * mean[j]).max(0.0);
            if var.sqrt() > 1e-12 {
                std[j] = var.sqrt();
            }
        }
        Ok(Standardizer { mean, std })
    }
}

/// Stacks windows into a `B×T×F` tensor, optionally standardized.
pub fn batch_tensor<T: Real>(samples: &[&WindowSample], standardizer: Option<&Standardizer>) -> Result<Tensor<T>> {
    let b = samples.len();
    if b == 0 {
        return Err(Error::Data("empty batch".into()));
    }
    let t = samples[0].states.len();
    let mut data = Vec::with_capacity(b * t * FEATURES);
    for s in samples {
        if s.states.len() != t {
            return Err(Error::dim("batch", &[s.states.len(), FEATURES], &[t, FEATURES]));
        }
        for row in &s.states {
            for j in 0..FEATURES {
                let v = match standardizer {
                    Some(st) => (row[j] - st.mean[j]) / st.std[j],
                    None => row[j],
                };
                data.push(T::from_f64(v));
            }
        }
    }
    Tensor::new(vec![b, t, FEATURES], data)
}
