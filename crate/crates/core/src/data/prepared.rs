//! The full preprocessing pipeline and its on-disk dump.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ops::{filter_rare_classes, filter_short, histogram, split, window, ClassMap};
use super::resample::{class_weights, ros, rus, Resample};
use super::{AgentKind, DatasetSplit, LabelMap, Trajectory, WindowSample, FEATURES};
use crate::container::{self, put_string, Reader};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"TRJD";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrepConfig {
    /// Keep only trajectories of this agent kind.
    pub kind: Option<AgentKind>,
    pub min_len: usize,
    pub window: usize,
    pub stride: usize,
    pub min_class_count: usize,
    pub train_ratio: f64,
    pub seed: u64,
    pub resample: Resample,
    /// Heading column is in degrees.
    pub degrees: bool,
}

impl Default for PrepConfig {
    fn default() -> Self {
        PrepConfig {
            kind: None,
            min_len: super::MIN_TRAJECTORY_LEN,
            window: super::WINDOW,
            stride: 1,
            min_class_count: super::MIN_CLASS_COUNT,
            train_ratio: 0.8,
            seed: 0,
            resample: Resample::Ros,
            degrees: false,
        }
    }
}

impl PrepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window != super::WINDOW {
            return Err(Error::Config(format!(
                "window size must be {} (the models take {}-step inputs), got {}",
                super::WINDOW,
                super::WINDOW,
                self.window
            )));
        }
        if self.min_len < self.window {
            return Err(Error::Config(format!(
                "min_len {} is shorter than the window size {}",
                self.min_len, self.window
            )));
        }
        if self.stride == 0 {
            return Err(Error::Config("stride must be at least 1".into()));
        }
        if !(self.train_ratio > 0.0 && self.train_ratio < 1.0) {
            return Err(Error::Config(format!("train_ratio {} must lie in (0, 1)", self.train_ratio)));
        }
        Ok(())
    }
}

/// Sample counts after one pipeline stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageCount {
    pub stage: String,
    /// Trajectories (trajectory stages) or window samples.
    pub count: usize,
    /// Per-class window counts, when the stage has window samples.
    pub per_class: Option<Vec<(String, usize)>>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: PrepConfig,
    label_names: Vec<String>,
    class_names: Vec<String>,
    class_map: ClassMap,
    stages: Vec<StageCount>,
    num_train: usize,
    num_test: usize,
}

/// A split dataset plus everything needed to reproduce and audit it.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedDataset {
    pub config: PrepConfig,
    /// Names of the full label map the trajectories were read with.
    pub label_names: Vec<String>,
    pub class_map: ClassMap,
    pub stages: Vec<StageCount>,
    /// Train split before any resampling, and the untouched test split.
    pub split: DatasetSplit,
}

fn named(names: &[String], hist: &[usize]) -> Vec<(String, usize)> {
    names.iter().cloned().zip(hist.iter().copied()).collect()
}

/// load → kind filter → filter_short → window → filter_rare_classes → split.
/// Resampling is recorded in the config and applied by
/// [`PreparedDataset::training_samples`].
pub fn prepare(trajs: &[Trajectory], labels: &LabelMap, config: &PrepConfig) -> Result<PreparedDataset> {
    config.validate()?;
    let mut stages = vec![StageCount {
        stage: "trajectories loaded".into(),
        count: trajs.len(),
        per_class: None,
    }];
    let selected: Vec<Trajectory> = match config.kind {
        Some(kind) => {
            let v: Vec<Trajectory> = trajs.iter().filter(|t| t.kind == kind).cloned().collect();
            stages.push(StageCount {
                stage: format!("trajectories of kind {kind}"),
                count: v.len(),
                per_class: None,
            });
            v
        }
        None => trajs.to_vec(),
    };
    let long = filter_short(&selected, config.min_len);
    stages.push(StageCount {
        stage: format!("trajectories with >= {} points", config.min_len),
        count: long.len(),
        per_class: None,
    });
    let mut windows = Vec::new();
    for t in &long {
        windows.extend(window(t, config.window, config.stride)?);
    }
    stages.push(StageCount {
        stage: "windows".into(),
        count: windows.len(),
        per_class: Some(named(labels.names(), &histogram(&windows, labels.len())?)),
    });
    // a class with no windows at all is always dropped
    let (kept, class_map) = filter_rare_classes(&windows, labels.len(), config.min_class_count.max(1))?;
    let class_names: Vec<String> = class_map.kept.iter().map(|&c| labels.name(c).to_string()).collect();
    stages.push(StageCount {
        stage: format!("windows in classes with >= {} samples", config.min_class_count),
        count: kept.len(),
        per_class: Some(named(&class_names, &histogram(&kept, class_names.len())?)),
    });
    let split = split(&kept, &class_names, config.train_ratio, config.seed)?;
    let c = class_names.len();
    stages.push(StageCount {
        stage: "train".into(),
        count: split.train.len(),
        per_class: Some(named(&class_names, &histogram(&split.train, c)?)),
    });
    stages.push(StageCount {
        stage: "test".into(),
        count: split.test.len(),
        per_class: Some(named(&class_names, &histogram(&split.test, c)?)),
    });
    let mut ds = PreparedDataset {
        config: config.clone(),
        label_names: labels.names().to_vec(),
        class_map,
        stages,
        split,
    };
    if matches!(config.resample, Resample::Ros | Resample::Rus) {
        let train = ds.training_samples()?;
        ds.stages.push(StageCount {
            stage: format!("train after {}", config.resample),
            count: train.len(),
            per_class: Some(named(&ds.split.class_names, &histogram(&train, c)?)),
        });
    }
    Ok(ds)
}

impl PreparedDataset {
    pub fn class_names(&self) -> &[String] {
        &self.split.class_names
    }

    pub fn num_classes(&self) -> usize {
        self.split.class_names.len()
    }

    /// Training samples after the configured resampling.
    pub fn training_samples(&self) -> Result<Vec<WindowSample>> {
        self.training_samples_with(self.config.resample)
    }

    pub fn training_samples_with(&self, mode: Resample) -> Result<Vec<WindowSample>> {
        let c = self.num_classes();
        match mode {
            Resample::Ros => ros(&self.split.train, c, self.config.seed),
            Resample::Rus => rus(&self.split.train, c, self.config.seed),
            Resample::None | Resample::Wl => Ok(self.split.train.clone()),
        }
    }

    /// Per-class loss weights when the dataset was prepared for weighted loss.
    pub fn loss_weights(&self) -> Result<Option<Vec<f64>>> {
        match self.config.resample {
            Resample::Wl => Ok(Some(class_weights(&self.split.train, self.num_classes())?)),
            _ => Ok(None),
        }
    }

    /// Plain-text stage table.
    pub fn stage_table(&self) -> String {
        let mut s = String::new();
        for st in &self.stages {
            let _ = writeln!(s, "{:<44} {:>9}", st.stage, st.count);
            if let Some(pc) = &st.per_class {
                for (name, n) in pc {
                    let _ = writeln!(s, "    {name:<40} {n:>9}");
                }
            }
        }
        s
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            config: self.config.clone(),
            label_names: self.label_names.clone(),
            class_names: self.split.class_names.clone(),
            class_map: self.class_map.clone(),
            stages: self.stages.clone(),
            num_train: self.split.train.len(),
            num_test: self.split.test.len(),
        };
        let mut payload = Vec::new();
        for s in self.split.train.iter().chain(&self.split.test) {
            put_string(&mut payload, &s.agent_id);
            payload.extend_from_slice(&s.end_frame.to_le_bytes());
            payload.extend_from_slice(&(s.label as u32).to_le_bytes());
            for row in &s.states {
                for v in row {
                    payload.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        container::encode(MAGIC, &header, &payload)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (h, payload): (Header, _) = container::decode(bytes, MAGIC)?;
        let mut r = Reader::new(payload);
        let c = h.class_names.len();
        let mut read = |n: usize| -> Result<Vec<WindowSample>> {
            let mut v = Vec::with_capacity(n);
            for _ in 0..n {
                let agent_id = r.string()?;
                let end_frame = r.u64()?;
                let label = r.u32()? as usize;
                if label >= c {
                    return Err(Error::Format(format!("sample label {label} out of range for {c} classes")));
                }
                let mut states = vec![[0.0; FEATURES]; h.config.window];
                for row in states.iter_mut() {
                    for v in row.iter_mut() {
                        *v = r.f64()?;
                    }
                }
                v.push(WindowSample {
                    states,
                    label,
                    agent_id,
                    end_frame,
                });
            }
            Ok(v)
        };
        let train = read(h.num_train)?;
        let test = read(h.num_test)?;
        if !r.is_empty() {
            return Err(Error::Format("trailing sample bytes".into()));
        }
        Ok(PreparedDataset {
            split: DatasetSplit {
                train,
                test,
                class_names: h.class_names,
                seed: h.config.seed,
            },
            config: h.config,
            label_names: h.label_names,
            class_map: h.class_map,
            stages: h.stages,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
