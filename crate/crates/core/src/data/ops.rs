//! Filtering, windowing and splitting.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{DatasetSplit, Trajectory, WindowSample};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

/// Per-class sample counts; labels ≥ `num_classes` are an error.
pub fn histogram(samples: &[WindowSample], num_classes: usize) -> Result<Vec<usize>> {
    let mut h = vec![0; num_classes];
    for (i, s) in samples.iter().enumerate() {
        *h.get_mut(s.label).ok_or_else(|| {
            Error::Data(format!("sample {i} has label {} but there are {num_classes} classes", s.label))
        })? += 1;
    }
    Ok(h)
}

/// Keeps trajectories with at least `min_len` points.
pub fn filter_short(trajs: &[Trajectory], min_len: usize) -> Vec<Trajectory> {
    trajs.iter().filter(|t| t.len() >= min_len).cloned().collect()
}

/// Sliding windows over one trajectory. Sample `i` covers points
/// `[i·stride, i·stride + size)` and takes the label of its last point.
pub fn window(traj: &Trajectory, size: usize, stride: usize) -> Result<Vec<WindowSample>> {
    if size == 0 || stride == 0 {
        return Err(Error::Config(format!("window size {size} and stride {stride} must be positive")));
    }
    if traj.len() < size {
        return Err(Error::Data(format!(
            "trajectory {:?} has {} points, fewer than the window size {size}",
            traj.agent_id,
            traj.len()
        )));
    }
    let n = (traj.len() - size) / stride + 1;
    Ok((0..n)
        .map(|i| {
            let pts = &traj.points[i * stride..i * stride + size];
            let last = pts[size - 1];
            WindowSample {
                states: pts.iter().map(|p| p.state()).collect(),
                label: last.label,
                agent_id: traj.agent_id.clone(),
                end_frame: last.frame,
            }
        })
        .collect())
}

/// Old → new class index mapping produced by [`filter_rare_classes`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassMap {
    /// `old_to_new[old]` is the dense new index, or `None` if dropped.
    pub old_to_new: Vec<Option<usize>>,
    /// Old indices of kept classes, in new-index order.
    pub kept: Vec<usize>,
}

impl ClassMap {
    pub fn identity(num_classes: usize) -> Self {
        ClassMap {
            old_to_new: (0..num_classes).map(Some).collect(),
            kept: (0..num_classes).collect(),
        }
    }
}

/// Drops classes with fewer than `min_count` samples and re-densifies labels.
pub fn filter_rare_classes(
    samples: &[WindowSample],
    num_classes: usize,
    min_count: usize,
) -> Result<(Vec<WindowSample>, ClassMap)> {
    let hist = histogram(samples, num_classes)?;
    let mut old_to_new = vec![None; num_classes];
    let mut kept = Vec::new();
    for (c, &n) in hist.iter().enumerate() {
        if n >= min_count {
            old_to_new[c] = Some(kept.len());
            kept.push(c);
        }
    }
    if kept.is_empty() {
        return Err(Error::Config(format!(
            "every class has fewer than {min_count} samples (counts {hist:?}); nothing left to train on"
        )));
    }
    let out = samples
        .iter()
        .filter_map(|s| {
            old_to_new[s.label].map(|new| WindowSample {
                label: new,
                ..s.clone()
            })
        })
        .collect();
    Ok((out, ClassMap { old_to_new, kept }))
}

/// Stratified split: per class, `floor(ratio·n)` shuffled samples go to
/// train, clamped so each side gets at least one.
pub fn split(samples: &[WindowSample], class_names: &[String], ratio: f64, seed: u64) -> Result<DatasetSplit> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!("train ratio {ratio} must lie strictly between 0 and 1")));
    }
    let c = class_names.len();
    let mut by_class: Vec<Vec<&WindowSample>> = vec![Vec::new(); c];
    for (i, s) in samples.iter().enumerate() {
        by_class
            .get_mut(s.label)
            .ok_or_else(|| Error::Data(format!("sample {i} has label {} but there are {c} classes", s.label)))?
            .push(s);
    }
    if let Some((k, v)) = by_class.iter().enumerate().find(|(_, v)| v.len() < 2) {
        return Err(Error::Config(format!(
            "class {:?} has {} sample(s); a split needs at least 2 per class",
            class_names[k],
            v.len()
        )));
    }
    let mut rng = stream_rng(seed, Stream::Split);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for mut members in by_class {
        members.shuffle(&mut rng);
        let n = members.len();
        // the epsilon keeps e.g. 0.8·10 from flooring to 7
        let n_train = ((ratio * n as f64 + 1e-9).floor() as usize).clamp(1, n - 1);
        train.extend(members[..n_train].iter().map(|s| (*s).clone()));
        test.extend(members[n_train..].iter().map(|s| (*s).clone()));
    }
    Ok(DatasetSplit {
        train,
        test,
        class_names: class_names.to_vec(),
        seed,
    })
}
