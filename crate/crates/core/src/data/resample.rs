//! Class-imbalance handling for the training split.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ops::histogram;
use super::WindowSample;
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resample {
    #[default]
    None,
    Ros,
    Rus,
    /// Class-weighted loss; the samples are left alone.
    Wl,
}

impl fmt::Display for Resample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Resample::None => "none",
            Resample::Ros => "ros",
            Resample::Rus => "rus",
            Resample::Wl => "wl",
        })
    }
}

impl FromStr for Resample {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Resample::None),
            "ros" => Ok(Resample::Ros),
            "rus" => Ok(Resample::Rus),
            "wl" => Ok(Resample::Wl),
            other => Err(Error::Config(format!(
                "unknown resampling mode {other:?} (expected none, ros, rus or wl)"
            ))),
        }
    }
}

fn by_class(samples: &[WindowSample], num_classes: usize) -> Result<Vec<Vec<usize>>> {
    let hist = histogram(samples, num_classes)?;
    if samples.is_empty() {
        return Err(Error::Config("cannot resample an empty training set".into()));
    }
    if let Some(c) = hist.iter().position(|&n| n == 0) {
        return Err(Error::Config(format!("class {c} has no training samples")));
    }
    let mut idx = vec![Vec::new(); num_classes];
    for (i, s) in samples.iter().enumerate() {
        idx[s.label].push(i);
    }
    Ok(idx)
}

/// Random over-sampling. Returns the originals in input order followed by
/// uniform-with-replacement duplicates until every class matches the largest.
pub fn ros(samples: &[WindowSample], num_classes: usize, seed: u64) -> Result<Vec<WindowSample>> {
    let idx = by_class(samples, num_classes)?;
    let max = idx.iter().map(Vec::len).max().unwrap_or(0);
    let mut rng = stream_rng(seed, Stream::Resample);
    let mut out = samples.to_vec();
    for members in &idx {
        for _ in members.len()..max {
            out.push(samples[members[rng.random_range(0..members.len())]].clone());
        }
    }
    Ok(out)
}

/// Random under-sampling to the smallest class count. Survivors keep their
/// input order.
pub fn rus(samples: &[WindowSample], num_classes: usize, seed: u64) -> Result<Vec<WindowSample>> {
    let idx = by_class(samples, num_classes)?;
    let min = idx.iter().map(Vec::len).min().unwrap_or(0);
    let mut rng = stream_rng(seed, Stream::Resample);
    let mut keep = Vec::with_capacity(min * num_classes);
    for members in &idx {
        keep.extend(index::sample(&mut rng, members.len(), min).into_iter().map(|j| members[j]));
    }
    keep.sort_unstable();
    Ok(keep.into_iter().map(|i| samples[i].clone()).collect())
}

/// Inverse-frequency weights `w_c = N / (C·n_c)`.
pub fn class_weights(samples: &[WindowSample], num_classes: usize) -> Result<Vec<f64>> {
    let hist = histogram(samples, num_classes)?;
    if let Some(c) = hist.iter().position(|&n| n == 0) {
        return Err(Error::Config(format!("class {c} has no training samples; its weight is undefined")));
    }
    let n = samples.len() as f64;
    Ok(hist.iter().map(|&k| n / (num_classes as f64 * k as f64)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn samples(counts: &[usize]) -> Vec<WindowSample> {
        let mut out = Vec::new();
        for (c, &n) in counts.iter().enumerate() {
            for i in 0..n {
                out.push(WindowSample {
                    states: vec![[i as f64, c as f64, 0.0, 0.0]; 5],
                    label: c,
                    agent_id: format!("c{c}"),
                    end_frame: i as u64,
                });
            }
        }
        out
    }

    #[test]
    fn ros_examples() {
        let s = samples(&[5, 5]);
        assert_eq!(ros(&s, 2, 0).unwrap(), s);
        let s = samples(&[10, 3]);
        let r = ros(&s, 2, 0).unwrap();
        assert_eq!(histogram(&r, 2).unwrap(), vec![10, 10]);
        assert_eq!(&r[..13], &s[..]);
        for extra in &r[13..] {
            assert!(s[10..].contains(extra));
        }
    }

    #[test]
    fn rus_examples() {
        let s = samples(&[10, 3]);
        let r = rus(&s, 2, 0).unwrap();
        assert_eq!(histogram(&r, 2).unwrap(), vec![3, 3]);
        assert!(r.iter().all(|x| s.contains(x)));
        let b = samples(&[4, 4]);
        assert_eq!(rus(&b, 2, 9).unwrap(), b);
    }

    #[test]
    fn weights_examples() {
        assert_eq!(class_weights(&samples(&[7, 7, 7]), 3).unwrap(), vec![1.0, 1.0, 1.0]);
        let w = class_weights(&samples(&[30, 10]), 2).unwrap();
        assert!((w[0] - 2.0 / 3.0).abs() < 1e-15 && (w[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn empty_class_rejected() {
        let s = samples(&[3, 0]);
        assert!(matches!(ros(&s, 2, 0), Err(Error::Config(_))));
        assert!(matches!(rus(&s, 2, 0), Err(Error::Config(_))));
        assert!(matches!(class_weights(&s, 2), Err(Error::Config(_))));
    }
}
