//! Checkpoint files for trained classifiers.
//!
//! The header names every stored tensor with its shape; the payload holds the
//! values in the same order. Network parameters are stored as `f32`, HMM
//! parameters as `f64`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::container::{self, Reader};
use crate::error::{Error, Result};
use crate::hmm::{GaussianHmm, HmmClassifier, HmmConfig};
use crate::models::{Architecture, ModelKind, Network, Standardizer};
use crate::param::{ParamSet, Parameter};
use crate::tensor::Tensor;
use crate::train::Classifier;

const MAGIC: &[u8; 4] = b"TRJC";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    kind: ModelKind,
    class_names: Vec<String>,
    architecture: Option<Architecture>,
    hmm: Option<HmmConfig>,
    standardizer: Option<Standardizer>,
    tensors: Vec<TensorEntry>,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

pub fn to_bytes(clf: &Classifier) -> Result<Vec<u8>> {
    let mut payload = Vec::new();
    let mut tensors = Vec::new();
    let header = match clf {
        Classifier::Neural {
            kind,
            net,
            standardizer,
            class_names,
        } => {
            for p in net.params.iter() {
                tensors.push(TensorEntry {
                    name: p.name.clone(),
                    shape: p.value.shape().to_vec(),
                });
                for v in p.value.data() {
                    payload.extend_from_slice(&v.to_le_bytes());
                }
            }
            Header {
                kind: *kind,
                class_names: class_names.clone(),
                architecture: Some(net.arch.clone()),
                hmm: None,
                standardizer: standardizer.clone(),
                tensors,
            }
        }
        Classifier::Hmm(h) => {
            for (k, m) in h.models.iter().enumerate() {
                let m = m
                    .as_ref()
                    .ok_or_else(|| Error::State(format!("class {:?} has no trained HMM", h.class_names[k])))?;
                let n = m.n_states();
                let d = m.dim();
                let parts: [(&str, Vec<usize>, Vec<f64>); 4] = [
                    ("initial", vec![n], m.initial.clone()),
                    ("transitions", vec![n, n], m.transitions.clone()),
                    ("means", vec![n, d], m.means.concat()),
                    ("variances", vec![n, d], m.variances.concat()),
                ];
                for (name, shape, values) in parts {
                    tensors.push(TensorEntry {
                        name: format!("class{k}.{name}"),
                        shape,
                    });
                    for v in values {
                        payload.extend_from_slice(&v.to_le_bytes());
                    }
                }
            }
            Header {
                kind: ModelKind::Hmm,
                class_names: h.class_names.clone(),
                architecture: None,
                hmm: Some(h.config.clone()),
                standardizer: None,
                tensors,
            }
        }
    };
    container::encode(MAGIC, &header, &payload)
}

pub fn from_bytes(bytes: &[u8]) -> Result<Classifier> {
    let (h, payload): (Header, _) = container::decode(bytes, MAGIC)?;
    let mut r = Reader::new(payload);
    let clf = match (h.kind, h.architecture, h.hmm) {
        (ModelKind::Hmm, None, Some(config)) => {
            config.validate()?;
            let c = h.class_names.len();
            if h.tensors.len() != 4 * c {
                return Err(Error::Format(format!("{} HMM tensors for {c} classes", h.tensors.len())));
            }
            let mut models = Vec::with_capacity(c);
            for (k, group) in h.tensors.chunks(4).enumerate() {
                let mut vals = Vec::with_capacity(4);
                for (entry, name) in group.iter().zip(["initial", "transitions", "means", "variances"]) {
                    if entry.name != format!("class{k}.{name}") {
                        return Err(Error::Format(format!("unexpected tensor {} in HMM checkpoint", entry.name)));
                    }
                    let v = (0..numel(&entry.shape)).map(|_| r.f64()).collect::<Result<Vec<f64>>>()?;
                    vals.push(v);
                }
                let n = config.n_states;
                let d = group[2].shape.get(1).copied().unwrap_or(0);
                let shapes_ok = group[0].shape == [n]
                    && group[1].shape == [n, n]
                    && group[2].shape == [n, d]
                    && group[3].shape == [n, d]
                    && d > 0;
                if !shapes_ok {
                    return Err(Error::Format(format!("HMM of class {k} does not match {n} states")));
                }
                let rows = |v: &[f64]| v.chunks(d).map(<[f64]>::to_vec).collect();
                models.push(Some(GaussianHmm {
                    means: rows(&vals[2]),
                    variances: rows(&vals[3]),
                    transitions: std::mem::take(&mut vals[1]),
                    initial: std::mem::take(&mut vals[0]),
                }));
            }
            Classifier::Hmm(HmmClassifier {
                config,
                class_names: h.class_names,
                models,
            })
        }
        (kind, Some(arch), None) if kind != ModelKind::Hmm => {
            if arch.num_classes() != h.class_names.len() {
                return Err(Error::Format(format!(
                    "architecture has {} classes but {} class names are stored",
                    arch.num_classes(),
                    h.class_names.len()
                )));
            }
            let mut params = ParamSet::new();
            for e in &h.tensors {
                let data = (0..numel(&e.shape)).map(|_| r.f32()).collect::<Result<Vec<f32>>>()?;
                params.push(Parameter::new(e.name.clone(), Tensor::new(e.shape.clone(), data)?));
            }
            Classifier::Neural {
                kind,
                net: Network::from_params(arch, params)?,
                standardizer: h.standardizer,
                class_names: h.class_names,
            }
        }
        (kind, ..) => {
            return Err(Error::Format(format!("inconsistent header for model kind {}", kind.as_str())));
        }
    };
    if !r.is_empty() {
        return Err(Error::Format("payload longer than the tensor index".into()));
    }
    Ok(clf)
}

pub fn save(clf: &Classifier, path: &Path) -> Result<()> {
    std::fs::write(path, to_bytes(clf)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Classifier> {
    from_bytes(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::LstmConfig;

    #[test]
    fn kind_and_payload_must_agree() {
        let net = Network::<f32>::new(Architecture::Lstm(LstmConfig::new(2)), 1).unwrap();
        let clf = Classifier::Neural {
            kind: ModelKind::Lstm,
            net,
            standardizer: None,
            class_names: vec!["a".into(), "b".into()],
        };
        let bytes = to_bytes(&clf).unwrap();
        assert_eq!(from_bytes(&bytes).unwrap(), clf);
        // truncated payload fails the checksum before anything is parsed
        assert!(matches!(from_bytes(&bytes[..bytes.len() - 1]), Err(Error::Format(_))));
    }
}
