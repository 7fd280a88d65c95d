//! Named trainable tensors and their initialization.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::tensor::{Real, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct Parameter<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

impl<T: Real> Parameter<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>) -> Self {
        let grad = Tensor::zeros(value.shape());
        Parameter {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }
}

/// How a parameter is filled at construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Init {
    /// Uniform in ±sqrt(6 / (fan_in + fan_out)).
    Glorot { fan_in: usize, fan_out: usize },
    Zeros,
    /// LSTM gate bias laid out `[i, f, g, o]`; forget block is 1, the rest 0.
    LstmBias { hidden: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, shape: &[usize], init: Init) -> Self {
        ParamSpec {
            name: name.into(),
            shape: shape.to_vec(),
            init,
        }
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn materialize<T: Real>(&self, rng: &mut impl Rng) -> Tensor<T> {
        match self.init {
            Init::Glorot { fan_in, fan_out } => {
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                Tensor::from_fn(&self.shape, |_| T::from_f64(rng.random_range(-bound..bound)))
            }
            Init::Zeros => Tensor::zeros(&self.shape),
            Init::LstmBias { hidden } => Tensor::from_fn(&self.shape, |i| {
                if (hidden..2 * hidden).contains(&i) {
                    T::one()
                } else {
                    T::zero()
                }
            }),
        }
    }
}

/// Ordered collection of parameters addressed by index.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ParamSet<T> {
    params: Vec<Parameter<T>>,
}

impl<T: Real> ParamSet<T> {
    pub fn new() -> Self {
        ParamSet { params: Vec::new() }
    }

    pub fn from_specs(specs: &[ParamSpec], rng: &mut impl Rng) -> Self {
        let params = specs
            .iter()
            .map(|s| Parameter::new(s.name.clone(), s.materialize(rng)))
            .collect();
        ParamSet { params }
    }

    pub fn push(&mut self, p: Parameter<T>) -> usize {
        self.params.push(p);
        self.params.len() - 1
    }

    pub fn get(&self, id: usize) -> &Parameter<T> {
        &self.params[id]
    }

    pub fn get_mut(&mut self, id: usize) -> &mut Parameter<T> {
        &mut self.params[id]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter<T>> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(Parameter::zero_grad);
    }

    pub fn cast<U: Real>(&self) -> ParamSet<U> {
        ParamSet {
            params: self
                .params
                .iter()
                .map(|p| Parameter {
                    name: p.name.clone(),
                    value: p.value.cast(),
                    grad: p.grad.cast(),
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn glorot_bound_respected() {
        let spec = ParamSpec::new("w", &[10, 30], Init::Glorot { fan_in: 10, fan_out: 30 });
        let t: Tensor<f64> = spec.materialize(&mut ChaCha8Rng::seed_from_u64(0));
        let bound = (6.0f64 / 40.0).sqrt();
        assert!(t.data().iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn lstm_bias_forget_block_is_one() {
        let spec = ParamSpec::new("b", &[8], Init::LstmBias { hidden: 2 });
        let t: Tensor<f32> = spec.materialize(&mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(t.data(), &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn zero_grad_clears() {
        let mut p = Parameter::new("p", Tensor::<f64>::full(&[3], 2.0));
        p.grad.fill(5.0);
        p.zero_grad();
        assert!(p.grad.data().iter().all(|&g| g == 0.0));
        assert_eq!(p.grad.shape(), p.value.shape());
    }
}
