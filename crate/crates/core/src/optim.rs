//! Adam with bias correction.

use crate::error::{Error, Result};
use crate::param::ParamSet;
use crate::tensor::{Real, Tensor};

#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub m: Tensor<T>,
    pub v: Tensor<T>,
    pub step: u64,
}

#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    states: Vec<AdamState<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(params: &ParamSet<T>, lr: f64) -> Self {
        Self::with_hyper(params, lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_hyper(params: &ParamSet<T>, lr: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        let states = params
            .iter()
            .map(|p| AdamState {
                m: Tensor::zeros(p.value.shape()),
                v: Tensor::zeros(p.value.shape()),
                step: 0,
            })
            .collect();
        Adam {
            lr,
            beta1,
            beta2,
            epsilon,
            states,
        }
    }

    pub fn states(&self) -> &[AdamState<T>] {
        &self.states
    }

    /// One update of every parameter from its accumulated `grad`.
    pub fn step(&mut self, params: &mut ParamSet<T>) -> Result<()> {
        if params.len() != self.states.len() {
            return Err(Error::dim("adam_step", &[params.len()], &[self.states.len()]));
        }
        let (b1, b2) = (T::from_f64(self.beta1), T::from_f64(self.beta2));
        let eps = T::from_f64(self.epsilon);
        for (p, s) in params.iter_mut().zip(self.states.iter_mut()) {
            if p.value.shape() != s.m.shape() {
                return Err(Error::dim("adam_step", p.value.shape(), s.m.shape()));
            }
            s.step += 1;
            let t = s.step as i32;
            let c1 = T::from_f64(1.0 - self.beta1.powi(t));
            let c2 = T::from_f64(1.0 - self.beta2.powi(t));
            let lr = T::from_f64(self.lr);
            let values = p.value.data_mut();
            let grads = p.grad.data();
            let (m, v) = (s.m.data_mut(), s.v.data_mut());
            for i in 0..values.len() {
                let g = grads[i];
                m[i] = b1 * m[i] + (T::one() - b1) * g;
                v[i] = b2 * v[i] + (T::one() - b2) * g * g;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                values[i] = values[i] - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::param::Parameter;

    fn scalar_set(x: f64) -> ParamSet<f64> {
        let mut ps = ParamSet::new();
        ps.push(Parameter::new("x", Tensor::scalar(x)));
        ps
    }

    #[test]
    fn zero_grad_is_fixed_point() {
        let mut ps = ParamSet::new();
        ps.push(Parameter::new("w", Tensor::<f64>::from_fn(&[4, 3], |i| i as f64 - 5.5)));
        let before = ps.clone();
        let mut adam = Adam::new(&ps, 0.005);
        for _ in 0..10 {
            adam.step(&mut ps).unwrap();
        }
        assert_eq!(ps.get(0).value, before.get(0).value);
    }

    #[test]
    fn first_step_is_minus_lr_sign() {
        let mut ps = scalar_set(0.0);
        ps.get_mut(0).grad.fill(1.0);
        let mut adam = Adam::new(&ps, 0.005);
        adam.step(&mut ps).unwrap();
        let x = ps.get(0).value.data()[0];
        assert!((x + 0.005).abs() < 1e-10, "{x}");
        assert_eq!(adam.states()[0].step, 1);
    }

    /// Independent scalar Adam written from the update equations.
    fn reference_trace(x0: f64, steps: usize) -> Vec<f64> {
        let (lr, b1, b2, eps) = (0.005, 0.9, 0.999, 1e-8);
        let (mut x, mut m, mut v) = (x0, 0.0, 0.0);
        let mut out = Vec::new();
        for t in 1..=steps {
            let g = 2.0 * (x - 3.0);
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - f64::powi(b1, t as i32));
            let vh = v / (1.0 - f64::powi(b2, t as i32));
            x -= lr * mh / (vh.sqrt() + eps);
            out.push(x);
        }
        out
    }

    #[test]
    fn quadratic_trace_matches_reference() {
        let want = reference_trace(1.0, 3);
        let mut ps = scalar_set(1.0);
        let mut adam = Adam::new(&ps, 0.005);
        for w in want {
            let x = ps.get(0).value.data()[0];
            ps.zero_grad();
            ps.get_mut(0).grad.fill(2.0 * (x - 3.0));
            adam.step(&mut ps).unwrap();
            assert!((ps.get(0).value.data()[0] - w).abs() < 1e-12);
        }
    }

    #[test]
    fn second_moment_non_negative() {
        let mut ps = scalar_set(0.0);
        let mut adam = Adam::new(&ps, 0.01);
        for g in [-3.0, 2.0, -0.5, 0.0] {
            ps.get_mut(0).grad.fill(g);
            adam.step(&mut ps).unwrap();
            assert!(adam.states()[0].v.data()[0] >= 0.0);
        }
    }
}
