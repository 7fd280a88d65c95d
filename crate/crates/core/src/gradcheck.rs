//! Central finite differences against tape gradients.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::models::{Architecture, Network};
use crate::param::ParamSet;
use crate::rng::{stream_rng, Stream};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

pub const DEFAULT_STEP: f64 = 1e-5;
/// Tensors larger than this are checked on a random subsample of this size.
pub const DEFAULT_SAMPLE: usize = 200;
/// Denominator floor for the relative error. Central differences at step
/// 1e-5 on an O(1) loss carry ~1e-11..1e-9 of roundoff, so gradient entries
/// below this are compared in absolute terms (error < 1e-9 to pass).
pub const DENOM_FLOOR: f64 = 1e-4;

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    pub step: f64,
    pub sample: usize,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: DEFAULT_STEP,
            sample: DEFAULT_SAMPLE,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Parameter name and flat index of the worst element.
    pub worst: Option<(String, usize)>,
    /// Analytic and numeric gradient at the worst element.
    pub worst_values: (f64, f64),
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(DENOM_FLOOR)
}

fn scalar_loss<F>(params: &ParamSet<f64>, forward: &F) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, &ParamSet<f64>) -> Result<Var>,
{
    let mut tape = Tape::new();
    let loss = forward(&mut tape, params)?;
    Ok(tape.value(loss).data()[0])
}

/// Max relative error between reverse-mode and central-difference gradients
/// over every parameter element (or a seeded subsample for large tensors).
pub fn grad_check<F>(params: &mut ParamSet<f64>, forward: F, opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &ParamSet<f64>) -> Result<Var>,
{
    params.zero_grad();
    {
        let mut tape = Tape::new();
        let loss = forward(&mut tape, params)?;
        tape.backward(loss)?.accumulate_into(params)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut report = GradCheckReport::default();
    for id in 0..params.len() {
        let n = params.get(id).value.len();
        let indices: Vec<usize> = if n <= opts.sample {
            (0..n).collect()
        } else {
            let mut idx = sample(&mut rng, n, opts.sample).into_vec();
            idx.sort_unstable();
            idx
        };
        for i in indices {
            let original = params.get(id).value.data()[i];
            params.get_mut(id).value.data_mut()[i] = original + opts.step;
            let plus = scalar_loss(params, &forward)?;
            params.get_mut(id).value.data_mut()[i] = original - opts.step;
            let minus = scalar_loss(params, &forward)?;
            params.get_mut(id).value.data_mut()[i] = original;
            let numeric = (plus - minus) / (2.0 * opts.step);
            let analytic = params.get(id).grad.data()[i];
            let err = relative_error(analytic, numeric);
            report.checked += 1;
            if report.worst.is_none() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((params.get(id).name.clone(), i));
                report.worst_values = (analytic, numeric);
            }
        }
    }
    Ok(report)
}

/// Checks a 64-bit network's cross-entropy gradients on `batch` random
/// windows with random labels. Biases are randomized too so that no gate
/// sits at its initial constant.
pub fn check_network(arch: &Architecture, batch: usize, seed: u64) -> Result<GradCheckReport> {
    let mut rng = stream_rng(seed, Stream::Check);
    let mut net = Network::<f64>::new(arch.clone(), seed)?;
    for p in net.params.iter_mut() {
        if p.name.ends_with("bias") {
            for v in p.value.data_mut() {
                *v = rng.random_range(-0.5..0.5);
            }
        }
    }
    let c = arch.num_classes();
    let x = Tensor::from_fn(&[batch, crate::data::WINDOW, crate::data::FEATURES], |_| rng.random_range(-2.0..2.0));
    let labels: Vec<usize> = (0..batch).map(|_| rng.random_range(0..c)).collect();
    let arch = arch.clone();
    grad_check(
        &mut net.params,
        |tape, params| {
            let n = Network::from_params(arch.clone(), params.clone())?;
            let xv = tape.input(x.clone());
            let z = n.logits(tape, xv, true)?;
            tape.cross_entropy(z, &labels, None)
        },
        &GradCheckOptions {
            seed,
            ..GradCheckOptions::default()
        },
    )
}

/// Same check for free input tensors instead of parameters.
pub fn grad_check_inputs<F>(inputs: &[Tensor<f64>], forward: F, step: f64) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let eval = |xs: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.leaf(x.clone())).collect();
        let loss = forward(&mut tape, &vars)?;
        Ok(tape.value(loss).data()[0])
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.leaf(x.clone())).collect();
    let loss = forward(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;
    let mut worst: f64 = 0.0;
    let mut xs = inputs.to_vec();
    for (k, var) in vars.iter().enumerate() {
        let analytic = grads
            .get(*var)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(inputs[k].shape()));
        for i in 0..xs[k].len() {
            let original = xs[k].data()[i];
            xs[k].data_mut()[i] = original + step;
            let plus = eval(&xs)?;
            xs[k].data_mut()[i] = original - step;
            let minus = eval(&xs)?;
            xs[k].data_mut()[i] = original;
            let numeric = (plus - minus) / (2.0 * step);
            worst = worst.max(relative_error(analytic.data()[i], numeric));
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::param::Parameter;

    #[test]
    fn linear_model_gradient_is_exact() {
        // y = w·x, loss = y, so dL/dw = x.
        let x = Tensor::new(vec![3, 1], vec![0.5, -1.25, 2.0]).unwrap();
        let mut params = ParamSet::new();
        params.push(Parameter::new("w", Tensor::new(vec![1, 3], vec![0.3, 0.1, -0.7]).unwrap()));
        let report = grad_check(
            &mut params,
            |tape, ps| {
                let w = tape.param(ps, 0);
                let xv = tape.input(x.clone());
                let y = tape.matmul(w, xv)?;
                tape.reshape(y, &[1])
            },
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-10, "{report:?}");
        assert_eq!(params.get(0).grad.data(), x.data());
        assert_eq!(report.checked, 3);
    }
}
