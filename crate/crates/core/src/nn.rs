//! Layers composed from tape primitives.

use crate::error::Result;
use crate::tape::{Tape, Var};
use crate::tensor::Real;

/// `x[B×in]·w[in×out] + b[out]`.
pub fn dense<T: Real>(tape: &mut Tape<T>, x: Var, w: Var, b: Var) -> Result<Var> {
    let y = tape.matmul(x, w)?;
    tape.add_row(y, b)
}

/// Weights of one LSTM direction. Gate columns are laid out `[i, f, g, o]`.
#[derive(Clone, Copy, Debug)]
pub struct LstmWeights {
    /// `[d_in × 4H]`
    pub w_ih: Var,
    /// `[H × 4H]`
    pub w_hh: Var,
    /// `[4H]`
    pub bias: Var,
    pub hidden: usize,
}

/// One LSTM step. `state` is `(h, c)`; `None` stands for zero state.
///
/// `c' = f⊙c + i⊙g`, `h' = o⊙tanh(c')`.
pub fn lstm_cell<T: Real>(
    tape: &mut Tape<T>,
    x: Var,
    state: Option<(Var, Var)>,
    w: &LstmWeights,
) -> Result<(Var, Var)> {
    let hsz = w.hidden;
    let mut gates = tape.matmul(x, w.w_ih)?;
    if let Some((h, _)) = state {
        let rec = tape.matmul(h, w.w_hh)?;
        gates = tape.add(gates, rec)?;
    }
    let gates = tape.add_row(gates, w.bias)?;
    let i = tape.slice_cols(gates, 0, hsz)?;
    let i = tape.sigmoid(i);
    let f = tape.slice_cols(gates, hsz, hsz)?;
    let f = tape.sigmoid(f);
    let g = tape.slice_cols(gates, 2 * hsz, hsz)?;
    let g = tape.tanh(g);
    let o = tape.slice_cols(gates, 3 * hsz, hsz)?;
    let o = tape.sigmoid(o);
    let ig = tape.mul(i, g)?;
    let c_new = match state {
        Some((_, c)) => {
            let fc = tape.mul(f, c)?;
            tape.add(fc, ig)?
        }
        None => ig,
    };
    let tc = tape.tanh(c_new);
    let h_new = tape.mul(o, tc)?;
    Ok((h_new, c_new))
}

/// Runs one direction over a sequence; outputs are returned in input order.
pub fn lstm_sequence<T: Real>(
    tape: &mut Tape<T>,
    xs: &[Var],
    w: &LstmWeights,
    reverse: bool,
) -> Result<Vec<Var>> {
    let mut state = None;
    let mut outs = vec![None; xs.len()];
    let order: Vec<usize> = if reverse {
        (0..xs.len()).rev().collect()
    } else {
        (0..xs.len()).collect()
    };
    for t in order {
        let (h, c) = lstm_cell(tape, xs[t], state, w)?;
        outs[t] = Some(h);
        state = Some((h, c));
    }
    Ok(outs.into_iter().map(|h| h.expect("every step visited")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::grad_check_inputs;
    use crate::tensor::Tensor;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_t(rng: &mut impl Rng, shape: &[usize], s: f64) -> Tensor<f64> {
        Tensor::from_fn(shape, |_| rng.random_range(-s..s))
    }

    fn cell_out(
        x: &Tensor<f64>,
        h: &Tensor<f64>,
        c: &Tensor<f64>,
        wi: &Tensor<f64>,
        wh: &Tensor<f64>,
        b: &Tensor<f64>,
        hidden: usize,
    ) -> (Tensor<f64>, Tensor<f64>) {
        let mut tape = Tape::new();
        let (xv, hv, cv) = (tape.input(x.clone()), tape.input(h.clone()), tape.input(c.clone()));
        let w = LstmWeights {
            w_ih: tape.input(wi.clone()),
            w_hh: tape.input(wh.clone()),
            bias: tape.input(b.clone()),
            hidden,
        };
        let (h2, c2) = lstm_cell(&mut tape, xv, Some((hv, cv)), &w).unwrap();
        (tape.value(h2).clone(), tape.value(c2).clone())
    }

    #[test]
    fn zero_weights_give_zero_hidden() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (d, hsz) = (4, 3);
        let x = rand_t(&mut rng, &[2, d], 5.0);
        let h = rand_t(&mut rng, &[2, hsz], 1.0);
        let c = Tensor::zeros(&[2, hsz]);
        let (h2, _) = cell_out(
            &x,
            &h,
            &c,
            &Tensor::zeros(&[d, 4 * hsz]),
            &Tensor::zeros(&[hsz, 4 * hsz]),
            &Tensor::zeros(&[4 * hsz]),
            hsz,
        );
        assert!(h2.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn saturated_forget_gate_keeps_cell() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (d, hsz) = (4, 3);
        let x = rand_t(&mut rng, &[2, d], 1.0);
        let h = rand_t(&mut rng, &[2, hsz], 1.0);
        let c = rand_t(&mut rng, &[2, hsz], 1.0);
        // forget bias 100; input gate bias −100 so nothing is written.
        let b = Tensor::from_fn(&[4 * hsz], |i| match i / hsz {
            0 => -100.0,
            1 => 100.0,
            _ => 0.0,
        });
        let (_, c2) = cell_out(
            &x,
            &h,
            &c,
            &Tensor::zeros(&[d, 4 * hsz]),
            &Tensor::zeros(&[hsz, 4 * hsz]),
            &b,
            hsz,
        );
        for (a, e) in c2.data().iter().zip(c.data()) {
            assert!((a - e).abs() < 1e-6);
        }
    }

    #[test]
    fn lstm_cell_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (d, hsz) = (3, 4);
        let inputs = vec![
            rand_t(&mut rng, &[2, d], 1.0),
            rand_t(&mut rng, &[2, hsz], 1.0),
            rand_t(&mut rng, &[2, hsz], 1.0),
            rand_t(&mut rng, &[d, 4 * hsz], 0.8),
            rand_t(&mut rng, &[hsz, 4 * hsz], 0.8),
            rand_t(&mut rng, &[4 * hsz], 0.5),
            rand_t(&mut rng, &[2, hsz], 1.0),
        ];
        let err = grad_check_inputs(
            &inputs,
            |tape, v| {
                let w = LstmWeights {
                    w_ih: v[3],
                    w_hh: v[4],
                    bias: v[5],
                    hidden: hsz,
                };
                let (h, c) = lstm_cell(tape, v[0], Some((v[1], v[2])), &w)?;
                // scalar: Σ r⊙h + Σ c²
                let rh = tape.mul(h, v[6])?;
                let cc = tape.mul(c, c)?;
                let s = tape.add(rh, cc)?;
                let ones = tape.input(Tensor::full(&[hsz, 1], 1.0));
                let col = tape.matmul(s, ones)?;
                let ones_b = tape.input(Tensor::full(&[1, 2], 1.0));
                let tot = tape.matmul(ones_b, col)?;
                tape.reshape(tot, &[1])
            },
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-5, "max rel err {err}");
    }
}
