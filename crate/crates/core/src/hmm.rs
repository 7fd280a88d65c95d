//! Diagonal-Gaussian hidden Markov models trained with Baum-Welch, and a
//! per-class maximum-likelihood classifier built from them.

use std::f64::consts::PI;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::WindowSample;
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HmmConfig {
    pub n_states: usize,
    pub max_iters: usize,
    /// Stop once the mean per-sequence log-likelihood improves by less than this.
    pub tol: f64,
    pub var_floor: f64,
}

impl Default for HmmConfig {
    fn default() -> Self {
        HmmConfig {
            n_states: 7,
            max_iters: 100,
            tol: 1e-4,
            var_floor: 1e-6,
        }
    }
}

impl HmmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_states == 0 {
            return Err(Error::Config("HMM needs at least one state".into()));
        }
        if !(self.var_floor > 0.0) || !(self.tol >= 0.0) {
            return Err(Error::Config("HMM variance floor must be positive and tol non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianHmm {
    pub initial: Vec<f64>,
    /// Row-major `n×n`, rows sum to 1.
    pub transitions: Vec<f64>,
    /// `n` rows of `dim` means.
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
}

fn check_obs<S: AsRef<[f64]>>(seq: &[S], dim: usize) -> Result<()> {
    if seq.is_empty() {
        return Err(Error::Data("empty observation sequence".into()));
    }
    for (t, o) in seq.iter().enumerate() {
        let o = o.as_ref();
        if o.len() != dim {
            return Err(Error::dim("hmm observation", &[o.len()], &[dim]));
        }
        if o.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite observation at step {t}")));
        }
    }
    Ok(())
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Scaled forward/backward quantities for one sequence.
struct Posterior {
    loglik: f64,
    /// `T×n` state posteriors.
    gamma: Vec<Vec<f64>>,
    /// Σ_t ξ_t, row-major `n×n`.
    xi_sum: Vec<f64>,
}

impl GaussianHmm {
    pub fn n_states(&self) -> usize {
        self.initial.len()
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    pub fn trans(&self, i: usize, j: usize) -> f64 {
        self.transitions[i * self.n_states() + j]
    }

    /// log N(o; μ_s, diag σ²_s).
    pub fn log_emission(&self, s: usize, o: &[f64]) -> f64 {
        let mut acc = 0.0;
        for ((x, m), v) in o.iter().zip(&self.means[s]).zip(&self.variances[s]) {
            let d = x - m;
            acc -= 0.5 * ((2.0 * PI * v).ln() + d * d / v);
        }
        acc
    }

    fn log_emissions<S: AsRef<[f64]>>(&self, seq: &[S]) -> Vec<Vec<f64>> {
        seq.iter()
            .map(|o| (0..self.n_states()).map(|s| self.log_emission(s, o.as_ref())).collect())
            .collect()
    }

    /// Log-likelihood via the forward algorithm with per-step normalization.
    pub fn forward_loglik<S: AsRef<[f64]>>(&self, seq: &[S]) -> Result<f64> {
        check_obs(seq, self.dim())?;
        Ok(self.posterior(seq, false).loglik)
    }

    /// Log-likelihood via the forward algorithm carried out in log space.
    pub fn forward_loglik_log<S: AsRef<[f64]>>(&self, seq: &[S]) -> Result<f64> {
        check_obs(seq, self.dim())?;
        Ok(self.posterior_log(seq, false).loglik)
    }

    /// Log-space forward/backward. Exact whenever probabilities underflow.
    fn posterior_log<S: AsRef<[f64]>>(&self, seq: &[S], full: bool) -> Posterior {
        let n = self.n_states();
        let steps = seq.len();
        let logb = self.log_emissions(seq);
        let log_a: Vec<f64> = self.transitions.iter().map(|p| p.ln()).collect();
        let mut terms = vec![0.0; n];
        let mut la = vec![vec![0.0; n]; steps];
        for j in 0..n {
            la[0][j] = self.initial[j].ln() + logb[0][j];
        }
        for t in 1..steps {
            for j in 0..n {
                for i in 0..n {
                    terms[i] = la[t - 1][i] + log_a[i * n + j];
                }
                la[t][j] = log_sum_exp(&terms) + logb[t][j];
            }
        }
        let loglik = log_sum_exp(&la[steps - 1]);
        if !full {
            return Posterior {
                loglik,
                gamma: Vec::new(),
                xi_sum: Vec::new(),
            };
        }
        let mut lb = vec![vec![0.0; n]; steps];
        for t in (0..steps - 1).rev() {
            for i in 0..n {
                for j in 0..n {
                    terms[j] = log_a[i * n + j] + logb[t + 1][j] + lb[t + 1][j];
                }
                lb[t][i] = log_sum_exp(&terms);
            }
        }
        let gamma = (0..steps)
            .map(|t| (0..n).map(|i| (la[t][i] + lb[t][i] - loglik).exp()).collect())
            .collect();
        let mut xi_sum = vec![0.0; n * n];
        for t in 0..steps - 1 {
            for i in 0..n {
                for j in 0..n {
                    xi_sum[i * n + j] +=
                        (la[t][i] + log_a[i * n + j] + logb[t + 1][j] + lb[t + 1][j] - loglik).exp();
                }
            }
        }
        Posterior { loglik, gamma, xi_sum }
    }

    /// E-step for one sequence. Emissions are shifted by their per-step max
    /// before exponentiating; if a step still underflows to zero (the only
    /// likely states are unreachable) the log-space pass takes over.
    fn posterior<S: AsRef<[f64]>>(&self, seq: &[S], full: bool) -> Posterior {
        let n = self.n_states();
        let steps = seq.len();
        let logb = self.log_emissions(seq);
        let mut shift = vec![0.0; steps];
        let b: Vec<Vec<f64>> = logb
            .iter()
            .enumerate()
            .map(|(t, row)| {
                let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                shift[t] = m;
                row.iter().map(|v| (v - m).exp()).collect()
            })
            .collect();
        let mut alpha = vec![vec![0.0; n]; steps];
        let mut scale = vec![0.0; steps];
        for t in 0..steps {
            for j in 0..n {
                let prior = if t == 0 {
                    self.initial[j]
                } else {
                    (0..n).map(|i| alpha[t - 1][i] * self.trans(i, j)).sum()
                };
                alpha[t][j] = prior * b[t][j];
            }
            scale[t] = alpha[t].iter().sum();
            if !(scale[t] > 0.0 && scale[t].is_finite()) {
                return self.posterior_log(seq, full);
            }
            for a in alpha[t].iter_mut() {
                *a /= scale[t];
            }
        }
        let loglik = scale.iter().map(|c| c.ln()).sum::<f64>() + shift.iter().sum::<f64>();
        if !full {
            return Posterior {
                loglik,
                gamma: Vec::new(),
                xi_sum: Vec::new(),
            };
        }
        let mut beta = vec![vec![1.0; n]; steps];
        for t in (0..steps - 1).rev() {
            for i in 0..n {
                beta[t][i] = (0..n).map(|j| self.trans(i, j) * b[t + 1][j] * beta[t + 1][j]).sum::<f64>() / scale[t + 1];
            }
        }
        let gamma = (0..steps)
            .map(|t| {
                let g: Vec<f64> = (0..n).map(|i| alpha[t][i] * beta[t][i]).collect();
                let z: f64 = g.iter().sum();
                g.into_iter().map(|v| v / z).collect()
            })
            .collect();
        let mut xi_sum = vec![0.0; n * n];
        for t in 0..steps - 1 {
            for i in 0..n {
                for j in 0..n {
                    xi_sum[i * n + j] +=
                        alpha[t][i] * self.trans(i, j) * b[t + 1][j] * beta[t + 1][j] / scale[t + 1];
                }
            }
        }
        Posterior { loglik, gamma, xi_sum }
    }

    fn check_invariants(&self, floor: f64) -> Result<()> {
        let n = self.n_states();
        let bad = |what: &str| Err(Error::State(format!("HMM {what} violated")));
        if (self.initial.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("initial distribution normalization");
        }
        for i in 0..n {
            let row: f64 = (0..n).map(|j| self.trans(i, j)).sum();
            if (row - 1.0).abs() > 1e-9 {
                return bad("transition row normalization");
            }
        }
        if self.variances.iter().flatten().any(|&v| !(v >= floor)) {
            return bad("variance floor");
        }
        Ok(())
    }
}

/// Result of [`baum_welch_fit`].
#[derive(Clone, Debug)]
pub struct FitResult {
    pub model: GaussianHmm,
    /// Total training log-likelihood before each M-step.
    pub trace: Vec<f64>,
    pub converged: bool,
}

fn normalize(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
}

/// Means from a few Lloyd iterations over the pooled observations (distance
/// scaled per feature by the pooled spread), variances from the resulting
/// clusters, near-uniform initial and transition probabilities.
fn initialize<S: AsRef<[f64]>>(seqs: &[Vec<S>], cfg: &HmmConfig, rng: &mut impl Rng) -> GaussianHmm {
    let n = cfg.n_states;
    let pts: Vec<&[f64]> = seqs.iter().flatten().map(|o| o.as_ref()).collect();
    let dim = pts[0].len();
    let count = pts.len() as f64;
    let mut mean = vec![0.0; dim];
    for p in &pts {
        for j in 0..dim {
            mean[j] += p[j] / count;
        }
    }
    let mut var = vec![0.0; dim];
    for p in &pts {
        for j in 0..dim {
            var[j] += (p[j] - mean[j]).powi(2) / count;
        }
    }
    let global_var: Vec<f64> = var.iter().map(|v| v.max(cfg.var_floor)).collect();
    let scale: Vec<f64> = var.iter().map(|v| if *v > 1e-12 { 1.0 / v } else { 1.0 }).collect();
    let dist = |a: &[f64], b: &[f64]| -> f64 { (0..dim).map(|j| (a[j] - b[j]).powi(2) * scale[j]).sum() };

    let mut centers: Vec<Vec<f64>> = if pts.len() >= n {
        index::sample(rng, pts.len(), n).into_iter().map(|i| pts[i].to_vec()).collect()
    } else {
        (0..n).map(|i| pts[i % pts.len()].to_vec()).collect()
    };
    let mut assign = vec![0usize; pts.len()];
    for _ in 0..10 {
        for (k, p) in pts.iter().enumerate() {
            let mut best = 0;
            for c in 1..n {
                if dist(p, &centers[c]) < dist(p, &centers[best]) {
                    best = c;
                }
            }
            assign[k] = best;
        }
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<&&[f64]> = pts.iter().zip(&assign).filter(|(_, &a)| a == c).map(|(p, _)| p).collect();
            if !members.is_empty() {
                for j in 0..dim {
                    center[j] = members.iter().map(|p| p[j]).sum::<f64>() / members.len() as f64;
                }
            }
        }
    }
    let variances = (0..n)
        .map(|c| {
            let members: Vec<&&[f64]> = pts.iter().zip(&assign).filter(|(_, &a)| a == c).map(|(p, _)| p).collect();
            if members.len() < 2 {
                return global_var.clone();
            }
            (0..dim)
                .map(|j| {
                    let m = centers[c][j];
                    let v = members.iter().map(|p| (p[j] - m).powi(2)).sum::<f64>() / members.len() as f64;
                    v.max(cfg.var_floor)
                })
                .collect()
        })
        .collect();
    let mut initial: Vec<f64> = (0..n).map(|_| 1.0 + 0.01 * rng.random::<f64>()).collect();
    normalize(&mut initial);
    let mut transitions = Vec::with_capacity(n * n);
    for _ in 0..n {
        let mut row: Vec<f64> = (0..n).map(|_| 1.0 + 0.01 * rng.random::<f64>()).collect();
        normalize(&mut row);
        transitions.extend(row);
    }
    GaussianHmm {
        initial,
        transitions,
        means: centers,
        variances,
    }
}

/// EM training on equal- or variable-length sequences.
pub fn baum_welch_fit<S: AsRef<[f64]>>(seqs: &[Vec<S>], cfg: &HmmConfig, rng: &mut impl Rng) -> Result<FitResult> {
    cfg.validate()?;
    let Some(first) = seqs.iter().find(|s| !s.is_empty()) else {
        return Err(Error::Data("Baum-Welch needs at least one non-empty sequence".into()));
    };
    let dim = first[0].as_ref().len();
    for s in seqs {
        check_obs(s, dim)?;
    }
    let n = cfg.n_states;
    let mut model = initialize(seqs, cfg, rng);
    let mut trace = Vec::new();
    let mut converged = false;
    for _ in 0..cfg.max_iters {
        let mut loglik = 0.0;
        let mut init_acc = vec![0.0; n];
        let mut trans_acc = vec![0.0; n * n];
        let mut occ = vec![0.0; n];
        let mut occ_from = vec![0.0; n];
        let mut sum_x = vec![vec![0.0; dim]; n];
        let mut gammas = Vec::with_capacity(seqs.len());
        for s in seqs {
            let post = model.posterior(s, true);
            loglik += post.loglik;
            for i in 0..n {
                init_acc[i] += post.gamma[0][i];
            }
            for (k, v) in post.xi_sum.iter().enumerate() {
                trans_acc[k] += v;
            }
            for (t, g) in post.gamma.iter().enumerate() {
                let o = s[t].as_ref();
                for i in 0..n {
                    occ[i] += g[i];
                    if t + 1 < s.len() {
                        occ_from[i] += g[i];
                    }
                    for j in 0..dim {
                        sum_x[i][j] += g[i] * o[j];
                    }
                }
            }
            gammas.push(post.gamma);
        }
        if !loglik.is_finite() {
            return Err(Error::State(format!("Baum-Welch log-likelihood became {loglik}")));
        }
        let improvement = trace.last().map(|prev| (loglik - prev) / seqs.len() as f64);
        trace.push(loglik);
        if improvement.is_some_and(|d| d < cfg.tol) {
            converged = true;
            break;
        }

        // M-step; a state that received no mass keeps its previous parameters
        let mut means = model.means.clone();
        for i in 0..n {
            if occ[i] > 1e-300 {
                for j in 0..dim {
                    means[i][j] = sum_x[i][j] / occ[i];
                }
            }
        }
        let mut sum_sq = vec![vec![0.0; dim]; n];
        for (s, gamma) in seqs.iter().zip(&gammas) {
            for (t, g) in gamma.iter().enumerate() {
                let o = s[t].as_ref();
                for i in 0..n {
                    for j in 0..dim {
                        sum_sq[i][j] += g[i] * (o[j] - means[i][j]).powi(2);
                    }
                }
            }
        }
        let mut variances = model.variances.clone();
        for i in 0..n {
            if occ[i] > 1e-300 {
                for j in 0..dim {
                    variances[i][j] = (sum_sq[i][j] / occ[i]).max(cfg.var_floor);
                }
            }
        }
        let mut initial = init_acc;
        normalize(&mut initial);
        let mut transitions = model.transitions.clone();
        for i in 0..n {
            if occ_from[i] > 1e-300 {
                let mut row: Vec<f64> = trans_acc[i * n..(i + 1) * n].to_vec();
                normalize(&mut row);
                transitions[i * n..(i + 1) * n].copy_from_slice(&row);
            }
        }
        model = GaussianHmm {
            initial,
            transitions,
            means,
            variances,
        };
        model.check_invariants(cfg.var_floor)?;
    }
    Ok(FitResult {
        model,
        trace,
        converged,
    })
}

/// One HMM per class; prediction is the class whose model gives the highest
/// sequence log-likelihood (ties to the lowest index, no class priors).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HmmClassifier {
    pub config: HmmConfig,
    pub class_names: Vec<String>,
    pub models: Vec<Option<GaussianHmm>>,
}

impl HmmClassifier {
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Fits each class on its own windows with the class's HMM stream of `seed`.
    pub fn fit(samples: &[WindowSample], class_names: &[String], cfg: &HmmConfig, seed: u64) -> Result<Self> {
        let c = class_names.len();
        let mut per_class: Vec<Vec<Vec<[f64; crate::data::FEATURES]>>> = vec![Vec::new(); c];
        for (i, s) in samples.iter().enumerate() {
            per_class
                .get_mut(s.label)
                .ok_or_else(|| Error::Data(format!("sample {i} label {} out of range for {c} classes", s.label)))?
                .push(s.states.clone());
        }
        let mut models = Vec::with_capacity(c);
        for (k, seqs) in per_class.iter().enumerate() {
            if seqs.is_empty() {
                return Err(Error::Config(format!("class {:?} has no training windows", class_names[k])));
            }
            let mut rng = stream_rng(seed, Stream::Hmm { class: k });
            models.push(Some(baum_welch_fit(seqs, cfg, &mut rng)?.model));
        }
        Ok(HmmClassifier {
            config: cfg.clone(),
            class_names: class_names.to_vec(),
            models,
        })
    }

    /// Log-likelihood of `seq` under every class model.
    pub fn scores<S: AsRef<[f64]>>(&self, seq: &[S]) -> Result<Vec<f64>> {
        self.models
            .iter()
            .enumerate()
            .map(|(k, m)| {
                m.as_ref()
                    .ok_or_else(|| Error::State(format!("class {:?} has no trained HMM", self.class_names[k])))?
                    .forward_loglik(seq)
            })
            .collect()
    }

    pub fn classify<S: AsRef<[f64]>>(&self, seq: &[S]) -> Result<usize> {
        let s = self.scores(seq)?;
        let mut best = 0;
        for k in 1..s.len() {
            if s[k] > s[best] {
                best = k;
            }
        }
        Ok(best)
    }
}
