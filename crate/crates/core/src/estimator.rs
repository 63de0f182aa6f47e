//! Search-gradient estimators for the distribution parameters.
//!
//! The loss term uses score-function (NES) gradients preconditioned by the
//! inverse Fisher information of the diagonal Gaussian (`F_μ = I/σ²`,
//! `F_σ = 2I/σ²`), so per sample:
//!
//! * `∇̃μ = (L − L̄)·σε`
//! * `∇̃σ = (L − L̄)·σ(ε² − 1)/2`
//!
//! with `L̄` the batch-mean baseline (or zero when the baseline is off). The
//! entropy term is differentiated through the reparameterization:
//!
//! * `∇μ H = −2 tanh(μ + σε)`
//! * `∇σ H = (1 − 2 tanh(μ + σε)·σε)/σ`
//!
//! Reductions run in sample order so results are bit-reproducible.

use serde::{Deserialize, Serialize};

use crate::distribution::{DistributionParams, SIGMA_FLOOR};
use crate::error::{Error, Result};
use crate::geometry::{Viewpoint, DIM};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GradientPair {
    pub grad_mu: [f64; DIM],
    pub grad_sigma: [f64; DIM],
}

impl GradientPair {
    pub fn is_finite(&self) -> bool {
        self.grad_mu.iter().chain(&self.grad_sigma).all(|x| x.is_finite())
    }

    /// `self + scale·other`.
    pub fn add_scaled(&self, other: &GradientPair, scale: f64) -> GradientPair {
        let mut out = *self;
        for d in 0..DIM {
            out.grad_mu[d] += scale * other.grad_mu[d];
            out.grad_sigma[d] += scale * other.grad_sigma[d];
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalEntry {
    pub epsilon: [f64; DIM],
    pub viewpoint: Viewpoint,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalBatch {
    pub entries: Vec<EvalEntry>,
}

impl EvalBatch {
    pub fn new(entries: Vec<EvalEntry>) -> Self {
        EvalBatch { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn mean_loss(&self) -> f64 {
        self.entries.iter().map(|e| e.loss).sum::<f64>() / self.entries.len() as f64
    }

    pub fn epsilons(&self) -> Vec<[f64; DIM]> {
        self.entries.iter().map(|e| e.epsilon).collect()
    }
}

/// Gradient estimate plus per-component standard errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientEstimate {
    pub mean: GradientPair,
    pub std_err: GradientPair,
}

/// Accumulates per-sample gradient terms in order; yields means and standard
/// errors.
struct Accumulator {
    terms: Vec<GradientPair>,
}

impl Accumulator {
    fn finish(self) -> GradientEstimate {
        let n = self.terms.len() as f64;
        let mut mean = GradientPair::default();
        for t in &self.terms {
            mean = mean.add_scaled(t, 1.0);
        }
        for d in 0..DIM {
            mean.grad_mu[d] /= n;
            mean.grad_sigma[d] /= n;
        }
        let mut std_err = GradientPair::default();
        if self.terms.len() > 1 {
            for t in &self.terms {
                for d in 0..DIM {
                    std_err.grad_mu[d] += (t.grad_mu[d] - mean.grad_mu[d]).powi(2);
                    std_err.grad_sigma[d] += (t.grad_sigma[d] - mean.grad_sigma[d]).powi(2);
                }
            }
            for d in 0..DIM {
                std_err.grad_mu[d] = (std_err.grad_mu[d] / (n - 1.0) / n).sqrt();
                std_err.grad_sigma[d] = (std_err.grad_sigma[d] / (n - 1.0) / n).sqrt();
            }
        }
        GradientEstimate { mean, std_err }
    }
}

fn check_batch(batch: &EvalBatch, baseline: bool) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::invalid("evaluation batch is empty"));
    }
    if baseline && batch.len() < 2 {
        return Err(Error::invalid("baseline subtraction needs at least 2 samples"));
    }
    if let Some(i) = batch.entries.iter().position(|e| !e.loss.is_finite()) {
        return Err(Error::invalid(format!("loss of sample {i} is not finite")));
    }
    Ok(())
}

fn baseline_of(batch: &EvalBatch, baseline: bool) -> f64 {
    if baseline {
        batch.mean_loss()
    } else {
        0.0
    }
}

/// Natural-gradient search estimate with standard errors.
pub fn score_gradients_with_error(
    batch: &EvalBatch,
    params: &DistributionParams,
    baseline: bool,
) -> Result<GradientEstimate> {
    check_batch(batch, baseline)?;
    let lbar = baseline_of(batch, baseline);
    let terms = batch
        .entries
        .iter()
        .map(|e| {
            let w = e.loss - lbar;
            let mut g = GradientPair::default();
            for d in 0..DIM {
                let (s, eps) = (params.sigma[d], e.epsilon[d]);
                g.grad_mu[d] = w * s * eps;
                g.grad_sigma[d] = w * s * (eps * eps - 1.0) / 2.0;
            }
            g
        })
        .collect();
    Ok(Accumulator { terms }.finish())
}

/// Natural-gradient search estimate of `∇ E[L]` (Fisher-preconditioned).
pub fn score_gradients(batch: &EvalBatch, params: &DistributionParams, baseline: bool) -> Result<GradientPair> {
    Ok(score_gradients_with_error(batch, params, baseline)?.mean)
}

/// Plain (unpreconditioned) search gradient: `(L − L̄)·ε/σ` and
/// `(L − L̄)·(ε² − 1)/σ`.
pub fn plain_score_gradients(batch: &EvalBatch, params: &DistributionParams, baseline: bool) -> Result<GradientPair> {
    check_batch(batch, baseline)?;
    let lbar = baseline_of(batch, baseline);
    let mut g = GradientPair::default();
    for e in &batch.entries {
        let w = e.loss - lbar;
        for d in 0..DIM {
            let (s, eps) = (params.sigma[d], e.epsilon[d]);
            g.grad_mu[d] += w * eps / s;
            g.grad_sigma[d] += w * (eps * eps - 1.0) / s;
        }
    }
    let n = batch.len() as f64;
    for d in 0..DIM {
        g.grad_mu[d] /= n;
        g.grad_sigma[d] /= n;
    }
    Ok(g)
}

/// Reparameterized entropy gradients averaged over `epsilons`, with standard
/// errors.
pub fn entropy_gradients_with_error(params: &DistributionParams, epsilons: &[[f64; DIM]]) -> Result<GradientEstimate> {
    if epsilons.is_empty() {
        return Err(Error::invalid("entropy gradients need at least one sample"));
    }
    if let Some(d) = params.sigma.iter().position(|&s| !(s >= SIGMA_FLOOR)) {
        return Err(Error::invalid(format!(
            "sigma[{d}] = {} is below the floor {SIGMA_FLOOR}",
            params.sigma[d]
        )));
    }
    let terms = epsilons
        .iter()
        .map(|eps| {
            let mut g = GradientPair::default();
            for d in 0..DIM {
                let (m, s, e) = (params.mu[d], params.sigma[d], eps[d]);
                let th = (m + s * e).tanh();
                g.grad_mu[d] = -2.0 * th;
                g.grad_sigma[d] = (1.0 - 2.0 * th * s * e) / s;
            }
            g
        })
        .collect();
    Ok(Accumulator { terms }.finish())
}

pub fn entropy_gradients(params: &DistributionParams, epsilons: &[[f64; DIM]]) -> Result<GradientPair> {
    Ok(entropy_gradients_with_error(params, epsilons)?.mean)
}

/// Ascent direction for `E[L] + λ·H`: natural search gradient of the loss
/// plus `λ` times the reparameterized entropy gradient, both over the
/// batch's shared `ε` draws.
pub fn combined_gradients(
    batch: &EvalBatch,
    params: &DistributionParams,
    lambda: f64,
    baseline: bool,
) -> Result<GradientPair> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!(
            "lambda must be a nonnegative number, got {lambda}"
        )));
    }
    let loss = score_gradients(batch, params, baseline)?;
    if lambda == 0.0 {
        return Ok(loss);
    }
    let ent = entropy_gradients(params, &batch.epsilons())?;
    Ok(loss.add_scaled(&ent, lambda))
}
