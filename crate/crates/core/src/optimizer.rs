//! Adam ascent on the distribution parameters.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{cross_entropy, ImageClassifier, QueryCounter};
use crate::distribution::{self, transform, DistributionParams, SIGMA_FLOOR};
use crate::error::{Error, Result};
use crate::estimator::{combined_gradients, EvalBatch, EvalEntry, GradientPair};
use crate::field::SceneSpec;
use crate::geometry::{Viewpoint, ViewpointBounds, DIM};
use crate::render::{render, RenderConfig};
use crate::seeding;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments for the 12 parameters (`μ` then `σ`).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AdamState {
    pub m: [f64; 2 * DIM],
    pub v: [f64; 2 * DIM],
}

/// Bias-corrected Adam step in the ascent direction. `t` is the 1-based
/// step index.
pub fn adam_step(
    params: &DistributionParams,
    grads: &GradientPair,
    state: &mut AdamState,
    t: u64,
    hyper: &AdamHyper,
) -> Result<DistributionParams> {
    if t == 0 {
        return Err(Error::invalid("adam step index starts at 1"));
    }
    let mut theta = [0.0; 2 * DIM];
    let mut g = [0.0; 2 * DIM];
    theta[..DIM].copy_from_slice(&params.mu);
    theta[DIM..].copy_from_slice(&params.sigma);
    g[..DIM].copy_from_slice(&grads.grad_mu);
    g[DIM..].copy_from_slice(&grads.grad_sigma);
    let c1 = 1.0 - hyper.beta1.powf(t as f64);
    let c2 = 1.0 - hyper.beta2.powf(t as f64);
    for i in 0..2 * DIM {
        state.m[i] = hyper.beta1 * state.m[i] + (1.0 - hyper.beta1) * g[i];
        state.v[i] = hyper.beta2 * state.v[i] + (1.0 - hyper.beta2) * g[i] * g[i];
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        theta[i] += hyper.lr * m_hat / (v_hat.sqrt() + hyper.eps);
    }
    let mut out = *params;
    out.mu.copy_from_slice(&theta[..DIM]);
    out.sigma.copy_from_slice(&theta[DIM..]);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    pub lambda: f64,
    pub k: usize,
    pub iterations: usize,
    pub adam: AdamHyper,
    pub bounds: ViewpointBounds,
    pub seed: u64,
    pub baseline: bool,
    pub sigma_floor: f64,
    pub init: DistributionParams,
    /// Parameters held at a fixed value instead of being searched.
    pub frozen: [Option<f64>; DIM],
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            lambda: 0.01,
            k: 50,
            iterations: 100,
            adam: AdamHyper::default(),
            bounds: ViewpointBounds::paper_full(),
            seed: 0,
            baseline: true,
            sigma_floor: SIGMA_FLOOR,
            init: DistributionParams::default(),
            frozen: [None; DIM],
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid("lambda must be nonnegative"));
        }
        if self.k == 0 || (self.baseline && self.k < 2) {
            return Err(Error::invalid("k must be at least 1 (2 with the baseline)"));
        }
        if !(self.sigma_floor > 0.0) {
            return Err(Error::invalid("sigma_floor must be positive"));
        }
        if !(self.adam.lr > 0.0
            && (0.0..1.0).contains(&self.adam.beta1)
            && (0.0..1.0).contains(&self.adam.beta2)
            && self.adam.eps > 0.0)
        {
            return Err(Error::invalid("invalid adam hyperparameters"));
        }
        self.init.validate(self.sigma_floor)?;
        for (d, f) in self.frozen.iter().enumerate() {
            if let Some(x) = f {
                if !(*x >= self.bounds.min()[d] && *x <= self.bounds.max()[d]) {
                    return Err(Error::OutOfBounds {
                        index: d,
                        value: *x,
                        min: self.bounds.min()[d],
                        max: self.bounds.max()[d],
                    });
                }
            }
        }
        Ok(())
    }

    pub fn apply_frozen(&self, v: Viewpoint) -> Viewpoint {
        freeze(&self.frozen, v)
    }
}

pub fn freeze(frozen: &[Option<f64>; DIM], mut v: Viewpoint) -> Viewpoint {
    for (d, f) in frozen.iter().enumerate() {
        if let Some(x) = f {
            v.0[d] = *x;
        }
    }
    v
}

/// Something that maps a viewpoint to a scalar loss.
pub trait Objective: Sync {
    /// `seed` is a per-evaluation seed (used for stratified rendering).
    fn loss(&self, v: &Viewpoint, seed: u64) -> Result<f64>;
}

impl<F: Fn(&Viewpoint) -> f64 + Sync> Objective for F {
    fn loss(&self, v: &Viewpoint, _seed: u64) -> Result<f64> {
        Ok(self(v))
    }
}

/// Cross-entropy of the classifier on the rendered viewpoint.
pub struct RenderedObjective<'a> {
    pub scene: &'a SceneSpec,
    pub classifier: &'a dyn ImageClassifier,
    pub render_cfg: &'a RenderConfig,
    pub bounds: &'a ViewpointBounds,
}

impl Objective for RenderedObjective<'_> {
    fn loss(&self, v: &Viewpoint, seed: u64) -> Result<f64> {
        let image = render(&self.scene.field, v, self.bounds, &self.render_cfg.with_seed(seed))?;
        let logits = self.classifier.predict(&image)?;
        cross_entropy(&logits, self.scene.label)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub mean_loss: f64,
    pub entropy: f64,
    pub mu: [f64; DIM],
    pub sigma: [f64; DIM],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackTrace {
    pub iterations: Vec<IterationRecord>,
    pub queries: u64,
    pub final_params: DistributionParams,
}

pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to resume an attack bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub iteration: usize,
    pub params: DistributionParams,
    pub adam: AdamState,
    pub rng: ChaCha8Rng,
    pub queries: u64,
    pub records: Vec<IterationRecord>,
}

impl Checkpoint {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self)?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        let version = value.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        Ok(serde_json::from_value(value)?)
    }
}

/// Stateful attack loop; [`run_attack`] drives it to completion.
pub struct Attack<'a, O: Objective> {
    objective: &'a O,
    cfg: &'a AttackConfig,
    params: DistributionParams,
    adam: AdamState,
    rng: ChaCha8Rng,
    iteration: usize,
    queries: u64,
    records: Vec<IterationRecord>,
}

impl<'a, O: Objective> Attack<'a, O> {
    pub fn new(objective: &'a O, cfg: &'a AttackConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Attack {
            objective,
            cfg,
            params: cfg.init,
            adam: AdamState::default(),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            iteration: 0,
            queries: 0,
            records: Vec::new(),
        })
    }

    pub fn resume(objective: &'a O, cfg: &'a AttackConfig, ckpt: Checkpoint) -> Result<Self> {
        cfg.validate()?;
        if ckpt.iteration > cfg.iterations {
            return Err(Error::invalid("checkpoint is past the configured iteration count"));
        }
        Ok(Attack {
            objective,
            cfg,
            params: ckpt.params,
            adam: ckpt.adam,
            rng: ckpt.rng,
            iteration: ckpt.iteration,
            queries: ckpt.queries,
            records: ckpt.records,
        })
    }

    pub fn params(&self) -> &DistributionParams {
        &self.params
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn is_done(&self) -> bool {
        self.iteration >= self.cfg.iterations
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            iteration: self.iteration,
            params: self.params,
            adam: self.adam,
            rng: self.rng.clone(),
            queries: self.queries,
            records: self.records.clone(),
        }
    }

    /// Evaluates the `k` sampled viewpoints. Loss evaluations may run in
    /// parallel; results are gathered in sample order.
    fn evaluate(&mut self) -> Result<EvalBatch> {
        let cfg = self.cfg;
        let samples = distribution::sample(&self.params, &cfg.bounds, cfg.k, &mut self.rng);
        let iteration = self.iteration as u64;
        let entries = samples
            .par_iter()
            .enumerate()
            .map(|(i, s)| {
                let viewpoint = cfg.apply_frozen(s.viewpoint);
                let seed = seeding::derive(cfg.seed, &[iteration, i as u64]);
                let loss = self.objective.loss(&viewpoint, seed)?;
                Ok(EvalEntry {
                    epsilon: s.epsilon,
                    viewpoint,
                    loss,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        self.queries += entries.len() as u64;
        Ok(EvalBatch::new(entries))
    }

    pub fn step(&mut self) -> Result<()> {
        let it = self.iteration;
        let wrap = |e: Error| Error::Iteration {
            iteration: it,
            source: Box::new(e),
        };
        let batch = self.evaluate().map_err(wrap)?;
        let mut grads = combined_gradients(&batch, &self.params, self.cfg.lambda, self.cfg.baseline).map_err(wrap)?;
        for (d, f) in self.cfg.frozen.iter().enumerate() {
            if f.is_some() {
                grads.grad_mu[d] = 0.0;
                grads.grad_sigma[d] = 0.0;
            }
        }
        let (entropy, _) = distribution::entropy_from_epsilons(&self.params, &self.cfg.bounds, &batch.epsilons());
        self.records.push(IterationRecord {
            iteration: it,
            mean_loss: batch.mean_loss(),
            entropy,
            mu: self.params.mu,
            sigma: self.params.sigma,
        });
        let mut next = adam_step(&self.params, &grads, &mut self.adam, it as u64 + 1, &self.cfg.adam).map_err(wrap)?;
        next.clamp_sigma(self.cfg.sigma_floor);
        self.params = next;
        self.iteration += 1;
        Ok(())
    }

    pub fn finish(self) -> (DistributionParams, AttackTrace) {
        (
            self.params,
            AttackTrace {
                iterations: self.records,
                queries: self.queries,
                final_params: self.params,
            },
        )
    }

    pub fn run(mut self) -> Result<(DistributionParams, AttackTrace)> {
        while !self.is_done() {
            self.step()?;
        }
        Ok(self.finish())
    }
}

/// Runs the full attack against an arbitrary objective.
pub fn optimize<O: Objective>(objective: &O, cfg: &AttackConfig) -> Result<(DistributionParams, AttackTrace)> {
    Attack::new(objective, cfg)?.run()
}

/// Searches for a viewpoint distribution that maximizes the classifier's
/// cross-entropy on renders of `scene` plus `λ` times its entropy.
pub fn run_attack(
    scene: &SceneSpec,
    classifier: &dyn ImageClassifier,
    render_cfg: &RenderConfig,
    cfg: &AttackConfig,
) -> Result<(DistributionParams, AttackTrace)> {
    render_cfg.validate()?;
    if scene.label >= classifier.class_count() {
        return Err(Error::invalid(format!(
            "scene label {} out of range for {} classes",
            scene.label,
            classifier.class_count()
        )));
    }
    let counter = QueryCounter::new(classifier);
    let objective = RenderedObjective {
        scene,
        classifier: &counter,
        render_cfg,
        bounds: &cfg.bounds,
    };
    let (params, mut trace) = optimize(&objective, cfg)?;
    trace.queries = counter.queries();
    Ok((params, trace))
}

/// The transformed mean `a·tanh(μ) + b`. Frozen values are not applied.
pub fn optimal_viewpoint(params: &DistributionParams, bounds: &ViewpointBounds) -> Viewpoint {
    transform(&params.mu, bounds)
}
