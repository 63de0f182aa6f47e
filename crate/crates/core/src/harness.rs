//! Evaluation protocol: success rates, baselines, fluctuation tests,
//! transferability, λ sweeps and dataset emission.
//!
//! Every function takes an explicit seed. Viewpoints are drawn sequentially
//! from a ChaCha8 stream; renders may then run in parallel. Unless noted,
//! a viewpoint is rendered with the render config's own seed, so whether a
//! viewpoint is misclassified does not depend on where it was drawn.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{is_misclassified, ImageClassifier};
use crate::distribution::{self, DistributionParams};
use crate::error::{Error, Result};
use crate::field::SceneSpec;
use crate::geometry::{Viewpoint, ViewpointBounds, DIM, PARAM_NAMES};
use crate::optimizer::{freeze, optimal_viewpoint, run_attack, AttackConfig, AttackTrace};
use crate::render::{render, RenderConfig};
use crate::scene_io;
use crate::seeding;

/// Samples drawn from a fitted distribution for `rate_dist` and the
/// per-parameter standard deviations.
pub const EVAL_SAMPLES: usize = 100;
/// Perturbed viewpoints per fluctuation point.
pub const FLUCTUATION_SAMPLES: usize = 20;
/// Reseeded renders behind the perturbed-render proxy.
pub const PROXY_RENDERS: usize = 20;

/// A scene, a classifier and the rendering setup they are evaluated under.
#[derive(Clone, Copy)]
pub struct Target<'a> {
    pub scene: &'a SceneSpec,
    pub classifier: &'a dyn ImageClassifier,
    pub render: &'a RenderConfig,
    pub bounds: &'a ViewpointBounds,
    pub frozen: &'a [Option<f64>; DIM],
}

impl Target<'_> {
    pub fn misclassified(&self, v: &Viewpoint) -> Result<bool> {
        self.misclassified_with_seed(v, self.render.rng_seed)
    }

    pub fn misclassified_with_seed(&self, v: &Viewpoint, seed: u64) -> Result<bool> {
        let image = render(&self.scene.field, v, self.bounds, &self.render.with_seed(seed))?;
        is_misclassified(self.classifier, &image, self.scene.label)
    }

    fn misclassified_fraction(&self, views: &[Viewpoint]) -> Result<f64> {
        if views.is_empty() {
            return Err(Error::invalid("cannot take a success rate over zero viewpoints"));
        }
        let hits = views
            .par_iter()
            .map(|v| self.misclassified(v).map(usize::from))
            .collect::<Result<Vec<_>>>()?;
        Ok(hits.iter().sum::<usize>() as f64 / views.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub method: String,
    pub scene: String,
    /// Success rate over samples from the fitted distribution (or over the
    /// uniform samples, for random search).
    pub rate_dist: f64,
    /// Success at the transformed mean; absent for random search.
    pub rate_opt: Option<f64>,
    /// Perturbed-render proxy for the physical-world rate at `v*`: the
    /// fraction of reseeded stratified renders of `v*` misclassified.
    pub rate_real_proxy: Option<f64>,
    pub param_std: [f64; DIM],
    pub queries: u64,
    pub samples: usize,
}

/// Averages per-object reports into one row; rates, stds and queries are
/// averaged or summed over objects.
pub fn aggregate(method: &str, reports: &[AttackReport]) -> Result<AttackReport> {
    if reports.is_empty() {
        return Err(Error::invalid("nothing to aggregate"));
    }
    let n = reports.len() as f64;
    let mean_opt = |f: fn(&AttackReport) -> Option<f64>| -> Option<f64> {
        reports.iter().map(f).sum::<Option<f64>>().map(|s| s / n)
    };
    let mut param_std = [0.0; DIM];
    for r in reports {
        for d in 0..DIM {
            param_std[d] += r.param_std[d] / n;
        }
    }
    Ok(AttackReport {
        method: method.to_string(),
        scene: "all".into(),
        rate_dist: reports.iter().map(|r| r.rate_dist).sum::<f64>() / n,
        rate_opt: mean_opt(|r| r.rate_opt),
        rate_real_proxy: mean_opt(|r| r.rate_real_proxy),
        param_std,
        queries: reports.iter().map(|r| r.queries).sum(),
        samples: reports.iter().map(|r| r.samples).sum(),
    })
}

fn std_per_param(views: &[Viewpoint]) -> [f64; DIM] {
    let n = views.len() as f64;
    let mut out = [0.0; DIM];
    if views.len() < 2 {
        return out;
    }
    for (d, o) in out.iter_mut().enumerate() {
        let mean = views.iter().map(|v| v.0[d]).sum::<f64>() / n;
        *o = (views.iter().map(|v| (v.0[d] - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    }
    out
}

/// `n` viewpoints from the distribution, frozen components applied.
pub fn posterior_samples(
    params: &DistributionParams,
    bounds: &ViewpointBounds,
    frozen: &[Option<f64>; DIM],
    n: usize,
    seed: u64,
) -> Vec<Viewpoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    distribution::sample(params, bounds, n, &mut rng)
        .into_iter()
        .map(|s| freeze(frozen, s.viewpoint))
        .collect()
}

/// Sample standard deviation of each viewpoint parameter over `n` draws.
pub fn posterior_std(
    params: &DistributionParams,
    bounds: &ViewpointBounds,
    frozen: &[Option<f64>; DIM],
    n: usize,
    seed: u64,
) -> [f64; DIM] {
    std_per_param(&posterior_samples(params, bounds, frozen, n, seed))
}

pub fn uniform_viewpoints(
    bounds: &ViewpointBounds,
    frozen: &[Option<f64>; DIM],
    n: usize,
    seed: u64,
) -> Vec<Viewpoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let mut v = [0.0; DIM];
            for (d, x) in v.iter_mut().enumerate() {
                *x = rng.gen_range(bounds.min()[d]..bounds.max()[d]);
            }
            freeze(frozen, Viewpoint(v))
        })
        .collect()
}

/// Uniform random search with `budget` queries.
pub fn random_search_baseline(target: &Target, budget: usize, seed: u64) -> Result<AttackReport> {
    if budget == 0 {
        return Err(Error::invalid("random search needs a budget of at least 1"));
    }
    let views = uniform_viewpoints(target.bounds, target.frozen, budget, seed);
    Ok(AttackReport {
        method: "random_search".into(),
        scene: target.scene.name.clone(),
        rate_dist: target.misclassified_fraction(&views)?,
        rate_opt: None,
        rate_real_proxy: None,
        param_std: std_per_param(&views),
        queries: budget as u64,
        samples: budget,
    })
}

/// Misclassified fraction over `n` renders sampled from the distribution.
pub fn evaluate_distribution(target: &Target, params: &DistributionParams, n: usize, seed: u64) -> Result<f64> {
    let views = posterior_samples(params, target.bounds, target.frozen, n, seed);
    target.misclassified_fraction(&views)
}

/// Perturbed viewpoints uniform in `v* ± (v_max − v_min)·r%`, clipped.
pub fn fluctuation_viewpoints(
    v_star: &Viewpoint,
    bounds: &ViewpointBounds,
    r_percent: f64,
    n: usize,
    seed: u64,
) -> Result<Vec<Viewpoint>> {
    if !(0.0..=100.0).contains(&r_percent) {
        return Err(Error::invalid(format!(
            "fluctuation percentage {r_percent} outside [0, 100]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| {
            let mut v = v_star.0;
            for (d, x) in v.iter_mut().enumerate() {
                let half = (bounds.max()[d] - bounds.min()[d]) * r_percent / 100.0;
                *x += half * (2.0 * rng.gen::<f64>() - 1.0);
            }
            bounds.clip(v)
        })
        .collect())
}

pub fn fluctuation_test(target: &Target, v_star: &Viewpoint, r_percent: f64, n: usize, seed: u64) -> Result<f64> {
    let views = fluctuation_viewpoints(v_star, target.bounds, r_percent, n, seed)?;
    target.misclassified_fraction(&views)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluctuationCurve {
    pub percentages: Vec<f64>,
    pub rates: Vec<f64>,
}

/// Success rate at `r = 1..=10` percent. Each point uses its own stream
/// derived from `seed` and `r`, so two curves computed with the same seed
/// see the same relative perturbations.
pub fn fluctuation_curve(target: &Target, v_star: &Viewpoint, n: usize, seed: u64) -> Result<FluctuationCurve> {
    let percentages: Vec<f64> = (1..=10).map(f64::from).collect();
    let rates = percentages
        .iter()
        .map(|&r| fluctuation_test(target, v_star, r, n, seeding::derive(seed, &[r as u64])))
        .collect::<Result<Vec<_>>>()?;
    Ok(FluctuationCurve { percentages, rates })
}

/// Averages per-object curves point by point.
pub fn mean_curve(curves: &[FluctuationCurve]) -> Result<FluctuationCurve> {
    let first = curves.first().ok_or_else(|| Error::invalid("no curves to average"))?;
    if curves.iter().any(|c| c.percentages != first.percentages) {
        return Err(Error::invalid("curves sampled at different percentages"));
    }
    let n = curves.len() as f64;
    let rates = (0..first.rates.len())
        .map(|i| curves.iter().map(|c| c.rates[i]).sum::<f64>() / n)
        .collect();
    Ok(FluctuationCurve {
        percentages: first.percentages.clone(),
        rates,
    })
}

/// Fraction of reseeded renders of `v` that are misclassified.
pub fn real_proxy(target: &Target, v: &Viewpoint, renders: usize, seed: u64) -> Result<f64> {
    if renders == 0 {
        return Err(Error::invalid("proxy needs at least one render"));
    }
    let hits = (0..renders)
        .into_par_iter()
        .map(|i| {
            target
                .misclassified_with_seed(v, seeding::derive(seed, &[i as u64]))
                .map(usize::from)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(hits.iter().sum::<usize>() as f64 / renders as f64)
}

/// Whether the classifier gets the natural (mean) pose right. An attack on
/// a scene that is already misclassified there is vacuous.
pub fn natural_pose_correct(target: &Target, init: &DistributionParams) -> Result<bool> {
    let v = freeze(target.frozen, optimal_viewpoint(init, target.bounds));
    Ok(!target.misclassified(&v)?)
}

pub struct AttackOutcome {
    pub report: AttackReport,
    pub params: DistributionParams,
    pub trace: AttackTrace,
    pub v_star: Viewpoint,
}

/// Runs the attack and evaluates the result with [`evaluate_attack`].
pub fn attack_and_evaluate(target: &Target, cfg: &AttackConfig, eval_samples: usize) -> Result<AttackOutcome> {
    if cfg.bounds != *target.bounds || cfg.frozen != *target.frozen {
        return Err(Error::invalid(
            "attack config and target disagree on bounds or frozen parameters",
        ));
    }
    let (params, trace) = run_attack(target.scene, target.classifier, target.render, cfg)?;
    evaluate_attack(target, cfg.seed, params, trace, eval_samples)
}

/// `rate_dist` over `eval_samples` draws, `rate_opt` at `v*`, the proxy,
/// and the posterior spread. Evaluation queries are not counted in
/// `queries`.
pub fn evaluate_attack(
    target: &Target,
    seed: u64,
    params: DistributionParams,
    trace: AttackTrace,
    eval_samples: usize,
) -> Result<AttackOutcome> {
    let eval_seed = seeding::derive(seed, &[0xe7a1]);
    let views = posterior_samples(&params, target.bounds, target.frozen, eval_samples, eval_seed);
    let v_star = freeze(target.frozen, optimal_viewpoint(&params, target.bounds));
    let report = AttackReport {
        method: "viewfool".into(),
        scene: target.scene.name.clone(),
        rate_dist: target.misclassified_fraction(&views)?,
        rate_opt: Some(f64::from(u8::from(target.misclassified(&v_star)?))),
        rate_real_proxy: Some(real_proxy(
            target,
            &v_star,
            PROXY_RENDERS,
            seeding::derive(seed, &[0x9a0c]),
        )?),
        param_std: std_per_param(&views),
        queries: trace.queries,
        samples: eval_samples,
    };
    Ok(AttackOutcome {
        report,
        params,
        trace,
        v_star,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub scene: String,
    pub lambda: f64,
    pub seed: u64,
    pub rate_dist: f64,
    pub rate_opt: f64,
    pub param_std: [f64; DIM],
    pub final_mean_loss: f64,
    pub v_star: [f64; DIM],
}

/// One attack per `(λ, seed)`. Runs with the same seed share their sample
/// noise and evaluation draws, so rows differ only through `λ`.
pub fn lambda_sweep(target: &Target, base: &AttackConfig, lambdas: &[f64], seeds: &[u64]) -> Result<Vec<SweepRow>> {
    let cells: Vec<(f64, u64)> = lambdas
        .iter()
        .flat_map(|&l| seeds.iter().map(move |&s| (l, s)))
        .collect();
    cells
        .par_iter()
        .map(|&(lambda, seed)| {
            let cfg = AttackConfig {
                lambda,
                seed,
                ..base.clone()
            };
            let out = attack_and_evaluate(target, &cfg, EVAL_SAMPLES)?;
            Ok(SweepRow {
                scene: target.scene.name.clone(),
                lambda,
                seed,
                rate_dist: out.report.rate_dist,
                rate_opt: out.report.rate_opt.unwrap_or(0.0),
                param_std: out.report.param_std,
                final_mean_loss: out.trace.iterations.last().map_or(f64::NAN, |r| r.mean_loss),
                v_star: out.v_star.0,
            })
        })
        .collect()
}

/// A fitted distribution and the scene it was fitted on.
pub struct TransferSource<'a> {
    pub scene: &'a SceneSpec,
    pub params: DistributionParams,
}

/// `matrix[i][j]` is the rate of source `i`'s distribution against
/// classifier `j`.
pub fn transferability_matrix(
    sources: &[TransferSource],
    classifiers: &[&dyn ImageClassifier],
    render_cfg: &RenderConfig,
    bounds: &ViewpointBounds,
    frozen: &[Option<f64>; DIM],
    n: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    sources
        .iter()
        .map(|src| {
            classifiers
                .iter()
                .map(|&classifier| {
                    let target = Target {
                        scene: src.scene,
                        classifier,
                        render: render_cfg,
                        bounds,
                        frozen,
                    };
                    evaluate_distribution(&target, &src.params, n, seed)
                })
                .collect()
        })
        .collect()
}

/// One emitted image. The row carries everything needed to render it again.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub file: String,
    pub scene: String,
    pub scene_file: String,
    pub label: usize,
    pub viewpoint: [f64; DIM],
    pub bounds: ViewpointBounds,
    pub render: RenderConfig,
}

pub const MANIFEST_FILE: &str = "manifest.jsonl";

/// Writes `n_per_scene` PNGs per scene drawn from its distribution, the
/// scenes themselves, and a JSON-lines manifest. Scene names must be
/// unique and usable as file names.
pub fn emit_dataset(
    entries: &[(&SceneSpec, DistributionParams)],
    n_per_scene: usize,
    render_cfg: &RenderConfig,
    bounds: &ViewpointBounds,
    seed: u64,
    out_dir: &Path,
) -> Result<Vec<ManifestRow>> {
    render_cfg.validate()?;
    let mut names = BTreeMap::new();
    for (scene, _) in entries {
        if scene.name.is_empty() || scene.name.contains(['/', '\\']) || scene.name.starts_with('.') {
            return Err(Error::invalid(format!(
                "scene name `{}` is not a valid file name",
                scene.name
            )));
        }
        if names.insert(scene.name.as_str(), ()).is_some() {
            return Err(Error::invalid(format!("duplicate scene name `{}`", scene.name)));
        }
    }
    fs::create_dir_all(out_dir.join("scenes")).map_err(|e| Error::io(out_dir, e))?;
    let mut rows = Vec::with_capacity(entries.len() * n_per_scene);
    for (si, (scene, params)) in entries.iter().enumerate() {
        let dir = out_dir.join(&scene.name);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let scene_file = format!("scenes/{}.vfscene", scene.name);
        scene_io::save_scene(scene, out_dir.join(&scene_file))?;
        let sample_seed = seeding::derive(seed, &[si as u64]);
        let views = posterior_samples(params, bounds, &[None; DIM], n_per_scene, sample_seed);
        for (i, v) in views.iter().enumerate() {
            rows.push(ManifestRow {
                file: format!("{}/{:04}.png", scene.name, i),
                scene: scene.name.clone(),
                scene_file: scene_file.clone(),
                label: scene.label,
                viewpoint: v.0,
                bounds: *bounds,
                render: render_cfg.with_seed(seeding::derive(seed, &[si as u64, i as u64])),
            });
        }
    }
    let scene_by_name: BTreeMap<&str, &SceneSpec> = entries.iter().map(|(s, _)| (s.name.as_str(), *s)).collect();
    rows.par_iter()
        .map(|row| {
            let image = render(
                &scene_by_name[row.scene.as_str()].field,
                &Viewpoint(row.viewpoint),
                &row.bounds,
                &row.render,
            )?;
            let path = out_dir.join(&row.file);
            fs::write(&path, image.to_png()?).map_err(|e| Error::io(&path, e))
        })
        .collect::<Result<Vec<_>>>()?;
    write_manifest(&out_dir.join(MANIFEST_FILE), &rows)?;
    Ok(rows)
}

pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for row in rows {
        serde_json::to_writer(&mut w, row)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            rows.push(serde_json::from_str(&line)?);
        }
    }
    Ok(rows)
}

/// Renders a manifest row again, loading its scene relative to `root`.
pub fn rerender_row(root: &Path, row: &ManifestRow) -> Result<Vec<u8>> {
    let scene = scene_io::load_scene(root.join(&row.scene_file))?;
    render(&scene.field, &Viewpoint(row.viewpoint), &row.bounds, &row.render)?.to_png()
}

fn std_headers() -> impl Iterator<Item = String> {
    PARAM_NAMES.iter().map(|n| format!("std_{n}"))
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_reports_csv(path: &Path, reports: &[AttackReport]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = ["method", "scene", "rate_dist", "rate_opt", "rate_real_proxy"]
        .map(String::from)
        .to_vec();
    header.extend(std_headers());
    header.extend(["queries", "samples"].map(String::from));
    w.write_record(&header)?;
    for r in reports {
        let mut rec = vec![
            r.method.clone(),
            r.scene.clone(),
            r.rate_dist.to_string(),
            fmt_opt(r.rate_opt),
            fmt_opt(r.rate_real_proxy),
        ];
        rec.extend(r.param_std.iter().map(|s| s.to_string()));
        rec.extend([r.queries.to_string(), r.samples.to_string()]);
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = ["scene", "lambda", "seed", "rate_dist", "rate_opt"]
        .map(String::from)
        .to_vec();
    header.extend(std_headers());
    header.push("final_mean_loss".into());
    header.extend(PARAM_NAMES.iter().map(|n| format!("opt_{n}")));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.scene.clone(),
            r.lambda.to_string(),
            r.seed.to_string(),
            r.rate_dist.to_string(),
            r.rate_opt.to_string(),
        ];
        rec.extend(r.param_std.iter().map(|s| s.to_string()));
        rec.push(r.final_mean_loss.to_string());
        rec.extend(r.v_star.iter().map(|s| s.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
