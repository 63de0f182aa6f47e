//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on failure.
mod common;

use std::collections::BTreeMap;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use viewfool::distribution::{draw_epsilon, entropy, sample, DistributionParams};
use viewfool::estimator::{entropy_gradients, score_gradients_with_error, EvalBatch, EvalEntry};
use viewfool::field::{build_primitive_scene, PrimitiveKind, SceneSpec, ShapeParams};
use viewfool::geometry::{rotation_matrix, Viewpoint, ViewpointBounds, DIM, PARAM_NAMES};
use viewfool::harness::{
    emit_dataset, fluctuation_curve, lambda_sweep, random_search_baseline, read_manifest, rerender_row, SweepRow,
    MANIFEST_FILE,
};
use viewfool::optimizer::AttackConfig;
use viewfool::render::{composite_weights, sample_quadrature, RenderConfig};
use viewfool::seeding;

// gradients
const GRAD_K: usize = 100_000;
const GRAD_ORACLE_DRAWS: usize = 1_000_000;
const GRAD_SE_MULTIPLE: f64 = 3.0;
const ENTROPY_REL_TOL: f64 = 1e-3;
const GRAD_TIME: Duration = Duration::from_secs(60);
// density
const DENSITY_TOL: f64 = 1e-4;
const CHI_SQUARE_SAMPLES: usize = 100_000;
const CHI_SQUARE_MIN_P: f64 = 1e-3;
// renderer
const SLAB_TOL: f64 = 1e-3;
const HALVING_BAND: (f64, f64) = (0.4, 0.6);
const RANDOM_RAYS: usize = 10_000;
const WEIGHT_SUM_SLACK: f64 = 1e-9;
// pose
const ROTATIONS: usize = 10_000;
const ORTHO_TOL: f64 = 1e-9;
const QUATERNION_TOL: f64 = 1e-12;
// toy scenario trends
const SEEDS: u64 = 10;
const LAMBDAS: [f64; 4] = [0.0, 0.01, 0.1, 1.0];
const RANDOM_BUDGET: usize = 5000;
const MIN_RATE_OPT: f64 = 0.9;
const MIN_GAP: f64 = 0.30;
const GRID_PER_AXIS: usize = 6;
const EFFICACY_TIME: Duration = Duration::from_secs(600);
const MAX_INVERSIONS: usize = 1;
const FLUCTUATION_SAMPLES: usize = 20;
const MIN_DOMINATING_SEEDS: usize = 8;
// dataset
const DATASET_PER_SCENE: usize = 100;
const DATASET_TIME: Duration = Duration::from_secs(300);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let bounds = ViewpointBounds::paper_full();
    let params = DistributionParams::new([0.3, -0.2, 0.1, 0.5, -0.4, 0.25], [0.5, 0.3, 0.8, 0.4, 0.6, 0.2]).unwrap();
    let v0 = [30.0, -5.0, 100.0, 0.2, -0.1, 0.3];

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let batch = EvalBatch::new(
        sample(&params, &bounds, GRAD_K, &mut rng)
            .into_iter()
            .map(|s| EvalEntry {
                epsilon: s.epsilon,
                loss: common::quadratic_loss(&s.viewpoint, &v0),
                viewpoint: s.viewpoint,
            })
            .collect(),
    );
    let est = score_gradients_with_error(&batch, &params, true).unwrap();
    let oracle = common::natural_gradient_fd(&params, &bounds, &v0, GRAD_ORACLE_DRAWS, 77, 1e-4);
    let mut worst_z: f64 = 0.0;
    for d in 0..DIM {
        worst_z = worst_z.max((est.mean.grad_mu[d] - oracle.grad_mu[d]).abs() / est.std_err.grad_mu[d]);
        worst_z = worst_z.max((est.mean.grad_sigma[d] - oracle.grad_sigma[d]).abs() / est.std_err.grad_sigma[d]);
    }

    let h = 1e-5;
    let eps: Vec<_> = {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        (0..GRAD_K).map(|_| draw_epsilon(&mut rng)).collect()
    };
    let g = entropy_gradients(&params, &eps).unwrap();
    let h_at = |p: &DistributionParams| entropy(p, &bounds, GRAD_K, &mut ChaCha8Rng::seed_from_u64(31));
    let mut worst_rel: f64 = 0.0;
    for d in 0..DIM {
        for sigma_dim in [false, true] {
            let (mut plus, mut minus) = (params, params);
            let analytic = if sigma_dim {
                plus.sigma[d] += h;
                minus.sigma[d] -= h;
                g.grad_sigma[d]
            } else {
                plus.mu[d] += h;
                minus.mu[d] -= h;
                g.grad_mu[d]
            };
            let fd = (h_at(&plus) - h_at(&minus)) / (2.0 * h);
            worst_rel = worst_rel.max((fd - analytic).abs() / analytic.abs());
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst_z <= GRAD_SE_MULTIPLE && worst_rel <= ENTROPY_REL_TOL && elapsed < GRAD_TIME,
        format!("max |z| {worst_z:.2} (<= {GRAD_SE_MULTIPLE}), entropy max rel err {worst_rel:.1e} (<= {ENTROPY_REL_TOL:.0e}), {elapsed:.1?}"),
    )
}

fn density_correctness() -> Outcome {
    let bounds = ViewpointBounds::paper_full();
    let params = DistributionParams::new([0.3, -0.2, 0.1, 0.5, -0.4, 0.0], [0.5, 0.3, 0.8, 0.4, 0.6, 1.2]).unwrap();
    let total: f64 = (0..DIM)
        .map(|d| {
            common::integrate_density_1d(
                params.mu[d],
                params.sigma[d],
                bounds.scale()[d],
                bounds.offset()[d],
                200_000,
            )
        })
        .product();
    let samples = sample(&params, &bounds, CHI_SQUARE_SAMPLES, &mut ChaCha8Rng::seed_from_u64(12));
    let min_p = (0..DIM)
        .map(|d| {
            let values: Vec<f64> = samples.iter().map(|s| s.viewpoint.0[d]).collect();
            common::chi_square_p(
                &values,
                params.mu[d],
                params.sigma[d],
                bounds.scale()[d],
                bounds.offset()[d],
                60,
            )
        })
        .fold(1.0, f64::min);
    outcome(
        (total - 1.0).abs() <= DENSITY_TOL && min_p > CHI_SQUARE_MIN_P,
        format!("integral {total:.7}, min chi-square p {min_p:.3}"),
    )
}

fn renderer_correctness() -> Outcome {
    let err_1024 = common::slab_transmittance_error(1.0, 1024);
    let errors: Vec<f64> = [32, 64, 128, 256]
        .iter()
        .map(|&n| common::slab_transmittance_error(1.0, n))
        .collect();
    let ratios: Vec<f64> = errors.windows(2).map(|w| w[1] / w[0]).collect();
    let first_order = ratios.iter().all(|r| (HALVING_BAND.0..=HALVING_BAND.1).contains(r));

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let field = common::random_field(&mut rng, 8);
    let (mut min_w, mut max_sum) = (f64::INFINITY, 0.0f64);
    for _ in 0..RANDOM_RAYS {
        let ray = common::random_ray(&mut rng);
        let n = rng.gen_range(2..128);
        let t = sample_quadrature(ray.t_near, ray.t_far, n, true, &mut rng);
        let (w, _) = composite_weights(&field, &ray, &t);
        min_w = w.iter().copied().fold(min_w, f64::min);
        max_sum = max_sum.max(w.iter().sum());
    }
    outcome(
        err_1024 <= SLAB_TOL && first_order && min_w >= 0.0 && max_sum <= 1.0 + WEIGHT_SUM_SLACK,
        format!(
            "slab error {err_1024:.1e} at N=1024, error ratios {:?}, min w {min_w:.1e}, max sum {max_sum:.12}",
            ratios.iter().map(|r| (r * 1000.0).round() / 1000.0).collect::<Vec<_>>()
        ),
    )
}

fn pose_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut ortho, mut det, mut quat) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..ROTATIONS {
        let (psi, theta, phi) = (
            rng.gen_range(-180.0..180.0),
            rng.gen_range(-90.0..90.0),
            rng.gen_range(-180.0..180.0),
        );
        let r = rotation_matrix(psi, theta, phi).unwrap();
        ortho = ortho.max(r.orthonormality_error());
        det = det.max((r.determinant() - 1.0).abs());
        let q = common::quaternion_rotation(psi, theta, phi);
        for i in 0..3 {
            for j in 0..3 {
                quat = quat.max((r.0[i][j] - q[i][j]).abs());
            }
        }
    }
    outcome(
        ortho <= ORTHO_TOL && det <= ORTHO_TOL && quat <= QUATERNION_TOL,
        format!("max |RᵀR − I| {ortho:.1e}, max |det − 1| {det:.1e}, max quaternion gap {quat:.1e}"),
    )
}

struct ToyRuns {
    rows: Vec<SweepRow>,
}

impl ToyRuns {
    fn at(&self, lambda: f64) -> Vec<&SweepRow> {
        self.rows.iter().filter(|r| r.lambda == lambda).collect()
    }

    fn row(&self, lambda: f64, seed: u64) -> &SweepRow {
        self.rows.iter().find(|r| r.lambda == lambda && r.seed == seed).unwrap()
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn attack_efficacy(runs: &mut Option<ToyRuns>) -> Outcome {
    let (scenario, classifier) = common::wedge_fixture();
    let target = common::wedge_target(&scenario, &classifier);
    let seeds: Vec<u64> = (0..SEEDS).collect();
    let base = AttackConfig::default();
    let start = Instant::now();
    let rows = lambda_sweep(&target, &base, &[0.01], &seeds).unwrap();
    let random = random_search_baseline(&target, RANDOM_BUDGET, seeding::derive(0, &[0x5a])).unwrap();
    let elapsed = start.elapsed();
    let q = common::grid_volume_fraction(&target, GRID_PER_AXIS);
    let three_sigma = 3.0 * (q * (1.0 - q) / RANDOM_BUDGET as f64).sqrt();
    let rate_opt = mean(rows.iter().map(|r| r.rate_opt));
    let budget = base.k * base.iterations;
    *runs = Some(ToyRuns { rows });
    outcome(
        budget == RANDOM_BUDGET
            && rate_opt >= MIN_RATE_OPT
            && random.rate_dist < q + three_sigma
            && random.rate_dist <= rate_opt - MIN_GAP
            && elapsed < EFFICACY_TIME,
        format!(
            "viewfool rate_opt {rate_opt:.2} over {SEEDS} seeds, random rate_dist {:.4} vs volume fraction {q:.4} + {three_sigma:.4}, {budget} queries each, {elapsed:.0?}",
            random.rate_dist
        ),
    )
}

fn lambda_ablation(runs: &mut Option<ToyRuns>) -> Outcome {
    let (scenario, classifier) = common::wedge_fixture();
    let target = common::wedge_target(&scenario, &classifier);
    let seeds: Vec<u64> = (0..SEEDS).collect();
    let runs = runs.as_mut().expect("efficacy runs");
    let others: Vec<f64> = LAMBDAS.iter().copied().filter(|&l| l != 0.01).collect();
    runs.rows
        .extend(lambda_sweep(&target, &AttackConfig::default(), &others, &seeds).unwrap());

    let stds: Vec<[f64; DIM]> = LAMBDAS
        .iter()
        .map(|&l| {
            let rows = runs.at(l);
            let mut s = [0.0; DIM];
            for d in 0..DIM {
                s[d] = mean(rows.iter().map(|r| r.param_std[d]));
            }
            s
        })
        .collect();
    let mut inversions = Vec::new();
    for d in 0..DIM {
        for i in 1..LAMBDAS.len() {
            if stds[i][d] < stds[i - 1][d] {
                inversions.push(format!("{} at λ={}", PARAM_NAMES[d], LAMBDAS[i]));
            }
        }
    }
    let rate = |l: f64| mean(runs.at(l).iter().map(|r| r.rate_dist));
    let (r001, r1) = (rate(0.01), rate(1.0));
    let table: Vec<String> = (0..DIM)
        .map(|d| {
            format!(
                "{} {}",
                PARAM_NAMES[d],
                stds.iter()
                    .map(|s| format!("{:.3}", s[d]))
                    .collect::<Vec<_>>()
                    .join("→")
            )
        })
        .collect();
    outcome(
        inversions.len() <= MAX_INVERSIONS && r1 <= r001,
        format!(
            "std {}; inversions {inversions:?}; rate_dist λ=0.01 {r001:.3}, λ=1 {r1:.3}",
            table.join(", ")
        ),
    )
}

fn fluctuation_resistance(runs: &Option<ToyRuns>) -> Outcome {
    let (scenario, classifier) = common::wedge_fixture();
    let target = common::wedge_target(&scenario, &classifier);
    let runs = runs.as_ref().expect("sweep runs");
    let mut dominating = 0;
    for s in 0..SEEDS {
        let curve = |l: f64| {
            fluctuation_curve(
                &target,
                &Viewpoint(runs.row(l, s).v_star),
                FLUCTUATION_SAMPLES,
                1000 + s,
            )
            .unwrap()
        };
        let (c0, c1) = (curve(0.0), curve(0.01));
        let ok = c0
            .percentages
            .iter()
            .enumerate()
            .filter(|(_, &r)| (5.0..=10.0).contains(&r))
            .all(|(i, _)| c1.rates[i] >= c0.rates[i]);
        dominating += usize::from(ok);
    }
    outcome(
        dominating >= MIN_DOMINATING_SEEDS,
        format!("λ=0.01 curve ≥ λ=0 curve at r=5..10% in {dominating}/{SEEDS} seeds"),
    )
}

fn read_tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(
                    path.strip_prefix(root).unwrap().to_path_buf(),
                    std::fs::read(&path).unwrap(),
                );
            }
        }
    }
    out
}

fn determinism() -> Outcome {
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/wedge.toml");
    let work = tempfile::tempdir().unwrap();
    let run = |name: &str, jobs: &str| -> BTreeMap<PathBuf, Vec<u8>> {
        let out = work.path().join(name);
        let invocations: [&[&str]; 3] = [
            &["attack"],
            &["bench", "--experiment", "emit-dataset", "--iters", "20"],
            &["render", "--viewpoint", "-40,10,70,0.2,-0.3,0.1", "--output"],
        ];
        for args in invocations {
            let mut cmd = Command::new(env!("CARGO_BIN_EXE_viewfool"));
            cmd.arg("--config")
                .arg(&config)
                .args(["--jobs", jobs, "--seed", "11", "--out-dir"])
                .arg(&out)
                .args(args);
            if args[0] == "render" {
                cmd.arg(out.join("render.png"));
            }
            let status = cmd.output().unwrap();
            assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        }
        read_tree(&out)
    };
    let a = run("a", "1");
    let b = run("b", "1");
    let c = run("c", "8");
    let d = run("d", "8");
    let same = a == b && a == c && a == d;
    outcome(
        same && !a.is_empty(),
        format!(
            "{} files byte-identical across two runs each at --jobs 1 and --jobs 8: {same}",
            a.len()
        ),
    )
}

fn dataset_emission() -> Outcome {
    let scenes: Vec<SceneSpec> = PrimitiveKind::ALL
        .iter()
        .enumerate()
        .map(|(i, &kind)| SceneSpec {
            field: build_primitive_scene(kind, [24; 3], &ShapeParams::default()).unwrap(),
            label: i,
            name: kind.as_str().into(),
        })
        .collect();
    let entries: Vec<_> = scenes
        .iter()
        .enumerate()
        .map(|(i, s)| {
            (
                s,
                DistributionParams::new([0.2 * i as f64 - 0.3; DIM], [0.5; DIM]).unwrap(),
            )
        })
        .collect();
    let render_cfg = RenderConfig {
        width: 64,
        height: 64,
        samples_per_ray: 32,
        ..RenderConfig::default()
    };
    let bounds = ViewpointBounds::paper_full();
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let rows = emit_dataset(&entries, DATASET_PER_SCENE, &render_cfg, &bounds, 9, dir.path()).unwrap();
    let elapsed = start.elapsed();
    let manifest = read_manifest(&dir.path().join(MANIFEST_FILE)).unwrap();
    let in_bounds = manifest.iter().all(|r| bounds.contains(&r.viewpoint));
    let reproducible = manifest
        .iter()
        .all(|r| rerender_row(dir.path(), r).unwrap() == std::fs::read(dir.path().join(&r.file)).unwrap());
    let expected = scenes.len() * DATASET_PER_SCENE;
    outcome(
        rows.len() == expected && manifest == rows && in_bounds && reproducible && elapsed < DATASET_TIME,
        format!(
            "{} images ({expected} expected), in bounds {in_bounds}, re-rendered identically {reproducible}, {elapsed:.1?}",
            manifest.len()
        ),
    )
}

fn main() {
    let mut toy: Option<ToyRuns> = None;
    let mut failed = 0;
    let mut report = |n: usize, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let result = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        if !result.pass {
            failed += 1;
        }
        println!(
            "criterion {n} {name}: {} ({})",
            if result.pass { "PASS" } else { "FAIL" },
            result.detail
        );
    };
    report(1, "gradient correctness", &mut gradient_correctness);
    report(2, "density correctness", &mut density_correctness);
    report(3, "renderer correctness", &mut renderer_correctness);
    report(4, "pose correctness", &mut pose_correctness);
    report(5, "attack efficacy", &mut || attack_efficacy(&mut toy));
    report(6, "lambda ablation", &mut || lambda_ablation(&mut toy));
    report(7, "fluctuation resistance", &mut || fluctuation_resistance(&toy));
    report(8, "determinism", &mut determinism);
    report(9, "dataset emission", &mut dataset_emission);
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}
