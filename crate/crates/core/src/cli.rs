//! Command-line front end.
//!
//! Exit codes: 0 on success, 2 for usage and configuration errors
//! (including missing input files and out-of-bounds viewpoints), 3 for
//! failures while running.

use std::ffi::OsString;
use std::fs;
use std::io;
use std::path::PathBuf;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use serde::Serialize;

use crate::classifier::ImageClassifier;
use crate::config::{keys_help, Experiment, Preset, RunConfig};
use crate::error::{Error, Result};
use crate::field::SceneSpec;
use crate::geometry::{Viewpoint, DIM};
use crate::harness::{self, AttackReport, FluctuationCurve, Target, TransferSource};
use crate::optimizer::{Attack, AttackConfig, Checkpoint, RenderedObjective};
use crate::oracle;
use crate::render::{render, RenderConfig};
use crate::seeding;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "viewfool",
    version,
    about = "Search for viewpoint distributions that fool an image classifier",
    long_about = "Search for viewpoint distributions that fool an image classifier.\n\n\
Every flag can also be set through an environment variable named VIEWFOOL_<FLAG>, \
for example VIEWFOOL_SEED=7 or VIEWFOOL_OUT_DIR=out. Flags override the environment, \
which overrides the config file."
)]
pub struct Cli {
    /// TOML run configuration
    #[arg(long, global = true, env = "VIEWFOOL_CONFIG")]
    pub config: Option<PathBuf>,
    /// Master seed (overrides `seed`)
    #[arg(long, global = true, env = "VIEWFOOL_SEED")]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on this value
    #[arg(long, global = true, env = "VIEWFOOL_JOBS")]
    pub jobs: Option<usize>,
    /// Directory for reports, traces, checkpoints and images
    #[arg(long, global = true, env = "VIEWFOOL_OUT_DIR", default_value = "viewfool-out")]
    pub out_dir: PathBuf,
    /// Bounds preset: paper-full, translation-only, rotation-only, psi-only,
    /// theta-only, phi-only, rotation-quarter, rotation-half, 2d-transform
    #[arg(long, global = true, env = "VIEWFOOL_PRESET")]
    pub preset: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit an adversarial viewpoint distribution for every configured scene
    Attack(AttackArgs),
    /// Run one of the benchmark experiments
    Bench(BenchArgs),
    /// Render one viewpoint of a scene
    Render(RenderArgs),
    /// Serve the configured classifier over the oracle protocol on stdin/stdout
    #[command(hide = true)]
    Oracle,
}

#[derive(Debug, Args, Default)]
pub struct SearchArgs {
    /// Entropy weight (overrides `attack.lambda`)
    #[arg(long, env = "VIEWFOOL_LAMBDA")]
    pub lambda: Option<f64>,
    /// Samples per iteration (overrides `attack.k`)
    #[arg(long, env = "VIEWFOOL_K")]
    pub k: Option<usize>,
    /// Iterations (overrides `attack.iterations`)
    #[arg(long, env = "VIEWFOOL_ITERS")]
    pub iters: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AttackArgs {
    #[command(flatten)]
    pub search: SearchArgs,
    /// Resume from a checkpoint (single-scene configs only)
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Write a checkpoint every N iterations (overrides `attack.checkpoint_every`)
    #[arg(long, env = "VIEWFOOL_CHECKPOINT_EVERY")]
    pub checkpoint_every: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub search: SearchArgs,
    /// lambda-sweep, fluctuation, transferability, random-vs-viewfool or emit-dataset
    /// (overrides `bench.experiment`)
    #[arg(long, env = "VIEWFOOL_EXPERIMENT")]
    pub experiment: Option<String>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Six comma-separated values: psi,theta,phi,dx,dy,dz
    #[arg(long, allow_hyphen_values = true)]
    pub viewpoint: String,
    /// Scene name (default: the first configured scene)
    #[arg(long)]
    pub scene: Option<String>,
    /// Output image; `.ppm` writes PPM, anything else PNG
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// Parses arguments and runs; returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let command = Cli::command().after_long_help(keys_help());
    let matches = match command.try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return EXIT_CONFIG;
        }
    };
    let setup = match Setup::new(&cli) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let jobs = cli
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker threads: {e}");
            return EXIT_RUNTIME;
        }
    };
    match pool.install(|| setup.execute()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

enum Plan {
    Attack {
        resume: Option<Box<Checkpoint>>,
        checkpoint_every: usize,
    },
    Bench(Experiment),
    Render {
        scene: usize,
        viewpoint: Viewpoint,
        output: PathBuf,
    },
    Oracle,
}

/// Everything resolved before any work starts; failures here are
/// configuration errors.
struct Setup {
    run: RunConfig,
    scenes: Vec<SceneSpec>,
    classifier: Option<Box<dyn ImageClassifier>>,
    render: RenderConfig,
    attack: AttackConfig,
    out_dir: PathBuf,
    plan: Plan,
}

fn apply_search(run: &mut RunConfig, s: &SearchArgs) {
    if let Some(l) = s.lambda {
        run.attack.lambda = l;
    }
    if let Some(k) = s.k {
        run.attack.k = k;
    }
    if let Some(i) = s.iters {
        run.attack.iterations = i;
    }
}

pub fn parse_viewpoint(text: &str) -> Result<[f64; DIM]> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != DIM {
        return Err(Error::Config(format!(
            "--viewpoint needs {DIM} comma-separated numbers, got {}",
            parts.len()
        )));
    }
    let mut v = [0.0f64; DIM];
    for (x, p) in v.iter_mut().zip(&parts) {
        *x = p
            .parse()
            .map_err(|_| Error::Config(format!("--viewpoint: `{p}` is not a number")))?;
        if !x.is_finite() {
            return Err(Error::Config(format!("--viewpoint: `{p}` is not finite")));
        }
    }
    Ok(v)
}

impl Setup {
    fn new(cli: &Cli) -> Result<Self> {
        let mut run = match &cli.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = cli.seed {
            run.seed = seed;
        }
        if let Some(p) = &cli.preset {
            run.preset = p.parse::<Preset>()?;
        }
        match &cli.command {
            Command::Attack(a) => {
                apply_search(&mut run, &a.search);
                if let Some(n) = a.checkpoint_every {
                    run.attack.checkpoint_every = n;
                }
            }
            Command::Bench(b) => {
                apply_search(&mut run, &b.search);
                if let Some(e) = &b.experiment {
                    run.bench.experiment = Some(e.parse()?);
                }
            }
            _ => {}
        }
        let scenes = run.resolve_scenes()?;
        let render = run.render_config()?;
        let attack = run.attack_config()?;
        let plan = match &cli.command {
            Command::Attack(a) => {
                let resume = match &a.resume {
                    Some(path) => {
                        if scenes.len() != 1 {
                            return Err(Error::Config("--resume needs a config with exactly one scene".into()));
                        }
                        Some(Box::new(Checkpoint::load(path).map_err(|e| {
                            Error::Config(format!("checkpoint {}: {e}", path.display()))
                        })?))
                    }
                    None => None,
                };
                Plan::Attack {
                    resume,
                    checkpoint_every: run.attack.checkpoint_every,
                }
            }
            Command::Bench(_) => Plan::Bench(
                run.bench
                    .experiment
                    .ok_or_else(|| Error::Config("bench needs --experiment or `bench.experiment`".into()))?,
            ),
            Command::Render(r) => {
                let values = parse_viewpoint(&r.viewpoint)?;
                attack.bounds.check(&values).map_err(|e| Error::Config(e.to_string()))?;
                let scene = match &r.scene {
                    Some(name) => scenes
                        .iter()
                        .position(|s| &s.name == name)
                        .ok_or_else(|| Error::Config(format!("no scene named `{name}`")))?,
                    None => 0,
                };
                Plan::Render {
                    scene,
                    viewpoint: Viewpoint(values),
                    output: r.output.clone().unwrap_or_else(|| cli.out_dir.join("render.png")),
                }
            }
            Command::Oracle => Plan::Oracle,
        };
        let classifier = match plan {
            Plan::Render { .. } => None,
            _ => Some(run.resolve_classifier(&scenes, &render)?),
        };
        if let Plan::Bench(Experiment::Transferability) = plan {
            for p in &run.bench.transfer_classifiers {
                crate::config::load_classifier_spec(p)?;
            }
        }
        Ok(Setup {
            run,
            scenes,
            classifier,
            render,
            attack,
            out_dir: cli.out_dir.clone(),
            plan,
        })
    }

    fn classifier(&self) -> &dyn ImageClassifier {
        self.classifier.as_deref().expect("classifier resolved during setup")
    }

    fn target<'a>(&'a self, scene: &'a SceneSpec, classifier: &'a dyn ImageClassifier) -> Target<'a> {
        Target {
            scene,
            classifier,
            render: &self.render,
            bounds: &self.attack.bounds,
            frozen: &self.attack.frozen,
        }
    }

    fn out(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn prepare_out_dir(&self) -> Result<()> {
        fs::create_dir_all(&self.out_dir).map_err(|e| Error::io(&self.out_dir, e))
    }

    fn write_config_echo(&self) -> Result<()> {
        #[derive(Serialize)]
        struct Echo<'a> {
            run: &'a RunConfig,
            attack: &'a AttackConfig,
            render: &'a RenderConfig,
            scenes: Vec<(&'a str, usize)>,
        }
        harness::write_json(
            &self.out("config.json"),
            &Echo {
                run: &self.run,
                attack: &self.attack,
                render: &self.render,
                scenes: self.scenes.iter().map(|s| (s.name.as_str(), s.label)).collect(),
            },
        )
    }

    fn warn_if_vacuous(&self, target: &Target) -> Result<()> {
        if !harness::natural_pose_correct(target, &self.attack.init)? {
            eprintln!(
                "warning: scene `{}` is already misclassified at the natural pose; the attack is vacuous",
                target.scene.name
            );
        }
        Ok(())
    }

    fn execute(&self) -> Result<()> {
        match &self.plan {
            Plan::Attack {
                resume,
                checkpoint_every,
            } => self.run_attack(resume.as_deref().cloned(), *checkpoint_every),
            Plan::Bench(e) => self.run_bench(*e),
            Plan::Render {
                scene,
                viewpoint,
                output,
            } => {
                let image = render(&self.scenes[*scene].field, viewpoint, &self.attack.bounds, &self.render)?;
                if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
                    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                }
                image.save(output)?;
                println!("wrote {}", output.display());
                Ok(())
            }
            Plan::Oracle => oracle::serve(self.classifier(), io::stdin().lock(), io::stdout().lock()),
        }
    }

    fn run_attack(&self, resume: Option<Checkpoint>, checkpoint_every: usize) -> Result<()> {
        self.prepare_out_dir()?;
        self.write_config_echo()?;
        let classifier = self.classifier();
        let mut reports = Vec::new();
        for scene in &self.scenes {
            let target = self.target(scene, classifier);
            self.warn_if_vacuous(&target)?;
            let objective = RenderedObjective {
                scene,
                classifier,
                render_cfg: &self.render,
                bounds: &self.attack.bounds,
            };
            let mut attack = match &resume {
                Some(c) => Attack::resume(&objective, &self.attack, c.clone())?,
                None => Attack::new(&objective, &self.attack)?,
            };
            let ckpt_path = self.out(&format!("checkpoint_{}.json", scene.name));
            while !attack.is_done() {
                attack.step()?;
                if checkpoint_every > 0 && attack.iteration() % checkpoint_every == 0 {
                    attack.checkpoint().save(&ckpt_path)?;
                }
            }
            attack.checkpoint().save(&ckpt_path)?;
            let (params, trace) = attack.finish();
            let outcome =
                harness::evaluate_attack(&target, self.attack.seed, params, trace, self.run.bench.eval_samples)?;
            harness::write_json(&self.out(&format!("trace_{}.json", scene.name)), &outcome.trace)?;
            render(&scene.field, &outcome.v_star, &self.attack.bounds, &self.render)?
                .save(self.out(&format!("vstar_{}.png", scene.name)))?;
            let r = &outcome.report;
            println!(
                "{}: rate_dist {:.3}  rate_opt {}  queries {}  v* {:?}",
                scene.name,
                r.rate_dist,
                r.rate_opt.unwrap_or(0.0),
                r.queries,
                outcome.v_star.0
            );
            reports.push(outcome.report);
        }
        let mut all = reports.clone();
        all.push(harness::aggregate("viewfool", &reports)?);
        harness::write_reports_csv(&self.out("report.csv"), &all)?;
        harness::write_json(&self.out("report.json"), &all)
    }

    fn seeded(&self, seed: u64, lambda: f64) -> AttackConfig {
        AttackConfig {
            seed,
            lambda,
            ..self.attack.clone()
        }
    }

    fn run_bench(&self, experiment: Experiment) -> Result<()> {
        self.prepare_out_dir()?;
        self.write_config_echo()?;
        let classifier = self.classifier();
        let bench = &self.run.bench;
        match experiment {
            Experiment::LambdaSweep => {
                let mut rows = Vec::new();
                for scene in &self.scenes {
                    let target = self.target(scene, classifier);
                    self.warn_if_vacuous(&target)?;
                    rows.extend(harness::lambda_sweep(
                        &target,
                        &self.attack,
                        &bench.lambdas,
                        &bench.seeds,
                    )?);
                }
                harness::write_sweep_csv(&self.out("sweep.csv"), &rows)?;
                harness::write_json(&self.out("sweep.json"), &rows)?;
                println!("wrote {} sweep rows", rows.len());
            }
            Experiment::Fluctuation => {
                #[derive(Serialize)]
                struct Row {
                    lambda: f64,
                    seed: u64,
                    curve: FluctuationCurve,
                    per_scene: Vec<(String, FluctuationCurve)>,
                }
                let mut rows = Vec::new();
                for &lambda in &bench.fluctuation_lambdas {
                    for &seed in &bench.seeds {
                        let cfg = self.seeded(seed, lambda);
                        let mut per_scene = Vec::new();
                        for scene in &self.scenes {
                            let target = self.target(scene, classifier);
                            let out = harness::attack_and_evaluate(&target, &cfg, bench.eval_samples)?;
                            let curve = harness::fluctuation_curve(
                                &target,
                                &out.v_star,
                                bench.fluctuation_samples,
                                seeding::derive(seed, &[0xf1]),
                            )?;
                            per_scene.push((scene.name.clone(), curve));
                        }
                        let curves: Vec<FluctuationCurve> = per_scene.iter().map(|(_, c)| c.clone()).collect();
                        rows.push(Row {
                            lambda,
                            seed,
                            curve: harness::mean_curve(&curves)?,
                            per_scene,
                        });
                    }
                }
                let mut w = csv::Writer::from_path(self.out("fluctuation.csv"))?;
                w.write_record(["lambda", "seed", "r_percent", "rate"])?;
                for row in &rows {
                    for (r, rate) in row.curve.percentages.iter().zip(&row.curve.rates) {
                        w.write_record([
                            row.lambda.to_string(),
                            row.seed.to_string(),
                            r.to_string(),
                            rate.to_string(),
                        ])?;
                    }
                }
                w.flush().map_err(|e| Error::io(self.out("fluctuation.csv"), e))?;
                harness::write_json(&self.out("fluctuation.json"), &rows)?;
                println!("wrote {} fluctuation curves", rows.len());
            }
            Experiment::Transferability => {
                let mut names = vec!["target".to_string()];
                let mut extra: Vec<Box<dyn ImageClassifier>> = Vec::new();
                for p in &bench.transfer_classifiers {
                    let spec = crate::config::load_classifier_spec(p)?;
                    extra.push(spec.build()?);
                    names.push(
                        p.file_stem()
                            .map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned()),
                    );
                }
                let mut columns: Vec<&dyn ImageClassifier> = vec![classifier];
                columns.extend(extra.iter().map(|c| c.as_ref()));
                for (name, c) in names.iter().zip(&columns) {
                    if let Some(s) = self.scenes.iter().find(|s| s.label >= c.class_count()) {
                        return Err(Error::invalid(format!(
                            "classifier `{name}` has {} classes but scene `{}` has label {}",
                            c.class_count(),
                            s.name,
                            s.label
                        )));
                    }
                }
                let mut sources = Vec::new();
                for scene in &self.scenes {
                    let out = harness::attack_and_evaluate(
                        &self.target(scene, classifier),
                        &self.attack,
                        bench.eval_samples,
                    )?;
                    sources.push(TransferSource {
                        scene,
                        params: out.params,
                    });
                }
                let matrix = harness::transferability_matrix(
                    &sources,
                    &columns,
                    &self.render,
                    &self.attack.bounds,
                    &self.attack.frozen,
                    bench.eval_samples,
                    seeding::derive(self.attack.seed, &[0x7a]),
                )?;
                let mut w = csv::Writer::from_path(self.out("transfer.csv"))?;
                let mut header = vec!["source".to_string()];
                header.extend(names.iter().cloned());
                w.write_record(&header)?;
                for (scene, row) in self.scenes.iter().zip(&matrix) {
                    let mut rec = vec![scene.name.clone()];
                    rec.extend(row.iter().map(|x| x.to_string()));
                    w.write_record(&rec)?;
                }
                w.flush().map_err(|e| Error::io(self.out("transfer.csv"), e))?;
                harness::write_json(&self.out("transfer.json"), &(names, &matrix))?;
                println!("wrote a {}x{} transfer matrix", matrix.len(), columns.len());
            }
            Experiment::RandomVsViewfool => {
                let budget = bench.budget.unwrap_or(self.attack.k * self.attack.iterations);
                let mut random = Vec::new();
                let mut viewfool = Vec::new();
                for scene in &self.scenes {
                    let target = self.target(scene, classifier);
                    self.warn_if_vacuous(&target)?;
                    random.push(harness::random_search_baseline(
                        &target,
                        budget,
                        seeding::derive(self.attack.seed, &[0x5a]),
                    )?);
                    viewfool.push(harness::attack_and_evaluate(&target, &self.attack, bench.eval_samples)?.report);
                }
                let rows = vec![
                    harness::aggregate("random_search", &random)?,
                    harness::aggregate("viewfool", &viewfool)?,
                ];
                harness::write_reports_csv(&self.out("comparison.csv"), &rows)?;
                #[derive(Serialize)]
                struct Comparison<'a> {
                    summary: &'a [AttackReport],
                    random_search: &'a [AttackReport],
                    viewfool: &'a [AttackReport],
                }
                harness::write_json(
                    &self.out("comparison.json"),
                    &Comparison {
                        summary: &rows,
                        random_search: &random,
                        viewfool: &viewfool,
                    },
                )?;
                for r in &rows {
                    println!("{}: rate_dist {:.3}  rate_opt {:?}", r.method, r.rate_dist, r.rate_opt);
                }
            }
            Experiment::EmitDataset => {
                let mut entries = Vec::new();
                for scene in &self.scenes {
                    let out = harness::attack_and_evaluate(
                        &self.target(scene, classifier),
                        &self.attack,
                        bench.eval_samples,
                    )?;
                    entries.push((scene, out.params));
                }
                let params: Vec<_> = entries.iter().map(|(s, p)| (s.name.as_str(), *p)).collect();
                harness::write_json(&self.out("params.json"), &params)?;
                let rows = harness::emit_dataset(
                    &entries,
                    bench.dataset_per_scene,
                    &self.render,
                    &self.attack.bounds,
                    seeding::derive(self.attack.seed, &[0xd5]),
                    &self.out("dataset"),
                )?;
                println!("wrote {} images to {}", rows.len(), self.out("dataset").display());
            }
        }
        Ok(())
    }
}
