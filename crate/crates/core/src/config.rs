//! Run configuration: a TOML document validated against [`CONFIG_KEYS`].

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::classifier::{BuiltinClassifier, ClassifierSpec, ImageClassifier};
use crate::distribution::{DistributionParams, SIGMA_FLOOR};
use crate::error::{Error, Result};
use crate::field::{build_primitive_scene, PrimitiveKind, SceneSpec, ShapeParams};
use crate::geometry::{viewpoint_to_pose, Vec3, ViewpointBounds, DIM};
use crate::optimizer::{freeze, optimal_viewpoint, AdamHyper, AttackConfig};
use crate::render::{render_pose, RenderConfig};
use crate::scenario::{self, WedgeParams};
use crate::scene_io;

/// Every accepted key, with its documentation. Array-of-table entries use
/// `scenes[]`.
pub const CONFIG_KEYS: &[(&str, &str)] = &[
    ("seed", "master seed for sampling, rendering and evaluation (default 0)"),
    ("preset", "viewpoint bounds preset (default paper-full); see --preset"),
    ("scenes", "array of scene tables; defaults to one wedge scene"),
    ("scenes[].source", "wedge | primitive | file"),
    (
        "scenes[].kind",
        "primitive kind: box | sphere | two_tone_cube | asymmetric_marker",
    ),
    (
        "scenes[].resolution",
        "voxels per axis for primitive scenes (default 24)",
    ),
    ("scenes[].label", "ground-truth class of the scene (default 0)"),
    ("scenes[].name", "scene name used in reports and file names"),
    (
        "scenes[].path",
        "scene file for source = file, relative to the config file",
    ),
    ("scenes[].shape", "shape parameters for primitive scenes"),
    (
        "scenes[].shape.size",
        "half edge of a box or cube, or sphere radius (default 0.6)",
    ),
    ("scenes[].shape.density", "volume density inside the shape (default 40)"),
    ("scenes[].shape.color", "body color, RGB in [0, 1]"),
    (
        "scenes[].shape.accent",
        "accent color of the two-tone cube and the marker",
    ),
    (
        "scenes[].shape.bbox_half",
        "half extent of the field's bounding cube (default 1)",
    ),
    (
        "scenes[].shape.marker_fraction",
        "marker half extent relative to the face (default 0.8)",
    ),
    (
        "scenes[].shape.fin_length",
        "length of the occluding fin next to the marker (default 0)",
    ),
    ("classifier", "target classifier table"),
    ("classifier.source", "wedge | scene_templates | file (default wedge)"),
    ("classifier.path", "classifier spec JSON for source = file"),
    (
        "classifier.scale",
        "template-bank scale for source = scene_templates (default 100)",
    ),
    ("wedge", "parameters of the wedge scene and classifier"),
    ("wedge.resolution", "voxels per axis (default 24)"),
    (
        "wedge.image_size",
        "render and classifier input size in pixels (default 16)",
    ),
    ("wedge.samples_per_ray", "quadrature samples per ray (default 16)"),
    ("wedge.fov_deg", "vertical field of view (default 30)"),
    (
        "wedge.threshold",
        "redness threshold of the red_detector classifier (default 0.05)",
    ),
    ("wedge.scale", "classifier scale (default 100)"),
    ("wedge.classifier", "templates | red_detector (default templates)"),
    (
        "wedge.marker_elevation_deg",
        "elevation of the marker template camera (default 45)",
    ),
    ("wedge.shape", "shape parameters of the wedge scene"),
    ("wedge.shape.size", "see scenes[].shape.size"),
    ("wedge.shape.density", "see scenes[].shape.density"),
    ("wedge.shape.color", "see scenes[].shape.color"),
    ("wedge.shape.accent", "see scenes[].shape.accent"),
    ("wedge.shape.bbox_half", "see scenes[].shape.bbox_half"),
    (
        "wedge.shape.marker_fraction",
        "see scenes[].shape.marker_fraction (default 1)",
    ),
    ("wedge.shape.fin_length", "see scenes[].shape.fin_length (default 0.4)"),
    (
        "render",
        "renderer overrides; unset keys come from the wedge or renderer defaults",
    ),
    ("render.samples_per_ray", "quadrature samples per ray"),
    (
        "render.stratified",
        "jitter samples within their bins (true) or use midpoints",
    ),
    ("render.background", "background RGB (default white)"),
    ("render.width", "image width in pixels"),
    ("render.height", "image height in pixels"),
    ("render.fov_deg", "vertical field of view in degrees"),
    ("render.t_near", "near ray bound"),
    ("render.t_far", "far ray bound"),
    ("render.rng_seed", "renderer seed for evaluation renders"),
    ("render.camera_center", "initial camera center (default [0, 4, 0])"),
    ("attack", "attack settings"),
    ("attack.lambda", "entropy weight (default 0.01)"),
    ("attack.k", "viewpoint samples per iteration (default 50)"),
    ("attack.iterations", "optimization steps (default 100)"),
    ("attack.lr", "Adam learning rate (default 0.01)"),
    ("attack.beta1", "Adam first-moment decay (default 0.9)"),
    ("attack.beta2", "Adam second-moment decay (default 0.999)"),
    ("attack.eps", "Adam epsilon (default 1e-8)"),
    ("attack.sigma_floor", "lower clamp for sigma (default 1e-3)"),
    (
        "attack.baseline",
        "subtract the batch-mean loss in the score estimator (default true)",
    ),
    ("attack.init_mu", "initial mu, six values (default zeros)"),
    ("attack.init_sigma", "initial sigma, six values (default 0.5)"),
    (
        "attack.checkpoint_every",
        "write a checkpoint every N iterations; 0 writes only the final one",
    ),
    ("bench", "benchmark settings"),
    (
        "bench.experiment",
        "lambda-sweep | fluctuation | transferability | random-vs-viewfool | emit-dataset",
    ),
    (
        "bench.lambdas",
        "lambda values for lambda-sweep (default [0, 0.01, 0.1, 1])",
    ),
    ("bench.seeds", "seeds for lambda-sweep and fluctuation (default [0])"),
    (
        "bench.eval_samples",
        "distribution samples behind rate_dist (default 100)",
    ),
    (
        "bench.budget",
        "random-search queries (default attack.k * attack.iterations)",
    ),
    (
        "bench.fluctuation_lambdas",
        "lambda values compared by the fluctuation experiment (default [0, 0.01])",
    ),
    (
        "bench.fluctuation_samples",
        "perturbed viewpoints per fluctuation point (default 20)",
    ),
    (
        "bench.transfer_classifiers",
        "extra classifier spec files for transferability",
    ),
    (
        "bench.dataset_per_scene",
        "images per scene for emit-dataset (default 100)",
    ),
];

/// Help text listing every configuration key.
pub fn keys_help() -> String {
    let width = CONFIG_KEYS.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut out = String::from("Configuration keys (TOML):\n");
    for (k, doc) in CONFIG_KEYS {
        out.push_str(&format!("  {k:width$}  {doc}\n"));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    #[default]
    PaperFull,
    TranslationOnly,
    RotationOnly,
    PsiOnly,
    ThetaOnly,
    PhiOnly,
    RotationQuarter,
    RotationHalf,
    #[serde(rename = "2d-transform")]
    TwoDTransform,
}

impl Preset {
    pub const ALL: [Preset; 9] = [
        Preset::PaperFull,
        Preset::TranslationOnly,
        Preset::RotationOnly,
        Preset::PsiOnly,
        Preset::ThetaOnly,
        Preset::PhiOnly,
        Preset::RotationQuarter,
        Preset::RotationHalf,
        Preset::TwoDTransform,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Preset::PaperFull => "paper-full",
            Preset::TranslationOnly => "translation-only",
            Preset::RotationOnly => "rotation-only",
            Preset::PsiOnly => "psi-only",
            Preset::ThetaOnly => "theta-only",
            Preset::PhiOnly => "phi-only",
            Preset::RotationQuarter => "rotation-quarter",
            Preset::RotationHalf => "rotation-half",
            Preset::TwoDTransform => "2d-transform",
        }
    }

    /// Bounds and frozen parameters.
    pub fn resolve(&self) -> (ViewpointBounds, [Option<f64>; DIM]) {
        let full = ViewpointBounds::paper_full();
        let no_translation = [None, None, None, Some(0.0), Some(0.0), Some(0.0)];
        let restricted = |psi: f64, theta: f64, phi: f64| {
            ViewpointBounds::new(
                [-psi, -theta, 90.0 - phi, -0.5, -1.0, -0.5],
                [psi, theta, 90.0 + phi, 0.5, 1.0, 0.5],
            )
            .expect("preset bounds are valid")
        };
        match self {
            Preset::PaperFull => (full, [None; DIM]),
            Preset::TranslationOnly => (full, [Some(0.0), Some(0.0), Some(65.0), None, None, None]),
            Preset::RotationOnly => (full, no_translation),
            Preset::PsiOnly => (full, [None, Some(0.0), Some(90.0), Some(0.0), Some(0.0), Some(0.0)]),
            Preset::ThetaOnly => (full, [Some(0.0), None, Some(90.0), Some(0.0), Some(0.0), Some(0.0)]),
            Preset::PhiOnly => (full, [Some(0.0), Some(0.0), None, Some(0.0), Some(0.0), Some(0.0)]),
            Preset::RotationQuarter => (restricted(45.0, 7.5, 17.5), no_translation),
            Preset::RotationHalf => (restricted(90.0, 15.0, 35.0), no_translation),
            Preset::TwoDTransform => (full, [Some(0.0), None, Some(90.0), None, None, None]),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL.into_iter().find(|p| p.as_str() == s).ok_or_else(|| {
            let names: Vec<_> = Preset::ALL.iter().map(|p| p.as_str()).collect();
            Error::Config(format!("unknown preset `{s}` (expected one of {})", names.join(", ")))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneSource {
    #[default]
    Wedge,
    Primitive,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub source: SceneSource,
    pub kind: Option<PrimitiveKind>,
    pub resolution: usize,
    pub label: usize,
    pub name: Option<String>,
    pub path: Option<PathBuf>,
    pub shape: ShapeParams,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            source: SceneSource::Wedge,
            kind: None,
            resolution: 24,
            label: 0,
            name: None,
            path: None,
            shape: ShapeParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierSource {
    #[default]
    Wedge,
    SceneTemplates,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub source: ClassifierSource,
    pub path: Option<PathBuf>,
    pub scale: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            source: ClassifierSource::Wedge,
            path: None,
            scale: 100.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderOverrides {
    pub samples_per_ray: Option<usize>,
    pub stratified: Option<bool>,
    pub background: Option<[f64; 3]>,
    pub width: Option<usize>,
    pub height: Option<usize>,
    pub fov_deg: Option<f64>,
    pub t_near: Option<f64>,
    pub t_far: Option<f64>,
    pub rng_seed: Option<u64>,
    pub camera_center: Option<[f64; 3]>,
}

impl RenderOverrides {
    pub fn apply(&self, mut base: RenderConfig) -> RenderConfig {
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(x) = self.$f { base.$f = x; } )* };
        }
        set!(
            samples_per_ray,
            stratified,
            background,
            width,
            height,
            fov_deg,
            t_near,
            t_far,
            rng_seed,
            camera_center
        );
        base
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackSection {
    pub lambda: f64,
    pub k: usize,
    pub iterations: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub sigma_floor: f64,
    pub baseline: bool,
    pub init_mu: [f64; DIM],
    pub init_sigma: [f64; DIM],
    pub checkpoint_every: usize,
}

impl Default for AttackSection {
    fn default() -> Self {
        let a = AttackConfig::default();
        AttackSection {
            lambda: a.lambda,
            k: a.k,
            iterations: a.iterations,
            lr: a.adam.lr,
            beta1: a.adam.beta1,
            beta2: a.adam.beta2,
            eps: a.adam.eps,
            sigma_floor: SIGMA_FLOOR,
            baseline: true,
            init_mu: a.init.mu,
            init_sigma: a.init.sigma,
            checkpoint_every: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    LambdaSweep,
    Fluctuation,
    Transferability,
    RandomVsViewfool,
    EmitDataset,
}

impl Experiment {
    pub const ALL: [Experiment; 5] = [
        Experiment::LambdaSweep,
        Experiment::Fluctuation,
        Experiment::Transferability,
        Experiment::RandomVsViewfool,
        Experiment::EmitDataset,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Experiment::LambdaSweep => "lambda-sweep",
            Experiment::Fluctuation => "fluctuation",
            Experiment::Transferability => "transferability",
            Experiment::RandomVsViewfool => "random-vs-viewfool",
            Experiment::EmitDataset => "emit-dataset",
        }
    }
}

impl FromStr for Experiment {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL.into_iter().find(|e| e.as_str() == s).ok_or_else(|| {
            let names: Vec<_> = Experiment::ALL.iter().map(|e| e.as_str()).collect();
            Error::Config(format!(
                "unknown experiment `{s}` (expected one of {})",
                names.join(", ")
            ))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub experiment: Option<Experiment>,
    pub lambdas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub eval_samples: usize,
    pub budget: Option<usize>,
    pub fluctuation_lambdas: Vec<f64>,
    pub fluctuation_samples: usize,
    pub transfer_classifiers: Vec<PathBuf>,
    pub dataset_per_scene: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        BenchSection {
            experiment: None,
            lambdas: vec![0.0, 0.01, 0.1, 1.0],
            seeds: vec![0],
            eval_samples: 100,
            budget: None,
            fluctuation_lambdas: vec![0.0, 0.01],
            fluctuation_samples: 20,
            transfer_classifiers: Vec::new(),
            dataset_per_scene: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub preset: Preset,
    pub scenes: Vec<SceneConfig>,
    pub classifier: ClassifierConfig,
    pub wedge: WedgeParams,
    pub render: RenderOverrides,
    pub attack: AttackSection,
    pub bench: BenchSection,
}

fn collect_keys(value: &toml::Value, prefix: &str, out: &mut Vec<String>) {
    if let toml::Value::Table(table) = value {
        for (k, v) in table {
            let path = if prefix.is_empty() {
                k.clone()
            } else {
                format!("{prefix}.{k}")
            };
            out.push(path.clone());
            match v {
                toml::Value::Table(_) => collect_keys(v, &path, out),
                toml::Value::Array(items) if items.iter().any(|i| i.is_table()) => {
                    for item in items {
                        collect_keys(item, &format!("{path}[]"), out);
                    }
                }
                _ => {}
            }
        }
    }
}

/// Dotted key paths present in a TOML document, deduplicated and sorted.
pub fn document_keys(value: &toml::Value) -> Vec<String> {
    let mut keys = Vec::new();
    collect_keys(value, "", &mut keys);
    keys.sort();
    keys.dedup();
    keys
}

impl RunConfig {
    /// Parses a TOML document, rejecting every key not in [`CONFIG_KEYS`].
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let value: toml::Value = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let known: BTreeSet<&str> = CONFIG_KEYS.iter().map(|(k, _)| *k).collect();
        let unknown: Vec<String> = document_keys(&value)
            .into_iter()
            .filter(|k| !known.contains(k.as_str()))
            .collect();
        if !unknown.is_empty() {
            return Err(Error::Config(format!(
                "unknown configuration keys: {}",
                unknown.join(", ")
            )));
        }
        value
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))
    }

    /// Loads a config file; relative paths inside it are resolved against
    /// its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text).map_err(|e| {
            Error::Config(format!(
                "{}: {}",
                path.display(),
                e.to_string().trim_start_matches("configuration error: ")
            ))
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for s in &mut cfg.scenes {
            if let Some(p) = s.path.as_mut() {
                rebase(p);
            }
        }
        if let Some(p) = cfg.classifier.path.as_mut() {
            rebase(p);
        }
        cfg.bench.transfer_classifiers.iter_mut().for_each(rebase);
        Ok(cfg)
    }

    pub fn uses_wedge(&self) -> bool {
        self.classifier.source == ClassifierSource::Wedge
            || self.scenes.is_empty()
            || self.scenes.iter().any(|s| s.source == SceneSource::Wedge)
    }

    pub fn render_config(&self) -> Result<RenderConfig> {
        let base = if self.uses_wedge() {
            scenario::wedge_render_config(&self.wedge)
        } else {
            RenderConfig::default()
        };
        let cfg = self.render.apply(base);
        cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn attack_config(&self) -> Result<AttackConfig> {
        let (bounds, frozen) = self.preset.resolve();
        let a = &self.attack;
        let cfg = AttackConfig {
            lambda: a.lambda,
            k: a.k,
            iterations: a.iterations,
            adam: AdamHyper {
                lr: a.lr,
                beta1: a.beta1,
                beta2: a.beta2,
                eps: a.eps,
            },
            bounds,
            seed: self.seed,
            baseline: a.baseline,
            sigma_floor: a.sigma_floor,
            init: DistributionParams {
                mu: a.init_mu,
                sigma: a.init_sigma,
            },
            frozen,
        };
        cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn resolve_scenes(&self) -> Result<Vec<SceneSpec>> {
        let default = [SceneConfig::default()];
        let list: &[SceneConfig] = if self.scenes.is_empty() { &default } else { &self.scenes };
        let mut names = BTreeSet::new();
        let mut out = Vec::with_capacity(list.len());
        for (i, s) in list.iter().enumerate() {
            let mut scene = match s.source {
                SceneSource::Wedge => scenario::wedge_scene(&self.wedge)?,
                SceneSource::Primitive => {
                    let kind = s
                        .kind
                        .ok_or_else(|| Error::Config(format!("scenes[{i}]: primitive scenes need `kind`")))?;
                    let field = build_primitive_scene(kind, [s.resolution; 3], &s.shape)
                        .map_err(|e| Error::Config(format!("scenes[{i}]: {e}")))?;
                    SceneSpec {
                        field,
                        label: s.label,
                        name: kind.as_str().to_string(),
                    }
                }
                SceneSource::File => {
                    let path = s
                        .path
                        .as_ref()
                        .ok_or_else(|| Error::Config(format!("scenes[{i}]: file scenes need `path`")))?;
                    scene_io::load_scene(path)
                        .map_err(|e| Error::Config(format!("scene file {}: {e}", path.display())))?
                }
            };
            if s.source != SceneSource::File {
                scene.label = s.label;
            }
            if let Some(name) = &s.name {
                scene.name = name.clone();
            }
            if !names.insert(scene.name.clone()) {
                return Err(Error::Config(format!(
                    "duplicate scene name `{}`; set scenes[{i}].name",
                    scene.name
                )));
            }
            out.push(scene);
        }
        Ok(out)
    }

    pub fn resolve_classifier(&self, scenes: &[SceneSpec], render: &RenderConfig) -> Result<Box<dyn ImageClassifier>> {
        let spec = match self.classifier.source {
            ClassifierSource::Wedge => scenario::wedge(&self.wedge)?.classifier,
            ClassifierSource::File => {
                let path = self
                    .classifier
                    .path
                    .as_ref()
                    .ok_or_else(|| Error::Config("classifier source `file` needs `classifier.path`".into()))?;
                load_classifier_spec(path)?
            }
            ClassifierSource::SceneTemplates => {
                let (bounds, frozen) = self.preset.resolve();
                let exact = RenderConfig {
                    stratified: false,
                    ..render.clone()
                };
                let init = self.attack_config()?.init;
                let natural = freeze(&frozen, optimal_viewpoint(&init, &bounds));
                let pose = viewpoint_to_pose(&natural, &bounds, Vec3::from(exact.camera_center))?;
                let mut templates = Vec::with_capacity(scenes.len());
                for (i, s) in scenes.iter().enumerate() {
                    if s.label != i {
                        return Err(Error::Config(format!(
                            "scene_templates uses scene order as classes; scene `{}` has label {} but index {i}",
                            s.name, s.label
                        )));
                    }
                    templates.push(render_pose(&s.field, &pose, &exact)?);
                }
                if templates.len() < 2 {
                    return Err(Error::Config("scene_templates needs at least two scenes".into()));
                }
                ClassifierSpec::template_bank(&templates, (exact.width, exact.height), self.classifier.scale)?
            }
        };
        let classifier = spec.build().map_err(|e| Error::Config(format!("classifier: {e}")))?;
        for s in scenes {
            if s.label >= classifier.class_count() {
                return Err(Error::Config(format!(
                    "scene `{}` has label {} but the classifier has {} classes",
                    s.name,
                    s.label,
                    classifier.class_count()
                )));
            }
        }
        Ok(classifier)
    }
}

pub fn load_classifier_spec(path: &Path) -> Result<ClassifierSpec> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read classifier {}: {e}", path.display())))?;
    let spec: ClassifierSpec =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("classifier {}: {e}", path.display())))?;
    spec.validate()
        .map_err(|e| Error::Config(format!("classifier {}: {e}", path.display())))?;
    Ok(spec)
}

/// Builds only in-process classifiers (used by the oracle server).
pub fn builtin_classifier(spec: ClassifierSpec) -> Result<BuiltinClassifier> {
    BuiltinClassifier::new(spec)
}
