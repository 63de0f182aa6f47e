//! Black-box image classifiers and the classification loss.
//!
//! The attack only ever sees [`ImageClassifier::predict`]; weights and
//! templates stay behind the trait.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::oracle::ExternalOracle;

#[derive(Debug, Clone, PartialEq)]
pub struct Logits(Vec<f64>);

impl Logits {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::invalid("logits need at least 2 classes"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("logits must be finite"));
        }
        Ok(Logits(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the largest logit; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.0.iter().enumerate().skip(1) {
            if v > self.0[best] {
                best = i;
            }
        }
        best
    }
}

/// `−log softmax(logits)[y]` with the max-shifted log-sum-exp.
pub fn cross_entropy(logits: &Logits, y: usize) -> Result<f64> {
    let v = logits.values();
    if y >= v.len() {
        return Err(Error::invalid(format!(
            "label {y} out of range for {} classes",
            v.len()
        )));
    }
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
    Ok((lse - v[y]).max(0.0))
}

pub trait ImageClassifier: Send + Sync {
    fn class_count(&self) -> usize;
    fn predict(&self, image: &ImageBuffer) -> Result<Logits>;
}

pub fn is_misclassified(classifier: &dyn ImageClassifier, image: &ImageBuffer, y: usize) -> Result<bool> {
    Ok(classifier.predict(image)?.argmax() != y)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClassifierKind {
    /// `logits = W·x + bias` on the flattened `r, g, b` interleaved input.
    LinearPixels { weights: Vec<Vec<f64>>, bias: Vec<f64> },
    /// `logit_j = −scale · mean((x − template_j)²)`.
    TemplateBank { templates: Vec<Vec<f64>>, scale: f64 },
    /// Logits obtained from a subprocess speaking the oracle protocol.
    ExternalCommand {
        program: String,
        #[serde(default)]
        args: Vec<String>,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
    },
}

fn default_timeout_ms() -> u64 {
    30_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierSpec {
    pub class_count: usize,
    pub input_size: (usize, usize),
    pub model: ClassifierKind,
}

impl ClassifierSpec {
    pub fn input_len(&self) -> usize {
        self.input_size.0 * self.input_size.1 * 3
    }

    pub fn validate(&self) -> Result<()> {
        if self.class_count < 2 {
            return Err(Error::invalid("classifier needs at least 2 classes"));
        }
        if self.input_size.0 == 0 || self.input_size.1 == 0 {
            return Err(Error::invalid("classifier input size must be nonempty"));
        }
        let len = self.input_len();
        match &self.model {
            ClassifierKind::LinearPixels { weights, bias } => {
                if weights.len() != self.class_count || bias.len() != self.class_count {
                    return Err(Error::invalid(
                        "linear classifier needs one weight row and bias per class",
                    ));
                }
                if let Some(j) = weights.iter().position(|w| w.len() != len) {
                    return Err(Error::invalid(format!(
                        "weight row {j} does not match input size {len}"
                    )));
                }
                if weights.iter().flatten().chain(bias).any(|x| !x.is_finite()) {
                    return Err(Error::invalid("linear classifier parameters must be finite"));
                }
            }
            ClassifierKind::TemplateBank { templates, scale } => {
                if templates.len() != self.class_count {
                    return Err(Error::invalid("template bank needs one template per class"));
                }
                if let Some(j) = templates.iter().position(|t| t.len() != len) {
                    return Err(Error::invalid(format!("template {j} does not match input size {len}")));
                }
                if templates.iter().flatten().any(|x| !(0.0..=1.0).contains(x)) {
                    return Err(Error::invalid("template values must lie in [0, 1]"));
                }
                if !(*scale > 0.0 && scale.is_finite()) {
                    return Err(Error::invalid("template scale must be positive"));
                }
            }
            ClassifierKind::ExternalCommand { program, .. } => {
                if program.is_empty() {
                    return Err(Error::invalid("external classifier needs a program"));
                }
            }
        }
        Ok(())
    }

    /// Instantiates the classifier. External commands are spawned here.
    pub fn build(&self) -> Result<Box<dyn ImageClassifier>> {
        self.validate()?;
        Ok(match &self.model {
            ClassifierKind::ExternalCommand {
                program,
                args,
                timeout_ms,
            } => Box::new(ExternalOracle::spawn(
                program,
                args,
                self.class_count,
                self.input_size,
                std::time::Duration::from_millis(*timeout_ms),
            )?),
            _ => Box::new(BuiltinClassifier { spec: self.clone() }),
        })
    }

    /// Template bank whose templates are given images (resized and cropped
    /// to `input_size`).
    pub fn template_bank(templates: &[ImageBuffer], input_size: (usize, usize), scale: f64) -> Result<Self> {
        let templates = templates
            .iter()
            .map(|t| Ok(t.resize_and_crop(input_size.0, input_size.1)?.flatten()))
            .collect::<Result<Vec<_>>>()?;
        let spec = ClassifierSpec {
            class_count: templates.len(),
            input_size,
            model: ClassifierKind::TemplateBank { templates, scale },
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// In-process linear and template-bank classifiers.
pub struct BuiltinClassifier {
    spec: ClassifierSpec,
}

impl BuiltinClassifier {
    pub fn new(spec: ClassifierSpec) -> Result<Self> {
        spec.validate()?;
        if matches!(spec.model, ClassifierKind::ExternalCommand { .. }) {
            return Err(Error::invalid(
                "external classifiers are built with ClassifierSpec::build",
            ));
        }
        Ok(BuiltinClassifier { spec })
    }
}

impl ImageClassifier for BuiltinClassifier {
    fn class_count(&self) -> usize {
        self.spec.class_count
    }

    fn predict(&self, image: &ImageBuffer) -> Result<Logits> {
        let (w, h) = self.spec.input_size;
        let x = image.resize_and_crop(w, h)?.flatten();
        if x.len() != self.spec.input_len() {
            return Err(Error::Internal("preprocessed image has the wrong size".into()));
        }
        let values = match &self.spec.model {
            ClassifierKind::LinearPixels { weights, bias } => weights
                .iter()
                .zip(bias)
                .map(|(row, b)| row.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() + b)
                .collect(),
            ClassifierKind::TemplateBank { templates, scale } => templates
                .iter()
                .map(|t| {
                    let mse = t.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / x.len() as f64;
                    -scale * mse
                })
                .collect(),
            ClassifierKind::ExternalCommand { .. } => unreachable!("rejected at construction"),
        };
        Logits::new(values)
    }
}

/// Counts `predict` calls on the wrapped classifier.
pub struct QueryCounter<'a> {
    inner: &'a dyn ImageClassifier,
    count: AtomicU64,
}

impl<'a> QueryCounter<'a> {
    pub fn new(inner: &'a dyn ImageClassifier) -> Self {
        QueryCounter {
            inner,
            count: AtomicU64::new(0),
        }
    }

    pub fn queries(&self) -> u64 {
        self.count.load(Ordering::SeqCst)
    }
}

impl ImageClassifier for QueryCounter<'_> {
    fn class_count(&self) -> usize {
        self.inner.class_count()
    }

    fn predict(&self, image: &ImageBuffer) -> Result<Logits> {
        self.count.fetch_add(1, Ordering::SeqCst);
        self.inner.predict(image)
    }
}
