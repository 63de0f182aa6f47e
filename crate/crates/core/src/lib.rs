//! Adversarial viewpoint search against image classifiers.
//!
//! A scene is a voxel radiance field rendered by emission-absorption
//! volume rendering. A bounded distribution over 6-D viewpoints is fitted
//! by natural-gradient Adam so that renders drawn from it are misclassified.

pub mod classifier;
pub mod cli;
pub mod config;
pub mod distribution;
pub mod error;
pub mod estimator;
pub mod field;
pub mod geometry;
pub mod harness;
pub mod image;
pub mod optimizer;
pub mod oracle;
pub mod render;
pub mod scenario;
pub mod scene_io;
pub mod seeding;

pub use error::{Error, Result};
