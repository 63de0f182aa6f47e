//! Built-in toy scenes and classifiers.
//!
//! The wedge scenario pairs the asymmetric marker scene (red patch on the
//! `+x` face, with a fin along its `-y` edge) with a two-class template
//! bank. Class 0 is the render from the natural pose, class 1 a render from
//! above the marker face. The object is misclassified only from the narrow
//! band of viewpoints that see the marker clearly; the fin makes that band
//! drop off sharply on one side.

use serde::{Deserialize, Serialize};

use crate::classifier::{BuiltinClassifier, ClassifierKind, ClassifierSpec};
use crate::error::Result;
use crate::field::{build_primitive_scene, PrimitiveKind, SceneSpec, ShapeParams};
use crate::geometry::{viewpoint_to_pose, CameraPose, Vec3, Viewpoint, ViewpointBounds};
use crate::render::{render_pose, RenderConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WedgeParams {
    pub resolution: usize,
    pub image_size: usize,
    pub samples_per_ray: usize,
    pub fov_deg: f64,
    pub threshold: f64,
    pub scale: f64,
    pub classifier: WedgeClassifier,
    /// Elevation of the marker template camera above the `xy` plane, on the
    /// `+x` side.
    pub marker_elevation_deg: f64,
    pub shape: ShapeParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WedgeClassifier {
    /// Templates rendered from the natural pose and from straight in front
    /// of the marker face; `scale` multiplies the negative MSE.
    Templates,
    /// [`red_detector`] with `threshold` and `scale`.
    RedDetector,
}

impl Default for WedgeParams {
    fn default() -> Self {
        WedgeParams {
            resolution: 24,
            image_size: 16,
            samples_per_ray: 16,
            fov_deg: 30.0,
            threshold: 0.05,
            scale: 100.0,
            classifier: WedgeClassifier::Templates,
            marker_elevation_deg: 45.0,
            shape: ShapeParams {
                fin_length: 0.4,
                marker_fraction: 1.0,
                ..ShapeParams::default()
            },
        }
    }
}

pub struct Scenario {
    pub scene: SceneSpec,
    pub classifier: ClassifierSpec,
    pub render: RenderConfig,
    pub bounds: ViewpointBounds,
}

impl Scenario {
    pub fn build_classifier(&self) -> Result<BuiltinClassifier> {
        BuiltinClassifier::new(self.classifier.clone())
    }
}

/// Linear classifier with logits `[0, scale·(redness − threshold)]`.
pub fn red_detector(input_size: (usize, usize), threshold: f64, scale: f64) -> ClassifierSpec {
    let pixels = input_size.0 * input_size.1;
    let per_pixel = scale / pixels as f64;
    let mut w1 = Vec::with_capacity(3 * pixels);
    for _ in 0..pixels {
        w1.extend_from_slice(&[per_pixel, -0.5 * per_pixel, -0.5 * per_pixel]);
    }
    ClassifierSpec {
        class_count: 2,
        input_size,
        model: ClassifierKind::LinearPixels {
            weights: vec![vec![0.0; 3 * pixels], w1],
            bias: vec![0.0, -scale * threshold],
        },
    }
}

pub fn wedge_render_config(params: &WedgeParams) -> RenderConfig {
    RenderConfig {
        width: params.image_size,
        height: params.image_size,
        samples_per_ray: params.samples_per_ray,
        fov_deg: params.fov_deg,
        ..RenderConfig::default()
    }
}

pub fn wedge_scene(params: &WedgeParams) -> Result<SceneSpec> {
    Ok(SceneSpec {
        field: build_primitive_scene(PrimitiveKind::AsymmetricMarker, [params.resolution; 3], &params.shape)?,
        label: 0,
        name: "wedge_marker".into(),
    })
}

pub fn wedge(params: &WedgeParams) -> Result<Scenario> {
    let scene = wedge_scene(params)?;
    let render = wedge_render_config(params);
    render.validate()?;
    let size = (params.image_size, params.image_size);
    let bounds = ViewpointBounds::paper_full();
    let classifier = match params.classifier {
        WedgeClassifier::RedDetector => red_detector(size, params.threshold, params.scale),
        WedgeClassifier::Templates => {
            let exact = RenderConfig {
                stratified: false,
                ..render.clone()
            };
            let natural = viewpoint_to_pose(&Viewpoint(*bounds.offset()), &bounds, Vec3::from(exact.camera_center))?;
            let distance = Vec3::from(exact.camera_center).norm();
            let e = params.marker_elevation_deg.to_radians();
            let marker = CameraPose::look_at_origin(Vec3::new(e.cos(), 0.0, e.sin()) * distance)?;
            let templates = [
                render_pose(&scene.field, &natural, &exact)?,
                render_pose(&scene.field, &marker, &exact)?,
            ];
            ClassifierSpec::template_bank(&templates, size, params.scale)?
        }
    };
    Ok(Scenario {
        scene,
        classifier,
        render,
        bounds,
    })
}
