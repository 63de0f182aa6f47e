//! Volume rendering by transmittance-weighted alpha compositing along rays.
//!
//! For quadrature points `t_1 < … < t_N` on a ray the pixel color is
//! `Σ w_i c(t_i) + (1 − Σ w_i) · background` with
//! `w_i = T_i · (1 − exp(−τ_i δ_i))`, `T_i = exp(−Σ_{j<i} τ_j δ_j)` and
//! `δ_i = t_{i+1} − t_i`. The last interval closes at the ray's far bound.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Rgb, VoxelField, WHITE};
use crate::geometry::{check_range, viewpoint_to_pose, Pinhole, Ray, Vec3, Viewpoint, ViewpointBounds};
use crate::image::ImageBuffer;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    pub samples_per_ray: usize,
    pub stratified: bool,
    pub background: Rgb,
    pub width: usize,
    pub height: usize,
    pub fov_deg: f64,
    pub t_near: f64,
    pub t_far: f64,
    pub rng_seed: u64,
    /// Camera center before the viewpoint transformation; the camera looks
    /// at the scene origin from here.
    pub camera_center: [f64; 3],
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            samples_per_ray: 32,
            stratified: true,
            background: WHITE,
            width: 64,
            height: 64,
            fov_deg: 60.0,
            t_near: 0.5,
            t_far: 8.0,
            rng_seed: 0,
            camera_center: [0.0, 4.0, 0.0],
        }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples_per_ray < 2 {
            return Err(Error::invalid("samples_per_ray must be at least 2"));
        }
        if self.background.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::invalid("background channels must lie in [0, 1]"));
        }
        Pinhole::new(self.width, self.height, self.fov_deg)?;
        check_range(self.t_near, self.t_far)
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        RenderConfig {
            rng_seed: seed,
            ..self.clone()
        }
    }
}

/// `n` strictly increasing quadrature points on `[t_near, t_far]`: one per
/// equal-width bin, uniformly jittered when `stratified`, otherwise at bin
/// midpoints.
pub fn sample_quadrature<R: Rng + ?Sized>(
    t_near: f64,
    t_far: f64,
    n: usize,
    stratified: bool,
    rng: &mut R,
) -> Vec<f64> {
    let width = (t_far - t_near) / n as f64;
    (0..n)
        .map(|i| {
            let offset = if stratified { rng.gen::<f64>() } else { 0.5 };
            t_near + (i as f64 + offset) * width
        })
        .collect()
}

/// Compositing weights `w_i` and sample colors along `ray` at points `t`.
pub fn composite_weights(field: &VoxelField, ray: &Ray, t: &[f64]) -> (Vec<f64>, Vec<Rgb>) {
    let mut weights = Vec::with_capacity(t.len());
    let mut colors = Vec::with_capacity(t.len());
    // optical depth accumulated before the current sample
    let mut depth = 0.0f64;
    for (i, &ti) in t.iter().enumerate() {
        let delta = t.get(i + 1).copied().unwrap_or(ray.t_far) - ti;
        let (c, tau) = field.query(ray.at(ti), ray.direction);
        let transmittance = (-depth).exp();
        let x = tau * delta;
        weights.push(transmittance * -(-x).exp_m1());
        colors.push(c);
        depth += x;
    }
    (weights, colors)
}

pub fn composite_ray(field: &VoxelField, ray: &Ray, t: &[f64], background: Rgb) -> Rgb {
    let (weights, colors) = composite_weights(field, ray, t);
    let mut out = [0.0; 3];
    let mut total = 0.0;
    for (w, c) in weights.iter().zip(&colors) {
        total += w;
        for ch in 0..3 {
            out[ch] += w * c[ch];
        }
    }
    let rest = 1.0 - total;
    for ch in 0..3 {
        out[ch] = (out[ch] + rest * background[ch]).clamp(0.0, 1.0);
    }
    out
}

/// Per-pixel generator: stream `pixel` of the ChaCha generator keyed by
/// `seed`, so pixel results do not depend on evaluation order.
fn pixel_rng(seed: u64, pixel: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(pixel as u64);
    rng
}

/// Renders one pixel: the ray is clipped to the field's bounding box (the
/// field is empty outside it) before quadrature points are drawn.
fn shade_pixel(
    field: &VoxelField,
    cam: &Pinhole,
    pose: &crate::geometry::CameraPose,
    cfg: &RenderConfig,
    row: usize,
    col: usize,
) -> Rgb {
    let mut ray = cam.ray(pose, row, col, cfg.t_near, cfg.t_far);
    match field.bbox().intersect(ray.origin, ray.direction) {
        Some((t0, t1)) if t1.min(ray.t_far) > t0.max(ray.t_near) => {
            ray.t_near = t0.max(ray.t_near);
            ray.t_far = t1.min(ray.t_far);
        }
        _ => return cfg.background,
    }
    let mut rng = pixel_rng(cfg.rng_seed, row * cam.width + col);
    let t = sample_quadrature(ray.t_near, ray.t_far, cfg.samples_per_ray, cfg.stratified, &mut rng);
    composite_ray(field, &ray, &t, cfg.background)
}

pub fn render(field: &VoxelField, v: &Viewpoint, bounds: &ViewpointBounds, cfg: &RenderConfig) -> Result<ImageBuffer> {
    cfg.validate()?;
    let pose = viewpoint_to_pose(v, bounds, Vec3::from(cfg.camera_center))?;
    render_pose(field, &pose, cfg)
}

pub fn render_pose(field: &VoxelField, pose: &crate::geometry::CameraPose, cfg: &RenderConfig) -> Result<ImageBuffer> {
    cfg.validate()?;
    let cam = Pinhole::new(cfg.width, cfg.height, cfg.fov_deg)?;
    let pixels: Vec<Rgb> = (0..cfg.width * cfg.height)
        .into_par_iter()
        .with_min_len(cfg.width.max(64))
        .map(|p| shade_pixel(field, &cam, pose, cfg, p / cfg.width, p % cfg.width))
        .collect();
    ImageBuffer::new(cfg.width, cfg.height, pixels)
}
