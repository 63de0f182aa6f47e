//! Voxel-grid radiance fields and procedural primitive scenes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

pub type Rgb = [f64; 3];

pub const BLACK: Rgb = [0.0, 0.0, 0.0];
pub const WHITE: Rgb = [1.0, 1.0, 1.0];

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Result<Self> {
        for i in 0..3 {
            if !(min[i].is_finite() && max[i].is_finite() && max[i] > min[i]) {
                return Err(Error::Validation(format!(
                    "bounding box axis {i} has no positive extent: [{}, {}]",
                    min[i], max[i]
                )));
            }
        }
        Ok(Aabb { min, max })
    }

    pub fn cube(half: f64) -> Result<Self> {
        Aabb::new([-half; 3], [half; 3])
    }

    pub fn contains(&self, p: Vec3) -> bool {
        let p = p.to_array();
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    /// Parametric interval where `origin + t·dir` is inside the box (slab
    /// test), or `None` if the ray misses.
    pub fn intersect(&self, origin: Vec3, dir: Vec3) -> Option<(f64, f64)> {
        let o = origin.to_array();
        let d = dir.to_array();
        let mut t0 = f64::NEG_INFINITY;
        let mut t1 = f64::INFINITY;
        for i in 0..3 {
            if d[i] == 0.0 {
                if o[i] < self.min[i] || o[i] > self.max[i] {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / d[i];
            let (mut a, mut b) = ((self.min[i] - o[i]) * inv, (self.max[i] - o[i]) * inv);
            if a > b {
                std::mem::swap(&mut a, &mut b);
            }
            t0 = t0.max(a);
            t1 = t1.min(b);
        }
        (t1 >= t0).then_some((t0, t1))
    }
}

/// Discrete radiance field: per-voxel RGB color and volume density on a
/// cell-centered grid spanning `bbox`. Storage is x-fastest.
///
/// Colors are view independent; [`VoxelField::query`] accepts a direction so
/// view-dependent fields can share the interface.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelField {
    resolution: [usize; 3],
    bbox: Aabb,
    densities: Vec<f32>,
    colors: Vec<[f32; 3]>,
}

impl VoxelField {
    pub fn new(resolution: [usize; 3], bbox: Aabb, densities: Vec<f32>, colors: Vec<[f32; 3]>) -> Result<Self> {
        if resolution.contains(&0) {
            return Err(Error::Validation("resolution must be at least 1 per axis".into()));
        }
        let bbox = Aabb::new(bbox.min, bbox.max)?;
        let n = resolution[0]
            .checked_mul(resolution[1])
            .and_then(|v| v.checked_mul(resolution[2]))
            .ok_or_else(|| Error::Validation("resolution overflows".into()))?;
        if densities.len() != n || colors.len() != n {
            return Err(Error::Validation(format!(
                "expected {n} voxels, got {} densities and {} colors",
                densities.len(),
                colors.len()
            )));
        }
        for (i, &d) in densities.iter().enumerate() {
            if !(d >= 0.0 && d.is_finite()) {
                return Err(Error::Validation(format!("voxel {i} has invalid density {d}")));
            }
        }
        for (i, c) in colors.iter().enumerate() {
            if c.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
                return Err(Error::Validation(format!("voxel {i} has color {c:?} outside [0, 1]")));
            }
        }
        Ok(VoxelField {
            resolution,
            bbox,
            densities,
            colors,
        })
    }

    /// Field with zero density everywhere.
    pub fn empty(resolution: [usize; 3], bbox: Aabb) -> Result<Self> {
        let n = resolution.iter().product();
        VoxelField::new(resolution, bbox, vec![0.0; n], vec![[0.0; 3]; n])
    }

    pub fn resolution(&self) -> [usize; 3] {
        self.resolution
    }

    pub fn bbox(&self) -> &Aabb {
        &self.bbox
    }

    pub fn densities(&self) -> &[f32] {
        &self.densities
    }

    pub fn colors(&self) -> &[[f32; 3]] {
        &self.colors
    }

    pub fn voxel_count(&self) -> usize {
        self.densities.len()
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.resolution[0] * (j + self.resolution[1] * k)
    }

    /// Edge lengths of one voxel.
    pub fn voxel_size(&self) -> [f64; 3] {
        let mut h = [0.0; 3];
        for (a, h) in h.iter_mut().enumerate() {
            *h = (self.bbox.max[a] - self.bbox.min[a]) / self.resolution[a] as f64;
        }
        h
    }

    pub fn voxel_center(&self, i: usize, j: usize, k: usize) -> Vec3 {
        let h = self.voxel_size();
        let idx = [i, j, k];
        let mut p = [0.0; 3];
        for a in 0..3 {
            p[a] = self.bbox.min[a] + (idx[a] as f64 + 0.5) * h[a];
        }
        Vec3::from(p)
    }

    /// Trilinear interpolation between the eight surrounding voxel centers,
    /// clamped to the outermost centers inside the box. Points outside the
    /// box are empty space: black with zero density.
    pub fn query(&self, x: Vec3, _direction: Vec3) -> (Rgb, f64) {
        if !self.bbox.contains(x) {
            return (BLACK, 0.0);
        }
        let p = x.to_array();
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..3 {
            let n = self.resolution[a];
            let h = (self.bbox.max[a] - self.bbox.min[a]) / n as f64;
            let g = ((p[a] - self.bbox.min[a]) / h - 0.5).clamp(0.0, (n - 1) as f64);
            let base = (g.floor() as usize).min(n - 1);
            lo[a] = base;
            hi[a] = (base + 1).min(n - 1);
            frac[a] = g - base as f64;
        }
        let mut density = 0.0;
        let mut color = [0.0; 3];
        for corner in 0..8 {
            let pick = |a: usize| (corner >> a) & 1 == 1;
            let mut w = 1.0;
            let mut idx = [0usize; 3];
            for a in 0..3 {
                if pick(a) {
                    w *= frac[a];
                    idx[a] = hi[a];
                } else {
                    w *= 1.0 - frac[a];
                    idx[a] = lo[a];
                }
            }
            if w == 0.0 {
                continue;
            }
            let v = self.index(idx[0], idx[1], idx[2]);
            density += w * self.densities[v] as f64;
            let c = self.colors[v];
            for ch in 0..3 {
                color[ch] += w * c[ch] as f64;
            }
        }
        for c in &mut color {
            *c = c.clamp(0.0, 1.0);
        }
        (color, density.max(0.0))
    }

    /// Largest density difference between axis-neighboring voxels.
    pub fn max_neighbor_delta(&self) -> f64 {
        let [nx, ny, nz] = self.resolution;
        let mut worst: f64 = 0.0;
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let d = self.densities[self.index(i, j, k)] as f64;
                    if i + 1 < nx {
                        worst = worst.max((d - self.densities[self.index(i + 1, j, k)] as f64).abs());
                    }
                    if j + 1 < ny {
                        worst = worst.max((d - self.densities[self.index(i, j + 1, k)] as f64).abs());
                    }
                    if k + 1 < nz {
                        worst = worst.max((d - self.densities[self.index(i, j, k + 1)] as f64).abs());
                    }
                }
            }
        }
        worst
    }
}

/// A field bound to its ground-truth class label.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub field: VoxelField,
    pub label: usize,
    pub name: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimitiveKind {
    Box,
    Sphere,
    TwoToneCube,
    AsymmetricMarker,
}

impl PrimitiveKind {
    pub const ALL: [PrimitiveKind; 4] = [
        PrimitiveKind::Box,
        PrimitiveKind::Sphere,
        PrimitiveKind::TwoToneCube,
        PrimitiveKind::AsymmetricMarker,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PrimitiveKind::Box => "box",
            PrimitiveKind::Sphere => "sphere",
            PrimitiveKind::TwoToneCube => "two_tone_cube",
            PrimitiveKind::AsymmetricMarker => "asymmetric_marker",
        }
    }
}

impl fmt::Display for PrimitiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PrimitiveKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        PrimitiveKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown primitive kind `{s}`")))
    }
}

/// Shape parameters for [`build_primitive_scene`].
///
/// `size` is the half-edge of a box or cube, or the sphere radius. `color`
/// is the body color; `accent` is the back half of the two-tone cube or the
/// marker patch of the asymmetric marker. The marker sits on the `+x` face,
/// covering `marker_fraction` of that face's half-extent around its center,
/// 1.5 voxels deep. A positive `fin_length` adds a thin plate of body color
/// continuing the `-y` face of the marker body outward along `+x`, which
/// hides the marker from viewpoints on that side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShapeParams {
    pub size: f64,
    pub density: f64,
    pub color: Rgb,
    pub accent: Rgb,
    pub bbox_half: f64,
    pub marker_fraction: f64,
    pub fin_length: f64,
}

impl Default for ShapeParams {
    fn default() -> Self {
        ShapeParams {
            size: 0.6,
            density: 40.0,
            color: [0.55, 0.55, 0.6],
            accent: [0.9, 0.1, 0.1],
            bbox_half: 1.0,
            marker_fraction: 0.8,
            fin_length: 0.0,
        }
    }
}

const SUBSAMPLES: usize = 3;

/// Builds a voxel field for one of the procedural primitives. Voxel density
/// is the shape's occupancy fraction (3×3×3 supersampling) times
/// `params.density`.
pub fn build_primitive_scene(kind: PrimitiveKind, resolution: [usize; 3], params: &ShapeParams) -> Result<VoxelField> {
    if resolution.iter().any(|&n| n < 2) {
        return Err(Error::invalid("primitive scenes need resolution >= 2 per axis"));
    }
    if !(params.density >= 0.0 && params.density.is_finite()) || !(params.size >= 0.0) {
        return Err(Error::invalid("shape density and size must be nonnegative"));
    }
    for c in [params.color, params.accent] {
        if c.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::invalid("shape colors must lie in [0, 1]"));
        }
    }
    let bbox = Aabb::cube(params.bbox_half)?;
    let mut field = VoxelField::empty(resolution, bbox)?;
    let h = field.voxel_size();
    let s = params.size;
    let fin = if kind == PrimitiveKind::AsymmetricMarker {
        params.fin_length.max(0.0)
    } else {
        0.0
    };
    let fin_thickness = h[1] * 1.5;
    let inside: Box<dyn Fn(Vec3) -> bool> = match kind {
        PrimitiveKind::Sphere => Box::new(move |p: Vec3| p.norm() < s),
        _ => Box::new(move |p: Vec3| {
            let body = p.x.abs() < s && p.y.abs() < s && p.z.abs() < s;
            let plate = p.x >= s && p.x < s + fin && p.y > -s && p.y < -s + fin_thickness && p.z.abs() < s;
            body || plate
        }),
    };
    let marker_half = s * params.marker_fraction;
    let marker_depth = h[0] * 1.5;
    let color_at = |p: Vec3| -> Rgb {
        match kind {
            PrimitiveKind::TwoToneCube if p.y < 0.0 => params.accent,
            PrimitiveKind::AsymmetricMarker
                if p.x > s - marker_depth && p.y.abs() < marker_half && p.z.abs() < marker_half =>
            {
                params.accent
            }
            _ => params.color,
        }
    };
    let total = (SUBSAMPLES * SUBSAMPLES * SUBSAMPLES) as f64;
    let [nx, ny, nz] = resolution;
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let c = field.voxel_center(i, j, k);
                let mut hits = 0usize;
                for sk in 0..SUBSAMPLES {
                    for sj in 0..SUBSAMPLES {
                        for si in 0..SUBSAMPLES {
                            let off = |n: usize, hh: f64| ((n as f64 + 0.5) / SUBSAMPLES as f64 - 0.5) * hh;
                            let p = c + Vec3::new(off(si, h[0]), off(sj, h[1]), off(sk, h[2]));
                            if inside(p) {
                                hits += 1;
                            }
                        }
                    }
                }
                let idx = field.index(i, j, k);
                field.densities[idx] = (params.density * hits as f64 / total) as f32;
                // color the voxel even when empty so interpolation near the
                // surface does not bleed black into the shape
                let col = color_at(c);
                field.colors[idx] = [col[0] as f32, col[1] as f32, col[2] as f32];
            }
        }
    }
    Ok(field)
}
