//! Viewpoint parameters, camera poses, and pinhole ray generation.
//!
//! A viewpoint is the 6-vector `[psi, theta, phi, dx, dy, dz]`: three
//! Tait–Bryan angles in degrees (yaw about z, pitch about the rotated y, roll
//! about the twice-rotated x) followed by a world-frame translation of the
//! camera center. The rotation orbits the camera about the scene origin, so a
//! camera that looks at the origin keeps looking at it; the translation is
//! applied afterwards and does not change the orientation.

use std::ops::{Add, Index, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of viewpoint parameters.
pub const DIM: usize = 6;

/// Parameter names in storage order.
pub const PARAM_NAMES: [&str; DIM] = ["psi", "theta", "phi", "dx", "dy", "dz"];

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Vec3 {
        self * (1.0 / self.norm())
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

/// Row-major 3×3 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat3(pub [[f64; 3]; 3]);

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    pub fn from_columns(c0: Vec3, c1: Vec3, c2: Vec3) -> Mat3 {
        Mat3([[c0.x, c1.x, c2.x], [c0.y, c1.y, c2.y], [c0.z, c1.z, c2.z]])
    }

    pub fn column(&self, j: usize) -> Vec3 {
        Vec3::new(self.0[0][j], self.0[1][j], self.0[2][j])
    }

    pub fn transpose(&self) -> Mat3 {
        let m = &self.0;
        Mat3([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    pub fn determinant(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn mul_vec(&self, v: Vec3) -> Vec3 {
        let m = &self.0;
        Vec3::new(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )
    }

    /// `max |(RᵀR − I)_ij|`.
    pub fn orthonormality_error(&self) -> f64 {
        let p = self.transpose() * *self;
        let mut worst: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((p.0[i][j] - target).abs());
            }
        }
        worst
    }
}

impl Mul for Mat3 {
    type Output = Mat3;
    fn mul(self, o: Mat3) -> Mat3 {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| self.0[i][k] * o.0[k][j]).sum();
            }
        }
        Mat3(out)
    }
}

impl Index<(usize, usize)> for Mat3 {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.0[i][j]
    }
}

/// Per-component box `[v_min, v_max]` with the affine map `v = a·s + b`,
/// `s ∈ (-1, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBounds", into = "RawBounds")]
pub struct ViewpointBounds {
    v_min: [f64; DIM],
    v_max: [f64; DIM],
    a: [f64; DIM],
    b: [f64; DIM],
}

#[derive(Serialize, Deserialize)]
struct RawBounds {
    min: [f64; DIM],
    max: [f64; DIM],
}

impl TryFrom<RawBounds> for ViewpointBounds {
    type Error = Error;
    fn try_from(r: RawBounds) -> Result<Self> {
        ViewpointBounds::new(r.min, r.max)
    }
}

impl From<ViewpointBounds> for RawBounds {
    fn from(b: ViewpointBounds) -> Self {
        RawBounds {
            min: b.v_min,
            max: b.v_max,
        }
    }
}

impl ViewpointBounds {
    pub fn new(v_min: [f64; DIM], v_max: [f64; DIM]) -> Result<Self> {
        let mut a = [0.0; DIM];
        let mut b = [0.0; DIM];
        for i in 0..DIM {
            if !(v_min[i].is_finite() && v_max[i].is_finite()) || v_min[i] >= v_max[i] {
                return Err(Error::invalid(format!(
                    "bound {} requires finite v_min < v_max, got [{}, {}]",
                    PARAM_NAMES[i], v_min[i], v_max[i]
                )));
            }
            a[i] = (v_max[i] - v_min[i]) / 2.0;
            b[i] = (v_max[i] + v_min[i]) / 2.0;
        }
        Ok(ViewpointBounds { v_min, v_max, a, b })
    }

    /// ψ∈[−180°,180°], θ∈[−30°,30°], φ∈[20°,160°], Δx∈[−0.5,0.5],
    /// Δy∈[−1,1], Δz∈[−0.5,0.5].
    pub fn paper_full() -> Self {
        ViewpointBounds::new(
            [-180.0, -30.0, 20.0, -0.5, -1.0, -0.5],
            [180.0, 30.0, 160.0, 0.5, 1.0, 0.5],
        )
        .expect("static bounds are valid")
    }

    pub fn min(&self) -> &[f64; DIM] {
        &self.v_min
    }

    pub fn max(&self) -> &[f64; DIM] {
        &self.v_max
    }

    /// Half-widths `(v_max − v_min) / 2`.
    pub fn scale(&self) -> &[f64; DIM] {
        &self.a
    }

    /// Midpoints `(v_max + v_min) / 2`.
    pub fn offset(&self) -> &[f64; DIM] {
        &self.b
    }

    pub fn midpoint(&self) -> Viewpoint {
        Viewpoint(self.b)
    }

    pub fn contains(&self, values: &[f64; DIM]) -> bool {
        (0..DIM).all(|i| values[i] >= self.v_min[i] && values[i] <= self.v_max[i])
    }

    pub fn contains_strictly(&self, values: &[f64; DIM]) -> bool {
        (0..DIM).all(|i| values[i] > self.v_min[i] && values[i] < self.v_max[i])
    }

    pub fn check(&self, values: &[f64; DIM]) -> Result<()> {
        for i in 0..DIM {
            let x = values[i];
            if !(x >= self.v_min[i] && x <= self.v_max[i]) {
                return Err(Error::OutOfBounds {
                    index: i,
                    value: x,
                    min: self.v_min[i],
                    max: self.v_max[i],
                });
            }
        }
        Ok(())
    }

    pub fn clip(&self, values: [f64; DIM]) -> Viewpoint {
        let mut out = values;
        for (i, x) in out.iter_mut().enumerate() {
            *x = x.clamp(self.v_min[i], self.v_max[i]);
        }
        Viewpoint(out)
    }

    /// Log of the box volume, `Σ log(2 a_d)`: the entropy of the uniform
    /// distribution over the bounds.
    pub fn log_volume(&self) -> f64 {
        self.a.iter().map(|a| (2.0 * a).ln()).sum()
    }
}

/// Camera transformation parameters `[psi, theta, phi, dx, dy, dz]`, angles
/// in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Viewpoint(pub [f64; DIM]);

impl Viewpoint {
    pub const ZERO: Viewpoint = Viewpoint([0.0; DIM]);

    /// Constructs a viewpoint after checking it against `bounds`.
    pub fn new(values: [f64; DIM], bounds: &ViewpointBounds) -> Result<Self> {
        bounds.check(&values)?;
        Ok(Viewpoint(values))
    }

    pub fn values(&self) -> &[f64; DIM] {
        &self.0
    }

    pub fn psi(&self) -> f64 {
        self.0[0]
    }

    pub fn theta(&self) -> f64 {
        self.0[1]
    }

    pub fn phi(&self) -> f64 {
        self.0[2]
    }

    pub fn translation(&self) -> Vec3 {
        Vec3::new(self.0[3], self.0[4], self.0[5])
    }
}

fn rot_z(rad: f64) -> Mat3 {
    let (s, c) = rad.sin_cos();
    Mat3([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
}

fn rot_y(rad: f64) -> Mat3 {
    let (s, c) = rad.sin_cos();
    Mat3([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
}

fn rot_x(rad: f64) -> Mat3 {
    let (s, c) = rad.sin_cos();
    Mat3([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])
}

/// Intrinsic z-y′-x″ rotation `Rz(psi)·Ry(theta)·Rx(phi)`, angles in degrees.
pub fn rotation_matrix(psi: f64, theta: f64, phi: f64) -> Result<Mat3> {
    if !(psi.is_finite() && theta.is_finite() && phi.is_finite()) {
        return Err(Error::invalid(format!(
            "rotation angles must be finite, got ({psi}, {theta}, {phi})"
        )));
    }
    Ok(rot_z(psi.to_radians()) * rot_y(theta.to_radians()) * rot_x(phi.to_radians()))
}

/// Camera-to-world rotation and camera center. Columns of `rotation` are the
/// camera's right, up and backward axes; the camera looks along `-column(2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub rotation: Mat3,
    pub center: Vec3,
}

impl CameraPose {
    /// Camera at `center` looking at the scene origin, world up `+z`.
    pub fn look_at_origin(center: Vec3) -> Result<Self> {
        if !center.is_finite() || center.norm() == 0.0 {
            return Err(Error::invalid("camera center must be finite and nonzero"));
        }
        let back = center.normalized();
        let mut up_hint = Vec3::new(0.0, 0.0, 1.0);
        if back.cross(up_hint).norm() < 1e-9 {
            up_hint = Vec3::new(0.0, 1.0, 0.0);
        }
        let right = up_hint.cross(back).normalized();
        let up = back.cross(right);
        Ok(CameraPose {
            rotation: Mat3::from_columns(right, up, back),
            center,
        })
    }

    pub fn forward(&self) -> Vec3 {
        -self.rotation.column(2)
    }

    pub fn right(&self) -> Vec3 {
        self.rotation.column(0)
    }

    pub fn up(&self) -> Vec3 {
        self.rotation.column(1)
    }
}

/// Rotates the initial look-at-origin camera about the scene origin, then
/// offsets its center by the world-frame translation.
pub fn viewpoint_to_pose(v: &Viewpoint, bounds: &ViewpointBounds, init_center: Vec3) -> Result<CameraPose> {
    bounds.check(v.values())?;
    let initial = CameraPose::look_at_origin(init_center)?;
    let r = rotation_matrix(v.psi(), v.theta(), v.phi())?;
    Ok(CameraPose {
        rotation: r * initial.rotation,
        center: r.mul_vec(init_center) + v.translation(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
    pub t_near: f64,
    pub t_far: f64,
}

impl Ray {
    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

/// Pinhole camera model. `fov_deg` is the vertical field of view; pixels are
/// square.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pinhole {
    pub width: usize,
    pub height: usize,
    pub fov_deg: f64,
}

impl Pinhole {
    pub fn new(width: usize, height: usize, fov_deg: f64) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image dimensions must be at least 1"));
        }
        if !(fov_deg > 0.0 && fov_deg < 180.0) {
            return Err(Error::invalid(format!(
                "field of view must lie in (0, 180), got {fov_deg}"
            )));
        }
        Ok(Pinhole { width, height, fov_deg })
    }

    /// Camera-frame direction (unnormalized, `z = -1`) through the center of
    /// pixel `(row, col)`.
    pub fn camera_direction(&self, row: usize, col: usize) -> Vec3 {
        let half = (self.fov_deg.to_radians() / 2.0).tan();
        let aspect = self.width as f64 / self.height as f64;
        let x = ((col as f64 + 0.5) / self.width as f64 * 2.0 - 1.0) * half * aspect;
        let y = (1.0 - (row as f64 + 0.5) / self.height as f64 * 2.0) * half;
        Vec3::new(x, y, -1.0)
    }

    pub fn ray(&self, pose: &CameraPose, row: usize, col: usize, t_near: f64, t_far: f64) -> Ray {
        Ray {
            origin: pose.center,
            direction: pose.rotation.mul_vec(self.camera_direction(row, col)).normalized(),
            t_near,
            t_far,
        }
    }
}

/// One ray per pixel, row-major.
pub fn generate_rays(
    pose: &CameraPose,
    width: usize,
    height: usize,
    fov_deg: f64,
    t_near: f64,
    t_far: f64,
) -> Result<Vec<Ray>> {
    let cam = Pinhole::new(width, height, fov_deg)?;
    check_range(t_near, t_far)?;
    let mut rays = Vec::with_capacity(width * height);
    for row in 0..height {
        for col in 0..width {
            rays.push(cam.ray(pose, row, col, t_near, t_far));
        }
    }
    Ok(rays)
}

pub(crate) fn check_range(t_near: f64, t_far: f64) -> Result<()> {
    if !(t_near >= 0.0 && t_far > t_near && t_far.is_finite()) {
        return Err(Error::invalid(format!(
            "ray range requires 0 <= t_near < t_far, got [{t_near}, {t_far}]"
        )));
    }
    Ok(())
}

/// Row-major pixel index.
pub fn pixel_index(row: usize, col: usize, width: usize) -> usize {
    row * width + col
}

/// Inverse of [`pixel_index`].
pub fn pixel_coords(index: usize, width: usize) -> (usize, usize) {
    (index / width, index % width)
}
