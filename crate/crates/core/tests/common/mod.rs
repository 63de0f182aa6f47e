//! Independent oracles shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use nalgebra::{Unit, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use viewfool::classifier::BuiltinClassifier;
use viewfool::distribution::{log_density_1d, DistributionParams};
use viewfool::estimator::GradientPair;
use viewfool::field::{Aabb, VoxelField};
use viewfool::geometry::{Ray, Vec3, Viewpoint, ViewpointBounds, DIM};
use viewfool::harness::Target;
use viewfool::render::{composite_weights, sample_quadrature};
use viewfool::scenario::{wedge, Scenario, WedgeParams};

pub const NO_FREEZE: [Option<f64>; DIM] = [None; DIM];

pub fn wedge_fixture() -> (Scenario, BuiltinClassifier) {
    let scenario = wedge(&WedgeParams::default()).expect("wedge scenario");
    let classifier = scenario.build_classifier().expect("wedge classifier");
    (scenario, classifier)
}

pub fn wedge_target<'a>(scenario: &'a Scenario, classifier: &'a BuiltinClassifier) -> Target<'a> {
    Target {
        scene: &scenario.scene,
        classifier,
        render: &scenario.render,
        bounds: &scenario.bounds,
        frozen: &NO_FREEZE,
    }
}

/// `‖v − v0‖²` in raw viewpoint units.
pub fn quadratic_loss(v: &Viewpoint, v0: &[f64; DIM]) -> f64 {
    v.0.iter().zip(v0).map(|(a, b)| (a - b).powi(2)).sum()
}

fn smoothed_1d(mu: f64, sigma: f64, a: f64, b: f64, v0: f64, eps: &[f64]) -> f64 {
    eps.iter()
        .map(|e| (a * (mu + sigma * e).tanh() + b - v0).powi(2))
        .sum::<f64>()
        / eps.len() as f64
}

/// Natural gradient of `E[‖v − v0‖²]` by central differences over a fixed
/// set of normal draws. The loss separates over dimensions, so each
/// coordinate only needs its own one-dimensional expectation; the Fisher
/// matrix of the Gaussian in `(μ, σ)` is `diag(1/σ², 2/σ²)`.
pub fn natural_gradient_fd(
    params: &DistributionParams,
    bounds: &ViewpointBounds,
    v0: &[f64; DIM],
    draws: usize,
    seed: u64,
    h: f64,
) -> GradientPair {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps: Vec<f64> = (0..draws).map(|_| StandardNormal.sample(&mut rng)).collect();
    let (a, b) = (bounds.scale(), bounds.offset());
    let mut g = GradientPair::default();
    for d in 0..DIM {
        let (m, s) = (params.mu[d], params.sigma[d]);
        let j = |m: f64, s: f64| smoothed_1d(m, s, a[d], b[d], v0[d], &eps);
        let dj_dmu = (j(m + h, s) - j(m - h, s)) / (2.0 * h);
        let dj_dsigma = (j(m, s + h) - j(m, s - h)) / (2.0 * h);
        g.grad_mu[d] = s * s * dj_dmu;
        g.grad_sigma[d] = s * s / 2.0 * dj_dsigma;
    }
    g
}

/// Transmittance error of midpoint quadrature through a uniform cube of
/// density `tau` crossed along a full edge of length 2.
pub fn slab_transmittance_error(tau: f32, n: usize) -> f64 {
    let field = VoxelField::new(
        [4, 4, 4],
        Aabb::cube(1.0).unwrap(),
        vec![tau; 64],
        vec![[0.5, 0.5, 0.5]; 64],
    )
    .unwrap();
    let ray = Ray {
        origin: Vec3::new(-3.0, 0.1, -0.2),
        direction: Vec3::new(1.0, 0.0, 0.0),
        t_near: 2.0,
        t_far: 4.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let t = sample_quadrature(ray.t_near, ray.t_far, n, false, &mut rng);
    let (w, _) = composite_weights(&field, &ray, &t);
    let transmittance = 1.0 - w.iter().sum::<f64>();
    (transmittance - (-2.0 * tau as f64).exp()).abs()
}

/// Intrinsic z-y-x rotation built from unit quaternions.
pub fn quaternion_rotation(psi: f64, theta: f64, phi: f64) -> [[f64; 3]; 3] {
    let q = UnitQuaternion::from_axis_angle(&Unit::new_normalize(Vector3::z()), psi.to_radians())
        * UnitQuaternion::from_axis_angle(&Unit::new_normalize(Vector3::y()), theta.to_radians())
        * UnitQuaternion::from_axis_angle(&Unit::new_normalize(Vector3::x()), phi.to_radians());
    let m = q.to_rotation_matrix();
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, x) in row.iter_mut().enumerate() {
            *x = m[(i, j)];
        }
    }
    out
}

pub fn quaternion_apply(psi: f64, theta: f64, phi: f64, p: [f64; 3]) -> [f64; 3] {
    let m = quaternion_rotation(psi, theta, phi);
    let mut out = [0.0; 3];
    for i in 0..3 {
        out[i] = (0..3).map(|j| m[i][j] * p[j]).sum();
    }
    out
}

/// Misclassified fraction over the midpoints of an `m^6` grid on the bounds.
pub fn grid_volume_fraction(target: &Target, m: usize) -> f64 {
    let total = m.pow(DIM as u32);
    let (lo, hi) = (target.bounds.min(), target.bounds.max());
    let hits: usize = (0..total)
        .into_par_iter()
        .map(|mut idx| {
            let mut v = [0.0; DIM];
            for d in 0..DIM {
                let i = idx % m;
                idx /= m;
                v[d] = lo[d] + (hi[d] - lo[d]) * (i as f64 + 0.5) / m as f64;
            }
            usize::from(target.misclassified(&Viewpoint(v)).unwrap())
        })
        .sum();
    hits as f64 / total as f64
}

/// Composite Simpson rule of the 1-D density over the open interval.
pub fn integrate_density_1d(mu: f64, sigma: f64, a: f64, b: f64, intervals: usize) -> f64 {
    let (lo, hi) = (b - a, b + a);
    let h = (hi - lo) / intervals as f64;
    let f = |v: f64| log_density_1d(v, mu, sigma, a, b).map(f64::exp).unwrap_or(0.0);
    let mut sum = 0.0;
    for i in 0..=intervals {
        let w = if i == 0 || i == intervals {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        sum += w * f(lo + i as f64 * h);
    }
    sum * h / 3.0
}

/// Chi-square p-value of `n` samples of one coordinate against the exact
/// bin probabilities `Φ((atanh((v−b)/a) − μ)/σ)`.
pub fn chi_square_p(values: &[f64], mu: f64, sigma: f64, a: f64, b: f64, bins: usize) -> f64 {
    let normal = Normal::new(mu, sigma).unwrap();
    let cdf = |v: f64| {
        let s = ((v - b) / a).clamp(-1.0, 1.0);
        if s <= -1.0 {
            0.0
        } else if s >= 1.0 {
            1.0
        } else {
            normal.cdf(s.atanh())
        }
    };
    let n = values.len() as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| b - a + 2.0 * a * i as f64 / bins as f64).collect();
    let mut counts = vec![0usize; bins];
    for &v in values {
        let i = (((v - (b - a)) / (2.0 * a)) * bins as f64)
            .floor()
            .clamp(0.0, (bins - 1) as f64) as usize;
        counts[i] += 1;
    }
    // merge sparse bins so each expected count is at least 5
    let mut stat = 0.0;
    let mut cells = 0;
    let (mut obs, mut exp) = (0.0, 0.0);
    for i in 0..bins {
        obs += counts[i] as f64;
        exp += n * (cdf(edges[i + 1]) - cdf(edges[i]));
        if exp >= 5.0 || i == bins - 1 {
            if exp > 0.0 {
                stat += (obs - exp).powi(2) / exp;
                cells += 1;
            }
            obs = 0.0;
            exp = 0.0;
        }
    }
    1.0 - ChiSquared::new((cells - 1) as f64).unwrap().cdf(stat)
}

pub fn random_field(rng: &mut impl Rng, n: usize) -> VoxelField {
    let count = n * n * n;
    let densities = (0..count)
        .map(|_| {
            if rng.gen_bool(0.3) {
                0.0
            } else {
                rng.gen_range(0.0..200.0f32)
            }
        })
        .collect();
    let colors = (0..count).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect();
    VoxelField::new([n; 3], Aabb::cube(1.0).unwrap(), densities, colors).unwrap()
}

pub fn random_ray(rng: &mut impl Rng) -> Ray {
    let dir = Vec3::new(
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
    );
    let dir = if dir.norm() < 1e-3 {
        Vec3::new(1.0, 0.0, 0.0)
    } else {
        dir.normalized()
    };
    let origin = Vec3::new(
        rng.gen_range(-1.5..1.5),
        rng.gen_range(-1.5..1.5),
        rng.gen_range(-1.5..1.5),
    );
    let t_near = rng.gen_range(0.0..0.5);
    Ray {
        origin,
        direction: dir,
        t_near,
        t_far: t_near + rng.gen_range(0.1..4.0),
    }
}
