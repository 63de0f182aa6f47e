//! Bounded viewpoint distribution: `v = a·tanh(u) + b`, `u ~ N(μ, diag σ²)`.
//!
//! Sampling keeps the standard-normal draw `ε` (with `u = μ + σε`) next to
//! each viewpoint so the gradient estimators can reuse it.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Viewpoint, ViewpointBounds, DIM};

pub const SIGMA_FLOOR: f64 = 1e-3;

const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistributionParams {
    pub mu: [f64; DIM],
    pub sigma: [f64; DIM],
}

impl Default for DistributionParams {
    /// `μ = 0`, `σ = 0.5`.
    fn default() -> Self {
        DistributionParams {
            mu: [0.0; DIM],
            sigma: [0.5; DIM],
        }
    }
}

impl DistributionParams {
    pub fn new(mu: [f64; DIM], sigma: [f64; DIM]) -> Result<Self> {
        let p = DistributionParams { mu, sigma };
        p.validate(SIGMA_FLOOR)?;
        Ok(p)
    }

    pub fn validate(&self, floor: f64) -> Result<()> {
        if self.mu.iter().chain(&self.sigma).any(|x| !x.is_finite()) {
            return Err(Error::invalid("distribution parameters must be finite"));
        }
        if let Some(d) = self.sigma.iter().position(|&s| s < floor) {
            return Err(Error::invalid(format!(
                "sigma[{d}] = {} is below the floor {floor}",
                self.sigma[d]
            )));
        }
        Ok(())
    }

    pub fn clamp_sigma(&mut self, floor: f64) {
        for s in &mut self.sigma {
            *s = s.max(floor);
        }
    }
}

/// `log(1 − tanh²(x))` evaluated as `2(log 2 − |x| − log(1 + e^{−2|x|}))`,
/// which stays finite where `tanh²(x)` rounds to 1.
pub fn log1m_tanh_sq(x: f64) -> f64 {
    let ax = x.abs();
    2.0 * (std::f64::consts::LN_2 - ax - (-2.0 * ax).exp().ln_1p())
}

/// `v = a·tanh(u) + b`, nudged inward so every component stays strictly
/// inside the open box even when `tanh` saturates.
pub fn transform(u: &[f64; DIM], bounds: &ViewpointBounds) -> Viewpoint {
    let (a, b) = (bounds.scale(), bounds.offset());
    let mut v = [0.0; DIM];
    for d in 0..DIM {
        let x = a[d] * u[d].tanh() + b[d];
        let lo = bounds.min()[d].next_up();
        let hi = bounds.max()[d].next_down();
        v[d] = x.clamp(lo, hi);
    }
    Viewpoint(v)
}

/// `u = atanh((v − b)/a)`; fails on or outside the boundary.
pub fn inverse_transform(v: &Viewpoint, bounds: &ViewpointBounds) -> Result<[f64; DIM]> {
    let (a, b) = (bounds.scale(), bounds.offset());
    let mut u = [0.0; DIM];
    for d in 0..DIM {
        let s = (v.0[d] - b[d]) / a[d];
        if !(s > -1.0 && s < 1.0) {
            return Err(Error::Domain(format!(
                "viewpoint component {d} = {} is not strictly inside ({}, {})",
                v.0[d],
                bounds.min()[d],
                bounds.max()[d]
            )));
        }
        u[d] = s.atanh();
    }
    Ok(u)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub epsilon: [f64; DIM],
    pub viewpoint: Viewpoint,
}

pub fn draw_epsilon<R: Rng + ?Sized>(rng: &mut R) -> [f64; DIM] {
    let mut e = [0.0; DIM];
    for x in &mut e {
        *x = rng.sample(StandardNormal);
    }
    e
}

pub fn latent(params: &DistributionParams, epsilon: &[f64; DIM]) -> [f64; DIM] {
    let mut u = [0.0; DIM];
    for d in 0..DIM {
        u[d] = params.mu[d] + params.sigma[d] * epsilon[d];
    }
    u
}

/// Draws `k` reparameterized samples `v = transform(μ + σε)`.
pub fn sample<R: Rng + ?Sized>(
    params: &DistributionParams,
    bounds: &ViewpointBounds,
    k: usize,
    rng: &mut R,
) -> Vec<Sample> {
    (0..k)
        .map(|_| {
            let epsilon = draw_epsilon(rng);
            Sample {
                epsilon,
                viewpoint: transform(&latent(params, &epsilon), bounds),
            }
        })
        .collect()
}

/// One-dimensional log density of `v = a·tanh(u) + b`.
pub fn log_density_1d(v: f64, mu: f64, sigma: f64, a: f64, b: f64) -> Result<f64> {
    let s = (v - b) / a;
    if !(s > -1.0 && s < 1.0) {
        return Err(Error::Domain(format!("{v} is not strictly inside the support")));
    }
    let u = s.atanh();
    let z = (u - mu) / sigma;
    Ok(-0.5 * z * z - HALF_LOG_2PI - sigma.ln() - a.ln() - log1m_tanh_sq(u))
}

/// `log p(v)`, summed over the independent dimensions.
pub fn log_density(v: &Viewpoint, params: &DistributionParams, bounds: &ViewpointBounds) -> Result<f64> {
    let (a, b) = (bounds.scale(), bounds.offset());
    (0..DIM).try_fold(0.0, |acc, d| {
        Ok(acc + log_density_1d(v.0[d], params.mu[d], params.sigma[d], a[d], b[d])?)
    })
}

/// Negative log density of the sample generated by `ε`, i.e. the per-sample
/// entropy term `Σ_d ε²/2 + log(2π)/2 + log σ + log(1 − tanh²(μ + σε)) + log a`.
pub fn neg_log_density_at(params: &DistributionParams, bounds: &ViewpointBounds, epsilon: &[f64; DIM]) -> f64 {
    let a = bounds.scale();
    (0..DIM)
        .map(|d| {
            let e = epsilon[d];
            0.5 * e * e
                + HALF_LOG_2PI
                + params.sigma[d].ln()
                + log1m_tanh_sq(params.mu[d] + params.sigma[d] * e)
                + a[d].ln()
        })
        .sum()
}

/// Monte Carlo entropy estimate and its standard error over fixed draws.
pub fn entropy_from_epsilons(
    params: &DistributionParams,
    bounds: &ViewpointBounds,
    epsilons: &[[f64; DIM]],
) -> (f64, f64) {
    let n = epsilons.len() as f64;
    let terms: Vec<f64> = epsilons.iter().map(|e| neg_log_density_at(params, bounds, e)).collect();
    let mean = terms.iter().sum::<f64>() / n;
    let var = if terms.len() > 1 {
        terms.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, (var / n).sqrt())
}

/// Monte Carlo entropy estimate from `k` fresh draws.
pub fn entropy<R: Rng + ?Sized>(params: &DistributionParams, bounds: &ViewpointBounds, k: usize, rng: &mut R) -> f64 {
    let eps: Vec<_> = (0..k.max(1)).map(|_| draw_epsilon(rng)).collect();
    entropy_from_epsilons(params, bounds, &eps).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_bounds() -> ViewpointBounds {
        ViewpointBounds::new([-1.0; DIM], [1.0; DIM]).unwrap()
    }

    #[test]
    fn zero_latent_maps_to_midpoint() {
        let b = ViewpointBounds::paper_full();
        assert_eq!(transform(&[0.0; DIM], &b).0, *b.offset());
    }

    #[test]
    fn saturation_stays_inside() {
        let b = ViewpointBounds::paper_full();
        let v = transform(&[20.0; DIM], &b);
        for d in 0..DIM {
            assert!(b.max()[d] - v.0[d] < 1e-9);
            assert!(v.0[d] < b.max()[d]);
        }
        assert!(b.contains_strictly(&transform(&[-40.0; DIM], &b).0));
    }

    #[test]
    fn tanh_half_matches_high_precision_value() {
        // mpmath, 40 digits: tanh(0.5) = 0.46211715726000975850...
        let v = transform(&[0.5; DIM], &unit_bounds());
        assert!((v.0[0] - 0.462_117_157_260_009_76).abs() < 1e-15);
    }

    #[test]
    fn stable_log1m_tanh_sq() {
        for x in [-3.0, -0.3, 0.0, 0.7, 2.5] {
            let direct = (1.0 - f64::tanh(x).powi(2)).ln();
            assert!((log1m_tanh_sq(x) - direct).abs() < 1e-12);
        }
        // tanh(40)^2 rounds to 1 in f64; the identity gives ~ 2 log 2 - 80
        assert!((log1m_tanh_sq(40.0) - (2.0 * std::f64::consts::LN_2 - 80.0)).abs() < 1e-12);
    }

    #[test]
    fn sampling_is_seeded() {
        let b = ViewpointBounds::paper_full();
        let p = DistributionParams::default();
        let s1 = sample(&p, &b, 5, &mut ChaCha8Rng::seed_from_u64(9));
        let s2 = sample(&p, &b, 5, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(s1, s2);
        assert_eq!(sample(&p, &b, 1, &mut ChaCha8Rng::seed_from_u64(9)).len(), 1);
    }

    #[test]
    fn density_symmetry_for_centered_params() {
        let b = ViewpointBounds::paper_full();
        let p = DistributionParams::new([0.0; DIM], [0.3, 0.5, 0.7, 1.1, 2.0, 0.05]).unwrap();
        let w = [40.0, -7.0, 12.0, 0.2, -0.9, 0.01];
        let mut plus = *b.offset();
        let mut minus = *b.offset();
        for d in 0..DIM {
            plus[d] += w[d];
            minus[d] -= w[d];
        }
        let lp = log_density(&Viewpoint(plus), &p, &b).unwrap();
        let lm = log_density(&Viewpoint(minus), &p, &b).unwrap();
        assert!((lp - lm).abs() < 1e-12);
    }

    #[test]
    fn boundary_is_domain_error() {
        let b = ViewpointBounds::paper_full();
        let p = DistributionParams::default();
        let mut v = *b.offset();
        v[1] = 30.0;
        assert!(matches!(log_density(&Viewpoint(v), &p, &b), Err(Error::Domain(_))));
        v[1] = 31.0;
        assert!(log_density(&Viewpoint(v), &p, &b).is_err());
    }

    #[test]
    fn log_density_matches_negated_entropy_term() {
        let b = ViewpointBounds::paper_full();
        let p = DistributionParams::new([0.3, -0.2, 0.1, 0.0, 0.5, -1.0], [0.5, 0.8, 0.2, 1.0, 0.4, 0.6]).unwrap();
        let e = [0.1, -1.2, 0.7, 2.0, -0.4, 0.9];
        let v = transform(&latent(&p, &e), &b);
        let lp = log_density(&v, &p, &b).unwrap();
        assert!((lp + neg_log_density_at(&p, &b, &e)).abs() < 1e-8);
    }

    #[test]
    fn params_validation() {
        assert!(DistributionParams::new([0.0; DIM], [1e-4; DIM]).is_err());
        assert!(DistributionParams::new([f64::NAN; DIM], [1.0; DIM]).is_err());
        let mut p = DistributionParams {
            mu: [0.0; DIM],
            sigma: [-1.0; DIM],
        };
        p.clamp_sigma(SIGMA_FLOOR);
        assert_eq!(p.sigma, [SIGMA_FLOOR; DIM]);
    }
}
