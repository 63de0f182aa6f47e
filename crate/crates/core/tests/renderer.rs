mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use viewfool::field::{build_primitive_scene, Aabb, PrimitiveKind, ShapeParams, VoxelField};
use viewfool::geometry::{Viewpoint, ViewpointBounds};
use viewfool::render::{composite_ray, composite_weights, render, sample_quadrature, RenderConfig};

#[test]
fn slab_transmittance_matches_closed_form() {
    assert!(common::slab_transmittance_error(1.0, 1024) < 1e-3);
    assert!(common::slab_transmittance_error(5.0, 1024) < 1e-3);
}

#[test]
fn slab_error_is_first_order() {
    let errors: Vec<f64> = [32, 64, 128, 256]
        .iter()
        .map(|&n| common::slab_transmittance_error(1.0, n))
        .collect();
    for pair in errors.windows(2) {
        let ratio = pair[1] / pair[0];
        assert!((0.4..=0.6).contains(&ratio), "{errors:?}");
    }
}

#[test]
fn weights_are_a_subprobability_on_random_rays() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let field = common::random_field(&mut rng, 8);
    for _ in 0..10_000 {
        let ray = common::random_ray(&mut rng);
        let n = rng.gen_range(2..64);
        let t = sample_quadrature(ray.t_near, ray.t_far, n, true, &mut rng);
        let (w, _) = composite_weights(&field, &ray, &t);
        assert!(w.iter().all(|&x| x >= 0.0));
        assert!(w.iter().sum::<f64>() <= 1.0 + 1e-9);
    }
}

#[test]
fn empty_field_shows_the_background() {
    let field = VoxelField::empty([4; 3], Aabb::cube(1.0).unwrap()).unwrap();
    let cfg = RenderConfig {
        width: 8,
        height: 8,
        background: [0.25, 0.5, 0.75],
        ..RenderConfig::default()
    };
    let bounds = ViewpointBounds::paper_full();
    let img = render(&field, &bounds.midpoint(), &bounds, &cfg).unwrap();
    assert!(img.pixels().iter().all(|p| *p == [0.25, 0.5, 0.75]));
}

#[test]
fn renders_are_deterministic_and_seed_dependent() {
    let field = build_primitive_scene(PrimitiveKind::TwoToneCube, [16; 3], &ShapeParams::default()).unwrap();
    let bounds = ViewpointBounds::paper_full();
    let cfg = RenderConfig {
        width: 16,
        height: 16,
        samples_per_ray: 8,
        ..RenderConfig::default()
    };
    let v = Viewpoint([20.0, 5.0, 80.0, 0.1, 0.0, -0.1]);
    let a = render(&field, &v, &bounds, &cfg).unwrap();
    let b = render(&field, &v, &bounds, &cfg).unwrap();
    let c = render(&field, &v, &bounds, &cfg.with_seed(9)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn out_of_bounds_viewpoint_is_rejected() {
    let field = VoxelField::empty([2; 3], Aabb::cube(1.0).unwrap()).unwrap();
    let bounds = ViewpointBounds::paper_full();
    let v = Viewpoint([0.0, 0.0, 10.0, 0.0, 0.0, 0.0]);
    assert!(render(&field, &v, &bounds, &RenderConfig::default()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn composited_color_stays_in_range(seed in 0u64..10_000, bg in prop::array::uniform3(0.0f64..=1.0)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let field = common::random_field(&mut rng, 4);
        let ray = common::random_ray(&mut rng);
        let t = sample_quadrature(ray.t_near, ray.t_far, 16, true, &mut rng);
        let c = composite_ray(&field, &ray, &t, bg);
        prop_assert!(c.iter().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn quadrature_points_increase_within_range(near in 0.0f64..3.0, len in 0.01f64..5.0, n in 2usize..200, strat in any::<bool>(), seed in 0u64..100) {
        let t = sample_quadrature(near, near + len, n, strat, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(t.len(), n);
        prop_assert!(t.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(t[0] >= near && t[n - 1] <= near + len);
    }
}
