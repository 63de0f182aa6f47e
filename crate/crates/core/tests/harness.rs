mod common;

use viewfool::classifier::{ClassifierKind, ClassifierSpec, ImageClassifier};
use viewfool::distribution::DistributionParams;
use viewfool::field::{build_primitive_scene, PrimitiveKind, SceneSpec, ShapeParams};
use viewfool::geometry::{ViewpointBounds, DIM};
use viewfool::harness::{
    emit_dataset, random_search_baseline, read_manifest, rerender_row, transferability_matrix, write_reports_csv,
    TransferSource, MANIFEST_FILE,
};
use viewfool::render::RenderConfig;

fn constant(class_count: usize, winner: usize) -> Box<dyn ImageClassifier> {
    let mut bias = vec![0.0; class_count];
    bias[winner] = 1.0;
    ClassifierSpec {
        class_count,
        input_size: (4, 4),
        model: ClassifierKind::LinearPixels {
            weights: vec![vec![0.0; 48]; class_count],
            bias,
        },
    }
    .build()
    .unwrap()
}

fn scenes() -> Vec<SceneSpec> {
    PrimitiveKind::ALL
        .iter()
        .enumerate()
        .map(|(i, &k)| SceneSpec {
            field: build_primitive_scene(k, [12; 3], &ShapeParams::default()).unwrap(),
            label: i,
            name: k.as_str().into(),
        })
        .collect()
}

#[test]
fn dataset_is_reproducible_from_its_manifest() {
    let scenes = scenes();
    let bounds = ViewpointBounds::paper_full();
    let cfg = RenderConfig {
        width: 12,
        height: 12,
        samples_per_ray: 8,
        ..RenderConfig::default()
    };
    let entries: Vec<_> = scenes.iter().map(|s| (s, DistributionParams::default())).collect();
    let dir = tempfile::tempdir().unwrap();
    let rows = emit_dataset(&entries, 5, &cfg, &bounds, 42, dir.path()).unwrap();
    assert_eq!(rows.len(), 20);
    assert_eq!(read_manifest(&dir.path().join(MANIFEST_FILE)).unwrap(), rows);
    for row in &rows {
        assert!(bounds.contains(&row.viewpoint));
        let on_disk = std::fs::read(dir.path().join(&row.file)).unwrap();
        assert_eq!(rerender_row(dir.path(), row).unwrap(), on_disk, "{}", row.file);
    }
    let again = tempfile::tempdir().unwrap();
    assert_eq!(
        emit_dataset(&entries, 5, &cfg, &bounds, 42, again.path()).unwrap(),
        rows
    );
}

#[test]
fn duplicate_scene_names_are_rejected() {
    let scenes = scenes();
    let entries = vec![
        (&scenes[0], DistributionParams::default()),
        (&scenes[0], DistributionParams::default()),
    ];
    let dir = tempfile::tempdir().unwrap();
    assert!(emit_dataset(
        &entries,
        1,
        &RenderConfig::default(),
        &ViewpointBounds::paper_full(),
        0,
        dir.path()
    )
    .is_err());
}

#[test]
fn transfer_matrix_reflects_each_classifier() {
    let scenes = scenes();
    let always_zero = constant(4, 0);
    let always_three = constant(4, 3);
    let sources: Vec<_> = scenes[..2]
        .iter()
        .map(|s| TransferSource {
            scene: s,
            params: DistributionParams::default(),
        })
        .collect();
    let cfg = RenderConfig {
        width: 8,
        height: 8,
        samples_per_ray: 4,
        ..RenderConfig::default()
    };
    let m = transferability_matrix(
        &sources,
        &[always_zero.as_ref(), always_three.as_ref()],
        &cfg,
        &ViewpointBounds::paper_full(),
        &[None; DIM],
        10,
        1,
    )
    .unwrap();
    // scene 0 (label 0) fools only the second classifier, scene 1 both
    assert_eq!(m, vec![vec![0.0, 1.0], vec![1.0, 1.0]]);
}

#[test]
fn random_search_estimates_the_volume_fraction() {
    let (scenario, classifier) = common::wedge_fixture();
    let target = common::wedge_target(&scenario, &classifier);
    let report = random_search_baseline(&target, 400, 9).unwrap();
    assert_eq!(report.queries, 400);
    assert!(report.rate_dist < 0.2, "{}", report.rate_dist);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    write_reports_csv(&path, &[report]).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("method,scene,rate_dist,rate_opt,rate_real_proxy,std_psi"));
    assert_eq!(text.lines().count(), 2);
}
