use copg_core::ground::{fit_ground_plane, split_ground};
use copg_core::proposal::{ransac_params, run_pipeline, PipelineStep, SceneBundle, Stage};
use copg_core::synth::{generate_corpus, generate_scene, CorpusKnobs, ObjectKind, PointLabel};
use copg_core::{iou, PipelineConfig};
use proptest::prelude::*;

fn scenes(n: usize, seed: u64) -> Vec<copg_core::synth::SyntheticScene> {
    generate_corpus(n, seed, &CorpusKnobs::default())
        .iter()
        .enumerate()
        .map(|(i, s)| generate_scene(s, &format!("{i}")).unwrap())
        .collect()
}

#[test]
fn ground_split_agrees_with_generator_labels() {
    let cfg = PipelineConfig::default();
    for scene in scenes(5, 2) {
        let cloud = &scene.bundle.cloud;
        let plane = fit_ground_plane(cloud, &ransac_params(&cfg)).unwrap();
        let split = split_ground(cloud, &plane, cfg.ransac_inlier_dist);
        let truth = scene.point_labels.iter().filter(|&&l| l == PointLabel::Ground).count();
        let hit = split
            .ground_indices
            .iter()
            .filter(|&&i| scene.point_labels[i] == PointLabel::Ground)
            .count();
        assert!(hit as f64 / truth as f64 >= 0.99);
        assert!(hit as f64 / split.ground_indices.len() as f64 >= 0.99);
    }
}

#[test]
fn stages_only_shrink_and_keep_order() {
    let cfg = PipelineConfig::default();
    for scene in scenes(4, 8) {
        let out = run_pipeline(&scene.bundle, &cfg).unwrap();
        let [a, b, c] = out.stage_counts();
        assert!(a >= b && b >= c);
        let ids = |ps: &[copg_core::proposal::Proposal]| ps.iter().map(|p| p.source_cluster_id).collect::<Vec<_>>();
        let init = ids(&out.initial);
        let mid = ids(&out.intermediate);
        let fin = ids(&out.proposals.proposals);
        assert!(mid.iter().all(|i| init.contains(i)));
        assert!(fin.iter().all(|i| mid.contains(i)));
        assert!(out.proposals.proposals.iter().all(|p| p.stage == Stage::Final));
        assert!(out.skipped.is_empty());
    }
}

#[test]
fn missing_inputs_skip_their_steps() {
    let mut bundle: SceneBundle = scenes(1, 4).remove(0).bundle;
    bundle.seg = None;
    bundle.detections = None;
    let out = run_pipeline(&bundle, &PipelineConfig::default()).unwrap();
    assert_eq!(
        out.skipped,
        vec![PipelineStep::BackgroundRemoval, PipelineStep::CommonSuppression]
    );
    assert_eq!(out.initial.len(), out.proposals.proposals.len());
}

#[test]
fn planted_corner_cases_survive_and_common_objects_do_not() {
    let cfg = PipelineConfig::default();
    for scene in scenes(6, 13) {
        let out = run_pipeline(&scene.bundle, &cfg).unwrap();
        let finals = &out.proposals.proposals;
        for (_, b) in scene.ground_truth_boxes(ObjectKind::Corner) {
            assert!(finals.iter().any(|p| iou(&p.bbox, &b) >= 0.5));
        }
        for (_, b) in scene.ground_truth_boxes(ObjectKind::Common) {
            assert!(finals.iter().all(|p| iou(&p.bbox, &b) < 0.5));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn filters_are_monotone_in_their_thresholds(seed in 0u64..1000, lo in 0.0f64..0.5, gap in 0.0f64..0.5) {
        let scene = scenes(1, seed).remove(0);
        let run = |bg: f64, sup: f64| {
            let cfg = PipelineConfig { bg_ratio_max: bg, suppression_iou_max: sup, ..PipelineConfig::default() };
            run_pipeline(&scene.bundle, &cfg).unwrap().proposals.proposals.len()
        };
        prop_assert!(run(lo, 0.25) <= run(lo + gap, 0.25));
        prop_assert!(run(0.45, lo) <= run(0.45, lo + gap));
    }
}
