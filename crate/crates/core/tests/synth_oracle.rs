mod oracles;

use copg_core::project_point;
use copg_core::synth::{
    default_camera, generate_corpus, generate_scene, CorpusKnobs, LidarSpec, ObjectKind, ObjectSpec, PointLabel,
    SceneSpec, Shape,
};
use oracles::raycast::{first_hit, nearest};

fn spec(objects: Vec<ObjectSpec>) -> SceneSpec {
    SceneSpec {
        seed: 1,
        ground_height: -1.73,
        lidar: LidarSpec::default(),
        objects,
        camera: default_camera(),
        range_jitter: 0.0,
        detection_jitter: 0.0,
    }
}

fn box_at(x: f64, y: f64, yaw: f64) -> ObjectSpec {
    ObjectSpec {
        shape: Shape::Box,
        position: [x, y, -1.73],
        yaw,
        extents: [1.6, 1.2, 1.8],
        kind: ObjectKind::Corner,
        category: "obstacle".into(),
    }
}

#[test]
fn box_hit_count_equals_independent_beam_count() {
    let s = spec(vec![box_at(20.0, 0.5, 30.0)]);
    let scene = generate_scene(&s, "one").unwrap();
    let mut expected = 0;
    for row in 0..s.lidar.rows {
        for col in 0..s.lidar.cols {
            let dir = s.lidar.beam(row, col);
            if let Some((t, Some(0))) = nearest(&s.objects, s.ground_height, [0.0; 3], dir) {
                if t <= s.lidar.max_range {
                    expected += 1;
                }
            }
        }
    }
    assert!(expected > 50);
    assert_eq!(scene.objects[0].hits, expected);
    let labeled = scene
        .point_labels
        .iter()
        .filter(|&&l| l == PointLabel::Object(0))
        .count();
    assert_eq!(labeled, expected);
}

#[test]
fn ranges_are_exact_and_unoccluded() {
    let s = spec(vec![
        box_at(12.0, -2.0, 10.0),
        box_at(25.0, 4.0, -40.0),
        ObjectSpec {
            shape: Shape::Cylinder,
            position: [15.0, 3.0, -1.73],
            yaw: 0.0,
            extents: [1.0, 1.0, 1.5],
            kind: ObjectKind::Corner,
            category: "barrel".into(),
        },
    ]);
    let scene = generate_scene(&s, "x").unwrap();
    for ((p, label), &(row, col)) in scene
        .bundle
        .cloud
        .points
        .iter()
        .zip(&scene.point_labels)
        .zip(&scene.beams)
    {
        let dir = s.lidar.beam(row, col);
        let range = p.range();
        let (t, hit) = nearest(&s.objects, s.ground_height, [0.0; 3], dir).expect("beam hits something");
        assert!((t - range).abs() < 1e-9, "range {range} vs {t}");
        let expected = hit.map_or(PointLabel::Ground, PointLabel::Object);
        assert_eq!(*label, expected);
        // No object surface strictly in front of the point.
        for o in &s.objects {
            if let Some(t) = first_hit(o, [0.0; 3], dir) {
                assert!(t >= range - 1e-9);
            }
        }
    }
}

#[test]
fn gt_boxes_contain_projected_object_points() {
    for s in generate_corpus(6, 3, &CorpusKnobs::default()) {
        let scene = generate_scene(&s, "c").unwrap();
        for (p, l) in scene.bundle.cloud.points.iter().zip(&scene.point_labels) {
            let PointLabel::Object(i) = *l else { continue };
            let (Some(b), Some((u, v))) = (scene.objects[i].gt_box, project_point(p, &s.camera)) else {
                continue;
            };
            assert!(u >= b.x - 1e-9 && u <= b.x2() + 1e-9 && v >= b.y - 1e-9 && v <= b.y2() + 1e-9);
        }
    }
}

#[test]
fn corpus_kind_counts_respect_knobs() {
    let knobs = CorpusKnobs::default();
    let corpus = generate_corpus(50, 21, &knobs);
    let mut totals = [0usize; 3];
    for s in &corpus {
        let count = |k| s.objects.iter().filter(|o| o.kind == k).count();
        let c = [
            count(ObjectKind::Corner),
            count(ObjectKind::Common),
            count(ObjectKind::BackgroundStructure),
        ];
        // Placement may drop an object that finds no free sector, never add one.
        assert!(c[0] <= knobs.corner_per_scene[1]);
        assert!(c[1] <= knobs.common_per_scene[1]);
        assert!(c[2] >= knobs.background_per_scene[0] && c[2] <= knobs.background_per_scene[1]);
        for k in 0..3 {
            totals[k] += c[k];
        }
    }
    // Uniform draws: the mean per scene should sit near the middle of each range.
    let mid = |r: [usize; 2]| (r[0] + r[1]) as f64 / 2.0;
    let ranges = [
        knobs.corner_per_scene,
        knobs.common_per_scene,
        knobs.background_per_scene,
    ];
    for k in 0..3 {
        let mean = totals[k] as f64 / corpus.len() as f64;
        let span = (ranges[k][1] - ranges[k][0]) as f64;
        assert!(
            (mean - mid(ranges[k])).abs() <= 0.25 * span + 0.15,
            "kind {k}: mean {mean}"
        );
    }
}

#[test]
fn foreground_objects_are_fully_in_view() {
    let cam = default_camera();
    for s in generate_corpus(20, 9, &CorpusKnobs::default()) {
        let scene = generate_scene(&s, "v").unwrap();
        for o in scene
            .objects
            .iter()
            .filter(|o| o.kind != ObjectKind::BackgroundStructure)
        {
            let b = o.gt_box.expect("foreground objects have a box");
            assert!(b.inside(f64::from(cam.width()), f64::from(cam.height())));
            assert!(o.hits > 0);
        }
        let dets = scene.bundle.detections.as_ref().unwrap();
        let commons = scene.objects.iter().filter(|o| o.kind == ObjectKind::Common).count();
        assert_eq!(dets.len(), commons);
        assert!(dets.iter().all(|d| d.score == 1.0));
    }
}
