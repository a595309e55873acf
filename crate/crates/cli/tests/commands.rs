#[path = "../../core/tests/oracles/mod.rs"]
mod oracles;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use copg_cli::ablate::{ablate, AblateArgs};
use copg_cli::config::ConfigOverrides;
use copg_cli::corpus::{read_json, CLASS_MAP_FILE, GROUND_TRUTH_FILE, SEG_FILE};
use copg_cli::evaluate::{evaluate, EvaluateArgs, ViewArg};
use copg_cli::formats::{CocoFile, NamedBox, SceneBoxes};
use copg_cli::manifest::{RunManifest, SceneStatus};
use copg_cli::propose::{propose, ProposeArgs};
use copg_cli::report::{report, stage_color, Pixmap, ReportArgs};
use copg_cli::synth::{synth, write_corpus, CorpusSpec, SynthArgs};
use copg_core::eval::View;
use copg_core::proposal::Stage;
use copg_core::synth::{generate_corpus, CorpusKnobs};
use copg_core::{iou, Box2D};
use tempfile::TempDir;

fn corpus(n: usize, seed: u64) -> (TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("corpus");
    write_corpus(&generate_corpus(n, seed, &CorpusKnobs::default()), &path).unwrap();
    (dir, path)
}

fn propose_args(corpus: &Path, out: &Path) -> ProposeArgs {
    ProposeArgs {
        corpus: corpus.to_path_buf(),
        out: out.to_path_buf(),
        config: None,
        workers: Some(2),
        all_stages: false,
        omit_timing: true,
        overrides: ConfigOverrides::default(),
    }
}

/// Relative path -> bytes for every file under `root`.
fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn empty_corpus_gives_empty_manifest_and_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("empty");
    fs::create_dir(&corpus).unwrap();
    let out = dir.path().join("out");
    let status = Command::new(env!("CARGO_BIN_EXE_copg"))
        .args(["propose", "--corpus"])
        .arg(&corpus)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(status.status.success());
    let m: RunManifest = read_json(&out.join("manifest.json")).unwrap();
    assert!(m.scenes.is_empty());
    assert!(m.throughput.is_none());
}

#[test]
fn missing_seg_maps_skip_background_removal() {
    let (dir, corpus) = corpus(3, 1);
    for e in fs::read_dir(&corpus).unwrap() {
        let seg = e.unwrap().path().join(SEG_FILE);
        if seg.exists() {
            fs::remove_file(seg).unwrap();
        }
    }
    let m = propose(&propose_args(&corpus, &dir.path().join("out"))).unwrap();
    assert_eq!(m.scenes.len(), 3);
    for s in &m.scenes {
        assert_eq!(s.status, SceneStatus::Ok);
        assert_eq!(s.skipped, vec!["background_removal".to_string()]);
    }
}

#[test]
fn failing_scene_sets_exit_code_and_keeps_manifest() {
    let (dir, corpus) = corpus(3, 2);
    let bad = corpus.join("scene_0001").join("points.bin");
    let bytes = fs::read(&bad).unwrap();
    fs::write(&bad, &bytes[..bytes.len() - 3]).unwrap();
    let out = dir.path().join("out");
    let run = Command::new(env!("CARGO_BIN_EXE_copg"))
        .args(["propose", "--workers", "2", "--corpus"])
        .arg(&corpus)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(run.status.code(), Some(1));
    let m: RunManifest = read_json(&out.join("manifest.json")).unwrap();
    assert_eq!(m.num_errors(), 1);
    let failed = &m.scenes[1];
    assert_eq!(failed.scene_id, "scene_0001");
    assert!(failed.error.as_deref().unwrap().contains("points.bin"));
    assert!(out.join("proposals/scene_0000.json").exists());
    assert!(!out.join("proposals/scene_0001.json").exists());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let (dir, corpus) = corpus(20, 3);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    propose(&propose_args(&corpus, &a)).unwrap();
    propose(&ProposeArgs {
        all_stages: false,
        ..propose_args(&corpus, &b)
    })
    .unwrap();
    let (sa, sb) = (snapshot(&a), snapshot(&b));
    assert_eq!(sa.len(), 21);
    assert_eq!(sa, sb);
}

#[test]
fn config_file_and_flags_reach_the_manifest() {
    let (dir, corpus) = corpus(1, 4);
    let cfg = dir.path().join("cfg.toml");
    fs::write(&cfg, "[clustering]\ntheta_min = 12.0\nmin_cluster_points = 3\n").unwrap();
    let mut args = propose_args(&corpus, &dir.path().join("out"));
    args.config = Some(cfg);
    args.overrides.min_cluster_points = Some(7);
    let m = propose(&args).unwrap();
    assert_eq!(m.config.theta_min, 12.0);
    assert_eq!(m.config.min_cluster_points, 7);
}

fn eval_args(proposals: &Path, corpus: &Path, view: ViewArg) -> EvaluateArgs {
    EvaluateArgs {
        proposals: proposals.to_path_buf(),
        gt: corpus.join(GROUND_TRUTH_FILE),
        class_map: Some(corpus.join(CLASS_MAP_FILE)),
        view,
        out: None,
    }
}

#[test]
fn ground_truth_as_proposals_has_full_recall() {
    let (dir, corpus) = corpus(4, 5);
    let gt: CocoFile = read_json(&corpus.join(GROUND_TRUTH_FILE)).unwrap();
    let scenes: Vec<SceneBoxes> = gt
        .scenes()
        .unwrap()
        .into_iter()
        .map(|mut s| {
            for b in &mut s.boxes {
                b.category = "corner_case".into();
            }
            s
        })
        .collect();
    let file = dir.path().join("perfect.json");
    copg_cli::corpus::write_json(&file, &CocoFile::from_scenes(&scenes, false)).unwrap();
    let reports = evaluate(&eval_args(&file, &corpus, ViewArg::All)).unwrap();
    assert_eq!(reports.len(), 3);
    for r in &reports {
        match r.view {
            View::Corner | View::Novel => assert_eq!(r.metrics.ar, Some(1.0)),
            View::Common => assert_eq!(r.metrics.ar, None),
        }
    }
}

#[test]
fn corner_view_ignores_labels() {
    let (dir, corpus) = corpus(6, 6);
    let out = dir.path().join("out");
    propose(&propose_args(&corpus, &out)).unwrap();
    let base = evaluate(&eval_args(&out, &corpus, ViewArg::Corner)).unwrap();

    // Relabel every other proposal as a car.
    let scenes = copg_cli::evaluate::load_proposal_files(&out).unwrap();
    let relabeled: Vec<SceneBoxes> = scenes
        .into_iter()
        .map(|mut s| {
            for (i, b) in s.boxes.iter_mut().enumerate() {
                if i % 2 == 0 {
                    b.category = "car".into();
                }
            }
            s
        })
        .collect();
    let file = dir.path().join("relabeled.json");
    copg_cli::corpus::write_json(&file, &CocoFile::from_scenes(&relabeled, false)).unwrap();
    let labeled = evaluate(&eval_args(&file, &corpus, ViewArg::Corner)).unwrap();
    assert_eq!(base[0].metrics, labeled[0].metrics);
    let novel = evaluate(&eval_args(&file, &corpus, ViewArg::Novel)).unwrap();
    assert!(novel[0].metrics.ar <= base[0].metrics.ar);
}

#[test]
fn unmapped_category_is_an_error() {
    let (dir, corpus) = corpus(1, 7);
    let file = dir.path().join("p.json");
    let b = Box2D::new(10.0, 10.0, 20.0, 20.0).unwrap();
    let scenes = [SceneBoxes {
        scene_id: "scene_0000".into(),
        width: 1242,
        height: 375,
        boxes: vec![NamedBox::plain(b, "spaceship")],
    }];
    copg_cli::corpus::write_json(&file, &CocoFile::from_scenes(&scenes, false)).unwrap();
    let err = evaluate(&eval_args(&file, &corpus, ViewArg::Novel)).unwrap_err();
    assert!(format!("{err:#}").contains("spaceship"));
    // CORNER never consults the map.
    assert!(evaluate(&eval_args(&file, &corpus, ViewArg::Corner)).is_ok());
}

#[test]
fn small_instance_matches_brute_force() {
    use oracles::coco::{self, Scene};
    let dir = tempfile::tempdir().unwrap();
    let b = |x: f64, y: f64, w: f64, h: f64| Box2D::new(x, y, w, h).unwrap();
    let inst = vec![
        Scene {
            preds: vec![
                (b(0.0, 0.0, 40.0, 40.0), 0.9),
                (b(2.0, 2.0, 40.0, 40.0), 0.8),
                (b(100.0, 0.0, 10.0, 10.0), 0.7),
            ],
            gts: vec![(b(0.0, 0.0, 40.0, 40.0), 1600.0), (b(104.0, 2.0, 10.0, 10.0), 100.0)],
        },
        Scene {
            preds: vec![(b(5.0, 5.0, 30.0, 50.0), 0.95)],
            gts: vec![(b(6.0, 4.0, 30.0, 48.0), 1440.0)],
        },
    ];
    let to_file = |preds: bool| {
        let scenes: Vec<SceneBoxes> = inst
            .iter()
            .enumerate()
            .map(|(i, s)| SceneBoxes {
                scene_id: format!("s{i}"),
                width: 200,
                height: 200,
                boxes: if preds {
                    s.preds
                        .iter()
                        .map(|&(bb, sc)| NamedBox {
                            score: Some(sc),
                            ..NamedBox::plain(bb, "corner_case")
                        })
                        .collect()
                } else {
                    s.gts.iter().map(|&(bb, _)| NamedBox::plain(bb, "obstacle")).collect()
                },
            })
            .collect();
        CocoFile::from_scenes(&scenes, !preds)
    };
    let (pf, gf) = (dir.path().join("p.json"), dir.path().join("g.json"));
    copg_cli::corpus::write_json(&pf, &to_file(true)).unwrap();
    copg_cli::corpus::write_json(&gf, &to_file(false)).unwrap();
    let r = &evaluate(&EvaluateArgs {
        proposals: pf,
        gt: gf,
        class_map: None,
        view: ViewArg::Corner,
        out: None,
    })
    .unwrap()[0];
    let ar = coco::average_recall(&inst, 100, (0.0, 1e10)).unwrap();
    let ap = coco::average_precision(&inst, 100, (0.0, 1e10)).unwrap();
    assert!((r.metrics.ar.unwrap() - ar).abs() < 1e-9);
    assert!((r.metrics.ap.unwrap() - ap).abs() < 1e-9);
    let ar_s = coco::average_recall(&inst, 100, (0.0, 1024.0)).unwrap();
    assert!((r.metrics.ar_s.unwrap() - ar_s).abs() < 1e-9);
}

fn write_ablation(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("ablation.toml");
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn single_value_sweep_gives_one_row() {
    let (dir, corpus) = corpus(3, 8);
    let spec = write_ablation(dir.path(), "parameter = \"theta_min\"\nvalues = [8.0]\n");
    let out = dir.path().join("ab");
    let table = ablate(&AblateArgs {
        corpus,
        spec,
        out: out.clone(),
        workers: Some(2),
    })
    .unwrap();
    assert_eq!(table.rows.len(), 1);
    let text = table.to_text();
    let header: Vec<&str> = text.lines().next().unwrap().split_whitespace().collect();
    assert_eq!(header, ["theta_min", "AP", "AR", "#Proposals", "#Scenes"]);
    let csv = fs::read_to_string(out.join("ablation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn suppression_sweep_is_monotone_with_noisy_detections() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let knobs = CorpusKnobs {
        detection_jitter: 6.0,
        common_per_scene: [2, 3],
        ..CorpusKnobs::default()
    };
    write_corpus(&generate_corpus(8, 9, &knobs), &corpus).unwrap();
    let spec = write_ablation(
        dir.path(),
        "parameter = \"suppression_iou_max\"\nvalues = [0.0, 0.25, 0.5, 1.0]\n",
    );
    let table = ablate(&AblateArgs {
        corpus,
        spec,
        out: dir.path().join("ab"),
        workers: None,
    })
    .unwrap();
    let n: Vec<usize> = table.rows.iter().map(|r| r.num_proposals).collect();
    assert!(n.windows(2).all(|w| w[0] <= w[1]), "{n:?}");
    assert!(n[0] < n[3], "disabling suppression must let cars through: {n:?}");
}

#[test]
fn synth_writes_five_artifacts_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("corpus.toml");
    fs::write(&spec, "n = 1\nseed = 42\n[knobs]\nrange_jitter = 0.01\n").unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        synth(&SynthArgs {
            spec: spec.clone(),
            out: out.clone(),
        })
        .unwrap();
        out
    };
    let (a, b) = (run("a"), run("b"));
    let mut files: Vec<String> = fs::read_dir(a.join("scene_0000"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    files.sort();
    assert_eq!(
        files,
        ["calib.json", "detections.json", "gt.json", "points.bin", "seg.pgm"]
    );
    assert_eq!(snapshot(&a), snapshot(&b));
    assert!(CorpusSpec::parse("n = 0\nseed = 1\n").is_err());
}

#[test]
fn unfiltered_round_trip_recovers_every_planted_object() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let specs = generate_corpus(6, 10, &CorpusKnobs::default());
    let scenes = write_corpus(&specs, &corpus).unwrap();
    let mut args = propose_args(&corpus, &dir.path().join("out"));
    args.all_stages = true;
    args.overrides = ConfigOverrides {
        bg_ratio_max: Some(1.0),
        suppression_iou_max: Some(1.0),
        max_cluster_distance: Some(1e6),
        ..Default::default()
    };
    let min_points = copg_core::PipelineConfig::default().min_cluster_points;
    propose(&args).unwrap();
    let props = copg_cli::evaluate::load_proposal_files(&dir.path().join("out")).unwrap();
    let mut checked = 0;
    for (scene, file) in scenes.iter().zip(&props) {
        assert_eq!(scene.bundle.scene_id, file.scene_id);
        let initial: Vec<Box2D> = file
            .boxes
            .iter()
            .filter(|b| b.stage == Some(Stage::Initial))
            .map(|b| b.bbox)
            .collect();
        for o in &scene.objects {
            let Some(gt) = o.gt_box else { continue };
            if o.hits < 4 * min_points {
                continue;
            }
            checked += 1;
            assert!(
                initial.iter().any(|p| iou(p, &gt) > 0.0),
                "{} object {} ({} hits) has no initial proposal",
                file.scene_id,
                o.id,
                o.hits
            );
        }
    }
    assert!(checked >= 12);
}

#[test]
fn report_overlays_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let b = Box2D::new(10.2, 5.0, 20.0, 12.5).unwrap();
    let scenes = vec![
        SceneBoxes {
            scene_id: "empty".into(),
            width: 64,
            height: 48,
            boxes: vec![],
        },
        SceneBoxes {
            scene_id: "one".into(),
            width: 64,
            height: 48,
            boxes: vec![NamedBox {
                stage: Some(Stage::Intermediate),
                score: Some(3.0),
                ..NamedBox::plain(b, "corner_case")
            }],
        },
    ];
    let props = dir.path().join("p.json");
    copg_cli::corpus::write_json(&props, &CocoFile::from_scenes(&scenes, false)).unwrap();
    let out = dir.path().join("report");
    let n = report(&ReportArgs {
        proposals: props,
        scenes: None,
        out: out.clone(),
    })
    .unwrap();
    assert_eq!(n, 2);

    let decode = |name: &str| -> Pixmap {
        let bytes = fs::read(out.join(name)).unwrap();
        let header = b"P6\n64 48\n255\n";
        assert!(bytes.starts_with(header));
        assert_eq!(bytes.len(), header.len() + 64 * 48 * 3);
        Pixmap {
            width: 64,
            height: 48,
            rgb: bytes[header.len()..].to_vec(),
        }
    };
    let empty = decode("empty.ppm");
    assert!(empty.rgb.iter().all(|&v| v == 0));

    let one = decode("one.ppm");
    let color = stage_color(Some(Stage::Intermediate));
    let lit: Vec<(u32, u32)> = (0..48)
        .flat_map(|y| (0..64).map(move |x| (x, y)))
        .filter(|&(x, y)| one.get(x, y) == color)
        .collect();
    assert!(lit.iter().all(|&(x, y)| one.get(x, y) == color));
    let (x0, x1) = (
        lit.iter().map(|p| p.0).min().unwrap(),
        lit.iter().map(|p| p.0).max().unwrap(),
    );
    let (y0, y1) = (
        lit.iter().map(|p| p.1).min().unwrap(),
        lit.iter().map(|p| p.1).max().unwrap(),
    );
    // Exactly the outline of one rectangle, nothing else.
    let perimeter = 2 * (x1 - x0 + 1) + 2 * (y1 - y0 + 1) - 4;
    assert_eq!(lit.len() as u32, perimeter);
    assert!(lit.iter().all(|&(x, y)| x == x0 || x == x1 || y == y0 || y == y1));
    assert_eq!((x0, y0, x1, y1), (10, 5, 30, 17));
    let others = (0..48)
        .flat_map(|y| (0..64).map(move |x| (x, y)))
        .filter(|&(x, y)| one.get(x, y) != color && one.get(x, y) != [0, 0, 0])
        .count();
    assert_eq!(others, 0);

    let csv = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2);
    assert!(csv.lines().nth(2).unwrap().starts_with("one,0,1,0"));
}

mod round_trip {
    use super::*;
    use copg_cli::manifest::{SceneEntry, StageCounts};
    use copg_core::PipelineConfig;
    use proptest::prelude::*;

    fn named_box() -> impl Strategy<Value = NamedBox> {
        (
            (0.0f64..1000.0, 0.0f64..400.0, 0.001f64..300.0, 0.001f64..300.0),
            prop::sample::select(vec!["corner_case", "car", "barrel"]),
            prop::option::of(0.0f64..1e4),
            prop::option::of(0.0f64..1e5),
            prop::option::of(0u32..1000),
            prop::option::of(prop::sample::select(vec![
                Stage::Initial,
                Stage::Intermediate,
                Stage::Final,
            ])),
        )
            .prop_map(|((x, y, w, h), c, score, area, cluster_id, stage)| NamedBox {
                bbox: Box2D::new(x, y, w, h).unwrap(),
                category: c.to_string(),
                score,
                area,
                cluster_id,
                stage,
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn coco_json(scenes in prop::collection::vec(prop::collection::vec(named_box(), 0..5), 0..4)) {
            let scenes: Vec<SceneBoxes> = scenes
                .into_iter()
                .enumerate()
                .map(|(i, boxes)| SceneBoxes { scene_id: format!("s{i}"), width: 1242, height: 375, boxes })
                .collect();
            let file = CocoFile::from_scenes(&scenes, false);
            let text = serde_json::to_string_pretty(&file).unwrap();
            let back: CocoFile = serde_json::from_str(&text).unwrap();
            prop_assert_eq!(&back, &file);
            prop_assert_eq!(back.scenes().unwrap(), scenes);
        }

        #[test]
        fn manifest_json(theta in 0.1f64..90.0, ms in prop::collection::vec(0.0f64..500.0, 3), err in any::<bool>()) {
            let entry = SceneEntry {
                scene_id: "s".into(),
                status: if err { SceneStatus::Error } else { SceneStatus::Ok },
                skipped: vec!["background_removal".into()],
                error: err.then(|| "scene s: bad".to_string()),
                counts: (!err).then_some(StageCounts { ground_points: 5, clusters: 2, initial: 2, intermediate: 1, final_: 1 }),
                timing_ms: ["ground_removal", "clustering", "projection"].iter().zip(&ms).map(|(k, v)| (k.to_string(), *v)).collect(),
            };
            let m = RunManifest::new("c".into(), PipelineConfig { theta_min: theta, ..Default::default() }, vec![entry]);
            let back: RunManifest = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
            prop_assert_eq!(back, m);
        }
    }
}
