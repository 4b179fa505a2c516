//! End-to-end runs of the `fsg` binary on a synthetic room dataset.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fsg::bench::scene::{cabinet_scene, SyntheticScene};
use fsg::bench::{sample_scenario, CameraKind, SampleRanges};
use fsg::graph::{JointType, Provenance, SceneGraph};
use fsg::pipeline::write_scene_dataset;
use fsg::tracking::SphereModel;
use nalgebra::Vector3;
use serde_json::Value;
use tempfile::TempDir;

fn fsg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fsg"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    dir: TempDir,
    manifest: PathBuf,
    scene: SyntheticScene,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let scene = cabinet_scene(0);
        let manifest = write_scene_dataset(dir.path(), &scene, &SphereModel::standard()).unwrap();
        Self { dir, manifest, scene }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn edit_manifest(&self, f: impl FnOnce(&mut Value)) {
        let mut v: Value = serde_json::from_slice(&std::fs::read(&self.manifest).unwrap()).unwrap();
        f(&mut v);
        std::fs::write(&self.manifest, serde_json::to_vec_pretty(&v).unwrap()).unwrap();
    }

    fn init(&self) -> PathBuf {
        let graph = self.path("scene_graph.json");
        let o = fsg(&["init", s(&self.manifest), "--output", s(&graph)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        graph
    }

    fn track(&self, demo: &str) -> (PathBuf, PathBuf) {
        let o = fsg(&["track", s(&self.manifest), "--demo", demo, "--output", s(self.dir.path())]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        (
            self.path(&format!("{demo}.trajectory.jsonl")),
            self.path(&format!("{demo}.verdict.json")),
        )
    }
}

fn load(p: &Path) -> SceneGraph {
    SceneGraph::from_json(&std::fs::read(p).unwrap()).unwrap()
}

fn centroid(points: &[Vector3<f64>]) -> Vector3<f64> {
    points.iter().sum::<Vector3<f64>>() / points.len() as f64
}

#[test]
fn init_recovers_objects_and_elements() {
    let fx = Fixture::new();
    let graph_path = fx.path("g.json");
    let o = fsg(&["--format", "json", "init", s(&fx.manifest), "--output", s(&graph_path)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["summary"]["objects"], 2);
    assert_eq!(report["summary"]["elements"], 2);

    let g = load(&graph_path);
    let mut labels: Vec<_> = g.objects().map(|o| o.label.clone()).collect();
    labels.sort();
    assert_eq!(labels, ["cabinet", "table"]);
    let cabinet = g.objects().find(|o| o.label == "cabinet").unwrap().id;
    for truth in &fx.scene.elements {
        let c = centroid(&truth.points);
        let el = g
            .elements()
            .min_by(|a, b| (a.centroid - c).norm().total_cmp(&(b.centroid - c).norm()))
            .unwrap();
        assert!((el.centroid - c).norm() < 0.02, "element centroid off by {}", (el.centroid - c).norm());
        assert_eq!(el.label, "handle");
        assert_eq!(g.parent_of(el.id), Some(cabinet));
        assert!(el.feature.is_some());
    }
}

#[test]
fn init_reports_missing_depth_file() {
    let fx = Fixture::new();
    let victim = std::fs::read_dir(fx.path("depth")).unwrap().next().unwrap().unwrap().path();
    std::fs::remove_file(&victim).unwrap();
    let o = fsg(&["init", s(&fx.manifest), "--output", s(&fx.path("g.json"))]);
    assert_eq!(code(&o), 1);
    let name = victim.file_name().unwrap().to_str().unwrap();
    assert!(stderr(&o).contains(name), "{}", stderr(&o));
    assert!(!fx.path("g.json").exists());
}

#[test]
fn init_without_masks_yields_objects_only() {
    let fx = Fixture::new();
    fx.edit_manifest(|m| m["masks"] = Value::Array(vec![]));
    let g = load(&fx.init());
    assert_eq!(g.num_objects(), 2);
    assert_eq!(g.num_elements(), 0);
}

#[test]
fn track_classifies_both_demonstrations() {
    let fx = Fixture::new();
    let o = fsg(&["--format", "json", "track", s(&fx.manifest), "--demo", "drawer", "--output", s(fx.dir.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["verdict"]["joint_type"], "prismatic");
    let dir = &v["verdict"]["axis"]["direction"];
    assert!(dir[0].as_f64().unwrap() < -0.99, "{dir}");
    assert!((v["verdict"]["axis"]["range"].as_f64().unwrap() - 0.3).abs() < 0.02);

    let o = fsg(&["--format", "json", "track", s(&fx.manifest), "--demo", "lid", "--output", s(fx.dir.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["verdict"]["joint_type"], "revolute");
    let axis = &v["verdict"]["axis"];
    assert!(axis["direction"][1].as_f64().unwrap().abs() > 0.99, "{axis}");
    let center = Vector3::new(
        axis["center"][0].as_f64().unwrap(),
        axis["center"][1].as_f64().unwrap(),
        axis["center"][2].as_f64().unwrap(),
    );
    // distance from the true hinge line through (0.1, 1.2, 0.75) along y
    let off = Vector3::new(center.x - 0.1, 0.0, center.z - 0.75).norm();
    assert!(off < 0.01, "hinge off by {off}");
    assert!(fx.path("lid.trajectory.jsonl").exists() && fx.path("lid.verdict.json").exists());
}

#[test]
fn track_without_detections_is_a_numerical_failure() {
    let fx = Fixture::new();
    std::fs::write(fx.path("demos/drawer.detections.jsonl"), "").unwrap();
    let o = fsg(&["track", s(&fx.manifest), "--demo", "drawer", "--output", s(fx.dir.path())]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("insufficient track"), "{}", stderr(&o));
}

#[test]
fn track_unknown_demo_is_an_input_error() {
    let fx = Fixture::new();
    let o = fsg(&["track", s(&fx.manifest), "--demo", "nope"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("nope"));
}

#[test]
fn refine_matches_and_creates_then_stays_idempotent() {
    let fx = Fixture::new();
    let graph = fx.init();
    let (dt, dv) = fx.track("drawer");
    let (lt, lv) = fx.track("lid");
    let refine = || {
        fsg(&["refine", s(&graph), "--demo", s(&dt), s(&dv), "--demo", s(&lt), s(&lv)])
    };
    let o = refine();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("matched element"), "{text}");
    assert!(lines[1].starts_with("new element"), "{text}");

    let g = load(&graph);
    assert_eq!(g.num_elements(), 3);
    let table = g.objects().find(|o| o.label == "table").unwrap().id;
    let handle0 = centroid(&fx.scene.elements[0].points);
    let drawer = g
        .elements()
        .min_by(|a, b| (a.centroid - handle0).norm().total_cmp(&(b.centroid - handle0).norm()))
        .unwrap();
    assert_eq!(drawer.provenance, Provenance::Both);
    let axis = drawer.articulation.unwrap();
    assert_eq!(axis.joint_type, JointType::Prismatic);
    assert!(axis.direction.x < -0.99);
    let lid = g.elements().find(|e| e.provenance == Provenance::Interaction).unwrap();
    assert_eq!(g.parent_of(lid.id), Some(table));
    assert_eq!(lid.articulation.unwrap().joint_type, JointType::Revolute);
    let untouched = g.elements().filter(|e| e.provenance == Provenance::Visual).count();
    assert_eq!(untouched, 1);

    let o = refine();
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).lines().take(2).all(|l| l.starts_with("matched element")), "{}", stdout(&o));
    let g2 = load(&graph);
    assert_eq!(g2.num_nodes(), g.num_nodes());
    assert_eq!(g2.edges(), g.edges());
}

#[test]
fn refine_rejects_missing_verdict() {
    let fx = Fixture::new();
    let graph = fx.init();
    let (dt, _) = fx.track("drawer");
    let o = fsg(&["refine", s(&graph), "--demo", s(&dt), s(&fx.path("missing.json"))]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("missing.json"));
}

#[test]
fn query_ranks_handles_first() {
    let fx = Fixture::new();
    let graph = fx.init();
    let q = fx.path("q.json");
    std::fs::write(&q, "[0, 0, 1, 0, 0, 0, 0, 0]").unwrap();

    let o = fsg(&["query", s(&graph), s(&q), "-k", "3"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[0].contains("handle") && rows[1].contains("handle"), "{text}");

    let o = fsg(&["--format", "json", "query", s(&graph), s(&q), "-k", "2"]);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let results = v["results"].as_array().unwrap();
    assert_eq!(results.len(), 2);
    assert_eq!(results[0]["rank"], 1);
    assert_eq!(results[0]["kind"], "element");
    assert!(results[0]["score"].as_f64().unwrap() >= results[1]["score"].as_f64().unwrap());

    std::fs::write(&q, "[1, 0, 0]").unwrap();
    let o = fsg(&["query", s(&graph), s(&q)]);
    assert_eq!(code(&o), 1);
}

#[test]
fn bench_noiseless_suite_is_exact() {
    let o = fsg(&["--format", "json", "bench", "--suite", "noiseless", "--runs", "4", "--camera", "static"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 4);
    assert_eq!(v["summary"]["type_accuracy"], 1.0);
    assert!(v["summary"]["max_t_err"].as_f64().unwrap() < 1e-6);
}

#[test]
fn bench_is_reproducible_for_a_seed() {
    let run = || stdout(&fsg(&["--format", "json", "--seed", "7", "bench", "--runs", "2", "--camera", "dynamic"]));
    assert_eq!(run(), run());
}

#[test]
fn bench_directory_reports_malformed_scenario_and_continues() {
    let dir = tempfile::tempdir().unwrap();
    let sphere = SphereModel::standard();
    for (i, joint) in [JointType::Prismatic, JointType::Revolute].into_iter().enumerate() {
        let cfg = sample_scenario(i as u64, joint, CameraKind::Static, &SampleRanges::default(), &sphere);
        std::fs::write(dir.path().join(format!("{i}.json")), serde_json::to_vec(&cfg).unwrap()).unwrap();
    }
    std::fs::write(dir.path().join("5_broken.json"), "{\"axis\": ").unwrap();
    let emit = dir.path().join("emitted");
    let o = fsg(&["bench", s(dir.path()), "--emit", s(&emit)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = stdout(&o);
    let failed: Vec<&str> = text.lines().filter(|l| l.starts_with("FAILED")).collect();
    assert_eq!(failed.len(), 1, "{text}");
    assert!(failed[0].contains("5_broken"));
    assert!(text.contains("runs 3 failures 1"), "{text}");

    // emitted demonstrations are ingestible by track
    let manifest = emit.join("0").join("manifest.json");
    let o = fsg(&["track", s(&manifest), "--demo", "0", "--output", s(&emit)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("prismatic"));
}

fn ply_counts(path: &Path) -> (usize, usize) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut v = 0;
    let mut e = 0;
    for l in text.lines() {
        if let Some(n) = l.strip_prefix("element vertex ") {
            v = n.parse().unwrap();
        }
        if let Some(n) = l.strip_prefix("element edge ") {
            e = n.parse().unwrap();
        }
        if l == "end_header" {
            break;
        }
    }
    let body = text.lines().skip_while(|l| *l != "end_header").skip(1).count();
    assert_eq!(body, v + e, "{}", path.display());
    (v, e)
}

#[test]
fn export_writes_consistent_ply_files() {
    let fx = Fixture::new();
    let graph = fx.init();
    let (t, v) = fx.track("drawer");
    assert_eq!(code(&fsg(&["refine", s(&graph), "--demo", s(&t), s(&v)])), 0);
    let out = fx.path("export");
    let o = fsg(&["export", s(&graph), "--output", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let g = load(&graph);
    let objects: usize = g.objects().map(|o| o.points.len()).sum();
    let elements: usize = g.elements().map(|e| e.points.len()).sum();
    assert_eq!(ply_counts(&out.join("objects.ply")).0, objects);
    assert_eq!(ply_counts(&out.join("elements.ply")).0, elements);
    assert_eq!(ply_counts(&out.join("axes.ply")), (2, 1));
    let traj_len = g.elements().filter_map(|e| e.trajectory.as_ref()).map(|t| t.len()).sum::<usize>();
    assert_eq!(ply_counts(&out.join("trajectories.ply")), (traj_len, traj_len - 1));
    let loaded = fsg::io::read_ply_points(&out.join("objects.ply")).unwrap();
    assert_eq!(loaded.len(), objects);
}

#[test]
fn export_of_empty_graph_is_valid() {
    let dir = tempfile::tempdir().unwrap();
    let graph = dir.path().join("empty.json");
    std::fs::write(&graph, SceneGraph::new(4).to_json()).unwrap();
    let out = dir.path().join("export");
    let o = fsg(&["export", s(&graph), "--output", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["objects.ply", "elements.ply", "axes.ply", "trajectories.ply"] {
        assert_eq!(ply_counts(&out.join(f)), (0, 0));
    }
}

#[test]
fn config_errors_are_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"top_kk": 3}"#).unwrap();
    let o = fsg(&["--config", s(&cfg), "bench", "--runs", "1"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("top_kk"), "{}", stderr(&o));

    let o = fsg(&["--config", s(&dir.path().join("absent.json")), "bench", "--runs", "1"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&fsg(&["frobnicate"])), 1);
    assert_eq!(code(&fsg(&["query", "only-one-arg"])), 1);
    assert_eq!(code(&fsg(&["--help"])), 0);
}

#[test]
fn malformed_graph_is_an_input_error() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/malformed/05_unknown_field.json");
    let tmp = tempfile::tempdir().unwrap();
    let q = tmp.path().join("q.json");
    std::fs::write(&q, "[1, 0]").unwrap();
    let o = fsg(&["query", s(&dir), s(&q)]);
    assert_eq!(code(&o), 1);
}
