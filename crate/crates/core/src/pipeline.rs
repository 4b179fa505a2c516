//! The six pipeline commands behind the `fsg` binary. Each returns a
//! [`Report`] carrying both a human-readable and a JSON rendering; files are
//! written atomically.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::articulation::{select_joint_with, JointVerdict, SelectionConfig};
use crate::bench::{
    generate, run_scenario, sample_scenario, BenchSummary, CameraKind, SampleRanges,
    ScenarioConfig, ScenarioOutcome, SyntheticDemo,
};
use crate::bench::scene::SyntheticScene;
use crate::graph::{JointType, NodeId, SceneGraph};
use crate::io::{
    self, ply_lines, ply_points, ColoredPoint, Dataset, DatasetManifest, DemoEntry, EmbeddingEntry,
    FrameEntry, InstanceEntry, IoError, LineVertex, MaskEntry,
};
use crate::lifting::{
    build_object_nodes, crop_rect, lift_masks, BinaryMask, ClusterParams, ElementMask,
    InstanceSegment, LiftParams, LiftReport,
};
use crate::refine::{register_demonstration, Association, RefineConfig};
use crate::tracking::{track, SphereModel, TimedPose, TrackConfig, TrackError, TrackStats};
use crate::views::{aggregate_features, frame_contribution, select_top_k, FrameRecord};

/// Input errors exit with 1, numerical failures with 2.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Numerical(String),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Input(_) => 1,
            PipelineError::Numerical(_) => 2,
        }
    }

    fn input(msg: impl Into<String>) -> Self {
        PipelineError::Input(msg.into())
    }
}

impl From<IoError> for PipelineError {
    fn from(e: IoError) -> Self {
        PipelineError::Input(e.to_string())
    }
}

fn track_error(context: &str, e: TrackError) -> PipelineError {
    match e {
        TrackError::InvalidModel(_) | TrackError::NonMonotonicTimestamps(_) => {
            PipelineError::Input(format!("{context}: {e}"))
        }
        _ => PipelineError::Numerical(format!("{context}: {e}")),
    }
}

type Result<T> = std::result::Result<T, PipelineError>;

/// Output of one command.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub text: String,
    pub json: serde_json::Value,
}

/// Every tunable of the pipeline. Missing keys take defaults; unknown keys
/// are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Embedding dimension; inferred from the first embedding file when unset.
    pub feature_dim: Option<usize>,
    pub top_k: usize,
    /// m
    pub depth_tol: f64,
    pub object_cluster: ClusterParams,
    /// Element clustering, same-label split radius and detection floor.
    pub lift: LiftParams,
    /// Fraction of the projected bounding box added on each side.
    pub crop_expansion: f64,
    /// Association threshold, parent rule and label of new elements.
    pub refine: RefineConfig,
    pub track: TrackConfig,
    pub selection: SelectionConfig,
    /// Sphere model for `bench`; the standard sphere when unset.
    pub sphere_model: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            feature_dim: None,
            top_k: crate::views::DEFAULT_TOP_K,
            depth_tol: crate::views::DEFAULT_DEPTH_TOL,
            object_cluster: ClusterParams::OBJECT,
            lift: LiftParams::default(),
            crop_expansion: 0.2,
            refine: RefineConfig::default(),
            track: TrackConfig::default(),
            selection: SelectionConfig::default(),
            sphere_model: None,
        }
    }
}

fn positive(name: &str, v: f64) -> std::result::Result<(), String> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(format!("{name} must be positive and finite, got {v}"))
    }
}

fn non_negative(name: &str, v: f64) -> std::result::Result<(), String> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(format!("{name} must be non-negative and finite, got {v}"))
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.feature_dim == Some(0) {
            return Err("feature_dim must be at least 1".into());
        }
        if self.top_k == 0 {
            return Err("top_k must be at least 1".into());
        }
        positive("depth_tol", self.depth_tol)?;
        self.object_cluster
            .validate()
            .map_err(|e| format!("object_cluster: {e}"))?;
        self.lift
            .cluster
            .validate()
            .map_err(|e| format!("lift.cluster: {e}"))?;
        positive("lift.split_eps", self.lift.split_eps)?;
        if !(0.0..=1.0).contains(&self.lift.min_detection_score) {
            return Err(format!(
                "lift.min_detection_score must lie in [0, 1], got {}",
                self.lift.min_detection_score
            ));
        }
        non_negative("crop_expansion", self.crop_expansion)?;
        positive("refine.threshold", self.refine.threshold)?;
        let f = &self.track.filter;
        non_negative("track.filter.alpha", f.alpha)?;
        positive("track.filter.meas_pos_sigma", f.meas_pos_sigma)?;
        positive("track.filter.meas_rot_sigma", f.meas_rot_sigma)?;
        positive("track.filter.accel_sigma", f.accel_sigma)?;
        positive("track.filter.ang_accel_sigma", f.ang_accel_sigma)?;
        positive("track.filter.init_vel_sigma", f.init_vel_sigma)?;
        positive("track.filter.init_ang_vel_sigma", f.init_ang_vel_sigma)?;
        if self.track.min_correspondences < 4 {
            return Err("track.min_correspondences must be at least 4".into());
        }
        if let Some(l) = self.selection.lambda {
            non_negative("selection.lambda", l)?;
        }
        non_negative(
            "selection.low_confidence_sweep",
            self.selection.low_confidence_sweep,
        )?;
        Ok(())
    }

    /// Defaults when `path` is `None`.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let cfg: Self = io::read_json(path)?;
        cfg.validate()
            .map_err(|e| PipelineError::input(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    fn sphere(&self) -> Result<SphereModel> {
        match &self.sphere_model {
            Some(p) => Ok(io::read_sphere_model(p)?),
            None => Ok(SphereModel::standard()),
        }
    }
}

fn read_embedding_checked(path: &Path, dim: usize) -> Result<Vec<f64>> {
    let v = io::read_embedding(path)?;
    if v.len() != dim {
        return Err(PipelineError::input(format!(
            "{}: embedding has dimension {}, expected {dim}",
            path.display(),
            v.len()
        )));
    }
    Ok(v)
}

fn infer_feature_dim(ds: &Dataset) -> Result<usize> {
    let m = &ds.manifest;
    let first = m
        .embeddings
        .iter()
        .map(|e| &e.path)
        .chain(m.masks.iter().filter_map(|mk| mk.embedding.as_ref()))
        .next();
    match first {
        Some(p) => Ok(io::read_embedding(&ds.resolve(p))?.len()),
        None => Ok(1),
    }
}

/// What `init` did, besides building the graph.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InitSummary {
    pub objects: usize,
    pub elements: usize,
    pub edges: usize,
    /// Instance ids whose clouds were pure noise.
    pub dropped_instances: Vec<u64>,
    /// Masks in frames outside their object's top-k views.
    pub masks_outside_top_k: usize,
    /// Masks with no pixel left inside the object's expanded crop.
    pub masks_outside_crop: usize,
    pub lift: LiftReport,
    /// Object node id → selected frame ids, best first.
    pub top_k: BTreeMap<NodeId, Vec<u64>>,
}

/// Object nodes → contribution scores → top-k views → mask lifting →
/// feature aggregation.
pub fn init_graph(ds: &Dataset, cfg: &PipelineConfig) -> Result<(SceneGraph, InitSummary)> {
    let m = &ds.manifest;
    let dim = match cfg.feature_dim {
        Some(d) => d,
        None => infer_feature_dim(ds)?,
    };
    let mut segments = Vec::with_capacity(m.instances.len());
    let mut seen = BTreeSet::new();
    for inst in &m.instances {
        if !seen.insert(inst.instance_id) {
            return Err(PipelineError::input(format!(
                "{}: duplicate instance id {}",
                ds.path.display(),
                inst.instance_id
            )));
        }
        let path = ds.resolve(&inst.points);
        let points = io::read_ply_points(&path)?;
        segments.push(InstanceSegment {
            instance_id: inst.instance_id,
            label: inst.label.clone(),
            points,
        });
    }
    let mut graph = SceneGraph::new(dim);
    let (node_of, dropped_instances) = build_object_nodes(&mut graph, &segments, &cfg.object_cluster)
        .map_err(|e| PipelineError::input(e.to_string()))?;
    let frames = ds.load_frames()?;
    let frame_by_id: BTreeMap<u64, &FrameRecord> = frames.iter().map(|f| (f.frame_id, f)).collect();

    // per object: contribution scores and the selected views
    let mut scores_of: BTreeMap<u64, BTreeMap<u64, f64>> = BTreeMap::new();
    let mut top_of: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
    for (&inst, &node) in &node_of {
        let pts = &graph.object(node).expect("just added").points;
        let scores: Vec<_> = frames
            .iter()
            .map(|f| frame_contribution(node, pts, f, cfg.depth_tol))
            .collect();
        top_of.insert(inst, select_top_k(&scores, cfg.top_k));
        scores_of.insert(inst, scores.iter().map(|s| (s.frame_id, s.score)).collect());
    }

    // object features from the crops of the selected views
    let mut object_feats: BTreeMap<u64, (Vec<Vec<f64>>, Vec<f64>)> = BTreeMap::new();
    for e in &m.embeddings {
        let Some(top) = top_of.get(&e.object_id) else {
            continue;
        };
        if !top.contains(&e.frame_id) {
            continue;
        }
        let v = read_embedding_checked(&ds.resolve(&e.path), dim)?;
        let entry = object_feats.entry(e.object_id).or_default();
        entry.0.push(v);
        entry.1.push(scores_of[&e.object_id][&e.frame_id]);
    }
    for (inst, (feats, weights)) in object_feats {
        let f = aggregate_features(&feats, &weights).map_err(|e| {
            PipelineError::input(format!("embeddings of instance {inst}: {e}"))
        })?;
        graph
            .set_feature(node_of[&inst], f)
            .map_err(|e| PipelineError::input(e.to_string()))?;
    }

    // masks restricted to the selected views and the object's crop
    let mut masks = Vec::new();
    // (object, label, frame) → (embedding, score, index into `masks`)
    let mut mask_embeddings: BTreeMap<(u64, String, u64), Vec<(Vec<f64>, f64, usize)>> =
        BTreeMap::new();
    let (mut outside_top, mut outside_crop) = (0, 0);
    for mk in &m.masks {
        let (Some(&node), Some(top)) = (node_of.get(&mk.object_id), top_of.get(&mk.object_id)) else {
            continue;
        };
        if !top.contains(&mk.frame_id) {
            outside_top += 1;
            continue;
        }
        let frame = frame_by_id[&mk.frame_id];
        let path = ds.resolve(&mk.mask);
        let mask = io::read_mask(&path)?;
        if (mask.width, mask.height) != (frame.intrinsics.width, frame.intrinsics.height) {
            return Err(PipelineError::input(format!(
                "{}: mask is {}×{}, frame {} is {}×{}",
                path.display(),
                mask.width,
                mask.height,
                frame.frame_id,
                frame.intrinsics.width,
                frame.intrinsics.height
            )));
        }
        let pts = &graph.object(node).expect("exists").points;
        let Ok(rect) = crop_rect(pts, frame, cfg.crop_expansion, cfg.depth_tol) else {
            outside_crop += 1;
            continue;
        };
        let mut data = mask.data.clone();
        for (i, px) in data.iter_mut().enumerate() {
            let (c, r) = ((i % mask.width as usize) as u32, (i / mask.width as usize) as u32);
            *px = *px && rect.contains(c, r);
        }
        let Ok(clipped) = BinaryMask::new(mask.width, mask.height, data) else {
            outside_crop += 1;
            continue;
        };
        if let Some(e) = &mk.embedding {
            let v = read_embedding_checked(&ds.resolve(e), dim)?;
            mask_embeddings
                .entry((mk.object_id, mk.label.clone(), mk.frame_id))
                .or_default()
                .push((v, mk.score, masks.len()));
        }
        masks.push(ElementMask {
            frame_id: mk.frame_id,
            object_id: mk.object_id,
            label: mk.label.clone(),
            mask: clipped,
            detection_score: mk.score,
        });
    }
    let (lifted, lift) = lift_masks(&masks, &frames, &cfg.lift);
    for el in lifted {
        // A frame can hold masks of several same-label parts; an element takes
        // the embeddings of the masks its centroid projects into, or all of
        // that frame's if none does.
        let c = el.points.iter().sum::<Vector3<f64>>() / el.points.len() as f64;
        let mut feats = Vec::new();
        let mut weights = Vec::new();
        for fid in &el.frame_ids {
            let Some(list) = mask_embeddings.get(&(el.object_id, el.label.clone(), *fid)) else {
                continue;
            };
            let frame = frame_by_id[fid];
            let pixel = crate::geometry::project(&c, &frame.cam_pose, &frame.intrinsics)
                .ok()
                .and_then(|(px, _)| frame.intrinsics.nearest_pixel(&px));
            let hit: Vec<_> = list
                .iter()
                .filter(|(_, _, i)| {
                    pixel.is_some_and(|(col, row)| {
                        let m = &masks[*i].mask;
                        m.data[(row * m.width + col) as usize]
                    })
                })
                .collect();
            let chosen: Vec<_> = if hit.is_empty() { list.iter().collect() } else { hit };
            for (v, s, _) in chosen {
                feats.push(v.clone());
                weights.push(*s);
            }
        }
        let feature = if feats.is_empty() {
            None
        } else {
            aggregate_features(&feats, &weights).ok()
        };
        graph
            .add_element_node(
                node_of[&el.object_id],
                el.label,
                el.points,
                feature,
                crate::graph::Provenance::Visual,
            )
            .map_err(|e| PipelineError::input(e.to_string()))?;
    }
    let summary = InitSummary {
        objects: graph.num_objects(),
        elements: graph.num_elements(),
        edges: graph.edges().len(),
        dropped_instances,
        masks_outside_top_k: outside_top,
        masks_outside_crop: outside_crop,
        lift,
        top_k: top_of.iter().map(|(i, t)| (node_of[i], t.clone())).collect(),
    };
    Ok((graph, summary))
}

pub fn cmd_init(manifest: &Path, cfg: &PipelineConfig, output: &Path) -> Result<Report> {
    let ds = Dataset::load(manifest)?;
    let (graph, summary) = init_graph(&ds, cfg)?;
    io::write_atomic(output, &graph.to_json())?;
    let text = format!(
        "wrote {}: {} object nodes, {} element nodes, {} edges\n",
        output.display(),
        summary.objects,
        summary.elements,
        summary.edges
    );
    Ok(Report {
        text,
        json: json!({ "graph": output, "summary": summary }),
    })
}

/// Result of tracking one demonstration.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackedDemo {
    pub trajectory: Vec<TimedPose>,
    pub verdict: JointVerdict,
    pub stats: TrackStats,
}

pub fn track_demo(ds: &Dataset, demo_id: &str, cfg: &PipelineConfig) -> Result<TrackedDemo> {
    let demo = ds.demo(demo_id)?;
    let frames: Vec<FrameRecord> = demo
        .frames
        .iter()
        .map(|f| ds.load_frame(f))
        .collect::<std::result::Result<_, _>>()?;
    let det_path = ds.resolve(&demo.detections);
    let detections = io::read_detections(&det_path)?;
    let sphere = ds.load_sphere()?;
    let context = format!("demo '{demo_id}'");
    let out = track(&detections, &frames, &sphere, &cfg.track).map_err(|e| track_error(&context, e))?;
    let positions: Vec<Vector3<f64>> = out.trajectory.iter().map(|p| p.pose.position).collect();
    let verdict = select_joint_with(&positions, &cfg.selection)
        .map_err(|e| PipelineError::Numerical(format!("{context}: {e}")))?;
    Ok(TrackedDemo {
        trajectory: out.trajectory,
        verdict,
        stats: out.stats,
    })
}

/// `<dir>/<demo>.trajectory.jsonl` and `<dir>/<demo>.verdict.json`.
pub fn demo_output_paths(dir: &Path, demo_id: &str) -> (PathBuf, PathBuf) {
    (
        dir.join(format!("{demo_id}.trajectory.jsonl")),
        dir.join(format!("{demo_id}.verdict.json")),
    )
}

pub fn cmd_track(
    manifest: &Path,
    demo_id: &str,
    cfg: &PipelineConfig,
    output_dir: &Path,
) -> Result<Report> {
    let ds = Dataset::load(manifest)?;
    let t = track_demo(&ds, demo_id, cfg)?;
    let (traj_path, verdict_path) = demo_output_paths(output_dir, demo_id);
    io::write_jsonl(&traj_path, &t.trajectory)?;
    io::write_json(&verdict_path, &t.verdict)?;
    let a = &t.verdict.axis;
    let mut text = format!(
        "demo '{demo_id}': {} of {} frames tracked\n{}{} axis: center [{:.4}, {:.4}, {:.4}] direction [{:.4}, {:.4}, {:.4}] range {:.4}\n",
        t.stats.tracked,
        t.stats.frames,
        t.verdict.joint_type,
        if t.verdict.low_confidence { " (low confidence)" } else { "" },
        a.center.x,
        a.center.y,
        a.center.z,
        a.direction.x,
        a.direction.y,
        a.direction.z,
        a.range
    );
    let _ = writeln!(text, "wrote {} and {}", traj_path.display(), verdict_path.display());
    Ok(Report {
        text,
        json: json!({
            "demo_id": demo_id,
            "trajectory": traj_path,
            "verdict_file": verdict_path,
            "verdict": t.verdict,
            "stats": t.stats,
        }),
    })
}

pub fn read_graph(path: &Path) -> Result<SceneGraph> {
    let bytes = io::read_bytes(path)?;
    SceneGraph::from_json(&bytes).map_err(|e| PipelineError::input(format!("{}: {e}", path.display())))
}

/// One line of the refine report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefineLine {
    pub trajectory: PathBuf,
    #[serde(flatten)]
    pub association: Association,
    pub distance: Option<f64>,
    pub parent: Option<NodeId>,
}

impl RefineLine {
    pub fn describe(&self) -> String {
        match self.association {
            Association::Matched(id) => {
                format!("matched element {id} (d={:.3} m)", self.distance.unwrap_or(f64::NAN))
            }
            Association::NewNode(id) => {
                format!("new element {id} under object {}", self.parent.unwrap_or_default())
            }
        }
    }
}

/// Registers each `(trajectory, verdict)` pair in order.
pub fn refine_graph(
    graph: &mut SceneGraph,
    demos: &[(PathBuf, PathBuf)],
    cfg: &PipelineConfig,
) -> Result<Vec<RefineLine>> {
    let mut lines = Vec::new();
    for (traj_path, verdict_path) in demos {
        let traj = io::read_trajectory(traj_path)?;
        let verdict: JointVerdict = io::read_json(verdict_path)?;
        let poses: Vec<_> = traj.iter().map(|t| t.pose).collect();
        let r = register_demonstration(graph, &poses, &verdict, &cfg.refine)
            .map_err(|e| PipelineError::input(format!("{}: {e}", traj_path.display())))?;
        lines.push(RefineLine {
            trajectory: traj_path.clone(),
            association: r.kind,
            distance: r.distance.is_finite().then_some(r.distance),
            parent: graph.parent_of(r.kind.element_id()),
        });
    }
    Ok(lines)
}

pub fn cmd_refine(
    graph_path: &Path,
    demos: &[(PathBuf, PathBuf)],
    cfg: &PipelineConfig,
    output: &Path,
) -> Result<Report> {
    let mut graph = read_graph(graph_path)?;
    let lines = refine_graph(&mut graph, demos, cfg)?;
    io::write_atomic(output, &graph.to_json())?;
    let mut text = String::new();
    for l in &lines {
        let _ = writeln!(text, "{}", l.describe());
    }
    let _ = writeln!(
        text,
        "wrote {}: {} object nodes, {} element nodes",
        output.display(),
        graph.num_objects(),
        graph.num_elements()
    );
    Ok(Report {
        text,
        json: json!({
            "graph": output,
            "demos": lines,
            "objects": graph.num_objects(),
            "elements": graph.num_elements(),
        }),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryRow {
    pub rank: usize,
    pub id: NodeId,
    pub kind: &'static str,
    pub label: String,
    pub score: f64,
}

pub fn cmd_query(graph_path: &Path, embedding: &Path, k: usize) -> Result<Report> {
    let graph = read_graph(graph_path)?;
    let q = io::read_embedding(embedding)?;
    let hits = graph
        .query(&q, k)
        .map_err(|e| PipelineError::input(format!("{}: {e}", embedding.display())))?;
    let rows: Vec<QueryRow> = hits
        .iter()
        .enumerate()
        .map(|(i, h)| {
            let n = graph.node(h.id).expect("hit refers to a node");
            QueryRow {
                rank: i + 1,
                id: h.id,
                kind: n.kind(),
                label: n.label().to_string(),
                score: h.score,
            }
        })
        .collect();
    let mut text = String::from("rank  id  kind     label  score\n");
    for r in &rows {
        let _ = writeln!(text, "{:>4}  {:>2}  {:<7}  {}  {:.6}", r.rank, r.id, r.kind, r.label, r.score);
    }
    Ok(Report {
        text,
        json: json!({ "results": rows }),
    })
}

/// Which batch `bench` runs when no scenario directory is given.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Noiseless,
    Noisy,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BenchSource {
    /// Every `*.json` scenario in a directory, in file-name order.
    Dir(PathBuf),
    /// `runs` sampled scenarios with seeds `seed..seed + runs`, alternating
    /// prismatic and revolute.
    Suite {
        suite: Suite,
        runs: usize,
        cameras: Vec<CameraKind>,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub name: String,
    #[serde(flatten)]
    pub outcome: ScenarioOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchFailure {
    pub name: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub failures: Vec<BenchFailure>,
    pub summary: BenchSummary,
}

fn suite_scenarios(
    suite: Suite,
    runs: usize,
    cameras: &[CameraKind],
    seed: u64,
    sphere: &SphereModel,
) -> Vec<(String, ScenarioConfig)> {
    let ranges = match suite {
        Suite::Noiseless => SampleRanges::noiseless(),
        Suite::Noisy => SampleRanges::default(),
    };
    let mut out = Vec::new();
    for &camera in cameras {
        for i in 0..runs as u64 {
            let s = seed.wrapping_add(i);
            let joint = if i % 2 == 0 {
                JointType::Prismatic
            } else {
                JointType::Revolute
            };
            let cam = match camera {
                CameraKind::Static => "static",
                CameraKind::Dynamic => "dynamic",
            };
            out.push((
                format!("{cam}-{joint}-{s}"),
                sample_scenario(s, joint, camera, &ranges, sphere),
            ));
        }
    }
    out
}

/// Runs the batch. Individual failures are collected; the batch always
/// completes.
pub fn run_bench(
    source: &BenchSource,
    cfg: &PipelineConfig,
    emit: Option<&Path>,
) -> Result<BenchReport> {
    let sphere = cfg.sphere()?;
    let mut scenarios: Vec<(String, std::result::Result<ScenarioConfig, String>)> = Vec::new();
    match source {
        BenchSource::Dir(dir) => {
            let entries = std::fs::read_dir(dir)
                .map_err(|e| PipelineError::input(format!("{}: {e}", dir.display())))?;
            let mut files: Vec<PathBuf> = entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "json"))
                .collect();
            files.sort();
            for p in files {
                let name = p
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                let parsed = io::read_json::<ScenarioConfig>(&p).map_err(|e| e.to_string());
                scenarios.push((name, parsed));
            }
        }
        BenchSource::Suite {
            suite,
            runs,
            cameras,
            seed,
        } => {
            for (name, c) in suite_scenarios(*suite, *runs, cameras, *seed, &sphere) {
                scenarios.push((name, Ok(c)));
            }
        }
    }
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (name, sc) in scenarios {
        let result = sc.and_then(|c| {
            if let Some(dir) = emit {
                let demo = generate(&c, &sphere).map_err(|e| e.to_string())?;
                write_demo_dataset(&dir.join(&name), &name, &demo, &sphere)
                    .map_err(|e| e.to_string())?;
            }
            run_scenario(&c, &sphere, &cfg.track, &cfg.selection).map_err(|e| e.to_string())
        });
        match result {
            Ok(outcome) => rows.push(BenchRow { name, outcome }),
            Err(error) => {
                log::warn!("scenario {name}: {error}");
                failures.push(BenchFailure { name, error });
            }
        }
    }
    let outcomes: Vec<ScenarioOutcome> = rows.iter().map(|r| r.outcome.clone()).collect();
    let summary = BenchSummary::new(&outcomes, failures.len());
    Ok(BenchReport {
        rows,
        failures,
        summary,
    })
}

fn fmt_opt(v: Option<f64>, scale: f64) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{:.4}", v * scale))
}

pub fn cmd_bench(source: &BenchSource, cfg: &PipelineConfig, emit: Option<&Path>) -> Result<Report> {
    let r = run_bench(source, cfg, emit)?;
    let mut text = format!(
        "{:<28} {:<9} {:<9} {:>10} {:>10} {:>10}\n",
        "scenario", "truth", "verdict", "T_err[cm]", "θ_err[°]", "d_err[cm]"
    );
    for row in &r.rows {
        let o = &row.outcome;
        let _ = writeln!(
            text,
            "{:<28} {:<9} {:<9} {:>10.4} {:>10.4} {:>10}",
            row.name,
            o.gt_type.to_string(),
            o.est_type.to_string(),
            o.t_err * 100.0,
            o.theta_err,
            fmt_opt(o.d_err, 100.0)
        );
    }
    for f in &r.failures {
        let _ = writeln!(text, "FAILED {}: {}", f.name, f.error);
    }
    let s = &r.summary;
    let _ = writeln!(
        text,
        "runs {} failures {} type accuracy {:.1}% median T_err {:.4} cm θ_err {:.4}° d_err {} cm",
        s.runs,
        s.failures,
        s.type_accuracy * 100.0,
        s.median_t_err * 100.0,
        s.median_theta_err,
        fmt_opt(s.median_d_err, 100.0)
    );
    Ok(Report {
        text,
        json: serde_json::to_value(&r).expect("serializable"),
    })
}

/// Writes a generated demonstration in the ingestion format: frames,
/// detections, sphere model, and the ground truth next to them.
pub fn write_demo_dataset(
    dir: &Path,
    demo_id: &str,
    demo: &SyntheticDemo,
    sphere: &SphereModel,
) -> std::result::Result<PathBuf, IoError> {
    let det = PathBuf::from(format!("{demo_id}.detections.jsonl"));
    io::write_jsonl(&dir.join(&det), &demo.detections)?;
    io::write_sphere_model(&dir.join("sphere.json"), sphere)?;
    io::write_json(
        &dir.join(format!("{demo_id}.truth.json")),
        &json!({ "axis": demo.gt_axis, "trajectory": demo.gt_trajectory }),
    )?;
    let manifest = DatasetManifest {
        demos: vec![DemoEntry {
            demo_id: demo_id.to_string(),
            frames: demo
                .frames
                .iter()
                .map(|f| FrameEntry {
                    frame_id: f.frame_id,
                    timestamp: f.timestamp,
                    intrinsics: f.intrinsics,
                    cam_pose: f.cam_pose,
                    depth: None,
                })
                .collect(),
            detections: det,
        }],
        sphere_model: Some("sphere.json".into()),
        ..Default::default()
    };
    let path = dir.join("manifest.json");
    io::write_json(&path, &manifest)?;
    Ok(path)
}

/// Writes the synthetic room (instances, frames with depth, masks,
/// embeddings) and its demonstrations as one dataset. Returns the manifest
/// path.
pub fn write_scene_dataset(
    dir: &Path,
    scene: &SyntheticScene,
    sphere: &SphereModel,
) -> std::result::Result<PathBuf, IoError> {
    let mut m = DatasetManifest::default();
    for f in &scene.frames {
        let depth = f.depth.as_ref().map(|d| {
            let p = PathBuf::from(format!("depth/{}.f32", f.frame_id));
            (p, d)
        });
        if let Some((p, d)) = &depth {
            io::write_depth(&dir.join(p), d)?;
        }
        m.frames.push(FrameEntry {
            frame_id: f.frame_id,
            timestamp: f.timestamp,
            intrinsics: f.intrinsics,
            cam_pose: f.cam_pose,
            depth: depth.map(|(p, _)| p),
        });
    }
    for o in &scene.objects {
        let p = PathBuf::from(format!("instances/{}.ply", o.instance_id));
        io::write_ply_cloud(&dir.join(&p), &o.points)?;
        m.instances.push(InstanceEntry {
            instance_id: o.instance_id,
            label: o.label.clone(),
            points: p,
        });
    }
    for (i, mk) in scene.masks.iter().enumerate() {
        let mp = PathBuf::from(format!("masks/{i}.png"));
        let ep = PathBuf::from(format!("masks/{i}.json"));
        io::write_mask(&dir.join(&mp), &mk.mask)?;
        io::write_json(&dir.join(&ep), &mk.embedding)?;
        m.masks.push(MaskEntry {
            frame_id: mk.frame_id,
            object_id: mk.object_id,
            label: mk.label.clone(),
            score: mk.score,
            mask: mp,
            embedding: Some(ep),
        });
    }
    for e in &scene.object_embeddings {
        let p = PathBuf::from(format!("embeddings/{}_{}.json", e.object_id, e.frame_id));
        io::write_json(&dir.join(&p), &e.embedding)?;
        m.embeddings.push(EmbeddingEntry {
            object_id: e.object_id,
            frame_id: e.frame_id,
            path: p,
        });
    }
    for d in &scene.demos {
        let demo = generate(&d.scenario, sphere).map_err(|e| IoError::format(dir, e.to_string()))?;
        let det = PathBuf::from(format!("demos/{}.detections.jsonl", d.demo_id));
        io::write_jsonl(&dir.join(&det), &demo.detections)?;
        m.demos.push(DemoEntry {
            demo_id: d.demo_id.clone(),
            frames: demo
                .frames
                .iter()
                .map(|f| FrameEntry {
                    frame_id: f.frame_id,
                    timestamp: f.timestamp,
                    intrinsics: f.intrinsics,
                    cam_pose: f.cam_pose,
                    depth: None,
                })
                .collect(),
            detections: det,
        });
    }
    io::write_sphere_model(&dir.join("sphere.json"), sphere)?;
    m.sphere_model = Some("sphere.json".into());
    let path = dir.join("manifest.json");
    io::write_json(&path, &m)?;
    Ok(path)
}

/// Length of the drawn revolute axis segment, m.
pub const REVOLUTE_AXIS_DISPLAY: f64 = 0.5;

fn node_color(id: NodeId) -> [u8; 3] {
    const PALETTE: [[u8; 3]; 8] = [
        [230, 25, 75],
        [60, 180, 75],
        [255, 225, 25],
        [0, 130, 200],
        [245, 130, 48],
        [145, 30, 180],
        [70, 240, 240],
        [240, 50, 230],
    ];
    PALETTE[(id % PALETTE.len() as u64) as usize]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExportSummary {
    pub files: Vec<PathBuf>,
    pub object_points: usize,
    pub element_points: usize,
    pub axes: usize,
    pub trajectories: usize,
}

/// `objects.ply`, `elements.ply` (clouds), `axes.ply` and
/// `trajectories.ply` (line sets with per-vertex direction).
pub fn export_graph(graph: &SceneGraph, dir: &Path) -> std::result::Result<ExportSummary, IoError> {
    let cloud = |nodes: Vec<(NodeId, &[Vector3<f64>])>| -> Vec<ColoredPoint> {
        nodes
            .into_iter()
            .flat_map(|(id, pts)| pts.iter().map(move |&p| ColoredPoint { p, rgb: node_color(id) }))
            .collect()
    };
    let objects = cloud(graph.objects().map(|o| (o.id, o.points.as_slice())).collect());
    let elements = cloud(graph.elements().map(|e| (e.id, e.points.as_slice())).collect());

    let mut axis_v = Vec::new();
    let mut axis_e = Vec::new();
    let mut traj_v = Vec::new();
    let mut traj_e = Vec::new();
    for el in graph.elements() {
        let rgb = node_color(el.id);
        if let Some(a) = &el.articulation {
            let half = match a.joint_type {
                JointType::Prismatic => a.range.max(0.05) / 2.0,
                JointType::Revolute => REVOLUTE_AXIS_DISPLAY / 2.0,
            };
            let base = axis_v.len();
            for s in [-half, half] {
                axis_v.push(LineVertex {
                    p: a.center + a.direction * s,
                    dir: a.direction,
                    rgb,
                });
            }
            axis_e.push((base, base + 1));
        }
        if let Some(t) = &el.trajectory {
            let base = traj_v.len();
            for (i, p) in t.iter().enumerate() {
                let dir = t
                    .get(i + 1)
                    .map(|n| n.position - p.position)
                    .and_then(|d| d.try_normalize(1e-12))
                    .unwrap_or_else(Vector3::zeros);
                traj_v.push(LineVertex {
                    p: p.position,
                    dir,
                    rgb,
                });
            }
            traj_e.extend((1..t.len()).map(|i| (base + i - 1, base + i)));
        }
    }
    let files = vec![
        dir.join("objects.ply"),
        dir.join("elements.ply"),
        dir.join("axes.ply"),
        dir.join("trajectories.ply"),
    ];
    io::write_atomic(&files[0], ply_points(&objects).as_bytes())?;
    io::write_atomic(&files[1], ply_points(&elements).as_bytes())?;
    io::write_atomic(&files[2], ply_lines(&axis_v, &axis_e).as_bytes())?;
    io::write_atomic(&files[3], ply_lines(&traj_v, &traj_e).as_bytes())?;
    Ok(ExportSummary {
        files,
        object_points: objects.len(),
        element_points: elements.len(),
        axes: axis_e.len(),
        trajectories: graph.elements().filter(|e| e.trajectory.is_some()).count(),
    })
}

pub fn cmd_export(graph_path: &Path, output_dir: &Path) -> Result<Report> {
    let graph = read_graph(graph_path)?;
    let s = export_graph(&graph, output_dir)?;
    let mut text = String::new();
    for f in &s.files {
        let _ = writeln!(text, "wrote {}", f.display());
    }
    let _ = writeln!(
        text,
        "{} object points, {} element points, {} axes, {} trajectories",
        s.object_points, s.element_points, s.axes, s.trajectories
    );
    Ok(Report {
        text,
        json: serde_json::to_value(&s).expect("serializable"),
    })
}
