//! Synthetic articulated demonstrations with known ground truth, and the
//! evaluation metrics used to score the pipeline against them.
//!
//! Pixel noise and marker dropout are drawn from a random stream keyed by
//! `(seed, frame, marker)`, so two scenarios that differ only in the camera
//! path see the same noise realization in pixel space.

pub mod scene;

use std::time::Instant;

use nalgebra::{Unit, UnitQuaternion, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::articulation::{select_joint_with, FitError, SelectionConfig};
use crate::geometry::{look_at, CameraIntrinsics, Pose};
use crate::graph::{ArticulationAxis, GraphError, JointType, NodeId, SceneGraph};
use crate::tracking::{
    marker_normal, track, MarkerDetection, SphereModel, TimedPose, TrackConfig, TrackError,
};
use crate::views::FrameRecord;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BenchError {
    #[error("invalid scenario: {0}")]
    InvalidConfig(String),
    #[error("sequence lengths differ after alignment ({est} vs {gt})")]
    LengthMismatch { est: usize, gt: usize },
    #[error("axis position error needs two revolute axes")]
    JointTypeMismatch,
    #[error(transparent)]
    Track(#[from] TrackError),
    #[error(transparent)]
    Fit(#[from] FitError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MotionProfile {
    /// `(1 − cos πτ) / 2`: starts and stops at rest.
    #[default]
    Ease,
    Constant,
}

impl MotionProfile {
    /// Fraction of the full motion completed at normalized time `tau ∈ [0, 1]`.
    pub fn progress(self, tau: f64) -> f64 {
        let tau = tau.clamp(0.0, 1.0);
        match self {
            MotionProfile::Ease => (1.0 - (std::f64::consts::PI * tau).cos()) / 2.0,
            MotionProfile::Constant => tau,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum CameraPath {
    Static {
        #[serde(with = "crate::graph::vec3")]
        eye: Vector3<f64>,
        #[serde(with = "crate::graph::vec3")]
        target: Vector3<f64>,
    },
    /// Head-mounted camera circling `center` while keeping its gaze on the
    /// marker sphere, with per-frame head jitter.
    Orbit {
        #[serde(with = "crate::graph::vec3")]
        center: Vector3<f64>,
        radius: f64,
        height: f64,
        start_angle: f64,
        /// rad/s
        angular_speed: f64,
        jitter_pos: f64,
        jitter_gaze: f64,
    },
    /// Explicit `world←cam` pose for every frame.
    Poses { poses: Vec<Pose> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Ground truth; `range` is the travel (m) or sweep (rad).
    pub axis: ArticulationAxis,
    /// Tip pose at the start of the demonstration.
    pub tip_start: Pose,
    pub duration: f64,
    #[serde(default)]
    pub profile: MotionProfile,
    pub camera: CameraPath,
    pub intrinsics: CameraIntrinsics,
    pub pixel_noise_sigma: f64,
    pub dropout_rate: f64,
    pub frame_rate: f64,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn joint_type(&self) -> JointType {
        self.axis.joint_type
    }

    pub fn num_frames(&self) -> usize {
        (self.duration * self.frame_rate + 1e-9).floor() as usize + 1
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: String| Err(BenchError::InvalidConfig(m));
        self.axis
            .validate()
            .map_err(|e| BenchError::InvalidConfig(e.to_string()))?;
        self.intrinsics
            .validate()
            .map_err(|e| BenchError::InvalidConfig(e.to_string()))?;
        if !(self.pixel_noise_sigma >= 0.0) {
            return bad(format!("pixel_noise_sigma {} < 0", self.pixel_noise_sigma));
        }
        if !(0.0..=1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout_rate {} outside [0, 1]", self.dropout_rate));
        }
        if !(self.frame_rate > 0.0 && self.frame_rate.is_finite()) {
            return bad(format!("frame_rate {} must be positive", self.frame_rate));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return bad(format!("duration {} must be positive", self.duration));
        }
        if self.axis.joint_type == JointType::Revolute {
            let d = self.axis.direction.normalize();
            let v = self.tip_start.position - self.axis.center;
            if (v - d * v.dot(&d)).norm() < 1e-6 {
                return bad("revolute tip starts on the hinge axis".into());
            }
        }
        if let CameraPath::Poses { poses } = &self.camera {
            if poses.len() != self.num_frames() {
                return bad(format!(
                    "{} camera poses for {} frames",
                    poses.len(),
                    self.num_frames()
                ));
            }
        }
        if let CameraPath::Orbit { radius, .. } = &self.camera {
            if !(*radius > 0.0) {
                return bad("orbit radius must be positive".into());
            }
        }
        Ok(())
    }

    /// Analytic tip pose at time `t`.
    pub fn tip_pose(&self, t: f64) -> Pose {
        let s = self.profile.progress(t / self.duration) * self.axis.range;
        let d = Unit::new_normalize(self.axis.direction);
        match self.axis.joint_type {
            JointType::Prismatic => Pose::new(
                self.tip_start.position + d.into_inner() * s,
                self.tip_start.orientation,
            ),
            JointType::Revolute => {
                let rot = UnitQuaternion::from_axis_angle(&d, s);
                let c = self.axis.center;
                Pose::new(
                    c + rot * (self.tip_start.position - c),
                    rot * self.tip_start.orientation,
                )
            }
        }
    }
}

/// Everything the pipeline would ingest for one demonstration, plus truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDemo {
    pub gt_trajectory: Vec<TimedPose>,
    pub gt_axis: ArticulationAxis,
    pub frames: Vec<FrameRecord>,
    pub detections: Vec<MarkerDetection>,
}

const CAMERA_STREAM: u64 = u64::MAX;

fn marker_stream(frame: u64, marker: u32) -> u64 {
    (frame << 16) | marker as u64
}

fn camera_pose(
    cfg: &ScenarioConfig,
    i: usize,
    t: f64,
    sphere_pos: &Vector3<f64>,
    rng: &mut ChaCha8Rng,
) -> Pose {
    match &cfg.camera {
        CameraPath::Static { eye, target } => look_at(*eye, *target, Vector3::z()),
        CameraPath::Orbit {
            center,
            radius,
            height,
            start_angle,
            angular_speed,
            jitter_pos,
            jitter_gaze,
        } => {
            let a = start_angle + angular_speed * t;
            let mut eye = center + Vector3::new(radius * a.cos(), radius * a.sin(), *height);
            let mut gaze = *sphere_pos;
            let jp = Normal::new(0.0, jitter_pos.max(0.0)).expect("finite");
            let jg = Normal::new(0.0, jitter_gaze.max(0.0)).expect("finite");
            eye += Vector3::from_fn(|_, _| jp.sample(rng));
            gaze += Vector3::from_fn(|_, _| jg.sample(rng));
            look_at(eye, gaze, Vector3::z())
        }
        CameraPath::Poses { poses } => poses[i],
    }
}

/// Renders marker-corner detections of the moving sphere.
pub fn generate(cfg: &ScenarioConfig, sphere: &SphereModel) -> Result<SyntheticDemo, BenchError> {
    cfg.validate()?;
    let n = cfg.num_frames();
    let k = cfg.intrinsics;
    let noise = Normal::new(0.0, cfg.pixel_noise_sigma).expect("validated");
    let mut cam_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    cam_rng.set_stream(CAMERA_STREAM);
    let sphere_t_tip_inv = sphere.tip_offset.inverse();

    let mut gt_trajectory = Vec::with_capacity(n);
    let mut frames = Vec::with_capacity(n);
    let mut detections = Vec::new();
    for i in 0..n {
        let t = i as f64 / cfg.frame_rate;
        let tip = cfg.tip_pose(t);
        let world_t_sphere = tip.compose(&sphere_t_tip_inv);
        let cam = camera_pose(cfg, i, t, &world_t_sphere.position, &mut cam_rng);
        let cam_t_sphere = cam.inverse().compose(&world_t_sphere);
        let frame_id = i as u64;

        for (&id, corners) in &sphere.markers {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(marker_stream(frame_id, id));
            let drop = rng.random::<f64>() < cfg.dropout_rate;
            let jitter: [Vector2<f64>; 4] =
                std::array::from_fn(|_| Vector2::new(noise.sample(&mut rng), noise.sample(&mut rng)));
            if drop {
                continue;
            }
            let normal = cam_t_sphere.orientation * marker_normal(corners);
            let center = cam_t_sphere.transform_point(&((corners[0] + corners[2]) / 2.0));
            if normal.dot(&center) >= 0.0 {
                continue;
            }
            let mut px = [Vector2::zeros(); 4];
            let mut visible = true;
            for c in 0..4 {
                match k.project_cam(&cam_t_sphere.transform_point(&corners[c])) {
                    Ok(p) if k.contains(&(p + jitter[c])) => px[c] = p + jitter[c],
                    _ => visible = false,
                }
            }
            if visible {
                detections.push(MarkerDetection {
                    frame_id,
                    marker_id: id,
                    corners: px,
                });
            }
        }
        gt_trajectory.push(TimedPose { t, pose: tip });
        frames.push(FrameRecord::new(frame_id, t, k, cam, None).expect("no raster"));
    }
    Ok(SyntheticDemo {
        gt_trajectory,
        gt_axis: cfg.axis.clone(),
        frames,
        detections,
    })
}

/// `√(mean ‖p_est − p_gt‖²)` over paired poses.
pub fn trajectory_rmse(est: &[Pose], gt: &[Pose]) -> Result<f64, BenchError> {
    if est.len() != gt.len() || est.is_empty() {
        return Err(BenchError::LengthMismatch {
            est: est.len(),
            gt: gt.len(),
        });
    }
    let sq: f64 = est
        .iter()
        .zip(gt)
        .map(|(a, b)| (a.position - b.position).norm_squared())
        .sum();
    Ok((sq / est.len() as f64).sqrt())
}

/// Pairs every estimate with the ground-truth sample nearest in time, if it
/// lies within `tolerance` seconds. Returns the pairs and the number of
/// estimates left without a partner.
pub fn align_by_timestamp(
    est: &[TimedPose],
    gt: &[TimedPose],
    tolerance: f64,
) -> (Vec<(Pose, Pose)>, usize) {
    let mut pairs = Vec::new();
    let mut unmatched = 0;
    for e in est {
        let j = gt.partition_point(|g| g.t < e.t);
        let best = [j.checked_sub(1), Some(j)]
            .into_iter()
            .flatten()
            .filter(|&j| j < gt.len())
            .min_by(|&a, &b| (gt[a].t - e.t).abs().total_cmp(&(gt[b].t - e.t).abs()));
        match best {
            Some(j) if (gt[j].t - e.t).abs() <= tolerance => pairs.push((e.pose, gt[j].pose)),
            _ => unmatched += 1,
        }
    }
    (pairs, unmatched)
}

/// Angle between two axis lines, in degrees; the sign of either direction
/// does not matter.
pub fn axis_angular_error(est: &Vector3<f64>, gt: &Vector3<f64>) -> f64 {
    let c = (est.normalize().dot(&gt.normalize())).abs().min(1.0);
    c.acos().to_degrees()
}

/// Distance from the estimated center to the ground-truth axis line.
pub fn axis_position_error(est: &ArticulationAxis, gt: &ArticulationAxis) -> Result<f64, BenchError> {
    if est.joint_type != JointType::Revolute || gt.joint_type != JointType::Revolute {
        return Err(BenchError::JointTypeMismatch);
    }
    let d = gt.direction.normalize();
    let v = est.center - gt.center;
    Ok((v - d * v.dot(&d)).norm())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub matched: usize,
}

/// Greedy one-to-one matching of predicted to ground-truth element centroids
/// by ascending distance. Precision is 0 when nothing was predicted.
pub fn detection_prf(pred: &[Vector3<f64>], gt: &[Vector3<f64>], match_dist: f64) -> Prf {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, p) in pred.iter().enumerate() {
        for (j, g) in gt.iter().enumerate() {
            let d = (p - g).norm();
            if d <= match_dist {
                pairs.push((d, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_p = vec![false; pred.len()];
    let mut used_g = vec![false; gt.len()];
    let mut matched = 0;
    for (_, i, j) in pairs {
        if !used_p[i] && !used_g[j] {
            used_p[i] = true;
            used_g[j] = true;
            matched += 1;
        }
    }
    let ratio = |n: usize| if n == 0 { 0.0 } else { matched as f64 / n as f64 };
    let precision = ratio(pred.len());
    let recall = ratio(gt.len());
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Prf {
        precision,
        recall,
        f1,
        matched,
    }
}

/// Fraction of queries whose ground-truth node is among the top `k` hits.
pub fn recall_at_k(
    graph: &SceneGraph,
    queries: &[(Vec<f64>, NodeId)],
    k: usize,
) -> Result<f64, GraphError> {
    if queries.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0;
    for (feature, gt) in queries {
        if graph.query(feature, k)?.iter().any(|h| h.id == *gt) {
            hits += 1;
        }
    }
    Ok(hits as f64 / queries.len() as f64)
}

/// Corner noise the default filter R₀ is calibrated for.
pub const NOMINAL_PIXEL_NOISE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioOutcome {
    pub seed: u64,
    pub gt_type: JointType,
    pub est_type: JointType,
    pub t_err: f64,
    pub theta_err: f64,
    /// Only when both the truth and the verdict are revolute.
    pub d_err: Option<f64>,
    pub low_confidence: bool,
    pub tracked_frames: usize,
    pub total_frames: usize,
    /// Wall-clock; left out of serialized reports so they stay reproducible.
    #[serde(skip)]
    pub seconds: f64,
}

/// generate → track → select_joint → metrics. The filter's R₀ is rescaled
/// to the scenario's corner noise.
pub fn run_scenario(
    cfg: &ScenarioConfig,
    sphere: &SphereModel,
    track_cfg: &TrackConfig,
    selection: &SelectionConfig,
) -> Result<ScenarioOutcome, BenchError> {
    let t0 = Instant::now();
    let demo = generate(cfg, sphere)?;
    let tcfg = TrackConfig {
        filter: track_cfg
            .filter
            .scaled_to_pixel_noise(cfg.pixel_noise_sigma, NOMINAL_PIXEL_NOISE),
        ..*track_cfg
    };
    let out = track(&demo.detections, &demo.frames, sphere, &tcfg)?;
    let positions: Vec<Vector3<f64>> = out.trajectory.iter().map(|p| p.pose.position).collect();
    let verdict = select_joint_with(&positions, selection)?;
    let (pairs, _) = align_by_timestamp(&out.trajectory, &demo.gt_trajectory, 0.5 / cfg.frame_rate);
    let (est, gt): (Vec<Pose>, Vec<Pose>) = pairs.into_iter().unzip();
    let t_err = trajectory_rmse(&est, &gt)?;
    let theta_err = axis_angular_error(&verdict.axis.direction, &demo.gt_axis.direction);
    let d_err = axis_position_error(&verdict.axis, &demo.gt_axis).ok();
    Ok(ScenarioOutcome {
        seed: cfg.seed,
        gt_type: cfg.joint_type(),
        est_type: verdict.joint_type,
        t_err,
        theta_err,
        d_err,
        low_confidence: verdict.low_confidence,
        tracked_frames: out.stats.tracked,
        total_frames: demo.frames.len(),
        seconds: t0.elapsed().as_secs_f64(),
    })
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchSummary {
    pub runs: usize,
    pub failures: usize,
    pub type_accuracy: f64,
    pub median_t_err: f64,
    pub median_theta_err: f64,
    /// Over runs where truth and verdict are both revolute.
    pub median_d_err: Option<f64>,
    pub max_t_err: f64,
    pub max_theta_err: f64,
    pub max_d_err: Option<f64>,
}

impl BenchSummary {
    /// Failed runs count against type accuracy.
    pub fn new(outcomes: &[ScenarioOutcome], failures: usize) -> Self {
        let runs = outcomes.len() + failures;
        let correct = outcomes.iter().filter(|o| o.gt_type == o.est_type).count();
        let t: Vec<f64> = outcomes.iter().map(|o| o.t_err).collect();
        let th: Vec<f64> = outcomes.iter().map(|o| o.theta_err).collect();
        let d: Vec<f64> = outcomes.iter().filter_map(|o| o.d_err).collect();
        let max = |v: &[f64]| v.iter().copied().fold(f64::NAN, f64::max);
        Self {
            runs,
            failures,
            type_accuracy: if runs == 0 { 0.0 } else { correct as f64 / runs as f64 },
            median_t_err: median(&t).unwrap_or(f64::NAN),
            median_theta_err: median(&th).unwrap_or(f64::NAN),
            median_d_err: median(&d),
            max_t_err: max(&t),
            max_theta_err: max(&th),
            max_d_err: (!d.is_empty()).then(|| max(&d)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CameraKind {
    Static,
    Dynamic,
}

/// Parameter ranges for randomly drawn scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleRanges {
    pub travel: (f64, f64),
    /// radians
    pub sweep: (f64, f64),
    pub radius: (f64, f64),
    pub duration: (f64, f64),
    pub pixel_noise_sigma: f64,
    pub dropout_rate: f64,
    pub frame_rate: f64,
}

impl Default for SampleRanges {
    fn default() -> Self {
        Self {
            travel: (0.2, 0.5),
            sweep: (60f64.to_radians(), 120f64.to_radians()),
            radius: (0.3, 0.6),
            duration: (2.0, 4.0),
            pixel_noise_sigma: 0.5,
            dropout_rate: 0.1,
            frame_rate: 30.0,
        }
    }
}

impl SampleRanges {
    /// Wider geometry, no noise.
    pub fn noiseless() -> Self {
        Self {
            travel: (0.1, 0.5),
            sweep: (20f64.to_radians(), 170f64.to_radians()),
            radius: (0.2, 0.8),
            pixel_noise_sigma: 0.0,
            dropout_rate: 0.0,
            ..Self::default()
        }
    }
}

/// The 1280×720 colour stream of a typical head-mounted RGB-D sensor.
pub fn default_intrinsics() -> CameraIntrinsics {
    CameraIntrinsics {
        fx: 900.0,
        fy: 900.0,
        cx: 640.0,
        cy: 360.0,
        width: 1280,
        height: 720,
    }
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    let n = Normal::new(0.0, 1.0).expect("finite");
    loop {
        let v = Vector3::from_fn(|_, _| n.sample(rng));
        if v.norm() > 1e-6 {
            return v.normalize();
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Draws a cabinet-scale demonstration. The joint geometry depends only on
/// `seed`, so the same seed with `Static` and `Dynamic` cameras gives the
/// same ground-truth motion.
pub fn sample_scenario(
    seed: u64,
    joint_type: JointType,
    camera: CameraKind,
    ranges: &SampleRanges,
    sphere: &SphereModel,
) -> ScenarioConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let center = Vector3::new(
        rng.random_range(-0.3..0.3),
        rng.random_range(-0.3..0.3),
        rng.random_range(0.5..1.1),
    );
    let azimuth = rng.random_range(0.0..std::f64::consts::TAU);
    let tilt: f64 = rng.random_range(-0.2..0.2);
    let horizontal = Vector3::new(azimuth.cos(), azimuth.sin(), tilt).normalize();
    let tip_orientation = UnitQuaternion::from_scaled_axis(random_unit(&mut rng) * rng.random_range(0.0..3.0));
    let duration = uniform(&mut rng, ranges.duration);

    let (axis, tip_start) = match joint_type {
        JointType::Prismatic => {
            let travel = uniform(&mut rng, ranges.travel);
            (
                ArticulationAxis {
                    joint_type,
                    center: center + horizontal * travel / 2.0,
                    direction: horizontal,
                    range: travel,
                },
                center,
            )
        }
        JointType::Revolute => {
            // vertical door hinge or horizontal drop-down hinge
            let direction = if rng.random_bool(0.5) {
                Vector3::new(tilt * 0.5, -tilt * 0.5, 1.0).normalize()
            } else {
                horizontal
            };
            let sweep = uniform(&mut rng, ranges.sweep);
            let radius = uniform(&mut rng, ranges.radius);
            let mut u = random_unit(&mut rng);
            u = (u - direction * u.dot(&direction)).normalize();
            (
                ArticulationAxis {
                    joint_type,
                    center,
                    direction,
                    range: sweep,
                },
                center + u * radius,
            )
        }
    };

    let mut cfg = ScenarioConfig {
        axis,
        tip_start: Pose::new(tip_start, tip_orientation),
        duration,
        profile: MotionProfile::Ease,
        camera: CameraPath::Static {
            eye: Vector3::zeros(),
            target: Vector3::zeros(),
        },
        intrinsics: default_intrinsics(),
        pixel_noise_sigma: ranges.pixel_noise_sigma,
        dropout_rate: ranges.dropout_rate,
        frame_rate: ranges.frame_rate,
        seed,
    };

    // frame the whole sphere path with some margin
    let inv = sphere.tip_offset.inverse();
    let path: Vec<Vector3<f64>> = (0..=20)
        .map(|i| cfg.tip_pose(cfg.duration * i as f64 / 20.0).compose(&inv).position)
        .collect();
    let mid = path.iter().sum::<Vector3<f64>>() / path.len() as f64;
    let extent = path.iter().map(|p| (p - mid).norm()).fold(0.0, f64::max) + 0.1;
    let k = cfg.intrinsics;
    let half_fov = (k.cy / k.fy).atan().min((k.cx / k.fx).atan());
    let dist = (1.3 * extent / half_fov.tan()).max(0.8);
    let elevation: f64 = rng.random_range(0.3..0.6);
    let view_az = rng.random_range(0.0..std::f64::consts::TAU);
    cfg.camera = match camera {
        CameraKind::Static => CameraPath::Static {
            eye: mid
                + Vector3::new(
                    view_az.cos() * elevation.cos(),
                    view_az.sin() * elevation.cos(),
                    elevation.sin(),
                ) * dist,
            target: mid,
        },
        CameraKind::Dynamic => {
            let span = rng.random_range(40f64.to_radians()..80f64.to_radians());
            let dir = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            CameraPath::Orbit {
                center: mid,
                radius: dist * elevation.cos(),
                height: dist * elevation.sin(),
                start_angle: view_az,
                angular_speed: dir * span / cfg.duration,
                jitter_pos: 0.01,
                jitter_gaze: 0.02,
            }
        }
    };
    cfg
}
