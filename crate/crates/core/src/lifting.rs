//! Object-node construction from instance segments and multi-view lifting of
//! 2D element masks into denoised 3D element clouds.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::backproject;
use crate::graph::{GraphError, NodeId, SceneGraph};
use crate::views::{visible_projection, FrameRecord};

pub const NOISE: i32 = -1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LiftError {
    #[error("every point was classified as noise")]
    AllNoise,
    #[error("no object point projects validly into the frame")]
    NoVisiblePoints,
    #[error("invalid cluster parameters: {0}")]
    InvalidParams(String),
    #[error("mask is {got_w}x{got_h}, frame is {want_w}x{want_h}")]
    MaskSize {
        got_w: u32,
        got_h: u32,
        want_w: u32,
        want_h: u32,
    },
    #[error("mask has no set pixels")]
    EmptyMask,
}

/// DBSCAN parameters. Neighborhoods are closed balls of radius `eps` that
/// include the query point itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterParams {
    pub eps: f64,
    pub min_pts: usize,
}

impl ClusterParams {
    pub const ELEMENT: ClusterParams = ClusterParams {
        eps: 0.02,
        min_pts: 10,
    };
    pub const OBJECT: ClusterParams = ClusterParams {
        eps: 0.05,
        min_pts: 20,
    };

    pub fn new(eps: f64, min_pts: usize) -> Result<Self, LiftError> {
        let p = Self { eps, min_pts };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), LiftError> {
        if !(self.eps > 0.0) || !self.eps.is_finite() {
            return Err(LiftError::InvalidParams(format!("eps = {}", self.eps)));
        }
        if self.min_pts < 1 {
            return Err(LiftError::InvalidParams("min_pts must be >= 1".into()));
        }
        Ok(())
    }
}

struct GridIndex<'a> {
    points: &'a [Vector3<f64>],
    cell: f64,
    cells: HashMap<(i64, i64, i64), Vec<usize>>,
}

impl<'a> GridIndex<'a> {
    fn new(points: &'a [Vector3<f64>], cell: f64) -> Self {
        let mut cells: HashMap<_, Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(p, cell)).or_default().push(i);
        }
        Self {
            points,
            cell,
            cells,
        }
    }

    fn key(p: &Vector3<f64>, cell: f64) -> (i64, i64, i64) {
        let f = |v: f64| (v / cell).floor() as i64;
        (f(p.x), f(p.y), f(p.z))
    }

    /// Indices within `eps` of point `i`, ascending.
    fn neighbors(&self, i: usize, eps: f64) -> Vec<usize> {
        let p = &self.points[i];
        let (kx, ky, kz) = Self::key(p, self.cell);
        let eps2 = eps * eps;
        let mut out = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(bucket) = self.cells.get(&(kx + dx, ky + dy, kz + dz)) {
                        out.extend(
                            bucket
                                .iter()
                                .copied()
                                .filter(|&j| (self.points[j] - p).norm_squared() <= eps2),
                        );
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// Density-based clustering. Returns one label per point, [`NOISE`] for
/// noise; clusters are numbered in order of their lowest-index core point
/// and a border point joins the first cluster that reaches it.
pub fn dbscan(points: &[Vector3<f64>], params: &ClusterParams) -> Vec<i32> {
    const UNSEEN: i32 = i32::MIN;
    let index = GridIndex::new(points, params.eps);
    let mut labels = vec![UNSEEN; points.len()];
    let mut cluster = 0;
    for i in 0..points.len() {
        if labels[i] != UNSEEN {
            continue;
        }
        let nb = index.neighbors(i, params.eps);
        if nb.len() < params.min_pts {
            labels[i] = NOISE;
            continue;
        }
        labels[i] = cluster;
        let mut queue: VecDeque<usize> = nb.into_iter().collect();
        while let Some(j) = queue.pop_front() {
            if labels[j] == NOISE {
                labels[j] = cluster;
                continue;
            }
            if labels[j] != UNSEEN {
                continue;
            }
            labels[j] = cluster;
            let nbj = index.neighbors(j, params.eps);
            if nbj.len() >= params.min_pts {
                queue.extend(nbj);
            }
        }
        cluster += 1;
    }
    labels
}

/// Keeps the most populous cluster (lowest label on ties).
pub fn denoise_largest(
    points: &[Vector3<f64>],
    params: &ClusterParams,
) -> Result<Vec<Vector3<f64>>, LiftError> {
    let labels = dbscan(points, params);
    let mut counts: BTreeMap<i32, usize> = BTreeMap::new();
    for &l in labels.iter().filter(|&&l| l != NOISE) {
        *counts.entry(l).or_default() += 1;
    }
    let best = counts
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .map(|(&l, _)| l)
        .ok_or(LiftError::AllNoise)?;
    Ok(points
        .iter()
        .zip(&labels)
        .filter(|(_, &l)| l == best)
        .map(|(p, _)| *p)
        .collect())
}

/// Axis-aligned pixel rectangle, inclusive bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelRect {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl PixelRect {
    pub fn contains(&self, col: u32, row: u32) -> bool {
        let (c, r) = (col as f64, row as f64);
        c >= self.x_min && c <= self.x_max && r >= self.y_min && r <= self.y_max
    }
}

/// Bounding box of the object's valid projections, grown by `expansion`
/// (a fraction of the box size) on each side and clamped to the image.
pub fn crop_rect(
    object_points: &[Vector3<f64>],
    frame: &FrameRecord,
    expansion: f64,
    depth_tol: f64,
) -> Result<PixelRect, LiftError> {
    let mut lo = Vector2::repeat(f64::INFINITY);
    let mut hi = Vector2::repeat(f64::NEG_INFINITY);
    let mut any = false;
    for p in object_points {
        if let Some(px) = visible_projection(p, frame, depth_tol) {
            lo = lo.inf(&px);
            hi = hi.sup(&px);
            any = true;
        }
    }
    if !any {
        return Err(LiftError::NoVisiblePoints);
    }
    let grow = (hi - lo) * expansion;
    let w = (frame.intrinsics.width - 1) as f64;
    let h = (frame.intrinsics.height - 1) as f64;
    Ok(PixelRect {
        x_min: (lo.x - grow.x).clamp(0.0, w),
        y_min: (lo.y - grow.y).clamp(0.0, h),
        x_max: (hi.x + grow.x).clamp(0.0, w),
        y_max: (hi.y + grow.y).clamp(0.0, h),
    })
}

/// Binary mask, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    pub width: u32,
    pub height: u32,
    pub data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32, data: Vec<bool>) -> Result<Self, LiftError> {
        if data.len() != width as usize * height as usize {
            return Err(LiftError::MaskSize {
                got_w: data.len() as u32,
                got_h: 1,
                want_w: width,
                want_h: height,
            });
        }
        if !data.iter().any(|&b| b) {
            return Err(LiftError::EmptyMask);
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn set_pixels(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| ((i % self.width as usize) as u32, (i / self.width as usize) as u32))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElementMask {
    pub frame_id: u64,
    /// Instance id of the object the mask was detected in.
    pub object_id: u64,
    pub label: String,
    pub mask: BinaryMask,
    pub detection_score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceSegment {
    pub instance_id: u64,
    pub label: String,
    pub points: Vec<Vector3<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LiftParams {
    pub cluster: ClusterParams,
    /// Radius used to split same-label groups into separate elements.
    pub split_eps: f64,
    /// Groups whose best detection scores below this are discarded.
    pub min_detection_score: f64,
}

impl Default for LiftParams {
    fn default() -> Self {
        Self {
            cluster: ClusterParams::ELEMENT,
            split_eps: 0.15,
            min_detection_score: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LiftedElement {
    pub object_id: u64,
    pub label: String,
    pub points: Vec<Vector3<f64>>,
    /// Frames whose masks contributed at least one point.
    pub frame_ids: Vec<u64>,
    pub max_score: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LiftReport {
    pub groups: usize,
    pub dropped_low_confidence: usize,
    pub dropped_all_noise: usize,
    pub masks_missing_frame: usize,
    pub masks_bad_size: usize,
}

/// Back-projects every mask, merges views per `(object_id, label)`, splits
/// spatially separate parts, and keeps the denoised bulk of each part.
pub fn lift_masks(
    masks: &[ElementMask],
    frames: &[FrameRecord],
    params: &LiftParams,
) -> (Vec<LiftedElement>, LiftReport) {
    let by_id: HashMap<u64, &FrameRecord> = frames.iter().map(|f| (f.frame_id, f)).collect();
    let mut report = LiftReport::default();
    let mut groups: BTreeMap<(u64, String), Vec<&ElementMask>> = BTreeMap::new();
    for m in masks {
        groups
            .entry((m.object_id, m.label.clone()))
            .or_default()
            .push(m);
    }
    report.groups = groups.len();

    let mut out = Vec::new();
    for ((object_id, label), group) in groups {
        let max_score = group
            .iter()
            .map(|m| m.detection_score)
            .fold(f64::NEG_INFINITY, f64::max);
        if max_score < params.min_detection_score {
            report.dropped_low_confidence += 1;
            continue;
        }
        // (point, frame id)
        let mut cloud: Vec<(Vector3<f64>, u64)> = Vec::new();
        for m in group {
            let Some(frame) = by_id.get(&m.frame_id) else {
                report.masks_missing_frame += 1;
                continue;
            };
            let k = &frame.intrinsics;
            if m.mask.width != k.width || m.mask.height != k.height {
                report.masks_bad_size += 1;
                continue;
            }
            let Some(depth) = &frame.depth else {
                continue;
            };
            for (col, row) in m.mask.set_pixels() {
                let Some(d) = depth.get(col, row) else {
                    continue;
                };
                let px = Vector2::new(col as f64, row as f64);
                if let Ok(p) = backproject(&px, d, &frame.cam_pose, k) {
                    cloud.push((p, m.frame_id));
                }
            }
        }
        // a fixed point order makes the result independent of view order
        cloud.sort_by(|a, b| {
            a.0.x
                .total_cmp(&b.0.x)
                .then(a.0.y.total_cmp(&b.0.y))
                .then(a.0.z.total_cmp(&b.0.z))
                .then(a.1.cmp(&b.1))
        });
        let pts: Vec<Vector3<f64>> = cloud.iter().map(|c| c.0).collect();
        let split = dbscan(
            &pts,
            &ClusterParams {
                eps: params.split_eps,
                min_pts: 1,
            },
        );
        let n_parts = split.iter().copied().max().map_or(0, |m| m + 1);
        let mut kept_any = false;
        for part in 0..n_parts {
            let members: Vec<usize> = (0..pts.len()).filter(|&i| split[i] == part).collect();
            let part_pts: Vec<Vector3<f64>> = members.iter().map(|&i| pts[i]).collect();
            let labels = dbscan(&part_pts, &params.cluster);
            let mut counts: BTreeMap<i32, usize> = BTreeMap::new();
            for &l in labels.iter().filter(|&&l| l != NOISE) {
                *counts.entry(l).or_default() += 1;
            }
            let Some(best) = counts
                .iter()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
                .map(|(&l, _)| l)
            else {
                continue;
            };
            let mut frame_ids = BTreeSet::new();
            let mut points = Vec::new();
            for (idx, &l) in members.iter().zip(&labels) {
                if l == best {
                    points.push(cloud[*idx].0);
                    frame_ids.insert(cloud[*idx].1);
                }
            }
            kept_any = true;
            out.push(LiftedElement {
                object_id,
                label: label.clone(),
                points,
                frame_ids: frame_ids.into_iter().collect(),
                max_score,
            });
        }
        if !kept_any {
            report.dropped_all_noise += 1;
        }
    }
    (out, report)
}

/// Denoises each instance and inserts it as an object node. Returns the
/// instance→node mapping and the instance ids that were pure noise.
pub fn build_object_nodes(
    graph: &mut SceneGraph,
    segments: &[InstanceSegment],
    params: &ClusterParams,
) -> Result<(BTreeMap<u64, NodeId>, Vec<u64>), GraphError> {
    let mut map = BTreeMap::new();
    let mut dropped = Vec::new();
    for seg in segments {
        match denoise_largest(&seg.points, params) {
            Ok(points) => {
                let id = graph.add_object_node(seg.label.clone(), points, None)?;
                map.insert(seg.instance_id, id);
            }
            Err(_) => dropped.push(seg.instance_id),
        }
    }
    Ok((map, dropped))
}
