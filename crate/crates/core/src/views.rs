//! Per-frame visibility scoring, top-k view selection and
//! contribution-weighted feature aggregation.

use nalgebra::Vector3;
use thiserror::Error;

use crate::geometry::{project, CameraIntrinsics, Pose};

pub const DEFAULT_DEPTH_TOL: f64 = 0.03;
pub const DEFAULT_TOP_K: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ViewError {
    #[error("depth raster is {got_w}x{got_h}, expected {want_w}x{want_h}")]
    RasterSize {
        got_w: u32,
        got_h: u32,
        want_w: u32,
        want_h: u32,
    },
    #[error("feature and score lists differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("no features to aggregate")]
    Empty,
    #[error("weights must be non-negative with a positive sum")]
    ZeroWeightSum,
    #[error("features have inconsistent dimensions")]
    DimensionMismatch,
    #[error("weighted feature sum is the zero vector")]
    DegenerateSum,
}

/// Row-major metric depth image. Non-positive or non-finite entries are
/// invalid pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthRaster {
    width: u32,
    height: u32,
    data: Vec<f32>,
}

impl DepthRaster {
    pub fn new(width: u32, height: u32, data: Vec<f32>) -> Result<Self, ViewError> {
        if data.len() != width as usize * height as usize {
            return Err(ViewError::RasterSize {
                got_w: data.len() as u32,
                got_h: 1,
                want_w: width,
                want_h: height,
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: u32, height: u32, value: f32) -> Self {
        Self {
            width,
            height,
            data: vec![value; width as usize * height as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn set(&mut self, col: u32, row: u32, depth: f32) {
        let i = row as usize * self.width as usize + col as usize;
        self.data[i] = depth;
    }

    pub fn raw(&self, col: u32, row: u32) -> f32 {
        self.data[row as usize * self.width as usize + col as usize]
    }

    /// Depth in meters, `None` for invalid pixels or out-of-range indices.
    pub fn get(&self, col: u32, row: u32) -> Option<f64> {
        if col >= self.width || row >= self.height {
            return None;
        }
        let d = self.raw(col, row) as f64;
        (d > 0.0 && d.is_finite()).then_some(d)
    }
}

/// One posed observation.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub frame_id: u64,
    pub timestamp: f64,
    pub intrinsics: CameraIntrinsics,
    /// world←cam
    pub cam_pose: Pose,
    pub depth: Option<DepthRaster>,
}

impl FrameRecord {
    pub fn new(
        frame_id: u64,
        timestamp: f64,
        intrinsics: CameraIntrinsics,
        cam_pose: Pose,
        depth: Option<DepthRaster>,
    ) -> Result<Self, ViewError> {
        if let Some(d) = &depth {
            if d.width != intrinsics.width || d.height != intrinsics.height {
                return Err(ViewError::RasterSize {
                    got_w: d.width,
                    got_h: d.height,
                    want_w: intrinsics.width,
                    want_h: intrinsics.height,
                });
            }
        }
        Ok(Self {
            frame_id,
            timestamp,
            intrinsics,
            cam_pose,
            depth,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContributionScore {
    pub frame_id: u64,
    pub object_id: u64,
    pub score: f64,
}

/// Projects a point and applies the visibility rule used for scoring and
/// cropping: in-bounds, in front of the camera, and consistent with the depth
/// raster at the nearest pixel. Returns the continuous pixel position.
pub fn visible_projection(
    point: &Vector3<f64>,
    frame: &FrameRecord,
    depth_tol: f64,
) -> Option<nalgebra::Vector2<f64>> {
    let (px, z) = project(point, &frame.cam_pose, &frame.intrinsics).ok()?;
    let (col, row) = frame.intrinsics.nearest_pixel(&px)?;
    match &frame.depth {
        Some(raster) => {
            let d = raster.get(col, row)?;
            ((z - d).abs() <= depth_tol).then_some(px)
        }
        None => Some(px),
    }
}

/// Fraction of `object_points` validly visible in `frame`.
pub fn frame_contribution(
    object_id: u64,
    object_points: &[Vector3<f64>],
    frame: &FrameRecord,
    depth_tol: f64,
) -> ContributionScore {
    let valid = object_points
        .iter()
        .filter(|p| visible_projection(p, frame, depth_tol).is_some())
        .count();
    let score = if object_points.is_empty() {
        0.0
    } else {
        valid as f64 / object_points.len() as f64
    };
    ContributionScore {
        frame_id: frame.frame_id,
        object_id,
        score,
    }
}

/// Frame ids of the `k` best-scoring frames, best first, ties by ascending
/// frame id. Zero-score frames are never returned.
pub fn select_top_k(scores: &[ContributionScore], k: usize) -> Vec<u64> {
    let mut ranked: Vec<&ContributionScore> = scores.iter().filter(|s| s.score > 0.0).collect();
    ranked.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.frame_id.cmp(&b.frame_id))
    });
    ranked.into_iter().take(k).map(|s| s.frame_id).collect()
}

/// `normalize(Σ sᵢ·fᵢ)`.
pub fn aggregate_features(features: &[Vec<f64>], scores: &[f64]) -> Result<Vec<f64>, ViewError> {
    if features.len() != scores.len() {
        return Err(ViewError::LengthMismatch(features.len(), scores.len()));
    }
    let first = features.first().ok_or(ViewError::Empty)?;
    if scores.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) || !(scores.iter().sum::<f64>() > 0.0)
    {
        return Err(ViewError::ZeroWeightSum);
    }
    let dim = first.len();
    let mut acc = vec![0.0; dim];
    for (f, s) in features.iter().zip(scores) {
        if f.len() != dim {
            return Err(ViewError::DimensionMismatch);
        }
        for (a, v) in acc.iter_mut().zip(f) {
            *a += s * v;
        }
    }
    let n = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(n > 1e-300) {
        return Err(ViewError::DegenerateSum);
    }
    Ok(acc.into_iter().map(|v| v / n).collect())
}
