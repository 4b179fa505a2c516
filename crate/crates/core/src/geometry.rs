//! Rigid transforms, pinhole projection and rotation-sequence helpers.
//!
//! # Conventions
//!
//! - A [`Pose`] named `world←cam` maps points expressed in the camera frame
//!   into the world frame: `x_world = R · x_cam + t` (column vectors).
//! - Quaternions are stored scalar-last on the wire (`[qx, qy, qz, qw]`) and
//!   canonicalized so that `qw >= 0`.
//! - Depth is always meters.

use std::f64::consts::{PI, TAU};

use nalgebra::{Quaternion, UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point is behind the camera (z = {z})")]
    BehindCamera { z: f64 },
    #[error("invalid depth {0}")]
    InvalidDepth(f64),
    #[error("empty rotation sequence")]
    EmptySequence,
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid pose: {0}")]
    InvalidPose(String),
}

/// Rigid transform in SE(3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

fn canonical(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    let q = UnitQuaternion::new_normalize(q.into_inner());
    if q.w < 0.0 {
        UnitQuaternion::new_unchecked(-q.into_inner())
    } else {
        q
    }
}

impl Pose {
    pub fn new(position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Self {
            position,
            orientation: canonical(orientation),
        }
    }

    pub fn identity() -> Self {
        Self::new(Vector3::zeros(), UnitQuaternion::identity())
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self::new(Vector3::new(x, y, z), UnitQuaternion::identity())
    }

    pub fn from_rotation(orientation: UnitQuaternion<f64>) -> Self {
        Self::new(Vector3::zeros(), orientation)
    }

    /// Builds a pose from `[x, y, z, qx, qy, qz, qw]`.
    pub fn from_array(a: [f64; 7]) -> Result<Self, GeometryError> {
        if a.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::InvalidPose("non-finite component".into()));
        }
        let q = Quaternion::new(a[6], a[3], a[4], a[5]);
        if q.norm() < 1e-12 {
            return Err(GeometryError::InvalidPose("zero quaternion".into()));
        }
        Ok(Self::new(
            Vector3::new(a[0], a[1], a[2]),
            UnitQuaternion::from_quaternion(q),
        ))
    }

    /// `[x, y, z, qx, qy, qz, qw]`.
    pub fn to_array(&self) -> [f64; 7] {
        let q = self.orientation;
        [
            self.position.x,
            self.position.y,
            self.position.z,
            q.i,
            q.j,
            q.k,
            q.w,
        ]
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose::new(
            self.orientation * other.position + self.position,
            self.orientation * other.orientation,
        )
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.orientation.inverse();
        Pose::new(-(inv * self.position), inv)
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.orientation * p + self.position
    }

    /// Rotation-vector (axis · angle) of the orientation, angle in `[0, π]`.
    pub fn rotation_vector(&self) -> Vector3<f64> {
        self.orientation.scaled_axis()
    }
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Serialize for Pose {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_array().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Pose {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let a = <[f64; 7]>::deserialize(d)?;
        Pose::from_array(a).map_err(serde::de::Error::custom)
    }
}

/// `a ∘ b`.
pub fn compose(a: &Pose, b: &Pose) -> Pose {
    a.compose(b)
}

pub fn invert(p: &Pose) -> Pose {
    p.inverse()
}

/// Builds a `world←cam` pose whose optical axis (+z) points from `eye` at
/// `target`, with image-down (+y) as close as possible to `-up`.
pub fn look_at(eye: Vector3<f64>, target: Vector3<f64>, up: Vector3<f64>) -> Pose {
    let z = (target - eye).normalize();
    let mut x = z.cross(&up);
    if x.norm() < 1e-9 {
        x = z.cross(&Vector3::x());
        if x.norm() < 1e-9 {
            x = z.cross(&Vector3::y());
        }
    }
    let x = x.normalize();
    let y = z.cross(&x);
    let m = nalgebra::Matrix3::from_columns(&[x, y, z]);
    let rot = nalgebra::Rotation3::from_matrix_unchecked(m);
    Pose::new(eye, UnitQuaternion::from_rotation_matrix(&rot))
}

/// Pinhole intrinsics for rectified images.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
    ) -> Result<Self, GeometryError> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "cx={} outside [0, {})",
                self.cx, self.width
            )));
        }
        if !(self.cy >= 0.0 && self.cy < self.height as f64) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "cy={} outside [0, {})",
                self.cy, self.height
            )));
        }
        Ok(())
    }

    /// Projects a camera-frame point.
    pub fn project_cam(&self, p: &Vector3<f64>) -> Result<Vector2<f64>, GeometryError> {
        if !(p.z > 0.0) {
            return Err(GeometryError::BehindCamera { z: p.z });
        }
        Ok(Vector2::new(
            self.fx * p.x / p.z + self.cx,
            self.fy * p.y / p.z + self.cy,
        ))
    }

    /// Whether a continuous pixel coordinate falls on the sensor.
    pub fn contains(&self, px: &Vector2<f64>) -> bool {
        px.x >= 0.0
            && px.y >= 0.0
            && px.x <= (self.width - 1) as f64
            && px.y <= (self.height - 1) as f64
    }

    /// Nearest integer pixel `(col, row)` if it lies inside the image.
    pub fn nearest_pixel(&self, px: &Vector2<f64>) -> Option<(u32, u32)> {
        let c = (px.x + 0.5).floor();
        let r = (px.y + 0.5).floor();
        if c >= 0.0 && r >= 0.0 && c < self.width as f64 && r < self.height as f64 {
            Some((c as u32, r as u32))
        } else {
            None
        }
    }
}

/// Projects a world point into a camera whose pose is `world←cam`.
pub fn project(
    point_world: &Vector3<f64>,
    cam_pose: &Pose,
    k: &CameraIntrinsics,
) -> Result<(Vector2<f64>, f64), GeometryError> {
    let p = cam_pose.inverse().transform_point(point_world);
    let px = k.project_cam(&p)?;
    Ok((px, p.z))
}

/// Lifts a pixel with metric depth back to the world frame.
pub fn backproject(
    pixel: &Vector2<f64>,
    depth: f64,
    cam_pose: &Pose,
    k: &CameraIntrinsics,
) -> Result<Vector3<f64>, GeometryError> {
    if !(depth > 0.0) || !depth.is_finite() {
        return Err(GeometryError::InvalidDepth(depth));
    }
    let p = Vector3::new(
        (pixel.x - k.cx) / k.fx * depth,
        (pixel.y - k.cy) / k.fy * depth,
        depth,
    );
    Ok(cam_pose.transform_point(&p))
}

/// Angle of the relative rotation between two unit quaternions, in `[0, π]`.
pub fn geodesic_angle(q1: &UnitQuaternion<f64>, q2: &UnitQuaternion<f64>) -> f64 {
    let d = q1.inverse() * q2;
    let v = d.imag().norm();
    2.0 * v.atan2(d.w.abs())
}

/// Time-ordered rotation vectors chosen for continuity.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationVectorSequence(pub Vec<Vector3<f64>>);

impl RotationVectorSequence {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_quaternions(&self) -> Vec<UnitQuaternion<f64>> {
        self.0
            .iter()
            .map(|r| canonical(UnitQuaternion::from_scaled_axis(*r)))
            .collect()
    }
}

/// Among all rotation vectors representing `q` (the axis scaled by
/// `θ + 2πk` for any integer `k`), returns the one closest to `reference`.
pub fn nearest_rotation_vector(q: &UnitQuaternion<f64>, reference: &Vector3<f64>) -> Vector3<f64> {
    let r0 = q.scaled_axis();
    let angle = r0.norm();
    let axis = if angle > 1e-12 {
        r0 / angle
    } else {
        // identity: any direction works; follow the reference so 2πk shells line up
        let n = reference.norm();
        if n < 1e-12 {
            return Vector3::zeros();
        }
        reference / n
    };
    let target = axis.dot(reference);
    let k_mid = ((target - angle) / TAU).round();
    let mut best = axis * angle;
    let mut best_d = f64::INFINITY;
    for dk in [-1.0, 0.0, 1.0] {
        let cand = axis * (angle + TAU * (k_mid + dk));
        let d = (cand - reference).norm_squared();
        if d < best_d {
            best_d = d;
            best = cand;
        }
    }
    best
}

/// Picks, for each quaternion, the rotation-vector representation nearest to
/// the previous output, so that the sequence stays continuous across ±π.
pub fn unwrap_rotations(
    quats: &[UnitQuaternion<f64>],
) -> Result<RotationVectorSequence, GeometryError> {
    let first = quats.first().ok_or(GeometryError::EmptySequence)?;
    let mut out = Vec::with_capacity(quats.len());
    let mut prev = first.scaled_axis();
    out.push(prev);
    for q in &quats[1..] {
        let r = nearest_rotation_vector(q, &prev);
        out.push(r);
        prev = r;
    }
    Ok(RotationVectorSequence(out))
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(TAU);
    if w > PI {
        w -= TAU;
    }
    w
}

pub fn centroid(points: &[Vector3<f64>]) -> Option<Vector3<f64>> {
    if points.is_empty() {
        return None;
    }
    let sum = points.iter().fold(Vector3::zeros(), |acc, p| acc + p);
    Some(sum / points.len() as f64)
}
