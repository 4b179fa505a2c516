//! World-frame 6-DoF tip tracking from marker-corner detections on a rigid
//! polyhedral marker sphere.
//!
//! Pipeline per demonstration:
//!
//! 1. `solve_pnp` gives `cam←sphere` for every frame with enough corners.
//! 2. `to_world` composes it with the camera's `world←cam` pose.
//! 3. `filter_trajectory` smooths position and unwrapped rotation vector with
//!    a constant-velocity Kalman filter whose measurement noise grows with the
//!    frame's reprojection error.
//! 4. `apply_tip_offset` moves from the sphere center to the tool tip.

use std::collections::BTreeMap;

use log::warn;
use nalgebra::{
    DMatrix, Matrix2x3, Matrix3, Rotation3, SMatrix, SVector, SymmetricEigen, UnitQuaternion,
    Vector2, Vector3,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{nearest_rotation_vector, CameraIntrinsics, Pose};
use crate::views::FrameRecord;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrackError {
    #[error("{0} correspondences, at least 4 required")]
    TooFewPoints(usize),
    #[error("degenerate configuration (condition number {0:.3e})")]
    DegenerateConfiguration(f64),
    #[error("pose refinement did not converge")]
    NoConvergence,
    #[error("timestamps must be strictly increasing (sample {0})")]
    NonMonotonicTimestamps(usize),
    #[error("empty trajectory")]
    EmptyTrajectory,
    #[error(
        "insufficient track: {tracked} usable frames of {frames} \
         ({with_detections} had detections, {pnp_failures} PnP failures)"
    )]
    InsufficientTrack {
        frames: usize,
        with_detections: usize,
        pnp_failures: usize,
        tracked: usize,
    },
    #[error("invalid sphere model: {0}")]
    InvalidModel(String),
}

/// Marker layout of the tracking sphere plus the `sphere←tip` calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereModel {
    /// Corner positions in the sphere frame, ordered counter-clockwise about
    /// the outward marker normal.
    pub markers: BTreeMap<u32, [Vector3<f64>; 4]>,
    /// `T_sphere←tip`.
    pub tip_offset: Pose,
}

impl SphereModel {
    pub fn new(
        markers: BTreeMap<u32, [Vector3<f64>; 4]>,
        tip_offset: Pose,
    ) -> Result<Self, TrackError> {
        let m = Self {
            markers,
            tip_offset,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), TrackError> {
        if self.markers.len() < 6 {
            return Err(TrackError::InvalidModel(format!(
                "{} markers, at least 6 required",
                self.markers.len()
            )));
        }
        for (id, c) in &self.markers {
            let n = marker_normal(c);
            if n.norm() < 1e-12 {
                return Err(TrackError::InvalidModel(format!("marker {id} is degenerate")));
            }
            let n = n.normalize();
            for p in c {
                if (p - c[0]).dot(&n).abs() > 1e-6 {
                    return Err(TrackError::InvalidModel(format!(
                        "marker {id} corners are not coplanar"
                    )));
                }
            }
            let center = (c[0] + c[1] + c[2] + c[3]) / 4.0;
            if n.dot(&center) <= 0.0 {
                return Err(TrackError::InvalidModel(format!(
                    "marker {id} winding is inconsistent (normal points inward)"
                )));
            }
        }
        Ok(())
    }

    /// The 26-marker sphere used throughout the synthetic benchmarks: 6 cm
    /// radius, 4 cm markers, tip 15 cm along the sphere's +z axis.
    pub fn standard() -> Self {
        Self::polyhedral(0.06, 0.04, Pose::from_translation(0.0, 0.0, 0.15))
    }

    /// A 26-face sphere: one square marker tangent to a sphere of `radius`
    /// along each axis, edge and corner direction of a cube.
    pub fn polyhedral(radius: f64, marker_size: f64, tip_offset: Pose) -> Self {
        let mut dirs = Vec::new();
        for x in -1i32..=1 {
            for y in -1i32..=1 {
                for z in -1i32..=1 {
                    if (x, y, z) != (0, 0, 0) {
                        dirs.push(Vector3::new(x as f64, y as f64, z as f64).normalize());
                    }
                }
            }
        }
        let h = marker_size / 2.0;
        let markers = dirs
            .into_iter()
            .enumerate()
            .map(|(i, n)| {
                let helper = if n.z.abs() < 0.9 {
                    Vector3::z()
                } else {
                    Vector3::x()
                };
                let e1 = helper.cross(&n).normalize();
                let e2 = n.cross(&e1);
                let c = n * radius;
                (
                    i as u32,
                    [
                        c + (-e1 - e2) * h,
                        c + (e1 - e2) * h,
                        c + (e1 + e2) * h,
                        c + (-e1 + e2) * h,
                    ],
                )
            })
            .collect();
        Self {
            markers,
            tip_offset,
        }
    }
}

/// Outward (unnormalized) normal of a counter-clockwise marker.
pub fn marker_normal(c: &[Vector3<f64>; 4]) -> Vector3<f64> {
    (c[2] - c[0]).cross(&(c[3] - c[1]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkerDetection {
    pub frame_id: u64,
    pub marker_id: u32,
    #[serde(with = "corners")]
    pub corners: [Vector2<f64>; 4],
}

mod corners {
    use nalgebra::Vector2;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(c: &[Vector2<f64>; 4], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(c.iter().map(|p| [p.x, p.y]))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[Vector2<f64>; 4], D::Error> {
        let a = <[[f64; 2]; 4]>::deserialize(d)?;
        Ok(a.map(Vector2::from))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PnPResult {
    /// `cam←sphere`.
    pub pose: Pose,
    pub reproj_rmse: f64,
    pub n_points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PnpOptions {
    pub max_iters: usize,
    pub step_tol: f64,
    pub max_condition: f64,
}

impl Default for PnpOptions {
    fn default() -> Self {
        Self {
            max_iters: 100,
            step_tol: 1e-10,
            max_condition: 1e12,
        }
    }
}

pub type Correspondence = (Vector3<f64>, Vector2<f64>);

fn smallest_right_singular_vector(a: &DMatrix<f64>) -> nalgebra::DVector<f64> {
    let ata = a.transpose() * a;
    let eig = SymmetricEigen::new(ata);
    let (i, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1))
        .expect("non-empty");
    eig.eigenvectors.column(i).into_owned()
}

/// Similarity transform normalizing 2D points to zero mean and mean
/// distance √2; returned as (scale, mean).
fn normalize_2d(pts: &[Vector2<f64>]) -> (f64, Vector2<f64>) {
    let mean = pts.iter().sum::<Vector2<f64>>() / pts.len() as f64;
    let d = pts.iter().map(|p| (p - mean).norm()).sum::<f64>() / pts.len() as f64;
    let s = if d > 0.0 { 2f64.sqrt() / d } else { 1.0 };
    (s, mean)
}

fn normalize_3d(pts: &[Vector3<f64>]) -> (f64, Vector3<f64>) {
    let mean = pts.iter().sum::<Vector3<f64>>() / pts.len() as f64;
    let d = pts.iter().map(|p| (p - mean).norm()).sum::<f64>() / pts.len() as f64;
    let s = if d > 0.0 { 3f64.sqrt() / d } else { 1.0 };
    (s, mean)
}

fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.unwrap();
    let vt = svd.v_t.unwrap();
    let d = (u * vt).determinant().signum();
    u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * vt
}

/// Linear pose from the 3×4 projection matrix in normalized camera
/// coordinates. Needs ≥ 6 non-coplanar points.
fn dlt_init(obj: &[Vector3<f64>], img: &[Vector2<f64>]) -> Option<Pose> {
    let (s3, m3) = normalize_3d(obj);
    let (s2, m2) = normalize_2d(img);
    let n = obj.len();
    let mut a = DMatrix::zeros(2 * n, 12);
    for i in 0..n {
        let x = (obj[i] - m3) * s3;
        let u = (img[i] - m2) * s2;
        let xh = [x.x, x.y, x.z, 1.0];
        for j in 0..4 {
            a[(2 * i, j)] = xh[j];
            a[(2 * i, 8 + j)] = -u.x * xh[j];
            a[(2 * i + 1, 4 + j)] = xh[j];
            a[(2 * i + 1, 8 + j)] = -u.y * xh[j];
        }
    }
    let p = smallest_right_singular_vector(&a);
    let pn = SMatrix::<f64, 3, 4>::from_row_slice(p.as_slice());
    // undo normalization: P = T2⁻¹ · Pn · T3
    let t2_inv = Matrix3::new(1.0 / s2, 0.0, m2.x, 0.0, 1.0 / s2, m2.y, 0.0, 0.0, 1.0);
    let mut t3 = SMatrix::<f64, 4, 4>::identity() * s3;
    t3[(3, 3)] = 1.0;
    t3.fixed_view_mut::<3, 1>(0, 3).copy_from(&(-m3 * s3));
    let mut pm = t2_inv * pn * t3;
    // points must end up in front of the camera
    let front = obj
        .iter()
        .filter(|x| (pm.fixed_view::<1, 3>(2, 0) * *x)[0] + pm[(2, 3)] > 0.0)
        .count();
    if front * 2 < n {
        pm = -pm;
    }
    let m = pm.fixed_view::<3, 3>(0, 0).into_owned();
    let svd = m.svd(false, false);
    let scale = svd.singular_values.mean();
    if !(scale > 0.0) || !scale.is_finite() {
        return None;
    }
    let r = nearest_rotation(&m);
    let t = pm.fixed_view::<3, 1>(0, 3).into_owned() / scale;
    let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r));
    Some(Pose::new(t, q))
}

/// Pose from a plane-induced homography. Used when the points are (nearly)
/// coplanar or too few for the full DLT.
fn homography_init(obj: &[Vector3<f64>], img: &[Vector2<f64>]) -> Option<Pose> {
    let c = obj.iter().sum::<Vector3<f64>>() / obj.len() as f64;
    let mut cov = Matrix3::zeros();
    for p in obj {
        let d = p - c;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let a1: Vector3<f64> = eig.eigenvectors.column(idx[0]).into_owned();
    let a2: Vector3<f64> = eig.eigenvectors.column(idx[1]).into_owned();
    let a3 = a1.cross(&a2);
    let plane: Vec<Vector2<f64>> = obj
        .iter()
        .map(|p| Vector2::new((p - c).dot(&a1), (p - c).dot(&a2)))
        .collect();

    let (sp, mp) = normalize_2d(&plane);
    let (si, mi) = normalize_2d(img);
    let n = obj.len();
    let mut a = DMatrix::zeros(2 * n, 9);
    for i in 0..n {
        let x = (plane[i] - mp) * sp;
        let u = (img[i] - mi) * si;
        let xh = [x.x, x.y, 1.0];
        for j in 0..3 {
            a[(2 * i, j)] = xh[j];
            a[(2 * i, 6 + j)] = -u.x * xh[j];
            a[(2 * i + 1, 3 + j)] = xh[j];
            a[(2 * i + 1, 6 + j)] = -u.y * xh[j];
        }
    }
    let h = smallest_right_singular_vector(&a);
    let hn = Matrix3::from_row_slice(h.as_slice());
    let ti_inv = Matrix3::new(1.0 / si, 0.0, mi.x, 0.0, 1.0 / si, mi.y, 0.0, 0.0, 1.0);
    let tp = Matrix3::new(sp, 0.0, -mp.x * sp, 0.0, sp, -mp.y * sp, 0.0, 0.0, 1.0);
    let hm = ti_inv * hn * tp;
    let h1 = hm.column(0).into_owned();
    let h2 = hm.column(1).into_owned();
    let h3 = hm.column(2).into_owned();
    let mut lambda = (h1.norm() + h2.norm()) / 2.0;
    if !(lambda > 0.0) {
        return None;
    }
    if h3.z < 0.0 {
        lambda = -lambda;
    }
    let r1 = h1 / lambda;
    let r2 = h2 / lambda;
    let rp = nearest_rotation(&Matrix3::from_columns(&[r1, r2, r1.cross(&r2)]));
    let tp_vec = h3 / lambda;
    let basis = Matrix3::from_columns(&[a1, a2, a3]);
    let r = rp * basis.transpose();
    let t = tp_vec - r * c;
    let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r));
    Some(Pose::new(t, q))
}

fn reprojection_cost(
    pose: &Pose,
    corr: &[Correspondence],
    k: &CameraIntrinsics,
) -> Option<f64> {
    let mut cost = 0.0;
    for (x, u) in corr {
        let pc = pose.transform_point(x);
        let px = k.project_cam(&pc).ok()?;
        cost += (px - u).norm_squared();
    }
    Some(cost)
}

fn normal_equations(
    pose: &Pose,
    corr: &[Correspondence],
    k: &CameraIntrinsics,
) -> Option<(SMatrix<f64, 6, 6>, SVector<f64, 6>)> {
    let mut h = SMatrix::<f64, 6, 6>::zeros();
    let mut g = SVector::<f64, 6>::zeros();
    for (x, u) in corr {
        let rx = pose.orientation * x;
        let pc = rx + pose.position;
        if !(pc.z > 0.0) {
            return None;
        }
        let iz = 1.0 / pc.z;
        let dpi = Matrix2x3::new(
            k.fx * iz,
            0.0,
            -k.fx * pc.x * iz * iz,
            0.0,
            k.fy * iz,
            -k.fy * pc.y * iz * iz,
        );
        let mut j = SMatrix::<f64, 2, 6>::zeros();
        j.fixed_view_mut::<2, 3>(0, 0)
            .copy_from(&(dpi * -rx.cross_matrix()));
        j.fixed_view_mut::<2, 3>(0, 3).copy_from(&dpi);
        let r = Vector2::new(k.fx * pc.x * iz + k.cx, k.fy * pc.y * iz + k.cy) - u;
        h += j.transpose() * j;
        g += j.transpose() * r;
    }
    Some((h, g))
}

fn apply_step(pose: &Pose, delta: &SVector<f64, 6>) -> Pose {
    let w = Vector3::new(delta[0], delta[1], delta[2]);
    let v = Vector3::new(delta[3], delta[4], delta[5]);
    let dq = UnitQuaternion::from_scaled_axis(w);
    Pose::new(pose.position + v, dq * pose.orientation)
}

/// Damped Gauss-Newton on the summed squared pixel reprojection error.
/// Returns the refined `cam←object` pose and the RMSE after every accepted
/// iterate (the first entry is the initial RMSE).
pub fn refine_pose(
    corr: &[Correspondence],
    k: &CameraIntrinsics,
    init: Pose,
    opts: &PnpOptions,
) -> Result<(Pose, Vec<f64>), TrackError> {
    let n = corr.len();
    let rmse = |c: f64| (c / n as f64).sqrt();
    let mut pose = init;
    let mut cost = reprojection_cost(&pose, corr, k).ok_or(TrackError::NoConvergence)?;
    let mut history = vec![rmse(cost)];
    let mut mu = 1e-4;
    let mut converged = false;
    for _ in 0..opts.max_iters {
        let (h, g) = normal_equations(&pose, corr, k).ok_or(TrackError::NoConvergence)?;
        let mut accepted = false;
        let mut step_norm = f64::INFINITY;
        while mu < 1e12 {
            let mut damped = h;
            for i in 0..6 {
                damped[(i, i)] += mu * h[(i, i)].max(1e-12);
            }
            let Some(chol) = damped.cholesky() else {
                mu *= 10.0;
                continue;
            };
            let delta = -chol.solve(&g);
            step_norm = delta.norm();
            let candidate = apply_step(&pose, &delta);
            match reprojection_cost(&candidate, corr, k) {
                Some(c) if c <= cost => {
                    pose = candidate;
                    cost = c;
                    mu = (mu / 3.0).max(1e-12);
                    accepted = true;
                    break;
                }
                _ => mu *= 4.0,
            }
        }
        if !accepted {
            // no descent direction left at working precision
            converged = true;
            break;
        }
        history.push(rmse(cost));
        if step_norm < opts.step_tol || cost < 1e-28 {
            converged = true;
            break;
        }
    }
    if !converged || !cost.is_finite() {
        return Err(TrackError::NoConvergence);
    }
    Ok((pose, history))
}

/// `cam←object` pose from 3D–2D correspondences: linear initialization
/// followed by damped Gauss-Newton refinement.
pub fn solve_pnp(corr: &[Correspondence], k: &CameraIntrinsics) -> Result<PnPResult, TrackError> {
    solve_pnp_with(corr, k, &PnpOptions::default())
}

pub fn solve_pnp_with(
    corr: &[Correspondence],
    k: &CameraIntrinsics,
    opts: &PnpOptions,
) -> Result<PnPResult, TrackError> {
    let n = corr.len();
    if n < 4 {
        return Err(TrackError::TooFewPoints(n));
    }
    let obj: Vec<Vector3<f64>> = corr.iter().map(|c| c.0).collect();
    let img: Vec<Vector2<f64>> = corr
        .iter()
        .map(|c| Vector2::new((c.1.x - k.cx) / k.fx, (c.1.y - k.cy) / k.fy))
        .collect();

    let c = obj.iter().sum::<Vector3<f64>>() / n as f64;
    let mut cov = Matrix3::zeros();
    for p in &obj {
        cov += (p - c) * (p - c).transpose();
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(cov).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    if !(ev[0] > 0.0) || ev[1] / ev[0] < 1e-12 {
        return Err(TrackError::DegenerateConfiguration(f64::INFINITY));
    }
    let planar = ev[2] / ev[0] < 1e-10;

    let mut candidates = Vec::new();
    if !planar && n >= 6 {
        candidates.extend(dlt_init(&obj, &img));
    }
    candidates.extend(homography_init(&obj, &img));

    let mut best: Option<(Pose, f64)> = None;
    let mut last_err = TrackError::NoConvergence;
    for init in candidates {
        match refine_pose(corr, k, init, opts) {
            Ok((pose, hist)) => {
                let r = *hist.last().unwrap();
                if best.as_ref().is_none_or(|b| r < b.1) {
                    best = Some((pose, r));
                }
            }
            Err(e) => last_err = e,
        }
    }
    let (pose, reproj_rmse) = best.ok_or(last_err)?;

    let (h, _) = normal_equations(&pose, corr, k).ok_or(TrackError::NoConvergence)?;
    let eig = SymmetricEigen::new(h).eigenvalues;
    let (lo, hi) = eig
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if cond > opts.max_condition {
        return Err(TrackError::DegenerateConfiguration(cond));
    }
    Ok(PnPResult {
        pose,
        reproj_rmse,
        n_points: n,
    })
}

/// `T_world←sphere = T_world←cam · T_cam←sphere`.
pub fn to_world(pnp: &PnPResult, cam_pose: &Pose) -> Pose {
    cam_pose.compose(&pnp.pose)
}

/// `T_world←tip = T_world←sphere · T_sphere←tip` for every pose.
pub fn apply_tip_offset(poses: &[Pose], model: &SphereModel) -> Vec<Pose> {
    poses.iter().map(|p| p.compose(&model.tip_offset)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedPose {
    pub t: f64,
    pub pose: Pose,
}

/// A world-frame pose measurement with its PnP reprojection RMSE (pixels).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawSample {
    pub t: f64,
    pub pose: Pose,
    pub reproj_rmse: f64,
}

/// Adaptive constant-velocity filter settings. Measurement covariance for a
/// sample with reprojection RMSE `e` is `R₀ · (1 + alpha · e²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterConfig {
    /// px⁻²
    pub alpha: f64,
    /// Position part of R₀ (standard deviation, m).
    pub meas_pos_sigma: f64,
    /// Rotation part of R₀ (standard deviation, rad).
    pub meas_rot_sigma: f64,
    /// White-acceleration process noise, m/s².
    pub accel_sigma: f64,
    /// White angular-acceleration process noise, rad/s².
    pub ang_accel_sigma: f64,
    pub init_vel_sigma: f64,
    pub init_ang_vel_sigma: f64,
    /// Run a Rauch-Tung-Striebel backward pass after filtering.
    pub smooth: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            meas_pos_sigma: 0.002,
            meas_rot_sigma: 0.01,
            accel_sigma: 0.5,
            ang_accel_sigma: 2.0,
            init_vel_sigma: 1.0,
            init_ang_vel_sigma: 3.0,
            smooth: false,
        }
    }
}

impl FilterConfig {
    /// Rescales R₀ for a corner detector with noise `sigma_px`, given that
    /// the configured R₀ describes `nominal_px`. Standard deviations are
    /// floored at 1e-7 so the covariance stays positive definite.
    pub fn scaled_to_pixel_noise(&self, sigma_px: f64, nominal_px: f64) -> Self {
        let s = sigma_px / nominal_px;
        Self {
            meas_pos_sigma: (self.meas_pos_sigma * s).max(1e-7),
            meas_rot_sigma: (self.meas_rot_sigma * s).max(1e-7),
            ..*self
        }
    }
}

type Mat12 = SMatrix<f64, 12, 12>;
type Vec12 = SVector<f64, 12>;
type Mat6x12 = SMatrix<f64, 6, 12>;

const P: usize = 0;
const V: usize = 3;
const R: usize = 6;
const W: usize = 9;

fn transition(dt: f64) -> Mat12 {
    let mut f = Mat12::identity();
    for i in 0..3 {
        f[(P + i, V + i)] = dt;
        f[(R + i, W + i)] = dt;
    }
    f
}

fn process_noise(dt: f64, cfg: &FilterConfig) -> Mat12 {
    let mut q = Mat12::zeros();
    let blocks = [(P, V, cfg.accel_sigma), (R, W, cfg.ang_accel_sigma)];
    for (x, dx, s) in blocks {
        let s2 = s * s;
        for i in 0..3 {
            q[(x + i, x + i)] = s2 * dt.powi(4) / 4.0;
            q[(x + i, dx + i)] = s2 * dt.powi(3) / 2.0;
            q[(dx + i, x + i)] = s2 * dt.powi(3) / 2.0;
            q[(dx + i, dx + i)] = s2 * dt * dt;
        }
    }
    q
}

fn observation() -> Mat6x12 {
    let mut h = Mat6x12::zeros();
    for i in 0..3 {
        h[(i, P + i)] = 1.0;
        h[(3 + i, R + i)] = 1.0;
    }
    h
}

fn measurement_noise(cfg: &FilterConfig, reproj_rmse: f64) -> SMatrix<f64, 6, 6> {
    let scale = 1.0 + cfg.alpha * reproj_rmse * reproj_rmse;
    let mut r = SMatrix::<f64, 6, 6>::zeros();
    for i in 0..3 {
        r[(i, i)] = cfg.meas_pos_sigma.powi(2) * scale;
        r[(3 + i, 3 + i)] = cfg.meas_rot_sigma.powi(2) * scale;
    }
    r
}

fn symmetrize(p: &Mat12) -> Mat12 {
    (p + p.transpose()) * 0.5
}

/// Running state of the adaptive filter.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub t: f64,
    /// position, velocity, rotation vector, angular rate
    pub x: Vec12,
    pub cov: Mat12,
}

impl FilterState {
    pub fn position(&self) -> Vector3<f64> {
        self.x.fixed_rows::<3>(P).into_owned()
    }

    pub fn rotation_vector(&self) -> Vector3<f64> {
        self.x.fixed_rows::<3>(R).into_owned()
    }

    pub fn pose(&self) -> Pose {
        Pose::new(
            self.position(),
            UnitQuaternion::from_scaled_axis(self.rotation_vector()),
        )
    }
}

/// Adaptive Kalman filter over (position, unwrapped rotation vector).
#[derive(Debug, Clone)]
pub struct AdaptiveFilter {
    cfg: FilterConfig,
    state: FilterState,
}

impl AdaptiveFilter {
    pub fn new(first: &RawSample, cfg: FilterConfig) -> Self {
        let mut x = Vec12::zeros();
        x.fixed_rows_mut::<3>(P).copy_from(&first.pose.position);
        x.fixed_rows_mut::<3>(R).copy_from(&first.pose.rotation_vector());
        let r = measurement_noise(&cfg, first.reproj_rmse);
        let mut cov = Mat12::zeros();
        for i in 0..3 {
            cov[(P + i, P + i)] = r[(i, i)];
            cov[(R + i, R + i)] = r[(3 + i, 3 + i)];
            cov[(V + i, V + i)] = cfg.init_vel_sigma.powi(2);
            cov[(W + i, W + i)] = cfg.init_ang_vel_sigma.powi(2);
        }
        Self {
            cfg,
            state: FilterState { t: first.t, x, cov },
        }
    }

    pub fn state(&self) -> &FilterState {
        &self.state
    }

    pub fn predict(&mut self, t: f64) {
        let dt = t - self.state.t;
        let f = transition(dt);
        self.state.x = f * self.state.x;
        self.state.cov = symmetrize(&(f * self.state.cov * f.transpose() + process_noise(dt, &self.cfg)));
        self.state.t = t;
    }

    /// Joseph-form update with the rotation measurement unwrapped against the
    /// predicted rotation vector.
    pub fn update(&mut self, sample: &RawSample) {
        let h = observation();
        let rmeas = nearest_rotation_vector(&sample.pose.orientation, &self.state.rotation_vector());
        let mut z = SVector::<f64, 6>::zeros();
        z.fixed_rows_mut::<3>(0).copy_from(&sample.pose.position);
        z.fixed_rows_mut::<3>(3).copy_from(&rmeas);
        let rn = measurement_noise(&self.cfg, sample.reproj_rmse);
        let p = &self.state.cov;
        let s = h * p * h.transpose() + rn;
        let Some(s_inv) = s.try_inverse() else {
            return;
        };
        let gain = p * h.transpose() * s_inv;
        let innov = z - h * self.state.x;
        self.state.x += gain * innov;
        let ikh = Mat12::identity() - gain * h;
        self.state.cov = symmetrize(&(ikh * p * ikh.transpose() + gain * rn * gain.transpose()));
    }
}

/// Smooths a time-ordered world-frame pose sequence.
pub fn filter_trajectory(
    raw: &[RawSample],
    cfg: &FilterConfig,
) -> Result<Vec<TimedPose>, TrackError> {
    let first = raw.first().ok_or(TrackError::EmptyTrajectory)?;
    for (i, w) in raw.windows(2).enumerate() {
        if !(w[1].t > w[0].t) {
            return Err(TrackError::NonMonotonicTimestamps(i + 1));
        }
    }
    let mut filter = AdaptiveFilter::new(first, *cfg);
    let mut filtered = vec![filter.state().clone()];
    let mut predicted = vec![filter.state().clone()];
    for s in &raw[1..] {
        filter.predict(s.t);
        predicted.push(filter.state().clone());
        filter.update(s);
        filtered.push(filter.state().clone());
    }
    let states = if cfg.smooth {
        rts_smooth(&filtered, &predicted)
    } else {
        filtered
    };
    let mut out: Vec<TimedPose> = states
        .iter()
        .map(|s| TimedPose {
            t: s.t,
            pose: s.pose(),
        })
        .collect();
    if !cfg.smooth {
        out[0].pose = first.pose;
    }
    Ok(out)
}

fn rts_smooth(filtered: &[FilterState], predicted: &[FilterState]) -> Vec<FilterState> {
    let n = filtered.len();
    let mut out = filtered.to_vec();
    for k in (0..n - 1).rev() {
        let dt = predicted[k + 1].t - filtered[k].t;
        let f = transition(dt);
        let Some(p_pred_inv) = predicted[k + 1].cov.try_inverse() else {
            continue;
        };
        let c = filtered[k].cov * f.transpose() * p_pred_inv;
        let x = filtered[k].x + c * (out[k + 1].x - predicted[k + 1].x);
        let cov = filtered[k].cov + c * (out[k + 1].cov - predicted[k + 1].cov) * c.transpose();
        out[k] = FilterState {
            t: filtered[k].t,
            x,
            cov: symmetrize(&cov),
        };
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackConfig {
    pub filter: FilterConfig,
    pub min_correspondences: usize,
}

impl Default for TrackConfig {
    fn default() -> Self {
        Self {
            filter: FilterConfig::default(),
            min_correspondences: 4,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrackStats {
    pub frames: usize,
    pub with_detections: usize,
    pub pnp_failures: usize,
    pub tracked: usize,
    pub unknown_markers: usize,
    pub out_of_bounds: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackOutput {
    /// `world←tip`, one entry per successfully tracked frame.
    pub trajectory: Vec<TimedPose>,
    /// Unfiltered `world←sphere` measurements.
    pub raw: Vec<RawSample>,
    pub stats: TrackStats,
}

/// Builds the 3D–2D correspondences of one frame.
pub fn correspondences(
    detections: &[MarkerDetection],
    model: &SphereModel,
    k: &CameraIntrinsics,
    stats: &mut TrackStats,
) -> Vec<Correspondence> {
    let mut corr = Vec::new();
    for d in detections {
        let Some(obj) = model.markers.get(&d.marker_id) else {
            warn!("frame {}: marker {} is not in the sphere model", d.frame_id, d.marker_id);
            stats.unknown_markers += 1;
            continue;
        };
        if !d.corners.iter().all(|c| k.contains(c)) {
            warn!("frame {}: marker {} has corners outside the image", d.frame_id, d.marker_id);
            stats.out_of_bounds += 1;
            continue;
        }
        corr.extend(obj.iter().copied().zip(d.corners.iter().copied()));
    }
    corr
}

/// Full chain: PnP → world frame → adaptive filter → tip offset. Frames
/// without enough corners or with a failed PnP are skipped; the filter
/// predicts across them.
pub fn track(
    detections: &[MarkerDetection],
    frames: &[FrameRecord],
    model: &SphereModel,
    cfg: &TrackConfig,
) -> Result<TrackOutput, TrackError> {
    let mut by_frame: BTreeMap<u64, Vec<MarkerDetection>> = BTreeMap::new();
    for d in detections {
        by_frame.entry(d.frame_id).or_default().push(d.clone());
    }
    let mut ordered: Vec<&FrameRecord> = frames.iter().collect();
    ordered.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp).then(a.frame_id.cmp(&b.frame_id)));

    let mut stats = TrackStats {
        frames: frames.len(),
        ..Default::default()
    };
    let mut raw = Vec::new();
    for frame in ordered {
        let Some(dets) = by_frame.get(&frame.frame_id) else {
            continue;
        };
        stats.with_detections += 1;
        let corr = correspondences(dets, model, &frame.intrinsics, &mut stats);
        if corr.len() < cfg.min_correspondences.max(4) {
            continue;
        }
        match solve_pnp(&corr, &frame.intrinsics) {
            Ok(pnp) => {
                if raw.last().is_some_and(|r: &RawSample| r.t >= frame.timestamp) {
                    continue;
                }
                raw.push(RawSample {
                    t: frame.timestamp,
                    pose: to_world(&pnp, &frame.cam_pose),
                    reproj_rmse: pnp.reproj_rmse,
                });
            }
            Err(e) => {
                warn!("frame {}: {e}", frame.frame_id);
                stats.pnp_failures += 1;
            }
        }
    }
    stats.tracked = raw.len();
    if raw.len() < 2 {
        return Err(TrackError::InsufficientTrack {
            frames: stats.frames,
            with_detections: stats.with_detections,
            pnp_failures: stats.pnp_failures,
            tracked: stats.tracked,
        });
    }
    let smoothed = filter_trajectory(&raw, &cfg.filter)?;
    let poses: Vec<Pose> = smoothed.iter().map(|s| s.pose).collect();
    let tips = apply_tip_offset(&poses, model);
    let trajectory = smoothed
        .iter()
        .zip(tips)
        .map(|(s, pose)| TimedPose { t: s.t, pose })
        .collect();
    Ok(TrackOutput {
        trajectory,
        raw,
        stats,
    })
}
