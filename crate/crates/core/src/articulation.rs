//! Joint type and axis from a tip trajectory: a line fit for prismatic
//! joints, a plane-plus-circle fit for revolute joints, and a penalized
//! comparison between the two.

use nalgebra::{DMatrix, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::centroid;
use crate::graph::{ArticulationAxis, JointType};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("{got} points, at least {need} required")]
    TooFewPoints { need: usize, got: usize },
    #[error("all points coincide")]
    DegenerateTrajectory,
    #[error("points are collinear; circle is underdetermined")]
    CollinearPoints,
    #[error("circle refinement did not converge")]
    NoConvergence,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrismaticFit {
    #[serde(with = "crate::graph::vec3")]
    pub direction: Vector3<f64>,
    #[serde(with = "crate::graph::vec3")]
    pub center: Vector3<f64>,
    pub residual_rmse: f64,
    pub travel: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RevoluteFit {
    /// Plane normal, oriented so the arc runs counter-clockwise about it.
    #[serde(with = "crate::graph::vec3")]
    pub direction: Vector3<f64>,
    #[serde(with = "crate::graph::vec3")]
    pub center: Vector3<f64>,
    pub radius: f64,
    pub residual_rmse: f64,
    pub sweep: f64,
}

/// Eigen-decomposition of the scatter matrix of centered points, sorted by
/// decreasing eigenvalue.
fn principal_axes(points: &[Vector3<f64>], mean: &Vector3<f64>) -> ([f64; 3], [Vector3<f64>; 3]) {
    let mut m = DMatrix::zeros(points.len(), 3);
    for (i, p) in points.iter().enumerate() {
        let d = p - mean;
        m[(i, 0)] = d.x;
        m[(i, 1)] = d.y;
        m[(i, 2)] = d.z;
    }
    let svd = m.svd(false, true);
    let vt = svd.v_t.expect("requested");
    let mut idx = [0usize, 1, 2];
    let sv = &svd.singular_values;
    idx.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let vals = idx.map(|i| sv[i]);
    let vecs = idx.map(|i| Vector3::new(vt[(i, 0)], vt[(i, 1)], vt[(i, 2)]));
    (vals, vecs)
}

/// Line fit through the centered trajectory.
pub fn fit_prismatic(positions: &[Vector3<f64>]) -> Result<PrismaticFit, FitError> {
    if positions.len() < 2 {
        return Err(FitError::TooFewPoints {
            need: 2,
            got: positions.len(),
        });
    }
    let first = positions[0];
    if positions.iter().all(|p| (p - first).norm() <= 1e-9) {
        return Err(FitError::DegenerateTrajectory);
    }
    let center = centroid(positions).expect("non-empty");
    let (_, axes) = principal_axes(positions, &center);
    let mut direction = axes[0].normalize();
    if direction.dot(&(positions[positions.len() - 1] - first)) < 0.0 {
        direction = -direction;
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut sq = 0.0;
    for p in positions {
        let d = p - center;
        let s = d.dot(&direction);
        lo = lo.min(s);
        hi = hi.max(s);
        sq += (d - direction * s).norm_squared();
    }
    Ok(PrismaticFit {
        direction,
        center,
        residual_rmse: (sq / positions.len() as f64).sqrt(),
        travel: hi - lo,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircleOptions {
    pub max_iters: usize,
    pub step_tol: f64,
}

impl Default for CircleOptions {
    fn default() -> Self {
        Self {
            max_iters: 200,
            step_tol: 1e-12,
        }
    }
}

/// Algebraic circle: least squares on `x² + y² = 2ax + 2by + c`.
pub fn fit_circle_algebraic(q: &[Vector2<f64>]) -> Option<(Vector2<f64>, f64)> {
    let mut a = DMatrix::zeros(q.len(), 3);
    let mut b = nalgebra::DVector::zeros(q.len());
    for (i, p) in q.iter().enumerate() {
        a[(i, 0)] = 2.0 * p.x;
        a[(i, 1)] = 2.0 * p.y;
        a[(i, 2)] = 1.0;
        b[i] = p.norm_squared();
    }
    let sol = a.svd(true, true).solve(&b, 1e-14).ok()?;
    let c = Vector2::new(sol[0], sol[1]);
    let r2 = sol[2] + c.norm_squared();
    (r2 > 0.0 && r2.is_finite()).then(|| (c, r2.sqrt()))
}

fn radial_cost(q: &[Vector2<f64>], c: &Vector2<f64>, r: f64) -> f64 {
    q.iter().map(|p| ((p - c).norm() - r).powi(2)).sum()
}

fn normal_equations(q: &[Vector2<f64>], c: &Vector2<f64>, r: f64) -> (Matrix3<f64>, Vector3<f64>) {
    let mut jtj = Matrix3::zeros();
    let mut jtr = Vector3::zeros();
    for p in q {
        let d = p - c;
        let n = d.norm();
        if n < 1e-300 {
            continue;
        }
        let j = Vector3::new(-d.x / n, -d.y / n, -1.0);
        jtj += j * j.transpose();
        jtr += j * (n - r);
    }
    (jtj, jtr)
}

/// Levenberg-Marquardt on `Σ(‖qᵢ − c‖ − r)²` over `(cx, cy, r)`. Returns the
/// starting values unchanged if no step improves the cost.
pub fn refine_circle(
    q: &[Vector2<f64>],
    init: (Vector2<f64>, f64),
    opts: &CircleOptions,
) -> Result<(Vector2<f64>, f64), FitError> {
    let (mut c, mut r) = init;
    let mut cost = radial_cost(q, &c, r);
    let mut mu = 1e-3;
    for _ in 0..opts.max_iters {
        let (jtj, jtr) = normal_equations(q, &c, r);
        let mut improved = false;
        let mut step = 0.0;
        while mu < 1e16 {
            let mut damped = jtj;
            for i in 0..3 {
                damped[(i, i)] += mu * jtj[(i, i)].max(1e-300);
            }
            let Some(delta) = damped.cholesky().map(|ch| -ch.solve(&jtr)) else {
                mu *= 10.0;
                continue;
            };
            let nc = c + Vector2::new(delta.x, delta.y);
            let nr = r + delta.z;
            let ncost = radial_cost(q, &nc, nr);
            if ncost.is_finite() && ncost <= cost {
                step = delta.norm();
                c = nc;
                r = nr;
                cost = ncost;
                mu = (mu / 10.0).max(1e-15);
                improved = true;
                break;
            }
            mu *= 4.0;
        }
        if !improved || step < opts.step_tol * (1.0 + r.abs()) {
            break;
        }
    }
    // A small damped step does not imply convergence, and near the minimum
    // cost comparisons drown in rounding. Finish with undamped steps for as
    // long as they keep shrinking.
    let mut last = f64::INFINITY;
    for _ in 0..20 {
        let (jtj, jtr) = normal_equations(q, &c, r);
        let Some(delta) = jtj.cholesky().map(|ch| -ch.solve(&jtr)) else {
            break;
        };
        let size = delta.norm();
        if !(size < last) || !(size < 1e-3 * (1.0 + r.abs())) {
            break;
        }
        c += Vector2::new(delta.x, delta.y);
        r += delta.z;
        last = size;
        if size < 1e-15 * (1.0 + r.abs()) {
            break;
        }
    }
    if !(c.x.is_finite() && c.y.is_finite() && r.is_finite()) {
        return Err(FitError::NoConvergence);
    }
    Ok((c, r.abs()))
}

/// Plane-plus-circle fit. The center is the circle center on the mean plane
/// of the trajectory.
pub fn fit_revolute(positions: &[Vector3<f64>]) -> Result<RevoluteFit, FitError> {
    fit_revolute_with(positions, &CircleOptions::default())
}

pub fn fit_revolute_with(
    positions: &[Vector3<f64>],
    opts: &CircleOptions,
) -> Result<RevoluteFit, FitError> {
    let n = positions.len();
    if n < 3 {
        return Err(FitError::TooFewPoints { need: 3, got: n });
    }
    let mean = centroid(positions).expect("non-empty");
    let (sv, axes) = principal_axes(positions, &mean);
    if !(sv[0] > 0.0) || sv[1] / sv[0] < 1e-7 {
        return Err(FitError::CollinearPoints);
    }
    let e1 = axes[0].normalize();
    let mut normal = axes[2].normalize();
    let e2 = normal.cross(&e1);
    let q: Vec<Vector2<f64>> = positions
        .iter()
        .map(|p| {
            let d = p - mean;
            Vector2::new(d.dot(&e1), d.dot(&e2))
        })
        .collect();

    let init = fit_circle_algebraic(&q).ok_or(FitError::CollinearPoints)?;
    let (c, r) = refine_circle(&q, init, opts)?;
    if !(r > 0.0) {
        return Err(FitError::NoConvergence);
    }

    // unwrapped polar angles along the trajectory
    let mut angles = Vec::with_capacity(n);
    let mut prev = 0.0;
    for (i, p) in q.iter().enumerate() {
        let d = p - c;
        let a = d.y.atan2(d.x);
        let a = if i == 0 {
            a
        } else {
            prev + crate::geometry::wrap_angle(a - prev)
        };
        angles.push(a);
        prev = a;
    }
    let lo = angles.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = angles.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sweep = (hi - lo).clamp(f64::MIN_POSITIVE, std::f64::consts::TAU);
    if angles[n - 1] < angles[0] {
        normal = -normal;
    }

    let mut sq = 0.0;
    for (p, qi) in positions.iter().zip(&q) {
        let radial = (qi - c).norm() - r;
        let out = (p - mean).dot(&normal);
        sq += radial * radial + out * out;
    }
    Ok(RevoluteFit {
        direction: normal,
        center: mean + e1 * c.x + e2 * c.y,
        radius: r,
        residual_rmse: (sq / n as f64).sqrt(),
        sweep,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectionConfig {
    /// Per-parameter penalty; `None` means `ln(n)`.
    pub lambda: Option<f64>,
    /// Revolute verdicts sweeping less than this (radians) are flagged.
    pub low_confidence_sweep: f64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            lambda: None,
            low_confidence_sweep: 10f64.to_radians(),
        }
    }
}

pub const PRISMATIC_PARAMS: f64 = 4.0;
pub const REVOLUTE_PARAMS: f64 = 7.0;
const SCORE_EPS: f64 = 1e-12;

pub fn penalized_score(n: usize, rmse: f64, params: f64, lambda: f64) -> f64 {
    n as f64 * (rmse * rmse + SCORE_EPS).ln() + lambda * params
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointVerdict {
    pub joint_type: JointType,
    pub axis: ArticulationAxis,
    pub prismatic_score: f64,
    /// `None` when the circle fit failed.
    pub revolute_score: Option<f64>,
    pub prismatic: PrismaticFit,
    pub revolute: Option<RevoluteFit>,
    pub low_confidence: bool,
}

/// Fits both joint models and keeps the one with the lower penalized score.
pub fn select_joint(positions: &[Vector3<f64>]) -> Result<JointVerdict, FitError> {
    select_joint_with(positions, &SelectionConfig::default())
}

pub fn select_joint_with(
    positions: &[Vector3<f64>],
    cfg: &SelectionConfig,
) -> Result<JointVerdict, FitError> {
    let n = positions.len();
    if n < 3 {
        return Err(FitError::TooFewPoints { need: 3, got: n });
    }
    let lambda = cfg.lambda.unwrap_or((n as f64).ln());
    let prismatic = fit_prismatic(positions)?;
    let revolute = fit_revolute(positions).ok();
    let prismatic_score = penalized_score(n, prismatic.residual_rmse, PRISMATIC_PARAMS, lambda);
    let revolute_score =
        revolute.map(|r| penalized_score(n, r.residual_rmse, REVOLUTE_PARAMS, lambda));

    let (joint_type, axis, low_confidence) = match (revolute, revolute_score) {
        (Some(r), Some(s)) if s < prismatic_score => (
            JointType::Revolute,
            ArticulationAxis {
                joint_type: JointType::Revolute,
                center: r.center,
                direction: r.direction,
                range: r.sweep,
            },
            r.sweep < cfg.low_confidence_sweep,
        ),
        _ => (
            JointType::Prismatic,
            ArticulationAxis {
                joint_type: JointType::Prismatic,
                center: prismatic.center,
                direction: prismatic.direction,
                range: prismatic.travel,
            },
            false,
        ),
    };
    Ok(JointVerdict {
        joint_type,
        axis,
        prismatic_score,
        revolute_score,
        prismatic,
        revolute,
        low_confidence,
    })
}
