//! Grounds demonstrated trajectories in the scene graph: either attaches the
//! recovered axis to the element the demonstration started at, or creates a
//! new element there when nothing visual was found nearby.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::articulation::JointVerdict;
use crate::geometry::Pose;
use crate::graph::{GraphError, NodeId, SceneGraph};

pub const DEFAULT_THRESHOLD: f64 = 0.10;
pub const INTERACTION_LABEL: &str = "articulated-part";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RefineError {
    #[error("empty trajectory")]
    EmptyTrajectory,
    #[error("threshold must be positive, got {0}")]
    InvalidThreshold(f64),
    #[error("graph has no object nodes to parent a new element")]
    EmptyGraph,
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// How the parent of a new interaction element is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParentRule {
    /// Nearest object centroid.
    #[default]
    Centroid,
    /// Nearest point of any object's cloud.
    PointCloud,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefineConfig {
    pub threshold: f64,
    pub parent_rule: ParentRule,
    pub new_label: String,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            parent_rule: ParentRule::Centroid,
            new_label: INTERACTION_LABEL.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "element_id", rename_all = "snake_case")]
pub enum Association {
    Matched(NodeId),
    NewNode(NodeId),
}

impl Association {
    pub fn element_id(&self) -> NodeId {
        match *self {
            Association::Matched(id) | Association::NewNode(id) => id,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AssociationResult {
    #[serde(flatten)]
    pub kind: Association,
    /// Distance from the trajectory start to the nearest element centroid
    /// that existed before registration; infinite if there was none.
    pub distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nearest {
    pub element_id: NodeId,
    pub distance: f64,
    pub within_threshold: bool,
}

fn check(trajectory: &[Pose], threshold: f64) -> Result<Vector3<f64>, RefineError> {
    if !(threshold > 0.0) {
        return Err(RefineError::InvalidThreshold(threshold));
    }
    Ok(trajectory.first().ok_or(RefineError::EmptyTrajectory)?.position)
}

/// Nearest element centroid to the trajectory's starting position, searched
/// over every element in the graph. Ties go to the lower id.
pub fn associate(
    graph: &SceneGraph,
    trajectory: &[Pose],
    threshold: f64,
) -> Result<Option<Nearest>, RefineError> {
    let start = check(trajectory, threshold)?;
    Ok(nearest_element(graph, &start).map(|(element_id, distance)| Nearest {
        element_id,
        distance,
        within_threshold: distance <= threshold,
    }))
}

fn nearest_element(graph: &SceneGraph, p: &Vector3<f64>) -> Option<(NodeId, f64)> {
    // elements iterate in ascending id, so strict < keeps the lowest id on ties
    let mut best: Option<(NodeId, f64)> = None;
    for e in graph.elements() {
        let d = (e.centroid - p).norm();
        if best.is_none_or(|b| d < b.1) {
            best = Some((e.id, d));
        }
    }
    best
}

/// Object that should parent a new element at `p`.
pub fn nearest_object(graph: &SceneGraph, p: &Vector3<f64>, rule: ParentRule) -> Option<NodeId> {
    let mut best: Option<(NodeId, f64)> = None;
    for o in graph.objects() {
        let d = match rule {
            ParentRule::Centroid => (o.centroid - p).norm_squared(),
            ParentRule::PointCloud => o
                .points
                .iter()
                .map(|q| (q - p).norm_squared())
                .fold(f64::INFINITY, f64::min),
        };
        if best.is_none_or(|b| d < b.1) {
            best = Some((o.id, d));
        }
    }
    best.map(|b| b.0)
}

/// Attaches the verdict's axis to the matched element, or instantiates a new
/// interaction element centered at the trajectory start.
pub fn register_demonstration(
    graph: &mut SceneGraph,
    trajectory: &[Pose],
    verdict: &JointVerdict,
    cfg: &RefineConfig,
) -> Result<AssociationResult, RefineError> {
    let nearest = associate(graph, trajectory, cfg.threshold)?;
    let distance = nearest.map_or(f64::INFINITY, |n| n.distance);
    if let Some(n) = nearest.filter(|n| n.within_threshold) {
        graph.attach_articulation(n.element_id, verdict.axis.clone(), trajectory.to_vec())?;
        return Ok(AssociationResult {
            kind: Association::Matched(n.element_id),
            distance,
        });
    }
    let start = trajectory[0].position;
    let parent = nearest_object(graph, &start, cfg.parent_rule).ok_or(RefineError::EmptyGraph)?;
    let id = graph.add_interaction_element(
        parent,
        cfg.new_label.clone(),
        verdict.axis.clone(),
        trajectory.to_vec(),
    )?;
    Ok(AssociationResult {
        kind: Association::NewNode(id),
        distance,
    })
}
