//! Functional scene graph: object nodes, functional-element nodes and the
//! element→object edges that tie them together.
//!
//! Object and element nodes share one id space. Ids are handed out in
//! insertion order and never reused.
//!
//! The on-disk form is a JSON document (see `docs/scene_graph.schema.json`):
//!
//! ```json
//! { "header": { "version": 1, "feature_dim": 16 },
//!   "objects": [...], "elements": [...], "edges": [...] }
//! ```

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{centroid, Pose};

pub const FORMAT_VERSION: u32 = 1;

pub type NodeId = u64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("point cloud is empty")]
    EmptyPointCloud,
    #[error("unknown parent object {0}")]
    UnknownParent(NodeId),
    #[error("unknown element {0}")]
    UnknownElement(NodeId),
    #[error("trajectory has {0} poses, at least 2 required")]
    TrajectoryTooShort(usize),
    #[error("feature dimension {got} does not match graph dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("feature vector has zero or non-finite norm")]
    DegenerateFeature,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("interaction-discovered elements must be created with a trajectory")]
    MissingTrajectory,
    #[error("invalid articulation axis: {0}")]
    InvalidAxis(String),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointType {
    Prismatic,
    Revolute,
}

impl std::fmt::Display for JointType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            JointType::Prismatic => f.write_str("prismatic"),
            JointType::Revolute => f.write_str("revolute"),
        }
    }
}

/// Joint type plus axis `{center, direction}`. `range` is travel in meters
/// for prismatic joints and sweep in radians for revolute ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArticulationAxis {
    pub joint_type: JointType,
    #[serde(with = "vec3")]
    pub center: Vector3<f64>,
    #[serde(with = "vec3")]
    pub direction: Vector3<f64>,
    pub range: f64,
}

impl ArticulationAxis {
    pub fn validate(&self) -> Result<(), GraphError> {
        if (self.direction.norm() - 1.0).abs() > 1e-9 {
            return Err(GraphError::InvalidAxis(format!(
                "direction norm {} is not 1",
                self.direction.norm()
            )));
        }
        if !(self.range >= 0.0) || !self.range.is_finite() {
            return Err(GraphError::InvalidAxis(format!("range {}", self.range)));
        }
        if !self.center.iter().all(|v| v.is_finite()) {
            return Err(GraphError::InvalidAxis("non-finite center".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Visual,
    Interaction,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectNode {
    pub id: NodeId,
    pub label: String,
    pub feature: Option<Vec<f64>>,
    #[serde(with = "vec3_list")]
    pub points: Vec<Vector3<f64>>,
    #[serde(with = "vec3")]
    pub centroid: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElementNode {
    pub id: NodeId,
    pub label: String,
    pub feature: Option<Vec<f64>>,
    #[serde(with = "vec3_list")]
    pub points: Vec<Vector3<f64>>,
    #[serde(with = "vec3")]
    pub centroid: Vector3<f64>,
    pub provenance: Provenance,
    pub articulation: Option<ArticulationAxis>,
    pub trajectory: Option<Vec<Pose>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Edge {
    pub element_id: NodeId,
    pub object_id: NodeId,
}

/// Reference to either node kind.
#[derive(Debug, Clone, Copy)]
pub enum NodeRef<'a> {
    Object(&'a ObjectNode),
    Element(&'a ElementNode),
}

impl NodeRef<'_> {
    pub fn id(&self) -> NodeId {
        match self {
            NodeRef::Object(o) => o.id,
            NodeRef::Element(e) => e.id,
        }
    }

    pub fn label(&self) -> &str {
        match self {
            NodeRef::Object(o) => &o.label,
            NodeRef::Element(e) => &e.label,
        }
    }

    pub fn feature(&self) -> Option<&[f64]> {
        match self {
            NodeRef::Object(o) => o.feature.as_deref(),
            NodeRef::Element(e) => e.feature.as_deref(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            NodeRef::Object(_) => "object",
            NodeRef::Element(_) => "element",
        }
    }
}

/// One ranked retrieval hit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryHit {
    pub id: NodeId,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    version: u32,
    feature_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphDocument {
    header: Header,
    objects: Vec<ObjectNode>,
    elements: Vec<ElementNode>,
    edges: Vec<Edge>,
}

/// The scene graph. Single writer; no internal locking.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneGraph {
    feature_dim: usize,
    objects: BTreeMap<NodeId, ObjectNode>,
    elements: BTreeMap<NodeId, ElementNode>,
    parent: BTreeMap<NodeId, NodeId>,
    next_id: NodeId,
}

fn unit_feature(f: Vec<f64>, dim: usize) -> Result<Vec<f64>, GraphError> {
    if f.len() != dim {
        return Err(GraphError::DimensionMismatch {
            expected: dim,
            got: f.len(),
        });
    }
    let n = f.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(n > 0.0) || !n.is_finite() {
        return Err(GraphError::DegenerateFeature);
    }
    Ok(f.into_iter().map(|v| v / n).collect())
}

impl SceneGraph {
    pub fn new(feature_dim: usize) -> Self {
        Self {
            feature_dim,
            objects: BTreeMap::new(),
            elements: BTreeMap::new(),
            parent: BTreeMap::new(),
            next_id: 0,
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn objects(&self) -> impl Iterator<Item = &ObjectNode> {
        self.objects.values()
    }

    pub fn elements(&self) -> impl Iterator<Item = &ElementNode> {
        self.elements.values()
    }

    pub fn object(&self, id: NodeId) -> Option<&ObjectNode> {
        self.objects.get(&id)
    }

    pub fn element(&self, id: NodeId) -> Option<&ElementNode> {
        self.elements.get(&id)
    }

    pub fn node(&self, id: NodeId) -> Option<NodeRef<'_>> {
        self.objects
            .get(&id)
            .map(NodeRef::Object)
            .or_else(|| self.elements.get(&id).map(NodeRef::Element))
    }

    pub fn num_objects(&self) -> usize {
        self.objects.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.objects.len() + self.elements.len()
    }

    /// Edges sorted by element id.
    pub fn edges(&self) -> Vec<Edge> {
        self.parent
            .iter()
            .map(|(&element_id, &object_id)| Edge {
                element_id,
                object_id,
            })
            .collect()
    }

    pub fn parent_of(&self, element_id: NodeId) -> Option<NodeId> {
        self.parent.get(&element_id).copied()
    }

    pub fn children_of(&self, object_id: NodeId) -> Vec<NodeId> {
        self.parent
            .iter()
            .filter(|(_, &o)| o == object_id)
            .map(|(&e, _)| e)
            .collect()
    }

    fn take_id(&mut self) -> NodeId {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    pub fn add_object_node(
        &mut self,
        label: impl Into<String>,
        points: Vec<Vector3<f64>>,
        feature: Option<Vec<f64>>,
    ) -> Result<NodeId, GraphError> {
        let c = centroid(&points).ok_or(GraphError::EmptyPointCloud)?;
        let feature = feature
            .map(|f| unit_feature(f, self.feature_dim))
            .transpose()?;
        let id = self.take_id();
        self.objects.insert(
            id,
            ObjectNode {
                id,
                label: label.into(),
                feature,
                points,
                centroid: c,
            },
        );
        Ok(id)
    }

    /// Adds an element observed visually (or by both routes) and links it to
    /// its parent. Interaction-only elements go through
    /// [`SceneGraph::add_interaction_element`].
    pub fn add_element_node(
        &mut self,
        parent_object_id: NodeId,
        label: impl Into<String>,
        points: Vec<Vector3<f64>>,
        feature: Option<Vec<f64>>,
        provenance: Provenance,
    ) -> Result<NodeId, GraphError> {
        if !self.objects.contains_key(&parent_object_id) {
            return Err(GraphError::UnknownParent(parent_object_id));
        }
        if provenance != Provenance::Visual {
            return Err(GraphError::MissingTrajectory);
        }
        let c = centroid(&points).ok_or(GraphError::EmptyPointCloud)?;
        let feature = feature
            .map(|f| unit_feature(f, self.feature_dim))
            .transpose()?;
        let id = self.take_id();
        self.elements.insert(
            id,
            ElementNode {
                id,
                label: label.into(),
                feature,
                points,
                centroid: c,
                provenance,
                articulation: None,
                trajectory: None,
            },
        );
        self.parent.insert(id, parent_object_id);
        Ok(id)
    }

    /// Creates an element that has no visual geometry: centroid at the
    /// trajectory start, articulation attached.
    pub fn add_interaction_element(
        &mut self,
        parent_object_id: NodeId,
        label: impl Into<String>,
        axis: ArticulationAxis,
        trajectory: Vec<Pose>,
    ) -> Result<NodeId, GraphError> {
        if !self.objects.contains_key(&parent_object_id) {
            return Err(GraphError::UnknownParent(parent_object_id));
        }
        if trajectory.len() < 2 {
            return Err(GraphError::TrajectoryTooShort(trajectory.len()));
        }
        axis.validate()?;
        let id = self.take_id();
        self.elements.insert(
            id,
            ElementNode {
                id,
                label: label.into(),
                feature: None,
                points: Vec::new(),
                centroid: trajectory[0].position,
                provenance: Provenance::Interaction,
                articulation: Some(axis),
                trajectory: Some(trajectory),
            },
        );
        self.parent.insert(id, parent_object_id);
        Ok(id)
    }

    pub fn attach_articulation(
        &mut self,
        element_id: NodeId,
        axis: ArticulationAxis,
        trajectory: Vec<Pose>,
    ) -> Result<(), GraphError> {
        let el = self
            .elements
            .get_mut(&element_id)
            .ok_or(GraphError::UnknownElement(element_id))?;
        if trajectory.len() < 2 {
            return Err(GraphError::TrajectoryTooShort(trajectory.len()));
        }
        axis.validate()?;
        el.articulation = Some(axis);
        el.trajectory = Some(trajectory);
        if el.provenance == Provenance::Visual {
            el.provenance = Provenance::Both;
        }
        Ok(())
    }

    pub fn set_feature(&mut self, id: NodeId, feature: Vec<f64>) -> Result<(), GraphError> {
        let f = unit_feature(feature, self.feature_dim)?;
        if let Some(o) = self.objects.get_mut(&id) {
            o.feature = Some(f);
        } else if let Some(e) = self.elements.get_mut(&id) {
            e.feature = Some(f);
        } else {
            return Err(GraphError::UnknownElement(id));
        }
        Ok(())
    }

    /// Cosine-similarity retrieval over every node that carries a feature.
    /// Ties are broken by ascending id.
    pub fn query(&self, query_feature: &[f64], k: usize) -> Result<Vec<QueryHit>, GraphError> {
        if k == 0 {
            return Err(GraphError::InvalidK);
        }
        let q = unit_feature(query_feature.to_vec(), self.feature_dim)?;
        let mut hits: Vec<QueryHit> = self
            .objects
            .values()
            .map(NodeRef::Object)
            .chain(self.elements.values().map(NodeRef::Element))
            .filter_map(|n| {
                n.feature().map(|f| QueryHit {
                    id: n.id(),
                    score: f.iter().zip(&q).map(|(a, b)| a * b).sum(),
                })
            })
            .collect();
        hits.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.id.cmp(&b.id)));
        hits.truncate(k);
        Ok(hits)
    }

    /// Checks every structural invariant. Used after deserialization.
    pub fn validate(&self) -> Result<(), String> {
        for (id, o) in &self.objects {
            if o.id != *id {
                return Err(format!("object {id} has mismatched id"));
            }
            let c = centroid(&o.points).ok_or_else(|| format!("object {id} has no points"))?;
            if (c - o.centroid).norm() > 1e-9 * c.norm().max(1.0) {
                return Err(format!("object {id} centroid is not the mean of its points"));
            }
            self.check_feature(*id, o.feature.as_deref())?;
        }
        for (id, e) in &self.elements {
            if self.objects.contains_key(id) {
                return Err(format!("id {id} used by both an object and an element"));
            }
            match self.parent.get(id) {
                Some(p) if self.objects.contains_key(p) => {}
                Some(p) => return Err(format!("element {id} points at missing object {p}")),
                None => return Err(format!("element {id} has no parent edge")),
            }
            if let Some(c) = centroid(&e.points) {
                if (c - e.centroid).norm() > 1e-9 * c.norm().max(1.0) {
                    return Err(format!("element {id} centroid is not the mean of its points"));
                }
            } else if e.provenance == Provenance::Visual {
                return Err(format!("visual element {id} has no points"));
            }
            if e.articulation.is_some() && e.trajectory.is_none() {
                return Err(format!("element {id} has an axis but no trajectory"));
            }
            if e.provenance == Provenance::Interaction && e.trajectory.is_none() {
                return Err(format!("interaction element {id} has no trajectory"));
            }
            if let Some(t) = &e.trajectory {
                if t.len() < 2 {
                    return Err(format!("element {id} trajectory shorter than 2"));
                }
            }
            if let Some(a) = &e.articulation {
                a.validate().map_err(|err| format!("element {id}: {err}"))?;
            }
            self.check_feature(*id, e.feature.as_deref())?;
        }
        for e in self.parent.keys() {
            if !self.elements.contains_key(e) {
                return Err(format!("edge references missing element {e}"));
            }
        }
        Ok(())
    }

    fn check_feature(&self, id: NodeId, f: Option<&[f64]>) -> Result<(), String> {
        if let Some(f) = f {
            if f.len() != self.feature_dim {
                return Err(format!(
                    "node {id} feature has dimension {}, header says {}",
                    f.len(),
                    self.feature_dim
                ));
            }
            let n = f.iter().map(|v| v * v).sum::<f64>().sqrt();
            if (n - 1.0).abs() > 1e-6 {
                return Err(format!("node {id} feature is not unit norm ({n})"));
            }
        }
        Ok(())
    }

    /// Canonical JSON: nodes sorted by id, edges by element id.
    pub fn to_json(&self) -> Vec<u8> {
        let doc = GraphDocument {
            header: Header {
                version: FORMAT_VERSION,
                feature_dim: self.feature_dim,
            },
            objects: self.objects.values().cloned().collect(),
            elements: self.elements.values().cloned().collect(),
            edges: self.edges(),
        };
        let mut out = serde_json::to_vec_pretty(&doc).expect("graph serializes");
        out.push(b'\n');
        out
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, GraphError> {
        let doc: GraphDocument = serde_json::from_slice(bytes).map_err(|e| GraphError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        let semantic = |message: String| GraphError::Parse {
            line: 0,
            column: 0,
            message,
        };
        if doc.header.version != FORMAT_VERSION {
            return Err(semantic(format!(
                "unsupported version {}",
                doc.header.version
            )));
        }
        let mut g = SceneGraph::new(doc.header.feature_dim);
        let mut seen = BTreeSet::new();
        for o in doc.objects {
            if !seen.insert(o.id) {
                return Err(semantic(format!("duplicate node id {}", o.id)));
            }
            g.objects.insert(o.id, o);
        }
        for e in doc.elements {
            if !seen.insert(e.id) {
                return Err(semantic(format!("duplicate node id {}", e.id)));
            }
            g.elements.insert(e.id, e);
        }
        for edge in doc.edges {
            if g.parent.insert(edge.element_id, edge.object_id).is_some() {
                return Err(semantic(format!(
                    "element {} has more than one parent edge",
                    edge.element_id
                )));
            }
        }
        g.next_id = seen.iter().next_back().map_or(0, |m| m + 1);
        g.validate().map_err(semantic)?;
        Ok(g)
    }
}

pub(crate) mod vec3 {
    use nalgebra::Vector3;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Vector3<f64>, s: S) -> Result<S::Ok, S::Error> {
        [v.x, v.y, v.z].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vector3<f64>, D::Error> {
        let a = <[f64; 3]>::deserialize(d)?;
        Ok(Vector3::from(a))
    }
}

pub(crate) mod vec3_list {
    use nalgebra::Vector3;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[Vector3<f64>], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|p| [p.x, p.y, p.z]))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vector3<f64>>, D::Error> {
        let a = Vec::<[f64; 3]>::deserialize(d)?;
        Ok(a.into_iter().map(Vector3::from).collect())
    }
}
