//! The unified scene graph: nodes from localized detections, edges from the
//! relation function, plus the attribute and edge indices used by search.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use nalgebra::Point3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{GraphNode, NodeId, RelationEdge, SceneBundle};
use crate::projection::{
    compute_relations, edge_sort_key, entity_estimate, DistanceBin, EdgeKind, Frame, PixelGrid,
    RelationConfig, Sector,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("UnknownNode: {0}")]
    UnknownNode(NodeId),
    #[error("InvalidGraph: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    EmptyAssociation,
}

/// A detection that did not become a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildDiagnostic {
    pub id: NodeId,
    pub reason: DropReason,
}

/// Everything the edges say about one ordered pair `(src, dst)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairRelations {
    pub dst: NodeId,
    /// Position of `dst` in [`SceneGraph::nodes`].
    pub dst_index: usize,
    pub robot_direction: Option<Sector>,
    pub person_direction: Option<Sector>,
    pub distance_bin: Option<DistanceBin>,
    pub adjacent: bool,
    /// `src` occludes `dst`.
    pub occludes: bool,
    /// `dst` occludes `src`.
    pub occluded_by: bool,
}

#[derive(Serialize, Deserialize)]
struct GraphDoc {
    nodes: Vec<GraphNode>,
    edges: Vec<RelationEdge>,
    diagnostics: Vec<BuildDiagnostic>,
}

/// Immutable scene graph `G = (V, E)` with lookup indices.
#[derive(Debug, Clone)]
pub struct SceneGraph {
    nodes: Vec<GraphNode>,
    edges: Vec<RelationEdge>,
    diagnostics: Vec<BuildDiagnostic>,
    position: HashMap<NodeId, usize>,
    attr_index: BTreeMap<(String, String), BTreeSet<NodeId>>,
    edge_index: HashMap<(NodeId, EdgeKind), Vec<usize>>,
    pairs: Vec<Vec<PairRelations>>,
}

impl PartialEq for SceneGraph {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.edges == other.edges && self.diagnostics == other.diagnostics
    }
}

impl SceneGraph {
    /// Assembles a graph from parts, checking that nodes are unique and every
    /// edge is well formed with existing endpoints. Nodes, edges and
    /// diagnostics are put in canonical order.
    pub fn from_parts(
        mut nodes: Vec<GraphNode>,
        mut edges: Vec<RelationEdge>,
        mut diagnostics: Vec<BuildDiagnostic>,
    ) -> Result<Self, GraphError> {
        nodes.sort_by_key(|n| n.id);
        edges.sort_by_key(edge_sort_key);
        diagnostics.sort_by_key(|d| d.id);

        let mut position = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if position.insert(n.id, i).is_some() {
                return Err(GraphError::Invalid(format!("duplicate node id {}", n.id)));
            }
        }
        let mut attr_index: BTreeMap<(String, String), BTreeSet<NodeId>> = BTreeMap::new();
        for n in &nodes {
            for (k, v) in n.attributes.iter() {
                attr_index.entry((k.to_owned(), v.to_owned())).or_default().insert(n.id);
            }
        }

        let mut edge_index: HashMap<(NodeId, EdgeKind), Vec<usize>> = HashMap::new();
        let mut pair_maps: Vec<BTreeMap<NodeId, PairRelations>> = vec![BTreeMap::new(); nodes.len()];
        let blank = |dst, dst_index| PairRelations {
            dst,
            dst_index,
            robot_direction: None,
            person_direction: None,
            distance_bin: None,
            adjacent: false,
            occludes: false,
            occluded_by: false,
        };
        for (i, e) in edges.iter().enumerate() {
            if !e.is_well_formed() {
                return Err(GraphError::Invalid(format!("malformed edge {} -> {} ({:?})", e.src, e.dst, e.kind)));
            }
            let (Some(&si), Some(&di)) = (position.get(&e.src), position.get(&e.dst)) else {
                return Err(GraphError::Invalid(format!("edge {} -> {} has a missing endpoint", e.src, e.dst)));
            };
            edge_index.entry((e.src, e.kind)).or_default().push(i);
            let fwd = pair_maps[si].entry(e.dst).or_insert_with(|| blank(e.dst, di));
            match e.kind {
                EdgeKind::Direction => match e.frame {
                    Some(Frame::Robot) => fwd.robot_direction = e.direction,
                    Some(Frame::Person) => fwd.person_direction = e.direction,
                    None => {}
                },
                EdgeKind::Distance => fwd.distance_bin = e.distance_bin,
                EdgeKind::Adjacency => fwd.adjacent = true,
                EdgeKind::Occlusion => {
                    fwd.occludes = true;
                    pair_maps[di].entry(e.src).or_insert_with(|| blank(e.src, si)).occluded_by = true;
                }
            }
        }
        let pairs = pair_maps.into_iter().map(|m| m.into_values().collect()).collect();

        Ok(Self { nodes, edges, diagnostics, position, attr_index, edge_index, pairs })
    }

    pub fn nodes(&self) -> &[GraphNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[RelationEdge] {
        &self.edges
    }

    pub fn diagnostics(&self) -> &[BuildDiagnostic] {
        &self.diagnostics
    }

    pub fn node(&self, id: NodeId) -> Option<&GraphNode> {
        self.position.get(&id).map(|&i| &self.nodes[i])
    }

    /// Position of node `id` in [`Self::nodes`].
    pub fn index_of(&self, id: NodeId) -> Option<usize> {
        self.position.get(&id).copied()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes whose attribute `key` equals `value`.
    pub fn nodes_with_attribute(&self, key: &str, value: &str) -> BTreeSet<NodeId> {
        self.attr_index
            .get(&(key.to_owned(), value.to_owned()))
            .cloned()
            .unwrap_or_default()
    }

    /// Outgoing edges of `src` with the given kind.
    pub fn outgoing(&self, src: NodeId, kind: EdgeKind) -> impl Iterator<Item = &RelationEdge> {
        self.edge_index
            .get(&(src, kind))
            .into_iter()
            .flatten()
            .map(|&i| &self.edges[i])
    }

    /// Per-destination summary of `src`'s outgoing relations, ordered by
    /// destination id.
    pub fn pair_relations(&self, src: NodeId) -> Result<&[PairRelations], GraphError> {
        let &i = self.position.get(&src).ok_or(GraphError::UnknownNode(src))?;
        Ok(&self.pairs[i])
    }

    /// Destinations of `src`'s outgoing `kind` edges matching every given filter.
    pub fn related_nodes(
        &self,
        src: NodeId,
        kind: EdgeKind,
        direction: Option<Sector>,
        frame: Option<Frame>,
        distance_bin: Option<DistanceBin>,
    ) -> Result<BTreeSet<NodeId>, GraphError> {
        if !self.position.contains_key(&src) {
            return Err(GraphError::UnknownNode(src));
        }
        Ok(self
            .outgoing(src, kind)
            .filter(|e| direction.is_none() || e.direction == direction)
            .filter(|e| frame.is_none() || e.frame == frame)
            .filter(|e| distance_bin.is_none() || e.distance_bin == distance_bin)
            .map(|e| e.dst)
            .collect())
    }

    /// Canonical JSON: `{nodes, edges, diagnostics}` with stable field order.
    pub fn to_json(&self) -> String {
        let doc = GraphDoc {
            nodes: self.nodes.clone(),
            edges: self.edges.clone(),
            diagnostics: self.diagnostics.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("graph serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, GraphError> {
        let doc: GraphDoc = serde_json::from_str(text).map_err(|e| GraphError::Invalid(e.to_string()))?;
        Self::from_parts(doc.nodes, doc.edges, doc.diagnostics)
    }
}

/// Localizes every detection against the cloud, drops those with no
/// associated points (reported in the diagnostics), and relates the rest.
pub fn build_graph(bundle: &SceneBundle, config: &RelationConfig) -> SceneGraph {
    let width = bundle.image_width() as f64;
    let height = bundle.image_height() as f64;
    let grid = PixelGrid::build(bundle.camera(), width, height, bundle.cloud());
    let cloud = &bundle.cloud().points;

    let mut nodes = Vec::with_capacity(bundle.detections().len());
    let mut diagnostics = Vec::new();
    let mut scratch: Vec<Point3<f64>> = Vec::new();
    for det in bundle.detections() {
        scratch.clear();
        scratch.extend(grid.query(&det.bbox).into_iter().map(|i| cloud[i]));
        match entity_estimate(&scratch, config.outlier_trim_pct) {
            Ok((center, box3d)) => nodes.push(GraphNode::new(
                det.id,
                det.bbox,
                det.attributes.clone(),
                center,
                box3d,
                det.heading_deg,
                scratch.len(),
                config,
            )),
            Err(_) => diagnostics.push(BuildDiagnostic { id: det.id, reason: DropReason::EmptyAssociation }),
        }
    }
    let edges = compute_relations(&nodes, config);
    SceneGraph::from_parts(nodes, edges, diagnostics).expect("relations only reference built nodes")
}
