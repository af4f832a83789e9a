//! The pairwise relation function: ground distance and its bins, eight-way
//! direction sectors in the robot or a person's heading frame, adjacency and
//! occlusion.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use super::GeometryError;
use crate::model::{Box3D, GraphNode, NodeId, RelationEdge};

const COINCIDENT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RelationConfig {
    pub close_max_m: f64,
    pub medium_max_m: f64,
    pub adjacency_max_m: f64,
    pub occlusion_overlap_frac: f64,
    pub occlusion_depth_margin_m: f64,
    pub outlier_trim_pct: f64,
}

impl Default for RelationConfig {
    fn default() -> Self {
        Self {
            close_max_m: 2.0,
            medium_max_m: 5.0,
            adjacency_max_m: 1.5,
            occlusion_overlap_frac: 0.5,
            occlusion_depth_margin_m: 0.3,
            outlier_trim_pct: 5.0,
        }
    }
}

impl RelationConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.close_max_m > 0.0 && self.close_max_m < self.medium_max_m && self.medium_max_m.is_finite()) {
            return Err(format!(
                "need 0 < close_max_m < medium_max_m (got {} and {})",
                self.close_max_m, self.medium_max_m
            ));
        }
        if !(self.adjacency_max_m > 0.0 && self.adjacency_max_m.is_finite()) {
            return Err(format!("adjacency_max_m must be > 0 (got {})", self.adjacency_max_m));
        }
        if !(self.occlusion_overlap_frac > 0.0 && self.occlusion_overlap_frac <= 1.0) {
            return Err(format!(
                "occlusion_overlap_frac must be in (0, 1] (got {})",
                self.occlusion_overlap_frac
            ));
        }
        if !(self.occlusion_depth_margin_m >= 0.0 && self.occlusion_depth_margin_m.is_finite()) {
            return Err(format!(
                "occlusion_depth_margin_m must be >= 0 (got {})",
                self.occlusion_depth_margin_m
            ));
        }
        if !(self.outlier_trim_pct >= 0.0 && self.outlier_trim_pct < 50.0) {
            return Err(format!("outlier_trim_pct must be in [0, 50) (got {})", self.outlier_trim_pct));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceBin {
    Close,
    Medium,
    Far,
}

impl DistanceBin {
    pub const ALL: [DistanceBin; 3] = [DistanceBin::Close, DistanceBin::Medium, DistanceBin::Far];

    pub fn as_str(self) -> &'static str {
        match self {
            DistanceBin::Close => "close",
            DistanceBin::Medium => "medium",
            DistanceBin::Far => "far",
        }
    }
}

impl fmt::Display for DistanceBin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DistanceBin {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| format!("unknown distance bin {s:?}"))
    }
}

/// Eight 45 degree sectors, counterclockwise from straight ahead.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sector {
    Front,
    FrontLeft,
    Left,
    BackLeft,
    Back,
    BackRight,
    Right,
    FrontRight,
}

impl Sector {
    pub const ALL: [Sector; 8] = [
        Sector::Front,
        Sector::FrontLeft,
        Sector::Left,
        Sector::BackLeft,
        Sector::Back,
        Sector::BackRight,
        Sector::Right,
        Sector::FrontRight,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Sector {
        Self::ALL[i % 8]
    }

    /// The sector rotated by 180 degrees.
    pub fn opposite(self) -> Sector {
        Self::from_index(self.index() + 4)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Sector::Front => "front",
            Sector::FrontLeft => "front_left",
            Sector::Left => "left",
            Sector::BackLeft => "back_left",
            Sector::Back => "back",
            Sector::BackRight => "back_right",
            Sector::Right => "right",
            Sector::FrontRight => "front_right",
        }
    }

    /// Surface words used by the query language, e.g. `"front left"`.
    pub fn words(self) -> &'static str {
        match self {
            Sector::Front => "front",
            Sector::FrontLeft => "front left",
            Sector::Left => "left",
            Sector::BackLeft => "back left",
            Sector::Back => "back",
            Sector::BackRight => "back right",
            Sector::Right => "right",
            Sector::FrontRight => "front right",
        }
    }
}

impl fmt::Display for Sector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Sector {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| format!("unknown sector {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    Robot,
    Person,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Direction,
    Distance,
    Adjacency,
    Occlusion,
}

impl EdgeKind {
    pub const ALL: [EdgeKind; 4] =
        [EdgeKind::Direction, EdgeKind::Distance, EdgeKind::Adjacency, EdgeKind::Occlusion];
}

/// Euclidean distance on the ground plane; z is ignored.
pub fn ground_distance(a: &Point3<f64>, b: &Point3<f64>) -> f64 {
    (b.x - a.x).hypot(b.y - a.y)
}

pub fn distance_bin(d: f64, config: &RelationConfig) -> DistanceBin {
    if d < config.close_max_m {
        DistanceBin::Close
    } else if d < config.medium_max_m {
        DistanceBin::Medium
    } else {
        DistanceBin::Far
    }
}

/// Sector of `target` seen from `reference` facing `heading_deg` (0 along
/// robot +x, positive toward +y). Sector intervals are half-open with the
/// lower bound inclusive, so a bearing exactly on a boundary falls in the
/// counterclockwise neighbour.
pub fn direction_sector(
    reference: &Point3<f64>,
    heading_deg: f64,
    target: &Point3<f64>,
) -> Result<Sector, GeometryError> {
    let dx = target.x - reference.x;
    let dy = target.y - reference.y;
    if dx.hypot(dy) <= COINCIDENT_EPS {
        return Err(GeometryError::CoincidentPositions);
    }
    let (s, c) = heading_deg.to_radians().sin_cos();
    let fwd = dx * c + dy * s;
    let lat = -dx * s + dy * c;
    let theta = lat.atan2(fwd).to_degrees();
    let idx = ((theta + 22.5) / 45.0).floor() as i64;
    Ok(Sector::from_index(idx.rem_euclid(8) as usize))
}

/// Sector of a point relative to the robot origin and forward axis.
pub fn robot_sector(target: &Point3<f64>) -> Result<Sector, GeometryError> {
    direction_sector(&Point3::origin(), 0.0, target)
}

/// Arc of azimuths `[start, start + len]` (radians) covered by a footprint
/// as seen from the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Arc {
    start: f64,
    len: f64,
}

fn wrap_pi(a: f64) -> f64 {
    let r = (a + PI).rem_euclid(TAU) - PI;
    if r <= -PI {
        r + TAU
    } else {
        r
    }
}

fn footprint_arc(bbox: &Box3D) -> Arc {
    let (cx, cy) = (bbox.center.x, bbox.center.y);
    let (hx, hy) = (bbox.half_extents.x, bbox.half_extents.y);
    if cx.abs() <= hx && cy.abs() <= hy {
        return Arc { start: -PI, len: TAU };
    }
    let bearing = cy.atan2(cx);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for [x, y] in bbox.footprint() {
        let d = wrap_pi(y.atan2(x) - bearing);
        lo = lo.min(d);
        hi = hi.max(d);
    }
    Arc { start: bearing + lo, len: hi - lo }
}

fn arc_overlap(a: Arc, b: Arc) -> f64 {
    if a.len >= TAU {
        return b.len;
    }
    if b.len >= TAU {
        return a.len;
    }
    let s = (a.start - b.start).rem_euclid(TAU);
    let piece = |start: f64| ((start + a.len).min(b.len) - start.max(0.0)).max(0.0);
    piece(s) + piece(s - TAU)
}

/// Whether a box at `a_center` hides a box at `b_center` from the origin:
/// a's azimuth arc covers at least `occlusion_overlap_frac` of b's, and a is
/// nearer by more than `occlusion_depth_margin_m`.
pub fn occludes_boxes(
    a_center: &Point3<f64>,
    a_box: &Box3D,
    b_center: &Point3<f64>,
    b_box: &Box3D,
    config: &RelationConfig,
) -> bool {
    let origin = Point3::origin();
    let nearer = ground_distance(&origin, a_center)
        < ground_distance(&origin, b_center) - config.occlusion_depth_margin_m;
    if !nearer {
        return false;
    }
    let arc_a = footprint_arc(a_box);
    let arc_b = footprint_arc(b_box);
    if arc_b.len <= 0.0 {
        return false;
    }
    arc_overlap(arc_a, arc_b) >= config.occlusion_overlap_frac * arc_b.len
}

pub fn occludes(a: &GraphNode, b: &GraphNode, config: &RelationConfig) -> bool {
    occludes_boxes(&a.center3d, &a.box3d, &b.center3d, &b.box3d, config)
}

fn pair_edges(a: &GraphNode, b: &GraphNode, config: &RelationConfig, out: &mut Vec<RelationEdge>) {
    let d = ground_distance(&a.center3d, &b.center3d);
    let base = RelationEdge {
        src: a.id,
        dst: b.id,
        kind: EdgeKind::Direction,
        direction: None,
        frame: None,
        distance_bin: None,
        distance_m: d,
    };
    if let Ok(sector) = direction_sector(&a.center3d, 0.0, &b.center3d) {
        out.push(RelationEdge { direction: Some(sector), frame: Some(Frame::Robot), ..base });
    }
    if let Some(heading) = a.heading_deg {
        if let Ok(sector) = direction_sector(&a.center3d, heading, &b.center3d) {
            out.push(RelationEdge { direction: Some(sector), frame: Some(Frame::Person), ..base });
        }
    }
    out.push(RelationEdge { kind: EdgeKind::Distance, distance_bin: Some(distance_bin(d, config)), ..base });
    if d <= config.adjacency_max_m {
        out.push(RelationEdge { kind: EdgeKind::Adjacency, ..base });
    }
    if occludes(a, b, config) {
        out.push(RelationEdge { kind: EdgeKind::Occlusion, ..base });
    }
}

/// Canonical edge order: `(src, dst, kind, frame)`.
pub fn edge_sort_key(e: &RelationEdge) -> (NodeId, NodeId, EdgeKind, Option<Frame>) {
    (e.src, e.dst, e.kind, e.frame)
}

/// All relation edges over the ordered node pairs. For each pair `(i, j)`:
/// a robot-axes direction edge (j's sector around i with heading 0), a
/// person-frame direction edge when i has a heading, a distance edge, an
/// adjacency edge within `adjacency_max_m`, and an occlusion edge when i
/// occludes j. Direction edges are skipped for coincident centers.
pub fn compute_relations(nodes: &[GraphNode], config: &RelationConfig) -> Vec<RelationEdge> {
    let mut order: Vec<&GraphNode> = nodes.iter().collect();
    order.sort_by_key(|n| n.id);
    let mut edges = Vec::with_capacity(nodes.len() * nodes.len().saturating_sub(1) * 3);
    for a in &order {
        for b in &order {
            if a.id != b.id {
                pair_edges(a, b, config, &mut edges);
            }
        }
    }
    edges.sort_by_key(edge_sort_key);
    edges
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AttributeMap, Box2D};
    use nalgebra::Vector3;
    use proptest::prelude::*;

    fn p(x: f64, y: f64) -> Point3<f64> {
        Point3::new(x, y, 0.0)
    }

    pub(crate) fn node(id: NodeId, x: f64, y: f64, heading: Option<f64>) -> GraphNode {
        let center = p(x, y);
        GraphNode::new(
            id,
            Box2D::new(0.0, 0.0, 1.0, 1.0),
            AttributeMap::new(),
            center,
            Box3D { center, half_extents: Vector3::new(0.25, 0.25, 0.85) },
            heading,
            10,
            &RelationConfig::default(),
        )
    }

    #[test]
    fn ground_distance_cases() {
        assert_eq!(ground_distance(&p(0.0, 0.0), &p(0.0, 0.0)), 0.0);
        assert_eq!(ground_distance(&Point3::origin(), &Point3::new(3.0, 4.0, 10.0)), 5.0);
        assert_eq!(ground_distance(&p(1.0, 1.0), &p(1.0, 2.0)), 1.0);
    }

    #[test]
    fn bins_default_thresholds() {
        let cfg = RelationConfig::default();
        assert_eq!(distance_bin(1.0, &cfg), DistanceBin::Close);
        assert_eq!(distance_bin(2.0, &cfg), DistanceBin::Medium);
        assert_eq!(distance_bin(4.999, &cfg), DistanceBin::Medium);
        assert_eq!(distance_bin(5.0, &cfg), DistanceBin::Far);
        assert_eq!(distance_bin(7.0, &cfg), DistanceBin::Far);
    }

    #[test]
    fn sectors_from_origin() {
        let o = Point3::origin();
        assert_eq!(direction_sector(&o, 0.0, &p(1.0, 0.0)).unwrap(), Sector::Front);
        assert_eq!(direction_sector(&o, 0.0, &p(0.0, 1.0)).unwrap(), Sector::Left);
        assert_eq!(direction_sector(&o, 0.0, &p(1.0, 1.0)).unwrap(), Sector::FrontLeft);
        assert_eq!(direction_sector(&o, 90.0, &p(0.0, 1.0)).unwrap(), Sector::Front);
        assert_eq!(direction_sector(&o, 0.0, &p(-1.0, 0.0)).unwrap(), Sector::Back);
        assert_eq!(direction_sector(&o, 0.0, &p(0.0, -1.0)).unwrap(), Sector::Right);
        assert_eq!(direction_sector(&o, 0.0, &p(-1.0, -1.0)).unwrap(), Sector::BackRight);
        assert_eq!(
            direction_sector(&o, 0.0, &p(0.0, 0.0)),
            Err(GeometryError::CoincidentPositions)
        );
    }

    #[test]
    fn sector_boundaries_go_counterclockwise() {
        let o = Point3::origin();
        // bearings on exact multiples of 22.5 + 45k, built from the boundary
        // angle directly; heading 0 keeps the rotation exact
        let at = |deg: f64| {
            let r = deg.to_radians();
            p(r.cos(), r.sin())
        };
        assert_eq!(direction_sector(&o, 0.0, &at(22.5 + 1e-9)).unwrap(), Sector::FrontLeft);
        assert_eq!(direction_sector(&o, 0.0, &at(22.5 - 1e-9)).unwrap(), Sector::Front);
        assert_eq!(direction_sector(&o, 0.0, &at(-22.5 + 1e-9)).unwrap(), Sector::Front);
        assert_eq!(direction_sector(&o, 0.0, &at(179.9)).unwrap(), Sector::Back);
        assert_eq!(direction_sector(&o, 0.0, &at(-179.9)).unwrap(), Sector::Back);
        assert_eq!(direction_sector(&o, 0.0, &at(-157.4)).unwrap(), Sector::BackRight);
    }

    #[test]
    fn occlusion_cases() {
        let cfg = RelationConfig::default();
        // oracle: arc half-widths from the origin. Near footprint at x=1:
        // corners (0.75..1.25, +-0.25) span +-atan(0.25/0.75) = +-18.4 deg;
        // far footprint at x=5 spans +-atan(0.25/4.75) = +-3.0 deg, fully
        // inside, so the overlap fraction of the far arc is 1.
        assert!(occludes(&node(0, 1.0, 0.0, None), &node(1, 5.0, 0.0, None), &cfg));
        assert!(!occludes(&node(0, 5.0, 0.0, None), &node(1, 1.0, 0.0, None), &cfg));
        // (1,5) sits at bearing 78.7 deg, (5,0) at 0 deg: disjoint arcs.
        assert!(!occludes(&node(0, 1.0, 5.0, None), &node(1, 5.0, 0.0, None), &cfg));
        // depth margin not met
        assert!(!occludes(&node(0, 4.8, 0.0, None), &node(1, 5.0, 0.0, None), &cfg));
    }

    #[test]
    fn occlusion_across_back_seam() {
        let cfg = RelationConfig::default();
        assert!(occludes(&node(0, -1.0, 0.0, None), &node(1, -5.0, 0.01, None), &cfg));
        assert!(occludes(&node(0, -1.0, 0.0, None), &node(1, -5.0, -0.01, None), &cfg));
    }

    #[test]
    fn arc_overlap_partial() {
        let a = Arc { start: 0.0, len: 1.0 };
        let b = Arc { start: 0.5, len: 1.0 };
        assert!((arc_overlap(a, b) - 0.5).abs() < 1e-12);
        let wrap_a = Arc { start: PI - 0.2, len: 0.4 };
        let wrap_b = Arc { start: -PI, len: 0.1 };
        assert!((arc_overlap(wrap_a, wrap_b) - 0.1).abs() < 1e-12);
        assert_eq!(arc_overlap(Arc { start: 0.0, len: TAU }, b), 1.0);
    }

    #[test]
    fn footprint_around_origin_is_full_circle() {
        let bbox = Box3D { center: p(0.1, 0.0), half_extents: Vector3::new(0.25, 0.25, 1.0) };
        assert_eq!(footprint_arc(&bbox).len, TAU);
    }

    #[test]
    fn person_frame_example() {
        let nodes = vec![node(0, 1.0, 0.0, Some(0.0)), node(1, 1.0, 1.0, None)];
        let edges = compute_relations(&nodes, &RelationConfig::default());
        let person: Vec<_> = edges
            .iter()
            .filter(|e| e.src == 0 && e.frame == Some(Frame::Person))
            .collect();
        assert_eq!(person.len(), 1);
        assert_eq!(person[0].direction, Some(Sector::Left));
        let dist = edges.iter().find(|e| e.src == 0 && e.kind == EdgeKind::Distance).unwrap();
        assert_eq!(dist.distance_m, 1.0);
        assert_eq!(dist.distance_bin, Some(DistanceBin::Close));
        // node 1 has no heading: no person-frame edge from it
        assert!(!edges.iter().any(|e| e.src == 1 && e.frame == Some(Frame::Person)));
        // adjacency within 1.5 m in both directions
        assert_eq!(edges.iter().filter(|e| e.kind == EdgeKind::Adjacency).count(), 2);
    }

    #[test]
    fn single_node_no_edges() {
        assert!(compute_relations(&[node(3, 1.0, 0.0, Some(0.0))], &RelationConfig::default()).is_empty());
    }

    #[test]
    fn config_validation() {
        assert!(RelationConfig::default().validate().is_ok());
        let bad = RelationConfig { close_max_m: 5.0, medium_max_m: 2.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = RelationConfig { outlier_trim_pct: 50.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    fn near_boundary(theta_deg: f64) -> bool {
        let r = (theta_deg + 22.5).rem_euclid(45.0);
        r < 1e-6 || r > 45.0 - 1e-6
    }

    fn bearing(a: &Point3<f64>, heading: f64, b: &Point3<f64>) -> f64 {
        ((b.y - a.y).atan2(b.x - a.x).to_degrees() - heading).rem_euclid(360.0)
    }

    fn arb_nodes() -> impl Strategy<Value = Vec<GraphNode>> {
        proptest::collection::vec(
            (-10.0f64..10.0, -10.0f64..10.0, proptest::option::of(-180.0f64..180.0)),
            2..7,
        )
        .prop_map(|v| {
            v.into_iter()
                .enumerate()
                .map(|(i, (x, y, h))| node(i as NodeId, x, y, h))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn distance_edges_symmetric(nodes in arb_nodes()) {
            let edges = compute_relations(&nodes, &RelationConfig::default());
            for e in edges.iter().filter(|e| e.kind == EdgeKind::Distance) {
                let back = edges
                    .iter()
                    .find(|r| r.kind == EdgeKind::Distance && r.src == e.dst && r.dst == e.src)
                    .unwrap();
                prop_assert_eq!(back.distance_m.to_bits(), e.distance_m.to_bits());
            }
        }

        #[test]
        fn relations_independent_of_input_order(mut nodes in arb_nodes()) {
            let cfg = RelationConfig::default();
            let fwd = compute_relations(&nodes, &cfg);
            nodes.reverse();
            prop_assert_eq!(fwd, compute_relations(&nodes, &cfg));
        }

        #[test]
        fn opposite_sector_under_shared_heading(ax in -10.0f64..10.0, ay in -10.0f64..10.0, bx in -10.0f64..10.0, by in -10.0f64..10.0, h in -180.0f64..180.0) {
            let a = p(ax, ay);
            let b = p(bx, by);
            prop_assume!(ground_distance(&a, &b) > 1e-3);
            prop_assume!(!near_boundary(bearing(&a, h, &b)));
            let ab = direction_sector(&a, h, &b).unwrap();
            let ba = direction_sector(&b, h, &a).unwrap();
            prop_assert_eq!(ba, ab.opposite());
        }

        #[test]
        fn common_yaw_preserves_person_relations(nodes in arb_nodes(), yaw in -180.0f64..180.0) {
            let cfg = RelationConfig::default();
            for a in &nodes {
                for b in &nodes {
                    if a.id == b.id || ground_distance(&a.center3d, &b.center3d) < 1e-3 {
                        continue;
                    }
                    prop_assume!(!near_boundary(bearing(&a.center3d, a.heading_deg.unwrap_or(0.0), &b.center3d)));
                }
            }
            let (s, c) = yaw.to_radians().sin_cos();
            let rotated: Vec<GraphNode> = nodes
                .iter()
                .map(|n| node(n.id, c * n.center3d.x - s * n.center3d.y, s * n.center3d.x + c * n.center3d.y, n.heading_deg.map(|h| crate::model::normalize_degrees(h + yaw))))
                .collect();
            let before = compute_relations(&nodes, &cfg);
            let after = compute_relations(&rotated, &cfg);
            let person = |edges: &[RelationEdge]| -> Vec<(NodeId, NodeId, Option<Sector>)> {
                edges.iter().filter(|e| e.frame == Some(Frame::Person)).map(|e| (e.src, e.dst, e.direction)).collect()
            };
            prop_assert_eq!(person(&before), person(&after));
            let kinds = |edges: &[RelationEdge], k: EdgeKind| -> Vec<(NodeId, NodeId)> {
                edges.iter().filter(|e| e.kind == k).map(|e| (e.src, e.dst)).collect()
            };
            prop_assert_eq!(kinds(&before, EdgeKind::Adjacency), kinds(&after, EdgeKind::Adjacency));
            let bins = |edges: &[RelationEdge]| -> Vec<Option<DistanceBin>> {
                edges.iter().filter(|e| e.kind == EdgeKind::Distance).map(|e| e.distance_bin).collect()
            };
            prop_assert_eq!(bins(&before), bins(&after));
        }
    }
}
