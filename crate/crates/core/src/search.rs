//! Two-phase query execution: majority-match attribute filtering, then
//! relational validation of each surviving anchor.

use std::cmp::Ordering;
use std::fmt;

use serde::ser::{Serialize, SerializeStruct, Serializer};

use crate::graph::{GraphError, SceneGraph};
use crate::model::{AttributeMap, Box2D, NodeId};
use crate::projection::Frame;
use crate::query::{AttributeConstraint, RelationalConstraint, StructuredQuery, Task};

/// Exact fraction `matched / total` of satisfied attribute constraints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MatchFraction {
    pub matched: u32,
    pub total: u32,
}

impl MatchFraction {
    pub const ONE: MatchFraction = MatchFraction { matched: 1, total: 1 };

    /// Strictly more than half.
    pub fn is_majority(self) -> bool {
        2 * u64::from(self.matched) > u64::from(self.total)
    }

    pub fn to_f64(self) -> f64 {
        f64::from(self.matched) / f64::from(self.total)
    }
}

impl Ord for MatchFraction {
    fn cmp(&self, other: &Self) -> Ordering {
        (u64::from(self.matched) * u64::from(other.total)).cmp(&(u64::from(other.matched) * u64::from(self.total)))
    }
}

impl PartialOrd for MatchFraction {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for MatchFraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.matched, self.total)
    }
}

impl Serialize for MatchFraction {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.to_f64())
    }
}

/// Majority rule: retained iff strictly more than half of `constraints` hold
/// in `attrs`. An empty constraint list matches everything with fraction 1.
pub fn majority_match(attrs: &AttributeMap, constraints: &[AttributeConstraint]) -> (bool, MatchFraction) {
    if constraints.is_empty() {
        return (true, MatchFraction::ONE);
    }
    let matched = constraints.iter().filter(|c| attrs.get(&c.key) == Some(c.value.as_str())).count();
    let fraction = MatchFraction { matched: matched as u32, total: constraints.len() as u32 };
    (fraction.is_majority(), fraction)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Candidate {
    pub node_id: NodeId,
    pub match_fraction: MatchFraction,
    pub relation_ok: bool,
}

/// Nodes passing the majority rule on the anchor attributes, in id order.
pub fn phase1_filter(graph: &SceneGraph, anchor_attrs: &[AttributeConstraint]) -> Vec<Candidate> {
    graph
        .nodes()
        .iter()
        .filter_map(|n| {
            let (ok, fraction) = majority_match(&n.attributes, anchor_attrs);
            ok.then_some(Candidate { node_id: n.id, match_fraction: fraction, relation_ok: false })
        })
        .collect()
}

/// Per-query state shared by every candidate: which nodes can witness each
/// relation's related attributes.
struct Witnesses<'a> {
    relations: &'a [RelationalConstraint],
    eligible: Vec<Vec<bool>>,
}

impl<'a> Witnesses<'a> {
    fn new(graph: &SceneGraph, relations: &'a [RelationalConstraint]) -> Self {
        let eligible = relations
            .iter()
            .map(|r| match r.frame {
                Frame::Robot => Vec::new(),
                Frame::Person => {
                    graph.nodes().iter().map(|n| majority_match(&n.attributes, &r.related_attrs).0).collect()
                }
            })
            .collect();
        Self { relations, eligible }
    }

    /// `Ok((all relations hold, heading was needed but missing))`.
    fn check(&self, graph: &SceneGraph, id: NodeId) -> Result<(bool, bool), GraphError> {
        let node = graph.node(id).ok_or(GraphError::UnknownNode(id))?;
        let pairs = graph.pair_relations(id)?;
        let mut heading_missing = false;
        for (r, eligible) in self.relations.iter().zip(&self.eligible) {
            let ok = match r.frame {
                Frame::Robot => {
                    r.direction.is_none_or(|d| node.robot_sector == Some(d))
                        && r.distance_bin.is_none_or(|b| node.robot_bin == b)
                }
                Frame::Person => {
                    if r.direction.is_some() && node.heading_deg.is_none() {
                        heading_missing = true;
                        false
                    } else {
                        pairs.iter().any(|p| {
                            eligible[p.dst_index]
                                && r.direction.is_none_or(|d| p.person_direction == Some(d))
                                && r.distance_bin.is_none_or(|b| p.distance_bin == Some(b))
                                && r.adjacency.is_none_or(|a| p.adjacent == a)
                                && r.occlusion.is_none_or(|o| p.occluded_by == o)
                        })
                    }
                }
            };
            if !ok {
                return Ok((false, heading_missing));
            }
        }
        Ok((true, false))
    }
}

/// True iff every relational constraint is witnessed for `candidate`.
pub fn phase2_validate(
    graph: &SceneGraph,
    candidate: NodeId,
    relations: &[RelationalConstraint],
) -> Result<bool, GraphError> {
    Ok(Witnesses::new(graph, relations).check(graph, candidate)?.0)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize)]
pub struct AnswerDiagnostics {
    /// Candidates rejected because a person-frame direction needed their heading.
    pub heading_missing: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Answer {
    pub task: Task,
    /// Grounded boxes (visual grounding only), aligned with `scores`.
    pub boxes: Vec<Box2D>,
    /// Surviving anchors, ordered by score descending then id ascending.
    pub node_ids: Vec<NodeId>,
    pub scores: Vec<MatchFraction>,
    pub text: Option<String>,
    pub diagnostics: AnswerDiagnostics,
}

impl Serialize for Answer {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("Answer", 6)?;
        st.serialize_field("task", &self.task)?;
        st.serialize_field("boxes", &self.boxes)?;
        st.serialize_field("node_ids", &self.node_ids)?;
        st.serialize_field("scores", &self.scores)?;
        if let Some(text) = &self.text {
            st.serialize_field("text", text)?;
        } else {
            st.skip_field("text")?;
        }
        st.serialize_field("diagnostics", &self.diagnostics)?;
        st.end()
    }
}

impl Answer {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("answer serializes")
    }

    /// One-line human-readable form.
    pub fn to_text(&self) -> String {
        match &self.text {
            Some(text) if self.task == Task::VqaAttribute && self.node_ids.len() > 1 => {
                format!("{text} (nodes {})", join_ids(&self.node_ids))
            }
            Some(text) => text.clone(),
            None if self.node_ids.is_empty() => "no match".into(),
            None => self
                .node_ids
                .iter()
                .zip(&self.boxes)
                .zip(&self.scores)
                .map(|((id, b), s)| format!("{id} [{}, {}, {}, {}] {s}", b.x, b.y, b.w, b.h))
                .collect::<Vec<_>>()
                .join("; "),
        }
    }
}

fn join_ids(ids: &[NodeId]) -> String {
    ids.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(", ")
}

/// Surviving anchors with their fractions, plus the heading diagnostic count.
pub fn survivors(graph: &SceneGraph, q: &StructuredQuery) -> (Vec<Candidate>, usize) {
    let witnesses = Witnesses::new(graph, &q.relations);
    let mut heading_missing = 0;
    let mut kept = Vec::new();
    for mut c in phase1_filter(graph, &q.anchor_attrs) {
        let (ok, missing) = witnesses.check(graph, c.node_id).expect("candidate comes from the graph");
        heading_missing += usize::from(missing);
        if ok {
            c.relation_ok = true;
            kept.push(c);
        }
    }
    kept.sort_by(|a, b| b.match_fraction.cmp(&a.match_fraction).then(a.node_id.cmp(&b.node_id)));
    (kept, heading_missing)
}

/// Answers `q` over `graph`.
pub fn execute(graph: &SceneGraph, q: &StructuredQuery) -> Answer {
    let (kept, heading_missing) = survivors(graph, q);
    let node_ids: Vec<NodeId> = kept.iter().map(|c| c.node_id).collect();
    let mut answer = Answer {
        task: q.task,
        boxes: Vec::new(),
        node_ids,
        scores: Vec::new(),
        text: None,
        diagnostics: AnswerDiagnostics { heading_missing },
    };
    match q.task {
        Task::Vg => {
            for c in &kept {
                let node = graph.node(c.node_id).expect("survivor exists");
                answer.boxes.push(node.box2d);
                answer.scores.push(c.match_fraction);
            }
        }
        Task::VqaExists => answer.text = Some(if kept.is_empty() { "no" } else { "yes" }.into()),
        Task::VqaCount => answer.text = Some(kept.len().to_string()),
        Task::VqaAttribute => {
            let key = q.vqa_attribute_key.as_deref().unwrap_or_default();
            let text = match kept.as_slice() {
                [] => "none".to_owned(),
                [only] => graph
                    .node(only.node_id)
                    .and_then(|n| n.attributes.get(key))
                    .unwrap_or("unknown")
                    .to_owned(),
                _ => "ambiguous".to_owned(),
            };
            answer.text = Some(text);
        }
    }
    answer
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Box3D, GraphNode, RelationEdge};
    use crate::projection::{DistanceBin, EdgeKind, RelationConfig, Sector};
    use crate::query::parse_query;
    use nalgebra::{Point3, Vector3};

    fn attrs(pairs: &[(&str, &str)]) -> AttributeMap {
        AttributeMap::canonicalize(pairs.iter().copied()).unwrap()
    }

    fn c(k: &str, v: &str) -> AttributeConstraint {
        AttributeConstraint::new(k, v)
    }

    fn node(id: NodeId, x: f64, y: f64, heading: Option<f64>, a: &[(&str, &str)]) -> GraphNode {
        let center = Point3::new(x, y, 0.0);
        let b3 = Box3D { center, half_extents: Vector3::new(0.2, 0.2, 0.8) };
        let b2 = Box2D::new(10.0 * id as f64, 0.0, 5.0, 5.0);
        GraphNode::new(id, b2, attrs(a), center, b3, heading, 10, &RelationConfig::default())
    }

    fn direction(src: NodeId, dst: NodeId, frame: Frame, s: Sector) -> RelationEdge {
        RelationEdge {
            src,
            dst,
            kind: EdgeKind::Direction,
            direction: Some(s),
            frame: Some(frame),
            distance_bin: None,
            distance_m: 1.0,
        }
    }

    fn distance(src: NodeId, dst: NodeId, bin: DistanceBin) -> RelationEdge {
        RelationEdge {
            src,
            dst,
            kind: EdgeKind::Distance,
            direction: None,
            frame: None,
            distance_bin: Some(bin),
            distance_m: 1.0,
        }
    }

    #[test]
    fn majority_examples() {
        let a = attrs(&[("gender", "male"), ("race", "white"), ("age", "adult")]);
        let r = majority_match(&a, &[c("gender", "male"), c("race", "white"), c("age", "young_adult")]);
        assert_eq!(r, (true, MatchFraction { matched: 2, total: 3 }));
        let a = attrs(&[("gender", "male"), ("race", "white")]);
        assert_eq!(
            majority_match(&a, &[c("gender", "male"), c("race", "asian")]),
            (false, MatchFraction { matched: 1, total: 2 })
        );
        let a = attrs(&[("gender", "male")]);
        assert_eq!(majority_match(&a, &[c("gender", "female")]), (false, MatchFraction { matched: 0, total: 1 }));
        assert_eq!(majority_match(&a, &[]), (true, MatchFraction::ONE));
        assert_eq!(majority_match(&a, &[c("age", "adult")]).0, false);
    }

    #[test]
    fn fraction_ordering_is_exact() {
        let f = |m, t| MatchFraction { matched: m, total: t };
        assert_eq!(f(2, 3).cmp(&f(4, 6)), Ordering::Equal);
        assert!(f(3, 4) > f(2, 3));
        assert!(f(2, 4).is_majority() == false && f(3, 5).is_majority());
    }

    #[test]
    fn phase1_keeps_majorities() {
        let q = [c("gender", "male"), c("race", "white"), c("age", "adult")];
        let g = SceneGraph::from_parts(
            vec![
                node(1, 1.0, 0.0, None, &[("gender", "male"), ("race", "white"), ("age", "child")]),
                node(2, 2.0, 0.0, None, &[("gender", "male"), ("race", "black"), ("age", "child")]),
                node(3, 3.0, 0.0, None, &[("gender", "male"), ("race", "white"), ("age", "adult")]),
            ],
            vec![],
            vec![],
        )
        .unwrap();
        let ids: Vec<_> = phase1_filter(&g, &q).iter().map(|c| (c.node_id, c.match_fraction.matched)).collect();
        assert_eq!(ids, vec![(1, 2), (3, 3)]);
        let empty = SceneGraph::from_parts(vec![], vec![], vec![]).unwrap();
        assert!(phase1_filter(&empty, &q).is_empty());
    }

    fn fig2_graph(b_gender: &str) -> SceneGraph {
        SceneGraph::from_parts(
            vec![
                node(1, 1.5, 0.0, Some(0.0), &[("gender", "male"), ("race", "white")]),
                node(2, 1.5, -1.0, None, &[("gender", b_gender)]),
            ],
            vec![direction(1, 2, Frame::Person, Sector::Right), distance(1, 2, DistanceBin::Close)],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn phase2_examples() {
        let rel = [RelationalConstraint::person(Some(Sector::Right), Some(DistanceBin::Close), vec![c("gender", "female")])];
        assert!(phase2_validate(&fig2_graph("female"), 1, &rel).unwrap());
        assert!(!phase2_validate(&fig2_graph("male"), 1, &rel).unwrap());
        // Node 2 has no heading.
        let back = [RelationalConstraint::person(Some(Sector::Left), None, vec![])];
        assert!(!phase2_validate(&fig2_graph("female"), 2, &back).unwrap());
        let robot = [RelationalConstraint::robot(None, Some(DistanceBin::Close))];
        assert!(phase2_validate(&fig2_graph("female"), 1, &robot).unwrap());
        assert_eq!(phase2_validate(&fig2_graph("female"), 9, &robot), Err(GraphError::UnknownNode(9)));
    }

    #[test]
    fn execute_figure_query() {
        let g = fig2_graph("female");
        let q = parse_query("find a male white person who has a female positioned to his right at a close distance").unwrap();
        let a = execute(&g, &q);
        assert_eq!(a.node_ids, vec![1]);
        assert_eq!(a.boxes, vec![g.node(1).unwrap().box2d]);
        assert_eq!(a.scores, vec![MatchFraction { matched: 2, total: 2 }]);
        assert_eq!(
            a.to_json(),
            r#"{"task":"vg","boxes":[[10.0,0.0,5.0,5.0,false]],"node_ids":[1],"scores":[1.0],"diagnostics":{"heading_missing":0}}"#
        );
    }

    #[test]
    fn heading_diagnostic_counts_rejections() {
        let g = fig2_graph("female");
        let q = parse_query("find a person who has a person positioned to their left").unwrap();
        let a = execute(&g, &q);
        assert!(a.node_ids.is_empty());
        assert_eq!(a.diagnostics.heading_missing, 1);
    }

    #[test]
    fn vqa_answers() {
        let empty = SceneGraph::from_parts(vec![], vec![], vec![]).unwrap();
        assert!(execute(&empty, &parse_query("find a person").unwrap()).boxes.is_empty());

        let g = SceneGraph::from_parts(
            vec![
                node(1, 1.0, 0.0, None, &[("gender", "female"), ("age", "adult")]),
                node(2, 2.0, 0.0, None, &[("gender", "female")]),
                node(3, 3.0, 0.0, None, &[("gender", "female"), ("age", "child")]),
                node(4, 7.0, 0.0, None, &[("gender", "male"), ("age", "elderly")]),
            ],
            vec![],
            vec![],
        )
        .unwrap();
        let count = execute(&g, &parse_query("how many females").unwrap());
        assert_eq!(count.text.as_deref(), Some("3"));
        assert!(count.boxes.is_empty());
        let exists =
            execute(&g, &parse_query("is there an elderly person positioned at a far distance relative to the robot").unwrap());
        assert_eq!(exists.text.as_deref(), Some("yes"));
        let attr = execute(&g, &parse_query("what is the gender of the elderly person").unwrap());
        assert_eq!(attr.text.as_deref(), Some("male"));
        let amb = execute(&g, &parse_query("what is the age of the female").unwrap());
        assert_eq!((amb.text.as_deref(), amb.node_ids.clone()), (Some("ambiguous"), vec![1, 2, 3]));
        let none = execute(&g, &parse_query("what is the age of the asian person").unwrap());
        assert_eq!(none.text.as_deref(), Some("none"));
        let unknown = execute(&g, &parse_query("what is the race of the elderly person").unwrap());
        assert_eq!(unknown.text.as_deref(), Some("unknown"));
    }

    #[test]
    fn ordering_is_score_then_id() {
        let g = SceneGraph::from_parts(
            vec![
                node(1, 1.0, 0.0, None, &[("gender", "male"), ("race", "white"), ("age", "child")]),
                node(2, 2.0, 0.0, None, &[("gender", "male"), ("race", "white"), ("age", "adult")]),
                node(3, 3.0, 0.0, None, &[("gender", "male"), ("race", "asian"), ("age", "adult")]),
            ],
            vec![],
            vec![],
        )
        .unwrap();
        let a = execute(&g, &parse_query("find an adult male white person").unwrap());
        assert_eq!(a.node_ids, vec![2, 1, 3]);
    }
}
