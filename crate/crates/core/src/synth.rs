//! Synthetic crowded scenes with known ground truth, brute-force oracles for
//! relations and query answers, and a query-battery generator.
//!
//! The oracles never touch the point cloud or the projection code: they
//! evaluate every predicate directly on the true positions, with geometry
//! written independently of the engine.
//!
//! Scenes are built so that noiseless perception is exact. Cameras look down
//! on the crowd from above, entities are placed so their image boxes are
//! pairwise disjoint, clutter is kept out of every box, and each body is
//! sampled as point pairs mirrored through its center. The trimmed mean of
//! such a sample is the true center, and the eight-way rings put more than
//! five percent of the points on each horizontal extreme, so the trimmed
//! 3D box has the body's true footprint.

use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};

use nalgebra::{Matrix3, Point3, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AttributeMap, Box2D, Detection, NodeId, PointCloud, RelationEdge, SceneBundle};
use crate::projection::{CameraModel, DistanceBin, EdgeKind, Frame, Intrinsics, RelationConfig, Sector};
use crate::query::{render_query, vocab, AttributeConstraint, RelationalConstraint, StructuredQuery, Task};
use crate::search::{Answer, AnswerDiagnostics, MatchFraction};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SynthError {
    #[error("InvalidCount: n_entities must be in 1..=500 (got {0})")]
    InvalidCount(usize),
    #[error("PlacementFailure: placed {placed} of {requested} entities before running out of attempts")]
    PlacementFailure { placed: usize, requested: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CameraKind {
    Pinhole,
    Cylindrical,
}

impl std::str::FromStr for CameraKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "pinhole" => Ok(CameraKind::Pinhole),
            "cylindrical" => Ok(CameraKind::Cylindrical),
            other => Err(format!("unknown camera kind {other:?} (expected pinhole or cylindrical)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub body_radius_m: f64,
    pub body_height_m: f64,
    /// Sampled points per entity (at least 50).
    pub points_per_entity: usize,
    /// Clutter share of the whole cloud.
    pub clutter_fraction: f64,
    pub missing_heading_prob: f64,
    pub missing_action_prob: f64,
    /// Require pairwise-disjoint image boxes (otherwise only the minimum
    /// ground separation is enforced).
    pub disjoint_boxes: bool,
    pub min_separation_m: f64,
    pub min_robot_distance_m: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            body_radius_m: 0.25,
            body_height_m: 1.7,
            points_per_entity: 96,
            clutter_fraction: 0.1,
            missing_heading_prob: 0.1,
            missing_action_prob: 0.2,
            disjoint_boxes: true,
            min_separation_m: 0.3,
            min_robot_distance_m: 1.5,
        }
    }
}

/// Half side of the square area entities and clutter are drawn from.
const AREA_HALF_M: f64 = 10.0;
/// Floor height in the robot frame (the sensor sits 1 m above the floor).
const FLOOR_Z: f64 = -1.0;
const PLACEMENT_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthEntity {
    pub id: NodeId,
    /// Body center (mid-height of the capsule), robot frame.
    pub position: Point3<f64>,
    pub heading_deg: Option<f64>,
    pub attributes: AttributeMap,
    pub body_radius: f64,
    /// True image box of the body.
    pub box2d: Box2D,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthScene {
    pub seed: u64,
    pub kind: CameraKind,
    pub entities: Vec<SynthEntity>,
    pub camera: CameraModel,
    pub image_width: u32,
    pub image_height: u32,
}

/// Overhead pinhole 24 m above the floor, or a panoramic camera 6 m above
/// the floor with its seam behind the robot.
pub fn synth_camera(kind: CameraKind) -> (CameraModel, u32, u32) {
    match kind {
        CameraKind::Pinhole => {
            let r = Matrix3::new(0.0, -1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, -1.0);
            let cam = CameraModel::new(
                Intrinsics::Pinhole { fx: 1000.0, fy: 1000.0, cx: 500.0, cy: 500.0 },
                r,
                Vector3::new(0.0, 0.0, FLOOR_Z + 24.0),
            )
            .expect("valid synthetic pinhole");
            (cam, 1000, 1000)
        }
        CameraKind::Cylindrical => {
            let cam = CameraModel::new(
                Intrinsics::Cylindrical { seam_azimuth_deg: 180.0, v_center: 10.0, fv: 180.0 },
                Matrix3::identity(),
                Vector3::new(0.0, 0.0, -(FLOOR_Z + 6.0)),
            )
            .expect("valid synthetic panorama");
            (cam, 2048, 900)
        }
    }
}

// Exact unit vectors at multiples of 45 degrees.
const RING: [(f64, f64); 8] = [
    (1.0, 0.0),
    (FRAC_1_SQRT_2, FRAC_1_SQRT_2),
    (0.0, 1.0),
    (-FRAC_1_SQRT_2, FRAC_1_SQRT_2),
    (-1.0, 0.0),
    (-FRAC_1_SQRT_2, -FRAC_1_SQRT_2),
    (0.0, -1.0),
    (FRAC_1_SQRT_2, -FRAC_1_SQRT_2),
];

/// Offsets from the body center, as pairs `o, -o`.
fn body_offsets(rng: &mut ChaCha8Rng, cfg: &SynthConfig) -> Vec<Vector3<f64>> {
    let n = cfg.points_per_entity.max(50);
    let r = cfg.body_radius_m;
    let half_cyl = (cfg.body_height_m / 2.0 - r).max(0.0);
    let ring_pairs = ((0.85 * n as f64 / 16.0).round() as usize).max(2).min(n / 16);
    let cap_pairs = (n - 16 * ring_pairs) / 2;
    let mut out = Vec::with_capacity(16 * ring_pairs + 2 * cap_pairs);
    for _ in 0..ring_pairs {
        let dz = rng.random_range(0.0..=half_cyl);
        for (c, s) in RING {
            let o = Vector3::new(r * c, r * s, dz);
            out.push(o);
            out.push(-o);
        }
    }
    for _ in 0..cap_pairs {
        let theta = rng.random_range(0.0..TAU);
        let cos_phi: f64 = rng.random_range(0.0..=1.0);
        let sin_phi = (1.0 - cos_phi * cos_phi).sqrt();
        let o = Vector3::new(r * sin_phi * theta.cos(), r * sin_phi * theta.sin(), half_cyl + r * cos_phi);
        out.push(o);
        out.push(-o);
    }
    out
}

/// Dense samples of the capsule surface used for the true image box.
fn silhouette_samples(center: &Point3<f64>, cfg: &SynthConfig) -> Vec<Point3<f64>> {
    let r = cfg.body_radius_m;
    let half_cyl = (cfg.body_height_m / 2.0 - r).max(0.0);
    let mut out = Vec::new();
    for i in 0..48 {
        let t = TAU * i as f64 / 48.0;
        let (s, c) = t.sin_cos();
        for j in 0..=8 {
            let z = -half_cyl + 2.0 * half_cyl * j as f64 / 8.0;
            out.push(center + Vector3::new(r * c, r * s, z));
        }
        for j in 1..=8 {
            let phi = PI / 2.0 * j as f64 / 8.0;
            let (sp, cp) = phi.sin_cos();
            out.push(center + Vector3::new(r * cp * c, r * cp * s, half_cyl + r * sp));
            out.push(center + Vector3::new(r * cp * c, r * cp * s, -half_cyl - r * sp));
        }
    }
    out
}

/// Tight image box over the projected points, padded by one pixel. Columns
/// are unwrapped around the center's column so seam-crossing bodies get a
/// wrapped box.
fn image_box(
    camera: &CameraModel,
    width: f64,
    height: f64,
    center: &Point3<f64>,
    points: &[Point3<f64>],
) -> Option<Box2D> {
    let [uc, _] = camera.project(center, width)?;
    let wraps = matches!(camera.intrinsics(), Intrinsics::Cylindrical { .. });
    let (mut u0, mut u1, mut v0, mut v1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in points {
        let [u, v] = camera.project(p, width)?;
        let du = if wraps { (u - uc + width / 2.0).rem_euclid(width) - width / 2.0 } else { u - uc };
        u0 = u0.min(du);
        u1 = u1.max(du);
        v0 = v0.min(v);
        v1 = v1.max(v);
    }
    let (y0, y1) = ((v0 - 1.0).floor(), (v1 + 1.0).ceil() + 1.0);
    if y0 < 0.0 || y1 > height {
        return None;
    }
    let x0 = (uc + u0 - 1.0).floor();
    let x1 = (uc + u1 + 1.0).ceil() + 1.0;
    let w = x1 - x0;
    if wraps {
        if w >= width / 2.0 {
            return None;
        }
        if x0 < 0.0 || x1 > width {
            return Some(Box2D::wrapped(x0.rem_euclid(width), y0, w, y1 - y0));
        }
    } else if x0 < 0.0 || x1 > width {
        return None;
    }
    Some(Box2D::new(x0, y0, w, y1 - y0))
}

fn intervals_meet(a0: f64, a1: f64, b0: f64, b1: f64) -> bool {
    a0 < b1 && b0 < a1
}

/// Whether two boxes, each grown by one pixel, share any pixel.
fn boxes_touch(a: &Box2D, b: &Box2D, width: f64) -> bool {
    if !intervals_meet(a.y - 1.0, a.y + a.h + 1.0, b.y - 1.0, b.y + b.h + 1.0) {
        return false;
    }
    if !a.wrap && !b.wrap {
        return intervals_meet(a.x - 1.0, a.x + a.w + 1.0, b.x - 1.0, b.x + b.w + 1.0);
    }
    [-width, 0.0, width]
        .iter()
        .any(|s| intervals_meet(a.x - 1.0, a.x + a.w + 1.0, b.x + s - 1.0, b.x + b.w + s + 1.0))
}

fn random_attributes(rng: &mut ChaCha8Rng, cfg: &SynthConfig) -> AttributeMap {
    let mut a = AttributeMap::new();
    for key in ["gender", "age", "race"] {
        let vals = vocab::values(key).expect("known key");
        a.set(key, vals[rng.random_range(0..vals.len())]).expect("vocabulary token");
    }
    if !rng.random_bool(cfg.missing_action_prob.clamp(0.0, 1.0)) {
        a.set("action", vocab::ACTIONS[rng.random_range(0..vocab::ACTIONS.len())]).expect("vocabulary token");
    }
    a
}

/// Generates a scene and its noiseless perception bundle with the default
/// configuration.
pub fn gen_scene(seed: u64, n_entities: usize, kind: CameraKind) -> Result<(SynthScene, SceneBundle), SynthError> {
    gen_scene_with(seed, n_entities, kind, &SynthConfig::default())
}

pub fn gen_scene_with(
    seed: u64,
    n_entities: usize,
    kind: CameraKind,
    cfg: &SynthConfig,
) -> Result<(SynthScene, SceneBundle), SynthError> {
    if !(1..=500).contains(&n_entities) {
        return Err(SynthError::InvalidCount(n_entities));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (camera, width, height) = synth_camera(kind);
    let (wf, hf) = (f64::from(width), f64::from(height));
    let r = cfg.body_radius_m;
    let lim = AREA_HALF_M - r - 0.2;
    let cz = FLOOR_Z + cfg.body_height_m / 2.0;

    let mut entities: Vec<SynthEntity> = Vec::with_capacity(n_entities);
    let mut points = Vec::with_capacity(n_entities * cfg.points_per_entity.max(50));
    for id in 0..n_entities {
        let mut placed = None;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let x = rng.random_range(-lim..=lim);
            let y = rng.random_range(-lim..=lim);
            if x.hypot(y) < cfg.min_robot_distance_m {
                continue;
            }
            if entities
                .iter()
                .any(|e| (e.position.x - x).hypot(e.position.y - y) < cfg.min_separation_m.max(2.0 * r))
            {
                continue;
            }
            let center = Point3::new(x, y, cz);
            let Some(bbox) = image_box(&camera, wf, hf, &center, &silhouette_samples(&center, cfg)) else {
                continue;
            };
            if cfg.disjoint_boxes && entities.iter().any(|e| boxes_touch(&e.box2d, &bbox, wf)) {
                continue;
            }
            placed = Some((center, bbox));
            break;
        }
        let Some((center, mut bbox)) = placed else {
            return Err(SynthError::PlacementFailure { placed: id, requested: n_entities });
        };
        let body: Vec<Point3<f64>> = body_offsets(&mut rng, cfg).into_iter().map(|o| center + o).collect();
        // The silhouette box already covers the body; grow it if a sample
        // lands on its edge.
        if let Some(b) = image_box(&camera, wf, hf, &center, &[silhouette_samples(&center, cfg), body.clone()].concat()) {
            bbox = b;
        }
        points.extend(body);
        let heading_deg = if rng.random_bool(cfg.missing_heading_prob.clamp(0.0, 1.0)) {
            None
        } else {
            Some(rng.random_range(-180.0..180.0))
        };
        let attributes = random_attributes(&mut rng, cfg);
        entities.push(SynthEntity { id: id as NodeId, position: center, heading_deg, attributes, body_radius: r, box2d: bbox });
    }

    let frac = cfg.clutter_fraction.clamp(0.0, 0.9);
    let n_clutter = (points.len() as f64 * frac / (1.0 - frac)).floor() as usize;
    let mut added = 0;
    let mut attempts = 0;
    while added < n_clutter && attempts < 100 * n_clutter {
        attempts += 1;
        let p = Point3::new(
            rng.random_range(-AREA_HALF_M..=AREA_HALF_M),
            rng.random_range(-AREA_HALF_M..=AREA_HALF_M),
            rng.random_range(FLOOR_Z..=FLOOR_Z + 2.0),
        );
        let Some([u, v]) = camera.project(&p, wf) else {
            continue;
        };
        let clear = entities.iter().all(|e| {
            let b = &e.box2d;
            let grown = Box2D { x: b.x - 1.0, y: b.y - 1.0, w: b.w + 2.0, h: b.h + 2.0, wrap: b.wrap };
            !grown.contains(u, v, wf)
        });
        if clear {
            points.push(p);
            added += 1;
        }
    }
    points.shuffle(&mut rng);

    let detections = entities
        .iter()
        .map(|e| Detection { id: e.id, bbox: e.box2d, attributes: e.attributes.clone(), heading_deg: e.heading_deg })
        .collect();
    let bundle = SceneBundle::new(width, height, detections, PointCloud::new(points), camera.clone())
        .expect("synthetic bundle is valid");
    let scene = SynthScene { seed, kind, entities, camera, image_width: width, image_height: height };
    Ok((scene, bundle))
}

// ---------------------------------------------------------------------------
// Oracle geometry, written directly against true positions.

fn oracle_distance(a: &Point3<f64>, b: &Point3<f64>) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    (dx * dx + dy * dy).sqrt()
}

fn oracle_bin(d: f64, cfg: &RelationConfig) -> DistanceBin {
    [(cfg.close_max_m, DistanceBin::Close), (cfg.medium_max_m, DistanceBin::Medium)]
        .into_iter()
        .find(|(limit, _)| d < *limit)
        .map_or(DistanceBin::Far, |(_, bin)| bin)
}

/// Sector lookup: the bearing relative to the heading, measured
/// counterclockwise in degrees, against the table of sector start angles.
fn oracle_sector(from: &Point3<f64>, heading_deg: f64, to: &Point3<f64>) -> Option<Sector> {
    let (dx, dy) = (to.x - from.x, to.y - from.y);
    if dx == 0.0 && dy == 0.0 {
        return None;
    }
    let bearing = dy.atan2(dx).to_degrees() - heading_deg;
    let shifted = (bearing + 22.5).rem_euclid(360.0);
    const ORDER: [Sector; 8] = [
        Sector::Front,
        Sector::FrontLeft,
        Sector::Left,
        Sector::BackLeft,
        Sector::Back,
        Sector::BackRight,
        Sector::Right,
        Sector::FrontRight,
    ];
    ORDER.iter().enumerate().find(|(k, _)| shifted < 45.0 * (*k as f64 + 1.0)).map(|(_, s)| *s).or(Some(Sector::Front))
}

/// Angular interval `(bearing, lo, hi)` of a body's square footprint seen
/// from the origin, offsets relative to the bearing of its center.
fn oracle_arc(c: &Point3<f64>, r: f64) -> Option<(f64, f64, f64)> {
    if c.x.abs() <= r && c.y.abs() <= r {
        return None;
    }
    let (ux, uy) = (c.x, c.y);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (sx, sy) in [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)] {
        let (px, py) = (c.x + sx * r, c.y + sy * r);
        let cross = ux * py - uy * px;
        let dot = ux * px + uy * py;
        let a = cross.atan2(dot);
        lo = lo.min(a);
        hi = hi.max(a);
    }
    Some((uy.atan2(ux), lo, hi))
}

fn oracle_occludes(a: &SynthEntity, b: &SynthEntity, cfg: &RelationConfig) -> bool {
    let origin = Point3::origin();
    if !(oracle_distance(&origin, &a.position) < oracle_distance(&origin, &b.position) - cfg.occlusion_depth_margin_m) {
        return false;
    }
    let arc_b = oracle_arc(&b.position, b.body_radius);
    let arc_a = oracle_arc(&a.position, a.body_radius);
    let (b_len, overlap) = match (arc_a, arc_b) {
        (_, None) => (TAU, arc_a.map_or(TAU, |(_, lo, hi)| hi - lo)),
        (None, Some((_, lo, hi))) => (hi - lo, hi - lo),
        (Some((ba, alo, ahi)), Some((bb, blo, bhi))) => {
            let delta = ba - bb;
            let overlap: f64 = [-TAU, 0.0, TAU]
                .iter()
                .map(|s| ((ahi + delta + s).min(bhi) - (alo + delta + s).max(blo)).max(0.0))
                .sum();
            (bhi - blo, overlap)
        }
    };
    b_len > 0.0 && overlap >= cfg.occlusion_overlap_frac * b_len
}

/// All relation edges computed from the true scene.
pub fn oracle_relations(scene: &SynthScene, cfg: &RelationConfig) -> Vec<RelationEdge> {
    let mut edges = Vec::new();
    for a in &scene.entities {
        for b in &scene.entities {
            if a.id == b.id {
                continue;
            }
            let d = oracle_distance(&a.position, &b.position);
            let edge = |kind, direction, frame, distance_bin| RelationEdge {
                src: a.id,
                dst: b.id,
                kind,
                direction,
                frame,
                distance_bin,
                distance_m: d,
            };
            if let Some(s) = oracle_sector(&a.position, 0.0, &b.position) {
                edges.push(edge(EdgeKind::Direction, Some(s), Some(Frame::Robot), None));
            }
            if let Some(h) = a.heading_deg {
                if let Some(s) = oracle_sector(&a.position, h, &b.position) {
                    edges.push(edge(EdgeKind::Direction, Some(s), Some(Frame::Person), None));
                }
            }
            edges.push(edge(EdgeKind::Distance, None, None, Some(oracle_bin(d, cfg))));
            if d <= cfg.adjacency_max_m {
                edges.push(edge(EdgeKind::Adjacency, None, None, None));
            }
            if oracle_occludes(a, b, cfg) {
                edges.push(edge(EdgeKind::Occlusion, None, None, None));
            }
        }
    }
    edges.sort_by_key(|e| (e.src, e.dst, e.kind, e.frame));
    edges
}

fn oracle_fraction(attrs: &AttributeMap, constraints: &[AttributeConstraint]) -> (u32, u32) {
    if constraints.is_empty() {
        return (1, 1);
    }
    let mut matched = 0;
    for c in constraints {
        if let Some(v) = attrs.get(&c.key) {
            if v == c.value {
                matched += 1;
            }
        }
    }
    (matched, constraints.len() as u32)
}

fn oracle_passes(attrs: &AttributeMap, constraints: &[AttributeConstraint]) -> bool {
    let (m, t) = oracle_fraction(attrs, constraints);
    m + m > t
}

fn oracle_witnessed(scene: &SynthScene, anchor: &SynthEntity, r: &RelationalConstraint, cfg: &RelationConfig) -> bool {
    let origin = Point3::origin();
    match r.frame {
        Frame::Robot => {
            let dir_ok = r.direction.is_none_or(|d| oracle_sector(&origin, 0.0, &anchor.position) == Some(d));
            let bin_ok = r.distance_bin.is_none_or(|b| oracle_bin(oracle_distance(&origin, &anchor.position), cfg) == b);
            dir_ok && bin_ok
        }
        Frame::Person => scene.entities.iter().any(|w| {
            if w.id == anchor.id || !oracle_passes(&w.attributes, &r.related_attrs) {
                return false;
            }
            let d = oracle_distance(&anchor.position, &w.position);
            let dir_ok = match (r.direction, anchor.heading_deg) {
                (None, _) => true,
                (Some(_), None) => false,
                (Some(want), Some(h)) => oracle_sector(&anchor.position, h, &w.position) == Some(want),
            };
            dir_ok
                && r.distance_bin.is_none_or(|b| oracle_bin(d, cfg) == b)
                && r.adjacency.is_none_or(|adj| (d <= cfg.adjacency_max_m) == adj)
                && r.occlusion.is_none_or(|occ| oracle_occludes(w, anchor, cfg) == occ)
        }),
    }
}

/// Ground-truth answer by exhaustive enumeration over entities and witnesses.
pub fn oracle_query(scene: &SynthScene, q: &StructuredQuery, cfg: &RelationConfig) -> Answer {
    let mut kept: Vec<(&SynthEntity, (u32, u32))> = scene
        .entities
        .iter()
        .filter(|e| oracle_passes(&e.attributes, &q.anchor_attrs))
        .filter(|e| q.relations.iter().all(|r| oracle_witnessed(scene, e, r, cfg)))
        .map(|e| (e, oracle_fraction(&e.attributes, &q.anchor_attrs)))
        .collect();
    kept.sort_by(|(ea, (ma, ta)), (eb, (mb, tb))| {
        (u64::from(*mb) * u64::from(*ta)).cmp(&(u64::from(*ma) * u64::from(*tb))).then(ea.id.cmp(&eb.id))
    });
    let node_ids: Vec<NodeId> = kept.iter().map(|(e, _)| e.id).collect();
    let mut answer = Answer {
        task: q.task,
        boxes: Vec::new(),
        node_ids,
        scores: Vec::new(),
        text: None,
        diagnostics: AnswerDiagnostics::default(),
    };
    match q.task {
        Task::Vg => {
            answer.boxes = kept.iter().map(|(e, _)| e.box2d).collect();
            answer.scores = kept.iter().map(|&(_, (m, t))| MatchFraction { matched: m, total: t }).collect();
        }
        Task::VqaExists => answer.text = Some((if kept.is_empty() { "no" } else { "yes" }).to_owned()),
        Task::VqaCount => answer.text = Some(format!("{}", kept.len())),
        Task::VqaAttribute => {
            let key = q.vqa_attribute_key.clone().unwrap_or_default();
            answer.text = Some(if kept.len() > 1 {
                "ambiguous".to_owned()
            } else if let Some((e, _)) = kept.first() {
                e.attributes.get(&key).unwrap_or("unknown").to_owned()
            } else {
                "none".to_owned()
            });
        }
    }
    answer
}

// ---------------------------------------------------------------------------
// Query battery

/// Query families: the seven grounding families followed by the three VQA
/// forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryFamily {
    Human,
    Age,
    GenderAge,
    GenderAgeRace,
    GenderAgeRaceDistance,
    DistanceSrRobot,
    GenderAgeRaceHhg,
    VqaExists,
    VqaCount,
    VqaAttribute,
}

impl QueryFamily {
    pub const ALL: [QueryFamily; 10] = [
        QueryFamily::Human,
        QueryFamily::Age,
        QueryFamily::GenderAge,
        QueryFamily::GenderAgeRace,
        QueryFamily::GenderAgeRaceDistance,
        QueryFamily::DistanceSrRobot,
        QueryFamily::GenderAgeRaceHhg,
        QueryFamily::VqaExists,
        QueryFamily::VqaCount,
        QueryFamily::VqaAttribute,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneratedQuery {
    pub family: QueryFamily,
    pub text: String,
    pub query: StructuredQuery,
    pub answer: Answer,
}

fn constraints_of(attrs: &AttributeMap, keys: &[&str]) -> Vec<AttributeConstraint> {
    keys.iter().filter_map(|k| attrs.get(k).map(|v| AttributeConstraint::new(k, v))).collect()
}

fn random_constraints(rng: &mut ChaCha8Rng, keys: &[&str]) -> Vec<AttributeConstraint> {
    keys.iter()
        .map(|k| {
            let vals = vocab::values(k).expect("known key");
            AttributeConstraint::new(k, vals[rng.random_range(0..vals.len())])
        })
        .collect()
}

/// Anchor constraints for `keys`: usually read off a random target entity so
/// the query has an answer, sometimes drawn at random.
fn anchor_for<'a>(
    scene: &'a SynthScene,
    rng: &mut ChaCha8Rng,
    keys: &[&str],
) -> (Option<&'a SynthEntity>, Vec<AttributeConstraint>) {
    if rng.random_bool(0.8) {
        let e = &scene.entities[rng.random_range(0..scene.entities.len())];
        (Some(e), constraints_of(&e.attributes, keys))
    } else {
        (None, random_constraints(rng, keys))
    }
}

const GAR: [&str; 3] = ["gender", "age", "race"];

fn robot_relation(target: Option<&SynthEntity>, rng: &mut ChaCha8Rng, with_sector: bool, cfg: &RelationConfig) -> RelationalConstraint {
    let origin = Point3::origin();
    let (sector, bin) = match target {
        Some(e) => (
            oracle_sector(&origin, 0.0, &e.position).unwrap_or(Sector::Front),
            oracle_bin(oracle_distance(&origin, &e.position), cfg),
        ),
        None => (
            Sector::ALL[rng.random_range(0..8)],
            DistanceBin::ALL[rng.random_range(0..3)],
        ),
    };
    RelationalConstraint::robot(with_sector.then_some(sector), Some(bin))
}

/// A human-human relation witnessed by some entity near `target`.
fn hhg_relation(
    scene: &SynthScene,
    target: Option<&SynthEntity>,
    rng: &mut ChaCha8Rng,
    cfg: &RelationConfig,
) -> RelationalConstraint {
    let related_keys: &[&str] = match rng.random_range(0..3) {
        0 => &["gender"],
        1 => &["gender", "age"],
        _ => &GAR,
    };
    let Some(t) = target.filter(|_| scene.entities.len() > 1) else {
        let dir = Sector::ALL[rng.random_range(0..8)];
        let bin = DistanceBin::ALL[rng.random_range(0..3)];
        return RelationalConstraint::person(Some(dir), Some(bin), random_constraints(rng, related_keys));
    };
    // Prefer the nearest others so adjacency and occlusion come up.
    let mut others: Vec<&SynthEntity> = scene.entities.iter().filter(|e| e.id != t.id).collect();
    others.sort_by(|a, b| oracle_distance(&t.position, &a.position).total_cmp(&oracle_distance(&t.position, &b.position)).then(a.id.cmp(&b.id)));
    let w = others[rng.random_range(0..others.len().min(3))];
    let related = constraints_of(&w.attributes, related_keys);
    let d = oracle_distance(&t.position, &w.position);
    let occluders: Vec<&&SynthEntity> = others.iter().filter(|o| oracle_occludes(o, t, cfg)).collect();
    match rng.random_range(0..10) {
        0..=5 if t.heading_deg.is_some() => {
            let dir = oracle_sector(&t.position, t.heading_deg.unwrap_or_default(), &w.position);
            let bin = rng.random_bool(0.7).then(|| oracle_bin(d, cfg));
            RelationalConstraint::person(dir, bin, related)
        }
        6 if d <= cfg.adjacency_max_m => RelationalConstraint::adjacent_to(related),
        7 if !occluders.is_empty() => {
            let o = occluders[rng.random_range(0..occluders.len())];
            RelationalConstraint::occluded_by(constraints_of(&o.attributes, related_keys))
        }
        8 if t.heading_deg.is_some() => {
            // Direction taken from a heading-bearing target, asked of a
            // possibly different anchor: exercises missing headings too.
            let dir = oracle_sector(&t.position, t.heading_deg.unwrap_or_default(), &w.position);
            RelationalConstraint::person(dir, None, related)
        }
        _ => RelationalConstraint::person(None, Some(oracle_bin(d, cfg)), related),
    }
}

fn build_query(
    family: QueryFamily,
    scene: &SynthScene,
    rng: &mut ChaCha8Rng,
    cfg: &RelationConfig,
) -> StructuredQuery {
    let mut q = match family {
        QueryFamily::Human => StructuredQuery::vg(vec![], vec![]),
        QueryFamily::Age => StructuredQuery::vg(anchor_for(scene, rng, &["age"]).1, vec![]),
        QueryFamily::GenderAge => StructuredQuery::vg(anchor_for(scene, rng, &["gender", "age"]).1, vec![]),
        QueryFamily::GenderAgeRace => StructuredQuery::vg(anchor_for(scene, rng, &GAR).1, vec![]),
        QueryFamily::GenderAgeRaceDistance => {
            let (t, a) = anchor_for(scene, rng, &GAR);
            StructuredQuery::vg(a, vec![robot_relation(t, rng, false, cfg)])
        }
        QueryFamily::DistanceSrRobot => {
            let (t, a) = anchor_for(scene, rng, &GAR);
            StructuredQuery::vg(a, vec![robot_relation(t, rng, true, cfg)])
        }
        QueryFamily::GenderAgeRaceHhg => {
            let (t, a) = anchor_for(scene, rng, &GAR);
            StructuredQuery::vg(a, vec![hhg_relation(scene, t, rng, cfg)])
        }
        QueryFamily::VqaExists => {
            let (t, a) = anchor_for(scene, rng, &["gender", "age"]);
            let rel = if rng.random_bool(0.5) { robot_relation(t, rng, false, cfg) } else { hhg_relation(scene, t, rng, cfg) };
            StructuredQuery { task: Task::VqaExists, ..StructuredQuery::vg(a, vec![rel]) }
        }
        QueryFamily::VqaCount => {
            let keys: &[&str] = if rng.random_bool(0.5) { &["gender"] } else { &["gender", "age"] };
            let (_, a) = anchor_for(scene, rng, keys);
            StructuredQuery { task: Task::VqaCount, ..StructuredQuery::vg(a, vec![]) }
        }
        QueryFamily::VqaAttribute => {
            let key = vocab::KEYS[rng.random_range(0..vocab::KEYS.len())];
            let keys: Vec<&str> = GAR.iter().copied().filter(|k| *k != key).collect();
            let (t, a) = anchor_for(scene, rng, &keys);
            let relations = if rng.random_bool(0.5) { vec![robot_relation(t, rng, true, cfg)] } else { vec![] };
            StructuredQuery {
                task: Task::VqaAttribute,
                anchor_attrs: a,
                relations,
                vqa_attribute_key: Some(key.to_owned()),
            }
        }
    };
    q.canonicalize();
    q
}

/// `k` queries cycling through all ten families, each with its rendered
/// sentence and oracle answer. Deterministic in `(scene, seed, k)`.
pub fn gen_queries(scene: &SynthScene, seed: u64, k: usize) -> Vec<GeneratedQuery> {
    gen_queries_with(scene, seed, k, &RelationConfig::default())
}

pub fn gen_queries_with(scene: &SynthScene, seed: u64, k: usize, cfg: &RelationConfig) -> Vec<GeneratedQuery> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    (0..k)
        .map(|i| {
            let family = QueryFamily::ALL[i % QueryFamily::ALL.len()];
            let query = build_query(family, scene, &mut rng, cfg);
            debug_assert!(query.validate().is_ok(), "{query:?}");
            let answer = oracle_query(scene, &query, cfg);
            GeneratedQuery { family, text: render_query(&query), query, answer }
        })
        .collect()
}
