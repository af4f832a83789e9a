//! Domain types shared across the pipeline: attributes, image boxes,
//! volumetric boxes, detections, point clouds and the assembled scene bundle.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use nalgebra::{Point3, Vector3};
use serde::de::{self, SeqAccess, Visitor};
use serde::ser::SerializeSeq;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::projection::{
    distance_bin, ground_distance, robot_sector, CameraModel, DistanceBin, EdgeKind, Frame,
    RelationConfig, Sector,
};

pub type NodeId = u32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("EmptyToken: attribute {0} is empty after trimming")]
    EmptyToken(&'static str),
    #[error("DuplicateId: detection id {0} appears more than once")]
    DuplicateId(NodeId),
    #[error("BoxOutOfRange: detection {id}: {reason}")]
    BoxOutOfRange { id: NodeId, reason: String },
    #[error("InvalidImageSize: {width}x{height}")]
    InvalidImageSize { width: u32, height: u32 },
}

/// Lowercase, trim, and join internal whitespace with underscores.
pub fn canonical_token(raw: &str) -> String {
    raw.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join("_")
}

/// Single-label categorical attributes of one entity, keyed by canonical tokens.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AttributeMap(BTreeMap<String, String>);

impl AttributeMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Canonicalize a raw key/value map. Keys that collide after
    /// canonicalization keep the value of the lexicographically last raw key.
    pub fn canonicalize<'a, I>(raw: I) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut out = BTreeMap::new();
        for (k, v) in raw {
            let key = canonical_token(k);
            if key.is_empty() {
                return Err(ModelError::EmptyToken("key"));
            }
            let value = canonical_token(v);
            if value.is_empty() {
                return Err(ModelError::EmptyToken("value"));
            }
            out.insert(key, value);
        }
        Ok(Self(out))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    /// Sets `key` to `value`, canonicalizing both.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ModelError> {
        let key = canonical_token(key);
        let value = canonical_token(value);
        if key.is_empty() {
            return Err(ModelError::EmptyToken("key"));
        }
        if value.is_empty() {
            return Err(ModelError::EmptyToken("value"));
        }
        self.0.insert(key, value);
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<const N: usize> From<[(&str, &str); N]> for AttributeMap {
    /// Test and fixture convenience; panics on empty tokens.
    fn from(pairs: [(&str, &str); N]) -> Self {
        Self::canonicalize(pairs).expect("non-empty attribute tokens")
    }
}

/// Axis-aligned image box in pixels, top-left origin. When `wrap` is set
/// the x-interval `[x, x + w)` is taken modulo the image width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box2D {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub wrap: bool,
}

impl Box2D {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h, wrap: false }
    }

    pub fn wrapped(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h, wrap: true }
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Half-open membership test; the x-axis is modular when `wrap` is set.
    pub fn contains(&self, u: f64, v: f64, image_width: f64) -> bool {
        if !(v >= self.y && v < self.y + self.h) {
            return false;
        }
        if self.wrap {
            (u - self.x).rem_euclid(image_width) < self.w
        } else {
            u >= self.x && u < self.x + self.w
        }
    }

    /// Checks the box invariants against an image of the given size.
    pub fn validate(&self, id: NodeId, width: f64, height: f64) -> Result<(), ModelError> {
        let fail = |reason: String| Err(ModelError::BoxOutOfRange { id, reason });
        let finite = [self.x, self.y, self.w, self.h].iter().all(|v| v.is_finite());
        if !finite {
            return fail("non-finite coordinate".into());
        }
        if self.w <= 0.0 || self.h <= 0.0 {
            return fail(format!("non-positive size {}x{}", self.w, self.h));
        }
        if self.y < 0.0 || self.y + self.h > height {
            return fail(format!("rows [{}, {}) exceed height {}", self.y, self.y + self.h, height));
        }
        if self.wrap {
            if self.w >= width {
                return fail(format!("wrapped width {} not below image width {}", self.w, width));
            }
        } else if self.x < 0.0 || self.x + self.w > width {
            return fail(format!("columns [{}, {}) exceed width {}", self.x, self.x + self.w, width));
        }
        Ok(())
    }
}

impl Serialize for Box2D {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(5))?;
        seq.serialize_element(&self.x)?;
        seq.serialize_element(&self.y)?;
        seq.serialize_element(&self.w)?;
        seq.serialize_element(&self.h)?;
        seq.serialize_element(&self.wrap)?;
        seq.end()
    }
}

impl<'de> Deserialize<'de> for Box2D {
    /// Accepts `[x, y, w, h]` or `[x, y, w, h, wrap]`.
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct BoxVisitor;

        impl<'de> Visitor<'de> for BoxVisitor {
            type Value = Box2D;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an array [x, y, w, h] or [x, y, w, h, wrap]")
            }

            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<Box2D, A::Error> {
                let mut nums = [0.0f64; 4];
                for (i, slot) in nums.iter_mut().enumerate() {
                    *slot = seq
                        .next_element()?
                        .ok_or_else(|| de::Error::invalid_length(i, &self))?;
                }
                let wrap = seq.next_element::<bool>()?.unwrap_or(false);
                if seq.next_element::<de::IgnoredAny>()?.is_some() {
                    return Err(de::Error::invalid_length(6, &self));
                }
                Ok(Box2D { x: nums[0], y: nums[1], w: nums[2], h: nums[3], wrap })
            }
        }

        deserializer.deserialize_seq(BoxVisitor)
    }
}

/// Axis-aligned volumetric box in the robot frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box3D {
    pub center: Point3<f64>,
    pub half_extents: Vector3<f64>,
}

impl Box3D {
    pub fn contains(&self, p: &Point3<f64>) -> bool {
        (0..3).all(|i| (p[i] - self.center[i]).abs() <= self.half_extents[i])
    }

    /// Ground-plane footprint corners, counterclockwise from (-x, -y).
    pub fn footprint(&self) -> [[f64; 2]; 4] {
        let (cx, cy) = (self.center.x, self.center.y);
        let (hx, hy) = (self.half_extents.x, self.half_extents.y);
        [[cx - hx, cy - hy], [cx + hx, cy - hy], [cx + hx, cy + hy], [cx - hx, cy + hy]]
    }
}

/// Fixture realization of one perception output: an image box plus
/// categorical attributes and an optional facing yaw (degrees, robot frame).
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub id: NodeId,
    pub bbox: Box2D,
    pub attributes: AttributeMap,
    pub heading_deg: Option<f64>,
}

/// Wraps any finite angle into `[-180, 180)`.
pub fn normalize_degrees(deg: f64) -> f64 {
    let r = (deg + 180.0).rem_euclid(360.0) - 180.0;
    if r >= 180.0 {
        r - 360.0
    } else {
        r
    }
}

/// Points in the robot frame (x forward, y left, z up), meters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point3<f64>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3<f64>>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Everything needed to build one scene graph. Image pixels are never read;
/// only the image dimensions are carried.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneBundle {
    image_width: u32,
    image_height: u32,
    detections: Vec<Detection>,
    cloud: PointCloud,
    camera: CameraModel,
}

impl SceneBundle {
    pub fn new(
        image_width: u32,
        image_height: u32,
        detections: Vec<Detection>,
        cloud: PointCloud,
        camera: CameraModel,
    ) -> Result<Self, ModelError> {
        if image_width == 0 || image_height == 0 {
            return Err(ModelError::InvalidImageSize { width: image_width, height: image_height });
        }
        let mut seen = BTreeSet::new();
        for det in &detections {
            if !seen.insert(det.id) {
                return Err(ModelError::DuplicateId(det.id));
            }
            det.bbox.validate(det.id, image_width as f64, image_height as f64)?;
        }
        Ok(Self { image_width, image_height, detections, cloud, camera })
    }

    pub fn image_width(&self) -> u32 {
        self.image_width
    }

    pub fn image_height(&self) -> u32 {
        self.image_height
    }

    pub fn detections(&self) -> &[Detection] {
        &self.detections
    }

    pub fn cloud(&self) -> &PointCloud {
        &self.cloud
    }

    pub fn camera(&self) -> &CameraModel {
        &self.camera
    }
}

/// One vertex of the scene graph: the detection's semantics fused with its
/// estimated 3D center and extent. The robot-relative sector and distance bin
/// are stored so robot-frame queries need no edge lookup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: NodeId,
    pub box2d: Box2D,
    pub attributes: AttributeMap,
    pub center3d: Point3<f64>,
    pub box3d: Box3D,
    pub heading_deg: Option<f64>,
    pub point_count: usize,
    /// `None` only when the center coincides with the robot origin.
    pub robot_sector: Option<Sector>,
    pub robot_distance_m: f64,
    pub robot_bin: DistanceBin,
}

impl GraphNode {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: NodeId,
        box2d: Box2D,
        attributes: AttributeMap,
        center3d: Point3<f64>,
        box3d: Box3D,
        heading_deg: Option<f64>,
        point_count: usize,
        config: &RelationConfig,
    ) -> Self {
        let robot_distance_m = ground_distance(&Point3::origin(), &center3d);
        Self {
            id,
            box2d,
            attributes,
            center3d,
            box3d,
            heading_deg,
            point_count,
            robot_sector: robot_sector(&center3d).ok(),
            robot_distance_m,
            robot_bin: distance_bin(robot_distance_m, config),
        }
    }
}

/// A typed directed relation from `src` to `dst`. Every edge carries the
/// pair's ground distance; the optional fields are set according to `kind`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelationEdge {
    pub src: NodeId,
    pub dst: NodeId,
    pub kind: EdgeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Sector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame: Option<Frame>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance_bin: Option<DistanceBin>,
    pub distance_m: f64,
}

impl RelationEdge {
    pub fn is_well_formed(&self) -> bool {
        let shape = match self.kind {
            EdgeKind::Direction => self.direction.is_some() && self.frame.is_some(),
            EdgeKind::Distance => self.distance_bin.is_some(),
            EdgeKind::Adjacency | EdgeKind::Occlusion => true,
        };
        shape && self.src != self.dst && self.distance_m >= 0.0
    }
}
