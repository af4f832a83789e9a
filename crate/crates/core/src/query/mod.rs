//! Structured queries and the controlled language that produces them.
//!
//! A query names an anchor entity by its attributes and optionally adds
//! relational constraints that a second entity (or the robot) must witness.
//! Sentences are parsed by a small recursive-descent parser over a closed
//! template grammar; [`render_query`] produces the canonical sentence for
//! any structured query, and parsing that sentence gives the query back.

mod parser;
mod render;
pub mod vocab;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::canonical_token;
use crate::projection::{DistanceBin, Frame, Sector};

pub use parser::{parse_query, parse_query_with, ParseOptions};
pub use render::render_query;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum QueryError {
    #[error("SyntaxError at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("UnknownAttributeWord at byte {offset}: {word:?}")]
    UnknownAttributeWord { offset: usize, word: String },
    #[error("SchemaError: {0}")]
    Schema(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Vg,
    VqaExists,
    VqaCount,
    VqaAttribute,
}

impl Task {
    pub fn is_vqa(self) -> bool {
        self != Task::Vg
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributeConstraint {
    pub key: String,
    pub value: String,
}

impl AttributeConstraint {
    pub fn new(key: &str, value: &str) -> Self {
        Self { key: canonical_token(key), value: canonical_token(value) }
    }
}

/// Constraint witnessed either by the robot (frame `robot`: the anchor's own
/// sector and distance bin around the robot) or by another entity matching
/// `related_attrs` (frame `person`: the anchor's outgoing relations).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelationalConstraint {
    pub frame: Frame,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Sector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance_bin: Option<DistanceBin>,
    #[serde(default)]
    pub related_attrs: Vec<AttributeConstraint>,
    /// `Some(true)`: the witness is within adjacency range.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adjacency: Option<bool>,
    /// `Some(true)`: the witness occludes the anchor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub occlusion: Option<bool>,
}

impl RelationalConstraint {
    pub fn person(direction: Option<Sector>, distance_bin: Option<DistanceBin>, related: Vec<AttributeConstraint>) -> Self {
        Self { frame: Frame::Person, direction, distance_bin, related_attrs: related, adjacency: None, occlusion: None }
    }

    pub fn robot(direction: Option<Sector>, distance_bin: Option<DistanceBin>) -> Self {
        Self { frame: Frame::Robot, direction, distance_bin, related_attrs: vec![], adjacency: None, occlusion: None }
    }

    pub fn adjacent_to(related: Vec<AttributeConstraint>) -> Self {
        Self { adjacency: Some(true), ..Self::person(None, None, related) }
    }

    pub fn occluded_by(related: Vec<AttributeConstraint>) -> Self {
        Self { occlusion: Some(true), ..Self::person(None, None, related) }
    }

    fn validate(&self) -> Result<(), String> {
        validate_attrs(&self.related_attrs)?;
        let geometric = self.direction.is_some() || self.distance_bin.is_some();
        match self.frame {
            Frame::Robot => {
                if !geometric {
                    return Err("robot-frame relation needs a direction or a distance bin".into());
                }
                if !self.related_attrs.is_empty() || self.adjacency.is_some() || self.occlusion.is_some() {
                    return Err("robot-frame relation takes only direction and distance bin".into());
                }
            }
            Frame::Person => match (geometric, self.adjacency, self.occlusion) {
                (true, None, None) | (false, Some(true), None) | (false, None, Some(true)) => {}
                (false, None, None) => {
                    return Err("relation needs a direction, distance bin, adjacency or occlusion".into())
                }
                _ => {
                    return Err(
                        "adjacency and occlusion must be `true` and cannot combine with other relation fields".into(),
                    )
                }
            },
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructuredQuery {
    pub task: Task,
    #[serde(default)]
    pub anchor_attrs: Vec<AttributeConstraint>,
    #[serde(default)]
    pub relations: Vec<RelationalConstraint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vqa_attribute_key: Option<String>,
}

impl StructuredQuery {
    pub fn vg(anchor_attrs: Vec<AttributeConstraint>, relations: Vec<RelationalConstraint>) -> Self {
        Self { task: Task::Vg, anchor_attrs, relations, vqa_attribute_key: None }
    }

    /// Sorts attribute lists by key so that equal queries compare equal.
    pub fn canonicalize(&mut self) {
        self.anchor_attrs.sort();
        for r in &mut self.relations {
            r.related_attrs.sort();
        }
    }

    /// Checks that the query is expressible in the query language.
    pub fn validate(&self) -> Result<(), QueryError> {
        let schema = QueryError::Schema;
        validate_attrs(&self.anchor_attrs).map_err(schema)?;
        match (self.task, &self.vqa_attribute_key) {
            (Task::VqaAttribute, Some(key)) if vocab::values(key).is_some() => {}
            (Task::VqaAttribute, Some(key)) => return Err(schema(format!("unknown attribute key {key:?}"))),
            (Task::VqaAttribute, None) => return Err(schema("vqa_attribute needs vqa_attribute_key".into())),
            (_, Some(_)) => return Err(schema("vqa_attribute_key only applies to vqa_attribute".into())),
            (_, None) => {}
        }
        for r in &self.relations {
            r.validate().map_err(schema)?;
        }
        Ok(())
    }
}

fn validate_attrs(attrs: &[AttributeConstraint]) -> Result<(), String> {
    for (i, a) in attrs.iter().enumerate() {
        if !vocab::is_known(&a.key, &a.value) {
            return Err(format!("unknown attribute {}={}", a.key, a.value));
        }
        if attrs[..i].iter().any(|b| b.key == a.key) {
            return Err(format!("attribute key {} constrained twice", a.key));
        }
    }
    Ok(())
}

/// Machine-facing entry point: a JSON document mirroring [`StructuredQuery`].
pub fn parse_structured(doc: &str) -> Result<StructuredQuery, QueryError> {
    let mut q: StructuredQuery = serde_json::from_str(doc).map_err(|e| QueryError::Schema(e.to_string()))?;
    let canon = |attrs: &mut Vec<AttributeConstraint>| {
        for a in attrs.iter_mut() {
            *a = AttributeConstraint::new(&a.key, &a.value);
        }
    };
    canon(&mut q.anchor_attrs);
    for r in &mut q.relations {
        canon(&mut r.related_attrs);
    }
    q.vqa_attribute_key = q.vqa_attribute_key.map(|k| canonical_token(&k));
    q.canonicalize();
    q.validate()?;
    Ok(q)
}
