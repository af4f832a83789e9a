//! Spatial reasoning over scene graphs built from 2D detections and a point
//! cloud.
//!
//! The pipeline: [`io`] loads a [`model::SceneBundle`]; [`graph::build_graph`]
//! localizes each detection in 3D and relates every pair; [`query`] turns a
//! sentence into a [`query::StructuredQuery`]; [`search::execute`] answers it
//! over the graph; [`eval`] scores grounding output. [`synth`] generates
//! scenes with ground truth and brute-force oracles for testing.

pub mod config;
pub mod eval;
pub mod graph;
pub mod io;
pub mod model;
pub mod projection;
pub mod query;
pub mod search;
pub mod synth;

pub use config::{EngineConfig, OutputFormat};
pub use graph::{build_graph, SceneGraph};
pub use model::{AttributeMap, Box2D, Box3D, Detection, GraphNode, NodeId, PointCloud, RelationEdge, SceneBundle};
pub use query::{parse_query, parse_query_with, parse_structured, render_query, StructuredQuery};
pub use search::{execute, Answer};
