//! Closed-loop driving world model and multimodal evaluation harness.

pub mod actors;
pub mod control;
pub mod dynamics;
pub mod eval;
pub mod geom;
pub mod planning;
pub mod render;
pub mod scenarios;
pub mod worldmap;

pub use actors::{Actor, ActorCatalog, ActorKind, ActorTrack};
pub use dynamics::{VehicleParams, VehicleState};
pub use eval::{EvalRecord, MetricsReport, ModelClient, ParsedAnswer};
pub use geom::{Pose2, Pose3};
pub use planning::{PlanColor, Trajectory};
pub use render::{CameraModel, FrameGrid, Rollout};
pub use scenarios::{Category, GroundTruth, Manifest, ManifestRecord, ProbeVariant, ScenarioParams, ScenarioSpec};
pub use worldmap::{MapGraph, Side};
