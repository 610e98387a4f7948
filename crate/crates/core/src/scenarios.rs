//! Scenario taxonomy, seeded generation with ground-truth labels,
//! counterfactual probes, suites and the dataset manifest.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::actors::{
    plane_trajectory, step_traffic_vehicle, Actor, ActorCatalog, ActorError, ActorKind, ActorTrack,
    ControlledVehicle, Motion, PlaneMode, PlacementKind, PlacementRule, place_actor,
};
use crate::control::IdmParams;
use crate::dynamics::{
    step_bicycle, step_integrated, ControlAccelSteerRate, ControlSpeedSteer, VehicleParams,
    VehicleState, SIM_DT,
};
use crate::geom::{Footprint, Pose2, Pose3};
use crate::planning::{plan, PlanCandidate, PlanColor, PlanConfig, PlanError, Trajectory, TrajectorySample};
use crate::render::{
    arrow_markings, compose_grid, project, projected_bbox, roadside_trees, sample_frames, write_png,
    CameraModel, RenderError, Rollout,
};
use crate::worldmap::{build_road, LanePoint, MapError, MapGraph, RoadLayout, RoadPiece, Side};

pub const MANIFEST_FORMAT_VERSION: u32 = 1;
pub const SUITE_FORMAT_VERSION: u32 = 1;
const LANE_WIDTH: f64 = 3.5;
const SAMPLE_SPACING: f64 = 1.0;
const EGO_LENGTH: f64 = 4.5;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("probe {probe:?} is not compatible with {category}")]
    IncompatibleProbe { probe: ProbeVariant, category: Category },
    #[error("referenced file {0} does not exist")]
    MissingFile(PathBuf),
    #[error("unsupported format_version {0}")]
    UnsupportedVersion(u32),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Actor(#[from] ActorError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

type Result<T> = std::result::Result<T, ScenarioError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    ForwardBackward,
    AccelDecel,
    LeftRight,
    Traffic,
    Speeding,
    OpenSetObject,
    Plane,
    Planning,
}

impl Category {
    pub const ALL: [Category; 8] = [
        Category::ForwardBackward,
        Category::AccelDecel,
        Category::LeftRight,
        Category::Traffic,
        Category::Speeding,
        Category::OpenSetObject,
        Category::Plane,
        Category::Planning,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::ForwardBackward => "forward_backward",
            Category::AccelDecel => "accel_decel",
            Category::LeftRight => "left_right",
            Category::Traffic => "traffic",
            Category::Speeding => "speeding",
            Category::OpenSetObject => "open_set_object",
            Category::Plane => "plane",
            Category::Planning => "planning",
        }
    }

    pub fn answer_set(self) -> &'static [&'static str] {
        match self {
            Category::ForwardBackward => &["forward", "backward"],
            Category::AccelDecel => &["accelerate", "decelerate"],
            Category::LeftRight => &["left", "right"],
            Category::Traffic => &["traffic", "no_traffic"],
            Category::Speeding => &["speeding", "no_speeding"],
            Category::OpenSetObject => &["yes", "no"],
            Category::Plane => &["can_keep_moving", "cannot_keep_moving"],
            Category::Planning => &["red", "green", "blue"],
        }
    }

    pub fn question_kind(self) -> &'static str {
        match self {
            Category::ForwardBackward => "direction_of_motion",
            Category::AccelDecel => "speed_change",
            Category::LeftRight => "turn_direction",
            Category::Traffic => "traffic_slowdown",
            Category::Speeding => "other_vehicle_speeding",
            Category::OpenSetObject => "keep_lane",
            Category::Plane => "keep_moving",
            Category::Planning => "trajectory_choice",
        }
    }

    /// Frame counts used when a suite does not override them.
    pub fn default_frame_counts(self) -> Vec<usize> {
        match self {
            Category::Planning => vec![1],
            _ => vec![3, 6, 9],
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Category {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| ScenarioError::InvalidParams(format!("unknown category {s}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    High,
    Low,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeedChange {
    Accelerate,
    Decelerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeedLevel {
    SpeedingHigh,
    SpeedingLow,
    NormalHigh,
    NormalLow,
}

impl SpeedLevel {
    pub fn is_speeding(self) -> bool {
        matches!(self, SpeedLevel::SpeedingHigh | SpeedLevel::SpeedingLow)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    StaticObject,
    Animal,
    Barrier,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioParams {
    ForwardBackward { level: Level, direction: Direction },
    AccelDecel { level: Level, change: SpeedChange },
    LeftRight { curvature: Level, side: Side },
    Traffic { level: u8 },
    Speeding { speed_level: SpeedLevel },
    OpenSetObject { kind: ObjectKind, on_road: bool },
    Plane { mode: PlaneMode },
    Planning { config: u8 },
}

fn snake<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|j| j.as_str().map(str::to_string))
        .unwrap_or_default()
}

impl ScenarioParams {
    pub fn category(&self) -> Category {
        match self {
            ScenarioParams::ForwardBackward { .. } => Category::ForwardBackward,
            ScenarioParams::AccelDecel { .. } => Category::AccelDecel,
            ScenarioParams::LeftRight { .. } => Category::LeftRight,
            ScenarioParams::Traffic { .. } => Category::Traffic,
            ScenarioParams::Speeding { .. } => Category::Speeding,
            ScenarioParams::OpenSetObject { .. } => Category::OpenSetObject,
            ScenarioParams::Plane { .. } => Category::Plane,
            ScenarioParams::Planning { .. } => Category::Planning,
        }
    }

    /// Key used by per-level accuracy breakdowns.
    pub fn level_key(&self) -> String {
        match self {
            ScenarioParams::ForwardBackward { level, direction } => {
                format!("{}_{}", snake(level), snake(direction))
            }
            ScenarioParams::AccelDecel { level, change } => format!("{}_{}", snake(level), snake(change)),
            ScenarioParams::LeftRight { curvature, .. } => snake(curvature),
            ScenarioParams::Traffic { level } => format!("level_{level}"),
            ScenarioParams::Speeding { speed_level } => snake(speed_level),
            ScenarioParams::OpenSetObject { kind, on_road } => {
                format!("{}_{}", snake(kind), if *on_road { "on_road" } else { "off_road" })
            }
            ScenarioParams::Plane { mode } => snake(mode),
            ScenarioParams::Planning { config } => format!("config_{config}"),
        }
    }

    /// Ground-truth label implied by the parameters.
    pub fn label(&self) -> &'static str {
        match *self {
            ScenarioParams::ForwardBackward { direction, .. } => match direction {
                Direction::Forward => "forward",
                Direction::Backward => "backward",
            },
            ScenarioParams::AccelDecel { change, .. } => match change {
                SpeedChange::Accelerate => "accelerate",
                SpeedChange::Decelerate => "decelerate",
            },
            ScenarioParams::LeftRight { side, .. } => match side {
                Side::Left => "left",
                Side::Right => "right",
            },
            ScenarioParams::Traffic { level } => {
                if level <= 2 {
                    "no_traffic"
                } else {
                    "traffic"
                }
            }
            ScenarioParams::Speeding { speed_level } => {
                if speed_level.is_speeding() {
                    "speeding"
                } else {
                    "no_speeding"
                }
            }
            ScenarioParams::OpenSetObject { kind, on_road } => match (kind, on_road) {
                (ObjectKind::Animal, _) | (_, true) => "no",
                _ => "yes",
            },
            ScenarioParams::Plane { mode } => match mode {
                PlaneMode::Landing => "cannot_keep_moving",
                PlaneMode::Overhead => "can_keep_moving",
            },
            ScenarioParams::Planning { config } => match config {
                3 => "blue",
                4 => "red",
                _ => "green",
            },
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            ScenarioParams::Traffic { level } if !(1..=4).contains(&level) => Err(
                ScenarioError::InvalidParams(format!("traffic level {level} outside 1..=4")),
            ),
            ScenarioParams::Planning { config } if !(1..=4).contains(&config) => Err(
                ScenarioError::InvalidParams(format!("planning config {config} outside 1..=4")),
            ),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub id: String,
    pub category: Category,
    pub params: ScenarioParams,
    pub seed: u64,
    pub frame_counts: Vec<usize>,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.params.category() != self.category {
            return Err(ScenarioError::InvalidParams(format!(
                "{} params given for category {}",
                self.params.category(),
                self.category
            )));
        }
        if self.frame_counts.is_empty() {
            return Err(ScenarioError::InvalidParams("no frame counts".into()));
        }
        let allowed: &[usize] = if self.category == Category::Planning {
            &[1, 3, 6, 9]
        } else {
            &[3, 6, 9]
        };
        if let Some(n) = self.frame_counts.iter().find(|n| !allowed.contains(n)) {
            return Err(ScenarioError::InvalidParams(format!("frame count {n}")));
        }
        self.params.validate()
    }

    pub fn max_frames(&self) -> usize {
        self.frame_counts.iter().copied().max().unwrap_or(1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub question_kind: String,
    pub label: String,
    pub answer_set: Vec<String>,
}

impl GroundTruth {
    pub fn for_params(params: &ScenarioParams) -> Self {
        let cat = params.category();
        GroundTruth {
            question_kind: cat.question_kind().to_string(),
            label: params.label().to_string(),
            answer_set: cat.answer_set().iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeVariant {
    AddBarrierBackward,
    AddReferenceVehicle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationRun {
    pub map: MapGraph,
    pub rollout: Rollout,
    /// Ranked planner output (planning scenarios only).
    pub plans: Vec<PlanCandidate>,
    /// Obstacles handed to the planner.
    pub obstacles: Vec<Footprint>,
    pub duration: f64,
    pub probe: Option<ProbeVariant>,
}

impl SimulationRun {
    pub fn plan_exports(&self) -> Vec<crate::planning::CandidateExport> {
        let mut out: Vec<_> = self.plans.iter().filter_map(|p| p.export()).collect();
        out.sort_by_key(|e| e.color);
        out
    }

    pub fn selected_color(&self) -> Option<PlanColor> {
        self.plans.first().and_then(|p| p.color_tag)
    }
}

/// Quantitative level definitions; every value may be overridden by config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConstants {
    pub speed_limit: f64,
    pub frame_interval: f64,
    pub rollout_margin: f64,
    pub forward_backward_speed: [f64; 2],
    pub forward_start_station: f64,
    pub backward_start_station: f64,
    pub accel_rate: [f64; 2],
    pub decel_rate: [f64; 2],
    pub accel_start_speed: f64,
    pub decel_start_speed: f64,
    pub curve_radius: [f64; 2],
    pub left_right_speed: f64,
    pub traffic_level3: (usize, f64),
    pub traffic_level4: (usize, f64),
    /// Drive the traffic ego at a fixed speed instead of with IDM.
    pub traffic_scripted_ego: bool,
    pub speeding_speed: [f64; 2],
    pub normal_speed: [f64; 2],
    pub open_set_speed: f64,
    pub open_set_distance: f64,
    pub plane_cruise_altitude: f64,
    pub plane_ego_speed: f64,
    pub planning_ego_speed: f64,
}

impl Default for ScenarioConstants {
    fn default() -> Self {
        Self {
            speed_limit: 13.9,
            frame_interval: 0.5,
            rollout_margin: 1.0,
            forward_backward_speed: [12.0, 6.0],
            forward_start_station: 20.0,
            backward_start_station: 65.0,
            accel_rate: [2.5, 1.0],
            decel_rate: [-2.5, -1.0],
            accel_start_speed: 5.0,
            decel_start_speed: 14.0,
            curve_radius: [25.0, 80.0],
            left_right_speed: 8.0,
            traffic_level3: (6, 5.0),
            traffic_level4: (8, 1.5),
            traffic_scripted_ego: false,
            speeding_speed: [25.0, 18.0],
            normal_speed: [13.9, 10.0],
            open_set_speed: 6.0,
            open_set_distance: 50.0,
            plane_cruise_altitude: 40.0,
            plane_ego_speed: 6.0,
            planning_ego_speed: 5.0,
        }
    }
}

impl ScenarioConstants {
    pub fn rollout_duration(&self, spec: &ScenarioSpec) -> f64 {
        (spec.max_frames() - 1) as f64 * self.frame_interval + self.rollout_margin
    }
}

fn pick(level: Level, values: [f64; 2]) -> f64 {
    match level {
        Level::High => values[0],
        Level::Low => values[1],
    }
}

fn steps(duration: f64) -> usize {
    (duration / SIM_DT).round() as usize
}

fn sample(t: f64, s: &VehicleState) -> TrajectorySample {
    TrajectorySample {
        t,
        pose: s.pose.lift(0.0),
        speed: s.speed,
    }
}

/// Open-loop rollout under constant speed and steering.
fn drive_integrated(start: VehicleState, control: ControlSpeedSteer, duration: f64) -> Trajectory {
    let params = VehicleParams::default();
    let mut s = VehicleState {
        speed: control.speed,
        steering_angle: control.steering_angle,
        ..start
    };
    let mut out = vec![sample(0.0, &s)];
    for k in 1..=steps(duration) {
        s = step_integrated(&s, &params, control, SIM_DT);
        out.push(sample(k as f64 * SIM_DT, &s));
    }
    Trajectory::new(out)
}

/// Open-loop rollout under constant acceleration and zero steering rate.
fn drive_accel(start: VehicleState, accel: f64, duration: f64) -> Trajectory {
    let params = VehicleParams::default();
    let u = ControlAccelSteerRate { accel, steer_rate: 0.0 };
    let mut s = start;
    let mut out = vec![sample(0.0, &s)];
    for k in 1..=steps(duration) {
        s = step_bicycle(&s, &params, u, SIM_DT);
        out.push(sample(k as f64 * SIM_DT, &s));
    }
    Trajectory::new(out)
}

/// Constant-speed track along a lane from `start`, offset laterally.
fn lane_track(map: &MapGraph, start: &LanePoint, lateral: f64, speed: f64, duration: f64) -> Result<Trajectory> {
    let mut out = Vec::with_capacity(steps(duration) + 1);
    for k in 0..=steps(duration) {
        let t = k as f64 * SIM_DT;
        let p = map.advance_along_lane(start, speed * t)?;
        out.push(TrajectorySample {
            t,
            pose: p.pose.offset_left(lateral).lift(0.0),
            speed,
        });
    }
    Ok(Trajectory::new(out))
}

fn static_track(id: u32, kind: ActorKind, pose: Pose3, duration: f64) -> ActorTrack {
    let samples = vec![
        TrajectorySample { t: 0.0, pose, speed: 0.0 },
        TrajectorySample { t: duration.max(SIM_DT), pose, speed: 0.0 },
    ];
    ActorTrack {
        id,
        kind,
        trajectory: Trajectory::new(samples),
    }
}

fn straight_map(length: f64, adjacent: usize) -> Result<MapGraph> {
    Ok(build_road(&RoadLayout {
        pieces: vec![RoadPiece::Straight { length }],
        lane_width: LANE_WIDTH,
        adjacent_lanes: adjacent,
        sample_spacing: SAMPLE_SPACING,
        origin: Pose2::default(),
    })?)
}

fn ego_at(map: &MapGraph, station: f64, speed: f64) -> Result<VehicleState> {
    let base = map.segment(crate::worldmap::LaneId(0))?.point_at(station);
    Ok(VehicleState::new(base.pose, speed))
}

fn jitter(rng: &mut ChaCha8Rng, amplitude: f64) -> f64 {
    rng.random_range(-amplitude..=amplitude)
}

fn vehicle_kind(catalog: &ActorCatalog, rng: &mut ChaCha8Rng) -> Result<ActorKind> {
    let names = ["sedan", "sedan_green", "sedan_white", "sedan_red"];
    Ok(catalog.get(names[rng.random_range(0..names.len())])?.clone())
}

/// Simulates controller-driven vehicles (ego is id 0) and records tracks.
fn simulate_traffic(map: &MapGraph, mut actors: Vec<Actor>, duration: f64) -> (Trajectory, Vec<ActorTrack>) {
    let n = steps(duration);
    let mut tracks: Vec<Vec<TrajectorySample>> = vec![Vec::with_capacity(n + 1); actors.len()];
    let record = |tracks: &mut Vec<Vec<TrajectorySample>>, actors: &[Actor], t: f64| {
        for (track, a) in tracks.iter_mut().zip(actors) {
            track.push(TrajectorySample {
                t,
                pose: a.pose_at(t),
                speed: a.speed_at(t),
            });
        }
    };
    record(&mut tracks, &actors, 0.0);
    for k in 1..=n {
        let t = (k - 1) as f64 * SIM_DT;
        let snapshot = actors.clone();
        actors = snapshot
            .iter()
            .map(|a| step_traffic_vehicle(a, map, &snapshot, t, SIM_DT))
            .collect();
        record(&mut tracks, &actors, k as f64 * SIM_DT);
    }
    let mut tracks = tracks.into_iter().map(Trajectory::new);
    let ego = tracks.next().expect("ego is simulated");
    let others = actors
        .iter()
        .skip(1)
        .zip(tracks)
        .map(|(a, trajectory)| ActorTrack {
            id: a.id,
            kind: a.kind.clone(),
            trajectory,
        })
        .collect();
    (ego, others)
}

fn controlled(id: u32, kind: ActorKind, state: VehicleState, v0: f64) -> Actor {
    Actor {
        id,
        kind,
        motion: Motion::Controlled(ControlledVehicle::new(state, IdmParams::with_desired_speed(v0))),
    }
}

/// Planning obstacle for configuration 2..=4 as (station ahead, lateral,
/// length, width), jittered within the configuration's blocking contract.
fn planning_obstacle(config: u8, rng: &mut ChaCha8Rng) -> Option<(f64, f64, f64, f64)> {
    let along = 18.5 + jitter(rng, 0.5);
    let lat = jitter(rng, 0.1);
    match config {
        2 => Some((10.0 + jitter(rng, 0.5), 2.6 + lat, 0.8, 0.8)),
        3 => Some((along, -0.55 + lat, 1.0, 1.1)),
        4 => Some((along, 0.55 + lat, 1.0, 1.1)),
        _ => None,
    }
}

/// Deterministic rollout and label for a scenario.
pub fn generate(spec: &ScenarioSpec, consts: &ScenarioConstants) -> Result<(SimulationRun, GroundTruth)> {
    spec.validate()?;
    let catalog = ActorCatalog::default();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let duration = consts.rollout_duration(spec);
    let mut plans = Vec::new();
    let mut obstacles = Vec::new();

    let (map, ego, actors) = match spec.params {
        ScenarioParams::ForwardBackward { level, direction } => {
            let map = straight_map(160.0, 1)?;
            let v = pick(level, consts.forward_backward_speed);
            let (station, speed) = match direction {
                Direction::Forward => (consts.forward_start_station + jitter(&mut rng, 2.0), v),
                Direction::Backward => (consts.backward_start_station + jitter(&mut rng, 2.0).abs(), -v),
            };
            let start = ego_at(&map, station, 0.0)?;
            let ego = drive_integrated(
                start,
                ControlSpeedSteer {
                    speed,
                    steering_angle: 0.0,
                },
                duration,
            );
            (map, ego, vec![])
        }
        ScenarioParams::AccelDecel { level, change } => {
            let map = straight_map(160.0, 1)?;
            let (rate, v0) = match change {
                SpeedChange::Accelerate => (pick(level, consts.accel_rate), consts.accel_start_speed),
                SpeedChange::Decelerate => (pick(level, consts.decel_rate), consts.decel_start_speed),
            };
            let start = ego_at(&map, 10.0 + jitter(&mut rng, 2.0), v0)?;
            (map, drive_accel(start, rate, duration), vec![])
        }
        ScenarioParams::LeftRight { curvature, side } => {
            let radius = pick(curvature, consts.curve_radius);
            let needed = consts.left_right_speed * duration + 80.0;
            let sweep = (needed / radius).min(std::f64::consts::PI);
            let mut pieces = vec![RoadPiece::Arc { radius, sweep, side }];
            if radius * sweep < needed {
                pieces.push(RoadPiece::Straight {
                    length: needed - radius * sweep,
                });
            }
            let map = build_road(&RoadLayout {
                pieces,
                lane_width: LANE_WIDTH,
                adjacent_lanes: 1,
                sample_spacing: SAMPLE_SPACING,
                origin: Pose2::default(),
            })?;
            let start = ego_at(&map, 3.0 + jitter(&mut rng, 1.0).abs(), 0.0)?;
            let steer = side.sign() * (VehicleParams::default().wheelbase / radius).atan();
            let ego = drive_integrated(
                start,
                ControlSpeedSteer {
                    speed: consts.left_right_speed,
                    steering_angle: steer,
                },
                duration,
            );
            (map, ego, vec![])
        }
        ScenarioParams::Traffic { level } => {
            let map = straight_map(260.0, 1)?;
            let ego_station = 10.0 + jitter(&mut rng, 1.0);
            let limit = consts.speed_limit;
            let mut actors = Vec::new();
            let ego_speed;
            let left = |station: f64| -> Result<VehicleState> {
                let s = map.segment(crate::worldmap::LaneId(1))?.point_at(station);
                Ok(VehicleState::new(s.pose, 0.0))
            };
            match level {
                1 => {
                    ego_speed = limit;
                    for k in 0..2 {
                        let mut s = left(ego_station + 15.0 + 25.0 * k as f64 + jitter(&mut rng, 3.0))?;
                        s.speed = 12.0;
                        actors.push(controlled(k + 1, vehicle_kind(&catalog, &mut rng)?, s, 12.0));
                    }
                }
                2 => {
                    ego_speed = 12.0;
                    let mut s = ego_at(&map, ego_station + 40.0 + jitter(&mut rng, 3.0), limit)?;
                    s.steering_angle = 0.0;
                    actors.push(controlled(1, vehicle_kind(&catalog, &mut rng)?, s, limit));
                }
                _ => {
                    let (count, v) = if level == 3 {
                        consts.traffic_level3
                    } else {
                        consts.traffic_level4
                    };
                    ego_speed = v;
                    let spacing = 2.0 + v * 1.5 + EGO_LENGTH;
                    for k in 0..count {
                        let station = ego_station + spacing * (k + 1) as f64 + jitter(&mut rng, 0.5);
                        let s = ego_at(&map, station, v)?;
                        actors.push(controlled(k as u32 + 1, vehicle_kind(&catalog, &mut rng)?, s, v));
                    }
                }
            }
            let ego_start = ego_at(&map, ego_station, ego_speed)?;
            let ego = if consts.traffic_scripted_ego {
                let control = ControlSpeedSteer {
                    speed: ego_speed,
                    steering_angle: 0.0,
                };
                Actor {
                    id: 0,
                    kind: catalog.get("sedan")?.clone(),
                    motion: Motion::Scripted(drive_integrated(ego_start, control, duration)),
                }
            } else {
                controlled(0, catalog.get("sedan")?.clone(), ego_start, limit)
            };
            let mut all = vec![ego];
            all.extend(actors);
            let (ego, tracks) = simulate_traffic(&map, all, duration);
            (map, ego, tracks)
        }
        ScenarioParams::Speeding { speed_level } => {
            let map = straight_map(300.0, 2)?;
            let limit = consts.speed_limit;
            let start = ego_at(&map, 10.0 + jitter(&mut rng, 1.0), limit)?;
            let ego = drive_integrated(
                start,
                ControlSpeedSteer {
                    speed: limit,
                    steering_angle: 0.0,
                },
                duration,
            );
            let v = match speed_level {
                SpeedLevel::SpeedingHigh => consts.speeding_speed[0],
                SpeedLevel::SpeedingLow => consts.speeding_speed[1],
                SpeedLevel::NormalHigh => consts.normal_speed[0],
                SpeedLevel::NormalLow => consts.normal_speed[1],
            };
            let lane = map.segment(crate::worldmap::LaneId(1))?;
            let from = lane.point_at(start.pose.x + 30.0 + jitter(&mut rng, 3.0));
            let track = ActorTrack {
                id: 1,
                kind: vehicle_kind(&catalog, &mut rng)?,
                trajectory: lane_track(&map, &from, 0.0, v, duration)?,
            };
            (map, ego, vec![track])
        }
        ScenarioParams::OpenSetObject { kind, on_road } => {
            let map = straight_map(160.0, 1)?;
            let start = ego_at(&map, 10.0 + jitter(&mut rng, 1.0), consts.open_set_speed)?;
            let ego = drive_integrated(
                start,
                ControlSpeedSteer {
                    speed: consts.open_set_speed,
                    steering_angle: 0.0,
                },
                duration,
            );
            let names: &[&str] = match kind {
                ObjectKind::StaticObject => &["crate", "traffic_cone"],
                ObjectKind::Animal => &["deer", "dog"],
                ObjectKind::Barrier => &["barrier"],
            };
            let actor_kind = catalog.get(names[rng.random_range(0..names.len())])?.clone();
            let along = consts.open_set_distance + jitter(&mut rng, 3.0);
            let rule = match (kind, on_road) {
                (_, true) => PlacementRule::new(PlacementKind::OnRoadAhead, along),
                (ObjectKind::Animal, false) => PlacementRule::new(PlacementKind::BesideEgoLane, along),
                (_, false) => PlacementRule::new(PlacementKind::OffRoad, along),
            };
            let rule = PlacementRule {
                // the ego lane's right edge is the road edge
                side: Side::Right,
                ..rule
            };
            let mut pose = place_actor(&map, &start, &rule, &actor_kind)?;
            if on_road {
                let lat = jitter(&mut rng, 0.3);
                let p = pose.ground().offset_left(lat);
                pose = p.lift(0.0);
            }
            if kind == ObjectKind::Animal && on_road {
                // animals on the road stand across it, facing left
                pose.heading += std::f64::consts::FRAC_PI_2;
            }
            (map, ego, vec![static_track(1, actor_kind, pose, duration)])
        }
        ScenarioParams::Plane { mode } => {
            let map = straight_map(200.0, 1)?;
            let start = ego_at(&map, 10.0 + jitter(&mut rng, 1.0), consts.plane_ego_speed)?;
            let ego = drive_integrated(
                start,
                ControlSpeedSteer {
                    speed: consts.plane_ego_speed,
                    steering_angle: 0.0,
                },
                duration,
            );
            let altitude = consts.plane_cruise_altitude + jitter(&mut rng, 5.0);
            let track = ActorTrack {
                id: 1,
                kind: catalog.get("airliner")?.clone(),
                trajectory: plane_trajectory(mode, &map, &start, altitude, duration)?,
            };
            (map, ego, vec![track])
        }
        ScenarioParams::Planning { config } => {
            let map = straight_map(120.0, 0)?;
            let start = ego_at(&map, 10.0 + jitter(&mut rng, 1.0), consts.planning_ego_speed)?;
            let ego = drive_integrated(
                start,
                ControlSpeedSteer {
                    speed: consts.planning_ego_speed,
                    steering_angle: 0.0,
                },
                duration,
            );
            let mut tracks = Vec::new();
            if let Some((along, lat, length, width)) = planning_obstacle(config, &mut rng) {
                let base = map.advance_along_lane(&map.localize(&start.pose)?.point, along)?;
                let pose = base.pose.offset_left(lat);
                obstacles.push(Footprint::new(&pose, length, width));
                let kind = ActorKind {
                    length,
                    width,
                    ..catalog.get("crate")?.clone()
                };
                tracks.push(static_track(1, kind, pose.lift(0.0), duration));
            }
            plans = plan(&map, &start, &obstacles, &PlanConfig::default())?;
            (map, ego, tracks)
        }
    };

    let run = SimulationRun {
        map,
        rollout: Rollout { ego, actors },
        plans,
        obstacles,
        duration,
        probe: None,
    };
    Ok((run, GroundTruth::for_params(&spec.params)))
}

/// Adds a counterfactual element; the ground truth is unchanged.
pub fn apply_probe(spec: &ScenarioSpec, run: &SimulationRun, probe: ProbeVariant) -> Result<SimulationRun> {
    let incompatible = || ScenarioError::IncompatibleProbe {
        probe,
        category: spec.category,
    };
    let catalog = ActorCatalog::default();
    let ego0 = run.rollout.ego.samples[0];
    let ego_state = VehicleState::new(ego0.pose.ground(), ego0.speed);
    let next_id = run.rollout.actors.iter().map(|a| a.id).max().unwrap_or(0) + 1;
    let track = match (probe, spec.params) {
        (
            ProbeVariant::AddBarrierBackward,
            ScenarioParams::ForwardBackward {
                direction: Direction::Backward,
                ..
            },
        ) => {
            let kind = catalog.get("barrier")?.clone();
            let rule = PlacementRule::new(PlacementKind::OnRoadAhead, 12.0);
            let pose = place_actor(&run.map, &ego_state, &rule, &kind)?;
            static_track(next_id, kind, pose, run.duration)
        }
        (ProbeVariant::AddReferenceVehicle, ScenarioParams::Speeding { .. }) => {
            let ego_loc = run.map.localize(&ego_state.pose)?;
            let right = run
                .map
                .segment(ego_loc.point.lane_id)?
                .adjacent_right
                .ok_or_else(incompatible)?;
            let lane = run.map.segment(right)?;
            let from = lane.point_at(ego_loc.point.arc_length + ego_loc.along_offset + 12.0);
            ActorTrack {
                id: next_id,
                kind: catalog.get("sedan_white")?.clone(),
                trajectory: lane_track(&run.map, &from, 0.0, ego0.speed, run.duration)?,
            }
        }
        _ => return Err(incompatible()),
    };
    let mut out = run.clone();
    out.rollout.actors.push(track);
    out.probe = Some(probe);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteConfig {
    pub seed: u64,
    pub counts: BTreeMap<Category, usize>,
    /// Overrides per-category default frame counts when set.
    pub frame_counts: Option<Vec<usize>>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        let counts = Category::ALL
            .into_iter()
            .map(|c| (c, if c == Category::Speeding { 60 } else { 24 }))
            .collect();
        Self {
            seed: 2024,
            counts,
            frame_counts: None,
        }
    }
}

/// Parameter for the `i`-th scenario of a category, cycling through the
/// grid so labels stay balanced.
pub fn balanced_params(category: Category, i: usize) -> ScenarioParams {
    let lv = |k: usize| if k % 2 == 0 { Level::High } else { Level::Low };
    match category {
        Category::ForwardBackward => ScenarioParams::ForwardBackward {
            direction: if i % 2 == 0 { Direction::Forward } else { Direction::Backward },
            level: lv(i / 2),
        },
        Category::AccelDecel => ScenarioParams::AccelDecel {
            change: if i % 2 == 0 {
                SpeedChange::Accelerate
            } else {
                SpeedChange::Decelerate
            },
            level: lv(i / 2),
        },
        Category::LeftRight => ScenarioParams::LeftRight {
            side: if i % 2 == 0 { Side::Left } else { Side::Right },
            curvature: lv(i / 2),
        },
        Category::Traffic => ScenarioParams::Traffic {
            level: [1, 3, 2, 4][i % 4],
        },
        Category::Speeding => ScenarioParams::Speeding {
            speed_level: [
                SpeedLevel::SpeedingHigh,
                SpeedLevel::NormalHigh,
                SpeedLevel::SpeedingLow,
                SpeedLevel::NormalLow,
            ][i % 4],
        },
        Category::OpenSetObject => {
            let yes = [(ObjectKind::StaticObject, false), (ObjectKind::Barrier, false)];
            let no = [
                (ObjectKind::StaticObject, true),
                (ObjectKind::Animal, true),
                (ObjectKind::Animal, false),
                (ObjectKind::Barrier, true),
            ];
            let (kind, on_road) = if i % 2 == 0 { yes[(i / 2) % 2] } else { no[(i / 2) % 4] };
            ScenarioParams::OpenSetObject { kind, on_road }
        }
        Category::Plane => ScenarioParams::Plane {
            mode: if i % 2 == 0 { PlaneMode::Landing } else { PlaneMode::Overhead },
        },
        Category::Planning => ScenarioParams::Planning {
            config: (i % 4) as u8 + 1,
        },
    }
}

/// Deterministic spec list; ids are `<category>_<index>`.
pub fn build_suite(config: &SuiteConfig) -> Result<Vec<ScenarioSpec>> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut out = Vec::new();
    for category in Category::ALL {
        let Some(&count) = config.counts.get(&category) else {
            continue;
        };
        if count == 0 {
            return Err(ScenarioError::InvalidParams(format!("{category} count must be at least 1")));
        }
        for i in 0..count {
            let spec = ScenarioSpec {
                id: format!("{}_{:03}", category, i),
                category,
                params: balanced_params(category, i),
                seed: rng.random(),
                frame_counts: config
                    .frame_counts
                    .clone()
                    .filter(|_| category != Category::Planning)
                    .unwrap_or_else(|| category.default_frame_counts()),
            };
            spec.validate()?;
            out.push(spec);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub scenario_id: String,
    pub category: Category,
    pub params: ScenarioParams,
    pub level: String,
    pub question_kind: String,
    pub label: String,
    pub answer_set: Vec<String>,
    pub prompt_id: String,
    pub frame_count: usize,
    pub grid_path: String,
    pub frame_paths: Vec<String>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe: Option<ProbeVariant>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub records: Vec<ManifestRecord>,
}

impl Manifest {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn parse(text: &str) -> Result<Self> {
        let m: Manifest = serde_json::from_str(text)?;
        if m.format_version != MANIFEST_FORMAT_VERSION {
            return Err(ScenarioError::UnsupportedVersion(m.format_version));
        }
        Ok(m)
    }
}

pub fn prompt_id(category: Category, frame_count: usize) -> String {
    format!("{category}/{frame_count}")
}

/// Relative directory holding a scenario's images.
pub fn scenario_dir(spec: &ScenarioSpec, probe: Option<ProbeVariant>) -> String {
    match probe {
        Some(p) => format!("{}__{}", spec.id, snake(&p)),
        None => spec.id.clone(),
    }
}

/// One record per frame count, with paths relative to the output root.
pub fn manifest_records(spec: &ScenarioSpec, truth: &GroundTruth, probe: Option<ProbeVariant>) -> Vec<ManifestRecord> {
    let dir = scenario_dir(spec, probe);
    let mut counts = spec.frame_counts.clone();
    counts.sort_unstable();
    counts.dedup();
    counts
        .into_iter()
        .map(|n| ManifestRecord {
            scenario_id: spec.id.clone(),
            category: spec.category,
            params: spec.params,
            level: spec.params.level_key(),
            question_kind: truth.question_kind.clone(),
            label: truth.label.clone(),
            answer_set: truth.answer_set.clone(),
            prompt_id: prompt_id(spec.category, n),
            frame_count: n,
            grid_path: format!("{dir}/grid_{n}.png"),
            frame_paths: (0..n).map(|k| format!("{dir}/frame_{k}.png")).collect(),
            seed: spec.seed,
            probe,
        })
        .collect()
}

/// Checks that every referenced image exists under `root`.
pub fn export_manifest(records: Vec<ManifestRecord>, root: &Path) -> Result<Manifest> {
    for r in &records {
        for p in std::iter::once(&r.grid_path).chain(&r.frame_paths) {
            let full = root.join(p);
            if !full.is_file() {
                return Err(ScenarioError::MissingFile(full));
            }
        }
    }
    Ok(Manifest {
        format_version: MANIFEST_FORMAT_VERSION,
        records,
    })
}

/// Renders the frames and every grid of a scenario under `root`.
pub fn write_artifacts(
    spec: &ScenarioSpec,
    run: &SimulationRun,
    cam: &CameraModel,
    consts: &ScenarioConstants,
    root: &Path,
) -> Result<()> {
    let dir = root.join(scenario_dir(spec, run.probe));
    let frames = sample_frames(
        &run.map,
        &run.rollout,
        &run.plan_exports(),
        cam,
        consts.frame_interval,
        spec.max_frames(),
    )?;
    for (k, f) in frames.iter().enumerate() {
        write_png(&f.pixels, &dir.join(format!("frame_{k}.png")))?;
    }
    let mut counts = spec.frame_counts.clone();
    counts.sort_unstable();
    counts.dedup();
    for n in counts {
        let grid = compose_grid(&frames[..n])?;
        write_png(&grid.image, &dir.join(format!("grid_{n}.png")))?;
    }
    Ok(())
}

/// Simulates and renders every spec in parallel, then returns the manifest
/// with records in spec order.
pub fn generate_dataset(
    specs: &[ScenarioSpec],
    consts: &ScenarioConstants,
    cam: &CameraModel,
    root: &Path,
) -> Result<Manifest> {
    use rayon::prelude::*;
    let per_spec: Vec<Vec<ManifestRecord>> = specs
        .par_iter()
        .map(|spec| {
            let (run, truth) = generate(spec, consts)?;
            write_artifacts(spec, &run, cam, consts, root)?;
            Ok(manifest_records(spec, &truth, None))
        })
        .collect::<Result<_>>()?;
    export_manifest(per_spec.into_iter().flatten().collect(), root)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub scenario_id: String,
    pub message: String,
}

fn ego_station(map: &MapGraph, pose: &Pose2) -> Option<f64> {
    let l = map.localize(pose).ok()?;
    Some(l.point.arc_length + l.along_offset)
}

fn strictly(values: &[f64], increasing: bool) -> bool {
    values
        .windows(2)
        .all(|w| if increasing { w[1] > w[0] } else { w[1] < w[0] })
}

/// Kinematic label contract of a generated run; empty when sound.
pub fn check_label_contract(
    spec: &ScenarioSpec,
    run: &SimulationRun,
    truth: &GroundTruth,
    consts: &ScenarioConstants,
) -> Vec<String> {
    let mut bad = Vec::new();
    if !truth.answer_set.contains(&truth.label) {
        bad.push(format!("label {} not in answer set", truth.label));
    }
    if truth.label != spec.params.label() {
        bad.push("label disagrees with parameters".into());
    }
    let ego = &run.rollout.ego.samples;
    let speeds: Vec<f64> = ego.iter().map(|s| s.speed).collect();
    let limit = consts.speed_limit;
    match spec.params {
        ScenarioParams::ForwardBackward { direction, .. } => {
            let stations: Vec<f64> = ego.iter().filter_map(|s| ego_station(&run.map, &s.pose.ground())).collect();
            if stations.len() != ego.len() || !strictly(&stations, direction == Direction::Forward) {
                bad.push(format!("ego station not strictly monotone for {direction:?}"));
            }
        }
        ScenarioParams::AccelDecel { change, .. } => {
            if !strictly(&speeds, change == SpeedChange::Accelerate) {
                bad.push(format!("speed not strictly monotone for {change:?}"));
            }
        }
        ScenarioParams::LeftRight { side, .. } => {
            let ok = ego
                .windows(2)
                .all(|w| side.sign() * crate::geom::angle_diff(w[1].pose.heading, w[0].pose.heading) > 0.0);
            if !ok {
                bad.push("heading rate changes sign".into());
            }
        }
        ScenarioParams::Traffic { level } => {
            let mean = speeds.iter().sum::<f64>() / speeds.len() as f64;
            match level {
                1 => {
                    let ego_lane = crate::worldmap::LaneId(0);
                    let intruder = run.rollout.actors.iter().any(|a| {
                        a.trajectory.samples.iter().any(|s| {
                            run.map
                                .localize(&s.pose.ground())
                                .map(|l| l.point.lane_id == ego_lane)
                                .unwrap_or(false)
                        })
                    });
                    if intruder {
                        bad.push("vehicle in the ego lane at level 1".into());
                    }
                }
                2 => {
                    if speeds.iter().any(|v| *v < 0.9 * speeds[0]) {
                        bad.push("ego slowed down at level 2".into());
                    }
                }
                4 => {
                    if mean >= 0.25 * limit {
                        bad.push(format!("level 4 mean speed {mean:.2} not below a quarter of the limit"));
                    }
                }
                _ => {
                    if mean >= 0.5 * limit {
                        bad.push(format!("level 3 mean speed {mean:.2} not below half the limit"));
                    }
                }
            }
        }
        ScenarioParams::Speeding { speed_level } => {
            if speeds.iter().any(|v| (v - limit).abs() > 1e-9) {
                bad.push("ego not at the speed limit".into());
            }
            let other = run.rollout.actors.iter().find(|a| a.id == 1);
            let ok = other.is_some_and(|a| {
                a.trajectory.samples.iter().all(|s| {
                    if speed_level.is_speeding() {
                        s.speed > 1.1 * limit
                    } else {
                        s.speed <= limit
                    }
                })
            });
            if !ok {
                bad.push(format!("other vehicle speed contradicts {speed_level:?}"));
            }
        }
        ScenarioParams::OpenSetObject { on_road, .. } => {
            let Some(obj) = run.rollout.actors.first() else {
                bad.push("no object".into());
                return bad;
            };
            let fp = obj.trajectory.samples[0].pose.ground();
            let fp = Footprint::new(&fp, obj.kind.length, obj.kind.width);
            let touches = crate::actors::footprint_on_road(&run.map, &fp);
            if on_road != touches {
                bad.push(format!("object on_road={on_road} but footprint on road={touches}"));
            }
        }
        ScenarioParams::Plane { mode } => {
            let Some(plane) = run.rollout.actors.first() else {
                bad.push("no plane".into());
                return bad;
            };
            let zs: Vec<f64> = plane.trajectory.samples.iter().map(|s| s.pose.z).collect();
            match mode {
                PlaneMode::Overhead => {
                    if zs.iter().any(|z| *z <= 0.0 || *z != zs[0]) {
                        bad.push("overhead plane altitude not constant".into());
                    }
                }
                PlaneMode::Landing => {
                    let last = plane.trajectory.samples.last().unwrap().pose;
                    let ego_end = ego.last().unwrap().pose.ground();
                    let lat = run.map.localize(&last.ground()).map(|l| l.lateral_offset.abs());
                    if zs.windows(2).any(|w| w[1] > w[0]) || last.z != 0.0 {
                        bad.push("landing altitude not non-increasing to zero".into());
                    }
                    if !lat.is_ok_and(|d| d < 0.5) || ego_end.to_local(last.ground().position())[0] <= 0.0 {
                        bad.push("touchdown not on the ego lane ahead".into());
                    }
                }
            }
        }
        ScenarioParams::Planning { .. } => match run.selected_color() {
            Some(c) if c.label() == truth.label => {}
            other => bad.push(format!("planner chose {other:?}, key says {}", truth.label)),
        },
    }
    bad
}

/// Projected height, at each frame time, of the nearest ego-lane arrow that
/// stays more than 3 m ahead of the camera in every frame.
pub fn arrow_heights(run: &SimulationRun, cam: &CameraModel, times: &[f64]) -> Option<Vec<f64>> {
    let cams: Vec<Pose2> = times
        .iter()
        .map(|t| cam.world_pose(&run.rollout.ego.sample_at(*t).pose).ground())
        .collect();
    let first = run.rollout.ego.sample_at(*times.first()?).pose;
    let ego_lane = run.map.localize(&first.ground()).ok()?.point.lane_id;
    let arrow = arrow_markings(&run.map)
        .into_iter()
        .filter(|a| a.lane_id == ego_lane)
        .filter(|a| cams.iter().all(|c| c.to_local(a.pose.position())[0] > 3.0))
        .min_by(|a, b| a.station.total_cmp(&b.station))?;
    times
        .iter()
        .map(|t| {
            let ego = run.rollout.ego.sample_at(*t).pose;
            projected_bbox(cam, &ego, &arrow.triangles()).map(|b| b[3] - b[1])
        })
        .collect()
}

/// Horizontal image positions of the roadside tree tracked for a curve:
/// outer side of the turn, nearest one that stays well in front of the
/// camera in every frame.
pub fn tree_drift(run: &SimulationRun, cam: &CameraModel, turn: Side, times: &[f64]) -> Option<Vec<f64>> {
    let tracked_side = match turn {
        Side::Left => Side::Right,
        Side::Right => Side::Left,
    };
    let poses: Vec<Pose3> = times.iter().map(|t| run.rollout.ego.sample_at(*t).pose).collect();
    roadside_trees(&run.map)
        .into_iter()
        .filter(|t| t.side == tracked_side)
        .filter_map(|tree| {
            let us: Option<Vec<[f64; 3]>> = poses.iter().map(|p| project(cam, p, tree.trunk_point())).collect();
            let us = us?;
            if us.iter().any(|q| q[2] < 5.0) {
                return None;
            }
            Some((us.last().unwrap()[2], us.iter().map(|q| q[0]).collect::<Vec<_>>()))
        })
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, us)| us)
}

/// Visual motion cues for direction and turning scenes, checked on the
/// projected geometry of the largest frame count.
pub fn check_visual_cues(spec: &ScenarioSpec, run: &SimulationRun, cam: &CameraModel, consts: &ScenarioConstants) -> Vec<String> {
    let times = crate::render::frame_times(spec.max_frames(), consts.frame_interval);
    let mut bad = Vec::new();
    match spec.params {
        ScenarioParams::ForwardBackward { direction, .. } => match arrow_heights(run, cam, &times) {
            Some(h) if strictly(&h, direction == Direction::Forward) => {}
            other => bad.push(format!("arrow heights {other:?} not monotone for {direction:?}")),
        },
        ScenarioParams::LeftRight { side, .. } => match tree_drift(run, cam, side, &times) {
            // left turn: scene sweeps right (u grows); right turn mirrors it
            Some(u) if strictly(&u, side == Side::Left) => {}
            other => bad.push(format!("tree drift {other:?} not monotone for {side:?}")),
        },
        _ => {}
    }
    bad
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(params: ScenarioParams) -> ScenarioSpec {
        ScenarioSpec {
            id: "t".into(),
            category: params.category(),
            params,
            seed: 7,
            frame_counts: params.category().default_frame_counts(),
        }
    }

    #[test]
    fn scripted_traffic_ego_holds_speed() {
        let consts = ScenarioConstants {
            traffic_scripted_ego: true,
            ..Default::default()
        };
        for level in 1..=4 {
            let s = spec(ScenarioParams::Traffic { level });
            let (run, truth) = generate(&s, &consts).unwrap();
            let speeds: Vec<f64> = run.rollout.ego.samples.iter().map(|p| p.speed).collect();
            assert!(speeds.iter().all(|v| (v - speeds[0]).abs() < 1e-9), "level {level}");
            assert!(check_label_contract(&s, &run, &truth, &consts).is_empty(), "level {level}");
        }
    }

    #[test]
    fn labels_from_params() {
        assert_eq!(ScenarioParams::Traffic { level: 4 }.label(), "traffic");
        assert_eq!(ScenarioParams::Traffic { level: 2 }.label(), "no_traffic");
        assert_eq!(ScenarioParams::Planning { config: 3 }.label(), "blue");
        assert_eq!(
            ScenarioParams::OpenSetObject {
                kind: ObjectKind::Animal,
                on_road: false
            }
            .label(),
            "no"
        );
        assert_eq!(
            ScenarioParams::OpenSetObject {
                kind: ObjectKind::StaticObject,
                on_road: false
            }
            .label(),
            "yes"
        );
    }

    #[test]
    fn invalid_params_rejected() {
        let c = ScenarioConstants::default();
        assert!(generate(&spec(ScenarioParams::Traffic { level: 5 }), &c).is_err());
        let mut s = spec(ScenarioParams::Plane { mode: PlaneMode::Landing });
        s.category = Category::Traffic;
        assert!(generate(&s, &c).is_err());
        s = spec(ScenarioParams::Plane { mode: PlaneMode::Landing });
        s.frame_counts = vec![4];
        assert!(generate(&s, &c).is_err());
    }

    #[test]
    fn backward_run_recedes() {
        let c = ScenarioConstants::default();
        let s = spec(ScenarioParams::ForwardBackward {
            level: Level::High,
            direction: Direction::Backward,
        });
        let (run, truth) = generate(&s, &c).unwrap();
        assert_eq!(truth.label, "backward");
        let xs: Vec<f64> = run.rollout.ego.samples.iter().map(|p| p.pose.x).collect();
        assert!(xs.windows(2).all(|w| w[1] < w[0]));
        assert!(check_label_contract(&s, &run, &truth, &c).is_empty());
    }

    #[test]
    fn probes() {
        let c = ScenarioConstants::default();
        let cam = CameraModel::default();
        let s = spec(ScenarioParams::ForwardBackward {
            level: Level::Low,
            direction: Direction::Backward,
        });
        let (run, _) = generate(&s, &c).unwrap();
        let probed = apply_probe(&s, &run, ProbeVariant::AddBarrierBackward).unwrap();
        let barrier = probed.rollout.actors.last().unwrap();
        let tris = crate::render::box_triangles(
            &barrier.trajectory.samples[0].pose,
            barrier.kind.length,
            barrier.kind.width,
            barrier.kind.height,
        );
        let sizes: Vec<f64> = crate::render::frame_times(9, 0.5)
            .iter()
            .map(|t| {
                let b = projected_bbox(&cam, &probed.rollout.ego.sample_at(*t).pose, &tris).unwrap();
                b[3] - b[1]
            })
            .collect();
        assert!(sizes.windows(2).all(|w| w[1] < w[0]));

        let s = spec(ScenarioParams::Speeding {
            speed_level: SpeedLevel::SpeedingLow,
        });
        let (run, _) = generate(&s, &c).unwrap();
        let probed = apply_probe(&s, &run, ProbeVariant::AddReferenceVehicle).unwrap();
        let reference = probed.rollout.actors.last().unwrap();
        let gaps: Vec<f64> = probed
            .rollout
            .ego
            .samples
            .iter()
            .map(|e| reference.trajectory.sample_at(e.t).pose.x - e.pose.x)
            .collect();
        let (lo, hi) = gaps.iter().fold((f64::MAX, f64::MIN), |(a, b), g| (a.min(*g), b.max(*g)));
        assert!(hi - lo < 0.1);

        let s = spec(ScenarioParams::Traffic { level: 3 });
        let (run, _) = generate(&s, &c).unwrap();
        assert!(matches!(
            apply_probe(&s, &run, ProbeVariant::AddBarrierBackward),
            Err(ScenarioError::IncompatibleProbe { .. })
        ));
    }

    #[test]
    fn suite_balance_and_determinism() {
        let cfg = SuiteConfig::default();
        let a = build_suite(&cfg).unwrap();
        assert_eq!(a, build_suite(&cfg).unwrap());
        let speeding: Vec<_> = a.iter().filter(|s| s.category == Category::Speeding).collect();
        assert_eq!(speeding.len(), 60);
        assert_eq!(speeding.iter().filter(|s| s.params.label() == "speeding").count(), 30);
        for cat in Category::ALL {
            for label in cat.answer_set() {
                assert!(a.iter().any(|s| s.category == cat && s.params.label() == *label), "{cat} {label}");
            }
        }
        for cat in Category::ALL.into_iter().filter(|c| *c != Category::Planning) {
            let n = a.iter().filter(|s| s.category == cat).count();
            let first = cat.answer_set()[0];
            let k = a.iter().filter(|s| s.category == cat && s.params.label() == first).count();
            assert_eq!(2 * k, n, "{cat}");
        }
    }

    #[test]
    fn manifest_records_and_round_trip() {
        let s = spec(ScenarioParams::Traffic { level: 1 });
        let truth = GroundTruth::for_params(&s.params);
        let records = manifest_records(&s, &truth, None);
        assert_eq!(records.len(), 3);
        let m = Manifest {
            format_version: MANIFEST_FORMAT_VERSION,
            records,
        };
        assert_eq!(Manifest::parse(&m.to_json().unwrap()).unwrap(), m);
        let empty = export_manifest(vec![], Path::new("/nonexistent")).unwrap();
        assert!(empty.records.is_empty());
        assert!(matches!(
            export_manifest(m.records.clone(), Path::new("/nonexistent")),
            Err(ScenarioError::MissingFile(_))
        ));
    }
}
