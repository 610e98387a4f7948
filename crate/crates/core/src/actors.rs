//! Synthetic actors: catalog of kinds, map-aware placement, spline and
//! controller-driven motion, and the plane's flight paths.

use serde::{Deserialize, Serialize};

use crate::control::{
    idm_accel, path_tracking_error, pid_step, select_idm_lead, steering_command, IdmParams,
    LeadCandidate, PidGains, PidState,
};
use crate::dynamics::{step_bicycle, ControlAccelSteerRate, VehicleParams, VehicleState};
use crate::geom::{polygons_overlap, Footprint, Pose2};
pub use crate::geom::Pose3;
use crate::planning::{Trajectory, TrajectorySample};
use crate::worldmap::{AnchorKind, MapError, MapGraph, Side};

pub const CATALOG_FORMAT_VERSION: u32 = 1;
/// Sample period of scripted trajectories.
pub const SPLINE_DT: f64 = 0.01;
const ARC_TABLE_SIZE: usize = 2000;

const DEFAULT_CATALOG: &str = include_str!("../assets/actor_catalog.json");

#[derive(Debug, thiserror::Error)]
pub enum ActorError {
    #[error("no {0:?} anchor on the map")]
    MissingAnchor(AnchorKind),
    #[error("placement {along:.1} m ahead is off the lane graph")]
    Unreachable { along: f64 },
    #[error("no off-road position found")]
    NoOffRoadSpot,
    #[error("duration must be positive, got {0}")]
    NonPositiveDuration(f64),
    #[error("unknown actor kind {0}")]
    UnknownKind(String),
    #[error("unsupported catalog format_version {0}")]
    UnsupportedVersion(u32),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActorClass {
    Vehicle,
    Animal,
    StaticObject,
    Barrier,
    Plane,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenderPrimitive {
    Box,
    Billboard,
    PlaneCompound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorKind {
    pub name: String,
    pub class: ActorClass,
    pub primitive: RenderPrimitive,
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub color: [u8; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorCatalog {
    pub format_version: u32,
    pub kinds: Vec<ActorKind>,
}

impl ActorCatalog {
    pub fn from_json(text: &str) -> Result<Self, ActorError> {
        let catalog: ActorCatalog = serde_json::from_str(text)?;
        if catalog.format_version != CATALOG_FORMAT_VERSION {
            return Err(ActorError::UnsupportedVersion(catalog.format_version));
        }
        Ok(catalog)
    }

    pub fn get(&self, name: &str) -> Result<&ActorKind, ActorError> {
        self.kinds
            .iter()
            .find(|k| k.name == name)
            .ok_or_else(|| ActorError::UnknownKind(name.to_string()))
    }
}

impl Default for ActorCatalog {
    fn default() -> Self {
        Self::from_json(DEFAULT_CATALOG).expect("bundled catalog is valid")
    }
}

/// Vehicle steered by PID lane tracking and accelerated by IDM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlledVehicle {
    pub state: VehicleState,
    pub params: VehicleParams,
    pub idm: IdmParams,
    pub gains: PidGains,
    pub pid: PidState,
}

impl ControlledVehicle {
    pub fn new(state: VehicleState, idm: IdmParams) -> Self {
        Self {
            state,
            params: VehicleParams::default(),
            idm,
            gains: PidGains::default(),
            pid: PidState::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Motion {
    Static(Pose3),
    Scripted(Trajectory),
    Controlled(ControlledVehicle),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Actor {
    pub id: u32,
    pub kind: ActorKind,
    pub motion: Motion,
}

impl Actor {
    /// Pose at time `t`; controller-driven actors report their current state.
    pub fn pose_at(&self, t: f64) -> Pose3 {
        match &self.motion {
            Motion::Static(p) => *p,
            Motion::Scripted(traj) => traj.sample_at(t).pose,
            Motion::Controlled(v) => v.state.pose.lift(0.0),
        }
    }

    pub fn speed_at(&self, t: f64) -> f64 {
        match &self.motion {
            Motion::Static(_) => 0.0,
            Motion::Scripted(traj) => traj.sample_at(t).speed,
            Motion::Controlled(v) => v.state.speed,
        }
    }

    pub fn footprint_at(&self, t: f64) -> Footprint {
        Footprint::new(&self.pose_at(t).ground(), self.kind.length, self.kind.width)
    }

    /// View used by other vehicles' lead selection. Airborne actors are not
    /// obstacles.
    pub fn as_lead_candidate(&self, t: f64) -> Option<LeadCandidate> {
        let pose = self.pose_at(t);
        if pose.z > 0.0 {
            return None;
        }
        Some(LeadCandidate {
            state: VehicleState::new(pose.ground(), self.speed_at(t)),
            length: self.kind.length,
        })
    }
}

/// Recorded motion of one actor over a rollout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorTrack {
    pub id: u32,
    pub kind: ActorKind,
    pub trajectory: Trajectory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlacementKind {
    BesideEgoLane,
    OnStopLine,
    UnderTrafficLight,
    OnRoadAhead,
    OffRoad,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlacementRule {
    pub kind: PlacementKind,
    pub margin: f64,
    pub along_distance: f64,
    pub side: Side,
}

impl PlacementRule {
    pub fn new(kind: PlacementKind, along_distance: f64) -> Self {
        Self {
            kind,
            margin: 0.5,
            along_distance,
            side: Side::Right,
        }
    }
}

fn anchor_pose(map: &MapGraph, ego: &VehicleState, kind: AnchorKind) -> Result<Pose3, ActorError> {
    let lane = map.localize(&ego.pose).ok().map(|l| l.point.lane_id);
    let chain = lane.map(|l| map.lane_chain(l, 8)).unwrap_or_default();
    let candidates: Vec<_> = map.anchors().iter().filter(|a| a.kind == kind).collect();
    let pick = candidates
        .iter()
        .find(|a| chain.contains(&a.lane_id))
        .or_else(|| candidates.first())
        .ok_or(ActorError::MissingAnchor(kind))?;
    Ok(pick.pose.lift(0.0))
}

/// Footprint overlaps some lane polygon.
pub fn footprint_on_road(map: &MapGraph, fp: &Footprint) -> bool {
    let corners = fp.corners();
    map.segments().any(|s| polygons_overlap(&corners, &s.polygon()))
}

/// Pose satisfying a semantic placement rule relative to the ego.
pub fn place_actor(
    map: &MapGraph,
    ego: &VehicleState,
    rule: &PlacementRule,
    kind: &ActorKind,
) -> Result<Pose3, ActorError> {
    match rule.kind {
        PlacementKind::OnStopLine => return anchor_pose(map, ego, AnchorKind::StopLine),
        PlacementKind::UnderTrafficLight => return anchor_pose(map, ego, AnchorKind::TrafficLight),
        _ => {}
    }
    let loc = map.localize(&ego.pose)?;
    let ahead = map
        .advance_along_lane(&loc.point, rule.along_distance.max(0.0))
        .map_err(|_| ActorError::Unreachable {
            along: rule.along_distance,
        })?;
    let half_lane = map.segment(ahead.lane_id)?.width / 2.0;
    let sign = rule.side.sign();
    match rule.kind {
        PlacementKind::OnRoadAhead => Ok(ahead.pose.lift(0.0)),
        PlacementKind::BesideEgoLane => {
            let off = sign * (half_lane + rule.margin + kind.width / 2.0);
            Ok(ahead.pose.offset_left(off).lift(0.0))
        }
        PlacementKind::OffRoad => {
            let mut off = half_lane + rule.margin + kind.width / 2.0;
            for _ in 0..200 {
                let pose = ahead.pose.offset_left(sign * off);
                let fp = Footprint::new(&pose, kind.length, kind.width);
                if !footprint_on_road(map, &fp) {
                    let clear = ahead.pose.offset_left(sign * (off + rule.margin));
                    return Ok(clear.lift(0.0));
                }
                off += 0.5;
            }
            Err(ActorError::NoOffRoadSpot)
        }
        PlacementKind::OnStopLine | PlacementKind::UnderTrafficLight => unreachable!(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeedProfile {
    Uniform,
    Ease,
}

struct Hermite {
    p0: [f64; 2],
    p1: [f64; 2],
    m0: [f64; 2],
    m1: [f64; 2],
}

impl Hermite {
    fn point(&self, u: f64) -> [f64; 2] {
        let (u2, u3) = (u * u, u * u * u);
        let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
        let h10 = u3 - 2.0 * u2 + u;
        let h01 = -2.0 * u3 + 3.0 * u2;
        let h11 = u3 - u2;
        [0, 1].map(|i| h00 * self.p0[i] + h10 * self.m0[i] + h01 * self.p1[i] + h11 * self.m1[i])
    }

    fn tangent(&self, u: f64) -> [f64; 2] {
        let u2 = u * u;
        let d00 = 6.0 * u2 - 6.0 * u;
        let d10 = 3.0 * u2 - 4.0 * u + 1.0;
        let d01 = -6.0 * u2 + 6.0 * u;
        let d11 = 3.0 * u2 - 2.0 * u;
        [0, 1].map(|i| d00 * self.p0[i] + d10 * self.m0[i] + d01 * self.p1[i] + d11 * self.m1[i])
    }
}

/// Cubic Hermite path between two poses (tangent length = endpoint
/// distance), traversed with the requested speed profile and sampled every
/// [`SPLINE_DT`]. Altitude follows the same progress fraction.
pub fn spline_trajectory(
    start: &Pose3,
    end: &Pose3,
    duration: f64,
    profile: SpeedProfile,
) -> Result<Trajectory, ActorError> {
    if !(duration > 0.0) {
        return Err(ActorError::NonPositiveDuration(duration));
    }
    let p0 = [start.x, start.y];
    let p1 = [end.x, end.y];
    let dist = (p1[0] - p0[0]).hypot(p1[1] - p0[1]);
    let curve = Hermite {
        p0,
        p1,
        m0: [dist * start.heading.cos(), dist * start.heading.sin()],
        m1: [dist * end.heading.cos(), dist * end.heading.sin()],
    };
    // cumulative arc length over a uniform parameter grid
    let mut table = Vec::with_capacity(ARC_TABLE_SIZE + 1);
    table.push(0.0);
    let mut prev = curve.point(0.0);
    for k in 1..=ARC_TABLE_SIZE {
        let p = curve.point(k as f64 / ARC_TABLE_SIZE as f64);
        let last = *table.last().unwrap();
        table.push(last + (p[0] - prev[0]).hypot(p[1] - prev[1]));
        prev = p;
    }
    let total = table[ARC_TABLE_SIZE];
    let param_at = |s: f64| -> f64 {
        if total <= 0.0 {
            return 0.0;
        }
        let i = table.partition_point(|x| *x < s).clamp(1, ARC_TABLE_SIZE);
        let (a, b) = (table[i - 1], table[i]);
        let f = if b > a { (s - a) / (b - a) } else { 0.0 };
        ((i - 1) as f64 + f.clamp(0.0, 1.0)) / ARC_TABLE_SIZE as f64
    };
    let progress = |tau: f64| -> (f64, f64) {
        match profile {
            SpeedProfile::Uniform => (tau, 1.0),
            SpeedProfile::Ease => (tau * tau * (3.0 - 2.0 * tau), 6.0 * tau * (1.0 - tau)),
        }
    };

    let steps = (duration / SPLINE_DT - 1e-9).ceil().max(1.0) as usize;
    let mut samples = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let t = if k == steps {
            duration
        } else {
            k as f64 * SPLINE_DT
        };
        let (frac, rate) = progress(t / duration);
        let speed = total * rate / duration;
        let pose = if k == 0 {
            *start
        } else if k == steps {
            *end
        } else if total <= 0.0 {
            *start
        } else {
            let u = param_at(frac * total);
            let p = curve.point(u);
            let d = curve.tangent(u);
            let heading = if d[0].hypot(d[1]) > 1e-12 {
                d[1].atan2(d[0])
            } else {
                start.heading
            };
            Pose3::new(p[0], p[1], start.z + (end.z - start.z) * frac, heading)
        };
        samples.push(TrajectorySample { t, pose, speed });
    }
    Ok(Trajectory::new(samples))
}

/// Advances a controller-driven vehicle one step: PID steering on the lane
/// tracking error (plus curvature feed-forward), IDM on the nearest
/// relevant leader.
pub fn step_controlled(
    vehicle: &ControlledVehicle,
    length: f64,
    map: &MapGraph,
    others: &[LeadCandidate],
    dt: f64,
) -> ControlledVehicle {
    let state = &vehicle.state;
    let (steer_target, pid) = match path_tracking_error(state, map) {
        Ok(err) => {
            let (cmd, pid) = pid_step(&vehicle.pid, &vehicle.gains, err, dt);
            let ff = map
                .localize(&state.pose)
                .map(|l| (vehicle.params.wheelbase * map.curvature_at(&l.point)).atan())
                .unwrap_or(0.0);
            (ff + steering_command(cmd), pid)
        }
        Err(_) => (state.steering_angle, vehicle.pid),
    };
    let lead = select_idm_lead(state, length, map, others);
    let accel = idm_accel(&vehicle.idm, state.speed, lead.as_ref());
    let u = ControlAccelSteerRate {
        accel,
        steer_rate: (steer_target - state.steering_angle) / dt,
    };
    ControlledVehicle {
        state: step_bicycle(state, &vehicle.params, u, dt),
        pid,
        ..*vehicle
    }
}

/// One tick for a controller-driven actor against a snapshot of all actors
/// (itself excluded by id). Other motion modes are returned unchanged.
pub fn step_traffic_vehicle(actor: &Actor, map: &MapGraph, all_actors: &[Actor], t: f64, dt: f64) -> Actor {
    let Motion::Controlled(v) = &actor.motion else {
        return actor.clone();
    };
    let others: Vec<LeadCandidate> = all_actors
        .iter()
        .filter(|a| a.id != actor.id)
        .filter_map(|a| a.as_lead_candidate(t))
        .collect();
    Actor {
        motion: Motion::Controlled(step_controlled(v, actor.kind.length, map, &others, dt)),
        ..actor.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlaneMode {
    Landing,
    Overhead,
}

/// Distance ahead of the ego at which a landing plane touches down.
pub const TOUCHDOWN_AHEAD: f64 = 80.0;
const OVERHEAD_START_AHEAD: f64 = 250.0;
const OVERHEAD_SPEED: f64 = 55.0;
const LANDING_SPEED: f64 = 40.0;

/// Head-on flight along the ego lane: constant altitude for `Overhead`, a
/// monotone descent ending on the ego lane centerline for `Landing`.
pub fn plane_trajectory(
    mode: PlaneMode,
    map: &MapGraph,
    ego: &VehicleState,
    cruise_altitude: f64,
    duration: f64,
) -> Result<Trajectory, ActorError> {
    if !(duration > 0.0) {
        return Err(ActorError::NonPositiveDuration(duration));
    }
    let loc = map.localize(&ego.pose)?;
    let steps = (duration / SPLINE_DT - 1e-9).ceil().max(1.0) as usize;
    let sample_times = (0..=steps).map(move |k| {
        if k == steps {
            duration
        } else {
            k as f64 * SPLINE_DT
        }
    });
    let samples = match mode {
        PlaneMode::Overhead => {
            let frame = loc.point.pose;
            sample_times
                .map(|t| {
                    let p = frame.to_world([OVERHEAD_START_AHEAD - OVERHEAD_SPEED * t, 0.0]);
                    TrajectorySample {
                        t,
                        pose: Pose3::new(p[0], p[1], cruise_altitude, frame.heading + std::f64::consts::PI),
                        speed: OVERHEAD_SPEED,
                    }
                })
                .collect()
        }
        PlaneMode::Landing => {
            let touchdown = map
                .advance_along_lane(&loc.point, TOUCHDOWN_AHEAD)
                .map_err(|_| ActorError::Unreachable {
                    along: TOUCHDOWN_AHEAD,
                })?
                .pose;
            sample_times
                .map(|t| {
                    let tau = t / duration;
                    let remaining = LANDING_SPEED * (duration - t);
                    let p = touchdown.to_world([remaining, 0.0]);
                    let z = if t == duration {
                        0.0
                    } else {
                        cruise_altitude * (1.0 - tau * tau * (3.0 - 2.0 * tau))
                    };
                    TrajectorySample {
                        t,
                        pose: Pose3::new(p[0], p[1], z.max(0.0), touchdown.heading + std::f64::consts::PI),
                        speed: LANDING_SPEED,
                    }
                })
                .collect()
        }
    };
    Ok(Trajectory::new(samples))
}

/// Ground pose helper for callers that only need the planar part.
pub fn ground_pose(p: &Pose3) -> Pose2 {
    p.ground()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::point_in_polygon;
    use crate::worldmap::{build_straight_map, SemanticAnchor};

    fn catalog() -> ActorCatalog {
        ActorCatalog::default()
    }

    #[test]
    fn bundled_catalog_covers_every_class() {
        let c = catalog();
        for class in [
            ActorClass::Vehicle,
            ActorClass::Animal,
            ActorClass::StaticObject,
            ActorClass::Barrier,
            ActorClass::Plane,
        ] {
            assert!(c.kinds.iter().any(|k| k.class == class), "{class:?}");
        }
        assert!(matches!(c.get("unicorn"), Err(ActorError::UnknownKind(_))));
    }

    #[test]
    fn stop_line_placement_is_anchor_pose() {
        let anchor = SemanticAnchor {
            kind: AnchorKind::StopLine,
            pose: Pose2::new(40.0, 0.0, 0.0),
            lane_id: crate::worldmap::LaneId(0),
        };
        let map = build_straight_map(100.0, 3.5, 0, 1.0)
            .unwrap()
            .with_anchor(anchor)
            .unwrap();
        let ego = VehicleState::new(Pose2::new(5.0, 0.0, 0.0), 5.0);
        let kind = catalog().get("crate").unwrap().clone();
        let rule = PlacementRule::new(PlacementKind::OnStopLine, 0.0);
        assert_eq!(place_actor(&map, &ego, &rule, &kind).unwrap(), anchor.pose.lift(0.0));
        let rule = PlacementRule::new(PlacementKind::UnderTrafficLight, 0.0);
        assert!(matches!(
            place_actor(&map, &ego, &rule, &kind),
            Err(ActorError::MissingAnchor(AnchorKind::TrafficLight))
        ));
    }

    #[test]
    fn beside_lane_offset() {
        let map = build_straight_map(100.0, 3.5, 0, 1.0).unwrap();
        let ego = VehicleState::new(Pose2::new(5.0, 0.0, 0.0), 5.0);
        let kind = ActorKind {
            width: 1.0,
            ..catalog().get("deer").unwrap().clone()
        };
        let rule = PlacementRule {
            margin: 0.5,
            ..PlacementRule::new(PlacementKind::BesideEgoLane, 20.0)
        };
        let p = place_actor(&map, &ego, &rule, &kind).unwrap();
        assert!((p.y.abs() - 2.75).abs() < 1e-12);
        assert!((p.x - 25.0).abs() < 1e-12);
    }

    #[test]
    fn off_road_corners_outside_lanes() {
        let map = build_straight_map(100.0, 3.5, 2, 1.0).unwrap();
        let ego = VehicleState::new(Pose2::new(5.0, 0.0, 0.0), 5.0);
        let kind = catalog().get("crate").unwrap().clone();
        for side in [Side::Left, Side::Right] {
            let rule = PlacementRule {
                side,
                ..PlacementRule::new(PlacementKind::OffRoad, 30.0)
            };
            let p = place_actor(&map, &ego, &rule, &kind).unwrap();
            let fp = Footprint::new(&p.ground(), kind.length, kind.width);
            for seg in map.segments() {
                let poly = seg.polygon();
                for c in fp.corners() {
                    assert!(!point_in_polygon(c, &poly));
                }
            }
        }
    }

    #[test]
    fn unreachable_placement() {
        let map = build_straight_map(30.0, 3.5, 0, 1.0).unwrap();
        let ego = VehicleState::new(Pose2::new(5.0, 0.0, 0.0), 5.0);
        let kind = catalog().get("crate").unwrap().clone();
        let rule = PlacementRule::new(PlacementKind::OnRoadAhead, 50.0);
        assert!(matches!(
            place_actor(&map, &ego, &rule, &kind),
            Err(ActorError::Unreachable { .. })
        ));
    }

    #[test]
    fn spline_endpoints_and_constant_case() {
        let a = Pose3::new(0.0, 0.0, 0.0, 0.3);
        let b = Pose3::new(20.0, 5.0, 0.0, -0.2);
        let tr = spline_trajectory(&a, &b, 3.0, SpeedProfile::Ease).unwrap();
        assert_eq!(tr.samples[0].pose, a);
        assert_eq!(tr.samples.last().unwrap().pose, b);
        assert_eq!(tr.duration(), 3.0);
        let still = spline_trajectory(&a, &a, 1.0, SpeedProfile::Uniform).unwrap();
        assert!(still.samples.iter().all(|s| s.pose == a && s.speed == 0.0));
        assert!(spline_trajectory(&a, &b, 0.0, SpeedProfile::Uniform).is_err());
    }

    #[test]
    fn plane_modes() {
        let map = build_straight_map(400.0, 3.5, 0, 1.0).unwrap();
        let ego = VehicleState::new(Pose2::new(20.0, 0.0, 0.0), 8.0);
        let over = plane_trajectory(PlaneMode::Overhead, &map, &ego, 40.0, 5.0).unwrap();
        assert!(over.samples.iter().all(|s| s.pose.z == 40.0));
        let land = plane_trajectory(PlaneMode::Landing, &map, &ego, 40.0, 5.0).unwrap();
        let last = land.samples.last().unwrap().pose;
        assert_eq!(last.z, 0.0);
        let loc = map.nearest_sample_point(&last.ground()).unwrap();
        assert!(loc.lateral_offset.abs() < 0.5);
        assert!(last.x > ego.pose.x);
    }
    fn vehicle(id: u32, x: f64, y: f64, v: f64, v0: f64) -> Actor {
        Actor {
            id,
            kind: catalog().get("sedan").unwrap().clone(),
            motion: Motion::Controlled(ControlledVehicle::new(
                VehicleState::new(Pose2::new(x, y, 0.0), v),
                IdmParams::with_desired_speed(v0),
            )),
        }
    }

    fn run(map: &MapGraph, mut actors: Vec<Actor>, seconds: f64, mut check: impl FnMut(&[Actor])) -> Vec<Actor> {
        let dt = crate::dynamics::SIM_DT;
        let steps = (seconds / dt).round() as usize;
        for k in 0..steps {
            let snapshot = actors.clone();
            actors = snapshot
                .iter()
                .map(|a| step_traffic_vehicle(a, map, &snapshot, k as f64 * dt, dt))
                .collect();
            check(&actors);
        }
        actors
    }

    fn state(a: &Actor) -> VehicleState {
        match &a.motion {
            Motion::Controlled(v) => v.state,
            _ => panic!("not controlled"),
        }
    }

    #[test]
    fn free_road_holds_desired_speed() {
        let map = build_straight_map(300.0, 3.5, 0, 1.0).unwrap();
        let out = run(&map, vec![vehicle(0, 5.0, 0.0, 10.0, 10.0)], 10.0, |a| {
            assert!((state(&a[0]).speed - 10.0).abs() <= 0.1);
        });
        assert!((state(&out[0]).speed - 10.0).abs() <= 0.1);
    }

    #[test]
    fn follower_stops_at_min_gap() {
        let map = build_straight_map(300.0, 3.5, 0, 1.0).unwrap();
        let leader = Actor {
            id: 1,
            kind: catalog().get("sedan").unwrap().clone(),
            motion: Motion::Static(Pose3::new(100.0, 0.0, 0.0, 0.0)),
        };
        let out = run(&map, vec![vehicle(0, 40.0, 0.0, 10.0, 13.9), leader], 120.0, |_| {});
        let f = state(&out[0]);
        let gap = 100.0 - f.pose.x - 4.5;
        assert!(f.speed < 1e-3, "speed {}", f.speed);
        assert!((gap - 2.0).abs() <= 0.2, "gap {gap}");
    }

    #[test]
    fn lateral_offset_recovers() {
        let map = build_straight_map(300.0, 3.5, 0, 1.0).unwrap();
        let out = run(&map, vec![vehicle(0, 5.0, 1.0, 8.0, 8.0)], 10.0, |_| {});
        assert!(state(&out[0]).pose.y.abs() < 0.05);
    }

    #[test]
    fn platoon_never_overlaps() {
        let map = build_straight_map(1200.0, 3.5, 0, 1.0).unwrap();
        let speeds = [6.0, 9.0, 12.0, 8.0, 13.9];
        let actors: Vec<Actor> = (0..5)
            .map(|i| vehicle(i, 10.0 + 12.0 * i as f64, 0.0, 6.0, speeds[i as usize]))
            .collect();
        run(&map, actors, 60.0, |a| {
            for i in 0..a.len() {
                for j in i + 1..a.len() {
                    assert!(!a[i].footprint_at(0.0).intersects(&a[j].footprint_at(0.0)));
                }
            }
        });
    }
}
