//! State-lattice planner: terminal states a fixed distance ahead in the
//! current (and optionally adjacent) lanes, joined to the ego by quintic
//! lateral profiles, collision-checked and ranked.

use serde::{Deserialize, Serialize};

use crate::dynamics::VehicleState;
use crate::geom::{angle_diff, Footprint, Pose2, Pose3};
use crate::worldmap::{LaneId, LanePoint, MapError, MapGraph};

const BOUNDARY_TOL: f64 = 1e-9;
/// Collision checks sample the ego footprint at this period.
pub const COLLISION_DT: f64 = 0.1;
pub const TRAJECTORY_DT: f64 = 0.05;

#[derive(Debug, thiserror::Error)]
pub enum PlanError {
    #[error("trajectory duration must be positive, got {0}")]
    NonPositiveDuration(f64),
    #[error("time {t} outside [0, {duration}]")]
    OutOfRange { t: f64, duration: f64 },
    #[error("no lattice targets")]
    NoTargets,
    #[error("every candidate collides")]
    NoPlan { candidates: Vec<PlanCandidate> },
    #[error(transparent)]
    Map(#[from] MapError),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BoundaryState {
    pub position: f64,
    pub velocity: f64,
    pub acceleration: f64,
}

impl BoundaryState {
    pub fn new(position: f64, velocity: f64, acceleration: f64) -> Self {
        Self {
            position,
            velocity,
            acceleration,
        }
    }
}

/// `c[0] + c[1]·t + … + c[5]·t⁵` on `[0, duration]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuinticCoeffs {
    pub c: [f64; 6],
    pub duration: f64,
}

/// Fits the unique quintic matching position, velocity and acceleration at
/// both ends. The lower three coefficients follow from the start state; the
/// upper three solve the remaining 3×3 system in closed form.
pub fn quintic_fit(
    start: &BoundaryState,
    end: &BoundaryState,
    duration: f64,
) -> Result<QuinticCoeffs, PlanError> {
    if !(duration > 0.0) {
        return Err(PlanError::NonPositiveDuration(duration));
    }
    let t = duration;
    let (t2, t3) = (t * t, t * t * t);
    let c0 = start.position;
    let c1 = start.velocity;
    let c2 = 0.5 * start.acceleration;
    // residuals after the start-state terms
    let dp = end.position - (c0 + c1 * t + c2 * t2);
    let dv = end.velocity - (c1 + 2.0 * c2 * t);
    let da = end.acceleration - 2.0 * c2;
    let c3 = (20.0 * dp - 8.0 * dv * t + da * t2) / (2.0 * t3);
    let c4 = (-30.0 * dp + 14.0 * dv * t - 2.0 * da * t2) / (2.0 * t3 * t);
    let c5 = (12.0 * dp - 6.0 * dv * t + da * t2) / (2.0 * t3 * t2);
    Ok(QuinticCoeffs {
        c: [c0, c1, c2, c3, c4, c5],
        duration,
    })
}

impl QuinticCoeffs {
    fn eval_unchecked(&self, t: f64) -> BoundaryState {
        let c = &self.c;
        BoundaryState {
            position: c[0] + t * (c[1] + t * (c[2] + t * (c[3] + t * (c[4] + t * c[5])))),
            velocity: c[1] + t * (2.0 * c[2] + t * (3.0 * c[3] + t * (4.0 * c[4] + t * 5.0 * c[5]))),
            acceleration: 2.0 * c[2] + t * (6.0 * c[3] + t * (12.0 * c[4] + t * 20.0 * c[5])),
        }
    }
}

/// Position and first two derivatives at `t`.
pub fn quintic_eval(c: &QuinticCoeffs, t: f64) -> Result<BoundaryState, PlanError> {
    if !(t >= -BOUNDARY_TOL && t <= c.duration + BOUNDARY_TOL) {
        return Err(PlanError::OutOfRange {
            t,
            duration: c.duration,
        });
    }
    Ok(c.eval_unchecked(t.clamp(0.0, c.duration)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub pose: Pose3,
    pub speed: f64,
}

/// Timed pose sequence starting at `t = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
}

impl Trajectory {
    pub fn new(samples: Vec<TrajectorySample>) -> Self {
        debug_assert!(samples.first().is_some_and(|s| s.t == 0.0));
        debug_assert!(samples.windows(2).all(|w| w[1].t > w[0].t));
        Self { samples }
    }

    pub fn duration(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.t)
    }

    /// Interpolated sample, clamped to the trajectory's time span.
    pub fn sample_at(&self, t: f64) -> TrajectorySample {
        let s = &self.samples;
        if t <= 0.0 || s.len() == 1 {
            return s[0];
        }
        if t >= self.duration() {
            return *s.last().unwrap();
        }
        let i = s.partition_point(|x| x.t <= t);
        let (a, b) = (&s[i - 1], &s[i]);
        let f = (t - a.t) / (b.t - a.t);
        TrajectorySample {
            t,
            pose: a.pose.lerp(&b.pose, f),
            speed: a.speed + (b.speed - a.speed) * f,
        }
    }

    /// Ground-plane polyline through the samples.
    pub fn polyline(&self) -> Vec<[f64; 2]> {
        self.samples.iter().map(|s| [s.pose.x, s.pose.y]).collect()
    }

    pub fn path_length(&self) -> f64 {
        self.samples
            .windows(2)
            .map(|w| {
                let (a, b) = (&w[0].pose, &w[1].pose);
                ((b.x - a.x).powi(2) + (b.y - a.y).powi(2) + (b.z - a.z).powi(2)).sqrt()
            })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanConfig {
    pub lookahead: f64,
    pub lateral_offsets: Vec<f64>,
    pub horizon: f64,
    pub include_adjacent: bool,
    pub w_lat: f64,
    pub w_dev: f64,
    /// Ego footprint, length × width.
    pub ego_size: [f64; 2],
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self {
            lookahead: 20.0,
            lateral_offsets: vec![-1.2, 0.0, 1.2],
            horizon: 4.0,
            include_adjacent: false,
            w_lat: 1.0,
            w_dev: 0.5,
            ego_size: [4.5, 1.8],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeTarget {
    pub lane_point: LanePoint,
    /// Offset from the target lane's centerline.
    pub lateral_offset: f64,
    /// Offset from the ego lane's centerline.
    pub offset_from_ego_lane: f64,
    pub pose: Pose2,
    pub speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanColor {
    Red,
    Green,
    Blue,
}

impl PlanColor {
    pub fn rgb(self) -> [u8; 3] {
        match self {
            PlanColor::Red => [220, 30, 30],
            PlanColor::Green => [30, 200, 60],
            PlanColor::Blue => [40, 80, 230],
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            PlanColor::Red => "red",
            PlanColor::Green => "green",
            PlanColor::Blue => "blue",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanCandidate {
    pub trajectory: Trajectory,
    pub target: LatticeTarget,
    pub cost: f64,
    pub collides: bool,
    pub color_tag: Option<PlanColor>,
}

/// Polyline + colour handed to the renderer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateExport {
    pub color: PlanColor,
    pub points: Vec<[f64; 2]>,
}

impl PlanCandidate {
    pub fn export(&self) -> Option<CandidateExport> {
        self.color_tag.map(|color| CandidateExport {
            color,
            points: self.trajectory.polyline(),
        })
    }
}

fn lanes_for(map: &MapGraph, lane: LaneId, include_adjacent: bool) -> Result<Vec<LaneId>, MapError> {
    let seg = map.segment(lane)?;
    let mut lanes = vec![lane];
    if include_adjacent {
        lanes.extend(seg.adjacent_left);
        lanes.extend(seg.adjacent_right);
    }
    Ok(lanes)
}

/// Terminal states `lookahead` metres ahead of the ego in its lane (and
/// adjacent lanes when enabled), one per lateral offset.
pub fn lattice_targets(
    map: &MapGraph,
    ego: &VehicleState,
    cfg: &PlanConfig,
) -> Result<Vec<LatticeTarget>, PlanError> {
    let ego_loc = map.localize(&ego.pose)?;
    let ego_lane_start = ego_loc.point;
    let ego_lane_end = map.advance_along_lane(&ego_lane_start, cfg.lookahead)?;
    let mut targets = Vec::new();
    for lane in lanes_for(map, ego_loc.point.lane_id, cfg.include_adjacent)? {
        let start = if lane == ego_loc.point.lane_id {
            ego_lane_start
        } else {
            let raw = map.nearest_on_lane(lane, &ego.pose)?;
            map.project(&raw, &ego.pose).point
        };
        let end = map.advance_along_lane(&start, cfg.lookahead)?;
        let lane_offset = ego_lane_end.pose.to_local(end.pose.position())[1];
        for &offset in &cfg.lateral_offsets {
            targets.push(LatticeTarget {
                lane_point: end,
                lateral_offset: offset,
                offset_from_ego_lane: lane_offset + offset,
                pose: end.pose.offset_left(offset),
                speed: ego.speed,
            });
        }
    }
    Ok(targets)
}

/// True iff the ego footprint, sampled every [`COLLISION_DT`], touches any
/// obstacle.
pub fn collision_check(traj: &Trajectory, obstacles: &[Footprint], ego_size: [f64; 2]) -> bool {
    collision_check_sampled(traj, obstacles, ego_size, COLLISION_DT)
}

pub fn collision_check_sampled(
    traj: &Trajectory,
    obstacles: &[Footprint],
    ego_size: [f64; 2],
    period: f64,
) -> bool {
    if obstacles.is_empty() || traj.samples.is_empty() {
        return false;
    }
    let steps = (traj.duration() / period - 1e-9).ceil().max(0.0) as usize;
    (0..=steps).any(|k| {
        let s = traj.sample_at((k as f64 * period).min(traj.duration()));
        let fp = Footprint::new(&s.pose.ground(), ego_size[0], ego_size[1]);
        obstacles.iter().any(|o| fp.intersects(o))
    })
}

fn color_for(offsets: &[f64], offset: f64) -> Option<PlanColor> {
    if offsets.len() != 3 {
        return None;
    }
    let mut sorted = offsets.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = sorted.iter().position(|o| *o == offset)?;
    Some([PlanColor::Red, PlanColor::Green, PlanColor::Blue][rank])
}

/// Builds one candidate per lattice target and ranks them: non-colliding
/// before colliding, then by cost, then smallest |offset|, then leftmost.
pub fn plan(
    map: &MapGraph,
    ego: &VehicleState,
    obstacles: &[Footprint],
    cfg: &PlanConfig,
) -> Result<Vec<PlanCandidate>, PlanError> {
    let targets = lattice_targets(map, ego, cfg)?;
    if targets.is_empty() {
        return Err(PlanError::NoTargets);
    }
    let ego_loc = map.localize(&ego.pose)?;
    let horizon = cfg.horizon;
    let long_speed = cfg.lookahead / horizon;
    let heading_err = angle_diff(ego.pose.heading, ego_loc.point.pose.heading);
    let start_lat = BoundaryState::new(
        ego_loc.lateral_offset,
        long_speed * heading_err.tan(),
        0.0,
    );
    let steps = (horizon / TRAJECTORY_DT).round() as usize;

    let mut candidates = Vec::with_capacity(targets.len());
    for target in targets {
        let lat = quintic_fit(
            &start_lat,
            &BoundaryState::new(target.offset_from_ego_lane, 0.0, 0.0),
            horizon,
        )?;
        let mut samples = Vec::with_capacity(steps + 1);
        let mut dev_sum = 0.0;
        for k in 0..=steps {
            let t = (k as f64 * TRAJECTORY_DT).min(horizon);
            let d = quintic_eval(&lat, t)?;
            let base = map.advance_along_lane(&ego_loc.point, long_speed * t)?;
            let pose = base.pose.offset_left(d.position);
            let heading = base.pose.heading + d.velocity.atan2(long_speed);
            samples.push(TrajectorySample {
                t,
                pose: Pose3::new(pose.x, pose.y, 0.0, heading),
                speed: long_speed.hypot(d.velocity),
            });
            dev_sum += d.position.abs();
        }
        let trajectory = Trajectory::new(samples);
        let cost = cfg.w_lat * target.offset_from_ego_lane.abs() + cfg.w_dev * dev_sum / (steps + 1) as f64;
        let collides = collision_check(&trajectory, obstacles, cfg.ego_size);
        let color_tag = if target.lane_point.lane_id == ego_loc.point.lane_id {
            color_for(&cfg.lateral_offsets, target.lateral_offset)
        } else {
            None
        };
        candidates.push(PlanCandidate {
            trajectory,
            target,
            cost,
            collides,
            color_tag,
        });
    }
    candidates.sort_by(|a, b| {
        a.collides
            .cmp(&b.collides)
            .then(a.cost.total_cmp(&b.cost))
            .then(
                a.target
                    .offset_from_ego_lane
                    .abs()
                    .total_cmp(&b.target.offset_from_ego_lane.abs()),
            )
            .then(
                b.target
                    .offset_from_ego_lane
                    .total_cmp(&a.target.offset_from_ego_lane),
            )
    });
    if candidates.iter().all(|c| c.collides) {
        return Err(PlanError::NoPlan { candidates });
    }
    Ok(candidates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::worldmap::{build_arc_map, build_straight_map, Side};

    #[test]
    fn constant_fit() {
        let b = BoundaryState::new(3.5, 0.0, 0.0);
        let q = quintic_fit(&b, &b, 2.0).unwrap();
        assert_eq!(q.c, [3.5, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let mid = quintic_eval(&q, 1.3).unwrap();
        assert_eq!(mid, b);
    }

    #[test]
    fn rest_to_rest_unit_step() {
        let q = quintic_fit(
            &BoundaryState::default(),
            &BoundaryState::new(1.0, 0.0, 0.0),
            1.0,
        )
        .unwrap();
        let expected = [0.0, 0.0, 0.0, 10.0, -15.0, 6.0];
        for (a, b) in q.c.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        let end = quintic_eval(&q, 1.0).unwrap();
        assert!((end.position - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eval_range_and_fit_errors() {
        let q = quintic_fit(&BoundaryState::default(), &BoundaryState::default(), 1.0).unwrap();
        assert!(quintic_eval(&q, 1.5).is_err());
        assert!(quintic_eval(&q, -0.1).is_err());
        assert!(quintic_fit(&BoundaryState::default(), &BoundaryState::default(), 0.0).is_err());
    }

    #[test]
    fn single_centerline_target() {
        let map = build_straight_map(100.0, 3.5, 0, 1.0).unwrap();
        let ego = VehicleState::new(Pose2::new(10.0, 0.0, 0.0), 5.0);
        let cfg = PlanConfig {
            lateral_offsets: vec![0.0],
            ..Default::default()
        };
        let t = lattice_targets(&map, &ego, &cfg).unwrap();
        assert_eq!(t.len(), 1);
        assert!((t[0].pose.x - 30.0).abs() < 1e-12 && t[0].pose.y.abs() < 1e-12);
        assert_eq!(t[0].speed, 5.0);
    }

    #[test]
    fn arc_target_heading() {
        let map = build_arc_map(10.0, std::f64::consts::PI, 3.5, 0.1, Side::Left).unwrap();
        let ego = VehicleState::new(Pose2::default(), 5.0);
        let cfg = PlanConfig {
            lookahead: 5.0,
            lateral_offsets: vec![0.0],
            ..Default::default()
        };
        let t = lattice_targets(&map, &ego, &cfg).unwrap();
        assert!((t[0].pose.heading - 0.5).abs() < 1e-12);
    }

    #[test]
    fn too_short_lane() {
        let map = build_straight_map(15.0, 3.5, 0, 1.0).unwrap();
        let ego = VehicleState::new(Pose2::default(), 5.0);
        assert!(matches!(
            lattice_targets(&map, &ego, &PlanConfig::default()),
            Err(PlanError::Map(MapError::OffEnd { .. }))
        ));
    }

    #[test]
    fn free_road_prefers_center() {
        let map = build_straight_map(100.0, 3.5, 0, 1.0).unwrap();
        let ego = VehicleState::new(Pose2::new(10.0, 0.0, 0.0), 5.0);
        let ranked = plan(&map, &ego, &[], &PlanConfig::default()).unwrap();
        assert_eq!(ranked.len(), 3);
        assert_eq!(ranked[0].color_tag, Some(PlanColor::Green));
        assert_eq!(ranked[1].color_tag, Some(PlanColor::Blue));
        assert_eq!(ranked[2].color_tag, Some(PlanColor::Red));
        assert!(ranked.iter().all(|c| !c.collides));
    }

    #[test]
    fn wall_blocks_everything() {
        let map = build_straight_map(100.0, 3.5, 0, 1.0).unwrap();
        let ego = VehicleState::new(Pose2::new(10.0, 0.0, 0.0), 5.0);
        let wall = Footprint::new(&Pose2::new(25.0, 0.0, 0.0), 1.0, 6.0);
        match plan(&map, &ego, &[wall], &PlanConfig::default()) {
            Err(PlanError::NoPlan { candidates }) => assert_eq!(candidates.len(), 3),
            other => panic!("expected no-plan, got {other:?}"),
        }
    }

    #[test]
    fn collision_basics() {
        let map = build_straight_map(100.0, 3.5, 0, 1.0).unwrap();
        let ego = VehicleState::new(Pose2::new(10.0, 0.0, 0.0), 5.0);
        let cfg = PlanConfig {
            lateral_offsets: vec![0.0],
            ..Default::default()
        };
        let traj = plan(&map, &ego, &[], &cfg).unwrap()[0].trajectory.clone();
        assert!(!collision_check(&traj, &[], cfg.ego_size));
        let mid = traj.sample_at(traj.duration() / 2.0).pose.ground();
        let box_ = Footprint::new(&mid, 1.0, 1.0);
        assert!(collision_check(&traj, &[box_], cfg.ego_size));
    }
}
