//! Lateral PID path tracking and IDM longitudinal control.

use serde::{Deserialize, Serialize};

use crate::dynamics::VehicleState;
use crate::geom::angle_diff;
use crate::worldmap::{MapError, MapGraph};

/// Weight of the heading-error term in the tracking error, in metres.
pub const HEADING_ERROR_GAIN: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    pub integral_limit: f64,
}

impl Default for PidGains {
    fn default() -> Self {
        Self {
            kp: 0.8,
            ki: 0.05,
            kd: 0.3,
            integral_limit: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PidState {
    pub integral: f64,
    pub prev_error: f64,
    pub initialized: bool,
}

/// Returns `kp·e + ki·∫e + kd·ė` and the updated state. The derivative is
/// zero on the first call; the integral is clamped to `±integral_limit`.
pub fn pid_step(state: &PidState, gains: &PidGains, error: f64, dt: f64) -> (f64, PidState) {
    debug_assert!(dt > 0.0);
    let limit = gains.integral_limit.max(0.0);
    let integral = (state.integral + error * dt).clamp(-limit, limit);
    let derivative = if state.initialized {
        (error - state.prev_error) / dt
    } else {
        0.0
    };
    let command = gains.kp * error + gains.ki * integral + gains.kd * derivative;
    (
        command,
        PidState {
            integral,
            prev_error: error,
            initialized: true,
        },
    )
}

/// Signed lateral offset to the lane (left positive) plus
/// `HEADING_ERROR_GAIN · sin(heading error)`.
pub fn path_tracking_error(state: &VehicleState, map: &MapGraph) -> Result<f64, MapError> {
    let loc = map.localize(&state.pose)?;
    let heading_error = angle_diff(state.pose.heading, loc.point.pose.heading);
    Ok(loc.lateral_offset + HEADING_ERROR_GAIN * heading_error.sin())
}

/// Steering angle that drives the tracking error to zero.
pub fn steering_command(command: f64) -> f64 {
    -command
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdmParams {
    pub desired_speed: f64,
    pub time_headway: f64,
    pub min_gap: f64,
    pub max_accel: f64,
    pub comfort_decel: f64,
    pub exponent: f64,
}

impl IdmParams {
    pub fn with_desired_speed(desired_speed: f64) -> Self {
        Self {
            desired_speed,
            ..Self::default()
        }
    }
}

impl Default for IdmParams {
    fn default() -> Self {
        Self {
            desired_speed: 13.9,
            time_headway: 1.5,
            min_gap: 2.0,
            max_accel: 1.5,
            comfort_decel: 2.0,
            exponent: 4.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeadObservation {
    /// Bumper-to-bumper distance along the lane.
    pub gap: f64,
    /// Follower speed minus leader speed.
    pub approach_rate: f64,
}

/// Intelligent Driver Model acceleration. The desired gap is floored at
/// `min_gap` and the output is clamped below at `-2·comfort_decel`.
pub fn idm_accel(p: &IdmParams, speed: f64, lead: Option<&LeadObservation>) -> f64 {
    let v = speed.max(0.0);
    let free = 1.0 - (v / p.desired_speed).powf(p.exponent);
    let interaction = match lead {
        Some(l) => {
            let desired = p.min_gap
                + v * p.time_headway
                + v * l.approach_rate / (2.0 * (p.max_accel * p.comfort_decel).sqrt());
            let desired = desired.max(p.min_gap);
            let gap = l.gap.max(1e-6);
            (desired / gap).powi(2)
        }
        None => 0.0,
    };
    (p.max_accel * (free - interaction)).max(-2.0 * p.comfort_decel)
}

/// Another road user as seen by the lead selector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeadCandidate {
    pub state: VehicleState,
    pub length: f64,
}

/// Successor hops scanned for a leader.
const LEAD_HORIZON_HOPS: usize = 4;
const MIN_GAP_REPORTED: f64 = 1e-3;

/// Nearest actor ahead in the ego's lane corridor whose heading is within
/// π/2 of the lane direction.
pub fn select_idm_lead(
    ego: &VehicleState,
    ego_length: f64,
    map: &MapGraph,
    actors: &[LeadCandidate],
) -> Option<LeadObservation> {
    let ego_loc = map.localize(&ego.pose).ok()?;
    let chain = map.lane_chain(ego_loc.point.lane_id, LEAD_HORIZON_HOPS);
    let mut offsets = Vec::with_capacity(chain.len());
    let mut acc = 0.0;
    for id in &chain {
        let seg = map.segment(*id).ok()?;
        offsets.push(acc);
        acc += seg.length();
    }
    let ego_station = ego_loc.point.arc_length + ego_loc.along_offset;

    let mut best: Option<(f64, LeadObservation)> = None;
    for actor in actors {
        let pose = &actor.state.pose;
        let Some((k, loc)) = chain
            .iter()
            .enumerate()
            .filter_map(|(k, id)| {
                let raw = map.nearest_on_lane(*id, pose).ok()?;
                Some((k, map.project(&raw, pose)))
            })
            .min_by(|a, b| {
                let da = a.1.lateral_offset.powi(2) + a.1.along_offset.powi(2);
                let db = b.1.lateral_offset.powi(2) + b.1.along_offset.powi(2);
                da.total_cmp(&db)
            })
        else {
            continue;
        };
        let half_width = map.segment(loc.point.lane_id).ok()?.width / 2.0;
        if loc.lateral_offset.abs() > half_width {
            continue;
        }
        if angle_diff(pose.heading, loc.point.pose.heading).abs() >= std::f64::consts::FRAC_PI_2 {
            continue;
        }
        let station = offsets[k] + loc.point.arc_length + loc.along_offset;
        let ahead = station - ego_station;
        if ahead <= 0.0 {
            continue;
        }
        let gap = (ahead - 0.5 * (ego_length + actor.length)).max(MIN_GAP_REPORTED);
        let obs = LeadObservation {
            gap,
            approach_rate: ego.speed - actor.state.speed,
        };
        if best.map_or(true, |(d, _)| ahead < d) {
            best = Some((ahead, obs));
        }
    }
    best.map(|(_, obs)| obs)
}
