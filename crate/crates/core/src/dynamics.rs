//! Kinematic bicycle model driven by one of three control parameterisations:
//! acceleration + steering rate, speed + steering angle, or a direct pose
//! delta in the vehicle frame.
//!
//! The reference point is the rear axle. Each step holds the control
//! constant, integrates speed and steering explicitly, and advances the pose
//! with the step-averaged speed along the mid-step heading.

use serde::{Deserialize, Serialize};

use crate::geom::Pose2;

/// Internal integration step used by rollouts.
pub const SIM_DT: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    pub wheelbase: f64,
    pub max_steer: f64,
    pub max_accel: f64,
    pub max_speed: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            wheelbase: 2.7,
            max_steer: 0.6,
            max_accel: 4.0,
            max_speed: 40.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub pose: Pose2,
    pub speed: f64,
    pub steering_angle: f64,
}

impl VehicleState {
    pub fn new(pose: Pose2, speed: f64) -> Self {
        Self {
            pose,
            speed,
            steering_angle: 0.0,
        }
    }

    /// Heading rate of the rear-axle reference point.
    pub fn yaw_rate(&self, params: &VehicleParams) -> f64 {
        self.speed * self.steering_angle.tan() / params.wheelbase
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlAccelSteerRate {
    pub accel: f64,
    pub steer_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlSpeedSteer {
    pub speed: f64,
    pub steering_angle: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PoseDelta {
    pub dx: f64,
    pub dy: f64,
    pub dheading: f64,
}

fn advance_pose(
    pose: &Pose2,
    params: &VehicleParams,
    (v0, d0): (f64, f64),
    (v1, d1): (f64, f64),
    dt: f64,
) -> Pose2 {
    let v = 0.5 * (v0 + v1);
    let delta = 0.5 * (d0 + d1);
    let dtheta = v * delta.tan() / params.wheelbase * dt;
    let mid = pose.heading + 0.5 * dtheta;
    Pose2::new(
        pose.x + v * mid.cos() * dt,
        pose.y + v * mid.sin() * dt,
        pose.heading + dtheta,
    )
}

/// One step of the bicycle model under acceleration / steering-rate input.
/// Acceleration saturates to `±max_accel`, speed to `[0, max_speed]` and
/// steering to `±max_steer`.
pub fn step_bicycle(
    state: &VehicleState,
    params: &VehicleParams,
    u: ControlAccelSteerRate,
    dt: f64,
) -> VehicleState {
    debug_assert!(dt > 0.0);
    let accel = u.accel.clamp(-params.max_accel, params.max_accel);
    let speed = (state.speed + accel * dt).clamp(0.0, params.max_speed);
    let steer = (state.steering_angle + u.steer_rate * dt).clamp(-params.max_steer, params.max_steer);
    VehicleState {
        pose: advance_pose(
            &state.pose,
            params,
            (state.speed, state.steering_angle),
            (speed, steer),
            dt,
        ),
        speed,
        steering_angle: steer,
    }
}

/// One step with speed and steering angle commanded directly. Negative
/// speed drives backwards.
pub fn step_integrated(
    state: &VehicleState,
    params: &VehicleParams,
    u: ControlSpeedSteer,
    dt: f64,
) -> VehicleState {
    debug_assert!(dt > 0.0);
    let speed = u.speed.clamp(-params.max_speed, params.max_speed);
    let steer = u.steering_angle.clamp(-params.max_steer, params.max_steer);
    VehicleState {
        pose: advance_pose(&state.pose, params, (speed, steer), (speed, steer), dt),
        speed,
        steering_angle: steer,
    }
}

/// Applies a displacement expressed in the vehicle's current frame.
pub fn step_direct(state: &VehicleState, delta: PoseDelta) -> VehicleState {
    let p = state.pose.to_world([delta.dx, delta.dy]);
    VehicleState {
        pose: Pose2::new(p[0], p[1], state.pose.heading + delta.dheading),
        ..*state
    }
}

/// Integrates `duration` seconds in fixed sub-steps no larger than `max_dt`,
/// querying `control` with the elapsed time before each sub-step.
pub fn integrate_bicycle<F>(
    state: &VehicleState,
    params: &VehicleParams,
    duration: f64,
    max_dt: f64,
    mut control: F,
) -> VehicleState
where
    F: FnMut(f64, &VehicleState) -> ControlAccelSteerRate,
{
    let steps = (duration / max_dt - 1e-9).ceil().max(1.0) as usize;
    let dt = duration / steps as f64;
    let mut s = *state;
    for k in 0..steps {
        let u = control(k as f64 * dt, &s);
        s = step_bicycle(&s, params, u, dt);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn straight_half_second() {
        let s = VehicleState::new(Pose2::default(), 10.0);
        let out = step_bicycle(&s, &VehicleParams::default(), Default::default(), 0.5);
        assert!((out.pose.x - 5.0).abs() < 1e-12);
        assert_eq!(out.pose.heading, 0.0);
    }

    #[test]
    fn standstill_is_fixed_point() {
        let s = VehicleState {
            pose: Pose2::new(1.0, 2.0, 0.3),
            speed: 0.0,
            steering_angle: 0.2,
        };
        let out = step_bicycle(&s, &VehicleParams::default(), Default::default(), 0.1);
        assert_eq!(out, s);
    }

    #[test]
    fn integrated_zero_speed_and_straight() {
        let p = VehicleParams::default();
        let s = VehicleState::new(Pose2::new(3.0, -1.0, 0.4), 7.0);
        let out = step_integrated(
            &s,
            &p,
            ControlSpeedSteer {
                speed: 0.0,
                steering_angle: 0.5,
            },
            0.5,
        );
        assert_eq!(out.pose, s.pose);
        let s = VehicleState::new(Pose2::new(0.0, 0.0, FRAC_PI_2), 0.0);
        let out = step_integrated(
            &s,
            &p,
            ControlSpeedSteer {
                speed: 10.0,
                steering_angle: 0.0,
            },
            0.5,
        );
        assert!(out.pose.x.abs() < 1e-12 && (out.pose.y - 5.0).abs() < 1e-12);
    }

    #[test]
    fn saturation() {
        let p = VehicleParams::default();
        let s = VehicleState::new(Pose2::default(), 39.9);
        let out = step_bicycle(
            &s,
            &p,
            ControlAccelSteerRate {
                accel: 100.0,
                steer_rate: 100.0,
            },
            0.1,
        );
        assert_eq!(out.speed, p.max_speed);
        assert_eq!(out.steering_angle, p.max_steer);
        let out = step_bicycle(
            &VehicleState::new(Pose2::default(), 0.1),
            &p,
            ControlAccelSteerRate {
                accel: -5.0,
                steer_rate: 0.0,
            },
            0.1,
        );
        assert_eq!(out.speed, 0.0);
    }

    #[test]
    fn direct_deltas() {
        let s = VehicleState::new(Pose2::new(1.0, 1.0, 0.0), 0.0);
        assert_eq!(step_direct(&s, PoseDelta::default()), s);
        let out = step_direct(
            &s,
            PoseDelta {
                dx: 1.0,
                ..Default::default()
            },
        );
        assert_eq!(out.pose.position(), [2.0, 1.0]);
        let s = VehicleState::new(Pose2::new(0.0, 0.0, FRAC_PI_2), 0.0);
        let out = step_direct(
            &s,
            PoseDelta {
                dx: 1.0,
                ..Default::default()
            },
        );
        assert!(out.pose.x.abs() < 1e-15 && (out.pose.y - 1.0).abs() < 1e-15);
    }
}
