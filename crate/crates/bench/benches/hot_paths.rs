use std::collections::BTreeMap;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use worldsim_core::control::{idm_accel, IdmParams, LeadObservation};
use worldsim_core::dynamics::{step_bicycle, ControlAccelSteerRate, VehicleParams, VehicleState};
use worldsim_core::geom::Pose2;
use worldsim_core::planning::{plan, quintic_fit, BoundaryState, PlanConfig};
use worldsim_core::render::{render_frame, static_scene};
use worldsim_core::scenarios::{build_suite, generate, ScenarioConstants, SuiteConfig};
use worldsim_core::{CameraModel, Category};

fn planning_run() -> worldsim_core::scenarios::SimulationRun {
    let suite = build_suite(&SuiteConfig {
        counts: BTreeMap::from([(Category::Planning, 1)]),
        ..SuiteConfig::default()
    })
    .unwrap();
    generate(&suite[0], &ScenarioConstants::default()).unwrap().0
}

fn dynamics(c: &mut Criterion) {
    let params = VehicleParams::default();
    let state = VehicleState::new(Pose2::default(), 12.0);
    let u = ControlAccelSteerRate { accel: 0.5, steer_rate: 0.1 };
    c.bench_function("bicycle_step", |b| b.iter(|| step_bicycle(black_box(&state), &params, u, 0.01)));
}

fn control(c: &mut Criterion) {
    let p = IdmParams::default();
    let lead = LeadObservation { gap: 25.0, approach_rate: 2.0 };
    c.bench_function("idm_accel", |b| b.iter(|| idm_accel(&p, black_box(14.0), Some(&lead))));
}

fn planning(c: &mut Criterion) {
    let s0 = BoundaryState::new(0.0, 1.0, 0.0);
    let s1 = BoundaryState::new(3.5, 0.0, 0.0);
    c.bench_function("quintic_fit", |b| b.iter(|| quintic_fit(black_box(&s0), &s1, 3.0)));

    let run = planning_run();
    let ego = run.rollout.ego.samples[0];
    let start = VehicleState::new(ego.pose.ground(), ego.speed);
    let cfg = PlanConfig::default();
    c.bench_function("lattice_plan", |b| b.iter(|| plan(&run.map, black_box(&start), &run.obstacles, &cfg)));
}

fn rendering(c: &mut Criterion) {
    let run = planning_run();
    let scene = static_scene(&run.map, &run.plan_exports());
    let cam = CameraModel::default();
    let ego = run.rollout.ego.samples[0].pose;
    let mut group = c.benchmark_group("render");
    group.sample_size(20);
    group.bench_function("render_frame", |b| b.iter(|| render_frame(&cam, black_box(&ego), &scene)));
    group.finish();
}

criterion_group!(benches, dynamics, control, planning, rendering);
criterion_main!(benches);
