//! Procedural pinhole renderer: flat-shaded triangles with a z-buffer,
//! frame sampling along a rollout, and the frame-grid composite.

use std::path::Path;

use image::{Rgb, RgbImage};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::actors::{ActorKind, ActorTrack, RenderPrimitive};
use crate::geom::{Pose2, Pose3};
use crate::planning::{CandidateExport, Trajectory};
use crate::worldmap::{LaneId, LaneSegment, MapGraph, Side};

pub const NEAR_PLANE: f64 = 0.1;
pub const FRAME_INTERVAL: f64 = 0.5;
pub const GRID_COLUMNS: u32 = 3;
pub const SEPARATOR_PX: u32 = 2;

pub const BACKGROUND: [u8; 3] = [172, 202, 232];
pub const TERRAIN_COLOR: [u8; 3] = [96, 132, 72];
pub const ROAD_COLOR: [u8; 3] = [72, 72, 78];
pub const MARKING_COLOR: [u8; 3] = [236, 236, 236];
const SEPARATOR_COLOR: [u8; 3] = [16, 16, 16];
const TRUNK_COLOR: [u8; 3] = [104, 72, 40];
const CANOPY_COLOR: [u8; 3] = [38, 98, 44];

/// Decal heights keep coplanar layers from fighting in the depth buffer.
const TERRAIN_Z: f64 = -0.03;
const MARKING_Z: f64 = 0.01;
const PLAN_Z: f64 = 0.02;

pub const ARROW_SPACING: f64 = 20.0;
pub const ARROW_LENGTH: f64 = 3.0;
const ARROW_FIRST: f64 = 10.0;
pub const TREE_SPACING: f64 = 15.0;
pub const TREE_SETBACK: f64 = 3.0;
const TREE_FIRST: f64 = 7.5;
const TRUNK_HEIGHT: f64 = 2.5;
const TERRAIN_MARGIN: f64 = 300.0;

#[derive(Debug, thiserror::Error)]
pub enum RenderError {
    #[error("rollout lasts {duration:.2} s but {needed:.2} s are needed")]
    RolloutTooShort { duration: f64, needed: f64 },
    #[error("unsupported frame count {0}")]
    FrameCount(usize),
    #[error("frames have mismatched dimensions")]
    MismatchedDimensions,
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    /// Pose relative to the ego's rear axle.
    pub mount: Pose3,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self {
            fx: 500.0,
            fy: 500.0,
            cx: 480.0,
            cy: 270.0,
            width: 960,
            height: 540,
            mount: Pose3::new(2.7, 0.0, 1.5, 0.0),
        }
    }
}

impl CameraModel {
    pub fn validate(&self) -> Result<(), RenderError> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(RenderError::InvalidCamera("focal lengths must be positive".into()));
        }
        let w = self.width as f64;
        let h = self.height as f64;
        if !(0.0..w).contains(&self.cx) || !(0.0..h).contains(&self.cy) {
            return Err(RenderError::InvalidCamera("principal point outside the image".into()));
        }
        Ok(())
    }

    /// World pose of the optical centre for a given ego pose.
    pub fn world_pose(&self, ego: &Pose3) -> Pose3 {
        let p = ego.ground().to_world([self.mount.x, self.mount.y]);
        Pose3::new(p[0], p[1], ego.z + self.mount.z, ego.heading + self.mount.heading)
    }

    /// Camera-frame coordinates: X right, Y down, Z forward.
    pub fn to_camera(&self, ego: &Pose3, point: [f64; 3]) -> [f64; 3] {
        let c = self.world_pose(ego);
        let (s, co) = c.heading.sin_cos();
        let d = [point[0] - c.x, point[1] - c.y, point[2] - c.z];
        let forward = d[0] * co + d[1] * s;
        let left = -d[0] * s + d[1] * co;
        [-left, -d[2], forward]
    }

    fn to_pixel(&self, cam: [f64; 3]) -> [f64; 3] {
        [
            self.cx + self.fx * cam[0] / cam[2],
            self.cy + self.fy * cam[1] / cam[2],
            cam[2],
        ]
    }
}

/// Pixel `(u, v, depth)` of a world point, or `None` when it lies at or
/// behind the near plane.
pub fn project(cam: &CameraModel, ego: &Pose3, point: [f64; 3]) -> Option<[f64; 3]> {
    let c = cam.to_camera(ego, point);
    (c[2] > NEAR_PLANE).then(|| cam.to_pixel(c))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimitiveTag {
    Terrain,
    Road,
    LaneMarking,
    ArrowMarking,
    Tree,
    Vehicle,
    Object,
    Plane,
    PlanPolyline,
}

pub type Triangle = [[f64; 3]; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct ScenePrimitive {
    pub triangles: Vec<Triangle>,
    pub color: [u8; 3],
    pub tag: PrimitiveTag,
}

impl ScenePrimitive {
    fn new(tag: PrimitiveTag, color: [u8; 3], triangles: Vec<Triangle>) -> Self {
        let triangles = triangles.into_iter().filter(|t| !degenerate(t)).collect();
        Self { triangles, color, tag }
    }
}

fn degenerate(t: &Triangle) -> bool {
    let a = [t[1][0] - t[0][0], t[1][1] - t[0][1], t[1][2] - t[0][2]];
    let b = [t[2][0] - t[0][0], t[2][1] - t[0][1], t[2][2] - t[0][2]];
    let n = [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ];
    n[0] * n[0] + n[1] * n[1] + n[2] * n[2] < 1e-18
}

fn quad(a: [f64; 3], b: [f64; 3], c: [f64; 3], d: [f64; 3]) -> [Triangle; 2] {
    [[a, b, c], [a, c, d]]
}

fn lift(p: [f64; 2], z: f64) -> [f64; 3] {
    [p[0], p[1], z]
}

/// Ground strip between two lateral offsets of a lane, restricted to the
/// station interval `[s0, s1]`.
fn lane_strip(seg: &LaneSegment, left: f64, right: f64, s0: f64, s1: f64, z: f64) -> Vec<Triangle> {
    let mut stations: Vec<f64> = vec![s0];
    stations.extend(
        seg.centerline
            .iter()
            .map(|p| p.arc_length)
            .filter(|s| *s > s0 && *s < s1),
    );
    stations.push(s1);
    let mut out = Vec::with_capacity(stations.len() * 2);
    for w in stations.windows(2) {
        let a = seg.point_at(w[0]).pose;
        let b = seg.point_at(w[1]).pose;
        out.extend(quad(
            lift(a.offset_left(left).position(), z),
            lift(a.offset_left(right).position(), z),
            lift(b.offset_left(right).position(), z),
            lift(b.offset_left(left).position(), z),
        ));
    }
    out
}

/// Arrow painted on a lane, pointing along the direction of travel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrowMarking {
    pub lane_id: LaneId,
    pub station: f64,
    /// Tail centre on the lane centerline.
    pub pose: Pose2,
}

impl ArrowMarking {
    pub fn triangles(&self) -> Vec<Triangle> {
        let p = &self.pose;
        let w = |x: f64, y: f64| lift(p.to_world([x, y]), MARKING_Z);
        let shaft = 0.6 * ARROW_LENGTH;
        let mut t = quad(w(0.0, 0.15), w(0.0, -0.15), w(shaft, -0.15), w(shaft, 0.15)).to_vec();
        t.push([w(shaft, 0.45), w(shaft, -0.45), w(ARROW_LENGTH, 0.0)]);
        t
    }
}

pub fn arrow_markings(map: &MapGraph) -> Vec<ArrowMarking> {
    let mut out = Vec::new();
    for seg in map.segments() {
        let mut s = ARROW_FIRST;
        while s + ARROW_LENGTH <= seg.length() {
            let pt = seg.point_at(s);
            out.push(ArrowMarking {
                lane_id: seg.id,
                station: s,
                pose: pt.pose,
            });
            s += ARROW_SPACING;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoadsideTree {
    pub position: [f64; 2],
    pub side: Side,
    pub lane_id: LaneId,
    pub station: f64,
}

impl RoadsideTree {
    fn primitives(&self) -> [ScenePrimitive; 2] {
        let trunk = box_triangles(&Pose3::new(self.position[0], self.position[1], 0.0, 0.0), 0.4, 0.4, TRUNK_HEIGHT);
        let canopy = box_triangles(&Pose3::new(self.position[0], self.position[1], TRUNK_HEIGHT, 0.0), 2.4, 2.4, 2.6);
        [
            ScenePrimitive::new(PrimitiveTag::Tree, TRUNK_COLOR, trunk),
            ScenePrimitive::new(PrimitiveTag::Tree, CANOPY_COLOR, canopy),
        ]
    }

    /// Point at the base of the trunk's centre, used for drift checks.
    pub fn trunk_point(&self) -> [f64; 3] {
        [self.position[0], self.position[1], 0.0]
    }
}

/// Trees set back from the outermost lanes on both sides, skipping any spot
/// that would land on the road.
pub fn roadside_trees(map: &MapGraph) -> Vec<RoadsideTree> {
    let mut out = Vec::new();
    for seg in map.segments() {
        for side in [Side::Left, Side::Right] {
            let outermost = match side {
                Side::Left => seg.adjacent_left.is_none(),
                Side::Right => seg.adjacent_right.is_none(),
            };
            if !outermost {
                continue;
            }
            let offset = side.sign() * (seg.width / 2.0 + TREE_SETBACK);
            let mut s = TREE_FIRST;
            while s <= seg.length() {
                let pos = seg.point_at(s).pose.offset_left(offset).position();
                if !map.is_on_road(pos) {
                    out.push(RoadsideTree {
                        position: pos,
                        side,
                        lane_id: seg.id,
                        station: s,
                    });
                }
                s += TREE_SPACING;
            }
        }
    }
    out
}

/// Five visible faces of an oriented box whose base centre is `pose`.
pub fn box_triangles(pose: &Pose3, length: f64, width: f64, height: f64) -> Vec<Triangle> {
    let g = pose.ground();
    let (hl, hw) = (length / 2.0, width / 2.0);
    let (z0, z1) = (pose.z, pose.z + height);
    let c = |x: f64, y: f64, z: f64| lift(g.to_world([x, y]), z);
    let b = [c(hl, hw, z0), c(hl, -hw, z0), c(-hl, -hw, z0), c(-hl, hw, z0)];
    let t = [c(hl, hw, z1), c(hl, -hw, z1), c(-hl, -hw, z1), c(-hl, hw, z1)];
    let mut out = Vec::with_capacity(10);
    out.extend(quad(t[0], t[1], t[2], t[3]));
    for i in 0..4 {
        let j = (i + 1) % 4;
        out.extend(quad(b[i], b[j], t[j], t[i]));
    }
    out
}

fn shade(c: [u8; 3], f: f64) -> [u8; 3] {
    c.map(|v| (v as f64 * f).round().clamp(0.0, 255.0) as u8)
}

fn billboard_triangles(pose: &Pose3, length: f64, width: f64, height: f64) -> Vec<Triangle> {
    let g = pose.ground();
    let c = |x: f64, y: f64, z: f64| lift(g.to_world([x, y]), pose.z + z);
    let (hl, hw) = (length / 2.0, width / 2.0);
    let mut out = quad(c(-hl, 0.0, 0.0), c(hl, 0.0, 0.0), c(hl, 0.0, height), c(-hl, 0.0, height)).to_vec();
    out.extend(quad(c(0.0, -hw, 0.0), c(0.0, hw, 0.0), c(0.0, hw, height), c(0.0, -hw, height)));
    out
}

/// Primitives for one actor at a pose. Boxes get a lighter roof so their
/// silhouette reads against the road.
pub fn actor_primitives(kind: &ActorKind, pose: &Pose3) -> Vec<ScenePrimitive> {
    let tag = match kind.class {
        crate::actors::ActorClass::Vehicle => PrimitiveTag::Vehicle,
        crate::actors::ActorClass::Plane => PrimitiveTag::Plane,
        _ => PrimitiveTag::Object,
    };
    match kind.primitive {
        RenderPrimitive::Box => {
            let tris = box_triangles(pose, kind.length, kind.width, kind.height);
            let (roof, sides) = tris.split_at(2);
            vec![
                ScenePrimitive::new(tag, shade(kind.color, 1.2), roof.to_vec()),
                ScenePrimitive::new(tag, kind.color, sides.to_vec()),
            ]
        }
        RenderPrimitive::Billboard => vec![ScenePrimitive::new(
            tag,
            kind.color,
            billboard_triangles(pose, kind.length, kind.width, kind.height),
        )],
        RenderPrimitive::PlaneCompound => {
            let g = pose.ground();
            let at = |x: f64, z: f64| {
                let p = g.to_world([x, 0.0]);
                Pose3::new(p[0], p[1], pose.z + z, pose.heading)
            };
            let body_w = kind.width * 0.12;
            let mut tris = box_triangles(pose, kind.length, body_w, kind.height);
            tris.extend(box_triangles(&at(0.0, kind.height * 0.3), kind.length * 0.2, kind.width, 0.4));
            tris.extend(box_triangles(&at(-0.42 * kind.length, kind.height), kind.length * 0.12, 0.4, kind.height));
            vec![ScenePrimitive::new(tag, kind.color, tris)]
        }
    }
}

fn plan_primitive(plan: &CandidateExport) -> ScenePrimitive {
    let hw = 0.15;
    // overlapping strips near the ego get distinct heights
    let z = PLAN_Z + 0.005 * plan.color as u8 as f64;
    let mut tris = Vec::new();
    for w in plan.points.windows(2) {
        let (a, b) = (w[0], w[1]);
        let len = (b[0] - a[0]).hypot(b[1] - a[1]);
        if len < 1e-9 {
            continue;
        }
        let n = [-(b[1] - a[1]) / len * hw, (b[0] - a[0]) / len * hw];
        tris.extend(quad(
            [a[0] + n[0], a[1] + n[1], z],
            [a[0] - n[0], a[1] - n[1], z],
            [b[0] - n[0], b[1] - n[1], z],
            [b[0] + n[0], b[1] + n[1], z],
        ));
    }
    ScenePrimitive::new(PrimitiveTag::PlanPolyline, plan.color.rgb(), tris)
}

fn terrain(map: &MapGraph) -> ScenePrimitive {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for seg in map.segments() {
        for p in &seg.centerline {
            for i in 0..2 {
                lo[i] = lo[i].min(p.pose.position()[i]);
                hi[i] = hi[i].max(p.pose.position()[i]);
            }
        }
    }
    let m = TERRAIN_MARGIN;
    let (x0, y0, x1, y1) = (lo[0] - m, lo[1] - m, hi[0] + m, hi[1] + m);
    let z = TERRAIN_Z;
    ScenePrimitive::new(
        PrimitiveTag::Terrain,
        TERRAIN_COLOR,
        quad([x0, y0, z], [x1, y0, z], [x1, y1, z], [x0, y1, z]).to_vec(),
    )
}

/// Map-derived primitives that do not move during a rollout.
pub fn static_scene(map: &MapGraph, plans: &[CandidateExport]) -> Vec<ScenePrimitive> {
    if map.is_empty() {
        return plans.iter().map(plan_primitive).collect();
    }
    let mut out = vec![terrain(map)];
    let mut road = Vec::new();
    let mut markings = Vec::new();
    for seg in map.segments() {
        let hw = seg.width / 2.0;
        let len = seg.length();
        road.extend(lane_strip(seg, hw, -hw, 0.0, len, 0.0));
        let line = 0.15;
        if seg.adjacent_right.is_none() {
            markings.extend(lane_strip(seg, -hw + 0.2 + line, -hw + 0.2, 0.0, len, MARKING_Z));
        }
        if seg.adjacent_left.is_none() {
            markings.extend(lane_strip(seg, hw - 0.2, hw - 0.2 - line, 0.0, len, MARKING_Z));
        } else {
            let mut s = 0.0;
            while s < len {
                let e = (s + 3.0).min(len);
                markings.extend(lane_strip(seg, hw + line / 2.0, hw - line / 2.0, s, e, MARKING_Z));
                s += 9.0;
            }
        }
    }
    out.push(ScenePrimitive::new(PrimitiveTag::Road, ROAD_COLOR, road));
    out.push(ScenePrimitive::new(PrimitiveTag::LaneMarking, MARKING_COLOR, markings));
    for arrow in arrow_markings(map) {
        out.push(ScenePrimitive::new(PrimitiveTag::ArrowMarking, MARKING_COLOR, arrow.triangles()));
    }
    for tree in roadside_trees(map) {
        out.extend(tree.primitives());
    }
    out.extend(plans.iter().map(plan_primitive));
    out
}

/// Full scene: map features, actors at the given poses and optional plan
/// polylines painted on the road.
pub fn build_scene(
    map: &MapGraph,
    actors: &[(ActorKind, Pose3)],
    plans: &[CandidateExport],
) -> Vec<ScenePrimitive> {
    let mut out = static_scene(map, plans);
    for (kind, pose) in actors {
        out.extend(actor_primitives(kind, pose));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameImage {
    pub pixels: RgbImage,
    pub timestamp: f64,
}

/// Clips a camera-space polygon against `Z >= NEAR_PLANE`.
fn clip_near(poly: &[[f64; 3]]) -> Vec<[f64; 3]> {
    let mut out = Vec::with_capacity(poly.len() + 1);
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        let (ina, inb) = (a[2] >= NEAR_PLANE, b[2] >= NEAR_PLANE);
        if ina {
            out.push(a);
        }
        if ina != inb {
            let f = (NEAR_PLANE - a[2]) / (b[2] - a[2]);
            out.push([
                a[0] + f * (b[0] - a[0]),
                a[1] + f * (b[1] - a[1]),
                NEAR_PLANE,
            ]);
        }
    }
    out
}

struct Raster<'a> {
    width: usize,
    height: usize,
    color: &'a mut [u8],
    depth: &'a mut [f64],
}

impl Raster<'_> {
    /// Fills a screen-space triangle with vertices `(u, v, 1/Z)`.
    fn fill(&mut self, t: [[f64; 3]; 3], rgb: [u8; 3]) {
        let area = (t[1][0] - t[0][0]) * (t[2][1] - t[0][1]) - (t[2][0] - t[0][0]) * (t[1][1] - t[0][1]);
        if area.abs() < 1e-12 {
            return;
        }
        let min_u = t.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
        let max_u = t.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
        let min_v = t.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
        let max_v = t.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max);
        let x0 = (min_u - 0.5).ceil().max(0.0) as usize;
        let y0 = (min_v - 0.5).ceil().max(0.0) as usize;
        let x1 = ((max_u - 0.5).floor().min(self.width as f64 - 1.0)).max(-1.0);
        let y1 = ((max_v - 0.5).floor().min(self.height as f64 - 1.0)).max(-1.0);
        if x1 < 0.0 || y1 < 0.0 {
            return;
        }
        let (x1, y1) = (x1 as usize, y1 as usize);
        let inv = 1.0 / area;
        let edge = |a: [f64; 3], b: [f64; 3], px: f64, py: f64| (b[0] - a[0]) * (py - a[1]) - (b[1] - a[1]) * (px - a[0]);
        for y in y0..=y1 {
            let py = y as f64 + 0.5;
            for x in x0..=x1 {
                let px = x as f64 + 0.5;
                let w0 = edge(t[1], t[2], px, py) * inv;
                let w1 = edge(t[2], t[0], px, py) * inv;
                let w2 = edge(t[0], t[1], px, py) * inv;
                if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
                    continue;
                }
                let iz = w0 * t[0][2] + w1 * t[1][2] + w2 * t[2][2];
                let idx = y * self.width + x;
                if iz > self.depth[idx] {
                    self.depth[idx] = iz;
                    self.color[3 * idx..3 * idx + 3].copy_from_slice(&rgb);
                }
            }
        }
    }
}

/// Z-buffered rasterisation of `scene` from the ego camera.
pub fn render_frame(cam: &CameraModel, ego: &Pose3, scene: &[ScenePrimitive]) -> RgbImage {
    let (w, h) = (cam.width as usize, cam.height as usize);
    let mut color: Vec<u8> = BACKGROUND.iter().copied().cycle().take(w * h * 3).collect();
    let mut depth = vec![0.0f64; w * h];
    let mut raster = Raster {
        width: w,
        height: h,
        color: &mut color,
        depth: &mut depth,
    };
    for prim in scene {
        for tri in &prim.triangles {
            let c = tri.map(|p| cam.to_camera(ego, p));
            if c.iter().all(|p| p[2] < NEAR_PLANE) {
                continue;
            }
            let poly = clip_near(&c);
            if poly.len() < 3 {
                continue;
            }
            let screen: Vec<[f64; 3]> = poly
                .iter()
                .map(|p| {
                    let q = cam.to_pixel(*p);
                    [q[0], q[1], 1.0 / p[2]]
                })
                .collect();
            for k in 1..screen.len() - 1 {
                raster.fill([screen[0], screen[k], screen[k + 1]], prim.color);
            }
        }
    }
    RgbImage::from_raw(cam.width, cam.height, color).expect("buffer sized to the camera")
}

/// Ego path plus every actor's track over a rollout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    pub ego: Trajectory,
    pub actors: Vec<ActorTrack>,
}

impl Rollout {
    pub fn duration(&self) -> f64 {
        self.ego.duration()
    }

    pub fn actor_poses(&self, t: f64) -> Vec<(ActorKind, Pose3)> {
        self.actors
            .iter()
            .map(|a| (a.kind.clone(), a.trajectory.sample_at(t).pose))
            .collect()
    }
}

/// Timestamps `k · interval` for `k = 0..count`.
pub fn frame_times(count: usize, interval: f64) -> Vec<f64> {
    (0..count).map(|k| k as f64 * interval).collect()
}

/// Renders `count` frames `interval` seconds apart from the start of the
/// rollout.
pub fn sample_frames(
    map: &MapGraph,
    rollout: &Rollout,
    plans: &[CandidateExport],
    cam: &CameraModel,
    interval: f64,
    count: usize,
) -> Result<Vec<FrameImage>, RenderError> {
    if count == 0 {
        return Err(RenderError::FrameCount(count));
    }
    let needed = (count - 1) as f64 * interval;
    if rollout.duration() + 1e-9 < needed {
        return Err(RenderError::RolloutTooShort {
            duration: rollout.duration(),
            needed,
        });
    }
    let base = static_scene(map, plans);
    Ok(frame_times(count, interval)
        .into_par_iter()
        .map(|t| {
            let mut scene = base.clone();
            for (kind, pose) in rollout.actor_poses(t) {
                scene.extend(actor_primitives(&kind, &pose));
            }
            let ego = rollout.ego.sample_at(t).pose;
            FrameImage {
                pixels: render_frame(cam, &ego, &scene),
                timestamp: t,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameGrid {
    pub image: RgbImage,
    pub rows: u32,
    pub cols: u32,
    pub frame_timestamps: Vec<f64>,
    pub border: u32,
}

/// Rows and columns for a supported frame count.
pub fn grid_layout(count: usize) -> Result<(u32, u32), RenderError> {
    match count {
        1 => Ok((1, 1)),
        3 | 6 | 9 => Ok((count as u32 / GRID_COLUMNS, GRID_COLUMNS)),
        n => Err(RenderError::FrameCount(n)),
    }
}

const DIGITS: [[u8; 5]; 10] = [
    [0b111, 0b101, 0b101, 0b101, 0b111],
    [0b010, 0b110, 0b010, 0b010, 0b111],
    [0b111, 0b001, 0b111, 0b100, 0b111],
    [0b111, 0b001, 0b111, 0b001, 0b111],
    [0b101, 0b101, 0b111, 0b001, 0b001],
    [0b111, 0b100, 0b111, 0b001, 0b111],
    [0b111, 0b100, 0b111, 0b101, 0b111],
    [0b111, 0b001, 0b010, 0b010, 0b010],
    [0b111, 0b101, 0b111, 0b101, 0b111],
    [0b111, 0b101, 0b111, 0b001, 0b111],
];
const GLYPH_SCALE: u32 = 4;
const OVERLAY_PAD: u32 = 4;

/// Cell-relative `(x, y, w, h)` of the index overlay for a 1-based frame
/// number.
pub fn overlay_rect(index: usize) -> (u32, u32, u32, u32) {
    let digits = index.to_string().len() as u32;
    let w = digits * 4 * GLYPH_SCALE - GLYPH_SCALE + 2 * OVERLAY_PAD;
    let h = 5 * GLYPH_SCALE + 2 * OVERLAY_PAD;
    (0, 0, w, h)
}

fn draw_index(img: &mut RgbImage, ox: u32, oy: u32, index: usize) {
    let (_, _, w, h) = overlay_rect(index);
    for y in 0..h {
        for x in 0..w {
            img.put_pixel(ox + x, oy + y, Rgb([0, 0, 0]));
        }
    }
    for (k, ch) in index.to_string().bytes().enumerate() {
        let glyph = DIGITS[(ch - b'0') as usize];
        let gx = ox + OVERLAY_PAD + k as u32 * 4 * GLYPH_SCALE;
        for (row, bits) in glyph.iter().enumerate() {
            for col in 0..3u32 {
                if bits >> (2 - col) & 1 == 1 {
                    for dy in 0..GLYPH_SCALE {
                        for dx in 0..GLYPH_SCALE {
                            let x = gx + col * GLYPH_SCALE + dx;
                            let y = oy + OVERLAY_PAD + row as u32 * GLYPH_SCALE + dy;
                            img.put_pixel(x, y, Rgb([255, 255, 255]));
                        }
                    }
                }
            }
        }
    }
}

/// Row-major tiling with separator lines and a frame number in each cell's
/// top-left corner.
pub fn compose_grid(frames: &[FrameImage]) -> Result<FrameGrid, RenderError> {
    let (rows, cols) = grid_layout(frames.len())?;
    let (fw, fh) = frames[0].pixels.dimensions();
    if frames.iter().any(|f| f.pixels.dimensions() != (fw, fh)) {
        return Err(RenderError::MismatchedDimensions);
    }
    let width = cols * fw + (cols - 1) * SEPARATOR_PX;
    let height = rows * fh + (rows - 1) * SEPARATOR_PX;
    let mut image = RgbImage::from_pixel(width, height, Rgb(SEPARATOR_COLOR));
    for (k, frame) in frames.iter().enumerate() {
        let (r, c) = (k as u32 / cols, k as u32 % cols);
        let (ox, oy) = (c * (fw + SEPARATOR_PX), r * (fh + SEPARATOR_PX));
        image::imageops::replace(&mut image, &frame.pixels, ox as i64, oy as i64);
        draw_index(&mut image, ox, oy, k + 1);
    }
    Ok(FrameGrid {
        image,
        rows,
        cols,
        frame_timestamps: frames.iter().map(|f| f.timestamp).collect(),
        border: SEPARATOR_PX,
    })
}

pub fn write_png(image: &RgbImage, path: &Path) -> Result<(), RenderError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    image.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

/// Projected `[u_min, v_min, u_max, v_max]` of a triangle set, or `None`
/// if any vertex is behind the near plane.
pub fn projected_bbox(cam: &CameraModel, ego: &Pose3, triangles: &[Triangle]) -> Option<[f64; 4]> {
    let mut b = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    for tri in triangles {
        for p in tri {
            let q = project(cam, ego, *p)?;
            b = [b[0].min(q[0]), b[1].min(q[1]), b[2].max(q[0]), b[3].max(q[1])];
        }
    }
    b[0].is_finite().then_some(b)
}
