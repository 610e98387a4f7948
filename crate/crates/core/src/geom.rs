//! Planar and lifted poses, angle helpers and oriented rectangles.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

/// Wraps an angle into `(-π, π]`.
pub fn normalize_angle(angle: f64) -> f64 {
    let mut a = angle.rem_euclid(TAU);
    if a > PI {
        a -= TAU;
    }
    // rem_euclid can return TAU for tiny negative inputs
    if a <= -PI {
        a += TAU;
    }
    a
}

/// Signed shortest rotation taking `from` onto `to`.
pub fn angle_diff(to: f64, from: f64) -> f64 {
    normalize_angle(to - from)
}

/// Planar pose. Heading is measured counter-clockwise from +x.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            heading: normalize_angle(heading),
        }
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    /// Unit vector along the heading.
    pub fn tangent(&self) -> [f64; 2] {
        [self.heading.cos(), self.heading.sin()]
    }

    /// Unit vector pointing to the left of the heading.
    pub fn left_normal(&self) -> [f64; 2] {
        [-self.heading.sin(), self.heading.cos()]
    }

    /// Expresses a world point in this frame (x forward, y left).
    pub fn to_local(&self, world: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.heading.sin_cos();
        let dx = world[0] - self.x;
        let dy = world[1] - self.y;
        [c * dx + s * dy, -s * dx + c * dy]
    }

    /// Inverse of [`Pose2::to_local`].
    pub fn to_world(&self, local: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.heading.sin_cos();
        [
            self.x + c * local[0] - s * local[1],
            self.y + s * local[0] + c * local[1],
        ]
    }

    /// Expresses a world pose in this frame.
    pub fn pose_to_local(&self, world: &Pose2) -> Pose2 {
        let p = self.to_local(world.position());
        Pose2::new(p[0], p[1], world.heading - self.heading)
    }

    /// Inverse of [`Pose2::pose_to_local`].
    pub fn pose_to_world(&self, local: &Pose2) -> Pose2 {
        let p = self.to_world(local.position());
        Pose2::new(p[0], p[1], local.heading + self.heading)
    }

    /// The pose shifted sideways by `offset` (positive = left).
    pub fn offset_left(&self, offset: f64) -> Pose2 {
        let n = self.left_normal();
        Pose2 {
            x: self.x + offset * n[0],
            y: self.y + offset * n[1],
            heading: self.heading,
        }
    }

    pub fn distance(&self, other: &Pose2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn lift(&self, z: f64) -> Pose3 {
        Pose3 {
            x: self.x,
            y: self.y,
            z,
            heading: self.heading,
        }
    }

    /// Linear in position, shortest arc in heading.
    pub fn lerp(&self, other: &Pose2, f: f64) -> Pose2 {
        Pose2::new(
            self.x + (other.x - self.x) * f,
            self.y + (other.y - self.y) * f,
            self.heading + angle_diff(other.heading, self.heading) * f,
        )
    }
}

/// Pose with altitude; `z` is zero for ground entities.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub heading: f64,
}

impl Pose3 {
    pub fn new(x: f64, y: f64, z: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            z,
            heading: normalize_angle(heading),
        }
    }

    pub fn ground(&self) -> Pose2 {
        Pose2 {
            x: self.x,
            y: self.y,
            heading: self.heading,
        }
    }

    pub fn lerp(&self, other: &Pose3, f: f64) -> Pose3 {
        let g = self.ground().lerp(&other.ground(), f);
        g.lift(self.z + (other.z - self.z) * f)
    }
}

/// Oriented rectangle on the ground plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Footprint {
    pub center: [f64; 2],
    pub heading: f64,
    pub length: f64,
    pub width: f64,
}

impl Footprint {
    pub fn new(pose: &Pose2, length: f64, width: f64) -> Self {
        Self {
            center: pose.position(),
            heading: pose.heading,
            length,
            width,
        }
    }

    /// Corners in counter-clockwise order starting front-left.
    pub fn corners(&self) -> [[f64; 2]; 4] {
        let frame = Pose2 {
            x: self.center[0],
            y: self.center[1],
            heading: self.heading,
        };
        let hl = self.length / 2.0;
        let hw = self.width / 2.0;
        [
            frame.to_world([hl, hw]),
            frame.to_world([-hl, hw]),
            frame.to_world([-hl, -hw]),
            frame.to_world([hl, -hw]),
        ]
    }

    /// Separating-axis test between two oriented rectangles. Touching edges
    /// count as intersecting.
    pub fn intersects(&self, other: &Footprint) -> bool {
        let a = self.corners();
        let b = other.corners();
        let axes = [
            [self.heading.cos(), self.heading.sin()],
            [-self.heading.sin(), self.heading.cos()],
            [other.heading.cos(), other.heading.sin()],
            [-other.heading.sin(), other.heading.cos()],
        ];
        axes.iter().all(|axis| {
            let (amin, amax) = project_onto(&a, axis);
            let (bmin, bmax) = project_onto(&b, axis);
            amax >= bmin && bmax >= amin
        })
    }
}

fn project_onto(points: &[[f64; 2]], axis: &[f64; 2]) -> (f64, f64) {
    points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        let d = p[0] * axis[0] + p[1] * axis[1];
        (lo.min(d), hi.max(d))
    })
}

/// Even-odd point-in-polygon test.
pub fn point_in_polygon(point: [f64; 2], polygon: &[[f64; 2]]) -> bool {
    let mut inside = false;
    let n = polygon.len();
    if n < 3 {
        return false;
    }
    let mut j = n - 1;
    for i in 0..n {
        let (pi, pj) = (polygon[i], polygon[j]);
        if (pi[1] > point[1]) != (pj[1] > point[1]) {
            let x = pj[0] + (point[1] - pj[1]) * (pi[0] - pj[0]) / (pi[1] - pj[1]);
            if point[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn segments_cross(a0: [f64; 2], a1: [f64; 2], b0: [f64; 2], b1: [f64; 2]) -> bool {
    let orient = |p: [f64; 2], q: [f64; 2], r: [f64; 2]| {
        (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
    };
    let d1 = orient(b0, b1, a0);
    let d2 = orient(b0, b1, a1);
    let d3 = orient(a0, a1, b0);
    let d4 = orient(a0, a1, b1);
    ((d1 > 0.0) != (d2 > 0.0)) && ((d3 > 0.0) != (d4 > 0.0))
}

/// True if two simple polygons overlap (edge crossing or containment).
pub fn polygons_overlap(a: &[[f64; 2]], b: &[[f64; 2]]) -> bool {
    if a.iter().any(|p| point_in_polygon(*p, b)) || b.iter().any(|p| point_in_polygon(*p, a)) {
        return true;
    }
    for i in 0..a.len() {
        let (a0, a1) = (a[i], a[(i + 1) % a.len()]);
        for j in 0..b.len() {
            if segments_cross(a0, a1, b[j], b[(j + 1) % b.len()]) {
                return true;
            }
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_range() {
        assert_eq!(normalize_angle(PI), PI);
        assert_eq!(normalize_angle(-PI), PI);
        assert!((normalize_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((normalize_angle(-0.5) + 0.5).abs() < 1e-15);
        assert!((normalize_angle(TAU + 0.25) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn local_world_round_trip() {
        let frame = Pose2::new(3.0, -2.0, 0.7);
        let w = [10.5, 4.25];
        let back = frame.to_world(frame.to_local(w));
        assert!((back[0] - w[0]).abs() < 1e-12 && (back[1] - w[1]).abs() < 1e-12);
    }

    #[test]
    fn rectangles() {
        let a = Footprint::new(&Pose2::new(0.0, 0.0, 0.0), 4.0, 2.0);
        let b = Footprint::new(&Pose2::new(0.0, 2.05, 0.0), 4.0, 2.0);
        assert!(!a.intersects(&b));
        let c = Footprint::new(&Pose2::new(0.0, 1.95, 0.3), 4.0, 2.0);
        assert!(a.intersects(&c));
        // rotated square whose corner pokes into a's side
        let d = Footprint::new(&Pose2::new(2.0 + 0.7, 0.0, PI / 4.0), 1.0, 1.0);
        assert!(a.intersects(&d));
        let e = Footprint::new(&Pose2::new(2.0 + 0.72, 0.0, PI / 4.0), 1.0, 1.0);
        assert!(!a.intersects(&e));
    }

    #[test]
    fn polygon_containment() {
        let square = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        assert!(point_in_polygon([0.5, 0.5], &square));
        assert!(!point_in_polygon([1.5, 0.5], &square));
        let tri = [[0.5, 0.5], [3.0, 0.5], [3.0, 3.0]];
        assert!(polygons_overlap(&square, &tri));
        let far = [[5.0, 5.0], [6.0, 5.0], [6.0, 6.0]];
        assert!(!polygons_overlap(&square, &far));
    }
}
