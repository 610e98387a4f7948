//! Procedural lane graph: centerline sample points, local frames and
//! semantic anchors.
//!
//! Lateral offsets are positive to the left of the lane direction everywhere
//! in this crate.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

pub use crate::geom::Pose2;
use crate::geom::{angle_diff, point_in_polygon};

pub const MAP_FORMAT_VERSION: u32 = 1;

const GRID_CELL: f64 = 4.0;
const ARC_EPS: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum MapError {
    #[error("invalid map dimension: {0}")]
    InvalidDimension(String),
    #[error("map has no sample points")]
    Empty,
    #[error("unknown lane {0}")]
    UnknownLane(LaneId),
    #[error("ran off the end of lane {lane} with {remaining:.3} m left to travel")]
    OffEnd { lane: LaneId, remaining: f64 },
    #[error("negative advance distance {0}")]
    NegativeDistance(f64),
    #[error("malformed map: {0}")]
    Malformed(String),
    #[error("unsupported map format_version {0}")]
    UnsupportedVersion(u32),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = MapError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LaneId(pub u32);

impl std::fmt::Display for LaneId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "lane_{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LanePoint {
    pub pose: Pose2,
    pub arc_length: f64,
    pub lane_id: LaneId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaneSegment {
    pub id: LaneId,
    pub centerline: Vec<LanePoint>,
    pub width: f64,
    #[serde(default)]
    pub successors: Vec<LaneId>,
    #[serde(default)]
    pub adjacent_left: Option<LaneId>,
    #[serde(default)]
    pub adjacent_right: Option<LaneId>,
}

impl LaneSegment {
    pub fn length(&self) -> f64 {
        self.centerline.last().map_or(0.0, |p| p.arc_length)
    }

    /// Interpolated point at `arc_length`, clamped to the segment.
    pub fn point_at(&self, arc_length: f64) -> LanePoint {
        let pts = &self.centerline;
        let s = arc_length.clamp(0.0, self.length());
        let i = match pts.binary_search_by(|p| p.arc_length.total_cmp(&s)) {
            Ok(i) => return pts[i],
            Err(i) => i.clamp(1, pts.len() - 1),
        };
        let (a, b) = (&pts[i - 1], &pts[i]);
        let f = (s - a.arc_length) / (b.arc_length - a.arc_length);
        LanePoint {
            pose: a.pose.lerp(&b.pose, f),
            arc_length: s,
            lane_id: self.id,
        }
    }

    /// Closed boundary polygon (left edge forward, right edge backward).
    pub fn polygon(&self) -> Vec<[f64; 2]> {
        let hw = self.width / 2.0;
        let mut poly: Vec<[f64; 2]> = self
            .centerline
            .iter()
            .map(|p| p.pose.offset_left(hw).position())
            .collect();
        poly.extend(
            self.centerline
                .iter()
                .rev()
                .map(|p| p.pose.offset_left(-hw).position()),
        );
        poly
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorKind {
    StopLine,
    TrafficSign,
    TrafficLight,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemanticAnchor {
    pub kind: AnchorKind,
    pub pose: Pose2,
    pub lane_id: LaneId,
}

/// Result of matching a pose against the map samples. Offsets are in the
/// matched point's local frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Localization {
    pub point: LanePoint,
    pub lateral_offset: f64,
    pub along_offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::Left => 1.0,
            Side::Right => -1.0,
        }
    }
}

/// One piece of a procedural road, laid end to end with its neighbours.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RoadPiece {
    Straight { length: f64 },
    Arc { radius: f64, sweep: f64, side: Side },
}

impl RoadPiece {
    fn length(&self) -> f64 {
        match *self {
            RoadPiece::Straight { length } => length,
            RoadPiece::Arc { radius, sweep, .. } => radius * sweep,
        }
    }

    fn curvature(&self) -> f64 {
        match *self {
            RoadPiece::Straight { .. } => 0.0,
            RoadPiece::Arc { radius, side, .. } => side.sign() / radius,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadLayout {
    pub pieces: Vec<RoadPiece>,
    pub lane_width: f64,
    /// Extra lanes beside the primary one, placed left, right, left, ...
    pub adjacent_lanes: usize,
    pub sample_spacing: f64,
    pub origin: Pose2,
}

/// Pose reached after travelling `s` along a constant-curvature curve.
fn curve_pose(start: &Pose2, curvature: f64, s: f64) -> Pose2 {
    if curvature == 0.0 {
        let t = start.tangent();
        return Pose2::new(start.x + s * t[0], start.y + s * t[1], start.heading);
    }
    let h = start.heading + curvature * s;
    Pose2::new(
        start.x + (h.sin() - start.heading.sin()) / curvature,
        start.y - (h.cos() - start.heading.cos()) / curvature,
        h,
    )
}

fn lane_offsets(adjacent: usize, width: f64) -> Vec<f64> {
    let mut offsets = vec![0.0];
    for k in 0..adjacent {
        let rank = (k / 2 + 1) as f64;
        offsets.push(if k % 2 == 0 { rank * width } else { -rank * width });
    }
    offsets
}

/// Builds a multi-lane road from consecutive pieces. Lane `j` of piece `i`
/// gets id `i * lanes + j`; lane 0 is the primary lane.
pub fn build_road(layout: &RoadLayout) -> Result<MapGraph> {
    if layout.pieces.is_empty() {
        return Err(MapError::InvalidDimension("road has no pieces".into()));
    }
    if !(layout.lane_width > 0.0) {
        return Err(MapError::InvalidDimension(format!(
            "lane width {}",
            layout.lane_width
        )));
    }
    if !(layout.sample_spacing > 0.0) {
        return Err(MapError::InvalidDimension(format!(
            "sample spacing {}",
            layout.sample_spacing
        )));
    }
    let offsets = lane_offsets(layout.adjacent_lanes, layout.lane_width);
    let lanes = offsets.len();
    let mut segments = Vec::new();
    let mut start = layout.origin;
    for (i, piece) in layout.pieces.iter().enumerate() {
        match *piece {
            RoadPiece::Straight { length } if !(length > 0.0) => {
                return Err(MapError::InvalidDimension(format!("length {length}")));
            }
            RoadPiece::Arc { radius, sweep, .. } => {
                if !(radius > 0.0) {
                    return Err(MapError::InvalidDimension(format!("radius {radius}")));
                }
                if !(sweep > 0.0 && sweep <= std::f64::consts::PI) {
                    return Err(MapError::InvalidDimension(format!("sweep {sweep}")));
                }
            }
            _ => {}
        }
        let kappa = piece.curvature();
        let ref_len = piece.length();
        for (j, &offset) in offsets.iter().enumerate() {
            let scale = 1.0 - kappa * offset;
            if scale <= 0.0 {
                return Err(MapError::InvalidDimension(format!(
                    "lane offset {offset} exceeds turn radius"
                )));
            }
            let id = LaneId((i * lanes + j) as u32);
            let len = ref_len * scale;
            let intervals = ((len / layout.sample_spacing) - 1e-9).ceil().max(1.0) as usize;
            let centerline = (0..=intervals)
                .map(|k| {
                    let s = if k == intervals {
                        len
                    } else {
                        k as f64 * layout.sample_spacing
                    };
                    LanePoint {
                        pose: curve_pose(&start, kappa, s / scale).offset_left(offset),
                        arc_length: s,
                        lane_id: id,
                    }
                })
                .collect();
            let neighbour = |target: f64| {
                offsets
                    .iter()
                    .position(|o| (o - target).abs() < 1e-9)
                    .map(|k| LaneId((i * lanes + k) as u32))
            };
            segments.push(LaneSegment {
                id,
                centerline,
                width: layout.lane_width,
                successors: if i + 1 < layout.pieces.len() {
                    vec![LaneId(((i + 1) * lanes + j) as u32)]
                } else {
                    Vec::new()
                },
                adjacent_left: neighbour(offset + layout.lane_width),
                adjacent_right: neighbour(offset - layout.lane_width),
            });
        }
        start = curve_pose(&start, kappa, ref_len);
    }
    MapGraph::new(segments, Vec::new())
}

/// Straight road along +x from the origin.
pub fn build_straight_map(
    length: f64,
    lane_width: f64,
    adjacent_lanes: usize,
    sample_spacing: f64,
) -> Result<MapGraph> {
    build_road(&RoadLayout {
        pieces: vec![RoadPiece::Straight { length }],
        lane_width,
        adjacent_lanes,
        sample_spacing,
        origin: Pose2::default(),
    })
}

/// Single circular arc starting at the origin heading along +x.
pub fn build_arc_map(
    radius: f64,
    sweep: f64,
    lane_width: f64,
    sample_spacing: f64,
    side: Side,
) -> Result<MapGraph> {
    build_road(&RoadLayout {
        pieces: vec![RoadPiece::Arc {
            radius,
            sweep,
            side,
        }],
        lane_width,
        adjacent_lanes: 0,
        sample_spacing,
        origin: Pose2::default(),
    })
}

/// Frame anchored at a lane point with its x-axis along the lane.
pub fn local_frame(point: &LanePoint) -> Pose2 {
    point.pose
}

#[derive(Debug, Clone, Default)]
struct SampleGrid {
    cells: HashMap<(i64, i64), Vec<(LaneId, usize)>>,
    min: (i64, i64),
    max: (i64, i64),
}

fn cell_of(p: [f64; 2]) -> (i64, i64) {
    (
        (p[0] / GRID_CELL).floor() as i64,
        (p[1] / GRID_CELL).floor() as i64,
    )
}

impl SampleGrid {
    fn build(segments: &BTreeMap<LaneId, LaneSegment>) -> Self {
        let mut grid = SampleGrid {
            min: (i64::MAX, i64::MAX),
            max: (i64::MIN, i64::MIN),
            ..Default::default()
        };
        for seg in segments.values() {
            for (i, p) in seg.centerline.iter().enumerate() {
                let c = cell_of(p.pose.position());
                grid.min = (grid.min.0.min(c.0), grid.min.1.min(c.1));
                grid.max = (grid.max.0.max(c.0), grid.max.1.max(c.1));
                grid.cells.entry(c).or_default().push((seg.id, i));
            }
        }
        grid
    }
}

/// Immutable lane graph.
#[derive(Debug, Clone)]
pub struct MapGraph {
    segments: BTreeMap<LaneId, LaneSegment>,
    anchors: Vec<SemanticAnchor>,
    grid: SampleGrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapDocument {
    pub format_version: u32,
    pub segments: Vec<LaneSegment>,
    #[serde(default)]
    pub anchors: Vec<SemanticAnchor>,
}

impl MapGraph {
    /// Validates references and builds the sample index.
    pub fn new(segments: Vec<LaneSegment>, anchors: Vec<SemanticAnchor>) -> Result<Self> {
        let mut by_id = BTreeMap::new();
        for seg in segments {
            if seg.centerline.len() < 2 {
                return Err(MapError::Malformed(format!("{} has < 2 points", seg.id)));
            }
            if !(seg.width > 0.0) {
                return Err(MapError::Malformed(format!("{} width {}", seg.id, seg.width)));
            }
            if seg.centerline[0].arc_length < 0.0
                || seg
                    .centerline
                    .windows(2)
                    .any(|w| w[1].arc_length <= w[0].arc_length)
            {
                return Err(MapError::Malformed(format!(
                    "{} arc lengths not strictly increasing from 0",
                    seg.id
                )));
            }
            if seg.centerline.iter().any(|p| p.lane_id != seg.id) {
                return Err(MapError::Malformed(format!(
                    "{} contains points of another lane",
                    seg.id
                )));
            }
            let id = seg.id;
            if by_id.insert(id, seg).is_some() {
                return Err(MapError::Malformed(format!("duplicate id {id}")));
            }
        }
        for seg in by_id.values() {
            for r in seg
                .successors
                .iter()
                .chain(seg.adjacent_left.iter())
                .chain(seg.adjacent_right.iter())
            {
                if !by_id.contains_key(r) {
                    return Err(MapError::UnknownLane(*r));
                }
            }
            if let Some(l) = seg.adjacent_left {
                if by_id[&l].adjacent_right != Some(seg.id) {
                    return Err(MapError::Malformed(format!(
                        "adjacency {} -> {} not symmetric",
                        seg.id, l
                    )));
                }
            }
            if let Some(r) = seg.adjacent_right {
                if by_id[&r].adjacent_left != Some(seg.id) {
                    return Err(MapError::Malformed(format!(
                        "adjacency {} -> {} not symmetric",
                        seg.id, r
                    )));
                }
            }
        }
        for a in &anchors {
            if !by_id.contains_key(&a.lane_id) {
                return Err(MapError::UnknownLane(a.lane_id));
            }
        }
        let grid = SampleGrid::build(&by_id);
        Ok(Self {
            segments: by_id,
            anchors,
            grid,
        })
    }

    pub fn empty() -> Self {
        Self {
            segments: BTreeMap::new(),
            anchors: Vec::new(),
            grid: SampleGrid::default(),
        }
    }

    pub fn with_anchor(mut self, anchor: SemanticAnchor) -> Result<Self> {
        if !self.segments.contains_key(&anchor.lane_id) {
            return Err(MapError::UnknownLane(anchor.lane_id));
        }
        self.anchors.push(anchor);
        Ok(self)
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn segments(&self) -> impl Iterator<Item = &LaneSegment> {
        self.segments.values()
    }

    pub fn segment(&self, id: LaneId) -> Result<&LaneSegment> {
        self.segments.get(&id).ok_or(MapError::UnknownLane(id))
    }

    pub fn anchors(&self) -> &[SemanticAnchor] {
        &self.anchors
    }

    pub fn sample_count(&self) -> usize {
        self.segments.values().map(|s| s.centerline.len()).sum()
    }

    /// Lane followed by up to `hops` first-successors.
    pub fn lane_chain(&self, start: LaneId, hops: usize) -> Vec<LaneId> {
        let mut chain = vec![start];
        let mut cur = start;
        for _ in 0..hops {
            match self.segments.get(&cur).and_then(|s| s.successors.first()) {
                Some(&next) if !chain.contains(&next) => {
                    chain.push(next);
                    cur = next;
                }
                _ => break,
            }
        }
        chain
    }

    fn localization(point: LanePoint, pose: &Pose2) -> Localization {
        let d = [pose.x - point.pose.x, pose.y - point.pose.y];
        let t = point.pose.tangent();
        let n = point.pose.left_normal();
        Localization {
            point,
            lateral_offset: d[0] * n[0] + d[1] * n[1],
            along_offset: d[0] * t[0] + d[1] * t[1],
        }
    }

    /// Sample point closest to `pose`. Ties resolve to the lowest
    /// (lane id, sample index).
    pub fn nearest_sample_point(&self, pose: &Pose2) -> Result<Localization> {
        if self.grid.cells.is_empty() {
            return Err(MapError::Empty);
        }
        let q = pose.position();
        let c = cell_of(q);
        let reach = [
            (c.0 - self.grid.min.0).abs(),
            (self.grid.max.0 - c.0).abs(),
            (c.1 - self.grid.min.1).abs(),
            (self.grid.max.1 - c.1).abs(),
        ]
        .into_iter()
        .max()
        .unwrap_or(0);
        let mut best: Option<(f64, LaneId, usize)> = None;
        let mut ring = 0i64;
        loop {
            for cx in (c.0 - ring)..=(c.0 + ring) {
                for cy in (c.1 - ring)..=(c.1 + ring) {
                    if (cx - c.0).abs() != ring && (cy - c.1).abs() != ring {
                        continue;
                    }
                    let Some(entries) = self.grid.cells.get(&(cx, cy)) else {
                        continue;
                    };
                    for &(lane, idx) in entries {
                        let p = self.segments[&lane].centerline[idx].pose;
                        let d2 = (p.x - q[0]) * (p.x - q[0]) + (p.y - q[1]) * (p.y - q[1]);
                        let cand = (d2, lane, idx);
                        if best.map_or(true, |b| {
                            (cand.0, cand.1, cand.2)
                                .partial_cmp(&(b.0, b.1, b.2))
                                .is_some_and(|o| o.is_lt())
                        }) {
                            best = Some(cand);
                        }
                    }
                }
            }
            if let Some((d2, _, _)) = best {
                let bound = ring as f64 * GRID_CELL;
                if d2 < bound * bound {
                    break;
                }
            }
            if ring > reach {
                break;
            }
            ring += 1;
        }
        let (_, lane, idx) = best.ok_or(MapError::Empty)?;
        Ok(Self::localization(
            self.segments[&lane].centerline[idx],
            pose,
        ))
    }

    /// Nearest sample restricted to one lane.
    pub fn nearest_on_lane(&self, lane: LaneId, pose: &Pose2) -> Result<Localization> {
        let seg = self.segment(lane)?;
        let q = pose.position();
        let p = seg
            .centerline
            .iter()
            .min_by(|a, b| {
                let da = (a.pose.x - q[0]).powi(2) + (a.pose.y - q[1]).powi(2);
                let db = (b.pose.x - q[0]).powi(2) + (b.pose.y - q[1]).powi(2);
                da.total_cmp(&db)
            })
            .ok_or(MapError::Empty)?;
        Ok(Self::localization(*p, pose))
    }

    /// Refines a sample match onto the neighbouring centerline chords so
    /// the matched point moves continuously with the pose.
    pub fn project(&self, loc: &Localization, pose: &Pose2) -> Localization {
        let Ok(seg) = self.segment(loc.point.lane_id) else {
            return *loc;
        };
        let pts = &seg.centerline;
        let Ok(i) = pts.binary_search_by(|p| p.arc_length.total_cmp(&loc.point.arc_length)) else {
            return *loc;
        };
        let q = pose.position();
        let mut best = (f64::INFINITY, *loc);
        for (a, b) in [(i.wrapping_sub(1), i), (i, i + 1)] {
            if a >= pts.len() || b >= pts.len() {
                continue;
            }
            let (pa, pb) = (pts[a].pose, pts[b].pose);
            let d = [pb.x - pa.x, pb.y - pa.y];
            let len2 = d[0] * d[0] + d[1] * d[1];
            let f = (((q[0] - pa.x) * d[0] + (q[1] - pa.y) * d[1]) / len2).clamp(0.0, 1.0);
            let foot = [pa.x + f * d[0], pa.y + f * d[1]];
            let dist2 = (q[0] - foot[0]).powi(2) + (q[1] - foot[1]).powi(2);
            if dist2 < best.0 {
                let point = LanePoint {
                    pose: pa.lerp(&pb, f),
                    arc_length: pts[a].arc_length + f * (pts[b].arc_length - pts[a].arc_length),
                    lane_id: seg.id,
                };
                best = (dist2, Self::localization(point, pose));
            }
        }
        best.1
    }

    /// Nearest sample, refined onto the centerline polyline.
    pub fn localize(&self, pose: &Pose2) -> Result<Localization> {
        let loc = self.nearest_sample_point(pose)?;
        Ok(self.project(&loc, pose))
    }

    /// Point `distance` metres further along the lane, following first
    /// successors across segment boundaries.
    pub fn advance_along_lane(&self, start: &LanePoint, distance: f64) -> Result<LanePoint> {
        if distance < 0.0 {
            return Err(MapError::NegativeDistance(distance));
        }
        let mut seg = self.segment(start.lane_id)?;
        let mut s = start.arc_length + distance;
        loop {
            let len = seg.length();
            if s <= len + ARC_EPS {
                return Ok(seg.point_at(s.min(len)));
            }
            match seg.successors.first() {
                Some(next) => {
                    s -= len;
                    seg = self.segment(*next)?;
                }
                None => {
                    return Err(MapError::OffEnd {
                        lane: seg.id,
                        remaining: s - len,
                    })
                }
            }
        }
    }

    /// Signed centerline curvature (left positive) around `point`.
    pub fn curvature_at(&self, point: &LanePoint) -> f64 {
        let Ok(seg) = self.segment(point.lane_id) else {
            return 0.0;
        };
        let pts = &seg.centerline;
        let i = pts
            .partition_point(|p| p.arc_length <= point.arc_length)
            .clamp(1, pts.len() - 1);
        angle_diff(pts[i].pose.heading, pts[i - 1].pose.heading)
            / (pts[i].arc_length - pts[i - 1].arc_length)
    }

    /// True if the point lies inside any lane polygon.
    pub fn is_on_road(&self, point: [f64; 2]) -> bool {
        self.segments
            .values()
            .any(|s| point_in_polygon(point, &s.polygon()))
    }

    pub fn to_document(&self) -> MapDocument {
        MapDocument {
            format_version: MAP_FORMAT_VERSION,
            segments: self.segments.values().cloned().collect(),
            anchors: self.anchors.clone(),
        }
    }

    pub fn from_document(doc: MapDocument) -> Result<Self> {
        if doc.format_version != MAP_FORMAT_VERSION {
            return Err(MapError::UnsupportedVersion(doc.format_version));
        }
        Self::new(doc.segments, doc.anchors)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_document(serde_json::from_str(text)?)
    }
}

impl PartialEq for MapGraph {
    fn eq(&self, other: &Self) -> bool {
        self.segments == other.segments && self.anchors == other.anchors
    }
}
