//! 2-D scenes and specular multipath tracing.
//!
//! Paths are traced with the image-source method over the walls of
//! axis-aligned rectangular obstacles. Polylines run from the base station
//! to the source node; angles are bearings counter-clockwise from +x.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Minimum overlap length (m) for a segment to count as entering an obstacle.
const BLOCK_EPS: f64 = 1e-9;

/// Polylines closer than this (m) vertex-by-vertex are the same path.
const DEDUP_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn cross(self, other: Point) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Point) -> f64 {
        (self - other).norm()
    }
}

impl From<[f64; 2]> for Point {
    fn from([x, y]: [f64; 2]) -> Self {
        Point { x, y }
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, k: f64) -> Point {
        Point::new(self.x * k, self.y * k)
    }
}

/// Axis-aligned rectangle `[x, x+w] × [y, y+h]` in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl Rect {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Rect { x, y, w, h }
    }

    pub fn x_max(&self) -> f64 {
        self.x + self.w
    }

    pub fn y_max(&self) -> f64 {
        self.y + self.h
    }

    /// Closed containment (boundary included).
    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.x && p.x <= self.x_max() && p.y >= self.y && p.y <= self.y_max()
    }

    pub fn contains_strictly(&self, p: Point) -> bool {
        p.x > self.x && p.x < self.x_max() && p.y > self.y && p.y < self.y_max()
    }

    /// True when the closed rectangles share at least one point.
    pub fn intersects(&self, other: &Rect) -> bool {
        self.x <= other.x_max()
            && other.x <= self.x_max()
            && self.y <= other.y_max()
            && other.y <= self.y_max()
    }

    /// The four walls, each with its outward unit normal.
    pub fn walls(&self) -> [Wall; 4] {
        let (x0, y0, x1, y1) = (self.x, self.y, self.x_max(), self.y_max());
        [
            Wall::new(Point::new(x0, y0), Point::new(x1, y0), Point::new(0.0, -1.0)),
            Wall::new(Point::new(x1, y0), Point::new(x1, y1), Point::new(1.0, 0.0)),
            Wall::new(Point::new(x1, y1), Point::new(x0, y1), Point::new(0.0, 1.0)),
            Wall::new(Point::new(x0, y1), Point::new(x0, y0), Point::new(-1.0, 0.0)),
        ]
    }

    /// Does the open segment `(a, b)` pass through the open interior?
    ///
    /// Parametric slab clipping; the overlap must exceed [`BLOCK_EPS`] meters,
    /// so grazing a corner or sliding along an edge is not a crossing.
    pub fn blocks(&self, a: Point, b: Point) -> bool {
        let d = b - a;
        let len = d.norm();
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for (p, dp, min, max) in [(a.x, d.x, self.x, self.x_max()), (a.y, d.y, self.y, self.y_max())] {
            if dp == 0.0 {
                if p <= min + BLOCK_EPS || p >= max - BLOCK_EPS {
                    return false;
                }
            } else {
                let (t0, t1) = ((min - p) / dp, (max - p) / dp);
                lo = lo.max(t0.min(t1));
                hi = hi.min(t0.max(t1));
            }
        }
        (hi - lo) * len > BLOCK_EPS
    }
}

/// A reflecting wall segment with its outward normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wall {
    pub a: Point,
    pub b: Point,
    pub normal: Point,
}

impl Wall {
    pub fn new(a: Point, b: Point, normal: Point) -> Self {
        Wall { a, b, normal }
    }

    /// Signed distance of `p` from the wall line, positive on the outward side.
    pub fn side(&self, p: Point) -> f64 {
        (p - self.a).dot(self.normal)
    }

    pub fn length(&self) -> f64 {
        self.a.distance(self.b)
    }
}

/// A 2-D map with rectangular obstacles, base stations and source nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub width_m: f64,
    pub height_m: f64,
    pub obstacles: Vec<Rect>,
    pub base_stations: Vec<Point>,
    pub sources: Vec<Point>,
}

impl Scene {
    /// An obstacle-free scene with no nodes.
    pub fn empty(width_m: f64, height_m: f64) -> Self {
        Scene {
            width_m,
            height_m,
            obstacles: Vec::new(),
            base_stations: Vec::new(),
            sources: Vec::new(),
        }
    }

    pub fn in_bounds(&self, p: Point) -> bool {
        p.x >= 0.0 && p.x <= self.width_m && p.y >= 0.0 && p.y <= self.height_m
    }

    pub fn inside_obstacle(&self, p: Point) -> bool {
        self.obstacles.iter().any(|r| r.contains_strictly(p))
    }

    pub fn walls(&self) -> impl Iterator<Item = Wall> + '_ {
        self.obstacles.iter().flat_map(|r| r.walls())
    }

    /// Checks every structural invariant of a scene.
    pub fn validate(&self) -> Result<()> {
        if !(self.width_m > 0.0 && self.height_m > 0.0) {
            return Err(Error::DegenerateGeometry(format!(
                "map size {}x{} must be positive",
                self.width_m, self.height_m
            )));
        }
        for (i, r) in self.obstacles.iter().enumerate() {
            if !(r.w > 0.0 && r.h > 0.0) {
                return Err(Error::DegenerateGeometry(format!("obstacle {i} has non-positive size")));
            }
            if r.x < 0.0 || r.y < 0.0 || r.x_max() > self.width_m || r.y_max() > self.height_m {
                return Err(Error::DegenerateGeometry(format!("obstacle {i} exceeds map bounds")));
            }
        }
        for p in self.base_stations.iter().chain(&self.sources) {
            if self.inside_obstacle(*p) {
                return Err(Error::DegenerateGeometry(format!(
                    "node ({}, {}) lies inside an obstacle",
                    p.x, p.y
                )));
            }
        }
        Ok(())
    }

    fn segment_clear(&self, a: Point, b: Point) -> bool {
        !self.obstacles.iter().any(|r| r.blocks(a, b))
    }
}

/// True iff the open segment `(a, b)` crosses no obstacle interior.
pub fn los_visible(scene: &Scene, a: Point, b: Point) -> Result<bool> {
    if a == b {
        return Err(Error::DegenerateGeometry("visibility query with a == b".into()));
    }
    Ok(scene.segment_clear(a, b))
}

/// Reflection of `p` across the infinite line through `wall_a`–`wall_b`.
pub fn mirror_reflect(wall_a: Point, wall_b: Point, p: Point) -> Result<Point> {
    let d = wall_b - wall_a;
    let len = d.norm();
    if len == 0.0 {
        return Err(Error::DegenerateGeometry("zero-length wall".into()));
    }
    let u = d * (1.0 / len);
    let foot = wall_a + u * (p - wall_a).dot(u);
    Ok(foot * 2.0 - p)
}

/// Bearing of `to` seen from `from`, counter-clockwise from +x, in `(-π, π]`.
pub fn bearing(from: Point, to: Point) -> f64 {
    let a = (to.y - from.y).atan2(to.x - from.x);
    if a <= -PI {
        a + 2.0 * PI
    } else {
        a
    }
}

/// Delay and angles of a polyline running from base station to source.
///
/// Returns `(tau, aoa, aod)`: AoA looks from the base station toward the
/// first vertex after it, AoD from the source toward the vertex before it.
pub fn path_parameters(polyline: &[Point]) -> Result<(f64, f64, f64)> {
    if polyline.len() < 2 {
        return Err(Error::DegenerateGeometry("polyline needs at least two vertices".into()));
    }
    let mut length = 0.0;
    for pair in polyline.windows(2) {
        let seg = pair[0].distance(pair[1]);
        if seg == 0.0 {
            return Err(Error::DegenerateGeometry("repeated consecutive polyline vertex".into()));
        }
        length += seg;
    }
    let n = polyline.len();
    let aoa = bearing(polyline[0], polyline[1]);
    let aod = bearing(polyline[n - 1], polyline[n - 2]);
    Ok((length / SPEED_OF_LIGHT, aoa, aod))
}

/// One geometric propagation route between a base station and a source.
#[derive(Debug, Clone, PartialEq)]
pub struct RadioPath {
    pub tau: f64,
    pub aoa: f64,
    pub aod: f64,
    pub bounces: u32,
    /// Base station first, source last.
    pub vertices: Vec<Point>,
}

impl RadioPath {
    fn from_polyline(vertices: Vec<Point>) -> Result<Self> {
        let (tau, aoa, aod) = path_parameters(&vertices)?;
        Ok(RadioPath {
            tau,
            aoa,
            aod,
            bounces: (vertices.len() - 2) as u32,
            vertices,
        })
    }

    pub fn length(&self) -> f64 {
        self.vertices.windows(2).map(|s| s[0].distance(s[1])).sum()
    }
}

/// All traced paths between one base station and one source, sorted by delay.
#[derive(Debug, Clone, PartialEq)]
pub struct RadioLink {
    pub bs_index: usize,
    pub ue_index: usize,
    pub paths: Vec<RadioPath>,
    pub los: bool,
}

/// Intersection of segment `p→q` with a wall, strictly inside both.
fn hit_wall(p: Point, q: Point, wall: &Wall) -> Option<Point> {
    let r = q - p;
    let s = wall.b - wall.a;
    let denom = r.cross(s);
    if denom == 0.0 {
        return None;
    }
    let ap = wall.a - p;
    let t = ap.cross(s) / denom;
    let u = ap.cross(r) / denom;
    const EDGE: f64 = 1e-12;
    if t > EDGE && t < 1.0 - EDGE && u > EDGE && u < 1.0 - EDGE {
        Some(p + r * t)
    } else {
        None
    }
}

fn single_bounce(scene: &Scene, w: Point, v: Point, wall: &Wall) -> Option<Vec<Point>> {
    if wall.side(w) <= BLOCK_EPS || wall.side(v) <= BLOCK_EPS {
        return None;
    }
    let image = mirror_reflect(wall.a, wall.b, v).ok()?;
    let hit = hit_wall(w, image, wall)?;
    if hit == w || hit == v {
        return None;
    }
    (scene.segment_clear(w, hit) && scene.segment_clear(hit, v)).then(|| vec![w, hit, v])
}

fn double_bounce(scene: &Scene, w: Point, v: Point, first: &Wall, second: &Wall) -> Option<Vec<Point>> {
    if first == second || first.side(w) <= BLOCK_EPS || second.side(v) <= BLOCK_EPS {
        return None;
    }
    let image_v = mirror_reflect(second.a, second.b, v).ok()?;
    let image_vv = mirror_reflect(first.a, first.b, image_v).ok()?;
    let p1 = hit_wall(w, image_vv, first)?;
    let p2 = hit_wall(p1, image_v, second)?;
    if first.side(p2) <= BLOCK_EPS || second.side(p1) <= BLOCK_EPS {
        return None;
    }
    let clear = scene.segment_clear(w, p1) && scene.segment_clear(p1, p2) && scene.segment_clear(p2, v);
    clear.then(|| vec![w, p1, p2, v])
}

fn same_polyline(a: &[Point], b: &[Point]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(p, q)| p.distance(*q) <= DEDUP_EPS)
}

/// Traces LOS and specular paths with up to `max_bounces` reflections.
///
/// Returns `Ok(None)` when no path connects the two points.
pub fn trace_paths(scene: &Scene, w: Point, v: Point, max_bounces: u32) -> Result<Option<RadioLink>> {
    if w == v {
        return Err(Error::DegenerateGeometry("base station and source coincide".into()));
    }
    if max_bounces > 2 {
        return Err(Error::DegenerateGeometry(format!(
            "max_bounces = {max_bounces} is not supported (0, 1 or 2)"
        )));
    }
    if scene.inside_obstacle(w) || scene.inside_obstacle(v) {
        return Err(Error::DegenerateGeometry("path endpoint inside an obstacle".into()));
    }

    let mut polylines: Vec<Vec<Point>> = Vec::new();
    if scene.segment_clear(w, v) {
        polylines.push(vec![w, v]);
    }
    let walls: Vec<Wall> = scene.walls().collect();
    if max_bounces >= 1 {
        polylines.extend(walls.iter().filter_map(|wall| single_bounce(scene, w, v, wall)));
    }
    if max_bounces >= 2 {
        for first in &walls {
            for second in &walls {
                if let Some(poly) = double_bounce(scene, w, v, first, second) {
                    polylines.push(poly);
                }
            }
        }
    }

    let mut paths: Vec<RadioPath> = Vec::with_capacity(polylines.len());
    for poly in polylines {
        if paths.iter().any(|p| same_polyline(&p.vertices, &poly)) {
            continue;
        }
        paths.push(RadioPath::from_polyline(poly)?);
    }
    if paths.is_empty() {
        return Ok(None);
    }
    paths.sort_by(|a, b| {
        a.tau
            .total_cmp(&b.tau)
            .then(a.bounces.cmp(&b.bounces))
            .then(a.aoa.total_cmp(&b.aoa))
    });
    let los = paths[0].bounces == 0;
    Ok(Some(RadioLink {
        bs_index: 0,
        ue_index: 0,
        paths,
        los,
    }))
}

/// [`trace_paths`] between the scene's `bs`-th base station and `ue`-th source.
pub fn trace_link(scene: &Scene, bs: usize, ue: usize, max_bounces: u32) -> Result<Option<RadioLink>> {
    let w = *scene
        .base_stations
        .get(bs)
        .ok_or_else(|| Error::InvalidArgument(format!("no base station {bs}")))?;
    let v = *scene
        .sources
        .get(ue)
        .ok_or_else(|| Error::InvalidArgument(format!("no source {ue}")))?;
    Ok(trace_paths(scene, w, v, max_bounces)?.map(|mut link| {
        link.bs_index = bs;
        link.ue_index = ue;
        link
    }))
}
