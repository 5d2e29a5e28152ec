//! Model input representations and the Gaussian heatmap target.
//!
//! Maps are padded to a square on the high-coordinate sides so that the
//! world origin stays at pixel (row 0, col 0) and `row` follows `y`.

use serde::{Deserialize, Serialize};

use crate::dataset::PathRecord;
use crate::error::{Error, Result};
use crate::geometry::{Point, RadioPath, Scene};

/// Gaussian target values below this are stored as zero.
pub const TARGET_FLOOR: f32 = 1e-4;

/// Delay and angle access shared by traced paths and loaded records.
pub trait PathFeatures {
    fn tau(&self) -> f64;
    fn aoa(&self) -> f64;
    fn aod(&self) -> f64;
}

impl PathFeatures for RadioPath {
    fn tau(&self) -> f64 {
        self.tau
    }
    fn aoa(&self) -> f64 {
        self.aoa
    }
    fn aod(&self) -> f64 {
        self.aod
    }
}

impl PathFeatures for PathRecord {
    fn tau(&self) -> f64 {
        self.tau
    }
    fn aoa(&self) -> f64 {
        self.aoa
    }
    fn aod(&self) -> f64 {
        self.aod
    }
}

/// Which input variables a model may see.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationFlags {
    pub use_map: bool,
    pub use_aoa: bool,
    pub use_aod: bool,
}

impl Default for AblationFlags {
    fn default() -> Self {
        AblationFlags {
            use_map: true,
            use_aoa: true,
            use_aod: true,
        }
    }
}

impl AblationFlags {
    pub fn validate(&self) -> Result<()> {
        if !(self.use_map || self.use_aoa || self.use_aod) {
            return Err(Error::InvalidConfig("at least one input group must stay enabled".into()));
        }
        Ok(())
    }

    /// Number of per-path columns: x, y, tau and the enabled angles.
    pub fn path_columns(&self) -> usize {
        3 + self.use_aoa as usize + self.use_aod as usize
    }
}

/// Named input-ablation variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    Base,
    NoMap,
    NoAod,
    NoAoa,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [Ablation::Base, Ablation::NoMap, Ablation::NoAod, Ablation::NoAoa];

    pub fn as_str(self) -> &'static str {
        match self {
            Ablation::Base => "base",
            Ablation::NoMap => "no_map",
            Ablation::NoAod => "no_aod",
            Ablation::NoAoa => "no_aoa",
        }
    }

    pub fn flags(self) -> AblationFlags {
        let mut f = AblationFlags::default();
        match self {
            Ablation::Base => {}
            Ablation::NoMap => f.use_map = false,
            Ablation::NoAod => f.use_aod = false,
            Ablation::NoAoa => f.use_aoa = false,
        }
        f
    }
}

impl std::fmt::Display for Ablation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Ablation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown ablation '{s}' (expected base, no_map, no_aod or no_aoa)")))
    }
}

/// Meters ↔ pixels for a map padded to a square of side `pad_side_m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoTransform {
    pub pad_side_m: f64,
    pub image_size: usize,
    pub scale: f64,
}

impl GeoTransform {
    pub fn new(width_m: f64, height_m: f64, image_size: usize) -> Result<Self> {
        let pad_side_m = width_m.max(height_m);
        if !(pad_side_m > 0.0) || image_size == 0 {
            return Err(Error::InvalidArgument(format!(
                "cannot build a transform for a {width_m}x{height_m} map at {image_size} px"
            )));
        }
        Ok(GeoTransform {
            pad_side_m,
            image_size,
            scale: pad_side_m / image_size as f64,
        })
    }

    pub fn for_scene(scene: &Scene, image_size: usize) -> Result<Self> {
        Self::new(scene.width_m, scene.height_m, image_size)
    }

    /// `(row, col)` of the pixel owning `p`, clamped to the image.
    pub fn world_to_pixel(&self, p: Point) -> Result<(usize, usize)> {
        let side = self.pad_side_m;
        if !(p.x >= 0.0 && p.y >= 0.0 && p.x <= side && p.y <= side) {
            return Err(Error::OutOfBounds { x: p.x, y: p.y, side });
        }
        let n = self.image_size as f64;
        let last = self.image_size - 1;
        let col = ((p.x * n / side).floor() as usize).min(last);
        let row = ((p.y * n / side).floor() as usize).min(last);
        Ok((row, col))
    }

    /// World position of a (possibly fractional) pixel-center coordinate.
    pub fn pixel_to_world(&self, row: f64, col: f64) -> Point {
        Point::new((col + 0.5) * self.scale, (row + 0.5) * self.scale)
    }
}

/// Single-channel `size × size` grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub size: usize,
    pub data: Vec<f32>,
}

impl Heatmap {
    pub fn zeros(size: usize) -> Self {
        Heatmap {
            size,
            data: vec![0.0; size * size],
        }
    }

    pub fn from_vec(size: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != size * size {
            return Err(Error::Shape(format!(
                "heatmap of side {size} needs {} values, got {}",
                size * size,
                data.len()
            )));
        }
        Ok(Heatmap { size, data })
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.size + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: f32) {
        self.data[row * self.size + col] = v;
    }

    pub fn max(&self) -> f32 {
        self.data.iter().copied().fold(f32::NEG_INFINITY, f32::max)
    }
}

/// Three stacked `size × size` channels: obstacles, AoA rays, AoD rays.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSample {
    pub size: usize,
    pub data: Vec<f32>,
    pub transform: GeoTransform,
}

impl ImageSample {
    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.size * self.size;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn get(&self, c: usize, row: usize, col: usize) -> f32 {
        self.data[(c * self.size + row) * self.size + col]
    }
}

fn shortest<P: PathFeatures>(paths: &[P]) -> Result<&P> {
    paths
        .iter()
        .min_by(|a, b| a.tau().total_cmp(&b.tau()))
        .ok_or_else(|| Error::Encoding("link has no paths".into()))
}

fn path_row<P: PathFeatures>(p: &P, w: Point, flags: AblationFlags, out: &mut Vec<f64>) {
    out.extend([w.x, w.y, p.tau()]);
    if flags.use_aoa {
        out.push(p.aoa());
    }
    if flags.use_aod {
        out.push(p.aod());
    }
}

/// `(w_x, w_y, τ, ψ, φ)` of the shortest path, minus disabled angles.
pub fn encode_vector<P: PathFeatures>(paths: &[P], w: Point, flags: AblationFlags) -> Result<Vec<f64>> {
    let p = shortest(paths)?;
    let mut out = Vec::with_capacity(5);
    path_row(p, w, flags, &mut out);
    Ok(out)
}

/// One row per path, sorted by delay; row-major `K × columns`.
pub fn encode_matrix<P: PathFeatures>(paths: &[P], w: Point, flags: AblationFlags) -> Result<(usize, Vec<f64>)> {
    if paths.is_empty() {
        return Err(Error::Encoding("link has no paths".into()));
    }
    let mut order: Vec<&P> = paths.iter().collect();
    order.sort_by(|a, b| a.tau().total_cmp(&b.tau()));
    let mut out = Vec::with_capacity(paths.len() * 5);
    for p in order {
        path_row(p, w, flags, &mut out);
    }
    Ok((paths.len(), out))
}

/// Pixel where a ray leaving the center of `(row, col)` at `angle` exits the image.
fn ray_exit(size: usize, row: usize, col: usize, angle: f64) -> (usize, usize) {
    let (dc, dr) = (angle.cos(), angle.sin());
    let (c0, r0) = (col as f64 + 0.5, row as f64 + 0.5);
    let n = size as f64;
    let mut t = f64::INFINITY;
    if dc > 0.0 {
        t = t.min((n - c0) / dc);
    } else if dc < 0.0 {
        t = t.min(-c0 / dc);
    }
    if dr > 0.0 {
        t = t.min((n - r0) / dr);
    } else if dr < 0.0 {
        t = t.min(-r0 / dr);
    }
    let clamp = |v: f64| (v.floor().max(0.0) as usize).min(size - 1);
    (clamp(r0 + dr * t), clamp(c0 + dc * t))
}

/// Bresenham line between two pixels, both ends included.
fn draw_line(channel: &mut [f32], size: usize, from: (usize, usize), to: (usize, usize)) {
    let (mut r, mut c) = (from.0 as i64, from.1 as i64);
    let (r1, c1) = (to.0 as i64, to.1 as i64);
    let dr = (r1 - r).abs();
    let dc = -(c1 - c).abs();
    let sr = if r < r1 { 1 } else { -1 };
    let sc = if c < c1 { 1 } else { -1 };
    let mut err = dr + dc;
    loop {
        channel[r as usize * size + c as usize] = 1.0;
        if r == r1 && c == c1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dc {
            err += dc;
            r += sr;
        }
        if e2 <= dr {
            err += dr;
            c += sc;
        }
    }
}

fn draw_ray(channel: &mut [f32], size: usize, start: (usize, usize), angle: f64) {
    let end = ray_exit(size, start.0, start.1, angle);
    draw_line(channel, size, start, end);
}

/// Renders obstacles, arrival rays and departure rays from the base station.
pub fn encode_image<P: PathFeatures>(
    scene: &Scene,
    w: Point,
    paths: &[P],
    size: usize,
    flags: AblationFlags,
) -> Result<ImageSample> {
    if paths.is_empty() {
        return Err(Error::Encoding("link has no paths".into()));
    }
    if !scene.base_stations.contains(&w) {
        return Err(Error::Encoding(format!("({}, {}) is not a base station of the scene", w.x, w.y)));
    }
    let t = GeoTransform::for_scene(scene, size)?;
    let plane = size * size;
    let mut data = vec![0.0f32; 3 * plane];

    if flags.use_map {
        let mask = &mut data[..plane];
        for r in &scene.obstacles {
            // pixel centers inside the closed rectangle
            let first = |lo: f64| ((lo / t.scale - 0.5).ceil().max(0.0)) as usize;
            let last = |hi: f64| (hi / t.scale - 0.5).floor();
            let (c0, r0) = (first(r.x), first(r.y));
            let (c1, r1) = (last(r.x_max()), last(r.y_max()));
            if c1 < 0.0 || r1 < 0.0 {
                continue;
            }
            let (c1, r1) = ((c1 as usize).min(size - 1), (r1 as usize).min(size - 1));
            for row in r0..=r1 {
                for col in c0..=c1 {
                    mask[row * size + col] = 1.0;
                }
            }
        }
    }
    let start = t.world_to_pixel(w)?;
    if flags.use_aoa {
        let ch = &mut data[plane..2 * plane];
        for p in paths {
            draw_ray(ch, size, start, p.aoa());
        }
    }
    if flags.use_aod {
        let ch = &mut data[2 * plane..];
        for p in paths {
            draw_ray(ch, size, start, p.aod());
        }
    }
    Ok(ImageSample {
        size,
        data,
        transform: t,
    })
}

/// Gaussian kernel of width `sigma_px` centered on the pixel of `v`.
pub fn encode_target(t: &GeoTransform, v: Point, sigma_px: f64) -> Result<Heatmap> {
    if !(sigma_px > 0.0) {
        return Err(Error::InvalidArgument(format!("sigma_px = {sigma_px} must be positive")));
    }
    let (vr, vc) = t.world_to_pixel(v)?;
    let size = t.image_size;
    let mut h = Heatmap::zeros(size);
    let denom = 2.0 * sigma_px * sigma_px;
    // beyond this radius exp(-d²/2σ²) < TARGET_FLOOR
    let reach = (sigma_px * (2.0 * (1.0 / TARGET_FLOOR as f64).ln()).sqrt()).ceil() as usize + 1;
    let rows = vr.saturating_sub(reach)..=(vr + reach).min(size - 1);
    for r in rows {
        for c in vc.saturating_sub(reach)..=(vc + reach).min(size - 1) {
            let dr = r as f64 - vr as f64;
            let dc = c as f64 - vc as f64;
            let val = (-(dr * dr + dc * dc) / denom).exp() as f32;
            if val >= TARGET_FLOOR {
                h.set(r, c, val);
            }
        }
    }
    Ok(h)
}
