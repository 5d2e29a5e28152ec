//! Randomized scene/link generation, map-level splits and on-disk layout.
//!
//! ```text
//! <out>/maps/<map_id>/scene.json
//! <out>/maps/<map_id>/links.jsonl
//! <out>/splits.json
//! <out>/summary.json
//! ```

use std::fmt;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, Point, RadioLink, Rect, Scene};

/// Rejection attempts allowed per placed object.
pub const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

/// Fresh scenes drawn for one map before giving up.
const SCENE_RETRIES: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub n_maps: usize,
    pub n_base_stations: usize,
    pub n_sources: usize,
    pub map_side_range: (f64, f64),
    pub n_obstacles_range: (usize, usize),
    pub obstacle_side_range: (f64, f64),
    pub max_bounces: u32,
    pub seed: u64,
    pub split_fractions: (f64, f64, f64),
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            n_maps: 400,
            n_base_stations: 5,
            n_sources: 10,
            map_side_range: (80.0, 200.0),
            n_obstacles_range: (3, 8),
            obstacle_side_range: (10.0, 50.0),
            max_bounces: 1,
            seed: 0,
            split_fractions: (0.8, 0.1, 0.1),
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_maps < 3 {
            return bad(format!("n_maps = {} must be at least 3", self.n_maps));
        }
        if self.n_base_stations == 0 || self.n_sources == 0 {
            return bad("need at least one base station and one source per map".into());
        }
        let (a, b) = self.map_side_range;
        if !(a > 0.0 && a <= b) {
            return bad(format!("map_side_range ({a}, {b}) must be positive and ordered"));
        }
        let (a, b) = self.obstacle_side_range;
        if !(a > 0.0 && a <= b) {
            return bad(format!("obstacle_side_range ({a}, {b}) must be positive and ordered"));
        }
        let (a, b) = self.n_obstacles_range;
        if a > b {
            return bad(format!("n_obstacles_range ({a}, {b}) is empty"));
        }
        if self.max_bounces > 2 {
            return bad(format!("max_bounces = {} must be 0, 1 or 2", self.max_bounces));
        }
        let (tr, va, te) = self.split_fractions;
        if [tr, va, te].iter().any(|f| !(*f >= 0.0)) || ((tr + va + te) - 1.0).abs() > 1e-9 {
            return bad(format!("split fractions ({tr}, {va}, {te}) must be non-negative and sum to 1"));
        }
        Ok(())
    }

    /// Maps per split by largest-remainder rounding, ties to the earlier split.
    pub fn split_counts(&self) -> [usize; 3] {
        let (tr, va, te) = self.split_fractions;
        let exact = [tr, va, te].map(|f| f * self.n_maps as f64);
        let mut counts = exact.map(|e| e.floor() as usize);
        let mut left = self.n_maps - counts.iter().sum::<usize>();
        let mut order = [0usize, 1, 2];
        order.sort_by(|&i, &j| (exact[j] - exact[j].floor()).total_cmp(&(exact[i] - exact[i].floor())));
        for &i in order.iter().cycle() {
            if left == 0 {
                break;
            }
            counts[i] += 1;
            left -= 1;
        }
        counts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidArgument(format!(
                "unknown split '{other}' (expected train, val or test)"
            ))),
        }
    }
}

/// Serialized parameters of one radio path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub tau: f64,
    pub aoa: f64,
    pub aod: f64,
    pub bounces: u32,
}

/// One persisted (base station, source) link.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkRecord {
    pub map_id: String,
    pub bs_index: usize,
    pub ue_index: usize,
    pub los: bool,
    pub paths: Vec<PathRecord>,
}

impl LinkRecord {
    pub fn from_link(map_id: &str, link: &RadioLink) -> Self {
        LinkRecord {
            map_id: map_id.to_string(),
            bs_index: link.bs_index,
            ue_index: link.ue_index,
            los: link.los,
            paths: link
                .paths
                .iter()
                .map(|p| PathRecord {
                    tau: p.tau,
                    aoa: p.aoa,
                    aod: p.aod,
                    bounces: p.bounces,
                })
                .collect(),
        }
    }
}

/// Line format of `links.jsonl`.
#[derive(Serialize, Deserialize)]
struct LinkLine {
    bs: usize,
    ue: usize,
    los: bool,
    paths: Vec<PathRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl SplitManifest {
    pub fn maps(&self, split: Split) -> &[String] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub n_maps: usize,
    pub n_links: usize,
    pub n_dropped: usize,
    pub n_los: usize,
    pub n_nlos: usize,
    pub nlos_fraction: f64,
    pub maps_per_split: [usize; 3],
    pub links_per_split: [usize; 3],
}

/// A training/evaluation sample: one link together with its scene.
#[derive(Debug, Clone)]
pub struct Sample {
    pub scene: Arc<Scene>,
    pub record: LinkRecord,
    pub true_location: Point,
}

impl Sample {
    pub fn base_station(&self) -> Point {
        self.scene.base_stations[self.record.bs_index]
    }

    pub fn los(&self) -> bool {
        self.record.los
    }
}

pub fn map_id(index: usize) -> String {
    format!("map_{index:05}")
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

fn free_point(rng: &mut impl Rng, width: f64, height: f64, obstacles: &[Rect]) -> Result<Point> {
    for _ in 0..MAX_PLACEMENT_ATTEMPTS {
        let p = Point::new(rng.random_range(0.0..=width), rng.random_range(0.0..=height));
        if !obstacles.iter().any(|r| r.contains(p)) {
            return Ok(p);
        }
    }
    Err(Error::Generation(format!(
        "no free position for a node after {MAX_PLACEMENT_ATTEMPTS} attempts"
    )))
}

/// Draws one random scene; deterministic given the generator state.
pub fn generate_scene(rng: &mut impl Rng, config: &DatasetConfig) -> Result<Scene> {
    let width = uniform(rng, config.map_side_range);
    let height = uniform(rng, config.map_side_range);
    let (lo, hi) = config.n_obstacles_range;
    let n_obstacles = rng.random_range(lo..=hi);

    let mut obstacles: Vec<Rect> = Vec::with_capacity(n_obstacles);
    for _ in 0..n_obstacles {
        let mut placed = None;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let w = uniform(rng, config.obstacle_side_range);
            let h = uniform(rng, config.obstacle_side_range);
            if w >= width || h >= height {
                continue;
            }
            let r = Rect::new(rng.random_range(0.0..=width - w), rng.random_range(0.0..=height - h), w, h);
            if !obstacles.iter().any(|o| o.intersects(&r)) {
                placed = Some(r);
                break;
            }
        }
        obstacles.push(placed.ok_or_else(|| {
            Error::Generation(format!(
                "could not place obstacle {} after {MAX_PLACEMENT_ATTEMPTS} attempts",
                obstacles.len()
            ))
        })?);
    }

    let base_stations = (0..config.n_base_stations)
        .map(|_| free_point(rng, width, height, &obstacles))
        .collect::<Result<Vec<_>>>()?;
    let sources = (0..config.n_sources)
        .map(|_| free_point(rng, width, height, &obstacles))
        .collect::<Result<Vec<_>>>()?;

    Ok(Scene {
        width_m: width,
        height_m: height,
        obstacles,
        base_stations,
        sources,
    })
}

/// Scene and traced links for one map, with the count of dropped pairs.
pub struct GeneratedMap {
    pub map_id: String,
    pub scene: Scene,
    pub links: Vec<RadioLink>,
    pub n_dropped: usize,
}

/// Generates map `index` from its own stream of the configured seed.
pub fn generate_map(config: &DatasetConfig, index: usize) -> Result<GeneratedMap> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64);
    let mut last_err = None;
    for _ in 0..SCENE_RETRIES {
        let scene = match generate_scene(&mut rng, config) {
            Ok(s) => s,
            Err(e) => {
                last_err = Some(e);
                continue;
            }
        };
        let mut links = Vec::new();
        let mut n_dropped = 0;
        for bs in 0..scene.base_stations.len() {
            for ue in 0..scene.sources.len() {
                if scene.base_stations[bs] == scene.sources[ue] {
                    n_dropped += 1;
                    continue;
                }
                match geometry::trace_link(&scene, bs, ue, config.max_bounces)? {
                    Some(link) => links.push(link),
                    None => n_dropped += 1,
                }
            }
        }
        return Ok(GeneratedMap {
            map_id: map_id(index),
            scene,
            links,
            n_dropped,
        });
    }
    Err(last_err.unwrap_or_else(|| Error::Generation("scene retry budget exhausted".into())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer(&mut w, value).map_err(|e| Error::format(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| Error::format(path, format!("cannot open: {e}")))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::format(path, e))
}

fn map_dir(root: &Path, map_id: &str) -> PathBuf {
    root.join("maps").join(map_id)
}

fn write_map(root: &Path, map: &GeneratedMap) -> Result<()> {
    let dir = map_dir(root, &map.map_id);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    write_json(&dir.join("scene.json"), &map.scene)?;
    let path = dir.join("links.jsonl");
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    let mut w = BufWriter::new(file);
    for link in &map.links {
        let rec = LinkRecord::from_link(&map.map_id, link);
        let line = LinkLine {
            bs: rec.bs_index,
            ue: rec.ue_index,
            los: rec.los,
            paths: rec.paths,
        };
        serde_json::to_writer(&mut w, &line).map_err(|e| Error::format(&path, e))?;
        w.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))
}

/// Generates every map, writes the directory layout and returns counts.
pub fn generate_dataset(config: &DatasetConfig, out_dir: &Path) -> Result<DatasetSummary> {
    config.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let maps = (0..config.n_maps)
        .into_par_iter()
        .map(|i| generate_map(config, i))
        .collect::<Result<Vec<_>>>()?;
    for map in &maps {
        write_map(out_dir, map)?;
    }

    let counts = config.split_counts();
    let ids: Vec<String> = maps.iter().map(|m| m.map_id.clone()).collect();
    let manifest = SplitManifest {
        train: ids[..counts[0]].to_vec(),
        val: ids[counts[0]..counts[0] + counts[1]].to_vec(),
        test: ids[counts[0] + counts[1]..].to_vec(),
    };
    write_json(&out_dir.join("splits.json"), &manifest)?;

    let n_links: usize = maps.iter().map(|m| m.links.len()).sum();
    let n_los = maps.iter().flat_map(|m| &m.links).filter(|l| l.los).count();
    let mut links_per_split = [0; 3];
    let mut offset = 0;
    for (s, &c) in counts.iter().enumerate() {
        links_per_split[s] = maps[offset..offset + c].iter().map(|m| m.links.len()).sum();
        offset += c;
    }
    let summary = DatasetSummary {
        n_maps: maps.len(),
        n_links,
        n_dropped: maps.iter().map(|m| m.n_dropped).sum(),
        n_los,
        n_nlos: n_links - n_los,
        nlos_fraction: if n_links == 0 { 0.0 } else { (n_links - n_los) as f64 / n_links as f64 },
        maps_per_split: counts,
        links_per_split,
    };
    write_json(&out_dir.join("summary.json"), &summary)?;
    Ok(summary)
}

pub fn load_manifest(dir: &Path) -> Result<SplitManifest> {
    read_json(&dir.join("splits.json"))
}

pub fn load_scene(dir: &Path, map_id: &str) -> Result<Scene> {
    let path = map_dir(dir, map_id).join("scene.json");
    let scene: Scene = read_json(&path)?;
    scene.validate().map_err(|e| Error::format(&path, e))?;
    Ok(scene)
}

pub fn load_links(dir: &Path, map_id: &str) -> Result<Vec<LinkRecord>> {
    let path = map_dir(dir, map_id).join("links.jsonl");
    let file = File::open(&path).map_err(|e| Error::format(&path, format!("cannot open: {e}")))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let l: LinkLine =
            serde_json::from_str(&line).map_err(|e| Error::format(&path, format!("line {}: {e}", n + 1)))?;
        if l.paths.is_empty() || l.paths.iter().any(|p| !(p.tau > 0.0)) {
            return Err(Error::format(&path, format!("line {}: empty link or non-positive delay", n + 1)));
        }
        out.push(LinkRecord {
            map_id: map_id.to_string(),
            bs_index: l.bs,
            ue_index: l.ue,
            los: l.los,
            paths: l.paths,
        });
    }
    Ok(out)
}

/// Loads every sample of `split`, ordered by (map_id, bs, ue).
pub fn load_dataset(dir: &Path, split: Split) -> Result<Vec<Sample>> {
    let manifest = load_manifest(dir)?;
    let mut ids = manifest.maps(split).to_vec();
    ids.sort();
    let mut samples = Vec::new();
    for id in &ids {
        let scene = Arc::new(load_scene(dir, id)?);
        let mut links = load_links(dir, id)?;
        links.sort_by_key(|l| (l.bs_index, l.ue_index));
        for record in links {
            let path = map_dir(dir, id).join("links.jsonl");
            let true_location = *scene
                .sources
                .get(record.ue_index)
                .ok_or_else(|| Error::format(&path, format!("source index {} out of range", record.ue_index)))?;
            if record.bs_index >= scene.base_stations.len() {
                return Err(Error::format(&path, format!("base station index {} out of range", record.bs_index)));
            }
            samples.push(Sample {
                scene: Arc::clone(&scene),
                record,
                true_location,
            });
        }
    }
    Ok(samples)
}

/// Samples built in memory without touching the filesystem.
pub fn generate_samples(config: &DatasetConfig, maps: std::ops::Range<usize>) -> Result<Vec<Sample>> {
    let generated = maps
        .into_par_iter()
        .map(|i| generate_map(config, i))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for map in generated {
        let scene = Arc::new(map.scene);
        for link in &map.links {
            out.push(Sample {
                scene: Arc::clone(&scene),
                record: LinkRecord::from_link(&map.map_id, link),
                true_location: scene.sources[link.ue_index],
            });
        }
    }
    Ok(out)
}
