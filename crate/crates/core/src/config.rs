//! `key = value` run configuration shared by all commands.
//!
//! Lines starting with `#` and blank lines are ignored. Unknown keys and
//! malformed values are errors. Keys whose default is `auto` are derived from
//! the model kind or image size when left unset.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::dataset::DatasetConfig;
use crate::error::{Error, Result};
use crate::eval::EvalOptions;
use crate::models::{ModelKind, TrainConfig};
use crate::postprocess::TopKParams;

/// `(key, default, description)` for every accepted key.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("n_maps", "400", "number of generated maps"),
    ("n_base_stations", "5", "base stations per map"),
    ("n_sources", "10", "user equipment positions per map"),
    ("map_side_min", "80", "smallest map side (m)"),
    ("map_side_max", "200", "largest map side (m)"),
    ("n_obstacles_min", "3", "fewest obstacles per map"),
    ("n_obstacles_max", "8", "most obstacles per map"),
    ("obstacle_side_min", "10", "smallest obstacle side (m)"),
    ("obstacle_side_max", "50", "largest obstacle side (m)"),
    ("max_bounces", "1", "reflection order of the ray tracer (0-2)"),
    ("split_train", "0.8", "fraction of maps in the training split"),
    ("split_val", "0.1", "fraction of maps in the validation split"),
    ("split_test", "0.1", "fraction of maps in the test split"),
    ("seed", "0", "seed for dataset generation and training"),
    ("learning_rate", "0.0003", "Adam base learning rate"),
    ("batch_size", "auto", "500 for mlp, 128 for pathcnn and unet"),
    ("micro_batch", "16", "heatmap samples per forward pass"),
    ("epochs", "auto", "30 for mlp and pathcnn, 15 for unet"),
    ("dice_weight", "0", "weight of the dice term in the heatmap loss"),
    ("image_size", "224", "heatmap side (px)"),
    ("sigma_px", "3", "Gaussian target width (px)"),
    ("unet_levels", "4", "down/up levels of the heatmap net"),
    ("unet_base_width", "32", "channels of the first heatmap-net level"),
    ("topk_threshold_px", "auto", "mode separation for top-K (10 px at 224 px, scaled)"),
    ("topk_radius_px", "auto", "argmax search radius for top-K (15 px at 224 px, scaled)"),
    ("thresholds_m", "1,2,5,10,20,30,40,50", "accuracy thresholds (m)"),
    ("n_bins", "10", "uncertainty bins"),
    ("plots", "true", "write SVG figures during evaluation"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            values: KEYS.iter().map(|(k, v, _)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("cannot parse {key} = '{v}'")))
}

impl RunConfig {
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::InvalidConfig(format!("line {}: expected key = value, got '{line}'", n + 1)));
            };
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value.to_string();
                Ok(())
            }
            None => Err(Error::InvalidConfig(format!("unknown key '{key}'"))),
        }
    }

    /// Applies a `key=value` override.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("expected key=value, got '{pair}'")))?;
        self.set(k.trim(), v.trim())?;
        self.check()
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).expect("known key")
    }

    fn typed<T: FromStr>(&self, key: &str) -> Result<T> {
        parse(key, self.get(key))
    }

    fn auto<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            "auto" => Ok(None),
            v => parse(key, v).map(Some),
        }
    }

    /// Parses every value once so that errors surface at load time.
    fn check(&self) -> Result<()> {
        self.dataset()?.validate()?;
        self.train(ModelKind::Unet)?.validate()?;
        self.topk(224)?;
        self.eval_options(224)?;
        self.typed::<bool>("plots")?;
        Ok(())
    }

    pub fn seed(&self) -> Result<u64> {
        self.typed("seed")
    }

    pub fn plots(&self) -> bool {
        self.get("plots") == "true"
    }

    pub fn dataset(&self) -> Result<DatasetConfig> {
        let c = DatasetConfig {
            n_maps: self.typed("n_maps")?,
            n_base_stations: self.typed("n_base_stations")?,
            n_sources: self.typed("n_sources")?,
            map_side_range: (self.typed("map_side_min")?, self.typed("map_side_max")?),
            n_obstacles_range: (self.typed("n_obstacles_min")?, self.typed("n_obstacles_max")?),
            obstacle_side_range: (self.typed("obstacle_side_min")?, self.typed("obstacle_side_max")?),
            max_bounces: self.typed("max_bounces")?,
            seed: self.typed("seed")?,
            split_fractions: (self.typed("split_train")?, self.typed("split_val")?, self.typed("split_test")?),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn train(&self, kind: ModelKind) -> Result<TrainConfig> {
        let d = TrainConfig::for_kind(kind);
        let c = TrainConfig {
            learning_rate: self.typed("learning_rate")?,
            batch_size: self.auto("batch_size")?.unwrap_or(d.batch_size),
            micro_batch: self.typed("micro_batch")?,
            epochs: self.auto("epochs")?.unwrap_or(d.epochs),
            dice_weight: self.typed("dice_weight")?,
            seed: self.typed("seed")?,
            image_size: self.typed("image_size")?,
            sigma_px: self.typed("sigma_px")?,
            unet_levels: self.typed("unet_levels")?,
            unet_base_width: self.typed("unet_base_width")?,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn topk(&self, image_size: usize) -> Result<TopKParams> {
        let d = TopKParams::for_image_size(image_size);
        let p = TopKParams {
            d_min_px: self.auto("topk_threshold_px")?.unwrap_or(d.d_min_px),
            r_px: self.auto("topk_radius_px")?.unwrap_or(d.r_px),
        };
        if !(p.d_min_px > 0.0) || !(p.r_px >= 0.0) {
            return Err(Error::InvalidConfig("top-K threshold must be positive and radius non-negative".into()));
        }
        Ok(p)
    }

    pub fn eval_options(&self, image_size: usize) -> Result<EvalOptions> {
        let thresholds = self
            .get("thresholds_m")
            .split(',')
            .map(|t| parse::<f64>("thresholds_m", t))
            .collect::<Result<Vec<_>>>()?;
        if thresholds.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::InvalidConfig("thresholds_m must be positive".into()));
        }
        Ok(EvalOptions {
            thresholds,
            topk: Some(self.topk(image_size)?),
            n_bins: self.typed("n_bins")?,
        })
    }

    /// Replaces every `auto` value with what it resolves to.
    pub fn resolved(&self, kind: Option<ModelKind>) -> Result<RunConfig> {
        let mut r = self.clone();
        if let Some(kind) = kind {
            let t = self.train(kind)?;
            r.set("batch_size", &t.batch_size.to_string())?;
            r.set("epochs", &t.epochs.to_string())?;
        }
        let p = self.topk(self.typed("image_size")?)?;
        r.set("topk_threshold_px", &p.d_min_px.to_string())?;
        r.set("topk_radius_px", &p.r_px.to_string())?;
        Ok(r)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, _, doc) in KEYS {
            let _ = writeln!(out, "# {doc}\n{k} = {}", self.get(k));
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}
