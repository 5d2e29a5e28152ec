//! Mini-batch training with Adam and validation-based model selection.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Sample;
use crate::encoders::{encode_image, encode_matrix, encode_target, encode_vector, AblationFlags, GeoTransform, Heatmap};
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::nn::{Adam, Parameterized};
use crate::postprocess;

use super::heatmapnet::{batch_images, HeatmapNet, HeatmapNetSpec};
use super::loss::{heatmap_loss_logits, rmse_with_grad};
use super::mlp::{Mlp, MlpSpec};
use super::pathcnn::{PathCnn, PathCnnSpec};

/// Threshold of the validation accuracy used for model selection.
pub const VAL_THRESHOLD_M: f64 = 10.0;
const PREDICT_CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Mlp,
    PathCnn,
    Unet,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Mlp => "mlp",
            ModelKind::PathCnn => "pathcnn",
            ModelKind::Unet => "unet",
        }
    }

    pub fn is_heatmap(self) -> bool {
        self == ModelKind::Unet
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mlp" => Ok(ModelKind::Mlp),
            "pathcnn" => Ok(ModelKind::PathCnn),
            "unet" => Ok(ModelKind::Unet),
            other => Err(Error::InvalidArgument(format!(
                "unknown model '{other}' (expected mlp, pathcnn or unet)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Heatmap batches are processed in slices of this many samples.
    pub micro_batch: usize,
    pub epochs: usize,
    pub dice_weight: f64,
    pub seed: u64,
    pub image_size: usize,
    pub sigma_px: f64,
    pub unet_levels: usize,
    pub unet_base_width: usize,
}

impl TrainConfig {
    pub fn for_kind(kind: ModelKind) -> Self {
        let (batch_size, epochs) = match kind {
            ModelKind::Mlp => (500, 30),
            ModelKind::PathCnn => (128, 30),
            ModelKind::Unet => (128, 15),
        };
        TrainConfig {
            learning_rate: 3e-4,
            batch_size,
            micro_batch: 16,
            epochs,
            dice_weight: 0.0,
            seed: 0,
            image_size: 224,
            sigma_px: 3.0,
            unet_levels: 4,
            unet_base_width: 32,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return bad(format!("learning_rate must be finite and non-negative, got {}", self.learning_rate));
        }
        if self.batch_size == 0 || self.micro_batch == 0 {
            return bad("batch_size and micro_batch must be at least 1".into());
        }
        if !(self.dice_weight >= 0.0) {
            return bad(format!("dice_weight must be >= 0, got {}", self.dice_weight));
        }
        if !(self.sigma_px > 0.0) {
            return bad(format!("sigma_px must be positive, got {}", self.sigma_px));
        }
        Ok(())
    }

    pub fn heatmap_spec(&self) -> HeatmapNetSpec {
        HeatmapNetSpec {
            levels: self.unet_levels,
            base_width: self.unet_base_width,
            image_size: self.image_size,
            in_channels: 3,
        }
    }
}

/// Input standardization and isotropic target scaling for coordinate models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub input_mean: Vec<f64>,
    pub input_std: Vec<f64>,
    pub target_mean: [f64; 2],
    /// Shared scale of both target axes, so the loss stays proportional to meters.
    pub target_scale: f64,
}

impl Normalizer {
    fn fit<'a>(rows: impl Iterator<Item = &'a [f64]> + Clone, dim: usize, targets: &[Point]) -> Self {
        let mut mean = vec![0.0; dim];
        let mut count = 0.0f64;
        for r in rows.clone() {
            mean.iter_mut().zip(r).for_each(|(m, v)| *m += v);
            count += 1.0;
        }
        mean.iter_mut().for_each(|m| *m /= count.max(1.0));
        let mut var = vec![0.0; dim];
        for r in rows {
            var.iter_mut().zip(r).zip(&mean).for_each(|((s, v), m)| *s += (v - m).powi(2));
        }
        let input_std = var.iter().map(|s| (s / count.max(1.0)).sqrt()).map(|s| if s > 1e-12 { s } else { 1.0 }).collect();
        let n = targets.len().max(1) as f64;
        let tm = [
            targets.iter().map(|p| p.x).sum::<f64>() / n,
            targets.iter().map(|p| p.y).sum::<f64>() / n,
        ];
        let tv = targets.iter().map(|p| (p.x - tm[0]).powi(2) + (p.y - tm[1]).powi(2)).sum::<f64>() / (2.0 * n);
        Normalizer {
            input_mean: mean,
            input_std,
            target_mean: tm,
            target_scale: if tv.sqrt() > 1e-12 { tv.sqrt() } else { 1.0 },
        }
    }

    fn input_row<'a>(&'a self, row: &'a [f64]) -> impl Iterator<Item = f32> + 'a {
        row.iter()
            .zip(self.input_mean.iter().cycle().zip(self.input_std.iter().cycle()))
            .map(|(v, (m, s))| ((v - m) / s) as f32)
    }

    fn target(&self, p: Point) -> [f32; 2] {
        [
            ((p.x - self.target_mean[0]) / self.target_scale) as f32,
            ((p.y - self.target_mean[1]) / self.target_scale) as f32,
        ]
    }

    fn output(&self, y: [f32; 2]) -> Point {
        Point::new(
            y[0] as f64 * self.target_scale + self.target_mean[0],
            y[1] as f64 * self.target_scale + self.target_mean[1],
        )
    }
}

#[derive(Debug, Clone)]
pub enum Network {
    Mlp(Mlp<f32>),
    PathCnn(PathCnn<f32>),
    Unet(HeatmapNet<f32>),
}

impl Network {
    pub fn params(&self) -> Vec<&crate::nn::Param<f32>> {
        match self {
            Network::Mlp(n) => n.params(),
            Network::PathCnn(n) => n.params(),
            Network::Unet(n) => n.params(),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut crate::nn::Param<f32>> {
        match self {
            Network::Mlp(n) => n.params_mut(),
            Network::PathCnn(n) => n.params_mut(),
            Network::Unet(n) => n.params_mut(),
        }
    }

    pub fn export(&self) -> Vec<Vec<f32>> {
        self.params().iter().map(|p| p.value.clone()).collect()
    }

    pub fn import(&mut self, tensors: &[Vec<f32>]) -> Result<()> {
        match self {
            Network::Mlp(n) => n.import(tensors),
            Network::PathCnn(n) => n.import(tensors),
            Network::Unet(n) => n.import(tensors),
        }
    }
}

/// Architecture description sufficient to rebuild a [`Network`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum NetworkSpec {
    Mlp(MlpSpec),
    PathCnn(PathCnnSpec),
    Unet(HeatmapNetSpec),
}

impl NetworkSpec {
    pub fn for_model(kind: ModelKind, flags: AblationFlags, config: &TrainConfig) -> Self {
        match kind {
            ModelKind::Mlp => NetworkSpec::Mlp(MlpSpec::new(flags.path_columns())),
            ModelKind::PathCnn => NetworkSpec::PathCnn(PathCnnSpec::new(flags.path_columns())),
            ModelKind::Unet => NetworkSpec::Unet(config.heatmap_spec()),
        }
    }

    pub fn build(&self, rng: &mut ChaCha8Rng) -> Result<Network> {
        Ok(match self {
            NetworkSpec::Mlp(s) => Network::Mlp(Mlp::new(s.clone(), rng)),
            NetworkSpec::PathCnn(s) => Network::PathCnn(PathCnn::new(s.clone(), rng)),
            NetworkSpec::Unet(s) => Network::Unet(HeatmapNet::new(s.clone(), rng)?),
        })
    }
}

/// Output for one sample. Heatmap models also return the probability map.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub point: Point,
    pub heatmap: Option<(Heatmap, GeoTransform)>,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub kind: ModelKind,
    pub flags: AblationFlags,
    pub config: TrainConfig,
    pub spec: NetworkSpec,
    pub normalizer: Option<Normalizer>,
    pub network: Network,
}

impl TrainedModel {
    fn vector_rows(&self, samples: &[Sample]) -> Result<Vec<f32>> {
        let norm = self.normalizer.as_ref().expect("coordinate model has a normalizer");
        let mut x = Vec::new();
        for s in samples {
            let v = encode_vector(&s.record.paths, s.base_station(), self.flags)?;
            x.extend(norm.input_row(&v));
        }
        Ok(x)
    }

    fn matrix(&self, s: &Sample) -> Result<(usize, Vec<f32>)> {
        let norm = self.normalizer.as_ref().expect("coordinate model has a normalizer");
        let (k, m) = encode_matrix(&s.record.paths, s.base_station(), self.flags)?;
        Ok((k, norm.input_row(&m).collect()))
    }

    fn images(&self, samples: &[Sample]) -> Result<Vec<crate::encoders::ImageSample>> {
        samples
            .par_iter()
            .map(|s| encode_image(&s.scene, s.base_station(), &s.record.paths, self.config.image_size, self.flags))
            .collect()
    }

    fn predict_chunk(&self, samples: &[Sample]) -> Result<Vec<Prediction>> {
        match &self.network {
            Network::Mlp(net) => {
                let norm = self.normalizer.as_ref().expect("normalizer");
                let y = net.forward(&self.vector_rows(samples)?, samples.len())?;
                Ok(y.chunks_exact(2)
                    .map(|o| Prediction {
                        point: norm.output([o[0], o[1]]),
                        heatmap: None,
                    })
                    .collect())
            }
            Network::PathCnn(net) => {
                let norm = self.normalizer.as_ref().expect("normalizer");
                samples
                    .iter()
                    .map(|s| {
                        let (k, m) = self.matrix(s)?;
                        Ok(Prediction {
                            point: norm.output(net.forward(&m, k)?),
                            heatmap: None,
                        })
                    })
                    .collect()
            }
            Network::Unet(net) => {
                let images = self.images(samples)?;
                let refs: Vec<_> = images.iter().collect();
                let maps = net.predict(batch_images(&refs)?)?;
                maps.into_iter()
                    .zip(images)
                    .map(|(h, im)| {
                        Ok(Prediction {
                            point: postprocess::top1(&h, &im.transform)?,
                            heatmap: Some((h, im.transform)),
                        })
                    })
                    .collect()
            }
        }
    }

    /// Predictions in sample order. Chunks run in parallel; results do not
    /// depend on the thread count.
    pub fn predict(&self, samples: &[Sample]) -> Result<Vec<Prediction>> {
        let chunk = match self.kind {
            ModelKind::Unet => self.config.micro_batch,
            _ => PREDICT_CHUNK,
        };
        let parts: Vec<Vec<Prediction>> = samples
            .par_chunks(chunk.max(1))
            .map(|c| self.predict_chunk(c))
            .collect::<Result<_>>()?;
        Ok(parts.into_iter().flatten().collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// RMSE in meters for coordinate models, BCE + λ·dice for the heatmap model.
    pub train_loss: f64,
    pub train_bce: Option<f64>,
    pub val_acc10: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
}

fn accuracy_at(preds: &[Prediction], samples: &[Sample], x: f64) -> f64 {
    let hits = preds
        .iter()
        .zip(samples)
        .filter(|(p, s)| p.point.distance(s.true_location) <= x)
        .count();
    hits as f64 / samples.len() as f64
}

/// Trains with default progress handling; see [`train_with`].
pub fn train(
    kind: ModelKind,
    train_set: &[Sample],
    val_set: &[Sample],
    flags: AblationFlags,
    config: &TrainConfig,
) -> Result<(TrainedModel, History)> {
    train_with(kind, train_set, val_set, flags, config, |_| {})
}

/// Runs `config.epochs` epochs over `train_set` and returns the parameters of
/// the epoch with the best validation accuracy at 10 m (the last epoch when
/// `val_set` is empty). `on_epoch` sees every finished epoch.
pub fn train_with(
    kind: ModelKind,
    train_set: &[Sample],
    val_set: &[Sample],
    flags: AblationFlags,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(TrainedModel, History)> {
    config.validate()?;
    flags.validate()?;
    if train_set.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    if !flags.use_map && !kind.is_heatmap() {
        return Err(Error::InvalidArgument(format!("{kind} does not take a map input, so no_map does not apply")));
    }
    let targets: Vec<Point> = train_set.iter().map(|s| s.true_location).collect();
    let normalizer = match kind {
        ModelKind::Mlp => {
            let rows: Vec<Vec<f64>> = train_set
                .iter()
                .map(|s| encode_vector(&s.record.paths, s.base_station(), flags))
                .collect::<Result<_>>()?;
            Some(Normalizer::fit(rows.iter().map(|r| r.as_slice()), flags.path_columns(), &targets))
        }
        ModelKind::PathCnn => {
            let cols = flags.path_columns();
            let mats: Vec<(usize, Vec<f64>)> = train_set
                .iter()
                .map(|s| encode_matrix(&s.record.paths, s.base_station(), flags))
                .collect::<Result<_>>()?;
            Some(Normalizer::fit(mats.iter().flat_map(|(_, m)| m.chunks_exact(cols)), cols, &targets))
        }
        ModelKind::Unet => None,
    };
    let spec = NetworkSpec::for_model(kind, flags, config);
    let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let network = spec.build(&mut init_rng)?;
    let mut model = TrainedModel {
        kind,
        flags,
        config: config.clone(),
        spec,
        normalizer,
        network,
    };
    let mut trainer = Trainer::new(&model, train_set)?;

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle_rng.set_stream(1);
    let mut adam = Adam::new(config.learning_rate);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = History::default();
    let mut best: Option<(f64, Vec<Vec<f32>>)> = None;
    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut bce_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let (loss, bce) = trainer.step(&mut model, train_set, batch)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, loss });
            }
            loss_sum += loss * batch.len() as f64;
            bce_sum += bce * batch.len() as f64;
            adam.step(model.network.params_mut());
        }
        let n = train_set.len() as f64;
        let val_acc10 = if val_set.is_empty() {
            None
        } else {
            Some(accuracy_at(&model.predict(val_set)?, val_set, VAL_THRESHOLD_M))
        };
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / n,
            train_bce: kind.is_heatmap().then_some(bce_sum / n),
            val_acc10,
        };
        on_epoch(&record);
        history.epochs.push(record);
        let score = val_acc10.unwrap_or(f64::NEG_INFINITY);
        let improved = match &best {
            None => true,
            Some((b, _)) => score > *b || val_acc10.is_none(),
        };
        if improved {
            best = Some((score, model.network.export()));
            history.best_epoch = epoch;
        }
    }
    if let Some((_, params)) = best {
        model.network.import(&params)?;
    }
    Ok((model, history))
}

/// Encoded training inputs kept across epochs.
enum Inputs {
    Vectors(Vec<f32>, usize),
    Matrices(Vec<(usize, Vec<f32>)>),
    Heatmaps(Vec<Heatmap>),
}

struct Trainer {
    inputs: Inputs,
    targets: Vec<[f32; 2]>,
}

impl Trainer {
    fn new(model: &TrainedModel, samples: &[Sample]) -> Result<Self> {
        let targets = match &model.normalizer {
            Some(n) => samples.iter().map(|s| n.target(s.true_location)).collect(),
            None => Vec::new(),
        };
        let inputs = match model.kind {
            ModelKind::Mlp => Inputs::Vectors(model.vector_rows(samples)?, model.flags.path_columns()),
            ModelKind::PathCnn => Inputs::Matrices(samples.iter().map(|s| model.matrix(s)).collect::<Result<_>>()?),
            ModelKind::Unet => Inputs::Heatmaps(
                samples
                    .par_iter()
                    .map(|s| {
                        let t = GeoTransform::for_scene(&s.scene, model.config.image_size)?;
                        encode_target(&t, s.true_location, model.config.sigma_px)
                    })
                    .collect::<Result<_>>()?,
            ),
        };
        Ok(Trainer { inputs, targets })
    }

    /// Accumulates gradients for one batch; returns `(loss, bce)`.
    fn step(&mut self, model: &mut TrainedModel, samples: &[Sample], batch: &[usize]) -> Result<(f64, f64)> {
        let scale = model.normalizer.as_ref().map_or(1.0, |n| n.target_scale);
        let truth: Vec<f32> = batch.iter().flat_map(|&i| self.targets.get(i).copied().unwrap_or([0.0; 2])).collect();
        match (&mut model.network, &self.inputs) {
            (Network::Mlp(net), Inputs::Vectors(x, d)) => {
                let xb: Vec<f32> = batch.iter().flat_map(|&i| x[i * d..(i + 1) * d].iter().copied()).collect();
                let (y, cache) = net.forward_train(&xb, batch.len())?;
                let (loss, dy) = rmse_with_grad(&y, &truth);
                net.backward(&cache, &dy);
                Ok((loss as f64 * scale, 0.0))
            }
            (Network::PathCnn(net), Inputs::Matrices(mats)) => {
                let mut outs = Vec::with_capacity(batch.len() * 2);
                let mut caches = Vec::with_capacity(batch.len());
                for &i in batch {
                    let (k, m) = &mats[i];
                    let (y, cache) = net.forward_train(m, *k)?;
                    outs.extend(y);
                    caches.push(cache);
                }
                let (loss, dy) = rmse_with_grad(&outs, &truth);
                for (cache, d) in caches.iter().zip(dy.chunks_exact(2)) {
                    net.backward(cache, d);
                }
                Ok((loss as f64 * scale, 0.0))
            }
            (Network::Unet(net), Inputs::Heatmaps(targets)) => {
                let s = model.config.image_size;
                let mut total = 0.0;
                let mut bce = 0.0;
                for micro in batch.chunks(model.config.micro_batch) {
                    let images: Vec<_> = micro
                        .par_iter()
                        .map(|&i| {
                            let x = &samples[i];
                            encode_image(&x.scene, x.base_station(), &x.record.paths, s, model.flags)
                        })
                        .collect::<Result<_>>()?;
                    let refs: Vec<_> = images.iter().collect();
                    let (logits, cache) = net.forward_train(batch_images(&refs)?)?;
                    let t: Vec<f32> = micro.iter().flat_map(|&i| targets[i].data.iter().copied()).collect();
                    let frac = micro.len() as f64 / batch.len() as f64;
                    let (l, grad) = heatmap_loss_logits(&logits.data, &t, s * s, model.config.dice_weight, frac);
                    total += l.total * frac;
                    bce += l.bce * frac;
                    let dlogits = crate::nn::Tensor::from_vec(1, micro.len(), s, s, grad);
                    net.backward(&cache, &dlogits);
                }
                Ok((total, bce))
            }
            _ => unreachable!("inputs are encoded for the model kind"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_samples, DatasetConfig};

    fn los_samples(n_maps: usize) -> Vec<Sample> {
        let cfg = DatasetConfig {
            n_maps,
            n_obstacles_range: (0, 0),
            map_side_range: (80.0, 120.0),
            ..DatasetConfig::default()
        };
        generate_samples(&cfg, 0..n_maps).unwrap()
    }

    #[test]
    fn kind_and_config_parsing() {
        assert_eq!("unet".parse::<ModelKind>().unwrap(), ModelKind::Unet);
        assert!("cnn".parse::<ModelKind>().is_err());
        let c = TrainConfig::for_kind(ModelKind::Mlp);
        assert_eq!((c.batch_size, c.epochs, c.learning_rate), (500, 30, 3e-4));
        let c = TrainConfig::for_kind(ModelKind::Unet);
        assert_eq!((c.batch_size, c.epochs), (128, 15));
        let bad = TrainConfig {
            batch_size: 0,
            ..c
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn empty_training_set_is_rejected() {
        let c = TrainConfig::for_kind(ModelKind::Mlp);
        assert!(train(ModelKind::Mlp, &[], &[], AblationFlags::default(), &c).is_err());
    }

    #[test]
    fn map_ablation_needs_an_image_model() {
        let s = los_samples(2);
        let c = TrainConfig::for_kind(ModelKind::Mlp);
        let flags = crate::encoders::Ablation::NoMap.flags();
        assert!(matches!(train(ModelKind::Mlp, &s, &[], flags, &c), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn mlp_learns_los_toy_set() {
        let s = los_samples(20);
        assert!(s.len() >= 200);
        let s = &s[..200];
        let c = TrainConfig {
            epochs: 50,
            batch_size: 50,
            ..TrainConfig::for_kind(ModelKind::Mlp)
        };
        let (_, h) = train(ModelKind::Mlp, s, &[], AblationFlags::default(), &c).unwrap();
        let first = h.epochs[0].train_loss;
        let last = h.epochs.last().unwrap().train_loss;
        assert!(last < 0.2 * first, "{first} -> {last}");
    }

    #[test]
    fn zero_learning_rate_freezes_parameters() {
        let s = los_samples(4);
        let c = TrainConfig {
            epochs: 3,
            learning_rate: 0.0,
            batch_size: 1000,
            ..TrainConfig::for_kind(ModelKind::Mlp)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
        let init = NetworkSpec::for_model(ModelKind::Mlp, AblationFlags::default(), &c).build(&mut rng).unwrap();
        let (m, h) = train(ModelKind::Mlp, &s, &[], AblationFlags::default(), &c).unwrap();
        assert_eq!(m.network.export(), init.export());
        let l0 = h.epochs[0].train_loss;
        for e in &h.epochs {
            assert!((e.train_loss - l0).abs() <= 1e-6 * l0);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let s = los_samples(3);
        let (tr, va) = s.split_at(s.len() - 5);
        for kind in [ModelKind::Mlp, ModelKind::PathCnn] {
            let c = TrainConfig {
                epochs: 3,
                batch_size: 8,
                ..TrainConfig::for_kind(kind)
            };
            let (a, ha) = train(kind, tr, va, AblationFlags::default(), &c).unwrap();
            let (b, hb) = train(kind, tr, va, AblationFlags::default(), &c).unwrap();
            assert_eq!(ha, hb);
            assert_eq!(a.network.export(), b.network.export());
            assert_eq!(a.predict(va).unwrap(), b.predict(va).unwrap());
        }
    }

    #[test]
    fn heatmap_model_overfits_a_single_batch() {
        let s = los_samples(2);
        let s = &s[..8];
        let c = TrainConfig {
            epochs: 60,
            batch_size: 8,
            micro_batch: 4,
            image_size: 16,
            sigma_px: 1.5,
            unet_levels: 2,
            unet_base_width: 4,
            learning_rate: 3e-4,
            ..TrainConfig::for_kind(ModelKind::Unet)
        };
        let (m, h) = train(ModelKind::Unet, s, &[], AblationFlags::default(), &c).unwrap();
        let bce: Vec<f64> = h.epochs.iter().map(|e| e.train_bce.unwrap()).collect();
        let avg: Vec<f64> = bce.windows(5).map(|w| w.iter().sum::<f64>() / 5.0).collect();
        for w in avg[3..].windows(2) {
            assert!(w[1] < w[0], "{bce:?}");
        }
        let p = m.predict(s).unwrap();
        assert!(p.iter().all(|p| p.heatmap.is_some()));
    }
}
