//! Encoder-decoder heatmap predictor with skip connections.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoders::{Heatmap, ImageSample};
use crate::error::{Error, Result};
use crate::nn::{
    maxpool2, maxpool2_backward, relu_backward, relu_inplace, upsample2, upsample2_backward, Conv2d, Param,
    Parameterized, Real, Tensor,
};

/// Output probabilities are clamped to `[P_EPS, 1 - P_EPS]`.
pub const P_EPS: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeatmapNetSpec {
    pub levels: usize,
    pub base_width: usize,
    pub image_size: usize,
    pub in_channels: usize,
}

impl HeatmapNetSpec {
    /// Four levels, base width 32.
    pub fn new(image_size: usize) -> Self {
        HeatmapNetSpec {
            levels: 4,
            base_width: 32,
            image_size,
            in_channels: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 || self.base_width == 0 || self.in_channels == 0 {
            return Err(Error::Shape("levels, base width and input channels must be positive".into()));
        }
        let div = 1usize << self.levels;
        if self.image_size == 0 || !self.image_size.is_multiple_of(div) {
            return Err(Error::Shape(format!(
                "image size {} is not divisible by 2^{} = {div}",
                self.image_size, self.levels
            )));
        }
        Ok(())
    }
}

/// Two 3×3 convolutions, each followed by ReLU.
#[derive(Debug, Clone)]
pub struct DoubleConv<T> {
    pub first: Conv2d<T>,
    pub second: Conv2d<T>,
}

struct DoubleConvCache<T> {
    x: Tensor<T>,
    mid: Tensor<T>,
    out: Tensor<T>,
}

impl<T: Real> DoubleConv<T> {
    fn new(cin: usize, cout: usize, rng: &mut impl Rng) -> Self {
        DoubleConv {
            first: Conv2d::new(cin, cout, (3, 3), (1, 1), rng),
            second: Conv2d::new(cout, cout, (3, 3), (1, 1), rng),
        }
    }

    fn forward(&self, x: Tensor<T>) -> DoubleConvCache<T> {
        let mut mid = self.first.forward(&x);
        relu_inplace(&mut mid.data);
        let mut out = self.second.forward(&mid);
        relu_inplace(&mut out.data);
        DoubleConvCache { x, mid, out }
    }

    fn backward(&mut self, cache: &DoubleConvCache<T>, mut dy: Tensor<T>, need_dx: bool) -> Option<Tensor<T>> {
        relu_backward(&cache.out.data, &mut dy.data);
        let mut dmid = self.second.backward(&cache.mid, &dy, true).expect("dx requested");
        relu_backward(&cache.mid.data, &mut dmid.data);
        self.first.backward(&cache.x, &dmid, need_dx)
    }
}

#[derive(Debug, Clone)]
pub struct HeatmapNet<T> {
    pub spec: HeatmapNetSpec,
    pub down: Vec<DoubleConv<T>>,
    pub bottleneck: DoubleConv<T>,
    /// Decoder blocks, deepest first.
    pub up: Vec<DoubleConv<T>>,
    pub head: Conv2d<T>,
}

pub struct HeatmapNetCache<T> {
    down: Vec<DoubleConvCache<T>>,
    pool_idx: Vec<Vec<u32>>,
    bottleneck: DoubleConvCache<T>,
    up: Vec<DoubleConvCache<T>>,
    head_in: Tensor<T>,
}

impl<T: Real> HeatmapNet<T> {
    pub fn new(spec: HeatmapNetSpec, rng: &mut impl Rng) -> Result<Self> {
        spec.validate()?;
        let b = spec.base_width;
        let mut down = Vec::with_capacity(spec.levels);
        let mut cin = spec.in_channels;
        for l in 0..spec.levels {
            down.push(DoubleConv::new(cin, b << l, rng));
            cin = b << l;
        }
        let bottleneck = DoubleConv::new(cin, b << spec.levels, rng);
        let up = (0..spec.levels)
            .rev()
            .map(|l| DoubleConv::new((b << (l + 1)) + (b << l), b << l, rng))
            .collect();
        let head = Conv2d::new(b, 1, (1, 1), (0, 0), rng);
        Ok(HeatmapNet {
            spec,
            down,
            bottleneck,
            up,
            head,
        })
    }

    fn check(&self, x: &Tensor<T>) -> Result<()> {
        let s = self.spec.image_size;
        if x.c != self.spec.in_channels || x.h != s || x.w != s {
            return Err(Error::Shape(format!(
                "expected {}x{s}x{s} input, got {}x{}x{}",
                self.spec.in_channels, x.c, x.h, x.w
            )));
        }
        Ok(())
    }

    /// Per-pixel logits, shape `1 × n × S × S`.
    pub fn forward_train(&self, x: Tensor<T>) -> Result<(Tensor<T>, HeatmapNetCache<T>)> {
        self.check(&x)?;
        let mut down = Vec::with_capacity(self.spec.levels);
        let mut pool_idx = Vec::with_capacity(self.spec.levels);
        let mut h = x;
        for block in &self.down {
            let cache = block.forward(h);
            let (pooled, idx) = maxpool2(&cache.out);
            down.push(cache);
            pool_idx.push(idx);
            h = pooled;
        }
        let bottleneck = self.bottleneck.forward(h);
        let mut h = bottleneck.out.clone();
        let mut up = Vec::with_capacity(self.spec.levels);
        for (block, skip) in self.up.iter().zip(down.iter().rev()) {
            let cat = upsample2(&h).concat(&skip.out);
            let cache = block.forward(cat);
            h = cache.out.clone();
            up.push(cache);
        }
        let logits = self.head.forward(&h);
        Ok((
            logits,
            HeatmapNetCache {
                down,
                pool_idx,
                bottleneck,
                up,
                head_in: h,
            },
        ))
    }

    pub fn forward_logits(&self, x: Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward_train(x)?.0)
    }

    /// Accumulates gradients for `dL/d(logits)`.
    pub fn backward(&mut self, cache: &HeatmapNetCache<T>, dlogits: &Tensor<T>) {
        let mut d = self.head.backward(&cache.head_in, dlogits, true).expect("dx requested");
        let levels = self.spec.levels;
        let mut dskips: Vec<Option<Tensor<T>>> = (0..levels).map(|_| None).collect();
        for (i, block) in self.up.iter_mut().enumerate().rev() {
            let level = levels - 1 - i;
            let dcat = block.backward(&cache.up[i], d, true).expect("dx requested");
            let up_c = dcat.c - cache.down[level].out.c;
            let (dup, dskip) = dcat.split_channels(up_c);
            dskips[level] = Some(dskip);
            d = upsample2_backward(&dup);
        }
        let mut d = self.bottleneck.backward(&cache.bottleneck, d, true).expect("dx requested");
        for level in (0..levels).rev() {
            let out = &cache.down[level].out;
            let mut dout = maxpool2_backward(&d, &cache.pool_idx[level], out.h, out.w);
            let dskip = dskips[level].take().expect("skip gradient");
            dout.data.iter_mut().zip(&dskip.data).for_each(|(a, b)| *a = *a + *b);
            match self.down[level].backward(&cache.down[level], dout, level > 0) {
                Some(dx) => d = dx,
                None => break,
            }
        }
    }

    /// Per-pixel probabilities for each sample.
    pub fn predict(&self, x: Tensor<T>) -> Result<Vec<Heatmap>> {
        let s = self.spec.image_size;
        let logits = self.forward_logits(x)?;
        logits
            .data
            .chunks_exact(s * s)
            .map(|z| Heatmap::from_vec(s, z.iter().map(|&v| probability(v.to_f64().unwrap_or(0.0)) as f32).collect()))
            .collect()
    }
}

impl<T: Real> Parameterized<T> for HeatmapNet<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let blocks = self.down.iter().chain(std::iter::once(&self.bottleneck)).chain(&self.up);
        let mut out: Vec<&Param<T>> = blocks
            .flat_map(|b| [&b.first.weight, &b.first.bias, &b.second.weight, &b.second.bias])
            .collect();
        out.extend([&self.head.weight, &self.head.bias]);
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let blocks = self.down.iter_mut().chain(std::iter::once(&mut self.bottleneck)).chain(self.up.iter_mut());
        let mut out: Vec<&mut Param<T>> = blocks
            .flat_map(|b| [&mut b.first.weight, &mut b.first.bias, &mut b.second.weight, &mut b.second.bias])
            .collect();
        out.extend([&mut self.head.weight, &mut self.head.bias]);
        out
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Sigmoid clamped strictly inside `(0, 1)`, also after rounding to `f32`.
pub fn probability(z: f64) -> f64 {
    sigmoid(z).clamp(P_EPS, 1.0 - P_EPS)
}

/// Stacks image samples into a `3 × n × S × S` tensor.
pub fn batch_images<T: Real>(images: &[&ImageSample]) -> Result<Tensor<T>> {
    let Some(first) = images.first() else {
        return Err(Error::Shape("empty image batch".into()));
    };
    let s = first.size;
    if images.iter().any(|im| im.size != s) {
        return Err(Error::Shape("image sizes differ within a batch".into()));
    }
    let n = images.len();
    let plane = s * s;
    let mut data = vec![T::zero(); 3 * n * plane];
    for (i, im) in images.iter().enumerate() {
        for c in 0..3 {
            let dst = &mut data[(c * n + i) * plane..(c * n + i + 1) * plane];
            for (d, v) in dst.iter_mut().zip(im.channel(c)) {
                *d = T::cast(*v as f64);
            }
        }
    }
    Ok(Tensor::from_vec(3, n, s, s, data))
}
