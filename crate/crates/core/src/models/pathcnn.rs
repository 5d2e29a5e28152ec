//! Convolutional regressor over the `K × features` path matrix.
//!
//! Three `1×5` convolutions act on each path row with shared weights, three
//! `3×3` convolutions mix neighbouring paths, then a mean over the path
//! axis feeds a linear head. All padding is zero padding.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{relu_backward, relu_inplace, Conv2d, Linear, Param, Parameterized, Real, Tensor};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathCnnSpec {
    /// Features per path row (5, or 4 with one angle ablated).
    pub input_cols: usize,
    pub path_channels: usize,
    pub spatial_channels: usize,
}

impl PathCnnSpec {
    pub fn new(input_cols: usize) -> Self {
        PathCnnSpec {
            input_cols,
            path_channels: 32,
            spatial_channels: 32,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PathCnn<T> {
    pub spec: PathCnnSpec,
    pub per_path: Vec<Conv2d<T>>,
    pub spatial: Vec<Conv2d<T>>,
    pub head: Linear<T>,
}

/// Activations of one sample.
pub struct PathCnnCache<T> {
    /// Input of each convolution, in order; the last entry is the final conv output.
    acts: Vec<Tensor<T>>,
    pooled: Vec<T>,
}

impl<T: Real> PathCnn<T> {
    pub fn new(spec: PathCnnSpec, rng: &mut impl Rng) -> Self {
        let (cp, cs) = (spec.path_channels, spec.spatial_channels);
        let per_path = vec![
            Conv2d::new(1, cp, (1, 5), (0, 2), rng),
            Conv2d::new(cp, cp, (1, 5), (0, 2), rng),
            Conv2d::new(cp, cp, (1, 5), (0, 2), rng),
        ];
        let spatial = vec![
            Conv2d::new(cp, cs, (3, 3), (1, 1), rng),
            Conv2d::new(cs, cs, (3, 3), (1, 1), rng),
            Conv2d::new(cs, cs, (3, 3), (1, 1), rng),
        ];
        let head = Linear::new(cs * spec.input_cols, 2, rng);
        PathCnn {
            spec,
            per_path,
            spatial,
            head,
        }
    }

    fn convs(&self) -> impl Iterator<Item = &Conv2d<T>> {
        self.per_path.iter().chain(&self.spatial)
    }

    /// `m` is row-major `k × input_cols`.
    pub fn forward_train(&self, m: &[T], k: usize) -> Result<(Vec<T>, PathCnnCache<T>)> {
        let cols = self.spec.input_cols;
        if k == 0 {
            return Err(Error::Shape("path matrix has no rows".into()));
        }
        if m.len() != k * cols {
            return Err(Error::Shape(format!("expected a {k}x{cols} matrix, got {} values", m.len())));
        }
        let mut acts = Vec::with_capacity(7);
        let mut h = Tensor::from_vec(1, 1, k, cols, m.to_vec());
        for conv in self.convs() {
            let mut out = conv.forward(&h);
            relu_inplace(&mut out.data);
            acts.push(std::mem::replace(&mut h, out));
        }
        // mean over the path axis
        let inv_k = T::cast(1.0 / k as f64);
        let mut pooled = vec![T::zero(); h.c * cols];
        for c in 0..h.c {
            for r in 0..k {
                for f in 0..cols {
                    pooled[c * cols + f] = pooled[c * cols + f] + h.data[(c * k + r) * cols + f];
                }
            }
        }
        pooled.iter_mut().for_each(|v| *v = *v * inv_k);
        acts.push(h);
        let out = self.head.forward(&pooled, 1);
        Ok((out, PathCnnCache { acts, pooled }))
    }

    pub fn forward(&self, m: &[T], k: usize) -> Result<[T; 2]> {
        let (y, _) = self.forward_train(m, k)?;
        Ok([y[0], y[1]])
    }

    pub fn backward(&mut self, cache: &PathCnnCache<T>, dout: &[T]) {
        let dpool = self.head.backward(&cache.pooled, dout, 1);
        let last = cache.acts.last().expect("cache");
        let (k, cols) = (last.h, last.w);
        let inv_k = T::cast(1.0 / k as f64);
        let mut d = Tensor::zeros(last.c, 1, k, cols);
        for c in 0..last.c {
            for r in 0..k {
                for f in 0..cols {
                    d.data[(c * k + r) * cols + f] = dpool[c * cols + f] * inv_k;
                }
            }
        }
        let n_conv = self.per_path.len() + self.spatial.len();
        for i in (0..n_conv).rev() {
            relu_backward(&cache.acts[i + 1].data, &mut d.data);
            let conv = if i < self.per_path.len() {
                &mut self.per_path[i]
            } else {
                &mut self.spatial[i - self.per_path.len()]
            };
            match conv.backward(&cache.acts[i], &d, i > 0) {
                Some(dx) => d = dx,
                None => break,
            }
        }
    }
}

impl<T: Real> Parameterized<T> for PathCnn<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut out: Vec<&Param<T>> = self.convs().flat_map(|c| [&c.weight, &c.bias]).collect();
        out.extend([&self.head.weight, &self.head.bias]);
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut out: Vec<&mut Param<T>> = self
            .per_path
            .iter_mut()
            .chain(self.spatial.iter_mut())
            .flat_map(|c| [&mut c.weight, &mut c.bias])
            .collect();
        out.extend([&mut self.head.weight, &mut self.head.bias]);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net() -> PathCnn<f64> {
        let mut n = PathCnn::new(PathCnnSpec::new(5), &mut ChaCha8Rng::seed_from_u64(4));
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        for p in n.params_mut() {
            // non-zero biases so that no layer is trivially linear
            p.value.iter_mut().for_each(|v| *v += rng.random_range(-0.05..0.05));
        }
        n
    }

    fn random_matrix(k: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..k * 5).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn output_is_two_dimensional_for_any_k() {
        let n = net();
        for k in 1..=10 {
            let (y, _) = n.forward_train(&random_matrix(k, k as u64), k).unwrap();
            assert_eq!(y.len(), 2);
        }
        assert!(matches!(n.forward(&[], 0), Err(Error::Shape(_))));
    }

    /// Reference for one row through the per-path stage, with dense 1×5 taps.
    fn per_path_row(n: &PathCnn<f64>, row: &[f64]) -> Vec<Vec<f64>> {
        let mut h: Vec<Vec<f64>> = vec![row.to_vec()];
        for conv in &n.per_path {
            let mut out = vec![vec![0.0; 5]; conv.cout];
            for (co, o) in out.iter_mut().enumerate() {
                for (f, of) in o.iter_mut().enumerate() {
                    let mut acc = conv.bias.value[co];
                    for (ci, hc) in h.iter().enumerate() {
                        for kx in 0..5 {
                            let src = f as isize + kx as isize - 2;
                            if (0..5).contains(&src) {
                                acc += conv.weight.value[(co * conv.cin + ci) * 5 + kx] * hc[src as usize];
                            }
                        }
                    }
                    *of = acc.max(0.0);
                }
            }
            h = out;
        }
        h
    }

    #[test]
    fn per_path_stage_shares_weights() {
        let n = net();
        let k = 4;
        let m = random_matrix(k, 9);
        let (_, cache) = n.forward_train(&m, k).unwrap();
        // acts[3] is the input to the first spatial conv = per-path output
        let stage = &cache.acts[3];
        for r in 0..k {
            let want = per_path_row(&n, &m[r * 5..(r + 1) * 5]);
            for (c, wc) in want.iter().enumerate() {
                for f in 0..5 {
                    let got = stage.data[(c * k + r) * 5 + f];
                    assert!((got - wc[f]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn duplicated_row_differs_only_through_path_axis_taps() {
        let mut n = net();
        let row = random_matrix(1, 3);
        let dup: Vec<f64> = row.iter().chain(row.iter()).copied().collect();
        let single = n.forward(&row, 1).unwrap();
        let doubled = n.forward(&dup, 2).unwrap();
        // zero-padded 3×3 taps see the neighbour row, so outputs differ
        assert!((single[0] - doubled[0]).abs() + (single[1] - doubled[1]).abs() > 1e-9);
        // silencing the off-centre path-axis taps makes rows independent again
        for conv in &mut n.spatial {
            for co in 0..conv.cout {
                for ci in 0..conv.cin {
                    for ky in [0, 2] {
                        for kx in 0..3 {
                            conv.weight.value[((co * conv.cin + ci) * 3 + ky) * 3 + kx] = 0.0;
                        }
                    }
                }
            }
        }
        let single = n.forward(&row, 1).unwrap();
        let doubled = n.forward(&dup, 2).unwrap();
        assert!((single[0] - doubled[0]).abs() < 1e-12);
        assert!((single[1] - doubled[1]).abs() < 1e-12);
    }
}
