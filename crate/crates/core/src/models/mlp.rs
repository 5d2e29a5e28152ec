//! Shortest-path coordinate regressor.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{relu_backward, relu_inplace, Linear, Param, Parameterized, Real};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
}

impl MlpSpec {
    /// Hidden widths 256, 1024, 256 with a 2-D output.
    pub fn new(input_dim: usize) -> Self {
        MlpSpec {
            input_dim,
            hidden: vec![256, 1024, 256],
            output_dim: 2,
        }
    }

    pub fn param_count(&self) -> usize {
        self.widths().windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim];
        w.extend(&self.hidden);
        w.push(self.output_dim);
        w
    }
}

#[derive(Debug, Clone)]
pub struct Mlp<T> {
    pub spec: MlpSpec,
    pub layers: Vec<Linear<T>>,
}

/// Inputs of every layer, kept for the backward pass.
pub struct MlpCache<T> {
    inputs: Vec<Vec<T>>,
    n: usize,
}

impl<T: Real> Mlp<T> {
    pub fn new(spec: MlpSpec, rng: &mut impl Rng) -> Self {
        let layers = spec.widths().windows(2).map(|w| Linear::new(w[0], w[1], rng)).collect();
        Mlp { spec, layers }
    }

    fn check(&self, x: &[T], n: usize) -> Result<()> {
        if x.len() != n * self.spec.input_dim {
            return Err(Error::Shape(format!(
                "MLP expects {} inputs per sample, got {} values for {n} samples",
                self.spec.input_dim,
                x.len()
            )));
        }
        Ok(())
    }

    /// Raw network output (`n × output_dim`) for a row-major batch.
    pub fn forward(&self, x: &[T], n: usize) -> Result<Vec<T>> {
        Ok(self.forward_train(x, n)?.0)
    }

    pub fn forward_train(&self, x: &[T], n: usize) -> Result<(Vec<T>, MlpCache<T>)> {
        self.check(x, n)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut out = layer.forward(&h, n);
            if i < last {
                relu_inplace(&mut out);
            }
            inputs.push(std::mem::replace(&mut h, out));
        }
        Ok((h, MlpCache { inputs, n }))
    }

    /// Accumulates gradients for `dL/d(output)`.
    pub fn backward(&mut self, cache: &MlpCache<T>, dout: &[T]) {
        let mut d = dout.to_vec();
        for i in (0..self.layers.len()).rev() {
            let x = &cache.inputs[i];
            d = self.layers[i].backward(x, &d, cache.n);
            if i > 0 {
                // x is the rectified output of layer i-1
                relu_backward(x, &mut d);
            }
        }
    }

    /// Single-sample prediction.
    pub fn predict_one(&self, x: &[T]) -> Result<[T; 2]> {
        let y = self.forward(x, 1)?;
        Ok([y[0], y[1]])
    }
}

impl<T: Real> Parameterized<T> for Mlp<T> {
    fn params(&self) -> Vec<&Param<T>> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias]).collect()
    }
}
