//! Minimal dense/convolution layers with hand-written backward passes.
//!
//! Convolution tensors use a `[channel][batch][row][col]` layout so that an
//! im2col product lands directly in the output layout and channel
//! concatenation is a plain append.

use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Scalar type the layers are generic over (`f32` for training, `f64` for checks).
pub trait Real: Float + FromPrimitive + ToPrimitive + Default + Debug + Sum + Send + Sync + 'static {
    /// `c = alpha·a·b + beta·c` on strided row/column views.
    ///
    /// # Safety
    /// Every addressed element must lie inside its buffer.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    fn cast(x: f64) -> Self {
        Self::from_f64(x).expect("representable")
    }
}

impl Real for f32 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Real for f64 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// Strided matrix view: `(data, row stride, col stride)`.
type View<'a, T> = (&'a [T], usize, usize);

fn last_index(rows: usize, cols: usize, rs: usize, cs: usize) -> usize {
    (rows - 1) * rs + (cols - 1) * cs
}

/// `c (m×n) = a (m×k) · b (k×n) + beta·c`, all views non-negatively strided.
pub fn gemm<T: Real>(m: usize, k: usize, n: usize, a: View<T>, b: View<T>, beta: T, c: &mut [T], rsc: usize, csc: usize) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for i in 0..m {
            for j in 0..n {
                c[i * rsc + j * csc] = c[i * rsc + j * csc] * beta;
            }
        }
        return;
    }
    assert!(last_index(m, k, a.1, a.2) < a.0.len(), "gemm: lhs out of bounds");
    assert!(last_index(k, n, b.1, b.2) < b.0.len(), "gemm: rhs out of bounds");
    assert!(last_index(m, n, rsc, csc) < c.len(), "gemm: output out of bounds");
    // SAFETY: the three asserts above bound every element matrixmultiply touches.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            T::one(),
            a.0.as_ptr(),
            a.1 as isize,
            a.2 as isize,
            b.0.as_ptr(),
            b.1 as isize,
            b.2 as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        )
    }
}

/// A trainable tensor and its accumulated gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param<T> {
    pub value: Vec<T>,
    #[serde(skip)]
    pub grad: Vec<T>,
}

impl<T: Real> Param<T> {
    pub fn zeros(len: usize) -> Self {
        Param {
            value: vec![T::zero(); len],
            grad: vec![T::zero(); len],
        }
    }

    pub fn he_normal(len: usize, fan_in: usize, rng: &mut impl Rng) -> Self {
        let std = (2.0 / fan_in as f64).sqrt();
        let value = (0..len)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                T::cast(z * std)
            })
            .collect();
        Param {
            value,
            grad: vec![T::zero(); len],
        }
    }

    pub fn from_values(value: Vec<T>) -> Self {
        let grad = vec![T::zero(); value.len()];
        Param { value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = T::zero());
    }
}

/// Anything that owns an ordered list of parameters.
pub trait Parameterized<T: Real> {
    fn params(&self) -> Vec<&Param<T>>;
    fn params_mut(&mut self) -> Vec<&mut Param<T>>;

    fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Param::zero_grad);
    }

    fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }

    /// Copies of every parameter tensor, in `params()` order.
    fn export(&self) -> Vec<Vec<T>> {
        self.params().iter().map(|p| p.value.clone()).collect()
    }

    fn import(&mut self, tensors: &[Vec<T>]) -> crate::Result<()> {
        let mut params = self.params_mut();
        if params.len() != tensors.len() {
            return Err(crate::Error::Shape(format!(
                "expected {} parameter tensors, got {}",
                params.len(),
                tensors.len()
            )));
        }
        for (i, (p, t)) in params.iter_mut().zip(tensors).enumerate() {
            if p.value.len() != t.len() {
                return Err(crate::Error::Shape(format!(
                    "parameter {i}: expected {} values, got {}",
                    p.value.len(),
                    t.len()
                )));
            }
            p.value.copy_from_slice(t);
        }
        Ok(())
    }
}

/// Fully connected layer, weight stored `out × in` row-major.
#[derive(Debug, Clone)]
pub struct Linear<T> {
    pub inp: usize,
    pub out: usize,
    pub weight: Param<T>,
    pub bias: Param<T>,
}

impl<T: Real> Linear<T> {
    pub fn new(inp: usize, out: usize, rng: &mut impl Rng) -> Self {
        Linear {
            inp,
            out,
            weight: Param::he_normal(inp * out, inp, rng),
            bias: Param::zeros(out),
        }
    }

    /// `x` is `n × inp` row-major; returns `n × out`.
    pub fn forward(&self, x: &[T], n: usize) -> Vec<T> {
        let mut y = Vec::with_capacity(n * self.out);
        for _ in 0..n {
            y.extend_from_slice(&self.bias.value);
        }
        gemm(n, self.inp, self.out, (x, self.inp, 1), (&self.weight.value, 1, self.inp), T::one(), &mut y, self.out, 1);
        y
    }

    /// Accumulates parameter gradients and returns `dL/dx`.
    pub fn backward(&mut self, x: &[T], dy: &[T], n: usize) -> Vec<T> {
        gemm(self.out, n, self.inp, (dy, 1, self.out), (x, self.inp, 1), T::one(), &mut self.weight.grad, self.inp, 1);
        for row in dy.chunks_exact(self.out) {
            for (g, d) in self.bias.grad.iter_mut().zip(row) {
                *g = *g + *d;
            }
        }
        let mut dx = vec![T::zero(); n * self.inp];
        gemm(n, self.out, self.inp, (dy, self.out, 1), (&self.weight.value, self.inp, 1), T::zero(), &mut dx, self.inp, 1);
        dx
    }
}

/// `[channels][batch][height][width]` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub c: usize,
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(c: usize, n: usize, h: usize, w: usize) -> Self {
        Tensor {
            c,
            n,
            h,
            w,
            data: vec![T::zero(); c * n * h * w],
        }
    }

    pub fn from_vec(c: usize, n: usize, h: usize, w: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), c * n * h * w, "tensor data length");
        Tensor { c, n, h, w, data }
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    /// Channel-wise concatenation `[self; other]`.
    pub fn concat(&self, other: &Tensor<T>) -> Tensor<T> {
        assert!(self.n == other.n && self.h == other.h && self.w == other.w, "concat shape");
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Tensor::from_vec(self.c + other.c, self.n, self.h, self.w, data)
    }

    /// Inverse of [`concat`](Self::concat): first `c` channels, remainder.
    pub fn split_channels(self, c: usize) -> (Tensor<T>, Tensor<T>) {
        let cut = c * self.n * self.plane();
        let mut data = self.data;
        let rest = data.split_off(cut);
        (
            Tensor::from_vec(c, self.n, self.h, self.w, data),
            Tensor::from_vec(self.c - c, self.n, self.h, self.w, rest),
        )
    }
}

pub fn relu_inplace<T: Real>(x: &mut [T]) {
    for v in x {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// Masks `dy` where the rectified output was not positive.
pub fn relu_backward<T: Real>(y: &[T], dy: &mut [T]) {
    for (d, v) in dy.iter_mut().zip(y) {
        if *v <= T::zero() {
            *d = T::zero();
        }
    }
}

/// 2-D convolution, stride 1, zero padding `(ph, pw)`.
#[derive(Debug, Clone)]
pub struct Conv2d<T> {
    pub cin: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
    pub ph: usize,
    pub pw: usize,
    pub weight: Param<T>,
    pub bias: Param<T>,
}

impl<T: Real> Conv2d<T> {
    pub fn new(cin: usize, cout: usize, (kh, kw): (usize, usize), (ph, pw): (usize, usize), rng: &mut impl Rng) -> Self {
        let fan_in = cin * kh * kw;
        Conv2d {
            cin,
            cout,
            kh,
            kw,
            ph,
            pw,
            weight: Param::he_normal(cout * fan_in, fan_in, rng),
            bias: Param::zeros(cout),
        }
    }

    fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        (h + 2 * self.ph + 1 - self.kh, w + 2 * self.pw + 1 - self.kw)
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.ph == 0 && self.pw == 0
    }

    fn im2col(&self, x: &Tensor<T>) -> Vec<T> {
        let (ho, wo) = self.out_hw(x.h, x.w);
        let cols = x.n * ho * wo;
        let mut col = vec![T::zero(); self.cin * self.kh * self.kw * cols];
        for ci in 0..self.cin {
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = (ci * self.kh + ky) * self.kw + kx;
                    let dst = &mut col[row * cols..(row + 1) * cols];
                    let ox_lo = self.pw.saturating_sub(kx);
                    let ox_hi = (x.w + self.pw).saturating_sub(kx).min(wo);
                    for b in 0..x.n {
                        for oy in 0..ho {
                            let iy = oy + ky;
                            if iy < self.ph || iy - self.ph >= x.h || ox_lo >= ox_hi {
                                continue;
                            }
                            let src = ((ci * x.n + b) * x.h + iy - self.ph) * x.w;
                            let base = (b * ho + oy) * wo;
                            let ix0 = ox_lo + kx - self.pw;
                            let len = ox_hi - ox_lo;
                            dst[base + ox_lo..base + ox_hi].copy_from_slice(&x.data[src + ix0..src + ix0 + len]);
                        }
                    }
                }
            }
        }
        col
    }

    fn col2im(&self, col: &[T], n: usize, h: usize, w: usize) -> Tensor<T> {
        let (ho, wo) = self.out_hw(h, w);
        let cols = n * ho * wo;
        let mut dx = Tensor::zeros(self.cin, n, h, w);
        for ci in 0..self.cin {
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = (ci * self.kh + ky) * self.kw + kx;
                    let src = &col[row * cols..(row + 1) * cols];
                    let ox_lo = self.pw.saturating_sub(kx);
                    let ox_hi = (w + self.pw).saturating_sub(kx).min(wo);
                    for b in 0..n {
                        for oy in 0..ho {
                            let iy = oy + ky;
                            if iy < self.ph || iy - self.ph >= h || ox_lo >= ox_hi {
                                continue;
                            }
                            let dst = ((ci * n + b) * h + iy - self.ph) * w;
                            let base = (b * ho + oy) * wo;
                            let ix0 = ox_lo + kx - self.pw;
                            let out = &mut dx.data[dst + ix0..dst + ix0 + (ox_hi - ox_lo)];
                            for (o, s) in out.iter_mut().zip(&src[base + ox_lo..base + ox_hi]) {
                                *o = *o + *s;
                            }
                        }
                    }
                }
            }
        }
        dx
    }

    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        assert_eq!(x.c, self.cin, "conv input channels");
        let (ho, wo) = self.out_hw(x.h, x.w);
        let cols = x.n * ho * wo;
        let rows = self.cin * self.kh * self.kw;
        let mut y = Vec::with_capacity(self.cout * cols);
        for &b in &self.bias.value {
            y.extend(std::iter::repeat_n(b, cols));
        }
        let owned;
        let col: &[T] = if self.is_pointwise() {
            &x.data
        } else {
            owned = self.im2col(x);
            &owned
        };
        gemm(self.cout, rows, cols, (&self.weight.value, rows, 1), (col, cols, 1), T::one(), &mut y, cols, 1);
        Tensor::from_vec(self.cout, x.n, ho, wo, y)
    }

    /// Accumulates parameter gradients; returns `dL/dx` when asked.
    pub fn backward(&mut self, x: &Tensor<T>, dy: &Tensor<T>, need_dx: bool) -> Option<Tensor<T>> {
        let (ho, wo) = self.out_hw(x.h, x.w);
        let cols = x.n * ho * wo;
        let rows = self.cin * self.kh * self.kw;
        assert_eq!(dy.data.len(), self.cout * cols, "conv output gradient shape");
        let owned;
        let col: &[T] = if self.is_pointwise() {
            &x.data
        } else {
            owned = self.im2col(x);
            &owned
        };
        gemm(self.cout, cols, rows, (&dy.data, cols, 1), (col, 1, cols), T::one(), &mut self.weight.grad, rows, 1);
        for (g, row) in self.bias.grad.iter_mut().zip(dy.data.chunks_exact(cols)) {
            *g = *g + row.iter().copied().sum();
        }
        if !need_dx {
            return None;
        }
        let mut dcol = vec![T::zero(); rows * cols];
        gemm(rows, self.cout, cols, (&self.weight.value, 1, rows), (&dy.data, cols, 1), T::zero(), &mut dcol, cols, 1);
        if self.is_pointwise() {
            Some(Tensor::from_vec(self.cin, x.n, x.h, x.w, dcol))
        } else {
            Some(self.col2im(&dcol, x.n, x.h, x.w))
        }
    }
}

/// 2×2 max pooling; also returns the flat source index of each maximum.
pub fn maxpool2<T: Real>(x: &Tensor<T>) -> (Tensor<T>, Vec<u32>) {
    let (h2, w2) = (x.h / 2, x.w / 2);
    let mut y = Tensor::zeros(x.c, x.n, h2, w2);
    let mut idx = vec![0u32; y.data.len()];
    for plane in 0..x.c * x.n {
        let src = plane * x.h * x.w;
        let dst = plane * h2 * w2;
        for r in 0..h2 {
            for c in 0..w2 {
                let mut best = src + 2 * r * x.w + 2 * c;
                for (dr, dc) in [(0, 1), (1, 0), (1, 1)] {
                    let k = src + (2 * r + dr) * x.w + 2 * c + dc;
                    if x.data[k] > x.data[best] {
                        best = k;
                    }
                }
                y.data[dst + r * w2 + c] = x.data[best];
                idx[dst + r * w2 + c] = best as u32;
            }
        }
    }
    (y, idx)
}

pub fn maxpool2_backward<T: Real>(dy: &Tensor<T>, idx: &[u32], h: usize, w: usize) -> Tensor<T> {
    let mut dx = Tensor::zeros(dy.c, dy.n, h, w);
    for (d, &i) in dy.data.iter().zip(idx) {
        dx.data[i as usize] = dx.data[i as usize] + *d;
    }
    dx
}

/// Source taps `(i0, i1, frac)` for ×2 bilinear upsampling, half-pixel centers.
fn bilinear_taps(n: usize) -> Vec<(usize, usize, f64)> {
    (0..2 * n)
        .map(|o| {
            let src = ((o as f64 + 0.5) / 2.0 - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(n - 1);
            let i1 = (i0 + 1).min(n - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

pub fn upsample2<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let (ty, tx) = (bilinear_taps(x.h), bilinear_taps(x.w));
    let (h2, w2) = (2 * x.h, 2 * x.w);
    let mut y = Tensor::zeros(x.c, x.n, h2, w2);
    for plane in 0..x.c * x.n {
        let src = &x.data[plane * x.h * x.w..(plane + 1) * x.h * x.w];
        let dst = &mut y.data[plane * h2 * w2..(plane + 1) * h2 * w2];
        for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
            let fy = T::cast(fy);
            for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                let fx = T::cast(fx);
                let top = src[y0 * x.w + x0] * (T::one() - fx) + src[y0 * x.w + x1] * fx;
                let bot = src[y1 * x.w + x0] * (T::one() - fx) + src[y1 * x.w + x1] * fx;
                dst[oy * w2 + ox] = top * (T::one() - fy) + bot * fy;
            }
        }
    }
    y
}

pub fn upsample2_backward<T: Real>(dy: &Tensor<T>) -> Tensor<T> {
    let (h, w) = (dy.h / 2, dy.w / 2);
    let (ty, tx) = (bilinear_taps(h), bilinear_taps(w));
    let mut dx = Tensor::zeros(dy.c, dy.n, h, w);
    for plane in 0..dy.c * dy.n {
        let src = &dy.data[plane * dy.h * dy.w..(plane + 1) * dy.h * dy.w];
        let dst = &mut dx.data[plane * h * w..(plane + 1) * h * w];
        for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
            let fy = T::cast(fy);
            for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                let fx = T::cast(fx);
                let g = src[oy * dy.w + ox];
                let gt = g * (T::one() - fy);
                let gb = g * fy;
                dst[y0 * w + x0] = dst[y0 * w + x0] + gt * (T::one() - fx);
                dst[y0 * w + x1] = dst[y0 * w + x1] + gt * fx;
                dst[y1 * w + x0] = dst[y1 * w + x0] + gb * (T::one() - fx);
                dst[y1 * w + x1] = dst[y1 * w + x1] + gb * fx;
            }
        }
    }
    dx
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// Applies one update from the accumulated gradients, then clears them.
    pub fn step(&mut self, params: Vec<&mut Param<T>>) {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![T::zero(); p.value.len()]).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let (b1, b2) = (T::cast(self.beta1), T::cast(self.beta2));
        let c1 = T::cast(1.0 - self.beta1.powi(self.step));
        let c2 = T::cast(1.0 - self.beta2.powi(self.step));
        let lr = T::cast(self.lr);
        let eps = T::cast(self.eps);
        let one = T::one();
        for ((p, m), v) in params.into_iter().zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.value.len() {
                let g = p.grad[i];
                m[i] = b1 * m[i] + (one - b1) * g;
                v[i] = b2 * v[i] + (one - b2) * g * g;
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                p.value[i] = p.value[i] - lr * mhat / (vhat.sqrt() + eps);
                p.grad[i] = T::zero();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Direct nested-loop convolution, independent of im2col/gemm.
    fn conv_reference(conv: &Conv2d<f64>, x: &Tensor<f64>) -> Tensor<f64> {
        let (ho, wo) = (x.h + 2 * conv.ph + 1 - conv.kh, x.w + 2 * conv.pw + 1 - conv.kw);
        let mut y = Tensor::zeros(conv.cout, x.n, ho, wo);
        for co in 0..conv.cout {
            for b in 0..x.n {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut acc = conv.bias.value[co];
                        for ci in 0..conv.cin {
                            for ky in 0..conv.kh {
                                for kx in 0..conv.kw {
                                    let iy = oy as isize + ky as isize - conv.ph as isize;
                                    let ix = ox as isize + kx as isize - conv.pw as isize;
                                    if iy < 0 || ix < 0 || iy >= x.h as isize || ix >= x.w as isize {
                                        continue;
                                    }
                                    let wv = conv.weight.value[((co * conv.cin + ci) * conv.kh + ky) * conv.kw + kx];
                                    acc += wv * x.data[((ci * x.n + b) * x.h + iy as usize) * x.w + ix as usize];
                                }
                            }
                        }
                        y.data[((co * x.n + b) * ho + oy) * wo + ox] = acc;
                    }
                }
            }
        }
        y
    }

    fn random_tensor(rng: &mut ChaCha8Rng, c: usize, n: usize, h: usize, w: usize) -> Tensor<f64> {
        Tensor::from_vec(c, n, h, w, (0..c * n * h * w).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    #[test]
    fn conv_matches_direct_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (k, p) in [((3, 3), (1, 1)), ((1, 5), (0, 2)), ((1, 1), (0, 0)), ((3, 3), (0, 0))] {
            let mut conv = Conv2d::<f64>::new(3, 4, k, p, &mut rng);
            conv.bias.value.iter_mut().for_each(|b| *b = rng.random_range(-1.0..1.0));
            let x = random_tensor(&mut rng, 3, 2, 6, 7);
            let got = conv.forward(&x);
            let want = conv_reference(&conv, &x);
            assert_eq!((got.h, got.w), (want.h, want.w));
            for (a, b) in got.data.iter().zip(&want.data) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conv_backward_is_adjoint() {
        // <conv(x) - b, dy> = <x, dx> for the linear part
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut conv = Conv2d::<f64>::new(2, 3, (3, 3), (1, 1), &mut rng);
        let x = random_tensor(&mut rng, 2, 2, 5, 4);
        let dy = random_tensor(&mut rng, 3, 2, 5, 4);
        let y = conv.forward(&x);
        let dx = conv.backward(&x, &dy, true).unwrap();
        let lhs: f64 = y.data.iter().zip(&dy.data).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data.iter().zip(&dx.data).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
        // weight gradient: <y, dy> is linear in w too
        let wg: f64 = conv.weight.value.iter().zip(&conv.weight.grad).map(|(a, b)| a * b).sum();
        assert!((lhs - wg).abs() < 1e-10);
    }

    #[test]
    fn upsample_backward_is_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_tensor(&mut rng, 2, 1, 3, 4);
        let dy = random_tensor(&mut rng, 2, 1, 6, 8);
        let y = upsample2(&x);
        let dx = upsample2_backward(&dy);
        let lhs: f64 = y.data.iter().zip(&dy.data).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data.iter().zip(&dx.data).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn upsample_constant_stays_constant() {
        let x = Tensor::from_vec(1, 1, 2, 2, vec![3.0f64; 4]);
        assert!(upsample2(&x).data.iter().all(|&v| (v - 3.0).abs() < 1e-15));
    }

    #[test]
    fn maxpool_routes_gradient_to_max() {
        let x = Tensor::from_vec(1, 1, 2, 4, vec![1.0f64, 5.0, 0.0, 0.0, 2.0, 3.0, 0.0, 7.0]);
        let (y, idx) = maxpool2(&x);
        assert_eq!(y.data, vec![5.0, 7.0]);
        let dx = maxpool2_backward(&Tensor::from_vec(1, 1, 1, 2, vec![1.0, 2.0]), &idx, 2, 4);
        assert_eq!(dx.data, vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 2.0]);
    }

    #[test]
    fn linear_matches_manual_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let lin = Linear::<f64>::new(3, 2, &mut rng);
        let x = [1.0, -2.0, 0.5, 0.0, 1.0, 1.0];
        let y = lin.forward(&x, 2);
        for i in 0..2 {
            for j in 0..2 {
                let want: f64 = (0..3).map(|k| lin.weight.value[j * 3 + k] * x[i * 3 + k]).sum::<f64>() + lin.bias.value[j];
                assert!((y[i * 2 + j] - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn concat_split_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_tensor(&mut rng, 2, 3, 2, 2);
        let b = random_tensor(&mut rng, 1, 3, 2, 2);
        let (a2, b2) = a.concat(&b).split_channels(2);
        assert_eq!(a, a2);
        assert_eq!(b, b2);
    }

    #[test]
    fn adam_zero_lr_keeps_params() {
        let mut p = Param::<f64>::from_values(vec![1.0, -2.0]);
        p.grad = vec![0.3, 0.4];
        let mut opt = Adam::new(0.0);
        opt.step(vec![&mut p]);
        assert_eq!(p.value, vec![1.0, -2.0]);
        assert_eq!(p.grad, vec![0.0, 0.0]);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut p = Param::<f64>::from_values(vec![1.0, -2.0]);
        p.grad = vec![0.3, -4.0];
        let mut opt = Adam::new(0.1);
        opt.step(vec![&mut p]);
        assert!((p.value[0] - 0.9).abs() < 1e-6);
        assert!((p.value[1] + 1.9).abs() < 1e-6);
    }
}
