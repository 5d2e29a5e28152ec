//! Heatmap decoding: top-1 location, Gaussian-mixture candidates and a
//! dispersion-based uncertainty score.
//!
//! Mixture fitting runs weighted EM over pixel-center coordinates `(row, col)`,
//! each pixel weighted by its intensity. Every covariance carries the `1/12`
//! variance of a uniform unit pixel cell, which keeps it positive definite
//! even for a component that owns a single pixel.

use serde::{Deserialize, Serialize};

use crate::encoders::{GeoTransform, Heatmap};
use crate::error::{Error, Result};
use crate::geometry::Point;

pub const MAX_MODES: usize = 5;
/// Pixels below this fraction of the maximum are ignored by the mixture fit.
pub const ACTIVE_FRACTION: f64 = 0.01;
pub const EM_TOL: f64 = 1e-4;
pub const EM_MAX_ITER: usize = 100;
pub const PIXEL_VARIANCE: f64 = 1.0 / 12.0;
/// Candidates closer than this (px) are merged in the argmax variant.
pub const DEDUP_PX: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmFit {
    /// `(row, col)` in pixels, ordered by descending weight.
    pub means: Vec<[f64; 2]>,
    pub covariances: Vec<[[f64; 2]; 2]>,
    pub weights: Vec<f64>,
    /// Set when fewer distinct active pixels than requested kernels existed.
    pub reduced: bool,
    pub log_likelihood: f64,
    pub iterations: usize,
}

impl GmmFit {
    pub fn num_modes(&self) -> usize {
        self.means.len()
    }

    /// Smallest pairwise distance between means, `None` for a single kernel.
    pub fn closest_pair(&self) -> Option<f64> {
        let mut best: Option<f64> = None;
        for i in 0..self.means.len() {
            for j in i + 1..self.means.len() {
                let d = dist(self.means[i], self.means[j]);
                best = Some(best.map_or(d, |b| b.min(d)));
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopKMethod {
    Mean,
    Argmax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopKResult {
    pub candidates: Vec<Point>,
    pub weights: Vec<f64>,
    pub method: TopKMethod,
}

/// Mode-separation threshold and argmax search radius, both in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopKParams {
    pub d_min_px: f64,
    pub r_px: f64,
}

impl TopKParams {
    /// 10 px and 15 px at 224 px, scaled with the image size.
    pub fn for_image_size(size: usize) -> Self {
        let f = size as f64 / 224.0;
        TopKParams {
            d_min_px: 10.0 * f,
            r_px: 15.0 * f,
        }
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn check(h: &Heatmap) -> Result<f32> {
    let max = h.max();
    if h.data.is_empty() || !(max > 0.0) || !max.is_finite() {
        return Err(Error::DegeneratePrediction("heatmap has no positive finite maximum".into()));
    }
    Ok(max)
}

/// `(row, col)` of the maximum; ties go to the smallest `(row, col)`.
pub fn argmax(h: &Heatmap) -> Result<(usize, usize)> {
    check(h)?;
    let mut best = 0;
    for (i, &v) in h.data.iter().enumerate() {
        if v > h.data[best] {
            best = i;
        }
    }
    Ok((best / h.size, best % h.size))
}

pub fn top1(h: &Heatmap, t: &GeoTransform) -> Result<Point> {
    let (r, c) = argmax(h)?;
    Ok(t.pixel_to_world(r as f64, c as f64))
}

/// Pixels strictly above half the maximum.
pub fn uncertainty(h: &Heatmap) -> Result<usize> {
    let half = 0.5 * check(h)? as f64;
    Ok(h.data.iter().filter(|&&v| v as f64 > half).count())
}

struct Active {
    x: Vec<[f64; 2]>,
    w: Vec<f64>,
}

fn active_pixels(h: &Heatmap) -> Result<Active> {
    let floor = ACTIVE_FRACTION * check(h)? as f64;
    let mut x = Vec::new();
    let mut w = Vec::new();
    for (i, &v) in h.data.iter().enumerate() {
        let v = v as f64;
        if v >= floor {
            x.push([(i / h.size) as f64, (i % h.size) as f64]);
            w.push(v);
        }
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    Ok(Active { x, w })
}

/// Intensity-weighted farthest-point seeding, starting at the heaviest pixel.
fn seed_means(a: &Active, m: usize) -> Vec<[f64; 2]> {
    let mut first = 0;
    for i in 1..a.x.len() {
        if a.w[i] > a.w[first] {
            first = i;
        }
    }
    let mut means = vec![a.x[first]];
    let mut min_d2: Vec<f64> = a.x.iter().map(|p| dist(*p, a.x[first]).powi(2)).collect();
    while means.len() < m {
        let mut best = None;
        let mut best_score = 0.0;
        for i in 0..a.x.len() {
            let s = a.w[i] * min_d2[i];
            if s > best_score {
                best_score = s;
                best = Some(i);
            }
        }
        let Some(b) = best else { break };
        means.push(a.x[b]);
        for (d, p) in min_d2.iter_mut().zip(&a.x) {
            *d = d.min(dist(*p, a.x[b]).powi(2));
        }
    }
    means
}

fn log_gauss(x: [f64; 2], mean: [f64; 2], cov: &[[f64; 2]; 2]) -> f64 {
    let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
    let (dx, dy) = (x[0] - mean[0], x[1] - mean[1]);
    let q = (cov[1][1] * dx * dx - 2.0 * cov[0][1] * dx * dy + cov[0][0] * dy * dy) / det;
    -0.5 * q - 0.5 * det.ln() - (2.0 * std::f64::consts::PI).ln()
}

fn weighted_moments(a: &Active, resp: Option<&[f64]>) -> (f64, [f64; 2], [[f64; 2]; 2]) {
    let r = |i: usize| resp.map_or(1.0, |r| r[i]);
    let mut n = 0.0;
    let mut mean = [0.0; 2];
    for i in 0..a.x.len() {
        let wi = a.w[i] * r(i);
        n += wi;
        mean[0] += wi * a.x[i][0];
        mean[1] += wi * a.x[i][1];
    }
    if n <= 0.0 {
        return (0.0, mean, [[PIXEL_VARIANCE, 0.0], [0.0, PIXEL_VARIANCE]]);
    }
    mean = [mean[0] / n, mean[1] / n];
    let mut cov = [[0.0; 2]; 2];
    for i in 0..a.x.len() {
        let wi = a.w[i] * r(i);
        let d = [a.x[i][0] - mean[0], a.x[i][1] - mean[1]];
        cov[0][0] += wi * d[0] * d[0];
        cov[0][1] += wi * d[0] * d[1];
        cov[1][1] += wi * d[1] * d[1];
    }
    cov[0][0] /= n;
    cov[0][1] /= n;
    cov[1][1] /= n;
    cov[1][0] = cov[0][1];
    cov[0][0] += PIXEL_VARIANCE;
    cov[1][1] += PIXEL_VARIANCE;
    (n, mean, cov)
}

/// Weighted EM with `m` kernels.
pub fn fit_gmm(h: &Heatmap, m: usize) -> Result<GmmFit> {
    if !(1..=MAX_MODES).contains(&m) {
        return Err(Error::InvalidArgument(format!("number of kernels must be in 1..={MAX_MODES}, got {m}")));
    }
    let a = active_pixels(h)?;
    let mut means = seed_means(&a, m);
    let reduced = means.len() < m;
    let k = means.len();
    let n = a.x.len();
    // start from the moments of the nearest-seed partition
    let mut resp = vec![0.0; n * k];
    for i in 0..n {
        let near = (0..k)
            .min_by(|&p, &q| dist(a.x[i], means[p]).total_cmp(&dist(a.x[i], means[q])))
            .unwrap_or(0);
        resp[i * k + near] = 1.0;
    }
    let mut covs = vec![[[PIXEL_VARIANCE, 0.0], [0.0, PIXEL_VARIANCE]]; k];
    let mut weights = vec![1.0 / k as f64; k];
    let mut col = vec![0.0; n];
    for j in 0..k {
        for i in 0..n {
            col[i] = resp[i * k + j];
        }
        let (nj, mean, cov) = weighted_moments(&a, Some(&col));
        if nj > 0.0 {
            weights[j] = nj;
            means[j] = mean;
            covs[j] = cov;
        }
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    let mut prev_ll = f64::NEG_INFINITY;
    let mut ll = f64::NEG_INFINITY;
    let mut iterations = 0;
    while iterations < EM_MAX_ITER {
        iterations += 1;
        // E-step
        ll = 0.0;
        for i in 0..n {
            let row = &mut resp[i * k..(i + 1) * k];
            let mut top = f64::NEG_INFINITY;
            for j in 0..k {
                row[j] = weights[j].ln() + log_gauss(a.x[i], means[j], &covs[j]);
                top = top.max(row[j]);
            }
            let s: f64 = row.iter().map(|v| (v - top).exp()).sum();
            let lse = top + s.ln();
            row.iter_mut().for_each(|v| *v = (*v - lse).exp());
            ll += a.w[i] * lse;
        }
        // M-step
        for j in 0..k {
            for i in 0..n {
                col[i] = resp[i * k + j];
            }
            let (nj, mean, cov) = weighted_moments(&a, Some(&col));
            if nj > 1e-12 {
                weights[j] = nj;
                means[j] = mean;
                covs[j] = cov;
            } else {
                weights[j] = 1e-12;
            }
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        if ll - prev_ll < EM_TOL {
            break;
        }
        prev_ll = ll;
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&x, &y| weights[y].total_cmp(&weights[x]));
    Ok(GmmFit {
        means: order.iter().map(|&j| means[j]).collect(),
        covariances: order.iter().map(|&j| covs[j]).collect(),
        weights: order.iter().map(|&j| weights[j]).collect(),
        reduced,
        log_likelihood: ll,
        iterations,
    })
}

/// Fits 2, 3, … kernels and stops at the first fit whose closest pair of
/// means is nearer than `d_min_px`, returning one fewer.
pub fn select_num_modes(h: &Heatmap, d_min_px: f64) -> Result<usize> {
    Ok(select_fit(h, d_min_px)?.num_modes())
}

fn select_fit(h: &Heatmap, d_min_px: f64) -> Result<GmmFit> {
    if !(d_min_px > 0.0) {
        return Err(Error::InvalidArgument(format!("mode separation must be positive, got {d_min_px}")));
    }
    let mut chosen = fit_gmm(h, 1)?;
    for m in 2..=MAX_MODES {
        let fit = fit_gmm(h, m)?;
        if fit.reduced || fit.closest_pair().is_some_and(|d| d < d_min_px) {
            break;
        }
        chosen = fit;
    }
    Ok(chosen)
}

/// Brightest pixel within `r_px` of `center`; ties go to the smallest `(row, col)`.
fn local_argmax(h: &Heatmap, center: [f64; 2], r_px: f64) -> [f64; 2] {
    let s = h.size as isize;
    let r = r_px.max(0.0);
    let (r0, r1) = ((center[0] - r).floor() as isize, (center[0] + r).ceil() as isize);
    let (c0, c1) = ((center[1] - r).floor() as isize, (center[1] + r).ceil() as isize);
    let mut best: Option<(f32, usize, usize)> = None;
    for row in r0.max(0)..=r1.min(s - 1) {
        for col in c0.max(0)..=c1.min(s - 1) {
            let p = [row as f64, col as f64];
            if dist(p, center) > r {
                continue;
            }
            let v = h.get(row as usize, col as usize);
            if best.is_none_or(|(b, _, _)| v > b) {
                best = Some((v, row as usize, col as usize));
            }
        }
    }
    match best {
        Some((_, row, col)) => [row as f64, col as f64],
        // radius too small to contain a pixel center: use the nearest one
        None => [
            center[0].round().clamp(0.0, (s - 1) as f64),
            center[1].round().clamp(0.0, (s - 1) as f64),
        ],
    }
}

/// Up to five candidate locations from a mixture fit of the heatmap.
pub fn topk(h: &Heatmap, t: &GeoTransform, method: TopKMethod, params: TopKParams) -> Result<TopKResult> {
    let fit = select_fit(h, params.d_min_px)?;
    let to_world = |p: [f64; 2]| t.pixel_to_world(p[0], p[1]);
    match method {
        TopKMethod::Mean => Ok(TopKResult {
            candidates: fit.means.iter().map(|&m| to_world(m)).collect(),
            weights: fit.weights.clone(),
            method,
        }),
        TopKMethod::Argmax => {
            let (r, c) = argmax(h)?;
            let global = [r as f64, c as f64];
            let nearest = (0..fit.num_modes())
                .min_by(|&a, &b| dist(fit.means[a], global).total_cmp(&dist(fit.means[b], global)))
                .expect("at least one kernel");
            let mut picks = vec![(global, fit.weights[nearest])];
            for (mean, &w) in fit.means.iter().zip(&fit.weights) {
                let p = local_argmax(h, *mean, params.r_px);
                if picks.iter().all(|(q, _)| dist(*q, p) > DEDUP_PX) {
                    picks.push((p, w));
                }
            }
            picks.truncate(MAX_MODES);
            Ok(TopKResult {
                candidates: picks.iter().map(|(p, _)| to_world(*p)).collect(),
                weights: picks.iter().map(|(_, w)| *w).collect(),
                method,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Sum of isotropic Gaussians `(row, col, amplitude)` with common `sigma`.
    pub(crate) fn render(size: usize, blobs: &[(f64, f64, f64)], sigma: f64) -> Heatmap {
        let mut h = Heatmap::zeros(size);
        for r in 0..size {
            for c in 0..size {
                let v: f64 = blobs
                    .iter()
                    .map(|&(br, bc, a)| a * (-((r as f64 - br).powi(2) + (c as f64 - bc).powi(2)) / (2.0 * sigma * sigma)).exp())
                    .sum();
                h.set(r, c, v as f32);
            }
        }
        h
    }

    fn transform(size: usize) -> GeoTransform {
        GeoTransform::new(size as f64, size as f64, size).unwrap()
    }

    #[test]
    fn top1_examples() {
        let mut h = Heatmap::zeros(64);
        h.set(10, 20, 0.7);
        let t = GeoTransform::new(128.0, 100.0, 64).unwrap();
        let p = top1(&h, &t).unwrap();
        assert_abs_diff_eq!(p.x, 20.5 * 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.y, 10.5 * 2.0, epsilon = 1e-12);
        h.set(3, 40, 0.7);
        h.set(10, 5, 0.7);
        assert_eq!(argmax(&h).unwrap(), (3, 40));
        assert!(matches!(top1(&Heatmap::zeros(8), &t), Err(Error::DegeneratePrediction(_))));
    }

    #[test]
    fn uncertainty_examples() {
        let mut h = Heatmap::zeros(64);
        h.set(5, 5, 1.0);
        assert_eq!(uncertainty(&h).unwrap(), 1);
        let mut h = Heatmap::from_vec(64, vec![0.4; 4096]).unwrap();
        h.set(0, 0, 1.0);
        for i in 1..=7 {
            h.set(i, i, 0.6);
        }
        assert_eq!(uncertainty(&h).unwrap(), 8);
        let h = Heatmap::from_vec(64, vec![0.3; 4096]).unwrap();
        assert_eq!(uncertainty(&h).unwrap(), 4096);
        assert!(uncertainty(&Heatmap::zeros(4)).is_err());
    }

    #[test]
    fn exact_half_is_not_counted() {
        let mut h = Heatmap::zeros(4);
        h.set(0, 0, 1.0);
        h.set(1, 1, 0.5);
        assert_eq!(uncertainty(&h).unwrap(), 1);
    }

    #[test]
    fn single_gaussian_recovers_moments() {
        let h = render(224, &[(100.0, 50.0, 1.0)], 3.0);
        let fit = fit_gmm(&h, 1).unwrap();
        assert!(dist(fit.means[0], [100.0, 50.0]) < 0.5);
        for (p, q) in [(0, 0), (1, 1)] {
            assert!((fit.covariances[0][p][q] - 9.0).abs() < 0.2 * 9.0);
        }
        assert!(fit.covariances[0][0][1].abs() < 0.2);
        assert_abs_diff_eq!(fit.weights[0], 1.0, epsilon = 1e-12);
        assert_eq!(select_num_modes(&h, 10.0).unwrap(), 1);
    }

    #[test]
    fn one_kernel_is_the_weighted_centroid() {
        let h = render(32, &[(8.0, 9.0, 1.0), (20.0, 25.0, 0.6)], 2.5);
        let fit = fit_gmm(&h, 1).unwrap();
        let floor = 0.01 * h.max() as f64;
        let (mut sw, mut sr, mut sc) = (0.0, 0.0, 0.0);
        for r in 0..32 {
            for c in 0..32 {
                let v = h.get(r, c) as f64;
                if v >= floor {
                    sw += v;
                    sr += v * r as f64;
                    sc += v * c as f64;
                }
            }
        }
        assert_abs_diff_eq!(fit.means[0][0], sr / sw, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.means[0][1], sc / sw, epsilon = 1e-9);
    }

    #[test]
    fn two_blobs_give_two_modes_with_even_weights() {
        let h = render(224, &[(100.0, 60.0, 1.0), (100.0, 140.0, 1.0)], 3.0);
        assert_eq!(select_num_modes(&h, 10.0).unwrap(), 2);
        let fit = fit_gmm(&h, 2).unwrap();
        for w in &fit.weights {
            assert!((w - 0.5).abs() < 0.05);
        }
        assert!(fit.closest_pair().unwrap() > 70.0);
    }

    #[test]
    fn five_blobs_hit_the_cap() {
        let blobs: Vec<_> = (0..6).map(|i| (40.0 + 30.0 * i as f64, 30.0 + 32.0 * i as f64, 1.0)).collect();
        let h = render(224, &blobs[..5], 3.0);
        assert_eq!(select_num_modes(&h, 10.0).unwrap(), 5);
        let h = render(224, &blobs, 3.0);
        assert_eq!(select_num_modes(&h, 10.0).unwrap(), 5);
    }

    #[test]
    fn unequal_blobs_keep_their_own_kernels() {
        let blobs = [(30.0, 30.0, 1.0), (30.0, 75.0, 0.5), (75.0, 30.0, 0.6), (75.0, 75.0, 0.9), (150.0, 180.0, 0.55)];
        let h = render(224, &blobs, 3.0);
        let fit = fit_gmm(&h, 5).unwrap();
        for (r, c, _) in blobs {
            let d = fit.means.iter().map(|m| dist(*m, [r, c])).fold(f64::INFINITY, f64::min);
            assert!(d < 0.5, "({r}, {c}) missed by {d}");
        }
    }

    #[test]
    fn weights_sum_to_one_and_covariances_are_spd() {
        let h = render(64, &[(10.0, 10.0, 1.0), (40.0, 50.0, 0.5), (50.0, 12.0, 0.8)], 4.0);
        for m in 1..=5 {
            let fit = fit_gmm(&h, m).unwrap();
            assert_abs_diff_eq!(fit.weights.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
            for c in &fit.covariances {
                assert_eq!(c[0][1], c[1][0]);
                assert!(c[0][0] > 0.0 && c[0][0] * c[1][1] - c[0][1] * c[1][0] > 0.0);
            }
            assert!(fit.weights.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn too_few_pixels_reduce_the_kernel_count() {
        let mut h = Heatmap::zeros(16);
        h.set(2, 2, 1.0);
        h.set(10, 12, 0.5);
        let fit = fit_gmm(&h, 4).unwrap();
        assert!(fit.reduced);
        assert_eq!(fit.num_modes(), 2);
        assert_eq!(select_num_modes(&h, 3.0).unwrap(), 2);
        assert!(fit_gmm(&h, 0).is_err());
        assert!(fit_gmm(&h, 6).is_err());
    }

    #[test]
    fn unimodal_topk_agrees_with_top1() {
        let h = render(64, &[(30.0, 20.0, 1.0)], 2.0);
        let t = transform(64);
        let best = top1(&h, &t).unwrap();
        let params = TopKParams::for_image_size(64);
        for method in [TopKMethod::Mean, TopKMethod::Argmax] {
            let r = topk(&h, &t, method, params).unwrap();
            assert_eq!(r.candidates.len(), 1);
            assert!(r.candidates[0].distance(best) < 0.5);
        }
    }

    #[test]
    fn minor_mode_is_reachable_through_candidates() {
        let h = render(224, &[(60.0, 60.0, 1.0), (160.0, 150.0, 0.6)], 4.0);
        let t = transform(224);
        let truth = t.pixel_to_world(160.0, 150.0);
        let e1 = top1(&h, &t).unwrap().distance(truth);
        for method in [TopKMethod::Mean, TopKMethod::Argmax] {
            let r = topk(&h, &t, method, TopKParams::for_image_size(224)).unwrap();
            let ek = r.candidates.iter().map(|c| c.distance(truth)).fold(f64::INFINITY, f64::min);
            assert!(ek < e1, "{method:?}: {ek} vs {e1}");
        }
    }

    #[test]
    fn argmax_candidate_one_is_top1() {
        let h = render(64, &[(10.0, 10.0, 0.9), (40.0, 45.0, 1.0), (50.0, 12.0, 0.8)], 3.0);
        let t = transform(64);
        let r = topk(&h, &t, TopKMethod::Argmax, TopKParams::for_image_size(64)).unwrap();
        assert_eq!(r.candidates[0], top1(&h, &t).unwrap());
        assert!(r.candidates.len() <= MAX_MODES);
        for i in 0..r.candidates.len() {
            for j in i + 1..r.candidates.len() {
                assert!(r.candidates[i].distance(r.candidates[j]) > DEDUP_PX * t.scale);
            }
        }
    }
}
