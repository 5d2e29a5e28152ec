//! Training objectives.

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::nn::Real;

/// Smoothing term of the dice loss.
pub const DICE_EPS: f64 = 1.0;

/// Batch root-mean-square Euclidean error.
pub fn loss_coord(pred: &[Point], truth: &[Point]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!("{} predictions for {} targets", pred.len(), truth.len())));
    }
    if pred.is_empty() {
        return Ok(0.0);
    }
    let sq: f64 = pred.iter().zip(truth).map(|(p, t)| (*p - *t).dot(*p - *t)).sum();
    Ok((sq / pred.len() as f64).sqrt())
}

/// [`loss_coord`] on flat `n × 2` buffers, with its gradient w.r.t. `pred`.
pub fn rmse_with_grad<T: Real>(pred: &[T], truth: &[T]) -> (T, Vec<T>) {
    assert_eq!(pred.len(), truth.len(), "prediction/target length");
    let n = pred.len() / 2;
    let err: Vec<T> = pred.iter().zip(truth).map(|(p, t)| *p - *t).collect();
    if n == 0 {
        return (T::zero(), err);
    }
    let sq: T = err.iter().map(|e| *e * *e).sum();
    let loss = (sq / T::cast(n as f64)).sqrt();
    let scale = if loss > T::zero() {
        T::one() / (T::cast(n as f64) * loss)
    } else {
        T::zero()
    };
    (loss, err.into_iter().map(|e| e * scale).collect())
}

/// `−[t·ln p + (1−t)·ln(1−p)]` averaged over pixels, plus `dice_weight` times the dice loss.
pub fn loss_heatmap(pred: &[f64], target: &[f64], dice_weight: f64) -> Result<f64> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::Shape(format!(
            "heatmap sizes differ or are empty: {} vs {}",
            pred.len(),
            target.len()
        )));
    }
    let mut bce = 0.0;
    for (&p, &t) in pred.iter().zip(target) {
        if t > 0.0 {
            bce -= t * p.ln();
        }
        if t < 1.0 {
            bce -= (1.0 - t) * (1.0 - p).ln();
        }
    }
    bce /= pred.len() as f64;
    if dice_weight == 0.0 {
        return Ok(bce);
    }
    Ok(bce + dice_weight * dice_loss(pred, target))
}

/// `1 − (2·Σpt + ε)/(Σp + Σt + ε)`.
pub fn dice_loss(pred: &[f64], target: &[f64]) -> f64 {
    let inter: f64 = pred.iter().zip(target).map(|(p, t)| p * t).sum();
    let sp: f64 = pred.iter().sum();
    let st: f64 = target.iter().sum();
    1.0 - (2.0 * inter + DICE_EPS) / (sp + st + DICE_EPS)
}

/// Heatmap objective on logits for a batch of equally sized maps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatmapLoss {
    pub bce: f64,
    pub dice: f64,
    pub total: f64,
}

/// BCE over all pixels and per-map dice averaged over the batch, computed from
/// logits. The gradient is scaled by `scale`, letting micro-batches accumulate
/// into a full-batch mean.
pub fn heatmap_loss_logits<T: Real>(
    logits: &[T],
    target: &[T],
    pixels_per_map: usize,
    dice_weight: f64,
    scale: f64,
) -> (HeatmapLoss, Vec<T>) {
    assert_eq!(logits.len(), target.len(), "logit/target length");
    assert!(pixels_per_map > 0 && logits.len().is_multiple_of(pixels_per_map), "pixels per map");
    let n_maps = logits.len() / pixels_per_map;
    let count = logits.len() as f64;
    let mut grad = vec![T::zero(); logits.len()];
    let mut bce = 0.0;
    let mut dice = 0.0;
    for ((z, t), g) in logits
        .chunks_exact(pixels_per_map)
        .zip(target.chunks_exact(pixels_per_map))
        .zip(grad.chunks_exact_mut(pixels_per_map))
    {
        let z: Vec<f64> = z.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect();
        let t: Vec<f64> = t.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect();
        let p: Vec<f64> = z.iter().map(|&v| super::heatmapnet::sigmoid(v)).collect();
        for i in 0..z.len() {
            bce += z[i].max(0.0) - z[i] * t[i] + (-z[i].abs()).exp().ln_1p();
        }
        let inter: f64 = p.iter().zip(&t).map(|(a, b)| a * b).sum();
        let denom = p.iter().sum::<f64>() + t.iter().sum::<f64>() + DICE_EPS;
        let num = 2.0 * inter + DICE_EPS;
        dice += 1.0 - num / denom;
        for i in 0..z.len() {
            let mut d = (p[i] - t[i]) / count;
            if dice_weight != 0.0 {
                let dd = -(2.0 * t[i] * denom - num) / (denom * denom);
                d += dice_weight * dd * p[i] * (1.0 - p[i]) / n_maps as f64;
            }
            g[i] = T::cast(d * scale);
        }
    }
    let bce = bce / count;
    let dice = dice / n_maps as f64;
    (
        HeatmapLoss {
            bce,
            dice,
            total: bce + dice_weight * dice,
        },
        grad,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn coordinate_loss_examples() {
        let o = Point::new(0.0, 0.0);
        assert_eq!(loss_coord(&[o, o], &[o, o]).unwrap(), 0.0);
        let l = loss_coord(&[Point::new(3.0, 0.0), Point::new(0.0, 4.0)], &[o, o]).unwrap();
        assert_abs_diff_eq!(l, (12.5f64).sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(l, 3.5355, epsilon = 1e-4);
        assert_abs_diff_eq!(loss_coord(&[Point::new(3.0, 4.0)], &[o]).unwrap(), 5.0, epsilon = 1e-12);
        assert!(loss_coord(&[o], &[]).is_err());
    }

    #[test]
    fn rmse_gradient_matches_finite_differences() {
        let pred = vec![1.0, -2.0, 0.5, 3.0, -1.5, 0.25];
        let truth = vec![0.0, 0.0, 1.0, 1.0, 2.0, -2.0];
        let (l, g) = rmse_with_grad(&pred, &truth);
        for i in 0..pred.len() {
            let h = 1e-6;
            let mut a = pred.clone();
            a[i] += h;
            let mut b = pred.clone();
            b[i] -= h;
            let num = (rmse_with_grad(&a, &truth).0 - rmse_with_grad(&b, &truth).0) / (2.0 * h);
            assert_abs_diff_eq!(g[i], num, epsilon = 1e-8);
        }
        assert!(l > 0.0);
        let (zero, g) = rmse_with_grad(&truth, &truth);
        assert_eq!(zero, 0.0);
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn bce_of_half_is_ln2() {
        let half = vec![0.5; 16];
        assert_abs_diff_eq!(loss_heatmap(&half, &half, 0.0).unwrap(), 2f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn dice_vanishes_when_prediction_matches() {
        let t: Vec<f64> = (0..64).map(|i| if i % 5 == 0 { 1.0 } else { 0.0 }).collect();
        assert_abs_diff_eq!(dice_loss(&t, &t), 0.0, epsilon = 1e-12);
        let mut prev = f64::INFINITY;
        for eps in [0.3, 0.1, 0.01, 0.001] {
            let p: Vec<f64> = t.iter().map(|v| v * (1.0 - eps) + (1.0 - v) * eps).collect();
            let d = dice_loss(&p, &t);
            assert!(d < prev);
            prev = d;
        }
        assert!(prev < 0.01);
    }

    #[test]
    fn zero_dice_weight_gives_plain_bce() {
        let p = vec![0.2, 0.7, 0.9, 0.4];
        let t = vec![0.0, 1.0, 0.5, 0.1];
        let bce = loss_heatmap(&p, &t, 0.0).unwrap();
        let manual: f64 = p
            .iter()
            .zip(&t)
            .map(|(p, t)| -(t * p.ln() + (1.0 - t) * (1.0 - p).ln()))
            .sum::<f64>()
            / 4.0;
        assert_eq!(bce, manual);
        assert!(loss_heatmap(&p, &t, 0.5).unwrap() > bce);
        assert!(loss_heatmap(&p, &t[..3], 0.0).is_err());
    }

    #[test]
    fn logit_loss_agrees_with_probability_loss() {
        let z = vec![-2.0, 0.3, 1.7, -0.4, 0.0, 3.0];
        let t = vec![0.0, 1.0, 0.5, 0.1, 0.9, 1.0];
        let p: Vec<f64> = z.iter().map(|&v| super::super::heatmapnet::sigmoid(v)).collect();
        for lambda in [0.0, 0.7] {
            let (l, _) = heatmap_loss_logits(&z, &t, 3, lambda, 1.0);
            let want = (loss_heatmap(&p[..3], &t[..3], 0.0).unwrap() + loss_heatmap(&p[3..], &t[3..], 0.0).unwrap()) / 2.0
                + lambda * (dice_loss(&p[..3], &t[..3]) + dice_loss(&p[3..], &t[3..])) / 2.0;
            assert_abs_diff_eq!(l.total, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn logit_loss_gradient_matches_finite_differences() {
        let z = vec![-2.0, 0.3, 1.7, -0.4, 0.0, 3.0, 0.8, -1.1];
        let t = vec![0.0, 1.0, 0.5, 0.1, 0.9, 1.0, 0.0, 0.2];
        let (_, g) = heatmap_loss_logits(&z, &t, 4, 0.6, 1.0);
        for i in 0..z.len() {
            let h = 1e-6;
            let mut a = z.clone();
            a[i] += h;
            let mut b = z.clone();
            b[i] -= h;
            let num = (heatmap_loss_logits(&a, &t, 4, 0.6, 1.0).0.total - heatmap_loss_logits(&b, &t, 4, 0.6, 1.0).0.total)
                / (2.0 * h);
            assert_abs_diff_eq!(g[i], num, epsilon = 1e-8);
        }
    }
}
