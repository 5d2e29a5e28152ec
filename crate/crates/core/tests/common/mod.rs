#![allow(dead_code)]

use nlos_loc::encoders::Heatmap;
use nlos_loc::nn::Parameterized;

/// Compares the stored gradients of `net` against central differences of
/// `loss`. Returns `(agreeing, total)` parameter counts.
pub fn grad_check<N: Parameterized<f64>>(net: &mut N, loss: impl Fn(&N) -> f64, h: f64, tol: f64) -> (usize, usize) {
    let analytic: Vec<Vec<f64>> = net.params().iter().map(|p| p.grad.clone()).collect();
    let (mut ok, mut total) = (0, 0);
    for (pi, grads) in analytic.iter().enumerate() {
        for (j, &a) in grads.iter().enumerate() {
            let orig = net.params()[pi].value[j];
            net.params_mut()[pi].value[j] = orig + h;
            let lp = loss(net);
            net.params_mut()[pi].value[j] = orig - h;
            let lm = loss(net);
            net.params_mut()[pi].value[j] = orig;
            let num = (lp - lm) / (2.0 * h);
            let rel = (a - num).abs() / a.abs().max(num.abs()).max(1e-10);
            total += 1;
            if rel < tol {
                ok += 1;
            }
        }
    }
    (ok, total)
}

/// Heatmap with isotropic Gaussian blobs `(row, col, amplitude)`.
pub fn render(size: usize, blobs: &[(f64, f64, f64)], sigma: f64) -> Heatmap {
    let mut h = Heatmap::zeros(size);
    for r in 0..size {
        for c in 0..size {
            let v: f64 = blobs
                .iter()
                .map(|&(r0, c0, a)| {
                    let d2 = (r as f64 - r0).powi(2) + (c as f64 - c0).powi(2);
                    a * (-d2 / (2.0 * sigma * sigma)).exp()
                })
                .sum();
            h.set(r, c, v as f32);
        }
    }
    h
}
