//! Extracts top-K location candidates from a bimodal heatmap with both
//! mixture-based methods.

use nlos_loc::encoders::{GeoTransform, Heatmap};
use nlos_loc::postprocess::{fit_gmm, select_num_modes, top1, topk, uncertainty, TopKMethod, TopKParams};

fn main() -> nlos_loc::Result<()> {
    let size = 64;
    let t = GeoTransform::new(128.0, 128.0, size)?;
    // a strong mode and a weaker one, as in an ambiguous NLOS prediction
    let mut h = Heatmap::zeros(size);
    for r in 0..size {
        for c in 0..size {
            let g = |r0: f64, c0: f64, a: f64| {
                a * (-((r as f64 - r0).powi(2) + (c as f64 - c0).powi(2)) / (2.0 * 2.5f64.powi(2))).exp()
            };
            h.set(r, c, (g(15.0, 20.0, 0.9) + g(45.0, 40.0, 0.6)) as f32);
        }
    }
    let params = TopKParams::for_image_size(size);
    let m = select_num_modes(&h, params.d_min_px)?;
    let fit = fit_gmm(&h, m)?;
    println!("modes: {m}");
    for (mean, w) in fit.means.iter().zip(&fit.weights) {
        println!("  mean (row {:.2}, col {:.2}) px, weight {:.3}", mean[0], mean[1], w);
    }
    let best = top1(&h, &t)?;
    println!("top-1: ({:.2}, {:.2}) m", best.x, best.y);
    for method in [TopKMethod::Mean, TopKMethod::Argmax] {
        let r = topk(&h, &t, method, params)?;
        let list: Vec<String> = r.candidates.iter().map(|p| format!("({:.2}, {:.2})", p.x, p.y)).collect();
        println!("{method:?}: {}", list.join(", "));
    }
    println!("uncertainty: {} px above half maximum", uncertainty(&h)?);
    Ok(())
}
