//! Relates the dispersion score of a heatmap to localization error: sharper
//! heatmaps centered near the truth, wider ones drifting away from it.

use nlos_loc::encoders::Heatmap;
use nlos_loc::eval::{spearman, uncertainty_bins};
use nlos_loc::postprocess::{argmax, uncertainty};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> nlos_loc::Result<()> {
    let size = 48;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut errors = Vec::new();
    let mut scores = Vec::new();
    for _ in 0..200 {
        let sigma: f64 = rng.random_range(0.8..6.0);
        let truth = (24.0, 24.0);
        // the peak drifts further from the truth for wider heatmaps
        let drift = sigma * rng.random_range(0.0..2.0);
        let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let (pr, pc) = (truth.0 + drift * angle.sin(), truth.1 + drift * angle.cos());
        let mut h = Heatmap::zeros(size);
        for r in 0..size {
            for c in 0..size {
                let d2 = (r as f64 - pr).powi(2) + (c as f64 - pc).powi(2);
                h.set(r, c, (-d2 / (2.0 * sigma * sigma)).exp() as f32);
            }
        }
        let (r, c) = argmax(&h)?;
        errors.push(((r as f64 - truth.0).powi(2) + (c as f64 - truth.1).powi(2)).sqrt());
        scores.push(uncertainty(&h)?);
    }
    let s: Vec<f64> = scores.iter().map(|&u| u as f64).collect();
    println!("Spearman(uncertainty, error) = {:.3}", spearman(&s, &errors)?);
    for (i, b) in uncertainty_bins(&errors, &scores, 10)?.iter().enumerate() {
        println!(
            "bin {:2}: uncertainty {:4}..{:4}, RMSE {:5.2} px {}",
            i + 1,
            b.min_uncertainty,
            b.max_uncertainty,
            b.rmse,
            "#".repeat((b.rmse * 4.0) as usize)
        );
    }
    Ok(())
}
