//! Trains a small heatmap network, saves a checkpoint and writes metrics,
//! predictions and figures for the test maps.
//!
//! Usage: `cargo run --release --example train_unet [-- OUT_DIR]`

use std::path::PathBuf;

use nlos_loc::cli::write_plots;
use nlos_loc::dataset::{generate_samples, DatasetConfig};
use nlos_loc::encoders::AblationFlags;
use nlos_loc::eval::{evaluate, write_predictions_csv, EvalOptions};
use nlos_loc::models::{train_with, ModelKind, TrainConfig, TrainedModel};

fn main() -> nlos_loc::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("nlosloc_example_unet"));
    std::fs::create_dir_all(&out).map_err(|e| nlos_loc::Error::Io { path: out.clone(), source: e })?;

    let data = DatasetConfig {
        n_sources: 8,
        ..DatasetConfig::default()
    };
    let train = generate_samples(&data, 0..80)?;
    let test = generate_samples(&data, 80..100)?;
    let config = TrainConfig {
        epochs: 6,
        batch_size: 16,
        learning_rate: 1e-3,
        image_size: 32,
        unet_levels: 3,
        unet_base_width: 8,
        sigma_px: 1.5,
        ..TrainConfig::for_kind(ModelKind::Unet)
    };
    let (model, _) = train_with(ModelKind::Unet, &train, &[], AblationFlags::default(), &config, |e| {
        println!("epoch {}: BCE {:.5}", e.epoch, e.train_bce.unwrap_or(f64::NAN));
    })?;
    let ckpt = out.join("checkpoint.json");
    model.save(&ckpt)?;
    let model = TrainedModel::load(&ckpt)?;

    let opts = EvalOptions::default();
    let ev = evaluate(&model, &test, &opts)?;
    ev.report.write(&out.join("metrics.json"))?;
    write_predictions_csv(&out.join("predictions.csv"), &ev.rows)?;
    write_plots(&out, &ev.rows, &opts)?;
    println!(
        "acc@10m LOS {:.3}, NLOS {:.3}; outputs in {}",
        ev.report.get("acc@10m_los").unwrap_or(f64::NAN),
        ev.report.get("acc@10m_nlos").unwrap_or(f64::NAN),
        out.display()
    );
    Ok(())
}
