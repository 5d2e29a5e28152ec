//! Trains the all-paths convolutional regressor and compares it with the
//! shortest-path MLP on the same data.

use nlos_loc::dataset::{generate_samples, DatasetConfig};
use nlos_loc::encoders::AblationFlags;
use nlos_loc::eval::{evaluate, EvalOptions};
use nlos_loc::models::{train, ModelKind, TrainConfig};

fn main() -> nlos_loc::Result<()> {
    let data = DatasetConfig {
        max_bounces: 2,
        ..DatasetConfig::default()
    };
    let train_set = generate_samples(&data, 0..120)?;
    let val_set = generate_samples(&data, 120..140)?;
    let test_set = generate_samples(&data, 140..180)?;
    for kind in [ModelKind::Mlp, ModelKind::PathCnn] {
        let config = TrainConfig {
            epochs: 20,
            ..TrainConfig::for_kind(kind)
        };
        let (model, _) = train(kind, &train_set, &val_set, AblationFlags::default(), &config)?;
        let r = evaluate(&model, &test_set, &EvalOptions::default())?.report;
        println!(
            "{:>8}: RMSE {:6.2} m, acc@10m all {:.3} / LOS {:.3} / NLOS {:.3}",
            kind.to_string(),
            r.get("rmse_all").unwrap_or(f64::NAN),
            r.get("acc@10m_all").unwrap_or(f64::NAN),
            r.get("acc@10m_los").unwrap_or(f64::NAN),
            r.get("acc@10m_nlos").unwrap_or(f64::NAN),
        );
    }
    Ok(())
}
