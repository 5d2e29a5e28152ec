//! Trains the shortest-path MLP on an in-memory dataset and reports LOS and
//! NLOS accuracy on held-out maps.

use nlos_loc::dataset::{generate_samples, DatasetConfig};
use nlos_loc::encoders::AblationFlags;
use nlos_loc::eval::{evaluate, EvalOptions};
use nlos_loc::models::{train_with, ModelKind, TrainConfig};

fn main() -> nlos_loc::Result<()> {
    let data = DatasetConfig::default();
    let train = generate_samples(&data, 0..200)?;
    let val = generate_samples(&data, 200..230)?;
    let test = generate_samples(&data, 230..280)?;
    let config = TrainConfig {
        epochs: 40,
        ..TrainConfig::for_kind(ModelKind::Mlp)
    };
    let (model, history) = train_with(ModelKind::Mlp, &train, &val, AblationFlags::default(), &config, |e| {
        println!("epoch {:3}: train RMSE {:7.2} m, val acc@10m {:.3}", e.epoch, e.train_loss, e.val_acc10.unwrap_or(0.0));
    })?;
    println!("kept epoch {}", history.best_epoch);
    let report = evaluate(&model, &test, &EvalOptions::default())?.report;
    for subset in ["all", "los", "nlos"] {
        println!(
            "{subset:>4}: n = {:4}, RMSE {:6.2} m, acc@10m {:.3}",
            report.get(&format!("n_{subset}")).unwrap_or(0.0),
            report.get(&format!("rmse_{subset}")).unwrap_or(f64::NAN),
            report.get(&format!("acc@10m_{subset}")).unwrap_or(f64::NAN),
        );
    }
    Ok(())
}
