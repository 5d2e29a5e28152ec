//! Retrains the MLP without each angle in turn and compares accuracy.

use nlos_loc::dataset::{generate_samples, DatasetConfig};
use nlos_loc::encoders::Ablation;
use nlos_loc::eval::{run_ablation, EvalOptions};
use nlos_loc::models::{ModelKind, TrainConfig};

fn main() -> nlos_loc::Result<()> {
    let data = DatasetConfig::default();
    let train = generate_samples(&data, 0..150)?;
    let val = generate_samples(&data, 150..170)?;
    let test = generate_samples(&data, 170..210)?;
    let config = TrainConfig {
        epochs: 25,
        ..TrainConfig::for_kind(ModelKind::Mlp)
    };
    let variants = [Ablation::Base, Ablation::NoAod, Ablation::NoAoa];
    let table = run_ablation(ModelKind::Mlp, &train, &val, &test, &variants, &config, &EvalOptions::default())?;
    println!("{:<8} {:>8} {:>8} {:>8}", "variant", "all", "LOS", "NLOS");
    for (name, r) in &table {
        let a = |s: &str| r.get(&format!("acc@10m_{s}")).unwrap_or(f64::NAN);
        println!("{name:<8} {:>8.3} {:>8.3} {:>8.3}", a("all"), a("los"), a("nlos"));
    }
    Ok(())
}
