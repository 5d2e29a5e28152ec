//! The `nlosloc` command line.
//!
//! Exit codes: 0 success, 2 usage error, 3 data or format error, 4 training
//! divergence.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::dataset::{generate_dataset, load_dataset, Split};
use crate::encoders::Ablation;
use crate::error::{Error, Result};
use crate::eval::{self, acc_key, EvalOptions, Evaluation, SampleResult};
use crate::models::{train_with, History, ModelKind, TrainedModel};
use crate::plot;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_DIVERGED: i32 = 4;

pub const CONFIG_FILE: &str = "config.txt";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const HISTORY_FILE: &str = "history.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const ABLATION_FILE: &str = "ablation.json";

#[derive(Debug, Parser)]
#[command(name = "nlosloc", version, about = "Single-base-station NLOS localization toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic ray-traced dataset.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on the training split.
    Train {
        #[arg(value_parser = parse_kind)]
        model: ModelKind,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model_args: ModelArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = parse_ablation)]
        ablate: Option<Ablation>,
    },
    /// Evaluate a checkpoint on one split.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        topk: TopKArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test", value_parser = parse_split)]
        split: Split,
        #[arg(long)]
        out: PathBuf,
    },
    /// Retrain once per input ablation and evaluate each model.
    Ablate {
        #[arg(value_parser = parse_kind)]
        model: ModelKind,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model_args: ModelArgs,
        #[command(flatten)]
        topk: TopKArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Variants to run; defaults to every variant valid for the model.
        #[arg(long = "ablate", value_parser = parse_ablation, value_delimiter = ',')]
        variants: Vec<Ablation>,
        #[arg(long, default_value = "test", value_parser = parse_split)]
        split: Split,
    },
    /// Render figures from a predictions CSV.
    Plot {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    /// key = value configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Extra key=value overrides, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub image_size: Option<usize>,
    #[arg(long)]
    pub sigma_px: Option<f64>,
    #[arg(long)]
    pub dice_weight: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TopKArgs {
    #[arg(long)]
    pub topk_threshold_px: Option<f64>,
    #[arg(long)]
    pub topk_radius_px: Option<f64>,
}

fn parse_kind(s: &str) -> std::result::Result<ModelKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_ablation(s: &str) -> std::result::Result<Ablation, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_split(s: &str) -> std::result::Result<Split, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Exit code for a failed command.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidArgument(_) | Error::InvalidConfig(_) => EXIT_USAGE,
        Error::Divergence { .. } => EXIT_DIVERGED,
        _ => EXIT_DATA,
    }
}

/// Parses `std::env::args` and runs the command; returns the exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.set_pair(&format!("seed={seed}"))?;
    }
    for pair in &common.set {
        cfg.set_pair(pair)?;
    }
    Ok(cfg)
}

fn apply_model_args(cfg: &mut RunConfig, a: &ModelArgs) -> Result<()> {
    if let Some(v) = a.image_size {
        cfg.set_pair(&format!("image_size={v}"))?;
    }
    if let Some(v) = a.sigma_px {
        cfg.set_pair(&format!("sigma_px={v}"))?;
    }
    if let Some(v) = a.dice_weight {
        cfg.set_pair(&format!("dice_weight={v}"))?;
    }
    Ok(())
}

fn apply_topk_args(cfg: &mut RunConfig, a: &TopKArgs) -> Result<()> {
    if let Some(v) = a.topk_threshold_px {
        cfg.set_pair(&format!("topk_threshold_px={v}"))?;
    }
    if let Some(v) = a.topk_radius_px {
        cfg.set_pair(&format!("topk_radius_px={v}"))?;
    }
    Ok(())
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Generate { common, out } => {
            let cfg = load_config(&common)?;
            create_dir(&out)?;
            let summary = generate_dataset(&cfg.dataset()?, &out)?;
            cfg.resolved(None)?.write(&out.join(CONFIG_FILE))?;
            println!(
                "generated {} maps, {} links ({} LOS, {} NLOS, NLOS fraction {:.3}), {} pairs without a path",
                summary.n_maps, summary.n_links, summary.n_los, summary.n_nlos, summary.nlos_fraction, summary.n_dropped
            );
            Ok(())
        }
        Command::Train {
            model,
            common,
            model_args,
            data,
            out,
            ablate,
        } => {
            let mut cfg = load_config(&common)?;
            apply_model_args(&mut cfg, &model_args)?;
            let variant = ablate.unwrap_or(Ablation::Base);
            eval::check_variants(model, &[variant])?;
            let tc = cfg.train(model)?;
            let train_set = load_dataset(&data, Split::Train)?;
            let val_set = load_dataset(&data, Split::Val)?;
            create_dir(&out)?;
            cfg.resolved(Some(model))?.write(&out.join(CONFIG_FILE))?;
            let (trained, history) = train_with(model, &train_set, &val_set, variant.flags(), &tc, |e| {
                let val = e.val_acc10.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
                println!("epoch {:>3}  loss {:.6}  val acc@10m {val}", e.epoch, e.train_loss);
            })?;
            trained.save(&out.join(CHECKPOINT_FILE))?;
            write_history(&out.join(HISTORY_FILE), &history)?;
            println!("kept epoch {}; checkpoint written to {}", history.best_epoch, out.join(CHECKPOINT_FILE).display());
            Ok(())
        }
        Command::Evaluate {
            common,
            topk,
            checkpoint,
            data,
            split,
            out,
        } => {
            let model = TrainedModel::load(&checkpoint)?;
            let mut cfg = load_config(&common)?;
            cfg.set_pair(&format!("image_size={}", model.config.image_size))?;
            apply_topk_args(&mut cfg, &topk)?;
            let opts = cfg.eval_options(model.config.image_size)?;
            let samples = load_dataset(&data, split)?;
            create_dir(&out)?;
            cfg.resolved(Some(model.kind))?.write(&out.join(CONFIG_FILE))?;
            let ev = eval::evaluate(&model, &samples, &opts)?;
            ev.report.write(&out.join(METRICS_FILE))?;
            eval::write_predictions_csv(&out.join(PREDICTIONS_FILE), &ev.rows)?;
            if cfg.plots() {
                write_plots(&out, &ev.rows, &opts)?;
            }
            print_summary(&ev, &opts);
            Ok(())
        }
        Command::Ablate {
            model,
            common,
            model_args,
            topk,
            data,
            out,
            variants,
            split,
        } => {
            let mut cfg = load_config(&common)?;
            apply_model_args(&mut cfg, &model_args)?;
            apply_topk_args(&mut cfg, &topk)?;
            let variants = if variants.is_empty() {
                Ablation::ALL
                    .into_iter()
                    .filter(|v| model.is_heatmap() || *v != Ablation::NoMap)
                    .collect()
            } else {
                variants
            };
            eval::check_variants(model, &variants)?;
            let tc = cfg.train(model)?;
            let opts = cfg.eval_options(tc.image_size)?;
            let train_set = load_dataset(&data, Split::Train)?;
            let val_set = load_dataset(&data, Split::Val)?;
            let test_set = load_dataset(&data, split)?;
            create_dir(&out)?;
            cfg.resolved(Some(model))?.write(&out.join(CONFIG_FILE))?;
            let table = eval::run_ablation(model, &train_set, &val_set, &test_set, &variants, &tc, &opts)?;
            let path = out.join(ABLATION_FILE);
            let json = serde_json::to_string_pretty(&table).map_err(|e| Error::format(&path, e.to_string()))?;
            fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
            let key = acc_key(10.0);
            println!("{:<8} {:>10} {:>10} {:>10}", "variant", "all", "los", "nlos");
            for (name, r) in &table {
                let f = |s: &str| r.get(&format!("{key}_{s}")).map(|v| format!("{:.3}", v)).unwrap_or_else(|| "-".into());
                println!("{name:<8} {:>10} {:>10} {:>10}", f("all"), f("los"), f("nlos"));
            }
            Ok(())
        }
        Command::Plot {
            predictions,
            out,
            common,
        } => {
            let cfg = load_config(&common)?;
            let opts = cfg.eval_options(cfg.train(ModelKind::Unet)?.image_size)?;
            let rows = eval::read_predictions_csv(&predictions)?;
            if rows.is_empty() {
                return Err(Error::format(&predictions, "no prediction rows"));
            }
            create_dir(&out)?;
            cfg.resolved(None)?.write(&out.join(CONFIG_FILE))?;
            write_plots(&out, &rows, &opts)
        }
    }
}

fn write_history(path: &Path, h: &History) -> Result<()> {
    let err = |e: csv::Error| Error::format(path, e.to_string());
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(["epoch", "train_loss", "train_bce", "val_acc10"]).map_err(err)?;
    for e in &h.epochs {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        w.write_record([e.epoch.to_string(), e.train_loss.to_string(), opt(e.train_bce), opt(e.val_acc10)])
            .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Accuracy curve for every subset, plus top-K scatter plots and the
/// uncertainty bar chart when heatmap columns are present.
pub fn write_plots(dir: &Path, rows: &[SampleResult], opts: &EvalOptions) -> Result<()> {
    let mut xs = opts.thresholds.clone();
    xs.sort_by(f64::total_cmp);
    let mut curves = Vec::new();
    for (label, los) in [("all", None), ("LOS", Some(true)), ("NLOS", Some(false))] {
        let sub: Vec<&SampleResult> = rows.iter().filter(|r| los.is_none_or(|l| r.los == l)).collect();
        if sub.is_empty() {
            continue;
        }
        let e: Vec<f64> = sub.iter().map(|r| r.error()).collect();
        curves.push(plot::Curve {
            label: label.into(),
            points: xs
                .iter()
                .map(|&x| (x, e.iter().filter(|&&v| v <= x).count() as f64 / e.len() as f64))
                .collect(),
        });
    }
    plot::accuracy_curve(&dir.join("accuracy_curve.svg"), &curves)?;
    let heatmap = rows.iter().all(|r| r.uncertainty.is_some());
    if heatmap {
        plot::topk_scatter(&dir.join("topk_scatter_mean.svg"), rows, false)?;
        plot::topk_scatter(&dir.join("topk_scatter_argmax.svg"), rows, true)?;
        let ev = Evaluation {
            rows: rows.to_vec(),
            report: Default::default(),
        };
        if let Some(bins) = ev.nlos_bins(opts.n_bins) {
            plot::uncertainty_bars(&dir.join("uncertainty_bins.svg"), &bins)?;
        }
    }
    Ok(())
}

fn print_summary(ev: &Evaluation, opts: &EvalOptions) {
    let r = &ev.report;
    let show = |k: &str| r.get(k).map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into());
    println!("{:<14} {:>10} {:>10} {:>10}", "metric", "all", "los", "nlos");
    println!("{:<14} {:>10} {:>10} {:>10}", "n", show("n_all"), show("n_los"), show("n_nlos"));
    println!("{:<14} {:>10} {:>10} {:>10}", "rmse (m)", show("rmse_all"), show("rmse_los"), show("rmse_nlos"));
    for &x in &opts.thresholds {
        let k = acc_key(x);
        println!(
            "{:<14} {:>10} {:>10} {:>10}",
            k,
            show(&format!("{k}_all")),
            show(&format!("{k}_los")),
            show(&format!("{k}_nlos"))
        );
    }
    if let Some(rho) = r.get("spearman_nlos") {
        println!("spearman(uncertainty, error) on NLOS: {rho:.3}");
    }
}
