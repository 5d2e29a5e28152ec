use std::path::Path;
use std::process::{Command, Output};

fn nlosloc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlosloc")).args(args).output().unwrap()
}

fn ok(args: &[&str]) {
    let out = nlosloc(args);
    assert!(out.status.success(), "{args:?}\n{}", String::from_utf8_lossy(&out.stderr));
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: &[&str] = &["--set", "n_maps=8", "--set", "epochs=3", "--set", "plots=false"];

fn with(base: &[&str], extra: &[&str]) -> Vec<String> {
    base.iter().chain(extra).map(|a| a.to_string()).collect()
}

fn run(args: Vec<String>) {
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    ok(&refs);
}

#[test]
fn generate_train_evaluate_round_trip_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    run(with(&["generate", "--out", s(&data), "--seed", "3"], SMALL));
    assert!(data.join("splits.json").exists());

    let mut metrics = Vec::new();
    for run_name in ["a", "b"] {
        let model = dir.path().join(format!("mlp_{run_name}"));
        let eval = dir.path().join(format!("eval_{run_name}"));
        run(with(&["train", "mlp", "--data", s(&data), "--out", s(&model), "--seed", "3"], SMALL));
        for f in ["checkpoint.json", "history.csv", "config.txt"] {
            assert!(model.join(f).exists(), "missing {f}");
        }
        run(with(
            &["evaluate", "--checkpoint", s(&model.join("checkpoint.json")), "--data", s(&data), "--split", "val", "--out", s(&eval)],
            SMALL,
        ));
        assert!(eval.join("predictions.csv").exists());
        metrics.push(std::fs::read(eval.join("metrics.json")).unwrap());
    }
    assert_eq!(metrics[0], metrics[1]);
    let text = String::from_utf8(metrics[0].clone()).unwrap();
    assert!(text.contains("\"acc@10m_all\""), "{text}");
}

#[test]
fn plot_command_renders_figures_from_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let model = dir.path().join("m");
    let eval = dir.path().join("e");
    let figs = dir.path().join("figs");
    run(with(&["generate", "--out", s(&data)], SMALL));
    run(with(&["train", "pathcnn", "--data", s(&data), "--out", s(&model)], SMALL));
    run(with(&["evaluate", "--checkpoint", s(&model.join("checkpoint.json")), "--data", s(&data), "--out", s(&eval)], SMALL));
    ok(&["plot", "--predictions", s(&eval.join("predictions.csv")), "--out", s(&figs)]);
    assert!(figs.join("accuracy_curve.svg").exists());
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = s(dir.path());
    let cases: Vec<Vec<&str>> = vec![
        vec!["generate"],
        vec!["evaluate", "--checkpoint", "c.json", "--data", d, "--out", d, "--split", "holdout"],
        vec!["train", "mlp", "--data", d, "--out", d, "--ablate", "no_map"],
        vec!["train", "resnet", "--data", d, "--out", d],
        vec!["generate", "--out", d, "--set", "n_mapz=3"],
        vec!["generate", "--out", d, "--set", "split_train=0.95"],
    ];
    for args in cases {
        let out = nlosloc(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn missing_data_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = nlosloc(&["train", "mlp", "--data", s(&dir.path().join("absent")), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(3));
}
