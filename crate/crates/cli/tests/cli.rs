use std::path::Path;
use std::process::{Command, Output};

const TINY: &[&str] = &[
    "--displacements.directions=E",
    "--experiment.scnr_db=-10,10",
    "--experiment.train_count=48",
    "--experiment.test_count=24",
    "--experiment.fsl_count=8",
    "--experiment.calibration_count=48",
    "--train.conv_channels=4,4,4",
    "--train.hidden_units=8",
    "--train.epochs=2",
    "--fsl.epochs=2",
];

fn staploc(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_staploc"))
        .arg("--out")
        .arg(out)
        .args(TINY)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn gen_scenario_prints_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = staploc(dir.path(), &["--seed", "5", "gen-scenario"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("seed=5"), "{text}");
    assert!(text.contains("scenario O:"));
    assert!(text.contains("scenario E:"));
    assert!(!text.contains("scenario N:"));
}

#[test]
fn dataset_train_fsl_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let train = d.join("train.hmt");
    let few = d.join("few.hmt");
    let test = d.join("test.hmt");
    let model = d.join("model.ckpt");
    let tuned = d.join("tuned.ckpt");
    let s = |p: &Path| p.to_str().unwrap().to_string();

    let o = staploc(d, &["gen-dataset", "--count", "32", "--scnr-db", "10", "--file", &s(&train)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("wrote 32 tensors"));
    for (tag, count, path) in [("E", "8", &few), ("E", "16", &test)] {
        let o = staploc(d, &["gen-dataset", "--tag", tag, "--count", count, "--scnr-db", "10", "--file", &s(path)]);
        assert!(o.status.success());
    }

    let o = staploc(d, &["train", "--data", &s(&train), "--model", &s(&model)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = staploc(d, &["fsl", "--model", &s(&model), "--data", &s(&few), "--output", &s(&tuned)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("fine-tuned"));

    let o = staploc(d, &["eval", "--model", &s(&tuned), "--data", &s(&test), "--tag", "E"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("scenario E: namf"));
}

#[test]
fn experiment_then_report_rebuild() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = staploc(d, &["run-experiment"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let errors = std::fs::read_to_string(d.join("errors.csv")).unwrap();
    assert_eq!(errors.lines().count(), 1 + 2 * 2);
    assert!(d.join("aed_E.svg").exists());

    std::fs::remove_file(d.join("aed_E.svg")).unwrap();
    std::fs::remove_file(d.join("summary.txt")).unwrap();
    let o = staploc(d, &["report"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(d.join("aed_E.svg").exists());
    assert_eq!(std::fs::read_to_string(d.join("errors.csv")).unwrap(), errors);
    let summary = std::fs::read_to_string(d.join("summary.txt")).unwrap();
    assert!(summary.contains("spearman"));
}

#[test]
fn exit_codes_follow_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let code = |o: Output| o.status.code().unwrap();

    assert_eq!(code(staploc(d, &["no-such-command"])), 2);
    assert_eq!(code(staploc(d, &["--train.bogus=1", "gen-scenario"])), 2);
    assert_eq!(code(staploc(d, &["--experiment.train_count=zero", "gen-scenario"])), 2);

    let missing = d.join("missing.hmt");
    let o = staploc(d, &["train", "--data", missing.to_str().unwrap(), "--model", "m"]);
    assert_eq!(code(o), 4);

    let junk = d.join("junk.hmt");
    std::fs::write(&junk, b"not a dataset at all, just text").unwrap();
    let o = staploc(d, &["train", "--data", junk.to_str().unwrap(), "--model", "m"]);
    assert_eq!(code(o), 4);
    assert!(String::from_utf8_lossy(&staploc(d, &["report"]).stderr).contains("error"));
}
