use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"
seed = 3
output_dir = "out"

[collections]
levels = ["8K"]
per_level = 3

[generation]
templates_per_collection = 4
test_fraction = 0.5

[converter]
kind = "echo"

[evaluation]
samples = 1

[[evaluation.models]]
name = "gold-echo"
kind = "gold_echo"
"#;

fn lcqa(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lcqa")).current_dir(dir).env("RUST_LOG", "warn").args(args).output().unwrap()
}

#[test]
fn run_export_and_plot_data() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("lcqa.toml"), CONFIG).unwrap();

    let out = lcqa(tmp.path(), &["check"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let out = lcqa(tmp.path(), &["run"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let o = tmp.path().join("out");
    assert!(o.join("eval/summary.csv").exists());
    assert!(o.join("reports/dataset_stats.csv").exists());

    let dest = tmp.path().join("train.jsonl");
    let out = lcqa(tmp.path(), &["export", "--split", "train", "--out", dest.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dest.exists());

    let plot = tmp.path().join("plot.json");
    let out = lcqa(tmp.path(), &["plot-data", "--out", plot.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(plot).unwrap()).unwrap();
    assert!(v.is_object());
}

#[test]
fn errors_exit_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("lcqa.toml"), CONFIG).unwrap();
    let out = lcqa(tmp.path(), &["validate"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("run `lcqa"));

    std::fs::write(tmp.path().join("bad.toml"), "output_dir = \"x\"").unwrap();
    let out = lcqa(tmp.path(), &["-c", "bad.toml", "check"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));

    let out = lcqa(tmp.path(), &["evaluate", "--model", "nope"]);
    assert!(!out.status.success());
}
