use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn difflab(args: &[&str]) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_difflab"));
    cmd.args(args).env_remove("DIFFLAB_OUT");
    cmd
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn error_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.trim()).unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {text}"))
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn sample_reproduces_golden_snapshot() {
    let tmp = tempfile::tempdir().unwrap();
    let config = golden("sample_small.toml");
    let out = run(difflab(&["--config", config.to_str().unwrap(), "sample", "--out"]).arg(tmp.path()));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for (produced, expected) in [("sample.json", "sample_small.json"), ("trace.csv", "sample_small_trace.csv")] {
        let got = std::fs::read(tmp.path().join(produced)).unwrap();
        assert!(got == std::fs::read(golden(expected)).unwrap(), "{produced} differs from the snapshot");
    }
}

#[test]
fn outputs_embed_config_and_format_version() {
    let config = golden("sample_small.toml");
    let out = run(&mut difflab(&["--config", config.to_str().unwrap(), "sample"]));
    assert!(out.status.success());
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["format_version"], 1);
    assert_eq!(json["config"]["sampler"]["seed"], 7);
    assert_eq!(json["config"]["schedule"]["family"], "vp_linear");

    let csv = run(&mut difflab(&["--config", config.to_str().unwrap(), "schedule-dump", "--points", "5"]));
    let text = String::from_utf8(csv.stdout).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# difflab format_version=1 config={"));
    assert_eq!(lines.count(), 6);
}

#[test]
fn seed_flag_overrides_config() {
    let config = golden("sample_small.toml");
    let path = config.to_str().unwrap();
    let base = run(&mut difflab(&["--config", path, "sample"])).stdout;
    let same = run(&mut difflab(&["--config", path, "--seed", "7", "sample"])).stdout;
    let other = run(&mut difflab(&["--config", path, "--seed", "8", "sample"])).stdout;
    assert_eq!(base, same);
    assert_ne!(base, other);
}

#[test]
fn missing_field_is_a_schema_error() {
    let tmp = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(golden("sample_small.toml")).unwrap().replace("d = 4", "");
    let config = write_config(tmp.path(), &text);
    let out = run(&mut difflab(&["--config", &config, "sample"]));
    assert_eq!(out.status.code(), Some(2));
    let err = error_json(&out);
    assert_eq!(err["error"]["kind"], "schema");
    assert!(err["error"]["message"].as_str().unwrap().contains("missing field `d`"));
}

#[test]
fn inadmissible_stepsize_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(golden("sample_small.toml"))
        .unwrap()
        .replace("steps = 100", "steps = 20")
        .replace("checkpoints = [50]", "");
    let config = write_config(tmp.path(), &text);
    let out = run(&mut difflab(&["--config", &config, "sample"]));
    assert_eq!(out.status.code(), Some(1));
    let err = error_json(&out);
    assert_eq!(err["error"]["kind"], "admissibility");
    assert!(err["error"]["message"].as_str().unwrap().contains("stepsize condition 1"));

    let check = run(&mut difflab(&["--config", &config, "check-stepsize"]));
    assert!(check.status.success());
    let report: serde_json::Value = serde_json::from_slice(&check.stdout).unwrap();
    assert_eq!(report["admissibility"]["admissible"], false);
}

#[test]
fn environment_overrides_out_flag() {
    let flag_dir = tempfile::tempdir().unwrap();
    let env_dir = tempfile::tempdir().unwrap();
    let out = run(difflab(&["complexity", "--family", "ve_exp", "--eps", "0.1", "--d", "16", "--out"])
        .arg(flag_dir.path())
        .env("DIFFLAB_OUT", env_dir.path()));
    assert!(out.status.success());
    assert!(env_dir.path().join("complexity.csv").exists());
    assert_eq!(std::fs::read_dir(flag_dir.path()).unwrap().count(), 0);
}

#[test]
fn complexity_table_has_documented_columns() {
    let out = run(&mut difflab(&["complexity", "--family", "ve_exp,vp_linear", "--eps", "0.1", "--d", "16"]));
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "family,params,eps,d,T,eta_max,M_max,K_min,order_label");
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("ve_exp,"));
}

#[test]
fn reference_config_is_accepted() {
    let tmp = tempfile::tempdir().unwrap();
    let text = String::from_utf8(run(&mut difflab(&["reference-config"])).stdout).unwrap();
    let config = write_config(tmp.path(), &text);
    let out = run(&mut difflab(&["--config", &config, "check-stepsize"]));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn unknown_family_is_rejected() {
    let out = run(&mut difflab(&["complexity", "--family", "ve_cubic"]));
    assert!(!out.status.success());
}
