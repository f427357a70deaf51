use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use skillgen::graph::{ActionNode, DomainGraph};

fn skillgen(args: &[&str], config: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skillgen"))
        .args(args)
        .arg("--config")
        .arg(config)
        .env_remove("SKILLGEN_API_KEY")
        .output()
        .expect("binary runs")
}

fn toy_config_in(dir: &Path, extra: impl FnOnce(&mut serde_json::Value)) -> PathBuf {
    let toy = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/toy.json");
    let mut cfg: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(toy).unwrap()).unwrap();
    cfg["work_dir"] = dir.join("work").to_string_lossy().into();
    extra(&mut cfg);
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn full_pipeline_exits_zero_at_every_stage() {
    let dir = tempfile::tempdir().unwrap();
    let config = toy_config_in(dir.path(), |_| {});
    for stage in ["sample", "build-graph", "credit", "skills", "eval", "report"] {
        let out = skillgen(&[stage], &config);
        assert_eq!(out.status.code(), Some(0), "{stage}: {}", stderr(&out));
        assert!(!out.stdout.is_empty(), "{stage} printed nothing");
    }
    assert!(dir.path().join("work/report.json").is_file());
    let table = String::from_utf8(skillgen(&["report"], &config).stdout).unwrap();
    assert!(table.lines().any(|l| l.starts_with("all")), "{table}");
}

#[test]
fn seed_and_out_flags() {
    let dir = tempfile::tempdir().unwrap();
    let config = toy_config_in(dir.path(), |_| {});
    let out_dir = dir.path().join("elsewhere");
    let out = Command::new(env!("CARGO_BIN_EXE_skillgen"))
        .args(["sample", "--seed", "5", "--out"])
        .arg(&out_dir)
        .arg("--config")
        .arg(&config)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(out_dir.join("trajectories.jsonl").is_file());
    assert!(!dir.path().join("work/trajectories.jsonl").exists());
}

#[test]
fn credit_without_a_path_exits_2_naming_the_domain() {
    let dir = tempfile::tempdir().unwrap();
    let config = toy_config_in(dir.path(), |c| c["folds"]["k"] = 2.into());
    let node = |id, label: &str| ActionNode { id, label: label.into(), is_sentinel: true };
    let dead_end = DomainGraph {
        domain: "keydoor".into(),
        nodes: vec![node(0, "the beginning of the task"), node(1, "the end of the task")],
        edges: vec![],
        start_id: 0,
        end_id: 1,
    };
    for fold in 0..2 {
        let path = dir.path().join(format!("work/fold-{fold}/graph-keydoor.json"));
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, dead_end.to_json()).unwrap();
    }
    let out = skillgen(&["credit"], &config);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("keydoor"), "{}", stderr(&out));
}

#[test]
fn http_eval_without_key_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let config = toy_config_in(dir.path(), |c| {
        c["provider"]["kind"] = "http".into();
        c["provider"]["http"] = serde_json::json!({ "base_url": "http://127.0.0.1:9" });
    });
    let out = skillgen(&["eval"], &config);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("SKILLGEN_API_KEY"), "{}", stderr(&out));
}

#[test]
fn usage_and_config_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let config = toy_config_in(dir.path(), |_| {});
    assert_eq!(skillgen(&["frobnicate"], &config).status.code(), Some(1));
    assert_eq!(skillgen(&["sample"], &dir.path().join("missing.json")).status.code(), Some(1));
    std::fs::write(dir.path().join("bad.json"), r#"{"folds": {"k": 1}}"#).unwrap();
    assert_eq!(skillgen(&["sample"], &dir.path().join("bad.json")).status.code(), Some(1));
}

#[test]
fn missing_inputs_are_invalid_data() {
    let dir = tempfile::tempdir().unwrap();
    let config = toy_config_in(dir.path(), |_| {});
    let out = skillgen(&["skills"], &config);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}
