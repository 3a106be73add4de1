use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn emotive(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_emotive"))
        .args(args)
        .current_dir(cwd)
        .env_remove("EMOTIVE_DATA_DIR")
        .env_remove("EMOTIVE_PORT")
        .output()
        .unwrap()
}

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn usage_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(emotive(&[], tmp.path()).status.code(), Some(2));
    assert_eq!(emotive(&["experiment", "frobnicate"], tmp.path()).status.code(), Some(2));
    assert_eq!(emotive(&["session", "new", "--K", "many"], tmp.path()).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = emotive(&["experiment", "run", "no-such-config.json"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    assert_eq!(emotive(&["vad", "the of and"], tmp.path()).status.code(), Some(1));
    assert_eq!(emotive(&["session", "status", "0123456789abcdef"], tmp.path()).status.code(), Some(1));
    std::fs::write(tmp.path().join("bad.json"), r#"{"id":"x","method":"ours","N":1,"K":1,"B":1,"M":1,"seeds":[0]}"#).unwrap();
    assert_eq!(emotive(&["experiment", "run", "bad.json"], tmp.path()).status.code(), Some(1));
}

#[test]
fn vad_prints_the_lexicon_value() {
    let tmp = tempfile::tempdir().unwrap();
    let out = emotive(&["vad", "joy"], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let first: Vec<f64> = text.lines().next().unwrap().split_whitespace().map(|x| x.parse().unwrap()).collect();
    assert_eq!(first.len(), 3);
    assert!(first[0] > 0.8, "{text}");
    assert!(text.contains("matched: joy"));
}

#[test]
fn session_new_writes_a_resumable_session() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let d = data.to_str().unwrap();
    let out = emotive(&["session", "new", "--K", "1", "--B", "3", "--N", "2", "--M", "1", "--data-dir", d], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["status"], "awaiting_labels");
    let id = v["session_id"].as_str().unwrap();
    let st = emotive(&["session", "status", id, "--data-dir", d], tmp.path());
    assert_eq!(st.status.code(), Some(0));
    let s: serde_json::Value = serde_json::from_slice(&st.stdout).unwrap();
    assert_eq!(s["round"], 1);
    let file = tmp.path().join("export.json");
    let ex = emotive(&["session", "export", id, "--out", file.to_str().unwrap(), "--data-dir", d], tmp.path());
    assert_eq!(ex.status.code(), Some(0));
    let exported: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(file).unwrap()).unwrap();
    assert_eq!(exported["rounds"][0]["state"]["queries"].as_array().unwrap().len(), 3);
}

#[test]
fn experiment_run_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("smoke.json");
    let mut csvs = Vec::new();
    for run in ["a", "b"] {
        let out = emotive(&["experiment", "run", cfg.to_str().unwrap(), "--results-dir", run], tmp.path());
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let dir = tmp.path().join(run).join("smoke");
        for f in ["metrics.csv", "per_emotion.csv", "summary.csv", "fig4.svg", "fig5.svg"] {
            assert!(dir.join(f).is_file(), "missing {f}");
        }
        csvs.push(std::fs::read(dir.join("metrics.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
    let text = String::from_utf8(csvs.pop().unwrap()).unwrap();
    // 3 methods x 2 seeds x 3 evaluation points
    assert_eq!(text.lines().count(), 1 + 18);
    let plot = emotive(&["experiment", "plot", "smoke", "--results-dir", "a"], tmp.path());
    assert_eq!(plot.status.code(), Some(0));
}

#[test]
fn render_writes_frames() {
    let tmp = tempfile::tempdir().unwrap();
    let traj = r#"{"waypoints":[{"x":0,"y":0.5,"phi":0,"vx":0,"vy":0,"vphi":0},{"x":1,"y":0.5,"phi":0,"vx":0,"vy":0,"vphi":0}],"dts":[1.0]}"#;
    std::fs::write(tmp.path().join("t.json"), traj).unwrap();
    let out = emotive(&["render", "t.json", "--out", "f.json"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("f.json")).unwrap()).unwrap();
    assert_eq!(v["frames"].as_array().unwrap().len(), 31);
}
