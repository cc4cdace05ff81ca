use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;

use gamechat::output::read_trajectory;

fn gamechat() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_gamechat"));
    cmd.env_remove("RUST_LOG");
    cmd
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let key = path.strip_prefix(dir).unwrap().display().to_string();
                out.insert(key, fs::read(&path).unwrap());
            }
        }
    }
    out
}

#[test]
fn suite_run_prints_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = gamechat()
        .args(["--scenario", "doorway", "--method", "gamechat-no-llm", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("GameChat (no LLM)"));
    assert!(stdout.contains("wrote 18 runs"));
    let records = fs::read_to_string(dir.path().join("records.jsonl")).unwrap();
    assert_eq!(records.lines().count(), 18);
    let csv = fs::File::open(dir.path().join("runs/doorway-v00-gamechat-no-llm/trajectory.csv")).unwrap();
    let rows = read_trajectory(csv).unwrap();
    assert!(rows.iter().all(|r| r.run_id == "doorway-v00-gamechat-no-llm"));
    assert!(rows.iter().any(|r| r.role == "follower"));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    let out_dir = dir.path().join("out");
    fs::write(
        &cfg,
        format!(
            r#"{{"scenario": "doorway", "variant": 3, "method": "mpc-cbf", "backend": "rule", "seed": 0,
                "dt": 0.2, "t_max": 15.0, "latency": 1.0, "output_dir": {:?}}}"#,
            out_dir.display().to_string()
        ),
    )
    .unwrap();
    let status = gamechat()
        .arg("--config")
        .arg(&cfg)
        .args(["--scenario", "intersection", "--method", "smg-cbf"])
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out_dir.join("runs/intersection-v03-smg-cbf/trajectory.csv").is_file());
    let written: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("config.json")).unwrap()).unwrap();
    assert_eq!(written["method"], "smg-cbf");
    assert_eq!(written["variant"], 3);
}

#[test]
fn bad_input_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = gamechat().args(["--method", "orca"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"dt": -1}"#).unwrap();
    let out = gamechat().arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dt must be positive"));

    fs::write(&cfg, r#"{"speed": 1}"#).unwrap();
    let out = gamechat().arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn llm_backend_requires_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = gamechat()
        .args([
            "--backend",
            "llm",
            "--method",
            "gamechat-pre-smg",
            "--variant",
            "0",
            "--out",
        ])
        .arg(dir.path())
        .env_remove("LLM_BASE_URL")
        .env_remove("LLM_MODEL")
        .env_remove("LLM_API_KEY")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("LLM_BASE_URL"));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let status = gamechat()
            .args(["--scenario", "intersection", "--method", "all", "--seed", "7", "--out"])
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        snapshot(&out)
    };
    let a = run("a");
    let b = run("b");
    // trajectory + record per run, transcripts for the three negotiated methods
    assert_eq!(a.len(), 7 * 18 * 2 + 3 * 18 + 4);
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    for (k, v) in &a {
        if k == "config.json" {
            continue;
        }
        assert!(v == &b[k], "{k} differs");
    }
}
