use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use fracture_qs::config::RunConfig;
use fracture_qs::evolution::Evolution;
use fracture_qs::io;

const BAR: &str = r#"
[w]
form = "quadratic"

[mesh]
kind = "bar"
h = 0.1

[load]
profile = [0.0, 1.0, 0.0]
horizon = 2.0
dt = 0.05

[solver]
budget = 50
"#;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_fracture-qs"));
    c.env_remove("FRACTURE_QS_THREADS");
    c
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("run.toml");
    fs::write(&p, text).unwrap();
    p
}

fn run(cfg: &Path, out: &Path) -> Output {
    bin()
        .args(["run", "--config"])
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

#[test]
fn oracle_bar_reports_crack_time() {
    let o = bin()
        .args(["oracle", "bar", "--L", "1", "--kappa", "1", "--rate", "1", "--T", "2"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("# crack_time = 1\n"), "{text}");
    assert!(text.contains("t,bulk,surface_c,total"));
}

#[test]
fn usage_errors_exit_1() {
    let o = bin().args(["run", "--config"]).output().unwrap();
    assert_eq!(code(&o), 1);
    let o = bin().args(["frobnicate"]).output().unwrap();
    assert_eq!(code(&o), 1);

    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{BAR}\nwarp = 9\n"));
    let o = run(&cfg, &dir.path().join("out"));
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("solver.warp"));

    let cfg = write_config(
        dir.path(),
        &BAR.replace("form = \"quadratic\"", "form = \"p-power\"\np = 0.5"),
    );
    let o = run(&cfg, &dir.path().join("out"));
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("w.p"));
}

#[test]
fn help_exits_0() {
    assert_eq!(code(&bin().arg("--help").output().unwrap()), 0);
}

#[test]
fn missing_files_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&dir.path().join("absent.toml"), &dir.path().join("out"));
    assert_eq!(code(&o), 4);
}

#[test]
fn run_writes_outputs_and_verifies() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), BAR);
    let out = dir.path().join("out");
    let o = run(&cfg, &out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("crack grows at t = 1.05"));
    for f in ["ledger.csv", "trajectory.jsonl", "checkpoint.json", "final.vtk"] {
        assert!(out.join(f).exists(), "{f}");
    }
    assert!(!out.join(".lock").exists());
    let ledger = fs::read_to_string(out.join("ledger.csv")).unwrap();
    assert!(ledger.starts_with("t,bulk,surface_c,total,theta,work_cum\n"));

    let verify = |traj: &Path| {
        bin()
            .arg("verify")
            .arg("--traj")
            .arg(traj)
            .arg("--ledger")
            .arg(out.join("ledger.csv"))
            .arg("--config")
            .arg(&cfg)
            .output()
            .unwrap()
    };
    let o = verify(&out.join("trajectory.jsonl"));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));

    // Heal the crack on the final knot.
    let text = fs::read_to_string(out.join("trajectory.jsonl")).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let last = lines.len() - 1;
    let mut knot: serde_json::Value = serde_json::from_str(&lines[last]).unwrap();
    knot["broken"] = serde_json::json!([]);
    lines[last] = knot.to_string();
    let tampered = dir.path().join("tampered.jsonl");
    fs::write(&tampered, lines.join("\n")).unwrap();
    let o = verify(&tampered);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL irreversibility"));
}

#[test]
fn locked_output_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), BAR);
    let out = dir.path().join("out");
    fs::create_dir_all(&out).unwrap();
    fs::write(out.join(".lock"), "1").unwrap();
    let o = run(&cfg, &out);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("locked"));
}

#[test]
fn nonconvergence_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let text = BAR.replace("budget = 50", "backend = \"altmin\"\nmax_iterations = 1");
    let cfg = write_config(dir.path(), &text);
    let o = run(&cfg, &dir.path().join("out"));
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn resume_reproduces_the_straight_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), BAR);
    let straight = dir.path().join("a");
    assert_eq!(code(&run(&cfg_path, &straight)), 0);

    let cfg = RunConfig::parse(BAR).unwrap();
    let problem = cfg.problem().unwrap();
    let mut ev = Evolution::new(&problem, cfg.grid(0).unwrap()).unwrap();
    for _ in 0..13 {
        ev.step().unwrap();
    }
    let cp = dir.path().join("partial.json");
    io::write_checkpoint(&cp, &ev.checkpoint()).unwrap();

    let resumed = dir.path().join("b");
    let o = bin()
        .args(["run", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(&resumed)
        .arg("--resume")
        .arg(&cp)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["ledger.csv", "trajectory.jsonl"] {
        assert_eq!(
            fs::read(straight.join(f)).unwrap(),
            fs::read(resumed.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn bad_checkpoint_version_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), BAR);
    let cp = dir.path().join("cp.json");
    fs::write(&cp, r#"{"format_version": 99}"#).unwrap();
    let o = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .arg("--resume")
        .arg(&cp)
        .output()
        .unwrap();
    assert_eq!(code(&o), 4);
}

#[test]
fn sweep_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &BAR.replace("dt = 0.05", "dt = 0.1"));
    let out = dir.path().join("sweep");
    let o = bin()
        .env("FRACTURE_QS_THREADS", "2")
        .args(["sweep", "--config"])
        .arg(&cfg)
        .args(["--levels", "3", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let study = fs::read_to_string(out.join("study.csv")).unwrap();
    assert!(study.starts_with("level,dt,probe_time,bulk,surface_c,total,residual\n"));
    assert_eq!(study.lines().count(), 1 + 3 * 21);
    let rates = fs::read_to_string(out.join("rates.csv")).unwrap();
    assert_eq!(rates.lines().count(), 4);
}

#[test]
fn invalid_thread_cap_is_a_usage_error() {
    let o = bin()
        .env("FRACTURE_QS_THREADS", "zero")
        .args(["oracle", "bar", "--L", "1", "--kappa", "1", "--rate", "1", "--T", "2"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
}
