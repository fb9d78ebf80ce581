use std::path::Path;
use std::process::Command;

fn sinkbridge() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sinkbridge"))
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

const SWEEP: &str = r#"
experiment = "dim-sweep"
seed = 1
epsilon = 0.5
trials = 1
reference_size = 120
[dims]
d = 6
intrinsic = INTRINSIC
[grid]
m = [40]
n = [40]
[integration]
time_samples = 20
probes_per_time = 4
"#;

#[test]
fn dry_run_prints_the_grid_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", &SWEEP.replace("INTRINSIC", "[2, 4]"));
    let out_dir = dir.path().join("out");
    let out = sinkbridge().args(["dim-sweep", "--config"]).arg(&cfg).arg("--out").arg(&out_dir).arg("--dry-run").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("d_nu: [2, 4]"), "{text}");
    assert!(!out_dir.exists());
}

#[test]
fn run_writes_declared_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", &SWEEP.replace("INTRINSIC", "[1, 5]"));
    let out_dir = dir.path().join("out");
    let out = sinkbridge()
        .args(["dim-sweep", "--seed", "4", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .env("SINKBRIDGE_THREADS", "2")
        .output()
        .unwrap();
    assert!(matches!(out.status.code(), Some(0) | Some(3)), "{out:?}");
    for f in ["results.csv", "summary.csv", "run.toml", "sweep.svg"] {
        assert!(out_dir.join(f).exists(), "missing {f}");
    }
    let csv = std::fs::read_to_string(out_dir.join("results.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().contains(",dim-sweep,4,"));
}

#[test]
fn failed_check_exits_3() {
    // decreasing intrinsic dimensions cannot pass the increasing-trend check
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", &SWEEP.replace("INTRINSIC", "[5, 1]"));
    let out = sinkbridge().args(["dim-sweep", "--config"]).arg(&cfg).arg("--out").arg(dir.path().join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(3), "{out:?}");
}

#[test]
fn configuration_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let good = write(dir.path(), "c.toml", &SWEEP.replace("INTRINSIC", "[2, 4]"));
    let missing = sinkbridge().args(["dim-sweep", "--config"]).arg(dir.path().join("nope.toml")).output().unwrap();
    assert_eq!(missing.status.code(), Some(1));
    let mismatch = sinkbridge().args(["mse-sample", "--config"]).arg(&good).output().unwrap();
    assert_eq!(mismatch.status.code(), Some(1));
    let unknown = write(dir.path(), "u.toml", &SWEEP.replace("INTRINSIC", "[2]").replace("trials = 1", "trials = 1\nbogus = 2"));
    let out = sinkbridge().args(["dim-sweep", "--config"]).arg(&unknown).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let tau = write(dir.path(), "t.toml", &SWEEP.replace("INTRINSIC", "[2]").replace("n = [40]", "n = [40]\ntau = [1.0]"));
    let out = sinkbridge().args(["dim-sweep", "--config"]).arg(&tau).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let threads = sinkbridge().args(["dim-sweep", "--config"]).arg(&good).env("SINKBRIDGE_THREADS", "0").output().unwrap();
    assert_eq!(threads.status.code(), Some(1));
}
