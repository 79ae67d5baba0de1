use std::path::Path;
use std::process::{Command, Output};

fn uikf(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uikf"))
        .args(args)
        .env("UIKF_OUT", out)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SQUARE: &str = r#"
schema = 1
[system]
dt = 0.01
A = [[0.0, 1.0], [0.0, 0.0]]
B = [[0.0], [0.0]]
E = [[1.0, 0.0], [0.0, 1.0]]
C = [[1.0, 0.0], [0.0, 1.0]]
Q = [[1e-4, 0.0], [0.0, 1e-4]]
R = [[1e-4, 0.0], [0.0, 1e-4]]

[scenario]
name = "square"
duration = 2.0
seeds = [1, 2]
x0_hat = [3.0, -3.0]
estimators = ["r4skf", "onestep", "uio"]

[[scenario.inputs]]
kind = "step"
t_on = 0.5
t_off = 1.5
amplitude = 0.5

[[scenario.inputs]]
kind = "windowed_sine"
t_on = 0.2
t_off = 1.8
amplitude = 0.4
f0 = 1.0

[observer]
gain = "pinv"
"#;

#[test]
fn reproduce_is_byte_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        let o = uikf(&["reproduce", "--case", "1", "--seeds", "7"], dir);
        assert!(o.status.success(), "{}", stderr(&o));
        let stdout = String::from_utf8_lossy(&o.stdout);
        assert!(stdout.contains("R4SKF") && stdout.contains("A2KF"), "{stdout}");
    }
    for name in ["case1_r4skf.csv", "case1_a2kf.csv", "case1_summary.csv"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{name} differs between runs");
    }
}

#[test]
fn out_flag_overrides_env() {
    let env_dir = tempfile::tempdir().unwrap();
    let flag_dir = tempfile::tempdir().unwrap();
    let o = uikf(
        &[
            "reproduce",
            "--case",
            "2",
            "--seeds",
            "0",
            "--duration",
            "1",
            "--out",
            flag_dir.path().to_str().unwrap(),
        ],
        env_dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(flag_dir.path().join("case2_summary.csv").exists());
    assert!(!env_dir.path().join("case2_summary.csv").exists());
}

#[test]
fn rank_violating_config_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(
        &cfg,
        r#"
schema = 1
[system]
A = [[0.0, 1.0], [0.0, 0.0]]
E = [[1.0, 0.0], [0.0, 1.0]]
C = [[1.0, 0.0]]
Q = [[1e-4, 0.0], [0.0, 1e-4]]
R = [[1e-4]]
[scenario]
duration = 1.0
seeds = [0]
estimators = ["r4skf"]
"#,
    )
    .unwrap();
    let o = uikf(&["simulate", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("rank condition"), "{}", stderr(&o));
}

#[test]
fn unknown_field_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("typo.toml");
    std::fs::write(&cfg, SQUARE.replace("duration = 2.0", "duraton = 2.0")).unwrap();
    let o = uikf(&["simulate", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("duraton"), "{}", stderr(&o));
}

#[test]
fn square_config_filters_agree() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("square.toml");
    std::fs::write(&cfg, SQUARE).unwrap();
    let o = uikf(&["simulate", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));

    let read = |name: &str| -> Vec<Vec<f64>> {
        let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
        text.lines()
            .skip(1)
            .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
            .collect()
    };
    let r4 = read("square_r4skf.csv");
    let one = read("square_onestep.csv");
    let uio = read("square_uio.csv");
    assert_eq!(r4.len(), 200);
    // columns: t, x_true(2), x_hat(2), d_true(2), d_hat(2)
    for ((a, b), c) in r4.iter().zip(&one).zip(&uio) {
        for col in 3..5 {
            assert!((a[col] - b[col]).abs() <= 1e-9, "{a:?} vs {b:?}");
            assert!((c[col] - b[col]).abs() <= 1e-9, "{c:?} vs {b:?}");
        }
    }
    assert!(dir.path().join("square_summary.csv").exists());
}

#[test]
fn check_suites_pass() {
    let dir = tempfile::tempdir().unwrap();
    let o = uikf(&["check", "properties"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(!stdout.contains("[FAIL]"));

    let cfg = dir.path().join("square.toml");
    std::fs::write(&cfg, SQUARE).unwrap();
    let o = uikf(&["check", "stability", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("benchmark") && stdout.contains("square"), "{stdout}");
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(uikf(&["reproduce", "--case", "4"], dir.path()).status.code(), Some(1));
    assert_eq!(uikf(&["frobnicate"], dir.path()).status.code(), Some(1));
    assert_eq!(
        uikf(&["reproduce", "--case", "1", "--dt", "-1"], dir.path()).status.code(),
        Some(1)
    );
    assert_eq!(uikf(&["--help"], dir.path()).status.code(), Some(0));
    let missing = dir.path().join("nope.toml");
    assert_eq!(
        uikf(&["simulate", "--config", missing.to_str().unwrap()], dir.path()).status.code(),
        Some(1)
    );
}

#[test]
fn unwritable_output_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let out = blocker.join("sub");
    let o = uikf(
        &["reproduce", "--case", "1", "--seeds", "0", "--duration", "0.5", "--out", out.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}
