use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn silflight(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_silflight")).args(args).output().expect("spawn silflight")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn csv_hash(o: &Output) -> String {
    stdout(o)
        .lines()
        .find_map(|l| l.strip_prefix("csv sha256: "))
        .expect("hash line")
        .to_string()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn bundled_triangle_runs_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = silflight(&["sim", "run", "quad_triangle_roll", "--out", path(dir.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    let rms: f64 = out
        .lines()
        .find_map(|l| l.strip_prefix("roll tracking: rms "))
        .and_then(|l| l.split_whitespace().next())
        .and_then(|v| v.parse().ok())
        .expect("rms line");
    assert!(rms < 2.0, "rms {rms}");
    for ext in ["csv", "events.log", "summary.txt"] {
        assert!(dir.path().join(format!("quad_triangle_roll.{ext}")).exists(), "{ext}");
    }
    let csv = fs::read(dir.path().join("quad_triangle_roll.csv")).unwrap();
    let expected = {
        use sha2::Digest;
        hex::encode(sha2::Sha256::digest(&csv))
    };
    assert_eq!(csv_hash(&o), expected);
}

#[test]
fn same_seed_gives_same_log() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let run = |d: &Path| silflight(&["sim", "run", "quad_step_roll", "--seed", "7", "--out", path(d)]);
    let (ra, rb) = (run(a.path()), run(b.path()));
    assert!(ra.status.success() && rb.status.success());
    assert_eq!(csv_hash(&ra), csv_hash(&rb));
    assert_eq!(
        fs::read(a.path().join("quad_step_roll.csv")).unwrap(),
        fs::read(b.path().join("quad_step_roll.csv")).unwrap()
    );
}

#[test]
fn plot_writes_data_and_script() {
    let dir = tempfile::tempdir().unwrap();
    let o = silflight(&["sim", "run", "quad_step_roll", "--plot", "--out", path(dir.path())]);
    assert!(o.status.success());
    let dat = fs::read_to_string(dir.path().join("quad_step_roll.plot.dat")).unwrap();
    assert!(dat.lines().count() > 1000);
    let gp = fs::read_to_string(dir.path().join("quad_step_roll.gp")).unwrap();
    assert!(gp.contains("quad_step_roll.plot.dat"));
}

#[test]
fn malformed_scenario_fails_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bad.toml");
    fs::write(&file, "name = \"bad\"\nduration = [\n").unwrap();
    let o = silflight(&["sim", "run", path(&file), "--out", path(dir.path())]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

#[test]
fn unknown_scenario_is_an_error() {
    let o = silflight(&["sim", "run", "no_such_scenario"]);
    assert!(!o.status.success());
}

fn residuals(out: &str) -> Vec<f64> {
    let line = out.lines().find(|l| l.starts_with("residuals:")).expect("residual line");
    line.split_whitespace().filter_map(|w| w.parse().ok()).collect()
}

#[test]
fn mixer_check_quadrotor_is_full_rank() {
    let o = silflight(&["mixer", "check", "quadrotor_x"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("rank 4 "), "{out}");
    let r = residuals(&out);
    assert_eq!(r.len(), 4);
    assert!(r.iter().all(|v| *v < 1e-9), "{r:?}");
    assert!(!out.contains("rank deficient"));
}

#[test]
fn mixer_check_flags_zero_custom_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("zero.params");
    fs::write(&file, "PRIMARY_MIXER 10\n").unwrap();
    let o = silflight(&["mixer", "check", path(&file)]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("rank 0 "), "{out}");
    assert!(out.contains("warning: rank deficient"));
}

#[test]
fn mixer_check_prints_vtail_entries() {
    let o = silflight(&["mixer", "check", "fixedwing_vtail"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let inverse: Vec<Vec<f64>> = out
        .lines()
        .skip_while(|l| !l.starts_with("M†"))
        .skip(1)
        .take(10)
        .map(|l| l.split_whitespace().map(|v| v.parse().unwrap()).collect())
        .collect();
    let expected = [
        [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [0.0, -0.5, 0.5, 0.0, 0.0, 0.0],
        [0.0, 0.5, 0.5, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 1.0, 0.0, 0.0],
    ];
    for (c, row) in inverse.iter().enumerate() {
        let want = expected.get(c).copied().unwrap_or([0.0; 6]);
        assert_eq!(row.as_slice(), want.as_slice(), "channel {c}");
    }
    assert!(out.contains("Servo"));
}

#[test]
fn param_set_get_load_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("vehicle.params");
    let f = path(&file);
    assert!(silflight(&["param", "set", f, "CTRL_I_MAX", "0.3"]).status.success());
    assert!(silflight(&["param", "set", f, "PRIMARY_MIXER", "hexarotor_x"]).status.success());
    let got = silflight(&["param", "get", f, "CTRL_I_MAX"]);
    assert_eq!(stdout(&got).trim(), "0.3");
    let load = silflight(&["param", "load", f]);
    assert!(load.status.success());
    assert!(stdout(&load).contains("2 parameters set"));
    assert!(stdout(&load).contains("hexarotor_x"));
    let dump = stdout(&silflight(&["param", "dump", f]));
    assert!(dump.lines().any(|l| l == "CTRL_I_MAX 0.3"));
}

#[test]
fn param_errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bad.params");
    fs::write(&file, "CTRL_I_MAX 0.1\nNOT_A_PARAM 1\n").unwrap();
    let o = silflight(&["param", "load", path(&file)]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
    let o = silflight(&["param", "set", path(&dir.path().join("x.params")), "CTRL_I_MAX", "abc"]);
    assert!(!o.status.success());
}

#[test]
fn max_rate_benchmark_beats_requirement() {
    let o = silflight(&["benchmark", "rtt", "--max-rate", "--duration", "1"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let hz: f64 = out
        .lines()
        .skip_while(|l| !l.contains("received (Hz)"))
        .nth(1)
        .and_then(|l| l.split_whitespace().last())
        .and_then(|v| v.parse().ok())
        .expect("table row");
    assert!(hz > 1100.0, "{hz}");
    assert!(out.contains("payload integrity 100.0%"));
}
