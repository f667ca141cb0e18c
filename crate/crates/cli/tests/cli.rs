use std::path::Path;
use std::process::{Command, Output};

fn sim(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sdd-sim")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let idx = lines.next().unwrap().split(',').position(|c| c == name).expect("column present");
    lines.map(|l| l.split(',').nth(idx).unwrap().parse().unwrap()).collect()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn nicholson_run_writes_monotone_time_column() {
    let dir = tempfile::tempdir().unwrap();
    let o = sim(&["run", "--config", "nicholson", "--out", "n.csv"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = String::from_utf8(o.stdout).unwrap();
    for field in ["final_norm=", "wall_time=", "clamp_events=", "corrector_steps="] {
        assert!(summary.contains(field), "{summary}");
    }
    let csv = std::fs::read_to_string(dir.path().join("n.csv")).unwrap();
    let t = column(&csv, "t");
    assert_eq!(t.len(), 5001);
    assert!(t.windows(2).all(|w| w[1] > w[0]));
    assert_eq!(*t.last().unwrap(), 5.0);
}

#[test]
fn zero_birth_norms_strictly_decrease() {
    let dir = tempfile::tempdir().unwrap();
    let o = sim(&["run", "--config", "nicholson", "--set", "b.variant=zero", "--out", "z.csv"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let norms = column(&std::fs::read_to_string(dir.path().join("z.csv")).unwrap(), "norm");
    assert!(norms.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn offset_inside_ignore_zone_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = sim(&["run", "--config", "nicholson", "--set", "delay.r_k=0.2"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("delay.r_k"));
    assert!(!dir.path().join("nicholson.csv").exists());
}

#[test]
fn unknown_and_duplicate_keys_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.cfg"), "d = 0.5\nspectral.wobble = 3\n").unwrap();
    let o = sim(&["run", "--config", "bad.cfg"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("spectral.wobble"));

    std::fs::write(dir.path().join("dup.cfg"), "d = 0.5\nd = 0.7\n").unwrap();
    let o = sim(&["run", "--config", "dup.cfg"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`d`"));

    let o = sim(&["run", "--config", "no_such_thing"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn print_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let first = sim(&["run", "--config", "nicholson", "--print-config"], dir.path());
    assert!(first.status.success());
    std::fs::write(dir.path().join("full.cfg"), &first.stdout).unwrap();
    let second = sim(&["run", "--config", "full.cfg", "--print-config"], dir.path());
    assert!(second.status.success(), "{}", stderr(&second));
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn verify_h_and_oracle_pass() {
    let dir = tempfile::tempdir().unwrap();
    for suite in ["H", "oracle"] {
        let o = sim(&["verify", suite], dir.path());
        let out = String::from_utf8_lossy(&o.stdout);
        assert!(o.status.success(), "{suite}: {out}");
        assert!(out.lines().all(|l| l.starts_with("PASS")), "{out}");
    }
}

#[test]
fn verify_json_is_parseable() {
    let dir = tempfile::tempdir().unwrap();
    let o = sim(&["verify", "H", "--json"], dir.path());
    assert!(o.status.success());
    let out = String::from_utf8(o.stdout).unwrap();
    let json_start = out.find('[').unwrap();
    let v: serde_json::Value = serde_json::from_str(&out[json_start..]).unwrap();
    assert!(v.as_array().unwrap().iter().all(|c| c["pass"] == true));
}

#[test]
fn unknown_suite_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = sim(&["verify", "nonsense"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_writes_one_csv_per_value_and_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    let o = sim(&["--threads", "2", "sweep", "--config", "nicholson", "--param", "p", "--values", "1,2,4", "--out", "sw"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let sw = dir.path().join("sw");
    for v in ["1", "2", "4"] {
        assert!(sw.join(format!("b_p_{v}.csv")).exists());
    }
    let summary = std::fs::read_to_string(sw.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 4);
    assert!(summary.starts_with("b.p,final_norm"));
}

#[test]
fn single_value_sweep_matches_run() {
    let dir = tempfile::tempdir().unwrap();
    let run = sim(&["run", "--config", "nicholson", "--out", "run.csv"], dir.path());
    assert!(run.status.success());
    let sweep = sim(&["sweep", "--config", "nicholson", "--param", "b.p", "--values", "2", "--out", "sw"], dir.path());
    assert!(sweep.status.success(), "{}", stderr(&sweep));
    let a = std::fs::read(dir.path().join("run.csv")).unwrap();
    let b = std::fs::read(dir.path().join("sw").join("b_p_2.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn sweep_over_ignore_window_is_valid() {
    let dir = tempfile::tempdir().unwrap();
    let o = sim(&["sweep", "--config", "nicholson", "--param", "eta_ign", "--values", "0.2,0.4", "--out", "sw"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(dir.path().join("sw/summary.csv")).unwrap().lines().count(), 3);
}

#[test]
fn sweep_rejects_unknown_parameter() {
    let dir = tempfile::tempdir().unwrap();
    let o = sim(&["sweep", "--config", "nicholson", "--param", "gamma", "--values", "1"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("gamma"));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a.csv", "b.csv"] {
        assert!(sim(&["run", "--config", "nicholson", "--out", name], dir.path()).status.success());
    }
    assert_eq!(std::fs::read(dir.path().join("a.csv")).unwrap(), std::fs::read(dir.path().join("b.csv")).unwrap());
}

#[test]
fn presets_are_listed_and_printable() {
    let dir = tempfile::tempdir().unwrap();
    let o = sim(&["presets"], dir.path());
    let list = String::from_utf8(o.stdout).unwrap();
    assert!(list.contains("nicholson"));
    let o = sim(&["presets", "decay"], dir.path());
    assert!(o.status.success());
    assert!(String::from_utf8(o.stdout).unwrap().contains("b.variant"));
}
