use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use kinestat::io::parse_config;
use kinestat::metrics::Report;

const REFERENCE: &str = include_str!("../../../configs/reference.toml");
const INTER: &str = include_str!("../../../configs/inter_imu.toml");

fn kinestat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kinestat")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn short_config(dir: &Path, base: &str, duration: f64) -> PathBuf {
    let mut cfg = parse_config(base).unwrap();
    cfg.trajectory.duration = duration;
    cfg.trajectory.landing_time = None;
    let path = dir.join("short.toml");
    fs::write(&path, cfg.to_toml().unwrap()).unwrap();
    path
}

fn report(out: &Output) -> Report {
    Report::parse(&String::from_utf8_lossy(&out.stdout)).unwrap()
}

#[test]
fn simulate_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path(), REFERENCE, 1.0);
    let (a, b, c) = (dir.path().join("a.csv"), dir.path().join("b.csv"), dir.path().join("c.csv"));
    for (out, seed) in [(&a, "5"), (&b, "5"), (&c, "6")] {
        let o = kinestat(&["simulate", "--config", s(&cfg), "--out", s(out), "--seed", seed]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
    let meta = fs::read_to_string(dir.path().join("a.csv.meta")).unwrap();
    assert_eq!(meta, fs::read_to_string(dir.path().join("b.csv.meta")).unwrap());
    assert!(meta.contains("seed = 5"));
    // The sidecar is itself a usable config.
    parse_config(&meta).unwrap();
}

#[test]
fn reference_config_gives_fifteen_second_log() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ref.csv");
    let cfg = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/reference.toml");
    let o = kinestat(&["simulate", "--config", cfg, "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    let r = report(&o);
    assert_eq!(r.get_f64("duration"), Some(15.0));
    assert_eq!(r.get_f64("samples"), Some(15001.0));
    assert_eq!(r.get_f64("pose_samples"), Some(3001.0));
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    let missing = dir.path().join("missing.toml");
    assert_eq!(kinestat(&["simulate", "--out", s(&out)]).status.code(), Some(1));
    assert_eq!(kinestat(&["simulate", "--config", s(&missing), "--out", s(&out)]).status.code(), Some(1));
    assert_eq!(kinestat(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(kinestat(&["observability", "--mode", "sideways"]).status.code(), Some(1));
    assert_eq!(kinestat(&["--help"]).status.code(), Some(0));

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[sensors]\nsigma_a = -1.0\n").unwrap();
    let o = kinestat(&["simulate", "--config", s(&bad), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sigma_a"));

    fs::write(&bad, "[filter.gyro]\norder = 3\nq = [1.0]\n").unwrap();
    let o = kinestat(&["simulate", "--config", s(&bad), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("filter.gyro.q"));

    fs::write(&bad, "[filter]\nwobble = 1\n").unwrap();
    let o = kinestat(&["simulate", "--config", s(&bad), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("wobble"));
}

#[test]
fn estimate_writes_estimates_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path(), REFERENCE, 4.0);
    let log = dir.path().join("log.csv");
    assert_eq!(kinestat(&["simulate", "--config", s(&cfg), "--out", s(&log)]).status.code(), Some(0));
    for f in ["state", "input"] {
        let out = dir.path().join(format!("{f}.csv"));
        let o = kinestat(&["estimate", s(&log), "--config", s(&cfg), "--formulation", f, "--out", s(&out)]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        let r = report(&o);
        assert_eq!(r.get("formulation"), Some(f));
        assert!(r.get_f64("predict_ms").unwrap() > 0.0);
        assert!(r.get_f64("rmse_p_x").unwrap() < 0.05);
        let saved = fs::read_to_string(dir.path().join(format!("{f}.csv.report.txt"))).unwrap();
        assert_eq!(saved, String::from_utf8_lossy(&o.stdout));
        let csv = fs::read_to_string(&out).unwrap();
        let header = csv.lines().next().unwrap();
        assert!(header.starts_with("t,p_0"));
        assert!(header.contains("sigma_c_0"));
        assert_eq!(csv.lines().count(), 4002);
    }
    // Schema mismatch: a POS-IMU log cannot be calibrated.
    let out = dir.path().join("cal.csv");
    let o = kinestat(&["calibrate-imu", s(&log), "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn compare_filters_needs_truth() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path(), REFERENCE, 5.0);
    let log = dir.path().join("log.csv");
    assert_eq!(kinestat(&["simulate", "--config", s(&cfg), "--out", s(&log)]).status.code(), Some(0));
    let out = dir.path().join("cmp.csv");
    let o = kinestat(&["compare-filters", s(&log), "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&o);
    for m in ["ekf", "lowpass", "zero_phase"] {
        assert!(r.get_f64(&format!("{m}_delay")).is_some());
        assert!(r.get_f64(&format!("{m}_noise_rms")).is_some());
    }

    let text = fs::read_to_string(&log).unwrap();
    let mut lines = text.lines();
    let magic = lines.next().unwrap();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let keep: Vec<usize> = (0..header.len()).filter(|&i| !header[i].starts_with("true_")).collect();
    let mut bare = format!("{magic}\n");
    for line in std::iter::once(header.join(",").as_str()).chain(lines) {
        let cells: Vec<&str> = line.split(',').collect();
        bare.push_str(&keep.iter().map(|&i| cells[i]).collect::<Vec<_>>().join(","));
        bare.push('\n');
    }
    let bare_path = dir.path().join("bare.csv");
    fs::write(&bare_path, bare).unwrap();
    let o = kinestat(&["compare-filters", s(&bare_path), "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("ground-truth"));
}

#[test]
fn observability_modes_report_expected_ranks() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("obs.csv");
    let o = kinestat(&["observability", "--mode", "lemma1", "--trials", "20"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(report(&o).get_f64("observable_pairs"), Some(20.0));

    let o = kinestat(&["observability", "--mode", "input", "--trials", "5", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(report(&o).get_f64("full_rank"), Some(5.0));
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 6);
    assert!(dir.path().join("obs.csv.report.txt").exists());

    let o = kinestat(&["observability", "--mode", "input", "--trials", "0"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn calibrate_reports_extrinsics_and_excitation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path(), INTER, 6.0);
    let log = dir.path().join("shake.csv");
    assert_eq!(kinestat(&["simulate", "--config", s(&cfg), "--out", s(&log)]).status.code(), Some(0));
    let out = dir.path().join("cal.csv");
    let o = kinestat(&["calibrate-imu", s(&log), "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&o);
    assert!(r.get_f64("c_final_x").is_some());
    assert!(r.get_f64("rotvec_final_z").is_some());
    assert_eq!(r.get("excitation_sufficient"), Some("true"));
    assert!(r.get("warning").is_none());
    // The same log through estimate --formulation inter-imu.
    let o2 = kinestat(&["estimate", s(&log), "--config", s(&cfg), "--formulation", "inter-imu", "--out", s(&out)]);
    assert_eq!(o2.status.code(), Some(0));
    assert_eq!(report(&o2).get("c_final_x"), r.get("c_final_x"));

    let mut still = parse_config(&fs::read_to_string(&cfg).unwrap()).unwrap();
    still.trajectory.accel.clear();
    still.trajectory.gyro.clear();
    let still_cfg = dir.path().join("still.toml");
    fs::write(&still_cfg, still.to_toml().unwrap()).unwrap();
    let o = kinestat(&["simulate", "--config", s(&still_cfg), "--out", s(&log)]);
    assert_eq!(o.status.code(), Some(0));
    let o = kinestat(&["calibrate-imu", s(&log), "--config", s(&still_cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    let r = report(&o);
    assert_eq!(r.get("excitation_sufficient"), Some("false"));
    assert!(r.get("warning").unwrap().contains("insufficient excitation"));
}
