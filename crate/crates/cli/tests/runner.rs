use kinestat::io::{parse_config, Config};
use kinestat::sim::{simulate, LogKind, SensorLog};
use kinestat::Error;
use kinestat_cli::runner::{
    compare_filters, excitation_check, noiseless_copy, run_inter_imu, run_pos_imu, Formulation,
};
use nalgebra::Vector3;

const REFERENCE: &str = include_str!("../../../configs/reference.toml");
const INTER: &str = include_str!("../../../configs/inter_imu.toml");

fn reference(duration: f64) -> (Config, SensorLog) {
    let mut cfg = parse_config(REFERENCE).unwrap();
    cfg.trajectory.duration = duration;
    cfg.trajectory.landing_time = None;
    let log = simulate(&cfg.trajectory, &cfg.sensors).unwrap();
    (cfg, log)
}

fn noiseless_inter(duration: f64) -> Config {
    let mut cfg = parse_config(INTER).unwrap();
    cfg.trajectory.duration = duration;
    cfg.sensors.sigma_a = 0.0;
    cfg.sensors.sigma_w = 0.0;
    cfg.sensors.q_ba = 0.0;
    cfg.sensors.q_bw = 0.0;
    let second = cfg.sensors.second_imu.as_mut().unwrap();
    second.sigma_a = 0.0;
    second.q_ba = 0.0;
    cfg
}

#[test]
fn truth_seeded_noiseless_calibration_has_vanishing_residuals() {
    let cfg = noiseless_inter(2.0);
    let log = simulate(&cfg.trajectory, &cfg.sensors).unwrap();
    let run = run_inter_imu(&log, &cfg, true).unwrap();
    assert!(run.failure.is_none());
    assert!(run.innovation[0] < 1e-12);
    // What remains is the integrator-chain approximation of the sinusoids.
    let worst = run.innovation.iter().cloned().fold(0.0, f64::max);
    assert!(worst < 1e-4, "{worst}");
}

#[test]
fn both_formulations_recover_lever_arm() {
    let (cfg, log) = reference(8.0);
    for f in [Formulation::State, Formulation::Input] {
        let run = run_pos_imu(&log, &cfg, f).unwrap();
        assert!(run.failure.is_none());
        assert_eq!(run.t.len(), log.len());
        assert_eq!(run.rows[0].len(), run.header.len());
        let err = (run.c.last().unwrap() - Vector3::new(0.5, 0.5, 0.5)).amax();
        assert!(err < 0.01, "{f:?}: {err}");
        assert!(run.timing.predict > 0.0 && run.timing.update > 0.0);
    }
}

#[test]
fn inter_imu_formulation_is_not_a_pos_imu_run() {
    let (cfg, log) = reference(0.5);
    assert!(matches!(run_pos_imu(&log, &cfg, Formulation::InterImu), Err(Error::InvalidInput(_))));
    let err = run_inter_imu(&log, &cfg, false).unwrap_err();
    assert!(err.is_usage(), "{err}");
}

#[test]
fn non_finite_reading_stops_with_partial_output() {
    let (cfg, mut log) = reference(1.0);
    log.accel[300] = Vector3::new(f64::NAN, 0.0, 0.0);
    let run = run_pos_imu(&log, &cfg, Formulation::State).unwrap();
    assert!(run.failure.is_some());
    assert_eq!(run.t.len(), 300);
    assert!(run.rows.iter().flatten().all(|v| v.is_finite()));
}

#[test]
fn noiseless_copy_matches_truth() {
    let (cfg, log) = reference(1.0);
    let clean = noiseless_copy(&log, &cfg).unwrap();
    let tr = log.truth.as_ref().unwrap();
    for k in (0..log.len()).step_by(97) {
        assert!((clean.gyro[k] - tr.w[k] - tr.bw[k]).amax() < 1e-15);
        assert!((clean.accel[k] - tr.a[k] - tr.ba[k]).amax() < 1e-15);
        assert_eq!(clean.pose[k].is_some(), log.pose[k].is_some());
    }
    let mut bare = log.clone();
    bare.truth = None;
    assert!(noiseless_copy(&bare, &cfg).is_err());
    assert!(compare_filters(&bare, &cfg).is_err());
}

#[test]
fn filter_comparison_orders_delays() {
    let (cfg, log) = reference(8.0);
    let cmp = compare_filters(&log, &cfg).unwrap();
    assert!(cmp.delay[1] > 4.0 * cmp.delay[0].abs(), "{:?}", cmp.delay);
    assert!(cmp.delay[2].abs() < cmp.dt);
    assert_eq!(cmp.series.len(), log.len());
    assert!((cmp.k_zero_phase - cmp.k / 2.0).abs() < 1e-15);
}

#[test]
fn excitation_check_flags_static_rig() {
    let mut cfg = parse_config(INTER).unwrap();
    cfg.trajectory.duration = 6.0;
    let shake = simulate(&cfg.trajectory, &cfg.sensors).unwrap();
    assert_eq!(shake.kind, LogKind::InterImu);
    let second = cfg.sensors.second_imu.clone().unwrap();
    let c = Vector3::from(second.c);
    let r = kinestat::manifold::Rotation::exp(&Vector3::from(second.rotvec));
    let moving = excitation_check(&shake, &cfg, &c, &r).unwrap();
    assert_eq!(moving.windows, 3);
    assert!(moving.sufficient());

    cfg.trajectory.accel.clear();
    cfg.trajectory.gyro.clear();
    let still = simulate(&cfg.trajectory, &cfg.sensors).unwrap();
    let rep = excitation_check(&still, &cfg, &c, &r).unwrap();
    assert_eq!(rep.full_rank, 0);
    assert!(!rep.sufficient());
}

#[test]
fn calibration_converges_on_short_shake() {
    let mut cfg = parse_config(INTER).unwrap();
    cfg.trajectory.duration = 20.0;
    let log = simulate(&cfg.trajectory, &cfg.sensors).unwrap();
    let run = run_inter_imu(&log, &cfg, false).unwrap();
    assert!(run.failure.is_none());
    let it = log.truth.as_ref().unwrap().inter.as_ref().unwrap();
    let c_err = (run.c.last().unwrap() - it.c2).norm();
    let r_err = kinestat::manifold::geodesic_distance(
        run.rot.last().unwrap(),
        &kinestat::manifold::Rotation::exp(&it.rotvec2),
    );
    assert!(c_err < 5e-3, "{c_err}");
    assert!(r_err.to_degrees() < 1.0, "{}", r_err.to_degrees());
}
