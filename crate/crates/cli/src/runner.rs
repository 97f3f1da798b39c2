//! Filters, baselines and checks run over sensor logs.

use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, Vector3};

use kinestat::eskf::{Eskf, ProcessModel};
use kinestat::io::{require_kind, Config};
use kinestat::lti::{estimator_noise, filter_butterworth1, filter_zero_phase, match_butterworth, match_zero_phase};
use kinestat::manifold::{NominalState, Rotation};
use kinestat::metrics::{estimate_delay, rmse_scalar};
use kinestat::models::{
    ImuMeasurement, InterImuBlocks, InterImuMeasurement, InterImuModel, PosImuBlocks, PosImuInputModel, PosImuStateModel,
    PoseMeasurement,
};
use kinestat::observability::{
    inter_imu_chains, observability_matrix_nl, Engine, InterImuProbeConfig, InterImuSystem, SystemDescription,
};
use kinestat::sim::{LogKind, PoseSample, SensorLog};
use kinestat::{linalg, Error, Result};

/// Smallest measurement standard deviation handed to a filter; keeps the
/// innovation covariance invertible on noiseless logs.
const SIGMA_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Formulation {
    State,
    Input,
    InterImu,
}

impl FromStr for Formulation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "state" => Ok(Formulation::State),
            "input" => Ok(Formulation::Input),
            "inter-imu" => Ok(Formulation::InterImu),
            _ => Err(Error::InvalidInput(format!(
                "unknown formulation `{s}` (expected state, input or inter-imu)"
            ))),
        }
    }
}

impl Formulation {
    pub fn name(self) -> &'static str {
        match self {
            Formulation::State => "state",
            Formulation::Input => "input",
            Formulation::InterImu => "inter-imu",
        }
    }
}

/// Mean wall-clock cost per filter step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Timing {
    /// Seconds per propagation.
    pub predict: f64,
    /// Seconds per step spent in measurement updates.
    pub update: f64,
    pub steps: usize,
}

impl Timing {
    pub fn total(&self) -> f64 {
        self.predict + self.update
    }
}

#[derive(Default)]
struct Clock {
    predict: f64,
    update: f64,
    steps: usize,
}

impl Clock {
    fn finish(&self) -> Timing {
        let n = self.steps.max(1) as f64;
        Timing {
            predict: self.predict / n,
            update: self.update / n,
            steps: self.steps,
        }
    }
}

/// Per-sample estimates of a POS-IMU filter.
#[derive(Debug)]
pub struct PosImuRun {
    pub formulation: Formulation,
    pub t: Vec<f64>,
    pub p: Vec<Vector3<f64>>,
    pub v: Vec<Vector3<f64>>,
    pub rot: Vec<Rotation>,
    pub c: Vec<Vector3<f64>>,
    pub ba: Vec<Vector3<f64>>,
    pub bw: Vec<Vector3<f64>>,
    /// Specific acceleration: the chain output for the state formulation,
    /// bias-corrected readings for the input formulation.
    pub accel: Vec<Vector3<f64>>,
    /// Angular velocity, same convention as `accel`.
    pub gyro: Vec<Vector3<f64>>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub timing: Timing,
    /// Numerical failure that stopped the run early.
    pub failure: Option<Error>,
}

impl PosImuRun {
    fn new(formulation: Formulation, header: Vec<String>) -> Self {
        PosImuRun {
            formulation,
            t: vec![],
            p: vec![],
            v: vec![],
            rot: vec![],
            c: vec![],
            ba: vec![],
            bw: vec![],
            accel: vec![],
            gyro: vec![],
            header,
            rows: vec![],
            timing: Timing::default(),
            failure: None,
        }
    }

    fn record<M: ProcessModel>(&mut self, f: &Eskf<M>, ids: PosImuBlocks, t: f64, accel: Vector3<f64>, gyro: Vector3<f64>) {
        let x = f.state();
        self.t.push(t);
        self.p.push(x.vec3(ids.p, 0));
        self.v.push(x.vec3(ids.v, 0));
        self.rot.push(*x.rotation(ids.r));
        self.c.push(x.vec3(ids.c, 0));
        self.ba.push(x.vec3(ids.ba, 0));
        self.bw.push(x.vec3(ids.bw, 0));
        self.accel.push(accel);
        self.gyro.push(gyro);
        self.rows.push(f.snapshot_row(t));
    }
}

fn diag(entries: &[(usize, f64)], n: usize) -> DMatrix<f64> {
    let mut p = DMatrix::zeros(n, n);
    let mut k = 0;
    for &(len, v) in entries {
        for _ in 0..len {
            p[(k, k)] = v;
            k += 1;
        }
    }
    assert_eq!(k, n, "initial covariance blocks cover the state");
    p
}

fn floor(s: f64) -> f64 {
    s.max(SIGMA_FLOOR)
}

fn pose_z(s: &PoseSample) -> DVector<f64> {
    DVector::from_iterator(6, s.p.iter().chain(s.m.iter()).copied())
}

fn first_pose(log: &SensorLog) -> Vector3<f64> {
    log.pose.iter().flatten().next().map(|s| s.p).unwrap_or_else(Vector3::zeros)
}

fn pose_model(cfg: &Config, ids: PosImuBlocks) -> PoseMeasurement {
    PoseMeasurement {
        ids,
        reference: Vector3::from(cfg.sensors.reference),
        sigma_p: floor(cfg.sensors.sigma_p),
        sigma_m: floor(cfg.sensors.sigma_m),
    }
}

fn check_log(log: &SensorLog) -> Result<()> {
    if log.len() < 2 {
        return Err(Error::InvalidInput("log needs at least two samples".into()));
    }
    Ok(())
}

/// Runs the state- or input-formulation filter over a POS-IMU log.
pub fn run_pos_imu(log: &SensorLog, cfg: &Config, formulation: Formulation) -> Result<PosImuRun> {
    check_log(log)?;
    match formulation {
        Formulation::State => run_state(log, cfg),
        Formulation::Input => run_input(log, cfg),
        Formulation::InterImu => Err(Error::InvalidInput(
            "the inter-imu formulation runs through run_inter_imu".into(),
        )),
    }
}

fn state_model(cfg: &Config) -> Result<PosImuStateModel> {
    let f = &cfg.filter;
    Ok(PosImuStateModel::new(f.accel.build("filter.accel")?, f.gyro.build("filter.gyro")?, f.q_ba, f.q_bw)?
        .with_gravity(Vector3::from(f.gravity)))
}

fn run_state(log: &SensorLog, cfg: &Config) -> Result<PosImuRun> {
    let model = state_model(cfg)?;
    let ids = model.blocks();
    let (ga, gw) = (ids.ga.expect("state layout"), ids.gw.expect("state layout"));
    let (na, nw) = (model.accel_model().order(), model.gyro_model().order());
    let n = model.layout().tangent_dim();
    let init = &cfg.filter.initial;
    let p0 = diag(
        &[
            (3, init.position),
            (3, init.velocity),
            (3, init.attitude),
            (3, init.offset),
            (3, init.accel_bias),
            (3, init.gyro_bias),
            (3 * na, init.gamma),
            (3 * nw, init.gamma),
        ],
        n,
    );
    let mut x0 = NominalState::origin(model.layout().clone());
    x0.set_vec3(ids.p, 0, &first_pose(log));
    x0.set_vec3(ga, 0, &log.accel[0]);
    x0.set_vec3(gw, 0, &log.gyro[0]);
    let pose = pose_model(cfg, ids);
    let imu = ImuMeasurement {
        ids,
        sigma_a: floor(cfg.sensors.sigma_a),
        sigma_w: floor(cfg.sensors.sigma_w),
    };
    let mut f = Eskf::new(model, x0, p0)?.with_joseph(cfg.filter.joseph);
    let mut run = PosImuRun::new(Formulation::State, f.snapshot_header());
    let mut clock = Clock::default();
    for k in 0..log.len() {
        let step = (|| -> Result<()> {
            if k > 0 {
                let t0 = Instant::now();
                f.propagate(&[], log.t[k] - log.t[k - 1])?;
                clock.predict += t0.elapsed().as_secs_f64();
            }
            let t0 = Instant::now();
            let z = DVector::from_iterator(6, log.accel[k].iter().chain(log.gyro[k].iter()).copied());
            f.update(&imu, &z)?;
            if let Some(s) = &log.pose[k] {
                f.update(&pose, &pose_z(s))?;
            }
            clock.update += t0.elapsed().as_secs_f64();
            clock.steps += 1;
            Ok(())
        })();
        if let Err(e) = step {
            run.failure = Some(e);
            break;
        }
        let x = f.state();
        let (a, w) = (x.vec3(ga, 0), x.vec3(gw, 0));
        run.record(&f, ids, log.t[k], a, w);
    }
    run.timing = clock.finish();
    Ok(run)
}

fn run_input(log: &SensorLog, cfg: &Config) -> Result<PosImuRun> {
    let dt = log.dt();
    let s = &cfg.sensors;
    let fc = &cfg.filter;
    let model = PosImuInputModel::new(
        floor(s.sigma_a).powi(2) * dt,
        floor(s.sigma_w).powi(2) * dt,
        fc.q_ba,
        fc.q_bw,
    )?
    .with_gravity(Vector3::from(fc.gravity));
    let ids = model.blocks();
    let init = &fc.initial;
    let p0 = diag(
        &[
            (3, init.position),
            (3, init.velocity),
            (3, init.attitude),
            (3, init.offset),
            (3, init.accel_bias),
            (3, init.gyro_bias),
        ],
        18,
    );
    let mut x0 = NominalState::origin(model.layout().clone());
    x0.set_vec3(ids.p, 0, &first_pose(log));
    let pose = pose_model(cfg, ids);
    let mut f = Eskf::new(model, x0, p0)?.with_joseph(fc.joseph);
    let mut run = PosImuRun::new(Formulation::Input, f.snapshot_header());
    let mut clock = Clock::default();
    for k in 0..log.len() {
        let step = (|| -> Result<()> {
            if k > 0 {
                let (a, w) = (log.accel[k - 1], log.gyro[k - 1]);
                let u = [a.x, a.y, a.z, w.x, w.y, w.z];
                let t0 = Instant::now();
                f.propagate(&u, log.t[k] - log.t[k - 1])?;
                clock.predict += t0.elapsed().as_secs_f64();
            }
            let t0 = Instant::now();
            if let Some(s) = &log.pose[k] {
                f.update(&pose, &pose_z(s))?;
            }
            clock.update += t0.elapsed().as_secs_f64();
            clock.steps += 1;
            Ok(())
        })();
        if let Err(e) = step {
            run.failure = Some(e);
            break;
        }
        let x = f.state();
        let a = log.accel[k] - x.vec3(ids.ba, 0);
        let w = log.gyro[k] - x.vec3(ids.bw, 0);
        run.record(&f, ids, log.t[k], a, w);
    }
    run.timing = clock.finish();
    Ok(run)
}

/// Copy of a synthetic log with every reading replaced by its noiseless
/// value (biases kept), using the lever arm and reference direction of
/// `cfg`.
pub fn noiseless_copy(log: &SensorLog, cfg: &Config) -> Result<SensorLog> {
    let tr = log
        .truth
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("log has no ground-truth columns".into()))?;
    let c = Vector3::from(cfg.sensors.c);
    let e = Vector3::from(cfg.sensors.reference);
    let mut out = log.clone();
    for k in 0..log.len() {
        out.gyro[k] = tr.w[k] + tr.bw[k];
        out.accel[k] = tr.a[k] + tr.ba[k];
        if out.pose[k].is_some() {
            let r = Rotation::exp(&tr.rotvec[k]);
            out.pose[k] = Some(PoseSample {
                p: tr.p[k] + r.matrix() * c,
                m: r.matrix().transpose() * e,
            });
        }
    }
    Ok(out)
}

/// Delay and noise comparison of the state-formulation filter with a
/// bandwidth-matched first-order low-pass and its zero-phase version on the
/// gyro channels.
#[derive(Clone, Debug)]
pub struct FilterComparison {
    /// Matched low-pass time constant, s.
    pub k: f64,
    /// Time constant of the forward-backward filter matched to the same
    /// noise level.
    pub k_zero_phase: f64,
    /// Stationary noise gain `σ_ω̂ / √r` of the filter's gyro chain.
    pub noise_gain: f64,
    /// Mean delay over the three axes, s, for (EKF, low-pass, zero-phase).
    pub delay: [f64; 3],
    /// RMS of the noise passed by each method (output on the noisy log
    /// minus output on its noiseless copy), averaged over axes.
    pub noise_rms: [f64; 3],
    /// RMS error against the true angular velocity.
    pub error_rms: [f64; 3],
    /// RMS of the raw gyro noise.
    pub raw_noise_rms: f64,
    pub dt: f64,
    /// Series written for plotting: t, truth, then EKF, low-pass and
    /// zero-phase per axis.
    pub series: Vec<Vec<f64>>,
}

pub const METHODS: [&str; 3] = ["ekf", "lowpass", "zero_phase"];

pub fn compare_filters(log: &SensorLog, cfg: &Config) -> Result<FilterComparison> {
    let tr = log
        .truth
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("filter comparison needs ground-truth columns".into()))?;
    let dt = log.dt();
    let noisy = run_pos_imu(log, cfg, Formulation::State)?;
    if let Some(e) = noisy.failure {
        return Err(e);
    }
    let clean_log = noiseless_copy(log, cfg)?;
    let clean = run_pos_imu(&clean_log, cfg, Formulation::State)?;
    if let Some(e) = clean.failure {
        return Err(e);
    }

    let r = floor(cfg.sensors.sigma_w).powi(2) * dt;
    let chain = cfg.filter.gyro.build("filter.gyro")?.to_lti(r)?;
    let noise_gain = estimator_noise(&chain, dt, 0)?.sigma / r.sqrt();
    let k = match_butterworth(noise_gain)?;
    let k_zp = match_zero_phase(noise_gain)?;

    let skip = ((cfg.compare.skip / dt).round() as usize).min(log.len() / 2);
    let max_lag = ((cfg.compare.max_lag / dt).round() as usize).max(1);
    let mut delay = [0.0; 3];
    let mut noise_rms = [0.0; 3];
    let mut error_rms = [0.0; 3];
    let mut raw = 0.0;
    let mut outputs: Vec<[Vec<f64>; 3]> = Vec::new();
    for axis in 0..3 {
        let truth: Vec<f64> = tr.w.iter().map(|w| w[axis]).collect();
        let meas: Vec<f64> = (0..log.len()).map(|i| log.gyro[i][axis] - tr.bw[i][axis]).collect();
        let meas_clean: Vec<f64> = (0..log.len()).map(|i| clean_log.gyro[i][axis] - tr.bw[i][axis]).collect();
        let ekf: Vec<f64> = noisy.gyro.iter().map(|w| w[axis]).collect();
        let ekf_clean: Vec<f64> = clean.gyro.iter().map(|w| w[axis]).collect();
        let lp = filter_butterworth1(&meas, k, dt)?;
        let lp_clean = filter_butterworth1(&meas_clean, k, dt)?;
        let zp = filter_zero_phase(&meas, k_zp, dt)?;
        let zp_clean = filter_zero_phase(&meas_clean, k_zp, dt)?;
        let pairs = [(&ekf, &ekf_clean), (&lp, &lp_clean), (&zp, &zp_clean)];
        for (m, (out, out_clean)) in pairs.iter().enumerate() {
            delay[m] += estimate_delay(&out[skip..], &truth[skip..], dt, max_lag)? / 3.0;
            noise_rms[m] += rmse_scalar(&out[skip..], &out_clean[skip..])? / 3.0;
            error_rms[m] += rmse_scalar(&out[skip..], &truth[skip..])? / 3.0;
        }
        raw += rmse_scalar(&meas[skip..], &truth[skip..])? / 3.0;
        outputs.push([ekf, lp, zp]);
    }
    let series = (0..log.len())
        .map(|i| {
            let mut row = vec![log.t[i]];
            row.extend((0..3).map(|a| tr.w[i][a]));
            for m in 0..3 {
                row.extend((0..3).map(|a| outputs[a][m][i]));
            }
            row
        })
        .collect();
    Ok(FilterComparison {
        k,
        k_zero_phase: k_zp,
        noise_gain,
        delay,
        noise_rms,
        error_rms,
        raw_noise_rms: raw,
        dt,
        series,
    })
}

pub fn comparison_series_header() -> Vec<String> {
    let mut h = vec!["t".to_string()];
    for name in ["true_w"].iter().chain(METHODS.iter()) {
        h.extend(["x", "y", "z"].iter().map(|a| format!("{name}_{a}")));
    }
    h
}

/// Per-sample estimates of the inter-IMU filter.
#[derive(Debug)]
pub struct InterImuRun {
    pub t: Vec<f64>,
    pub c: Vec<Vector3<f64>>,
    pub rot: Vec<Rotation>,
    pub ba: Vec<Vector3<f64>>,
    pub bw: Vec<Vector3<f64>>,
    pub omega: Vec<Vector3<f64>>,
    pub tau: Vec<Vector3<f64>>,
    pub accel: Vec<Vector3<f64>>,
    /// Largest absolute innovation component per sample.
    pub innovation: Vec<f64>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub timing: Timing,
    pub failure: Option<Error>,
}

pub fn inter_imu_model(cfg: &Config) -> Result<InterImuModel> {
    let c = &cfg.inter_imu;
    InterImuModel::new(c.tau.build("inter_imu.tau")?, c.accel.build("inter_imu.accel")?, c.q_ba, c.q_bw)
}

fn second_sigma(cfg: &Config) -> f64 {
    cfg.sensors.second_imu.as_ref().map(|s| s.sigma_a).unwrap_or(cfg.sensors.sigma_a)
}

/// Span of readings used to estimate the initial motion derivatives, s.
pub const INIT_WINDOW: f64 = 0.1;

/// Initial state of the inter-IMU filter. Angular velocity, its
/// derivatives and the IMU-1 acceleration chain come from polynomial fits
/// to the first [`INIT_WINDOW`] seconds of readings; extrinsics and biases
/// start at zero. With `truth_seeded` every block is taken from the truth
/// columns instead.
pub fn inter_imu_initial(log: &SensorLog, cfg: &Config, model: &InterImuModel, truth_seeded: bool) -> Result<NominalState> {
    let ids = model.blocks();
    let mut x = NominalState::origin(model.layout().clone());
    let (nt, na) = (cfg.inter_imu.tau.order, cfg.inter_imu.accel.order);
    let width = ((INIT_WINDOW / log.dt()).round() as usize).max(nt.max(na) + 2).min(log.len());
    let t = &log.t[..width];
    if !truth_seeded {
        let (sw, sa) = (floor(cfg.sensors.sigma_w), floor(cfg.sensors.sigma_a));
        seed_chains(&mut x, ids, t, &log.gyro[..width], &log.accel[..width], (sw, sa), (nt, na))?;
        return Ok(x);
    }
    let tr = log
        .truth
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("truth seeding needs ground-truth columns".into()))?;
    let it = tr
        .inter
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("truth seeding needs inter-imu truth columns".into()))?;
    let r = Rotation::exp(&it.rotvec2);
    x.set_vec3(ids.ba, 0, &(it.ba2[0] - r.matrix() * tr.ba[0]));
    x.set_vec3(ids.bw, 0, &tr.bw[0]);
    x.set_vec3(ids.w, 0, &tr.w[0]);
    x.set_vec3(ids.c, 0, &it.c2);
    x.set_rotation(ids.r, r);
    // Noise-free columns: a short window keeps the fitted derivatives
    // accurate, and the leading terms are exact.
    let short = (2 * (nt.max(na) + 2)).min(width);
    let a1: Vec<Vector3<f64>> = (0..short).map(|k| tr.a[k] + tr.ba[k]).collect();
    seed_chains(&mut x, ids, &t[..short], &tr.w[..short], &a1, (0.0, 0.0), (nt, na))?;
    x.set_vec3(ids.w, 0, &tr.w[0]);
    x.set_vec3(ids.gt, 0, &it.tau[0]);
    x.set_vec3(ids.ga, 0, &a1[0]);
    Ok(x)
}

/// Sets `ω`, the angular-acceleration chain and the IMU-1 acceleration
/// chain at `t[0]` from polynomial fits to the given series.
fn seed_chains(
    x: &mut NominalState,
    ids: InterImuBlocks,
    t: &[f64],
    w: &[Vector3<f64>],
    a: &[Vector3<f64>],
    (sigma_w, sigma_a): (f64, f64),
    (nt, na): (usize, usize),
) -> Result<()> {
    for axis in 0..3 {
        let wi: Vec<f64> = w.iter().map(|v| v[axis]).collect();
        let ai: Vec<f64> = a.iter().map(|v| v[axis]).collect();
        let dw = window_derivatives(t, &wi, nt, sigma_w, t[0])?;
        let da = window_derivatives(t, &ai, na - 1, sigma_a, t[0])?;
        x.vector_mut(ids.w)[axis] = dw[0];
        for k in 0..nt {
            x.vector_mut(ids.gt)[3 * k + axis] = dw[k + 1];
        }
        for k in 0..na {
            x.vector_mut(ids.ga)[3 * k + axis] = da[k];
        }
    }
    Ok(())
}

/// Runs the inter-IMU calibration filter.
pub fn run_inter_imu(log: &SensorLog, cfg: &Config, truth_seeded: bool) -> Result<InterImuRun> {
    check_log(log)?;
    require_kind(log, LogKind::InterImu)?;
    let a2 = log.accel2.as_ref().expect("checked by require_kind");
    let model = inter_imu_model(cfg)?;
    let ids = model.blocks();
    let n = model.layout().tangent_dim();
    let init = &cfg.inter_imu.initial;
    let (nt, na) = (
        cfg.inter_imu.tau.order,
        cfg.inter_imu.accel.order,
    );
    let p0 = diag(
        &[
            (6, init.bias),
            (3, init.omega),
            (3, init.offset),
            (3, init.rotation),
            (3 * nt, init.gamma),
            (3 * na, init.gamma),
        ],
        n,
    );
    let x0 = inter_imu_initial(log, cfg, &model, truth_seeded)?;
    let meas = InterImuMeasurement {
        ids,
        sigma_w1: floor(cfg.sensors.sigma_w),
        sigma_a1: floor(cfg.sensors.sigma_a),
        sigma_a2: floor(second_sigma(cfg)),
    };
    let mut f = Eskf::new(model, x0, p0)?.with_joseph(cfg.filter.joseph);
    let mut run = InterImuRun {
        t: vec![],
        c: vec![],
        rot: vec![],
        ba: vec![],
        bw: vec![],
        omega: vec![],
        tau: vec![],
        accel: vec![],
        innovation: vec![],
        header: f.snapshot_header(),
        rows: vec![],
        timing: Timing::default(),
        failure: None,
    };
    let mut clock = Clock::default();
    for k in 0..log.len() {
        let step = (|| -> Result<f64> {
            if k > 0 {
                let t0 = Instant::now();
                f.propagate(&[], log.t[k] - log.t[k - 1])?;
                clock.predict += t0.elapsed().as_secs_f64();
            }
            let t0 = Instant::now();
            let z = DVector::from_iterator(
                9,
                log.gyro[k].iter().chain(log.accel[k].iter()).chain(a2[k].iter()).copied(),
            );
            let info = f.update(&meas, &z)?;
            clock.update += t0.elapsed().as_secs_f64();
            clock.steps += 1;
            Ok(info.innovation.amax())
        })();
        match step {
            Ok(inn) => run.innovation.push(inn),
            Err(e) => {
                run.failure = Some(e);
                break;
            }
        }
        let x = f.state();
        run.t.push(log.t[k]);
        run.c.push(x.vec3(ids.c, 0));
        run.rot.push(*x.rotation(ids.r));
        run.ba.push(x.vec3(ids.ba, 0));
        run.bw.push(x.vec3(ids.bw, 0));
        run.omega.push(x.vec3(ids.w, 0));
        run.tau.push(x.vec3(ids.gt, 0));
        run.accel.push(x.vec3(ids.ga, 0));
        run.rows.push(f.snapshot_row(log.t[k]));
    }
    run.timing = clock.finish();
    Ok(run)
}

/// Outcome of the excitation check on a dual-IMU log.
#[derive(Clone, Debug, PartialEq)]
pub struct ExcitationReport {
    pub windows: usize,
    pub full_rank: usize,
}

impl ExcitationReport {
    pub fn fraction(&self) -> f64 {
        if self.windows == 0 {
            0.0
        } else {
            self.full_rank as f64 / self.windows as f64
        }
    }

    /// Excitation counts as sufficient when at least half of the windows
    /// give a full-rank observability matrix.
    pub fn sufficient(&self) -> bool {
        self.windows > 0 && 2 * self.full_rank >= self.windows
    }
}

/// Derivatives `x⁽ᵏ⁾(at)`, `k = 0..=degree`, of one channel from a
/// least-squares polynomial over a window. Coefficients smaller than three
/// standard errors for white noise of std `sigma` are set to zero.
fn window_derivatives(t: &[f64], x: &[f64], degree: usize, sigma: f64, at: f64) -> Result<Vec<f64>> {
    let n = t.len();
    let mid = at;
    let mut fact = vec![1.0; degree + 1];
    for k in 1..=degree {
        fact[k] = fact[k - 1] * k as f64;
    }
    let design = DMatrix::from_fn(n, degree + 1, |i, k| (t[i] - mid).powi(k as i32) / fact[k]);
    let gram = design.transpose() * &design;
    let inv = gram
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular polynomial fit".into()))?;
    let coef = &inv * design.transpose() * DVector::from_column_slice(x);
    Ok((0..=degree)
        .map(|k| {
            let se = sigma * inv[(k, k)].max(0.0).sqrt();
            if coef[k].abs() > 3.0 * se {
                coef[k]
            } else {
                0.0
            }
        })
        .collect())
}

/// Checks excitation of a dual-IMU log: in windows of
/// `cfg.inter_imu.excitation_window` seconds, angular-velocity and IMU-1
/// acceleration derivatives are estimated by polynomial fits and the
/// inter-IMU observability matrix is evaluated at the resulting state with
/// the given extrinsics.
pub fn excitation_check(log: &SensorLog, cfg: &Config, c: &Vector3<f64>, rot: &Rotation) -> Result<ExcitationReport> {
    let (nt, na) = (cfg.inter_imu.tau.order, cfg.inter_imu.accel.order);
    let probe = InterImuProbeConfig::new(nt, na);
    let sys = InterImuSystem::new(nt, na)?;
    let chains = inter_imu_chains(nt, na, probe.n);
    let dt = log.dt();
    let width = ((cfg.inter_imu.excitation_window / dt).round() as usize).max(nt + na + 2);
    let degree = nt.max(na - 1);
    let mut rep = ExcitationReport {
        windows: 0,
        full_rank: 0,
    };
    let mut start = 0;
    while start + width <= log.len() {
        let t = &log.t[start..start + width];
        let mut x = NominalState::origin(sys.layout().clone());
        x.set_vec3(3, 0, c);
        x.set_rotation(4, *rot);
        for axis in 0..3 {
            let w: Vec<f64> = log.gyro[start..start + width].iter().map(|v| v[axis]).collect();
            let a: Vec<f64> = log.accel[start..start + width].iter().map(|v| v[axis]).collect();
            let mid = 0.5 * (t[0] + t[width - 1]);
            let dw = window_derivatives(t, &w, degree, floor(cfg.sensors.sigma_w), mid)?;
            let da = window_derivatives(t, &a, degree, floor(cfg.sensors.sigma_a), mid)?;
            x.vector_mut(2)[axis] = dw[0];
            for k in 0..nt {
                x.vector_mut(5)[3 * k + axis] = dw[k + 1];
            }
            for k in 0..na {
                x.vector_mut(6)[3 * k + axis] = da[k];
            }
        }
        let o = observability_matrix_nl(&sys, &x, &chains, Engine::Series)?;
        rep.windows += 1;
        if linalg::rank(&o, probe.tol)?.is_full_column_rank() {
            rep.full_rank += 1;
        }
        start += width;
    }
    Ok(rep)
}
