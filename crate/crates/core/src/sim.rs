//! Synthetic trajectories and sensor logs.
//!
//! A trajectory is defined analytically: world-frame acceleration is a sum
//! of sinusoids plus smooth vertical climb/descent pulses, and body angular
//! velocity is a sum of sinusoids. Position and velocity are sampled from
//! closed-form integrals; attitude is advanced with a fourth-order Magnus
//! step between samples.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::Rotation;
use crate::models::lever_arm_acceleration;

/// `amplitude · sin(2π frequency t + phase)` on one axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sinusoid {
    pub axis: usize,
    pub amplitude: f64,
    /// Hz.
    pub frequency: f64,
    /// Radians; drawn from the trajectory seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectorySpec {
    /// Seconds.
    pub duration: f64,
    /// IMU sample rate, Hz.
    pub rate: f64,
    /// Start of the climb; `None` keeps the vehicle on the ground.
    pub takeoff_time: Option<f64>,
    pub climb_duration: f64,
    pub hover_height: f64,
    /// Start of the descent; `None` never lands.
    pub landing_time: Option<f64>,
    pub descent_duration: f64,
    /// World-frame translational acceleration excitation, m/s².
    pub accel: Vec<Sinusoid>,
    /// Body angular-velocity excitation, rad/s.
    pub gyro: Vec<Sinusoid>,
    /// World gravity, m/s².
    pub gravity: [f64; 3],
    pub seed: u64,
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        TrajectorySpec::reference()
    }
}

fn sines(list: &[(usize, f64, f64)]) -> Vec<Sinusoid> {
    list.iter()
        .map(|&(axis, amplitude, frequency)| Sinusoid {
            axis,
            amplitude,
            frequency,
            phase: None,
        })
        .collect()
}

impl TrajectorySpec {
    /// The UAV scenario: 15 s at 1 kHz, climb at 2 s to 5 m, descend
    /// after 12 s, multi-frequency excitation on all axes.
    pub fn reference() -> Self {
        TrajectorySpec {
            duration: 15.0,
            rate: 1000.0,
            takeoff_time: Some(2.0),
            climb_duration: 2.0,
            hover_height: 5.0,
            landing_time: Some(12.0),
            descent_duration: 3.0,
            accel: sines(&[
                (0, 1.0, 0.4),
                (0, 0.5, 1.3),
                (1, 1.0, 0.5),
                (1, 0.5, 1.7),
                (2, 0.3, 0.7),
                (2, 0.2, 1.9),
            ]),
            gyro: sines(&[
                (0, 0.5, 0.3),
                (0, 0.3, 1.1),
                (1, 0.5, 0.45),
                (1, 0.3, 1.5),
                (2, 0.6, 0.25),
                (2, 0.3, 0.9),
            ]),
            gravity: [0.0, 0.0, -9.81],
            seed: 1,
        }
    }

    /// Hand-held shaking of a dual-IMU rig: no flight phases, stronger
    /// and faster rotational excitation.
    pub fn shake() -> Self {
        TrajectorySpec {
            duration: 60.0,
            rate: 1000.0,
            takeoff_time: None,
            climb_duration: 1.0,
            hover_height: 0.0,
            landing_time: None,
            descent_duration: 1.0,
            accel: sines(&[
                (0, 2.0, 0.8),
                (0, 1.0, 2.3),
                (1, 2.0, 1.1),
                (1, 1.0, 2.9),
                (2, 2.0, 0.9),
                (2, 1.0, 2.6),
            ]),
            gyro: sines(&[
                (0, 1.5, 0.7),
                (0, 0.8, 2.1),
                (1, 1.5, 0.9),
                (1, 0.8, 2.5),
                (2, 1.5, 0.6),
                (2, 0.8, 1.9),
            ]),
            gravity: [0.0, 0.0, -9.81],
            seed: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.rate.is_finite() && self.rate > 0.0) {
            return bad(format!("trajectory.rate must be positive, got {}", self.rate));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return bad(format!("trajectory.duration must be positive, got {}", self.duration));
        }
        if !(self.climb_duration > 0.0 && self.descent_duration > 0.0) {
            return bad("trajectory climb/descent durations must be positive".into());
        }
        for (name, list) in [("accel", &self.accel), ("gyro", &self.gyro)] {
            for s in list {
                if s.axis > 2 {
                    return bad(format!("trajectory.{name}: axis {} out of range 0..=2", s.axis));
                }
                if !(s.frequency > 0.0 && s.frequency < self.rate / 2.0) {
                    return bad(format!(
                        "trajectory.{name}: frequency {} Hz must lie in (0, Nyquist = {} Hz)",
                        s.frequency,
                        self.rate / 2.0
                    ));
                }
                if !s.amplitude.is_finite() {
                    return bad(format!("trajectory.{name}: amplitude must be finite"));
                }
            }
        }
        Ok(())
    }

    pub fn samples(&self) -> usize {
        (self.duration * self.rate).round() as usize + 1
    }
}

/// Septic smoothstep `s(τ)` on `[0, 1]` and its first two derivatives.
fn smoothstep(tau: f64) -> (f64, f64, f64) {
    if tau <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    if tau >= 1.0 {
        return (1.0, 0.0, 0.0);
    }
    let t2 = tau * tau;
    let t3 = t2 * tau;
    let t4 = t3 * tau;
    let s = t4 * (35.0 - 84.0 * tau + 70.0 * t2 - 20.0 * t3);
    let ds = 140.0 * t3 * (1.0 - tau).powi(3);
    let dds = 420.0 * t2 * (1.0 - tau).powi(2) * (1.0 - 2.0 * tau);
    (s, ds, dds)
}

#[derive(Clone, Debug)]
struct Wave {
    axis: usize,
    amp: f64,
    w: f64,
    phase: f64,
}

fn waves(list: &[Sinusoid], rng: &mut ChaCha8Rng) -> Vec<Wave> {
    list.iter()
        .map(|s| {
            let drawn: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            Wave {
                axis: s.axis,
                amp: s.amplitude,
                w: std::f64::consts::TAU * s.frequency,
                phase: s.phase.unwrap_or(drawn),
            }
        })
        .collect()
}

/// Analytic motion profile.
#[derive(Clone, Debug)]
struct Profile {
    accel: Vec<Wave>,
    gyro: Vec<Wave>,
    climb: Option<(f64, f64)>,
    descent: Option<(f64, f64)>,
    height: f64,
}

impl Profile {
    fn new(traj: &TrajectorySpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(traj.seed);
        Profile {
            accel: waves(&traj.accel, &mut rng),
            gyro: waves(&traj.gyro, &mut rng),
            climb: traj.takeoff_time.map(|t| (t, traj.climb_duration)),
            descent: traj.landing_time.map(|t| (t, traj.descent_duration)),
            height: traj.hover_height,
        }
    }

    /// World position, velocity and acceleration.
    fn translation(&self, t: f64) -> [Vector3<f64>; 3] {
        let mut p = Vector3::zeros();
        let mut v = Vector3::zeros();
        let mut a = Vector3::zeros();
        for s in &self.accel {
            let arg = s.w * t + s.phase;
            a[s.axis] += s.amp * arg.sin();
            v[s.axis] -= s.amp / s.w * arg.cos();
            p[s.axis] -= s.amp / (s.w * s.w) * arg.sin();
        }
        for (seg, sign) in [(self.climb, 1.0), (self.descent, -1.0)] {
            if let Some((t0, dur)) = seg {
                let (s, ds, dds) = smoothstep((t - t0) / dur);
                p.z += sign * self.height * s;
                v.z += sign * self.height * ds / dur;
                a.z += sign * self.height * dds / (dur * dur);
            }
        }
        [p, v, a]
    }

    /// Body angular velocity and acceleration.
    fn rotation(&self, t: f64) -> [Vector3<f64>; 2] {
        let mut w = Vector3::zeros();
        let mut dw = Vector3::zeros();
        for s in &self.gyro {
            let arg = s.w * t + s.phase;
            w[s.axis] += s.amp * arg.sin();
            dw[s.axis] += s.amp * s.w * arg.cos();
        }
        [w, dw]
    }
}

/// Noiseless ground truth sampled at the IMU rate.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub dt: f64,
    pub t: Vec<f64>,
    pub p: Vec<Vector3<f64>>,
    pub v: Vec<Vector3<f64>>,
    pub rot: Vec<Rotation>,
    /// Body-frame specific acceleration `Rᵀ (p̈ − g)`.
    pub accel: Vec<Vector3<f64>>,
    /// Body angular velocity.
    pub omega: Vec<Vector3<f64>>,
    /// Body angular acceleration.
    pub tau: Vec<Vector3<f64>>,
    /// World-frame acceleration `p̈`.
    pub world_accel: Vec<Vector3<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

/// Samples the trajectory described by `traj`, starting level (`R = I`).
pub fn generate_trajectory(traj: &TrajectorySpec) -> Result<Trajectory> {
    traj.validate()?;
    let prof = Profile::new(traj);
    let n = traj.samples();
    let dt = 1.0 / traj.rate;
    let mut tr = Trajectory {
        dt,
        t: Vec::with_capacity(n),
        p: Vec::with_capacity(n),
        v: Vec::with_capacity(n),
        rot: Vec::with_capacity(n),
        accel: Vec::with_capacity(n),
        omega: Vec::with_capacity(n),
        tau: Vec::with_capacity(n),
        world_accel: Vec::with_capacity(n),
    };
    let g = Vector3::from(traj.gravity);
    let gauss = 3f64.sqrt() / 6.0;
    let mut r = Rotation::identity();
    for k in 0..n {
        let t = k as f64 * dt;
        if k > 0 {
            let t0 = t - dt;
            let [w1, _] = prof.rotation(t0 + (0.5 - gauss) * dt);
            let [w2, _] = prof.rotation(t0 + (0.5 + gauss) * dt);
            let step = (w1 + w2) * (0.5 * dt) + w1.cross(&w2) * (3f64.sqrt() / 12.0 * dt * dt);
            r = r.retract(&step);
            if k % 1000 == 0 {
                r = r.orthonormalized();
            }
        }
        let [p, v, a] = prof.translation(t);
        let [w, dw] = prof.rotation(t);
        tr.t.push(t);
        tr.p.push(p);
        tr.v.push(v);
        tr.accel.push(r.matrix().transpose() * (a - g));
        tr.rot.push(r);
        tr.omega.push(w);
        tr.tau.push(dw);
        tr.world_accel.push(a);
    }
    Ok(tr)
}

/// Second IMU rigidly attached at lever arm `c` (IMU-1 frame) with relative
/// rotation `Exp(rotvec)`, so that it reads `R (a + ⌊ω⌋²c + ⌊τ⌋c) + b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SecondImuSpec {
    pub c: [f64; 3],
    pub rotvec: [f64; 3],
    pub sigma_a: f64,
    pub q_ba: f64,
    pub ba0: [f64; 3],
}

impl Default for SecondImuSpec {
    fn default() -> Self {
        let deg10 = 10f64.to_radians();
        SecondImuSpec {
            c: [0.1, 0.05, -0.02],
            rotvec: [0.0, 0.0, deg10],
            sigma_a: 0.05,
            q_ba: 1e-8,
            ba0: [0.05, -0.03, 0.02],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorSpec {
    /// IMU lever arm in the body frame, m.
    pub c: [f64; 3],
    pub sigma_p: f64,
    pub sigma_m: f64,
    pub sigma_a: f64,
    pub sigma_w: f64,
    /// Bias random-walk intensities, (unit/s)²/Hz.
    pub q_ba: f64,
    pub q_bw: f64,
    pub ba0: [f64; 3],
    pub bw0: [f64; 3],
    /// Pose sensor rate, Hz; must divide the IMU rate.
    pub pose_rate: f64,
    /// World direction observed by the heading sensor.
    pub reference: [f64; 3],
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub second_imu: Option<SecondImuSpec>,
}

impl Default for SensorSpec {
    fn default() -> Self {
        SensorSpec {
            c: [0.5, 0.5, 0.5],
            sigma_p: 0.005,
            sigma_m: 0.01,
            sigma_a: 0.05,
            sigma_w: 0.005,
            q_ba: 1e-8,
            q_bw: 1e-10,
            ba0: [0.1, -0.05, 0.08],
            bw0: [0.01, -0.02, 0.015],
            pose_rate: 200.0,
            reference: [1.0, 0.0, 0.0],
            seed: 7,
            second_imu: None,
        }
    }
}

impl SensorSpec {
    pub fn validate(&self, imu_rate: f64) -> Result<()> {
        let stds = [
            ("sigma_p", self.sigma_p),
            ("sigma_m", self.sigma_m),
            ("sigma_a", self.sigma_a),
            ("sigma_w", self.sigma_w),
            ("q_ba", self.q_ba),
            ("q_bw", self.q_bw),
        ];
        for (k, v) in stds {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("sensors.{k} must be non-negative, got {v}")));
            }
        }
        if let Some(s) = &self.second_imu {
            if !(s.sigma_a >= 0.0 && s.q_ba >= 0.0) {
                return Err(Error::Config("sensors.second_imu noise levels must be non-negative".into()));
            }
        }
        if self.pose_rate_divisor(imu_rate).is_none() {
            return Err(Error::Config(format!(
                "sensors.pose_rate {} Hz must divide the IMU rate {imu_rate} Hz",
                self.pose_rate
            )));
        }
        let e = Vector3::from(self.reference);
        if !((e.norm() - 1.0).abs() < 1e-9) {
            return Err(Error::Config("sensors.reference must be a unit vector".into()));
        }
        Ok(())
    }

    fn pose_rate_divisor(&self, imu_rate: f64) -> Option<usize> {
        if !(self.pose_rate > 0.0 && self.pose_rate <= imu_rate) {
            return None;
        }
        let d = imu_rate / self.pose_rate;
        (d.fract().abs() < 1e-9 || (1.0 - d.fract()).abs() < 1e-9).then_some(d.round() as usize)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LogKind {
    PosImu,
    InterImu,
}

impl LogKind {
    pub fn name(self) -> &'static str {
        match self {
            LogKind::PosImu => "pos-imu",
            LogKind::InterImu => "inter-imu",
        }
    }

    pub fn parse(s: &str) -> Option<LogKind> {
        match s {
            "pos-imu" => Some(LogKind::PosImu),
            "inter-imu" => Some(LogKind::InterImu),
            _ => None,
        }
    }
}

/// Pose-sensor reading: position of the sensor and body-frame heading.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseSample {
    pub p: Vector3<f64>,
    pub m: Vector3<f64>,
}

/// Ground-truth columns of a synthetic log.
#[derive(Clone, Debug, PartialEq)]
pub struct TruthColumns {
    pub p: Vec<Vector3<f64>>,
    pub v: Vec<Vector3<f64>>,
    pub rotvec: Vec<Vector3<f64>>,
    pub a: Vec<Vector3<f64>>,
    pub w: Vec<Vector3<f64>>,
    pub ba: Vec<Vector3<f64>>,
    pub bw: Vec<Vector3<f64>>,
    pub inter: Option<InterTruth>,
}

/// Extra truth of the dual-IMU case.
#[derive(Clone, Debug, PartialEq)]
pub struct InterTruth {
    pub tau: Vec<Vector3<f64>>,
    pub ba2: Vec<Vector3<f64>>,
    pub c2: Vector3<f64>,
    pub rotvec2: Vector3<f64>,
}

/// Opaque column carried through reading and writing.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtraColumn {
    pub name: String,
    pub values: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SensorLog {
    pub kind: LogKind,
    pub t: Vec<f64>,
    pub gyro: Vec<Vector3<f64>>,
    pub accel: Vec<Vector3<f64>>,
    /// Present only on rows where the pose sensor fired.
    pub pose: Vec<Option<PoseSample>>,
    /// Second-IMU accelerometer (inter-IMU logs).
    pub accel2: Option<Vec<Vector3<f64>>>,
    pub truth: Option<TruthColumns>,
    pub extra: Vec<ExtraColumn>,
}

impl SensorLog {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Mean sample period.
    pub fn dt(&self) -> f64 {
        match self.t.len() {
            0 | 1 => 0.0,
            n => (self.t[n - 1] - self.t[0]) / (n - 1) as f64,
        }
    }
}

/// Independent RNG stream per sensor channel.
#[derive(Clone, Copy)]
enum Channel {
    Position = 1,
    Heading,
    Accel,
    Gyro,
    AccelBias,
    GyroBias,
    Accel2,
    Accel2Bias,
}

fn stream(seed: u64, ch: Channel) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(ch as u64);
    r
}

fn gauss3(rng: &mut ChaCha8Rng, s: f64) -> Vector3<f64> {
    Vector3::from_fn(|_, _| s * rng.sample::<f64, _>(StandardNormal))
}

fn random_walk(seed: u64, ch: Channel, start: [f64; 3], q: f64, dt: f64, n: usize) -> Vec<Vector3<f64>> {
    let mut rng = stream(seed, ch);
    let step = (q * dt).sqrt();
    let mut b = Vector3::from(start);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(b);
        b += gauss3(&mut rng, step);
    }
    out
}

/// Measurements of `truth` per the sensor models: IMU readings with
/// random-walk biases, pose readings `p + R c`, `Rᵀ e` at `pose_rate`, and
/// optionally a second accelerometer.
pub fn synthesize_sensors(truth: &Trajectory, sens: &SensorSpec) -> Result<SensorLog> {
    let rate = 1.0 / truth.dt;
    sens.validate(rate)?;
    let every = sens.pose_rate_divisor(rate).expect("validated");
    let n = truth.len();
    let dt = truth.dt;
    let ba = random_walk(sens.seed, Channel::AccelBias, sens.ba0, sens.q_ba, dt, n);
    let bw = random_walk(sens.seed, Channel::GyroBias, sens.bw0, sens.q_bw, dt, n);
    let mut rp = stream(sens.seed, Channel::Position);
    let mut rm = stream(sens.seed, Channel::Heading);
    let mut ra = stream(sens.seed, Channel::Accel);
    let mut rw = stream(sens.seed, Channel::Gyro);
    let c = Vector3::from(sens.c);
    let e = Vector3::from(sens.reference);

    let mut gyro = Vec::with_capacity(n);
    let mut accel = Vec::with_capacity(n);
    let mut pose = Vec::with_capacity(n);
    for k in 0..n {
        gyro.push(truth.omega[k] + bw[k] + gauss3(&mut rw, sens.sigma_w));
        accel.push(truth.accel[k] + ba[k] + gauss3(&mut ra, sens.sigma_a));
        pose.push((k % every == 0).then(|| {
            let r = truth.rot[k].matrix();
            PoseSample {
                p: truth.p[k] + r * c + gauss3(&mut rp, sens.sigma_p),
                m: r.transpose() * e + gauss3(&mut rm, sens.sigma_m),
            }
        }));
    }

    let (kind, accel2, inter) = match &sens.second_imu {
        None => (LogKind::PosImu, None, None),
        Some(s2) => {
            let ba2 = random_walk(sens.seed, Channel::Accel2Bias, s2.ba0, s2.q_ba, dt, n);
            let mut r2 = stream(sens.seed, Channel::Accel2);
            let c2 = Vector3::from(s2.c);
            let rv2 = Vector3::from(s2.rotvec);
            let rot2 = Rotation::exp(&rv2);
            let a2 = (0..n)
                .map(|k| {
                    let s = lever_arm_acceleration(&truth.accel[k], &truth.omega[k], &truth.tau[k], &c2);
                    rot2.matrix() * s + ba2[k] + gauss3(&mut r2, s2.sigma_a)
                })
                .collect();
            let inter = InterTruth {
                tau: truth.tau.clone(),
                ba2,
                c2,
                rotvec2: rv2,
            };
            (LogKind::InterImu, Some(a2), Some(inter))
        }
    };

    Ok(SensorLog {
        kind,
        t: truth.t.clone(),
        gyro,
        accel,
        pose,
        accel2,
        truth: Some(TruthColumns {
            p: truth.p.clone(),
            v: truth.v.clone(),
            rotvec: truth.rot.iter().map(Rotation::log).collect(),
            a: truth.accel.clone(),
            w: truth.omega.clone(),
            ba,
            bw,
            inter,
        }),
        extra: Vec::new(),
    })
}

/// Convenience: trajectory plus sensors.
pub fn simulate(traj: &TrajectorySpec, sensors: &SensorSpec) -> Result<SensorLog> {
    synthesize_sensors(&generate_trajectory(traj)?, sensors)
}
