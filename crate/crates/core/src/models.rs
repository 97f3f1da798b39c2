//! Concrete system models for the error-state filter.
//!
//! * [`PosImuStateModel`]: position + heading + IMU fusion where specific
//!   acceleration and angular velocity are states driven by integrator-chain
//!   motion models and the IMU readings are measurements.
//! * [`PosImuInputModel`]: the classic formulation where IMU readings are
//!   inputs of the kinematics.
//! * [`InterImuModel`]: relative pose (lever arm `c`, rotation `R`) between
//!   two rigidly attached IMUs.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::eskf::{MeasurementModel, ProcessModel};
use crate::error::{Error, Result};
use crate::linalg::{self, RANK_TOL};
use crate::lti::{kalman_observable_reduction, LtiSystem};
use crate::manifold::{skew, BlockKind, NominalState, Rotation, StateLayout};
use crate::motion_model::StatModel;

/// Gravity in the world frame (z up).
pub const GRAVITY: Vector3<f64> = Vector3::new(0.0, 0.0, -9.81);

fn put(m: &mut DMatrix<f64>, r: usize, c: usize, blk: &Matrix3<f64>) {
    m.view_mut((r, c), (3, 3)).copy_from(blk);
}

fn put_eye(m: &mut DMatrix<f64>, r: usize, c: usize, n: usize, s: f64) {
    for k in 0..n {
        m[(r + k, c + k)] = s;
    }
}

fn v3(s: &[f64], k: usize) -> Vector3<f64> {
    Vector3::new(s[3 * k], s[3 * k + 1], s[3 * k + 2])
}

/// Writes `(A ⊗ I₃) γ` of an integrator chain: derivative order `k` gets
/// order `k + 1`, the last order gets zero.
fn chain_rate(out: &mut [f64], gamma: &[f64]) {
    let n = gamma.len();
    out[..n - 3].copy_from_slice(&gamma[3..]);
    out[n - 3..].fill(0.0);
}

fn chain_jacobian(f: &mut DMatrix<f64>, off: usize, order: usize) {
    for k in 0..order.saturating_sub(1) {
        put_eye(f, off + 3 * k, off + 3 * (k + 1), 3, 1.0);
    }
}

fn chain_intensity(q: &mut DMatrix<f64>, off: usize, model: &StatModel) {
    for (k, qi) in model.q().iter().enumerate() {
        put_eye(q, off + 3 * k, off + 3 * k, 3, *qi);
    }
}

/// Block indices of the POS-IMU layouts.
#[derive(Clone, Copy, Debug)]
pub struct PosImuBlocks {
    pub p: usize,
    pub v: usize,
    pub r: usize,
    pub c: usize,
    pub ba: usize,
    pub bw: usize,
    /// Specific-acceleration chain (state formulation only).
    pub ga: Option<usize>,
    /// Angular-velocity chain (state formulation only).
    pub gw: Option<usize>,
}

fn pos_imu_layout(chains: Option<(usize, usize)>) -> Result<(Arc<StateLayout>, PosImuBlocks)> {
    let mut blocks = vec![
        ("p", BlockKind::Euclidean(3)),
        ("v", BlockKind::Euclidean(3)),
        ("R", BlockKind::Rotation),
        ("c", BlockKind::Euclidean(3)),
        ("b_a", BlockKind::Euclidean(3)),
        ("b_w", BlockKind::Euclidean(3)),
    ];
    if let Some((na, nw)) = chains {
        blocks.push(("gamma_a", BlockKind::Euclidean(3 * na)));
        blocks.push(("gamma_w", BlockKind::Euclidean(3 * nw)));
    }
    let layout = StateLayout::new(blocks)?;
    let ids = PosImuBlocks {
        p: 0,
        v: 1,
        r: 2,
        c: 3,
        ba: 4,
        bw: 5,
        ga: chains.map(|_| 6),
        gw: chains.map(|_| 7),
    };
    Ok((Arc::new(layout), ids))
}

/// State formulation: `ṗ = v`, `v̇ = R a + g`, `Ṙ = R⌊ω⌋`, `ċ = 0`, random-walk
/// biases, and `a = C γ_a`, `ω = C γ_ω` from integrator chains.
///
/// Noise vector: `[w_ba, w_bw, w_γa, w_γω]`.
#[derive(Clone, Debug)]
pub struct PosImuStateModel {
    layout: Arc<StateLayout>,
    ids: PosImuBlocks,
    accel: StatModel,
    gyro: StatModel,
    q_ba: f64,
    q_bw: f64,
    gravity: Vector3<f64>,
}

impl PosImuStateModel {
    pub fn new(accel: StatModel, gyro: StatModel, q_ba: f64, q_bw: f64) -> Result<Self> {
        if !(q_ba >= 0.0 && q_bw >= 0.0) {
            return Err(Error::InvalidInput("bias random-walk intensities must be non-negative".into()));
        }
        let (layout, ids) = pos_imu_layout(Some((accel.order(), gyro.order())))?;
        Ok(PosImuStateModel {
            layout,
            ids,
            accel,
            gyro,
            q_ba,
            q_bw,
            gravity: GRAVITY,
        })
    }

    pub fn with_gravity(mut self, g: Vector3<f64>) -> Self {
        self.gravity = g;
        self
    }

    pub fn blocks(&self) -> PosImuBlocks {
        self.ids
    }

    pub fn accel_model(&self) -> &StatModel {
        &self.accel
    }

    pub fn gyro_model(&self) -> &StatModel {
        &self.gyro
    }

    fn ga(&self) -> usize {
        self.ids.ga.expect("state formulation has gamma_a")
    }

    fn gw(&self) -> usize {
        self.ids.gw.expect("state formulation has gamma_w")
    }
}

impl ProcessModel for PosImuStateModel {
    fn layout(&self) -> &Arc<StateLayout> {
        &self.layout
    }

    fn noise_dim(&self) -> usize {
        6 + 3 * (self.accel.order() + self.gyro.order())
    }

    fn rate(&self, x: &NominalState, _u: &[f64], w: &[f64]) -> DVector<f64> {
        let l = &self.layout;
        let ids = self.ids;
        let mut out = DVector::zeros(l.tangent_dim());
        let ga = x.vector(self.ga());
        let gw = x.vector(self.gw());
        let r = x.rotation(ids.r).matrix();
        let a = v3(ga, 0);
        let omega = v3(gw, 0);
        let o = |b: usize| l.tangent_range(b).start;
        out.rows_mut(o(ids.p), 3).copy_from_slice(x.vector(ids.v));
        out.rows_mut(o(ids.v), 3).copy_from(&(r * a + self.gravity));
        out.rows_mut(o(ids.r), 3).copy_from(&omega);
        let (na3, nw3) = (ga.len(), gw.len());
        {
            let s = out.as_mut_slice();
            chain_rate(&mut s[o(self.ga())..o(self.ga()) + na3], ga);
            chain_rate(&mut s[o(self.gw())..o(self.gw()) + nw3], gw);
        }
        if w.iter().any(|&v| v != 0.0) {
            let fw = self.noise_jacobian(x, &[]);
            out += fw * DVector::from_column_slice(w);
        }
        out
    }

    fn error_jacobian(&self, x: &NominalState, _u: &[f64]) -> DMatrix<f64> {
        let l = &self.layout;
        let ids = self.ids;
        let n = l.tangent_dim();
        let o = |b: usize| l.tangent_range(b).start;
        let mut f = DMatrix::zeros(n, n);
        let r = x.rotation(ids.r).matrix();
        let a = x.vec3(self.ga(), 0);
        let omega = x.vec3(self.gw(), 0);
        put_eye(&mut f, o(ids.p), o(ids.v), 3, 1.0);
        put(&mut f, o(ids.v), o(ids.r), &(-r * skew(&a)));
        put(&mut f, o(ids.v), o(self.ga()), r);
        put(&mut f, o(ids.r), o(ids.r), &(-skew(&omega)));
        put_eye(&mut f, o(ids.r), o(self.gw()), 3, 1.0);
        chain_jacobian(&mut f, o(self.ga()), self.accel.order());
        chain_jacobian(&mut f, o(self.gw()), self.gyro.order());
        f
    }

    fn noise_jacobian(&self, _x: &NominalState, _u: &[f64]) -> DMatrix<f64> {
        let l = &self.layout;
        let ids = self.ids;
        let o = |b: usize| l.tangent_range(b).start;
        let mut fw = DMatrix::zeros(l.tangent_dim(), self.noise_dim());
        put_eye(&mut fw, o(ids.ba), 0, 3, 1.0);
        put_eye(&mut fw, o(ids.bw), 3, 3, 1.0);
        let na3 = 3 * self.accel.order();
        put_eye(&mut fw, o(self.ga()), 6, na3, 1.0);
        put_eye(&mut fw, o(self.gw()), 6 + na3, 3 * self.gyro.order(), 1.0);
        fw
    }

    fn noise_intensity(&self) -> DMatrix<f64> {
        let m = self.noise_dim();
        let mut q = DMatrix::zeros(m, m);
        put_eye(&mut q, 0, 0, 3, self.q_ba);
        put_eye(&mut q, 3, 3, 3, self.q_bw);
        chain_intensity(&mut q, 6, &self.accel);
        chain_intensity(&mut q, 6 + 3 * self.accel.order(), &self.gyro);
        q
    }
}

/// Input formulation: `v̇ = R (a_m − b_a − n_a) + g`,
/// `Ṙ = R⌊ω_m − b_ω − n_ω⌋`, input `u = [a_m, ω_m]`.
///
/// Noise vector: `[n_a, n_ω, w_ba, w_bw]`, with the IMU white noises given as
/// spectral densities (per-sample variance times sample period).
#[derive(Clone, Debug)]
pub struct PosImuInputModel {
    layout: Arc<StateLayout>,
    ids: PosImuBlocks,
    accel_psd: f64,
    gyro_psd: f64,
    q_ba: f64,
    q_bw: f64,
    gravity: Vector3<f64>,
}

impl PosImuInputModel {
    pub fn new(accel_psd: f64, gyro_psd: f64, q_ba: f64, q_bw: f64) -> Result<Self> {
        if [accel_psd, gyro_psd, q_ba, q_bw].iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidInput("noise intensities must be non-negative".into()));
        }
        let (layout, ids) = pos_imu_layout(None)?;
        Ok(PosImuInputModel {
            layout,
            ids,
            accel_psd,
            gyro_psd,
            q_ba,
            q_bw,
            gravity: GRAVITY,
        })
    }

    pub fn with_gravity(mut self, g: Vector3<f64>) -> Self {
        self.gravity = g;
        self
    }

    pub fn blocks(&self) -> PosImuBlocks {
        self.ids
    }
}

impl ProcessModel for PosImuInputModel {
    fn layout(&self) -> &Arc<StateLayout> {
        &self.layout
    }

    fn input_dim(&self) -> usize {
        6
    }

    fn noise_dim(&self) -> usize {
        12
    }

    fn rate(&self, x: &NominalState, u: &[f64], w: &[f64]) -> DVector<f64> {
        let l = &self.layout;
        let ids = self.ids;
        let o = |b: usize| l.tangent_range(b).start;
        let r = x.rotation(ids.r).matrix();
        let a = v3(u, 0) - x.vec3(ids.ba, 0) - v3(w, 0);
        let omega = v3(u, 1) - x.vec3(ids.bw, 0) - v3(w, 1);
        let mut out = DVector::zeros(l.tangent_dim());
        out.rows_mut(o(ids.p), 3).copy_from_slice(x.vector(ids.v));
        out.rows_mut(o(ids.v), 3).copy_from(&(r * a + self.gravity));
        out.rows_mut(o(ids.r), 3).copy_from(&omega);
        out.rows_mut(o(ids.ba), 3).copy_from(&v3(w, 2));
        out.rows_mut(o(ids.bw), 3).copy_from(&v3(w, 3));
        out
    }

    fn error_jacobian(&self, x: &NominalState, u: &[f64]) -> DMatrix<f64> {
        let l = &self.layout;
        let ids = self.ids;
        let o = |b: usize| l.tangent_range(b).start;
        let n = l.tangent_dim();
        let mut f = DMatrix::zeros(n, n);
        let r = x.rotation(ids.r).matrix();
        let a = v3(u, 0) - x.vec3(ids.ba, 0);
        let omega = v3(u, 1) - x.vec3(ids.bw, 0);
        put_eye(&mut f, o(ids.p), o(ids.v), 3, 1.0);
        put(&mut f, o(ids.v), o(ids.r), &(-r * skew(&a)));
        put(&mut f, o(ids.v), o(ids.ba), &(-r));
        put(&mut f, o(ids.r), o(ids.r), &(-skew(&omega)));
        put_eye(&mut f, o(ids.r), o(ids.bw), 3, -1.0);
        f
    }

    fn noise_jacobian(&self, x: &NominalState, _u: &[f64]) -> DMatrix<f64> {
        let l = &self.layout;
        let ids = self.ids;
        let o = |b: usize| l.tangent_range(b).start;
        let mut fw = DMatrix::zeros(l.tangent_dim(), 12);
        put(&mut fw, o(ids.v), 0, &(-x.rotation(ids.r).matrix()));
        put_eye(&mut fw, o(ids.r), 3, 3, -1.0);
        put_eye(&mut fw, o(ids.ba), 6, 3, 1.0);
        put_eye(&mut fw, o(ids.bw), 9, 3, 1.0);
        fw
    }

    fn noise_intensity(&self) -> DMatrix<f64> {
        let mut q = DMatrix::zeros(12, 12);
        put_eye(&mut q, 0, 0, 3, self.accel_psd);
        put_eye(&mut q, 3, 3, 3, self.gyro_psd);
        put_eye(&mut q, 6, 6, 3, self.q_ba);
        put_eye(&mut q, 9, 9, 3, self.q_bw);
        q
    }
}

/// Position of the sensor at lever arm `c` and a body-frame direction
/// observation `Rᵀ e`: `z = [p + R c; Rᵀ e]`.
#[derive(Clone, Debug)]
pub struct PoseMeasurement {
    pub ids: PosImuBlocks,
    pub reference: Vector3<f64>,
    pub sigma_p: f64,
    pub sigma_m: f64,
}

impl MeasurementModel for PoseMeasurement {
    fn dim(&self) -> usize {
        6
    }

    fn predict(&self, x: &NominalState) -> DVector<f64> {
        let r = x.rotation(self.ids.r).matrix();
        let pos = x.vec3(self.ids.p, 0) + r * x.vec3(self.ids.c, 0);
        let dir = r.transpose() * self.reference;
        DVector::from_iterator(6, pos.iter().chain(dir.iter()).copied())
    }

    fn jacobian(&self, x: &NominalState) -> DMatrix<f64> {
        let l = x.layout();
        let o = |b: usize| l.tangent_range(b).start;
        let r = x.rotation(self.ids.r).matrix();
        let c = x.vec3(self.ids.c, 0);
        let mut h = DMatrix::zeros(6, l.tangent_dim());
        put_eye(&mut h, 0, o(self.ids.p), 3, 1.0);
        put(&mut h, 0, o(self.ids.r), &(-r * skew(&c)));
        put(&mut h, 0, o(self.ids.c), r);
        put(&mut h, 3, o(self.ids.r), &skew(&(r.transpose() * self.reference)));
        h
    }

    fn noise_covariance(&self) -> DMatrix<f64> {
        let mut r = DMatrix::zeros(6, 6);
        put_eye(&mut r, 0, 0, 3, self.sigma_p * self.sigma_p);
        put_eye(&mut r, 3, 3, 3, self.sigma_m * self.sigma_m);
        r
    }
}

/// IMU readings as measurements of the state formulation:
/// `z = [C γ_a + b_a; C γ_ω + b_ω]`.
#[derive(Clone, Debug)]
pub struct ImuMeasurement {
    pub ids: PosImuBlocks,
    pub sigma_a: f64,
    pub sigma_w: f64,
}

impl MeasurementModel for ImuMeasurement {
    fn dim(&self) -> usize {
        6
    }

    fn predict(&self, x: &NominalState) -> DVector<f64> {
        let ga = self.ids.ga.expect("IMU measurement needs the state formulation");
        let gw = self.ids.gw.expect("IMU measurement needs the state formulation");
        let a = x.vec3(ga, 0) + x.vec3(self.ids.ba, 0);
        let w = x.vec3(gw, 0) + x.vec3(self.ids.bw, 0);
        DVector::from_iterator(6, a.iter().chain(w.iter()).copied())
    }

    fn jacobian(&self, x: &NominalState) -> DMatrix<f64> {
        let l = x.layout();
        let o = |b: usize| l.tangent_range(b).start;
        let mut h = DMatrix::zeros(6, l.tangent_dim());
        put_eye(&mut h, 0, o(self.ids.ba), 3, 1.0);
        put_eye(&mut h, 0, o(self.ids.ga.expect("state formulation")), 3, 1.0);
        put_eye(&mut h, 3, o(self.ids.bw), 3, 1.0);
        put_eye(&mut h, 3, o(self.ids.gw.expect("state formulation")), 3, 1.0);
        h
    }

    fn noise_covariance(&self) -> DMatrix<f64> {
        let mut r = DMatrix::zeros(6, 6);
        put_eye(&mut r, 0, 0, 3, self.sigma_a * self.sigma_a);
        put_eye(&mut r, 3, 3, 3, self.sigma_w * self.sigma_w);
        r
    }
}

/// Block indices of the inter-IMU layout.
#[derive(Clone, Copy, Debug)]
pub struct InterImuBlocks {
    /// Relative accelerometer bias `b_a2 − R b_a1`.
    pub ba: usize,
    pub bw: usize,
    pub w: usize,
    pub c: usize,
    pub r: usize,
    /// Angular-acceleration chain.
    pub gt: usize,
    /// Chain of the (biased) IMU-1 specific acceleration.
    pub ga: usize,
}

/// Minimal inter-IMU model. IMU 1 measures `ω_m1 = ω + b_ω` and
/// `a_m1 = a` (its bias is absorbed into `a`); IMU 2, mounted at lever arm
/// `c` in the IMU-1 frame with relative rotation `R`, measures
/// `a_m2 = R (a + ⌊ω⌋² c + ⌊τ⌋ c) + b_a` with `τ = ω̇`.
///
/// Noise vector: `[w_ba, w_bw, w_γτ, w_γa]`.
#[derive(Clone, Debug)]
pub struct InterImuModel {
    layout: Arc<StateLayout>,
    ids: InterImuBlocks,
    tau: StatModel,
    accel: StatModel,
    q_ba: f64,
    q_bw: f64,
}

impl InterImuModel {
    pub fn new(tau: StatModel, accel: StatModel, q_ba: f64, q_bw: f64) -> Result<Self> {
        if !(q_ba >= 0.0 && q_bw >= 0.0) {
            return Err(Error::InvalidInput("bias random-walk intensities must be non-negative".into()));
        }
        let layout = StateLayout::new([
            ("b_a", BlockKind::Euclidean(3)),
            ("b_w", BlockKind::Euclidean(3)),
            ("w", BlockKind::Euclidean(3)),
            ("c", BlockKind::Euclidean(3)),
            ("R", BlockKind::Rotation),
            ("gamma_tau", BlockKind::Euclidean(3 * tau.order())),
            ("gamma_a", BlockKind::Euclidean(3 * accel.order())),
        ])?;
        Ok(InterImuModel {
            layout: Arc::new(layout),
            ids: InterImuBlocks {
                ba: 0,
                bw: 1,
                w: 2,
                c: 3,
                r: 4,
                gt: 5,
                ga: 6,
            },
            tau,
            accel,
            q_ba,
            q_bw,
        })
    }

    pub fn blocks(&self) -> InterImuBlocks {
        self.ids
    }
}

impl ProcessModel for InterImuModel {
    fn layout(&self) -> &Arc<StateLayout> {
        &self.layout
    }

    fn noise_dim(&self) -> usize {
        6 + 3 * (self.tau.order() + self.accel.order())
    }

    fn rate(&self, x: &NominalState, _u: &[f64], w: &[f64]) -> DVector<f64> {
        let l = &self.layout;
        let ids = self.ids;
        let o = |b: usize| l.tangent_range(b).start;
        let mut out = DVector::zeros(l.tangent_dim());
        let gt = x.vector(ids.gt);
        let ga = x.vector(ids.ga);
        out.rows_mut(o(ids.w), 3).copy_from(&v3(gt, 0));
        {
            let s = out.as_mut_slice();
            chain_rate(&mut s[o(ids.gt)..o(ids.gt) + gt.len()], gt);
            chain_rate(&mut s[o(ids.ga)..o(ids.ga) + ga.len()], ga);
        }
        if w.iter().any(|&v| v != 0.0) {
            out += self.noise_jacobian(x, &[]) * DVector::from_column_slice(w);
        }
        out
    }

    fn error_jacobian(&self, _x: &NominalState, _u: &[f64]) -> DMatrix<f64> {
        let l = &self.layout;
        let ids = self.ids;
        let o = |b: usize| l.tangent_range(b).start;
        let n = l.tangent_dim();
        let mut f = DMatrix::zeros(n, n);
        put_eye(&mut f, o(ids.w), o(ids.gt), 3, 1.0);
        chain_jacobian(&mut f, o(ids.gt), self.tau.order());
        chain_jacobian(&mut f, o(ids.ga), self.accel.order());
        f
    }

    fn noise_jacobian(&self, _x: &NominalState, _u: &[f64]) -> DMatrix<f64> {
        let l = &self.layout;
        let ids = self.ids;
        let o = |b: usize| l.tangent_range(b).start;
        let mut fw = DMatrix::zeros(l.tangent_dim(), self.noise_dim());
        put_eye(&mut fw, o(ids.ba), 0, 3, 1.0);
        put_eye(&mut fw, o(ids.bw), 3, 3, 1.0);
        let nt3 = 3 * self.tau.order();
        put_eye(&mut fw, o(ids.gt), 6, nt3, 1.0);
        put_eye(&mut fw, o(ids.ga), 6 + nt3, 3 * self.accel.order(), 1.0);
        fw
    }

    fn noise_intensity(&self) -> DMatrix<f64> {
        let m = self.noise_dim();
        let mut q = DMatrix::zeros(m, m);
        put_eye(&mut q, 0, 0, 3, self.q_ba);
        put_eye(&mut q, 3, 3, 3, self.q_bw);
        chain_intensity(&mut q, 6, &self.tau);
        chain_intensity(&mut q, 6 + 3 * self.tau.order(), &self.accel);
        q
    }
}

/// `z = [ω_m1; a_m1; a_m2]` of the minimal inter-IMU model.
#[derive(Clone, Debug)]
pub struct InterImuMeasurement {
    pub ids: InterImuBlocks,
    pub sigma_w1: f64,
    pub sigma_a1: f64,
    pub sigma_a2: f64,
}

/// Specific acceleration of a point at lever arm `c` relative to the
/// reference point: `a + ⌊ω⌋² c + ⌊τ⌋ c`.
pub fn lever_arm_acceleration(
    a: &Vector3<f64>,
    omega: &Vector3<f64>,
    tau: &Vector3<f64>,
    c: &Vector3<f64>,
) -> Vector3<f64> {
    a + omega.cross(&omega.cross(c)) + tau.cross(c)
}

impl MeasurementModel for InterImuMeasurement {
    fn dim(&self) -> usize {
        9
    }

    fn predict(&self, x: &NominalState) -> DVector<f64> {
        let ids = self.ids;
        let omega = x.vec3(ids.w, 0);
        let a = x.vec3(ids.ga, 0);
        let tau = x.vec3(ids.gt, 0);
        let c = x.vec3(ids.c, 0);
        let r = x.rotation(ids.r).matrix();
        let w1 = omega + x.vec3(ids.bw, 0);
        let a2 = r * lever_arm_acceleration(&a, &omega, &tau, &c) + x.vec3(ids.ba, 0);
        DVector::from_iterator(9, w1.iter().chain(a.iter()).chain(a2.iter()).copied())
    }

    fn jacobian(&self, x: &NominalState) -> DMatrix<f64> {
        let ids = self.ids;
        let l = x.layout();
        let o = |b: usize| l.tangent_range(b).start;
        let omega = x.vec3(ids.w, 0);
        let a = x.vec3(ids.ga, 0);
        let tau = x.vec3(ids.gt, 0);
        let c = x.vec3(ids.c, 0);
        let r = x.rotation(ids.r).matrix();
        let s = lever_arm_acceleration(&a, &omega, &tau, &c);
        let mut h = DMatrix::zeros(9, l.tangent_dim());
        put_eye(&mut h, 0, o(ids.w), 3, 1.0);
        put_eye(&mut h, 0, o(ids.bw), 3, 1.0);
        put_eye(&mut h, 3, o(ids.ga), 3, 1.0);
        put(&mut h, 6, o(ids.r), &(-r * skew(&s)));
        put_eye(&mut h, 6, o(ids.ba), 3, 1.0);
        put(&mut h, 6, o(ids.ga), r);
        put(&mut h, 6, o(ids.gt), &(-r * skew(&c)));
        let sw = skew(&omega);
        put(&mut h, 6, o(ids.c), &(r * (sw * sw + skew(&tau))));
        let dw = omega * c.transpose() + Matrix3::identity() * omega.dot(&c) - c * omega.transpose() * 2.0;
        put(&mut h, 6, o(ids.w), &(r * dw));
        h
    }

    fn noise_covariance(&self) -> DMatrix<f64> {
        let mut r = DMatrix::zeros(9, 9);
        put_eye(&mut r, 0, 0, 3, self.sigma_w1 * self.sigma_w1);
        put_eye(&mut r, 3, 3, 3, self.sigma_a1 * self.sigma_a1);
        put_eye(&mut r, 6, 6, 3, self.sigma_a2 * self.sigma_a2);
        r
    }
}

/// Result of [`check_minimal_invariance`].
#[derive(Clone, Debug)]
pub struct InvarianceReport {
    /// Dimension of the set of output-invariant offsets `x̄` of the
    /// non-minimal model.
    pub offset_dim: usize,
    /// Largest output difference between the runs from `x₀` and `x₀ + x̄`.
    pub max_output_difference: f64,
    /// Norm of the offset used.
    pub offset_norm: f64,
    /// Dimension of the offset set after the observable reduction.
    pub reduced_offset_dim: usize,
    /// States removed by the reduction.
    pub removed_states: usize,
}

fn offset_constraints(a: &DMatrix<f64>, c: &DMatrix<f64>, rot: &Matrix3<f64>, with_bias1: bool) -> DMatrix<f64> {
    // Unknowns [γ̄, (b̄_a1), b̄_a2]: A γ̄ = 0, C γ̄ + b̄_a1 = 0, R C γ̄ + b̄_a2 = 0.
    let ng = a.ncols();
    let nb = if with_bias1 { 6 } else { 3 };
    let mut m = DMatrix::zeros(ng + 6, ng + nb);
    m.view_mut((0, 0), (ng, ng)).copy_from(a);
    m.view_mut((ng, 0), (3, ng)).copy_from(c);
    let rotm = DMatrix::from_column_slice(3, 3, rot.as_slice());
    m.view_mut((ng + 3, 0), (3, ng)).copy_from(&(&rotm * c));
    if with_bias1 {
        put_eye(&mut m, ng, ng, 3, 1.0);
        put_eye(&mut m, ng + 3, ng + 3, 3, 1.0);
    } else {
        put_eye(&mut m, ng + 3, ng, 3, 1.0);
    }
    m
}

/// Builds the non-minimal inter-IMU model in which IMU 1 carries its own
/// accelerometer bias `b_a1` and the specific acceleration follows an
/// `accel_order` integrator chain, finds an offset `x̄` satisfying the
/// invariance constraints, and simulates both `x₀` and `x₀ + x̄` without
/// noise for `duration` seconds at 1 kHz comparing all outputs. It then
/// reduces the `(γ_a, b_a1)` subsystem to its observable part and reports
/// the dimension of the remaining offset set.
pub fn check_minimal_invariance(
    accel_order: usize,
    tau_order: usize,
    duration: f64,
    seed: u64,
) -> Result<InvarianceReport> {
    if accel_order == 0 || tau_order == 0 {
        return Err(Error::InvalidInput("chain orders must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rnd3 = |s: f64| Vector3::new(rng.gen_range(-s..s), rng.gen_range(-s..s), rng.gen_range(-s..s));
    let rot = Rotation::exp(&rnd3(1.0));
    let rotm = *rot.matrix();

    let i3 = DMatrix::<f64>::identity(3, 3);
    let shift = |n: usize| DMatrix::from_fn(n, n, |i, j| if j == i + 1 { 1.0 } else { 0.0 });
    let a_a = shift(accel_order).kronecker(&i3);
    let mut c_a = DMatrix::zeros(3, 3 * accel_order);
    put_eye(&mut c_a, 0, 0, 3, 1.0);
    let a_t = shift(tau_order).kronecker(&i3);

    let constraints = offset_constraints(&a_a, &c_a, &rotm, true);
    let (_, null) = linalg::row_and_null_space(&constraints, RANK_TOL)?;
    let offset_dim = null.ncols();

    // Initial state of the non-minimal model.
    let ng = 3 * accel_order;
    let gamma0 = DVector::from_fn(ng, |i, _| rnd3(1.0)[i % 3] * 0.5f64.powi((i / 3) as i32));
    let gamma_t0 = DVector::from_fn(3 * tau_order, |i, _| rnd3(1.0)[i % 3] * 0.5f64.powi((i / 3) as i32));
    let omega0 = rnd3(1.0);
    let bw1 = rnd3(0.05);
    let ba1 = rnd3(0.1);
    let ba2 = rnd3(0.1);
    let c = rnd3(0.2);

    let (mut max_diff, mut offset_norm) = (0.0f64, 0.0);
    if offset_dim > 0 {
        let xbar = null.column(0).into_owned();
        offset_norm = xbar.norm();
        let g_bar = xbar.rows(0, ng).into_owned();
        let b1_bar = Vector3::new(xbar[ng], xbar[ng + 1], xbar[ng + 2]);
        let b2_bar = Vector3::new(xbar[ng + 3], xbar[ng + 4], xbar[ng + 5]);

        let dt = 1e-3;
        let steps = (duration / dt).round() as usize;
        let outputs = |gamma0: &DVector<f64>, ba1: Vector3<f64>, ba2: Vector3<f64>| -> Vec<[f64; 9]> {
            let mut out = Vec::with_capacity(steps + 1);
            for k in 0..=steps {
                let t = k as f64 * dt;
                let g = (&a_a * t).exp() * gamma0;
                let gt = (&a_t * t).exp() * &gamma_t0;
                let tau = Vector3::new(gt[0], gt[1], gt[2]);
                // ω(t) = ω₀ + ∫ τ: integrate the nilpotent chain analytically.
                let mut omega = omega0;
                let mut fact = 1.0;
                for m in 0..tau_order {
                    fact *= (m + 1) as f64;
                    omega += Vector3::new(gamma_t0[3 * m], gamma_t0[3 * m + 1], gamma_t0[3 * m + 2])
                        * (t.powi(m as i32 + 1) / fact);
                }
                let a1 = Vector3::new(g[0], g[1], g[2]);
                let w1 = omega + bw1;
                let am1 = a1 + ba1;
                let am2 = rotm * lever_arm_acceleration(&a1, &omega, &tau, &c) + ba2;
                out.push([w1.x, w1.y, w1.z, am1.x, am1.y, am1.z, am2.x, am2.y, am2.z]);
            }
            out
        };
        let y0 = outputs(&gamma0, ba1, ba2);
        let y1 = outputs(&(&gamma0 + &g_bar), ba1 + b1_bar, ba2 + b2_bar);
        for (a, b) in y0.iter().zip(&y1) {
            for i in 0..9 {
                max_diff = max_diff.max((a[i] - b[i]).abs());
            }
        }
    }

    // Observable reduction of (γ_a, b_a1) with output a_m1 = C γ_a + b_a1.
    let mut a_sub = DMatrix::zeros(ng + 3, ng + 3);
    a_sub.view_mut((0, 0), (ng, ng)).copy_from(&a_a);
    let mut c_sub = DMatrix::zeros(3, ng + 3);
    c_sub.view_mut((0, 0), (3, ng)).copy_from(&c_a);
    put_eye(&mut c_sub, 0, ng, 3, 1.0);
    let sub = LtiSystem::new(a_sub, DMatrix::zeros(ng + 3, 1), c_sub)?;
    let red = kalman_observable_reduction(&sub)?;
    let reduced = offset_constraints(&red.system.a, &red.system.c, &rotm, false);
    let (_, null_r) = linalg::row_and_null_space(&reduced, RANK_TOL)?;

    Ok(InvarianceReport {
        offset_dim,
        max_output_difference: max_diff,
        offset_norm,
        reduced_offset_dim: null_r.ncols(),
        removed_states: red.removed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eskf::{validate_error_jacobian, validate_measurement_jacobian, validate_noise_jacobian};
    use crate::motion_model::make_integrator_model;

    fn random_state(layout: &Arc<StateLayout>, seed: u64) -> NominalState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = NominalState::origin(layout.clone());
        for (i, b) in layout.blocks().iter().enumerate() {
            match b.kind {
                BlockKind::Euclidean(n) => {
                    let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    x.set_vector(i, &v).unwrap();
                }
                BlockKind::Rotation => x.set_rotation(
                    i,
                    Rotation::exp(&Vector3::new(
                        rng.gen_range(-2.0..2.0),
                        rng.gen_range(-2.0..2.0),
                        rng.gen_range(-2.0..2.0),
                    )),
                ),
            }
        }
        x
    }

    fn state_model() -> PosImuStateModel {
        PosImuStateModel::new(
            make_integrator_model(4, &[1.0, 1.0, 1.0, 1.0]).unwrap(),
            make_integrator_model(3, &[1.0, 1.0, 1.0]).unwrap(),
            1e-6,
            1e-8,
        )
        .unwrap()
    }

    #[test]
    fn state_formulation_dimensions() {
        let m = state_model();
        assert_eq!(m.layout().tangent_dim(), 18 + 12 + 9);
        assert_eq!(m.noise_dim(), 6 + 21);
    }

    #[test]
    fn state_formulation_jacobians() {
        let m = state_model();
        for seed in 0..50 {
            let x = random_state(m.layout(), seed);
            let rep = validate_error_jacobian(&m, &x, &[], 1e-4).unwrap();
            assert!(rep.passed(), "{rep:?}");
            assert!(validate_noise_jacobian(&m, &x, &[], 1e-4).unwrap().passed());
            let pose = PoseMeasurement {
                ids: m.blocks(),
                reference: Vector3::x(),
                sigma_p: 0.005,
                sigma_m: 0.01,
            };
            assert!(validate_measurement_jacobian(&pose, &x, 1e-4).unwrap().passed());
            let imu = ImuMeasurement {
                ids: m.blocks(),
                sigma_a: 0.05,
                sigma_w: 0.005,
            };
            assert!(validate_measurement_jacobian(&imu, &x, 1e-4).unwrap().passed());
        }
    }

    #[test]
    fn input_formulation_jacobians() {
        let m = PosImuInputModel::new(2.5e-6, 2.5e-8, 1e-6, 1e-8).unwrap();
        let u = [0.3, -0.2, 9.7, 0.5, -1.0, 0.25];
        for seed in 0..50 {
            let x = random_state(m.layout(), seed);
            let rep = validate_error_jacobian(&m, &x, &u, 1e-4).unwrap();
            assert!(rep.passed(), "{rep:?}");
            assert!(validate_noise_jacobian(&m, &x, &u, 1e-4).unwrap().passed());
        }
    }

    #[test]
    fn inter_imu_jacobians() {
        let m = InterImuModel::new(
            make_integrator_model(4, &[1.0; 4]).unwrap(),
            make_integrator_model(4, &[1.0; 4]).unwrap(),
            1e-6,
            1e-8,
        )
        .unwrap();
        let meas = InterImuMeasurement {
            ids: m.blocks(),
            sigma_w1: 0.005,
            sigma_a1: 0.05,
            sigma_a2: 0.05,
        };
        for seed in 0..50 {
            let x = random_state(m.layout(), seed);
            assert!(validate_error_jacobian(&m, &x, &[], 1e-4).unwrap().passed());
            assert!(validate_noise_jacobian(&m, &x, &[], 1e-4).unwrap().passed());
            let rep = validate_measurement_jacobian(&meas, &x, 1e-4).unwrap();
            assert!(rep.passed(), "{rep:?}");
        }
    }

    #[test]
    fn non_minimal_model_has_invisible_offset() {
        let rep = check_minimal_invariance(1, 2, 10.0, 3).unwrap();
        assert_eq!(rep.offset_dim, 3);
        assert!(rep.max_output_difference < 1e-9, "{}", rep.max_output_difference);
        assert_eq!(rep.removed_states, 3);
        assert_eq!(rep.reduced_offset_dim, 0);
    }

    #[test]
    fn higher_order_chain_still_has_offset() {
        let rep = check_minimal_invariance(3, 3, 2.0, 5).unwrap();
        assert_eq!(rep.offset_dim, 3);
        assert!(rep.max_output_difference < 1e-9);
        assert_eq!(rep.reduced_offset_dim, 0);
    }

    fn pose(ids: PosImuBlocks) -> PoseMeasurement {
        PoseMeasurement {
            ids,
            reference: Vector3::x(),
            sigma_p: 0.005,
            sigma_m: 0.01,
        }
    }

    #[test]
    fn hover_position_includes_lever_arm() {
        let m = state_model();
        let mut x = NominalState::origin(m.layout().clone());
        x.set_vec3(0, 0, &Vector3::new(1.0, 2.0, 5.0));
        x.set_vec3(3, 0, &Vector3::new(0.5, 0.5, 0.5));
        let z = pose(m.blocks()).predict(&x);
        assert_eq!(z.rows(0, 3).as_slice(), &[1.5, 2.5, 5.5]);
    }

    #[test]
    fn quarter_turn_heading() {
        let m = state_model();
        let mut x = NominalState::origin(m.layout().clone());
        x.set_rotation(2, Rotation::exp(&Vector3::new(0.0, 0.0, std::f64::consts::FRAC_PI_2)));
        let z = pose(m.blocks()).predict(&x);
        for (got, want) in z.rows(3, 3).iter().zip([0.0, -1.0, 0.0]) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn input_hover_has_zero_acceleration() {
        let m = PosImuInputModel::new(0.0, 0.0, 0.0, 0.0).unwrap();
        let mut x = NominalState::origin(m.layout().clone());
        let rot = Rotation::exp(&Vector3::new(0.3, -0.2, 1.0));
        x.set_rotation(2, rot.clone());
        let am = -rot.matrix().transpose() * GRAVITY;
        let u = [am.x, am.y, am.z, 0.0, 0.0, 0.0];
        let r = m.rate(&x, &u, &[0.0; 12]);
        assert!(r.rows(3, 3).norm() < 1e-14);
    }

    #[test]
    fn constant_rate_full_turn_returns() {
        let m = PosImuInputModel::new(0.0, 0.0, 0.0, 0.0).unwrap();
        let x0 = NominalState::origin(m.layout().clone());
        let mut f = crate::eskf::Eskf::new(m, x0.clone(), DMatrix::identity(18, 18)).unwrap();
        let n = 1000;
        let dt = 2.0 * std::f64::consts::PI / n as f64;
        let u = [0.0, 0.0, 9.81, 0.0, 0.0, 1.0];
        for _ in 0..n {
            f.propagate(&u, dt).unwrap();
        }
        let back = x0.rotation(2).local(f.state().rotation(2));
        assert!(back.norm() < 1e-6, "{}", back.norm());
    }

    #[test]
    fn missing_input_sample_is_rejected() {
        let m = PosImuInputModel::new(0.0, 0.0, 0.0, 0.0).unwrap();
        let x0 = NominalState::origin(m.layout().clone());
        let mut f = crate::eskf::Eskf::new(m, x0, DMatrix::identity(18, 18)).unwrap();
        assert!(f.propagate(&[0.0, 0.0, 9.81], 0.01).is_err());
        assert!(f.propagate(&[], 0.01).is_err());
    }

    #[test]
    fn frozen_chains_match_input_formulation_step() {
        let sm = PosImuStateModel::new(
            make_integrator_model(1, &[1.0]).unwrap(),
            make_integrator_model(1, &[1.0]).unwrap(),
            0.0,
            0.0,
        )
        .unwrap();
        let im = PosImuInputModel::new(0.0, 0.0, 0.0, 0.0).unwrap();
        let xs = random_state(sm.layout(), 11);
        let a = xs.vec3(6, 0);
        let w = xs.vec3(7, 0);
        let mut xi = NominalState::origin(im.layout().clone());
        for b in [0, 1, 3] {
            xi.set_vector(b, xs.vector(b)).unwrap();
        }
        xi.set_rotation(2, xs.rotation(2).clone());
        let (ba, bw) = (xs.vec3(4, 0), xs.vec3(5, 0));
        let u = [a.x + ba.x, a.y + ba.y, a.z + ba.z, w.x + bw.x, w.y + bw.y, w.z + bw.z];
        xi.set_vec3(4, 0, &ba);
        xi.set_vec3(5, 0, &bw);
        let n_s = sm.layout().tangent_dim();
        let mut fs = crate::eskf::Eskf::new(sm, xs, DMatrix::identity(n_s, n_s)).unwrap();
        let mut fi = crate::eskf::Eskf::new(im, xi, DMatrix::identity(18, 18)).unwrap();
        fs.propagate(&[], 0.01).unwrap();
        fi.propagate(&u, 0.01).unwrap();
        for b in [0, 1, 3] {
            for (p, q) in fs.state().vector(b).iter().zip(fi.state().vector(b)) {
                assert!((p - q).abs() < 1e-10);
            }
        }
        assert!(fs.state().rotation(2).local(fi.state().rotation(2)).norm() < 1e-10);
    }

    fn inter_model() -> InterImuModel {
        InterImuModel::new(
            make_integrator_model(2, &[1.0; 2]).unwrap(),
            make_integrator_model(2, &[1.0; 2]).unwrap(),
            0.0,
            0.0,
        )
        .unwrap()
    }

    fn inter_meas(m: &InterImuModel) -> InterImuMeasurement {
        InterImuMeasurement {
            ids: m.blocks(),
            sigma_w1: 0.005,
            sigma_a1: 0.05,
            sigma_a2: 0.05,
        }
    }

    #[test]
    fn static_inter_imu_output() {
        let m = inter_model();
        let mut x = random_state(m.layout(), 2);
        x.set_vector(2, &[0.0; 3]).unwrap();
        x.set_vector(5, &[0.0; 6]).unwrap();
        let z = inter_meas(&m).predict(&x);
        let want = x.rotation(4).matrix() * x.vec3(6, 0) + x.vec3(0, 0);
        assert!((z.rows(6, 3) - want).norm() < 1e-14);
    }

    #[test]
    fn pure_spin_centripetal_term() {
        let (w, r) = (2.0, 0.3);
        let got = lever_arm_acceleration(&Vector3::zeros(), &Vector3::new(0.0, 0.0, w), &Vector3::zeros(), &Vector3::new(r, 0.0, 0.0));
        assert!((got - Vector3::new(-w * w * r, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn noiseless_inter_imu_residual_vanishes() {
        let m = inter_model();
        let meas = inter_meas(&m);
        let x = random_state(m.layout(), 9);
        let (omega, tau, a, c) = (x.vec3(2, 0), x.vec3(5, 0), x.vec3(6, 0), x.vec3(3, 0));
        let a2 = x.rotation(4).matrix() * lever_arm_acceleration(&a, &omega, &tau, &c) + x.vec3(0, 0);
        let w1 = omega + x.vec3(1, 0);
        let z = DVector::from_iterator(9, w1.iter().chain(a.iter()).chain(a2.iter()).copied());
        let res = meas.residual(&z, &meas.predict(&x));
        assert!(res.amax() < 1e-14);
    }
}
