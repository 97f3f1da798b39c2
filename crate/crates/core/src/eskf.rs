//! Error-state extended Kalman filter on `R^n x SO(3)^k`.
//!
//! The nominal state lives on the manifold and the error state in its
//! tangent space, with right-multiplicative attitude errors
//! `R = R̂·Exp(δθ)`. Models plug in through [`ProcessModel`] and
//! [`MeasurementModel`].

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Vector3};

use crate::error::{ensure_finite_slice, Error, Result};
use crate::linalg::symmetrize;
use crate::manifold::{chart_gradient, skew, BlockKind};

pub use crate::manifold::{NominalState, StateLayout};

/// Error-state covariance.
pub type Covariance = DMatrix<f64>;

/// Continuous-time dynamics `ẋ = f(x, u, w)` expressed in tangent
/// coordinates: Euclidean blocks report their time derivative and rotation
/// blocks their body-frame angular velocity (`Ṙ = R⌊ω⌋`).
pub trait ProcessModel {
    fn layout(&self) -> &Arc<StateLayout>;

    /// Length of the input vector `u` (0 for autonomous models).
    fn input_dim(&self) -> usize {
        0
    }

    fn noise_dim(&self) -> usize;

    /// Tangent-space rate at `x` for input `u` and process-noise sample `w`.
    fn rate(&self, x: &NominalState, u: &[f64], w: &[f64]) -> DVector<f64>;

    /// Error-state Jacobian `F_x` with `δẋ = F_x δx + F_w w`.
    fn error_jacobian(&self, x: &NominalState, u: &[f64]) -> DMatrix<f64>;

    /// Noise Jacobian `F_w`.
    fn noise_jacobian(&self, x: &NominalState, u: &[f64]) -> DMatrix<f64>;

    /// Power spectral density of `w` (continuous-time intensity).
    fn noise_intensity(&self) -> DMatrix<f64>;

    /// Covariance of the step-averaged noise over an interval `dt`,
    /// `Q_c / dt`, so that `Φ_w Q Φ_wᵀ` with `Φ_w = F_w dt` adds
    /// `F_w Q_c F_wᵀ dt` to the error covariance.
    fn process_noise(&self, dt: f64) -> DMatrix<f64> {
        self.noise_intensity() / dt
    }
}

/// Measurement `z = h(x) + v`, `v ~ N(0, R)`.
pub trait MeasurementModel {
    fn dim(&self) -> usize;

    fn predict(&self, x: &NominalState) -> DVector<f64>;

    /// `H = ∂h(x ⊞ δ)/∂δ` at `δ = 0`.
    fn jacobian(&self, x: &NominalState) -> DMatrix<f64>;

    fn noise_covariance(&self) -> DMatrix<f64>;

    /// Innovation `z ⊟ ẑ`.
    fn residual(&self, z: &DVector<f64>, predicted: &DVector<f64>) -> DVector<f64> {
        z - predicted
    }
}

/// Innovation statistics from one update.
#[derive(Clone, Debug)]
pub struct UpdateInfo {
    pub innovation: DVector<f64>,
    pub innovation_covariance: DMatrix<f64>,
    /// Normalised innovation squared `rᵀ S⁻¹ r`.
    pub nis: f64,
}

pub struct Eskf<M: ProcessModel> {
    model: M,
    x: NominalState,
    p: Covariance,
    joseph: bool,
}

impl<M: ProcessModel> Eskf<M> {
    pub fn new(model: M, x0: NominalState, p0: Covariance) -> Result<Self> {
        let n = model.layout().tangent_dim();
        if x0.layout().as_ref() != model.layout().as_ref() {
            return Err(Error::InvalidInput("initial state layout differs from model layout".into()));
        }
        if p0.nrows() != n || p0.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: "initial covariance",
                expected: n,
                actual: p0.nrows(),
            });
        }
        if p0.clone().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite("initial covariance".into()));
        }
        Ok(Eskf {
            model,
            x: x0,
            p: p0,
            joseph: false,
        })
    }

    /// Use the Joseph form `(I − KH) P (I − KH)ᵀ + K R Kᵀ` in updates.
    pub fn with_joseph(mut self, joseph: bool) -> Self {
        self.joseph = joseph;
        self
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn state(&self) -> &NominalState {
        &self.x
    }

    pub fn covariance(&self) -> &Covariance {
        &self.p
    }

    pub fn set_state(&mut self, x: NominalState) {
        self.x = x;
    }

    /// Advances nominal state and covariance by `dt` with input `u` held
    /// constant over the step.
    ///
    /// The nominal state uses a fourth-order Runge–Kutta step in tangent
    /// coordinates (rotation blocks advance as `R·Exp(ω̄ dt)` with the RK
    /// average `ω̄`); the covariance uses `Φ_x = I + F_x dt`,
    /// `Φ_w = F_w dt`.
    pub fn propagate(&mut self, u: &[f64], dt: f64) -> Result<()> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidInput(format!("propagation step must be positive, got {dt}")));
        }
        if u.len() != self.model.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "propagation input",
                expected: self.model.input_dim(),
                actual: u.len(),
            });
        }
        ensure_finite_slice("propagation input", u)?;

        let n = self.model.layout().tangent_dim();
        let f = self.model.error_jacobian(&self.x, u);
        let fw = self.model.noise_jacobian(&self.x, u);
        let q = self.model.process_noise(dt);

        let w0 = vec![0.0; self.model.noise_dim()];
        let x = &self.x;
        let k1 = self.model.rate(x, u, &w0);
        let k2 = self.model.rate(&x.boxplus(&(&k1 * (0.5 * dt))), u, &w0);
        let k3 = self.model.rate(&x.boxplus(&(&k2 * (0.5 * dt))), u, &w0);
        let k4 = self.model.rate(&x.boxplus(&(&k3 * dt)), u, &w0);
        let step = (k1 + (k2 + k3) * 2.0 + k4) * (dt / 6.0);
        let next = self.x.boxplus(&step);
        if !next.is_finite() {
            return Err(Error::NonFinite("propagated nominal state".into()));
        }

        // Φ P Φᵀ = P + dt (F P + (F P)ᵀ) + dt² F P Fᵀ
        let fp = &f * &self.p;
        let mut p = &self.p + (&fp + fp.transpose()) * dt + (&fp * f.transpose()) * (dt * dt);
        let phi_w = fw * dt;
        p += &phi_w * q * phi_w.transpose();
        symmetrize(&mut p);
        if !p.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("propagated covariance".into()));
        }
        debug_assert_eq!(p.nrows(), n);
        self.x = next;
        self.p = p;
        Ok(())
    }

    /// Kalman update with measurement `z`, followed by injection of the
    /// error estimate into the nominal state.
    pub fn update<Z: MeasurementModel + ?Sized>(&mut self, meas: &Z, z: &DVector<f64>) -> Result<UpdateInfo> {
        if z.len() != meas.dim() {
            return Err(Error::DimensionMismatch {
                context: "measurement",
                expected: meas.dim(),
                actual: z.len(),
            });
        }
        ensure_finite_slice("measurement", z.as_slice())?;
        let h = meas.jacobian(&self.x);
        let r = meas.noise_covariance();
        let zhat = meas.predict(&self.x);
        let innovation = meas.residual(z, &zhat);

        let pht = &self.p * h.transpose();
        let mut s = &h * &pht + &r;
        symmetrize(&mut s);
        let chol = s
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite("innovation covariance".into()))?;
        // K = P Hᵀ S⁻¹
        let k = chol.solve(&pht.transpose()).transpose();
        let dx = &k * &innovation;
        ensure_finite_slice("error-state correction", dx.as_slice())?;
        let nis = innovation.dot(&chol.solve(&innovation));

        let mut p = if self.joseph {
            let n = self.p.nrows();
            let ikh = DMatrix::identity(n, n) - &k * &h;
            &ikh * &self.p * ikh.transpose() + &k * &r * k.transpose()
        } else {
            &self.p - &k * &s * k.transpose()
        };
        symmetrize(&mut p);
        self.x.boxplus_mut(dx.as_slice());
        self.p = p;
        Ok(UpdateInfo {
            innovation,
            innovation_covariance: s,
            nis,
        })
    }

    /// One CSV row: time, tangent coordinates of the nominal state and the
    /// standard deviations of the error state.
    pub fn snapshot_row(&self, t: f64) -> Vec<f64> {
        let mut row = Vec::with_capacity(1 + 2 * self.p.nrows());
        row.push(t);
        row.extend(self.x.to_row());
        row.extend(self.p.diagonal().iter().map(|v| v.max(0.0).sqrt()));
        row
    }

    pub fn snapshot_header(&self) -> Vec<String> {
        let names = self.x.layout().column_names();
        let mut h = vec!["t".to_string()];
        h.extend(names.iter().cloned());
        h.extend(names.iter().map(|n| format!("sigma_{n}")));
        h
    }
}

/// Outcome of comparing analytic Jacobians with finite differences.
#[derive(Clone, Debug)]
pub struct JacobianReport {
    /// `max |analytic − numeric| / max(1, |numeric|)` over all entries.
    pub max_error: f64,
    /// Entry `(row, col)` attaining the maximum.
    pub worst: (usize, usize),
    pub tolerance: f64,
}

impl JacobianReport {
    pub fn passed(&self) -> bool {
        self.max_error <= self.tolerance
    }
}

fn compare(analytic: &DMatrix<f64>, numeric: &DMatrix<f64>, tol: f64) -> Result<JacobianReport> {
    if analytic.shape() != numeric.shape() {
        return Err(Error::InvalidInput(format!(
            "Jacobian shape {:?} differs from finite-difference shape {:?}",
            analytic.shape(),
            numeric.shape()
        )));
    }
    let mut report = JacobianReport {
        max_error: 0.0,
        worst: (0, 0),
        tolerance: tol,
    };
    for i in 0..analytic.nrows() {
        for j in 0..analytic.ncols() {
            let e = (analytic[(i, j)] - numeric[(i, j)]).abs() / numeric[(i, j)].abs().max(1.0);
            if !(e <= report.max_error) {
                report.max_error = e;
                report.worst = (i, j);
            }
        }
    }
    Ok(report)
}

/// Default finite-difference step for Jacobian validation.
pub const JACOBIAN_FD_STEP: f64 = 1e-5;

/// Checks `F_x` against a chart-gradient of the tangent rate. For rotation
/// blocks the error dynamics `δθ̇ = δω − ⌊ω̂⌋ δθ` add `−⌊ω̂⌋` on the diagonal
/// block to the gradient of the body rate.
pub fn validate_error_jacobian<M: ProcessModel>(
    model: &M,
    x: &NominalState,
    u: &[f64],
    tol: f64,
) -> Result<JacobianReport> {
    let w0 = vec![0.0; model.noise_dim()];
    let mut numeric = chart_gradient(|s| model.rate(s, u, &w0), x, JACOBIAN_FD_STEP)?;
    let rate = model.rate(x, u, &w0);
    let layout = model.layout();
    for (i, b) in layout.blocks().iter().enumerate() {
        if b.kind == BlockKind::Rotation {
            let r = layout.tangent_range(i);
            let w = Vector3::new(rate[r.start], rate[r.start + 1], rate[r.start + 2]);
            let mut blk = numeric.view_mut((r.start, r.start), (3, 3));
            blk -= skew(&w);
        }
    }
    compare(&model.error_jacobian(x, u), &numeric, tol)
}

/// Checks `F_w` against central differences of the rate in `w`.
pub fn validate_noise_jacobian<M: ProcessModel>(
    model: &M,
    x: &NominalState,
    u: &[f64],
    tol: f64,
) -> Result<JacobianReport> {
    let m = model.noise_dim();
    let n = model.layout().tangent_dim();
    let h = JACOBIAN_FD_STEP;
    let mut numeric = DMatrix::zeros(n, m);
    let mut w = vec![0.0; m];
    for j in 0..m {
        w[j] = h;
        let plus = model.rate(x, u, &w);
        w[j] = -h;
        let minus = model.rate(x, u, &w);
        w[j] = 0.0;
        numeric.set_column(j, &((plus - minus) / (2.0 * h)));
    }
    compare(&model.noise_jacobian(x, u), &numeric, tol)
}

/// Checks a measurement Jacobian against the chart gradient of `h`.
pub fn validate_measurement_jacobian<Z: MeasurementModel + ?Sized>(
    meas: &Z,
    x: &NominalState,
    tol: f64,
) -> Result<JacobianReport> {
    let numeric = chart_gradient(|s| meas.predict(s), x, JACOBIAN_FD_STEP)?;
    compare(&meas.jacobian(x), &numeric, tol)
}

/// Linear process `ẋ = A x + B u + G w` on a single Euclidean block with
/// white noise of intensity `Q_c`.
#[derive(Clone, Debug)]
pub struct LinearProcess {
    layout: Arc<StateLayout>,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub qc: DMatrix<f64>,
}

impl LinearProcess {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, g: DMatrix<f64>, qc: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || b.nrows() != n || g.nrows() != n || qc.shape() != (g.ncols(), g.ncols()) {
            return Err(Error::InvalidInput(format!(
                "linear process needs square A, B and G with {n} rows and Q matching G, got A {:?}, B {:?}, G {:?}, Q {:?}",
                a.shape(),
                b.shape(),
                g.shape(),
                qc.shape()
            )));
        }
        let layout = Arc::new(StateLayout::new([("x", BlockKind::Euclidean(n))])?);
        Ok(LinearProcess { layout, a, b, g, qc })
    }
}

impl ProcessModel for LinearProcess {
    fn layout(&self) -> &Arc<StateLayout> {
        &self.layout
    }

    fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    fn noise_dim(&self) -> usize {
        self.g.ncols()
    }

    fn rate(&self, x: &NominalState, u: &[f64], w: &[f64]) -> DVector<f64> {
        let xv = DVector::from_column_slice(x.vector(0));
        &self.a * xv + &self.b * DVector::from_column_slice(u) + &self.g * DVector::from_column_slice(w)
    }

    fn error_jacobian(&self, _x: &NominalState, _u: &[f64]) -> DMatrix<f64> {
        self.a.clone()
    }

    fn noise_jacobian(&self, _x: &NominalState, _u: &[f64]) -> DMatrix<f64> {
        self.g.clone()
    }

    fn noise_intensity(&self) -> DMatrix<f64> {
        self.qc.clone()
    }
}

/// Linear measurement `z = H x + v`, `v ~ N(0, R)`.
#[derive(Clone, Debug)]
pub struct LinearMeasurement {
    pub h: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl MeasurementModel for LinearMeasurement {
    fn dim(&self) -> usize {
        self.h.nrows()
    }

    fn predict(&self, x: &NominalState) -> DVector<f64> {
        &self.h * DVector::from_column_slice(x.vector(0))
    }

    fn jacobian(&self, _x: &NominalState) -> DMatrix<f64> {
        self.h.clone()
    }

    fn noise_covariance(&self) -> DMatrix<f64> {
        self.r.clone()
    }
}
