//! Continuous-time LTI systems: observability, series concatenation of a
//! plant with a stochastic driver, stationary Kalman gains, closed-loop
//! transfer functions, H2 norms and first-order low-pass baselines.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, RANK_TOL};

/// `ẋ = A x + B w`, `y = C x + v` with noise intensities `Q` (for `w`) and
/// `R` (for `v`).
#[derive(Clone, Debug, PartialEq)]
pub struct LtiSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub q: Option<DMatrix<f64>>,
    pub r: Option<DMatrix<f64>>,
}

impl LtiSystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: "LtiSystem A (square)",
                expected: n,
                actual: a.ncols(),
            });
        }
        if b.nrows() != n {
            return Err(Error::DimensionMismatch {
                context: "LtiSystem B rows",
                expected: n,
                actual: b.nrows(),
            });
        }
        if c.ncols() != n {
            return Err(Error::DimensionMismatch {
                context: "LtiSystem C columns",
                expected: n,
                actual: c.ncols(),
            });
        }
        let all = a.iter().chain(b.iter()).chain(c.iter());
        if !all.into_iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("LtiSystem matrices".into()));
        }
        Ok(LtiSystem {
            a,
            b,
            c,
            q: None,
            r: None,
        })
    }

    pub fn with_noise(mut self, q: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        if q.nrows() != self.b.ncols() || q.ncols() != self.b.ncols() {
            return Err(Error::DimensionMismatch {
                context: "LtiSystem Q",
                expected: self.b.ncols(),
                actual: q.nrows(),
            });
        }
        if r.nrows() != self.c.nrows() || r.ncols() != self.c.nrows() {
            return Err(Error::DimensionMismatch {
                context: "LtiSystem R",
                expected: self.c.nrows(),
                actual: r.nrows(),
            });
        }
        self.q = Some(q);
        self.r = Some(r);
        Ok(self)
    }

    pub fn states(&self) -> usize {
        self.a.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }
}

/// `[C; CA; …; CA^{n-1}]`.
pub fn observability_matrix(sys: &LtiSystem) -> DMatrix<f64> {
    let n = sys.states();
    let p = sys.outputs();
    let mut o = DMatrix::zeros(n * p, n);
    let mut block = sys.c.clone();
    for k in 0..n {
        o.view_mut((k * p, 0), (p, n)).copy_from(&block);
        block = &block * &sys.a;
    }
    o
}

/// Whether `(A, C)` is observable at the default rank tolerance.
pub fn is_observable(sys: &LtiSystem) -> Result<bool> {
    Ok(linalg::rank(&observability_matrix(sys), RANK_TOL)?.is_full_column_rank())
}

/// Series concatenation of a plant driven by the output of a stochastic
/// driver. The composite state is `[x_plant; x_driver]` and the noise enters
/// through the driver only. With `expose_driver` the driver output is
/// appended to the measured outputs.
pub fn series_concat(plant: &LtiSystem, driver: &LtiSystem, expose_driver: bool) -> Result<LtiSystem> {
    if plant.inputs() != driver.outputs() {
        return Err(Error::DimensionMismatch {
            context: "series_concat plant inputs vs driver outputs",
            expected: plant.inputs(),
            actual: driver.outputs(),
        });
    }
    let (ns, ng) = (plant.states(), driver.states());
    let n = ns + ng;
    let mut a = DMatrix::zeros(n, n);
    a.view_mut((0, 0), (ns, ns)).copy_from(&plant.a);
    a.view_mut((0, ns), (ns, ng)).copy_from(&(&plant.b * &driver.c));
    a.view_mut((ns, ns), (ng, ng)).copy_from(&driver.a);
    let mut b = DMatrix::zeros(n, driver.inputs());
    b.view_mut((ns, 0), (ng, driver.inputs())).copy_from(&driver.b);
    let c = if expose_driver {
        let mut c = DMatrix::zeros(plant.outputs() + driver.outputs(), n);
        c.view_mut((0, 0), (plant.outputs(), ns)).copy_from(&plant.c);
        c.view_mut((plant.outputs(), ns), (driver.outputs(), ng))
            .copy_from(&driver.c);
        c
    } else {
        let mut c = DMatrix::zeros(plant.outputs(), n);
        c.view_mut((0, 0), (plant.outputs(), ns)).copy_from(&plant.c);
        c
    };
    let mut sys = LtiSystem::new(a, b, c)?;
    sys.q = driver.q.clone();
    sys.r = match (&plant.r, &driver.r, expose_driver) {
        (Some(rp), Some(rd), true) => Some(linalg::block_diag(&[rp, rd])),
        (Some(rp), _, false) => Some(rp.clone()),
        _ => None,
    };
    Ok(sys)
}

/// Outcome of [`concatenation_probe`].
#[derive(Clone, Debug, PartialEq)]
pub struct ConcatenationProbe {
    pub pairs: usize,
    pub observable: usize,
}

fn random_observable(rng: &mut rand_chacha::ChaCha8Rng, n: usize, m: usize, p: usize) -> Result<LtiSystem> {
    use rand::Rng;
    loop {
        let mut g = |r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0));
        let sys = LtiSystem::new(g(n, n), g(n, m), g(p, n))?;
        if is_observable(&sys)? {
            return Ok(sys);
        }
    }
}

/// Draws `pairs` random observable (plant, driver) pairs with matching
/// plant-input/driver-output width and counts how many series
/// concatenations with the driver output exposed are observable.
pub fn concatenation_probe(pairs: usize, seed: u64) -> Result<ConcatenationProbe> {
    use rand::{Rng, SeedableRng};
    let mut observable = 0;
    for k in 0..pairs {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        let width = rng.gen_range(1..=2);
        let (ns, ng) = (rng.gen_range(1..=4), rng.gen_range(1..=4));
        let ps = rng.gen_range(1..=2);
        let plant = random_observable(&mut rng, ns, width, ps)?;
        let driver = random_observable(&mut rng, ng, width, width)?;
        if is_observable(&series_concat(&plant, &driver, true)?)? {
            observable += 1;
        }
    }
    Ok(ConcatenationProbe { pairs, observable })
}

/// Converged stationary Kalman gain and the associated covariances.
#[derive(Clone, Debug)]
pub struct StationaryGain {
    /// Continuous-time gain `L∞`.
    pub gain: DMatrix<f64>,
    /// Converged prior covariance of the discretised recursion.
    pub prior: DMatrix<f64>,
    /// Converged posterior covariance of the discretised recursion.
    pub posterior: DMatrix<f64>,
    pub iterations: usize,
}

const RICCATI_MAX_ITER: usize = 1_000_000;
const RICCATI_TOL: f64 = 1e-12;

fn cholesky_solve_right(m: &DMatrix<f64>, s: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    // Returns m · s⁻¹ for symmetric positive definite s.
    let chol = s
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite(what.to_string()))?;
    Ok(chol.solve(&m.transpose()).transpose())
}

/// Stationary Kalman gain of `sys` by iterating the Riccati recursion of its
/// Euler discretisation at step `dt` until the relative change of the
/// covariance drops below `1e-12`.
///
/// The prior and posterior covariances of the discrete recursion bracket
/// the continuous-time solution with `O(dt)` errors of opposite sign; their
/// mean is `O(dt²)`-accurate and is used to form `L∞ = P Cᵀ R⁻¹`.
pub fn stationary_kalman_gain(sys: &LtiSystem, dt: f64) -> Result<StationaryGain> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
    }
    let q = sys
        .q
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("system has no process noise intensity Q".into()))?;
    let r = sys
        .r
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("system has no measurement noise intensity R".into()))?;
    if r.clone().cholesky().is_none() {
        return Err(Error::NotPositiveDefinite("measurement noise R".into()));
    }
    if q.symmetric_eigenvalues().iter().any(|&e| e < -1e-12 * q.norm().max(1.0)) {
        return Err(Error::InvalidInput("process noise Q is not positive semidefinite".into()));
    }
    let n = sys.states();
    let ad = DMatrix::identity(n, n) + &sys.a * dt;
    let qd = &sys.b * q * sys.b.transpose() * dt;
    let rd = r / dt;
    let ct = sys.c.transpose();

    let mut prior = DMatrix::identity(n, n);
    for it in 1..=RICCATI_MAX_ITER {
        let s = &sys.c * &prior * &ct + &rd;
        let k = cholesky_solve_right(&(&prior * &ct), &s, "innovation covariance")?;
        let mut post = &prior - &k * &sys.c * &prior;
        linalg::symmetrize(&mut post);
        let mut next = &ad * &post * ad.transpose() + &qd;
        linalg::symmetrize(&mut next);
        let change = (&next - &prior).norm();
        let scale = prior.norm();
        if !change.is_finite() || scale > 1e15 {
            return Err(Error::Numerical(
                "Riccati recursion diverged; the pair (A, C) is likely not detectable".into(),
            ));
        }
        prior = next;
        if change < RICCATI_TOL * scale {
            let s = &sys.c * &prior * &ct + &rd;
            let k = cholesky_solve_right(&(&prior * &ct), &s, "innovation covariance")?;
            let mut posterior = &prior - &k * &sys.c * &prior;
            linalg::symmetrize(&mut posterior);
            let mid = (&prior + &posterior) * 0.5;
            let gain = cholesky_solve_right(&(&mid * &ct), r, "measurement noise R")?;
            return Ok(StationaryGain {
                gain,
                prior,
                posterior,
                iterations: it,
            });
        }
    }
    Err(Error::NotConverged(format!(
        "Riccati recursion after {RICCATI_MAX_ITER} iterations"
    )))
}

/// State-space realisation `G(s) = C (sI − A)⁻¹ B + D`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferFunction {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

impl TransferFunction {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || b.nrows() != n || c.ncols() != n {
            return Err(Error::InvalidInput("inconsistent realisation dimensions".into()));
        }
        if d.nrows() != c.nrows() || d.ncols() != b.ncols() {
            return Err(Error::InvalidInput("feedthrough D has wrong shape".into()));
        }
        Ok(TransferFunction { a, b, c, d })
    }

    /// First-order low-pass `1 / (1 + k s)`.
    pub fn first_order_lowpass(k: f64) -> Result<Self> {
        if !(k.is_finite() && k > 0.0) {
            return Err(Error::InvalidInput(format!("time constant must be positive, got {k}")));
        }
        TransferFunction::new(
            DMatrix::from_element(1, 1, -1.0 / k),
            DMatrix::from_element(1, 1, 1.0 / k),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::zeros(1, 1),
        )
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn is_siso(&self) -> bool {
        self.b.ncols() == 1 && self.c.nrows() == 1
    }

    /// Frequency response at `s = jω`.
    pub fn eval(&self, omega: f64) -> Result<DMatrix<Complex64>> {
        let n = self.order();
        let s = Complex64::new(0.0, omega);
        let m = DMatrix::<Complex64>::from_fn(n, n, |i, j| {
            let diag = if i == j { s } else { Complex64::new(0.0, 0.0) };
            diag - Complex64::new(self.a[(i, j)], 0.0)
        });
        let bc = self.b.map(|v| Complex64::new(v, 0.0));
        let x = m
            .lu()
            .solve(&bc)
            .ok_or_else(|| Error::Numerical(format!("sI − A is singular at ω = {omega}")))?;
        let cc = self.c.map(|v| Complex64::new(v, 0.0));
        Ok(cc * x + self.d.map(|v| Complex64::new(v, 0.0)))
    }

    pub fn eval_siso(&self, omega: f64) -> Result<Complex64> {
        if !self.is_siso() {
            return Err(Error::InvalidInput("transfer function is not SISO".into()));
        }
        Ok(self.eval(omega)?[(0, 0)])
    }

    /// Whether every eigenvalue of `A` has negative real part.
    pub fn is_stable(&self) -> bool {
        self.order() == 0 || self.a.complex_eigenvalues().iter().all(|e| e.re < 0.0)
    }

    fn pole_magnitudes(&self) -> Vec<f64> {
        if self.order() == 0 {
            return Vec::new();
        }
        self.a
            .complex_eigenvalues()
            .iter()
            .map(|e| e.norm())
            .filter(|m| *m > 0.0)
            .collect()
    }

    /// Parallel sum `G₁ + G₂`.
    pub fn add(&self, other: &TransferFunction) -> Result<TransferFunction> {
        if self.b.ncols() != other.b.ncols() || self.c.nrows() != other.c.nrows() {
            return Err(Error::InvalidInput("parallel sum needs equal I/O dimensions".into()));
        }
        let a = linalg::block_diag(&[&self.a, &other.a]);
        let mut b = DMatrix::zeros(a.nrows(), self.b.ncols());
        b.rows_mut(0, self.order()).copy_from(&self.b);
        b.rows_mut(self.order(), other.order()).copy_from(&other.b);
        let mut c = DMatrix::zeros(self.c.nrows(), a.nrows());
        c.columns_mut(0, self.order()).copy_from(&self.c);
        c.columns_mut(self.order(), other.order()).copy_from(&other.c);
        TransferFunction::new(a, b, c, &self.d + &other.d)
    }

    /// Series with an integrator at the output, `G(s)/s`.
    pub fn integrate(&self) -> Result<TransferFunction> {
        let (n, m, p) = (self.order(), self.b.ncols(), self.c.nrows());
        let mut a = DMatrix::zeros(n + p, n + p);
        a.view_mut((0, 0), (n, n)).copy_from(&self.a);
        a.view_mut((n, 0), (p, n)).copy_from(&self.c);
        let mut b = DMatrix::zeros(n + p, m);
        b.rows_mut(0, n).copy_from(&self.b);
        b.rows_mut(n, p).copy_from(&self.d);
        let mut c = DMatrix::zeros(p, n + p);
        c.view_mut((0, n), (p, p)).copy_from(&DMatrix::identity(p, p));
        TransferFunction::new(a, b, c, DMatrix::zeros(p, m))
    }

    /// Series composition `other(s) · self(s)` (self first).
    pub fn then(&self, other: &TransferFunction) -> Result<TransferFunction> {
        if other.b.ncols() != self.c.nrows() {
            return Err(Error::InvalidInput("series composition dimension mismatch".into()));
        }
        let (n1, n2) = (self.order(), other.order());
        let mut a = DMatrix::zeros(n1 + n2, n1 + n2);
        a.view_mut((0, 0), (n1, n1)).copy_from(&self.a);
        a.view_mut((n1, 0), (n2, n1)).copy_from(&(&other.b * &self.c));
        a.view_mut((n1, n1), (n2, n2)).copy_from(&other.a);
        let mut b = DMatrix::zeros(n1 + n2, self.b.ncols());
        b.rows_mut(0, n1).copy_from(&self.b);
        b.rows_mut(n1, n2).copy_from(&(&other.b * &self.d));
        let mut c = DMatrix::zeros(other.c.nrows(), n1 + n2);
        c.columns_mut(0, n1).copy_from(&(&other.d * &self.c));
        c.columns_mut(n1, n2).copy_from(&other.c);
        TransferFunction::new(a, b, c, &other.d * &self.d)
    }
}

/// Closed-loop transfer functions from each measurement channel to state
/// component `pick_row`: column `j` of `e_pickᵀ (sI − A + L C)⁻¹ L`.
pub fn transfer_functions(
    sys: &LtiSystem,
    gain: &DMatrix<f64>,
    pick_row: usize,
) -> Result<Vec<TransferFunction>> {
    let n = sys.states();
    if pick_row >= n {
        return Err(Error::InvalidInput(format!("pick_row {pick_row} out of range for {n} states")));
    }
    if gain.nrows() != n || gain.ncols() != sys.outputs() {
        return Err(Error::InvalidInput("gain has wrong shape".into()));
    }
    let acl = &sys.a - gain * &sys.c;
    let probe = TransferFunction::new(acl.clone(), gain.clone(), DMatrix::zeros(1, n), DMatrix::zeros(1, gain.ncols()))?;
    if !probe.is_stable() {
        return Err(Error::Unstable("closed-loop estimator A − L C".into()));
    }
    let mut pick = DMatrix::zeros(1, n);
    pick[(0, pick_row)] = 1.0;
    (0..gain.ncols())
        .map(|j| {
            TransferFunction::new(
                acl.clone(),
                gain.columns(j, 1).into_owned(),
                pick.clone(),
                DMatrix::zeros(1, 1),
            )
        })
        .collect()
}

/// Frequency grid used by the H2 quadrature: log-spaced, covering at least
/// `[1e-3, 1e5]` rad/s and three decades around every pole.
const H2_GRID_POINTS: usize = 8192;

/// `‖G‖₂` by trapezoidal quadrature of `(1/π)∫₀^∞ ‖G(jω)‖_F² dω` on a log grid,
/// with analytic tail corrections for a flat low end and a `1/ω²` high end.
pub fn h2_norm_quadrature(tf: &TransferFunction) -> Result<f64> {
    if tf.d.iter().any(|&v| v != 0.0) {
        return Err(Error::InvalidInput("H2 norm is infinite for non-zero feedthrough".into()));
    }
    if !tf.is_stable() {
        return Err(Error::Unstable("H2 norm of an unstable transfer function".into()));
    }
    let poles = tf.pole_magnitudes();
    let lo = poles.iter().fold(1e-3_f64, |m, &p| m.min(p * 1e-3));
    let hi = poles.iter().fold(1e5_f64, |m, &p| m.max(p * 1e3));
    let (ulo, uhi) = (lo.ln(), hi.ln());
    let du = (uhi - ulo) / (H2_GRID_POINTS - 1) as f64;
    let mut integral = 0.0;
    let mut prev = 0.0;
    let mut first = 0.0;
    let mut last = 0.0;
    for i in 0..H2_GRID_POINTS {
        let w = (ulo + du * i as f64).exp();
        let g = tf.eval(w)?;
        let mag2: f64 = g.iter().map(|z| z.norm_sqr()).sum();
        let f = mag2 * w;
        if i == 0 {
            first = mag2;
        } else {
            integral += 0.5 * (f + prev) * du;
        }
        last = mag2;
        prev = f;
    }
    integral += first * lo + last * hi;
    let value = (integral / std::f64::consts::PI).sqrt();
    if !value.is_finite() {
        return Err(Error::NonFinite("H2 quadrature".into()));
    }
    Ok(value)
}

/// `‖G‖₂ = sqrt(tr(C W Cᵀ))` with `A W + W Aᵀ + B Bᵀ = 0`.
pub fn h2_norm_lyapunov(tf: &TransferFunction) -> Result<f64> {
    if tf.d.iter().any(|&v| v != 0.0) {
        return Err(Error::InvalidInput("H2 norm is infinite for non-zero feedthrough".into()));
    }
    if !tf.is_stable() {
        return Err(Error::Unstable("H2 norm of an unstable transfer function".into()));
    }
    if tf.order() == 0 {
        return Ok(0.0);
    }
    let w = linalg::solve_lyapunov(&tf.a, &(&tf.b * tf.b.transpose()))?;
    Ok((&tf.c * w * tf.c.transpose()).trace().max(0.0).sqrt())
}

/// `‖G‖₂`, computed by quadrature and cross-checked against the Lyapunov
/// formula; disagreement above 1% is reported as a numerical failure.
pub fn h2_norm(tf: &TransferFunction) -> Result<f64> {
    let quad = h2_norm_quadrature(tf)?;
    let lyap = h2_norm_lyapunov(tf)?;
    let scale = quad.max(lyap);
    if scale > 0.0 && (quad - lyap).abs() > 0.01 * scale {
        return Err(Error::Numerical(format!(
            "H2 quadrature ({quad:.6e}) and Lyapunov ({lyap:.6e}) disagree by more than 1%"
        )));
    }
    Ok(lyap)
}

/// Time constant `k` of `1/(1 + k s)` whose H2 norm equals `sigma`
/// (`‖G_f‖₂² = 1/(2k)`).
pub fn match_butterworth(sigma: f64) -> Result<f64> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidInput(format!("target H2 norm must be positive, got {sigma}")));
    }
    Ok(1.0 / (2.0 * sigma * sigma))
}

/// Time constant `k` for which the forward-backward filter `1/(1 + k²ω²)`
/// has H2 norm `sigma` (`∫|G|⁴ dω/2π = 1/(4k)`).
pub fn match_zero_phase(sigma: f64) -> Result<f64> {
    Ok(match_butterworth(sigma)? / 2.0)
}

fn check_filter_args(k: f64, dt: f64) -> Result<()> {
    if !(k.is_finite() && k >= 0.0) {
        return Err(Error::InvalidInput(format!("time constant must be non-negative, got {k}")));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidInput(format!("sample period must be positive, got {dt}")));
    }
    Ok(())
}

/// Causal `1/(1 + k s)` discretised with the bilinear transform. The filter
/// state starts at steady state for the first sample.
pub fn filter_butterworth1(signal: &[f64], k: f64, dt: f64) -> Result<Vec<f64>> {
    check_filter_args(k, dt)?;
    let Some(&x0) = signal.first() else {
        return Ok(Vec::new());
    };
    let b = dt / (dt + 2.0 * k);
    let a = (dt - 2.0 * k) / (dt + 2.0 * k);
    let mut out = Vec::with_capacity(signal.len());
    let (mut x_prev, mut y_prev) = (x0, x0);
    for &x in signal {
        let y = b * (x + x_prev) - a * y_prev;
        out.push(y);
        x_prev = x;
        y_prev = y;
    }
    Ok(out)
}

/// Forward-backward application of [`filter_butterworth1`] (zero phase,
/// squared magnitude response).
pub fn filter_zero_phase(signal: &[f64], k: f64, dt: f64) -> Result<Vec<f64>> {
    let mut fwd = filter_butterworth1(signal, k, dt)?;
    fwd.reverse();
    let mut back = filter_butterworth1(&fwd, k, dt)?;
    back.reverse();
    Ok(back)
}

/// Observable part of a system obtained by an orthogonal change of
/// coordinates built from the SVD of its observability matrix.
#[derive(Clone, Debug)]
pub struct ObservableReduction {
    pub system: LtiSystem,
    /// Orthonormal basis (columns) of the observable subspace; the reduced
    /// state is `z = basisᵀ x`.
    pub basis: DMatrix<f64>,
    pub removed: usize,
}

pub fn kalman_observable_reduction(sys: &LtiSystem) -> Result<ObservableReduction> {
    let o = observability_matrix(sys);
    let (row, null) = linalg::row_and_null_space(&o, RANK_TOL)?;
    let a = row.transpose() * &sys.a * &row;
    let b = row.transpose() * &sys.b;
    let c = &sys.c * &row;
    let mut reduced = LtiSystem::new(a, b, c)?;
    reduced.q = sys.q.clone();
    reduced.r = sys.r.clone();
    Ok(ObservableReduction {
        system: reduced,
        basis: row,
        removed: null.ncols(),
    })
}

/// Impulse response `C e^{At} B` at time `t`.
pub fn impulse_response(sys: &LtiSystem, t: f64) -> DMatrix<f64> {
    &sys.c * (&sys.a * t).exp() * &sys.b
}

/// Closed-loop analysis of a stationary estimator for one state component:
/// per-channel transfer functions, their H2 norms and the resulting output
/// noise level `σ = sqrt(Σ r_j ‖G_j‖₂²)`.
#[derive(Clone, Debug)]
pub struct EstimatorNoise {
    pub gain: StationaryGain,
    pub channels: Vec<TransferFunction>,
    pub h2: Vec<f64>,
    pub sigma: f64,
}

pub fn estimator_noise(sys: &LtiSystem, dt: f64, pick_row: usize) -> Result<EstimatorNoise> {
    let gain = stationary_kalman_gain(sys, dt)?;
    let channels = transfer_functions(sys, &gain.gain, pick_row)?;
    let r = sys.r.as_ref().expect("checked by stationary_kalman_gain");
    let h2 = channels.iter().map(h2_norm).collect::<Result<Vec<_>>>()?;
    let var: f64 = h2.iter().enumerate().map(|(j, h)| r[(j, j)] * h * h).sum();
    Ok(EstimatorNoise {
        gain,
        channels,
        h2,
        sigma: var.sqrt(),
    })
}

/// Parameters of the velocity-plus-acceleration estimation study.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AccelStudyParams {
    pub r_v: f64,
    pub r_a: f64,
    pub q_a1: f64,
    pub q_a2: f64,
    pub dt: f64,
}

impl Default for AccelStudyParams {
    fn default() -> Self {
        AccelStudyParams {
            r_v: 0.1,
            r_a: 1.0,
            q_a1: 0.1,
            q_a2: 1.0,
            dt: 1e-3,
        }
    }
}

/// Stationary acceleration estimator fed by velocity and acceleration
/// measurements, compared with a first-order low-pass of equal noise level.
#[derive(Clone, Debug)]
pub struct AccelStudy {
    pub system: LtiSystem,
    pub noise: EstimatorNoise,
    /// Transfer function from true to estimated acceleration, `G_v/s + G_a`.
    pub tracking: TransferFunction,
    /// Time constant of the matched low-pass.
    pub k: f64,
    pub lowpass: TransferFunction,
}

impl AccelStudy {
    pub fn g_v(&self) -> &TransferFunction {
        &self.noise.channels[0]
    }

    pub fn g_a(&self) -> &TransferFunction {
        &self.noise.channels[1]
    }
}

/// System of a velocity plant driven by a second-order integrator
/// acceleration model, measuring velocity and acceleration.
pub fn accel_study_system(p: &AccelStudyParams) -> Result<LtiSystem> {
    let plant = LtiSystem::new(
        DMatrix::zeros(1, 1),
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_element(1, 1, 1.0),
    )?
    .with_noise(DMatrix::zeros(1, 1), DMatrix::from_element(1, 1, p.r_v))?;
    let driver = crate::motion_model::make_integrator_model(2, &[p.q_a1, p.q_a2])?.to_lti(p.r_a)?;
    series_concat(&plant, &driver, true)
}

pub fn accel_study(p: &AccelStudyParams) -> Result<AccelStudy> {
    let system = accel_study_system(p)?;
    let noise = estimator_noise(&system, p.dt, 1)?;
    let tracking = noise.channels[0].integrate()?.add(&noise.channels[1])?;
    // The matched low-pass filters the raw acceleration measurement, whose
    // noise intensity is r_a.
    let k = match_butterworth(noise.sigma / p.r_a.sqrt())?;
    let lowpass = TransferFunction::first_order_lowpass(k)?;
    Ok(AccelStudy {
        system,
        noise,
        tracking,
        k,
        lowpass,
    })
}

/// Magnitude in dB of a SISO transfer function.
pub fn magnitude_db(tf: &TransferFunction, omega: f64) -> Result<f64> {
    Ok(20.0 * tf.eval_siso(omega)?.norm().log10())
}

/// Least-squares slope in dB/decade of `|G|` over `n` log-spaced points in
/// `[w_lo, w_hi]`.
pub fn magnitude_slope(tf: &TransferFunction, w_lo: f64, w_hi: f64, n: usize) -> Result<f64> {
    let n = n.max(2);
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        let x = w_lo.log10() + (w_hi.log10() - w_lo.log10()) * i as f64 / (n - 1) as f64;
        let y = magnitude_db(tf, 10f64.powf(x))?;
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    let nf = n as f64;
    Ok((nf * sxy - sx * sy) / (nf * sxx - sx * sx))
}

/// Evaluates `|G(jω)|` on a log grid and returns the peak `(ω, |G|)`.
pub fn magnitude_peak(tf: &TransferFunction, w_lo: f64, w_hi: f64, n: usize) -> Result<(f64, f64)> {
    let n = n.max(2);
    let mut best = (w_lo, 0.0);
    for i in 0..n {
        let w = 10f64.powf(w_lo.log10() + (w_hi.log10() - w_lo.log10()) * i as f64 / (n - 1) as f64);
        let m = tf.eval_siso(w)?.norm();
        if m > best.1 {
            best = (w, m);
        }
    }
    Ok(best)
}
