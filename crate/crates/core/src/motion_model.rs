//! Integrator-chain statistical motion models.
//!
//! A signal `u` is modelled as the first state of an `N`-th order chain
//! `γ̇ = A γ + w` with `A` the upper shift matrix and independent white
//! noises of intensities `q_1 … q_N` on each state, so that the power
//! spectral density of `u` is `Σ q_i / ω^{2i}`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lti::{LtiSystem, TransferFunction};

#[derive(Clone, Debug, PartialEq)]
pub struct StatModel {
    q: Vec<f64>,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
}

/// Builds the `N`-th order integrator model with noise intensities `q`.
pub fn make_integrator_model(order: usize, q: &[f64]) -> Result<StatModel> {
    if order == 0 {
        return Err(Error::InvalidInput("model order must be at least 1".into()));
    }
    if q.len() != order {
        return Err(Error::DimensionMismatch {
            context: "integrator model noise intensities",
            expected: order,
            actual: q.len(),
        });
    }
    if q.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidInput("noise intensities must be finite and non-negative".into()));
    }
    if q.iter().all(|&v| v == 0.0) {
        return Err(Error::InvalidInput("at least one noise intensity must be positive".into()));
    }
    let a = DMatrix::from_fn(order, order, |i, j| if j == i + 1 { 1.0 } else { 0.0 });
    let b = DMatrix::identity(order, order);
    let mut c = DMatrix::zeros(1, order);
    c[(0, 0)] = 1.0;
    Ok(StatModel {
        q: q.to_vec(),
        a,
        b,
        c,
    })
}

impl StatModel {
    pub fn order(&self) -> usize {
        self.q.len()
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn q_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.q))
    }

    /// Scalar model as an LTI system with measurement noise intensity `r`.
    pub fn to_lti(&self, r: f64) -> Result<LtiSystem> {
        LtiSystem::new(self.a.clone(), self.b.clone(), self.c.clone())?
            .with_noise(self.q_matrix(), DMatrix::from_element(1, 1, r))
    }

    /// `S(ω) = G(jω) Q G(jω)ᴴ` with `G(s) = C (sI − A)⁻¹ B`.
    pub fn psd(&self, omega: f64) -> Result<f64> {
        if !omega.is_finite() || omega == 0.0 {
            return Err(Error::InvalidInput(format!(
                "PSD of an integrator model is unbounded at ω = {omega}"
            )));
        }
        let tf = TransferFunction::new(
            self.a.clone(),
            self.b.clone(),
            self.c.clone(),
            DMatrix::zeros(1, self.order()),
        )?;
        let g = tf.eval(omega)?;
        Ok(g
            .iter()
            .zip(&self.q)
            .map(|(gi, qi): (&Complex64, &f64)| qi * gi.norm_sqr())
            .sum())
    }

    /// Closed form `Σ q_i / ω^{2i}`.
    pub fn psd_closed_form(&self, omega: f64) -> f64 {
        self.q
            .iter()
            .enumerate()
            .map(|(i, q)| q / omega.powi(2 * (i as i32 + 1)))
            .sum()
    }
}

/// Three independent copies of `model` (x, y, z channels).
///
/// States are ordered by derivative order first, so the leading three states
/// are the modelled 3-vector itself: `A₃ = A ⊗ I₃`, `B₃ = B ⊗ I₃`,
/// `C₃ = C ⊗ I₃`, `Q₃ = Q ⊗ I₃`.
pub fn vectorize(model: &StatModel) -> Result<LtiSystem> {
    let i3 = DMatrix::<f64>::identity(3, 3);
    let mut sys = LtiSystem::new(
        model.a.kronecker(&i3),
        model.b.kronecker(&i3),
        model.c.kronecker(&i3),
    )?;
    sys.q = Some(model.q_matrix().kronecker(&i3));
    Ok(sys)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    use rustfft::FftPlanner;

    #[test]
    fn second_order_matrices() {
        let m = make_integrator_model(2, &[1.0, 2.0]).unwrap();
        assert_eq!(*m.a(), DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]));
        assert_eq!(*m.b(), DMatrix::identity(2, 2));
        assert_eq!(*m.c(), DMatrix::from_row_slice(1, 2, &[1.0, 0.0]));
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(make_integrator_model(0, &[]).is_err());
        assert!(make_integrator_model(2, &[1.0]).is_err());
        assert!(make_integrator_model(2, &[0.0, 0.0]).is_err());
        assert!(make_integrator_model(1, &[-1.0]).is_err());
        let m = make_integrator_model(1, &[1.0]).unwrap();
        assert!(m.psd(0.0).is_err());
    }

    #[test]
    fn psd_first_order() {
        let m = make_integrator_model(1, &[1.0]).unwrap();
        assert_relative_eq!(m.psd(2.0).unwrap(), 0.25, max_relative = 1e-12);
    }

    #[test]
    fn psd_matches_closed_form_for_higher_orders() {
        let m = make_integrator_model(4, &[0.3, 2.0, 0.01, 5.0]).unwrap();
        for &w in &[0.05, 0.7, 3.0, 40.0] {
            assert_relative_eq!(m.psd(w).unwrap(), m.psd_closed_form(w), max_relative = 1e-10);
        }
    }

    #[test]
    fn vectorize_first_order() {
        let m = make_integrator_model(1, &[1.0]).unwrap();
        let s = vectorize(&m).unwrap();
        assert_eq!(s.a, DMatrix::zeros(3, 3));
        assert_eq!(s.c, DMatrix::identity(3, 3));
    }

    #[test]
    fn vectorize_orders_states_by_derivative() {
        let m = make_integrator_model(2, &[1.0, 1.0]).unwrap();
        let s = vectorize(&m).unwrap();
        // d/dt γ[0..3] = γ[3..6]
        for i in 0..3 {
            assert_eq!(s.a[(i, i + 3)], 1.0);
            assert_eq!(s.c[(i, i)], 1.0);
        }
        assert_eq!(s.a.sum(), 3.0);
    }

    /// Welch estimate of the two-sided PSD (per rad/s, variance =
    /// (1/2π)∫S dω) with a Hann window and mean removal.
    fn welch(x: &[f64], dt: f64, seg: usize) -> Vec<(f64, f64)> {
        let mut planner = FftPlanner::<f64>::new();
        let fft = planner.plan_fft_forward(seg);
        let win: Vec<f64> = (0..seg)
            .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / seg as f64).cos())
            .collect();
        let u: f64 = win.iter().map(|w| w * w).sum::<f64>() / seg as f64;
        let mut acc = vec![0.0; seg / 2];
        let mut count = 0;
        let mut start = 0;
        while start + seg <= x.len() {
            let s = &x[start..start + seg];
            let mean = s.iter().sum::<f64>() / seg as f64;
            let mut buf: Vec<rustfft::num_complex::Complex<f64>> = s
                .iter()
                .zip(&win)
                .map(|(v, w)| rustfft::num_complex::Complex::new((v - mean) * w, 0.0))
                .collect();
            fft.process(&mut buf);
            for (k, a) in acc.iter_mut().enumerate() {
                *a += buf[k].norm_sqr() * dt / (seg as f64 * u);
            }
            count += 1;
            start += seg / 2;
        }
        let dw = 2.0 * std::f64::consts::PI / (seg as f64 * dt);
        acc.iter()
            .enumerate()
            .skip(1)
            .map(|(k, a)| (k as f64 * dw, a / count as f64))
            .collect()
    }

    fn simulate(model: &StatModel, dt: f64, steps: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<f64> {
        let n = model.order();
        let mut g = vec![0.0; n];
        let scale: Vec<f64> = model.q().iter().map(|q| (q * dt).sqrt()).collect();
        let mut out = Vec::with_capacity(steps);
        for _ in 0..steps {
            out.push(g[0]);
            let prev = g.clone();
            for i in 0..n {
                let drift = if i + 1 < n { prev[i + 1] } else { 0.0 };
                let xi: f64 = StandardNormal.sample(rng);
                g[i] = prev[i] + drift * dt + scale[i] * xi;
            }
        }
        out
    }

    #[test]
    fn monte_carlo_psd_within_factor_two() {
        let dt = 1e-3;
        let seg = 1 << 17;
        let runs = 8;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for q in [vec![1.0], vec![0.5, 1.0]] {
            let model = make_integrator_model(q.len(), &q).unwrap();
            let mut avg: Vec<(f64, f64)> = Vec::new();
            for _ in 0..runs {
                // Prewhiten by first differencing to keep window leakage from
                // the steep low-frequency spectrum in check, then recolour.
                let x = simulate(&model, dt, 200_000, &mut rng);
                let d: Vec<f64> = x.windows(2).map(|w| (w[1] - w[0]) / dt).collect();
                let est: Vec<(f64, f64)> = welch(&d, dt, seg)
                    .into_iter()
                    .map(|(w, s)| {
                        let wd = 2.0 * (0.5 * w * dt).sin() / dt;
                        (w, s / (wd * wd))
                    })
                    .collect();
                if avg.is_empty() {
                    avg = est.iter().map(|&(w, _)| (w, 0.0)).collect();
                }
                for (a, e) in avg.iter_mut().zip(&est) {
                    a.1 += e.1 / runs as f64;
                }
            }
            // Compare log-band averages over [0.1, 50] rad/s.
            let mut lo = 0.1;
            while lo < 50.0 {
                let hi = lo * 1.5;
                let band: Vec<&(f64, f64)> = avg.iter().filter(|(w, _)| *w >= lo && *w < hi).collect();
                if !band.is_empty() {
                    let est = band.iter().map(|(_, s)| s).sum::<f64>() / band.len() as f64;
                    let model_avg =
                        band.iter().map(|(w, _)| model.psd(*w).unwrap()).sum::<f64>() / band.len() as f64;
                    let ratio = est / model_avg;
                    assert!(
                        (0.5..=2.0).contains(&ratio),
                        "q = {q:?}, band [{lo:.3}, {hi:.3}): ratio {ratio:.3}"
                    );
                }
                lo = hi;
            }
        }
    }
}
