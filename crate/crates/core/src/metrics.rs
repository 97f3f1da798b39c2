//! Evaluation helpers: RMSE, delay estimation and convergence detection.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::manifold::{wrap_angle, Rotation};

/// Largest timestamp mismatch tolerated between aligned series.
pub const ALIGN_TOL: f64 = 1e-9;

fn check_aligned(t_est: &[f64], t_ref: &[f64], n_est: usize, n_ref: usize) -> Result<()> {
    if t_est.len() != n_est || t_ref.len() != n_ref {
        return Err(Error::InvalidInput("timestamps and values differ in length".into()));
    }
    if n_est != n_ref {
        return Err(Error::InvalidInput(format!(
            "misaligned series: {n_est} estimate samples vs {n_ref} reference samples"
        )));
    }
    if n_est == 0 {
        return Err(Error::InvalidInput("empty series".into()));
    }
    if let Some(i) = (0..n_est).find(|&i| (t_est[i] - t_ref[i]).abs() > ALIGN_TOL) {
        return Err(Error::InvalidInput(format!(
            "misaligned series at sample {i}: t = {} vs {}",
            t_est[i], t_ref[i]
        )));
    }
    Ok(())
}

/// Per-axis root-mean-square error of aligned 3-vector series.
pub fn rmse(t_est: &[f64], est: &[Vector3<f64>], t_ref: &[f64], truth: &[Vector3<f64>]) -> Result<Vector3<f64>> {
    check_aligned(t_est, t_ref, est.len(), truth.len())?;
    let mut acc = Vector3::zeros();
    for (e, r) in est.iter().zip(truth) {
        acc += (e - r).component_mul(&(e - r));
    }
    Ok((acc / est.len() as f64).map(f64::sqrt))
}

/// Per-axis RMSE of attitude as wrapped differences of extrinsic Z-Y-X
/// Euler angles, ordered `(roll, pitch, yaw)`.
pub fn rmse_attitude(t_est: &[f64], est: &[Rotation], t_ref: &[f64], truth: &[Rotation]) -> Result<Vector3<f64>> {
    check_aligned(t_est, t_ref, est.len(), truth.len())?;
    let mut acc = Vector3::zeros();
    for (e, r) in est.iter().zip(truth) {
        let d = (e.euler_zyx() - r.euler_zyx()).map(wrap_angle);
        acc += d.component_mul(&d);
    }
    Ok((acc / est.len() as f64).map(f64::sqrt))
}

/// Scalar RMSE of two equally long series.
pub fn rmse_scalar(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::InvalidInput(format!(
            "rmse needs equally long non-empty series, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok((a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt())
}

fn normalized_xcorr(f: &[f64], r: &[f64], lag: isize) -> f64 {
    // Σ f[k + lag] r[k] over the overlap, both series mean-removed.
    let n = f.len() as isize;
    let (lo, hi) = ((-lag).max(0), (n - lag).min(n));
    if hi - lo < 2 {
        return 0.0;
    }
    let idx = |k: isize| k as usize;
    let m = (hi - lo) as f64;
    let mf = (lo..hi).map(|k| f[idx(k + lag)]).sum::<f64>() / m;
    let mr = (lo..hi).map(|k| r[idx(k)]).sum::<f64>() / m;
    let (mut sfr, mut sff, mut srr) = (0.0, 0.0, 0.0);
    for k in lo..hi {
        let a = f[idx(k + lag)] - mf;
        let b = r[idx(k)] - mr;
        sfr += a * b;
        sff += a * a;
        srr += b * b;
    }
    if sff == 0.0 || srr == 0.0 {
        return f64::NAN;
    }
    sfr / (sff * srr).sqrt()
}

/// Delay of `filtered` behind `reference` in seconds: argmax of the
/// normalized cross-correlation over integer lags in `[-max_lag, max_lag]`,
/// refined by a parabola through the peak and its neighbours. Positive when
/// `filtered` lags.
pub fn estimate_delay(filtered: &[f64], reference: &[f64], dt: f64, max_lag: usize) -> Result<f64> {
    if filtered.len() != reference.len() {
        return Err(Error::InvalidInput("delay estimation needs equally long series".into()));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(format!("sample period must be positive, got {dt}")));
    }
    if filtered.len() < 2 * max_lag + 3 {
        return Err(Error::InvalidInput("series too short for the requested lag range".into()));
    }
    let m = max_lag as isize;
    let corr: Vec<f64> = (-m..=m).map(|l| normalized_xcorr(filtered, reference, l)).collect();
    if corr.iter().any(|c| c.is_nan()) {
        return Err(Error::InvalidInput("flat correlation: a series is constant".into()));
    }
    let (best, &peak) = corr
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty lag range");
    let mut lag = best as f64 - max_lag as f64;
    if best > 0 && best + 1 < corr.len() {
        let (y0, y1, y2) = (corr[best - 1], peak, corr[best + 1]);
        let den = y0 - 2.0 * y1 + y2;
        if den < 0.0 {
            lag += 0.5 * (y0 - y2) / den;
        }
    }
    Ok(lag * dt)
}

/// First time after which `|x − target| ≤ band` holds for the rest of the
/// series; `None` when the last sample is outside the band.
pub fn convergence_time(t: &[f64], x: &[f64], target: f64, band: f64) -> Result<Option<f64>> {
    if t.len() != x.len() {
        return Err(Error::InvalidInput("timestamps and values differ in length".into()));
    }
    let inside = |v: f64| (v - target).abs() <= band;
    match x.iter().rposition(|&v| !inside(v)) {
        None => Ok(t.first().copied()),
        Some(i) if i + 1 == x.len() => Ok(None),
        Some(i) => Ok(Some(t[i + 1])),
    }
}

/// Ordered key-value report written as `key = value` lines.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    pub entries: Vec<(String, String)>,
}

impl Report {
    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.push((key.into(), value.to_string()));
    }

    pub fn push_vec3(&mut self, key: &str, v: &Vector3<f64>) {
        for (axis, x) in ["x", "y", "z"].iter().zip(v.iter()) {
            self.push(format!("{key}_{axis}"), x);
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.get(key).and_then(|v| v.parse().ok())
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn parse(text: &str) -> Result<Report> {
        let mut r = Report::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once(" = ")
                .ok_or_else(|| Error::InvalidInput(format!("report line {} is not `key = value`", i + 1)))?;
            r.push(k.trim(), v.trim());
        }
        Ok(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn times(n: usize, dt: f64) -> Vec<f64> {
        (0..n).map(|k| k as f64 * dt).collect()
    }

    fn band_limited(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let comps: Vec<(f64, f64, f64)> = (0..8)
            .map(|_| (rng.gen_range(0.2..1.0), rng.gen_range(0.3..3.0), rng.gen_range(0.0..6.3)))
            .collect();
        (0..n)
            .map(|k| {
                let t = k as f64 * 1e-3;
                comps.iter().map(|(a, f, p)| a * (std::f64::consts::TAU * f * t + p).sin()).sum()
            })
            .collect()
    }

    #[test]
    fn rmse_of_identical_and_offset_series() {
        let t = times(100, 0.01);
        let x: Vec<_> = (0..100).map(|k| Vector3::new(k as f64, 1.0, -2.0)).collect();
        assert_eq!(rmse(&t, &x, &t, &x).unwrap(), Vector3::zeros());
        let d = Vector3::new(0.3, -0.2, 1.5);
        let y: Vec<_> = x.iter().map(|v| v + d).collect();
        let r = rmse(&t, &y, &t, &x).unwrap();
        assert!((r - d.abs()).norm() < 1e-12);
    }

    #[test]
    fn rmse_of_white_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 10_000;
        let t = times(n, 0.01);
        let truth = vec![Vector3::zeros(); n];
        let est: Vec<_> = (0..n)
            .map(|_| Vector3::from_fn(|_, _| 0.2 * rng.sample::<f64, _>(StandardNormal)))
            .collect();
        let r = rmse(&t, &est, &t, &truth).unwrap();
        assert!(r.iter().all(|v| (v / 0.2 - 1.0).abs() < 0.05));
    }

    #[test]
    fn rmse_rejects_misaligned() {
        let x = vec![Vector3::zeros(); 3];
        assert!(rmse(&[0.0, 1.0, 2.0], &x, &[0.0, 1.0, 2.5], &x).is_err());
        assert!(rmse(&[0.0, 1.0], &x[..2], &[0.0, 1.0, 2.0], &x).is_err());
    }

    #[test]
    fn rmse_invariant_to_common_time_shift() {
        let t = times(50, 0.1);
        let ts: Vec<f64> = t.iter().map(|v| v + 3.7).collect();
        let a: Vec<_> = (0..50).map(|k| Vector3::new((k as f64).sin(), 0.0, 1.0)).collect();
        let b: Vec<_> = (0..50).map(|k| Vector3::new((k as f64).cos(), 0.5, 1.0)).collect();
        assert_eq!(rmse(&t, &a, &t, &b).unwrap(), rmse(&ts, &a, &ts, &b).unwrap());
    }

    #[test]
    fn attitude_rmse_wraps_yaw() {
        let t = times(2, 1.0);
        let a = vec![Rotation::from_euler_zyx(0.0, 0.0, 3.1); 2];
        let b = vec![Rotation::from_euler_zyx(0.0, 0.0, -3.1); 2];
        let r = rmse_attitude(&t, &a, &t, &b).unwrap();
        assert!((r.z - (2.0 * std::f64::consts::PI - 6.2)).abs() < 1e-9);
    }

    #[test]
    fn delay_of_self_is_zero() {
        let x = band_limited(5000, 2);
        assert!(estimate_delay(&x, &x, 1e-3, 100).unwrap().abs() < 1e-12);
    }

    #[test]
    fn delay_of_shifted_copy() {
        let x = band_limited(6000, 3);
        let shifted: Vec<f64> = (0..6000).map(|k| if k >= 40 { x[k - 40] } else { x[0] }).collect();
        let d = estimate_delay(&shifted, &x, 1e-3, 100).unwrap();
        assert!((d - 0.040).abs() <= 0.5e-3, "{d}");
        let back = estimate_delay(&x, &shifted, 1e-3, 100).unwrap();
        assert!((d + back).abs() < 1e-3, "{d} {back}");
    }

    #[test]
    fn delay_of_first_order_lowpass() {
        // group delay of 1/(1 + k s) at frequency w is k / (1 + (k w)²)
        let dt = 1e-3;
        let n = 20_000;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f0 = 1.0;
        let comps: Vec<(f64, f64)> = (0..6).map(|_| (rng.gen_range(0.9..1.1), rng.gen_range(0.0..6.3))).collect();
        let x: Vec<f64> = (0..n)
            .map(|k| {
                let t = k as f64 * dt;
                comps.iter().map(|(s, p)| (std::f64::consts::TAU * f0 * s * t + p).sin()).sum()
            })
            .collect();
        let k = 0.04;
        let y = crate::lti::filter_butterworth1(&x, k, dt).unwrap();
        let w = std::f64::consts::TAU * f0;
        let expected = k / (1.0 + (k * w).powi(2));
        let d = estimate_delay(&y[2000..], &x[2000..], dt, 200).unwrap();
        assert!((d / expected - 1.0).abs() < 0.2, "{d} vs {expected}");
    }

    #[test]
    fn delay_rejects_flat_series() {
        let x = vec![1.0; 500];
        let y = band_limited(500, 5);
        assert!(estimate_delay(&x, &y, 1e-3, 10).is_err());
    }

    #[test]
    fn convergence_cases() {
        let t = times(1000, 0.01);
        let flat = vec![2.0; 1000];
        assert_eq!(convergence_time(&t, &flat, 2.0, 0.01).unwrap(), Some(0.0));
        let tau = 1.0;
        let decay: Vec<f64> = t.iter().map(|s| 2.0 + (-s / tau).exp()).collect();
        let ct = convergence_time(&t, &decay, 2.0, 0.05).unwrap().unwrap();
        assert!((ct - 3.0 * tau).abs() < 0.02, "{ct}");
        let grow: Vec<f64> = t.iter().map(|s| s.exp()).collect();
        assert_eq!(convergence_time(&t, &grow, 1.0, 0.1).unwrap(), None);
    }

    #[test]
    fn report_round_trip() {
        let mut r = Report::default();
        r.push("a", 1.5);
        r.push_vec3("c", &Vector3::new(0.1, 0.2, 0.3));
        let back = Report::parse(&r.to_text()).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.get_f64("c_y"), Some(0.2));
    }
}
