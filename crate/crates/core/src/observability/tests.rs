use super::*;
use crate::lti::observability_matrix;
use crate::manifold::{chart_gradient, chart_gradient_at, skew};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn close(a: &DVector<f64>, b: &DVector<f64>, tol: f64) -> bool {
    (a - b).iter().zip(b.iter()).all(|(d, r)| d.abs() <= tol * r.abs().max(1.0))
}

#[test]
fn rank_probe_basics() {
    assert_eq!(rank_probe(&DMatrix::identity(6, 6), RANK_TOL_TEST).unwrap().rank, 6);
    let u = DVector::from_vec(vec![1.0, -2.0, 0.5]);
    assert_eq!(rank_probe(&(&u * u.transpose()), RANK_TOL_TEST).unwrap().rank, 1);
}

const RANK_TOL_TEST: f64 = crate::linalg::RANK_TOL;

#[test]
fn input_formulation_analytic_lie_derivatives() {
    let sys = PosImuInputSystem::new();
    let mut r = rng(1);
    for _ in 0..50 {
        let x = random_input_state(&sys, &mut r);
        let rot = *x.rotation(2).matrix();
        let (p, v, c, ba, bw) = (x.vec3(0, 0), x.vec3(1, 0), x.vec3(3, 0), x.vec3(4, 0), x.vec3(5, 0));
        let beta = rot.transpose() * Vector3::x();
        let l = |fields: Vec<usize>, out: usize| lie_derivative(&sys, &LieChain::new(out, fields), &x).unwrap();
        let dv = |v: Vector3<f64>| DVector::from_column_slice(v.as_slice());

        assert!(close(&l(vec![], 0), &dv(p + rot * c), 1e-10));
        assert!(close(&l(vec![0], 0), &dv(v - rot * skew(&bw) * c), 1e-4));
        let g2 = sys.gravity - rot * ba + rot * skew(&bw) * skew(&bw) * c;
        assert!(close(&l(vec![0, 0], 0), &dv(g2), 1e-4));
        for i in 0..3 {
            let e = Vector3::ith(i, 1.0);
            assert!(close(&l(vec![i + 1], 0), &dv(rot * skew(&e) * c), 1e-4));
            assert!(close(&l(vec![0, i + 4], 0), &dv(rot * e), 1e-4));
            assert!(close(&l(vec![0, i + 1], 1), &dv(skew(&bw) * skew(&beta) * e), 1e-4));
        }
    }
}

#[test]
fn state_formulation_lie_derivatives_both_engines() {
    let sys = PosImuStateSystem::new(3, 3).unwrap();
    let cfg = StateProbeConfig::new(3, 3);
    let mut r = rng(2);
    for _ in 0..50 {
        let x = random_state_formulation(&sys, &cfg, &mut r);
        let rot = *x.rotation(2).matrix();
        let (v, c) = (x.vec3(1, 0), x.vec3(3, 0));
        let (a, w, wd) = (x.vec3(6, 0), x.vec3(7, 0), x.vec3(7, 1));
        let sw = skew(&w);
        let l1 = v + rot * sw * c;
        let l2 = rot * a + sys.gravity + rot * sw * sw * c + rot * skew(&wd) * c;
        let series = drift_lie_derivatives(&sys, &x, 0, 2).unwrap();
        let dv = |v: Vector3<f64>| DVector::from_column_slice(v.as_slice());
        assert!(close(&series[1], &dv(l1), 1e-12));
        assert!(close(&series[2], &dv(l2), 1e-12));
        let fd2 = lie_derivative(&sys, &LieChain::drift(0, 2), &x).unwrap();
        assert!(close(&fd2, &dv(l2), 1e-4));
    }
}

#[test]
fn series_matches_finite_differences_on_state_formulation() {
    let sys = PosImuStateSystem::new(2, 2).unwrap();
    let cfg = StateProbeConfig::new(2, 2);
    let x = random_state_formulation(&sys, &cfg, &mut rng(3));
    let chains: Vec<LieChain> = (0..4).flat_map(|j| drift_chains(j, 0..=2)).collect();
    let a = observability_matrix_nl(&sys, &x, &chains, Engine::Series).unwrap();
    let b = observability_matrix_nl(&sys, &x, &chains, Engine::FiniteDifference).unwrap();
    let err = (&a - &b).amax() / a.amax();
    assert!(err < 1e-5, "relative difference {err}");
}

#[test]
fn linear_system_matches_lti_observability_matrix() {
    let mut r = rng(4);
    for n in 1..=4 {
        let a = DMatrix::from_fn(n, n, |_, _| r.gen_range(-1.0..1.0));
        let b = DMatrix::from_fn(n, 1, |_, _| r.gen_range(-1.0..1.0));
        let c = DMatrix::from_fn(2, n, |_, _| r.gen_range(-1.0..1.0));
        let lti = crate::lti::LtiSystem::new(a, b, c).unwrap();
        let sys = LinearSystemDescription::new(&lti).unwrap();
        let mut x = NominalState::origin(sys.layout().clone());
        let vals: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
        x.set_vector(0, &vals).unwrap();
        let chains = drift_chains(0, 0..=n - 1);
        let reference = observability_matrix(&lti);
        for engine in [Engine::Series, Engine::FiniteDifference] {
            if engine == Engine::FiniteDifference && n > FD_MAX_DEPTH {
                continue;
            }
            // four nested central differences sit at the rounding floor
            let tol = if engine == Engine::FiniteDifference && n == FD_MAX_DEPTH { 1e-5 } else { 1e-6 };
            let o = observability_matrix_nl(&sys, &x, &chains, engine).unwrap();
            assert!((&o - &reference).amax() < tol, "{engine:?} n = {n}: {}", (&o - &reference).amax());
        }
    }
}

#[test]
fn input_chain_along_control_field_of_linear_system() {
    let lti = crate::lti::LtiSystem::new(
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
        DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
        DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
    )
    .unwrap();
    let sys = LinearSystemDescription::new(&lti).unwrap();
    let x = NominalState::origin(sys.layout().clone());
    // L_{f₁} L_{f₀} h = C A B = 1.
    let v = lie_derivative(&sys, &LieChain::new(0, vec![0, 1]), &x).unwrap();
    assert!((v[0] - 1.0).abs() < 1e-8);
}

#[test]
fn series_engine_rejects_unsupported_chains() {
    let sys = PosImuInputSystem::new();
    let x = NominalState::origin(sys.layout().clone());
    assert!(observability_matrix_series(&sys, &x, &[LieChain::new(0, vec![1])]).is_err());
    assert!(observability_matrix_series(&sys, &x, &[LieChain::drift(0, MAX_SERIES_ORDER + 1)]).is_err());
    assert!(lie_derivative(&sys, &LieChain::drift(0, FD_MAX_DEPTH), &x).is_err());
    assert!(lie_derivative(&sys, &LieChain::new(5, vec![]), &x).is_err());
    assert!(lie_derivative(&sys, &LieChain::new(0, vec![9]), &x).is_err());
}

#[test]
fn o_i_full_rank_at_random_states() {
    for t in o_i_probe(20, 5).unwrap() {
        assert_eq!(t.rank, 18, "{t:?}");
    }
}

#[test]
fn o_s_zero_pattern() {
    let cfg = StateProbeConfig::new(3, 3);
    let sys = PosImuStateSystem::new(3, 3).unwrap();
    let x = random_state_formulation(&sys, &cfg, &mut rng(6));
    let o = observability_matrix_nl(&sys, &x, &o_s_chains(&cfg), Engine::Series).unwrap();
    let l = sys.layout();
    let col = |b: usize| l.tangent_range(b);
    let zero = |rows: std::ops::Range<usize>, cols: std::ops::Range<usize>| {
        let m = o.view((rows.start, cols.start), (rows.len(), cols.len()));
        assert!(m.amax() < 1e-8, "rows {rows:?} cols {cols:?}: {}", m.amax());
    };
    let h1 = |k: usize| 3 * k..3 * k + 3;
    let h2 = |k: usize| 3 * (cfg.n1 + 1) + 3 * k..3 * (cfg.n1 + 1) + 3 * k + 3;
    let h3_start = 3 * (cfg.n1 + cfg.n2 + 2);
    let h4_start = h3_start + 3 * cfg.na;
    // h₁ rows: b_a, b_ω never appear; order 0 depends on p, θ, c only.
    for k in 0..=cfg.n1 {
        zero(h1(k), col(4).start..col(5).end);
    }
    zero(h1(0), col(1));
    zero(h1(0), col(6).start..col(7).end);
    zero(h1(1), col(0));
    zero(h1(1), col(6));
    for k in 2..=cfg.n1 {
        zero(h1(k), col(0).start..col(1).end);
    }
    // h₂ rows depend on θ and the ω chain only.
    zero(h2(0), col(0).start..col(1).end);
    zero(h2(0), col(3).start..col(7).end);
    for k in 1..=cfg.n2 {
        zero(h2(k), col(0).start..col(1).end);
        zero(h2(k), col(3).start..col(6).end);
    }
    // h₃, h₄ rows are the chain observability matrices plus the bias.
    for k in 0..cfg.na {
        let rows = h3_start + 3 * k..h3_start + 3 * k + 3;
        zero(rows.clone(), col(0).start..col(3).end);
        zero(rows.clone(), col(5));
        zero(rows, col(7));
    }
    for k in 0..cfg.nw {
        let rows = h4_start + 3 * k..h4_start + 3 * k + 3;
        zero(rows.clone(), col(0).start..col(4).end);
        zero(rows, col(6));
    }
}

#[test]
fn first_order_position_row_depends_on_rate() {
    // ∂(v + R⌊ω⌋c)/∂ω = −R⌊c⌋: the ω block of this row is not zero.
    let cfg = StateProbeConfig::new(2, 2);
    let sys = PosImuStateSystem::new(2, 2).unwrap();
    let x = random_state_formulation(&sys, &cfg, &mut rng(7));
    let o = observability_matrix_nl(&sys, &x, &[LieChain::drift(0, 1)], Engine::Series).unwrap();
    let c0 = sys.layout().tangent_range(7).start;
    let blk: Matrix3<f64> = o.fixed_view::<3, 3>(0, c0).into_owned();
    let expected = -x.rotation(2).matrix() * skew(&x.vec3(3, 0));
    assert!((blk - expected).amax() < 1e-12);
    let rest = o.view((0, c0 + 3), (3, 3));
    assert!(rest.amax() < 1e-14);
}

#[test]
fn rank_invariant_under_chart_offset() {
    let cfg = StateProbeConfig::new(2, 2);
    let sys = PosImuStateSystem::new(2, 2).unwrap();
    let chains = o_s_chains(&cfg);
    let mut r = rng(8);
    for _ in 0..5 {
        let x = random_state_formulation(&sys, &cfg, &mut r);
        let n = sys.layout().tangent_dim();
        let theta0 = DVector::from_fn(n, |_, _| r.gen_range(-0.3..0.3));
        let anchor = x.boxplus(&(-&theta0));
        let values = |y: &NominalState| {
            let mut out = Vec::new();
            for c in &chains {
                let d = drift_lie_derivatives(&sys, y, c.output, c.order()).unwrap();
                out.extend_from_slice(d[c.order()].as_slice());
            }
            DVector::from_vec(out)
        };
        let centred = chart_gradient(values, &x, 1e-5).unwrap();
        let offset = chart_gradient_at(values, &anchor, &theta0, 1e-5).unwrap();
        let ra = rank_probe(&centred, 1e-7).unwrap().rank;
        let rb = rank_probe(&offset, 1e-7).unwrap().rank;
        assert_eq!(ra, rb);
        assert_eq!(ra, n);
        let exact = observability_matrix_series(&sys, &x, &chains).unwrap();
        assert!((&centred - &exact).amax() / exact.amax() < 1e-6);
    }
}

#[test]
fn reduced_split_equivalence_and_elimination() {
    let cfg = StateProbeConfig::new(3, 3);
    let sys = PosImuStateSystem::new(3, 3).unwrap();
    let mut r = rng(9);
    for _ in 0..20 {
        let x = random_state_formulation(&sys, &cfg, &mut r);
        let s = state_split(&sys, &x, &cfg).unwrap();
        assert!(s.elimination_residual < 1e-10, "{}", s.elimination_residual);
        let a = TrialRank::from_matrix(&s.os, cfg.tol, 0).unwrap();
        let b = TrialRank::from_matrix(&s.reduced, cfg.tol, 0).unwrap();
        assert!(a.is_full() && b.is_full());
    }
}

#[test]
fn state_thin_set_probe() {
    let cfg = StateProbeConfig::new(3, 3);
    let rep = thin_set_probe_state_formulation(&cfg, 20, 10).unwrap();
    assert_eq!(rep.random_full_fraction(), 1.0);
    assert_eq!(rep.degenerate_deficient_fraction(), 1.0);
    assert_eq!(rep.perturbed_full_fraction(), 1.0);
    assert_eq!(rep.equivalence_violations(), 0);
    assert!(rep.to_csv().lines().count() > 20);
}

#[test]
fn omega_derivative_closed_forms() {
    let u = Vector3::new(0.3, -1.0, 2.0);
    let w = Vector3::new(-0.5, 0.2, 1.0);
    let z = Vector3::zeros();
    let om = [z, z, u, z, w];
    assert!((omega_derivative(&om, 1) - skew(&u)).amax() < 1e-15);
    assert!((omega_derivative(&om, 3) - skew(&w)).amax() < 1e-15);
    assert!(omega_derivative(&om, 5).amax() < 1e-15);
    let six = (skew(&u) * skew(&w) + skew(&w) * skew(&u)) * 15.0;
    assert!((omega_derivative(&om, 6) - six).amax() < 1e-13);
}

#[test]
fn inter_imu_probe() {
    let cfg = InterImuProbeConfig::default();
    let rep = thin_set_probe_inter_imu(&cfg, 10, 11).unwrap();
    assert_eq!(rep.excited_full_fraction(), 1.0, "{:?}", rep.excited);
    assert_eq!(rep.zero_lever_arm_deficient_fraction(), 1.0);
    let c = &rep.constructed;
    assert_eq!((c.theta_rank, c.phi_rank, c.psi_rank), (3, 3, 3));
    assert!(c.full.is_full(), "{:?}", c.full);
}

#[test]
fn inter_imu_outputs_match_measurement_model() {
    use crate::eskf::MeasurementModel;
    use crate::models::{InterImuMeasurement, InterImuModel};
    use crate::motion_model::make_integrator_model;
    let model = InterImuModel::new(
        make_integrator_model(3, &[1.0; 3]).unwrap(),
        make_integrator_model(2, &[1.0; 2]).unwrap(),
        0.0,
        0.0,
    )
    .unwrap();
    let sys = InterImuSystem::new(3, 2).unwrap();
    assert_eq!(crate::eskf::ProcessModel::layout(&model).as_ref(), sys.layout().as_ref());
    let cfg = InterImuProbeConfig::new(3, 2);
    let x = random_inter_imu_state(&sys, &cfg, &Vector3::new(0.1, -0.2, 0.05), &mut rng(12));
    let meas = InterImuMeasurement {
        ids: model.blocks(),
        sigma_w1: 1.0,
        sigma_a1: 1.0,
        sigma_a2: 1.0,
    };
    let z = meas.predict(&x);
    let h1 = eval_output(&sys, InterImuSystem::H_ACCEL2, &x);
    let h2 = eval_output(&sys, InterImuSystem::H_GYRO1, &x);
    assert!((z.rows(6, 3) - h1).amax() < 1e-14);
    assert!((z.rows(0, 3) - h2).amax() < 1e-14);
}
