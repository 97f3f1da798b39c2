//! Rank probes: input formulation, state formulation thin-set probes and
//! the inter-IMU probes.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{
    drift_chains, observability_matrix_nl, Engine, InterImuSystem, LieChain, PosImuInputSystem,
    PosImuStateSystem, SystemDescription,
};
use crate::error::{Error, Result};
use crate::linalg::{self, RANK_TOL};
use crate::manifold::{skew, BlockKind, NominalState, Rotation};

/// Relative rank tolerance for matrices built by nested differences.
pub const FD_RANK_TOL: f64 = 1e-6;

/// Rank outcome of one probe trial.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialRank {
    pub trial: usize,
    pub rank: usize,
    pub cols: usize,
    /// Smallest singular values relative to the largest, ascending.
    pub singular_tail: Vec<f64>,
    /// Right singular vector of the smallest singular value when deficient.
    pub deficit_direction: Option<Vec<f64>>,
}

impl TrialRank {
    pub fn from_matrix(m: &DMatrix<f64>, tol: f64, trial: usize) -> Result<Self> {
        let rep = linalg::rank(m, tol)?;
        let max = rep.singular_values.first().copied().unwrap_or(0.0);
        let scale = if max > 0.0 { max } else { 1.0 };
        let singular_tail: Vec<f64> = rep.singular_values.iter().rev().take(3).map(|s| s / scale).collect();
        let deficit_direction = if rep.is_full_column_rank() {
            None
        } else {
            let (_, null) = linalg::row_and_null_space(m, tol)?;
            (null.ncols() > 0).then(|| null.column(null.ncols() - 1).iter().copied().collect())
        };
        Ok(TrialRank {
            trial,
            rank: rep.rank,
            cols: rep.cols,
            singular_tail,
            deficit_direction,
        })
    }

    pub fn deficit(&self) -> usize {
        self.cols - self.rank
    }

    pub fn is_full(&self) -> bool {
        self.rank == self.cols
    }
}

fn csv_rows(out: &mut String, probe: &str, trials: &[TrialRank]) {
    let join = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(";");
    for t in trials {
        let _ = writeln!(
            out,
            "{probe},{},{},{},{},{},{}",
            t.trial,
            t.rank,
            t.cols,
            t.deficit(),
            join(&t.singular_tail),
            t.deficit_direction.as_deref().map(join).unwrap_or_default()
        );
    }
}

const CSV_HEADER: &str = "probe,trial,rank,cols,deficit,sigma_tail_rel,deficit_direction\n";

fn fraction(trials: &[TrialRank], pred: impl Fn(&TrialRank) -> bool) -> f64 {
    if trials.is_empty() {
        return 0.0;
    }
    trials.iter().filter(|t| pred(t)).count() as f64 / trials.len() as f64
}

fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

fn normal3(rng: &mut ChaCha8Rng, s: f64) -> Vector3<f64> {
    Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal) * s)
}

fn random_rotation(rng: &mut ChaCha8Rng) -> Rotation {
    let axis = normal3(rng, 1.0).normalize();
    Rotation::exp(&(axis * rng.gen_range(0.0..std::f64::consts::PI)))
}

/// Fills every block of `x` with random values: rotations uniform in angle,
/// Euclidean blocks standard normal.
fn randomize(x: &mut NominalState, rng: &mut ChaCha8Rng) {
    let layout = x.layout().clone();
    for (i, b) in layout.blocks().iter().enumerate() {
        match b.kind {
            BlockKind::Rotation => x.set_rotation(i, random_rotation(rng)),
            BlockKind::Euclidean(n) => {
                let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
                x.set_vector(i, &v).expect("block length");
            }
        }
    }
}

/// Draws an integrator chain with derivative order `k` scaled by `scale^k`.
fn random_chain(rng: &mut ChaCha8Rng, order: usize, scale: f64) -> Vec<f64> {
    (0..3 * order)
        .map(|i| rng.sample::<f64, _>(StandardNormal) * scale.powi((i / 3) as i32))
        .collect()
}

fn set_chain_entry(x: &mut NominalState, block: usize, k: usize, v: &Vector3<f64>) {
    x.set_vec3(block, k, v);
}

// ---------------------------------------------------------------------------
// Input formulation

/// The ten chains of the input-formulation analysis: `L⁰h₁`, `L_{f₀}h₁`,
/// `L_{f₁}h₁`, `L_{f₂}h₁`, `L_{f₀f₀}h₁`, `L_{f₄f₀}h₁`, `L_{f₅f₀}h₁`,
/// `L_{f₀}h₂`, `L_{f₁f₀}h₂`, `L_{f₂f₀}h₂` (outer field written first).
pub fn o_i_chains() -> Vec<LieChain> {
    let h1 = PosImuInputSystem::H_POSITION;
    let h2 = PosImuInputSystem::H_DIRECTION;
    vec![
        LieChain::new(h1, vec![]),
        LieChain::new(h1, vec![0]),
        LieChain::new(h1, vec![1]),
        LieChain::new(h1, vec![2]),
        LieChain::new(h1, vec![0, 0]),
        LieChain::new(h1, vec![0, 4]),
        LieChain::new(h1, vec![0, 5]),
        LieChain::new(h2, vec![0]),
        LieChain::new(h2, vec![0, 1]),
        LieChain::new(h2, vec![0, 2]),
    ]
}

/// Random evaluation point of the input formulation.
pub fn random_input_state(sys: &PosImuInputSystem, rng: &mut ChaCha8Rng) -> NominalState {
    let mut x = NominalState::origin(sys.layout().clone());
    randomize(&mut x, rng);
    x
}

/// Rank of `O_I` at `trials` random states.
pub fn o_i_probe(trials: usize, seed: u64) -> Result<Vec<TrialRank>> {
    let sys = PosImuInputSystem::new();
    let chains = o_i_chains();
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, t);
            let x = random_input_state(&sys, &mut rng);
            let o = observability_matrix_nl(&sys, &x, &chains, Engine::FiniteDifference)?;
            TrialRank::from_matrix(&o, FD_RANK_TOL, t)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// State formulation

/// Configuration of the state-formulation probes.
#[derive(Clone, Debug, PartialEq)]
pub struct StateProbeConfig {
    pub na: usize,
    pub nw: usize,
    /// Highest order of `h₁` (default `N_a + 2`).
    pub n1: usize,
    /// Highest order of `h₂` (default `N_ω + 1`).
    pub n2: usize,
    /// Derivative order `k` of the chains is drawn with scale `order_scale^k`.
    pub order_scale: f64,
    /// Size of the escape perturbation of degenerate states.
    pub perturbation: f64,
    pub tol: f64,
}

impl StateProbeConfig {
    pub fn new(na: usize, nw: usize) -> Self {
        StateProbeConfig {
            na,
            nw,
            n1: na + 2,
            n2: nw + 1,
            order_scale: 0.1,
            perturbation: 1e-3,
            tol: RANK_TOL,
        }
    }
}

impl Default for StateProbeConfig {
    fn default() -> Self {
        Self::new(4, 4)
    }
}

/// Chains of `O_S`: `h₁` orders `0..=n₁`, `h₂` orders `0..=n₂`, `h₃` orders
/// `0..N_a`, `h₄` orders `0..N_ω`.
pub fn o_s_chains(cfg: &StateProbeConfig) -> Vec<LieChain> {
    let mut c = drift_chains(PosImuStateSystem::H_POSITION, 0..=cfg.n1);
    c.extend(drift_chains(PosImuStateSystem::H_DIRECTION, 0..=cfg.n2));
    c.extend(drift_chains(PosImuStateSystem::H_ACCEL, 0..=cfg.na - 1));
    c.extend(drift_chains(PosImuStateSystem::H_GYRO, 0..=cfg.nw - 1));
    c
}

/// Random sufficiently excited state of the state formulation.
pub fn random_state_formulation(sys: &PosImuStateSystem, cfg: &StateProbeConfig, rng: &mut ChaCha8Rng) -> NominalState {
    let mut x = NominalState::origin(sys.layout().clone());
    randomize(&mut x, rng);
    x.set_vector(6, &random_chain(rng, cfg.na, cfg.order_scale)).expect("gamma_a");
    x.set_vector(7, &random_chain(rng, cfg.nw, cfg.order_scale)).expect("gamma_w");
    x
}

/// Degenerate state with every angular-velocity derivative parallel to
/// `β = Rᵀ e`.
pub fn parallel_rate_state(sys: &PosImuStateSystem, cfg: &StateProbeConfig, rng: &mut ChaCha8Rng) -> NominalState {
    let mut x = random_state_formulation(sys, cfg, rng);
    let beta = x.rotation(2).matrix().transpose() * sys.reference;
    for k in 0..cfg.nw {
        let s: f64 = rng.sample::<f64, _>(StandardNormal) * cfg.order_scale.powi(k as i32);
        set_chain_entry(&mut x, 7, k, &(beta * s));
    }
    x
}

/// `O_S` and its reduced form: the matrix whose full column rank is
/// equivalent to that of `O_S`, with its blocks `O_S1` and `O_S2`.
#[derive(Clone, Debug)]
pub struct StateSplit {
    pub os: DMatrix<f64>,
    /// Rows `[h₂⁰; h₁² … h₁^{n₁}; h₂¹ … h₂^{n₂}]`, columns `[θ, c, a, ω]`.
    pub reduced: DMatrix<f64>,
    pub os1: DMatrix<f64>,
    pub os2: DMatrix<f64>,
    /// Largest θ-entry of the `h₂` rows left after eliminating with `⌊β⌋`.
    pub elimination_residual: f64,
}

/// Builds `O_S` at `x` and performs the block elimination by pivots `p`,
/// `v`, `b_a`, `b_ω` and the higher chain states.
pub fn state_split(sys: &PosImuStateSystem, x: &NominalState, cfg: &StateProbeConfig) -> Result<StateSplit> {
    if cfg.n1 < 2 || cfg.n2 < 1 {
        return Err(Error::InvalidInput("state probe needs n1 >= 2 and n2 >= 1".into()));
    }
    let chains = o_s_chains(cfg);
    let os = observability_matrix_nl(sys, x, &chains, Engine::Series)?;
    let l = sys.layout();
    let col = |b: usize| l.tangent_range(b).start;
    let cols = [col(2), col(3), col(6), col(7)];
    let h1_row = |k: usize| 3 * k;
    let h2_row = |k: usize| 3 * (cfg.n1 + 1) + 3 * k;
    let beta = x.rotation(2).matrix().transpose() * sys.reference;
    let proj = beta * beta.transpose() / beta.norm_squared();

    let n_rows = 3 + 3 * (cfg.n1 - 1) + 3 * cfg.n2;
    let mut reduced = DMatrix::zeros(n_rows, 12);
    let copy_row = |dst: &mut DMatrix<f64>, r_dst: usize, r_src: usize| {
        for (bj, &c0) in cols.iter().enumerate() {
            dst.view_mut((r_dst, 3 * bj), (3, 3)).copy_from(&os.view((r_src, c0), (3, 3)));
        }
    };
    copy_row(&mut reduced, 0, h2_row(0));
    for k in 2..=cfg.n1 {
        copy_row(&mut reduced, 3 * (k - 1), h1_row(k));
    }
    let mut residual = 0.0f64;
    for k in 1..=cfg.n2 {
        let r = 3 + 3 * (cfg.n1 - 1) + 3 * (k - 1);
        copy_row(&mut reduced, r, h2_row(k));
        let g: Matrix3<f64> = reduced.fixed_view::<3, 3>(r, 0).into_owned();
        let left = g * proj;
        residual = residual.max(left.amax());
        reduced.fixed_view_mut::<3, 3>(r, 0).copy_from(&left);
    }
    let os1 = reduced.view((0, 0), (3 + 3 * (cfg.n1 - 1), 9)).into_owned();
    let os2 = reduced.view((3 + 3 * (cfg.n1 - 1), 9), (3 * cfg.n2, 3)).into_owned();
    Ok(StateSplit {
        os,
        reduced,
        os1,
        os2,
        elimination_residual: residual,
    })
}

/// Outcome of [`thin_set_probe_state_formulation`].
#[derive(Clone, Debug, Default)]
pub struct ThinSetReport {
    pub random_os: Vec<TrialRank>,
    pub random_reduced: Vec<TrialRank>,
    pub degenerate_os2: Vec<TrialRank>,
    pub degenerate_os: Vec<TrialRank>,
    pub degenerate_reduced: Vec<TrialRank>,
    pub perturbed_os2: Vec<TrialRank>,
}

impl ThinSetReport {
    pub fn random_full_fraction(&self) -> f64 {
        fraction(&self.random_os, TrialRank::is_full)
    }

    pub fn degenerate_deficient_fraction(&self) -> f64 {
        fraction(&self.degenerate_os2, |t| !t.is_full())
    }

    pub fn perturbed_full_fraction(&self) -> f64 {
        fraction(&self.perturbed_os2, TrialRank::is_full)
    }

    /// Trials where `O_S` and the reduced matrix disagree on the deficit.
    pub fn equivalence_violations(&self) -> usize {
        let pairs = self
            .random_os
            .iter()
            .zip(&self.random_reduced)
            .chain(self.degenerate_os.iter().zip(&self.degenerate_reduced));
        pairs.filter(|(a, b)| a.deficit() != b.deficit()).count()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        csv_rows(&mut s, "state_random_os", &self.random_os);
        csv_rows(&mut s, "state_random_reduced", &self.random_reduced);
        csv_rows(&mut s, "state_parallel_os2", &self.degenerate_os2);
        csv_rows(&mut s, "state_parallel_os", &self.degenerate_os);
        csv_rows(&mut s, "state_parallel_reduced", &self.degenerate_reduced);
        csv_rows(&mut s, "state_perturbed_os2", &self.perturbed_os2);
        s
    }
}

/// Random excitation, parallel-rate degenerate states and their perturbed
/// neighbours for the state formulation.
pub fn thin_set_probe_state_formulation(cfg: &StateProbeConfig, trials: usize, seed: u64) -> Result<ThinSetReport> {
    if cfg.na < 2 || cfg.nw < 2 {
        return Err(Error::InvalidInput("state probe needs chain orders of at least 2".into()));
    }
    let sys = PosImuStateSystem::new(cfg.na, cfg.nw)?;
    type Row = (TrialRank, TrialRank, TrialRank, TrialRank, TrialRank, TrialRank);
    let rows: Vec<Row> = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<Row> {
            let mut rng = trial_rng(seed, t);
            let x = random_state_formulation(&sys, cfg, &mut rng);
            let split = state_split(&sys, &x, cfg)?;
            let r_os = TrialRank::from_matrix(&split.os, cfg.tol, t)?;
            let r_red = TrialRank::from_matrix(&split.reduced, cfg.tol, t)?;

            let xd = parallel_rate_state(&sys, cfg, &mut rng);
            let split_d = state_split(&sys, &xd, cfg)?;
            let d_os2 = TrialRank::from_matrix(&split_d.os2, cfg.tol, t)?;
            let d_os = TrialRank::from_matrix(&split_d.os, cfg.tol, t)?;
            let d_red = TrialRank::from_matrix(&split_d.reduced, cfg.tol, t)?;

            let n = sys.layout().tangent_dim();
            let noise = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal) * cfg.perturbation);
            let xp = xd.boxplus(&noise);
            let split_p = state_split(&sys, &xp, cfg)?;
            let p_os2 = TrialRank::from_matrix(&split_p.os2, cfg.tol, t)?;
            Ok((r_os, r_red, d_os2, d_os, d_red, p_os2))
        })
        .collect::<Result<_>>()?;
    let mut rep = ThinSetReport::default();
    for (a, b, c, d, e, f) in rows {
        rep.random_os.push(a);
        rep.random_reduced.push(b);
        rep.degenerate_os2.push(c);
        rep.degenerate_os.push(d);
        rep.degenerate_reduced.push(e);
        rep.perturbed_os2.push(f);
    }
    Ok(rep)
}

// ---------------------------------------------------------------------------
// Inter-IMU

/// Configuration of the inter-IMU probes.
#[derive(Clone, Debug, PartialEq)]
pub struct InterImuProbeConfig {
    pub nt: usize,
    pub na: usize,
    /// Highest order of `h₁ = a_m2` (default `max(N_τ, N_a) + 2`).
    pub n: usize,
    pub lever_arm: Vector3<f64>,
    pub order_scale: f64,
    pub tol: f64,
}

impl InterImuProbeConfig {
    pub fn new(nt: usize, na: usize) -> Self {
        InterImuProbeConfig {
            nt,
            na,
            n: nt.max(na) + 2,
            lever_arm: Vector3::new(0.1, 0.1, 0.1),
            order_scale: 0.1,
            tol: RANK_TOL,
        }
    }
}

impl Default for InterImuProbeConfig {
    fn default() -> Self {
        Self::new(4, 4)
    }
}

/// Chains of the inter-IMU analysis: `a_m2` orders `0..=n`, `ω_m1` orders
/// `0..=N_τ`, `a_m1` orders `0..N_a`.
pub fn inter_imu_chains(nt: usize, na: usize, n: usize) -> Vec<LieChain> {
    let mut c = drift_chains(InterImuSystem::H_ACCEL2, 0..=n);
    c.extend(drift_chains(InterImuSystem::H_GYRO1, 0..=nt));
    c.extend(drift_chains(InterImuSystem::H_ACCEL1, 0..=na - 1));
    c
}

/// Random excited inter-IMU state with the given lever arm.
pub fn random_inter_imu_state(
    sys: &InterImuSystem,
    cfg: &InterImuProbeConfig,
    lever_arm: &Vector3<f64>,
    rng: &mut ChaCha8Rng,
) -> NominalState {
    let mut x = NominalState::origin(sys.layout().clone());
    randomize(&mut x, rng);
    x.set_vec3(3, 0, lever_arm);
    x.set_vector(5, &random_chain(rng, cfg.nt, cfg.order_scale)).expect("gamma_tau");
    x.set_vector(6, &random_chain(rng, cfg.na, cfg.order_scale)).expect("gamma_a");
    x
}

/// `Ω^{(m)} = Σₖ C(m,k) ⌊ω^{(k)}⌋⌊ω^{(m−k)}⌋ + ⌊ω^{(m+1)}⌋` from the
/// derivatives `w[k] = ω^{(k)}` (missing entries are zero).
pub fn omega_derivative(w: &[Vector3<f64>], m: usize) -> Matrix3<f64> {
    let get = |k: usize| w.get(k).copied().unwrap_or_else(Vector3::zeros);
    let mut binom = 1.0;
    let mut out = Matrix3::zeros();
    for k in 0..=m {
        out += skew(&get(k)) * skew(&get(m - k)) * binom;
        binom = binom * (m - k) as f64 / (k + 1) as f64;
    }
    out + skew(&get(m + 1))
}

/// Ranks of the three blocks of the sufficient condition and of the full
/// observability matrix at the constructed state.
#[derive(Clone, Debug)]
pub struct ExcitationCheck {
    pub theta_rank: usize,
    pub phi_rank: usize,
    pub psi_rank: usize,
    pub full: TrialRank,
}

/// Chain orders used by the constructed sufficient-excitation state.
pub const EXCITATION_CHECK_ORDERS: (usize, usize) = (4, 6);

/// State meeting the sufficient condition with `i = 2`, `j = 4`, `k = 5`,
/// `l = 6`, `m = 4`: `ω = ω̇ = ω⁽³⁾ = 0`, `ω⁽²⁾ = u`, `ω⁽⁴⁾ = w`,
/// `a⁽¹⁾ = −Ω⁽¹⁾c`, `a⁽³⁾ = −Ω⁽³⁾c`, and `a⁽⁵⁾` not parallel to `Ω⁽⁶⁾c`.
pub fn sufficient_excitation_state(sys: &InterImuSystem, rng: &mut ChaCha8Rng) -> Result<(NominalState, Vec<Vector3<f64>>)> {
    if sys.orders() != EXCITATION_CHECK_ORDERS {
        return Err(Error::InvalidInput("construction needs N_tau = 4 and N_a = 6".into()));
    }
    let c = normal3(rng, 0.2);
    let u = normal3(rng, 1.0);
    let w = normal3(rng, 1.0);
    let zero = Vector3::zeros();
    // ω⁽⁰⁾ … ω⁽⁷⁾; the τ chain of order 4 makes ω⁽⁵⁾ onwards vanish.
    let omegas = vec![zero, zero, u, zero, w, zero, zero, zero];
    let mut x = NominalState::origin(sys.layout().clone());
    randomize(&mut x, rng);
    x.set_vec3(2, 0, &zero);
    x.set_vec3(3, 0, &c);
    for k in 0..4 {
        x.set_vec3(5, k, &omegas[k + 1]);
    }
    let mut a: Vec<Vector3<f64>> = (0..6).map(|_| normal3(rng, 1.0)).collect();
    a[1] = -omega_derivative(&omegas, 1) * c;
    a[3] = -omega_derivative(&omegas, 3) * c;
    for (k, ak) in a.iter().enumerate() {
        x.set_vec3(6, k, ak);
    }
    Ok((x, omegas))
}

/// Evaluates the sufficient condition blocks and the full rank at the
/// constructed state.
pub fn sufficient_excitation_check(seed: u64, tol: f64) -> Result<ExcitationCheck> {
    let (nt, na) = EXCITATION_CHECK_ORDERS;
    let sys = InterImuSystem::new(nt, na)?;
    let mut rng = trial_rng(seed, 0);
    let (x, omegas) = sufficient_excitation_state(&sys, &mut rng)?;
    let c = x.vec3(3, 0);
    let a = |k: usize| if k < na { x.vec3(6, k) } else { Vector3::zeros() };
    let om = |m: usize| omega_derivative(&omegas, m);
    let stack = |blocks: &[Matrix3<f64>]| {
        let mut m = DMatrix::zeros(3 * blocks.len(), 3);
        for (i, b) in blocks.iter().enumerate() {
            m.view_mut((3 * i, 0), (3, 3)).copy_from(b);
        }
        m
    };
    let theta = stack(&[om(1), om(3)]);
    let phi = stack(&[-skew(&(a(5) + om(5) * c)), -skew(&(a(6) + om(6) * c))]);
    let w4 = omegas[4];
    let psi = stack(&[-skew(&(skew(&w4) * c)) - skew(&w4) * skew(&c)]);
    let chains = inter_imu_chains(nt, na, 6);
    let o = observability_matrix_nl(&sys, &x, &chains, Engine::Series)?;
    Ok(ExcitationCheck {
        theta_rank: linalg::rank(&theta, tol)?.rank,
        phi_rank: linalg::rank(&phi, tol)?.rank,
        psi_rank: linalg::rank(&psi, tol)?.rank,
        full: TrialRank::from_matrix(&o, tol, 0)?,
    })
}

/// Outcome of [`thin_set_probe_inter_imu`].
#[derive(Clone, Debug)]
pub struct InterImuProbeReport {
    pub excited: Vec<TrialRank>,
    pub zero_lever_arm: Vec<TrialRank>,
    pub constructed: ExcitationCheck,
}

impl InterImuProbeReport {
    pub fn excited_full_fraction(&self) -> f64 {
        fraction(&self.excited, TrialRank::is_full)
    }

    /// Fraction of zero-lever-arm trials with a deficit of at least 3.
    pub fn zero_lever_arm_deficient_fraction(&self) -> f64 {
        fraction(&self.zero_lever_arm, |t| t.deficit() >= 3)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        csv_rows(&mut s, "inter_imu_excited", &self.excited);
        csv_rows(&mut s, "inter_imu_zero_lever_arm", &self.zero_lever_arm);
        csv_rows(&mut s, "inter_imu_constructed", std::slice::from_ref(&self.constructed.full));
        s
    }
}

/// Random excitation with the configured lever arm, the same with `c = 0`,
/// and the constructed sufficient-excitation state.
pub fn thin_set_probe_inter_imu(cfg: &InterImuProbeConfig, trials: usize, seed: u64) -> Result<InterImuProbeReport> {
    let sys = InterImuSystem::new(cfg.nt, cfg.na)?;
    let chains = inter_imu_chains(cfg.nt, cfg.na, cfg.n);
    let pairs: Vec<(TrialRank, TrialRank)> = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<(TrialRank, TrialRank)> {
            let mut rng = trial_rng(seed, t);
            let x = random_inter_imu_state(&sys, cfg, &cfg.lever_arm, &mut rng);
            let o = observability_matrix_nl(&sys, &x, &chains, Engine::Series)?;
            let mut x0 = x.clone();
            x0.set_vec3(3, 0, &Vector3::zeros());
            let o0 = observability_matrix_nl(&sys, &x0, &chains, Engine::Series)?;
            Ok((
                TrialRank::from_matrix(&o, cfg.tol, t)?,
                TrialRank::from_matrix(&o0, cfg.tol, t)?,
            ))
        })
        .collect::<Result<_>>()?;
    let (excited, zero_lever_arm) = pairs.into_iter().unzip();
    Ok(InterImuProbeReport {
        excited,
        zero_lever_arm,
        constructed: sufficient_excitation_check(seed, cfg.tol)?,
    })
}
