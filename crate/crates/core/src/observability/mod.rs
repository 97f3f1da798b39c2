//! Nonlinear observability analysis on product manifolds.
//!
//! Systems are described by polynomial vector fields and output maps in
//! embedded coordinates (rotations as 9 matrix entries with `Ṙ = R⌊ω⌋`), see
//! [`SystemDescription`]. Two engines compute Lie derivatives and their
//! chart gradients:
//!
//! * a truncated Taylor-series engine for drift-only chains, exact up to
//!   rounding, which integrates the flow as a power series in time with a
//!   forward-mode tangent seed per chart direction;
//! * nested central differences for arbitrary chains (controls included),
//!   with depth capped at [`FD_MAX_DEPTH`].

mod probes;
mod systems;

use std::ops::{Add, AddAssign, Mul, Neg, Sub};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix3};
use rayon::prelude::*;

use crate::error::{ensure_finite_slice, Error, Result};
use crate::linalg::{self, RankReport};
use crate::manifold::{directional_derivative, vee, BlockKind, NominalState, StateLayout};

pub use probes::*;
pub use systems::*;

/// Arithmetic needed to evaluate polynomial fields.
pub trait Scalar:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Neg<Output = Self>
{
    fn cst(v: f64) -> Self;
    fn scale(self, k: f64) -> Self;
}

impl Scalar for f64 {
    fn cst(v: f64) -> Self {
        v
    }

    fn scale(self, k: f64) -> Self {
        self * k
    }
}

/// Input-linear system `ẋ = f₀(x) + Σ fᵢ(x) uᵢ`, `y_j = h_j(x)`.
pub trait SystemDescription: Sync {
    fn layout(&self) -> &Arc<StateLayout>;

    /// Number of vector fields including the drift `f₀`.
    fn field_count(&self) -> usize {
        1
    }

    fn output_count(&self) -> usize;

    /// Field `i` in embedded coordinates.
    fn field<S: Scalar>(&self, i: usize, x: &[S]) -> Vec<S>;

    /// Output `j` in embedded coordinates.
    fn output<S: Scalar>(&self, j: usize, x: &[S]) -> Vec<S>;
}

/// A Lie-derivative chain `L_{f^k} ⋯ L_{f^1} h_j`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LieChain {
    /// Field indices, innermost first (`fields[0]` is `f^1`); 0 is the drift.
    pub fields: Vec<usize>,
    pub output: usize,
}

impl LieChain {
    pub fn new(output: usize, fields: Vec<usize>) -> Self {
        LieChain { fields, output }
    }

    /// `k`-fold drift derivative of output `j`.
    pub fn drift(output: usize, order: usize) -> Self {
        LieChain {
            fields: vec![0; order],
            output,
        }
    }

    pub fn order(&self) -> usize {
        self.fields.len()
    }

    pub fn is_drift_only(&self) -> bool {
        self.fields.iter().all(|&f| f == 0)
    }
}

/// Drift chains `0..=max_order` for `output`.
pub fn drift_chains(output: usize, orders: std::ops::RangeInclusive<usize>) -> Vec<LieChain> {
    orders.map(|k| LieChain::drift(output, k)).collect()
}

fn check_chains<D: SystemDescription>(sys: &D, chains: &[LieChain]) -> Result<()> {
    for c in chains {
        if c.output >= sys.output_count() {
            return Err(Error::InvalidInput(format!("chain output index {} out of range", c.output)));
        }
        if let Some(&f) = c.fields.iter().find(|&&f| f >= sys.field_count()) {
            return Err(Error::InvalidInput(format!("chain field index {f} out of range")));
        }
    }
    Ok(())
}

fn check_state<D: SystemDescription>(sys: &D, x: &NominalState) -> Result<()> {
    if x.layout().as_ref() != sys.layout().as_ref() {
        return Err(Error::InvalidInput("state layout does not match the system".into()));
    }
    if !x.is_finite() {
        return Err(Error::NonFinite("observability evaluation point".into()));
    }
    Ok(())
}

/// Output `j` evaluated at `x`.
pub fn eval_output<D: SystemDescription>(sys: &D, j: usize, x: &NominalState) -> DVector<f64> {
    DVector::from_vec(sys.output::<f64>(j, &x.embed()))
}

/// Field `i` at `x` in chart coordinates (rotation blocks as body rates).
pub fn eval_field_tangent<D: SystemDescription>(sys: &D, i: usize, x: &NominalState) -> DVector<f64> {
    let layout = sys.layout();
    let f = sys.field::<f64>(i, &x.embed());
    let mut out = DVector::zeros(layout.tangent_dim());
    for (b, blk) in layout.blocks().iter().enumerate() {
        let e = layout.embedded_range(b);
        let t = layout.tangent_range(b);
        match blk.kind {
            BlockKind::Euclidean(_) => out.rows_mut(t.start, t.len()).copy_from_slice(&f[e]),
            BlockKind::Rotation => {
                let rdot = Matrix3::from_row_slice(&f[e]);
                let w = x.rotation(b).matrix().transpose() * rdot;
                out.rows_mut(t.start, 3).copy_from(&vee(&((w - w.transpose()) * 0.5)));
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Taylor-series engine

const SERIES_LEN: usize = 12;

/// Highest chain order the series engine supports.
pub const MAX_SERIES_ORDER: usize = SERIES_LEN - 1;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct Dual {
    v: f64,
    d: f64,
}

impl Dual {
    const ZERO: Dual = Dual { v: 0.0, d: 0.0 };

    fn is_zero(self) -> bool {
        self.v == 0.0 && self.d == 0.0
    }
}

/// Truncated power series in time with dual (tangent) coefficients.
#[derive(Clone, Copy, Debug)]
pub struct Series([Dual; SERIES_LEN]);

impl Add for Series {
    type Output = Series;
    fn add(mut self, o: Series) -> Series {
        for (a, b) in self.0.iter_mut().zip(&o.0) {
            a.v += b.v;
            a.d += b.d;
        }
        self
    }
}

impl Sub for Series {
    type Output = Series;
    fn sub(mut self, o: Series) -> Series {
        for (a, b) in self.0.iter_mut().zip(&o.0) {
            a.v -= b.v;
            a.d -= b.d;
        }
        self
    }
}

impl Neg for Series {
    type Output = Series;
    fn neg(self) -> Series {
        self.scale(-1.0)
    }
}

impl Mul for Series {
    type Output = Series;
    fn mul(self, o: Series) -> Series {
        let mut out = [Dual::ZERO; SERIES_LEN];
        for (i, a) in self.0.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in o.0[..SERIES_LEN - i].iter().enumerate() {
                let c = &mut out[i + j];
                c.v += a.v * b.v;
                c.d += a.v * b.d + a.d * b.v;
            }
        }
        Series(out)
    }
}

impl AddAssign for Series {
    fn add_assign(&mut self, o: Series) {
        *self = *self + o;
    }
}

impl Scalar for Series {
    fn cst(v: f64) -> Self {
        let mut s = [Dual::ZERO; SERIES_LEN];
        s[0].v = v;
        Series(s)
    }

    fn scale(mut self, k: f64) -> Self {
        for a in self.0.iter_mut() {
            a.v *= k;
            a.d *= k;
        }
        self
    }
}

/// Embedded tangent seed `d/dε embed(x ⊞ ε eᵢ)` for chart direction `i`.
fn tangent_seed(x: &NominalState, i: usize) -> Vec<f64> {
    let layout = x.layout();
    let mut seed = vec![0.0; layout.embedded_dim()];
    for (b, blk) in layout.blocks().iter().enumerate() {
        let t = layout.tangent_range(b);
        if !t.contains(&i) {
            continue;
        }
        let e = layout.embedded_range(b);
        match blk.kind {
            BlockKind::Euclidean(_) => seed[e.start + (i - t.start)] = 1.0,
            BlockKind::Rotation => {
                let mut axis = nalgebra::Vector3::zeros();
                axis[i - t.start] = 1.0;
                let d = x.rotation(b).matrix() * crate::manifold::skew(&axis);
                for r in 0..3 {
                    for c in 0..3 {
                        seed[e.start + 3 * r + c] = d[(r, c)];
                    }
                }
            }
        }
    }
    seed
}

/// Output series of every output along the drift flow from `x` with the
/// tangent seed `seed`. Coefficients up to `order` are exact.
fn output_series<D: SystemDescription>(
    sys: &D,
    x: &NominalState,
    seed: Option<&[f64]>,
    order: usize,
) -> Vec<Vec<Series>> {
    let emb = x.embed();
    let mut xs: Vec<Series> = emb
        .iter()
        .enumerate()
        .map(|(m, &v)| {
            let mut s = Series::cst(v);
            s.0[0].d = seed.map_or(0.0, |sd| sd[m]);
            s
        })
        .collect();
    for k in 0..order {
        let f = sys.field(0, &xs);
        let inv = 1.0 / (k + 1) as f64;
        for (xm, fm) in xs.iter_mut().zip(&f) {
            xm.0[k + 1] = Dual {
                v: fm.0[k].v * inv,
                d: fm.0[k].d * inv,
            };
        }
    }
    (0..sys.output_count()).map(|j| sys.output(j, &xs)).collect()
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// `L^k_{f₀} h_j(x)` for `k = 0..=max_order`, computed from the Taylor
/// expansion of the drift flow.
pub fn drift_lie_derivatives<D: SystemDescription>(
    sys: &D,
    x: &NominalState,
    output: usize,
    max_order: usize,
) -> Result<Vec<DVector<f64>>> {
    check_state(sys, x)?;
    check_chains(sys, &[LieChain::drift(output, 0)])?;
    if max_order > MAX_SERIES_ORDER {
        return Err(Error::InvalidInput(format!(
            "series engine supports orders up to {MAX_SERIES_ORDER}, got {max_order}"
        )));
    }
    let out = output_series(sys, x, None, max_order);
    let res: Vec<DVector<f64>> = (0..=max_order)
        .map(|k| DVector::from_iterator(out[output].len(), out[output].iter().map(|s| s.0[k].v * factorial(k))))
        .collect();
    for r in &res {
        ensure_finite_slice("Lie derivative", r.as_slice())?;
    }
    Ok(res)
}

/// Observability matrix of drift-only chains via the series engine.
pub fn observability_matrix_series<D: SystemDescription>(
    sys: &D,
    x: &NominalState,
    chains: &[LieChain],
) -> Result<DMatrix<f64>> {
    check_state(sys, x)?;
    check_chains(sys, chains)?;
    if let Some(c) = chains.iter().find(|c| !c.is_drift_only()) {
        return Err(Error::InvalidInput(format!(
            "series engine handles drift-only chains, got fields {:?}",
            c.fields
        )));
    }
    let max_order = chains.iter().map(LieChain::order).max().unwrap_or(0);
    if max_order > MAX_SERIES_ORDER {
        return Err(Error::InvalidInput(format!(
            "series engine supports orders up to {MAX_SERIES_ORDER}, got {max_order}"
        )));
    }
    let n = sys.layout().tangent_dim();
    let columns: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let seed = tangent_seed(x, i);
            let out = output_series(sys, x, Some(&seed), max_order);
            chains
                .iter()
                .flat_map(|c| {
                    let k = c.order();
                    let f = factorial(k);
                    out[c.output].iter().map(move |s| s.0[k].d * f).collect::<Vec<_>>()
                })
                .collect()
        })
        .collect();
    let rows = columns.first().map_or(0, Vec::len);
    let m = DMatrix::from_fn(rows, n, |r, c| columns[c][r]);
    ensure_finite_slice("observability matrix", m.as_slice())?;
    Ok(m)
}

// ---------------------------------------------------------------------------
// Finite-difference engine

/// Maximum nesting of central differences (Lie levels plus the gradient).
pub const FD_MAX_DEPTH: usize = 4;

/// Step of nesting level `k` (1 = innermost): `1e-4 · 10^{k/2}`.
pub fn fd_step(level: usize) -> f64 {
    1e-4 * 10f64.powf(level.max(1) as f64 / 2.0)
}

fn lie_fd<D: SystemDescription>(sys: &D, fields: &[usize], output: usize, x: &NominalState) -> Result<DVector<f64>> {
    match fields.split_last() {
        None => {
            let y = eval_output(sys, output, x);
            ensure_finite_slice("output", y.as_slice())?;
            Ok(y)
        }
        Some((&outer, inner)) => {
            let v = eval_field_tangent(sys, outer, x);
            directional_derivative(|y| lie_fd(sys, inner, output, y), x, &v, fd_step(fields.len()))
        }
    }
}

/// `L_{f^k} ⋯ L_{f^1} h_j(x)` by nested central differences.
pub fn lie_derivative<D: SystemDescription>(sys: &D, chain: &LieChain, x: &NominalState) -> Result<DVector<f64>> {
    check_state(sys, x)?;
    check_chains(sys, std::slice::from_ref(chain))?;
    if chain.order() >= FD_MAX_DEPTH {
        return Err(Error::InvalidInput(format!(
            "finite-difference chains are limited to order {}",
            FD_MAX_DEPTH - 1
        )));
    }
    lie_fd(sys, &chain.fields, chain.output, x)
}

/// Chart gradient of a fallible function by central differences.
pub fn chart_gradient_fallible<G>(g: G, x: &NominalState, h: f64) -> Result<DMatrix<f64>>
where
    G: Fn(&NominalState) -> Result<DVector<f64>>,
{
    let n = x.layout().tangent_dim();
    let mut cols = Vec::with_capacity(n);
    for i in 0..n {
        let mut e = DVector::zeros(n);
        e[i] = 1.0;
        cols.push(directional_derivative(&g, x, &e, h)?);
    }
    let rows = cols.first().map_or(0, |c| c.len());
    Ok(DMatrix::from_fn(rows, n, |r, c| cols[c][r]))
}

/// Observability matrix by nested central differences.
pub fn observability_matrix_fd<D: SystemDescription>(
    sys: &D,
    x: &NominalState,
    chains: &[LieChain],
) -> Result<DMatrix<f64>> {
    check_state(sys, x)?;
    check_chains(sys, chains)?;
    let mut blocks = Vec::with_capacity(chains.len());
    for c in chains {
        if c.order() >= FD_MAX_DEPTH {
            return Err(Error::InvalidInput(format!(
                "finite-difference chains are limited to order {}",
                FD_MAX_DEPTH - 1
            )));
        }
        let g = chart_gradient_fallible(|y| lie_fd(sys, &c.fields, c.output, y), x, fd_step(c.order() + 1))?;
        blocks.push(g);
    }
    Ok(vstack(&blocks, sys.layout().tangent_dim()))
}

fn vstack(blocks: &[DMatrix<f64>], cols: usize) -> DMatrix<f64> {
    let rows = blocks.iter().map(DMatrix::nrows).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        out.rows_mut(r, b.nrows()).copy_from(b);
        r += b.nrows();
    }
    out
}

/// Engine selection for [`observability_matrix_nl`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Engine {
    /// Series when every chain is drift-only, differences otherwise.
    #[default]
    Auto,
    Series,
    FiniteDifference,
}

/// Stacked chart gradients of the chains' Lie derivatives at `x`.
pub fn observability_matrix_nl<D: SystemDescription>(
    sys: &D,
    x: &NominalState,
    chains: &[LieChain],
    engine: Engine,
) -> Result<DMatrix<f64>> {
    let series_ok =
        chains.iter().all(LieChain::is_drift_only) && chains.iter().all(|c| c.order() <= MAX_SERIES_ORDER);
    match engine {
        Engine::Series => observability_matrix_series(sys, x, chains),
        Engine::FiniteDifference => observability_matrix_fd(sys, x, chains),
        Engine::Auto if series_ok => observability_matrix_series(sys, x, chains),
        Engine::Auto => observability_matrix_fd(sys, x, chains),
    }
}

/// Row offsets of each chain's block inside a stacked matrix.
pub fn chain_row_offsets<D: SystemDescription>(sys: &D, x: &NominalState, chains: &[LieChain]) -> Vec<usize> {
    let emb = x.embed();
    let dims: Vec<usize> = (0..sys.output_count()).map(|j| sys.output::<f64>(j, &emb).len()).collect();
    let mut offs = Vec::with_capacity(chains.len() + 1);
    let mut r = 0;
    for c in chains {
        offs.push(r);
        r += dims[c.output];
    }
    offs.push(r);
    offs
}

/// SVD rank with relative tolerance.
pub fn rank_probe(m: &DMatrix<f64>, tol: f64) -> Result<RankReport> {
    linalg::rank(m, tol)
}

#[cfg(test)]
mod tests;
