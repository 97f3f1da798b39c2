//! SO(3) primitives and the product manifold `R^n x SO(3)^k` used for
//! filter states and observability analysis.
//!
//! Rotations are perturbed on the right: `R = R̄·Exp(θ)`, so tangent vectors
//! of rotation blocks are body-frame rotation vectors.

use std::f64::consts::PI;
use std::ops::{Mul, Range};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix3, Rotation3, Vector3};

use crate::error::{ensure_finite_slice, Error, Result};

/// Rotation vector (axis times angle), the tangent-space coordinate of SO(3).
pub type RotVec = Vector3<f64>;

const SMALL_ANGLE: f64 = 1e-3;

/// Skew-symmetric matrix `⌊v⌋` with `⌊v⌋w = v × w`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`skew`], reading the off-diagonal entries of `m`.
pub fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

fn exp_map(v: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = v.norm_squared();
    let theta = theta2.sqrt();
    let (a, b) = if theta < SMALL_ANGLE {
        (
            1.0 - theta2 / 6.0 + theta2 * theta2 / 120.0,
            0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0,
        )
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    let k = skew(v);
    Matrix3::identity() + k * a + k * k * b
}

fn log_map(r: &Matrix3<f64>) -> Vector3<f64> {
    let w = vee(&(r - r.transpose()));
    let sin_theta = 0.5 * w.norm();
    let cos_theta = 0.5 * (r.trace() - 1.0);
    let theta = sin_theta.atan2(cos_theta);
    if theta < SMALL_ANGLE {
        return w * (0.5 + theta * theta / 12.0);
    }
    if cos_theta > -0.99 {
        return w * (theta / (2.0 * sin_theta));
    }
    // Near pi the antisymmetric part vanishes; recover the axis from the
    // symmetric part using its largest diagonal entry.
    let sym = (r + r.transpose()) * 0.5 - Matrix3::identity() * cos_theta;
    let denom = 1.0 - cos_theta;
    let i = (0..3)
        .max_by(|&a, &b| sym[(a, a)].total_cmp(&sym[(b, b)]))
        .unwrap_or(0);
    let mut axis: Vector3<f64> = sym.column(i) / denom;
    axis /= axis[i].max(0.0).sqrt().max(f64::MIN_POSITIVE);
    axis.normalize_mut();
    if axis.dot(&w) < 0.0 {
        axis = -axis;
    }
    axis * theta
}

/// Exponential map `Exp: R^3 -> SO(3)` (Rodrigues' formula with a Taylor
/// expansion near zero).
pub fn exp_so3(v: &RotVec) -> Result<Rotation> {
    ensure_finite_slice("exp_so3 argument", v.as_slice())?;
    Ok(Rotation(exp_map(v)))
}

/// Logarithm map `Log: SO(3) -> R^3` with angle in `[0, π]`.
pub fn log_so3(r: &Rotation) -> RotVec {
    log_map(&r.0)
}

/// Right Jacobian of SO(3): `Exp(θ + δ) ≈ Exp(θ)·Exp(J_r(θ) δ)`.
pub fn right_jacobian(v: &RotVec) -> Matrix3<f64> {
    let theta2 = v.norm_squared();
    let theta = theta2.sqrt();
    let (a, b) = if theta < SMALL_ANGLE {
        (0.5 - theta2 / 24.0, 1.0 / 6.0 - theta2 / 120.0)
    } else {
        (
            (1.0 - theta.cos()) / theta2,
            (theta - theta.sin()) / (theta2 * theta),
        )
    };
    let k = skew(v);
    Matrix3::identity() - k * a + k * k * b
}

/// Inverse of [`right_jacobian`].
pub fn right_jacobian_inv(v: &RotVec) -> Matrix3<f64> {
    let theta2 = v.norm_squared();
    let theta = theta2.sqrt();
    let c = if theta < SMALL_ANGLE {
        1.0 / 12.0 + theta2 / 720.0
    } else {
        1.0 / theta2 - (1.0 + theta.cos()) / (2.0 * theta * theta.sin())
    };
    let k = skew(v);
    Matrix3::identity() + k * 0.5 + k * k * c
}

/// Geodesic distance `‖Log(R₂ᵀ R₁)‖` in radians.
pub fn geodesic_distance(r1: &Rotation, r2: &Rotation) -> f64 {
    log_map(&(r2.0.transpose() * r1.0)).norm()
}

/// A proper rotation matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Matrix3::identity())
    }

    /// Validates orthonormality and orientation to `1e-6`.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        ensure_finite_slice("rotation matrix", m.as_slice())?;
        let err = (m.transpose() * m - Matrix3::identity()).norm();
        if err > 1e-6 || m.determinant() < 0.0 {
            return Err(Error::InvalidInput(format!(
                "matrix is not a proper rotation (orthonormality error {err:.3e})"
            )));
        }
        Ok(Rotation(m))
    }

    /// Wraps `m` without validation; callers guarantee it lies on SO(3).
    pub fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Rotation(m)
    }

    /// `Exp(v)`; non-finite input yields a non-finite matrix.
    pub fn exp(v: &RotVec) -> Self {
        Rotation(exp_map(v))
    }

    pub fn log(&self) -> RotVec {
        log_map(&self.0)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Rotation(self.0.transpose())
    }

    /// Right perturbation `R·Exp(θ)`.
    pub fn retract(&self, theta: &RotVec) -> Self {
        Rotation(self.0 * exp_map(theta))
    }

    /// `Log(otherᵀ·self)`, so that `other.retract(self.local(other)) == self`.
    pub fn local(&self, other: &Rotation) -> RotVec {
        log_map(&(other.0.transpose() * self.0))
    }

    /// Re-projects onto SO(3) via the polar decomposition.
    pub fn orthonormalized(&self) -> Self {
        let svd = self.0.svd(true, true);
        match (svd.u, svd.v_t) {
            (Some(u), Some(v_t)) => {
                let mut m = u * v_t;
                if m.determinant() < 0.0 {
                    let mut u = u;
                    u.column_mut(2).neg_mut();
                    m = u * v_t;
                }
                Rotation(m)
            }
            _ => *self,
        }
    }

    /// Z-Y-X Euler angles `(roll, pitch, yaw)` with `R = Rz(yaw)·Ry(pitch)·Rx(roll)`.
    pub fn euler_zyx(&self) -> Vector3<f64> {
        let (roll, pitch, yaw) = Rotation3::from_matrix_unchecked(self.0).euler_angles();
        Vector3::new(roll, pitch, yaw)
    }

    pub fn from_euler_zyx(roll: f64, pitch: f64, yaw: f64) -> Self {
        Rotation(*Rotation3::from_euler_angles(roll, pitch, yaw).matrix())
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl Mul for Rotation {
    type Output = Rotation;
    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

impl Mul<Vector3<f64>> for &Rotation {
    type Output = Vector3<f64>;
    fn mul(self, rhs: Vector3<f64>) -> Vector3<f64> {
        self.0 * rhs
    }
}

/// Kind of one factor of the product manifold.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockKind {
    Euclidean(usize),
    Rotation,
}

impl BlockKind {
    pub fn tangent_dim(self) -> usize {
        match self {
            BlockKind::Euclidean(n) => n,
            BlockKind::Rotation => 3,
        }
    }

    /// Dimension when rotations are embedded as 9 matrix entries.
    pub fn embedded_dim(self) -> usize {
        match self {
            BlockKind::Euclidean(n) => n,
            BlockKind::Rotation => 9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub name: String,
    pub kind: BlockKind,
}

/// Ordered list of named blocks with precomputed offsets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StateLayout {
    blocks: Vec<Block>,
    tangent_offsets: Vec<usize>,
    embedded_offsets: Vec<usize>,
    storage: Vec<usize>,
    tangent_dim: usize,
    embedded_dim: usize,
    euclidean_dim: usize,
    rotation_count: usize,
}

impl StateLayout {
    pub fn new<S: Into<String>>(blocks: impl IntoIterator<Item = (S, BlockKind)>) -> Result<Self> {
        let blocks: Vec<Block> = blocks
            .into_iter()
            .map(|(name, kind)| Block {
                name: name.into(),
                kind,
            })
            .collect();
        let mut tangent_offsets = Vec::with_capacity(blocks.len());
        let mut embedded_offsets = Vec::with_capacity(blocks.len());
        let mut storage = Vec::with_capacity(blocks.len());
        let (mut t, mut e, mut eu, mut rc) = (0, 0, 0, 0);
        for (i, b) in blocks.iter().enumerate() {
            if blocks[..i].iter().any(|o| o.name == b.name) {
                return Err(Error::InvalidInput(format!("duplicate block name '{}'", b.name)));
            }
            if b.kind == BlockKind::Euclidean(0) {
                return Err(Error::InvalidInput(format!("block '{}' has zero dimension", b.name)));
            }
            tangent_offsets.push(t);
            embedded_offsets.push(e);
            t += b.kind.tangent_dim();
            e += b.kind.embedded_dim();
            match b.kind {
                BlockKind::Euclidean(n) => {
                    storage.push(eu);
                    eu += n;
                }
                BlockKind::Rotation => {
                    storage.push(rc);
                    rc += 1;
                }
            }
        }
        Ok(StateLayout {
            blocks,
            tangent_offsets,
            embedded_offsets,
            storage,
            tangent_dim: t,
            embedded_dim: e,
            euclidean_dim: eu,
            rotation_count: rc,
        })
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, i: usize) -> &Block {
        &self.blocks[i]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.blocks.iter().position(|b| b.name == name)
    }

    pub fn tangent_dim(&self) -> usize {
        self.tangent_dim
    }

    pub fn embedded_dim(&self) -> usize {
        self.embedded_dim
    }

    pub fn tangent_range(&self, i: usize) -> Range<usize> {
        let o = self.tangent_offsets[i];
        o..o + self.blocks[i].kind.tangent_dim()
    }

    pub fn embedded_range(&self, i: usize) -> Range<usize> {
        let o = self.embedded_offsets[i];
        o..o + self.blocks[i].kind.embedded_dim()
    }

    /// Tangent-coordinate column names, rotation blocks as rotation vectors.
    pub fn column_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.tangent_dim);
        for b in &self.blocks {
            let n = b.kind.tangent_dim();
            for k in 0..n {
                names.push(if n == 1 {
                    b.name.clone()
                } else {
                    format!("{}_{}", b.name, k)
                });
            }
        }
        names
    }
}

/// A point on the product manifold described by a [`StateLayout`].
#[derive(Clone, Debug, PartialEq)]
pub struct NominalState {
    layout: Arc<StateLayout>,
    euclid: DVector<f64>,
    rots: Vec<Rotation>,
}

impl NominalState {
    /// Zero Euclidean blocks and identity rotations.
    pub fn origin(layout: Arc<StateLayout>) -> Self {
        let euclid = DVector::zeros(layout.euclidean_dim);
        let rots = vec![Rotation::identity(); layout.rotation_count];
        NominalState {
            layout,
            euclid,
            rots,
        }
    }

    pub fn layout(&self) -> &Arc<StateLayout> {
        &self.layout
    }

    fn euclid_range(&self, i: usize) -> Range<usize> {
        match self.layout.blocks[i].kind {
            BlockKind::Euclidean(n) => {
                let o = self.layout.storage[i];
                o..o + n
            }
            BlockKind::Rotation => panic!("block '{}' is a rotation", self.layout.blocks[i].name),
        }
    }

    /// Values of Euclidean block `i`. Panics if `i` is a rotation block.
    pub fn vector(&self, i: usize) -> &[f64] {
        let r = self.euclid_range(i);
        &self.euclid.as_slice()[r]
    }

    pub fn vector_mut(&mut self, i: usize) -> &mut [f64] {
        let r = self.euclid_range(i);
        &mut self.euclid.as_mut_slice()[r]
    }

    /// The 3-vector at offset `3k` inside Euclidean block `i`.
    pub fn vec3(&self, i: usize, k: usize) -> Vector3<f64> {
        let s = self.vector(i);
        Vector3::new(s[3 * k], s[3 * k + 1], s[3 * k + 2])
    }

    pub fn set_vec3(&mut self, i: usize, k: usize, v: &Vector3<f64>) {
        self.vector_mut(i)[3 * k..3 * k + 3].copy_from_slice(v.as_slice());
    }

    pub fn set_vector(&mut self, i: usize, values: &[f64]) -> Result<()> {
        let dst = self.vector_mut(i);
        if dst.len() != values.len() {
            return Err(Error::DimensionMismatch {
                context: "NominalState::set_vector",
                expected: dst.len(),
                actual: values.len(),
            });
        }
        dst.copy_from_slice(values);
        Ok(())
    }

    /// Rotation block `i`. Panics if `i` is Euclidean.
    pub fn rotation(&self, i: usize) -> &Rotation {
        match self.layout.blocks[i].kind {
            BlockKind::Rotation => &self.rots[self.layout.storage[i]],
            BlockKind::Euclidean(_) => panic!("block '{}' is Euclidean", self.layout.blocks[i].name),
        }
    }

    pub fn set_rotation(&mut self, i: usize, r: Rotation) {
        match self.layout.blocks[i].kind {
            BlockKind::Rotation => self.rots[self.layout.storage[i]] = r,
            BlockKind::Euclidean(_) => panic!("block '{}' is Euclidean", self.layout.blocks[i].name),
        }
    }

    /// `x ⊞ δ`: Euclidean addition and right-multiplicative `R·Exp(δθ)`.
    pub fn boxplus(&self, delta: &DVector<f64>) -> NominalState {
        let mut out = self.clone();
        out.boxplus_mut(delta.as_slice());
        out
    }

    pub fn boxplus_mut(&mut self, delta: &[f64]) {
        assert_eq!(delta.len(), self.layout.tangent_dim, "tangent dimension");
        for (i, b) in self.layout.blocks.iter().enumerate() {
            let t = self.layout.tangent_offsets[i];
            let s = self.layout.storage[i];
            match b.kind {
                BlockKind::Euclidean(n) => {
                    for k in 0..n {
                        self.euclid[s + k] += delta[t + k];
                    }
                }
                BlockKind::Rotation => {
                    let d = Vector3::new(delta[t], delta[t + 1], delta[t + 2]);
                    self.rots[s] = self.rots[s].retract(&d);
                }
            }
        }
    }

    /// `self ⊟ other`, the tangent vector δ with `other ⊞ δ = self`.
    pub fn boxminus(&self, other: &NominalState) -> DVector<f64> {
        let mut out = DVector::zeros(self.layout.tangent_dim);
        for (i, b) in self.layout.blocks.iter().enumerate() {
            let t = self.layout.tangent_offsets[i];
            let s = self.layout.storage[i];
            match b.kind {
                BlockKind::Euclidean(n) => {
                    for k in 0..n {
                        out[t + k] = self.euclid[s + k] - other.euclid[s + k];
                    }
                }
                BlockKind::Rotation => {
                    let d = self.rots[s].local(&other.rots[s]);
                    out.rows_mut(t, 3).copy_from(&d);
                }
            }
        }
        out
    }

    /// Flat coordinates with rotations as 9 row-major matrix entries.
    pub fn embed(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.layout.embedded_dim);
        for (i, b) in self.layout.blocks.iter().enumerate() {
            match b.kind {
                BlockKind::Euclidean(_) => out.extend_from_slice(self.vector(i)),
                BlockKind::Rotation => {
                    let m = self.rotation(i).matrix();
                    for r in 0..3 {
                        for c in 0..3 {
                            out.push(m[(r, c)]);
                        }
                    }
                }
            }
        }
        out
    }

    /// Inverse of [`NominalState::embed`]; rotation entries are validated.
    pub fn from_embedded(layout: Arc<StateLayout>, values: &[f64]) -> Result<Self> {
        if values.len() != layout.embedded_dim {
            return Err(Error::DimensionMismatch {
                context: "NominalState::from_embedded",
                expected: layout.embedded_dim,
                actual: values.len(),
            });
        }
        let mut x = NominalState::origin(layout.clone());
        for (i, b) in layout.blocks.iter().enumerate() {
            let r = layout.embedded_range(i);
            match b.kind {
                BlockKind::Euclidean(_) => x.set_vector(i, &values[r])?,
                BlockKind::Rotation => {
                    let m = Matrix3::from_row_slice(&values[r]);
                    x.set_rotation(i, Rotation::from_matrix(m)?);
                }
            }
        }
        Ok(x)
    }

    /// Tangent-coordinate row (rotations as `Log(R)`), matching
    /// [`StateLayout::column_names`].
    pub fn to_row(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.layout.tangent_dim);
        for (i, b) in self.layout.blocks.iter().enumerate() {
            match b.kind {
                BlockKind::Euclidean(_) => out.extend_from_slice(self.vector(i)),
                BlockKind::Rotation => out.extend_from_slice(self.rotation(i).log().as_slice()),
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.euclid.iter().all(|v| v.is_finite()) && self.rots.iter().all(Rotation::is_finite)
    }
}

fn check_step(h: f64) -> Result<()> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidInput(format!("finite-difference step must be positive, got {h}")));
    }
    Ok(())
}

/// Central-difference gradient of `g` in the chart centred at `x`:
/// column `i` is `∂/∂θᵢ g(x ⊞ θ)` at `θ = 0`.
pub fn chart_gradient<G>(g: G, x: &NominalState, h: f64) -> Result<DMatrix<f64>>
where
    G: FnMut(&NominalState) -> DVector<f64>,
{
    let zero = DVector::zeros(x.layout.tangent_dim);
    chart_gradient_at(g, x, &zero, h)
}

/// Central-difference gradient of `θ ↦ g(anchor ⊞ θ)` at `θ = theta0`, i.e.
/// in a chart that is not centred at the evaluation point.
pub fn chart_gradient_at<G>(
    mut g: G,
    anchor: &NominalState,
    theta0: &DVector<f64>,
    h: f64,
) -> Result<DMatrix<f64>>
where
    G: FnMut(&NominalState) -> DVector<f64>,
{
    check_step(h)?;
    let n = anchor.layout.tangent_dim;
    if theta0.len() != n {
        return Err(Error::DimensionMismatch {
            context: "chart_gradient_at",
            expected: n,
            actual: theta0.len(),
        });
    }
    let mut jac: Option<DMatrix<f64>> = None;
    let mut theta = theta0.clone();
    for i in 0..n {
        theta[i] = theta0[i] + h;
        let plus = g(&anchor.boxplus(&theta));
        theta[i] = theta0[i] - h;
        let minus = g(&anchor.boxplus(&theta));
        theta[i] = theta0[i];
        let j = jac.get_or_insert_with(|| DMatrix::zeros(plus.len(), n));
        if plus.len() != j.nrows() || minus.len() != j.nrows() {
            return Err(Error::DimensionMismatch {
                context: "chart_gradient output",
                expected: j.nrows(),
                actual: plus.len(),
            });
        }
        let col = (plus - minus) / (2.0 * h);
        ensure_finite_slice("chart_gradient evaluation", col.as_slice())?;
        j.set_column(i, &col);
    }
    Ok(jac.unwrap_or_else(|| DMatrix::zeros(0, 0)))
}

/// Central difference of `g` along tangent direction `dir` at `x`.
pub fn directional_derivative<G>(
    mut g: G,
    x: &NominalState,
    dir: &DVector<f64>,
    h: f64,
) -> Result<DVector<f64>>
where
    G: FnMut(&NominalState) -> Result<DVector<f64>>,
{
    check_step(h)?;
    let plus = g(&x.boxplus(&(dir * h)))?;
    let minus = g(&x.boxplus(&(dir * -h)))?;
    let d = (plus - minus) / (2.0 * h);
    ensure_finite_slice("directional derivative", d.as_slice())?;
    Ok(d)
}

/// Wraps an angle to `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn skew_is_cross_product() {
        let a = Vector3::new(0.3, -1.2, 2.0);
        let b = Vector3::new(-0.7, 0.4, 0.9);
        assert_relative_eq!(skew(&a) * b, a.cross(&b), epsilon = 1e-15);
        assert_relative_eq!(vee(&skew(&a)), a);
    }

    #[test]
    fn exp_of_quarter_turn_about_z() {
        let r = exp_so3(&Vector3::new(0.0, 0.0, PI / 2.0)).unwrap();
        let expected = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert_relative_eq!(*r.matrix(), expected, epsilon = 1e-12);
    }

    #[test]
    fn log_of_identity_is_zero() {
        assert_eq!(log_so3(&Rotation::identity()), Vector3::zeros());
    }

    #[test]
    fn log_at_half_turn_has_angle_pi() {
        let r = Rotation::from_matrix(Matrix3::new(
            1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0,
        ))
        .unwrap();
        let v = log_so3(&r);
        assert_relative_eq!(v.norm(), PI, epsilon = 1e-12);
        assert_relative_eq!(v.x.abs(), PI, epsilon = 1e-12);
        assert_relative_eq!(*Rotation::exp(&v).matrix(), *r.matrix(), epsilon = 1e-12);
    }

    #[test]
    fn exp_rejects_non_finite() {
        assert!(exp_so3(&Vector3::new(f64::NAN, 0.0, 0.0)).is_err());
    }

    #[test]
    fn small_angle_branch_matches_closed_form() {
        let v = Vector3::new(3e-4, -2e-4, 1e-4);
        let t = v.norm();
        let k = skew(&v);
        let closed = Matrix3::identity() + k * (t.sin() / t) + k * k * ((1.0 - t.cos()) / (t * t));
        assert_relative_eq!(exp_map(&v), closed, epsilon = 1e-15);
    }

    #[test]
    fn from_matrix_rejects_reflection() {
        assert!(Rotation::from_matrix(Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0))).is_err());
    }

    #[test]
    fn layout_offsets() {
        let l = StateLayout::new([
            ("p", BlockKind::Euclidean(3)),
            ("R", BlockKind::Rotation),
            ("b", BlockKind::Euclidean(2)),
        ])
        .unwrap();
        assert_eq!(l.tangent_dim(), 8);
        assert_eq!(l.embedded_dim(), 14);
        assert_eq!(l.tangent_range(2), 6..8);
        assert_eq!(l.embedded_range(2), 12..14);
        assert!(StateLayout::new([("a", BlockKind::Rotation), ("a", BlockKind::Rotation)]).is_err());
    }

    #[test]
    fn chart_gradient_rejects_bad_step() {
        let l = Arc::new(StateLayout::new([("x", BlockKind::Euclidean(1))]).unwrap());
        let x = NominalState::origin(l);
        assert!(chart_gradient(|s| DVector::from_row_slice(s.vector(0)), &x, 0.0).is_err());
    }

    #[test]
    fn chart_gradient_of_rotated_vector() {
        // g(R) = R·u has gradient -R⌊u⌋ in the right-perturbation chart.
        let l = Arc::new(StateLayout::new([("R", BlockKind::Rotation)]).unwrap());
        let mut x = NominalState::origin(l);
        let r = Rotation::exp(&Vector3::new(0.4, -0.2, 1.1));
        x.set_rotation(0, r);
        let u = Vector3::new(1.0, 2.0, -0.5);
        let jac = chart_gradient(
            |s| DVector::from_column_slice((s.rotation(0) * u).as_slice()),
            &x,
            1e-5,
        )
        .unwrap();
        let expected = -r.matrix() * skew(&u);
        for i in 0..3 {
            for j in 0..3 {
                assert!((jac[(i, j)] - expected[(i, j)]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn wrap_angle_range() {
        assert_relative_eq!(wrap_angle(3.0 * PI / 2.0), -PI / 2.0, epsilon = 1e-12);
        assert_relative_eq!(wrap_angle(-PI), PI);
    }
}
