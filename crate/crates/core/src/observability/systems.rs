//! Polynomial system descriptions used by the observability analysis.

use std::sync::Arc;

use nalgebra::{DMatrix, Vector3};

use super::{Scalar, SystemDescription};
use crate::error::{Error, Result};
use crate::lti::LtiSystem;
use crate::manifold::{BlockKind, StateLayout};
use crate::models::GRAVITY;

type V3<S> = [S; 3];
type M3<S> = [S; 9];

fn zeros<S: Scalar>(n: usize) -> Vec<S> {
    vec![S::cst(0.0); n]
}

fn vec3<S: Scalar>(x: &[S], off: usize) -> V3<S> {
    [x[off], x[off + 1], x[off + 2]]
}

fn mat3<S: Scalar>(x: &[S], off: usize) -> M3<S> {
    std::array::from_fn(|i| x[off + i])
}

fn cst3<S: Scalar>(v: &Vector3<f64>) -> V3<S> {
    [S::cst(v.x), S::cst(v.y), S::cst(v.z)]
}

fn add3<S: Scalar>(a: V3<S>, b: V3<S>) -> V3<S> {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn neg3<S: Scalar>(a: V3<S>) -> V3<S> {
    [-a[0], -a[1], -a[2]]
}

fn cross<S: Scalar>(a: V3<S>, b: V3<S>) -> V3<S> {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn mat_vec<S: Scalar>(m: &M3<S>, v: V3<S>) -> V3<S> {
    std::array::from_fn(|r| m[3 * r] * v[0] + m[3 * r + 1] * v[1] + m[3 * r + 2] * v[2])
}

fn mat_t_vec<S: Scalar>(m: &M3<S>, v: V3<S>) -> V3<S> {
    std::array::from_fn(|c| m[c] * v[0] + m[3 + c] * v[1] + m[6 + c] * v[2])
}

/// `M ⌊w⌋`: row `r` is `m_r × w`.
fn mat_skew<S: Scalar>(m: &M3<S>, w: V3<S>) -> M3<S> {
    let mut out = [S::cst(0.0); 9];
    for r in 0..3 {
        let row = cross([m[3 * r], m[3 * r + 1], m[3 * r + 2]], w);
        out[3 * r..3 * r + 3].copy_from_slice(&row);
    }
    out
}

fn put<S: Scalar>(out: &mut [S], off: usize, v: &[S]) {
    out[off..off + v.len()].copy_from_slice(v);
}

fn shift_chain<S: Scalar>(out: &mut [S], x: &[S], off: usize, len: usize) {
    out[off..off + len - 3].copy_from_slice(&x[off + 3..off + len]);
}

fn unit(i: usize) -> Vector3<f64> {
    let mut e = Vector3::zeros();
    e[i] = 1.0;
    e
}

fn offsets(layout: &StateLayout) -> Vec<usize> {
    (0..layout.blocks().len()).map(|b| layout.embedded_range(b).start).collect()
}

/// POS-IMU input formulation. Fields: `f₀` drift, `f₁…f₃` gyroscope
/// channels (`Ṙ = R⌊eᵢ⌋`), `f₄…f₆` accelerometer channels (`v̇ = R eᵢ`).
/// Outputs: `h₁ = p + R c`, `h₂ = Rᵀ e`.
#[derive(Clone, Debug)]
pub struct PosImuInputSystem {
    layout: Arc<StateLayout>,
    off: Vec<usize>,
    pub gravity: Vector3<f64>,
    pub reference: Vector3<f64>,
}

impl PosImuInputSystem {
    pub const H_POSITION: usize = 0;
    pub const H_DIRECTION: usize = 1;

    pub fn new() -> Self {
        let layout = StateLayout::new([
            ("p", BlockKind::Euclidean(3)),
            ("v", BlockKind::Euclidean(3)),
            ("R", BlockKind::Rotation),
            ("c", BlockKind::Euclidean(3)),
            ("b_a", BlockKind::Euclidean(3)),
            ("b_w", BlockKind::Euclidean(3)),
        ])
        .expect("static layout");
        PosImuInputSystem {
            off: offsets(&layout),
            layout: Arc::new(layout),
            gravity: GRAVITY,
            reference: Vector3::x(),
        }
    }
}

impl Default for PosImuInputSystem {
    fn default() -> Self {
        Self::new()
    }
}

impl SystemDescription for PosImuInputSystem {
    fn layout(&self) -> &Arc<StateLayout> {
        &self.layout
    }

    fn field_count(&self) -> usize {
        7
    }

    fn output_count(&self) -> usize {
        2
    }

    fn field<S: Scalar>(&self, i: usize, x: &[S]) -> Vec<S> {
        let o = &self.off;
        let mut out = zeros(x.len());
        let r = mat3(x, o[2]);
        match i {
            0 => {
                put(&mut out, o[0], &vec3(x, o[1]));
                let vdot = add3(neg3(mat_vec(&r, vec3(x, o[4]))), cst3(&self.gravity));
                put(&mut out, o[1], &vdot);
                put(&mut out, o[2], &mat_skew(&r, neg3(vec3(x, o[5]))));
            }
            1..=3 => put(&mut out, o[2], &mat_skew(&r, cst3(&unit(i - 1)))),
            4..=6 => put(&mut out, o[1], &mat_vec(&r, cst3(&unit(i - 4)))),
            _ => panic!("field index {i} out of range"),
        }
        out
    }

    fn output<S: Scalar>(&self, j: usize, x: &[S]) -> Vec<S> {
        let o = &self.off;
        let r = mat3(x, o[2]);
        match j {
            0 => add3(vec3(x, o[0]), mat_vec(&r, vec3(x, o[3]))).to_vec(),
            1 => mat_t_vec(&r, cst3(&self.reference)).to_vec(),
            _ => panic!("output index {j} out of range"),
        }
    }
}

/// POS-IMU state formulation with integrator chains of orders `N_a`, `N_ω`.
/// Outputs: `h₁ = p + R c`, `h₂ = Rᵀ e`, `h₃ = a + b_a`, `h₄ = ω + b_ω`.
#[derive(Clone, Debug)]
pub struct PosImuStateSystem {
    layout: Arc<StateLayout>,
    off: Vec<usize>,
    na: usize,
    nw: usize,
    pub gravity: Vector3<f64>,
    pub reference: Vector3<f64>,
}

impl PosImuStateSystem {
    pub const H_POSITION: usize = 0;
    pub const H_DIRECTION: usize = 1;
    pub const H_ACCEL: usize = 2;
    pub const H_GYRO: usize = 3;

    pub fn new(na: usize, nw: usize) -> Result<Self> {
        if na == 0 || nw == 0 {
            return Err(Error::InvalidInput("chain orders must be at least 1".into()));
        }
        let layout = StateLayout::new([
            ("p", BlockKind::Euclidean(3)),
            ("v", BlockKind::Euclidean(3)),
            ("R", BlockKind::Rotation),
            ("c", BlockKind::Euclidean(3)),
            ("b_a", BlockKind::Euclidean(3)),
            ("b_w", BlockKind::Euclidean(3)),
            ("gamma_a", BlockKind::Euclidean(3 * na)),
            ("gamma_w", BlockKind::Euclidean(3 * nw)),
        ])?;
        Ok(PosImuStateSystem {
            off: offsets(&layout),
            layout: Arc::new(layout),
            na,
            nw,
            gravity: GRAVITY,
            reference: Vector3::x(),
        })
    }

    pub fn orders(&self) -> (usize, usize) {
        (self.na, self.nw)
    }
}

impl SystemDescription for PosImuStateSystem {
    fn layout(&self) -> &Arc<StateLayout> {
        &self.layout
    }

    fn output_count(&self) -> usize {
        4
    }

    fn field<S: Scalar>(&self, i: usize, x: &[S]) -> Vec<S> {
        assert_eq!(i, 0, "state formulation has only the drift field");
        let o = &self.off;
        let mut out = zeros(x.len());
        let r = mat3(x, o[2]);
        put(&mut out, o[0], &vec3(x, o[1]));
        put(&mut out, o[1], &add3(mat_vec(&r, vec3(x, o[6])), cst3(&self.gravity)));
        put(&mut out, o[2], &mat_skew(&r, vec3(x, o[7])));
        shift_chain(&mut out, x, o[6], 3 * self.na);
        shift_chain(&mut out, x, o[7], 3 * self.nw);
        out
    }

    fn output<S: Scalar>(&self, j: usize, x: &[S]) -> Vec<S> {
        let o = &self.off;
        let r = mat3(x, o[2]);
        match j {
            0 => add3(vec3(x, o[0]), mat_vec(&r, vec3(x, o[3]))).to_vec(),
            1 => mat_t_vec(&r, cst3(&self.reference)).to_vec(),
            2 => add3(vec3(x, o[6]), vec3(x, o[4])).to_vec(),
            3 => add3(vec3(x, o[7]), vec3(x, o[5])).to_vec(),
            _ => panic!("output index {j} out of range"),
        }
    }
}

/// Minimal inter-IMU model, drift only. Outputs:
/// `h₁ = R (a + ⌊ω⌋² c + ⌊τ⌋ c) + b_a`, `h₂ = ω + b_ω`, `h₃ = a`.
#[derive(Clone, Debug)]
pub struct InterImuSystem {
    layout: Arc<StateLayout>,
    off: Vec<usize>,
    nt: usize,
    na: usize,
}

impl InterImuSystem {
    pub const H_ACCEL2: usize = 0;
    pub const H_GYRO1: usize = 1;
    pub const H_ACCEL1: usize = 2;

    pub fn new(nt: usize, na: usize) -> Result<Self> {
        if nt == 0 || na == 0 {
            return Err(Error::InvalidInput("chain orders must be at least 1".into()));
        }
        let layout = StateLayout::new([
            ("b_a", BlockKind::Euclidean(3)),
            ("b_w", BlockKind::Euclidean(3)),
            ("w", BlockKind::Euclidean(3)),
            ("c", BlockKind::Euclidean(3)),
            ("R", BlockKind::Rotation),
            ("gamma_tau", BlockKind::Euclidean(3 * nt)),
            ("gamma_a", BlockKind::Euclidean(3 * na)),
        ])?;
        Ok(InterImuSystem {
            off: offsets(&layout),
            layout: Arc::new(layout),
            nt,
            na,
        })
    }

    pub fn orders(&self) -> (usize, usize) {
        (self.nt, self.na)
    }
}

impl SystemDescription for InterImuSystem {
    fn layout(&self) -> &Arc<StateLayout> {
        &self.layout
    }

    fn output_count(&self) -> usize {
        3
    }

    fn field<S: Scalar>(&self, i: usize, x: &[S]) -> Vec<S> {
        assert_eq!(i, 0, "inter-IMU model has only the drift field");
        let o = &self.off;
        let mut out = zeros(x.len());
        put(&mut out, o[2], &vec3(x, o[5]));
        shift_chain(&mut out, x, o[5], 3 * self.nt);
        shift_chain(&mut out, x, o[6], 3 * self.na);
        out
    }

    fn output<S: Scalar>(&self, j: usize, x: &[S]) -> Vec<S> {
        let o = &self.off;
        let w = vec3(x, o[2]);
        let a = vec3(x, o[6]);
        match j {
            0 => {
                let c = vec3(x, o[3]);
                let tau = vec3(x, o[5]);
                let s = add3(add3(a, cross(w, cross(w, c))), cross(tau, c));
                add3(mat_vec(&mat3(x, o[4]), s), vec3(x, o[0])).to_vec()
            }
            1 => add3(w, vec3(x, o[1])).to_vec(),
            2 => a.to_vec(),
            _ => panic!("output index {j} out of range"),
        }
    }
}

/// An LTI system `ẋ = A x + B u`, `y = C x` on a single Euclidean block;
/// field `i ≥ 1` is the constant column `i − 1` of `B`.
#[derive(Clone, Debug)]
pub struct LinearSystemDescription {
    layout: Arc<StateLayout>,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
}

impl LinearSystemDescription {
    pub fn new(sys: &LtiSystem) -> Result<Self> {
        let layout = StateLayout::new([("x", BlockKind::Euclidean(sys.states()))])?;
        Ok(LinearSystemDescription {
            layout: Arc::new(layout),
            a: sys.a.clone(),
            b: sys.b.clone(),
            c: sys.c.clone(),
        })
    }
}

fn lin_map<S: Scalar>(m: &DMatrix<f64>, x: &[S]) -> Vec<S> {
    (0..m.nrows())
        .map(|r| {
            (0..m.ncols())
                .filter(|&k| m[(r, k)] != 0.0)
                .fold(S::cst(0.0), |acc, k| acc + x[k].scale(m[(r, k)]))
        })
        .collect()
}

impl SystemDescription for LinearSystemDescription {
    fn layout(&self) -> &Arc<StateLayout> {
        &self.layout
    }

    fn field_count(&self) -> usize {
        1 + self.b.ncols()
    }

    fn output_count(&self) -> usize {
        1
    }

    fn field<S: Scalar>(&self, i: usize, x: &[S]) -> Vec<S> {
        if i == 0 {
            lin_map(&self.a, x)
        } else {
            self.b.column(i - 1).iter().map(|&v| S::cst(v)).collect()
        }
    }

    fn output<S: Scalar>(&self, _j: usize, x: &[S]) -> Vec<S> {
        lin_map(&self.c, x)
    }
}
