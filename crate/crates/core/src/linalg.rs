//! Small dense linear-algebra helpers shared by the LTI and observability code.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Default relative singular-value threshold for numerical rank.
pub const RANK_TOL: f64 = 1e-9;

/// Singular values (descending) and the numerical rank of a matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct RankReport {
    pub rank: usize,
    pub cols: usize,
    pub singular_values: Vec<f64>,
    pub tolerance: f64,
}

impl RankReport {
    pub fn deficiency(&self) -> usize {
        self.cols - self.rank
    }

    pub fn is_full_column_rank(&self) -> bool {
        self.rank == self.cols
    }

    /// Smallest singular value relative to the largest.
    pub fn condition_ratio(&self) -> f64 {
        match (self.singular_values.first(), self.singular_values.last()) {
            (Some(&max), Some(&min)) if max > 0.0 => min / max,
            _ => 0.0,
        }
    }
}

/// Rank by counting singular values above `tol · σ_max`. Singular values are
/// padded with zeros up to the column count so that wide-short matrices
/// report their column deficiency.
pub fn rank(m: &DMatrix<f64>, tol: f64) -> Result<RankReport> {
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("rank input matrix".into()));
    }
    let cols = m.ncols();
    let mut sv: Vec<f64> = if m.nrows() == 0 || cols == 0 {
        Vec::new()
    } else {
        m.singular_values().iter().copied().collect()
    };
    sv.sort_by(|a, b| b.total_cmp(a));
    sv.resize(cols, 0.0);
    let max = sv.first().copied().unwrap_or(0.0);
    let rank = if max <= f64::MIN_POSITIVE {
        0
    } else {
        sv.iter().filter(|&&s| s > tol * max).count()
    };
    Ok(RankReport {
        rank,
        cols,
        singular_values: sv,
        tolerance: tol,
    })
}

/// Orthonormal bases `(row space, null space)` of `m` as column matrices.
pub fn row_and_null_space(m: &DMatrix<f64>, tol: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = m.ncols();
    // Pad to at least n rows so the thin SVD returns a full V.
    let padded = if m.nrows() < n {
        let mut p = DMatrix::zeros(n, n);
        p.rows_mut(0, m.nrows()).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Numerical("SVD did not return right singular vectors".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let max = order.first().map(|&i| svd.singular_values[i]).unwrap_or(0.0);
    let r = if max <= f64::MIN_POSITIVE {
        0
    } else {
        order.iter().filter(|&&i| svd.singular_values[i] > tol * max).count()
    };
    let mut row = DMatrix::zeros(n, r);
    let mut null = DMatrix::zeros(n, n - r);
    for (k, &i) in order.iter().enumerate() {
        let v = v_t.row(i).transpose();
        if k < r {
            row.set_column(k, &v);
        } else {
            null.set_column(k - r, &v);
        }
    }
    Ok((row, null))
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Block-diagonal concatenation.
pub fn block_diag(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(*b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Solves `A W + W Aᵀ + Q = 0` by vectorisation (small systems only).
pub fn solve_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let op = eye.kronecker(a) + a.kronecker(&eye);
    let rhs = -DVector::from_column_slice(q.as_slice());
    let sol = op
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("Lyapunov operator is singular".into()))?;
    let w = DMatrix::from_column_slice(n, n, sol.as_slice());
    Ok((&w + w.transpose()) * 0.5)
}

/// Symmetrises `m` in place.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}
