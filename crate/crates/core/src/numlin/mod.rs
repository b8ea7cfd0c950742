//! Dense factorizations with fixed, reproducible conventions.
//!
//! Singular vectors are sign-canonicalized: in every left singular vector the
//! entry of largest magnitude (lowest index on ties) is positive, and the
//! matching right singular vector is flipped along with it. When only right
//! vectors are computed, the rule applies to them instead.

mod krylov;

pub use krylov::{leading_eigenspace, EigenSpace, KrylovOptions};

use nalgebra::{DMatrix, DVector};

use crate::error::LinalgError;

/// Default threshold for numerical rank decisions, `sigma_{R+1} / sigma_1 <= tol`.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

/// Rank-`R` factors `U * diag(S) * Vt` with `S` non-increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedSvd {
    pub u: DMatrix<f64>,
    pub s: DVector<f64>,
    pub vt: DMatrix<f64>,
}

impl TruncatedSvd {
    pub fn rank(&self) -> usize {
        self.s.len()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut us = self.u.clone();
        for (j, s) in self.s.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * &self.vt
    }
}

/// Index of the canonical pivot of a vector: largest magnitude, lowest index on ties.
fn pivot_index<'a>(v: impl Iterator<Item = &'a f64>) -> usize {
    let mut best = 0;
    let mut best_abs = -1.0;
    for (i, x) in v.enumerate() {
        if x.abs() > best_abs {
            best_abs = x.abs();
            best = i;
        }
    }
    best
}

/// Flips columns of `basis` so each column's pivot entry is positive.
pub fn canonicalize_columns(basis: &mut DMatrix<f64>) {
    for mut col in basis.column_iter_mut() {
        let p = pivot_index(col.iter());
        if col[p] < 0.0 {
            col.neg_mut();
        }
    }
}

type SvdParts = (Option<DMatrix<f64>>, DVector<f64>, Option<DMatrix<f64>>);

/// Thin SVD through faer, values non-increasing.
fn raw_svd(m: &DMatrix<f64>, want_u: bool, want_v: bool) -> Result<SvdParts, LinalgError> {
    use faer::dyn_stack::{MemBuffer, MemStack};
    use faer::linalg::svd::{svd, svd_scratch, ComputeSvdVectors};
    use faer::{diag::Diag, Mat, MatRef, Par};

    let (rows, cols) = m.shape();
    let p = rows.min(cols);
    if p == 0 {
        return Ok((
            want_u.then(|| DMatrix::zeros(rows, 0)),
            DVector::zeros(0),
            want_v.then(|| DMatrix::zeros(0, cols)),
        ));
    }
    let kind = |want: bool| if want { ComputeSvdVectors::Thin } else { ComputeSvdVectors::No };
    let a = MatRef::from_column_major_slice(m.as_slice(), rows, cols);
    let mut s = Diag::<f64>::zeros(p);
    let mut u = want_u.then(|| Mat::<f64>::zeros(rows, p));
    let mut v = want_v.then(|| Mat::<f64>::zeros(cols, p));
    let mut mem = MemBuffer::new(svd_scratch::<f64>(rows, cols, kind(want_u), kind(want_v), Par::Seq, Default::default()));
    svd(
        a,
        s.as_mut(),
        u.as_mut().map(|u| u.as_mut()),
        v.as_mut().map(|v| v.as_mut()),
        Par::Seq,
        MemStack::new(&mut mem),
        Default::default(),
    )
    .map_err(|_| LinalgError::NoConvergence { rows, cols })?;
    let values = DVector::from_fn(p, |i, _| s.column_vector()[i]);
    let u = u.map(|u| DMatrix::from_fn(rows, p, |i, j| u[(i, j)]));
    let vt = v.map(|v| DMatrix::from_fn(p, cols, |i, j| v[(j, i)]));
    Ok((u, values, vt))
}

/// Eigendecomposition of a symmetric matrix through faer, values non-increasing.
/// Only the lower triangle of `m` is read.
pub(crate) fn symmetric_eigen(m: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>), LinalgError> {
    use faer::dyn_stack::{MemBuffer, MemStack};
    use faer::linalg::evd::{self_adjoint_evd, self_adjoint_evd_scratch, ComputeEigenvectors};
    use faer::{diag::Diag, Mat, MatRef, Par};

    let n = m.nrows();
    if n != m.ncols() {
        return Err(LinalgError::DimensionMismatch(format!("eigendecomposition of a {}x{} matrix", n, m.ncols())));
    }
    let a = MatRef::from_column_major_slice(m.as_slice(), n, n);
    let mut s = Diag::<f64>::zeros(n);
    let mut u = Mat::<f64>::zeros(n, n);
    let mut mem = MemBuffer::new(self_adjoint_evd_scratch::<f64>(n, ComputeEigenvectors::Yes, Par::Seq, Default::default()));
    self_adjoint_evd(a, s.as_mut(), Some(u.as_mut()), Par::Seq, MemStack::new(&mut mem), Default::default())
        .map_err(|_| LinalgError::NoConvergence { rows: n, cols: n })?;
    // faer sorts ascending
    let values = DVector::from_fn(n, |i, _| s.column_vector()[n - 1 - i]);
    let vectors = DMatrix::from_fn(n, n, |i, j| u[(i, n - 1 - j)]);
    Ok((values, vectors))
}

/// Singular value decomposition with sorted values and canonical signs.
/// `u` is `m x p`, `vt` is `p x n` with `p = min(m, n)`. Signs follow the left
/// vectors when `u` is computed, otherwise the right vectors.
fn sorted_svd(m: &DMatrix<f64>, want_u: bool, want_v: bool) -> Result<SvdParts, LinalgError> {
    let (mut u, s, mut vt) = raw_svd(m, want_u, want_v)?;
    for j in 0..s.len() {
        let flip = match (u.as_ref(), vt.as_ref()) {
            (Some(u), _) => u[(pivot_index(u.column(j).iter()), j)] < 0.0,
            (None, Some(vt)) => vt[(j, pivot_index(vt.row(j).iter()))] < 0.0,
            (None, None) => false,
        };
        if flip {
            if let Some(u) = u.as_mut() {
                u.column_mut(j).neg_mut();
            }
            if let Some(vt) = vt.as_mut() {
                vt.row_mut(j).neg_mut();
            }
        }
    }
    Ok((u, s, vt))
}

/// Best rank-`rank` approximation factors of `m`.
pub fn truncated_svd(m: &DMatrix<f64>, rank: usize) -> Result<TruncatedSvd, LinalgError> {
    let (rows, cols) = m.shape();
    if rank > rows.min(cols) {
        return Err(LinalgError::RankTooLarge { rank, rows, cols });
    }
    let (u, s, vt) = sorted_svd(m, true, true)?;
    let (u, vt) = (u.expect("u requested"), vt.expect("vt requested"));
    Ok(TruncatedSvd {
        u: u.columns(0, rank).into_owned(),
        s: s.rows(0, rank).into_owned(),
        vt: vt.rows(0, rank).into_owned(),
    })
}

/// Leading `rank` left singular vectors and all singular values of `m`.
pub fn leading_left_singvecs(m: &DMatrix<f64>, rank: usize) -> Result<(DMatrix<f64>, DVector<f64>), LinalgError> {
    let (rows, cols) = m.shape();
    if rank > rows.min(cols) {
        return Err(LinalgError::RankTooLarge { rank, rows, cols });
    }
    let (u, s, _) = sorted_svd(m, true, false)?;
    Ok((u.expect("u requested").columns(0, rank).into_owned(), s))
}

/// Leading `rank` right singular vectors (as rows) and all singular values of `m`.
pub fn leading_right_singvecs(m: &DMatrix<f64>, rank: usize) -> Result<(DMatrix<f64>, DVector<f64>), LinalgError> {
    let (rows, cols) = m.shape();
    if rank > rows.min(cols) {
        return Err(LinalgError::RankTooLarge { rank, rows, cols });
    }
    let (_, s, vt) = sorted_svd(m, false, true)?;
    Ok((vt.expect("vt requested").rows(0, rank).into_owned(), s))
}

/// Singular values of `m`, non-increasing.
pub fn singular_values(m: &DMatrix<f64>) -> Result<DVector<f64>, LinalgError> {
    Ok(sorted_svd(m, false, false)?.1)
}

/// Orthonormal basis of the orthogonal complement of `col(basis)`, where
/// `basis` has orthonormal columns. Built from the Householder reflectors of
/// `basis`: the trailing columns of `H_1 ... H_k`.
pub fn orthonormal_complement(basis: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, k) = basis.shape();
    let mut work = basis.clone();
    let mut reflectors: Vec<(usize, DVector<f64>)> = Vec::with_capacity(k);
    for j in 0..k.min(n) {
        let x = work.view((j, j), (n - j, 1)).column(0).into_owned();
        let norm = x.norm();
        if norm == 0.0 {
            continue;
        }
        let mut v = x;
        let alpha = if v[0] >= 0.0 { -norm } else { norm };
        v[0] -= alpha;
        let vnorm = v.norm();
        if vnorm == 0.0 {
            continue;
        }
        v /= vnorm;
        // apply H = I - 2 v v^T to the trailing block
        let mut block = work.view_mut((j, j), (n - j, k - j));
        let w = block.tr_mul(&v);
        block.ger(-2.0, &v, &w, 1.0);
        reflectors.push((j, v));
    }
    let used = reflectors.len();
    let mut q = DMatrix::zeros(n, n - used);
    for c in 0..n - used {
        q[(used + c, c)] = 1.0;
    }
    for (j, v) in reflectors.iter().rev() {
        let mut block = q.view_mut((*j, 0), (n - j, n - used));
        let w = block.tr_mul(v);
        block.ger(-2.0, v, &w, 1.0);
    }
    q
}

/// Orthonormal basis of the left singular subspace belonging to the `keep`
/// smallest singular values of `m` (`J x C`). When `C < J` the exact kernel of
/// `m^T` is included through an orthonormal completion.
pub fn trailing_left_singvecs(m: &DMatrix<f64>, keep: usize) -> Result<DMatrix<f64>, LinalgError> {
    let rows = m.nrows();
    if keep > rows {
        return Err(LinalgError::KeepTooLarge { keep, dim: rows });
    }
    if keep == 0 {
        return Ok(DMatrix::zeros(rows, 0));
    }
    Ok(trailing_left_with_spectrum(m, keep)?.0)
}

/// [`trailing_left_singvecs`] together with all `J` singular values of `m`,
/// non-increasing and padded with zeros when `C < J`.
pub fn trailing_left_with_spectrum(m: &DMatrix<f64>, keep: usize) -> Result<(DMatrix<f64>, Vec<f64>), LinalgError> {
    let rows = m.nrows();
    if keep > rows {
        return Err(LinalgError::KeepTooLarge { keep, dim: rows });
    }
    let (full, s) = full_left_basis(m)?;
    let mut out = full.columns(rows - keep, keep).into_owned();
    canonicalize_columns(&mut out);
    let mut spectrum: Vec<f64> = s.iter().copied().collect();
    spectrum.resize(rows, 0.0);
    Ok((out, spectrum))
}

/// All `J` left singular vectors of `m`, ordered by non-increasing singular value
/// (completion columns count as zero singular values).
fn full_left_basis(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>), LinalgError> {
    let rows = m.nrows();
    if m.ncols() == 0 {
        return Ok((DMatrix::identity(rows, rows), DVector::zeros(0)));
    }
    let (u, s, _) = sorted_svd(m, true, false)?;
    let u = u.expect("u requested");
    if u.ncols() == rows {
        return Ok((u, s));
    }
    let comp = orthonormal_complement(&u);
    let mut full = DMatrix::zeros(rows, rows);
    full.columns_mut(0, u.ncols()).copy_from(&u);
    full.columns_mut(u.ncols(), comp.ncols()).copy_from(&comp);
    Ok((full, s))
}

/// Minimum-norm least-squares solution of `A X = B` with its residual.
#[derive(Debug, Clone)]
pub struct LstsqSolution {
    pub x: DMatrix<f64>,
    pub residual: f64,
    /// `sigma_min / sigma_max` of `A`.
    pub conditioning: f64,
}

/// Solves `min ||A X - B||_F` for full-column-rank `A` (checked with `tol` on
/// `sigma_min / sigma_max`).
pub fn lstsq(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> Result<LstsqSolution, LinalgError> {
    let (rows, cols) = a.shape();
    if b.nrows() != rows {
        return Err(LinalgError::DimensionMismatch(format!(
            "A has {rows} rows, B has {}",
            b.nrows()
        )));
    }
    if rows < cols || cols == 0 {
        return Err(LinalgError::RankDeficient { rows, cols, ratio: 0.0 });
    }
    let (u, s, vt) = sorted_svd(a, true, true)?;
    let (u, vt) = (u.expect("u requested"), vt.expect("vt requested"));
    let smax = s.max();
    let smin = s.min();
    let ratio = if smax > 0.0 { smin / smax } else { 0.0 };
    if !(ratio > tol) {
        return Err(LinalgError::RankDeficient { rows, cols, ratio });
    }
    let mut utb = u.tr_mul(b);
    for (i, sv) in s.iter().enumerate() {
        utb.row_mut(i).scale_mut(1.0 / sv);
    }
    let x = vt.tr_mul(&utb);
    let residual = (a * &x - b).norm();
    Ok(LstsqSolution {
        x,
        residual,
        conditioning: ratio,
    })
}

/// Numerical rank: the number of singular values above `tol * sigma_1`.
pub fn numerical_rank(m: &DMatrix<f64>, tol: f64) -> Result<usize, LinalgError> {
    let s = singular_values(m)?;
    Ok(match s.iter().next() {
        Some(&s1) if s1 > 0.0 => s.iter().filter(|&&v| v > tol * s1).count(),
        _ => 0,
    })
}

/// Principal angles between `col(a)` and `col(b)` (orthonormal columns), ascending.
///
/// Small angles come from the sines `sigma((I - A A^T) B)` and large ones from
/// the cosines `sigma(A^T B)`, so angles near zero keep full relative precision.
pub fn principal_angles(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Vec<f64>, LinalgError> {
    if a.nrows() != b.nrows() {
        return Err(LinalgError::DimensionMismatch(format!(
            "bases live in R^{} and R^{}",
            a.nrows(),
            b.nrows()
        )));
    }
    let (a, b) = if a.ncols() >= b.ncols() { (a, b) } else { (b, a) };
    let q = b.ncols();
    if q == 0 {
        return Ok(Vec::new());
    }
    let atb = a.tr_mul(b);
    let cosines = singular_values(&atb)?;
    let resid = b - a * &atb;
    let mut sines: Vec<f64> = singular_values(&resid)?.iter().copied().collect();
    sines.reverse();
    Ok((0..q)
        .map(|i| {
            let c = cosines[i].clamp(0.0, 1.0);
            if c * c >= 0.5 {
                sines[i].clamp(0.0, 1.0).asin()
            } else {
                c.acos()
            }
        })
        .collect())
}

/// Largest principal angle between two subspaces.
pub fn max_principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64, LinalgError> {
    Ok(principal_angles(a, b)?.into_iter().fold(0.0, f64::max))
}
