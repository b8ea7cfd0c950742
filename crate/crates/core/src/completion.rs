//! Sequential TT-SVD, Parallel-TTSVD and tensor-train completion from
//! fully observed or fully missing mode-N fibers.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{CompletionError, SubspaceError, TensorError};
use crate::exec::par_map;
use crate::numlin::{leading_left_singvecs, leading_right_singvecs, lstsq, truncated_svd, DEFAULT_RANK_TOL};
use crate::pattern::{check_mask, slice_observations, validate, ConditionReport, FiberPattern};
use crate::subspace::{
    combine_slice_pairs, estimate_basis, ObservedSubmatrix, Solver, SubspaceDiagnostics, SubspaceMethod,
    SubspaceOptions,
};
use crate::tensor::{contract_left, validate_ranks, DenseTensor, TTDecomposition};

/// Whether slice pairs are added as extra observed submatrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Combine {
    #[default]
    None,
    Pairs,
}

impl fmt::Display for Combine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::None => "none",
            Self::Pairs => "pairs",
        })
    }
}

impl FromStr for Combine {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Self::None),
            "pairs" => Ok(Self::Pairs),
            other => Err(format!("unknown combine mode {other:?} (expected none or pairs)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionConfig {
    /// `(R_0, ..., R_N)`.
    pub ranks: Vec<usize>,
    pub method: SubspaceMethod,
    pub combine: Combine,
    /// Threshold on every identifiability gap and on the conditioning of the
    /// per-slice systems.
    pub tol: f64,
    /// Refuse patterns that fail [`validate`] before doing any numerical work.
    pub validate_first: bool,
    pub solver: Solver,
}

impl CompletionConfig {
    pub fn new(ranks: Vec<usize>) -> Self {
        Self {
            ranks,
            method: SubspaceMethod::Intersection,
            combine: Combine::None,
            tol: DEFAULT_RANK_TOL,
            validate_first: true,
            solver: Solver::Auto,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnfoldingDiagnostics {
    pub split: usize,
    pub rank: usize,
    pub slice_submatrices: usize,
    pub pair_submatrices: usize,
    pub subspace: SubspaceDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionDiagnostics {
    pub unfoldings: Vec<UnfoldingDiagnostics>,
    pub observed_fibers: usize,
    /// All singular values of the observed rows of `X_[1..N-1; N]`.
    pub last_unfolding_singular_values: Vec<f64>,
    /// Residual `||S_i G^{<N-1} Y - S_i X_i G^(N)T||_F` of each slice system.
    pub slice_residuals: Vec<f64>,
    /// `sigma_min / sigma_max` of each slice system matrix.
    pub slice_conditioning: Vec<f64>,
    pub validation: ConditionReport,
}

#[derive(Debug, Clone)]
pub struct Completion {
    pub tt: TTDecomposition,
    pub diagnostics: CompletionDiagnostics,
}

fn core_from(r0: usize, len: usize, r1: usize, values: Vec<f64>) -> DenseTensor {
    DenseTensor::new(vec![r0, len, r1], values).expect("core buffer sized by construction")
}

/// Cores `G^(1) .. G^(m)` from orthonormal range bases `A^(1) .. A^(m)` of the
/// first `m` unfoldings: `G^(1) = A^(1)`, `G^(n+1) = A^(n)T reshape(A^(n+1))`.
fn cores_from_bases(shape: &[usize], bases: &[DMatrix<f64>]) -> Vec<DenseTensor> {
    let mut cores = Vec::with_capacity(bases.len());
    cores.push(core_from(1, shape[0], bases[0].ncols(), bases[0].as_slice().to_vec()));
    for n in 1..bases.len() {
        let (prev, next) = (&bases[n - 1], &bases[n]);
        let rows = prev.nrows();
        let reshaped = DMatrix::from_column_slice(rows, shape[n] * next.ncols(), next.as_slice());
        let w = prev.tr_mul(&reshaped);
        cores.push(core_from(prev.ncols(), shape[n], next.ncols(), w.as_slice().to_vec()));
    }
    cores
}

fn check_decomposable(t: &DenseTensor, ranks: &[usize]) -> Result<(), TensorError> {
    validate_ranks(t.shape(), ranks)?;
    if t.values().iter().any(|v| !v.is_finite()) {
        return Err(TensorError::ShapeMismatch("tensor holds non-finite values".into()));
    }
    Ok(())
}

/// Sequential TT-SVD: truncate the current unfolding, keep `U` as the core and
/// carry `S V^T` forward.
pub fn tt_svd(t: &DenseTensor, ranks: &[usize]) -> Result<TTDecomposition, CompletionError> {
    check_decomposable(t, ranks)?;
    let shape = t.shape();
    let order = shape.len();
    let mut cores = Vec::with_capacity(order);
    let mut carry = DMatrix::from_column_slice(shape[0], t.len() / shape[0], t.values());
    for n in 0..order - 1 {
        let svd = truncated_svd(&carry, ranks[n + 1])?;
        cores.push(core_from(ranks[n], shape[n], ranks[n + 1], svd.u.as_slice().to_vec()));
        let mut rest = svd.vt;
        for (mut row, s) in rest.row_iter_mut().zip(svd.s.iter()) {
            row *= *s;
        }
        let cols = rest.ncols() / shape[n + 1];
        carry = DMatrix::from_vec(ranks[n + 1] * shape[n + 1], cols, rest.as_slice().to_vec());
    }
    cores.push(core_from(ranks[order - 1], shape[order - 1], 1, carry.as_slice().to_vec()));
    Ok(TTDecomposition::new(cores)?)
}

/// Parallel-TTSVD: range bases of all unfoldings computed independently, then
/// glued by `W^(n) = A^(n)T reshape(A^(n+1))`; the last core is `S V^T` of
/// the `(N-1)`-th unfolding.
pub fn parallel_tt_svd(t: &DenseTensor, ranks: &[usize]) -> Result<TTDecomposition, CompletionError> {
    check_decomposable(t, ranks)?;
    let shape = t.shape();
    let order = shape.len();
    let splits: Vec<usize> = (1..order).collect();
    let bases = par_map(&splits, |&n| {
        let m = t.unfold(n).expect("split in range");
        if n == order - 1 {
            truncated_svd(&m, ranks[n]).map(|svd| {
                let mut b = svd.vt;
                for (mut row, s) in b.row_iter_mut().zip(svd.s.iter()) {
                    row *= *s;
                }
                (svd.u, Some(b))
            })
        } else {
            leading_left_singvecs(&m, ranks[n]).map(|(u, _)| (u, None))
        }
    });
    let mut us = Vec::with_capacity(order - 1);
    let mut last = None;
    for b in bases {
        let (u, tail) = b?;
        us.push(u);
        if tail.is_some() {
            last = tail;
        }
    }
    let mut cores = cores_from_bases(shape, &us);
    let b = last.expect("last unfolding carries S V^T");
    cores.push(core_from(ranks[order - 1], shape[order - 1], 1, b.as_slice().to_vec()));
    Ok(TTDecomposition::new(cores)?)
}

/// Observed mode-2 slices of the `split`-th third-order reshaping as submatrices.
pub fn observed_submatrices(
    t: &DenseTensor,
    p: &FiberPattern,
    split: usize,
) -> Result<Vec<ObservedSubmatrix>, CompletionError> {
    let (rows, slices) = p.slice_dims(split)?;
    let len_n = t.shape()[t.order() - 1];
    let values = t.values();
    Ok(slice_observations(p, split)?
        .into_iter()
        .map(|obs| {
            let l = obs.slice_index;
            let alpha = obs.alpha;
            let block = DMatrix::from_fn(alpha.len(), len_n, |r, k| values[alpha[r] + rows * (l + slices * k)]);
            ObservedSubmatrix {
                alpha,
                values: block,
                source: vec![l],
            }
        })
        .collect())
}

/// Completes a tensor whose unobserved mode-N fibers are NaN.
///
/// Range bases of unfoldings `1..=N-2` come from the observed slice blocks,
/// the last core is `V^T` of the observed rows of `X_[1..N-1; N]`, and each
/// slice of the penultimate core is a least-squares solve on the observed rows.
pub fn complete(t: &DenseTensor, p: &FiberPattern, cfg: &CompletionConfig) -> Result<Completion, CompletionError> {
    let order = t.order();
    if order < 3 {
        return Err(CompletionError::OrderTooLow(order));
    }
    p.check_tensor(t)?;
    check_mask(t, p).map_err(CompletionError::MaskMismatch)?;
    validate_ranks(t.shape(), &cfg.ranks)?;
    if !(cfg.tol > 0.0) {
        return Err(TensorError::ShapeMismatch(format!("tolerance must be positive, got {}", cfg.tol)).into());
    }
    let validation = validate(p, &cfg.ranks)?;
    if cfg.validate_first && !validation.overall_valid {
        return Err(CompletionError::Validation(Box::new(validation)));
    }

    let shape = t.shape();
    let ranks = &cfg.ranks;
    let observed = p.observed_count();
    if observed < ranks[order - 1] {
        return Err(CompletionError::InsufficientFibers {
            observed,
            required: ranks[order - 1],
        });
    }

    let opts = SubspaceOptions {
        tol: cfg.tol,
        solver: cfg.solver,
        ..SubspaceOptions::default()
    };
    let splits: Vec<usize> = (1..order - 1).collect();
    let estimates = par_map(&splits, |&n| -> Result<_, CompletionError> {
        let mut subs = observed_submatrices(t, p, n)?;
        let singles = subs.len();
        if cfg.combine == Combine::Pairs {
            let pairs = combine_slice_pairs(&subs, ranks[n]);
            subs.extend(pairs);
        }
        let j: usize = shape[..n].iter().product();
        let (basis, diag) = estimate_basis(cfg.method, &subs, j, ranks[n], &opts)
            .map_err(|source| CompletionError::Unidentifiable { split: n, source })?;
        Ok((
            basis.basis,
            UnfoldingDiagnostics {
                split: n,
                rank: ranks[n],
                slice_submatrices: singles,
                pair_submatrices: subs.len() - singles,
                subspace: diag,
            },
        ))
    });
    let mut bases = Vec::with_capacity(splits.len());
    let mut unfoldings = Vec::with_capacity(splits.len());
    for e in estimates {
        let (b, d) = e?;
        bases.push(b);
        unfoldings.push(d);
    }
    let mut cores = cores_from_bases(shape, &bases);

    // last core: orthonormal rows V^T of the observed part of X_[1..N-1; N]
    let fibers = p.fiber_count();
    let len_n = shape[order - 1];
    let r_last = ranks[order - 1];
    let rows = p.observed_fibers();
    let values = t.values();
    let observed_rows = DMatrix::from_fn(rows.len(), len_n, |r, k| values[rows[r] + fibers * k]);
    let (vt, s) = leading_right_singvecs(&observed_rows, r_last)?;
    let sigma_r = s[r_last - 1];
    let ratio = if s[0] > 0.0 { sigma_r / s[0] } else { 0.0 };
    if !(ratio > cfg.tol) {
        return Err(CompletionError::Unidentifiable {
            split: order - 1,
            source: SubspaceError::NotIdentifiable {
                gap: ratio,
                tol: cfg.tol,
                rank: r_last,
            },
        });
    }

    // penultimate core, one least-squares system per slice
    let mut left = DMatrix::from_column_slice(shape[0], ranks[1], cores[0].values());
    for core in &cores[1..] {
        left = contract_left(&left, core);
    }
    let split = order - 2;
    let (j, slices) = p.slice_dims(split)?;
    let row_sets = p.slice_row_sets(split)?;
    let r_prev = ranks[order - 2];
    let slice_ids: Vec<usize> = (0..slices).collect();
    let solutions = par_map(&slice_ids, |&i| {
        let alpha = &row_sets[i];
        let a = DMatrix::from_fn(alpha.len(), r_prev, |r, c| left[(alpha[r], c)]);
        let y = DMatrix::from_fn(alpha.len(), len_n, |r, k| values[alpha[r] + j * (i + slices * k)]);
        let rhs = y * vt.transpose();
        lstsq(&a, &rhs, cfg.tol)
    });
    let mut core = vec![0.0; r_prev * slices * r_last];
    let mut slice_residuals = Vec::with_capacity(slices);
    let mut slice_conditioning = Vec::with_capacity(slices);
    for (i, sol) in solutions.into_iter().enumerate() {
        let sol = sol.map_err(|source| CompletionError::SliceUnderdetermined { slice: i, source })?;
        for b in 0..r_last {
            for a in 0..r_prev {
                core[a + r_prev * (i + slices * b)] = sol.x[(a, b)];
            }
        }
        slice_residuals.push(sol.residual);
        slice_conditioning.push(sol.conditioning);
    }
    cores.push(core_from(r_prev, slices, r_last, core));
    cores.push(core_from(r_last, len_n, 1, vt.as_slice().to_vec()));

    Ok(Completion {
        tt: TTDecomposition::new(cores)?,
        diagnostics: CompletionDiagnostics {
            unfoldings,
            observed_fibers: observed,
            last_unfolding_singular_values: s.iter().copied().collect(),
            slice_residuals,
            slice_conditioning,
            validation,
        },
    })
}

/// Imputation: observed fibers copied from `data`, missing fibers evaluated from `tt`.
pub fn reconstruct_fibers(
    tt: &TTDecomposition,
    data: &DenseTensor,
    p: &FiberPattern,
) -> Result<DenseTensor, CompletionError> {
    let len_n = p.check_tensor(data)?;
    if tt.shape() != data.shape() {
        return Err(TensorError::ShapeMismatch(format!(
            "train shape {:?} differs from data shape {:?}",
            tt.shape(),
            data.shape()
        ))
        .into());
    }
    let mut out = tt.to_dense();
    let fibers = p.fiber_count();
    let src = data.values();
    let dst = out.values_mut();
    for f in p.observed_fibers() {
        for k in 0..len_n {
            dst[f + fibers * k] = src[f + fibers * k];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pattern::mask_apply;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_train(shape: &[usize], ranks: &[usize], seed: u64) -> TTDecomposition {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..shape.len())
            .map(|n| (0..ranks[n] * shape[n] * ranks[n + 1]).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        TTDecomposition::from_flat(shape, ranks, data).unwrap()
    }

    fn rel(a: &DenseTensor, b: &DenseTensor) -> f64 {
        let diff: f64 = a.values().iter().zip(b.values()).map(|(x, y)| (x - y) * (x - y)).sum();
        diff.sqrt() / a.frobenius_norm()
    }

    #[test]
    fn tt_svd_round_trip() {
        let shape = [4, 5, 3, 6];
        let ranks = [1, 2, 3, 2, 1];
        let x = random_train(&shape, &ranks, 1).to_dense();
        let tt = tt_svd(&x, &ranks).unwrap();
        assert_eq!(tt.ranks(), ranks);
        assert!(rel(&x, &tt.to_dense()) < 1e-12);
        let ptt = parallel_tt_svd(&x, &ranks).unwrap();
        assert!(rel(&x, &ptt.to_dense()) < 1e-12);
    }

    #[test]
    fn rank_one_exact() {
        let x = DenseTensor::from_fn(vec![3, 4, 2], |i| (1 + i[0]) as f64 * (2.0 - i[1] as f64) * (1.5 + i[2] as f64)).unwrap();
        for tt in [tt_svd(&x, &[1, 1, 1, 1]).unwrap(), parallel_tt_svd(&x, &[1, 1, 1, 1]).unwrap()] {
            assert!(rel(&x, &tt.to_dense()) < 1e-14);
        }
    }

    #[test]
    fn infeasible_ranks() {
        let x = DenseTensor::zeros(vec![2, 3, 4]).unwrap();
        assert!(tt_svd(&x, &[1, 3, 2, 1]).is_err());
        assert!(parallel_tt_svd(&x, &[1, 2, 2]).is_err());
    }

    #[test]
    fn completion_exact_on_random_pattern() {
        let shape = [6, 6, 6, 8];
        let ranks = [1, 2, 3, 3, 1];
        let x = random_train(&shape, &ranks, 3).to_dense();
        let p = crate::pattern::random_pattern(&shape[..3], 0.3, 5).unwrap();
        let masked = mask_apply(&x, &p).unwrap();
        for method in [SubspaceMethod::Constraint, SubspaceMethod::Intersection] {
            let mut cfg = CompletionConfig::new(ranks.to_vec());
            cfg.method = method;
            let out = complete(&masked, &p, &cfg).unwrap();
            let e = rel(&x, &out.tt.to_dense());
            assert!(e < 1e-9, "{method} {e:e}");
            assert_eq!(out.diagnostics.slice_residuals.len(), 6);
            let filled = reconstruct_fibers(&out.tt, &masked, &p).unwrap();
            assert!(filled.values().iter().all(|v| v.is_finite()));
            assert!(rel(&x, &filled) < 1e-9);
        }
    }

    #[test]
    fn pairs_restore_isorank_blocks() {
        // slices of the second reshaping have rank min(R_2, R_3) = 2 < R_2
        let shape = [6, 6, 6, 8];
        let ranks = [1, 2, 3, 2, 1];
        let x = random_train(&shape, &ranks, 3).to_dense();
        let p = crate::pattern::random_pattern(&shape[..3], 0.3, 5).unwrap();
        let masked = mask_apply(&x, &p).unwrap();
        let mut cfg = CompletionConfig::new(ranks.to_vec());
        let err = complete(&masked, &p, &cfg).unwrap_err();
        assert!(matches!(err, CompletionError::Unidentifiable { split: 2, .. }), "{err}");
        cfg.combine = Combine::Pairs;
        let out = complete(&masked, &p, &cfg).unwrap();
        assert_eq!(out.diagnostics.unfoldings[1].subspace.rank_deficient.len(), 6);
        assert!(rel(&x, &out.tt.to_dense()) < 1e-9);
    }

    #[test]
    fn last_core_orthonormal_and_scale_equivariant() {
        let shape = [5, 5, 7];
        let ranks = [1, 2, 3, 1];
        let x = random_train(&shape, &ranks, 8).to_dense();
        let p = crate::pattern::random_pattern(&shape[..2], 0.2, 1).unwrap();
        let cfg = CompletionConfig::new(ranks.to_vec());
        let a = complete(&mask_apply(&x, &p).unwrap(), &p, &cfg).unwrap();
        let last = &a.tt.cores()[2];
        let g = DMatrix::from_column_slice(3, 7, last.values());
        assert!((&g * g.transpose() - DMatrix::identity(3, 3)).amax() < 1e-12);
        let b = complete(&mask_apply(&x.scaled(-2.5), &p).unwrap(), &p, &cfg).unwrap();
        assert!(rel(&a.tt.to_dense().scaled(-2.5), &b.tt.to_dense()) < 1e-12);
    }

    #[test]
    fn order_two_rejected() {
        let x = DenseTensor::zeros(vec![3, 3]).unwrap();
        let p = FiberPattern::full(vec![3]).unwrap();
        assert!(matches!(
            complete(&x, &p, &CompletionConfig::new(vec![1, 1, 1])),
            Err(CompletionError::OrderTooLow(2))
        ));
    }

    #[test]
    fn mask_must_match() {
        let shape = [3, 3, 3];
        let x = random_train(&shape, &[1, 2, 2, 1], 2).to_dense();
        let p = crate::pattern::random_pattern(&shape[..2], 0.2, 1).unwrap();
        let err = complete(&x, &p, &CompletionConfig::new(vec![1, 2, 2, 1])).unwrap_err();
        assert!(matches!(err, CompletionError::MaskMismatch(_)));
    }
}
