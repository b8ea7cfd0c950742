//! Column-space estimation of a low-rank matrix from fully observed
//! submatrices that each cover a subset of its rows.
//!
//! Two formulations are provided. The constraint method stacks the
//! zero-padded orthogonal complements of the observed column spaces into `N`
//! and takes the approximate kernel of `N^T`. The intersection method stacks
//! orthonormal bases of every "all completions" subspace into `Q` and takes its
//! leading left singular subspace.
//!
//! Both have a dense path (explicit `N` or `Q`, full SVD) and a matrix-free
//! path for large row counts, which runs block Krylov on `sum_l P_l U_l U_l^T P_l^T`
//! plus a diagonal. The two paths produce the same subspace.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::SubspaceError;
use crate::exec::par_map;
use crate::numlin::{
    canonicalize_columns, leading_eigenspace, leading_left_singvecs, trailing_left_singvecs, trailing_left_with_spectrum,
    KrylovOptions, DEFAULT_RANK_TOL,
};

/// Gaps at or below this multiple of machine epsilon (relative to the largest
/// eigenvalue) are indistinguishable from zero.
const GAP_FLOOR: f64 = 64.0 * f64::EPSILON;

/// Flop budget under which the dense path is chosen automatically.
const DENSE_FLOP_BUDGET: f64 = 3e8;

/// A fully observed block of an unfolding: rows `alpha`, all of its columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedSubmatrix {
    /// Sorted 0-based row indices into the unfolding.
    pub alpha: Vec<usize>,
    /// `|alpha| x K_l` observed entries.
    pub values: DMatrix<f64>,
    /// Slice indices this block was taken from.
    pub source: Vec<usize>,
}

/// Orthonormal basis of an estimated column space.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceBasis {
    pub j: usize,
    pub basis: DMatrix<f64>,
}

impl SubspaceBasis {
    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubspaceMethod {
    Constraint,
    #[default]
    Intersection,
}

impl fmt::Display for SubspaceMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Constraint => "constraint",
            Self::Intersection => "intersection",
        })
    }
}

impl FromStr for SubspaceMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "constraint" => Ok(Self::Constraint),
            "intersection" => Ok(Self::Intersection),
            other => Err(format!("unknown method {other:?} (expected constraint or intersection)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    /// Dense when the estimated cost is small, Krylov otherwise.
    #[default]
    Auto,
    Dense,
    Krylov,
}

#[derive(Debug, Clone)]
pub struct SubspaceOptions {
    /// Identifiability threshold on the normalized gap.
    pub tol: f64,
    pub solver: Solver,
    pub krylov: KrylovOptions,
}

impl Default for SubspaceOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_RANK_TOL,
            solver: Solver::Auto,
            krylov: KrylovOptions::default(),
        }
    }
}

impl SubspaceOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }
}

/// Identifiability diagnostics of one estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceDiagnostics {
    pub method: SubspaceMethod,
    /// `"dense"` or `"krylov"`.
    pub solver: String,
    /// Normalized gap compared against `tol`; for the constraint method
    /// `sigma_{J-R}(N) / sigma_1(N)`, for the intersection method
    /// `sqrt(sigma_R(Q)^2 - sigma_{R+1}(Q)^2) / sigma_1(Q)`.
    pub gap: f64,
    /// Constraint: `sigma_{J-R}(N) / sigma_{J-R+1}(N)` (`None` when the
    /// denominator vanishes). Intersection: `sigma_R(Q) - sigma_{R+1}(Q)`.
    pub separation: Option<f64>,
    /// Singular values around the cut: `sigma_{J-R}, sigma_{J-R+1}` of `N`, or
    /// `sigma_1 .. sigma_{R+1}` of `Q`.
    pub boundary_values: Vec<f64>,
    pub used: usize,
    /// Input positions skipped for having at most `R` rows or fewer than `R` columns.
    pub skipped: Vec<usize>,
    /// Input positions skipped because `sigma_R / sigma_1 <= tol` (not isorank).
    pub rank_deficient: Vec<usize>,
    pub krylov_residual: Option<f64>,
}

fn check_submatrices(subs: &[ObservedSubmatrix], j: usize) -> Result<(), SubspaceError> {
    for (index, s) in subs.iter().enumerate() {
        let bad = |reason: String| Err(SubspaceError::BadSubmatrix { index, reason });
        if s.alpha.is_empty() {
            return bad("empty row set".into());
        }
        if s.alpha.windows(2).any(|w| w[0] >= w[1]) {
            return bad("row indices must be strictly increasing".into());
        }
        if s.alpha[s.alpha.len() - 1] >= j {
            return bad(format!("row index {} outside 0..{j}", s.alpha[s.alpha.len() - 1]));
        }
        if s.values.nrows() != s.alpha.len() {
            return bad(format!("{} value rows for {} row indices", s.values.nrows(), s.alpha.len()));
        }
        if s.values.iter().any(|v| !v.is_finite()) {
            return bad("non-finite value".into());
        }
    }
    Ok(())
}

/// Leading `R` left singular vectors of every usable submatrix.
struct LocalBases<'a> {
    used: Vec<(&'a [usize], DMatrix<f64>)>,
    indices: Vec<usize>,
    skipped: Vec<usize>,
    rank_deficient: Vec<usize>,
}

fn local_bases<'a>(
    subs: &'a [ObservedSubmatrix],
    j: usize,
    r: usize,
    tol: f64,
) -> Result<LocalBases<'a>, SubspaceError> {
    if r == 0 {
        return Err(SubspaceError::ZeroRank);
    }
    check_submatrices(subs, j)?;
    let usable: Vec<usize> = (0..subs.len())
        .filter(|&i| subs[i].alpha.len() > r && subs[i].values.ncols() >= r)
        .collect();
    let skipped = (0..subs.len()).filter(|i| usable.binary_search(i).is_err()).collect();
    let bases = par_map(&usable, |&i| leading_left_singvecs(&subs[i].values, r));
    let mut used = Vec::with_capacity(usable.len());
    let mut indices = Vec::with_capacity(usable.len());
    let mut rank_deficient = Vec::new();
    for (&i, b) in usable.iter().zip(bases) {
        let (u, s) = b?;
        if !(s[r - 1] > tol * s[0]) {
            rank_deficient.push(i);
            continue;
        }
        used.push((subs[i].alpha.as_slice(), u));
        indices.push(i);
    }

    if used.is_empty() {
        return Err(SubspaceError::InformationallyIncomplete(format!(
            "no submatrix has more than R = {r} rows and numerical rank R"
        )));
    }
    let mut covered = vec![false; j];
    for (alpha, _) in &used {
        for &row in alpha.iter() {
            covered[row] = true;
        }
    }
    let uncovered: Vec<usize> = (0..j).filter(|&row| !covered[row]).collect();
    if !uncovered.is_empty() {
        return Err(SubspaceError::InformationallyIncomplete(format!(
            "{} of {j} rows (first: {}) lie in no usable submatrix",
            uncovered.len(),
            uncovered[0]
        )));
    }
    let constraints: usize = used.iter().map(|(a, _)| a.len() - r).sum();
    if constraints < j - r {
        return Err(SubspaceError::InformationallyIncomplete(format!(
            "{constraints} constraints available, at least J - R = {} needed",
            j - r
        )));
    }
    Ok(LocalBases {
        used,
        indices,
        skipped,
        rank_deficient,
    })
}

/// Number of used submatrices that observe each row.
fn row_incidence(used: &[(&[usize], DMatrix<f64>)], j: usize) -> Vec<usize> {
    let mut counts = vec![0usize; j];
    for (alpha, _) in used {
        for &row in alpha.iter() {
            counts[row] += 1;
        }
    }
    counts
}

/// `x -> diag(w) x + sum_l P_l U_l U_l^T P_l^T x`, summed in input order.
fn projector_sum(used: &[(&[usize], DMatrix<f64>)], weights: &[f64], x: &DMatrix<f64>) -> DMatrix<f64> {
    let b = x.ncols();
    let mut y = x.clone();
    for (row, &w) in weights.iter().enumerate() {
        y.row_mut(row).scale_mut(w);
    }
    for (alpha, u) in used {
        let xa = DMatrix::from_fn(alpha.len(), b, |r, c| x[(alpha[r], c)]);
        let ya = u * u.tr_mul(&xa);
        for c in 0..b {
            for (r, &row) in alpha.iter().enumerate() {
                y[(row, c)] += ya[(r, c)];
            }
        }
    }
    y
}

fn use_dense(opts: &SubspaceOptions, j: usize, cols: usize) -> bool {
    match opts.solver {
        Solver::Dense => true,
        Solver::Krylov => false,
        Solver::Auto => {
            let (jf, cf) = (j as f64, cols as f64);
            4.0 * jf * cf * jf.min(cf) + if cf < jf { 2.0 * jf * jf * jf } else { 0.0 } <= DENSE_FLOP_BUDGET
        }
    }
}

fn identity_basis(j: usize, method: SubspaceMethod, subs: usize) -> (SubspaceBasis, SubspaceDiagnostics) {
    (
        SubspaceBasis {
            j,
            basis: DMatrix::identity(j, j),
        },
        SubspaceDiagnostics {
            method,
            solver: "none".into(),
            gap: 1.0,
            separation: None,
            boundary_values: Vec::new(),
            used: 0,
            skipped: (0..subs).collect(),
            rank_deficient: Vec::new(),
            krylov_residual: None,
        },
    )
}

fn finish(
    mut basis: DMatrix<f64>,
    j: usize,
    r: usize,
    tol: f64,
    diag: SubspaceDiagnostics,
) -> Result<(SubspaceBasis, SubspaceDiagnostics), SubspaceError> {
    if !(diag.gap > tol) {
        return Err(SubspaceError::NotIdentifiable {
            gap: diag.gap,
            tol,
            rank: r,
        });
    }
    canonicalize_columns(&mut basis);
    Ok((SubspaceBasis { j, basis }, diag))
}

/// Column space as the approximate kernel of `N^T`, where `N` stacks the
/// zero-padded trailing `|alpha_l| - R` left singular vectors of every
/// submatrix with more than `R` rows.
pub fn constraint_basis(
    subs: &[ObservedSubmatrix],
    j: usize,
    r: usize,
    opts: &SubspaceOptions,
) -> Result<(SubspaceBasis, SubspaceDiagnostics), SubspaceError> {
    if r > j {
        return Err(SubspaceError::InformationallyIncomplete(format!("rank {r} exceeds row count {j}")));
    }
    if r == j && r > 0 {
        check_submatrices(subs, j)?;
        return Ok(identity_basis(j, SubspaceMethod::Constraint, subs.len()));
    }
    let local = local_bases(subs, j, r, opts.tol)?;
    let cols: usize = local.used.iter().map(|(a, _)| a.len() - r).sum();

    if use_dense(opts, j, cols) {
        let complements = par_map(&local.indices, |&i| trailing_left_singvecs(&subs[i].values, subs[i].alpha.len() - r));
        let complements = complements.into_iter().collect::<Result<Vec<_>, _>>()?;
        let mut n = DMatrix::zeros(j, cols);
        let mut offset = 0;
        for ((alpha, _), comp) in local.used.iter().zip(&complements) {
            for c in 0..comp.ncols() {
                for (row, &target) in alpha.iter().enumerate() {
                    n[(target, offset + c)] = comp[(row, c)];
                }
            }
            offset += comp.ncols();
        }
        let (basis, s) = trailing_left_with_spectrum(&n, r)?;
        let inner = s[j - r - 1];
        let outer = s[j - r];
        let diag = SubspaceDiagnostics {
            method: SubspaceMethod::Constraint,
            solver: "dense".into(),
            gap: inner / s[0],
            separation: (outer > 0.0).then(|| inner / outer),
            boundary_values: vec![inner, outer],
            used: local.used.len(),
            skipped: local.skipped,
            rank_deficient: local.rank_deficient,
            krylov_residual: None,
        };
        return finish(basis, j, r, opts.tol, diag);
    }

    // Bottom of N N^T = D_obs - sum P U U^T P^T is the top of c I - N N^T.
    let counts = row_incidence(&local.used, j);
    let c = counts.iter().copied().max().unwrap_or(0) as f64;
    let weights: Vec<f64> = counts.iter().map(|&o| c - o as f64).collect();
    let eig = leading_eigenspace(|x| projector_sum(&local.used, &weights, x), j, r, &opts.krylov)?;
    let inner_sq = c - eig.values[r];
    let outer_sq = c - eig.values[r - 1];
    let floor = GAP_FLOOR * c;
    let inner = if inner_sq <= floor { 0.0 } else { inner_sq.sqrt() };
    let outer = if outer_sq <= floor { 0.0 } else { outer_sq.sqrt() };
    let diag = SubspaceDiagnostics {
        method: SubspaceMethod::Constraint,
        solver: "krylov".into(),
        gap: inner / c.sqrt(),
        separation: (outer > 0.0).then(|| inner / outer),
        boundary_values: vec![inner, outer],
        used: local.used.len(),
        skipped: local.skipped,
        rank_deficient: local.rank_deficient,
        krylov_residual: Some(eig.residual),
    };
    finish(eig.vectors, j, r, opts.tol, diag)
}

/// Column space as the intersection of the per-submatrix completion
/// subspaces: the leading `R` left singular vectors of
/// `Q = [P_l U_l | e_i for rows i missing from alpha_l]`.
///
/// Indicator columns repeated across submatrices are merged into one column
/// `sqrt(m_i) e_i`, which leaves `Q Q^T` and hence the result unchanged.
pub fn intersection_basis(
    subs: &[ObservedSubmatrix],
    j: usize,
    r: usize,
    opts: &SubspaceOptions,
) -> Result<(SubspaceBasis, SubspaceDiagnostics), SubspaceError> {
    if r > j {
        return Err(SubspaceError::InformationallyIncomplete(format!("rank {r} exceeds row count {j}")));
    }
    if r == j && r > 0 {
        check_submatrices(subs, j)?;
        return Ok(identity_basis(j, SubspaceMethod::Intersection, subs.len()));
    }
    let local = local_bases(subs, j, r, opts.tol)?;
    let counts = row_incidence(&local.used, j);
    let total = local.used.len();
    let missing: Vec<f64> = counts.iter().map(|&o| (total - o) as f64).collect();
    let indicator_rows: Vec<usize> = (0..j).filter(|&row| missing[row] > 0.0).collect();
    let cols = total * r + indicator_rows.len();

    let (basis, values, residual, solver) = if use_dense(opts, j, cols) {
        let mut q = DMatrix::zeros(j, cols);
        for (l, (alpha, u)) in local.used.iter().enumerate() {
            for c in 0..r {
                for (row, &target) in alpha.iter().enumerate() {
                    q[(target, l * r + c)] = u[(row, c)];
                }
            }
        }
        for (k, &row) in indicator_rows.iter().enumerate() {
            q[(row, total * r + k)] = missing[row].sqrt();
        }
        let (basis, s) = leading_left_singvecs(&q, r)?;
        let sq: Vec<f64> = (0..=r).map(|i| s.get(i).map_or(0.0, |v| v * v)).collect();
        (basis, sq, None, "dense")
    } else {
        let eig = leading_eigenspace(|x| projector_sum(&local.used, &missing, x), j, r, &opts.krylov)?;
        let mut sq = eig.values.clone();
        sq.truncate(r + 1);
        sq.resize(r + 1, 0.0);
        (eig.vectors, sq, Some(eig.residual), "krylov")
    };

    let top = values[0].max(f64::MIN_POSITIVE);
    let diff = values[r - 1] - values[r];
    let gap = if diff <= GAP_FLOOR * top { 0.0 } else { diff.sqrt() / top.sqrt() };
    let singular: Vec<f64> = values.iter().map(|v| v.max(0.0).sqrt()).collect();
    let diag = SubspaceDiagnostics {
        method: SubspaceMethod::Intersection,
        solver: solver.into(),
        gap,
        separation: Some(singular[r - 1] - singular[r]),
        boundary_values: singular,
        used: local.used.len(),
        skipped: local.skipped,
        rank_deficient: local.rank_deficient,
        krylov_residual: residual,
    };
    finish(basis, j, r, opts.tol, diag)
}

/// Dispatches to [`constraint_basis`] or [`intersection_basis`].
pub fn estimate_basis(
    method: SubspaceMethod,
    subs: &[ObservedSubmatrix],
    j: usize,
    r: usize,
    opts: &SubspaceOptions,
) -> Result<(SubspaceBasis, SubspaceDiagnostics), SubspaceError> {
    match method {
        SubspaceMethod::Constraint => constraint_basis(subs, j, r, opts),
        SubspaceMethod::Intersection => intersection_basis(subs, j, r, opts),
    }
}

fn shared_rows(a: &[usize], b: &[usize]) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let (mut i, mut k) = (0, 0);
    let (mut rows, mut ia, mut ib) = (Vec::new(), Vec::new(), Vec::new());
    while i < a.len() && k < b.len() {
        match a[i].cmp(&b[k]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => k += 1,
            std::cmp::Ordering::Equal => {
                rows.push(a[i]);
                ia.push(i);
                ib.push(k);
                i += 1;
                k += 1;
            }
        }
    }
    (rows, ia, ib)
}

/// For every pair `l1 < l2` sharing at least `R` rows, the block on the shared
/// rows with the two column sets side by side.
pub fn combine_slice_pairs(slices: &[ObservedSubmatrix], r: usize) -> Vec<ObservedSubmatrix> {
    let mut out = Vec::new();
    for (p, a) in slices.iter().enumerate() {
        for b in &slices[p + 1..] {
            let (rows, ia, ib) = shared_rows(&a.alpha, &b.alpha);
            if rows.is_empty() || rows.len() < r {
                continue;
            }
            let (ka, kb) = (a.values.ncols(), b.values.ncols());
            let values = DMatrix::from_fn(rows.len(), ka + kb, |row, c| {
                if c < ka {
                    a.values[(ia[row], c)]
                } else {
                    b.values[(ib[row], c - ka)]
                }
            });
            let mut source = a.source.clone();
            source.extend_from_slice(&b.source);
            out.push(ObservedSubmatrix {
                alpha: rows,
                values,
                source,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numlin::{leading_left_singvecs, max_principal_angle};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn randn(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
    }

    fn example_one() -> Vec<ObservedSubmatrix> {
        vec![
            ObservedSubmatrix {
                alpha: vec![0, 1],
                values: DMatrix::from_column_slice(2, 1, &[1.0, 2.0]),
                source: vec![0],
            },
            ObservedSubmatrix {
                alpha: vec![1, 2],
                values: DMatrix::from_column_slice(2, 1, &[4.0, 6.0]),
                source: vec![1],
            },
        ]
    }

    fn truth_123() -> DMatrix<f64> {
        DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]) / 14f64.sqrt()
    }

    #[test]
    fn example_one_both_methods() {
        for solver in [Solver::Dense, Solver::Krylov] {
            let opts = SubspaceOptions {
                solver,
                ..SubspaceOptions::default()
            };
            let (c, _) = constraint_basis(&example_one(), 3, 1, &opts).unwrap();
            let (i, d) = intersection_basis(&example_one(), 3, 1, &opts).unwrap();
            assert!(max_principal_angle(&c.basis, &truth_123()).unwrap() <= 1e-12);
            assert!(max_principal_angle(&i.basis, &truth_123()).unwrap() <= 1e-12);
            assert!((d.boundary_values[0] - 2f64.sqrt()).abs() < 1e-12);
        }
    }

    /// Blocks of rows of a random `j x r` factor times random `r x k` coefficients.
    fn blocks(j: usize, r: usize, rows: &[std::ops::Range<usize>], k: usize, seed: u64) -> (DMatrix<f64>, Vec<ObservedSubmatrix>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = randn(j, r, &mut rng);
        let subs = rows
            .iter()
            .enumerate()
            .map(|(l, range)| {
                let coeff = randn(r, k, &mut rng);
                let alpha: Vec<usize> = range.clone().collect();
                let rows_of_a = DMatrix::from_fn(alpha.len(), r, |i, c| a[(alpha[i], c)]);
                ObservedSubmatrix {
                    alpha,
                    values: rows_of_a * coeff,
                    source: vec![l],
                }
            })
            .collect();
        (leading_left_singvecs(&a, r).unwrap().0, subs)
    }

    fn twelve_blocks() -> (DMatrix<f64>, Vec<ObservedSubmatrix>) {
        let ranges: Vec<_> = (0..12).map(|l| (l * 52 / 11).min(52)..(l * 52 / 11).min(52) + 8).collect();
        blocks(60, 3, &ranges, 5, 11)
    }

    #[test]
    fn overlapping_blocks_recover_column_space() {
        let (truth, subs) = twelve_blocks();
        assert_eq!(subs.last().unwrap().alpha.last(), Some(&59));
        for solver in [Solver::Dense, Solver::Krylov] {
            let opts = SubspaceOptions {
                solver,
                ..SubspaceOptions::default()
            };
            for method in [SubspaceMethod::Constraint, SubspaceMethod::Intersection] {
                let (b, d) = estimate_basis(method, &subs, 60, 3, &opts).unwrap();
                let angle = max_principal_angle(&b.basis, &truth).unwrap();
                assert!(angle <= 1e-9, "{method} {solver:?}: {angle:e}");
                assert!(d.gap > 1e-6);
                assert!((b.basis.tr_mul(&b.basis) - DMatrix::identity(3, 3)).amax() < 1e-12);
            }
        }
    }

    #[test]
    fn full_observation_matches_svd() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = randn(9, 3, &mut rng) * randn(3, 7, &mut rng);
        let subs = vec![ObservedSubmatrix {
            alpha: (0..9).collect(),
            values: m.clone(),
            source: vec![0],
        }];
        let truth = leading_left_singvecs(&m, 3).unwrap().0;
        let opts = SubspaceOptions::default();
        for method in [SubspaceMethod::Constraint, SubspaceMethod::Intersection] {
            let (b, _) = estimate_basis(method, &subs, 9, 3, &opts).unwrap();
            assert!(max_principal_angle(&b.basis, &truth).unwrap() < 1e-12);
        }
    }

    #[test]
    fn invariant_under_reordering_and_scaling() {
        let (_, subs) = twelve_blocks();
        let opts = SubspaceOptions::default();
        let mut changed = subs.clone();
        changed.reverse();
        for (l, s) in changed.iter_mut().enumerate() {
            s.values.swap_columns(0, 4);
            s.values.column_mut(1).scale_mut(-3.0 - l as f64);
        }
        for method in [SubspaceMethod::Constraint, SubspaceMethod::Intersection] {
            let (reference, _) = estimate_basis(method, &subs, 60, 3, &opts).unwrap();
            let (b, _) = estimate_basis(method, &changed, 60, 3, &opts).unwrap();
            // thin 3-row overlaps at R = 3 make this chain weakly coupled
            let angle = max_principal_angle(&b.basis, &reference.basis).unwrap();
            assert!(angle < 1e-9, "{method}: {angle:e}");
        }
    }

    #[test]
    fn disconnected_blocks_not_identifiable() {
        // two groups of rows that never overlap
        let (_, subs) = blocks(16, 2, &[0..8, 0..8, 8..16, 8..16], 4, 3);
        let opts = SubspaceOptions::default();
        for solver in [Solver::Dense, Solver::Krylov] {
            let opts = SubspaceOptions { solver, ..opts.clone() };
            for method in [SubspaceMethod::Constraint, SubspaceMethod::Intersection] {
                let err = estimate_basis(method, &subs, 16, 2, &opts).unwrap_err();
                assert!(matches!(err, SubspaceError::NotIdentifiable { .. }), "{method} {solver:?}: {err}");
            }
        }
    }

    #[test]
    fn gap_shrinks_as_overlap_thins() {
        let opts = SubspaceOptions::default();
        let mut gaps = Vec::new();
        for overlap in [6usize, 4, 3] {
            let (_, subs) = blocks(20, 3, &[0..10, (10 - overlap)..20], 6, 8);
            let (_, d) = intersection_basis(&subs, 20, 3, &opts).unwrap();
            gaps.push(d.gap);
        }
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2] && gaps[2] > 0.0, "{gaps:?}");
        let (_, subs) = blocks(20, 3, &[0..10, 8..20], 6, 8);
        assert!(intersection_basis(&subs, 20, 3, &opts).is_err());
    }

    #[test]
    fn incomplete_inputs_rejected() {
        let (_, subs) = blocks(10, 2, &[0..6], 4, 1);
        assert!(matches!(
            constraint_basis(&subs, 10, 2, &SubspaceOptions::default()),
            Err(SubspaceError::InformationallyIncomplete(_))
        ));
        let (_, subs) = blocks(10, 2, &[0..2, 2..10], 4, 1);
        let err = intersection_basis(&subs, 10, 2, &SubspaceOptions::default()).unwrap_err();
        assert!(matches!(err, SubspaceError::InformationallyIncomplete(_)));
        let bad = vec![ObservedSubmatrix {
            alpha: vec![3, 1],
            values: DMatrix::zeros(2, 1),
            source: vec![0],
        }];
        assert!(matches!(
            constraint_basis(&bad, 5, 1, &SubspaceOptions::default()),
            Err(SubspaceError::BadSubmatrix { index: 0, .. })
        ));
    }

    #[test]
    fn short_slices_are_skipped() {
        let (truth, mut subs) = blocks(12, 2, &[0..7, 5..12], 4, 2);
        let (_, extra) = blocks(12, 2, &[3..5], 4, 9);
        subs.insert(1, extra[0].clone());
        let (b, d) = constraint_basis(&subs, 12, 2, &SubspaceOptions::default()).unwrap();
        assert_eq!(d.skipped, vec![1]);
        assert!(max_principal_angle(&b.basis, &truth).unwrap() < 1e-10);
    }

    #[test]
    fn pair_combination_shapes() {
        let a = ObservedSubmatrix {
            alpha: vec![0, 2, 4],
            values: DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
            source: vec![0],
        };
        let disjoint = ObservedSubmatrix {
            alpha: vec![1, 3],
            values: DMatrix::zeros(2, 2),
            source: vec![1],
        };
        assert!(combine_slice_pairs(&[a.clone(), disjoint], 1).is_empty());
        let same = ObservedSubmatrix {
            alpha: a.alpha.clone(),
            values: a.values.scale(10.0),
            source: vec![2],
        };
        let pairs = combine_slice_pairs(&[a.clone(), same], 3);
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].alpha, a.alpha);
        assert_eq!(pairs[0].values.shape(), (3, 4));
        assert_eq!(pairs[0].values[(2, 3)], 60.0);
        assert_eq!(pairs[0].source, vec![0, 2]);
        let partial = ObservedSubmatrix {
            alpha: vec![2, 3, 4],
            values: DMatrix::from_row_slice(3, 1, &[7.0, 8.0, 9.0]),
            source: vec![3],
        };
        let pairs = combine_slice_pairs(&[a, partial], 2);
        assert_eq!(pairs[0].alpha, vec![2, 4]);
        assert_eq!(pairs[0].values, DMatrix::from_row_slice(2, 3, &[3.0, 4.0, 7.0, 5.0, 6.0, 9.0]));
    }

    #[test]
    fn projector_form_agrees() {
        // ker(L I - sum Q_l Q_l^T) with unmerged indicator columns
        let (_, subs) = twelve_blocks();
        let (b, _) = intersection_basis(&subs, 60, 3, &SubspaceOptions::default()).unwrap();
        let mut sum = DMatrix::<f64>::zeros(60, 60);
        for s in &subs {
            let u = leading_left_singvecs(&s.values, 3).unwrap().0;
            let mut q = DMatrix::zeros(60, 3 + 60 - s.alpha.len());
            for (row, &t) in s.alpha.iter().enumerate() {
                for c in 0..3 {
                    q[(t, c)] = u[(row, c)];
                }
            }
            let mut c = 3;
            for t in (0..60).filter(|t| !s.alpha.contains(t)) {
                q[(t, c)] = 1.0;
                c += 1;
            }
            sum += &q * q.transpose();
        }
        let kernel_op = DMatrix::identity(60, 60) * subs.len() as f64 - sum;
        assert!((&kernel_op * &b.basis).amax() < 1e-12);
    }
}
