//! Fiber-wise observation patterns and the combinatorial uniqueness screen.
//!
//! A pattern flags, for every index `(i_1, ..., i_{N-1})`, whether the mode-N
//! fiber `X[i_1, ..., i_{N-1}, :]` is observed. Flags are stored
//! first-index-fastest, so flag `f` is row `f` of the unfolding `X_[1..N-1; N]`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PatternError, TensorError};
use crate::tensor::DenseTensor;

/// Which mode-N fibers of a tensor are observed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FiberPattern {
    base_shape: Vec<usize>,
    observed: Vec<bool>,
}

impl FiberPattern {
    pub fn new(base_shape: Vec<usize>, observed: Vec<bool>) -> Result<Self, PatternError> {
        if base_shape.is_empty() || base_shape.contains(&0) {
            return Err(TensorError::InvalidShape(base_shape).into());
        }
        let expected: usize = base_shape.iter().product();
        if observed.len() != expected {
            return Err(PatternError::LengthMismatch {
                shape: base_shape,
                expected,
                actual: observed.len(),
            });
        }
        if !observed.iter().any(|&b| b) {
            return Err(PatternError::NoObservedFibers);
        }
        Ok(Self {
            base_shape,
            observed,
        })
    }

    /// Every fiber observed.
    pub fn full(base_shape: Vec<usize>) -> Result<Self, PatternError> {
        let len = base_shape.iter().product();
        Self::new(base_shape, vec![true; len])
    }

    /// `(I_1, ..., I_{N-1})`.
    pub fn base_shape(&self) -> &[usize] {
        &self.base_shape
    }

    /// Order `N` of the tensors this pattern applies to.
    pub fn tensor_order(&self) -> usize {
        self.base_shape.len() + 1
    }

    pub fn flags(&self) -> &[bool] {
        &self.observed
    }

    pub fn fiber_count(&self) -> usize {
        self.observed.len()
    }

    pub fn observed_count(&self) -> usize {
        self.observed.iter().filter(|&&b| b).count()
    }

    pub fn missing_count(&self) -> usize {
        self.fiber_count() - self.observed_count()
    }

    pub fn is_observed(&self, fiber: usize) -> bool {
        self.observed[fiber]
    }

    /// Indices of observed fibers, ascending.
    pub fn observed_fibers(&self) -> Vec<usize> {
        (0..self.observed.len()).filter(|&f| self.observed[f]).collect()
    }

    /// Marks one more fiber as observed.
    pub fn observe(&mut self, fiber: usize) {
        self.observed[fiber] = true;
    }

    /// Checks that `t` has shape `(base_shape..., I_N)`; returns `I_N`.
    pub fn check_tensor(&self, t: &DenseTensor) -> Result<usize, PatternError> {
        let shape = t.shape();
        if shape.len() != self.base_shape.len() + 1 || shape[..self.base_shape.len()] != self.base_shape[..] {
            return Err(PatternError::ShapeMismatch {
                pattern: self.base_shape.clone(),
                tensor: shape.to_vec(),
            });
        }
        Ok(shape[shape.len() - 1])
    }

    /// Row sets `alpha_l` of every mode-2 slice of the `split`-th third-order
    /// reshaping, including empty ones.
    pub fn slice_row_sets(&self, split: usize) -> Result<Vec<Vec<usize>>, PatternError> {
        let (rows, slices) = self.slice_dims(split)?;
        let mut sets = vec![Vec::new(); slices];
        for (l, set) in sets.iter_mut().enumerate() {
            let base = rows * l;
            set.extend((0..rows).filter(|&r| self.observed[base + r]));
        }
        Ok(sets)
    }

    /// `(J, L)` = rows and number of mode-2 slices for a split.
    pub fn slice_dims(&self, split: usize) -> Result<(usize, usize), PatternError> {
        let order = self.tensor_order();
        if order < 3 || split == 0 || split > order - 2 {
            return Err(TensorError::SplitOutOfRange {
                split,
                max: order.saturating_sub(2),
                order,
            }
            .into());
        }
        let rows = self.base_shape[..split].iter().product();
        let slices = self.base_shape[split..].iter().product();
        Ok((rows, slices))
    }
}

/// Observed rows of one mode-2 slice of a third-order reshaping.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceObservation {
    pub split: usize,
    /// 0-based slice index `l`.
    pub slice_index: usize,
    /// Sorted 0-based row indices.
    pub alpha: Vec<usize>,
}

/// Non-empty slice observations for the `split`-th reshaping (`1 <= split <= N-2`).
pub fn slice_observations(p: &FiberPattern, split: usize) -> Result<Vec<SliceObservation>, PatternError> {
    Ok(p.slice_row_sets(split)?
        .into_iter()
        .enumerate()
        .filter(|(_, alpha)| !alpha.is_empty())
        .map(|(slice_index, alpha)| SliceObservation {
            split,
            slice_index,
            alpha,
        })
        .collect())
}

/// Combinatorial checks for one unfolding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub split: usize,
    pub rank: usize,
    pub rows: usize,
    pub slices: usize,
    pub min_rows_per_slice: usize,
    /// Slices with at least `rank` observed rows.
    pub slices_used: usize,
    pub slices_excluded: usize,
    pub overlap_graph_connected: bool,
    pub union_covers_all_rows: bool,
    pub valid: bool,
}

/// Outcome of [`validate`].
///
/// These are the generic sufficient conditions: a valid report means the
/// pattern admits a unique decomposition for generic tensors of the given
/// ranks, not a proof for any particular tensor values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub ranks: Vec<usize>,
    pub splits: Vec<SplitReport>,
    pub observed_fiber_count: usize,
    pub total_fibers: usize,
    pub last_core_ok: bool,
    /// Fewest observed rows over the slices of the `(N-2)`-th reshaping.
    pub penultimate_min_rows: usize,
    pub penultimate_ok: bool,
    pub overall_valid: bool,
    pub messages: Vec<String>,
}

struct DisjointSets {
    parent: Vec<usize>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra.max(rb)] = ra.min(rb);
        true
    }
}

fn bitset(rows: &[usize], words: usize) -> Vec<u64> {
    let mut bits = vec![0u64; words];
    for &r in rows {
        bits[r / 64] |= 1 << (r % 64);
    }
    bits
}

fn overlap(a: &[u64], b: &[u64]) -> usize {
    a.iter().zip(b).map(|(x, y)| (x & y).count_ones() as usize).sum()
}

/// Whether the slices with `|alpha| >= rank` form one component when joined by
/// overlaps of at least `rank` rows.
pub(crate) fn overlap_connected(sets: &[&Vec<usize>], rows: usize, rank: usize) -> bool {
    let n = sets.len();
    if n <= 1 {
        return true;
    }
    let words = rows.div_ceil(64);
    let bits: Vec<Vec<u64>> = sets.iter().map(|s| bitset(s, words)).collect();
    let mut dsu = DisjointSets::new(n);
    let mut components = n;
    for i in 0..n {
        for j in i + 1..n {
            if dsu.find(i) == dsu.find(j) {
                continue;
            }
            if overlap(&bits[i], &bits[j]) >= rank && dsu.union(i, j) {
                components -= 1;
                if components == 1 {
                    return true;
                }
            }
        }
    }
    components == 1
}

fn check_ranks(p: &FiberPattern, ranks: &[usize]) -> Result<(), TensorError> {
    let order = p.tensor_order();
    let err = |reason: String| TensorError::InvalidRanks {
        ranks: ranks.to_vec(),
        reason,
    };
    if ranks.len() != order + 1 {
        return Err(err(format!("expected {} ranks for an order-{order} tensor", order + 1)));
    }
    if ranks[0] != 1 || ranks[order] != 1 {
        return Err(err("boundary ranks must be 1".into()));
    }
    if ranks.contains(&0) {
        return Err(err("ranks must be positive".into()));
    }
    Ok(())
}

/// Screens a pattern against the generic uniqueness conditions for `ranks`:
/// per unfolding `n = 1..=N-2`, slices with fewer than `R_n` rows are excluded,
/// the remaining ones must be overlap-connected (edges at `>= R_n` shared rows)
/// and must jointly cover every row; at least `R_{N-1}` fibers must be observed;
/// every slice of the `(N-2)`-th reshaping needs `>= R_{N-2}` observed rows.
pub fn validate(p: &FiberPattern, ranks: &[usize]) -> Result<ConditionReport, PatternError> {
    check_ranks(p, ranks)?;
    let order = p.tensor_order();
    let mut messages = Vec::new();
    let mut splits = Vec::new();

    if order < 3 {
        messages.push(format!("order-{order} tensors cannot be completed from fibers"));
    }
    for n in 1..order.saturating_sub(1) {
        let rank = ranks[n];
        let sets = p.slice_row_sets(n)?;
        let rows = p.slice_dims(n)?.0;
        let min_rows_per_slice = sets.iter().map(Vec::len).min().unwrap_or(0);
        let used: Vec<&Vec<usize>> = sets.iter().filter(|s| s.len() >= rank).collect();
        let connected = !used.is_empty() && overlap_connected(&used, rows, rank);
        let mut covered = vec![false; rows];
        for s in &used {
            for &r in s.iter() {
                covered[r] = true;
            }
        }
        let uncovered = covered.iter().filter(|&&c| !c).count();
        let covers = uncovered == 0;
        if used.is_empty() {
            messages.push(format!("unfolding {n}: no slice has at least R_{n} = {rank} observed rows"));
        } else if !connected {
            messages.push(format!(
                "unfolding {n}: slices with >= {rank} rows are not connected by overlaps of >= {rank} rows"
            ));
        }
        if !covers {
            messages.push(format!("unfolding {n}: {uncovered} of {rows} rows appear in no usable slice"));
        }
        splits.push(SplitReport {
            split: n,
            rank,
            rows,
            slices: sets.len(),
            min_rows_per_slice,
            slices_used: used.len(),
            slices_excluded: sets.len() - used.len(),
            overlap_graph_connected: connected,
            union_covers_all_rows: covers,
            valid: connected && covers,
        });
    }

    let observed = p.observed_count();
    let last_rank = ranks[order - 1];
    let last_core_ok = observed >= last_rank;
    if !last_core_ok {
        messages.push(format!(
            "last core: {observed} observed fibers, at least R_{} = {last_rank} required",
            order - 1
        ));
    }

    let (penultimate_min_rows, penultimate_ok) = if order >= 3 {
        let rank = ranks[order - 2];
        let sets = p.slice_row_sets(order - 2)?;
        let short: Vec<usize> = (0..sets.len()).filter(|&l| sets[l].len() < rank).collect();
        if !short.is_empty() {
            messages.push(format!(
                "penultimate core: {} slice(s) (first: {}) have fewer than R_{} = {rank} observed rows",
                short.len(),
                short[0],
                order - 2
            ));
        }
        (sets.iter().map(Vec::len).min().unwrap_or(0), short.is_empty())
    } else {
        (0, false)
    };

    let overall_valid = order >= 3 && splits.iter().all(|s| s.valid) && last_core_ok && penultimate_ok;
    Ok(ConditionReport {
        ranks: ranks.to_vec(),
        splits,
        observed_fiber_count: observed,
        total_fibers: p.fiber_count(),
        last_core_ok,
        penultimate_min_rows,
        penultimate_ok,
        overall_valid,
        messages,
    })
}

/// Pattern with exactly `round(missing_rate * total)` unobserved fibers chosen
/// uniformly without replacement from a seeded generator.
pub fn random_pattern(base_shape: &[usize], missing_rate: f64, seed: u64) -> Result<FiberPattern, PatternError> {
    if !(0.0..1.0).contains(&missing_rate) {
        return Err(PatternError::InvalidRate(missing_rate));
    }
    if base_shape.is_empty() || base_shape.contains(&0) {
        return Err(TensorError::InvalidShape(base_shape.to_vec()).into());
    }
    let total: usize = base_shape.iter().product();
    let missing = (missing_rate * total as f64).round() as usize;
    if missing >= total {
        return Err(PatternError::NoObservedFibers);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut observed = vec![true; total];
    for f in rand::seq::index::sample(&mut rng, total, missing) {
        observed[f] = false;
    }
    FiberPattern::new(base_shape.to_vec(), observed)
}

/// Copies `t` with every unobserved fiber replaced by NaN.
pub fn mask_apply(t: &DenseTensor, p: &FiberPattern) -> Result<DenseTensor, PatternError> {
    let len_n = p.check_tensor(t)?;
    let fibers = p.fiber_count();
    let mut values = t.values().to_vec();
    for f in (0..fibers).filter(|&f| !p.is_observed(f)) {
        for k in 0..len_n {
            values[f + fibers * k] = f64::NAN;
        }
    }
    Ok(DenseTensor::new(t.shape().to_vec(), values)?)
}

/// Checks that NaN entries of `t` are exactly the unobserved fibers of `p`.
pub fn check_mask(t: &DenseTensor, p: &FiberPattern) -> Result<(), String> {
    let len_n = p.check_tensor(t).map_err(|e| e.to_string())?;
    let fibers = p.fiber_count();
    let values = t.values();
    for f in 0..fibers {
        let observed = p.is_observed(f);
        for k in 0..len_n {
            let v = values[f + fibers * k];
            if observed && !v.is_finite() {
                return Err(format!("observed fiber {f} has a non-finite entry at position {k}"));
            }
            if !observed && !v.is_nan() {
                return Err(format!("unobserved fiber {f} holds a value at position {k}; expected NaN"));
            }
        }
    }
    Ok(())
}
