//! Dense tensors, matrix unfoldings and the tensor-train format.
//!
//! Every tensor is stored first-index-fastest: entry `(i_1, ..., i_N)` (0-based)
//! lives at `i_1 + I_1 * (i_2 + I_2 * (i_3 + ...))`. With this order the
//! unfolding that puts the first `n` modes on the rows is the flat buffer read
//! as a column-major `J x K` matrix, so unfolding and folding never permute data.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::TensorError;

/// An N-way array of `f64` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseTensor {
    shape: Vec<usize>,
    values: Vec<f64>,
}

fn check_shape(shape: &[usize]) -> Result<usize, TensorError> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(TensorError::InvalidShape(shape.to_vec()));
    }
    Ok(shape.iter().product())
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self, TensorError> {
        let expected = check_shape(&shape)?;
        if values.len() != expected {
            return Err(TensorError::LengthMismatch {
                shape,
                expected,
                actual: values.len(),
            });
        }
        Ok(Self { shape, values })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self, TensorError> {
        let len = check_shape(&shape)?;
        Ok(Self {
            shape,
            values: vec![0.0; len],
        })
    }

    /// Builds a tensor by evaluating `f` at every (0-based) multi-index in storage order.
    pub fn from_fn(
        shape: Vec<usize>,
        mut f: impl FnMut(&[usize]) -> f64,
    ) -> Result<Self, TensorError> {
        let len = check_shape(&shape)?;
        let mut idx = vec![0usize; shape.len()];
        let mut values = Vec::with_capacity(len);
        for _ in 0..len {
            values.push(f(&idx));
            increment(&mut idx, &shape);
        }
        Ok(Self { shape, values })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Flat storage offset of a 0-based multi-index.
    pub fn offset(&self, index: &[usize]) -> Result<usize, TensorError> {
        linear_index(index, &self.shape)
    }

    pub fn get(&self, index: &[usize]) -> Result<f64, TensorError> {
        Ok(self.values[self.offset(index)?])
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Multiplies every entry by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            shape: self.shape.clone(),
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    /// Matrix unfolding `X_[1..n; n+1..N]` with `n = split`.
    pub fn unfold(&self, split: usize) -> Result<DMatrix<f64>, TensorError> {
        let spec = UnfoldingSpec::new(&self.shape, split)?;
        Ok(DMatrix::from_column_slice(
            spec.rows,
            spec.cols,
            &self.values,
        ))
    }

    /// Inverse of [`DenseTensor::unfold`].
    pub fn fold(matrix: &DMatrix<f64>, shape: Vec<usize>, split: usize) -> Result<Self, TensorError> {
        let spec = UnfoldingSpec::new(&shape, split)?;
        if matrix.nrows() != spec.rows || matrix.ncols() != spec.cols {
            return Err(TensorError::ShapeMismatch(format!(
                "matrix is {}x{}, split {split} of {shape:?} needs {}x{}",
                matrix.nrows(),
                matrix.ncols(),
                spec.rows,
                spec.cols
            )));
        }
        Ok(Self {
            shape,
            values: matrix.as_slice().to_vec(),
        })
    }

    /// Third-order reshaping `(prod_{i<=n} I_i, prod_{n<i<N} I_i, I_N)`.
    ///
    /// Mode-2 slice `l` is the `J x I_N` block whose rows are unfolding rows and
    /// whose column `k` is column `l + L * k` of `unfold(n)`.
    pub fn reshape3(&self, n: usize) -> Result<Self, TensorError> {
        let order = self.order();
        if order < 3 || n == 0 || n > order - 2 {
            return Err(TensorError::SplitOutOfRange {
                split: n,
                max: order.saturating_sub(2),
                order,
            });
        }
        let rows: usize = self.shape[..n].iter().product();
        let mid: usize = self.shape[n..order - 1].iter().product();
        Ok(Self {
            shape: vec![rows, mid, self.shape[order - 1]],
            values: self.values.clone(),
        })
    }

    /// Mode-2 slice `l` of an order-3 tensor as a `I_1 x I_3` matrix.
    pub fn mode2_slice(&self, l: usize) -> Result<DMatrix<f64>, TensorError> {
        if self.order() != 3 {
            return Err(TensorError::ShapeMismatch(format!(
                "mode-2 slices need an order-3 tensor, got shape {:?}",
                self.shape
            )));
        }
        let (rows, mid, cols) = (self.shape[0], self.shape[1], self.shape[2]);
        if l >= mid {
            return Err(TensorError::IndexOutOfBounds {
                index: vec![0, l, 0],
                shape: self.shape.clone(),
            });
        }
        Ok(DMatrix::from_fn(rows, cols, |r, k| {
            self.values[r + rows * (l + mid * k)]
        }))
    }
}

/// Row/column sizes of the unfolding `X_[1..n; n+1..N]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UnfoldingSpec {
    pub split: usize,
    pub rows: usize,
    pub cols: usize,
}

impl UnfoldingSpec {
    pub fn new(shape: &[usize], split: usize) -> Result<Self, TensorError> {
        check_shape(shape)?;
        let order = shape.len();
        if split == 0 || split >= order {
            return Err(TensorError::SplitOutOfRange {
                split,
                max: order.saturating_sub(1),
                order,
            });
        }
        Ok(Self {
            split,
            rows: shape[..split].iter().product(),
            cols: shape[split..].iter().product(),
        })
    }
}

/// First-index-fastest offset of a 0-based multi-index.
pub fn linear_index(index: &[usize], shape: &[usize]) -> Result<usize, TensorError> {
    if index.len() != shape.len() || index.iter().zip(shape).any(|(i, n)| i >= n) {
        return Err(TensorError::IndexOutOfBounds {
            index: index.to_vec(),
            shape: shape.to_vec(),
        });
    }
    let mut offset = 0;
    for (i, n) in index.iter().zip(shape).rev() {
        offset = offset * n + i;
    }
    Ok(offset)
}

/// Inverse of [`linear_index`].
pub fn multi_index(mut offset: usize, shape: &[usize]) -> Vec<usize> {
    shape
        .iter()
        .map(|n| {
            let i = offset % n;
            offset /= n;
            i
        })
        .collect()
}

fn increment(idx: &mut [usize], shape: &[usize]) {
    for (i, n) in idx.iter_mut().zip(shape) {
        *i += 1;
        if *i < *n {
            return;
        }
        *i = 0;
    }
}

/// A tensor train: cores `G^(n)` of shape `(R_{n-1}, I_n, R_n)` with `R_0 = R_N = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTDecomposition {
    cores: Vec<DenseTensor>,
}

impl TTDecomposition {
    pub fn new(cores: Vec<DenseTensor>) -> Result<Self, TensorError> {
        let ranks_err = |reason: &str, cores: &[DenseTensor]| TensorError::InvalidRanks {
            ranks: cores.iter().map(|c| c.shape[0]).collect(),
            reason: reason.to_string(),
        };
        if cores.len() < 2 {
            return Err(ranks_err("a tensor train needs at least two cores", &cores));
        }
        if cores.iter().any(|c| c.order() != 3) {
            return Err(ranks_err("every core must be order 3", &cores));
        }
        if cores[0].shape[0] != 1 || cores[cores.len() - 1].shape[2] != 1 {
            return Err(ranks_err("boundary ranks must be 1", &cores));
        }
        if cores.windows(2).any(|w| w[0].shape[2] != w[1].shape[0]) {
            return Err(ranks_err("adjacent cores disagree on a shared rank", &cores));
        }
        Ok(Self { cores })
    }

    /// Builds a train from flat core buffers, each first-index-fastest in `(R_{n-1}, I_n, R_n)`.
    pub fn from_flat(shape: &[usize], ranks: &[usize], data: Vec<Vec<f64>>) -> Result<Self, TensorError> {
        validate_ranks(shape, ranks)?;
        if data.len() != shape.len() {
            return Err(TensorError::ShapeMismatch(format!(
                "{} core buffers for an order-{} train",
                data.len(),
                shape.len()
            )));
        }
        let cores = data
            .into_iter()
            .enumerate()
            .map(|(n, v)| DenseTensor::new(vec![ranks[n], shape[n], ranks[n + 1]], v))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(cores)
    }

    pub fn cores(&self) -> &[DenseTensor] {
        &self.cores
    }

    pub fn into_cores(self) -> Vec<DenseTensor> {
        self.cores
    }

    pub fn order(&self) -> usize {
        self.cores.len()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.cores.iter().map(|c| c.shape[1]).collect()
    }

    /// `(R_0, ..., R_N)`.
    pub fn ranks(&self) -> Vec<usize> {
        let mut r: Vec<usize> = self.cores.iter().map(|c| c.shape[0]).collect();
        r.push(1);
        r
    }

    /// Number of stored floats, `sum_n R_{n-1} I_n R_n`.
    pub fn storage_len(&self) -> usize {
        self.cores.iter().map(DenseTensor::len).sum()
    }

    /// Slice `G^(n)_{:, i, :}` (0-based `n` and `i`) as an `R_{n-1} x R_n` matrix.
    pub fn core_slice(&self, n: usize, i: usize) -> DMatrix<f64> {
        let core = &self.cores[n];
        let (r0, len, r1) = (core.shape[0], core.shape[1], core.shape[2]);
        DMatrix::from_fn(r0, r1, |a, b| core.values[a + r0 * (i + len * b)])
    }

    /// Evaluates one entry as the product of core slices, left to right.
    pub fn entry(&self, index: &[usize]) -> Result<f64, TensorError> {
        let shape = self.shape();
        linear_index(index, &shape)?;
        let mut row = self.core_slice(0, index[0]);
        for (n, &i) in index.iter().enumerate().skip(1) {
            row *= self.core_slice(n, i);
        }
        Ok(row[(0, 0)])
    }

    /// Left partial product `G^(1) . ... . G^(m)` as a `(prod_{n<=m} I_n) x R_m` matrix.
    pub fn left_partial(&self, m: usize) -> DMatrix<f64> {
        assert!(m >= 1 && m <= self.order(), "left partial of 1..=N cores");
        let first = &self.cores[0];
        let mut acc = DMatrix::from_column_slice(first.shape[1], first.shape[2], &first.values);
        for core in &self.cores[1..m] {
            acc = contract_left(&acc, core);
        }
        acc
    }

    /// Full contraction into a dense tensor.
    pub fn to_dense(&self) -> DenseTensor {
        let full = self.left_partial(self.order());
        DenseTensor {
            shape: self.shape(),
            values: full.as_slice().to_vec(),
        }
    }
}

/// `P . G` where `P` is `J x R_{n-1}` and `G` has shape `(R_{n-1}, I_n, R_n)`;
/// the result is `(J * I_n) x R_n` with the new index slower than the old rows.
pub(crate) fn contract_left(partial: &DMatrix<f64>, core: &DenseTensor) -> DMatrix<f64> {
    let (r0, len, r1) = (core.shape[0], core.shape[1], core.shape[2]);
    let gmat = DMatrix::from_column_slice(r0, len * r1, &core.values);
    let prod = partial * gmat;
    DMatrix::from_vec(partial.nrows() * len, r1, prod.data.into())
}

/// Checks a rank tuple against a shape: length N+1, unit boundary ranks,
/// and `R_n <= min(prod_{i<=n} I_i, prod_{i>n} I_i)`.
pub fn validate_ranks(shape: &[usize], ranks: &[usize]) -> Result<(), TensorError> {
    check_shape(shape)?;
    let err = |reason: String| TensorError::InvalidRanks {
        ranks: ranks.to_vec(),
        reason,
    };
    if ranks.len() != shape.len() + 1 {
        return Err(err(format!(
            "expected {} ranks for an order-{} tensor",
            shape.len() + 1,
            shape.len()
        )));
    }
    if ranks[0] != 1 || ranks[ranks.len() - 1] != 1 {
        return Err(err("boundary ranks must be 1".into()));
    }
    for n in 1..shape.len() {
        let rows: usize = shape[..n].iter().product();
        let cols: usize = shape[n..].iter().product();
        if ranks[n] == 0 || ranks[n] > rows.min(cols) {
            return Err(err(format!(
                "R_{n} = {} is not in 1..={}",
                ranks[n],
                rows.min(cols)
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq_tensor(shape: Vec<usize>) -> DenseTensor {
        let len: usize = shape.iter().product();
        DenseTensor::new(shape, (1..=len).map(|v| v as f64).collect()).unwrap()
    }

    #[test]
    fn unfold_two_by_two_by_two() {
        let t = seq_tensor(vec![2, 2, 2]);
        let m = t.unfold(1).unwrap();
        assert_eq!(m.nrows(), 2);
        let rows: Vec<Vec<f64>> = (0..2).map(|r| m.row(r).iter().copied().collect()).collect();
        assert_eq!(rows[0], vec![1.0, 3.0, 5.0, 7.0]);
        assert_eq!(rows[1], vec![2.0, 4.0, 6.0, 8.0]);
    }

    #[test]
    fn unfold_matches_loop_oracle() {
        let t = DenseTensor::from_fn(vec![3, 4, 5], |i| (i[0] as f64).sin() + 3.0 * i[1] as f64 - (i[2] as f64).powi(2)).unwrap();
        let m = t.unfold(2).unwrap();
        assert_eq!((m.nrows(), m.ncols()), (12, 5));
        for a in 0..3 {
            for b in 0..4 {
                for c in 0..5 {
                    assert_eq!(m[(a + 3 * b, c)], t.get(&[a, b, c]).unwrap());
                }
            }
        }
    }

    #[test]
    fn split_out_of_range() {
        let t = seq_tensor(vec![2, 3, 4]);
        assert!(matches!(t.unfold(0), Err(TensorError::SplitOutOfRange { .. })));
        assert!(matches!(t.unfold(3), Err(TensorError::SplitOutOfRange { .. })));
        assert!(t.reshape3(2).is_err());
        assert!(seq_tensor(vec![2, 3]).reshape3(1).is_err());
    }

    #[test]
    fn reshape3_identity_for_order_three() {
        let t = seq_tensor(vec![2, 3, 4]);
        assert_eq!(t.reshape3(1).unwrap(), t);
    }

    #[test]
    fn reshape3_slices_stack_into_unfolding() {
        let t = DenseTensor::from_fn(vec![2, 2, 2, 2], |i| (i[0] + 2 * i[1]) as f64 * 0.5 - (i[2] * 7 + i[3] * 3) as f64).unwrap();
        let r = t.reshape3(2).unwrap();
        assert_eq!(r.shape(), &[4, 2, 2]);
        let unf = t.unfold(2).unwrap();
        for l in 0..2 {
            let slice = r.mode2_slice(l).unwrap();
            for k in 0..2 {
                assert_eq!(slice.column(k), unf.column(l + 2 * k));
            }
        }
    }

    #[test]
    fn reshape3_large_shape() {
        let t = DenseTensor::zeros(vec![15; 5]).unwrap();
        assert_eq!(t.reshape3(3).unwrap().shape(), &[3375, 15, 15]);
    }

    #[test]
    fn rank_one_entry() {
        let tt = TTDecomposition::from_flat(&[2, 2], &[1, 1, 1], vec![vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(tt.entry(&[1, 0]).unwrap(), 6.0);
        let dense = tt.to_dense();
        assert_eq!(dense.values(), &[3.0, 6.0, 4.0, 8.0]);
    }

    #[test]
    fn all_ones_rank_two() {
        let tt = TTDecomposition::from_flat(&[2, 2], &[1, 2, 1], vec![vec![1.0; 4], vec![1.0; 4]]).unwrap();
        for idx in [[0, 0], [0, 1], [1, 0], [1, 1]] {
            assert_eq!(tt.entry(&idx).unwrap(), 2.0);
        }
        assert!(tt.to_dense().values().iter().all(|&v| v == 2.0));
    }

    #[test]
    fn entry_out_of_bounds() {
        let tt = TTDecomposition::from_flat(&[2, 2], &[1, 1, 1], vec![vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert!(matches!(tt.entry(&[2, 0]), Err(TensorError::IndexOutOfBounds { .. })));
        assert!(tt.entry(&[0]).is_err());
    }

    #[test]
    fn storage_count_five_way() {
        let shape = [15usize; 5];
        let ranks = [1usize, 3, 3, 3, 4, 1];
        let data = (0..5).map(|n| vec![0.0; ranks[n] * 15 * ranks[n + 1]]).collect();
        let tt = TTDecomposition::from_flat(&shape, &ranks, data).unwrap();
        assert_eq!(tt.storage_len(), 45 + 135 + 135 + 180 + 60);
        assert_eq!(tt.storage_len(), 555);
    }

    #[test]
    fn invalid_trains_rejected() {
        let a = DenseTensor::zeros(vec![1, 2, 2]).unwrap();
        let b = DenseTensor::zeros(vec![3, 2, 1]).unwrap();
        assert!(TTDecomposition::new(vec![a.clone(), b]).is_err());
        assert!(TTDecomposition::new(vec![a]).is_err());
        assert!(validate_ranks(&[2, 3], &[1, 3, 1]).is_err());
        assert!(validate_ranks(&[2, 3], &[1, 2, 2]).is_err());
        assert!(validate_ranks(&[2, 3, 4], &[1, 2, 4, 1]).is_ok());
    }

    #[test]
    fn bad_shapes() {
        assert!(DenseTensor::new(vec![], vec![]).is_err());
        assert!(DenseTensor::new(vec![2, 0], vec![]).is_err());
        assert!(matches!(
            DenseTensor::new(vec![2, 2], vec![1.0; 3]),
            Err(TensorError::LengthMismatch { .. })
        ));
    }
}
