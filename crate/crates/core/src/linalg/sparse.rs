use crate::error::{Error, Result};
use crate::linalg::{kernel, MatRef, Matrix};

/// Column-compressed sparse coefficients: one column per signal, row
/// indices refer to dictionary atoms and are strictly increasing per column.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseCodes {
    atoms: usize,
    col_ptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseCodes {
    pub fn new(atoms: usize) -> Self {
        SparseCodes {
            atoms,
            col_ptr: vec![0],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn with_capacity(atoms: usize, cols: usize, nnz: usize) -> Self {
        let mut col_ptr = Vec::with_capacity(cols + 1);
        col_ptr.push(0);
        SparseCodes {
            atoms,
            col_ptr,
            indices: Vec::with_capacity(nnz),
            values: Vec::with_capacity(nnz),
        }
    }

    /// Appends a column. Indices must be strictly increasing and `< atoms`.
    pub fn push_column(&mut self, indices: &[usize], values: &[f64]) {
        assert_eq!(indices.len(), values.len());
        debug_assert!(indices.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(indices.iter().all(|&i| i < self.atoms));
        self.indices.extend_from_slice(indices);
        self.values.extend_from_slice(values);
        self.col_ptr.push(self.indices.len());
    }

    /// Concatenates column blocks in order.
    pub fn concat(atoms: usize, parts: impl IntoIterator<Item = SparseCodes>) -> Self {
        let mut out = SparseCodes::new(atoms);
        for part in parts {
            assert_eq!(part.atoms, atoms);
            for j in 0..part.cols() {
                let (i, v) = part.column(j);
                out.push_column(i, v);
            }
        }
        out
    }

    #[inline]
    pub fn atoms(&self) -> usize {
        self.atoms
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.col_ptr.len() - 1
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    /// Position range of column `j` within [`indices`](Self::indices) and
    /// [`values`](Self::values).
    #[inline]
    pub fn column_range(&self, j: usize) -> std::ops::Range<usize> {
        self.col_ptr[j]..self.col_ptr[j + 1]
    }

    #[inline]
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Coefficient values may be changed in place; the sparsity pattern may not.
    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn column(&self, j: usize) -> (&[usize], &[f64]) {
        let r = self.col_ptr[j]..self.col_ptr[j + 1];
        (&self.indices[r.clone()], &self.values[r])
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.atoms, self.cols());
        for j in 0..self.cols() {
            let (idx, val) = self.column(j);
            for (&i, &v) in idx.iter().zip(val) {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// Reorders columns: output column `k` is input column `perm[k]`.
    pub fn permute_columns(&self, perm: &[usize]) -> SparseCodes {
        assert_eq!(perm.len(), self.cols());
        let mut out = SparseCodes::with_capacity(self.atoms, self.cols(), self.nnz());
        for &j in perm {
            let (i, v) = self.column(j);
            out.push_column(i, v);
        }
        out
    }

    /// Inverse of [`permute_columns`](Self::permute_columns).
    pub fn unpermute_columns(&self, perm: &[usize]) -> SparseCodes {
        assert_eq!(perm.len(), self.cols());
        let mut inverse = vec![0; perm.len()];
        for (k, &j) in perm.iter().enumerate() {
            inverse[j] = k;
        }
        self.permute_columns(&inverse)
    }
}

/// Anything whose columns act as dictionary atoms.
pub trait Atoms {
    fn signal_dim(&self) -> usize;
    fn atom_count(&self) -> usize;
    fn atom(&self, k: usize) -> &[f64];
}

impl Atoms for Matrix {
    fn signal_dim(&self) -> usize {
        self.rows()
    }
    fn atom_count(&self) -> usize {
        self.cols()
    }
    fn atom(&self, k: usize) -> &[f64] {
        self.col(k)
    }
}

/// Writes `y − D x` into `out`.
pub fn residual_into<D: Atoms + ?Sized>(
    y: &[f64],
    d: &D,
    idx: &[usize],
    val: &[f64],
    out: &mut [f64],
) {
    out.copy_from_slice(y);
    for (&k, &v) in idx.iter().zip(val) {
        kernel::axpy(-v, d.atom(k), out);
    }
}

/// `‖Y − D X‖_F` for sparse `X`, without materializing `X` densely.
pub fn frobenius_error<D: Atoms + ?Sized>(y: MatRef<'_>, d: &D, x: &SparseCodes) -> Result<f64> {
    if y.rows() != d.signal_dim() || x.atoms() != d.atom_count() || x.cols() != y.cols() {
        return Err(Error::dim(
            "frobenius_error",
            format!(
                "Y is {}x{}, D is {}x{}, X is {}x{}",
                y.rows(),
                y.cols(),
                d.signal_dim(),
                d.atom_count(),
                x.atoms(),
                x.cols()
            ),
        ));
    }
    let mut r = vec![0.0; y.rows()];
    let mut total = 0.0;
    for j in 0..y.cols() {
        let (idx, val) = x.column(j);
        residual_into(y.col(j), d, idx, val, &mut r);
        total += kernel::norm_sq(&r);
    }
    Ok(total.sqrt())
}

/// `‖Y − D X‖_F` for dense `X`.
pub fn frobenius_error_dense(y: &Matrix, d: &Matrix, x: &Matrix) -> Result<f64> {
    if y.rows() != d.rows() || d.cols() != x.rows() || x.cols() != y.cols() {
        return Err(Error::dim(
            "frobenius_error_dense",
            format!(
                "Y is {}x{}, D is {}x{}, X is {}x{}",
                y.rows(),
                y.cols(),
                d.rows(),
                d.cols(),
                x.rows(),
                x.cols()
            ),
        ));
    }
    Ok(y.sub(&d.matmul(x)).frobenius_norm())
}

/// `RMSE = ‖Y − D X‖_F / √(p m)`.
pub fn rmse<D: Atoms + ?Sized>(y: MatRef<'_>, d: &D, x: &SparseCodes) -> Result<f64> {
    let n = (y.rows() * y.cols()) as f64;
    Ok(frobenius_error(y, d, x)? / n.max(1.0).sqrt())
}
