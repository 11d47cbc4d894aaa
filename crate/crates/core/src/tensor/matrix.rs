use serde::{Deserialize, Serialize};

use super::TensorError;

/// Row-major dense matrix of `f64`.
///
/// Values built through [`DenseMatrix::new`] are checked for shape and
/// finiteness. Results of arithmetic are not re-validated; callers that care
/// (training loops, loss evaluation) check finiteness of the scalar outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixRepr", into = "MatrixRepr")]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct MatrixRepr {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl TryFrom<MatrixRepr> for DenseMatrix {
    type Error = TensorError;

    fn try_from(repr: MatrixRepr) -> Result<Self, Self::Error> {
        DenseMatrix::new(repr.rows, repr.cols, repr.values)
    }
}

impl From<DenseMatrix> for MatrixRepr {
    fn from(m: DenseMatrix) -> Self {
        MatrixRepr {
            rows: m.rows,
            cols: m.cols,
            values: m.values,
        }
    }
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self, TensorError> {
        if rows == 0 || cols == 0 {
            return Err(TensorError::EmptyShape { rows, cols });
        }
        if values.len() != rows * cols {
            return Err(TensorError::Length {
                rows,
                cols,
                len: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite { index });
        }
        Ok(Self { rows, cols, values })
    }

    /// Unchecked constructor for results computed from valid operands.
    pub(crate) fn from_parts(rows: usize, cols: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), rows * cols);
        Self { rows, cols, values }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self::from_parts(rows, cols, vec![value; rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.values[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, TensorError> {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut values = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            let row = row.as_ref();
            if row.len() != cols {
                return Err(TensorError::Length {
                    rows: rows.len(),
                    cols,
                    len: row.len(),
                });
            }
            values.extend_from_slice(row);
        }
        Self::new(rows.len(), cols, values)
    }

    pub fn row_vector(values: &[f64]) -> Result<Self, TensorError> {
        Self::new(1, values.len(), values.to_vec())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                values.push(f(r, c));
            }
        }
        Self::from_parts(rows, cols, values)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.values[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    /// The single entry of a 1×1 matrix.
    pub fn scalar(&self) -> f64 {
        debug_assert_eq!(self.shape(), (1, 1));
        self.values[0]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix, TensorError> {
        if self.cols != other.rows {
            return Err(TensorError::dimension("matmul", self.shape(), other.shape()));
        }
        Ok(self.matmul_unchecked(other))
    }

    pub(crate) fn matmul_unchecked(&self, other: &DenseMatrix) -> DenseMatrix {
        let (n, k, m) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let out_row = &mut out[i * m..(i + 1) * m];
            for p in 0..k {
                let a = self.values[i * k + p];
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.values[p * m..(p + 1) * m];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        DenseMatrix::from_parts(n, m, out)
    }

    /// `selfᵀ · other` without materialising the transpose.
    pub(crate) fn tmatmul(&self, other: &DenseMatrix) -> DenseMatrix {
        let (k, n, m) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; n * m];
        for p in 0..k {
            let a_row = &self.values[p * n..(p + 1) * n];
            let b_row = &other.values[p * m..(p + 1) * m];
            for (i, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, b) in out[i * m..(i + 1) * m].iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        DenseMatrix::from_parts(n, m, out)
    }

    /// `self · otherᵀ` without materialising the transpose.
    pub(crate) fn matmul_t(&self, other: &DenseMatrix) -> DenseMatrix {
        let (n, k, m) = (self.rows, self.cols, other.rows);
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let a_row = &self.values[i * k..(i + 1) * k];
            for j in 0..m {
                let b_row = &other.values[j * k..(j + 1) * k];
                out[i * m + j] = a_row.iter().zip(b_row).map(|(a, b)| a * b).sum();
            }
        }
        DenseMatrix::from_parts(n, m, out)
    }

    pub fn transpose(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    pub fn add(&self, other: &DenseMatrix) -> Result<DenseMatrix, TensorError> {
        self.zip_with("add", other, |a, b| a + b)
    }

    pub fn sub(&self, other: &DenseMatrix) -> Result<DenseMatrix, TensorError> {
        self.zip_with("sub", other, |a, b| a - b)
    }

    pub fn hadamard(&self, other: &DenseMatrix) -> Result<DenseMatrix, TensorError> {
        self.zip_with("mul", other, |a, b| a * b)
    }

    pub fn zip_with(
        &self,
        op: &'static str,
        other: &DenseMatrix,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<DenseMatrix, TensorError> {
        if self.shape() != other.shape() {
            return Err(TensorError::dimension(op, self.shape(), other.shape()));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(DenseMatrix::from_parts(self.rows, self.cols, values))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> DenseMatrix {
        DenseMatrix::from_parts(self.rows, self.cols, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn scale(&self, c: f64) -> DenseMatrix {
        self.map(|v| v * c)
    }

    pub(crate) fn add_assign(&mut self, other: &DenseMatrix) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }

    pub(crate) fn add_scaled_assign(&mut self, other: &DenseMatrix, c: f64) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += c * b;
        }
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_sq().sqrt()
    }

    /// Column sums as a 1×cols matrix.
    pub fn column_sums(&self) -> DenseMatrix {
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (o, v) in out.iter_mut().zip(self.row(r)) {
                *o += v;
            }
        }
        DenseMatrix::from_parts(1, self.cols, out)
    }

    pub fn column_means(&self) -> DenseMatrix {
        self.column_sums().scale(1.0 / self.rows as f64)
    }

    /// Subtracts the column means from every row.
    pub fn center_columns(&self) -> DenseMatrix {
        let means = self.column_means();
        DenseMatrix::from_fn(self.rows, self.cols, |r, c| self.get(r, c) - means.values[c])
    }

    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        assert_eq!(self.shape(), other.shape(), "max_abs_diff shape mismatch");
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Row-wise concatenation of matrices with equal column count.
    pub fn vstack(parts: &[&DenseMatrix]) -> Result<DenseMatrix, TensorError> {
        let first = parts.first().ok_or(TensorError::EmptyShape { rows: 0, cols: 0 })?;
        let cols = first.cols;
        let mut values = Vec::new();
        let mut rows = 0;
        for p in parts {
            if p.cols != cols {
                return Err(TensorError::dimension("vstack", first.shape(), p.shape()));
            }
            values.extend_from_slice(&p.values);
            rows += p.rows;
        }
        Ok(DenseMatrix::from_parts(rows, cols, values))
    }

    /// Rows selected by index, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> DenseMatrix {
        let mut values = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        DenseMatrix::from_parts(indices.len(), self.cols, values)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.rows != self.cols {
            return false;
        }
        (0..self.rows).all(|i| (0..i).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= tol))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_times_matrix_is_unchanged() {
        let a = DenseMatrix::from_rows(&[[1.0, -2.0], [0.5, 3.0], [4.0, 0.0]]).unwrap();
        let out = DenseMatrix::identity(3).matmul(&a).unwrap();
        assert_eq!(out, a);
    }

    #[test]
    fn small_product() {
        let a = DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let b = DenseMatrix::from_rows(&[[1.0], [1.0]]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.values(), &[3.0, 7.0]);
    }

    #[test]
    fn transposed_products_agree_with_explicit_transpose() {
        let a = DenseMatrix::from_fn(4, 3, |r, c| (r * 3 + c) as f64 * 0.25 - 1.0);
        let b = DenseMatrix::from_fn(4, 2, |r, c| (r as f64 - c as f64).sin());
        let tm = a.tmatmul(&b);
        assert!(tm.max_abs_diff(&a.transpose().matmul(&b).unwrap()) < 1e-14);
        let c = DenseMatrix::from_fn(5, 3, |r, c| (r + 2 * c) as f64 * 0.1);
        let mt = a.matmul_t(&c);
        assert!(mt.max_abs_diff(&a.matmul(&c.transpose()).unwrap()) < 1e-14);
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(matches!(
            DenseMatrix::new(2, 2, vec![1.0; 3]),
            Err(TensorError::Length { .. })
        ));
        assert!(matches!(
            DenseMatrix::new(1, 2, vec![1.0, f64::NAN]),
            Err(TensorError::NonFinite { index: 1 })
        ));
        assert!(matches!(
            DenseMatrix::new(0, 2, vec![]),
            Err(TensorError::EmptyShape { .. })
        ));
    }

    #[test]
    fn dimension_error_names_both_shapes() {
        let a = DenseMatrix::zeros(2, 3);
        let b = DenseMatrix::zeros(2, 3);
        let msg = a.matmul(&b).unwrap_err().to_string();
        assert!(msg.contains("2x3") && msg.contains("matmul"), "{msg}");
    }

    #[test]
    fn serde_validates() {
        let json = r#"{"rows":1,"cols":2,"values":[1.0]}"#;
        assert!(serde_json::from_str::<DenseMatrix>(json).is_err());
        let m: DenseMatrix = serde_json::from_str(r#"{"rows":1,"cols":2,"values":[1.0,2.5]}"#).unwrap();
        assert_eq!(m.values(), &[1.0, 2.5]);
    }
}
