use super::matrix::Matrix;

/// Compressed-sparse-row matrix used as a fixed (non-trainable) propagation operator.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from per-row `(column, value)` lists.
    pub fn from_rows(cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for row in &rows {
            for &(c, v) in row {
                debug_assert!(c < cols);
                indices.push(c);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        Self {
            rows: rows.len(),
            cols,
            indptr,
            indices,
            values,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    /// Entry range of row `r` into `indices()`/`values()`.
    #[inline]
    pub fn row_range(&self, r: usize) -> std::ops::Range<usize> {
        self.indptr[r]..self.indptr[r + 1]
    }

    #[inline]
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `self * x`.
    pub fn mul_dense(&self, x: &Matrix) -> Matrix {
        assert_eq!(self.cols, x.rows(), "sparse product shape mismatch");
        let mut out = Matrix::zeros(self.rows, x.cols());
        for r in 0..self.rows {
            let out_row = out.row_mut(r);
            for k in self.row_range(r) {
                let v = self.values[k];
                for (o, &xv) in out_row.iter_mut().zip(x.row(self.indices[k])) {
                    *o += v * xv;
                }
            }
        }
        out
    }

    /// `self^T * g`.
    pub fn t_mul_dense(&self, g: &Matrix) -> Matrix {
        assert_eq!(self.rows, g.rows(), "sparse transpose product shape mismatch");
        let mut out = Matrix::zeros(self.cols, g.cols());
        for r in 0..self.rows {
            for k in self.row_range(r) {
                let v = self.values[k];
                let c = self.indices[k];
                let g_row = g.row(r).to_vec();
                for (o, gv) in out.row_mut(c).iter_mut().zip(g_row) {
                    *o += v * gv;
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> Matrix {
        let mut out = Matrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for k in self.row_range(r) {
                let c = self.indices[k];
                out.set(r, c, out.get(r, c) + self.values[k]);
            }
        }
        out
    }
}
