//! Sparse matrix support.
//!
//! The two sparse operands in this crate are the normalized adjacency and the
//! node-feature matrix; both multiply against dense `f64` matrices. A small
//! CSR type covers that without pulling in a sparse-algebra dependency, and
//! the masked variants let a view zero feature columns without copying the
//! whole matrix.
//!
//! Dense work uses [`ndarray`], which is single-threaded and deterministic.

use ndarray::Array2;

use crate::{Error, Result};

/// Compressed sparse row matrix over `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    data: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triplets. Duplicate coordinates are an
    /// error rather than being summed — every caller in this crate constructs
    /// entries exactly once, so a duplicate means a bug upstream.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: impl IntoIterator<Item = (u32, u32, f64)>,
    ) -> Result<Self> {
        let mut entries: Vec<(u32, u32, f64)> = triplets.into_iter().collect();
        for &(r, c, _) in &entries {
            if r as usize >= nrows || c as usize >= ncols {
                return Err(Error::ShapeMismatch(format!(
                    "triplet ({r}, {c}) out of bounds for {nrows}x{ncols} matrix"
                )));
            }
        }
        entries.sort_unstable_by_key(|&(r, c, _)| (r, c));
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 && w[0].1 == w[1].1 {
                return Err(Error::ShapeMismatch(format!(
                    "duplicate entry at ({}, {})",
                    w[0].0, w[0].1
                )));
            }
        }

        let mut indptr = vec![0usize; nrows + 1];
        for &(r, _, _) in &entries {
            indptr[r as usize + 1] += 1;
        }
        for i in 0..nrows {
            indptr[i + 1] += indptr[i];
        }
        let indices = entries.iter().map(|&(_, c, _)| c).collect();
        let data = entries.iter().map(|&(_, _, v)| v).collect();
        Ok(CsrMatrix {
            nrows,
            ncols,
            indptr,
            indices,
            data,
        })
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        CsrMatrix {
            nrows,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: Vec::new(),
            data: Vec::new(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let (lo, hi) = (self.indptr[i], self.indptr[i + 1]);
        (&self.indices[lo..hi], &self.data[lo..hi])
    }

    /// Value at `(i, j)`, zero if not stored.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&(j as u32)) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.nrows, self.ncols));
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                out[[i, j as usize]] = v;
            }
        }
        out
    }

    /// `self * rhs` for dense `rhs`.
    pub fn matmul_dense(&self, rhs: &Array2<f64>) -> Result<Array2<f64>> {
        self.matmul_dense_masked(rhs, None)
    }

    /// `self * rhs`, treating the columns of `self` flagged in `skip_col` as
    /// zero. `skip_col.len()` must equal `self.ncols`.
    pub fn matmul_dense_masked(
        &self,
        rhs: &Array2<f64>,
        skip_col: Option<&[bool]>,
    ) -> Result<Array2<f64>> {
        self.check_matmul(rhs, skip_col)?;
        // Transposed views and similar produce arrays whose rows are not
        // contiguous in memory; normalize once up front so the inner loop can
        // work on plain slices.
        let rhs = rhs.as_standard_layout();
        let k = rhs.ncols();
        let mut out = Array2::zeros((self.nrows, k));
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            let mut out_row = out.row_mut(i);
            let out_slice = out_row.as_slice_mut().expect("row-major output");
            for (&j, &v) in cols.iter().zip(vals) {
                if skip_col.is_some_and(|m| m[j as usize]) {
                    continue;
                }
                let rhs_row = rhs.row(j as usize);
                let rhs_slice = rhs_row.as_slice().expect("row-major rhs");
                for (o, r) in out_slice.iter_mut().zip(rhs_slice) {
                    *o += v * r;
                }
            }
        }
        Ok(out)
    }

    /// `self^T * rhs` for dense `rhs`.
    pub fn transpose_matmul_dense(&self, rhs: &Array2<f64>) -> Result<Array2<f64>> {
        self.transpose_matmul_dense_masked(rhs, None)
    }

    /// `self^T * rhs`, treating the columns of `self` flagged in `skip_col`
    /// as zero (so the corresponding output rows stay zero).
    pub fn transpose_matmul_dense_masked(
        &self,
        rhs: &Array2<f64>,
        skip_col: Option<&[bool]>,
    ) -> Result<Array2<f64>> {
        if rhs.nrows() != self.nrows {
            return Err(Error::ShapeMismatch(format!(
                "cannot multiply {}x{} transposed by {}x{}",
                self.nrows,
                self.ncols,
                rhs.nrows(),
                rhs.ncols()
            )));
        }
        if let Some(m) = skip_col {
            if m.len() != self.ncols {
                return Err(Error::ShapeMismatch(format!(
                    "mask length {} does not match {} columns",
                    m.len(),
                    self.ncols
                )));
            }
        }
        let rhs = rhs.as_standard_layout();
        let k = rhs.ncols();
        let mut out = Array2::zeros((self.ncols, k));
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            let rhs_row = rhs.row(i);
            let rhs_slice = rhs_row.as_slice().expect("row-major rhs");
            for (&j, &v) in cols.iter().zip(vals) {
                if skip_col.is_some_and(|m| m[j as usize]) {
                    continue;
                }
                let mut out_row = out.row_mut(j as usize);
                let out_slice = out_row.as_slice_mut().expect("row-major output");
                for (o, r) in out_slice.iter_mut().zip(rhs_slice) {
                    *o += v * r;
                }
            }
        }
        Ok(out)
    }

    fn check_matmul(&self, rhs: &Array2<f64>, skip_col: Option<&[bool]>) -> Result<()> {
        if rhs.nrows() != self.ncols {
            return Err(Error::ShapeMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.nrows,
                self.ncols,
                rhs.nrows(),
                rhs.ncols()
            )));
        }
        if let Some(m) = skip_col {
            if m.len() != self.ncols {
                return Err(Error::ShapeMismatch(format!(
                    "mask length {} does not match {} columns",
                    m.len(),
                    self.ncols
                )));
            }
        }
        Ok(())
    }

    /// Frobenius inner product `<self, dense>`.
    pub fn dot_dense(&self, dense: &Array2<f64>) -> Result<f64> {
        if dense.nrows() != self.nrows || dense.ncols() != self.ncols {
            return Err(Error::ShapeMismatch(format!(
                "inner product of {}x{} with {}x{}",
                self.nrows,
                self.ncols,
                dense.nrows(),
                dense.ncols()
            )));
        }
        let mut acc = 0.0;
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                acc += v * dense[[i, j as usize]];
            }
        }
        Ok(acc)
    }
}
