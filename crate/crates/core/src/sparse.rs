//! Minimal real sparse storage used to assemble constraint Jacobians,
//! objective Hessians and KKT matrices.
//!
//! Matrices are built as coordinate triplets (duplicates summed) and frozen
//! into compressed sparse column form.

use crate::error::{Error, Result};
use faer::sparse::{SparseColMat, Triplet};

#[derive(Clone, Debug, Default)]
pub struct TripletMatrix {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletMatrix {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    /// Grows the row count; used while rows are appended during assembly.
    pub fn set_nrows(&mut self, nrows: usize) {
        assert!(nrows >= self.nrows);
        self.nrows = nrows;
    }

    /// Adds `value` at `(row, col)`. Explicit zeros are dropped.
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        assert!(
            row < self.nrows && col < self.ncols,
            "entry ({row}, {col}) outside {}x{}",
            self.nrows,
            self.ncols
        );
        if value != 0.0 {
            self.entries.push((row, col, value));
        }
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn to_csc(&self) -> CscMatrix {
        CscMatrix::from_triplets(self.nrows, self.ncols, &self.entries)
    }
}

/// Compressed sparse column matrix with sorted, de-duplicated row indices.
#[derive(Clone, Debug, PartialEq)]
pub struct CscMatrix {
    nrows: usize,
    ncols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CscMatrix {
    pub fn from_triplets(nrows: usize, ncols: usize, entries: &[(usize, usize, f64)]) -> Self {
        let mut sorted: Vec<(usize, usize, f64)> = entries.to_vec();
        sorted.sort_by_key(|e| (e.1, e.0));

        let mut col_ptr = vec![0usize; ncols + 1];
        let mut row_idx = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for &(r, c, v) in &sorted {
            if last == Some((r, c)) {
                *values.last_mut().expect("duplicate follows an entry") += v;
            } else {
                row_idx.push(r);
                values.push(v);
                col_ptr[c + 1] += 1;
                last = Some((r, c));
            }
        }
        for c in 0..ncols {
            col_ptr[c + 1] += col_ptr[c];
        }
        Self {
            nrows,
            ncols,
            col_ptr,
            row_idx,
            values,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterates `(row, col, value)` in column-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.ncols).flat_map(move |c| {
            (self.col_ptr[c]..self.col_ptr[c + 1]).map(move |k| (self.row_idx[k], c, self.values[k]))
        })
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let span = &self.row_idx[self.col_ptr[col]..self.col_ptr[col + 1]];
        match span.binary_search(&row) {
            Ok(k) => self.values[self.col_ptr[col] + k],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        let mut y = vec![0.0; self.nrows];
        for (r, c, v) in self.iter() {
            y[r] += v * x[c];
        }
        y
    }

    pub fn transpose_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![0.0; self.ncols];
        for (r, c, v) in self.iter() {
            y[c] += v * x[r];
        }
        y
    }

    pub fn transpose(&self) -> CscMatrix {
        let t: Vec<_> = self.iter().map(|(r, c, v)| (c, r, v)).collect();
        CscMatrix::from_triplets(self.ncols, self.nrows, &t)
    }

    /// Row-major dense copy. Meant for small systems and test oracles.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (r, c, v) in self.iter() {
            d[r][c] = v;
        }
        d
    }

    /// Largest absolute entry of `self - selfᵀ`.
    pub fn asymmetry(&self) -> f64 {
        self.iter()
            .map(|(r, c, v)| (v - self.get(c, r)).abs())
            .fold(0.0, f64::max)
    }

    /// Indices of columns without any stored entry.
    pub fn empty_columns(&self) -> Vec<usize> {
        (0..self.ncols)
            .filter(|&c| self.col_ptr[c] == self.col_ptr[c + 1])
            .collect()
    }

    /// Indices of rows without any stored entry.
    pub fn empty_rows(&self) -> Vec<usize> {
        let mut seen = vec![false; self.nrows];
        for &r in &self.row_idx {
            seen[r] = true;
        }
        (0..self.nrows).filter(|&r| !seen[r]).collect()
    }
}

/// LU factorization with partial pivoting of a square sparse matrix.
pub struct SparseLu {
    n: usize,
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
}

impl SparseLu {
    /// Factors `matrix`. A structurally singular matrix yields
    /// [`Error::SingularKkt`]; numerical singularity surfaces as non-finite
    /// solutions, which callers must check.
    pub fn factor(matrix: &CscMatrix) -> Result<Self> {
        assert_eq!(matrix.nrows, matrix.ncols, "LU needs a square matrix");
        let triplets: Vec<Triplet<usize, usize, f64>> = matrix.iter().map(|(r, c, v)| Triplet::new(r, c, v)).collect();
        let mat =
            SparseColMat::<usize, f64>::try_new_from_triplets(matrix.nrows, matrix.ncols, &triplets).map_err(|e| {
                Error::SingularKkt {
                    diagnostic: format!("matrix creation failed: {e:?}"),
                }
            })?;
        let lu = mat.sp_lu().map_err(|e| Error::SingularKkt {
            diagnostic: match e {
                faer::sparse::linalg::LuError::SymbolicSingular { index } => {
                    format!("structurally singular at pivot {index}")
                }
                other => format!("{other:?}"),
            },
        })?;
        Ok(Self { n: matrix.nrows, lu })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        use faer::prelude::Solve;
        assert_eq!(rhs.len(), self.n);
        let b = faer::Col::<f64>::from_fn(self.n, |i| rhs[i]);
        let x = self.lu.solve(&b);
        (0..self.n).map(|i| x[i]).collect()
    }
}

pub(crate) fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}
