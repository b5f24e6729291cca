//! Minimal matrix containers: a row-major dense matrix for embeddings and
//! small symmetric problems, and an integer CSR matrix for two-path counts.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Panics if `data.len() != rows * cols`.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length does not match shape");
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows);
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                for (o, &b) in out.row_mut(i).iter_mut().zip(orow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// Principal submatrix on `idx` (rows and columns).
    pub fn select(&self, idx: &[usize]) -> Self {
        let mut out = Self::zeros(idx.len(), idx.len());
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                out[(a, b)] = self[(i, j)];
            }
        }
        out
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Square sparse matrix with nonnegative integer entries, CSR layout,
/// column indices sorted within each row and no stored zeros.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsrMatrix {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<u32>,
}

impl CsrMatrix {
    /// Builds from per-row `(column, value)` lists; rows must be sorted by
    /// column with strictly positive values.
    pub fn from_sorted_rows(n: usize, rows: Vec<Vec<(u32, u32)>>) -> Self {
        assert_eq!(rows.len(), n);
        let nnz = rows.iter().map(Vec::len).sum();
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        indptr.push(0);
        for row in rows {
            debug_assert!(row.windows(2).all(|w| w[0].0 < w[1].0));
            for (c, v) in row {
                debug_assert!(v > 0);
                indices.push(c);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        Self {
            n,
            indptr,
            indices,
            values,
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            indptr: vec![0; n + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn row(&self, i: usize) -> (&[u32], &[u32]) {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    pub fn get(&self, i: usize, j: usize) -> u32 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&(j as u32)) {
            Ok(p) => vals[p],
            Err(_) => 0,
        }
    }

    pub fn row_sum(&self, i: usize) -> u64 {
        self.row(i).1.iter().map(|&v| v as u64).sum()
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).into_par_iter().all(|i| {
            let (cols, vals) = self.row(i);
            cols.iter()
                .zip(vals)
                .all(|(&j, &v)| self.get(j as usize, i) == v)
        })
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                d[(i, j as usize)] = v as f64;
            }
        }
        d
    }

    /// Principal submatrix on the strictly increasing index list `keep`.
    pub fn select(&self, keep: &[usize]) -> Self {
        let mut map = vec![u32::MAX; self.n];
        for (new, &old) in keep.iter().enumerate() {
            map[old] = new as u32;
        }
        let rows: Vec<Vec<(u32, u32)>> = keep
            .par_iter()
            .map(|&old| {
                let (cols, vals) = self.row(old);
                cols.iter()
                    .zip(vals)
                    .filter_map(|(&c, &v)| {
                        let m = map[c as usize];
                        (m != u32::MAX).then_some((m, v))
                    })
                    .collect()
            })
            .collect();
        Self::from_sorted_rows(keep.len(), rows)
    }

    /// `y = M x`, parallel over rows; each row is reduced sequentially, so
    /// the result does not depend on the worker count.
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        y.par_iter_mut().enumerate().for_each(|(i, yi)| {
            let (cols, vals) = self.row(i);
            *yi = cols
                .iter()
                .zip(vals)
                .map(|(&c, &v)| v as f64 * x[c as usize])
                .sum();
        });
    }

    /// Entrywise sum; both operands must share the dimension.
    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        let rows = (0..self.n)
            .into_par_iter()
            .map(|i| {
                let (ca, va) = self.row(i);
                let (cb, vb) = other.row(i);
                let mut out = Vec::with_capacity(ca.len() + cb.len());
                let (mut p, mut q) = (0, 0);
                while p < ca.len() || q < cb.len() {
                    if q == cb.len() || (p < ca.len() && ca[p] < cb[q]) {
                        out.push((ca[p], va[p]));
                        p += 1;
                    } else if p == ca.len() || cb[q] < ca[p] {
                        out.push((cb[q], vb[q]));
                        q += 1;
                    } else {
                        out.push((ca[p], va[p] + vb[q]));
                        p += 1;
                        q += 1;
                    }
                }
                out
            })
            .collect();
        Self::from_sorted_rows(self.n, rows)
    }
}
