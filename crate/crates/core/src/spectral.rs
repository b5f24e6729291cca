//! Top-K symmetric eigenpairs and spherical row normalization.
//!
//! Small problems (dimension up to [`EigenConfig::dense_cutoff`]) are solved
//! densely. Larger ones use block Lanczos with full reorthogonalization: the
//! basis grows by one block (of width K) per step, the Rayleigh quotient
//! `V^T M V` is maintained explicitly, and Rayleigh-Ritz extraction runs at
//! geometrically spaced basis sizes until every wanted Ritz pair meets the
//! residual tolerance. Blocks of width K resolve eigenvalue multiplicities up
//! to K, which the population (noiseless) matrices exhibit.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{CsrMatrix, DenseMatrix};
use crate::rng;

/// Matrix-free access to a real symmetric matrix.
pub trait SymmetricOperator: Sync {
    fn dim(&self) -> usize;

    /// `y = M x`.
    fn apply(&self, x: &[f64], y: &mut [f64]);

    /// `max |M_ij - M_ji|`.
    fn asymmetry(&self) -> f64;

    fn to_dense(&self) -> DenseMatrix {
        let n = self.dim();
        let mut d = DenseMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            self.apply(&e, &mut col);
            for (i, &v) in col.iter().enumerate() {
                d[(i, j)] = v;
            }
            e[j] = 0.0;
        }
        d
    }
}

impl SymmetricOperator for CsrMatrix {
    fn dim(&self) -> usize {
        CsrMatrix::dim(self)
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.mul_vec(x, y)
    }

    fn asymmetry(&self) -> f64 {
        // Integer entries: any mismatch is at least 1.
        if self.is_symmetric() {
            0.0
        } else {
            1.0
        }
    }

    fn to_dense(&self) -> DenseMatrix {
        CsrMatrix::to_dense(self)
    }
}

impl SymmetricOperator for DenseMatrix {
    fn dim(&self) -> usize {
        self.rows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.par_iter_mut().enumerate().for_each(|(i, yi)| {
            *yi = self.row(i).iter().zip(x).map(|(a, b)| a * b).sum();
        });
    }

    fn asymmetry(&self) -> f64 {
        if self.rows() != self.cols() {
            return f64::INFINITY;
        }
        let n = self.rows();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i + 1..n {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    fn to_dense(&self) -> DenseMatrix {
        self.clone()
    }
}

/// Solver tolerances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenConfig {
    /// Target accuracy of returned eigenvalues.
    pub eigenvalue_tol: f64,
    /// Required `||M v - lambda v|| / max(1, |lambda|)` for every returned pair.
    pub residual_tol: f64,
    /// Problems up to this dimension are solved densely.
    pub dense_cutoff: usize,
    /// `lambda_K - lambda_{K+1}` at or below this marks the subspace as ambiguous.
    pub gap_tol: f64,
}

impl Default for EigenConfig {
    fn default() -> Self {
        Self {
            eigenvalue_tol: 1e-8,
            residual_tol: 1e-6,
            dense_cutoff: 256,
            gap_tol: 1e-10,
        }
    }
}

/// Leading eigenpairs, eigenvalues in descending algebraic order.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralEmbedding {
    pub values: Vec<f64>,
    /// `n' x K`, orthonormal columns.
    pub vectors: DenseMatrix,
    /// Set when `lambda_K` and `lambda_{K+1}` coincide, so the returned
    /// subspace is one of several valid choices.
    pub ambiguous: bool,
}

impl SpectralEmbedding {
    pub fn n_prime(&self) -> usize {
        self.vectors.rows()
    }
}

/// Unit-normalized nonzero rows of an embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedEmbedding {
    pub rows: DenseMatrix,
    /// Source row of each normalized row, strictly increasing.
    pub indices: Vec<usize>,
}

/// The `k` algebraically largest eigenpairs of `m` with default tolerances.
pub fn top_k_eigenpairs<M: SymmetricOperator + ?Sized>(
    m: &M,
    k: usize,
    seed: u64,
) -> Result<SpectralEmbedding> {
    top_k_eigenpairs_with(m, k, seed, &EigenConfig::default())
}

pub fn top_k_eigenpairs_with<M: SymmetricOperator + ?Sized>(
    m: &M,
    k: usize,
    seed: u64,
    cfg: &EigenConfig,
) -> Result<SpectralEmbedding> {
    let n = m.dim();
    if k > n {
        return Err(Error::Dimension(format!("K = {k} exceeds matrix dimension {n}")));
    }
    let asym = m.asymmetry();
    if asym > 0.0 {
        return Err(Error::NotSymmetric(asym));
    }
    if k == 0 {
        return Ok(SpectralEmbedding {
            values: Vec::new(),
            vectors: DenseMatrix::zeros(n, 0),
            ambiguous: false,
        });
    }
    if n <= cfg.dense_cutoff {
        Ok(dense_top_k(&m.to_dense(), k, cfg))
    } else {
        Ok(block_lanczos(m, k, seed, cfg))
    }
}

/// Full spectrum in descending order (dense).
pub fn all_eigenvalues<M: SymmetricOperator + ?Sized>(m: &M) -> Result<Vec<f64>> {
    let asym = m.asymmetry();
    if asym > 0.0 {
        return Err(Error::NotSymmetric(asym));
    }
    let (values, _) = dense_eigen(&m.to_dense(), false);
    Ok(values)
}

/// Number of eigenvalues strictly greater than `tau`. Computes leading
/// eigenvalues in growing batches until one falls at or below `tau`.
pub fn count_eigenvalues_above<M: SymmetricOperator + ?Sized>(
    m: &M,
    tau: f64,
    seed: u64,
    cfg: &EigenConfig,
) -> Result<usize> {
    let n = m.dim();
    if n == 0 {
        return Ok(0);
    }
    if n <= cfg.dense_cutoff {
        return Ok(all_eigenvalues(m)?.into_iter().filter(|&v| v > tau).count());
    }
    let mut k = n.min(8);
    loop {
        let emb = top_k_eigenpairs_with(m, k, seed, cfg)?;
        let above = emb.values.iter().filter(|&&v| v > tau).count();
        if above < k || k == n {
            return Ok(above);
        }
        k = n.min(2 * k);
    }
}

/// Drops rows with norm below `1e-12` and scales the rest to unit length.
pub fn normalize_rows(emb: &SpectralEmbedding) -> Result<NormalizedEmbedding> {
    let v = &emb.vectors;
    let mut indices = Vec::new();
    let mut data = Vec::new();
    for i in 0..v.rows() {
        let row = v.row(i);
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-12 {
            continue;
        }
        indices.push(i);
        data.extend(row.iter().map(|x| x / norm));
    }
    if indices.is_empty() {
        return Err(Error::DegenerateEmbedding);
    }
    Ok(NormalizedEmbedding {
        rows: DenseMatrix::from_row_major(indices.len(), v.cols(), data),
        indices,
    })
}

/// Dense symmetric eigendecomposition, values descending; eigenvectors as
/// columns of the returned matrix when requested.
fn dense_eigen(a: &DenseMatrix, vectors: bool) -> (Vec<f64>, Option<DenseMatrix>) {
    let n = a.rows();
    if n == 0 {
        return (Vec::new(), vectors.then(|| DenseMatrix::zeros(0, 0)));
    }
    let dm = DMatrix::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]));
    let eig = SymmetricEigen::new(dm);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
    let values = order.iter().map(|&c| eig.eigenvalues[c]).collect();
    let vecs = vectors.then(|| {
        let mut v = DenseMatrix::zeros(n, n);
        for (new, &c) in order.iter().enumerate() {
            for i in 0..n {
                v[(i, new)] = eig.eigenvectors[(i, c)];
            }
        }
        v
    });
    (values, vecs)
}

fn dense_top_k(a: &DenseMatrix, k: usize, cfg: &EigenConfig) -> SpectralEmbedding {
    let n = a.rows();
    let (values, vecs) = dense_eigen(a, true);
    let vecs = vecs.expect("requested");
    let mut out = DenseMatrix::zeros(n, k);
    for i in 0..n {
        out.row_mut(i).copy_from_slice(&vecs.row(i)[..k]);
    }
    let ambiguous = k < n && gap_is_degenerate(values[k - 1], values[k], cfg);
    SpectralEmbedding {
        values: values[..k].to_vec(),
        vectors: out,
        ambiguous,
    }
}

fn gap_is_degenerate(a: f64, b: f64, cfg: &EigenConfig) -> bool {
    (a - b).abs() <= cfg.gap_tol * a.abs().max(1.0)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Orthogonalizes `x` against the columns of `basis` (classical Gram-Schmidt,
/// applied twice) and returns the remaining norm.
fn orthogonalize(x: &mut [f64], basis: &[Vec<f64>]) -> f64 {
    for _ in 0..2 {
        if basis.is_empty() {
            break;
        }
        let coef: Vec<f64> = basis.par_iter().map(|v| dot(v, x)).collect();
        x.par_iter_mut().enumerate().for_each(|(i, xi)| {
            let s: f64 = basis.iter().zip(&coef).map(|(v, c)| c * v[i]).sum();
            *xi -= s;
        });
    }
    dot(x, x).sqrt()
}

fn block_lanczos<M: SymmetricOperator + ?Sized>(
    m: &M,
    k: usize,
    seed: u64,
    cfg: &EigenConfig,
) -> SpectralEmbedding {
    let n = m.dim();
    let width = k;
    let mut r = rng::rng(seed);
    let random_vec = |r: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
        (0..n).map(|_| r.sample::<f64, _>(StandardNormal)).collect()
    };

    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut images: Vec<Vec<f64>> = Vec::new();
    // Rayleigh quotient V^T M V, grown one column at a time.
    let mut h: Vec<Vec<f64>> = Vec::new();
    let mut next_block: Vec<Vec<f64>> = (0..width).map(|_| random_vec(&mut r)).collect();

    let mut next_check = (3 * k).max(k + 20).min(n);
    let mut scale = 0.0f64;

    loop {
        // Append the candidate block, orthonormalized against the basis.
        let mut added = 0;
        for mut x in std::mem::take(&mut next_block) {
            if basis.len() == n {
                break;
            }
            let before = dot(&x, &x).sqrt();
            let mut norm = orthogonalize(&mut x, &basis);
            // Invariant subspace reached in this direction: restart with a
            // fresh random vector.
            let mut attempts = 0;
            while norm <= 1e-10 * before.max(scale).max(1e-300) && attempts < 8 {
                x = random_vec(&mut r);
                norm = orthogonalize(&mut x, &basis);
                attempts += 1;
            }
            if norm == 0.0 {
                continue;
            }
            x.iter_mut().for_each(|v| *v /= norm);
            let mut y = vec![0.0; n];
            m.apply(&x, &mut y);
            scale = scale.max(dot(&y, &y).sqrt());
            let col: Vec<f64> = basis.par_iter().map(|v| dot(v, &y)).collect();
            for (row, c) in h.iter_mut().zip(&col) {
                row.push(*c);
            }
            let mut last = col;
            last.push(dot(&x, &y));
            h.push(last);
            basis.push(x);
            images.push(y);
            added += 1;
        }
        let dim = basis.len();
        let exhausted = dim == n || added == 0;

        if dim >= next_check || exhausted {
            if let Some(result) = rayleigh_ritz(&basis, &images, &h, k, cfg, exhausted) {
                return result;
            }
            next_check = ((dim as f64 * 1.5) as usize).max(dim + width).min(n);
        }
        next_block = images[dim - added.max(1)..].to_vec();
        if added == 0 {
            next_block = (0..width).map(|_| random_vec(&mut r)).collect();
        }
    }
}

/// Ritz extraction; returns `None` while any wanted pair is unconverged
/// (unless `force`, when the basis cannot grow further).
fn rayleigh_ritz(
    basis: &[Vec<f64>],
    images: &[Vec<f64>],
    h: &[Vec<f64>],
    k: usize,
    cfg: &EigenConfig,
    force: bool,
) -> Option<SpectralEmbedding> {
    let n = basis[0].len();
    let dim = basis.len();
    let hm = DenseMatrix::from_rows(h);
    let (theta, s) = dense_eigen(&hm, true);
    let s = s.expect("requested");
    let wanted = k.min(dim);
    // Also converge pair K+1 when available so the gap flag is meaningful.
    let check = (k + 1).min(dim);

    let combine = |src: &[Vec<f64>], c: usize| -> Vec<f64> {
        (0..n)
            .into_par_iter()
            .map(|i| (0..dim).map(|j| s[(j, c)] * src[j][i]).sum())
            .collect()
    };

    let mut vectors = Vec::with_capacity(wanted);
    for c in 0..check {
        let y = combine(basis, c);
        let my = combine(images, c);
        let res = my
            .iter()
            .zip(&y)
            .map(|(a, b)| (a - theta[c] * b).powi(2))
            .sum::<f64>()
            .sqrt();
        let tol = cfg.residual_tol.min(cfg.eigenvalue_tol.sqrt()) * theta[c].abs().max(1.0);
        if res > tol && !force {
            return None;
        }
        if c < wanted {
            vectors.push(y);
        }
    }
    let mut out = DenseMatrix::zeros(n, k);
    for (c, v) in vectors.iter().enumerate() {
        for i in 0..n {
            out[(i, c)] = v[i];
        }
    }
    let ambiguous = dim > k && gap_is_degenerate(theta[k - 1], theta[k], cfg);
    Some(SpectralEmbedding {
        values: theta[..wanted].to_vec(),
        vectors: out,
        ambiguous,
    })
}
