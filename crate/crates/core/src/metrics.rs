//! Agreement between a true and an estimated partition.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Membership;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub nmi: f64,
    /// Fraction of nodes misclassified under the best label bijection.
    pub overall_error: f64,
    /// Misclassified fraction within each true community.
    pub per_community: Vec<f64>,
    /// `permutation[a]` is the estimated label matched to true label `a`.
    pub permutation: Vec<usize>,
    /// `confusion[a][b]`: nodes with true label `a` and estimated label `b`.
    pub confusion: Vec<Vec<usize>>,
}

fn contingency(truth: &[usize], est: &[usize]) -> (Vec<Vec<usize>>, usize, usize) {
    let kt = truth.iter().max().map_or(0, |m| m + 1);
    let ke = est.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0usize; ke]; kt];
    for (&a, &b) in truth.iter().zip(est) {
        table[a][b] += 1;
    }
    (table, kt, ke)
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Normalized mutual information `I(X; Y) / sqrt(H(X) H(Y))` (natural logs).
/// If either partition has zero entropy the result is 1 when the partitions
/// coincide as set partitions and 0 otherwise.
pub fn nmi(truth: &[usize], est: &[usize]) -> Result<f64> {
    if truth.len() != est.len() {
        return Err(Error::LengthMismatch {
            left: truth.len(),
            right: est.len(),
        });
    }
    let n = truth.len();
    if n == 0 {
        return Ok(1.0);
    }
    let nf = n as f64;
    let (table, kt, ke) = contingency(truth, est);
    let rows: Vec<usize> = table.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<usize> = (0..ke).map(|b| (0..kt).map(|a| table[a][b]).sum()).collect();
    let hx = entropy(rows.iter().copied(), nf);
    let hy = entropy(cols.iter().copied(), nf);
    if hx <= 0.0 || hy <= 0.0 {
        let nonempty = |v: &[usize]| v.iter().filter(|&&c| c > 0).count();
        return Ok(if nonempty(&rows) == nonempty(&cols) { 1.0 } else { 0.0 });
    }
    let mut terms = Vec::new();
    for a in 0..kt {
        for b in 0..ke {
            let c = table[a][b];
            if c == 0 {
                continue;
            }
            let pab = c as f64 / nf;
            terms.push(pab * (c as f64 * nf / (rows[a] as f64 * cols[b] as f64)).ln());
        }
    }
    // Summing in sorted order makes nmi(x, y) == nmi(y, x) bit for bit.
    terms.sort_by(f64::total_cmp);
    let mi: f64 = terms.iter().sum();
    Ok((mi / (hx * hy).sqrt()).clamp(0.0, 1.0))
}

/// Permutation maximizing `sum_a w[a][perm[a]]` on a square matrix, by
/// exhaustive search (Heap's algorithm).
pub fn best_permutation_exhaustive(w: &[Vec<i64>]) -> Vec<usize> {
    let k = w.len();
    let mut perm: Vec<usize> = (0..k).collect();
    let score = |p: &[usize]| (0..k).map(|a| w[a][p[a]]).sum::<i64>();
    let mut best = perm.clone();
    let mut best_score = score(&perm);
    let mut c = vec![0usize; k];
    let mut i = 1;
    while i < k {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            let s = score(&perm);
            if s > best_score {
                best_score = s;
                best.clone_from(&perm);
            }
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best
}

/// Maximum-weight perfect matching on a square matrix (Hungarian method,
/// O(K^3), run as a minimization of the negated weights).
pub fn best_permutation_hungarian(w: &[Vec<i64>]) -> Vec<usize> {
    let k = w.len();
    if k == 0 {
        return Vec::new();
    }
    let cost = |i: usize, j: usize| -w[i - 1][j - 1];
    // 1-based potentials, e-maxx formulation.
    let mut u = vec![0i64; k + 1];
    let mut v = vec![0i64; k + 1];
    let mut p = vec![0usize; k + 1];
    let mut way = vec![0usize; k + 1];
    for i in 1..=k {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![i64::MAX; k + 1];
        let mut used = vec![false; k + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = i64::MAX;
            let mut j1 = 0;
            for j in 1..=k {
                if used[j] {
                    continue;
                }
                let cur = cost(i0, j) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=k {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0; k];
    for j in 1..=k {
        perm[p[j] - 1] = j - 1;
    }
    perm
}

/// Misclassification under the label bijection that maximizes agreement
/// (trace of the aligned confusion matrix). Label sets of different sizes
/// are padded with empty communities. Bijections are searched exhaustively
/// for up to 10 labels, otherwise with the Hungarian method.
pub fn misclassification(truth: &Membership, est: &Membership) -> Result<EvalReport> {
    if truth.n() != est.n() {
        return Err(Error::LengthMismatch {
            left: truth.n(),
            right: est.n(),
        });
    }
    let k = truth.k().max(est.k());
    let mut confusion = vec![vec![0usize; k]; k];
    for (&a, &b) in truth.labels().iter().zip(est.labels()) {
        confusion[a][b] += 1;
    }
    let weights: Vec<Vec<i64>> = confusion
        .iter()
        .map(|r| r.iter().map(|&c| c as i64).collect())
        .collect();
    let permutation = if k <= 10 {
        best_permutation_exhaustive(&weights)
    } else {
        best_permutation_hungarian(&weights)
    };
    let n = truth.n();
    let sizes: Vec<usize> = confusion.iter().map(|r| r.iter().sum()).collect();
    let per_community: Vec<f64> = (0..truth.k())
        .map(|a| {
            if sizes[a] == 0 {
                0.0
            } else {
                (sizes[a] - confusion[a][permutation[a]]) as f64 / sizes[a] as f64
            }
        })
        .collect();
    let correct: usize = (0..k).map(|a| confusion[a][permutation[a]]).sum();
    let overall_error = if n == 0 { 0.0 } else { (n - correct) as f64 / n as f64 };
    Ok(EvalReport {
        nmi: nmi(truth.labels(), est.labels())?,
        overall_error,
        per_community,
        permutation,
        confusion,
    })
}
