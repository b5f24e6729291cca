//! K-means on embedding rows.
//!
//! [`kmeans_approx`] runs `R(eps) = min(ceil(10 / eps), 200)` independent
//! restarts of D²-weighted (k-means++) seeding followed by Lloyd iterations
//! and keeps the cheapest. [`kmeans_exact`] enumerates partitions and serves
//! as the reference for the `(1 + eps)` cost contract on small inputs.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::rng;

const MAX_LLOYD_ITERS: usize = 100;
const MAX_RESTARTS: usize = 200;
const EXACT_LIMIT: usize = 14;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    /// Cluster index in `0..K` for every point.
    pub assignment: Vec<usize>,
    /// `K x d` centers.
    pub centers: DenseMatrix,
    /// Sum of squared distances to assigned centers.
    pub cost: f64,
}

pub fn restarts(eps: f64) -> usize {
    ((10.0 / eps).ceil() as usize).clamp(1, MAX_RESTARTS)
}

fn check_input(points: &DenseMatrix, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Parameter("K must be positive".into()));
    }
    if points.rows() < k {
        return Err(Error::TooFewPoints {
            m: points.rows(),
            k,
        });
    }
    if points.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(())
}

/// Approximate K-means: best of `restarts(eps)` seeded Lloyd runs. Restarts
/// run in parallel; the winner is the lowest `(cost, restart index)`, so the
/// output does not depend on the worker count.
pub fn kmeans_approx(points: &DenseMatrix, k: usize, eps: f64, seed: u64) -> Result<KMeansResult> {
    check_input(points, k)?;
    if !(eps > 0.0) {
        return Err(Error::Parameter(format!("eps must be positive, got {eps}")));
    }
    let runs = restarts(eps);
    let best = (0..runs)
        .into_par_iter()
        .map(|r| {
            let mut g = rng::stream_rng(seed, r as u64);
            let centers = seed_centers(points, k, &mut g);
            let (res, _) = lloyd(points, centers);
            (res, r)
        })
        .min_by(|(a, ra), (b, rb)| a.cost.total_cmp(&b.cost).then(ra.cmp(rb)))
        .expect("at least one restart");
    Ok(best.0)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// D²-weighted seeding. When every remaining point coincides with a chosen
/// center the next center is drawn uniformly.
fn seed_centers<R: Rng>(points: &DenseMatrix, k: usize, rng: &mut R) -> DenseMatrix {
    let m = points.rows();
    let d = points.cols();
    let mut centers = DenseMatrix::zeros(k, d);
    let first = rng.random_range(0..m);
    centers.row_mut(0).copy_from_slice(points.row(first));
    let mut dist: Vec<f64> = (0..m).map(|i| sq_dist(points.row(i), centers.row(0))).collect();
    for c in 1..k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = m - 1;
            for (i, &w) in dist.iter().enumerate() {
                if u < w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            // Rounding can land on a zero-weight tail point; walk back.
            while dist[pick] == 0.0 && pick > 0 {
                pick -= 1;
            }
            pick
        } else {
            rng.random_range(0..m)
        };
        centers.row_mut(c).copy_from_slice(points.row(pick));
        for (i, di) in dist.iter_mut().enumerate() {
            *di = di.min(sq_dist(points.row(i), centers.row(c)));
        }
    }
    centers
}

fn assign(points: &DenseMatrix, centers: &DenseMatrix) -> (Vec<usize>, Vec<f64>) {
    (0..points.rows())
        .map(|i| {
            let p = points.row(i);
            let mut best = (0, f64::INFINITY);
            for c in 0..centers.rows() {
                let dd = sq_dist(p, centers.row(c));
                if dd < best.1 {
                    best = (c, dd);
                }
            }
            best
        })
        .unzip()
}

/// Lloyd iterations from the given centers until the assignment is a fixed
/// point or the iteration cap is hit. Returns the result and the cost trace
/// (cost of each assignment step).
pub(crate) fn lloyd(points: &DenseMatrix, mut centers: DenseMatrix) -> (KMeansResult, Vec<f64>) {
    let k = centers.rows();
    let d = points.cols();
    let (mut assignment, mut dist) = assign(points, &centers);
    let mut trace = vec![dist.iter().sum::<f64>()];
    for _ in 0..MAX_LLOYD_ITERS {
        // Update step.
        let mut sums = DenseMatrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for (i, &c) in assignment.iter().enumerate() {
            counts[c] += 1;
            for (s, &x) in sums.row_mut(c).iter_mut().zip(points.row(i)) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                for (dst, &s) in centers.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *dst = s * inv;
                }
            }
        }
        // Empty clusters take over the point farthest from its center.
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..points.rows())
                    .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)))
                    .expect("nonempty input");
                centers.row_mut(c).copy_from_slice(points.row(far));
                dist[far] = 0.0;
            }
        }
        let (next, next_dist) = assign(points, &centers);
        trace.push(next_dist.iter().sum());
        let stable = next == assignment;
        assignment = next;
        dist = next_dist;
        if stable {
            break;
        }
    }
    let centers = centroids(points, &assignment, k, &centers);
    let cost = assignment
        .iter()
        .enumerate()
        .map(|(i, &c)| sq_dist(points.row(i), centers.row(c)))
        .sum();
    (
        KMeansResult {
            assignment,
            centers,
            cost,
        },
        trace,
    )
}

/// Centroids of the given assignment; empty clusters keep `fallback` rows.
fn centroids(points: &DenseMatrix, assignment: &[usize], k: usize, fallback: &DenseMatrix) -> DenseMatrix {
    let d = points.cols();
    let mut sums = DenseMatrix::zeros(k, d);
    let mut counts = vec![0usize; k];
    for (i, &c) in assignment.iter().enumerate() {
        counts[c] += 1;
        for (s, &x) in sums.row_mut(c).iter_mut().zip(points.row(i)) {
            *s += x;
        }
    }
    for c in 0..k {
        if counts[c] == 0 {
            sums.row_mut(c).copy_from_slice(fallback.row(c));
        } else {
            let inv = 1.0 / counts[c] as f64;
            sums.row_mut(c).iter_mut().for_each(|s| *s *= inv);
        }
    }
    sums
}

/// Globally optimal K-means by enumerating every partition of the points
/// into at most `K` blocks (restricted-growth labelings). Limited to 14 points.
pub fn kmeans_exact(points: &DenseMatrix, k: usize) -> Result<KMeansResult> {
    check_input(points, k)?;
    let m = points.rows();
    if m > EXACT_LIMIT {
        return Err(Error::TooManyPoints(m));
    }
    let d = points.cols();
    let norms: f64 = points.as_slice().iter().map(|x| x * x).sum();

    struct Search<'a> {
        points: &'a DenseMatrix,
        k: usize,
        d: usize,
        sums: Vec<Vec<f64>>,
        counts: Vec<usize>,
        labels: Vec<usize>,
        best_gain: f64,
        best: Vec<usize>,
    }

    impl Search<'_> {
        // cost = sum ||x||^2 - sum_c ||S_c||^2 / n_c; maximize the second term.
        fn gain(&self) -> f64 {
            self.sums
                .iter()
                .zip(&self.counts)
                .filter(|(_, &c)| c > 0)
                .map(|(s, &c)| s.iter().map(|v| v * v).sum::<f64>() / c as f64)
                .sum()
        }

        fn visit(&mut self, i: usize, used: usize) {
            if i == self.points.rows() {
                let g = self.gain();
                if g > self.best_gain {
                    self.best_gain = g;
                    self.best.clone_from(&self.labels);
                }
                return;
            }
            let limit = (used + 1).min(self.k);
            for c in 0..limit {
                self.labels[i] = c;
                self.counts[c] += 1;
                for j in 0..self.d {
                    self.sums[c][j] += self.points[(i, j)];
                }
                self.visit(i + 1, used.max(c + 1));
                self.counts[c] -= 1;
                for j in 0..self.d {
                    self.sums[c][j] -= self.points[(i, j)];
                }
            }
        }
    }

    let mut s = Search {
        points,
        k,
        d,
        sums: vec![vec![0.0; d]; k],
        counts: vec![0; k],
        labels: vec![0; m],
        best_gain: f64::NEG_INFINITY,
        best: vec![0; m],
    };
    s.visit(0, 0);
    let assignment = s.best;
    let centers = centroids(points, &assignment, k, &DenseMatrix::zeros(k, d));
    let cost = assignment
        .iter()
        .enumerate()
        .map(|(i, &c)| sq_dist(points.row(i), centers.row(c)))
        .sum::<f64>();
    debug_assert!((cost - (norms - s.best_gain)).abs() <= 1e-6 * norms.max(1.0));
    Ok(KMeansResult {
        assignment,
        centers,
        cost,
    })
}
