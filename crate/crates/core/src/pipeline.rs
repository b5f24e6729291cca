//! End-to-end detection: spectral clustering of the pruned sum of squared
//! adjacency matrices (plain and spherical), the number-of-communities
//! estimator, two spectral baselines, and theory diagnostics.
//!
//! Nodes removed by pruning, and nodes whose embedding row is zero, are
//! assigned label 0 (the first community).

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::kmeans_approx;
use crate::error::{Error, Result};
use crate::graph::{
    degree_stats, gammas, order_statistic, prune, submatrix, sum_squared_adjacency,
    MultiRelationalNetwork, PruneResult,
};
use crate::matrix::{CsrMatrix, DenseMatrix};
use crate::model::{BlockSchedule, Membership};
use crate::rng::{self, TAG_EIGEN, TAG_KMEANS};
use crate::spectral::{
    count_eigenvalues_above, normalize_rows, top_k_eigenpairs_with, EigenConfig,
    SpectralEmbedding,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Spectral clustering of the pruned sum of squares.
    Alg1,
    /// Spherical variant: k-means on unit-normalized embedding rows.
    Alg2,
    /// Eigenvalue-threshold estimate of the number of communities.
    Alg3,
    /// Spectral clustering of the degree-truncated sum of adjacency matrices.
    BaselineSum,
    /// Clustering the rows of the summed per-layer eigenvector matrices.
    BaselineSpectralSum,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Alg1,
        Method::Alg2,
        Method::Alg3,
        Method::BaselineSum,
        Method::BaselineSpectralSum,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Alg1 => "alg1",
            Method::Alg2 => "alg2",
            Method::Alg3 => "alg3",
            Method::BaselineSum => "baseline_sum",
            Method::BaselineSpectralSum => "baseline_spectral_sum",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace('-', "_");
        Method::ALL
            .into_iter()
            .find(|m| m.name() == norm)
            .ok_or_else(|| Error::Parameter(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    pub membership: Membership,
    /// Absent for methods that do not prune.
    pub pruning: Option<PruneResult>,
    /// Leading eigenvalues of the clustered matrix, descending.
    pub eigenvalues: Vec<f64>,
    pub kmeans_cost: f64,
    pub method: Method,
    /// The embedding was not uniquely determined (zero matrix or a tie at
    /// the K-th eigenvalue).
    pub low_confidence: bool,
    pub warnings: Vec<String>,
}

struct Embedded {
    pruning: PruneResult,
    /// `None` when the pruned matrix is identically zero.
    embedding: Option<SpectralEmbedding>,
}

fn check_k(net: &MultiRelationalNetwork, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Parameter("K must be at least 1".into()));
    }
    if net.n() == 0 {
        return Err(Error::Parameter("network has no nodes".into()));
    }
    Ok(())
}

/// Sum of squares, pruning and the top-K eigenpairs of the kept submatrix.
fn embed_sum_squares(
    net: &MultiRelationalNetwork,
    k: usize,
    seed: u64,
    cfg: &EigenConfig,
) -> Result<Embedded> {
    let sq = sum_squared_adjacency(net);
    let pruning = prune(&degree_stats(net))?;
    if pruning.kept.len() < k {
        return Err(Error::TooFewKept {
            kept: pruning.kept.len(),
            k,
        });
    }
    let sub = submatrix(&sq, &pruning.kept)?;
    let embedding = if sub.nnz() == 0 {
        None
    } else {
        Some(top_k_eigenpairs_with(&sub, k, rng::mix(seed, TAG_EIGEN), cfg)?)
    };
    Ok(Embedded { pruning, embedding })
}

fn scatter(n: usize, rows: &[usize], labels: &[usize]) -> Vec<usize> {
    let mut full = vec![0; n];
    for (&i, &l) in rows.iter().zip(labels) {
        full[i] = l;
    }
    full
}

fn zero_signal_result(n: usize, k: usize, pruning: Option<PruneResult>, method: Method) -> DetectionResult {
    DetectionResult {
        membership: Membership::new(vec![0; n], k).expect("label 0 < k"),
        pruning,
        eigenvalues: vec![0.0; k],
        kmeans_cost: 0.0,
        method,
        low_confidence: true,
        warnings: vec!["clustered matrix is identically zero".into()],
    }
}

pub fn algorithm1(net: &MultiRelationalNetwork, k: usize, eps: f64, seed: u64) -> Result<DetectionResult> {
    algorithm1_with(net, k, eps, seed, &EigenConfig::default())
}

/// Spectral clustering of the sum of squared adjacency matrices.
pub fn algorithm1_with(
    net: &MultiRelationalNetwork,
    k: usize,
    eps: f64,
    seed: u64,
    cfg: &EigenConfig,
) -> Result<DetectionResult> {
    check_k(net, k)?;
    let Embedded { pruning, embedding } = embed_sum_squares(net, k, seed, cfg)?;
    let Some(emb) = embedding else {
        return Ok(zero_signal_result(net.n(), k, Some(pruning), Method::Alg1));
    };
    let km = kmeans_approx(&emb.vectors, k, eps, rng::mix(seed, TAG_KMEANS))?;
    let labels = scatter(net.n(), &pruning.kept, &km.assignment);
    let mut warnings = Vec::new();
    if emb.ambiguous {
        warnings.push("K-th and (K+1)-th eigenvalues coincide".into());
    }
    Ok(DetectionResult {
        membership: Membership::new(labels, k)?,
        pruning: Some(pruning),
        eigenvalues: emb.values,
        kmeans_cost: km.cost,
        method: Method::Alg1,
        low_confidence: emb.ambiguous,
        warnings,
    })
}

pub fn algorithm2(net: &MultiRelationalNetwork, k: usize, eps: f64, seed: u64) -> Result<DetectionResult> {
    algorithm2_with(net, k, eps, seed, &EigenConfig::default())
}

/// Spherical spectral clustering: as [`algorithm1`], but k-means runs on the
/// unit-normalized nonzero rows of the embedding.
pub fn algorithm2_with(
    net: &MultiRelationalNetwork,
    k: usize,
    eps: f64,
    seed: u64,
    cfg: &EigenConfig,
) -> Result<DetectionResult> {
    check_k(net, k)?;
    let Embedded { pruning, embedding } = embed_sum_squares(net, k, seed, cfg)?;
    let Some(emb) = embedding else {
        return Ok(zero_signal_result(net.n(), k, Some(pruning), Method::Alg2));
    };
    let normalized = normalize_rows(&emb)?;
    let km = kmeans_approx(&normalized.rows, k, eps, rng::mix(seed, TAG_KMEANS))?;
    let mut warnings = Vec::new();
    let zero_rows = emb.n_prime() - normalized.indices.len();
    if zero_rows > 0 {
        warnings.push(format!("{zero_rows} zero embedding rows assigned to the first community"));
    }
    if emb.ambiguous {
        warnings.push("K-th and (K+1)-th eigenvalues coincide".into());
    }
    // Normalized row -> kept position -> node.
    let nodes: Vec<usize> = normalized.indices.iter().map(|&l| pruning.kept[l]).collect();
    let labels = scatter(net.n(), &nodes, &km.assignment);
    Ok(DetectionResult {
        membership: Membership::new(labels, k)?,
        pruning: Some(pruning),
        eigenvalues: emb.values,
        kmeans_cost: km.cost,
        method: Method::Alg2,
        low_confidence: emb.ambiguous,
        warnings,
    })
}

/// Outcome of the number-of-communities estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KEstimate {
    pub k_hat: usize,
    pub threshold: f64,
    pub n_prime: usize,
}

/// Eigenvalue threshold `tau = (T d2) / 4 * (T sqrt(d2))^(-1/8)`, where `d2`
/// is the average number of two-neighbors per node and layer.
pub fn k_threshold(layers: usize, mean_two: f64) -> f64 {
    let t = layers as f64;
    0.25 * (t * mean_two) * (t * mean_two.sqrt()).powf(-0.125)
}

/// Estimated number of communities: the count of eigenvalues of the pruned
/// sum of squares that exceed [`k_threshold`]. Zero for an empty network.
pub fn algorithm3(net: &MultiRelationalNetwork) -> Result<usize> {
    estimate_k(net, 0, &EigenConfig::default()).map(|e| e.k_hat)
}

pub fn estimate_k(net: &MultiRelationalNetwork, seed: u64, cfg: &EigenConfig) -> Result<KEstimate> {
    if net.n() == 0 {
        return Err(Error::Parameter("network has no nodes".into()));
    }
    let stats = degree_stats(net);
    let mean_two = stats.mean_two();
    let pruning = prune(&stats)?;
    if mean_two == 0.0 {
        return Ok(KEstimate {
            k_hat: 0,
            threshold: 0.0,
            n_prime: pruning.kept.len(),
        });
    }
    let threshold = k_threshold(net.num_layers(), mean_two);
    let sub = submatrix(&sum_squared_adjacency(net), &pruning.kept)?;
    let k_hat = count_eigenvalues_above(&sub, threshold, rng::mix(seed, TAG_EIGEN), cfg)?;
    Ok(KEstimate {
        k_hat,
        threshold,
        n_prime: pruning.kept.len(),
    })
}

pub fn baseline_sum_spectral(
    net: &MultiRelationalNetwork,
    k: usize,
    eps: f64,
    seed: u64,
) -> Result<DetectionResult> {
    baseline_sum_spectral_with(net, k, eps, seed, &EigenConfig::default())
}

/// Spectral clustering of `sum_t A_t` after removing nodes whose largest
/// single-layer degree exceeds the `(n + 1 - Γ1)`-th order statistic.
pub fn baseline_sum_spectral_with(
    net: &MultiRelationalNetwork,
    k: usize,
    eps: f64,
    seed: u64,
    cfg: &EigenConfig,
) -> Result<DetectionResult> {
    check_k(net, k)?;
    let n = net.n();
    let stats = degree_stats(net);
    let (gamma1, _) = gammas(n, net.num_layers(), stats.mean_two());
    let threshold1 = order_statistic(&stats.d1, gamma1);
    let kept: Vec<usize> = (0..n).filter(|&i| stats.d1[i] <= threshold1).collect();
    // The two-neighbor rule is not applied: Γ2 = 1 selects the maximum.
    let pruning = PruneResult {
        gamma1,
        gamma2: 1,
        threshold1,
        threshold2: stats.d2.iter().copied().max().unwrap_or(0),
        kept,
    };
    if pruning.kept.len() < k {
        return Err(Error::TooFewKept {
            kept: pruning.kept.len(),
            k,
        });
    }
    let sum = net.sum_adjacency().select(&pruning.kept);
    if sum.nnz() == 0 {
        return Ok(zero_signal_result(n, k, Some(pruning), Method::BaselineSum));
    }
    let emb = top_k_eigenpairs_with(&sum, k, rng::mix(seed, TAG_EIGEN), cfg)?;
    let km = kmeans_approx(&emb.vectors, k, eps, rng::mix(seed, TAG_KMEANS))?;
    let labels = scatter(n, &pruning.kept, &km.assignment);
    Ok(DetectionResult {
        membership: Membership::new(labels, k)?,
        pruning: Some(pruning),
        eigenvalues: emb.values,
        kmeans_cost: km.cost,
        method: Method::BaselineSum,
        low_confidence: emb.ambiguous,
        warnings: Vec::new(),
    })
}

pub fn baseline_spectral_sum(
    net: &MultiRelationalNetwork,
    k: usize,
    eps: f64,
    seed: u64,
) -> Result<DetectionResult> {
    baseline_spectral_sum_with(net, k, eps, seed, &EigenConfig::default())
}

/// Eigenvalues this close to zero count as missing.
const ZERO_EIGENVALUE: f64 = 1e-9;

/// Per-layer top-K eigenvectors, each column sign-fixed so that its first
/// nonzero entry is positive, summed over layers; k-means on the rows of the
/// sum. Columns of zero eigenvalues are zero-filled.
pub fn baseline_spectral_sum_with(
    net: &MultiRelationalNetwork,
    k: usize,
    eps: f64,
    seed: u64,
    cfg: &EigenConfig,
) -> Result<DetectionResult> {
    check_k(net, k)?;
    let n = net.n();
    if k > n {
        return Err(Error::TooFewPoints { m: n, k });
    }
    let per_layer: Vec<(DenseMatrix, usize)> = net
        .layers()
        .par_iter()
        .enumerate()
        .map(|(t, layer)| -> Result<(DenseMatrix, usize)> {
            let a: CsrMatrix = layer.to_csr();
            if a.nnz() == 0 {
                return Ok((DenseMatrix::zeros(n, k), k));
            }
            let emb = top_k_eigenpairs_with(&a, k, rng::mix(rng::mix(seed, TAG_EIGEN), t as u64), cfg)?;
            let mut u = emb.vectors;
            let mut missing = 0;
            for c in 0..k {
                if emb.values[c].abs() <= ZERO_EIGENVALUE {
                    missing += 1;
                    (0..n).for_each(|i| u[(i, c)] = 0.0);
                    continue;
                }
                let first = (0..n).map(|i| u[(i, c)]).find(|v| v.abs() > 1e-12);
                if first.is_some_and(|v| v < 0.0) {
                    (0..n).for_each(|i| u[(i, c)] = -u[(i, c)]);
                }
            }
            Ok((u, missing))
        })
        .collect::<Result<_>>()?;

    let mut sum = DenseMatrix::zeros(n, k);
    let mut warnings = Vec::new();
    for (t, (u, missing)) in per_layer.iter().enumerate() {
        if *missing > 0 {
            warnings.push(format!("layer {}: {missing} zero-filled eigenvector columns", t + 1));
        }
        for i in 0..n {
            for (s, &v) in sum.row_mut(i).iter_mut().zip(u.row(i)) {
                *s += v;
            }
        }
    }
    if sum.as_slice().iter().all(|&v| v == 0.0) {
        let mut r = zero_signal_result(n, k, None, Method::BaselineSpectralSum);
        r.warnings.extend(warnings);
        return Ok(r);
    }
    let km = kmeans_approx(&sum, k, eps, rng::mix(seed, TAG_KMEANS))?;
    Ok(DetectionResult {
        membership: Membership::new(km.assignment, k)?,
        pruning: None,
        eigenvalues: Vec::new(),
        kmeans_cost: km.cost,
        method: Method::BaselineSpectralSum,
        low_confidence: false,
        warnings,
    })
}

/// Dispatch by method. `Alg3` is not a labeling method and is rejected.
pub fn detect(
    method: Method,
    net: &MultiRelationalNetwork,
    k: usize,
    eps: f64,
    seed: u64,
    cfg: &EigenConfig,
) -> Result<DetectionResult> {
    match method {
        Method::Alg1 => algorithm1_with(net, k, eps, seed, cfg),
        Method::Alg2 => algorithm2_with(net, k, eps, seed, cfg),
        Method::BaselineSum => baseline_sum_spectral_with(net, k, eps, seed, cfg),
        Method::BaselineSpectralSum => baseline_spectral_sum_with(net, k, eps, seed, cfg),
        Method::Alg3 => Err(Error::Parameter("alg3 estimates K and produces no labels".into())),
    }
}

/// User-chosen constants of the misclassification bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub delta: f64,
    pub c: f64,
    pub c_prime: f64,
}

impl Default for BoundConstants {
    fn default() -> Self {
        Self {
            delta: 8.5,
            c: 1.0,
            c_prime: 1.0,
        }
    }
}

/// Degree-heterogeneity quantities of a degree-corrected model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeDiagnostics {
    /// `sum_{i in C_a} psi_i^2` per community.
    pub weighted_sizes: Vec<f64>,
    /// `sum psi_i^2 * sum psi_i^-2` per community.
    pub heterogeneity: Vec<f64>,
    pub psi_min: f64,
    pub weighted_size_min: f64,
    pub weighted_size_max: f64,
    /// Bound on the number of misclassified nodes of the spherical method.
    pub misclassified_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryDiagnostics {
    /// Maximum expected degree `n max B`.
    pub d: f64,
    /// Average over layers of the smallest eigenvalue of `((n / d) B_t)^2`.
    pub lambda: f64,
    pub n_min: usize,
    pub n_max: usize,
    /// `(T d)^{1/4} lambda`, the signal-strength quantity.
    pub signal: f64,
    /// Bound on `sum_a f_a`.
    pub bound: f64,
    /// Probability with which the bound holds.
    pub probability_floor: f64,
    /// `lambda (n_min / n)^2 > max(7 / n, C Delta sqrt(K) / (T d)^{1/4})`.
    pub condition_ok: bool,
    pub degree: Option<DegreeDiagnostics>,
}

/// Evaluates the recovery condition and misclassification bounds for a
/// model with the given schedule, labels and optional degree parameters.
pub fn theory_diagnostics(
    schedule: &BlockSchedule,
    labels: &Membership,
    psi: Option<&[f64]>,
    consts: &BoundConstants,
) -> Result<TheoryDiagnostics> {
    if !(consts.delta > 8.0) {
        return Err(Error::Parameter(format!("Delta must exceed 8, got {}", consts.delta)));
    }
    let n = labels.n();
    if n == 0 {
        return Err(Error::Parameter("no nodes".into()));
    }
    let k = schedule.k();
    let t = schedule.layers();
    if t == 0 {
        return Err(Error::Parameter("schedule has no layers".into()));
    }
    let nf = n as f64;
    let kf = k as f64;
    let d = nf * schedule.max_entry();
    if d <= 0.0 {
        return Err(Error::ZeroDegree);
    }
    let lambda = (0..t)
        .map(|s| {
            let m = DMatrix::from_fn(k, k, |a, b| nf / d * schedule.get(s, a, b));
            SymmetricEigen::new(m)
                .eigenvalues
                .iter()
                .map(|v| v * v)
                .fold(f64::INFINITY, f64::min)
        })
        .sum::<f64>()
        / t as f64;
    let mut counts = vec![0usize; k];
    for &l in labels.labels() {
        if l >= k {
            return Err(Error::Parameter(format!("label {l} outside 0..{k}")));
        }
        counts[l] += 1;
    }
    let n_min = counts.iter().copied().min().unwrap_or(0);
    let n_max = counts.iter().copied().max().unwrap_or(0);
    let td4 = (t as f64 * d).powf(0.25);
    let BoundConstants { delta, c, c_prime } = *consts;
    let ratio = lambda * (n_min as f64 / nf).powi(2);
    let rhs = (7.0 / nf).max(c * delta * kf.sqrt() / td4);
    let bound = if ratio > 0.0 {
        (c * delta * kf.sqrt() / (td4 * ratio)).powi(2)
    } else {
        f64::INFINITY
    };
    let probability_floor = 1.0
        - (c_prime + 2.0 * nf * kf) / (nf * (t as f64 * d).powf(0.75))
        - 2.0 * nf.powf(5.0 - delta * delta / 12.0);

    let degree = match psi {
        None => None,
        Some(p) => {
            if p.len() != n {
                return Err(Error::LengthMismatch { left: p.len(), right: n });
            }
            let mut sq = vec![0.0; k];
            let mut inv = vec![0.0; k];
            for (&l, &v) in labels.labels().iter().zip(p) {
                sq[l] += v * v;
                inv[l] += 1.0 / (v * v);
            }
            let heterogeneity: Vec<f64> = sq.iter().zip(&inv).map(|(a, b)| a * b).collect();
            let psi_min = p.iter().copied().fold(f64::INFINITY, f64::min);
            let wmin = sq.iter().copied().fold(f64::INFINITY, f64::min);
            let wmax = sq.iter().copied().fold(0.0, f64::max);
            let tau_sum: f64 = heterogeneity.iter().sum();
            let misclassified_bound = c * (kf * wmax).powi(3) / ((psi_min * lambda).powi(2) * wmin.powi(4))
                + (nf + c * delta * (kf * tau_sum).sqrt()) / (td4 * lambda * (wmin / nf).powi(2));
            Some(DegreeDiagnostics {
                weighted_sizes: sq,
                heterogeneity,
                psi_min,
                weighted_size_min: wmin,
                weighted_size_max: wmax,
                misclassified_bound,
            })
        }
    };

    Ok(TheoryDiagnostics {
        d,
        lambda,
        n_min,
        n_max,
        signal: td4 * lambda,
        bound,
        probability_floor,
        condition_ok: ratio > rhs,
        degree,
    })
}
