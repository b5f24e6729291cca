//! Multilayer graph storage, sum of squared adjacency matrices, degree
//! statistics and high-degree pruning.
//!
//! Edge-list format: UTF-8 text, one `t i j` record per line with a 1-based
//! layer index and 0-based node indices. Blank lines and lines starting with
//! `#` are ignored. Records are undirected; repeated records collapse.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::CsrMatrix;

/// One undirected, unweighted layer as a binary CSR adjacency structure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layer {
    indptr: Vec<usize>,
    indices: Vec<u32>,
}

impl Layer {
    /// `edges` may contain duplicates and either orientation; callers have
    /// already rejected self-loops and out-of-range endpoints.
    fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut adj: Vec<Vec<u32>> = vec![Vec::new(); n];
        for &(i, j) in edges {
            adj[i].push(j as u32);
            adj[j].push(i as u32);
        }
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        indptr.push(0);
        for mut nb in adj {
            nb.sort_unstable();
            nb.dedup();
            indices.extend_from_slice(&nb);
            indptr.push(indices.len());
        }
        Self { indptr, indices }
    }

    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.indices[self.indptr[i]..self.indptr[i + 1]]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.indptr[i + 1] - self.indptr[i]
    }

    pub fn edge_count(&self) -> usize {
        self.indices.len() / 2
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors(i).binary_search(&(j as u32)).is_ok()
    }

    /// Adjacency as an integer CSR matrix (all stored values 1).
    pub fn to_csr(&self) -> CsrMatrix {
        let n = self.indptr.len() - 1;
        let rows = (0..n)
            .map(|i| self.neighbors(i).iter().map(|&j| (j, 1)).collect())
            .collect();
        CsrMatrix::from_sorted_rows(n, rows)
    }

    /// Edges with `i < j`, in row order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.indptr.len() - 1;
        (0..n).flat_map(move |i| {
            self.neighbors(i)
                .iter()
                .filter(move |&&j| (j as usize) > i)
                .map(move |&j| (i, j as usize))
        })
    }
}

/// `T` symmetric binary layers on a shared node set `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiRelationalNetwork {
    n: usize,
    layers: Vec<Layer>,
}

impl MultiRelationalNetwork {
    /// Builds a network from one edge list per layer. Self-loops and
    /// out-of-range endpoints are rejected; duplicates collapse.
    pub fn from_edges(n: usize, layers: &[Vec<(usize, usize)>]) -> Result<Self> {
        for edges in layers {
            for &(i, j) in edges {
                if i == j {
                    return Err(Error::SelfLoop { line: 0, node: i });
                }
                for v in [i, j] {
                    if v >= n {
                        return Err(Error::OutOfBounds {
                            line: 0,
                            what: "node",
                            value: v,
                            limit: n,
                        });
                    }
                }
            }
        }
        Ok(Self::from_checked_edges(n, layers))
    }

    pub(crate) fn from_checked_edges(n: usize, layers: &[Vec<(usize, usize)>]) -> Self {
        let layers = layers
            .par_iter()
            .map(|edges| Layer::from_edges(n, edges))
            .collect();
        Self { n, layers }
    }

    pub fn empty(n: usize, t: usize) -> Self {
        Self::from_checked_edges(n, &vec![Vec::new(); t])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layer(&self, t: usize) -> &Layer {
        &self.layers[t]
    }

    pub fn edge_count(&self) -> usize {
        self.layers.iter().map(Layer::edge_count).sum()
    }

    /// Relabels node `i` as `perm[i]` in every layer.
    pub fn permute(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.n);
        let layers: Vec<Vec<(usize, usize)>> = self
            .layers
            .iter()
            .map(|l| l.edges().map(|(i, j)| (perm[i], perm[j])).collect())
            .collect();
        Self::from_checked_edges(self.n, &layers)
    }

    /// Keeps only the listed layers, in the given order.
    pub fn select_layers(&self, which: &[usize]) -> Self {
        Self {
            n: self.n,
            layers: which.iter().map(|&t| self.layers[t].clone()).collect(),
        }
    }

    /// `sum_t A_t` as an integer matrix (diagonal is zero).
    pub fn sum_adjacency(&self) -> CsrMatrix {
        self.layers
            .iter()
            .map(Layer::to_csr)
            .fold(CsrMatrix::zeros(self.n), |acc, a| acc.add(&a))
    }

    /// Writes the network in edge-list format, one record per undirected edge.
    pub fn write_edge_list<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# nodes={} layers={}", self.n, self.layers.len())?;
        for (t, layer) in self.layers.iter().enumerate() {
            for (i, j) in layer.edges() {
                writeln!(w, "{} {} {}", t + 1, i, j)?;
            }
        }
        Ok(())
    }
}

/// Parses an edge list for a network with `n` nodes and `t` layers.
pub fn parse_edge_list<R: Read>(reader: R, n: usize, t: usize) -> Result<MultiRelationalNetwork> {
    let mut layers: Vec<Vec<(usize, usize)>> = vec![Vec::new(); t];
    for (lineno, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let rec = line.trim();
        if rec.is_empty() || rec.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = rec.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected 3 fields `t i j`, found {}", fields.len()),
            });
        }
        let mut vals = [0usize; 3];
        for (v, f) in vals.iter_mut().zip(&fields) {
            *v = f.parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("`{f}` is not a non-negative integer"),
            })?;
        }
        let [layer, i, j] = vals;
        if layer == 0 || layer > t {
            return Err(Error::OutOfBounds {
                line: lineno,
                what: "layer",
                value: layer,
                limit: t,
            });
        }
        for v in [i, j] {
            if v >= n {
                return Err(Error::OutOfBounds {
                    line: lineno,
                    what: "node",
                    value: v,
                    limit: n,
                });
            }
        }
        if i == j {
            return Err(Error::SelfLoop {
                line: lineno,
                node: i,
            });
        }
        layers[layer - 1].push((i, j));
    }
    Ok(MultiRelationalNetwork::from_checked_edges(n, &layers))
}

pub fn load_multilayer(path: impl AsRef<Path>, n: usize, t: usize) -> Result<MultiRelationalNetwork> {
    parse_edge_list(File::open(path)?, n, t)
}

/// Node and layer counts of an edge-list file: those of a
/// `# nodes=N layers=T` header if present, raised to the largest node index
/// + 1 and largest layer index found in the records.
pub fn scan_edge_list_dims(path: impl AsRef<Path>) -> Result<(usize, usize)> {
    let (mut n, mut t) = (0, 0);
    for (lineno, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        let rec = line.trim();
        if let Some(comment) = rec.strip_prefix('#') {
            for field in comment.split_whitespace() {
                match field.split_once('=') {
                    Some(("nodes", v)) => n = n.max(v.parse().unwrap_or(0)),
                    Some(("layers", v)) => t = t.max(v.parse().unwrap_or(0)),
                    _ => {}
                }
            }
            continue;
        }
        if rec.is_empty() {
            continue;
        }
        let vals: Vec<usize> = rec
            .split_whitespace()
            .map(|f| f.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                line: lineno + 1,
                msg: e.to_string(),
            })?;
        if vals.len() != 3 {
            return Err(Error::Parse {
                line: lineno + 1,
                msg: "expected 3 fields `t i j`".into(),
            });
        }
        t = t.max(vals[0]);
        n = n.max(vals[1] + 1).max(vals[2] + 1);
    }
    Ok((n, t))
}

/// Diagonal-zeroed `sum_t (A_t)^2`. Entry `(i, j)` counts the length-two
/// paths `i - k - j` summed over layers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SumSquares {
    pub matrix: CsrMatrix,
    pub layers: usize,
}

impl SumSquares {
    pub fn n(&self) -> usize {
        self.matrix.dim()
    }
}

/// Computes the diagonal-zeroed sum of squared adjacency matrices by sparse
/// row gathering: for row `i`, every two-step walk `i -> k -> j` with `j != i`
/// increments an accumulator slot. Counts are integers, so the result is
/// identical for any thread schedule.
pub fn sum_squared_adjacency(net: &MultiRelationalNetwork) -> SumSquares {
    let n = net.n();
    let rows: Vec<Vec<(u32, u32)>> = (0..n)
        .into_par_iter()
        .map_init(
            || (vec![0u32; n], Vec::<u32>::new()),
            |(acc, touched), i| {
                for layer in net.layers() {
                    for &k in layer.neighbors(i) {
                        for &j in layer.neighbors(k as usize) {
                            if j as usize == i {
                                continue;
                            }
                            let slot = &mut acc[j as usize];
                            if *slot == 0 {
                                touched.push(j);
                            }
                            *slot += 1;
                        }
                    }
                }
                touched.sort_unstable();
                let row = touched
                    .iter()
                    .map(|&j| {
                        let v = std::mem::take(&mut acc[j as usize]);
                        (j, v)
                    })
                    .collect();
                touched.clear();
                row
            },
        )
        .collect();
    SumSquares {
        matrix: CsrMatrix::from_sorted_rows(n, rows),
        layers: net.num_layers(),
    }
}

/// Per-node degree statistics feeding the pruning rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeStats {
    pub n: usize,
    pub layers: usize,
    /// Max-one-neighbors: largest single-layer degree.
    pub d1: Vec<u64>,
    /// Total-two-neighbors: row sums of the diagonal-zeroed sum of squares.
    pub d2: Vec<u64>,
    pub total_two: u64,
}

impl DegreeStats {
    /// Average number of two-neighbors per node and layer, `sum_i d2_i / (n T)`.
    pub fn mean_two(&self) -> f64 {
        if self.n == 0 || self.layers == 0 {
            return 0.0;
        }
        self.total_two as f64 / (self.n as f64 * self.layers as f64)
    }
}

/// Degree statistics. The two-neighbor count uses the identity
/// `sum_{j != i} (A^2)_{ij} = sum_{k ~ i} (deg(k) - 1)`, so the squared
/// matrix need not be materialized.
pub fn degree_stats(net: &MultiRelationalNetwork) -> DegreeStats {
    let n = net.n();
    let (d1, d2): (Vec<u64>, Vec<u64>) = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut max_deg = 0u64;
            let mut two = 0u64;
            for layer in net.layers() {
                let nb = layer.neighbors(i);
                max_deg = max_deg.max(nb.len() as u64);
                two += nb
                    .iter()
                    .map(|&k| layer.degree(k as usize) as u64 - 1)
                    .sum::<u64>();
            }
            (max_deg, two)
        })
        .unzip();
    let total_two = d2.iter().sum();
    DegreeStats {
        n,
        layers: net.num_layers(),
        d1,
        d2,
        total_two,
    }
}

/// Nodes surviving the high-degree truncation, with the quantities that
/// produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneResult {
    pub kept: Vec<usize>,
    pub gamma1: usize,
    pub gamma2: usize,
    pub threshold1: u64,
    pub threshold2: u64,
}

/// Truncation counts `(Γ1, Γ2)` for `n` nodes, `t` layers and average
/// two-neighbor count `mean_two`, each clamped to `[1, n]`.
pub fn gammas(n: usize, t: usize, mean_two: f64) -> (usize, usize) {
    let nf = n as f64;
    let tf = t as f64;
    let g1 = (nf * (-0.5 * tf.sqrt() * mean_two.powf(0.75)).exp()).ceil();
    let g2 = (nf * (-(1.0 / 3.0) * tf * mean_two.sqrt()).exp()).ceil();
    let clamp = |g: f64| (g as usize).clamp(1, n.max(1));
    (clamp(g1), clamp(g2))
}

/// `(n + 1 - gamma)`-th smallest value (1-based order statistic).
pub(crate) fn order_statistic(values: &[u64], gamma: usize) -> u64 {
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    sorted[values.len() - gamma]
}

/// Keeps nodes whose max-one-neighbor and total-two-neighbor counts are both
/// at most the `(n + 1 - Γ)`-th order statistics. Ties at a threshold are kept.
pub fn prune(stats: &DegreeStats) -> Result<PruneResult> {
    let n = stats.n;
    if n == 0 {
        return Err(Error::DegeneratePruning);
    }
    let (gamma1, gamma2) = gammas(n, stats.layers, stats.mean_two());
    let threshold1 = order_statistic(&stats.d1, gamma1);
    let threshold2 = order_statistic(&stats.d2, gamma2);
    let kept: Vec<usize> = (0..n)
        .filter(|&i| stats.d1[i] <= threshold1 && stats.d2[i] <= threshold2)
        .collect();
    if kept.is_empty() {
        return Err(Error::DegeneratePruning);
    }
    Ok(PruneResult {
        kept,
        gamma1,
        gamma2,
        threshold1,
        threshold2,
    })
}

/// Principal submatrix of the sum of squares on the kept nodes.
pub fn submatrix(sq: &SumSquares, kept: &[usize]) -> Result<CsrMatrix> {
    if kept.is_empty() {
        return Err(Error::Parameter("kept index list is empty".into()));
    }
    if !kept.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::Parameter("kept indices must be strictly increasing".into()));
    }
    if let Some(&last) = kept.last() {
        if last >= sq.n() {
            return Err(Error::Dimension(format!(
                "kept index {last} out of range for n = {}",
                sq.n()
            )));
        }
    }
    Ok(sq.matrix.select(kept))
}
