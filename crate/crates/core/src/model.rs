//! Multilayer stochastic block models (plain and degree-corrected), their
//! parameters, and the benchmark connectivity schedules.
//!
//! Labels are 0-based in memory (`0..K`); label files on disk are 1-based.

use std::io::{BufRead, BufReader, Read, Write};

use rand::seq::index;
use rand::Rng;
use rand_distr::{Binomial, Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::MultiRelationalNetwork;
use crate::matrix::DenseMatrix;
use crate::rng;

/// Sequence of symmetric `K x K` connectivity probability matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSchedule", into = "RawSchedule")]
pub struct BlockSchedule {
    k: usize,
    mats: Vec<Vec<Vec<f64>>>,
}

#[derive(Serialize, Deserialize)]
struct RawSchedule {
    k: usize,
    mats: Vec<Vec<Vec<f64>>>,
}

impl TryFrom<RawSchedule> for BlockSchedule {
    type Error = Error;
    fn try_from(r: RawSchedule) -> Result<Self> {
        BlockSchedule::new(r.k, r.mats)
    }
}

impl From<BlockSchedule> for RawSchedule {
    fn from(b: BlockSchedule) -> Self {
        RawSchedule { k: b.k, mats: b.mats }
    }
}

impl BlockSchedule {
    pub fn new(k: usize, mats: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if k == 0 {
            return Err(Error::Parameter("K must be positive".into()));
        }
        for (t, m) in mats.iter().enumerate() {
            if m.len() != k || m.iter().any(|r| r.len() != k) {
                return Err(Error::Parameter(format!("B[{}] is not {k} x {k}", t + 1)));
            }
            for a in 0..k {
                for b in 0..k {
                    let v = m[a][b];
                    if !(0.0..=1.0).contains(&v) {
                        return Err(Error::Parameter(format!(
                            "B[{}][{a}][{b}] = {v} is not a probability",
                            t + 1
                        )));
                    }
                    if v != m[b][a] {
                        return Err(Error::Parameter(format!("B[{}] is not symmetric", t + 1)));
                    }
                }
            }
        }
        Ok(Self { k, mats })
    }

    /// The same matrix repeated for `t` layers.
    pub fn constant(b: Vec<Vec<f64>>, t: usize) -> Result<Self> {
        let k = b.len();
        Self::new(k, vec![b; t])
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn layers(&self) -> usize {
        self.mats.len()
    }

    pub fn get(&self, t: usize, a: usize, b: usize) -> f64 {
        self.mats[t][a][b]
    }

    pub fn matrix(&self, t: usize) -> &[Vec<f64>] {
        &self.mats[t]
    }

    pub fn max_entry(&self) -> f64 {
        self.mats
            .iter()
            .flatten()
            .flatten()
            .copied()
            .fold(0.0, f64::max)
    }
}

/// How degree parameters are obtained for a degree-corrected model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegreeParams {
    /// Explicit per-node values.
    Fixed(Vec<f64>),
    /// i.i.d. `U(low, high)` draws, optionally rescaled so that the maximum
    /// within every community is 1.
    Uniform {
        low: f64,
        high: f64,
        #[serde(default)]
        normalize: bool,
    },
}

/// Model parameters. `psi: None` is the plain multilayer SBM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n: usize,
    pub pi: Vec<f64>,
    pub schedule: BlockSchedule,
    #[serde(default)]
    pub psi: Option<DegreeParams>,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        validate_pi(&self.pi)?;
        if self.pi.len() != self.schedule.k() {
            return Err(Error::Parameter(format!(
                "pi has {} entries but the schedule has K = {}",
                self.pi.len(),
                self.schedule.k()
            )));
        }
        match &self.psi {
            Some(DegreeParams::Fixed(v)) => {
                if v.len() != self.n {
                    return Err(Error::LengthMismatch {
                        left: v.len(),
                        right: self.n,
                    });
                }
                if v.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
                    return Err(Error::Parameter("degree parameters must be positive".into()));
                }
            }
            Some(DegreeParams::Uniform { low, high, .. }) => {
                if !(*low > 0.0 && low <= high && high.is_finite()) {
                    return Err(Error::Parameter(format!("invalid U({low}, {high})")));
                }
            }
            None => {}
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(s)?;
        p.validate()?;
        Ok(p)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Concrete degree parameters for `labels`; `None` for a plain SBM.
    pub fn resolve_psi(&self, labels: &Membership, seed: u64) -> Result<Option<Vec<f64>>> {
        match &self.psi {
            None => Ok(None),
            Some(DegreeParams::Fixed(v)) => Ok(Some(v.clone())),
            Some(DegreeParams::Uniform {
                low,
                high,
                normalize,
            }) => {
                let mut r = rng::rng(seed);
                let alpha: Vec<f64> = (0..labels.n())
                    .map(|_| {
                        if low == high {
                            *low
                        } else {
                            r.random_range(*low..*high)
                        }
                    })
                    .collect();
                if *normalize {
                    normalize_psi(labels, &alpha).map(Some)
                } else {
                    Ok(Some(alpha))
                }
            }
        }
    }
}

fn validate_pi(pi: &[f64]) -> Result<()> {
    if pi.is_empty() {
        return Err(Error::Parameter("pi is empty (K = 0)".into()));
    }
    if pi.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
        return Err(Error::Parameter("pi entries must be positive".into()));
    }
    let s: f64 = pi.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::Parameter(format!("pi sums to {s}, not 1")));
    }
    Ok(())
}

/// Community assignment of `n` nodes to `0..k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Membership {
    labels: Vec<usize>,
    k: usize,
}

impl Membership {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::Parameter(format!("label {bad} outside 0..{k}")));
        }
        Ok(Self { labels, k })
    }

    /// Infers `k` as the largest label + 1.
    pub fn from_labels(labels: Vec<usize>) -> Self {
        let k = labels.iter().max().map_or(1, |m| m + 1);
        Self { labels, k }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.k];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }

    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut m = vec![Vec::new(); self.k];
        for (i, &l) in self.labels.iter().enumerate() {
            m[l].push(i);
        }
        m
    }

    /// One-hot `n x k` form.
    pub fn one_hot(&self) -> DenseMatrix {
        let mut z = DenseMatrix::zeros(self.n(), self.k);
        for (i, &l) in self.labels.iter().enumerate() {
            z[(i, l)] = 1.0;
        }
        z
    }

    /// Writes one 1-based label per line.
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        for &l in &self.labels {
            writeln!(w, "{}", l + 1)?;
        }
        Ok(())
    }

    /// Reads one 1-based label per line; `#` comments and blank lines skipped.
    pub fn read<R: Read>(r: R) -> Result<Self> {
        let mut labels = Vec::new();
        for (lineno, line) in BufReader::new(r).lines().enumerate() {
            let line = line?;
            let rec = line.trim();
            if rec.is_empty() || rec.starts_with('#') {
                continue;
            }
            let l: usize = rec.parse().map_err(|_| Error::Parse {
                line: lineno + 1,
                msg: format!("`{rec}` is not a label"),
            })?;
            if l == 0 {
                return Err(Error::Parse {
                    line: lineno + 1,
                    msg: "labels are 1-based".into(),
                });
            }
            labels.push(l - 1);
        }
        Ok(Self::from_labels(labels))
    }
}

/// i.i.d. multinomial(1; pi) community labels.
pub fn sample_memberships(n: usize, pi: &[f64], seed: u64) -> Result<Membership> {
    validate_pi(pi)?;
    let k = pi.len();
    let mut cdf = Vec::with_capacity(k);
    let mut acc = 0.0;
    for &p in pi {
        acc += p;
        cdf.push(acc);
    }
    let mut r = rng::rng(seed);
    let labels = (0..n)
        .map(|_| {
            let u: f64 = r.random::<f64>() * acc;
            cdf.iter().position(|&c| u < c).unwrap_or(k - 1)
        })
        .collect();
    Ok(Membership { labels, k })
}

/// Divides each weight by the largest weight in its community, so that
/// every community's maximum degree parameter is exactly 1.
pub fn normalize_psi(labels: &Membership, alpha: &[f64]) -> Result<Vec<f64>> {
    if alpha.len() != labels.n() {
        return Err(Error::LengthMismatch {
            left: alpha.len(),
            right: labels.n(),
        });
    }
    if alpha.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
        return Err(Error::Parameter("weights must be positive".into()));
    }
    let mut max = vec![0.0f64; labels.k()];
    for (&l, &a) in labels.labels().iter().zip(alpha) {
        max[l] = max[l].max(a);
    }
    if let Some(c) = max.iter().position(|&m| m == 0.0) {
        return Err(Error::EmptyCommunity(c));
    }
    Ok(labels
        .labels()
        .iter()
        .zip(alpha)
        .map(|(&l, &a)| a / max[l])
        .collect())
}

/// Samples a network: for `i < j` and each layer `t`, the edge is present
/// independently with probability `psi_i psi_j B_t[z_i][z_j]` (`psi = 1` for
/// a plain SBM). Degree parameters are resolved from `params.psi` with a
/// seed derived from `seed`.
pub fn sample_network(
    params: &ModelParams,
    labels: &Membership,
    seed: u64,
) -> Result<MultiRelationalNetwork> {
    params.validate()?;
    if labels.n() != params.n {
        return Err(Error::LengthMismatch {
            left: labels.n(),
            right: params.n,
        });
    }
    let psi = params.resolve_psi(labels, rng::mix(seed, 0x70_7369))?;
    sample_network_with_psi(&params.schedule, labels, psi.as_deref(), seed)
}

/// Edge sampler on a concrete schedule and degree vector.
///
/// Within each block pair the candidate pairs are drawn at the block rate
/// `B_ab` (a binomial count placed uniformly without replacement), then
/// thinned with probability `psi_i psi_j`. This is exact and costs
/// `O(expected edges)`. Layer `t` uses ChaCha stream `t` under `seed`.
pub fn sample_network_with_psi(
    schedule: &BlockSchedule,
    labels: &Membership,
    psi: Option<&[f64]>,
    seed: u64,
) -> Result<MultiRelationalNetwork> {
    let n = labels.n();
    let k = schedule.k();
    if labels.k() > k {
        return Err(Error::Parameter(format!(
            "labels use {} communities but the schedule has K = {k}",
            labels.k()
        )));
    }
    let members = {
        let mut m = vec![Vec::new(); k];
        for (i, &l) in labels.labels().iter().enumerate() {
            m[l].push(i);
        }
        m
    };
    if let Some(p) = psi {
        if p.len() != n {
            return Err(Error::LengthMismatch {
                left: p.len(),
                right: n,
            });
        }
    }
    let psi_max: Vec<f64> = members
        .iter()
        .map(|mem| match psi {
            Some(p) => mem.iter().map(|&i| p[i]).fold(0.0, f64::max),
            None => 1.0,
        })
        .collect();
    for t in 0..schedule.layers() {
        for a in 0..k {
            for b in a..k {
                let v = schedule.get(t, a, b) * psi_max[a] * psi_max[b];
                if v > 1.0 {
                    return Err(Error::Probability {
                        layer: t + 1,
                        a: a + 1,
                        b: b + 1,
                        value: v,
                    });
                }
            }
        }
    }

    let layers: Vec<Vec<(usize, usize)>> = (0..schedule.layers())
        .into_par_iter()
        .map(|t| {
            let mut r = rng::stream_rng(seed, t as u64);
            let mut edges = Vec::new();
            for a in 0..k {
                for b in a..k {
                    let p = schedule.get(t, a, b);
                    let (ma, mb) = (members[a].len(), members[b].len());
                    let pairs = if a == b { ma * ma.saturating_sub(1) / 2 } else { ma * mb };
                    if p <= 0.0 || pairs == 0 {
                        continue;
                    }
                    let count = Binomial::new(pairs as u64, p)
                        .expect("probability validated")
                        .sample(&mut r) as usize;
                    for idx in index::sample(&mut r, pairs, count) {
                        let (i, j) = if a == b {
                            let (x, y) = triangular_pair(idx);
                            (members[a][x], members[a][y])
                        } else {
                            (members[a][idx / mb], members[b][idx % mb])
                        };
                        if let Some(p) = psi {
                            let keep = p[i] * p[j];
                            if keep < 1.0 && r.random::<f64>() >= keep {
                                continue;
                            }
                        }
                        edges.push((i, j));
                    }
                }
            }
            edges
        })
        .collect();
    Ok(MultiRelationalNetwork::from_checked_edges(n, &layers))
}

/// Maps `idx` in `0..m(m-1)/2` to the pair `(i, j)`, `i < j`, enumerated
/// as `idx = j(j-1)/2 + i`.
fn triangular_pair(idx: usize) -> (usize, usize) {
    let mut j = ((1.0 + (1.0 + 8.0 * idx as f64).sqrt()) / 2.0) as usize;
    while j * (j - 1) / 2 > idx {
        j -= 1;
    }
    while (j + 1) * j / 2 <= idx {
        j += 1;
    }
    (idx - j * (j - 1) / 2, j)
}

/// Plain SBM or degree-corrected variant of a benchmark scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Sbm,
    Dcbm,
}

/// Benchmark connectivity schedules (all with `K = 4`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Pairs of communities moving from disassortative to assortative:
    /// `B_t = c (I_2 (x) J_2 + b_t I_4)`, `b_t = -1 + 0.2 (t - 1)`, with
    /// `c = 3 (log n)^{3/4} / n` (node sweep form).
    Scenario1NodeSweep,
    /// As above with `c = 5/n` (SBM) or `10/n` (DCBM) (layer sweep form).
    Scenario1LayerSweep,
    /// One disassortative layer, the rest uninformative.
    Scenario2,
    /// Dependent layers driven by a logistic recursion.
    Scenario3,
}

/// A generated schedule and the number of entries clamped into `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSchedule {
    pub schedule: BlockSchedule,
    pub clamped: usize,
}

/// Benchmark schedule for `n` nodes and `t` layers. Scenarios 1 and 2 ignore
/// `seed`; scenario 3 draws its per-layer noise from it.
pub fn scenario_schedule(
    scenario: Scenario,
    variant: Variant,
    n: usize,
    t: usize,
    seed: u64,
) -> Result<ScenarioSchedule> {
    if n < 2 {
        return Err(Error::Parameter("scenarios need n >= 2".into()));
    }
    if t == 0 {
        return Err(Error::Parameter("scenarios need at least one layer".into()));
    }
    let nf = n as f64;
    let ln = nf.ln();
    let eye = |i: usize, j: usize| if i == j { 1.0 } else { 0.0 };
    // I_2 (x) J_2: communities {1,2} and {3,4} paired.
    let paired = |i: usize, j: usize| if i / 2 == j / 2 { 1.0 } else { 0.0 };

    let raw: Vec<[[f64; 4]; 4]> = match scenario {
        Scenario::Scenario1NodeSweep | Scenario::Scenario1LayerSweep => {
            let c = match (scenario, variant) {
                (Scenario::Scenario1NodeSweep, _) => 3.0 * ln.powf(0.75) / nf,
                (_, Variant::Sbm) => 5.0 / nf,
                (_, Variant::Dcbm) => 10.0 / nf,
            };
            (0..t)
                .map(|s| {
                    let b = -1.0 + 0.2 * s as f64;
                    block4(|i, j| c * (paired(i, j) + b * eye(i, j)))
                })
                .collect()
        }
        Scenario::Scenario2 => {
            let c = match variant {
                Variant::Sbm => ln.powf(4.0 / 3.0) / nf,
                Variant::Dcbm => ln.powf(1.5) / nf,
            };
            (0..t)
                .map(|s| match s {
                    0 => block4(|i, j| c * (1.0 - eye(i, j))),
                    1 => block4(|_, _| c),
                    _ => block4(|_, _| c / t as f64),
                })
                .collect()
        }
        Scenario::Scenario3 => {
            if t < 5 {
                return Err(Error::Parameter("scenario 3 needs at least 5 layers".into()));
            }
            let depth = match variant {
                Variant::Sbm => 7.0,
                Variant::Dcbm => 12.0,
            };
            let noise = Normal::new(0.0, SCENARIO3_NOISE_VARIANCE.sqrt()).expect("valid sd");
            let mut r = rng::rng(seed);
            let mut mats: Vec<[[f64; 4]; 4]> = Vec::with_capacity(t);
            for s in 0..t {
                if s < 5 {
                    let b = -depth + depth * s as f64 / t as f64;
                    mats.push(block4(|i, j| (2.0 * eye(i, j) + b) / nf));
                } else {
                    let eps: f64 = noise.sample(&mut r);
                    let prev = mats[s - 5];
                    mats.push(block4(|i, j| 20.0 / (nf * (1.0 + (nf * prev[i][j] + eps).exp()))));
                }
            }
            mats
        }
    };

    let mut clamped = 0;
    let mats = raw
        .into_iter()
        .map(|m| {
            m.iter()
                .map(|row| {
                    row.iter()
                        .map(|&v| {
                            if (0.0..=1.0).contains(&v) {
                                v
                            } else {
                                clamped += 1;
                                v.clamp(0.0, 1.0)
                            }
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    if clamped > 0 {
        log::debug!("scenario {scenario:?}: clamped {clamped} entries into [0, 1]");
    }
    Ok(ScenarioSchedule {
        schedule: BlockSchedule::new(4, mats)?,
        clamped,
    })
}

/// Variance of the scenario-3 recursion noise.
pub const SCENARIO3_NOISE_VARIANCE: f64 = 0.05;

fn block4(f: impl Fn(usize, usize) -> f64) -> [[f64; 4]; 4] {
    let mut m = [[0.0; 4]; 4];
    for (i, row) in m.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = f(i, j);
        }
    }
    m
}

/// Balanced allocation `pi = (1/k, ..., 1/k)`.
pub fn uniform_pi(k: usize) -> Vec<f64> {
    vec![1.0 / k as f64; k]
}

/// Population counterpart of the diagonal-zeroed sum of squares:
/// entry `(i, j)`, `i != j`, is `sum_t sum_{k != i, j} P_t[i][k] P_t[k][j]`.
pub fn expected_sum_squares(
    schedule: &BlockSchedule,
    labels: &Membership,
    psi: Option<&[f64]>,
) -> DenseMatrix {
    let n = labels.n();
    let k = schedule.k();
    let z = labels.labels();
    let w = |i: usize| psi.map_or(1.0, |p| p[i]);
    // Weighted community sizes sum_{k in c} psi_k^2.
    let mut mass = vec![0.0; k];
    for i in 0..n {
        mass[z[i]] += w(i) * w(i);
    }
    let mut out = DenseMatrix::zeros(n, n);
    for t in 0..schedule.layers() {
        let b = schedule.matrix(t);
        let mut q = vec![vec![0.0; k]; k];
        for a in 0..k {
            for c in 0..k {
                q[a][c] = (0..k).map(|m| b[a][m] * mass[m] * b[m][c]).sum();
            }
        }
        for i in 0..n {
            let (zi, wi) = (z[i], w(i));
            for j in 0..n {
                if i == j {
                    continue;
                }
                let (zj, wj) = (z[j], w(j));
                let v = q[zi][zj]
                    - wi * wi * b[zi][zi] * b[zi][zj]
                    - wj * wj * b[zi][zj] * b[zj][zj];
                out[(i, j)] += wi * wj * v;
            }
        }
    }
    out
}
