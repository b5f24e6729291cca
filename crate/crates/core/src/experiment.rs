//! Replicated simulation harness: sample, detect, evaluate, tabulate.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{misclassification, nmi};
use crate::model::{
    sample_memberships, sample_network_with_psi, scenario_schedule, uniform_pi, DegreeParams,
    ModelParams, Scenario, Variant,
};
use crate::pipeline::{detect, estimate_k, Method};
use crate::rng;
use crate::spectral::EigenConfig;

/// Where the generative model comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSource {
    /// Benchmark scenario 1, 2 or 3.
    Builtin(u8),
    Inline { params: ModelParams },
    /// Relative paths resolve against the directory of the config file.
    File { params_file: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    N,
    T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub param: SweepParam,
    pub values: Vec<usize>,
}

/// Sizes that are not swept. The swept one is ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedSizes {
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub t: Option<usize>,
}

fn default_replications() -> usize {
    25
}

fn default_eps() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: ModelSource,
    #[serde(default = "default_variant")]
    pub variant: Variant,
    pub sweep: Sweep,
    pub fixed: FixedSizes,
    pub methods: Vec<Method>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default)]
    pub base_seed: u64,
    /// Number of communities passed to the detectors; defaults to the
    /// model's K.
    #[serde(default)]
    pub k: Option<usize>,
}

fn default_variant() -> Variant {
    Variant::Sbm
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    /// Reads a config file, inlining a referenced params file.
    pub fn from_path(path: &Path) -> Result<Self> {
        let mut c = Self::from_json(&std::fs::read_to_string(path)?)?;
        if let ModelSource::File { params_file } = &c.scenario {
            let full = match path.parent() {
                Some(dir) if params_file.is_relative() => dir.join(params_file),
                _ => params_file.clone(),
            };
            let params = ModelParams::from_json(&std::fs::read_to_string(full)?)?;
            c.scenario = ModelSource::Inline { params };
        }
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::Parameter("replications must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Parameter("no methods given".into()));
        }
        if self.sweep.values.is_empty() {
            return Err(Error::Parameter("sweep has no values".into()));
        }
        if self.sweep.values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Parameter("sweep values must be strictly increasing".into()));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::Parameter(format!("eps must be positive, got {}", self.eps)));
        }
        if self.k == Some(0) {
            return Err(Error::Parameter("k must be at least 1".into()));
        }
        match &self.scenario {
            ModelSource::Builtin(1..=3) => {
                let needs = match self.sweep.param {
                    SweepParam::N => ("t", self.fixed.t),
                    SweepParam::T => ("n", self.fixed.n),
                };
                if needs.1.is_none() {
                    return Err(Error::Parameter(format!("fixed.{} is required", needs.0)));
                }
            }
            ModelSource::Builtin(s) => {
                return Err(Error::Parameter(format!("unknown scenario {s}")));
            }
            ModelSource::Inline { params } => params.validate()?,
            ModelSource::File { .. } => {}
        }
        Ok(())
    }
}

/// One (sweep value, method, replication) outcome. Empty fields do not
/// apply or were not computed because the run failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub sweep_value: usize,
    pub method: Method,
    pub replication: usize,
    pub nmi: Option<f64>,
    pub error: Option<f64>,
    pub k_hat: Option<usize>,
    /// `ok`, or the error kind of a failed run.
    pub status: String,
    pub seconds: f64,
}

impl ResultRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultsTable {
    pub rows: Vec<ResultRow>,
}

impl ResultsTable {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for row in &self.rows {
            out.serialize(row).map_err(csv_error)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, &self.rows)?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let rows = csv::Reader::from_reader(r)
            .deserialize()
            .collect::<std::result::Result<_, _>>()
            .map_err(csv_error)?;
        Ok(Self { rows })
    }
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parameter(format!("csv: {other:?}")),
    }
}

/// Seed of replication `r` at sweep value `s`.
pub fn replication_seed(base_seed: u64, sweep_value: usize, r: usize) -> u64 {
    base_seed ^ rng::mix(rng::splitmix64(sweep_value as u64), r as u64)
}

const TAG_LABELS: u64 = 0x6c61_6265;
const TAG_SCHEDULE: u64 = 0x7363_6865;
const TAG_PSI: u64 = 0x70_7369;
const TAG_NETWORK: u64 = 0x6e_6574;
const TAG_DETECT: u64 = 0x64_6574;

struct Instance {
    params: ModelParams,
}

fn instance(cfg: &ExperimentConfig, value: usize, seed: u64) -> Result<Instance> {
    let (n, t) = match cfg.sweep.param {
        SweepParam::N => (value, cfg.fixed.t),
        SweepParam::T => (cfg.fixed.n.unwrap_or(0), Some(value)),
    };
    let params = match &cfg.scenario {
        ModelSource::Builtin(id) => {
            let t = t.expect("validated");
            let scenario = match (id, cfg.sweep.param) {
                (1, SweepParam::N) => Scenario::Scenario1NodeSweep,
                (1, SweepParam::T) => Scenario::Scenario1LayerSweep,
                (2, _) => Scenario::Scenario2,
                _ => Scenario::Scenario3,
            };
            let sched = scenario_schedule(scenario, cfg.variant, n, t, rng::mix(seed, TAG_SCHEDULE))?;
            ModelParams {
                n,
                pi: uniform_pi(sched.schedule.k()),
                schedule: sched.schedule,
                psi: (cfg.variant == Variant::Dcbm).then_some(DegreeParams::Uniform {
                    low: 0.5,
                    high: 1.0,
                    normalize: false,
                }),
            }
        }
        ModelSource::Inline { params } => {
            let mut p = params.clone();
            match cfg.sweep.param {
                SweepParam::N => p.n = value,
                SweepParam::T => {
                    let avail = p.schedule.layers();
                    if value > avail {
                        return Err(Error::Parameter(format!(
                            "T = {value} exceeds the {avail} layers of the schedule"
                        )));
                    }
                    let mats = (0..value).map(|s| p.schedule.matrix(s).to_vec()).collect();
                    p.schedule = crate::model::BlockSchedule::new(p.schedule.k(), mats)?;
                }
            }
            if p.psi.is_none() && cfg.variant == Variant::Dcbm {
                p.psi = Some(DegreeParams::Uniform {
                    low: 0.5,
                    high: 1.0,
                    normalize: false,
                });
            }
            p.validate()?;
            p
        }
        ModelSource::File { .. } => {
            return Err(Error::Parameter("params_file must be resolved with from_path".into()))
        }
    };
    Ok(Instance { params })
}

/// One replication: all methods on the same sampled network.
fn run_replication(cfg: &ExperimentConfig, value: usize, r: usize) -> Vec<ResultRow> {
    let seed = replication_seed(cfg.base_seed, value, r);
    let start = Instant::now();
    let sampled = instance(cfg, value, seed).and_then(|inst| {
        let p = inst.params;
        let labels = sample_memberships(p.n, &p.pi, rng::mix(seed, TAG_LABELS))?;
        let psi = p.resolve_psi(&labels, rng::mix(seed, TAG_PSI))?;
        let net = sample_network_with_psi(&p.schedule, &labels, psi.as_deref(), rng::mix(seed, TAG_NETWORK))?;
        Ok((p.schedule.k(), labels, net))
    });
    let setup = start.elapsed().as_secs_f64();
    let row = |method, status: String, seconds| ResultRow {
        sweep_value: value,
        method,
        replication: r,
        nmi: None,
        error: None,
        k_hat: None,
        status,
        seconds,
    };
    let (model_k, truth, net) = match sampled {
        Ok(s) => s,
        Err(e) => {
            log::warn!("sweep value {value}, replication {r}: {e}");
            return cfg.methods.iter().map(|&m| row(m, e.kind().to_string(), setup)).collect();
        }
    };
    let k = cfg.k.unwrap_or(model_k);
    let eigen = EigenConfig::default();
    let detect_seed = rng::mix(seed, TAG_DETECT);
    cfg.methods
        .iter()
        .map(|&method| {
            let start = Instant::now();
            let mut out = row(method, "ok".into(), 0.0);
            let outcome: Result<()> = if method == Method::Alg3 {
                estimate_k(&net, detect_seed, &eigen).map(|e| out.k_hat = Some(e.k_hat))
            } else {
                detect(method, &net, k, cfg.eps, detect_seed, &eigen).and_then(|d| {
                    let est = d.membership.labels();
                    out.nmi = Some(nmi(truth.labels(), est)?);
                    out.error = Some(misclassification(&truth, &d.membership)?.overall_error);
                    Ok(())
                })
            };
            if let Err(e) = outcome {
                log::warn!("{method} at sweep value {value}, replication {r}: {e}");
                out.status = e.kind().to_string();
            }
            out.seconds = setup + start.elapsed().as_secs_f64();
            out
        })
        .collect()
}

/// Runs every (sweep value, replication) pair, in parallel on the current
/// rayon pool. Rows are ordered by sweep value, method (config order), then
/// replication, independent of scheduling.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultsTable> {
    cfg.validate()?;
    if matches!(cfg.scenario, ModelSource::File { .. }) {
        return Err(Error::Parameter("params_file must be resolved with from_path".into()));
    }
    let jobs: Vec<(usize, usize)> = cfg
        .sweep
        .values
        .iter()
        .flat_map(|&v| (0..cfg.replications).map(move |r| (v, r)))
        .collect();
    let per_job: Vec<Vec<ResultRow>> = jobs.par_iter().map(|&(v, r)| run_replication(cfg, v, r)).collect();
    let mut rows = Vec::with_capacity(per_job.len() * cfg.methods.len());
    for (vi, _) in cfg.sweep.values.iter().enumerate() {
        let block = &per_job[vi * cfg.replications..(vi + 1) * cfg.replications];
        for mi in 0..cfg.methods.len() {
            rows.extend(block.iter().map(|rep| rep[mi].clone()));
        }
    }
    Ok(ResultsTable { rows })
}

/// Mean and standard error (sample standard deviation over `sqrt(m)`, 0 for
/// a single value) of `values`; `None` when empty.
pub fn mean_se(values: &[f64]) -> Option<(f64, f64)> {
    let m = values.len();
    if m == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / m as f64;
    if m == 1 {
        return Some((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
    Some((mean, (var / m as f64).sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub sweep_value: usize,
    pub method: Method,
    /// Successful runs.
    pub runs: usize,
    /// Failed runs, excluded from the averages.
    pub attrition: usize,
    pub nmi_mean: Option<f64>,
    pub nmi_se: Option<f64>,
    pub error_mean: Option<f64>,
    pub error_se: Option<f64>,
    pub k_hat_mean: Option<f64>,
    pub k_hat_se: Option<f64>,
}

/// Per (sweep value, method) averages over successful replications.
pub fn summarize(table: &ResultsTable) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(usize, Method), Vec<&ResultRow>> = BTreeMap::new();
    for row in &table.rows {
        groups.entry((row.sweep_value, row.method)).or_default().push(row);
    }
    groups
        .into_iter()
        .map(|((sweep_value, method), rows)| {
            let ok: Vec<&ResultRow> = rows.iter().copied().filter(|r| r.is_ok()).collect();
            let stat = |f: &dyn Fn(&ResultRow) -> Option<f64>| {
                let v: Vec<f64> = ok.iter().filter_map(|r| f(r)).collect();
                mean_se(&v).unzip()
            };
            let (nmi_mean, nmi_se) = stat(&|r| r.nmi);
            let (error_mean, error_se) = stat(&|r| r.error);
            let (k_hat_mean, k_hat_se) = stat(&|r| r.k_hat.map(|k| k as f64));
            SummaryRow {
                sweep_value,
                method,
                runs: ok.len(),
                attrition: rows.len() - ok.len(),
                nmi_mean,
                nmi_se,
                error_mean,
                error_se,
                k_hat_mean,
                k_hat_se,
            }
        })
        .collect()
}

pub fn write_summary_csv<W: Write>(summary: &[SummaryRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for row in summary {
        out.serialize(row).map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(v: usize, r: usize, nmi: f64, status: &str) -> ResultRow {
        ResultRow {
            sweep_value: v,
            method: Method::Alg1,
            replication: r,
            nmi: Some(nmi),
            error: Some(1.0 - nmi),
            k_hat: None,
            status: status.into(),
            seconds: 0.0,
        }
    }

    #[test]
    fn summary_examples() {
        let t = ResultsTable {
            rows: vec![row(10, 0, 0.7, "ok")],
        };
        let s = summarize(&t);
        assert_eq!(s[0].nmi_mean, Some(0.7));
        assert_eq!(s[0].nmi_se, Some(0.0));

        let t = ResultsTable {
            rows: vec![row(10, 0, 0.8, "ok"), row(10, 1, 1.0, "ok"), row(10, 2, 0.0, "too-few-kept")],
        };
        let s = summarize(&t);
        assert_eq!(s.len(), 1);
        assert!((s[0].nmi_mean.unwrap() - 0.9).abs() < 1e-12);
        assert!((s[0].nmi_se.unwrap() - 0.1).abs() < 1e-12);
        assert_eq!((s[0].runs, s[0].attrition), (2, 1));
        assert_eq!(s[0].k_hat_mean, None);
    }

    #[test]
    fn config_validation() {
        let ok = r#"{"scenario": 1, "sweep": {"param": "n", "values": [100, 200]},
                     "fixed": {"t": 3}, "methods": ["alg1"]}"#;
        let c = ExperimentConfig::from_json(ok).unwrap();
        assert_eq!((c.replications, c.eps, c.base_seed), (25, 0.5, 0));
        for bad in [
            r#"{"scenario": 1, "sweep": {"param": "n", "values": [200, 100]}, "fixed": {"t": 3}, "methods": ["alg1"]}"#,
            r#"{"scenario": 1, "sweep": {"param": "n", "values": [100]}, "fixed": {"t": 3}, "methods": []}"#,
            r#"{"scenario": 1, "sweep": {"param": "n", "values": [100]}, "fixed": {"t": 3}, "methods": ["alg1"], "replications": 0}"#,
            r#"{"scenario": 4, "sweep": {"param": "n", "values": [100]}, "fixed": {"t": 3}, "methods": ["alg1"]}"#,
            r#"{"scenario": 2, "sweep": {"param": "t", "values": [5]}, "fixed": {}, "methods": ["alg1"]}"#,
        ] {
            assert!(ExperimentConfig::from_json(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn seeds_differ_across_points() {
        let a = replication_seed(7, 100, 0);
        assert_ne!(a, replication_seed(7, 100, 1));
        assert_ne!(a, replication_seed(7, 200, 0));
        assert_eq!(a, replication_seed(7, 100, 0));
    }

    #[test]
    fn row_count_and_order() {
        let c = ExperimentConfig::from_json(
            r#"{"scenario": 2, "sweep": {"param": "n", "values": [60, 80]}, "fixed": {"t": 3},
                "methods": ["alg1", "alg3"], "replications": 3, "base_seed": 5}"#,
        )
        .unwrap();
        let t = run_experiment(&c).unwrap();
        assert_eq!(t.rows.len(), 2 * 2 * 3);
        let keys: Vec<(usize, Method, usize)> =
            t.rows.iter().map(|r| (r.sweep_value, r.method, r.replication)).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        for r in &t.rows {
            match r.method {
                Method::Alg3 if r.is_ok() => assert!(r.k_hat.is_some() && r.nmi.is_none()),
                _ if r.is_ok() => assert!(r.nmi.is_some() && r.k_hat.is_none()),
                _ => {}
            }
        }
    }

    #[test]
    fn csv_roundtrip() {
        let t = ResultsTable {
            rows: vec![row(10, 0, 0.25, "ok"), row(10, 1, 0.5, "degenerate-pruning")],
        };
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("sweep_value,method,replication,nmi,error,k_hat,status,seconds\n"));
        assert!(text.contains("10,alg1,0,0.25,0.75,,ok,"));
        assert_eq!(ResultsTable::read_csv(&buf[..]).unwrap(), t);
    }
}
