use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use mlsc::experiment::write_summary_csv;
use mlsc::graph::scan_edge_list_dims;
use mlsc::model::{sample_network_with_psi, scenario_schedule, uniform_pi};
use mlsc::pipeline::{detect, estimate_k, BoundConstants};
use mlsc::{
    load_multilayer, misclassification, normalize_psi, run_experiment, sample_memberships,
    summarize, theory_diagnostics, DegreeParams, EigenConfig, ExperimentConfig, Membership, Method,
    ModelParams, MultiRelationalNetwork, Scenario, Variant,
};

#[derive(Parser)]
#[command(name = "mlsc", version, about = "Spectral community detection for multilayer networks")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// RNG seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// K-means accuracy parameter; restarts = min(ceil(10 / eps), 200).
    #[arg(long, global = true, default_value_t = 0.5)]
    eps: f64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output file (default: standard output).
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a network from model parameters and write an edge list.
    Generate(GenerateArgs),
    /// Detect communities; writes one 1-based label per line.
    Detect(DetectArgs),
    /// Estimate the number of communities.
    SelectK(InputArgs),
    /// Compare two label files; writes an evaluation report as JSON.
    Eval(EvalArgs),
    /// Run a replicated simulation experiment; writes a results CSV.
    Experiment(ExperimentArgs),
    /// Recovery condition and error bounds for model parameters, as JSON.
    Diagnose(DiagnoseArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Model parameters JSON.
    #[arg(long, conflicts_with = "scenario", required_unless_present = "scenario")]
    params: Option<PathBuf>,
    /// Benchmark scenario instead of a params file: 1, 1-layers, 2 or 3.
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long, default_value = "sbm", value_parser = parse_variant)]
    variant: Variant,
    /// Node count for --scenario.
    #[arg(long, short = 'n')]
    nodes: Option<usize>,
    /// Layer count for --scenario.
    #[arg(long, short = 't')]
    layers: Option<usize>,
    /// Also write the true labels here.
    #[arg(long)]
    labels_out: Option<PathBuf>,
}

#[derive(Args)]
struct InputArgs {
    /// Edge list: `t i j` per line, layers 1-based, nodes 0-based.
    input: PathBuf,
    /// Node count (default: from the header or the largest index).
    #[arg(long)]
    nodes: Option<usize>,
    /// Layer count (default: from the header or the largest index).
    #[arg(long)]
    layers: Option<usize>,
}

#[derive(Args)]
struct DetectArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Number of communities.
    #[arg(short)]
    k: usize,
    #[arg(long, default_value = "alg1", value_parser = parse_method)]
    method: Method,
    /// Write run details (pruning, eigenvalues, warnings) as JSON here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    estimate: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    config: PathBuf,
    /// JSON mirror of the results.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Mean and standard error per sweep value and method, as CSV.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[arg(long)]
    params: PathBuf,
    /// Labels file; sampled from the params with --seed if absent.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, default_value_t = 8.5)]
    delta: f64,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value_t = 1.0)]
    c_prime: f64,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: mlsc::Error| e.to_string())
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    match s.to_ascii_lowercase().as_str() {
        "sbm" => Ok(Variant::Sbm),
        "dcbm" => Ok(Variant::Dcbm),
        _ => Err(format!("unknown variant `{s}` (sbm or dcbm)")),
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn read_params(path: &Path) -> Result<ModelParams> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    ModelParams::from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

fn read_labels(path: &Path) -> Result<Membership> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Membership::read(f).with_context(|| format!("reading {}", path.display()))
}

fn load(args: &InputArgs) -> Result<MultiRelationalNetwork> {
    let (n, t) = match (args.nodes, args.layers) {
        (Some(n), Some(t)) => (n, t),
        (n, t) => {
            let (sn, st) = scan_edge_list_dims(&args.input)
                .with_context(|| format!("scanning {}", args.input.display()))?;
            (n.unwrap_or(sn), t.unwrap_or(st))
        }
    };
    if t == 0 {
        bail!("{}: no layers (pass --layers)", args.input.display());
    }
    load_multilayer(&args.input, n, t).with_context(|| format!("loading {}", args.input.display()))
}

fn generate(g: &Global, args: &GenerateArgs) -> Result<()> {
    let params = match (&args.params, &args.scenario) {
        (Some(p), _) => read_params(p)?,
        (None, Some(s)) => {
            let scenario = match s.as_str() {
                "1" => Scenario::Scenario1NodeSweep,
                "1-layers" => Scenario::Scenario1LayerSweep,
                "2" => Scenario::Scenario2,
                "3" => Scenario::Scenario3,
                _ => bail!("unknown scenario `{s}` (1, 1-layers, 2 or 3)"),
            };
            let (Some(n), Some(t)) = (args.nodes, args.layers) else {
                bail!("--scenario needs --nodes and --layers");
            };
            let sched = scenario_schedule(scenario, args.variant, n, t, mlsc::rng::mix(g.seed, 2))?;
            if sched.clamped > 0 {
                log::warn!("{} schedule entries clamped into [0, 1]", sched.clamped);
            }
            ModelParams {
                n,
                pi: uniform_pi(sched.schedule.k()),
                schedule: sched.schedule,
                psi: (args.variant == Variant::Dcbm).then_some(DegreeParams::Uniform {
                    low: 0.5,
                    high: 1.0,
                    normalize: false,
                }),
            }
        }
        (None, None) => unreachable!("clap requires one of them"),
    };
    let labels = sample_memberships(params.n, &params.pi, mlsc::rng::mix(g.seed, 1))?;
    let psi = params.resolve_psi(&labels, mlsc::rng::mix(g.seed, 3))?;
    let net = sample_network_with_psi(&params.schedule, &labels, psi.as_deref(), g.seed)?;
    let mut out = output(g.output.as_deref())?;
    net.write_edge_list(&mut out)?;
    out.flush()?;
    if let Some(p) = &args.labels_out {
        let mut w = output(Some(p))?;
        labels.write(&mut w)?;
        w.flush()?;
    }
    log::info!("{} nodes, {} layers, {} edges", net.n(), net.num_layers(), net.edge_count());
    Ok(())
}

fn run_detect(g: &Global, args: &DetectArgs) -> Result<()> {
    let net = load(&args.input)?;
    let r = detect(args.method, &net, args.k, g.eps, g.seed, &EigenConfig::default())?;
    for w in &r.warnings {
        log::warn!("{w}");
    }
    let mut out = output(g.output.as_deref())?;
    r.membership.write(&mut out)?;
    out.flush()?;
    if let Some(p) = &args.report {
        let report = serde_json::json!({
            "method": r.method,
            "k": args.k,
            "pruning": r.pruning,
            "eigenvalues": r.eigenvalues,
            "kmeans_cost": r.kmeans_cost,
            "low_confidence": r.low_confidence,
            "warnings": r.warnings,
        });
        let mut w = output(Some(p))?;
        serde_json::to_writer_pretty(&mut w, &report)?;
        writeln!(w)?;
        w.flush()?;
    }
    Ok(())
}

fn select_k(g: &Global, args: &InputArgs) -> Result<()> {
    let net = load(args)?;
    let e = estimate_k(&net, g.seed, &EigenConfig::default())?;
    log::info!("threshold {:.6}, {} nodes kept", e.threshold, e.n_prime);
    let mut out = output(g.output.as_deref())?;
    writeln!(out, "{}", e.k_hat)?;
    out.flush()?;
    Ok(())
}

fn eval(g: &Global, args: &EvalArgs) -> Result<()> {
    let truth = read_labels(&args.truth)?;
    let est = read_labels(&args.estimate)?;
    let report = misclassification(&truth, &est)?;
    let mut out = output(g.output.as_deref())?;
    serde_json::to_writer_pretty(&mut out, &report)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn experiment(g: &Global, args: &ExperimentArgs) -> Result<()> {
    let cfg = ExperimentConfig::from_path(&args.config)
        .with_context(|| format!("loading {}", args.config.display()))?;
    let table = run_experiment(&cfg)?;
    let failed = table.rows.iter().filter(|r| !r.is_ok()).count();
    if failed > 0 {
        log::warn!("{failed} of {} runs failed", table.rows.len());
    }
    let mut out = output(g.output.as_deref())?;
    table.write_csv(&mut out)?;
    out.flush()?;
    if let Some(p) = &args.json {
        let mut w = output(Some(p))?;
        table.write_json(&mut w)?;
        w.flush()?;
    }
    if let Some(p) = &args.summary {
        let mut w = output(Some(p))?;
        write_summary_csv(&summarize(&table), &mut w)?;
        w.flush()?;
    }
    Ok(())
}

fn diagnose(g: &Global, args: &DiagnoseArgs) -> Result<()> {
    let params = read_params(&args.params)?;
    let labels = match &args.labels {
        Some(p) => read_labels(p)?,
        None => sample_memberships(params.n, &params.pi, mlsc::rng::mix(g.seed, 1))?,
    };
    // Bounds are stated for degree parameters with per-community maximum 1.
    let psi = params
        .resolve_psi(&labels, mlsc::rng::mix(g.seed, 3))?
        .map(|raw| normalize_psi(&labels, &raw))
        .transpose()?;
    let consts = BoundConstants {
        delta: args.delta,
        c: args.c,
        c_prime: args.c_prime,
    };
    let d = theory_diagnostics(&params.schedule, &labels, psi.as_deref(), &consts)?;
    let mut out = output(g.output.as_deref())?;
    serde_json::to_writer_pretty(&mut out, &d)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let g = &cli.global;
    if let Some(jobs) = g.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .context("configuring the thread pool")?;
    }
    match &cli.command {
        Command::Generate(a) => generate(g, a),
        Command::Detect(a) => run_detect(g, a),
        Command::SelectK(a) => select_k(g, a),
        Command::Eval(a) => eval(g, a),
        Command::Experiment(a) => experiment(g, a),
        Command::Diagnose(a) => diagnose(g, a),
    }
}
