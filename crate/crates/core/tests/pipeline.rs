use mlsc::experiment::{FixedSizes, Sweep, SweepParam};
use mlsc::model::sample_network_with_psi;
use mlsc::pipeline::{detect, estimate_k, k_threshold};
use mlsc::{
    algorithm1, algorithm2, algorithm3, baseline_spectral_sum, baseline_sum_spectral, nmi,
    run_experiment, BlockSchedule, EigenConfig, ExperimentConfig, Membership, Method, ModelParams,
    ModelSource, MultiRelationalNetwork, Variant,
};

/// Two groups of `m`: layer 1 joins each group into a clique, layer 2 is the
/// complete bipartite graph between the groups.
fn cliques_and_bipartite(m: usize) -> (MultiRelationalNetwork, Vec<usize>) {
    let n = 2 * m;
    let mut within = Vec::new();
    let mut across = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if (i < m) == (j < m) {
                within.push((i, j));
            } else {
                across.push((i, j));
            }
        }
    }
    let labels = (0..n).map(|i| usize::from(i >= m)).collect();
    (MultiRelationalNetwork::from_edges(n, &[within, across]).unwrap(), labels)
}

#[test]
fn squaring_keeps_disassortative_layer_signal() {
    let (net, truth) = cliques_and_bipartite(15);
    for method in [Method::Alg1, Method::Alg2] {
        let r = detect(method, &net, 2, 0.5, 1, &EigenConfig::default()).unwrap();
        assert_eq!(nmi(&truth, r.membership.labels()).unwrap(), 1.0, "{method}");
        assert!(!r.low_confidence);
    }
    // The plain sum is the complete graph: every non-leading eigenvalue ties.
    let r = baseline_sum_spectral(&net, 2, 0.5, 1).unwrap();
    assert!(r.low_confidence);
}

#[test]
fn single_disassortative_layer() {
    let (net, truth) = cliques_and_bipartite(12);
    let bipartite = net.select_layers(&[1]);
    let r = algorithm1(&bipartite, 2, 0.5, 0).unwrap();
    assert_eq!(nmi(&truth, r.membership.labels()).unwrap(), 1.0);
}

#[test]
fn planted_partition_recovered_by_every_method() {
    let n = 300;
    let sched = BlockSchedule::constant(vec![vec![0.3, 0.02], vec![0.02, 0.3]], 3).unwrap();
    let z = Membership::new((0..n).map(|i| i % 2).collect(), 2).unwrap();
    let net = sample_network_with_psi(&sched, &z, None, 5).unwrap();
    for r in [
        algorithm1(&net, 2, 0.5, 2).unwrap(),
        algorithm2(&net, 2, 0.5, 2).unwrap(),
        baseline_sum_spectral(&net, 2, 0.5, 2).unwrap(),
        baseline_spectral_sum(&net, 2, 0.5, 2).unwrap(),
    ] {
        assert!(nmi(z.labels(), r.membership.labels()).unwrap() > 0.95, "{}", r.method);
    }
    assert_eq!(algorithm3(&net).unwrap(), 2);
}

#[test]
fn spectral_sum_baseline_reports_empty_layers() {
    let (net, _) = cliques_and_bipartite(6);
    let padded = MultiRelationalNetwork::from_edges(
        12,
        &[net.layer(0).edges().collect(), Vec::new()],
    )
    .unwrap();
    let r = baseline_spectral_sum(&padded, 2, 0.5, 0).unwrap();
    assert!(r.pruning.is_none());
    assert!(r.warnings.iter().any(|w| w.starts_with("layer 2")));
}

#[test]
fn detection_is_seed_deterministic() {
    let sched = BlockSchedule::constant(vec![vec![0.04, 0.01], vec![0.01, 0.04]], 5).unwrap();
    let z = Membership::new((0..400).map(|i| i % 2).collect(), 2).unwrap();
    let net = sample_network_with_psi(&sched, &z, None, 1).unwrap();
    let a = algorithm2(&net, 2, 0.5, 77).unwrap();
    let b = algorithm2(&net, 2, 0.5, 77).unwrap();
    assert_eq!(a, b);
}

#[test]
fn threshold_formula() {
    // T = 1, two-neighbour mean 16: 16 / 4 * 4^(-1/8).
    assert!((k_threshold(1, 16.0) - 4.0 * 4f64.powf(-0.125)).abs() < 1e-12);
    let two_cliques = {
        let mut e = Vec::new();
        for base in [0, 20] {
            for i in base..base + 20 {
                for j in i + 1..base + 20 {
                    e.push((i, j));
                }
            }
        }
        MultiRelationalNetwork::from_edges(40, &[e]).unwrap()
    };
    let est = estimate_k(&two_cliques, 0, &EigenConfig::default()).unwrap();
    assert_eq!(est.k_hat, 2);
    assert_eq!(est.n_prime, 40);
}

fn custom_params() -> ModelParams {
    ModelParams {
        n: 120,
        pi: vec![0.5, 0.5],
        schedule: BlockSchedule::constant(vec![vec![0.2, 0.03], vec![0.03, 0.2]], 4).unwrap(),
        psi: None,
    }
}

fn custom_config(scenario: ModelSource) -> ExperimentConfig {
    ExperimentConfig {
        scenario,
        variant: Variant::Sbm,
        sweep: Sweep { param: SweepParam::T, values: vec![1, 2, 4] },
        fixed: FixedSizes { n: Some(120), t: None },
        methods: vec![Method::Alg1, Method::Alg3],
        replications: 2,
        eps: 0.5,
        base_seed: 3,
        k: None,
    }
}

#[test]
fn params_file_matches_inline_params() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("model.json"), custom_params().to_json().unwrap()).unwrap();
    let config_path = dir.path().join("exp.json");
    let mut file_cfg = serde_json::to_value(custom_config(ModelSource::Inline { params: custom_params() })).unwrap();
    file_cfg["scenario"] = serde_json::json!({"params_file": "model.json"});
    std::fs::write(&config_path, file_cfg.to_string()).unwrap();

    let from_file = run_experiment(&ExperimentConfig::from_path(&config_path).unwrap()).unwrap();
    let inline = run_experiment(&custom_config(ModelSource::Inline { params: custom_params() })).unwrap();
    let strip = |t: &mlsc::ResultsTable| {
        t.rows
            .iter()
            .map(|r| (r.sweep_value, r.method, r.replication, r.nmi, r.k_hat, r.status.clone()))
            .collect::<Vec<_>>()
    };
    assert_eq!(strip(&from_file), strip(&inline));
    assert_eq!(inline.rows.len(), 3 * 2 * 2);
}

#[test]
fn layer_sweep_beyond_schedule_is_a_failed_row() {
    let mut cfg = custom_config(ModelSource::Inline { params: custom_params() });
    cfg.sweep.values = vec![2, 9];
    let t = run_experiment(&cfg).unwrap();
    assert_eq!(t.rows.len(), 2 * 2 * 2);
    assert!(t.rows.iter().filter(|r| r.sweep_value == 9).all(|r| r.status == "parameter"));
    assert!(t.rows.iter().filter(|r| r.sweep_value == 2).all(|r| r.is_ok()));
}

#[test]
fn experiment_rows_independent_of_worker_count() {
    let cfg = ExperimentConfig::from_json(
        r#"{"scenario": 2, "variant": "dcbm", "sweep": {"param": "n", "values": [80, 120]},
            "fixed": {"t": 3}, "methods": ["alg2", "baseline_spectral_sum"], "replications": 2}"#,
    )
    .unwrap();
    let run = |threads| {
        let t = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_experiment(&cfg).unwrap());
        t.rows
            .into_iter()
            .map(|r| (r.sweep_value, r.method, r.replication, r.nmi, r.error, r.status))
            .collect::<Vec<_>>()
    };
    assert_eq!(run(1), run(4));
}
