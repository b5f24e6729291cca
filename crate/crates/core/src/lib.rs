//! Community detection for multilayer (multi-relational) networks.
//!
//! The central statistic is the diagonal-zeroed sum of squared adjacency
//! matrices, `sum_t (A_t)^2`, whose off-diagonal entries count length-two
//! paths aggregated over layers. Squaring turns both assortative and
//! disassortative block structure into a positive signal, so a single
//! spectral embedding recovers communities that plain adjacency sums lose.
//!
//! Modules:
//!
//! * [`graph`]: multilayer graph storage, two-path counting, degree statistics
//!   and the order-statistic pruning rule.
//! * [`model`]: multilayer SBM / degree-corrected samplers and the benchmark
//!   connectivity schedules.
//! * [`spectral`]: top-K symmetric eigenpairs (block Lanczos with a dense
//!   fallback) and spherical row normalization.
//! * [`cluster`]: restarted k-means++/Lloyd and an exact enumeration oracle.
//! * [`pipeline`]: the detection algorithms, the number-of-communities
//!   estimator, two spectral baselines and theory diagnostics.
//! * [`metrics`]: NMI and label-aligned misclassification rates.
//! * [`experiment`]: the replicated simulation harness.

pub mod cluster;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod spectral;

pub use cluster::{kmeans_approx, kmeans_exact, KMeansResult};
pub use error::{Error, Result};
pub use graph::{
    degree_stats, load_multilayer, prune, submatrix, sum_squared_adjacency, DegreeStats,
    MultiRelationalNetwork, PruneResult, SumSquares,
};
pub use matrix::{CsrMatrix, DenseMatrix};
pub use metrics::{misclassification, nmi, EvalReport};
pub use model::{
    expected_sum_squares, normalize_psi, sample_memberships, sample_network, scenario_schedule,
    BlockSchedule, DegreeParams, Membership, ModelParams, Scenario, Variant,
};
pub use pipeline::{
    algorithm1, algorithm2, algorithm3, baseline_spectral_sum, baseline_sum_spectral, detect,
    estimate_k, theory_diagnostics, BoundConstants, DetectionResult, KEstimate, Method,
    TheoryDiagnostics,
};
pub use spectral::{
    all_eigenvalues, normalize_rows, top_k_eigenpairs, EigenConfig, NormalizedEmbedding,
    SpectralEmbedding, SymmetricOperator,
};
pub use experiment::{
    run_experiment, summarize, ExperimentConfig, ModelSource, ResultRow, ResultsTable, SummaryRow,
};
