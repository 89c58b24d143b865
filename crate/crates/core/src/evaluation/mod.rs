//! Cold-user evaluation: protocol, metrics, baselines and the experiment
//! runner.

pub mod baselines;
pub mod experiment;
pub mod metrics;
pub mod protocol;

pub use experiment::{
    run_cold_experiment, CellReport, CellStatus, EvaluationReport, ExperimentConfig, ExperimentOutput, Method,
    MetricMeans, Timings,
};
pub use metrics::{
    err_ia_at, err_ia_cascade, f1, ndcg_at, precision_at, recall_at, relevant_set, test_ratings, topic_distribution,
    ErrIa, RelevantSet, TestRatings,
};
pub use protocol::{
    check_conservation, make_cold_scenario, restore_n_ratings, select_cold_candidates, training_set, ColdScenario,
    Restored,
};
