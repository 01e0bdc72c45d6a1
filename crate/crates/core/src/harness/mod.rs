//! Experiment orchestration: configuration, data preparation, runs,
//! inductive protocols, result tables and gradient checks.

pub mod clusternet;
pub mod config;
pub mod data;
pub mod gradcheck;
pub mod inductive;
pub mod run;
pub mod table;

pub use clusternet::{infer, train, ClusterNet, Inference, TrainReport, WarmStart};
pub use config::{ClusterBackward, DatasetSpec, FeatureSpec, KmeansSchedule, RunConfig, RunMode, Task};
pub use data::{load_dataset, prepare, prepare_graph, restrict_for_task, FullGraph, Instance, ObservedGraph, Problem, Target, CORA_ENV};
pub use gradcheck::{gradcheck_report, GradcheckReport};
pub use inductive::{run_inductive, InductiveConfig, InductiveGraphs};
pub use run::{results_dir, run, run_clusternet, run_methods, run_on, solve_on_prediction, ExperimentResult, Method, RESULTS_ENV};
pub use table::{load_results, method_label, results_table, ResultsTable};
