//! Benchmark harness: configuration, built-in data-generating systems,
//! model persistence, the end-to-end command workflows behind the CLI, and
//! the property verification suite.

pub mod commands;
pub mod config;
pub mod model;
pub mod systems;
pub mod verify;

pub use commands::{
    run_eval, run_fit, run_generate, run_gridsearch, run_predict, trajectories_path, EvalReport,
    FitSummary, GenerateSummary, PredictSummary,
};
pub use config::{BenchmarkConfig, HyperValue, InputSpec, PredictorMode, SystemSpec};
pub use model::{LoadedPredictor, SavedModel, MODEL_FORMAT_VERSION};
pub use systems::{
    build_system, generate_from_config, generate_trajectory, linear_benchmark_system,
    polynomial_system,
};
pub use verify::{run_verify, Fault, PropertyResult, VerifyReport};
