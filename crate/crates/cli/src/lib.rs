//! Experiment orchestration for `hubbard-gpsr`: configuration, runs with
//! CSV and manifest output, scaling benchmarks and run comparison.

pub mod bench;
pub mod compare;
pub mod config;
pub mod error;
pub mod experiment;

pub use config::{ExperimentConfig, InitialConfig, Method, Overrides, THREADS_ENV};
pub use error::CliError;
pub use experiment::{run_experiment, write_outputs, Manifest, RunOutput};

/// Applies the thread count from [`THREADS_ENV`], if set, to the global
/// pool. Dense kernels run single-threaded; parallelism is over
/// trajectories.
pub fn init_threads() -> Result<usize, CliError> {
    faer::set_global_parallelism(faer::Par::Seq);
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
        if n == 0 {
            return Err(CliError::Config(format!("{THREADS_ENV} must be at least 1")));
        }
        // A second initialization in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(rayon::current_num_threads())
}
