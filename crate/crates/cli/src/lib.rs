//! Command implementations behind the `policy-fusion` binary.
//!
//! Exit-code contract: 0 on success, 1 on runtime or statistical failure,
//! 2 on configuration errors.

pub mod acceptance;
pub mod bounds_cmd;
pub mod run_cmd;

use std::path::PathBuf;

use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] policy_fusion::config::ConfigError),
    #[error("{0}")]
    Runtime(#[from] policy_fusion::montecarlo::MonteCarloError),
    #[error("{0}")]
    Bounds(#[from] policy_fusion::bounds::BoundsError),
    #[error("{0}")]
    Trace(#[from] policy_fusion::trace::TraceError),
    #[error("cannot write {path}: {source}")]
    OutputIo {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Acceptance(String),
}

impl CliError {
    /// Stable exit-code mapping: configuration problems exit 2, everything
    /// else exits 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Acceptance(_) => EXIT_CONFIG,
            _ => EXIT_RUNTIME,
        }
    }
}

/// Run `f` inside a rayon pool of the requested width; `None` keeps the
/// default pool. Results are independent of the worker count because every
/// rollout derives its streams from (seed, rollout index) alone.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match workers {
        None => f(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .expect("worker pool")
            .install(f),
    }
}
