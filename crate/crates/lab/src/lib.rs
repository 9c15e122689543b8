//! Standard-library companion of `fhn-core`: JSON run configs, experiment
//! drivers, CSV/JSON artifacts, binary checkpoints and a thread-pool
//! executor for trajectory bundles.

use std::path::{Path, PathBuf};

pub mod config;
pub mod io;
pub mod run;

pub use config::RunConfig;
pub use run::{run, Check, RunOutcome};

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numeric failure: {0}")]
    Numeric(#[from] fhn_core::Error),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("format error: {0}")]
    Format(String),
}

impl LabError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        LabError::Io { path: path.to_path_buf(), source }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            LabError::Config(_) => "config",
            LabError::Numeric(_) => "numeric",
            LabError::Io { .. } => "io",
            LabError::Format(_) => "format",
        }
    }

    /// Process exit code: 2 for bad input, 3 for numerical failure, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config(_) => 2,
            LabError::Numeric(_) => 3,
            LabError::Io { .. } | LabError::Format(_) => 1,
        }
    }
}

/// Exit code when every numeric step succeeded but a check failed.
pub const EXIT_CHECK_FAILED: i32 = 4;

/// Runs bundle members on a rayon pool. Results come back in input order,
/// so output does not depend on the thread count.
pub struct ThreadPool {
    pool: rayon::ThreadPool,
}

impl ThreadPool {
    pub fn new(threads: usize) -> Result<Self, LabError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build()
            .map_err(|e| LabError::Config(format!("cannot build thread pool: {e}")))?;
        Ok(ThreadPool { pool })
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl fhn_core::pullback::Executor for ThreadPool {
    fn map<T, R, F>(&self, items: Vec<T>, f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(T) -> R + Sync + Send,
    {
        use rayon::prelude::*;
        self.pool.install(|| items.into_par_iter().map(f).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use fhn_core::pullback::Executor;

    #[test]
    fn pool_preserves_order() {
        let pool = ThreadPool::new(4).unwrap();
        let out = pool.map((0..1000u64).collect(), |i| i * i);
        assert_eq!(out, (0..1000u64).map(|i| i * i).collect::<Vec<_>>());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(LabError::Config("x".into()).exit_code(), 2);
        assert_eq!(LabError::Numeric(fhn_core::Error::EmptyCloud).exit_code(), 3);
    }
}
