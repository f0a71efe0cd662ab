//! File formats, configuration and pipeline commands around `gigamil-core`:
//! synthetic dataset generation, slide tiling, per-magnification and MRI
//! training with resumable snapshots, ensemble inference and evaluation.

pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod layout;

pub use config::RunConfig;
pub use error::{CliError, Result};
pub use layout::{Layout, ModelKey};

/// Runs `f` on a worker pool of `jobs` threads (all cores when `None`).
pub fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        builder = builder.num_threads(n);
    }
    builder.build().expect("thread pool").install(f)
}
