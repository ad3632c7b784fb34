//! Data-parallel execution helpers.
//!
//! With the `parallel` feature (default) independent work items such as
//! restarts, per-curve fits, per-M sweeps and distance-matrix rows run on
//! the rayon pool. Without it, or after [`set_mode`]`(Mode::Sequential)`,
//! the same closures run on the calling thread. Outputs are always
//! collected in index order, so results do not depend on the mode.

use std::sync::atomic::{AtomicBool, Ordering};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Sequential,
    Parallel,
}

static FORCE_SEQUENTIAL: AtomicBool = AtomicBool::new(false);

/// Select the execution mode for the whole process.
///
/// `Mode::Parallel` has no effect when the crate is built without the
/// `parallel` feature.
pub fn set_mode(mode: Mode) {
    FORCE_SEQUENTIAL.store(mode == Mode::Sequential, Ordering::SeqCst);
}

/// The mode work is currently dispatched with.
pub fn mode() -> Mode {
    if cfg!(feature = "parallel") && !FORCE_SEQUENTIAL.load(Ordering::SeqCst) {
        Mode::Parallel
    } else {
        Mode::Sequential
    }
}

/// Evaluate `f(0), …, f(n-1)` and collect the results in index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if mode() == Mode::Parallel {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    (0..n).map(f).collect()
}

/// Run `f` inside a pool of `workers` threads (parallel builds only).
pub fn with_workers<T, F>(workers: Option<usize>, f: F) -> T
where
    T: Send,
    F: FnOnce() -> T + Send,
{
    #[cfg(feature = "parallel")]
    {
        if let Some(w) = workers.filter(|&w| w > 0) {
            if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(w).build() {
                return pool.install(f);
            }
        }
    }
    let _ = workers;
    f()
}
