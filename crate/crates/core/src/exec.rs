//! Job-level data parallelism.
//!
//! Independent jobs (sampled fields, stability cells, reference solves) are
//! mapped through [`map_jobs`]. With the `parallel` feature the map runs on
//! rayon; without it, or with [`ExecMode::Sequential`], it is a plain
//! iterator. Output order always matches input order, so results never
//! depend on scheduling.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecMode {
    Sequential,
    #[default]
    Parallel,
}

/// True when the crate was built with the `parallel` feature.
pub fn parallel_available() -> bool {
    cfg!(feature = "parallel")
}

pub fn map_jobs<T, R, F>(mode: ExecMode, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match mode {
        #[cfg(feature = "parallel")]
        ExecMode::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        _ => items.iter().map(f).collect(),
    }
}

/// Run `f` on a dedicated pool of `workers` threads. `None` uses the global
/// pool; without the `parallel` feature the closure simply runs inline.
pub fn with_workers<R, F>(workers: Option<usize>, f: F) -> R
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    #[cfg(feature = "parallel")]
    if let Some(n) = workers {
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build() {
            return pool.install(f);
        }
        log::warn!("could not build a {n}-thread pool, using the global pool");
    }
    #[cfg(not(feature = "parallel"))]
    let _ = workers;
    f()
}
