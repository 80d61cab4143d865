//! Data-parallel execution with a sequential fallback.
//!
//! Every parallel map in the crate goes through [`Exec`], so output order
//! (and therefore every downstream floating-point reduction) is the same
//! whichever mode runs it. Building without the `parallel` feature removes
//! rayon entirely and [`Exec::Parallel`] degrades to the sequential path.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

impl Exec {
    /// `Parallel` when the crate was built with rayon, `Sequential` otherwise.
    pub fn best() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }

    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }

    /// Order-preserving map over a slice.
    pub fn map<T, U, F>(self, items: &[T], f: F) -> Vec<U>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> U + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Exec::Parallel {
            use rayon::prelude::*;
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    /// Order-preserving map over `0..n`.
    pub fn map_range<U, F>(self, n: usize, f: F) -> Vec<U>
    where
        U: Send,
        F: Fn(usize) -> U + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Exec::Parallel {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Like [`Exec::map`] but short-circuits on the first error in index order.
    pub fn try_map<T, U, E, F>(self, items: &[T], f: F) -> Result<Vec<U>, E>
    where
        T: Sync,
        U: Send,
        E: Send,
        F: Fn(&T) -> Result<U, E> + Sync + Send,
    {
        self.map(items, f).into_iter().collect()
    }
}

/// Caps the global rayon pool. No-op without the `parallel` feature.
pub fn set_thread_count(threads: usize) {
    #[cfg(feature = "parallel")]
    {
        if threads > 0 {
            // the global pool can only be configured once; later calls are ignored
            let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
        }
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
}
