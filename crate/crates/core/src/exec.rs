//! Data-parallel helpers with a sequential fallback.
//!
//! Every helper returns results in input order, so callers observe the same
//! output whichever strategy runs. Without the `parallel` feature the
//! parallel strategy silently degrades to the sequential one.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Below this many items the parallel path is not worth the fork/join cost.
const MIN_PARALLEL_ITEMS: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// Whether this strategy will actually fan out for `len` items.
    pub fn fans_out(self, len: usize) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel && len >= MIN_PARALLEL_ITEMS
    }

    /// Maps `f` over `items`, preserving order.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.fans_out(items.len()) {
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    /// Maps `f` over mutable `items`, preserving order.
    pub fn map_mut<T, R, F>(self, items: &mut [T], f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(&mut T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.fans_out(items.len()) {
            return items.par_iter_mut().map(f).collect();
        }
        items.iter_mut().map(f).collect()
    }

    /// Folds chunks of `items` into partial accumulators and combines them
    /// left to right. `combine` must be associative for the result to be
    /// independent of chunking.
    pub fn fold_chunks<T, A, F, C>(
        self,
        items: &[T],
        init: impl Fn() -> A + Sync + Send,
        fold: F,
        combine: C,
    ) -> A
    where
        T: Sync,
        A: Send,
        F: Fn(A, &T) -> A + Sync + Send,
        C: Fn(A, A) -> A + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.fans_out(items.len()) {
            let chunk = items
                .len()
                .div_ceil(rayon::current_num_threads() * 4)
                .max(1);
            let partials: Vec<A> = items
                .par_chunks(chunk)
                .map(|c| c.iter().fold(init(), &fold))
                .collect();
            return partials.into_iter().fold(init(), combine);
        }
        let _ = &combine;
        items.iter().fold(init(), fold)
    }
}
