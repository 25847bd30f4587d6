//! Order-preserving batch maps.
//!
//! The engine fans its per-box bounding work out to worker threads when the
//! `parallel` feature is enabled. Because the map preserves input order and
//! every branch's tie-breaking randomness is derived from the branch itself
//! (never from scheduling), results are bitwise identical with 1 or N
//! workers, and identical to the sequential build.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Sequential reference implementation.
pub fn map_serial<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    items.iter().map(f).collect()
}

/// Work-stealing parallel map; collection restores input order.
#[cfg(feature = "parallel")]
pub fn map_parallel<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    items.par_iter().map(f).collect()
}

/// The map the engine actually calls: parallel when compiled in.
pub fn map_batch<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    #[cfg(feature = "parallel")]
    {
        map_parallel(items, f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_serial(items, f)
    }
}
