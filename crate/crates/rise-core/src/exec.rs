//! Data-parallel map with a sequential fallback.
//!
//! Every hot loop in the crate funnels through [`map_ordered`]: with the
//! default `parallel` feature it fans out over rayon, without it it is a
//! plain iterator map. Output order always matches input order, and callers
//! reduce the collected results sequentially, so metric sums and gradient
//! accumulations are bit-identical whether or not rayon is enabled and
//! regardless of thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `items`, preserving input order in the output.
#[cfg(feature = "parallel")]
pub fn map_ordered<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.par_iter().map(f).collect()
}

/// Map `f` over `items`, preserving input order in the output.
#[cfg(not(feature = "parallel"))]
pub fn map_ordered<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

/// Always-sequential variant, kept for benchmarking the two paths against
/// each other under the default feature set.
pub fn map_ordered_seq<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}
