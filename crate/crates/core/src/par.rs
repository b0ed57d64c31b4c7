//! Node-parallel maps with a sequential fallback.
//!
//! With the `parallel` feature the maps run on the rayon pool; the runtime
//! switch [`set_parallel`] forces the sequential path so both can be
//! compared inside a single binary (see the criterion benches).

use std::sync::atomic::{AtomicBool, Ordering};

static ENABLED: AtomicBool = AtomicBool::new(true);

/// Enables or disables the parallel path at runtime. Has no effect without
/// the `parallel` feature.
pub fn set_parallel(on: bool) {
    ENABLED.store(on, Ordering::Relaxed);
}

pub fn parallel_enabled() -> bool {
    cfg!(feature = "parallel") && ENABLED.load(Ordering::Relaxed)
}

/// Caps the global worker count. Only the first call takes effect.
pub fn init_threads(n: usize) {
    #[cfg(feature = "parallel")]
    {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = n;
}

/// `(0..n).map(f).collect()`, in index order.
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel_enabled() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    (0..n).map(f).collect()
}

/// Fallible variant of [`map_range`]; returns the error of the lowest failing index.
pub fn try_map_range<T, E, F>(n: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    let results = map_range(n, f);
    results.into_iter().collect()
}

/// Deterministic reduction: values are produced in parallel, folded in index order.
pub fn fold_range<T, A, F, G>(n: usize, init: A, f: F, mut g: G) -> A
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
    G: FnMut(A, T) -> A,
{
    map_range(n, f).into_iter().fold(init, |acc, x| g(acc, x))
}
