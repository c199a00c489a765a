//! Parallel batches over initial conditions.

use nlcons_core::inclusion::ConsensusSystem;
use nlcons_core::integrator::{integrate, BatchError, IntegratorConfig, Trajectory};
use rayon::prelude::*;

/// Integrates every initial state on the rayon pool. Output order matches
/// `initials`; on failure the error with the lowest index is returned.
pub fn par_batch_integrate(
    sys: &ConsensusSystem,
    initials: &[Vec<f64>],
    cfg: &IntegratorConfig,
) -> Result<Vec<Trajectory>, BatchError> {
    par_map_ordered(initials, |index, x0| {
        integrate(sys, x0, cfg).map_err(|source| BatchError { index, source })
    })
}

/// Order-preserving parallel map that reports the first error by index.
pub fn par_map_ordered<T, U, E, F>(items: &[T], f: F) -> Result<Vec<U>, E>
where
    T: Sync,
    U: Send,
    E: Send,
    F: Fn(usize, &T) -> Result<U, E> + Sync,
{
    let results: Vec<Result<U, E>> = items.par_iter().enumerate().map(|(i, x)| f(i, x)).collect();
    results.into_iter().collect()
}
