use rayon::prelude::*;

use crate::error::Result;

/// Runs `f(0..n)` on the rayon pool, keeping index order and the first error.
pub fn map_indexed<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}
