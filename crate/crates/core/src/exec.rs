//! Data-parallel helpers. Work is split into a fixed number of chunks that
//! does not depend on the thread count, and results are reduced in chunk
//! order, so parallel and sequential runs produce bit-identical sums.

/// Upper bound on the number of chunks a batch is split into.
pub const REDUCTION_CHUNKS: usize = 8;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Rayon's current pool. Falls back to sequential without the `parallel`
    /// feature.
    #[default]
    Parallel,
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }

    /// Map `f` over `items`, preserving order.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }
}

/// Execution mode for a requested worker count. One worker runs
/// sequentially; more size the global rayon pool, which can be set once per
/// process.
pub fn with_threads(threads: usize) -> crate::Result<Execution> {
    if threads == 0 {
        return Err(crate::ShopperError::Domain("thread count must be at least 1".into()));
    }
    if threads == 1 {
        return Ok(Execution::Sequential);
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| crate::ShopperError::Domain(format!("thread pool: {e}")))?;
    Ok(Execution::Parallel)
}

/// Contiguous ranges covering `0..len`, at most [`REDUCTION_CHUNKS`] of them.
pub fn chunk_ranges(len: usize) -> Vec<std::ops::Range<usize>> {
    let n = len.clamp(1, REDUCTION_CHUNKS);
    let base = len / n;
    let extra = len % n;
    let mut start = 0;
    (0..n)
        .map(|i| {
            let size = base + usize::from(i < extra);
            let r = start..start + size;
            start += size;
            r
        })
        .collect()
}
