//! Worker pool with order-preserving maps, so results never depend on
//! scheduling or worker count.

use rayon::prelude::*;

use crate::error::CliError;

/// Caps the worker count regardless of `--workers`.
pub const WORKERS_ENV: &str = "QRM_WORKERS";

pub fn worker_count(requested: Option<usize>) -> usize {
    let available = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let mut n = requested.unwrap_or(available);
    if let Some(cap) = std::env::var(WORKERS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        n = n.min(cap);
    }
    n.max(1)
}

pub struct Workers {
    pool: rayon::ThreadPool,
}

impl Workers {
    pub fn new(count: usize) -> Result<Self, CliError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(count.max(1))
            .build()
            .map_err(|e| CliError::Output(format!("worker pool: {e}")))?;
        Ok(Workers { pool })
    }

    pub fn serial() -> Self {
        Workers::new(1).expect("single-thread pool")
    }

    pub fn count(&self) -> usize {
        self.pool.current_num_threads()
    }

    /// `items.map(f)` in input order.
    pub fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        self.pool.install(|| items.par_iter().map(f).collect())
    }

    /// Like [`Workers::map`], stopping at the first error in input order.
    pub fn try_map<T, R, E, F>(&self, items: &[T], f: F) -> Result<Vec<R>, E>
    where
        T: Sync,
        R: Send,
        E: Send,
        F: Fn(&T) -> Result<R, E> + Sync + Send,
    {
        self.map(items, f).into_iter().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order() {
        let items: Vec<u64> = (0..100).collect();
        let a = Workers::new(4).unwrap().map(&items, |x| x * x);
        let b = Workers::serial().map(&items, |x| x * x);
        assert_eq!(a, b);
        assert_eq!(a[7], 49);
    }

    #[test]
    fn first_error_in_order_wins() {
        let items: Vec<i32> = (0..10).collect();
        let r: Result<Vec<i32>, i32> = Workers::new(3).unwrap().try_map(&items, |&x| if x >= 4 { Err(x) } else { Ok(x) });
        assert_eq!(r, Err(4));
    }
}
