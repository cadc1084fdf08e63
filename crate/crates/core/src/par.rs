//! Data-parallel execution with a sequential fallback.
//!
//! With the `parallel` feature (default) an [`Executor`] with more than one
//! job runs work on a dedicated rayon pool. Without the feature, or with
//! `jobs == 1`, everything runs on the calling thread. Outputs are always
//! returned in input order.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Executor {
    jobs: usize,
}

impl Default for Executor {
    fn default() -> Self {
        Self::sequential()
    }
}

impl Executor {
    pub fn sequential() -> Self {
        Self { jobs: 1 }
    }

    /// `jobs == 0` means one job per available core.
    pub fn with_jobs(jobs: usize) -> Self {
        let jobs = if jobs == 0 {
            std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
        } else {
            jobs
        };
        Self { jobs }
    }

    pub fn jobs(&self) -> usize {
        self.jobs
    }

    pub fn is_parallel(&self) -> bool {
        cfg!(feature = "parallel") && self.jobs > 1
    }

    /// Maps `f` over `0..n`, preserving order.
    pub fn map_range<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.jobs > 1 {
            use rayon::prelude::*;
            return self.pool().install(|| (0..n).into_par_iter().map(&f).collect());
        }
        (0..n).map(f).collect()
    }

    /// Maps `f` over a slice, preserving order.
    pub fn map<I, T, F>(&self, items: &[I], f: F) -> Vec<T>
    where
        I: Sync,
        T: Send,
        F: Fn(&I) -> T + Sync + Send,
    {
        self.map_range(items.len(), |i| f(&items[i]))
    }

    #[cfg(feature = "parallel")]
    fn pool(&self) -> rayon::ThreadPool {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs)
            .build()
            .expect("failed to build worker pool")
    }
}
