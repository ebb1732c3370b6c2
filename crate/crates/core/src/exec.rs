//! Order-preserving fan-out over independent work items.
//!
//! With the `parallel` feature (default) work runs on a bounded rayon pool;
//! without it, or with `Executor::sequential()`, items run in order on the
//! calling thread. Output order always matches input order.

#[derive(Debug)]
pub struct Executor {
    #[cfg(feature = "parallel")]
    pool: Option<rayon::ThreadPool>,
    threads: usize,
}

impl Executor {
    pub fn sequential() -> Self {
        Self {
            #[cfg(feature = "parallel")]
            pool: None,
            threads: 1,
        }
    }

    /// At most `threads` concurrent workers. Falls back to sequential when
    /// `threads <= 1` or the crate is built without `parallel`.
    pub fn with_threads(threads: usize) -> Self {
        #[cfg(feature = "parallel")]
        {
            if threads > 1 {
                match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
                    Ok(pool) => {
                        return Self {
                            pool: Some(pool),
                            threads,
                        }
                    }
                    Err(e) => log::warn!("thread pool unavailable, running sequentially: {e}"),
                }
            }
        }
        let _ = threads;
        Self::sequential()
    }

    pub fn threads(&self) -> usize {
        self.threads
    }

    pub fn is_parallel(&self) -> bool {
        self.threads > 1
    }

    pub fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            use rayon::prelude::*;
            return pool.install(|| items.par_iter().map(&f).collect());
        }
        items.iter().map(f).collect()
    }
}

impl Default for Executor {
    fn default() -> Self {
        Self::sequential()
    }
}
