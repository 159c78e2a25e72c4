//! Order-preserving map over a slice, on a bounded rayon pool when the
//! `parallel` feature is enabled and sequentially otherwise.

#[derive(Debug)]
pub struct Executor {
    #[cfg(feature = "parallel")]
    threads: usize,
    #[cfg(feature = "parallel")]
    pool: Option<rayon::ThreadPool>,
}

impl Executor {
    /// `threads <= 1` runs everything on the calling thread.
    pub fn new(threads: usize) -> Self {
        let threads = threads.max(1);
        #[cfg(feature = "parallel")]
        {
            let pool = (threads > 1).then(|| {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build()
                    .expect("thread pool")
            });
            Executor { threads, pool }
        }
        #[cfg(not(feature = "parallel"))]
        {
            let _ = threads;
            Executor {}
        }
    }

    pub fn sequential() -> Self {
        Self::new(1)
    }

    pub fn threads(&self) -> usize {
        #[cfg(feature = "parallel")]
        if self.pool.is_some() {
            return self.threads;
        }
        1
    }

    pub fn is_parallel(&self) -> bool {
        self.threads() > 1
    }

    /// Maps `f` over `items`; results come back in input order.
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

    /// Like [`Executor::map`] but hands `f` whole chunks of at most `size`
    /// items, for callers that batch work such as adapter requests.
    pub fn map_chunks<T, R, F>(&self, items: &[T], size: usize, f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&[T]) -> Vec<R> + Sync + Send,
    {
        let chunks: Vec<&[T]> = items.chunks(size.max(1)).collect();
        self.map(&chunks, |c| f(c)).into_iter().flatten().collect()
    }
}

impl Default for Executor {
    fn default() -> Self {
        Self::sequential()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let items: Vec<u64> = (0..1000).collect();
        for ex in [Executor::sequential(), Executor::new(4)] {
            assert_eq!(
                ex.map(&items, |x| x * x),
                items.iter().map(|x| x * x).collect::<Vec<_>>()
            );
            let sums = ex.map_chunks(&items, 7, |c| c.iter().map(|x| x + 1).collect());
            assert_eq!(sums, (1..=1000).collect::<Vec<u64>>());
        }
    }

    #[test]
    fn sequential_reports_one_thread() {
        assert_eq!(Executor::new(0).threads(), 1);
        assert!(!Executor::sequential().is_parallel());
        #[cfg(feature = "parallel")]
        assert_eq!(Executor::new(3).threads(), 3);
    }
}
