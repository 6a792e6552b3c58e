//! Execution strategy for the data-parallel hot paths (nonce search, chain
//! validation, simulation sweeps).
//!
//! With the `parallel` feature (on by default) work is spread over the rayon
//! pool; without it every path runs sequentially. Both strategies produce
//! identical results: parallel searches always return the lowest matching
//! index.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    #[cfg(feature = "parallel")]
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        #[cfg(feature = "parallel")]
        {
            Exec::Parallel
        }
        #[cfg(not(feature = "parallel"))]
        {
            Exec::Sequential
        }
    }
}

impl Exec {
    /// First index in `0..len` for which `f` yields `Some`, with its value.
    pub fn find_map_first<T, F>(self, len: usize, f: F) -> Option<(usize, T)>
    where
        T: Send,
        F: Fn(usize) -> Option<T> + Sync + Send,
    {
        match self {
            Exec::Sequential => (0..len).find_map(|i| f(i).map(|v| (i, v))),
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                (0..len)
                    .into_par_iter()
                    .find_map_first(|i| f(i).map(|v| (i, v)))
            }
        }
    }

    /// First value in `start..end` satisfying `pred`.
    pub fn find_first_u64<F>(self, start: u64, end: u64, pred: F) -> Option<u64>
    where
        F: Fn(u64) -> bool + Sync + Send,
    {
        match self {
            Exec::Sequential => (start..end).find(|&n| pred(n)),
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                (start..end).into_par_iter().find_first(|&n| pred(n))
            }
        }
    }

    /// Map every item, preserving order.
    pub fn map<I, T, F>(self, items: &[I], f: F) -> Vec<T>
    where
        I: Sync,
        T: Send,
        F: Fn(&I) -> T + Sync + Send,
    {
        match self {
            Exec::Sequential => items.iter().map(f).collect(),
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                items.par_iter().map(f).collect()
            }
        }
    }

    /// Number of candidates a single search round should cover.
    pub(crate) fn batch_width(self) -> u64 {
        match self {
            Exec::Sequential => 1 << 12,
            #[cfg(feature = "parallel")]
            Exec::Parallel => (rayon::current_num_threads() as u64).max(1) << 12,
        }
    }
}
