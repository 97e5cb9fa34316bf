//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (on by default) `Execution::Parallel` runs on the
//! rayon global pool. Without it every call is sequential.

/// How a batch of independent tasks is scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// Whether this build can actually run tasks in parallel.
    pub fn parallel_available() -> bool {
        cfg!(feature = "parallel")
    }

    /// Maps `f` over `0..n`, preserving index order in the output.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => {
                use rayon::prelude::*;
                (0..n).into_par_iter().map(f).collect()
            }
            _ => (0..n).map(f).collect(),
        }
    }

    /// Fallible `map`; on failure returns the error with the smallest index.
    pub fn try_map<T, E, F>(self, n: usize, f: F) -> Result<Vec<T>, (usize, E)>
    where
        T: Send,
        E: Send,
        F: Fn(usize) -> Result<T, E> + Sync + Send,
    {
        if self == Execution::Sequential || !Self::parallel_available() {
            let mut out = Vec::with_capacity(n);
            for i in 0..n {
                out.push(f(i).map_err(|e| (i, e))?);
            }
            return Ok(out);
        }
        let results = self.map(n, f);
        let mut out = Vec::with_capacity(n);
        for (i, r) in results.into_iter().enumerate() {
            out.push(r.map_err(|e| (i, e))?);
        }
        Ok(out)
    }
}
