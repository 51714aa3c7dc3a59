//! Execution policy for independent work items (trajectories, shots).
//!
//! Results always come back in input order, so reports do not depend on
//! scheduling. Without the `parallel` feature every policy runs sequentially.

use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecPolicy {
    Sequential,
    Parallel,
}

impl Default for ExecPolicy {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            ExecPolicy::Parallel
        } else {
            ExecPolicy::Sequential
        }
    }
}

impl ExecPolicy {
    /// Ordered map over `items`.
    pub fn map<T, R, F>(self, items: Vec<T>, f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(T) -> R + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            ExecPolicy::Parallel => {
                use rayon::prelude::*;
                items.into_par_iter().map(f).collect()
            }
            _ => items.into_iter().map(f).collect(),
        }
    }
}

/// Sizes the global worker pool; only the first call has an effect.
pub fn set_threads(n: usize) -> bool {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_ok()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = n;
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policies_agree_and_keep_order() {
        let items: Vec<u64> = (0..1000).collect();
        let f = |x: u64| x.wrapping_mul(0x9e37_79b9_7f4a_7c15) >> 7;
        let a = ExecPolicy::Sequential.map(items.clone(), f);
        let b = ExecPolicy::Parallel.map(items, f);
        assert_eq!(a, b);
    }
}
