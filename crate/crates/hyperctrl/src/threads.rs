//! Rayon-backed column evaluation.

use hyperctrl_core::parallel::ColumnMap;
use rayon::prelude::*;

use crate::CliError;

/// Evaluates columns on a private pool; results come back in index order, so
/// output does not depend on the thread count.
pub struct RayonColumns {
    pool: rayon::ThreadPool,
}

impl RayonColumns {
    /// `threads = 0` lets rayon pick.
    pub fn new(threads: usize) -> Result<Self, CliError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| CliError::Config(format!("cannot start thread pool: {e}")))?;
        Ok(Self { pool })
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl ColumnMap for RayonColumns {
    fn map_columns(&self, count: usize, f: &(dyn Fn(usize) -> Vec<f64> + Sync)) -> Vec<Vec<f64>> {
        self.pool.install(|| (0..count).into_par_iter().map(f).collect())
    }
}
