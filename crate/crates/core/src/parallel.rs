//! Column-parallel hook.
//!
//! Gramian and operator assembly evaluate many independent columns. The core
//! crate has no threads, so callers inject a [`ColumnMap`]; the std crate
//! provides a rayon-backed one.

use alloc::vec::Vec;

/// Evaluates `f(0), …, f(count − 1)` and returns the results in index order.
pub trait ColumnMap: Sync {
    fn map_columns(&self, count: usize, f: &(dyn Fn(usize) -> Vec<f64> + Sync)) -> Vec<Vec<f64>>;
}

/// Plain loop.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl ColumnMap for Sequential {
    fn map_columns(&self, count: usize, f: &(dyn Fn(usize) -> Vec<f64> + Sync)) -> Vec<Vec<f64>> {
        (0..count).map(f).collect()
    }
}
