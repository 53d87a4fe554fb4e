use mixflow_core::exec::Executor;
use rayon::prelude::*;

/// Runs jobs on the global rayon pool; results keep input order.
#[derive(Clone, Copy, Debug, Default)]
pub struct Rayon;

impl Executor for Rayon {
    fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync,
    {
        let f = &f;
        items.par_iter().map(f).collect()
    }
}
