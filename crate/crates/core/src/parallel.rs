//! Data-parallel map with a sequential fallback.
//!
//! Results always come back in input order and reductions happen
//! sequentially afterwards, so numbers do not depend on the thread count or
//! on whether the `parallel` feature is enabled.

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Uses rayon when the `parallel` feature is enabled, otherwise runs
    /// sequentially.
    #[default]
    Parallel,
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// `f(i, &items[i])` for every item, collected in order.
pub fn map_indexed<T, R, F>(exec: Execution, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let _ = exec;
    items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
}

/// Like [`map_indexed`] but stops at the first error (in input order).
pub fn try_map_indexed<T, R, E, F>(exec: Execution, items: &[T], f: F) -> Result<Vec<R>, E>
where
    T: Sync,
    R: Send,
    E: Send,
    F: Fn(usize, &T) -> Result<R, E> + Sync + Send,
{
    map_indexed(exec, items, f).into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_modes_agree_and_keep_order() {
        let xs: Vec<u64> = (0..1000).collect();
        let seq = map_indexed(Execution::Sequential, &xs, |i, x| x * x + i as u64);
        let par = map_indexed(Execution::Parallel, &xs, |i, x| x * x + i as u64);
        assert_eq!(seq, par);
        assert_eq!(seq[10], 110);
    }

    #[test]
    fn first_error_in_order_wins() {
        let xs = [1, 2, 3, 4];
        let r: Result<Vec<i32>, String> = try_map_indexed(Execution::Parallel, &xs, |_, &x| {
            if x >= 3 {
                Err(format!("bad {x}"))
            } else {
                Ok(x)
            }
        });
        assert_eq!(r, Err("bad 3".into()));
    }
}
