//! Data-parallel batch helpers.
//!
//! With the `parallel` feature (on by default) [`Mode::Parallel`] runs on the
//! rayon global pool; without it every mode runs sequentially. Parallel maps
//! always collect in input order and reductions happen sequentially afterwards,
//! so both modes produce bit-identical results.

/// Execution strategy for batch loops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    Sequential,
    #[default]
    Parallel,
}

impl Mode {
    /// `Parallel` when the crate was built with rayon support.
    pub fn available() -> Mode {
        if cfg!(feature = "parallel") {
            Mode::Parallel
        } else {
            Mode::Sequential
        }
    }
}

/// Order-preserving map over a slice.
pub fn map_slice<T, R, F>(mode: Mode, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match mode {
        #[cfg(feature = "parallel")]
        Mode::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        _ => items.iter().map(f).collect(),
    }
}

/// Order-preserving map over `0..n`.
pub fn map_range<R, F>(mode: Mode, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    match mode {
        #[cfg(feature = "parallel")]
        Mode::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let xs: Vec<f64> = (0..10_000).map(|i| (i as f64).sin()).collect();
        let a = map_slice(Mode::Sequential, &xs, |x| x * x + 1.0);
        let b = map_slice(Mode::Parallel, &xs, |x| x * x + 1.0);
        assert_eq!(a, b);
        let c = map_range(Mode::Parallel, 257, |i| i * 3);
        assert_eq!(c, (0..257).map(|i| i * 3).collect::<Vec<_>>());
    }
}
