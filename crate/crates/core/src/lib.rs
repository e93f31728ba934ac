//! Numerical toolkit for nonlocal double-phase operators with kernels
//! comparable to fractional Gagliardo kernels.

pub mod constants;
pub mod error;
pub mod grid;
pub mod inequalities;
pub mod io;
pub mod operator;
pub mod params;
pub mod quad;
pub mod reglab;
pub mod scaling;
pub mod solver;

pub use error::{Error, Result};

/// Maps `f` over `0..count`, in parallel when the `parallel` feature is on.
pub(crate) fn par_map<T: Send>(count: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..count).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..count).map(f).collect()
    }
}
