//! Control of multiclass many-server networks in the Halfin–Whitt regime.

pub mod elimination;
pub mod network;
pub mod plan;
pub mod simplex;
pub mod quasi;
pub mod stability;
pub mod config;
pub mod cost;
pub mod ctmc;
pub mod hjb;
pub mod sim;

/// Maps `f` over `0..n`, in parallel when the `parallel` feature is on.
pub(crate) fn par_map<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}
