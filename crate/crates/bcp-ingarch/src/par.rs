//! Data-parallel map over independently seeded replicas.
//!
//! With the `parallel` feature the map runs on rayon; without it the same
//! code runs sequentially. Results are collected in input order either way,
//! so replica-level reductions are independent of the parallelism degree.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `0..n`, collecting results in index order.
pub fn indexed_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Configure the global thread pool from the `BCP_THREADS` env var.
/// No-op when the variable is absent, unparsable, or the pool is already
/// initialized; also a no-op in sequential builds.
pub fn init_threads_from_env() {
    #[cfg(feature = "parallel")]
    {
        if let Ok(v) = std::env::var("BCP_THREADS") {
            if let Ok(n) = v.trim().parse::<usize>() {
                if n >= 1 {
                    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
                }
            }
        }
    }
}

/// Derive a replica seed from a master seed and replica index.
///
/// SplitMix64 finalizer over `master ^ (index+1) * odd-constant`: replica
/// streams are decorrelated and depend only on (master, index), never on
/// scheduling.
pub fn replica_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ (index.wrapping_add(1)).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
