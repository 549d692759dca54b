//! Sampling parallelism control.
//!
//! `UQLITE_THREADS` caps worker count; a cap of 1 forces purely sequential
//! execution. Results never depend on the cap: parallel maps collect in index
//! order and every unit of work derives its own seed.

use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;

/// 0 = resolve from environment / available parallelism.
static CAP_OVERRIDE: AtomicUsize = AtomicUsize::new(0);

fn env_cap() -> Option<usize> {
    std::env::var("UQLITE_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n >= 1)
}

pub fn thread_cap() -> usize {
    let overridden = CAP_OVERRIDE.load(Ordering::Relaxed);
    if overridden >= 1 {
        return overridden;
    }
    if let Some(n) = env_cap() {
        return n;
    }
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

/// Overrides the cap in-process (0 restores environment resolution).
pub fn set_thread_cap(n: usize) {
    CAP_OVERRIDE.store(n, Ordering::Relaxed);
}

/// Maps `f` over `0..n`, in parallel when the cap allows, always returning
/// results in index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    if thread_cap() <= 1 || n <= 1 {
        (0..n).map(f).collect()
    } else {
        (0..n).into_par_iter().map(f).collect()
    }
}
