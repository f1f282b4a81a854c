//! Command implementations behind the CLI verbs.

pub mod fit_s21;
pub mod fit_tuning;
pub mod generate;
pub mod noise;
pub mod simulate_tuning;
pub mod validate_config;

use std::path::PathBuf;

use crate::config::ToolkitConfig;

/// Shared invocation context assembled from global flags and the config.
pub struct Context {
    pub config: ToolkitConfig,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub workers: usize,
}

/// Derived per-record seed stream (SplitMix64 over the base seed).
pub fn record_seed(base: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Run `jobs` closures over a fixed worker count, preserving result order.
pub fn run_parallel<T, F>(n_jobs: usize, workers: usize, job: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Mutex;

    let workers = workers.clamp(1, 64).min(n_jobs.max(1));
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<T>>> = Mutex::new((0..n_jobs).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::SeqCst);
                if idx >= n_jobs {
                    break;
                }
                let out = job(idx);
                results.lock().expect("results lock")[idx] = Some(out);
            });
        }
    });
    results
        .into_inner()
        .expect("results lock")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect()
}
