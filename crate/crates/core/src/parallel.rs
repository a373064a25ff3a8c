//! Thread-pool plumbing honoring the `SUBLIM_THREADS` cap.

use std::sync::OnceLock;

use rayon::prelude::*;

/// Node counts below this are cheaper to process serially than to fork.
const PAR_THRESHOLD: usize = 16_384;

static POOL: OnceLock<Option<rayon::ThreadPool>> = OnceLock::new();

/// Thread cap from `SUBLIM_THREADS`; 0 or unset means automatic.
pub fn thread_cap() -> usize {
    std::env::var("SUBLIM_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .unwrap_or(0)
}

fn pool() -> Option<&'static rayon::ThreadPool> {
    POOL.get_or_init(|| {
        let cap = thread_cap();
        if cap == 1 {
            return None;
        }
        let mut builder = rayon::ThreadPoolBuilder::new();
        if cap > 0 {
            builder = builder.num_threads(cap);
        }
        builder.build().ok()
    })
    .as_ref()
}

/// Fill `out[i] = f(i)` for all indices, in parallel when the range is
/// large. Each slot is written independently, so the result is identical
/// regardless of scheduling.
pub(crate) fn fill_indexed<F>(out: &mut [f64], f: F)
where
    F: Fn(usize) -> f64 + Sync,
{
    match pool() {
        Some(p) if out.len() >= PAR_THRESHOLD => {
            p.install(|| {
                out.par_iter_mut()
                    .enumerate()
                    .for_each(|(i, slot)| *slot = f(i));
            });
        }
        _ => {
            for (i, slot) in out.iter_mut().enumerate() {
                *slot = f(i);
            }
        }
    }
}
