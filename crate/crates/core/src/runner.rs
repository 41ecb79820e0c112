//! Deterministic fan-out for independent runs (sweeps, ablations).
//!
//! Results land in slots indexed by job position, so the output does not
//! depend on the thread count. `GRAPHDISTILL_THREADS` caps parallelism.

pub const THREADS_ENV: &str = "GRAPHDISTILL_THREADS";

pub fn max_threads() -> usize {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        if let Ok(n) = v.trim().parse::<usize>() {
            return n.max(1);
        }
    }
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

pub fn parallel_map<J, T>(jobs: &[J], f: impl Fn(&J) -> T + Sync) -> Vec<T>
where
    J: Sync,
    T: Send,
{
    let threads = max_threads().min(jobs.len()).max(1);
    if threads <= 1 {
        return jobs.iter().map(|j| f(j)).collect();
    }
    let chunk = jobs.len().div_ceil(threads);
    let mut out: Vec<Option<T>> = (0..jobs.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        for (job_chunk, out_chunk) in jobs.chunks(chunk).zip(out.chunks_mut(chunk)) {
            let f = &f;
            scope.spawn(move || {
                for (job, slot) in job_chunk.iter().zip(out_chunk.iter_mut()) {
                    *slot = Some(f(job));
                }
            });
        }
    });
    out.into_iter().map(|s| s.expect("every slot filled")).collect()
}
