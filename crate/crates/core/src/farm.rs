//! Replica farm: independent seeded jobs on a bounded worker pool.

use rayon::prelude::*;

use crate::rng::{replica_rng, ReplicaRng};

/// Runs `job(i, rng_i)` for `i in 0..replicas`, with `rng_i` derived from
/// `(master_seed, i)`. Results come back in replica order regardless of
/// scheduling, so downstream merges are deterministic.
pub fn run_replicas<T, F>(replicas: usize, threads: usize, master_seed: u64, job: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &mut ReplicaRng) -> T + Sync,
{
    let run = |i: usize| {
        let mut rng = replica_rng(master_seed, i as u64);
        job(i, &mut rng)
    };
    if threads <= 1 {
        return (0..replicas).map(run).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("worker pool");
    pool.install(|| (0..replicas).into_par_iter().map(run).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn thread_count_does_not_change_results() {
        let job = |i: usize, rng: &mut ReplicaRng| (i, rng.gen::<u64>());
        assert_eq!(run_replicas(16, 1, 5, job), run_replicas(16, 3, 5, job));
    }
}
