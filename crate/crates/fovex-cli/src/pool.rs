//! Fixed-size worker pool over indexed items. Workers pull indices from a
//! shared counter, so scheduling is dynamic, but results come back in item
//! order and each worker owns a private context (typically its predictor
//! session), so the output is a pure function of the inputs regardless of
//! worker count or interleaving.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

/// Runs `work` on every index in `0..count` using up to `workers` threads.
/// `init(worker_id)` builds one context per worker inside its own thread, so
/// the context type does not need to be `Send`.
pub fn run_indexed<C, T, I, W>(count: usize, workers: usize, init: I, work: W) -> Vec<T>
where
    T: Send,
    I: Fn(usize) -> C + Sync,
    W: Fn(&mut C, usize) -> T + Sync,
{
    if count == 0 {
        return Vec::new();
    }
    let workers = workers.clamp(1, count);
    let next = AtomicUsize::new(0);
    let gathered: Mutex<Vec<(usize, T)>> = Mutex::new(Vec::with_capacity(count));
    std::thread::scope(|scope| {
        for worker_id in 0..workers {
            let next = &next;
            let gathered = &gathered;
            let init = &init;
            let work = &work;
            scope.spawn(move || {
                let mut ctx = init(worker_id);
                loop {
                    let index = next.fetch_add(1, Ordering::SeqCst);
                    if index >= count {
                        break;
                    }
                    let item = work(&mut ctx, index);
                    gathered.lock().unwrap().push((index, item));
                }
            });
        }
    });
    let mut pairs = gathered.into_inner().unwrap();
    pairs.sort_by_key(|(index, _)| *index);
    pairs.into_iter().map(|(_, item)| item).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;
    use std::sync::atomic::AtomicU64;

    #[test]
    fn results_come_back_in_index_order_for_any_worker_count() {
        let reference: Vec<usize> = (0..100).map(|i| i * i).collect();
        for workers in [1, 4, 16, 200] {
            let got = run_indexed(100, workers, |_| (), |_, i| i * i);
            assert_eq!(got, reference, "workers={workers}");
        }
    }

    #[test]
    fn every_index_is_visited_exactly_once() {
        let got = run_indexed(257, 7, |_| (), |_, i| i);
        let distinct: HashSet<usize> = got.iter().copied().collect();
        assert_eq!(got.len(), 257);
        assert_eq!(distinct.len(), 257);
    }

    #[test]
    fn init_runs_once_per_worker_and_contexts_are_private() {
        let inits = AtomicU64::new(0);
        let tagged = run_indexed(
            50,
            4,
            |worker_id| {
                inits.fetch_add(1, Ordering::SeqCst);
                worker_id
            },
            |worker_id: &mut usize, i| (*worker_id, i),
        );
        assert_eq!(inits.load(Ordering::SeqCst), 4);
        let ids: HashSet<usize> = tagged.iter().map(|(w, _)| *w).collect();
        assert!(ids.len() <= 4);
        let indices: Vec<usize> = tagged.iter().map(|(_, i)| *i).collect();
        assert_eq!(indices, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn zero_items_yield_an_empty_result() {
        let got: Vec<u32> = run_indexed(0, 4, |_| (), |_, _| 1);
        assert!(got.is_empty());
    }

    #[test]
    fn worker_count_is_clamped_to_item_count() {
        let inits = AtomicU64::new(0);
        run_indexed(
            3,
            64,
            |_| {
                inits.fetch_add(1, Ordering::SeqCst);
            },
            |_, i| i,
        );
        assert_eq!(inits.load(Ordering::SeqCst), 3);
    }
}
