//! Fixed-size worker pool with input-ordered results.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

/// Runs `task` over `items` on `workers` threads and returns the results in
/// input order.
///
/// Each worker owns a state built by `init(worker_index)` (an open model
/// runner, a scratch buffer) and pulls the next unclaimed index until the
/// list is exhausted. Results are merged by index, so output never depends on
/// scheduling. With one worker everything runs on the calling thread.
pub fn parallel_map_with<T, S, R>(
    items: &[T],
    workers: usize,
    init: impl Fn(usize) -> S + Sync,
    task: impl Fn(&mut S, usize, &T) -> R + Sync,
) -> Vec<R>
where
    T: Sync,
    R: Send,
{
    let workers = workers.max(1).min(items.len().max(1));
    if workers == 1 {
        let mut state = init(0);
        return items.iter().enumerate().map(|(i, it)| task(&mut state, i, it)).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for w in 0..workers {
            let (next, slots, init, task) = (&next, &slots, &init, &task);
            scope.spawn(move || {
                let mut state = init(w);
                loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= items.len() {
                        break;
                    }
                    let r = task(&mut state, i, &items[i]);
                    slots.lock().expect("result slots poisoned")[i] = Some(r);
                }
            });
        }
    });
    slots
        .into_inner()
        .expect("result slots poisoned")
        .into_iter()
        .map(|r| r.expect("every index is claimed exactly once"))
        .collect()
}

/// [`parallel_map_with`] without per-worker state.
pub fn parallel_map<T, R>(items: &[T], workers: usize, task: impl Fn(usize, &T) -> R + Sync) -> Vec<R>
where
    T: Sync,
    R: Send,
{
    parallel_map_with(items, workers, |_| (), |_, i, it| task(i, it))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use std::time::Duration;

    #[test]
    fn identity_for_any_worker_count() {
        let items: Vec<u32> = (0..50).collect();
        for w in [1, 2, 4, 7, 200] {
            assert_eq!(parallel_map(&items, w, |_, &x| x), items);
        }
    }

    #[test]
    fn order_survives_random_durations() {
        let items: Vec<u64> = (0..24).collect();
        let out = parallel_map(&items, 4, |i, &x| {
            let ms = crate::rng::stream(x, &[]).random_range(0..5);
            std::thread::sleep(Duration::from_millis(ms));
            (i as u64, x * 3)
        });
        assert_eq!(out, items.iter().map(|&x| (x, x * 3)).collect::<Vec<_>>());
    }

    #[test]
    fn empty_input() {
        let out: Vec<u8> = parallel_map(&[] as &[u8], 4, |_, &x| x);
        assert!(out.is_empty());
    }

    #[test]
    fn per_worker_state_is_private() {
        let items = vec![1u32; 40];
        let out = parallel_map_with(&items, 3, |_| 0u32, |seen, _, &x| {
            *seen += x;
            *seen >= 1
        });
        assert!(out.into_iter().all(|b| b));
    }

    #[test]
    fn errors_are_collected_per_item() {
        let items: Vec<i32> = (0..10).collect();
        let out = parallel_map(&items, 3, |_, &x| if x % 3 == 0 { Err(x) } else { Ok(x) });
        let errs: Vec<i32> = out.iter().filter_map(|r| r.as_ref().err().copied()).collect();
        assert_eq!(errs, vec![0, 3, 6, 9]);
    }
}
