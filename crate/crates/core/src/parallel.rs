//! Order-preserving parallel map over independent read-only tasks.
//!
//! Workers claim indices from a shared counter, so faster workers pick up
//! more items. Results land in their input slot, which makes the output
//! independent of scheduling. After a failure no new index is claimed;
//! tasks already running finish, and the error with the lowest input index
//! is returned. Because indices are claimed in increasing order, every item
//! before that index has run, so the reported error is the same one a
//! sequential run would hit first.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

pub fn parallel_map<I, T, E, F>(items: &[I], workers: usize, task: F) -> Result<Vec<T>, E>
where
    I: Sync,
    T: Send,
    E: Send,
    F: Fn(&I) -> Result<T, E> + Sync,
{
    let workers = workers.max(1).min(items.len().max(1));
    if workers == 1 {
        return items.iter().map(&task).collect();
    }

    let next = AtomicUsize::new(0);
    let failed = AtomicBool::new(false);
    let slots: Vec<Mutex<Option<Result<T, E>>>> = items.iter().map(|_| Mutex::new(None)).collect();

    thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if failed.load(Ordering::Acquire) {
                    break;
                }
                let idx = next.fetch_add(1, Ordering::AcqRel);
                if idx >= items.len() {
                    break;
                }
                let outcome = task(&items[idx]);
                if outcome.is_err() {
                    failed.store(true, Ordering::Release);
                }
                *slots[idx].lock().expect("result slot poisoned") = Some(outcome);
            });
        }
    });

    let mut out = Vec::with_capacity(items.len());
    for slot in slots {
        match slot.into_inner().expect("result slot poisoned") {
            Some(Ok(v)) => out.push(v),
            Some(Err(e)) => return Err(e),
            // Unclaimed slots only exist past a failure, which returns above.
            None => unreachable!("unclaimed slot without a preceding failure"),
        }
    }
    Ok(out)
}
