//! Counting semaphore bounding concurrent requests to external services.

use std::sync::{Condvar, Mutex};

pub(crate) struct Limiter {
    max: usize,
    in_flight: Mutex<usize>,
    released: Condvar,
}

impl Limiter {
    /// `max` of zero means "one at a time" rather than "never".
    pub(crate) fn new(max: usize) -> Self {
        Limiter {
            max: max.max(1),
            in_flight: Mutex::new(0),
            released: Condvar::new(),
        }
    }

    pub(crate) fn acquire(&self) -> LimiterGuard<'_> {
        let mut count = self
            .in_flight
            .lock()
            .unwrap_or_else(|poisoned| poisoned.into_inner());
        while *count >= self.max {
            count = self
                .released
                .wait(count)
                .unwrap_or_else(|poisoned| poisoned.into_inner());
        }
        *count += 1;
        LimiterGuard { limiter: self }
    }
}

pub(crate) struct LimiterGuard<'a> {
    limiter: &'a Limiter,
}

impl Drop for LimiterGuard<'_> {
    fn drop(&mut self) {
        let mut count = self
            .limiter
            .in_flight
            .lock()
            .unwrap_or_else(|poisoned| poisoned.into_inner());
        *count -= 1;
        self.limiter.released.notify_one();
    }
}
