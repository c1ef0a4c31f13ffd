//! Request pacing: a sliding 60 s window and a bound on in-flight calls.

use std::collections::VecDeque;
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

pub const WINDOW: Duration = Duration::from_secs(60);

pub trait Clock: Send + Sync {
    /// Time since an arbitrary fixed origin.
    fn now(&self) -> Duration;
    fn sleep(&self, d: Duration);
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default()
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d)
    }
}

/// A clock that only moves when slept on.
#[derive(Debug, Default, Clone)]
pub struct MockClock {
    now: Arc<Mutex<Duration>>,
}

impl MockClock {
    pub fn advance(&self, d: Duration) {
        *self.now.lock().unwrap() += d;
    }
}

impl Clock for MockClock {
    fn now(&self) -> Duration {
        *self.now.lock().unwrap()
    }

    fn sleep(&self, d: Duration) {
        self.advance(d)
    }
}

/// At most `limit` admissions in any window of length [`WINDOW`].
#[derive(Debug)]
pub struct RateLimiter {
    limit: usize,
    admitted: Mutex<VecDeque<Duration>>,
}

impl RateLimiter {
    pub fn per_minute(limit: u32) -> RateLimiter {
        RateLimiter {
            limit: limit.max(1) as usize,
            admitted: Mutex::new(VecDeque::new()),
        }
    }

    /// Block on `clock` until a slot is free, then take it.
    pub fn acquire(&self, clock: &dyn Clock) {
        loop {
            let wait = {
                let mut admitted = self.admitted.lock().unwrap();
                let now = clock.now();
                while admitted.front().is_some_and(|&t| now >= t + WINDOW) {
                    admitted.pop_front();
                }
                if admitted.len() < self.limit {
                    admitted.push_back(now);
                    return;
                }
                admitted[0] + WINDOW - now
            };
            clock.sleep(wait);
        }
    }
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
pub struct InFlight {
    free: Mutex<usize>,
    released: Condvar,
}

pub struct Slot<'a>(&'a InFlight);

impl InFlight {
    pub fn new(max: usize) -> InFlight {
        InFlight {
            free: Mutex::new(max.max(1)),
            released: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Slot<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.released.wait(free).unwrap();
        }
        *free -= 1;
        Slot(self)
    }
}

impl Drop for Slot<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.released.notify_one();
    }
}
