use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

#[derive(Debug)]
struct Shared {
    max_in_flight: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
    min_interval: Option<Duration>,
    next_slot: Mutex<Option<Instant>>,
}

/// Bounds concurrent requests and spaces request starts to a per-minute rate.
/// Clones share the same budget.
#[derive(Debug, Clone)]
pub struct Limits {
    shared: Arc<Shared>,
}

/// Held for the duration of one request.
pub struct Permit {
    shared: Arc<Shared>,
}

impl Limits {
    /// `max_in_flight == 0` and `requests_per_minute == None` mean unlimited.
    pub fn new(max_in_flight: usize, requests_per_minute: Option<u32>) -> Self {
        let min_interval = requests_per_minute
            .filter(|&r| r > 0)
            .map(|r| Duration::from_secs_f64(60.0 / r as f64));
        Self {
            shared: Arc::new(Shared {
                max_in_flight,
                in_flight: Mutex::new(0),
                freed: Condvar::new(),
                min_interval,
                next_slot: Mutex::new(None),
            }),
        }
    }

    pub fn unlimited() -> Self {
        Self::new(0, None)
    }

    pub fn acquire(&self) -> Permit {
        let s = &self.shared;
        {
            let mut n = s.in_flight.lock().unwrap();
            while s.max_in_flight > 0 && *n >= s.max_in_flight {
                n = s.freed.wait(n).unwrap();
            }
            *n += 1;
        }
        if let Some(interval) = s.min_interval {
            let wait = {
                let mut slot = s.next_slot.lock().unwrap();
                let now = Instant::now();
                let start = slot.map_or(now, |t| t.max(now));
                *slot = Some(start + interval);
                start - now
            };
            if !wait.is_zero() {
                std::thread::sleep(wait);
            }
        }
        Permit { shared: Arc::clone(s) }
    }

    pub fn in_flight(&self) -> usize {
        *self.shared.in_flight.lock().unwrap()
    }
}

impl Default for Limits {
    fn default() -> Self {
        Self::unlimited()
    }
}

impl Drop for Permit {
    fn drop(&mut self) {
        *self.shared.in_flight.lock().unwrap() -= 1;
        self.shared.freed.notify_one();
    }
}
