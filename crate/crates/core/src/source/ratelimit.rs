use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

/// Token bucket of capacity one: callers are spaced `1 / qps` apart, so any
/// one-second window sees at most `ceil(qps) + 1` acquisitions.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    next_slot: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn new(qps: f64) -> Self {
        assert!(qps > 0.0 && qps.is_finite(), "qps must be positive");
        RateLimiter {
            interval: Duration::from_secs_f64(1.0 / qps),
            next_slot: Mutex::new(None),
        }
    }

    /// Blocks until the caller may issue one call.
    pub fn acquire(&self) {
        let wait = {
            let mut next = self.next_slot.lock().unwrap_or_else(|e| e.into_inner());
            let now = Instant::now();
            let slot = match *next {
                Some(t) if t > now => t,
                _ => now,
            };
            *next = Some(slot + self.interval);
            slot - now
        };
        if !wait.is_zero() {
            thread::sleep(wait);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    #[test]
    fn no_one_second_window_exceeds_bound() {
        let qps = 20.0;
        let limiter = Arc::new(RateLimiter::new(qps));
        let stamps = Arc::new(Mutex::new(Vec::new()));
        let start = Instant::now();
        thread::scope(|s| {
            for _ in 0..4 {
                let limiter = limiter.clone();
                let stamps = stamps.clone();
                s.spawn(move || {
                    for _ in 0..8 {
                        limiter.acquire();
                        stamps.lock().unwrap().push(start.elapsed());
                    }
                });
            }
        });
        let mut t = stamps.lock().unwrap().clone();
        t.sort();
        let bound = qps.ceil() as usize + 1;
        for (i, &a) in t.iter().enumerate() {
            let in_window = t[i..]
                .iter()
                .take_while(|&&b| b < a + Duration::from_secs(1))
                .count();
            assert!(in_window <= bound, "{in_window} calls within 1s of {a:?}");
        }
    }
}
