//! A small blocking token bucket for per-provider request pacing.

use std::sync::Mutex;
use std::time::{Duration, Instant};

/// Classic token bucket: `refill_per_sec` tokens accrue continuously up to
/// `capacity`; each request takes one. `acquire` blocks until a token is
/// available, which is all a synchronous worker pool needs.
pub struct TokenBucket {
    capacity: f64,
    refill_per_sec: f64,
    state: Mutex<BucketState>,
}

struct BucketState {
    tokens: f64,
    refreshed: Instant,
}

impl TokenBucket {
    pub fn new(capacity: f64, refill_per_sec: f64) -> TokenBucket {
        let capacity = capacity.max(1.0);
        TokenBucket {
            capacity,
            refill_per_sec: refill_per_sec.max(1e-9),
            state: Mutex::new(BucketState {
                tokens: capacity,
                refreshed: Instant::now(),
            }),
        }
    }

    /// A bucket enforcing `rpm` requests per minute, with about a second's
    /// worth of burst headroom.
    pub fn per_minute(rpm: u32) -> TokenBucket {
        let per_sec = f64::from(rpm.max(1)) / 60.0;
        TokenBucket::new(per_sec.max(1.0), per_sec)
    }

    fn refill(&self, state: &mut BucketState) {
        let now = Instant::now();
        let elapsed = now.duration_since(state.refreshed).as_secs_f64();
        state.tokens = (state.tokens + elapsed * self.refill_per_sec).min(self.capacity);
        state.refreshed = now;
    }

    /// Takes a token if one is available right now.
    pub fn try_acquire(&self) -> bool {
        let mut state = self.state.lock().expect("bucket lock");
        self.refill(&mut state);
        if state.tokens >= 1.0 {
            state.tokens -= 1.0;
            true
        } else {
            false
        }
    }

    /// Blocks until a token is available, then takes it.
    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut state = self.state.lock().expect("bucket lock");
                self.refill(&mut state);
                if state.tokens >= 1.0 {
                    state.tokens -= 1.0;
                    return;
                }
                (1.0 - state.tokens) / self.refill_per_sec
            };
            std::thread::sleep(Duration::from_secs_f64(wait.min(0.25)));
        }
    }
}
