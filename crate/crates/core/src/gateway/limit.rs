//! Per-minute request and token budgets over a pluggable clock, so budget
//! behavior is testable without waiting on wall time.

use std::sync::{Arc, Condvar, Mutex};
use std::time::Instant;

pub const WINDOW_MS: u64 = 60_000;

/// Time source. `sleep_until_millis` takes an absolute deadline so that a
/// virtual clock can jump straight to it without overshooting when several
/// threads wait on the same window boundary.
pub trait Clock: Send + Sync {
    fn now_millis(&self) -> u64;
    fn sleep_until_millis(&self, deadline: u64);
}

/// Wall-clock implementation anchored at construction.
pub struct SystemClock {
    start: Instant,
}

impl SystemClock {
    pub fn new() -> Self {
        SystemClock {
            start: Instant::now(),
        }
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now_millis(&self) -> u64 {
        self.start.elapsed().as_millis() as u64
    }

    fn sleep_until_millis(&self, deadline: u64) {
        let now = self.now_millis();
        if deadline > now {
            std::thread::sleep(std::time::Duration::from_millis(deadline - now));
        }
    }
}

struct WindowState {
    window_start: u64,
    requests: u32,
    tokens: u64,
}

/// Fixed-window budget enforcement; internally synchronized and shareable
/// across the batch workers.
pub struct RateLimiter {
    clock: Arc<dyn Clock>,
    state: Mutex<WindowState>,
    wakeup: Condvar,
    requests_per_min: Option<u32>,
    tokens_per_min: Option<u64>,
}

impl RateLimiter {
    pub fn new(requests_per_min: Option<u32>, tokens_per_min: Option<u64>) -> Self {
        Self::with_clock(
            requests_per_min,
            tokens_per_min,
            Arc::new(SystemClock::new()),
        )
    }

    pub fn with_clock(
        requests_per_min: Option<u32>,
        tokens_per_min: Option<u64>,
        clock: Arc<dyn Clock>,
    ) -> Self {
        let now = clock.now_millis();
        RateLimiter {
            clock,
            state: Mutex::new(WindowState {
                window_start: now,
                requests: 0,
                tokens: 0,
            }),
            wakeup: Condvar::new(),
            requests_per_min,
            tokens_per_min,
        }
    }

    /// Block until the current window has budget for one more request.
    pub fn acquire(&self) {
        loop {
            let deadline = {
                let mut state = self.state.lock().unwrap();
                let now = self.clock.now_millis();
                if now >= state.window_start + WINDOW_MS {
                    state.window_start = now - (now - state.window_start) % WINDOW_MS;
                    state.requests = 0;
                    state.tokens = 0;
                }
                let over_requests = self
                    .requests_per_min
                    .is_some_and(|limit| state.requests >= limit);
                let over_tokens = self
                    .tokens_per_min
                    .is_some_and(|limit| state.tokens >= limit);
                if !over_requests && !over_tokens {
                    state.requests += 1;
                    return;
                }
                state.window_start + WINDOW_MS
            };
            self.clock.sleep_until_millis(deadline);
            self.wakeup.notify_all();
        }
    }

    /// Count consumed tokens against the current window (reported after the
    /// response arrives, so one request may overshoot the token budget; the
    /// next acquire then waits out the window).
    pub fn record_tokens(&self, tokens: u64) {
        let mut state = self.state.lock().unwrap();
        state.tokens += tokens;
    }
}
