//! Token buckets for DNS response-rate-limiting and TCP-SYN limits.
//!
//! Genuine packets see exact bucket arithmetic (linear refill, capped at the
//! burst size). Registered floods are applied analytically: the flooded
//! intervals drain the bucket at the flood rate, and a genuine packet that
//! arrives while the bucket is exhausted under a flood of rate `a` is served
//! with probability `r / (1 + a + c)` where `r` is the refill rate and `c`
//! the client's own recent packet rate — the served share of a client
//! competing with `a` spoofed packets per second for `r` tokens per second.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::time::SimTime;

#[derive(Debug, Clone)]
pub struct TokenBucket {
    rate: f64,
    burst: f64,
    tokens: f64,
    last: SimTime,
}

/// A flooded stretch of time: `[start, end)` at `rate_per_s` spoofed packets
/// per second, clipped by the caller to the span being advanced over.
pub type FloodSegment = (SimTime, SimTime, f64);

impl TokenBucket {
    /// Bucket with a one-second burst window: capacity == rate, but at
    /// least one token so a limit of less than 1/s still ever serves.
    pub fn per_second(rate: f64) -> Self {
        Self::new(rate, rate.max(1.0))
    }

    pub fn new(rate: f64, burst: f64) -> Self {
        assert!(rate >= 0.0 && burst >= 1.0);
        TokenBucket {
            rate,
            burst,
            tokens: burst,
            last: SimTime::ZERO,
        }
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn tokens(&self) -> f64 {
        self.tokens
    }

    pub fn set_tokens(&mut self, tokens: f64) {
        self.tokens = tokens.clamp(0.0, self.burst);
    }

    fn refill_span(&mut self, from: SimTime, to: SimTime) {
        let dt = to.since(from).as_secs_f64();
        self.tokens = (self.tokens + self.rate * dt).min(self.burst);
    }

    fn drain_span(&mut self, from: SimTime, to: SimTime, flood_rate: f64) {
        let dt = to.since(from).as_secs_f64();
        self.tokens = (self.tokens + (self.rate - flood_rate) * dt).clamp(0.0, self.burst);
    }

    /// Advances bucket state to `now`, applying any flooded segments that
    /// overlap `[last, now)`. Segments must be ordered and non-overlapping.
    pub fn advance(&mut self, now: SimTime, floods: &[FloodSegment]) {
        let mut cursor = self.last;
        for &(start, end, rate) in floods {
            let start = start.max(cursor);
            let end = end.min(now);
            if start >= end {
                continue;
            }
            self.refill_span(cursor, start);
            self.drain_span(start, end, rate);
            cursor = end;
        }
        if now > cursor {
            self.refill_span(cursor, now);
        }
        self.last = self.last.max(now);
    }

    /// Exact arithmetic path: one genuine packet at `now`, no flood.
    pub fn try_take(&mut self, now: SimTime) -> bool {
        self.advance(now, &[]);
        if self.tokens >= 1.0 {
            self.tokens -= 1.0;
            true
        } else {
            false
        }
    }

    /// Flooded path. `flood_rate` is the active flood rate at `now` (zero
    /// falls back to exact arithmetic), `client_rate` the client's own
    /// recent genuine packet rate competing for the same tokens.
    pub fn try_take_flooded(
        &mut self,
        now: SimTime,
        floods: &[FloodSegment],
        flood_rate: f64,
        client_rate: f64,
        rng: &mut ChaCha8Rng,
    ) -> bool {
        self.advance(now, floods);
        if self.tokens >= 1.0 {
            self.tokens -= 1.0;
            return true;
        }
        if flood_rate <= 0.0 {
            return false;
        }
        let p = (self.rate / (1.0 + flood_rate + client_rate)).min(1.0);
        if rng.gen::<f64>() < p {
            self.tokens = 0.0;
            true
        } else {
            false
        }
    }

    /// Probability that a single competing packet is served at this bucket's
    /// rate under a flood of `flood_rate` — used to keep tiered (slip/drop)
    /// decisions consistent under one uniform draw.
    pub fn flooded_service_probability(&self, flood_rate: f64, client_rate: f64) -> f64 {
        (self.rate / (1.0 + flood_rate + client_rate)).min(1.0)
    }
}
