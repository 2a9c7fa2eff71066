use serde::{Deserialize, Serialize};

use super::mutation::{MutationRate, RateBounds};

/// Success counting over non-overlapping windows of `window` generations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RechenbergState {
    pub window: usize,
    pub successes: usize,
    pub generations_in_window: usize,
    /// Decrease factor in (0, 1); the increase factor is `1 / tau`.
    pub tau: f64,
}

impl RechenbergState {
    pub fn new(window: usize, tau: f64) -> Self {
        Self {
            window,
            successes: 0,
            generations_in_window: 0,
            tau,
        }
    }

    pub fn is_consistent(&self) -> bool {
        self.successes <= self.generations_in_window && self.generations_in_window <= self.window
    }
}

/// Records one generation. When the window fills, the rate is multiplied by
/// `1/tau` if at least a fifth of the window succeeded and by `tau`
/// otherwise, clamped to `bounds`, and both counters restart.
pub fn rechenberg_update(
    state: RechenbergState,
    rate: MutationRate,
    was_success: bool,
    bounds: RateBounds,
) -> (RechenbergState, MutationRate) {
    let mut next = state;
    next.generations_in_window += 1;
    if was_success {
        next.successes += 1;
    }
    if next.generations_in_window < next.window {
        return (next, rate);
    }
    // g/G >= 1/5 without floating point: 5g >= G
    let factor = if 5 * next.successes >= next.window {
        1.0 / next.tau
    } else {
        next.tau
    };
    next.successes = 0;
    next.generations_in_window = 0;
    (next, rate.scaled(factor).clamp(bounds))
}
