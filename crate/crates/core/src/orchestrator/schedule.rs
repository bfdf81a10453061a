//! Timing rules: ping-slot alignment and duty-cycle pacing.

use serde::{Deserialize, Serialize};

use crate::codec::FecRate;

/// Slack for floating-point slot arithmetic.
const SLOT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LorawanClass {
    B,
    C,
}

/// Earliest downlink start at or after `candidate`. Class B starts on ping
/// slots at integer multiples of `ping_period`.
pub fn downlink_start_time(candidate: f64, class: LorawanClass, ping_period: f64) -> f64 {
    match class {
        LorawanClass::C => candidate,
        LorawanClass::B => slot_ceil(candidate, ping_period) as f64 * ping_period,
    }
}

fn slot_ceil(t: f64, period: f64) -> i64 {
    (t / period - SLOT_EPS).ceil() as i64
}

/// Minimum spacing between update transmissions, `Δ = k·l / (r·DC) · 100`,
/// rounded up to whole ping periods for class B.
pub fn round_interval(k: usize, airtime: f64, rate: FecRate, duty_cycle_percent: f64, class: LorawanClass, ping_period: f64) -> f64 {
    let delta = k as f64 * airtime * rate.den() as f64 / (rate.num() as f64 * duty_cycle_percent) * 100.0;
    match class {
        LorawanClass::C => delta,
        LorawanClass::B => slot_ceil(delta, ping_period) as f64 * ping_period,
    }
}

/// Earliest time a device may start its next update after transmitting for
/// `airtime` seconds from `start`.
pub fn next_allowed(start: f64, airtime: f64, duty_cycle_percent: f64) -> f64 {
    start + airtime * 100.0 / duty_cycle_percent
}
