use serde::{Deserialize, Serialize};

/// Public consortium parameters, fixed at genesis and readable by every node.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConsortiumParams {
    /// Headers whose confusable-normalized edit distance is at or below this
    /// value are rejected as lookalikes.
    pub lookalike_threshold: u32,
    pub otp_ttl_ticks: u64,
    /// Smallest number list a scrub request may carry.
    pub min_batch_size: u64,
    /// Complaint counts for throttled, degraded and terminated service.
    pub watch_thresholds: [u64; 3],
    pub ticks_per_day: u64,
    /// Promotional delivery hours, `[open, close)` within a day.
    pub delivery_window: (u64, u64),
    pub complaint_window_blocks: u64,
    /// Peer-to-peer sends per line per day above which the line is flagged.
    pub utm_daily_cap: u64,
    /// How far (in blocks) a scrub decision may trail the endorser's tip once
    /// scrubbing is enforced.
    pub max_scrub_lag_blocks: u64,
    /// Proposals stamped at or after this tick must carry fresh scrubs.
    pub enforcement_tick: u64,
    pub metrics_window_ticks: u64,
}

impl Default for ConsortiumParams {
    fn default() -> Self {
        ConsortiumParams {
            lookalike_threshold: 2,
            otp_ttl_ticks: 600,
            min_batch_size: 100,
            watch_thresholds: [10, 25, 50],
            ticks_per_day: 24,
            delivery_window: (9, 21),
            complaint_window_blocks: 2,
            utm_daily_cap: 200,
            max_scrub_lag_blocks: 2,
            enforcement_tick: 0,
            metrics_window_ticks: 24,
        }
    }
}

impl ConsortiumParams {
    pub fn in_delivery_window(&self, tick: u64) -> bool {
        let hour = tick % self.ticks_per_day.max(1);
        hour >= self.delivery_window.0 && hour < self.delivery_window.1
    }

    /// First tick at or after `tick` that falls inside the delivery window.
    pub fn next_window_open(&self, tick: u64) -> u64 {
        if self.in_delivery_window(tick) {
            return tick;
        }
        let day = self.ticks_per_day.max(1);
        let hour = tick % day;
        let start = tick - hour;
        if hour < self.delivery_window.0 {
            start + self.delivery_window.0
        } else {
            start + day + self.delivery_window.0
        }
    }
}
