//! Daily peer-to-peer send cap for ordinary lines.

use std::collections::{BTreeMap, BTreeSet};

use crate::crypto::Digest;

/// Counts sends per (line, day window) and flags a line the first time a
/// window exceeds the cap.
#[derive(Clone, Debug)]
pub struct RateDetector {
    cap: u64,
    ticks_per_day: u64,
    counts: BTreeMap<(Digest, u64), u64>,
    flagged: BTreeSet<(Digest, u64)>,
}

impl RateDetector {
    pub fn new(cap: u64, ticks_per_day: u64) -> Self {
        RateDetector {
            cap,
            ticks_per_day: ticks_per_day.max(1),
            counts: BTreeMap::new(),
            flagged: BTreeSet::new(),
        }
    }

    pub fn day_of(&self, tick: u64) -> u64 {
        tick / self.ticks_per_day
    }

    /// Record `n` sends at `tick`. Returns true when this pushes the line over
    /// the cap for the day (once per line and day).
    pub fn record(&mut self, line: Digest, tick: u64, n: u64) -> bool {
        let day = self.day_of(tick);
        let c = self.counts.entry((line, day)).or_default();
        *c += n;
        *c > self.cap && self.flagged.insert((line, day))
    }

    pub fn count(&self, line: &Digest, day: u64) -> u64 {
        self.counts.get(&(*line, day)).copied().unwrap_or(0)
    }

    pub fn is_flagged(&self, line: &Digest, day: u64) -> bool {
        self.flagged.contains(&(*line, day))
    }
}
