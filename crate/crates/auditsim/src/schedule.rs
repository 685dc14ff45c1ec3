//! Per-peer task schedules modeling exclusive compute-time commitments.
//!
//! A peer refuses a poll invitation whose vote computation cannot fit in its
//! schedule. Intervals are half-open `[start, end)` so back-to-back tasks
//! never conflict. A schedule may be preloaded with busy intervals recorded
//! from lower simulation layers.

use crate::engine::SimTime;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    VoteComputation,
    ProofConstruction,
    Evaluation,
    Preload,
}

#[derive(Debug, Error, PartialEq)]
pub enum ReserveError {
    #[error("window is empty or inverted")]
    MalformedWindow,
    #[error("window overlaps an existing commitment")]
    Overlap,
}

/// Ordered set of committed compute intervals for one peer.
#[derive(Debug, Default)]
pub struct TaskSchedule {
    /// Busy intervals carried in from lower layers, sorted and disjoint.
    preload: Vec<(SimTime, SimTime)>,
    /// Own commitments: start -> (end, kind).
    own: BTreeMap<SimTime, (SimTime, TaskKind)>,
    /// Append-only record of every own commitment, for layering artifacts.
    log: Vec<(SimTime, SimTime)>,
    preload_busy_ms: i64,
}

impl TaskSchedule {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_preload(mut intervals: Vec<(SimTime, SimTime)>) -> Self {
        intervals.sort();
        let preload_busy_ms = intervals.iter().map(|(s, e)| e.0 - s.0).sum();
        TaskSchedule {
            preload: intervals,
            own: BTreeMap::new(),
            log: Vec::new(),
            preload_busy_ms,
        }
    }

    fn preload_overlaps(&self, start: SimTime, end: SimTime) -> bool {
        // First preload interval with s < end could overlap; check neighbors
        // around the insertion point.
        let idx = self.preload.partition_point(|&(s, _)| s < end);
        if idx > 0 {
            let (_, pe) = self.preload[idx - 1];
            if pe > start {
                return true;
            }
        }
        false
    }

    fn own_overlaps(&self, start: SimTime, end: SimTime) -> bool {
        if let Some((_, &(pe, _))) = self.own.range(..end).next_back() {
            if pe > start {
                return true;
            }
        }
        false
    }

    pub fn is_free(&self, start: SimTime, end: SimTime) -> bool {
        !self.preload_overlaps(start, end) && !self.own_overlaps(start, end)
    }

    /// Commit `[start, end)` if free. Refused reservations leave the
    /// schedule unchanged.
    pub fn try_reserve(
        &mut self,
        start: SimTime,
        end: SimTime,
        kind: TaskKind,
    ) -> Result<(), ReserveError> {
        if end <= start {
            return Err(ReserveError::MalformedWindow);
        }
        if !self.is_free(start, end) {
            return Err(ReserveError::Overlap);
        }
        self.own.insert(start, (end, kind));
        self.log.push((start, end));
        Ok(())
    }

    /// Earliest start `>= after` such that `[start, start+dur)` is free and
    /// ends no later than `deadline`.
    pub fn find_slot(&self, after: SimTime, dur: SimTime, deadline: SimTime) -> Option<SimTime> {
        if dur.0 <= 0 {
            return Some(after);
        }
        let mut candidate = after;
        loop {
            if candidate + dur > deadline {
                return None;
            }
            let end = candidate + dur;
            // Find the latest blocking interval overlapping the candidate.
            let mut next_free = candidate;
            let idx = self.preload.partition_point(|&(s, _)| s < end);
            if idx > 0 {
                let (_, pe) = self.preload[idx - 1];
                if pe > candidate {
                    next_free = next_free.max(pe);
                }
            }
            if let Some((_, &(oe, _))) = self.own.range(..end).next_back() {
                if oe > candidate {
                    next_free = next_free.max(oe);
                }
            }
            if next_free == candidate {
                return Some(candidate);
            }
            candidate = next_free;
        }
    }

    /// Total committed time including preload, in milliseconds.
    pub fn busy_ms(&self) -> i64 {
        self.preload_busy_ms + self.log.iter().map(|(s, e)| e.0 - s.0).sum::<i64>()
    }

    /// Own commitments merged with the existing preload into one sorted,
    /// disjoint interval set, for the next layer's preload.
    pub fn merged_busy_intervals(&self) -> Vec<(SimTime, SimTime)> {
        let mut all: Vec<(SimTime, SimTime)> = self.preload.clone();
        all.extend(self.log.iter().copied());
        all.sort();
        let mut merged: Vec<(SimTime, SimTime)> = Vec::with_capacity(all.len());
        for (s, e) in all {
            match merged.last_mut() {
                Some((_, le)) if *le >= s => {
                    if e > *le {
                        *le = e;
                    }
                }
                _ => merged.push((s, e)),
            }
        }
        merged
    }

    /// Drop own commitments that ended before `now`; the log keeps them.
    pub fn prune(&mut self, now: SimTime) {
        let expired: Vec<SimTime> = self
            .own
            .iter()
            .take_while(|(_, &(e, _))| e <= now)
            .filter(|(_, &(e, _))| e <= now)
            .map(|(&s, _)| s)
            .collect();
        for s in expired {
            self.own.remove(&s);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(ms: i64) -> SimTime {
        SimTime(ms)
    }

    #[test]
    fn reserve_on_empty_schedule_accepts() {
        let mut s = TaskSchedule::new();
        assert_eq!(s.try_reserve(t(10), t(20), TaskKind::VoteComputation), Ok(()));
    }

    #[test]
    fn overlapping_reserve_refuses_and_leaves_state() {
        let mut s = TaskSchedule::new();
        s.try_reserve(t(10), t(20), TaskKind::VoteComputation).unwrap();
        assert_eq!(
            s.try_reserve(t(15), t(25), TaskKind::VoteComputation),
            Err(ReserveError::Overlap)
        );
        // refused call left the schedule unchanged: the original slot alone
        assert_eq!(s.busy_ms(), 10);
    }

    #[test]
    fn abutting_reserve_accepts_half_open() {
        let mut s = TaskSchedule::new();
        s.try_reserve(t(10), t(20), TaskKind::VoteComputation).unwrap();
        assert_eq!(s.try_reserve(t(20), t(30), TaskKind::VoteComputation), Ok(()));
    }

    #[test]
    fn malformed_windows_rejected() {
        let mut s = TaskSchedule::new();
        assert_eq!(
            s.try_reserve(t(10), t(10), TaskKind::VoteComputation),
            Err(ReserveError::MalformedWindow)
        );
        assert_eq!(
            s.try_reserve(t(10), t(5), TaskKind::VoteComputation),
            Err(ReserveError::MalformedWindow)
        );
    }

    // Exhaustive oracle over small intervals: try_reserve must agree with a
    // brute-force half-open overlap check.
    #[test]
    fn half_open_semantics_match_exhaustive_oracle() {
        for a in 0..8i64 {
            for b in (a + 1)..9i64 {
                for c in 0..8i64 {
                    for d in (c + 1)..9i64 {
                        let mut s = TaskSchedule::new();
                        s.try_reserve(t(a), t(b), TaskKind::VoteComputation).unwrap();
                        let got = s.try_reserve(t(c), t(d), TaskKind::VoteComputation).is_ok();
                        let overlap = a < d && c < b; // half-open interval overlap
                        assert_eq!(got, !overlap, "[{a},{b}) vs [{c},{d})");
                    }
                }
            }
        }
    }

    #[test]
    fn find_slot_skips_busy_and_honors_deadline() {
        let mut s = TaskSchedule::new();
        s.try_reserve(t(10), t(20), TaskKind::VoteComputation).unwrap();
        s.try_reserve(t(25), t(40), TaskKind::VoteComputation).unwrap();
        assert_eq!(s.find_slot(t(0), t(10), t(100)), Some(t(0)));
        assert_eq!(s.find_slot(t(5), t(10), t(100)), Some(t(40)));
        assert_eq!(s.find_slot(t(5), t(5), t(100)), Some(t(5)));
        assert_eq!(s.find_slot(t(6), t(5), t(100)), Some(t(20)));
        assert_eq!(s.find_slot(t(5), t(10), t(45)), None);
    }

    #[test]
    fn preload_blocks_reservations() {
        let mut s = TaskSchedule::with_preload(vec![(t(100), t(200))]);
        assert_eq!(
            s.try_reserve(t(150), t(160), TaskKind::VoteComputation),
            Err(ReserveError::Overlap)
        );
        assert_eq!(s.find_slot(t(90), t(20), t(500)), Some(t(200)));
        assert_eq!(s.busy_ms(), 100);
    }

    #[test]
    fn merged_intervals_are_disjoint_and_sorted() {
        let mut s = TaskSchedule::with_preload(vec![(t(0), t(10))]);
        s.try_reserve(t(10), t(15), TaskKind::VoteComputation).unwrap();
        s.try_reserve(t(30), t(40), TaskKind::VoteComputation).unwrap();
        assert_eq!(s.merged_busy_intervals(), vec![(t(0), t(15)), (t(30), t(40))]);
    }
}
