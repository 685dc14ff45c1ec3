//! Virtual-time event loop primitives: clock, ordered event queue, and
//! labeled deterministic RNG streams.
//!
//! Time is kept as 64-bit integer milliseconds so the queue never suffers
//! floating-point drift. Events tie-break by insertion sequence number,
//! which makes every run with the same seed dispatch in the same order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::cmp::Reverse;
use std::collections::BinaryHeap;
use thiserror::Error;

pub const MILLIS_PER_SECOND: i64 = 1_000;
pub const SECONDS_PER_DAY: i64 = 86_400;
pub const DAYS_PER_MONTH: i64 = 30;

/// Virtual time since simulation start, in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimTime(pub i64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn from_secs(s: f64) -> Self {
        SimTime((s * MILLIS_PER_SECOND as f64).round() as i64)
    }

    pub fn from_days(d: f64) -> Self {
        Self::from_secs(d * SECONDS_PER_DAY as f64)
    }

    pub fn as_secs(self) -> f64 {
        self.0 as f64 / MILLIS_PER_SECOND as f64
    }

    pub fn as_days(self) -> f64 {
        self.as_secs() / SECONDS_PER_DAY as f64
    }

    pub fn saturating_sub(self, other: SimTime) -> SimTime {
        SimTime(self.0 - other.0)
    }
}

impl std::ops::Add<SimTime> for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl std::ops::Sub<SimTime> for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

/// Monotone virtual clock. Advances only when the queue dispatches.
#[derive(Debug, Default)]
pub struct SimClock {
    pub now: SimTime,
}

#[derive(Debug, Error, PartialEq)]
pub enum ScheduleError {
    #[error("event scheduled at {at:?} which is before current time {now:?}")]
    InPast { at: SimTime, now: SimTime },
}

#[derive(Debug)]
struct Entry<E> {
    at: SimTime,
    seq: u64,
    event: E,
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        self.at == other.at && self.seq == other.seq
    }
}
impl<E> Eq for Entry<E> {}
impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<E> Ord for Entry<E> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.at, self.seq).cmp(&(other.at, other.seq))
    }
}

/// Event queue ordered by (fire time, insertion sequence).
#[derive(Debug)]
pub struct EventQueue<E> {
    heap: BinaryHeap<Reverse<Entry<E>>>,
    next_seq: u64,
}

impl<E> Default for EventQueue<E> {
    fn default() -> Self {
        EventQueue { heap: BinaryHeap::new(), next_seq: 0 }
    }
}

impl<E> EventQueue<E> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Schedule an event at `at`. Returns its sequence handle.
    pub fn schedule(&mut self, now: SimTime, at: SimTime, event: E) -> Result<u64, ScheduleError> {
        if at < now {
            return Err(ScheduleError::InPast { at, now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Reverse(Entry { at, seq, event }));
        Ok(seq)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Pop the next event if it fires at or before `end`.
    pub fn pop_until(&mut self, end: SimTime) -> Option<(SimTime, E)> {
        if let Some(Reverse(e)) = self.heap.peek() {
            if e.at <= end {
                let Reverse(e) = self.heap.pop().unwrap();
                return Some((e.at, e.event));
            }
        }
        None
    }
}

/// Purpose tag of a derived RNG stream. Each (purpose, key) pair yields an
/// independent deterministic stream, so changes in one peer's draw pattern
/// never perturb another's.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamPurpose {
    Damage,
    Admission,
    PollSampling,
    Nomination,
    IntroSplit,
    Stagger,
    Link,
    Adversary,
    Scenario,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Derive a ChaCha stream from (master seed, purpose, key) by a stable hash.
pub fn derive_stream(master_seed: u64, purpose: StreamPurpose, key: u64) -> ChaCha8Rng {
    let tag = purpose as u64;
    let mut state = splitmix64(master_seed ^ 0xA076_1D64_78BD_642F);
    state = splitmix64(state ^ tag.wrapping_mul(0x9DDF_EA08_EB38_2D69));
    state = splitmix64(state ^ key);
    let mut seed = [0u8; 32];
    let mut s = state;
    for chunk in seed.chunks_mut(8) {
        s = splitmix64(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

/// Stable small hash used for digest and token modeling.
pub fn mix64(parts: &[u64]) -> u64 {
    let mut acc = 0xcbf2_9ce4_8422_2325u64;
    for &p in parts {
        acc = splitmix64(acc ^ p);
    }
    acc
}
