//! Latency/bandwidth message delivery without congestion, plus the
//! pipe-stoppage overlay that severs selected peers' communication.
//!
//! Pair latency is the sum of both endpoints' latencies; effective bandwidth
//! is the minimum of the two endpoints. Messages sent while either endpoint
//! is inside an active stoppage mask are dropped, not queued; messages
//! already in flight when a mask activates still deliver.

use crate::engine::{derive_stream, SimTime, StreamPurpose};
use crate::types::PeerId;
use rand::Rng;
use std::collections::BTreeSet;

/// Bandwidth choices in bits/second.
const BANDWIDTH_CHOICES: [f64; 3] = [1.5e6, 10e6, 100e6];
const LATENCY_MIN_S: f64 = 0.001;
const LATENCY_MAX_S: f64 = 0.030;

/// Fixed per-peer link characteristics, drawn once per run.
#[derive(Debug, Clone, Copy)]
pub struct LinkProfile {
    pub bandwidth_bps: f64,
    pub latency_s: f64,
}

impl LinkProfile {
    pub fn sample(master_seed: u64, peer: PeerId) -> Self {
        let mut rng = derive_stream(master_seed, StreamPurpose::Link, peer.0 as u64);
        let bandwidth_bps = BANDWIDTH_CHOICES[rng.gen_range(0..3)];
        let latency_s = rng.gen_range(LATENCY_MIN_S..LATENCY_MAX_S);
        LinkProfile { bandwidth_bps, latency_s }
    }
}

#[derive(Debug)]
pub struct Network {
    master_seed: u64,
    /// Blocked peers while a stoppage mask is active.
    blocked: BTreeSet<PeerId>,
    /// Delivered protocol message count, for mask invariants.
    pub delivered: u64,
    pub dropped_by_mask: u64,
}

impl Network {
    pub fn new(master_seed: u64) -> Self {
        Network { master_seed, blocked: BTreeSet::new(), delivered: 0, dropped_by_mask: 0 }
    }

    pub fn profile(&self, peer: PeerId) -> LinkProfile {
        LinkProfile::sample(self.master_seed, peer)
    }

    pub fn is_blocked(&self, peer: PeerId) -> bool {
        self.blocked.contains(&peer)
    }

    /// Delivery time for a message of `size_bytes` from `src` to `dst`, or
    /// `None` when either endpoint is inside an active mask. Drops are
    /// legitimate outcomes, not faults.
    pub fn transmit(
        &mut self,
        src: PeerId,
        dst: PeerId,
        size_bytes: u64,
        now: SimTime,
    ) -> Option<SimTime> {
        debug_assert_ne!(src, dst);
        if self.is_blocked(src) || self.is_blocked(dst) {
            self.dropped_by_mask += 1;
            return None;
        }
        let a = self.profile(src);
        let b = self.profile(dst);
        let latency = a.latency_s + b.latency_s;
        let serialization = size_bytes as f64 * 8.0 / a.bandwidth_bps.min(b.bandwidth_bps);
        self.delivered += 1;
        // strictly later than `now` even for 0-byte payloads: latency > 0
        Some(now + SimTime::from_secs(latency + serialization))
    }

    /// Activate a mask over `peers`. Overlapping masks merge by union.
    pub fn block(&mut self, peers: impl IntoIterator<Item = PeerId>) {
        self.blocked.extend(peers);
    }

    pub fn unblock_all(&mut self) {
        self.blocked.clear();
    }

    pub fn blocked_count(&self) -> usize {
        self.blocked.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net() -> Network {
        Network::new(99)
    }

    #[test]
    fn profiles_are_fixed_per_peer_and_in_range() {
        let n = net();
        for p in 0..200u32 {
            let a = n.profile(PeerId(p));
            let b = n.profile(PeerId(p));
            assert_eq!(a.bandwidth_bps, b.bandwidth_bps);
            assert_eq!(a.latency_s, b.latency_s);
            assert!(BANDWIDTH_CHOICES.contains(&a.bandwidth_bps));
            assert!(a.latency_s >= LATENCY_MIN_S && a.latency_s < LATENCY_MAX_S);
        }
    }

    #[test]
    fn zero_byte_message_takes_summed_latencies() {
        let mut n = net();
        let src = PeerId(1);
        let dst = PeerId(2);
        let expect =
            SimTime::from_secs(n.profile(src).latency_s + n.profile(dst).latency_s);
        let at = n.transmit(src, dst, 0, SimTime::ZERO).unwrap();
        assert_eq!(at, expect);
        assert!(at > SimTime::ZERO);
    }

    #[test]
    fn serialization_term_uses_min_bandwidth() {
        let mut n = net();
        let src = PeerId(1);
        let dst = PeerId(2);
        let a = n.profile(src);
        let b = n.profile(dst);
        let size = 1_000_000u64;
        let expect = a.latency_s + b.latency_s + size as f64 * 8.0 / a.bandwidth_bps.min(b.bandwidth_bps);
        let at = n.transmit(src, dst, size, SimTime::ZERO).unwrap();
        assert!((at.as_secs() - expect).abs() < 2e-3);
    }

    #[test]
    fn hand_computed_delivery_formula() {
        // 1 MB at 1.5 Mbps effective with 20 ms total latency:
        // 0.020 + 8e6 / 1.5e6 = 5.3533.. s
        let delay = 0.010 + 0.010 + 8_000_000.0f64 / 1_500_000.0;
        assert!((delay - 5.3533).abs() < 1e-3);
    }

    #[test]
    fn masked_endpoint_drops_messages() {
        let mut n = net();
        n.block([PeerId(2)]);
        assert!(n.transmit(PeerId(1), PeerId(2), 10, SimTime::ZERO).is_none());
        assert!(n.transmit(PeerId(2), PeerId(3), 10, SimTime::ZERO).is_none());
        assert!(n.transmit(PeerId(1), PeerId(3), 10, SimTime::ZERO).is_some());
        assert_eq!(n.dropped_by_mask, 2);
        n.unblock_all();
        assert!(n.transmit(PeerId(1), PeerId(2), 10, SimTime::ZERO).is_some());
    }

    #[test]
    fn masks_merge_by_union() {
        let mut n = net();
        n.block([PeerId(1)]);
        n.block([PeerId(2)]);
        assert_eq!(n.blocked_count(), 2);
    }
}
