//! Archival units, per-peer replicas, silent block damage, and repairs.
//!
//! Replicas never hold real bytes. A block is either correct or carries a
//! damage identity: the id of the damage event that corrupted it. Two
//! replicas agree on a block exactly when both are correct or both carry
//! the same damage id, which lets vote digests be modeled as pure functions
//! of (au, block, nonce, damage id).

use crate::engine::{mix64, SimTime, SECONDS_PER_DAY};
use crate::types::{AuId, PeerId};
use rand::Rng;
use rand_distr::{Distribution, Exp};
use std::collections::BTreeMap;

pub const DAYS_PER_YEAR: f64 = 365.0;

/// Content parameters for one archival unit.
#[derive(Debug, Clone, Copy)]
pub struct ArchivalUnit {
    pub id: AuId,
    pub block_count: u32,
    pub block_size: u64,
}

impl ArchivalUnit {
    pub fn size_bytes(&self) -> u64 {
        self.block_count as u64 * self.block_size
    }
}

/// One damage-log entry: when a block broke and when (if ever) it was fixed.
#[derive(Debug, Clone, Copy)]
pub struct DamageRecord {
    pub block: u32,
    pub damaged_at: SimTime,
    pub repaired_at: Option<SimTime>,
}

/// A peer's copy of one AU. Damage is sparse, so flags live in a map from
/// block index to the damage event id that set them.
#[derive(Debug, Clone, Default)]
pub struct Replica {
    damaged: BTreeMap<u32, u64>,
    pub log: Vec<DamageRecord>,
}

impl Replica {
    pub fn is_damaged(&self) -> bool {
        !self.damaged.is_empty()
    }

    pub fn damaged_blocks(&self) -> impl Iterator<Item = u32> + '_ {
        self.damaged.keys().copied()
    }

    pub fn block_damage(&self, block: u32) -> Option<u64> {
        self.damaged.get(&block).copied()
    }

    /// Whether this replica agrees with `other` on a given block.
    pub fn block_matches(&self, other: &Replica, block: u32) -> bool {
        self.block_damage(block) == other.block_damage(block)
    }

    /// A damage arrival: one uniformly chosen block among the not-yet-damaged
    /// ones gets flagged with `damage_id`. Damage of an already fully
    /// damaged replica is a no-op.
    pub fn inject_damage(
        &mut self,
        au: &ArchivalUnit,
        damage_id: u64,
        now: SimTime,
        rng: &mut impl Rng,
    ) -> Option<u32> {
        let intact = au.block_count as usize - self.damaged.len();
        if intact == 0 {
            return None;
        }
        let mut pick = rng.gen_range(0..intact);
        let mut block = 0u32;
        loop {
            if !self.damaged.contains_key(&block) {
                if pick == 0 {
                    break;
                }
                pick -= 1;
            }
            block += 1;
        }
        self.damaged.insert(block, damage_id);
        self.log.push(DamageRecord { block, damaged_at: now, repaired_at: None });
        Some(block)
    }

    /// Clears a block's damage flag and closes its log entry. Repairing an
    /// undamaged block (a frivolous repair) changes nothing.
    pub fn apply_repair(&mut self, block: u32, now: SimTime) {
        if self.damaged.remove(&block).is_some() {
            for rec in self.log.iter_mut().rev() {
                if rec.block == block && rec.repaired_at.is_none() {
                    rec.repaired_at = Some(now);
                    break;
                }
            }
        }
    }

    /// A local reader's view: damaged if any block flag is set.
    pub fn read_access(&self) -> bool {
        !self.is_damaged()
    }

    /// Digest of one block under a poll nonce.
    pub fn block_digest(&self, au: AuId, block: u32, nonce: u64) -> u64 {
        let damage = self.block_damage(block).map_or(0, |id| id | 1 << 63);
        mix64(&[au.0 as u64, block as u64, nonce, damage])
    }

    /// Digest summarizing the whole vote (fold over per-block digests).
    pub fn vote_digest(&self, au: &ArchivalUnit, nonce: u64) -> u64 {
        let mut acc = nonce;
        for block in 0..au.block_count {
            acc = mix64(&[acc, self.block_digest(au.id, block, nonce)]);
        }
        acc
    }
}

/// Memoryless per-replica damage arrivals. `mtbf_years == 0` disables damage.
#[derive(Debug, Clone, Copy)]
pub struct DamageProcess {
    pub mtbf_years: f64,
    pub aus_per_disk: u32,
}

impl DamageProcess {
    /// Per-AU arrival rate in events per second.
    pub fn rate_per_sec(&self) -> f64 {
        if self.mtbf_years == 0.0 {
            return 0.0;
        }
        1.0 / (self.mtbf_years * self.aus_per_disk as f64 * DAYS_PER_YEAR * SECONDS_PER_DAY as f64)
    }

    /// Next inter-arrival gap, or `None` when damage is disabled.
    pub fn next_gap(&self, rng: &mut impl Rng) -> Option<SimTime> {
        let rate = self.rate_per_sec();
        if rate == 0.0 {
            return None;
        }
        let gap_s = Exp::new(rate).unwrap().sample(rng);
        Some(SimTime::from_secs(gap_s))
    }
}

/// Content state for every (peer, au) pair in one layer.
#[derive(Debug)]
pub struct ContentStore {
    pub au: ArchivalUnit,
    replicas: BTreeMap<PeerId, Replica>,
    next_damage_id: u64,
}

impl ContentStore {
    pub fn new(au: ArchivalUnit, peers: impl IntoIterator<Item = PeerId>) -> Self {
        let replicas = peers.into_iter().map(|p| (p, Replica::default())).collect();
        ContentStore { au, replicas, next_damage_id: 1 }
    }

    pub fn replica(&self, peer: PeerId) -> &Replica {
        &self.replicas[&peer]
    }

    pub fn replica_mut(&mut self, peer: PeerId) -> &mut Replica {
        self.replicas.get_mut(&peer).expect("unknown replica owner")
    }

    pub fn fresh_damage_id(&mut self) -> u64 {
        let id = self.next_damage_id;
        self.next_damage_id += 1;
        id
    }

    pub fn damaged_count(&self) -> usize {
        self.replicas.values().filter(|r| r.is_damaged()).count()
    }

    pub fn replica_count(&self) -> usize {
        self.replicas.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn au() -> ArchivalUnit {
        ArchivalUnit { id: AuId(0), block_count: 512, block_size: 1 << 20 }
    }

    #[test]
    fn au_size_is_half_gigabyte() {
        assert_eq!(au().size_bytes(), 512 << 20);
    }

    #[test]
    fn single_block_au_damage_hits_that_block() {
        let tiny = ArchivalUnit { id: AuId(0), block_count: 1, block_size: 8 };
        let mut rep = Replica::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(rep.inject_damage(&tiny, 1, SimTime::ZERO, &mut rng), Some(0));
        assert!(rep.is_damaged());
        assert_eq!(rep.inject_damage(&tiny, 2, SimTime::ZERO, &mut rng), None);
    }

    #[test]
    fn damage_picks_only_intact_blocks_uniformly() {
        let small = ArchivalUnit { id: AuId(0), block_count: 4, block_size: 8 };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let mut rep = Replica::default();
            let mut seen = Vec::new();
            for id in 1..=4 {
                let b = rep.inject_damage(&small, id, SimTime::ZERO, &mut rng).unwrap();
                assert!(!seen.contains(&b));
                seen.push(b);
            }
            assert_eq!(rep.damaged_blocks().count(), 4);
        }
    }

    #[test]
    fn repair_clears_flag_and_closes_log() {
        let mut rep = Replica::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = rep.inject_damage(&au(), 9, SimTime::from_days(3.0), &mut rng).unwrap();
        assert!(!rep.read_access());
        rep.apply_repair(b, SimTime::from_days(5.0));
        assert!(rep.read_access());
        assert_eq!(rep.log[0].repaired_at, Some(SimTime::from_days(5.0)));
    }

    #[test]
    fn frivolous_repair_changes_nothing() {
        let mut rep = Replica::default();
        rep.apply_repair(17, SimTime::from_days(1.0));
        assert!(rep.log.is_empty());
        assert!(rep.read_access());
    }

    #[test]
    fn undamaged_replicas_agree_blockwise_and_on_votes() {
        let a = Replica::default();
        let b = Replica::default();
        let unit = au();
        for blk in [0u32, 100, 511] {
            assert_eq!(a.block_digest(unit.id, blk, 42), b.block_digest(unit.id, blk, 42));
        }
        assert_eq!(a.vote_digest(&unit, 42), b.vote_digest(&unit, 42));
    }

    #[test]
    fn damage_changes_exactly_the_damaged_block() {
        let unit = au();
        let clean = Replica::default();
        let mut hurt = Replica::default();
        hurt.damaged.insert(3, 77);
        for blk in 0..unit.block_count {
            let same = clean.block_digest(unit.id, blk, 5) == hurt.block_digest(unit.id, blk, 5);
            assert_eq!(same, blk != 3);
        }
        assert_ne!(clean.vote_digest(&unit, 5), hurt.vote_digest(&unit, 5));
    }

    #[test]
    fn independent_damage_disagrees_too() {
        let unit = au();
        let mut a = Replica::default();
        let mut b = Replica::default();
        a.damaged.insert(3, 1);
        b.damaged.insert(3, 2);
        assert_ne!(a.block_digest(unit.id, 3, 5), b.block_digest(unit.id, 3, 5));
        assert!(!a.block_matches(&b, 3));
    }

    #[test]
    fn nonce_binds_digests() {
        let unit = au();
        let rep = Replica::default();
        assert_ne!(rep.vote_digest(&unit, 1), rep.vote_digest(&unit, 2));
        assert_ne!(rep.block_digest(unit.id, 0, 1), rep.block_digest(unit.id, 0, 2));
    }

    #[test]
    fn damage_rate_algebra() {
        let p = DamageProcess { mtbf_years: 5.0, aus_per_disk: 50 };
        let per_year = p.rate_per_sec() * DAYS_PER_YEAR * SECONDS_PER_DAY as f64;
        assert!((per_year - 0.004).abs() < 1e-12);
        let off = DamageProcess { mtbf_years: 0.0, aus_per_disk: 50 };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert!(off.next_gap(&mut rng).is_none());
    }

    #[test]
    fn arrival_counts_match_poisson_expectation() {
        // 2e4 AU-years at 0.2 arrivals/AU-year; expect 4000 +- 3 sigma.
        let p = DamageProcess { mtbf_years: 1.0, aus_per_disk: 5 };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let horizon = SimTime::from_days(DAYS_PER_YEAR * 20_000.0);
        let mut count = 0u64;
        let mut t = SimTime::ZERO;
        loop {
            t = t + p.next_gap(&mut rng).unwrap();
            if t >= horizon {
                break;
            }
            count += 1;
        }
        let expect = 4000.0f64;
        let sigma = expect.sqrt();
        assert!((count as f64 - expect).abs() < 3.0 * sigma, "count {count}");
    }
}
