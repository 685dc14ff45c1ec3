//! Proof-of-effort economics: sized effort requirements per protocol stage,
//! construction and verification charges, evaluation receipts built from
//! proof byproducts, and per-peer effort ledgers.
//!
//! One effort unit is one second of reference-PC compute. Unforgeability is
//! modeled by capability: byproduct tokens are values the engine hands only
//! to a proof's constructor and verifier.

use crate::content::ArchivalUnit;
use crate::engine::mix64;
use crate::types::PeerId;
use std::collections::BTreeMap;

/// Session establishment (secure channel stand-in), charged per invitation
/// considered.
pub const SESSION_COST: f64 = 0.01;

/// An abstract proof of spent compute, bound to a nonce.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffortProof {
    pub cost: f64,
    pub bound_nonce: u64,
    pub valid: bool,
    pub byproduct: u64,
}

impl EffortProof {
    /// A legitimate proof. The constructor is charged elsewhere (ledger);
    /// availability delay is the caller's scheduling concern.
    pub fn construct(nonce: u64, cost: f64, actor: PeerId) -> Self {
        EffortProof {
            cost,
            bound_nonce: nonce,
            valid: true,
            byproduct: mix64(&[nonce, cost.to_bits(), actor.0 as u64, 0xb19d]),
        }
    }

    /// Cost-0 garbage with a fabricated byproduct, as sent by flooding
    /// adversaries.
    pub fn garbage(nonce: u64, fake_id: u64) -> Self {
        EffortProof { cost: 0.0, bound_nonce: nonce, valid: false, byproduct: mix64(&[fake_id, 0xdead]) }
    }

    /// Checks a proof against expectations. The verifier's charge
    /// (expected_cost / z) is applied by the caller via the ledger; invalid
    /// outcomes still cost the full verification fee.
    pub fn verify(&self, expected_cost: f64, expected_nonce: u64) -> bool {
        self.valid && self.cost >= expected_cost && self.bound_nonce == expected_nonce
    }
}

/// Ledger categories, split for diagnostics; metrics use the totals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EffortKind {
    Construct,
    Verify,
    Hash,
    Session,
}

/// Cumulative effort accounting for one peer.
#[derive(Debug, Clone, Default)]
pub struct EffortLedger {
    spent: BTreeMap<EffortKind, f64>,
    pub imposed_on_others: f64,
}

impl EffortLedger {
    pub fn charge(&mut self, kind: EffortKind, units: f64) {
        debug_assert!(units >= 0.0);
        *self.spent.entry(kind).or_insert(0.0) += units;
    }

    pub fn spent(&self, kind: EffortKind) -> f64 {
        self.spent.get(&kind).copied().unwrap_or(0.0)
    }

    pub fn total_spent(&self) -> f64 {
        // + 0.0 normalizes the empty sum's negative zero
        self.spent.values().sum::<f64>() + 0.0
    }
}

/// Derived effort sizes for one AU, fixed for a whole run.
#[derive(Debug, Clone, Copy)]
pub struct EffortSchedule {
    /// Verification costs 1/z of construction.
    pub verify_ratio: f64,
    /// Wall-clock seconds to hash the full AU on the reference PC.
    pub hash_effort: f64,
    /// Provable effort attached to each block of a vote.
    pub per_block_vote_effort: f64,
    /// Total cost of producing a vote: hash the AU plus construct the
    /// per-block proofs.
    pub vote_effort: f64,
    /// Effort demanded of a poller up front, before any vote is computed.
    pub intro_effort: f64,
    /// Effort demanded of a poller after the invitee agrees to vote.
    pub remaining_effort: f64,
    /// Poller's cost to evaluate one vote: verify its per-block proofs and
    /// hash its own replica for comparison.
    pub evaluation_effort: f64,
    pub block_count: u32,
}

impl EffortSchedule {
    /// Solves the stage-balance inequalities for a given AU:
    /// - the per-block proof must cover hashing one block plus verifying
    ///   that proof, so pb/z + h <= pb, i.e. pb = h * z / (z - 1) at the
    ///   boundary (we add 5% margin);
    /// - the poller's total (intro + remaining) must exceed the voter's
    ///   cost to verify it plus produce the vote;
    /// - intro is fixed at 20% of the poller total.
    pub fn size_efforts(au: &ArchivalUnit, hash_throughput: f64, verify_ratio: f64, intro_share: f64) -> Self {
        let z = verify_ratio;
        assert!(z > 1.0);
        let hash_effort = au.size_bytes() as f64 / hash_throughput;
        let blocks = au.block_count.max(1) as f64;
        let per_block_hash = hash_effort / blocks;
        let margin = 1.05;
        let per_block_vote_effort = per_block_hash * z / (z - 1.0) * margin;
        let vote_effort = hash_effort + blocks * per_block_vote_effort;
        // voter's stake in the exchange before sending the vote
        let voter_in = vote_effort;
        // poller total must dominate (its own verify fee of the total) +
        // voter_in: total >= total/z + voter_in
        let poller_total = voter_in * z / (z - 1.0) * margin;
        let evaluation_effort = blocks * per_block_vote_effort / z + hash_effort;
        EffortSchedule {
            verify_ratio: z,
            hash_effort,
            per_block_vote_effort,
            vote_effort,
            intro_effort: intro_share * poller_total,
            remaining_effort: (1.0 - intro_share) * poller_total,
            evaluation_effort,
            block_count: au.block_count,
        }
    }

    pub fn poller_total(&self) -> f64 {
        self.intro_effort + self.remaining_effort
    }

    pub fn verify_cost(&self, construction_cost: f64) -> f64 {
        construction_cost / self.verify_ratio
    }
}

/// Receipt over a vote's per-block byproducts; an honest evaluator learns
/// every byproduct by verifying every proof, the voter knows them from
/// construction.
pub fn make_receipt(byproducts: impl IntoIterator<Item = u64>) -> u64 {
    let mut acc = 0x5eed_3c31u64;
    for b in byproducts {
        acc = mix64(&[acc, b]);
    }
    acc
}

pub fn check_receipt(voter_remembered: u64, received: u64) -> bool {
    voter_remembered == received
}
