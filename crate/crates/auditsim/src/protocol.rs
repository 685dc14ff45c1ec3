//! Pure poll-protocol rules: block tallying, message vocabulary and wire
//! sizes. The stateful poller/voter machines live in the simulation core.

use crate::engine::SimTime;
use crate::types::PeerId;
use std::collections::BTreeMap;

/// Sparse damage view of a replica: block index -> damage event id. Two
/// parties agree on a block exactly when their entries for it are equal.
pub type DamageMap = BTreeMap<u32, u64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockOutcome {
    Agree,
    Disagree,
    Inconclusive,
}

/// Landslide rule over one block's inner-circle votes: the poller wins
/// (Agree) when disagreement is at most `max_disagree`, loses (Disagree,
/// triggering a repair) when agreement is at most the same bound, and
/// anything in between is Inconclusive and raises an alarm.
pub fn tally_block(agreeing: usize, disagreeing: usize, max_disagree: usize) -> BlockOutcome {
    if disagreeing <= max_disagree {
        BlockOutcome::Agree
    } else if agreeing <= max_disagree {
        BlockOutcome::Disagree
    } else {
        BlockOutcome::Inconclusive
    }
}

/// Per-block outcomes over every contested block (any block damaged in the
/// poller's own view or mentioned by a vote). Only votes flagged as inner
/// circle participate; outer votes never touch the tally.
pub fn tally_votes(
    own: &DamageMap,
    votes: &[(bool, DamageMap)],
    max_disagree: usize,
) -> Vec<(u32, BlockOutcome)> {
    let inner: Vec<&DamageMap> = votes.iter().filter(|(i, _)| *i).map(|(_, d)| d).collect();
    let mut contested: std::collections::BTreeSet<u32> = own.keys().copied().collect();
    for d in &inner {
        contested.extend(d.keys().copied());
    }
    contested
        .into_iter()
        .map(|block| {
            let own_val = own.get(&block).copied();
            let agreeing = inner.iter().filter(|d| d.get(&block).copied() == own_val).count();
            (block, tally_block(agreeing, inner.len() - agreeing, max_disagree))
        })
        .collect()
}

/// Fixed header charged to every control message.
pub const CONTROL_BYTES: u64 = 1024;
/// Per-block digest bytes in a vote; proofs double it.
pub const DIGEST_BYTES: u64 = 20;

pub fn vote_bytes(block_count: u32) -> u64 {
    CONTROL_BYTES + block_count as u64 * 2 * DIGEST_BYTES
}

/// Simulated wire messages. Delivery is a single engine event computed at
/// send time.
#[derive(Debug, Clone)]
pub enum Msg {
    /// `introducer` names the voter whose nomination backs an outer-circle
    /// invitation; such invitations bypass drops and refractory periods.
    Poll { poll: u64, poller: PeerId, au: u32, invitee: u32, eval_at: SimTime, introducer: Option<PeerId> },
    PollAck { poll: u64, voter: u32, accept: bool },
    PollProof { poll: u64, voter: u32 },
    Vote { poll: u64, voter: u32, damage: DamageMap, nominations: Vec<u32> },
    RepairBlock { poll: u64, block: u32 },
    Receipt { poll: u64, voter: u32, token: u64 },
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truth_table_for_ten_votes() {
        for disagree in 0..=10usize {
            let agree = 10 - disagree;
            let got = tally_block(agree, disagree, 3);
            let want = if disagree <= 3 {
                BlockOutcome::Agree
            } else if disagree >= 7 {
                BlockOutcome::Disagree
            } else {
                BlockOutcome::Inconclusive
            };
            assert_eq!(got, want, "disagree={disagree}");
        }
    }

    #[test]
    fn landslide_loss_at_eighty_percent() {
        assert_eq!(tally_block(2, 8, 3), BlockOutcome::Disagree);
    }

    #[test]
    fn even_split_is_inconclusive() {
        assert_eq!(tally_block(5, 5, 3), BlockOutcome::Inconclusive);
    }

    #[test]
    fn vote_size_scales_with_blocks() {
        assert_eq!(vote_bytes(512), 1024 + 512 * 40);
    }
}
