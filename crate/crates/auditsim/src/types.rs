//! Small shared identifier types.

use std::fmt;

/// A peer identity. Loyal peers get small ids; adversary-minted identities
/// start at [`PeerId::MINION_BASE`] so the two populations never collide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PeerId(pub u32);

impl PeerId {
    pub const MINION_BASE: u32 = 1 << 24;

    pub fn is_minion(self) -> bool {
        self.0 >= Self::MINION_BASE
    }
}

impl fmt::Display for PeerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_minion() {
            write!(f, "m{}", self.0 - Self::MINION_BASE)
        } else {
            write!(f, "p{}", self.0)
        }
    }
}

/// An archival unit index within a run layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AuId(pub u32);

impl fmt::Display for AuId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "au{}", self.0)
    }
}

/// Globally unique poll identifier, assigned in creation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PollId(pub u64);
