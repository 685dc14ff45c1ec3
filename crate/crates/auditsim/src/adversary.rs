//! Attack scenario configuration for the three attrition adversaries. The
//! drivers themselves are event handlers in the simulation core; this module
//! holds their parameters and shared bookkeeping.

use crate::engine::SimTime;

/// Stage at which the brute-force adversary abandons a poll exchange.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Defection {
    /// Pay only the introductory effort, never follow up with a PollProof.
    Intro,
    /// Pay through the PollProof, never send an evaluation receipt.
    Remaining,
    /// Complete the protocol honestly, receipts included.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdversaryKind {
    None,
    PipeStoppage,
    AdmissionFlood,
    BruteForce,
    /// Reserved: minions that first earn even/credit standing by voting.
    /// Not simulated.
    GoodGradeBruteForce,
}

#[derive(Debug, Clone, Copy)]
pub struct AdversaryConfig {
    pub kind: AdversaryKind,
    /// Fraction of the loyal population targeted per attack cycle.
    pub coverage: f64,
    pub attack: SimTime,
    pub recuperation: SimTime,
    /// Brute force only.
    pub defection: Defection,
    /// Garbage invitations per victim per AU per day (admission flood).
    pub flood_per_day: f64,
}

impl AdversaryConfig {
    pub fn none() -> Self {
        AdversaryConfig {
            kind: AdversaryKind::None,
            coverage: 1.0,
            attack: SimTime::ZERO,
            recuperation: SimTime::from_days(30.0),
            defection: Defection::None,
            flood_per_day: 300.0,
        }
    }

    pub fn active(&self) -> bool {
        !matches!(self.kind, AdversaryKind::None) && self.attack.0 > 0
    }

    /// Whether `now` falls inside an attack window of the repeating
    /// attack/recuperation cycle starting at time zero.
    pub fn in_attack_window(&self, now: SimTime) -> bool {
        if !self.active() {
            return false;
        }
        let cycle = self.attack.0 + self.recuperation.0;
        now.0.rem_euclid(cycle) < self.attack.0
    }

    /// Start of the first attack window at or after `now`.
    pub fn next_window_start(&self, now: SimTime) -> SimTime {
        let cycle = self.attack.0 + self.recuperation.0;
        let phase = now.0.rem_euclid(cycle);
        if phase < self.attack.0 {
            now
        } else {
            SimTime(now.0 + cycle - phase)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(attack_days: f64) -> AdversaryConfig {
        AdversaryConfig {
            kind: AdversaryKind::PipeStoppage,
            attack: SimTime::from_days(attack_days),
            ..AdversaryConfig::none()
        }
    }

    #[test]
    fn zero_duration_is_inactive() {
        let c = cfg(0.0);
        assert!(!c.active());
        assert!(!c.in_attack_window(SimTime::from_days(5.0)));
    }

    #[test]
    fn window_cycle_alternates_attack_and_recuperation() {
        let c = cfg(180.0);
        assert!(c.in_attack_window(SimTime::ZERO));
        assert!(c.in_attack_window(SimTime::from_days(179.9)));
        assert!(!c.in_attack_window(SimTime::from_days(180.1)));
        assert!(!c.in_attack_window(SimTime::from_days(209.9)));
        assert!(c.in_attack_window(SimTime::from_days(210.1)));
    }

    #[test]
    fn next_window_start_snaps_to_cycle() {
        let c = cfg(10.0);
        assert_eq!(c.next_window_start(SimTime::from_days(3.0)), SimTime::from_days(3.0));
        assert_eq!(c.next_window_start(SimTime::from_days(15.0)), SimTime::from_days(40.0));
    }
}
