//! First-hand reputation grades, probabilistic invitation drops, refractory
//! rate limiting, and introduction bookkeeping. All state is per (owner, AU)
//! and never shared across peers.

use crate::engine::SimTime;
use crate::types::PeerId;
use rand::Rng;
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum GradeValue {
    Debt,
    Even,
    Credit,
}

impl GradeValue {
    pub fn raise(self) -> Self {
        match self {
            GradeValue::Debt => GradeValue::Even,
            _ => GradeValue::Credit,
        }
    }

    pub fn lower(self) -> Self {
        match self {
            GradeValue::Credit => GradeValue::Even,
            _ => GradeValue::Debt,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Grade {
    pub value: GradeValue,
    pub updated_at: SimTime,
}

/// Why an invitation was accepted or not.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Admission {
    /// Standing grade was even or credit.
    AdmittedKnown,
    /// A live introduction was consumed.
    AdmittedIntroduced,
    /// Won the drop lottery as unknown/in-debt; starts a refractory period.
    AdmittedLottery,
    Dropped,
    RefractoryReject,
}

impl Admission {
    pub fn admitted(self) -> bool {
        !matches!(self, Admission::Dropped | Admission::RefractoryReject)
    }
}

/// Drop and rate-limit parameters, fixed per run.
#[derive(Debug, Clone, Copy)]
pub struct AdmissionParams {
    pub drop_unknown: f64,
    pub drop_in_debt: f64,
    pub refractory: SimTime,
    pub decay_interval: SimTime,
    pub intro_cap: usize,
}

impl Default for AdmissionParams {
    fn default() -> Self {
        AdmissionParams {
            drop_unknown: 0.90,
            drop_in_debt: 0.80,
            refractory: SimTime::from_days(1.0),
            decay_interval: SimTime::from_days(90.0),
            intro_cap: 3,
        }
    }
}

/// One peer's admission-control state for one AU: its known-peers list,
/// refractory timer, and the introductions it currently honors.
#[derive(Debug, Clone, Default)]
pub struct AdmissionState {
    entries: BTreeMap<PeerId, Grade>,
    refractory_until: Option<SimTime>,
    /// introducer -> introducees currently honored
    by_introducer: BTreeMap<PeerId, BTreeSet<PeerId>>,
    /// introducee -> introducers
    by_introducee: BTreeMap<PeerId, BTreeSet<PeerId>>,
    /// Admission timestamps of unknown/in-debt invitations, for invariants.
    pub lottery_admissions: Vec<SimTime>,
}

impl AdmissionState {
    /// Grade as of `now`, applying stepwise idle decay toward debt. Decay is
    /// computed lazily from `updated_at`; it never resurrects entries.
    pub fn effective_grade(&self, remote: PeerId, now: SimTime, params: &AdmissionParams) -> Option<GradeValue> {
        let g = self.entries.get(&remote)?;
        let idle = (now - g.updated_at).0.max(0);
        let steps = (idle / params.decay_interval.0.max(1)) as u32;
        let mut v = g.value;
        for _ in 0..steps.min(2) {
            v = v.lower();
        }
        Some(v)
    }

    pub fn set_grade(&mut self, remote: PeerId, value: GradeValue, now: SimTime) {
        self.entries.insert(remote, Grade { value, updated_at: now });
    }

    pub fn known_count(&self) -> usize {
        self.entries.len()
    }

    /// End of the current refractory window, if one is open.
    pub fn refractory_until(&self) -> Option<SimTime> {
        self.refractory_until
    }

    /// Filter an incoming poll invitation. Silent outcomes (Dropped,
    /// RefractoryReject) must produce no response message.
    pub fn admit_invitation(
        &mut self,
        poller: PeerId,
        now: SimTime,
        params: &AdmissionParams,
        rng: &mut impl Rng,
    ) -> Admission {
        self.admit_invitation_full(poller, false, now, params, rng)
    }

    /// As `admit_invitation`; `carried_intro` marks an invitation backed by a
    /// nominating voter's introduction, honored like a stored one.
    pub fn admit_invitation_full(
        &mut self,
        poller: PeerId,
        carried_intro: bool,
        now: SimTime,
        params: &AdmissionParams,
        rng: &mut impl Rng,
    ) -> Admission {
        match self.effective_grade(poller, now, params) {
            Some(GradeValue::Even) | Some(GradeValue::Credit) => return Admission::AdmittedKnown,
            _ => {}
        }
        if self.consume_introduction(poller) || carried_intro {
            return Admission::AdmittedIntroduced;
        }
        if matches!(self.refractory_until, Some(until) if now < until) {
            return Admission::RefractoryReject;
        }
        let drop_p = match self.effective_grade(poller, now, params) {
            Some(GradeValue::Debt) => params.drop_in_debt,
            _ => params.drop_unknown,
        };
        if rng.gen_bool(drop_p) {
            Admission::Dropped
        } else {
            self.refractory_until = Some(now + params.refractory);
            self.lottery_admissions.push(now);
            Admission::AdmittedLottery
        }
    }

    /// Grade updates after an exchange concludes. `good` raises one step,
    /// otherwise the remote drops straight to debt.
    pub fn record_outcome(&mut self, remote: PeerId, good: bool, now: SimTime) {
        let prev = self.entries.get(&remote).map(|g| g.value);
        let value = if good {
            prev.unwrap_or(GradeValue::Debt).raise()
        } else {
            GradeValue::Debt
        };
        self.entries.insert(remote, Grade { value, updated_at: now });
    }

    /// One-step downgrade of a remote (a voter penalizing its poller for a
    /// completed exchange). Unknown remotes become in-debt.
    pub fn lower_grade(&mut self, remote: PeerId, now: SimTime) {
        let prev = self.entries.get(&remote).map(|g| g.value).unwrap_or(GradeValue::Even);
        self.entries.insert(remote, Grade { value: prev.lower(), updated_at: now });
    }

    /// Records introductions carried by a validly-voting introducer,
    /// replacing (never stacking on) that introducer's previous batch.
    pub fn register_introductions(
        &mut self,
        introducer: PeerId,
        introducees: impl IntoIterator<Item = PeerId>,
        params: &AdmissionParams,
    ) {
        self.drop_introducer(introducer);
        let mut batch = BTreeSet::new();
        for id in introducees {
            if batch.len() >= params.intro_cap {
                break;
            }
            if id == introducer {
                continue;
            }
            batch.insert(id);
        }
        for &id in &batch {
            self.by_introducee.entry(id).or_default().insert(introducer);
        }
        if !batch.is_empty() {
            self.by_introducer.insert(introducer, batch);
        }
    }

    /// Removes every introduction by one introducer (used when it leaves
    /// the reference list).
    pub fn drop_introducer(&mut self, introducer: PeerId) {
        if let Some(old) = self.by_introducer.remove(&introducer) {
            for id in old {
                if let Some(set) = self.by_introducee.get_mut(&id) {
                    set.remove(&introducer);
                    if set.is_empty() {
                        self.by_introducee.remove(&id);
                    }
                }
            }
        }
    }

    pub fn has_introduction(&self, introducee: PeerId) -> bool {
        self.by_introducee.contains_key(&introducee)
    }

    /// Consumes a live introduction of `introducee`, forgetting all other
    /// introductions by the same introducer and every other introduction of
    /// this introducee. Returns false when none exists.
    pub fn consume_introduction(&mut self, introducee: PeerId) -> bool {
        let Some(introducers) = self.by_introducee.remove(&introducee) else {
            return false;
        };
        let consumed_from = *introducers.iter().next().expect("non-empty introducer set");
        for introducer in introducers {
            if introducer == consumed_from {
                // forget siblings introduced alongside the consumed one
                self.drop_introducer_entry(introducer);
            } else if let Some(set) = self.by_introducer.get_mut(&introducer) {
                set.remove(&introducee);
                if set.is_empty() {
                    self.by_introducer.remove(&introducer);
                }
            }
        }
        true
    }

    fn drop_introducer_entry(&mut self, introducer: PeerId) {
        if let Some(old) = self.by_introducer.remove(&introducer) {
            for sibling in old {
                if let Some(set) = self.by_introducee.get_mut(&sibling) {
                    set.remove(&introducer);
                    if set.is_empty() {
                        self.by_introducee.remove(&sibling);
                    }
                }
            }
        }
    }

    pub fn outstanding_introductions(&self) -> usize {
        self.by_introducee.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    const P: PeerId = PeerId(7);

    #[test]
    fn grade_transition_table() {
        use GradeValue::*;
        assert_eq!(Debt.raise(), Even);
        assert_eq!(Even.raise(), Credit);
        assert_eq!(Credit.raise(), Credit);
        assert_eq!(Credit.lower(), Even);
        assert_eq!(Even.lower(), Debt);
        assert_eq!(Debt.lower(), Debt);
    }

    #[test]
    fn known_good_grades_bypass_drops_and_refractory() {
        let mut st = AdmissionState::default();
        let params = AdmissionParams::default();
        let mut r = rng();
        st.set_grade(P, GradeValue::Credit, SimTime::ZERO);
        st.refractory_until = Some(SimTime::from_days(2.0));
        for _ in 0..100 {
            assert_eq!(st.admit_invitation(P, SimTime::from_days(1.0), &params, &mut r), Admission::AdmittedKnown);
        }
    }

    #[test]
    fn unknown_admission_rate_near_ten_percent() {
        let params = AdmissionParams::default();
        let mut r = rng();
        let mut admitted = 0;
        for i in 0..10_000u32 {
            let mut st = AdmissionState::default();
            if st.admit_invitation(PeerId(i), SimTime::ZERO, &params, &mut r).admitted() {
                admitted += 1;
            }
        }
        assert!((admitted as f64 - 1000.0).abs() < 100.0, "admitted {admitted}");
    }

    #[test]
    fn in_debt_admission_rate_near_twenty_percent() {
        let params = AdmissionParams::default();
        let mut r = rng();
        let mut admitted = 0;
        for _ in 0..10_000u32 {
            let mut st = AdmissionState::default();
            st.set_grade(P, GradeValue::Debt, SimTime::ZERO);
            if st.admit_invitation(P, SimTime::ZERO, &params, &mut r).admitted() {
                admitted += 1;
            }
        }
        assert!((admitted as f64 - 2000.0).abs() < 150.0, "admitted {admitted}");
    }

    #[test]
    fn lottery_admission_opens_refractory_window() {
        let params = AdmissionParams::default();
        let mut r = rng();
        let mut st = AdmissionState::default();
        // force an admission by retrying
        let mut t = SimTime::ZERO;
        loop {
            match st.admit_invitation(P, t, &params, &mut r) {
                Admission::AdmittedLottery => break,
                _ => t = t + SimTime::from_days(2.0),
            }
        }
        let inside = t + SimTime::from_secs(3600.0);
        assert_eq!(st.admit_invitation(PeerId(9), inside, &params, &mut r), Admission::RefractoryReject);
        // after the window the lottery runs again (may drop, never reject)
        let after = t + SimTime::from_days(1.0);
        assert_ne!(st.admit_invitation(PeerId(9), after, &params, &mut r), Admission::RefractoryReject);
    }

    #[test]
    fn introduction_bypasses_refractory_and_is_consumed() {
        let params = AdmissionParams::default();
        let mut r = rng();
        let mut st = AdmissionState::default();
        st.refractory_until = Some(SimTime::from_days(5.0));
        st.register_introductions(PeerId(1), [P], &params);
        assert_eq!(st.admit_invitation(P, SimTime::ZERO, &params, &mut r), Admission::AdmittedIntroduced);
        assert_eq!(st.admit_invitation(P, SimTime::ZERO, &params, &mut r), Admission::RefractoryReject);
    }

    #[test]
    fn outcome_recording_raises_and_sinks() {
        let mut st = AdmissionState::default();
        let params = AdmissionParams::default();
        st.record_outcome(P, true, SimTime::ZERO);
        assert_eq!(st.effective_grade(P, SimTime::ZERO, &params), Some(GradeValue::Even));
        st.record_outcome(P, true, SimTime::ZERO);
        assert_eq!(st.effective_grade(P, SimTime::ZERO, &params), Some(GradeValue::Credit));
        st.record_outcome(P, false, SimTime::ZERO);
        assert_eq!(st.effective_grade(P, SimTime::ZERO, &params), Some(GradeValue::Debt));
    }

    #[test]
    fn idle_grades_decay_stepwise_toward_debt() {
        let mut st = AdmissionState::default();
        let params = AdmissionParams::default();
        st.set_grade(P, GradeValue::Credit, SimTime::ZERO);
        let g = |d: f64, st: &AdmissionState| st.effective_grade(P, SimTime::from_days(d), &params);
        assert_eq!(g(89.0, &st), Some(GradeValue::Credit));
        assert_eq!(g(91.0, &st), Some(GradeValue::Even));
        assert_eq!(g(181.0, &st), Some(GradeValue::Debt));
        assert_eq!(g(500.0, &st), Some(GradeValue::Debt));
        // refresh resets the timer
        st.record_outcome(P, true, SimTime::from_days(80.0));
        assert_eq!(g(160.0, &st), Some(GradeValue::Credit));
    }

    #[test]
    fn introduction_cap_enforced_and_reregistration_replaces() {
        let params = AdmissionParams::default();
        let mut st = AdmissionState::default();
        st.register_introductions(PeerId(1), (10..20).map(PeerId), &params);
        assert_eq!(st.outstanding_introductions(), 3);
        st.register_introductions(PeerId(1), [PeerId(30)], &params);
        assert_eq!(st.outstanding_introductions(), 1);
        assert!(st.has_introduction(PeerId(30)));
        assert!(!st.has_introduction(PeerId(10)));
    }

    #[test]
    fn consume_forgets_siblings_and_other_introducers() {
        let params = AdmissionParams::default();
        let mut st = AdmissionState::default();
        let (a, d) = (PeerId(1), PeerId(2));
        let (b, c) = (PeerId(10), PeerId(11));
        st.register_introductions(a, [b, c], &params);
        st.register_introductions(d, [b], &params);
        assert!(st.consume_introduction(b));
        assert!(!st.has_introduction(c), "sibling by same introducer forgotten");
        assert!(!st.has_introduction(b), "other introducers of b forgotten");
        assert!(!st.consume_introduction(b));
    }

    #[test]
    fn consume_on_empty_directory_is_absent() {
        let mut st = AdmissionState::default();
        assert!(!st.consume_introduction(P));
    }

    #[test]
    fn introducer_departure_removes_its_introductions() {
        let params = AdmissionParams::default();
        let mut st = AdmissionState::default();
        st.register_introductions(PeerId(1), [P], &params);
        st.drop_introducer(PeerId(1));
        assert!(!st.has_introduction(P));
    }
}
