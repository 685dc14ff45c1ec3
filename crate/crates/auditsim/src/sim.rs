//! The simulation world: per-peer protocol state machines, the adversary
//! drivers, and the event dispatch loop for one run (one layer, one seed).

use crate::admission::{Admission, AdmissionParams, AdmissionState, GradeValue};
use crate::adversary::{AdversaryConfig, AdversaryKind, Defection};
use crate::content::{ArchivalUnit, ContentStore, DamageProcess};
use crate::effort::{EffortKind, EffortLedger, EffortSchedule, SESSION_COST};
use crate::engine::{derive_stream, mix64, EventQueue, SimTime, StreamPurpose};
use crate::network::Network;
use crate::protocol::{tally_votes, vote_bytes, BlockOutcome, DamageMap, Msg, CONTROL_BYTES};
use crate::schedule::{TaskKind, TaskSchedule};
use crate::types::{AuId, PeerId};
use rand::seq::index::sample as index_sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet, HashMap};

/// Protocol and environment parameters for one run.
#[derive(Debug, Clone)]
pub struct SimParams {
    pub peers: u32,
    pub aus: u32,
    pub interval: SimTime,
    pub horizon: SimTime,
    pub quorum: usize,
    pub max_disagree: usize,
    pub ref_target: usize,
    pub friends_count: usize,
    pub friends_insert: usize,
    pub nominate_frac: f64,
    pub nominate_cap: usize,
    pub intro_split: f64,
    pub frivolous_p: f64,
    pub admission: AdmissionParams,
    pub mtbf_years: f64,
    pub block_count: u32,
    pub block_size: u64,
    pub hash_throughput: f64,
    pub verify_ratio: f64,
    pub intro_share: f64,
    pub ack_timeout: SimTime,
    pub adversary: AdversaryConfig,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            peers: 100,
            aus: 50,
            interval: SimTime::from_days(90.0),
            horizon: SimTime::from_days(730.0),
            quorum: 10,
            max_disagree: 3,
            ref_target: 60,
            friends_count: 10,
            friends_insert: 2,
            nominate_frac: 0.1,
            nominate_cap: 10,
            intro_split: 0.5,
            frivolous_p: 0.1,
            admission: AdmissionParams::default(),
            mtbf_years: 5.0,
            block_count: 512,
            block_size: 1 << 20,
            hash_throughput: 50e6,
            verify_ratio: 20.0,
            intro_share: 0.2,
            ack_timeout: SimTime::from_secs(7200.0),
            adversary: AdversaryConfig::none(),
        }
    }
}

#[derive(Debug)]
enum Event {
    Damage { au: u32, peer: u32 },
    PollStart { au: u32, peer: u32 },
    Solicit { poll: u64, invitee: u32 },
    AckTimeout { poll: u64, invitee: u32 },
    Discovery { poll: u64 },
    Evaluate { poll: u64 },
    Tally { poll: u64 },
    Wrapup { poll: u64 },
    ProofDeadline { poll: u64, voter: u32 },
    VoteReady { poll: u64, voter: u32 },
    ReceiptDeadline { poll: u64, voter: u32 },
    Deliver(Msg),
    MaskFlip,
    FloodAdmit { au: u32, victim: u32 },
    BruteTick { au: u32, victim: u32 },
}

#[derive(Debug)]
struct VoteRec {
    damage: DamageMap,
    inner: bool,
}

#[derive(Debug)]
struct PollState {
    poller: u32,
    au: u32,
    start: SimTime,
    eval_at: SimTime,
    nonce: u64,
    inner: BTreeSet<u32>,
    outer: BTreeSet<u32>,
    responded: BTreeSet<u32>,
    retried: BTreeSet<u32>,
    votes: BTreeMap<u32, VoteRec>,
    /// nominee -> first voter that nominated it
    nomination_pool: BTreeMap<u32, u32>,
    /// outer invitee -> introducer carried on its invitation
    outer_intro: BTreeMap<u32, u32>,
    alarmed: bool,
    quorate: bool,
    done: bool,
    wrapup_at: SimTime,
    agreeing_outer: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VoterPhase {
    AwaitProof,
    Computing,
    AwaitReceipt,
}

#[derive(Debug)]
struct VoterSide {
    au: u32,
    poller: PeerId,
    eval_at: SimTime,
    slot: (SimTime, SimTime),
    phase: VoterPhase,
    token: u64,
}

/// Minion-driven poll against one victim.
#[derive(Debug)]
struct AdvPoll {
    au: u32,
    victim: u32,
    minion: PeerId,
}

/// Everything a finished run reports, including layering artifacts and the
/// raw logs the property suites scan.
#[derive(Debug, Default, Clone)]
pub struct RunStats {
    pub access_failure: f64,
    pub total_polls: u64,
    pub successful_polls: u64,
    pub inquorate_polls: u64,
    pub alarms: u64,
    pub busy_failures: u64,
    pub repairs: u64,
    pub frivolous_repairs: u64,
    pub corrupt_repairs: u64,
    pub loyal_effort: f64,
    pub adversary_effort: f64,
    pub mean_busy_days: f64,
    /// Per-peer merged busy intervals, preloadable into the next layer.
    pub busy_intervals: Vec<Vec<(SimTime, SimTime)>>,
    /// (peer, au, start) for every poll started, for rate invariants.
    pub poll_starts: Vec<(u32, u32, SimTime)>,
    /// (peer, au, time) for every unknown/in-debt lottery admission.
    pub lottery_admissions: Vec<(u32, u32, SimTime)>,
    /// Loyal invitation outcome counts: known, introduced, lottery,
    /// refractory-rejected, dropped.
    pub admit_outcomes: [u64; 5],
}

pub struct Sim {
    params: SimParams,
    effort: EffortSchedule,
    now: SimTime,
    queue: EventQueue<Event>,
    network: Network,
    content: Vec<ContentStore>,
    /// admission[au][peer]: that peer's gatekeeping state for that AU.
    admission: Vec<Vec<AdmissionState>>,
    ref_lists: Vec<Vec<BTreeSet<u32>>>,
    friends: Vec<Vec<u32>>,
    schedules: Vec<TaskSchedule>,
    ledgers: Vec<EffortLedger>,
    adv_ledger: EffortLedger,
    polls: HashMap<u64, PollState>,
    voters: HashMap<(u64, u32), VoterSide>,
    adv_polls: HashMap<u64, AdvPoll>,
    next_poll: u64,
    damage_proc: DamageProcess,
    rng_damage: ChaCha8Rng,
    rng_sample: ChaCha8Rng,
    rng_admission: ChaCha8Rng,
    rng_adversary: ChaCha8Rng,
    stats: RunStats,
    masked: bool,
    /// Day index of the adversary's last own-replica hash, per AU.
    adv_hash_day: Vec<i64>,
}

impl Sim {
    pub fn new(seed: u64, params: SimParams, preload: Option<&[Vec<(SimTime, SimTime)>]>) -> Self {
        let au_proto = ArchivalUnit { id: AuId(0), block_count: params.block_count, block_size: params.block_size };
        let effort = EffortSchedule::size_efforts(&au_proto, params.hash_throughput, params.verify_ratio, params.intro_share);
        let n = params.peers as usize;
        let aus = params.aus as usize;
        let mut rng_scenario = derive_stream(seed, StreamPurpose::Scenario, 0);

        let peer_ids: Vec<u32> = (0..params.peers).collect();
        let content = (0..params.aus)
            .map(|a| {
                let unit = ArchivalUnit { id: AuId(a), block_count: params.block_count, block_size: params.block_size };
                ContentStore::new(unit, peer_ids.iter().map(|&p| PeerId(p)))
            })
            .collect();

        // bootstrap: the population has a shared operating history, so every
        // loyal pair starts at an even grade
        let mut admission_st: Vec<Vec<AdmissionState>> = (0..aus)
            .map(|_| (0..n).map(|_| AdmissionState::default()).collect())
            .collect();
        for au_states in admission_st.iter_mut() {
            for (me, st) in au_states.iter_mut().enumerate() {
                for p in 0..n {
                    if p != me {
                        st.set_grade(PeerId(p as u32), GradeValue::Even, SimTime::ZERO);
                    }
                }
            }
        }

        let mut ref_lists: Vec<Vec<BTreeSet<u32>>> = Vec::with_capacity(aus);
        for _ in 0..aus {
            let mut per_peer = Vec::with_capacity(n);
            for me in 0..n {
                let others: Vec<u32> = (0..params.peers).filter(|&p| p != me as u32).collect();
                let k = params.ref_target.min(others.len());
                let mut set = BTreeSet::new();
                for idx in index_sample(&mut rng_scenario, others.len(), k) {
                    set.insert(others[idx]);
                }
                per_peer.push(set);
            }
            ref_lists.push(per_peer);
        }

        let friends: Vec<Vec<u32>> = (0..n)
            .map(|me| {
                let others: Vec<u32> = (0..params.peers).filter(|&p| p != me as u32).collect();
                let k = params.friends_count.min(others.len());
                index_sample(&mut rng_scenario, others.len(), k).iter().map(|i| others[i]).collect()
            })
            .collect();

        let schedules: Vec<TaskSchedule> = (0..n)
            .map(|me| match preload {
                Some(arts) => TaskSchedule::with_preload(arts[me].clone()),
                None => TaskSchedule::new(),
            })
            .collect();

        let damage_proc = DamageProcess { mtbf_years: params.mtbf_years, aus_per_disk: params.aus.max(1) };

        Sim {
            effort,
            now: SimTime::ZERO,
            queue: EventQueue::new(),
            network: Network::new(seed),
            content,
            admission: admission_st,
            ref_lists,
            friends,
            schedules,
            ledgers: (0..n).map(|_| EffortLedger::default()).collect(),
            adv_ledger: EffortLedger::default(),
            polls: HashMap::new(),
            voters: HashMap::new(),
            adv_polls: HashMap::new(),
            next_poll: 0,
            damage_proc,
            rng_damage: derive_stream(seed, StreamPurpose::Damage, 0),
            rng_sample: derive_stream(seed, StreamPurpose::PollSampling, 0),
            rng_admission: derive_stream(seed, StreamPurpose::Admission, 0),
            rng_adversary: derive_stream(seed, StreamPurpose::Adversary, 0),
            stats: RunStats::default(),
            masked: false,
            adv_hash_day: vec![-1; aus],
            params,
        }
    }

    /// Execute the whole run and collapse it into its statistics.
    pub fn run(mut self) -> RunStats {
        self.seed_initial_events();
        let horizon = self.params.horizon;
        while let Some((t, ev)) = self.queue.pop_until(horizon) {
            self.now = t;
            self.dispatch(ev);
        }
        self.now = horizon;
        self.finish()
    }

    fn seed_initial_events(&mut self) {
        for au in 0..self.params.aus {
            for peer in 0..self.params.peers {
                if let Some(gap) = self.damage_proc.next_gap(&mut self.rng_damage) {
                    self.at(gap, Event::Damage { au, peer });
                }
                let stagger = self.uniform_time(SimTime::ZERO, self.params.interval);
                self.at(stagger, Event::PollStart { au, peer });
            }
        }
        match self.params.adversary.kind {
            AdversaryKind::PipeStoppage if self.params.adversary.active() => {
                self.at(SimTime::ZERO, Event::MaskFlip);
            }
            AdversaryKind::AdmissionFlood if self.params.adversary.active() => {
                // garbage that would be dropped anyway is collapsed out; only
                // lottery survivors and refractory probes are simulated
                let victims = self.pick_victims();
                for victim in victims {
                    for au in 0..self.params.aus {
                        let rate = self.flood_admit_rate();
            let gap = SimTime::from_days(exp_gap(&mut self.rng_adversary, rate));
                        self.at(gap, Event::FloodAdmit { au, victim });
                    }
                }
            }
            AdversaryKind::BruteForce if self.params.adversary.active() => {
                let victims = self.pick_victims();
                for victim in victims {
                    for au in 0..self.params.aus {
                        // the minion identity starts known and in debt
                        let minion = PeerId(PeerId::MINION_BASE + victim);
                        self.admission[au as usize][victim as usize].set_grade(minion, GradeValue::Debt, SimTime::ZERO);
                        let jitter = self.uniform_time(SimTime::ZERO, SimTime::from_days(1.0));
                        self.at(jitter, Event::BruteTick { au, victim });
                    }
                }
            }
            _ => {}
        }
    }

    fn pick_victims(&mut self) -> Vec<u32> {
        let n = self.params.peers as usize;
        let k = ((self.params.adversary.coverage * n as f64).round() as usize).min(n);
        index_sample(&mut self.rng_adversary, n, k).iter().map(|i| i as u32).collect()
    }

    fn at(&mut self, t: SimTime, ev: Event) {
        let when = if t <= self.now { SimTime(self.now.0 + 1) } else { t };
        let _ = self.queue.schedule(self.now, when, ev);
    }

    fn uniform_time(&mut self, lo: SimTime, hi: SimTime) -> SimTime {
        if hi.0 <= lo.0 {
            return lo;
        }
        SimTime(self.rng_sample.gen_range(lo.0..hi.0))
    }

    fn send(&mut self, src: PeerId, dst: PeerId, bytes: u64, msg: Msg) {
        if let Some(at) = self.network.transmit(src, dst, bytes, self.now) {
            self.at(at, Event::Deliver(msg));
        }
    }

    /// Transmit with an explicit send time in the near future (the sender is
    /// still finishing a computation). Mask state is sampled now; the gap to
    /// the true send time is minutes at most.
    fn send_from(&mut self, src: PeerId, dst: PeerId, bytes: u64, msg: Msg, send_at: SimTime) {
        let base = self.now;
        self.now = send_at.max(base);
        self.send(src, dst, bytes, msg);
        self.now = base;
    }

    fn dispatch(&mut self, ev: Event) {
        match ev {
            Event::Damage { au, peer } => self.on_damage(au, peer),
            Event::PollStart { au, peer } => self.on_poll_start(au, peer),
            Event::Solicit { poll, invitee } => self.on_solicit(poll, invitee),
            Event::AckTimeout { poll, invitee } => self.on_ack_timeout(poll, invitee),
            Event::Discovery { poll } => self.on_discovery(poll),
            Event::Evaluate { poll } => self.on_evaluate(poll),
            Event::Tally { poll } => self.on_tally(poll),
            Event::Wrapup { poll } => self.on_wrapup(poll),
            Event::ProofDeadline { poll, voter } => self.on_proof_deadline(poll, voter),
            Event::VoteReady { poll, voter } => self.on_vote_ready(poll, voter),
            Event::ReceiptDeadline { poll, voter } => self.on_receipt_deadline(poll, voter),
            Event::Deliver(msg) => self.on_deliver(msg),
            Event::MaskFlip => self.on_mask_flip(),
            Event::FloodAdmit { au, victim } => self.on_flood_admit(au, victim),
            Event::BruteTick { au, victim } => self.on_brute_tick(au, victim),
        }
    }

    fn on_damage(&mut self, au: u32, peer: u32) {
        let now = self.now;
        let store = &mut self.content[au as usize];
        let id = store.fresh_damage_id();
        let unit = store.au;
        store.replica_mut(PeerId(peer)).inject_damage(&unit, id, now, &mut self.rng_damage);
        if let Some(gap) = self.damage_proc.next_gap(&mut self.rng_damage) {
            self.at(now + gap, Event::Damage { au, peer });
        }
    }

    fn on_poll_start(&mut self, au: u32, peer: u32) {
        let start = self.now;
        let interval = self.params.interval;
        // fixed cadence: the next poll is scheduled unconditionally
        if start + interval < self.params.horizon {
            self.at(start + interval, Event::PollStart { au, peer });
        }
        self.stats.total_polls += 1;
        self.stats.poll_starts.push((peer, au, start));

        let id = self.next_poll;
        self.next_poll += 1;
        let discovery_at = start + SimTime(interval.0 * 2 / 5);
        let eval_at = start + SimTime(interval.0 * 4 / 5);
        let refs: Vec<u32> = self.ref_lists[au as usize][peer as usize].iter().copied().collect();
        let inner_n = (2 * self.params.quorum).min(refs.len());
        let mut inner = BTreeSet::new();
        if inner_n > 0 {
            for idx in index_sample(&mut self.rng_sample, refs.len(), inner_n) {
                inner.insert(refs[idx]);
            }
        }
        for &invitee in inner.iter() {
            let t = self.uniform_time(start, discovery_at);
            self.at(t, Event::Solicit { poll: id, invitee });
        }
        self.at(discovery_at, Event::Discovery { poll: id });
        self.at(eval_at, Event::Evaluate { poll: id });
        self.polls.insert(
            id,
            PollState {
                poller: peer,
                au,
                start,
                eval_at,
                nonce: poll_nonce_for(id),
                inner,
                outer: BTreeSet::new(),
                responded: BTreeSet::new(),
                retried: BTreeSet::new(),
                votes: BTreeMap::new(),
                nomination_pool: BTreeMap::new(),
                outer_intro: BTreeMap::new(),
                alarmed: false,
                quorate: false,
                done: false,
                wrapup_at: eval_at,
                agreeing_outer: Vec::new(),
            },
        );
    }

    fn on_solicit(&mut self, poll: u64, invitee: u32) {
        let Some(ps) = self.polls.get(&poll) else { return };
        if ps.done || ps.votes.contains_key(&invitee) {
            return;
        }
        let (poller, au, eval_at) = (ps.poller, ps.au, ps.eval_at);
        let introducer = ps.outer_intro.get(&invitee).map(|&v| PeerId(v));
        // a fresh nonce-bound introductory effort per solicitation attempt
        let dur = SimTime::from_secs(self.effort.intro_effort);
        let Some(slot) = self.schedules[poller as usize].find_slot(self.now, dur, eval_at) else {
            self.stats.busy_failures += 1;
            return;
        };
        let _ = self.schedules[poller as usize].try_reserve(slot, slot + dur, TaskKind::ProofConstruction);
        self.ledgers[poller as usize].charge(EffortKind::Construct, self.effort.intro_effort);
        let send_at = slot + dur;
        let msg = Msg::Poll { poll, poller: PeerId(poller), au, invitee, eval_at, introducer };
        self.send_from(PeerId(poller), PeerId(invitee), CONTROL_BYTES, msg, send_at);
        self.at(send_at + self.params.ack_timeout, Event::AckTimeout { poll, invitee });
    }

    fn on_ack_timeout(&mut self, poll: u64, invitee: u32) {
        let Some(ps) = self.polls.get_mut(&poll) else { return };
        if ps.done || ps.responded.contains(&invitee) || !ps.retried.insert(invitee) {
            return;
        }
        let retry_deadline = ps.eval_at - SimTime::from_days(1.0);
        if retry_deadline > self.now {
            let t = self.uniform_time(self.now, retry_deadline);
            self.at(t, Event::Solicit { poll, invitee });
        }
    }

    fn on_discovery(&mut self, poll: u64) {
        let Some(ps) = self.polls.get(&poll) else { return };
        if ps.done {
            return;
        }
        let au = ps.au as usize;
        let poller = ps.poller;
        let eval_at = ps.eval_at;
        let refs = &self.ref_lists[au][poller as usize];
        let want = self.params.ref_target.saturating_sub(refs.len());
        let pool: Vec<(u32, u32)> = ps
            .nomination_pool
            .iter()
            .map(|(&p, &v)| (p, v))
            .filter(|(p, _)| *p != poller && !ps.inner.contains(p) && !refs.contains(p))
            .collect();
        let k = want.min(pool.len());
        if k == 0 {
            return;
        }
        let mut outer = Vec::with_capacity(k);
        for idx in index_sample(&mut self.rng_sample, pool.len(), k) {
            outer.push(pool[idx]);
        }
        let window_end = eval_at - SimTime::from_days(1.0);
        for &(invitee, _) in &outer {
            let t = self.uniform_time(self.now, window_end);
            self.at(t, Event::Solicit { poll, invitee });
        }
        if let Some(ps) = self.polls.get_mut(&poll) {
            for (invitee, introducer) in outer {
                ps.outer.insert(invitee);
                ps.outer_intro.insert(invitee, introducer);
            }
        }
    }

    fn on_evaluate(&mut self, poll: u64) {
        let Some(ps) = self.polls.get_mut(&poll) else { return };
        if ps.done {
            return;
        }
        let inner_votes = ps.votes.values().filter(|v| v.inner).count();
        ps.quorate = inner_votes >= self.params.quorum;
        let quorate = ps.quorate;
        let n_votes = ps.votes.len();
        let poller = ps.poller;
        let deadline = ps.start + self.params.interval;
        if n_votes == 0 {
            ps.done = true;
            self.stats.inquorate_polls += 1;
            let now = self.now;
            self.at(now, Event::Wrapup { poll });
            return;
        }
        let dur_s = self.effort.hash_effort
            + n_votes as f64 * self.effort.block_count as f64 * self.effort.per_block_vote_effort
                / self.effort.verify_ratio;
        let dur = SimTime::from_secs(dur_s);
        match self.schedules[poller as usize].find_slot(self.now, dur, deadline) {
            Some(slot) => {
                let _ = self.schedules[poller as usize].try_reserve(slot, slot + dur, TaskKind::Evaluation);
                self.at(slot + dur, Event::Tally { poll });
            }
            None => {
                // no room to evaluate before the next poll is due
                self.stats.busy_failures += 1;
                if !quorate {
                    self.stats.inquorate_polls += 1;
                }
                let ps = self.polls.get_mut(&poll).unwrap();
                ps.done = true;
                let now = self.now;
                self.at(now, Event::Wrapup { poll });
            }
        }
    }

    fn on_tally(&mut self, poll: u64) {
        let Some(mut ps) = self.polls.remove(&poll) else { return };
        if ps.done {
            self.polls.insert(poll, ps);
            return;
        }
        let poller = ps.poller;
        let au = ps.au as usize;
        let n_votes = ps.votes.len();
        self.ledgers[poller as usize].charge(EffortKind::Hash, self.effort.hash_effort);
        self.ledgers[poller as usize].charge(
            EffortKind::Verify,
            n_votes as f64 * self.effort.block_count as f64 * self.effort.per_block_vote_effort
                / self.effort.verify_ratio,
        );
        // every valid vote raises the voter's standing with the poller
        let voters: Vec<u32> = ps.votes.keys().copied().collect();
        for &voter in &voters {
            self.admission[au][poller as usize].record_outcome(PeerId(voter), true, self.now);
        }

        if ps.quorate {
            self.tally_and_repair(&mut ps);
        } else {
            self.stats.inquorate_polls += 1;
        }

        // receipts to every evaluated voter, valid because evaluation was
        // just paid for
        for voter in voters {
            let token = receipt_token(ps.nonce, voter);
            self.send(PeerId(poller), PeerId(voter), CONTROL_BYTES, Msg::Receipt { poll, voter, token });
        }

        if ps.alarmed {
            self.stats.alarms += 1;
        }
        let wrap = ps.wrapup_at.max(self.now);
        ps.done = true;
        self.polls.insert(poll, ps);
        self.at(wrap, Event::Wrapup { poll });
    }

    /// Block-wise evaluation: tally, order repairs for landslide losses, and
    /// determine agreeing outer voters against the post-repair state.
    fn tally_and_repair(&mut self, ps: &mut PollState) {
        let au = ps.au as usize;
        let poller = ps.poller;
        let own: DamageMap = damage_map(&self.content[au], PeerId(poller));
        let inner: Vec<(u32, DamageMap)> = ps
            .votes
            .iter()
            .filter(|(_, v)| v.inner)
            .map(|(&p, v)| (p, v.damage.clone()))
            .collect();
        let ballots: Vec<(bool, DamageMap)> = inner.iter().map(|(_, d)| (true, d.clone())).collect();

        let mut repaired: Vec<u32> = Vec::new();
        for (block, outcome) in tally_votes(&own, &ballots, self.params.max_disagree) {
            let own_val = own.get(&block).copied();
            match outcome {
                BlockOutcome::Agree => {}
                BlockOutcome::Disagree => {
                    let sources: Vec<u32> = inner
                        .iter()
                        .filter(|(_, d)| d.get(&block).copied() != own_val)
                        .map(|&(p, _)| p)
                        .collect();
                    if let Some(at) = self.order_repair(ps.au, poller, block, &sources, false) {
                        repaired.push(block);
                        ps.wrapup_at = ps.wrapup_at.max(at);
                    }
                }
                BlockOutcome::Inconclusive => {
                    ps.alarmed = true;
                    return;
                }
            }
        }

        // occasional frivolous repair to penalize repair free-riding
        if !ps.votes.is_empty() && self.rng_sample.gen_bool(self.params.frivolous_p) {
            let voters: Vec<u32> = ps.votes.keys().copied().collect();
            let v = voters[self.rng_sample.gen_range(0..voters.len())];
            let block = self.rng_sample.gen_range(0..self.params.block_count);
            if let Some(at) = self.order_repair(ps.au, poller, block, &[v], true) {
                ps.wrapup_at = ps.wrapup_at.max(at);
            }
        }

        // outer voters agree when they match the poller's repaired state
        let mut final_own = own;
        for b in &repaired {
            final_own.remove(b);
        }
        ps.agreeing_outer = ps
            .votes
            .iter()
            .filter(|(_, v)| !v.inner && v.damage == final_own)
            .map(|(&p, _)| p)
            .collect();
    }

    /// Request one block from a random reachable source holding it intact.
    /// Returns the delivery time of the repair, if one was obtained.
    fn order_repair(&mut self, au: u32, poller: u32, block: u32, sources: &[u32], frivolous: bool) -> Option<SimTime> {
        let mut order: Vec<u32> = sources.to_vec();
        for i in (1..order.len()).rev() {
            order.swap(i, self.rng_sample.gen_range(0..=i));
        }
        for src in order {
            // never take a repair from a source whose copy of the block is
            // itself damaged
            if self.content[au as usize].replica(PeerId(src)).block_damage(block).is_some() {
                continue;
            }
            // request out, block back
            let Some(req_at) = self.network.transmit(PeerId(poller), PeerId(src), CONTROL_BYTES, self.now) else {
                continue;
            };
            let save = self.now;
            self.now = req_at;
            let deliver = self.network.transmit(PeerId(src), PeerId(poller), self.params.block_size, self.now);
            self.now = save;
            let Some(deliver_at) = deliver else { continue };
            // serving a repair costs the source one block read and hash
            self.ledgers[src as usize]
                .charge(EffortKind::Hash, self.effort.hash_effort / self.effort.block_count.max(1) as f64);
            let msg = Msg::RepairBlock { poll: repair_marker(au, poller), block };
            self.at(deliver_at, Event::Deliver(msg));
            if frivolous {
                self.stats.frivolous_repairs += 1;
            } else {
                self.stats.repairs += 1;
            }
            return Some(deliver_at);
        }
        None
    }

    fn on_wrapup(&mut self, poll: u64) {
        let Some(ps) = self.polls.remove(&poll) else { return };
        let au = ps.au as usize;
        let poller = ps.poller;
        if ps.quorate && !ps.alarmed {
            self.stats.successful_polls += 1;
            // remove the voters whose votes determined the result, then
            // refresh from agreeing outer voters and friends
            let tallied: Vec<u32> = ps.votes.iter().filter(|(_, v)| v.inner).map(|(&p, _)| p).collect();
            for v in &tallied {
                self.ref_lists[au][poller as usize].remove(v);
                self.admission[au][poller as usize].drop_introducer(PeerId(*v));
            }
            for v in &ps.agreeing_outer {
                self.ref_lists[au][poller as usize].insert(*v);
            }
            let avail: Vec<u32> = self.friends[poller as usize]
                .iter()
                .copied()
                .filter(|f| !self.ref_lists[au][poller as usize].contains(f))
                .collect();
            let k = self.params.friends_insert.min(avail.len());
            if k > 0 {
                for idx in index_sample(&mut self.rng_sample, avail.len(), k) {
                    self.ref_lists[au][poller as usize].insert(avail[idx]);
                }
            }
        }
    }

    fn on_proof_deadline(&mut self, poll: u64, voter: u32) {
        let Some(vs) = self.voters.get(&(poll, voter)) else { return };
        if vs.phase == VoterPhase::AwaitProof {
            // the poller committed us to a slot and never paid: desertion
            let (au, poller) = (vs.au as usize, vs.poller);
            self.voters.remove(&(poll, voter));
            self.admission[au][voter as usize].record_outcome(poller, false, self.now);
        }
    }

    fn on_vote_ready(&mut self, poll: u64, voter: u32) {
        let Some(vs) = self.voters.get_mut(&(poll, voter)) else { return };
        if vs.phase != VoterPhase::Computing {
            return;
        }
        vs.phase = VoterPhase::AwaitReceipt;
        let (au, poller, eval_at) = (vs.au as usize, vs.poller, vs.eval_at);
        self.ledgers[voter as usize].charge(EffortKind::Hash, self.effort.hash_effort);
        self.ledgers[voter as usize]
            .charge(EffortKind::Construct, self.effort.vote_effort - self.effort.hash_effort);
        let damage = damage_map(&self.content[au], PeerId(voter));
        // nominations: a small random sample of the voter's own reference list
        let refs: Vec<u32> = self.ref_lists[au][voter as usize].iter().copied().collect();
        let want = ((refs.len() as f64 * self.params.nominate_frac).ceil() as usize)
            .min(self.params.nominate_cap)
            .min(refs.len());
        let mut nominations = Vec::with_capacity(want);
        if want > 0 {
            for idx in index_sample(&mut self.rng_sample, refs.len(), want) {
                nominations.push(refs[idx]);
            }
        }
        self.send(
            PeerId(voter),
            poller,
            vote_bytes(self.params.block_count),
            Msg::Vote { poll, voter, damage, nominations },
        );
        self.at(eval_at + SimTime(self.params.interval.0 / 5), Event::ReceiptDeadline { poll, voter });
    }

    fn on_receipt_deadline(&mut self, poll: u64, voter: u32) {
        let Some(vs) = self.voters.get(&(poll, voter)) else { return };
        if vs.phase == VoterPhase::AwaitReceipt {
            let (au, poller) = (vs.au as usize, vs.poller);
            self.admission[au][voter as usize].record_outcome(poller, false, self.now);
        }
        self.voters.remove(&(poll, voter));
    }

    fn on_deliver(&mut self, msg: Msg) {
        match msg {
            Msg::Poll { poll, poller, au, invitee, eval_at, introducer } => {
                self.on_poll_invitation(poll, poller, au, invitee, eval_at, introducer)
            }
            Msg::PollAck { poll, voter, accept } => self.on_poll_ack(poll, voter, accept),
            Msg::PollProof { poll, voter } => self.on_poll_proof(poll, voter),
            Msg::Vote { poll, voter, damage, nominations } => self.on_vote(poll, voter, damage, nominations),
            Msg::RepairBlock { poll, block } => {
                let (au, poller) = decode_repair_marker(poll);
                let now = self.now;
                self.content[au as usize].replica_mut(PeerId(poller)).apply_repair(block, now);
            }
            Msg::Receipt { poll, voter, token } => self.on_receipt(poll, voter, token),
        }
    }

    fn on_poll_invitation(
        &mut self,
        poll: u64,
        poller: PeerId,
        au: u32,
        invitee: u32,
        eval_at: SimTime,
        introducer: Option<PeerId>,
    ) {
        let outcome = self.admission[au as usize][invitee as usize].admit_invitation_full(
            poller,
            introducer.is_some(),
            self.now,
            &self.params.admission,
            &mut self.rng_admission,
        );
        let slot = match outcome {
            Admission::AdmittedKnown => 0,
            Admission::AdmittedIntroduced => 1,
            Admission::AdmittedLottery => 2,
            Admission::RefractoryReject => 3,
            Admission::Dropped => 4,
        };
        self.stats.admit_outcomes[slot] += 1;
        if matches!(outcome, Admission::AdmittedLottery) {
            self.stats.lottery_admissions.push((invitee, au, self.now));
        }
        if !outcome.admitted() {
            return;
        }
        self.ledgers[invitee as usize].charge(EffortKind::Session, SESSION_COST);
        self.ledgers[invitee as usize]
            .charge(EffortKind::Verify, self.effort.intro_effort / self.effort.verify_ratio);
        self.admit_vote_request(poll, poller, au, invitee, eval_at);
    }

    /// Post-admission voter logic: commit a computation slot and answer the
    /// invitation. Shared between loyal and minion pollers.
    fn admit_vote_request(&mut self, poll: u64, poller: PeerId, au: u32, invitee: u32, eval_at: SimTime) {
        let dur = SimTime::from_secs(self.effort.vote_effort);
        let earliest = self.now + self.params.ack_timeout;
        let deadline = eval_at - SimTime::from_secs(3600.0);
        // spread vote computations over the window rather than front-loading
        // them, but keep early invitees' votes ahead of the poller's discovery
        // point so their nominations can still seed the outer circle
        let discovery_at = eval_at - SimTime(self.params.interval.0 * 2 / 5);
        let spread_end = if self.now < discovery_at { discovery_at } else { deadline };
        let latest_start = spread_end.min(deadline).saturating_sub(dur);
        let slot = if latest_start > earliest {
            let preferred = self.uniform_time(earliest, latest_start);
            self.schedules[invitee as usize]
                .find_slot(preferred, dur, deadline)
                .or_else(|| self.schedules[invitee as usize].find_slot(earliest, dur, deadline))
        } else {
            self.schedules[invitee as usize].find_slot(earliest, dur, deadline)
        };
        let accept = slot.is_some();
        if let Some(s) = slot {
            let _ = self.schedules[invitee as usize].try_reserve(s, s + dur, TaskKind::VoteComputation);
            self.voters.insert(
                (poll, invitee),
                VoterSide {
                    au,
                    poller,
                    eval_at,
                    slot: (s, s + dur),
                    phase: VoterPhase::AwaitProof,
                    token: 0,
                },
            );
            self.at(s, Event::ProofDeadline { poll, voter: invitee });
        }
        self.send(PeerId(invitee), poller, CONTROL_BYTES, Msg::PollAck { poll, voter: invitee, accept });
    }

    fn on_poll_ack(&mut self, poll: u64, voter: u32, accept: bool) {
        if let Some(ap) = self.adv_polls.get(&poll) {
            let (minion, victim) = (ap.minion, ap.victim);
            if accept && self.params.adversary.defection != Defection::Intro {
                self.adv_ledger.charge(EffortKind::Construct, self.effort.remaining_effort);
                self.send(minion, PeerId(victim), CONTROL_BYTES, Msg::PollProof { poll, voter });
            }
            return;
        }
        let Some(ps) = self.polls.get_mut(&poll) else { return };
        if ps.done {
            return;
        }
        ps.responded.insert(voter);
        let (poller, eval_at) = (ps.poller, ps.eval_at);
        if accept {
            let dur = SimTime::from_secs(self.effort.remaining_effort);
            let Some(slot) = self.schedules[poller as usize].find_slot(self.now, dur, eval_at) else {
                self.stats.busy_failures += 1;
                return;
            };
            let _ = self.schedules[poller as usize].try_reserve(slot, slot + dur, TaskKind::ProofConstruction);
            self.ledgers[poller as usize].charge(EffortKind::Construct, self.effort.remaining_effort);
            self.send_from(PeerId(poller), PeerId(voter), CONTROL_BYTES, Msg::PollProof { poll, voter }, slot + dur);
        } else {
            // reluctant peer: retry once later in the window
            let ps = self.polls.get_mut(&poll).unwrap();
            if !ps.retried.insert(voter) {
                return;
            }
            let retry_deadline = eval_at - SimTime::from_days(1.0);
            if retry_deadline > self.now {
                let t = self.uniform_time(self.now, retry_deadline);
                self.at(t, Event::Solicit { poll, invitee: voter });
            }
        }
    }

    fn on_poll_proof(&mut self, poll: u64, voter: u32) {
        let Some(vs) = self.voters.get_mut(&(poll, voter)) else { return };
        if vs.phase != VoterPhase::AwaitProof || self.now > vs.slot.0 {
            return;
        }
        vs.phase = VoterPhase::Computing;
        vs.token = receipt_token(poll_nonce_for(poll), voter);
        let slot_end = vs.slot.1;
        self.ledgers[voter as usize]
            .charge(EffortKind::Verify, self.effort.remaining_effort / self.effort.verify_ratio);
        self.at(slot_end, Event::VoteReady { poll, voter });
    }

    fn on_vote(&mut self, poll: u64, voter: u32, damage: DamageMap, nominations: Vec<u32>) {
        if let Some(ap) = self.adv_polls.get(&poll) {
            let (minion, victim, au) = (ap.minion, ap.victim, ap.au);
            if self.params.adversary.defection == Defection::None {
                // verify the vote's per-block proofs; the incorruptible copy
                // is hashed once per AU per day across the victim batch
                self.adv_ledger.charge(
                    EffortKind::Verify,
                    self.effort.block_count as f64 * self.effort.per_block_vote_effort / self.effort.verify_ratio,
                );
                let day = self.now.0 / SimTime::from_days(1.0).0;
                if self.adv_hash_day[au as usize] != day {
                    self.adv_hash_day[au as usize] = day;
                    self.adv_ledger.charge(EffortKind::Hash, self.effort.hash_effort);
                }
                let token = receipt_token(poll_nonce_for(poll), voter);
                self.send(minion, PeerId(victim), CONTROL_BYTES, Msg::Receipt { poll, voter, token });
            }
            return;
        }
        let Some(ps) = self.polls.get_mut(&poll) else { return };
        // unsolicited or duplicate votes are ignored entirely
        if ps.done
            || (!ps.inner.contains(&voter) && !ps.outer.contains(&voter))
            || ps.votes.contains_key(&voter)
        {
            return;
        }
        ps.responded.insert(voter);
        let inner = ps.inner.contains(&voter);
        let (au, poller) = (ps.au as usize, ps.poller);
        ps.votes.insert(voter, VoteRec { damage, inner });
        // split the carried identities between the outer-circle candidate
        // pool and the admission-control introduction directory
        let mut intros: Vec<PeerId> = Vec::new();
        let mut noms: Vec<u32> = Vec::new();
        for nom in nominations {
            if nom == poller {
                continue;
            }
            if self.rng_sample.gen_bool(self.params.intro_split) {
                intros.push(PeerId(nom));
            } else {
                noms.push(nom);
            }
        }
        let ps = self.polls.get_mut(&poll).unwrap();
        for nom in noms {
            ps.nomination_pool.entry(nom).or_insert(voter);
        }
        if !intros.is_empty() {
            self.admission[au][poller as usize].register_introductions(
                PeerId(voter),
                intros,
                &self.params.admission,
            );
        }
    }

    fn on_receipt(&mut self, poll: u64, voter: u32, token: u64) {
        let Some(vs) = self.voters.get(&(poll, voter)) else { return };
        if vs.phase != VoterPhase::AwaitReceipt {
            return;
        }
        let ok = vs.token == token;
        let (au, poller) = (vs.au as usize, vs.poller);
        self.voters.remove(&(poll, voter));
        if ok {
            // a completed exchange costs the poller standing with the voter
            self.admission[au][voter as usize].lower_grade(poller, self.now);
        } else {
            self.admission[au][voter as usize].record_outcome(poller, false, self.now);
        }
    }

    fn on_mask_flip(&mut self) {
        let adv = self.params.adversary;
        if self.masked {
            self.network.unblock_all();
            self.masked = false;
            self.at(self.now + adv.recuperation, Event::MaskFlip);
        } else {
            let victims = self.pick_victims();
            self.network.block(victims.into_iter().map(PeerId));
            self.masked = true;
            self.at(self.now + adv.attack, Event::MaskFlip);
        }
    }

    /// Thinned arrival rate of flood garbage that survives the unknown-peer
    /// drop lottery, per victim per AU per day.
    fn flood_admit_rate(&self) -> f64 {
        self.params.adversary.flood_per_day * (1.0 - self.params.admission.drop_unknown)
    }

    fn on_flood_admit(&mut self, au: u32, victim: u32) {
        let adv = self.params.adversary;
        if !adv.in_attack_window(self.now) {
            let resume = adv.next_window_start(self.now);
            let rate = self.flood_admit_rate();
            let gap = SimTime::from_days(exp_gap(&mut self.rng_adversary, rate));
            self.at(resume + gap, Event::FloodAdmit { au, victim });
            return;
        }
        // each arrival presents a fresh throwaway identity
        let id = PeerId(PeerId::MINION_BASE + (1 << 25) + self.rng_adversary.gen_range(0..1 << 24));
        let outcome = self.admission[au as usize][victim as usize].admit_invitation(
            id,
            self.now,
            &self.params.admission,
            &mut self.rng_admission,
        );
        let next_from = match outcome {
            Admission::AdmittedLottery => {
                self.stats.lottery_admissions.push((victim, au, self.now));
                // garbage got through: the victim pays session setup plus the
                // cost of discovering the effort proof is bogus
                self.ledgers[victim as usize].charge(EffortKind::Session, SESSION_COST);
                self.ledgers[victim as usize]
                    .charge(EffortKind::Verify, self.effort.intro_effort / self.effort.verify_ratio);
                // the handshake is symmetric: the victim answers the admitted
                // stranger with its own introductory proof before the exchange
                // goes anywhere
                self.ledgers[victim as usize].charge(EffortKind::Construct, self.effort.intro_effort);
                self.now + self.params.admission.refractory
            }
            Admission::RefractoryReject => self.admission[au as usize][victim as usize]
                .refractory_until()
                .unwrap_or(self.now),
            _ => self.now,
        };
        let rate = self.flood_admit_rate();
        let gap = SimTime::from_days(exp_gap(&mut self.rng_adversary, rate));
        self.at(next_from.max(self.now) + gap, Event::FloodAdmit { au, victim });
    }

    fn on_brute_tick(&mut self, au: u32, victim: u32) {
        let adv = self.params.adversary;
        if !adv.in_attack_window(self.now) {
            self.at(adv.next_window_start(self.now), Event::BruteTick { au, victim });
            return;
        }
        if let Some(until) = self.admission[au as usize][victim as usize].refractory_until() {
            if self.now < until {
                self.at(until, Event::BruteTick { au, victim });
                return;
            }
        }
        let minion = PeerId(PeerId::MINION_BASE + victim);
        let eval_at = self.now + SimTime::from_days(2.0);
        // skip victims that could not accept anyway
        let dur = SimTime::from_secs(self.effort.vote_effort);
        let earliest = self.now + self.params.ack_timeout;
        let deadline = eval_at - SimTime::from_secs(3600.0);
        if self.schedules[victim as usize].find_slot(earliest, dur, deadline).is_none() {
            self.at(self.now + SimTime::from_days(1.0), Event::BruteTick { au, victim });
            return;
        }
        // hammer until admitted; every attempt needs a fresh nonce-bound
        // introductory effort
        loop {
            self.adv_ledger.charge(EffortKind::Construct, self.effort.intro_effort);
            let outcome = self.admission[au as usize][victim as usize].admit_invitation(
                minion,
                self.now,
                &self.params.admission,
                &mut self.rng_admission,
            );
            match outcome {
                Admission::Dropped => continue,
                Admission::RefractoryReject => {
                    self.at(self.now + SimTime::from_days(1.0), Event::BruteTick { au, victim });
                    return;
                }
                _ => {
                    if matches!(outcome, Admission::AdmittedLottery) {
                        self.stats.lottery_admissions.push((victim, au, self.now));
                    }
                    break;
                }
            }
        }
        let poll = self.next_poll;
        self.next_poll += 1;
        self.adv_polls.insert(poll, AdvPoll { au, victim, minion });
        self.ledgers[victim as usize].charge(EffortKind::Session, SESSION_COST);
        self.ledgers[victim as usize]
            .charge(EffortKind::Verify, self.effort.intro_effort / self.effort.verify_ratio);
        self.admit_vote_request(poll, minion, au, victim, eval_at);
        self.at(self.now + self.params.admission.refractory, Event::BruteTick { au, victim });
    }

    fn finish(mut self) -> RunStats {
        let horizon = self.params.horizon;
        let n_replicas = (self.params.peers as usize) * (self.params.aus as usize);
        let mut damaged_time = 0.0f64;
        for store in &self.content {
            for p in 0..self.params.peers {
                let rep = store.replica(PeerId(p));
                let mut intervals: Vec<(i64, i64)> = rep
                    .log
                    .iter()
                    .map(|r| {
                        let end = r.repaired_at.map(|t| t.0).unwrap_or(horizon.0).min(horizon.0);
                        (r.damaged_at.0, end)
                    })
                    .filter(|(s, e)| e > s)
                    .collect();
                intervals.sort_unstable();
                let mut cur: Option<(i64, i64)> = None;
                for (s, e) in intervals {
                    match cur {
                        Some((cs, ce)) if s <= ce => cur = Some((cs, ce.max(e))),
                        Some((cs, ce)) => {
                            damaged_time += (ce - cs) as f64;
                            cur = Some((s, e));
                        }
                        None => cur = Some((s, e)),
                    }
                }
                if let Some((cs, ce)) = cur {
                    damaged_time += (ce - cs) as f64;
                }
            }
        }
        self.stats.access_failure = damaged_time / (horizon.0 as f64 * n_replicas as f64);
        self.stats.loyal_effort = self.ledgers.iter().map(|l| l.total_spent()).sum();
        self.stats.adversary_effort = self.adv_ledger.total_spent();
        self.stats.mean_busy_days = self.schedules.iter().map(|s| s.busy_ms() as f64).sum::<f64>()
            / (self.params.peers as f64 * SimTime::from_days(1.0).0 as f64);
        self.stats.busy_intervals = self.schedules.iter().map(|s| s.merged_busy_intervals()).collect();
        self.stats
    }
}

fn damage_map(store: &ContentStore, peer: PeerId) -> DamageMap {
    let rep = store.replica(peer);
    rep.damaged_blocks().map(|b| (b, rep.block_damage(b).unwrap())).collect()
}

/// Deterministic per-poll nonce known to both ends, letting a voter predict
/// the receipt an honest evaluator would derive.
fn poll_nonce_for(poll: u64) -> u64 {
    mix64(&[poll, 0x6e6f_6e63])
}

fn receipt_token(nonce: u64, voter: u32) -> u64 {
    mix64(&[nonce, voter as u64, 0x7263_7074])
}

// repair deliveries carry (au, destination) packed into the poll field
fn repair_marker(au: u32, poller: u32) -> u64 {
    (1 << 63) | ((au as u64) << 32) | poller as u64
}

fn decode_repair_marker(marker: u64) -> (u32, u32) {
    (((marker >> 32) & 0x7FFF_FFFF) as u32, (marker & 0xFFFF_FFFF) as u32)
}

fn exp_gap(rng: &mut impl Rng, rate_per_day: f64) -> f64 {
    let u: f64 = rng.gen_range(f64::EPSILON..1.0);
    -u.ln() / rate_per_day
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn baseline_smoke() {
        let mut p = SimParams::default();
        p.aus = 50;
        let stats = Sim::new(1, p, None).run();
        eprintln!(
            "polls={} ok={} inq={} busy={} alarms={} repairs={} frv={} af={:.3e} effort={:.0} busy_days={:.2}",
            stats.total_polls,
            stats.successful_polls,
            stats.inquorate_polls,
            stats.busy_failures,
            stats.alarms,
            stats.repairs,
            stats.frivolous_repairs,
            stats.access_failure,
            stats.loyal_effort,
            stats.mean_busy_days
        );
        assert!(stats.total_polls > 0);
    }
}
