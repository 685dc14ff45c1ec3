//! Flat `key = value` scenario configuration files: one key per line,
//! `#` comments, every field addressable. Designed for diff-able experiment
//! records; `parse(serialize(cfg)) == cfg` exactly.

use crate::admission::AdmissionParams;
use crate::adversary::{AdversaryConfig, AdversaryKind, Defection};
use crate::engine::SimTime;
use crate::sim::SimParams;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub scenario: String,
    pub peers: u32,
    pub aus_per_layer: u32,
    pub layers: u32,
    pub inter_poll_days: f64,
    pub quorum: usize,
    pub max_disagree: usize,
    pub mtbf_years: f64,
    pub drop_unknown: f64,
    pub drop_indebt: f64,
    pub refractory_days: f64,
    pub decay_days: f64,
    pub horizon_days: f64,
    pub seeds: Vec<u64>,
    pub z: f64,
    pub hash_throughput: f64,
    pub intro_share: f64,
    pub block_count: u32,
    pub block_size: u64,
    pub ref_target: usize,
    pub friends_count: usize,
    pub friends_insert: usize,
    pub nominate_frac: f64,
    pub nominate_cap: usize,
    pub intro_split: f64,
    pub frivolous_p: f64,
    pub intro_cap: usize,
    pub adversary: String,
    pub coverage: f64,
    pub attack_days: f64,
    pub recuperation_days: f64,
    pub defection: String,
    pub flood_per_day: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            scenario: "baseline".into(),
            peers: 100,
            aus_per_layer: 50,
            layers: 1,
            inter_poll_days: 90.0,
            quorum: 10,
            max_disagree: 3,
            mtbf_years: 5.0,
            drop_unknown: 0.90,
            drop_indebt: 0.80,
            refractory_days: 1.0,
            decay_days: 90.0,
            horizon_days: 730.0,
            seeds: vec![1, 2, 3],
            z: 20.0,
            hash_throughput: 50e6,
            intro_share: 0.2,
            block_count: 512,
            block_size: 1 << 20,
            ref_target: 60,
            friends_count: 10,
            friends_insert: 2,
            nominate_frac: 0.1,
            nominate_cap: 10,
            intro_split: 0.5,
            frivolous_p: 0.1,
            intro_cap: 3,
            adversary: "none".into(),
            coverage: 1.0,
            attack_days: 0.0,
            recuperation_days: 30.0,
            defection: "none".into(),
            flood_per_day: 300.0,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {0}: expected `key = value`")]
    Malformed(usize),
    #[error("line {0}: unknown key `{1}`")]
    UnknownKey(usize, String),
    #[error("line {0}: bad value for `{1}`: {2}")]
    BadValue(usize, String, String),
    #[error("invariant violated: {0}")]
    Invalid(String),
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = ScenarioConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Malformed(i + 1))?;
            cfg.set(key.trim(), value.trim()).map_err(|e| match e {
                SetError::Unknown => ConfigError::UnknownKey(i + 1, key.trim().to_string()),
                SetError::Bad(msg) => ConfigError::BadValue(i + 1, key.trim().to_string(), msg),
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.layers as u64 * self.aus_per_layer as u64 > 600 {
            return Err(ConfigError::Invalid("layers * aus_per_layer must be <= 600".into()));
        }
        if self.layers == 0 || self.aus_per_layer == 0 || self.peers == 0 {
            return Err(ConfigError::Invalid("peers, layers, aus_per_layer must be positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(ConfigError::Invalid("at least one seed required".into()));
        }
        if !matches!(self.adversary.as_str(), "none" | "stoppage" | "flood" | "bruteforce") {
            return Err(ConfigError::Invalid(format!("unknown adversary `{}`", self.adversary)));
        }
        if !matches!(self.defection.as_str(), "none" | "intro" | "remaining") {
            return Err(ConfigError::Invalid(format!("unknown defection `{}`", self.defection)));
        }
        Ok(())
    }

    /// Sets one field from its textual form; used by both the parser and the
    /// sweep machinery (`--vary key=v1,v2,...`).
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), SetError> {
        fn num<T: std::str::FromStr>(v: &str) -> Result<T, SetError>
        where
            T::Err: std::fmt::Display,
        {
            v.parse().map_err(|e: T::Err| SetError::Bad(e.to_string()))
        }
        match key {
            "scenario" => self.scenario = value.to_string(),
            "peers" => self.peers = num(value)?,
            "aus_per_layer" => self.aus_per_layer = num(value)?,
            "layers" => self.layers = num(value)?,
            "inter_poll_days" => self.inter_poll_days = num(value)?,
            "quorum" => self.quorum = num(value)?,
            "max_disagree" => self.max_disagree = num(value)?,
            "mtbf_years" => self.mtbf_years = num(value)?,
            "drop_unknown" => self.drop_unknown = num(value)?,
            "drop_indebt" => self.drop_indebt = num(value)?,
            "refractory_days" => self.refractory_days = num(value)?,
            "decay_days" => self.decay_days = num(value)?,
            "horizon_days" => self.horizon_days = num(value)?,
            "seeds" => {
                let parsed: Result<Vec<u64>, _> = value.split(',').map(|s| s.trim().parse()).collect();
                self.seeds = parsed.map_err(|e| SetError::Bad(format!("{e}")))?;
            }
            "z" => self.z = num(value)?,
            "hash_throughput" => self.hash_throughput = num(value)?,
            "intro_share" => self.intro_share = num(value)?,
            "block_count" => self.block_count = num(value)?,
            "block_size" => self.block_size = num(value)?,
            "ref_target" => self.ref_target = num(value)?,
            "friends_count" => self.friends_count = num(value)?,
            "friends_insert" => self.friends_insert = num(value)?,
            "nominate_frac" => self.nominate_frac = num(value)?,
            "nominate_cap" => self.nominate_cap = num(value)?,
            "intro_split" => self.intro_split = num(value)?,
            "frivolous_p" => self.frivolous_p = num(value)?,
            "intro_cap" => self.intro_cap = num(value)?,
            "adversary" => self.adversary = value.to_string(),
            "coverage" => self.coverage = num(value)?,
            "attack_days" => self.attack_days = num(value)?,
            "recuperation_days" => self.recuperation_days = num(value)?,
            "defection" => self.defection = value.to_string(),
            "flood_per_day" => self.flood_per_day = num(value)?,
            _ => return Err(SetError::Unknown),
        }
        Ok(())
    }

    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("scenario", self.scenario.clone());
        kv("peers", self.peers.to_string());
        kv("aus_per_layer", self.aus_per_layer.to_string());
        kv("layers", self.layers.to_string());
        kv("inter_poll_days", fmt_f64(self.inter_poll_days));
        kv("quorum", self.quorum.to_string());
        kv("max_disagree", self.max_disagree.to_string());
        kv("mtbf_years", fmt_f64(self.mtbf_years));
        kv("drop_unknown", fmt_f64(self.drop_unknown));
        kv("drop_indebt", fmt_f64(self.drop_indebt));
        kv("refractory_days", fmt_f64(self.refractory_days));
        kv("decay_days", fmt_f64(self.decay_days));
        kv("horizon_days", fmt_f64(self.horizon_days));
        kv("seeds", self.seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(","));
        kv("z", fmt_f64(self.z));
        kv("hash_throughput", fmt_f64(self.hash_throughput));
        kv("intro_share", fmt_f64(self.intro_share));
        kv("block_count", self.block_count.to_string());
        kv("block_size", self.block_size.to_string());
        kv("ref_target", self.ref_target.to_string());
        kv("friends_count", self.friends_count.to_string());
        kv("friends_insert", self.friends_insert.to_string());
        kv("nominate_frac", fmt_f64(self.nominate_frac));
        kv("nominate_cap", self.nominate_cap.to_string());
        kv("intro_split", fmt_f64(self.intro_split));
        kv("frivolous_p", fmt_f64(self.frivolous_p));
        kv("intro_cap", self.intro_cap.to_string());
        kv("adversary", self.adversary.clone());
        kv("coverage", fmt_f64(self.coverage));
        kv("attack_days", fmt_f64(self.attack_days));
        kv("recuperation_days", fmt_f64(self.recuperation_days));
        kv("defection", self.defection.clone());
        kv("flood_per_day", fmt_f64(self.flood_per_day));
        out
    }

    pub fn adversary_config(&self) -> AdversaryConfig {
        let kind = match self.adversary.as_str() {
            "stoppage" => AdversaryKind::PipeStoppage,
            "flood" => AdversaryKind::AdmissionFlood,
            "bruteforce" => AdversaryKind::BruteForce,
            _ => AdversaryKind::None,
        };
        let defection = match self.defection.as_str() {
            "intro" => Defection::Intro,
            "remaining" => Defection::Remaining,
            _ => Defection::None,
        };
        AdversaryConfig {
            kind,
            coverage: self.coverage,
            attack: SimTime::from_days(self.attack_days),
            recuperation: SimTime::from_days(self.recuperation_days),
            defection,
            flood_per_day: self.flood_per_day,
        }
    }

    /// Parameters for one layer's simulation under this scenario's adversary.
    pub fn sim_params(&self) -> SimParams {
        SimParams {
            peers: self.peers,
            aus: self.aus_per_layer,
            interval: SimTime::from_days(self.inter_poll_days),
            horizon: SimTime::from_days(self.horizon_days),
            quorum: self.quorum,
            max_disagree: self.max_disagree,
            ref_target: self.ref_target,
            friends_count: self.friends_count,
            friends_insert: self.friends_insert,
            nominate_frac: self.nominate_frac,
            nominate_cap: self.nominate_cap,
            intro_split: self.intro_split,
            frivolous_p: self.frivolous_p,
            admission: AdmissionParams {
                drop_unknown: self.drop_unknown,
                drop_in_debt: self.drop_indebt,
                refractory: SimTime::from_days(self.refractory_days),
                decay_interval: SimTime::from_days(self.decay_days),
                intro_cap: self.intro_cap,
            },
            mtbf_years: self.mtbf_years,
            block_count: self.block_count,
            block_size: self.block_size,
            hash_throughput: self.hash_throughput,
            verify_ratio: self.z,
            intro_share: self.intro_share,
            ack_timeout: SimTime::from_secs(7200.0),
            adversary: self.adversary_config(),
        }
    }

    /// Same parameters with the adversary removed, for paired baseline runs.
    pub fn baseline_params(&self) -> SimParams {
        let mut p = self.sim_params();
        p.adversary = AdversaryConfig::none();
        p
    }
}

#[derive(Debug)]
pub enum SetError {
    Unknown,
    Bad(String),
}

fn fmt_f64(v: f64) -> String {
    // shortest representation that round-trips
    let s = format!("{v}");
    debug_assert_eq!(s.parse::<f64>().unwrap(), v);
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = ScenarioConfig::default();
        let text = cfg.serialize();
        assert_eq!(ScenarioConfig::parse(&text).unwrap(), cfg);
    }

    #[test]
    fn comments_and_blank_lines_ignored() {
        let text = "# a comment\n\npeers = 42 # trailing\n";
        let cfg = ScenarioConfig::parse(text).unwrap();
        assert_eq!(cfg.peers, 42);
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(ScenarioConfig::parse("peerss = 9\n").is_err());
    }

    #[test]
    fn layering_budget_enforced() {
        assert!(ScenarioConfig::parse("layers = 13\n").is_err());
        assert!(ScenarioConfig::parse("layers = 12\n").is_ok());
    }

    #[test]
    fn seeds_list_parses() {
        let cfg = ScenarioConfig::parse("seeds = 7, 8, 9\n").unwrap();
        assert_eq!(cfg.seeds, vec![7, 8, 9]);
    }

    #[test]
    fn modified_config_round_trips() {
        let mut cfg = ScenarioConfig::default();
        cfg.set("adversary", "stoppage").unwrap();
        cfg.set("coverage", "0.4").unwrap();
        cfg.set("attack_days", "60").unwrap();
        cfg.validate().unwrap();
        let text = cfg.serialize();
        assert_eq!(ScenarioConfig::parse(&text).unwrap(), cfg);
    }
}
