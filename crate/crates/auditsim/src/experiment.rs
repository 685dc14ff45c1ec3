//! Scenario orchestration: multi-seed runs, the schedule-layering technique
//! for large AU collections, paired baseline runs for the ratio metrics, and
//! CSV report emission.

use crate::config::ScenarioConfig;
use crate::engine::{mix64, SimTime};
use crate::metrics::{self, MetricsRow, Summary};
use crate::sim::{RunStats, Sim, SimParams};
use std::fmt::Write as _;

/// One completed (seed, layer) simulation with its paired baseline.
#[derive(Debug)]
pub struct LayerOutcome {
    pub seed: u64,
    pub layer: u32,
    pub stats: RunStats,
    pub baseline: RunStats,
    pub metrics: MetricsRow,
}

#[derive(Debug)]
pub struct ScenarioReport {
    pub scenario: String,
    pub outcomes: Vec<LayerOutcome>,
    pub summary: Summary,
}

/// Seed for one layer of one chain; layers must diverge or their stochastic
/// processes would be perfectly correlated.
fn layer_seed(seed: u64, layer: u32) -> u64 {
    mix64(&[seed, layer as u64, 0x6c61_7965])
}

/// Runs one chain of `layers` simulations, each preloaded with the busy
/// intervals accumulated from the layers below it.
fn run_chain(seed: u64, layers: u32, params: &SimParams) -> Vec<RunStats> {
    let mut acc: Vec<Vec<(SimTime, SimTime)>> = vec![Vec::new(); params.peers as usize];
    let mut out = Vec::with_capacity(layers as usize);
    for layer in 0..layers {
        let preload = if layer == 0 { None } else { Some(acc.as_slice()) };
        let mut stats = Sim::new(layer_seed(seed, layer), params.clone(), preload).run();
        if std::env::var_os("SIM_DEBUG").is_some() {
            eprintln!(
                "debug seed={seed} layer={layer} polls={} ok={} inq={} busy={} alarms={} repairs={} frv={} corrupt={}",
                stats.total_polls,
                stats.successful_polls,
                stats.inquorate_polls,
                stats.busy_failures,
                stats.alarms,
                stats.repairs,
                stats.frivolous_repairs,
                stats.corrupt_repairs,
            );
            eprintln!("debug admit known/intro/lottery/refractory/dropped = {:?}", stats.admit_outcomes);
            eprintln!("debug mean_busy_days={:.3} af={:.4e}", stats.mean_busy_days, stats.access_failure);
            let ivals: usize = stats.busy_intervals.iter().map(Vec::len).sum();
            eprintln!("debug busy intervals carried forward = {ivals}");
        }
        // busy_intervals are already merged with this layer's preload, so
        // they replace the accumulator (extending would re-add every prior
        // layer and break the preload's disjointness). Moving them out keeps
        // each retained RunStats small; deep chains would otherwise hold a
        // cumulative interval copy per layer.
        for (mine, theirs) in acc.iter_mut().zip(stats.busy_intervals.drain(..)) {
            *mine = theirs;
        }
        out.push(stats);
    }
    out
}

/// Full scenario execution: per seed, an attack chain and (when an adversary
/// is configured) a paired baseline chain under the same seed. Seeds run on
/// parallel workers; layers within a chain are strictly sequential.
pub fn run_scenario(cfg: &ScenarioConfig) -> ScenarioReport {
    let params = cfg.sim_params();
    let base_params = cfg.baseline_params();
    let attacked = params.adversary.active();
    let layers = cfg.layers;

    let mut per_seed: Vec<(u64, Vec<RunStats>, Vec<RunStats>)> = Vec::new();
    std::thread::scope(|scope| {
        let handles: Vec<_> = cfg
            .seeds
            .iter()
            .map(|&seed| {
                let params = &params;
                let base_params = &base_params;
                scope.spawn(move || {
                    let base = run_chain(seed, layers, base_params);
                    let att = if attacked { run_chain(seed, layers, params) } else { Vec::new() };
                    (seed, att, base)
                })
            })
            .collect();
        for h in handles {
            per_seed.push(h.join().expect("simulation worker panicked"));
        }
    });
    per_seed.sort_by_key(|(seed, _, _)| *seed);

    let mut outcomes = Vec::new();
    for (seed, att, base) in per_seed {
        for layer in 0..layers as usize {
            let (stats, baseline) = if attacked {
                (att[layer].clone(), base[layer].clone())
            } else {
                (base[layer].clone(), base[layer].clone())
            };
            let m = metrics::row(&stats, &baseline);
            outcomes.push(LayerOutcome { seed, layer: layer as u32 + 1, stats, baseline, metrics: m });
        }
    }
    let rows: Vec<MetricsRow> = outcomes.iter().map(|o| o.metrics).collect();
    let summary = metrics::summarize(&rows);
    ScenarioReport { scenario: cfg.scenario.clone(), outcomes, summary }
}

pub const CSV_HEADER: &str = "scenario,seed,layer,access_failure,delay_ratio,friction,cost_ratio,alarms,successful_polls,loyal_effort,adversary_effort";

fn push_row(out: &mut String, scenario: &str, seed: &str, layer: &str, m: &MetricsRow) {
    let _ = writeln!(
        out,
        "{scenario},{seed},{layer},{},{},{},{},{},{},{},{}",
        m.access_failure,
        m.delay_ratio,
        m.friction,
        m.cost_ratio,
        m.alarms,
        m.successful_polls,
        m.loyal_effort,
        m.adversary_effort
    );
}

/// One detail row per (scenario, seed, layer), then mean/min/max aggregate
/// rows per scenario. Byte-deterministic for fixed inputs.
pub fn emit_csv(reports: &[ScenarioReport]) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for rep in reports {
        for o in &rep.outcomes {
            push_row(&mut out, &rep.scenario, &o.seed.to_string(), &o.layer.to_string(), &o.metrics);
        }
        push_row(&mut out, &rep.scenario, "mean", "all", &rep.summary.mean);
        push_row(&mut out, &rep.scenario, "min", "all", &rep.summary.min);
        push_row(&mut out, &rep.scenario, "max", "all", &rep.summary.max);
    }
    out
}
