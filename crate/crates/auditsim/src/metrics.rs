//! The four evaluation metrics, computed from completed run statistics, and
//! their aggregation across seeds and layers.

use crate::sim::RunStats;

/// Metrics for one (seed, layer) run, always relative to a paired baseline
/// run with the same seed and no adversary.
#[derive(Debug, Clone, Copy)]
pub struct MetricsRow {
    pub access_failure: f64,
    pub delay_ratio: f64,
    pub friction: f64,
    pub cost_ratio: f64,
    pub alarms: u64,
    pub successful_polls: u64,
    pub loyal_effort: f64,
    pub adversary_effort: f64,
}

/// Ratio of mean time between successful polls, attack over baseline. Both
/// runs cover the same horizon and population, so the mean inter-success
/// time is inversely proportional to the global success count.
pub fn delay_ratio(attack: &RunStats, baseline: &RunStats) -> f64 {
    if baseline.successful_polls == 0 {
        return f64::NAN;
    }
    if attack.successful_polls == 0 {
        return f64::INFINITY;
    }
    baseline.successful_polls as f64 / attack.successful_polls as f64
}

/// Loyal effort per successful poll, attack over baseline.
pub fn friction(attack: &RunStats, baseline: &RunStats) -> f64 {
    if baseline.successful_polls == 0 {
        return f64::NAN;
    }
    if attack.successful_polls == 0 {
        return f64::INFINITY;
    }
    let base = baseline.loyal_effort / baseline.successful_polls as f64;
    let att = attack.loyal_effort / attack.successful_polls as f64;
    att / base
}

/// Total adversary effort over total loyal effort. Zero for idle or
/// effortless adversaries.
pub fn cost_ratio(attack: &RunStats) -> f64 {
    if attack.loyal_effort == 0.0 {
        return 0.0;
    }
    attack.adversary_effort / attack.loyal_effort
}

pub fn row(attack: &RunStats, baseline: &RunStats) -> MetricsRow {
    MetricsRow {
        access_failure: attack.access_failure,
        delay_ratio: delay_ratio(attack, baseline),
        friction: friction(attack, baseline),
        cost_ratio: cost_ratio(attack),
        alarms: attack.alarms,
        successful_polls: attack.successful_polls,
        loyal_effort: attack.loyal_effort,
        adversary_effort: attack.adversary_effort,
    }
}

/// Mean, minimum, and maximum over a set of runs, field by field.
#[derive(Debug, Clone, Copy)]
pub struct Summary {
    pub mean: MetricsRow,
    pub min: MetricsRow,
    pub max: MetricsRow,
}

pub fn summarize(rows: &[MetricsRow]) -> Summary {
    assert!(!rows.is_empty());
    let n = rows.len() as f64;
    let fold = |sel: fn(&MetricsRow) -> f64| {
        let vals: Vec<f64> = rows.iter().map(sel).collect();
        let mean = vals.iter().sum::<f64>() / n;
        let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (mean, min, max)
    };
    let af = fold(|r| r.access_failure);
    let dr = fold(|r| r.delay_ratio);
    let fr = fold(|r| r.friction);
    let cr = fold(|r| r.cost_ratio);
    let al = fold(|r| r.alarms as f64);
    let sp = fold(|r| r.successful_polls as f64);
    let le = fold(|r| r.loyal_effort);
    let ae = fold(|r| r.adversary_effort);
    let pick = |i: usize| MetricsRow {
        access_failure: [af.0, af.1, af.2][i],
        delay_ratio: [dr.0, dr.1, dr.2][i],
        friction: [fr.0, fr.1, fr.2][i],
        cost_ratio: [cr.0, cr.1, cr.2][i],
        alarms: [al.0, al.1, al.2][i].round() as u64,
        successful_polls: [sp.0, sp.1, sp.2][i].round() as u64,
        loyal_effort: [le.0, le.1, le.2][i],
        adversary_effort: [ae.0, ae.1, ae.2][i],
    };
    Summary { mean: pick(0), min: pick(1), max: pick(2) }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(ok: u64, effort: f64, adv: f64) -> RunStats {
        RunStats {
            successful_polls: ok,
            loyal_effort: effort,
            adversary_effort: adv,
            ..RunStats::default()
        }
    }

    #[test]
    fn self_comparison_gives_unit_ratios() {
        let s = stats(100, 5000.0, 0.0);
        assert_eq!(delay_ratio(&s, &s), 1.0);
        assert_eq!(friction(&s, &s), 1.0);
    }

    #[test]
    fn halved_success_doubles_delay() {
        let base = stats(100, 5000.0, 0.0);
        let att = stats(50, 5000.0, 0.0);
        assert_eq!(delay_ratio(&att, &base), 2.0);
        assert_eq!(friction(&att, &base), 2.0);
    }

    #[test]
    fn sentinels() {
        let base = stats(100, 5000.0, 0.0);
        let dead = stats(0, 5000.0, 0.0);
        assert!(delay_ratio(&dead, &base).is_infinite());
        assert!(friction(&dead, &base).is_infinite());
        assert!(delay_ratio(&base, &dead).is_nan());
    }

    #[test]
    fn idle_adversary_costs_nothing() {
        assert_eq!(cost_ratio(&stats(10, 100.0, 0.0)), 0.0);
        assert_eq!(cost_ratio(&stats(10, 100.0, 150.0)), 1.5);
    }

    #[test]
    fn summary_bounds_contain_mean() {
        let base = stats(100, 5000.0, 0.0);
        let rows: Vec<MetricsRow> = [90u64, 100, 110]
            .iter()
            .map(|&ok| row(&stats(ok, 5000.0, 100.0), &base))
            .collect();
        let s = summarize(&rows);
        assert!(s.min.friction <= s.mean.friction && s.mean.friction <= s.max.friction);
        assert!(s.min.successful_polls == 90 && s.max.successful_polls == 110);
    }
}
