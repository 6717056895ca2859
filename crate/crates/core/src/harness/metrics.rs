//! Per-round regret and hit-rate curves, per rep and aggregated.

use std::collections::HashSet;

use crate::policies::StepRecord;

/// Running fraction of rounds whose action lies in `optimal_set`.
pub fn hit_rate(records: &[StepRecord], optimal_set: &[usize]) -> Vec<f64> {
    let set: HashSet<usize> = optimal_set.iter().copied().collect();
    let mut hits = 0usize;
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            if r.action.is_some_and(|a| set.contains(&a)) {
                hits += 1;
            }
            hits as f64 / (i + 1) as f64
        })
        .collect()
}

/// Running fraction of rounds flagged as hits by the policy runner.
pub fn recorded_hit_rate(records: &[StepRecord]) -> Vec<f64> {
    let mut hits = 0usize;
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            hits += usize::from(r.hit);
            hits as f64 / (i + 1) as f64
        })
        .collect()
}

pub fn cumulative_regret(records: &[StepRecord]) -> Vec<f64> {
    let mut acc = 0.0;
    records
        .iter()
        .map(|r| {
            acc += r.instant_regret;
            acc
        })
        .collect()
}

/// Curves for one policy over all completed reps.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSeries {
    pub policy: String,
    pub reps: Vec<usize>,
    pub cum_regret: Vec<Vec<f64>>,
    pub hit_rate: Vec<Vec<f64>>,
}

impl MetricSeries {
    pub fn new(policy: impl Into<String>) -> Self {
        MetricSeries {
            policy: policy.into(),
            reps: Vec::new(),
            cum_regret: Vec::new(),
            hit_rate: Vec::new(),
        }
    }

    pub fn push(&mut self, rep: usize, records: &[StepRecord]) {
        self.reps.push(rep);
        self.cum_regret.push(cumulative_regret(records));
        self.hit_rate.push(recorded_hit_rate(records));
    }

    pub fn n_reps(&self) -> usize {
        self.cum_regret.len()
    }

    pub fn horizon(&self) -> usize {
        self.cum_regret.first().map_or(0, Vec::len)
    }

    pub fn mean_cum_regret(&self) -> Vec<f64> {
        mean_curve(&self.cum_regret)
    }

    /// Sample standard deviation across reps; zero for a single rep.
    pub fn std_cum_regret(&self) -> Vec<f64> {
        std_curve(&self.cum_regret)
    }

    pub fn mean_hit_rate(&self) -> Vec<f64> {
        mean_curve(&self.hit_rate)
    }

    pub fn final_regrets(&self) -> Vec<f64> {
        self.cum_regret
            .iter()
            .filter_map(|c| c.last().copied())
            .collect()
    }

    pub fn mean_final_regret(&self) -> f64 {
        self.mean_cum_regret().last().copied().unwrap_or(f64::NAN)
    }
}

fn mean_curve(curves: &[Vec<f64>]) -> Vec<f64> {
    let Some(first) = curves.first() else {
        return Vec::new();
    };
    let n = curves.len() as f64;
    (0..first.len())
        .map(|t| curves.iter().map(|c| c[t]).sum::<f64>() / n)
        .collect()
}

fn std_curve(curves: &[Vec<f64>]) -> Vec<f64> {
    let mean = mean_curve(curves);
    if curves.len() < 2 {
        return vec![0.0; mean.len()];
    }
    let denom = (curves.len() - 1) as f64;
    mean.iter()
        .enumerate()
        .map(|(t, m)| (curves.iter().map(|c| (c[t] - m).powi(2)).sum::<f64>() / denom).sqrt())
        .collect()
}

/// `(R(end) − R(end − w)) / (R(start + w) − R(start))` on one cumulative
/// curve, with `R(0) = 0` and 1-based rounds.
pub fn window_ratio(cum: &[f64], start: usize, width: usize) -> f64 {
    let at = |t: usize| if t == 0 { 0.0 } else { cum[t - 1] };
    let end = cum.len();
    let late = at(end) - at(end - width);
    let early = at(start + width) - at(start);
    late / early
}
