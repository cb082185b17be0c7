//! Small descriptive statistics: quantiles, rank correlation, per-queue
//! wait summaries.

use serde::Serialize;

use crate::model::{Field, JobTable};
use crate::views::facet_groups;

/// Linear-interpolated quantile of already sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64))
}

pub fn median(values: &[f64]) -> Option<f64> {
    let mut v = values.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    quantile_sorted(&v, 0.5)
}

/// 1-based ranks with ties sharing their average rank.
pub fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len();
    if n != ys.len() || n < 2 {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Spearman rank correlation (Pearson over tie-averaged ranks).
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() {
        return None;
    }
    pearson(&ranks(xs), &ranks(ys))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueueSummary {
    pub queue: String,
    pub count: usize,
    pub wait_p10: f64,
    pub wait_p25: f64,
    pub wait_median: f64,
    pub wait_p75: f64,
    pub wait_p90: f64,
    pub wait_max: f64,
}

/// Record counts and queue_wait quantiles per queue, largest queue first.
pub fn queue_summaries(table: &JobTable) -> Vec<QueueSummary> {
    let (groups, _) = facet_groups(table, Field::Queue);
    groups
        .into_iter()
        .map(|(queue, ids)| {
            let mut waits: Vec<f64> = ids.iter().map(|&id| table.records()[id as usize].queue_wait() as f64).collect();
            waits.sort_unstable_by(f64::total_cmp);
            let q = |p| quantile_sorted(&waits, p).unwrap_or(0.0);
            QueueSummary {
                count: ids.len(),
                wait_p10: q(0.10),
                wait_p25: q(0.25),
                wait_median: q(0.5),
                wait_p75: q(0.75),
                wait_p90: q(0.90),
                wait_max: q(1.0),
                queue,
            }
        })
        .collect()
}
