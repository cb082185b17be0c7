//! Seeded synthetic job traces shaped like a multi-queue production log.
//!
//! Submission days are drawn with weight `weekday_weight × window factors`.
//! A day's relative load also scales its waits by `load^elasticity`, so busy
//! days queue longer. Per-queue waits are log-normal around the queue
//! median. Users follow a discrete power law. `nodes_requested` is
//! log-normal and coupled to the standardized log wait so that the rank
//! correlation of nodes and wait approaches the scenario target.

use std::f64::consts::PI;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::kv;
use crate::model::{validate_record, JobTable, RawRecord};
use crate::time::{format_timestamp, parse_timestamp, EpochSeconds, Timezone};

const DAY: i64 = 86_400;
const MEDIAN_RUNTIME_S: f64 = 3600.0;
const RUNTIME_SIGMA: f64 = 1.0;
const MEDIAN_NODES: f64 = 4.0;
const NODES_SIGMA: f64 = 1.2;
const MAX_NODES: f64 = 4096.0;
const PREDICTION_SIGMA: f64 = 0.4;
const PREDICTION_MISSING_RATE: f64 = 0.03;

#[derive(Debug, Clone, PartialEq)]
pub struct QueueSpec {
    pub name: String,
    pub median_wait_s: f64,
    /// Log-space standard deviation of the wait.
    pub dispersion: f64,
    /// Relative share of submissions.
    pub share: f64,
}

/// Days in `[start, end)` whose submission weight is multiplied by `factor`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadWindow {
    pub start: EpochSeconds,
    pub end: EpochSeconds,
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthScenario {
    pub seed: u64,
    pub record_count: usize,
    pub queues: Vec<QueueSpec>,
    /// Submission range `[start, end)`, UTC.
    pub start: EpochSeconds,
    pub end: EpochSeconds,
    /// Mon..Sun.
    pub weekday_weights: [f64; 7],
    pub load_windows: Vec<LoadWindow>,
    pub user_count: usize,
    /// Power-law exponent of user activity.
    pub user_skew: f64,
    /// Target rank correlation between nodes_requested and queue_wait.
    pub nodes_wait_correlation: f64,
    /// Exponent applied to relative daily load when scaling waits.
    pub load_wait_elasticity: f64,
}

fn ts(s: &str) -> EpochSeconds {
    parse_timestamp(s).expect("valid literal timestamp")
}

impl Default for SynthScenario {
    /// Six months from June 2023, 30k jobs over three queues, a late-summer
    /// peak and an early-fall trough.
    fn default() -> Self {
        SynthScenario {
            seed: 1,
            record_count: 30_000,
            queues: vec![
                QueueSpec { name: "standard".into(), median_wait_s: 1800.0, dispersion: 1.3, share: 0.5 },
                QueueSpec { name: "short".into(), median_wait_s: 120.0, dispersion: 1.1, share: 0.3 },
                QueueSpec { name: "long".into(), median_wait_s: 7200.0, dispersion: 1.0, share: 0.2 },
            ],
            start: ts("2023-06-01T00:00:00Z"),
            end: ts("2023-12-01T00:00:00Z"),
            weekday_weights: [1.0, 1.0, 1.0, 1.0, 1.0, 0.6, 0.5],
            load_windows: vec![
                LoadWindow { start: ts("2023-08-07T00:00:00Z"), end: ts("2023-09-01T00:00:00Z"), factor: 1.8 },
                LoadWindow { start: ts("2023-09-18T00:00:00Z"), end: ts("2023-10-09T00:00:00Z"), factor: 0.35 },
            ],
            user_count: 250,
            user_skew: 1.1,
            nodes_wait_correlation: 0.3,
            load_wait_elasticity: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("infeasible scenario: {0}")]
    InfeasibleScenario(String),
    #[error("bad scenario value for {key}: {reason}")]
    BadValue { key: String, reason: String },
    #[error(transparent)]
    Syntax(#[from] kv::KvError),
}

fn infeasible(msg: impl Into<String>) -> SynthError {
    SynthError::InfeasibleScenario(msg.into())
}

impl SynthScenario {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.record_count == 0 {
            return Err(infeasible("record_count must be positive"));
        }
        if self.start >= self.end {
            return Err(infeasible("date range is empty"));
        }
        if self.queues.is_empty() {
            return Err(infeasible("at least one queue is required"));
        }
        for q in &self.queues {
            if !(q.median_wait_s > 0.0 && q.median_wait_s.is_finite()) {
                return Err(infeasible(format!("queue {} median wait must be positive", q.name)));
            }
            if !(q.dispersion > 0.0 && q.dispersion.is_finite()) {
                return Err(infeasible(format!("queue {} dispersion must be positive", q.name)));
            }
            if !(q.share > 0.0 && q.share.is_finite()) {
                return Err(infeasible(format!("queue {} share must be positive", q.name)));
            }
        }
        if !(self.user_skew > 0.0 && self.user_skew.is_finite()) {
            return Err(infeasible("user_skew must be positive"));
        }
        if self.user_count == 0 {
            return Err(infeasible("user_count must be positive"));
        }
        if !(-1.0..=1.0).contains(&self.nodes_wait_correlation) {
            return Err(infeasible("nodes_wait_correlation must lie in [-1, 1]"));
        }
        if !self.load_wait_elasticity.is_finite() {
            return Err(infeasible("load_wait_elasticity must be finite"));
        }
        if self.weekday_weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(infeasible("weekday weights must be nonnegative"));
        }
        for w in &self.load_windows {
            if w.start >= w.end || !(w.factor >= 0.0 && w.factor.is_finite()) {
                return Err(infeasible("load windows need start < end and a nonnegative factor"));
            }
        }
        Ok(())
    }

    /// Days covering the range with their submission weights.
    fn day_weights(&self) -> Vec<(EpochSeconds, f64)> {
        let tz = Timezone::UTC;
        let mut day = self.start - self.start.rem_euclid(DAY);
        let mut out = Vec::new();
        while day < self.end {
            let dow = tz.weekday(day).num_days_from_monday() as usize;
            let factor: f64 = self
                .load_windows
                .iter()
                .filter(|w| w.start <= day && day < w.end)
                .map(|w| w.factor)
                .product();
            out.push((day, self.weekday_weights[dow] * factor));
            day += DAY;
        }
        out
    }

    /// Canonical key-value document; [`SynthScenario::parse`] inverts it.
    pub fn to_document(&self) -> String {
        let queues: Vec<String> = self
            .queues
            .iter()
            .map(|q| format!("{}:{}:{}:{}", q.name, q.median_wait_s, q.dispersion, q.share))
            .collect();
        let weights: Vec<String> = self.weekday_weights.iter().map(f64::to_string).collect();
        let windows: Vec<String> = self
            .load_windows
            .iter()
            .map(|w| format!("{}..{}:{}", format_timestamp(w.start), format_timestamp(w.end), w.factor))
            .collect();
        kv::write([
            ("seed", self.seed.to_string()),
            ("record_count", self.record_count.to_string()),
            ("queues", queues.join(", ")),
            ("start", format_timestamp(self.start)),
            ("end", format_timestamp(self.end)),
            ("weekday_weights", weights.join(", ")),
            ("load_windows", windows.join(", ")),
            ("user_count", self.user_count.to_string()),
            ("user_skew", self.user_skew.to_string()),
            ("nodes_wait_correlation", self.nodes_wait_correlation.to_string()),
            ("load_wait_elasticity", self.load_wait_elasticity.to_string()),
        ])
    }

    /// Parses a scenario document. Absent keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self, SynthError> {
        let mut s = SynthScenario::default();
        for (key, value) in kv::parse(text)? {
            let bad = |reason: &str| SynthError::BadValue { key: key.clone(), reason: reason.to_string() };
            let num = |v: &str| v.trim().parse::<f64>().map_err(|_| bad("expected a number"));
            let time = |v: &str| parse_timestamp(v.trim()).map_err(|_| bad("expected an ISO-8601 timestamp"));
            match key.as_str() {
                "seed" => s.seed = value.parse().map_err(|_| bad("expected an unsigned integer"))?,
                "record_count" => s.record_count = value.parse().map_err(|_| bad("expected an unsigned integer"))?,
                "queues" => {
                    s.queues = list(&value)
                        .map(|item| {
                            let parts: Vec<&str> = item.split(':').collect();
                            match parts.as_slice() {
                                [name, median, dispersion, share] => Ok(QueueSpec {
                                    name: name.trim().to_string(),
                                    median_wait_s: num(median)?,
                                    dispersion: num(dispersion)?,
                                    share: num(share)?,
                                }),
                                _ => Err(bad("expected name:median_wait_s:dispersion:share")),
                            }
                        })
                        .collect::<Result<_, _>>()?
                }
                "start" => s.start = time(&value)?,
                "end" => s.end = time(&value)?,
                "weekday_weights" => {
                    let w: Vec<f64> = list(&value).map(num).collect::<Result<_, _>>()?;
                    s.weekday_weights = w.try_into().map_err(|_| bad("expected 7 weights, Mon..Sun"))?;
                }
                "load_windows" => {
                    s.load_windows = list(&value)
                        .map(|item| {
                            let (range, factor) = item.rsplit_once(':').ok_or_else(|| bad("expected start..end:factor"))?;
                            let (a, b) = range.split_once("..").ok_or_else(|| bad("expected start..end:factor"))?;
                            Ok::<_, SynthError>(LoadWindow { start: time(a)?, end: time(b)?, factor: num(factor)? })
                        })
                        .collect::<Result<_, _>>()?
                }
                "user_count" => s.user_count = value.parse().map_err(|_| bad("expected an unsigned integer"))?,
                "user_skew" => s.user_skew = num(&value)?,
                "nodes_wait_correlation" => s.nodes_wait_correlation = num(&value)?,
                "load_wait_elasticity" => s.load_wait_elasticity = num(&value)?,
                _ => return Err(bad("unknown scenario key")),
            }
        }
        Ok(s)
    }
}

fn list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty())
}

struct Draft {
    submit: EpochSeconds,
    queue: usize,
    wait: i64,
    runtime: i64,
    user: usize,
    exit_code: i32,
    priority: &'static str,
    prediction: Option<f64>,
    nodes_noise: f64,
}

/// Generates the scenario's trace. A pure function of the scenario.
pub fn generate_synthetic(scenario: &SynthScenario) -> Result<JobTable, SynthError> {
    scenario.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);

    let days = scenario.day_weights();
    let day_pick = WeightedIndex::new(days.iter().map(|d| d.1))
        .map_err(|_| infeasible("every day in range has zero submission weight"))?;
    let mean_weight = days.iter().map(|d| d.1).sum::<f64>() / days.len() as f64;
    let queue_pick = WeightedIndex::new(scenario.queues.iter().map(|q| q.share)).expect("validated shares");
    let user_pick = WeightedIndex::new((1..=scenario.user_count).map(|k| (k as f64).powf(-scenario.user_skew)))
        .expect("positive weights");

    let mut drafts = Vec::with_capacity(scenario.record_count);
    for _ in 0..scenario.record_count {
        let (day, weight) = days[day_pick.sample(&mut rng)];
        let lo = day.max(scenario.start);
        let hi = (day + DAY).min(scenario.end);
        let submit = rng.random_range(lo..hi);

        let queue = queue_pick.sample(&mut rng);
        let spec = &scenario.queues[queue];
        let load = (weight / mean_weight).powf(scenario.load_wait_elasticity);
        let z: f64 = rng.sample(StandardNormal);
        let wait = (spec.median_wait_s * load * (spec.dispersion * z).exp()).round() as i64;

        let r: f64 = rng.sample(StandardNormal);
        let runtime = (MEDIAN_RUNTIME_S * (RUNTIME_SIGMA * r).exp()).round().clamp(60.0, 7.0 * DAY as f64) as i64;

        let user = user_pick.sample(&mut rng);
        let exit_code = match rng.random_range(0..100) {
            0..=89 => 0,
            90..=94 => 1,
            95..=97 => 137,
            _ => 143,
        };
        let priority = match rng.random_range(0..10) {
            0 => "high",
            1..=7 => "normal",
            _ => "low",
        };
        let p: f64 = rng.sample(StandardNormal);
        let prediction = (rng.random::<f64>() >= PREDICTION_MISSING_RATE)
            .then(|| (wait as f64 * (PREDICTION_SIGMA * p).exp()).round());
        let nodes_noise: f64 = rng.sample(StandardNormal);
        drafts.push(Draft { submit, queue, wait, runtime, user, exit_code, priority, prediction, nodes_noise });
    }

    // Couple nodes to the standardized log wait. Under a Gaussian copula a
    // latent correlation r gives rank correlation (6/pi)·asin(r/2).
    let latent_r = 2.0 * (PI * scenario.nodes_wait_correlation / 6.0).sin();
    let log_waits: Vec<f64> = drafts.iter().map(|d| (d.wait as f64 + 1.0).ln()).collect();
    let n = log_waits.len() as f64;
    let mean = log_waits.iter().sum::<f64>() / n;
    let sd = (log_waits.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let coupled = |i: usize, noise: f64| {
        let zw = if sd > 0.0 { (log_waits[i] - mean) / sd } else { 0.0 };
        latent_r * zw + (1.0 - latent_r * latent_r).sqrt() * noise
    };

    let mut order: Vec<usize> = (0..drafts.len()).collect();
    order.sort_by_key(|&i| (drafts[i].submit, i));

    let tz = Timezone::UTC;
    let user_width = scenario.user_count.to_string().len().max(3);
    let mut records = Vec::with_capacity(drafts.len());
    for (seq, &i) in order.iter().enumerate() {
        let d = &drafts[i];
        let nodes = (MEDIAN_NODES * (NODES_SIGMA * coupled(i, d.nodes_noise)).exp()).round().clamp(1.0, MAX_NODES) as i64;
        let start = d.submit + d.wait;
        let raw = RawRecord {
            job_id: Some(format!("job{:06}", seq + 1)),
            user: Some(format!("user{:0width$}", d.user + 1, width = user_width)),
            queue: Some(scenario.queues[d.queue].name.clone()),
            submit_time: Some(d.submit),
            start_time: Some(start),
            end_time: Some(start + d.runtime),
            nodes_requested: Some(nodes),
            exit_code: Some(d.exit_code),
            priority: Some(d.priority.to_string()),
            predicted_queue_wait: d.prediction,
        };
        records.push(validate_record(raw, tz).expect("generated records are valid"));
    }

    check_median_order(scenario, &records)?;
    Ok(JobTable::new(records, tz))
}

/// Empirical per-queue median waits must follow the order of the
/// configured medians.
fn check_median_order(scenario: &SynthScenario, records: &[crate::model::JobRecord]) -> Result<(), SynthError> {
    let mut medians = Vec::new();
    for q in &scenario.queues {
        let waits: Vec<f64> = records.iter().filter(|r| r.queue() == q.name).map(|r| r.queue_wait() as f64).collect();
        let m = crate::stats::median(&waits)
            .ok_or_else(|| infeasible(format!("queue {} received no records", q.name)))?;
        medians.push((q.median_wait_s, m, q.name.as_str()));
    }
    for a in &medians {
        for b in &medians {
            if a.0 < b.0 && a.1 >= b.1 {
                return Err(infeasible(format!(
                    "queue {} (median {}) did not wait less than queue {} (median {}) in the sample",
                    a.2, a.1, b.2, b.1
                )));
            }
        }
    }
    Ok(())
}
