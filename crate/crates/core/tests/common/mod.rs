//! Random tables and brute-force reference implementations shared by the
//! integration tests. The oracles deliberately avoid the library's lookup
//! code: bins are found by linear scans and selections by full predicates.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;

use queuelens_core::binning::AxisBinning;
use queuelens_core::config::{Aggregation, ScaleChoice};
use queuelens_core::ingest::{ingest_path, IngestOptions};
use queuelens_core::model::{validate_record, RawRecord};
use queuelens_core::selection::{BrushAxis, Mutation, Range};
use queuelens_core::{EncodingConfig, Field, JobRecord, JobTable, RowId, SessionState, Timezone};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

pub fn five_jobs() -> JobTable {
    ingest_path(&fixture_path("five_jobs.csv"), &IngestOptions::default()).unwrap().0
}

const QUEUES: [&str; 4] = ["standard", "short", "long", "debug"];
const PRIORITIES: [&str; 3] = ["high", "normal", "low"];

/// A table of `n` random but valid records. Time spans, wait shapes and
/// label cardinalities vary with the seed so that every binning unit and
/// scale gets exercised.
pub fn random_table(seed: u64, n: usize) -> JobTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = 1_600_000_000 + rng.random_range(0..100_000_000i64);
    let span = *[3_600i64, 50 * 3_600, 20 * 86_400, 300 * 86_400, 900 * 86_400].choose(&mut rng).unwrap();
    let n_queues = rng.random_range(1..=QUEUES.len());
    let n_users = rng.random_range(1..=25);
    let zero_rate = rng.random_range(0.0..0.3);
    let wide_waits = rng.random_bool(0.5);
    let tz = Timezone::from_offset_seconds(rng.random_range(-12..=14) * 3600).unwrap();
    let records = (0..n)
        .map(|i| {
            let submit = base + rng.random_range(0..=span);
            let wait = if rng.random_bool(zero_rate) {
                0
            } else if wide_waits {
                (10f64.powf(rng.random_range(0.0..5.0))) as i64
            } else {
                rng.random_range(1..=600)
            };
            let runtime = rng.random_range(1..=200_000);
            let raw = RawRecord {
                job_id: Some(format!("r{i:06}")),
                user: Some(format!("u{:02}", rng.random_range(0..n_users))),
                queue: Some(QUEUES[rng.random_range(0..n_queues)].to_string()),
                submit_time: Some(submit),
                start_time: Some(submit + wait),
                end_time: Some(submit + wait + runtime),
                nodes_requested: Some(rng.random_range(1..=512)),
                exit_code: Some(*[0, 0, 0, 1, 137].choose(&mut rng).unwrap()),
                priority: rng.random_bool(0.8).then(|| PRIORITIES.choose(&mut rng).unwrap().to_string()),
                predicted_queue_wait: rng.random_bool(0.7).then(|| rng.random_range(0.0..50_000.0f64).round()),
            };
            validate_record(raw, tz).unwrap()
        })
        .collect();
    JobTable::new(records, tz)
}

const X_FIELDS: [Field; 5] = [Field::SubmitTime, Field::StartTime, Field::QueueWait, Field::HoursUsed, Field::NodesRequested];
const Y_FIELDS: [Field; 5] = [Field::QueueWait, Field::PredictedQueueWait, Field::HoursUsed, Field::NodesRequested, Field::ExitCode];
const COLOR_FIELDS: [Field; 4] = [Field::NodesRequested, Field::HoursUsed, Field::PredictedQueueWait, Field::QueueWait];
const CAT_FIELDS: [Field; 4] = [Field::User, Field::Priority, Field::DayOfWeek, Field::Queue];
const FACET_FIELDS: [Field; 3] = [Field::Queue, Field::Priority, Field::DayOfWeek];

pub fn random_config(rng: &mut impl Rng, tz: Timezone) -> EncodingConfig {
    let x_field = *X_FIELDS.choose(rng).unwrap();
    let scales = [ScaleChoice::Auto, ScaleChoice::Linear, ScaleChoice::Log];
    let x_scale = if x_field == Field::SubmitTime || x_field == Field::StartTime {
        *scales[..2].choose(rng).unwrap()
    } else {
        *scales.choose(rng).unwrap()
    };
    EncodingConfig {
        x_field,
        y_field: *Y_FIELDS.choose(rng).unwrap(),
        color_field: *COLOR_FIELDS.choose(rng).unwrap(),
        categorical_field: *CAT_FIELDS.choose(rng).unwrap(),
        facet_field: *FACET_FIELDS.choose(rng).unwrap(),
        aggregation: *[Aggregation::Mean, Aggregation::Median, Aggregation::Sum, Aggregation::Count, Aggregation::Max]
            .choose(rng)
            .unwrap(),
        x_scale,
        y_scale: *scales.choose(rng).unwrap(),
        x_bins: rng.random_range(1..=60),
        y_bins: rng.random_range(1..=40),
        timezone: tz,
        share_axes: rng.random_bool(0.3),
    }
}

/// Bin of `v` found by scanning every bin's bounds.
pub fn scan_bin(axis: &AxisBinning, v: f64) -> Option<usize> {
    let n = axis.bin_count();
    if axis.degenerate {
        return (v == axis.edges[0]).then_some(0);
    }
    (0..n).find(|&i| {
        let (lo, hi) = axis.bin_bounds(i).unwrap();
        if axis.has_nonpositive_bin && i == 0 {
            return v >= lo && v <= 0.0;
        }
        v >= lo && (v < hi || (i == n - 1 && v <= hi))
    })
}

/// Cell membership of `scope` by brute force: (col, row) to sorted ids.
pub fn brute_grid(
    table: &JobTable,
    scope: &[RowId],
    cfg: &EncodingConfig,
    xb: &AxisBinning,
    yb: &AxisBinning,
) -> BTreeMap<(usize, usize), Vec<RowId>> {
    let mut cells: BTreeMap<(usize, usize), Vec<RowId>> = BTreeMap::new();
    for &id in scope {
        let r = &table.records()[id as usize];
        let (Some(x), Some(y), Some(_)) = (r.numeric(cfg.x_field), r.numeric(cfg.y_field), r.numeric(cfg.color_field)) else {
            continue;
        };
        if let (Some(c), Some(rw)) = (scan_bin(xb, x), scan_bin(yb, y)) {
            cells.entry((c, rw)).or_default().push(id);
        }
    }
    for ids in cells.values_mut() {
        ids.sort_unstable();
    }
    cells
}

/// Top-k labels by a plain count then sort.
pub fn brute_top_k(table: &JobTable, scope: &[RowId], field: Field, k: usize) -> (Vec<(String, usize)>, bool) {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for &id in scope {
        if let Some(l) = table.records()[id as usize].label(field) {
            *counts.entry(l.to_string()).or_default() += 1;
        }
    }
    let mut v: Vec<(String, usize)> = counts.into_iter().collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let truncated = v.len() > k;
    v.truncate(k);
    (v, truncated)
}

/// Independent model of the session: just the filter and brush values,
/// evaluated with a full predicate per record.
#[derive(Debug, Clone, Default)]
pub struct ModelState {
    pub pinned: Vec<String>,
    pub hover: Option<String>,
    pub brushes: BTreeMap<String, (Option<Range>, Option<Range>)>,
}

impl ModelState {
    pub fn apply(&mut self, m: &Mutation) {
        match m {
            Mutation::SetBrush { facet, x_range, y_range } => {
                let b = self.brushes.entry(facet.clone()).or_default();
                b.0 = x_range.or(b.0);
                b.1 = y_range.or(b.1);
                if b.0.is_none() && b.1.is_none() {
                    self.brushes.remove(facet);
                }
            }
            Mutation::ClearBrush { facet, axis } => {
                if let Some(b) = self.brushes.get_mut(facet) {
                    match axis {
                        Some(BrushAxis::X) => b.0 = None,
                        Some(BrushAxis::Y) => b.1 = None,
                        None => *b = (None, None),
                    }
                    if b.0.is_none() && b.1.is_none() {
                        self.brushes.remove(facet);
                    }
                }
            }
            Mutation::Pin { label } => {
                if !self.pinned.contains(label) {
                    self.pinned.push(label.clone());
                }
            }
            Mutation::Unpin { label } => self.pinned.retain(|l| l != label),
            Mutation::Hover { label } => self.hover = Some(label.clone()),
            Mutation::ClearHover => self.hover = None,
            Mutation::ClearAll => *self = ModelState::default(),
            Mutation::SetEncoding { .. } => unreachable!("not generated"),
        }
    }

    pub fn passes_filter(&self, r: &JobRecord, cfg: &EncodingConfig) -> bool {
        let mut labels: Vec<&String> = self.pinned.iter().collect();
        labels.extend(self.hover.iter());
        labels.is_empty() || r.label(cfg.categorical_field).is_some_and(|l| labels.iter().any(|p| p.as_str() == l))
    }

    pub fn selected(&self, r: &JobRecord, cfg: &EncodingConfig) -> bool {
        let Some((xr, yr)) = r.label(cfg.facet_field).and_then(|f| self.brushes.get(f)) else {
            return false;
        };
        let inside = |range: &Option<Range>, field: Field| match range {
            None => true,
            Some(rg) => r.numeric(field).is_some_and(|v| v >= rg.lo && v <= rg.hi),
        };
        inside(xr, cfg.x_field) && inside(yr, cfg.y_field) && self.passes_filter(r, cfg)
    }

    pub fn selected_ids(&self, table: &JobTable, cfg: &EncodingConfig) -> Vec<RowId> {
        table.iter().filter(|(_, r)| self.selected(r, cfg)).map(|(id, _)| id).collect()
    }
}

/// A valid random mutation for `state`'s table.
pub fn random_mutation(rng: &mut impl Rng, table: &JobTable, state: &SessionState) -> Mutation {
    let cfg = state.config();
    let labels = table.domain(cfg.categorical_field);
    let facets = table.domain(cfg.facet_field);
    let range_over = |rng: &mut ChaCha8Rng, field: Field| -> Option<Range> {
        if rng.random_bool(0.3) {
            return None;
        }
        let vals: Vec<f64> = table.records().iter().filter_map(|r| r.numeric(field)).collect();
        if vals.is_empty() {
            return None;
        }
        let a = vals[rng.random_range(0..vals.len())];
        let b = vals[rng.random_range(0..vals.len())];
        Some(Range { lo: a.min(b), hi: a.max(b) })
    };
    let mut sub = ChaCha8Rng::seed_from_u64(rng.random());
    match rng.random_range(0..10) {
        0..=3 if !facets.is_empty() => Mutation::SetBrush {
            facet: facets.choose(rng).unwrap().clone(),
            x_range: range_over(&mut sub, cfg.x_field),
            y_range: range_over(&mut sub, cfg.y_field),
        },
        4 if !facets.is_empty() => Mutation::ClearBrush {
            facet: facets.choose(rng).unwrap().clone(),
            axis: *[None, Some(BrushAxis::X), Some(BrushAxis::Y)].choose(rng).unwrap(),
        },
        5 | 6 if !labels.is_empty() => Mutation::Pin { label: labels.choose(rng).unwrap().clone() },
        7 if !state.filter().pinned.is_empty() => {
            let pinned: Vec<&String> = state.filter().pinned.iter().collect();
            Mutation::Unpin { label: (*pinned.choose(rng).unwrap()).clone() }
        }
        8 if !labels.is_empty() => Mutation::Hover { label: labels.choose(rng).unwrap().clone() },
        8 => Mutation::ClearHover,
        9 if rng.random_bool(0.2) => Mutation::ClearAll,
        _ => Mutation::ClearHover,
    }
}
