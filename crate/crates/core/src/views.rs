//! Assembles per-facet view bundles: summary grid, marginal histograms,
//! categorical top-k and legend.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binning::{bin_axis, build_grid, AxisBinning, BinningError, GridView, Scale};
use crate::config::{ConfigError, EncodingConfig};
use crate::model::{check_channel, Channel, ChannelKindError, Field, FieldKind, JobTable, RowId};
use crate::selection::{filter_predicate, FilterState, Selection};

/// Categories shown in the bar view.
pub const TOP_K: usize = 10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ViewError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    ChannelKind(#[from] ChannelKindError),
    #[error(transparent)]
    Binning(#[from] BinningError),
    #[error("column {column} out of range for a grid of {cols} columns")]
    ColumnOutOfRange { column: usize, cols: usize },
    #[error("unknown facet {0:?}")]
    UnknownFacet(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    X,
    Y,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramView {
    pub orientation: Orientation,
    pub binning: AxisBinning,
    pub counts: Vec<usize>,
}

impl HistogramView {
    pub fn zeros(orientation: Orientation, binning: AxisBinning) -> Self {
        let counts = vec![0; binning.bin_count()];
        HistogramView { orientation, binning, counts }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Quantile estimated from the binned counts, interpolating within the
    /// bin that holds it (geometrically on log axes).
    pub fn approx_quantile(&self, q: f64) -> Option<f64> {
        let total = self.total();
        if total == 0 {
            return None;
        }
        let target = q.clamp(0.0, 1.0) * total as f64;
        let mut before = 0usize;
        for (i, &c) in self.counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            if (before + c) as f64 >= target {
                let frac = ((target - before as f64) / c as f64).clamp(0.0, 1.0);
                let (lo, hi) = self.binning.bin_bounds(i)?;
                let geometric = self.binning.scale == Scale::Log && lo > 0.0;
                return Some(if geometric { lo * (hi / lo).powf(frac) } else { lo + frac * (hi - lo) });
            }
            before += c;
        }
        self.binning.bin_bounds(self.counts.len() - 1).map(|(_, hi)| hi)
    }
}

/// Bins `values` directly against `binning`. Values outside the axis are
/// not counted.
pub fn histogram(values: impl IntoIterator<Item = f64>, binning: &AxisBinning, orientation: Orientation) -> HistogramView {
    let mut h = HistogramView::zeros(orientation, binning.clone());
    for v in values {
        if let Some(i) = binning.bin_index(v) {
            h.counts[i] += 1;
        }
    }
    h
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryCount {
    pub label: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoricalView {
    pub field: Field,
    pub entries: Vec<CategoryCount>,
    pub truncated: bool,
}

/// The `k` most frequent labels of `field` over `scope`, by count
/// descending then label ascending.
pub fn top_categories(table: &JobTable, scope: &[RowId], field: Field, k: usize) -> Result<CategoricalView, ViewError> {
    check_channel(Channel::Categorical, field)?;
    let records = table.records();
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for &id in scope {
        if let Some(l) = records[id as usize].label(field) {
            *counts.entry(l).or_default() += 1;
        }
    }
    let distinct = counts.len();
    let mut entries: Vec<(&str, usize)> = counts.into_iter().collect();
    entries.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    entries.truncate(k);
    Ok(CategoricalView {
        field,
        entries: entries.into_iter().map(|(l, c)| CategoryCount { label: l.to_string(), count: c }).collect(),
        truncated: distinct > k,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Legend {
    pub selected_count: usize,
    pub color_min: Option<f64>,
    pub color_max: Option<f64>,
}

/// Scope records left out of the grid and histograms, by missing channel.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissingReport {
    pub x: usize,
    pub y: usize,
    pub color: usize,
    pub categorical: usize,
}

/// Complete render model of one facet unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewBundle {
    pub facet: Option<String>,
    /// Records passing the category filter.
    pub scope_count: usize,
    /// Scope records with x, y and color values, i.e. those in the grid.
    pub plotted_count: usize,
    pub grid: GridView,
    pub x_histogram: HistogramView,
    pub y_histogram: HistogramView,
    pub categorical: CategoricalView,
    pub legend: Legend,
    pub missing: MissingReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FacetedViews {
    pub facet_field: Field,
    pub bundles: Vec<ViewBundle>,
    /// Rows without a facet label; they appear in no bundle.
    pub missing_facet: usize,
}

impl FacetedViews {
    pub fn bundle(&self, facet: &str) -> Option<&ViewBundle> {
        self.bundles.iter().find(|b| b.facet.as_deref() == Some(facet))
    }
}

struct Plotted {
    ids: Vec<RowId>,
    xs: Vec<f64>,
    ys: Vec<f64>,
    missing: MissingReport,
}

fn plotted(table: &JobTable, scope: &[RowId], cfg: &EncodingConfig) -> Plotted {
    let records = table.records();
    let mut p = Plotted { ids: Vec::new(), xs: Vec::new(), ys: Vec::new(), missing: MissingReport::default() };
    for &id in scope {
        let r = &records[id as usize];
        let (x, y, c) = (r.numeric(cfg.x_field), r.numeric(cfg.y_field), r.numeric(cfg.color_field));
        p.missing.x += usize::from(x.is_none());
        p.missing.y += usize::from(y.is_none());
        p.missing.color += usize::from(c.is_none());
        p.missing.categorical += usize::from(r.label(cfg.categorical_field).is_none());
        if let (Some(x), Some(y), Some(_)) = (x, y, c) {
            p.ids.push(id);
            p.xs.push(x);
            p.ys.push(y);
        }
    }
    p
}

fn axes_for(xs: &[f64], ys: &[f64], cfg: &EncodingConfig) -> Result<(AxisBinning, AxisBinning), ViewError> {
    let x = bin_axis(xs, cfg.x_field.kind(), cfg.x_scale, cfg.x_bins, cfg.timezone)?;
    let y = bin_axis(ys, cfg.y_field.kind(), cfg.y_scale, cfg.y_bins, cfg.timezone)?;
    Ok((x, y))
}

/// Axes over the rows of `fallback` for when a filtered scope plots
/// nothing, so empty units keep a stable frame.
fn fallback_axes(table: &JobTable, fallback: &[RowId], cfg: &EncodingConfig) -> Result<(AxisBinning, AxisBinning), ViewError> {
    let p = plotted(table, fallback, cfg);
    if p.ids.is_empty() {
        let zero = |kind: FieldKind| bin_axis(&[0.0], kind, cfg.x_scale, 1, cfg.timezone);
        return Ok((zero(cfg.x_field.kind())?, zero(cfg.y_field.kind())?));
    }
    axes_for(&p.xs, &p.ys, cfg)
}

fn compose_scope(
    table: &JobTable,
    cfg: &EncodingConfig,
    facet: Option<String>,
    scope: &[RowId],
    fallback: &[RowId],
    selection: &Selection,
    shared_axes: Option<&(AxisBinning, AxisBinning)>,
) -> Result<ViewBundle, ViewError> {
    let p = plotted(table, scope, cfg);
    let (x_binning, y_binning) = match shared_axes {
        Some(axes) => axes.clone(),
        None if p.ids.is_empty() => fallback_axes(table, fallback, cfg)?,
        None => axes_for(&p.xs, &p.ys, cfg)?,
    };
    let mut grid = build_grid(
        table,
        &p.ids,
        cfg.x_field,
        cfg.y_field,
        cfg.color_field,
        cfg.aggregation,
        &x_binning,
        &y_binning,
    )?;
    for cell in &mut grid.cells {
        cell.selected = cell.ids.iter().filter(|&&id| selection.contains(id)).count();
    }
    let x_histogram = histogram(p.xs.iter().copied(), &x_binning, Orientation::X);
    let y_histogram = histogram(p.ys.iter().copied(), &y_binning, Orientation::Y);
    let categorical = top_categories(table, scope, cfg.categorical_field, TOP_K)?;
    let extent = grid.aggregate_extent();
    let legend = Legend {
        selected_count: scope.iter().filter(|&&id| selection.contains(id)).count(),
        color_min: extent.map(|e| e.0),
        color_max: extent.map(|e| e.1),
    };
    Ok(ViewBundle {
        facet,
        scope_count: scope.len(),
        plotted_count: p.ids.len(),
        grid,
        x_histogram,
        y_histogram,
        categorical,
        legend,
        missing: p.missing,
    })
}

fn filtered(table: &JobTable, rows: impl IntoIterator<Item = RowId>, cfg: &EncodingConfig, filter: &FilterState) -> Vec<RowId> {
    let records = table.records();
    rows.into_iter()
        .filter(|&id| filter_predicate(&records[id as usize], cfg.categorical_field, filter))
        .collect()
}

/// One unfaceted bundle over every row passing `filter`.
pub fn compose_unit(
    table: &JobTable,
    cfg: &EncodingConfig,
    filter: &FilterState,
    selection: &Selection,
) -> Result<ViewBundle, ViewError> {
    cfg.validate()?;
    let scope = filtered(table, table.row_ids(), cfg, filter);
    let all: Vec<RowId> = table.row_ids().collect();
    compose_scope(table, cfg, None, &scope, &all, selection, None)
}

/// Facet labels of the unfiltered table with their rows, ordered by
/// descending row count then label.
pub fn facet_groups(table: &JobTable, facet_field: Field) -> (Vec<(String, Vec<RowId>)>, usize) {
    let mut groups: HashMap<&str, Vec<RowId>> = HashMap::new();
    let mut missing = 0;
    for (id, r) in table.iter() {
        match r.label(facet_field) {
            Some(l) => groups.entry(l).or_default().push(id),
            None => missing += 1,
        }
    }
    let mut groups: Vec<(String, Vec<RowId>)> = groups.into_iter().map(|(l, ids)| (l.to_string(), ids)).collect();
    groups.sort_unstable_by(|a, b| b.1.len().cmp(&a.1.len()).then_with(|| a.0.cmp(&b.0)));
    (groups, missing)
}

/// One bundle per facet label of the unfiltered table.
pub fn facet_views(
    table: &JobTable,
    cfg: &EncodingConfig,
    filter: &FilterState,
    selection: &Selection,
) -> Result<FacetedViews, ViewError> {
    cfg.validate()?;
    let (groups, missing_facet) = facet_groups(table, cfg.facet_field);
    let scopes: Vec<Vec<RowId>> = groups
        .par_iter()
        .map(|(_, rows)| filtered(table, rows.iter().copied(), cfg, filter))
        .collect();

    let shared = if cfg.share_axes {
        let union: Vec<RowId> = scopes.iter().flatten().copied().collect();
        let p = plotted(table, &union, cfg);
        Some(if p.ids.is_empty() {
            let all: Vec<RowId> = groups.iter().flat_map(|g| g.1.iter().copied()).collect();
            fallback_axes(table, &all, cfg)?
        } else {
            axes_for(&p.xs, &p.ys, cfg)?
        })
    } else {
        None
    };

    let bundles = groups
        .par_iter()
        .zip(scopes.par_iter())
        .map(|((label, rows), scope)| {
            compose_scope(table, cfg, Some(label.clone()), scope, rows, selection, shared.as_ref())
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FacetedViews { facet_field: cfg.facet_field, bundles, missing_facet })
}

/// The y histogram restricted to the records of one grid column.
pub fn conditional_y_histogram(grid: &GridView, column: usize) -> Result<HistogramView, ViewError> {
    let cols = grid.cols();
    if column >= cols {
        return Err(ViewError::ColumnOutOfRange { column, cols });
    }
    let mut h = HistogramView::zeros(Orientation::Y, grid.y_binning.clone());
    for cell in grid.column(column) {
        h.counts[cell.row] += cell.count;
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_record, RawRecord};
    use crate::time::Timezone;

    fn rec(i: usize, user: &str, queue: &str, submit: i64, wait: i64, nodes: i64) -> crate::model::JobRecord {
        validate_record(
            RawRecord {
                job_id: Some(format!("j{i}")),
                user: Some(user.into()),
                queue: Some(queue.into()),
                submit_time: Some(submit),
                start_time: Some(submit + wait),
                end_time: Some(submit + wait + 3600),
                nodes_requested: Some(nodes),
                exit_code: Some(0),
                ..Default::default()
            },
            Timezone::UTC,
        )
        .unwrap()
    }

    fn users_table(users: &[(&str, usize)]) -> JobTable {
        let mut records = Vec::new();
        for (u, n) in users {
            for _ in 0..*n {
                let i = records.len();
                records.push(rec(i, u, "q", 1_690_000_000 + i as i64, 10, 1));
            }
        }
        JobTable::new(records, Timezone::UTC)
    }

    fn all(t: &JobTable) -> Vec<RowId> {
        t.row_ids().collect()
    }

    #[test]
    fn top_categories_counts_and_ties() {
        let t = users_table(&[("C", 1), ("B", 3), ("A", 5)]);
        let v = top_categories(&t, &all(&t), Field::User, 10).unwrap();
        let got: Vec<(&str, usize)> = v.entries.iter().map(|e| (e.label.as_str(), e.count)).collect();
        assert_eq!(got, vec![("A", 5), ("B", 3), ("C", 1)]);
        assert!(!v.truncated);

        let t = users_table(&[("B", 2), ("A", 2)]);
        let v = top_categories(&t, &all(&t), Field::User, 10).unwrap();
        assert_eq!(v.entries[0].label, "A");
        assert_eq!(v.entries[1].label, "B");
    }

    #[test]
    fn top_categories_truncates() {
        let names: Vec<String> = (0..12).map(|i| format!("u{i:02}")).collect();
        let users: Vec<(&str, usize)> = names.iter().map(|n| (n.as_str(), 1)).collect();
        let t = users_table(&users);
        let v = top_categories(&t, &all(&t), Field::User, TOP_K).unwrap();
        assert_eq!(v.entries.len(), 10);
        assert!(v.truncated);
        assert!(matches!(top_categories(&t, &all(&t), Field::QueueWait, 10), Err(ViewError::ChannelKind(_))));
    }

    #[test]
    fn singleton_grid() {
        let t = JobTable::new(vec![rec(0, "a", "q", 1_690_000_000, 30, 8)], Timezone::UTC);
        let b = compose_unit(&t, &EncodingConfig::default(), &FilterState::default(), &Selection::empty(1)).unwrap();
        assert_eq!(b.grid.cells.len(), 1);
        assert_eq!(b.grid.cells[0].count, 1);
        assert_eq!(b.grid.cells[0].aggregate, Some(8.0));
        assert_eq!((b.legend.color_min, b.legend.color_max), (Some(8.0), Some(8.0)));
    }

    #[test]
    fn empty_scope_unit() {
        let t = users_table(&[("A", 3)]);
        let filter = FilterState { pinned: ["nobody".to_string()].into(), hover: None };
        let b = compose_unit(&t, &EncodingConfig::default(), &filter, &Selection::empty(3)).unwrap();
        assert_eq!(b.scope_count, 0);
        assert!(b.grid.cells.is_empty());
        assert_eq!(b.x_histogram.total(), 0);
        assert_eq!(b.y_histogram.total(), 0);
        assert!(b.x_histogram.counts.iter().all(|&c| c == 0));
        assert!(b.categorical.entries.is_empty());
        assert_eq!(b.legend.selected_count, 0);
        assert_eq!(b.legend.color_min, None);
    }

    #[test]
    fn empty_table_unit() {
        let t = JobTable::new(Vec::new(), Timezone::UTC);
        let b = compose_unit(&t, &EncodingConfig::default(), &FilterState::default(), &Selection::empty(0)).unwrap();
        assert_eq!(b.plotted_count, 0);
        let f = facet_views(&t, &EncodingConfig::default(), &FilterState::default(), &Selection::empty(0)).unwrap();
        assert!(f.bundles.is_empty());
    }

    #[test]
    fn conditional_histogram_errors_past_last_column() {
        let t = users_table(&[("A", 3)]);
        let b = compose_unit(&t, &EncodingConfig::default(), &FilterState::default(), &Selection::empty(3)).unwrap();
        let cols = b.grid.cols();
        assert!(conditional_y_histogram(&b.grid, cols - 1).is_ok());
        assert_eq!(
            conditional_y_histogram(&b.grid, cols),
            Err(ViewError::ColumnOutOfRange { column: cols, cols })
        );
    }

    #[test]
    fn facet_order_and_missing_scope() {
        let records = vec![
            rec(0, "a", "long", 1_690_000_000, 10, 1),
            rec(1, "b", "short", 1_690_000_100, 20, 2),
            rec(2, "b", "short", 1_690_000_200, 30, 3),
            rec(3, "c", "debug", 1_690_000_300, 40, 4),
        ];
        let t = JobTable::new(records, Timezone::UTC);
        let cfg = EncodingConfig::default();
        let f = facet_views(&t, &cfg, &FilterState::default(), &Selection::empty(4)).unwrap();
        let order: Vec<&str> = f.bundles.iter().map(|b| b.facet.as_deref().unwrap()).collect();
        assert_eq!(order, vec!["short", "debug", "long"]);

        let filter = FilterState { pinned: ["b".to_string()].into(), hover: None };
        let f = facet_views(&t, &cfg, &filter, &Selection::empty(4)).unwrap();
        assert_eq!(f.bundles.len(), 3);
        assert_eq!(f.bundle("long").unwrap().scope_count, 0);
        assert_eq!(f.bundle("short").unwrap().plotted_count, 2);
    }

    #[test]
    fn approx_median_linear() {
        let b = AxisBinning::linear(0.0, 10.0, 10);
        let h = histogram((0..10).map(|i| i as f64 + 0.5), &b, Orientation::Y);
        assert!((h.approx_quantile(0.5).unwrap() - 5.0).abs() < 1e-12);
    }
}
