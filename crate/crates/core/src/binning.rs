//! Axis scale inference, bin edges (linear, log-spaced, calendar-aligned)
//! and the 2D summary grid with per-cell aggregation.

use chrono::{Datelike, Months, NaiveDate, TimeZone};
use serde::{Deserialize, Serialize};

use crate::config::{Aggregation, ScaleChoice};
use crate::model::{check_channel, Channel, ChannelKindError, Field, FieldKind, JobTable, RowId};
use crate::time::{EpochSeconds, Timezone};

/// Dynamic range (max/min over positive values) at which auto scale
/// switches to log.
pub const LOG_RATIO_THRESHOLD: f64 = 100.0;
pub const HOUR_UNIT_MAX_RANGE: i64 = 96 * 3600;
pub const DAY_UNIT_MAX_RANGE: i64 = 400 * 86_400;
/// Datetime axes coarsen to the next unit above this many columns.
pub const MAX_DATETIME_BINS: usize = 366;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatetimeUnit {
    Hour,
    Day,
    Month,
}

impl DatetimeUnit {
    fn coarser(self) -> Option<DatetimeUnit> {
        match self {
            DatetimeUnit::Hour => Some(DatetimeUnit::Day),
            DatetimeUnit::Day => Some(DatetimeUnit::Month),
            DatetimeUnit::Month => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "unit", rename_all = "snake_case")]
pub enum Scale {
    Linear,
    Log,
    Datetime(DatetimeUnit),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BinningError {
    #[error("log edges need 0 < lo < hi, got lo={lo}, hi={hi}")]
    Domain { lo: f64, hi: f64 },
    #[error("cannot bin an empty set of values")]
    Empty,
    #[error("non-finite value {0} cannot be binned")]
    NonFinite(f64),
    #[error("bin count must be at least 1")]
    ZeroBins,
    #[error(transparent)]
    ChannelKind(#[from] ChannelKindError),
}

/// A resolved axis: scale and strictly increasing edges.
///
/// With `has_nonpositive_bin`, bin 0 is `[nonpositive_floor, 0]` and holds
/// every value `<= 0`; the log-spaced bins follow it. A degenerate axis has
/// edges `[v, v]` and a single bin holding exactly `v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisBinning {
    pub scale: Scale,
    pub edges: Vec<f64>,
    pub has_nonpositive_bin: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub nonpositive_floor: Option<f64>,
    pub degenerate: bool,
}

impl AxisBinning {
    pub fn linear(lo: f64, hi: f64, n: usize) -> Self {
        let n = n.max(1);
        let width = hi - lo;
        let mut edges: Vec<f64> = (0..=n).map(|i| lo + width * (i as f64 / n as f64)).collect();
        edges[n] = hi;
        edges.dedup();
        AxisBinning::plain(Scale::Linear, edges)
    }

    fn plain(scale: Scale, edges: Vec<f64>) -> Self {
        AxisBinning { scale, edges, has_nonpositive_bin: false, nonpositive_floor: None, degenerate: false }
    }

    fn degenerate(scale: Scale, v: f64) -> Self {
        AxisBinning { scale, edges: vec![v, v], has_nonpositive_bin: false, nonpositive_floor: None, degenerate: true }
    }

    pub fn bin_count(&self) -> usize {
        self.edges.len() - 1 + usize::from(self.has_nonpositive_bin)
    }

    /// Bin holding `v`: intervals are `[lo, hi)` except the last, which is
    /// closed. `None` when `v` lies outside the axis.
    pub fn bin_index(&self, v: f64) -> Option<usize> {
        if v.is_nan() {
            return None;
        }
        if self.degenerate {
            return (v == self.edges[0]).then_some(0);
        }
        let offset = usize::from(self.has_nonpositive_bin);
        if self.has_nonpositive_bin && v <= 0.0 {
            let floor = self.nonpositive_floor.unwrap_or(f64::NEG_INFINITY);
            return (v >= floor).then_some(0);
        }
        let lo = self.edges[0];
        let hi = *self.edges.last().unwrap();
        if v < lo || v > hi {
            return None;
        }
        let intervals = self.edges.len() - 1;
        let idx = self.edges.partition_point(|&e| e <= v);
        Some(offset + (idx - 1).min(intervals - 1))
    }

    /// Closed data-unit bounds of bin `i`.
    pub fn bin_bounds(&self, i: usize) -> Option<(f64, f64)> {
        if i >= self.bin_count() {
            return None;
        }
        if self.has_nonpositive_bin {
            if i == 0 {
                return Some((self.nonpositive_floor.unwrap_or(0.0), 0.0));
            }
            return Some((self.edges[i - 1], self.edges[i]));
        }
        Some((self.edges[i], self.edges[i + 1]))
    }

    /// Lowest and highest value the axis covers.
    pub fn extent(&self) -> (f64, f64) {
        let lo = if self.has_nonpositive_bin {
            self.nonpositive_floor.unwrap_or(0.0)
        } else {
            self.edges[0]
        };
        (lo, *self.edges.last().unwrap())
    }
}

/// Log iff at least two positive values exist and their max/min ratio
/// reaches [`LOG_RATIO_THRESHOLD`].
pub fn infer_scale(values: &[f64]) -> Scale {
    let mut n = 0usize;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in values.iter().filter(|v| **v > 0.0) {
        n += 1;
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if n >= 2 && hi / lo >= LOG_RATIO_THRESHOLD {
        Scale::Log
    } else {
        Scale::Linear
    }
}

/// `n + 1` edges forming a geometric progression from `lo` to `hi`.
pub fn log_space_edges(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>, BinningError> {
    if !(lo > 0.0 && lo < hi && hi.is_finite()) {
        return Err(BinningError::Domain { lo, hi });
    }
    if n == 0 {
        return Err(BinningError::ZeroBins);
    }
    let ratio = hi / lo;
    let mut edges: Vec<f64> = (0..=n).map(|i| lo * ratio.powf(i as f64 / n as f64)).collect();
    edges[0] = lo;
    edges[n] = hi;
    Ok(edges)
}

pub fn datetime_bin_unit(range_seconds: i64) -> DatetimeUnit {
    if range_seconds <= HOUR_UNIT_MAX_RANGE {
        DatetimeUnit::Hour
    } else if range_seconds <= DAY_UNIT_MAX_RANGE {
        DatetimeUnit::Day
    } else {
        DatetimeUnit::Month
    }
}

/// Start of the `unit` containing `t`, in local time of `tz`.
pub fn floor_to_unit(t: EpochSeconds, unit: DatetimeUnit, tz: Timezone) -> EpochSeconds {
    let off = tz.offset_seconds() as i64;
    let local = t + off;
    match unit {
        DatetimeUnit::Hour => local - local.rem_euclid(3600) - off,
        DatetimeUnit::Day => local - local.rem_euclid(86_400) - off,
        DatetimeUnit::Month => {
            let d = tz.local(t);
            let first = NaiveDate::from_ymd_opt(d.year(), d.month(), 1).unwrap();
            tz.offset()
                .from_local_datetime(&first.and_hms_opt(0, 0, 0).unwrap())
                .single()
                .unwrap()
                .timestamp()
        }
    }
}

fn step_unit(t: EpochSeconds, unit: DatetimeUnit, tz: Timezone) -> EpochSeconds {
    match unit {
        DatetimeUnit::Hour => t + 3600,
        DatetimeUnit::Day => t + 86_400,
        DatetimeUnit::Month => (tz.local(t) + Months::new(1)).timestamp(),
    }
}

/// Unit-aligned edges from the unit containing `lo` through the first
/// boundary strictly above `hi`. `None` if that exceeds `cap` bins.
fn unit_edges(lo: EpochSeconds, hi: EpochSeconds, unit: DatetimeUnit, tz: Timezone, cap: usize) -> Option<Vec<f64>> {
    let mut edges = vec![floor_to_unit(lo, unit, tz)];
    while *edges.last().unwrap() <= hi {
        if edges.len() > cap {
            return None;
        }
        let next = step_unit(*edges.last().unwrap(), unit, tz);
        edges.push(next);
    }
    Some(edges.into_iter().map(|e| e as f64).collect())
}

/// Calendar-aligned binning covering `[lo, hi]`, coarsening the unit when
/// more than [`MAX_DATETIME_BINS`] columns would result.
pub fn datetime_binning(lo: EpochSeconds, hi: EpochSeconds, tz: Timezone) -> AxisBinning {
    if lo == hi {
        return AxisBinning::degenerate(Scale::Datetime(datetime_bin_unit(1)), lo as f64);
    }
    let mut unit = datetime_bin_unit(hi - lo);
    loop {
        match unit_edges(lo, hi, unit, tz, MAX_DATETIME_BINS) {
            Some(edges) => return AxisBinning::plain(Scale::Datetime(unit), edges),
            None => match unit.coarser() {
                Some(c) => unit = c,
                // Beyond 30 years of months; accept the longer axis.
                None => {
                    return AxisBinning::plain(
                        Scale::Datetime(unit),
                        unit_edges(lo, hi, unit, tz, usize::MAX).unwrap(),
                    )
                }
            },
        }
    }
}

/// Resolves the binning of one axis over `values`.
pub fn bin_axis(
    values: &[f64],
    kind: FieldKind,
    requested: ScaleChoice,
    n_bins: usize,
    tz: Timezone,
) -> Result<AxisBinning, BinningError> {
    if n_bins == 0 {
        return Err(BinningError::ZeroBins);
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in values {
        if !v.is_finite() {
            return Err(BinningError::NonFinite(v));
        }
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if values.is_empty() {
        return Err(BinningError::Empty);
    }
    if kind == FieldKind::Datetime {
        return Ok(datetime_binning(lo as EpochSeconds, hi as EpochSeconds, tz));
    }
    let scale = match requested {
        ScaleChoice::Auto => infer_scale(values),
        ScaleChoice::Linear => Scale::Linear,
        ScaleChoice::Log => Scale::Log,
    };
    if lo == hi {
        return Ok(AxisBinning::degenerate(scale, lo));
    }
    if scale == Scale::Log {
        let (mut pos_lo, mut pos_hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &v in values.iter().filter(|v| **v > 0.0) {
            pos_lo = pos_lo.min(v);
            pos_hi = pos_hi.max(v);
        }
        if pos_lo < pos_hi {
            let mut edges = log_space_edges(pos_lo, pos_hi, n_bins)?;
            edges.dedup();
            let has_np = lo <= 0.0;
            return Ok(AxisBinning {
                scale: Scale::Log,
                edges,
                has_nonpositive_bin: has_np,
                nonpositive_floor: has_np.then_some(lo),
                degenerate: false,
            });
        }
        log::debug!("log scale requested without two distinct positive values; binning linearly");
    }
    Ok(AxisBinning::linear(lo, hi, n_bins))
}

/// One nonempty rectangle of the summary grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub col: usize,
    pub row: usize,
    pub count: usize,
    pub aggregate: Option<f64>,
    /// Records of this cell in the current selection.
    pub selected: usize,
    #[serde(skip)]
    pub ids: Vec<RowId>,
}

impl GridCell {
    pub fn highlighted(&self) -> bool {
        self.selected > 0
    }
}

/// The binned summary grid. Only nonempty cells are stored, sorted by
/// `(col, row)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridView {
    pub x_field: Field,
    pub y_field: Field,
    pub color_field: Field,
    pub aggregation: Aggregation,
    pub x_binning: AxisBinning,
    pub y_binning: AxisBinning,
    pub cells: Vec<GridCell>,
    /// Scope records skipped for a missing value or a value outside the axes.
    pub unbinned: usize,
}

impl GridView {
    pub fn cols(&self) -> usize {
        self.x_binning.bin_count()
    }

    pub fn rows(&self) -> usize {
        self.y_binning.bin_count()
    }

    pub fn cell(&self, col: usize, row: usize) -> Option<&GridCell> {
        self.cells
            .binary_search_by(|c| (c.col, c.row).cmp(&(col, row)))
            .ok()
            .map(|i| &self.cells[i])
    }

    pub fn total(&self) -> usize {
        self.cells.iter().map(|c| c.count).sum()
    }

    pub fn column(&self, col: usize) -> impl Iterator<Item = &GridCell> + '_ {
        let start = self.cells.partition_point(|c| c.col < col);
        self.cells[start..].iter().take_while(move |c| c.col == col)
    }

    /// (min, max) over the aggregates of nonempty cells.
    pub fn aggregate_extent(&self) -> Option<(f64, f64)> {
        self.cells.iter().filter_map(|c| c.aggregate).fold(None, |acc, v| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
    }
}

/// Bins every record of `scope` into the unique `(col, row)` holding its
/// x and y values, aggregating the color field per cell.
#[allow(clippy::too_many_arguments)]
pub fn build_grid(
    table: &JobTable,
    scope: &[RowId],
    x_field: Field,
    y_field: Field,
    color_field: Field,
    aggregation: Aggregation,
    x_binning: &AxisBinning,
    y_binning: &AxisBinning,
) -> Result<GridView, BinningError> {
    check_channel(Channel::X, x_field)?;
    check_channel(Channel::Y, y_field)?;
    check_channel(Channel::Color, color_field)?;

    let rows = y_binning.bin_count();
    let n_cells = x_binning.bin_count() * rows;
    let mut ids: Vec<Vec<RowId>> = vec![Vec::new(); n_cells];
    let mut colors: Vec<Vec<f64>> = vec![Vec::new(); n_cells];
    let mut unbinned = 0;
    let records = table.records();
    for &id in scope {
        let rec = &records[id as usize];
        let placed = (|| {
            let col = x_binning.bin_index(rec.numeric(x_field)?)?;
            let row = y_binning.bin_index(rec.numeric(y_field)?)?;
            let color = rec.numeric(color_field)?;
            Some((col * rows + row, color))
        })();
        match placed {
            Some((slot, color)) => {
                ids[slot].push(id);
                colors[slot].push(color);
            }
            None => unbinned += 1,
        }
    }

    let cells = ids
        .into_iter()
        .zip(colors)
        .enumerate()
        .filter(|(_, (ids, _))| !ids.is_empty())
        .map(|(slot, (ids, mut values))| GridCell {
            col: slot / rows,
            row: slot % rows,
            count: ids.len(),
            aggregate: aggregation.apply(&mut values),
            selected: 0,
            ids,
        })
        .collect();

    Ok(GridView {
        x_field,
        y_field,
        color_field,
        aggregation,
        x_binning: x_binning.clone(),
        y_binning: y_binning.clone(),
        cells,
        unbinned,
    })
}
