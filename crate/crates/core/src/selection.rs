//! Brush selections, hover/pin category filters and the selected-record set
//! they define.
//!
//! Filters are global and compose by OR within the configured categorical
//! field. Brushes belong to one facet; x and y ranges of a brush intersect.
//! A record is selected iff its facet carries a brush, it passes that brush
//! and it passes the filter. With no brush nothing is selected.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::config::EncodingConfig;
use crate::model::{Field, JobRecord, JobTable, RowId};

/// Pinned labels plus an optional transient hover label.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterState {
    pub pinned: BTreeSet<String>,
    pub hover: Option<String>,
}

impl FilterState {
    pub fn is_empty(&self) -> bool {
        self.pinned.is_empty() && self.hover.is_none()
    }

    /// Labels currently letting records through (pins OR hover).
    pub fn effective(&self) -> BTreeSet<String> {
        let mut set = self.pinned.clone();
        set.extend(self.hover.clone());
        set
    }

    pub fn allows(&self, label: Option<&str>) -> bool {
        if self.is_empty() {
            return true;
        }
        match label {
            Some(l) => self.pinned.contains(l) || self.hover.as_deref() == Some(l),
            None => false,
        }
    }
}

pub fn filter_predicate(record: &JobRecord, field: Field, filter: &FilterState) -> bool {
    filter.allows(record.label(field))
}

/// Closed interval in data units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub fn new(lo: f64, hi: f64) -> Result<Self, SelectionError> {
        if lo.is_finite() && hi.is_finite() && lo <= hi {
            Ok(Range { lo, hi })
        } else {
            Err(SelectionError::InvalidRange { lo, hi })
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BrushState {
    pub x_range: Option<Range>,
    pub y_range: Option<Range>,
}

impl BrushState {
    pub fn is_empty(&self) -> bool {
        self.x_range.is_none() && self.y_range.is_none()
    }
}

/// True iff the record's x and y values fall inside every range the brush
/// sets. A missing value fails a set range.
pub fn brush_predicate(record: &JobRecord, brush: &BrushState, config: &EncodingConfig) -> bool {
    let within = |range: &Option<Range>, field: Field| match range {
        None => true,
        Some(r) => record.numeric(field).is_some_and(|v| r.contains(v)),
    };
    within(&brush.x_range, config.x_field) && within(&brush.y_range, config.y_field)
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SelectionError {
    #[error("unknown label {0:?} for the categorical field")]
    UnknownLabel(String),
    #[error("unknown facet {0:?}")]
    UnknownFacet(String),
    #[error("invalid brush range [{lo}, {hi}]")]
    InvalidRange { lo: f64, hi: f64 },
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
}

/// A set of row ids stored as a dense mask over the table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection {
    mask: Vec<bool>,
    len: usize,
}

impl Selection {
    pub fn empty(rows: usize) -> Self {
        Selection { mask: vec![false; rows], len: 0 }
    }

    pub fn from_ids(rows: usize, ids: impl IntoIterator<Item = RowId>) -> Self {
        let mut s = Selection::empty(rows);
        for id in ids {
            s.set(id, true);
        }
        s
    }

    pub fn contains(&self, id: RowId) -> bool {
        self.mask.get(id as usize).copied().unwrap_or(false)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Selected ids in ascending order.
    pub fn ids(&self) -> Vec<RowId> {
        self.mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i as RowId).collect()
    }

    fn set(&mut self, id: RowId, on: bool) {
        let slot = &mut self.mask[id as usize];
        if *slot != on {
            *slot = on;
            if on {
                self.len += 1;
            } else {
                self.len -= 1;
            }
        }
    }
}

/// Row lookups by categorical label and facet label for one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct TableIndex {
    pub categorical_field: Field,
    pub facet_field: Field,
    pub by_category: HashMap<String, Vec<RowId>>,
    pub by_facet: HashMap<String, Vec<RowId>>,
}

impl TableIndex {
    pub fn build(table: &JobTable, config: &EncodingConfig) -> Self {
        let mut by_category: HashMap<String, Vec<RowId>> = HashMap::new();
        let mut by_facet: HashMap<String, Vec<RowId>> = HashMap::new();
        for (id, rec) in table.iter() {
            if let Some(l) = rec.label(config.categorical_field) {
                by_category.entry(l.to_string()).or_default().push(id);
            }
            if let Some(l) = rec.label(config.facet_field) {
                by_facet.entry(l.to_string()).or_default().push(id);
            }
        }
        TableIndex {
            categorical_field: config.categorical_field,
            facet_field: config.facet_field,
            by_category,
            by_facet,
        }
    }
}

/// One axis of a facet's brush.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BrushAxis {
    X,
    Y,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Mutation {
    /// Sets the given ranges of a facet's brush. An omitted range leaves
    /// that axis as it was, so brushes on both histograms coexist.
    SetBrush {
        facet: String,
        #[serde(default)]
        x_range: Option<Range>,
        #[serde(default)]
        y_range: Option<Range>,
    },
    /// Clears one axis of a facet's brush, or both when `axis` is omitted.
    ClearBrush {
        facet: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        axis: Option<BrushAxis>,
    },
    Pin {
        label: String,
    },
    Unpin {
        label: String,
    },
    Hover {
        label: String,
    },
    ClearHover,
    ClearAll,
    /// Carried in service messages as a config document; see the service crate.
    #[serde(skip)]
    SetEncoding {
        config: EncodingConfig,
    },
}

/// Per-client interaction state. `selection` always equals
/// [`recompute_selection`] of the other fields.
#[derive(Debug, Clone)]
pub struct SessionState {
    config: EncodingConfig,
    index: Arc<TableIndex>,
    filter: FilterState,
    brushes: BTreeMap<String, BrushState>,
    selection: Selection,
    revision: u64,
}

impl PartialEq for SessionState {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.filter == other.filter
            && self.brushes == other.brushes
            && self.selection == other.selection
            && self.revision == other.revision
    }
}

impl SessionState {
    pub fn new(table: &JobTable, config: EncodingConfig) -> Self {
        let index = Arc::new(TableIndex::build(table, &config));
        SessionState {
            config,
            index,
            filter: FilterState::default(),
            brushes: BTreeMap::new(),
            selection: Selection::empty(table.len()),
            revision: 0,
        }
    }

    pub fn config(&self) -> &EncodingConfig {
        &self.config
    }

    pub fn filter(&self) -> &FilterState {
        &self.filter
    }

    pub fn brushes(&self) -> &BTreeMap<String, BrushState> {
        &self.brushes
    }

    pub fn selection(&self) -> &Selection {
        &self.selection
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn index(&self) -> &TableIndex {
        &self.index
    }

    fn brush_ok(&self, rec: &JobRecord) -> bool {
        rec.label(self.config.facet_field)
            .and_then(|f| self.brushes.get(f))
            .is_some_and(|b| !b.is_empty() && brush_predicate(rec, b, &self.config))
    }

    fn row_selected(&self, rec: &JobRecord) -> bool {
        self.brush_ok(rec) && filter_predicate(rec, self.config.categorical_field, &self.filter)
    }

    fn check_label(&self, label: &str) -> Result<(), SelectionError> {
        if self.index.by_category.contains_key(label) {
            Ok(())
        } else {
            Err(SelectionError::UnknownLabel(label.to_string()))
        }
    }

    fn check_facet(&self, facet: &str) -> Result<(), SelectionError> {
        if self.index.by_facet.contains_key(facet) {
            Ok(())
        } else {
            Err(SelectionError::UnknownFacet(facet.to_string()))
        }
    }

    /// Updates the selection after the effective filter label set changed
    /// from `before` to the current one, touching only affected rows.
    fn refilter(&mut self, table: &JobTable, before: &BTreeSet<String>) {
        let after = self.filter.effective();
        if *before == after {
            return;
        }
        let records = table.records();
        let index = Arc::clone(&self.index);
        if after.is_empty() {
            // Filter lifted: every brushed record comes back.
            for (facet, brush) in &self.brushes {
                if brush.is_empty() {
                    continue;
                }
                for &id in index.by_facet.get(facet).into_iter().flatten() {
                    let ok = brush_predicate(&records[id as usize], brush, &self.config);
                    self.selection.set(id, ok);
                }
            }
        } else if before.is_empty() {
            for id in self.selection.ids() {
                let label = records[id as usize].label(self.config.categorical_field);
                if !label.is_some_and(|l| after.contains(l)) {
                    self.selection.set(id, false);
                }
            }
        } else {
            for gone in before.difference(&after) {
                for &id in index.by_category.get(gone).into_iter().flatten() {
                    self.selection.set(id, false);
                }
            }
            for added in after.difference(before) {
                for &id in index.by_category.get(added).into_iter().flatten() {
                    let ok = self.brush_ok(&records[id as usize]);
                    self.selection.set(id, ok);
                }
            }
        }
    }

    fn rebrush(&mut self, table: &JobTable, facet: &str) {
        let records = table.records();
        let index = Arc::clone(&self.index);
        for &id in index.by_facet.get(facet).into_iter().flatten() {
            let ok = self.row_selected(&records[id as usize]);
            self.selection.set(id, ok);
        }
    }
}

/// Recomputes the selected set from scratch with a full scan.
pub fn recompute_selection(table: &JobTable, state: &SessionState) -> Selection {
    Selection::from_ids(
        table.len(),
        table.iter().filter(|(_, r)| state.row_selected(r)).map(|(id, _)| id),
    )
}

/// Applies one mutation, returning the new state with the revision bumped.
/// On error the input state is untouched.
pub fn update_state(
    table: &JobTable,
    state: &SessionState,
    mutation: &Mutation,
) -> Result<SessionState, SelectionError> {
    let mut next = state.clone();
    next.revision += 1;
    match mutation {
        Mutation::SetBrush { facet, x_range, y_range } => {
            next.check_facet(facet)?;
            for r in x_range.iter().chain(y_range) {
                Range::new(r.lo, r.hi)?;
            }
            let brush = next.brushes.entry(facet.clone()).or_default();
            if x_range.is_some() {
                brush.x_range = *x_range;
            }
            if y_range.is_some() {
                brush.y_range = *y_range;
            }
            if brush.is_empty() {
                next.brushes.remove(facet);
            }
            next.rebrush(table, facet);
        }
        Mutation::ClearBrush { facet, axis } => {
            next.check_facet(facet)?;
            match (axis, next.brushes.get_mut(facet)) {
                (Some(BrushAxis::X), Some(b)) => b.x_range = None,
                (Some(BrushAxis::Y), Some(b)) => b.y_range = None,
                _ => {
                    next.brushes.remove(facet);
                }
            }
            if next.brushes.get(facet).is_some_and(BrushState::is_empty) {
                next.brushes.remove(facet);
            }
            next.rebrush(table, facet);
        }
        Mutation::Pin { label } => {
            next.check_label(label)?;
            let before = next.filter.effective();
            next.filter.pinned.insert(label.clone());
            next.refilter(table, &before);
        }
        Mutation::Unpin { label } => {
            next.check_label(label)?;
            let before = next.filter.effective();
            next.filter.pinned.remove(label);
            next.refilter(table, &before);
        }
        Mutation::Hover { label } => {
            next.check_label(label)?;
            let before = next.filter.effective();
            next.filter.hover = Some(label.clone());
            next.refilter(table, &before);
        }
        Mutation::ClearHover => {
            let before = next.filter.effective();
            next.filter.hover = None;
            next.refilter(table, &before);
        }
        Mutation::ClearAll => {
            next.filter = FilterState::default();
            next.brushes.clear();
            next.selection = Selection::empty(table.len());
        }
        Mutation::SetEncoding { config } => {
            config.validate()?;
            let old = std::mem::replace(&mut next.config, config.clone());
            if old.categorical_field != config.categorical_field {
                next.filter = FilterState::default();
            }
            if old.facet_field != config.facet_field {
                next.brushes.clear();
            } else {
                for brush in next.brushes.values_mut() {
                    if old.x_field != config.x_field {
                        brush.x_range = None;
                    }
                    if old.y_field != config.y_field {
                        brush.y_range = None;
                    }
                }
                next.brushes.retain(|_, b| !b.is_empty());
            }
            next.index = Arc::new(TableIndex::build(table, config));
            next.selection = recompute_selection(table, &next);
        }
    }
    Ok(next)
}

/// Selected records within one facet's scope.
pub fn selected_count(state: &SessionState, facet: &str) -> Result<usize, SelectionError> {
    let rows = state
        .index
        .by_facet
        .get(facet)
        .ok_or_else(|| SelectionError::UnknownFacet(facet.to_string()))?;
    Ok(rows.iter().filter(|&&id| state.selection.contains(id)).count())
}

/// One-line description of filters and brushes.
pub fn describe(state: &SessionState) -> String {
    let mut parts = Vec::new();
    let cfg = &state.config;
    if !state.filter.pinned.is_empty() {
        let pins: Vec<&str> = state.filter.pinned.iter().map(String::as_str).collect();
        parts.push(format!("{} pinned [{}]", cfg.categorical_field, pins.join(", ")));
    }
    if let Some(h) = &state.filter.hover {
        parts.push(format!("{} hover {h}", cfg.categorical_field));
    }
    for (facet, b) in &state.brushes {
        let mut s = format!("{}={facet} brush", cfg.facet_field);
        if let Some(r) = b.x_range {
            s.push_str(&format!(" {} in [{}, {}]", cfg.x_field, r.lo, r.hi));
        }
        if let Some(r) = b.y_range {
            s.push_str(&format!(" {} in [{}, {}]", cfg.y_field, r.lo, r.hi));
        }
        parts.push(s);
    }
    if parts.is_empty() {
        "no filters or brushes".to_string()
    } else {
        parts.join("; ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_record, RawRecord};
    use crate::time::Timezone;

    fn table(rows: &[(&str, &str, i64)]) -> JobTable {
        let records = rows
            .iter()
            .enumerate()
            .map(|(i, (user, queue, wait))| {
                validate_record(
                    RawRecord {
                        job_id: Some(i.to_string()),
                        user: Some(user.to_string()),
                        queue: Some(queue.to_string()),
                        submit_time: Some(1_700_000_000 + i as i64 * 60),
                        start_time: Some(1_700_000_000 + i as i64 * 60 + wait),
                        end_time: Some(1_700_000_000 + i as i64 * 60 + wait + 100),
                        nodes_requested: Some(1),
                        exit_code: Some(0),
                        ..Default::default()
                    },
                    Timezone::UTC,
                )
                .unwrap()
            })
            .collect();
        JobTable::new(records, Timezone::UTC)
    }

    fn y_brush(facet: &str, lo: f64, hi: f64) -> Mutation {
        Mutation::SetBrush { facet: facet.into(), x_range: None, y_range: Some(Range { lo, hi }) }
    }

    #[test]
    fn filter_semantics() {
        let mut f = FilterState::default();
        assert!(f.allows(Some("Mon")));
        assert!(f.allows(None));
        f.pinned.insert("Sat".into());
        f.hover = Some("Sun".into());
        assert!(f.allows(Some("Sun")));
        assert!(f.allows(Some("Sat")));
        assert!(!f.allows(Some("Mon")));
    }

    #[test]
    fn y_brush_is_closed() {
        let t = table(&[("a", "q", 1), ("a", "q", 50), ("a", "q", 200), ("a", "q", 100)]);
        let s = SessionState::new(&t, EncodingConfig::default());
        let s = update_state(&t, &s, &y_brush("q", 10.0, 100.0)).unwrap();
        assert_eq!(s.selection().ids(), vec![1, 3]);
        assert_eq!(s.revision(), 1);
    }

    #[test]
    fn brushes_on_both_axes_intersect() {
        // Submits are one minute apart starting at t0.
        let t = table(&[("a", "q", 5), ("a", "q", 50), ("a", "q", 500), ("a", "q", 60)]);
        let t0 = 1_700_000_000.0;
        let s = SessionState::new(&t, EncodingConfig::default());
        let s = update_state(&t, &s, &y_brush("q", 10.0, 100.0)).unwrap();
        assert_eq!(s.selection().ids(), vec![1, 3]);
        let x = Mutation::SetBrush { facet: "q".into(), x_range: Some(Range { lo: t0, hi: t0 + 120.0 }), y_range: None };
        let s = update_state(&t, &s, &x).unwrap();
        assert_eq!(s.selection().ids(), vec![1]);
        let s = update_state(&t, &s, &Mutation::ClearBrush { facet: "q".into(), axis: Some(BrushAxis::Y) }).unwrap();
        assert_eq!(s.selection().ids(), vec![0, 1, 2]);
        let s = update_state(&t, &s, &Mutation::ClearBrush { facet: "q".into(), axis: None }).unwrap();
        assert!(s.selection().is_empty() && s.brushes().is_empty());
    }

    #[test]
    fn no_brush_means_empty_selection() {
        let t = table(&[("a", "q", 1), ("b", "q", 2)]);
        let s = SessionState::new(&t, EncodingConfig::default());
        let s = update_state(&t, &s, &Mutation::Pin { label: "a".into() }).unwrap();
        assert_eq!(selected_count(&s, "q").unwrap(), 0);
    }

    #[test]
    fn hover_is_transient() {
        let t = table(&[("a", "q", 1), ("b", "q", 2), ("c", "q", 3)]);
        let s0 = SessionState::new(&t, EncodingConfig::default());
        let s1 = update_state(&t, &s0, &y_brush("q", 0.0, 10.0)).unwrap();
        let s2 = update_state(&t, &s1, &Mutation::Pin { label: "a".into() }).unwrap();
        let s3 = update_state(&t, &s2, &Mutation::Hover { label: "b".into() }).unwrap();
        assert_eq!(s3.selection().ids(), vec![0, 1]);
        let s4 = update_state(&t, &s3, &Mutation::ClearHover).unwrap();
        assert_eq!(s4.selection(), s2.selection());
        assert_eq!(s4.filter(), s2.filter());
        assert_eq!(s4.revision(), s2.revision() + 2);
    }

    #[test]
    fn clear_all_empties_everything() {
        let t = table(&[("a", "q", 1), ("b", "q", 2)]);
        let s = SessionState::new(&t, EncodingConfig::default());
        let s = update_state(&t, &s, &y_brush("q", 0.0, 10.0)).unwrap();
        assert_eq!(s.selection().len(), 2);
        let s = update_state(&t, &s, &Mutation::ClearAll).unwrap();
        assert!(s.selection().is_empty());
        assert!(s.brushes().is_empty());
    }

    #[test]
    fn errors_leave_state_untouched() {
        let t = table(&[("a", "q", 1)]);
        let s = SessionState::new(&t, EncodingConfig::default());
        assert_eq!(
            update_state(&t, &s, &Mutation::Pin { label: "zed".into() }),
            Err(SelectionError::UnknownLabel("zed".into()))
        );
        assert_eq!(
            update_state(&t, &s, &y_brush("nope", 0.0, 1.0)),
            Err(SelectionError::UnknownFacet("nope".into()))
        );
        assert!(matches!(
            update_state(&t, &s, &y_brush("q", 5.0, 1.0)),
            Err(SelectionError::InvalidRange { .. })
        ));
        assert_eq!(s.revision(), 0);
        assert!(matches!(selected_count(&s, "nope"), Err(SelectionError::UnknownFacet(_))));
    }

    #[test]
    fn brushes_are_per_facet() {
        let t = table(&[("a", "p", 5), ("a", "q", 5)]);
        let s = SessionState::new(&t, EncodingConfig::default());
        let s = update_state(&t, &s, &y_brush("p", 0.0, 10.0)).unwrap();
        assert_eq!(s.selection().ids(), vec![0]);
        assert_eq!(selected_count(&s, "p").unwrap(), 1);
        assert_eq!(selected_count(&s, "q").unwrap(), 0);
    }

    #[test]
    fn encoding_change_drops_stale_ranges() {
        let t = table(&[("a", "q", 5), ("b", "q", 50)]);
        let s = SessionState::new(&t, EncodingConfig::default());
        let s = update_state(&t, &s, &y_brush("q", 0.0, 10.0)).unwrap();
        let s = update_state(&t, &s, &Mutation::Pin { label: "a".into() }).unwrap();
        let config = EncodingConfig { y_field: Field::HoursUsed, ..EncodingConfig::default() };
        let s = update_state(&t, &s, &Mutation::SetEncoding { config }).unwrap();
        assert!(s.brushes().is_empty());
        assert!(s.selection().is_empty());
        assert_eq!(s.filter().pinned.len(), 1);
    }

    #[test]
    fn mutation_wire_format() {
        let m: Mutation = serde_json::from_str(r#"{"op":"set_brush","facet":"short","y_range":{"lo":1,"hi":2}}"#).unwrap();
        assert_eq!(m, y_brush("short", 1.0, 2.0));
        let m: Mutation = serde_json::from_str(r#"{"op":"clear_hover"}"#).unwrap();
        assert_eq!(m, Mutation::ClearHover);
    }
}
