mod common;

use std::collections::BTreeSet;

use common::{brute_grid, brute_top_k, random_config, random_mutation, random_table, scan_bin, ModelState};
use proptest::prelude::*;
use queuelens_core::binning::{bin_axis, datetime_binning, floor_to_unit, log_space_edges, Scale, MAX_DATETIME_BINS};
use queuelens_core::config::{ConfigDocument, ScaleChoice};
use queuelens_core::export::{render, retrieve_selected_records, ExportFormat};
use queuelens_core::ingest::{ingest_table, IngestOptions, InputFormat};
use queuelens_core::model::{derive_day_of_week, FieldKind, Schema};
use queuelens_core::selection::{recompute_selection, update_state};
use queuelens_core::views::facet_views;
use queuelens_core::{resolve_config, SessionState, Timezone};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Weekday (0 = Monday) from a day count since 1970-01-01, via the civil
/// calendar conversion and Zeller's congruence.
fn zeller_weekday(days: i64) -> u32 {
    let z = days + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z - era * 146_097;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = doy - (153 * mp + 2) / 5 + 1;
    let m = if mp < 10 { mp + 3 } else { mp - 9 };
    let y = yoe + era * 400 + i64::from(m <= 2);
    // Zeller counts January and February as months 13 and 14 of the prior year.
    let (zm, zy) = if m <= 2 { (m + 12, y - 1) } else { (m, y) };
    let (k, j) = (zy.rem_euclid(100), zy.div_euclid(100));
    let h = (d + 13 * (zm + 1) / 5 + k + k / 4 + j / 4 + 5 * j).rem_euclid(7);
    // h: 0 = Saturday, 1 = Sunday, 2 = Monday.
    ((h + 5) % 7) as u32
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn weekday_matches_zeller(t in -2_000_000_000i64..4_000_000_000, offset_h in -12i32..=14) {
        let tz = Timezone::from_offset_seconds(offset_h * 3600).unwrap();
        let local_days = (t + i64::from(offset_h) * 3600).div_euclid(86_400);
        prop_assert_eq!(derive_day_of_week(t, tz).num_days_from_monday(), zeller_weekday(local_days));
    }

    #[test]
    fn log_edges_are_geometric(lo in 1e-3f64..1e3, decades in 0.01f64..8.0, n in 1usize..200) {
        let hi = lo * 10f64.powf(decades);
        let edges = log_space_edges(lo, hi, n).unwrap();
        prop_assert_eq!(edges.len(), n + 1);
        prop_assert_eq!(edges[0], lo);
        prop_assert_eq!(edges[n], hi);
        let ratio = (hi / lo).powf(1.0 / n as f64);
        for w in edges.windows(2) {
            prop_assert!(w[1] > w[0]);
            prop_assert!(((w[1] / w[0]) / ratio - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn binning_covers_values_monotonically(
        values in prop::collection::vec(prop_oneof![Just(0.0), -50.0f64..0.0, 1e-2f64..1e6], 1..300),
        scale in prop_oneof![Just(ScaleChoice::Auto), Just(ScaleChoice::Linear), Just(ScaleChoice::Log)],
        n in 1usize..80,
    ) {
        let axis = bin_axis(&values, FieldKind::NumericFloat, scale, n, Timezone::UTC).unwrap();
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        let mut last = 0;
        for &v in &sorted {
            let idx = axis.bin_index(v);
            prop_assert!(idx.is_some(), "{v} fell outside {axis:?}");
            prop_assert_eq!(idx, scan_bin(&axis, v));
            let idx = idx.unwrap();
            prop_assert!(idx >= last);
            last = idx;
            let (lo, hi) = axis.bin_bounds(idx).unwrap();
            prop_assert!(lo <= v && v <= hi);
        }
    }

    #[test]
    fn datetime_bins_align_to_units(start in 0i64..2_000_000_000, span in 0i64..3_000 * 86_400, offset_h in -12i32..=14) {
        let tz = Timezone::from_offset_seconds(offset_h * 3600).unwrap();
        let axis = datetime_binning(start, start + span, tz);
        prop_assert!(axis.bin_count() <= MAX_DATETIME_BINS);
        let Scale::Datetime(unit) = axis.scale else { panic!("not a datetime scale") };
        for &e in &axis.edges {
            prop_assert_eq!(floor_to_unit(e as i64, unit, tz), e as i64);
        }
        prop_assert!(axis.bin_index(start as f64).is_some());
        prop_assert!(axis.bin_index((start + span) as f64).is_some());
    }

    #[test]
    fn views_conserve_and_partition(seed in any::<u64>(), n in 1usize..400) {
        let table = random_table(seed, n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let cfg = random_config(&mut rng, table.timezone());
        let mut state = SessionState::new(&table, cfg.clone());
        for _ in 0..3 {
            let m = random_mutation(&mut rng, &table, &state);
            state = update_state(&table, &state, &m).unwrap();
        }
        let views = facet_views(&table, &cfg, state.filter(), state.selection()).unwrap();
        let mut seen = BTreeSet::new();
        for b in &views.bundles {
            let g = &b.grid;
            prop_assert_eq!(g.total(), b.plotted_count);
            prop_assert_eq!(b.x_histogram.total(), b.plotted_count);
            prop_assert_eq!(b.y_histogram.total(), b.plotted_count);
            prop_assert_eq!(g.unbinned, 0);
            for c in &g.cells {
                prop_assert!(c.count > 0 && c.col < g.cols() && c.row < g.rows());
                for &id in &c.ids {
                    prop_assert!(seen.insert(id), "row {id} in two cells");
                }
            }
            let column_sum: usize = (0..g.cols()).map(|c| g.column(c).map(|x| x.count).sum::<usize>()).sum();
            prop_assert_eq!(column_sum, g.total());
        }
    }

    #[test]
    fn grid_matches_brute_force(seed in any::<u64>(), n in 1usize..300) {
        let table = random_table(seed, n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed.rotate_left(7));
        let cfg = random_config(&mut rng, table.timezone());
        let views = facet_views(&table, &cfg, &Default::default(), &queuelens_core::selection::Selection::empty(table.len())).unwrap();
        let (groups, _) = queuelens_core::views::facet_groups(&table, cfg.facet_field);
        for (b, (label, rows)) in views.bundles.iter().zip(&groups) {
            prop_assert_eq!(b.facet.as_deref(), Some(label.as_str()));
            let expected = brute_grid(&table, rows, &cfg, &b.grid.x_binning, &b.grid.y_binning);
            let actual: std::collections::BTreeMap<(usize, usize), Vec<u32>> =
                b.grid.cells.iter().map(|c| ((c.col, c.row), { let mut v = c.ids.clone(); v.sort_unstable(); v })).collect();
            prop_assert_eq!(actual, expected);
            let (top, truncated) = brute_top_k(&table, rows, cfg.categorical_field, 10);
            let got: Vec<(String, usize)> = b.categorical.entries.iter().map(|e| (e.label.clone(), e.count)).collect();
            prop_assert_eq!(got, top);
            prop_assert_eq!(b.categorical.truncated, truncated);
        }
    }

    #[test]
    fn incremental_selection_matches_scan(seed in any::<u64>(), n in 1usize..300, steps in 1usize..50) {
        let table = random_table(seed, n);
        let mut rng = ChaCha8Rng::seed_from_u64(!seed);
        let cfg = random_config(&mut rng, table.timezone());
        let mut state = SessionState::new(&table, cfg.clone());
        let mut model = ModelState::default();
        for _ in 0..steps {
            let m = random_mutation(&mut rng, &table, &state);
            let next = update_state(&table, &state, &m).unwrap();
            prop_assert_eq!(next.revision(), state.revision() + 1);
            state = next;
            model.apply(&m);
            prop_assert_eq!(state.selection(), &recompute_selection(&table, &state));
            prop_assert_eq!(state.selection().ids(), model.selected_ids(&table, &cfg));
        }
    }

    #[test]
    fn export_round_trips(seed in any::<u64>(), n in 1usize..200, json in any::<bool>()) {
        let table = random_table(seed, n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(3));
        let cfg = random_config(&mut rng, table.timezone());
        let mut state = SessionState::new(&table, cfg);
        for _ in 0..4 {
            let m = random_mutation(&mut rng, &table, &state);
            state = update_state(&table, &state, &m).unwrap();
        }
        let doc = retrieve_selected_records(&table, &state);
        let (fmt, input) = if json { (ExportFormat::Json, InputFormat::Json) } else { (ExportFormat::Csv, InputFormat::Csv) };
        let bytes = render(&doc, fmt);
        let opts = IngestOptions { format: input, timezone: table.timezone(), ..IngestOptions::default() };
        let (back, report) = ingest_table(bytes.as_slice(), "export", &opts).unwrap();
        prop_assert_eq!(report.rejected_count, 0);
        prop_assert_eq!(back.records(), doc.records.as_slice());
        let again = queuelens_core::export::ExportDocument { records: back.records().to_vec(), ..doc.clone() };
        prop_assert_eq!(render(&again, fmt), bytes);
    }

    #[test]
    fn config_document_is_a_fixed_point(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tz = Timezone::from_offset_seconds((seed % 27) as i32 * 3600 - 12 * 3600).unwrap();
        let cfg = random_config(&mut rng, tz);
        let text = cfg.to_document();
        let back = resolve_config(&ConfigDocument::parse_text(&text).unwrap(), &Schema::jobs()).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.to_document(), text);
        prop_assert_eq!(back.hash(), cfg.hash());
    }
}
