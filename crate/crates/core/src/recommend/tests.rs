use std::sync::Arc;

use super::*;
use crate::features::HashedTrigramEmbedder;
use crate::grid::{Cell, ValueType};
use crate::model::ModelConfig;

fn raw(n_r: usize, n_c: usize) -> RawFeatureEncoder {
    RawFeatureEncoder {
        featurizer: Featurizer::new(Arc::new(HashedTrigramEmbedder::new(20, 0)), 8),
        n_r,
        n_c,
    }
}

fn put(s: &mut Sheet, a: &str, v: &str, t: ValueType) {
    s.insert(Cell::new(a.parse().unwrap(), v, t));
}

/// Header row, `n` item rows and a total row whose column B sums the items.
fn ledger(name: &str, n: u32, with_total: bool) -> Sheet {
    let mut s = Sheet::new(name);
    put(&mut s, "A1", "Item", ValueType::Text);
    put(&mut s, "B1", "Qty", ValueType::Text);
    put(&mut s, "C1", "Note", ValueType::Text);
    for i in 0..n {
        let r = i + 2;
        put(&mut s, &format!("A{r}"), &format!("item {}", i % 4), ValueType::Text);
        put(&mut s, &format!("B{r}"), &format!("{}", 10 + i % 3), ValueType::Numeric);
        put(&mut s, &format!("C{r}"), "ok", ValueType::Text);
    }
    let t = n + 2;
    put(&mut s, &format!("A{t}"), "Total", ValueType::Text);
    if with_total {
        let f = format!("=SUM(B2:B{})", n + 1);
        s.insert(Cell::new(CellAddress::new(t, 2), "0", ValueType::Numeric).with_formula(f));
    }
    s
}

fn wb(id: &str, sheets: Vec<Sheet>) -> Workbook {
    Workbook {
        id: id.into(),
        sheets,
        last_modified: 0,
    }
}

fn setup(enc: &dyn Encoder, refs: Vec<Workbook>) -> (Indexes, Library) {
    let (idx, stats) = index_corpus(&refs, enc).unwrap();
    assert_eq!(stats.skipped_formulas, 0);
    (idx, Library::new(refs))
}

#[test]
fn copy_of_reference_gets_its_formula_back() {
    let enc = raw(5, 3);
    let (idx, lib) = setup(&enc, vec![wb("r", vec![ledger("Data", 12, true)])]);
    let cfg = RecommenderConfig::default();
    let ctx = PredictContext {
        indexes: &idx,
        library: &lib,
        encoder: &enc,
        config: &cfg,
    };
    let target = ledger("Data", 12, false);
    let p = predict(&ctx, &target, Some("t"), CellAddress::new(14, 2)).unwrap();
    assert_eq!(p[0].formula, "=SUM(B2:B13)");
    assert_eq!(p[0].template, "=SUM(_:_)");
    // Only the blanked target cell differs from the reference region.
    assert!(p[0].score > 0.0 && p[0].score < 1.0);
    assert_eq!(p[0].provenance.workbook_id, "r");
    assert!(p[0].provenance.params.iter().all(|s| !s.fallback));
    assert!(p[0].provenance.params[0].distance < 1e-6);
}

#[test]
fn longer_target_adapts_range() {
    let enc = raw(5, 3);
    let (idx, lib) = setup(&enc, vec![wb("r", vec![ledger("Data", 12, true)])]);
    let cfg = RecommenderConfig::default();
    let ctx = PredictContext {
        indexes: &idx,
        library: &lib,
        encoder: &enc,
        config: &cfg,
    };
    let target = ledger("Data", 15, false);
    let p = predict(&ctx, &target, None, CellAddress::new(17, 2)).unwrap();
    assert_eq!(p[0].formula, "=SUM(B2:B16)");
}

#[test]
fn own_workbook_is_excluded_and_bounds_checked() {
    let enc = raw(5, 3);
    let (idx, lib) = setup(&enc, vec![wb("r", vec![ledger("Data", 12, true)])]);
    let cfg = RecommenderConfig::default();
    let ctx = PredictContext {
        indexes: &idx,
        library: &lib,
        encoder: &enc,
        config: &cfg,
    };
    let target = ledger("Data", 12, false);
    assert!(predict(&ctx, &target, Some("r"), CellAddress::new(14, 2)).unwrap().is_empty());
    assert!(matches!(
        predict(&ctx, &target, None, CellAddress::new(99, 2)),
        Err(RecommendError::OutOfBounds { .. })
    ));
}

#[test]
fn zero_theta_abstains_unless_exact() {
    let enc = raw(5, 3);
    let (idx, lib) = setup(&enc, vec![wb("r", vec![ledger("Data", 12, true)])]);
    let cfg = RecommenderConfig {
        theta: 0.0,
        ..Default::default()
    };
    let ctx = PredictContext {
        indexes: &idx,
        library: &lib,
        encoder: &enc,
        config: &cfg,
    };
    assert!(predict(&ctx, &ledger("Data", 15, false), None, CellAddress::new(17, 2))
        .unwrap()
        .is_empty());
}

#[test]
fn fine_codes_match_model_embedding() {
    let cfg = ModelConfig {
        n_r: 5,
        n_c: 3,
        d_cell: 44,
        ..ModelConfig::desk()
    };
    let featurizer = raw(5, 3).featurizer;
    assert_eq!(featurizer.dim(), 44);
    let enc = ModelEncoder::new(
        Model::init(ModelKind::Coarse, &cfg, 1).unwrap(),
        Model::init(ModelKind::Fine, &cfg, 1).unwrap(),
        featurizer.clone(),
    )
    .unwrap();
    let sheet = ledger("Data", 9, true);
    let feats = SheetFeatures::new(&sheet, &featurizer);
    let codes = FineCodes::new(&feats, &enc);
    for r in 1..=sheet.n_rows + 2 {
        for c in 1..=4 {
            let a = CellAddress::new(r, c);
            let direct = enc.fine.embed(&feats.region_window(a, 5, 3)).unwrap();
            assert_eq!(codes.region(a), direct, "{a}");
        }
    }
    assert!(ModelEncoder::new(enc.fine.clone(), enc.coarse.clone(), featurizer).is_err());
}

/// Exhaustive restatement of the parameter search.
fn oracle(
    target: &FineCodes,
    c_t: CellAddress,
    reference: &FineCodes,
    c_fref: CellAddress,
    c_r: CellAddress,
    d: i64,
    theta: f64,
) -> Option<(CellAddress, bool)> {
    let want = reference.region(c_r);
    let er = c_r.row as i64 - c_fref.row as i64 + c_t.row as i64;
    let ec = c_r.col as i64 - c_fref.col as i64 + c_t.col as i64;
    let mut all = Vec::new();
    for r in 1..=target.n_rows as i64 {
        for c in 1..=target.n_cols as i64 {
            let a = CellAddress::new(r as u32, c as u32);
            all.push((sq_dist(&target.region(a), &want), a));
        }
    }
    let near: Vec<_> = all
        .iter()
        .filter(|(_, a)| (a.row as i64 - er).abs() <= d && (a.col as i64 - ec).abs() <= d)
        .copied()
        .collect();
    let first_min = |v: &[(f64, CellAddress)]| {
        v.iter().fold(None, |b: Option<(f64, CellAddress)>, &x| match b {
            Some(bb) if bb.0 <= x.0 => Some(bb),
            _ => Some(x),
        })
    };
    if target.in_bounds(er, ec) {
        if let Some((dist, a)) = first_min(&near) {
            if dist <= theta {
                return Some((a, false));
            }
        }
    }
    first_min(&all).filter(|b| b.0 <= theta).map(|b| (b.1, true))
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn parameter_search_matches_oracle(n_ref in 3u32..14, n_tgt in 3u32..14, d in 0usize..4,
                                           theta in 0.0f64..2.0, pick in 0u32..100) {
            let enc = raw(3, 3);
            let fz = &enc.featurizer;
            let rs = ledger("R", n_ref, true);
            let ts = ledger("T", n_tgt, false);
            let rc = FineCodes::new(&SheetFeatures::new(&rs, fz), &enc);
            let tc = FineCodes::new(&SheetFeatures::new(&ts, fz), &enc);
            let c_fref = CellAddress::new(n_ref + 2, 2);
            let c_t = CellAddress::new(n_tgt + 2, 2);
            let c_r = CellAddress::new(1 + pick % (n_ref + 1), 1 + pick % 3);
            let got = adapt_parameter(&tc, c_t, &rc, c_fref, c_r, d, theta).map(|s| (s.target, s.fallback));
            prop_assert_eq!(got, oracle(&tc, c_t, &rc, c_fref, c_r, d as i64, theta));
        }

        #[test]
        fn abstention_is_monotone_in_theta(n in 4u32..16, t1 in 0.0f64..1.0, dt in 0.0f64..1.0) {
            let enc = raw(5, 3);
            let (idx, lib) = setup(&enc, vec![wb("r", vec![ledger("Data", 10, true)])]);
            let target = ledger("Data", n, false);
            let run = |theta| {
                let cfg = RecommenderConfig { theta, ..Default::default() };
                let ctx = PredictContext { indexes: &idx, library: &lib, encoder: &enc, config: &cfg };
                predict(&ctx, &target, None, CellAddress::new(n + 2, 2)).unwrap()
            };
            let lo = run(t1);
            let hi = run(t1 + dt);
            prop_assert!(lo.is_empty() || !hi.is_empty());
            for p in &lo {
                prop_assert!(p.score <= t1);
                prop_assert!(p.provenance.params.iter().all(|s| s.distance <= t1));
            }
        }
    }
}

#[test]
fn walkthrough_fixture_with_raw_features() {
    use crate::synth::{roster_reference, roster_target, ROSTER_EXPECTED, ROSTER_TARGET_CELL};
    let enc = raw(20, 6);
    let (idx, lib) = setup(&enc, vec![wb("ref", vec![roster_reference()])]);
    let cfg = RecommenderConfig::default();
    let ctx = PredictContext {
        indexes: &idx,
        library: &lib,
        encoder: &enc,
        config: &cfg,
    };
    let p = predict(&ctx, &roster_target(), Some("target"), ROSTER_TARGET_CELL).unwrap();
    assert_eq!(p[0].formula, ROSTER_EXPECTED, "{p:#?}");
    assert_eq!(p[0].provenance.cell, CellAddress::new(354, 4));
    let fallback: Vec<bool> = p[0].provenance.params.iter().map(|s| s.fallback).collect();
    assert_eq!(fallback, [true, false, false]);
}
