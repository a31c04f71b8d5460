//! Weak supervision: labelled sheet and region pairs derived from sheet-name
//! collisions, plus row/column-deletion augmentation.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::region_origin;
use crate::formula::normalize;
use crate::grid::{CellAddress, Sheet, Workbook};

#[derive(Debug, Error)]
pub enum WeakSupError {
    #[error("sheet-name universe is empty")]
    EmptyUniverse,
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("pair file line {line}: {source}")]
    Record {
        line: usize,
        source: serde_json::Error,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("pair references unknown sheet {workbook}/{sheet}")]
    UnknownSheet { workbook: String, sheet: String },
}

/// Sheet-name frequencies over a universe of sheets.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SheetNameStats {
    pub freq: HashMap<String, u64>,
    pub total: u64,
}

impl SheetNameStats {
    pub fn from_corpus(corpus: &[Workbook]) -> Self {
        let mut stats = SheetNameStats::default();
        for wb in corpus {
            for s in &wb.sheets {
                *stats.freq.entry(s.name.clone()).or_default() += 1;
                stats.total += 1;
            }
        }
        stats
    }

    /// Frequencies given directly; `total` must be at least their sum.
    pub fn from_counts(counts: &[(&str, u64)], total: u64) -> Self {
        let freq = counts.iter().map(|(n, c)| (n.to_string(), *c)).collect();
        SheetNameStats { freq, total }
    }
}

/// `freq(name) / total`; unseen names count as one occurrence.
pub fn name_probability(stats: &SheetNameStats, name: &str) -> Result<f64, WeakSupError> {
    log_name_probability(stats, name).map(f64::exp)
}

pub fn log_name_probability(stats: &SheetNameStats, name: &str) -> Result<f64, WeakSupError> {
    if stats.total == 0 {
        return Err(WeakSupError::EmptyUniverse);
    }
    let f = stats.freq.get(name).copied().unwrap_or(0).max(1);
    Ok((f as f64).ln() - (stats.total as f64).ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Similar,
    NotSimilar,
}

/// Log of the collision probability of two aligned name sequences, or
/// `None` when the sequences differ in length, are empty, or mismatch.
pub fn log_collision_probability(
    fa: &Workbook,
    fb: &Workbook,
    stats: &SheetNameStats,
) -> Result<Option<f64>, WeakSupError> {
    if fa.sheets.is_empty() || fa.sheets.len() != fb.sheets.len() {
        return Ok(None);
    }
    let mut acc = 0.0;
    for (a, b) in fa.sheets.iter().zip(&fb.sheets) {
        if a.name != b.name {
            return Ok(None);
        }
        acc += log_name_probability(stats, &a.name)?;
    }
    Ok(Some(acc))
}

/// Rejects the "not similar" null hypothesis when the aligned names'
/// collision probability is at most `alpha`.
pub fn similar_file_test(
    fa: &Workbook,
    fb: &Workbook,
    stats: &SheetNameStats,
    alpha: f64,
) -> Result<Decision, WeakSupError> {
    Ok(match log_collision_probability(fa, fb, stats)? {
        Some(lp) if lp <= alpha.ln() => Decision::Similar,
        _ => Decision::NotSimilar,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SheetRef {
    pub workbook: String,
    pub sheet: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RegionRef {
    pub workbook: String,
    pub sheet: String,
    pub cell: CellAddress,
}

impl RegionRef {
    pub fn sheet_ref(&self) -> SheetRef {
        SheetRef {
            workbook: self.workbook.clone(),
            sheet: self.sheet.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    A,
    B,
}

/// Rows and columns deleted from one element of a pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Augmentation {
    pub side: Side,
    pub rows: Vec<u32>,
    pub cols: Vec<u32>,
}

impl Augmentation {
    pub fn is_identity(&self) -> bool {
        self.rows.is_empty() && self.cols.is_empty()
    }

    pub fn apply(&self, sheet: &Sheet) -> Sheet {
        sheet.without_rows_cols(&self.rows, &self.cols)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SheetPair {
    pub label: Label,
    pub a: SheetRef,
    pub b: SheetRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub augment: Option<Augmentation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionPair {
    pub label: Label,
    pub a: RegionRef,
    pub b: RegionRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub augment: Option<Augmentation>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCounts {
    pub positive: usize,
    pub negative: usize,
}

fn name_set(wb: &Workbook) -> HashSet<&str> {
    wb.sheets.iter().map(|s| s.name.as_str()).collect()
}

fn sheet_ref(wb: &Workbook, s: &Sheet) -> SheetRef {
    SheetRef {
        workbook: wb.id.clone(),
        sheet: s.name.clone(),
    }
}

/// Positives: aligned sheets of every file pair passing the test.
/// Negatives: one per positive, pairing its `a` sheet with a random sheet of
/// a random file sharing no sheet name with `a`'s file.
pub fn generate_sheet_pairs(
    corpus: &[Workbook],
    stats: &SheetNameStats,
    alpha: f64,
    rng: &mut impl Rng,
) -> Result<(Vec<SheetPair>, PairCounts), WeakSupError> {
    if corpus.is_empty() {
        return Err(WeakSupError::EmptyCorpus);
    }
    // Only files with identical name sequences can pass the test.
    let mut groups: BTreeMap<Vec<&str>, Vec<usize>> = BTreeMap::new();
    for (i, wb) in corpus.iter().enumerate() {
        groups
            .entry(wb.sheets.iter().map(|s| s.name.as_str()).collect())
            .or_default()
            .push(i);
    }
    let mut positives = Vec::new();
    let mut anchors = Vec::new();
    for members in groups.values() {
        for (x, &i) in members.iter().enumerate() {
            for &j in &members[x + 1..] {
                let (fa, fb) = (&corpus[i], &corpus[j]);
                if similar_file_test(fa, fb, stats, alpha)? != Decision::Similar {
                    continue;
                }
                for (sa, sb) in fa.sheets.iter().zip(&fb.sheets) {
                    positives.push(SheetPair {
                        label: Label::Positive,
                        a: sheet_ref(fa, sa),
                        b: sheet_ref(fb, sb),
                        augment: None,
                    });
                    anchors.push(i);
                }
            }
        }
    }

    let names: Vec<HashSet<&str>> = corpus.iter().map(name_set).collect();
    let mut disjoint: HashMap<usize, Vec<usize>> = HashMap::new();
    let mut negatives = Vec::new();
    for (pos, &i) in positives.iter().zip(&anchors) {
        let partners = disjoint.entry(i).or_insert_with(|| {
            (0..corpus.len())
                .filter(|&j| j != i && names[i].is_disjoint(&names[j]))
                .collect()
        });
        let Some(&j) = partners.choose(rng) else { continue };
        let Some(sb) = corpus[j].sheets.choose(rng) else { continue };
        negatives.push(SheetPair {
            label: Label::Negative,
            a: pos.a.clone(),
            b: sheet_ref(&corpus[j], sb),
            augment: None,
        });
    }
    let counts = PairCounts {
        positive: positives.len(),
        negative: negatives.len(),
    };
    positives.extend(negatives);
    Ok((positives, counts))
}

/// Normalized formulas of a sheet; unparseable formulas are left out.
fn normalized_formulas(sheet: &Sheet) -> BTreeMap<CellAddress, String> {
    sheet
        .formula_cells()
        .filter_map(|(a, f)| normalize(f).ok().map(|n| (*a, n)))
        .collect()
}

/// First formula cell at or after `start` in column-major reading order
/// whose normalized text differs from `text`.
fn scan_for_different(
    formulas: &BTreeMap<CellAddress, String>,
    start: CellAddress,
    text: &str,
) -> Option<CellAddress> {
    let mut by_col: Vec<(&CellAddress, &String)> = formulas
        .iter()
        .filter(|(a, _)| (a.col, a.row) > (start.col, start.row))
        .collect();
    by_col.sort_by_key(|(a, _)| (a.col, a.row));
    by_col.into_iter().find(|(_, g)| g.as_str() != text).map(|(a, _)| *a)
}

/// Region pairs for labelled-positive sheet pairs. Positives sit at shared
/// locations holding identical formulas; each negative keeps the positive's
/// `a` and moves `b` down the column (then to later columns) to the first
/// formula that differs.
pub fn generate_region_pairs(
    positive_sheet_pairs: &[SheetPair],
    corpus: &[Workbook],
) -> Result<(Vec<RegionPair>, PairCounts), WeakSupError> {
    let lookup = SheetLookup::new(corpus);
    let mut cache: HashMap<SheetRef, BTreeMap<CellAddress, String>> = HashMap::new();
    let mut out = Vec::new();
    let mut counts = PairCounts::default();
    for pair in positive_sheet_pairs.iter().filter(|p| p.label == Label::Positive && p.augment.is_none()) {
        for r in [&pair.a, &pair.b] {
            if !cache.contains_key(r) {
                let sheet = lookup.get(r)?;
                cache.insert(r.clone(), normalized_formulas(sheet));
            }
        }
        let fa = &cache[&pair.a];
        let fb = &cache[&pair.b];
        for (loc, f) in fa {
            if fb.get(loc) != Some(f) {
                continue;
            }
            let region = |s: &SheetRef, cell| RegionRef {
                workbook: s.workbook.clone(),
                sheet: s.sheet.clone(),
                cell,
            };
            out.push(RegionPair {
                label: Label::Positive,
                a: region(&pair.a, *loc),
                b: region(&pair.b, *loc),
                augment: None,
            });
            counts.positive += 1;
            if let Some(g) = scan_for_different(fb, *loc, f) {
                out.push(RegionPair {
                    label: Label::Negative,
                    a: region(&pair.a, *loc),
                    b: region(&pair.b, g),
                    augment: None,
                });
                counts.negative += 1;
            }
        }
    }
    Ok((out, counts))
}

/// Resolves sheet references against a corpus.
pub struct SheetLookup<'a> {
    map: HashMap<(&'a str, &'a str), &'a Sheet>,
}

impl<'a> SheetLookup<'a> {
    pub fn new(corpus: &'a [Workbook]) -> Self {
        let map = corpus
            .iter()
            .flat_map(|wb| wb.sheets.iter().map(move |s| ((wb.id.as_str(), s.name.as_str()), s)))
            .collect();
        SheetLookup { map }
    }

    pub fn get(&self, r: &SheetRef) -> Result<&'a Sheet, WeakSupError> {
        self.get_parts(&r.workbook, &r.sheet)
    }

    pub fn get_parts(&self, workbook: &str, sheet: &str) -> Result<&'a Sheet, WeakSupError> {
        self.map
            .get(&(workbook, sheet))
            .copied()
            .ok_or_else(|| WeakSupError::UnknownSheet {
                workbook: workbook.to_string(),
                sheet: sheet.to_string(),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub p_max: f64,
    pub region_fraction: f64,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            p_max: 0.10,
            region_fraction: 0.20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AugmentKind {
    Sheet,
    Region { n_r: usize, n_c: usize },
}

/// Draws a deletion recipe for one side of a positive pair.
///
/// Sheet kind: every row and column of that side is dropped independently
/// with probability `p ~ U(0, p_max)`. Region kind: a trailing block of
/// `Binomial(rows, p)` rows and `Binomial(cols, p)` columns is dropped from
/// the part of the window strictly below and right of the anchor, so the
/// anchor and everything above or left of it survive.
pub fn draw_augmentation(
    sheet: &Sheet,
    anchor: Option<CellAddress>,
    kind: AugmentKind,
    cfg: &AugmentConfig,
    side: Side,
    rng: &mut impl Rng,
) -> Augmentation {
    let p = if cfg.p_max > 0.0 { rng.random_range(0.0..cfg.p_max) } else { 0.0 };
    let (rows, cols) = match kind {
        AugmentKind::Sheet => {
            let rows = (1..=sheet.n_rows).filter(|_| rng.random_bool(p)).collect();
            let cols = (1..=sheet.n_cols).filter(|_| rng.random_bool(p)).collect();
            (rows, cols)
        }
        AugmentKind::Region { n_r, n_c } => {
            let anchor = anchor.expect("region augmentation needs an anchor");
            let (r0, c0) = region_origin(anchor, n_r, n_c);
            let last_row = r0 + n_r as i64 - 1;
            let last_col = c0 + n_c as i64 - 1;
            let below = (last_row - anchor.row as i64).max(0) as u64;
            let right = (last_col - anchor.col as i64).max(0) as u64;
            let k_r = Binomial::new(below, p).map(|d| d.sample(rng)).unwrap_or(0) as i64;
            let k_c = Binomial::new(right, p).map(|d| d.sample(rng)).unwrap_or(0) as i64;
            let rows = (last_row - k_r + 1..=last_row)
                .filter(|&r| r >= 1 && r <= sheet.n_rows as i64)
                .map(|r| r as u32)
                .collect();
            let cols = (last_col - k_c + 1..=last_col)
                .filter(|&c| c >= 1 && c <= sheet.n_cols as i64)
                .map(|c| c as u32)
                .collect();
            (rows, cols)
        }
    };
    Augmentation { side, rows, cols }
}

/// Adds augmented copies: one per positive sheet pair and one for a
/// `region_fraction` share of positive region pairs. Originals are kept.
pub fn augment_pairs(
    sheet_pairs: &mut Vec<SheetPair>,
    region_pairs: &mut Vec<RegionPair>,
    corpus: &[Workbook],
    window: (usize, usize),
    cfg: &AugmentConfig,
    rng: &mut impl Rng,
) -> Result<PairCounts, WeakSupError> {
    let lookup = SheetLookup::new(corpus);
    let mut added = PairCounts::default();
    let mut extra_sheets = Vec::new();
    for p in sheet_pairs.iter().filter(|p| p.label == Label::Positive) {
        let side = if rng.random_bool(0.5) { Side::A } else { Side::B };
        let r = if side == Side::A { &p.a } else { &p.b };
        let aug = draw_augmentation(lookup.get(r)?, None, AugmentKind::Sheet, cfg, side, rng);
        extra_sheets.push(SheetPair {
            augment: Some(aug),
            ..p.clone()
        });
        added.positive += 1;
    }
    sheet_pairs.extend(extra_sheets);

    let mut extra_regions = Vec::new();
    for p in region_pairs.iter().filter(|p| p.label == Label::Positive) {
        if !rng.random_bool(cfg.region_fraction.clamp(0.0, 1.0)) {
            continue;
        }
        let side = if rng.random_bool(0.5) { Side::A } else { Side::B };
        let r = if side == Side::A { &p.a } else { &p.b };
        let sheet = lookup.get(&r.sheet_ref())?;
        let kind = AugmentKind::Region {
            n_r: window.0,
            n_c: window.1,
        };
        let aug = draw_augmentation(sheet, Some(r.cell), kind, cfg, side, rng);
        extra_regions.push(RegionPair {
            augment: Some(aug),
            ..p.clone()
        });
        added.positive += 1;
    }
    region_pairs.extend(extra_regions);
    Ok(added)
}

pub fn write_jsonl<T: Serialize>(items: &[T], mut w: impl Write) -> std::io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(r: impl BufRead) -> Result<Vec<T>, WeakSupError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| WeakSupError::Record { line: i + 1, source })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Cell, ValueType};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn wb(id: &str, names: &[&str]) -> Workbook {
        Workbook {
            id: id.into(),
            sheets: names.iter().map(|n| Sheet::new(*n)).collect(),
            last_modified: 0,
        }
    }

    fn example_stats() -> SheetNameStats {
        SheetNameStats::from_counts(
            &[
                ("Instructions", 100),
                ("WorkshopDetails", 10),
                ("Attendees", 1),
                ("Budget", 10_000),
                ("Sheet1", 15_000),
            ],
            100_000,
        )
    }

    #[test]
    fn name_probabilities() {
        let s = example_stats();
        assert!((name_probability(&s, "Instructions").unwrap() - 0.001).abs() < 1e-15);
        assert!((name_probability(&s, "Sheet1").unwrap() - 0.15).abs() < 1e-15);
        assert!((name_probability(&s, "Nope").unwrap() - 1e-5).abs() < 1e-18);
        assert!(name_probability(&SheetNameStats::default(), "x").is_err());
    }

    #[test]
    fn hypothesis_test_cases() {
        let s = example_stats();
        let names = ["Instructions", "WorkshopDetails", "Attendees", "Budget"];
        let (a, b) = (wb("a", &names), wb("b", &names));
        let lp = log_collision_probability(&a, &b, &s).unwrap().unwrap();
        assert!((lp - 1e-13f64.ln()).abs() < 1e-12);
        assert_eq!(similar_file_test(&a, &b, &s, 0.05).unwrap(), Decision::Similar);
        let (c, d) = (wb("c", &["Sheet1"]), wb("d", &["Sheet1"]));
        assert_eq!(similar_file_test(&c, &d, &s, 0.05).unwrap(), Decision::NotSimilar);
        let e = wb("e", &names[..3]);
        assert_eq!(similar_file_test(&a, &e, &s, 0.05).unwrap(), Decision::NotSimilar);
        let f = wb("f", &["Instructions", "Budget", "WorkshopDetails", "Attendees"]);
        assert_eq!(similar_file_test(&a, &f, &s, 0.05).unwrap(), Decision::NotSimilar);
    }

    #[test]
    fn aligned_positives_and_disjoint_negatives() {
        let corpus = vec![
            wb("1", &["X", "Y"]),
            wb("2", &["X", "Y"]),
            wb("3", &["A"]),
            wb("4", &["A", "B"]),
        ];
        let stats = SheetNameStats::from_counts(&[("X", 2), ("Y", 2), ("A", 2), ("B", 1)], 1000);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (pairs, counts) = generate_sheet_pairs(&corpus, &stats, 0.05, &mut rng).unwrap();
        assert_eq!(counts.positive, 2);
        assert_eq!(counts.negative, 2);
        for p in &pairs {
            match p.label {
                Label::Positive => assert_eq!(p.a.sheet, p.b.sheet),
                Label::Negative => {
                    assert!(["3", "4"].contains(&p.b.workbook.as_str()));
                    assert!(["1", "2"].contains(&p.a.workbook.as_str()));
                }
            }
        }
        // {A} and {A,B} share a name, so they never pair as negatives.
        let only = vec![wb("3", &["A"]), wb("4", &["A", "B"])];
        let (pairs, _) = generate_sheet_pairs(&only, &stats, 0.05, &mut rng).unwrap();
        assert!(pairs.iter().all(|p| p.label == Label::Positive));
    }

    fn formula_sheet(name: &str, formulas: &[(&str, &str)]) -> Sheet {
        let mut s = Sheet::new(name);
        for (a, f) in formulas {
            s.insert(Cell::new(a.parse().unwrap(), "0", ValueType::Numeric).with_formula(*f));
        }
        s
    }

    #[test]
    fn region_pairs_follow_scan_order() {
        let sa = formula_sheet("S", &[("B10", "=SUM(A1:A9)")]);
        let sb = formula_sheet("S", &[("B10", "=sum(A1:A9)"), ("B12", "=AVERAGE(A1:A9)"), ("C1", "=1")]);
        let corpus = vec![
            Workbook { id: "a".into(), sheets: vec![sa], last_modified: 0 },
            Workbook { id: "b".into(), sheets: vec![sb], last_modified: 0 },
        ];
        let pos = SheetPair {
            label: Label::Positive,
            a: SheetRef { workbook: "a".into(), sheet: "S".into() },
            b: SheetRef { workbook: "b".into(), sheet: "S".into() },
            augment: None,
        };
        let (pairs, counts) = generate_region_pairs(std::slice::from_ref(&pos), &corpus).unwrap();
        assert_eq!(counts, PairCounts { positive: 1, negative: 1 });
        assert_eq!(pairs[0].a.cell.to_a1(), "B10");
        assert_eq!(pairs[1].b.cell.to_a1(), "B12");

        let empty = vec![
            Workbook { id: "a".into(), sheets: vec![Sheet::new("S")], last_modified: 0 },
            Workbook { id: "b".into(), sheets: vec![Sheet::new("S")], last_modified: 0 },
        ];
        assert!(generate_region_pairs(&[pos], &empty).unwrap().0.is_empty());
    }

    #[test]
    fn scan_moves_to_next_column() {
        let s = formula_sheet("S", &[("B10", "=1"), ("B11", "=1"), ("C2", "=2"), ("A20", "=3")]);
        let f = normalized_formulas(&s);
        assert_eq!(scan_for_different(&f, "B10".parse().unwrap(), "=1"), Some("C2".parse().unwrap()));
        assert_eq!(scan_for_different(&f, "C2".parse().unwrap(), "=2"), None);
    }

    fn grid_sheet(rows: u32, cols: u32) -> Sheet {
        let mut s = Sheet::new("g");
        for r in 1..=rows {
            for c in 1..=cols {
                s.insert(Cell::new(CellAddress::new(r, c), format!("{r},{c}"), ValueType::Text));
            }
        }
        s
    }

    #[test]
    fn zero_probability_is_identity() {
        let s = grid_sheet(10, 4);
        let cfg = AugmentConfig { p_max: 0.0, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = draw_augmentation(&s, None, AugmentKind::Sheet, &cfg, Side::B, &mut rng);
        assert!(a.is_identity());
        assert_eq!(a.apply(&s), s);
    }

    #[test]
    fn augmentation_is_seed_deterministic() {
        let s = grid_sheet(10, 4);
        let cfg = AugmentConfig { p_max: 0.5, ..Default::default() };
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            draw_augmentation(&s, None, AugmentKind::Sheet, &cfg, Side::A, &mut rng)
        };
        assert_eq!(draw(9), draw(9));
    }

    #[test]
    fn region_augmentation_keeps_anchor_and_header() {
        let s = grid_sheet(20, 6);
        let cfg = AugmentConfig { p_max: 1.0, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let anchor = CellAddress::new(10, 3);
        for _ in 0..1000 {
            let a = draw_augmentation(
                &s,
                Some(anchor),
                AugmentKind::Region { n_r: 20, n_c: 6 },
                &cfg,
                Side::B,
                &mut rng,
            );
            assert!(a.rows.iter().all(|&r| r > anchor.row));
            assert!(a.cols.iter().all(|&c| c > anchor.col));
            let t = a.apply(&s);
            assert_eq!(t.get(anchor).unwrap().value, "10,3");
            assert_eq!(t.get(CellAddress::new(1, 1)).unwrap().value, "1,1");
        }
    }

    #[test]
    fn jsonl_round_trip() {
        let p = RegionPair {
            label: Label::Negative,
            a: RegionRef { workbook: "w".into(), sheet: "S".into(), cell: "B10".parse().unwrap() },
            b: RegionRef { workbook: "v".into(), sheet: "S".into(), cell: "B12".parse().unwrap() },
            augment: Some(Augmentation { side: Side::B, rows: vec![3], cols: vec![] }),
        };
        let mut buf = Vec::new();
        write_jsonl(std::slice::from_ref(&p), &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).contains("\"B10\""));
        let back: Vec<RegionPair> = read_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back, vec![p]);
        assert!(read_jsonl::<RegionPair>("{\"x\":1}\n".as_bytes()).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn names() -> impl Strategy<Value = Vec<String>> {
            proptest::collection::vec("[a-d]{1,2}", 1..5)
        }

        proptest! {
            #[test]
            fn test_is_symmetric(a in names(), b in names(), alpha in 0.0001f64..0.5) {
                let mut corpus = vec![wb("a", &a.iter().map(String::as_str).collect::<Vec<_>>())];
                corpus.push(wb("b", &b.iter().map(String::as_str).collect::<Vec<_>>()));
                let stats = SheetNameStats::from_corpus(&corpus);
                let fa = &corpus[0];
                let fb = &corpus[1];
                prop_assert_eq!(
                    similar_file_test(fa, fb, &stats, alpha).unwrap(),
                    similar_file_test(fb, fa, &stats, alpha).unwrap()
                );
            }

            #[test]
            fn rarer_sheet_never_flips_to_not_similar(base in names(), total in 50u64..500, alpha in 0.001f64..0.5) {
                let uniq: Vec<&str> = base.iter().map(String::as_str).collect();
                let counts: Vec<(&str, u64)> = uniq.iter().map(|n| (*n, 3)).chain([("rare", 1)]).collect();
                let stats = SheetNameStats::from_counts(&counts, total);
                let (a, b) = (wb("a", &uniq), wb("b", &uniq));
                let mut ext = uniq.clone();
                ext.push("rare");
                let (a2, b2) = (wb("a", &ext), wb("b", &ext));
                if similar_file_test(&a, &b, &stats, alpha).unwrap() == Decision::Similar {
                    prop_assert_eq!(similar_file_test(&a2, &b2, &stats, alpha).unwrap(), Decision::Similar);
                }
            }

            #[test]
            fn pair_labels_respect_names(seqs in proptest::collection::vec(names(), 2..8), seed in 0u64..1000) {
                let corpus: Vec<Workbook> = seqs.iter().enumerate().map(|(i, s)| {
                    let mut v: Vec<&str> = Vec::new();
                    for n in s { if !v.contains(&n.as_str()) { v.push(n); } }
                    wb(&i.to_string(), &v)
                }).collect();
                let stats = SheetNameStats::from_counts(&[], 10_000);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let (pairs, _) = generate_sheet_pairs(&corpus, &stats, 0.05, &mut rng).unwrap();
                let by_id: HashMap<&str, &Workbook> = corpus.iter().map(|w| (w.id.as_str(), w)).collect();
                for p in pairs {
                    let (fa, fb) = (by_id[p.a.workbook.as_str()], by_id[p.b.workbook.as_str()]);
                    prop_assert_ne!(&p.a, &p.b);
                    match p.label {
                        Label::Positive => prop_assert_eq!(similar_file_test(fa, fb, &stats, 0.05).unwrap(), Decision::Similar),
                        Label::Negative => prop_assert!(name_set(fa).is_disjoint(&name_set(fb))),
                    }
                }
            }
        }
    }
}
