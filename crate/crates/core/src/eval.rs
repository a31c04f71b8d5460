//! Evaluation protocol: corpus splits, exact-match scoring, precision and
//! recall, threshold sweeps, bucketed breakdowns, and embedding separation
//! on held-out pairs.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::SheetFeatures;
use crate::formula::{ast_size, classify_formula, normalize, parse_formula};
use crate::grid::{Cell, CellAddress, Sheet, ValueType, Workbook};
use crate::index::Indexes;
use crate::model::sq_dist;
use crate::recommend::{
    index_corpus, predict, Encoder, FineCodes, Library, PredictContext, RecommendError, RecommenderConfig,
};
use crate::weaksup::{
    generate_region_pairs, generate_sheet_pairs, Label, RegionPair, SheetNameStats, SheetPair, SheetRef, WeakSupError,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("test fraction must lie strictly between 0 and 1, got {0}")]
    Fraction(f64),
    #[error("corpus needs at least two workbooks to split, got {0}")]
    TooSmall(usize),
    #[error("theta grid is empty")]
    EmptyGrid,
    #[error("test case {workbook}/{sheet}!{cell} does not exist")]
    MissingCase {
        workbook: String,
        sheet: String,
        cell: CellAddress,
    },
    #[error(transparent)]
    Recommend(#[from] RecommendError),
    #[error(transparent)]
    Pairs(#[from] WeakSupError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    Random,
    Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CapScope {
    Workbook,
    Sheet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSplit {
    pub mode: SplitMode,
    pub test_fraction: f64,
    pub per_sheet_cap: usize,
    /// Whether the cap counts formulas per workbook or per sheet.
    pub cap_scope: CapScope,
    pub seed: u64,
}

impl Default for EvalSplit {
    fn default() -> Self {
        EvalSplit {
            mode: SplitMode::Timestamp,
            test_fraction: 0.1,
            per_sheet_cap: 10,
            cap_scope: CapScope::Workbook,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TestCase {
    pub workbook: String,
    pub sheet: String,
    pub cell: CellAddress,
    pub formula: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub reference: Vec<Workbook>,
    pub test: Vec<Workbook>,
    pub cases: Vec<TestCase>,
}

/// Number of test workbooks for a corpus of `n`; at least one on each side.
pub fn test_count(n: usize, fraction: f64) -> usize {
    ((n as f64 * fraction).round() as usize).clamp(1, n - 1)
}

/// Splits a corpus into reference and test workbooks and samples test
/// formulas from the latter.
pub fn split_corpus(corpus: &[Workbook], split: &EvalSplit) -> Result<Split, EvalError> {
    if !(split.test_fraction > 0.0 && split.test_fraction < 1.0) {
        return Err(EvalError::Fraction(split.test_fraction));
    }
    if corpus.len() < 2 {
        return Err(EvalError::TooSmall(corpus.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(split.seed);
    let n_test = test_count(corpus.len(), split.test_fraction);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    match split.mode {
        SplitMode::Random => order.shuffle(&mut rng),
        SplitMode::Timestamp => {
            if corpus.iter().all(|w| w.last_modified == 0) {
                tracing::warn!("no workbook has a timestamp; splitting by id order");
            }
            order.sort_by(|&a, &b| {
                (corpus[a].last_modified, &corpus[a].id).cmp(&(corpus[b].last_modified, &corpus[b].id))
            });
            order.reverse();
        }
    }
    let test_ids: HashSet<usize> = order[..n_test].iter().copied().collect();
    let mut reference = Vec::new();
    let mut test = Vec::new();
    for (i, wb) in corpus.iter().enumerate() {
        if test_ids.contains(&i) {
            test.push(wb.clone());
        } else {
            reference.push(wb.clone());
        }
    }
    let mut cases = Vec::new();
    for wb in &test {
        let mut pools: Vec<Vec<TestCase>> = Vec::new();
        for s in &wb.sheets {
            let sheet_cases: Vec<TestCase> = s
                .formula_cells()
                .map(|(a, f)| TestCase {
                    workbook: wb.id.clone(),
                    sheet: s.name.clone(),
                    cell: *a,
                    formula: f.to_string(),
                })
                .collect();
            match split.cap_scope {
                CapScope::Sheet => pools.push(sheet_cases),
                CapScope::Workbook => {
                    if pools.is_empty() {
                        pools.push(Vec::new());
                    }
                    pools[0].extend(sheet_cases);
                }
            }
        }
        for pool in pools {
            let mut picked: Vec<TestCase> = pool.choose_multiple(&mut rng, split.per_sheet_cap).cloned().collect();
            picked.sort_by(|a, b| (&a.sheet, a.cell).cmp(&(&b.sheet, b.cell)));
            cases.extend(picked);
        }
    }
    Ok(Split {
        reference,
        test,
        cases,
    })
}

/// `None` when the ground truth does not parse; such cases are excluded.
pub fn exact_match(predicted: &str, truth: &str) -> Option<bool> {
    let t = normalize(truth).ok()?;
    Some(normalize(predicted).is_ok_and(|p| p == t))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
}

/// Precision is 0 when nothing was predicted; F1 is 0 when P + R is 0.
pub fn score(n: usize, n_pred: usize, n_hit: usize) -> Scores {
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let recall = ratio(n_hit, n);
    let precision = ratio(n_hit, n_pred);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Scores {
        recall,
        precision,
        f1,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub case: TestCase,
    pub predicted: Option<String>,
    pub distance: Option<f64>,
    pub hit: bool,
    pub sheet_rows: u32,
    pub formula_length: usize,
    pub formula_type: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub n: usize,
    pub n_pred: usize,
    pub n_hit: usize,
    /// Cases whose ground truth does not parse.
    pub excluded: usize,
    pub records: Vec<CaseRecord>,
}

impl EvalResult {
    pub fn scores(&self) -> Scores {
        score(self.n, self.n_pred, self.n_hit)
    }

    fn from_records(records: Vec<CaseRecord>, excluded: usize) -> Self {
        EvalResult {
            n: records.len(),
            n_pred: records.iter().filter(|r| r.predicted.is_some()).count(),
            n_hit: records.iter().filter(|r| r.hit).count(),
            excluded,
            records,
        }
    }
}

/// The target sheet as the user saw it before writing the formula.
pub fn blank_target(sheet: &Sheet, cell: CellAddress) -> Sheet {
    let mut s = sheet.clone();
    if let Some(c) = s.cells.get_mut(&cell) {
        *c = Cell {
            value: String::new(),
            value_type: ValueType::Empty,
            formula: None,
            ..c.clone()
        };
    }
    s
}

/// Reference side of an evaluation: indexes over the reference workbooks.
pub struct Pipeline<'a> {
    pub encoder: &'a dyn Encoder,
    pub indexes: Indexes,
    pub library: Library,
}

impl<'a> Pipeline<'a> {
    pub fn build(reference: Vec<Workbook>, encoder: &'a dyn Encoder) -> Result<Self, EvalError> {
        let (indexes, _) = index_corpus(&reference, encoder)?;
        Ok(Pipeline {
            encoder,
            indexes,
            library: Library::new(reference),
        })
    }
}

/// Top-1 prediction for every case; runs cases on all available cores.
pub fn evaluate(
    pipeline: &Pipeline<'_>,
    test: &[Workbook],
    cases: &[TestCase],
    cfg: &RecommenderConfig,
) -> Result<EvalResult, EvalError> {
    let sheets: HashMap<(&str, &str), &Sheet> = test
        .iter()
        .flat_map(|w| w.sheets.iter().map(move |s| ((w.id.as_str(), s.name.as_str()), s)))
        .collect();
    let ctx = PredictContext {
        indexes: &pipeline.indexes,
        library: &pipeline.library,
        encoder: pipeline.encoder,
        config: cfg,
    };
    let run = |case: &TestCase| -> Result<Option<CaseRecord>, EvalError> {
        let Ok(ast) = parse_formula(&case.formula) else {
            tracing::warn!(formula = %case.formula, "ground truth does not parse; case excluded");
            return Ok(None);
        };
        let sheet = sheets
            .get(&(case.workbook.as_str(), case.sheet.as_str()))
            .ok_or_else(|| EvalError::MissingCase {
                workbook: case.workbook.clone(),
                sheet: case.sheet.clone(),
                cell: case.cell,
            })?;
        let target = blank_target(sheet, case.cell);
        let preds = predict(&ctx, &target, Some(&case.workbook), case.cell)?;
        let top = preds.into_iter().next();
        let hit = top.as_ref().is_some_and(|p| exact_match(&p.formula, &case.formula) == Some(true));
        Ok(Some(CaseRecord {
            case: case.clone(),
            distance: top.as_ref().map(|p| p.score),
            predicted: top.map(|p| p.formula),
            hit,
            sheet_rows: sheet.n_rows,
            formula_length: ast_size(&ast),
            formula_type: classify_formula(&ast).as_str().to_string(),
        }))
    };
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(cases.len().max(1));
    let chunk = cases.len().div_ceil(threads).max(1);
    let outcomes: Vec<Result<Vec<Option<CaseRecord>>, EvalError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = cases
            .chunks(chunk)
            .map(|part| scope.spawn(move || part.iter().map(run).collect::<Result<Vec<_>, _>>()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("evaluation thread panicked")).collect()
    });
    let mut records = Vec::with_capacity(cases.len());
    let mut excluded = 0;
    for part in outcomes {
        for r in part? {
            match r {
                Some(r) => records.push(r),
                None => excluded += 1,
            }
        }
    }
    Ok(EvalResult::from_records(records, excluded))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub theta: f64,
    pub precision: f64,
    pub recall: f64,
    pub n_pred: usize,
    pub n_hit: usize,
}

/// Re-runs the pipeline at each threshold of the grid.
pub fn pr_sweep(
    pipeline: &Pipeline<'_>,
    test: &[Workbook],
    cases: &[TestCase],
    cfg: &RecommenderConfig,
    grid: &[f64],
) -> Result<Vec<PrPoint>, EvalError> {
    if grid.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    grid.iter()
        .map(|&theta| {
            let r = evaluate(pipeline, test, cases, &RecommenderConfig { theta, ..cfg.clone() })?;
            let s = r.scores();
            Ok(PrPoint {
                theta,
                precision: s.precision,
                recall: s.recall,
                n_pred: r.n_pred,
                n_hit: r.n_hit,
            })
        })
        .collect()
}

/// Evenly spaced thresholds from 0 to 4, the largest squared distance
/// between unit vectors.
pub fn default_theta_grid(points: usize) -> Vec<f64> {
    let steps = points.max(2) - 1;
    (0..=steps).map(|i| 4.0 * i as f64 / steps as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BucketKey {
    SheetRows,
    FormulaLength,
    FormulaType,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketEdges {
    /// Lower edges after the first bucket: `<40, 40-99, 100-499, >=500`.
    pub rows: Vec<u32>,
    /// Inclusive upper edges: `<=3, 4-6, 7-10, >10` AST nodes.
    pub length: Vec<usize>,
}

impl Default for BucketEdges {
    fn default() -> Self {
        BucketEdges {
            rows: vec![40, 100, 500],
            length: vec![3, 6, 10],
        }
    }
}

impl BucketEdges {
    pub fn rows_label(&self, rows: u32) -> String {
        let i = self.rows.iter().take_while(|&&e| rows >= e).count();
        match i {
            0 => format!("<{}", self.rows[0]),
            i if i == self.rows.len() => format!(">={}", self.rows[i - 1]),
            i => format!("{}-{}", self.rows[i - 1], self.rows[i] - 1),
        }
    }

    pub fn length_label(&self, len: usize) -> String {
        let i = self.length.iter().take_while(|&&e| len > e).count();
        match i {
            0 => format!("<={}", self.length[0]),
            i if i == self.length.len() => format!(">{}", self.length[i - 1]),
            i => format!("{}-{}", self.length[i - 1] + 1, self.length[i]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub label: String,
    pub n: usize,
    pub n_pred: usize,
    pub n_hit: usize,
    pub scores: Scores,
}

/// Per-bucket scores, in first-seen order of buckets along the edge list.
pub fn bucketize(records: &[CaseRecord], key: BucketKey, edges: &BucketEdges) -> Vec<Bucket> {
    let mut groups: BTreeMap<(usize, String), (usize, usize, usize)> = BTreeMap::new();
    for r in records {
        let (order, label) = match key {
            BucketKey::SheetRows => (
                edges.rows.iter().take_while(|&&e| r.sheet_rows >= e).count(),
                edges.rows_label(r.sheet_rows),
            ),
            BucketKey::FormulaLength => (
                edges.length.iter().take_while(|&&e| r.formula_length > e).count(),
                edges.length_label(r.formula_length),
            ),
            BucketKey::FormulaType => (0, r.formula_type.clone()),
        };
        let g = groups.entry((order, label)).or_default();
        g.0 += 1;
        g.1 += r.predicted.is_some() as usize;
        g.2 += r.hit as usize;
    }
    groups
        .into_iter()
        .map(|((_, label), (n, n_pred, n_hit))| Bucket {
            label,
            n,
            n_pred,
            n_hit,
            scores: score(n, n_pred, n_hit),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub split: EvalSplit,
    pub theta: f64,
    pub reference_workbooks: usize,
    pub test_workbooks: usize,
    pub n: usize,
    pub n_pred: usize,
    pub n_hit: usize,
    pub excluded: usize,
    pub scores: Scores,
    pub pr: Vec<PrPoint>,
    pub buckets: BTreeMap<String, Vec<Bucket>>,
}

/// Splits, indexes the reference side, scores the test cases at the
/// configured threshold, and sweeps `grid`.
pub fn run_eval(
    corpus: &[Workbook],
    encoder: &dyn Encoder,
    split: &EvalSplit,
    cfg: &RecommenderConfig,
    grid: &[f64],
) -> Result<(Report, EvalResult), EvalError> {
    let Split {
        reference,
        test,
        cases,
    } = split_corpus(corpus, split)?;
    let n_ref = reference.len();
    let pipeline = Pipeline::build(reference, encoder)?;
    let result = evaluate(&pipeline, &test, &cases, cfg)?;
    let pr = if grid.is_empty() {
        Vec::new()
    } else {
        pr_sweep(&pipeline, &test, &cases, cfg, grid)?
    };
    let edges = BucketEdges::default();
    let buckets = [
        ("sheet_rows", BucketKey::SheetRows),
        ("formula_length", BucketKey::FormulaLength),
        ("formula_type", BucketKey::FormulaType),
    ]
    .into_iter()
    .map(|(name, key)| (name.to_string(), bucketize(&result.records, key, &edges)))
    .collect();
    let report = Report {
        split: split.clone(),
        theta: cfg.theta,
        reference_workbooks: n_ref,
        test_workbooks: test.len(),
        n: result.n,
        n_pred: result.n_pred,
        n_hit: result.n_hit,
        excluded: result.excluded,
        scores: result.scores(),
        pr,
        buckets,
    };
    Ok((report, result))
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One line per case.
pub fn write_cases_csv(records: &[CaseRecord], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "workbook,sheet,cell,truth,predicted,distance,hit,sheet_rows,formula_length,formula_type")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            csv_field(&r.case.workbook),
            csv_field(&r.case.sheet),
            r.case.cell,
            csv_field(&r.case.formula),
            csv_field(r.predicted.as_deref().unwrap_or("")),
            r.distance.map(|d| d.to_string()).unwrap_or_default(),
            r.hit,
            r.sheet_rows,
            r.formula_length,
            r.formula_type
        )?;
    }
    Ok(())
}

pub fn write_pr_csv(points: &[PrPoint], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "theta,precision,recall,n_pred,n_hit")?;
    for p in points {
        writeln!(w, "{},{},{},{},{}", p.theta, p.precision, p.recall, p.n_pred, p.n_hit)?;
    }
    Ok(())
}

/// Precision against recall as a standalone SVG polyline.
pub fn pr_svg(points: &[PrPoint]) -> String {
    let (w, h, pad) = (400.0, 300.0, 40.0);
    let x = |r: f64| pad + r * (w - 2.0 * pad);
    let y = |p: f64| h - pad - p * (h - 2.0 * pad);
    let mut pts: Vec<&PrPoint> = points.iter().collect();
    pts.sort_by(|a, b| a.recall.total_cmp(&b.recall));
    let line: Vec<String> = pts.iter().map(|p| format!("{:.1},{:.1}", x(p.recall), y(p.precision))).collect();
    format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\">",
            "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>",
            "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>",
            "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"black\"/>",
            "<text x=\"{xm}\" y=\"{yl}\" text-anchor=\"middle\">recall</text>",
            "<text x=\"12\" y=\"{ym}\" transform=\"rotate(-90 12 {ym})\" text-anchor=\"middle\">precision</text>",
            "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"{pts}\"/>",
            "</svg>\n"
        ),
        w = w,
        h = h,
        x0 = x(0.0),
        x1 = x(1.0),
        y0 = y(0.0),
        y1 = y(1.0),
        xm = x(0.5),
        yl = h - 8.0,
        ym = y(0.5),
        pts = line.join(" ")
    )
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Separation {
    /// Anchors with at least one positive and one negative.
    pub anchors: usize,
    /// Anchors whose mean positive distance is below their mean negative.
    pub separated: usize,
}

impl Separation {
    pub fn fraction(&self) -> f64 {
        if self.anchors == 0 {
            0.0
        } else {
            self.separated as f64 / self.anchors as f64
        }
    }
}

fn separation<K: std::hash::Hash + Eq + Clone>(
    pairs: impl Iterator<Item = (K, K, Label)>,
    mut embed: impl FnMut(&K) -> Option<Vec<f64>>,
) -> Separation {
    let mut by_anchor: BTreeMap<usize, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    let mut ids: HashMap<K, usize> = HashMap::new();
    let mut cache: HashMap<K, Option<Vec<f64>>> = HashMap::new();
    for (a, b, label) in pairs {
        let ea = cache.entry(a.clone()).or_insert_with(|| embed(&a)).clone();
        let eb = cache.entry(b.clone()).or_insert_with(|| embed(&b)).clone();
        let (Some(ea), Some(eb)) = (ea, eb) else { continue };
        let next = ids.len();
        let id = *ids.entry(a).or_insert(next);
        let d = sq_dist(&ea, &eb);
        let slot = by_anchor.entry(id).or_default();
        match label {
            Label::Positive => slot.0.push(d),
            Label::Negative => slot.1.push(d),
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let mut s = Separation::default();
    for (pos, neg) in by_anchor.values() {
        if pos.is_empty() || neg.is_empty() {
            continue;
        }
        s.anchors += 1;
        s.separated += (mean(pos) < mean(neg)) as usize;
    }
    s
}

/// Weakly-labelled pairs whose anchor side lies in a held-out workbook.
/// Held-out files are moved to the front so they take the anchor role.
pub fn held_out_pairs(
    corpus: &[Workbook],
    held_out: &HashSet<String>,
    alpha: f64,
    seed: u64,
) -> Result<(Vec<SheetPair>, Vec<RegionPair>), EvalError> {
    let mut ordered: Vec<Workbook> = corpus.to_vec();
    ordered.sort_by_key(|w| !held_out.contains(&w.id));
    let stats = SheetNameStats::from_corpus(&ordered);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sheets, _) = generate_sheet_pairs(&ordered, &stats, alpha, &mut rng)?;
    sheets.retain(|p| held_out.contains(&p.a.workbook));
    let (regions, _) = generate_region_pairs(&sheets, &ordered)?;
    Ok((sheets, regions))
}

/// Per-anchor separation of positive and negative distances for pairs
/// whose anchor lies in `anchors`. Augmented pairs are skipped.
pub fn held_out_separation(
    corpus: &[Workbook],
    encoder: &dyn Encoder,
    sheet_pairs: &[SheetPair],
    region_pairs: &[RegionPair],
    anchors: &HashSet<String>,
) -> (Separation, Separation) {
    let lookup = crate::weaksup::SheetLookup::new(corpus);
    let (n_r, n_c) = encoder.window();
    let coarse = separation(
        sheet_pairs
            .iter()
            .filter(|p| p.augment.is_none() && anchors.contains(&p.a.workbook))
            .map(|p| (p.a.clone(), p.b.clone(), p.label)),
        |r| {
            let f = SheetFeatures::new(lookup.get(r).ok()?, encoder.featurizer());
            Some(encoder.embed_sheet(&f.sheet_window(n_r, n_c)))
        },
    );
    let mut codes: HashMap<SheetRef, Option<FineCodes>> = HashMap::new();
    let fine = separation(
        region_pairs
            .iter()
            .filter(|p| p.augment.is_none() && anchors.contains(&p.a.workbook))
            .map(|p| (p.a.clone(), p.b.clone(), p.label)),
        |r| {
            let c = codes.entry(r.sheet_ref()).or_insert_with(|| {
                let s = lookup.get(&r.sheet_ref()).ok()?;
                Some(FineCodes::new(&SheetFeatures::new(s, encoder.featurizer()), encoder))
            });
            c.as_ref().map(|c| c.region(r.cell))
        },
    );
    (coarse, fine)
}
