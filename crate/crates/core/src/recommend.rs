//! Online prediction: similar sheets (S1), a reference formula from the most
//! similar formula region (S2), and parameter cells adapted to the target
//! sheet (S3).

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{Featurizer, SheetFeatures, WindowTensor};
use crate::formula::{extract_template, instantiate, parse_formula, ParameterCells};
use crate::grid::{CellAddress, Sheet, Workbook};
use crate::index::{IndexError, Indexes, RegionKey};
use crate::model::{l2_normalize, sq_dist, Model, ModelError, ModelKind};
use crate::weaksup::SheetRef;

/// Sheets with more cells than this are never scanned exhaustively.
pub const FALLBACK_CELL_LIMIT: u64 = 100_000;
/// Region-distance threshold picked from the precision/recall sweep on the
/// synthetic corpus with desk-scale models.
pub const DEFAULT_THETA: f64 = 1.2;
const DENSE_SLOT_LIMIT: u64 = 4_000_000;

#[derive(Debug, Error)]
pub enum RecommendError {
    #[error("cell {cell} is outside sheet {sheet:?} ({n_rows} rows x {n_cols} columns)")]
    OutOfBounds {
        sheet: String,
        cell: CellAddress,
        n_rows: u32,
        n_cols: u32,
    },
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("encoder mismatch: {0}")]
    Encoder(String),
}

/// Maps windows and cells to the vectors stored in the indexes.
pub trait Encoder: Send + Sync {
    fn featurizer(&self) -> &Featurizer;
    fn window(&self) -> (usize, usize);
    fn coarse_dim(&self) -> usize;
    /// Dimension of one cell's fine code.
    fn code_dim(&self) -> usize;
    /// Unit-norm sheet embedding of a top-left window.
    fn embed_sheet(&self, t: &WindowTensor) -> Vec<f64>;
    /// Fine code of one cell feature vector. A region embedding is the
    /// normalized concatenation of its cells' codes.
    fn cell_code(&self, features: &[f64]) -> Vec<f64>;

    fn fine_dim(&self) -> usize {
        let (n_r, n_c) = self.window();
        n_r * n_c * self.code_dim()
    }
}

/// Trained coarse and fine models.
#[derive(Debug, Clone)]
pub struct ModelEncoder {
    pub coarse: Model,
    pub fine: Model,
    pub featurizer: Featurizer,
}

impl ModelEncoder {
    pub fn new(coarse: Model, fine: Model, featurizer: Featurizer) -> Result<Self, RecommendError> {
        if coarse.kind != ModelKind::Coarse || fine.kind != ModelKind::Fine {
            return Err(RecommendError::Encoder("expected one coarse and one fine model".into()));
        }
        if coarse.window() != fine.window() {
            return Err(RecommendError::Encoder("models use different windows".into()));
        }
        for m in [&coarse, &fine] {
            if m.config.d_cell != featurizer.dim() {
                return Err(RecommendError::Encoder(format!(
                    "model expects {}-dim cells, featurizer gives {}",
                    m.config.d_cell,
                    featurizer.dim()
                )));
            }
        }
        Ok(ModelEncoder {
            coarse,
            fine,
            featurizer,
        })
    }
}

impl Encoder for ModelEncoder {
    fn featurizer(&self) -> &Featurizer {
        &self.featurizer
    }

    fn window(&self) -> (usize, usize) {
        self.coarse.window()
    }

    fn coarse_dim(&self) -> usize {
        self.coarse.dim()
    }

    fn code_dim(&self) -> usize {
        self.fine.config.d_fine_per_cell
    }

    fn embed_sheet(&self, t: &WindowTensor) -> Vec<f64> {
        self.coarse.embed(t).expect("window shape follows the model config")
    }

    fn cell_code(&self, features: &[f64]) -> Vec<f64> {
        self.fine.fine_cell_code(features)
    }
}

/// Untrained stand-in: raw cell features are the codes and the flattened
/// sheet window is the sheet embedding.
#[derive(Debug, Clone)]
pub struct RawFeatureEncoder {
    pub featurizer: Featurizer,
    pub n_r: usize,
    pub n_c: usize,
}

impl Encoder for RawFeatureEncoder {
    fn featurizer(&self) -> &Featurizer {
        &self.featurizer
    }

    fn window(&self) -> (usize, usize) {
        (self.n_r, self.n_c)
    }

    fn coarse_dim(&self) -> usize {
        self.n_r * self.n_c * self.featurizer.dim()
    }

    fn code_dim(&self) -> usize {
        self.featurizer.dim()
    }

    fn embed_sheet(&self, t: &WindowTensor) -> Vec<f64> {
        l2_normalize(t.data.clone())
    }

    fn cell_code(&self, features: &[f64]) -> Vec<f64> {
        features.to_vec()
    }
}

#[derive(Debug, Clone)]
enum Slots {
    Dense(Vec<u32>),
    Sparse(HashMap<CellAddress, u32>),
}

/// Fine codes of every cell of one sheet; slot 0 holds the empty-cell code.
#[derive(Debug, Clone)]
pub struct FineCodes {
    pub n_rows: u32,
    pub n_cols: u32,
    n_r: usize,
    n_c: usize,
    dpc: usize,
    codes: Vec<f64>,
    slots: Slots,
}

impl FineCodes {
    pub fn new(feats: &SheetFeatures, enc: &dyn Encoder) -> Self {
        let (n_r, n_c) = enc.window();
        let dpc = enc.code_dim();
        let mut codes = enc.cell_code(feats.empty());
        let dense = feats.n_rows as u64 * feats.n_cols as u64 <= DENSE_SLOT_LIMIT;
        let mut dense_slots = if dense {
            vec![0u32; feats.n_rows as usize * feats.n_cols as usize]
        } else {
            Vec::new()
        };
        let mut sparse = HashMap::new();
        let mut cells: Vec<(CellAddress, &[f64])> = feats.populated().collect();
        cells.sort_by_key(|(a, _)| *a);
        for (addr, f) in cells {
            let slot = (codes.len() / dpc) as u32;
            codes.extend(enc.cell_code(f));
            if dense {
                dense_slots[(addr.row as usize - 1) * feats.n_cols as usize + addr.col as usize - 1] = slot;
            } else {
                sparse.insert(addr, slot);
            }
        }
        FineCodes {
            n_rows: feats.n_rows,
            n_cols: feats.n_cols,
            n_r,
            n_c,
            dpc,
            codes,
            slots: if dense { Slots::Dense(dense_slots) } else { Slots::Sparse(sparse) },
        }
    }

    pub fn in_bounds(&self, row: i64, col: i64) -> bool {
        row >= 1 && col >= 1 && row <= self.n_rows as i64 && col <= self.n_cols as i64
    }

    fn code_at(&self, row: i64, col: i64) -> &[f64] {
        let slot = if !self.in_bounds(row, col) {
            0
        } else {
            match &self.slots {
                Slots::Dense(s) => s[(row as usize - 1) * self.n_cols as usize + col as usize - 1],
                Slots::Sparse(m) => m.get(&CellAddress::new(row as u32, col as u32)).copied().unwrap_or(0),
            }
        } as usize;
        &self.codes[slot * self.dpc..(slot + 1) * self.dpc]
    }

    /// Unit-norm embedding of the region window centred on `c`.
    pub fn region(&self, c: CellAddress) -> Vec<f64> {
        let (r0, c0) = crate::features::region_origin(c, self.n_r, self.n_c);
        let mut z = Vec::with_capacity(self.n_r * self.n_c * self.dpc);
        for i in 0..self.n_r as i64 {
            for j in 0..self.n_c as i64 {
                z.extend_from_slice(self.code_at(r0 + i, c0 + j));
            }
        }
        l2_normalize(z)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecommenderConfig {
    /// Candidate similar sheets.
    pub k: usize,
    /// Neighbourhood radius, in cells, of the parameter search.
    pub d: usize,
    /// Region-distance threshold; larger distances abstain.
    pub theta: f64,
    pub theta_sheet: Option<f64>,
    pub top_n: usize,
    /// Skip the target's own workbook when retrieving sheets.
    pub exclude_own_workbook: bool,
    /// Ranked region entries examined per top-n slot.
    pub entries_per_slot: usize,
}

impl Default for RecommenderConfig {
    fn default() -> Self {
        RecommenderConfig {
            k: 5,
            d: 5,
            theta: DEFAULT_THETA,
            theta_sheet: None,
            top_n: 3,
            exclude_own_workbook: true,
            entries_per_slot: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSource {
    pub reference: CellAddress,
    pub target: CellAddress,
    pub distance: f64,
    /// Found by the whole-sheet scan rather than the neighbourhood search.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub workbook_id: String,
    pub sheet: String,
    pub cell: CellAddress,
    pub reference_formula: String,
    pub sheet_distance: f64,
    pub region_distance: f64,
    pub params: Vec<ParamSource>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub formula: String,
    pub template: String,
    pub params: Vec<CellAddress>,
    pub score: f64,
    pub provenance: Provenance,
}

/// Workbooks available as reference material.
#[derive(Debug, Clone, Default)]
pub struct Library {
    workbooks: BTreeMap<String, Arc<Workbook>>,
}

impl Library {
    pub fn new(workbooks: impl IntoIterator<Item = Workbook>) -> Self {
        Library {
            workbooks: workbooks.into_iter().map(|w| (w.id.clone(), Arc::new(w))).collect(),
        }
    }

    pub fn insert(&mut self, wb: Workbook) {
        self.workbooks.insert(wb.id.clone(), Arc::new(wb));
    }

    pub fn get(&self, id: &str) -> Option<&Arc<Workbook>> {
        self.workbooks.get(id)
    }

    pub fn sheet(&self, workbook: &str, sheet: &str) -> Option<&Sheet> {
        self.workbooks.get(workbook)?.sheet(sheet)
    }

    pub fn len(&self) -> usize {
        self.workbooks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.workbooks.is_empty()
    }

    pub fn workbooks(&self) -> impl Iterator<Item = &Arc<Workbook>> {
        self.workbooks.values()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexStats {
    pub sheets: usize,
    pub formulas: usize,
    pub skipped_formulas: usize,
}

/// Adds one workbook's sheets and formula regions to the indexes.
pub fn index_workbook(indexes: &mut Indexes, wb: &Workbook, enc: &dyn Encoder) -> Result<IndexStats, RecommendError> {
    let (n_r, n_c) = enc.window();
    let mut stats = IndexStats::default();
    for sheet in &wb.sheets {
        let feats = SheetFeatures::new(sheet, enc.featurizer());
        let key = SheetRef {
            workbook: wb.id.clone(),
            sheet: sheet.name.clone(),
        };
        indexes.add_sheet(key, &enc.embed_sheet(&feats.sheet_window(n_r, n_c)))?;
        stats.sheets += 1;
        let mut codes = None;
        for (addr, f) in sheet.formula_cells() {
            if parse_formula(f).is_err() {
                stats.skipped_formulas += 1;
                continue;
            }
            let codes = codes.get_or_insert_with(|| FineCodes::new(&feats, enc));
            let key = RegionKey {
                workbook: wb.id.clone(),
                sheet: sheet.name.clone(),
                cell: *addr,
                formula: f.to_string(),
            };
            indexes.add_region(key, &codes.region(*addr))?;
            stats.formulas += 1;
        }
    }
    Ok(stats)
}

/// Builds both indexes over a corpus.
pub fn index_corpus(workbooks: &[Workbook], enc: &dyn Encoder) -> Result<(Indexes, IndexStats), RecommendError> {
    let mut idx = Indexes::new(enc.coarse_dim(), enc.fine_dim());
    let mut total = IndexStats::default();
    for wb in workbooks {
        let s = index_workbook(&mut idx, wb, enc)?;
        total.sheets += s.sheets;
        total.formulas += s.formulas;
        total.skipped_formulas += s.skipped_formulas;
    }
    if total.skipped_formulas > 0 {
        tracing::warn!(skipped = total.skipped_formulas, "unparseable formulas left out of the index");
    }
    Ok((idx, total))
}

/// Best target cell for reference parameter `c_r`.
///
/// The expected location is `c_r` shifted by the offset from the reference
/// formula cell to the target cell. The `(2d+1)^2` square around it is
/// searched first; if the location lies outside the sheet or the best match
/// is farther than `theta`, every cell of the target sheet is scanned
/// instead (up to [`FALLBACK_CELL_LIMIT`] cells). Matches farther than
/// `theta` are rejected. Ties go to the first cell in row-major order.
pub fn adapt_parameter(
    target: &FineCodes,
    c_t: CellAddress,
    reference: &FineCodes,
    c_fref: CellAddress,
    c_r: CellAddress,
    d: usize,
    theta: f64,
) -> Option<ParamSource> {
    let want = reference.region(c_r);
    let exp_row = c_r.row as i64 - c_fref.row as i64 + c_t.row as i64;
    let exp_col = c_r.col as i64 - c_fref.col as i64 + c_t.col as i64;
    let best_in = |rows: std::ops::RangeInclusive<i64>, cols: std::ops::RangeInclusive<i64>| {
        let mut best: Option<(f64, CellAddress)> = None;
        for r in rows {
            for c in cols.clone() {
                if !target.in_bounds(r, c) {
                    continue;
                }
                let a = CellAddress::new(r as u32, c as u32);
                let dist = sq_dist(&target.region(a), &want);
                if best.is_none_or(|(bd, _)| dist < bd) {
                    best = Some((dist, a));
                }
            }
        }
        best
    };
    let d = d as i64;
    if target.in_bounds(exp_row, exp_col) {
        if let Some((dist, a)) = best_in(exp_row - d..=exp_row + d, exp_col - d..=exp_col + d) {
            if dist <= theta {
                return Some(ParamSource {
                    reference: c_r,
                    target: a,
                    distance: dist,
                    fallback: false,
                });
            }
        }
    }
    if target.n_rows as u64 * target.n_cols as u64 > FALLBACK_CELL_LIMIT {
        return None;
    }
    let (dist, a) = best_in(1..=target.n_rows as i64, 1..=target.n_cols as i64)?;
    (dist <= theta).then_some(ParamSource {
        reference: c_r,
        target: a,
        distance: dist,
        fallback: true,
    })
}

/// Orders each range's endpoints per dimension so the range stays valid.
fn order_ranges(params: &mut [CellAddress], pairs: &[(usize, usize)]) {
    for &(i, j) in pairs {
        let (a, b) = (params[i - 1], params[j - 1]);
        params[i - 1] = CellAddress::new(a.row.min(b.row), a.col.min(b.col));
        params[j - 1] = CellAddress::new(a.row.max(b.row), a.col.max(b.col));
    }
}

/// Everything a prediction reads; immutable and shareable.
pub struct PredictContext<'a> {
    pub indexes: &'a Indexes,
    pub library: &'a Library,
    pub encoder: &'a dyn Encoder,
    pub config: &'a RecommenderConfig,
}

/// Ranked formula suggestions for `c_t` on `target`; empty means abstain.
pub fn predict(
    ctx: &PredictContext<'_>,
    target: &Sheet,
    target_workbook: Option<&str>,
    c_t: CellAddress,
) -> Result<Vec<Prediction>, RecommendError> {
    if !target.in_bounds(c_t) {
        return Err(RecommendError::OutOfBounds {
            sheet: target.name.clone(),
            cell: c_t,
            n_rows: target.n_rows,
            n_cols: target.n_cols,
        });
    }
    let cfg = ctx.config;
    if ctx.indexes.coarse.is_empty() || ctx.indexes.fine.is_empty() || cfg.top_n == 0 {
        return Ok(Vec::new());
    }
    let enc = ctx.encoder;
    let (n_r, n_c) = enc.window();
    let feats = SheetFeatures::new(target, enc.featurizer());

    // S1
    let q_c = enc.embed_sheet(&feats.sheet_window(n_r, n_c));
    let own = target_workbook.filter(|_| cfg.exclude_own_workbook);
    let sheets = ctx
        .indexes
        .coarse
        .search(&q_c, cfg.k.max(1), None, &|k| own.is_none_or(|w| k.workbook != w))?;
    let mut sheet_dist: HashMap<&SheetRef, f64> = HashMap::new();
    let mut entries = Vec::new();
    for (i, dist) in sheets {
        if cfg.theta_sheet.is_some_and(|t| dist > t) {
            continue;
        }
        let key = &ctx.indexes.coarse.keys()[i];
        sheet_dist.insert(key, dist);
        entries.extend_from_slice(ctx.indexes.regions_of(key));
    }
    if entries.is_empty() {
        return Ok(Vec::new());
    }

    // S2
    let target_codes = FineCodes::new(&feats, enc);
    let q_f = target_codes.region(c_t);
    let ranked = ctx.indexes.fine.search(&q_f, entries.len(), Some(&entries), &|_| true)?;
    let limit = cfg.top_n * cfg.entries_per_slot.max(1);

    // S3
    let mut ref_codes: HashMap<SheetRef, FineCodes> = HashMap::new();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, region_dist) in ranked.into_iter().take(limit) {
        if region_dist > cfg.theta {
            break;
        }
        let key = &ctx.indexes.fine.keys()[i];
        let Ok(ast) = parse_formula(&key.formula) else { continue };
        let (template, ref_params) = extract_template(&ast);
        if template.holes().iter().any(|h| h.sheet.is_some()) {
            continue;
        }
        let sref = key.sheet_ref();
        let Some(ref_sheet) = ctx.library.sheet(&key.workbook, &key.sheet) else {
            continue;
        };
        let rc = ref_codes
            .entry(sref.clone())
            .or_insert_with(|| FineCodes::new(&SheetFeatures::new(ref_sheet, enc.featurizer()), enc));
        let mut sources = Vec::with_capacity(ref_params.len());
        let mut memo: HashMap<CellAddress, Option<ParamSource>> = HashMap::new();
        for &c_r in &ref_params.0 {
            let found = memo
                .entry(c_r)
                .or_insert_with(|| adapt_parameter(&target_codes, c_t, rc, key.cell, c_r, cfg.d, cfg.theta))
                .clone();
            match found {
                Some(s) => sources.push(s),
                None => break,
            }
        }
        if sources.len() != ref_params.len() {
            continue;
        }
        let mut params: Vec<CellAddress> = sources.iter().map(|s| s.target).collect();
        order_ranges(&mut params, &template.range_hole_pairs());
        let params = ParameterCells(params);
        let Ok(formula) = instantiate(&template, &params) else { continue };
        if !seen.insert(formula.clone()) {
            continue;
        }
        out.push(Prediction {
            formula,
            template: template.canonical.clone(),
            params: params.0,
            score: region_dist,
            provenance: Provenance {
                workbook_id: key.workbook.clone(),
                sheet: key.sheet.clone(),
                cell: key.cell,
                reference_formula: key.formula.clone(),
                sheet_distance: sheet_dist.get(&sref).copied().unwrap_or(f64::NAN),
                region_distance: region_dist,
                params: sources,
            },
        });
        if out.len() == cfg.top_n {
            break;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
