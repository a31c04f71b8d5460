//! Builds triplet sets from weakly-labelled pairs and trains both models.

use std::collections::HashMap;
use std::rc::Rc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{Featurizer, SheetFeatures};
use crate::grid::{CellAddress, Workbook};
use crate::model::{train_models, Model, ModelConfig, ModelError, TrainingLog, TripletSet};
use crate::weaksup::{
    augment_pairs, generate_region_pairs, generate_sheet_pairs, AugmentConfig, Augmentation, Label, PairCounts, RegionPair,
    RegionRef, SheetLookup, SheetNameStats, SheetPair, SheetRef, Side, WeakSupError,
};

/// Negatives combined with each positive when forming triplets.
pub const MAX_NEGATIVES_PER_POSITIVE: usize = 8;

#[derive(Debug, Error)]
pub enum TrainingError {
    #[error(transparent)]
    Pairs(#[from] WeakSupError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("featurizer produces {got}-dim cells but the model expects {expected}")]
    CellDim { expected: usize, got: usize },
}

#[derive(Clone, PartialEq, Eq, Hash)]
struct WindowKey {
    sheet: SheetRef,
    augment: Option<(Vec<u32>, Vec<u32>)>,
    cell: Option<CellAddress>,
}

struct Builder<'a> {
    lookup: SheetLookup<'a>,
    featurizer: &'a Featurizer,
    cfg: &'a ModelConfig,
    features: HashMap<SheetRef, Rc<SheetFeatures>>,
    windows: HashMap<WindowKey, u32>,
    set: TripletSet,
}

impl<'a> Builder<'a> {
    fn new(corpus: &'a [Workbook], featurizer: &'a Featurizer, cfg: &'a ModelConfig) -> Self {
        Builder {
            lookup: SheetLookup::new(corpus),
            featurizer,
            cfg,
            features: HashMap::new(),
            windows: HashMap::new(),
            set: TripletSet::new(featurizer.dim()),
        }
    }

    fn window(
        &mut self,
        sheet: &SheetRef,
        augment: Option<&Augmentation>,
        cell: Option<CellAddress>,
    ) -> Result<u32, TrainingError> {
        let augment = augment.filter(|a| !a.is_identity());
        let key = WindowKey {
            sheet: sheet.clone(),
            augment: augment.map(|a| (a.rows.clone(), a.cols.clone())),
            cell,
        };
        if let Some(&w) = self.windows.get(&key) {
            return Ok(w);
        }
        let base = self.lookup.get(sheet)?;
        let feats = match augment {
            Some(a) => Rc::new(SheetFeatures::new(&a.apply(base), self.featurizer)),
            None => self
                .features
                .entry(sheet.clone())
                .or_insert_with(|| Rc::new(SheetFeatures::new(base, self.featurizer)))
                .clone(),
        };
        let (n_r, n_c) = (self.cfg.n_r, self.cfg.n_c);
        let t = match cell {
            Some(c) => feats.region_window(c, n_r, n_c),
            None => feats.sheet_window(n_r, n_c),
        };
        let w = self.set.add_window(&t);
        self.windows.insert(key, w);
        Ok(w)
    }
}

fn side_aug(aug: &Option<Augmentation>, side: Side) -> Option<&Augmentation> {
    aug.as_ref().filter(|a| a.side == side)
}

/// Coarse triplets from sheet pairs. Each positive `(a, b)` is combined with
/// up to [`MAX_NEGATIVES_PER_POSITIVE`] negatives anchored at `a`.
pub fn sheet_triplets(
    corpus: &[Workbook],
    pairs: &[SheetPair],
    featurizer: &Featurizer,
    cfg: &ModelConfig,
) -> Result<TripletSet, TrainingError> {
    let mut negs: HashMap<&SheetRef, Vec<&SheetRef>> = HashMap::new();
    for p in pairs.iter().filter(|p| p.label == Label::Negative) {
        negs.entry(&p.a).or_default().push(&p.b);
    }
    let mut b = Builder::new(corpus, featurizer, cfg);
    for p in pairs.iter().filter(|p| p.label == Label::Positive) {
        let Some(ns) = negs.get(&p.a) else { continue };
        let a = b.window(&p.a, side_aug(&p.augment, Side::A), None)?;
        let pw = b.window(&p.b, side_aug(&p.augment, Side::B), None)?;
        for n in ns.iter().take(MAX_NEGATIVES_PER_POSITIVE) {
            let nw = b.window(n, None, None)?;
            b.set.triplets.push([a, pw, nw]);
        }
    }
    Ok(b.set)
}

/// Fine triplets from region pairs, combined as for sheets.
pub fn region_triplets(
    corpus: &[Workbook],
    pairs: &[RegionPair],
    featurizer: &Featurizer,
    cfg: &ModelConfig,
) -> Result<TripletSet, TrainingError> {
    let mut negs: HashMap<&RegionRef, Vec<&RegionRef>> = HashMap::new();
    for p in pairs.iter().filter(|p| p.label == Label::Negative) {
        negs.entry(&p.a).or_default().push(&p.b);
    }
    let mut b = Builder::new(corpus, featurizer, cfg);
    for p in pairs.iter().filter(|p| p.label == Label::Positive) {
        let Some(ns) = negs.get(&p.a) else { continue };
        let a = b.window(&p.a.sheet_ref(), side_aug(&p.augment, Side::A), Some(p.a.cell))?;
        let pw = b.window(&p.b.sheet_ref(), side_aug(&p.augment, Side::B), Some(p.b.cell))?;
        for n in ns.iter().take(MAX_NEGATIVES_PER_POSITIVE) {
            let nw = b.window(&n.sheet_ref(), None, Some(n.cell))?;
            b.set.triplets.push([a, pw, nw]);
        }
    }
    Ok(b.set)
}

/// Trains the coarse and fine models on weakly-labelled pairs.
pub fn train(
    corpus: &[Workbook],
    sheet_pairs: &[SheetPair],
    region_pairs: &[RegionPair],
    featurizer: &Featurizer,
    cfg: &ModelConfig,
) -> Result<(Model, Model, TrainingLog), TrainingError> {
    if featurizer.dim() != cfg.d_cell {
        return Err(TrainingError::CellDim {
            expected: cfg.d_cell,
            got: featurizer.dim(),
        });
    }
    let coarse = sheet_triplets(corpus, sheet_pairs, featurizer, cfg)?;
    let fine = region_triplets(corpus, region_pairs, featurizer, cfg)?;
    tracing::info!(
        coarse_triplets = coarse.triplets.len(),
        coarse_windows = coarse.windows.len(),
        fine_triplets = fine.triplets.len(),
        fine_windows = fine.windows.len(),
        "training sets built"
    );
    Ok(train_models(&coarse, &fine, cfg)?)
}

/// Weak-supervision settings used by [`train_on_corpus`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PairConfig {
    /// Significance level of the similar-file test.
    pub alpha: f64,
    pub seed: u64,
    pub augment: AugmentConfig,
}

impl Default for PairConfig {
    fn default() -> Self {
        PairConfig {
            alpha: 0.05,
            seed: 1,
            augment: AugmentConfig::default(),
        }
    }
}

#[derive(Debug)]
pub struct CorpusTraining {
    pub coarse: Model,
    pub fine: Model,
    pub log: TrainingLog,
    pub sheet_counts: PairCounts,
    pub region_counts: PairCounts,
    /// Pair totals after augmentation.
    pub sheet_pairs: usize,
    pub region_pairs: usize,
}

/// Generates and augments weak pairs from `corpus`, then trains both models.
pub fn train_on_corpus(
    corpus: &[Workbook],
    featurizer: &Featurizer,
    cfg: &ModelConfig,
    pairs: &PairConfig,
) -> Result<CorpusTraining, TrainingError> {
    let mut rng = ChaCha8Rng::seed_from_u64(pairs.seed);
    let stats = SheetNameStats::from_corpus(corpus);
    let (mut sp, sheet_counts) = generate_sheet_pairs(corpus, &stats, pairs.alpha, &mut rng)?;
    let (mut rp, region_counts) = generate_region_pairs(&sp, corpus)?;
    augment_pairs(&mut sp, &mut rp, corpus, (cfg.n_r, cfg.n_c), &pairs.augment, &mut rng)?;
    tracing::info!(sheet_pairs = sp.len(), region_pairs = rp.len(), "weak pairs ready");
    let (coarse, fine, log) = train(corpus, &sp, &rp, featurizer, cfg)?;
    Ok(CorpusTraining {
        coarse,
        fine,
        log,
        sheet_counts,
        region_counts,
        sheet_pairs: sp.len(),
        region_pairs: rp.len(),
    })
}
