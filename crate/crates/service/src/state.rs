//! Shared service state: an immutable index snapshot replaced atomically.

use std::sync::{Arc, Mutex};

use arc_swap::ArcSwap;
use formula_scout::grid::{load_workbook, parse_a1, Workbook};
use formula_scout::index::Indexes;
use formula_scout::recommend::{
    index_workbook, predict, Encoder, Library, PredictContext, Prediction, RecommendError, RecommenderConfig,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("malformed request: {0}")]
    BadRequest(String),
    #[error("unknown workbook {0:?}")]
    UnknownWorkbook(String),
    #[error("workbook {workbook:?} has no sheet {sheet:?}")]
    UnknownSheet { workbook: String, sheet: String },
    #[error(transparent)]
    OutOfBounds(RecommendError),
    #[error("internal error: {0}")]
    Internal(String),
}

impl From<RecommendError> for ServiceError {
    fn from(e: RecommendError) -> Self {
        match e {
            RecommendError::OutOfBounds { .. } => ServiceError::OutOfBounds(e),
            other => ServiceError::Internal(other.to_string()),
        }
    }
}

/// Everything a prediction reads. Never mutated once published.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub indexes: Indexes,
    pub library: Library,
}

impl Snapshot {
    pub fn sheets(&self) -> usize {
        self.indexes.coarse.len()
    }

    pub fn formulas(&self) -> usize {
        self.indexes.fine.len()
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictRequest {
    #[serde(default)]
    pub workbook_id: Option<String>,
    /// Inline canonical dump; its `id` (if non-empty) is excluded from
    /// retrieval like a stored workbook's.
    #[serde(default)]
    pub workbook: Option<serde_json::Value>,
    pub sheet: String,
    pub cell: String,
    #[serde(default)]
    pub top_n: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictResponse {
    pub predictions: Vec<Prediction>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Added {
    pub id: String,
    /// False when an identical workbook was already indexed.
    pub created: bool,
}

pub struct ServiceState {
    snapshot: ArcSwap<Snapshot>,
    encoder: Arc<dyn Encoder>,
    config: RecommenderConfig,
    writer: Mutex<()>,
}

impl ServiceState {
    pub fn new(indexes: Indexes, library: Library, encoder: Arc<dyn Encoder>, config: RecommenderConfig) -> Self {
        ServiceState {
            snapshot: ArcSwap::from_pointee(Snapshot { indexes, library }),
            encoder,
            config,
            writer: Mutex::new(()),
        }
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.snapshot.load_full()
    }

    pub fn predict(&self, req: &PredictRequest) -> Result<PredictResponse, ServiceError> {
        let snap = self.snapshot();
        let (wb, own_id): (Arc<Workbook>, Option<String>) = match (&req.workbook_id, &req.workbook) {
            (Some(id), None) => {
                let wb = snap.library.get(id).cloned().ok_or_else(|| ServiceError::UnknownWorkbook(id.clone()))?;
                (wb, Some(id.clone()))
            }
            (None, Some(dump)) => {
                let bytes = serde_json::to_vec(dump).map_err(|e| ServiceError::BadRequest(e.to_string()))?;
                let wb = load_workbook(&bytes).map_err(|e| ServiceError::BadRequest(format!("workbook: {e}")))?;
                let own = Some(wb.id.clone()).filter(|id| !id.is_empty());
                (Arc::new(wb), own)
            }
            _ => {
                return Err(ServiceError::BadRequest(
                    "exactly one of workbook_id and workbook is required".into(),
                ))
            }
        };
        let sheet = wb.sheet(&req.sheet).ok_or_else(|| ServiceError::UnknownSheet {
            workbook: wb.id.clone(),
            sheet: req.sheet.clone(),
        })?;
        let cell = parse_a1(&req.cell).map_err(|e| ServiceError::BadRequest(format!("cell {:?}: {e}", req.cell)))?;
        let mut config = self.config.clone();
        if let Some(n) = req.top_n {
            config.top_n = n;
        }
        let ctx = PredictContext {
            indexes: &snap.indexes,
            library: &snap.library,
            encoder: self.encoder.as_ref(),
            config: &config,
        };
        let predictions = predict(&ctx, sheet, own_id.as_deref(), cell)?;
        Ok(PredictResponse { predictions })
    }

    /// Indexes `wb` under its content hash and publishes a new snapshot.
    /// Writers are serialized; readers keep whichever snapshot they loaded.
    pub fn add_workbook(&self, mut wb: Workbook) -> Result<Added, ServiceError> {
        let _guard = self.writer.lock().unwrap_or_else(|p| p.into_inner());
        let id = wb.content_hash();
        let current = self.snapshot();
        if current.library.get(&id).is_some() {
            return Ok(Added { id, created: false });
        }
        wb.id = id.clone();
        let mut next = Snapshot::clone(&current);
        let stats = index_workbook(&mut next.indexes, &wb, self.encoder.as_ref())?;
        next.library.insert(wb);
        self.snapshot.store(Arc::new(next));
        tracing::info!(%id, sheets = stats.sheets, formulas = stats.formulas, "workbook indexed");
        Ok(Added { id, created: true })
    }
}
