//! Dual-branch embedding models.
//!
//! Both branches start with a per-cell MLP (`d_cell -> d_hidden -> d_reduce`,
//! ReLU between) shared across window positions. The coarse branch then runs
//! a stack of same-padded convolutions, each followed by ReLU and a 2x2
//! ceil-mode max-pool, and one fully-connected layer. The fine branch maps
//! every cell through one shared linear layer and concatenates the codes.
//! Every output is L2-normalized.

mod net;
mod train;

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::WindowTensor;

pub use net::{CellTable, ForwardCache};
pub use train::{
    gradient_check, mine_semihard, sq_dist, train_models, triplet_loss, EpisodeLog, GradCheckReport,
    TrainingLog, TripletSet,
};

/// Divides by the L2 norm; a zero vector stays zero. Shared by every
/// embedding path so that equal inputs give bitwise-equal outputs.
pub fn l2_normalize(z: Vec<f64>) -> Vec<f64> {
    net::normalize(z).0
}

pub const MODEL_FORMAT: &str = "formula-scout-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("tensor shape {got:?} does not match model window {expected:?}")]
    Shape {
        expected: (usize, usize, usize),
        got: (usize, usize, usize),
    },
    #[error("embedding dimensions differ: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("no {0} training triplets")]
    NoTriplets(&'static str),
    #[error("model file: {0}")]
    File(String),
    #[error("model file was trained under a different config")]
    ConfigMismatch,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Coarse,
    Fine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub n_r: usize,
    pub n_c: usize,
    pub d_cell: usize,
    pub d_hidden: usize,
    pub d_reduce: usize,
    pub conv_channels: Vec<usize>,
    pub kernel: usize,
    pub d_coarse: usize,
    pub d_fine_per_cell: usize,
    pub margin: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Triplets scored per episode before semi-hard selection.
    pub candidates: usize,
    pub episodes: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::full()
    }
}

impl ModelConfig {
    /// 100x10 window, 896-dim coarse output, 16 dims per cell.
    pub fn full() -> Self {
        ModelConfig {
            n_r: 100,
            n_c: 10,
            d_cell: 82,
            d_hidden: 64,
            d_reduce: 32,
            conv_channels: vec![32, 64],
            kernel: 3,
            d_coarse: 896,
            d_fine_per_cell: 16,
            margin: 0.2,
            learning_rate: 0.05,
            batch_size: 32,
            candidates: 64,
            episodes: 2000,
            seed: 0,
        }
    }

    /// 20x6 window sized for single-core training.
    pub fn desk() -> Self {
        ModelConfig {
            n_r: 20,
            n_c: 6,
            d_reduce: 16,
            conv_channels: vec![16, 32],
            d_coarse: 64,
            d_fine_per_cell: 8,
            batch_size: 16,
            candidates: 48,
            episodes: 400,
            ..ModelConfig::full()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let dims = [
            ("n_r", self.n_r),
            ("n_c", self.n_c),
            ("d_cell", self.d_cell),
            ("d_hidden", self.d_hidden),
            ("d_reduce", self.d_reduce),
            ("kernel", self.kernel),
            ("d_coarse", self.d_coarse),
            ("d_fine_per_cell", self.d_fine_per_cell),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(ModelError::Config(format!("{name} must be at least 1")));
            }
        }
        if self.conv_channels.contains(&0) {
            return Err(ModelError::Config("conv channels must be at least 1".into()));
        }
        if self.kernel.is_multiple_of(2) {
            return Err(ModelError::Config("kernel size must be odd".into()));
        }
        if !(self.margin.is_finite() && self.margin > 0.0) {
            return Err(ModelError::Config("margin must be positive".into()));
        }
        Ok(())
    }

    /// True when models built from both configs share every weight shape.
    pub fn same_architecture(&self, other: &ModelConfig) -> bool {
        self.n_r == other.n_r
            && self.n_c == other.n_c
            && self.d_cell == other.d_cell
            && self.d_hidden == other.d_hidden
            && self.d_reduce == other.d_reduce
            && self.conv_channels == other.conv_channels
            && self.kernel == other.kernel
            && self.d_coarse == other.d_coarse
            && self.d_fine_per_cell == other.d_fine_per_cell
    }

    pub fn d_fine(&self) -> usize {
        self.n_r * self.n_c * self.d_fine_per_cell
    }

    /// Spatial size after each conv + pool stage.
    pub fn pooled_dims(&self) -> Vec<(usize, usize)> {
        let (mut h, mut w) = (self.n_r, self.n_c);
        self.conv_channels
            .iter()
            .map(|_| {
                h = h.div_ceil(2);
                w = w.div_ceil(2);
                (h, w)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl ParamSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Parameter tensors in storage order. Weight matrices are `[out, in]`;
/// conv kernels are `[k, k, out, in]`.
pub(crate) fn layout(kind: ModelKind, cfg: &ModelConfig) -> Vec<ParamSpec> {
    let mut specs: Vec<(String, Vec<usize>)> = vec![
        ("reduce.w1".into(), vec![cfg.d_hidden, cfg.d_cell]),
        ("reduce.b1".into(), vec![cfg.d_hidden]),
        ("reduce.w2".into(), vec![cfg.d_reduce, cfg.d_hidden]),
        ("reduce.b2".into(), vec![cfg.d_reduce]),
    ];
    match kind {
        ModelKind::Coarse => {
            let mut c_in = cfg.d_reduce;
            for (i, &c_out) in cfg.conv_channels.iter().enumerate() {
                specs.push((format!("conv{i}.w"), vec![cfg.kernel, cfg.kernel, c_out, c_in]));
                specs.push((format!("conv{i}.b"), vec![c_out]));
                c_in = c_out;
            }
            let (h, w) = cfg.pooled_dims().last().copied().unwrap_or((cfg.n_r, cfg.n_c));
            specs.push(("fc.w".into(), vec![cfg.d_coarse, h * w * c_in]));
            specs.push(("fc.b".into(), vec![cfg.d_coarse]));
        }
        ModelKind::Fine => {
            specs.push(("fine.w".into(), vec![cfg.d_fine_per_cell, cfg.d_reduce]));
            specs.push(("fine.b".into(), vec![cfg.d_fine_per_cell]));
        }
    }
    let mut offset = 0;
    specs
        .into_iter()
        .map(|(name, shape)| {
            let s = ParamSpec { name, shape, offset };
            offset += s.len();
            s
        })
        .collect()
}

/// Fan-in and fan-out of a weight tensor.
fn fans(shape: &[usize]) -> (usize, usize) {
    match shape {
        [out, inp] => (*inp, *out),
        [k1, k2, out, inp] => (k1 * k2 * inp, k1 * k2 * out),
        _ => (1, 1),
    }
}

/// One trained (or freshly initialized) embedding network.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub kind: ModelKind,
    pub config: ModelConfig,
    pub params: Vec<f64>,
    specs: Vec<ParamSpec>,
}

impl Model {
    /// Glorot-uniform weights, zero biases.
    pub fn init(kind: ModelKind, config: &ModelConfig, seed: u64) -> Result<Model, ModelError> {
        config.validate()?;
        let specs = layout(kind, config);
        let total = specs.last().map(|s| s.offset + s.len()).unwrap_or(0);
        let mut params = vec![0.0; total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ kind_salt(kind));
        for s in &specs {
            if s.shape.len() < 2 {
                continue;
            }
            let (fi, fo) = fans(&s.shape);
            let a = (6.0 / (fi + fo) as f64).sqrt();
            for p in &mut params[s.range()] {
                *p = rng.random_range(-a..a);
            }
        }
        Ok(Model {
            kind,
            config: config.clone(),
            params,
            specs,
        })
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn dim(&self) -> usize {
        match self.kind {
            ModelKind::Coarse => self.config.d_coarse,
            ModelKind::Fine => self.config.d_fine(),
        }
    }

    pub fn window(&self) -> (usize, usize) {
        (self.config.n_r, self.config.n_c)
    }

    fn check_shape(&self, t: &WindowTensor) -> Result<(), ModelError> {
        let expected = (self.config.n_r, self.config.n_c, self.config.d_cell);
        if t.shape() != expected {
            return Err(ModelError::Shape {
                expected,
                got: t.shape(),
            });
        }
        Ok(())
    }

    /// Unit-norm embedding of one window.
    pub fn embed(&self, t: &WindowTensor) -> Result<Vec<f64>, ModelError> {
        self.check_shape(t)?;
        let mut table = CellTable::new(self.config.d_cell);
        let ids = table.intern_tensor(t);
        let (mut out, _) = self.forward(&table, &[&ids]);
        Ok(out.pop().expect("one window in, one embedding out"))
    }

    /// Embeddings of many windows sharing one cell table.
    pub fn embed_many(&self, table: &CellTable, windows: &[&[u32]]) -> Vec<Vec<f64>> {
        self.forward(table, windows).0
    }

    /// Fine-branch code of one cell before concatenation.
    pub fn fine_cell_code(&self, cell: &[f64]) -> Vec<f64> {
        assert_eq!(self.kind, ModelKind::Fine, "cell codes exist only for the fine branch");
        net::Net::new(self).cell_code(cell)
    }

    pub fn save(&self, w: impl Write) -> Result<(), ModelError> {
        let params = self
            .specs
            .iter()
            .map(|s| {
                (
                    s.name.clone(),
                    TensorRecord {
                        shape: s.shape.clone(),
                        data: self.params[s.range()].to_vec(),
                    },
                )
            })
            .collect();
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            kind: self.kind,
            config: self.config.clone(),
            params,
        };
        serde_json::to_writer(w, &file)?;
        Ok(())
    }

    /// Reads a model; `expected` (if given) must share its architecture.
    pub fn load(r: impl Read, expected: Option<&ModelConfig>) -> Result<Model, ModelError> {
        let file: ModelFile = serde_json::from_reader(std::io::BufReader::new(r))?;
        if file.format != MODEL_FORMAT {
            return Err(ModelError::File(format!("unknown format {:?}", file.format)));
        }
        if file.version != MODEL_VERSION {
            return Err(ModelError::File(format!("unsupported version {}", file.version)));
        }
        if let Some(e) = expected {
            if !e.same_architecture(&file.config) {
                return Err(ModelError::ConfigMismatch);
            }
        }
        file.config.validate()?;
        let specs = layout(file.kind, &file.config);
        let total = specs.last().map(|s| s.offset + s.len()).unwrap_or(0);
        let mut params = vec![0.0; total];
        let mut records = file.params;
        for s in &specs {
            let rec = records
                .remove(&s.name)
                .ok_or_else(|| ModelError::File(format!("missing tensor {}", s.name)))?;
            if rec.shape != s.shape || rec.data.len() != s.len() {
                return Err(ModelError::ConfigMismatch);
            }
            if rec.data.iter().any(|x| !x.is_finite()) {
                return Err(ModelError::File(format!("non-finite value in {}", s.name)));
            }
            params[s.range()].copy_from_slice(&rec.data);
        }
        if let Some(extra) = records.keys().next() {
            return Err(ModelError::File(format!("unexpected tensor {extra}")));
        }
        Ok(Model {
            kind: file.kind,
            config: file.config,
            params,
            specs,
        })
    }

    pub fn save_path(&self, path: &std::path::Path) -> Result<(), ModelError> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.save(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load_path(path: &std::path::Path, expected: Option<&ModelConfig>) -> Result<Model, ModelError> {
        Model::load(std::fs::File::open(path)?, expected)
    }
}

fn kind_salt(kind: ModelKind) -> u64 {
    match kind {
        ModelKind::Coarse => 0x636f_6172,
        ModelKind::Fine => 0x6669_6e65,
    }
}

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    kind: ModelKind,
    config: ModelConfig,
    params: BTreeMap<String, TensorRecord>,
}

#[cfg(test)]
mod tests;
