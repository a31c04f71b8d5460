//! On-disk layout of the pipeline's intermediate products.
//!
//! - pairs dir: `sheet_pairs.jsonl`, `region_pairs.jsonl`, `manifest.json`
//! - models dir: `coarse.json`, `fine.json`, `featurizer.json`, `training_log.json`
//! - index dir: `coarse.idx`, `fine.idx`, `manifest.json`, and `workbooks/`
//!   holding one canonical dump per indexed workbook (the parameter
//!   adaptation step reads reference sheets, not just their vectors)

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use formula_scout::grid::{export_workbook, load_corpus_dir, GridError, Workbook};
use formula_scout::index::{IndexError, Indexes};
use formula_scout::model::{Model, ModelError, ModelKind, TrainingLog};
use formula_scout::recommend::{IndexStats, Library, ModelEncoder, RecommendError};
use formula_scout::weaksup::{read_jsonl, write_jsonl, PairCounts, RegionPair, SheetPair, WeakSupError};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, FeaturizerConfig};

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("{path}: {source}")]
    Model { path: PathBuf, source: ModelError },
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Pairs(#[from] WeakSupError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Encoder(#[from] RecommendError),
    #[error("{path}: expected a {expected:?} model")]
    WrongKind { path: PathBuf, expected: ModelKind },
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> ArtifactError + '_ {
    move |source| ArtifactError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create_dir(dir: &Path) -> Result<(), ArtifactError> {
    std::fs::create_dir_all(dir).map_err(io(dir))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ArtifactError> {
    let f = File::create(path).map_err(io(path))?;
    serde_json::to_writer_pretty(BufWriter::new(f), value).map_err(|source| ArtifactError::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, ArtifactError> {
    let f = File::open(path).map_err(io(path))?;
    serde_json::from_reader(BufReader::new(f)).map_err(|source| ArtifactError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads a corpus directory of canonical dumps.
pub fn load_corpus(dir: &Path) -> Result<Vec<Workbook>, ArtifactError> {
    load_corpus_dir(dir).map_err(|e| match e {
        GridError::Io(source) => ArtifactError::Io {
            path: dir.to_path_buf(),
            source,
        },
        other => other.into(),
    })
}

/// File name for a workbook dump; ids are kept readable but path-safe.
pub fn dump_file_name(id: &str) -> String {
    let safe: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect();
    format!("{safe}.json")
}

pub fn save_workbooks<'a>(dir: &Path, workbooks: impl IntoIterator<Item = &'a Workbook>) -> Result<usize, ArtifactError> {
    create_dir(dir)?;
    let mut n = 0;
    for wb in workbooks {
        let path = dir.join(dump_file_name(&wb.id));
        std::fs::write(&path, export_workbook(wb)).map_err(io(&path))?;
        n += 1;
    }
    Ok(n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairManifest {
    /// Corpus the pair references resolve against.
    pub corpus: PathBuf,
    pub alpha: f64,
    pub sheet_counts: PairCounts,
    pub region_counts: PairCounts,
    pub sheet_pairs: usize,
    pub region_pairs: usize,
}

pub fn save_pairs(
    dir: &Path,
    sheet_pairs: &[SheetPair],
    region_pairs: &[RegionPair],
    manifest: &PairManifest,
) -> Result<(), ArtifactError> {
    create_dir(dir)?;
    let create = |name: &str| {
        let path = dir.join(name);
        File::create(&path).map(BufWriter::new).map_err(io(&path)).map(|f| (f, path))
    };
    let (f, path) = create("sheet_pairs.jsonl")?;
    write_jsonl(sheet_pairs, f).map_err(io(&path))?;
    let (f, path) = create("region_pairs.jsonl")?;
    write_jsonl(region_pairs, f).map_err(io(&path))?;
    write_json(&dir.join("manifest.json"), manifest)
}

pub fn load_pairs(dir: &Path) -> Result<(Vec<SheetPair>, Vec<RegionPair>, PairManifest), ArtifactError> {
    let open = |name: &str| {
        let path = dir.join(name);
        File::open(&path).map(BufReader::new).map_err(io(&path))
    };
    let sp = read_jsonl(open("sheet_pairs.jsonl")?)?;
    let rp = read_jsonl(open("region_pairs.jsonl")?)?;
    let manifest = read_json(&dir.join("manifest.json"))?;
    Ok((sp, rp, manifest))
}

/// Trained models plus the featurizer they were trained with.
#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub coarse: Model,
    pub fine: Model,
    pub featurizer: FeaturizerConfig,
}

impl ModelBundle {
    pub fn save(&self, dir: &Path, log: Option<&TrainingLog>) -> Result<(), ArtifactError> {
        create_dir(dir)?;
        for (name, m) in [("coarse.json", &self.coarse), ("fine.json", &self.fine)] {
            let path = dir.join(name);
            m.save_path(&path).map_err(|source| ArtifactError::Model { path, source })?;
        }
        write_json(&dir.join("featurizer.json"), &self.featurizer)?;
        if let Some(log) = log {
            write_json(&dir.join("training_log.json"), log)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, ArtifactError> {
        let load = |name: &str, kind: ModelKind| {
            let path = dir.join(name);
            let m = Model::load_path(&path, None).map_err(|source| ArtifactError::Model {
                path: path.clone(),
                source,
            })?;
            if m.kind != kind {
                return Err(ArtifactError::WrongKind { path, expected: kind });
            }
            Ok(m)
        };
        Ok(ModelBundle {
            coarse: load("coarse.json", ModelKind::Coarse)?,
            fine: load("fine.json", ModelKind::Fine)?,
            featurizer: read_json(&dir.join("featurizer.json"))?,
        })
    }

    pub fn encoder(self) -> Result<ModelEncoder, ArtifactError> {
        let fz = self.featurizer.build()?;
        Ok(ModelEncoder::new(self.coarse, self.fine, fz)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexManifest {
    pub workbooks: usize,
    pub stats: IndexStats,
}

pub fn save_index(dir: &Path, indexes: &Indexes, library: &Library, stats: &IndexStats) -> Result<(), ArtifactError> {
    indexes.save_dir(dir)?;
    let workbooks = save_workbooks(&dir.join("workbooks"), library.workbooks().map(|w| &**w))?;
    write_json(
        &dir.join("manifest.json"),
        &IndexManifest {
            workbooks,
            stats: stats.clone(),
        },
    )
}

pub fn load_index(dir: &Path) -> Result<(Indexes, Library), ArtifactError> {
    let indexes = Indexes::load_dir(dir)?;
    let library = Library::new(load_corpus(&dir.join("workbooks"))?);
    Ok((indexes, library))
}

#[cfg(test)]
mod tests {
    use super::*;
    use formula_scout::model::ModelConfig;
    use formula_scout::recommend::{index_corpus, Encoder};
    use formula_scout::synth::{synthetic_corpus, SynthConfig};

    fn tiny() -> ModelConfig {
        ModelConfig {
            n_r: 6,
            n_c: 4,
            conv_channels: vec![4],
            d_hidden: 8,
            d_reduce: 4,
            d_coarse: 8,
            d_fine_per_cell: 2,
            ..ModelConfig::desk()
        }
    }

    #[test]
    fn model_and_index_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny();
        let bundle = ModelBundle {
            coarse: Model::init(ModelKind::Coarse, &cfg, 1).unwrap(),
            fine: Model::init(ModelKind::Fine, &cfg, 2).unwrap(),
            featurizer: FeaturizerConfig::default(),
        };
        bundle.save(&dir.path().join("m"), None).unwrap();
        let back = ModelBundle::load(&dir.path().join("m")).unwrap();
        assert_eq!(back.coarse, bundle.coarse);
        let enc = back.encoder().unwrap();

        let corpus = synthetic_corpus(&SynthConfig {
            families: 2,
            variants: 2,
            ..SynthConfig::default()
        });
        let (idx, stats) = index_corpus(&corpus, &enc).unwrap();
        let lib = Library::new(corpus.clone());
        save_index(&dir.path().join("i"), &idx, &lib, &stats).unwrap();
        let (idx2, lib2) = load_index(&dir.path().join("i")).unwrap();
        assert_eq!(idx2.coarse, idx.coarse);
        assert_eq!(idx2.fine, idx.fine);
        assert_eq!(lib2.len(), corpus.len());
        assert_eq!(**lib2.get(&corpus[0].id).unwrap(), corpus[0]);
        assert_eq!(enc.coarse_dim(), 8);
    }

    #[test]
    fn wrong_kind_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny();
        let c = Model::init(ModelKind::Coarse, &cfg, 1).unwrap();
        let bundle = ModelBundle {
            coarse: c.clone(),
            fine: c,
            featurizer: FeaturizerConfig::default(),
        };
        bundle.save(dir.path(), None).unwrap();
        assert!(matches!(ModelBundle::load(dir.path()), Err(ArtifactError::WrongKind { .. })));
    }

    #[test]
    fn dump_names_are_path_safe() {
        assert_eq!(dump_file_name("f01-v0002"), "f01-v0002.json");
        assert_eq!(dump_file_name("../x y"), ".._x_y.json");
    }
}
