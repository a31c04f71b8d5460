//! Exact nearest-neighbour search over unit vectors.
//!
//! Vectors are stored as `f32` in one flat block; queries are rounded to
//! `f32` too so that a stored vector is at distance exactly 0 from itself.
//! Distances are squared L2, accumulated in `f64`.

use std::collections::HashMap;
use std::hash::Hash;
use std::io::{Read, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::CellAddress;
use crate::weaksup::SheetRef;

pub const INDEX_MAGIC: &[u8; 8] = b"FSIDX\0\0\x01";
pub const INDEX_VERSION: u32 = 1;
const HEADER_LEN: usize = 40;
const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("vector has dimension {got}, index expects {expected}")]
    Dim { expected: usize, got: usize },
    #[error("vector norm {0} is not 1")]
    Norm(f64),
    #[error("k must be at least 1")]
    ZeroK,
    #[error("index file: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Region key: the sheet, the formula cell and its stored formula text.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RegionKey {
    pub workbook: String,
    pub sheet: String,
    pub cell: CellAddress,
    pub formula: String,
}

impl RegionKey {
    pub fn sheet_ref(&self) -> SheetRef {
        SheetRef {
            workbook: self.workbook.clone(),
            sheet: self.sheet.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct VectorIndex<K> {
    dim: usize,
    keys: Vec<K>,
    data: Vec<f32>,
    position: HashMap<K, usize>,
}

impl<K: PartialEq> PartialEq for VectorIndex<K> {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.keys == other.keys && self.data == other.data
    }
}

fn sq_dist_f32(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

impl<K: Clone + Eq + Hash> VectorIndex<K> {
    pub fn new(dim: usize) -> Self {
        VectorIndex {
            dim,
            keys: Vec::new(),
            data: Vec::new(),
            position: HashMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> &[K] {
        &self.keys
    }

    pub fn vector(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn position(&self, key: &K) -> Option<usize> {
        self.position.get(key).copied()
    }

    /// Appends an entry; re-adding a key replaces its vector in place.
    pub fn add(&mut self, key: K, vector: &[f64]) -> Result<(), IndexError> {
        if vector.len() != self.dim {
            return Err(IndexError::Dim {
                expected: self.dim,
                got: vector.len(),
            });
        }
        let n = vector.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (n - 1.0).abs() > NORM_TOLERANCE {
            return Err(IndexError::Norm(n));
        }
        let v = vector.iter().map(|&x| x as f32);
        match self.position.get(&key) {
            Some(&i) => {
                self.data[i * self.dim..(i + 1) * self.dim]
                    .iter_mut()
                    .zip(v)
                    .for_each(|(d, x)| *d = x);
            }
            None => {
                self.position.insert(key.clone(), self.keys.len());
                self.keys.push(key);
                self.data.extend(v);
            }
        }
        Ok(())
    }

    fn query32(&self, query: &[f64]) -> Result<Vec<f32>, IndexError> {
        if query.len() != self.dim {
            return Err(IndexError::Dim {
                expected: self.dim,
                got: query.len(),
            });
        }
        Ok(query.iter().map(|&x| x as f32).collect())
    }

    /// Distance from `query` to entry `i`.
    pub fn distance(&self, query: &[f64], i: usize) -> Result<f64, IndexError> {
        Ok(sq_dist_f32(&self.query32(query)?, self.vector(i)))
    }

    /// `k` nearest entries among `candidates` (all entries when `None`),
    /// ascending by distance, ties in insertion order.
    pub fn search(
        &self,
        query: &[f64],
        k: usize,
        candidates: Option<&[usize]>,
        filter: &dyn Fn(&K) -> bool,
    ) -> Result<Vec<(usize, f64)>, IndexError> {
        if k == 0 {
            return Err(IndexError::ZeroK);
        }
        let q = self.query32(query)?;
        let mut scored: Vec<(f64, usize)> = match candidates {
            Some(ids) => ids
                .iter()
                .filter(|&&i| filter(&self.keys[i]))
                .map(|&i| (sq_dist_f32(&q, self.vector(i)), i))
                .collect(),
            None => (0..self.len())
                .filter(|&i| filter(&self.keys[i]))
                .map(|i| (sq_dist_f32(&q, self.vector(i)), i))
                .collect(),
        };
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if scored.len() > k {
            scored.select_nth_unstable_by(k - 1, cmp);
            scored.truncate(k);
        }
        scored.sort_by(cmp);
        Ok(scored.into_iter().map(|(d, i)| (i, d)).collect())
    }

    pub fn topk(&self, query: &[f64], k: usize) -> Result<Vec<(&K, f64)>, IndexError> {
        Ok(self
            .search(query, k, None, &|_| true)?
            .into_iter()
            .map(|(i, d)| (&self.keys[i], d))
            .collect())
    }

    /// `topk` restricted to distances `<= theta`.
    pub fn topk_threshold(&self, query: &[f64], k: usize, theta: f64) -> Result<Vec<(&K, f64)>, IndexError> {
        let mut out = self.topk(query, k)?;
        out.retain(|(_, d)| *d <= theta);
        Ok(out)
    }
}

impl<K: Clone + Eq + Hash + Serialize + DeserializeOwned> VectorIndex<K> {
    /// Header (magic, version, dim, count, key-block length), then the
    /// `count x dim` little-endian `f32` block, then the keys as JSON.
    pub fn write_to(&self, mut w: impl Write) -> Result<(), IndexError> {
        let keys = serde_json::to_vec(&self.keys)?;
        let mut header = Vec::with_capacity(HEADER_LEN);
        header.extend_from_slice(INDEX_MAGIC);
        header.extend_from_slice(&INDEX_VERSION.to_le_bytes());
        header.extend_from_slice(&(self.dim as u32).to_le_bytes());
        header.extend_from_slice(&(self.len() as u64).to_le_bytes());
        header.extend_from_slice(&(keys.len() as u64).to_le_bytes());
        header.resize(HEADER_LEN, 0);
        w.write_all(&header)?;
        let mut block = Vec::with_capacity(self.data.len() * 4);
        for x in &self.data {
            block.extend_from_slice(&x.to_le_bytes());
        }
        w.write_all(&block)?;
        w.write_all(&keys)?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, IndexError> {
        let mut header = [0u8; HEADER_LEN];
        r.read_exact(&mut header)?;
        if &header[..8] != INDEX_MAGIC {
            return Err(IndexError::Format("bad magic".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(header[o..o + 4].try_into().expect("4 bytes"));
        let u64_at = |o: usize| u64::from_le_bytes(header[o..o + 8].try_into().expect("8 bytes"));
        if u32_at(8) != INDEX_VERSION {
            return Err(IndexError::Format(format!("unsupported version {}", u32_at(8))));
        }
        let dim = u32_at(12) as usize;
        let count = u64_at(16) as usize;
        let keys_len = u64_at(24) as usize;
        let mut block = vec![0u8; count * dim * 4];
        r.read_exact(&mut block)?;
        let mut key_bytes = vec![0u8; keys_len];
        r.read_exact(&mut key_bytes)?;
        let keys: Vec<K> = serde_json::from_slice(&key_bytes)?;
        if keys.len() != count {
            return Err(IndexError::Format("key count does not match vector count".into()));
        }
        let data = block
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        let position = keys.iter().enumerate().map(|(i, k)| (k.clone(), i)).collect();
        Ok(VectorIndex {
            dim,
            keys,
            data,
            position,
        })
    }
}

/// Coarse (per-sheet) and fine (per-formula-cell) indexes.
#[derive(Debug, Clone)]
pub struct Indexes {
    pub coarse: VectorIndex<SheetRef>,
    pub fine: VectorIndex<RegionKey>,
    by_sheet: HashMap<SheetRef, Vec<usize>>,
}

impl Indexes {
    pub fn new(coarse_dim: usize, fine_dim: usize) -> Self {
        Indexes {
            coarse: VectorIndex::new(coarse_dim),
            fine: VectorIndex::new(fine_dim),
            by_sheet: HashMap::new(),
        }
    }

    pub fn from_parts(coarse: VectorIndex<SheetRef>, fine: VectorIndex<RegionKey>) -> Self {
        let mut by_sheet: HashMap<SheetRef, Vec<usize>> = HashMap::new();
        for (i, k) in fine.keys().iter().enumerate() {
            by_sheet.entry(k.sheet_ref()).or_default().push(i);
        }
        Indexes { coarse, fine, by_sheet }
    }

    pub fn add_sheet(&mut self, key: SheetRef, vector: &[f64]) -> Result<(), IndexError> {
        self.coarse.add(key, vector)
    }

    pub fn add_region(&mut self, key: RegionKey, vector: &[f64]) -> Result<(), IndexError> {
        let fresh = self.fine.position(&key).is_none();
        let sheet = key.sheet_ref();
        self.fine.add(key, vector)?;
        if fresh {
            self.by_sheet.entry(sheet).or_default().push(self.fine.len() - 1);
        }
        Ok(())
    }

    /// Fine entries on one sheet, in insertion order.
    pub fn regions_of(&self, sheet: &SheetRef) -> &[usize] {
        self.by_sheet.get(sheet).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn save_dir(&self, dir: &std::path::Path) -> Result<(), IndexError> {
        std::fs::create_dir_all(dir)?;
        let write = |name: &str, f: &dyn Fn(std::io::BufWriter<std::fs::File>) -> Result<(), IndexError>| {
            f(std::io::BufWriter::new(std::fs::File::create(dir.join(name))?))
        };
        write("coarse.idx", &|w| self.coarse.write_to(w))?;
        write("fine.idx", &|w| self.fine.write_to(w))?;
        Ok(())
    }

    pub fn load_dir(dir: &std::path::Path) -> Result<Self, IndexError> {
        let open = |name: &str| -> Result<_, IndexError> {
            Ok(std::io::BufReader::new(std::fs::File::open(dir.join(name))?))
        };
        let coarse = VectorIndex::read_from(open("coarse.idx")?)?;
        let fine = VectorIndex::read_from(open("fine.idx")?)?;
        Ok(Indexes::from_parts(coarse, fine))
    }
}
