//! Cell featurization and view windows.
//!
//! Each cell becomes a fixed-length vector laid out as
//! `[semantic | type one-hot | pattern hash | style]`. A view window stacks
//! the vectors of an `n_r x n_c` block of cells in row-major order.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

use crate::grid::{Cell, CellAddress, Sheet, ValueType};

pub const TYPE_DIM: usize = 5;
pub const STYLE_DIM: usize = 11;
pub const DEFAULT_SEM_DIM: usize = 50;
pub const DEFAULT_PATTERN_DIM: usize = 16;
const PATTERN_MAX_LEN: usize = 32;
const PATTERN_SEED: u64 = 0x7061_7474;

#[derive(Debug, Error)]
pub enum EmbedderError {
    #[error("io error reading word vectors: {0}")]
    Io(#[from] std::io::Error),
    #[error("word-vector file line {line}: {message}")]
    Format { line: usize, message: String },
}

/// Maps cell text to a fixed-dimension vector.
pub trait TextEmbedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Vec<f64>;
}

/// FNV-1a over `bytes`, seeded by folding the seed into the offset basis.
pub fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed.wrapping_mul(0x0000_0100_0000_01b3);
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Signed feature hashing of character trigrams, L2-normalized.
#[derive(Debug, Clone)]
pub struct HashedTrigramEmbedder {
    dim: usize,
    seed: u64,
}

impl HashedTrigramEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        HashedTrigramEmbedder { dim, seed }
    }

    fn embed_chars(&self, chars: &[char], out: &mut [f64]) {
        if chars.is_empty() {
            return;
        }
        let mut padded = Vec::with_capacity(chars.len() + 2);
        padded.push('#');
        padded.extend_from_slice(chars);
        padded.push('#');
        let mut buf = [0u8; 12];
        for w in padded.windows(3) {
            let mut n = 0;
            for c in w {
                n += c.encode_utf8(&mut buf[n..]).len();
            }
            let h = fnv1a(self.seed, &buf[..n]);
            let bucket = (h % self.dim as u64) as usize;
            out[bucket] += if h >> 63 == 0 { 1.0 } else { -1.0 };
        }
        l2_normalize_in_place(out);
    }
}

impl TextEmbedder for HashedTrigramEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        let chars: Vec<char> = text.to_lowercase().chars().collect();
        self.embed_chars(&chars, &mut out);
        out
    }
}

/// Mean of pre-trained token vectors; unknown tokens are skipped.
#[derive(Debug, Clone)]
pub struct WordVectorEmbedder {
    dim: usize,
    table: HashMap<String, Vec<f64>>,
}

impl WordVectorEmbedder {
    /// Reads `token v1 ... vd` lines; `d` is taken from the first line.
    pub fn from_reader(reader: impl std::io::BufRead) -> Result<Self, EmbedderError> {
        let mut dim = None;
        let mut table = HashMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let mut parts = line.split_whitespace();
            let Some(token) = parts.next() else { continue };
            let values = parts
                .map(|p| p.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| EmbedderError::Format {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            let d = *dim.get_or_insert(values.len());
            if values.len() != d || d == 0 {
                return Err(EmbedderError::Format {
                    line: i + 1,
                    message: format!("expected {d} values, found {}", values.len()),
                });
            }
            table.insert(token.to_lowercase(), values);
        }
        let dim = dim.ok_or(EmbedderError::Format {
            line: 0,
            message: "empty word-vector file".into(),
        })?;
        Ok(WordVectorEmbedder { dim, table })
    }

    pub fn from_file(path: &Path) -> Result<Self, EmbedderError> {
        let f = std::fs::File::open(path)?;
        Self::from_reader(std::io::BufReader::new(f))
    }
}

impl TextEmbedder for WordVectorEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        let mut hits = 0usize;
        let lower = text.to_lowercase();
        for tok in lower.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
            if let Some(v) = self.table.get(tok) {
                out.iter_mut().zip(v).for_each(|(o, x)| *o += x);
                hits += 1;
            }
        }
        if hits > 0 {
            out.iter_mut().for_each(|o| *o /= hits as f64);
        }
        out
    }
}

pub fn l2_normalize_in_place(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// Character-class pattern of a value: digit `D`, ASCII letter `L`,
/// whitespace `S`, anything else verbatim; at most 32 characters.
pub fn syntactic_pattern(value: &str) -> String {
    value
        .chars()
        .take(PATTERN_MAX_LEN)
        .map(|c| {
            if c.is_ascii_digit() {
                'D'
            } else if c.is_ascii_alphabetic() {
                'L'
            } else if c.is_whitespace() {
                'S'
            } else {
                c
            }
        })
        .collect()
}

/// Turns cells into feature vectors of dimension [`Featurizer::dim`].
#[derive(Clone)]
pub struct Featurizer {
    embedder: Arc<dyn TextEmbedder>,
    pattern: HashedTrigramEmbedder,
    d_pat: usize,
}

impl std::fmt::Debug for Featurizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Featurizer")
            .field("d_sem", &self.embedder.dim())
            .field("d_pat", &self.d_pat)
            .finish()
    }
}

impl Featurizer {
    pub fn new(embedder: Arc<dyn TextEmbedder>, d_pat: usize) -> Self {
        Featurizer {
            embedder,
            pattern: HashedTrigramEmbedder::new(d_pat, PATTERN_SEED),
            d_pat,
        }
    }

    /// Hashed-trigram semantics (`d_sem` 50) and a 16-bucket pattern hash.
    pub fn default_hashed() -> Self {
        Self::new(Arc::new(HashedTrigramEmbedder::new(DEFAULT_SEM_DIM, 0)), DEFAULT_PATTERN_DIM)
    }

    pub fn d_sem(&self) -> usize {
        self.embedder.dim()
    }

    pub fn d_pat(&self) -> usize {
        self.d_pat
    }

    pub fn dim(&self) -> usize {
        self.d_sem() + TYPE_DIM + self.d_pat + STYLE_DIM
    }

    /// Offsets of the four slices: semantic, type, pattern, style.
    pub fn layout(&self) -> [std::ops::Range<usize>; 4] {
        let s = self.d_sem();
        let t = s + TYPE_DIM;
        let p = t + self.d_pat;
        [0..s, s..t, t..p, p..p + STYLE_DIM]
    }

    pub fn featurize_cell(&self, cell: &Cell) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        let [sem, ty, pat, sty] = self.layout();
        if cell.value_type != ValueType::Empty {
            out[sem].copy_from_slice(&self.embedder.embed(&cell.value));
            let p: Vec<char> = syntactic_pattern(&cell.value).chars().collect();
            self.pattern.embed_chars(&p, &mut out[pat]);
        }
        out[ty.start + cell.value_type.index()] = 1.0;
        let s = &cell.style;
        let style = [
            s.bg_color[0] as f64 / 255.0,
            s.bg_color[1] as f64 / 255.0,
            s.bg_color[2] as f64 / 255.0,
            s.font_color[0] as f64 / 255.0,
            s.font_color[1] as f64 / 255.0,
            s.font_color[2] as f64 / 255.0,
            s.bold as u8 as f64,
            s.italic as u8 as f64,
            s.font_size / 72.0,
            s.col_width / 255.0,
            s.row_height / 255.0,
        ];
        out[sty].copy_from_slice(&style);
        out
    }

    /// Features of an absent or out-of-grid cell.
    pub fn empty_features(&self) -> Vec<f64> {
        self.featurize_cell(&Cell::empty(CellAddress::new(1, 1)))
    }

    pub fn window_tensor(&self, w: &ViewWindow<'_>) -> WindowTensor {
        let dim = self.dim();
        let empty = self.empty_features();
        let mut data = Vec::with_capacity(w.n_r * w.n_c * dim);
        for i in 0..w.n_r {
            for j in 0..w.n_c {
                match w.sheet_address(i, j).and_then(|a| w.sheet.get(a)) {
                    Some(cell) => data.extend(self.featurize_cell(cell)),
                    None => data.extend_from_slice(&empty),
                }
            }
        }
        WindowTensor {
            n_r: w.n_r,
            n_c: w.n_c,
            dim,
            data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowMode {
    SheetTopLeft,
    RegionCentered,
}

/// An `n_r x n_c` slice of a sheet. Window cells that fall outside the
/// sheet read as empty; nothing is clamped.
#[derive(Debug, Clone, Copy)]
pub struct ViewWindow<'a> {
    pub sheet: &'a Sheet,
    pub anchor: CellAddress,
    pub n_r: usize,
    pub n_c: usize,
    pub mode: WindowMode,
}

impl<'a> ViewWindow<'a> {
    /// Sheet coordinates of window cell (0, 0).
    pub fn origin(&self) -> (i64, i64) {
        match self.mode {
            WindowMode::SheetTopLeft => (self.anchor.row as i64, self.anchor.col as i64),
            WindowMode::RegionCentered => region_origin(self.anchor, self.n_r, self.n_c),
        }
    }

    /// Sheet address of window cell `(i, j)` (0-based), if it lies in the sheet.
    pub fn sheet_address(&self, i: usize, j: usize) -> Option<CellAddress> {
        let (r0, c0) = self.origin();
        let (r, c) = (r0 + i as i64, c0 + j as i64);
        if r >= 1 && c >= 1 && r <= self.sheet.n_rows as i64 && c <= self.sheet.n_cols as i64 {
            Some(CellAddress::new(r as u32, c as u32))
        } else {
            None
        }
    }
}

/// Top-left sheet coordinate of a window whose centre cell
/// `(ceil(n_r/2), ceil(n_c/2))` (1-based) sits on `anchor`.
pub fn region_origin(anchor: CellAddress, n_r: usize, n_c: usize) -> (i64, i64) {
    (
        anchor.row as i64 - n_r.div_ceil(2) as i64 + 1,
        anchor.col as i64 - n_c.div_ceil(2) as i64 + 1,
    )
}

pub fn sheet_window(sheet: &Sheet, n_r: usize, n_c: usize) -> ViewWindow<'_> {
    assert!(n_r >= 1 && n_c >= 1, "window must be at least 1x1");
    ViewWindow {
        sheet,
        anchor: CellAddress::new(1, 1),
        n_r,
        n_c,
        mode: WindowMode::SheetTopLeft,
    }
}

pub fn region_window(sheet: &Sheet, c: CellAddress, n_r: usize, n_c: usize) -> ViewWindow<'_> {
    assert!(n_r >= 1 && n_c >= 1, "window must be at least 1x1");
    ViewWindow {
        sheet,
        anchor: c,
        n_r,
        n_c,
        mode: WindowMode::RegionCentered,
    }
}

/// Row-major `n_r x n_c x dim` feature block.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowTensor {
    pub n_r: usize,
    pub n_c: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl WindowTensor {
    pub fn cell(&self, i: usize, j: usize) -> &[f64] {
        let off = (i * self.n_c + j) * self.dim;
        &self.data[off..off + self.dim]
    }

    pub fn cell_mut(&mut self, i: usize, j: usize) -> &mut [f64] {
        let off = (i * self.n_c + j) * self.dim;
        &mut self.data[off..off + self.dim]
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.n_r, self.n_c, self.dim)
    }
}

/// Features of every populated cell of one sheet, computed once so that
/// many windows over the same sheet can be gathered cheaply.
#[derive(Debug, Clone)]
pub struct SheetFeatures {
    pub n_rows: u32,
    pub n_cols: u32,
    dim: usize,
    cells: HashMap<CellAddress, usize>,
    arena: Vec<f64>,
    empty: Vec<f64>,
}

impl SheetFeatures {
    pub fn new(sheet: &Sheet, featurizer: &Featurizer) -> Self {
        let dim = featurizer.dim();
        let mut cells = HashMap::with_capacity(sheet.cells.len());
        let mut arena = Vec::with_capacity(sheet.cells.len() * dim);
        for (addr, cell) in &sheet.cells {
            cells.insert(*addr, arena.len());
            arena.extend(featurizer.featurize_cell(cell));
        }
        SheetFeatures {
            n_rows: sheet.n_rows,
            n_cols: sheet.n_cols,
            dim,
            cells,
            arena,
            empty: featurizer.empty_features(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Features at sheet coordinate `(row, col)`; out-of-grid reads as empty.
    pub fn at(&self, row: i64, col: i64) -> &[f64] {
        if row < 1 || col < 1 || row > self.n_rows as i64 || col > self.n_cols as i64 {
            return &self.empty;
        }
        match self.cells.get(&CellAddress::new(row as u32, col as u32)) {
            Some(&off) => &self.arena[off..off + self.dim],
            None => &self.empty,
        }
    }

    /// Populated cells and their features, in no particular order.
    pub fn populated(&self) -> impl Iterator<Item = (CellAddress, &[f64])> + '_ {
        self.cells.iter().map(|(a, &off)| (*a, &self.arena[off..off + self.dim]))
    }

    pub fn is_populated(&self, row: i64, col: i64) -> bool {
        row >= 1
            && col >= 1
            && self
                .cells
                .contains_key(&CellAddress::new(row as u32, col as u32))
    }

    pub fn empty(&self) -> &[f64] {
        &self.empty
    }

    pub fn window_at(&self, origin: (i64, i64), n_r: usize, n_c: usize) -> WindowTensor {
        let mut data = Vec::with_capacity(n_r * n_c * self.dim);
        for i in 0..n_r as i64 {
            for j in 0..n_c as i64 {
                data.extend_from_slice(self.at(origin.0 + i, origin.1 + j));
            }
        }
        WindowTensor {
            n_r,
            n_c,
            dim: self.dim,
            data,
        }
    }

    pub fn sheet_window(&self, n_r: usize, n_c: usize) -> WindowTensor {
        self.window_at((1, 1), n_r, n_c)
    }

    pub fn region_window(&self, c: CellAddress, n_r: usize, n_c: usize) -> WindowTensor {
        self.window_at(region_origin(c, n_r, n_c), n_r, n_c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{parse_a1, Style};

    fn addr(s: &str) -> CellAddress {
        parse_a1(s).unwrap()
    }

    #[test]
    fn patterns() {
        assert_eq!(syntactic_pattern("2020-01-01"), "DDDD-DD-DD");
        assert_eq!(syntactic_pattern(""), "");
        assert_eq!(syntactic_pattern("abc123"), "LLLDDD");
        assert_eq!(syntactic_pattern("a b"), "LSL");
        assert_eq!(syntactic_pattern(&"9".repeat(40)).len(), 32);
    }

    #[test]
    fn dimension_defaults() {
        let f = Featurizer::default_hashed();
        assert_eq!(f.dim(), 82);
    }

    #[test]
    fn empty_cell_features() {
        let f = Featurizer::default_hashed();
        let v = f.empty_features();
        let [_, ty, _, _] = f.layout();
        for (i, x) in v.iter().enumerate() {
            if i == ty.start {
                assert_eq!(*x, 1.0);
            } else {
                assert_eq!(*x, 0.0, "index {i}");
            }
        }
    }

    /// Independent trigram bucket computation for the pattern slice.
    fn pattern_oracle(pattern: &str, d: usize) -> Vec<f64> {
        let padded: Vec<char> = format!("#{pattern}#").chars().collect();
        let mut v = vec![0.0; d];
        for i in 0..padded.len() - 2 {
            let tri: String = padded[i..i + 3].iter().collect();
            // FNV-1a, 64-bit, with the seed folded into the offset basis
            let mut h: u64 = 0xcbf29ce484222325 ^ PATTERN_SEED.wrapping_mul(0x100000001b3);
            for b in tri.bytes() {
                h = (h ^ b as u64).wrapping_mul(0x100000001b3);
            }
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            v[(h % d as u64) as usize] += sign;
        }
        let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter().map(|x| x / n).collect()
    }

    #[test]
    fn date_cell_pattern_slice() {
        let f = Featurizer::default_hashed();
        let cell = Cell::new(addr("A1"), "2020-01-01", ValueType::Date);
        let v = f.featurize_cell(&cell);
        let [_, ty, pat, _] = f.layout();
        assert_eq!(&v[pat], pattern_oracle("DDDD-DD-DD", 16).as_slice());
        assert_eq!(v[ty.start + ValueType::Date.index()], 1.0);
    }

    #[test]
    fn style_slice_scaling() {
        let f = Featurizer::default_hashed();
        let style = Style {
            bold: true,
            font_size: 12.0,
            ..Style::plain()
        };
        let v = f.featurize_cell(&Cell::new(addr("B2"), "x", ValueType::Text).with_style(style));
        let [_, _, _, sty] = f.layout();
        let s = &v[sty];
        assert_eq!(s[6], 1.0);
        assert_eq!(s[7], 0.0);
        assert!((s[8] - 12.0 / 72.0).abs() < 1e-15);
        assert_eq!(&s[0..3], &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn hashed_embedder_is_unit_and_deterministic() {
        let e = HashedTrigramEmbedder::new(50, 0);
        let a = e.embed("Revenue");
        let n: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-12);
        assert_eq!(a, e.embed("revenue"));
        assert!(e.embed("").iter().all(|&x| x == 0.0));
    }

    #[test]
    fn word_vectors_average_known_tokens() {
        let src = "usa 1 0 0\ncanada 0 1 0\n";
        let e = WordVectorEmbedder::from_reader(src.as_bytes()).unwrap();
        assert_eq!(e.dim(), 3);
        assert_eq!(e.embed("USA, Canada"), vec![0.5, 0.5, 0.0]);
        assert_eq!(e.embed("mexico"), vec![0.0, 0.0, 0.0]);
        assert!(WordVectorEmbedder::from_reader("a 1 2\nb 1\n".as_bytes()).is_err());
    }

    #[test]
    fn region_window_centering() {
        let mut s = Sheet::new("s");
        s.insert(Cell::new(addr("D41"), "x", ValueType::Text));
        s.n_rows = 200;
        s.n_cols = 20;
        let w = region_window(&s, addr("D41"), 100, 10);
        assert_eq!(w.origin(), (41 - 49, 4 - 4));
        // centre cell (50, 5) 1-based
        assert_eq!(w.sheet_address(49, 4), Some(addr("D41")));
        // last window row is 41 + 50
        assert_eq!(w.sheet_address(99, 9), Some(CellAddress::new(91, 9)));
        assert_eq!(w.sheet_address(0, 0), None);
    }

    #[test]
    fn small_sheet_window_is_mostly_empty() {
        let f = Featurizer::default_hashed();
        let mut s = Sheet::new("s");
        for r in 1..=5 {
            for c in 1..=3 {
                s.insert(Cell::new(CellAddress::new(r, c), "v", ValueType::Text));
            }
        }
        let t = f.window_tensor(&sheet_window(&s, 100, 10));
        assert_eq!(t.shape(), (100, 10, 82));
        let empty = f.empty_features();
        let n_empty = (0..100)
            .flat_map(|i| (0..10).map(move |j| (i, j)))
            .filter(|&(i, j)| t.cell(i, j) == empty.as_slice())
            .count();
        assert_eq!(n_empty as f64 / 1000.0, 0.985);
    }

    #[test]
    fn corner_region_has_empty_top_left() {
        let f = Featurizer::default_hashed();
        let mut s = Sheet::new("s");
        s.insert(Cell::new(addr("A1"), "v", ValueType::Text));
        let t = f.window_tensor(&region_window(&s, addr("A1"), 6, 4));
        let empty = f.empty_features();
        for i in 0..2 {
            for j in 0..1 {
                assert_eq!(t.cell(i, j), empty.as_slice());
            }
        }
        assert_ne!(t.cell(2, 1), empty.as_slice());
    }

    #[test]
    fn all_empty_sheet_has_only_empty_plane() {
        let f = Featurizer::default_hashed();
        let mut s = Sheet::new("s");
        s.n_rows = 3;
        s.n_cols = 3;
        let t = f.window_tensor(&sheet_window(&s, 4, 4));
        let [_, ty, _, _] = f.layout();
        for (k, x) in t.data.iter().enumerate() {
            let feat = k % t.dim;
            assert_eq!(*x, if feat == ty.start { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn cached_and_direct_windows_agree() {
        let f = Featurizer::default_hashed();
        let mut s = Sheet::new("s");
        for r in 1..=9 {
            s.insert(Cell::new(CellAddress::new(r, 2), format!("{}", r * 7), ValueType::Numeric));
        }
        let cache = SheetFeatures::new(&s, &f);
        for a in ["B1", "B5", "A9"] {
            let direct = f.window_tensor(&region_window(&s, addr(a), 5, 3));
            assert_eq!(direct, cache.region_window(addr(a), 5, 3));
        }
        assert_eq!(f.window_tensor(&sheet_window(&s, 4, 4)), cache.sheet_window(4, 4));
    }

    #[test]
    fn shifted_window_translates_content() {
        let f = Featurizer::default_hashed();
        let mut s = Sheet::new("s");
        s.insert(Cell::new(addr("C10"), "mark", ValueType::Text));
        s.n_rows = 30;
        s.n_cols = 8;
        let a = f.window_tensor(&region_window(&s, addr("C10"), 7, 5));
        let b = f.window_tensor(&region_window(&s, addr("C11"), 7, 5));
        for i in 0..6 {
            for j in 0..5 {
                assert_eq!(a.cell(i + 1, j), b.cell(i, j));
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn translation_consistency(r in 1u32..40, c in 1u32..12, dr in -3i64..=3, dc in -3i64..=3,
                                       marks in proptest::collection::vec((1u32..40, 1u32..12), 1..8)) {
                let f = Featurizer::default_hashed();
                let mut s = Sheet::new("s");
                s.n_rows = 40;
                s.n_cols = 12;
                for (i, (mr, mc)) in marks.iter().enumerate() {
                    s.insert(Cell::new(CellAddress::new(*mr, *mc), format!("m{i}"), ValueType::Text));
                }
                let (n_r, n_c) = (9, 5);
                let base = CellAddress::new(r, c);
                let Some(moved) = base.offset(dr, dc) else { return Ok(()) };
                let t0 = f.window_tensor(&region_window(&s, base, n_r, n_c));
                let t1 = f.window_tensor(&region_window(&s, moved, n_r, n_c));
                prop_assert_eq!(t0.shape(), t1.shape());
                for i in 0..n_r as i64 {
                    for j in 0..n_c as i64 {
                        let (i2, j2) = (i - dr, j - dc);
                        if (0..n_r as i64).contains(&i2) && (0..n_c as i64).contains(&j2) {
                            prop_assert_eq!(t0.cell(i as usize, j as usize), t1.cell(i2 as usize, j2 as usize));
                        }
                    }
                }
            }
        }
    }
}
