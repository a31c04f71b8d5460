//! In-memory workbook model: cells, styles, sheets and A1 addressing.
//!
//! The canonical JSON dump defined here is the system of record for
//! workbooks. Every other format (OOXML included) is converted into it.

use std::borrow::Cow;
use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest column index (XFD).
pub const MAX_COL: u32 = 16_384;
/// Largest row index.
pub const MAX_ROW: u32 = 1_048_576;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AddressError {
    #[error("empty cell address")]
    Empty,
    #[error("invalid character {ch:?} at position {pos} in cell address {input:?}")]
    InvalidChar { input: String, ch: char, pos: usize },
    #[error("cell address {0:?} has no column letters")]
    MissingColumn(String),
    #[error("cell address {0:?} has no row number")]
    MissingRow(String),
    #[error("cell address {0:?} is out of range")]
    OutOfRange(String),
}

#[derive(Debug, Error)]
pub enum GridError {
    #[error("invalid workbook dump at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("duplicate sheet name {0:?}")]
    DuplicateSheet(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl GridError {
    fn schema(path: impl Into<String>, message: impl fmt::Display) -> Self {
        GridError::Schema {
            path: path.into(),
            message: message.to_string(),
        }
    }
}

/// A 1-based (row, column) cell position. Column 1 is "A".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellAddress {
    pub row: u32,
    pub col: u32,
}

impl CellAddress {
    pub fn new(row: u32, col: u32) -> Self {
        debug_assert!(row >= 1 && col >= 1, "cell addresses are 1-based");
        CellAddress { row, col }
    }

    /// Address offset by a signed delta, or `None` if it would leave the grid.
    pub fn offset(self, d_row: i64, d_col: i64) -> Option<CellAddress> {
        let row = self.row as i64 + d_row;
        let col = self.col as i64 + d_col;
        if (1..=MAX_ROW as i64).contains(&row) && (1..=MAX_COL as i64).contains(&col) {
            Some(CellAddress::new(row as u32, col as u32))
        } else {
            None
        }
    }

    pub fn to_a1(self) -> String {
        let mut s = column_label(self.col);
        s.push_str(&self.row.to_string());
        s
    }
}

impl fmt::Display for CellAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_a1())
    }
}

impl FromStr for CellAddress {
    type Err = AddressError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_a1(s)
    }
}

impl Serialize for CellAddress {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_a1())
    }
}

impl<'de> Deserialize<'de> for CellAddress {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        parse_a1(&s).map_err(serde::de::Error::custom)
    }
}

/// Bijective base-26 column label: 1 -> "A", 26 -> "Z", 27 -> "AA".
pub fn column_label(mut col: u32) -> String {
    let mut buf = Vec::new();
    while col > 0 {
        let rem = (col - 1) % 26;
        buf.push(b'A' + rem as u8);
        col = (col - 1) / 26;
    }
    buf.reverse();
    String::from_utf8(buf).expect("ascii")
}

/// Parses an A1-style address such as `"D41"` (case-insensitive).
pub fn parse_a1(s: &str) -> Result<CellAddress, AddressError> {
    if s.is_empty() {
        return Err(AddressError::Empty);
    }
    let mut col: u64 = 0;
    let mut row: u64 = 0;
    let mut seen_digit = false;
    let mut n_letters = 0;
    for (pos, ch) in s.chars().enumerate() {
        match ch {
            'A'..='Z' | 'a'..='z' if !seen_digit => {
                n_letters += 1;
                col = col * 26 + (ch.to_ascii_uppercase() as u64 - 'A' as u64 + 1);
                if col > MAX_COL as u64 {
                    return Err(AddressError::OutOfRange(s.to_string()));
                }
            }
            '0'..='9' if n_letters > 0 => {
                if !seen_digit && ch == '0' {
                    return Err(AddressError::InvalidChar {
                        input: s.to_string(),
                        ch,
                        pos,
                    });
                }
                seen_digit = true;
                row = row * 10 + (ch as u64 - '0' as u64);
                if row > MAX_ROW as u64 {
                    return Err(AddressError::OutOfRange(s.to_string()));
                }
            }
            _ => {
                return Err(if n_letters == 0 && ch.is_ascii_digit() {
                    AddressError::MissingColumn(s.to_string())
                } else {
                    AddressError::InvalidChar {
                        input: s.to_string(),
                        ch,
                        pos,
                    }
                })
            }
        }
    }
    if !seen_digit {
        return Err(AddressError::MissingRow(s.to_string()));
    }
    Ok(CellAddress::new(row as u32, col as u32))
}

pub fn to_a1(addr: CellAddress) -> String {
    addr.to_a1()
}

pub type Rgb = [u8; 3];

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Style {
    #[serde(rename = "bg")]
    pub bg_color: Rgb,
    #[serde(rename = "fg")]
    pub font_color: Rgb,
    pub bold: bool,
    pub italic: bool,
    pub font_size: f64,
    pub col_width: f64,
    pub row_height: f64,
}

impl Style {
    /// The all-zero style carried by absent cells.
    pub const ZERO: Style = Style {
        bg_color: [0, 0, 0],
        font_color: [0, 0, 0],
        bold: false,
        italic: false,
        font_size: 0.0,
        col_width: 0.0,
        row_height: 0.0,
    };

    /// Plain black-on-white 11pt text in a default-sized cell.
    pub fn plain() -> Style {
        Style {
            bg_color: [255, 255, 255],
            font_color: [0, 0, 0],
            bold: false,
            italic: false,
            font_size: 11.0,
            col_width: 8.43,
            row_height: 15.0,
        }
    }

    fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("font_size", self.font_size),
            ("col_width", self.col_width),
            ("row_height", self.row_height),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueType {
    Empty,
    Numeric,
    Text,
    Date,
    Boolean,
}

impl ValueType {
    pub const ALL: [ValueType; 5] = [
        ValueType::Empty,
        ValueType::Numeric,
        ValueType::Text,
        ValueType::Date,
        ValueType::Boolean,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub address: CellAddress,
    pub value: String,
    pub value_type: ValueType,
    pub formula: Option<String>,
    pub style: Style,
}

impl Cell {
    pub fn empty(address: CellAddress) -> Cell {
        Cell {
            address,
            value: String::new(),
            value_type: ValueType::Empty,
            formula: None,
            style: Style::ZERO,
        }
    }

    pub fn new(address: CellAddress, value: impl Into<String>, value_type: ValueType) -> Cell {
        Cell {
            address,
            value: value.into(),
            value_type,
            formula: None,
            style: Style::plain(),
        }
    }

    pub fn with_formula(mut self, formula: impl Into<String>) -> Cell {
        self.formula = Some(formula.into());
        self
    }

    pub fn with_style(mut self, style: Style) -> Cell {
        self.style = style;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sheet {
    pub name: String,
    pub cells: BTreeMap<CellAddress, Cell>,
    pub n_rows: u32,
    pub n_cols: u32,
}

impl Sheet {
    pub fn new(name: impl Into<String>) -> Sheet {
        Sheet {
            name: name.into(),
            cells: BTreeMap::new(),
            n_rows: 0,
            n_cols: 0,
        }
    }

    /// Inserts a cell, growing the sheet bounds to cover it.
    pub fn insert(&mut self, cell: Cell) {
        self.n_rows = self.n_rows.max(cell.address.row);
        self.n_cols = self.n_cols.max(cell.address.col);
        self.cells.insert(cell.address, cell);
    }

    pub fn in_bounds(&self, addr: CellAddress) -> bool {
        addr.row <= self.n_rows && addr.col <= self.n_cols
    }

    pub fn get(&self, addr: CellAddress) -> Option<&Cell> {
        self.cells.get(&addr)
    }

    /// The cell at `addr`; absent addresses read as empty cells with zero style.
    pub fn cell(&self, addr: CellAddress) -> Cow<'_, Cell> {
        match self.cells.get(&addr) {
            Some(c) => Cow::Borrowed(c),
            None => Cow::Owned(Cell::empty(addr)),
        }
    }

    pub fn formula_cells(&self) -> impl Iterator<Item = (&CellAddress, &str)> {
        self.cells
            .iter()
            .filter_map(|(a, c)| c.formula.as_deref().map(|f| (a, f)))
    }

    pub fn n_cells(&self) -> u64 {
        self.n_rows as u64 * self.n_cols as u64
    }

    /// Removes whole rows and columns (1-based indices); the remaining grid closes up.
    pub fn without_rows_cols(&self, rows: &[u32], cols: &[u32]) -> Sheet {
        let rows: HashSet<u32> = rows.iter().copied().collect();
        let cols: HashSet<u32> = cols.iter().copied().collect();
        let remap = |idx: u32, removed: &HashSet<u32>| -> Option<u32> {
            if removed.contains(&idx) {
                None
            } else {
                Some(idx - removed.iter().filter(|&&r| r < idx).count() as u32)
            }
        };
        let mut out = Sheet {
            name: self.name.clone(),
            cells: BTreeMap::new(),
            n_rows: self.n_rows - rows.iter().filter(|&&r| r <= self.n_rows).count() as u32,
            n_cols: self.n_cols - cols.iter().filter(|&&c| c <= self.n_cols).count() as u32,
        };
        for (addr, cell) in &self.cells {
            if let (Some(r), Some(c)) = (remap(addr.row, &rows), remap(addr.col, &cols)) {
                let address = CellAddress::new(r, c);
                out.cells.insert(
                    address,
                    Cell {
                        address,
                        ..cell.clone()
                    },
                );
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Workbook {
    pub id: String,
    pub sheets: Vec<Sheet>,
    pub last_modified: i64,
}

impl Workbook {
    pub fn sheet(&self, name: &str) -> Option<&Sheet> {
        self.sheets.iter().find(|s| s.name == name)
    }

    pub fn sheet_names(&self) -> Vec<&str> {
        self.sheets.iter().map(|s| s.name.as_str()).collect()
    }

    /// Checks the structural invariants of every sheet and cell.
    pub fn validate(&self) -> Result<(), GridError> {
        let mut names = HashSet::new();
        for (si, sheet) in self.sheets.iter().enumerate() {
            if !names.insert(sheet.name.as_str()) {
                return Err(GridError::DuplicateSheet(sheet.name.clone()));
            }
            for (addr, cell) in &sheet.cells {
                let path = format!("sheets[{si}].cells[{addr}]");
                if *addr != cell.address {
                    return Err(GridError::schema(path, "cell address does not match its key"));
                }
                if !sheet.in_bounds(*addr) {
                    return Err(GridError::schema(
                        path,
                        format!("outside sheet bounds {}x{}", sheet.n_rows, sheet.n_cols),
                    ));
                }
                if cell.value_type == ValueType::Empty && !cell.value.is_empty() {
                    return Err(GridError::schema(path + ".value", "empty cell carries a value"));
                }
                if let Some(f) = &cell.formula {
                    if !f.starts_with('=') {
                        return Err(GridError::schema(path + ".formula", "formula must start with '='"));
                    }
                }
                cell.style
                    .validate()
                    .map_err(|m| GridError::schema(path + ".style", m))?;
            }
        }
        Ok(())
    }

    /// Content hash over the canonical dump, usable as a stable id.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut clone = self.clone();
        clone.id = String::new();
        let digest = Sha256::digest(export_workbook(&clone));
        hex::encode(&digest[..12])
    }
}

// Canonical dump wire types. Field order here is the serialized order.

#[derive(Serialize, Deserialize)]
struct DumpWorkbook {
    id: String,
    #[serde(default)]
    last_modified: i64,
    sheets: Vec<DumpSheet>,
}

#[derive(Serialize, Deserialize)]
struct DumpSheet {
    name: String,
    n_rows: u32,
    n_cols: u32,
    cells: Vec<DumpCell>,
}

#[derive(Serialize, Deserialize)]
struct DumpCell {
    addr: String,
    value: String,
    #[serde(rename = "type")]
    value_type: ValueType,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    formula: Option<String>,
    style: Style,
}

/// Parses a canonical workbook dump (UTF-8 JSON). Unknown fields are ignored.
pub fn load_workbook(bytes: &[u8]) -> Result<Workbook, GridError> {
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    let dump: DumpWorkbook = serde_path_to_error::deserialize(de)
        .map_err(|e| GridError::schema(e.path().to_string(), e.inner()))?;

    let mut sheets = Vec::with_capacity(dump.sheets.len());
    for (si, ds) in dump.sheets.into_iter().enumerate() {
        let mut cells = BTreeMap::new();
        for (ci, dc) in ds.cells.into_iter().enumerate() {
            let address = parse_a1(&dc.addr)
                .map_err(|e| GridError::schema(format!("sheets[{si}].cells[{ci}].addr"), e))?;
            let cell = Cell {
                address,
                value: dc.value,
                value_type: dc.value_type,
                formula: dc.formula,
                style: dc.style,
            };
            if cells.insert(address, cell).is_some() {
                return Err(GridError::schema(
                    format!("sheets[{si}].cells[{ci}].addr"),
                    format!("duplicate cell {address}"),
                ));
            }
        }
        sheets.push(Sheet {
            name: ds.name,
            cells,
            n_rows: ds.n_rows,
            n_cols: ds.n_cols,
        });
    }
    let wb = Workbook {
        id: dump.id,
        sheets,
        last_modified: dump.last_modified,
    };
    wb.validate()?;
    Ok(wb)
}

/// Serializes to the canonical dump: fixed field order, cells in row-major order.
pub fn export_workbook(wb: &Workbook) -> Vec<u8> {
    let dump = DumpWorkbook {
        id: wb.id.clone(),
        last_modified: wb.last_modified,
        sheets: wb
            .sheets
            .iter()
            .map(|s| DumpSheet {
                name: s.name.clone(),
                n_rows: s.n_rows,
                n_cols: s.n_cols,
                cells: s
                    .cells
                    .values()
                    .map(|c| DumpCell {
                        addr: c.address.to_a1(),
                        value: c.value.clone(),
                        value_type: c.value_type,
                        formula: c.formula.clone(),
                        style: c.style,
                    })
                    .collect(),
            })
            .collect(),
    };
    let mut out = serde_json::to_vec_pretty(&dump).expect("dump serialization cannot fail");
    out.push(b'\n');
    out
}

/// Loads every `*.json` dump under `dir`, sorted by file name.
pub fn load_corpus_dir(dir: &std::path::Path) -> Result<Vec<Workbook>, GridError> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let bytes = std::fs::read(p)?;
            load_workbook(&bytes).map_err(|e| match e {
                GridError::Schema { path, message } => GridError::Schema {
                    path: format!("{}: {path}", p.display()),
                    message,
                },
                other => other,
            })
        })
        .collect()
}
