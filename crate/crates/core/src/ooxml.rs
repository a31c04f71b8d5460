//! Best-effort import of `.xlsx` archives into the grid model.
//!
//! Reads sheet order, cell values, stored formula text, and the style
//! subset used by featurization. Anything else is ignored. Cells that fail
//! to convert are logged and skipped; only an unreadable archive or a
//! missing workbook part fails the import.

use std::collections::HashMap;
use std::io::{Cursor, Read};

use chrono::{DateTime, Duration, NaiveDate};
use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use thiserror::Error;
use zip::ZipArchive;

use crate::formula::{parse_formula, shift_relative};
use crate::grid::{parse_a1, Cell, CellAddress, Rgb, Sheet, Style, ValueType, Workbook};

#[derive(Debug, Error)]
pub enum OoxmlError {
    #[error("not a readable zip archive: {0}")]
    Archive(#[from] zip::result::ZipError),
    #[error("missing archive part {0}")]
    MissingPart(String),
    #[error("malformed xml in {part}: {message}")]
    Xml { part: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Theme colour slots in the order spreadsheet files index them (light 1
/// first), taken from the default Office theme.
const THEME: [Rgb; 12] = [
    [0xFF, 0xFF, 0xFF],
    [0x00, 0x00, 0x00],
    [0xE7, 0xE6, 0xE6],
    [0x44, 0x54, 0x6A],
    [0x44, 0x72, 0xC4],
    [0xED, 0x7D, 0x31],
    [0xA5, 0xA5, 0xA5],
    [0xFF, 0xC0, 0x00],
    [0x5B, 0x9B, 0xD5],
    [0x70, 0xAD, 0x47],
    [0x05, 0x63, 0xC1],
    [0x95, 0x4F, 0x72],
];

/// Legacy indexed palette; 64 and 65 are the system foreground and
/// background.
const INDEXED: [u32; 66] = [
    0x000000, 0xFFFFFF, 0xFF0000, 0x00FF00, 0x0000FF, 0xFFFF00, 0xFF00FF, 0x00FFFF, 0x000000, 0xFFFFFF, 0xFF0000,
    0x00FF00, 0x0000FF, 0xFFFF00, 0xFF00FF, 0x00FFFF, 0x800000, 0x008000, 0x000080, 0x808000, 0x800080, 0x008080,
    0xC0C0C0, 0x808080, 0x9999FF, 0x993366, 0xFFFFCC, 0xCCFFFF, 0x660066, 0xFF8080, 0x0066CC, 0xCCCCFF, 0x000080,
    0xFF00FF, 0xFFFF00, 0x00FFFF, 0x800080, 0x800000, 0x008080, 0x0000FF, 0x00CCFF, 0xCCFFFF, 0xCCFFCC, 0xFFFF99,
    0x99CCFF, 0xFF99CC, 0xCC99FF, 0xFFCC99, 0x3366FF, 0x33CCCC, 0x99CC00, 0xFFCC00, 0xFF9900, 0xFF6600, 0x666699,
    0x969696, 0x003366, 0x339966, 0x003300, 0x333300, 0x993300, 0x993366, 0x333399, 0x333333, 0x000000, 0xFFFFFF,
];

const DEFAULT_COL_WIDTH: f64 = 8.43;
const DEFAULT_ROW_HEIGHT: f64 = 15.0;

/// Resolves a `<color>` element; unresolvable colours read as black.
fn color(e: &BytesStart) -> Option<Rgb> {
    if let Some(v) = attr(e, b"rgb") {
        let hex = v.trim_start_matches('#');
        let hex = if hex.len() == 8 { &hex[2..] } else { hex };
        let n = u32::from_str_radix(hex, 16).ok()?;
        return Some(split_rgb(n));
    }
    if let Some(v) = attr(e, b"theme") {
        return Some(*THEME.get(v.parse::<usize>().ok()?).unwrap_or(&[0, 0, 0]));
    }
    if let Some(v) = attr(e, b"indexed") {
        return Some(split_rgb(*INDEXED.get(v.parse::<usize>().ok()?).unwrap_or(&0)));
    }
    attr(e, b"auto").map(|_| [0, 0, 0])
}

fn split_rgb(n: u32) -> Rgb {
    [(n >> 16) as u8, (n >> 8) as u8, n as u8]
}

fn attr(e: &BytesStart, name: &[u8]) -> Option<String> {
    e.attributes()
        .flatten()
        .find(|a| a.key.local_name().as_ref() == name)
        .and_then(|a| a.unescape_value().ok().map(|v| v.into_owned()))
}

fn xml_error(part: &str, e: impl std::fmt::Display) -> OoxmlError {
    OoxmlError::Xml {
        part: part.to_string(),
        message: e.to_string(),
    }
}

struct Archive {
    zip: ZipArchive<Cursor<Vec<u8>>>,
}

impl Archive {
    fn part(&mut self, name: &str) -> Result<Option<String>, OoxmlError> {
        let mut f = match self.zip.by_name(name.trim_start_matches('/')) {
            Ok(f) => f,
            Err(zip::result::ZipError::FileNotFound) => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let mut s = String::new();
        f.read_to_string(&mut s)?;
        Ok(Some(s))
    }

    fn required(&mut self, name: &str) -> Result<String, OoxmlError> {
        self.part(name)?.ok_or_else(|| OoxmlError::MissingPart(name.to_string()))
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Font {
    color: Option<Rgb>,
    bold: bool,
    italic: bool,
    size: f64,
}

#[derive(Debug, Clone, Copy)]
struct Xf {
    font: usize,
    fill: usize,
    num_fmt: u32,
}

#[derive(Debug, Default)]
struct Styles {
    fonts: Vec<Font>,
    fills: Vec<Option<Rgb>>,
    xfs: Vec<Xf>,
    date_formats: Vec<u32>,
}

impl Styles {
    fn is_date(&self, xf: usize) -> bool {
        self.xfs.get(xf).is_some_and(|x| {
            matches!(x.num_fmt, 14..=22 | 45..=47) || self.date_formats.contains(&x.num_fmt)
        })
    }

    fn style(&self, xf: usize, col_width: f64, row_height: f64) -> Style {
        let x = self.xfs.get(xf).copied().unwrap_or(Xf {
            font: 0,
            fill: 0,
            num_fmt: 0,
        });
        let font = self.fonts.get(x.font).copied().unwrap_or(Font {
            size: 11.0,
            ..Font::default()
        });
        Style {
            bg_color: self.fills.get(x.fill).copied().flatten().unwrap_or([255, 255, 255]),
            font_color: font.color.unwrap_or([0, 0, 0]),
            bold: font.bold,
            italic: font.italic,
            font_size: font.size,
            col_width,
            row_height,
        }
    }
}

/// A number format whose code has date or time tokens outside quotes and
/// brackets.
fn is_date_code(code: &str) -> bool {
    let mut quoted = false;
    let mut bracket = false;
    for ch in code.chars() {
        match ch {
            '"' => quoted = !quoted,
            '[' if !quoted => bracket = true,
            ']' if !quoted => bracket = false,
            'd' | 'm' | 'y' | 'h' | 's' | 'D' | 'M' | 'Y' | 'H' | 'S' if !quoted && !bracket => return true,
            _ => {}
        }
    }
    false
}

fn parse_styles(xml: &str) -> Result<Styles, OoxmlError> {
    let part = "xl/styles.xml";
    let mut r = Reader::from_str(xml);
    let mut st = Styles::default();
    let mut section = Vec::<Vec<u8>>::new();
    let mut font: Option<Font> = None;
    let mut fill: Option<Option<Rgb>> = None;
    let mut solid = false;
    loop {
        let ev = r.read_event().map_err(|e| xml_error(part, e))?;
        let (e, empty) = match &ev {
            Event::Start(e) => (e, false),
            Event::Empty(e) => (e, true),
            Event::End(e) => {
                let name = e.local_name().as_ref().to_vec();
                match name.as_slice() {
                    b"font" => st.fonts.extend(font.take()),
                    b"fill" => st.fills.extend(fill.take()),
                    _ => {}
                }
                section.pop();
                continue;
            }
            Event::Eof => break,
            _ => continue,
        };
        let name = e.local_name().as_ref().to_vec();
        let parent = section.last().map(|v| v.as_slice());
        let in_cell_xfs = section.iter().any(|s| s == b"cellXfs");
        match name.as_slice() {
            b"numFmt" => {
                let id = attr(e, b"numFmtId").and_then(|v| v.parse().ok());
                let code = attr(e, b"formatCode").unwrap_or_default();
                if let Some(id) = id.filter(|_| is_date_code(&code)) {
                    st.date_formats.push(id);
                }
            }
            b"font" => {
                let f = Font {
                    size: 11.0,
                    ..Font::default()
                };
                if empty {
                    st.fonts.push(f);
                } else {
                    font = Some(f);
                }
            }
            b"b" | b"i" | b"sz" | b"color" if font.is_some() && parent == Some(b"font") => {
                let f = font.as_mut().expect("checked above");
                let on = attr(e, b"val").is_none_or(|v| v != "0" && v != "false");
                match name.as_slice() {
                    b"b" => f.bold = on,
                    b"i" => f.italic = on,
                    b"sz" => f.size = attr(e, b"val").and_then(|v| v.parse().ok()).unwrap_or(11.0),
                    _ => f.color = color(e),
                }
            }
            b"fill" => {
                if empty {
                    st.fills.push(None);
                } else {
                    fill = Some(None);
                    solid = false;
                }
            }
            b"patternFill" => solid = attr(e, b"patternType").is_some_and(|t| t == "solid"),
            b"fgColor" if solid && fill.is_some() => fill = Some(color(e)),
            b"xf" if in_cell_xfs => st.xfs.push(Xf {
                font: attr(e, b"fontId").and_then(|v| v.parse().ok()).unwrap_or(0),
                fill: attr(e, b"fillId").and_then(|v| v.parse().ok()).unwrap_or(0),
                num_fmt: attr(e, b"numFmtId").and_then(|v| v.parse().ok()).unwrap_or(0),
            }),
            _ => {}
        }
        if !empty {
            section.push(name);
        }
    }
    Ok(st)
}

/// Concatenated text of every `<t>` under each `<si>`.
fn parse_shared_strings(xml: &str) -> Result<Vec<String>, OoxmlError> {
    let part = "xl/sharedStrings.xml";
    let mut r = Reader::from_str(xml);
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut in_t = false;
    let mut in_rph = false;
    loop {
        match r.read_event().map_err(|e| xml_error(part, e))? {
            Event::Start(e) => match e.local_name().as_ref() {
                b"si" => cur.clear(),
                b"t" => in_t = true,
                b"rPh" => in_rph = true,
                _ => {}
            },
            Event::Empty(e) if e.local_name().as_ref() == b"si" => out.push(String::new()),
            Event::Text(t) if in_t && !in_rph => cur.push_str(&t.unescape().map_err(|e| xml_error(part, e))?),
            Event::End(e) => match e.local_name().as_ref() {
                b"si" => out.push(std::mem::take(&mut cur)),
                b"t" => in_t = false,
                b"rPh" => in_rph = false,
                _ => {}
            },
            Event::Eof => break,
            _ => {}
        }
    }
    Ok(out)
}

/// Sheet names and part paths, in workbook order.
fn parse_workbook(xml: &str, rels: &str) -> Result<Vec<(String, String)>, OoxmlError> {
    let mut targets = HashMap::new();
    let mut r = Reader::from_str(rels);
    loop {
        match r.read_event().map_err(|e| xml_error("xl/_rels/workbook.xml.rels", e))? {
            Event::Start(e) | Event::Empty(e) if e.local_name().as_ref() == b"Relationship" => {
                if let (Some(id), Some(t)) = (attr(&e, b"Id"), attr(&e, b"Target")) {
                    let path = match t.strip_prefix('/') {
                        Some(abs) => abs.to_string(),
                        None => format!("xl/{t}"),
                    };
                    targets.insert(id, path);
                }
            }
            Event::Eof => break,
            _ => {}
        }
    }
    let mut out = Vec::new();
    let mut r = Reader::from_str(xml);
    loop {
        match r.read_event().map_err(|e| xml_error("xl/workbook.xml", e))? {
            Event::Start(e) | Event::Empty(e) if e.local_name().as_ref() == b"sheet" => {
                let name = attr(&e, b"name").unwrap_or_default();
                match attr(&e, b"id").and_then(|id| targets.get(&id).cloned()) {
                    Some(path) => out.push((name, path)),
                    None => tracing::warn!(sheet = %name, "sheet has no part; skipped"),
                }
            }
            Event::Eof => break,
            _ => {}
        }
    }
    Ok(out)
}

fn serial_to_date(serial: f64) -> Option<String> {
    if !(0.0..2_958_466.0).contains(&serial) {
        return None;
    }
    let base = NaiveDate::from_ymd_opt(1899, 12, 30)?;
    Some((base + Duration::days(serial.floor() as i64)).format("%Y-%m-%d").to_string())
}

#[derive(Default)]
struct RawCell {
    addr: Option<CellAddress>,
    kind: Option<String>,
    xf: usize,
    value: Option<String>,
    formula: Option<String>,
    shared: Option<(String, bool)>,
}

struct SheetContext<'a> {
    strings: &'a [String],
    styles: &'a Styles,
    col_widths: Vec<(u32, u32, f64)>,
    default_width: f64,
    default_height: f64,
    row_heights: HashMap<u32, f64>,
    /// Master formula text and cell per shared-formula index.
    shared: HashMap<String, (String, CellAddress)>,
}

impl SheetContext<'_> {
    fn width(&self, col: u32) -> f64 {
        self.col_widths
            .iter()
            .find(|(lo, hi, _)| (*lo..=*hi).contains(&col))
            .map_or(self.default_width, |w| w.2)
    }

    fn finish(&mut self, raw: RawCell, sheet: &mut Sheet) -> Result<(), String> {
        let addr = raw.addr.ok_or("cell without a position")?;
        let formula = match (raw.formula, raw.shared) {
            (Some(f), Some((si, _))) if !f.is_empty() => {
                self.shared.insert(si, (f.clone(), addr));
                Some(f)
            }
            (_, Some((si, _))) => {
                let (master, at) = self.shared.get(&si).ok_or_else(|| format!("unknown shared formula {si}"))?;
                let ast = parse_formula(&format!("={master}")).map_err(|e| e.to_string())?;
                let moved = shift_relative(&ast, addr.row as i64 - at.row as i64, addr.col as i64 - at.col as i64)
                    .map_err(|e| e.to_string())?;
                Some(moved.pretty()[1..].to_string())
            }
            (f, None) => f.filter(|f| !f.is_empty()),
        };
        let v = raw.value.unwrap_or_default();
        let (value, value_type) = match raw.kind.as_deref() {
            Some("s") => {
                let i: usize = v.trim().parse().map_err(|_| format!("bad shared string index {v:?}"))?;
                (self.strings.get(i).cloned().ok_or(format!("shared string {i} missing"))?, ValueType::Text)
            }
            Some("b") => ((if v.trim() == "1" { "TRUE" } else { "FALSE" }).to_string(), ValueType::Boolean),
            Some("str" | "inlineStr" | "e") => (v, ValueType::Text),
            Some("d") => (v, ValueType::Date),
            _ if v.is_empty() => (v, ValueType::Empty),
            _ => {
                let n: f64 = v.trim().parse().map_err(|_| format!("bad number {v:?}"))?;
                match self.styles.is_date(raw.xf).then(|| serial_to_date(n)).flatten() {
                    Some(d) => (d, ValueType::Date),
                    None => (v, ValueType::Numeric),
                }
            }
        };
        let value_type = if value.is_empty() { ValueType::Empty } else { value_type };
        let style = self.styles.style(
            raw.xf,
            self.width(addr.col),
            self.row_heights.get(&addr.row).copied().unwrap_or(self.default_height),
        );
        let mut cell = Cell::new(addr, value, value_type).with_style(style);
        if let Some(f) = formula {
            cell = cell.with_formula(format!("={}", f.trim_start_matches('=')));
        }
        sheet.insert(cell);
        Ok(())
    }
}

fn parse_sheet(name: &str, part: &str, xml: &str, strings: &[String], styles: &Styles) -> Result<Sheet, OoxmlError> {
    let mut sheet = Sheet::new(name);
    let mut ctx = SheetContext {
        strings,
        styles,
        col_widths: Vec::new(),
        default_width: DEFAULT_COL_WIDTH,
        default_height: DEFAULT_ROW_HEIGHT,
        row_heights: HashMap::new(),
        shared: HashMap::new(),
    };
    let mut r = Reader::from_str(xml);
    let mut cell: Option<RawCell> = None;
    let mut text_target: Option<&'static str> = None;
    let mut skipped = 0usize;
    let mut row = 0u32;
    let mut next_col = 1u32;
    loop {
        let ev = r.read_event().map_err(|e| xml_error(part, e))?;
        match ev {
            Event::Start(ref e) | Event::Empty(ref e) => {
                let empty = matches!(ev, Event::Empty(_));
                match e.local_name().as_ref() {
                    b"sheetFormatPr" => {
                        if let Some(h) = attr(e, b"defaultRowHeight").and_then(|v| v.parse().ok()) {
                            ctx.default_height = h;
                        }
                        if let Some(w) = attr(e, b"defaultColWidth").and_then(|v| v.parse().ok()) {
                            ctx.default_width = w;
                        }
                    }
                    b"col" => {
                        let lo = attr(e, b"min").and_then(|v| v.parse().ok());
                        let hi = attr(e, b"max").and_then(|v| v.parse().ok());
                        let w = attr(e, b"width").and_then(|v| v.parse().ok());
                        if let (Some(lo), Some(hi), Some(w)) = (lo, hi, w) {
                            ctx.col_widths.push((lo, hi, w));
                        }
                    }
                    b"row" => {
                        row = attr(e, b"r").and_then(|v| v.parse().ok()).unwrap_or(row + 1);
                        next_col = 1;
                        if let Some(h) = attr(e, b"ht").and_then(|v| v.parse().ok()) {
                            ctx.row_heights.insert(row, h);
                        }
                    }
                    b"c" => {
                        let addr = match attr(e, b"r") {
                            Some(a) => parse_a1(&a).ok(),
                            None if row > 0 => Some(CellAddress::new(row, next_col)),
                            None => None,
                        };
                        if let Some(a) = addr {
                            next_col = a.col + 1;
                        }
                        let raw = RawCell {
                            addr,
                            kind: attr(e, b"t"),
                            xf: attr(e, b"s").and_then(|v| v.parse().ok()).unwrap_or(0),
                            ..RawCell::default()
                        };
                        if empty {
                            if let Err(msg) = ctx.finish(raw, &mut sheet) {
                                tracing::warn!(sheet = name, %msg, "cell skipped");
                                skipped += 1;
                            }
                        } else {
                            cell = Some(raw);
                        }
                    }
                    b"f" => {
                        if let Some(c) = cell.as_mut() {
                            if attr(e, b"t").is_some_and(|t| t == "shared") {
                                c.shared = attr(e, b"si").map(|si| (si, true));
                            }
                            if !empty {
                                text_target = Some("f");
                            }
                        }
                    }
                    b"v" if cell.is_some() && !empty => text_target = Some("v"),
                    b"t" if cell.is_some() && !empty => text_target = Some("v"),
                    _ => {}
                }
            }
            Event::Text(t) => {
                if let (Some(target), Some(c)) = (text_target, cell.as_mut()) {
                    let s = t.unescape().map_err(|e| xml_error(part, e))?;
                    let slot = if target == "f" { &mut c.formula } else { &mut c.value };
                    slot.get_or_insert_with(String::new).push_str(&s);
                }
            }
            Event::End(e) => match e.local_name().as_ref() {
                b"f" | b"v" | b"t" => text_target = None,
                b"c" => {
                    if let Some(raw) = cell.take() {
                        if let Err(msg) = ctx.finish(raw, &mut sheet) {
                            tracing::warn!(sheet = name, %msg, "cell skipped");
                            skipped += 1;
                        }
                    }
                }
                _ => {}
            },
            Event::Eof => break,
            _ => {}
        }
    }
    if skipped > 0 {
        tracing::warn!(sheet = name, skipped, "cells could not be imported");
    }
    Ok(sheet)
}

fn modified_time(xml: &str) -> Option<i64> {
    let mut r = Reader::from_str(xml);
    let mut inside = false;
    loop {
        match r.read_event().ok()? {
            Event::Start(e) if e.local_name().as_ref() == b"modified" => inside = true,
            Event::Text(t) if inside => {
                let s = t.unescape().ok()?;
                return DateTime::parse_from_rfc3339(s.trim()).ok().map(|d| d.timestamp());
            }
            Event::Eof => return None,
            _ => {}
        }
    }
}

/// Converts an `.xlsx` archive. `id` becomes the workbook id.
pub fn import_ooxml(bytes: &[u8], id: &str) -> Result<Workbook, OoxmlError> {
    let mut ar = Archive {
        zip: ZipArchive::new(Cursor::new(bytes.to_vec()))?,
    };
    let wb_xml = ar.required("xl/workbook.xml")?;
    let rels = ar.required("xl/_rels/workbook.xml.rels")?;
    let strings = match ar.part("xl/sharedStrings.xml")? {
        Some(x) => parse_shared_strings(&x)?,
        None => Vec::new(),
    };
    let styles = match ar.part("xl/styles.xml")? {
        Some(x) => parse_styles(&x)?,
        None => Styles::default(),
    };
    let last_modified = ar.part("docProps/core.xml")?.as_deref().and_then(modified_time).unwrap_or(0);
    let mut sheets: Vec<Sheet> = Vec::new();
    for (name, path) in parse_workbook(&wb_xml, &rels)? {
        if sheets.iter().any(|s| s.name == name) {
            tracing::warn!(sheet = %name, "duplicate sheet name; later copy skipped");
            continue;
        }
        let Some(xml) = ar.part(&path)? else {
            tracing::warn!(sheet = %name, %path, "sheet part missing; skipped");
            continue;
        };
        sheets.push(parse_sheet(&name, &path, &xml, &strings, &styles)?);
    }
    Ok(Workbook {
        id: id.to_string(),
        sheets,
        last_modified,
    })
}
