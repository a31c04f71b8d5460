//! Recursive-descent parser for A1-style spreadsheet formulas.
//!
//! Grammar, loosest binding first (all binary levels left-associative):
//!
//! ```text
//! formula    := "=" comparison
//! comparison := concat (("=" | "<>" | "<" | "<=" | ">" | ">=") concat)*
//! concat     := additive ("&" additive)*
//! additive   := term (("+" | "-") term)*
//! term       := power (("*" | "/") power)*
//! power      := unary ("^" unary)*
//! unary      := ("-" | "+") unary | postfix
//! postfix    := primary "%"*
//! primary    := NUMBER | STRING | TRUE | FALSE | "(" comparison ")"
//!             | NAME "(" [comparison ("," comparison)*] ")"
//!             | [sheet "!"] ref [":" [sheet "!"] ref]
//! ```

use super::ast::{BinaryOp, CellRef, Expr, FormulaAst, UnaryOp};
use super::FormulaError;
use crate::grid::{CellAddress, MAX_COL, MAX_ROW};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Number(String),
    Str(String),
    Ident(String),
    QuotedSheet(String),
    Bang,
    Colon,
    Comma,
    LParen,
    RParen,
    Op(&'static str),
    Eof,
}

struct Lexer<'a> {
    src: &'a [u8],
    text: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn err(&self, pos: usize, message: impl Into<String>) -> FormulaError {
        FormulaError::Syntax {
            pos,
            message: message.into(),
        }
    }

    fn tokens(mut self) -> Result<Vec<(usize, Tok)>, FormulaError> {
        let mut out = Vec::new();
        loop {
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            let start = self.pos;
            let Some(&b) = self.src.get(self.pos) else {
                out.push((start, Tok::Eof));
                return Ok(out);
            };
            let tok = match b {
                b'0'..=b'9' | b'.' => self.number()?,
                b'"' => self.string()?,
                b'\'' => self.quoted_sheet()?,
                b'A'..=b'Z' | b'a'..=b'z' | b'_' | b'$' => self.ident(),
                b'!' => self.single(Tok::Bang),
                b':' => self.single(Tok::Colon),
                b',' => self.single(Tok::Comma),
                b'(' => self.single(Tok::LParen),
                b')' => self.single(Tok::RParen),
                b'<' => match self.src.get(self.pos + 1) {
                    Some(b'=') => self.double(Tok::Op("<=")),
                    Some(b'>') => self.double(Tok::Op("<>")),
                    _ => self.single(Tok::Op("<")),
                },
                b'>' => match self.src.get(self.pos + 1) {
                    Some(b'=') => self.double(Tok::Op(">=")),
                    _ => self.single(Tok::Op(">")),
                },
                b'+' => self.single(Tok::Op("+")),
                b'-' => self.single(Tok::Op("-")),
                b'*' => self.single(Tok::Op("*")),
                b'/' => self.single(Tok::Op("/")),
                b'^' => self.single(Tok::Op("^")),
                b'&' => self.single(Tok::Op("&")),
                b'=' => self.single(Tok::Op("=")),
                b'%' => self.single(Tok::Op("%")),
                _ => {
                    let ch = self.text[start..].chars().next().unwrap_or('?');
                    return Err(self.err(start, format!("unexpected character {ch:?}")));
                }
            };
            out.push((start, tok));
        }
    }

    fn single(&mut self, t: Tok) -> Tok {
        self.pos += 1;
        t
    }

    fn double(&mut self, t: Tok) -> Tok {
        self.pos += 2;
        t
    }

    fn digits(&mut self) -> usize {
        let s = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        self.pos - s
    }

    fn number(&mut self) -> Result<Tok, FormulaError> {
        let start = self.pos;
        let int_digits = self.digits();
        let mut frac_digits = 0;
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            frac_digits = self.digits();
        }
        if int_digits == 0 && frac_digits == 0 {
            return Err(self.err(start, "malformed number"));
        }
        if matches!(self.src.get(self.pos), Some(b'e' | b'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if self.digits() == 0 {
                self.pos = save;
                return Err(self.err(save, "malformed exponent"));
            }
        }
        Ok(Tok::Number(self.text[start..self.pos].to_ascii_uppercase()))
    }

    fn string(&mut self) -> Result<Tok, FormulaError> {
        let start = self.pos;
        self.pos += 1;
        let mut s = String::new();
        loop {
            let rest = &self.text[self.pos..];
            match rest.find('"') {
                None => return Err(self.err(start, "unterminated string literal")),
                Some(i) => {
                    s.push_str(&rest[..i]);
                    self.pos += i + 1;
                    if self.src.get(self.pos) == Some(&b'"') {
                        s.push('"');
                        self.pos += 1;
                    } else {
                        return Ok(Tok::Str(s));
                    }
                }
            }
        }
    }

    fn quoted_sheet(&mut self) -> Result<Tok, FormulaError> {
        let start = self.pos;
        self.pos += 1;
        let mut s = String::new();
        loop {
            let rest = &self.text[self.pos..];
            match rest.find('\'') {
                None => return Err(self.err(start, "unterminated quoted sheet name")),
                Some(i) => {
                    s.push_str(&rest[..i]);
                    self.pos += i + 1;
                    if self.src.get(self.pos) == Some(&b'\'') {
                        s.push('\'');
                        self.pos += 1;
                    } else {
                        return Ok(Tok::QuotedSheet(s));
                    }
                }
            }
        }
    }

    fn ident(&mut self) -> Tok {
        let start = self.pos;
        while self.pos < self.src.len()
            && matches!(self.src[self.pos], b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'_' | b'.' | b'$')
        {
            self.pos += 1;
        }
        Tok::Ident(self.text[start..self.pos].to_string())
    }
}

/// Interprets `$A$1`-style text as a cell reference.
fn ref_from_ident(s: &str) -> Option<CellRef> {
    let b = s.as_bytes();
    let mut i = 0;
    let abs_col = b.first() == Some(&b'$');
    if abs_col {
        i += 1;
    }
    let col_start = i;
    while i < b.len() && b[i].is_ascii_alphabetic() {
        i += 1;
    }
    if i == col_start || i - col_start > 3 {
        return None;
    }
    let letters = &s[col_start..i];
    let abs_row = b.get(i) == Some(&b'$');
    if abs_row {
        i += 1;
    }
    let row_start = i;
    while i < b.len() && b[i].is_ascii_digit() {
        i += 1;
    }
    if i != b.len() || i == row_start || b[row_start] == b'0' {
        return None;
    }
    let col = letters
        .bytes()
        .fold(0u32, |acc, c| acc * 26 + (c.to_ascii_uppercase() - b'A' + 1) as u32);
    let row: u32 = s[row_start..].parse().ok()?;
    if col > MAX_COL || row > MAX_ROW {
        return None;
    }
    Some(CellRef {
        addr: CellAddress::new(row, col),
        abs_row,
        abs_col,
        sheet: None,
    })
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    i: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.i].1
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.i + k).min(self.toks.len() - 1)].1
    }

    fn pos(&self) -> usize {
        self.toks[self.i].0
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.i].1.clone();
        if self.i < self.toks.len() - 1 {
            self.i += 1;
        }
        t
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, FormulaError> {
        Err(FormulaError::Syntax {
            pos: self.pos(),
            message: message.into(),
        })
    }

    fn eat_op(&mut self, ops: &[&'static str]) -> Option<&'static str> {
        if let Tok::Op(op) = self.peek() {
            if let Some(found) = ops.iter().find(|o| *o == op) {
                let found = *found;
                self.bump();
                return Some(found);
            }
        }
        None
    }

    fn binary_level(
        &mut self,
        ops: &[&'static str],
        next: fn(&mut Parser) -> Result<FormulaAst, FormulaError>,
    ) -> Result<FormulaAst, FormulaError> {
        let mut lhs = next(self)?;
        while let Some(op) = self.eat_op(ops) {
            let rhs = next(self)?;
            lhs = Expr::Binary {
                op: binary_op(op),
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            };
        }
        Ok(lhs)
    }

    fn comparison(&mut self) -> Result<FormulaAst, FormulaError> {
        self.binary_level(&["=", "<>", "<", "<=", ">", ">="], Parser::concat)
    }

    fn concat(&mut self) -> Result<FormulaAst, FormulaError> {
        self.binary_level(&["&"], Parser::additive)
    }

    fn additive(&mut self) -> Result<FormulaAst, FormulaError> {
        self.binary_level(&["+", "-"], Parser::term)
    }

    fn term(&mut self) -> Result<FormulaAst, FormulaError> {
        self.binary_level(&["*", "/"], Parser::power)
    }

    fn power(&mut self) -> Result<FormulaAst, FormulaError> {
        self.binary_level(&["^"], Parser::unary)
    }

    fn unary(&mut self) -> Result<FormulaAst, FormulaError> {
        match self.eat_op(&["-", "+"]) {
            Some("-") => Ok(Expr::Unary {
                op: UnaryOp::Neg,
                arg: Box::new(self.unary()?),
            }),
            Some(_) => self.unary(),
            None => self.postfix(),
        }
    }

    fn postfix(&mut self) -> Result<FormulaAst, FormulaError> {
        let mut e = self.primary()?;
        while self.eat_op(&["%"]).is_some() {
            e = Expr::Unary {
                op: UnaryOp::Percent,
                arg: Box::new(e),
            };
        }
        Ok(e)
    }

    fn primary(&mut self) -> Result<FormulaAst, FormulaError> {
        match self.peek().clone() {
            Tok::Number(n) => {
                self.bump();
                Ok(Expr::Number(n))
            }
            Tok::Str(s) => {
                self.bump();
                Ok(Expr::Str(s))
            }
            Tok::LParen => {
                self.bump();
                let inner = self.comparison()?;
                if self.bump() != Tok::RParen {
                    return self.err("expected ')'");
                }
                Ok(Expr::Paren(Box::new(inner)))
            }
            Tok::QuotedSheet(sheet) => {
                self.bump();
                self.qualified_ref(sheet)
            }
            Tok::Ident(id) => {
                if *self.peek_at(1) == Tok::LParen {
                    return self.call(id);
                }
                if *self.peek_at(1) == Tok::Bang {
                    self.bump();
                    return self.qualified_ref(id);
                }
                if let Some(r) = ref_from_ident(&id) {
                    self.bump();
                    return self.range_tail(r);
                }
                if id.eq_ignore_ascii_case("TRUE") || id.eq_ignore_ascii_case("FALSE") {
                    self.bump();
                    return Ok(Expr::Bool(id.eq_ignore_ascii_case("TRUE")));
                }
                self.err(format!("unsupported name {id:?}"))
            }
            Tok::Eof => self.err("unexpected end of formula"),
            other => self.err(format!("unexpected token {other:?}")),
        }
    }

    fn qualified_ref(&mut self, sheet: String) -> Result<FormulaAst, FormulaError> {
        if self.bump() != Tok::Bang {
            return self.err("expected '!' after sheet name");
        }
        let Tok::Ident(id) = self.peek().clone() else {
            return self.err("expected cell reference after sheet name");
        };
        let Some(mut r) = ref_from_ident(&id) else {
            return self.err(format!("invalid cell reference {id:?}"));
        };
        self.bump();
        r.sheet = Some(sheet);
        self.range_tail(r)
    }

    fn range_tail(&mut self, start: CellRef) -> Result<FormulaAst, FormulaError> {
        if *self.peek() != Tok::Colon {
            return Ok(Expr::Ref(start));
        }
        self.bump();
        let (sheet, id) = match self.bump() {
            Tok::Ident(id) if *self.peek() == Tok::Bang => {
                self.bump();
                match self.bump() {
                    Tok::Ident(r) => (Some(id), r),
                    _ => return self.err("expected range end"),
                }
            }
            Tok::QuotedSheet(s) => {
                if self.bump() != Tok::Bang {
                    return self.err("expected '!' after sheet name");
                }
                match self.bump() {
                    Tok::Ident(r) => (Some(s), r),
                    _ => return self.err("expected range end"),
                }
            }
            Tok::Ident(id) => (None, id),
            _ => return self.err("expected range end"),
        };
        let Some(mut end) = ref_from_ident(&id) else {
            return self.err(format!("invalid range end {id:?}"));
        };
        end.sheet = sheet;
        Ok(Expr::Range(start, end))
    }

    fn call(&mut self, name: String) -> Result<FormulaAst, FormulaError> {
        if name.contains('$') {
            return self.err(format!("invalid function name {name:?}"));
        }
        self.bump();
        self.bump();
        let mut args = Vec::new();
        if *self.peek() == Tok::RParen {
            self.bump();
        } else {
            loop {
                args.push(self.comparison()?);
                match self.bump() {
                    Tok::Comma => continue,
                    Tok::RParen => break,
                    _ => return self.err("expected ',' or ')' in argument list"),
                }
            }
        }
        Ok(Expr::Call {
            name: name.to_ascii_uppercase(),
            args,
        })
    }
}

fn binary_op(s: &str) -> BinaryOp {
    match s {
        "+" => BinaryOp::Add,
        "-" => BinaryOp::Sub,
        "*" => BinaryOp::Mul,
        "/" => BinaryOp::Div,
        "^" => BinaryOp::Pow,
        "&" => BinaryOp::Concat,
        "=" => BinaryOp::Eq,
        "<>" => BinaryOp::Ne,
        "<" => BinaryOp::Lt,
        "<=" => BinaryOp::Le,
        ">" => BinaryOp::Gt,
        ">=" => BinaryOp::Ge,
        _ => unreachable!("unknown operator {s}"),
    }
}

/// Parses a formula that starts with `=`.
pub fn parse_formula(s: &str) -> Result<FormulaAst, FormulaError> {
    let trimmed = s.trim_start();
    let offset = s.len() - trimmed.len();
    let Some(body) = trimmed.strip_prefix('=') else {
        return Err(FormulaError::MissingEquals);
    };
    let toks = Lexer {
        src: body.as_bytes(),
        text: body,
        pos: 0,
    }
    .tokens()
    .map_err(|e| e.shifted(offset + 1))?;
    let mut p = Parser { toks, i: 0 };
    let ast = p.comparison().map_err(|e| e.shifted(offset + 1))?;
    if *p.peek() != Tok::Eof {
        return p.err("unexpected trailing input").map_err(|e: FormulaError| e.shifted(offset + 1));
    }
    Ok(ast)
}
