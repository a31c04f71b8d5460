use std::fmt::{self, Write as _};

use crate::grid::{column_label, CellAddress};

/// A cell reference as written in a formula.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CellRef {
    pub addr: CellAddress,
    pub abs_row: bool,
    pub abs_col: bool,
    pub sheet: Option<String>,
}

impl CellRef {
    pub fn relative(addr: CellAddress) -> CellRef {
        CellRef {
            addr,
            abs_row: false,
            abs_col: false,
            sheet: None,
        }
    }
}

/// A template placeholder. Absoluteness and sheet qualifier are kept so
/// that instantiation reproduces the source text.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Hole {
    pub ordinal: usize,
    pub abs_row: bool,
    pub abs_col: bool,
    pub sheet: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Concat,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Pow => "^",
            BinaryOp::Concat => "&",
            BinaryOp::Eq => "=",
            BinaryOp::Ne => "<>",
            BinaryOp::Lt => "<",
            BinaryOp::Le => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::Ge => ">=",
        }
    }

    pub fn is_arithmetic(self) -> bool {
        matches!(
            self,
            BinaryOp::Add | BinaryOp::Sub | BinaryOp::Mul | BinaryOp::Div | BinaryOp::Pow
        )
    }
}

/// Unary plus is dropped by the parser, so only negation and percent remain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Percent,
}

/// Formula expression tree, generic over the reference leaf.
///
/// Parsed formulas use [`CellRef`] leaves ([`FormulaAst`]); templates use
/// [`Hole`] leaves ([`TemplateAst`]).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr<L> {
    Call { name: String, args: Vec<Expr<L>> },
    Ref(L),
    Range(L, L),
    /// Numeric literal kept as its (uppercased) source lexeme.
    Number(String),
    Str(String),
    Bool(bool),
    Binary {
        op: BinaryOp,
        lhs: Box<Expr<L>>,
        rhs: Box<Expr<L>>,
    },
    Unary { op: UnaryOp, arg: Box<Expr<L>> },
    Paren(Box<Expr<L>>),
}

pub type FormulaAst = Expr<CellRef>;
pub type TemplateAst = Expr<Hole>;

impl<L> Expr<L> {
    /// Total node count. A range counts as three nodes (range plus endpoints).
    pub fn size(&self) -> usize {
        match self {
            Expr::Call { args, .. } => 1 + args.iter().map(Expr::size).sum::<usize>(),
            Expr::Ref(_) | Expr::Number(_) | Expr::Str(_) | Expr::Bool(_) => 1,
            Expr::Range(..) => 3,
            Expr::Binary { lhs, rhs, .. } => 1 + lhs.size() + rhs.size(),
            Expr::Unary { arg, .. } | Expr::Paren(arg) => 1 + arg.size(),
        }
    }

    /// Maps every reference leaf in left-to-right source order.
    pub fn try_map_refs<M, E>(&self, f: &mut impl FnMut(&L) -> Result<M, E>) -> Result<Expr<M>, E> {
        Ok(match self {
            Expr::Call { name, args } => Expr::Call {
                name: name.clone(),
                args: args
                    .iter()
                    .map(|a| a.try_map_refs(f))
                    .collect::<Result<_, _>>()?,
            },
            Expr::Ref(l) => Expr::Ref(f(l)?),
            Expr::Range(a, b) => {
                let a = f(a)?;
                let b = f(b)?;
                Expr::Range(a, b)
            }
            Expr::Number(s) => Expr::Number(s.clone()),
            Expr::Str(s) => Expr::Str(s.clone()),
            Expr::Bool(b) => Expr::Bool(*b),
            Expr::Binary { op, lhs, rhs } => {
                let lhs = lhs.try_map_refs(f)?;
                let rhs = rhs.try_map_refs(f)?;
                Expr::Binary {
                    op: *op,
                    lhs: Box::new(lhs),
                    rhs: Box::new(rhs),
                }
            }
            Expr::Unary { op, arg } => Expr::Unary {
                op: *op,
                arg: Box::new(arg.try_map_refs(f)?),
            },
            Expr::Paren(arg) => Expr::Paren(Box::new(arg.try_map_refs(f)?)),
        })
    }

    /// Pre-order visit of every node.
    pub fn walk<'a>(&'a self, visit: &mut impl FnMut(&'a Expr<L>)) {
        visit(self);
        match self {
            Expr::Call { args, .. } => args.iter().for_each(|a| a.walk(visit)),
            Expr::Binary { lhs, rhs, .. } => {
                lhs.walk(visit);
                rhs.walk(visit);
            }
            Expr::Unary { arg, .. } | Expr::Paren(arg) => arg.walk(visit),
            _ => {}
        }
    }
}

/// Renders a reference leaf. Implemented for both leaf kinds so one printer
/// serves formulas and templates.
pub trait LeafDisplay {
    fn write_leaf(&self, out: &mut String);
}

fn write_sheet_prefix(out: &mut String, sheet: &Option<String>) {
    if let Some(name) = sheet {
        if needs_quotes(name) {
            out.push('\'');
            out.push_str(&name.replace('\'', "''"));
            out.push('\'');
        } else {
            out.push_str(name);
        }
        out.push('!');
    }
}

fn needs_quotes(name: &str) -> bool {
    let mut chars = name.chars();
    let first_ok = chars
        .next()
        .is_some_and(|c| c.is_ascii_alphabetic() || c == '_');
    !first_ok
        || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
        || crate::grid::parse_a1(name).is_ok()
        || name.eq_ignore_ascii_case("TRUE")
        || name.eq_ignore_ascii_case("FALSE")
}

impl LeafDisplay for CellRef {
    fn write_leaf(&self, out: &mut String) {
        write_sheet_prefix(out, &self.sheet);
        if self.abs_col {
            out.push('$');
        }
        out.push_str(&column_label(self.addr.col));
        if self.abs_row {
            out.push('$');
        }
        let _ = write!(out, "{}", self.addr.row);
    }
}

impl LeafDisplay for Hole {
    fn write_leaf(&self, out: &mut String) {
        write_sheet_prefix(out, &self.sheet);
        out.push('_');
    }
}

impl<L: LeafDisplay> Expr<L> {
    fn write_to(&self, out: &mut String) {
        match self {
            Expr::Call { name, args } => {
                out.push_str(name);
                out.push('(');
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    a.write_to(out);
                }
                out.push(')');
            }
            Expr::Ref(l) => l.write_leaf(out),
            Expr::Range(a, b) => {
                a.write_leaf(out);
                out.push(':');
                b.write_leaf(out);
            }
            Expr::Number(s) => out.push_str(s),
            Expr::Str(s) => {
                out.push('"');
                out.push_str(&s.replace('"', "\"\""));
                out.push('"');
            }
            Expr::Bool(b) => out.push_str(if *b { "TRUE" } else { "FALSE" }),
            Expr::Binary { op, lhs, rhs } => {
                lhs.write_to(out);
                out.push_str(op.symbol());
                rhs.write_to(out);
            }
            Expr::Unary { op: UnaryOp::Neg, arg } => {
                out.push('-');
                arg.write_to(out);
            }
            Expr::Unary {
                op: UnaryOp::Percent,
                arg,
            } => {
                arg.write_to(out);
                out.push('%');
            }
            Expr::Paren(arg) => {
                out.push('(');
                arg.write_to(out);
                out.push(')');
            }
        }
    }

    /// Canonical text with a leading `=`. For parser-produced trees,
    /// re-parsing the output yields a structurally equal tree.
    pub fn pretty(&self) -> String {
        let mut out = String::from("=");
        self.write_to(&mut out);
        out
    }
}

impl<L: LeafDisplay> fmt::Display for Expr<L> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.pretty())
    }
}
