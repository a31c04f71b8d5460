//! Formula parsing, templates and parameter cells, size and type metrics.

mod ast;
mod parser;
mod template;

use std::collections::HashMap;
use std::sync::OnceLock;

use thiserror::Error;

pub use ast::{BinaryOp, CellRef, Expr, FormulaAst, Hole, LeafDisplay, TemplateAst, UnaryOp};
pub use parser::parse_formula;
pub use template::{extract_template, instantiate, FormulaTemplate, ParameterCells};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormulaError {
    #[error("formula must start with '='")]
    MissingEquals,
    #[error("syntax error at position {pos}: {message}")]
    Syntax { pos: usize, message: String },
    #[error("template expects {expected} parameters, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("shifted reference leaves the grid")]
    ShiftOutOfGrid,
}

impl FormulaError {
    fn shifted(self, by: usize) -> FormulaError {
        match self {
            FormulaError::Syntax { pos, message } => FormulaError::Syntax {
                pos: pos + by,
                message,
            },
            other => other,
        }
    }
}

/// Canonical form used for exact-match comparison: uppercase names and
/// columns, no whitespace, unary plus dropped.
pub fn normalize(formula: &str) -> Result<String, FormulaError> {
    Ok(parse_formula(formula)?.pretty())
}

pub fn ast_size<L>(ast: &Expr<L>) -> usize {
    ast.size()
}

/// Moves every relative reference by `(d_row, d_col)`, as spreadsheet
/// applications do for shared and copied formulas. Absolute parts stay put.
pub fn shift_relative(ast: &FormulaAst, d_row: i64, d_col: i64) -> Result<FormulaAst, FormulaError> {
    ast.try_map_refs(&mut |r: &CellRef| {
        let dr = if r.abs_row { 0 } else { d_row };
        let dc = if r.abs_col { 0 } else { d_col };
        let addr = r.addr.offset(dr, dc).ok_or(FormulaError::ShiftOutOfGrid)?;
        Ok(CellRef { addr, ..r.clone() })
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FormulaType {
    Conditional,
    Math,
    String,
    Date,
    Other,
}

impl FormulaType {
    pub fn as_str(self) -> &'static str {
        match self {
            FormulaType::Conditional => "conditional",
            FormulaType::Math => "math",
            FormulaType::String => "string",
            FormulaType::Date => "date",
            FormulaType::Other => "other",
        }
    }

    fn parse(s: &str) -> Option<FormulaType> {
        Some(match s {
            "conditional" => FormulaType::Conditional,
            "math" => FormulaType::Math,
            "string" => FormulaType::String,
            "date" => FormulaType::Date,
            "other" => FormulaType::Other,
            _ => return None,
        })
    }
}

const CATEGORY_TABLE: &str = include_str!("categories.tsv");

/// The bundled function-category table.
pub fn function_categories() -> &'static HashMap<String, FormulaType> {
    static TABLE: OnceLock<HashMap<String, FormulaType>> = OnceLock::new();
    TABLE.get_or_init(|| {
        CATEGORY_TABLE
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                let (name, cat) = l.split_once('\t').expect("NAME<TAB>category");
                let cat = FormulaType::parse(cat.trim()).expect("known category");
                (name.trim().to_string(), cat)
            })
            .collect()
    })
}

fn function_category(name: &str) -> Option<FormulaType> {
    let bare = name.strip_prefix("_XLFN.").unwrap_or(name);
    function_categories().get(bare).copied()
}

fn looks_like_date(s: &str) -> bool {
    let pat: String = s
        .chars()
        .map(|c| if c.is_ascii_digit() { 'D' } else { c })
        .collect();
    matches!(
        pat.as_str(),
        "DDDD-DD-DD" | "DDDD/DD/DD" | "DD/DD/DDDD" | "D/D/DDDD" | "DD/D/DDDD" | "D/DD/DDDD"
    )
}

/// Coarse formula type, with precedence conditional > date > string > math.
pub fn classify_formula<L>(ast: &Expr<L>) -> FormulaType {
    let (mut cond, mut date, mut string, mut math) = (false, false, false, false);
    ast.walk(&mut |e| match e {
        Expr::Call { name, .. } => match function_category(name) {
            Some(FormulaType::Conditional) => cond = true,
            Some(FormulaType::Date) => date = true,
            Some(FormulaType::String) => string = true,
            Some(FormulaType::Math) => math = true,
            _ => {}
        },
        Expr::Str(s) if looks_like_date(s) => date = true,
        Expr::Binary {
            op: BinaryOp::Concat,
            ..
        } => string = true,
        Expr::Binary { op, .. } if op.is_arithmetic() => math = true,
        Expr::Unary { .. } => math = true,
        _ => {}
    });
    if cond {
        FormulaType::Conditional
    } else if date {
        FormulaType::Date
    } else if string {
        FormulaType::String
    } else if math {
        FormulaType::Math
    } else {
        FormulaType::Other
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{parse_a1, CellAddress};

    fn a(s: &str) -> CellAddress {
        parse_a1(s).unwrap()
    }

    fn r(s: &str) -> FormulaAst {
        Expr::Ref(CellRef::relative(a(s)))
    }

    fn num(s: &str) -> FormulaAst {
        Expr::Number(s.into())
    }

    #[test]
    fn parses_countif() {
        let ast = parse_formula("=COUNTIF(C7:C37,C41)").unwrap();
        assert_eq!(
            ast,
            Expr::Call {
                name: "COUNTIF".into(),
                args: vec![
                    Expr::Range(CellRef::relative(a("C7")), CellRef::relative(a("C37"))),
                    r("C41"),
                ],
            }
        );
    }

    #[test]
    fn precedence_mul_over_add() {
        let ast = parse_formula("=1+2*3").unwrap();
        assert_eq!(
            ast,
            Expr::Binary {
                op: BinaryOp::Add,
                lhs: Box::new(num("1")),
                rhs: Box::new(Expr::Binary {
                    op: BinaryOp::Mul,
                    lhs: Box::new(num("2")),
                    rhs: Box::new(num("3")),
                }),
            }
        );
    }

    #[test]
    fn precedence_levels() {
        // unary binds tighter than ^, ^ is left-associative
        assert_eq!(normalize("=-2^2").unwrap(), "=-2^2");
        match parse_formula("=-2^2").unwrap() {
            Expr::Binary { op: BinaryOp::Pow, lhs, .. } => {
                assert!(matches!(*lhs, Expr::Unary { op: UnaryOp::Neg, .. }))
            }
            other => panic!("{other:?}"),
        }
        match parse_formula("=2^3^4").unwrap() {
            Expr::Binary { op: BinaryOp::Pow, lhs, .. } => {
                assert!(matches!(*lhs, Expr::Binary { op: BinaryOp::Pow, .. }))
            }
            other => panic!("{other:?}"),
        }
        // & is looser than +, comparisons loosest
        match parse_formula("=A1&1+2=B1").unwrap() {
            Expr::Binary { op: BinaryOp::Eq, lhs, .. } => match *lhs {
                Expr::Binary { op: BinaryOp::Concat, rhs, .. } => {
                    assert!(matches!(*rhs, Expr::Binary { op: BinaryOp::Add, .. }))
                }
                other => panic!("{other:?}"),
            },
            other => panic!("{other:?}"),
        }
        match parse_formula("=10-3-2").unwrap() {
            Expr::Binary { op: BinaryOp::Sub, lhs, rhs } => {
                assert!(matches!(*lhs, Expr::Binary { op: BinaryOp::Sub, .. }));
                assert_eq!(*rhs, num("2"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn nested_if_reparses_equal() {
        let src = "=IF(A1>0,SUM(B1:B9),0)";
        let ast = parse_formula(src).unwrap();
        match &ast {
            Expr::Call { name, args } => {
                assert_eq!(name, "IF");
                assert!(matches!(args[0], Expr::Binary { op: BinaryOp::Gt, .. }));
                assert!(matches!(&args[1], Expr::Call { name, .. } if name == "SUM"));
            }
            other => panic!("{other:?}"),
        }
        let printed = ast.pretty();
        assert_eq!(printed, src);
        assert_eq!(parse_formula(&printed).unwrap(), ast);
    }

    #[test]
    fn literals_and_qualifiers() {
        let ast = parse_formula("= 'My Sheet'!$A$1 & \"say \"\"hi\"\"\" & Data!b2:c3 & true").unwrap();
        assert_eq!(ast.pretty(), "='My Sheet'!$A$1&\"say \"\"hi\"\"\"&Data!B2:C3&TRUE");
        assert_eq!(normalize("=+A1").unwrap(), "=A1");
        assert_eq!(normalize("=5%").unwrap(), "=5%");
        assert_eq!(normalize("=1.5e3+.5").unwrap(), "=1.5E3+.5");
        assert_eq!(normalize("=now()").unwrap(), "=NOW()");
        assert_eq!(normalize("=_xlfn.concat(A1,B1)").unwrap(), "=_XLFN.CONCAT(A1,B1)");
        assert_eq!(normalize("=LOG10(A1)").unwrap(), "=LOG10(A1)");
    }

    #[test]
    fn syntax_errors_have_positions() {
        match parse_formula("=SUM(A1,") {
            Err(FormulaError::Syntax { pos, .. }) => assert_eq!(pos, 8),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_formula("SUM(A1)"), Err(FormulaError::MissingEquals)));
        assert!(matches!(parse_formula("=1+"), Err(FormulaError::Syntax { .. })));
        assert!(matches!(parse_formula("=Table1[Col]"), Err(FormulaError::Syntax { .. })));
        assert!(matches!(parse_formula("=\"abc"), Err(FormulaError::Syntax { .. })));
        assert!(matches!(parse_formula("=A1 B1"), Err(FormulaError::Syntax { .. })));
        assert!(matches!(parse_formula("=MyName+1"), Err(FormulaError::Syntax { .. })));
        // unknown function names are fine
        assert!(parse_formula("=FROBNICATE(A1)").is_ok());
    }

    #[test]
    fn template_examples() {
        let (t, p) = extract_template(&parse_formula("=COUNTIF(C7:C37,C41)").unwrap());
        assert_eq!(t.canonical, "=COUNTIF(_:_,_)");
        assert_eq!(t.hole_count, 3);
        assert_eq!(p.0, vec![a("C7"), a("C37"), a("C41")]);
        assert_eq!(t.range_hole_pairs(), vec![(1, 2)]);

        let (t, p) = extract_template(&parse_formula("=1+2").unwrap());
        assert_eq!(t.canonical, "=1+2");
        assert!(p.is_empty());

        let (t, p) = extract_template(&parse_formula("=A1+A1").unwrap());
        assert_eq!(t.canonical, "=_+_");
        assert_eq!(p.0, vec![a("A1"), a("A1")]);
    }

    #[test]
    fn hole_count_matches_brute_force_walk() {
        for src in ["=A1+A1", "=SUM(A1:B2)*C3-$D$4", "=IF(Sheet2!A1>0,B1:B9,\"x\")", "=PI()"] {
            let ast = parse_formula(src).unwrap();
            let mut refs = 0;
            ast.walk(&mut |e| match e {
                Expr::Ref(_) => refs += 1,
                Expr::Range(..) => refs += 2,
                _ => {}
            });
            let (t, p) = extract_template(&ast);
            assert_eq!(t.hole_count, refs, "{src}");
            assert_eq!(p.len(), refs);
        }
    }

    #[test]
    fn instantiate_examples() {
        let (t, _) = extract_template(&parse_formula("=COUNTIF(C6:C350,C354)").unwrap());
        let p = ParameterCells(vec![a("C7"), a("C37"), a("C41")]);
        assert_eq!(instantiate(&t, &p).unwrap(), "=COUNTIF(C7:C37,C41)");
        let p = ParameterCells(vec![a("C6"), a("C350"), a("C354")]);
        assert_eq!(instantiate(&t, &p).unwrap(), "=COUNTIF(C6:C350,C354)");
        let p = ParameterCells(vec![a("C6"), a("C350")]);
        assert_eq!(
            instantiate(&t, &p),
            Err(FormulaError::Arity { expected: 3, got: 2 })
        );
    }

    #[test]
    fn absolute_and_qualified_refs_survive_templates() {
        let src = "=SUM($A$1:A$9)+Other!B2";
        let ast = parse_formula(src).unwrap();
        let (t, p) = extract_template(&ast);
        assert_eq!(t.canonical, "=SUM(_:_)+Other!_");
        assert_eq!(instantiate(&t, &p).unwrap(), src);
    }

    #[test]
    fn sizes() {
        assert_eq!(ast_size(&num("1")), 1);
        assert_eq!(ast_size(&parse_formula("=1+2").unwrap()), 3);
        assert_eq!(ast_size(&parse_formula("=COUNTIF(C7:C37,C41)").unwrap()), 5);
        assert_eq!(ast_size(&parse_formula("=(A1)").unwrap()), 2);
    }

    #[test]
    fn classification() {
        let c = |s: &str| classify_formula(&parse_formula(s).unwrap());
        assert_eq!(c("=IF(A1>0,1,0)"), FormulaType::Conditional);
        assert_eq!(c("=SUM(A1:A9)"), FormulaType::Math);
        assert_eq!(c("=CONCAT(A1,B1)"), FormulaType::String);
        assert_eq!(c("=A1&B1"), FormulaType::String);
        assert_eq!(c("=YEAR(A1)+1"), FormulaType::Date);
        assert_eq!(c("=A1>\"2020-01-01\""), FormulaType::Date);
        assert_eq!(c("=IF(YEAR(A1)>2000,1,0)"), FormulaType::Conditional);
        assert_eq!(c("=VLOOKUP(A1,B1:C9,2,FALSE)"), FormulaType::Other);
        assert_eq!(c("=A1"), FormulaType::Other);
        assert_eq!(c("=A1*2"), FormulaType::Math);
        assert!(function_categories().len() >= 60);
    }

    #[test]
    fn shifting_respects_absolute_parts() {
        let ast = parse_formula("=SUM(A1:$B$2)*C$3").unwrap();
        let moved = shift_relative(&ast, 2, 1).unwrap();
        assert_eq!(moved.pretty(), "=SUM(B3:$B$2)*D$3");
        assert_eq!(shift_relative(&ast, -1, 0), Err(FormulaError::ShiftOutOfGrid));
    }
}
