use super::ast::{CellRef, Expr, FormulaAst, Hole, TemplateAst};
use super::FormulaError;
use crate::grid::CellAddress;

/// A formula with every cell reference replaced by an ordered hole.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FormulaTemplate {
    pub ast: TemplateAst,
    pub hole_count: usize,
    /// Rendering with `_` at each hole, e.g. `=COUNTIF(_:_,_)`.
    pub canonical: String,
}

/// Parameter cells filling a template's holes, in hole order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct ParameterCells(pub Vec<CellAddress>);

impl ParameterCells {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Splits a parsed formula into its template and parameter cells.
pub fn extract_template(ast: &FormulaAst) -> (FormulaTemplate, ParameterCells) {
    let mut params = Vec::new();
    let tpl: TemplateAst = ast
        .try_map_refs(&mut |r: &CellRef| -> Result<Hole, std::convert::Infallible> {
            params.push(r.addr);
            Ok(Hole {
                ordinal: params.len(),
                abs_row: r.abs_row,
                abs_col: r.abs_col,
                sheet: r.sheet.clone(),
            })
        })
        .unwrap_or_else(|never| match never {});
    let canonical = tpl.pretty();
    (
        FormulaTemplate {
            ast: tpl,
            hole_count: params.len(),
            canonical,
        },
        ParameterCells(params),
    )
}

impl FormulaTemplate {
    /// Fills the holes, producing a formula tree.
    pub fn instantiate_ast(&self, params: &ParameterCells) -> Result<FormulaAst, FormulaError> {
        if params.len() != self.hole_count {
            return Err(FormulaError::Arity {
                expected: self.hole_count,
                got: params.len(),
            });
        }
        self.ast.try_map_refs(&mut |h: &Hole| {
            Ok(CellRef {
                addr: params.0[h.ordinal - 1],
                abs_row: h.abs_row,
                abs_col: h.abs_col,
                sheet: h.sheet.clone(),
            })
        })
    }

    /// Ordinal pairs `(start, end)` of holes that form range endpoints.
    pub fn range_hole_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        self.ast.walk(&mut |e| {
            if let Expr::Range(a, b) = e {
                out.push((a.ordinal, b.ordinal));
            }
        });
        out
    }

    /// The holes in ordinal order.
    pub fn holes(&self) -> Vec<&Hole> {
        let mut out = Vec::new();
        self.ast.walk(&mut |e| match e {
            Expr::Ref(h) => out.push(h),
            Expr::Range(a, b) => {
                out.push(a);
                out.push(b);
            }
            _ => {}
        });
        out.sort_by_key(|h| h.ordinal);
        out
    }
}

/// Fills a template's holes and renders the formula text.
pub fn instantiate(t: &FormulaTemplate, params: &ParameterCells) -> Result<String, FormulaError> {
    Ok(t.instantiate_ast(params)?.pretty())
}
