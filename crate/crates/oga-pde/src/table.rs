//! CSV and markdown rendering of convergence tables, plus a parser for the
//! markdown form used to cross-check emitted output.

use crate::error::{Error, Result};
use crate::metrics::ConvergenceRow;

/// Scientific notation with 4 significant digits and a signed two-digit
/// exponent, e.g. `6.740e-04`.
pub fn format_sci(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    let s = format!("{x:.3e}");
    let (mantissa, exp) = s.split_once('e').expect("{:e} always carries an exponent");
    let exp: i32 = exp.parse().expect("exponent is an integer");
    format!("{mantissa}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
}

fn format_order(order: Option<f64>, absent: &str) -> String {
    match order {
        Some(o) => format!("{o:.2}"),
        None => absent.to_string(),
    }
}

pub const CSV_HEADER: &str = "n,dof,l2_error,l2_order,h1_error,h1_order";

/// CSV with the fixed header, errors in 4-significant-digit scientific
/// notation, orders with two decimals, absent orders as empty cells.
pub fn emit_csv(rows: &[ConvergenceRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.n,
            r.dof,
            format_sci(r.l2_error),
            format_order(r.l2_order, ""),
            format_sci(r.h1_error),
            format_order(r.h1_order, ""),
        ));
    }
    out
}

/// Markdown table with the same columns; absent orders render as `-`.
pub fn emit_markdown(rows: &[ConvergenceRow]) -> String {
    let mut out = String::from("| n | dof | l2_error | l2_order | h1_error | h1_order |\n");
    out.push_str("|---|---|---|---|---|---|\n");
    for r in rows {
        out.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} |\n",
            r.n,
            r.dof,
            format_sci(r.l2_error),
            format_order(r.l2_order, "-"),
            format_sci(r.h1_error),
            format_order(r.h1_order, "-"),
        ));
    }
    out
}

fn parse_order(cell: &str) -> Result<Option<f64>> {
    let cell = cell.trim();
    if cell.is_empty() || cell == "-" {
        return Ok(None);
    }
    cell.parse::<f64>()
        .map(Some)
        .map_err(|e| Error::TableParse(format!("bad order `{cell}`: {e}")))
}

/// Parse a markdown table produced by [`emit_markdown`] back into rows at the
/// printed precision. Rejects malformed input instead of panicking.
pub fn parse_markdown(text: &str) -> Result<Vec<ConvergenceRow>> {
    let mut rows = Vec::new();
    let mut body = false;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if !line.starts_with('|') {
            return Err(Error::TableParse(format!("unexpected line `{line}`")));
        }
        // Header then separator precede the body.
        if !body {
            if line.starts_with("|---") || line.starts_with("| ---") {
                body = true;
            }
            continue;
        }
        let cells: Vec<&str> = line
            .trim_matches('|')
            .split('|')
            .map(str::trim)
            .collect();
        if cells.len() != 6 {
            return Err(Error::TableParse(format!(
                "expected 6 cells, found {} in `{line}`",
                cells.len()
            )));
        }
        let n: usize = cells[0]
            .parse()
            .map_err(|e| Error::TableParse(format!("bad n `{}`: {e}", cells[0])))?;
        let dof: usize = cells[1]
            .parse()
            .map_err(|e| Error::TableParse(format!("bad dof `{}`: {e}", cells[1])))?;
        let l2_error: f64 = cells[2]
            .parse()
            .map_err(|e| Error::TableParse(format!("bad l2_error `{}`: {e}", cells[2])))?;
        let l2_order = parse_order(cells[3])?;
        let h1_error: f64 = cells[4]
            .parse()
            .map_err(|e| Error::TableParse(format!("bad h1_error `{}`: {e}", cells[4])))?;
        let h1_order = parse_order(cells[5])?;
        rows.push(ConvergenceRow {
            n,
            dof,
            l2_error,
            l2_order,
            h1_error,
            h1_order,
        });
    }
    if !body {
        return Err(Error::TableParse("missing header separator".into()));
    }
    Ok(rows)
}
