//! Matrix input: inline bracketed rows, named instances, whitespace matrix
//! files and `{"n", "m", "c"}` records.

use std::fs;
use std::path::Path;

use corrlab::completion::Correlator;
use corrlab::models;
use nalgebra::DMatrix;

use crate::CliError;

/// Evaluates one entry, accepting expressions such as `1/sqrt(2)`.
pub fn eval_entry(token: &str) -> Result<f64, CliError> {
    let t = token.trim();
    if t.is_empty() {
        return Err(CliError::Parse("empty matrix entry".into()));
    }
    if let Ok(v) = t.parse::<f64>() {
        return Ok(v);
    }
    let v =
        meval::eval_str(t).map_err(|e| CliError::Parse(format!("cannot evaluate `{t}`: {e}")))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Parse(format!("`{t}` is not finite")))
    }
}

/// Splits on commas outside parentheses.
fn split_top_level(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, ch) in s.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(&s[start..]);
    out
}

/// Parses `[[a, b], [c, d]]`; entries may be expressions.
pub fn parse_inline(s: &str) -> Result<Vec<Vec<f64>>, CliError> {
    let s = s.trim();
    let inner = s
        .strip_prefix('[')
        .and_then(|r| r.strip_suffix(']'))
        .ok_or_else(|| CliError::Parse(format!("expected `[[...], ...]`, got `{s}`")))?
        .trim();
    let mut rows = Vec::new();
    let mut rest = inner;
    while !rest.is_empty() {
        let open = rest
            .strip_prefix('[')
            .ok_or_else(|| CliError::Parse(format!("expected `[` at `{rest}`")))?;
        let close = open
            .find(']')
            .ok_or_else(|| CliError::Parse("unbalanced brackets".into()))?;
        let row = split_top_level(&open[..close])
            .into_iter()
            .map(eval_entry)
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
        rest = open[close + 1..].trim_start();
        if let Some(r) = rest.strip_prefix(',') {
            rest = r.trim_start();
            if rest.is_empty() {
                return Err(CliError::Parse("trailing comma".into()));
            }
        } else if !rest.is_empty() {
            return Err(CliError::Parse(format!("unexpected `{rest}`")));
        }
    }
    Ok(rows)
}

/// One row per non-empty line; entries separated by whitespace or commas.
pub fn parse_whitespace_matrix(text: &str) -> Result<Vec<Vec<f64>>, CliError> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            l.split(|c: char| c.is_whitespace() || c == ',')
                .filter(|t| !t.is_empty())
                .map(eval_entry)
                .collect()
        })
        .collect()
}

pub fn rows_to_correlator(rows: &[Vec<f64>]) -> Result<Correlator, CliError> {
    Correlator::from_rows(rows).map_err(|e| CliError::Parse(e.to_string()))
}

/// Rectangular coefficient matrix without the `[-1, 1]` range check.
pub fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, CliError> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if n == 0 || m == 0 || rows.iter().any(|r| r.len() != m) {
        return Err(CliError::Parse(
            "matrix rows must be nonempty and of equal length".into(),
        ));
    }
    Ok(DMatrix::from_fn(n, m, |x, y| rows[x][y]))
}

pub fn parse_record(line: &str) -> Result<Correlator, CliError> {
    serde_json::from_str(line).map_err(|e| CliError::Parse(format!("bad record: {e}")))
}

/// One line of a batch file: a JSON record or an inline matrix.
pub fn parse_line(line: &str) -> Result<Correlator, CliError> {
    let t = line.trim();
    if t.starts_with('{') {
        parse_record(t)
    } else {
        rows_to_correlator(&parse_inline(t)?)
    }
}

/// Resolves a command-line argument to a correlator.
///
/// Inline matrices start with `[`; otherwise a stored instance name is
/// tried before reading the argument as a file path.
pub fn resolve(arg: &str) -> Result<Correlator, CliError> {
    let t = arg.trim();
    if t.starts_with('[') {
        return rows_to_correlator(&parse_inline(t)?);
    }
    if let Ok(c) = models::named(t) {
        return Ok(c);
    }
    let path = Path::new(t);
    if !path.exists() {
        return Err(CliError::Parse(format!(
            "`{t}` is neither a matrix, a known instance ({}) nor an existing file",
            models::NAMES.join(", ")
        )));
    }
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{t}: {e}")))?;
    let body = text.trim();
    if body.starts_with('{') {
        parse_record(body)
    } else if body.starts_with('[') {
        rows_to_correlator(&parse_inline(body)?)
    } else {
        rows_to_correlator(&parse_whitespace_matrix(body)?)
    }
}
