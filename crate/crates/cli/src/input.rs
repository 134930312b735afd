//! Headerless row-major CSV matrices.
//!
//! A file holds comma-separated numbers, one matrix row per line. The first
//! line may be a shape header `# shape: <rows> <cols>`, which is then checked
//! against the data. Blank lines are ignored, except in multi-matrix files
//! where they separate matrices.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use qagg_core::experiment::GridSpec;

use crate::error::{CliError, CliResult};

pub fn read_text(path: &Path, field: &str) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::input(field, format!("cannot read {}: {e}", path.display())))
}

pub fn read_matrix(path: &Path, field: &str) -> CliResult<DMatrix<f64>> {
    parse_matrix(&read_text(path, field)?, field)
}

/// A column or row vector.
pub fn read_vector(path: &Path, field: &str) -> CliResult<DVector<f64>> {
    parse_vector(&read_text(path, field)?, field)
}

pub fn parse_matrix(text: &str, field: &str) -> CliResult<DMatrix<f64>> {
    let lines: Vec<(usize, &str)> = numbered(text).filter(|(_, l)| !l.trim().is_empty()).collect();
    parse_block(&lines, field)
}

pub fn parse_vector(text: &str, field: &str) -> CliResult<DVector<f64>> {
    let m = parse_matrix(text, field)?;
    if m.ncols() == 1 {
        Ok(m.column(0).into_owned())
    } else if m.nrows() == 1 {
        Ok(m.row(0).transpose())
    } else {
        Err(CliError::input(
            field,
            format!("expected a vector, found a {}x{} matrix", m.nrows(), m.ncols()),
        ))
    }
}

/// Matrices separated by blank lines.
pub fn parse_blocks(text: &str, field: &str) -> CliResult<Vec<DMatrix<f64>>> {
    let mut blocks = Vec::new();
    let mut current = Vec::new();
    for (no, line) in numbered(text) {
        if line.trim().is_empty() {
            if !current.is_empty() {
                blocks.push(parse_block(&current, field)?);
                current.clear();
            }
        } else {
            current.push((no, line));
        }
    }
    if !current.is_empty() {
        blocks.push(parse_block(&current, field)?);
    }
    if blocks.is_empty() {
        return Err(CliError::input(field, "no matrices found"));
    }
    Ok(blocks)
}

fn numbered(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().map(|(i, l)| (i + 1, l))
}

fn parse_block(lines: &[(usize, &str)], field: &str) -> CliResult<DMatrix<f64>> {
    let (shape, data) = match lines.first() {
        Some((no, line)) if line.trim_start().starts_with('#') => (Some(parse_shape(*no, line, field)?), &lines[1..]),
        _ => (None, lines),
    };
    if data.is_empty() {
        return Err(CliError::input(field, "no data rows"));
    }
    let mut values = Vec::new();
    let mut ncols = None;
    for &(no, line) in data {
        let row = parse_row(no, line, field)?;
        match ncols {
            None => ncols = Some(row.len()),
            Some(c) if c != row.len() => {
                return Err(CliError::input(
                    field,
                    format!("line {no} has {} values, expected {c}", row.len()),
                ))
            }
            _ => {}
        }
        values.extend(row);
    }
    let (nrows, ncols) = (data.len(), ncols.unwrap_or(0));
    if let Some((r, c)) = shape {
        if (r, c) != (nrows, ncols) {
            return Err(CliError::input(
                field,
                format!("shape header says {r}x{c} but the data is {nrows}x{ncols}"),
            ));
        }
    }
    Ok(DMatrix::from_row_slice(nrows, ncols, &values))
}

fn parse_shape(no: usize, line: &str, field: &str) -> CliResult<(usize, usize)> {
    let bad = || CliError::input(field, format!("line {no}: expected shape header `# shape: <rows> <cols>`"));
    let rest = line.trim_start().trim_start_matches('#').trim();
    let rest = rest.strip_prefix("shape:").ok_or_else(bad)?;
    let dims: Vec<usize> = rest
        .split(|c: char| c.is_whitespace() || c == ',' || c == 'x')
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect::<Result<_, _>>()
        .map_err(|_| bad())?;
    match dims[..] {
        [r, c] => Ok((r, c)),
        _ => Err(bad()),
    }
}

fn parse_row(no: usize, line: &str, field: &str) -> CliResult<Vec<f64>> {
    line.split(',')
        .enumerate()
        .map(|(col, cell)| {
            let cell = cell.trim();
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(CliError::input(
                    field,
                    format!("line {no}, column {}: `{cell}` is not a finite number", col + 1),
                )),
            }
        })
        .collect()
}

/// `identity` or a path to a `p×p` matrix.
pub fn read_penalty(spec: &str, p: usize) -> CliResult<DMatrix<f64>> {
    if spec == "identity" {
        return Ok(DMatrix::identity(p, p));
    }
    let k = read_matrix(Path::new(spec), "--penalty")?;
    if k.shape() != (p, p) {
        return Err(CliError::input(
            "--penalty",
            format!("expected a {p}x{p} matrix to match --design, found {}x{}", k.nrows(), k.ncols()),
        ));
    }
    Ok(k)
}

/// Comma list, or `geom:<min>:<max>:<count>` for a geometric grid.
pub fn parse_lambdas(spec: &str) -> CliResult<Vec<f64>> {
    let field = "--lambdas";
    if let Some(rest) = spec.strip_prefix("geom:") {
        let parts: Vec<&str> = rest.split(':').collect();
        let [min, max, count] = parts[..] else {
            return Err(CliError::input(field, "expected geom:<min>:<max>:<count>"));
        };
        let num = |s: &str, what: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::input(field, format!("{what} `{s}` is not a number")))
        };
        let count = count
            .trim()
            .parse::<usize>()
            .map_err(|_| CliError::input(field, format!("count `{count}` is not a positive integer")))?;
        let grid = GridSpec {
            min: num(min, "min")?,
            max: num(max, "max")?,
            count,
            relative: false,
        };
        grid.validate().map_err(|e| CliError::input(field, e))?;
        return Ok(grid.values(1.0));
    }
    spec.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::input(field, format!("`{}` is not a number", s.trim())))
        })
        .collect()
}
