//! Text file formats: matrices, support masks, and the float rendering they
//! share.
//!
//! A matrix file holds an optional block of `#` comment lines, a header line
//! `rows cols`, then `rows` lines of `cols` space-separated reals. Reals are
//! rendered in scientific notation with 17 significant digits, enough for
//! parse/render round trips to be bit-exact. A support file lists one
//! zero-based `i j` pair per line. All writers go through a temporary file in
//! the target directory plus an atomic rename.

use std::fs;
use std::io::Write;
use std::path::Path;


use crate::baselines::SupportMask;
use crate::error::{Error, Result};
use crate::matrix::{matrix_from_rows, Matrix};

/// Renders a float with 17 significant digits; `parse::<f64>` recovers the
/// exact bits.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = tempfile::NamedTempFile::new_in(dir.unwrap_or_else(|| Path::new(".")))
        .map_err(|e| Error::io(path, e))?;
    tmp.write_all(contents.as_bytes())
        .map_err(|e| Error::io(path, e))?;
    tmp.persist(path)
        .map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn write_matrix(path: &Path, m: &Matrix) -> Result<()> {
    let (rows, cols) = m.dim();
    let mut out = String::with_capacity(rows * cols * 25 + 16);
    out.push_str(&format!("{rows} {cols}\n"));
    for i in 0..rows {
        for j in 0..cols {
            if j > 0 {
                out.push(' ');
            }
            out.push_str(&format_f64(m[[i, j]]));
        }
        out.push('\n');
    }
    write_atomic(path, &out)
}

pub fn read_matrix(path: &Path) -> Result<Matrix> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text
        .lines()
        .filter(|l| !l.trim_start().starts_with('#') && !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(path, "empty matrix file"))?;
    let mut it = header.split_whitespace();
    let rows: usize = it
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::parse(path, "bad header: expected `rows cols`"))?;
    let cols: usize = it
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::parse(path, "bad header: expected `rows cols`"))?;
    if it.next().is_some() {
        return Err(Error::parse(path, "trailing tokens in header"));
    }
    let mut data = Vec::with_capacity(rows * cols);
    for (r, line) in lines.enumerate() {
        if r >= rows {
            return Err(Error::parse(path, format!("more than {rows} data rows")));
        }
        let before = data.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::parse(path, format!("bad real '{tok}' in row {r}")))?;
            data.push(v);
        }
        if data.len() - before != cols {
            return Err(Error::parse(
                path,
                format!("row {r} has {} entries, expected {cols}", data.len() - before),
            ));
        }
    }
    matrix_from_rows(rows, cols, data).map_err(|e| Error::parse(path, e.to_string()))
}

pub fn write_support(path: &Path, mask: &SupportMask) -> Result<()> {
    let mut out = String::with_capacity(mask.len() * 8);
    for &(i, j) in &mask.observed {
        out.push_str(&format!("{i} {j}\n"));
    }
    write_atomic(path, &out)
}

pub fn read_support(path: &Path, rows: usize, cols: usize) -> Result<SupportMask> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut observed = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        let i: usize = it
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::parse(path, format!("bad index pair at line {}", ln + 1)))?;
        let j: usize = it
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::parse(path, format!("bad index pair at line {}", ln + 1)))?;
        if it.next().is_some() {
            return Err(Error::parse(path, format!("trailing tokens at line {}", ln + 1)));
        }
        observed.push((i, j));
    }
    SupportMask::new(rows, cols, observed).map_err(|e| Error::parse(path, e.to_string()))
}

/// Writes arbitrary text atomically; the CSV emitters build on this.
pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    write_atomic(path, contents)
}
