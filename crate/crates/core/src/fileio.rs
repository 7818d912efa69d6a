//! Text formats used by the command line: dense matrices, observation
//! masks, and measurement values.
//!
//! Matrix files start with a `rows cols` line followed by one line per
//! row of space-separated decimal reals. Mask files start with an `n p`
//! line followed by one `row col` pair per line (0-based). Values files
//! hold one real per mask line.

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

pub fn write_matrix_text(x: &DenseMatrix) -> String {
    let mut out = format!("{} {}\n", x.rows(), x.cols());
    for i in 0..x.rows() {
        for j in 0..x.cols() {
            if j > 0 {
                out.push(' ');
            }
            out.push_str(&format!("{}", x.get(i, j)));
        }
        out.push('\n');
    }
    out
}

pub fn read_matrix_text(text: &str) -> Result<DenseMatrix> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::Format("empty matrix file".into()))?;
    let (rows, cols) = parse_pair(header, "rows cols")?;
    let mut data = Vec::with_capacity(rows * cols);
    for (idx, line) in lines.enumerate() {
        if idx >= rows {
            return Err(Error::Format(format!("expected {rows} data rows, found more")));
        }
        let mut count = 0usize;
        for tok in line.split_ascii_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::Format(format!("invalid real '{tok}' on row {idx}")))?;
            data.push(v);
            count += 1;
        }
        if count != cols {
            return Err(Error::Format(format!(
                "row {idx} has {count} entries, expected {cols}"
            )));
        }
    }
    if data.len() != rows * cols {
        return Err(Error::Format(format!(
            "expected {rows} data rows, found {}",
            data.len() / cols.max(1)
        )));
    }
    DenseMatrix::from_row_major(rows, cols, &data)
        .map_err(|e| Error::Format(format!("invalid matrix data: {e}")))
}

pub fn write_mask_text(n: usize, p: usize, mask: &[(usize, usize)]) -> String {
    let mut out = format!("{n} {p}\n");
    for &(i, j) in mask {
        out.push_str(&format!("{i} {j}\n"));
    }
    out
}

pub fn read_mask_text(text: &str) -> Result<(usize, usize, Vec<(usize, usize)>)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::Format("empty mask file".into()))?;
    let (n, p) = parse_pair(header, "n p")?;
    let mut mask = Vec::new();
    for line in lines {
        let (i, j) = parse_pair(line, "row col")?;
        if i >= n || j >= p {
            return Err(Error::Format(format!("mask entry ({i}, {j}) out of range for {n}x{p}")));
        }
        mask.push((i, j));
    }
    if mask.is_empty() {
        return Err(Error::Format("mask file lists no observed entries".into()));
    }
    Ok((n, p, mask))
}

pub fn read_values_text(text: &str) -> Result<Vec<f64>> {
    let mut values = Vec::new();
    for line in text.lines() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        values.push(
            t.parse::<f64>()
                .map_err(|_| Error::Format(format!("invalid real '{t}' in values file")))?,
        );
    }
    if values.is_empty() {
        return Err(Error::Format("values file is empty".into()));
    }
    Ok(values)
}

fn parse_pair(line: &str, what: &str) -> Result<(usize, usize)> {
    let mut it = line.split_ascii_whitespace();
    let a = it
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::Format(format!("expected '{what}' line, got '{line}'")))?;
    let b = it
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::Format(format!("expected '{what}' line, got '{line}'")))?;
    if it.next().is_some() {
        return Err(Error::Format(format!("expected '{what}' line, got '{line}'")));
    }
    Ok((a, b))
}
