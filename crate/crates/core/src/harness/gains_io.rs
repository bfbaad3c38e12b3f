//! Plain-text persistence of the controller gain matrix.
//!
//! Format: a header line `gains <agents> <n> <m>`, then the `(N·m)×(N·n)`
//! matrix row by row, whitespace-separated, 17 significant digits.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::control::GainSet;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

use super::trace::fmt_float;

pub fn write_gains<W: Write>(mut out: W, gains: &GainSet<f64>) -> Result<()> {
    writeln!(out, "gains {} {} {}", gains.agents(), gains.n, gains.m)?;
    for r in 0..gains.f.nrows() {
        let row: Vec<String> = gains.f.row(r).iter().map(|v| fmt_float(*v)).collect();
        writeln!(out, "{}", row.join(" "))?;
    }
    Ok(())
}

pub fn read_gains<R: BufRead>(input: R) -> Result<GainSet<f64>> {
    let mut lines = input.lines();
    let head = lines.next().ok_or_else(|| Error::Parse("empty gains file".into()))??;
    let dims: Vec<usize> = match head.split_whitespace().collect::<Vec<_>>().as_slice() {
        ["gains", rest @ ..] if rest.len() == 3 => rest
            .iter()
            .map(|s| s.parse().map_err(|_| Error::Parse(format!("bad dimension `{s}`"))))
            .collect::<Result<_>>()?,
        _ => {
            return Err(Error::Parse(
                "gains file must start with `gains <agents> <n> <m>`".into(),
            ))
        }
    };
    let (agents, n, m) = (dims[0], dims[1], dims[2]);
    let (rows, cols) = (agents * m, agents * n);
    let mut values = Vec::with_capacity(rows * cols);
    for (r, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|s| {
                s.parse()
                    .map_err(|_| Error::Parse(format!("row {r}: bad number `{s}`")))
            })
            .collect::<Result<_>>()?;
        if row.len() != cols {
            return Err(Error::dimension("gains row", cols, row.len()));
        }
        values.extend(row);
    }
    if values.len() != rows * cols {
        return Err(Error::dimension("gains rows", rows, values.len() / cols.max(1)));
    }
    GainSet::from_matrix(Matrix::from_row_slice(rows, cols, &values), agents, n, m)
}

pub fn write_gains_file(path: &Path, gains: &GainSet<f64>) -> Result<()> {
    write_gains(std::io::BufWriter::new(std::fs::File::create(path)?), gains)
}

pub fn read_gains_file(path: &Path) -> Result<GainSet<f64>> {
    read_gains(std::io::BufReader::new(std::fs::File::open(path)?))
}
