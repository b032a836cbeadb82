//! Text and binary matrix files.
//!
//! Text: a header line `m n`, then `m` lines of `n` whitespace-separated decimals.
//! Binary: little-endian `u64` m, `u64` n, then `m*n` little-endian `f64` in row-major order.

use std::fs;
use std::io::{BufRead, Read, Write};
use std::path::Path;

use super::DenseMatrix;
use crate::error::{Error, Result};

pub fn write_matrix_text<W: Write>(mut w: W, a: &DenseMatrix) -> Result<()> {
    writeln!(w, "{} {}", a.rows(), a.cols())?;
    for i in 0..a.rows() {
        let mut first = true;
        for v in a.row(i) {
            if !first {
                w.write_all(b" ")?;
            }
            first = false;
            // `{:?}` prints the shortest string that round-trips exactly.
            write!(w, "{v:?}")?;
        }
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_matrix_text<R: BufRead>(r: R) -> Result<DenseMatrix> {
    let mut lines = r.lines().enumerate().filter(|(_, l)| match l {
        Ok(s) => !s.trim().is_empty(),
        Err(_) => true,
    });
    let (hline, header) = lines
        .next()
        .ok_or(Error::Parse { line: 1, msg: "missing header".into() })?;
    let header = header?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Parse { line: hline + 1, msg: format!("bad header: {e}") })?;
    let [m, n] = dims[..] else {
        return Err(Error::Parse { line: hline + 1, msg: "header must be `m n`".into() });
    };
    let mut data = Vec::with_capacity(m * n);
    for _ in 0..m {
        let (ln, line) = lines
            .next()
            .ok_or(Error::Parse { line: hline + 2, msg: format!("expected {m} rows") })?;
        let line = line?;
        let before = data.len();
        for tok in line.split_whitespace() {
            let v = tok
                .parse::<f64>()
                .map_err(|e| Error::Parse { line: ln + 1, msg: format!("{tok:?}: {e}") })?;
            data.push(v);
        }
        if data.len() - before != n {
            return Err(Error::Parse {
                line: ln + 1,
                msg: format!("expected {n} values, found {}", data.len() - before),
            });
        }
    }
    if let Some((ln, _)) = lines.next() {
        return Err(Error::Parse { line: ln + 1, msg: "trailing data after last row".into() });
    }
    DenseMatrix::from_vec(m, n, data)
}

pub fn write_matrix_binary<W: Write>(mut w: W, a: &DenseMatrix) -> Result<()> {
    w.write_all(&(a.rows() as u64).to_le_bytes())?;
    w.write_all(&(a.cols() as u64).to_le_bytes())?;
    for v in a.as_slice() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_matrix_binary<R: Read>(mut r: R) -> Result<DenseMatrix> {
    let mut word = [0u8; 8];
    let mut next_u64 = |r: &mut R, what: &str| -> Result<u64> {
        r.read_exact(&mut word)
            .map_err(|e| Error::Parse { line: 0, msg: format!("reading {what}: {e}") })?;
        Ok(u64::from_le_bytes(word))
    };
    let m = next_u64(&mut r, "row count")? as usize;
    let n = next_u64(&mut r, "column count")? as usize;
    let len = m
        .checked_mul(n)
        .ok_or_else(|| Error::Parse { line: 0, msg: format!("{m}x{n} overflows") })?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != len * 8 {
        return Err(Error::Parse {
            line: 0,
            msg: format!("expected {} payload bytes, found {}", len * 8, bytes.len()),
        });
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    DenseMatrix::from_vec(m, n, data)
}

/// Reads either format. A file whose first 16 bytes contain a NUL byte is
/// treated as binary (the high bytes of a realistic `u64` dimension are zero).
pub fn read_matrix(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    let bytes = fs::read(path)?;
    if bytes.iter().take(16).any(|&b| b == 0) {
        read_matrix_binary(&bytes[..])
    } else {
        read_matrix_text(&bytes[..])
    }
}
