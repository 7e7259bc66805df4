//! Plain-text matrix dumps for cross-implementation comparison.
//!
//! Format (one file, any number of sections):
//!
//! ```text
//! # heirs matrix dump v1
//! matrix <name> <rows> <cols>
//! <re> <im>        (rows*cols lines, column-major)
//! vector <name> <len>
//! <re> <im>        (len lines)
//! scalar <name> <value>
//! ```

use std::fmt::Write as _;

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec};

pub const HEADER: &str = "# heirs matrix dump v1";

#[derive(Debug, Clone, PartialEq)]
pub enum Entry {
    Matrix(String, CMat),
    Vector(String, CVec),
    Scalar(String, f64),
}

/// Serialize entries to the dump format (floats in round-trippable form).
pub fn write_dump(entries: &[Entry]) -> String {
    let mut out = String::new();
    out.push_str(HEADER);
    out.push('\n');
    for e in entries {
        match e {
            Entry::Matrix(name, m) => {
                let _ = writeln!(out, "matrix {name} {} {}", m.nrows(), m.ncols());
                for j in 0..m.ncols() {
                    for i in 0..m.nrows() {
                        let z = m[(i, j)];
                        let _ = writeln!(out, "{:e} {:e}", z.re, z.im);
                    }
                }
            }
            Entry::Vector(name, v) => {
                let _ = writeln!(out, "vector {name} {}", v.len());
                for z in v.iter() {
                    let _ = writeln!(out, "{:e} {:e}", z.re, z.im);
                }
            }
            Entry::Scalar(name, v) => {
                let _ = writeln!(out, "scalar {name} {v:e}");
            }
        }
    }
    out
}

/// Parse a dump produced by [`write_dump`].
pub fn read_dump(text: &str) -> Result<Vec<Entry>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == HEADER => {}
        other => {
            return Err(Error::DumpFormat(format!(
                "missing header, found {other:?}"
            )))
        }
    }
    let mut entries = Vec::new();
    while let Some(line) = lines.next() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let kind = parts.next().unwrap_or_default();
        let name = parts
            .next()
            .ok_or_else(|| Error::DumpFormat(format!("missing name in {line:?}")))?
            .to_string();
        match kind {
            "matrix" => {
                let rows: usize = parse_field(parts.next(), line)?;
                let cols: usize = parse_field(parts.next(), line)?;
                let mut m = CMat::zeros((rows, cols));
                for j in 0..cols {
                    for i in 0..rows {
                        let (re, im) = parse_complex(lines.next(), &name)?;
                        m[(i, j)] = Complex::new(re, im);
                    }
                }
                entries.push(Entry::Matrix(name, m));
            }
            "vector" => {
                let len: usize = parse_field(parts.next(), line)?;
                let mut v = CVec::zeros(len);
                for i in 0..len {
                    let (re, im) = parse_complex(lines.next(), &name)?;
                    v[i] = Complex::new(re, im);
                }
                entries.push(Entry::Vector(name, v));
            }
            "scalar" => {
                let v: f64 = parse_field(parts.next(), line)?;
                entries.push(Entry::Scalar(name, v));
            }
            other => {
                return Err(Error::DumpFormat(format!("unknown section kind {other:?}")));
            }
        }
    }
    Ok(entries)
}

fn parse_field<T: std::str::FromStr>(field: Option<&str>, line: &str) -> Result<T> {
    field
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::DumpFormat(format!("bad field in {line:?}")))
}

fn parse_complex(line: Option<&str>, name: &str) -> Result<(f64, f64)> {
    let line = line.ok_or_else(|| Error::DumpFormat(format!("truncated section {name}")))?;
    let mut it = line.split_whitespace();
    let re = parse_field(it.next(), line)?;
    let im = parse_field(it.next(), line)?;
    Ok((re, im))
}
