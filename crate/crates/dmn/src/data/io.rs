//! Dataset file formats.
//!
//! Text (`dmn-data v1`):
//!
//! ```text
//! dmn-data v1
//! vars 2
//! X 2
//! Y 2
//! rows 2
//! 0 0 5
//! 1 1 5
//! ```
//!
//! Binary: the same header lines, then `rows` fixed-width records of one
//! byte per variable (cardinalities above 256 are rejected) followed by the
//! count as an unsigned 64-bit little-endian integer scaled by 10^6, which
//! carries fractional expected counts at microunit resolution.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use super::{DataError, FrequencyTable, Scheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    Text,
    Binary,
}

const COUNT_SCALE: f64 = 1_000_000.0;

pub fn write_dataset(
    table: &FrequencyTable,
    path: &Path,
    format: DatasetFormat,
) -> Result<(), DataError> {
    let bytes = match format {
        DatasetFormat::Text => to_text(table).into_bytes(),
        DatasetFormat::Binary => to_binary(table)?,
    };
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_dataset(path: &Path, format: DatasetFormat) -> Result<FrequencyTable, DataError> {
    match format {
        DatasetFormat::Text => from_text(&fs::read_to_string(path)?),
        DatasetFormat::Binary => from_binary(&fs::read(path)?),
    }
}

pub fn to_text(table: &FrequencyTable) -> String {
    let mut out = String::new();
    out.push_str("dmn-data v1\n");
    push_header(&mut out, table.scheme(), table.row_count());
    for (config, count) in table.rows() {
        for v in config {
            out.push_str(&v.to_string());
            out.push(' ');
        }
        out.push_str(&count.to_string());
        out.push('\n');
    }
    out
}

fn push_header(out: &mut String, scheme: &Scheme, rows: usize) {
    out.push_str(&format!("vars {}\n", scheme.len()));
    for (name, card) in scheme.variables() {
        out.push_str(&format!("{name} {card}\n"));
    }
    out.push_str(&format!("rows {rows}\n"));
}

struct Lines<'a> {
    inner: std::str::Lines<'a>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Lines {
            inner: text.lines(),
            line: 0,
        }
    }

    fn next(&mut self) -> Result<&'a str, DataError> {
        self.line += 1;
        self.inner.next().ok_or(DataError::Parse {
            line: self.line,
            message: "unexpected end of file".into(),
        })
    }

    fn err(&self, message: impl Into<String>) -> DataError {
        DataError::Parse {
            line: self.line,
            message: message.into(),
        }
    }
}

/// Parses the shared header; returns the scheme and the declared row count.
fn parse_header(lines: &mut Lines<'_>) -> Result<(Scheme, usize), DataError> {
    let magic = lines.next()?;
    if magic.trim() != "dmn-data v1" {
        return Err(lines.err("expected `dmn-data v1`"));
    }
    let vars_line = lines.next()?;
    let k: usize = match vars_line.trim().strip_prefix("vars ") {
        Some(rest) => rest
            .trim()
            .parse()
            .map_err(|_| lines.err("bad variable count"))?,
        None => return Err(lines.err("expected `vars <k>`")),
    };
    let mut vars = Vec::with_capacity(k);
    for _ in 0..k {
        let line = lines.next()?;
        let mut parts = line.split_whitespace();
        let name = parts.next().ok_or_else(|| lines.err("missing name"))?;
        let card: u32 = parts
            .next()
            .ok_or_else(|| lines.err("missing cardinality"))?
            .parse()
            .map_err(|_| lines.err("bad cardinality"))?;
        if parts.next().is_some() {
            return Err(lines.err("trailing tokens after cardinality"));
        }
        vars.push((name.to_string(), card));
    }
    let rows_line = lines.next()?;
    let rows: usize = match rows_line.trim().strip_prefix("rows ") {
        Some(rest) => rest.trim().parse().map_err(|_| lines.err("bad row count"))?,
        None => return Err(lines.err("expected `rows <r>`")),
    };
    Ok((Scheme::new(vars)?, rows))
}

pub fn from_text(text: &str) -> Result<FrequencyTable, DataError> {
    let mut lines = Lines::new(text);
    let (scheme, row_count) = parse_header(&mut lines)?;
    let scheme = Arc::new(scheme);
    let mut rows = Vec::with_capacity(row_count);
    for _ in 0..row_count {
        let line = lines.next()?;
        let mut parts = line.split_whitespace();
        let mut config = Vec::with_capacity(scheme.len());
        for _ in 0..scheme.len() {
            let v: u32 = parts
                .next()
                .ok_or_else(|| lines.err("missing value index"))?
                .parse()
                .map_err(|_| lines.err("bad value index"))?;
            config.push(v);
        }
        let count: f64 = parts
            .next()
            .ok_or_else(|| lines.err("missing count"))?
            .parse()
            .map_err(|_| lines.err("bad count"))?;
        if parts.next().is_some() {
            return Err(lines.err("trailing tokens after count"));
        }
        rows.push((config, count));
    }
    FrequencyTable::from_rows(scheme, rows)
}

pub fn to_binary(table: &FrequencyTable) -> Result<Vec<u8>, DataError> {
    let scheme = table.scheme();
    for (name, card) in scheme.variables() {
        let _ = name;
        if card > 256 {
            return Err(DataError::CardinalityTooLargeForBinary(card));
        }
    }
    let mut out = String::new();
    out.push_str("dmn-data v1\n");
    push_header(&mut out, scheme, table.row_count());
    let mut bytes = out.into_bytes();
    for (config, count) in table.rows() {
        for &v in config {
            bytes.push(v as u8);
        }
        let scaled = count * COUNT_SCALE;
        if !(scaled.is_finite() && scaled < u64::MAX as f64) {
            return Err(DataError::CountOverflow(count));
        }
        bytes.extend_from_slice(&(scaled.round() as u64).to_le_bytes());
    }
    Ok(bytes)
}

pub fn from_binary(bytes: &[u8]) -> Result<FrequencyTable, DataError> {
    // Header is text: find its end by consuming `3 + vars` newlines.
    let header_end = {
        let mut newlines_needed = None;
        let mut seen = 0usize;
        let mut end = None;
        for (i, &b) in bytes.iter().enumerate() {
            if b != b'\n' {
                continue;
            }
            seen += 1;
            if seen == 2 {
                let text = std::str::from_utf8(&bytes[..i]).map_err(|_| DataError::Parse {
                    line: 1,
                    message: "header is not UTF-8".into(),
                })?;
                let vars_line = text.lines().nth(1).unwrap_or("");
                let k: usize = vars_line
                    .trim()
                    .strip_prefix("vars ")
                    .and_then(|r| r.trim().parse().ok())
                    .ok_or(DataError::Parse {
                        line: 2,
                        message: "expected `vars <k>`".into(),
                    })?;
                newlines_needed = Some(3 + k);
            }
            if let Some(n) = newlines_needed {
                if seen == n {
                    end = Some(i + 1);
                    break;
                }
            }
        }
        end.ok_or(DataError::Parse {
            line: 1,
            message: "truncated header".into(),
        })?
    };
    let header_text = std::str::from_utf8(&bytes[..header_end]).map_err(|_| DataError::Parse {
        line: 1,
        message: "header is not UTF-8".into(),
    })?;
    let mut lines = Lines::new(header_text);
    let (scheme, row_count) = parse_header(&mut lines)?;
    for (_, card) in scheme.variables() {
        if card > 256 {
            return Err(DataError::CardinalityTooLargeForBinary(card));
        }
    }
    let scheme = Arc::new(scheme);
    let record = scheme.len() + 8;
    let body = &bytes[header_end..];
    if body.len() != record * row_count {
        return Err(DataError::Parse {
            line: 0,
            message: format!(
                "binary body is {} bytes; expected {} ({} records of {})",
                body.len(),
                record * row_count,
                row_count,
                record
            ),
        });
    }
    let mut rows = Vec::with_capacity(row_count);
    for chunk in body.chunks_exact(record) {
        let config: Vec<u32> = chunk[..scheme.len()].iter().map(|&b| b as u32).collect();
        let mut raw = [0u8; 8];
        raw.copy_from_slice(&chunk[scheme.len()..]);
        let count = u64::from_le_bytes(raw) as f64 / COUNT_SCALE;
        rows.push((config, count));
    }
    FrequencyTable::from_rows(scheme, rows)
}
