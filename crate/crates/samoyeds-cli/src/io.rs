//! Dense matrix file I/O.
//!
//! Two formats: CSV of floats (one row per line), and raw little-endian f32
//! with a 16-byte header `u32 magic 0x534D594C, u32 rows, u32 cols,
//! u32 reserved`. Readers sniff the magic, so either format can be passed
//! anywhere a matrix is expected.

use anyhow::{bail, Context, Result};
use samoyeds::DenseMatrix;
use std::fs;
use std::path::Path;

/// Raw matrix file magic.
pub const RAW_MAGIC: u32 = 0x534D_594C;

pub fn read_matrix(path: &Path) -> Result<DenseMatrix> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    if bytes.len() >= 4 && u32::from_le_bytes(bytes[..4].try_into().unwrap()) == RAW_MAGIC {
        parse_raw(&bytes).with_context(|| format!("parsing raw matrix {}", path.display()))
    } else {
        parse_csv(&bytes).with_context(|| format!("parsing CSV matrix {}", path.display()))
    }
}

fn parse_raw(bytes: &[u8]) -> Result<DenseMatrix> {
    if bytes.len() < 16 {
        bail!("raw matrix header needs 16 bytes, file has {}", bytes.len());
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let expected = 16 + rows * cols * 4;
    if bytes.len() != expected {
        bail!(
            "raw matrix {}x{} needs {} bytes, file has {}",
            rows,
            cols,
            expected,
            bytes.len()
        );
    }
    let values = bytes[16..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(DenseMatrix::from_vec(rows, cols, values)?)
}

fn parse_csv(bytes: &[u8]) -> Result<DenseMatrix> {
    let text = std::str::from_utf8(bytes).context("matrix file is neither raw nor UTF-8 CSV")?;
    let mut rows: Vec<Vec<f32>> = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: Vec<f32> = line
            .split(',')
            .map(|tok| {
                tok.trim()
                    .parse::<f32>()
                    .with_context(|| format!("line {}: bad float '{}'", ln + 1, tok.trim()))
            })
            .collect::<Result<_>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        bail!("CSV matrix is empty");
    }
    Ok(DenseMatrix::from_rows(&rows)?)
}

pub fn write_matrix_csv(path: &Path, m: &DenseMatrix) -> Result<()> {
    let mut out = String::new();
    for r in 0..m.rows {
        let row: Vec<String> = m.row(r).iter().map(|v| format!("{v}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

pub fn write_matrix_raw(path: &Path, m: &DenseMatrix) -> Result<()> {
    let mut bytes = Vec::with_capacity(16 + m.values.len() * 4);
    bytes.extend_from_slice(&RAW_MAGIC.to_le_bytes());
    bytes.extend_from_slice(&(m.rows as u32).to_le_bytes());
    bytes.extend_from_slice(&(m.cols as u32).to_le_bytes());
    bytes.extend_from_slice(&0u32.to_le_bytes());
    for v in &m.values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}
