//! The dual-side sparse format: (N,M,V) sub-row sparsity composed with 2:4
//! element sparsity on weights, and selection-array column sparsity on
//! activations.
//!
//! A `rows x cols` weight is cut into `M x V` blocks. Per block only N
//! sub-rows (1 x V vectors) are retained; each retained sub-row stores 2 of
//! every aligned 4 elements. The encoding is three matrices:
//!
//! | component | shape                  | content                             |
//! |-----------|------------------------|-------------------------------------|
//! | data      | rows*N/M x cols/2      | retained scalars, compacted         |
//! | indices   | rows*N/M x cols/V      | which sub-row each slot holds       |
//! | metadata  | rows*N/M x cols/2      | 2-bit in-group positions, pairwise  |
//!
//! Storage row `r` is slot `r % N` of block-row group `r / N`. The sub-row a
//! slot holds may differ per block column; `indices[r][b]` names it. Within a
//! group and block column the N recorded indices are strictly increasing.
//!
//! Each SpTC unit (aligned group of 4 original columns) stores exactly two
//! scalars and two strictly increasing 2-bit positions. Units with fewer than
//! two non-zeros pad positions from the smallest unused in-group index and
//! store 0.0 in the padded slot, so decoding stays exact.

mod metadata;
mod serial;

pub use metadata::{pack_metadata, unpack_metadata};
pub use serial::{deserialize, serialize, HEADER_LEN, MAGIC};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use std::fmt;

/// The (N, M, V) structured-sparsity parameters. The element-level pattern is
/// always 2:4.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SparseFormatConfig {
    /// Retained sub-rows per block.
    pub n: u16,
    /// Sub-rows per block.
    pub m: u16,
    /// Sub-row length in elements; a whole number of SpTC units.
    pub v: u16,
}

impl SparseFormatConfig {
    /// Element-level pattern; fixed by the SpTC instruction contract.
    pub const ELEMENT_PATTERN: &'static str = "2:4";

    /// Supported presets: (1,2,16), (1,2,32), (4,8,32), (8,16,32).
    pub const PRESETS: [SparseFormatConfig; 4] = [
        SparseFormatConfig { n: 1, m: 2, v: 16 },
        SparseFormatConfig { n: 1, m: 2, v: 32 },
        SparseFormatConfig { n: 4, m: 8, v: 32 },
        SparseFormatConfig { n: 8, m: 16, v: 32 },
    ];

    /// Validated constructor: requires `1 <= n <= m`, `m <= 256` (indices
    /// serialize as one byte), and `v` a positive multiple of 4.
    pub fn new(n: u16, m: u16, v: u16) -> Result<Self> {
        if n == 0 || m == 0 || n > m {
            return Err(Error::Pattern(format!(
                "need 1 <= n <= m, got n={n}, m={m}"
            )));
        }
        if m > 256 {
            return Err(Error::Pattern(format!("m={m} exceeds index byte range")));
        }
        if v == 0 || v % 4 != 0 {
            return Err(Error::Pattern(format!(
                "v={v} must be a positive multiple of 4"
            )));
        }
        Ok(SparseFormatConfig { n, m, v })
    }

    /// Effective weight sparsity ratio, `1 - (n/m) * 1/2`.
    pub fn sparsity(&self) -> f64 {
        1.0 - (self.n as f64 / self.m as f64) * 0.5
    }

    /// Fraction of sub-rows retained, `n/m`.
    pub fn subrow_density(&self) -> f64 {
        self.n as f64 / self.m as f64
    }

    /// Checks that a `rows x cols` matrix is block-divisible.
    pub fn check_shape(&self, rows: usize, cols: usize) -> Result<()> {
        if rows % self.m as usize != 0 {
            return Err(Error::Shape(format!(
                "rows={rows} not divisible by m={}",
                self.m
            )));
        }
        if cols % self.v as usize != 0 {
            return Err(Error::Shape(format!(
                "cols={cols} not divisible by v={}",
                self.v
            )));
        }
        Ok(())
    }
}

impl fmt::Display for SparseFormatConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.n, self.m, self.v)
    }
}

/// A weight matrix encoded in the dual-side sparse format.
///
/// Fields are public for inspection; constructing by hand bypasses invariant
/// checks, so run [`validate_weight`] on anything not produced by
/// [`encode_weight`] or [`deserialize`].
#[derive(Debug, Clone, PartialEq)]
pub struct SamoyedsWeight {
    /// Row count of the decoded matrix.
    pub rows: usize,
    /// Column count of the decoded matrix.
    pub cols: usize,
    pub config: SparseFormatConfig,
    /// Retained scalars, `storage_rows x cols/2`, row-major.
    pub data: Vec<f32>,
    /// Sub-row index per (slot, block column), `storage_rows x cols/v`.
    pub indices: Vec<u8>,
    /// 2-bit position codes, one per stored scalar, `storage_rows x cols/2`.
    pub metadata: Vec<u8>,
}

impl SamoyedsWeight {
    /// Rows of the compressed data/metadata matrices: `rows * n / m`.
    #[inline]
    pub fn storage_rows(&self) -> usize {
        self.rows / self.config.m as usize * self.config.n as usize
    }

    /// Columns of the data/metadata matrices: `cols / 2`.
    #[inline]
    pub fn data_cols(&self) -> usize {
        self.cols / 2
    }

    /// Columns of the indices matrix: `cols / v`.
    #[inline]
    pub fn block_cols(&self) -> usize {
        self.cols / self.config.v as usize
    }

    /// Sub-row index stored at (slot row, block column).
    #[inline]
    pub fn index_at(&self, slot_row: usize, block_col: usize) -> u8 {
        self.indices[slot_row * self.block_cols() + block_col]
    }
}

/// Activation matrix with a selection array marking participating columns.
///
/// Logically `k x total_cols`; storage is transposed so that `data` row `i`
/// is the full column `sel[i]`, contiguous along the reduction dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectedInput {
    /// Row count of the logical matrix (reduction dimension).
    pub k: usize,
    /// Logical column count before selection.
    pub total_cols: usize,
    /// Participating column ids, strictly increasing.
    pub sel: Vec<usize>,
    /// `sel.len() x k`, row-major; row `i` holds logical column `sel[i]`.
    pub data: Vec<f32>,
}

impl SelectedInput {
    /// Stored column `i` (logical column `sel[i]`).
    #[inline]
    pub fn column(&self, i: usize) -> &[f32] {
        &self.data[i * self.k..(i + 1) * self.k]
    }

    /// Builds a selection directly from a `tokens x k` row-major matrix whose
    /// rows are already the transposed columns (the natural token layout).
    pub fn from_token_rows(tokens: &DenseMatrix, sel: &[usize]) -> Result<Self> {
        check_selection(sel, tokens.rows)?;
        let k = tokens.cols;
        let mut data = Vec::with_capacity(sel.len() * k);
        for &t in sel {
            data.extend_from_slice(tokens.row(t));
        }
        Ok(SelectedInput {
            k,
            total_cols: tokens.rows,
            sel: sel.to_vec(),
            data,
        })
    }

    /// Expands to the logical `k x total_cols` dense matrix; dropped columns
    /// are zero.
    pub fn expand_columns(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.k, self.total_cols);
        for (i, &c) in self.sel.iter().enumerate() {
            let col = self.column(i);
            for r in 0..self.k {
                out.set(r, c, col[r]);
            }
        }
        out
    }

    /// Expands to a `total_cols x k` dense matrix (row per logical column);
    /// dropped rows are zero.
    pub fn expand_rows(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.total_cols, self.k);
        for (i, &c) in self.sel.iter().enumerate() {
            out.row_mut(c).copy_from_slice(self.column(i));
        }
        out
    }
}

fn check_selection(sel: &[usize], limit: usize) -> Result<()> {
    for (i, &s) in sel.iter().enumerate() {
        if s >= limit {
            return Err(Error::Selection(format!(
                "sel[{i}] = {s} out of range (limit {limit})"
            )));
        }
        if i > 0 && sel[i - 1] >= s {
            return Err(Error::Selection(format!(
                "sel not strictly increasing at position {i}"
            )));
        }
    }
    Ok(())
}

/// Extracts the columns named by `sel` from a logical `k x cols` matrix into
/// the transposed [`SelectedInput`] storage.
pub fn compress_input(x: &DenseMatrix, sel: &[usize]) -> Result<SelectedInput> {
    check_selection(sel, x.cols)?;
    let mut data = Vec::with_capacity(sel.len() * x.rows);
    for &c in sel {
        for r in 0..x.rows {
            data.push(x.get(r, c));
        }
    }
    Ok(SelectedInput {
        k: x.rows,
        total_cols: x.cols,
        sel: sel.to_vec(),
        data,
    })
}

/// Encodes a pattern-conforming dense weight into the three-component form.
///
/// The matrix must already satisfy the (n,m,v)+2:4 pattern: at most `n`
/// sub-rows with non-zeros per block, at most 2 non-zeros per aligned group
/// of 4 inside them. Retained sub-rows are exactly those containing any
/// non-zero; remaining slots are filled with the lowest unused indices.
pub fn encode_weight(w: &DenseMatrix, cfg: &SparseFormatConfig) -> Result<SamoyedsWeight> {
    cfg.check_shape(w.rows, w.cols)?;
    let (n, m, v) = (cfg.n as usize, cfg.m as usize, cfg.v as usize);
    let groups = w.rows / m;
    let block_cols = w.cols / v;
    let storage_rows = groups * n;
    let data_cols = w.cols / 2;

    let mut data = vec![0.0f32; storage_rows * data_cols];
    let mut indices = vec![0u8; storage_rows * block_cols];
    let mut metadata = vec![0u8; storage_rows * data_cols];

    for g in 0..groups {
        for b in 0..block_cols {
            // Sub-rows with any non-zero must be retained.
            let mut retained: Vec<usize> = Vec::with_capacity(n);
            for sub in 0..m {
                let row = w.row(g * m + sub);
                if row[b * v..(b + 1) * v].iter().any(|x| *x != 0.0) {
                    retained.push(sub);
                }
            }
            if retained.len() > n {
                return Err(Error::Pattern(format!(
                    "block (group {g}, block column {b}) has {} non-zero sub-rows, pattern allows {n}",
                    retained.len()
                )));
            }
            // Fill remaining slots with the lowest indices not already used.
            let mut fill = 0usize;
            while retained.len() < n {
                if !retained.contains(&fill) {
                    retained.push(fill);
                }
                fill += 1;
            }
            retained.sort_unstable();

            for (slot, &sub) in retained.iter().enumerate() {
                let sr = g * n + slot;
                indices[sr * block_cols + b] = sub as u8;
                let row = w.row(g * m + sub);
                for u in 0..v / 4 {
                    let base = b * v + 4 * u;
                    let quad = &row[base..base + 4];
                    let mut pos: Vec<usize> =
                        (0..4).filter(|&p| quad[p] != 0.0).collect();
                    if pos.len() > 2 {
                        return Err(Error::Pattern(format!(
                            "unit at row {}, columns {base}..{} has {} non-zeros, 2:4 allows 2",
                            g * m + sub,
                            base + 4,
                            pos.len()
                        )));
                    }
                    let mut pad = 0usize;
                    while pos.len() < 2 {
                        if !pos.contains(&pad) {
                            pos.push(pad);
                        }
                        pad += 1;
                    }
                    pos.sort_unstable();
                    let dc = b * v / 2 + 2 * u;
                    data[sr * data_cols + dc] = quad[pos[0]];
                    data[sr * data_cols + dc + 1] = quad[pos[1]];
                    metadata[sr * data_cols + dc] = pos[0] as u8;
                    metadata[sr * data_cols + dc + 1] = pos[1] as u8;
                }
            }
        }
    }

    Ok(SamoyedsWeight {
        rows: w.rows,
        cols: w.cols,
        config: *cfg,
        data,
        indices,
        metadata,
    })
}

/// Reconstructs the dense matrix an encoding represents.
pub fn decode_weight(sw: &SamoyedsWeight) -> Result<DenseMatrix> {
    let violations = validate_weight(sw);
    if let Some(v) = violations.first() {
        return Err(Error::CorruptFormat(v.to_string()));
    }
    let (n, m, v) = (
        sw.config.n as usize,
        sw.config.m as usize,
        sw.config.v as usize,
    );
    let block_cols = sw.block_cols();
    let data_cols = sw.data_cols();
    let mut out = DenseMatrix::zeros(sw.rows, sw.cols);
    for sr in 0..sw.storage_rows() {
        let g = sr / n;
        for b in 0..block_cols {
            let sub = sw.indices[sr * block_cols + b] as usize;
            let orow = g * m + sub;
            for u in 0..v / 4 {
                let dc = b * v / 2 + 2 * u;
                for t in 0..2 {
                    let pos = sw.metadata[sr * data_cols + dc + t] as usize;
                    let val = sw.data[sr * data_cols + dc + t];
                    out.set(orow, b * v + 4 * u + pos, val);
                }
            }
        }
    }
    Ok(out)
}

/// One invariant violation found by [`validate_weight`], naming the block or
/// unit where it occurs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    Shape { what: String },
    IndexOutOfRange { slot_row: usize, block_col: usize, index: u8 },
    IndicesNotIncreasing { group: usize, block_col: usize },
    MetadataCodeOutOfRange { slot_row: usize, unit: usize, code: u8 },
    MetadataNotIncreasing { slot_row: usize, unit: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Shape { what } => write!(f, "shape: {what}"),
            Violation::IndexOutOfRange {
                slot_row,
                block_col,
                index,
            } => write!(
                f,
                "indices[{slot_row}][{block_col}] = {index} out of range"
            ),
            Violation::IndicesNotIncreasing { group, block_col } => write!(
                f,
                "indices not strictly increasing in block (group {group}, block column {block_col})"
            ),
            Violation::MetadataCodeOutOfRange {
                slot_row,
                unit,
                code,
            } => write!(
                f,
                "metadata code {code} out of range in unit {unit} of storage row {slot_row}"
            ),
            Violation::MetadataNotIncreasing { slot_row, unit } => write!(
                f,
                "metadata pair not strictly increasing in unit {unit} of storage row {slot_row}"
            ),
        }
    }
}

/// Checks every structural invariant of an encoding. Returns an empty list
/// iff the encoding is well formed; violations are data, not failures.
pub fn validate_weight(sw: &SamoyedsWeight) -> Vec<Violation> {
    let mut out = Vec::new();
    let (n, m, v) = (
        sw.config.n as usize,
        sw.config.m as usize,
        sw.config.v as usize,
    );
    if n == 0 || n > m || v == 0 || v % 4 != 0 {
        out.push(Violation::Shape {
            what: format!("invalid config {}", sw.config),
        });
        return out;
    }
    if sw.rows % m != 0 || sw.cols % v != 0 {
        out.push(Violation::Shape {
            what: format!(
                "{}x{} not divisible by (m={m}, v={v})",
                sw.rows, sw.cols
            ),
        });
        return out;
    }
    let storage_rows = sw.storage_rows();
    let data_cols = sw.data_cols();
    let block_cols = sw.block_cols();
    if sw.data.len() != storage_rows * data_cols {
        out.push(Violation::Shape {
            what: format!(
                "data length {} != {}x{}",
                sw.data.len(),
                storage_rows,
                data_cols
            ),
        });
        return out;
    }
    if sw.indices.len() != storage_rows * block_cols {
        out.push(Violation::Shape {
            what: format!(
                "indices length {} != {}x{}",
                sw.indices.len(),
                storage_rows,
                block_cols
            ),
        });
        return out;
    }
    if sw.metadata.len() != storage_rows * data_cols {
        out.push(Violation::Shape {
            what: format!(
                "metadata length {} != {}x{}",
                sw.metadata.len(),
                storage_rows,
                data_cols
            ),
        });
        return out;
    }

    for sr in 0..storage_rows {
        for b in 0..block_cols {
            let idx = sw.indices[sr * block_cols + b];
            if idx as usize >= m {
                out.push(Violation::IndexOutOfRange {
                    slot_row: sr,
                    block_col: b,
                    index: idx,
                });
            }
        }
    }
    for g in 0..storage_rows / n {
        for b in 0..block_cols {
            let increasing = (1..n).all(|s| {
                sw.indices[(g * n + s - 1) * block_cols + b]
                    < sw.indices[(g * n + s) * block_cols + b]
            });
            if !increasing {
                out.push(Violation::IndicesNotIncreasing { group: g, block_col: b });
            }
        }
    }
    for sr in 0..storage_rows {
        for unit in 0..data_cols / 2 {
            let lo = sw.metadata[sr * data_cols + 2 * unit];
            let hi = sw.metadata[sr * data_cols + 2 * unit + 1];
            for code in [lo, hi] {
                if code >= 4 {
                    out.push(Violation::MetadataCodeOutOfRange {
                        slot_row: sr,
                        unit,
                        code,
                    });
                }
            }
            if lo >= hi {
                out.push(Violation::MetadataNotIncreasing { slot_row: sr, unit });
            }
        }
    }
    out
}

/// Closed-form storage cost of one encoded weight versus dense f32, derived
/// from the serialization layout (header excluded).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FootprintReport {
    pub dense_bytes: u64,
    pub data_bytes: u64,
    pub indices_bytes: u64,
    pub metadata_bytes: u64,
    /// (data + indices + metadata) / dense.
    pub ratio: f64,
}

impl FootprintReport {
    pub fn total_bytes(&self) -> u64 {
        self.data_bytes + self.indices_bytes + self.metadata_bytes
    }
}

/// Computes the [`FootprintReport`] for a `rows x cols` weight under `cfg`.
pub fn memory_footprint(rows: usize, cols: usize, cfg: &SparseFormatConfig) -> FootprintReport {
    let storage_rows = (rows as u64) * cfg.n as u64 / cfg.m as u64;
    let dense_bytes = rows as u64 * cols as u64 * 4;
    let data_bytes = storage_rows * (cols as u64 / 2) * 4;
    let indices_bytes = storage_rows * (cols as u64 / cfg.v as u64);
    let metadata_codes = storage_rows * (cols as u64 / 2);
    let metadata_bytes = metadata_codes.div_ceil(4);
    let total = data_bytes + indices_bytes + metadata_bytes;
    FootprintReport {
        dense_bytes,
        data_bytes,
        indices_bytes,
        metadata_bytes,
        ratio: total as f64 / dense_bytes as f64,
    }
}
