//! Binary serialization of encoded weights.
//!
//! Fixed little-endian layout:
//!
//! ```text
//! offset  size  field
//! 0       8     magic "SMYDSFMT"
//! 8       2     version (u16) = 1
//! 10      4     rows (u32)
//! 14      4     cols (u32)
//! 18      2     n (u16)
//! 20      2     m (u16)
//! 22      2     v (u16)
//! 24      1     scalar type tag (0 = f32)
//! 25      -     data:     storage_rows * cols/2 f32, row-major
//!         -     indices:  storage_rows * cols/v bytes, row-major
//!         -     metadata: 2-bit codes in packed panel order, 4 per byte
//!                         (LSB first), zero-padded to a whole byte
//! ```
//!
//! Indices occupy one byte per entry even though `ceil(log2 m)` bits would
//! do; the config constructor caps `m` at 256 accordingly.

use super::metadata::{from_stream_order, to_stream_order};
use super::{validate_weight, SamoyedsWeight, SparseFormatConfig};
use crate::error::{Error, Result};

/// Stream magic.
pub const MAGIC: &[u8; 8] = b"SMYDSFMT";
/// Serialized header length in bytes.
pub const HEADER_LEN: usize = 25;

const VERSION: u16 = 1;
const TAG_F32: u8 = 0;

/// Serializes an encoded weight into the fixed byte layout.
pub fn serialize(sw: &SamoyedsWeight) -> Vec<u8> {
    let storage_rows = sw.storage_rows();
    let data_cols = sw.data_cols();
    let meta_bytes = (storage_rows * data_cols).div_ceil(4);
    let total = HEADER_LEN + sw.data.len() * 4 + sw.indices.len() + meta_bytes;
    let mut out = Vec::with_capacity(total);

    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(sw.rows as u32).to_le_bytes());
    out.extend_from_slice(&(sw.cols as u32).to_le_bytes());
    out.extend_from_slice(&sw.config.n.to_le_bytes());
    out.extend_from_slice(&sw.config.m.to_le_bytes());
    out.extend_from_slice(&sw.config.v.to_le_bytes());
    out.push(TAG_F32);

    for v in &sw.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&sw.indices);

    let stream = to_stream_order(&sw.metadata, storage_rows, data_cols);
    for chunk in stream.chunks(4) {
        let mut byte = 0u8;
        for (i, code) in chunk.iter().enumerate() {
            byte |= code << (2 * i);
        }
        out.push(byte);
    }
    debug_assert_eq!(out.len(), total);
    out
}

/// Parses a serialized weight, validating magic, version, layout length, and
/// every structural invariant of the decoded encoding.
pub fn deserialize(bytes: &[u8]) -> Result<SamoyedsWeight> {
    if bytes.len() < HEADER_LEN {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::BadMagic);
        }
        return Err(Error::TruncatedStream {
            expected: HEADER_LEN,
            actual: bytes.len(),
        });
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::BadMagic);
    }
    let version = u16::from_le_bytes([bytes[8], bytes[9]]);
    if version != VERSION {
        return Err(Error::VersionMismatch { found: version });
    }
    let rows = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[14..18].try_into().unwrap()) as usize;
    let n = u16::from_le_bytes([bytes[18], bytes[19]]);
    let m = u16::from_le_bytes([bytes[20], bytes[21]]);
    let v = u16::from_le_bytes([bytes[22], bytes[23]]);
    let tag = bytes[24];
    if tag != TAG_F32 {
        return Err(Error::CorruptFormat(format!(
            "unsupported scalar type tag {tag}"
        )));
    }
    let config = SparseFormatConfig::new(n, m, v)
        .map_err(|e| Error::CorruptFormat(format!("invalid header config: {e}")))?;
    config
        .check_shape(rows, cols)
        .map_err(|e| Error::CorruptFormat(format!("invalid header shape: {e}")))?;

    let storage_rows = rows / m as usize * n as usize;
    let data_cols = cols / 2;
    let block_cols = cols / v as usize;
    let data_len = storage_rows * data_cols;
    let indices_len = storage_rows * block_cols;
    let meta_codes = storage_rows * data_cols;
    let meta_bytes = meta_codes.div_ceil(4);
    let expected = HEADER_LEN + data_len * 4 + indices_len + meta_bytes;
    if bytes.len() < expected {
        return Err(Error::TruncatedStream {
            expected,
            actual: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(Error::CorruptFormat(format!(
            "{} trailing bytes after layout end",
            bytes.len() - expected
        )));
    }

    let mut pos = HEADER_LEN;
    let mut data = Vec::with_capacity(data_len);
    for _ in 0..data_len {
        data.push(f32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()));
        pos += 4;
    }
    let indices = bytes[pos..pos + indices_len].to_vec();
    pos += indices_len;

    let mut stream = Vec::with_capacity(meta_codes);
    for (bi, byte) in bytes[pos..pos + meta_bytes].iter().enumerate() {
        for i in 0..4 {
            let idx = bi * 4 + i;
            let code = (byte >> (2 * i)) & 0b11;
            if idx < meta_codes {
                stream.push(code);
            } else if code != 0 {
                return Err(Error::CorruptFormat(
                    "non-zero padding bits in final metadata byte".into(),
                ));
            }
        }
    }
    let metadata = from_stream_order(&stream, storage_rows, data_cols);

    let sw = SamoyedsWeight {
        rows,
        cols,
        config,
        data,
        indices,
        metadata,
    };
    if let Some(violation) = validate_weight(&sw).into_iter().next() {
        return Err(Error::CorruptFormat(violation.to_string()));
    }
    Ok(sw)
}
