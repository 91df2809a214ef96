//! Metadata panel packing.
//!
//! The 2-bit metadata matrix is rearranged in 16x16 panels so that the codes
//! one instruction consumes sit contiguously in 32-bit words. Within a panel
//! the element at `[r, c]` moves to `[r % 8 * 2 + c / 8, c % 8 + r / 8 * 8]`;
//! the map is a bijection on the panel.
//!
//! Matrices larger than one panel are processed as disjoint 16x16 panels in
//! row-major panel order. Ragged edge regions (when a dimension is not a
//! multiple of 16) are left in their original layout.

use crate::error::{Error, Result};

/// Panel edge length.
pub const PANEL: usize = 16;

fn check_panel(panel: &[u8]) -> Result<()> {
    if panel.len() != PANEL * PANEL {
        return Err(Error::Shape(format!(
            "metadata panel must be 16x16 (256 codes), got {}",
            panel.len()
        )));
    }
    if let Some(bad) = panel.iter().position(|c| *c >= 4) {
        return Err(Error::Shape(format!(
            "metadata code {} at offset {bad} is not a 2-bit value",
            panel[bad]
        )));
    }
    Ok(())
}

/// Permutes one 16x16 panel of 2-bit codes into the packed layout.
pub fn pack_metadata(panel: &[u8]) -> Result<Vec<u8>> {
    check_panel(panel)?;
    let mut out = vec![0u8; PANEL * PANEL];
    for r in 0..PANEL {
        for c in 0..PANEL {
            let pr = r % 8 * 2 + c / 8;
            let pc = c % 8 + r / 8 * 8;
            out[pr * PANEL + pc] = panel[r * PANEL + c];
        }
    }
    Ok(out)
}

/// Inverse of [`pack_metadata`]: `unpack(pack(x)) == x` for every panel.
pub fn unpack_metadata(packed: &[u8]) -> Result<Vec<u8>> {
    check_panel(packed)?;
    let mut out = vec![0u8; PANEL * PANEL];
    for r in 0..PANEL {
        for c in 0..PANEL {
            let pr = r % 8 * 2 + c / 8;
            let pc = c % 8 + r / 8 * 8;
            out[r * PANEL + c] = packed[pr * PANEL + pc];
        }
    }
    Ok(out)
}

/// Reorders a full `rows x cols` metadata matrix into the serialized stream
/// order: complete panels row-major (each permuted, emitted row-major), edge
/// regions row-major unpermuted.
pub(crate) fn to_stream_order(meta: &[u8], rows: usize, cols: usize) -> Vec<u8> {
    debug_assert_eq!(meta.len(), rows * cols);
    let mut out = Vec::with_capacity(meta.len());
    let mut panel = [0u8; PANEL * PANEL];
    for pr in 0..rows.div_ceil(PANEL) {
        for pc in 0..cols.div_ceil(PANEL) {
            let r0 = pr * PANEL;
            let c0 = pc * PANEL;
            let rh = (rows - r0).min(PANEL);
            let cw = (cols - c0).min(PANEL);
            if rh == PANEL && cw == PANEL {
                for r in 0..PANEL {
                    panel[r * PANEL..(r + 1) * PANEL]
                        .copy_from_slice(&meta[(r0 + r) * cols + c0..(r0 + r) * cols + c0 + PANEL]);
                }
                // Complete panel: full panels always validate (codes checked
                // upstream); a direct permute avoids re-validation.
                let mut packed = [0u8; PANEL * PANEL];
                permute_into(&panel, &mut packed);
                out.extend_from_slice(&packed);
            } else {
                for r in 0..rh {
                    out.extend_from_slice(
                        &meta[(r0 + r) * cols + c0..(r0 + r) * cols + c0 + cw],
                    );
                }
            }
        }
    }
    out
}

/// Inverse of [`to_stream_order`].
pub(crate) fn from_stream_order(stream: &[u8], rows: usize, cols: usize) -> Vec<u8> {
    debug_assert_eq!(stream.len(), rows * cols);
    let mut out = vec![0u8; rows * cols];
    let mut cursor = 0usize;
    for pr in 0..rows.div_ceil(PANEL) {
        for pc in 0..cols.div_ceil(PANEL) {
            let r0 = pr * PANEL;
            let c0 = pc * PANEL;
            let rh = (rows - r0).min(PANEL);
            let cw = (cols - c0).min(PANEL);
            if rh == PANEL && cw == PANEL {
                let packed = &stream[cursor..cursor + PANEL * PANEL];
                cursor += PANEL * PANEL;
                let mut panel = [0u8; PANEL * PANEL];
                unpermute_into(packed, &mut panel);
                for r in 0..PANEL {
                    out[(r0 + r) * cols + c0..(r0 + r) * cols + c0 + PANEL]
                        .copy_from_slice(&panel[r * PANEL..(r + 1) * PANEL]);
                }
            } else {
                for r in 0..rh {
                    out[(r0 + r) * cols + c0..(r0 + r) * cols + c0 + cw]
                        .copy_from_slice(&stream[cursor..cursor + cw]);
                    cursor += cw;
                }
            }
        }
    }
    out
}

fn permute_into(panel: &[u8], out: &mut [u8]) {
    for r in 0..PANEL {
        for c in 0..PANEL {
            out[(r % 8 * 2 + c / 8) * PANEL + (c % 8 + r / 8 * 8)] = panel[r * PANEL + c];
        }
    }
}

fn unpermute_into(packed: &[u8], out: &mut [u8]) {
    for r in 0..PANEL {
        for c in 0..PANEL {
            out[r * PANEL + c] = packed[(r % 8 * 2 + c / 8) * PANEL + (c % 8 + r / 8 * 8)];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coded_panel() -> Vec<u8> {
        // Distinct-ish 2-bit codes so misplacement is visible.
        (0..256).map(|i| ((i * 7 + i / 16) % 4) as u8).collect()
    }

    #[test]
    fn fixed_point_and_derived_mappings() {
        // Mapping formula evaluated at three probe points:
        // [0,0] -> [0,0], [8,0] -> [0,8], [1,9] -> [3,1].
        let mut panel = vec![0u8; 256];
        panel[0] = 1;
        panel[8 * PANEL] = 2;
        panel[PANEL + 9] = 3;
        let packed = pack_metadata(&panel).unwrap();
        assert_eq!(packed[0], 1);
        assert_eq!(packed[8], 2);
        assert_eq!(packed[3 * PANEL + 1], 3);
    }

    #[test]
    fn unpack_inverts_pack() {
        let panel = coded_panel();
        let packed = pack_metadata(&panel).unwrap();
        let back = unpack_metadata(&packed).unwrap();
        assert_eq!(back, panel);
        // The probe point in reverse: packed [0,8] came from [8,0].
        let mut one = vec![0u8; 256];
        one[8] = 3;
        let unpacked = unpack_metadata(&one).unwrap();
        assert_eq!(unpacked[8 * PANEL], 3);
    }

    #[test]
    fn rejects_bad_shape_and_codes() {
        assert!(pack_metadata(&[0u8; 255]).is_err());
        let mut panel = vec![0u8; 256];
        panel[10] = 4;
        assert!(pack_metadata(&panel).is_err());
    }

    #[test]
    fn stream_order_roundtrip_ragged() {
        // 18x20: one complete panel plus three ragged edges.
        let rows = 18;
        let cols = 20;
        let meta: Vec<u8> = (0..rows * cols).map(|i| (i % 4) as u8).collect();
        let stream = to_stream_order(&meta, rows, cols);
        assert_eq!(stream.len(), meta.len());
        let back = from_stream_order(&stream, rows, cols);
        assert_eq!(back, meta);
    }

    #[test]
    fn stream_order_small_matrix_is_identity() {
        let meta = vec![0u8, 2];
        assert_eq!(to_stream_order(&meta, 1, 2), meta);
    }
}
