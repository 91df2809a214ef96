//! Emulation of one sparse tensor-core instruction tile.
//!
//! Mirrors the semantics of an `m16n8k32`-style sparse MMA: the A operand is
//! the 2:4-compressed `16 x 16` fragment plus a 2-bit metadata fragment, B is
//! a dense `32 x 8` fragment, and C accumulates the `16 x 8` product of the
//! expanded A with B. Accumulation order within each 4-group is position
//! order, so results are deterministic and independent of any tiling above.
//!
//! Register-fragment thread ownership and `ldmatrix` semantics are out of
//! scope; the tile is a plain value type.

use crate::error::{Error, Result};

/// Instruction tile output rows.
pub const M_I: usize = 16;
/// Instruction tile output columns.
pub const N_I: usize = 8;
/// Instruction tile reduction depth (uncompressed).
pub const K_I: usize = 32;
/// Stored scalars per A-fragment row (`K_I / 2`).
pub const A_COLS: usize = K_I / 2;

/// One sparse MMA invocation's operands and accumulators.
///
/// Dimensions are carried as fields to leave room for other presets, but
/// only `(16, 8, 32)` is accepted today.
#[derive(Debug, Clone)]
pub struct InstructionTile {
    pub m_i: usize,
    pub n_i: usize,
    pub k_i: usize,
    /// `m_i x k_i/2` compressed scalars, row-major.
    pub a_frag: Vec<f32>,
    /// One 2-bit position code per stored scalar, same shape as `a_frag`.
    pub meta_frag: Vec<u8>,
    /// `k_i x n_i` dense scalars, row-major.
    pub b_frag: Vec<f32>,
    /// `m_i x n_i` accumulators, row-major.
    pub c_frag: Vec<f32>,
}

impl InstructionTile {
    /// Zero-initialized tile in the 16x8x32 preset.
    pub fn new() -> Self {
        InstructionTile {
            m_i: M_I,
            n_i: N_I,
            k_i: K_I,
            a_frag: vec![0.0; M_I * A_COLS],
            meta_frag: {
                // Canonical empty metadata: every unit codes positions (0, 1).
                let mut m = vec![0u8; M_I * A_COLS];
                for (i, v) in m.iter_mut().enumerate() {
                    *v = (i % 2) as u8;
                }
                m
            },
            b_frag: vec![0.0; K_I * N_I],
            c_frag: vec![0.0; M_I * N_I],
        }
    }

    fn check(&self) -> Result<()> {
        if (self.m_i, self.n_i, self.k_i) != (M_I, N_I, K_I) {
            return Err(Error::Shape(format!(
                "unsupported tile preset {}x{}x{}, only 16x8x32 is implemented",
                self.m_i, self.n_i, self.k_i
            )));
        }
        if self.a_frag.len() != M_I * A_COLS
            || self.meta_frag.len() != M_I * A_COLS
            || self.b_frag.len() != K_I * N_I
            || self.c_frag.len() != M_I * N_I
        {
            return Err(Error::Shape("fragment length mismatch".into()));
        }
        for r in 0..M_I {
            for u in 0..K_I / 4 {
                let lo = self.meta_frag[r * A_COLS + 2 * u];
                let hi = self.meta_frag[r * A_COLS + 2 * u + 1];
                if lo >= 4 || hi >= 4 || lo >= hi {
                    return Err(Error::CorruptFormat(format!(
                        "metadata pair ({lo}, {hi}) invalid in unit {u} of fragment row {r}"
                    )));
                }
            }
        }
        Ok(())
    }
}

impl Default for InstructionTile {
    fn default() -> Self {
        Self::new()
    }
}

/// Performs `c_frag += expand(a_frag, meta_frag) . b_frag` in place.
pub fn sp_mma_tile(tile: &mut InstructionTile) -> Result<()> {
    tile.check()?;
    sp_mma_frags(&tile.a_frag, &tile.meta_frag, &tile.b_frag, &mut tile.c_frag);
    Ok(())
}

/// Unchecked fragment kernel shared with the engine's inner loop.
///
/// Both stored scalars of every 4-group are multiplied in ascending position
/// order (the hardware always issues 2 MACs per unit), so each accumulator
/// element sees a fixed ascending-k chain. Position codes are taken mod 4;
/// callers guarantee validity (the public wrapper checks, encoded weights
/// are validated at construction).
#[inline]
pub(crate) fn sp_mma_frags(a: &[f32], meta: &[u8], b: &[f32], c: &mut [f32]) {
    // Fixed-shape views let the compiler drop bounds checks in the loop.
    let a: &[[f32; A_COLS]; M_I] = a.as_chunks().0.try_into().expect("a fragment shape");
    let meta: &[[u8; A_COLS]; M_I] = meta.as_chunks().0.try_into().expect("meta fragment shape");
    let b: &[[f32; N_I]; K_I] = b.as_chunks().0.try_into().expect("b fragment shape");
    let c: &mut [[f32; N_I]; M_I] =
        c.as_chunks_mut().0.try_into().expect("c fragment shape");
    for r in 0..M_I {
        let arow = &a[r];
        let mrow = &meta[r];
        let crow = &mut c[r];
        for u in 0..K_I / 4 {
            for t in 0..2 {
                let val = arow[2 * u + t];
                let pos = (mrow[2 * u + t] & 3) as usize;
                debug_assert_eq!(pos, mrow[2 * u + t] as usize);
                let brow = &b[4 * u + pos];
                for i in 0..N_I {
                    crow[i] += val * brow[i];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Dense expansion of the compressed fragment.
    fn expand(a: &[f32], meta: &[u8]) -> Vec<f32> {
        let mut dense = vec![0.0f32; M_I * K_I];
        for r in 0..M_I {
            for u in 0..K_I / 4 {
                for t in 0..2 {
                    let pos = meta[r * A_COLS + 2 * u + t] as usize;
                    dense[r * K_I + 4 * u + pos] = a[r * A_COLS + 2 * u + t];
                }
            }
        }
        dense
    }

    /// Reference product with the same ascending-k chain per element.
    fn dense_mma(dense_a: &[f32], b: &[f32], c: &mut [f32]) {
        for r in 0..M_I {
            for k in 0..K_I {
                let av = dense_a[r * K_I + k];
                for col in 0..N_I {
                    c[r * N_I + col] += av * b[k * N_I + col];
                }
            }
        }
    }

    fn pseudo(seed: &mut u64) -> f32 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (((*seed >> 33) % 17) as f32) - 8.0
    }

    fn random_tile(seed: u64) -> InstructionTile {
        let mut s = seed;
        let mut t = InstructionTile::new();
        for r in 0..M_I {
            for u in 0..K_I / 4 {
                // Random strictly increasing pair of positions.
                let lo = (pseudo(&mut s).abs() as usize) % 3;
                let hi = lo + 1 + (pseudo(&mut s).abs() as usize) % (3 - lo);
                t.meta_frag[r * A_COLS + 2 * u] = lo as u8;
                t.meta_frag[r * A_COLS + 2 * u + 1] = hi as u8;
                t.a_frag[r * A_COLS + 2 * u] = pseudo(&mut s);
                t.a_frag[r * A_COLS + 2 * u + 1] = pseudo(&mut s);
            }
        }
        for v in t.b_frag.iter_mut() {
            *v = pseudo(&mut s);
        }
        t
    }

    #[test]
    fn zero_a_leaves_c_unchanged() {
        let mut t = InstructionTile::new();
        for (i, v) in t.b_frag.iter_mut().enumerate() {
            *v = i as f32;
        }
        t.c_frag = (0..M_I * N_I).map(|i| i as f32).collect();
        let before = t.c_frag.clone();
        sp_mma_tile(&mut t).unwrap();
        assert_eq!(t.c_frag, before);
    }

    #[test]
    fn identity_pattern_copies_b_rows() {
        // Place a single 1.0 on the expanded diagonal of each row.
        let mut t = InstructionTile::new();
        let mut s = 7u64;
        for v in t.b_frag.iter_mut() {
            *v = pseudo(&mut s);
        }
        for r in 0..M_I {
            // Expanded column r = unit r/4, in-group position r%4.
            let u = r / 4;
            let pos = r % 4;
            let (lo, hi, slot) = if pos < 3 {
                (pos as u8, 3u8, 0)
            } else {
                (0u8, 3u8, 1)
            };
            t.meta_frag[r * A_COLS + 2 * u] = lo;
            t.meta_frag[r * A_COLS + 2 * u + 1] = hi;
            t.a_frag[r * A_COLS + 2 * u + slot] = 1.0;
        }
        sp_mma_tile(&mut t).unwrap();
        for r in 0..M_I {
            for col in 0..N_I {
                assert_eq!(t.c_frag[r * N_I + col], t.b_frag[r * N_I + col]);
            }
        }
    }

    #[test]
    fn matches_dense_oracle_exactly() {
        for seed in 0..50 {
            let mut t = random_tile(seed);
            let dense_a = expand(&t.a_frag, &t.meta_frag);
            let mut want = t.c_frag.clone();
            dense_mma(&dense_a, &t.b_frag, &mut want);
            sp_mma_tile(&mut t).unwrap();
            assert_eq!(t.c_frag, want, "seed {seed}");
        }
    }

    #[test]
    fn linear_in_b() {
        let t0 = random_tile(11);
        let mut t1 = t0.clone();
        let mut t2 = t0.clone();
        let mut t12 = t0.clone();
        let mut s = 99u64;
        let b2: Vec<f32> = (0..K_I * N_I).map(|_| pseudo(&mut s)).collect();
        t2.b_frag = b2.clone();
        for (v, add) in t12.b_frag.iter_mut().zip(&b2) {
            *v += add;
        }
        sp_mma_tile(&mut t1).unwrap();
        sp_mma_tile(&mut t2).unwrap();
        sp_mma_tile(&mut t12).unwrap();
        for i in 0..M_I * N_I {
            let sum = t1.c_frag[i] + t2.c_frag[i];
            let got = t12.c_frag[i];
            let rel = (got - sum).abs() / sum.abs().max(1.0);
            assert!(rel <= 1e-6, "element {i}: {got} vs {sum}");
        }
    }

    #[test]
    fn bad_metadata_rejected() {
        let mut t = InstructionTile::new();
        t.meta_frag[0] = 2;
        t.meta_frag[1] = 2;
        assert!(matches!(sp_mma_tile(&mut t), Err(Error::CorruptFormat(_))));
        let mut t = InstructionTile::new();
        t.meta_frag[1] = 4;
        assert!(matches!(sp_mma_tile(&mut t), Err(Error::CorruptFormat(_))));
    }

    #[test]
    fn wrong_preset_rejected() {
        let mut t = InstructionTile::new();
        t.k_i = 16;
        assert!(matches!(sp_mma_tile(&mut t), Err(Error::Shape(_))));
    }
}
