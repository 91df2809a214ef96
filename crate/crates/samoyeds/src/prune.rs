//! Magnitude pruning onto the (N,M,V)+2:4 pattern.
//!
//! Importance is magnitude only: L1 norm for sub-rows, absolute value for
//! elements. Ties break toward the lower index everywhere so the mask is
//! deterministic. The result always satisfies [`encode_weight`]'s pattern
//! precondition.
//!
//! [`encode_weight`]: crate::format::encode_weight

use crate::dense::DenseMatrix;
use crate::error::Result;
use crate::format::SparseFormatConfig;

/// Outcome counters for one pruning pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PruneReport {
    /// Sub-row slots retained across all blocks.
    pub kept_subrows: usize,
    /// Previously non-zero elements that the mask set to zero.
    pub zeroed_elements: usize,
    /// `1 - nonzeros(output) / total_elements`.
    pub achieved_sparsity: f64,
}

/// L1 score of every sub-row: output shape `rows x cols/v`, entry `(r, b)` is
/// the L1 norm of `w[r, b*v .. (b+1)*v]`.
pub fn subrow_scores(w: &DenseMatrix, cfg: &SparseFormatConfig) -> Result<DenseMatrix> {
    cfg.check_shape(w.rows, w.cols)?;
    let v = cfg.v as usize;
    let block_cols = w.cols / v;
    let mut scores = DenseMatrix::zeros(w.rows, block_cols);
    for r in 0..w.rows {
        let row = w.row(r);
        for b in 0..block_cols {
            let s: f32 = row[b * v..(b + 1) * v].iter().map(|x| x.abs()).sum();
            scores.set(r, b, s);
        }
    }
    Ok(scores)
}

/// Prunes a dense weight onto the pattern: per `m x v` block the `n` sub-rows
/// with highest L1 score survive (ties to the lower row), then each surviving
/// aligned group of 4 keeps its 2 largest-magnitude elements (ties to the
/// lower column).
pub fn prune_to_format(
    w: &DenseMatrix,
    cfg: &SparseFormatConfig,
) -> Result<(DenseMatrix, PruneReport)> {
    cfg.check_shape(w.rows, w.cols)?;
    let (n, m, v) = (cfg.n as usize, cfg.m as usize, cfg.v as usize);
    let scores = subrow_scores(w, cfg)?;
    let groups = w.rows / m;
    let block_cols = w.cols / v;

    let mut out = DenseMatrix::zeros(w.rows, w.cols);
    let mut kept_subrows = 0usize;
    for g in 0..groups {
        for b in 0..block_cols {
            // Stable sort on descending score keeps the lower row on ties.
            let mut order: Vec<usize> = (0..m).collect();
            order.sort_by(|&a, &bb| {
                scores
                    .get(g * m + bb, b)
                    .partial_cmp(&scores.get(g * m + a, b))
                    .unwrap()
            });
            let mut keep = order[..n].to_vec();
            keep.sort_unstable();
            kept_subrows += n;

            for &sub in &keep {
                let r = g * m + sub;
                for u in 0..v / 4 {
                    let base = b * v + 4 * u;
                    let mut pos: Vec<usize> = (0..4).collect();
                    pos.sort_by(|&a, &bb| {
                        w.get(r, base + bb)
                            .abs()
                            .partial_cmp(&w.get(r, base + a).abs())
                            .unwrap()
                    });
                    for &p in &pos[..2] {
                        out.set(r, base + p, w.get(r, base + p));
                    }
                }
            }
        }
    }

    let total = w.rows * w.cols;
    let kept_nonzeros = out.count_nonzeros();
    let report = PruneReport {
        kept_subrows,
        zeroed_elements: w.count_nonzeros() - kept_nonzeros,
        achieved_sparsity: 1.0 - kept_nonzeros as f64 / total as f64,
    };
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::format::encode_weight;

    fn cfg(n: u16, m: u16, v: u16) -> SparseFormatConfig {
        SparseFormatConfig::new(n, m, v).unwrap()
    }

    #[test]
    fn scores_are_l1_norms() {
        let w = DenseMatrix::from_rows(&[vec![1.0, -2.0, 0.0, 3.0], vec![0.0; 4]]).unwrap();
        let s = subrow_scores(&w, &cfg(1, 2, 4)).unwrap();
        assert_eq!(s.get(0, 0), 6.0);
        assert_eq!(s.get(1, 0), 0.0);
    }

    #[test]
    fn scores_match_bruteforce() {
        let c = cfg(1, 2, 4);
        let w = DenseMatrix::from_vec(
            4,
            8,
            (0..32).map(|i| ((i * 13 % 7) as f32) - 3.0).collect(),
        )
        .unwrap();
        let s = subrow_scores(&w, &c).unwrap();
        for r in 0..4 {
            for b in 0..2 {
                let want: f32 = (0..4).map(|j| w.get(r, b * 4 + j).abs()).sum();
                assert_eq!(s.get(r, b), want);
            }
        }
    }

    #[test]
    fn dominant_subrow_and_tie_rule() {
        // Row 1 dominates; within its group of 4 all values tie, so the two
        // lowest columns survive.
        let w = DenseMatrix::from_rows(&[vec![1.0; 4], vec![9.0; 4]]).unwrap();
        let (p, _) = prune_to_format(&w, &cfg(1, 2, 4)).unwrap();
        assert_eq!(p.row(0), &[0.0; 4]);
        assert_eq!(p.row(1), &[9.0, 9.0, 0.0, 0.0]);
    }

    #[test]
    fn subrow_tie_prefers_lower_row() {
        let w = DenseMatrix::from_rows(&[vec![2.0, 0.0, 0.0, 0.0], vec![0.0, 2.0, 0.0, 0.0]])
            .unwrap();
        let (p, _) = prune_to_format(&w, &cfg(1, 2, 4)).unwrap();
        assert_eq!(p.row(0), &[2.0, 0.0, 0.0, 0.0]);
        assert_eq!(p.row(1), &[0.0; 4]);
    }

    #[test]
    fn sparsity_floor_for_half_density() {
        let w = DenseMatrix::from_vec(
            4,
            16,
            (0..64).map(|i| (i as f32).sin() + 0.01).collect(),
        )
        .unwrap();
        let (_, report) = prune_to_format(&w, &cfg(1, 2, 16)).unwrap();
        assert!(report.achieved_sparsity >= 0.75);
        assert_eq!(report.kept_subrows, 2 * 1);
    }

    #[test]
    fn pruned_output_always_encodes() {
        let c = cfg(2, 4, 8);
        let w = DenseMatrix::from_vec(
            8,
            32,
            (0..256).map(|i| ((i * 37 % 19) as f32) - 9.0).collect(),
        )
        .unwrap();
        let (p, _) = prune_to_format(&w, &c).unwrap();
        assert!(encode_weight(&p, &c).is_ok());
    }

    #[test]
    fn idempotent() {
        let c = cfg(2, 4, 8);
        let w = DenseMatrix::from_vec(
            8,
            32,
            (0..256).map(|i| ((i * 29 % 23) as f32) - 11.0).collect(),
        )
        .unwrap();
        let (p1, _) = prune_to_format(&w, &c).unwrap();
        let (p2, r2) = prune_to_format(&p1, &c).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(r2.zeroed_elements, 0);
    }

    #[test]
    fn mask_invariant_under_positive_scaling() {
        let c = cfg(1, 2, 8);
        let w = DenseMatrix::from_vec(
            4,
            16,
            (0..64).map(|i| ((i * 31 % 17) as f32) - 8.0).collect(),
        )
        .unwrap();
        let scaled = DenseMatrix::from_vec(4, 16, w.values.iter().map(|v| v * 3.5).collect())
            .unwrap();
        let (p, _) = prune_to_format(&w, &c).unwrap();
        let (ps, _) = prune_to_format(&scaled, &c).unwrap();
        for (a, b) in p.values.iter().zip(&ps.values) {
            assert_eq!(*a != 0.0, *b != 0.0);
        }
    }

    #[test]
    fn rejects_bad_shape() {
        let w = DenseMatrix::zeros(3, 8);
        assert!(prune_to_format(&w, &cfg(1, 2, 4)).is_err());
    }

    /// Enumerative oracle: per block, the size-n sub-row subset with maximal
    /// L1 sum (lexicographically smallest on ties), then per kept unit the
    /// position pair with maximal magnitude sum (lexicographically smallest
    /// on ties).
    fn bruteforce_prune(w: &DenseMatrix, c: &SparseFormatConfig) -> DenseMatrix {
        let (n, m, v) = (c.n as usize, c.m as usize, c.v as usize);
        let mut out = DenseMatrix::zeros(w.rows, w.cols);
        let subsets = |len: usize, take: usize| -> Vec<Vec<usize>> {
            let mut all = Vec::new();
            for mask in 0u32..(1 << len) {
                if mask.count_ones() as usize == take {
                    all.push((0..len).filter(|i| mask >> i & 1 == 1).collect());
                }
            }
            all.sort();
            all
        };
        for g in 0..w.rows / m {
            for b in 0..w.cols / v {
                let mut best: Option<(f64, &Vec<usize>)> = None;
                let choices = subsets(m, n);
                for subset in &choices {
                    let score: f64 = subset
                        .iter()
                        .flat_map(|&s| (0..v).map(move |j| (s, j)))
                        .map(|(s, j)| w.get(g * m + s, b * v + j).abs() as f64)
                        .sum();
                    if best.is_none() || score > best.unwrap().0 {
                        best = Some((score, subset));
                    }
                }
                for &sub in best.unwrap().1 {
                    let r = g * m + sub;
                    for u in 0..v / 4 {
                        let base = b * v + 4 * u;
                        let mut pair = (0usize, 1usize);
                        let mut pair_score = f64::NEG_INFINITY;
                        for p0 in 0..4 {
                            for p1 in p0 + 1..4 {
                                let s = w.get(r, base + p0).abs() as f64
                                    + w.get(r, base + p1).abs() as f64;
                                if s > pair_score {
                                    pair_score = s;
                                    pair = (p0, p1);
                                }
                            }
                        }
                        out.set(r, base + pair.0, w.get(r, base + pair.0));
                        out.set(r, base + pair.1, w.get(r, base + pair.1));
                    }
                }
            }
        }
        out
    }

    #[test]
    fn matches_bruteforce_enumeration_2_4_8() {
        let c = cfg(2, 4, 8);
        for seed in 0..20u64 {
            let mut s = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1);
            let mut next = || {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (((s >> 33) % 13) as f32) - 6.0
            };
            let w = DenseMatrix::from_vec(8, 32, (0..256).map(|_| next()).collect()).unwrap();
            let (got, _) = prune_to_format(&w, &c).unwrap();
            let want = bruteforce_prune(&w, &c);
            assert_eq!(got.values, want.values, "seed {seed}");
        }
    }
}
