//! Sparse-sparse matrix multiplication over encoded operands.
//!
//! Computes `C = decode(W) . selected(X)` without decoding: the k loop walks
//! the compressed data in `k_b` steps, dispatches the 16x8x32 sparse
//! instruction tile at the innermost level, and routes slot partial sums into
//! output rows with an accumulator shuffle every `v / k_b` iterations (the
//! point where the tiling window crosses a sub-row boundary).
//!
//! Three-step tiling: block tiles (`m_b x n_b`, the parallel unit), warp
//! tiles (`m_w x n_w`, traversal grouping inside a block), instruction tiles
//! (fixed `16x8x32`). Per block tile the operand panels for a k step are
//! staged into scratch buffers through a ring of depth `num_pipe`, modeling
//! the fetch/commit/wait pipeline; on a CPU this affects traversal only,
//! never results.
//!
//! Determinism: every output element accumulates along a fixed ascending-k
//! chain, so results are bitwise identical across all legal tile configs and
//! across thread counts. m and n remainders are zero-padded at fragment
//! granularity and trimmed on write-back.

mod traffic;

pub use traffic::{simulate_memory_traffic, TrafficReport, TrafficScheme};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::format::{SamoyedsWeight, SelectedInput, SparseFormatConfig};
use crate::sptc::{sp_mma_frags, A_COLS, K_I, M_I, N_I};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// The three-step tiling sizes plus pipeline depth.
///
/// All m-dimension sizes count output rows; a warp tile of `m_w` output rows
/// spans `m_w * n / m` storage slots, padded up to instruction granularity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileConfig {
    /// Block tile rows (per parallel task).
    pub m_b: usize,
    /// Block tile columns.
    pub n_b: usize,
    /// Reduction step per iteration.
    pub k_b: usize,
    /// Warp tile rows.
    pub m_w: usize,
    /// Warp tile columns.
    pub n_w: usize,
    /// Instruction tile rows (fixed 16).
    pub m_i: usize,
    /// Instruction tile columns (fixed 8).
    pub n_i: usize,
    /// Instruction tile reduction depth (fixed 32).
    pub k_i: usize,
    /// Pipeline depth for the staging ring, >= 1.
    pub num_pipe: usize,
}

impl TileConfig {
    /// Validated constructor. Constraints: `m_w % 16 == 0`, `n_w % 8 == 0`,
    /// `m_b % m_w == 0`, `n_b % n_w == 0`, `k_b % 32 == 0`, `num_pipe >= 1`.
    pub fn new(
        m_b: usize,
        n_b: usize,
        k_b: usize,
        m_w: usize,
        n_w: usize,
        num_pipe: usize,
    ) -> Result<Self> {
        let tc = TileConfig {
            m_b,
            n_b,
            k_b,
            m_w,
            n_w,
            m_i: M_I,
            n_i: N_I,
            k_i: K_I,
            num_pipe,
        };
        if m_w == 0 || m_w % M_I != 0 {
            return Err(Error::TileConfig(format!("m_w={m_w} not a multiple of {M_I}")));
        }
        if n_w == 0 || n_w % N_I != 0 {
            return Err(Error::TileConfig(format!("n_w={n_w} not a multiple of {N_I}")));
        }
        if m_b == 0 || m_b % m_w != 0 {
            return Err(Error::TileConfig(format!("m_b={m_b} not a multiple of m_w={m_w}")));
        }
        if n_b == 0 || n_b % n_w != 0 {
            return Err(Error::TileConfig(format!("n_b={n_b} not a multiple of n_w={n_w}")));
        }
        if k_b == 0 || k_b % K_I != 0 {
            return Err(Error::TileConfig(format!("k_b={k_b} not a multiple of {K_I}")));
        }
        if num_pipe == 0 {
            return Err(Error::TileConfig("num_pipe must be >= 1".into()));
        }
        Ok(tc)
    }

    /// Checks the config against a sparse format: the shuffle period `v/k_b`
    /// must be a whole number, and block/warp tiles must cover whole blocks.
    pub fn validate_for(&self, cfg: &SparseFormatConfig) -> Result<()> {
        let v = cfg.v as usize;
        if v % self.k_b != 0 {
            return Err(Error::TileConfig(format!(
                "v={v} not divisible by k_b={} (shuffle period must be whole)",
                self.k_b
            )));
        }
        let m = cfg.m as usize;
        if self.m_b % m != 0 || self.m_w % m != 0 {
            return Err(Error::TileConfig(format!(
                "m tiles ({}, {}) must be multiples of block height m={m}",
                self.m_b, self.m_w
            )));
        }
        Ok(())
    }
}

impl Default for TileConfig {
    /// `(m_b=128, n_b=64, k_b=32, m_w=32, n_w=32, num_pipe=2)`.
    fn default() -> Self {
        TileConfig::new(128, 64, 32, 32, 32, 2).unwrap()
    }
}

/// Activation functions the engine can fuse after the main loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Silu,
    Gelu,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f32) -> f32 {
        match self {
            Activation::Silu => x / (1.0 + (-x).exp()),
            Activation::Gelu => {
                let x3 = x * x * x;
                0.5 * x * (1.0 + (0.797_884_56 * (x + 0.044_715 * x3)).tanh())
            }
            Activation::Relu => x.max(0.0),
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "silu" => Ok(Activation::Silu),
            "gelu" => Ok(Activation::Gelu),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::Shape(format!("unknown activation '{other}'"))),
        }
    }
}

/// Computation fused into the write-back.
#[derive(Debug, Clone, PartialEq)]
pub enum Epilogue {
    /// Store raw accumulators.
    None,
    /// Apply an activation elementwise.
    Activation(Activation),
    /// `dest[row] += weights[row] * result[row]`: a broadcast scalar per
    /// output row times the row, accumulated into the destination. Row means
    /// the output's storage row — a feature row for the dense layout, a token
    /// for the compressed layout.
    WeightedAccumulate { weights: Vec<f32> },
}

/// Semantic ground truth: decode, then a straightforward triple loop.
pub fn spmm_reference(w: &SamoyedsWeight, x: &SelectedInput) -> Result<DenseMatrix> {
    if w.cols != x.k {
        return Err(Error::Shape(format!(
            "weight k={} but input k={}",
            w.cols, x.k
        )));
    }
    let dense = crate::format::decode_weight(w)?;
    let mut out = DenseMatrix::zeros(w.rows, x.sel.len());
    for i in 0..w.rows {
        let arow = dense.row(i);
        for (j, _) in x.sel.iter().enumerate() {
            let xcol = x.column(j);
            let mut sum = 0.0f32;
            for k in 0..w.cols {
                sum += arow[k] * xcol[k];
            }
            out.set(i, j, sum);
        }
    }
    Ok(out)
}

/// Redirects slot partial sums into the output rows named by the sub-row
/// indices of the block column just completed, then clears the working
/// accumulators for the next sub-row.
///
/// `acc` has one row per storage slot, `c_ir` one row per output row of the
/// same block span (`acc.rows / n * m` rows), `indices_slice` one sub-row
/// index per slot.
pub fn shuffle_accumulators(
    acc: &mut DenseMatrix,
    c_ir: &mut DenseMatrix,
    indices_slice: &[u8],
    cfg: &SparseFormatConfig,
) -> Result<()> {
    let (n, m) = (cfg.n as usize, cfg.m as usize);
    if acc.cols != c_ir.cols {
        return Err(Error::Shape(format!(
            "acc has {} columns, c_ir has {}",
            acc.cols, c_ir.cols
        )));
    }
    if acc.rows % n != 0 || c_ir.rows != acc.rows / n * m {
        return Err(Error::Shape(format!(
            "acc rows {} / c_ir rows {} inconsistent with (n={n}, m={m})",
            acc.rows, c_ir.rows
        )));
    }
    if indices_slice.len() != acc.rows {
        return Err(Error::Shape(format!(
            "indices slice length {} != slot rows {}",
            indices_slice.len(),
            acc.rows
        )));
    }
    if let Some(&bad) = indices_slice.iter().find(|&&i| i as usize >= m) {
        return Err(Error::Index(format!("sub-row index {bad} >= m={m}")));
    }
    shuffle_slices(
        &mut acc.values,
        &mut c_ir.values,
        acc.cols,
        n,
        m,
        indices_slice,
    );
    Ok(())
}

/// Unchecked shuffle over flat buffers; the engine validates indices once at
/// dispatch.
fn shuffle_slices(acc: &mut [f32], cir: &mut [f32], ncols: usize, n: usize, m: usize, idx: &[u8]) {
    for (s, &sub) in idx.iter().enumerate() {
        let out_row = s / n * m + sub as usize;
        let arow = &mut acc[s * ncols..(s + 1) * ncols];
        let crow = &mut cir[out_row * ncols..(out_row + 1) * ncols];
        for (c, a) in crow.iter_mut().zip(arow.iter_mut()) {
            *c += *a;
            *a = 0.0;
        }
    }
}

/// Tiled sparse-sparse matmul; numerically equal to [`spmm_reference`]
/// followed by the epilogue.
pub fn spmm_tiled(
    w: &SamoyedsWeight,
    x: &SelectedInput,
    tc: &TileConfig,
    ep: &Epilogue,
) -> Result<DenseMatrix> {
    let mut out = DenseMatrix::zeros(w.rows, x.sel.len());
    spmm_tiled_into(w, x, tc, ep, &mut out)?;
    Ok(out)
}

/// [`spmm_tiled`] writing into a caller-owned matrix. `Epilogue::None` and
/// `Epilogue::Activation` overwrite; `Epilogue::WeightedAccumulate` adds the
/// row-scaled result onto the existing contents.
pub fn spmm_tiled_into(
    w: &SamoyedsWeight,
    x: &SelectedInput,
    tc: &TileConfig,
    ep: &Epilogue,
    dest: &mut DenseMatrix,
) -> Result<()> {
    validate_dispatch(w, x, tc)?;
    let n_out = x.sel.len();
    if dest.rows != w.rows || dest.cols != n_out {
        return Err(Error::Shape(format!(
            "destination {}x{} does not match output {}x{}",
            dest.rows, dest.cols, w.rows, n_out
        )));
    }
    if let Epilogue::WeightedAccumulate { weights } = ep {
        if weights.len() != w.rows {
            return Err(Error::Shape(format!(
                "weighted accumulate needs {} row weights, got {}",
                w.rows,
                weights.len()
            )));
        }
    }
    if dest.values.is_empty() {
        return Ok(());
    }
    let col_src: Vec<usize> = (0..n_out).collect();
    let strip = tc.m_b * n_out;
    for_each_chunk(&mut dest.values, strip, &|si, strip_buf| {
        let row0 = si * tc.m_b;
        let rows_t = strip_buf.len() / n_out;
        let mut bufs = TileBufs::new(w, tc);
        let mut col0 = 0;
        while col0 < n_out {
            let cols_t = tc.n_b.min(n_out - col0);
            compute_block_tile(w, x, &col_src[col0..col0 + cols_t], row0, rows_t, tc, &mut bufs);
            // Write-back into the strip: rows are strip-local.
            for r in 0..rows_t {
                let dst = &mut strip_buf[r * n_out + col0..r * n_out + col0 + cols_t];
                let src = &bufs.cir[r * cols_t..(r + 1) * cols_t];
                match ep {
                    Epilogue::None => dst.copy_from_slice(src),
                    Epilogue::Activation(a) => {
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d = a.apply(*s);
                        }
                    }
                    Epilogue::WeightedAccumulate { weights } => {
                        let wt = weights[row0 + r];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += wt * s;
                        }
                    }
                }
            }
            col0 += cols_t;
        }
    });
    Ok(())
}

/// Tiled matmul emitting only the output columns named by `out_sel`, stored
/// in the compressed (transposed) [`SelectedInput`] layout so downstream
/// consumers never materialize dropped rows.
///
/// `out_sel` must be a subset of `x.sel`: an output column requires its
/// input column.
pub fn spmm_compressed_out(
    w: &SamoyedsWeight,
    x: &SelectedInput,
    tc: &TileConfig,
    ep: &Epilogue,
    out_sel: &[usize],
) -> Result<SelectedInput> {
    validate_dispatch(w, x, tc)?;
    let col_src = map_out_sel(x, out_sel)?;
    if let Epilogue::WeightedAccumulate { weights } = ep {
        if weights.len() != out_sel.len() {
            return Err(Error::Shape(format!(
                "weighted accumulate needs {} row weights, got {}",
                out_sel.len(),
                weights.len()
            )));
        }
    }
    let mut out = SelectedInput {
        k: w.rows,
        total_cols: x.total_cols,
        sel: out_sel.to_vec(),
        data: vec![0.0; out_sel.len() * w.rows],
    };
    if out.data.is_empty() {
        return Ok(out);
    }
    let m_rows = w.rows;
    let strip = tc.n_b * m_rows;
    for_each_chunk(&mut out.data, strip, &|ti, strip_buf| {
        let j0 = ti * tc.n_b;
        let cols_t = strip_buf.len() / m_rows;
        let mut bufs = TileBufs::new(w, tc);
        run_tile_column(w, x, tc, &col_src[j0..j0 + cols_t], &mut bufs, &mut |row0,
                                                                              rows_t,
                                                                              cir,
                                                                              _| {
            for j in 0..cols_t {
                let dst = &mut strip_buf[j * m_rows + row0..j * m_rows + row0 + rows_t];
                for (r, d) in dst.iter_mut().enumerate() {
                    let val = cir[r * cols_t + j];
                    *d = match ep {
                        Epilogue::None => val,
                        Epilogue::Activation(a) => a.apply(val),
                        Epilogue::WeightedAccumulate { weights } => weights[j0 + j] * val,
                    };
                }
            }
        });
    });
    Ok(out)
}

/// Compressed-layout matmul writing into a caller-owned `total_cols x rows`
/// token buffer (row per token). With `Epilogue::WeightedAccumulate` this is
/// the fused weighted-sum path: `dest[token] += weight * column`, no
/// intermediate dense output. Other epilogues overwrite the touched rows.
pub fn spmm_compressed_into(
    w: &SamoyedsWeight,
    x: &SelectedInput,
    tc: &TileConfig,
    ep: &Epilogue,
    out_sel: &[usize],
    dest: &mut DenseMatrix,
) -> Result<()> {
    validate_dispatch(w, x, tc)?;
    let col_src = map_out_sel(x, out_sel)?;
    if dest.rows != x.total_cols || dest.cols != w.rows {
        return Err(Error::Shape(format!(
            "destination {}x{} does not match token buffer {}x{}",
            dest.rows, dest.cols, x.total_cols, w.rows
        )));
    }
    if let Epilogue::WeightedAccumulate { weights } = ep {
        if weights.len() != out_sel.len() {
            return Err(Error::Shape(format!(
                "weighted accumulate needs {} row weights, got {}",
                out_sel.len(),
                weights.len()
            )));
        }
    }
    if out_sel.is_empty() || w.rows == 0 {
        return Ok(());
    }
    let m_rows = w.rows;

    // Split the destination at token boundaries so each column strip owns a
    // disjoint row range of it.
    struct Task<'a> {
        j0: usize,
        cols_t: usize,
        base_row: usize,
        buf: &'a mut [f32],
    }
    let mut tasks: Vec<Task<'_>> = Vec::new();
    {
        let mut rest: &mut [f32] = &mut dest.values;
        let mut consumed = 0usize;
        let mut j0 = 0usize;
        while j0 < out_sel.len() {
            let cols_t = tc.n_b.min(out_sel.len() - j0);
            let hi_row = out_sel[j0 + cols_t - 1] + 1;
            let (head, tail) = rest.split_at_mut((hi_row - consumed) * m_rows);
            tasks.push(Task {
                j0,
                cols_t,
                base_row: consumed,
                buf: head,
            });
            rest = tail;
            consumed = hi_row;
            j0 += cols_t;
        }
    }

    let run = |task: &mut Task<'_>| {
        let mut bufs = TileBufs::new(w, tc);
        let cols = &col_src[task.j0..task.j0 + task.cols_t];
        let j0 = task.j0;
        let cols_t = task.cols_t;
        let base = task.base_row;
        let buf = &mut *task.buf;
        run_tile_column(w, x, tc, cols, &mut bufs, &mut |row0, rows_t, cir, _| {
            for j in 0..cols_t {
                let trow = out_sel[j0 + j];
                let dst = &mut buf[(trow - base) * m_rows + row0..(trow - base) * m_rows + row0 + rows_t];
                match ep {
                    Epilogue::None => {
                        for (r, d) in dst.iter_mut().enumerate() {
                            *d = cir[r * cols_t + j];
                        }
                    }
                    Epilogue::Activation(a) => {
                        for (r, d) in dst.iter_mut().enumerate() {
                            *d = a.apply(cir[r * cols_t + j]);
                        }
                    }
                    Epilogue::WeightedAccumulate { weights } => {
                        let wt = weights[j0 + j];
                        for (r, d) in dst.iter_mut().enumerate() {
                            *d += wt * cir[r * cols_t + j];
                        }
                    }
                }
            }
        });
    };

    #[cfg(feature = "parallel")]
    {
        if rayon::current_num_threads() > 1 {
            tasks.par_iter_mut().for_each(|t| run(t));
            return Ok(());
        }
    }
    tasks.iter_mut().for_each(|t| run(t));
    Ok(())
}

/// Dense tiled GEMM with the same blocking, staging, and microkernel
/// structure but no format decoding: the reference workload that does all
/// `m*k*n` multiplies (every sub-row present, no 4-group pruning).
pub fn dense_tiled(
    a: &DenseMatrix,
    x: &SelectedInput,
    tc: &TileConfig,
    ep: &Epilogue,
) -> Result<DenseMatrix> {
    if a.cols != x.k {
        return Err(Error::Shape(format!("a k={} but input k={}", a.cols, x.k)));
    }
    if a.cols % tc.k_b != 0 {
        return Err(Error::TileConfig(format!(
            "k={} not divisible by k_b={}",
            a.cols, tc.k_b
        )));
    }
    if let Epilogue::WeightedAccumulate { weights } = ep {
        if weights.len() != a.rows {
            return Err(Error::Shape("weighted accumulate weight length".into()));
        }
    }
    let n_out = x.sel.len();
    let mut out = DenseMatrix::zeros(a.rows, n_out);
    if out.values.is_empty() {
        return Ok(out);
    }
    let k_total = a.cols;
    let strip = tc.m_b * n_out;
    for_each_chunk(&mut out.values, strip, &|si, strip_buf| {
        let row0 = si * tc.m_b;
        let rows_t = strip_buf.len() / n_out;
        let ki_chunks = tc.k_b / K_I;
        let mut a_stage = vec![0.0f32; tc.num_pipe * tc.m_b * tc.k_b];
        let mut b_stage = vec![0.0f32; tc.num_pipe * tc.k_b * tc.n_b];
        let mut acc = vec![0.0f32; tc.m_b * tc.n_b];
        let mut a_frags = vec![0.0f32; tc.m_b.div_ceil(M_I) * ki_chunks * M_I * K_I];
        let mut b_frags = vec![0.0f32; (tc.n_b / N_I) * ki_chunks * K_I * N_I];
        let mut col0 = 0;
        while col0 < n_out {
            let cols_t = tc.n_b.min(n_out - col0);
            acc[..rows_t * cols_t].fill(0.0);
            let chunks = k_total / tc.k_b;
            let mut fetch = 0usize;
            for compute in 0..chunks {
                while fetch < compute + tc.num_pipe && fetch < chunks {
                    let slot = fetch % tc.num_pipe;
                    let asl = &mut a_stage[slot * tc.m_b * tc.k_b..][..rows_t * tc.k_b];
                    for r in 0..rows_t {
                        asl[r * tc.k_b..(r + 1) * tc.k_b].copy_from_slice(
                            &a.values[(row0 + r) * k_total + fetch * tc.k_b..][..tc.k_b],
                        );
                    }
                    let bsl = &mut b_stage[slot * tc.k_b * tc.n_b..][..tc.k_b * cols_t];
                    for (j, bcol) in (col0..col0 + cols_t).enumerate() {
                        let src = &x.data[bcol * k_total + fetch * tc.k_b..][..tc.k_b];
                        for (kk, v) in src.iter().enumerate() {
                            bsl[kk * cols_t + j] = *v;
                        }
                    }
                    fetch += 1;
                }
                let slot = compute % tc.num_pipe;
                let asl = &a_stage[slot * tc.m_b * tc.k_b..][..rows_t * tc.k_b];
                let bsl = &b_stage[slot * tc.k_b * tc.n_b..][..tc.k_b * cols_t];
                // Build A and B fragments once per k step.
                let row_chunks = rows_t.div_ceil(M_I);
                for rc in 0..row_chunks {
                    let rh = M_I.min(rows_t - rc * M_I);
                    for ki in 0..ki_chunks {
                        let frag = &mut a_frags[(rc * ki_chunks + ki) * M_I * K_I..][..M_I * K_I];
                        if rh < M_I {
                            frag.fill(0.0);
                        }
                        for r in 0..rh {
                            frag[r * K_I..(r + 1) * K_I].copy_from_slice(
                                &asl[(rc * M_I + r) * tc.k_b + ki * K_I..][..K_I],
                            );
                        }
                    }
                }
                let col_chunks = cols_t.div_ceil(N_I);
                for cj in 0..col_chunks {
                    let cw = N_I.min(cols_t - cj * N_I);
                    for ki in 0..ki_chunks {
                        let frag = &mut b_frags[(cj * ki_chunks + ki) * K_I * N_I..][..K_I * N_I];
                        if cw < N_I {
                            frag.fill(0.0);
                        }
                        for kk in 0..K_I {
                            let src = &bsl[(ki * K_I + kk) * cols_t + cj * N_I..][..cw];
                            frag[kk * N_I..kk * N_I + cw].copy_from_slice(src);
                        }
                    }
                }
                // Warp-tile traversal; m_w and n_w are multiples of the
                // instruction tile, so chunks only go ragged at tile edges.
                let mut wr = 0;
                while wr < rows_t {
                    let wrh = tc.m_w.min(rows_t - wr);
                    let mut wc = 0;
                    while wc < cols_t {
                        let wcw = tc.n_w.min(cols_t - wc);
                        let mut ri = 0;
                        while ri < wrh {
                            let rc = (wr + ri) / M_I;
                            let rh = M_I.min(wrh - ri);
                            let mut ci = 0;
                            while ci < wcw {
                                let cj = (wc + ci) / N_I;
                                let cw = N_I.min(wcw - ci);
                                let mut c_frag = [0.0f32; M_I * N_I];
                                for r in 0..rh {
                                    let src = &acc[(wr + ri + r) * cols_t + wc + ci..][..cw];
                                    c_frag[r * N_I..r * N_I + cw].copy_from_slice(src);
                                }
                                for ki in 0..ki_chunks {
                                    let fa = &a_frags[(rc * ki_chunks + ki) * M_I * K_I..]
                                        [..M_I * K_I];
                                    let fb =
                                        &b_frags[(cj * ki_chunks + ki) * K_I * N_I..][..K_I * N_I];
                                    dense_mma_frags(fa, fb, &mut c_frag);
                                }
                                for r in 0..rh {
                                    acc[(wr + ri + r) * cols_t + wc + ci..][..cw]
                                        .copy_from_slice(&c_frag[r * N_I..r * N_I + cw]);
                                }
                                ci += N_I;
                            }
                            ri += M_I;
                        }
                        wc += wcw;
                    }
                    wr += wrh;
                }
            }
            for r in 0..rows_t {
                let dst = &mut strip_buf[r * n_out + col0..r * n_out + col0 + cols_t];
                let src = &acc[r * cols_t..(r + 1) * cols_t];
                match ep {
                    Epilogue::None => dst.copy_from_slice(src),
                    Epilogue::Activation(act) => {
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d = act.apply(*s);
                        }
                    }
                    Epilogue::WeightedAccumulate { weights } => {
                        let wt = weights[row0 + r];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += wt * s;
                        }
                    }
                }
            }
            col0 += cols_t;
        }
    });
    Ok(out)
}

/// Dense 16x8x32 microkernel analog, ascending-k chain per element.
#[inline]
fn dense_mma_frags(a: &[f32], b: &[f32], c: &mut [f32]) {
    let a: &[[f32; K_I]; M_I] = a.as_chunks().0.try_into().expect("a fragment shape");
    let b: &[[f32; N_I]; K_I] = b.as_chunks().0.try_into().expect("b fragment shape");
    let c: &mut [[f32; N_I]; M_I] =
        c.as_chunks_mut().0.try_into().expect("c fragment shape");
    for r in 0..M_I {
        let arow = &a[r];
        let crow = &mut c[r];
        for (k, av) in arow.iter().enumerate() {
            let brow = &b[k];
            for i in 0..N_I {
                crow[i] += av * brow[i];
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Shared tiled executor internals
// ---------------------------------------------------------------------------

fn validate_dispatch(w: &SamoyedsWeight, x: &SelectedInput, tc: &TileConfig) -> Result<()> {
    tc.validate_for(&w.config)?;
    if w.cols != x.k {
        return Err(Error::Shape(format!(
            "weight k={} but input k={}",
            w.cols, x.k
        )));
    }
    let m = w.config.m;
    if let Some(&bad) = w.indices.iter().find(|&&i| i as u16 >= m) {
        return Err(Error::Index(format!("sub-row index {bad} >= m={m}")));
    }
    let storage_rows = w.storage_rows();
    if w.data.len() != storage_rows * w.data_cols()
        || w.metadata.len() != storage_rows * w.data_cols()
        || w.indices.len() != storage_rows * w.block_cols()
    {
        return Err(Error::CorruptFormat(
            "component buffer lengths inconsistent with shape".into(),
        ));
    }
    Ok(())
}

/// Maps each requested output column to its storage row in `x`. Every entry
/// of `out_sel` must appear in `x.sel`.
fn map_out_sel(x: &SelectedInput, out_sel: &[usize]) -> Result<Vec<usize>> {
    let mut map = Vec::with_capacity(out_sel.len());
    let mut cursor = 0usize;
    for (i, &want) in out_sel.iter().enumerate() {
        if i > 0 && out_sel[i - 1] >= want {
            return Err(Error::Selection(format!(
                "out_sel not strictly increasing at position {i}"
            )));
        }
        while cursor < x.sel.len() && x.sel[cursor] < want {
            cursor += 1;
        }
        if cursor >= x.sel.len() || x.sel[cursor] != want {
            return Err(Error::Selection(format!(
                "output column {want} is not among the selected input columns"
            )));
        }
        map.push(cursor);
    }
    Ok(map)
}

/// Runs `f(chunk_index, chunk)` over equal strips of `buf`, in parallel when
/// the `parallel` feature is on and the current rayon pool has more than one
/// thread, sequentially otherwise. Results are identical either way.
fn for_each_chunk(buf: &mut [f32], strip: usize, f: &(dyn Fn(usize, &mut [f32]) + Sync)) {
    #[cfg(feature = "parallel")]
    {
        if rayon::current_num_threads() > 1 {
            buf.par_chunks_mut(strip)
                .enumerate()
                .for_each(|(i, s)| f(i, s));
            return;
        }
    }
    for (i, s) in buf.chunks_mut(strip).enumerate() {
        f(i, s);
    }
}

/// Iterates all m tiles for one column strip, handing each finished block
/// tile (`row0`, `rows_t`, `cir`, `cols_t`) to the sink.
fn run_tile_column(
    w: &SamoyedsWeight,
    x: &SelectedInput,
    tc: &TileConfig,
    cols: &[usize],
    bufs: &mut TileBufs,
    sink: &mut dyn FnMut(usize, usize, &[f32], usize),
) {
    let mut row0 = 0;
    while row0 < w.rows {
        let rows_t = tc.m_b.min(w.rows - row0);
        compute_block_tile(w, x, cols, row0, rows_t, tc, bufs);
        sink(row0, rows_t, &bufs.cir, cols.len());
        row0 += rows_t;
    }
}

/// Scratch buffers reused across the block tiles one task computes.
struct TileBufs {
    /// Staged A panels, `num_pipe` x slots x k_b/2.
    a_stage: Vec<f32>,
    /// Staged metadata panels, same shape as `a_stage`.
    m_stage: Vec<u8>,
    /// Staged B panels, `num_pipe` x k_b x n_b, k-major.
    b_stage: Vec<f32>,
    /// Slot-row working accumulators, slots x n_b.
    acc: Vec<f32>,
    /// Output-row intermediate accumulators, m_b x n_b.
    cir: Vec<f32>,
    /// A fragments for the current k step, slot_chunks x ki_chunks x 256.
    a_frags: Vec<f32>,
    m_frags: Vec<u8>,
    /// B fragments for the current k step, col_chunks x ki_chunks x 256.
    b_frags: Vec<f32>,
    /// Scratch for one indices column.
    idx_col: Vec<u8>,
    slots_cap: usize,
}

impl TileBufs {
    fn new(w: &SamoyedsWeight, tc: &TileConfig) -> Self {
        let n = w.config.n as usize;
        let m = w.config.m as usize;
        let slots_cap = tc.m_b / m * n;
        let half_kb = tc.k_b / 2;
        let ki_chunks = tc.k_b / K_I;
        let slot_chunks = slots_cap.div_ceil(M_I);
        let col_chunks = tc.n_b / N_I;
        TileBufs {
            a_stage: vec![0.0; tc.num_pipe * slots_cap * half_kb],
            m_stage: vec![0u8; tc.num_pipe * slots_cap * half_kb],
            b_stage: vec![0.0; tc.num_pipe * tc.k_b * tc.n_b],
            acc: vec![0.0; slots_cap * tc.n_b],
            cir: vec![0.0; tc.m_b * tc.n_b],
            a_frags: vec![0.0; slot_chunks * ki_chunks * M_I * A_COLS],
            m_frags: vec![0u8; slot_chunks * ki_chunks * M_I * A_COLS],
            b_frags: vec![0.0; col_chunks * ki_chunks * K_I * N_I],
            idx_col: vec![0u8; slots_cap],
            slots_cap,
        }
    }
}

/// Canonical metadata for padded fragment rows: every unit codes (0, 1).
const PAD_META_ROW: [u8; A_COLS] = [0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1];

/// Computes one `rows_t x cols.len()` block tile of `C` into `bufs.cir`.
///
/// `row0` and `rows_t` are multiples of `cfg.m` (tile sizes are validated to
/// cover whole blocks, and `w.rows` is divisible by `m`).
fn compute_block_tile(
    w: &SamoyedsWeight,
    x: &SelectedInput,
    cols: &[usize],
    row0: usize,
    rows_t: usize,
    tc: &TileConfig,
    bufs: &mut TileBufs,
) {
    let cfg = &w.config;
    let (n, m, v) = (cfg.n as usize, cfg.m as usize, cfg.v as usize);
    let cols_t = cols.len();
    let slots_t = rows_t / m * n;
    let slot0 = row0 / m * n;
    let k_total = w.cols;
    let data_cols = w.data_cols();
    let block_cols = w.block_cols();
    let half_kb = tc.k_b / 2;
    let ki_chunks = tc.k_b / K_I;
    let per_col = v / tc.k_b;

    bufs.acc[..slots_t * cols_t].fill(0.0);
    bufs.cir[..rows_t * cols_t].fill(0.0);

    let chunks = k_total / tc.k_b;
    let stage_a = bufs.slots_cap * half_kb;
    let stage_b = tc.k_b * tc.n_b;
    let mut fetch = 0usize;
    for compute in 0..chunks {
        // Fetch stage: pack operand panels up to num_pipe chunks ahead.
        while fetch < compute + tc.num_pipe && fetch < chunks {
            let slot = fetch % tc.num_pipe;
            let asl = &mut bufs.a_stage[slot * stage_a..][..slots_t * half_kb];
            let msl = &mut bufs.m_stage[slot * stage_a..][..slots_t * half_kb];
            for s in 0..slots_t {
                let src = (slot0 + s) * data_cols + fetch * half_kb;
                asl[s * half_kb..(s + 1) * half_kb]
                    .copy_from_slice(&w.data[src..src + half_kb]);
                msl[s * half_kb..(s + 1) * half_kb]
                    .copy_from_slice(&w.metadata[src..src + half_kb]);
            }
            let bsl = &mut bufs.b_stage[slot * stage_b..][..tc.k_b * cols_t];
            for (j, &src_row) in cols.iter().enumerate() {
                let src = &x.data[src_row * k_total + fetch * tc.k_b..][..tc.k_b];
                for (kk, vv) in src.iter().enumerate() {
                    bsl[kk * cols_t + j] = *vv;
                }
            }
            fetch += 1;
        }

        // Crossing a sub-row boundary: route slot partials into output rows.
        if compute % per_col == 0 && compute > 0 {
            let b = compute / per_col - 1;
            for s in 0..slots_t {
                bufs.idx_col[s] = w.indices[(slot0 + s) * block_cols + b];
            }
            shuffle_slices(
                &mut bufs.acc,
                &mut bufs.cir,
                cols_t,
                n,
                m,
                &bufs.idx_col[..slots_t],
            );
        }

        // Compute stage: build fragments from the staged panels, then run
        // the warp-tile traversal dispatching the sparse MMA.
        let slot = compute % tc.num_pipe;
        let asl = &bufs.a_stage[slot * stage_a..][..slots_t * half_kb];
        let msl = &bufs.m_stage[slot * stage_a..][..slots_t * half_kb];
        let bsl = &bufs.b_stage[slot * stage_b..][..tc.k_b * cols_t];

        let slot_chunks = slots_t.div_ceil(M_I);
        for sc in 0..slot_chunks {
            let sh = M_I.min(slots_t - sc * M_I);
            for ki in 0..ki_chunks {
                let fa = &mut bufs.a_frags[(sc * ki_chunks + ki) * M_I * A_COLS..][..M_I * A_COLS];
                let fm = &mut bufs.m_frags[(sc * ki_chunks + ki) * M_I * A_COLS..][..M_I * A_COLS];
                for r in 0..sh {
                    let src = (sc * M_I + r) * half_kb + ki * A_COLS;
                    fa[r * A_COLS..(r + 1) * A_COLS].copy_from_slice(&asl[src..src + A_COLS]);
                    fm[r * A_COLS..(r + 1) * A_COLS].copy_from_slice(&msl[src..src + A_COLS]);
                }
                for r in sh..M_I {
                    fa[r * A_COLS..(r + 1) * A_COLS].fill(0.0);
                    fm[r * A_COLS..(r + 1) * A_COLS].copy_from_slice(&PAD_META_ROW);
                }
            }
        }
        let col_chunks = cols_t.div_ceil(N_I);
        for cj in 0..col_chunks {
            let cw = N_I.min(cols_t - cj * N_I);
            for ki in 0..ki_chunks {
                let frag = &mut bufs.b_frags[(cj * ki_chunks + ki) * K_I * N_I..][..K_I * N_I];
                if cw < N_I {
                    frag.fill(0.0);
                }
                for kk in 0..K_I {
                    let src = &bsl[(ki * K_I + kk) * cols_t + cj * N_I..][..cw];
                    frag[kk * N_I..kk * N_I + cw].copy_from_slice(src);
                }
            }
        }

        // Warp-tile traversal. Warp tile rows expressed in slots may straddle
        // the 16-slot fragment chunks (when m_w * n / m is not a multiple of
        // 16), so each instruction dispatch loads and stores only the
        // fragment row/column subrange the warp tile owns; rows outside the
        // range are computed against zeroed accumulator rows and discarded.
        let warp_slots = (tc.m_w / m * n).max(1);
        let mut wr = 0;
        while wr < slots_t {
            let wh = warp_slots.min(slots_t - wr);
            let mut wc = 0;
            while wc < cols_t {
                let ww = tc.n_w.min(cols_t - wc);
                let mut r_lo = wr;
                while r_lo < wr + wh {
                    let sc = r_lo / M_I;
                    let r_hi = ((sc + 1) * M_I).min(wr + wh);
                    let fr0 = r_lo - sc * M_I;
                    let frn = r_hi - r_lo;
                    let mut c_lo = wc;
                    while c_lo < wc + ww {
                        let cj = c_lo / N_I;
                        let c_hi = ((cj + 1) * N_I).min(wc + ww);
                        let fc0 = c_lo - cj * N_I;
                        let fcn = c_hi - c_lo;
                        let mut c_frag = [0.0f32; M_I * N_I];
                        for r in 0..frn {
                            let src = &bufs.acc[(r_lo + r) * cols_t + c_lo..][..fcn];
                            c_frag[(fr0 + r) * N_I + fc0..][..fcn].copy_from_slice(src);
                        }
                        for ki in 0..ki_chunks {
                            let fa = &bufs.a_frags[(sc * ki_chunks + ki) * M_I * A_COLS..]
                                [..M_I * A_COLS];
                            let fm = &bufs.m_frags[(sc * ki_chunks + ki) * M_I * A_COLS..]
                                [..M_I * A_COLS];
                            let fb =
                                &bufs.b_frags[(cj * ki_chunks + ki) * K_I * N_I..][..K_I * N_I];
                            sp_mma_frags(fa, fm, fb, &mut c_frag);
                        }
                        for r in 0..frn {
                            bufs.acc[(r_lo + r) * cols_t + c_lo..][..fcn]
                                .copy_from_slice(&c_frag[(fr0 + r) * N_I + fc0..][..fcn]);
                        }
                        c_lo = c_hi;
                    }
                    r_lo = r_hi;
                }
                wc += ww;
            }
            wr += wh;
        }
    }

    // Final boundary: flush the last block column's partials.
    if block_cols > 0 {
        let b = block_cols - 1;
        for s in 0..slots_t {
            bufs.idx_col[s] = w.indices[(slot0 + s) * block_cols + b];
        }
        shuffle_slices(
            &mut bufs.acc,
            &mut bufs.cir,
            cols_t,
            n,
            m,
            &bufs.idx_col[..slots_t],
        );
    }
}
