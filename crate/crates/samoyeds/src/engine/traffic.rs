//! Closed-form memory-traffic model for dual-side sparse matmul layouts.
//!
//! Models one pass over the operands of `C[m x n_sel] = A[m x k] . B[k x n]`
//! where only a fraction of B's columns is selected and only `n/m` of A's
//! sub-rows carry data. Byte counts are stated definitions (Figure-6-style
//! qualitative schemes made exact), not measurements:
//!
//! - `dense`: loads both operands in full.
//! - `skip_row_naive`: skips pruned A sub-rows but loads full B rows,
//!   including the unselected column halves (I/O amplification on B).
//! - `skip_col_naive`: loads only selected B columns but full A rows,
//!   including the pruned sub-row halves (I/O amplification on A).
//! - `uncoalesced`: loads exactly the needed cells one element at a time;
//!   every element costs a whole 32-byte sector, and one transaction each.
//! - `samoyeds`: loads exactly `n/m` of A and `sel/total` of B, coalesced.
//!
//! Coalesced schemes move 128-byte transactions; the uncoalesced scheme
//! moves one 32-byte sector per 4-byte element (coalesced fraction 0.125).

use super::TileConfig;
use crate::format::SparseFormatConfig;

const ELEM: u64 = 4;
const TRANSACTION: u64 = 128;
const SECTOR: u64 = 32;

/// Loading scheme being modeled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrafficScheme {
    Dense,
    SkipRowNaive,
    SkipColNaive,
    Uncoalesced,
    Samoyeds,
}

impl TrafficScheme {
    pub const ALL: [TrafficScheme; 5] = [
        TrafficScheme::Dense,
        TrafficScheme::SkipRowNaive,
        TrafficScheme::SkipColNaive,
        TrafficScheme::Uncoalesced,
        TrafficScheme::Samoyeds,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            TrafficScheme::Dense => "dense",
            TrafficScheme::SkipRowNaive => "skip_row_naive",
            TrafficScheme::SkipColNaive => "skip_col_naive",
            TrafficScheme::Uncoalesced => "uncoalesced",
            TrafficScheme::Samoyeds => "samoyeds",
        }
    }
}

impl std::str::FromStr for TrafficScheme {
    type Err = crate::error::Error;
    fn from_str(s: &str) -> crate::error::Result<Self> {
        TrafficScheme::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| crate::error::Error::Shape(format!("unknown traffic scheme '{s}'")))
    }
}

/// Byte and transaction counts for one scheme on one problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrafficReport {
    pub scheme: TrafficScheme,
    pub bytes_loaded_a: u64,
    pub bytes_loaded_b: u64,
    pub transactions: u64,
    pub coalesced_fraction: f64,
}

impl TrafficReport {
    pub fn total_bytes(&self) -> u64 {
        self.bytes_loaded_a + self.bytes_loaded_b
    }
}

/// Evaluates the closed-form traffic of `scheme` on an `(m, k, n)` problem
/// with weight sub-row density `cfg.n / cfg.m` and the given selection
/// fraction. The tile config does not change the closed forms (each operand
/// byte is counted once per its loading rule); it is accepted so callers can
/// pass the configuration they run with.
pub fn simulate_memory_traffic(
    shape: (usize, usize, usize),
    cfg: &SparseFormatConfig,
    input_sel_fraction: f64,
    _tc: &TileConfig,
    scheme: TrafficScheme,
) -> TrafficReport {
    let (m, k, n) = shape;
    let f = input_sel_fraction.clamp(0.0, 1.0);
    let d = cfg.subrow_density();
    let a_dense = (m * k) as u64 * ELEM;
    let b_dense = (k * n) as u64 * ELEM;
    let a_needed = ((m * k) as f64 * d).round() as u64 * ELEM;
    let b_needed = ((k * n) as f64 * f).round() as u64 * ELEM;

    let (bytes_a, bytes_b, transactions, coalesced) = match scheme {
        TrafficScheme::Dense => {
            let total = a_dense + b_dense;
            (a_dense, b_dense, total.div_ceil(TRANSACTION), 1.0)
        }
        TrafficScheme::SkipRowNaive => {
            let total = a_needed + b_dense;
            (a_needed, b_dense, total.div_ceil(TRANSACTION), 1.0)
        }
        TrafficScheme::SkipColNaive => {
            let total = a_dense + b_needed;
            (a_dense, b_needed, total.div_ceil(TRANSACTION), 1.0)
        }
        TrafficScheme::Uncoalesced => {
            let elems_a = a_needed / ELEM;
            let elems_b = b_needed / ELEM;
            (
                elems_a * SECTOR,
                elems_b * SECTOR,
                elems_a + elems_b,
                ELEM as f64 / SECTOR as f64,
            )
        }
        TrafficScheme::Samoyeds => {
            let total = a_needed + b_needed;
            (a_needed, b_needed, total.div_ceil(TRANSACTION), 1.0)
        }
    };
    TrafficReport {
        scheme,
        bytes_loaded_a: bytes_a,
        bytes_loaded_b: bytes_b,
        transactions,
        coalesced_fraction: coalesced,
    }
}
