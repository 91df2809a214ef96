//! Dual-side structured sparse matrix kernels for MoE workloads.
//!
//! The weight side composes two sparsity patterns: per `M x V` block only `N`
//! sub-rows (1 x V vectors) are retained, and each retained sub-row obeys the
//! 2:4 element constraint (2 values stored per aligned group of 4). The
//! activation side carries a selection array (SEL) naming which columns
//! (tokens) participate. `engine` multiplies the two encoded operands
//! directly; `moe` builds a full expert layer on top of it.
//!
//! Modules:
//! - [`format`]: the (N,M,V)+2:4 codec, metadata panel packing, binary
//!   serialization.
//! - [`prune`]: magnitude pruning of dense weights onto the pattern.
//! - [`sptc`]: the 16x8x32 sparse instruction-tile emulator used by the
//!   engine's inner loop.
//! - [`engine`]: tiled sparse-sparse matmul with accumulator shuffle, fused
//!   epilogues, compressed output layout, and a memory-traffic model.
//! - [`moe`]: top-k routing and gated-MLP experts evaluated in compressed
//!   layouts end to end.
//!
//! With the default `parallel` feature the engine distributes block tiles
//! over a rayon pool; outputs are bitwise identical to the sequential
//! scheduler at any thread count.

pub mod dense;
pub mod engine;
pub mod error;
pub mod format;
pub mod moe;
pub mod prune;
pub mod sptc;

pub use dense::DenseMatrix;
pub use engine::{
    dense_tiled, shuffle_accumulators, simulate_memory_traffic, spmm_compressed_into,
    spmm_compressed_out, spmm_reference, spmm_tiled, spmm_tiled_into, Activation, Epilogue,
    TileConfig, TrafficReport, TrafficScheme,
};
pub use error::{Error, Result};
pub use format::{
    compress_input, decode_weight, deserialize, encode_weight, memory_footprint, pack_metadata,
    serialize, unpack_metadata, validate_weight, FootprintReport, SamoyedsWeight, SelectedInput,
    SparseFormatConfig, Violation,
};
pub use moe::{expert_forward, moe_forward, route_tokens, ExpertWeights, MoEConfig, RoutingResult};
pub use prune::{prune_to_format, subrow_scores, PruneReport};
pub use sptc::{sp_mma_tile, InstructionTile};
