//! Mixture-of-experts layer over encoded expert weights.
//!
//! Routing produces one selection array per expert (the token ids it serves,
//! ascending); each expert's gated MLP then runs entirely in compressed
//! layouts: gate and up projections emit [`SelectedInput`]s over the
//! intermediate dimension, the activation is fused into the gate projection,
//! and the down projection accumulates `gate_weight * row` straight into the
//! shared output buffer. No intermediate ever expands to the full token
//! dimension and there is no separate un-permutation pass.
//!
//! Experts are evaluated in ascending id order (routed, then shared) so the
//! per-token accumulation chain is fixed; the engine parallelizes inside
//! each call. Router logits are an input: generating them is the caller's
//! concern.

use crate::dense::DenseMatrix;
use crate::engine::{spmm_compressed_into, spmm_compressed_out, Activation, Epilogue, TileConfig};
use crate::error::{Error, Result};
use crate::format::{SamoyedsWeight, SelectedInput};

/// Layer-level configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MoEConfig {
    pub num_experts: usize,
    pub top_k: usize,
    pub hidden: usize,
    pub intermediate: usize,
    pub num_shared: usize,
    pub activation: Activation,
}

impl MoEConfig {
    pub fn validate(&self) -> Result<()> {
        if self.top_k == 0 || self.top_k > self.num_experts {
            return Err(Error::Shape(format!(
                "need 1 <= top_k <= num_experts, got top_k={} experts={}",
                self.top_k, self.num_experts
            )));
        }
        Ok(())
    }
}

/// One expert's three projections, all encoded.
#[derive(Debug, Clone)]
pub struct ExpertWeights {
    /// `intermediate x hidden`.
    pub gate_proj: SamoyedsWeight,
    /// `intermediate x hidden`.
    pub up_proj: SamoyedsWeight,
    /// `hidden x intermediate`.
    pub down_proj: SamoyedsWeight,
}

impl ExpertWeights {
    fn check_shapes(&self, cfg: &MoEConfig) -> Result<()> {
        let want = [
            ("gate_proj", &self.gate_proj, cfg.intermediate, cfg.hidden),
            ("up_proj", &self.up_proj, cfg.intermediate, cfg.hidden),
            ("down_proj", &self.down_proj, cfg.hidden, cfg.intermediate),
        ];
        for (name, w, rows, cols) in want {
            if w.rows != rows || w.cols != cols {
                return Err(Error::Shape(format!(
                    "{name} is {}x{}, expected {rows}x{cols}",
                    w.rows, w.cols
                )));
            }
        }
        Ok(())
    }
}

/// Routing outcome: per-token expert assignments and per-expert selection
/// arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingResult {
    /// For each token, its `top_k` `(expert id, gate weight)` pairs in
    /// selection order (descending logit).
    pub per_token: Vec<Vec<(usize, f32)>>,
    /// For each expert, the token ids routed to it, ascending.
    pub expert_sel: Vec<Vec<usize>>,
}

/// Selects the `top_k` largest logits per token (ties to the lower expert
/// id) and softmax-normalizes the selected logits into gate weights.
pub fn route_tokens(logits: &DenseMatrix, top_k: usize) -> Result<RoutingResult> {
    let num_experts = logits.cols;
    if top_k == 0 || top_k > num_experts {
        return Err(Error::Shape(format!(
            "top_k={top_k} out of range for {num_experts} experts"
        )));
    }
    let mut per_token = Vec::with_capacity(logits.rows);
    let mut expert_sel = vec![Vec::new(); num_experts];
    for t in 0..logits.rows {
        let row = logits.row(t);
        let mut order: Vec<usize> = (0..num_experts).collect();
        order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        let chosen = &order[..top_k];

        let max = chosen.iter().map(|&e| row[e]).fold(f32::NEG_INFINITY, f32::max);
        let exps: Vec<f32> = chosen.iter().map(|&e| (row[e] - max).exp()).collect();
        let denom: f32 = exps.iter().sum();
        let pairs: Vec<(usize, f32)> = chosen
            .iter()
            .zip(&exps)
            .map(|(&e, &x)| (e, x / denom))
            .collect();
        for &(e, _) in &pairs {
            expert_sel[e].push(t);
        }
        per_token.push(pairs);
    }
    Ok(RoutingResult {
        per_token,
        expert_sel,
    })
}

/// Rowwise product of two selections over the same tokens.
fn hadamard(a: &SelectedInput, b: &SelectedInput) -> Result<SelectedInput> {
    if a.sel != b.sel || a.k != b.k {
        return Err(Error::Shape("hadamard operands differ in selection".into()));
    }
    let mut out = a.clone();
    for (o, r) in out.data.iter_mut().zip(&b.data) {
        *o *= r;
    }
    Ok(out)
}

/// One expert's gated MLP, `down(act(gate(x)) * up(x))`, computed entirely
/// in compressed layouts. Input and output are selections over the hidden
/// dimension whose columns are this expert's tokens.
pub fn expert_forward(
    ew: &ExpertWeights,
    x_sel: &SelectedInput,
    cfg: &MoEConfig,
    tc: &TileConfig,
) -> Result<SelectedInput> {
    ew.check_shapes(cfg)?;
    if x_sel.k != cfg.hidden {
        return Err(Error::Shape(format!(
            "input k={} but hidden={}",
            x_sel.k, cfg.hidden
        )));
    }
    let gated = spmm_compressed_out(
        &ew.gate_proj,
        x_sel,
        tc,
        &Epilogue::Activation(cfg.activation),
        &x_sel.sel,
    )?;
    let up = spmm_compressed_out(&ew.up_proj, x_sel, tc, &Epilogue::None, &x_sel.sel)?;
    let h = hadamard(&gated, &up)?;
    spmm_compressed_out(&ew.down_proj, &h, tc, &Epilogue::None, &h.sel)
}

/// Full MoE layer: `out[t] = sum_(e,g) g * expert_e(x[t]) + sum_s shared_s(x[t])`.
///
/// `x` is `tokens x hidden` (row per token), `logits` is
/// `tokens x num_experts`. The weighted sum runs through the engine's
/// weighted-accumulate epilogue; experts with no routed tokens are skipped.
pub fn moe_forward(
    experts: &[ExpertWeights],
    shared: &[ExpertWeights],
    x: &DenseMatrix,
    logits: &DenseMatrix,
    cfg: &MoEConfig,
    tc: &TileConfig,
) -> Result<DenseMatrix> {
    cfg.validate()?;
    if experts.len() != cfg.num_experts {
        return Err(Error::Shape(format!(
            "{} experts provided, config says {}",
            experts.len(),
            cfg.num_experts
        )));
    }
    if shared.len() != cfg.num_shared {
        return Err(Error::Shape(format!(
            "{} shared experts provided, config says {}",
            shared.len(),
            cfg.num_shared
        )));
    }
    if x.cols != cfg.hidden {
        return Err(Error::Shape(format!(
            "input width {} != hidden {}",
            x.cols, cfg.hidden
        )));
    }
    if logits.rows != x.rows || logits.cols != cfg.num_experts {
        return Err(Error::Shape(format!(
            "logits {}x{} do not match {} tokens x {} experts",
            logits.rows, logits.cols, x.rows, cfg.num_experts
        )));
    }

    let routing = route_tokens(logits, cfg.top_k)?;
    let mut out = DenseMatrix::zeros(x.rows, cfg.hidden);

    for (e, ew) in experts.iter().enumerate() {
        let sel = &routing.expert_sel[e];
        if sel.is_empty() {
            continue;
        }
        let weights: Vec<f32> = sel
            .iter()
            .map(|&t| {
                routing.per_token[t]
                    .iter()
                    .find(|(ee, _)| *ee == e)
                    .map(|(_, g)| *g)
                    .unwrap_or(0.0)
            })
            .collect();
        forward_accumulate(ew, x, sel, &weights, cfg, tc, &mut out)?;
    }

    let all_tokens: Vec<usize> = (0..x.rows).collect();
    let unit = vec![1.0f32; x.rows];
    for ew in shared {
        if x.rows == 0 {
            break;
        }
        forward_accumulate(ew, x, &all_tokens, &unit, cfg, tc, &mut out)?;
    }
    Ok(out)
}

/// Runs one expert and adds `weight[t] * result[t]` into the output rows,
/// fusing the weighted sum into the down projection's write-back.
fn forward_accumulate(
    ew: &ExpertWeights,
    x: &DenseMatrix,
    sel: &[usize],
    weights: &[f32],
    cfg: &MoEConfig,
    tc: &TileConfig,
    out: &mut DenseMatrix,
) -> Result<()> {
    ew.check_shapes(cfg)?;
    let x_sel = SelectedInput::from_token_rows(x, sel)?;
    let gated = spmm_compressed_out(
        &ew.gate_proj,
        &x_sel,
        tc,
        &Epilogue::Activation(cfg.activation),
        sel,
    )?;
    let up = spmm_compressed_out(&ew.up_proj, &x_sel, tc, &Epilogue::None, sel)?;
    let h = hadamard(&gated, &up)?;
    spmm_compressed_into(
        &ew.down_proj,
        &h,
        tc,
        &Epilogue::WeightedAccumulate {
            weights: weights.to_vec(),
        },
        sel,
        out,
    )
}
