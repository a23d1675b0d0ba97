use ndarray::{s, Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CipherVec, Evaluator, OpCounts, Operand};
use crate::dtnet::{DTNetModel, DenseLayer};
use crate::error::{Error, Result};

/// Recursion depth below which dot-product halves run concurrently.
pub const DEFAULT_SPLIT_LIMIT: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferenceOutput {
    /// Decrypted logits, points x classes.
    pub scores: Array2<f64>,
    pub final_level: usize,
    pub ops: OpCounts,
}

fn dense(
    ev: &Evaluator,
    layer: &DenseLayer,
    inputs: &[CipherVec],
    weights_encrypted: bool,
    split_limit: usize,
) -> Result<Vec<CipherVec>> {
    let (fan_in, fan_out) = layer.weights.dim();
    if fan_in != inputs.len() {
        return Err(Error::Shape(format!(
            "layer expects {fan_in} inputs, got {}",
            inputs.len()
        )));
    }
    (0..fan_out)
        .into_par_iter()
        .map(|j| {
            let w: Vec<Operand> = (0..fan_in)
                .map(|i| ev.encode_weight(layer.weights[[i, j]], weights_encrypted))
                .collect::<Result<_>>()?;
            let dot = ev.dot_recursive(&w, inputs, split_limit)?;
            ev.add_operand(&dot, &ev.encode_weight(layer.bias[j], weights_encrypted)?)
        })
        .collect()
}

fn infer_on(
    ev: &Evaluator,
    model: &DTNetModel,
    x: ArrayView2<'_, f64>,
    weights_encrypted: bool,
) -> Result<(Array2<f64>, usize)> {
    if x.ncols() != model.arch().input_dim() {
        return Err(Error::Shape(format!(
            "input has {} columns, network expects {}",
            x.ncols(),
            model.arch().input_dim()
        )));
    }
    let mut h = ev.encrypt_batch(x)?;
    let hidden = model.arch().hidden();
    for (li, layer) in model.layers().iter().enumerate() {
        let z = dense(ev, layer, &h, weights_encrypted, DEFAULT_SPLIT_LIMIT)?;
        h = match hidden.get(li) {
            Some(spec) => z
                .par_iter()
                .map(|c| ev.poly_activation(&spec.activation, c))
                .collect::<Result<_>>()?,
            None => z,
        };
    }
    let level = h.iter().map(CipherVec::level).max().unwrap_or(0);
    Ok((ev.decrypt_scores(&h, x.nrows())?, level))
}

/// Encrypted forward pass over one slot-packed batch of at most `C` points.
pub fn he_infer(
    ev: &Evaluator,
    model: &DTNetModel,
    x: ArrayView2<'_, f64>,
    weights_encrypted: bool,
) -> Result<InferenceOutput> {
    if x.nrows() == 0 {
        return Err(Error::Empty("no points to classify".into()));
    }
    let before = ev.op_counts();
    let (scores, final_level) = infer_on(ev, model, x, weights_encrypted)?;
    Ok(InferenceOutput {
        scores,
        final_level,
        ops: diff(ev.op_counts(), before),
    })
}

/// Splits `x` into consecutive `C`-point batches.
pub fn he_infer_batched(
    ev: &Evaluator,
    model: &DTNetModel,
    x: ArrayView2<'_, f64>,
    weights_encrypted: bool,
) -> Result<InferenceOutput> {
    if x.nrows() == 0 {
        return Err(Error::Empty("no points to classify".into()));
    }
    let before = ev.op_counts();
    let c = ev.params().slots;
    let mut scores = Array2::zeros((x.nrows(), model.arch().output_dim()));
    let mut final_level = 0;
    for start in (0..x.nrows()).step_by(c) {
        let end = (start + c).min(x.nrows());
        let (s, level) = infer_on(ev, model, x.slice(s![start..end, ..]), weights_encrypted)?;
        scores.slice_mut(s![start..end, ..]).assign(&s);
        final_level = final_level.max(level);
    }
    Ok(InferenceOutput {
        scores,
        final_level,
        ops: diff(ev.op_counts(), before),
    })
}

fn diff(a: OpCounts, b: OpCounts) -> OpCounts {
    OpCounts {
        ct_ct_mul: a.ct_ct_mul - b.ct_ct_mul,
        ct_pt_mul: a.ct_pt_mul - b.ct_pt_mul,
        add: a.add - b.add,
        encrypt: a.encrypt - b.encrypt,
    }
}
