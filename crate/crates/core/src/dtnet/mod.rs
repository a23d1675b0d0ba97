//! The student network: dense layers with polynomial activations, its
//! trainer, and the multiplicative-depth analyzer.
//!
//! Depth counts every multiplication by a ciphertext or by an encoded
//! constant as one level and additions as free. A dense layer with
//! replicated weights costs one level, an activation `A` costs `Φ(A)`
//! levels, so a net with hidden activations `A_1..A_L` has depth
//! `Σ (Φ(A_i) + 1) + 1`.

mod activation;
mod net;
mod train;

pub use activation::{power_depth, power_split, term_depth, term_split, PolyActivation, BUILTIN_NAMES};
pub use net::{
    arch_to_json_value, argmax_rows, cross_entropy, one_hot, softmax, DTNetArch, DTNetModel, DenseLayer, Dropout,
    ForwardCache, Gradients, HiddenLayer,
};
pub use train::{dataset_loss, train_dtnet, train_from, Targets, TrainConfig, TrainHistory};

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::util;

/// Logits for a batch. `train_dropout = Some((rate, seed))` enables
/// inverted dropout after each hidden activation.
pub fn net_forward(
    m: &DTNetModel,
    x: ArrayView2<'_, f64>,
    train_dropout: Option<(f64, u64)>,
) -> Result<(Array2<f64>, ForwardCache)> {
    match train_dropout {
        None => m.forward(x, None, true),
        Some((rate, seed)) => {
            let mut rng = util::rng(seed);
            m.forward(x, Some(Dropout { rate, rng: &mut rng }), true)
        }
    }
}

pub fn net_predict(m: &DTNetModel, x: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
    Ok(argmax_rows(&m.logits(x)?))
}

/// Multiplicative depth of the one- and two-hidden-layer templates:
/// `Φ(A) + 2` and `Φ(A1) + Φ(A2) + 3`.
pub fn multiplicative_depth(arch: &DTNetArch) -> Result<usize> {
    let h = arch.hidden();
    if !(1..=2).contains(&h.len()) {
        return Err(Error::InvalidParam(format!(
            "unsupported hidden layer count {}; the template has one or two",
            h.len()
        )));
    }
    Ok(h.iter().map(|l| l.activation.depth() + 1).sum::<usize>() + 1)
}
