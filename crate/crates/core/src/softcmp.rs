//! Soft-comparator decision trees and the analytic cost model of running a
//! boosted ensemble that way under HE.

use serde::{Deserialize, Serialize};

use ndarray::ArrayView2;

use crate::ensemble::{DecisionTree, TreeNode};
use crate::error::{Error, Result};
use crate::hesim::OpCounts;

pub const DEFAULT_ALPHA_MAX: f64 = 1e4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SoftCmpMode {
    ScaledSigmoid,
    Power,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SoftCmpParams {
    pub mode: SoftCmpMode,
    pub alpha: f64,
    pub k: u32,
    pub alpha_max: f64,
}

impl Default for SoftCmpParams {
    fn default() -> Self {
        SoftCmpParams {
            mode: SoftCmpMode::ScaledSigmoid,
            alpha: 8.0,
            k: 10,
            alpha_max: DEFAULT_ALPHA_MAX,
        }
    }
}

impl SoftCmpParams {
    pub fn sigmoid(alpha: f64) -> Self {
        SoftCmpParams {
            alpha,
            ..Self::default()
        }
    }

    pub fn power(k: u32) -> Self {
        SoftCmpParams {
            mode: SoftCmpMode::Power,
            k,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.mode {
            SoftCmpMode::ScaledSigmoid if !(self.alpha > 0.0 && self.alpha <= self.alpha_max) => Err(
                Error::InvalidParam(format!("alpha {} must lie in (0, {}]", self.alpha, self.alpha_max)),
            ),
            SoftCmpMode::Power if self.k < 1 => Err(Error::InvalidParam("k must be at least 1".into())),
            _ => Ok(()),
        }
    }

    /// Soft version of `a >= b`.
    pub fn compare(&self, a: f64, b: f64) -> Result<f64> {
        match self.mode {
            SoftCmpMode::ScaledSigmoid => Ok(scaled_sigmoid_cmp(a, b, self.alpha)),
            SoftCmpMode::Power => power_cmp(a, b, self.k),
        }
    }
}

/// `1 / (1 + exp(-alpha (a - b)))`
pub fn scaled_sigmoid_cmp(a: f64, b: f64, alpha: f64) -> f64 {
    1.0 / (1.0 + (-alpha * (a - b)).exp())
}

/// `a^k / (a^k + b^k)` for positive `a`, `b`.
pub fn power_cmp(a: f64, b: f64, k: u32) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::InvalidParam(format!(
            "power comparator needs positive inputs, got ({a}, {b})"
        )));
    }
    // Ratio form avoids overflowing a^k and b^k separately.
    Ok(1.0 / (1.0 + (b / a).powi(k as i32)))
}

/// Smallest α with `α |t_n - x_f| >= 8` at every (node, point) pair, i.e.
/// `8 / min gap`, clamped to `alpha_max`. Exact ties are skipped.
pub fn select_alpha(tree: &DecisionTree, x: ArrayView2<'_, f64>, alpha_max: f64) -> Result<f64> {
    if x.nrows() == 0 {
        return Err(Error::Empty("no representative points".into()));
    }
    let mut min_gap = f64::INFINITY;
    tree.root.for_each_split(&mut |feature, threshold| {
        for v in x.column(feature) {
            let gap = (threshold - v).abs();
            if gap > 0.0 && gap < min_gap {
                min_gap = gap;
            }
        }
    });
    if !min_gap.is_finite() {
        return Err(Error::Degenerate(
            "no (node, point) pair with a nonzero gap to choose alpha from".into(),
        ));
    }
    Ok((8.0 / min_gap).min(alpha_max))
}

/// Per-class scores: each leaf receives the product of soft branch
/// decisions along its path, `s` going right and `1 - s` going left.
pub fn soft_tree_eval(tree: &DecisionTree, x: &[f64], params: &SoftCmpParams) -> Result<Vec<f64>> {
    params.validate()?;
    let mut scores = vec![0.0; tree.n_classes];
    accumulate(&tree.root, x, params, 1.0, &mut scores)?;
    Ok(scores)
}

fn accumulate(node: &TreeNode, x: &[f64], params: &SoftCmpParams, weight: f64, scores: &mut [f64]) -> Result<()> {
    match node {
        TreeNode::Leaf { class } => {
            scores[*class] += weight;
            Ok(())
        }
        TreeNode::Internal {
            feature,
            threshold,
            left,
            right,
        } => {
            let v = *x
                .get(*feature)
                .ok_or_else(|| Error::Shape(format!("feature {feature} missing from a {}-vector", x.len())))?;
            let s = params.compare(v, *threshold)?;
            accumulate(left, x, params, weight * (1.0 - s), scores)?;
            accumulate(right, x, params, weight * s, scores)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostModelParams {
    pub n_trees: usize,
    pub n_threads: usize,
    pub tree_depth: u32,
    pub bootstraps_per_cmp: (u32, u32),
    pub bootstrap_time_s: f64,
}

impl Default for CostModelParams {
    fn default() -> Self {
        CostModelParams {
            n_trees: 100,
            n_threads: 32,
            tree_depth: 5,
            bootstraps_per_cmp: (5, 10),
            bootstrap_time_s: 0.01,
        }
    }
}

impl CostModelParams {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.bootstraps_per_cmp;
        if self.n_trees == 0 || self.n_threads == 0 || self.tree_depth == 0 || lo == 0 {
            return Err(Error::InvalidParam("cost model counts must be positive".into()));
        }
        if lo > hi {
            return Err(Error::InvalidParam(format!("bootstrap range ({lo}, {hi}) is reversed")));
        }
        if !(self.bootstrap_time_s > 0.0) {
            return Err(Error::InvalidParam("bootstrap time must be positive".into()));
        }
        Ok(())
    }

    /// Sequential rounds of trees when each thread evaluates one tree.
    pub fn tree_batches(&self) -> usize {
        self.n_trees.div_ceil(self.n_threads)
    }

    /// Internal nodes of a complete tree of the configured depth.
    pub fn comparisons_per_tree(&self) -> u64 {
        (1u64 << self.tree_depth) - 1
    }
}

/// Amortized seconds per point for the soft-comparator ensemble, at the
/// low and high bootstrap counts.
pub fn cost_estimate(p: &CostModelParams) -> Result<(f64, f64)> {
    p.validate()?;
    let per_boot = p.comparisons_per_tree() as f64 * p.bootstrap_time_s * p.tree_batches() as f64;
    let (lo, hi) = p.bootstraps_per_cmp;
    Ok((per_boot * lo as f64, per_boot * hi as f64))
}

/// Assumed latency of each simulated HE operation on one full ciphertext.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OpLatency {
    pub ct_ct_mul_s: f64,
    pub ct_pt_mul_s: f64,
    pub add_s: f64,
    pub n_threads: usize,
}

impl Default for OpLatency {
    fn default() -> Self {
        OpLatency {
            ct_ct_mul_s: 0.2,
            ct_pt_mul_s: 0.05,
            add_s: 0.005,
            n_threads: 32,
        }
    }
}

/// Amortized seconds per point of a DTNet inference that performed `ops`
/// on ciphertexts of `slots` points each, with operations spread evenly
/// over the threads.
pub fn dtnet_cost_proxy(ops: &OpCounts, slots: usize, lat: &OpLatency) -> Result<f64> {
    if slots == 0 || lat.n_threads == 0 {
        return Err(Error::InvalidParam("slots and threads must be positive".into()));
    }
    let total =
        ops.ct_ct_mul as f64 * lat.ct_ct_mul_s + ops.ct_pt_mul as f64 * lat.ct_pt_mul_s + ops.add as f64 * lat.add_s;
    Ok(total / (slots as f64 * lat.n_threads as f64))
}
