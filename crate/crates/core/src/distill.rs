//! Depth-constrained distillation: label synthetic data with the teacher,
//! train student candidates that fit the depth budget, keep the one that
//! agrees with the teacher most often on held-out synthetic points.

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::ColumnKind;
use crate::dtnet::{
    arch_to_json_value, multiplicative_depth, net_predict, train_dtnet, DTNetArch, DTNetModel, HiddenLayer,
    PolyActivation, Targets, TrainConfig, BUILTIN_NAMES,
};
use crate::ensemble::{ensemble_predict, AdaBoostModel};
use crate::error::{Error, Result};
use crate::munge::{munge_generate, MungeParams};
use crate::util::{self, accuracy};

/// Added to the transfer-set seed to draw the validation set independently.
pub const VALIDATION_SEED_OFFSET: u64 = 0x9E37_79B9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchSpace {
    pub one_layer_widths: Vec<usize>,
    /// Each entry `w` is the skeleton `w|w`.
    pub two_layer_widths: Vec<usize>,
    pub activations: Vec<String>,
    pub depth_budget: usize,
    /// Try every activation pair for two-layer skeletons instead of one
    /// activation per network.
    pub mixed_activations: bool,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            one_layer_widths: vec![8, 16, 32, 64],
            two_layer_widths: vec![8, 16, 32, 64],
            activations: BUILTIN_NAMES.iter().map(|s| s.to_string()).collect(),
            depth_budget: 10,
            mixed_activations: false,
        }
    }
}

impl SearchSpace {
    /// Every architecture in declaration order: one-layer skeletons first,
    /// activations varying fastest.
    pub fn architectures(&self, input_dim: usize, n_classes: usize) -> Result<Vec<DTNetArch>> {
        let acts: Vec<PolyActivation> = self
            .activations
            .iter()
            .map(|n| PolyActivation::by_name(n))
            .collect::<Result<_>>()?;
        let mut out = Vec::new();
        for &w in &self.one_layer_widths {
            for a in &acts {
                out.push(DTNetArch::new(
                    input_dim,
                    vec![HiddenLayer::new(w, a.clone())],
                    n_classes,
                )?);
            }
        }
        for &w in &self.two_layer_widths {
            for a in &acts {
                if self.mixed_activations {
                    for b in &acts {
                        out.push(DTNetArch::new(
                            input_dim,
                            vec![HiddenLayer::new(w, a.clone()), HiddenLayer::new(w, b.clone())],
                            n_classes,
                        )?);
                    }
                } else {
                    out.push(DTNetArch::uniform(input_dim, &[w, w], a, n_classes)?);
                }
            }
        }
        Ok(out)
    }

    /// Architectures whose depth fits the budget; empty is an error.
    pub fn feasible(&self, input_dim: usize, n_classes: usize) -> Result<Vec<DTNetArch>> {
        let mut out = Vec::new();
        for a in self.architectures(input_dim, n_classes)? {
            if multiplicative_depth(&a)? <= self.depth_budget {
                out.push(a);
            }
        }
        if out.is_empty() {
            return Err(Error::Empty(format!(
                "no architecture in the search space fits depth budget {}",
                self.depth_budget
            )));
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CandidateResult {
    pub arch: DTNetArch,
    pub model: DTNetModel,
    /// Agreement with the teacher on the validation set.
    pub nu: f64,
    pub depth: usize,
}

impl CandidateResult {
    pub fn params(&self) -> usize {
        self.arch.param_count()
    }

    pub fn summary(&self) -> serde_json::Value {
        serde_json::json!({
            "arch": arch_to_json_value(&self.arch),
            "describe": self.arch.describe(),
            "depth": self.depth,
            "nu": self.nu,
            "params": self.params(),
        })
    }
}

/// Where the validation points come from.
#[derive(Clone, Debug, PartialEq)]
pub enum ValidationSource {
    /// A second synthetic set of this size, from an independent seed.
    Synthetic(usize),
    /// Caller-supplied preprocessed points.
    Points(Array2<f64>),
}

/// Teacher-labeled transfer and validation sets.
#[derive(Clone, Debug)]
pub struct TransferData {
    pub transfer_x: Array2<f64>,
    pub transfer_y: Vec<usize>,
    pub validation_x: Array2<f64>,
    pub validation_y: Vec<usize>,
    pub n_classes: usize,
}

pub fn label_with_teacher(teacher: &AdaBoostModel, x: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
    Ok(ensemble_predict(teacher, x)?.0)
}

pub fn validation_params(munge: &MungeParams, size: usize) -> MungeParams {
    MungeParams {
        target_size: size,
        seed: munge.seed.wrapping_add(VALIDATION_SEED_OFFSET),
        ..munge.clone()
    }
}

/// Generates the transfer set (size `munge.target_size`) and the
/// validation set, both labeled by the teacher.
pub fn prepare_transfer(
    teacher: &AdaBoostModel,
    seed_set: ArrayView2<'_, f64>,
    kinds: &[ColumnKind],
    munge: &MungeParams,
    validation: &ValidationSource,
) -> Result<TransferData> {
    let transfer_x = munge_generate(seed_set, kinds, munge)?;
    let validation_x = match validation {
        ValidationSource::Synthetic(0) => return Err(Error::Empty("validation set is empty".into())),
        ValidationSource::Synthetic(v) => munge_generate(seed_set, kinds, &validation_params(munge, *v))?,
        ValidationSource::Points(p) if p.nrows() == 0 => return Err(Error::Empty("validation set is empty".into())),
        ValidationSource::Points(p) => p.clone(),
    };
    Ok(TransferData {
        transfer_y: label_with_teacher(teacher, transfer_x.view())?,
        validation_y: label_with_teacher(teacher, validation_x.view())?,
        transfer_x,
        validation_x,
        n_classes: teacher.n_classes,
    })
}

/// Trains one candidate on the transfer set and scores it on validation.
pub fn train_candidate(arch: &DTNetArch, data: &TransferData, cfg: &TrainConfig) -> Result<CandidateResult> {
    let depth = multiplicative_depth(arch)?;
    let (model, _) = train_dtnet(arch, data.transfer_x.view(), Targets::Hard(&data.transfer_y), cfg)?;
    let pred = net_predict(&model, data.validation_x.view())?;
    Ok(CandidateResult {
        arch: arch.clone(),
        nu: accuracy(&pred, &data.validation_y),
        depth,
        model,
    })
}

pub fn distill_one(
    teacher: &AdaBoostModel,
    seed_set: ArrayView2<'_, f64>,
    kinds: &[ColumnKind],
    arch: &DTNetArch,
    munge: &MungeParams,
    cfg: &TrainConfig,
    validation_size: usize,
) -> Result<CandidateResult> {
    let data = prepare_transfer(
        teacher,
        seed_set,
        kinds,
        munge,
        &ValidationSource::Synthetic(validation_size),
    )?;
    train_candidate(arch, &data, cfg)
}

#[derive(Clone, Debug)]
pub struct SearchReport {
    pub best: CandidateResult,
    /// Sorted by ν descending, then parameter count, then declaration order.
    pub leaderboard: Vec<CandidateResult>,
    pub munge_seed: u64,
    pub validation_seed: Option<u64>,
    pub train_seed: u64,
}

impl SearchReport {
    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::json!({
            "best": self.best.summary(),
            "leaderboard": self.leaderboard.iter().map(CandidateResult::summary).collect::<Vec<_>>(),
            "seeds": {
                "munge": self.munge_seed,
                "validation": self.validation_seed,
                "train": self.train_seed,
            },
        })
    }
}

/// Ranks candidates: higher ν, then fewer parameters, then earlier in the
/// input order.
pub fn rank(candidates: Vec<CandidateResult>) -> Result<Vec<CandidateResult>> {
    if candidates.is_empty() {
        return Err(Error::Empty("no candidates to rank".into()));
    }
    let mut indexed: Vec<(usize, CandidateResult)> = candidates.into_iter().enumerate().collect();
    indexed.sort_by(|(i, a), (j, b)| b.nu.total_cmp(&a.nu).then(a.params().cmp(&b.params())).then(i.cmp(j)));
    Ok(indexed.into_iter().map(|(_, c)| c).collect())
}

/// Trains every depth-feasible architecture on one shared transfer set.
pub fn search_on(space: &SearchSpace, data: &TransferData, cfg: &TrainConfig) -> Result<Vec<CandidateResult>> {
    let archs = space.feasible(data.transfer_x.ncols(), data.n_classes)?;
    let results: Vec<CandidateResult> = archs
        .par_iter()
        .map(|a| train_candidate(a, data, cfg))
        .collect::<Result<_>>()?;
    rank(results)
}

pub fn architecture_search(
    teacher: &AdaBoostModel,
    seed_set: ArrayView2<'_, f64>,
    kinds: &[ColumnKind],
    space: &SearchSpace,
    munge: &MungeParams,
    cfg: &TrainConfig,
    validation: &ValidationSource,
) -> Result<SearchReport> {
    // Fail on an empty space before generating any data.
    space.feasible(seed_set.ncols(), teacher.n_classes)?;
    let data = prepare_transfer(teacher, seed_set, kinds, munge, validation)?;
    let leaderboard = search_on(space, &data, cfg)?;
    Ok(SearchReport {
        best: leaderboard[0].clone(),
        leaderboard,
        munge_seed: munge.seed,
        validation_seed: matches!(validation, ValidationSource::Synthetic(_)).then(|| validation_params(munge, 0).seed),
        train_seed: cfg.seed,
    })
}

/// The comparison network that ignores the teacher: the same search, run on
/// the labeled seed points alone. A seeded `holdout` fraction picks the
/// architecture, which is then retrained on all labeled points.
pub fn train_baseline(
    x: ArrayView2<'_, f64>,
    y: &[usize],
    n_classes: usize,
    space: &SearchSpace,
    cfg: &TrainConfig,
    holdout: f64,
    seed: u64,
) -> Result<CandidateResult> {
    use rand::seq::SliceRandom;
    if x.nrows() != y.len() {
        return Err(Error::Shape(format!("{} rows but {} labels", x.nrows(), y.len())));
    }
    let n = x.nrows();
    let n_val = ((n as f64) * holdout).round() as usize;
    if n_val == 0 || n_val >= n {
        return Err(Error::InvalidParam(format!(
            "holdout {holdout} leaves an empty split of {n} points"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut util::rng(seed));
    let (val, tr) = idx.split_at(n_val);
    let data = TransferData {
        transfer_x: x.select(Axis(0), tr),
        transfer_y: tr.iter().map(|&i| y[i]).collect(),
        validation_x: x.select(Axis(0), val),
        validation_y: val.iter().map(|&i| y[i]).collect(),
        n_classes,
    };
    let chosen = search_on(space, &data, cfg)?.swap_remove(0);
    let (model, _) = train_dtnet(&chosen.arch, x, Targets::Hard(y), cfg)?;
    Ok(CandidateResult { model, ..chosen })
}
