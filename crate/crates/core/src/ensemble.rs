//! The teacher: weighted CART trees boosted with discrete multiclass
//! AdaBoost (SAMME), and grid-search tuning by k-fold cross-validation.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util;

/// Stand-in for `(1 - err) / err` when a round classifies everything
/// correctly, so the estimator weight stays finite.
const PERFECT_ROUND_ODDS: f64 = 1e10;

/// Minimum weighted impurity decrease for a split to be taken.
const MIN_GAIN: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreeNode {
    Internal {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        class: usize,
    },
}

impl TreeNode {
    fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    /// Visits internal nodes as `(feature, threshold)`.
    pub fn for_each_split(&self, f: &mut impl FnMut(usize, f64)) {
        if let TreeNode::Internal {
            feature,
            threshold,
            left,
            right,
        } = self
        {
            f(*feature, *threshold);
            left.for_each_split(f);
            right.for_each_split(f);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub root: TreeNode,
    pub max_depth: usize,
    pub n_classes: usize,
}

impl DecisionTree {
    /// A single-leaf tree that always predicts `class`.
    pub fn constant(class: usize, n_classes: usize) -> Self {
        DecisionTree {
            root: TreeNode::Leaf { class },
            max_depth: 1,
            n_classes,
        }
    }

    /// Goes left iff `x[feature] < threshold`.
    pub fn predict_one(&self, x: ArrayView1<'_, f64>) -> usize {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { class } => return *class,
                TreeNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if x[*feature] < *threshold { left } else { right },
            }
        }
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<usize> {
        x.rows().into_iter().map(|r| self.predict_one(r)).collect()
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }
}

fn check_xy(x: ArrayView2<'_, f64>, y: &[usize]) -> Result<()> {
    if x.nrows() == 0 {
        return Err(Error::Empty("no training rows".into()));
    }
    if x.nrows() != y.len() {
        return Err(Error::Shape(format!("{} rows but {} labels", x.nrows(), y.len())));
    }
    Ok(())
}

fn gini(counts: &[f64], total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    1.0 - counts.iter().map(|c| (c / total) * (c / total)).sum::<f64>()
}

/// Weighted majority; ties go to the lowest class index.
fn majority(counts: &[f64]) -> usize {
    let mut best = 0;
    for (k, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = k;
        }
    }
    best
}

struct TreeBuilder<'a> {
    x: ArrayView2<'a, f64>,
    y: &'a [usize],
    w: &'a [f64],
    n_classes: usize,
    max_depth: usize,
    feature_order: Vec<usize>,
}

struct Split {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl TreeBuilder<'_> {
    fn class_weights(&self, rows: &[usize]) -> Vec<f64> {
        let mut c = vec![0.0; self.n_classes];
        for &i in rows {
            c[self.y[i]] += self.w[i];
        }
        c
    }

    fn best_split(&self, rows: &[usize], parent: &[f64]) -> Option<Split> {
        let total: f64 = parent.iter().sum();
        let parent_imp = total * gini(parent, total);
        let mut best: Option<Split> = None;
        let mut sorted = rows.to_vec();
        for &f in &self.feature_order {
            sorted.sort_by(|&a, &b| self.x[[a, f]].total_cmp(&self.x[[b, f]]));
            let mut left = vec![0.0; self.n_classes];
            let mut left_w = 0.0;
            for k in 0..sorted.len() - 1 {
                let i = sorted[k];
                left[self.y[i]] += self.w[i];
                left_w += self.w[i];
                let (v, next) = (self.x[[i, f]], self.x[[sorted[k + 1], f]]);
                if v == next {
                    continue;
                }
                let right: Vec<f64> = parent.iter().zip(&left).map(|(p, l)| p - l).collect();
                let right_w = total - left_w;
                let gain = parent_imp - left_w * gini(&left, left_w) - right_w * gini(&right, right_w);
                if gain > MIN_GAIN && best.as_ref().is_none_or(|b| gain > b.gain + MIN_GAIN) {
                    let mut threshold = v + (next - v) / 2.0;
                    // Midpoint of adjacent floats can round onto the upper value.
                    if threshold >= next {
                        threshold = v;
                    }
                    best = Some(Split {
                        feature: f,
                        threshold,
                        gain,
                    });
                }
            }
        }
        best
    }

    fn grow(&self, rows: &[usize], depth: usize) -> TreeNode {
        let counts = self.class_weights(rows);
        let leaf = TreeNode::Leaf {
            class: majority(&counts),
        };
        let nonzero = counts.iter().filter(|&&c| c > 0.0).count();
        if depth >= self.max_depth || nonzero <= 1 || rows.len() < 2 {
            return leaf;
        }
        let Some(split) = self.best_split(rows, &counts) else {
            return leaf;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&i| self.x[[i, split.feature]] < split.threshold);
        TreeNode::Internal {
            feature: split.feature,
            threshold: split.threshold,
            left: Box::new(self.grow(&l, depth + 1)),
            right: Box::new(self.grow(&r, depth + 1)),
        }
    }
}

/// Greedy weighted-Gini CART.
///
/// Candidate thresholds are midpoints between consecutive distinct values.
/// Growth stops at `max_depth`, at pure nodes, or when no split reduces
/// impurity. `seed` permutes the order in which features are scanned, which
/// only matters for exact gain ties between features.
pub fn train_tree(
    x: ArrayView2<'_, f64>,
    y: &[usize],
    w: &[f64],
    n_classes: usize,
    max_depth: usize,
    seed: u64,
) -> Result<DecisionTree> {
    check_xy(x, y)?;
    if w.len() != y.len() {
        return Err(Error::Shape(format!("{} weights for {} rows", w.len(), y.len())));
    }
    if max_depth < 1 {
        return Err(Error::InvalidParam("max_depth must be at least 1".into()));
    }
    if w.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) || w.iter().all(|&v| v == 0.0) {
        return Err(Error::InvalidParam(
            "sample weights must be nonnegative and not all zero".into(),
        ));
    }
    if let Some(&bad) = y.iter().find(|&&k| k >= n_classes) {
        return Err(Error::InvalidParam(format!(
            "label {bad} out of range for {n_classes} classes"
        )));
    }
    let mut feature_order: Vec<usize> = (0..x.ncols()).collect();
    feature_order.shuffle(&mut util::rng(seed));
    let b = TreeBuilder {
        x: x.view(),
        y,
        w,
        n_classes,
        max_depth,
        feature_order,
    };
    let rows: Vec<usize> = (0..x.nrows()).filter(|&i| w[i] > 0.0).collect();
    Ok(DecisionTree {
        root: b.grow(&rows, 0),
        max_depth,
        n_classes,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimator {
    pub alpha: f64,
    pub tree: DecisionTree,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaBoostModel {
    pub n_classes: usize,
    pub estimators: Vec<Estimator>,
}

/// SAMME estimator weight.
pub fn samme_alpha(err: f64, n_classes: usize, learning_rate: f64) -> f64 {
    let odds = if err <= 0.0 {
        PERFECT_ROUND_ODDS
    } else {
        (1.0 - err) / err
    };
    learning_rate * (odds.ln() + ((n_classes - 1) as f64).ln())
}

impl AdaBoostModel {
    pub fn new(trees: Vec<DecisionTree>, alphas: Vec<f64>, n_classes: usize) -> Result<Self> {
        if trees.len() != alphas.len() {
            return Err(Error::Shape(format!(
                "{} trees but {} alphas",
                trees.len(),
                alphas.len()
            )));
        }
        if alphas.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidParam("estimator weights must be finite".into()));
        }
        Ok(AdaBoostModel {
            n_classes,
            estimators: trees
                .into_iter()
                .zip(alphas)
                .map(|(tree, alpha)| Estimator { alpha, tree })
                .collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.estimators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.estimators.is_empty()
    }

    /// The model made of the first `n` estimators.
    pub fn truncated(&self, n: usize) -> AdaBoostModel {
        AdaBoostModel {
            n_classes: self.n_classes,
            estimators: self.estimators[..n.min(self.len())].to_vec(),
        }
    }

    /// Per-class scores `sum_m alpha_m * [tree_m predicts k]`, rows are points.
    pub fn scores(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut s = Array2::zeros((x.nrows(), self.n_classes));
        for e in &self.estimators {
            for (i, r) in x.rows().into_iter().enumerate() {
                s[[i, e.tree.predict_one(r)]] += e.alpha;
            }
        }
        s
    }

    pub fn input_dim(&self) -> Option<usize> {
        let mut max_f = None;
        for e in &self.estimators {
            e.tree
                .root
                .for_each_split(&mut |f, _| max_f = Some(max_f.map_or(f, |m: usize| m.max(f))));
        }
        max_f.map(|m| m + 1)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Labels (argmax, ties to lowest class) and the score matrix.
pub fn ensemble_predict(m: &AdaBoostModel, x: ArrayView2<'_, f64>) -> Result<(Vec<usize>, Array2<f64>)> {
    if let Some(d) = m.input_dim() {
        if x.ncols() < d {
            return Err(Error::Shape(format!(
                "model splits on feature {} but input has {} columns",
                d - 1,
                x.ncols()
            )));
        }
    }
    let s = m.scores(x);
    let labels = s.rows().into_iter().map(util::argmax).collect();
    Ok((labels, s))
}

#[derive(Clone, Debug)]
pub struct AdaBoostParams {
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub seed: u64,
}

/// Discrete SAMME boosting.
///
/// A round whose weighted error reaches `1 - 1/c` is discarded and boosting
/// stops; a perfect round is kept with a large finite weight and boosting
/// stops.
pub fn train_adaboost(
    x: ArrayView2<'_, f64>,
    y: &[usize],
    n_classes: usize,
    params: &AdaBoostParams,
) -> Result<AdaBoostModel> {
    check_xy(x, y)?;
    if params.n_estimators < 1 {
        return Err(Error::InvalidParam("n_estimators must be at least 1".into()));
    }
    if !(params.learning_rate > 0.0) || !params.learning_rate.is_finite() {
        return Err(Error::InvalidParam("learning_rate must be positive".into()));
    }
    if n_classes < 2 {
        return Err(Error::InvalidParam("boosting needs at least two classes".into()));
    }
    let first = y[0];
    if y.iter().all(|&k| k == first) {
        return Err(Error::Degenerate("all training labels belong to one class".into()));
    }
    let n = y.len();
    let c = n_classes as f64;
    let mut w = vec![1.0 / n as f64; n];
    let mut estimators = Vec::new();

    for m in 0..params.n_estimators {
        let tree = train_tree(
            x,
            y,
            &w,
            n_classes,
            params.max_depth,
            params.seed.wrapping_add(m as u64),
        )?;
        let miss: Vec<bool> = x
            .rows()
            .into_iter()
            .zip(y)
            .map(|(r, &k)| tree.predict_one(r) != k)
            .collect();
        let total: f64 = w.iter().sum();
        let err = miss.iter().zip(&w).filter(|(m, _)| **m).map(|(_, w)| w).sum::<f64>() / total;

        if err >= 1.0 - 1.0 / c {
            break;
        }
        let alpha = samme_alpha(err, n_classes, params.learning_rate);
        estimators.push(Estimator { alpha, tree });
        if err <= 0.0 {
            break;
        }
        for (wi, &mi) in w.iter_mut().zip(&miss) {
            if mi {
                *wi *= alpha.exp();
            }
        }
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= total);
    }
    if estimators.is_empty() {
        return Err(Error::Degenerate(
            "the first base estimator is no better than chance".into(),
        ));
    }
    Ok(AdaBoostModel { n_classes, estimators })
}

/// Multiclass exponential loss `sum_i exp(A/c - s_{y_i}(x_i))` with
/// `A = sum_m alpha_m`, the surrogate that SAMME minimizes stagewise.
pub fn exponential_loss(m: &AdaBoostModel, x: ArrayView2<'_, f64>, y: &[usize]) -> f64 {
    let total_alpha: f64 = m.estimators.iter().map(|e| e.alpha).sum();
    let s = m.scores(x);
    y.iter()
        .enumerate()
        .map(|(i, &k)| (total_alpha / m.n_classes as f64 - s[[i, k]]).exp())
        .sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSearchSpec {
    pub learning_rates: Vec<f64>,
    pub n_estimators_options: Vec<usize>,
    pub folds: usize,
}

impl Default for GridSearchSpec {
    fn default() -> Self {
        GridSearchSpec {
            learning_rates: vec![0.01, 0.05, 0.1, 0.3, 1.0],
            n_estimators_options: vec![50, 100],
            folds: 4,
        }
    }
}

impl GridSearchSpec {
    fn validate(&self) -> Result<()> {
        if self.learning_rates.is_empty() || self.n_estimators_options.is_empty() {
            return Err(Error::InvalidParam("grid must have at least one cell".into()));
        }
        if self.learning_rates.iter().any(|&v| !(v > 0.0)) || self.n_estimators_options.contains(&0) {
            return Err(Error::InvalidParam("grid values must be positive".into()));
        }
        if self.folds < 2 {
            return Err(Error::InvalidParam("folds must be at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvCell {
    pub learning_rate: f64,
    pub n_estimators: usize,
    pub fold_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub best_learning_rate: f64,
    pub best_n_estimators: usize,
    /// Cells in grid order: learning rates outer, estimator counts inner.
    pub cells: Vec<CvCell>,
}

/// Fold index of each row: a seeded shuffle dealt round-robin.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut util::rng(seed));
    let mut fold = vec![0; n];
    for (pos, &i) in idx.iter().enumerate() {
        fold[i] = pos % folds;
    }
    fold
}

/// Mean validation accuracy over folds for every grid cell; the best cell is
/// the first maximum in grid order.
///
/// For each learning rate and fold one model with the largest estimator
/// count is trained; smaller counts are evaluated on its prefix, which is
/// exactly the model those counts would train.
pub fn grid_search_cv(
    x: ArrayView2<'_, f64>,
    y: &[usize],
    n_classes: usize,
    spec: &GridSearchSpec,
    max_depth: usize,
    seed: u64,
) -> Result<GridSearchResult> {
    spec.validate()?;
    check_xy(x, y)?;
    let n = y.len();
    if spec.folds > n {
        return Err(Error::InvalidParam(format!("{} folds for {n} rows", spec.folds)));
    }
    let fold = fold_assignment(n, spec.folds, seed);
    let max_n = *spec.n_estimators_options.iter().max().unwrap();

    let jobs: Vec<(usize, usize)> = (0..spec.learning_rates.len())
        .flat_map(|l| (0..spec.folds).map(move |f| (l, f)))
        .collect();
    // acc[l][f][option]
    let per_job: Vec<Result<Vec<f64>>> = jobs
        .par_iter()
        .map(|&(l, f)| {
            let tr: Vec<usize> = (0..n).filter(|&i| fold[i] != f).collect();
            let va: Vec<usize> = (0..n).filter(|&i| fold[i] == f).collect();
            let xt = x.select(Axis(0), &tr);
            let yt: Vec<usize> = tr.iter().map(|&i| y[i]).collect();
            let xv = x.select(Axis(0), &va);
            let yv: Vec<usize> = va.iter().map(|&i| y[i]).collect();
            let model = train_adaboost(
                xt.view(),
                &yt,
                n_classes,
                &AdaBoostParams {
                    n_estimators: max_n,
                    learning_rate: spec.learning_rates[l],
                    max_depth,
                    seed,
                },
            )?;
            Ok(spec
                .n_estimators_options
                .iter()
                .map(|&k| {
                    let (pred, _) = ensemble_predict(&model.truncated(k), xv.view()).expect("dims checked");
                    util::accuracy(&pred, &yv)
                })
                .collect())
        })
        .collect();
    let per_job = per_job.into_iter().collect::<Result<Vec<_>>>()?;

    let mut cells = Vec::new();
    for (l, &lr) in spec.learning_rates.iter().enumerate() {
        for (o, &k) in spec.n_estimators_options.iter().enumerate() {
            let fold_accuracies: Vec<f64> = (0..spec.folds).map(|f| per_job[l * spec.folds + f][o]).collect();
            let mean_accuracy = fold_accuracies.iter().sum::<f64>() / spec.folds as f64;
            cells.push(CvCell {
                learning_rate: lr,
                n_estimators: k,
                fold_accuracies,
                mean_accuracy,
            });
        }
    }
    let mut best = 0;
    for (i, c) in cells.iter().enumerate() {
        if c.mean_accuracy > cells[best].mean_accuracy {
            best = i;
        }
    }
    Ok(GridSearchResult {
        best_learning_rate: cells[best].learning_rate,
        best_n_estimators: cells[best].n_estimators,
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn uniform(n: usize) -> Vec<f64> {
        vec![1.0 / n as f64; n]
    }

    #[test]
    fn stump_on_separable_line() {
        let x = array![[0.1], [0.2], [0.8], [0.9]];
        let y = [0, 0, 1, 1];
        let t = train_tree(x.view(), &y, &uniform(4), 2, 1, 0).unwrap();
        match &t.root {
            TreeNode::Internal { feature, threshold, .. } => {
                assert_eq!(*feature, 0);
                assert!((threshold - 0.5).abs() < 1e-12);
            }
            _ => panic!("expected a split"),
        }
        assert_eq!(t.predict(x.view()), y.to_vec());
    }

    #[test]
    fn pure_labels_give_a_leaf() {
        let x = array![[0.1], [0.5], [0.9]];
        let t = train_tree(x.view(), &[2, 2, 2], &uniform(3), 3, 4, 0).unwrap();
        assert_eq!(t.root, TreeNode::Leaf { class: 2 });
        assert_eq!(t.depth(), 0);
    }

    #[test]
    fn conflicting_duplicates_use_weighted_majority() {
        let x = array![[0.3], [0.3], [0.3]];
        let t = train_tree(x.view(), &[0, 1, 1], &[0.5, 0.2, 0.2], 2, 3, 0).unwrap();
        assert_eq!(t.root, TreeNode::Leaf { class: 0 });
        let t = train_tree(x.view(), &[0, 1, 1], &[0.3, 0.2, 0.2], 2, 3, 0).unwrap();
        assert_eq!(t.root, TreeNode::Leaf { class: 1 });
    }

    #[test]
    fn tree_errors() {
        let x = array![[0.1], [0.2]];
        assert!(matches!(
            train_tree(x.view(), &[0, 1], &uniform(2), 2, 0, 0),
            Err(Error::InvalidParam(_))
        ));
        let empty = Array2::<f64>::zeros((0, 1));
        assert!(matches!(
            train_tree(empty.view(), &[], &[], 2, 1, 0),
            Err(Error::Empty(_))
        ));
        assert!(train_tree(x.view(), &[0, 1], &[0.0, 0.0], 2, 1, 0).is_err());
    }

    #[test]
    fn samme_alpha_closed_form() {
        assert!((samme_alpha(0.25, 2, 1.0) - 3f64.ln()).abs() < 1e-15);
        assert!((samme_alpha(0.25, 2, 1.0) - 1.0986).abs() < 1e-4);
        assert!((samme_alpha(0.0, 3, 0.5) - 0.5 * (1e10f64.ln() + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn separable_data_is_fit_perfectly() {
        let x = array![[0.1], [0.3], [0.35], [0.6], [0.7], [0.95]];
        let y = [0, 0, 0, 1, 1, 1];
        for n in [1, 5, 20] {
            let m = train_adaboost(
                x.view(),
                &y,
                2,
                &AdaBoostParams {
                    n_estimators: n,
                    learning_rate: 1.0,
                    max_depth: 1,
                    seed: 3,
                },
            )
            .unwrap();
            assert_eq!(m.len(), 1, "perfect first stump stops boosting");
            assert_eq!(ensemble_predict(&m, x.view()).unwrap().0, y.to_vec());
        }
    }

    #[test]
    fn chance_level_first_round_is_rejected() {
        // Every threshold on this XOR-like layout leaves weighted error 0.5.
        let x = array![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]];
        let y = [0, 1, 1, 0];
        let err = train_adaboost(
            x.view(),
            &y,
            2,
            &AdaBoostParams {
                n_estimators: 10,
                learning_rate: 1.0,
                max_depth: 1,
                seed: 0,
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)));
    }

    #[test]
    fn boosting_parameter_errors() {
        let x = array![[0.0], [1.0]];
        let p = |n| AdaBoostParams {
            n_estimators: n,
            learning_rate: 1.0,
            max_depth: 1,
            seed: 0,
        };
        assert!(matches!(
            train_adaboost(x.view(), &[0, 1], 2, &p(0)),
            Err(Error::InvalidParam(_))
        ));
        assert!(matches!(
            train_adaboost(x.view(), &[1, 1], 2, &p(3)),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn weighted_vote() {
        let left = DecisionTree::constant(0, 2);
        let right = DecisionTree::constant(1, 2);
        let m = AdaBoostModel::new(vec![left.clone(), right], vec![2.0, 1.0], 2).unwrap();
        let x = array![[0.5]];
        let (labels, scores) = ensemble_predict(&m, x.view()).unwrap();
        assert_eq!(labels, vec![0]);
        assert_eq!(scores.row(0).to_vec(), vec![2.0, 1.0]);

        let single = AdaBoostModel::new(vec![left.clone()], vec![1.0], 2).unwrap();
        assert_eq!(ensemble_predict(&single, x.view()).unwrap().0, left.predict(x.view()));
    }

    #[test]
    fn three_class_toy_matches_hand_tabulation() {
        let split = |f, t, l, r| DecisionTree {
            root: TreeNode::Internal {
                feature: f,
                threshold: t,
                left: Box::new(TreeNode::Leaf { class: l }),
                right: Box::new(TreeNode::Leaf { class: r }),
            },
            max_depth: 1,
            n_classes: 3,
        };
        let m = AdaBoostModel::new(
            vec![split(0, 0.5, 0, 1), split(1, 0.5, 2, 1), split(0, 0.25, 2, 0)],
            vec![1.0, 0.75, 0.5],
            3,
        )
        .unwrap();
        let x = array![[0.1, 0.1], [0.1, 0.9], [0.4, 0.1], [0.9, 0.9], [0.9, 0.2]];
        // point: t1 t2 t3 -> scores (c0,c1,c2)
        // (0.1,0.1): 0 2 2 -> (1, 0, 1.25) -> 2
        // (0.1,0.9): 0 1 2 -> (1, .75, .5) -> 0
        // (0.4,0.1): 0 2 0 -> (1.5, 0, .75) -> 0
        // (0.9,0.9): 1 1 0 -> (.5, 1.75, 0) -> 1
        // (0.9,0.2): 1 2 0 -> (.5, 1, .75) -> 1
        let (labels, s) = ensemble_predict(&m, x.view()).unwrap();
        assert_eq!(labels, vec![2, 0, 0, 1, 1]);
        assert_eq!(s.row(0).to_vec(), vec![1.0, 0.0, 1.25]);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let t = DecisionTree {
            root: TreeNode::Internal {
                feature: 3,
                threshold: 0.5,
                left: Box::new(TreeNode::Leaf { class: 0 }),
                right: Box::new(TreeNode::Leaf { class: 1 }),
            },
            max_depth: 1,
            n_classes: 2,
        };
        let m = AdaBoostModel::new(vec![t], vec![1.0], 2).unwrap();
        assert!(matches!(
            ensemble_predict(&m, Array2::zeros((2, 2)).view()),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn json_shape() {
        let m = AdaBoostModel::new(vec![DecisionTree::constant(1, 2)], vec![0.7], 2).unwrap();
        let v: serde_json::Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();
        assert_eq!(v["n_classes"], 2);
        assert_eq!(v["estimators"][0]["alpha"], 0.7);
        assert_eq!(v["estimators"][0]["tree"]["root"]["class"], 1);
    }

    fn two_blobs(n: usize, seed: u64) -> (Array2<f64>, Vec<usize>) {
        use rand::Rng;
        let mut r = util::rng(seed);
        let mut x = Array2::zeros((n, 2));
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let a: f64 = r.gen();
            let b: f64 = r.gen();
            x[[i, 0]] = a;
            x[[i, 1]] = b;
            let noisy = r.gen::<f64>() < 0.1;
            y.push(usize::from(((a - 0.5) * (b - 0.5) > 0.0) ^ noisy));
        }
        (x, y)
    }

    #[test]
    fn grid_search_picks_first_best_cell() {
        let (x, y) = two_blobs(80, 1);
        let spec = GridSearchSpec {
            learning_rates: vec![0.01, 1.0],
            n_estimators_options: vec![5],
            folds: 4,
        };
        let r = grid_search_cv(x.view(), &y, 2, &spec, 2, 0).unwrap();
        assert_eq!(r.cells.len(), 2);
        let best = r
            .cells
            .iter()
            .find(|c| c.learning_rate == r.best_learning_rate && c.n_estimators == r.best_n_estimators)
            .unwrap();
        assert!(r.cells.iter().all(|c| c.mean_accuracy <= best.mean_accuracy));
        let first_max = r
            .cells
            .iter()
            .position(|c| c.mean_accuracy == best.mean_accuracy)
            .unwrap();
        assert_eq!(r.cells[first_max].learning_rate, r.best_learning_rate);
    }

    #[test]
    fn grid_search_tie_goes_to_declaration_order() {
        let x = array![[0.1], [0.2], [0.3], [0.7], [0.8], [0.9], [0.15], [0.85]];
        let y = [0, 0, 0, 1, 1, 1, 0, 1];
        let spec = GridSearchSpec {
            learning_rates: vec![0.3, 0.1],
            n_estimators_options: vec![7, 3],
            folds: 2,
        };
        let r = grid_search_cv(x.view(), &y, 2, &spec, 1, 0).unwrap();
        assert!(r.cells.iter().all(|c| c.mean_accuracy == 1.0));
        assert_eq!((r.best_learning_rate, r.best_n_estimators), (0.3, 7));
    }

    #[test]
    fn grid_search_prefix_matches_direct_training() {
        let (x, y) = two_blobs(60, 4);
        let spec = GridSearchSpec {
            learning_rates: vec![0.5],
            n_estimators_options: vec![3, 8],
            folds: 3,
        };
        let r = grid_search_cv(x.view(), &y, 2, &spec, 2, 9).unwrap();
        let fold = fold_assignment(60, 3, 9);
        let tr: Vec<usize> = (0..60).filter(|&i| fold[i] != 0).collect();
        let va: Vec<usize> = (0..60).filter(|&i| fold[i] == 0).collect();
        let yt: Vec<usize> = tr.iter().map(|&i| y[i]).collect();
        let yv: Vec<usize> = va.iter().map(|&i| y[i]).collect();
        let m = train_adaboost(
            x.select(Axis(0), &tr).view(),
            &yt,
            2,
            &AdaBoostParams {
                n_estimators: 3,
                learning_rate: 0.5,
                max_depth: 2,
                seed: 9,
            },
        )
        .unwrap();
        let (p, _) = ensemble_predict(&m, x.select(Axis(0), &va).view()).unwrap();
        assert_eq!(r.cells[0].fold_accuracies[0], util::accuracy(&p, &yv));
    }

    #[test]
    fn grid_search_rejects_too_many_folds() {
        let x = array![[0.0], [1.0], [0.5]];
        let spec = GridSearchSpec {
            folds: 4,
            ..GridSearchSpec::default()
        };
        assert!(matches!(
            grid_search_cv(x.view(), &[0, 1, 0], 2, &spec, 1, 0),
            Err(Error::InvalidParam(_))
        ));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn dataset() -> impl Strategy<Value = (Vec<[f64; 2]>, Vec<usize>)> {
            (4usize..30).prop_flat_map(|n| {
                (
                    prop::collection::vec(prop::array::uniform2(0.0f64..1.0), n),
                    prop::collection::vec(0usize..2, n),
                )
            })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn trees_respect_depth_and_avoid_data_thresholds((pts, y) in dataset(), depth in 1usize..5) {
                let x = Array2::from_shape_fn((pts.len(), 2), |(i, j)| pts[i][j]);
                let t = train_tree(x.view(), &y, &uniform(y.len()), 2, depth, 1).unwrap();
                prop_assert!(t.depth() <= depth);
                let mut ok = true;
                t.root.for_each_split(&mut |f, th| {
                    ok &= pts.iter().all(|p| p[f] != th);
                });
                prop_assert!(ok, "a threshold coincides with a data value");
            }

            #[test]
            fn exponential_loss_never_increases((pts, y) in dataset()) {
                prop_assume!(y.iter().any(|&k| k != y[0]));
                let x = Array2::from_shape_fn((pts.len(), 2), |(i, j)| pts[i][j]);
                let params = AdaBoostParams { n_estimators: 12, learning_rate: 1.0, max_depth: 1, seed: 5 };
                let m = match train_adaboost(x.view(), &y, 2, &params) {
                    Ok(m) => m,
                    Err(Error::Degenerate(_)) => return Ok(()),
                    Err(e) => return Err(TestCaseError::fail(e.to_string())),
                };
                let mut prev = exponential_loss(&m.truncated(0), x.view(), &y);
                for k in 1..=m.len() {
                    let cur = exponential_loss(&m.truncated(k), x.view(), &y);
                    prop_assert!(cur <= prev * (1.0 + 1e-9), "loss rose from {} to {} at round {}", prev, cur, k);
                    prev = cur;
                }
            }
        }
    }
}
