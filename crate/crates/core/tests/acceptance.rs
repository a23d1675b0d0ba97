//! End-to-end acceptance checks. Each prints one PASS/FAIL line; the
//! process exits nonzero if any fails.

mod common;

use std::time::{Duration, Instant};

use common::{circuit_depth, eval_encrypted, eval_plain, prepared_instance, random_circuit, rng};
use dtnet_core::distill::{architecture_search, train_baseline};
use dtnet_core::dtnet::{cross_entropy, multiplicative_depth, net_predict, one_hot, train_dtnet, Targets};
use dtnet_core::ensemble::{ensemble_predict, train_adaboost, train_tree, AdaBoostParams};
use dtnet_core::hesim::{he_infer, OpCounts};
use dtnet_core::softcmp::{
    cost_estimate, dtnet_cost_proxy, power_cmp, scaled_sigmoid_cmp, select_alpha, soft_tree_eval, OpLatency,
};
use dtnet_core::{
    accuracy, CostModelParams, DTNetArch, DTNetModel, DecisionTree, Error, Evaluator, HEParams, MungeParams,
    PolyActivation, SearchSpace, SoftCmpParams, TrainConfig, TreeNode, ValidationSource,
};
use ndarray::{Array1, Array2};
use rand::Rng;

type Outcome = std::result::Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn de<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

const SKELETONS: [&[usize]; 8] = [&[8], &[16], &[32], &[64], &[8, 8], &[16, 16], &[32, 32], &[64, 64]];

fn depth_table_reproduction() -> Outcome {
    let expected = [
        ("approxSigmoid", 2),
        ("approxRelu", 2),
        ("approxRelu3", 2),
        ("swish3", 2),
        ("approxRelu6", 3),
    ];
    let ev = Evaluator::new(HEParams::new(4, 10).map_err(de)?);
    let x = ev.encrypt(&[0.1, 0.2, 0.3, 0.4]).map_err(de)?;
    let mut got = Vec::new();
    for (name, phi) in expected {
        let act = PolyActivation::by_name(name).map_err(de)?;
        let measured = ev.poly_activation(&act, &x).map_err(de)?.level();
        check(
            act.depth() == phi && measured == phi,
            format!("{name}: analyzer {} measured {measured}, expected {phi}", act.depth()),
        )?;
        got.push(format!("{name}={phi}"));
    }
    Ok(got.join(" "))
}

fn depth_formulas() -> Outcome {
    let mut r = rng(2);
    let x = Array2::from_shape_fn((5, 6), |_| r.gen::<f64>());
    let mut n = 0;
    for widths in SKELETONS {
        for act in PolyActivation::builtins() {
            let phi = act.depth();
            let formula = if widths.len() == 1 { phi + 2 } else { 2 * phi + 3 };
            let arch = DTNetArch::uniform(6, widths, &act, 2).map_err(de)?;
            let analyzed = multiplicative_depth(&arch).map_err(de)?;
            let model = DTNetModel::glorot(arch.clone(), 7);
            for encrypted in [false, true] {
                let ev = Evaluator::new(HEParams::new(8, 20).map_err(de)?);
                let level = he_infer(&ev, &model, x.view(), encrypted).map_err(de)?.final_level;
                check(
                    analyzed == formula && level == formula,
                    format!(
                        "{}: formula {formula} analyzer {analyzed} measured {level} (encrypted weights: {encrypted})",
                        arch.describe()
                    ),
                )?;
            }
            n += 1;
        }
    }
    Ok(format!("{n} architectures, analyzer = formula = measured level"))
}

fn encrypted_equals_plaintext() -> Outcome {
    let data = prepared_instance(5000, 100, 3).map_err(de)?;
    let arch = DTNetArch::uniform(8, &[32, 32], &PolyActivation::approx_sigmoid(), 2).map_err(de)?;
    let cfg = TrainConfig {
        epochs: 5,
        seed: 3,
        ..TrainConfig::default()
    };
    let (model, _) = train_dtnet(&arch, data.train_x.view(), Targets::Hard(&data.train_y), &cfg).map_err(de)?;
    let x = data.test_x.slice(ndarray::s![..1000, ..]);
    let plain = model.logits(x).map_err(de)?;
    let plain_labels = net_predict(&model, x).map_err(de)?;
    let ev = Evaluator::new(HEParams::new(1024, 10).map_err(de)?);
    let out = he_infer(&ev, &model, x, true).map_err(de)?;
    let he_labels: Vec<usize> = dtnet_core::dtnet::argmax_rows(&out.scores);
    let agree = accuracy(&he_labels, &plain_labels);
    let max_diff = (&out.scores - &plain).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    check(
        agree == 1.0 && max_diff < 1e-9,
        format!("label agreement {agree}, max score diff {max_diff:e}"),
    )?;
    Ok(format!(
        "1000 points, labels 100% equal, max |diff| = {max_diff:.2e}, level {}",
        out.final_level
    ))
}

struct SeedRun {
    teacher: f64,
    student: f64,
    baseline: f64,
    best: String,
}

fn distill_seed(seed: u64) -> std::result::Result<SeedRun, String> {
    let data = prepared_instance(5000, 100, seed).map_err(de)?;
    let teacher = train_adaboost(
        data.train_x.view(),
        &data.train_y,
        data.n_classes,
        &AdaBoostParams {
            n_estimators: 50,
            learning_rate: 0.3,
            max_depth: 5,
            seed,
        },
    )
    .map_err(de)?;
    let teacher_acc = accuracy(
        &ensemble_predict(&teacher, data.test_x.view()).map_err(de)?.0,
        &data.test_y,
    );

    let space = SearchSpace {
        activations: vec!["approxSigmoid".into()],
        depth_budget: 10,
        ..SearchSpace::default()
    };
    let munge = MungeParams {
        target_size: 20_000,
        seed,
        ..MungeParams::default()
    };
    let cfg = TrainConfig {
        epochs: 150,
        seed,
        ..TrainConfig::default()
    };
    let report = architecture_search(
        &teacher,
        data.seed_x.view(),
        &data.kinds,
        &space,
        &munge,
        &cfg,
        &ValidationSource::Synthetic(2000),
    )
    .map_err(de)?;
    let student_acc = accuracy(
        &net_predict(&report.best.model, data.test_x.view()).map_err(de)?,
        &data.test_y,
    );

    let baseline_cfg = TrainConfig {
        epochs: 300,
        batch_size: 16,
        seed,
        ..TrainConfig::default()
    };
    let baseline = train_baseline(
        data.seed_x.view(),
        &data.seed_y,
        data.n_classes,
        &space,
        &baseline_cfg,
        0.2,
        seed,
    )
    .map_err(de)?;
    let baseline_acc = accuracy(
        &net_predict(&baseline.model, data.test_x.view()).map_err(de)?,
        &data.test_y,
    );
    Ok(SeedRun {
        teacher: teacher_acc,
        student: student_acc,
        baseline: baseline_acc,
        best: report.best.arch.describe(),
    })
}

fn distillation_quality() -> Outcome {
    let mut passes = 0;
    let mut lines = Vec::new();
    for seed in [101, 202, 303] {
        let r = distill_seed(seed)?;
        let ok = (r.teacher - r.student).abs() <= 0.03 && r.student > r.baseline;
        passes += usize::from(ok);
        lines.push(format!(
            "seed {seed}: teacher {:.4} student {:.4} ({}) baseline {:.4} {}",
            r.teacher,
            r.student,
            r.best,
            r.baseline,
            if ok { "ok" } else { "miss" }
        ));
    }
    let summary = lines.join("; ");
    check(passes >= 2, format!("{passes}/3 seeds passed: {summary}"))?;
    Ok(format!("{passes}/3 seeds passed: {summary}"))
}

fn cost_model() -> Outcome {
    let (lo, hi) = cost_estimate(&CostModelParams::default()).map_err(de)?;
    check(
        lo.round() == 6.0 && hi.round() == 12.0,
        format!("estimate ({lo}, {hi}) does not round to 6-12 s"),
    )?;
    let arch = DTNetArch::uniform(8, &[64, 64], &PolyActivation::approx_sigmoid(), 2).map_err(de)?;
    let model = DTNetModel::glorot(arch, 0);
    let params = HEParams::default();
    let ev = Evaluator::new(params.clone());
    let mut r = rng(5);
    let x = Array2::from_shape_fn((64, 8), |_| r.gen::<f64>());
    let ops: OpCounts = he_infer(&ev, &model, x.view(), true).map_err(de)?.ops;
    let proxy = dtnet_cost_proxy(&ops, params.slots, &OpLatency::default()).map_err(de)?;
    let ratio = lo / proxy;
    check(ratio >= 100.0, format!("ratio {ratio:.1} below 100"))?;
    Ok(format!(
        "soft-comparator estimate ({lo:.1}, {hi:.1}) s/point; 64|64 DTNet proxy {proxy:.2e} s/point; ratio {ratio:.0}x"
    ))
}

fn gradient_oracle() -> Outcome {
    let mut r = rng(6);
    let (d, c, h) = (5, 3, 1e-5);
    let x = Array2::from_shape_fn((16, d), |_| r.gen::<f64>());
    let y: Vec<usize> = (0..16).map(|_| r.gen_range(0..c)).collect();
    let t = one_hot(&y, c);
    let mut worst = 0.0f64;
    for act in PolyActivation::builtins() {
        let arch = DTNetArch::uniform(d, &[8, 8], &act, c).map_err(de)?;
        let model = DTNetModel::glorot(arch.clone(), r.gen());
        let loss = |m: &DTNetModel| cross_entropy(&m.forward(x.view(), None, false).unwrap().0, &t).0;
        let (logits, cache) = model.forward(x.view(), None, false).map_err(de)?;
        let analytic = model.backward(&cache, cross_entropy(&logits, &t).1);

        let (mut diff2, mut a2, mut n2) = (0.0, 0.0, 0.0);
        let perturbed = |li: usize, which: usize, idx: usize, delta: f64| {
            let mut layers = model.layers().to_vec();
            if which == 0 {
                let w = layers[li].weights.as_slice_mut().unwrap();
                w[idx] += delta;
            } else {
                layers[li].bias[idx] += delta;
            }
            DTNetModel::from_layers(arch.clone(), layers).unwrap()
        };
        for (li, g) in analytic.layers.iter().enumerate() {
            let parts: [(usize, Vec<f64>); 2] = [(0, g.weights.iter().copied().collect()), (1, g.bias.to_vec())];
            for (which, grads) in parts {
                for (idx, ga) in grads.into_iter().enumerate() {
                    let fd = (loss(&perturbed(li, which, idx, h)) - loss(&perturbed(li, which, idx, -h))) / (2.0 * h);
                    diff2 += (ga - fd) * (ga - fd);
                    a2 += ga * ga;
                    n2 += fd * fd;
                }
            }
        }
        let rel = diff2.sqrt() / a2.sqrt().max(n2.sqrt()).max(1e-300);
        check(rel < 1e-4, format!("{}: relative error {rel:e}", act.name()))?;
        worst = worst.max(rel);
    }
    Ok(format!("5 activations, worst relative error {worst:.2e}"))
}

fn random_tree(r: &mut impl Rng, depth: usize, d: usize, classes: usize) -> TreeNode {
    if depth == 0 {
        return TreeNode::Leaf {
            class: r.gen_range(0..classes),
        };
    }
    TreeNode::Internal {
        feature: r.gen_range(0..d),
        threshold: r.gen_range(0.2..0.8),
        left: Box::new(random_tree(r, depth - 1, d, classes)),
        right: Box::new(random_tree(r, depth - 1, d, classes)),
    }
}

fn soft_comparators() -> Outcome {
    let mut r = rng(7);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let (a, b): (f64, f64) = (r.gen_range(0.01..10.0), r.gen_range(0.01..10.0));
        let alpha = r.gen_range(0.1..100.0);
        let k = r.gen_range(1..=30);
        worst = worst.max((scaled_sigmoid_cmp(a, b, alpha) + scaled_sigmoid_cmp(b, a, alpha) - 1.0).abs());
        worst = worst.max((power_cmp(a, b, k).map_err(de)? + power_cmp(b, a, k).map_err(de)? - 1.0).abs());
    }
    check(worst < 1e-12, format!("complement identity off by {worst:e}"))?;
    let v = scaled_sigmoid_cmp(1.0, 0.0, 8.0);
    check((0.99966..=0.99967).contains(&v), format!("cmp(1, 0, 8) = {v}"))?;

    let (mut agree, mut total) = (0usize, 0usize);
    for _ in 0..50 {
        let tree = DecisionTree {
            root: random_tree(&mut r, 3, 4, 3),
            max_depth: 3,
            n_classes: 3,
        };
        let mut thresholds = Vec::new();
        tree.root.for_each_split(&mut |f, t| thresholds.push((f, t)));
        let points: Vec<Vec<f64>> = std::iter::repeat_with(|| (0..4).map(|_| r.gen::<f64>()).collect::<Vec<f64>>())
            .filter(|p| thresholds.iter().all(|&(f, t)| (p[f] - t).abs() > 0.01))
            .take(100)
            .collect();
        let xs = Array2::from_shape_fn((points.len(), 4), |(i, j)| points[i][j]);
        let alpha = select_alpha(&tree, xs.view(), 1e4).map_err(de)?;
        let params = SoftCmpParams::sigmoid(alpha);
        for p in &points {
            let s = soft_tree_eval(&tree, p, &params).map_err(de)?;
            let soft = (0..3).fold(0, |b, k| if s[k] > s[b] { k } else { b });
            agree += usize::from(soft == tree.predict_one(Array1::from(p.clone()).view()));
            total += 1;
        }
    }
    check(agree == total, format!("soft/hard agreement {agree}/{total}"))?;
    Ok(format!(
        "complement max error {worst:.1e}; cmp(1,0,8) = {v:.6}; soft/hard agreement {agree}/{total}"
    ))
}

/// Exhaustive greedy tree on one feature: at every node try every cut
/// between distinct sorted values and keep the best weighted Gini gain
/// (lowest cut on ties).
fn brute_force_tree(x: &[f64], y: &[usize], rows: &[usize], classes: usize, depth: usize) -> TreeNode {
    let counts = |rs: &[usize]| {
        let mut c = vec![0.0; classes];
        for &i in rs {
            c[y[i]] += 1.0;
        }
        c
    };
    let impurity = |c: &[f64]| {
        let n: f64 = c.iter().sum();
        if n == 0.0 {
            0.0
        } else {
            n * (1.0 - c.iter().map(|v| (v / n) * (v / n)).sum::<f64>())
        }
    };
    let here = counts(rows);
    let mut majority = 0;
    for k in 0..classes {
        if here[k] > here[majority] {
            majority = k;
        }
    }
    let leaf = TreeNode::Leaf { class: majority };
    if depth == 0 || here.iter().filter(|&&c| c > 0.0).count() <= 1 {
        return leaf;
    }
    let mut values: Vec<f64> = rows.iter().map(|&i| x[i]).collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let mut best: Option<(f64, f64)> = None;
    for pair in values.windows(2) {
        let t = (pair[0] + pair[1]) / 2.0;
        let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[i] < t);
        let gain = impurity(&here) - impurity(&counts(&l)) - impurity(&counts(&r));
        if gain > 1e-12 && best.is_none_or(|(g, _)| gain > g + 1e-12) {
            best = Some((gain, t));
        }
    }
    let Some((_, t)) = best else { return leaf };
    let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[i] < t);
    TreeNode::Internal {
        feature: 0,
        threshold: t,
        left: Box::new(brute_force_tree(x, y, &l, classes, depth - 1)),
        right: Box::new(brute_force_tree(x, y, &r, classes, depth - 1)),
    }
}

fn brute_force_oracles() -> Outcome {
    let mut r = rng(8);
    let mut instances = 0;
    for _ in 0..300 {
        let n = r.gen_range(2..=8);
        let classes = r.gen_range(2..=3);
        // Eighths keep every midpoint exactly representable.
        let x: Vec<f64> = (0..n).map(|_| r.gen_range(0..8) as f64 / 8.0).collect();
        let y: Vec<usize> = (0..n).map(|_| r.gen_range(0..classes)).collect();
        let depth = r.gen_range(1..=3);
        let xm = Array2::from_shape_vec((n, 1), x.clone()).unwrap();
        let tree = train_tree(xm.view(), &y, &vec![1.0; n], classes, depth, 0).map_err(de)?;
        let oracle = brute_force_tree(&x, &y, &(0..n).collect::<Vec<_>>(), classes, depth);
        check(
            tree.root == oracle,
            format!("x={x:?} y={y:?} depth {depth}: {:?} vs {oracle:?}", tree.root),
        )?;
        instances += 1;
    }

    // SAMME on a 20-point, 3-class instance, re-tabulated from the trees.
    let x = Array2::from_shape_fn((20, 2), |_| r.gen_range(0..16) as f64 / 16.0);
    let y: Vec<usize> = x
        .rows()
        .into_iter()
        .map(|p| ((p[0] * 2.0 + p[1]) as usize).min(2))
        .collect();
    let (rounds, lr) = (6, 0.7);
    let model = train_adaboost(
        x.view(),
        &y,
        3,
        &AdaBoostParams {
            n_estimators: rounds,
            learning_rate: lr,
            max_depth: 1,
            seed: 0,
        },
    )
    .map_err(de)?;
    let mut w = [1.0 / 20.0; 20];
    for (m, est) in model.estimators.iter().enumerate() {
        let miss: Vec<bool> = (0..20).map(|i| est.tree.predict_one(x.row(i)) != y[i]).collect();
        let err: f64 = (0..20).filter(|&i| miss[i]).map(|i| w[i]).sum::<f64>() / w.iter().sum::<f64>();
        let alpha = lr * (((1.0 - err) / err).ln() + 2f64.ln());
        check(
            (alpha - est.alpha).abs() < 1e-12,
            format!("round {m}: alpha {} vs tabulated {alpha}", est.alpha),
        )?;
        for i in 0..20 {
            if miss[i] {
                w[i] *= alpha.exp();
            }
        }
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= s);
    }
    let (labels, scores) = ensemble_predict(&model, x.view()).map_err(de)?;
    for i in 0..20 {
        let mut tab = [0.0; 3];
        for est in &model.estimators {
            tab[est.tree.predict_one(x.row(i))] += est.alpha;
        }
        let vote = (0..3).fold(0, |b, k| if tab[k] > tab[b] { k } else { b });
        check(
            labels[i] == vote && (0..3).all(|k| (scores[[i, k]] - tab[k]).abs() < 1e-12),
            format!("point {i}: scores {:?} vs tabulated {tab:?}", scores.row(i)),
        )?;
    }
    Ok(format!(
        "{instances} brute-force tree instances match; SAMME {} rounds match tabulation",
        model.len()
    ))
}

fn depth_guard() -> Outcome {
    let space = SearchSpace::default();
    let archs = space.feasible(6, 2).map_err(de)?;
    let mut r = rng(9);
    let x = Array2::from_shape_fn((4, 6), |_| r.gen::<f64>());
    for arch in &archs {
        let depth = multiplicative_depth(arch).map_err(de)?;
        let model = DTNetModel::glorot(arch.clone(), 1);
        let ok = he_infer(
            &Evaluator::new(HEParams::new(4, 10).map_err(de)?),
            &model,
            x.view(),
            true,
        );
        check(ok.is_ok(), format!("{} rejected under budget 10", arch.describe()))?;
        let below = he_infer(
            &Evaluator::new(HEParams::new(4, depth - 1).map_err(de)?),
            &model,
            x.view(),
            true,
        );
        check(
            matches!(below, Err(Error::DepthExceeded { .. })),
            format!("{} accepted under budget {}", arch.describe(), depth - 1),
        )?;
    }

    let mut false_accepts = 0;
    for _ in 0..50 {
        let c = random_circuit(&mut r, 50);
        let depth = circuit_depth(&c);
        let inputs: Vec<Vec<f64>> = (0..c.inputs)
            .map(|_| (0..4).map(|_| r.gen_range(-1.0..1.0)).collect())
            .collect();
        let plain = eval_plain(&c, &inputs);
        let exact = eval_encrypted(&Evaluator::new(HEParams::new(4, depth).map_err(de)?), &c, &inputs).map_err(de)?;
        let top = exact.iter().map(|w| w.level()).max().unwrap();
        check(top == depth, format!("measured depth {top} vs counted {depth}"))?;
        for (p, e) in plain.iter().zip(&exact) {
            check(
                p.as_slice() == e.slots(),
                "encrypted circuit values differ from plain evaluation",
            )?;
        }
        if depth > 0 {
            let tight = eval_encrypted(&Evaluator::new(HEParams::new(4, depth - 1).map_err(de)?), &c, &inputs);
            if !matches!(tight, Err(Error::DepthExceeded { .. })) {
                false_accepts += 1;
            }
        }
    }
    check(false_accepts == 0, format!("{false_accepts} false accepts"))?;
    Ok(format!(
        "{} searched architectures fit budget 10 and fail below their depth; 50 random circuits, 0 false accepts",
        archs.len()
    ))
}

type Criterion = (&'static str, fn() -> Outcome, Duration);

fn main() {
    let criteria: [Criterion; 9] = [
        ("1 depth table", depth_table_reproduction, Duration::from_secs(1)),
        ("2 depth formulas", depth_formulas, Duration::from_secs(60)),
        (
            "3 encrypted = plaintext",
            encrypted_equals_plaintext,
            Duration::from_secs(60),
        ),
        (
            "4 distillation quality",
            distillation_quality,
            Duration::from_secs(15 * 60),
        ),
        ("5 cost model", cost_model, Duration::from_secs(1)),
        ("6 gradient oracle", gradient_oracle, Duration::from_secs(10)),
        ("7 soft comparators", soft_comparators, Duration::from_secs(10)),
        ("8 brute-force oracles", brute_force_oracles, Duration::from_secs(5)),
        ("9 depth guard", depth_guard, Duration::from_secs(10)),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, run, limit) in criteria {
        if !only.is_empty() && !only.iter().any(|o| name.starts_with(o.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(d) if elapsed <= limit => (true, d),
            Ok(d) => (false, format!("{d} (took {elapsed:.1?}, limit {limit:?})")),
            Err(e) => (false, e),
        };
        failed += usize::from(!ok);
        println!(
            "criterion {name}: {} [{elapsed:.2?}] {detail}",
            if ok { "PASS" } else { "FAIL" }
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
