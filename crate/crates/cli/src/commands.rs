use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use dtnet_core::data::{load_csv, load_numeric_csv, split};
use dtnet_core::distill::{architecture_search, train_baseline};
use dtnet_core::dtnet::{argmax_rows, multiplicative_depth};
use dtnet_core::ensemble::{ensemble_predict, grid_search_cv, train_adaboost, AdaBoostParams};
use dtnet_core::hesim::{he_infer_batched, OpCounts};
use dtnet_core::munge::munge_generate;
use dtnet_core::softcmp::{cost_estimate, dtnet_cost_proxy};
use dtnet_core::{
    accuracy, AdaBoostModel, ColumnKind, ColumnSpec, DTNetArch, DTNetModel, Dataset, Evaluator, HEParams, HiddenLayer,
    PolyActivation, Preprocessor, ValidationSource,
};
use ndarray::Array2;
use serde_json::{json, Value};

use crate::config::PipelineConfig;

pub const PREPROCESSOR: &str = "preprocessor.json";
pub const TRAIN: &str = "train.csv";
pub const TEST: &str = "test.csv";
pub const SEED: &str = "seed.csv";
pub const TEACHER: &str = "teacher.json";
pub const CV_REPORT: &str = "cv_report.json";
pub const TRANSFER: &str = "transfer.csv";
pub const DTNET: &str = "dtnet.json";
pub const LEADERBOARD: &str = "leaderboard.json";

fn write_json(path: &Path, v: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(v)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_json(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Tags a payload with the artifact kind and the producing config's hash.
fn artifact(cfg: &PipelineConfig, kind: &str, payload: Value) -> Value {
    let mut v = json!({ "config_hash": cfg.hash(), "kind": kind });
    if let (Some(obj), Value::Object(extra)) = (v.as_object_mut(), payload) {
        obj.extend(extra);
    }
    v
}

fn field<'a>(v: &'a Value, key: &str, path: &Path) -> Result<&'a Value> {
    v.get(key)
        .with_context(|| format!("{} has no '{key}' field", path.display()))
}

fn load_preprocessor(cfg: &PipelineConfig) -> Result<Preprocessor> {
    let path = cfg.out(PREPROCESSOR);
    let v = read_json(&path)?;
    Ok(serde_json::from_value(field(&v, "preprocessor", &path)?.clone())?)
}

fn load_teacher(cfg: &PipelineConfig) -> Result<AdaBoostModel> {
    let path = cfg.out(TEACHER);
    let v = read_json(&path)?;
    Ok(serde_json::from_value(field(&v, "model", &path)?.clone())?)
}

fn load_dtnet(path: &Path) -> Result<DTNetModel> {
    let v = read_json(path)?;
    Ok(DTNetModel::from_json(&field(&v, "model", path)?.to_string())?)
}

/// Feature matrix and labels of a preprocessed CSV.
fn load_split(cfg: &PipelineConfig, pre: &Preprocessor, name: &str) -> Result<(Array2<f64>, Vec<usize>)> {
    let ds = load_numeric_csv(cfg.out(name), &pre.columns)?;
    Ok((ds.feature_matrix()?, ds.labels()?))
}

fn feature_columns(pre: &Preprocessor) -> Vec<ColumnSpec> {
    pre.columns
        .iter()
        .filter(|c| c.role == dtnet_core::ColumnRole::Feature)
        .cloned()
        .collect()
}

fn feature_kinds(pre: &Preprocessor) -> Vec<ColumnKind> {
    feature_columns(pre).iter().map(|c| c.kind).collect()
}

pub fn prep(cfg: &PipelineConfig) -> Result<()> {
    let input = cfg.data.input_csv.as_ref().context("data.input_csv is not set")?;
    if cfg.data.schema.is_empty() {
        bail!("data.schema is empty");
    }
    let raw = load_csv(input, &cfg.data.schema)?;
    let (train, test) = match &cfg.data.test_csv {
        Some(t) => (raw, load_csv(t, &cfg.data.schema)?),
        None => {
            let f = cfg.data.train_fraction;
            split(&raw, (f, 1.0 - f), cfg.seed)?
        }
    };
    let pre = Preprocessor::fit(&train)?;
    let (train, test) = (pre.transform(&train)?, pre.transform(&test)?);
    let seed_set = if cfg.data.seed_size >= train.n() {
        train.clone()
    } else {
        let f = cfg.data.seed_size as f64 / train.n() as f64;
        split(&train, (f, 1.0 - f), cfg.seed.wrapping_add(1))?.0
    };

    fs::create_dir_all(&cfg.output_dir).with_context(|| format!("creating {}", cfg.output_dir.display()))?;
    train.write_csv(cfg.out(TRAIN))?;
    test.write_csv(cfg.out(TEST))?;
    seed_set.write_csv(cfg.out(SEED))?;
    write_json(
        &cfg.out(PREPROCESSOR),
        &artifact(
            cfg,
            "preprocessor",
            json!({
                "rows": { "train": train.n(), "test": test.n(), "seed": seed_set.n() },
                "preprocessor": serde_json::to_value(&pre)?,
            }),
        ),
    )?;
    println!(
        "prep: {} train, {} test, {} seed rows -> {}",
        train.n(),
        test.n(),
        seed_set.n(),
        cfg.output_dir.display()
    );
    Ok(())
}

pub fn train_teacher(cfg: &PipelineConfig) -> Result<()> {
    let pre = load_preprocessor(cfg)?;
    let (x, y) = load_split(cfg, &pre, TRAIN)?;
    let classes = pre.n_classes();
    let grid = grid_search_cv(
        x.view(),
        &y,
        classes,
        &cfg.teacher.grid,
        cfg.teacher.max_depth,
        cfg.seed,
    )?;
    let params = AdaBoostParams {
        n_estimators: grid.best_n_estimators,
        learning_rate: grid.best_learning_rate,
        max_depth: cfg.teacher.max_depth,
        seed: cfg.seed,
    };
    let teacher = train_adaboost(x.view(), &y, classes, &params)?;
    let train_acc = accuracy(&ensemble_predict(&teacher, x.view())?.0, &y);
    write_json(
        &cfg.out(TEACHER),
        &artifact(
            cfg,
            "teacher",
            json!({
                "learning_rate": params.learning_rate,
                "n_estimators": params.n_estimators,
                "max_depth": params.max_depth,
                "train_accuracy": train_acc,
                "model": serde_json::to_value(&teacher)?,
            }),
        ),
    )?;
    write_json(
        &cfg.out(CV_REPORT),
        &artifact(cfg, "cv_report", serde_json::to_value(&grid)?),
    )?;
    println!(
        "train-teacher: best lr={} n_estimators={} ({} rounds kept), train accuracy {train_acc:.4}",
        params.learning_rate,
        params.n_estimators,
        teacher.len()
    );
    Ok(())
}

fn load_seed_features(cfg: &PipelineConfig, pre: &Preprocessor) -> Result<Array2<f64>> {
    Ok(load_numeric_csv(cfg.out(SEED), &pre.columns)?.feature_matrix()?)
}

pub fn munge(cfg: &PipelineConfig) -> Result<()> {
    let pre = load_preprocessor(cfg)?;
    let seed_x = load_seed_features(cfg, &pre)?;
    let transfer = munge_generate(seed_x.view(), &feature_kinds(&pre), &cfg.munge)?;
    Dataset::from_matrix(&feature_columns(&pre), &transfer, None)?.write_csv(cfg.out(TRANSFER))?;
    println!(
        "munge: {} synthetic rows from {} seed rows",
        transfer.nrows(),
        seed_x.nrows()
    );
    Ok(())
}

pub fn distill(cfg: &PipelineConfig) -> Result<()> {
    let pre = load_preprocessor(cfg)?;
    let teacher = load_teacher(cfg)?;
    let seed_x = load_seed_features(cfg, &pre)?;
    let report = architecture_search(
        &teacher,
        seed_x.view(),
        &feature_kinds(&pre),
        &cfg.search,
        &cfg.munge,
        &cfg.train,
        &ValidationSource::Synthetic(cfg.distill.validation_size),
    )?;
    let best = &report.best;
    let model: Value = serde_json::from_str(&best.model.to_json()?)?;
    write_json(
        &cfg.out(DTNET),
        &artifact(
            cfg,
            "dtnet",
            json!({ "describe": best.arch.describe(), "depth": best.depth, "nu": best.nu, "model": model }),
        ),
    )?;
    write_json(
        &cfg.out(LEADERBOARD),
        &artifact(cfg, "leaderboard", report.to_json_value()),
    )?;
    println!(
        "distill: best {} (depth {}, nu {:.4}) out of {} candidates",
        best.arch.describe(),
        best.depth,
        best.nu,
        report.leaderboard.len()
    );
    Ok(())
}

/// `"32|32"` style widths.
pub fn parse_widths(s: &str) -> Result<Vec<usize>> {
    s.split('|')
        .map(|w| {
            w.trim()
                .parse::<usize>()
                .with_context(|| format!("bad width '{w}' in '{s}'"))
        })
        .collect()
}

fn depth_entry(arch: &DTNetArch, budget: usize) -> Result<Value> {
    let depth = multiplicative_depth(arch)?;
    Ok(json!({
        "describe": arch.describe(),
        "activation_depths": arch.hidden().iter().map(|h| h.activation.depth()).collect::<Vec<_>>(),
        "depth": depth,
        "fits_budget": depth <= budget,
    }))
}

/// Depth of an explicit skeleton, of a trained model, or of every
/// architecture in the configured search space.
pub fn analyze_depth(cfg: &PipelineConfig, arch: Option<(&str, &str)>, model: Option<PathBuf>) -> Result<()> {
    let budget = cfg.search.depth_budget;
    // Depth does not depend on the input or output width.
    let (input_dim, classes) = load_preprocessor(cfg)
        .map(|p| (feature_columns(&p).len(), p.n_classes().max(2)))
        .unwrap_or((1, 2));
    let entries: Vec<Value> = match (arch, model) {
        (Some((widths, act)), _) => {
            let act = PolyActivation::by_name(act)?;
            let hidden = parse_widths(widths)?
                .into_iter()
                .map(|w| HiddenLayer::new(w, act.clone()))
                .collect();
            vec![depth_entry(&DTNetArch::new(input_dim, hidden, classes)?, budget)?]
        }
        (None, Some(path)) => vec![depth_entry(load_dtnet(&path)?.arch(), budget)?],
        (None, None) => cfg
            .search
            .architectures(input_dim, classes)?
            .iter()
            .map(|a| depth_entry(a, budget))
            .collect::<Result<_>>()?,
    };
    let v = artifact(
        cfg,
        "depth_report",
        json!({ "depth_budget": budget, "architectures": entries }),
    );
    println!("{}", serde_json::to_string_pretty(&v)?);
    if cfg.output_dir.is_dir() {
        write_json(&cfg.out("depth_report.json"), &v)?;
    }
    Ok(())
}

pub fn infer(cfg: &PipelineConfig, encrypted: bool, model_path: Option<PathBuf>) -> Result<()> {
    let pre = load_preprocessor(cfg)?;
    let model = load_dtnet(&model_path.unwrap_or_else(|| cfg.out(DTNET)))?;
    let (x, y) = load_split(cfg, &pre, TEST)?;
    let depth = multiplicative_depth(model.arch())?;
    let mode = if encrypted { "encrypted" } else { "plain" };
    let plain = model.logits(x.view())?;
    let (scores, he) = if encrypted {
        let ev = Evaluator::new(HEParams::new(cfg.he.slots, cfg.he.depth_budget)?);
        let out = he_infer_batched(&ev, &model, x.view(), cfg.he.encrypt_weights)?;
        (out.scores, Some((out.final_level, out.ops)))
    } else {
        (plain.clone(), None)
    };
    let labels = argmax_rows(&scores);

    let columns: Vec<ColumnSpec> = (0..scores.ncols())
        .map(|k| ColumnSpec::feature(format!("score_{k}"), ColumnKind::Continuous))
        .collect();
    Dataset::from_matrix(&columns, &scores, Some(("label", &labels)))?
        .write_csv(cfg.out(&format!("predictions_{mode}.csv")))?;
    let acc = accuracy(&labels, &y);
    let mut report = json!({
        "mode": mode,
        "points": labels.len(),
        "accuracy": acc,
        "analyzer_depth": depth,
        "describe": model.arch().describe(),
        "labels": labels,
    });
    if let Some((level, ops)) = he {
        let diff = (&scores - &plain).iter().fold(0.0f64, |m, d| m.max(d.abs()));
        report["batch"] = json!(cfg.he.slots.min(labels.len()));
        report["batches"] = json!(labels.len().div_ceil(cfg.he.slots));
        report["final_level"] = json!(level);
        report["budget"] = json!(cfg.he.depth_budget);
        report["max_abs_score_diff_vs_plaintext"] = json!(diff);
        report["slots"] = json!(cfg.he.slots);
        report["weights_encrypted"] = json!(cfg.he.encrypt_weights);
        report["ops"] = serde_json::to_value(ops)?;
    }
    write_json(
        &cfg.out(&format!("infer_report_{mode}.json")),
        &artifact(cfg, "infer_report", report),
    )?;
    println!(
        "infer ({mode}): {} points, accuracy {acc:.4}, depth {depth}",
        labels.len()
    );
    Ok(())
}

/// Op counts of one encrypted batch; they do not depend on the inputs.
fn dtnet_ops(cfg: &PipelineConfig, model: &DTNetModel) -> Result<OpCounts> {
    let ev = Evaluator::new(HEParams::new(cfg.he.slots, cfg.he.depth_budget)?);
    let x = Array2::zeros((1, model.arch().input_dim()));
    Ok(dtnet_core::hesim::he_infer(&ev, model, x.view(), cfg.he.encrypt_weights)?.ops)
}

pub fn cost_model(cfg: &PipelineConfig, model_path: Option<PathBuf>) -> Result<()> {
    let (lo, hi) = cost_estimate(&cfg.cost_model)?;
    let p = &cfg.cost_model;
    println!(
        "soft-comparator ensemble: {} comparisons/tree x [{}-{}] bootstraps x {} s x {} batches = {lo:.2}-{hi:.2} s/point",
        p.comparisons_per_tree(),
        p.bootstraps_per_cmp.0,
        p.bootstraps_per_cmp.1,
        p.bootstrap_time_s,
        p.tree_batches()
    );
    let path = model_path.unwrap_or_else(|| cfg.out(DTNET));
    let mut report = json!({
        "soft_comparator": { "low_s": lo, "high_s": hi, "params": serde_json::to_value(p)? },
    });
    if path.is_file() {
        let model = load_dtnet(&path)?;
        let ops = dtnet_ops(cfg, &model)?;
        let proxy = dtnet_cost_proxy(&ops, cfg.he.slots, &cfg.latency)?;
        let ratio = lo / proxy;
        println!(
            "dtnet {}: {proxy:.3e} s/point amortized over {} slots; soft-comparator low bound is {ratio:.0}x slower",
            model.arch().describe(),
            cfg.he.slots
        );
        report["dtnet"] = json!({
            "describe": model.arch().describe(),
            "ops": serde_json::to_value(ops)?,
            "amortized_s": proxy,
            "latency": serde_json::to_value(&cfg.latency)?,
            "ratio_low": ratio,
            "ratio_high": hi / proxy,
        });
    } else {
        println!("no DTNet at {}; skipping the comparison ratio", path.display());
    }
    if cfg.output_dir.is_dir() {
        write_json(&cfg.out("cost_model.json"), &artifact(cfg, "cost_model", report))?;
    }
    Ok(())
}

pub fn report(cfg: &PipelineConfig) -> Result<()> {
    let pre = load_preprocessor(cfg)?;
    let teacher = load_teacher(cfg)?;
    let model = load_dtnet(&cfg.out(DTNET))?;
    let seed = load_numeric_csv(cfg.out(SEED), &pre.columns)?;
    let (test_x, test_y) = load_split(cfg, &pre, TEST)?;

    let baseline = train_baseline(
        seed.feature_matrix()?.view(),
        &seed.labels()?,
        pre.n_classes(),
        &cfg.search,
        &cfg.baseline.train,
        cfg.baseline.holdout,
        cfg.seed,
    )?;
    let teacher_acc = accuracy(&ensemble_predict(&teacher, test_x.view())?.0, &test_y);
    let dtnet_acc = accuracy(&argmax_rows(&model.logits(test_x.view())?), &test_y);
    let baseline_acc = accuracy(&argmax_rows(&baseline.model.logits(test_x.view())?), &test_y);

    let table = format!(
        "run,seed,teacher_accuracy,dtnet_accuracy,baseline_accuracy\n0,{},{teacher_acc},{dtnet_acc},{baseline_acc}\n",
        cfg.seed
    );
    let path = cfg.out("report.csv");
    fs::write(&path, &table).with_context(|| format!("writing {}", path.display()))?;
    write_json(
        &cfg.out("report.json"),
        &artifact(
            cfg,
            "report",
            json!({
                "runs": [{
                    "seed": cfg.seed,
                    "teacher_accuracy": teacher_acc,
                    "dtnet_accuracy": dtnet_acc,
                    "baseline_accuracy": baseline_acc,
                    "dtnet": model.arch().describe(),
                    "baseline": baseline.arch.describe(),
                    "baseline_training_points": seed.n(),
                }],
            }),
        ),
    )?;
    print!("{table}");
    Ok(())
}
