#![allow(dead_code)]

use dtnet_core::data::split;
use dtnet_core::hesim::{CipherVec, Evaluator};
use dtnet_core::{Cell, ColumnKind, ColumnSpec, Dataset, Preprocessor, Result};
use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

const COLORS: [&str; 4] = ["red", "green", "blue", "gold"];
const SIDES: [&str; 3] = ["n", "s", "e"];

pub fn synthetic_schema() -> Vec<ColumnSpec> {
    let mut cols: Vec<ColumnSpec> = (0..6)
        .map(|i| ColumnSpec::feature(format!("x{i}"), ColumnKind::Continuous))
        .collect();
    cols.push(ColumnSpec::feature("color", ColumnKind::Categorical));
    cols.push(ColumnSpec::feature("side", ColumnKind::Categorical));
    cols.push(ColumnSpec::label("y"));
    cols
}

/// Raw tabular binary problem: six continuous features on assorted ranges
/// (one with ~2% missing cells), two categorical ones, a nonlinear boundary
/// and 5% flipped labels.
pub fn synthetic_dataset(n: usize, seed: u64) -> Dataset {
    let mut r = rng(seed);
    let color_effect = [0.6, -0.4, 0.0, -0.5];
    let side_effect = [0.3, -0.3, 0.0];
    let rows = (0..n)
        .map(|_| {
            let u: Vec<f64> = (0..6).map(|_| r.gen::<f64>()).collect();
            let color = r.gen_range(0..COLORS.len());
            let side = r.gen_range(0..SIDES.len());
            let f = 4.0 * (u[0] - 0.5) * (u[1] - 0.5) * 2.0
                + 0.9 * (2.0 * std::f64::consts::PI * u[2]).sin()
                + if u[3] > 0.6 { 0.7 } else { -0.3 }
                + 0.6 * (u[4] - 0.5)
                - 0.8 * (u[5] - 0.5).powi(2)
                + color_effect[color]
                + side_effect[side];
            let mut label = usize::from(f > 0.0);
            if r.gen::<f64>() < 0.05 {
                label = 1 - label;
            }
            let raw = [
                u[0] * 10.0 - 3.0,
                u[1],
                u[2] * 250.0,
                u[3] * 2.0 - 1.0,
                u[4] + 7.0,
                u[5] * 0.01,
            ];
            let mut cells: Vec<Cell> = raw.iter().map(|&v| Cell::Num(v)).collect();
            if r.gen::<f64>() < 0.02 {
                cells[5] = Cell::Missing;
            }
            cells.push(Cell::Cat(COLORS[color].to_string()));
            cells.push(Cell::Cat(SIDES[side].to_string()));
            cells.push(Cell::Cat(if label == 1 { "yes" } else { "no" }.to_string()));
            cells
        })
        .collect();
    Dataset::new(synthetic_schema(), rows).expect("valid synthetic rows")
}

/// Preprocessed train/test matrices plus a labeled seed subset of the
/// training split.
pub struct Prepared {
    pub train_x: Array2<f64>,
    pub train_y: Vec<usize>,
    pub test_x: Array2<f64>,
    pub test_y: Vec<usize>,
    pub seed_x: Array2<f64>,
    pub seed_y: Vec<usize>,
    pub kinds: Vec<ColumnKind>,
    pub n_classes: usize,
}

pub fn prepared_instance(n: usize, seed_size: usize, seed: u64) -> Result<Prepared> {
    let ds = synthetic_dataset(n, seed);
    let (train, test) = split(&ds, (0.8, 0.2), seed)?;
    let pre = Preprocessor::fit(&train)?;
    let (train, test) = (pre.transform(&train)?, pre.transform(&test)?);
    let (train_x, train_y) = (train.feature_matrix()?, train.labels()?);
    let mut idx: Vec<usize> = (0..train_x.nrows()).collect();
    idx.shuffle(&mut rng(seed ^ 0xABCD));
    idx.truncate(seed_size);
    Ok(Prepared {
        seed_x: train_x.select(Axis(0), &idx),
        seed_y: idx.iter().map(|&i| train_y[i]).collect(),
        test_x: test.feature_matrix()?,
        test_y: test.labels()?,
        kinds: train.feature_kinds(),
        n_classes: pre.n_classes(),
        train_x,
        train_y,
    })
}

#[derive(Clone, Debug)]
pub enum Gate {
    Add(usize, usize),
    Mul(usize, usize),
    MulConst(usize, f64),
    AddConst(usize, f64),
}

/// A straight-line circuit over `inputs` fresh ciphertexts; gate `g` may
/// read any earlier wire (inputs come first).
#[derive(Clone, Debug)]
pub struct Circuit {
    pub inputs: usize,
    pub gates: Vec<Gate>,
}

pub fn random_circuit(r: &mut ChaCha8Rng, max_nodes: usize) -> Circuit {
    let inputs = r.gen_range(1..=3);
    let n_gates = r.gen_range(1..=max_nodes - inputs);
    let mut gates = Vec::with_capacity(n_gates);
    for g in 0..n_gates {
        let wires = inputs + g;
        let a = r.gen_range(0..wires);
        // Bias towards recent wires so deep chains actually occur.
        let b = wires - 1 - r.gen_range(0..wires.min(3));
        gates.push(match r.gen_range(0..4) {
            0 => Gate::Add(a, b),
            1 => Gate::Mul(a, b),
            2 => Gate::MulConst(b, r.gen_range(-1.5..1.5)),
            _ => Gate::AddConst(b, r.gen_range(-1.0..1.0)),
        });
    }
    Circuit { inputs, gates }
}

/// Longest multiplicative path to any wire, counted on the gate graph.
pub fn circuit_depth(c: &Circuit) -> usize {
    let mut depth = vec![0usize; c.inputs];
    for g in &c.gates {
        let d = match *g {
            Gate::Add(a, b) => depth[a].max(depth[b]),
            Gate::Mul(a, b) => depth[a].max(depth[b]) + 1,
            Gate::MulConst(a, _) => depth[a] + 1,
            Gate::AddConst(a, _) => depth[a],
        };
        depth.push(d);
    }
    depth.into_iter().max().unwrap()
}

/// Slotwise evaluation on plain vectors.
pub fn eval_plain(c: &Circuit, inputs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut w: Vec<Vec<f64>> = inputs.to_vec();
    let zip = |a: &[f64], b: &[f64], f: fn(f64, f64) -> f64| a.iter().zip(b).map(|(x, y)| f(*x, *y)).collect();
    for g in &c.gates {
        let v: Vec<f64> = match *g {
            Gate::Add(a, b) => zip(&w[a], &w[b], |x, y| x + y),
            Gate::Mul(a, b) => zip(&w[a], &w[b], |x, y| x * y),
            Gate::MulConst(a, k) => w[a].iter().map(|x| x * k).collect(),
            Gate::AddConst(a, k) => w[a].iter().map(|x| x + k).collect(),
        };
        w.push(v);
    }
    w
}

pub fn eval_encrypted(ev: &Evaluator, c: &Circuit, inputs: &[Vec<f64>]) -> Result<Vec<CipherVec>> {
    let mut w: Vec<CipherVec> = inputs.iter().map(|v| ev.encrypt(v)).collect::<Result<_>>()?;
    let slots = ev.params().slots;
    for g in &c.gates {
        let v = match *g {
            Gate::Add(a, b) => ev.add(&w[a], &w[b])?,
            Gate::Mul(a, b) => ev.mul(&w[a], &w[b])?,
            Gate::MulConst(a, k) => ev.mul_plain(&w[a], &ev.encode(&vec![k; slots])?)?,
            Gate::AddConst(a, k) => ev.add_plain(&w[a], &ev.encode(&vec![k; slots])?)?,
        };
        w.push(v);
    }
    Ok(w)
}
