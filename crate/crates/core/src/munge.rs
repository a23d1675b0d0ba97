//! Synthetic transfer-set generation from a small unlabeled seed set.
//!
//! Each synthetic row starts as a copy of a seed example `e` and is pulled
//! toward its nearest neighbour `e'`: continuous attributes are resampled
//! with probability `p` from a Gaussian centred on `e'_a` with standard
//! deviation `|e_a - e'_a| / s`, categorical attributes are swapped for the
//! neighbour's code with probability `p`. The neighbour itself is never
//! modified.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::ColumnKind;
use crate::error::{Error, Result};
use crate::util;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MungeParams {
    pub swap_prob: f64,
    pub local_scale: f64,
    pub target_size: usize,
    pub seed: u64,
}

impl Default for MungeParams {
    fn default() -> Self {
        MungeParams {
            swap_prob: 0.5,
            local_scale: 1.0,
            target_size: 20_000,
            seed: 0,
        }
    }
}

impl MungeParams {
    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.swap_prob) {
            return Err(Error::InvalidParam(format!(
                "swap_prob {} not in [0, 1]",
                self.swap_prob
            )));
        }
        if !(self.local_scale > 0.0) {
            return Err(Error::InvalidParam(format!(
                "local_scale {} must be positive",
                self.local_scale
            )));
        }
        if self.target_size < 1 {
            return Err(Error::InvalidParam("target_size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Euclidean distance over continuous attributes plus the number of
/// mismatched categorical attributes.
fn mixed_distance(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>, kinds: &[ColumnKind]) -> f64 {
    let mut sq = 0.0;
    let mut mismatches = 0.0;
    for ((x, y), k) in a.iter().zip(b).zip(kinds) {
        match k {
            ColumnKind::Continuous => sq += (x - y) * (x - y),
            ColumnKind::Categorical => {
                if x != y {
                    mismatches += 1.0
                }
            }
        }
    }
    sq.sqrt() + mismatches
}

/// Index of the row closest to row `i` (excluding `i`); ties go to the
/// lowest index.
pub fn nearest_neighbor(rows: ArrayView2<'_, f64>, kinds: &[ColumnKind], i: usize) -> Result<usize> {
    if rows.nrows() < 2 {
        return Err(Error::Empty("nearest neighbour needs at least two rows".into()));
    }
    if i >= rows.nrows() {
        return Err(Error::InvalidParam(format!(
            "row {i} out of range for {} rows",
            rows.nrows()
        )));
    }
    if kinds.len() != rows.ncols() {
        return Err(Error::Shape(format!(
            "{} kinds for {} columns",
            kinds.len(),
            rows.ncols()
        )));
    }
    let target = rows.row(i);
    let mut best = (usize::MAX, f64::INFINITY);
    for (j, r) in rows.rows().into_iter().enumerate() {
        if j == i {
            continue;
        }
        let d = mixed_distance(target, r, kinds);
        if d < best.1 {
            best = (j, d);
        }
    }
    Ok(best.0)
}

/// Generates exactly `params.target_size` rows by cycling over the seed set.
///
/// Row `r` is derived from seed example `r mod n` using its own RNG stream,
/// so the output is a pure function of `(seed_rows, kinds, params)`.
pub fn munge_generate(
    seed_rows: ArrayView2<'_, f64>,
    kinds: &[ColumnKind],
    params: &MungeParams,
) -> Result<Array2<f64>> {
    params.validate()?;
    let n = seed_rows.nrows();
    if n == 0 {
        return Err(Error::Empty("seed set is empty".into()));
    }
    if kinds.len() != seed_rows.ncols() {
        return Err(Error::Shape(format!(
            "{} kinds for {} columns",
            kinds.len(),
            seed_rows.ncols()
        )));
    }
    if seed_rows.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParam("seed set contains non-finite cells".into()));
    }
    let neighbours = (0..n)
        .map(|i| nearest_neighbor(seed_rows, kinds, i))
        .collect::<Result<Vec<_>>>()?;

    let d = seed_rows.ncols();
    let mut out = Array2::zeros((params.target_size, d));
    for (r, mut row) in out.rows_mut().into_iter().enumerate() {
        let i = r % n;
        let (e, nb) = (seed_rows.row(i), seed_rows.row(neighbours[i]));
        let mut rng = util::rng_stream(params.seed, r as u64);
        for a in 0..d {
            let mut v = e[a];
            if rng.gen::<f64>() < params.swap_prob {
                v = match kinds[a] {
                    ColumnKind::Categorical => nb[a],
                    ColumnKind::Continuous => {
                        let sd = (e[a] - nb[a]).abs() / params.local_scale;
                        let sample = if sd > 0.0 {
                            Normal::new(nb[a], sd).expect("finite sd").sample(&mut rng)
                        } else {
                            nb[a]
                        };
                        sample.clamp(0.0, 1.0)
                    }
                };
            }
            row[a] = v;
        }
    }
    Ok(out)
}
