//! Leveled homomorphic-encryption simulator.
//!
//! Ciphertexts are slot vectors with exact binary64 arithmetic plus a
//! consumed-level counter. No noise is modeled: decrypting any circuit gives
//! exactly what the same operations give on plain vectors. Levels follow
//! the usual leveled-CKKS accounting:
//!
//! * ciphertext x ciphertext multiply: `max(levels) + 1`
//! * ciphertext x plaintext (or scalar) multiply: `level + 1`
//! * additions: `max(levels)`
//!
//! Any multiply whose result would exceed the budget fails with
//! [`Error::DepthExceeded`].

mod infer;

pub use infer::{he_infer, he_infer_batched, InferenceOutput, DEFAULT_SPLIT_LIMIT};

use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::dtnet::{power_split, term_split, PolyActivation};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HEParams {
    pub slots: usize,
    pub depth_budget: usize,
    /// Cyclotomic index exponent the slot count was derived from, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log2_m: Option<u32>,
}

impl Default for HEParams {
    fn default() -> Self {
        HEParams::from_ring(16, 10).expect("valid ring")
    }
}

impl HEParams {
    pub fn new(slots: usize, depth_budget: usize) -> Result<Self> {
        if slots < 1 {
            return Err(Error::InvalidParam("slot count must be at least 1".into()));
        }
        Ok(HEParams {
            slots,
            depth_budget,
            log2_m: None,
        })
    }

    /// `m = 2^log2_m` packs `m / 4` real slots.
    pub fn from_ring(log2_m: u32, depth_budget: usize) -> Result<Self> {
        if !(2..=40).contains(&log2_m) {
            return Err(Error::InvalidParam(format!("log2(m) = {log2_m} out of range")));
        }
        Ok(HEParams {
            slots: (1usize << log2_m) / 4,
            depth_budget,
            log2_m: Some(log2_m),
        })
    }
}

/// Simulated ciphertext.
#[derive(Clone, Debug, PartialEq)]
pub struct CipherVec {
    slots: Vec<f64>,
    level: usize,
}

impl CipherVec {
    pub fn slots(&self) -> &[f64] {
        &self.slots
    }

    pub fn level(&self) -> usize {
        self.level
    }
}

/// Encoded but unencrypted slot vector.
#[derive(Clone, Debug, PartialEq)]
pub struct PlainVec {
    slots: Vec<f64>,
}

impl PlainVec {
    pub fn slots(&self) -> &[f64] {
        &self.slots
    }
}

/// A model constant, either encrypted or only encoded.
#[derive(Clone, Debug, PartialEq)]
pub enum Operand {
    Cipher(CipherVec),
    Plain(PlainVec),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounts {
    pub ct_ct_mul: u64,
    pub ct_pt_mul: u64,
    pub add: u64,
    pub encrypt: u64,
}

#[derive(Default)]
struct Counters {
    ct_ct_mul: AtomicU64,
    ct_pt_mul: AtomicU64,
    add: AtomicU64,
    encrypt: AtomicU64,
}

fn bump(c: &AtomicU64) {
    c.fetch_add(1, Ordering::Relaxed);
}

/// Holds the parameters and counts operations; all operations are pure
/// functions of their inputs and safe to call concurrently.
pub struct Evaluator {
    params: HEParams,
    counters: Counters,
}

impl Evaluator {
    pub fn new(params: HEParams) -> Self {
        Evaluator {
            params,
            counters: Counters::default(),
        }
    }

    pub fn params(&self) -> &HEParams {
        &self.params
    }

    pub fn op_counts(&self) -> OpCounts {
        OpCounts {
            ct_ct_mul: self.counters.ct_ct_mul.load(Ordering::Relaxed),
            ct_pt_mul: self.counters.ct_pt_mul.load(Ordering::Relaxed),
            add: self.counters.add.load(Ordering::Relaxed),
            encrypt: self.counters.encrypt.load(Ordering::Relaxed),
        }
    }

    fn padded(&self, values: &[f64]) -> Result<Vec<f64>> {
        let c = self.params.slots;
        if values.len() > c {
            return Err(Error::InvalidParam(format!("{} values exceed {c} slots", values.len())));
        }
        let mut v = values.to_vec();
        v.resize(c, 0.0);
        Ok(v)
    }

    /// Encrypts up to `C` values at level 0, zero-filling unused slots.
    pub fn encrypt(&self, values: &[f64]) -> Result<CipherVec> {
        bump(&self.counters.encrypt);
        Ok(CipherVec {
            slots: self.padded(values)?,
            level: 0,
        })
    }

    pub fn encode(&self, values: &[f64]) -> Result<PlainVec> {
        Ok(PlainVec {
            slots: self.padded(values)?,
        })
    }

    pub fn decrypt(&self, ct: &CipherVec) -> Vec<f64> {
        ct.slots.clone()
    }

    /// Column packing: ciphertext `k` holds feature `k` of point `j` in slot `j`.
    pub fn encrypt_batch(&self, x: ArrayView2<'_, f64>) -> Result<Vec<CipherVec>> {
        if x.nrows() > self.params.slots {
            return Err(Error::InvalidParam(format!(
                "batch of {} points exceeds {} slots",
                x.nrows(),
                self.params.slots
            )));
        }
        x.columns().into_iter().map(|col| self.encrypt(&col.to_vec())).collect()
    }

    /// Vertical repetition: `w` copied into every slot.
    pub fn encode_weight(&self, w: f64, encrypted: bool) -> Result<Operand> {
        if !w.is_finite() {
            return Err(Error::InvalidParam(format!("weight {w} is not finite")));
        }
        let slots = vec![w; self.params.slots];
        Ok(if encrypted {
            bump(&self.counters.encrypt);
            Operand::Cipher(CipherVec { slots, level: 0 })
        } else {
            Operand::Plain(PlainVec { slots })
        })
    }

    fn same_len(&self, a: &[f64], b: &[f64]) -> Result<()> {
        if a.len() != b.len() {
            return Err(Error::Shape(format!("slot counts differ: {} vs {}", a.len(), b.len())));
        }
        Ok(())
    }

    fn guard(&self, level: usize) -> Result<usize> {
        if level > self.params.depth_budget {
            return Err(Error::DepthExceeded {
                level,
                budget: self.params.depth_budget,
            });
        }
        Ok(level)
    }

    pub fn add(&self, a: &CipherVec, b: &CipherVec) -> Result<CipherVec> {
        self.same_len(&a.slots, &b.slots)?;
        bump(&self.counters.add);
        Ok(CipherVec {
            slots: a.slots.iter().zip(&b.slots).map(|(x, y)| x + y).collect(),
            level: a.level.max(b.level),
        })
    }

    pub fn add_plain(&self, a: &CipherVec, p: &PlainVec) -> Result<CipherVec> {
        self.same_len(&a.slots, &p.slots)?;
        bump(&self.counters.add);
        Ok(CipherVec {
            slots: a.slots.iter().zip(&p.slots).map(|(x, y)| x + y).collect(),
            level: a.level,
        })
    }

    pub fn add_operand(&self, a: &CipherVec, b: &Operand) -> Result<CipherVec> {
        match b {
            Operand::Cipher(c) => self.add(a, c),
            Operand::Plain(p) => self.add_plain(a, p),
        }
    }

    pub fn mul(&self, a: &CipherVec, b: &CipherVec) -> Result<CipherVec> {
        self.same_len(&a.slots, &b.slots)?;
        let level = self.guard(a.level.max(b.level) + 1)?;
        bump(&self.counters.ct_ct_mul);
        Ok(CipherVec {
            slots: a.slots.iter().zip(&b.slots).map(|(x, y)| x * y).collect(),
            level,
        })
    }

    pub fn mul_plain(&self, a: &CipherVec, p: &PlainVec) -> Result<CipherVec> {
        self.same_len(&a.slots, &p.slots)?;
        let level = self.guard(a.level + 1)?;
        bump(&self.counters.ct_pt_mul);
        Ok(CipherVec {
            slots: a.slots.iter().zip(&p.slots).map(|(x, y)| x * y).collect(),
            level,
        })
    }

    pub fn mul_scalar(&self, a: &CipherVec, s: f64) -> Result<CipherVec> {
        let level = self.guard(a.level + 1)?;
        bump(&self.counters.ct_pt_mul);
        Ok(CipherVec {
            slots: a.slots.iter().map(|x| x * s).collect(),
            level,
        })
    }

    pub fn mul_operand(&self, a: &CipherVec, b: &Operand) -> Result<CipherVec> {
        match b {
            Operand::Cipher(c) => self.mul(a, c),
            Operand::Plain(p) => self.mul_plain(a, p),
        }
    }

    /// `Σ_k w_k * x_k` by balanced binary recursion. Halves are evaluated
    /// concurrently while the recursion is shallower than `split_limit`;
    /// the association order is the same either way.
    pub fn dot_recursive(&self, weights: &[Operand], inputs: &[CipherVec], split_limit: usize) -> Result<CipherVec> {
        if weights.len() != inputs.len() {
            return Err(Error::Shape(format!(
                "{} weights for {} inputs",
                weights.len(),
                inputs.len()
            )));
        }
        if weights.is_empty() {
            return Err(Error::Empty("dot product of empty vectors".into()));
        }
        self.dot_rec(weights, inputs, split_limit)
    }

    fn dot_rec(&self, w: &[Operand], x: &[CipherVec], split_limit: usize) -> Result<CipherVec> {
        if w.len() == 1 {
            return self.mul_operand(&x[0], &w[0]);
        }
        let mid = w.len() / 2;
        let (lw, rw) = w.split_at(mid);
        let (lx, rx) = x.split_at(mid);
        let (l, r) = if split_limit > 0 {
            rayon::join(
                || self.dot_rec(lw, lx, split_limit - 1),
                || self.dot_rec(rw, rx, split_limit - 1),
            )
        } else {
            (self.dot_rec(lw, lx, 0), self.dot_rec(rw, rx, 0))
        };
        self.add(&l?, &r?)
    }

    /// Polynomial activation on every slot.
    ///
    /// Powers come from the balanced power tree; each term `c_k x^k` is
    /// built as `(c_k x^a) * x^(k-a)` with the split that keeps it shallow,
    /// so the result sits exactly `act.depth()` levels above the input.
    pub fn poly_activation(&self, act: &PolyActivation, x: &CipherVec) -> Result<CipherVec> {
        let coeffs = act.coefficients();
        let mut powers: Vec<Option<CipherVec>> = vec![None; coeffs.len().max(2)];
        powers[1] = Some(x.clone());

        let mut acc: Option<CipherVec> = None;
        for k in act.active_powers() {
            let term = self.scaled_power(coeffs[k], k, x, &mut powers)?;
            acc = Some(match acc {
                None => term,
                Some(s) => self.add(&s, &term)?,
            });
        }
        let constant = self.encode(&vec![coeffs[0]; self.params.slots])?;
        match acc {
            Some(s) => self.add_plain(&s, &constant),
            // A constant polynomial ignores its input.
            None => Ok(CipherVec {
                slots: constant.slots,
                level: x.level,
            }),
        }
    }

    fn power(&self, k: usize, powers: &mut [Option<CipherVec>]) -> Result<CipherVec> {
        if let Some(p) = &powers[k] {
            return Ok(p.clone());
        }
        let (a, b) = power_split(k);
        let (pa, pb) = (self.power(a, powers)?, self.power(b, powers)?);
        let p = self.mul(&pa, &pb)?;
        powers[k] = Some(p.clone());
        Ok(p)
    }

    fn scaled_power(&self, c: f64, k: usize, x: &CipherVec, powers: &mut [Option<CipherVec>]) -> Result<CipherVec> {
        if k == 1 {
            return self.mul_scalar(x, c);
        }
        let a = term_split(k);
        let head = self.scaled_power(c, a, x, powers)?;
        let tail = self.power(k - a, powers)?;
        self.mul(&head, &tail)
    }

    /// First `batch` slots of each ciphertext, as a points x ciphertexts matrix.
    pub fn decrypt_scores(&self, cts: &[CipherVec], batch: usize) -> Result<Array2<f64>> {
        if batch > self.params.slots {
            return Err(Error::InvalidParam(format!(
                "batch {batch} exceeds {} slots",
                self.params.slots
            )));
        }
        let mut out = Array2::zeros((batch, cts.len()));
        for (k, ct) in cts.iter().enumerate() {
            for j in 0..batch {
                out[[j, k]] = ct.slots[j];
            }
        }
        Ok(out)
    }
}
