use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Split `x^k = x^a * x^(k-a)` used by the balanced power tree:
/// `x^2 = x*x`, `x^3 = x^2*x`, `x^4 = x^2*x^2`, `x^5 = x^2*x^3`,
/// `x^6 = x^3*x^3`.
pub fn power_split(k: usize) -> (usize, usize) {
    assert!(k >= 2);
    (k - k / 2, k / 2)
}

/// Multiplications along the longest path to `x^k` in the power tree.
pub fn power_depth(k: usize) -> usize {
    assert!(k >= 1);
    if k == 1 {
        return 0;
    }
    let (a, b) = power_split(k);
    power_depth(a).max(power_depth(b)) + 1
}

/// For a scaled term `c * x^k` (k >= 2), the `a` in `(c * x^a) * x^(k-a)`
/// that minimizes depth; the smallest such `a` wins ties.
pub fn term_split(k: usize) -> usize {
    assert!(k >= 2);
    (1..k)
        .min_by_key(|&a| (term_depth(a).max(power_depth(k - a)) + 1, a))
        .expect("k >= 2")
}

/// Multiplications along the longest path to `c * x^k` when the
/// coefficient multiply is folded into the product tree (`c * x` costs one
/// level, shared powers come from the power tree).
pub fn term_depth(k: usize) -> usize {
    assert!(k >= 1);
    if k == 1 {
        return 1;
    }
    let a = term_split(k);
    term_depth(a).max(power_depth(k - a)) + 1
}

/// A polynomial activation `c0 + c1 x + c2 x^2 + ...`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyActivation {
    name: String,
    coefficients: Vec<f64>,
}

pub const BUILTIN_NAMES: [&str; 5] = ["approxSigmoid", "approxRelu", "approxRelu3", "swish3", "approxRelu6"];

impl PolyActivation {
    pub fn new(name: impl Into<String>, coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.is_empty() || coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParam(
                "activation coefficients must be finite and non-empty".into(),
            ));
        }
        Ok(PolyActivation {
            name: name.into(),
            coefficients,
        })
    }

    fn builtin(name: &str, coefficients: &[f64]) -> Self {
        PolyActivation {
            name: name.to_string(),
            coefficients: coefficients.to_vec(),
        }
    }

    pub fn approx_sigmoid() -> Self {
        Self::builtin("approxSigmoid", &[0.5, 3.0 / 20.0, 0.0, -3.0 / 2000.0])
    }

    pub fn approx_relu() -> Self {
        Self::builtin("approxRelu", &[0.47, 0.50, 0.09])
    }

    pub fn approx_relu3() -> Self {
        Self::builtin("approxRelu3", &[0.47, 0.50, 0.09, -1.7e-10])
    }

    pub fn swish3() -> Self {
        Self::builtin("swish3", &[0.24, 0.50, 0.10, -1.2e-10])
    }

    pub fn approx_relu6() -> Self {
        Self::builtin("approxRelu6", &[0.21, 0.50, 0.23, 7.6e-8, -1.1e-2, -3.5e-9, 2.3e-4])
    }

    pub fn builtins() -> Vec<Self> {
        BUILTIN_NAMES.iter().map(|n| Self::by_name(n).unwrap()).collect()
    }

    pub fn by_name(name: &str) -> Result<Self> {
        Ok(match name {
            "approxSigmoid" => Self::approx_sigmoid(),
            "approxRelu" => Self::approx_relu(),
            "approxRelu3" => Self::approx_relu3(),
            "swish3" => Self::swish3(),
            "approxRelu6" => Self::approx_relu6(),
            other => {
                return Err(Error::InvalidParam(format!(
                    "unknown activation '{other}', expected one of {BUILTIN_NAMES:?}"
                )))
            }
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Degree-ascending coefficients.
    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// Exponents `k >= 1` with a nonzero coefficient.
    pub fn active_powers(&self) -> impl Iterator<Item = usize> + '_ {
        self.coefficients
            .iter()
            .enumerate()
            .skip(1)
            .filter(|(_, c)| **c != 0.0)
            .map(|(k, _)| k)
    }

    /// Multiplicative depth: the deepest scaled term in the power tree.
    pub fn depth(&self) -> usize {
        self.active_powers().map(term_depth).max().unwrap_or(0)
    }

    /// Horner evaluation.
    pub fn eval(&self, x: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    /// Evaluation along the same power tree the encrypted path uses.
    pub fn eval_power_tree(&self, x: f64) -> f64 {
        let degree = self.coefficients.len() - 1;
        let mut powers = vec![1.0, x];
        for k in 2..=degree {
            let (a, b) = power_split(k);
            powers.push(powers[a] * powers[b]);
        }
        self.coefficients.iter().zip(&powers).map(|(c, p)| c * p).sum()
    }

    pub fn grad(&self, x: f64) -> f64 {
        self.coefficients
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, &c)| acc * x + k as f64 * c)
    }
}
