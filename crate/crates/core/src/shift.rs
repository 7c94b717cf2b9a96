//! Weighted backward shifts and their canonical right inverses.
//!
//! A weight sequence is described through its potential `β`, normalised so
//! that `w_j = β(j) / β(j-1)` and `β(anchor) = 1` (anchor `1` for unilateral
//! shifts, `0` for bilateral ones). With that convention
//!
//! ```text
//! T^k e_j = β(j)/β(j-k) e_{j-k}      S_k e_j = β(j)/β(j+k) e_{j+k}
//! ```
//!
//! and `D x = (β(j) x_j)` conjugates `B_w` to the unweighted shift.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::space::{FSpace, IndexKind, SparseVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase")]
pub enum WeightRule {
    /// `w_j = λ` everywhere.
    Constant { lambda: f64 },
    /// `w_j = ((1+|j|)/(1+|j-1|))^a`, i.e. `((j+1)/j)^a` for `j >= 1`.
    Power { a: f64 },
    /// `w_j = weights[j - start]` on the table, `λ` elsewhere.
    Table {
        start: i64,
        weights: Vec<f64>,
        lambda: f64,
    },
}

impl WeightRule {
    fn validate(&self, side: IndexKind) -> Result<()> {
        let bad = |v: f64| v == 0.0 || !v.is_finite();
        match self {
            WeightRule::Constant { lambda } if bad(*lambda) => {
                Err(Error::InvalidWeights(format!("constant weight {lambda} must be nonzero")))
            }
            WeightRule::Power { a } if !a.is_finite() => {
                Err(Error::InvalidWeights(format!("power exponent {a} must be finite")))
            }
            WeightRule::Table {
                start,
                weights,
                lambda,
            } => {
                if bad(*lambda) || weights.iter().any(|&w| bad(w)) {
                    return Err(Error::InvalidWeights("table weights must be nonzero".into()));
                }
                if side == IndexKind::Unilateral && *start < 2 {
                    return Err(Error::InvalidWeights(
                        "unilateral weights are indexed from 2".into(),
                    ));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedShift {
    side: IndexKind,
    rule: WeightRule,
    space: FSpace,
}

impl WeightedShift {
    pub fn new(side: IndexKind, rule: WeightRule, space: FSpace) -> Result<Self> {
        space.check_side(side)?;
        rule.validate(side)?;
        Ok(WeightedShift { side, rule, space })
    }

    pub fn side(&self) -> IndexKind {
        self.side
    }

    pub fn rule(&self) -> &WeightRule {
        &self.rule
    }

    pub fn space(&self) -> &FSpace {
        &self.space
    }

    pub fn anchor(&self) -> i64 {
        match self.side {
            IndexKind::Unilateral => 1,
            IndexKind::Bilateral => 0,
        }
    }

    pub fn weight(&self, j: i64) -> f64 {
        match &self.rule {
            WeightRule::Constant { lambda } => *lambda,
            WeightRule::Power { a } => ((1 + j.abs()) as f64 / (1 + (j - 1).abs()) as f64).powf(*a),
            WeightRule::Table {
                start,
                weights,
                lambda,
            } => table_lookup(*start, weights, j).unwrap_or(*lambda),
        }
    }

    /// `w_j` in the scalar type; exact for dyadic tables and integral powers.
    pub fn weight_scalar<S: Scalar>(&self, j: i64) -> S {
        match &self.rule {
            WeightRule::Power { a } if a.fract() == 0.0 && a.abs() <= 64.0 => {
                let ratio = S::from_i64(1 + j.abs()).expect("integer scalar")
                    / S::from_i64(1 + (j - 1).abs()).expect("integer scalar");
                ratio.powi_exact(*a as i32)
            }
            _ => S::from_real(self.weight(j)),
        }
    }

    /// `β(to)/β(from) = Π_{from < v <= to} w_v` for `to >= from` (inverse otherwise).
    pub fn beta_ratio(&self, from: i64, to: i64) -> f64 {
        match &self.rule {
            WeightRule::Constant { lambda } => signed_pow(*lambda, to - from),
            WeightRule::Power { a } => ((1 + to.abs()) as f64 / (1 + from.abs()) as f64).powf(*a),
            WeightRule::Table {
                start,
                weights,
                lambda,
            } => {
                let (lo, hi, invert) = if to >= from {
                    (from, to, false)
                } else {
                    (to, from, true)
                };
                let mut correction = 1.0;
                let first = (lo + 1).max(*start);
                let last = hi.min(*start + weights.len() as i64 - 1);
                for v in first..=last {
                    correction *= weights[(v - start) as usize] / lambda;
                }
                let r = correction * signed_pow(*lambda, hi - lo);
                if invert {
                    1.0 / r
                } else {
                    r
                }
            }
        }
    }

    /// Potential `β(j)` relative to the anchor.
    pub fn potential(&self, j: i64) -> f64 {
        self.beta_ratio(self.anchor(), j)
    }

    fn check<S: Scalar>(&self, x: &SparseVector<S>) -> Result<()> {
        if x.kind() != self.side {
            return Err(Error::IndexKindMismatch {
                left: self.side,
                right: x.kind(),
            });
        }
        Ok(())
    }

    /// `(Tx)_k = w_{k+1} x_{k+1}`.
    pub fn apply_backward<S: Scalar>(&self, x: &SparseVector<S>) -> Result<SparseVector<S>> {
        self.check(x)?;
        let mut out = SparseVector::zero(self.side);
        for (i, c) in x.iter() {
            if self.side.admits(i - 1) {
                out.accumulate(i - 1, self.weight_scalar::<S>(i) * c);
            }
        }
        Ok(out)
    }

    /// `S_n x`, with `S_1 e_k = e_{k+1} / w_{k+1}` and `S_n = S_1^n`.
    pub fn apply_right_inverse<S: Scalar>(&self, n: u32, x: &SparseVector<S>) -> Result<SparseVector<S>> {
        self.check(x)?;
        let mut out = SparseVector::zero(self.side);
        for (i, c) in x.iter() {
            let mut coef = c;
            for v in i + 1..=i + n as i64 {
                coef = coef / self.weight_scalar::<S>(v);
            }
            out.accumulate(i + n as i64, coef);
        }
        Ok(out)
    }

    pub fn apply_backward_power<S: Scalar>(&self, k: u32, x: &SparseVector<S>) -> Result<SparseVector<S>> {
        let mut y = x.clone();
        for _ in 0..k {
            y = self.apply_backward(&y)?;
        }
        Ok(y)
    }

    /// `T^k x` through the closed-form potential ratios; one pass per entry.
    pub fn backward_power_f64(&self, k: u64, x: &SparseVector<f64>) -> SparseVector<f64> {
        let mut out = SparseVector::zero(self.side);
        let k = k as i64;
        for (i, c) in x.iter() {
            if self.side.admits(i - k) {
                out.accumulate(i - k, c * self.beta_ratio(i - k, i));
            }
        }
        out
    }

    /// `S_k x` through the closed-form potential ratios.
    pub fn right_inverse_f64(&self, k: u64, x: &SparseVector<f64>) -> SparseVector<f64> {
        let mut out = SparseVector::zero(self.side);
        let k = k as i64;
        for (i, c) in x.iter() {
            out.accumulate(i + k, c / self.beta_ratio(i, i + k));
        }
        out
    }

    /// Diagonal conjugacy `(Dx)_j = β(j) x_j`, with `D B_w = B D`.
    pub fn conjugate_to_unweighted(&self, x: &SparseVector<f64>) -> SparseVector<f64> {
        let mut out = SparseVector::zero(self.side);
        for (j, c) in x.iter() {
            out.accumulate(j, c * self.potential(j));
        }
        out
    }
}

fn table_lookup(start: i64, weights: &[f64], j: i64) -> Option<f64> {
    let off = j - start;
    if off < 0 {
        return None;
    }
    weights.get(off as usize).copied()
}

fn signed_pow(base: f64, exp: i64) -> f64 {
    let mag = base.abs().powf(exp as f64);
    if base < 0.0 && exp.rem_euclid(2) == 1 {
        -mag
    } else {
        mag
    }
}
