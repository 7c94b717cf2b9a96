//! Sequence F-spaces and finitely supported vectors.
//!
//! Two families are built in: `ℓ^p` for `0 < p < ∞` (unilateral or bilateral
//! index set) and `ω`, the space of all sequences (unilateral only). Each
//! carries an F-norm `F` with `F(x + y) <= F(x) + F(y)` and `F(cx) <= F(x)`
//! for `|c| <= 1`; the dyadic radii `r_n = r_0 2^{-n}` then give balanced
//! 0-neighbourhoods `U_n = {F < r_n}` with `U_{n+1} + U_{n+1} ⊂ U_n`.

use std::collections::BTreeMap;
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Index set of a sequence: `ℕ = {1, 2, ...}` or `ℤ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexKind {
    Unilateral,
    Bilateral,
}

impl IndexKind {
    pub fn admits(self, index: i64) -> bool {
        match self {
            IndexKind::Unilateral => index >= 1,
            IndexKind::Bilateral => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SpaceKind {
    Lp { p: f64 },
    Omega,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FSpace {
    pub kind: SpaceKind,
    pub base_radius: f64,
}

impl FSpace {
    pub fn lp(p: f64) -> Result<Self> {
        Self::new(SpaceKind::Lp { p }, 1.0)
    }

    pub fn omega() -> Self {
        FSpace {
            kind: SpaceKind::Omega,
            base_radius: 1.0,
        }
    }

    pub fn new(kind: SpaceKind, base_radius: f64) -> Result<Self> {
        if let SpaceKind::Lp { p } = kind {
            if !(p > 0.0 && p.is_finite()) {
                return Err(Error::InvalidSpace(format!("exponent p = {p} must satisfy 0 < p < inf")));
            }
        }
        if !(base_radius > 0.0 && base_radius.is_finite()) {
            return Err(Error::InvalidSpace(format!("base radius {base_radius} must be positive")));
        }
        Ok(FSpace { kind, base_radius })
    }

    /// Rejects index sets the space does not support (`ω` is unilateral only).
    pub fn check_side(&self, side: IndexKind) -> Result<()> {
        match (self.kind, side) {
            (SpaceKind::Omega, IndexKind::Bilateral) => Err(Error::InvalidSpace(
                "omega is only provided over the unilateral index set".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Homogeneity exponent of the single-coordinate F-norm on `ℓ^p`:
    /// `F(t e_i) = t^q` with `q = min(p, 1)`. `None` for `ω`.
    pub fn homogeneity(&self) -> Option<f64> {
        match self.kind {
            SpaceKind::Lp { p } => Some(p.min(1.0)),
            SpaceKind::Omega => None,
        }
    }

    /// `F(t e_index)` for a magnitude `t >= 0`.
    pub fn unit_norm(&self, index: i64, t: f64) -> f64 {
        match self.kind {
            SpaceKind::Lp { p } if p >= 1.0 => t,
            SpaceKind::Lp { p } => t.powf(p),
            SpaceKind::Omega => omega_weight(index) * bounded(t),
        }
    }

    pub fn f_norm<S: Scalar>(&self, x: &SparseVector<S>) -> f64 {
        self.norm_of_magnitudes(x.entries.iter().map(|(&i, c)| (i, c.magnitude())))
    }

    /// F-norm of a vector given as `(index, |coordinate|)` pairs.
    pub fn norm_of_magnitudes(&self, coords: impl Iterator<Item = (i64, f64)>) -> f64 {
        match self.kind {
            SpaceKind::Lp { p } if p >= 1.0 => {
                let mags: Vec<f64> = coords.map(|(_, t)| t).collect();
                let scale = mags.iter().fold(0.0f64, |m, &t| m.max(t));
                if scale == 0.0 || !scale.is_finite() {
                    return scale;
                }
                let s: f64 = mags.iter().map(|&t| (t / scale).powf(p)).sum();
                scale * s.powf(1.0 / p)
            }
            SpaceKind::Lp { p } => coords.map(|(_, t)| t.powf(p)).sum(),
            SpaceKind::Omega => coords.map(|(i, t)| omega_weight(i) * bounded(t)).sum(),
        }
    }

    pub fn neighborhood_radius(&self, n: u32) -> f64 {
        self.base_radius * (-(n as f64)).exp2()
    }

    /// `x ∈ U_n`.
    pub fn in_neighborhood<S: Scalar>(&self, x: &SparseVector<S>, n: u32) -> bool {
        self.f_norm(x) < self.neighborhood_radius(n)
    }

    pub fn distance<S: Scalar>(&self, x: &SparseVector<S>, y: &SparseVector<S>) -> Result<f64> {
        Ok(self.f_norm(&x.sub(y)?))
    }

    /// Splits `x` into the part supported on `window` and reports the F-norm
    /// of what was discarded.
    pub fn truncate<S: Scalar>(
        &self,
        x: &SparseVector<S>,
        window: RangeInclusive<i64>,
    ) -> (SparseVector<S>, f64) {
        let (kept, dropped) = x.split_window(window);
        (kept, self.f_norm(&dropped))
    }
}

fn omega_weight(index: i64) -> f64 {
    debug_assert!(index >= 1, "omega coordinates start at 1");
    (-(index as f64)).exp2()
}

fn bounded(t: f64) -> f64 {
    if t.is_infinite() {
        1.0
    } else {
        t / (1.0 + t)
    }
}

/// Finitely supported sequence with no stored zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector<S> {
    kind: IndexKind,
    entries: BTreeMap<i64, S>,
}

impl<S: Scalar> SparseVector<S> {
    pub fn zero(kind: IndexKind) -> Self {
        SparseVector {
            kind,
            entries: BTreeMap::new(),
        }
    }

    /// Canonical unit vector `e_index`.
    pub fn unit(kind: IndexKind, index: i64) -> Result<Self> {
        let mut v = Self::zero(kind);
        v.set(index, S::one())?;
        Ok(v)
    }

    pub fn from_entries(kind: IndexKind, entries: impl IntoIterator<Item = (i64, S)>) -> Result<Self> {
        let mut v = Self::zero(kind);
        for (i, c) in entries {
            let cur = v.get(i);
            v.set(i, cur + c)?;
        }
        Ok(v)
    }

    pub fn kind(&self) -> IndexKind {
        self.kind
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, index: i64) -> S {
        self.entries.get(&index).copied().unwrap_or_else(S::zero)
    }

    pub fn set(&mut self, index: i64, value: S) -> Result<()> {
        if !self.kind.admits(index) {
            return Err(Error::InvalidIndex {
                index,
                kind: self.kind,
            });
        }
        if value.is_zero() {
            self.entries.remove(&index);
        } else {
            self.entries.insert(index, value);
        }
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, S)> + '_ {
        self.entries.iter().map(|(&i, &c)| (i, c))
    }

    /// Smallest and largest stored index.
    pub fn support_bounds(&self) -> Option<(i64, i64)> {
        let lo = *self.entries.keys().next()?;
        let hi = *self.entries.keys().next_back()?;
        Some((lo, hi))
    }

    pub fn max_magnitude(&self) -> f64 {
        self.entries.values().fold(0.0, |m, c| m.max(c.magnitude()))
    }

    fn check_kind(&self, other: &Self) -> Result<()> {
        if self.kind != other.kind {
            return Err(Error::IndexKindMismatch {
                left: self.kind,
                right: other.kind,
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        out.add_scaled(S::one(), other)?;
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        out.add_scaled(-S::one(), other)?;
        Ok(out)
    }

    pub fn scale(&self, c: S) -> Self {
        if c.is_zero() {
            return Self::zero(self.kind);
        }
        SparseVector {
            kind: self.kind,
            entries: self
                .entries
                .iter()
                .map(|(&i, &v)| (i, v * c))
                .filter(|(_, v)| !v.is_zero())
                .collect(),
        }
    }

    /// `self += c * other`.
    pub fn add_scaled(&mut self, c: S, other: &Self) -> Result<()> {
        self.check_kind(other)?;
        for (&i, &v) in &other.entries {
            let slot = self.entries.entry(i).or_insert_with(S::zero);
            *slot = *slot + c * v;
            if slot.is_zero() {
                self.entries.remove(&i);
            }
        }
        Ok(())
    }

    /// Adds `value` at `index`, for callers that already validated the index.
    pub(crate) fn accumulate(&mut self, index: i64, value: S) {
        debug_assert!(self.kind.admits(index));
        let slot = self.entries.entry(index).or_insert_with(S::zero);
        *slot = *slot + value;
        if slot.is_zero() {
            self.entries.remove(&index);
        }
    }

    pub fn split_window(&self, window: RangeInclusive<i64>) -> (Self, Self) {
        let mut kept = Self::zero(self.kind);
        let mut dropped = Self::zero(self.kind);
        for (&i, &v) in &self.entries {
            if window.contains(&i) {
                kept.entries.insert(i, v);
            } else {
                dropped.entries.insert(i, v);
            }
        }
        (kept, dropped)
    }

    pub fn map_scalar<T: Scalar>(&self, f: impl Fn(S) -> T) -> SparseVector<T> {
        SparseVector {
            kind: self.kind,
            entries: self
                .entries
                .iter()
                .map(|(&i, &v)| (i, f(v)))
                .filter(|(_, v)| !v.is_zero())
                .collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let keys: std::collections::BTreeSet<i64> =
            self.entries.keys().chain(other.entries.keys()).copied().collect();
        keys.into_iter()
            .map(|i| (self.get(i) - other.get(i)).magnitude())
            .fold(0.0, f64::max)
    }
}
