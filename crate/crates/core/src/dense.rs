//! Enumeration of the countable dense set `X₀` of finitely supported
//! dyadic-rational vectors, and of the dyadic scalar pool `M ⊂ ℝ`.
//!
//! Scheme `dyadic-stages-v1`. Stage `s >= 1` uses the value grid
//!
//! ```text
//! G_s = { i · 2^{-(s-1)} : |i| <= s · 2^{s-1} }      (|G_s| = s·2^s + 1)
//! ```
//!
//! listed in zig-zag order `0, h, -h, 2h, -2h, ...`. Stage `s` of `X₀` lists
//! every vector supported in the window `W_s` (`{1..s}` unilateral,
//! `{-(s-1)..s-1}` bilateral) with coordinates in `G_s`, as mixed-radix
//! numbers whose least significant digit is the lowest window index. Stages
//! are concatenated, so `x_1 = 0`, and vectors reappear in later stages.
//! Every element of stage `s` has support in `W_s` and sup-norm `<= s`.
//!
//! Stage sizes are at least 3, hence any index `m` lies in a stage
//! `s <= 1 + log_3 m`.

use crate::space::{IndexKind, SparseVector};

pub const SCHEME_VERSION: &str = "dyadic-stages-v1";

/// Number of values in `G_s`.
pub fn grid_size(stage: u32) -> u128 {
    (stage as u128) << stage | 1
}

fn grid_step(stage: u32) -> f64 {
    (-((stage - 1) as f64)).exp2()
}

/// Value at zig-zag position `digit` of `G_s`.
pub fn grid_value(stage: u32, digit: u128) -> f64 {
    let h = grid_step(stage);
    if digit == 0 {
        0.0
    } else if digit % 2 == 1 {
        digit.div_ceil(2) as f64 * h
    } else {
        -((digit / 2) as f64) * h
    }
}

/// Zig-zag position of `v` in `G_s`, if present.
fn grid_digit(stage: u32, v: f64) -> Option<u128> {
    let scaled = v / grid_step(stage);
    if scaled.fract() != 0.0 || v.abs() > stage as f64 {
        return None;
    }
    let i = scaled as i128;
    Some(match i {
        0 => 0,
        i if i > 0 => (2 * i - 1) as u128,
        i => (-2 * i) as u128,
    })
}

/// Deterministic enumeration `m -> x_m` of the dense set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DenseSetEnumeration {
    side: IndexKind,
}

impl DenseSetEnumeration {
    pub fn new(side: IndexKind) -> Self {
        DenseSetEnumeration { side }
    }

    pub fn side(&self) -> IndexKind {
        self.side
    }

    pub fn window(&self, stage: u32) -> std::ops::RangeInclusive<i64> {
        let s = stage as i64;
        match self.side {
            IndexKind::Unilateral => 1..=s,
            IndexKind::Bilateral => -(s - 1)..=(s - 1),
        }
    }

    pub fn window_len(&self, stage: u32) -> u32 {
        match self.side {
            IndexKind::Unilateral => stage,
            IndexKind::Bilateral => 2 * stage - 1,
        }
    }

    /// Upper bound on the sup-norm of every vector in the stage.
    pub fn amplitude(&self, stage: u32) -> f64 {
        stage as f64
    }

    pub fn stage_size(&self, stage: u32) -> u128 {
        grid_size(stage)
            .checked_pow(self.window_len(stage))
            .unwrap_or(u128::MAX)
    }

    /// Number of indices in stages `1..=stage` (saturating).
    pub fn cumulative(&self, stage: u32) -> u128 {
        (1..=stage).fold(0u128, |acc, s| acc.saturating_add(self.stage_size(s)))
    }

    pub fn stage_of(&self, m: u64) -> u32 {
        assert!(m >= 1, "dense-set indices start at 1");
        let mut cum = 0u128;
        let mut s = 0;
        while cum < m as u128 {
            s += 1;
            cum = cum.saturating_add(self.stage_size(s));
        }
        s
    }

    pub fn vector(&self, m: u64) -> SparseVector<f64> {
        let stage = self.stage_of(m);
        let mut local = m as u128 - 1 - self.cumulative(stage - 1);
        let radix = grid_size(stage);
        let mut v = SparseVector::zero(self.side);
        for idx in self.window(stage) {
            let digit = local % radix;
            local /= radix;
            if digit != 0 {
                v.accumulate(idx, grid_value(stage, digit));
            }
        }
        v
    }

    /// First index at which `v` appears, or `None` if `v` is not a
    /// finitely supported dyadic vector reachable with a `u64` index.
    pub fn position_of(&self, v: &SparseVector<f64>) -> Option<u64> {
        if v.kind() != self.side {
            return None;
        }
        if v.is_zero() {
            return Some(1);
        }
        let (lo, hi) = v.support_bounds()?;
        for stage in 1..=64u32 {
            let w = self.window(stage);
            if !(w.contains(&lo) && w.contains(&hi)) {
                continue;
            }
            let radix = grid_size(stage);
            let mut local: u128 = 0;
            let mut place: u128 = 1;
            let mut ok = true;
            for idx in w {
                match grid_digit(stage, v.get(idx)) {
                    Some(d) => {
                        local = local.checked_add(d.checked_mul(place)?)?;
                        place = place.saturating_mul(radix);
                    }
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            if ok {
                let m = self.cumulative(stage - 1).checked_add(local)?.checked_add(1)?;
                return u64::try_from(m).ok();
            }
        }
        None
    }
}

/// Enumeration `n -> z_n` of dyadic rationals with `z_1 = 0`, `z_2 = 1`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ScalarPool;

impl ScalarPool {
    pub fn cumulative(&self, stage: u32) -> u128 {
        (1..=stage).map(grid_size).sum()
    }

    pub fn stage_of(&self, n: u64) -> u32 {
        assert!(n >= 1, "pool indices start at 1");
        let mut cum = 0u128;
        let mut s = 0;
        while cum < n as u128 {
            s += 1;
            cum += grid_size(s);
        }
        s
    }

    pub fn amplitude(&self, stage: u32) -> f64 {
        stage as f64
    }

    pub fn value(&self, n: u64) -> f64 {
        let s = self.stage_of(n);
        grid_value(s, n as u128 - 1 - self.cumulative(s - 1))
    }

    /// Every pool index `n <= limit` whose value equals `v`.
    pub fn indices_of(&self, v: f64, limit: u64) -> Vec<u64> {
        let mut out = Vec::new();
        let mut s = 1;
        while self.cumulative(s - 1) < limit as u128 {
            if let Some(d) = grid_digit(s, v) {
                let n = self.cumulative(s - 1) + d + 1;
                if n <= limit as u128 {
                    out.push(n as u64);
                }
            }
            s += 1;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_vector_is_zero() {
        for side in [IndexKind::Unilateral, IndexKind::Bilateral] {
            let e = DenseSetEnumeration::new(side);
            assert!(e.vector(1).is_zero());
            assert_eq!(e.vector(7), e.vector(7));
        }
    }

    #[test]
    fn early_indices() {
        let e = DenseSetEnumeration::new(IndexKind::Unilateral);
        assert_eq!(e.vector(2), SparseVector::unit(IndexKind::Unilateral, 1).unwrap());
        assert_eq!(e.vector(3), SparseVector::unit(IndexKind::Unilateral, 1).unwrap().scale(-1.0));
        assert!(e.vector(4).is_zero());
        assert_eq!(e.vector(5).get(1), 0.5);
        assert_eq!(e.stage_of(3), 1);
        assert_eq!(e.stage_of(4), 2);
        assert_eq!(e.stage_of(84), 2);
        assert_eq!(e.stage_of(85), 3);
        let b = DenseSetEnumeration::new(IndexKind::Bilateral);
        assert_eq!(b.vector(2), SparseVector::unit(IndexKind::Bilateral, 0).unwrap());
        assert_eq!(b.cumulative(2), 3 + 729);
    }

    #[test]
    fn unit_vectors_found_by_exhaustive_scan() {
        let e = DenseSetEnumeration::new(IndexKind::Unilateral);
        let limit = e.cumulative(3) as u64;
        for j in 1..=3 {
            let target = SparseVector::unit(IndexKind::Unilateral, j).unwrap();
            let first = (1..=limit).find(|&m| e.vector(m) == target).expect("present");
            assert_eq!(Some(first), e.position_of(&target));
        }
    }

    #[test]
    fn bilateral_unit_vectors_are_reachable() {
        let e = DenseSetEnumeration::new(IndexKind::Bilateral);
        for j in -3..=3 {
            let target = SparseVector::unit(IndexKind::Bilateral, j).unwrap();
            let m = e.position_of(&target).expect("reachable");
            assert_eq!(e.vector(m), target);
            assert_eq!(e.stage_of(m) as i64, j.abs() + 1);
        }
    }

    #[test]
    fn position_rejects_non_dyadic() {
        let e = DenseSetEnumeration::new(IndexKind::Unilateral);
        let v = SparseVector::from_entries(IndexKind::Unilateral, [(1, 1.0 / 3.0)]).unwrap();
        assert_eq!(e.position_of(&v), None);
    }

    #[test]
    fn pool_prefix() {
        let pool = ScalarPool;
        assert_eq!(pool.value(1), 0.0);
        assert_eq!(pool.value(2), 1.0);
        assert_eq!(pool.value(3), -1.0);
        assert_eq!(pool.value(4), 0.0);
        assert_eq!(pool.value(5), 0.5);
        assert_eq!(pool.indices_of(0.0, 40), vec![1, 4, 13, 38]);
        assert_eq!(pool.stage_of(12), 2);
    }

    #[test]
    fn stage_bound_is_logarithmic() {
        let e = DenseSetEnumeration::new(IndexKind::Unilateral);
        for m in [1u64, 2, 3, 4, 80, 85, 10_000, 1 << 40, u64::MAX] {
            let s = e.stage_of(m) as f64;
            assert!(s <= 1.0 + (m as f64).ln() / 3f64.ln() + 1e-9, "m={m}");
        }
    }
}
