//! Closed-form tail majorants and certified tail sums.
//!
//! The schedule of the construction needs a bound on
//! `F(Σ_{k>K} T^k x_{m_k})` and `F(Σ_{k>K} S_k x_{m_k})` that holds for
//! *every* assignment with `m_k <= cap(k)`. By subadditivity of `F` it is
//! enough to bound `Σ_{k>K} max_{m <= cap(k)} F(term(m, k))`, which is what
//! [`TailMajorant::tail_sum`] computes:
//!
//! * the first [`EXPLICIT_TERMS`] steps are summed term by term, using the
//!   exact per-vector bound while `cap(k)` is small;
//! * after that the dense set is handled stage by stage: on the range of `k`
//!   where `cap(k)` stays inside stage `s`, every term is dominated by the
//!   stage envelope, whose infinite tail has a closed form (geometric,
//!   polynomial or eventually zero);
//! * beyond `k = 2^62` a polylogarithmic stage bound closes the sum.
//!
//! For unbounded caps the stage bound requires `cap(k) <= 4 sqrt(k)`, which
//! every schedule with strictly growing gaps satisfies.

use crate::dense::{DenseSetEnumeration, ScalarPool};
use crate::error::{Error, Result};
use crate::shift::{WeightRule, WeightedShift};
use crate::space::{IndexKind, SpaceKind, SparseVector};

pub const EXPLICIT_TERMS: u64 = 256;
/// Caps up to this index are maximised vector by vector.
pub const EXACT_CAP: u64 = 64;
const K_BIG: u64 = 1 << 62;
/// `stage(cap(k)) <= STAGE_A + STAGE_B ln k` when `cap(k) <= 4 sqrt(k)`.
const STAGE_A: f64 = 2.2619;
const STAGE_B: f64 = 0.4552;
/// Stand-in for contributions that underflow double precision.
const NEGLIGIBLE: f64 = 1e-300;

/// Which series of the construction a majorant controls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Series {
    /// `Σ T^k x_{m_k}`
    Orbit,
    /// `Σ S_k x_{m_k}`
    RightInverse,
    /// `Σ α_k e_k / b_k` over the scalar pool (unilateral model).
    Basis,
}

/// Admissible symbol range as a function of the step `k`.
pub trait SymbolCap {
    /// Largest admissible symbol at step `k`; nondecreasing in `k`.
    fn cap(&self, k: u64) -> u64;
    /// `Some(c)` when `cap(k) <= c` for all `k`.
    fn bounded_by(&self) -> Option<u64>;
}

#[derive(Debug, Clone, Copy)]
pub struct ConstantCap(pub u64);

impl SymbolCap for ConstantCap {
    fn cap(&self, _k: u64) -> u64 {
        self.0
    }

    fn bounded_by(&self) -> Option<u64> {
        Some(self.0)
    }
}

/// Majorant of a stage envelope on `k >= from`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StageDecay {
    /// Envelope vanishes for `k >= from`.
    Zero { from: u64 },
    /// `coef * ratio^k` with `ratio < 1`.
    Geometric { coef: f64, ratio: f64, from: u64 },
    /// `coef * (1 + k - shift)^{-exponent}` with `exponent > 1`, `from >= shift`.
    Power {
        coef: f64,
        exponent: f64,
        shift: u64,
        from: u64,
    },
    Divergent,
}

#[derive(Debug, Clone)]
enum Family {
    Dense(DenseSetEnumeration),
    Pool(ScalarPool),
}

/// Majorants `bound(m, k) >= F(term(m, k))` for one series of one operator.
#[derive(Debug, Clone)]
pub struct TailMajorant {
    shift: WeightedShift,
    series: Series,
    family: Family,
    cache: Vec<SparseVector<f64>>,
    gamma: f64,
}

impl TailMajorant {
    pub fn new(shift: &WeightedShift, series: Series) -> Result<Self> {
        let family = match series {
            Series::Basis => {
                if shift.side() != IndexKind::Unilateral {
                    return Err(Error::ModeMismatch(
                        "the basis series is defined for unilateral shifts".into(),
                    ));
                }
                Family::Pool(ScalarPool)
            }
            _ => Family::Dense(DenseSetEnumeration::new(shift.side())),
        };
        let cache = match &family {
            Family::Dense(e) => (1..=EXACT_CAP).map(|m| e.vector(m)).collect(),
            Family::Pool(_) => Vec::new(),
        };
        Ok(TailMajorant {
            gamma: table_spread(shift),
            shift: shift.clone(),
            series,
            family,
            cache,
        })
    }

    pub fn series(&self) -> Series {
        self.series
    }

    pub fn shift(&self) -> &WeightedShift {
        &self.shift
    }

    pub fn stage_of(&self, m: u64) -> u32 {
        match &self.family {
            Family::Dense(e) => e.stage_of(m),
            Family::Pool(p) => p.stage_of(m),
        }
    }

    /// Number of symbols in stages `1..=stage`.
    pub fn cumulative(&self, stage: u32) -> u128 {
        match &self.family {
            Family::Dense(e) => e.cumulative(stage),
            Family::Pool(p) => p.cumulative(stage),
        }
    }

    fn dense_vector(&self, m: u64) -> std::borrow::Cow<'_, SparseVector<f64>> {
        match &self.family {
            Family::Dense(e) => match self.cache.get(m as usize - 1) {
                Some(v) => std::borrow::Cow::Borrowed(v),
                None => std::borrow::Cow::Owned(e.vector(m)),
            },
            Family::Pool(_) => unreachable!("pool majorants carry no vectors"),
        }
    }

    /// `|coefficient|` picked up by `e_j` at step `k`, with its destination.
    fn unit_factor(&self, j: i64, k: u64) -> Option<(i64, f64)> {
        let k = k as i64;
        match self.series {
            Series::Orbit => {
                let dest = j - k;
                self.shift
                    .side()
                    .admits(dest)
                    .then(|| (dest, self.shift.beta_ratio(dest, j).abs()))
            }
            Series::RightInverse => Some((j + k, 1.0 / self.shift.beta_ratio(j, j + k).abs())),
            // e_k / b_k with b_k = β(k)/β(1)
            Series::Basis => Some((k, 1.0 / self.shift.beta_ratio(1, k).abs())),
        }
    }

    /// Upper bound on `F(term(m, k))`.
    pub fn bound(&self, m: u64, k: u64) -> f64 {
        let space = self.shift.space();
        match &self.family {
            Family::Dense(_) => self
                .dense_vector(m)
                .iter()
                .filter_map(|(j, c)| {
                    self.unit_factor(j, k)
                        .map(|(dest, f)| space.unit_norm(dest, c.abs() * f))
                })
                .sum(),
            Family::Pool(p) => {
                let z = p.value(m).abs();
                if z == 0.0 {
                    return 0.0;
                }
                let (dest, f) = self.unit_factor(0, k).expect("basis factor");
                space.unit_norm(dest, z * f)
            }
        }
    }

    /// `max_{m in stages <= s} bound(m, k)`.
    pub fn envelope(&self, stage: u32, k: u64) -> f64 {
        let space = self.shift.space();
        match &self.family {
            Family::Dense(e) => {
                let amp = e.amplitude(stage);
                e.window(stage)
                    .filter_map(|j| self.unit_factor(j, k).map(|(d, f)| space.unit_norm(d, amp * f)))
                    .sum()
            }
            Family::Pool(p) => {
                let (dest, f) = self.unit_factor(0, k).expect("basis factor");
                space.unit_norm(dest, p.amplitude(stage) * f)
            }
        }
    }

    fn max_bound(&self, cap: u64, k: u64) -> f64 {
        if cap <= EXACT_CAP {
            (1..=cap).map(|m| self.bound(m, k)).fold(0.0, f64::max)
        } else {
            self.envelope(self.stage_of(cap), k)
        }
    }

    fn window_len(&self, stage: u32) -> f64 {
        match &self.family {
            Family::Dense(e) => e.window_len(stage) as f64,
            Family::Pool(_) => 1.0,
        }
    }

    pub fn stage_decay(&self, stage: u32) -> StageDecay {
        let s = stage as f64;
        let space = self.shift.space();
        let bilateral = self.shift.side() == IndexKind::Bilateral;
        if self.series == Series::Orbit && !bilateral {
            // T^k kills everything supported in {1..s} once k >= s.
            return StageDecay::Zero { from: stage as u64 };
        }
        let q = match space.kind {
            SpaceKind::Omega => {
                // F(t e_i) <= 2^{-i}; destinations are j + k >= k + 1 (or k).
                return StageDecay::Geometric {
                    coef: 1.0,
                    ratio: 0.5,
                    from: 0,
                };
            }
            SpaceKind::Lp { .. } => space.homogeneity().expect("lp homogeneity"),
        };
        let width = self.window_len(stage);
        match self.shift.rule() {
            WeightRule::Constant { lambda } | WeightRule::Table { lambda, .. } => {
                let lam = lambda.abs();
                let ratio = match self.series {
                    Series::Orbit => lam.powf(q),
                    _ => lam.powf(-q),
                };
                if ratio >= 1.0 {
                    return StageDecay::Divergent;
                }
                let mut coef = width * (s * self.gamma).powf(q);
                if self.series == Series::Basis {
                    coef *= lam.powf(q);
                }
                StageDecay::Geometric { coef, ratio, from: 0 }
            }
            WeightRule::Power { a } => {
                let exponent = a * q;
                if exponent <= 1.0 {
                    return StageDecay::Divergent;
                }
                match self.series {
                    Series::Basis => StageDecay::Power {
                        coef: s.powf(q) * 2f64.powf(exponent),
                        exponent,
                        shift: 0,
                        from: 1,
                    },
                    _ => StageDecay::Power {
                        coef: width * s.powf(q) * (1.0 + s).powf(exponent),
                        exponent,
                        shift: stage as u64,
                        from: stage as u64,
                    },
                }
            }
        }
    }

    /// `Σ_{k >= from} envelope(stage, k)`, bounded in closed form.
    pub fn stage_tail(&self, stage: u32, from: u64) -> Result<f64> {
        let explicit = |lo: u64, hi: u64| -> f64 { (lo..hi).map(|k| self.envelope(stage, k)).sum() };
        match self.stage_decay(stage) {
            StageDecay::Zero { from: z } => Ok(explicit(from, z.max(from))),
            StageDecay::Geometric { coef, ratio, from: g } => {
                let k0 = from.max(g);
                Ok(explicit(from, k0) + coef * ratio.powf(k0 as f64) / (1.0 - ratio))
            }
            StageDecay::Power {
                coef,
                exponent,
                shift,
                from: p,
            } => {
                let k0 = from.max(p);
                let base = (1 + k0 - shift) as f64;
                let closed = coef * (base.powf(-exponent) + base.powf(1.0 - exponent) / (exponent - 1.0));
                Ok(explicit(from, k0) + closed)
            }
            StageDecay::Divergent => Err(self.divergence()),
        }
    }

    fn divergence(&self) -> Error {
        Error::NoCertificate(format!(
            "{:?} series of {:?} on {:?} has no summable majorant",
            self.series,
            self.shift.rule(),
            self.shift.space().kind
        ))
    }

    /// Closed form for `k > K_BIG` under the polylogarithmic stage bound.
    fn universal_remainder(&self) -> Result<f64> {
        // Probe a large stage to classify the decay.
        match self.stage_decay(8) {
            StageDecay::Zero { .. } | StageDecay::Geometric { .. } => Ok(NEGLIGIBLE),
            StageDecay::Divergent => Err(self.divergence()),
            StageDecay::Power { exponent: c, .. } => {
                let q = self.shift.space().homogeneity().unwrap_or(1.0);
                // envelope(s, k) <= coef (1+s)^e (1+k)^{-c} for k >= 2s - 1
                let (coef, e) = match self.series {
                    Series::Basis => (2f64.powf(c), q),
                    _ => (2f64.powf(1.0 + c), 1.0 + q + c),
                };
                let big = K_BIG as f64;
                let poly = STAGE_A + 1.0 + STAGE_B * big.ln();
                let eta = STAGE_B * e / poly;
                if c - 1.0 - eta <= 0.0 {
                    return Err(self.divergence());
                }
                Ok(coef * poly.powf(e) * big.powf(1.0 - c) / (c - 1.0 - eta) + NEGLIGIBLE)
            }
        }
    }

    /// Certified bound on `F(Σ_{k > after} term(m_k, k))` over all
    /// assignments with `m_k <= cap(k)`.
    pub fn tail_sum(&self, cap: &dyn SymbolCap, after: u64) -> Result<f64> {
        if let Some(c) = cap.bounded_by() {
            if self.prefix_is_zero(c) {
                return Ok(0.0);
            }
        }
        let explicit_end = after + EXPLICIT_TERMS;
        let mut total: f64 = (after + 1..=explicit_end)
            .map(|k| self.max_bound(cap.cap(k), k))
            .sum();

        let mut k = explicit_end + 1;
        if let Some(c) = cap.bounded_by() {
            total += self.stage_tail(self.stage_of(c.max(1)), k)?;
            return Ok(total * (1.0 + 1e-12));
        }
        loop {
            let stage = self.stage_of(cap.cap(k).max(1));
            total += self.stage_tail(stage, k)?;
            // first step where the cap leaves this stage
            let cum = self.cumulative(stage);
            if cap.cap(K_BIG) as u128 <= cum {
                total += self.universal_remainder()?;
                break;
            }
            let (mut lo, mut hi) = (k, K_BIG);
            while hi - lo > 1 {
                let mid = lo + (hi - lo) / 2;
                if cap.cap(mid) as u128 > cum {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            k = hi;
        }
        Ok(total * (1.0 + 1e-12))
    }

    fn prefix_is_zero(&self, c: u64) -> bool {
        match &self.family {
            Family::Dense(_) => c <= EXACT_CAP && (1..=c).all(|m| self.dense_vector(m).is_zero()),
            Family::Pool(p) => (1..=c.min(EXACT_CAP)).all(|n| p.value(n) == 0.0) && c <= EXACT_CAP,
        }
    }
}

/// `Γ = max γ / min γ` with `γ(j) = |β(j)| |λ|^{-j}`, so that
/// `|β(j)/β(j+k)| <= Γ |λ|^{-k}` and `|β(j)/β(j-k)| <= Γ |λ|^{k}`.
fn table_spread(shift: &WeightedShift) -> f64 {
    match shift.rule() {
        WeightRule::Table {
            start,
            weights,
            lambda,
        } => {
            let lam = lambda.abs();
            let anchor = shift.anchor();
            let lo = (*start).min(anchor) - 1;
            let hi = (*start + weights.len() as i64).max(anchor) + 1;
            let gammas: Vec<f64> = (lo..=hi)
                .map(|j| shift.beta_ratio(lo, j).abs() * lam.powf(-((j - lo) as f64)))
                .collect();
            let max = gammas.iter().cloned().fold(f64::MIN, f64::max);
            let min = gammas.iter().cloned().fold(f64::MAX, f64::min);
            max / min
        }
        _ => 1.0,
    }
}

/// Outcome of the chaos criterion.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ChaosWitness {
    pub chaotic: bool,
    /// A divergence argument exists (terms of the series are not summable).
    pub divergence_proven: bool,
    pub cutoff: u64,
    pub partial_sum: f64,
    pub tail_bound: Option<f64>,
    pub note: String,
}

/// Sufficient test for Devaney chaos: `Σ_n e_n` converges unconditionally
/// after conjugating `B_w` to the unweighted shift, i.e. the series
/// `Σ_k S_k e_anchor` (and `Σ_k T^k e_anchor` bilaterally) is summable in `F`.
pub fn chaos_check(shift: &WeightedShift, tolerance: f64) -> ChaosWitness {
    // x_2 = e_anchor in the dense-set enumeration.
    let cap = ConstantCap(2);
    let mut sides = vec![Series::RightInverse];
    if shift.side() == IndexKind::Bilateral {
        sides.push(Series::Orbit);
    }
    let majorants: Vec<TailMajorant> = sides
        .iter()
        .map(|&s| TailMajorant::new(shift, s).expect("dense majorant"))
        .collect();
    let mut cutoff = 1u64;
    loop {
        let tails: Result<Vec<f64>> = majorants.iter().map(|m| m.tail_sum(&cap, cutoff)).collect();
        let partial: f64 = majorants
            .iter()
            .map(|m| (1..=cutoff.min(1 << 16)).map(|k| m.bound(2, k)).sum::<f64>())
            .sum();
        match tails {
            Err(e) => {
                return ChaosWitness {
                    chaotic: false,
                    divergence_proven: true,
                    cutoff,
                    partial_sum: partial,
                    tail_bound: None,
                    note: e.to_string(),
                }
            }
            Ok(t) => {
                let tail: f64 = t.iter().sum();
                if tail < tolerance {
                    return ChaosWitness {
                        chaotic: true,
                        divergence_proven: false,
                        cutoff,
                        partial_sum: partial,
                        tail_bound: Some(tail),
                        note: "certified summable tail".into(),
                    };
                }
                if cutoff >= 1 << 32 {
                    return ChaosWitness {
                        chaotic: false,
                        divergence_proven: false,
                        cutoff,
                        partial_sum: partial,
                        tail_bound: Some(tail),
                        note: "tail bound did not reach the tolerance".into(),
                    };
                }
                cutoff *= 2;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::FSpace;

    fn l2_shift(side: IndexKind, rule: WeightRule) -> WeightedShift {
        WeightedShift::new(side, rule, FSpace::lp(2.0).unwrap()).unwrap()
    }

    #[test]
    fn zero_prefix_gives_zero_tail() {
        let t = l2_shift(IndexKind::Unilateral, WeightRule::Constant { lambda: 2.0 });
        for series in [Series::Orbit, Series::RightInverse] {
            let m = TailMajorant::new(&t, series).unwrap();
            assert_eq!(m.tail_sum(&ConstantCap(1), 0).unwrap(), 0.0);
        }
    }

    #[test]
    fn orbit_tail_vanishes_past_support() {
        let t = l2_shift(IndexKind::Unilateral, WeightRule::Constant { lambda: 2.0 });
        let m = TailMajorant::new(&t, Series::Orbit).unwrap();
        // x_1 .. x_84 live in stages 1 and 2 (support in {1, 2}).
        assert_eq!(m.tail_sum(&ConstantCap(84), 5).unwrap(), 0.0);
        assert!(m.tail_sum(&ConstantCap(84), 0).unwrap() > 0.0);
    }

    #[test]
    fn geometric_tail_matches_direct_sum() {
        let t = l2_shift(IndexKind::Unilateral, WeightRule::Constant { lambda: 2.0 });
        let m = TailMajorant::new(&t, Series::RightInverse).unwrap();
        for k_after in [0u64, 3, 10, 40] {
            let exact = (-(k_after as f64)).exp2();
            let direct: f64 = (k_after + 1..k_after + 200).map(|k| (-(k as f64)).exp2()).sum();
            let got = m.tail_sum(&ConstantCap(2), k_after).unwrap();
            assert!(got >= direct);
            assert!(got <= exact * (1.0 + 1e-9), "{got} vs {exact}");
        }
    }

    #[test]
    fn majorant_dominates_true_norms() {
        let rules = [
            (IndexKind::Unilateral, WeightRule::Constant { lambda: 1.5 }),
            (IndexKind::Bilateral, WeightRule::Power { a: 3.0 }),
            (
                IndexKind::Unilateral,
                WeightRule::Table {
                    start: 2,
                    weights: vec![0.5, 4.0, 1.25],
                    lambda: 2.0,
                },
            ),
        ];
        for (side, rule) in rules {
            for space in [FSpace::lp(2.0).unwrap(), FSpace::lp(0.5).unwrap()] {
                let t = WeightedShift::new(side, rule.clone(), space).unwrap();
                let e = DenseSetEnumeration::new(side);
                for series in [Series::Orbit, Series::RightInverse] {
                    let maj = TailMajorant::new(&t, series).unwrap();
                    for m in [2u64, 5, 17, 40, 90, 300] {
                        let x = e.vector(m);
                        for k in [1u64, 2, 3, 7, 20] {
                            let img = match series {
                                Series::Orbit => t.backward_power_f64(k, &x),
                                _ => t.right_inverse_f64(k, &x),
                            };
                            let f = space.f_norm(&img);
                            assert!(maj.bound(m, k) >= f * (1.0 - 1e-12));
                            let s = maj.stage_of(m);
                            assert!(maj.envelope(s, k) >= maj.bound(m, k) * (1.0 - 1e-12));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn stage_tail_dominates_partial_sums() {
        let t = l2_shift(IndexKind::Bilateral, WeightRule::Power { a: 3.0 });
        for series in [Series::Orbit, Series::RightInverse] {
            let maj = TailMajorant::new(&t, series).unwrap();
            for stage in 1..=4 {
                for from in [1u64, 5, 50] {
                    let partial: f64 = (from..from + 20_000).map(|k| maj.envelope(stage, k)).sum();
                    assert!(maj.stage_tail(stage, from).unwrap() >= partial);
                }
            }
        }
    }

    #[test]
    fn tail_sum_is_monotone() {
        let t = l2_shift(IndexKind::Bilateral, WeightRule::Power { a: 3.0 });
        let maj = TailMajorant::new(&t, Series::RightInverse).unwrap();
        let mut prev = f64::INFINITY;
        for k in [0u64, 10, 100, 1000, 10_000] {
            let v = maj.tail_sum(&ConstantCap(40), k).unwrap();
            assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn chaos_examples() {
        let doubling = l2_shift(IndexKind::Unilateral, WeightRule::Constant { lambda: 2.0 });
        let w = chaos_check(&doubling, 1e-6);
        assert!(w.chaotic);
        // Σ_{k>K} 2^{-k} = 2^{-K} < 1e-6 first at K = 32 on the doubling grid.
        assert_eq!(w.cutoff, 32);

        let unit = l2_shift(IndexKind::Unilateral, WeightRule::Constant { lambda: 1.0 });
        let w = chaos_check(&unit, 1e-6);
        assert!(!w.chaotic && w.divergence_proven);

        let sqrt = l2_shift(IndexKind::Unilateral, WeightRule::Power { a: 0.5 });
        assert!(!chaos_check(&sqrt, 1e-6).chaotic);

        let bilateral_const = l2_shift(IndexKind::Bilateral, WeightRule::Constant { lambda: 2.0 });
        assert!(!chaos_check(&bilateral_const, 1e-6).chaotic);

        let bilateral_power = l2_shift(IndexKind::Bilateral, WeightRule::Power { a: 3.0 });
        assert!(chaos_check(&bilateral_power, 1e-3).chaotic);
    }

    #[test]
    fn every_shift_on_omega_is_chaotic() {
        for rule in [
            WeightRule::Constant { lambda: 1.0 },
            WeightRule::Constant { lambda: 0.01 },
            WeightRule::Power { a: -4.0 },
        ] {
            let t = WeightedShift::new(IndexKind::Unilateral, rule, FSpace::omega()).unwrap();
            assert!(chaos_check(&t, 1e-9).chaotic);
        }
    }
}
