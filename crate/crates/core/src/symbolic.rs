//! Symbol sequences, product measures on them and the constraint profile.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::majorant::SymbolCap;
use crate::space::IndexKind;

/// Upper limit of the inverse-CDF search.
const MAX_SYMBOL: u32 = 4096;

/// Schedule `N_1 < N_2 < ...` with strictly growing gaps, where `N_0 = 0`
/// and `g_j = N_{j+1} - N_j`. Beyond the stored depth the schedule
/// continues with the smallest admissible gaps `g_last + 1, g_last + 2, ...`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConstraintProfile {
    pub side: IndexKind,
    pub schedule: Vec<u64>,
}

impl ConstraintProfile {
    pub fn new(side: IndexKind, schedule: Vec<u64>) -> Result<Self> {
        if schedule.is_empty() {
            return Err(Error::Config("schedule must be nonempty".into()));
        }
        let mut prev_n = 0u64;
        let mut prev_gap = 0u64;
        for &n in &schedule {
            let gap = n.saturating_sub(prev_n);
            if gap <= prev_gap {
                return Err(Error::Config(format!(
                    "schedule {schedule:?} violates strict gap growth at N = {n}"
                )));
            }
            prev_n = n;
            prev_gap = gap;
        }
        Ok(ConstraintProfile { side, schedule })
    }

    pub fn depth(&self) -> usize {
        self.schedule.len()
    }

    fn last_gap(&self) -> u64 {
        let d = self.schedule.len();
        self.schedule[d - 1] - if d >= 2 { self.schedule[d - 2] } else { 0 }
    }

    /// `N_l`, with `N_0 = 0` and the minimal continuation past the depth.
    pub fn n(&self, l: u64) -> u128 {
        if l == 0 {
            return 0;
        }
        let d = self.schedule.len() as u64;
        if l <= d {
            return self.schedule[l as usize - 1] as u128;
        }
        let i = (l - d) as u128;
        self.schedule[d as usize - 1] as u128 + i * self.last_gap() as u128 + i * (i + 1) / 2
    }

    /// `g_j = N_{j+1} - N_j`.
    pub fn gap(&self, j: u64) -> u128 {
        self.n(j + 1) - self.n(j)
    }

    /// The `l` with `N_l < |k| <= N_{l+1}` (`0` for `|k| <= N_1`).
    pub fn level(&self, k: i64) -> u64 {
        let a = k.unsigned_abs() as u128;
        if a <= self.n(1) {
            return 0;
        }
        // largest l with N_l < a
        let (mut lo, mut hi) = (1u64, 2u64);
        while self.n(hi) < a {
            lo = hi;
            hi *= 2;
        }
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if self.n(mid) < a {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    /// Largest symbol in the admissible set `F_k = {1, ..., m}`.
    pub fn max_symbol(&self, k: i64) -> u64 {
        self.level(k).max(1)
    }

    /// Whether every in-window symbol `seq(k)` lies in `F_{k + s}`.
    pub fn admits(&self, seq: &SymbolSequence, s: i64) -> bool {
        seq.window()
            .all(|k| seq.get(k).is_none_or(|v| v as u64 <= self.max_symbol(k + s)))
    }
}

/// Symbol caps `m_k <= 2l` on `(N_l, N_{l+1}]`.
#[derive(Debug, Clone, Copy)]
pub struct ScheduleCap<'a>(pub &'a ConstraintProfile);

impl SymbolCap for ScheduleCap<'_> {
    fn cap(&self, k: u64) -> u64 {
        2 * self.0.level(k.min(i64::MAX as u64) as i64)
    }

    fn bounded_by(&self) -> Option<u64> {
        None
    }
}

/// How the probabilities beyond the explicit head are generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum TailRule {
    /// The head carries all the mass.
    None,
    /// `p_{h+i} = R (1 - r) r^{i-1}` where `R` is the residual mass.
    Geometric { ratio: f64 },
    /// Cumulative `c_j = 1 - θ 2^{-j} / g_j` for the gaps of a schedule.
    Schedule { theta: f64, profile: ConstraintProfile },
}

/// Symbol distribution `(p_n)_{n >= 1}` with cumulative `c_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolWeights {
    pub head: Vec<f64>,
    pub tail: TailRule,
}

impl SymbolWeights {
    pub fn explicit(head: Vec<f64>, tail: TailRule) -> Result<Self> {
        let mass: f64 = head.iter().sum();
        if head.iter().any(|&p| p.is_nan() || p <= 0.0) || mass > 1.0 + 1e-12 {
            return Err(Error::Config(format!("invalid symbol probabilities {head:?}")));
        }
        match &tail {
            TailRule::None if (mass - 1.0).abs() > 1e-12 => {
                return Err(Error::Config(format!("head mass {mass} is not 1")))
            }
            TailRule::Geometric { ratio } if !(*ratio > 0.0 && *ratio < 1.0) => {
                return Err(Error::Config(format!("geometric ratio {ratio} not in (0,1)")))
            }
            TailRule::Schedule { .. } => {
                return Err(Error::Config("schedule weights carry no explicit head".into()))
            }
            _ => {}
        }
        Ok(SymbolWeights { head, tail })
    }

    pub fn from_schedule(profile: &ConstraintProfile, theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::Config(format!("theta {theta} not in (0,1)")));
        }
        Ok(SymbolWeights {
            head: Vec::new(),
            tail: TailRule::Schedule {
                theta,
                profile: profile.clone(),
            },
        })
    }

    fn residual(&self) -> f64 {
        (1.0 - self.head.iter().sum::<f64>()).max(0.0)
    }

    /// `p_n`.
    pub fn p(&self, n: u64) -> f64 {
        assert!(n >= 1, "symbols start at 1");
        let h = self.head.len() as u64;
        if n <= h {
            return self.head[n as usize - 1];
        }
        match &self.tail {
            TailRule::None => 0.0,
            TailRule::Geometric { ratio } => {
                self.residual() * (1.0 - ratio) * ratio.powi((n - h - 1) as i32)
            }
            TailRule::Schedule { theta, profile } => {
                let t = |j: u64| (-(j as f64)).exp2() / profile.gap(j) as f64;
                if n == 1 {
                    1.0 - theta * t(1)
                } else {
                    theta * (t(n - 1) - t(n))
                }
            }
        }
    }

    /// `1 - c_n = Σ_{i > n} p_i`, computed without cancellation.
    pub fn tail_mass(&self, n: u64) -> f64 {
        let h = self.head.len() as u64;
        if n < h {
            return self.head[n as usize..].iter().sum::<f64>() + self.residual_for_tail();
        }
        match &self.tail {
            TailRule::None => 0.0,
            TailRule::Geometric { ratio } => self.residual() * ratio.powi((n - h) as i32),
            TailRule::Schedule { theta, profile } => {
                if n == 0 {
                    1.0
                } else if n > 1100 {
                    // below the smallest subnormal
                    0.0
                } else {
                    theta * (-(n as f64)).exp2() / profile.gap(n) as f64
                }
            }
        }
    }

    fn residual_for_tail(&self) -> f64 {
        match self.tail {
            TailRule::None => 0.0,
            _ => self.residual(),
        }
    }

    /// `c_n`.
    pub fn cumulative(&self, n: u64) -> f64 {
        1.0 - self.tail_mass(n)
    }

    /// Inverse-CDF draw.
    pub fn sample(&self, rng: &mut impl Rng) -> u32 {
        // u in (0, 1]; the symbol is the smallest n with 1 - c_n < u.
        let u = 1.0 - rng.gen::<f64>();
        self.invert_from(1, u)
    }

    fn invert_from(&self, first: u32, u: f64) -> u32 {
        let mut n = first;
        while n < MAX_SYMBOL && self.tail_mass(n as u64) >= u {
            n += 1;
        }
        n
    }

    /// Draw conditioned on the symbol being at least 2; `tails[i]` caches
    /// `tail_mass(i + 1)`.
    fn sample_beyond_one(&self, tails: &[f64], rng: &mut impl Rng) -> u32 {
        let u = tails[0] * (1.0 - rng.gen::<f64>());
        match tails[1..].iter().position(|&t| t < u) {
            Some(i) => i as u32 + 2,
            None => self.invert_from(tails.len() as u32 + 1, u),
        }
    }

    /// `μ̄_k(set)`.
    pub fn mass(&self, set: &SymbolSet) -> f64 {
        match set {
            SymbolSet::Finite(s) => s.iter().map(|&n| self.p(n as u64)).sum(),
            SymbolSet::Cofinite(excluded) => {
                let out: f64 = excluded.iter().map(|&n| self.p(n as u64)).sum();
                (1.0 - out).max(0.0)
            }
        }
    }

    /// Lower bound on `μ̄(K)` from the first `depth` factors `β_l = c_l^{g_l}`
    /// and a certified bound on the rest.
    pub fn k_measure_lower_bound(&self, profile: &ConstraintProfile, depth: u64) -> Result<KMeasureBound> {
        let beta = |l: u64| -> f64 {
            let g = profile.gap(l) as f64;
            (g * (-self.tail_mass(l)).ln_1p()).exp()
        };
        let head_product: f64 = (1..=depth).map(beta).product();
        // 1 - β_l <= g_l (1 - c_l), and Π(1 - a_l) >= 1 - Σ a_l.
        let tail_factor = match &self.tail {
            TailRule::Schedule { theta, profile: own } if own == profile => {
                (1.0 - theta * (-(depth as f64)).exp2()).max(0.0)
            }
            TailRule::None if (self.head.len() as u64) <= depth => 1.0,
            _ => {
                return Err(Error::Config(
                    "symbol weights have no closed-form tail for this profile".into(),
                ))
            }
        };
        let n1 = profile.n(1) as i32;
        let (exp, power) = match profile.side {
            IndexKind::Bilateral => (2 * n1 + 1, 2),
            IndexKind::Unilateral => (n1, 1),
        };
        let p1 = self.p(1).powi(exp);
        Ok(KMeasureBound {
            head: p1 * head_product.powi(power),
            tail_factor,
            lower_bound: p1 * (head_product * tail_factor).powi(power),
        })
    }

    /// `β_l = c_l^{g_l}`.
    pub fn beta(&self, profile: &ConstraintProfile, l: u64) -> f64 {
        self.cumulative(l).powf(profile.gap(l) as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KMeasureBound {
    /// `p_1^e (Π_{l <= L} β_l)^{1 or 2}`.
    pub head: f64,
    /// Certified lower bound on `Π_{l > L} β_l`.
    pub tail_factor: f64,
    pub lower_bound: f64,
}

/// Finite window of a two-sided (or one-sided) symbol sequence.
///
/// Symbols other than 1 are stored sparsely by raw position; coordinate `k`
/// sits at raw position `k + offset`, so shifting only moves `offset`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SymbolSequence {
    offset: i64,
    start: i64,
    len: usize,
    /// Sorted `(raw position, symbol)` for symbols `>= 2`.
    marks: Vec<(i64, u32)>,
}

impl SymbolSequence {
    /// Sequence with `seq(first + i) = symbols[i]`.
    pub fn new(first: i64, symbols: Vec<u32>) -> Result<Self> {
        if symbols.contains(&0) {
            return Err(Error::Config("symbols start at 1".into()));
        }
        Ok(Self::from_dense(first, &symbols))
    }

    fn from_dense(first: i64, symbols: &[u32]) -> Self {
        SymbolSequence {
            offset: 0,
            start: first,
            len: symbols.len(),
            marks: symbols
                .iter()
                .enumerate()
                .filter(|(_, &s)| s != 1)
                .map(|(i, &s)| (first + i as i64, s))
                .collect(),
        }
    }

    pub fn constant(window: std::ops::RangeInclusive<i64>, symbol: u32) -> Self {
        let len = (window.end() - window.start() + 1).max(0) as usize;
        Self::from_dense(*window.start(), &vec![symbol.max(1); len])
    }

    pub fn offset(&self) -> i64 {
        self.offset
    }

    pub fn first(&self) -> i64 {
        self.start - self.offset
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn window(&self) -> std::ops::Range<i64> {
        self.first()..self.first() + self.len as i64
    }

    pub fn covers(&self, lo: i64, hi: i64) -> bool {
        let w = self.window();
        lo >= w.start && hi < w.end
    }

    pub fn get(&self, k: i64) -> Option<u32> {
        if !self.window().contains(&k) {
            return None;
        }
        let raw = k + self.offset;
        Some(match self.marks.binary_search_by_key(&raw, |m| m.0) {
            Ok(i) => self.marks[i].1,
            Err(_) => 1,
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, u32)> + '_ {
        self.window().map(move |k| (k, self.get(k).unwrap_or(1)))
    }

    /// In-window coordinates whose symbol is not 1, in increasing order.
    pub fn nontrivial(&self) -> impl Iterator<Item = (i64, u32)> + '_ {
        self.marks.iter().map(move |&(raw, s)| (raw - self.offset, s))
    }

    pub fn describe_window(&self) -> String {
        let w = self.window();
        if w.is_empty() {
            "nothing".into()
        } else {
            format!("[{}, {}]", w.start, w.end - 1)
        }
    }
}

/// I.i.d. draw of `seq(k)` for `k` in `window`.
pub fn sample_symbols(
    weights: &SymbolWeights,
    window: std::ops::RangeInclusive<i64>,
    rng: &mut impl Rng,
) -> SymbolSequence {
    let first = *window.start();
    let len = (window.end() - first + 1).max(0) as usize;
    let p1 = weights.p(1);
    if p1 < 0.5 {
        let dense: Vec<u32> = (0..len).map(|_| weights.sample(rng)).collect();
        return SymbolSequence::from_dense(first, &dense);
    }
    // runs of the dominant symbol 1 are geometric
    let mut marks = Vec::new();
    let tails: Vec<f64> = (1..=48).map(|n| weights.tail_mass(n)).collect();
    let log_p1 = p1.ln();
    let mut i = 0usize;
    loop {
        let u = 1.0 - rng.gen::<f64>();
        let run = if log_p1 == 0.0 { f64::INFINITY } else { (u.ln() / log_p1).floor() };
        if run >= (len - i) as f64 {
            break;
        }
        i += run as usize;
        marks.push((first + i as i64, weights.sample_beyond_one(&tails, rng)));
        i += 1;
    }
    SymbolSequence {
        offset: 0,
        start: first,
        len,
        marks,
    }
}

/// `σ^t`, with `(σ^t seq)(k) = seq(k + t)`.
pub fn shift_symbols(seq: &SymbolSequence, t: i64) -> SymbolSequence {
    SymbolSequence {
        offset: seq.offset + t,
        ..seq.clone()
    }
}

/// Admissible set of one coordinate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "symbols", rename_all = "snake_case")]
pub enum SymbolSet {
    Finite(BTreeSet<u32>),
    /// Everything except the listed symbols.
    Cofinite(BTreeSet<u32>),
}

impl SymbolSet {
    pub fn finite(symbols: impl IntoIterator<Item = u32>) -> Self {
        SymbolSet::Finite(symbols.into_iter().collect())
    }

    pub fn excluding(symbols: impl IntoIterator<Item = u32>) -> Self {
        SymbolSet::Cofinite(symbols.into_iter().collect())
    }

    pub fn contains(&self, s: u32) -> bool {
        match self {
            SymbolSet::Finite(a) => a.contains(&s),
            SymbolSet::Cofinite(e) => !e.contains(&s),
        }
    }

    pub fn intersect(&self, other: &SymbolSet) -> SymbolSet {
        use SymbolSet::*;
        match (self, other) {
            (Finite(a), Finite(b)) => Finite(a.intersection(b).copied().collect()),
            (Finite(a), Cofinite(e)) | (Cofinite(e), Finite(a)) => Finite(a.difference(e).copied().collect()),
            (Cofinite(a), Cofinite(b)) => Cofinite(a.union(b).copied().collect()),
        }
    }
}

/// Cylinder set `{seq : seq(k) ∈ A_k for each constrained k}`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CylinderEvent {
    constraints: BTreeMap<i64, SymbolSet>,
}

impl CylinderEvent {
    pub fn new(constraints: impl IntoIterator<Item = (i64, SymbolSet)>) -> Self {
        let mut ev = CylinderEvent::default();
        for (k, set) in constraints {
            ev.constrain(k, set);
        }
        ev
    }

    pub fn constrain(&mut self, k: i64, set: SymbolSet) {
        let merged = match self.constraints.get(&k) {
            Some(old) => old.intersect(&set),
            None => set,
        };
        self.constraints.insert(k, merged);
    }

    pub fn constraints(&self) -> impl Iterator<Item = (i64, &SymbolSet)> {
        self.constraints.iter().map(|(&k, s)| (k, s))
    }

    /// Coordinate range touched by the event.
    pub fn span(&self) -> Option<(i64, i64)> {
        Some((*self.constraints.keys().next()?, *self.constraints.keys().next_back()?))
    }

    pub fn contains(&self, seq: &SymbolSequence) -> Result<bool> {
        let mut inside = true;
        for (&k, set) in &self.constraints {
            let s = seq.get(k).ok_or_else(|| Error::WindowTooSmall {
                required: k.abs(),
                covered: seq.describe_window(),
            })?;
            inside &= set.contains(s);
        }
        Ok(inside)
    }

    /// `σ^{-n} E = {seq : σ^n seq ∈ E}`.
    pub fn preimage(&self, n: i64) -> CylinderEvent {
        CylinderEvent {
            constraints: self.constraints.iter().map(|(&k, s)| (k + n, s.clone())).collect(),
        }
    }

    pub fn intersect(&self, other: &CylinderEvent) -> CylinderEvent {
        let mut out = self.clone();
        for (&k, s) in &other.constraints {
            out.constrain(k, s.clone());
        }
        out
    }
}

/// Exact product measure of a cylinder.
pub fn cylinder_measure(weights: &SymbolWeights, event: &CylinderEvent) -> f64 {
    event.constraints.values().map(|s| weights.mass(s)).product()
}
