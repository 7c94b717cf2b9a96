//! The invariant measure: schedule construction, model assembly and the
//! coding map `Φ` with certified truncation.
//!
//! Two constructions are provided.
//!
//! * `Fhc`: two-sided symbol sequences `(n_k)` are mapped to
//!   `Φ(n) = Σ_{k<0} S_{-k} x_{n_k} + x_{n_0} + Σ_{k>0} T^k x_{n_k}`, which
//!   satisfies `T Φ = Φ σ^{-1}`.
//! * `UnilateralExact`: one-sided sequences `(α_k)_{k>=1}` over the scalar
//!   pool are mapped to `Σ_k z_{α_k} e_k / b_k` with `b_k = β(k)/β(1)`,
//!   which satisfies `B_w Φ = Φ σ`.
//!
//! Sampled sequences are i.i.d. and need not respect the constraint profile,
//! so the part of `Φ` beyond the sampled region is controlled in expectation:
//! with `τ(c) >= E Σ_{k>c} F(term_k)`, Markov's inequality gives
//! `P(tail > √τ) <= √τ`. Every evaluation reports both the deterministic
//! bound for the sampled-but-discarded terms plus `√τ`, and the probability
//! `√τ` that the latter fails.

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dense::{DenseSetEnumeration, ScalarPool};
use crate::error::{Error, Result};
use crate::majorant::{chaos_check, ChaosWitness, Series, TailMajorant};
use crate::rng::named_stream;
use crate::shift::{WeightRule, WeightedShift};
use crate::space::{FSpace, IndexKind, SparseVector};
use crate::symbolic::{shift_symbols, ConstraintProfile, ScheduleCap, SymbolSequence, SymbolWeights};

pub const DEFAULT_DEPTH: usize = 12;
pub const DEFAULT_LEVEL: u32 = 6;
pub const DEFAULT_THETA: f64 = 0.5;
const SEARCH_LIMIT: u64 = 1 << 32;
/// Target for the expected far tail; `√` of it is the per-sample budget.
const FAR_TAU: f64 = 1e-16;
const FAR_CAP: u64 = 4096;
const CHAOS_TOLERANCE: f64 = 1e-6;
const CACHED_VECTORS: u64 = 256;
const BOUND_TABLE_STEPS: u64 = 2 * FAR_CAP + 64;
const BOUND_TABLE_SYMBOLS: u32 = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Fhc,
    UnilateralExact,
}

/// Everything that determines a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub space: FSpace,
    pub side: IndexKind,
    pub weights: WeightRule,
    pub mode: Mode,
    pub depth: usize,
    pub theta: f64,
}

impl ModelConfig {
    pub fn shift(&self) -> Result<WeightedShift> {
        WeightedShift::new(self.side, self.weights.clone(), self.space)
    }
}

/// Certified tail bound for one series at one schedule level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelCertificate {
    pub level: usize,
    pub n: u64,
    pub series: Series,
    pub tail_bound: f64,
    pub radius: f64,
}

/// Smallest schedule whose tails certify membership in `U_{n+1}`.
///
/// While `N_n` is chosen, later levels are unknown; the caps use the minimal
/// continuation of the schedule, which dominates every admissible extension.
pub fn build_schedule(
    majorants: &[TailMajorant],
    depth: usize,
    space: &FSpace,
    side: IndexKind,
) -> Result<(ConstraintProfile, Vec<LevelCertificate>)> {
    if depth == 0 {
        return Err(Error::Config("depth must be at least 1".into()));
    }
    let mut schedule: Vec<u64> = Vec::with_capacity(depth);
    let mut certificates = Vec::new();
    for level in 1..=depth {
        let radius = space.neighborhood_radius(level as u32 + 1);
        let (prev_n, prev_gap) = match schedule.len() {
            0 => (0, 0),
            1 => (schedule[0], schedule[0]),
            l => (schedule[l - 1], schedule[l - 1] - schedule[l - 2]),
        };
        let lowest = prev_n + prev_gap + 1;
        let tails = |n: u64| -> Result<Vec<f64>> {
            let mut trial = schedule.clone();
            trial.push(n);
            let profile = ConstraintProfile::new(side, trial)?;
            let cap = ScheduleCap(&profile);
            majorants.iter().map(|m| m.tail_sum(&cap, n)).collect()
        };
        let ok = |n: u64| -> Result<bool> { Ok(tails(n)?.iter().all(|&t| t < radius)) };

        let n = if ok(lowest)? {
            lowest
        } else {
            let mut hi = lowest.max(1) * 2;
            while !ok(hi)? {
                if hi >= SEARCH_LIMIT {
                    return Err(Error::CertificateUnobtainable {
                        depth: level,
                        reason: format!(
                            "tails stay above r_{} = {radius:e} up to N = {SEARCH_LIMIT}",
                            level + 1
                        ),
                    });
                }
                hi = (hi * 2).min(SEARCH_LIMIT);
            }
            let mut lo = (hi / 2).max(lowest);
            while hi - lo > 1 {
                let mid = lo + (hi - lo) / 2;
                if ok(mid)? {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            hi
        };
        for (m, t) in majorants.iter().zip(tails(n)?) {
            certificates.push(LevelCertificate {
                level,
                n,
                series: m.series(),
                tail_bound: t,
                radius,
            });
        }
        schedule.push(n);
    }
    Ok((ConstraintProfile::new(side, schedule)?, certificates))
}

/// Built measure model.
#[derive(Debug, Clone)]
pub struct MeasureModel {
    config: ModelConfig,
    shift: WeightedShift,
    profile: ConstraintProfile,
    weights: SymbolWeights,
    certificates: Vec<LevelCertificate>,
    chaos: Option<ChaosWitness>,
    majorants: Vec<TailMajorant>,
    vectors: Vec<SparseVector<f64>>,
    /// `τ(c)` for each series, `c = 0..=FAR_CAP`.
    tau: Vec<Vec<f64>>,
    far: u64,
    /// `term_bound` for `|k| <= BOUND_TABLE_STEPS`, symbols up to
    /// `BOUND_TABLE_SYMBOLS`, indexed by the sign of `k`.
    bound_table: [Vec<f64>; 2],
    fingerprint: String,
}

pub fn build_model(config: &ModelConfig) -> Result<MeasureModel> {
    if config.mode == Mode::UnilateralExact && config.side != IndexKind::Unilateral {
        return Err(Error::ModeMismatch(
            "the exact model is defined for unilateral shifts only".into(),
        ));
    }
    let shift = config.shift()?;
    let (series, chaos) = match config.mode {
        Mode::Fhc => {
            let witness = chaos_check(&shift, CHAOS_TOLERANCE);
            if !witness.chaotic {
                return Err(Error::NoCertificate(format!(
                    "no chaos certificate for {:?} on {:?}: {}",
                    config.weights, config.space.kind, witness.note
                )));
            }
            (vec![Series::Orbit, Series::RightInverse], Some(witness))
        }
        Mode::UnilateralExact => (vec![Series::Basis], None),
    };
    let majorants = series
        .iter()
        .map(|&s| TailMajorant::new(&shift, s))
        .collect::<Result<Vec<_>>>()?;
    let (profile, certificates) = build_schedule(&majorants, config.depth, &config.space, config.side)?;
    let weights = SymbolWeights::from_schedule(&profile, config.theta)?;
    let vectors = match config.mode {
        Mode::Fhc => {
            let e = DenseSetEnumeration::new(config.side);
            (1..=CACHED_VECTORS).map(|m| e.vector(m)).collect()
        }
        Mode::UnilateralExact => Vec::new(),
    };
    let fingerprint = fingerprint(config, &profile)?;
    let mut model = MeasureModel {
        config: config.clone(),
        shift,
        profile,
        weights,
        certificates,
        chaos,
        majorants,
        vectors,
        tau: Vec::new(),
        far: 0,
        bound_table: [Vec::new(), Vec::new()],
        fingerprint,
    };
    model.tau = model
        .majorants
        .iter()
        .map(|m| (0..=FAR_CAP).map(|c| model.expected_tail(m, c)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let first_small = (0..=FAR_CAP)
        .find(|&c| model.tau.iter().all(|t| t[c as usize] <= FAR_TAU))
        .unwrap_or(FAR_CAP);
    model.far = first_small.max(model.profile.n(model.profile.depth() as u64) as u64);
    let table = |sign: i64| -> Vec<f64> {
        (0..=BOUND_TABLE_STEPS as i64)
            .flat_map(|k| (1..=BOUND_TABLE_SYMBOLS).map(move |m| (k, m)))
            .map(|(k, m)| {
                if model.mode() == Mode::UnilateralExact && sign * k < 1 {
                    0.0
                } else {
                    model.term_bound_direct(sign * k, m)
                }
            })
            .collect()
    };
    model.bound_table = [table(1), table(-1)];
    Ok(model)
}

/// Stable hash of the model-defining data.
pub fn fingerprint(config: &ModelConfig, profile: &ConstraintProfile) -> Result<String> {
    let doc = serde_json::json!({
        "config": config,
        "schedule": profile.schedule,
        "scheme": crate::dense::SCHEME_VERSION,
    });
    let canonical = serde_json::to_vec(&doc)?;
    Ok(hex::encode(Sha256::digest(canonical)))
}

/// Finite approximation of `Φ(seq)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedVector {
    pub value: SparseVector<f64>,
    /// Bound on `F(Φ(seq) - value)`, valid outside an event of probability
    /// at most `exceedance`.
    pub truncation_error: f64,
    pub exceedance: f64,
}

impl MeasureModel {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn mode(&self) -> Mode {
        self.config.mode
    }

    pub fn shift(&self) -> &WeightedShift {
        &self.shift
    }

    pub fn space(&self) -> &FSpace {
        self.shift.space()
    }

    pub fn profile(&self) -> &ConstraintProfile {
        &self.profile
    }

    pub fn weights(&self) -> &SymbolWeights {
        &self.weights
    }

    pub fn certificates(&self) -> &[LevelCertificate] {
        &self.certificates
    }

    pub fn chaos(&self) -> Option<&ChaosWitness> {
        self.chaos.as_ref()
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn depth(&self) -> usize {
        self.profile.depth()
    }

    /// Edge of the default sampling region.
    pub fn far(&self) -> u64 {
        self.far
    }

    /// `N_L`.
    pub fn n(&self, level: u32) -> u64 {
        self.profile.n(level as u64) as u64
    }

    /// `E Σ_{k > c} F(term_k)` for i.i.d. symbols, bounded stage by stage.
    fn expected_tail(&self, majorant: &TailMajorant, c: u64) -> Result<f64> {
        let w = &self.weights;
        // stage 1 is {1, 2, 3} and symbol 1 contributes nothing
        let mut total = (w.p(2) + w.p(3)) * majorant.stage_tail(1, c + 1)?;
        for s in 2u32.. {
            let before = u64::try_from(majorant.cumulative(s - 1)).unwrap_or(u64::MAX);
            let mass = w.tail_mass(before);
            if mass < 1e-300 {
                break;
            }
            total += mass * majorant.stage_tail(s, c + 1)?;
        }
        Ok(total)
    }

    fn tau(&self, series: usize, c: u64) -> f64 {
        self.tau[series][c.min(FAR_CAP) as usize]
    }

    /// Coordinates of `seq` that enter `Φ` at level `L`.
    pub fn window(&self, level: u32) -> (i64, i64) {
        let n = self.n(level) as i64;
        match self.mode() {
            Mode::Fhc => (-n, n),
            Mode::UnilateralExact => (1, n),
        }
    }

    /// Region to sample so that orbit points up to `extra` steps stay inside.
    pub fn sampling_region(&self, level: u32, extra: u64) -> (i64, i64) {
        let far = self.far.max(self.n(level)) as i64;
        match self.mode() {
            Mode::Fhc => (-far - extra as i64, far),
            Mode::UnilateralExact => (1, far + extra as i64),
        }
    }

    pub fn sample_sequence(&self, rng: &mut impl Rng, level: u32, extra: u64) -> SymbolSequence {
        let (lo, hi) = self.sampling_region(level, extra);
        crate::symbolic::sample_symbols(&self.weights, lo..=hi, rng)
    }

    pub fn sample_point(&self, rng: &mut impl Rng, level: u32) -> Result<TruncatedVector> {
        let seq = self.sample_sequence(rng, level, 0);
        self.evaluate_phi(&seq, level)
    }

    /// Deterministic per-index sample from the named stream `(seed, label)`.
    pub fn sample_indexed(&self, seed: u64, label: &str, index: u64, level: u32, extra: u64) -> SymbolSequence {
        self.sample_sequence(&mut named_stream(seed, label, index), level, extra)
    }

    fn dense_vector(&self, m: u32) -> std::borrow::Cow<'_, SparseVector<f64>> {
        match self.vectors.get(m as usize - 1) {
            Some(v) => std::borrow::Cow::Borrowed(v),
            None => std::borrow::Cow::Owned(DenseSetEnumeration::new(self.config.side).vector(m as u64)),
        }
    }

    /// Center of the ball used in the full-support argument for symbol `m`.
    pub fn support_center(&self, m: u32) -> SparseVector<f64> {
        match self.mode() {
            Mode::Fhc => self.dense_vector(m).into_owned(),
            Mode::UnilateralExact => {
                let mut v = SparseVector::zero(IndexKind::Unilateral);
                v.accumulate(1, ScalarPool.value(m as u64));
                v
            }
        }
    }

    /// Term of `Φ` contributed by `symbol` at coordinate `k`.
    pub fn term(&self, k: i64, symbol: u32) -> SparseVector<f64> {
        match self.mode() {
            Mode::Fhc => {
                let x = self.dense_vector(symbol);
                match k {
                    0 => x.into_owned(),
                    k if k > 0 => self.shift.backward_power_f64(k as u64, &x),
                    k => self.shift.right_inverse_f64(k.unsigned_abs(), &x),
                }
            }
            Mode::UnilateralExact => {
                let z = ScalarPool.value(symbol as u64);
                let mut v = SparseVector::zero(IndexKind::Unilateral);
                v.accumulate(k, z / self.shift.beta_ratio(1, k));
                v
            }
        }
    }

    fn term_bound(&self, k: i64, symbol: u32) -> f64 {
        let row = k.unsigned_abs().min(BOUND_TABLE_STEPS) as usize;
        if symbol <= BOUND_TABLE_SYMBOLS && row as u64 == k.unsigned_abs() {
            let sign = usize::from(k < 0);
            let width = BOUND_TABLE_SYMBOLS as usize;
            return self.bound_table[sign][row * width + symbol as usize - 1];
        }
        self.term_bound_direct(k, symbol)
    }

    fn term_bound_direct(&self, k: i64, symbol: u32) -> f64 {
        match (self.mode(), k) {
            (Mode::Fhc, 0) => self.space().f_norm(&self.dense_vector(symbol)),
            (Mode::Fhc, k) if k > 0 => self.majorants[0].bound(symbol as u64, k as u64),
            (Mode::Fhc, k) => self.majorants[1].bound(symbol as u64, k.unsigned_abs()),
            (Mode::UnilateralExact, k) => self.majorants[0].bound(symbol as u64, k as u64),
        }
    }

    /// Partial sum of `Φ(seq)` over `lo..=hi` with a bound on the rest.
    pub fn evaluate_window(&self, seq: &SymbolSequence, lo: i64, hi: i64) -> Result<TruncatedVector> {
        if !seq.covers(lo, hi) {
            return Err(Error::WindowTooSmall {
                required: lo.unsigned_abs().max(hi.unsigned_abs()) as i64,
                covered: seq.describe_window(),
            });
        }
        let mut value = SparseVector::zero(self.config.side);
        let mut discarded = 0.0;
        // x_1 = 0 and z_1 = 0, so only symbols >= 2 contribute
        for (k, s) in seq.nontrivial() {
            if self.mode() == Mode::UnilateralExact && k < 1 {
                continue;
            }
            if (lo..=hi).contains(&k) {
                let t = self.term(k, s);
                for (i, c) in t.iter() {
                    value.accumulate(i, c);
                }
            } else {
                discarded += self.term_bound(k, s);
            }
        }
        let w = seq.window();
        let right_edge = (w.end - 1).max(0) as u64;
        let mut tails = vec![self.tau(0, right_edge)];
        if self.mode() == Mode::Fhc {
            let left_edge = w.start.min(0).unsigned_abs();
            tails.push(self.tau(1, left_edge));
        }
        let eps: f64 = tails.iter().map(|t| t.sqrt()).sum();
        Ok(TruncatedVector {
            value,
            truncation_error: (discarded + eps) * (1.0 + 1e-12),
            exceedance: eps.min(1.0),
        })
    }

    pub fn evaluate_phi(&self, seq: &SymbolSequence, level: u32) -> Result<TruncatedVector> {
        let (lo, hi) = self.window(level);
        self.evaluate_window(seq, lo, hi)
    }

    /// Symbol sequence coding the `n`-th orbit point of `Φ(seq)`.
    pub fn orbit_sequence(&self, seq: &SymbolSequence, n: u64) -> SymbolSequence {
        match self.mode() {
            Mode::Fhc => shift_symbols(seq, -(n as i64)),
            Mode::UnilateralExact => shift_symbols(seq, n as i64),
        }
    }

    /// `T^n Φ(seq)`, evaluated as `Φ` of the shifted sequence.
    pub fn orbit_point(&self, seq: &SymbolSequence, n: u64, level: u32) -> Result<TruncatedVector> {
        self.evaluate_phi(&self.orbit_sequence(seq, n), level)
    }

    /// Bound on `F(T^n value(seq) - value(orbit_sequence(seq, n)))`.
    ///
    /// `T^n` maps the level window of `seq` exactly onto a translated window
    /// of the orbit sequence, so the difference consists of terms of the
    /// orbit sequence outside one of the two windows.
    pub fn orbit_budget(&self, seq: &SymbolSequence, n: u64, level: u32) -> Result<f64> {
        let shifted = self.orbit_sequence(seq, n);
        let (lo, hi) = self.window(level);
        let moved = match self.mode() {
            Mode::Fhc => self.evaluate_window(&shifted, lo + n as i64, hi + n as i64)?,
            Mode::UnilateralExact => self.evaluate_window(&shifted, lo, hi - n as i64)?,
        };
        let own = self.evaluate_window(&shifted, lo, hi)?;
        Ok(moved.truncation_error + own.truncation_error)
    }

    /// Analytic lower bound on `μ(center(m) + U_m)`.
    pub fn full_support_bound(&self, m: u32) -> f64 {
        const TERMS: u64 = 60;
        let w = &self.weights;
        let n_m = self.n(m) as i32;
        let tail: f64 = (m as u64..=TERMS).map(|l| w.beta(&self.profile, l)).product();
        let theta = match &w.tail {
            crate::symbolic::TailRule::Schedule { theta, .. } => *theta,
            _ => 1.0,
        };
        let tail = tail * (1.0 - theta * (-(TERMS as f64)).exp2());
        match self.mode() {
            Mode::Fhc => w.p(m as u64) * w.p(1).powi(2 * n_m) * tail * tail,
            Mode::UnilateralExact => w.p(m as u64) * w.p(1).powi(n_m - 1) * tail,
        }
    }

    /// Expected-tail certificate `τ` at the edge of the default region.
    pub fn far_tail(&self) -> Vec<f64> {
        (0..self.tau.len()).map(|i| self.tau(i, self.far)).collect()
    }
}
