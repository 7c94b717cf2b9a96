//! Statistical and structural checks of a built measure model.
//!
//! Points of the measure are only known up to their truncation error, so
//! ball membership is three-valued and the uncertain mass is always added to
//! the tolerance of a test. Confidence radii are distribution-free
//! (Hoeffding) at level `1 - δ`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::dense::ScalarPool;
use crate::error::{Error, Result};
use crate::measure::{MeasureModel, Mode, TruncatedVector};
use crate::space::{FSpace, SparseVector};
use crate::symbolic::{cylinder_measure, CylinderEvent, SymbolSequence};

pub const DEFAULT_DELTA: f64 = 0.01;
/// Above this uncertain fraction a test is inconclusive.
pub const MAX_UNCERTAIN: f64 = 0.2;

pub fn hoeffding_radius(samples: usize, delta: f64) -> f64 {
    if samples == 0 {
        return f64::INFINITY;
    }
    ((2.0 / delta).ln() / (2.0 * samples as f64)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Inconclusive,
    Fail,
}

impl Verdict {
    pub fn worst(verdicts: impl IntoIterator<Item = Verdict>) -> Verdict {
        verdicts.into_iter().max().unwrap_or(Verdict::Pass)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Membership {
    Inside,
    Outside,
    Uncertain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    /// `center + U_level`.
    Ball { center: Vec<(i64, f64)>, level: u32 },
    SymbolCylinder { event: CylinderEvent },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestEvent {
    pub label: String,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl TestEvent {
    pub fn ball(label: impl Into<String>, center: &SparseVector<f64>, level: u32) -> Self {
        TestEvent {
            label: label.into(),
            kind: EventKind::Ball {
                center: center.iter().collect(),
                level,
            },
        }
    }

    pub fn cylinder(label: impl Into<String>, event: CylinderEvent) -> Self {
        TestEvent {
            label: label.into(),
            kind: EventKind::SymbolCylinder { event },
        }
    }

    /// Membership of the point coded by `seq`, approximated by `point`.
    pub fn classify(&self, space: &FSpace, seq: &SymbolSequence, point: &TruncatedVector) -> Result<Membership> {
        match &self.kind {
            EventKind::Ball { center, level } => {
                let c = SparseVector::from_entries(point.value.kind(), center.iter().copied())?;
                Ok(ball_membership(space, point, &c, *level))
            }
            EventKind::SymbolCylinder { event } => Ok(if event.contains(seq)? {
                Membership::Inside
            } else {
                Membership::Outside
            }),
        }
    }
}

/// Three-way test of `point ∈ center + U_level` given the truncation error.
pub fn ball_membership(space: &FSpace, point: &TruncatedVector, center: &SparseVector<f64>, level: u32) -> Membership {
    let r = space.neighborhood_radius(level);
    let d = space.f_norm(&point.value.sub(center).expect("matching index kinds"));
    let eps = point.truncation_error;
    if d + eps < r {
        Membership::Inside
    } else if d - eps > r {
        Membership::Outside
    } else {
        Membership::Uncertain
    }
}

/// Inside/outside/uncertain tallies.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    pub inside: usize,
    pub outside: usize,
    pub uncertain: usize,
}

impl Tally {
    pub fn add(&mut self, m: Membership) {
        match m {
            Membership::Inside => self.inside += 1,
            Membership::Outside => self.outside += 1,
            Membership::Uncertain => self.uncertain += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.inside + self.outside + self.uncertain
    }

    pub fn inside_fraction(&self) -> f64 {
        self.inside as f64 / self.total().max(1) as f64
    }

    pub fn uncertain_fraction(&self) -> f64 {
        self.uncertain as f64 / self.total().max(1) as f64
    }
}

/// I.i.d. draws from the measure, shared by several tests. Sequences are
/// regenerated from their named streams when needed; only the evaluated
/// points are kept.
#[derive(Debug, Clone)]
pub struct SampleSet {
    pub seed: u64,
    pub label: String,
    pub level: u32,
    /// Orbit steps the sequences leave room for.
    pub extra: u64,
    pub count: usize,
    pub points: Vec<TruncatedVector>,
}

impl SampleSet {
    pub fn draw(model: &MeasureModel, seed: u64, label: &str, samples: usize, level: u32, extra: u64) -> Result<Self> {
        let mut set = SampleSet {
            seed,
            label: label.to_string(),
            level,
            extra,
            count: samples,
            points: Vec::new(),
        };
        set.points = (0..samples)
            .into_par_iter()
            .map(|i| model.evaluate_phi(&set.sequence(model, i), level))
            .collect::<Result<Vec<_>>>()?;
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn sequence(&self, model: &MeasureModel, i: usize) -> SymbolSequence {
        model.sample_indexed(self.seed, &self.label, i as u64, self.level, self.extra)
    }

    pub fn mean_exceedance(&self) -> f64 {
        mean_exceedance(&self.points)
    }

    /// Memberships of the `n`-th orbit points in each event, with the mean
    /// exceedance probability of those points.
    pub fn classify(&self, model: &MeasureModel, events: &[&TestEvent], n: u64) -> Result<(Vec<Vec<Membership>>, f64)> {
        if n > self.extra && model.mode() == Mode::Fhc {
            return Err(Error::WindowTooSmall {
                required: n as i64,
                covered: format!("orbit room {}", self.extra),
            });
        }
        let needs_sequence = n > 0 || events.iter().any(|e| matches!(e.kind, EventKind::SymbolCylinder { .. }));
        let rows: Vec<(Vec<Membership>, f64)> = (0..self.count)
            .into_par_iter()
            .map(|i| {
                let (seq, point) = if needs_sequence {
                    let seq = model.orbit_sequence(&self.sequence(model, i), n);
                    let point = if n == 0 {
                        self.points[i].clone()
                    } else {
                        model.evaluate_phi(&seq, self.level)?
                    };
                    (seq, point)
                } else {
                    (SymbolSequence::default(), self.points[i].clone())
                };
                let ms = events
                    .iter()
                    .map(|e| e.classify(model.space(), &seq, &point))
                    .collect::<Result<Vec<_>>>()?;
                Ok((ms, point.exceedance))
            })
            .collect::<Result<_>>()?;
        let exceed = rows.iter().map(|r| r.1).sum::<f64>() / self.count.max(1) as f64;
        let per_event = (0..events.len())
            .map(|j| rows.iter().map(|r| r.0[j]).collect())
            .collect();
        Ok((per_event, exceed))
    }

    fn classify_one(&self, model: &MeasureModel, event: &TestEvent, n: u64) -> Result<(Vec<Membership>, f64)> {
        let (mut v, e) = self.classify(model, &[event], n)?;
        Ok((v.remove(0), e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagRow {
    pub lag: u64,
    pub joint: f64,
    pub product: f64,
    pub correlation: f64,
    pub band: f64,
    pub uncertain_fraction: f64,
}

/// Outcome of one check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub test: String,
    pub event: Option<String>,
    pub estimates: BTreeMap<String, f64>,
    pub hoeffding_radius: f64,
    pub delta: f64,
    pub uncertain_fraction: f64,
    pub discrepancy: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
    pub samples: usize,
    pub level: u32,
    pub seed: u64,
    pub fingerprint: String,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub curve: Vec<LagRow>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

impl VerificationReport {
    fn new(test: &str, model: &MeasureModel, set: &SampleSet, delta: f64) -> Self {
        VerificationReport {
            test: test.to_string(),
            event: None,
            estimates: BTreeMap::new(),
            hoeffding_radius: hoeffding_radius(set.len(), delta),
            delta,
            uncertain_fraction: 0.0,
            discrepancy: 0.0,
            tolerance: 0.0,
            verdict: Verdict::Pass,
            samples: set.len(),
            level: set.level,
            seed: set.seed,
            fingerprint: model.fingerprint().to_string(),
            curve: Vec::new(),
            note: None,
        }
    }

    fn decide(&mut self) {
        self.verdict = if self.uncertain_fraction > MAX_UNCERTAIN {
            self.note = Some("uncertain fraction too high; raise the level".into());
            Verdict::Inconclusive
        } else if self.discrepancy <= self.tolerance {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
    }
}

fn inside_count(ms: &[Membership]) -> usize {
    ms.iter().filter(|&&m| m == Membership::Inside).count()
}

fn mean_exceedance(points: &[TruncatedVector]) -> f64 {
    points.iter().map(|p| p.exceedance).sum::<f64>() / points.len().max(1) as f64
}

/// Fraction of samples where any of the listed verdicts is uncertain.
fn any_uncertain(lists: &[&[Membership]]) -> f64 {
    let n = lists[0].len();
    let c = (0..n)
        .filter(|&i| lists.iter().any(|l| l[i] == Membership::Uncertain))
        .count();
    c as f64 / n.max(1) as f64
}

/// `|μ̂(A) - μ̂(T^{-1}A)|` against twice the Hoeffding radius plus the
/// uncertain mass.
pub fn test_invariance(model: &MeasureModel, set: &SampleSet, event: &TestEvent, delta: f64) -> Result<VerificationReport> {
    let mut r = VerificationReport::new("invariance", model, set, delta);
    r.event = Some(event.label.clone());
    let (m0, _) = set.classify_one(model, event, 0)?;
    let (m1, moved_exceed) = set.classify_one(model, event, 1)?;
    let n = set.len().max(1) as f64;
    let a = inside_count(&m0) as f64 / n;
    let ta = inside_count(&m1) as f64 / n;
    r.estimates.insert("mu_a".into(), a);
    r.estimates.insert("mu_preimage_a".into(), ta);
    if let EventKind::SymbolCylinder { event: cyl } = &event.kind {
        r.estimates.insert("exact_a".into(), cylinder_measure(model.weights(), cyl));
        r.estimates.insert("exact_preimage_a".into(), cylinder_measure(model.weights(), &cyl.preimage(1)));
    }
    r.uncertain_fraction = any_uncertain(&[&m0, &m1]) + set.mean_exceedance() + moved_exceed;
    r.discrepancy = (a - ta).abs();
    r.tolerance = 2.0 * r.hoeffding_radius + r.uncertain_fraction;
    r.decide();
    Ok(r)
}

/// Correlation curve `μ̂(A ∩ T^{-n}B) - μ̂(A) μ̂(B)` over `lags`. Passes when
/// the curve stays inside its band from some lag `n* >= 1` on.
pub fn test_mixing(
    model: &MeasureModel,
    set: &SampleSet,
    a: &TestEvent,
    b: &TestEvent,
    lags: &[u64],
    delta: f64,
) -> Result<VerificationReport> {
    let mut r = VerificationReport::new("mixing", model, set, delta);
    r.event = Some(format!("{} x {}", a.label, b.label));
    let n = set.len().max(1) as f64;
    let (mut base, _) = set.classify(model, &[a, b], 0)?;
    let mb = base.pop().expect("two events");
    let ma = base.pop().expect("two events");
    let mu_a = inside_count(&ma) as f64 / n;
    let mu_b = inside_count(&mb) as f64 / n;
    r.estimates.insert("mu_a".into(), mu_a);
    r.estimates.insert("mu_b".into(), mu_b);
    let mut lags = lags.to_vec();
    lags.sort_unstable();
    lags.dedup();
    for &lag in &lags {
        let (mbn, moved_exceed) = set.classify_one(model, b, lag)?;
        let joint = ma
            .iter()
            .zip(&mbn)
            .filter(|(x, y)| **x == Membership::Inside && **y == Membership::Inside)
            .count() as f64
            / n;
        let unc = any_uncertain(&[&ma, &mb, &mbn]) + set.mean_exceedance() + moved_exceed;
        r.curve.push(LagRow {
            lag,
            joint,
            product: mu_a * mu_b,
            correlation: joint - mu_a * mu_b,
            band: 3.0 * r.hoeffding_radius + unc,
            uncertain_fraction: unc,
        });
    }
    let within = |row: &LagRow| row.correlation.abs() <= row.band;
    // first lag from which every later lag is inside the band
    let mut n_star = None;
    for (i, row) in r.curve.iter().enumerate().rev() {
        if row.lag == 0 || !within(row) {
            break;
        }
        n_star = Some(i);
    }
    r.uncertain_fraction = r.curve.iter().map(|x| x.uncertain_fraction).fold(0.0, f64::max);
    if let Some(i) = n_star {
        r.estimates.insert("n_star".into(), r.curve[i].lag as f64);
    }
    // n* exists exactly when the last lag lies inside its band
    match r.curve.last() {
        Some(last) if last.lag > 0 => {
            r.discrepancy = last.correlation.abs();
            r.tolerance = last.band;
        }
        _ => {
            r.discrepancy = f64::INFINITY;
            r.note = Some("no positive lag requested".into());
        }
    }
    r.decide();
    Ok(r)
}

/// `μ̂(center(m) + U_m)` against the analytic lower bound.
pub fn test_full_support(model: &MeasureModel, set: &SampleSet, m: u32, delta: f64) -> Result<VerificationReport> {
    let mut r = VerificationReport::new("support", model, set, delta);
    let event = TestEvent::ball(format!("ball-{m}"), &model.support_center(m), m);
    r.event = Some(event.label.clone());
    let (ms, _) = set.classify_one(model, &event, 0)?;
    let freq = inside_count(&ms) as f64 / set.len().max(1) as f64;
    let bound = model.full_support_bound(m);
    r.estimates.insert("frequency".into(), freq);
    r.estimates.insert("lower_bound".into(), bound);
    r.uncertain_fraction = any_uncertain(&[&ms]) + set.mean_exceedance();
    r.discrepancy = (bound - freq).max(0.0);
    r.tolerance = r.hoeffding_radius + r.uncertain_fraction;
    r.estimates.insert("margin".into(), freq - bound + r.tolerance);
    r.decide();
    Ok(r)
}

/// Monte-Carlo frequency of a cylinder against its exact measure.
pub fn test_cylinder_frequency(
    model: &MeasureModel,
    event: &CylinderEvent,
    samples: usize,
    seed: u64,
    delta: f64,
) -> Result<VerificationReport> {
    let (lo, hi) = event.span().unwrap_or((0, 0));
    let hits: usize = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = crate::rng::named_stream(seed, "cylinder", i);
            let seq = crate::symbolic::sample_symbols(model.weights(), lo..=hi, &mut rng);
            event.contains(&seq).map(usize::from)
        })
        .sum::<Result<usize>>()?;
    let set = SampleSet {
        seed,
        label: "cylinder".into(),
        level: 0,
        extra: 0,
        count: samples,
        points: Vec::new(),
    };
    let mut r = VerificationReport::new("cylinder", model, &set, delta);
    r.samples = samples;
    r.hoeffding_radius = hoeffding_radius(samples, delta);
    let freq = hits as f64 / samples.max(1) as f64;
    let exact = cylinder_measure(model.weights(), event);
    r.estimates.insert("frequency".into(), freq);
    r.estimates.insert("exact".into(), exact);
    r.discrepancy = (freq - exact).abs();
    r.tolerance = r.hoeffding_radius;
    r.decide();
    Ok(r)
}

/// Visit frequencies of one orbit against independent estimates of the
/// measure of each event.
pub fn test_visit_density(
    model: &MeasureModel,
    events: &[TestEvent],
    orbit_seq: &SymbolSequence,
    horizon: u64,
    reference: &SampleSet,
    delta: f64,
) -> Result<Vec<VerificationReport>> {
    let level = reference.level;
    let orbit: Vec<TruncatedVector> = (0..horizon)
        .into_par_iter()
        .map(|n| model.orbit_point(orbit_seq, n, level))
        .collect::<Result<_>>()?;
    let orbit_exceed = mean_exceedance(&orbit);
    let h = horizon.max(1) as f64;
    let mut out = Vec::new();
    for event in events {
        let mut r = VerificationReport::new("density", model, reference, delta);
        r.event = Some(event.label.clone());
        let visits: Vec<Membership> = (0..horizon)
            .into_par_iter()
            .map(|n| event.classify(model.space(), &model.orbit_sequence(orbit_seq, n), &orbit[n as usize]))
            .collect::<Result<_>>()?;
        let density = inside_count(&visits) as f64 / h;
        let (refs, _) = reference.classify_one(model, event, 0)?;
        let mu = inside_count(&refs) as f64 / reference.len().max(1) as f64;
        r.estimates.insert("density".into(), density);
        r.estimates.insert("mu".into(), mu);
        if let EventKind::SymbolCylinder { event: cyl } = &event.kind {
            r.estimates.insert("exact".into(), cylinder_measure(model.weights(), cyl));
        }
        r.estimates.insert("horizon".into(), h);
        r.uncertain_fraction =
            any_uncertain(&[&visits]) + orbit_exceed + any_uncertain(&[&refs]) + reference.mean_exceedance();
        r.discrepancy = (density - mu).abs();
        r.tolerance = 3.0 * (h.powf(-0.5) + (reference.len().max(1) as f64).powf(-0.5)) + r.uncertain_fraction;
        r.decide();
        out.push(r);
    }
    Ok(out)
}

/// `F(T^n Φ(seq) - Φ(σ^{-n} seq))` against the combined truncation budgets,
/// for every sample and `1 <= n <= max_n`. Deterministic: passes only if
/// every comparison does.
pub fn check_semiconjugacy(model: &MeasureModel, set: &SampleSet, max_n: u64) -> Result<VerificationReport> {
    let mut r = VerificationReport::new("semiconjugacy", model, set, 0.0);
    r.hoeffding_radius = 0.0;
    let rows: Vec<(usize, f64)> = (0..set.len())
        .into_par_iter()
        .map(|i| {
            let seq = &set.sequence(model, i);
            let point = &set.points[i];
            let mut failures = 0;
            let mut worst = 0.0f64;
            for n in 1..=max_n {
                let pushed = model.shift().backward_power_f64(n, &point.value);
                let orbit = model.orbit_point(seq, n, set.level)?;
                let d = model.space().f_norm(&pushed.sub(&orbit.value)?);
                let budget = model.orbit_budget(seq, n, set.level)?;
                let slack = 1e-12 * (1.0 + model.space().f_norm(&pushed));
                if d > budget + slack {
                    failures += 1;
                }
                if budget > 0.0 {
                    worst = worst.max(d / budget);
                }
            }
            Ok((failures, worst))
        })
        .collect::<Result<_>>()?;
    let failures: usize = rows.iter().map(|x| x.0).sum();
    let total = (set.len() as u64 * max_n).max(1) as f64;
    r.estimates.insert("comparisons".into(), total);
    r.estimates.insert("failures".into(), failures as f64);
    r.estimates.insert("max_ratio".into(), rows.iter().map(|x| x.1).fold(0.0, f64::max));
    r.discrepancy = failures as f64 / total;
    r.tolerance = 0.0;
    r.decide();
    Ok(r)
}

/// Replay of the schedule certificate for one level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayRow {
    pub level: usize,
    pub from: u64,
    pub to: u64,
    pub radius: f64,
    pub max_norm: f64,
    pub violations: usize,
    pub trials: usize,
}

/// Random assignments `m_k <= 2l` on `(N_l, N_{l+1}]` for `k` in
/// `(N_n, N_{n+ahead}]`; each directly summed tail must lie in `U_{n+1}`.
pub fn replay_certificates(model: &MeasureModel, trials: usize, ahead: u64, seed: u64) -> Result<Vec<ReplayRow>> {
    use rand::Rng;
    let profile = model.profile();
    let sides: Vec<i64> = match model.mode() {
        Mode::Fhc => vec![1, -1],
        Mode::UnilateralExact => vec![1],
    };
    let mut rows = Vec::new();
    for level in 1..=profile.depth() {
        let from = profile.n(level as u64) as u64;
        let to = profile.n(level as u64 + ahead) as u64;
        let radius = model.space().neighborhood_radius(level as u32 + 1);
        let norms: Vec<f64> = (0..trials as u64)
            .into_par_iter()
            .map(|t| {
                let mut rng = crate::rng::named_stream(seed, &format!("replay-{level}"), t);
                let mut worst = 0.0f64;
                for &side in &sides {
                    let mut sum = SparseVector::zero(model.config().side);
                    for k in from + 1..=to {
                        let cap = 2 * profile.level(k as i64) as u32;
                        let m = rng.gen_range(1..=cap);
                        let term = model.term(side * k as i64, m);
                        for (i, c) in term.iter() {
                            sum.accumulate(i, c);
                        }
                    }
                    worst = worst.max(model.space().f_norm(&sum));
                }
                worst
            })
            .collect();
        rows.push(ReplayRow {
            level,
            from,
            to,
            radius,
            max_norm: norms.iter().cloned().fold(0.0, f64::max),
            violations: norms.iter().filter(|&&x| x >= radius).count(),
            trials,
        });
    }
    Ok(rows)
}

/// Category of a recovered pool value for the chi-square tests.
fn value_category(z: f64) -> usize {
    const CATS: [f64; 3] = [0.0, 1.0, -1.0];
    CATS.iter().position(|&c| (z - c).abs() < 1e-9).unwrap_or(3)
}

fn category_probabilities(model: &MeasureModel) -> [f64; 4] {
    let mut p = [0.0; 4];
    for n in 1..=600u64 {
        let c = value_category(ScalarPool.value(n));
        if c < 3 {
            p[c] += model.weights().p(n);
        }
    }
    p[3] = (1.0 - p[0] - p[1] - p[2]).max(0.0);
    p
}

/// Pearson statistic and upper-tail p-value, merging cells whose expected
/// count is below 5 into the largest cell.
fn chi_square(observed: &[f64], expected: &[f64]) -> (f64, f64) {
    let largest = (0..expected.len())
        .max_by(|&a, &b| expected[a].partial_cmp(&expected[b]).unwrap())
        .unwrap_or(0);
    let mut obs = Vec::new();
    let mut exp = Vec::new();
    let (mut o_merge, mut e_merge) = (0.0, 0.0);
    for i in 0..expected.len() {
        if expected[i] < 5.0 || i == largest {
            o_merge += observed[i];
            e_merge += expected[i];
        } else {
            obs.push(observed[i]);
            exp.push(expected[i]);
        }
    }
    obs.push(o_merge);
    exp.push(e_merge);
    let stat: f64 = obs.iter().zip(&exp).map(|(o, e)| (o - e) * (o - e) / e).sum();
    let df = obs.len() as f64 - 1.0;
    if df < 1.0 {
        return (stat, 1.0);
    }
    let dist = ChiSquared::new(df).expect("positive degrees of freedom");
    (stat, 1.0 - dist.cdf(stat))
}

/// Structural premises of exactness for the one-sided model: the recovered
/// coordinates are i.i.d. with the symbol marginal, and one step of the
/// operator drops the first symbol.
pub fn check_exactness_structure(model: &MeasureModel, set: &SampleSet, coordinates: i64) -> Result<VerificationReport> {
    if model.mode() != Mode::UnilateralExact {
        return Err(Error::ModeMismatch(
            "exactness is only established for the unilateral exact model".into(),
        ));
    }
    if model.n(set.level) < coordinates as u64 {
        return Err(Error::WindowTooSmall {
            required: coordinates,
            covered: format!("level window up to {}", model.n(set.level)),
        });
    }
    let mut r = VerificationReport::new("exactness", model, set, DEFAULT_DELTA);
    let shift = model.shift();
    let cats: Vec<Vec<usize>> = set
        .points
        .par_iter()
        .map(|p| {
            (1..=coordinates)
                .map(|k| value_category(p.value.get(k) * shift.beta_ratio(1, k)))
                .collect()
        })
        .collect();
    let probs = category_probabilities(model);
    let n = set.len() as f64;

    let mut marginal = [0.0; 4];
    for row in &cats {
        for &c in row {
            marginal[c] += 1.0;
        }
    }
    let draws = n * coordinates as f64;
    let expected: Vec<f64> = probs.iter().map(|p| p * draws).collect();
    let (chi_m, p_m) = chi_square(&marginal, &expected);

    // disjoint adjacent pairs, zero versus nonzero
    let mut pairs = [0.0; 4];
    let mut pair_count = 0.0;
    for row in &cats {
        for pair in row.chunks_exact(2) {
            pairs[2 * usize::from(pair[0] != 0) + usize::from(pair[1] != 0)] += 1.0;
            pair_count += 1.0;
        }
    }
    let q = [probs[0], 1.0 - probs[0]];
    let expected_pairs: Vec<f64> = (0..4).map(|i| q[i / 2] * q[i % 2] * pair_count).collect();
    let (chi_p, p_p) = chi_square(&pairs, &expected_pairs);

    let checked = set.len().min(1000);
    let window_end = model.n(set.level) as i64 - 1;
    let diffs: Vec<f64> = (0..checked)
        .into_par_iter()
        .map(|i| {
            let pushed = shift.backward_power_f64(1, &set.points[i].value);
            let orbit = model.orbit_point(&set.sequence(model, i), 1, set.level)?;
            Ok((1..=window_end)
                .map(|k| {
                    let (a, b) = (pushed.get(k), orbit.value.get(k));
                    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
                })
                .fold(0.0, f64::max))
        })
        .collect::<Result<_>>()?;
    let max_diff = diffs.iter().cloned().fold(0.0, f64::max);

    r.estimates.insert("chi2_marginal".into(), chi_m);
    r.estimates.insert("p_marginal".into(), p_m);
    r.estimates.insert("chi2_pairs".into(), chi_p);
    r.estimates.insert("p_pairs".into(), p_p);
    r.estimates.insert("equivariance_max_rel_diff".into(), max_diff);
    r.estimates.insert("equivariance_checked".into(), checked as f64);
    r.discrepancy = max_diff;
    r.tolerance = 1e-14;
    r.decide();
    if p_m <= 0.01 || p_p <= 0.01 {
        r.verdict = Verdict::Fail;
        r.note = Some("coordinate process deviates from the i.i.d. symbol law".into());
    } else {
        r.note = Some("exactness follows from the one-sided Bernoulli shift through the equivariant coding map".into());
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{build_model, ModelConfig, DEFAULT_THETA};
    use crate::shift::WeightRule;
    use crate::space::IndexKind;
    use crate::symbolic::SymbolSet;

    fn model(mode: Mode) -> MeasureModel {
        let (space, lambda) = match mode {
            Mode::Fhc => (FSpace::lp(2.0).unwrap(), 2.0),
            Mode::UnilateralExact => (FSpace::omega(), 1.0),
        };
        build_model(&ModelConfig {
            space,
            side: IndexKind::Unilateral,
            weights: WeightRule::Constant { lambda },
            mode,
            depth: 6,
            theta: DEFAULT_THETA,
        })
        .unwrap()
    }

    fn point(entries: &[(i64, f64)], err: f64) -> TruncatedVector {
        TruncatedVector {
            value: SparseVector::from_entries(IndexKind::Unilateral, entries.iter().copied()).unwrap(),
            truncation_error: err,
            exceedance: 0.0,
        }
    }

    #[test]
    fn hoeffding_radius_values() {
        let r = hoeffding_radius(100_000, 0.01);
        assert!((r - (200f64.ln() / 200_000.0).sqrt()).abs() < 1e-15);
        assert!((r - 0.005_147).abs() < 1e-6);
        assert!(hoeffding_radius(0, 0.01).is_infinite());
        assert!(hoeffding_radius(400, 0.01) > hoeffding_radius(4000, 0.01));
    }

    #[test]
    fn worst_verdict_orders_fail_last() {
        use Verdict::*;
        assert_eq!(Verdict::worst([]), Pass);
        assert_eq!(Verdict::worst([Pass, Inconclusive, Pass]), Inconclusive);
        assert_eq!(Verdict::worst([Inconclusive, Fail, Pass]), Fail);
    }

    #[test]
    fn ball_membership_is_three_way() {
        let space = FSpace::lp(2.0).unwrap();
        let zero = SparseVector::zero(IndexKind::Unilateral);
        // r_2 = 1/4
        assert_eq!(ball_membership(&space, &point(&[(1, 0.1)], 0.01), &zero, 2), Membership::Inside);
        assert_eq!(ball_membership(&space, &point(&[(1, 0.4)], 0.01), &zero, 2), Membership::Outside);
        assert_eq!(ball_membership(&space, &point(&[(1, 0.245)], 0.01), &zero, 2), Membership::Uncertain);
        assert_eq!(ball_membership(&space, &point(&[(1, 0.25)], 0.0), &zero, 2), Membership::Uncertain);
    }

    #[test]
    fn tally_fractions() {
        let mut t = Tally::default();
        for m in [Membership::Inside, Membership::Inside, Membership::Outside, Membership::Uncertain] {
            t.add(m);
        }
        assert_eq!(t.total(), 4);
        assert_eq!(t.inside_fraction(), 0.5);
        assert_eq!(t.uncertain_fraction(), 0.25);
        assert_eq!(Tally::default().inside_fraction(), 0.0);
    }

    #[test]
    fn decide_puts_uncertainty_first() {
        let m = model(Mode::UnilateralExact);
        let set = SampleSet::draw(&m, 0, "decide", 10, 3, 1).unwrap();
        let mut r = VerificationReport::new("x", &m, &set, 0.01);
        r.discrepancy = 0.1;
        r.tolerance = 0.2;
        r.decide();
        assert_eq!(r.verdict, Verdict::Pass);
        r.discrepancy = 0.3;
        r.decide();
        assert_eq!(r.verdict, Verdict::Fail);
        r.uncertain_fraction = 0.25;
        r.decide();
        assert_eq!(r.verdict, Verdict::Inconclusive);
    }

    #[test]
    fn sample_set_regenerates_its_sequences() {
        let m = model(Mode::Fhc);
        let set = SampleSet::draw(&m, 3, "regen", 50, 4, 2).unwrap();
        assert_eq!(set.len(), 50);
        for i in [0usize, 17, 49] {
            let seq = set.sequence(&m, i);
            assert_eq!(seq, m.sample_indexed(3, "regen", i as u64, 4, 2));
        }
        assert!(set.mean_exceedance() < 1e-6);
    }

    #[test]
    fn small_runs_pass() {
        let m = model(Mode::Fhc);
        let set = SampleSet::draw(&m, 1, "small", 4000, 4, 10).unwrap();
        let ball = TestEvent::ball("U2", &SparseVector::zero(IndexKind::Unilateral), 2);
        assert_eq!(test_invariance(&m, &set, &ball, 0.01).unwrap().verdict, Verdict::Pass);
        let mix = test_mixing(&m, &set, &ball, &ball, &[0, 5, 10], 0.01).unwrap();
        assert_eq!(mix.curve.len(), 3);
        assert_eq!(mix.verdict, Verdict::Pass);
        assert_eq!(test_full_support(&m, &set, 2, 0.01).unwrap().verdict, Verdict::Pass);
        assert_eq!(check_semiconjugacy(&m, &set, 10).unwrap().verdict, Verdict::Pass);
    }

    #[test]
    fn cylinder_frequency_matches_exact_measure() {
        let m = model(Mode::UnilateralExact);
        let ev = CylinderEvent::new([
            (1, SymbolSet::Finite([1].into())),
            (3, SymbolSet::Cofinite([1].into())),
        ]);
        let r = test_cylinder_frequency(&m, &ev, 20_000, 5, 0.01).unwrap();
        assert_eq!(r.verdict, Verdict::Pass, "{:?}", r.estimates);
        let exact = m.weights().p(1) * (1.0 - m.weights().p(1));
        assert!((r.estimates["exact"] - exact).abs() < 1e-15);
    }

    #[test]
    fn replay_finds_no_violations() {
        let m = model(Mode::Fhc);
        for row in replay_certificates(&m, 200, 2, 9).unwrap() {
            assert_eq!(row.violations, 0, "{row:?}");
            assert!(row.max_norm < row.radius);
        }
    }

    #[test]
    fn exactness_needs_the_exact_model() {
        let fhc = model(Mode::Fhc);
        let set = SampleSet::draw(&fhc, 0, "e", 10, 3, 1).unwrap();
        assert!(matches!(
            check_exactness_structure(&fhc, &set, 5),
            Err(crate::error::Error::ModeMismatch(_))
        ));
        let exact = model(Mode::UnilateralExact);
        let set = SampleSet::draw(&exact, 0, "e", 5000, 4, 1).unwrap();
        let r = check_exactness_structure(&exact, &set, 10).unwrap();
        assert_eq!(r.verdict, Verdict::Pass, "{:?}", r.estimates);
    }
}
