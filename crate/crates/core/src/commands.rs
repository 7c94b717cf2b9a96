//! `build`, `sample` and `verify`: orchestration and persisted outputs.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::majorant::ChaosWitness;
use crate::measure::{build_model, LevelCertificate, MeasureModel, Mode};
use crate::rng::named_stream;
use crate::space::IndexKind;
use crate::symbolic::{KMeasureBound, SymbolSequence};
use crate::verify::{self, TestEvent, SampleSet, Verdict, VerificationReport};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSummary {
    pub fingerprint: String,
    pub config: ExperimentConfig,
    pub schedule: Vec<u64>,
    /// `p_1, ..., p_10`.
    pub weights_head: Vec<f64>,
    pub k_measure: KMeasureBound,
    pub certificates: Vec<LevelCertificate>,
    pub chaos: Option<ChaosWitness>,
    pub sampling_edge: u64,
    pub far_expected_tail: Vec<f64>,
    /// Error bound at the configured level for sequences admissible beyond it.
    pub level_budget: f64,
}

/// Bound on `truncation_error` for a sample whose discarded symbols respect
/// the constraint profile.
pub fn level_budget(model: &MeasureModel, level: u32) -> f64 {
    let tail = model.space().neighborhood_radius(level + 1);
    let sides = match model.mode() {
        Mode::Fhc => 2.0,
        Mode::UnilateralExact => 1.0,
    };
    let eps: f64 = model.far_tail().iter().map(|t| t.sqrt()).sum();
    (sides * tail + eps) * (1.0 + 1e-9)
}

pub fn summarize(config: &ExperimentConfig, model: &MeasureModel) -> Result<ModelSummary> {
    let weights = model.weights();
    Ok(ModelSummary {
        fingerprint: model.fingerprint().to_string(),
        config: config.clone(),
        schedule: model.profile().schedule.clone(),
        weights_head: (1..=10).map(|n| weights.p(n)).collect(),
        k_measure: weights.k_measure_lower_bound(model.profile(), 40)?,
        certificates: model.certificates().to_vec(),
        chaos: model.chaos().cloned(),
        sampling_edge: model.far(),
        far_expected_tail: model.far_tail(),
        level_budget: level_budget(model, config.level),
    })
}

pub fn cmd_build(config: &ExperimentConfig) -> Result<(MeasureModel, ModelSummary)> {
    config.validate()?;
    let model = build_model(&config.model)?;
    let summary = summarize(config, &model)?;
    Ok((model, summary))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub index: u64,
    pub f_norm: f64,
    pub truncation_error: f64,
    pub exceedance: f64,
    /// Symbols beyond the level window lie in their admissible sets.
    pub admissible: bool,
    pub budget: f64,
    pub coordinates: Vec<f64>,
}

/// Coordinates listed in the sample table.
pub fn head_coordinates(side: IndexKind) -> Vec<i64> {
    match side {
        IndexKind::Unilateral => (1..=8).collect(),
        IndexKind::Bilateral => (-4..=4).collect(),
    }
}

pub fn cmd_sample(config: &ExperimentConfig, model: &MeasureModel, count: usize) -> Result<Vec<SampleRow>> {
    use rayon::prelude::*;
    let heads = head_coordinates(config.model.side);
    let budget = level_budget(model, config.level);
    let edge = model.n(config.level) as i64;
    (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let seq = model.sample_indexed(config.seed, "sample", i, config.level, 0);
            let point = model.evaluate_phi(&seq, config.level)?;
            Ok(SampleRow {
                index: i,
                f_norm: model.space().f_norm(&point.value),
                truncation_error: point.truncation_error,
                exceedance: point.exceedance,
                admissible: tail_admissible(model, &seq, edge),
                budget,
                coordinates: heads.iter().map(|&k| point.value.get(k)).collect(),
            })
        })
        .collect()
}

fn tail_admissible(model: &MeasureModel, seq: &SymbolSequence, edge: i64) -> bool {
    let profile = model.profile();
    seq.nontrivial()
        .filter(|(k, _)| k.abs() > edge)
        .all(|(k, v)| v as u64 <= profile.max_symbol(k))
}

pub fn write_sample_table(path: &Path, side: IndexKind, rows: &[SampleRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec![
        "index".to_string(),
        "f_norm".into(),
        "truncation_error".into(),
        "exceedance".into(),
        "admissible".into(),
        "budget".into(),
    ];
    header.extend(head_coordinates(side).iter().map(|k| format!("x[{k}]")));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.index.to_string(),
            format!("{:e}", r.f_norm),
            format!("{:e}", r.truncation_error),
            format!("{:e}", r.exceedance),
            r.admissible.to_string(),
            format!("{:e}", r.budget),
        ];
        rec.extend(r.coordinates.iter().map(|c| format!("{c:e}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestKind {
    Invariance,
    Mixing,
    Support,
    Density,
    Exactness,
}

impl TestKind {
    pub const ALL: [TestKind; 5] = [
        TestKind::Invariance,
        TestKind::Mixing,
        TestKind::Support,
        TestKind::Density,
        TestKind::Exactness,
    ];

    pub fn parse_list(text: &str) -> Result<Vec<TestKind>> {
        text.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| match s {
                "invariance" => Ok(TestKind::Invariance),
                "mixing" => Ok(TestKind::Mixing),
                "support" => Ok(TestKind::Support),
                "density" => Ok(TestKind::Density),
                "exactness" => Ok(TestKind::Exactness),
                "all" => Err(Error::Config("use the default instead of 'all'".into())),
                other => Err(Error::Config(format!("unknown test {other:?}"))),
            })
            .collect()
    }

    /// Tests that apply to a model when none are requested.
    pub fn defaults(mode: Mode) -> Vec<TestKind> {
        Self::ALL
            .into_iter()
            .filter(|t| *t != TestKind::Exactness || mode == Mode::UnilateralExact)
            .collect()
    }
}

/// Ball events `c + U_n`. Each center is a point drawn from the measure,
/// restricted to its head coordinates and moved by a small continuous jitter,
/// so every event carries mass and boundary ties have probability zero.
pub fn ball_events(model: &MeasureModel, count: usize, seed: u64) -> Result<Vec<TestEvent>> {
    use rand::Rng;
    let side = model.config().side;
    (0..count as u64)
        .map(|i| {
            let mut rng = named_stream(seed, "events", i);
            let level = rng.gen_range(1..=4u32);
            let seq = model.sample_indexed(seed, "event-centers", i, level, 0);
            let point = model.evaluate_phi(&seq, level)?;
            let jitter = model.space().neighborhood_radius(level) / 16.0;
            let center: Vec<(i64, f64)> = head_coordinates(side)
                .into_iter()
                .map(|k| (k, point.value.get(k) + jitter * rng.gen_range(-1.0..1.0)))
                .collect();
            let center = crate::space::SparseVector::from_entries(side, center)?;
            Ok(TestEvent::ball(format!("c{i}+U{level}"), &center, level))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub fingerprint: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub tests: Vec<TestKind>,
    pub reports: Vec<VerificationReport>,
    pub verdict: Verdict,
}

pub fn cmd_verify(config: &ExperimentConfig, model: &MeasureModel, tests: &[TestKind]) -> Result<RunReport> {
    if tests.contains(&TestKind::Exactness) && model.mode() != Mode::UnilateralExact {
        return Err(Error::ModeMismatch(
            "exactness applies only to the unilateral exact model".into(),
        ));
    }
    let delta = config.delta;
    let max_lag = config.lags.iter().copied().max().unwrap_or(0);
    let set = SampleSet::draw(model, config.seed, "verify", config.samples, config.level, max_lag.max(1))?;
    let events = ball_events(model, config.events.max(1), config.seed)?;
    let mut reports = Vec::new();
    for test in tests {
        match test {
            TestKind::Invariance => {
                for ev in &events {
                    reports.push(verify::test_invariance(model, &set, ev, delta)?);
                }
            }
            TestKind::Mixing => {
                let b = events.get(1).unwrap_or(&events[0]);
                reports.push(verify::test_mixing(model, &set, &events[0], b, &config.lags, delta)?);
            }
            TestKind::Support => {
                for m in 1..=5u32.min(model.depth() as u32) {
                    reports.push(verify::test_full_support(model, &set, m, delta)?);
                }
            }
            TestKind::Density => {
                let seq = model.sample_indexed(config.seed, "orbit", 0, config.level, config.horizon);
                reports.extend(verify::test_visit_density(model, &events, &seq, config.horizon, &set, delta)?);
            }
            TestKind::Exactness => {
                reports.push(verify::check_exactness_structure(model, &set, 10)?);
            }
        }
    }
    let verdict = Verdict::worst(reports.iter().map(|r| r.verdict));
    Ok(RunReport {
        fingerprint: model.fingerprint().to_string(),
        seed: config.seed,
        config: config.clone(),
        tests: tests.to_vec(),
        reports,
        verdict,
    })
}

pub fn write_mixing_table(path: &Path, report: &VerificationReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in &report.curve {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

/// Comma separated lags; `a..b` stands for `a, a+1, ..., b`.
pub fn parse_lags(text: &str) -> Result<Vec<u64>> {
    let bad = |s: &str| Error::Config(format!("bad lag {s:?}"));
    let mut lags = Vec::new();
    for part in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match part.split_once("..") {
            Some((a, b)) => {
                let a: u64 = a.trim().parse().map_err(|_| bad(part))?;
                let b: u64 = b.trim().trim_start_matches('=').parse().map_err(|_| bad(part))?;
                if a > b {
                    return Err(bad(part));
                }
                lags.extend(a..=b);
            }
            None => lags.push(part.parse().map_err(|_| bad(part))?),
        }
    }
    if lags.is_empty() {
        return Err(Error::Config("no lags given".into()));
    }
    lags.sort_unstable();
    lags.dedup();
    Ok(lags)
}

/// Process exit status for a verdict or an error.
pub fn exit_code(outcome: &Result<Verdict>) -> i32 {
    match outcome {
        Ok(Verdict::Pass) => 0,
        Ok(Verdict::Fail) => 1,
        Ok(Verdict::Inconclusive) => 2,
        Err(Error::Config(_)) | Err(Error::ModeMismatch(_)) | Err(Error::Json(_)) => 64,
        Err(_) => 1,
    }
}
