//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//!
//! Run with `cargo test --test acceptance`.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::Rng;

use shiftmeasure::commands::{self, TestKind};
use shiftmeasure::config::ExperimentConfig;
use shiftmeasure::measure::{build_model, MeasureModel};
use shiftmeasure::rng::named_stream;
use shiftmeasure::space::{IndexKind, SparseVector};
use shiftmeasure::symbolic::{cylinder_measure, CylinderEvent, SymbolSet};
use shiftmeasure::verify::{self, SampleSet, Verdict};
use shiftmeasure::Vector;

const SEED: u64 = 20240601;
const SAMPLES: usize = 100_000;
const DELTA: f64 = 0.01;
const MAX_LAG: u64 = 50;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

/// Model and shared 10^5-sample set for one preset.
struct Fixture {
    name: &'static str,
    config: ExperimentConfig,
    model: MeasureModel,
    set: SampleSet,
}

fn fixture(name: &'static str) -> Fixture {
    let config = ExperimentConfig::preset(name).unwrap();
    let model = build_model(&config.model).unwrap();
    let set = SampleSet::draw(&model, SEED, "acceptance", SAMPLES, config.level, MAX_LAG).unwrap();
    Fixture { name, config, model, set }
}

fn random_vector(rng: &mut impl Rng, side: IndexKind) -> Vector {
    let (lo, hi) = match side {
        IndexKind::Unilateral => (1, 40),
        IndexKind::Bilateral => (-40, 40),
    };
    let nnz = rng.gen_range(1..=6);
    let entries: Vec<(i64, f64)> = (0..nnz)
        .map(|_| (rng.gen_range(lo..=hi), rng.gen_range(-8.0..8.0)))
        .collect();
    SparseVector::from_entries(side, entries).unwrap()
}

fn criterion_1() -> Outcome {
    let mut worst = 0.0f64;
    let mut checks = 0;
    for name in ["l2-doubling", "l2-bilateral", "omega-any"] {
        let shift = ExperimentConfig::preset(name).unwrap().model.shift().unwrap();
        for i in 0..1000u64 {
            let mut rng = named_stream(SEED, "identities", i);
            let x = random_vector(&mut rng, shift.side());
            for n in 1..=20u32 {
                let sn = shift.apply_right_inverse(n, &x).unwrap();
                for m in 0..=n {
                    // m = n is T^n S_n x = x; m < n is T^m S_n x = S_{n-m} x.
                    let lhs = shift.apply_backward_power(m, &sn).unwrap();
                    let rhs = if m == n { x.clone() } else { shift.apply_right_inverse(n - m, &x).unwrap() };
                    let scale = 1.0 + rhs.max_magnitude();
                    worst = worst.max(lhs.max_abs_diff(&rhs) / scale);
                    checks += 1;
                }
            }
        }
    }
    outcome(worst <= 1e-12, format!("{checks} identities, max relative error {worst:.2e}"))
}

fn criterion_2() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for name in ["l2-doubling", "l2-bilateral"] {
        let mut config = ExperimentConfig::preset(name).unwrap();
        config.model.depth = 8;
        let model = build_model(&config.model).unwrap();
        let rows = verify::replay_certificates(&model, 10_000, 2, SEED).unwrap();
        let violations: usize = rows.iter().map(|r| r.violations).sum();
        let ratio = rows.iter().map(|r| r.max_norm / r.radius).fold(0.0, f64::max);
        pass &= violations == 0;
        parts.push(format!("{name}: {violations} violations, max F/r {ratio:.3}"));
    }
    outcome(pass, parts.join("; "))
}

fn random_cylinder(rng: &mut impl Rng, lo: i64, width: i64) -> CylinderEvent {
    let count = rng.gen_range(1..=3);
    CylinderEvent::new((0..count).map(|_| {
        let k = rng.gen_range(lo..lo + width);
        let symbols: Vec<u32> = (0..rng.gen_range(1..=2)).map(|_| rng.gen_range(1..=5)).collect();
        let set = if rng.gen_bool(0.5) {
            SymbolSet::finite(symbols)
        } else {
            SymbolSet::excluding(symbols)
        };
        (k, set)
    }))
}

fn criterion_3(doubling: &Fixture) -> Outcome {
    let w = doubling.model.weights();
    let mut worst = 0.0f64;
    let mut checks = 0;
    for i in 0..50u64 {
        let mut rng = named_stream(SEED, "mixing-oracle", i);
        let (a_start, a_width) = (rng.gen_range(-10..10), rng.gen_range(1..=8));
        let a = random_cylinder(&mut rng, a_start, a_width);
        let (b_start, b_width) = (rng.gen_range(-10..10), rng.gen_range(1..=8));
        let b = random_cylinder(&mut rng, b_start, b_width);
        let (a_lo, a_hi) = a.span().unwrap();
        let (b_lo, b_hi) = b.span().unwrap();
        let product = cylinder_measure(w, &a) * cylinder_measure(w, &b);
        for n in 0..=100i64 {
            if b_hi + n < a_lo || b_lo + n > a_hi {
                let joint = cylinder_measure(w, &a.intersect(&b.preimage(n)));
                worst = worst.max((joint - product).abs());
                checks += 1;
            }
        }
    }
    outcome(worst <= 1e-14 && checks > 0, format!("{checks} lagged pairs, max |joint - product| {worst:.2e}"))
}

fn criterion_4() -> Outcome {
    let mut agree = 0;
    let mut events = 0;
    for name in ["l2-doubling", "l2-bilateral", "omega-any"] {
        let config = ExperimentConfig::preset(name).unwrap();
        let model = build_model(&config.model).unwrap();
        let share = if name == "l2-doubling" { 18 } else { 16 };
        for i in 0..share {
            let mut rng = named_stream(SEED, &format!("cylinder-events-{name}"), i);
            let lo = if config.model.side == IndexKind::Unilateral { 1 } else { rng.gen_range(-6..=0) };
            let event = random_cylinder(&mut rng, lo, 6);
            let r = verify::test_cylinder_frequency(&model, &event, SAMPLES, SEED + i, DELTA).unwrap();
            agree += usize::from(r.verdict == Verdict::Pass);
            events += 1;
        }
    }
    outcome(events == 50 && agree >= 48, format!("{agree}/{events} cylinder frequencies within the Hoeffding radius"))
}

fn criterion_5(fixtures: &[Fixture]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for f in fixtures {
        let mut worst_margin = f64::INFINITY;
        for m in 1..=5 {
            let r = verify::test_full_support(&f.model, &f.set, m, DELTA).unwrap();
            pass &= r.verdict == Verdict::Pass;
            worst_margin = worst_margin.min(r.estimates["margin"]);
        }
        parts.push(format!("{}: min margin {worst_margin:.3}", f.name));
    }
    outcome(pass, parts.join("; "))
}

fn criterion_6(fixtures: &[Fixture]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for f in fixtures {
        let events = commands::ball_events(&f.model, 20, SEED).unwrap();
        let ok = events
            .iter()
            .filter(|e| verify::test_invariance(&f.model, &f.set, e, DELTA).unwrap().verdict == Verdict::Pass)
            .count();
        pass &= ok >= 19;
        parts.push(format!("{}: {ok}/20", f.name));
    }
    outcome(pass, parts.join("; "))
}

fn criterion_7(doubling: &Fixture) -> Outcome {
    let events = commands::ball_events(&doubling.model, 2, SEED).unwrap();
    let lags: Vec<u64> = (0..=MAX_LAG).collect();
    let r = verify::test_mixing(&doubling.model, &doubling.set, &events[0], &events[1], &lags, DELTA).unwrap();
    let n_star = r.estimates.get("n_star").copied();
    let lag0 = r.curve[0].correlation;
    outcome(
        r.verdict == Verdict::Pass && n_star.is_some_and(|n| n <= MAX_LAG as f64),
        format!(
            "{} x {}: correlation at lag 0 {lag0:.4}, n* = {}",
            events[0].label,
            events[1].label,
            n_star.map_or("none".into(), |n| n.to_string())
        ),
    )
}

fn criterion_8() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for name in ["l2-doubling", "l2-bilateral", "omega-any"] {
        let config = ExperimentConfig::preset(name).unwrap();
        let model = build_model(&config.model).unwrap();
        let set = SampleSet::draw(&model, SEED, "semiconjugacy", 1000, config.level, 10).unwrap();
        let r = verify::check_semiconjugacy(&model, &set, 10).unwrap();
        pass &= r.verdict == Verdict::Pass && r.estimates["failures"] == 0.0;
        parts.push(format!(
            "{name}: {} of {} within budget, max ratio {:.3}",
            r.estimates["comparisons"] - r.estimates["failures"],
            r.estimates["comparisons"],
            r.estimates["max_ratio"]
        ));
    }
    outcome(pass, parts.join("; "))
}

fn criterion_9(fixtures: &[Fixture]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for f in fixtures {
        let horizon = 10_000;
        let events = commands::ball_events(&f.model, 10, SEED).unwrap();
        let orbit = f.model.sample_indexed(SEED, "orbit", 0, f.config.level, horizon);
        let reports = verify::test_visit_density(&f.model, &events, &orbit, horizon, &f.set, DELTA).unwrap();
        let ok = reports.iter().filter(|r| r.verdict == Verdict::Pass).count();
        pass &= ok >= 9;
        parts.push(format!("{}: {ok}/10", f.name));
    }
    outcome(pass, parts.join("; "))
}

fn criterion_10(omega: &Fixture) -> Outcome {
    let r = verify::check_exactness_structure(&omega.model, &omega.set, 10).unwrap();
    let e = &r.estimates;
    outcome(
        r.verdict == Verdict::Pass,
        format!(
            "equivariance {:.1e}, p marginal {:.3}, p pairs {:.3}",
            e["equivariance_max_rel_diff"], e["p_marginal"], e["p_pairs"]
        ),
    )
}

fn criterion_11() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for name in ["l2-doubling", "l2-bilateral", "omega-any"] {
        let mut config = ExperimentConfig::preset(name).unwrap();
        config.samples = 2000;
        config.lags = (0..=5).collect();
        config.horizon = 500;
        config.events = 3;
        config.seed = 99;
        let run = || {
            let (model, summary) = commands::cmd_build(&config).unwrap();
            let samples = commands::cmd_sample(&config, &model, 200).unwrap();
            let tests = TestKind::defaults(model.mode());
            let report = commands::cmd_verify(&config, &model, &tests).unwrap();
            (
                serde_json::to_vec(&summary).unwrap(),
                serde_json::to_vec(&samples).unwrap(),
                serde_json::to_vec(&report).unwrap(),
            )
        };
        let same = run() == run();
        pass &= same;
        parts.push(format!("{name}: {}", if same { "identical" } else { "differs" }));
    }
    outcome(pass, parts.join("; "))
}

fn main() {
    // `cargo test` passes harness flags such as `--nocapture`; none apply here.
    let started = Instant::now();
    let mut results: BTreeMap<u32, (&str, Outcome, Duration)> = BTreeMap::new();
    let mut run = |n: u32, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let o = f();
        let dt = t.elapsed();
        println!(
            "criterion {n:>2} {:<4} {name}: {} ({:.1} s)",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            dt.as_secs_f64()
        );
        results.insert(n, (name, o, dt));
    };

    run(1, "right-inverse identities", &mut criterion_1);
    run(2, "schedule certificate replay", &mut criterion_2);
    run(4, "cylinder frequencies against exact measure", &mut criterion_4);
    run(8, "semiconjugacy within certified budgets", &mut criterion_8);
    run(11, "determinism", &mut criterion_11);

    let fixtures: Vec<Fixture> = ["l2-doubling", "l2-bilateral", "omega-any"].into_iter().map(fixture).collect();
    run(3, "exact mixing of disjoint cylinders", &mut || criterion_3(&fixtures[0]));
    run(5, "full support", &mut || criterion_5(&fixtures));
    run(6, "invariance of ball events", &mut || criterion_6(&fixtures));
    run(7, "mixing decay", &mut || criterion_7(&fixtures[0]));
    run(9, "visit density", &mut || criterion_9(&fixtures));
    run(10, "exact-mode structure", &mut || criterion_10(&fixtures[2]));

    let failed: Vec<u32> = results.iter().filter(|(_, (_, o, _))| !o.pass).map(|(n, _)| *n).collect();
    println!(
        "{} of {} criteria passed in {:.1} s",
        results.len() - failed.len(),
        results.len(),
        started.elapsed().as_secs_f64()
    );
    if !failed.is_empty() {
        println!("failed: {failed:?}");
        std::process::exit(1);
    }
}
