use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use shiftmeasure::space::IndexKind;
use shiftmeasure::symbolic::{
    cylinder_measure, sample_symbols, shift_symbols, ConstraintProfile, CylinderEvent, SymbolSequence,
    SymbolSet, SymbolWeights,
};
use shiftmeasure::verify::{Membership, Tally};

/// Schedules with strictly growing gaps.
fn schedule() -> impl Strategy<Value = Vec<u64>> {
    (1u64..5, prop::collection::vec(1u64..6, 1..10)).prop_map(|(g1, steps)| {
        let mut n = g1;
        let mut gap = g1;
        let mut out = vec![n];
        for s in steps {
            gap += s;
            n += gap;
            out.push(n);
        }
        out
    })
}

fn side() -> impl Strategy<Value = IndexKind> {
    prop_oneof![Just(IndexKind::Unilateral), Just(IndexKind::Bilateral)]
}

fn symbol_set() -> impl Strategy<Value = SymbolSet> {
    (prop::collection::btree_set(1u32..6, 1..3), any::<bool>()).prop_map(|(s, cofinite)| {
        if cofinite {
            SymbolSet::excluding(s)
        } else {
            SymbolSet::finite(s)
        }
    })
}

/// Cylinder on coordinates `lo..lo+width`.
fn cylinder(lo: i64, width: i64) -> impl Strategy<Value = CylinderEvent> {
    prop::collection::vec((lo..lo + width, symbol_set()), 1..4).prop_map(CylinderEvent::new)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn weights_form_a_distribution(sched in schedule(), theta in 0.05f64..0.95) {
        let profile = ConstraintProfile::new(IndexKind::Unilateral, sched).unwrap();
        let w = SymbolWeights::from_schedule(&profile, theta).unwrap();
        let mut total = 0.0;
        for n in 1..=60u64 {
            let p = w.p(n);
            prop_assert!(p > 0.0, "p_{} = {}", n, p);
            total += p;
            prop_assert!((total + w.tail_mass(n) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gaps_must_grow(sched in schedule(), at in 0usize..8) {
        prop_assume!(at + 1 < sched.len());
        // Repeat gap `at` instead of growing it.
        let mut bad = sched[..=at + 1].to_vec();
        let gap = sched[at + 1] - sched[at];
        bad.push(sched[at + 1] + gap);
        prop_assert!(ConstraintProfile::new(IndexKind::Unilateral, bad).is_err());
    }

    #[test]
    fn admissible_sets_are_symmetric(sched in schedule(), k in 1i64..400) {
        let p = ConstraintProfile::new(IndexKind::Bilateral, sched).unwrap();
        prop_assert_eq!(p.max_symbol(k), p.max_symbol(-k));
        prop_assert!(p.max_symbol(k) >= p.max_symbol(k - 1));
    }

    #[test]
    fn shift_group_law(seed in any::<u64>(), a in -20i64..20, b in -20i64..20) {
        let w = SymbolWeights::from_schedule(&ConstraintProfile::new(IndexKind::Bilateral, vec![1, 3, 6]).unwrap(), 0.5).unwrap();
        let seq = sample_symbols(&w, -40..=40, &mut ChaCha8Rng::seed_from_u64(seed));
        let ab = shift_symbols(&shift_symbols(&seq, a), b);
        prop_assert_eq!(&ab, &shift_symbols(&seq, a + b));
        prop_assert_eq!(&shift_symbols(&ab, -(a + b)), &seq);
        for k in -10..=10 {
            prop_assert_eq!(shift_symbols(&seq, a).get(k), seq.get(k + a));
        }
    }

    #[test]
    fn cylinders_are_shift_invariant(sched in schedule(), ev in cylinder(-5, 10), n in -30i64..30) {
        let w = SymbolWeights::from_schedule(&ConstraintProfile::new(IndexKind::Bilateral, sched).unwrap(), 0.5).unwrap();
        let a = cylinder_measure(&w, &ev);
        let b = cylinder_measure(&w, &ev.preimage(n));
        prop_assert!((a - b).abs() <= 1e-15);
    }

    #[test]
    fn disjoint_cylinders_are_independent(ea in cylinder(0, 6), eb in cylinder(0, 6), lag in 6i64..=100) {
        let w = SymbolWeights::from_schedule(&ConstraintProfile::new(IndexKind::Unilateral, vec![3, 7, 12]).unwrap(), 0.5).unwrap();
        let joint = cylinder_measure(&w, &ea.intersect(&eb.preimage(lag)));
        let product = cylinder_measure(&w, &ea) * cylinder_measure(&w, &eb);
        prop_assert!((joint - product).abs() <= 1e-14);
    }

    #[test]
    fn k_bound_is_positive_and_monotone(sched in schedule(), theta in 0.05f64..0.95, side in side()) {
        let profile = ConstraintProfile::new(side, sched).unwrap();
        let w = SymbolWeights::from_schedule(&profile, theta).unwrap();
        let mut last_head = f64::INFINITY;
        let mut last_bound = 0.0;
        for depth in 1..=profile.depth() as u64 + 10 {
            let b = w.k_measure_lower_bound(&profile, depth).unwrap();
            prop_assert!(b.lower_bound > 0.0);
            prop_assert!(b.lower_bound <= b.head);
            // The finite product only shrinks; the certified bound only tightens.
            prop_assert!(b.head <= last_head * (1.0 + 1e-12));
            prop_assert!(b.lower_bound >= last_bound * (1.0 - 1e-12));
            last_head = b.head;
            last_bound = b.lower_bound;
        }
    }

    #[test]
    fn sampled_symbols_are_positive(seed in any::<u64>(), lo in -50i64..0, len in 0i64..200) {
        let w = SymbolWeights::from_schedule(&ConstraintProfile::new(IndexKind::Bilateral, vec![2, 5]).unwrap(), 0.5).unwrap();
        let seq = sample_symbols(&w, lo..=lo + len, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(seq.len() as i64, len + 1);
        prop_assert!(seq.iter().all(|(_, s)| s >= 1));
    }

    #[test]
    fn tallies_partition_the_samples(ms in prop::collection::vec(0u8..3, 0..200)) {
        let mut t = Tally::default();
        for m in &ms {
            t.add([Membership::Inside, Membership::Outside, Membership::Uncertain][*m as usize]);
        }
        prop_assert_eq!(t.total(), ms.len());
        if !ms.is_empty() {
            let outside = t.outside as f64 / ms.len() as f64;
            prop_assert!((t.inside_fraction() + outside + t.uncertain_fraction() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn constant_sequences_shift_to_themselves() {
    let seq = SymbolSequence::constant(-5..=5, 1);
    let moved = shift_symbols(&seq, 3);
    assert!(moved.iter().all(|(_, s)| s == 1));
    assert_eq!(moved.len(), seq.len());
}
