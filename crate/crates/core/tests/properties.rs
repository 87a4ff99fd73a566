//! Cross-module property tests: syntax round trips, Boolean and affine
//! laws on normal forms, and density witnesses.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use oagd::corpus::generate;
use oagd::defset::{AffineOp, BoolOp, DefSet};
use oagd::formula::parse_formula;
use oagd::model::GroundModel;
use oagd::oracle::{dense_coset_witness, Window};
use oagd::qe::formula_to_defset;
use oagd::rational::parse_rat;
use proptest::prelude::*;
use std::collections::BTreeMap;

fn models() -> Vec<GroundModel> {
    vec![
        GroundModel::discrete(),
        GroundModel::rationals(),
        GroundModel::localized(2),
        GroundModel::localized(3),
    ]
}

fn corpus_defsets(model: &GroundModel, seed: u64, n: usize) -> Vec<DefSet> {
    generate(model, seed, n, &["x"])
        .iter()
        .map(|f| formula_to_defset(f, "x", &BTreeMap::new(), model).unwrap())
        .collect()
}

fn small_window(model: GroundModel) -> Window {
    let mut w = Window::standard(model);
    w.radius = 30;
    if matches!(model, GroundModel::Dense(_)) {
        w.height = 16;
    }
    w
}

#[test]
fn parse_print_round_trip() {
    for model in models() {
        for f in generate(&model, 101, 60, &["x"]) {
            let printed = f.to_string();
            let back = parse_formula(&printed, &model)
                .unwrap_or_else(|e| panic!("reparse of {printed:?} failed: {e}"));
            assert_eq!(back, f, "round trip of {printed}");
        }
    }
}

#[test]
fn boolean_laws_pointwise() {
    for model in models() {
        let sets = corpus_defsets(&model, 7, 12);
        let w = small_window(model);
        let carrier = w.carrier();
        for a in &sets[..6] {
            for b in &sets[6..] {
                let union = DefSet::boolean(BoolOp::Union, a, b);
                let inter = DefSet::boolean(BoolOp::Intersect, a, b);
                let diff = DefSet::boolean(BoolOp::Difference, a, b);
                // De Morgan: ¬(A ∪ B) = ¬A ∩ ¬B.
                let lhs = union.complement();
                let rhs = DefSet::boolean(BoolOp::Intersect, &a.complement(), &b.complement());
                assert!(lhs.eq_pointwise(&rhs));
                for g in &carrier {
                    assert_eq!(union.member(g), a.member(g) || b.member(g));
                    assert_eq!(inter.member(g), a.member(g) && b.member(g));
                    assert_eq!(diff.member(g), a.member(g) && !b.member(g));
                    assert_eq!(a.complement().member(g), !a.member(g));
                }
            }
        }
    }
}

#[test]
fn affine_round_trips() {
    for model in models() {
        let sets = corpus_defsets(&model, 21, 8);
        let shift = BigRational::from_integer(BigInt::from(5));
        for d in &sets {
            let back = d
                .affine(&AffineOp::Translate(shift.clone()))
                .affine(&AffineOp::Translate(-&shift));
            assert!(back.eq_pointwise(d), "translate round trip");
            let back = d.affine(&AffineOp::Reflect).affine(&AffineOp::Reflect);
            assert!(back.eq_pointwise(d), "reflect is an involution");
            // Scaling then dividing recovers the set exactly.
            let n = BigInt::from(3);
            let back = d.affine(&AffineOp::ScaleBy(n.clone())).affine(&AffineOp::DivideBy(n));
            assert!(back.eq_pointwise(d), "scale/divide round trip");
        }
    }
}

#[test]
fn double_complement_and_membership() {
    for model in models() {
        let w = small_window(model);
        for d in corpus_defsets(&model, 33, 10) {
            let dd = d.complement().complement();
            assert!(dd.eq_pointwise(&d));
            for g in w.carrier() {
                assert_eq!(dd.member(&g), d.member(&g));
            }
        }
    }
}

#[test]
fn dense_cosets_meet_every_interval() {
    // Density of cosets: every nonempty open interval meets every coset.
    for model in [GroundModel::rationals(), GroundModel::localized(2), GroundModel::localized(3)]
    {
        for (a, b) in [("0", "1/5"), ("-7/3", "-2"), ("99", "100")] {
            let a = parse_rat(a).unwrap();
            let b = parse_rat(b).unwrap();
            for m in 2..=12i64 {
                for g in 0..m {
                    let m = BigInt::from(m);
                    let g = BigRational::from_integer(BigInt::from(g));
                    let wit = dense_coset_witness(&model, &a, &b, &m, &g)
                        .expect("open interval must meet the coset");
                    assert!(a < wit && wit < b);
                    assert!(model.contains(&wit));
                    assert!(model.congruent(&wit, &g, &m));
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn rational_format_round_trip(p in -1000i64..1000, q in 1i64..1000) {
        let r = BigRational::new(BigInt::from(p), BigInt::from(q));
        let s = oagd::rational::format_rat(&r);
        prop_assert_eq!(parse_rat(&s).unwrap(), r);
    }

    #[test]
    fn canon_residue_is_canonical(num in -500i64..500, m in 1i64..13) {
        // The canonical residue lies in [0, eff) and is congruent to the input.
        for model in models() {
            let g = BigRational::from_integer(BigInt::from(num));
            let m = BigInt::from(m);
            let eff = model.effective_modulus(&m);
            let r = model.canon_residue(&g, &eff);
            prop_assert!(r >= BigInt::zero() && r < eff.clone().max(BigInt::one()));
            prop_assert!(model.congruent(&g, &BigRational::from_integer(r), &m));
        }
    }

    #[test]
    fn normalized_membership_matches_interval_congruence(
        lo in -40i64..40, len in 1i64..30, m in 2i64..10, r in 0i64..10, g in -60i64..60
    ) {
        // A single interval-coset piece realizes exactly what it says.
        let z = GroundModel::discrete();
        let src = format!("{} < x & x < {} & x =_{} {}", lo, lo + len, m, r % m);
        let f = parse_formula(&src, &z).unwrap();
        let d = formula_to_defset(&f, "x", &BTreeMap::new(), &z).unwrap();
        let gq = BigRational::from_integer(BigInt::from(g));
        let expect = g > lo && g < lo + len && (g - r % m).rem_euclid(m) == 0;
        prop_assert_eq!(d.member(&gq), expect);
    }
}
