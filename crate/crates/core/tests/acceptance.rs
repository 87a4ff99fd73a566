//! End-to-end acceptance gate. One sequential test runs every criterion in
//! order and prints a PASS line per criterion; any failure aborts the run
//! with a diagnostic. Runtime budgets are enforced in release builds only.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use oagd::corpus::generate;
use oagd::defset::{DefSet, Verdict};
use oagd::dichotomy::{build_chi, classify, Classification};
use oagd::formula::{Atom, Formula, Term};
use oagd::lattice::{
    acl_closure, mat_mul, smith_normal_form, AclMode, IMat, LatticeGroup, QVec,
};
use oagd::model::{DenseKind, Elem, GroundModel};
use oagd::oracle::{
    brute_eval, brute_window, confirm_group_definable, dense_coset_witness, window_periodic,
    Window,
};
use oagd::qe::{eliminate_quantifiers, formula_to_defset};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::process::Command;
use std::time::{Duration, Instant};

fn int(k: i64) -> Elem {
    BigRational::from_integer(BigInt::from(k))
}

fn rat(n: i64, d: i64) -> Elem {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn budget(name: &str, elapsed: Duration, limit_secs: u64) {
    // Debug builds are allowed to exceed the advertised budgets.
    if cfg!(debug_assertions) {
        return;
    }
    assert!(
        elapsed < Duration::from_secs(limit_secs),
        "{name} exceeded its {limit_secs}s budget: {elapsed:?}"
    );
}

/// QE soundness: eliminated output agrees with bounded-quantifier brute
/// evaluation for assignments drawn from the 201-point subgrid
/// {-1000, -990, ..., 1000} of the window.
fn criterion_1() -> Duration {
    let t0 = Instant::now();
    let z = GroundModel::discrete();
    let w = Window::with_radius(z, 1000);
    let corpus = generate(&z, 0xA1, 500, &["x", "y", "z"]);
    assert_eq!(corpus.len(), 500);
    let mut rng = ChaCha8Rng::seed_from_u64(0xA1);
    let mut checks = 0usize;
    for f in &corpus {
        let q = eliminate_quantifiers(f, &z);
        assert!(q.free_vars().is_subset(&f.free_vars()), "QE introduced a variable");
        let free: Vec<String> = f.free_vars().into_iter().collect();
        let rounds = if free.is_empty() { 1 } else { 12 };
        for _ in 0..rounds {
            let mut asg: BTreeMap<String, Elem> = BTreeMap::new();
            for v in &free {
                asg.insert(v.clone(), int(rng.gen_range(0..=200) * 10 - 1000));
            }
            let lhs = brute_eval(f, &asg, &w);
            let rhs = brute_eval(&q, &asg, &w);
            assert_eq!(lhs, rhs, "QE disagreement on {f} at {asg:?}");
            checks += 1;
        }
    }
    assert!(checks >= 500);
    t0.elapsed()
}

fn check_defset_invariants(d: &DefSet) {
    let m = d.modulus();
    assert!(m.is_positive(), "modulus must be positive");
    for c in d.components() {
        assert!(c.interval.lo < c.interval.hi, "degenerate interval");
        assert!(!c.residue.is_negative() && &c.residue < m, "residue out of range");
    }
}

/// Normal-form soundness: defset membership equals the brute window table
/// pointwise on the full window, plus structural invariants.
fn criterion_2() -> (Duration, Vec<Formula>) {
    let t0 = Instant::now();
    let z = GroundModel::discrete();
    let w = Window::with_radius(z, 1000);
    let corpus = generate(&z, 0xB2, 500, &["x"]);
    assert_eq!(corpus.len(), 500);
    for f in &corpus {
        let d = formula_to_defset(f, "x", &BTreeMap::new(), &z)
            .unwrap_or_else(|e| panic!("defset extraction failed on {f}: {e}"));
        check_defset_invariants(&d);
        for (g, truth) in brute_window(f, "x", &w) {
            assert_eq!(d.member(&g), truth, "normal-form disagreement on {f} at {g}");
        }
    }
    (t0.elapsed(), corpus)
}

/// Interval/coset intersection: unbounded discrete intervals meet every
/// coset densely in the window; dense models always produce an explicit
/// witness in (a, b) ∩ (mG + g).
fn criterion_3() -> Duration {
    let t0 = Instant::now();
    let z = GroundModel::discrete();
    let w = Window::with_radius(z, 1000);
    let carrier = w.carrier();
    for m in 1..=12i64 {
        for r in 0..m {
            for a in [-300i64, -123, 0, 77, 300] {
                let above = carrier
                    .iter()
                    .filter(|g| **g > int(a) && z.congruent(g, &int(r), &BigInt::from(m)))
                    .count();
                let below = carrier
                    .iter()
                    .filter(|g| **g < int(a) && z.congruent(g, &int(r), &BigInt::from(m)))
                    .count();
                assert!(above >= 50, "coset {r} mod {m} thin above {a}: {above}");
                assert!(below >= 50, "coset {r} mod {m} thin below {a}: {below}");
            }
        }
    }
    for model in [GroundModel::rationals(), GroundModel::localized(2), GroundModel::localized(3)]
    {
        let mut rng = ChaCha8Rng::seed_from_u64(0xC3);
        for _ in 0..200 {
            let a = rat(rng.gen_range(-200..=200), rng.gen_range(1..=9));
            let b = &a + rat(rng.gen_range(1..=40), rng.gen_range(1..=9));
            let m = BigInt::from(rng.gen_range(1..=12));
            let g = match model {
                GroundModel::Dense(DenseKind::FullRationals) => {
                    rat(rng.gen_range(-60..=60), rng.gen_range(1..=9))
                }
                GroundModel::Dense(DenseKind::LocalizedAt(p)) => {
                    rat(rng.gen_range(-60..=60), i64::from(p).pow(rng.gen_range(0..=3)))
                }
                GroundModel::Discrete => unreachable!(),
            };
            let wit = dense_coset_witness(&model, &a, &b, &m, &g)
                .unwrap_or_else(|| panic!("no witness in ({a}, {b}) ∩ ({m}G + {g})"));
            assert!(a < wit && wit < b, "witness outside interval");
            assert!(model.contains(&wit), "witness outside group");
            assert!(model.congruent(&wit, &g, &m), "witness in wrong coset");
        }
    }
    t0.elapsed()
}

/// The dichotomy: every corpus set gets exactly one verdict; yes-verdicts
/// pass the independent window-periodicity oracle, no-verdicts recover the
/// order on a large interval with a replayable trace.
fn criterion_4(corpus: &[Formula]) -> Duration {
    let t0 = Instant::now();
    let z = GroundModel::discrete();
    let params = BTreeMap::new();
    let mut yes = 0usize;
    let mut no = 0usize;
    for f in corpus.iter().take(200) {
        let d = formula_to_defset(f, "x", &params, &z).unwrap();
        let c = classify(f, "x", &params, &z)
            .unwrap_or_else(|e| panic!("classification failed on {f}: {e}"));
        match c {
            Classification::GroupDefinable { period, added, removed, .. } => {
                yes += 1;
                assert!(matches!(d.is_group_definable(), Verdict::Yes { .. }));
                let p = i64::try_from(&period).expect("period fits i64");
                // The periodicity oracle needs a window long enough to see
                // 3p-bands on both sides past every exception.
                let radius = 1000.max(6 * p + 10);
                let table = brute_window(f, "x", &Window::with_radius(z, radius));
                assert!(
                    window_periodic(&table, p),
                    "periodicity oracle rejects {f} at period {p} ({} exceptions)",
                    added.len() + removed.len()
                );
                assert!(confirm_group_definable(&table, p));
            }
            Classification::OrderRecovered { result } => {
                no += 1;
                assert!(matches!(d.is_group_definable(), Verdict::No { .. }));
                assert!(result.trace.replay(), "trace replay failed on {f}");
                assert!(result.interval.eq_pointwise(result.trace.output()));
                let w = Window::with_radius(z, 1000);
                let members: Vec<Elem> =
                    w.carrier().into_iter().filter(|g| result.interval.member(g)).collect();
                assert!(members.len() >= 100, "interval too small on {f}: {}", members.len());
                let rel = oagd::dichotomy::order_relation(&result);
                // All pairs over an evenly spaced subsample of I ∩ window.
                let stride = (members.len() / 60).max(1);
                let sample: Vec<&Elem> = members.iter().step_by(stride).collect();
                for a in &sample {
                    for b in &sample {
                        assert_eq!(rel.holds(a, b), a < b, "order mismatch at ({a}, {b})");
                    }
                }
            }
        }
    }
    assert_eq!(yes + no, 200);
    assert!(yes > 0 && no > 0, "degenerate corpus split: {yes} yes / {no} no");
    t0.elapsed()
}

/// [0, b] as a definable set: ¬(x < 0) ∧ ¬(b < x).
fn closed_prefix(b: i64, z: &GroundModel) -> DefSet {
    let x = Term::var("x");
    let f = Formula::and(
        Formula::not(Formula::Atom(Atom::Lt(x.clone(), Term::int(0)))),
        Formula::not(Formula::Atom(Atom::Lt(Term::int(b), x))),
    );
    formula_to_defset(&f, "x", &BTreeMap::new(), z).unwrap()
}

/// The unique B ∈ [0, 50] with realized set exactly [0, B], if any.
fn exact_prefix(d: &DefSet, prefixes: &[DefSet]) -> Option<i64> {
    if !d.member(&int(0)) || d.member(&int(-1)) {
        return None;
    }
    let mut b = 0i64;
    while b < 50 && d.member(&int(b + 1)) {
        b += 1;
    }
    if b == 50 && d.member(&int(51)) {
        return None;
    }
    d.eq_pointwise(&prefixes[b as usize]).then_some(b)
}

/// Bounded-interval detector: χ(b, c) holds exactly when b > 0 and
/// φ(·, c) realizes exactly [0, b].
fn criterion_5() -> Duration {
    let t0 = Instant::now();
    let z = GroundModel::discrete();
    let corpus = generate(&z, 0xD5, 50, &["x", "z"]);
    let prefixes: Vec<DefSet> = (0..=50).map(|b| closed_prefix(b, &z)).collect();
    let w100 = Window::with_radius(z, 100);
    let mut hits = 0usize;
    for phi in &corpus {
        let (chi, y) = build_chi(phi, "x", &z).unwrap();
        // Eliminate once with z still free; per-c extraction then only has
        // to bind the parameter and normalize a quantifier-free formula.
        let phi_qf = eliminate_quantifiers(phi, &z);
        let chi_qf = eliminate_quantifiers(&chi, &z);
        for c in -50..=50i64 {
            let mut params = BTreeMap::new();
            params.insert("z".to_string(), int(c));
            let d_c = formula_to_defset(&phi_qf, "x", &params, &z).unwrap();
            let d_chi = formula_to_defset(&chi_qf, &y, &params, &z).unwrap();
            let cand = exact_prefix(&d_c, &prefixes);
            for b in -50..=50i64 {
                let lhs = d_chi.member(&int(b));
                let rhs = b > 0 && cand == Some(b);
                assert_eq!(lhs, rhs, "χ disagreement on {phi} at b={b}, c={c}");
                if lhs {
                    hits += 1;
                }
            }
            // Spot-check the exact sets against brute window tables.
            if c % 10 == 0 {
                let phi_c = phi.subst_var_term("z", &Term::int(c));
                for (g, truth) in brute_window(&phi_c, "x", &w100) {
                    assert_eq!(d_c.member(&g), truth);
                }
                let chi_c = chi.subst_var_term("z", &Term::int(c));
                for (g, truth) in brute_window(&chi_c, &y, &w100) {
                    assert_eq!(d_chi.member(&g), truth, "χ window mismatch at {g}");
                }
            }
        }
    }
    let _ = hits;
    t0.elapsed()
}

fn rand_mat(rng: &mut ChaCha8Rng) -> IMat {
    let rows = rng.gen_range(1..=6);
    let cols = rng.gen_range(1..=6);
    (0..rows)
        .map(|_| (0..cols).map(|_| BigInt::from(rng.gen_range(-20..=20i64))).collect())
        .collect()
}

fn rand_subgroup(rng: &mut ChaCha8Rng) -> LatticeGroup {
    let k = rng.gen_range(1..=3);
    let gens: Vec<QVec> = (0..k)
        .map(|_| {
            (0..3)
                .map(|_| rat(rng.gen_range(-10..=10), rng.gen_range(1..=6)))
                .collect()
        })
        .collect();
    LatticeGroup::new(3, gens).unwrap()
}

fn same_group(a: &LatticeGroup, b: &LatticeGroup) -> bool {
    a.rank() == b.rank()
        && a.basis().iter().all(|v| b.contains(v))
        && b.basis().iter().all(|v| a.contains(v))
}

/// Lattice suite: SNF invariants, quotient cardinalities, and the matroid
/// laws of algebraic closure.
fn criterion_6() -> Duration {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xF6);
    for _ in 0..200 {
        let a = rand_mat(&mut rng);
        let r = smith_normal_form(&a);
        let uav = mat_mul(&mat_mul(&r.u, &a), &r.v);
        assert_eq!(uav, r.s, "U·A·V ≠ S");
        assert_eq!(oagd::lattice::determinant(&r.u).abs(), BigInt::one());
        assert_eq!(oagd::lattice::determinant(&r.v).abs(), BigInt::one());
        let mut prev: Option<BigInt> = None;
        for (i, row) in r.s.iter().enumerate() {
            for (j, e) in row.iter().enumerate() {
                if i != j {
                    assert!(e.is_zero(), "off-diagonal entry in S");
                    continue;
                }
                assert!(!e.is_negative(), "negative diagonal in S");
                if let Some(p) = &prev {
                    assert!(
                        p.is_zero() && e.is_zero() || !p.is_zero() && (e % p).is_zero(),
                        "divisibility chain broken"
                    );
                }
                prev = Some(e.clone());
            }
        }
    }
    for d in 1..=4usize {
        for m in 1..=10i64 {
            let q = LatticeGroup::standard(d).quotient_card(&BigInt::from(m)).unwrap();
            assert_eq!(q, BigInt::from(m).pow(d as u32), "|Z^{d}/{m}Z^{d}|");
        }
    }
    for _ in 0..100 {
        let g = rand_subgroup(&mut rng);
        let m = BigInt::from(rng.gen_range(2..=6i64));
        let q = g.quotient_card(&m).unwrap();
        assert!(q <= m.pow(3), "|G/mG| above m^3");
        if q <= BigInt::from(64) {
            let brute = g.quotient_card_brute(&m).unwrap();
            assert_eq!(BigInt::from(brute), q, "brute coset count disagrees");
        }
    }
    let mut done = 0usize;
    while done < 50 {
        let g = rand_subgroup(&mut rng);
        if g.rank() == 0 {
            continue;
        }
        let pick = |rng: &mut ChaCha8Rng, g: &LatticeGroup| -> QVec {
            let mut v = vec![BigRational::zero(); 3];
            for b in g.basis() {
                let k = BigInt::from(rng.gen_range(-2..=2i64));
                for (vi, bi) in v.iter_mut().zip(b) {
                    *vi += bi * BigRational::from_integer(k.clone());
                }
            }
            v
        };
        let a1 = pick(&mut rng, &g);
        let a2 = pick(&mut rng, &g);
        let set_a = vec![a1.clone()];
        let set_b = vec![a1.clone(), a2.clone()];
        let cl_a = acl_closure(&g, &set_a, AclMode::Dense).unwrap();
        let cl_b = acl_closure(&g, &set_b, AclMode::Dense).unwrap();
        // Closure and monotonicity.
        assert!(set_a.iter().all(|v| cl_a.contains(v)));
        assert!(cl_a.basis().iter().all(|v| cl_b.contains(v)));
        // Idempotence.
        let cl_cl = acl_closure(&g, cl_a.basis(), AclMode::Dense).unwrap();
        assert!(same_group(&cl_a, &cl_cl), "closure not idempotent");
        // Exchange: b ∈ cl(A ∪ {a}) \ cl(A) implies a ∈ cl(A ∪ {b}).
        let b = pick(&mut rng, &g);
        let with_a = acl_closure(&g, &[a1.clone(), a2.clone()], AclMode::Dense).unwrap();
        let base = acl_closure(&g, &[a1.clone()], AclMode::Dense).unwrap();
        if with_a.contains(&b) && !base.contains(&b) {
            let with_b = acl_closure(&g, &[a1.clone(), b.clone()], AclMode::Dense).unwrap();
            assert!(with_b.contains(&a2), "exchange law failed");
        }
        done += 1;
    }
    // The discrete mode closes everything over the named 1.
    let zline = LatticeGroup::standard(1);
    let cl = acl_closure(&zline, &[vec![int(3)]], AclMode::Discrete).unwrap();
    assert!(same_group(&cl, &zline));
    t0.elapsed()
}

/// One full pass over representative artifacts, serialized canonically.
fn artifact_run() -> String {
    let z = GroundModel::discrete();
    let params = BTreeMap::new();
    let mut out: Vec<Value> = Vec::new();
    for f in generate(&z, 0xE7, 30, &["x"]) {
        let d = formula_to_defset(&f, "x", &params, &z).unwrap();
        out.push(d.to_json());
        if let Classification::OrderRecovered { result } = classify(&f, "x", &params, &z).unwrap()
        {
            out.push(result.trace.to_json());
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0xE7);
    for _ in 0..5 {
        out.push(rand_subgroup(&mut rng).to_json());
    }
    serde_json::to_string(&json!(out)).unwrap()
}

/// Determinism: consecutive runs produce byte-identical JSON, both through
/// the library and through the CLI.
fn criterion_7() -> Duration {
    let t0 = Instant::now();
    assert_eq!(artifact_run(), artifact_run(), "library artifacts not byte-stable");
    let cli = |_: ()| {
        let out = Command::new(env!("CARGO_BIN_EXE_oagd"))
            .args([
                "--model", "z",
                "--formula", "(E y (x = y + y)) & -7 < x",
                "--json",
                "classify",
            ])
            .output()
            .expect("CLI run");
        assert!(out.status.success(), "CLI failed: {}", String::from_utf8_lossy(&out.stderr));
        out.stdout
    };
    assert_eq!(cli(()), cli(()), "CLI artifacts not byte-stable");
    t0.elapsed()
}

#[test]
fn acceptance() {
    let t = criterion_1();
    budget("criterion 1", t, 60);
    println!("ACCEPTANCE 1 (qe-soundness): PASS ({t:.2?})");

    let (t, corpus) = criterion_2();
    println!("ACCEPTANCE 2 (normal-form-soundness): PASS ({t:.2?})");

    let t = criterion_3();
    println!("ACCEPTANCE 3 (interval-coset-witnesses): PASS ({t:.2?})");

    let t = criterion_4(&corpus);
    budget("criterion 4", t, 120);
    println!("ACCEPTANCE 4 (dichotomy): PASS ({t:.2?})");

    let t = criterion_5();
    println!("ACCEPTANCE 5 (chi-detector): PASS ({t:.2?})");

    let t = criterion_6();
    budget("criterion 6", t, 30);
    println!("ACCEPTANCE 6 (lattice-suite): PASS ({t:.2?})");

    let t = criterion_7();
    println!("ACCEPTANCE 7 (determinism): PASS ({t:.2?})");
}
