//! The dichotomy driver: every definable unary set either is definable
//! from the group structure alone, or yields an infinite definable initial
//! interval `(0, b)` from which the order can be recovered.
//!
//! The interval extraction composes only translations, reflections,
//! divisions and Boolean operations on the input set, so the output is
//! definable from the input and addition alone. Every step is recorded in
//! a replayable trace.

use crate::defset::{
    normalize, AffineOp, BoolOp, DefSet, IntervalQ, RawPiece, Verdict,
};
use crate::formula::{fresh_var, Atom, Formula, Term};
use crate::model::{DenseKind, Elem, GroundModel};
use crate::qe::{formula_to_defset, QeError};
use crate::rational::{format_rat, ExtQRat};
use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde_json::{json, Value};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DichotomyError {
    #[error("interval extraction requires a set that is not definable from the group alone")]
    GroupDefinableInput,
    #[error("this construction mentions the discrete unit and needs a discrete model")]
    DenseModel,
    #[error(transparent)]
    Qe(#[from] QeError),
}

/// A single reduction applied to the working set.
#[derive(Debug, Clone, PartialEq)]
pub enum Step {
    /// Remove the finitely many isolated points.
    DropPoints,
    /// Intersect with the coset `mG + residue` whose fiber resists a
    /// periodic description.
    CosetRestrict { modulus: BigInt, residue: BigInt },
    Translate { by: Elem },
    DivideBy { m: BigInt },
    /// Complement, then remove the finitely many isolated points; turns a
    /// set unbounded below into one bounded below.
    ComplementSwap,
    /// `D ∩ (-D + b)`: the discrete final intersection.
    ReflectIntersect { b: Elem },
    /// `(D - c) ∩ (-D + c)`: the symmetric dense neighborhood around the
    /// chosen center `c`.
    DenseCenter { c: Elem },
    /// From `E = (-d, d)`: the strict-inclusion comparison of the family
    /// `C_g = E ∩ (E - g)` against `C_e` carves out exactly `(0, e)`.
    DenseSecond { e: Elem },
}

impl Step {
    pub fn tag(&self) -> &'static str {
        match self {
            Step::DropPoints => "drop-points",
            Step::CosetRestrict { .. } => "coset-restriction",
            Step::Translate { .. } => "translate",
            Step::DivideBy { .. } => "divide-by-m",
            Step::ComplementSwap => "complement-swap",
            Step::ReflectIntersect { .. } => "final-intersection",
            Step::DenseCenter { .. } => "dense-midpoint",
            Step::DenseSecond { .. } => "final-intersection",
        }
    }

    pub fn justification(&self) -> String {
        match self {
            Step::DropPoints => "remove isolated points so every piece is infinite".to_string(),
            Step::CosetRestrict { modulus, residue } => format!(
                "restrict to the coset {}G + {}, whose fiber is not definable from the group alone",
                modulus, residue
            ),
            Step::Translate { by } => format!("translate by {}", format_rat(by)),
            Step::DivideBy { m } => format!("divide by {m}: pass to the preimage under multiplication by {m}"),
            Step::ComplementSwap => {
                "the set is unbounded below; its complement, less finitely many points, is bounded below"
                    .to_string()
            }
            Step::ReflectIntersect { b } => format!(
                "intersect with the reflection translated by {}: D ∩ (-D + {}) realizes (0, {})",
                format_rat(b),
                format_rat(b),
                format_rat(b)
            ),
            Step::DenseCenter { c } => format!(
                "center at {}: (D - {}) ∩ (-D + {}) is a symmetric interval (-d, d)",
                format_rat(c),
                format_rat(c),
                format_rat(c)
            ),
            Step::DenseSecond { e } => format!(
                "compare the family C_g = E ∩ (E - g) against C_{}: the elements with C_g ⊋ C_e form (0, {})",
                format_rat(e),
                format_rat(e)
            ),
        }
    }

    /// The set-level effect of the step.
    pub fn apply(&self, d: &DefSet) -> DefSet {
        let model = d.model();
        match self {
            Step::DropPoints => drop_points(d),
            Step::CosetRestrict { modulus, residue } => {
                let coset = normalize(
                    model,
                    vec![RawPiece::Coset {
                        interval: IntervalQ::full(),
                        residue: BigRational::from_integer(residue.clone()),
                        modulus: modulus.clone(),
                    }],
                );
                DefSet::boolean(BoolOp::Intersect, d, &coset)
            }
            Step::Translate { by } => d.affine(&AffineOp::Translate(by.clone())),
            Step::DivideBy { m } => d.affine(&AffineOp::DivideBy(m.clone())),
            Step::ComplementSwap => drop_points(&d.complement()),
            Step::ReflectIntersect { b } => {
                let refl = d.affine(&AffineOp::Reflect).affine(&AffineOp::Translate(b.clone()));
                DefSet::boolean(BoolOp::Intersect, d, &refl)
            }
            Step::DenseCenter { c } => {
                let left = d.affine(&AffineOp::Translate(-c));
                let right = d.affine(&AffineOp::Reflect).affine(&AffineOp::Translate(c.clone()));
                DefSet::boolean(BoolOp::Intersect, &left, &right)
            }
            Step::DenseSecond { e } => normalize(
                model,
                vec![RawPiece::interval(IntervalQ::new(
                    ExtQRat::Fin(BigRational::zero()),
                    ExtQRat::Fin(e.clone()),
                ))],
            ),
        }
    }
}

fn drop_points(d: &DefSet) -> DefSet {
    let points = normalize(
        d.model(),
        d.singletons().iter().cloned().map(RawPiece::Singleton).collect(),
    );
    DefSet::boolean(BoolOp::Difference, d, &points)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub step: Step,
    pub defset_after: DefSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractionTrace {
    pub input: DefSet,
    pub steps: Vec<TraceStep>,
}

impl ExtractionTrace {
    /// Re-applies every step to the input and checks each intermediate
    /// set pointwise against the recorded one.
    pub fn replay(&self) -> bool {
        let mut cur = self.input.clone();
        for s in &self.steps {
            cur = s.step.apply(&cur);
            if !cur.eq_pointwise(&s.defset_after) {
                return false;
            }
        }
        true
    }

    pub fn output(&self) -> &DefSet {
        self.steps.last().map(|s| &s.defset_after).unwrap_or(&self.input)
    }

    pub fn to_json(&self) -> Value {
        Value::Array(
            self.steps
                .iter()
                .map(|s| {
                    json!({
                        "step_tag": s.step.tag(),
                        "justification": s.step.justification(),
                        "defset_after": s.defset_after.to_json(),
                    })
                })
                .collect(),
        )
    }
}

/// An initial interval `(0, b)` definable from the input set and addition.
#[derive(Debug, Clone)]
pub struct IntervalResult {
    /// `None` means `b = ∞`.
    pub b: Option<Elem>,
    pub interval: DefSet,
    pub trace: ExtractionTrace,
}

/// Lemma-style interval extraction. The input must not be definable from
/// the group structure alone; the output realizes an infinite interval
/// `(0, b)` with a replayable trace of the reductions used.
pub fn extract_interval(d: &DefSet) -> Result<IntervalResult, DichotomyError> {
    if d.is_group_definable().is_yes() {
        return Err(DichotomyError::GroupDefinableInput);
    }
    let model = d.model();
    let mut trace = ExtractionTrace { input: d.clone(), steps: Vec::new() };
    let mut cur = d.clone();
    let push = |trace: &mut ExtractionTrace, cur: &mut DefSet, step: Step| {
        let next = step.apply(cur);
        trace.steps.push(TraceStep { step, defset_after: next.clone() });
        *cur = next;
    };

    // Every remaining piece should be infinite.
    if !cur.singletons().is_empty() {
        push(&mut trace, &mut cur, Step::DropPoints);
    }

    // Restrict to the first coset whose fiber is not group-definable.
    let m = cur.modulus().clone();
    if m > BigInt::one() {
        let mut j0 = None;
        let mut r = BigInt::zero();
        while &r < &m {
            let fiber = Step::CosetRestrict { modulus: m.clone(), residue: r.clone() }.apply(&cur);
            if !fiber.is_group_definable().is_yes() {
                j0 = Some(r.clone());
                break;
            }
            r += 1;
        }
        let j0 = j0.expect("a non-group-definable set has a non-group-definable fiber");
        push(&mut trace, &mut cur, Step::CosetRestrict { modulus: m.clone(), residue: j0.clone() });
        if !j0.is_zero() {
            push(
                &mut trace,
                &mut cur,
                Step::Translate { by: -BigRational::from_integer(j0) },
            );
        }
        push(&mut trace, &mut cur, Step::DivideBy { m });
    }
    debug_assert!(cur.modulus().is_one());
    // Overlapping intervals are merged by the normal form itself.

    // Arrange for a set bounded from below.
    let unbounded_below = cur
        .components()
        .first()
        .map(|c| c.interval.lo == ExtQRat::NegInf)
        .unwrap_or(false);
    if unbounded_below {
        push(&mut trace, &mut cur, Step::ComplementSwap);
    }

    let first = cur.components().first().expect("an infinite piece remains").clone();
    let lo = first.interval.lo.as_finite().expect("bounded below").clone();

    let b = match model {
        GroundModel::Discrete => {
            // Translate so that the minimum of the first interval is 1.
            let a: BigInt = lo.floor().to_integer() + 1;
            if !a.is_one() {
                push(
                    &mut trace,
                    &mut cur,
                    Step::Translate { by: BigRational::from_integer(BigInt::one() - &a) },
                );
            }
            let first = cur.components().first().expect("nonempty").clone();
            match first.interval.hi {
                ExtQRat::PosInf => None,
                ExtQRat::Fin(h) => {
                    // Unreachable over the standard integers (an infinite
                    // discrete interval bounded below is unbounded above),
                    // kept for completeness of the construction.
                    let bmax = h.ceil().to_integer() - 1;
                    let b = BigRational::from_integer(bmax);
                    push(&mut trace, &mut cur, Step::ReflectIntersect { b: b.clone() });
                    Some(b)
                }
                ExtQRat::NegInf => unreachable!("hi >= lo"),
            }
        }
        GroundModel::Dense(_) => {
            // Pick the deterministic center c in the lower half of the
            // first interval, then carve (0, e) out of E = (-d, d).
            let c = match &first.interval.hi {
                ExtQRat::PosInf => min_height_element(&model, &lo, None),
                ExtQRat::Fin(h) => {
                    let mid = (&lo + h) / BigRational::from_integer(BigInt::from(2));
                    min_height_element(&model, &lo, Some(&mid))
                }
                ExtQRat::NegInf => unreachable!("hi >= lo"),
            };
            push(&mut trace, &mut cur, Step::DenseCenter { c: c.clone() });
            let d_radius = &c - &lo;
            debug_assert!(cur.eq_pointwise(&normalize(
                model,
                vec![RawPiece::interval(IntervalQ::new(
                    ExtQRat::Fin(-&d_radius),
                    ExtQRat::Fin(d_radius.clone()),
                ))],
            )));
            let e = min_height_element(&model, &BigRational::zero(), Some(&d_radius));
            push(&mut trace, &mut cur, Step::DenseSecond { e: e.clone() });
            Some(e)
        }
    };

    debug_assert!(!cur.member(&BigRational::zero()));
    debug_assert!(!cur.is_empty());
    Ok(IntervalResult { b, interval: cur, trace })
}

/// The element of `(lo, hi) ∩ G` of minimal height, ties broken by value;
/// the height of a reduced `p/q` is `max(|p|, |q|)`. `hi = None` means
/// `+∞`. Dense models only; termination is guaranteed because a nonempty
/// open interval always meets a dense group.
fn min_height_element(model: &GroundModel, lo: &BigRational, hi: Option<&BigRational>) -> Elem {
    let in_range = |x: &BigRational| x > lo && hi.map(|h| x < h).unwrap_or(true);
    let mut h = BigInt::one();
    loop {
        let mut denoms: Vec<BigInt> = Vec::new();
        match model {
            GroundModel::Dense(DenseKind::FullRationals) => {
                let mut q = BigInt::one();
                while q <= h {
                    denoms.push(q.clone());
                    q += 1;
                }
            }
            GroundModel::Dense(DenseKind::LocalizedAt(p)) => {
                let p = BigInt::from(*p);
                let mut q = BigInt::one();
                while q <= h {
                    denoms.push(q.clone());
                    q *= &p;
                }
            }
            GroundModel::Discrete => denoms.push(BigInt::one()),
        }
        let mut best: Option<BigRational> = None;
        for q in denoms {
            let mut u = -h.clone();
            while u <= h {
                // Height exactly h, in reduced form.
                if u.abs().max(q.clone()) == h && u.gcd(&q).is_one() {
                    let x = BigRational::new(u.clone(), q.clone());
                    if in_range(&x) && best.as_ref().map(|b| &x < b).unwrap_or(true) {
                        best = Some(x);
                    }
                }
                u += 1;
            }
        }
        if let Some(b) = best {
            return b;
        }
        h += 1;
    }
}

/// The order recovered from an extracted interval:
/// `R(x, y) ⟺ y - x ∈ (0, b)`, which agrees with `<` on the interval.
#[derive(Debug, Clone)]
pub struct OrderRelation {
    interval: DefSet,
}

pub fn order_relation(i: &IntervalResult) -> OrderRelation {
    OrderRelation { interval: i.interval.clone() }
}

impl OrderRelation {
    pub fn holds(&self, x: &Elem, y: &Elem) -> bool {
        self.interval.member(&(y - x))
    }

    /// `R(x1, x2)` as a formula in the pure group language with
    /// congruences.
    pub fn formula(&self, x1: &str, x2: &str) -> Formula {
        let diff = Term::var(x2).sub(&Term::var(x1));
        defset_formula_at(&self.interval, &diff)
    }
}

/// A quantifier-free formula whose realized set at `t` is membership of
/// `t` in `d`.
pub fn defset_formula_at(d: &DefSet, t: &Term) -> Formula {
    let mut disjuncts: Vec<Formula> = Vec::new();
    for s in d.singletons() {
        disjuncts.push(Formula::Atom(Atom::Eq(t.clone(), Term::constant(s.clone()))));
    }
    let m = d.modulus();
    for c in d.components() {
        let mut conj: Vec<Formula> = Vec::new();
        if let ExtQRat::Fin(lo) = &c.interval.lo {
            conj.push(Formula::Atom(Atom::Lt(Term::constant(lo.clone()), t.clone())));
        }
        if let ExtQRat::Fin(hi) = &c.interval.hi {
            conj.push(Formula::Atom(Atom::Lt(t.clone(), Term::constant(hi.clone()))));
        }
        if m > &BigInt::one() {
            conj.push(Formula::Atom(Atom::Cong(
                m.clone(),
                t.clone(),
                Term::constant(BigRational::from_integer(c.residue.clone())),
            )));
        }
        disjuncts.push(Formula::and_all(conj));
    }
    Formula::or_all(disjuncts)
}

/// The bounded-interval detector χ(y, z) for a formula φ(x, z̄) over a
/// discrete model: χ(b, c) holds iff b > 0 and φ(·, c) realizes exactly
/// [0, b]. Returns the formula and the name chosen for y.
pub fn build_chi(
    phi: &Formula,
    x: &str,
    model: &GroundModel,
) -> Result<(Formula, String), DichotomyError> {
    if !matches!(model, GroundModel::Discrete) {
        return Err(DichotomyError::DenseModel);
    }
    let mut avoid: BTreeSet<String> = phi.all_vars();
    avoid.insert(x.to_string());
    let y = fresh_var("y", &avoid, &BTreeSet::new());
    avoid.insert(y.clone());
    let w = fresh_var("w", &avoid, &BTreeSet::new());

    let at = |t: Term| phi.subst_var_term(x, &t);
    let yv = Term::var(&y);
    let wv = Term::var(&w);

    let chi1 = Formula::and_all(vec![
        at(Term::int(0)),
        at(yv.clone()),
        Formula::not(at(Term::int(-1))),
        Formula::not(at(yv.add(&Term::int(1)))),
        Formula::not(at(yv.add(&yv))),
    ]);
    let chi2 = Formula::forall(
        &w,
        Formula::implies(
            Formula::and(
                Formula::not(Formula::Atom(Atom::Eq(wv.clone(), Term::int(0)))),
                at(wv.clone()),
            ),
            at(wv.sub(&Term::int(1))),
        ),
    );
    let chi3 = Formula::forall(
        &w,
        Formula::implies(
            Formula::and(
                Formula::not(Formula::Atom(Atom::Eq(wv.clone(), yv.clone()))),
                at(wv.clone()),
            ),
            at(wv.add(&Term::int(1))),
        ),
    );
    Ok((Formula::and(Formula::and(chi1, chi2), chi3), y))
}

/// ψ(x) := ∃y z̄ (χ(y, z̄) ∧ φ(x, z̄)). Whenever nonempty, its realized set
/// is convex with minimum 0.
pub fn build_psi(
    phi: &Formula,
    x: &str,
    model: &GroundModel,
) -> Result<Formula, DichotomyError> {
    let (chi, y) = build_chi(phi, x, model)?;
    let mut body = Formula::and(chi, phi.clone());
    let mut binders: Vec<String> = phi
        .free_vars()
        .into_iter()
        .filter(|v| v != x)
        .collect();
    binders.push(y);
    for v in binders.into_iter().rev() {
        body = Formula::exists(&v, body);
    }
    Ok(body)
}

/// Experimental dense analog: θ(z̄) := ∃y (0 < y ∧ ∀x (φ(x, z̄) ↔ 0 < x < y)).
/// At a standard model this is subsumed by direct evaluation; it is
/// provided only as a formula constructor.
pub fn build_theta(phi: &Formula, x: &str) -> Formula {
    let mut avoid: BTreeSet<String> = phi.all_vars();
    avoid.insert(x.to_string());
    let y = fresh_var("y", &avoid, &BTreeSet::new());
    let yv = Term::var(&y);
    let xv = Term::var(x);
    let range = Formula::and(
        Formula::Atom(Atom::Lt(Term::int(0), xv.clone())),
        Formula::Atom(Atom::Lt(xv, yv.clone())),
    );
    Formula::exists(
        &y,
        Formula::and(
            Formula::Atom(Atom::Lt(Term::int(0), yv)),
            Formula::forall(x, Formula::iff(phi.clone(), range)),
        ),
    )
}

/// Outcome of the dichotomy: exactly one branch for every definable set.
#[derive(Debug, Clone)]
pub enum Classification {
    /// The set is a finite symmetric difference away from a union of
    /// cosets of `period·G`.
    GroupDefinable {
        period: BigInt,
        core_residues: Vec<BigInt>,
        added: Vec<Elem>,
        removed: Vec<Elem>,
    },
    /// The set yields an infinite initial interval and, with it, the
    /// restriction of the order.
    OrderRecovered { result: IntervalResult },
}

pub fn classify(
    f: &Formula,
    x: &str,
    params: &BTreeMap<String, Elem>,
    model: &GroundModel,
) -> Result<Classification, DichotomyError> {
    let d = formula_to_defset(f, x, params, model)?;
    match d.is_group_definable() {
        Verdict::Yes { period, core_residues, added, removed } => {
            Ok(Classification::GroupDefinable { period, core_residues, added, removed })
        }
        Verdict::No { .. } => {
            let result = extract_interval(&d)?;
            Ok(Classification::OrderRecovered { result })
        }
    }
}
