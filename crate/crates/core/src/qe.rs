//! Quantifier elimination over the three standard models, and extraction of
//! the canonical unary normal form from quantifier-free formulas.
//!
//! The discrete model uses the period-lcm/least-witness elimination for
//! linear integer arithmetic with divisibility constraints. The dense models
//! use endpoint substitution (Fourier–Motzkin pairing), with congruence
//! compatibility tracked by expanding the eliminated variable over the
//! residue classes of the lcm of the effective moduli; every open interval
//! meets every such coset, so the order and congruence parts decouple.

use crate::defset::{normalize, BoolOp, DefSet, IntervalQ, RawPiece};
use crate::formula::{Atom, EvalError, Formula, SubstError, Term};
use crate::model::{Elem, GroundModel};
use crate::rational::ExtQRat;
use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum QeError {
    #[error("free variable `{0}` is not the distinguished variable")]
    FreeVariable(String),
    #[error(transparent)]
    Subst(#[from] SubstError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Rewrites `f` into an equivalent quantifier-free formula.
pub fn eliminate_quantifiers(f: &Formula, model: &GroundModel) -> Formula {
    match f {
        Formula::True | Formula::False | Formula::Atom(_) => f.clone(),
        Formula::Not(g) => Formula::not(eliminate_quantifiers(g, model)),
        Formula::And(a, b) => Formula::and(
            eliminate_quantifiers(a, model),
            eliminate_quantifiers(b, model),
        ),
        Formula::Or(a, b) => Formula::or(
            eliminate_quantifiers(a, model),
            eliminate_quantifiers(b, model),
        ),
        Formula::Implies(a, b) => Formula::implies(
            eliminate_quantifiers(a, model),
            eliminate_quantifiers(b, model),
        ),
        Formula::Iff(a, b) => Formula::iff(
            eliminate_quantifiers(a, model),
            eliminate_quantifiers(b, model),
        ),
        Formula::Exists(v, g) => {
            let g = eliminate_quantifiers(g, model);
            eliminate_exists(v, &g, model)
        }
        Formula::Forall(v, g) => {
            // ∀ is ¬∃¬.
            let g = eliminate_quantifiers(g, model);
            Formula::not(eliminate_exists(v, &Formula::not(g), model))
        }
    }
}

/// Extracts the canonical normal form of `{g : f(g)}` from a
/// quantifier-free formula whose only free variable is `x`.
pub fn qfree_to_defset(f: &Formula, x: &str, model: &GroundModel) -> Result<DefSet, QeError> {
    debug_assert!(f.is_quantifier_free());
    for v in f.free_vars() {
        if v != x {
            return Err(QeError::FreeVariable(v));
        }
    }
    build_defset(f, x, model)
}

/// Below this node count a subformula goes through the DNF pipeline;
/// above it the normal form is assembled compositionally with Boolean
/// operations on already-normalized sets, which sidesteps the exponential
/// cost of distributing a negation over a huge eliminated disjunction.
const DNF_FAST_PATH: isize = 256;

/// Node-count check with early exit: the remaining budget, negative once
/// exhausted.
fn size_budget(f: &Formula, budget: isize) -> isize {
    if budget < 0 {
        return budget;
    }
    match f {
        Formula::True | Formula::False | Formula::Atom(_) => budget - 1,
        Formula::Not(g) | Formula::Exists(_, g) | Formula::Forall(_, g) => {
            size_budget(g, budget - 1)
        }
        Formula::And(a, b)
        | Formula::Or(a, b)
        | Formula::Implies(a, b)
        | Formula::Iff(a, b) => size_budget(b, size_budget(a, budget - 1)),
    }
}

fn build_defset(f: &Formula, x: &str, model: &GroundModel) -> Result<DefSet, QeError> {
    if size_budget(f, DNF_FAST_PATH) >= 0 {
        let mut pieces: Vec<RawPiece> = Vec::new();
        for conjunct in to_dnf(f, model) {
            pieces.extend(conjunct_to_piece(&conjunct, x, model)?);
        }
        return Ok(normalize(*model, pieces));
    }
    match f {
        Formula::Not(g) => Ok(build_defset(g, x, model)?.complement()),
        Formula::And(a, b) => Ok(DefSet::boolean(
            BoolOp::Intersect,
            &build_defset(a, x, model)?,
            &build_defset(b, x, model)?,
        )),
        Formula::Or(..) => {
            // Whole OR-spines union in one renormalization pass.
            let mut leaves: Vec<&Formula> = Vec::new();
            collect_or(f, &mut leaves);
            let leaves: BTreeSet<&Formula> = leaves.into_iter().collect();
            let mut pieces: Vec<RawPiece> = Vec::new();
            for leaf in leaves {
                if size_budget(leaf, DNF_FAST_PATH) >= 0 {
                    // Raw pieces go straight into the shared pool; only
                    // the single union below pays for a renormalization.
                    for conjunct in to_dnf(leaf, model) {
                        pieces.extend(conjunct_to_piece(&conjunct, x, model)?);
                    }
                } else {
                    append_pieces(&build_defset(leaf, x, model)?, &mut pieces);
                }
            }
            Ok(normalize(*model, pieces))
        }
        Formula::Implies(a, b) => Ok(DefSet::boolean(
            BoolOp::Union,
            &build_defset(a, x, model)?.complement(),
            &build_defset(b, x, model)?,
        )),
        Formula::Iff(a, b) => {
            let da = build_defset(a, x, model)?;
            let db = build_defset(b, x, model)?;
            Ok(DefSet::boolean(
                BoolOp::Union,
                &DefSet::boolean(BoolOp::Intersect, &da, &db),
                &DefSet::boolean(BoolOp::Intersect, &da.complement(), &db.complement()),
            ))
        }
        // Leaves are always under the size threshold.
        Formula::True | Formula::False | Formula::Atom(_) => unreachable!(),
        Formula::Exists(..) | Formula::Forall(..) => {
            unreachable!("normal forms are extracted from quantifier-free formulas")
        }
    }
}

fn collect_or<'a>(f: &'a Formula, out: &mut Vec<&'a Formula>) {
    match f {
        Formula::Or(a, b) => {
            collect_or(a, out);
            collect_or(b, out);
        }
        _ => out.push(f),
    }
}

fn append_pieces(d: &DefSet, out: &mut Vec<RawPiece>) {
    for g in d.singletons() {
        out.push(RawPiece::Singleton(g.clone()));
    }
    for c in d.components() {
        out.push(RawPiece::Coset {
            interval: c.interval.clone(),
            residue: BigRational::from_integer(c.residue.clone()),
            modulus: d.modulus().clone(),
        });
    }
}

/// Full pipeline: bind parameters, eliminate quantifiers, extract the
/// normal form in `x`.
pub fn formula_to_defset(
    f: &Formula,
    x: &str,
    params: &BTreeMap<String, Elem>,
    model: &GroundModel,
) -> Result<DefSet, QeError> {
    let bound = f.substitute_params(params, model)?;
    let qf = eliminate_quantifiers(&bound, model);
    qfree_to_defset(&qf, x, model)
}

// ---------------------------------------------------------------------------
// NNF/DNF with the normal-form rewrite rules
// ---------------------------------------------------------------------------

/// All atoms are canonicalized to `d ⋈ 0` with `d` a term; congruence
/// moduli are replaced by their effective index, trivial congruences by
/// truth values, and ground atoms are evaluated away.
fn canon_atom(a: &Atom, model: &GroundModel) -> CanonAtom {
    match a {
        Atom::Eq(s, t) => {
            let d = s.sub(t);
            if d.is_constant() {
                return CanonAtom::Const(d.const_part().is_zero());
            }
            CanonAtom::Atom(Atom::Eq(sym_min(d), Term::zero()))
        }
        Atom::Lt(s, t) => {
            let d = s.sub(t);
            if d.is_constant() {
                return CanonAtom::Const(d.const_part().is_negative());
            }
            CanonAtom::Atom(Atom::Lt(d, Term::zero()))
        }
        Atom::Cong(m, s, t) => {
            let eff = model.effective_modulus(m);
            if eff.is_one() {
                return CanonAtom::Const(true);
            }
            let d = s.sub(t);
            if d.is_constant() {
                return CanonAtom::Const(model.congruent(
                    d.const_part(),
                    &BigRational::zero(),
                    &eff,
                ));
            }
            // Canonical shape `v ≡ r` with `v` constant-free and `r` the
            // canonical residue in [0, eff); syntactically distinct
            // spellings of the same class then collide, and two atoms on
            // the same `v` with different residues are visibly
            // contradictory.
            let c = d.const_part().clone();
            let mut v = d.sub(&Term::constant(c.clone()));
            let mut rhs = -c;
            let n = v.neg();
            if n < v {
                rhs = -rhs;
                v = n;
            }
            let r = model.canon_residue(&rhs, &eff);
            CanonAtom::Atom(Atom::Cong(
                eff,
                v,
                Term::constant(BigRational::from_integer(r)),
            ))
        }
    }
}

enum CanonAtom {
    Const(bool),
    Atom(Atom),
}

/// Equality and congruence are symmetric in `d` vs `-d`; pick the smaller
/// by term order so syntactically different spellings dedup.
fn sym_min(d: Term) -> Term {
    let n = d.neg();
    if n < d {
        n
    } else {
        d
    }
}

/// A literal of the conjunct language: a canonical atom or, for
/// congruences only, its negation. Order and equality negations expand
/// into positive atoms, but a negated congruence with a large effective
/// modulus would expand into that many residue conjuncts, so it is
/// carried as a literal and only expanded at the very end, piece by
/// piece.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
struct Lit {
    atom: Atom,
    neg: bool,
}

impl Lit {
    fn pos(atom: Atom) -> Lit {
        Lit { atom, neg: false }
    }
}

type Conjunct = BTreeSet<Lit>;

/// Disjunctive normal form after the polarity rewrites; every atom is in
/// canonical `d ⋈ 0` shape. The empty disjunction is false; an empty
/// conjunct is true.
fn to_dnf(f: &Formula, model: &GroundModel) -> Vec<Conjunct> {
    let raw = dnf(f, true, model);
    subsume(raw)
}

fn dnf(f: &Formula, pos: bool, model: &GroundModel) -> Vec<Conjunct> {
    match f {
        Formula::True => constant(pos),
        Formula::False => constant(!pos),
        Formula::Atom(a) => {
            if pos {
                atom_pos(a, model)
            } else {
                atom_neg(a, model)
            }
        }
        Formula::Not(g) => dnf(g, !pos, model),
        Formula::And(a, b) => {
            if pos {
                cross(dnf(a, true, model), dnf(b, true, model), model)
            } else {
                union(dnf(a, false, model), dnf(b, false, model))
            }
        }
        Formula::Or(a, b) => {
            if pos {
                union(dnf(a, true, model), dnf(b, true, model))
            } else {
                cross(dnf(a, false, model), dnf(b, false, model), model)
            }
        }
        Formula::Implies(a, b) => {
            if pos {
                union(dnf(a, false, model), dnf(b, true, model))
            } else {
                cross(dnf(a, true, model), dnf(b, false, model), model)
            }
        }
        Formula::Iff(a, b) => {
            let (pa, na) = (dnf(a, true, model), dnf(a, false, model));
            let (pb, nb) = (dnf(b, true, model), dnf(b, false, model));
            if pos {
                union(cross(pa, pb, model), cross(na, nb, model))
            } else {
                union(cross(pa, nb, model), cross(na, pb, model))
            }
        }
        Formula::Exists(..) | Formula::Forall(..) => {
            unreachable!("DNF is only applied to quantifier-free formulas")
        }
    }
}

fn constant(v: bool) -> Vec<Conjunct> {
    if v {
        vec![Conjunct::new()]
    } else {
        Vec::new()
    }
}

fn atom_pos(a: &Atom, model: &GroundModel) -> Vec<Conjunct> {
    match canon_atom(a, model) {
        CanonAtom::Const(v) => constant(v),
        CanonAtom::Atom(a) => vec![Conjunct::from([Lit::pos(a)])],
    }
}

fn atom_neg(a: &Atom, model: &GroundModel) -> Vec<Conjunct> {
    match a {
        // ¬(s = t) ⇝ (s < t) ∨ (t < s)
        Atom::Eq(s, t) => union(
            atom_pos(&Atom::Lt(s.clone(), t.clone()), model),
            atom_pos(&Atom::Lt(t.clone(), s.clone()), model),
        ),
        // ¬(s < t) ⇝ (t < s) ∨ (s = t)
        Atom::Lt(s, t) => union(
            atom_pos(&Atom::Lt(t.clone(), s.clone()), model),
            atom_pos(&Atom::Eq(s.clone(), t.clone()), model),
        ),
        // ¬(s ≡ₘ t) stays a literal; expanding it over the effective
        // index here would multiply the conjunct count by that index.
        Atom::Cong(..) => match canon_atom(a, model) {
            CanonAtom::Const(v) => constant(!v),
            CanonAtom::Atom(a) => vec![Conjunct::from([Lit { atom: a, neg: true }])],
        },
    }
}

fn union(mut a: Vec<Conjunct>, b: Vec<Conjunct>) -> Vec<Conjunct> {
    a.extend(b);
    a
}

fn cross(a: Vec<Conjunct>, b: Vec<Conjunct>, model: &GroundModel) -> Vec<Conjunct> {
    // Reduce every combination to its canonical tightest form and dedup
    // immediately: residue and endpoint expansions otherwise multiply out
    // to exponentially many conjuncts that differ only in redundant or
    // contradictory constraints.
    let mut out = BTreeSet::new();
    for x in &a {
        for y in &b {
            let mut c = x.clone();
            c.extend(y.iter().cloned());
            if let Some(rc) = reduce(&c, model) {
                out.insert(rc);
            }
        }
    }
    out.into_iter().collect()
}

/// The tightest per-term constraints a conjunct imposes, grouped by the
/// constant-free minimal spelling of the term.
struct Constraint {
    lo: ExtQRat,
    hi: ExtQRat,
    eq: Option<BigRational>,
    /// Combined congruence class `(modulus, residue)`; modulus 1 is none.
    cong: (BigInt, BigInt),
    /// Excluded congruence classes, from negated congruence literals.
    excl: Vec<(BigInt, BigInt)>,
}

impl Constraint {
    fn new() -> Constraint {
        Constraint {
            lo: ExtQRat::NegInf,
            hi: ExtQRat::PosInf,
            eq: None,
            cong: (BigInt::one(), BigInt::zero()),
            excl: Vec::new(),
        }
    }
}

/// Splits a non-constant `d` as `g·v̂ + c` with `g > 0` the content, `v̂`
/// primitive, and `v` the negation-minimal spelling of `v̂`; the flag
/// reports `v̂ = -v`. Atoms about the same line then land in the same
/// group regardless of the coefficients they were written with.
fn split_primitive(d: &Term) -> (Term, BigInt, BigRational, bool) {
    let c = d.const_part().clone();
    let mut g = BigInt::zero();
    for k in d.coeffs().values() {
        g = g.gcd(k);
    }
    debug_assert!(g.is_positive());
    let mut v = Term::zero();
    for (name, k) in d.coeffs() {
        v = v.add(&Term::monomial(name, k / &g));
    }
    let n = v.neg();
    if n < v {
        (n, g, c, true)
    } else {
        (v, g, c, false)
    }
}

/// Rewrites a conjunct as an equivalent one keeping, per term, only the
/// strongest lower/upper bound, one CRT-combined congruence class, and a
/// verified equality; `None` means the conjunct is unsatisfiable. Keeping
/// conjuncts in this shape lets `cross` dedup the otherwise exponential
/// expansion of negated bounds and congruences.
fn reduce(c: &Conjunct, model: &GroundModel) -> Option<Conjunct> {
    let mut groups: BTreeMap<Term, Constraint> = BTreeMap::new();
    for l in c {
        if l.neg {
            // ¬(g·v̂ ≡ₘ ∓c): the solution coset of the positive atom is
            // excluded; no solutions means the literal is vacuous.
            let Atom::Cong(m, s, t) = &l.atom else {
                unreachable!("only congruence literals can be negative");
            };
            let (v, gc, cst, flipped) = split_primitive(&s.sub(t));
            let rhs = if flipped { cst } else { -cst };
            let g = groups.entry(v).or_insert_with(Constraint::new);
            match model.solve_congruence(&gc, &rhs, m) {
                None => {}
                Some((m2, r2)) => {
                    if m2.is_one() {
                        // Everything is excluded.
                        return None;
                    }
                    g.excl.push((m2, r2));
                }
            }
            continue;
        }
        match &l.atom {
            Atom::Eq(s, t) => {
                // g·v̂ + c = 0 ⇔ v = ∓c/g.
                let (v, gc, cst, flipped) = split_primitive(&s.sub(t));
                let e = cst / BigRational::from_integer(if flipped { gc } else { -gc });
                let g = groups.entry(v).or_insert_with(Constraint::new);
                match &g.eq {
                    Some(prev) if *prev != e => return None,
                    _ => g.eq = Some(e),
                }
            }
            Atom::Lt(s, t) => {
                // g·v̂ + c < 0: an upper bound `v < -c/g` for the positive
                // spelling, a lower bound `v > c/g` for the negated one.
                let (v, gc, cst, flipped) = split_primitive(&s.sub(t));
                let bound = cst / BigRational::from_integer(gc);
                let g = groups.entry(v).or_insert_with(Constraint::new);
                if flipped {
                    g.lo = g.lo.clone().max(ExtQRat::Fin(bound));
                } else {
                    g.hi = g.hi.clone().min(ExtQRat::Fin(-bound));
                }
            }
            Atom::Cong(m, s, t) => {
                if model.effective_modulus(m).is_one() {
                    continue;
                }
                // g·v̂ ≡ₘ ∓c, solved through the content for v itself.
                let (v, gc, cst, flipped) = split_primitive(&s.sub(t));
                let rhs = if flipped { cst } else { -cst };
                let g = groups.entry(v).or_insert_with(Constraint::new);
                match model.solve_congruence(&gc, &rhs, m) {
                    None => return None,
                    Some((m2, r2)) => {
                        match GroundModel::combine_cosets(&g.cong.0, &g.cong.1, &m2, &r2) {
                            None => return None,
                            Some(c2) => g.cong = c2,
                        }
                    }
                }
            }
        }
    }

    let mut out = Conjunct::new();
    let push = |a: Atom, out: &mut Conjunct| -> Option<()> {
        match canon_atom(&a, model) {
            CanonAtom::Const(false) => None,
            CanonAtom::Const(true) => Some(()),
            CanonAtom::Atom(a) => {
                out.insert(Lit::pos(a));
                Some(())
            }
        }
    };
    for (v, mut g) in groups {
        let (mut lo, mut hi) = (g.lo, g.hi);
        if model.is_discrete() {
            // Every term is integer-valued, so strict rational bounds
            // round to the enclosing integers.
            if let ExtQRat::Fin(l) = &lo {
                lo = ExtQRat::Fin(l.floor());
            }
            if let ExtQRat::Fin(h) = &hi {
                hi = ExtQRat::Fin(h.ceil());
            }
        }
        let (m, r) = &g.cong;
        g.excl.sort();
        g.excl.dedup();
        if let Some(e) = g.eq {
            // The equality subsumes everything else once checked against it.
            if ExtQRat::Fin(e.clone()) <= lo || ExtQRat::Fin(e.clone()) >= hi {
                return None;
            }
            // The pinned value must lie in the group at all.
            if !model.contains(&e) {
                return None;
            }
            if !model.congruent(&e, &BigRational::from_integer(r.clone()), m) {
                return None;
            }
            if g.excl.iter().any(|(m2, r2)| {
                model.congruent(&e, &BigRational::from_integer(r2.clone()), m2)
            }) {
                return None;
            }
            if model.is_discrete() && !e.is_integer() {
                return None;
            }
            push(Atom::Eq(v, Term::constant(e)), &mut out)?;
            continue;
        }
        if let (ExtQRat::Fin(l), ExtQRat::Fin(h)) = (&lo, &hi) {
            if model.is_discrete() {
                // First integer above l in the residue class, if any.
                let li = l.to_integer();
                let first = &li + BigInt::one()
                    + (r - &li - BigInt::one()).mod_floor(m);
                if BigRational::from_integer(first) >= *h {
                    return None;
                }
            } else if l >= h {
                return None;
            }
        }
        if let ExtQRat::Fin(l) = lo {
            push(Atom::Lt(Term::constant(l), v.clone()), &mut out)?;
        }
        if let ExtQRat::Fin(h) = hi {
            push(Atom::Lt(v.clone(), Term::constant(h)), &mut out)?;
        }
        if !m.is_one() {
            push(
                Atom::Cong(
                    m.clone(),
                    v.clone(),
                    Term::constant(BigRational::from_integer(r.clone())),
                ),
                &mut out,
            )?;
        }
        for (m2, r2) in &g.excl {
            // Excluding a superclass of the combined class empties it;
            // excluding a disjoint class is vacuous.
            let covered = (m % m2).is_zero() && (r - r2).mod_floor(m2).is_zero();
            if !m.is_one() && covered {
                return None;
            }
            if GroundModel::combine_cosets(m, r, m2, r2).is_none() {
                continue;
            }
            out.insert(Lit {
                atom: Atom::Cong(
                    m2.clone(),
                    v.clone(),
                    Term::constant(BigRational::from_integer(r2.clone())),
                ),
                neg: true,
            });
        }
    }
    Some(out)
}

/// Drops exact duplicates, and conjuncts that are supersets of another
/// conjunct (the smaller conjunct is weaker, so it absorbs the larger
/// one). The quadratic subsumption pass is skipped on very large inputs,
/// where it is an optimization that no longer pays for itself.
fn subsume(mut cs: Vec<Conjunct>) -> Vec<Conjunct> {
    cs.sort();
    cs.dedup();
    cs.sort_by_key(|c| c.len());
    if cs.len() > 512 {
        return cs;
    }
    let mut kept: Vec<Conjunct> = Vec::new();
    'outer: for c in cs {
        for k in &kept {
            if k.is_subset(&c) {
                continue 'outer;
            }
        }
        kept.push(c);
    }
    kept
}

// ---------------------------------------------------------------------------
// Variable isolation
// ---------------------------------------------------------------------------

/// An atom with the distinguished variable isolated at positive
/// coefficient `n`, or an atom not mentioning it.
enum XAtom {
    /// `t < n·x`
    Lower { n: BigInt, t: Term },
    /// `n·x < t`
    Upper { n: BigInt, t: Term },
    /// `n·x = t`
    Equal { n: BigInt, t: Term },
    /// `n·x ≡ₘ t`
    Cong { n: BigInt, m: BigInt, t: Term },
    Free(Atom),
}

fn isolate(a: &Atom, x: &str) -> XAtom {
    match a {
        Atom::Eq(s, t) => {
            let (c, rest) = s.sub(t).split_var(x);
            if c.is_zero() {
                XAtom::Free(a.clone())
            } else if c.is_positive() {
                XAtom::Equal { n: c, t: rest.neg() }
            } else {
                XAtom::Equal { n: -c, t: rest }
            }
        }
        Atom::Lt(s, t) => {
            let (c, rest) = s.sub(t).split_var(x);
            if c.is_zero() {
                XAtom::Free(a.clone())
            } else if c.is_positive() {
                XAtom::Upper { n: c, t: rest.neg() }
            } else {
                XAtom::Lower { n: -c, t: rest }
            }
        }
        Atom::Cong(m, s, t) => {
            let (c, rest) = s.sub(t).split_var(x);
            if c.is_zero() {
                XAtom::Free(a.clone())
            } else if c.is_positive() {
                XAtom::Cong { n: c, m: m.clone(), t: rest.neg() }
            } else {
                XAtom::Cong { n: -c, m: m.clone(), t: rest }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Existential elimination
// ---------------------------------------------------------------------------

/// Rebuilds `f` with every atom rewritten by `g`; the replacement must be
/// pointwise equivalent to the atom, so it is sound under any polarity.
fn map_atoms(f: &Formula, g: &mut impl FnMut(&Atom) -> Formula) -> Formula {
    match f {
        Formula::True | Formula::False => f.clone(),
        Formula::Atom(a) => g(a),
        Formula::Not(h) => Formula::not(map_atoms(h, g)),
        Formula::And(a, b) => Formula::and(map_atoms(a, g), map_atoms(b, g)),
        Formula::Or(a, b) => Formula::or(map_atoms(a, g), map_atoms(b, g)),
        Formula::Implies(a, b) => Formula::implies(map_atoms(a, g), map_atoms(b, g)),
        Formula::Iff(a, b) => Formula::iff(map_atoms(a, g), map_atoms(b, g)),
        Formula::Exists(..) | Formula::Forall(..) => {
            unreachable!("atom mapping is only applied to quantifier-free formulas")
        }
    }
}

fn visit_atoms(f: &Formula, g: &mut impl FnMut(&Atom)) {
    match f {
        Formula::True | Formula::False => {}
        Formula::Atom(a) => g(a),
        Formula::Not(h) => visit_atoms(h, g),
        Formula::And(a, b)
        | Formula::Or(a, b)
        | Formula::Implies(a, b)
        | Formula::Iff(a, b) => {
            visit_atoms(a, g);
            visit_atoms(b, g);
        }
        Formula::Exists(_, h) | Formula::Forall(_, h) => visit_atoms(h, g),
    }
}

/// Constant folding and Boolean simplification; atoms are rewritten into
/// their canonical spelling so syntactically different duplicates merge
/// downstream.
fn simplify(f: &Formula, model: &GroundModel) -> Formula {
    match f {
        Formula::True | Formula::False => f.clone(),
        Formula::Atom(a) => match canon_atom(a, model) {
            CanonAtom::Const(true) => Formula::True,
            CanonAtom::Const(false) => Formula::False,
            CanonAtom::Atom(a) => Formula::Atom(a),
        },
        Formula::Not(g) => match simplify(g, model) {
            Formula::True => Formula::False,
            Formula::False => Formula::True,
            g => Formula::not(g),
        },
        Formula::And(a, b) => match (simplify(a, model), simplify(b, model)) {
            (Formula::False, _) | (_, Formula::False) => Formula::False,
            (Formula::True, g) | (g, Formula::True) => g,
            (a, b) => Formula::and(a, b),
        },
        Formula::Or(a, b) => match (simplify(a, model), simplify(b, model)) {
            (Formula::True, _) | (_, Formula::True) => Formula::True,
            (Formula::False, g) | (g, Formula::False) => g,
            (a, b) => Formula::or(a, b),
        },
        Formula::Implies(a, b) => match (simplify(a, model), simplify(b, model)) {
            (Formula::False, _) | (_, Formula::True) => Formula::True,
            (Formula::True, g) => g,
            (g, Formula::False) => Formula::not(g),
            (a, b) => Formula::implies(a, b),
        },
        Formula::Iff(a, b) => match (simplify(a, model), simplify(b, model)) {
            (Formula::True, g) | (g, Formula::True) => g,
            (Formula::False, g) | (g, Formula::False) => match g {
                Formula::True => Formula::False,
                Formula::False => Formula::True,
                g => Formula::not(g),
            },
            (a, b) => Formula::iff(a, b),
        },
        Formula::Exists(v, g) => Formula::Exists(v.clone(), Box::new(simplify(g, model))),
        Formula::Forall(v, g) => Formula::Forall(v.clone(), Box::new(simplify(g, model))),
    }
}

/// Elimination of `∃x body` (the body is already quantifier-free). The
/// body is simplified, put into negation normal form, and the quantifier
/// is pushed inward as far as possible — through disjunctions, past
/// x-free conjuncts, and through moderate distribution of disjunctive
/// conjuncts — so that each core elimination only sees the coefficients
/// and moduli of its own branch. That keeps the witness-set sizes, which
/// scale with the lcm of the branch's coefficients, small.
fn eliminate_exists(x: &str, body: &Formula, model: &GroundModel) -> Formula {
    let body = simplify(body, model);
    if !mentions_var(&body, x) {
        return body;
    }
    let body = nnf(&body, true, model);
    let mut budget: i64 = 50_000;
    let out = push_exists(x, &body, model, &mut budget);
    simplify(&out, model)
}

/// Whether the truth of `f` can depend on `x` (coefficients that cancel
/// across an atom do not count).
fn mentions_var(f: &Formula, x: &str) -> bool {
    match f {
        Formula::True | Formula::False => false,
        Formula::Atom(a) => x_coeff(a, x).is_some(),
        Formula::Not(g) => mentions_var(g, x),
        Formula::And(a, b)
        | Formula::Or(a, b)
        | Formula::Implies(a, b)
        | Formula::Iff(a, b) => mentions_var(a, x) || mentions_var(b, x),
        Formula::Exists(v, g) | Formula::Forall(v, g) => v != x && mentions_var(g, x),
    }
}

fn collect_and<'a>(f: &'a Formula, out: &mut Vec<&'a Formula>) {
    match f {
        Formula::And(a, b) => {
            collect_and(a, out);
            collect_and(b, out);
        }
        _ => out.push(f),
    }
}

fn push_exists(x: &str, f: &Formula, model: &GroundModel, budget: &mut i64) -> Formula {
    if !mentions_var(f, x) {
        return f.clone();
    }
    match f {
        // ∃ distributes over ∨.
        Formula::Or(a, b) => Formula::or(
            push_exists(x, a, model, budget),
            push_exists(x, b, model, budget),
        ),
        Formula::And(..) => {
            let mut leaves: Vec<&Formula> = Vec::new();
            collect_and(f, &mut leaves);
            let (with_x, free): (Vec<&Formula>, Vec<&Formula>) =
                leaves.iter().partition(|l| mentions_var(l, x));
            // x-free factors hoist out of the quantifier.
            if with_x.len() == 1 {
                let inner = push_exists(x, with_x[0], model, budget);
                let mut parts: Vec<Formula> = free.into_iter().cloned().collect();
                parts.push(inner);
                return Formula::and_all(parts);
            }
            // Distribute one disjunctive conjunct, within budget, so the
            // disjunction rule above applies to each branch.
            if *budget > 0 {
                if let Some(pos) =
                    with_x.iter().position(|l| matches!(l, Formula::Or(..)))
                {
                    let mut branches: Vec<&Formula> = Vec::new();
                    collect_or(with_x[pos], &mut branches);
                    *budget -= branches.len() as i64;
                    let rest: Vec<&Formula> = leaves
                        .iter()
                        .copied()
                        .filter(|l| !std::ptr::eq(*l, with_x[pos]))
                        .collect();
                    let cases: Vec<Formula> = branches
                        .into_iter()
                        .filter_map(|br| {
                            let mut parts: Vec<Formula> =
                                rest.iter().copied().cloned().collect();
                            parts.push(br.clone());
                            let case = Formula::and_all(parts);
                            if obviously_unsat(&case, model) {
                                return None;
                            }
                            Some(push_exists(x, &case, model, budget))
                        })
                        .collect();
                    return Formula::or_all(cases);
                }
            }
            core_eliminate(x, f, model)
        }
        _ => core_eliminate(x, f, model),
    }
}

/// The quantifier core: scale `x` to unit coefficient (with N the lcm of
/// its coefficients every atom is multiplied through to speak about
/// `z = N·x`, with `z ≡_N 0` recording `z ∈ NG`), then apply the model's
/// witness construction.
fn core_eliminate(x: &str, body: &Formula, model: &GroundModel) -> Formula {
    if obviously_unsat(body, model) {
        return Formula::False;
    }
    let body = body.clone();
    let mut n_all = BigInt::one();
    visit_atoms(&body, &mut |a| {
        if let Some(n) = x_coeff(a, x) {
            n_all = n_all.lcm(&n);
        }
    });
    let avoid = body.free_vars();
    let z = crate::formula::fresh_var("q", &avoid, &BTreeSet::new());
    let zt = Term::monomial(&z, BigInt::one());
    let mut norm = map_atoms(&body, &mut |a| {
        Formula::Atom(match isolate(a, x) {
            XAtom::Free(a) => a,
            XAtom::Lower { n, t } => Atom::Lt(t.scale(&(&n_all / &n)), zt.clone()),
            XAtom::Upper { n, t } => Atom::Lt(zt.clone(), t.scale(&(&n_all / &n))),
            XAtom::Equal { n, t } => Atom::Eq(zt.clone(), t.scale(&(&n_all / &n))),
            XAtom::Cong { n, m, t } => {
                let s = &n_all / &n;
                Atom::Cong(m * &s, zt.clone(), t.scale(&s))
            }
        })
    });
    if !model.effective_modulus(&n_all).is_one() {
        // z ∈ NG.
        norm = Formula::and(norm, Formula::Atom(Atom::Cong(n_all.clone(), zt, Term::zero())));
    }
    let out = if model.is_discrete() {
        cooper(&z, &norm, model)
    } else {
        eliminate_dense(&z, &norm, model)
    };
    simplify(&out, model)
}

fn x_coeff(a: &Atom, x: &str) -> Option<BigInt> {
    let [s, t] = match a {
        Atom::Eq(s, t) | Atom::Lt(s, t) | Atom::Cong(_, s, t) => [s, t],
    };
    let (c, _) = s.sub(t).split_var(x);
    if c.is_zero() {
        None
    } else {
        Some(c.abs())
    }
}

/// Negation normal form: negations are eliminated from order and equality
/// atoms outright (`¬(s < t)` becomes `t < s + 1` over integer-valued
/// terms, `t < s ∨ s = t` in a dense model) and pushed down to bare
/// congruence literals.
fn nnf(f: &Formula, pos: bool, model: &GroundModel) -> Formula {
    match f {
        Formula::True => {
            if pos {
                Formula::True
            } else {
                Formula::False
            }
        }
        Formula::False => {
            if pos {
                Formula::False
            } else {
                Formula::True
            }
        }
        Formula::Atom(a) => {
            if pos {
                f.clone()
            } else {
                match a {
                    Atom::Eq(s, t) => Formula::or(
                        Formula::Atom(Atom::Lt(s.clone(), t.clone())),
                        Formula::Atom(Atom::Lt(t.clone(), s.clone())),
                    ),
                    Atom::Lt(s, t) if model.is_discrete() => Formula::Atom(Atom::Lt(
                        t.clone(),
                        s.add(&Term::constant(BigRational::one())),
                    )),
                    Atom::Lt(s, t) => Formula::or(
                        Formula::Atom(Atom::Lt(t.clone(), s.clone())),
                        Formula::Atom(Atom::Eq(s.clone(), t.clone())),
                    ),
                    Atom::Cong(..) => Formula::not(f.clone()),
                }
            }
        }
        Formula::Not(g) => nnf(g, !pos, model),
        Formula::And(a, b) => {
            if pos {
                Formula::and(nnf(a, true, model), nnf(b, true, model))
            } else {
                Formula::or(nnf(a, false, model), nnf(b, false, model))
            }
        }
        Formula::Or(a, b) => {
            if pos {
                Formula::or(nnf(a, true, model), nnf(b, true, model))
            } else {
                Formula::and(nnf(a, false, model), nnf(b, false, model))
            }
        }
        Formula::Implies(a, b) => {
            if pos {
                Formula::or(nnf(a, false, model), nnf(b, true, model))
            } else {
                Formula::and(nnf(a, true, model), nnf(b, false, model))
            }
        }
        Formula::Iff(a, b) => {
            let (pa, na) = (nnf(a, true, model), nnf(a, false, model));
            let (pb, nb) = (nnf(b, true, model), nnf(b, false, model));
            if pos {
                Formula::or(Formula::and(pa, pb), Formula::and(na, nb))
            } else {
                Formula::or(Formula::and(pa, nb), Formula::and(na, pb))
            }
        }
        Formula::Exists(..) | Formula::Forall(..) => {
            unreachable!("NNF is only applied to quantifier-free formulas")
        }
    }
}

/// Cooper's method for `∃z φ` over the integers with `z` at unit
/// coefficient: with δ the lcm of the congruence moduli on `z` and B the
/// lower-bound terms, `∃z φ ⇔ ∨_{j=1..δ} (φ₋∞[j] ∨ ∨_{b∈B} φ[b+j])`,
/// where φ₋∞ has each order atom replaced by its truth near −∞.
fn cooper(z: &str, f: &Formula, model: &GroundModel) -> Formula {
    let f = nnf(f, true, model);
    let one = Term::constant(BigRational::one());
    let mut delta = BigInt::one();
    let mut lower_terms: BTreeSet<Term> = BTreeSet::new();
    let mut upper_terms: BTreeSet<Term> = BTreeSet::new();
    visit_atoms(&f, &mut |a| match isolate(a, z) {
        XAtom::Cong { m, .. } => delta = delta.lcm(&m),
        XAtom::Lower { t, .. } => {
            lower_terms.insert(t);
        }
        XAtom::Upper { t, .. } => {
            upper_terms.insert(t);
        }
        XAtom::Equal { t, .. } => {
            lower_terms.insert(t.sub(&one));
            upper_terms.insert(t.add(&one));
        }
        XAtom::Free(_) => {}
    });
    // Expand around whichever bound set is smaller; the two directions
    // are mirror images of each other.
    let from_below = lower_terms.len() <= upper_terms.len();
    let limit = map_atoms(&f, &mut |a| match isolate(a, z) {
        XAtom::Free(a) => Formula::Atom(a),
        XAtom::Equal { .. } => Formula::False,
        XAtom::Lower { .. } => {
            if from_below {
                Formula::False
            } else {
                Formula::True
            }
        }
        XAtom::Upper { .. } => {
            if from_below {
                Formula::True
            } else {
                Formula::False
            }
        }
        // Congruences never stabilize towards ±∞; they are grounded by
        // the residue substitution instead.
        XAtom::Cong { .. } => Formula::Atom(a.clone()),
    });
    let bounds = if from_below { &lower_terms } else { &upper_terms };
    let mut out: Vec<Formula> = Vec::new();
    let mut j = BigInt::one();
    while j <= delta {
        let jt = Term::constant(BigRational::from_integer(j.clone()));
        push_sat(&mut out, simplify(&limit.subst_var_term(z, &jt), model), model);
        for b in bounds {
            let point = if from_below { b.add(&jt) } else { b.sub(&jt) };
            push_sat(&mut out, simplify(&f.subst_var_term(z, &point), model), model);
        }
        j += 1;
    }
    mk_or(out)
}

/// Elimination over a dense model: split `z` over the residue classes
/// `j mod δ` (δ the lcm of the effective congruence moduli on `z`), which
/// grounds every congruence into a compatibility condition on its other
/// variables; what remains is a dense-order problem, decided by the test
/// points −∞, every bound term `t` (guarded into the class), and `t + ε`.
/// Density of each coset in the line is what lets a virtual test point
/// stand in for a genuine group element.
fn eliminate_dense(z: &str, f: &Formula, model: &GroundModel) -> Formula {
    let mut delta = BigInt::one();
    let mut terms: BTreeSet<Term> = BTreeSet::new();
    visit_atoms(f, &mut |a| match isolate(a, z) {
        XAtom::Cong { m, .. } => delta = delta.lcm(&model.effective_modulus(&m)),
        XAtom::Lower { t, .. } | XAtom::Upper { t, .. } | XAtom::Equal { t, .. } => {
            terms.insert(t);
        }
        XAtom::Free(_) => {}
    });
    // Top-level conjunct congruences with a constant side (the `z ∈ NG`
    // domain constraint in particular) pin the residue class of `z`
    // outright; intersect them up front so the loop below only visits
    // feasible residues instead of discovering that the rest simplify
    // to ⊥ one at a time.
    let mut conjuncts: Vec<&Formula> = Vec::new();
    collect_and(f, &mut conjuncts);
    let mut pinned = Some((BigInt::one(), BigInt::zero()));
    for leaf in conjuncts {
        let Formula::Atom(a) = leaf else { continue };
        let XAtom::Cong { n, m, t } = isolate(a, z) else { continue };
        if !t.is_constant() {
            continue;
        }
        pinned = pinned.and_then(|(pm, pr)| match model.solve_congruence(&n, t.const_part(), &m) {
            None => None,
            Some((m2, r2)) => GroundModel::combine_cosets(&pm, &pr, &m2, &r2),
        });
    }
    let (step, start) = match pinned {
        Some((m, r)) => (m, r),
        None => return Formula::False,
    };
    let mut out: Vec<Formula> = Vec::new();
    let mut j = start;
    while j < delta {
        let jq = BigRational::from_integer(j.clone());
        // z ≡ j turns each congruence into a condition on its term side.
        let fj = map_atoms(f, &mut |a| match isolate(a, z) {
            XAtom::Cong { m, t, .. } => {
                Formula::Atom(Atom::Cong(m, Term::constant(jq.clone()), t))
            }
            _ => Formula::Atom(a.clone()),
        });
        let fj = simplify(&fj, model);
        if fj == Formula::False {
            j += &step;
            continue;
        }
        // Below every bound.
        push_sat(&mut out, simplify(&subst_limit_low(&fj, z), model), model);
        for t in &terms {
            // Exactly at a bound, provided the bound lies in the class.
            let mut at = fj.subst_var_term(z, t);
            if !delta.is_one() {
                at = Formula::and(
                    Formula::Atom(Atom::Cong(
                        delta.clone(),
                        t.clone(),
                        Term::constant(jq.clone()),
                    )),
                    at,
                );
            }
            push_sat(&mut out, simplify(&at, model), model);
            // Just above a bound: truth there extends over an open
            // interval, which meets every coset.
            push_sat(&mut out, simplify(&subst_eps(&fj, z, t), model), model);
        }
        j += &step;
    }
    mk_or(out)
}

/// The body at a virtual point below every bound value.
fn subst_limit_low(f: &Formula, z: &str) -> Formula {
    map_atoms(f, &mut |a| match isolate(a, z) {
        XAtom::Free(a) => Formula::Atom(a),
        XAtom::Lower { .. } | XAtom::Equal { .. } => Formula::False,
        XAtom::Upper { .. } => Formula::True,
        XAtom::Cong { .. } => unreachable!("congruences are grounded before limits"),
    })
}

/// The body at the virtual point `t + ε` for infinitesimal ε > 0.
fn subst_eps(f: &Formula, z: &str, t: &Term) -> Formula {
    map_atoms(f, &mut |a| match isolate(a, z) {
        XAtom::Free(a) => Formula::Atom(a),
        // s < n·(t+ε) ⇔ s ≤ n·t.
        XAtom::Lower { n, t: s } => Formula::or(
            Formula::Atom(Atom::Lt(s.clone(), t.scale(&n))),
            Formula::Atom(Atom::Eq(s, t.scale(&n))),
        ),
        // n·(t+ε) < s ⇔ n·t < s.
        XAtom::Upper { n, t: s } => Formula::Atom(Atom::Lt(t.scale(&n), s)),
        XAtom::Equal { .. } => Formula::False,
        XAtom::Cong { .. } => unreachable!("congruences are grounded before limits"),
    })
}

/// Cheap refutation for elimination disjuncts: reduce the top-level
/// conjunct literals; if that required part is already inconsistent the
/// whole disjunct is unsatisfiable. Catching these at birth keeps the
/// disjunction from carrying dead branches into the next quantifier.
fn obviously_unsat(f: &Formula, model: &GroundModel) -> bool {
    let mut leaves: Vec<&Formula> = Vec::new();
    collect_and(f, &mut leaves);
    let mut c = Conjunct::new();
    for l in leaves {
        match l {
            Formula::False => return true,
            Formula::Atom(a) => match canon_atom(a, model) {
                CanonAtom::Const(false) => return true,
                CanonAtom::Const(true) => {}
                CanonAtom::Atom(a) => {
                    c.insert(Lit::pos(a));
                }
            },
            Formula::Not(g) => {
                if let Formula::Atom(a @ Atom::Cong(..)) = &**g {
                    match canon_atom(a, model) {
                        CanonAtom::Const(true) => return true,
                        CanonAtom::Const(false) => {}
                        CanonAtom::Atom(a) => {
                            c.insert(Lit { atom: a, neg: true });
                        }
                    }
                }
            }
            _ => {}
        }
    }
    !c.is_empty() && reduce(&c, model).is_none()
}

fn push_sat(out: &mut Vec<Formula>, f: Formula, model: &GroundModel) {
    if !obviously_unsat(&f, model) {
        out.push(f);
    }
}

fn mk_or(parts: Vec<Formula>) -> Formula {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for p in parts {
        match p {
            Formula::False => {}
            Formula::True => return Formula::True,
            p => {
                if seen.insert(p.clone()) {
                    out.push(p);
                }
            }
        }
    }
    Formula::or_all(out)
}

// ---------------------------------------------------------------------------
// Conjunct -> raw normal-form piece
// ---------------------------------------------------------------------------

fn conjunct_to_piece(
    conjunct: &Conjunct,
    x: &str,
    model: &GroundModel,
) -> Result<Vec<RawPiece>, QeError> {
    let ground = |t: &Term| -> Result<Elem, QeError> { Ok(t.eval(&BTreeMap::new())?) };
    let mut lowers: Vec<Elem> = Vec::new();
    let mut uppers: Vec<Elem> = Vec::new();
    let mut equals: Vec<(BigInt, Elem)> = Vec::new();
    let mut congs: Vec<(BigInt, BigInt, Elem)> = Vec::new();
    let mut ncongs: Vec<(BigInt, BigInt, Elem)> = Vec::new();
    for l in conjunct {
        match (isolate(&l.atom, x), l.neg) {
            (XAtom::Free(a), neg) => {
                // Ground atom: decide it now.
                let holds = match &a {
                    Atom::Eq(s, t) => ground(s)? == ground(t)?,
                    Atom::Lt(s, t) => ground(s)? < ground(t)?,
                    Atom::Cong(m, s, t) => model.congruent(&ground(s)?, &ground(t)?, m),
                };
                if holds == neg {
                    return Ok(Vec::new());
                }
            }
            (XAtom::Cong { n, m, t }, true) => ncongs.push((n, m, ground(&t)?)),
            (_, true) => unreachable!("only congruence literals can be negative"),
            (XAtom::Lower { n, t }, _) => {
                lowers.push(ground(&t)? / BigRational::from_integer(n));
            }
            (XAtom::Upper { n, t }, _) => {
                uppers.push(ground(&t)? / BigRational::from_integer(n));
            }
            (XAtom::Equal { n, t }, _) => equals.push((n, ground(&t)?)),
            (XAtom::Cong { n, m, t }, _) => congs.push((n, m, ground(&t)?)),
        }
    }

    if let Some((n, c)) = equals.first() {
        // nx = c pins x = c/n, which must lie in the model ("otherwise ⊥").
        let g = c / BigRational::from_integer(n.clone());
        if !model.contains(&g) {
            return Ok(Vec::new());
        }
        let ok = equals.iter().all(|(n2, c2)| &g * BigRational::from_integer(n2.clone()) == *c2)
            && lowers.iter().all(|l| l < &g)
            && uppers.iter().all(|u| &g < u)
            && congs.iter().all(|(n2, m2, c2)| {
                model.congruent(&(&g * BigRational::from_integer(n2.clone())), c2, m2)
            })
            && ncongs.iter().all(|(n2, m2, c2)| {
                !model.congruent(&(&g * BigRational::from_integer(n2.clone())), c2, m2)
            });
        return Ok(if ok { vec![RawPiece::Singleton(g)] } else { Vec::new() });
    }

    let lo = lowers
        .into_iter()
        .map(ExtQRat::Fin)
        .max()
        .unwrap_or(ExtQRat::NegInf);
    let hi = uppers
        .into_iter()
        .map(ExtQRat::Fin)
        .min()
        .unwrap_or(ExtQRat::PosInf);
    if lo >= hi {
        return Ok(Vec::new());
    }
    let interval = IntervalQ::new(lo, hi);

    let mut coset = (BigInt::one(), BigInt::zero());
    for (n, m, c) in &congs {
        match model.solve_congruence(n, c, m) {
            None => return Ok(Vec::new()),
            Some((m2, r2)) => match GroundModel::combine_cosets(&coset.0, &coset.1, &m2, &r2) {
                None => return Ok(Vec::new()),
                Some(c2) => coset = c2,
            },
        }
    }
    // Excluded classes from negated congruences, as (modulus, residue).
    let mut excl: Vec<(BigInt, BigInt)> = Vec::new();
    for (n, m, c) in &ncongs {
        match model.solve_congruence(n, c, m) {
            // The positive atom never holds, so its negation is vacuous.
            None => {}
            Some((m2, r2)) => {
                if m2.is_one() {
                    return Ok(Vec::new());
                }
                excl.push((m2, r2));
            }
        }
    }
    if excl.is_empty() {
        return Ok(vec![RawPiece::Coset {
            interval,
            residue: BigRational::from_integer(coset.1),
            modulus: coset.0,
        }]);
    }
    // The allowed set is one coset minus finitely many: enumerate the
    // surviving residues at the common modulus.
    let mut big = coset.0.clone();
    for (m2, _) in &excl {
        big = big.lcm(m2);
    }
    let mut pieces = Vec::new();
    let mut rho = BigInt::zero();
    while rho < big {
        let keep = (&rho - &coset.1).mod_floor(&coset.0).is_zero()
            && excl.iter().all(|(m2, r2)| !(&rho - r2).mod_floor(m2).is_zero());
        if keep {
            pieces.push(RawPiece::Coset {
                interval: interval.clone(),
                residue: BigRational::from_integer(rho.clone()),
                modulus: big.clone(),
            });
        }
        rho += 1;
    }
    Ok(pieces)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::parse_formula;
    use crate::rational::parse_rat;

    fn z() -> GroundModel {
        GroundModel::discrete()
    }

    /// Reference truth with bounded quantifiers over a small window.
    fn brute(
        f: &Formula,
        assignment: &mut BTreeMap<String, Elem>,
        model: &GroundModel,
        window: &[Elem],
    ) -> bool {
        match f {
            Formula::True => true,
            Formula::False => false,
            Formula::Atom(_) => f.eval(assignment, model).unwrap(),
            Formula::Not(g) => !brute(g, assignment, model, window),
            Formula::And(a, b) => {
                brute(a, assignment, model, window) && brute(b, assignment, model, window)
            }
            Formula::Or(a, b) => {
                brute(a, assignment, model, window) || brute(b, assignment, model, window)
            }
            Formula::Implies(a, b) => {
                !brute(a, assignment, model, window) || brute(b, assignment, model, window)
            }
            Formula::Iff(a, b) => {
                brute(a, assignment, model, window) == brute(b, assignment, model, window)
            }
            Formula::Exists(v, g) => window.iter().any(|w| {
                let old = assignment.insert(v.clone(), w.clone());
                let r = brute(g, assignment, model, window);
                restore(assignment, v, old);
                r
            }),
            Formula::Forall(v, g) => window.iter().all(|w| {
                let old = assignment.insert(v.clone(), w.clone());
                let r = brute(g, assignment, model, window);
                restore(assignment, v, old);
                r
            }),
        }
    }

    fn restore(a: &mut BTreeMap<String, Elem>, v: &str, old: Option<Elem>) {
        match old {
            Some(o) => {
                a.insert(v.to_string(), o);
            }
            None => {
                a.remove(v);
            }
        }
    }

    fn int_window(lo: i64, hi: i64) -> Vec<Elem> {
        (lo..=hi).map(|k| BigRational::from_integer(BigInt::from(k))).collect()
    }

    /// Checks QE output against bounded-quantifier truth for every free
    /// assignment in the inner window; the quantifier window is wider so
    /// edge effects cannot flip the bounded semantics.
    fn check_qe_discrete(src: &str, free_range: i64, quant_range: i64) {
        let z = z();
        let f = parse_formula(src, &z).unwrap();
        let qf = eliminate_quantifiers(&f, &z);
        assert!(qf.is_quantifier_free(), "not quantifier-free: {qf}");
        let free: Vec<String> = f.free_vars().into_iter().collect();
        let window = int_window(-quant_range, quant_range);
        let mut assignment = BTreeMap::new();
        let mut stack = vec![Vec::<i64>::new()];
        while let Some(vals) = stack.pop() {
            if vals.len() == free.len() {
                for (v, k) in free.iter().zip(&vals) {
                    assignment.insert(v.clone(), BigRational::from_integer(BigInt::from(*k)));
                }
                let direct = brute(&f, &mut assignment, &z, &window);
                let elim = qf.eval(&assignment, &z).unwrap();
                assert_eq!(
                    direct, elim,
                    "mismatch for `{src}` at {vals:?}: brute={direct}, qe={elim}"
                );
            } else {
                for k in -free_range..=free_range {
                    let mut v = vals.clone();
                    v.push(k);
                    stack.push(v);
                }
            }
        }
    }

    #[test]
    fn qe_doubling_is_divisibility() {
        let z = z();
        let f = parse_formula("E x (x + x = y)", &z).unwrap();
        let qf = eliminate_quantifiers(&f, &z);
        assert!(qf.is_quantifier_free());
        for y in -8..=8 {
            let mut a = BTreeMap::new();
            a.insert("y".to_string(), BigRational::from_integer(BigInt::from(y)));
            assert_eq!(qf.eval(&a, &z).unwrap(), y % 2 == 0, "y={y}");
        }
    }

    #[test]
    fn qe_between_discrete() {
        // ∃x(x < y ∧ z < x) over Z means z + 1 < y.
        let z = z();
        let f = parse_formula("E x (x < y & z < x)", &z).unwrap();
        let qf = eliminate_quantifiers(&f, &z);
        for y in -6..=6 {
            for w in -6..=6 {
                let mut a = BTreeMap::new();
                a.insert("y".to_string(), BigRational::from_integer(BigInt::from(y)));
                a.insert("z".to_string(), BigRational::from_integer(BigInt::from(w)));
                assert_eq!(qf.eval(&a, &z).unwrap(), w + 1 < y, "y={y} z={w}");
            }
        }
    }

    #[test]
    fn qe_between_dense() {
        // Density: ∃x(x < y ∧ z < x) over Q means z < y.
        let q = GroundModel::rationals();
        let f = parse_formula("E x (x < y & z < x)", &q).unwrap();
        let qf = eliminate_quantifiers(&f, &q);
        assert!(qf.is_quantifier_free());
        for (y, w) in [("1/2", "1/3"), ("1/3", "1/2"), ("0", "0"), ("-5", "7")] {
            let mut a = BTreeMap::new();
            a.insert("y".to_string(), parse_rat(y).unwrap());
            a.insert("z".to_string(), parse_rat(w).unwrap());
            assert_eq!(
                qf.eval(&a, &q).unwrap(),
                parse_rat(w).unwrap() < parse_rat(y).unwrap(),
                "y={y} z={w}"
            );
        }
    }

    #[test]
    fn qe_localized_congruence() {
        // ∃x(3x = y) over Z[1/2]: solvable iff y ∈ 3G.
        let m = GroundModel::localized(2);
        let f = parse_formula("E x (3*x = y)", &m).unwrap();
        let qf = eliminate_quantifiers(&f, &m);
        assert!(qf.is_quantifier_free());
        for (y, expect) in [("3", true), ("1", false), ("3/2", true), ("1/2", false), ("6", true)]
        {
            let mut a = BTreeMap::new();
            a.insert("y".to_string(), parse_rat(y).unwrap());
            assert_eq!(qf.eval(&a, &m).unwrap(), expect, "y={y}");
        }
    }

    #[test]
    fn qe_matches_brute_window() {
        for src in [
            "E x (x < y & z < x)",
            "E x (2*x = y)",
            "E x (x =_3 1 & y < x & x < z)",
            "A x (x < y -> x < z)",
            "E x (E w (x + w = y & 0 < w) & x =_2 0)",
            "A x (0 < x -> E w (w + w = x | w + w = x + 1))",
            "E x (3*x < y & y < 3*x + 3)",
        ] {
            check_qe_discrete(src, 6, 40);
        }
    }

    #[test]
    fn qfree_examples() {
        let z = z();
        // x > 0 ∧ x ≡₂ 0
        let f = parse_formula("0 < x & x =_2 0", &z).unwrap();
        let d = qfree_to_defset(&f, "x", &z).unwrap();
        assert_eq!(d.modulus(), &BigInt::from(2));
        assert_eq!(d.components().len(), 1);
        for g in -6..=6 {
            assert_eq!(
                d.member(&BigRational::from_integer(BigInt::from(g))),
                g > 0 && g % 2 == 0
            );
        }

        // ¬(x < 5) realizes [5, ∞).
        let f = parse_formula("!(x < 5)", &z).unwrap();
        let d = qfree_to_defset(&f, "x", &z).unwrap();
        assert_eq!(d.modulus(), &BigInt::one());
        for g in -2..=12 {
            assert_eq!(d.member(&BigRational::from_integer(BigInt::from(g))), g >= 5);
        }

        // 3x = 7 is empty over Z.
        let f = parse_formula("3*x = 7", &z).unwrap();
        let d = qfree_to_defset(&f, "x", &z).unwrap();
        assert!(d.is_empty());

        // A stray free variable is an error.
        let f = parse_formula("x < y", &z).unwrap();
        assert_eq!(
            qfree_to_defset(&f, "x", &z).unwrap_err(),
            QeError::FreeVariable("y".into())
        );
    }

    #[test]
    fn pipeline_examples() {
        let z = z();
        // ∃y(x = y + y) is 2Z.
        let f = parse_formula("E y (x = y + y)", &z).unwrap();
        let d = formula_to_defset(&f, "x", &BTreeMap::new(), &z).unwrap();
        for g in -8..=8 {
            assert_eq!(d.member(&BigRational::from_integer(BigInt::from(g))), g % 2 == 0);
        }

        // ∃y(0 < y ∧ y < x) realizes (1, ∞) over Z.
        let f = parse_formula("E y (0 < y & y < x)", &z).unwrap();
        let d = formula_to_defset(&f, "x", &BTreeMap::new(), &z).unwrap();
        for g in -3..=8 {
            assert_eq!(d.member(&BigRational::from_integer(BigInt::from(g))), g >= 2);
        }

        // 0 ≤ x ∧ x ≤ z with z = 10 is the finite box [0, 10].
        let f = parse_formula("0 <= x & x <= z", &z).unwrap();
        let mut params = BTreeMap::new();
        params.insert("z".to_string(), parse_rat("10").unwrap());
        let d = formula_to_defset(&f, "x", &params, &z).unwrap();
        for g in -3..=13 {
            assert_eq!(
                d.member(&BigRational::from_integer(BigInt::from(g))),
                (0..=10).contains(&g)
            );
        }
        // Finite, so it is all singletons.
        assert!(d.components().is_empty());
        assert_eq!(d.singletons().len(), 11);
    }

    #[test]
    fn pipeline_dense_models() {
        let q = GroundModel::rationals();
        let f = parse_formula("E y (x < y & y < 1)", &q).unwrap();
        let d = formula_to_defset(&f, "x", &BTreeMap::new(), &q).unwrap();
        // Density: there is always a y between x and 1 whenever x < 1.
        assert!(d.member(&parse_rat("0").unwrap()));
        assert!(d.member(&parse_rat("1/2").unwrap()));
        assert!(d.member(&parse_rat("-100").unwrap()));
        assert!(!d.member(&parse_rat("1").unwrap()));
        assert!(!d.member(&parse_rat("2").unwrap()));

        // Z[1/3]: ∃y(2y = x ∧ 0 < y) means x ∈ 2G ∧ 0 < x; only the prime 3
        // is invertible, so 2G has index 2 and 1/3 (residue 1) is excluded.
        let m = GroundModel::localized(3);
        let f = parse_formula("E y (2*y = x & 0 < y)", &m).unwrap();
        let d = formula_to_defset(&f, "x", &BTreeMap::new(), &m).unwrap();
        assert!(d.member(&parse_rat("2/3").unwrap()));
        assert!(d.member(&parse_rat("2").unwrap()));
        assert!(!d.member(&parse_rat("1/3").unwrap()));
        assert!(!d.member(&parse_rat("-2/3").unwrap()));
        assert!(!d.member(&parse_rat("0").unwrap()));

        // Z[1/2]: x ∈ 3G is a genuine congruence.
        let m = GroundModel::localized(2);
        let f = parse_formula("E y (3*y = x)", &m).unwrap();
        let d = formula_to_defset(&f, "x", &BTreeMap::new(), &m).unwrap();
        assert!(d.member(&parse_rat("3").unwrap()));
        assert!(d.member(&parse_rat("3/2").unwrap()));
        assert!(!d.member(&parse_rat("1").unwrap()));
        assert!(!d.member(&parse_rat("1/2").unwrap()));
    }
}
