//! Brute-force semantic oracle and differential-test harness.
//!
//! The oracle shares nothing with the elimination or normal-form code
//! except the AST and the atom evaluator. Quantifiers are decided by
//! candidate enumeration: for a body whose atoms mention the quantified
//! variable only together with already-assigned variables, a finite,
//! provably sufficient witness set exists (threshold neighborhoods plus one
//! representative per residue class of the congruence period). When that
//! precondition fails the oracle falls back to scanning an enlarged window,
//! and the report notes that verification is window-relative.

use crate::defset::DefSet;
use crate::formula::{atom_terms, Atom, Formula};
use crate::model::{DenseKind, Elem, GroundModel};
use crate::rational::format_rat;
use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet, HashMap};

/// Finite stand-in for the infinite model: integers in `[-radius, radius]`
/// (discrete), or rationals of height at most `height` within
/// `[-radius, radius]` (dense), where the height of `p/q` is `max(|p|, q)`.
#[derive(Debug, Clone)]
pub struct Window {
    pub model: GroundModel,
    pub radius: i64,
    pub height: i64,
    /// Extra margin for the fallback bounded-quantifier scan.
    pub margin: i64,
}

impl Window {
    pub fn standard(model: GroundModel) -> Window {
        match model {
            GroundModel::Discrete => Window { model, radius: 1000, height: 0, margin: 200 },
            GroundModel::Dense(_) => Window { model, radius: 100, height: 64, margin: 200 },
        }
    }

    pub fn with_radius(model: GroundModel, radius: i64) -> Window {
        let mut w = Window::standard(model);
        w.radius = radius;
        w
    }

    /// All window elements in ascending order.
    pub fn carrier(&self) -> Vec<Elem> {
        let mut out: Vec<Elem> = Vec::new();
        match self.model {
            GroundModel::Discrete => {
                for k in -self.radius..=self.radius {
                    out.push(BigRational::from_integer(BigInt::from(k)));
                }
            }
            GroundModel::Dense(DenseKind::FullRationals) => {
                let mut seen = BTreeSet::new();
                for q in 1..=self.height {
                    for p in -self.height..=self.height {
                        if BigInt::from(p).gcd(&BigInt::from(q)).is_one()
                            && p.abs() <= self.radius.saturating_mul(q)
                        {
                            seen.insert(BigRational::new(BigInt::from(p), BigInt::from(q)));
                        }
                    }
                }
                out.extend(seen);
            }
            GroundModel::Dense(DenseKind::LocalizedAt(p)) => {
                let p = i64::from(p);
                let mut seen = BTreeSet::new();
                let mut pe = 1i64;
                loop {
                    for u in -self.height..=self.height {
                        if (pe == 1 || u % p != 0) && u.abs() <= self.radius.saturating_mul(pe) {
                            seen.insert(BigRational::new(BigInt::from(u), BigInt::from(pe)));
                        }
                    }
                    match pe.checked_mul(p) {
                        Some(next) if next <= self.height => pe = next,
                        _ => break,
                    }
                }
                out.extend(seen);
            }
        }
        out
    }
}

/// Exact truth of `f` under `assignment`, quantifiers included.
pub fn brute_eval(f: &Formula, assignment: &BTreeMap<String, Elem>, w: &Window) -> bool {
    let mut ev = Evaluator { w, fv: HashMap::new(), cache: HashMap::new() };
    let mut asg = assignment.clone();
    ev.eval(f, &mut asg)
}

/// Membership table of a one-free-variable formula over the window,
/// fanned out across window chunks when the `parallel` feature is on.
pub fn brute_window(f: &Formula, x: &str, w: &Window) -> Vec<(Elem, bool)> {
    let carrier = w.carrier();
    #[cfg(feature = "parallel")]
    {
        carrier.par_iter().map(|g| eval_at(f, x, g, w)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        carrier.iter().map(|g| eval_at(f, x, g, w)).collect()
    }
}

/// Single-threaded variant, kept for benchmarking against the parallel
/// path; the results are identical.
pub fn brute_window_seq(f: &Formula, x: &str, w: &Window) -> Vec<(Elem, bool)> {
    w.carrier().iter().map(|g| eval_at(f, x, g, w)).collect()
}

fn eval_at(f: &Formula, x: &str, g: &Elem, w: &Window) -> (Elem, bool) {
    let mut asg = BTreeMap::new();
    asg.insert(x.to_string(), g.clone());
    let mut ev = Evaluator { w, fv: HashMap::new(), cache: HashMap::new() };
    (g.clone(), ev.eval(f, &mut asg))
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Counterexample {
    pub g: String,
    pub brute: bool,
    pub defset: bool,
}

/// Differential verdict between a formula and a normal form built from it.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Report {
    pub verdict: String,
    pub checked: usize,
    pub members: usize,
    pub counterexample: Option<Counterexample>,
    /// Verification is window-relative, not a proof over the whole group.
    pub note: String,
}

impl Report {
    pub fn agree(&self) -> bool {
        self.verdict == "agree"
    }
}

/// Compares `member(D, ·)` with brute-force truth of `f` pointwise on the
/// window; a disagreement reports the counterexample of minimal `|g|`.
pub fn compare_report(f: &Formula, x: &str, d: &DefSet, w: &Window) -> Report {
    let table = brute_window(f, x, w);
    let mut mismatches: Vec<&(Elem, bool)> = Vec::new();
    let mut members = 0usize;
    for entry in &table {
        let (g, b) = entry;
        if *b {
            members += 1;
        }
        if d.member(g) != *b {
            mismatches.push(entry);
        }
    }
    mismatches.sort_by(|(g1, _), (g2, _)| g1.abs().cmp(&g2.abs()).then(g1.cmp(g2)));
    let counterexample = mismatches.first().map(|(g, b)| Counterexample {
        g: format_rat(g),
        brute: *b,
        defset: !*b,
    });
    Report {
        verdict: if counterexample.is_none() { "agree" } else { "disagree" }.to_string(),
        checked: table.len(),
        members,
        counterexample,
        note: "window-relative verification".to_string(),
    }
}

/// An element of `(lo, hi) ∩ (mG + g)`, exact. Always succeeds in a dense
/// model when `lo < hi`; in the discrete model the intersection may be
/// empty for short intervals.
pub fn dense_coset_witness(
    model: &GroundModel,
    lo: &BigRational,
    hi: &BigRational,
    m: &BigInt,
    g: &Elem,
) -> Option<Elem> {
    if lo >= hi {
        return None;
    }
    let eff = model.effective_modulus(m);
    let r = BigRational::from_integer(model.canon_residue(g, &eff));
    let effq = BigRational::from_integer(eff.clone());
    // Solve r + eff·y ∈ (lo, hi) for y in G.
    let alpha = (lo - &r) / &effq;
    let beta = (hi - &r) / &effq;
    match model {
        GroundModel::Discrete => {
            let k = alpha.floor().to_integer() + 1;
            let kq = BigRational::from_integer(k);
            if kq < beta {
                Some(r + effq * kq)
            } else {
                None
            }
        }
        GroundModel::Dense(DenseKind::FullRationals) => Some((lo + hi) / BigRational::from_integer(BigInt::from(2))),
        GroundModel::Dense(DenseKind::LocalizedAt(p)) => {
            let p = BigInt::from(*p);
            let len = &beta - &alpha;
            let mut pe = BigInt::one();
            while BigRational::from_integer(pe.clone()) * &len <= BigRational::one() {
                pe *= &p;
            }
            let u = (&alpha * BigRational::from_integer(pe.clone())).floor().to_integer() + 1;
            let y = BigRational::new(u, pe);
            debug_assert!(alpha < y && y < beta);
            Some(r + effq * y)
        }
    }
}

/// Window-based periodicity test (discrete): is the table equal, outside
/// finitely many interior exceptions, to a union of residue classes mod
/// `period`? The eventual value of each class is read off the outermost
/// bands on both sides and must agree.
pub fn window_periodic(table: &[(Elem, bool)], period: i64) -> bool {
    assert!(period >= 1);
    let n = table.len() as i64;
    let bands = 3 * period;
    if n < 4 * bands {
        return false;
    }
    let class = |g: &Elem| -> usize {
        let m = BigInt::from(period);
        usize::try_from(u64::try_from(&g.numer().mod_floor(&m)).unwrap()).unwrap()
    };
    let mut eventual: Vec<Option<bool>> = vec![None; period as usize];
    // Outermost bands on each side fix the eventual class values.
    for (g, v) in table.iter().take(bands as usize).chain(table.iter().rev().take(bands as usize))
    {
        let c = class(g);
        match eventual[c] {
            None => eventual[c] = Some(*v),
            Some(e) if e != *v => return false,
            _ => {}
        }
    }
    // Exceptions must live strictly inside the window.
    for (i, (g, v)) in table.iter().enumerate() {
        let interior = (i as i64) >= bands && (i as i64) < n - bands;
        if let Some(e) = eventual[class(g)] {
            if *v != e && !interior {
                return false;
            }
        }
    }
    true
}

/// Confirms a yes-verdict of the structural group-definability test: some
/// period up to `max_period` makes the window table periodic-with-finite-
/// exceptions.
pub fn confirm_group_definable(table: &[(Elem, bool)], max_period: i64) -> bool {
    (1..=max_period).any(|q| window_periodic(table, q))
}

// ---------------------------------------------------------------------------
// Quantifier evaluation
// ---------------------------------------------------------------------------

struct Evaluator<'a> {
    w: &'a Window,
    /// Free variables per subformula (keyed by node address).
    fv: HashMap<usize, Vec<String>>,
    /// Truth of quantified subformulas given their free-variable values.
    cache: HashMap<(usize, Vec<Elem>), bool>,
}

impl<'a> Evaluator<'a> {
    fn eval(&mut self, f: &Formula, asg: &mut BTreeMap<String, Elem>) -> bool {
        match f {
            Formula::True => true,
            Formula::False => false,
            Formula::Atom(_) => f.eval(asg, &self.w.model).expect("atom evaluation"),
            Formula::Not(g) => !self.eval(g, asg),
            Formula::And(a, b) => self.eval(a, asg) && self.eval(b, asg),
            Formula::Or(a, b) => self.eval(a, asg) || self.eval(b, asg),
            Formula::Implies(a, b) => !self.eval(a, asg) || self.eval(b, asg),
            Formula::Iff(a, b) => self.eval(a, asg) == self.eval(b, asg),
            Formula::Exists(v, g) => self.eval_quant(f, v, g, asg, true),
            Formula::Forall(v, g) => !self.eval_quant(f, v, g, asg, false),
        }
    }

    /// Truth of ∃v (target ? g : ¬g).
    fn eval_quant(
        &mut self,
        node: &Formula,
        v: &str,
        g: &Formula,
        asg: &mut BTreeMap<String, Elem>,
        target: bool,
    ) -> bool {
        let key_addr = node as *const Formula as usize;
        let fvs = self
            .fv
            .entry(key_addr)
            .or_insert_with(|| node.free_vars().into_iter().collect())
            .clone();
        let key_vals: Vec<Elem> = fvs
            .iter()
            .map(|n| asg.get(n).expect("free variable assigned").clone())
            .collect();
        if let Some(&hit) = self.cache.get(&(key_addr, key_vals.clone())) {
            return hit;
        }
        let domain = match self.candidates(v, g, asg) {
            Some(c) => c,
            None => {
                // Fallback: bounded scan over the enlarged window.
                let mut big = self.w.clone();
                big.radius = big.radius.saturating_add(big.margin);
                big.carrier()
            }
        };
        let old = asg.remove(v);
        let mut found = false;
        for cand in &domain {
            asg.insert(v.to_string(), cand.clone());
            if self.eval(g, asg) == target {
                found = true;
                break;
            }
        }
        match old {
            Some(o) => {
                asg.insert(v.to_string(), o);
            }
            None => {
                asg.remove(v);
            }
        }
        self.cache.insert((key_addr, key_vals), found);
        found
    }

    /// A finite witness set that is provably sufficient for deciding
    /// ∃v applied to any Boolean combination of the atoms of `g`, or `None`
    /// when some atom mixes `v` with a not-yet-assigned variable.
    fn candidates(
        &self,
        v: &str,
        g: &Formula,
        asg: &BTreeMap<String, Elem>,
    ) -> Option<Vec<Elem>> {
        let mut thresholds: Vec<BigRational> = Vec::new();
        let mut period = BigInt::one();
        collect_v_atoms(g, v, &mut |a| -> Option<()> {
            let (s, t) = {
                let [s, t] = atom_terms(a);
                (s, t)
            };
            let d = s.sub(t);
            let (c, rest) = d.split_var(v);
            if c.is_zero() {
                // The occurrences of v cancel; the atom does not constrain it.
                return Some(());
            }
            // Every other variable must already have a value.
            let val = rest.eval(asg).ok()?;
            if let Atom::Cong(m, ..) = a {
                period = period.lcm(&self.w.model.effective_modulus(m));
            } else {
                thresholds.push(-val / BigRational::from_integer(c));
            }
            Some(())
        })?;
        thresholds.sort();
        thresholds.dedup();
        let model = self.w.model;
        let mut out: BTreeSet<Elem> = BTreeSet::new();
        match model {
            GroundModel::Discrete => {
                let l = i64::try_from(&period).expect("period fits in i64");
                if thresholds.is_empty() {
                    for k in 0..l {
                        out.insert(BigRational::from_integer(BigInt::from(k)));
                    }
                } else {
                    for t in &thresholds {
                        let base = t.floor().to_integer();
                        for d in -(l + 1)..=(l + 1) {
                            out.insert(BigRational::from_integer(&base + BigInt::from(d)));
                        }
                    }
                    // Full residue systems beyond both extremes.
                    let lo = thresholds.first().unwrap().floor().to_integer();
                    let hi = thresholds.last().unwrap().ceil().to_integer();
                    for d in 1..=(2 * l + 2) {
                        out.insert(BigRational::from_integer(&lo - BigInt::from(d)));
                        out.insert(BigRational::from_integer(&hi + BigInt::from(d)));
                    }
                }
            }
            GroundModel::Dense(_) => {
                // Gap endpoints (for equalities), then one representative
                // of every residue class of period·G in every gap.
                for t in &thresholds {
                    if model.contains(t) {
                        out.insert(t.clone());
                    }
                }
                let one = BigRational::one();
                let mut gaps: Vec<(BigRational, BigRational)> = Vec::new();
                if thresholds.is_empty() {
                    gaps.push((BigRational::zero(), one.clone()));
                } else {
                    let first = thresholds.first().unwrap();
                    let last = thresholds.last().unwrap();
                    gaps.push((first - &one, first.clone()));
                    gaps.push((last.clone(), last + &one));
                    for pair in thresholds.windows(2) {
                        if pair[0] < pair[1] {
                            gaps.push((pair[0].clone(), pair[1].clone()));
                        }
                    }
                }
                let mut k = BigInt::zero();
                while k < period {
                    let kq = BigRational::from_integer(k.clone());
                    for (a, b) in &gaps {
                        if let Some(wit) = dense_coset_witness(&model, a, b, &period, &kq) {
                            out.insert(wit);
                        }
                    }
                    k += 1;
                }
            }
        }
        Some(out.into_iter().collect())
    }
}

/// Applies `f` to every atom mentioning `v`; short-circuits to `None` when
/// the callback reports an unusable atom.
fn collect_v_atoms(
    g: &Formula,
    v: &str,
    f: &mut impl FnMut(&Atom) -> Option<()>,
) -> Option<()> {
    match g {
        Formula::True | Formula::False => Some(()),
        Formula::Atom(a) => {
            let mentions = atom_terms(a).iter().any(|t| t.vars().any(|n| n.as_str() == v));
            if mentions {
                f(a)
            } else {
                Some(())
            }
        }
        Formula::Not(x) => collect_v_atoms(x, v, f),
        Formula::And(a, b)
        | Formula::Or(a, b)
        | Formula::Implies(a, b)
        | Formula::Iff(a, b) => {
            collect_v_atoms(a, v, f)?;
            collect_v_atoms(b, v, f)
        }
        Formula::Exists(u, x) | Formula::Forall(u, x) => {
            if u == v {
                // v is shadowed below; inner occurrences are not ours.
                Some(())
            } else {
                collect_v_atoms(x, v, f)
            }
        }
    }
}
