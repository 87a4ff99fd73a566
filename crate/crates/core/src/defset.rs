//! Canonical form for unary definable sets: a finite set of singletons plus
//! finitely many components, each an open generalized interval intersected
//! with a coset of `mG`.
//!
//! Internally every operation works fiberwise: the line is split into the
//! residue classes of a common modulus, the set's trace on each coset is
//! put into a canonical run/interval form, Boolean and affine operations are
//! applied there, and the result is re-exported. In the discrete model each
//! fiber is a union of integer runs in coset coordinates; in the dense
//! models it is a finite union of open rational intervals and points.

use crate::model::{Elem, GroundModel};
use crate::rational::{format_rat, ExtQRat};
use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde_json::{json, Value};
use std::fmt;

/// An open generalized interval with extended-rational endpoints.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntervalQ {
    pub lo: ExtQRat,
    pub hi: ExtQRat,
}

impl IntervalQ {
    /// Requires `lo < hi`; the realized set over a dense model is then
    /// automatically nonempty.
    pub fn new(lo: ExtQRat, hi: ExtQRat) -> IntervalQ {
        assert!(lo < hi, "interval endpoints out of order");
        IntervalQ { lo, hi }
    }

    pub fn full() -> IntervalQ {
        IntervalQ { lo: ExtQRat::NegInf, hi: ExtQRat::PosInf }
    }

    pub fn contains(&self, g: &BigRational) -> bool {
        let g = ExtQRat::Fin(g.clone());
        self.lo < g && g < self.hi
    }
}

impl fmt::Display for IntervalQ {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.lo, self.hi)
    }
}

/// One piece of the normal form: an interval meeting the coset
/// `modulus·G + residue`, with the residue a canonical integer
/// representative in `[0, modulus)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub interval: IntervalQ,
    pub residue: BigInt,
}

/// Input to [`normalize`]: either a lone group element or an
/// interval-coset piece with its own local modulus.
#[derive(Debug, Clone)]
pub enum RawPiece {
    Singleton(Elem),
    Coset { interval: IntervalQ, residue: Elem, modulus: BigInt },
}

impl RawPiece {
    pub fn interval(interval: IntervalQ) -> RawPiece {
        RawPiece::Coset { interval, residue: BigRational::zero(), modulus: BigInt::one() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoolOp {
    Union,
    Intersect,
    Difference,
}

#[derive(Debug, Clone)]
pub enum AffineOp {
    Translate(Elem),
    Reflect,
    DivideBy(BigInt),
    ScaleBy(BigInt),
}

/// Which end of the line witnesses a genuine endpoint of a fiber.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum End {
    NegInf,
    PosInf,
}

/// Outcome of the group-definability test.
#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    /// Every fiber is finite or cofinite in its coset: the set is a finite
    /// symmetric difference away from a union of cosets. The realized set
    /// is (union of `core_residues` cosets minus `removed`) plus `added`.
    Yes { period: BigInt, core_residues: Vec<BigInt>, added: Vec<Elem>, removed: Vec<Elem> },
    /// Some fiber is infinite and co-infinite in its coset, so the set has
    /// a genuine endpoint there; `end` points toward its infinite side.
    No { residue: BigInt, end: End },
}

impl Verdict {
    pub fn is_yes(&self) -> bool {
        matches!(self, Verdict::Yes { .. })
    }
}

/// A unary definable set in normal form.
#[derive(Debug, Clone, PartialEq)]
pub struct DefSet {
    model: GroundModel,
    modulus: BigInt,
    singletons: Vec<Elem>,
    components: Vec<Component>,
}

impl DefSet {
    pub fn empty(model: GroundModel) -> DefSet {
        DefSet { model, modulus: BigInt::one(), singletons: Vec::new(), components: Vec::new() }
    }

    pub fn full_line(model: GroundModel) -> DefSet {
        DefSet {
            model,
            modulus: BigInt::one(),
            singletons: Vec::new(),
            components: vec![Component { interval: IntervalQ::full(), residue: BigInt::zero() }],
        }
    }

    pub fn model(&self) -> GroundModel {
        self.model
    }

    pub fn modulus(&self) -> &BigInt {
        &self.modulus
    }

    pub fn singletons(&self) -> &[Elem] {
        &self.singletons
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn is_empty(&self) -> bool {
        self.singletons.is_empty() && self.components.is_empty()
    }

    /// Membership of a ground-model element in the realized set.
    pub fn member(&self, g: &Elem) -> bool {
        debug_assert!(self.model.contains(g));
        if self.singletons.binary_search(g).is_ok() {
            return true;
        }
        let r = self.model.canon_residue(g, &self.modulus);
        self.components
            .iter()
            .any(|c| c.residue == r && c.interval.contains(g))
    }

    /// Pointwise Boolean combination, renormalized.
    pub fn boolean(op: BoolOp, a: &DefSet, b: &DefSet) -> DefSet {
        assert_eq!(a.model, b.model, "operands over different ground models");
        let m = a.modulus.lcm(&b.modulus);
        let fa = Fibers::of(a, &m);
        let fb = Fibers::of(b, &m);
        let f = match op {
            BoolOp::Union => |x: bool, y: bool| x || y,
            BoolOp::Intersect => |x: bool, y: bool| x && y,
            BoolOp::Difference => |x: bool, y: bool| x && !y,
        };
        Fibers::combine(&fa, &fb, f, a.model, &m).export(a.model, &m)
    }

    /// Complement within the ground model, renormalized.
    pub fn complement(&self) -> DefSet {
        let m = self.modulus.clone();
        let fs = Fibers::of(self, &m);
        let full = Fibers::of(&DefSet::full_line(self.model), &m);
        Fibers::combine(&full, &fs, |x, y| x && !y, self.model, &m).export(self.model, &m)
    }

    /// Pointwise affine image or preimage, renormalized.
    pub fn affine(&self, op: &AffineOp) -> DefSet {
        let m = &self.modulus;
        let mut pieces: Vec<RawPiece> = Vec::new();
        match op {
            AffineOp::Translate(g) => {
                assert!(self.model.contains(g), "translation by a non-element");
                for c in &self.components {
                    pieces.push(RawPiece::Coset {
                        interval: IntervalQ::new(c.interval.lo.shift(g), c.interval.hi.shift(g)),
                        residue: BigRational::from_integer(c.residue.clone()) + g,
                        modulus: m.clone(),
                    });
                }
                for s in &self.singletons {
                    pieces.push(RawPiece::Singleton(s + g));
                }
            }
            AffineOp::Reflect => {
                for c in &self.components {
                    pieces.push(RawPiece::Coset {
                        interval: IntervalQ::new(c.interval.hi.neg(), c.interval.lo.neg()),
                        residue: BigRational::from_integer(-&c.residue),
                        modulus: m.clone(),
                    });
                }
                for s in &self.singletons {
                    pieces.push(RawPiece::Singleton(-s));
                }
            }
            AffineOp::DivideBy(n) => {
                assert!(n.is_positive(), "DivideBy requires n >= 1");
                for c in &self.components {
                    // a is in the preimage iff n·a is in the interval and
                    // n·a ≡ residue (mod mG); the congruence in a either is
                    // unsolvable or is a single coset.
                    let r = BigRational::from_integer(c.residue.clone());
                    if let Some((m2, r2)) = self.model.solve_congruence(n, &r, m) {
                        pieces.push(RawPiece::Coset {
                            interval: IntervalQ::new(
                                c.interval.lo.div_int(n),
                                c.interval.hi.div_int(n),
                            ),
                            residue: BigRational::from_integer(r2),
                            modulus: m2,
                        });
                    }
                }
                for s in &self.singletons {
                    let a = s / BigRational::from_integer(n.clone());
                    if self.model.contains(&a) {
                        pieces.push(RawPiece::Singleton(a));
                    }
                }
            }
            AffineOp::ScaleBy(n) => {
                assert!(n.is_positive(), "ScaleBy requires n >= 1");
                let nq = BigRational::from_integer(n.clone());
                for c in &self.components {
                    // n·(mG + r) = nmG + nr exactly.
                    pieces.push(RawPiece::Coset {
                        interval: IntervalQ::new(c.interval.lo.scale(n), c.interval.hi.scale(n)),
                        residue: BigRational::from_integer(&c.residue * n),
                        modulus: m * n,
                    });
                }
                for s in &self.singletons {
                    pieces.push(RawPiece::Singleton(s * &nq));
                }
            }
        }
        normalize(self.model, pieces)
    }

    /// Decides whether the realized set is definable from the group
    /// structure alone, i.e. is a finite symmetric difference away from a
    /// finite union of cosets of `mG`.
    pub fn is_group_definable(&self) -> Verdict {
        let m = self.modulus.clone();
        let fibers = Fibers::of(self, &m);
        let mut core_residues = Vec::new();
        let mut added: Vec<Elem> = Vec::new();
        let mut removed: Vec<Elem> = Vec::new();
        let mut per_fiber = |r: BigInt, fin: Finiteness| -> Option<Verdict> {
            match fin {
                Finiteness::Finite(points) => {
                    added.extend(points);
                    None
                }
                Finiteness::Cofinite(points) => {
                    core_residues.push(r);
                    removed.extend(points);
                    None
                }
                Finiteness::Neither(end) => Some(Verdict::No { residue: r, end }),
            }
        };
        match &fibers {
            Fibers::Discrete(fs) => {
                for (r, z) in fs.iter().enumerate() {
                    let r = BigInt::from(r);
                    let fin = z.finiteness(&m, &r);
                    if let Some(no) = per_fiber(r, fin) {
                        return no;
                    }
                }
            }
            Fibers::Dense(fs) => {
                for (r, rs) in fs.iter().enumerate() {
                    let r = BigInt::from(r);
                    let fin = rs.finiteness(self.model, &m, &r);
                    if let Some(no) = per_fiber(r, fin) {
                        return no;
                    }
                }
            }
        }
        added.sort();
        removed.sort();
        Verdict::Yes { period: m, core_residues, added, removed }
    }

    /// Pointwise equality, decided by aligning both sides to the lcm
    /// modulus and comparing the resulting canonical forms.
    pub fn eq_pointwise(&self, other: &DefSet) -> bool {
        if self.model != other.model {
            return false;
        }
        let m = self.modulus.lcm(&other.modulus);
        let a = Fibers::of(self, &m).export(self.model, &m);
        let b = Fibers::of(other, &m).export(other.model, &m);
        a == b
    }

    /// Canonical JSON document.
    pub fn to_json(&self) -> Value {
        json!({
            "mode": self.model.to_string(),
            "modulus": self.modulus.to_string(),
            "singletons": self.singletons.iter().map(|s| format_rat(s)).collect::<Vec<_>>(),
            "components": self.components.iter().map(|c| json!({
                "lo": c.interval.lo.to_string(),
                "hi": c.interval.hi.to_string(),
                "residue": c.residue.to_string(),
            })).collect::<Vec<_>>(),
        })
    }
}

impl fmt::Display for DefSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", serde_json::to_string(&self.to_json()).unwrap())
    }
}

/// Builds the canonical DefSet realizing the union of the pieces.
pub fn normalize(model: GroundModel, pieces: Vec<RawPiece>) -> DefSet {
    let mut m = BigInt::one();
    for p in &pieces {
        if let RawPiece::Coset { modulus, .. } = p {
            assert!(modulus.is_positive(), "local modulus must be >= 1");
            m = m.lcm(&model.effective_modulus(modulus));
        }
    }
    let mut fibers = Fibers::empty(model, &m);
    for p in &pieces {
        fibers.add_piece(model, &m, p);
    }
    fibers.export(model, &m)
}

// ---------------------------------------------------------------------------
// Fibers: per-coset traces at a fixed modulus
// ---------------------------------------------------------------------------

enum Fibers {
    Discrete(Vec<ZSet>),
    Dense(Vec<RatSet>),
}

enum Finiteness {
    Finite(Vec<Elem>),
    Cofinite(Vec<Elem>),
    Neither(End),
}

impl Fibers {
    fn empty(model: GroundModel, m: &BigInt) -> Fibers {
        let n = usize::try_from(u64::try_from(m).expect("modulus too large")).unwrap();
        if model.is_discrete() {
            Fibers::Discrete(vec![ZSet::default(); n])
        } else {
            Fibers::Dense(vec![RatSet::default(); n])
        }
    }

    fn of(d: &DefSet, m: &BigInt) -> Fibers {
        debug_assert!((m % &d.modulus).is_zero());
        let mut fs = Fibers::empty(d.model, m);
        for c in &d.components {
            fs.add_piece(
                d.model,
                m,
                &RawPiece::Coset {
                    interval: c.interval.clone(),
                    residue: BigRational::from_integer(c.residue.clone()),
                    modulus: d.modulus.clone(),
                },
            );
        }
        for s in &d.singletons {
            fs.add_piece(d.model, m, &RawPiece::Singleton(s.clone()));
        }
        fs
    }

    fn add_piece(&mut self, model: GroundModel, m: &BigInt, p: &RawPiece) {
        match p {
            RawPiece::Singleton(g) => {
                assert!(model.contains(g), "singleton outside the ground model");
                let r = model.canon_residue(g, m);
                match self {
                    Fibers::Discrete(fs) => {
                        let k = (g.numer() - &r).div_floor(m);
                        fs[idx(&r)].insert_run(Some(k.clone()), Some(k));
                    }
                    Fibers::Dense(fs) => fs[idx(&r)].points.push(g.clone()),
                }
            }
            RawPiece::Coset { interval, residue, modulus } => {
                assert!(model.contains(residue), "residue outside the ground model");
                let eff = model.effective_modulus(modulus);
                let r0 = model.canon_residue(residue, &eff);
                // The coset of eff·G splits over the m/eff residues above it.
                let mut r = r0.clone();
                while r < *m {
                    match self {
                        Fibers::Discrete(fs) => {
                            if let Some((lo, hi)) = coset_run(interval, m, &r) {
                                fs[idx(&r)].insert_run(lo, hi);
                            }
                        }
                        Fibers::Dense(fs) => {
                            fs[idx(&r)].intervals.push((interval.lo.clone(), interval.hi.clone()))
                        }
                    }
                    r += &eff;
                }
            }
        }
    }

    fn combine(
        a: &Fibers,
        b: &Fibers,
        f: impl Fn(bool, bool) -> bool,
        model: GroundModel,
        m: &BigInt,
    ) -> Fibers {
        match (a, b) {
            (Fibers::Discrete(xs), Fibers::Discrete(ys)) => Fibers::Discrete(
                xs.iter().zip(ys).map(|(x, y)| ZSet::combine(x, y, &f)).collect(),
            ),
            (Fibers::Dense(xs), Fibers::Dense(ys)) => Fibers::Dense(
                xs.iter()
                    .zip(ys)
                    .enumerate()
                    .map(|(r, (x, y))| RatSet::combine(x, y, &f, model, m, &BigInt::from(r)))
                    .collect(),
            ),
            _ => unreachable!("mixed fiber kinds"),
        }
    }

    fn export(&self, model: GroundModel, m: &BigInt) -> DefSet {
        let mut singletons: Vec<Elem> = Vec::new();
        let mut components: Vec<Component> = Vec::new();
        match self {
            Fibers::Discrete(fs) => {
                for (r, z) in fs.iter().enumerate() {
                    let r = BigInt::from(r);
                    for (lo, hi) in z.canonical_runs() {
                        let at = |k: &BigInt| &r + k * m;
                        match (lo, hi) {
                            (Some(k1), Some(k2)) => {
                                let mut k = k1.clone();
                                while k <= k2 {
                                    singletons.push(BigRational::from_integer(at(&k)));
                                    k += 1;
                                }
                            }
                            (Some(k1), None) => components.push(Component {
                                interval: IntervalQ::new(
                                    ExtQRat::Fin(BigRational::from_integer(at(&k1) - 1)),
                                    ExtQRat::PosInf,
                                ),
                                residue: r.clone(),
                            }),
                            (None, Some(k2)) => components.push(Component {
                                interval: IntervalQ::new(
                                    ExtQRat::NegInf,
                                    ExtQRat::Fin(BigRational::from_integer(at(&k2) + 1)),
                                ),
                                residue: r.clone(),
                            }),
                            (None, None) => components.push(Component {
                                interval: IntervalQ::full(),
                                residue: r.clone(),
                            }),
                        }
                    }
                }
            }
            Fibers::Dense(fs) => {
                for (r, rs) in fs.iter().enumerate() {
                    let r = BigInt::from(r);
                    let canon = rs.canonicalize(model, m, &r);
                    for (lo, hi) in canon.intervals {
                        components.push(Component {
                            interval: IntervalQ::new(lo, hi),
                            residue: r.clone(),
                        });
                    }
                    singletons.extend(canon.points);
                }
            }
        }
        singletons.sort();
        singletons.dedup();
        components.sort_by(|a, b| a.residue.cmp(&b.residue).then(a.interval.lo.cmp(&b.interval.lo)));
        DefSet { model, modulus: m.clone(), singletons, components }
    }
}

fn idx(r: &BigInt) -> usize {
    usize::try_from(u64::try_from(r).unwrap()).unwrap()
}

/// Coset coordinates of `interval ∩ (mZ + r)`: the k with r + m·k inside,
/// or `None` for an empty intersection.
fn coset_run(
    interval: &IntervalQ,
    m: &BigInt,
    r: &BigInt,
) -> Option<(Option<BigInt>, Option<BigInt>)> {
    let mq = BigRational::from_integer(m.clone());
    let rq = BigRational::from_integer(r.clone());
    let lo = match &interval.lo {
        ExtQRat::NegInf => None,
        ExtQRat::PosInf => return None,
        ExtQRat::Fin(a) => Some(((a - &rq) / &mq).floor().to_integer() + 1),
    };
    let hi = match &interval.hi {
        ExtQRat::PosInf => None,
        ExtQRat::NegInf => return None,
        ExtQRat::Fin(b) => Some(((b - &rq) / &mq).ceil().to_integer() - 1),
    };
    if let (Some(a), Some(b)) = (&lo, &hi) {
        if a > b {
            return None;
        }
    }
    Some((lo, hi))
}

// ---------------------------------------------------------------------------
// ZSet: a subset of Z as disjoint, non-adjacent, sorted inclusive runs
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default, PartialEq)]
struct ZSet {
    /// Unnormalized insertion buffer; canonicalized on read.
    runs: Vec<(Option<BigInt>, Option<BigInt>)>,
}

impl ZSet {
    fn insert_run(&mut self, lo: Option<BigInt>, hi: Option<BigInt>) {
        self.runs.push((lo, hi));
    }

    /// Sorted, disjoint, non-adjacent runs realizing the union.
    fn canonical_runs(&self) -> Vec<(Option<BigInt>, Option<BigInt>)> {
        let mut runs = self.runs.clone();
        runs.sort_by(|a, b| cmp_lo(&a.0, &b.0).then(cmp_hi(&a.1, &b.1)));
        let mut out: Vec<(Option<BigInt>, Option<BigInt>)> = Vec::new();
        for (lo, hi) in runs {
            if let Some(last) = out.last_mut() {
                // Merge when overlapping or adjacent: lo <= last.hi + 1.
                let touches = match (&last.1, &lo) {
                    (None, _) => true,
                    (Some(_), None) => true, // lo=-inf starts before everything sorted first
                    (Some(h), Some(l)) => l <= &(h + 1),
                };
                if touches {
                    if cmp_hi(&hi, &last.1) == std::cmp::Ordering::Greater {
                        last.1 = hi;
                    }
                    continue;
                }
            }
            out.push((lo, hi));
        }
        out
    }

    fn combine(a: &ZSet, b: &ZSet, f: impl Fn(bool, bool) -> bool) -> ZSet {
        let ra = a.canonical_runs();
        let rb = b.canonical_runs();
        // Critical integers: run boundaries and their neighbors.
        let mut crit: Vec<BigInt> = Vec::new();
        for (lo, hi) in ra.iter().chain(rb.iter()) {
            if let Some(l) = lo {
                crit.push(l - 1);
                crit.push(l.clone());
            }
            if let Some(h) = hi {
                crit.push(h.clone());
                crit.push(h + 1);
            }
        }
        crit.sort();
        crit.dedup();
        let mut out = ZSet::default();
        let in_runs = |runs: &[(Option<BigInt>, Option<BigInt>)], k: &BigInt| {
            runs.iter().any(|(lo, hi)| {
                lo.as_ref().map_or(true, |l| l <= k) && hi.as_ref().map_or(true, |h| k <= h)
            })
        };
        let val = |k: &BigInt| f(in_runs(&ra, k), in_runs(&rb, k));
        // Value below all critical points (constant there).
        let low_val = match crit.first() {
            None => val(&BigInt::zero()),
            Some(c) => val(&(c - 1)),
        };
        let mut open_lo: Option<Option<BigInt>> = if low_val { Some(None) } else { None };
        for (i, c) in crit.iter().enumerate() {
            let v = val(c);
            match (&open_lo, v) {
                (None, true) => open_lo = Some(Some(c.clone())),
                (Some(lo), false) => {
                    out.insert_run(lo.clone(), Some(c - 1));
                    open_lo = None;
                }
                _ => {}
            }
            // Between c and the next critical point the value is constant
            // and equals the value at c+1 = next run of the same kind; the
            // neighbor points inserted above make every change visible, so
            // nothing to do here.
            let _ = i;
        }
        if let Some(lo) = open_lo {
            out.insert_run(lo, None);
        }
        out.runs = out.canonical_runs();
        out
    }

    fn finiteness(&self, m: &BigInt, r: &BigInt) -> Finiteness {
        let runs = self.canonical_runs();
        let unbounded_above = runs.iter().any(|(_, h)| h.is_none());
        let unbounded_below = runs.iter().any(|(l, _)| l.is_none());
        let at = |k: &BigInt| BigRational::from_integer(r + k * m);
        if !unbounded_above && !unbounded_below {
            let mut pts = Vec::new();
            for (lo, hi) in &runs {
                let (mut k, k2) = (lo.clone().unwrap(), hi.clone().unwrap());
                while k <= k2 {
                    pts.push(at(&k));
                    k += 1;
                }
            }
            return Finiteness::Finite(pts);
        }
        if unbounded_above && unbounded_below {
            // Complement is the finitely many gaps.
            let comp = ZSet::combine(self, self, |x, _| !x);
            let comp_runs = comp.canonical_runs();
            if comp_runs.iter().all(|(l, h)| l.is_some() && h.is_some()) {
                let mut pts = Vec::new();
                for (lo, hi) in &comp_runs {
                    let (mut k, k2) = (lo.clone().unwrap(), hi.clone().unwrap());
                    while k <= k2 {
                        pts.push(at(&k));
                        k += 1;
                    }
                }
                return Finiteness::Cofinite(pts);
            }
            return Finiteness::Neither(End::PosInf);
        }
        Finiteness::Neither(if unbounded_above { End::PosInf } else { End::NegInf })
    }
}

fn cmp_lo(a: &Option<BigInt>, b: &Option<BigInt>) -> std::cmp::Ordering {
    match (a, b) {
        (None, None) => std::cmp::Ordering::Equal,
        (None, Some(_)) => std::cmp::Ordering::Less,
        (Some(_), None) => std::cmp::Ordering::Greater,
        (Some(x), Some(y)) => x.cmp(y),
    }
}

fn cmp_hi(a: &Option<BigInt>, b: &Option<BigInt>) -> std::cmp::Ordering {
    match (a, b) {
        (None, None) => std::cmp::Ordering::Equal,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (Some(_), None) => std::cmp::Ordering::Less,
        (Some(x), Some(y)) => x.cmp(y),
    }
}

// ---------------------------------------------------------------------------
// RatSet: dense fiber as open intervals plus coset points
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default)]
struct RatSet {
    intervals: Vec<(ExtQRat, ExtQRat)>,
    points: Vec<BigRational>,
}

impl RatSet {
    fn contains_open(&self, lo: &ExtQRat, hi: &ExtQRat) -> bool {
        self.intervals.iter().any(|(a, b)| a <= lo && hi <= b)
    }

    fn contains_point(&self, p: &BigRational) -> bool {
        let e = ExtQRat::Fin(p.clone());
        self.points.contains(p) || self.intervals.iter().any(|(a, b)| *a < e && e < *b)
    }

    /// Canonical form: maximal open intervals merged across absorbable
    /// boundary points, plus isolated coset points.
    fn canonicalize(&self, model: GroundModel, m: &BigInt, r: &BigInt) -> RatSet {
        RatSet::combine(self, self, |x, _| x, model, m, r)
    }

    /// Region sweep implementing an arbitrary pointwise Boolean table over
    /// two fibers of the same coset `mG + r`.
    fn combine(
        a: &RatSet,
        b: &RatSet,
        f: impl Fn(bool, bool) -> bool,
        model: GroundModel,
        m: &BigInt,
        r: &BigInt,
    ) -> RatSet {
        let in_coset = |p: &BigRational| model.contains(p) && model.canon_residue(p, m) == *r;
        let mut crit: Vec<BigRational> = Vec::new();
        for s in [a, b] {
            for (lo, hi) in &s.intervals {
                if let ExtQRat::Fin(q) = lo {
                    crit.push(q.clone());
                }
                if let ExtQRat::Fin(q) = hi {
                    crit.push(q.clone());
                }
            }
            crit.extend(s.points.iter().cloned());
        }
        crit.sort();
        crit.dedup();
        // Region list: (-inf, c1), {c1}, (c1, c2), ..., {ck}, (ck, +inf).
        #[derive(Clone)]
        enum Region {
            Open(ExtQRat, ExtQRat),
            At(BigRational),
        }
        let mut regions: Vec<(Region, bool)> = Vec::new();
        let mut prev = ExtQRat::NegInf;
        for c in &crit {
            let here = ExtQRat::Fin(c.clone());
            let v = f(a.contains_open(&prev, &here), b.contains_open(&prev, &here));
            regions.push((Region::Open(prev.clone(), here.clone()), v));
            let v = f(a.contains_point(c), b.contains_point(c));
            regions.push((Region::At(c.clone()), v));
            prev = here;
        }
        let v = f(
            a.contains_open(&prev, &ExtQRat::PosInf),
            b.contains_open(&prev, &ExtQRat::PosInf),
        );
        regions.push((Region::Open(prev, ExtQRat::PosInf), v));

        // Assemble: merge true open regions across absorbable points.
        let mut out = RatSet::default();
        let mut open: Option<(ExtQRat, ExtQRat)> = None;
        let mut i = 0;
        while i < regions.len() {
            match &regions[i] {
                (Region::Open(lo, hi), true) => {
                    match &mut open {
                        Some((_, h)) => *h = hi.clone(),
                        None => open = Some((lo.clone(), hi.clone())),
                    }
                    i += 1;
                }
                (Region::Open(..), false) => {
                    if let Some(iv) = open.take() {
                        out.intervals.push(iv);
                    }
                    i += 1;
                }
                (Region::At(p), v) => {
                    let coset = in_coset(p);
                    let next_true =
                        matches!(regions.get(i + 1), Some((Region::Open(..), true)));
                    let prev_true = open.is_some();
                    if !coset {
                        // Invisible to the realized set: merge across it
                        // when both sides are true, otherwise break.
                        if !(prev_true && next_true) {
                            if let Some(iv) = open.take() {
                                out.intervals.push(iv);
                            }
                        }
                    } else if *v && prev_true && next_true {
                        // Absorbed into the surrounding interval.
                    } else {
                        if let Some(iv) = open.take() {
                            out.intervals.push(iv);
                        }
                        if *v {
                            out.points.push(p.clone());
                        }
                    }
                    i += 1;
                }
            }
        }
        if let Some(iv) = open.take() {
            out.intervals.push(iv);
        }
        out.points.sort();
        out.points.dedup();
        out
    }

    fn finiteness(&self, model: GroundModel, m: &BigInt, r: &BigInt) -> Finiteness {
        let canon = self.canonicalize(model, m, r);
        if canon.intervals.is_empty() {
            return Finiteness::Finite(canon.points);
        }
        // Cofinite iff the complement within the coset has no interval part.
        let full = RatSet { intervals: vec![(ExtQRat::NegInf, ExtQRat::PosInf)], points: vec![] };
        let comp = RatSet::combine(&full, &canon, |x, y| x && !y, model, m, r);
        if comp.intervals.is_empty() {
            return Finiteness::Cofinite(comp.points);
        }
        let unbounded_above = canon.intervals.iter().any(|(_, h)| *h == ExtQRat::PosInf);
        let unbounded_below = canon.intervals.iter().any(|(l, _)| *l == ExtQRat::NegInf);
        Finiteness::Neither(if unbounded_above || !unbounded_below {
            End::PosInf
        } else {
            End::NegInf
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::parse_rat;

    fn z() -> GroundModel {
        GroundModel::discrete()
    }

    fn el(s: &str) -> Elem {
        parse_rat(s).unwrap()
    }

    fn iv(lo: &str, hi: &str) -> IntervalQ {
        IntervalQ::new(
            crate::rational::parse_ext(lo).unwrap(),
            crate::rational::parse_ext(hi).unwrap(),
        )
    }

    fn coset(lo: &str, hi: &str, r: i64, m: i64) -> RawPiece {
        RawPiece::Coset {
            interval: iv(lo, hi),
            residue: BigRational::from_integer(BigInt::from(r)),
            modulus: BigInt::from(m),
        }
    }

    fn members(d: &DefSet, lo: i64, hi: i64) -> Vec<i64> {
        (lo..=hi)
            .filter(|g| d.member(&BigRational::from_integer(BigInt::from(*g))))
            .collect()
    }

    #[test]
    fn absorption_of_overlapping_rays() {
        // (0,inf) mod 2 r=0 union (4,inf) mod 2 r=0 -> one component (imax after tightening).
        let d = normalize(z(), vec![coset("0", "inf", 0, 2), coset("4", "inf", 0, 2)]);
        assert_eq!(d.modulus(), &BigInt::from(2));
        assert_eq!(d.components().len(), 1);
        assert!(d.singletons().is_empty());
        let c = &d.components()[0];
        assert_eq!(c.residue, BigInt::zero());
        assert_eq!(c.interval, iv("1", "inf"));
        assert_eq!(members(&d, -5, 9), vec![2, 4, 6, 8]);
    }

    #[test]
    fn finite_intersection_demotes_to_singletons() {
        let d = normalize(z(), vec![coset("0", "3", 0, 2)]);
        assert!(d.components().is_empty());
        assert_eq!(d.singletons(), &[el("2")]);
    }

    #[test]
    fn crt_union_of_two_cosets() {
        // x =_2 0 union x =_3 0 over full lines: modulus 6, residues {0,2,3,4}.
        let d = normalize(
            z(),
            vec![coset("-inf", "inf", 0, 2), coset("-inf", "inf", 0, 3)],
        );
        assert_eq!(d.modulus(), &BigInt::from(6));
        let mut residues: Vec<i64> = d
            .components()
            .iter()
            .map(|c| {
                assert_eq!(c.interval, IntervalQ::full());
                i64::try_from(&c.residue).unwrap()
            })
            .collect();
        residues.sort();
        assert_eq!(residues, vec![0, 2, 3, 4]);
    }

    #[test]
    fn membership_boundary_cases() {
        let d = normalize(z(), vec![coset("0", "inf", 0, 2)]);
        assert!(d.member(&el("4")));
        assert!(!d.member(&el("3")));
        assert!(!d.member(&el("0")));
    }

    #[test]
    fn complement_of_empty_is_full_line() {
        let d = DefSet::empty(z()).complement();
        assert_eq!(d.modulus(), &BigInt::one());
        assert_eq!(d.components().len(), 1);
        assert_eq!(d.components()[0].interval, IntervalQ::full());
        assert_eq!(d.components()[0].residue, BigInt::zero());
        assert!(d.singletons().is_empty());
    }

    #[test]
    fn intersect_demotes_bounded_piece() {
        let a = normalize(z(), vec![coset("0", "inf", 0, 2)]);
        let b = normalize(z(), vec![coset("-inf", "10", 0, 1)]);
        let d = DefSet::boolean(BoolOp::Intersect, &a, &b);
        assert!(d.components().is_empty());
        assert_eq!(d.singletons(), &[el("2"), el("4"), el("6"), el("8")]);
    }

    #[test]
    fn union_of_both_residues_is_full_line() {
        let a = normalize(z(), vec![coset("-inf", "inf", 0, 2)]);
        let b = normalize(z(), vec![coset("-inf", "inf", 1, 2)]);
        let d = DefSet::boolean(BoolOp::Union, &a, &b);
        assert!(d.eq_pointwise(&DefSet::full_line(z())));
        assert_eq!(d.components().len(), 2);
        assert!(d.components().iter().all(|c| c.interval == IntervalQ::full()));
    }

    #[test]
    fn affine_examples() {
        // Translate(-1) of (0,inf) over Z.
        let d = normalize(z(), vec![coset("0", "inf", 0, 1)]);
        let t = d.affine(&AffineOp::Translate(el("-1")));
        assert_eq!(members(&t, -5, 5), vec![0, 1, 2, 3, 4, 5]);

        // DivideBy(2) of (0,inf) cap 2Z is (0,inf) cap Z.
        let d = normalize(z(), vec![coset("0", "inf", 0, 2)]);
        let h = d.affine(&AffineOp::DivideBy(BigInt::from(2)));
        assert_eq!(h.modulus(), &BigInt::one());
        assert_eq!(members(&h, -3, 4), vec![1, 2, 3, 4]);

        // Reflect of {3} is {-3}.
        let d = normalize(z(), vec![RawPiece::Singleton(el("3"))]);
        let r = d.affine(&AffineOp::Reflect);
        assert_eq!(r.singletons(), &[el("-3")]);

        // ScaleBy(3) of 2Z is 6Z.
        let d = normalize(z(), vec![coset("-inf", "inf", 0, 2)]);
        let s = d.affine(&AffineOp::ScaleBy(BigInt::from(3)));
        assert_eq!(members(&s, -7, 13), vec![-6, 0, 6, 12]);
    }

    #[test]
    fn affine_round_trips() {
        let d = normalize(
            z(),
            vec![coset("0", "inf", 1, 3), RawPiece::Singleton(el("-4"))],
        );
        let back = d
            .affine(&AffineOp::Translate(el("7")))
            .affine(&AffineOp::Translate(el("-7")));
        assert!(back.eq_pointwise(&d));
        let refl = d.affine(&AffineOp::Reflect).affine(&AffineOp::Reflect);
        assert!(refl.eq_pointwise(&d));
        // DivideBy(n) of ScaleBy(n) is the identity.
        let n = BigInt::from(4);
        let rt = d.affine(&AffineOp::ScaleBy(n.clone())).affine(&AffineOp::DivideBy(n));
        assert!(rt.eq_pointwise(&d));
    }

    #[test]
    fn group_definability_verdicts() {
        // 2Z union {1}: yes, period 2, added {1}.
        let d = normalize(
            z(),
            vec![coset("-inf", "inf", 0, 2), RawPiece::Singleton(el("1"))],
        );
        match d.is_group_definable() {
            Verdict::Yes { period, core_residues, added, removed } => {
                assert_eq!(period, BigInt::from(2));
                assert_eq!(core_residues, vec![BigInt::zero()]);
                assert_eq!(added, vec![el("1")]);
                assert!(removed.is_empty());
            }
            v => panic!("expected yes, got {v:?}"),
        }

        // (0,inf) cap 2Z: no, residue 0, infinite toward +inf.
        let d = normalize(z(), vec![coset("0", "inf", 0, 2)]);
        assert_eq!(
            d.is_group_definable(),
            Verdict::No { residue: BigInt::zero(), end: End::PosInf }
        );

        // Finite set: yes with period 1 and empty core.
        let d = normalize(
            z(),
            vec![
                RawPiece::Singleton(el("1")),
                RawPiece::Singleton(el("5")),
                RawPiece::Singleton(el("9")),
            ],
        );
        match d.is_group_definable() {
            Verdict::Yes { period, core_residues, added, removed } => {
                assert_eq!(period, BigInt::one());
                assert!(core_residues.is_empty());
                assert_eq!(added, vec![el("1"), el("5"), el("9")]);
                assert!(removed.is_empty());
            }
            v => panic!("expected yes, got {v:?}"),
        }

        // Cofinite fiber: 2Z minus {0} is yes with removed {0}.
        let twoz = normalize(z(), vec![coset("-inf", "inf", 0, 2)]);
        let zero = normalize(z(), vec![RawPiece::Singleton(el("0"))]);
        let d = DefSet::boolean(BoolOp::Difference, &twoz, &zero);
        match d.is_group_definable() {
            Verdict::Yes { core_residues, removed, .. } => {
                assert_eq!(core_residues, vec![BigInt::zero()]);
                assert_eq!(removed, vec![el("0")]);
            }
            v => panic!("expected yes, got {v:?}"),
        }
    }

    #[test]
    fn dense_interval_coset_pieces() {
        // In Z[1/3]: (0,1) cap (2G + 1) for m=2 (eff 2).
        let m = GroundModel::localized(3);
        let d = normalize(
            m,
            vec![RawPiece::Coset {
                interval: iv("0", "1"),
                residue: el("1"),
                modulus: BigInt::from(2),
            }],
        );
        assert_eq!(d.modulus(), &BigInt::from(2));
        assert_eq!(d.components().len(), 1);
        // 1/3 has residue 1*inv(3) = 1 mod 2: member. 2/3 has residue 2*inv(3) = 0: not.
        assert!(d.member(&el("1/3")));
        assert!(!d.member(&el("2/3")));
        assert!(!d.member(&el("1")));

        // Complement: everything outside, plus the other fiber.
        let c = d.complement();
        assert!(c.member(&el("2/3")));
        assert!(c.member(&el("1")));
        assert!(c.member(&el("2")));
        assert!(!c.member(&el("1/3")));
        assert!(c.member(&el("7/3"))); // residue 1 but outside (0,1)
    }

    #[test]
    fn dense_point_merging() {
        // (0,1) union {1} union (1,2) over Q merges into (0,2).
        let q = GroundModel::rationals();
        let d = normalize(
            q,
            vec![
                RawPiece::interval(iv("0", "1")),
                RawPiece::Singleton(el("1")),
                RawPiece::interval(iv("1", "2")),
            ],
        );
        assert_eq!(d.components().len(), 1);
        assert_eq!(d.components()[0].interval, iv("0", "2"));
        assert!(d.singletons().is_empty());

        // Without the point, the pieces stay separate.
        let d = normalize(
            q,
            vec![RawPiece::interval(iv("0", "1")), RawPiece::interval(iv("1", "2"))],
        );
        assert_eq!(d.components().len(), 2);
        assert!(!d.member(&el("1")));
    }

    #[test]
    fn dense_group_definability() {
        let q = GroundModel::rationals();
        let full = DefSet::full_line(q);
        assert!(full.is_group_definable().is_yes());
        let ray = normalize(q, vec![RawPiece::interval(iv("0", "inf"))]);
        assert_eq!(
            ray.is_group_definable(),
            Verdict::No { residue: BigInt::zero(), end: End::PosInf }
        );
        let bounded = normalize(q, vec![RawPiece::interval(iv("0", "1"))]);
        assert!(!bounded.is_group_definable().is_yes());
    }

    #[test]
    fn boolean_laws_pointwise() {
        let z = z();
        let a = normalize(z, vec![coset("-3", "inf", 1, 3), RawPiece::Singleton(el("-10"))]);
        let b = normalize(z, vec![coset("-inf", "20", 0, 2)]);
        // De Morgan.
        let lhs = DefSet::boolean(BoolOp::Union, &a, &b).complement();
        let rhs = DefSet::boolean(BoolOp::Intersect, &a.complement(), &b.complement());
        assert!(lhs.eq_pointwise(&rhs));
        // Idempotence and excluded middle.
        assert!(DefSet::boolean(BoolOp::Union, &a, &a).eq_pointwise(&a));
        assert!(DefSet::boolean(BoolOp::Union, &a, &a.complement())
            .eq_pointwise(&DefSet::full_line(z)));
    }

    #[test]
    fn json_shape() {
        let d = normalize(z(), vec![coset("0", "inf", 0, 2), RawPiece::Singleton(el("-7"))]);
        let s = serde_json::to_string(&d.to_json()).unwrap();
        assert_eq!(
            s,
            r#"{"mode":"z","modulus":"2","singletons":["-7"],"components":[{"lo":"1","hi":"inf","residue":"0"}]}"#
        );
    }
}
