//! Exact integer/rational lattice computations: Smith and Hermite normal
//! forms, quotient cardinalities |G/mG|, and algebraic closure as a
//! rational-span intersection.
//!
//! Groups here are finitely generated subgroups of ℚ^d, hence free of
//! finite rank; everything reduces to exact integer matrix arithmetic.

use crate::rational::{format_rat, parse_rat};
use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde_json::{json, Value};
use thiserror::Error;

pub type IMat = Vec<Vec<BigInt>>;
pub type QVec = Vec<BigRational>;

#[derive(Debug, Error)]
pub enum LatticeError {
    #[error("generator has dimension {got}, ambient dimension is {want}")]
    DimensionMismatch { want: usize, got: usize },
    #[error("quotient by m = 0 is infinite")]
    ZeroModulus,
    #[error("the given point is not an element of the group")]
    NotInGroup,
    #[error("discrete closure is supported only for G = Z (rank 1 containing 1)")]
    UnsupportedDiscrete,
    #[error("malformed generator JSON: {0}")]
    BadJson(String),
}

// ---------------------------------------------------------------------------
// Smith normal form
// ---------------------------------------------------------------------------

/// `U·A·V = S` with `U`, `V` unimodular and `S` diagonal, `sᵢ ≥ 0`,
/// `sᵢ | sᵢ₊₁`.
#[derive(Debug, Clone, PartialEq)]
pub struct SnfResult {
    pub u: IMat,
    pub s: IMat,
    pub v: IMat,
}

pub fn identity(n: usize) -> IMat {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { BigInt::one() } else { BigInt::zero() }).collect())
        .collect()
}

pub fn mat_mul(a: &IMat, b: &IMat) -> IMat {
    let n = a.len();
    let k = b.len();
    let m = if k == 0 { 0 } else { b[0].len() };
    let mut out = vec![vec![BigInt::zero(); m]; n];
    for i in 0..n {
        for t in 0..k {
            if a[i][t].is_zero() {
                continue;
            }
            for j in 0..m {
                let prod = &a[i][t] * &b[t][j];
                out[i][j] += prod;
            }
        }
    }
    out
}

pub fn smith_normal_form(a: &IMat) -> SnfResult {
    let n = a.len();
    let m = if n == 0 { 0 } else { a[0].len() };
    let mut s = a.clone();
    let mut u = identity(n);
    let mut v = identity(m);

    for t in 0..n.min(m) {
        'outer: loop {
            // Pick the nonzero entry of minimal absolute value as pivot.
            let mut pivot: Option<(usize, usize)> = None;
            for i in t..n {
                for j in t..m {
                    if !s[i][j].is_zero()
                        && pivot
                            .map(|(pi, pj)| s[i][j].abs() < s[pi][pj].abs())
                            .unwrap_or(true)
                    {
                        pivot = Some((i, j));
                    }
                }
            }
            let (pi, pj) = match pivot {
                Some(p) => p,
                None => break,
            };
            s.swap(t, pi);
            u.swap(t, pi);
            for row in s.iter_mut() {
                row.swap(t, pj);
            }
            for row in v.iter_mut() {
                row.swap(t, pj);
            }

            // Clear the pivot column with row operations.
            let mut dirty = false;
            for i in (t + 1)..n {
                if !s[i][t].is_zero() {
                    let q = div_round(&s[i][t], &s[t][t]);
                    for j in 0..m {
                        let d = &q * &s[t][j];
                        s[i][j] -= d;
                    }
                    for j in 0..n {
                        let d = &q * &u[t][j];
                        u[i][j] -= d;
                    }
                    if !s[i][t].is_zero() {
                        dirty = true;
                    }
                }
            }
            // Clear the pivot row with column operations.
            for j in (t + 1)..m {
                if !s[t][j].is_zero() {
                    let q = div_round(&s[t][j], &s[t][t]);
                    for i in 0..n {
                        let d = &q * &s[i][t];
                        s[i][j] -= d;
                    }
                    for i in 0..m {
                        let dv = &q * &v[i][t];
                        v[i][j] -= dv;
                    }
                    if !s[t][j].is_zero() {
                        dirty = true;
                    }
                }
            }
            if dirty {
                continue;
            }
            // Enforce the divisibility chain: s[t][t] must divide every
            // remaining entry; otherwise fold the offending row in.
            for i in (t + 1)..n {
                for j in (t + 1)..m {
                    if !(&s[i][j] % &s[t][t]).is_zero() {
                        for jj in 0..m {
                            let d = s[i][jj].clone();
                            s[t][jj] += d;
                        }
                        for jj in 0..n {
                            let d = u[i][jj].clone();
                            u[t][jj] += d;
                        }
                        continue 'outer;
                    }
                }
            }
            break;
        }
        if s[t][t].is_negative() {
            for j in 0..m {
                s[t][j] = -s[t][j].clone();
            }
            for j in 0..n {
                u[t][j] = -u[t][j].clone();
            }
        }
    }
    SnfResult { u, s, v }
}

/// Rounded division minimizing the remainder, used to shrink entries fast.
fn div_round(a: &BigInt, b: &BigInt) -> BigInt {
    let (q, r) = a.div_rem(b);
    if &r.abs() * 2 > b.abs() {
        if (r.is_negative()) == (b.is_negative()) {
            q + 1
        } else {
            q - 1
        }
    } else {
        q
    }
}

/// Determinant by fraction-free elimination (used to certify
/// unimodularity in tests and the CLI).
pub fn determinant(a: &IMat) -> BigInt {
    let n = a.len();
    let mut m: Vec<QVec> = a
        .iter()
        .map(|r| r.iter().map(|x| BigRational::from_integer(x.clone())).collect())
        .collect();
    let mut det = BigRational::one();
    for col in 0..n {
        let pivot = (col..n).find(|&i| !m[i][col].is_zero());
        let pivot = match pivot {
            Some(p) => p,
            None => return BigInt::zero(),
        };
        if pivot != col {
            m.swap(col, pivot);
            det = -det;
        }
        det *= &m[col][col];
        let inv = m[col][col].clone();
        for i in (col + 1)..n {
            if m[i][col].is_zero() {
                continue;
            }
            let f = &m[i][col] / &inv;
            for j in col..n {
                let d = &f * &m[col][j];
                m[i][j] -= d;
            }
        }
    }
    assert!(det.is_integer());
    det.to_integer()
}

// ---------------------------------------------------------------------------
// Hermite normal form (column style)
// ---------------------------------------------------------------------------

/// Canonical column echelon basis of the column lattice of `c` (d×k):
/// pivot rows strictly increase, pivots are positive, and entries to the
/// left of a pivot are reduced into `[0, pivot)`. Zero columns are
/// dropped.
pub fn column_hnf(c: &IMat) -> IMat {
    let d = c.len();
    let k = if d == 0 { 0 } else { c[0].len() };
    // Work with columns as vectors.
    let mut cols: Vec<Vec<BigInt>> = (0..k).map(|j| (0..d).map(|i| c[i][j].clone()).collect()).collect();
    let mut next = 0usize;
    for row in 0..d {
        // Combine columns so that at most one has a nonzero entry in `row`.
        loop {
            let nz: Vec<usize> = (next..cols.len()).filter(|&j| !cols[j][row].is_zero()).collect();
            if nz.len() <= 1 {
                break;
            }
            let (j1, j2) = (nz[0], nz[1]);
            let a = cols[j1][row].clone();
            let b = cols[j2][row].clone();
            let e = a.extended_gcd(&b);
            let (g, x, y) = (e.gcd, e.x, e.y);
            let ca = &a / &g;
            let cb = &b / &g;
            for i in 0..d {
                let n1 = &x * &cols[j1][i] + &y * &cols[j2][i];
                let n2 = -&cb * &cols[j1][i] + &ca * &cols[j2][i];
                cols[j1][i] = n1;
                cols[j2][i] = n2;
            }
        }
        if let Some(j) = (next..cols.len()).find(|&j| !cols[j][row].is_zero()) {
            cols.swap(next, j);
            if cols[next][row].is_negative() {
                for x in cols[next].iter_mut() {
                    *x = -x.clone();
                }
            }
            // Reduce earlier columns at this row into [0, pivot).
            let p = cols[next][row].clone();
            for j in 0..next {
                let q = cols[j][row].div_floor(&p);
                if !q.is_zero() {
                    for i in 0..d {
                        let dlt = &q * &cols[next][i];
                        cols[j][i] -= dlt;
                    }
                }
            }
            next += 1;
        }
    }
    cols.truncate(next);
    // Back to row-major d×next.
    (0..d).map(|i| cols.iter().map(|col| col[i].clone()).collect()).collect()
}

// ---------------------------------------------------------------------------
// Rational span helpers
// ---------------------------------------------------------------------------

/// Row-reduces a rational matrix in place; returns its rank.
fn row_reduce(m: &mut Vec<QVec>) -> usize {
    let rows = m.len();
    let cols = if rows == 0 { 0 } else { m[0].len() };
    let mut r = 0usize;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let pivot = (r..rows).find(|&i| !m[i][c].is_zero());
        let pivot = match pivot {
            Some(p) => p,
            None => continue,
        };
        m.swap(r, pivot);
        let inv = m[r][c].clone();
        for x in m[r].iter_mut() {
            *x /= inv.clone();
        }
        for i in 0..rows {
            if i != r && !m[i][c].is_zero() {
                let f = m[i][c].clone();
                for j in 0..cols {
                    let d = &f * &m[r][j];
                    m[i][j] -= d;
                }
            }
        }
        r += 1;
    }
    r
}

/// Is `v` in the rational span of `vecs`?
pub fn in_span(vecs: &[QVec], v: &QVec) -> bool {
    let mut m: Vec<QVec> = vecs.to_vec();
    let before = row_reduce(&mut m);
    m.push(v.clone());
    let after = row_reduce(&mut m);
    after == before
}

/// A basis of the functionals vanishing on the span of `vecs`
/// (the left null space of the d×k matrix with `vecs` as columns).
fn orthogonal_complement(dim: usize, vecs: &[QVec]) -> Vec<QVec> {
    // Solve nᵀ·a = 0 for all a: row-reduce the k×d matrix of the vectors
    // as rows, then read a kernel basis off the free columns.
    let mut m: Vec<QVec> = vecs.to_vec();
    let rank = row_reduce(&mut m);
    m.truncate(rank);
    let mut pivots: Vec<usize> = Vec::new();
    for row in &m {
        if let Some(c) = row.iter().position(|x| !x.is_zero()) {
            pivots.push(c);
        }
    }
    let mut out: Vec<QVec> = Vec::new();
    for free in 0..dim {
        if pivots.contains(&free) {
            continue;
        }
        let mut n = vec![BigRational::zero(); dim];
        n[free] = BigRational::one();
        for (ri, &pc) in pivots.iter().enumerate() {
            n[pc] = -m[ri][free].clone();
        }
        out.push(n);
    }
    out
}

// ---------------------------------------------------------------------------
// LatticeGroup
// ---------------------------------------------------------------------------

/// A finitely generated subgroup of ℚ^d, canonically represented by the
/// Hermite basis of its generator lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeGroup {
    dim: usize,
    /// Canonical basis (column Hermite form scaled back to ℚ); empty for
    /// the zero group.
    basis: Vec<QVec>,
}

impl LatticeGroup {
    pub fn new(dim: usize, gens: Vec<QVec>) -> Result<LatticeGroup, LatticeError> {
        for g in &gens {
            if g.len() != dim {
                return Err(LatticeError::DimensionMismatch { want: dim, got: g.len() });
            }
        }
        // Clear denominators: G ⊆ (1/q)ℤ^d, take the HNF there, scale back.
        let mut q = BigInt::one();
        for g in &gens {
            for x in g {
                q = q.lcm(x.denom());
            }
        }
        let qr = BigRational::from_integer(q.clone());
        let d = dim;
        let k = gens.len();
        let mut c: IMat = vec![vec![BigInt::zero(); k]; d];
        for (j, g) in gens.iter().enumerate() {
            for i in 0..d {
                let scaled = &g[i] * &qr;
                debug_assert!(scaled.is_integer());
                c[i][j] = scaled.to_integer();
            }
        }
        let h = column_hnf(&c);
        let r = if h.is_empty() { 0 } else { h[0].len() };
        let basis = (0..r)
            .map(|j| (0..d).map(|i| BigRational::from_integer(h[i][j].clone()) / &qr).collect())
            .collect();
        Ok(LatticeGroup { dim, basis })
    }

    pub fn zero(dim: usize) -> LatticeGroup {
        LatticeGroup { dim, basis: Vec::new() }
    }

    /// The standard lattice ℤ^d.
    pub fn standard(dim: usize) -> LatticeGroup {
        let gens = (0..dim)
            .map(|i| {
                (0..dim)
                    .map(|j| if i == j { BigRational::one() } else { BigRational::zero() })
                    .collect()
            })
            .collect();
        LatticeGroup::new(dim, gens).unwrap()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Canonical (Hermite) basis; two groups are equal iff these agree.
    pub fn basis(&self) -> &[QVec] {
        &self.basis
    }

    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    pub fn contains(&self, v: &QVec) -> bool {
        if v.len() != self.dim {
            return false;
        }
        // Forward-solve basis·x = v and demand integer x; the basis is in
        // column echelon form with strictly increasing pivot rows.
        let mut rem = v.clone();
        let mut pivots: Vec<usize> = Vec::new();
        for b in &self.basis {
            pivots.push(b.iter().position(|x| !x.is_zero()).expect("basis columns are nonzero"));
        }
        for (j, b) in self.basis.iter().enumerate() {
            let p = pivots[j];
            if rem[p].is_zero() {
                continue;
            }
            let x = &rem[p] / &b[p];
            if !x.is_integer() {
                return false;
            }
            for i in 0..self.dim {
                let d = &x * &b[i];
                rem[i] -= d;
            }
        }
        rem.iter().all(|x| x.is_zero())
    }

    /// |G/mG| = m^rank, exact; errors on m = 0 (infinite for rank > 0).
    pub fn quotient_card(&self, m: &BigInt) -> Result<BigInt, LatticeError> {
        if m.is_zero() {
            return Err(LatticeError::ZeroModulus);
        }
        Ok(m.abs().pow(self.rank() as u32))
    }

    /// Independent coset count: residues of generator combinations with
    /// coefficients in `0..m`, distinguished by the membership test
    /// `g - h ∈ mG`. Exponential in the rank; meant for small cases.
    pub fn quotient_card_brute(&self, m: &BigInt) -> Result<usize, LatticeError> {
        if m.is_zero() {
            return Err(LatticeError::ZeroModulus);
        }
        let m_usize = usize::try_from(&m.abs()).expect("brute quotient count needs small m");
        let mq = BigRational::from_integer(m.clone());
        let in_mg = |v: &QVec| -> bool {
            let scaled: QVec = v.iter().map(|x| x / &mq).collect();
            self.contains(&scaled)
        };
        let mut reps: Vec<QVec> = Vec::new();
        let r = self.rank();
        let mut counters = vec![0usize; r];
        loop {
            let mut v = vec![BigRational::zero(); self.dim];
            for (j, b) in self.basis.iter().enumerate() {
                let c = BigRational::from_integer(BigInt::from(counters[j]));
                for i in 0..self.dim {
                    let d = &c * &b[i];
                    v[i] += d;
                }
            }
            let diff_in = |rep: &QVec| {
                let diff: QVec = v.iter().zip(rep).map(|(a, b)| a - b).collect();
                in_mg(&diff)
            };
            if !reps.iter().any(|rep| diff_in(rep)) {
                reps.push(v);
            }
            // Increment the mixed-radix counter.
            let mut j = 0;
            loop {
                if j == r {
                    return Ok(reps.len());
                }
                counters[j] += 1;
                if counters[j] < m_usize {
                    break;
                }
                counters[j] = 0;
                j += 1;
            }
            if r == 0 {
                return Ok(reps.len());
            }
        }
    }

    pub fn to_json(&self) -> Value {
        json!({
            "dim": self.dim,
            "rank": self.rank(),
            "basis": self
                .basis
                .iter()
                .map(|b| Value::Array(b.iter().map(|x| Value::String(format_rat(x))).collect()))
                .collect::<Vec<_>>(),
        })
    }

    /// Parses `{"dim": d, "gens": [["p/q", ...], ...]}` (or a bare array
    /// of generator arrays, with the dimension inferred).
    pub fn from_json(v: &Value) -> Result<LatticeGroup, LatticeError> {
        let (dim, gens_v) = match v {
            Value::Object(o) => {
                let gens = o.get("gens").ok_or_else(|| LatticeError::BadJson("missing \"gens\"".into()))?;
                let arr = gens
                    .as_array()
                    .ok_or_else(|| LatticeError::BadJson("\"gens\" must be an array".into()))?;
                let dim = match o.get("dim").and_then(Value::as_u64) {
                    Some(d) => d as usize,
                    None => arr.first().and_then(Value::as_array).map(|a| a.len()).unwrap_or(0),
                };
                (dim, arr.clone())
            }
            Value::Array(arr) => {
                let dim = arr.first().and_then(Value::as_array).map(|a| a.len()).unwrap_or(0);
                (dim, arr.clone())
            }
            _ => return Err(LatticeError::BadJson("expected object or array".into())),
        };
        let mut gens: Vec<QVec> = Vec::new();
        for gv in &gens_v {
            let row = gv
                .as_array()
                .ok_or_else(|| LatticeError::BadJson("generator must be an array".into()))?;
            let mut g: QVec = Vec::new();
            for x in row {
                let s = x
                    .as_str()
                    .ok_or_else(|| LatticeError::BadJson("entries must be \"p/q\" strings".into()))?;
                g.push(
                    parse_rat(s)
                        .ok_or_else(|| LatticeError::BadJson(format!("bad rational {s:?}")))?,
                );
            }
            gens.push(g);
        }
        LatticeGroup::new(dim, gens)
    }
}

/// One row of the small-quotients table.
#[derive(Debug, Clone, PartialEq)]
pub struct QuotientEntry {
    pub m: BigInt,
    pub card: BigInt,
    /// `card ≤ m^dim` — the small-quotients bound for subgroups of ℚ^d.
    pub within_bound: bool,
}

pub fn has_small_quotients(g: &LatticeGroup, up_to: &BigInt) -> Vec<QuotientEntry> {
    let mut out = Vec::new();
    let mut m = BigInt::one();
    while &m <= up_to {
        let card = g.quotient_card(&m).expect("m >= 1");
        let bound = m.pow(g.dim() as u32);
        out.push(QuotientEntry { m: m.clone(), within_bound: card <= bound, card });
        m += 1;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AclMode {
    Discrete,
    Dense,
}

/// Algebraic closure of a finite set: the rational span of `A` (together
/// with the definable unit in the discrete case) intersected with `G`.
/// Dense mode computes span(A) ∩ G by kernel saturation; discrete mode
/// supports only G = ℤ, where the named 1 spans everything.
pub fn acl_closure(
    g: &LatticeGroup,
    a: &[QVec],
    mode: AclMode,
) -> Result<LatticeGroup, LatticeError> {
    for v in a {
        if !g.contains(v) {
            return Err(LatticeError::NotInGroup);
        }
    }
    match mode {
        AclMode::Discrete => {
            let one = vec![BigRational::one()];
            if g.dim() != 1 || g.rank() != 1 || !g.contains(&one) {
                return Err(LatticeError::UnsupportedDiscrete);
            }
            // spn⁺(A) ⊇ spn{1} = ℚ, so the closure is all of G.
            Ok(g.clone())
        }
        AclMode::Dense => {
            // Functionals vanishing on span(A), restricted to the basis:
            // integer solutions x of (N·B)·x = 0 parameterize span(A) ∩ G.
            let d = g.dim();
            let r = g.rank();
            let n = orthogonal_complement(d, a);
            if n.is_empty() {
                // span(A) is everything.
                return Ok(g.clone());
            }
            // M = N·B as a rational (|N| × r) matrix, then cleared to integers.
            let mut mq: Vec<QVec> = Vec::new();
            for row in &n {
                let mut out_row: QVec = Vec::new();
                for b in g.basis() {
                    let mut acc = BigRational::zero();
                    for i in 0..d {
                        let p = &row[i] * &b[i];
                        acc += p;
                    }
                    out_row.push(acc);
                }
                mq.push(out_row);
            }
            let mut q = BigInt::one();
            for row in &mq {
                for x in row {
                    q = q.lcm(x.denom());
                }
            }
            let qr = BigRational::from_integer(q);
            let mi: IMat = mq
                .iter()
                .map(|row| row.iter().map(|x| (x * &qr).to_integer()).collect())
                .collect();
            // Integer kernel of mi via SNF: columns of V whose diagonal
            // entry is zero (or absent) form a basis; the kernel of an
            // integer matrix is automatically saturated in ℤ^r.
            let snf = smith_normal_form(&mi);
            let rows = mi.len();
            let mut kernel_cols: Vec<usize> = Vec::new();
            for j in 0..r {
                let diag_zero = j >= rows || snf.s[j][j].is_zero();
                if diag_zero {
                    kernel_cols.push(j);
                }
            }
            let mut gens: Vec<QVec> = Vec::new();
            for &j in &kernel_cols {
                let mut v = vec![BigRational::zero(); d];
                for (bj, b) in g.basis().iter().enumerate() {
                    let c = BigRational::from_integer(snf.v[bj][j].clone());
                    for i in 0..d {
                        let p = &c * &b[i];
                        v[i] += p;
                    }
                }
                gens.push(v);
            }
            LatticeGroup::new(d, gens)
        }
    }
}
