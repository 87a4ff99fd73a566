//! The ambient group: discrete integers, or a dense group of rationals
//! (all of them, or those with denominators a power of a fixed prime).
//!
//! All congruence arithmetic funnels through two primitives: the *effective
//! modulus* of `m` (the index of `mG` in `G`) and the *canonical residue* of
//! an element modulo `mG`, an integer in `[0, eff(m))`. In the discrete
//! model these are `m` and `g mod m`; in the full rationals every `mG` is
//! the whole group; with denominators restricted to powers of `p`, the
//! p-part of `m` acts invertibly and drops out.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use std::fmt;

/// An exact element of the ambient group, kept as a rational.
pub type Elem = BigRational;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DenseKind {
    FullRationals,
    /// Denominators restricted to powers of the given prime.
    LocalizedAt(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GroundModel {
    Discrete,
    Dense(DenseKind),
}

impl GroundModel {
    pub fn discrete() -> Self {
        GroundModel::Discrete
    }

    pub fn rationals() -> Self {
        GroundModel::Dense(DenseKind::FullRationals)
    }

    pub fn localized(p: u32) -> Self {
        GroundModel::Dense(DenseKind::LocalizedAt(p))
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, GroundModel::Discrete)
    }

    pub fn is_dense(&self) -> bool {
        !self.is_discrete()
    }

    /// Whether an exact rational denotes an element of the group.
    pub fn contains(&self, g: &Elem) -> bool {
        match self {
            GroundModel::Discrete => g.denom().is_one(),
            GroundModel::Dense(DenseKind::FullRationals) => true,
            GroundModel::Dense(DenseKind::LocalizedAt(p)) => {
                is_power_of(g.denom(), &BigInt::from(*p))
            }
        }
    }

    /// The index of `mG` in `G`: `m` in the discrete model, `1` over the
    /// full rationals, and the prime-to-p part of `m` when denominators are
    /// powers of `p`.
    pub fn effective_modulus(&self, m: &BigInt) -> BigInt {
        assert!(m.is_positive(), "modulus must be >= 1");
        match self {
            GroundModel::Discrete => m.clone(),
            GroundModel::Dense(DenseKind::FullRationals) => BigInt::one(),
            GroundModel::Dense(DenseKind::LocalizedAt(p)) => {
                let p = BigInt::from(*p);
                let mut m = m.clone();
                while (&m % &p).is_zero() {
                    m /= &p;
                }
                m
            }
        }
    }

    /// Canonical residue of `g` modulo `mG`, as an integer in
    /// `[0, effective_modulus(m))`. Requires `g` in the group.
    pub fn canon_residue(&self, g: &Elem, m_eff: &BigInt) -> BigInt {
        debug_assert!(self.contains(g));
        if m_eff.is_one() {
            return BigInt::zero();
        }
        match self {
            GroundModel::Discrete => g.numer().mod_floor(m_eff),
            GroundModel::Dense(DenseKind::FullRationals) => BigInt::zero(),
            GroundModel::Dense(DenseKind::LocalizedAt(_)) => {
                // g = u / p^e with gcd(p, m_eff) = 1, so the denominator is
                // invertible mod m_eff.
                let inv = mod_inverse(g.denom(), m_eff)
                    .expect("denominator not invertible modulo effective modulus");
                (g.numer() * inv).mod_floor(m_eff)
            }
        }
    }

    /// Whether `a - b` lies in `mG`.
    pub fn congruent(&self, a: &Elem, b: &Elem, m: &BigInt) -> bool {
        let m_eff = self.effective_modulus(m);
        self.canon_residue(&(a - b), &m_eff).is_zero()
    }

    /// Solves `n*x ≡ c (mod mG)` for `x` ranging over the group, with
    /// `n >= 1` and `c` in the group. Returns the solution coset as
    /// `(effective modulus, canonical residue)`, or `None` if unsolvable.
    pub fn solve_congruence(&self, n: &BigInt, c: &Elem, m: &BigInt) -> Option<(BigInt, BigInt)> {
        let m_eff = self.effective_modulus(m);
        if m_eff.is_one() {
            return Some((BigInt::one(), BigInt::zero()));
        }
        let c_res = self.canon_residue(c, &m_eff);
        // Linear congruence n*X ≡ c_res (mod m_eff) over Z/m_eff; the
        // non-invertible part of n is gcd(n, m_eff).
        let g = n.gcd(&m_eff);
        if !(&c_res % &g).is_zero() {
            return None;
        }
        let m2 = &m_eff / &g;
        if m2.is_one() {
            return Some((BigInt::one(), BigInt::zero()));
        }
        let n2 = (n / &g).mod_floor(&m2);
        let c2 = (&c_res / &g).mod_floor(&m2);
        let inv = mod_inverse(&n2, &m2).expect("reduced coefficient must be invertible");
        Some((m2.clone(), (c2 * inv).mod_floor(&m2)))
    }

    /// Chinese-remainder intersection of two cosets given by effective
    /// moduli and canonical residues. Returns the combined coset or `None`
    /// when they are disjoint.
    pub fn combine_cosets(
        m1: &BigInt,
        r1: &BigInt,
        m2: &BigInt,
        r2: &BigInt,
    ) -> Option<(BigInt, BigInt)> {
        let g = m1.gcd(m2);
        if !((r1 - r2).mod_floor(&g)).is_zero() {
            return None;
        }
        let l = m1.lcm(m2);
        // r ≡ r1 (mod m1), r ≡ r2 (mod m2): step through r1 + k*m1.
        let m2g = m2 / &g;
        let step_inv = mod_inverse(&(m1 / &g).mod_floor(&m2g), &m2g).unwrap_or_else(BigInt::one);
        let k = (((r2 - r1) / &g) * step_inv).mod_floor(&m2g);
        let r = (r1 + k * m1).mod_floor(&l);
        Some((l, r))
    }
}

impl fmt::Display for GroundModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroundModel::Discrete => write!(f, "z"),
            GroundModel::Dense(DenseKind::FullRationals) => write!(f, "q"),
            GroundModel::Dense(DenseKind::LocalizedAt(p)) => write!(f, "zp:{}", p),
        }
    }
}

/// Parses the `--model` spelling: `z`, `q` or `zp:<p>`.
pub fn parse_model(s: &str) -> Option<GroundModel> {
    match s {
        "z" => Some(GroundModel::Discrete),
        "q" => Some(GroundModel::rationals()),
        _ => {
            let p: u32 = s.strip_prefix("zp:")?.parse().ok()?;
            if p >= 2 && is_prime(p) {
                Some(GroundModel::localized(p))
            } else {
                None
            }
        }
    }
}

fn is_prime(n: u32) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2u32;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

fn is_power_of(n: &BigInt, p: &BigInt) -> bool {
    let mut n = n.clone();
    if n.is_one() {
        return true;
    }
    while (&n % p).is_zero() {
        n /= p;
    }
    n.is_one()
}

/// Modular inverse of `a` modulo `m` (requires `gcd(a, m) = 1`).
pub fn mod_inverse(a: &BigInt, m: &BigInt) -> Option<BigInt> {
    let e = a.extended_gcd(m);
    if e.gcd.is_one() {
        Some(e.x.mod_floor(m))
    } else {
        None
    }
}
