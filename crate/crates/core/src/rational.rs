//! Exact rationals extended with `+inf` / `-inf`, used for interval
//! endpoints living in the divisible hull.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use std::cmp::Ordering;
use std::fmt;

/// A rational number extended with two infinities. The order is the usual
/// one, with `-inf` below and `+inf` above every rational.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExtQRat {
    NegInf,
    Fin(BigRational),
    PosInf,
}

impl ExtQRat {
    pub fn zero() -> Self {
        ExtQRat::Fin(BigRational::zero())
    }

    pub fn from_int(n: i64) -> Self {
        ExtQRat::Fin(BigRational::from_integer(BigInt::from(n)))
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, ExtQRat::Fin(_))
    }

    pub fn as_finite(&self) -> Option<&BigRational> {
        match self {
            ExtQRat::Fin(q) => Some(q),
            _ => None,
        }
    }

    /// Multiplication by a positive integer, with `n * (+-inf) = +-inf`.
    pub fn scale(&self, n: &BigInt) -> ExtQRat {
        assert!(n.is_positive());
        match self {
            ExtQRat::NegInf => ExtQRat::NegInf,
            ExtQRat::PosInf => ExtQRat::PosInf,
            ExtQRat::Fin(q) => ExtQRat::Fin(q * BigRational::from_integer(n.clone())),
        }
    }

    /// Division by a positive integer, with `(+-inf) / n = +-inf`.
    pub fn div_int(&self, n: &BigInt) -> ExtQRat {
        assert!(n.is_positive());
        match self {
            ExtQRat::NegInf => ExtQRat::NegInf,
            ExtQRat::PosInf => ExtQRat::PosInf,
            ExtQRat::Fin(q) => ExtQRat::Fin(q / BigRational::from_integer(n.clone())),
        }
    }

    /// Translation by a finite rational; infinities are fixed.
    pub fn shift(&self, g: &BigRational) -> ExtQRat {
        match self {
            ExtQRat::NegInf => ExtQRat::NegInf,
            ExtQRat::PosInf => ExtQRat::PosInf,
            ExtQRat::Fin(q) => ExtQRat::Fin(q + g),
        }
    }

    /// Negation, swapping the infinities.
    pub fn neg(&self) -> ExtQRat {
        match self {
            ExtQRat::NegInf => ExtQRat::PosInf,
            ExtQRat::PosInf => ExtQRat::NegInf,
            ExtQRat::Fin(q) => ExtQRat::Fin(-q),
        }
    }
}

impl PartialOrd for ExtQRat {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ExtQRat {
    fn cmp(&self, other: &Self) -> Ordering {
        use ExtQRat::*;
        match (self, other) {
            (NegInf, NegInf) | (PosInf, PosInf) => Ordering::Equal,
            (NegInf, _) | (_, PosInf) => Ordering::Less,
            (_, NegInf) | (PosInf, _) => Ordering::Greater,
            (Fin(a), Fin(b)) => a.cmp(b),
        }
    }
}

impl fmt::Display for ExtQRat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtQRat::NegInf => write!(f, "-inf"),
            ExtQRat::PosInf => write!(f, "inf"),
            ExtQRat::Fin(q) => write!(f, "{}", format_rat(q)),
        }
    }
}

/// Canonical `p/q` rendering; integers print without the denominator.
pub fn format_rat(q: &BigRational) -> String {
    if q.denom().is_one() {
        q.numer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

/// Parses `p`, `p/q`, `inf` or `-inf`.
pub fn parse_ext(s: &str) -> Option<ExtQRat> {
    match s {
        "inf" | "+inf" => Some(ExtQRat::PosInf),
        "-inf" => Some(ExtQRat::NegInf),
        _ => parse_rat(s).map(ExtQRat::Fin),
    }
}

/// Parses `p` or `p/q` into an exact rational.
pub fn parse_rat(s: &str) -> Option<BigRational> {
    let (num, den) = match s.split_once('/') {
        Some((n, d)) => (n, d),
        None => (s, "1"),
    };
    let n: BigInt = num.parse().ok()?;
    let d: BigInt = den.parse().ok()?;
    if d.is_zero() {
        return None;
    }
    Some(BigRational::new(n, d))
}
