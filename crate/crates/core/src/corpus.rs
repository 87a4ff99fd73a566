//! Seeded random formula corpus for differential testing.
//!
//! The generator keeps formulas inside the fragment the brute-force oracle
//! decides exactly: quantifier depth at most 3, atoms inside a quantified
//! body mention only that body's own variable and the globally free
//! variables, at most two congruence atoms per formula, coefficients up to
//! 7 and moduli up to 12.

use crate::formula::{Atom, Formula, Term};
use crate::model::{DenseKind, GroundModel};
use num_bigint::BigInt;
use num_rational::BigRational;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;

pub const MAX_DEPTH: usize = 3;
pub const MAX_COEFF: i64 = 4;
pub const MAX_MODULUS: i64 = 12;
pub const MAX_CONG_ATOMS: usize = 2;

/// `count` formulas whose free variables are exactly `free_vars`
/// (at most 3), deterministically derived from `seed`.
pub fn generate(model: &GroundModel, seed: u64, count: usize, free_vars: &[&str]) -> Vec<Formula> {
    assert!(!free_vars.is_empty() && free_vars.len() <= 3);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let want: BTreeSet<String> = free_vars.iter().map(|s| s.to_string()).collect();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let mut gen = Gen { model: *model, rng: &mut rng, cong_left: MAX_CONG_ATOMS, fresh: 0 };
        let frees: Vec<String> = free_vars.iter().map(|s| s.to_string()).collect();
        let f = gen.formula(MAX_DEPTH, &frees, &frees);
        if f.free_vars() == want {
            out.push(f);
        }
    }
    out
}

struct Gen<'a> {
    model: GroundModel,
    rng: &'a mut ChaCha8Rng,
    cong_left: usize,
    fresh: usize,
}

impl<'a> Gen<'a> {
    /// `allowed`: variables atoms at this level may use.
    /// `frees`: the global free variables (atom vocabulary under any
    /// deeper quantifier is `frees` plus that quantifier's own variable).
    fn formula(&mut self, depth: usize, allowed: &[String], frees: &[String]) -> Formula {
        let roll = self.rng.gen_range(0..100);
        match roll {
            0..=39 => Formula::Atom(self.atom(allowed)),
            40..=54 => Formula::and(self.formula(depth, allowed, frees), self.formula(depth, allowed, frees)),
            55..=69 => Formula::or(self.formula(depth, allowed, frees), self.formula(depth, allowed, frees)),
            70..=79 => Formula::not(self.formula(depth, allowed, frees)),
            80..=84 => Formula::implies(self.formula(depth, allowed, frees), self.formula(depth, allowed, frees)),
            // Cap distinct quantified variables so one-free-variable
            // corpora stay within three variables total.
            _ if depth > 0 && self.fresh < 2 => {
                let v = format!("w{}", self.fresh);
                self.fresh += 1;
                let mut inner = frees.to_vec();
                inner.push(v.clone());
                let body = self.formula(depth - 1, &inner, frees);
                if self.rng.gen_bool(0.5) {
                    Formula::exists(&v, body)
                } else {
                    Formula::forall(&v, body)
                }
            }
            _ => Formula::Atom(self.atom(allowed)),
        }
    }

    fn atom(&mut self, allowed: &[String]) -> Atom {
        let s = self.term(allowed);
        let t = self.term(allowed);
        match self.rng.gen_range(0..10) {
            0..=3 => Atom::Lt(s, t),
            4..=6 => Atom::Eq(s, t),
            _ if self.cong_left > 0 => {
                self.cong_left -= 1;
                let m = BigInt::from(self.rng.gen_range(2..=MAX_MODULUS));
                Atom::Cong(m, s, t)
            }
            _ => Atom::Lt(s, t),
        }
    }

    fn term(&mut self, allowed: &[String]) -> Term {
        let mut t = Term::constant(self.literal());
        for v in allowed {
            if self.rng.gen_bool(0.6) {
                let c = self.rng.gen_range(-MAX_COEFF..=MAX_COEFF);
                if c != 0 {
                    t = t.add(&Term::monomial(v, BigInt::from(c)));
                }
            }
        }
        t
    }

    /// A constant from the ground model; dense models occasionally get a
    /// non-integer literal.
    fn literal(&mut self) -> BigRational {
        let numer = BigInt::from(self.rng.gen_range(-9i64..=9));
        let denom = match self.model {
            GroundModel::Dense(DenseKind::FullRationals) if self.rng.gen_bool(0.3) => {
                BigInt::from(self.rng.gen_range(2i64..=8))
            }
            GroundModel::Dense(DenseKind::LocalizedAt(p)) if self.rng.gen_bool(0.3) => {
                BigInt::from(i64::from(p)).pow(self.rng.gen_range(1..=2))
            }
            _ => BigInt::from(1),
        };
        BigRational::new(numer, denom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::parse_formula;

    #[test]
    fn deterministic_and_well_formed() {
        let z = GroundModel::discrete();
        let a = generate(&z, 7, 40, &["x"]);
        let b = generate(&z, 7, 40, &["x"]);
        assert_eq!(a, b);
        let other = generate(&z, 8, 40, &["x"]);
        assert_ne!(a, other);
        for f in &a {
            assert_eq!(f.free_vars().into_iter().collect::<Vec<_>>(), vec!["x"]);
            // Round-trips through the concrete syntax.
            let back = parse_formula(&f.to_string(), &z).unwrap();
            assert_eq!(&back, f);
        }
    }

    #[test]
    fn respects_fragment_limits() {
        let q = GroundModel::rationals();
        for f in generate(&q, 1, 30, &["x", "y"]) {
            let mut congs = 0;
            let mut max_depth = 0usize;
            fn walk(f: &Formula, depth: usize, congs: &mut usize, max_depth: &mut usize) {
                *max_depth = (*max_depth).max(depth);
                match f {
                    Formula::Atom(Atom::Cong(..)) => *congs += 1,
                    Formula::Not(g) => walk(g, depth, congs, max_depth),
                    Formula::And(a, b)
                    | Formula::Or(a, b)
                    | Formula::Implies(a, b)
                    | Formula::Iff(a, b) => {
                        walk(a, depth, congs, max_depth);
                        walk(b, depth, congs, max_depth);
                    }
                    Formula::Exists(_, g) | Formula::Forall(_, g) => {
                        walk(g, depth + 1, congs, max_depth)
                    }
                    _ => {}
                }
            }
            walk(&f, 0, &mut congs, &mut max_depth);
            assert!(congs <= MAX_CONG_ATOMS);
            assert!(max_depth <= MAX_DEPTH);
        }
    }

    #[test]
    fn quantified_bodies_are_oracle_friendly() {
        // Atoms under a quantifier mention only that quantifier's variable
        // and the global frees, never an enclosing quantified variable.
        let z = GroundModel::discrete();
        use std::collections::BTreeSet;
        // `forbidden`: enclosing quantified variables other than the
        // innermost one; atoms must not mention them.
        fn check(f: &Formula, forbidden: &BTreeSet<String>, innermost: Option<&str>) {
            match f {
                Formula::Atom(_) => {
                    for v in f.free_vars() {
                        assert!(!forbidden.contains(&v), "atom leaks outer variable {v}");
                    }
                }
                Formula::Not(g) => check(g, forbidden, innermost),
                Formula::And(a, b)
                | Formula::Or(a, b)
                | Formula::Implies(a, b)
                | Formula::Iff(a, b) => {
                    check(a, forbidden, innermost);
                    check(b, forbidden, innermost);
                }
                Formula::Exists(v, g) | Formula::Forall(v, g) => {
                    let mut fb = forbidden.clone();
                    if let Some(i) = innermost {
                        if i != v {
                            fb.insert(i.to_string());
                        }
                    }
                    check(g, &fb, Some(v));
                }
                _ => {}
            }
        }
        for f in generate(&z, 42, 50, &["x"]) {
            check(&f, &BTreeSet::new(), None);
        }
    }
}
