//! Definability analysis for unary sets over archimedean ordered abelian
//! groups with small quotients.
//!
//! The library works over three standard models: the integers, the
//! rationals, and the rationals with denominators restricted to powers of a
//! fixed prime. It provides:
//!
//! - a parser, printer and exact evaluator for the first-order language
//!   `{+, -, <, 0, 1}` extended with congruence predicates `=_m`
//!   ([`formula`]),
//! - a canonical normal form for unary definable sets as unions of
//!   singletons and open rational-endpoint intervals intersected with cosets
//!   ([`defset`]),
//! - quantifier elimination and extraction of that normal form ([`qe`]),
//! - the definability dichotomy: either a set is definable from the group
//!   structure alone, or an infinite interval `(0,b)` and the order on it
//!   can be constructed from the set by group operations ([`dichotomy`]),
//! - finite-rank lattice computations: Smith/Hermite normal forms, quotient
//!   cardinalities and algebraic-closure-as-span ([`lattice`]),
//! - a brute-force semantic oracle and differential-testing harness
//!   ([`oracle`]).

pub mod corpus;
pub mod defset;
pub mod dichotomy;
pub mod formula;
pub mod lattice;
pub mod model;
pub mod oracle;
pub mod qe;
pub mod rational;


pub use defset::DefSet;
pub use formula::Formula;
pub use model::GroundModel;
pub use rational::ExtQRat;
