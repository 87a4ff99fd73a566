//! Terms, atoms and formulas of the language `{+, -, <, 0, 1, =_m}`, with a
//! parser, a printer and an exact evaluator for quantifier-free formulas.
//!
//! Terms are kept in canonical linear form: a sorted map from variable
//! names to nonzero integer coefficients plus an exact rational constant.
//! In the discrete model the constant counts copies of the named element
//! `1`; in dense models rational constants denote group-element parameters
//! (an extension of the parameter-free dense language).

use crate::model::{Elem, GroundModel};
use crate::rational::format_rat;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Term {
    coeffs: BTreeMap<String, BigInt>,
    constant: BigRational,
}

impl Term {
    pub fn zero() -> Term {
        Term { coeffs: BTreeMap::new(), constant: BigRational::zero() }
    }

    pub fn constant(c: BigRational) -> Term {
        Term { coeffs: BTreeMap::new(), constant: c }
    }

    pub fn int(n: i64) -> Term {
        Term::constant(BigRational::from_integer(BigInt::from(n)))
    }

    pub fn var(name: &str) -> Term {
        Term::monomial(name, BigInt::one())
    }

    pub fn monomial(name: &str, coeff: BigInt) -> Term {
        let mut coeffs = BTreeMap::new();
        if !coeff.is_zero() {
            coeffs.insert(name.to_string(), coeff);
        }
        Term { coeffs, constant: BigRational::zero() }
    }

    pub fn coeff(&self, name: &str) -> BigInt {
        self.coeffs.get(name).cloned().unwrap_or_else(BigInt::zero)
    }

    pub fn coeffs(&self) -> &BTreeMap<String, BigInt> {
        &self.coeffs
    }

    pub fn const_part(&self) -> &BigRational {
        &self.constant
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn add(&self, other: &Term) -> Term {
        let mut coeffs = self.coeffs.clone();
        for (v, c) in &other.coeffs {
            let e = coeffs.entry(v.clone()).or_insert_with(BigInt::zero);
            *e += c;
            if e.is_zero() {
                coeffs.remove(v);
            }
        }
        Term { coeffs, constant: &self.constant + &other.constant }
    }

    pub fn sub(&self, other: &Term) -> Term {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Term {
        Term {
            coeffs: self.coeffs.iter().map(|(v, c)| (v.clone(), -c)).collect(),
            constant: -&self.constant,
        }
    }

    pub fn scale(&self, n: &BigInt) -> Term {
        if n.is_zero() {
            return Term::zero();
        }
        Term {
            coeffs: self.coeffs.iter().map(|(v, c)| (v.clone(), c * n)).collect(),
            constant: &self.constant * BigRational::from_integer(n.clone()),
        }
    }

    /// Removes the variable, returning its coefficient and the rest.
    pub fn split_var(&self, name: &str) -> (BigInt, Term) {
        let mut rest = self.clone();
        let c = rest.coeffs.remove(name).unwrap_or_else(BigInt::zero);
        (c, rest)
    }

    /// Replaces a variable by an arbitrary term.
    pub fn subst(&self, name: &str, replacement: &Term) -> Term {
        let (c, rest) = self.split_var(name);
        if c.is_zero() {
            rest
        } else {
            rest.add(&replacement.scale(&c))
        }
    }

    pub fn vars(&self) -> impl Iterator<Item = &String> {
        self.coeffs.keys()
    }

    pub fn eval(&self, assignment: &BTreeMap<String, Elem>) -> Result<Elem, EvalError> {
        let mut acc = self.constant.clone();
        for (v, c) in &self.coeffs {
            let val = assignment
                .get(v)
                .ok_or_else(|| EvalError::UnassignedVariable(v.clone()))?;
            acc += val * BigRational::from_integer(c.clone());
        }
        Ok(acc)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Atom {
    Eq(Term, Term),
    Lt(Term, Term),
    /// `lhs =_m rhs`, membership of `lhs - rhs` in `mG`; always `m >= 2`.
    Cong(BigInt, Term, Term),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Formula {
    True,
    False,
    Atom(Atom),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Iff(Box<Formula>, Box<Formula>),
    Exists(String, Box<Formula>),
    Forall(String, Box<Formula>),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("{line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("unassigned free variable `{0}`")]
    UnassignedVariable(String),
    #[error("quantifier encountered in quantifier-free evaluation")]
    QuantifierEncountered,
    #[error("value `{0}` is not an element of the ground model")]
    NotInModel(String),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SubstError {
    #[error("cannot bind `{0}`: it occurs bound in the formula")]
    BoundVariable(String),
    #[error("value `{0}` is not an element of the ground model")]
    NotInModel(String),
}

impl Formula {
    pub fn atom(a: Atom) -> Formula {
        Formula::Atom(a)
    }

    pub fn not(f: Formula) -> Formula {
        Formula::Not(Box::new(f))
    }

    pub fn and(a: Formula, b: Formula) -> Formula {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Formula {
        Formula::Or(Box::new(a), Box::new(b))
    }

    pub fn implies(a: Formula, b: Formula) -> Formula {
        Formula::Implies(Box::new(a), Box::new(b))
    }

    pub fn iff(a: Formula, b: Formula) -> Formula {
        Formula::Iff(Box::new(a), Box::new(b))
    }

    pub fn exists(v: &str, f: Formula) -> Formula {
        Formula::Exists(v.to_string(), Box::new(f))
    }

    pub fn forall(v: &str, f: Formula) -> Formula {
        Formula::Forall(v.to_string(), Box::new(f))
    }

    /// Conjunction of a list, with `True` for the empty list. Built as a
    /// balanced tree so long lists stay within recursion limits.
    pub fn and_all(fs: Vec<Formula>) -> Formula {
        Formula::balanced(fs, Formula::True, Formula::and)
    }

    /// Disjunction of a list, with `False` for the empty list. Built as a
    /// balanced tree so long lists stay within recursion limits.
    pub fn or_all(fs: Vec<Formula>) -> Formula {
        Formula::balanced(fs, Formula::False, Formula::or)
    }

    fn balanced(mut fs: Vec<Formula>, empty: Formula, join: fn(Formula, Formula) -> Formula) -> Formula {
        match fs.len() {
            0 => empty,
            1 => fs.pop().unwrap(),
            n => {
                let right = fs.split_off(n / 2);
                join(
                    Formula::balanced(fs, empty.clone(), join),
                    Formula::balanced(right, empty, join),
                )
            }
        }
    }

    pub fn is_quantifier_free(&self) -> bool {
        match self {
            Formula::True | Formula::False | Formula::Atom(_) => true,
            Formula::Not(f) => f.is_quantifier_free(),
            Formula::And(a, b)
            | Formula::Or(a, b)
            | Formula::Implies(a, b)
            | Formula::Iff(a, b) => a.is_quantifier_free() && b.is_quantifier_free(),
            Formula::Exists(..) | Formula::Forall(..) => false,
        }
    }

    pub fn free_vars(&self) -> BTreeSet<String> {
        fn go(f: &Formula, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
            match f {
                Formula::True | Formula::False => {}
                Formula::Atom(a) => {
                    for t in atom_terms(a) {
                        for v in t.vars() {
                            if !bound.contains(v) {
                                out.insert(v.clone());
                            }
                        }
                    }
                }
                Formula::Not(g) => go(g, bound, out),
                Formula::And(a, b)
                | Formula::Or(a, b)
                | Formula::Implies(a, b)
                | Formula::Iff(a, b) => {
                    go(a, bound, out);
                    go(b, bound, out);
                }
                Formula::Exists(v, g) | Formula::Forall(v, g) => {
                    bound.push(v.clone());
                    go(g, bound, out);
                    bound.pop();
                }
            }
        }
        let mut out = BTreeSet::new();
        go(self, &mut Vec::new(), &mut out);
        out
    }

    pub fn bound_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        fn go(f: &Formula, out: &mut BTreeSet<String>) {
            match f {
                Formula::True | Formula::False | Formula::Atom(_) => {}
                Formula::Not(g) => go(g, out),
                Formula::And(a, b)
                | Formula::Or(a, b)
                | Formula::Implies(a, b)
                | Formula::Iff(a, b) => {
                    go(a, out);
                    go(b, out);
                }
                Formula::Exists(v, g) | Formula::Forall(v, g) => {
                    out.insert(v.clone());
                    go(g, out);
                }
            }
        }
        go(self, &mut out);
        out
    }

    pub fn all_vars(&self) -> BTreeSet<String> {
        let mut vs = self.free_vars();
        vs.extend(self.bound_vars());
        vs
    }

    /// Replaces free variables by group-element parameters.
    pub fn substitute_params(
        &self,
        bindings: &BTreeMap<String, Elem>,
        model: &GroundModel,
    ) -> Result<Formula, SubstError> {
        let bound = self.bound_vars();
        for (v, val) in bindings {
            if bound.contains(v) {
                return Err(SubstError::BoundVariable(v.clone()));
            }
            if !model.contains(val) {
                return Err(SubstError::NotInModel(format_rat(val)));
            }
        }
        let mut out = self.clone();
        for (v, val) in bindings {
            out = out.subst_var_term(v, &Term::constant(val.clone()));
        }
        Ok(out)
    }

    /// Capture-avoiding substitution of a term for a free variable.
    pub fn subst_var_term(&self, name: &str, replacement: &Term) -> Formula {
        let clash: BTreeSet<&String> = replacement.vars().collect();
        match self {
            Formula::True | Formula::False => self.clone(),
            Formula::Atom(a) => Formula::Atom(map_atom(a, |t| t.subst(name, replacement))),
            Formula::Not(f) => Formula::not(f.subst_var_term(name, replacement)),
            Formula::And(a, b) => Formula::and(
                a.subst_var_term(name, replacement),
                b.subst_var_term(name, replacement),
            ),
            Formula::Or(a, b) => Formula::or(
                a.subst_var_term(name, replacement),
                b.subst_var_term(name, replacement),
            ),
            Formula::Implies(a, b) => Formula::implies(
                a.subst_var_term(name, replacement),
                b.subst_var_term(name, replacement),
            ),
            Formula::Iff(a, b) => Formula::iff(
                a.subst_var_term(name, replacement),
                b.subst_var_term(name, replacement),
            ),
            Formula::Exists(v, f) | Formula::Forall(v, f) => {
                let make = |v: String, g: Formula| -> Formula {
                    if matches!(self, Formula::Exists(..)) {
                        Formula::Exists(v, Box::new(g))
                    } else {
                        Formula::Forall(v, Box::new(g))
                    }
                };
                if v == name {
                    self.clone()
                } else if clash.contains(v) {
                    let fresh = fresh_var(v, &self.all_vars(), &clash);
                    let renamed = f.subst_var_term(v, &Term::var(&fresh));
                    make(fresh, renamed.subst_var_term(name, replacement))
                } else {
                    make(v.clone(), f.subst_var_term(name, replacement))
                }
            }
        }
    }

    /// Truth value of a quantifier-free formula under a full assignment.
    pub fn eval(
        &self,
        assignment: &BTreeMap<String, Elem>,
        model: &GroundModel,
    ) -> Result<bool, EvalError> {
        for (v, val) in assignment {
            if !model.contains(val) {
                return Err(EvalError::NotInModel(format!("{v} = {}", format_rat(val))));
            }
        }
        self.eval_unchecked(assignment, model)
    }

    fn eval_unchecked(
        &self,
        assignment: &BTreeMap<String, Elem>,
        model: &GroundModel,
    ) -> Result<bool, EvalError> {
        match self {
            Formula::True => Ok(true),
            Formula::False => Ok(false),
            Formula::Atom(a) => eval_atom(a, assignment, model),
            Formula::Not(f) => Ok(!f.eval_unchecked(assignment, model)?),
            Formula::And(a, b) => {
                Ok(a.eval_unchecked(assignment, model)? && b.eval_unchecked(assignment, model)?)
            }
            Formula::Or(a, b) => {
                Ok(a.eval_unchecked(assignment, model)? || b.eval_unchecked(assignment, model)?)
            }
            Formula::Implies(a, b) => {
                Ok(!a.eval_unchecked(assignment, model)? || b.eval_unchecked(assignment, model)?)
            }
            Formula::Iff(a, b) => {
                Ok(a.eval_unchecked(assignment, model)? == b.eval_unchecked(assignment, model)?)
            }
            Formula::Exists(..) | Formula::Forall(..) => Err(EvalError::QuantifierEncountered),
        }
    }
}

pub(crate) fn atom_terms(a: &Atom) -> [&Term; 2] {
    match a {
        Atom::Eq(s, t) | Atom::Lt(s, t) | Atom::Cong(_, s, t) => [s, t],
    }
}

fn map_atom(a: &Atom, mut f: impl FnMut(&Term) -> Term) -> Atom {
    match a {
        Atom::Eq(s, t) => Atom::Eq(f(s), f(t)),
        Atom::Lt(s, t) => Atom::Lt(f(s), f(t)),
        Atom::Cong(m, s, t) => Atom::Cong(m.clone(), f(s), f(t)),
    }
}

fn eval_atom(
    a: &Atom,
    assignment: &BTreeMap<String, Elem>,
    model: &GroundModel,
) -> Result<bool, EvalError> {
    match a {
        Atom::Eq(s, t) => Ok(s.eval(assignment)? == t.eval(assignment)?),
        Atom::Lt(s, t) => Ok(s.eval(assignment)? < t.eval(assignment)?),
        Atom::Cong(m, s, t) => {
            Ok(model.congruent(&s.eval(assignment)?, &t.eval(assignment)?, m))
        }
    }
}

/// Picks a name based on `base` avoiding both variable sets.
pub(crate) fn fresh_var(base: &str, avoid1: &BTreeSet<String>, avoid2: &BTreeSet<&String>) -> String {
    let mut i = 0u32;
    loop {
        let cand = format!("{base}{i}");
        if !avoid1.contains(&cand) && !avoid2.contains(&cand) {
            return cand;
        }
        i += 1;
    }
}

// ---------------------------------------------------------------------------
// Printing
// ---------------------------------------------------------------------------

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (v, c) in &self.coeffs {
            if first {
                if c.is_negative() {
                    write!(f, "-")?;
                }
            } else if c.is_negative() {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            let a = c.abs();
            if a.is_one() {
                write!(f, "{v}")?;
            } else {
                write!(f, "{a}*{v}")?;
            }
            first = false;
        }
        if first {
            write!(f, "{}", format_rat(&self.constant))?;
        } else if !self.constant.is_zero() {
            if self.constant.is_negative() {
                write!(f, " - {}", format_rat(&-&self.constant))?;
            } else {
                write!(f, " + {}", format_rat(&self.constant))?;
            }
        }
        Ok(())
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::Eq(s, t) => write!(f, "{s} = {t}"),
            Atom::Lt(s, t) => write!(f, "{s} < {t}"),
            Atom::Cong(m, s, t) => write!(f, "{s} =_{m} {t}"),
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_formula(self, f, 0)
    }
}

fn precedence(f: &Formula) -> u8 {
    match f {
        Formula::Iff(..) => 1,
        Formula::Implies(..) => 2,
        Formula::Or(..) => 3,
        Formula::And(..) => 4,
        Formula::Not(..) => 5,
        _ => 6,
    }
}

fn write_formula(fm: &Formula, f: &mut fmt::Formatter<'_>, min_prec: u8) -> fmt::Result {
    let prec = precedence(fm);
    let parens = prec < min_prec;
    if parens {
        write!(f, "(")?;
    }
    match fm {
        Formula::True => write!(f, "true")?,
        Formula::False => write!(f, "false")?,
        Formula::Atom(a) => write!(f, "{a}")?,
        Formula::Not(g) => {
            write!(f, "!")?;
            write_formula(g, f, 6)?;
        }
        Formula::And(a, b) => {
            write_formula(a, f, 4)?;
            write!(f, " & ")?;
            write_formula(b, f, 5)?;
        }
        Formula::Or(a, b) => {
            write_formula(a, f, 3)?;
            write!(f, " | ")?;
            write_formula(b, f, 4)?;
        }
        Formula::Implies(a, b) => {
            write_formula(a, f, 3)?;
            write!(f, " -> ")?;
            write_formula(b, f, 2)?;
        }
        Formula::Iff(a, b) => {
            write_formula(a, f, 2)?;
            write!(f, " <-> ")?;
            write_formula(b, f, 2)?;
        }
        Formula::Exists(v, g) => write!(f, "E {v} ({g})")?,
        Formula::Forall(v, g) => write!(f, "A {v} ({g})")?,
    }
    if parens {
        write!(f, ")")?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Int(BigInt),
    Ident(String),
    LParen,
    RParen,
    Plus,
    Minus,
    Star,
    Slash,
    Amp,
    Bar,
    Bang,
    Arrow,
    DArrow,
    Eq,
    CongEq, // "=_"
    Lt,
    Le,
    Gt,
    Ge,
}

struct Lexer {
    toks: Vec<(Tok, usize, usize)>,
}

fn lex(text: &str) -> Result<Lexer, ParseError> {
    let mut toks = Vec::new();
    let mut line = 1usize;
    let mut col = 1usize;
    let bytes: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let (l0, c0) = (line, col);
        let mut push = |t: Tok, n: usize, i: &mut usize, col: &mut usize| {
            toks.push((t, l0, c0));
            *i += n;
            *col += n;
        };
        match c {
            ' ' | '\t' | '\r' => {
                i += 1;
                col += 1;
            }
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
            }
            '(' => push(Tok::LParen, 1, &mut i, &mut col),
            ')' => push(Tok::RParen, 1, &mut i, &mut col),
            '+' => push(Tok::Plus, 1, &mut i, &mut col),
            '*' => push(Tok::Star, 1, &mut i, &mut col),
            '/' => push(Tok::Slash, 1, &mut i, &mut col),
            '&' => push(Tok::Amp, 1, &mut i, &mut col),
            '|' => push(Tok::Bar, 1, &mut i, &mut col),
            '!' => push(Tok::Bang, 1, &mut i, &mut col),
            '-' => {
                if bytes.get(i + 1) == Some(&'>') {
                    push(Tok::Arrow, 2, &mut i, &mut col);
                } else {
                    push(Tok::Minus, 1, &mut i, &mut col);
                }
            }
            '<' => {
                if bytes.get(i + 1) == Some(&'-') && bytes.get(i + 2) == Some(&'>') {
                    push(Tok::DArrow, 3, &mut i, &mut col);
                } else if bytes.get(i + 1) == Some(&'=') {
                    push(Tok::Le, 2, &mut i, &mut col);
                } else {
                    push(Tok::Lt, 1, &mut i, &mut col);
                }
            }
            '>' => {
                if bytes.get(i + 1) == Some(&'=') {
                    push(Tok::Ge, 2, &mut i, &mut col);
                } else {
                    push(Tok::Gt, 1, &mut i, &mut col);
                }
            }
            '=' => {
                if bytes.get(i + 1) == Some(&'_') {
                    push(Tok::CongEq, 2, &mut i, &mut col);
                } else {
                    push(Tok::Eq, 1, &mut i, &mut col);
                }
            }
            _ if c.is_ascii_digit() => {
                let mut j = i;
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
                let s: String = bytes[i..j].iter().collect();
                let n = j - i;
                push(Tok::Int(s.parse().unwrap()), n, &mut i, &mut col);
            }
            _ if c.is_ascii_alphabetic() || c == '_' => {
                let mut j = i;
                while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == '_') {
                    j += 1;
                }
                let s: String = bytes[i..j].iter().collect();
                let n = j - i;
                push(Tok::Ident(s), n, &mut i, &mut col);
            }
            _ => {
                return Err(ParseError::Syntax {
                    line,
                    col,
                    msg: format!("unexpected character `{c}`"),
                })
            }
        }
    }
    Ok(Lexer { toks })
}

struct Parser<'a> {
    toks: &'a [(Tok, usize, usize)],
    pos: usize,
    model: GroundModel,
    end: (usize, usize),
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _, _)| t)
    }

    fn loc(&self) -> (usize, usize) {
        self.toks.get(self.pos).map(|&(_, l, c)| (l, c)).unwrap_or(self.end)
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        let (line, col) = self.loc();
        Err(ParseError::Syntax { line, col, msg: msg.into() })
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _, _)| t.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, t: Tok, what: &str) -> Result<(), ParseError> {
        if self.peek() == Some(&t) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(format!("expected {what}"))
        }
    }

    fn formula(&mut self) -> Result<Formula, ParseError> {
        self.iff()
    }

    fn iff(&mut self) -> Result<Formula, ParseError> {
        let mut lhs = self.implies()?;
        while self.peek() == Some(&Tok::DArrow) {
            self.pos += 1;
            let rhs = self.implies()?;
            lhs = Formula::iff(lhs, rhs);
        }
        Ok(lhs)
    }

    fn implies(&mut self) -> Result<Formula, ParseError> {
        let lhs = self.or()?;
        if self.peek() == Some(&Tok::Arrow) {
            self.pos += 1;
            let rhs = self.implies()?;
            Ok(Formula::implies(lhs, rhs))
        } else {
            Ok(lhs)
        }
    }

    fn or(&mut self) -> Result<Formula, ParseError> {
        let mut lhs = self.and()?;
        while self.peek() == Some(&Tok::Bar) {
            self.pos += 1;
            let rhs = self.and()?;
            lhs = Formula::or(lhs, rhs);
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Formula, ParseError> {
        let mut lhs = self.unary()?;
        while self.peek() == Some(&Tok::Amp) {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Formula::and(lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Formula, ParseError> {
        match self.peek() {
            Some(Tok::Bang) => {
                self.pos += 1;
                Ok(Formula::not(self.unary()?))
            }
            Some(Tok::Ident(s)) if s == "E" || s == "A" => {
                let existential = s == "E";
                self.pos += 1;
                let v = match self.bump() {
                    Some(Tok::Ident(v)) if v != "E" && v != "A" => v,
                    _ => return self.err("expected variable name after quantifier"),
                };
                self.expect(Tok::LParen, "`(` around quantifier body")?;
                let body = self.formula()?;
                self.expect(Tok::RParen, "`)` closing quantifier body")?;
                Ok(if existential {
                    Formula::exists(&v, body)
                } else {
                    Formula::forall(&v, body)
                })
            }
            Some(Tok::Ident(s)) if s == "true" => {
                self.pos += 1;
                Ok(Formula::True)
            }
            Some(Tok::Ident(s)) if s == "false" => {
                self.pos += 1;
                Ok(Formula::False)
            }
            Some(Tok::LParen) => {
                // Either a parenthesized formula or an atom whose left term
                // starts with `(`; try the atom first and backtrack.
                let save = self.pos;
                if let Ok(a) = self.atom() {
                    return Ok(a);
                }
                self.pos = save;
                self.pos += 1;
                let f = self.formula()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(f)
            }
            _ => self.atom(),
        }
    }

    fn atom(&mut self) -> Result<Formula, ParseError> {
        let lhs = self.term()?;
        match self.bump() {
            Some(Tok::Eq) => {
                let rhs = self.term()?;
                Ok(Formula::Atom(Atom::Eq(lhs, rhs)))
            }
            Some(Tok::Lt) => {
                let rhs = self.term()?;
                Ok(Formula::Atom(Atom::Lt(lhs, rhs)))
            }
            Some(Tok::Le) => {
                // t1 <= t2 desugars to (t1 < t2) | (t1 = t2).
                let rhs = self.term()?;
                Ok(Formula::or(
                    Formula::Atom(Atom::Lt(lhs.clone(), rhs.clone())),
                    Formula::Atom(Atom::Eq(lhs, rhs)),
                ))
            }
            Some(Tok::Gt) => {
                // t1 > t2 is sugar for t2 < t1.
                let rhs = self.term()?;
                Ok(Formula::Atom(Atom::Lt(rhs, lhs)))
            }
            Some(Tok::Ge) => {
                let rhs = self.term()?;
                Ok(Formula::or(
                    Formula::Atom(Atom::Lt(rhs.clone(), lhs.clone())),
                    Formula::Atom(Atom::Eq(rhs, lhs)),
                ))
            }
            Some(Tok::CongEq) => {
                let m = match self.bump() {
                    Some(Tok::Int(m)) => m,
                    _ => return self.err("expected modulus after `=_`"),
                };
                if m < BigInt::from(2) {
                    return self.err(format!("congruence modulus must be >= 2, got {m}"));
                }
                let rhs = self.term()?;
                Ok(Formula::Atom(Atom::Cong(m, lhs, rhs)))
            }
            _ => self.err("expected `=`, `<`, `<=` or `=_m`"),
        }
    }

    fn term(&mut self) -> Result<Term, ParseError> {
        let mut acc = if self.peek() == Some(&Tok::Minus) {
            self.pos += 1;
            self.product()?.neg()
        } else {
            self.product()?
        };
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.pos += 1;
                    acc = acc.add(&self.product()?);
                }
                Some(Tok::Minus) => {
                    self.pos += 1;
                    acc = acc.sub(&self.product()?);
                }
                _ => return Ok(acc),
            }
        }
    }

    fn product(&mut self) -> Result<Term, ParseError> {
        match self.peek().cloned() {
            Some(Tok::Int(n)) => {
                self.pos += 1;
                match self.peek() {
                    Some(Tok::Star) => {
                        self.pos += 1;
                        let t = self.term_atom()?;
                        Ok(t.scale(&n))
                    }
                    Some(Tok::Slash) => {
                        self.pos += 1;
                        let d = match self.bump() {
                            Some(Tok::Int(d)) if !d.is_zero() => d,
                            _ => return self.err("expected nonzero denominator"),
                        };
                        let q = BigRational::new(n, d);
                        self.check_literal(&q)?;
                        Ok(Term::constant(q))
                    }
                    _ => {
                        let q = BigRational::from_integer(n);
                        self.check_literal(&q)?;
                        Ok(Term::constant(q))
                    }
                }
            }
            _ => self.term_atom(),
        }
    }

    fn term_atom(&mut self) -> Result<Term, ParseError> {
        match self.bump() {
            Some(Tok::Ident(v)) if v != "E" && v != "A" => Ok(Term::var(&v)),
            Some(Tok::LParen) => {
                let t = self.term()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(t)
            }
            Some(Tok::Int(n)) => {
                let q = BigRational::from_integer(n);
                self.check_literal(&q)?;
                Ok(Term::constant(q))
            }
            _ => self.err("expected term"),
        }
    }

    fn check_literal(&self, q: &BigRational) -> Result<(), ParseError> {
        if self.model.contains(q) {
            Ok(())
        } else {
            let (line, col) = self.loc();
            Err(ParseError::Syntax {
                line,
                col,
                msg: format!("literal {} is not an element of the ground model", format_rat(q)),
            })
        }
    }
}

/// Parses a formula from the surface grammar, validating literals against
/// the ground model.
pub fn parse_formula(text: &str, model: &GroundModel) -> Result<Formula, ParseError> {
    let lexer = lex(text)?;
    let lines = text.lines().count().max(1);
    let last_len = text.lines().last().map(|l| l.chars().count()).unwrap_or(0);
    let mut p = Parser {
        toks: &lexer.toks,
        pos: 0,
        model: *model,
        end: (lines, last_len + 1),
    };
    let f = p.formula()?;
    if p.pos != p.toks.len() {
        return p.err("trailing input after formula");
    }
    Ok(f)
}
