//! Satisfaction-function expressions.
//!
//! One AST serves both levels of a problem: inner expressions range over
//! network inputs `x1, x2, …` and outputs `y1, y2, …`, outer expressions
//! over the term probabilities `p1, p2, …`. The operation set is fixed:
//! affine combinations, multiplication, division, and the monotone functions
//! (`min`, `max`, `relu`, `sigmoid`, `tanh`) — nothing else is expressible.
//!
//! Grammar (EBNF):
//! ```text
//! expr    := term { ("+" | "-") term }
//! term    := factor { ("*" | "/") factor }
//! factor  := "-" factor | primary
//! primary := NUMBER | IDENT | call | "(" expr ")"
//! call    := ("min" | "max") "(" expr "," expr { "," expr } ")"
//!          | ("relu" | "sigmoid" | "tanh") "(" expr ")"
//! IDENT   := ("x" | "y" | "p") DIGITS      (1-based index)
//! NUMBER  := DIGITS ["." DIGITS] [("e"|"E") ["+"|"-"] DIGITS]
//! ```
//! `min`/`max` with more than two arguments desugar to left-associative
//! binary folds.

use crate::interval::Interval;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Atom of an inner expression: an input coordinate or a network output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InnerAtom {
    /// `x{j+1}` — input dimension `j` (0-based).
    Input(usize),
    /// `y{k+1}` — network output `k` (0-based).
    Output(usize),
}

/// Atom of an outer expression: a term probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OuterAtom {
    /// `p{i+1}` — probability of term `i` (0-based).
    Prob(usize),
}

/// Expression AST, generic over the atom alphabet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Expr<A> {
    Atom(A),
    Const(f64),
    Add(Box<Expr<A>>, Box<Expr<A>>),
    Sub(Box<Expr<A>>, Box<Expr<A>>),
    Neg(Box<Expr<A>>),
    Mul(Box<Expr<A>>, Box<Expr<A>>),
    Div(Box<Expr<A>>, Box<Expr<A>>),
    Min(Box<Expr<A>>, Box<Expr<A>>),
    Max(Box<Expr<A>>, Box<Expr<A>>),
    Relu(Box<Expr<A>>),
    Sigmoid(Box<Expr<A>>),
    Tanh(Box<Expr<A>>),
}

pub type InnerExpr = Expr<InnerAtom>;
pub type OuterExpr = Expr<OuterAtom>;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("0/0 is undefined")]
    ZeroOverZero,
    #[error("expression value is undefined (∞ − ∞ or similar)")]
    Undefined,
    #[error("{what} index {index} out of range (have {len})")]
    AtomOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },
}

impl<A> Expr<A> {
    pub fn constant(c: f64) -> Expr<A> {
        Expr::Const(c)
    }

    pub fn min2(self, rhs: Expr<A>) -> Expr<A> {
        Expr::Min(Box::new(self), Box::new(rhs))
    }

    pub fn max2(self, rhs: Expr<A>) -> Expr<A> {
        Expr::Max(Box::new(self), Box::new(rhs))
    }

    fn children(&self) -> Vec<&Expr<A>> {
        match self {
            Expr::Atom(_) | Expr::Const(_) => vec![],
            Expr::Neg(a) | Expr::Relu(a) | Expr::Sigmoid(a) | Expr::Tanh(a) => vec![a],
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Min(a, b)
            | Expr::Max(a, b) => vec![a, b],
        }
    }

    /// All atoms, in evaluation order.
    pub fn atoms(&self) -> Vec<&A> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(e) = stack.pop() {
            if let Expr::Atom(a) = e {
                out.push(a);
            }
            let mut kids = e.children();
            kids.reverse();
            stack.extend(kids);
        }
        out
    }

    /// Exact real evaluation under an atom environment.
    ///
    /// Division by zero follows the sign convention `q/0 = ±∞` for `q ≠ 0`;
    /// `0/0` is an error, as is any indeterminate result (NaN).
    pub fn eval_with(&self, env: &impl Fn(&A) -> f64) -> Result<f64, EvalError> {
        let v = match self {
            Expr::Atom(a) => env(a),
            Expr::Const(c) => *c,
            Expr::Add(a, b) => a.eval_with(env)? + b.eval_with(env)?,
            Expr::Sub(a, b) => a.eval_with(env)? - b.eval_with(env)?,
            Expr::Neg(a) => -a.eval_with(env)?,
            Expr::Mul(a, b) => a.eval_with(env)? * b.eval_with(env)?,
            Expr::Div(a, b) => {
                let num = a.eval_with(env)?;
                let den = b.eval_with(env)?;
                if den == 0.0 {
                    if num == 0.0 {
                        return Err(EvalError::ZeroOverZero);
                    }
                    if num > 0.0 {
                        f64::INFINITY
                    } else {
                        f64::NEG_INFINITY
                    }
                } else {
                    num / den
                }
            }
            Expr::Min(a, b) => a.eval_with(env)?.min(b.eval_with(env)?),
            Expr::Max(a, b) => a.eval_with(env)?.max(b.eval_with(env)?),
            Expr::Relu(a) => crate::interval::relu(a.eval_with(env)?),
            Expr::Sigmoid(a) => crate::interval::sigmoid(a.eval_with(env)?),
            Expr::Tanh(a) => a.eval_with(env)?.tanh(),
        };
        if v.is_nan() {
            return Err(EvalError::Undefined);
        }
        Ok(v)
    }

    /// Sound interval enclosure under an interval environment. Total:
    /// division by an interval touching zero widens towards ±∞ instead of
    /// erroring.
    pub fn eval_interval(&self, env: &impl Fn(&A) -> Interval) -> Interval {
        match self {
            Expr::Atom(a) => env(a),
            Expr::Const(c) => Interval::point(*c),
            Expr::Add(a, b) => a.eval_interval(env).add(&b.eval_interval(env)),
            Expr::Sub(a, b) => a.eval_interval(env).sub(&b.eval_interval(env)),
            Expr::Neg(a) => a.eval_interval(env).neg(),
            Expr::Mul(a, b) => a.eval_interval(env).mul(&b.eval_interval(env)),
            Expr::Div(a, b) => a.eval_interval(env).div(&b.eval_interval(env)),
            Expr::Min(a, b) => a.eval_interval(env).min2(&b.eval_interval(env)),
            Expr::Max(a, b) => a.eval_interval(env).max2(&b.eval_interval(env)),
            Expr::Relu(a) => a.eval_interval(env).relu(),
            Expr::Sigmoid(a) => a.eval_interval(env).sigmoid(),
            Expr::Tanh(a) => a.eval_interval(env).tanh(),
        }
    }

    /// Like [`Expr::eval_interval`] but surfaces an exact `0/0` — both
    /// operand intervals degenerate at zero — as an error instead of using
    /// the measure convention. The verifier needs this to distinguish
    /// "undefined constraint" from "constraint equals zero".
    pub fn eval_interval_strict(
        &self,
        env: &impl Fn(&A) -> Interval,
    ) -> Result<Interval, EvalError> {
        Ok(match self {
            Expr::Atom(a) => env(a),
            Expr::Const(c) => Interval::point(*c),
            Expr::Add(a, b) => a
                .eval_interval_strict(env)?
                .add(&b.eval_interval_strict(env)?),
            Expr::Sub(a, b) => a
                .eval_interval_strict(env)?
                .sub(&b.eval_interval_strict(env)?),
            Expr::Neg(a) => a.eval_interval_strict(env)?.neg(),
            Expr::Mul(a, b) => a
                .eval_interval_strict(env)?
                .mul(&b.eval_interval_strict(env)?),
            Expr::Div(a, b) => {
                let num = a.eval_interval_strict(env)?;
                let den = b.eval_interval_strict(env)?;
                if num.contains(0.0) && den.contains(0.0) {
                    if num.is_point() && den.is_point() {
                        // Both operands have converged to exactly 0: the
                        // quotient is 0/0 no matter how much refinement
                        // follows.
                        return Err(EvalError::ZeroOverZero);
                    }
                    // The true operands may still land on 0/0. Plain
                    // interval division would report `0 · ∞ = 0` for an
                    // exactly-zero numerator, which looks conclusive;
                    // refuse to report anything tighter than "no
                    // information" until the operands separate from 0.
                    return Ok(Interval::EVERYTHING);
                }
                num.div(&den)
            }
            Expr::Min(a, b) => a
                .eval_interval_strict(env)?
                .min2(&b.eval_interval_strict(env)?),
            Expr::Max(a, b) => a
                .eval_interval_strict(env)?
                .max2(&b.eval_interval_strict(env)?),
            Expr::Relu(a) => a.eval_interval_strict(env)?.relu(),
            Expr::Sigmoid(a) => a.eval_interval_strict(env)?.sigmoid(),
            Expr::Tanh(a) => a.eval_interval_strict(env)?.tanh(),
        })
    }
}

impl<A> std::ops::Add for Expr<A> {
    type Output = Expr<A>;
    fn add(self, rhs: Expr<A>) -> Expr<A> {
        Expr::Add(Box::new(self), Box::new(rhs))
    }
}

impl<A> std::ops::Sub for Expr<A> {
    type Output = Expr<A>;
    fn sub(self, rhs: Expr<A>) -> Expr<A> {
        Expr::Sub(Box::new(self), Box::new(rhs))
    }
}

impl<A> std::ops::Neg for Expr<A> {
    type Output = Expr<A>;
    fn neg(self) -> Expr<A> {
        Expr::Neg(Box::new(self))
    }
}

impl<A> std::ops::Mul for Expr<A> {
    type Output = Expr<A>;
    fn mul(self, rhs: Expr<A>) -> Expr<A> {
        Expr::Mul(Box::new(self), Box::new(rhs))
    }
}

impl<A> std::ops::Div for Expr<A> {
    type Output = Expr<A>;
    fn div(self, rhs: Expr<A>) -> Expr<A> {
        Expr::Div(Box::new(self), Box::new(rhs))
    }
}

impl InnerExpr {
    pub fn input(j: usize) -> InnerExpr {
        Expr::Atom(InnerAtom::Input(j))
    }

    pub fn output(k: usize) -> InnerExpr {
        Expr::Atom(InnerAtom::Output(k))
    }

    pub fn references_output(&self) -> bool {
        self.atoms()
            .iter()
            .any(|a| matches!(a, InnerAtom::Output(_)))
    }

    pub fn max_input_index(&self) -> Option<usize> {
        self.atoms()
            .iter()
            .filter_map(|a| match a {
                InnerAtom::Input(j) => Some(*j),
                _ => None,
            })
            .max()
    }

    pub fn max_output_index(&self) -> Option<usize> {
        self.atoms()
            .iter()
            .filter_map(|a| match a {
                InnerAtom::Output(k) => Some(*k),
                _ => None,
            })
            .max()
    }

    pub fn referenced_outputs(&self) -> std::collections::BTreeSet<usize> {
        self.atoms()
            .iter()
            .filter_map(|a| match a {
                InnerAtom::Output(k) => Some(*k),
                _ => None,
            })
            .collect()
    }

    /// Evaluates with input vector `x` and network output vector `y`.
    pub fn eval_inner(&self, x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
        if let Some(j) = self.max_input_index() {
            if j >= x.len() {
                return Err(EvalError::AtomOutOfRange {
                    what: "input",
                    index: j,
                    len: x.len(),
                });
            }
        }
        if let Some(k) = self.max_output_index() {
            if k >= y.len() {
                return Err(EvalError::AtomOutOfRange {
                    what: "output",
                    index: k,
                    len: y.len(),
                });
            }
        }
        self.eval_with(&|a| match a {
            InnerAtom::Input(j) => x[*j],
            InnerAtom::Output(k) => y[*k],
        })
    }
}

impl OuterExpr {
    pub fn prob(i: usize) -> OuterExpr {
        Expr::Atom(OuterAtom::Prob(i))
    }

    pub fn max_prob_index(&self) -> Option<usize> {
        self.atoms().iter().map(|OuterAtom::Prob(i)| *i).max()
    }

    /// Evaluates at a probability vector.
    pub fn eval_outer(&self, p: &[f64]) -> Result<f64, EvalError> {
        if let Some(i) = self.max_prob_index() {
            if i >= p.len() {
                return Err(EvalError::AtomOutOfRange {
                    what: "probability",
                    index: i,
                    len: p.len(),
                });
            }
        }
        self.eval_with(&|OuterAtom::Prob(i)| p[*i])
    }
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("position {pos}: {message}")]
    Syntax { pos: usize, message: String },
    #[error("position {pos}: unknown identifier {name:?}")]
    UnknownIdentifier { pos: usize, name: String },
    #[error("position {pos}: {atom:?} is not allowed in this expression kind")]
    WrongAtomKind { pos: usize, atom: String },
}

/// Parses an inner expression (atoms `x<j>`, `y<k>`).
pub fn parse_inner(text: &str) -> Result<InnerExpr, ParseError> {
    let generic = Parser::new(text)?.parse_full()?;
    generic.map_atoms(&|atom, pos| match atom {
        GenericAtom::Input(j) => Ok(InnerAtom::Input(j)),
        GenericAtom::Output(k) => Ok(InnerAtom::Output(k)),
        GenericAtom::Prob(i) => Err(ParseError::WrongAtomKind {
            pos,
            atom: format!("p{}", i + 1),
        }),
    })
}

/// Parses an outer expression (atoms `p<i>`).
pub fn parse_outer(text: &str) -> Result<OuterExpr, ParseError> {
    let generic = Parser::new(text)?.parse_full()?;
    generic.map_atoms(&|atom, pos| match atom {
        GenericAtom::Prob(i) => Ok(OuterAtom::Prob(i)),
        GenericAtom::Input(j) => Err(ParseError::WrongAtomKind {
            pos,
            atom: format!("x{}", j + 1),
        }),
        GenericAtom::Output(k) => Err(ParseError::WrongAtomKind {
            pos,
            atom: format!("y{}", k + 1),
        }),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum GenericAtom {
    Input(usize),
    Output(usize),
    Prob(usize),
}

/// Parse tree with atom source positions, so kind errors can point at text.
type GenericExpr = Expr<(GenericAtom, usize)>;

impl GenericExpr {
    fn map_atoms<B>(
        self,
        f: &impl Fn(GenericAtom, usize) -> Result<B, ParseError>,
    ) -> Result<Expr<B>, ParseError> {
        Ok(match self {
            Expr::Atom((a, pos)) => Expr::Atom(f(a, pos)?),
            Expr::Const(c) => Expr::Const(c),
            Expr::Add(a, b) => Expr::Add(Box::new(a.map_atoms(f)?), Box::new(b.map_atoms(f)?)),
            Expr::Sub(a, b) => Expr::Sub(Box::new(a.map_atoms(f)?), Box::new(b.map_atoms(f)?)),
            Expr::Neg(a) => Expr::Neg(Box::new(a.map_atoms(f)?)),
            Expr::Mul(a, b) => Expr::Mul(Box::new(a.map_atoms(f)?), Box::new(b.map_atoms(f)?)),
            Expr::Div(a, b) => Expr::Div(Box::new(a.map_atoms(f)?), Box::new(b.map_atoms(f)?)),
            Expr::Min(a, b) => Expr::Min(Box::new(a.map_atoms(f)?), Box::new(b.map_atoms(f)?)),
            Expr::Max(a, b) => Expr::Max(Box::new(a.map_atoms(f)?), Box::new(b.map_atoms(f)?)),
            Expr::Relu(a) => Expr::Relu(Box::new(a.map_atoms(f)?)),
            Expr::Sigmoid(a) => Expr::Sigmoid(Box::new(a.map_atoms(f)?)),
            Expr::Tanh(a) => Expr::Tanh(Box::new(a.map_atoms(f)?)),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    LParen,
    RParen,
    Comma,
    Plus,
    Minus,
    Star,
    Slash,
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn new(text: &str) -> Result<Parser, ParseError> {
        let mut tokens = Vec::new();
        let bytes = text.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            let c = bytes[i] as char;
            match c {
                ' ' | '\t' | '\n' | '\r' => i += 1,
                '(' => {
                    tokens.push((i, Token::LParen));
                    i += 1;
                }
                ')' => {
                    tokens.push((i, Token::RParen));
                    i += 1;
                }
                ',' => {
                    tokens.push((i, Token::Comma));
                    i += 1;
                }
                '+' => {
                    tokens.push((i, Token::Plus));
                    i += 1;
                }
                '-' => {
                    tokens.push((i, Token::Minus));
                    i += 1;
                }
                '*' => {
                    tokens.push((i, Token::Star));
                    i += 1;
                }
                '/' => {
                    tokens.push((i, Token::Slash));
                    i += 1;
                }
                '0'..='9' => {
                    let start = i;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                    if i < bytes.len() && bytes[i] == b'.' {
                        i += 1;
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                    if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                        let mut j = i + 1;
                        if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                            j += 1;
                        }
                        if j < bytes.len() && bytes[j].is_ascii_digit() {
                            i = j;
                            while i < bytes.len() && bytes[i].is_ascii_digit() {
                                i += 1;
                            }
                        }
                    }
                    let lit = &text[start..i];
                    let v: f64 = lit.parse().map_err(|_| ParseError::Syntax {
                        pos: start,
                        message: format!("invalid number literal {lit:?}"),
                    })?;
                    tokens.push((start, Token::Num(v)));
                }
                'a'..='z' | 'A'..='Z' | '_' => {
                    let start = i;
                    while i < bytes.len()
                        && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_')
                    {
                        i += 1;
                    }
                    tokens.push((start, Token::Ident(text[start..i].to_string())));
                }
                other => {
                    return Err(ParseError::Syntax {
                        pos: i,
                        message: format!("unexpected character {other:?}"),
                    })
                }
            }
        }
        Ok(Parser {
            tokens,
            pos: 0,
            end: text.len(),
        })
    }

    fn parse_full(mut self) -> Result<GenericExpr, ParseError> {
        let e = self.expr()?;
        if let Some((pos, tok)) = self.tokens.get(self.pos) {
            return Err(ParseError::Syntax {
                pos: *pos,
                message: format!("unexpected trailing token {tok:?}"),
            });
        }
        Ok(e)
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(_, t)| t)
    }

    fn here(&self) -> usize {
        self.tokens
            .get(self.pos)
            .map(|(p, _)| *p)
            .unwrap_or(self.end)
    }

    fn advance(&mut self) -> Option<(usize, Token)> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: Token, what: &str) -> Result<(), ParseError> {
        let pos = self.here();
        match self.advance() {
            Some((_, tok)) if tok == want => Ok(()),
            Some((p, tok)) => Err(ParseError::Syntax {
                pos: p,
                message: format!("expected {what}, found {tok:?}"),
            }),
            None => Err(ParseError::Syntax {
                pos,
                message: format!("expected {what}, found end of input"),
            }),
        }
    }

    fn expr(&mut self) -> Result<GenericExpr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Token::Plus) => {
                    self.advance();
                    lhs = lhs + self.term()?;
                }
                Some(Token::Minus) => {
                    self.advance();
                    lhs = lhs - self.term()?;
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<GenericExpr, ParseError> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Some(Token::Star) => {
                    self.advance();
                    lhs = lhs * self.factor()?;
                }
                Some(Token::Slash) => {
                    self.advance();
                    lhs = lhs / self.factor()?;
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<GenericExpr, ParseError> {
        if matches!(self.peek(), Some(Token::Minus)) {
            self.advance();
            return Ok(-self.factor()?);
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<GenericExpr, ParseError> {
        let pos = self.here();
        match self.advance() {
            Some((_, Token::Num(v))) => Ok(Expr::Const(v)),
            Some((_, Token::LParen)) => {
                let e = self.expr()?;
                self.expect(Token::RParen, "')'")?;
                Ok(e)
            }
            Some((p, Token::Ident(name))) => self.ident(p, &name),
            Some((p, tok)) => Err(ParseError::Syntax {
                pos: p,
                message: format!("expected an expression, found {tok:?}"),
            }),
            None => Err(ParseError::Syntax {
                pos,
                message: "expected an expression, found end of input".to_string(),
            }),
        }
    }

    fn ident(&mut self, pos: usize, name: &str) -> Result<GenericExpr, ParseError> {
        match name {
            "min" | "max" => {
                self.expect(Token::LParen, "'('")?;
                let mut args = vec![self.expr()?];
                while matches!(self.peek(), Some(Token::Comma)) {
                    self.advance();
                    args.push(self.expr()?);
                }
                self.expect(Token::RParen, "')'")?;
                if args.len() < 2 {
                    return Err(ParseError::Syntax {
                        pos,
                        message: format!("{name} needs at least 2 arguments"),
                    });
                }
                let mut it = args.into_iter();
                let first = it.next().unwrap();
                Ok(it.fold(first, |acc, e| {
                    if name == "min" {
                        acc.min2(e)
                    } else {
                        acc.max2(e)
                    }
                }))
            }
            "relu" | "sigmoid" | "tanh" => {
                self.expect(Token::LParen, "'('")?;
                let arg = self.expr()?;
                self.expect(Token::RParen, "')'")?;
                Ok(match name {
                    "relu" => Expr::Relu(Box::new(arg)),
                    "sigmoid" => Expr::Sigmoid(Box::new(arg)),
                    _ => Expr::Tanh(Box::new(arg)),
                })
            }
            _ => {
                if let Some(atom) = parse_atom_name(name) {
                    return Ok(Expr::Atom((atom, pos)));
                }
                Err(ParseError::UnknownIdentifier {
                    pos,
                    name: name.to_string(),
                })
            }
        }
    }
}

fn parse_atom_name(name: &str) -> Option<GenericAtom> {
    let (head, digits) = name.split_at(1);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let idx: usize = digits.parse().ok()?;
    if idx == 0 {
        return None; // indices are 1-based
    }
    match head {
        "x" => Some(GenericAtom::Input(idx - 1)),
        "y" => Some(GenericAtom::Output(idx - 1)),
        "p" => Some(GenericAtom::Prob(idx - 1)),
        _ => None,
    }
}

// ---------------------------------------------------------------------------
// Printing
// ---------------------------------------------------------------------------

/// Atom alphabets that know their surface syntax.
pub trait AtomName {
    fn name(&self) -> String;
}

impl AtomName for InnerAtom {
    fn name(&self) -> String {
        match self {
            InnerAtom::Input(j) => format!("x{}", j + 1),
            InnerAtom::Output(k) => format!("y{}", k + 1),
        }
    }
}

impl AtomName for OuterAtom {
    fn name(&self) -> String {
        let OuterAtom::Prob(i) = self;
        format!("p{}", i + 1)
    }
}

impl<A: AtomName> fmt::Display for Expr<A> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_prec(self, f, 0)
    }
}

/// Precedence levels: 1 = additive, 2 = multiplicative, 3 = unary minus.
fn prec<A>(e: &Expr<A>) -> u8 {
    match e {
        Expr::Add(..) | Expr::Sub(..) => 1,
        Expr::Mul(..) | Expr::Div(..) => 2,
        Expr::Neg(..) => 3,
        _ => 4,
    }
}

fn write_prec<A: AtomName>(e: &Expr<A>, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
    let my = prec(e);
    let parens = my < min;
    if parens {
        write!(f, "(")?;
    }
    match e {
        Expr::Atom(a) => write!(f, "{}", a.name())?,
        Expr::Const(c) => {
            if *c < 0.0 {
                // Reparses as Neg(Const(|c|)) — semantically identical; the
                // parser itself never produces negative constants.
                write!(f, "-{}", -c)?
            } else {
                write!(f, "{c}")?
            }
        }
        Expr::Add(a, b) => {
            write_prec(a, f, 1)?;
            write!(f, " + ")?;
            write_prec(b, f, 2)?;
        }
        Expr::Sub(a, b) => {
            write_prec(a, f, 1)?;
            write!(f, " - ")?;
            write_prec(b, f, 2)?;
        }
        Expr::Mul(a, b) => {
            write_prec(a, f, 2)?;
            write!(f, " * ")?;
            write_prec(b, f, 3)?;
        }
        Expr::Div(a, b) => {
            write_prec(a, f, 2)?;
            write!(f, " / ")?;
            write_prec(b, f, 3)?;
        }
        Expr::Neg(a) => {
            write!(f, "-")?;
            write_prec(a, f, 3)?;
        }
        Expr::Min(a, b) => {
            write!(f, "min(")?;
            write_prec(a, f, 0)?;
            write!(f, ", ")?;
            write_prec(b, f, 0)?;
            write!(f, ")")?;
        }
        Expr::Max(a, b) => {
            write!(f, "max(")?;
            write_prec(a, f, 0)?;
            write!(f, ", ")?;
            write_prec(b, f, 0)?;
            write!(f, ")")?;
        }
        Expr::Relu(a) => {
            write!(f, "relu(")?;
            write_prec(a, f, 0)?;
            write!(f, ")")?;
        }
        Expr::Sigmoid(a) => {
            write!(f, "sigmoid(")?;
            write_prec(a, f, 0)?;
            write!(f, ")")?;
        }
        Expr::Tanh(a) => {
            write!(f, "tanh(")?;
            write_prec(a, f, 0)?;
            write!(f, ")")?;
        }
    }
    if parens {
        write!(f, ")")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grammar_maps_min_sub_neg() {
        let e = parse_inner("min(y1 - y2, -x3)").unwrap();
        let want =
            (InnerExpr::output(0) - InnerExpr::output(1)).min2(-InnerExpr::input(2));
        assert_eq!(e, want);
    }

    #[test]
    fn ratio_ast_parses() {
        let e = parse_outer("(p1*p4)/(p2*p3) - 0.8").unwrap();
        let want = OuterExpr::prob(0) * OuterExpr::prob(3)
            / (OuterExpr::prob(1) * OuterExpr::prob(2))
            - Expr::constant(0.8);
        assert_eq!(e, want);
    }

    #[test]
    fn unknown_identifier_is_an_error() {
        match parse_inner("relu(q)") {
            Err(ParseError::UnknownIdentifier { name, .. }) => assert_eq!(name, "q"),
            other => panic!("expected unknown identifier, got {other:?}"),
        }
        assert!(matches!(
            parse_inner("p1 + 1"),
            Err(ParseError::WrongAtomKind { .. })
        ));
        assert!(matches!(
            parse_outer("x1"),
            Err(ParseError::WrongAtomKind { .. })
        ));
        // x0 is not a valid 1-based identifier.
        assert!(matches!(
            parse_inner("x0"),
            Err(ParseError::UnknownIdentifier { .. })
        ));
    }

    #[test]
    fn syntax_errors_carry_positions() {
        match parse_inner("x1 + ") {
            Err(ParseError::Syntax { pos, .. }) => assert_eq!(pos, 5),
            other => panic!("expected syntax error, got {other:?}"),
        }
        match parse_inner("x1 ? 2") {
            Err(ParseError::Syntax { pos, .. }) => assert_eq!(pos, 3),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn nary_min_folds_left() {
        let e = parse_inner("min(x1, x2, x3)").unwrap();
        let want = InnerExpr::input(0)
            .min2(InnerExpr::input(1))
            .min2(InnerExpr::input(2));
        assert_eq!(e, want);
    }

    #[test]
    fn eval_hand_arithmetic() {
        let g = parse_outer("(p1*p4)/(p2*p3) - 0.8").unwrap();
        let v = g.eval_outer(&[0.5, 0.5, 0.5, 0.5]).unwrap();
        assert!((v - 0.2).abs() < 1e-15);

        let f = parse_inner("min(y1 - y2, -x1)").unwrap();
        assert_eq!(f.eval_inner(&[0.0], &[1.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn division_by_zero_convention() {
        let g = parse_outer("(p1*p4)/(p2*p3) - 0.8").unwrap();
        // p2 = 0 with positive numerator → +∞.
        let v = g.eval_outer(&[0.5, 0.0, 0.5, 0.5]).unwrap();
        assert_eq!(v, f64::INFINITY);
        // negative numerator → −∞ (before subtracting the constant).
        let h = parse_outer("-p1 / p2").unwrap();
        assert_eq!(h.eval_outer(&[0.5, 0.0]).unwrap(), f64::NEG_INFINITY);
        // 0/0 → error.
        assert_eq!(
            h.eval_outer(&[0.0, 0.0]),
            Err(EvalError::ZeroOverZero)
        );
    }

    #[test]
    fn strict_interval_eval_flags_exact_zero_over_zero() {
        let g = parse_outer("p1 / p2").unwrap();
        let zero = Interval::point(0.0);
        let res = g.eval_interval_strict(&|OuterAtom::Prob(_)| zero);
        assert_eq!(res, Err(EvalError::ZeroOverZero));
        // Non-degenerate denominators pass through.
        let res = g
            .eval_interval_strict(&|OuterAtom::Prob(i)| {
                if *i == 0 {
                    Interval::of(0.0, 0.5)
                } else {
                    Interval::of(0.25, 0.5)
                }
            })
            .unwrap();
        assert_eq!(res, Interval::of(0.0, 2.0));
        // A numerator pinned to 0 against a denominator still touching 0
        // must not pretend to be conclusive: the quotient could resolve to
        // 0 or to 0/0, so no information is the only sound answer.
        let res = g
            .eval_interval_strict(&|OuterAtom::Prob(i)| {
                if *i == 0 {
                    Interval::point(0.0)
                } else {
                    Interval::of(0.0, 0.5)
                }
            })
            .unwrap();
        assert_eq!(res, Interval::EVERYTHING);
    }

    #[test]
    fn print_parse_round_trip_samples() {
        for text in [
            "min(y1 - y2, -x3)",
            "(p1*p4)/(p2*p3) - 0.85",
            "relu(x1) + sigmoid(x2) * tanh(x3)",
            "-x1 - -x2",
            "x1 - (x2 + x3)",
            "x1 / (x2 / x3)",
            "max(x1, x2, x3, 0.5)",
            "1e-3 * x1 + 2.5E2",
        ] {
            let ast = Parser::new(text).unwrap().parse_full().unwrap();
            let printed = format!(
                "{}",
                ast.clone()
                    .map_atoms(&|a, _| Ok::<_, ParseError>(PrintableGeneric(a)))
                    .unwrap()
            );
            let reparsed = Parser::new(&printed).unwrap().parse_full().unwrap();
            // Compare shapes ignoring stored positions.
            let strip = |e: GenericExpr| e.map_atoms(&|a, _| Ok::<_, ParseError>(a)).unwrap();
            assert_eq!(strip(ast), strip(reparsed), "round trip failed for {text:?}");
        }
    }

    #[derive(Debug, Clone, PartialEq)]
    struct PrintableGeneric(GenericAtom);

    impl AtomName for PrintableGeneric {
        fn name(&self) -> String {
            match self.0 {
                GenericAtom::Input(j) => format!("x{}", j + 1),
                GenericAtom::Output(k) => format!("y{}", k + 1),
                GenericAtom::Prob(i) => format!("p{}", i + 1),
            }
        }
    }
}
