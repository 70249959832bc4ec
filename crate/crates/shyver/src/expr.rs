//! Dynamics expression language: multivariate polynomials plus `norm_inf(x)`.
//!
//! Grammar: numbers, `x[i]`, `+ - * ^`, `norm_inf(x)`, parentheses. This is
//! deliberately small so that cell and face integrals have closed forms; the
//! reduction never needs numeric quadrature.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::geom::Rect;

#[derive(Debug, Error)]
pub enum ExprError {
    #[error("expression syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("coordinate index {index} out of range for dimension {dim}")]
    CoordOutOfRange { index: usize, dim: usize },
    #[error("unsupported expression: {0}")]
    Unsupported(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Coord(usize),
    NormInf,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, u32),
}

impl Expr {
    pub fn constant(v: f64) -> Self {
        Expr::Const(v)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Coord(i) => x[*i],
            Expr::NormInf => x.iter().fold(0.0f64, |m, v| m.max(v.abs())),
            Expr::Neg(e) => -e.eval(x),
            Expr::Add(a, b) => a.eval(x) + b.eval(x),
            Expr::Sub(a, b) => a.eval(x) - b.eval(x),
            Expr::Mul(a, b) => a.eval(x) * b.eval(x),
            Expr::Pow(e, k) => e.eval(x).powi(*k as i32),
        }
    }

    pub fn contains_norm_inf(&self) -> bool {
        match self {
            Expr::NormInf => true,
            Expr::Const(_) | Expr::Coord(_) => false,
            Expr::Neg(e) | Expr::Pow(e, _) => e.contains_norm_inf(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => {
                a.contains_norm_inf() || b.contains_norm_inf()
            }
        }
    }

    /// Lower to a polynomial, substituting `norm_inf(x)` by `sub` when given.
    fn to_poly(&self, sub: Option<&Poly>) -> Result<Poly, ExprError> {
        Ok(match self {
            Expr::Const(c) => Poly::constant(*c),
            Expr::Coord(i) => Poly::coord(*i),
            Expr::NormInf => match sub {
                Some(p) => p.clone(),
                None => {
                    return Err(ExprError::Unsupported(
                        "norm_inf(x) has no polynomial form here".into(),
                    ))
                }
            },
            Expr::Neg(e) => e.to_poly(sub)?.scale(-1.0),
            Expr::Add(a, b) => a.to_poly(sub)?.add(&b.to_poly(sub)?),
            Expr::Sub(a, b) => a.to_poly(sub)?.add(&b.to_poly(sub)?.scale(-1.0)),
            Expr::Mul(a, b) => a.to_poly(sub)?.mul(&b.to_poly(sub)?),
            Expr::Pow(e, k) => e.to_poly(sub)?.pow(*k),
        })
    }

    /// Exact integral of the expression over an axis-aligned box. Axes with
    /// `lo == hi` are treated as pinned, so the same routine computes face
    /// integrals with respect to the (d-1)-dimensional surface measure.
    ///
    /// `norm_inf(x)` is supported only in dimension 1, where it is resolved
    /// by splitting the interval at 0. In higher dimensions the split regions
    /// are not boxes and the integral is reported as unsupported.
    pub fn integrate(&self, rect: &Rect) -> Result<f64, ExprError> {
        if !self.contains_norm_inf() {
            return Ok(self.to_poly(None)?.integrate(rect));
        }
        if rect.dim() != 1 {
            return Err(ExprError::Unsupported(
                "norm_inf(x) integrals are only exact in dimension 1".into(),
            ));
        }
        let (lo, hi) = (rect.lo[0], rect.hi[0]);
        let mut total = 0.0;
        // On x >= 0, norm_inf = x; on x <= 0, norm_inf = -x.
        if hi > 0.0 {
            let part = Rect::new(vec![lo.max(0.0)], vec![hi]);
            if part.lo[0] <= part.hi[0] {
                total += self.to_poly(Some(&Poly::coord(0)))?.integrate(&part);
            }
        }
        if lo < 0.0 {
            let part = Rect::new(vec![lo], vec![hi.min(0.0)]);
            if part.lo[0] <= part.hi[0] {
                total += self
                    .to_poly(Some(&Poly::coord(0).scale(-1.0)))?
                    .integrate(&part);
            }
        }
        if lo == hi {
            // Pinned single axis: surface "integral" is point evaluation.
            total = self.eval(&[lo]);
        }
        Ok(total)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Coord(i) => write!(f, "x[{i}]"),
            Expr::NormInf => write!(f, "norm_inf(x)"),
            Expr::Neg(e) => write!(f, "-({e})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Pow(e, k) => write!(f, "({e})^{k}"),
        }
    }
}

/// Sparse multivariate polynomial keyed by exponent vectors.
#[derive(Debug, Clone, Default)]
pub struct Poly {
    terms: BTreeMap<Vec<u32>, f64>,
}

impl Poly {
    fn constant(c: f64) -> Self {
        let mut terms = BTreeMap::new();
        if c != 0.0 {
            terms.insert(Vec::new(), c);
        }
        Poly { terms }
    }

    fn coord(i: usize) -> Self {
        let mut e = vec![0u32; i + 1];
        e[i] = 1;
        let mut terms = BTreeMap::new();
        terms.insert(e, 1.0);
        Poly { terms }
    }

    fn scale(mut self, s: f64) -> Self {
        for v in self.terms.values_mut() {
            *v *= s;
        }
        self
    }

    fn add(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (e, c) in &other.terms {
            *out.terms.entry(e.clone()).or_insert(0.0) += c;
        }
        out.terms.retain(|_, c| *c != 0.0);
        out
    }

    fn mul(&self, other: &Poly) -> Poly {
        let mut out = Poly::default();
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                let n = ea.len().max(eb.len());
                let mut e = vec![0u32; n];
                for (i, v) in ea.iter().enumerate() {
                    e[i] += v;
                }
                for (i, v) in eb.iter().enumerate() {
                    e[i] += v;
                }
                *out.terms.entry(e).or_insert(0.0) += ca * cb;
            }
        }
        out.terms.retain(|_, c| *c != 0.0);
        out
    }

    fn pow(&self, k: u32) -> Poly {
        let mut out = Poly::constant(1.0);
        for _ in 0..k {
            out = out.mul(self);
        }
        out
    }

    /// Exact integral over a box; axes with `lo == hi` substitute the pinned
    /// value instead of integrating.
    fn integrate(&self, rect: &Rect) -> f64 {
        let mut total = 0.0;
        for (e, c) in &self.terms {
            let mut v = *c;
            for axis in 0..rect.dim() {
                let (lo, hi) = (rect.lo[axis], rect.hi[axis]);
                let k = e.get(axis).copied().unwrap_or(0);
                if lo == hi {
                    v *= lo.powi(k as i32);
                } else {
                    let p = k as i32 + 1;
                    v *= (hi.powi(p) - lo.powi(p)) / p as f64;
                }
            }
            total += v;
        }
        total
    }
}

/// Parse an expression string; coordinate indices are validated against `dim`.
pub fn parse_expr(input: &str, dim: usize) -> Result<Expr, ExprError> {
    let mut p = Parser {
        src: input.as_bytes(),
        pos: 0,
        dim,
    };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(ExprError::Syntax {
            pos: p.pos,
            msg: "unexpected trailing input".into(),
        });
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    dim: usize,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> Result<(), ExprError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(ExprError::Syntax {
                pos: self.pos,
                msg: format!("expected '{}'", c as char),
            })
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(b'-') => {
                    self.pos += 1;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.factor()?;
        while self.peek() == Some(b'*') {
            self.pos += 1;
            lhs = Expr::Mul(Box::new(lhs), Box::new(self.factor()?));
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            self.skip_ws();
            let start = self.pos;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if start == self.pos {
                return Err(ExprError::Syntax {
                    pos: self.pos,
                    msg: "expected integer exponent".into(),
                });
            }
            let k: u32 = std::str::from_utf8(&self.src[start..self.pos])
                .unwrap()
                .parse()
                .map_err(|_| ExprError::Syntax {
                    pos: start,
                    msg: "exponent too large".into(),
                })?;
            return Ok(Expr::Pow(Box::new(base), k));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                Ok(Expr::Neg(Box::new(self.atom()?)))
            }
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.eat(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(b'x') => self.coord(),
            Some(b'n') => self.norm_inf(),
            _ => Err(ExprError::Syntax {
                pos: self.pos,
                msg: "expected number, x[i], or norm_inf(x)".into(),
            }),
        }
    }

    fn number(&mut self) -> Result<Expr, ExprError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_digit()
                || self.src[self.pos] == b'.'
                || self.src[self.pos] == b'e'
                || self.src[self.pos] == b'E'
                || (self.pos > start
                    && (self.src[self.pos] == b'-' || self.src[self.pos] == b'+')
                    && matches!(self.src[self.pos - 1], b'e' | b'E')))
        {
            self.pos += 1;
        }
        std::str::from_utf8(&self.src[start..self.pos])
            .unwrap()
            .parse::<f64>()
            .map(Expr::Const)
            .map_err(|_| ExprError::Syntax {
                pos: start,
                msg: "invalid number".into(),
            })
    }

    fn coord(&mut self) -> Result<Expr, ExprError> {
        self.pos += 1; // 'x'
        self.eat(b'[')?;
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        let idx: usize = std::str::from_utf8(&self.src[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|_| ExprError::Syntax {
                pos: start,
                msg: "expected coordinate index".into(),
            })?;
        self.eat(b']')?;
        if idx >= self.dim {
            return Err(ExprError::CoordOutOfRange {
                index: idx,
                dim: self.dim,
            });
        }
        Ok(Expr::Coord(idx))
    }

    fn norm_inf(&mut self) -> Result<Expr, ExprError> {
        const KW: &[u8] = b"norm_inf(x)";
        if self.src.len() - self.pos >= KW.len() && &self.src[self.pos..self.pos + KW.len()] == KW {
            self.pos += KW.len();
            Ok(Expr::NormInf)
        } else {
            Err(ExprError::Syntax {
                pos: self.pos,
                msg: "expected norm_inf(x)".into(),
            })
        }
    }
}
