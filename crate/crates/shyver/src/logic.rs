//! MITL and iLTL formulas over linear-inequality atoms, in negation normal
//! form.
//!
//! The surface syntax is `U[a,b]`, `R[a,b]`, `X`, `&`, `|`, `!`, `true`,
//! `false`; unbounded upper endpoints are written `inf`, and a bare `U`/`R`
//! in a dense-time formula means `[0, inf]`. The parser pushes every negation
//! inward, so no tree ever contains a negation node. Thresholds and interval
//! endpoints are exact rationals; decimal literals convert exactly.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::model::Observable;

#[derive(Debug, Error)]
pub enum LogicError {
    #[error("formula syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("singleton interval [{0}, {0}] is not allowed")]
    SingletonInterval(String),
    #[error("X is a discrete-time operator and cannot appear in a dense-time formula")]
    NextInDenseTime,
    #[error("timing intervals cannot appear in a discrete-time formula")]
    IntervalInDiscreteTime,
    #[error("no strengthening margin given for observable '{0}'")]
    MissingMargin(String),
    #[error("observable '{0}' has an identically zero weight vector")]
    ZeroWeight(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flavor {
    /// Dense-time formulas with timing intervals.
    Mitl,
    /// Discrete-time formulas with X and untimed U/R.
    Iltl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rel {
    Lt,
    Le,
    Ge,
    Gt,
}

impl Rel {
    pub fn negate(self) -> Rel {
        match self {
            Rel::Lt => Rel::Ge,
            Rel::Le => Rel::Gt,
            Rel::Ge => Rel::Lt,
            Rel::Gt => Rel::Le,
        }
    }

    pub fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            Rel::Lt => value < threshold,
            Rel::Le => value <= threshold,
            Rel::Ge => value >= threshold,
            Rel::Gt => value > threshold,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Rel::Lt => "<",
            Rel::Le => "<=",
            Rel::Ge => ">=",
            Rel::Gt => ">",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Atom {
    pub observable: String,
    pub rel: Rel,
    pub threshold: BigRational,
}

impl Atom {
    pub fn threshold_f64(&self) -> f64 {
        rational_to_f64(&self.threshold)
    }
}

/// Closed timing interval; `hi = None` means unbounded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimeInterval {
    pub lo: BigRational,
    pub hi: Option<BigRational>,
}

impl TimeInterval {
    pub fn unbounded() -> Self {
        TimeInterval {
            lo: BigRational::zero(),
            hi: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Formula {
    False,
    True,
    Atom(Atom),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Next(Box<Formula>),
    /// `Until(interval, hold, goal)`; the interval is `None` in discrete time.
    Until(Option<TimeInterval>, Box<Formula>, Box<Formula>),
    Release(Option<TimeInterval>, Box<Formula>, Box<Formula>),
}

impl Formula {
    /// Dual formula: the negation pushed to atoms.
    pub fn negate(&self) -> Formula {
        match self {
            Formula::False => Formula::True,
            Formula::True => Formula::False,
            Formula::Atom(a) => Formula::Atom(Atom {
                observable: a.observable.clone(),
                rel: a.rel.negate(),
                threshold: a.threshold.clone(),
            }),
            Formula::And(a, b) => Formula::Or(Box::new(a.negate()), Box::new(b.negate())),
            Formula::Or(a, b) => Formula::And(Box::new(a.negate()), Box::new(b.negate())),
            Formula::Next(a) => Formula::Next(Box::new(a.negate())),
            Formula::Until(i, a, b) => {
                Formula::Release(i.clone(), Box::new(a.negate()), Box::new(b.negate()))
            }
            Formula::Release(i, a, b) => {
                Formula::Until(i.clone(), Box::new(a.negate()), Box::new(b.negate()))
            }
        }
    }

    /// Distinct atoms in first-occurrence preorder.
    pub fn atoms(&self) -> Vec<Atom> {
        let mut out = Vec::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms(&self, out: &mut Vec<Atom>) {
        match self {
            Formula::Atom(a) => {
                if !out.contains(a) {
                    out.push(a.clone());
                }
            }
            Formula::And(a, b) | Formula::Or(a, b) => {
                a.collect_atoms(out);
                b.collect_atoms(out);
            }
            Formula::Next(a) => a.collect_atoms(out),
            Formula::Until(_, a, b) | Formula::Release(_, a, b) => {
                a.collect_atoms(out);
                b.collect_atoms(out);
            }
            Formula::True | Formula::False => {}
        }
    }

    /// Largest bounded interval endpoint reachable by nesting, or `None`
    /// when some temporal operator is unbounded.
    pub fn horizon(&self) -> Option<BigRational> {
        match self {
            Formula::True | Formula::False | Formula::Atom(_) => Some(BigRational::zero()),
            Formula::And(a, b) | Formula::Or(a, b) => {
                Some(a.horizon()?.max(b.horizon()?))
            }
            Formula::Next(a) => Some(a.horizon()? + BigRational::one()),
            Formula::Until(i, a, b) | Formula::Release(i, a, b) => {
                let hi = match i {
                    Some(iv) => iv.hi.clone()?,
                    None => return None,
                };
                let inner = a.horizon()?.max(b.horizon()?);
                Some(hi + inner)
            }
        }
    }

    pub fn contains_release(&self) -> bool {
        match self {
            Formula::Release(..) => true,
            Formula::And(a, b) | Formula::Or(a, b) => {
                a.contains_release() || b.contains_release()
            }
            Formula::Next(a) => a.contains_release(),
            Formula::Until(_, a, b) => a.contains_release() || b.contains_release(),
            _ => false,
        }
    }
}

/// Shift every atom threshold outward by the observable's margin: `> c`
/// becomes `> c + eps`, `< c` becomes `< c - eps`, and the non-strict
/// relations mirror the strict ones. Satisfaction of the output on the
/// reduced chain implies satisfaction of the input on the original system.
pub fn strengthen(
    formula: &Formula,
    margins: &BTreeMap<String, BigRational>,
) -> Result<Formula, LogicError> {
    Ok(match formula {
        Formula::Atom(a) => {
            let eps = margins
                .get(&a.observable)
                .ok_or_else(|| LogicError::MissingMargin(a.observable.clone()))?;
            let threshold = match a.rel {
                Rel::Gt | Rel::Ge => &a.threshold + eps,
                Rel::Lt | Rel::Le => &a.threshold - eps,
            };
            Formula::Atom(Atom {
                observable: a.observable.clone(),
                rel: a.rel,
                threshold,
            })
        }
        Formula::And(a, b) => Formula::And(
            Box::new(strengthen(a, margins)?),
            Box::new(strengthen(b, margins)?),
        ),
        Formula::Or(a, b) => Formula::Or(
            Box::new(strengthen(a, margins)?),
            Box::new(strengthen(b, margins)?),
        ),
        Formula::Next(a) => Formula::Next(Box::new(strengthen(a, margins)?)),
        Formula::Until(i, a, b) => Formula::Until(
            i.clone(),
            Box::new(strengthen(a, margins)?),
            Box::new(strengthen(b, margins)?),
        ),
        Formula::Release(i, a, b) => Formula::Release(
            i.clone(),
            Box::new(strengthen(a, margins)?),
            Box::new(strengthen(b, margins)?),
        ),
        other => other.clone(),
    })
}

/// Rescale an observable so its largest absolute weight is exactly 1, and
/// divide every threshold mentioning it by the same factor. The satisfaction
/// set of each atom is unchanged.
pub fn normalize_observable(
    obs: &Observable,
    formula: &Formula,
) -> Result<(Observable, Formula), LogicError> {
    let scale = obs.max_abs();
    if scale == 0.0 {
        return Err(LogicError::ZeroWeight(obs.name.clone()));
    }
    if scale == 1.0 {
        return Ok((obs.clone(), formula.clone()));
    }
    let scaled = Observable {
        name: obs.name.clone(),
        pieces: obs
            .pieces
            .iter()
            .map(|(m, r, v)| (*m, r.clone(), v / scale))
            .collect(),
    };
    let ratio = BigRational::from_float(scale).expect("finite weight");
    let rescaled = rescale_thresholds(formula, &obs.name, &ratio);
    Ok((scaled, rescaled))
}

fn rescale_thresholds(formula: &Formula, name: &str, scale: &BigRational) -> Formula {
    match formula {
        Formula::Atom(a) if a.observable == name => Formula::Atom(Atom {
            observable: a.observable.clone(),
            rel: a.rel,
            threshold: &a.threshold / scale,
        }),
        Formula::And(a, b) => Formula::And(
            Box::new(rescale_thresholds(a, name, scale)),
            Box::new(rescale_thresholds(b, name, scale)),
        ),
        Formula::Or(a, b) => Formula::Or(
            Box::new(rescale_thresholds(a, name, scale)),
            Box::new(rescale_thresholds(b, name, scale)),
        ),
        Formula::Next(a) => Formula::Next(Box::new(rescale_thresholds(a, name, scale))),
        Formula::Until(i, a, b) => Formula::Until(
            i.clone(),
            Box::new(rescale_thresholds(a, name, scale)),
            Box::new(rescale_thresholds(b, name, scale)),
        ),
        Formula::Release(i, a, b) => Formula::Release(
            i.clone(),
            Box::new(rescale_thresholds(a, name, scale)),
            Box::new(rescale_thresholds(b, name, scale)),
        ),
        other => other.clone(),
    }
}

pub fn rational_to_f64(r: &BigRational) -> f64 {
    let numer = r.numer();
    let denom = r.denom();
    // Convert through i128 when possible, falling back to string parsing.
    match (i128::try_from(numer.clone()), i128::try_from(denom.clone())) {
        (Ok(n), Ok(d)) => n as f64 / d as f64,
        _ => format!("{numer}").parse::<f64>().unwrap_or(f64::NAN)
            / format!("{denom}").parse::<f64>().unwrap_or(f64::NAN),
    }
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

/// Intermediate tree that still carries negations.
enum Raw {
    False,
    True,
    Atom(Atom),
    Not(Box<Raw>),
    And(Box<Raw>, Box<Raw>),
    Or(Box<Raw>, Box<Raw>),
    Next(Box<Raw>),
    Until(Option<TimeInterval>, Box<Raw>, Box<Raw>),
    Release(Option<TimeInterval>, Box<Raw>, Box<Raw>),
}

impl Raw {
    fn into_nnf(self, negated: bool) -> Formula {
        match self {
            Raw::False => {
                if negated {
                    Formula::True
                } else {
                    Formula::False
                }
            }
            Raw::True => {
                if negated {
                    Formula::False
                } else {
                    Formula::True
                }
            }
            Raw::Atom(a) => {
                if negated {
                    Formula::Atom(Atom {
                        observable: a.observable,
                        rel: a.rel.negate(),
                        threshold: a.threshold,
                    })
                } else {
                    Formula::Atom(a)
                }
            }
            Raw::Not(inner) => inner.into_nnf(!negated),
            Raw::And(a, b) => {
                let (a, b) = (a.into_nnf(negated), b.into_nnf(negated));
                if negated {
                    Formula::Or(Box::new(a), Box::new(b))
                } else {
                    Formula::And(Box::new(a), Box::new(b))
                }
            }
            Raw::Or(a, b) => {
                let (a, b) = (a.into_nnf(negated), b.into_nnf(negated));
                if negated {
                    Formula::And(Box::new(a), Box::new(b))
                } else {
                    Formula::Or(Box::new(a), Box::new(b))
                }
            }
            Raw::Next(a) => Formula::Next(Box::new(a.into_nnf(negated))),
            Raw::Until(i, a, b) => {
                let (a, b) = (a.into_nnf(negated), b.into_nnf(negated));
                if negated {
                    Formula::Release(i, Box::new(a), Box::new(b))
                } else {
                    Formula::Until(i, Box::new(a), Box::new(b))
                }
            }
            Raw::Release(i, a, b) => {
                let (a, b) = (a.into_nnf(negated), b.into_nnf(negated));
                if negated {
                    Formula::Until(i, Box::new(a), Box::new(b))
                } else {
                    Formula::Release(i, Box::new(a), Box::new(b))
                }
            }
        }
    }
}

pub fn parse_formula(text: &str, flavor: Flavor) -> Result<Formula, LogicError> {
    let mut p = FormulaParser {
        src: text.as_bytes(),
        pos: 0,
        flavor,
    };
    let raw = p.disjunction()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(LogicError::Syntax {
            pos: p.pos,
            msg: "unexpected trailing input".into(),
        });
    }
    Ok(raw.into_nnf(false))
}

struct FormulaParser<'a> {
    src: &'a [u8],
    pos: usize,
    flavor: Flavor,
}

impl<'a> FormulaParser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn starts_with(&mut self, s: &str) -> bool {
        self.skip_ws();
        self.src[self.pos..].starts_with(s.as_bytes())
    }

    fn eat(&mut self, c: u8) -> Result<(), LogicError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(LogicError::Syntax {
                pos: self.pos,
                msg: format!("expected '{}'", c as char),
            })
        }
    }

    fn keyword(&mut self, kw: &str) -> bool {
        self.skip_ws();
        if self.src[self.pos..].starts_with(kw.as_bytes()) {
            let after = self.src.get(self.pos + kw.len()).copied();
            if !matches!(after, Some(c) if c.is_ascii_alphanumeric() || c == b'_') {
                self.pos += kw.len();
                return true;
            }
        }
        false
    }

    fn disjunction(&mut self) -> Result<Raw, LogicError> {
        let mut lhs = self.conjunction()?;
        while self.peek() == Some(b'|') {
            self.pos += 1;
            lhs = Raw::Or(Box::new(lhs), Box::new(self.conjunction()?));
        }
        Ok(lhs)
    }

    fn conjunction(&mut self) -> Result<Raw, LogicError> {
        let mut lhs = self.unary()?;
        while self.peek() == Some(b'&') {
            self.pos += 1;
            lhs = Raw::And(Box::new(lhs), Box::new(self.unary()?));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Raw, LogicError> {
        if self.peek() == Some(b'!') {
            self.pos += 1;
            return Ok(Raw::Not(Box::new(self.unary()?)));
        }
        if self.keyword("X") {
            if self.flavor == Flavor::Mitl {
                return Err(LogicError::NextInDenseTime);
            }
            return Ok(Raw::Next(Box::new(self.unary()?)));
        }
        self.temporal()
    }

    fn temporal(&mut self) -> Result<Raw, LogicError> {
        let lhs = self.primary()?;
        let op = if self.keyword("U") {
            Some(true)
        } else if self.keyword("R") {
            Some(false)
        } else {
            None
        };
        let Some(is_until) = op else {
            return Ok(lhs);
        };
        let interval = if self.peek() == Some(b'[') {
            if self.flavor == Flavor::Iltl {
                return Err(LogicError::IntervalInDiscreteTime);
            }
            Some(self.interval()?)
        } else {
            match self.flavor {
                Flavor::Mitl => Some(TimeInterval::unbounded()),
                Flavor::Iltl => None,
            }
        };
        let rhs = self.primary()?;
        Ok(if is_until {
            Raw::Until(interval, Box::new(lhs), Box::new(rhs))
        } else {
            Raw::Release(interval, Box::new(lhs), Box::new(rhs))
        })
    }

    fn primary(&mut self) -> Result<Raw, LogicError> {
        if self.peek() == Some(b'(') {
            self.pos += 1;
            let inner = self.disjunction()?;
            self.eat(b')')?;
            return Ok(inner);
        }
        if self.keyword("true") {
            return Ok(Raw::True);
        }
        if self.keyword("false") {
            return Ok(Raw::False);
        }
        // Unary operators are legal inside a primary position when prefixed,
        // e.g. `true U !(y > 0)` comes through a parse of `!`.
        if self.peek() == Some(b'!') {
            self.pos += 1;
            return Ok(Raw::Not(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Raw, LogicError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(LogicError::Syntax {
                pos: self.pos,
                msg: "expected an observable name".into(),
            });
        }
        let name = std::str::from_utf8(&self.src[start..self.pos])
            .unwrap()
            .to_string();
        let rel = if self.starts_with("<=") {
            self.pos += 2;
            Rel::Le
        } else if self.starts_with(">=") {
            self.pos += 2;
            Rel::Ge
        } else if self.peek() == Some(b'<') {
            self.pos += 1;
            Rel::Lt
        } else if self.peek() == Some(b'>') {
            self.pos += 1;
            Rel::Gt
        } else {
            return Err(LogicError::Syntax {
                pos: self.pos,
                msg: "expected a relation < <= >= >".into(),
            });
        };
        let threshold = self.number()?;
        Ok(Raw::Atom(Atom {
            observable: name,
            rel,
            threshold,
        }))
    }

    /// Decimal or `p/q` rational literal, converted exactly.
    fn number(&mut self) -> Result<BigRational, LogicError> {
        self.skip_ws();
        let start = self.pos;
        if self.peek() == Some(b'-') {
            self.pos += 1;
        }
        let digits = |p: &mut Self| {
            while p.pos < p.src.len() && p.src[p.pos].is_ascii_digit() {
                p.pos += 1;
            }
        };
        digits(self);
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            digits(self);
        }
        if self.src.get(self.pos) == Some(&b'/') {
            self.pos += 1;
            digits(self);
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        parse_rational(text).ok_or(LogicError::Syntax {
            pos: start,
            msg: "expected a number".into(),
        })
    }

    fn interval(&mut self) -> Result<TimeInterval, LogicError> {
        self.eat(b'[')?;
        let lo = self.number()?;
        self.eat(b',')?;
        let hi = if self.keyword("inf") {
            None
        } else {
            Some(self.number()?)
        };
        self.eat(b']')?;
        if let Some(h) = &hi {
            if *h == lo {
                return Err(LogicError::SingletonInterval(format_rational(&lo)));
            }
            if *h < lo {
                return Err(LogicError::Syntax {
                    pos: self.pos,
                    msg: "interval upper endpoint below lower".into(),
                });
            }
        }
        Ok(TimeInterval { lo, hi })
    }
}

/// Exact rational from a decimal or `p/q` literal.
pub fn parse_rational(text: &str) -> Option<BigRational> {
    let text = text.trim();
    if text.is_empty() {
        return None;
    }
    if let Some((p, q)) = text.split_once('/') {
        let numer: BigInt = p.trim().parse().ok()?;
        let denom: BigInt = q.trim().parse().ok()?;
        if denom.is_zero() {
            return None;
        }
        return Some(BigRational::new(numer, denom));
    }
    let (sign, rest) = match text.strip_prefix('-') {
        Some(r) => (-1, r),
        None => (1, text),
    };
    let (int_part, frac_part) = match rest.split_once('.') {
        Some((i, f)) => (i, f),
        None => (rest, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().all(|c| c.is_ascii_digit())
        || !frac_part.chars().all(|c| c.is_ascii_digit())
    {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let numer: BigInt = if digits.is_empty() {
        BigInt::zero()
    } else {
        digits.parse().ok()?
    };
    let denom = BigInt::from(10u32).pow(frac_part.len() as u32);
    Some(BigRational::new(numer * sign, denom))
}

/// Decimal when the denominator is a product of 2s and 5s, `p/q` otherwise;
/// both forms re-parse to the identical rational.
pub fn format_rational(r: &BigRational) -> String {
    let mut denom = r.denom().clone();
    let mut twos = 0u32;
    let mut fives = 0u32;
    let two = BigInt::from(2);
    let five = BigInt::from(5);
    while (&denom % &two).is_zero() {
        denom /= &two;
        twos += 1;
    }
    while (&denom % &five).is_zero() {
        denom /= &five;
        fives += 1;
    }
    if !denom.is_one() {
        return format!("{}/{}", r.numer(), r.denom());
    }
    let shift = twos.max(fives);
    let scaled = r.numer() * BigInt::from(10u32).pow(shift) / r.denom();
    let neg = scaled.is_negative();
    let digits = scaled.abs().to_string();
    let sign = if neg { "-" } else { "" };
    if shift == 0 {
        return format!("{sign}{digits}");
    }
    let pad = format!("{digits:0>width$}", width = shift as usize + 1);
    let split = pad.len() - shift as usize;
    format!("{sign}{}.{}", &pad[..split], &pad[split..])
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn primary(formula: &Formula, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            match formula {
                Formula::True => write!(f, "true"),
                Formula::False => write!(f, "false"),
                Formula::Atom(a) => write!(
                    f,
                    "{} {} {}",
                    a.observable,
                    a.rel.symbol(),
                    format_rational(&a.threshold)
                ),
                other => write!(f, "({other})"),
            }
        }
        match self {
            Formula::True | Formula::False | Formula::Atom(_) => primary(self, f),
            Formula::And(a, b) => {
                primary(a, f)?;
                write!(f, " & ")?;
                primary(b, f)
            }
            Formula::Or(a, b) => {
                primary(a, f)?;
                write!(f, " | ")?;
                primary(b, f)
            }
            Formula::Next(a) => {
                write!(f, "X ")?;
                primary(a, f)
            }
            Formula::Until(i, a, b) | Formula::Release(i, a, b) => {
                let op = if matches!(self, Formula::Until(..)) {
                    "U"
                } else {
                    "R"
                };
                primary(a, f)?;
                match i {
                    Some(iv) => {
                        let hi = match &iv.hi {
                            Some(h) => format_rational(h),
                            None => "inf".to_string(),
                        };
                        write!(f, " {op}[{},{}] ", format_rational(&iv.lo), hi)?;
                    }
                    None => write!(f, " {op} ")?,
                }
                primary(b, f)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Rect;
    use crate::rng::CounterRng;
    use proptest::prelude::prop_assert;

    fn rat(s: &str) -> BigRational {
        parse_rational(s).unwrap()
    }

    #[test]
    fn parse_until_with_interval() {
        let f = parse_formula("true U[0,5] (y2 > 0.25)", Flavor::Mitl).unwrap();
        let Formula::Until(Some(i), lhs, rhs) = f else {
            panic!("expected until")
        };
        assert_eq!(*lhs, Formula::True);
        assert_eq!(i.lo, rat("0"));
        assert_eq!(i.hi, Some(rat("5")));
        let Formula::Atom(a) = *rhs else { panic!() };
        assert_eq!(a.observable, "y2");
        assert_eq!(a.rel, Rel::Gt);
        assert_eq!(a.threshold, rat("0.25"));
    }

    #[test]
    fn negated_atom_flips_relation() {
        let f = parse_formula("!(y1 > 0)", Flavor::Mitl).unwrap();
        assert_eq!(
            f,
            Formula::Atom(Atom {
                observable: "y1".into(),
                rel: Rel::Le,
                threshold: rat("0"),
            })
        );
    }

    #[test]
    fn negated_until_becomes_release() {
        let f = parse_formula("!((y1>0) U[1,2] (y2>0))", Flavor::Mitl).unwrap();
        let Formula::Release(Some(i), lhs, rhs) = f else {
            panic!("expected release, got {f:?}")
        };
        assert_eq!(i.lo, rat("1"));
        assert_eq!(i.hi, Some(rat("2")));
        assert!(matches!(*lhs, Formula::Atom(Atom { rel: Rel::Le, .. })));
        assert!(matches!(*rhs, Formula::Atom(Atom { rel: Rel::Le, .. })));
    }

    #[test]
    fn singleton_interval_rejected() {
        assert!(matches!(
            parse_formula("true U[2,2] (y > 0)", Flavor::Mitl),
            Err(LogicError::SingletonInterval(_))
        ));
    }

    #[test]
    fn next_rejected_in_dense_time() {
        assert!(matches!(
            parse_formula("X (y > 0)", Flavor::Mitl),
            Err(LogicError::NextInDenseTime)
        ));
        assert!(parse_formula("X (y > 0)", Flavor::Iltl).is_ok());
    }

    #[test]
    fn interval_rejected_in_discrete_time() {
        assert!(matches!(
            parse_formula("true U[0,5] (y > 0)", Flavor::Iltl),
            Err(LogicError::IntervalInDiscreteTime)
        ));
    }

    #[test]
    fn bare_until_is_unbounded_in_dense_time() {
        let f = parse_formula("true U (y > 0)", Flavor::Mitl).unwrap();
        let Formula::Until(Some(i), _, _) = f else { panic!() };
        assert_eq!(i.lo, rat("0"));
        assert_eq!(i.hi, None);
    }

    #[test]
    fn strengthen_shifts_thresholds() {
        let mut margins = BTreeMap::new();
        margins.insert("y2".to_string(), rat("0.02"));
        let f = parse_formula("y2 > 0.25", Flavor::Mitl).unwrap();
        let s = strengthen(&f, &margins).unwrap();
        let Formula::Atom(a) = s else { panic!() };
        assert_eq!(a.threshold, rat("0.27"));

        let f = parse_formula("y2 < 0.25", Flavor::Mitl).unwrap();
        let Formula::Atom(a) = strengthen(&f, &margins).unwrap() else {
            panic!()
        };
        assert_eq!(a.threshold, rat("0.23"));
    }

    #[test]
    fn strengthen_with_zero_margin_is_identity() {
        let mut margins = BTreeMap::new();
        margins.insert("y1".to_string(), rat("0"));
        margins.insert("y2".to_string(), rat("0"));
        let f = parse_formula("(y1 > 0.5) U (y2 > 0.25)", Flavor::Mitl).unwrap();
        assert_eq!(strengthen(&f, &margins).unwrap(), f);
    }

    #[test]
    fn strengthen_missing_margin_errors() {
        let f = parse_formula("y9 > 0.5", Flavor::Mitl).unwrap();
        assert!(matches!(
            strengthen(&f, &BTreeMap::new()),
            Err(LogicError::MissingMargin(_))
        ));
    }

    #[test]
    fn strengthen_composes_additively() {
        let mut m1 = BTreeMap::new();
        m1.insert("y".to_string(), rat("0.01"));
        let mut m2 = BTreeMap::new();
        m2.insert("y".to_string(), rat("0.03"));
        let mut sum = BTreeMap::new();
        sum.insert("y".to_string(), rat("0.04"));
        let f = parse_formula("(y > 0.5) U (y < 0.2)", Flavor::Mitl).unwrap();
        let twice = strengthen(&strengthen(&f, &m1).unwrap(), &m2).unwrap();
        let once = strengthen(&f, &sum).unwrap();
        assert_eq!(twice, once);
    }

    proptest::proptest! {
        // Pointwise implication: a strengthened atom holding at a value
        // implies the original atom holds there, for every relation.
        #[test]
        fn strengthen_monotone_proptest(
            value in -1.0f64..1.0,
            threshold in -0.5f64..0.5,
            eps_num in 1u32..200,
        ) {
            let mut margins = BTreeMap::new();
            margins.insert(
                "y".to_string(),
                BigRational::new(eps_num.into(), 1000.into()),
            );
            for rel in [Rel::Lt, Rel::Le, Rel::Ge, Rel::Gt] {
                let atom = Formula::Atom(Atom {
                    observable: "y".into(),
                    rel,
                    threshold: BigRational::from_float(threshold).unwrap(),
                });
                let Formula::Atom(strong) = strengthen(&atom, &margins).unwrap() else {
                    unreachable!()
                };
                let Formula::Atom(orig) = atom else { unreachable!() };
                if strong.rel.holds(value, strong.threshold_f64()) {
                    prop_assert!(orig.rel.holds(value, orig.threshold_f64()));
                }
            }
        }
    }

    #[test]
    fn strengthen_is_pointwise_monotone() {
        // A strengthened atom holding at a value implies the original holds.
        let mut rng = CounterRng::new(12);
        let mut margins = BTreeMap::new();
        margins.insert("y".to_string(), rat("0.05"));
        for _ in 0..500 {
            let value = rng.uniform(-1.0, 1.0);
            let threshold = rng.uniform(-0.5, 0.5);
            for rel in [Rel::Lt, Rel::Le, Rel::Ge, Rel::Gt] {
                let atom = Formula::Atom(Atom {
                    observable: "y".into(),
                    rel,
                    threshold: BigRational::from_float(threshold).unwrap(),
                });
                let Formula::Atom(strong) = strengthen(&atom, &margins).unwrap() else {
                    panic!()
                };
                let Formula::Atom(orig) = atom else { panic!() };
                if strong.rel.holds(value, strong.threshold_f64()) {
                    assert!(orig.rel.holds(value, orig.threshold_f64()));
                }
            }
        }
    }

    #[test]
    fn atoms_deduplicate_in_preorder() {
        let f = parse_formula("(y1 > 0.5) U (y2 > 0.25)", Flavor::Mitl).unwrap();
        let atoms = f.atoms();
        assert_eq!(atoms.len(), 2);
        assert_eq!(atoms[0].observable, "y1");
        assert_eq!(atoms[1].observable, "y2");

        assert!(parse_formula("true", Flavor::Mitl).unwrap().atoms().is_empty());

        let dup = parse_formula("(a > 1) & (a > 1)", Flavor::Mitl).unwrap();
        assert_eq!(dup.atoms().len(), 1);
    }

    #[test]
    fn normalize_divides_weights_and_thresholds() {
        let obs = Observable {
            name: "y".into(),
            pieces: vec![
                (0, Rect::new(vec![0.0], vec![0.5]), 2.0),
                (0, Rect::new(vec![0.5], vec![1.0]), 0.0),
            ],
        };
        let f = parse_formula("y > 0.5", Flavor::Mitl).unwrap();
        let (scaled, rescaled) = normalize_observable(&obs, &f).unwrap();
        assert_eq!(scaled.pieces[0].2, 1.0);
        let Formula::Atom(a) = rescaled else { panic!() };
        assert_eq!(a.threshold, rat("0.25"));

        // Already normalized: unchanged.
        let (again, same) = normalize_observable(&scaled, &Formula::Atom(a.clone())).unwrap();
        assert_eq!(again.pieces[0].2, 1.0);
        assert_eq!(same, Formula::Atom(a));
    }

    #[test]
    fn normalize_preserves_satisfaction_signs() {
        let obs = Observable {
            name: "y".into(),
            pieces: vec![
                (0, Rect::new(vec![0.0], vec![0.5]), -4.0),
                (0, Rect::new(vec![0.5], vec![1.0]), 2.0),
            ],
        };
        let f = parse_formula("y > 1", Flavor::Mitl).unwrap();
        let (scaled, rescaled) = normalize_observable(&obs, &f).unwrap();
        assert_eq!(scaled.pieces[0].2, -1.0);
        assert_eq!(scaled.pieces[1].2, 0.5);
        let Formula::Atom(a) = rescaled else { panic!() };
        assert_eq!(a.threshold, rat("0.25"));
        // Satisfaction sets agree on random two-cell distributions.
        let mut rng = CounterRng::new(3);
        for _ in 0..100 {
            let p0 = rng.next_f64();
            let before = -4.0 * p0 + 2.0 * (1.0 - p0) > 1.0;
            let after = -1.0 * p0 + 0.5 * (1.0 - p0) > 0.25;
            assert_eq!(before, after);
        }
    }

    #[test]
    fn zero_weight_observable_rejected() {
        let obs = Observable {
            name: "y".into(),
            pieces: vec![(0, Rect::new(vec![0.0], vec![1.0]), 0.0)],
        };
        assert!(matches!(
            normalize_observable(&obs, &Formula::True),
            Err(LogicError::ZeroWeight(_))
        ));
    }

    #[test]
    fn print_parse_round_trip() {
        let cases = [
            "true U[0,5] (y2 > 0.25)",
            "(y1 > 0.5) U (y2 > 0.25)",
            "(a >= 0.1) R[0.5,2] ((b < 3) | (c <= 1/3))",
            "(a > 1) & ((b < 2) | false)",
        ];
        for case in cases {
            let f = parse_formula(case, Flavor::Mitl).unwrap();
            let printed = f.to_string();
            let back = parse_formula(&printed, Flavor::Mitl).unwrap();
            assert_eq!(f, back, "round trip failed for {case} -> {printed}");
        }
        let discrete = ["X (a > 1)", "(a > 1) U (b < 2)", "X ((a > 1) R (b < 2))"];
        for case in discrete {
            let f = parse_formula(case, Flavor::Iltl).unwrap();
            let back = parse_formula(&f.to_string(), Flavor::Iltl).unwrap();
            assert_eq!(f, back);
        }
    }

    #[test]
    fn random_negations_never_leave_negation_nodes() {
        // Build 1000 random formula strings with nested negations; every
        // parse must be negation-free by construction (the AST has no Not
        // node type), and re-negating twice must be the identity.
        let mut rng = CounterRng::new(77);
        for _ in 0..1000 {
            let text = random_formula_text(&mut rng, 3);
            let f = match parse_formula(&text, Flavor::Iltl) {
                Ok(f) => f,
                Err(e) => panic!("generated formula failed to parse: {text}: {e}"),
            };
            assert_eq!(f.negate().negate(), f, "double negation identity: {text}");
        }
    }

    fn random_formula_text(rng: &mut CounterRng, depth: u32) -> String {
        if depth == 0 {
            return match rng.below(4) {
                0 => "a > 0.5".to_string(),
                1 => "b <= 0.25".to_string(),
                2 => "true".to_string(),
                _ => "false".to_string(),
            };
        }
        let a = random_formula_text(rng, depth - 1);
        let b = random_formula_text(rng, depth - 1);
        match rng.below(6) {
            0 => format!("!({a})"),
            1 => format!("({a}) & ({b})"),
            2 => format!("({a}) | ({b})"),
            3 => format!("X ({a})"),
            4 => format!("({a}) U ({b})"),
            _ => format!("({a}) R ({b})"),
        }
    }

    #[test]
    fn horizon_and_release_detection() {
        let f = parse_formula("true U[0,5] ((a>0) U[0,2] (b>0))", Flavor::Mitl).unwrap();
        assert_eq!(f.horizon(), Some(rat("7")));
        assert!(!f.contains_release());
        let g = parse_formula("true U (a>0)", Flavor::Mitl).unwrap();
        assert_eq!(g.horizon(), None);
        let r = parse_formula("(a>0) R[0,1] (b>0)", Flavor::Mitl).unwrap();
        assert!(r.contains_release());
    }

    #[test]
    fn rational_formatting_round_trips() {
        for s in ["0.27", "1/3", "-0.5", "3", "7/8", "-2/7"] {
            let r = rat(s);
            assert_eq!(parse_rational(&format_rational(&r)).unwrap(), r);
        }
    }
}
