//! Three-valued piecewise-constant signals and the dense-time monitor.
//!
//! A signal assigns each atom True/False/Unknown on half-open segments of
//! `[0, T)` plus a two-valued tail on `[T, inf)`. The monitor runs two
//! classical piecewise-constant evaluations: a lower pass mapping Unknown to
//! False and an upper pass mapping Unknown to True. Negation-free formulas
//! are monotone in the atom valuation, so lower-pass truth at time zero
//! means every completion satisfies the formula (Yes) and upper-pass falsity
//! means none does (No); anything else is Unknown. Satisfaction sets are
//! computed bottom-up as exact rational interval unions.

use thiserror::Error;

use num_traits::Zero;

use crate::intervals::{normalize_breakpoints, spans_from_decomposition, Rat, Span, SpanSet};
use crate::logic::{Atom, Formula, TimeInterval};
use crate::stats::Verdict;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("atom {index} has res1 = Yes and res2 = No on segment {segment}; statistics are inconsistent")]
    InconsistentVerdict { segment: usize, index: usize },
    #[error("formula atom {0:?} does not appear in the signal")]
    UnknownAtom(Box<Atom>),
    #[error("dense-time monitoring cannot evaluate discrete-time operators")]
    DiscreteFormula,
    #[error("horizon must be positive")]
    EmptyHorizon,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Three {
    True,
    False,
    Unknown,
}

/// Piecewise-constant three-valued signal with a two-valued tail.
#[derive(Debug, Clone)]
pub struct ThreeValuedSignal {
    pub atoms: Vec<Atom>,
    /// Segment boundaries `0 = b_0 < ... < b_K = T`; segment `k` covers
    /// `[b_k, b_{k+1})`.
    pub boundaries: Vec<Rat>,
    /// `values[segment][atom]`.
    pub values: Vec<Vec<Three>>,
    /// Valuation on `[T, inf)`, one entry per atom, never Unknown.
    pub tail: Vec<bool>,
}

impl ThreeValuedSignal {
    pub fn horizon(&self) -> &Rat {
        self.boundaries.last().expect("nonempty boundaries")
    }

    pub fn segment_count(&self) -> usize {
        self.values.len()
    }
}

/// Build a signal from per-segment, per-atom verdict pairs: `res1` tested the
/// raised threshold, `res2` the lowered one. True when `res1 = Yes`, False
/// when `res2 = No`, otherwise Unknown; both at once is a statistics bug.
pub fn assemble_signal(
    atoms: Vec<Atom>,
    verdicts: &[Vec<(Verdict, Verdict)>],
    half_width: &Rat,
    horizon: &Rat,
    tail: Vec<bool>,
) -> Result<ThreeValuedSignal, SignalError> {
    if horizon <= &Rat::zero() {
        return Err(SignalError::EmptyHorizon);
    }
    let width = half_width * Rat::from_integer(2.into());
    let mut boundaries = vec![Rat::zero()];
    let mut values = Vec::new();
    for (segment, row) in verdicts.iter().enumerate() {
        let lo = &width * Rat::from_integer((segment as i64).into());
        if &lo >= horizon {
            break; // the final slot of the schedule can be empty
        }
        let hi = (&lo + &width).min(horizon.clone());
        let mut vals = Vec::with_capacity(atoms.len());
        for (index, (res1, res2)) in row.iter().enumerate() {
            let v = match (res1, res2) {
                (Verdict::Yes, Verdict::No) => {
                    return Err(SignalError::InconsistentVerdict { segment, index })
                }
                (Verdict::Yes, _) => Three::True,
                (_, Verdict::No) => Three::False,
                _ => Three::Unknown,
            };
            vals.push(v);
        }
        boundaries.push(hi);
        values.push(vals);
    }
    Ok(ThreeValuedSignal {
        atoms,
        boundaries,
        values,
        tail,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Pass {
    Lower,
    Upper,
}

/// Yes when every two-valued completion of the signal satisfies the formula,
/// No when none does, Unknown otherwise.
pub fn eval_mitl_three_valued(
    signal: &ThreeValuedSignal,
    formula: &Formula,
) -> Result<Verdict, SignalError> {
    let zero = Rat::zero();
    let lower = sat_spans(formula, signal, Pass::Lower)?;
    if lower.contains(&zero) {
        return Ok(Verdict::Yes);
    }
    let upper = sat_spans(formula, signal, Pass::Upper)?;
    if !upper.contains(&zero) {
        return Ok(Verdict::No);
    }
    Ok(Verdict::Unknown)
}

fn sat_spans(
    formula: &Formula,
    signal: &ThreeValuedSignal,
    pass: Pass,
) -> Result<SpanSet, SignalError> {
    Ok(match formula {
        Formula::True => SpanSet::all(),
        Formula::False => SpanSet::empty(),
        Formula::Atom(a) => atom_spans(a, signal, pass)?,
        Formula::And(a, b) => sat_spans(a, signal, pass)?.intersect(&sat_spans(b, signal, pass)?),
        Formula::Or(a, b) => sat_spans(a, signal, pass)?.union(&sat_spans(b, signal, pass)?),
        Formula::Next(_) => return Err(SignalError::DiscreteFormula),
        Formula::Until(interval, a, b) => {
            let interval = interval.as_ref().ok_or(SignalError::DiscreteFormula)?;
            let sa = sat_spans(a, signal, pass)?;
            let sb = sat_spans(b, signal, pass)?;
            until_spans(interval, &sa, &sb)
        }
        Formula::Release(interval, a, b) => {
            let interval = interval.as_ref().ok_or(SignalError::DiscreteFormula)?;
            let sa = sat_spans(a, signal, pass)?;
            let sb = sat_spans(b, signal, pass)?;
            release_spans(interval, &sa, &sb)
        }
    })
}

fn atom_spans(
    atom: &Atom,
    signal: &ThreeValuedSignal,
    pass: Pass,
) -> Result<SpanSet, SignalError> {
    let index = signal
        .atoms
        .iter()
        .position(|a| a == atom)
        .ok_or_else(|| SignalError::UnknownAtom(Box::new(atom.clone())))?;
    let mut spans = Vec::new();
    for (k, vals) in signal.values.iter().enumerate() {
        let truthy = match (pass, vals[index]) {
            (_, Three::True) => true,
            (_, Three::False) => false,
            (Pass::Lower, Three::Unknown) => false,
            (Pass::Upper, Three::Unknown) => true,
        };
        if truthy {
            spans.push(Span::half_open(
                signal.boundaries[k].clone(),
                signal.boundaries[k + 1].clone(),
            ));
        }
    }
    if signal.tail[index] {
        spans.push(Span::from(signal.horizon().clone()));
    }
    Ok(SpanSet::from_spans(spans))
}

/// Breakpoints where temporal-operator truth can flip: every satisfaction-set
/// endpoint, also shifted left by each interval endpoint.
fn temporal_breakpoints(interval: &TimeInterval, sets: &[&SpanSet]) -> Vec<Rat> {
    let mut points = Vec::new();
    for set in sets {
        for e in set.endpoints() {
            points.push(e.clone() - &interval.lo);
            if let Some(hi) = &interval.hi {
                points.push(e.clone() - hi);
            }
            points.push(e);
        }
    }
    normalize_breakpoints(points)
}

/// Shifted window `t + I`, with the lower bound opened at `t` when the
/// interval starts at zero (the time-zero case is handled separately).
fn until_window(t: &Rat, interval: &TimeInterval, reach_end: &Option<Rat>) -> Span {
    let base = if interval.lo.is_zero() {
        Span {
            lo: t.clone(),
            lo_closed: false,
            hi: interval.hi.as_ref().map(|h| t + h),
            hi_closed: true,
        }
    } else {
        Span {
            lo: t + &interval.lo,
            lo_closed: true,
            hi: interval.hi.as_ref().map(|h| t + h),
            hi_closed: true,
        }
    };
    let reach = Span {
        lo: t.clone(),
        lo_closed: false,
        hi: reach_end.clone(),
        hi_closed: true,
    };
    base.intersect(&reach)
}

/// End of the hold-run just after `t`: the upper endpoint of the span of
/// `hold` whose interior contains `(t, t+eps)`, inclusive because the goal
/// time itself needs no hold.
fn reach_end(hold: &SpanSet, t: &Rat) -> Option<Option<Rat>> {
    hold.spans()
        .iter()
        .find(|s| {
            let lo_ok = s.lo <= *t;
            let hi_ok = match &s.hi {
                None => true,
                Some(hi) => hi > t,
            };
            lo_ok && hi_ok
        })
        .map(|s| s.hi.clone())
}

fn until_spans(interval: &TimeInterval, hold: &SpanSet, goal: &SpanSet) -> SpanSet {
    let bps = temporal_breakpoints(interval, &[hold, goal]);
    spans_from_decomposition(&bps, |t| {
        if interval.lo.is_zero() && goal.contains(t) {
            return true;
        }
        match reach_end(hold, t) {
            Some(end) => {
                let window = until_window(t, interval, &end);
                !goal.intersect_span(&window).is_empty()
            }
            None => false,
        }
    })
}

fn release_spans(interval: &TimeInterval, escape: &SpanSet, duty: &SpanSet) -> SpanSet {
    let bps = temporal_breakpoints(interval, &[escape, duty]);
    spans_from_decomposition(&bps, |t| release_holds_at(t, interval, escape, duty))
}

/// The three-clause dense-time release at a single time origin: the duty
/// holds throughout the window; or an escape time exists with the duty held
/// on the window up to it; or a split point inside the window has the duty
/// before it and the escape filling some further stretch of the window.
fn release_holds_at(t: &Rat, interval: &TimeInterval, escape: &SpanSet, duty: &SpanSet) -> bool {
    let window = Span {
        lo: t + &interval.lo,
        lo_closed: true,
        hi: interval.hi.as_ref().map(|h| t + h),
        hi_closed: true,
    };
    // Clause 1: duty everywhere on the window.
    if duty.covers(&window) {
        return true;
    }

    // Inner decomposition over the absolute escape/split time.
    let mut inner = Vec::new();
    for set in [escape, duty] {
        inner.extend(set.endpoints());
    }
    inner.push(window.lo.clone());
    if let Some(hi) = &window.hi {
        inner.push(hi.clone());
    }
    inner.push(t.clone());
    let inner = normalize_breakpoints(inner);

    // Clause 2: some strictly later escape time s with the duty holding on
    // [t, s] within the window.
    let clause2 = |s: &Rat| -> bool {
        if s <= t || !escape.contains(s) {
            return false;
        }
        let upto = Span::closed(t.clone(), s.clone()).intersect(&window);
        duty.covers(&upto)
    };
    // Clause 3: a split point s in the window with the duty up to s and the
    // escape on (s, s'] for some later window point s'.
    let clause3 = |s: &Rat| -> bool {
        if !window.contains(s) {
            return false;
        }
        let upto = Span {
            lo: window.lo.clone(),
            lo_closed: true,
            hi: Some(s.clone()),
            hi_closed: true,
        };
        if !duty.covers(&upto) {
            return false;
        }
        // The escape must cover a right-neighborhood of s, and the window
        // must extend past s.
        let window_extends = match &window.hi {
            None => true,
            Some(hi) => hi > s,
        };
        if !window_extends {
            return false;
        }
        escape.spans().iter().any(|p| {
            let lo_ok = p.lo <= *s;
            let hi_ok = match &p.hi {
                None => true,
                Some(hi) => hi > s,
            };
            lo_ok && hi_ok
        })
    };

    for (i, b) in inner.iter().enumerate() {
        if clause2(b) || clause3(b) {
            return true;
        }
        let probe = match inner.get(i + 1) {
            Some(next) => (b + next) / Rat::from_integer(2.into()),
            None => b + Rat::from_integer(1.into()),
        };
        if clause2(&probe) || clause3(&probe) {
            return true;
        }
    }
    false
}
