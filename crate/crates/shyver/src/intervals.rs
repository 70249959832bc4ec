//! Exact interval sets over the nonnegative rationals, the satisfaction-set
//! representation used by the dense-time monitor.
//!
//! A `SpanSet` is a sorted list of disjoint spans with open/closed endpoint
//! flags; the upper endpoint may be infinite. All arithmetic is exact, so
//! segment widths like `delta / (3 h)` introduce no rounding.

use num_rational::BigRational;
use num_traits::Zero;

pub type Rat = BigRational;

/// One interval with endpoint flags; `hi = None` means unbounded above.
#[derive(Debug, Clone, PartialEq)]
pub struct Span {
    pub lo: Rat,
    pub lo_closed: bool,
    pub hi: Option<Rat>,
    pub hi_closed: bool,
}

impl Span {
    pub fn closed(lo: Rat, hi: Rat) -> Self {
        Span {
            lo,
            lo_closed: true,
            hi: Some(hi),
            hi_closed: true,
        }
    }

    pub fn half_open(lo: Rat, hi: Rat) -> Self {
        Span {
            lo,
            lo_closed: true,
            hi: Some(hi),
            hi_closed: false,
        }
    }

    pub fn point(at: Rat) -> Self {
        Span::closed(at.clone(), at)
    }

    pub fn from(lo: Rat) -> Self {
        Span {
            lo,
            lo_closed: true,
            hi: None,
            hi_closed: false,
        }
    }

    pub fn is_empty(&self) -> bool {
        match &self.hi {
            None => false,
            Some(hi) => {
                self.lo > *hi || (self.lo == *hi && !(self.lo_closed && self.hi_closed))
            }
        }
    }

    pub fn contains(&self, t: &Rat) -> bool {
        let above = *t > self.lo || (self.lo_closed && *t == self.lo);
        let below = match &self.hi {
            None => true,
            Some(hi) => *t < *hi || (self.hi_closed && *t == *hi),
        };
        above && below
    }

    pub fn intersect(&self, other: &Span) -> Span {
        let (lo, lo_closed) = if self.lo > other.lo {
            (self.lo.clone(), self.lo_closed)
        } else if other.lo > self.lo {
            (other.lo.clone(), other.lo_closed)
        } else {
            (self.lo.clone(), self.lo_closed && other.lo_closed)
        };
        let (hi, hi_closed) = match (&self.hi, &other.hi) {
            (None, None) => (None, false),
            (Some(a), None) => (Some(a.clone()), self.hi_closed),
            (None, Some(b)) => (Some(b.clone()), other.hi_closed),
            (Some(a), Some(b)) => {
                if a < b {
                    (Some(a.clone()), self.hi_closed)
                } else if b < a {
                    (Some(b.clone()), other.hi_closed)
                } else {
                    (Some(a.clone()), self.hi_closed && other.hi_closed)
                }
            }
        };
        Span {
            lo,
            lo_closed,
            hi,
            hi_closed,
        }
    }

    /// Do the spans touch or overlap (union is one span)?
    fn joins(&self, other: &Span) -> bool {
        // Assumes self.lo <= other.lo.
        match &self.hi {
            None => true,
            Some(hi) => {
                *hi > other.lo
                    || (*hi == other.lo && (self.hi_closed || other.lo_closed))
            }
        }
    }
}

/// Sorted, disjoint, normalized set of spans.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpanSet {
    spans: Vec<Span>,
}

impl SpanSet {
    pub fn empty() -> Self {
        SpanSet { spans: Vec::new() }
    }

    pub fn all() -> Self {
        SpanSet {
            spans: vec![Span::from(Rat::zero())],
        }
    }

    pub fn from_spans(mut spans: Vec<Span>) -> Self {
        spans.retain(|s| !s.is_empty());
        spans.sort_by(|a, b| a.lo.cmp(&b.lo).then(b.lo_closed.cmp(&a.lo_closed)));
        let mut merged: Vec<Span> = Vec::with_capacity(spans.len());
        for s in spans {
            match merged.last_mut() {
                Some(last) if last.joins(&s) => {
                    let extend = match (&last.hi, &s.hi) {
                        (None, _) => false,
                        (Some(_), None) => true,
                        (Some(a), Some(b)) => b > a || (b == a && s.hi_closed && !last.hi_closed),
                    };
                    if extend {
                        last.hi = s.hi;
                        last.hi_closed = s.hi_closed;
                    }
                }
                _ => merged.push(s),
            }
        }
        SpanSet { spans: merged }
    }

    pub fn spans(&self) -> &[Span] {
        &self.spans
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    pub fn contains(&self, t: &Rat) -> bool {
        self.spans.iter().any(|s| s.contains(t))
    }

    pub fn union(&self, other: &SpanSet) -> SpanSet {
        let mut spans = self.spans.clone();
        spans.extend(other.spans.iter().cloned());
        SpanSet::from_spans(spans)
    }

    pub fn intersect(&self, other: &SpanSet) -> SpanSet {
        let mut spans = Vec::new();
        for a in &self.spans {
            for b in &other.spans {
                let c = a.intersect(b);
                if !c.is_empty() {
                    spans.push(c);
                }
            }
        }
        SpanSet::from_spans(spans)
    }

    pub fn intersect_span(&self, span: &Span) -> SpanSet {
        let mut spans = Vec::new();
        for a in &self.spans {
            let c = a.intersect(span);
            if !c.is_empty() {
                spans.push(c);
            }
        }
        SpanSet::from_spans(spans)
    }

    /// Is `span` entirely inside the set? Empty spans are contained.
    pub fn covers(&self, span: &Span) -> bool {
        if span.is_empty() {
            return true;
        }
        // The set is normalized, so coverage means one span covers it.
        self.spans.iter().any(|s| {
            let lo_ok = s.lo < span.lo
                || (s.lo == span.lo && (s.lo_closed || !span.lo_closed));
            let hi_ok = match (&s.hi, &span.hi) {
                (None, _) => true,
                (Some(_), None) => false,
                (Some(a), Some(b)) => a > b || (a == b && (s.hi_closed || !span.hi_closed)),
            };
            lo_ok && hi_ok
        })
    }

    /// Finite endpoint values, for breakpoint construction.
    pub fn endpoints(&self) -> Vec<Rat> {
        let mut out = Vec::new();
        for s in &self.spans {
            out.push(s.lo.clone());
            if let Some(hi) = &s.hi {
                out.push(hi.clone());
            }
        }
        out
    }
}

/// Sorted deduplicated breakpoints clipped to `[0, inf)`, always containing 0.
pub fn normalize_breakpoints(mut values: Vec<Rat>) -> Vec<Rat> {
    values.push(Rat::zero());
    values.retain(|v| !v.is_negative());
    values.sort();
    values.dedup();
    values
}

use num_traits::Signed;

/// Evaluate a predicate on the atomic decomposition induced by the
/// breakpoints and return the set where it holds: each breakpoint is tested
/// exactly, each open gap at its midpoint, and the final unbounded piece one
/// unit beyond the last breakpoint. The predicate must be constant on each
/// open piece for the result to be exact.
pub fn spans_from_decomposition(
    breakpoints: &[Rat],
    mut holds: impl FnMut(&Rat) -> bool,
) -> SpanSet {
    let mut spans = Vec::new();
    for (i, b) in breakpoints.iter().enumerate() {
        if holds(b) {
            spans.push(Span::point(b.clone()));
        }
        let probe = match breakpoints.get(i + 1) {
            Some(next) => (b + next) / Rat::from_integer(2.into()),
            None => b + Rat::from_integer(1.into()),
        };
        if holds(&probe) {
            spans.push(Span {
                lo: b.clone(),
                lo_closed: false,
                hi: breakpoints.get(i + 1).cloned(),
                hi_closed: false,
            });
        }
    }
    SpanSet::from_spans(spans)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64) -> Rat {
        Rat::from_integer(n.into())
    }

    fn rq(n: i64, d: i64) -> Rat {
        Rat::new(n.into(), d.into())
    }

    #[test]
    fn union_merges_touching_spans() {
        let s = SpanSet::from_spans(vec![
            Span::half_open(r(0), r(1)),
            Span::closed(r(1), r(2)),
            Span::closed(r(3), r(4)),
        ]);
        assert_eq!(s.spans().len(), 2);
        assert!(s.contains(&r(1)));
        assert!(s.contains(&rq(1, 2)));
        assert!(!s.contains(&rq(5, 2)));
    }

    #[test]
    fn open_spans_do_not_merge_across_a_gap_point() {
        let s = SpanSet::from_spans(vec![
            Span {
                lo: r(0),
                lo_closed: true,
                hi: Some(r(1)),
                hi_closed: false,
            },
            Span {
                lo: r(1),
                lo_closed: false,
                hi: Some(r(2)),
                hi_closed: true,
            },
        ]);
        assert_eq!(s.spans().len(), 2);
        assert!(!s.contains(&r(1)));
    }

    #[test]
    fn intersect_respects_flags() {
        let a = SpanSet::from_spans(vec![Span::closed(r(0), r(2))]);
        let b = SpanSet::from_spans(vec![Span {
            lo: r(2),
            lo_closed: false,
            hi: Some(r(3)),
            hi_closed: true,
        }]);
        assert!(a.intersect(&b).is_empty());
        let c = SpanSet::from_spans(vec![Span::closed(r(2), r(3))]);
        let i = a.intersect(&c);
        assert_eq!(i.spans(), &[Span::point(r(2))]);
    }

    #[test]
    fn covers_checks_endpoint_flags() {
        let s = SpanSet::from_spans(vec![Span::half_open(r(0), r(2))]);
        assert!(s.covers(&Span::half_open(r(0), r(2))));
        assert!(s.covers(&Span::closed(r(0), r(1))));
        assert!(!s.covers(&Span::closed(r(0), r(2))));
        assert!(SpanSet::all().covers(&Span::from(r(5))));
    }

    #[test]
    fn decomposition_reconstructs_a_known_set() {
        // Predicate: t in [1, 2) u {3}.
        let target = SpanSet::from_spans(vec![Span::half_open(r(1), r(2)), Span::point(r(3))]);
        let bps = normalize_breakpoints(vec![r(1), r(2), r(3)]);
        let rebuilt = spans_from_decomposition(&bps, |t| target.contains(t));
        assert_eq!(rebuilt, target);
    }
}
