//! Reference evaluators used as independent test oracles.
//!
//! Both are deliberately written against the plain semantics definitions and
//! share no code with the production monitor or the automata pipeline: the
//! dense-time evaluator resolves quantifiers by probing a rational lattice,
//! and the discrete-time evaluator runs least/greatest fixpoints on the
//! finite quotient of an ultimately periodic word. They are slow and only
//! suitable for small instances.

use std::collections::HashMap;

use num_traits::{One, Zero};

use crate::automata::PropTable;
use crate::intervals::Rat;
use crate::logic::{Atom, Formula};

/// A fully two-valued piecewise-constant signal with a constant tail.
#[derive(Debug, Clone)]
pub struct ConcreteSignal {
    pub atoms: Vec<Atom>,
    /// Boundaries `0 = b_0 < ... < b_K`; segment `k` covers `[b_k, b_{k+1})`.
    pub boundaries: Vec<Rat>,
    pub values: Vec<Vec<bool>>,
    pub tail: Vec<bool>,
}

impl ConcreteSignal {
    fn value(&self, index: usize, t: &Rat) -> bool {
        for k in 0..self.values.len() {
            if *t >= self.boundaries[k] && *t < self.boundaries[k + 1] {
                return self.values[k][index];
            }
        }
        self.tail[index]
    }
}

/// Satisfaction of a dense-time formula at time zero, by definition.
pub fn dense_time_satisfies(formula: &Formula, signal: &ConcreteSignal) -> bool {
    let grid = lattice(signal, formula);
    eval(formula, signal, &Rat::zero(), &grid)
}

fn lattice(sig: &ConcreteSignal, f: &Formula) -> Vec<Rat> {
    let mut endpoints = Vec::new();
    collect_interval_endpoints(f, &mut endpoints);
    let mut points: Vec<Rat> = sig.boundaries.clone();
    points.push(Rat::zero());
    for _ in 0..=formula_depth(f) {
        let mut extended = points.clone();
        for p in &points {
            for e in &endpoints {
                extended.push(p + e);
                extended.push(p - e);
            }
        }
        points = extended;
        points.retain(|p| *p >= Rat::zero());
        points.sort();
        points.dedup();
    }
    points
}

fn collect_interval_endpoints(f: &Formula, out: &mut Vec<Rat>) {
    match f {
        Formula::Until(Some(i), a, b) | Formula::Release(Some(i), a, b) => {
            out.push(i.lo.clone());
            if let Some(h) = &i.hi {
                out.push(h.clone());
            }
            collect_interval_endpoints(a, out);
            collect_interval_endpoints(b, out);
        }
        Formula::And(a, b) | Formula::Or(a, b) => {
            collect_interval_endpoints(a, out);
            collect_interval_endpoints(b, out);
        }
        Formula::Next(a) => collect_interval_endpoints(a, out),
        _ => {}
    }
}

fn formula_depth(f: &Formula) -> usize {
    match f {
        Formula::And(a, b) | Formula::Or(a, b) => formula_depth(a).max(formula_depth(b)),
        Formula::Until(_, a, b) | Formula::Release(_, a, b) => {
            1 + formula_depth(a).max(formula_depth(b))
        }
        Formula::Next(a) => 1 + formula_depth(a),
        _ => 0,
    }
}

/// Probes covering one point per constancy region between `lo` and `hi`.
fn probes(points: &[Rat], lo: &Rat, hi: &Option<Rat>) -> Vec<Rat> {
    let mut inside: Vec<Rat> = points
        .iter()
        .filter(|p| {
            **p >= *lo
                && match hi {
                    Some(h) => **p <= *h,
                    None => true,
                }
        })
        .cloned()
        .collect();
    inside.push(lo.clone());
    if let Some(h) = hi {
        inside.push(h.clone());
    } else {
        let last = points.last().cloned().unwrap_or_else(Rat::zero);
        inside.push(last.max(lo.clone()) + Rat::one());
    }
    inside.sort();
    inside.dedup();
    let mut out = inside.clone();
    for w in inside.windows(2) {
        out.push((&w[0] + &w[1]) / Rat::from_integer(2.into()));
    }
    out.sort();
    out.dedup();
    out
}

fn eval(f: &Formula, sig: &ConcreteSignal, t: &Rat, grid: &[Rat]) -> bool {
    match f {
        Formula::True => true,
        Formula::False => false,
        Formula::Atom(a) => {
            let idx = sig
                .atoms
                .iter()
                .position(|x| x == a)
                .expect("atom present in the signal");
            sig.value(idx, t)
        }
        Formula::And(a, b) => eval(a, sig, t, grid) && eval(b, sig, t, grid),
        Formula::Or(a, b) => eval(a, sig, t, grid) || eval(b, sig, t, grid),
        Formula::Next(_) => unreachable!("dense-time formulas have no next"),
        Formula::Until(Some(i), a, b) => {
            let lo = t + &i.lo;
            let hi = i.hi.as_ref().map(|h| t + h);
            for s in probes(grid, &lo, &hi) {
                if s < lo || matches!(&hi, Some(h) if s > *h) {
                    continue;
                }
                if !eval(b, sig, &s, grid) {
                    continue;
                }
                let all_hold = probes(grid, t, &Some(s.clone()))
                    .into_iter()
                    .filter(|u| u > t && *u < s)
                    .all(|u| eval(a, sig, &u, grid));
                if all_hold {
                    return true;
                }
            }
            false
        }
        Formula::Release(Some(i), a, b) => {
            let w_lo = t + &i.lo;
            let w_hi = i.hi.as_ref().map(|h| t + h);
            let in_window = |s: &Rat| {
                *s >= w_lo
                    && match &w_hi {
                        Some(h) => *s <= *h,
                        None => true,
                    }
            };
            // Duty everywhere on the window.
            let c1 = probes(grid, &w_lo, &w_hi)
                .into_iter()
                .filter(|s| in_window(s))
                .all(|s| eval(b, sig, &s, grid));
            if c1 {
                return true;
            }
            // Escape strictly after the origin, duty up to it inside the
            // window.
            let far = Some(match &w_hi {
                Some(h) => h + Rat::one(),
                None => grid.last().cloned().unwrap_or_else(Rat::zero) + Rat::one() + t,
            });
            for s in probes(grid, t, &far) {
                if s <= *t || !eval(a, sig, &s, grid) {
                    continue;
                }
                let duty_ok = probes(grid, t, &Some(s.clone()))
                    .into_iter()
                    .filter(|u| *u >= *t && *u <= s && in_window(u))
                    .all(|u| eval(b, sig, &u, grid));
                if duty_ok {
                    return true;
                }
            }
            // Split point in the window with the duty before it and the
            // escape on a further stretch of the window.
            for s in probes(grid, &w_lo, &w_hi) {
                if !in_window(&s) {
                    continue;
                }
                let duty_ok = probes(grid, &w_lo, &Some(s.clone()))
                    .into_iter()
                    .filter(|u| in_window(u) && *u <= s)
                    .all(|u| eval(b, sig, &u, grid));
                if !duty_ok {
                    continue;
                }
                for s2 in probes(grid, &s, &w_hi) {
                    if s2 <= s || !in_window(&s2) {
                        continue;
                    }
                    let escape_ok = probes(grid, &s, &Some(s2.clone()))
                        .into_iter()
                        .filter(|u| in_window(u) && *u > s && *u <= s2)
                        .all(|u| eval(a, sig, &u, grid));
                    if escape_ok {
                        return true;
                    }
                }
            }
            false
        }
        _ => unreachable!(),
    }
}

/// Satisfaction of a discrete-time formula on the ultimately periodic word
/// `prefix . cycle^w`, by least/greatest fixpoints on the finite quotient.
pub fn lasso_satisfies(f: &Formula, table: &PropTable, prefix: &[u32], cycle: &[u32]) -> bool {
    assert!(!cycle.is_empty());
    let len = prefix.len() + cycle.len();
    let letter = |i: usize| -> u32 {
        if i < prefix.len() {
            prefix[i]
        } else {
            cycle[(i - prefix.len()) % cycle.len()]
        }
    };
    let succ = |i: usize| -> usize {
        if i + 1 < len {
            i + 1
        } else {
            prefix.len()
        }
    };
    let mut memo: HashMap<*const Formula, Vec<bool>> = HashMap::new();
    fn go(
        f: &Formula,
        table: &PropTable,
        letter: &dyn Fn(usize) -> u32,
        succ: &dyn Fn(usize) -> usize,
        len: usize,
        memo: &mut HashMap<*const Formula, Vec<bool>>,
    ) -> Vec<bool> {
        let key = f as *const Formula;
        if let Some(v) = memo.get(&key) {
            return v.clone();
        }
        let result = match f {
            Formula::True => vec![true; len],
            Formula::False => vec![false; len],
            Formula::Atom(a) => {
                let (p, positive) = table.literal(a).expect("atom interned");
                (0..len)
                    .map(|i| (letter(i) >> p & 1 == 1) == positive)
                    .collect()
            }
            Formula::And(x, y) => {
                let a = go(x, table, letter, succ, len, memo);
                let b = go(y, table, letter, succ, len, memo);
                (0..len).map(|i| a[i] && b[i]).collect()
            }
            Formula::Or(x, y) => {
                let a = go(x, table, letter, succ, len, memo);
                let b = go(y, table, letter, succ, len, memo);
                (0..len).map(|i| a[i] || b[i]).collect()
            }
            Formula::Next(x) => {
                let a = go(x, table, letter, succ, len, memo);
                (0..len).map(|i| a[succ(i)]).collect()
            }
            Formula::Until(_, x, y) => {
                let a = go(x, table, letter, succ, len, memo);
                let b = go(y, table, letter, succ, len, memo);
                // Least fixpoint of sat = b | (a & X sat).
                let mut sat = vec![false; len];
                for _ in 0..=len {
                    let mut changed = false;
                    for i in 0..len {
                        let v = b[i] || (a[i] && sat[succ(i)]);
                        if v != sat[i] {
                            sat[i] = v;
                            changed = true;
                        }
                    }
                    if !changed {
                        break;
                    }
                }
                sat
            }
            Formula::Release(_, x, y) => {
                let a = go(x, table, letter, succ, len, memo);
                let b = go(y, table, letter, succ, len, memo);
                // Greatest fixpoint of sat = b & (a | X sat).
                let mut sat = vec![true; len];
                for _ in 0..=len {
                    let mut changed = false;
                    for i in 0..len {
                        let v = b[i] && (a[i] || sat[succ(i)]);
                        if v != sat[i] {
                            sat[i] = v;
                            changed = true;
                        }
                    }
                    if !changed {
                        break;
                    }
                }
                sat
            }
        };
        memo.insert(key, result.clone());
        result
    }
    go(f, table, &letter, &succ, len, &mut memo)[0]
}
