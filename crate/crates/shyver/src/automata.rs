//! Buchi automata for discrete-time formulas: tableau construction,
//! degeneralization, lasso-word automata, and product emptiness by nested
//! depth-first search.
//!
//! Letters are subsets of base propositions. Complementary inequality atoms
//! (`y > c` / `y <= c`, and `y >= c` / `y < c`) map to positive and negative
//! literals of one base proposition, so negation-normal dualization really is
//! language complement over the shared alphabet. Transition labels are
//! (positive, negative) requirement masks; any pair with disjoint masks is
//! realizable because the alphabet is the full power set.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use num_rational::BigRational;

use crate::logic::{Atom, Formula, Rel};

/// A transition constraint: the letter must contain every `pos` bit and no
/// `neg` bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Label {
    pub pos: u32,
    pub neg: u32,
}

impl Label {
    pub fn any() -> Self {
        Label { pos: 0, neg: 0 }
    }

    pub fn satisfied_by(&self, letter: u32) -> bool {
        letter & self.pos == self.pos && letter & self.neg == 0
    }

    /// Conjunction of two constraints, when consistent.
    pub fn combine(&self, other: &Label) -> Option<Label> {
        let pos = self.pos | other.pos;
        let neg = self.neg | other.neg;
        if pos & neg != 0 {
            None
        } else {
            Some(Label { pos, neg })
        }
    }
}

/// Nondeterministic Buchi automaton with edge labels.
#[derive(Debug, Clone)]
pub struct Buchi {
    pub props: usize,
    pub initial: Vec<usize>,
    pub accepting: Vec<bool>,
    pub transitions: Vec<Vec<(Label, usize)>>,
}

impl Buchi {
    pub fn states(&self) -> usize {
        self.transitions.len()
    }
}

/// Base propositions shared by a set of formulas: one per distinct
/// (observable, strictness, threshold) triple. `y > c` and `y <= c` are the
/// two literals of the strict proposition; `y >= c` and `y < c` of the
/// non-strict one.
#[derive(Debug, Clone, Default)]
pub struct PropTable {
    props: Vec<(String, bool, BigRational)>,
}

impl PropTable {
    pub fn from_formulas(formulas: &[&Formula]) -> Self {
        let mut table = PropTable::default();
        for f in formulas {
            for atom in f.atoms() {
                table.intern(&atom);
            }
        }
        table
    }

    pub fn len(&self) -> usize {
        self.props.len()
    }

    pub fn is_empty(&self) -> bool {
        self.props.is_empty()
    }

    /// The proposition each atom grounds, and the atom's polarity.
    pub fn literal(&self, atom: &Atom) -> Option<(usize, bool)> {
        let (strict, positive) = match atom.rel {
            Rel::Gt => (true, true),
            Rel::Le => (true, false),
            Rel::Ge => (false, true),
            Rel::Lt => (false, false),
        };
        self.props
            .iter()
            .position(|(name, s, c)| *name == atom.observable && *s == strict && *c == atom.threshold)
            .map(|i| (i, positive))
    }

    fn intern(&mut self, atom: &Atom) -> (usize, bool) {
        if let Some(found) = self.literal(atom) {
            return found;
        }
        let (strict, positive) = match atom.rel {
            Rel::Gt | Rel::Le => (true, matches!(atom.rel, Rel::Gt)),
            Rel::Ge | Rel::Lt => (false, matches!(atom.rel, Rel::Ge)),
        };
        self.props
            .push((atom.observable.clone(), strict, atom.threshold.clone()));
        (self.props.len() - 1, positive)
    }

    /// The positive atom of proposition `i`.
    pub fn atom(&self, i: usize) -> Atom {
        let (name, strict, c) = &self.props[i];
        Atom {
            observable: name.clone(),
            rel: if *strict { Rel::Gt } else { Rel::Ge },
            threshold: c.clone(),
        }
    }
}

// ---------------------------------------------------------------------------
// Tableau construction
// ---------------------------------------------------------------------------

/// Discrete-time formula lowered to literals over a proposition table.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Node {
    True,
    False,
    Lit(usize, bool),
    And(Box<Node>, Box<Node>),
    Or(Box<Node>, Box<Node>),
    Next(Box<Node>),
    Until(Box<Node>, Box<Node>),
    Release(Box<Node>, Box<Node>),
}

fn lower(formula: &Formula, table: &PropTable) -> Node {
    match formula {
        Formula::True => Node::True,
        Formula::False => Node::False,
        Formula::Atom(a) => {
            let (p, positive) = table
                .literal(a)
                .expect("atom interned before construction");
            Node::Lit(p, positive)
        }
        Formula::And(a, b) => Node::And(Box::new(lower(a, table)), Box::new(lower(b, table))),
        Formula::Or(a, b) => Node::Or(Box::new(lower(a, table)), Box::new(lower(b, table))),
        Formula::Next(a) => Node::Next(Box::new(lower(a, table))),
        Formula::Until(_, a, b) => {
            Node::Until(Box::new(lower(a, table)), Box::new(lower(b, table)))
        }
        Formula::Release(_, a, b) => {
            Node::Release(Box::new(lower(a, table)), Box::new(lower(b, table)))
        }
    }
}

#[derive(Debug, Clone)]
struct TableauNode {
    incoming: BTreeSet<usize>, // usize::MAX marks the virtual init
    new: BTreeSet<Node>,
    old: BTreeSet<Node>,
    next: BTreeSet<Node>,
}

const INIT: usize = usize::MAX;

/// Classic expand-node tableau: returns the node list with incoming edges.
fn create_graph(formula: Node) -> Vec<TableauNode> {
    let mut nodes: Vec<TableauNode> = Vec::new();
    let start = TableauNode {
        incoming: BTreeSet::from([INIT]),
        new: BTreeSet::from([formula]),
        old: BTreeSet::new(),
        next: BTreeSet::new(),
    };
    expand(start, &mut nodes);
    nodes
}

fn expand(mut node: TableauNode, nodes: &mut Vec<TableauNode>) {
    let Some(eta) = node.new.iter().next().cloned() else {
        // Fully processed: merge with an equivalent node or add and spawn
        // the successor seed.
        if let Some(existing) = nodes
            .iter_mut()
            .find(|r| r.old == node.old && r.next == node.next)
        {
            existing.incoming.extend(node.incoming);
            return;
        }
        let id = nodes.len();
        nodes.push(node.clone());
        let child = TableauNode {
            incoming: BTreeSet::from([id]),
            new: node.next.clone(),
            old: BTreeSet::new(),
            next: BTreeSet::new(),
        };
        expand(child, nodes);
        return;
    };
    node.new.remove(&eta);
    match &eta {
        Node::False => {} // contradiction: drop the node
        Node::True => {
            if !node.old.contains(&eta) {
                node.old.insert(eta);
            }
            expand(node, nodes);
        }
        Node::Lit(p, positive) => {
            if node.old.contains(&Node::Lit(*p, !positive)) {
                return; // contradiction
            }
            node.old.insert(eta);
            expand(node, nodes);
        }
        Node::And(a, b) => {
            for part in [a.as_ref().clone(), b.as_ref().clone()] {
                if !node.old.contains(&part) {
                    node.new.insert(part);
                }
            }
            node.old.insert(eta);
            expand(node, nodes);
        }
        Node::Next(a) => {
            node.next.insert(a.as_ref().clone());
            node.old.insert(eta);
            expand(node, nodes);
        }
        Node::Or(a, b) => {
            let mut left = node.clone();
            left.old.insert(eta.clone());
            if !left.old.contains(a) {
                left.new.insert(a.as_ref().clone());
            }
            expand(left, nodes);
            let mut right = node;
            right.old.insert(eta.clone());
            if !right.old.contains(b) {
                right.new.insert(b.as_ref().clone());
            }
            expand(right, nodes);
        }
        Node::Until(a, b) => {
            // a U b = b | (a & X(a U b))
            let mut left = node.clone();
            left.old.insert(eta.clone());
            if !left.old.contains(a) {
                left.new.insert(a.as_ref().clone());
            }
            left.next.insert(eta.clone());
            expand(left, nodes);
            let mut right = node;
            right.old.insert(eta.clone());
            if !right.old.contains(b) {
                right.new.insert(b.as_ref().clone());
            }
            expand(right, nodes);
        }
        Node::Release(a, b) => {
            // a R b = b & (a | X(a R b))
            let mut left = node.clone();
            left.old.insert(eta.clone());
            if !left.old.contains(b) {
                left.new.insert(b.as_ref().clone());
            }
            left.next.insert(eta.clone());
            expand(left, nodes);
            let mut right = node;
            right.old.insert(eta.clone());
            for part in [a.as_ref().clone(), b.as_ref().clone()] {
                if !right.old.contains(&part) {
                    right.new.insert(part);
                }
            }
            expand(right, nodes);
        }
    }
}

/// Build the Buchi automaton of a discrete-time formula over the table's
/// alphabet: tableau to a generalized automaton, then the counter
/// degeneralization.
pub fn ltl_to_buchi(formula: &Formula, table: &PropTable) -> Buchi {
    let lowered = lower(formula, table);
    let nodes = create_graph(lowered.clone());

    // Per-Until acceptance sets: nodes where the obligation is discharged.
    let mut untils: Vec<(Node, Node)> = Vec::new();
    collect_untils(&lowered, &mut untils);
    let sets: Vec<Vec<bool>> = untils
        .iter()
        .map(|(a, b)| {
            nodes
                .iter()
                .map(|n| {
                    !n.old
                        .contains(&Node::Until(Box::new(a.clone()), Box::new(b.clone())))
                        || n.old.contains(b)
                })
                .collect()
        })
        .collect();
    let k = sets.len().max(1);
    let set_member = |s: usize, i: usize| -> bool {
        if sets.is_empty() {
            true
        } else {
            sets[i][s]
        }
    };

    let label_of = |n: &TableauNode| -> Label {
        let mut pos = 0u32;
        let mut neg = 0u32;
        for f in &n.old {
            if let Node::Lit(p, positive) = f {
                if *positive {
                    pos |= 1 << p;
                } else {
                    neg |= 1 << p;
                }
            }
        }
        Label { pos, neg }
    };

    // Degeneralized states: (tableau node, counter), plus a fresh initial.
    let n = nodes.len();
    let state_id = |s: usize, c: usize| 1 + s * k + c;
    let states = 1 + n * k;
    let mut transitions: Vec<Vec<(Label, usize)>> = vec![Vec::new(); states];
    let mut accepting = vec![false; states];
    for (s, node) in nodes.iter().enumerate() {
        // With source-based counter advance, a run re-enters counter 0 only
        // after discharging every acceptance set once; it then advances past
        // counter 0 exactly at a state of the first set.
        for c in 0..k {
            accepting[state_id(s, c)] = c == 0 && set_member(s, 0);
        }
        let label = label_of(node);
        for &src in &node.incoming {
            if src == INIT {
                // The initial counter starts one past any wrap.
                transitions[0].push((label, state_id(s, 0)));
            } else {
                for c in 0..k {
                    let c_next = if set_member(src, c) { (c + 1) % k } else { c };
                    transitions[state_id(src, c)].push((label, state_id(s, c_next)));
                }
            }
        }
    }
    Buchi {
        props: table.len(),
        initial: vec![0],
        accepting,
        transitions,
    }
}

fn collect_untils(node: &Node, out: &mut Vec<(Node, Node)>) {
    match node {
        Node::Until(a, b) => {
            let pair = (a.as_ref().clone(), b.as_ref().clone());
            if !out.contains(&pair) {
                out.push(pair);
            }
            collect_untils(a, out);
            collect_untils(b, out);
        }
        Node::And(a, b) | Node::Or(a, b) | Node::Release(a, b) => {
            collect_untils(a, out);
            collect_untils(b, out);
        }
        Node::Next(a) => collect_untils(a, out),
        _ => {}
    }
}

// ---------------------------------------------------------------------------
// Lasso words
// ---------------------------------------------------------------------------

/// Per-proposition constraint of one word position; `None` leaves the bit
/// free (an Unknown label).
pub type LetterConstraint = Vec<Option<bool>>;

/// Finite prefix of letter constraints plus one invariant-tail letter
/// repeated forever.
#[derive(Debug, Clone)]
pub struct LassoWord {
    pub props: usize,
    pub prefix: Vec<LetterConstraint>,
    pub tail: u32,
}

fn constraint_label(c: &LetterConstraint) -> Label {
    let mut pos = 0u32;
    let mut neg = 0u32;
    for (p, v) in c.iter().enumerate() {
        match v {
            Some(true) => pos |= 1 << p,
            Some(false) => neg |= 1 << p,
            None => {}
        }
    }
    Label { pos, neg }
}

/// Automaton accepting exactly the two-valued words consistent with the
/// lasso: every free bit resolves both ways, independently per position.
pub fn lasso_automaton(word: &LassoWord) -> Buchi {
    let p = word.prefix.len();
    let mut transitions: Vec<Vec<(Label, usize)>> = vec![Vec::new(); p + 1];
    for (i, c) in word.prefix.iter().enumerate() {
        transitions[i].push((constraint_label(c), i + 1));
    }
    let mask = (1u32 << word.props) - 1;
    transitions[p].push((
        Label {
            pos: word.tail,
            neg: !word.tail & mask,
        },
        p,
    ));
    let mut accepting = vec![false; p + 1];
    accepting[p] = true;
    Buchi {
        props: word.props,
        initial: vec![0],
        accepting,
        transitions,
    }
}

// ---------------------------------------------------------------------------
// Product emptiness
// ---------------------------------------------------------------------------

/// Is the intersection of the two languages empty? Product construction with
/// an iterative nested depth-first search for a reachable accepting cycle.
pub fn is_intersection_empty(a: &Buchi, b: &Buchi) -> bool {
    let product = Product { a, b };
    !ndfs_has_accepting_cycle(&product)
}

struct Product<'x> {
    a: &'x Buchi,
    b: &'x Buchi,
}

type PState = (usize, usize, u8);

impl Product<'_> {
    fn initials(&self) -> Vec<PState> {
        let mut out = Vec::new();
        for &sa in &self.a.initial {
            for &sb in &self.b.initial {
                out.push((sa, sb, 0));
            }
        }
        out
    }

    fn successors(&self, (sa, sb, phase): PState) -> Vec<PState> {
        let phase_next = if phase == 0 && self.a.accepting[sa] {
            1
        } else if phase == 1 && self.b.accepting[sb] {
            0
        } else {
            phase
        };
        let mut out = Vec::new();
        for (la, ta) in &self.a.transitions[sa] {
            for (lb, tb) in &self.b.transitions[sb] {
                if la.combine(lb).is_some() {
                    out.push((*ta, *tb, phase_next));
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    fn accepting(&self, (_, sb, phase): PState) -> bool {
        phase == 1 && self.b.accepting[sb]
    }
}

/// Iterative two-color nested DFS (outer blue search, inner red search from
/// each accepting state in post-order).
fn ndfs_has_accepting_cycle(p: &Product) -> bool {
    let mut blue: HashSet<PState> = HashSet::new();
    let mut red: HashSet<PState> = HashSet::new();
    let mut on_stack: HashSet<PState> = HashSet::new();

    for init in p.initials() {
        if blue.contains(&init) {
            continue;
        }
        // Frames: (state, successor cursor).
        let mut stack: Vec<(PState, Vec<PState>, usize)> = Vec::new();
        blue.insert(init);
        on_stack.insert(init);
        stack.push((init, p.successors(init), 0));
        while let Some((state, succs, cursor)) = stack.last_mut() {
            if *cursor < succs.len() {
                let next = succs[*cursor];
                *cursor += 1;
                if !blue.contains(&next) {
                    blue.insert(next);
                    on_stack.insert(next);
                    let s = p.successors(next);
                    stack.push((next, s, 0));
                }
            } else {
                // Post-order: run the red search from accepting states.
                let state = *state;
                if p.accepting(state) && red_search(p, state, &mut red, &on_stack) {
                    return true;
                }
                on_stack.remove(&state);
                stack.pop();
            }
        }
    }
    false
}

/// Red search: from an accepting seed, look for any state on the blue call
/// stack (which closes a cycle through the seed).
fn red_search(
    p: &Product,
    seed: PState,
    red: &mut HashSet<PState>,
    on_stack: &HashSet<PState>,
) -> bool {
    let mut stack = vec![seed];
    while let Some(state) = stack.pop() {
        for next in p.successors(state) {
            if on_stack.contains(&next) {
                return true;
            }
            if red.insert(next) {
                stack.push(next);
            }
        }
    }
    false
}

/// Does the automaton accept the concrete ultimately periodic word
/// `prefix . cycle^w`? Independent of the product machinery: reachability
/// through the prefix, then an accepting-cycle check on the cycle graph.
pub fn accepts_lasso(automaton: &Buchi, prefix: &[u32], cycle: &[u32]) -> bool {
    assert!(!cycle.is_empty());
    let read = |set: &BTreeSet<usize>, letter: u32| -> BTreeSet<usize> {
        let mut next = BTreeSet::new();
        for &s in set {
            for (label, t) in &automaton.transitions[s] {
                if label.satisfied_by(letter) {
                    next.insert(*t);
                }
            }
        }
        next
    };
    let mut frontier: BTreeSet<usize> = automaton.initial.iter().copied().collect();
    for &letter in prefix {
        frontier = read(&frontier, letter);
    }
    // The cycle may close at any whole number of cycle reads past the
    // prefix; union the reachable sets until the set sequence repeats.
    let mut seeds = BTreeSet::new();
    let mut seen_sets = HashSet::new();
    let mut current = frontier;
    while seen_sets.insert(current.clone()) {
        seeds.extend(current.iter().copied());
        for &letter in cycle {
            current = read(&current, letter);
        }
    }
    let frontier = seeds;
    // One-cycle edges (q -> q', accepting-visited flag).
    let n = automaton.states();
    let mut edges: Vec<Vec<(usize, bool)>> = vec![Vec::new(); n];
    for q in 0..n {
        // (state, flag) pairs reachable from q by reading the cycle once.
        let mut reach: BTreeMap<usize, bool> = BTreeMap::new();
        reach.insert(q, false);
        for &letter in cycle {
            let mut next: BTreeMap<usize, bool> = BTreeMap::new();
            for (&s, &flag) in &reach {
                for (label, t) in &automaton.transitions[s] {
                    if label.satisfied_by(letter) {
                        let f = flag || automaton.accepting[*t];
                        next.entry(*t).and_modify(|v| *v |= f).or_insert(f);
                    }
                }
            }
            reach = next;
        }
        edges[q] = reach.into_iter().collect();
    }
    // Accepting cycle in the one-cycle graph, seeded from the frontier:
    // search pairs (state, accumulated flag) for a return to the seed with
    // the flag set.
    for &seed in &frontier {
        let mut seen = HashSet::new();
        let mut stack = vec![(seed, false)];
        while let Some((s, flag)) = stack.pop() {
            for &(t, edge_flag) in &edges[s] {
                let f = flag || edge_flag;
                if t == seed && f {
                    return true;
                }
                if seen.insert((t, f)) {
                    stack.push((t, f));
                }
            }
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::{parse_formula, Flavor};
    use crate::rng::CounterRng;

    fn buchi_for(text: &str) -> (Buchi, PropTable) {
        let f = parse_formula(text, Flavor::Iltl).unwrap();
        let table = PropTable::from_formulas(&[&f]);
        (ltl_to_buchi(&f, &table), table)
    }

    fn concrete_lasso(props: usize, prefix: &[u32], tail: u32) -> LassoWord {
        LassoWord {
            props,
            prefix: prefix
                .iter()
                .map(|letter| {
                    (0..props)
                        .map(|p| Some(letter >> p & 1 == 1))
                        .collect::<LetterConstraint>()
                })
                .collect(),
            tail,
        }
    }

    #[test]
    fn eventually_p_accepts_and_rejects() {
        let (b, _) = buchi_for("true U (p > 0)");
        // empty empty {p} repeated: accepted.
        assert!(accepts_lasso(&b, &[0, 0], &[1]));
        // empty forever: rejected.
        assert!(!accepts_lasso(&b, &[], &[0]));
        let word = concrete_lasso(1, &[0, 0], 1);
        assert!(!is_intersection_empty(&b, &lasso_automaton(&word)));
        let never = concrete_lasso(1, &[], 0);
        assert!(is_intersection_empty(&b, &lasso_automaton(&never)));
    }

    #[test]
    fn always_p_rejects_any_gap() {
        let (b, _) = buchi_for("false R (p > 0)");
        assert!(accepts_lasso(&b, &[], &[1]));
        assert!(!accepts_lasso(&b, &[1, 0], &[1]));
        assert!(!accepts_lasso(&b, &[], &[0]));
    }

    #[test]
    fn lasso_language_counts_unknowns() {
        // k free bits yield exactly 2^k distinct words; verify by explicit
        // enumeration against automaton acceptance for k <= 5.
        for k in 0..=5usize {
            let props = 1;
            let prefix: Vec<LetterConstraint> =
                (0..k.max(1)).map(|i| vec![if i < k { None } else { Some(true) }]).collect();
            let word = LassoWord {
                props,
                prefix: prefix.clone(),
                tail: 1,
            };
            let auto = lasso_automaton(&word);
            let mut accepted = 0u32;
            for fill in 0..(1u32 << prefix.len()) {
                let letters: Vec<u32> =
                    (0..prefix.len()).map(|i| fill >> i & 1).collect();
                if accepts_lasso(&auto, &letters, &[1]) {
                    accepted += 1;
                }
            }
            assert_eq!(accepted, 1 << k, "k = {k}");
        }
    }

    #[test]
    fn no_unknowns_single_word() {
        let word = concrete_lasso(1, &[0, 0, 1], 1);
        let auto = lasso_automaton(&word);
        assert!(accepts_lasso(&auto, &[0, 0, 1], &[1]));
        assert!(!accepts_lasso(&auto, &[0, 1, 1], &[1]));
        assert!(!accepts_lasso(&auto, &[0, 0, 1], &[0]));
    }

    #[test]
    fn negation_duality_on_formula_corpus() {
        for text in [
            "p > 0",
            "true U (p > 0)",
            "false R (p > 0)",
            "(p > 0) U (q > 0)",
            "(p > 0) R (q > 0)",
            "X (p > 0)",
            "X X (q > 0)",
            "(p > 0) & (true U (q > 0))",
            "(p > 0) | (false R (q > 0))",
            "(p > 0) U ((q > 0) U (p <= 0))",
        ] {
            let f = parse_formula(text, Flavor::Iltl).unwrap();
            let g = f.negate();
            let table = PropTable::from_formulas(&[&f, &g]);
            let bf = ltl_to_buchi(&f, &table);
            let bg = ltl_to_buchi(&g, &table);
            assert!(
                is_intersection_empty(&bf, &bg),
                "L(B_f) and L(B_!f) intersect for {text}"
            );
        }
    }

    #[test]
    fn tableau_matches_lasso_semantics_on_random_corpus() {
        // Random formulas and short lassos; the exhaustive sweep runs in the
        // acceptance suite.
        let mut rng = CounterRng::new(2718);
        for round in 0..150 {
            let f = random_iltl(&mut rng, 3);
            let table = PropTable::from_formulas(&[&f]);
            let b = ltl_to_buchi(&f, &table);
            let props = table.len().max(1) as u32;
            for _ in 0..20 {
                let plen = rng.below(4) as usize;
                let clen = 1 + rng.below(3) as usize;
                let prefix: Vec<u32> =
                    (0..plen).map(|_| rng.below(1 << props) as u32).collect();
                let cycle: Vec<u32> =
                    (0..clen).map(|_| rng.below(1 << props) as u32).collect();
                let direct = crate::oracle::lasso_satisfies(&f, &table, &prefix, &cycle);
                let auto = accepts_lasso(&b, &prefix, &cycle);
                assert_eq!(
                    direct, auto,
                    "round {round}: {f} on {prefix:?} ({cycle:?})^w"
                );
            }
        }
    }

    fn random_iltl(rng: &mut CounterRng, depth: u32) -> Formula {
        let leaf = |rng: &mut CounterRng| {
            let text = match rng.below(6) {
                0 => "p > 0",
                1 => "p <= 0",
                2 => "q > 0",
                3 => "q <= 0",
                4 => "true",
                _ => "false",
            };
            parse_formula(text, Flavor::Iltl).unwrap()
        };
        if depth == 0 {
            return leaf(rng);
        }
        match rng.below(7) {
            0 => leaf(rng),
            1 => Formula::Next(Box::new(random_iltl(rng, depth - 1))),
            2 => Formula::And(
                Box::new(random_iltl(rng, depth - 1)),
                Box::new(random_iltl(rng, depth - 1)),
            ),
            3 => Formula::Or(
                Box::new(random_iltl(rng, depth - 1)),
                Box::new(random_iltl(rng, depth - 1)),
            ),
            4 | 5 => Formula::Until(
                None,
                Box::new(random_iltl(rng, depth - 1)),
                Box::new(random_iltl(rng, depth - 1)),
            ),
            _ => Formula::Release(
                None,
                Box::new(random_iltl(rng, depth - 1)),
                Box::new(random_iltl(rng, depth - 1)),
            ),
        }
    }

    #[test]
    fn product_emptiness_matches_bounded_lasso_search() {
        // Random automaton pairs with <= 6 states: emptiness must agree with
        // a brute-force scan of all lasso words with prefix+cycle <= 10,
        // which is sound at this size by the product's cycle bound.
        let mut rng = CounterRng::new(515);
        for round in 0..60 {
            let a_states = 1 + rng.below(5) as usize;
            let a = random_buchi(&mut rng, a_states, 1);
            let b_states = 1 + rng.below(5) as usize;
            let b = random_buchi(&mut rng, b_states, 1);
            let empty = is_intersection_empty(&a, &b);
            let mut witness = None;
            'search: for total in 1..=10usize {
                for cycle_len in 1..=total {
                    let prefix_len = total - cycle_len;
                    let combos = 1u64 << (total as u64); // 1 prop: 2^total letter choices
                    for code in 0..combos {
                        let letters: Vec<u32> =
                            (0..total).map(|i| (code >> i & 1) as u32).collect();
                        let (prefix, cycle) = letters.split_at(prefix_len);
                        if accepts_lasso(&a, prefix, cycle)
                            && accepts_lasso(&b, prefix, cycle)
                        {
                            witness = Some((prefix.to_vec(), cycle.to_vec()));
                            break 'search;
                        }
                    }
                }
            }
            assert_eq!(
                empty,
                witness.is_none(),
                "round {round}: emptiness {empty} vs witness {witness:?}"
            );
        }
    }

    fn random_buchi(rng: &mut CounterRng, states: usize, props: usize) -> Buchi {
        let mut transitions = vec![Vec::new(); states];
        for (s, row) in transitions.iter_mut().enumerate() {
            let out = 1 + rng.below(3) as usize;
            for _ in 0..out {
                let target = rng.below(states as u64) as usize;
                let pos = (rng.below(1 << props)) as u32;
                let neg = (rng.below(1 << props)) as u32 & !pos;
                row.push((Label { pos, neg }, target));
            }
            let _ = s;
        }
        let accepting: Vec<bool> = (0..states).map(|_| rng.next_f64() < 0.4).collect();
        Buchi {
            props,
            initial: vec![0],
            accepting,
            transitions,
        }
    }
}
