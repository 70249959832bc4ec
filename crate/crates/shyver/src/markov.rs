//! Finite Markov chains: explicit sparse CTMC/DTMC plus implicit chains whose
//! transitions are enumerated on demand.
//!
//! Sampling is exact stochastic simulation (exponential holding times, direct
//! method); transient solutions use uniformization for CTMCs and repeated
//! sparse multiplication for DTMCs. Both are deterministic under seed replay.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::implicit::ContractingJumpGrid;
use crate::partition::ProbVector;
use crate::rng::CounterRng;

#[derive(Debug, Error)]
pub enum ChainError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("chain file parse error at line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error("invalid chain: {0}")]
    Invalid(String),
    #[error("state count {n} exceeds the cap {cap} for exact solutions")]
    CapExceeded { n: u64, cap: u64 },
    #[error("total outgoing rate {rate} at a state exceeds the declared bound {bound}")]
    RateOverflow { rate: f64, bound: f64 },
    #[error("invariant estimation did not converge within {0} iterations")]
    NonConvergence(u64),
    #[error("operation requires an explicit chain")]
    NotExplicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChainKind {
    Ct,
    Dt,
}

/// Explicit sparse chain. For a CTMC `rows` holds the full generator rows
/// including the diagonal; for a DTMC it holds stochastic rows.
#[derive(Debug, Clone)]
pub struct SparseChain {
    pub kind: ChainKind,
    pub n: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
    pub initial: ProbVector,
}

const ROW_TOL: f64 = 1e-9;

impl SparseChain {
    pub fn validate(&self) -> Result<(), ChainError> {
        if self.initial.len() != self.n {
            return Err(ChainError::Invalid(
                "initial distribution length mismatch".to_string(),
            ));
        }
        for (i, row) in self.rows.iter().enumerate() {
            let sum: f64 = row.iter().map(|(_, v)| v).sum();
            match self.kind {
                ChainKind::Ct => {
                    if sum.abs() > ROW_TOL {
                        return Err(ChainError::Invalid(format!(
                            "generator row {i} sums to {sum}, not 0"
                        )));
                    }
                    for &(j, v) in row {
                        if j != i && v < 0.0 {
                            return Err(ChainError::Invalid(format!(
                                "negative off-diagonal rate at ({i},{j})"
                            )));
                        }
                    }
                }
                ChainKind::Dt => {
                    if (sum - 1.0).abs() > ROW_TOL {
                        return Err(ChainError::Invalid(format!(
                            "stochastic row {i} sums to {sum}, not 1"
                        )));
                    }
                    if row.iter().any(|&(_, v)| v < 0.0) {
                        return Err(ChainError::Invalid(format!(
                            "negative probability in row {i}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Off-diagonal transitions and the total exit rate of a CTMC state.
    fn exits(&self, i: usize) -> (f64, impl Iterator<Item = (usize, f64)> + '_) {
        let total: f64 = self.rows[i]
            .iter()
            .filter(|&&(j, _)| j != i)
            .map(|(_, v)| v)
            .sum();
        (
            total,
            self.rows[i].iter().copied().filter(move |&(j, _)| j != i),
        )
    }

    /// Largest total exit rate, the uniformization constant.
    pub fn max_exit_rate(&self) -> f64 {
        (0..self.n).map(|i| self.exits(i).0).fold(0.0, f64::max)
    }

    /// `p * M` for the row-stochastic uniformized matrix `M = I + A/lam`.
    fn uniformized_step(&self, p: &[f64], lam: f64, out: &mut [f64]) {
        out.copy_from_slice(p);
        for (i, row) in self.rows.iter().enumerate() {
            if p[i] == 0.0 {
                continue;
            }
            for &(j, v) in row {
                out[j] += p[i] * v / lam;
            }
        }
    }

    /// `p * T` for a DTMC.
    pub fn dt_step(&self, p: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (i, row) in self.rows.iter().enumerate() {
            if p[i] == 0.0 {
                continue;
            }
            for &(j, v) in row {
                out[j] += p[i] * v;
            }
        }
    }
}

/// A chain the checker can sample: explicit, or an implicit family whose
/// states and rates are enumerated on demand.
#[derive(Debug, Clone)]
pub enum MarkovChain {
    Explicit(SparseChain),
    ImplicitCt(ContractingJumpGrid),
}

/// A sampled chain state: an index for explicit chains, a grid tuple for
/// implicit ones.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ChainState {
    Index(usize),
    Tuple(Vec<i32>),
}

/// Precomputed cumulative-rate tables for repeated draws from one chain;
/// sampling is a binary search per event instead of a row scan.
pub struct ChainSampler<'a> {
    chain: &'a MarkovChain,
    /// Per state: total exit rate and ascending cumulative exits.
    rows: Vec<(f64, Vec<(f64, usize)>)>,
    initial_cdf: Vec<f64>,
}

impl<'a> ChainSampler<'a> {
    fn new(chain: &'a MarkovChain) -> Self {
        let (rows, initial_cdf) = match chain {
            MarkovChain::Explicit(c) => {
                let rows = c
                    .rows
                    .iter()
                    .enumerate()
                    .map(|(i, row)| {
                        let mut cum = 0.0;
                        let mut table = Vec::with_capacity(row.len());
                        for &(j, v) in row {
                            let rate = match c.kind {
                                ChainKind::Ct if j == i => continue,
                                _ => v,
                            };
                            cum += rate;
                            table.push((cum, j));
                        }
                        (cum, table)
                    })
                    .collect();
                let mut cdf = Vec::with_capacity(c.n);
                let mut cum = 0.0;
                for &w in &c.initial.0 {
                    cum += w;
                    cdf.push(cum);
                }
                (rows, cdf)
            }
            MarkovChain::ImplicitCt(_) => (Vec::new(), Vec::new()),
        };
        ChainSampler {
            chain,
            rows,
            initial_cdf,
        }
    }

    fn draw_initial(&self, rng: &mut CounterRng) -> ChainState {
        match self.chain {
            MarkovChain::Explicit(_) => {
                let total = *self.initial_cdf.last().expect("nonempty chain");
                let u = rng.next_f64() * total;
                let i = self.initial_cdf.partition_point(|&c| c <= u);
                ChainState::Index(i.min(self.initial_cdf.len() - 1))
            }
            MarkovChain::ImplicitCt(g) => ChainState::Tuple(g.sample_initial(rng)),
        }
    }

    /// One state distributed as the chain law at continuous time `t`.
    pub fn ssa(
        &self,
        t: f64,
        rng: &mut CounterRng,
        rate_bound: Option<f64>,
    ) -> Result<(ChainState, u64), ChainError> {
        match self.chain {
            MarkovChain::Explicit(_) => {
                let ChainState::Index(mut i) = self.draw_initial(rng) else {
                    unreachable!()
                };
                let mut clock = 0.0;
                let mut events = 0u64;
                loop {
                    let (total, table) = &self.rows[i];
                    if *total <= 0.0 {
                        return Ok((ChainState::Index(i), events));
                    }
                    clock += rng.exponential(*total);
                    if clock > t {
                        return Ok((ChainState::Index(i), events));
                    }
                    let u = rng.next_f64() * total;
                    let k = table.partition_point(|&(c, _)| c <= u);
                    i = table[k.min(table.len() - 1)].1;
                    events += 1;
                }
            }
            MarkovChain::ImplicitCt(_) => self.chain.ssa_sample(t, rng, rate_bound),
        }
    }

    /// One state distributed as the DTMC law after `steps` steps.
    pub fn dtmc(&self, steps: u64, rng: &mut CounterRng) -> Result<(ChainState, u64), ChainError> {
        match self.chain {
            MarkovChain::Explicit(c) if c.kind == ChainKind::Dt => {
                let ChainState::Index(mut i) = self.draw_initial(rng) else {
                    unreachable!()
                };
                for _ in 0..steps {
                    let (total, table) = &self.rows[i];
                    let u = rng.next_f64() * total;
                    let k = table.partition_point(|&(c, _)| c <= u);
                    i = table[k.min(table.len() - 1)].1;
                }
                Ok((ChainState::Index(i), steps))
            }
            _ => Err(ChainError::NotExplicit),
        }
    }
}

impl MarkovChain {
    pub fn sampler(&self) -> ChainSampler<'_> {
        ChainSampler::new(self)
    }

    pub fn kind(&self) -> ChainKind {
        match self {
            MarkovChain::Explicit(c) => c.kind,
            MarkovChain::ImplicitCt(_) => ChainKind::Ct,
        }
    }

    pub fn state_count(&self) -> f64 {
        match self {
            MarkovChain::Explicit(c) => c.n as f64,
            MarkovChain::ImplicitCt(g) => g.state_count(),
        }
    }

    pub fn state_count_symbolic(&self) -> String {
        match self {
            MarkovChain::Explicit(c) => c.n.to_string(),
            MarkovChain::ImplicitCt(g) => g.state_count_symbolic(),
        }
    }

    fn sample_initial(&self, rng: &mut CounterRng) -> ChainState {
        match self {
            MarkovChain::Explicit(c) => {
                ChainState::Index(sample_from_weights(&c.initial.0, rng))
            }
            MarkovChain::ImplicitCt(g) => ChainState::Tuple(g.sample_initial(rng)),
        }
    }

    /// Draw one state distributed as the chain law at continuous time `t`
    /// via exponential-holding-time simulation. Returns the state and the
    /// number of simulated transition events.
    pub fn ssa_sample(
        &self,
        t: f64,
        rng: &mut CounterRng,
        rate_bound: Option<f64>,
    ) -> Result<(ChainState, u64), ChainError> {
        let mut state = self.sample_initial(rng);
        let mut clock = 0.0;
        let mut events = 0u64;
        loop {
            let (total, _) = self.exit_profile(&state);
            if let Some(bound) = rate_bound {
                if total > bound {
                    return Err(ChainError::RateOverflow {
                        rate: total,
                        bound,
                    });
                }
            }
            if total <= 0.0 {
                return Ok((state, events)); // absorbing
            }
            clock += rng.exponential(total);
            if clock > t {
                return Ok((state, events));
            }
            state = self.pick_transition(&state, total, rng);
            events += 1;
        }
    }

    /// Draw one state distributed as the DTMC law after `steps` steps.
    pub fn dtmc_sample(
        &self,
        steps: u64,
        rng: &mut CounterRng,
    ) -> Result<(ChainState, u64), ChainError> {
        let c = match self {
            MarkovChain::Explicit(c) if c.kind == ChainKind::Dt => c,
            _ => return Err(ChainError::NotExplicit),
        };
        let ChainState::Index(mut i) = self.sample_initial(rng) else {
            unreachable!()
        };
        for _ in 0..steps {
            let row = &c.rows[i];
            let total: f64 = row.iter().map(|(_, v)| v).sum();
            let mut u = rng.next_f64() * total;
            let mut next = row[row.len() - 1].0;
            for &(j, v) in row {
                u -= v;
                if u < 0.0 {
                    next = j;
                    break;
                }
            }
            i = next;
        }
        Ok((ChainState::Index(i), steps))
    }

    fn exit_profile(&self, state: &ChainState) -> (f64, ()) {
        match (self, state) {
            (MarkovChain::Explicit(c), ChainState::Index(i)) => (c.exits(*i).0, ()),
            (MarkovChain::ImplicitCt(g), ChainState::Tuple(s)) => (g.total_rate(s), ()),
            _ => unreachable!("state kind matches chain kind"),
        }
    }

    fn pick_transition(&self, state: &ChainState, total: f64, rng: &mut CounterRng) -> ChainState {
        match (self, state) {
            (MarkovChain::Explicit(c), ChainState::Index(i)) => {
                let mut u = rng.next_f64() * total;
                let (_, exits) = c.exits(*i);
                let mut chosen = *i;
                for (j, v) in exits {
                    u -= v;
                    if u < 0.0 {
                        chosen = j;
                        break;
                    }
                }
                ChainState::Index(chosen)
            }
            (MarkovChain::ImplicitCt(g), ChainState::Tuple(s)) => {
                ChainState::Tuple(g.pick_transition(s, total, rng))
            }
            _ => unreachable!(),
        }
    }
}

pub fn sample_from_weights(w: &[f64], rng: &mut CounterRng) -> usize {
    let total: f64 = w.iter().sum();
    let mut u = rng.next_f64() * total;
    for (i, v) in w.iter().enumerate() {
        u -= v;
        if u < 0.0 {
            return i;
        }
    }
    w.len() - 1
}

/// Evolve an arbitrary distribution of a CTMC by time `dt` via
/// uniformization, truncation error below 1e-10.
pub fn evolve_ct(chain: &SparseChain, p0: &[f64], dt: f64) -> Result<Vec<f64>, ChainError> {
    let lam = chain.max_exit_rate();
    if lam == 0.0 || dt == 0.0 {
        return Ok(p0.to_vec());
    }
    let q = lam * dt;
    let mut acc = vec![0.0; chain.n];
    let mut p = p0.to_vec();
    let mut next = vec![0.0; chain.n];
    // Poisson weights, accumulated until the remaining tail < 1e-10.
    let mut log_w = -q; // log of Poisson(0)
    let mut cum = 0.0f64;
    let mut k = 0u64;
    loop {
        let w = log_w.exp();
        cum += w;
        for (a, b) in acc.iter_mut().zip(&p) {
            *a += w * b;
        }
        if 1.0 - cum < 1e-10 && k as f64 > q {
            break;
        }
        k += 1;
        log_w += (q / k as f64).ln();
        chain.uniformized_step(&p, lam, &mut next);
        std::mem::swap(&mut p, &mut next);
        if k > 100_000_000 {
            return Err(ChainError::NonConvergence(k));
        }
    }
    // Renormalize the truncated series against the total initial mass.
    let mass: f64 = p0.iter().sum();
    let s: f64 = acc.iter().sum();
    if s > 0.0 {
        acc.iter_mut().for_each(|v| *v *= mass / s);
    }
    Ok(acc)
}

/// Exact distribution at time `t` (CT: uniformization with truncation error
/// below 1e-10; DT: `t` rounded to a step count and done by sparse powers).
pub fn transient_distribution(
    chain: &SparseChain,
    t: f64,
    cap: u64,
) -> Result<ProbVector, ChainError> {
    if chain.n as u64 > cap {
        return Err(ChainError::CapExceeded {
            n: chain.n as u64,
            cap,
        });
    }
    match chain.kind {
        ChainKind::Ct => Ok(ProbVector(evolve_ct(chain, &chain.initial.0, t)?)),
        ChainKind::Dt => {
            let steps = t.round() as u64;
            let mut p = chain.initial.0.clone();
            let mut next = vec![0.0; chain.n];
            for _ in 0..steps {
                chain.dt_step(&p, &mut next);
                std::mem::swap(&mut p, &mut next);
            }
            Ok(ProbVector(p))
        }
    }
}

/// An invariant-distribution estimate with a declared l1 accuracy.
#[derive(Debug, Clone)]
pub struct InvariantEstimate {
    pub weights: ProbVector,
    pub accuracy: f64,
}

/// Power iteration (uniformized for CTMCs) until the estimated distance to
/// the limit drops below `tol / 6`; the reported accuracy is `tol / 3`.
///
/// The successive l1 change alone badly understates the remaining distance
/// for slowly mixing chains, so the stopping rule also bounds the geometric
/// tail `change * rho / (1 - rho)` with the contraction factor estimated
/// from recent change ratios. Iteration starts from the chain's initial
/// distribution, which for reducible chains converges to the invariant of
/// the reachable class.
pub fn estimate_invariant(
    chain: &SparseChain,
    tol: f64,
    max_iters: u64,
) -> Result<InvariantEstimate, ChainError> {
    let lam = match chain.kind {
        ChainKind::Ct => chain.max_exit_rate().max(1e-300),
        ChainKind::Dt => 1.0,
    };
    let mut p = chain.initial.0.clone();
    let mut next = vec![0.0; chain.n];
    let mut recent: Vec<f64> = Vec::new();
    for _ in 0..max_iters {
        match chain.kind {
            ChainKind::Ct => chain.uniformized_step(&p, lam, &mut next),
            ChainKind::Dt => chain.dt_step(&p, &mut next),
        }
        let change: f64 = p.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut p, &mut next);
        recent.push(change);
        if recent.len() > 4 {
            recent.remove(0);
        }
        if change < tol / 6.0 {
            let rho = recent
                .windows(2)
                .map(|w| if w[0] > 0.0 { w[1] / w[0] } else { 0.0 })
                .fold(0.0f64, f64::max);
            let tail = if rho < 1.0 {
                change * rho / (1.0 - rho)
            } else {
                f64::INFINITY
            };
            // Near machine noise the change ratios jitter above 1; the
            // iteration has converged regardless.
            if change < 1e-13 || tail < tol / 6.0 {
                return Ok(InvariantEstimate {
                    weights: ProbVector(p),
                    accuracy: tol / 3.0,
                });
            }
        }
    }
    Err(ChainError::NonConvergence(max_iters))
}

// ---------------------------------------------------------------------------
// Sparse triplet chain files
// ---------------------------------------------------------------------------

/// Write `ctmc|dtmc n nnz` followed by `i j value` lines, plus the initial
/// distribution as `init i value` lines.
pub fn write_chain(chain: &SparseChain, path: &Path) -> Result<(), ChainError> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    let nnz: usize = chain.rows.iter().map(|r| r.len()).sum();
    let kind = match chain.kind {
        ChainKind::Ct => "ctmc",
        ChainKind::Dt => "dtmc",
    };
    writeln!(out, "{kind} {} {nnz}", chain.n)?;
    for (i, row) in chain.rows.iter().enumerate() {
        for &(j, v) in row {
            writeln!(out, "{i} {j} {v:.17e}")?;
        }
    }
    for (i, &v) in chain.initial.0.iter().enumerate() {
        if v != 0.0 {
            writeln!(out, "init {i} {v:.17e}")?;
        }
    }
    Ok(())
}

pub fn read_chain(path: &Path) -> Result<SparseChain, ChainError> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut lines = reader.lines().enumerate();
    let (_, header) = lines.next().ok_or(ChainError::Format {
        line: 1,
        msg: "empty file".to_string(),
    })?;
    let header = header?;
    let mut parts = header.split_whitespace();
    let kind = match parts.next() {
        Some("ctmc") => ChainKind::Ct,
        Some("dtmc") => ChainKind::Dt,
        other => {
            return Err(ChainError::Format {
                line: 1,
                msg: format!("expected ctmc|dtmc, found {other:?}"),
            })
        }
    };
    let n: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or(ChainError::Format {
            line: 1,
            msg: "missing state count".to_string(),
        })?;
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut initial = vec![0.0; n];
    for (lineno, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let first = parts.next().unwrap();
        let parse = |s: Option<&str>, what: &str| -> Result<f64, ChainError> {
            s.and_then(|x| x.parse().ok()).ok_or(ChainError::Format {
                line: lineno + 1,
                msg: format!("missing {what}"),
            })
        };
        if first == "init" {
            let i = parse(parts.next(), "state index")? as usize;
            initial[i] = parse(parts.next(), "probability")?;
        } else {
            let i: usize = first.parse().map_err(|_| ChainError::Format {
                line: lineno + 1,
                msg: "bad row index".to_string(),
            })?;
            let j = parse(parts.next(), "column index")? as usize;
            let v = parse(parts.next(), "value")?;
            if i >= n || j >= n {
                return Err(ChainError::Format {
                    line: lineno + 1,
                    msg: "index out of range".to_string(),
                });
            }
            rows[i].push((j, v));
        }
    }
    let chain = SparseChain {
        kind,
        n,
        rows,
        initial: ProbVector(initial),
    };
    chain.validate()?;
    Ok(chain)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn two_state_symmetric() -> SparseChain {
        SparseChain {
            kind: ChainKind::Ct,
            n: 2,
            rows: vec![vec![(0, -1.0), (1, 1.0)], vec![(0, 1.0), (1, -1.0)]],
            initial: ProbVector(vec![1.0, 0.0]),
        }
    }

    #[test]
    fn transient_at_zero_is_initial() {
        let c = two_state_symmetric();
        let p = transient_distribution(&c, 0.0, 1000).unwrap();
        assert_eq!(p.0, vec![1.0, 0.0]);
    }

    #[test]
    fn transient_two_state_closed_form() {
        // p1(t) = (1 + exp(-2t)) / 2 for the symmetric two-state chain.
        let c = two_state_symmetric();
        let p = transient_distribution(&c, 1.0, 1000).unwrap();
        let expect = 0.5 * (1.0 + (-2.0f64).exp());
        assert_relative_eq!(p.0[0], expect, epsilon = 1e-9);
        assert_relative_eq!(p.0[1], 1.0 - expect, epsilon = 1e-9);
        assert_relative_eq!(p.0.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn transient_long_run_symmetric() {
        let c = two_state_symmetric();
        let p = transient_distribution(&c, 50.0, 1000).unwrap();
        assert_relative_eq!(p.0[0], 0.5, epsilon = 1e-9);
    }

    #[test]
    fn absorbing_state_stays_put() {
        let c = SparseChain {
            kind: ChainKind::Ct,
            n: 2,
            rows: vec![vec![], vec![(0, 2.0), (1, -2.0)]],
            initial: ProbVector(vec![1.0, 0.0]),
        };
        let chain = MarkovChain::Explicit(c);
        let mut rng = CounterRng::new(1);
        for _ in 0..50 {
            let (s, _) = chain.ssa_sample(3.0, &mut rng, None).unwrap();
            assert_eq!(s, ChainState::Index(0));
        }
    }

    #[test]
    fn ssa_matches_symmetric_invariant() {
        let chain = MarkovChain::Explicit(two_state_symmetric());
        let mut rng = CounterRng::new(11);
        let n = 10_000;
        let mut count = 0;
        for _ in 0..n {
            if let (ChainState::Index(0), _) = chain.ssa_sample(20.0, &mut rng, None).unwrap() {
                count += 1;
            }
        }
        let freq = count as f64 / n as f64;
        assert!((freq - 0.5).abs() < 0.02, "freq {freq}");
    }

    #[test]
    fn ssa_matches_uniformization_oracle() {
        let c = SparseChain {
            kind: ChainKind::Ct,
            n: 3,
            rows: vec![
                vec![(0, -2.0), (1, 1.5), (2, 0.5)],
                vec![(0, 0.3), (1, -1.0), (2, 0.7)],
                vec![(0, 1.0), (2, -1.0)],
            ],
            initial: ProbVector(vec![0.6, 0.4, 0.0]),
        };
        let exact = transient_distribution(&c, 0.7, 1000).unwrap();
        let chain = MarkovChain::Explicit(c);
        let mut rng = CounterRng::new(2024);
        let n = 100_000;
        let mut counts = [0u64; 3];
        for _ in 0..n {
            if let (ChainState::Index(i), _) = chain.ssa_sample(0.7, &mut rng, None).unwrap() {
                counts[i] += 1;
            }
        }
        let tv: f64 = counts
            .iter()
            .zip(&exact.0)
            .map(|(&c, &e)| (c as f64 / n as f64 - e).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.01, "tv {tv}");
    }

    #[test]
    fn sampler_consistent_with_transient_at_several_times() {
        let c = SparseChain {
            kind: ChainKind::Ct,
            n: 3,
            rows: vec![
                vec![(0, -2.0), (1, 1.5), (2, 0.5)],
                vec![(0, 0.3), (1, -1.0), (2, 0.7)],
                vec![(0, 1.0), (2, -1.0)],
            ],
            initial: ProbVector(vec![0.6, 0.4, 0.0]),
        };
        let chain = MarkovChain::Explicit(c.clone());
        let sampler = chain.sampler();
        for (k, t) in [0.0, 0.5, 1.0, 5.0].into_iter().enumerate() {
            let exact = transient_distribution(&c, t, 1000).unwrap();
            let mut rng = CounterRng::from_path(606, &[k as u64]);
            let n = 100_000;
            let mut counts = [0u64; 3];
            for _ in 0..n {
                if let (ChainState::Index(i), _) = sampler.ssa(t, &mut rng, None).unwrap() {
                    counts[i] += 1;
                }
            }
            let tv: f64 = counts
                .iter()
                .zip(&exact.0)
                .map(|(&c, &e)| (c as f64 / n as f64 - e).abs())
                .sum::<f64>()
                / 2.0;
            assert!(tv < 0.02, "t {t}: tv {tv}");
        }
    }

    #[test]
    fn seed_replay_is_identical() {
        let chain = MarkovChain::Explicit(two_state_symmetric());
        let run = |seed| {
            let mut rng = CounterRng::new(seed);
            (0..100)
                .map(|_| chain.ssa_sample(1.0, &mut rng, None).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(5), run(5));
    }

    #[test]
    fn dtmc_identity_is_fixed_point() {
        let c = SparseChain {
            kind: ChainKind::Dt,
            n: 3,
            rows: vec![vec![(0, 1.0)], vec![(1, 1.0)], vec![(2, 1.0)]],
            initial: ProbVector(vec![0.0, 1.0, 0.0]),
        };
        let chain = MarkovChain::Explicit(c);
        let mut rng = CounterRng::new(4);
        for t in [0u64, 1, 5, 100] {
            let (s, _) = chain.dtmc_sample(t, &mut rng).unwrap();
            assert_eq!(s, ChainState::Index(1));
        }
    }

    #[test]
    fn dtmc_period_two_swap() {
        let c = SparseChain {
            kind: ChainKind::Dt,
            n: 2,
            rows: vec![vec![(1, 1.0)], vec![(0, 1.0)]],
            initial: ProbVector(vec![1.0, 0.0]),
        };
        let chain = MarkovChain::Explicit(c);
        let mut rng = CounterRng::new(4);
        let (s, _) = chain.dtmc_sample(7, &mut rng).unwrap();
        assert_eq!(s, ChainState::Index(1));
    }

    #[test]
    fn dtmc_matches_matrix_power_oracle() {
        let mut rng = CounterRng::new(77);
        let n = 5;
        let rows: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|_| {
                let mut w: Vec<f64> = (0..n).map(|_| rng.next_f64()).collect();
                let s: f64 = w.iter().sum();
                w.iter_mut().for_each(|v| *v /= s);
                w.into_iter().enumerate().collect()
            })
            .collect();
        let c = SparseChain {
            kind: ChainKind::Dt,
            n,
            rows,
            initial: ProbVector(vec![1.0, 0.0, 0.0, 0.0, 0.0]),
        };
        let exact = transient_distribution(&c, 8.0, 1000).unwrap();
        let chain = MarkovChain::Explicit(c);
        let samples = 100_000;
        let mut counts = vec![0u64; n];
        for _ in 0..samples {
            if let (ChainState::Index(i), _) = chain.dtmc_sample(8, &mut rng).unwrap() {
                counts[i] += 1;
            }
        }
        let tv: f64 = counts
            .iter()
            .zip(&exact.0)
            .map(|(&c, &e)| (c as f64 / samples as f64 - e).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.01, "tv {tv}");
    }

    #[test]
    fn invariant_doubly_stochastic_is_uniform() {
        let c = SparseChain {
            kind: ChainKind::Dt,
            n: 3,
            rows: vec![
                vec![(0, 0.5), (1, 0.25), (2, 0.25)],
                vec![(0, 0.25), (1, 0.5), (2, 0.25)],
                vec![(0, 0.25), (1, 0.25), (2, 0.5)],
            ],
            initial: ProbVector(vec![1.0, 0.0, 0.0]),
        };
        let inv = estimate_invariant(&c, 0.01, 100_000).unwrap();
        for v in &inv.weights.0 {
            assert_relative_eq!(*v, 1.0 / 3.0, epsilon = 1e-3);
        }
    }

    #[test]
    fn chain_file_round_trip() {
        let c = two_state_symmetric();
        let dir = std::env::temp_dir().join("shyver_chain_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("chain.txt");
        write_chain(&c, &path).unwrap();
        let back = read_chain(&path).unwrap();
        assert_eq!(back.n, 2);
        assert_eq!(back.kind, ChainKind::Ct);
        assert_eq!(back.initial.0, c.initial.0);
        for i in 0..2 {
            let mut a = back.rows[i].clone();
            let mut b = c.rows[i].clone();
            a.sort_by_key(|&(j, _)| j);
            b.sort_by_key(|&(j, _)| j);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn validate_rejects_bad_rows() {
        let c = SparseChain {
            kind: ChainKind::Ct,
            n: 2,
            rows: vec![vec![(0, -1.0), (1, 2.0)], vec![(0, 1.0), (1, -1.0)]],
            initial: ProbVector(vec![1.0, 0.0]),
        };
        assert!(c.validate().is_err());
    }
}
