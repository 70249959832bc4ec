//! End-to-end verification pipelines.
//!
//! `check_mitl_ctmc` labels a dense-time signal by running the three-outcome
//! atom test twice per segment midpoint (at thresholds shifted by one third
//! of the indifference width) and monitors the strengthened formula on the
//! assembled three-valued signal. `check_iltl` labels one test per step,
//! fixes the tail from the invariant estimate, and decides by Buchi product
//! emptiness against the formula and its dual. `verify_shs_ct` / `verify_shs_dt`
//! run the full reduce -> budget -> strengthen -> decide pipeline.

use std::collections::BTreeMap;
use std::time::Instant;

use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::automata::{
    is_intersection_empty, lasso_automaton, ltl_to_buchi, LassoWord, LetterConstraint, PropTable,
};
use crate::logic::{
    normalize_observable, parse_rational, rational_to_f64, strengthen, Atom, Formula, LogicError,
};
use crate::markov::{
    estimate_invariant, ChainError, ChainState, MarkovChain, SparseChain,
};
use crate::model::{DtKernel, HybridModel, HybridModelCt, HybridModelDt, ModelError};
use crate::partition::{project, Partition, ProbVector};
use crate::reduction::{
    ct_error_bound, dt_error_bound, estimate_lambda, projection_error, projection_tv,
    reduce_ct, reduce_dt, reduce_observable, ErrorBudget, RateErrorSource, ReduceError,
};
use crate::rng::CounterRng;
use crate::signal::{assemble_signal, eval_mitl_three_valued, SignalError};
use crate::stats::{
    atom_test_bernoulli, atom_test_mean, duration_of_simulation, StatParams,
    StatsError, Verdict,
};

#[derive(Debug, Error)]
pub enum CheckError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Reduce(#[from] ReduceError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Logic(#[from] LogicError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error("model fails validation: {0:?}")]
    InvalidModel(Vec<String>),
    #[error("invariant estimate violates the separation assertion for atom {atom}: |value - threshold| = {margin}, need > {required}")]
    SeparationFailure {
        atom: String,
        margin: f64,
        required: f64,
    },
    #[error("no derivative bound available: supply one for implicit chains")]
    MissingDerivativeBound,
    #[error("missing contractivity constants (rate and gain) for the continuous-time bound")]
    MissingContractivity,
    #[error("observable '{0}' is not defined on this chain")]
    UnknownObservable(String),
    #[error("discrete-time checking needs a discrete-time chain (and vice versa)")]
    KindMismatch,
}

/// Tuning knobs and budget inputs of a verification run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckerConfig {
    pub params: StatParams,
    pub seed: u64,
    /// Worker threads for independent atom tests (0 = all cores).
    pub workers: usize,
    pub horizon_cap: f64,
    pub segment_cap: u64,
    /// Cap on explicit-solution state counts and refined partitions.
    pub state_cap: u64,
    /// Bound on |d(observable)/dt|; derived from the generator when absent.
    pub derivative_bound: Option<f64>,
    /// User-supplied rate-error term per observable (continuous time).
    pub rate_error: BTreeMap<String, f64>,
    /// Contraction rate and gain for the continuous-time margin.
    pub contraction_rate: Option<f64>,
    pub contraction_gain: Option<f64>,
    /// Time grid for the rate-error estimator when no user value is given.
    pub lambda_time_grid: Vec<f64>,
    /// Steps over which the discrete-time projection error is maximized.
    pub dt_projection_steps: u64,
    /// Also check the dual strengthening of the negated formula when the
    /// strengthened formula fails.
    pub two_sided: bool,
    /// Stream per-call log-likelihood traces as NDJSON on stderr.
    pub stats_trace: bool,
    /// Debug dump of the assembled three-valued signal.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dump_signal: Option<std::path::PathBuf>,
    /// Debug dump of the word and formula automata (discrete time).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dump_automaton: Option<std::path::PathBuf>,
}

impl Default for CheckerConfig {
    fn default() -> Self {
        CheckerConfig {
            params: StatParams {
                alpha: 0.05,
                gamma: 0.05,
                delta: 0.05,
                delta_prime: 0.15,
            },
            seed: 0,
            workers: 0,
            horizon_cap: (1u64 << 20) as f64,
            segment_cap: 10_000_000,
            state_cap: 100_000,
            derivative_bound: None,
            rate_error: BTreeMap::new(),
            contraction_rate: None,
            contraction_gain: None,
            lambda_time_grid: (1..=10).map(|k| 0.1 * k as f64).collect(),
            dt_projection_steps: 50,
            two_sided: false,
            stats_trace: false,
            dump_signal: None,
            dump_automaton: None,
        }
    }
}

/// Observable weights over a chain's states.
#[derive(Debug, Clone)]
pub enum ChainObservables {
    /// Per-state weight vectors keyed by observable name.
    Dense(BTreeMap<String, Vec<f64>>),
    /// The implicit grid family's built-in observable, under its given name.
    Implicit { name: String },
}

impl ChainObservables {
    fn weight(&self, chain: &MarkovChain, name: &str, state: &ChainState) -> f64 {
        match (self, chain, state) {
            (ChainObservables::Dense(map), _, ChainState::Index(i)) => map[name][*i],
            (
                ChainObservables::Implicit { .. },
                MarkovChain::ImplicitCt(grid),
                ChainState::Tuple(t),
            ) => grid.observable_value(t),
            _ => unreachable!("observable kind matches chain kind"),
        }
    }

    fn contains(&self, name: &str) -> bool {
        match self {
            ChainObservables::Dense(map) => map.contains_key(name),
            ChainObservables::Implicit { name: n } => n == name,
        }
    }

    fn is_indicator(&self, name: &str) -> bool {
        match self {
            ChainObservables::Dense(map) => {
                map[name].iter().all(|&v| v == 0.0 || v == 1.0)
            }
            ChainObservables::Implicit { .. } => true,
        }
    }

    fn range(&self, name: &str) -> (f64, f64) {
        match self {
            ChainObservables::Dense(map) => {
                let v = &map[name];
                (
                    v.iter().cloned().fold(f64::INFINITY, f64::min),
                    v.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                )
            }
            ChainObservables::Implicit { .. } => (0.0, 1.0),
        }
    }
}

/// Invariant-distribution knowledge for the tail labels.
#[derive(Debug, Clone)]
pub enum ChainInvariant {
    /// Explicit estimate with declared l1 accuracy.
    Estimate(ProbVector),
    /// Analytic invariant of the implicit grid family.
    ImplicitAnalytic,
}

impl ChainInvariant {
    fn observable_mean(
        &self,
        chain: &MarkovChain,
        observables: &ChainObservables,
        name: &str,
    ) -> f64 {
        match (self, observables) {
            (ChainInvariant::Estimate(p), ChainObservables::Dense(map)) => p.dot(&map[name]),
            (ChainInvariant::ImplicitAnalytic, _) => match chain {
                MarkovChain::ImplicitCt(grid) => grid.invariant_observable_mean(),
                _ => unreachable!(),
            },
            _ => unreachable!(),
        }
    }

    fn sample_key(&self, chain: &MarkovChain, rng: &mut CounterRng) -> u64 {
        match self {
            ChainInvariant::Estimate(p) => crate::markov::sample_from_weights(&p.0, rng) as u64,
            ChainInvariant::ImplicitAnalytic => match chain {
                MarkovChain::ImplicitCt(grid) => grid
                    .encode_u64(&grid.sample_invariant(rng))
                    .expect("implicit invariant sampling needs a u64-sized codec"),
                _ => unreachable!(),
            },
        }
    }
}

/// Everything needed to statistically check formulas against one chain.
#[derive(Debug, Clone)]
pub struct CheckTarget {
    pub chain: MarkovChain,
    pub observables: ChainObservables,
    pub invariant: ChainInvariant,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageSamples {
    pub samples: u64,
    pub events: u64,
}

/// Verification report: verdict plus the certificate chain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub verdict: Verdict,
    pub checked_formula: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub original_formula: Option<String>,
    pub params: StatParams,
    pub seed: u64,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub budgets: Vec<ErrorBudget>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    pub horizon_source: String,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub tested_horizons: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub segment_half_width: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub segment_count: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub derivative_bound: Option<f64>,
    pub derivative_bound_source: String,
    pub atom_count: usize,
    /// Per-call budgets of the labeling stage and the factor that recovers
    /// the stage budget: per_call_alpha * split_factor = alpha / 2.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_call_alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_call_gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split_factor: Option<f64>,
    pub stages: BTreeMap<String, StageSamples>,
    pub state_count: String,
    pub notes: Vec<String>,
    pub wall_ms: u64,
}

impl Report {
    fn new(verdict: Verdict, formula: &Formula, config: &CheckerConfig) -> Self {
        Report {
            verdict,
            checked_formula: formula.to_string(),
            original_formula: None,
            params: config.params,
            seed: config.seed,
            budgets: Vec::new(),
            horizon: None,
            horizon_source: String::new(),
            tested_horizons: Vec::new(),
            segment_half_width: None,
            segment_count: None,
            derivative_bound: None,
            derivative_bound_source: String::new(),
            atom_count: 0,
            per_call_alpha: None,
            per_call_gamma: None,
            split_factor: None,
            stages: BTreeMap::new(),
            state_count: String::new(),
            notes: Vec::new(),
            wall_ms: 0,
        }
    }

    pub fn samples_total(&self) -> u64 {
        self.stages.values().map(|s| s.samples).sum()
    }

    pub fn events_total(&self) -> u64 {
        self.stages.values().map(|s| s.events).sum()
    }
}

fn thread_pool(workers: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("thread pool")
}

fn rational_from_f64(v: f64) -> BigRational {
    // The shortest decimal that round-trips to the same f64; margins and
    // widths then print the way they were computed (0.27, not a 60-digit
    // binary expansion).
    parse_rational(&format!("{v}")).unwrap_or_else(|| BigRational::from_float(v).expect("finite"))
}

/// Check the separation assertion for every base proposition and return the
/// two-valued tail letter.
fn tail_values(
    props: &PropTable,
    target: &CheckTarget,
    delta_prime: f64,
) -> Result<Vec<bool>, CheckError> {
    let mut tail = Vec::with_capacity(props.len());
    for i in 0..props.len() {
        let atom = props.atom(i);
        let mean = target
            .invariant
            .observable_mean(&target.chain, &target.observables, &atom.observable);
        let c = atom.threshold_f64();
        let required = 2.0 * delta_prime / 3.0;
        if (mean - c).abs() <= required {
            return Err(CheckError::SeparationFailure {
                atom: format!("{atom:?}"),
                margin: (mean - c).abs(),
                required,
            });
        }
        tail.push(mean > c);
    }
    Ok(tail)
}

/// Outcome of one proposition test at one time point.
struct PropLabel {
    res_hi: Verdict,
    res_lo: Verdict,
    samples: u64,
    events: u64,
}

/// Run the two shifted atom tests for a proposition at a chain time.
#[allow(clippy::too_many_arguments)]
fn label_prop_ct(
    target: &CheckTarget,
    sampler: &crate::markov::ChainSampler<'_>,
    prop_atom: &Atom,
    t: f64,
    alpha: f64,
    gamma: f64,
    delta: f64,
    is_indicator: bool,
    trace: bool,
    rng: &CounterRng,
) -> Result<PropLabel, CheckError> {
    let c = prop_atom.threshold_f64();
    let third = delta / 3.0;
    let mut events_total = 0u64;
    let run = |shift: f64, stream: u64, events: &mut u64| -> Result<(Verdict, u64), CheckError> {
        let mut rng = rng.substream(stream);
        if is_indicator {
            let mut sample_events = 0u64;
            let (v, cert) = atom_test_bernoulli(
                |r| {
                    let (state, ev) = sampler
                        .ssa(t, r, None)
                        .expect("explicit sampling cannot overflow");
                    sample_events += ev;
                    target
                        .observables
                        .weight(&target.chain, &prop_atom.observable, &state)
                        == 1.0
                },
                c + shift,
                alpha,
                gamma,
                third,
                &mut rng,
                trace,
            );
            *events += sample_events;
            if let Some(llr) = &cert.llr_trace {
                eprintln!(
                    "{}",
                    serde_json::json!({"atom": format!("{prop_atom:?}"), "t": t, "llr": llr})
                );
            }
            Ok((v, cert.samples))
        } else {
            let mut sample_events = 0u64;
            let (v, cert) = atom_test_mean(
                |r| {
                    let (state, ev) = sampler
                        .ssa(t, r, None)
                        .expect("explicit sampling cannot overflow");
                    sample_events += ev;
                    target
                        .observables
                        .weight(&target.chain, &prop_atom.observable, &state)
                },
                c + shift,
                alpha,
                gamma,
                third,
                &mut rng,
            )?;
            *events += sample_events;
            Ok((v, cert.samples))
        }
    };
    let (res_hi, s1) = run(third, 0, &mut events_total)?;
    let (res_lo, s2) = run(-third, 1, &mut events_total)?;
    Ok(PropLabel {
        res_hi,
        res_lo,
        samples: s1 + s2,
        events: events_total,
    })
}

fn flip(v: Verdict) -> Verdict {
    match v {
        Verdict::Yes => Verdict::No,
        Verdict::No => Verdict::Yes,
        Verdict::Unknown => Verdict::Unknown,
    }
}

/// Statistically decide a dense-time formula on a CTMC.
///
/// The formula must already be strengthened. The horizon comes from the
/// doubling loop when the formula is tail-sensitive (unbounded operators or
/// any release), otherwise from the formula's own bounded horizon; signal
/// segment midpoints are labeled in parallel with budgets split over
/// `2 * |atoms| * ceil(T / (2 delta))` calls.
pub fn check_mitl_ctmc(
    target: &CheckTarget,
    formula: &Formula,
    config: &CheckerConfig,
) -> Result<Report, CheckError> {
    let start = Instant::now();
    config.params.validate()?;
    let params = config.params;
    let atoms = formula.atoms();
    let mut report = Report::new(Verdict::Unknown, formula, config);
    report.atom_count = atoms.len();
    report.state_count = target.chain.state_count_symbolic();

    if atoms.is_empty() {
        // Constant formula: monitor it over a trivial signal.
        let sig = crate::signal::ThreeValuedSignal {
            atoms: Vec::new(),
            boundaries: vec![BigRational::zero(), BigRational::from_integer(1.into())],
            values: vec![Vec::new()],
            tail: Vec::new(),
        };
        report.verdict = eval_mitl_three_valued(&sig, formula)?;
        report.horizon_source = "constant formula".to_string();
        report.wall_ms = start.elapsed().as_millis() as u64;
        return Ok(report);
    }

    let props = PropTable::from_formulas(&[formula]);
    for atom in &atoms {
        if !target.observables.contains(&atom.observable) {
            return Err(CheckError::UnknownObservable(atom.observable.clone()));
        }
    }
    let tail = tail_values(&props, target, params.delta_prime)?;
    let pool = thread_pool(config.workers);
    let sampler = target.chain.sampler();

    // Horizon: the doubling loop is only needed when labels beyond the
    // formula's own bounded horizon can influence the verdict.
    let bounded = formula.horizon();
    let tail_sensitive = bounded.is_none() || formula.contains_release();
    let mut horizon_rat;
    if tail_sensitive {
        let n_states = target.chain.state_count();
        if n_states > config.state_cap as f64 * 1024.0 {
            report.notes.push(format!(
                "horizon loop infeasible at {} states; verdict Unknown",
                report.state_count
            ));
            report.verdict = Verdict::Unknown;
            report.wall_ms = start.elapsed().as_millis() as u64;
            return Ok(report);
        }
        let n = n_states as u64;
        let alpha_horizon = 0.5 * params.alpha.min(params.gamma);
        let mut rng = CounterRng::from_path(config.seed, &[0x8080]);
        let target_ref = &target;
        let outcome = pool.install(|| {
            duration_of_simulation(
                |t, r| {
                    let (state, _) = sampler.ssa(t, r, None).expect("sampling failure");
                    state_key(&target_ref.chain, &state)
                },
                |r| target_ref.invariant.sample_key(&target_ref.chain, r),
                n,
                alpha_horizon,
                params.delta_prime,
                config.horizon_cap,
                &mut rng,
            )
        });
        let (t_inv, horizon_cert) = match outcome {
            Ok(v) => v,
            Err(StatsError::HorizonCap(cap)) => {
                report.notes.push(format!("horizon cap {cap} exhausted"));
                report.verdict = Verdict::Unknown;
                report.horizon_source = "horizon-cap".to_string();
                report.wall_ms = start.elapsed().as_millis() as u64;
                return Ok(report);
            }
            Err(e) => return Err(e.into()),
        };
        report.tested_horizons = horizon_cert.tested.clone();
        report.stages.insert(
            "horizon".to_string(),
            StageSamples {
                samples: horizon_cert.samples,
                events: 0,
            },
        );
        let mut t = rational_from_f64(t_inv);
        if let Some(b) = &bounded {
            t = t.max(b.clone());
        }
        horizon_rat = t;
        report.horizon_source = "doubling-loop".to_string();
    } else {
        horizon_rat = bounded.clone().expect("checked above");
        report.horizon_source = "formula-bound".to_string();
        report
            .notes
            .push("bounded tail-insensitive formula; tail labels from the invariant estimate".to_string());
    }
    if horizon_rat.is_zero() {
        // Purely propositional formula: a single instantaneous segment.
        horizon_rat = BigRational::from_integer(1.into());
    }
    let horizon_f = rational_to_f64(&horizon_rat);
    report.horizon = Some(horizon_f);

    // Segment half-width from the derivative bound.
    let (h, h_source) = match config.derivative_bound {
        Some(h) => (h, "user"),
        None => match &target.chain {
            MarkovChain::Explicit(c) => (generator_row_bound(c), "generator-row-bound"),
            MarkovChain::ImplicitCt(_) => return Err(CheckError::MissingDerivativeBound),
        },
    };
    report.derivative_bound = Some(h);
    report.derivative_bound_source = h_source.to_string();
    let delta_rat = rational_from_f64(params.delta);
    let half_width = &delta_rat / (BigRational::from_integer(3.into()) * rational_from_f64(h));
    report.segment_half_width = Some(crate::logic::format_rational(&half_width));

    let width = &half_width * BigRational::from_integer(2.into());
    let slots = (&horizon_rat / &width).floor().to_integer();
    let slots: u64 = slots.to_u64().unwrap_or(u64::MAX).saturating_add(1);
    report.segment_count = Some(slots);
    if slots > config.segment_cap {
        report
            .notes
            .push(format!("segment count {slots} above cap {}", config.segment_cap));
        report.verdict = Verdict::Unknown;
        report.wall_ms = start.elapsed().as_millis() as u64;
        return Ok(report);
    }

    // Budget split: the labeling stage owns half of each budget, divided
    // over two calls per (slot, atom).
    let n_budget = (atoms.len() as u64 * slots.max(1)) as f64;
    let alpha_call = params.alpha / 2.0 / (2.0 * n_budget);
    let gamma_call = params.gamma / 2.0 / (2.0 * n_budget);
    report.per_call_alpha = Some(alpha_call);
    report.per_call_gamma = Some(gamma_call);
    report.split_factor = Some(2.0 * n_budget);

    // Label every (slot, proposition) midpoint on the worker pool.
    let jobs: Vec<(u64, usize)> = (0..slots)
        .flat_map(|i| (0..props.len()).map(move |p| (i, p)))
        .collect();
    let labels: Vec<Result<PropLabel, CheckError>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(slot, p)| {
                let prop_atom = props.atom(p);
                let t_mid = rational_to_f64(
                    &(&width * rational_from_f64(slot as f64 + 0.5)),
                )
                .min(horizon_f);
                let rng = CounterRng::from_path(config.seed, &[0x11, slot, p as u64]);
                label_prop_ct(
                    target,
                    &sampler,
                    &prop_atom,
                    t_mid,
                    alpha_call,
                    gamma_call,
                    params.delta,
                    target.observables.is_indicator(&prop_atom.observable),
                    config.stats_trace,
                    &rng,
                )
            })
            .collect()
    });
    let mut prop_results: Vec<Vec<(Verdict, Verdict)>> =
        vec![vec![(Verdict::Unknown, Verdict::Unknown); props.len()]; slots as usize];
    let mut label_samples = 0u64;
    let mut label_events = 0u64;
    for (&(slot, p), outcome) in jobs.iter().zip(labels) {
        let label = outcome?;
        label_samples += label.samples;
        label_events += label.events;
        prop_results[slot as usize][p] = (label.res_hi, label.res_lo);
    }
    report.stages.insert(
        "labeling".to_string(),
        StageSamples {
            samples: label_samples,
            events: label_events,
        },
    );

    // Atom verdict pairs from proposition results, honoring polarity.
    let verdicts: Vec<Vec<(Verdict, Verdict)>> = prop_results
        .iter()
        .map(|row| {
            atoms
                .iter()
                .map(|atom| {
                    let (p, positive) = props.literal(atom).expect("interned");
                    let (hi, lo) = row[p];
                    if positive {
                        (hi, lo)
                    } else {
                        (flip(lo), flip(hi))
                    }
                })
                .collect()
        })
        .collect();
    let atom_tail: Vec<bool> = atoms
        .iter()
        .map(|atom| {
            let (p, positive) = props.literal(atom).expect("interned");
            tail[p] == positive
        })
        .collect();

    let signal = assemble_signal(atoms.clone(), &verdicts, &half_width, &horizon_rat, atom_tail)?;
    if let Some(path) = &config.dump_signal {
        let _ = std::fs::write(path, signal_debug_json(&signal).to_string());
    }
    report.verdict = eval_mitl_three_valued(&signal, formula)?;
    report.wall_ms = start.elapsed().as_millis() as u64;
    Ok(report)
}

fn state_key(chain: &MarkovChain, state: &ChainState) -> u64 {
    match (chain, state) {
        (_, ChainState::Index(i)) => *i as u64,
        (MarkovChain::ImplicitCt(grid), ChainState::Tuple(t)) => grid
            .encode_u64(t)
            .expect("key space checked before the horizon loop"),
        _ => unreachable!(),
    }
}

/// Max absolute generator row sum; with normalized weights this bounds the
/// observable's time derivative.
fn generator_row_bound(chain: &SparseChain) -> f64 {
    chain
        .rows
        .iter()
        .map(|row| row.iter().map(|(_, v)| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Statistically decide a discrete-time formula on a DTMC: one atom test per
/// proposition per step before the horizon, tail labels from the invariant
/// estimate, then Buchi emptiness against the formula and its dual.
pub fn check_iltl(
    target: &CheckTarget,
    formula: &Formula,
    config: &CheckerConfig,
) -> Result<Report, CheckError> {
    let start = Instant::now();
    config.params.validate()?;
    let params = config.params;
    let MarkovChain::Explicit(chain) = &target.chain else {
        return Err(CheckError::KindMismatch);
    };
    if chain.kind != crate::markov::ChainKind::Dt {
        return Err(CheckError::KindMismatch);
    }
    let atoms = formula.atoms();
    let mut report = Report::new(Verdict::Unknown, formula, config);
    report.atom_count = atoms.len();
    report.state_count = target.chain.state_count_symbolic();

    let negated = formula.negate();
    let props = PropTable::from_formulas(&[formula, &negated]);
    for atom in &atoms {
        if !target.observables.contains(&atom.observable) {
            return Err(CheckError::UnknownObservable(atom.observable.clone()));
        }
    }
    let tail = if props.is_empty() {
        Vec::new()
    } else {
        tail_values(&props, target, params.delta_prime)?
    };

    // Steps until the law is close to the invariant estimate.
    let n = target.chain.state_count() as u64;
    let alpha_horizon = 0.5 * params.alpha.min(params.gamma);
    let mut rng = CounterRng::from_path(config.seed, &[0x9090]);
    let pool = thread_pool(config.workers);
    let sampler = target.chain.sampler();
    let outcome = pool.install(|| {
        duration_of_simulation(
            |t, r| {
                let (state, _) = sampler.dtmc(t as u64, r).expect("dtmc sampling");
                state_key(&target.chain, &state)
            },
            |r| target.invariant.sample_key(&target.chain, r),
            n,
            alpha_horizon,
            params.delta_prime,
            config.horizon_cap,
            &mut rng,
        )
    });
    let (t_inv, horizon_cert) = match outcome {
        Ok(v) => v,
        Err(StatsError::HorizonCap(cap)) => {
            report.notes.push(format!("horizon cap {cap} exhausted"));
            report.horizon_source = "horizon-cap".to_string();
            report.wall_ms = start.elapsed().as_millis() as u64;
            return Ok(report);
        }
        Err(e) => return Err(e.into()),
    };
    let steps = t_inv as u64;
    report.horizon = Some(t_inv);
    report.horizon_source = "doubling-loop".to_string();
    report.tested_horizons = horizon_cert.tested.clone();
    report.stages.insert(
        "horizon".to_string(),
        StageSamples {
            samples: horizon_cert.samples,
            events: 0,
        },
    );
    if steps > config.segment_cap {
        report
            .notes
            .push(format!("step count {steps} above cap {}", config.segment_cap));
        report.wall_ms = start.elapsed().as_millis() as u64;
        return Ok(report);
    }

    // One test per (step, proposition) with budgets over 2 m |AP|.
    let m = steps.max(1) as f64;
    let alpha_call = params.alpha / (2.0 * m * atoms.len().max(1) as f64);
    let gamma_call = params.gamma / (2.0 * m * atoms.len().max(1) as f64);
    report.per_call_alpha = Some(alpha_call);
    report.per_call_gamma = Some(gamma_call);
    report.split_factor = Some(2.0 * m * atoms.len().max(1) as f64);

    let pool = thread_pool(config.workers);
    let jobs: Vec<(u64, usize)> = (0..steps)
        .flat_map(|t| (0..props.len()).map(move |p| (t, p)))
        .collect();
    let labels: Vec<Result<(Verdict, u64, u64), CheckError>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(t, p)| {
                let prop_atom = props.atom(p);
                let c = prop_atom.threshold_f64();
                let mut rng = CounterRng::from_path(config.seed, &[0x22, t, p as u64]);
                let mut events = 0u64;
                if target.observables.is_indicator(&prop_atom.observable) {
                    let (v, cert) = atom_test_bernoulli(
                        |r| {
                            let (state, ev) = sampler.dtmc(t, r).expect("dtmc sampling");
                            events += ev;
                            target
                                .observables
                                .weight(&target.chain, &prop_atom.observable, &state)
                                == 1.0
                        },
                        c,
                        alpha_call,
                        gamma_call,
                        params.delta / 3.0,
                        &mut rng,
                        false,
                    );
                    Ok((v, cert.samples, events))
                } else {
                    let (v, cert) = atom_test_mean(
                        |r| {
                            let (state, ev) = sampler.dtmc(t, r).expect("dtmc sampling");
                            events += ev;
                            target
                                .observables
                                .weight(&target.chain, &prop_atom.observable, &state)
                        },
                        c,
                        alpha_call,
                        gamma_call,
                        params.delta / 3.0,
                        &mut rng,
                    )?;
                    Ok((v, cert.samples, events))
                }
            })
            .collect()
    });
    let mut letters: Vec<LetterConstraint> =
        vec![vec![None; props.len()]; steps as usize];
    let mut label_samples = 0u64;
    let mut label_events = 0u64;
    for (&(t, p), outcome) in jobs.iter().zip(labels) {
        let (v, samples, events) = outcome?;
        label_samples += samples;
        label_events += events;
        letters[t as usize][p] = match v {
            Verdict::Yes => Some(true),
            Verdict::No => Some(false),
            Verdict::Unknown => None,
        };
    }
    report.stages.insert(
        "labeling".to_string(),
        StageSamples {
            samples: label_samples,
            events: label_events,
        },
    );

    let mut tail_letter = 0u32;
    for (p, &v) in tail.iter().enumerate() {
        if v {
            tail_letter |= 1 << p;
        }
    }
    let word = LassoWord {
        props: props.len(),
        prefix: letters,
        tail: tail_letter,
    };
    let word_auto = lasso_automaton(&word);
    let b_formula = ltl_to_buchi(formula, &props);
    if let Some(path) = &config.dump_automaton {
        let dump = serde_json::json!({
            "word": buchi_debug_json(&word_auto),
            "formula": buchi_debug_json(&b_formula),
        });
        let _ = std::fs::write(path, dump.to_string());
    }
    if is_intersection_empty(&b_formula, &word_auto) {
        report.verdict = Verdict::No;
    } else {
        let b_negated = ltl_to_buchi(&negated, &props);
        if is_intersection_empty(&b_negated, &word_auto) {
            report.verdict = Verdict::Yes;
        } else {
            report.verdict = Verdict::Unknown;
        }
    }
    report.wall_ms = start.elapsed().as_millis() as u64;
    Ok(report)
}

/// Outcome of a full hybrid-system verification: the verdict for the
/// original formula plus what happened on the strengthened one.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyOutcome {
    /// Verdict transferred to the original system: Yes is sound; No only
    /// under the two-sided mode; Unknown otherwise.
    pub verdict: Verdict,
    pub conclusion: String,
    pub strengthened: Report,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dual: Option<Report>,
}

/// Reduce a continuous-time hybrid model, compute the error budget,
/// strengthen the formula, and decide it on the reduced chain.
pub fn verify_shs_ct(
    model: &HybridModelCt,
    formula: &Formula,
    pitch: f64,
    config: &CheckerConfig,
) -> Result<VerifyOutcome, CheckError> {
    let violations = crate::model::validate_model(&HybridModel::Ct(model.clone()));
    if !violations.is_empty() {
        return Err(CheckError::InvalidModel(violations));
    }
    let rate = config
        .contraction_rate
        .ok_or(CheckError::MissingContractivity)?;
    let gain = config
        .contraction_gain
        .ok_or(CheckError::MissingContractivity)?;

    // Normalize every observable the formula mentions, rescaling thresholds.
    let mut working = formula.clone();
    let mut model = model.clone();
    for atom in formula.atoms() {
        let obs = model
            .observables
            .get(&atom.observable)
            .ok_or_else(|| CheckError::UnknownObservable(atom.observable.clone()))?;
        let (scaled, rescaled) = normalize_observable(obs, &working)?;
        model.observables.insert(atom.observable.clone(), scaled);
        working = rescaled;
    }

    let partition = crate::reduction::partition_for(&model.flow_domains, pitch, config.state_cap)?;
    let chain = reduce_ct(&model, &partition)?;

    // Error budget per observable in the formula.
    let mut budgets = Vec::new();
    let mut margins: BTreeMap<String, BigRational> = BTreeMap::new();
    let mut weights: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for atom in working.atoms() {
        if margins.contains_key(&atom.observable) {
            continue;
        }
        let obs = &model.observables[&atom.observable];
        weights.insert(
            atom.observable.clone(),
            reduce_observable(obs, &partition, &model.flow_domains)?,
        );
        let initial_error =
            projection_error(&model.initial_density, &partition, obs, &model.flow_domains)?;
        let (rate_error, source) = match config.rate_error.get(&atom.observable) {
            Some(v) => (*v, RateErrorSource::User),
            None => (
                estimate_lambda(
                    &model,
                    &partition,
                    obs,
                    &config.lambda_time_grid,
                    config.state_cap,
                )?,
                RateErrorSource::Estimated,
            ),
        };
        let margin = ct_error_bound(rate_error, rate, gain, initial_error)?;
        budgets.push(ErrorBudget {
            observable: atom.observable.clone(),
            projection_error: Some(initial_error),
            rate_error: Some(rate_error),
            rate_error_source: Some(source),
            contraction_rate: Some(rate),
            contraction_gain: Some(gain),
            projection_tv: None,
            projection_tv_source: None,
            density_sup: None,
            margin,
        });
        margins.insert(atom.observable.clone(), rational_from_f64(margin));
    }
    let strengthened = strengthen(&working, &margins)?;

    // The estimate feeds the closeness test, whose accept threshold is
    // delta_prime / 6; keep the estimate well inside it.
    let invariant = estimate_invariant(&chain, config.params.delta_prime / 4.0, 10_000_000)?;
    let target = CheckTarget {
        chain: MarkovChain::Explicit(chain),
        observables: ChainObservables::Dense(weights),
        invariant: ChainInvariant::Estimate(invariant.weights),
    };

    decide_strengthened(
        &target,
        &working,
        &strengthened,
        budgets,
        &margins,
        config,
        check_mitl_ctmc,
    )
}

/// Reduce a discrete-time hybrid model and decide the strengthened formula.
pub fn verify_shs_dt(
    model: &HybridModelDt,
    formula: &Formula,
    pitch: f64,
    config: &CheckerConfig,
) -> Result<VerifyOutcome, CheckError> {
    let violations = crate::model::validate_model(&HybridModel::Dt(model.clone()));
    if !violations.is_empty() {
        return Err(CheckError::InvalidModel(violations));
    }
    let mut working = formula.clone();
    let mut model = model.clone();
    for atom in formula.atoms() {
        let obs = model
            .observables
            .get(&atom.observable)
            .ok_or_else(|| CheckError::UnknownObservable(atom.observable.clone()))?;
        let (scaled, rescaled) = normalize_observable(obs, &working)?;
        model.observables.insert(atom.observable.clone(), scaled);
        working = rescaled;
    }

    let partition = crate::reduction::partition_for(&model.flow_domains, pitch, config.state_cap)?;
    let chain = reduce_dt(&model, &partition)?;

    // Projection error in total variation, maximized along the reduced
    // trajectory; exact for identity and piecewise-uniform kernels, a
    // refined-grid estimate for Euler kernels.
    let (delta_p, tv_source) =
        dt_projection_error(&model, &partition, &chain, config.dt_projection_steps)?;
    let f_sup = model.density_sup_bound();
    let margin = dt_error_bound(delta_p, model.contractivity, f_sup)?;

    let mut budgets = Vec::new();
    let mut margins: BTreeMap<String, BigRational> = BTreeMap::new();
    let mut weights: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for atom in working.atoms() {
        if margins.contains_key(&atom.observable) {
            continue;
        }
        let obs = &model.observables[&atom.observable];
        weights.insert(
            atom.observable.clone(),
            reduce_observable(obs, &partition, &model.flow_domains)?,
        );
        budgets.push(ErrorBudget {
            observable: atom.observable.clone(),
            projection_error: None,
            rate_error: None,
            rate_error_source: None,
            contraction_rate: Some(model.contractivity),
            contraction_gain: None,
            projection_tv: Some(delta_p),
            projection_tv_source: Some(tv_source),
            density_sup: Some(f_sup),
            margin,
        });
        margins.insert(atom.observable.clone(), rational_from_f64(margin));
    }
    let strengthened = strengthen(&working, &margins)?;

    // The estimate feeds the closeness test, whose accept threshold is
    // delta_prime / 6; keep the estimate well inside it.
    let invariant = estimate_invariant(&chain, config.params.delta_prime / 4.0, 10_000_000)?;
    let target = CheckTarget {
        chain: MarkovChain::Explicit(chain),
        observables: ChainObservables::Dense(weights),
        invariant: ChainInvariant::Estimate(invariant.weights),
    };

    decide_strengthened(
        &target,
        &working,
        &strengthened,
        budgets,
        &margins,
        config,
        check_iltl,
    )
}

/// Shared decide-and-report tail of both verification pipelines, including
/// the infeasible-margin shortcut and the optional two-sided mode.
fn decide_strengthened(
    target: &CheckTarget,
    original: &Formula,
    strengthened: &Formula,
    budgets: Vec<ErrorBudget>,
    margins: &BTreeMap<String, BigRational>,
    config: &CheckerConfig,
    check: fn(&CheckTarget, &Formula, &CheckerConfig) -> Result<Report, CheckError>,
) -> Result<VerifyOutcome, CheckError> {
    // A margin pushing a threshold past the observable's attainable range
    // makes the strengthened atom unsatisfiable; report the failure without
    // sampling.
    for atom in strengthened.atoms() {
        let (lo, hi) = target.observables.range(&atom.observable);
        let c = atom.threshold_f64();
        let infeasible = match atom.rel {
            crate::logic::Rel::Gt | crate::logic::Rel::Ge => c >= hi,
            crate::logic::Rel::Lt | crate::logic::Rel::Le => c <= lo,
        };
        if infeasible {
            let mut report = Report::new(Verdict::No, strengthened, config);
            report.original_formula = Some(original.to_string());
            report.budgets = budgets;
            report
                .notes
                .push(format!(
                    "strengthening margin pushes atom {atom:?} outside the observable range [{lo}, {hi}]; budget exceeds observable range"
                ));
            return Ok(VerifyOutcome {
                verdict: Verdict::Unknown,
                conclusion: "strengthened formula unsatisfiable: budget exceeds observable range; inconclusive for the original formula".to_string(),
                strengthened: report,
                dual: None,
            });
        }
    }

    let mut report = check(target, strengthened, config)?;
    report.original_formula = Some(original.to_string());
    report.budgets = budgets;
    match report.verdict {
        Verdict::Yes => Ok(VerifyOutcome {
            verdict: Verdict::Yes,
            conclusion: "strengthened formula holds on the reduced chain: the original formula holds on the hybrid system (up to the statistical error bounds)".to_string(),
            strengthened: report,
            dual: None,
        }),
        Verdict::No | Verdict::Unknown if config.two_sided => {
            // Dual direction: a strengthened negation that holds refutes the
            // original formula definitively.
            let dual_formula = strengthen(&original.negate(), margins)?;
            let mut dual = check(target, &dual_formula, config)?;
            dual.original_formula = Some(original.negate().to_string());
            let verdict = if dual.verdict == Verdict::Yes {
                Verdict::No
            } else {
                Verdict::Unknown
            };
            let conclusion = match verdict {
                Verdict::No => "strengthened negation holds on the reduced chain: the original formula fails on the hybrid system".to_string(),
                _ => "strengthened formula fails and the dual check is inconclusive".to_string(),
            };
            Ok(VerifyOutcome {
                verdict,
                conclusion,
                strengthened: report,
                dual: Some(dual),
            })
        }
        v => Ok(VerifyOutcome {
            verdict: if v == Verdict::No {
                Verdict::Unknown
            } else {
                Verdict::Unknown
            },
            conclusion: match v {
                Verdict::No => "strengthened formula fails on the reduced chain; inconclusive for the original formula unless the dual strengthening of its negation is also checked".to_string(),
                _ => "statistical checking was inconclusive".to_string(),
            },
            strengthened: report,
            dual: None,
        }),
    }
}

/// Total-variation projection error along the reduced trajectory: one step
/// of the true kernel applied to the injected reduced state, against its own
/// cell averages, maximized over the first `steps` steps.
fn dt_projection_error(
    model: &HybridModelDt,
    partition: &Partition,
    chain: &SparseChain,
    steps: u64,
) -> Result<(f64, RateErrorSource), CheckError> {
    match &model.kernel {
        DtKernel::Identity => Ok((0.0, RateErrorSource::User)),
        DtKernel::PiecewiseUniform(entries) => {
            let mut p = project(&model.initial_density, partition);
            let mut worst = projection_tv(&model.initial_density, partition);
            let mut next = vec![0.0; chain.n];
            for _ in 0..steps {
                // True kernel applied to the injected state: each cell's
                // mass lands uniformly on its entries' target boxes.
                let mut pieces = Vec::new();
                for (i, cell) in partition.cells.iter().enumerate() {
                    if p.0[i] == 0.0 {
                        continue;
                    }
                    let center = cell.rect.center();
                    for e in entries {
                        let applies = e.from_mode == cell.mode
                            && matches!(&e.trigger, crate::model::KernelTrigger::Region(r) if r.contains(&center));
                        if applies {
                            pieces.push(crate::geom::DensityPiece {
                                mode: e.to_mode,
                                support: e.target.clone(),
                                mass: p.0[i] * e.weight,
                            });
                        }
                    }
                }
                if !pieces.is_empty() {
                    let g = crate::geom::PiecewiseDensity { pieces };
                    worst = worst.max(projection_tv(&g, partition));
                }
                chain.dt_step(&p.0, &mut next);
                std::mem::swap(&mut p.0, &mut next);
            }
            Ok((worst, RateErrorSource::Estimated))
        }
        DtKernel::Euler { dt } => {
            // Refined-grid estimate: apply the one-step kernel at pitch/2 to
            // the injected coarse state and compare with its cell averages.
            let fine = crate::partition::refine(partition, &model.flow_domains, 1 << 22)
                .map_err(ReduceError::from)?;
            let fine_model = HybridModelDt {
                kernel: DtKernel::Euler { dt: *dt },
                ..model.clone()
            };
            let fine_chain = reduce_dt(&fine_model, &fine)?;
            let children = 1usize << partition.dim;
            let parent: Vec<usize> = fine
                .cells
                .iter()
                .map(|c| {
                    let grid: Vec<u32> = c.grid.iter().map(|g| g / 2).collect();
                    partition.index_of(c.mode, &grid)
                })
                .collect();
            let mut p = project(&model.initial_density, partition);
            let mut worst = projection_tv(&model.initial_density, partition);
            let mut coarse_next = vec![0.0; chain.n];
            for _ in 0..steps {
                // Injected coarse state on the fine grid.
                let fine_state: Vec<f64> = (0..fine.len())
                    .map(|fc| p.0[parent[fc]] / children as f64)
                    .collect();
                let mut fine_next = vec![0.0; fine.len()];
                fine_chain.dt_step(&fine_state, &mut fine_next);
                // Coarse averages of the stepped fine state.
                let mut coarse_mass = vec![0.0; chain.n];
                for (fc, &v) in fine_next.iter().enumerate() {
                    coarse_mass[parent[fc]] += v;
                }
                let tv: f64 = fine_next
                    .iter()
                    .enumerate()
                    .map(|(fc, &v)| 0.5 * (v - coarse_mass[parent[fc]] / children as f64).abs())
                    .sum();
                worst = worst.max(tv);
                chain.dt_step(&p.0, &mut coarse_next);
                std::mem::swap(&mut p.0, &mut coarse_next);
            }
            Ok((worst, RateErrorSource::Estimated))
        }
    }
}

/// Debug JSON of a signal; the format is for inspection only and carries no
/// stability guarantee.
pub fn signal_debug_json(signal: &crate::signal::ThreeValuedSignal) -> serde_json::Value {
    serde_json::json!({
        "atoms": signal.atoms.iter().map(|a| format!("{a:?}")).collect::<Vec<_>>(),
        "boundaries": signal
            .boundaries
            .iter()
            .map(crate::logic::format_rational)
            .collect::<Vec<_>>(),
        "values": signal
            .values
            .iter()
            .map(|row| row.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>())
            .collect::<Vec<_>>(),
        "tail": signal.tail,
    })
}

/// Debug JSON of an automaton; inspection only.
pub fn buchi_debug_json(automaton: &crate::automata::Buchi) -> serde_json::Value {
    serde_json::json!({
        "props": automaton.props,
        "initial": automaton.initial,
        "accepting": automaton.accepting,
        "transitions": automaton
            .transitions
            .iter()
            .map(|row| {
                row.iter()
                    .map(|(label, target)| {
                        serde_json::json!({"pos": label.pos, "neg": label.neg, "to": target})
                    })
                    .collect::<Vec<_>>()
            })
            .collect::<Vec<_>>(),
    })
}
