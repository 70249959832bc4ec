//! Acceptance suite: one test per release criterion, each printing a
//! `criterion N: PASS` line (visible with `--nocapture`). Tolerances are
//! pinned in the assertions.
//!
//! Run with `cargo test -p shyver-cli --test acceptance -- --nocapture`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use rayon::prelude::*;

use shyver::automata::{accepts_lasso, ltl_to_buchi, PropTable};
use shyver::checker::{
    check_iltl, check_mitl_ctmc, verify_shs_ct, ChainInvariant, ChainObservables, CheckTarget,
    CheckerConfig,
};
use shyver::implicit::ContractingJumpGrid;
use shyver::logic::{parse_formula, Atom, Flavor, Formula, Rel};
use shyver::markov::{
    transient_distribution, ChainKind, MarkovChain, SparseChain,
};
use shyver::oracle::{dense_time_satisfies, lasso_satisfies, ConcreteSignal};
use shyver::partition::{build_grid_partition, inject, project, ProbVector};
use shyver::presets::{diffusion_on_unit_interval, two_mode_example};
use shyver::reduction::reduce_ct;
use shyver::rng::CounterRng;
use shyver::signal::{eval_mitl_three_valued, Three, ThreeValuedSignal};
use shyver::stats::{
    atom_test_bernoulli, closeness_test, CloseVerdict, StatParams, Verdict,
};

fn pass(n: u32, what: &str) {
    println!("criterion {n} ({what}): PASS");
}

// ---------------------------------------------------------------------------
// Criterion 1: worked-example reproduction
// ---------------------------------------------------------------------------

#[test]
fn criterion_1_worked_example_reproduction() {
    // Two-mode system, 90 cells: the pipeline must compute a strengthening
    // margin of at most 0.02 and answer Yes for both strengthened formulas
    // at alpha = gamma = delta = 0.05, in under 60 s per run, with at least
    // 19 of 20 seeds agreeing.
    let model = two_mode_example();
    let phi1 = parse_formula("true U (y2 > 0.25)", Flavor::Mitl).unwrap();
    let phi2 = parse_formula("(y1 > 0.5) U (y2 > 0.25)", Flavor::Mitl).unwrap();
    let mut agreeing = 0u32;
    for seed in 0..20u64 {
        let cfg = CheckerConfig {
            params: StatParams {
                alpha: 0.05,
                gamma: 0.05,
                delta: 0.05,
                delta_prime: 0.18,
            },
            seed: 1000 + seed,
            // Contraction constants and the rate-error term are user inputs
            // by design; the initial projection error is computed (it is 0
            // for this cell-aligned initial density), so the margin equals
            // 1.0 * 0.02 / 1.0 + 0 = 0.02.
            contraction_rate: Some(1.0),
            contraction_gain: Some(1.0),
            rate_error: BTreeMap::from([("y1".to_string(), 0.02), ("y2".to_string(), 0.02)]),
            derivative_bound: Some(1.0),
            ..CheckerConfig::default()
        };
        let start = std::time::Instant::now();
        let out1 = verify_shs_ct(&model, &phi1, 1.0 / 30.0, &cfg).unwrap();
        let out2 = verify_shs_ct(&model, &phi2, 1.0 / 30.0, &cfg).unwrap();
        let elapsed = start.elapsed();
        for outcome in [&out1, &out2] {
            for budget in &outcome.strengthened.budgets {
                assert!(
                    budget.margin <= 0.02 + 1e-12,
                    "seed {seed}: margin {} above 0.02",
                    budget.margin
                );
                assert_eq!(budget.projection_error, Some(0.0));
            }
        }
        // The strengthened goal atom must be y2 > 0.27.
        assert!(
            out1.strengthened.checked_formula.contains("y2 > 0.27"),
            "{}",
            out1.strengthened.checked_formula
        );
        assert!(
            elapsed.as_secs() < 60,
            "seed {seed}: both checks took {elapsed:?}, budget is 60 s per run"
        );
        if out1.verdict == Verdict::Yes && out2.verdict == Verdict::Yes {
            agreeing += 1;
        }
    }
    assert!(agreeing >= 19, "only {agreeing}/20 seeds answered Yes twice");
    pass(1, "worked-example reproduction");
}

// ---------------------------------------------------------------------------
// Criterion 2: reduction correctness
// ---------------------------------------------------------------------------

/// Exact cell masses at time `t` for reflecting unit-diffusion on [0,1]
/// started uniform on [0,1/2]: the cosine series of the heat equation with
/// D = 1/2, integrated over each cell.
fn heat_cell_masses(cells: &[(f64, f64)], t: f64) -> Vec<f64> {
    let d = 0.5;
    cells
        .iter()
        .map(|&(a, b)| {
            let mut mass = b - a;
            for k in 1..400 {
                let kf = k as f64 * std::f64::consts::PI;
                let coeff = 4.0 / kf * (kf / 2.0).sin();
                let decay = (-kf * kf * d * t).exp();
                mass += coeff * decay * ((kf * b).sin() - (kf * a).sin()) / kf;
            }
            mass
        })
        .collect()
}

#[test]
fn criterion_2_reduction_correctness() {
    // Generator rows close to zero sum on the worked example.
    let model = two_mode_example();
    let part = build_grid_partition(&model.flow_domains, 1.0 / 30.0, 1 << 22).unwrap();
    let chain = reduce_ct(&model, &part).unwrap();
    for (i, row) in chain.rows.iter().enumerate() {
        let sum: f64 = row.iter().map(|(_, v)| v).sum();
        assert!(sum.abs() < 1e-9, "row {i} sums to {sum}");
    }

    // Diffusion benchmark against the analytic series, in total variation,
    // improving strictly under refinement.
    let heat = diffusion_on_unit_interval(0.0, 0.0, 0.5);
    let tv_at = |pitch: f64| -> f64 {
        let part = build_grid_partition(&heat.flow_domains, pitch, 1 << 22).unwrap();
        let chain = reduce_ct(&heat, &part).unwrap();
        let p = transient_distribution(&chain, 0.1, 1 << 20).unwrap();
        let cells: Vec<(f64, f64)> = part
            .cells
            .iter()
            .map(|c| (c.rect.lo[0], c.rect.hi[0]))
            .collect();
        let exact = heat_cell_masses(&cells, 0.1);
        0.5 * p
            .0
            .iter()
            .zip(&exact)
            .map(|(x, y)| (x - y).abs())
            .sum::<f64>()
    };
    let coarse = tv_at(0.05);
    let fine = tv_at(0.025);
    assert!(coarse < 0.02, "tv at pitch 0.05 is {coarse}");
    assert!(fine < coarse, "refinement must improve: {fine} vs {coarse}");
    pass(2, "reduction correctness");
}

// ---------------------------------------------------------------------------
// Criterion 3: projection-injection identity
// ---------------------------------------------------------------------------

#[test]
fn criterion_3_projection_injection_identity() {
    let mut rng = CounterRng::new(33);
    let mut partitions = Vec::new();
    let model = two_mode_example();
    for n in [3u32, 5, 10, 15, 30] {
        partitions.push(build_grid_partition(&model.flow_domains, 1.0 / n as f64, 1 << 22).unwrap());
    }
    let square = vec![shyver::geom::Rect::new(vec![0.0, 0.0], vec![1.0, 1.0])];
    for n in [2u32, 4, 5, 8, 10] {
        partitions.push(build_grid_partition(&square, 1.0 / n as f64, 1 << 22).unwrap());
    }
    assert_eq!(partitions.len(), 10);
    for part in &partitions {
        for _ in 0..100 {
            let mut w: Vec<f64> = (0..part.len()).map(|_| rng.next_f64()).collect();
            let total: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v /= total);
            let p = ProbVector(w);
            let back = project(&inject(&p, part), part);
            for (a, b) in p.0.iter().zip(&back.0) {
                assert!(
                    (a - b).abs() < 1e-12,
                    "projection-injection drift of {}",
                    (a - b).abs()
                );
            }
        }
    }
    pass(3, "projection-injection identity over 1000 vectors x 10 partitions");
}

// ---------------------------------------------------------------------------
// Criterion 4: statistical calibration
// ---------------------------------------------------------------------------

#[test]
fn criterion_4_statistical_calibration() {
    let alpha = 0.05;
    let gamma = 0.05;
    for (theta, c, delta) in [(0.6, 0.5, 0.05), (0.4, 0.5, 0.05), (0.9, 0.5, 0.1)] {
        let trials = 500u64;
        let outcomes: Vec<Verdict> = (0..trials)
            .into_par_iter()
            .map(|k| {
                let mut rng = CounterRng::from_path(40_000 + k, &[4]);
                let (v, _) = atom_test_bernoulli(
                    |r| r.next_f64() < theta,
                    c,
                    alpha,
                    gamma,
                    delta,
                    &mut rng,
                    false,
                );
                v
            })
            .collect();
        let truth = theta > c;
        let wrong = outcomes
            .iter()
            .filter(|v| matches!(v, Verdict::Yes if !truth) || matches!(v, Verdict::No if truth))
            .count() as f64
            / trials as f64;
        let unknown =
            outcomes.iter().filter(|v| matches!(v, Verdict::Unknown)).count() as f64 / trials as f64;
        assert!(wrong <= alpha + 0.02, "theta {theta}: wrong rate {wrong}");
        assert!(unknown <= gamma + 0.02, "theta {theta}: unknown rate {unknown}");
    }

    // Closeness test, both directions of the guarantee at n = 100.
    let n = 100u64;
    let trials = 200u64;
    let accepts = (0..trials)
        .into_par_iter()
        .filter(|&k| {
            let mut rng = CounterRng::from_path(50_000 + k, &[5]);
            let (v, _) =
                closeness_test(|r| r.below(n), |r| r.below(n), n, 0.1, 0.3, &mut rng).unwrap();
            v == CloseVerdict::Accept
        })
        .count();
    assert!(accepts as f64 / trials as f64 >= 0.9, "accept rate {accepts}/{trials}");
    let rejects = (0..trials)
        .into_par_iter()
        .filter(|&k| {
            let mut rng = CounterRng::from_path(60_000 + k, &[6]);
            let (v, _) = closeness_test(|_| 0, |_| 1, n, 0.1, 0.3, &mut rng).unwrap();
            v == CloseVerdict::Reject
        })
        .count();
    assert!(rejects as f64 / trials as f64 >= 0.9, "reject rate {rejects}/{trials}");
    pass(4, "statistical calibration of the atom test and the closeness test");
}

// ---------------------------------------------------------------------------
// Criterion 5: oracle equivalence
// ---------------------------------------------------------------------------

fn random_ergodic_dtmc(rng: &mut CounterRng, n: usize) -> SparseChain {
    let rows: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|_| {
            let mut w: Vec<f64> = (0..n).map(|_| rng.next_f64()).collect();
            let total: f64 = w.iter().sum();
            // Mix with the uniform kernel so every chain is irreducible and
            // aperiodic.
            w.iter_mut()
                .for_each(|v| *v = 0.9 * *v / total + 0.1 / n as f64);
            w.into_iter().enumerate().collect()
        })
        .collect();
    let start = rng.below(n as u64) as usize;
    SparseChain {
        kind: ChainKind::Dt,
        n,
        rows,
        initial: ProbVector::point_mass(n, start),
    }
}

#[test]
fn criterion_5_oracle_equivalence() {
    // (a) Discrete-time verdicts match exact matrix-power evaluation on 50
    // random chains with margins above delta.
    let alpha = 0.05;
    let gamma = 0.05;
    let delta = 0.1;
    let delta_prime = 0.2;
    let mut built = 0u32;
    let mut agree = 0u32;
    let mut rng = CounterRng::new(777);
    let formula_pool = [
        "w > CVAL",
        "X (w > CVAL)",
        "true U (w > CVAL)",
        "false R (w > CVAL)",
        "(w > CVAL) U (w <= CVAL)",
    ];
    while built < 50 {
        let n = 2 + rng.below(7) as usize;
        let chain = random_ergodic_dtmc(&mut rng, n);
        let ones = 1 + rng.below(n as u64 - 1) as usize;
        let mut weights = vec![0.0; n];
        for i in 0..ones {
            weights[i] = 1.0;
        }
        // Exact trajectory until it reaches the invariant.
        let mut traj = Vec::new();
        let mut p = chain.initial.0.clone();
        let mut next = vec![0.0; n];
        let invariant = loop {
            traj.push(p.clone());
            chain.dt_step(&p, &mut next);
            let change: f64 = p.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
            std::mem::swap(&mut p, &mut next);
            if change < 1e-12 || traj.len() > 5000 {
                break p.clone();
            }
        };
        let y: Vec<f64> = traj
            .iter()
            .map(|p| p.iter().zip(&weights).map(|(a, b)| a * b).sum())
            .collect();
        let y_inv: f64 = invariant.iter().zip(&weights).map(|(a, b)| a * b).sum();
        // A threshold with margin > delta everywhere and > delta_prime at
        // the invariant; skip the chain when none exists.
        let candidate = (1..20)
            .map(|k| k as f64 / 20.0)
            .filter(|c| (y_inv - c).abs() > delta_prime + 0.05)
            .max_by(|a, b| {
                let margin = |c: &f64| {
                    y.iter()
                        .map(|v| (v - c).abs())
                        .fold(f64::INFINITY, f64::min)
                };
                margin(a).total_cmp(&margin(b))
            });
        let Some(c) = candidate else { continue };
        let min_margin = y.iter().map(|v| (v - c).abs()).fold(f64::INFINITY, f64::min);
        if min_margin <= delta + 0.02 {
            continue;
        }
        built += 1;

        let text = formula_pool[(built as usize) % formula_pool.len()].replace("CVAL", &c.to_string());
        let formula = parse_formula(&text, Flavor::Iltl).unwrap();

        // Exact verdict on the exact label word.
        let negated = formula.negate();
        let table = PropTable::from_formulas(&[&formula, &negated]);
        let letters: Vec<u32> = y.iter().map(|v| u32::from(*v > c)).collect();
        let tail = u32::from(y_inv > c);
        let exact = lasso_satisfies(&formula, &table, &letters, &[tail]);

        let target = CheckTarget {
            chain: MarkovChain::Explicit(chain),
            observables: ChainObservables::Dense(BTreeMap::from([("w".to_string(), weights)])),
            invariant: ChainInvariant::Estimate(ProbVector(invariant)),
        };
        let cfg = CheckerConfig {
            params: StatParams {
                alpha,
                gamma,
                delta,
                delta_prime,
            },
            seed: 5000 + built as u64,
            ..CheckerConfig::default()
        };
        let report = check_iltl(&target, &formula, &cfg).unwrap();
        let expected = if exact { Verdict::Yes } else { Verdict::No };
        if report.verdict == expected {
            agree += 1;
        }
    }
    let required = ((1.0 - (alpha + gamma) - 0.02) * 50.0).ceil() as u32;
    assert!(
        agree >= required,
        "only {agree}/50 runs matched the matrix-power oracle (need {required})"
    );

    // (b) The dense-time monitor matches completion enumeration exactly on
    // the exhaustive small-signal corpus.
    let formulas: Vec<Formula> = [
        "true U[0,2] (a > 0)",
        "(a > 0) U[0,2] (b > 0)",
        "(a > 0) U[1,3] (b > 0)",
        "false R[0,2] (a > 0)",
        "(b > 0) R[0,3] (a > 0)",
        "(a > 0) & ((b > 0) U[0,2] (a > 0))",
        "true U[0,2] ((a > 0) & (b > 0))",
        "(a > 0) | ((a > 0) R[1,2] (b > 0))",
        "true U (a > 0)",
        "false R (a > 0)",
    ]
    .iter()
    .map(|t| parse_formula(t, Flavor::Mitl).unwrap())
    .collect();
    let atom = |name: &str| Atom {
        observable: name.to_string(),
        rel: Rel::Gt,
        threshold: shyver::logic::parse_rational("0").unwrap(),
    };
    let atoms = vec![atom("a"), atom("b")];
    let mut checked = 0u64;
    for code in 0..3u32.pow(6) {
        let mut digits = Vec::new();
        let mut c = code;
        for _ in 0..6 {
            digits.push(c % 3);
            c /= 3;
        }
        if digits.iter().filter(|&&d| d == 2).count() > 2 {
            continue;
        }
        for tail_code in 0..4u32 {
            let tail = vec![tail_code & 1 == 1, tail_code & 2 == 2];
            let values: Vec<Vec<Three>> = (0..3)
                .map(|k| {
                    (0..2)
                        .map(|j| match digits[k * 2 + j] {
                            0 => Three::False,
                            1 => Three::True,
                            _ => Three::Unknown,
                        })
                        .collect()
                })
                .collect();
            let sig = ThreeValuedSignal {
                atoms: atoms.clone(),
                boundaries: (0..=3)
                    .map(|k| shyver::intervals::Rat::from_integer(k.into()))
                    .collect(),
                values: values.clone(),
                tail: tail.clone(),
            };
            let slots: Vec<(usize, usize)> = (0..3)
                .flat_map(|k| (0..2).map(move |j| (k, j)))
                .filter(|&(k, j)| values[k][j] == Three::Unknown)
                .collect();
            for formula in &formulas {
                let verdict = eval_mitl_three_valued(&sig, formula).unwrap();
                let mut all_true = true;
                let mut all_false = true;
                for fill in 0..(1u32 << slots.len()) {
                    let mut completed: Vec<Vec<bool>> = values
                        .iter()
                        .map(|row| row.iter().map(|v| matches!(v, Three::True)).collect())
                        .collect();
                    for (bit, &(k, j)) in slots.iter().enumerate() {
                        completed[k][j] = fill >> bit & 1 == 1;
                    }
                    let two = ConcreteSignal {
                        atoms: atoms.clone(),
                        boundaries: sig.boundaries.clone(),
                        values: completed,
                        tail: tail.clone(),
                    };
                    let sat = dense_time_satisfies(formula, &two);
                    all_true &= sat;
                    all_false &= !sat;
                }
                let expected = if all_true {
                    Verdict::Yes
                } else if all_false {
                    Verdict::No
                } else {
                    Verdict::Unknown
                };
                assert_eq!(verdict, expected, "formula {formula} values {values:?}");
                checked += 1;
            }
        }
    }
    assert!(checked > 10_000);
    pass(5, "oracle equivalence of both deciders");
}

// ---------------------------------------------------------------------------
// Criterion 6: tableau equals lasso semantics, exhaustively
// ---------------------------------------------------------------------------

fn formulas_up_to(max_nodes: usize) -> Vec<Formula> {
    let leaves: Vec<Formula> = ["true", "false", "p > 0", "p <= 0", "q > 0", "q <= 0"]
        .iter()
        .map(|t| parse_formula(t, Flavor::Iltl).unwrap())
        .collect();
    let mut by_size: Vec<Vec<Formula>> = vec![Vec::new(); max_nodes + 1];
    by_size[1] = leaves;
    for size in 2..=max_nodes {
        let mut level = Vec::new();
        for f in &by_size[size - 1] {
            level.push(Formula::Next(Box::new(f.clone())));
        }
        for left in 1..size - 1 {
            let right = size - 1 - left;
            for a in &by_size[left] {
                for b in &by_size[right] {
                    level.push(Formula::And(Box::new(a.clone()), Box::new(b.clone())));
                    level.push(Formula::Or(Box::new(a.clone()), Box::new(b.clone())));
                    level.push(Formula::Until(None, Box::new(a.clone()), Box::new(b.clone())));
                    level.push(Formula::Release(None, Box::new(a.clone()), Box::new(b.clone())));
                }
            }
        }
        by_size[size] = level;
    }
    by_size.into_iter().flatten().collect()
}

#[test]
fn criterion_6_tableau_equals_lasso_semantics() {
    let formulas = formulas_up_to(4);
    assert!(formulas.len() > 400, "formula corpus: {}", formulas.len());
    // All lasso shapes with prefix+cycle <= 6 over the 4-letter alphabet.
    let mut lassos: Vec<(Vec<u32>, Vec<u32>)> = Vec::new();
    for total in 1..=6usize {
        for cycle_len in 1..=total {
            let prefix_len = total - cycle_len;
            for code in 0..(4u64.pow(total as u32)) {
                let letters: Vec<u32> =
                    (0..total).map(|i| (code >> (2 * i) & 3) as u32).collect();
                let (prefix, cycle) = letters.split_at(prefix_len);
                lassos.push((prefix.to_vec(), cycle.to_vec()));
            }
        }
    }
    let mismatches: usize = formulas
        .par_iter()
        .map(|formula| {
            let table = PropTable::from_formulas(&[formula]);
            let automaton = ltl_to_buchi(formula, &table);
            lassos
                .iter()
                .filter(|(prefix, cycle)| {
                    let direct = lasso_satisfies(formula, &table, prefix, cycle);
                    let accepted = accepts_lasso(&automaton, prefix, cycle);
                    direct != accepted
                })
                .count()
        })
        .sum();
    assert_eq!(mismatches, 0, "tableau disagreed with lasso semantics");
    pass(
        6,
        "tableau automata equal lasso semantics on the exhaustive corpus",
    );
}

// ---------------------------------------------------------------------------
// Criterion 7: case-study scaling
// ---------------------------------------------------------------------------

#[test]
fn criterion_7_case_study_scaling() {
    // (a) Per-sample simulated-event count at a fixed horizon: essentially
    // independent of the grid resolution, growing only with the tuple
    // length, while the state count explodes. Each coordinate takes at most
    // eta-1 inward moves ever, so at long horizons the count is dominated by
    // the mode switches plus a bounded per-axis term.
    let horizon = 50_000.0;
    let mean_events = |n: usize, eta: u32| -> f64 {
        let grid = ContractingJumpGrid::with_default_matrices(n, 4, eta, 1);
        let chain = MarkovChain::ImplicitCt(grid);
        let mut rng = CounterRng::from_path(9090, &[n as u64, eta as u64]);
        let samples = 2000;
        let total: u64 = (0..samples)
            .map(|_| chain.ssa_sample(horizon, &mut rng, None).unwrap().1)
            .sum();
        total as f64 / samples as f64
    };
    let e3 = mean_events(3, 10);
    let e5 = mean_events(5, 10);
    let e8 = mean_events(8, 10);
    assert!(
        e8 > e5 && e5 > e3,
        "event count must grow with tuple length: n=3 {e3}, n=5 {e5}, n=8 {e8}"
    );
    // State count grows by 20^5 from n=3 to n=8 while events stay in a
    // narrow band.
    assert!(
        e8 / e3 < 1.1,
        "event count tracks tuple length, not state count: {e3} vs {e8}"
    );
    let e5_fine = mean_events(5, 20);
    assert!(
        (e5 - e5_fine).abs() / e5 < 0.05,
        "event count must be grid-insensitive: eta 10 {e5} vs eta 20 {e5_fine}"
    );

    // (b) End-to-end check of the 1.28e7-state instance in under 10 minutes.
    let target = CheckTarget {
        chain: MarkovChain::ImplicitCt(ContractingJumpGrid::with_default_matrices(5, 4, 10, 1)),
        observables: ChainObservables::Implicit {
            name: "w".to_string(),
        },
        invariant: ChainInvariant::ImplicitAnalytic,
    };
    let cfg = CheckerConfig {
        params: StatParams {
            alpha: 0.1,
            gamma: 0.1,
            delta: 0.1,
            delta_prime: 0.1,
        },
        seed: 7,
        derivative_bound: Some(0.07),
        ..CheckerConfig::default()
    };
    let formula = parse_formula("true U[0,1000] (w > 0.2)", Flavor::Mitl).unwrap();
    let start = std::time::Instant::now();
    let report = check_mitl_ctmc(&target, &formula, &cfg).unwrap();
    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs() < 600,
        "end-to-end run took {elapsed:?}, budget 10 minutes"
    );
    assert_eq!(report.state_count, "4*20^5");
    // Fixture verdict established by a first high-budget run: the outer-pair
    // mass rises from 0.2304 above the strengthened threshold before
    // contracting to the origin.
    assert_eq!(report.verdict, Verdict::Yes, "{report:?}");

    // Seed-stability regression on the smaller instance.
    let target3 = CheckTarget {
        chain: MarkovChain::ImplicitCt(ContractingJumpGrid::with_default_matrices(3, 4, 10, 1)),
        observables: ChainObservables::Implicit {
            name: "w".to_string(),
        },
        invariant: ChainInvariant::ImplicitAnalytic,
    };
    let f3 = parse_formula("true U[0,200] (w > 0.2)", Flavor::Mitl).unwrap();
    let verdicts: Vec<Verdict> = (0..20u64)
        .map(|seed| {
            let cfg = CheckerConfig {
                seed: 7000 + seed,
                ..cfg.clone()
            };
            check_mitl_ctmc(&target3, &f3, &cfg).unwrap().verdict
        })
        .collect();
    assert!(
        verdicts.iter().all(|v| *v == verdicts[0]),
        "verdict must be seed-stable: {verdicts:?}"
    );
    assert_eq!(verdicts[0], Verdict::Yes);
    pass(7, "case-study scaling and the 1.28e7-state end-to-end run");
}

// ---------------------------------------------------------------------------
// Criterion 8: reproducibility
// ---------------------------------------------------------------------------

fn shyver_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_shyver"))
}

fn assets() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets")
}

#[test]
fn criterion_8_manifest_replay_reproduces_runs() {
    let dir = std::env::temp_dir().join("shyver_acceptance_replay");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    let chain = dir.join("chain.txt");
    let status = shyver_bin()
        .args(["reduce", "--model"])
        .arg(assets().join("two_mode.json"))
        .args(["--pitch", "0.1", "--out"])
        .arg(&chain)
        .status()
        .unwrap();
    assert!(status.success());

    let manifest = dir.join("run.manifest.json");
    let report1 = dir.join("report1.json");
    let first = shyver_bin()
        .args(["check", "--chain"])
        .arg(&chain)
        .args([
            "--formula",
            "true U[0,4] (y2 > 0.3)",
            "--seed",
            "21",
            "--h-bound",
            "1",
            "--delta-prime",
            "0.18",
        ])
        .arg("--manifest-out")
        .arg(&manifest)
        .arg("--out")
        .arg(&report1)
        .output()
        .unwrap();
    assert_eq!(first.status.code(), Some(0), "{first:?}");

    let report2 = dir.join("report2.json");
    let mut m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&manifest).unwrap()).unwrap();
    m["outputs"]["report"] = serde_json::json!(report2);
    let manifest2 = dir.join("replay.manifest.json");
    std::fs::write(&manifest2, m.to_string()).unwrap();
    let second = shyver_bin()
        .args(["check", "--manifest"])
        .arg(&manifest2)
        .output()
        .unwrap();
    assert_eq!(second.status.code(), Some(0), "{second:?}");

    let load = |path: &Path| -> serde_json::Value {
        let mut v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("wall_ms");
        v
    };
    let a = load(&report1);
    let b = load(&report2);
    // Same verdict, same sample counts, byte-identical content modulo the
    // timing field.
    assert_eq!(a["verdict"], b["verdict"]);
    assert_eq!(a["stages"], b["stages"]);
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&b).unwrap()
    );
    pass(8, "manifest replay reproduces verdict, samples, and report bytes");
}
