//! Command implementations behind the `shyver` binary.
//!
//! Exit codes are part of the interface: for `check`, 0 = Yes, 1 = No,
//! 4 = Unknown, 2 = input error, 5 = cap exhaustion; for `reduce`, 2 = model
//! validation failure and 3 = reduction failure. Every run that samples
//! writes its manifest first, and replaying a manifest reproduces the
//! verdict and sample counts exactly.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use shyver::checker::{
    check_iltl, check_mitl_ctmc, verify_shs_ct, verify_shs_dt, ChainInvariant, ChainObservables,
    CheckTarget, CheckerConfig, Report,
};
use shyver::implicit::ContractingJumpGrid;
use shyver::logic::{parse_formula, Flavor, Formula};
use shyver::markov::{
    estimate_invariant, read_chain, transient_distribution, write_chain, ChainKind, ChainState,
    MarkovChain,
};
use shyver::model::{load_model, validate_model, HybridModel};
use shyver::partition::ProbVector;
use shyver::reduction::{
    partition_for, projection_error, reduce_ct, reduce_dt, reduce_observable, ChainSidecar,
    ErrorBudget,
};
use shyver::rng::CounterRng;
use shyver::stats::Verdict;

pub const EXIT_YES: i32 = 0;
pub const EXIT_NO: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_REDUCE: i32 = 3;
pub const EXIT_UNKNOWN: i32 = 4;
pub const EXIT_CAP: i32 = 5;

/// Everything needed to reproduce a run bit-exactly, written before any
/// sampling starts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub inputs: ManifestInputs,
    pub config: CheckerConfig,
    pub outputs: ManifestOutputs,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ManifestInputs {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chain: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pitch: Option<f64>,
    /// Formula text, inlined so the manifest is self-contained.
    pub formula: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ManifestOutputs {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
}

fn fail(code: i32, msg: impl std::fmt::Display) -> i32 {
    eprintln!("error: {msg}");
    code
}

// ---------------------------------------------------------------------------
// reduce
// ---------------------------------------------------------------------------

pub struct ReduceArgs {
    pub model: PathBuf,
    pub pitch: f64,
    pub out: PathBuf,
    pub config: CheckerConfig,
}

pub fn cmd_reduce(args: &ReduceArgs) -> i32 {
    let text = match std::fs::read_to_string(&args.model) {
        Ok(t) => t,
        Err(e) => return fail(EXIT_INPUT, format!("{}: {e}", args.model.display())),
    };
    // Implicit family descriptors pass through without materialization;
    // they carry family parameters instead of a model `kind`.
    let looks_like_family = serde_json::from_str::<serde_json::Value>(&text)
        .map(|v| v.get("kind").is_none() && (v.get("lambda1").is_some() || v.get("family").is_some()))
        .unwrap_or(false);
    if looks_like_family {
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        let family: ContractingJumpGrid = match serde_json::from_value(
            value.get("family").cloned().unwrap_or(value),
        ) {
            Ok(f) => f,
            Err(e) => return fail(EXIT_INPUT, e),
        };
        let descriptor = serde_json::json!({
            "kind": "implicit_ct",
            "state_count": family.state_count_symbolic(),
            "state_count_approx": family.state_count(),
            "rate_bound": family.rate_bound(),
            "family": family,
        });
        if let Err(e) = std::fs::write(&args.out, serde_json::to_string_pretty(&descriptor).unwrap())
        {
            return fail(EXIT_REDUCE, e);
        }
        println!(
            "implicit chain descriptor: {} states",
            family.state_count_symbolic()
        );
        return EXIT_YES;
    }

    let model = match shyver::model::parse_model(&text) {
        Ok(m) => m,
        Err(e) => return fail(EXIT_INPUT, e),
    };
    let violations = validate_model(&model);
    if !violations.is_empty() {
        for v in &violations {
            eprintln!("invalid model: {v}");
        }
        return EXIT_INPUT;
    }
    let result = match &model {
        HybridModel::Ct(m) => reduce_model_ct(m, args),
        HybridModel::Dt(m) => reduce_model_dt(m, args),
    };
    match result {
        Ok(states) => {
            println!("reduced chain: {states} states -> {}", args.out.display());
            EXIT_YES
        }
        Err(e) => fail(EXIT_REDUCE, e),
    }
}

fn reduce_model_ct(
    model: &shyver::model::HybridModelCt,
    args: &ReduceArgs,
) -> Result<usize, Box<dyn std::error::Error>> {
    let partition = partition_for(&model.flow_domains, args.pitch, args.config.state_cap)?;
    let chain = reduce_ct(model, &partition)?;
    write_chain(&chain, &args.out)?;
    let mut observables = BTreeMap::new();
    let mut budgets = Vec::new();
    for (name, obs) in &model.observables {
        observables.insert(
            name.clone(),
            reduce_observable(obs, &partition, &model.flow_domains)?,
        );
        let initial_error =
            projection_error(&model.initial_density, &partition, obs, &model.flow_domains)?;
        let rate_error = args.config.rate_error.get(name).copied();
        let margin = match (rate_error, args.config.contraction_rate, args.config.contraction_gain)
        {
            (Some(l), Some(a), Some(b)) => shyver::reduction::ct_error_bound(l, a, b, initial_error)?,
            _ => initial_error,
        };
        budgets.push(ErrorBudget {
            observable: name.clone(),
            projection_error: Some(initial_error),
            rate_error,
            rate_error_source: rate_error.map(|_| shyver::reduction::RateErrorSource::User),
            contraction_rate: args.config.contraction_rate,
            contraction_gain: args.config.contraction_gain,
            projection_tv: None,
            projection_tv_source: None,
            density_sup: None,
            margin,
        });
    }
    let sidecar = ChainSidecar::new(ChainKind::Ct, &partition, &model.modes, observables, budgets);
    let meta = args.out.with_extension("meta.json");
    std::fs::write(meta, serde_json::to_string_pretty(&sidecar)?)?;
    Ok(chain.n)
}

fn reduce_model_dt(
    model: &shyver::model::HybridModelDt,
    args: &ReduceArgs,
) -> Result<usize, Box<dyn std::error::Error>> {
    let partition = partition_for(&model.flow_domains, args.pitch, args.config.state_cap)?;
    let chain = reduce_dt(model, &partition)?;
    write_chain(&chain, &args.out)?;
    let mut observables = BTreeMap::new();
    for (name, obs) in &model.observables {
        observables.insert(
            name.clone(),
            reduce_observable(obs, &partition, &model.flow_domains)?,
        );
    }
    let sidecar =
        ChainSidecar::new(ChainKind::Dt, &partition, &model.modes, observables, Vec::new());
    std::fs::write(
        args.out.with_extension("meta.json"),
        serde_json::to_string_pretty(&sidecar)?,
    )?;
    Ok(chain.n)
}

// ---------------------------------------------------------------------------
// check
// ---------------------------------------------------------------------------

pub struct CheckArgs {
    pub chain: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub pitch: Option<f64>,
    pub formula: Option<String>,
    pub formula_file: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub manifest_out: Option<PathBuf>,
    pub replay: Option<PathBuf>,
    pub config: CheckerConfig,
}

pub fn cmd_check(args: &CheckArgs) -> i32 {
    // Replaying a manifest overrides everything else.
    let (inputs, config, report_path) = if let Some(path) = &args.replay {
        let manifest: RunManifest = match std::fs::read_to_string(path)
            .map_err(|e| e.to_string())
            .and_then(|t| serde_json::from_str(&t).map_err(|e| e.to_string()))
        {
            Ok(m) => m,
            Err(e) => return fail(EXIT_INPUT, format!("manifest {}: {e}", path.display())),
        };
        (manifest.inputs, manifest.config, manifest.outputs.report)
    } else {
        let formula = match (&args.formula, &args.formula_file) {
            (Some(f), _) => f.clone(),
            (None, Some(path)) => match std::fs::read_to_string(path) {
                Ok(t) => t.trim().to_string(),
                Err(e) => return fail(EXIT_INPUT, format!("{}: {e}", path.display())),
            },
            (None, None) => return fail(EXIT_INPUT, "a formula is required"),
        };
        (
            ManifestInputs {
                chain: args.chain.clone(),
                model: args.model.clone(),
                pitch: args.pitch,
                formula,
            },
            args.config.clone(),
            args.out.clone(),
        )
    };

    // The manifest is written before any sampling begins.
    if let Some(path) = &args.manifest_out {
        let manifest = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: "check".to_string(),
            inputs: inputs.clone(),
            config: config.clone(),
            outputs: ManifestOutputs {
                report: report_path.clone(),
            },
        };
        if let Err(e) = std::fs::write(path, serde_json::to_string_pretty(&manifest).unwrap()) {
            return fail(EXIT_INPUT, e);
        }
    }

    match run_check(&inputs, &config) {
        Ok(outcome) => {
            let verdict = outcome.verdict();
            println!(
                "{}",
                match verdict {
                    Verdict::Yes => "YES",
                    Verdict::No => "NO",
                    Verdict::Unknown => "UNKNOWN",
                }
            );
            if let Some(path) = &report_path {
                if let Err(e) = std::fs::write(path, outcome.to_json()) {
                    return fail(EXIT_INPUT, e);
                }
            } else {
                println!("{}", outcome.to_json());
            }
            if outcome.cap_exhausted() {
                return EXIT_CAP;
            }
            match verdict {
                Verdict::Yes => EXIT_YES,
                Verdict::No => EXIT_NO,
                Verdict::Unknown => EXIT_UNKNOWN,
            }
        }
        Err(e) => fail(EXIT_INPUT, e),
    }
}

pub enum CheckOutcome {
    Chain(Report),
    Hybrid(shyver::checker::VerifyOutcome),
}

impl CheckOutcome {
    pub fn verdict(&self) -> Verdict {
        match self {
            CheckOutcome::Chain(r) => r.verdict,
            CheckOutcome::Hybrid(v) => v.verdict,
        }
    }

    pub fn to_json(&self) -> String {
        match self {
            CheckOutcome::Chain(r) => serde_json::to_string_pretty(r).unwrap(),
            CheckOutcome::Hybrid(v) => serde_json::to_string_pretty(v).unwrap(),
        }
    }

    pub fn cap_exhausted(&self) -> bool {
        let report = match self {
            CheckOutcome::Chain(r) => r,
            CheckOutcome::Hybrid(v) => &v.strengthened,
        };
        report.horizon_source == "horizon-cap"
            || report.notes.iter().any(|n| n.contains("above cap"))
    }
}

pub fn run_check(inputs: &ManifestInputs, config: &CheckerConfig) -> Result<CheckOutcome, String> {
    match (&inputs.chain, &inputs.model) {
        (Some(chain_path), None) => {
            let target = load_target(chain_path, config).map_err(|e| e.to_string())?;
            let flavor = match target.chain.kind() {
                ChainKind::Ct => Flavor::Mitl,
                ChainKind::Dt => Flavor::Iltl,
            };
            let formula = parse_formula(&inputs.formula, flavor).map_err(|e| e.to_string())?;
            ensure_observables(&formula, &target)?;
            let report = match flavor {
                Flavor::Mitl => check_mitl_ctmc(&target, &formula, config),
                Flavor::Iltl => check_iltl(&target, &formula, config),
            }
            .map_err(|e| e.to_string())?;
            Ok(CheckOutcome::Chain(report))
        }
        (None, Some(model_path)) => {
            let pitch = inputs.pitch.ok_or("a model check needs --pitch")?;
            let model = load_model(model_path).map_err(|e| e.to_string())?;
            match model {
                HybridModel::Ct(m) => {
                    let formula =
                        parse_formula(&inputs.formula, Flavor::Mitl).map_err(|e| e.to_string())?;
                    let outcome =
                        verify_shs_ct(&m, &formula, pitch, config).map_err(|e| e.to_string())?;
                    Ok(CheckOutcome::Hybrid(outcome))
                }
                HybridModel::Dt(m) => {
                    let formula =
                        parse_formula(&inputs.formula, Flavor::Iltl).map_err(|e| e.to_string())?;
                    let outcome =
                        verify_shs_dt(&m, &formula, pitch, config).map_err(|e| e.to_string())?;
                    Ok(CheckOutcome::Hybrid(outcome))
                }
            }
        }
        _ => Err("exactly one of --chain or --model is required".to_string()),
    }
}

fn ensure_observables(formula: &Formula, target: &CheckTarget) -> Result<(), String> {
    for atom in formula.atoms() {
        let known = match &target.observables {
            ChainObservables::Dense(map) => map.contains_key(&atom.observable),
            ChainObservables::Implicit { name } => *name == atom.observable,
        };
        if !known {
            return Err(format!("undeclared observable '{}'", atom.observable));
        }
    }
    Ok(())
}

/// Load a chain file (with sidecar) or an implicit family descriptor.
pub fn load_target(path: &Path, config: &CheckerConfig) -> Result<CheckTarget, Box<dyn std::error::Error>> {
    let text = std::fs::read_to_string(path)?;
    if text.trim_start().starts_with('{') {
        // Implicit descriptor or family file.
        let value: serde_json::Value = serde_json::from_str(&text)?;
        let family: ContractingJumpGrid = if let Some(f) = value.get("family") {
            serde_json::from_value(f.clone())?
        } else {
            serde_json::from_value(value)?
        };
        return Ok(CheckTarget {
            chain: MarkovChain::ImplicitCt(family),
            observables: ChainObservables::Implicit {
                name: "w".to_string(),
            },
            invariant: ChainInvariant::ImplicitAnalytic,
        });
    }
    let chain = read_chain(path)?;
    let sidecar_path = path.with_extension("meta.json");
    let sidecar: ChainSidecar =
        serde_json::from_str(&std::fs::read_to_string(&sidecar_path)?)?;
    // The estimate feeds the closeness test, whose accept threshold is
    // delta_prime / 6; keep the estimate well inside it.
    let invariant = estimate_invariant(&chain, config.params.delta_prime / 4.0, 10_000_000)?;
    Ok(CheckTarget {
        chain: MarkovChain::Explicit(chain),
        observables: ChainObservables::Dense(sidecar.observables),
        invariant: ChainInvariant::Estimate(invariant.weights),
    })
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

pub struct SimulateArgs {
    pub chain: PathBuf,
    pub time: f64,
    pub replications: u64,
    pub seed: u64,
    pub config: CheckerConfig,
}

/// Raw sampling utility; one NDJSON record per replication.
pub fn cmd_simulate(args: &SimulateArgs) -> i32 {
    let target = match load_target(&args.chain, &args.config) {
        Ok(t) => t,
        Err(e) => return fail(EXIT_INPUT, e),
    };
    for rep in 0..args.replications {
        let mut rng = CounterRng::from_path(args.seed, &[0x51, rep]);
        let result = match target.chain.kind() {
            ChainKind::Ct => target.chain.ssa_sample(args.time, &mut rng, None),
            ChainKind::Dt => target.chain.dtmc_sample(args.time as u64, &mut rng),
        };
        match result {
            Ok((state, events)) => {
                let state_repr = match &state {
                    ChainState::Index(i) => serde_json::json!(i),
                    ChainState::Tuple(t) => serde_json::json!(t),
                };
                println!(
                    "{}",
                    serde_json::json!({
                        "t": args.time,
                        "state": state_repr,
                        "replication": rep,
                        "seed": args.seed,
                        "events": events,
                    })
                );
            }
            Err(e) => return fail(EXIT_INPUT, e),
        }
    }
    EXIT_YES
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchSuite {
    /// Continuous dimensions of the grid family to run.
    pub dimensions: Vec<usize>,
    pub thresholds: Vec<f64>,
    pub time_bounds: Vec<f64>,
    pub repetitions: u64,
    #[serde(default)]
    pub modes: Option<usize>,
    #[serde(default)]
    pub eta: Option<u32>,
    #[serde(default)]
    pub matrix_seed: Option<u64>,
    #[serde(default)]
    pub time_cap_s: Option<f64>,
}

pub struct BenchArgs {
    pub suite: PathBuf,
    pub out: PathBuf,
    pub config: CheckerConfig,
}

pub fn cmd_bench(args: &BenchArgs) -> i32 {
    let suite: BenchSuite = match std::fs::read_to_string(&args.suite)
        .map_err(|e| e.to_string())
        .and_then(|t| serde_json::from_str(&t).map_err(|e| e.to_string()))
    {
        Ok(s) => s,
        Err(e) => return fail(EXIT_INPUT, format!("suite: {e}")),
    };
    let mut rows = String::from(
        "dimension,threshold,time_bound,repetition,seed,verdict,samples,events,wall_ms\n",
    );
    let mut summary: BTreeMap<(usize, String, String), Vec<f64>> = BTreeMap::new();
    let cap_ms = suite.time_cap_s.map(|s| s * 1000.0);
    for &dim in &suite.dimensions {
        let family = ContractingJumpGrid::with_default_matrices(
            dim,
            suite.modes.unwrap_or(4),
            suite.eta.unwrap_or(10),
            suite.matrix_seed.unwrap_or(1),
        );
        for &threshold in &suite.thresholds {
            for &bound in &suite.time_bounds {
                for rep in 0..suite.repetitions {
                    let mut config = args.config.clone();
                    config.seed = args.config.seed.wrapping_add(rep);
                    let target = CheckTarget {
                        chain: MarkovChain::ImplicitCt(family.clone()),
                        observables: ChainObservables::Implicit {
                            name: "w".to_string(),
                        },
                        invariant: ChainInvariant::ImplicitAnalytic,
                    };
                    let formula_text = format!("true U[0,{bound}] (w > {threshold})");
                    let formula = match parse_formula(&formula_text, Flavor::Mitl) {
                        Ok(f) => f,
                        Err(e) => return fail(EXIT_INPUT, e),
                    };
                    let report = match check_mitl_ctmc(&target, &formula, &config) {
                        Ok(r) => r,
                        Err(e) => return fail(EXIT_INPUT, e),
                    };
                    if let Some(cap) = cap_ms {
                        if (report.wall_ms as f64) > cap {
                            eprintln!(
                                "bench cell (n={dim}, p={threshold}, T={bound}) exceeded the time cap"
                            );
                            return EXIT_CAP;
                        }
                    }
                    rows.push_str(&format!(
                        "{dim},{threshold},{bound},{rep},{},{:?},{},{},{}\n",
                        config.seed,
                        report.verdict,
                        report.samples_total(),
                        report.events_total(),
                        report.wall_ms
                    ));
                    summary
                        .entry((dim, format!("{threshold}"), format!("{bound}")))
                        .or_default()
                        .push(report.wall_ms as f64);
                }
            }
        }
    }
    rows.push_str("\ndimension,threshold,time_bound,mean_wall_ms,ci95_wall_ms\n");
    let mut plot = String::from("# label mean ci95\n");
    for ((dim, threshold, bound), times) in &summary {
        let n = times.len() as f64;
        let mean = times.iter().sum::<f64>() / n;
        let ci = if times.len() > 1 {
            let var = times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0);
            format!("{:.3}", 1.96 * (var / n).sqrt())
        } else {
            String::new() // undefined for a single repetition
        };
        rows.push_str(&format!("{dim},{threshold},{bound},{mean:.3},{ci}\n"));
        plot.push_str(&format!(
            "n{dim}_p{threshold}_T{bound} {mean:.3} {}\n",
            if ci.is_empty() { "0" } else { &ci }
        ));
    }
    if let Err(e) = std::fs::write(&args.out, rows) {
        return fail(EXIT_INPUT, e);
    }
    if let Err(e) = std::fs::write(args.out.with_extension("gnuplot.dat"), plot) {
        return fail(EXIT_INPUT, e);
    }
    EXIT_YES
}

/// Exact transient distribution of a stored chain; testing helper shared by
/// the acceptance suite.
pub fn exact_distribution(path: &Path, t: f64) -> Result<ProbVector, String> {
    let chain = read_chain(path).map_err(|e| e.to_string())?;
    transient_distribution(&chain, t, 1 << 20).map_err(|e| e.to_string())
}
