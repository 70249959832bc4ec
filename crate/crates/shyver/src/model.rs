//! Stochastic hybrid system models and their on-disk JSON format.
//!
//! A continuous-time model has per-mode drift/diffusion/jump-rate expressions
//! over a bounded flow box, jump kernels that are finite mixtures of uniforms
//! over boxes, and a piecewise-constant initial density. The discrete-time
//! variant replaces the rates by a one-step transition kernel. Models are
//! immutable after validation and safe to share across threads.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{parse_expr, Expr, ExprError};
use crate::geom::{DensityPiece, PiecewiseDensity, Rect};
use crate::rng::CounterRng;

const MASS_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("model file parse error: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("unknown mode '{0}'")]
    UnknownMode(String),
    #[error("point {point:?} outside the flow domain of mode '{mode}'")]
    PointOutsideDomain { mode: String, point: Vec<f64> },
    #[error("no jump kernel entry applies at mode '{mode}', point {point:?}")]
    UndefinedKernel { mode: String, point: Vec<f64> },
    #[error("model kind mismatch: expected {expected}, file declares {found}")]
    KindMismatch { expected: String, found: String },
    #[error("invalid model: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Lo,
    Hi,
}

/// Which source states a jump-kernel entry covers.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelTrigger {
    /// Forced jump from every boundary face of the mode.
    AnyBoundary,
    /// Forced jump from one boundary face.
    Face { axis: usize, side: Side },
    /// Spontaneous jump from inside a region.
    Region(Rect),
}

#[derive(Debug, Clone)]
pub struct KernelEntry {
    pub from_mode: usize,
    pub trigger: KernelTrigger,
    pub to_mode: usize,
    /// Uniform target box; a degenerate box (`lo == hi`) is a point mass.
    pub target: Rect,
    pub weight: f64,
}

/// Piecewise-constant weight function of an observable, one value per box.
#[derive(Debug, Clone)]
pub struct Observable {
    pub name: String,
    pub pieces: Vec<(usize, Rect, f64)>,
}

impl Observable {
    /// Weight at a state; boxes are half-open on shared edges only through
    /// the partition, so overlapping pieces simply add.
    pub fn value_at(&self, mode: usize, x: &[f64]) -> f64 {
        self.pieces
            .iter()
            .filter(|(m, r, _)| *m == mode && r.contains(x))
            .map(|(_, _, v)| *v)
            .sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.pieces.iter().map(|(_, _, v)| v.abs()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct HybridModelCt {
    pub dim: usize,
    pub modes: Vec<String>,
    pub flow_domains: Vec<Rect>,
    /// Per mode, `dim` drift components.
    pub drift: Vec<Vec<Expr>>,
    /// Per mode, a `dim x dim` diffusion matrix.
    pub diffusion: Vec<Vec<Vec<Expr>>>,
    pub jump_rate: Vec<Expr>,
    pub jump_kernel: Vec<KernelEntry>,
    pub initial_density: PiecewiseDensity,
    pub observables: BTreeMap<String, Observable>,
}

#[derive(Debug, Clone)]
pub enum DtKernel {
    /// Point mass at the source state.
    Identity,
    /// Finite mixture of uniforms per source region.
    PiecewiseUniform(Vec<KernelEntry>),
    /// One explicit Euler step of the model's own drift/diffusion.
    Euler { dt: f64 },
}

#[derive(Debug, Clone)]
pub struct HybridModelDt {
    pub dim: usize,
    pub modes: Vec<String>,
    pub flow_domains: Vec<Rect>,
    pub drift: Vec<Vec<Expr>>,
    pub diffusion: Vec<Vec<Vec<Expr>>>,
    pub kernel: DtKernel,
    /// One-step contraction factor in (0, 1), user supplied.
    pub contractivity: f64,
    /// Optional bound on the density sup norm; derived from the initial
    /// density when absent.
    pub density_sup: Option<f64>,
    pub initial_density: PiecewiseDensity,
    pub observables: BTreeMap<String, Observable>,
}

#[derive(Debug, Clone)]
pub enum HybridModel {
    Ct(HybridModelCt),
    Dt(HybridModelDt),
}

impl HybridModelCt {
    pub fn mode_index(&self, name: &str) -> Result<usize, ModelError> {
        self.modes
            .iter()
            .position(|m| m == name)
            .ok_or_else(|| ModelError::UnknownMode(name.to_string()))
    }

    /// Pointwise drift vector, diffusion matrix, and spontaneous jump rate.
    pub fn eval_dynamics(
        &self,
        mode: usize,
        x: &[f64],
    ) -> Result<(Vec<f64>, Vec<Vec<f64>>, f64), ModelError> {
        if !self.flow_domains[mode].contains(x) {
            return Err(ModelError::PointOutsideDomain {
                mode: self.modes[mode].clone(),
                point: x.to_vec(),
            });
        }
        let f = self.drift[mode].iter().map(|e| e.eval(x)).collect();
        let g = self.diffusion[mode]
            .iter()
            .map(|row| row.iter().map(|e| e.eval(x)).collect())
            .collect();
        let r = self.jump_rate[mode].eval(x);
        Ok((f, g, r))
    }

    /// Kernel entries applying at `(mode, x)`: face entries when `x` lies on
    /// the boundary of the flow box, region entries otherwise.
    pub fn kernel_entries_at(&self, mode: usize, x: &[f64]) -> Vec<&KernelEntry> {
        let domain = &self.flow_domains[mode];
        let scale: f64 = domain
            .hi
            .iter()
            .zip(&domain.lo)
            .map(|(h, l)| h - l)
            .fold(0.0, f64::max);
        let tol = 1e-12 * scale.max(1.0);
        let boundary_face = (0..self.dim).find_map(|a| {
            if (x[a] - domain.lo[a]).abs() <= tol {
                Some((a, Side::Lo))
            } else if (x[a] - domain.hi[a]).abs() <= tol {
                Some((a, Side::Hi))
            } else {
                None
            }
        });
        self.jump_kernel
            .iter()
            .filter(|e| e.from_mode == mode)
            .filter(|e| match (&e.trigger, boundary_face) {
                (KernelTrigger::Face { axis, side }, Some((a, s))) => *axis == a && *side == s,
                (KernelTrigger::AnyBoundary, Some(_)) => true,
                (KernelTrigger::Region(r), None) => r.contains(x),
                _ => false,
            })
            .collect()
    }

    /// Draw a jump target distributed per the kernel at `(mode, x)`.
    pub fn sample_jump_target(
        &self,
        mode: usize,
        x: &[f64],
        rng: &mut CounterRng,
    ) -> Result<(usize, Vec<f64>), ModelError> {
        let entries = self.kernel_entries_at(mode, x);
        if entries.is_empty() {
            return Err(ModelError::UndefinedKernel {
                mode: self.modes[mode].clone(),
                point: x.to_vec(),
            });
        }
        let total: f64 = entries.iter().map(|e| e.weight).sum();
        let mut u = rng.next_f64() * total;
        let mut chosen = entries[entries.len() - 1];
        for e in &entries {
            u -= e.weight;
            if u < 0.0 {
                chosen = e;
                break;
            }
        }
        let target = (0..self.dim)
            .map(|a| rng.uniform(chosen.target.lo[a], chosen.target.hi[a]))
            .collect();
        Ok((chosen.to_mode, target))
    }
}

impl HybridModelDt {
    pub fn density_sup_bound(&self) -> f64 {
        self.density_sup
            .unwrap_or_else(|| self.initial_density.sup_value())
    }
}

/// A validation report lists violated invariants; empty means well formed.
pub fn validate_model(model: &HybridModel) -> Vec<String> {
    match model {
        HybridModel::Ct(m) => validate_ct(m),
        HybridModel::Dt(m) => validate_dt(m),
    }
}

fn validate_common(
    modes: &[String],
    domains: &[Rect],
    initial: &PiecewiseDensity,
    observables: &BTreeMap<String, Observable>,
    report: &mut Vec<String>,
) {
    for (name, rect) in modes.iter().zip(domains) {
        if !rect.is_bounded_nonempty() {
            report.push(format!("flow domain of mode '{name}' is unbounded or empty"));
        }
    }
    let mass = initial.total_mass();
    if (mass - 1.0).abs() > MASS_TOL {
        report.push(format!("initial density not normalized (total mass {mass})"));
    }
    for p in &initial.pieces {
        if p.mass < 0.0 {
            report.push("initial density has a negative piece".to_string());
        }
        if p.mode >= domains.len() || !domains[p.mode].contains_rect(&p.support, 1e-9) {
            report.push(format!(
                "initial density piece {:?} escapes its flow domain",
                p.support
            ));
        }
    }
    for obs in observables.values() {
        for (mode, rect, _) in &obs.pieces {
            if *mode >= domains.len() || !domains[*mode].contains_rect(rect, 1e-9) {
                report.push(format!(
                    "observable '{}' has a piece outside its flow domain",
                    obs.name
                ));
            }
        }
    }
}

fn validate_ct(m: &HybridModelCt) -> Vec<String> {
    let mut report = Vec::new();
    validate_common(&m.modes, &m.flow_domains, &m.initial_density, &m.observables, &mut report);

    // Sign of the jump rate is checked on a lattice; polynomial positivity
    // is not decidable here and violations are data, not failures.
    for (mode, rate) in m.jump_rate.iter().enumerate() {
        for x in sample_lattice(&m.flow_domains[mode]) {
            if rate.eval(&x) < 0.0 {
                report.push(format!(
                    "negative jump rate in mode '{}' at {:?}",
                    m.modes[mode], x
                ));
                break;
            }
        }
    }

    // Kernel weights must sum to 1 per trigger group, and targets must lie in
    // the destination flow domain.
    let mut groups: BTreeMap<String, f64> = BTreeMap::new();
    for e in &m.jump_kernel {
        let key = match &e.trigger {
            KernelTrigger::AnyBoundary => format!("{}|boundary:any", e.from_mode),
            KernelTrigger::Face { axis, side } => {
                format!("{}|boundary:{axis}:{side:?}", e.from_mode)
            }
            KernelTrigger::Region(r) => format!("{}|region:{:?}:{:?}", e.from_mode, r.lo, r.hi),
        };
        *groups.entry(key).or_insert(0.0) += e.weight;
        if !m.flow_domains[e.to_mode].contains_rect(&e.target, 1e-9) {
            report.push(format!(
                "kernel target {:?} escapes the flow domain of mode '{}'",
                e.target, m.modes[e.to_mode]
            ));
        }
        if e.weight < 0.0 {
            report.push("kernel weight is negative".to_string());
        }
    }
    for (key, sum) in groups {
        if (sum - 1.0).abs() > MASS_TOL {
            report.push(format!(
                "jump kernel weights for source group [{key}] sum to {sum}, not 1"
            ));
        }
    }
    report
}

fn validate_dt(m: &HybridModelDt) -> Vec<String> {
    let mut report = Vec::new();
    validate_common(&m.modes, &m.flow_domains, &m.initial_density, &m.observables, &mut report);
    if !(m.contractivity > 0.0 && m.contractivity < 1.0) {
        report.push(format!(
            "contractivity {} not strictly inside (0,1)",
            m.contractivity
        ));
    }
    if let DtKernel::PiecewiseUniform(entries) = &m.kernel {
        let mut groups: BTreeMap<String, f64> = BTreeMap::new();
        for e in entries {
            let key = match &e.trigger {
                KernelTrigger::Region(r) => format!("{}|{:?}:{:?}", e.from_mode, r.lo, r.hi),
                _ => "boundary".to_string(),
            };
            *groups.entry(key).or_insert(0.0) += e.weight;
        }
        for (key, sum) in groups {
            if (sum - 1.0).abs() > MASS_TOL {
                report.push(format!(
                    "transition kernel weights for source [{key}] sum to {sum}, not 1"
                ));
            }
        }
    }
    report
}

fn sample_lattice(rect: &Rect) -> Vec<Vec<f64>> {
    // Up to 5^d points per mode, capped for high dimension.
    let per_axis = if rect.dim() <= 3 { 5 } else { 2 };
    let mut points = vec![Vec::new()];
    for a in 0..rect.dim() {
        let mut next = Vec::new();
        for base in &points {
            for k in 0..per_axis {
                let t = k as f64 / (per_axis - 1) as f64;
                let mut p = base.clone();
                p.push(rect.lo[a] + t * (rect.hi[a] - rect.lo[a]));
                next.push(p);
            }
        }
        points = next;
        if points.len() > 4096 {
            break;
        }
    }
    points
}

// ---------------------------------------------------------------------------
// JSON model files
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct RectFile {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl RectFile {
    fn to_rect(&self) -> Rect {
        Rect::new(self.lo.clone(), self.hi.clone())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct KernelEntryFile {
    from_mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    region: Option<RectFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    boundary: Option<serde_json::Value>,
    to_mode: String,
    target_box: RectFile,
    weight: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct DensityPieceFile {
    mode: String,
    #[serde(rename = "box")]
    support: RectFile,
    weight: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ObservablePieceFile {
    mode: String,
    #[serde(rename = "box")]
    support: RectFile,
    value: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum ExprListFile {
    Scalar(String),
    Vector(Vec<String>),
    Matrix(Vec<Vec<String>>),
}

#[derive(Debug, Serialize, Deserialize)]
struct DtKernelFile {
    #[serde(rename = "type")]
    kind: String,
    #[serde(default)]
    entries: Vec<KernelEntryFile>,
    #[serde(default)]
    dt: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    kind: String,
    dimension: usize,
    modes: Vec<String>,
    flow_domains: BTreeMap<String, RectFile>,
    #[serde(default)]
    drift: BTreeMap<String, ExprListFile>,
    #[serde(default)]
    diffusion: BTreeMap<String, ExprListFile>,
    #[serde(default)]
    jump_rate: BTreeMap<String, String>,
    #[serde(default)]
    jump_kernel: Vec<KernelEntryFile>,
    initial_density: Vec<DensityPieceFile>,
    #[serde(default)]
    observables: BTreeMap<String, Vec<ObservablePieceFile>>,
    #[serde(default)]
    transition_kernel: Option<DtKernelFile>,
    #[serde(default)]
    contractivity: Option<f64>,
    #[serde(default)]
    f_sup: Option<f64>,
}

fn mode_index(modes: &[String], name: &str) -> Result<usize, ModelError> {
    modes
        .iter()
        .position(|m| m == name)
        .ok_or_else(|| ModelError::UnknownMode(name.to_string()))
}

fn parse_vector_exprs(
    raw: &ExprListFile,
    dim: usize,
    what: &str,
) -> Result<Vec<Expr>, ModelError> {
    match raw {
        ExprListFile::Scalar(s) if dim == 1 => Ok(vec![parse_expr(s, dim)?]),
        ExprListFile::Vector(v) if v.len() == dim => {
            v.iter().map(|s| Ok(parse_expr(s, dim)?)).collect()
        }
        _ => Err(ModelError::Invalid(format!(
            "{what} must have {dim} component expression(s)"
        ))),
    }
}

fn parse_matrix_exprs(
    raw: &ExprListFile,
    dim: usize,
    what: &str,
) -> Result<Vec<Vec<Expr>>, ModelError> {
    match raw {
        ExprListFile::Scalar(s) if dim == 1 => Ok(vec![vec![parse_expr(s, dim)?]]),
        ExprListFile::Matrix(rows) if rows.len() == dim && rows.iter().all(|r| r.len() == dim) => {
            rows.iter()
                .map(|r| r.iter().map(|s| Ok(parse_expr(s, dim)?)).collect())
                .collect()
        }
        _ => Err(ModelError::Invalid(format!(
            "{what} must be a {dim}x{dim} expression matrix"
        ))),
    }
}

fn parse_kernel_entry(
    raw: &KernelEntryFile,
    modes: &[String],
    dim: usize,
) -> Result<KernelEntry, ModelError> {
    let trigger = match (&raw.region, &raw.boundary) {
        (Some(r), None) => KernelTrigger::Region(r.to_rect()),
        (None, Some(b)) => match b {
            serde_json::Value::String(s) if s == "any" => KernelTrigger::AnyBoundary,
            serde_json::Value::Object(o) => {
                let axis = o
                    .get("axis")
                    .and_then(|v| v.as_u64())
                    .ok_or_else(|| ModelError::Invalid("boundary needs an axis".into()))?
                    as usize;
                if axis >= dim {
                    return Err(ModelError::Invalid(format!(
                        "boundary axis {axis} out of range"
                    )));
                }
                let side = match o.get("side").and_then(|v| v.as_str()) {
                    Some("lo") => Side::Lo,
                    Some("hi") => Side::Hi,
                    _ => return Err(ModelError::Invalid("boundary side must be lo|hi".into())),
                };
                KernelTrigger::Face { axis, side }
            }
            _ => return Err(ModelError::Invalid("malformed boundary spec".into())),
        },
        _ => {
            return Err(ModelError::Invalid(
                "kernel entry needs exactly one of region | boundary".into(),
            ))
        }
    };
    Ok(KernelEntry {
        from_mode: mode_index(modes, &raw.from_mode)?,
        trigger,
        to_mode: mode_index(modes, &raw.to_mode)?,
        target: raw.target_box.to_rect(),
        weight: raw.weight,
    })
}

fn parse_density(
    raw: &[DensityPieceFile],
    modes: &[String],
) -> Result<PiecewiseDensity, ModelError> {
    let pieces = raw
        .iter()
        .map(|p| {
            Ok(DensityPiece {
                mode: mode_index(modes, &p.mode)?,
                support: p.support.to_rect(),
                mass: p.weight,
            })
        })
        .collect::<Result<_, ModelError>>()?;
    Ok(PiecewiseDensity { pieces })
}

fn parse_observables(
    raw: &BTreeMap<String, Vec<ObservablePieceFile>>,
    modes: &[String],
) -> Result<BTreeMap<String, Observable>, ModelError> {
    let mut out = BTreeMap::new();
    for (name, pieces) in raw {
        let pieces = pieces
            .iter()
            .map(|p| Ok((mode_index(modes, &p.mode)?, p.support.to_rect(), p.value)))
            .collect::<Result<_, ModelError>>()?;
        out.insert(
            name.clone(),
            Observable {
                name: name.clone(),
                pieces,
            },
        );
    }
    Ok(out)
}

pub fn load_model(path: &Path) -> Result<HybridModel, ModelError> {
    let text = std::fs::read_to_string(path)?;
    parse_model(&text)
}

pub fn parse_model(text: &str) -> Result<HybridModel, ModelError> {
    let file: ModelFile = serde_json::from_str(text)?;
    let dim = file.dimension;
    let modes = file.modes.clone();

    let mut flow_domains = Vec::with_capacity(modes.len());
    for m in &modes {
        let r = file
            .flow_domains
            .get(m)
            .ok_or_else(|| ModelError::Invalid(format!("missing flow domain for mode '{m}'")))?;
        flow_domains.push(r.to_rect());
    }

    let get_mode_exprs = |map: &BTreeMap<String, ExprListFile>,
                          what: &str|
     -> Result<Vec<ExprListFile>, ModelError> {
        modes
            .iter()
            .map(|m| {
                map.get(m)
                    .map(|e| {
                        Ok(match e {
                            ExprListFile::Scalar(s) => ExprListFile::Scalar(s.clone()),
                            ExprListFile::Vector(v) => ExprListFile::Vector(v.clone()),
                            ExprListFile::Matrix(r) => ExprListFile::Matrix(r.clone()),
                        })
                    })
                    .unwrap_or_else(|| Err(ModelError::Invalid(format!("missing {what} for mode '{m}'"))))
            })
            .collect()
    };

    let initial_density = parse_density(&file.initial_density, &modes)?;
    let observables = parse_observables(&file.observables, &modes)?;

    match file.kind.as_str() {
        "ct" => {
            let drift = get_mode_exprs(&file.drift, "drift")?
                .iter()
                .map(|e| parse_vector_exprs(e, dim, "drift"))
                .collect::<Result<_, _>>()?;
            let diffusion = get_mode_exprs(&file.diffusion, "diffusion")?
                .iter()
                .map(|e| parse_matrix_exprs(e, dim, "diffusion"))
                .collect::<Result<_, _>>()?;
            let jump_rate = modes
                .iter()
                .map(|m| {
                    let s = file.jump_rate.get(m).ok_or_else(|| {
                        ModelError::Invalid(format!("missing jump_rate for mode '{m}'"))
                    })?;
                    Ok(parse_expr(s, dim)?)
                })
                .collect::<Result<_, ModelError>>()?;
            let jump_kernel = file
                .jump_kernel
                .iter()
                .map(|e| parse_kernel_entry(e, &modes, dim))
                .collect::<Result<_, _>>()?;
            Ok(HybridModel::Ct(HybridModelCt {
                dim,
                modes,
                flow_domains,
                drift,
                diffusion,
                jump_rate,
                jump_kernel,
                initial_density,
                observables,
            }))
        }
        "dt" => {
            let needs_dynamics = matches!(
                file.transition_kernel.as_ref().map(|k| k.kind.as_str()),
                Some("euler")
            );
            let (drift, diffusion) = if needs_dynamics {
                (
                    get_mode_exprs(&file.drift, "drift")?
                        .iter()
                        .map(|e| parse_vector_exprs(e, dim, "drift"))
                        .collect::<Result<_, _>>()?,
                    get_mode_exprs(&file.diffusion, "diffusion")?
                        .iter()
                        .map(|e| parse_matrix_exprs(e, dim, "diffusion"))
                        .collect::<Result<_, _>>()?,
                )
            } else {
                (Vec::new(), Vec::new())
            };
            let kernel = match file.transition_kernel {
                Some(k) => match k.kind.as_str() {
                    "identity" => DtKernel::Identity,
                    "piecewise_uniform" => DtKernel::PiecewiseUniform(
                        k.entries
                            .iter()
                            .map(|e| parse_kernel_entry(e, &modes, dim))
                            .collect::<Result<_, _>>()?,
                    ),
                    "euler" => DtKernel::Euler {
                        dt: k.dt.ok_or_else(|| {
                            ModelError::Invalid("euler kernel needs a dt".into())
                        })?,
                    },
                    other => {
                        return Err(ModelError::Invalid(format!(
                            "unknown transition kernel type '{other}'"
                        )))
                    }
                },
                None => return Err(ModelError::Invalid("dt model needs transition_kernel".into())),
            };
            Ok(HybridModel::Dt(HybridModelDt {
                dim,
                modes,
                flow_domains,
                drift,
                diffusion,
                kernel,
                contractivity: file.contractivity.unwrap_or(0.5),
                density_sup: file.f_sup,
                initial_density,
                observables,
            }))
        }
        other => Err(ModelError::KindMismatch {
            expected: "ct|dt".into(),
            found: other.into(),
        }),
    }
}
