//! Sequential statistical kernels.
//!
//! `atom_test_bernoulli` is the three-outcome sequential probability ratio
//! test: two coupled Wald tests with log-likelihood boundaries
//! `ln((1-gamma)/alpha)` and `ln(gamma/(1-alpha))`, returning Yes/No/Unknown
//! with wrong-answer probability at most `alpha` and Unknown probability at
//! most `gamma` outside the indifference margin. `atom_test_mean` is the
//! fixed-width sequential confidence interval of Chow-Robbins type for real
//! weights in [-1, 1]. `closeness_test` is a collision-style distribution
//! identity test; `duration_of_simulation` doubles the horizon until the
//! chain law is accepted as close to the invariant estimate.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::CounterRng;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("sample {0} outside [-1, 1]; normalize the observable first")]
    SampleOutOfRange(f64),
    #[error("sampled support key {key} outside the declared support size {n}")]
    SupportMismatch { key: u64, n: u64 },
    #[error("horizon cap {0} exhausted before the chain law settled")]
    HorizonCap(f64),
    #[error("parameter {name} = {value} outside (0, 1)")]
    BadParameter { name: &'static str, value: f64 },
}

/// Error and indifference budgets. All must lie strictly in (0, 1).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StatParams {
    /// Wrong Yes/No probability bound.
    pub alpha: f64,
    /// Unknown probability bound outside the indifference margin.
    pub gamma: f64,
    /// Indifference half-width around thresholds.
    pub delta: f64,
    /// Closeness threshold for invariant-distribution truncation.
    pub delta_prime: f64,
}

impl StatParams {
    pub fn validate(&self) -> Result<(), StatsError> {
        for (name, value) in [
            ("alpha", self.alpha),
            ("gamma", self.gamma),
            ("delta", self.delta),
            ("delta_prime", self.delta_prime),
        ] {
            if !(value > 0.0 && value < 1.0) {
                return Err(StatsError::BadParameter { name, value });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Yes,
    No,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CloseVerdict {
    Accept,
    Reject,
}

/// What a single sequential test did, for audit and budget accounting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestCertificate {
    pub method: &'static str,
    pub samples: u64,
    pub effective_alpha: f64,
    pub effective_gamma: f64,
    pub effective_delta: f64,
    /// Number of sibling tests the caller split its budget across;
    /// `effective_alpha * split_factor` recovers the caller's budget.
    pub split_factor: f64,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub notes: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub llr_trace: Option<Vec<f64>>,
}

impl TestCertificate {
    fn new(method: &'static str, alpha: f64, gamma: f64, delta: f64) -> Self {
        TestCertificate {
            method,
            samples: 0,
            effective_alpha: alpha,
            effective_gamma: gamma,
            effective_delta: delta,
            split_factor: 1.0,
            notes: Vec::new(),
            llr_trace: None,
        }
    }

    pub fn with_split(mut self, factor: f64) -> Self {
        self.split_factor = factor;
        self
    }
}

/// Hard ceiling on samples per sequential test; hitting it yields Unknown
/// with a note rather than an endless loop.
pub const DEFAULT_SAMPLE_CAP: u64 = 50_000_000;

const PROB_CLIP: f64 = 1e-9;

fn bernoulli_llr(success: bool, p_alt: f64, p_null: f64) -> f64 {
    if success {
        (p_alt / p_null).ln()
    } else {
        ((1.0 - p_alt) / (1.0 - p_null)).ln()
    }
}

/// Three-outcome sequential test of `P[sample] > c` for a Bernoulli sampler,
/// with indifference half-width `delta`.
pub fn atom_test_bernoulli(
    mut sampler: impl FnMut(&mut CounterRng) -> bool,
    c: f64,
    alpha: f64,
    gamma: f64,
    delta: f64,
    rng: &mut CounterRng,
    trace: bool,
) -> (Verdict, TestCertificate) {
    let mut cert = TestCertificate::new("sprt", alpha, gamma, delta);
    let p_mid = c.clamp(PROB_CLIP, 1.0 - PROB_CLIP);
    let p_hi = (c + delta).clamp(PROB_CLIP, 1.0 - PROB_CLIP);
    let p_lo = (c - delta).clamp(PROB_CLIP, 1.0 - PROB_CLIP);
    if c + delta >= 1.0 || c - delta <= 0.0 {
        cert.notes
            .push(format!("hypotheses clipped to [{p_lo}, {p_hi}]"));
    }
    // Accept-outer boundary and accept-inner boundary.
    let upper = ((1.0 - gamma) / alpha).ln();
    let lower = (gamma / (1.0 - alpha)).ln();
    let mut llr_hi = 0.0f64; // theta = c + delta against theta = c
    let mut llr_lo = 0.0f64; // theta = c - delta against theta = c
    let mut hi_state: Option<bool> = None; // Some(true) = outer accepted
    let mut lo_state: Option<bool> = None;
    if trace {
        cert.llr_trace = Some(Vec::new());
    }
    loop {
        let x = sampler(rng);
        cert.samples += 1;
        if hi_state.is_none() {
            llr_hi += bernoulli_llr(x, p_hi, p_mid);
            if llr_hi >= upper {
                hi_state = Some(true);
            } else if llr_hi <= lower {
                hi_state = Some(false);
            }
        }
        if lo_state.is_none() {
            llr_lo += bernoulli_llr(x, p_lo, p_mid);
            if llr_lo >= upper {
                lo_state = Some(true);
            } else if llr_lo <= lower {
                lo_state = Some(false);
            }
        }
        if let Some(t) = cert.llr_trace.as_mut() {
            t.push(llr_hi - llr_lo);
        }
        match (hi_state, lo_state) {
            (Some(true), _) => return (Verdict::Yes, cert),
            (_, Some(true)) => return (Verdict::No, cert),
            (Some(false), Some(false)) => return (Verdict::Unknown, cert),
            _ => {}
        }
        if cert.samples >= DEFAULT_SAMPLE_CAP {
            cert.notes.push("sample cap reached".to_string());
            return (Verdict::Unknown, cert);
        }
    }
}

/// Three-outcome test of `E[sample] > c` for samples in [-1, 1], by a
/// sequential fixed-width confidence interval of half-width `delta / 2` at
/// confidence `1 - min(alpha, gamma)`. Stopping waits for at least 30
/// samples to keep the interval honest at small counts.
pub fn atom_test_mean(
    mut sampler: impl FnMut(&mut CounterRng) -> f64,
    c: f64,
    alpha: f64,
    gamma: f64,
    delta: f64,
    rng: &mut CounterRng,
) -> Result<(Verdict, TestCertificate), StatsError> {
    let mut cert = TestCertificate::new("mean-ci", alpha, gamma, delta);
    let z = inverse_normal_cdf(1.0 - alpha.min(gamma) / 2.0);
    let target = delta / 2.0;
    let mut n = 0u64;
    let mut mean = 0.0f64;
    let mut m2 = 0.0f64;
    loop {
        let x = sampler(rng);
        if !(-1.0..=1.0).contains(&x) {
            return Err(StatsError::SampleOutOfRange(x));
        }
        n += 1;
        let d = x - mean;
        mean += d / n as f64;
        m2 += d * (x - mean);
        cert.samples = n;
        if n >= 30 {
            let var = m2 / (n - 1) as f64;
            // The 1/n term keeps zero-variance streams from stalling the
            // stopping rule.
            let width = z * ((var + 1.0 / n as f64) / n as f64).sqrt();
            if width <= target {
                let verdict = if mean - width > c {
                    Verdict::Yes
                } else if mean + width < c {
                    Verdict::No
                } else {
                    Verdict::Unknown
                };
                return Ok((verdict, cert));
            }
        }
        if n >= DEFAULT_SAMPLE_CAP {
            cert.notes.push("sample cap reached".to_string());
            return Ok((Verdict::Unknown, cert));
        }
    }
}

/// Per-distribution sample count of the closeness test. The leading constant
/// is an engineering calibration (see the crate tests at n = 10, 100, 1000);
/// the shape follows the collision-test sample complexity.
pub const CLOSENESS_SAMPLE_CONSTANT: f64 = 2.0;

pub fn closeness_samples(n: u64, delta: f64, alpha: f64) -> u64 {
    let n = n as f64;
    (CLOSENESS_SAMPLE_CONSTANT * n.powf(2.0 / 3.0) * delta.powf(-8.0 / 3.0) * (n / alpha).ln())
        .ceil() as u64
}

/// Accept/Reject closeness of two sampled distributions over `{0..n-1}`:
/// heavy elements (combined frequency at least `delta / (8 n^{1/3})`) are
/// compared by empirical frequency, light elements by the unbiased collision
/// statistic; the combined l1 estimate is tested against `delta / 2`.
///
/// Draws are independent, so they run on the ambient worker pool; each draw
/// owns a substream indexed by its position, which keeps the result
/// identical across thread counts.
pub fn closeness_test(
    sampler_p: impl Fn(&mut CounterRng) -> u64 + Sync,
    sampler_q: impl Fn(&mut CounterRng) -> u64 + Sync,
    n: u64,
    alpha: f64,
    delta: f64,
    rng: &mut CounterRng,
) -> Result<(CloseVerdict, TestCertificate), StatsError> {
    use rayon::prelude::*;
    let m = closeness_samples(n, delta, alpha);
    let mut cert = TestCertificate::new("closeness", alpha, 0.0, delta);
    let base = rng.substream(0xC105E);
    let counts = (0..m)
        .into_par_iter()
        .fold(
            HashMap::<u64, (u64, u64)>::new,
            |mut counts, k| {
                let mut r = base.substream(k);
                let kp = sampler_p(&mut r);
                let kq = sampler_q(&mut r);
                counts.entry(kp).or_insert((0, 0)).0 += 1;
                counts.entry(kq).or_insert((0, 0)).1 += 1;
                counts
            },
        )
        .reduce(HashMap::new, |mut a, b| {
            for (k, (p, q)) in b {
                let e = a.entry(k).or_insert((0, 0));
                e.0 += p;
                e.1 += q;
            }
            a
        });
    for &k in counts.keys() {
        if k >= n {
            return Err(StatsError::SupportMismatch { key: k, n });
        }
    }
    cert.samples = 2 * m;
    let mf = m as f64;
    let heavy_cutoff = delta / (8.0 * (n as f64).powf(1.0 / 3.0));
    let mut heavy_l1 = 0.0f64;
    let mut light_z = 0.0f64;
    for &(a, b) in counts.values() {
        let combined = (a + b) as f64 / (2.0 * mf);
        if combined >= heavy_cutoff {
            heavy_l1 += (a as f64 - b as f64).abs() / mf;
        } else {
            let d = a as f64 - b as f64;
            light_z += d * d - (a + b) as f64;
        }
    }
    let light_l1 = (n as f64 * light_z.max(0.0)).sqrt() / mf;
    let estimate = heavy_l1 + light_l1;
    cert.notes.push(format!(
        "l1 estimate {estimate:.6} (heavy {heavy_l1:.6}, light {light_l1:.6}), threshold {:.6}",
        delta / 2.0
    ));
    let verdict = if estimate <= delta / 2.0 {
        CloseVerdict::Accept
    } else {
        CloseVerdict::Reject
    };
    Ok((verdict, cert))
}

/// Outcome of the horizon-doubling loop.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HorizonCertificate {
    pub horizon: f64,
    /// Times tested by the doubling schedule, in order.
    pub tested: Vec<f64>,
    pub samples: u64,
    pub effective_alpha: f64,
    pub effective_delta: f64,
}

/// Double `t` until the chain law at `t` is accepted as `delta_prime/3`-close
/// to the invariant estimate, halving the per-iteration error budget so the
/// total wrong-horizon probability stays below `alpha_prime`. Returns `t+1`
/// for the first accepted `t`.
pub fn duration_of_simulation(
    law_sampler: impl Fn(f64, &mut CounterRng) -> u64 + Sync,
    invariant_sampler: impl Fn(&mut CounterRng) -> u64 + Sync,
    n: u64,
    alpha_prime: f64,
    delta_prime: f64,
    horizon_cap: f64,
    rng: &mut CounterRng,
) -> Result<(f64, HorizonCertificate), StatsError> {
    let mut t = 1.0f64;
    let mut budget = alpha_prime;
    let mut cert = HorizonCertificate {
        horizon: 0.0,
        tested: Vec::new(),
        samples: 0,
        effective_alpha: alpha_prime,
        effective_delta: delta_prime,
    };
    let mut iteration = 0u64;
    loop {
        cert.tested.push(t);
        let mut call_rng = rng.substream(iteration);
        let (verdict, call_cert) = closeness_test(
            |r| law_sampler(t, r),
            &invariant_sampler,
            n,
            budget / 2.0,
            delta_prime / 3.0,
            &mut call_rng,
        )?;
        cert.samples += call_cert.samples;
        if verdict == CloseVerdict::Accept {
            cert.horizon = t + 1.0;
            return Ok((t + 1.0, cert));
        }
        t *= 2.0;
        budget /= 2.0;
        iteration += 1;
        if t > horizon_cap {
            return Err(StatsError::HorizonCap(horizon_cap));
        }
    }
}

/// Acklam's rational approximation of the standard normal quantile,
/// absolute error below 1.2e-9 on (0, 1).
pub fn inverse_normal_cdf(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    let p_low = 0.02425;
    if p < p_low {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - p_low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -inverse_normal_cdf(1.0 - p)
    }
}
