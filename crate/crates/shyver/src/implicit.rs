//! Implicit CTMC family: a birth-death mode chain crossed with a contracting
//! grid over the continuous state.
//!
//! The underlying hybrid model is `dx/dt = (A_j + c_j |x|_inf) x` on the cube
//! `|x|_inf <= K` with `m` modes switching spontaneously down at rate
//! `lambda1` and up at `lambda2`. On the uniform grid with `eta` cells per
//! half-axis, the reduced chain's transitions are: mode switches at
//! `lambda1`/`lambda2` with continuous coordinates unchanged, and per-axis
//! moves one cell toward the origin at the inward drift flux rate
//!
//! `max(0, c_j K max_l|i_l| / eta^3  -  sign(i_k) (A x_face)_k / eta^2)`.
//!
//! States are index tuples `(i_1..i_n, j)`; nothing is materialized, so the
//! family scales to state spaces far beyond memory (4 x 20^40 and up).

use serde::{Deserialize, Serialize};

use num_bigint::BigUint;

use crate::markov::ChainError;
use crate::rng::CounterRng;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContractingJumpGrid {
    /// Continuous dimension (tuple length minus the mode slot).
    pub n: usize,
    /// Number of modes.
    pub m: usize,
    /// Grid cells per half-axis; the pitch is `k / eta`.
    pub eta: u32,
    /// Half-width of the state cube.
    pub k: f64,
    /// Mode down-switch rate (j -> j-1).
    pub lambda1: f64,
    /// Mode up-switch rate (j -> j+1).
    pub lambda2: f64,
    /// Per-mode nonlinear gain.
    pub c: Vec<f64>,
    /// Per-mode n x n drift matrices with non-positive entries.
    pub a: Vec<Vec<Vec<f64>>>,
    /// Shell threshold of the built-in observable (defaults to ceil(eta/2)).
    #[serde(default)]
    pub shell_threshold: Option<u32>,
    /// How many coordinates must sit at or beyond the threshold shell.
    #[serde(default = "default_pair_count")]
    pub pair_count: usize,
}

fn default_pair_count() -> usize {
    2
}

impl ContractingJumpGrid {
    /// Deterministic instance with diagonally dominant non-positive
    /// matrices, suitable for benchmarks.
    pub fn with_default_matrices(n: usize, m: usize, eta: u32, seed: u64) -> Self {
        let mut rng = CounterRng::from_path(seed, &[0x6a75]);
        let a = (0..m)
            .map(|_| {
                (0..n)
                    .map(|k| {
                        (0..n)
                            .map(|l| {
                                if k == l {
                                    -(0.6 + 0.2 * rng.next_f64())
                                } else {
                                    -0.1 * rng.next_f64() / n as f64
                                }
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        ContractingJumpGrid {
            n,
            m,
            eta,
            k: 1.0,
            lambda1: 0.03,
            lambda2: 0.02,
            c: (0..m).map(|j| 0.1 * (j + 1) as f64).collect(),
            a,
            shell_threshold: None,
            pair_count: 2,
        }
    }

    pub fn shell(&self) -> u32 {
        self.shell_threshold.unwrap_or(self.eta.div_ceil(2))
    }

    pub fn state_count(&self) -> f64 {
        self.m as f64 * (2.0 * self.eta as f64).powi(self.n as i32)
    }

    pub fn state_count_symbolic(&self) -> String {
        format!("{}*{}^{}", self.m, 2 * self.eta, self.n)
    }

    /// Uniform over all cells and modes, matching a uniform continuous
    /// initial density on the cube.
    pub fn sample_initial(&self, rng: &mut CounterRng) -> Vec<i32> {
        let mut s = Vec::with_capacity(self.n + 1);
        for _ in 0..self.n {
            s.push(self.random_shell_index(rng));
        }
        s.push(1 + rng.below(self.m as u64) as i32);
        s
    }

    fn random_shell_index(&self, rng: &mut CounterRng) -> i32 {
        let v = rng.below(2 * self.eta as u64) as i32 - self.eta as i32;
        if v >= 0 {
            v + 1
        } else {
            v
        }
    }

    fn inward_rate(&self, state: &[i32], axis: usize) -> f64 {
        let i = state[axis];
        if i.abs() <= 1 {
            return 0.0;
        }
        let mode = state[self.n] as usize - 1;
        let eta = self.eta as f64;
        let pitch = self.k / eta;
        let max_shell = state[..self.n].iter().map(|v| v.abs()).max().unwrap() as f64;
        let shell_term = self.c[mode] * self.k * max_shell / eta.powi(3);
        // Face-centered linear drift: x_axis pinned at the inward face, the
        // other coordinates at their cell midpoints.
        let sign = i.signum() as f64;
        let a = &self.a[mode][axis];
        let mut drift = a[axis] * sign * (i.abs() as f64 - 1.0) * pitch;
        for (l, &alal) in a.iter().enumerate() {
            if l != axis {
                let il = state[l];
                drift += alal * il.signum() as f64 * (il.abs() as f64 - 0.5) * pitch;
            }
        }
        (shell_term - sign * drift / eta.powi(2)).max(0.0)
    }

    pub fn total_rate(&self, state: &[i32]) -> f64 {
        let j = state[self.n];
        let mut total = 0.0;
        if j >= 2 {
            total += self.lambda1;
        }
        if (j as usize) < self.m {
            total += self.lambda2;
        }
        for axis in 0..self.n {
            total += self.inward_rate(state, axis);
        }
        total
    }

    /// A safe uniformization constant for every reachable state.
    pub fn rate_bound(&self) -> f64 {
        let eta = self.eta as f64;
        let c_max = self.c.iter().cloned().fold(0.0, f64::max);
        let a_max = self
            .a
            .iter()
            .flat_map(|m| m.iter())
            .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        self.lambda1
            + self.lambda2
            + self.n as f64 * (c_max * self.k / eta.powi(2) + a_max * self.k / eta.powi(2))
    }

    pub fn pick_transition(&self, state: &[i32], total: f64, rng: &mut CounterRng) -> Vec<i32> {
        let j = state[self.n];
        let mut u = rng.next_f64() * total;
        if j >= 2 {
            u -= self.lambda1;
            if u < 0.0 {
                let mut next = state.to_vec();
                next[self.n] = j - 1;
                return next;
            }
        }
        if (j as usize) < self.m {
            u -= self.lambda2;
            if u < 0.0 {
                let mut next = state.to_vec();
                next[self.n] = j + 1;
                return next;
            }
        }
        for axis in 0..self.n {
            u -= self.inward_rate(state, axis);
            if u < 0.0 {
                let mut next = state.to_vec();
                next[axis] = state[axis].signum() * (state[axis].abs() - 1);
                return next;
            }
        }
        state.to_vec()
    }

    /// Built-in observable: 1 when exactly `pair_count` coordinates sit at or
    /// beyond the threshold shell.
    pub fn observable_value(&self, state: &[i32]) -> f64 {
        let shell = self.shell() as i32;
        let outer = state[..self.n].iter().filter(|v| v.abs() >= shell).count();
        if outer == self.pair_count {
            1.0
        } else {
            0.0
        }
    }

    /// Analytic invariant: the mode marginal is the birth-death distribution
    /// with ratio `lambda2/lambda1`, and every coordinate is absorbed on the
    /// innermost shell.
    pub fn sample_invariant(&self, rng: &mut CounterRng) -> Vec<i32> {
        let mut s = Vec::with_capacity(self.n + 1);
        for _ in 0..self.n {
            s.push(if rng.next_f64() < 0.5 { -1 } else { 1 });
        }
        let ratio = self.lambda2 / self.lambda1;
        let weights: Vec<f64> = (0..self.m).map(|j| ratio.powi(j as i32)).collect();
        let total: f64 = weights.iter().sum();
        let mut u = rng.next_f64() * total;
        let mut mode = self.m;
        for (j, w) in weights.iter().enumerate() {
            u -= w;
            if u < 0.0 {
                mode = j + 1;
                break;
            }
        }
        s.push(mode as i32);
        s
    }

    /// Exact expectation of the built-in observable at the invariant.
    pub fn invariant_observable_mean(&self) -> f64 {
        if self.shell() >= 2 || self.pair_count > self.n {
            0.0
        } else {
            // Every coordinate sits on shell 1 >= threshold, so the count is
            // n, which matches only when pair_count == n.
            if self.pair_count == self.n {
                1.0
            } else {
                0.0
            }
        }
    }

    /// Exact expectation of the built-in observable at time zero (all
    /// coordinates independent and uniform over the shells).
    pub fn initial_observable_mean(&self) -> f64 {
        let p = (self.eta - self.shell() + 1) as f64 / self.eta as f64;
        binomial_pmf(self.n, self.pair_count, p)
    }

    /// Mixed-radix big-integer key for a state tuple.
    pub fn encode(&self, state: &[i32]) -> BigUint {
        let radix = BigUint::from(2 * self.eta);
        let mut key = BigUint::from(state[self.n] as u32 - 1);
        for &i in state[..self.n].iter() {
            let digit = if i < 0 {
                (i + self.eta as i32) as u32
            } else {
                (i - 1) as u32 + self.eta
            };
            key = key * &radix + BigUint::from(digit);
        }
        key
    }

    pub fn decode(&self, key: &BigUint) -> Vec<i32> {
        let radix = BigUint::from(2 * self.eta);
        let mut rest = key.clone();
        let mut coords = vec![0i32; self.n];
        for slot in (0..self.n).rev() {
            let digit: u32 = (&rest % &radix).try_into().unwrap();
            rest /= &radix;
            coords[slot] = if digit < self.eta {
                digit as i32 - self.eta as i32
            } else {
                (digit - self.eta) as i32 + 1
            };
        }
        let mode: u32 = rest.try_into().unwrap();
        coords.push(mode as i32 + 1);
        coords
    }

    /// Compact `u64` key, available only when the state space fits.
    pub fn encode_u64(&self, state: &[i32]) -> Result<u64, ChainError> {
        if self.state_count() > u64::MAX as f64 / 2.0 {
            return Err(ChainError::CapExceeded {
                n: u64::MAX,
                cap: u64::MAX / 2,
            });
        }
        let key = self.encode(state);
        Ok(key.try_into().expect("checked size"))
    }
}

fn binomial_pmf(n: usize, k: usize, p: f64) -> f64 {
    if k > n {
        return 0.0;
    }
    let mut comb = 1.0;
    for i in 0..k {
        comb *= (n - i) as f64 / (i + 1) as f64;
    }
    comb * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32)
}

pub fn load_family(text: &str) -> Result<ContractingJumpGrid, serde_json::Error> {
    serde_json::from_str(text)
}
