//! Programmatic constructors for the benchmark models used across the test
//! suite and shipped as JSON files under `assets/`.

use std::collections::BTreeMap;

use crate::expr::Expr;
use crate::geom::{DensityPiece, PiecewiseDensity, Rect};
use crate::model::{HybridModelCt, KernelEntry, KernelTrigger, Observable};

/// Two-mode system on `{1} x [0,1]  u  {2} x [2,4]`: unit drift and unit
/// diffusion in both modes, spontaneous jump rate 1/3 everywhere, all jumps
/// landing uniformly in the other mode's box, initial state uniform on
/// `[0, 1/2]`. Observables `y1`, `y2` are the mode masses.
pub fn two_mode_example() -> HybridModelCt {
    let modes = vec!["m1".to_string(), "m2".to_string()];
    let box1 = Rect::new(vec![0.0], vec![1.0]);
    let box2 = Rect::new(vec![2.0], vec![4.0]);
    let mut observables = BTreeMap::new();
    observables.insert(
        "y1".to_string(),
        Observable {
            name: "y1".to_string(),
            pieces: vec![(0, box1.clone(), 1.0)],
        },
    );
    observables.insert(
        "y2".to_string(),
        Observable {
            name: "y2".to_string(),
            pieces: vec![(1, box2.clone(), 1.0)],
        },
    );
    HybridModelCt {
        dim: 1,
        modes,
        flow_domains: vec![box1.clone(), box2.clone()],
        drift: vec![vec![Expr::constant(1.0)], vec![Expr::constant(1.0)]],
        diffusion: vec![vec![vec![Expr::constant(1.0)]], vec![vec![Expr::constant(1.0)]]],
        jump_rate: vec![Expr::constant(1.0 / 3.0), Expr::constant(1.0 / 3.0)],
        jump_kernel: vec![
            KernelEntry {
                from_mode: 0,
                trigger: KernelTrigger::AnyBoundary,
                to_mode: 1,
                target: box2.clone(),
                weight: 1.0,
            },
            KernelEntry {
                from_mode: 1,
                trigger: KernelTrigger::AnyBoundary,
                to_mode: 0,
                target: box1.clone(),
                weight: 1.0,
            },
            KernelEntry {
                from_mode: 0,
                trigger: KernelTrigger::Region(box1.clone()),
                to_mode: 1,
                target: box2.clone(),
                weight: 1.0,
            },
            KernelEntry {
                from_mode: 1,
                trigger: KernelTrigger::Region(box2),
                to_mode: 0,
                target: box1,
                weight: 1.0,
            },
        ],
        initial_density: PiecewiseDensity {
            pieces: vec![DensityPiece {
                mode: 0,
                support: Rect::new(vec![0.0], vec![0.5]),
                mass: 1.0,
            }],
        },
        observables,
    }
}

/// Single-mode pure diffusion on `[0,1]` with reflecting walls (no jump
/// kernel): drift `f`, unit diffusion, zero jump rate. The initial state is
/// uniform on `[init_lo, init_hi]` and the observable `left` is the indicator
/// of `[0, 1/2]`.
pub fn diffusion_on_unit_interval(drift: f64, init_lo: f64, init_hi: f64) -> HybridModelCt {
    let domain = Rect::new(vec![0.0], vec![1.0]);
    let mut observables = BTreeMap::new();
    observables.insert(
        "left".to_string(),
        Observable {
            name: "left".to_string(),
            pieces: vec![(0, Rect::new(vec![0.0], vec![0.5]), 1.0)],
        },
    );
    HybridModelCt {
        dim: 1,
        modes: vec!["m".to_string()],
        flow_domains: vec![domain],
        drift: vec![vec![Expr::constant(drift)]],
        diffusion: vec![vec![vec![Expr::constant(1.0)]]],
        jump_rate: vec![Expr::constant(0.0)],
        jump_kernel: Vec::new(),
        initial_density: PiecewiseDensity {
            pieces: vec![DensityPiece {
                mode: 0,
                support: Rect::new(vec![init_lo], vec![init_hi]),
                mass: 1.0,
            }],
        },
        observables,
    }
}
