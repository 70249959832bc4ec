//! Uniform grid partitions of the hybrid state space, and the projection /
//! injection pair between densities and cell-mass vectors.
//!
//! Cells are ordered lexicographically by (mode index, integer grid
//! coordinates), which makes every matrix built on top reproducible.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{DensityPiece, PiecewiseDensity, Rect};

const PITCH_REL_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum PartitionError {
    #[error("pitch {pitch} does not divide edge {edge} of mode {mode} (axis {axis})")]
    NonDivisiblePitch {
        pitch: f64,
        edge: f64,
        mode: usize,
        axis: usize,
    },
    #[error("partition would have {cells} cells, above the cap {cap}")]
    TooManyCells { cells: u64, cap: u64 },
}

/// One grid cell: a box inside a single mode's flow domain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Cell {
    pub mode: usize,
    pub grid: Vec<u32>,
    pub rect: Rect,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Partition {
    pub pitch: f64,
    pub dim: usize,
    pub cells: Vec<Cell>,
    /// Cells per axis for each mode, in mode order.
    pub shape: Vec<Vec<u32>>,
    /// First cell index of each mode.
    pub mode_offsets: Vec<usize>,
}

impl Partition {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cell_measure(&self, i: usize) -> f64 {
        self.cells[i].rect.volume()
    }

    /// Index of the cell with the given mode and grid coordinates.
    pub fn index_of(&self, mode: usize, grid: &[u32]) -> usize {
        let mut idx = 0usize;
        for (axis, &g) in grid.iter().enumerate() {
            idx = idx * self.shape[mode][axis] as usize + g as usize;
        }
        self.mode_offsets[mode] + idx
    }

    /// Neighbor across the face `axis/dir`, if it exists in the same mode.
    pub fn neighbor(&self, i: usize, axis: usize, dir: i32) -> Option<usize> {
        let cell = &self.cells[i];
        let g = cell.grid[axis] as i64 + dir as i64;
        if g < 0 || g >= self.shape[cell.mode][axis] as i64 {
            return None;
        }
        let mut grid = cell.grid.clone();
        grid[axis] = g as u32;
        Some(self.index_of(cell.mode, &grid))
    }

    /// The shared face between cell `i` and its neighbor across `axis/dir`,
    /// as a box with that axis pinned.
    pub fn face(&self, i: usize, axis: usize, dir: i32) -> Rect {
        let cell = &self.cells[i];
        let coord = if dir > 0 {
            cell.rect.hi[axis]
        } else {
            cell.rect.lo[axis]
        };
        let mut lo = cell.rect.lo.clone();
        let mut hi = cell.rect.hi.clone();
        lo[axis] = coord;
        hi[axis] = coord;
        Rect::new(lo, hi)
    }

    /// Cell containing `(mode, x)`; boundary points resolve to the nearest
    /// cell inside.
    pub fn locate(&self, mode: usize, x: &[f64], domains: &[Rect]) -> usize {
        let domain = &domains[mode];
        let grid: Vec<u32> = (0..self.dim)
            .map(|a| {
                let g = ((x[a] - domain.lo[a]) / self.pitch).floor() as i64;
                g.clamp(0, self.shape[mode][a] as i64 - 1) as u32
            })
            .collect();
        self.index_of(mode, &grid)
    }
}

/// Distribution over cells: nonnegative weights summing to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbVector(pub Vec<f64>);

impl ProbVector {
    pub fn uniform(n: usize) -> Self {
        ProbVector(vec![1.0 / n as f64; n])
    }

    pub fn point_mass(n: usize, at: usize) -> Self {
        let mut v = vec![0.0; n];
        v[at] = 1.0;
        ProbVector(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.0.iter().any(|&w| w < 0.0) {
            return Err("negative entry".to_string());
        }
        let sum: f64 = self.0.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(format!("entries sum to {sum}, not 1"));
        }
        Ok(())
    }

    pub fn l1_distance(&self, other: &ProbVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .sum()
    }

    pub fn dot(&self, weights: &[f64]) -> f64 {
        self.0.iter().zip(weights).map(|(p, w)| p * w).sum()
    }
}

/// Partition every flow domain into hypercube cells of edge length `pitch`.
pub fn build_grid_partition(
    domains: &[Rect],
    pitch: f64,
    cell_cap: u64,
) -> Result<Partition, PartitionError> {
    let dim = domains.first().map(|r| r.dim()).unwrap_or(0);
    let mut shape: Vec<Vec<u32>> = Vec::with_capacity(domains.len());
    let mut total: u64 = 0;
    for (mode, rect) in domains.iter().enumerate() {
        let mut counts = Vec::with_capacity(dim);
        let mut mode_cells: u64 = 1;
        for axis in 0..dim {
            let edge = rect.hi[axis] - rect.lo[axis];
            let n = (edge / pitch).round();
            if n < 1.0 || ((n * pitch - edge).abs() > PITCH_REL_TOL * edge.max(1.0)) {
                return Err(PartitionError::NonDivisiblePitch {
                    pitch,
                    edge,
                    mode,
                    axis,
                });
            }
            counts.push(n as u32);
            mode_cells *= n as u64;
        }
        total += mode_cells;
        shape.push(counts);
    }
    if total > cell_cap {
        return Err(PartitionError::TooManyCells {
            cells: total,
            cap: cell_cap,
        });
    }

    let mut cells = Vec::with_capacity(total as usize);
    let mut mode_offsets = Vec::with_capacity(domains.len());
    for (mode, rect) in domains.iter().enumerate() {
        mode_offsets.push(cells.len());
        let counts = &shape[mode];
        let mut grid = vec![0u32; dim];
        loop {
            // Cell corners are computed as lo + k * pitch so that shared
            // faces of neighboring cells agree bitwise.
            let lo: Vec<f64> = (0..dim)
                .map(|a| rect.lo[a] + grid[a] as f64 * pitch)
                .collect();
            let hi: Vec<f64> = (0..dim)
                .map(|a| {
                    if grid[a] + 1 == counts[a] {
                        rect.hi[a]
                    } else {
                        rect.lo[a] + (grid[a] + 1) as f64 * pitch
                    }
                })
                .collect();
            cells.push(Cell {
                mode,
                grid: grid.clone(),
                rect: Rect::new(lo, hi),
            });
            // Lexicographic increment, last axis fastest.
            let mut axis = dim;
            loop {
                if axis == 0 {
                    break;
                }
                axis -= 1;
                grid[axis] += 1;
                if grid[axis] < counts[axis] {
                    break;
                }
                grid[axis] = 0;
            }
            if grid.iter().all(|&g| g == 0) {
                break;
            }
        }
    }
    Ok(Partition {
        pitch,
        dim,
        cells,
        shape,
        mode_offsets,
    })
}

/// Refine a partition by halving the pitch over the same domains.
pub fn refine(partition: &Partition, domains: &[Rect], cell_cap: u64) -> Result<Partition, PartitionError> {
    build_grid_partition(domains, partition.pitch / 2.0, cell_cap)
}

/// Exact cell masses of a box-aligned piecewise-constant density.
pub fn project(density: &PiecewiseDensity, partition: &Partition) -> ProbVector {
    let mut p = vec![0.0; partition.len()];
    for piece in &density.pieces {
        // Restrict the scan to cells the piece can touch.
        for (i, cell) in partition.cells.iter().enumerate() {
            if cell.mode == piece.mode {
                let frac = piece.support.overlap_fraction(&cell.rect);
                if frac > 0.0 {
                    p[i] += piece.mass * frac;
                }
            }
        }
    }
    ProbVector(p)
}

/// Cell-wise uniform density carrying the given cell masses.
pub fn inject(p: &ProbVector, partition: &Partition) -> PiecewiseDensity {
    let pieces = partition
        .cells
        .iter()
        .zip(&p.0)
        .filter(|(_, &mass)| mass != 0.0)
        .map(|(cell, &mass)| DensityPiece {
            mode: cell.mode,
            support: cell.rect.clone(),
            mass,
        })
        .collect();
    PiecewiseDensity { pieces }
}
