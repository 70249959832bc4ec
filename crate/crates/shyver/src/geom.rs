//! Axis-aligned boxes and piecewise-constant densities over them.

use serde::{Deserialize, Serialize};

/// Axis-aligned box `[lo_0, hi_0] x ... x [lo_{d-1}, hi_{d-1}]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Rect {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        assert_eq!(lo.len(), hi.len(), "box bounds must have equal dimension");
        Rect { lo, hi }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn volume(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| (h - l).max(0.0))
            .product()
    }

    pub fn is_empty(&self) -> bool {
        self.lo.iter().zip(&self.hi).any(|(l, h)| h < l)
    }

    pub fn is_bounded_nonempty(&self) -> bool {
        self.lo
            .iter()
            .zip(&self.hi)
            .all(|(l, h)| l.is_finite() && h.is_finite() && l < h)
    }

    /// Closed-box membership.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (l, h))| *v >= *l && *v <= *h)
    }

    pub fn contains_rect(&self, other: &Rect, tol: f64) -> bool {
        other
            .lo
            .iter()
            .zip(&self.lo)
            .all(|(ol, sl)| *ol >= *sl - tol)
            && other
                .hi
                .iter()
                .zip(&self.hi)
                .all(|(oh, sh)| *oh <= *sh + tol)
    }

    /// Intersection, or `None` when the interiors are disjoint.
    pub fn intersect(&self, other: &Rect) -> Option<Rect> {
        let lo: Vec<f64> = self
            .lo
            .iter()
            .zip(&other.lo)
            .map(|(a, b)| a.max(*b))
            .collect();
        let hi: Vec<f64> = self
            .hi
            .iter()
            .zip(&other.hi)
            .map(|(a, b)| a.min(*b))
            .collect();
        if lo.iter().zip(&hi).all(|(l, h)| l < h) {
            Some(Rect::new(lo, hi))
        } else {
            None
        }
    }

    /// Fraction of this box's volume covered by `other`.
    pub fn overlap_fraction(&self, other: &Rect) -> f64 {
        if self.lo == other.lo && self.hi == other.hi {
            return 1.0;
        }
        match self.intersect(other) {
            Some(r) => r.volume() / self.volume(),
            None => 0.0,
        }
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| 0.5 * (l + h))
            .collect()
    }
}

/// One constant piece of a density: `mass` spread uniformly over `support`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensityPiece {
    pub mode: usize,
    pub support: Rect,
    pub mass: f64,
}

impl DensityPiece {
    pub fn value(&self) -> f64 {
        self.mass / self.support.volume()
    }
}

/// Piecewise-constant density over boxes. Pieces may overlap; values add.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PiecewiseDensity {
    pub pieces: Vec<DensityPiece>,
}

impl PiecewiseDensity {
    pub fn total_mass(&self) -> f64 {
        self.pieces.iter().map(|p| p.mass).sum()
    }

    /// Mass inside a `(mode, box)` cell; exact because pieces are boxes.
    pub fn mass_in(&self, mode: usize, rect: &Rect) -> f64 {
        self.pieces
            .iter()
            .filter(|p| p.mode == mode)
            .map(|p| p.mass * p.support.overlap_fraction(rect))
            .sum()
    }

    /// Pointwise value at `(mode, x)`, summing overlapping pieces.
    pub fn value_at(&self, mode: usize, x: &[f64]) -> f64 {
        self.pieces
            .iter()
            .filter(|p| p.mode == mode && p.support.contains(x))
            .map(|p| p.value())
            .sum()
    }

    pub fn sup_value(&self) -> f64 {
        // Exact only when pieces do not overlap, which holds for every
        // density this tool constructs.
        self.pieces.iter().map(|p| p.value()).fold(0.0, f64::max)
    }
}
