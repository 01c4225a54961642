//! Discretization of the torus and the integer frequency window.
//!
//! All fields over the fundamental domain `[-1/2, 1/2)^n` are sampled on a
//! uniform tensor grid, and all sequences over `Z^n` are truncated to the cube
//! `{-K, ..., K}^n`. Both carry a fixed lexicographic enumeration so that
//! vectors and matrices indexed by them line up across the whole crate.

use serde::{Deserialize, Serialize};

/// Uniform tensor grid on `[-1/2, 1/2)^n` with `M` cells per axis.
///
/// Points along each axis are `t_j = (j + offset) / M - 1/2` for
/// `j = 0, ..., M-1`. The default `offset = 1/2` centers each point in its
/// cell, which keeps the grid clear of `t = 0` and the seam `t = -1/2` where
/// several model systems degenerate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorusGrid {
    pub n: usize,
    pub m: usize,
    pub offset: f64,
}

impl TorusGrid {
    pub fn new(n: usize, m: usize) -> Self {
        Self::with_offset(n, m, 0.5)
    }

    pub fn with_offset(n: usize, m: usize, offset: f64) -> Self {
        assert!(n >= 1, "dimension must be at least 1");
        assert!(m >= 1, "grid must have at least one cell per axis");
        assert!((0.0..1.0).contains(&offset), "offset must lie in [0, 1)");
        Self { n, m, offset }
    }

    /// Number of grid points, `M^n`.
    pub fn len(&self) -> usize {
        self.m.pow(self.n as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn axis_point(&self, j: usize) -> f64 {
        (j as f64 + self.offset) / self.m as f64 - 0.5
    }

    /// The grid point with lexicographic index `idx` (last axis fastest).
    pub fn point(&self, idx: usize) -> Vec<f64> {
        debug_assert!(idx < self.len());
        let mut rem = idx;
        let mut out = vec![0.0; self.n];
        for axis in (0..self.n).rev() {
            out[axis] = self.axis_point(rem % self.m);
            rem /= self.m;
        }
        out
    }

    /// Iterates over all grid points in lexicographic order.
    pub fn points(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.len()).map(|i| self.point(i))
    }

    /// Quadrature weight of one cell, `M^{-n}`; the weights sum to one.
    pub fn cell_weight(&self) -> f64 {
        1.0 / self.len() as f64
    }
}

/// The truncation cube `{-K, ..., K}^n` of integer frequencies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreqWindow {
    pub n: usize,
    pub k: usize,
}

impl FreqWindow {
    pub fn new(n: usize, k: usize) -> Self {
        assert!(n >= 1, "dimension must be at least 1");
        Self { n, k }
    }

    /// Points per axis, `2K + 1`.
    pub fn side(&self) -> usize {
        2 * self.k + 1
    }

    /// Total number of indices, `(2K + 1)^n`.
    pub fn len(&self) -> usize {
        self.side().pow(self.n as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// The index with lexicographic position `pos` (last axis fastest),
    /// axes running `-K, ..., K`.
    pub fn index(&self, pos: usize) -> Vec<i64> {
        debug_assert!(pos < self.len());
        let side = self.side();
        let mut rem = pos;
        let mut out = vec![0i64; self.n];
        for axis in (0..self.n).rev() {
            out[axis] = (rem % side) as i64 - self.k as i64;
            rem /= side;
        }
        out
    }

    /// Lexicographic position of `k`, or `None` if outside the window.
    pub fn position(&self, k: &[i64]) -> Option<usize> {
        if k.len() != self.n {
            return None;
        }
        let side = self.side();
        let mut pos = 0usize;
        for &ki in k {
            if ki.unsigned_abs() as usize > self.k {
                return None;
            }
            pos = pos * side + (ki + self.k as i64) as usize;
        }
        Some(pos)
    }

    /// Iterates over all indices in lexicographic order.
    pub fn indices(&self) -> impl Iterator<Item = Vec<i64>> + '_ {
        (0..self.len()).map(|p| self.index(p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use num_rational::Rational64;

    #[test]
    fn grid_points_centered() {
        let g = TorusGrid::new(1, 4);
        let pts: Vec<f64> = g.points().map(|p| p[0]).collect();
        assert_eq!(pts, vec![-0.375, -0.125, 0.125, 0.375]);
        assert!(pts.iter().all(|&t| t != 0.0 && t.abs() != 0.5));
    }

    #[test]
    fn grid_points_with_zero_offset_hit_origin() {
        let g = TorusGrid::with_offset(1, 4, 0.0);
        let pts: Vec<f64> = g.points().map(|p| p[0]).collect();
        assert_eq!(pts, vec![-0.5, -0.25, 0.0, 0.25]);
    }

    #[test]
    fn grid_covers_fundamental_domain() {
        let g = TorusGrid::new(2, 5);
        assert_eq!(g.len(), 25);
        for p in g.points() {
            assert!(p.iter().all(|&t| (-0.5..0.5).contains(&t)));
        }
    }

    #[test]
    fn grid_lexicographic_order() {
        let g = TorusGrid::new(2, 3);
        let pts: Vec<Vec<f64>> = g.points().collect();
        // Last axis varies fastest.
        assert_eq!(pts[0][0], pts[1][0]);
        assert!(pts[0][1] < pts[1][1]);
        assert!(pts[2][0] < pts[3][0]);
    }

    /// The cell weights sum to exactly one; checked in exact rational
    /// arithmetic on the defining fractions.
    #[test]
    fn quadrature_weights_sum_to_one() {
        for (n, m) in [(1usize, 7usize), (2, 5), (3, 3)] {
            let g = TorusGrid::new(n, m);
            let w = Rational64::new(1, g.len() as i64);
            let total: Rational64 = (0..g.len()).map(|_| w).sum();
            assert_eq!(total, Rational64::new(1, 1));
            assert_abs_diff_eq!(
                g.cell_weight() * g.len() as f64,
                1.0,
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn window_enumeration_roundtrips() {
        let w = FreqWindow::new(2, 3);
        assert_eq!(w.len(), 49);
        for pos in 0..w.len() {
            let k = w.index(pos);
            assert_eq!(w.position(&k), Some(pos));
        }
        assert_eq!(w.index(0), vec![-3, -3]);
        assert_eq!(w.index(w.len() - 1), vec![3, 3]);
    }

    #[test]
    fn window_rejects_out_of_range() {
        let w = FreqWindow::new(1, 2);
        assert_eq!(w.position(&[3]), None);
        assert_eq!(w.position(&[-3]), None);
        assert_eq!(w.position(&[0, 0]), None);
        assert_eq!(w.position(&[0]), Some(2));
    }

    #[test]
    fn window_order_is_lexicographic() {
        let w = FreqWindow::new(2, 1);
        let all: Vec<Vec<i64>> = w.indices().collect();
        let mut sorted = all.clone();
        sorted.sort();
        assert_eq!(all, sorted);
        assert_eq!(all[0], vec![-1, -1]);
        assert_eq!(all[1], vec![-1, 0]);
        assert_eq!(all[4], vec![0, 0]);
    }
}
