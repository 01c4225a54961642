//! Per-fiber Gramian fields and their eigenvalue classification.
//!
//! At each grid point the generator fibers span a finite-dimensional
//! subspace; the Hermitian Gram matrix of their pairwise weighted inner
//! products carries everything the classification needs. Its extreme
//! eigenvalues over the grid give the Bessel and frame bounds, its rank gives
//! the dimension function, and rank deficits separate frames from Riesz
//! families. Window truncation perturbs every eigenvalue by at most the sum
//! of the per-generator tail certificates, so bounds are reported as
//! intervals rather than bare numbers.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fiber::FiberField;
use crate::grid::{FreqWindow, TorusGrid};
use crate::linalg::{rank_threshold, HermitianEigen};
use crate::weights::Weight;

/// The field of `r×r` fiber Gram matrices over the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GramianField {
    pub grid: TorusGrid,
    pub window: FreqWindow,
    pub weight: Weight,
    pub r: usize,
    pub labels: Vec<String>,
    /// Per-generator tail certificates; their sum bounds the eigenvalue
    /// error of every `G(t)`.
    pub eps_tails: Vec<f64>,
    mats: Vec<DMatrix<Complex64>>,
}

impl GramianField {
    pub fn matrix(&self, grid_idx: usize) -> &DMatrix<Complex64> {
        &self.mats[grid_idx]
    }

    /// Aggregate eigenvalue error bar from the truncation, `Σ_i ε_i`.
    pub fn eps_aggregate(&self) -> f64 {
        self.eps_tails.iter().sum()
    }
}

/// Builds the Gramian field `G(t)_{ij} = ⟨fiber_j(t), fiber_i(t)⟩` of a
/// generator family over a shared discretization.
pub fn gramian_field(fields: &[FiberField]) -> Result<GramianField> {
    let first = fields
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty generator family".into()))?;
    for f in &fields[1..] {
        first.check_compatible(f)?;
    }
    let r = fields.len();
    let mats: Vec<DMatrix<Complex64>> = (0..first.grid.len())
        .into_par_iter()
        .map(|t| {
            let mut g = DMatrix::<Complex64>::zeros(r, r);
            for i in 0..r {
                for j in i..r {
                    let v = fields[j]
                        .fiber(t)
                        .inner(fields[i].fiber(t))
                        .expect("fields already checked compatible");
                    g[(i, j)] = v;
                    if i != j {
                        g[(j, i)] = v.conj();
                    } else {
                        g[(i, j)] = Complex64::new(v.re, 0.0);
                    }
                }
            }
            g
        })
        .collect();
    Ok(GramianField {
        grid: first.grid.clone(),
        window: first.window.clone(),
        weight: first.weight,
        r,
        labels: fields.iter().map(|f| f.label.clone()).collect(),
        eps_tails: fields.iter().map(|f| f.eps_tail).collect(),
        mats,
    })
}

/// Ascending eigenvalues of every `G(t)`, for classification and plotting.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenCurves {
    /// Grid points, in grid order.
    pub t: Vec<Vec<f64>>,
    /// `lambda[j]` holds the `r` ascending eigenvalues at `t[j]`.
    pub lambda: Vec<Vec<f64>>,
}

pub fn eigen_curves(g: &GramianField) -> EigenCurves {
    let lambda: Vec<Vec<f64>> = g
        .mats
        .par_iter()
        .map(|m| HermitianEigen::new(m).values)
        .collect();
    EigenCurves { t: (0..g.grid.len()).map(|j| g.grid.point(j)).collect(), lambda }
}

/// Dimension function and spectrum indicator under the relative rank rule:
/// an eigenvalue counts toward the dimension iff it exceeds
/// `ε_rank · max(λ_max(t), ε_abs)`.
pub fn dimension_and_spectrum(g: &GramianField, eps_rank: f64) -> (Vec<usize>, Vec<bool>) {
    assert!((0.0..1.0).contains(&eps_rank) && eps_rank > 0.0, "eps_rank must be in (0,1)");
    let dims: Vec<usize> = g
        .mats
        .par_iter()
        .map(|m| HermitianEigen::new(m).rank(eps_rank))
        .collect();
    let spectrum = dims.iter().map(|&d| d > 0).collect();
    (dims, spectrum)
}

/// Classification of a generator system over the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub generator_labels: Vec<String>,
    pub n: usize,
    /// Grid resolution per axis.
    pub m: usize,
    /// Frequency window cutoff.
    pub k_window: usize,
    pub offset: f64,
    /// Smoothness index of the analysis space.
    pub s: f64,
    pub r: usize,
    pub eps_rank: f64,
    pub eps_abs: f64,
    /// Aggregate tail certificate; half-width of the bound intervals.
    pub eps_tail: f64,
    /// Largest Gramian eigenvalue over the grid.
    pub bessel_bound: f64,
    /// Smallest counted eigenvalue over the spectrum.
    pub frame_lower: f64,
    pub frame_upper: f64,
    /// `[frame_lower − eps_tail, frame_lower]`.
    pub lower_interval: [f64; 2],
    /// `[frame_upper, frame_upper + eps_tail]`.
    pub upper_interval: [f64; 2],
    pub is_frame: bool,
    pub is_riesz: bool,
    /// Present iff the family is Riesz; equals `[frame_lower, frame_upper]`.
    pub riesz_bounds: Option<[f64; 2]>,
    /// Whether the fibers span the whole truncated window everywhere; the
    /// untruncated condition is not decidable from finite data.
    pub is_fundamental_within_window: bool,
    /// Dimension function over the grid, in grid order.
    pub dimension: Vec<usize>,
    /// Spectrum indicator over the grid, in grid order.
    pub spectrum: Vec<bool>,
}

/// Classifies the system: Bessel and frame bounds, Riesz and fundamental
/// verdicts, dimension function and spectrum.
///
/// Fails with a degenerate-system error when every `G(t)` vanishes, since no
/// nonzero eigenvalue exists to bound from below.
pub fn classify_system(g: &GramianField, eps_rank: f64) -> Result<AnalysisReport> {
    assert!((0.0..1.0).contains(&eps_rank) && eps_rank > 0.0, "eps_rank must be in (0,1)");
    let eigs: Vec<HermitianEigen> = g.mats.par_iter().map(HermitianEigen::new).collect();

    let mut bessel = f64::NEG_INFINITY;
    let mut frame_lower = f64::INFINITY;
    let mut dimension = Vec::with_capacity(eigs.len());
    for e in &eigs {
        let lam_max = e.max_value();
        bessel = bessel.max(lam_max);
        let thr = rank_threshold(lam_max, eps_rank);
        let d = e.values.iter().filter(|&&v| v > thr).count();
        dimension.push(d);
        if d > 0 {
            let smallest_counted = e
                .values
                .iter()
                .copied()
                .find(|&v| v > thr)
                .expect("d > 0 implies a counted eigenvalue");
            frame_lower = frame_lower.min(smallest_counted);
        }
    }
    let spectrum: Vec<bool> = dimension.iter().map(|&d| d > 0).collect();
    if !spectrum.iter().any(|&b| b) {
        return Err(Error::DegenerateSystem);
    }
    let is_riesz = dimension.iter().all(|&d| d == g.r);
    let is_fundamental = dimension.iter().all(|&d| d == g.window.len());
    let eps_tail = g.eps_aggregate();
    Ok(AnalysisReport {
        generator_labels: g.labels.clone(),
        n: g.grid.n,
        m: g.grid.m,
        k_window: g.window.k,
        offset: g.grid.offset,
        s: g.weight.s,
        r: g.r,
        eps_rank,
        eps_abs: crate::EPS_ABS,
        eps_tail,
        bessel_bound: bessel,
        frame_lower,
        frame_upper: bessel,
        lower_interval: [frame_lower - eps_tail, frame_lower],
        upper_interval: [bessel, bessel + eps_tail],
        is_frame: true,
        is_riesz,
        riesz_bounds: is_riesz.then_some([frame_lower, bessel]),
        is_fundamental_within_window: is_fundamental,
        dimension,
        spectrum,
    })
}
