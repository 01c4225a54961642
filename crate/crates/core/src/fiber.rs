//! Fiberization: the isometry between a shift-invariant subspace of `H^s`
//! and vector-valued functions on the torus.
//!
//! For a generator with transform `φ̂` and smoothness `s`, the fiber at a
//! torus point `t` is the weighted sequence with plain coordinates
//! `φ̂(t+k)·μ_s(t+k)/μ_s(k)`, indexed by `k` in the frequency window. The
//! component formula is forced by composing the three legs of the lifting
//! diagram: divide by `μ_s` to land in `L²`, collect classical fibers
//! `ĝ(t+k)`, then renormalize each slot by `1/μ_s(k)`. The isometry
//! `Σ_j M^{-n} ‖F(t_j)‖² ≈ ∫ |φ̂|² μ_s²` is checked against the independent
//! quadrature oracle in the integration tests.
//!
//! Internally fibers live in rescaled coordinates `φ̂(t+k)·μ_s(t+k)`, where
//! the weighted inner product is a plain complex dot product. The slot
//! normalization `1/μ_s(k)` cancels there, but it is restored whenever plain
//! coordinates are read out or persisted.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::generator::GeneratorSpec;
use crate::grid::{FreqWindow, TorusGrid};
use crate::weights::{Weight, WeightedSeq};

/// A discretized fiber map: one truncated weighted sequence per grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct FiberField {
    pub grid: TorusGrid,
    pub window: FreqWindow,
    pub weight: Weight,
    pub label: String,
    /// Certified bound on the weighted tail mass dropped by the window
    /// truncation, `sup_t Σ_{|k|>K} |φ̂(t+k)|² μ_s(t+k)²`.
    pub eps_tail: f64,
    fibers: Vec<WeightedSeq>,
}

impl FiberField {
    pub fn new(
        grid: TorusGrid,
        window: FreqWindow,
        weight: Weight,
        label: String,
        eps_tail: f64,
        fibers: Vec<WeightedSeq>,
    ) -> Self {
        assert_eq!(fibers.len(), grid.len());
        assert!(fibers.iter().all(|f| f.window == window && f.weight.compatible(&weight)));
        Self { grid, window, weight, label, eps_tail, fibers }
    }

    pub fn fiber(&self, grid_idx: usize) -> &WeightedSeq {
        &self.fibers[grid_idx]
    }

    pub fn fibers(&self) -> &[WeightedSeq] {
        &self.fibers
    }

    /// Squared field norm `Σ_j M^{-n} ‖F(t_j)‖²`, the quadrature of the
    /// `H^s` norm over the window band.
    pub fn norm_sqr(&self) -> f64 {
        let w = self.grid.cell_weight();
        self.fibers.iter().map(|f| f.norm_sqr() * w).sum()
    }

    pub fn check_compatible(&self, other: &FiberField) -> Result<()> {
        if self.grid != other.grid
            || self.window != other.window
            || !self.weight.compatible(&other.weight)
        {
            return Err(Error::IncompatibleSpace(format!(
                "fields '{}' and '{}' have different discretizations",
                self.label, other.label
            )));
        }
        Ok(())
    }

    /// Field inner product `Σ_j M^{-n} ⟨F(t_j), G(t_j)⟩`, the quadrature of
    /// the `H^s` pairing.
    pub fn inner(&self, other: &FiberField) -> Result<Complex64> {
        self.check_compatible(other)?;
        let w = self.grid.cell_weight();
        let mut acc = Complex64::default();
        for (a, b) in self.fibers.iter().zip(&other.fibers) {
            acc += a.inner(b)? * w;
        }
        Ok(acc)
    }

    pub fn sub(&self, other: &FiberField) -> Result<FiberField> {
        self.check_compatible(other)?;
        let fibers = self
            .fibers
            .iter()
            .zip(&other.fibers)
            .map(|(a, b)| a.sub(b))
            .collect::<Result<Vec<_>>>()?;
        Ok(FiberField {
            grid: self.grid.clone(),
            window: self.window.clone(),
            weight: self.weight,
            label: format!("{} - {}", self.label, other.label),
            eps_tail: self.eps_tail,
            fibers,
        })
    }

    pub fn scale(&self, c: Complex64) -> FiberField {
        FiberField {
            grid: self.grid.clone(),
            window: self.window.clone(),
            weight: self.weight,
            label: self.label.clone(),
            eps_tail: self.eps_tail * c.norm_sqr(),
            fibers: self.fibers.iter().map(|f| f.scale(c)).collect(),
        }
    }
}

/// Computes the fiber field of a generator at smoothness `w.s`.
///
/// Refuses generators whose truncation cannot be certified; the certificate
/// travels with the field as `eps_tail`.
pub fn fiberize(
    spec: &GeneratorSpec,
    w: Weight,
    grid: &TorusGrid,
    win: &FreqWindow,
) -> Result<FiberField> {
    if grid.n != w.n || win.n != w.n {
        return Err(Error::IncompatibleSpace(format!(
            "grid dimension {}, window dimension {}, weight dimension {}",
            grid.n, win.n, w.n
        )));
    }
    let eps_tail = spec.validate_truncation(&w, win)?;
    let shifts: Vec<Vec<i64>> = win.indices().collect();
    let fibers: Vec<WeightedSeq> = (0..grid.len())
        .into_par_iter()
        .map(|j| -> Result<WeightedSeq> {
            let t = grid.point(j);
            let mut xi = vec![0.0; w.n];
            let mut rescaled = Vec::with_capacity(shifts.len());
            for k in &shifts {
                for (x, (&ti, &ki)) in xi.iter_mut().zip(t.iter().zip(k)) {
                    *x = ti + ki as f64;
                }
                let v = spec.fourier_eval(&xi)?;
                rescaled.push(v * w.eval(&xi));
            }
            Ok(WeightedSeq::from_rescaled(win.clone(), w, rescaled))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FiberField::new(grid.clone(), win.clone(), w, spec.label.clone(), eps_tail, fibers))
}

/// Fourier samples of a function on the window band `∪_k (grid + k)`,
/// `values[j][p] = f̂(t_j + k_p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierSamples {
    pub grid: TorusGrid,
    pub window: FreqWindow,
    pub values: Vec<Vec<Complex64>>,
}

/// Reads a fiber field back out as plain Fourier samples,
/// `f̂(t+k) = F(t)_k · μ_s(k) / μ_s(t+k)`.
pub fn defiberize(field: &FiberField) -> FourierSamples {
    let shifts: Vec<Vec<i64>> = field.window.indices().collect();
    let values = (0..field.grid.len())
        .map(|j| {
            let t = field.grid.point(j);
            let mut xi = vec![0.0; field.grid.n];
            field
                .fiber(j)
                .rescaled()
                .iter()
                .zip(&shifts)
                .map(|(&v, k)| {
                    for (x, (&ti, &ki)) in xi.iter_mut().zip(t.iter().zip(k)) {
                        *x = ti + ki as f64;
                    }
                    v / field.weight.eval(&xi)
                })
                .collect()
        })
        .collect();
    FourierSamples { grid: field.grid.clone(), window: field.window.clone(), values }
}

/// Applies the Bessel-potential lift of order `w.s` to Fourier samples:
/// `f̂(ξ) = ĝ(ξ)/μ_s(ξ)` at every sampled `ξ = t + k`.
pub fn bessel_shift(samples: &FourierSamples, w: &Weight) -> FourierSamples {
    let shifts: Vec<Vec<i64>> = samples.window.indices().collect();
    let values = samples
        .values
        .iter()
        .enumerate()
        .map(|(j, row)| {
            let t = samples.grid.point(j);
            let mut xi = vec![0.0; samples.grid.n];
            row.iter()
                .zip(&shifts)
                .map(|(&v, k)| {
                    for (x, (&ti, &ki)) in xi.iter_mut().zip(t.iter().zip(k)) {
                        *x = ti + ki as f64;
                    }
                    v / w.eval(&xi)
                })
                .collect()
        })
        .collect();
    FourierSamples { grid: samples.grid.clone(), window: samples.window.clone(), values }
}

/// Assembles a fiber field at smoothness `w.s` from plain Fourier samples.
///
/// The caller supplies the tail certificate, since samples alone carry no
/// decay information.
pub fn fiberize_samples(
    samples: &FourierSamples,
    w: Weight,
    label: impl Into<String>,
    eps_tail: f64,
) -> FiberField {
    let shifts: Vec<Vec<i64>> = samples.window.indices().collect();
    let fibers = samples
        .values
        .iter()
        .enumerate()
        .map(|(j, row)| {
            let t = samples.grid.point(j);
            let mut xi = vec![0.0; samples.grid.n];
            let rescaled = row
                .iter()
                .zip(&shifts)
                .map(|(&v, k)| {
                    for (x, (&ti, &ki)) in xi.iter_mut().zip(t.iter().zip(k)) {
                        *x = ti + ki as f64;
                    }
                    v * w.eval(&xi)
                })
                .collect();
            WeightedSeq::from_rescaled(samples.window.clone(), w, rescaled)
        })
        .collect();
    FiberField::new(
        samples.grid.clone(),
        samples.window.clone(),
        w,
        label.into(),
        eps_tail,
        fibers,
    )
}

/// The fiber field of the shifted function `T_m f`: pointwise multiplication
/// by the unimodular scalar `e^{-2πi⟨m,t⟩}`.
pub fn shift_field(field: &FiberField, m: &[i64]) -> FiberField {
    assert_eq!(m.len(), field.grid.n);
    let fibers = (0..field.grid.len())
        .map(|j| {
            let t = field.grid.point(j);
            let phase: f64 = m.iter().zip(&t).map(|(&mi, &ti)| mi as f64 * ti).sum();
            let c = Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * phase);
            field.fiber(j).scale(c)
        })
        .collect();
    FiberField {
        grid: field.grid.clone(),
        window: field.window.clone(),
        weight: field.weight,
        label: format!("shift{m:?}({})", field.label),
        eps_tail: field.eps_tail,
        fibers,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use num_complex::Complex64 as C;
    use rand::{Rng, SeedableRng};

    fn desk(m: usize, k: usize) -> (TorusGrid, FreqWindow) {
        (TorusGrid::new(1, m), FreqWindow::new(1, k))
    }

    #[test]
    fn shannon_fibers_are_weighted_impulses() {
        let (grid, win) = desk(16, 4);
        for s in [-2.0, 0.0, 1.0, 3.0] {
            let w = Weight::new(s, 1);
            let field = fiberize(&GeneratorSpec::shannon(), w, &grid, &win).unwrap();
            let origin = win.position(&[0]).unwrap();
            for j in 0..grid.len() {
                let f = field.fiber(j);
                // Single surviving component of size mu_s(t), so the squared
                // norm is mu_s(t)^2.
                let mu = w.eval(&grid.point(j));
                assert_abs_diff_eq!(f.norm_sqr(), mu * mu, epsilon = 1e-12 * (mu * mu).max(1.0));
                assert_abs_diff_eq!(f.rescaled()[origin].re, mu, epsilon = 1e-14 * mu.max(1.0));
                for (p, &v) in f.rescaled().iter().enumerate() {
                    if p != origin {
                        assert_eq!(v, C::default());
                    }
                }
            }
        }
    }

    #[test]
    fn box_fiber_norms_near_one() {
        let (grid, win) = desk(32, 64);
        let field = fiberize(&GeneratorSpec::unit_box(), Weight::new(0.0, 1), &grid, &win).unwrap();
        for j in 0..grid.len() {
            let gap = (field.fiber(j).norm_sqr() - 1.0).abs();
            assert!(
                gap <= field.eps_tail,
                "partition defect {gap} exceeds tail certificate {}",
                field.eps_tail
            );
        }
    }

    #[test]
    fn gaussian_fiber_components_match_formula() {
        let grid = TorusGrid::with_offset(1, 4, 0.0); // contains t = 0.25
        let win = FreqWindow::new(1, 8);
        let w = Weight::new(1.0, 1);
        let spec = GeneratorSpec::gaussian(std::f64::consts::PI);
        let field = fiberize(&spec, w, &grid, &win).unwrap();
        let j = 3; // t = -0.5 + 3/4 = 0.25
        assert_abs_diff_eq!(grid.point(j)[0], 0.25, epsilon = 0.0);
        let plain = field.fiber(j).plain();
        for (p, k) in win.indices().enumerate() {
            let tk = 0.25 + k[0] as f64;
            let expect = (-std::f64::consts::PI * tk * tk).exp() * w.eval(&[tk]) / w.eval(&[k[0] as f64]);
            assert_abs_diff_eq!(plain[p].re, expect, epsilon = 1e-14);
            assert_abs_diff_eq!(plain[p].im, 0.0, epsilon = 1e-16);
        }
    }

    #[test]
    fn defiberize_recovers_fourier_samples() {
        let (grid, win) = desk(8, 6);
        let spec = GeneratorSpec::gaussian(std::f64::consts::PI);
        let field = fiberize(&spec, Weight::new(2.0, 1), &grid, &win).unwrap();
        let samples = defiberize(&field);
        for j in 0..grid.len() {
            let t = grid.point(j)[0];
            for (p, k) in win.indices().enumerate() {
                let want = spec.fourier_eval(&[t + k[0] as f64]).unwrap();
                assert!((samples.values[j][p] - want).norm() <= 1e-14);
            }
        }
    }

    #[test]
    fn random_field_roundtrips_through_samples() {
        let (grid, win) = desk(8, 5);
        let w = Weight::new(-1.0, 1);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let fibers: Vec<WeightedSeq> = (0..grid.len())
            .map(|_| {
                let v: Vec<C> = (0..win.len())
                    .map(|_| C::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
                    .collect();
                WeightedSeq::from_rescaled(win.clone(), w, v)
            })
            .collect();
        let field = FiberField::new(grid.clone(), win.clone(), w, "random".into(), 0.0, fibers);
        let back = fiberize_samples(&defiberize(&field), w, "back", 0.0);
        for j in 0..grid.len() {
            for (a, b) in field.fiber(j).rescaled().iter().zip(back.fiber(j).rescaled()) {
                assert!((a - b).norm() <= 1e-13);
            }
        }
    }

    #[test]
    fn bessel_shift_identity_and_inverse() {
        let (grid, win) = desk(6, 3);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let values: Vec<Vec<C>> = (0..grid.len())
            .map(|_| {
                (0..win.len())
                    .map(|_| C::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
                    .collect()
            })
            .collect();
        let samples = FourierSamples { grid, window: win, values };

        let unchanged = bessel_shift(&samples, &Weight::new(0.0, 1));
        assert_eq!(samples.values, unchanged.values);

        let there = bessel_shift(&samples, &Weight::new(3.0, 1));
        let back = bessel_shift(&there, &Weight::new(-3.0, 1));
        for (row_a, row_b) in samples.values.iter().zip(&back.values) {
            for (a, b) in row_a.iter().zip(row_b) {
                assert!((a - b).norm() <= 1e-15 * a.norm().max(1.0));
            }
        }
    }

    #[test]
    fn bessel_shift_known_value() {
        // Constant samples 1 at ξ = t+k = 1 (grid offset 0, so t = 0 is a
        // node): division by μ_2(1) = 2.
        let grid = TorusGrid::with_offset(1, 2, 0.0); // t ∈ {-1/2, 0}
        let win = FreqWindow::new(1, 1);
        let values = vec![vec![C::new(1.0, 0.0); 3]; 2];
        let samples = FourierSamples { grid, window: win.clone(), values };
        let shifted = bessel_shift(&samples, &Weight::new(2.0, 1));
        let j_origin = 1; // t = 0
        let p = win.position(&[1]).unwrap();
        assert_abs_diff_eq!(shifted.values[j_origin][p].re, 0.5, epsilon = 1e-16);
    }

    #[test]
    fn transported_fibers_match_base_fibers() {
        // Rescaled fibers of the lifted generator at smoothness s coincide
        // with the base generator's rescaled fibers at smoothness 0.
        let (grid, win) = desk(16, 16);
        for s in [-2.0, 1.0, 3.0] {
            let base = GeneratorSpec::bspline(1);
            let base_field = fiberize(&base, Weight::new(0.0, 1), &grid, &win).unwrap();
            let lifted = GeneratorSpec::bessel_shift(base.clone(), s);
            let lifted_field = fiberize(&lifted, Weight::new(s, 1), &grid, &win).unwrap();
            for j in 0..grid.len() {
                for (a, b) in base_field
                    .fiber(j)
                    .rescaled()
                    .iter()
                    .zip(lifted_field.fiber(j).rescaled())
                {
                    assert!((a - b).norm() <= 1e-14 * a.norm().max(1.0));
                }
            }
        }
    }

    #[test]
    fn shift_field_modulates() {
        let (grid, win) = desk(8, 4);
        let field =
            fiberize(&GeneratorSpec::bspline(1), Weight::new(0.0, 1), &grid, &win).unwrap();
        let shifted = shift_field(&field, &[2]);
        for j in 0..grid.len() {
            let t = grid.point(j)[0];
            let c = C::from_polar(1.0, -4.0 * std::f64::consts::PI * t);
            for (a, b) in field.fiber(j).rescaled().iter().zip(shifted.fiber(j).rescaled()) {
                assert!((a * c - b).norm() <= 1e-15);
            }
        }
        // Norms are preserved by a unimodular modulation.
        assert_abs_diff_eq!(field.norm_sqr(), shifted.norm_sqr(), epsilon = 1e-14);
    }

    #[test]
    fn fiberize_refuses_unsound_truncation() {
        let (grid, win) = desk(8, 4);
        let err = fiberize(&GeneratorSpec::bspline(0), Weight::new(1.0, 1), &grid, &win);
        assert!(matches!(err, Err(Error::UnsoundTruncation { .. })));
    }
}
