//! Quasi-orthogonal generators and the orthogonal splitting of a
//! finitely generated shift-invariant space into principal parts.
//!
//! A quasi-orthogonal generator has fiber norm exactly one on its spectrum
//! and zero off it. Splitting an r-generator space produces up to r such
//! generators whose fibers are orthonormal at every grid point and whose
//! spectra are nested, with exactly `d(t)` nonzero fibers at each point.
//! The slot count at each point is taken from the Gramian eigenvalue rank,
//! so the dimension identity against `gram_analysis` holds by construction;
//! the basis inside each fiber space comes from pivoted orthogonalization
//! with a deterministic pivot order.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fiber::FiberField;
use crate::gramian::GramianField;
use crate::linalg::{rank_threshold, HermitianEigen};
use crate::weights::WeightedSeq;

/// Orthogonal decomposition into principal shift-invariant parts.
#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionResult {
    /// Quasi-orthogonal output generators, one per slot; trailing slots may
    /// be identically zero.
    pub fields: Vec<FiberField>,
    /// Fiber-space dimension at each grid point.
    pub d: Vec<usize>,
    /// Per-slot spectrum indicators over the grid; `spectra[i][j]` is true
    /// iff slot `i` is nonzero at grid point `j`.
    pub spectra: Vec<Vec<bool>>,
    /// Rank tolerance the decomposition was computed with.
    pub eps_rank: f64,
}

/// Normalizes a single-generator field to a quasi-orthogonal generator:
/// fibers become unit vectors on the spectrum and zero off it.
///
/// A fiber counts as zero under the same rule `gram_analysis` uses for
/// its rank, applied to the squared norm, so the two spectra agree.
pub fn quasi_orthogonalize(field: &FiberField, eps_rank: f64) -> FiberField {
    let mut min_kept = f64::INFINITY;
    let fibers: Vec<WeightedSeq> = field
        .fibers()
        .iter()
        .map(|f| {
            let n2 = f.norm_sqr();
            if n2 > rank_threshold(n2, eps_rank) {
                min_kept = min_kept.min(n2);
                f.scale(Complex64::new(1.0 / n2.sqrt(), 0.0))
            } else {
                WeightedSeq::zeros(field.window.clone(), field.weight)
            }
        })
        .collect();
    let eps_tail = if min_kept.is_finite() { field.eps_tail / min_kept } else { 0.0 };
    FiberField::new(
        field.grid.clone(),
        field.window.clone(),
        field.weight,
        format!("qo({})", field.label),
        eps_tail,
        fibers,
    )
}

struct PointBasis {
    basis: Vec<WeightedSeq>,
    min_counted: f64,
}

fn point_basis(fields: &[FiberField], grid_idx: usize, eps_rank: f64) -> PointBasis {
    let r = fields.len();
    let fibs: Vec<&WeightedSeq> = fields.iter().map(|f| f.fiber(grid_idx)).collect();
    let mut g = DMatrix::<Complex64>::zeros(r, r);
    for i in 0..r {
        for j in i..r {
            let v = fibs[j].inner(fibs[i]).expect("fields already checked compatible");
            if i == j {
                g[(i, i)] = Complex64::new(v.re, 0.0);
            } else {
                g[(i, j)] = v;
                g[(j, i)] = v.conj();
            }
        }
    }
    let e = HermitianEigen::new(&g);
    let thr = rank_threshold(e.max_value(), eps_rank);
    let d = e.values.iter().filter(|&&v| v > thr).count();
    let min_counted = e.values.iter().copied().find(|&v| v > thr).unwrap_or(f64::INFINITY);

    let n2: Vec<f64> = fibs.iter().map(|f| f.norm_sqr()).collect();
    let nthr = rank_threshold(n2.iter().fold(0.0_f64, |a, &b| a.max(b)), eps_rank);
    let mut rem: Vec<Option<WeightedSeq>> = fibs
        .iter()
        .zip(&n2)
        .map(|(f, &v)| (v > nthr).then(|| (*f).clone()))
        .collect();

    let mut basis: Vec<WeightedSeq> = Vec::with_capacity(d);
    while basis.len() < d {
        // Largest remaining norm wins the pivot; strict comparison keeps
        // the lowest generator index on ties.
        let mut best: Option<(usize, f64)> = None;
        for (i, o) in rem.iter().enumerate() {
            if let Some(v) = o {
                let nn = v.norm_sqr();
                if best.is_none_or(|(_, bn)| nn > bn) {
                    best = Some((i, nn));
                }
            }
        }
        let Some((pick, pick_n2)) = best else { break };
        if pick_n2 <= 0.0 {
            break;
        }
        let mut v = rem[pick].take().expect("pivot candidate present");
        // Remaining vectors were already deflated once; a second sweep
        // removes the rounding left by the first.
        for b in &basis {
            let c = v.inner(b).expect("basis shares the space");
            v = v.sub(&b.scale(c)).expect("basis shares the space");
        }
        let nrm = v.norm();
        if nrm <= 0.0 {
            continue;
        }
        let q = v.scale(Complex64::new(1.0 / nrm, 0.0));
        for o in rem.iter_mut().flatten() {
            let c = o.inner(&q).expect("basis shares the space");
            *o = o.sub(&q.scale(c)).expect("basis shares the space");
        }
        basis.push(q);
    }
    debug_assert_eq!(basis.len(), d, "pivoting must realize the eigenvalue rank");
    PointBasis { basis, min_counted }
}

/// Splits an `r`-generator space into orthogonal principal parts with
/// quasi-orthogonal generators and nested spectra.
pub fn decompose_fsi(fields: &[FiberField], eps_rank: f64) -> Result<DecompositionResult> {
    let first = fields
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty generator family".into()))?;
    for f in &fields[1..] {
        first.check_compatible(f)?;
    }
    let r = fields.len();
    if r == 1 {
        let qo = quasi_orthogonalize(&fields[0], eps_rank);
        let d: Vec<usize> = qo.fibers().iter().map(|f| usize::from(f.norm_sqr() > 0.0)).collect();
        let spectra = vec![d.iter().map(|&x| x > 0).collect()];
        return Ok(DecompositionResult { fields: vec![qo], d, spectra, eps_rank });
    }

    let points: Vec<PointBasis> = (0..first.grid.len())
        .into_par_iter()
        .map(|j| point_basis(fields, j, eps_rank))
        .collect();

    let d: Vec<usize> = points.iter().map(|p| p.basis.len()).collect();
    let spectra: Vec<Vec<bool>> = (0..r).map(|i| d.iter().map(|&dd| i < dd).collect()).collect();
    let min_counted = points.iter().map(|p| p.min_counted).fold(f64::INFINITY, f64::min);
    let max_eps = fields.iter().map(|f| f.eps_tail).fold(0.0_f64, f64::max);
    // Basis vectors are unit combinations Φ(t)a with ‖a‖² ≤ 1/λ_min, so the
    // window tail they drop is at most r·max ε over the smallest counted
    // eigenvalue.
    let eps_tail = if min_counted.is_finite() { r as f64 * max_eps / min_counted } else { 0.0 };
    let srcs: Vec<String> = fields.iter().map(|f| f.label.clone()).collect();
    let out_fields: Vec<FiberField> = (0..r)
        .map(|i| {
            let fibers: Vec<WeightedSeq> = points
                .iter()
                .map(|p| {
                    p.basis
                        .get(i)
                        .cloned()
                        .unwrap_or_else(|| WeightedSeq::zeros(first.window.clone(), first.weight))
                })
                .collect();
            FiberField::new(
                first.grid.clone(),
                first.window.clone(),
                first.weight,
                format!("qo{}({})", i + 1, srcs.join(",")),
                eps_tail,
                fibers,
            )
        })
        .collect();
    Ok(DecompositionResult { fields: out_fields, d, spectra, eps_rank })
}

/// Max deviation over the grid between the summed output fiber norms and
/// the Gramian rank, the two independent dimension computations.
pub fn verify_dimension_identity(result: &DecompositionResult, g: &GramianField) -> f64 {
    let mut worst = 0.0_f64;
    for j in 0..g.grid.len() {
        let e = HermitianEigen::new(g.matrix(j));
        let thr = rank_threshold(e.max_value(), result.eps_rank);
        let rank = e.values.iter().filter(|&&v| v > thr).count() as f64;
        let sum: f64 = result.fields.iter().map(|f| f.fiber(j).norm()).sum();
        worst = worst.max((sum - rank).abs());
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fiber::{fiberize, shift_field};
    use crate::generator::{GeneratorSpec, TabulatedData};
    use crate::gramian::gramian_field;
    use crate::grid::{FreqWindow, TorusGrid};
    use crate::weights::Weight;
    use approx::assert_abs_diff_eq;
    use num_complex::Complex64 as C;

    fn field(spec: &GeneratorSpec, s: f64, m: usize, k: usize) -> FiberField {
        fiberize(spec, Weight::new(s, 1), &TorusGrid::new(1, m), &FreqWindow::new(1, k))
            .unwrap()
    }

    /// Generator with Fourier transform the indicator of `[0, 1/2)`, so its
    /// bracket vanishes on half the torus.
    fn half_band(k: usize) -> GeneratorSpec {
        let lim = k as f64 + 1.0;
        let steps = (lim * 128.0) as i64;
        let rows: Vec<(Vec<f64>, C)> = (-steps..=steps)
            .map(|i| {
                let xi = i as f64 / 128.0;
                let v = if (0.0..0.5).contains(&xi) { 1.0 } else { 0.0 };
                (vec![xi], C::new(v, 0.0))
            })
            .collect();
        let data = TabulatedData::new(1, 8.0, rows).unwrap();
        GeneratorSpec::tabulated(data, "half_band")
    }

    #[test]
    fn shannon_is_already_quasi_orthogonal() {
        let f = field(&GeneratorSpec::shannon(), 0.0, 32, 8);
        let qo = quasi_orthogonalize(&f, 1e-8);
        let diff = qo.sub(&f).unwrap();
        assert!(diff.norm_sqr().sqrt() <= 1e-12);
    }

    #[test]
    fn hat_normalizes_to_unit_fibers_with_span_preserved() {
        let f = field(&GeneratorSpec::bspline(1), 0.0, 64, 64);
        let qo = quasi_orthogonalize(&f, 1e-8);
        for j in 0..f.grid.len() {
            let n = qo.fiber(j).norm();
            assert_abs_diff_eq!(n, 1.0, epsilon = 1e-10);
            let c = f.fiber(j).inner(qo.fiber(j)).unwrap();
            let resid = f.fiber(j).sub(&qo.fiber(j).scale(c)).unwrap().norm();
            assert!(resid <= 1e-10 * f.fiber(j).norm());
        }
    }

    #[test]
    fn zero_generator_maps_to_zero_field() {
        let grid = TorusGrid::new(1, 16);
        let win = FreqWindow::new(1, 4);
        let w = Weight::new(0.0, 1);
        let fibers = (0..grid.len()).map(|_| WeightedSeq::zeros(win.clone(), w)).collect();
        let f = FiberField::new(grid, win, w, "zero".into(), 0.0, fibers);
        let qo = quasi_orthogonalize(&f, 1e-8);
        assert!(qo.fibers().iter().all(|x| x.norm_sqr() == 0.0));
    }

    #[test]
    fn single_generator_decomposition_reduces_to_quasi_orthogonalization() {
        let f = field(&GeneratorSpec::bspline(1), 1.0, 32, 32);
        let qo = quasi_orthogonalize(&f, 1e-8);
        let dec = decompose_fsi(std::slice::from_ref(&f), 1e-8).unwrap();
        assert_eq!(dec.fields.len(), 1);
        assert!(dec.fields[0].sub(&qo).unwrap().norm_sqr().sqrt() <= 1e-14);
        assert!(dec.d.iter().all(|&x| x == 1));
    }

    #[test]
    fn independent_pair_splits_into_two_orthonormal_fields() {
        let fs = [
            field(&GeneratorSpec::bspline(1), 0.0, 64, 8),
            field(&GeneratorSpec::shannon(), 0.0, 64, 8),
        ];
        let dec = decompose_fsi(&fs, 1e-10).unwrap();
        assert!(dec.d.iter().all(|&x| x == 2), "dims {:?}", &dec.d[..4]);
        for j in 0..fs[0].grid.len() {
            let a = dec.fields[0].fiber(j);
            let b = dec.fields[1].fiber(j);
            assert_abs_diff_eq!(a.norm(), 1.0, epsilon = 1e-10);
            assert_abs_diff_eq!(b.norm(), 1.0, epsilon = 1e-10);
            assert!(a.inner(b).unwrap().norm() <= 1e-10);
            for f in &fs {
                let phi = f.fiber(j);
                let ca = phi.inner(a).unwrap();
                let cb = phi.inner(b).unwrap();
                let resid =
                    phi.sub(&a.scale(ca)).unwrap().sub(&b.scale(cb)).unwrap().norm();
                assert!(resid <= 1e-9 * phi.norm().max(1.0), "residual {resid}");
            }
        }
    }

    #[test]
    fn duplicate_pair_collapses_to_one_slot() {
        let f = field(&GeneratorSpec::bspline(1), 0.0, 32, 32);
        let dec = decompose_fsi(&[f.clone(), f], 1e-8).unwrap();
        assert!(dec.d.iter().all(|&x| x == 1));
        assert!(dec.fields[1].fibers().iter().all(|x| x.norm_sqr() == 0.0));
        assert!(dec.spectra[1].iter().all(|&b| !b));
        assert!(dec.spectra[0].iter().all(|&b| b));
    }

    #[test]
    fn shifted_copy_is_parallel_not_independent() {
        let f = field(&GeneratorSpec::bspline(1), 0.0, 32, 16);
        let shifted = shift_field(&f, &[1]);
        let dec = decompose_fsi(&[f.clone(), shifted], 1e-8).unwrap();
        assert!(dec.d.iter().all(|&x| x == 1));
        for j in 0..f.grid.len() {
            let q = dec.fields[0].fiber(j);
            let phi = f.fiber(j);
            let c = phi.inner(q).unwrap();
            assert!(phi.sub(&q.scale(c)).unwrap().norm() <= 1e-10 * phi.norm());
        }
    }

    #[test]
    fn nested_spectra_with_a_half_band_generator() {
        let fs = [
            field(&GeneratorSpec::bspline(1), 0.0, 32, 8),
            field(&half_band(8), 0.0, 32, 8),
        ];
        let dec = decompose_fsi(&fs, 1e-10).unwrap();
        for j in 0..fs[0].grid.len() {
            let t = fs[0].grid.point(j)[0];
            let expect = if t >= 0.0 { 2 } else { 1 };
            assert_eq!(dec.d[j], expect, "t = {t}");
            assert!(!dec.spectra[1][j] || dec.spectra[0][j]);
        }
    }

    #[test]
    fn dimension_identity_holds() {
        let fs = [
            field(&GeneratorSpec::bspline(1), 0.0, 64, 8),
            field(&GeneratorSpec::shannon(), 0.0, 64, 8),
        ];
        let g = gramian_field(&fs).unwrap();
        let dec = decompose_fsi(&fs, 1e-10).unwrap();
        assert!(verify_dimension_identity(&dec, &g) <= 1e-8);

        let single = [field(&GeneratorSpec::shannon(), 0.0, 32, 8)];
        let g1 = gramian_field(&single).unwrap();
        let dec1 = decompose_fsi(&single, 1e-8).unwrap();
        assert!(verify_dimension_identity(&dec1, &g1) <= 1e-12);
    }

    #[test]
    fn zero_system_dimension_identity_is_exact() {
        let grid = TorusGrid::new(1, 8);
        let win = FreqWindow::new(1, 2);
        let w = Weight::new(0.0, 1);
        let fibers: Vec<WeightedSeq> =
            (0..grid.len()).map(|_| WeightedSeq::zeros(win.clone(), w)).collect();
        let f = FiberField::new(grid, win, w, "zero".into(), 0.0, fibers);
        let g = gramian_field(std::slice::from_ref(&f)).unwrap();
        let dec = decompose_fsi(std::slice::from_ref(&f), 1e-8).unwrap();
        assert_eq!(verify_dimension_identity(&dec, &g), 0.0);
    }
}
