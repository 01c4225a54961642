//! Brute-force verification path, independent of the fiber machinery.
//!
//! Everything here is computed from `fourier_eval` and `mu_eval` alone:
//! inner products by midpoint quadrature over the window band, squared fiber
//! norms by direct series summation, and the frame inequality by forming the
//! test function on the Fourier side. None of the fiber, Gramian or
//! decomposition code paths are used, so agreement with them is evidence,
//! not tautology.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::generator::GeneratorSpec;
use crate::grid::FreqWindow;
use crate::weights::Weight;

/// Neumaier-compensated accumulator; keeps million-term quadrature sums well
/// below the tolerances they are compared against.
#[derive(Debug, Clone, Copy, Default)]
struct Compensated {
    sum: f64,
    comp: f64,
}

impl Compensated {
    fn add(&mut self, x: f64) {
        let new = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - new) + x;
        } else {
            self.comp += (x - new) + self.sum;
        }
        self.sum = new;
    }

    fn value(self) -> f64 {
        self.sum + self.comp
    }
}

/// Midpoint rule over the band `[-Λ, Λ)ⁿ`, `Λ = K + 1/2`, with `q` nodes per
/// unit interval per axis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuadratureScheme {
    pub window: FreqWindow,
    pub q: usize,
}

impl QuadratureScheme {
    pub fn new(window: FreqWindow, q: usize) -> Self {
        assert!(q >= 1, "need at least one node per unit interval");
        Self { window, q }
    }

    /// Nodes per axis, `q·(2K+1)`.
    pub fn axis_len(&self) -> usize {
        self.q * self.window.side()
    }

    /// Total node count, `(q·(2K+1))ⁿ`.
    pub fn len(&self) -> usize {
        self.axis_len().pow(self.window.n as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Quadrature weight per node, `q^{-n}`.
    pub fn node_weight(&self) -> f64 {
        (1.0 / self.q as f64).powi(self.window.n as i32)
    }

    fn axis_node(&self, i: usize) -> f64 {
        // Written so that for power-of-two q the nodes coincide bitwise with
        // cell-centered torus grid points shifted by integers.
        let b = (i / self.q) as f64;
        let a = (i % self.q) as f64;
        b + (a + 0.5) / self.q as f64 - (self.window.k as f64 + 0.5)
    }

    /// The node with lexicographic index `idx` (last axis fastest).
    pub fn node(&self, idx: usize) -> Vec<f64> {
        let axis = self.axis_len();
        let mut rem = idx;
        let mut out = vec![0.0; self.window.n];
        for ax in (0..self.window.n).rev() {
            out[ax] = self.axis_node(rem % axis);
            rem /= axis;
        }
        out
    }

    /// Maps a node index to its torus bucket: nodes representing `t + k`
    /// for the same torus residue `t` share a bucket.
    fn fold(&self, idx: usize) -> usize {
        let axis = self.axis_len();
        let mut rem = idx;
        let mut per_axis = vec![0usize; self.window.n];
        for ax in (0..self.window.n).rev() {
            per_axis[ax] = (rem % axis) % self.q;
            rem /= axis;
        }
        per_axis.iter().fold(0, |acc, &a| acc * self.q + a)
    }
}

/// A quadrature result with its full error budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleValue {
    pub value: Complex64,
    /// Certified bound on the mass outside the band.
    pub tail_bound: f64,
    /// Richardson estimate `|I_q − I_{q/2}|/3` of the quadrature error.
    pub quad_error: f64,
}

fn quad_pass(
    f: &GeneratorSpec,
    g: &GeneratorSpec,
    shift: &[i64],
    w: &Weight,
    scheme: &QuadratureScheme,
) -> Result<Complex64> {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut re = Compensated::default();
    let mut im = Compensated::default();
    let weight = scheme.node_weight();
    for idx in 0..scheme.len() {
        let xi = scheme.node(idx);
        let fv = f.fourier_eval(&xi)?;
        let gv = g.fourier_eval(&xi)?;
        let mu2 = w.eval(&xi).powi(2);
        let phase: f64 = shift.iter().zip(&xi).map(|(&k, &x)| k as f64 * x).sum();
        let term = fv * gv.conj() * Complex64::from_polar(1.0, two_pi * phase) * mu2;
        re.add(term.re);
        im.add(term.im);
    }
    Ok(Complex64::new(re.value(), im.value()) * weight)
}

/// Quadrature of `⟨T_k g ↦⟩`-style pairings: returns the midpoint rule value
/// of `∫ f̂(ξ)·conj(ĝ(ξ))·e^{2πi⟨k,ξ⟩}·μ_s(ξ)² dξ` over the band, with tail
/// and quadrature error bars. `q` must be even so the half-resolution rule
/// exists for the Richardson estimate.
pub fn direct_inner(
    f: &GeneratorSpec,
    g: &GeneratorSpec,
    shift: &[i64],
    w: &Weight,
    win: &FreqWindow,
    q: usize,
) -> Result<OracleValue> {
    if q % 2 != 0 || q < 2 {
        return Err(Error::InvalidArgument(format!("q must be even and ≥ 2, got {q}")));
    }
    let eps_f = f.validate_truncation(w, win)?;
    let eps_g = g.validate_truncation(w, win)?;
    let fine = quad_pass(f, g, shift, w, &QuadratureScheme::new(win.clone(), q))?;
    let coarse = quad_pass(f, g, shift, w, &QuadratureScheme::new(win.clone(), q / 2))?;
    Ok(OracleValue {
        value: fine,
        tail_bound: (eps_f * eps_g).sqrt(),
        quad_error: (fine - coarse).norm() / 3.0,
    })
}

/// Squared fiber norm `Σ_{‖k‖_∞ ≤ K_large} |φ̂(t+k)|² μ_s(t+k)²` by direct
/// summation in descending magnitude order.
pub fn bracket_bruteforce(
    spec: &GeneratorSpec,
    w: &Weight,
    t: &[f64],
    k_large: usize,
) -> Result<f64> {
    let mut terms = bracket_terms(spec, w, t, k_large)?;
    terms.sort_by(|a, b| b.total_cmp(a));
    let mut acc = Compensated::default();
    for v in terms {
        acc.add(v);
    }
    Ok(acc.value())
}

/// Same sum as [`bracket_bruteforce`] in ascending window-index order; the
/// two must agree for the summation to be trustworthy.
pub fn bracket_bruteforce_ascending(
    spec: &GeneratorSpec,
    w: &Weight,
    t: &[f64],
    k_large: usize,
) -> Result<f64> {
    let mut acc = Compensated::default();
    for v in bracket_terms(spec, w, t, k_large)? {
        acc.add(v);
    }
    Ok(acc.value())
}

fn bracket_terms(
    spec: &GeneratorSpec,
    w: &Weight,
    t: &[f64],
    k_large: usize,
) -> Result<Vec<f64>> {
    let win = FreqWindow::new(t.len(), k_large);
    let mut xi = vec![0.0; t.len()];
    let mut out = Vec::with_capacity(win.len());
    for k in win.indices() {
        for (x, (&ti, &ki)) in xi.iter_mut().zip(t.iter().zip(&k)) {
            *x = ti + ki as f64;
        }
        out.push(spec.fourier_eval(&xi)?.norm_sqr() * w.eval(&xi).powi(2));
    }
    Ok(out)
}

/// Cross term `Σ_{‖k‖_∞ ≤ K_large} φ̂(t+k)·conj(ψ̂(t+k))·μ_s(t+k)²`, summed
/// in descending magnitude order; reproduces off-diagonal Gramian entries.
pub fn cross_bracket_bruteforce(
    f: &GeneratorSpec,
    g: &GeneratorSpec,
    w: &Weight,
    t: &[f64],
    k_large: usize,
) -> Result<Complex64> {
    let win = FreqWindow::new(t.len(), k_large);
    let mut xi = vec![0.0; t.len()];
    let mut terms = Vec::with_capacity(win.len());
    for k in win.indices() {
        for (x, (&ti, &ki)) in xi.iter_mut().zip(t.iter().zip(&k)) {
            *x = ti + ki as f64;
        }
        let term =
            f.fourier_eval(&xi)? * g.fourier_eval(&xi)?.conj() * w.eval(&xi).powi(2);
        terms.push(term);
    }
    terms.sort_by(|a, b| b.norm_sqr().total_cmp(&a.norm_sqr()));
    let mut re = Compensated::default();
    let mut im = Compensated::default();
    for v in terms {
        re.add(v.re);
        im.add(v.im);
    }
    Ok(Complex64::new(re.value(), im.value()))
}

/// One coefficient of a finitely supported shift expansion
/// `f = Σ c·T_shift φ_gen`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftCoeff {
    pub shift: Vec<i64>,
    pub gen: usize,
    pub c: Complex64,
}

/// Outcome of a direct frame-inequality check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameCheck {
    /// `Σ_{k,i} |⟨f, T_k φ_i⟩|²`, via the periodized cross brackets.
    pub sum: f64,
    /// `‖f‖²` in the weighted norm.
    pub norm_sqr: f64,
    /// `sum − A·norm_sqr`; must be ≥ −tol.
    pub lower_margin: f64,
    /// `B·norm_sqr − sum`; must be ≥ −tol.
    pub upper_margin: f64,
    /// Combined tail and quadrature error allowance.
    pub tol: f64,
    pub pass: bool,
}

/// Tests `A‖f‖² ≤ Σ_{k,i} |⟨f, T_kφ_i⟩|² ≤ B‖f‖²` for the synthesized
/// `f = Σ c·T_k φ_i`, entirely on the Fourier side.
///
/// The shift sum over all of `Zⁿ` is evaluated without truncation: its value
/// equals the torus integral `Σ_i ∫ |b_i(t)|² dt` of the periodized cross
/// brackets `b_i(t) = Σ_k f̂(t+k)·conj(φ̂_i(t+k))·μ_s(t+k)²`, which the
/// midpoint rule resolves by folding band nodes onto torus buckets.
pub fn frame_inequality_sample(
    specs: &[GeneratorSpec],
    coeffs: &[ShiftCoeff],
    a: f64,
    b: f64,
    w: &Weight,
    win: &FreqWindow,
    q: usize,
) -> Result<FrameCheck> {
    if q % 2 != 0 || q < 2 {
        return Err(Error::InvalidArgument(format!("q must be even and ≥ 2, got {q}")));
    }
    if specs.is_empty() || coeffs.is_empty() {
        return Err(Error::InvalidArgument("empty generator or coefficient list".into()));
    }
    if coeffs.iter().any(|c| c.gen >= specs.len()) {
        return Err(Error::InvalidArgument("coefficient refers to a missing generator".into()));
    }
    let eps: Vec<f64> =
        specs.iter().map(|s| s.validate_truncation(w, win)).collect::<Result<_>>()?;

    let run = |q_run: usize| -> Result<(f64, f64, Vec<f64>)> {
        let scheme = QuadratureScheme::new(win.clone(), q_run);
        let buckets = scheme.q.pow(win.n as u32);
        let mut brackets = vec![vec![Complex64::default(); buckets]; specs.len()];
        let mut norm = Compensated::default();
        let two_pi = 2.0 * std::f64::consts::PI;
        for idx in 0..scheme.len() {
            let xi = scheme.node(idx);
            let mu2 = w.eval(&xi).powi(2);
            let mut fv = Complex64::default();
            let gvals: Vec<Complex64> =
                specs.iter().map(|s| s.fourier_eval(&xi)).collect::<Result<_>>()?;
            for co in coeffs {
                let phase: f64 =
                    co.shift.iter().zip(&xi).map(|(&k, &x)| k as f64 * x).sum();
                fv += co.c * Complex64::from_polar(1.0, -two_pi * phase) * gvals[co.gen];
            }
            norm.add(fv.norm_sqr() * mu2);
            let bucket = scheme.fold(idx);
            for (i, gv) in gvals.iter().enumerate() {
                brackets[i][bucket] += fv * gv.conj() * mu2;
            }
        }
        // Each bucket holds the full k-sum for one torus residue, so the
        // torus integral of |b_i|² is a plain cell-weighted sum of buckets.
        let torus_w = 1.0 / buckets as f64;
        let mut sum = Compensated::default();
        let mut bracket_norms = Vec::with_capacity(specs.len());
        for bi in &brackets {
            let mut bn = Compensated::default();
            for v in bi {
                bn.add(v.norm_sqr() * torus_w);
            }
            let bn = bn.value();
            bracket_norms.push(bn.sqrt());
            sum.add(bn);
        }
        Ok((norm.value() * scheme.node_weight(), sum.value(), bracket_norms))
    };

    let (norm_fine, sum_fine, bracket_norms) = run(q)?;
    let (norm_coarse, sum_coarse, _) = run(q / 2)?;

    // Tail of f in the weighted norm, by Minkowski over the expansion.
    let tail_f: f64 = coeffs
        .iter()
        .map(|co| co.c.norm() * eps[co.gen].sqrt())
        .sum::<f64>()
        .powi(2);
    // Beyond-band error of each periodized bracket, then of its squared
    // integral.
    let mut tail_sum = 0.0;
    for (i, bn) in bracket_norms.iter().enumerate() {
        let d = (eps[i] * tail_f).sqrt();
        tail_sum += 2.0 * bn * d + d * d;
    }
    let quad_norm = (norm_fine - norm_coarse).abs() / 3.0;
    let quad_sum = (sum_fine - sum_coarse).abs() / 3.0;
    let tol = tail_f
        + quad_norm * (a.abs().max(b.abs()) + 1.0)
        + tail_sum
        + quad_sum
        + 1e-12 * norm_fine.max(1.0);

    let lower_margin = sum_fine - a * norm_fine;
    let upper_margin = b * norm_fine - sum_fine;
    Ok(FrameCheck {
        sum: sum_fine,
        norm_sqr: norm_fine,
        lower_margin,
        upper_margin,
        tol,
        pass: lower_margin >= -tol && upper_margin >= -tol,
    })
}

/// Coefficients of a normalized shift train modulated to concentrate the
/// synthesized function's bracket energy near the torus point `t0`; used to
/// probe frame bounds adversarially.
pub fn modulated_coeffs(gen: usize, k_max: usize, t0: &[f64]) -> Vec<ShiftCoeff> {
    let win = FreqWindow::new(t0.len(), k_max);
    let scale = 1.0 / (win.len() as f64).sqrt();
    let two_pi = 2.0 * std::f64::consts::PI;
    win.indices()
        .map(|k| {
            let phase: f64 = k.iter().zip(t0).map(|(&ki, &t)| ki as f64 * t).sum();
            ShiftCoeff {
                shift: k,
                gen,
                c: Complex64::from_polar(scale, two_pi * phase),
            }
        })
        .collect()
}
