//! Generators defined on the Fourier side, with certified frequency decay.
//!
//! A generator is known to the rest of the crate only through its Fourier
//! transform `φ̂` and a decay certificate. The certificate is what makes the
//! frequency-window truncation of fibers honest: `validate_truncation` turns
//! it into an explicit upper bound on the weighted tail mass
//! `sup_t Σ_{|k|>K} |φ̂(t+k)|² μ_s(t+k)²`, which downstream reports carry as
//! an error bar instead of silently dropping.
//!
//! All analytic forms are centered, so their transforms are real and even;
//! Gramians are unaffected by the centering phase either way.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::FreqWindow;
use crate::weights::Weight;

/// Certified decay class of `|φ̂|` at large frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decay {
    /// `φ̂` vanishes outside the unit cube, hence outside every window.
    Compact,
    /// `|φ̂(ξ)| ≤ C·(1+|ξ|)^{-d}` with the stored rate `d`.
    Polynomial(f64),
    /// Decays faster than any polynomial.
    SuperPolynomial,
}

/// `sin(πx)/(πx)` with the removable singularity filled in.
pub fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Tabulated samples of a Fourier transform on a finite frequency set.
///
/// Lookup is nearest-sample with no extrapolation: a query more than half the
/// coarsest sample spacing outside the per-axis bounding box is rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedData {
    pub n: usize,
    /// Declared polynomial decay rate from the file header.
    pub decay: f64,
    /// Sample points, sorted lexicographically.
    pub points: Vec<Vec<f64>>,
    pub values: Vec<Complex64>,
    /// Per-axis admissible range `[lo - h/2, hi + h/2]`.
    range: Vec<(f64, f64)>,
}

impl TabulatedData {
    pub fn new(n: usize, decay: f64, mut rows: Vec<(Vec<f64>, Complex64)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("dimension must be at least 1".into()));
        }
        if rows.is_empty() {
            return Err(Error::InvalidArgument("tabulated generator has no samples".into()));
        }
        for (p, v) in &rows {
            if p.len() != n {
                return Err(Error::InvalidArgument(format!(
                    "sample point has {} coordinates, expected {}",
                    p.len(),
                    n
                )));
            }
            if p.iter().any(|x| !x.is_finite()) || !v.re.is_finite() || !v.im.is_finite() {
                return Err(Error::InvalidArgument("non-finite tabulated sample".into()));
            }
        }
        rows.sort_by(|a, b| {
            a.0.partial_cmp(&b.0).expect("finite coordinates are totally ordered")
        });
        let (points, values): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
        let range = (0..n)
            .map(|axis| {
                let mut coords: Vec<f64> = points.iter().map(|p| p[axis]).collect();
                coords.sort_by(f64::total_cmp);
                coords.dedup();
                let gap = coords.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
                (coords[0] - gap / 2.0, coords[coords.len() - 1] + gap / 2.0)
            })
            .collect();
        Ok(Self { n, decay, points, values, range })
    }

    fn in_range(&self, xi: &[f64]) -> bool {
        xi.iter().zip(&self.range).all(|(&x, &(lo, hi))| x >= lo && x <= hi)
    }

    fn nearest(&self, xi: &[f64]) -> Complex64 {
        // Sorted order makes scan results deterministic under exact ties.
        let mut best = 0usize;
        let mut best_d2 = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            let d2: f64 = p.iter().zip(xi).map(|(a, b)| (a - b) * (a - b)).sum();
            if d2 < best_d2 {
                best_d2 = d2;
                best = i;
            }
        }
        self.values[best]
    }

    /// Tightest constant `C` with `|v| ≤ C·(1+|ξ|)^{-decay}` over the samples.
    fn envelope_constant(&self) -> f64 {
        self.points
            .iter()
            .zip(&self.values)
            .map(|(p, v)| {
                let r = p.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.norm() * (1.0 + r).powf(self.decay)
            })
            .fold(0.0, f64::max)
    }
}

/// The analytic or tabulated form of a generator's Fourier transform.
#[derive(Debug, Clone, PartialEq)]
pub enum GeneratorForm {
    /// `φ̂(ξ) = exp(-α|ξ|²)`, `α > 0`.
    Gaussian { alpha: f64 },
    /// Centered B-spline of degree `m`: `φ̂(ξ) = Π_i sinc(ξ_i)^{m+1}`.
    BSpline { m: u32 },
    /// `φ̂` = indicator of the half-open unit cube `[-1/2, 1/2)ⁿ`.
    Shannon,
    /// Centered unit box in time: `φ̂(ξ) = Π_i sinc(ξ_i)`.
    Box,
    /// Finite table of Fourier samples.
    Tabulated(TabulatedData),
    /// `φ̂ = ĝ/μ_σ` for a base generator `g`; the image of `g` under the
    /// Bessel-potential lift of order `σ`.
    BesselShift { base: Box<GeneratorSpec>, sigma: f64 },
}

/// A generator plus its identifying label.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub form: GeneratorForm,
    pub label: String,
}

impl GeneratorSpec {
    pub fn gaussian(alpha: f64) -> Self {
        assert!(alpha > 0.0, "gaussian width must be positive");
        Self { form: GeneratorForm::Gaussian { alpha }, label: format!("gaussian({alpha})") }
    }

    pub fn bspline(m: u32) -> Self {
        Self { form: GeneratorForm::BSpline { m }, label: format!("bspline({m})") }
    }

    pub fn shannon() -> Self {
        Self { form: GeneratorForm::Shannon, label: "shannon".into() }
    }

    pub fn unit_box() -> Self {
        Self { form: GeneratorForm::Box, label: "box".into() }
    }

    pub fn tabulated(data: TabulatedData, label: impl Into<String>) -> Self {
        Self { form: GeneratorForm::Tabulated(data), label: label.into() }
    }

    /// The lifted generator with `φ̂ = ĝ/μ_σ`; composing with fiberization at
    /// smoothness `σ` reproduces the base generator's plain fibers.
    pub fn bessel_shift(base: GeneratorSpec, sigma: f64) -> Self {
        let label = format!("tau[{sigma}]({})", base.label);
        Self { form: GeneratorForm::BesselShift { base: Box::new(base), sigma }, label }
    }

    /// Declared decay class of `|φ̂|`.
    pub fn decay(&self) -> Decay {
        match &self.form {
            GeneratorForm::Gaussian { .. } => Decay::SuperPolynomial,
            GeneratorForm::BSpline { m } => Decay::Polynomial((*m + 1) as f64),
            GeneratorForm::Shannon => Decay::Compact,
            GeneratorForm::Box => Decay::Polynomial(1.0),
            GeneratorForm::Tabulated(d) => Decay::Polynomial(d.decay),
            GeneratorForm::BesselShift { base, sigma } => match base.decay() {
                Decay::Compact => Decay::Compact,
                Decay::SuperPolynomial => Decay::SuperPolynomial,
                Decay::Polynomial(d) => Decay::Polynomial(d + sigma),
            },
        }
    }

    /// Evaluates `φ̂(ξ)` under the `e^{-2πi⟨x,ξ⟩}` transform convention.
    pub fn fourier_eval(&self, xi: &[f64]) -> Result<Complex64> {
        debug_assert!(xi.iter().all(|x| x.is_finite()));
        match &self.form {
            GeneratorForm::Gaussian { alpha } => {
                let r2: f64 = xi.iter().map(|x| x * x).sum();
                Ok(Complex64::new((-alpha * r2).exp(), 0.0))
            }
            GeneratorForm::BSpline { m } => {
                let v = xi.iter().map(|&x| sinc(x).powi(*m as i32 + 1)).product();
                Ok(Complex64::new(v, 0.0))
            }
            GeneratorForm::Shannon => {
                let inside = xi.iter().all(|&x| (-0.5..0.5).contains(&x));
                Ok(Complex64::new(if inside { 1.0 } else { 0.0 }, 0.0))
            }
            GeneratorForm::Box => {
                let v = xi.iter().map(|&x| sinc(x)).product();
                Ok(Complex64::new(v, 0.0))
            }
            GeneratorForm::Tabulated(d) => {
                if xi.len() != d.n {
                    return Err(Error::InvalidArgument(format!(
                        "query has {} coordinates, table is {}-dimensional",
                        xi.len(),
                        d.n
                    )));
                }
                if !d.in_range(xi) {
                    return Err(Error::TabulatedOutOfRange {
                        label: self.label.clone(),
                        xi: xi.to_vec(),
                    });
                }
                Ok(d.nearest(xi))
            }
            GeneratorForm::BesselShift { base, sigma } => {
                let r2: f64 = xi.iter().map(|x| x * x).sum();
                Ok(base.fourier_eval(xi)? / (1.0 + r2).powf(sigma / 2.0))
            }
        }
    }

    /// Peels nested Bessel shifts, returning the base spec and the total
    /// shift order.
    fn unshift(&self) -> (&GeneratorSpec, f64) {
        let mut spec = self;
        let mut total = 0.0;
        while let GeneratorForm::BesselShift { base, sigma } = &spec.form {
            total += sigma;
            spec = base;
        }
        (spec, total)
    }

    /// Certifies the frequency-window truncation: returns an upper bound on
    /// `sup_t Σ_{|k|>K} |φ̂(t+k)|² μ_s(t+k)²` (sup over the fundamental
    /// domain, `|k|` in the max norm).
    ///
    /// For a polynomial envelope `|φ̂(ξ)| ≤ A·|ξ|^{-d}` the weighted tail is
    /// summable iff `2d − 2·max(s,0) − n > 0`; a Bessel shift of order `σ`
    /// enters through the effective smoothness `s − σ`. The bound sums lattice
    /// shells `‖k‖_∞ = j` explicitly (shell has `(2j+1)ⁿ−(2j−1)ⁿ` points,
    /// each with `|t+k| ≥ j−1/2`) and closes with an integral comparison.
    pub fn validate_truncation(&self, w: &Weight, win: &FreqWindow) -> Result<f64> {
        if w.n != win.n {
            return Err(Error::IncompatibleSpace(format!(
                "weight dimension {} vs window dimension {}",
                w.n, win.n
            )));
        }
        let (base, sigma) = self.unshift();
        let s_eff = w.s - sigma;
        let n = w.n;
        let k = win.k;

        // Squared envelope of the base transform at radius r ≥ 1/2.
        enum Env {
            Zero,
            /// `|φ̂(r)|² ≤ a_sq · r^{-p}`
            Power { a_sq: f64, p: f64 },
            /// `|φ̂(r)|² ≤ exp(-c·r²)`
            Gauss { c: f64 },
        }
        let env = match &base.form {
            GeneratorForm::Shannon => Env::Zero,
            GeneratorForm::Gaussian { alpha } => Env::Gauss { c: 2.0 * alpha },
            GeneratorForm::BSpline { m } => {
                let d = (*m + 1) as f64;
                Env::Power { a_sq: (n as f64 / std::f64::consts::PI.powi(2)).powf(d), p: 2.0 * d }
            }
            GeneratorForm::Box => {
                Env::Power { a_sq: n as f64 / std::f64::consts::PI.powi(2), p: 2.0 }
            }
            GeneratorForm::Tabulated(data) => {
                let c = data.envelope_constant();
                Env::Power { a_sq: c * c, p: 2.0 * data.decay }
            }
            GeneratorForm::BesselShift { .. } => unreachable!("unshift strips all shifts"),
        };

        // Worst-case weight factor μ_{s_eff}(t+k)² on the shell ‖k‖_∞ = j.
        let wfac = |j: f64| -> f64 {
            if s_eff <= 0.0 {
                (1.0 + (j - 0.5) * (j - 0.5)).powf(s_eff)
            } else {
                (1.0 + n as f64 * (j + 0.5) * (j + 0.5)).powf(s_eff)
            }
        };
        let shell_count = |j: f64| -> f64 {
            (2.0 * j + 1.0).powi(n as i32) - (2.0 * j - 1.0).powi(n as i32)
        };

        match env {
            Env::Zero => Ok(0.0),
            Env::Power { a_sq, p } => {
                let d = p / 2.0;
                let margin = 2.0 * d - 2.0 * s_eff.max(0.0) - n as f64;
                if margin <= 0.0 {
                    return Err(Error::UnsoundTruncation {
                        label: self.label.clone(),
                        required: format!(
                            "2·{d} − 2·max({s_eff}, 0) − {n} > 0 (decay d = {d}, \
                             effective smoothness {s_eff})"
                        ),
                        actual: format!("{margin}"),
                    });
                }
                const SHELLS: usize = 4096;
                let mut sum = 0.0;
                for shell in 1..=SHELLS {
                    let j = (k + shell) as f64;
                    sum += shell_count(j) * a_sq * (j - 0.5).powf(-p) * wfac(j);
                }
                // Integral comparison beyond the summed shells, with the
                // per-shell term majorized by C·j^{-p_net} for j ≥ 1.
                let p_net = p - 2.0 * s_eff.max(0.0) - (n as f64 - 1.0);
                let big_c = 2.0 * n as f64
                    * 3f64.powi(n as i32 - 1)
                    * a_sq
                    * 2f64.powf(p)
                    * (8.0 * n as f64).powf(s_eff.max(0.0));
                let j_last = (k + SHELLS) as f64;
                let remainder = big_c * j_last.powf(1.0 - p_net) / (p_net - 1.0);
                Ok(sum + remainder)
            }
            Env::Gauss { c } => {
                let mut sum = 0.0;
                let mut j = (k + 1) as f64;
                let term = |j: f64| shell_count(j) * (-c * (j - 0.5) * (j - 0.5)).exp() * wfac(j);
                loop {
                    let t = term(j);
                    sum += t;
                    // Ratio bound for everything past j: shell growth ≤ 2ⁿ,
                    // weight growth ≤ (5/3)^{2s⁺}, Gaussian factor e^{-2cj}.
                    let ratio = 2f64.powi(n as i32)
                        * (5.0f64 / 3.0).powf(2.0 * s_eff.max(0.0))
                        * (-2.0 * c * j).exp();
                    if ratio < 0.5 && (t < 1e-250 || t < 1e-18 * sum) {
                        sum += 2.0 * term(j + 1.0).max(1e-290);
                        break;
                    }
                    j += 1.0;
                    if j > (k + 100_000) as f64 {
                        return Err(Error::InvalidArgument(format!(
                            "gaussian tail for '{}' did not contract; width too small",
                            self.label
                        )));
                    }
                }
                Ok(sum)
            }
        }
    }
}

/// Loads a tabulated generator from its CSV interchange format.
///
/// Header line `# n=<int> decay=<float> count=<int>`, then `count` rows of
/// `xi_1,...,xi_n,re,im`. Floats round-trip bit-exactly through the writer.
pub fn load_tabulated(path: impl AsRef<Path>) -> Result<GeneratorSpec> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();

    let (_, header) = lines
        .next()
        .ok_or(Error::Parse { line: 1, msg: "empty file".into() })?;
    let header = header
        .strip_prefix('#')
        .ok_or(Error::Parse { line: 1, msg: "header must start with '#'".into() })?;
    let mut n = None;
    let mut decay = None;
    let mut count = None;
    for tok in header.split_whitespace() {
        let (key, val) = tok
            .split_once('=')
            .ok_or_else(|| Error::Parse { line: 1, msg: format!("bad header token '{tok}'") })?;
        match key {
            "n" => {
                n = Some(val.parse::<usize>().map_err(|e| Error::Parse {
                    line: 1,
                    msg: format!("bad n: {e}"),
                })?)
            }
            "decay" => {
                decay = Some(val.parse::<f64>().map_err(|e| Error::Parse {
                    line: 1,
                    msg: format!("bad decay: {e}"),
                })?)
            }
            "count" => {
                count = Some(val.parse::<usize>().map_err(|e| Error::Parse {
                    line: 1,
                    msg: format!("bad count: {e}"),
                })?)
            }
            other => {
                return Err(Error::Parse { line: 1, msg: format!("unknown header key '{other}'") })
            }
        }
    }
    let n = n.ok_or(Error::Parse { line: 1, msg: "header missing n".into() })?;
    let decay =
        decay.ok_or(Error::Parse { line: 1, msg: "header missing decay declaration".into() })?;
    let count = count.ok_or(Error::Parse { line: 1, msg: "header missing count".into() })?;

    let mut rows = Vec::with_capacity(count);
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n + 2 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected {} comma-separated fields, found {}", n + 2, fields.len()),
            });
        }
        let mut vals = Vec::with_capacity(n + 2);
        for f in &fields {
            vals.push(f.trim().parse::<f64>().map_err(|e| Error::Parse {
                line: lineno,
                msg: format!("bad float '{f}': {e}"),
            })?);
        }
        let point = vals[..n].to_vec();
        rows.push((point, Complex64::new(vals[n], vals[n + 1])));
    }
    if rows.len() != count {
        return Err(Error::Parse {
            line: text.lines().count(),
            msg: format!("header declares count={count} but file has {} rows", rows.len()),
        });
    }
    let label = path.file_stem().map_or_else(|| "tabulated".into(), |s| s.to_string_lossy().into_owned());
    Ok(GeneratorSpec::tabulated(TabulatedData::new(n, decay, rows)?, label))
}

/// Writes a tabulated generator in the CSV interchange format; the loader
/// recovers the samples bit-exactly.
pub fn save_tabulated(spec: &GeneratorSpec, path: impl AsRef<Path>) -> Result<()> {
    let GeneratorForm::Tabulated(data) = &spec.form else {
        return Err(Error::InvalidArgument(format!(
            "'{}' is not a tabulated generator",
            spec.label
        )));
    };
    let mut out = String::new();
    let _ = writeln!(out, "# n={} decay={} count={}", data.n, data.decay, data.points.len());
    for (p, v) in data.points.iter().zip(&data.values) {
        for x in p {
            let _ = write!(out, "{x:e},");
        }
        let _ = writeln!(out, "{:e},{:e}", v.re, v.im);
    }
    std::fs::write(path, out)?;
    Ok(())
}
