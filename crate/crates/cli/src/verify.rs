//! The named invariant suite behind the `verify` verb.
//!
//! Every check is scored as an [`InvariantResult`] with a measured deviation,
//! the tolerance it must stay under, and the signed margin between the two.
//! Canary checks invert the convention: they inject a known fault and pass
//! only when the fault is detected, so their margin measures how far past the
//! detection threshold the fault landed.
//!
//! All random draws come from a ChaCha stream keyed by the run seed, an
//! invariant tag and the smoothness index, and every parallel map collects in
//! grid order before a sequential fold, so verdicts and margins are identical
//! across thread counts.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use sislab_core::decomp::{decompose_fsi, verify_dimension_identity, DecompositionResult};
use sislab_core::duality::{biorthogonality_check, dual_generators, reconstruct};
use sislab_core::fiber::{fiberize, shift_field, FiberField};
use sislab_core::gramian::{classify_system, gramian_field, AnalysisReport, GramianField};
use sislab_core::linalg::{rank_threshold, HermitianEigen};
use sislab_core::oracle::{
    bracket_bruteforce, bracket_bruteforce_ascending, cross_bracket_bruteforce, direct_inner,
    frame_inequality_sample, modulated_coeffs, ShiftCoeff,
};
use sislab_core::shift_ops::{
    adjoint_field, apply_range_operator, dim_after_map, frame_operator_field, spectral_check,
    RangeOperatorField,
};
use sislab_core::{Error, FreqWindow, GeneratorSpec, TorusGrid, Weight, WeightedSeq, EPS_ABS};

use crate::config::RunConfig;
use crate::CliError;

/// Outcome of one named invariant check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantResult {
    pub name: String,
    pub pass: bool,
    /// Worst measured deviation, in the invariant's own units.
    pub deviation: f64,
    pub tolerance: f64,
    /// `tolerance - deviation` for bound checks; for canaries, how far past
    /// the detection threshold the injected fault landed.
    pub margin: f64,
    pub detail: String,
}

/// Truncation certificate for one sound (generator, smoothness) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertRow {
    pub generator: String,
    pub s: f64,
    pub eps_tail: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub invariants: Vec<InvariantResult>,
    pub all_pass: bool,
    pub wall_ms: u64,
    pub certificates: Vec<CertRow>,
    /// Checks not run, with the reason; an unsound (generator, smoothness)
    /// pair lands here instead of poisoning the whole suite.
    pub skipped: Vec<String>,
}

/// One smoothness index worth of prebuilt state shared by the checks.
struct Bank {
    s: f64,
    w: Weight,
    specs: Vec<GeneratorSpec>,
    fields: Vec<FiberField>,
    gram: GramianField,
    report: AnalysisReport,
    dec: DecompositionResult,
    /// Frame operator in the decomposition basis; absent when the system is
    /// not a frame.
    sop: Option<RangeOperatorField>,
}

struct Ctx {
    grid: TorusGrid,
    win: FreqWindow,
    banks: Vec<Bank>,
    skipped: Vec<String>,
    certificates: Vec<CertRow>,
}

fn build_ctx(cfg: &RunConfig) -> Result<Ctx, CliError> {
    let specs_all = cfg.parse_generators()?;
    let grid = TorusGrid::with_offset(cfg.n, cfg.m, cfg.offset);
    let win = FreqWindow::new(cfg.n, cfg.k);
    let mut banks = Vec::new();
    let mut skipped = Vec::new();
    let mut certificates = Vec::new();
    let mut first_unsound: Option<Error> = None;
    for &s in &cfg.s_list {
        let w = Weight::new(s, cfg.n);
        let mut specs = Vec::new();
        for sp in &specs_all {
            match sp.validate_truncation(&w, &win) {
                Ok(eps) => {
                    certificates.push(CertRow { generator: sp.label.clone(), s, eps_tail: eps });
                    specs.push(sp.clone());
                }
                Err(e @ Error::UnsoundTruncation { .. }) => {
                    skipped.push(format!("{} at s={s}: {e}", sp.label));
                    if first_unsound.is_none() {
                        first_unsound = Some(e);
                    }
                }
                Err(e) => return Err(e.into()),
            }
        }
        if specs.is_empty() {
            skipped.push(format!("s={s}: no generator certifies at this smoothness"));
            continue;
        }
        let fields: Vec<FiberField> = specs
            .iter()
            .map(|sp| fiberize(sp, w, &grid, &win))
            .collect::<Result<Vec<_>, _>>()?;
        let gram = gramian_field(&fields)?;
        let report = classify_system(&gram, cfg.eps_rank)?;
        let dec = decompose_fsi(&fields, cfg.eps_rank)?;
        let sop = match frame_operator_field(&fields, &gram, cfg.eps_rank) {
            Ok(op) => Some(op),
            Err(Error::NotAFrame(msg)) => {
                skipped.push(format!("frame operator at s={s}: {msg}"));
                None
            }
            Err(e) => return Err(e.into()),
        };
        banks.push(Bank { s, w, specs, fields, gram, report, dec, sop });
    }
    if banks.is_empty() {
        return Err(match first_unsound {
            Some(e) => e.into(),
            None => CliError::Usage("no runnable (generator, smoothness) combination".into()),
        });
    }
    Ok(Ctx { grid, win, banks, skipped, certificates })
}

fn rng_for(seed: u64, tag: &str, salt: u64) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(tag.as_bytes());
    hasher.update(salt.to_le_bytes());
    let digest = hasher.finalize();
    ChaCha8Rng::seed_from_u64(u64::from_le_bytes(digest[..8].try_into().expect("8 bytes")))
}

fn bound_result(name: &str, deviation: f64, tolerance: f64, detail: String) -> InvariantResult {
    InvariantResult {
        name: name.into(),
        pass: deviation <= tolerance,
        deviation,
        tolerance,
        margin: tolerance - deviation,
        detail,
    }
}

fn field_norm(f: &FiberField) -> f64 {
    f.norm_sqr().sqrt()
}

/// Random field with independent complex coefficients per grid point over
/// the orthonormal decomposition basis; lies in the fiber spaces exactly.
fn random_span_member(dec: &DecompositionResult, rng: &mut ChaCha8Rng) -> FiberField {
    let first = &dec.fields[0];
    let win_len = first.window.len();
    let fibers: Vec<WeightedSeq> = (0..first.grid.len())
        .map(|j| {
            let mut v = vec![Complex64::default(); win_len];
            for f in &dec.fields {
                let c = Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
                for (dst, src) in v.iter_mut().zip(f.fiber(j).rescaled()) {
                    *dst += c * src;
                }
            }
            WeightedSeq::from_rescaled(first.window.clone(), first.weight, v)
        })
        .collect();
    FiberField::new(
        first.grid.clone(),
        first.window.clone(),
        first.weight,
        "draw".into(),
        0.0,
        fibers,
    )
}

/// Brute-force cross bracket with a fallback to the window radius when a
/// tabulated generator's range ends before `k_large`.
fn oracle_entry(
    f: &GeneratorSpec,
    g: &GeneratorSpec,
    w: &Weight,
    t: &[f64],
    k_large: usize,
    k_fallback: usize,
) -> Result<Complex64, Error> {
    match cross_bracket_bruteforce(f, g, w, t, k_large) {
        Ok(v) => Ok(v),
        Err(Error::TabulatedOutOfRange { .. }) => {
            cross_bracket_bruteforce(f, g, w, t, k_fallback)
        }
        Err(e) => Err(e),
    }
}

/// Every Gramian entry against an independent descending compensated sum
/// over a much larger shift radius, within the certified tail budget.
fn inv_cross_validation(cfg: &RunConfig, ctx: &Ctx) -> Result<InvariantResult, CliError> {
    let k_large = cfg.oracle.k_large_factor * cfg.k;
    let skew = 1.0 + cfg.perturb_gramian;
    let mut worst_margin = f64::INFINITY;
    let mut worst_dev = 0.0_f64;
    let mut worst_tol = cfg.tolerances.cross_validation_extra;
    let mut worst_at = String::new();
    let mut entries = 0_usize;
    for bank in &ctx.banks {
        let r = bank.specs.len();
        let points: Vec<usize> = (0..ctx.grid.len()).step_by(cfg.oracle.stride).collect();
        for i in 0..r {
            for jj in i..r {
                let tol = (bank.gram.eps_tails[i] * bank.gram.eps_tails[jj]).sqrt()
                    + cfg.tolerances.cross_validation_extra;
                let devs: Result<Vec<f64>, Error> = points
                    .par_iter()
                    .map(|&p| {
                        let t = ctx.grid.point(p);
                        let fiber = bank.gram.matrix(p)[(i, jj)] * skew;
                        let oracle =
                            oracle_entry(&bank.specs[jj], &bank.specs[i], &bank.w, &t, k_large, cfg.k)?;
                        Ok((fiber - oracle).norm())
                    })
                    .collect();
                for d in devs? {
                    entries += 1;
                    if tol - d < worst_margin {
                        worst_margin = tol - d;
                        worst_dev = d;
                        worst_tol = tol;
                        worst_at = format!(
                            "s={}, entry ({}, {})",
                            bank.s, bank.gram.labels[i], bank.gram.labels[jj]
                        );
                    }
                }
            }
        }
    }
    let mut detail =
        format!("{entries} entries against sums to {k_large} shifts; tightest at {worst_at}");
    if cfg.perturb_gramian != 0.0 {
        detail.push_str(&format!(
            "; fiber entries skewed by 1 + {:.3e} (test hook)",
            cfg.perturb_gramian
        ));
    }
    Ok(InvariantResult {
        name: "gramian_oracle_cross_validation".into(),
        pass: worst_margin >= 0.0,
        deviation: worst_dev,
        tolerance: worst_tol,
        margin: worst_margin,
        detail,
    })
}

/// Descending-magnitude against ascending-index summation of the same
/// bracket terms; disagreement means the plain sum is not trustworthy.
fn inv_summation_order(cfg: &RunConfig, ctx: &Ctx) -> Result<InvariantResult, CliError> {
    let k_large = cfg.oracle.k_large_factor * cfg.k;
    let mut dev = 0.0_f64;
    let mut count = 0_usize;
    let samples = 8.min(ctx.grid.len());
    for bank in &ctx.banks {
        for spec in &bank.specs {
            for i in 0..samples {
                let t = ctx.grid.point(i * ctx.grid.len() / samples);
                let (desc, asc) = match bracket_bruteforce(spec, &bank.w, &t, k_large) {
                    Ok(d) => {
                        (d, bracket_bruteforce_ascending(spec, &bank.w, &t, k_large)?)
                    }
                    Err(Error::TabulatedOutOfRange { .. }) => (
                        bracket_bruteforce(spec, &bank.w, &t, cfg.k)?,
                        bracket_bruteforce_ascending(spec, &bank.w, &t, cfg.k)?,
                    ),
                    Err(e) => return Err(e.into()),
                };
                dev = dev.max((desc - asc).abs() / desc.abs().max(EPS_ABS));
                count += 1;
            }
        }
    }
    Ok(bound_result(
        "oracle_summation_order",
        dev,
        cfg.tolerances.summation_order,
        format!("{count} brackets summed in both orders"),
    ))
}

/// Field norms against direct band quadrature of `|φ̂ μ_s|²`. The tolerance
/// carries the Richardson estimate of both second-order rules plus the tail
/// certificate, which bounds the half-cell offset between the fiber band
/// `[-K, K+1)` and the quadrature band `[-K-1/2, K+1/2)`.
fn inv_isometry(cfg: &RunConfig, ctx: &Ctx) -> Result<InvariantResult, CliError> {
    let q = if cfg.m % 2 == 0 { cfg.m } else { cfg.m + 1 };
    let zero_shift = vec![0_i64; cfg.n];
    let mut worst_margin = f64::INFINITY;
    let mut worst_dev = 0.0_f64;
    let mut worst_tol = 0.0_f64;
    let mut count = 0_usize;
    for bank in &ctx.banks {
        for (idx, spec) in bank.specs.iter().enumerate() {
            let oracle = direct_inner(spec, spec, &zero_shift, &bank.w, &ctx.win, q)?;
            let v = bank.fields[idx].norm_sqr();
            let dev = (v - oracle.value.re).abs();
            let tol = 5.0 * oracle.quad_error
                + bank.fields[idx].eps_tail
                + cfg.tolerances.isometry * v.max(1.0);
            count += 1;
            if tol - dev < worst_margin {
                worst_margin = tol - dev;
                worst_dev = dev;
                worst_tol = tol;
            }
        }
    }
    Ok(InvariantResult {
        name: "fiberization_isometry".into(),
        pass: worst_margin >= 0.0,
        deviation: worst_dev,
        tolerance: worst_tol,
        margin: worst_margin,
        detail: format!("{count} squared norms against direct quadrature at q={q}"),
    })
}

/// Classification at smoothness `s` of the lifted generator against the
/// plain generator at `s = 0`: bounds within tolerance, all flags and the
/// whole dimension field exactly equal.
fn inv_s_transport(
    cfg: &RunConfig,
    ctx: &Ctx,
    skips: &mut Vec<String>,
) -> Result<InvariantResult, CliError> {
    let specs_all = cfg.parse_generators()?;
    let w0 = Weight::new(0.0, cfg.n);
    let mut dev = 0.0_f64;
    let mut flags_agree = true;
    let mut count = 0_usize;
    for spec in &specs_all {
        let f0 = match fiberize(spec, w0, &ctx.grid, &ctx.win) {
            Ok(f) => f,
            Err(e @ Error::UnsoundTruncation { .. }) => {
                skips.push(format!("smoothness transport for {}: {e}", spec.label));
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let rep0 = classify_system(&gramian_field(std::slice::from_ref(&f0))?, cfg.eps_rank)?;
        for &s in &cfg.s_list {
            if s == 0.0 {
                continue;
            }
            let lifted = GeneratorSpec::bessel_shift(spec.clone(), s);
            let fs = fiberize(&lifted, Weight::new(s, cfg.n), &ctx.grid, &ctx.win)?;
            let reps = classify_system(&gramian_field(std::slice::from_ref(&fs))?, cfg.eps_rank)?;
            dev = dev
                .max((reps.frame_lower - rep0.frame_lower).abs())
                .max((reps.bessel_bound - rep0.bessel_bound).abs());
            flags_agree &= reps.is_frame == rep0.is_frame
                && reps.is_riesz == rep0.is_riesz
                && reps.is_fundamental_within_window == rep0.is_fundamental_within_window
                && reps.dimension == rep0.dimension
                && reps.spectrum == rep0.spectrum;
            count += 1;
        }
    }
    let tol = cfg.tolerances.s_transport;
    let pass = dev <= tol && flags_agree;
    Ok(InvariantResult {
        name: "s_transport_classification".into(),
        pass,
        deviation: dev,
        tolerance: tol,
        margin: if flags_agree { tol - dev } else { -1.0 },
        detail: format!(
            "{count} lifted single-generator systems against s=0; flags and dimension fields {}",
            if flags_agree { "agree" } else { "disagree" }
        ),
    })
}

/// Rayleigh quotients of the frame operator on random in-space draws must
/// stay inside the reported frame bounds.
fn inv_quadratic_form(
    cfg: &RunConfig,
    ctx: &Ctx,
    skips: &mut Vec<String>,
) -> Result<InvariantResult, CliError> {
    let tol = cfg.tolerances.quadratic_form;
    let mut dev = 0.0_f64;
    let mut count = 0_usize;
    for bank in &ctx.banks {
        let Some(sop) = &bank.sop else {
            skips.push(format!("quadratic form bounds at s={}: no frame operator", bank.s));
            continue;
        };
        let a = bank.report.frame_lower;
        let b = bank.report.bessel_bound;
        let mut rng = rng_for(cfg.seed, "quadratic_form", bank.s.to_bits());
        for _ in 0..cfg.oracle.draws {
            let f = random_span_member(&bank.dec, &mut rng);
            let n2 = f.norm_sqr();
            if n2 <= EPS_ABS {
                continue;
            }
            let sf = apply_range_operator(sop, &f)?;
            let quad = sf.inner(&f)?.re;
            let viol = ((a * n2 - quad) / n2).max((quad - b * n2) / n2);
            dev = dev.max(viol.max(0.0));
            count += 1;
        }
    }
    Ok(bound_result(
        "quadratic_form_bounds",
        dev,
        tol,
        format!("{count} random draws against the reported bounds"),
    ))
}

/// Accumulated deviations of one decomposition: principal Gramian from
/// `diag(1_active)`, spectrum nesting violations, residual of the original
/// fibers against the principal span, and the dimension identity.
struct DecompositionScore {
    ortho: f64,
    nesting: usize,
    span: f64,
    identity: f64,
}

fn score_decomposition(
    fields: &[FiberField],
    gram: &GramianField,
    dec: &DecompositionResult,
) -> Result<DecompositionScore, CliError> {
    let grid_len = dec.fields[0].grid.len();
    let r = dec.fields.len();
    let gd = gramian_field(&dec.fields)?;
    let mut ortho = 0.0_f64;
    for j in 0..grid_len {
        let m = gd.matrix(j);
        for row in 0..r {
            for col in 0..r {
                let target = if row == col && dec.spectra[row][j] { 1.0 } else { 0.0 };
                ortho = ortho.max((m[(row, col)] - Complex64::new(target, 0.0)).norm());
            }
        }
    }
    let mut nesting = 0_usize;
    for i in 0..r.saturating_sub(1) {
        for j in 0..grid_len {
            if dec.spectra[i + 1][j] && !dec.spectra[i][j] {
                nesting += 1;
            }
        }
    }
    let win_len = dec.fields[0].window.len();
    // Eigenvalue mass under the rank cut is invisible to a d-slot basis;
    // the column-pivot selection factor bounds how much of it one residual
    // can collect, so residuals are measured net of that allowance.
    let allowances: Vec<f64> = (0..grid_len)
        .into_par_iter()
        .map(|j| {
            let e = HermitianEigen::new(gram.matrix(j));
            let thr = rank_threshold(e.max_value(), dec.eps_rank);
            let dropped: f64 = e.values.iter().filter(|&&v| v <= thr).map(|&v| v.max(0.0)).sum();
            let rr = r as f64;
            let d = dec.d[j] as f64;
            let factor = ((rr - d) * (1.0 + d * (rr - d))).sqrt().max(1.0);
            factor * dropped.sqrt()
        })
        .collect();
    let mut span = 0.0_f64;
    for orig in fields {
        let scale = orig
            .fibers()
            .iter()
            .map(|f| f.norm_sqr())
            .fold(0.0_f64, f64::max)
            .sqrt()
            .max(EPS_ABS);
        let residuals: Vec<f64> = (0..grid_len)
            .into_par_iter()
            .map(|j| {
                let d = dec.d[j];
                let q = DMatrix::from_fn(win_len, d, |row, col| {
                    dec.fields[col].fiber(j).rescaled()[row]
                });
                let x = DVector::from_column_slice(orig.fiber(j).rescaled());
                let proj = &q * (q.adjoint() * &x);
                ((x - proj).norm() - allowances[j]).max(0.0)
            })
            .collect();
        let worst = residuals.into_iter().fold(0.0_f64, f64::max);
        span = span.max(worst / scale);
    }
    let identity = verify_dimension_identity(dec, gram);
    Ok(DecompositionScore { ortho, nesting, span, identity })
}

/// The four decomposition invariants, each folded over every bank plus a
/// rank-deficient duplicate pair of the first bank's leading generator.
fn inv_decomposition(cfg: &RunConfig, ctx: &Ctx) -> Result<Vec<InvariantResult>, CliError> {
    let mut ortho = 0.0_f64;
    let mut nesting = 0_usize;
    let mut span = 0.0_f64;
    let mut identity = 0.0_f64;
    let mut systems = 0_usize;
    for bank in &ctx.banks {
        let score = score_decomposition(&bank.fields, &bank.gram, &bank.dec)?;
        ortho = ortho.max(score.ortho);
        nesting += score.nesting;
        span = span.max(score.span);
        identity = identity.max(score.identity);
        systems += 1;
    }
    let bank = &ctx.banks[0];
    let dup = vec![bank.fields[0].clone(), bank.fields[0].clone()];
    let dup_gram = gramian_field(&dup)?;
    let dup_dec = decompose_fsi(&dup, cfg.eps_rank)?;
    let score = score_decomposition(&dup, &dup_gram, &dup_dec)?;
    ortho = ortho.max(score.ortho);
    nesting += score.nesting;
    span = span.max(score.span);
    identity = identity.max(score.identity);
    systems += 1;

    let detail = format!("{systems} systems including a duplicate pair");
    Ok(vec![
        bound_result(
            "decomposition_orthonormality",
            ortho,
            cfg.tolerances.orthonormality,
            detail.clone(),
        ),
        InvariantResult {
            name: "decomposition_spectrum_nesting".into(),
            pass: nesting == 0,
            deviation: nesting as f64,
            tolerance: 0.0,
            margin: -(nesting as f64),
            detail: format!("{systems} systems, {nesting} nesting violations"),
        },
        bound_result(
            "decomposition_span_residual",
            span,
            cfg.tolerances.span_residual,
            detail.clone(),
        ),
        bound_result("dimension_identity", identity, cfg.tolerances.dimension_identity, detail),
    ])
}

/// Integer shifts up to distance 3 along each axis, plus the zero shift.
fn probe_shifts(n: usize) -> Vec<Vec<i64>> {
    if n == 1 {
        return (-3..=3).map(|k| vec![k]).collect();
    }
    let mut out = vec![vec![0; n]];
    for ax in 0..n {
        for step in [-3_i64, -2, -1, 1, 2, 3] {
            let mut v = vec![0; n];
            v[ax] = step;
            out.push(v);
        }
    }
    out
}

/// Range operators must commute with integer shifts: applying after a shift
/// equals shifting the applied output.
fn inv_shift_commutation(
    cfg: &RunConfig,
    ctx: &Ctx,
    skips: &mut Vec<String>,
) -> Result<InvariantResult, CliError> {
    let mut dev = 0.0_f64;
    let mut count = 0_usize;
    for bank in &ctx.banks {
        let mut ops: Vec<(&str, RangeOperatorField)> = Vec::new();
        match &bank.sop {
            Some(op) => ops.push(("frame_operator", op.clone())),
            None => skips.push(format!("shift commutation at s={}: no frame operator", bank.s)),
        }
        let unit = {
            let mut v = vec![0_i64; cfg.n];
            v[0] = 1;
            v
        };
        ops.push(("modulation", RangeOperatorField::modulation(&bank.dec, &unit)));
        let mut rng = rng_for(cfg.seed, "shift_commutation", bank.s.to_bits());
        let f = random_span_member(&bank.dec, &mut rng);
        let denom = field_norm(&f).max(EPS_ABS);
        for (_, op) in &ops {
            let scale = denom * op.sup_norm.max(1.0);
            for m in probe_shifts(cfg.n) {
                let lhs = apply_range_operator(op, &shift_field(&f, &m))?;
                let rhs = shift_field(&apply_range_operator(op, &f)?, &m);
                dev = dev.max(lhs.sub(&rhs)?.norm_sqr().sqrt() / scale);
                count += 1;
            }
        }
    }
    Ok(bound_result(
        "shift_commutation",
        dev,
        cfg.tolerances.commutation,
        format!("{count} operator-shift pairs with shifts up to distance 3"),
    ))
}

fn random_operator(
    dec: &DecompositionResult,
    rng: &mut ChaCha8Rng,
) -> Result<RangeOperatorField, CliError> {
    let dmax = dec.d.iter().copied().max().unwrap_or(0);
    let mats: Vec<DMatrix<Complex64>> = (0..dec.fields[0].grid.len())
        .map(|_| {
            DMatrix::from_fn(dmax, dmax, |_, _| {
                Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
            })
        })
        .collect();
    Ok(RangeOperatorField::from_decomposition(dec, mats)?)
}

/// `⟨R x, y⟩ = ⟨x, R* y⟩` on random in-space draws, for the frame operator,
/// a modulation and a random operator.
fn inv_adjoint_duality(cfg: &RunConfig, ctx: &Ctx) -> Result<InvariantResult, CliError> {
    let mut dev = 0.0_f64;
    let mut count = 0_usize;
    for bank in &ctx.banks {
        let mut rng = rng_for(cfg.seed, "adjoint_duality", bank.s.to_bits());
        let unit = {
            let mut v = vec![0_i64; cfg.n];
            v[0] = 1;
            v
        };
        let mut ops: Vec<RangeOperatorField> = Vec::new();
        if let Some(op) = &bank.sop {
            ops.push(op.clone());
        }
        ops.push(RangeOperatorField::modulation(&bank.dec, &unit));
        ops.push(random_operator(&bank.dec, &mut rng)?);
        for op in &ops {
            let adj = adjoint_field(op);
            for _ in 0..4 {
                let x = random_span_member(&bank.dec, &mut rng);
                let y = random_span_member(&bank.dec, &mut rng);
                let scale =
                    field_norm(&x).max(EPS_ABS) * field_norm(&y).max(EPS_ABS) * op.sup_norm.max(1.0);
                let lhs = apply_range_operator(op, &x)?.inner(&y)?;
                let rhs = x.inner(&apply_range_operator(&adj, &y)?)?;
                dev = dev.max((lhs - rhs).norm() / scale);
                count += 1;
            }
        }
    }
    Ok(bound_result(
        "adjoint_duality",
        dev,
        cfg.tolerances.adjoint,
        format!("{count} pairings against the pointwise adjoint"),
    ))
}

/// Spectral verdicts on operators whose answers are known in closed form:
/// twice the identity, a modulation, and the frame operator against the
/// reported bounds.
fn inv_spectral_canaries(
    cfg: &RunConfig,
    ctx: &Ctx,
    skips: &mut Vec<String>,
) -> Result<InvariantResult, CliError> {
    let bank = ctx.banks.iter().find(|b| b.s == 0.0).unwrap_or(&ctx.banks[0]);
    let tol = cfg.tolerances.spectral;
    let mut ok = true;
    let mut notes: Vec<String> = Vec::new();
    let mut dev = 0.0_f64;
    let mut tol_bounds = cfg.tolerances.quadratic_form;

    let two = RangeOperatorField::scalar(&bank.dec, Complex64::new(2.0, 0.0));
    let v = spectral_check(&two, tol);
    if !(v.self_adjoint && !v.isometry && !v.unitary) {
        ok = false;
        notes.push("2·identity misclassified".into());
    }
    match v.bounds {
        Some([lo, hi]) => dev = dev.max((lo - 2.0).abs()).max((hi - 2.0).abs()),
        None => {
            ok = false;
            notes.push("2·identity has no spectral bounds".into());
        }
    }

    if cfg.m >= 3 {
        let unit = {
            let mut u = vec![0_i64; cfg.n];
            u[0] = 1;
            u
        };
        let v = spectral_check(&RangeOperatorField::modulation(&bank.dec, &unit), tol);
        if !(v.isometry && v.unitary && !v.self_adjoint) {
            ok = false;
            notes.push("modulation misclassified".into());
        }
    } else {
        skips.push("spectral canaries: modulation check needs m >= 3".into());
    }

    match &bank.sop {
        Some(sop) => {
            let v = spectral_check(sop, tol);
            let a = bank.report.frame_lower;
            let b = bank.report.bessel_bound;
            tol_bounds = cfg.tolerances.quadratic_form * b.abs().max(1.0);
            if !v.self_adjoint {
                ok = false;
                notes.push("frame operator not seen as self-adjoint".into());
            }
            match v.bounds {
                Some([lo, hi]) => dev = dev.max((lo - a).abs()).max((hi - b).abs()),
                None => {
                    ok = false;
                    notes.push("frame operator has no spectral bounds".into());
                }
            }
            // Only compare the unitarity verdict when the bounds are far
            // from the decision threshold in either direction.
            let offset = (a - 1.0).abs().max((b - 1.0).abs());
            if offset > 4.0 * tol && v.unitary {
                ok = false;
                notes.push("frame operator flagged unitary away from bounds 1".into());
            }
            if offset < tol / 4.0 && !v.unitary {
                ok = false;
                notes.push("frame operator with unit bounds not flagged unitary".into());
            }
        }
        None => skips.push(format!("spectral canaries at s={}: no frame operator", bank.s)),
    }

    let pass = ok && dev <= tol_bounds;
    Ok(InvariantResult {
        name: "spectral_canaries".into(),
        pass,
        deviation: dev,
        tolerance: tol_bounds,
        margin: if ok { tol_bounds - dev } else { -1.0 },
        detail: if notes.is_empty() {
            format!("known verdicts reproduced at s={}", bank.s)
        } else {
            notes.join("; ")
        },
    })
}

/// Applying any range operator cannot raise the dimension field: the image
/// rank stays below both the domain dimension and the factor rank.
fn inv_dim_after_map(cfg: &RunConfig, ctx: &Ctx) -> Result<InvariantResult, CliError> {
    let mut violations = 0_usize;
    let mut ops = 0_usize;
    for bank in &ctx.banks {
        let dmax = bank.dec.d.iter().copied().max().unwrap_or(0);
        let grid_len = ctx.grid.len();
        let mut rng = rng_for(cfg.seed, "dim_after_map", bank.s.to_bits());
        for _ in 0..5 {
            let mut target: Vec<usize> = Vec::with_capacity(grid_len);
            let mats: Vec<DMatrix<Complex64>> = (0..grid_len)
                .map(|j| {
                    let tr = rng.gen_range(0..=bank.dec.d[j]);
                    target.push(tr);
                    let left = DMatrix::from_fn(dmax, tr, |_, _| {
                        Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
                    });
                    let right = DMatrix::from_fn(tr, dmax, |_, _| {
                        Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
                    });
                    left * right
                })
                .collect();
            let op = RangeOperatorField::from_decomposition(&bank.dec, mats)?;
            let after = dim_after_map(&op, &bank.dec.d, cfg.eps_rank);
            for j in 0..grid_len {
                if after[j] > bank.dec.d[j] || after[j] > target[j] {
                    violations += 1;
                }
            }
            ops += 1;
        }
    }
    Ok(InvariantResult {
        name: "dim_after_map_monotonicity".into(),
        pass: violations == 0,
        deviation: violations as f64,
        tolerance: 0.0,
        margin: -(violations as f64),
        detail: format!("{ops} random rank-limited operators"),
    })
}

/// The four duality invariants: bound reciprocity, two-sided reconstruction,
/// biorthogonality (or its refusal outside the Riesz case), and the dual of
/// the dual returning the primal generators.
/// A single system fed through the duality checks.
struct DualCase {
    label: String,
    fields: Vec<FiberField>,
    gram: GramianField,
    report: AnalysisReport,
    dec: DecompositionResult,
}

/// The canonical dual shares the rank cutoff with the primal, so a system
/// whose bound ratio B/A reaches 1/ε_rank puts the dual's own leading
/// direction at the cutoff and every dual quantity becomes ill posed.
fn dual_well_posed(report: &AnalysisReport, eps_rank: f64) -> bool {
    report.bessel_bound * eps_rank <= 0.1 * report.frame_lower
}

/// Per-s roster for the duality checks: every single-generator subsystem,
/// each multi-generator bank whose dual is well conditioned, and a
/// duplicate pair of the first bank's leading generator.
fn dual_cases(
    cfg: &RunConfig,
    ctx: &Ctx,
    skips: &mut Vec<String>,
) -> Result<Vec<DualCase>, CliError> {
    let build = |label: String, fields: Vec<FiberField>| -> Result<DualCase, CliError> {
        let gram = gramian_field(&fields)?;
        let report = classify_system(&gram, cfg.eps_rank)?;
        let dec = decompose_fsi(&fields, cfg.eps_rank)?;
        Ok(DualCase { label, fields, gram, report, dec })
    };
    let mut cases = Vec::new();
    for bank in &ctx.banks {
        for (i, f) in bank.fields.iter().enumerate() {
            cases.push(build(format!("{} at s={}", bank.specs[i].label, bank.s), vec![f.clone()])?);
        }
        if bank.fields.len() < 2 {
            continue;
        }
        if dual_well_posed(&bank.report, cfg.eps_rank) {
            cases.push(DualCase {
                label: format!("bank at s={}", bank.s),
                fields: bank.fields.clone(),
                gram: bank.gram.clone(),
                report: bank.report.clone(),
                dec: bank.dec.clone(),
            });
        } else {
            skips.push(format!(
                "duality for the bank at s={}: bound ratio {:.2e} reaches the rank cutoff \
                 1/eps_rank, dual checks ill posed",
                bank.s,
                bank.report.bessel_bound / bank.report.frame_lower
            ));
        }
    }
    if let Some(bank) = ctx.banks.first() {
        let f = bank.fields[0].clone();
        cases.push(build(format!("duplicate pair at s={}", bank.s), vec![f.clone(), f])?);
    }
    Ok(cases)
}

fn inv_duality(
    cfg: &RunConfig,
    ctx: &Ctx,
    skips: &mut Vec<String>,
) -> Result<Vec<InvariantResult>, CliError> {
    let mut quad_dev = 0.0_f64;
    let mut rec_dev = 0.0_f64;
    let mut bio_dev = 0.0_f64;
    let mut dd_dev = 0.0_f64;
    let mut refusals_ok = true;
    let mut systems = 0_usize;
    let mut draws = 0_usize;
    for (idx, case) in dual_cases(cfg, ctx, skips)?.iter().enumerate() {
        let dual = match dual_generators(&case.fields, &case.gram, cfg.eps_rank) {
            Ok(d) => d,
            Err(Error::NotAFrame(msg)) => {
                skips.push(format!("duality for {}: {msg}", case.label));
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        systems += 1;
        let [a, b, ad, bd] = dual.bound_quadruple;
        quad_dev = quad_dev.max((ad * b - 1.0).abs()).max((bd * a - 1.0).abs());
        for res in &dual.recon_residuals {
            rec_dev = rec_dev.max(*res);
        }
        let mut rng = rng_for(cfg.seed, "duality_reconstruction", idx as u64);
        for _ in 0..cfg.oracle.frame_draws {
            let f = random_span_member(&case.dec, &mut rng);
            if f.norm_sqr() <= EPS_ABS {
                continue;
            }
            let (_, res) = reconstruct(&f, &case.fields, &dual.fields)?;
            rec_dev = rec_dev.max(res[0]).max(res[1]);
            draws += 1;
        }
        if case.report.is_riesz {
            bio_dev =
                bio_dev.max(biorthogonality_check(&case.fields, &dual.fields, cfg.eps_rank, 3)?);
        } else {
            match biorthogonality_check(&case.fields, &dual.fields, cfg.eps_rank, 3) {
                Err(Error::NotRiesz(_)) => {}
                Ok(_) => refusals_ok = false,
                Err(e) => return Err(e.into()),
            }
        }
        let dual_gram = gramian_field(&dual.fields)?;
        let dd = dual_generators(&dual.fields, &dual_gram, cfg.eps_rank)?;
        for (orig, back) in case.fields.iter().zip(&dd.fields) {
            let num = orig.sub(back)?.norm_sqr().sqrt();
            dd_dev = dd_dev.max(num / field_norm(orig).max(EPS_ABS));
        }
    }
    let detail = format!("{systems} frame systems");
    let bio_tol = cfg.tolerances.biorthogonality;
    Ok(vec![
        bound_result(
            "duality_bound_reciprocity",
            quad_dev,
            cfg.tolerances.bound_reciprocity,
            detail.clone(),
        ),
        bound_result(
            "duality_reconstruction",
            rec_dev,
            cfg.tolerances.reconstruction,
            format!("{detail}, {draws} random draws in both orders"),
        ),
        InvariantResult {
            name: "duality_biorthogonality".into(),
            pass: bio_dev <= bio_tol && refusals_ok,
            deviation: bio_dev,
            tolerance: bio_tol,
            margin: if refusals_ok { bio_tol - bio_dev } else { -1.0 },
            detail: format!(
                "{detail}, shifts up to distance 3; non-Riesz refusals {}",
                if refusals_ok { "honored" } else { "missed" }
            ),
        },
        bound_result("duality_dual_of_dual", dd_dev, cfg.tolerances.dual_of_dual, detail),
    ])
}

fn frame_q(cfg: &RunConfig) -> usize {
    cfg.effective_q().min(512)
}

fn random_coeffs(n: usize, gens: usize, rng: &mut ChaCha8Rng) -> Vec<ShiftCoeff> {
    (0..8)
        .map(|_| ShiftCoeff {
            shift: (0..n).map(|_| rng.gen_range(-2_i64..=2)).collect(),
            gen: rng.gen_range(0..gens),
            c: Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5),
        })
        .collect()
}

/// Direct frame inequality on random finitely supported synthesized members,
/// against the reported bounds widened by the configured relative margin.
fn inv_frame_inequality(cfg: &RunConfig, ctx: &Ctx) -> Result<InvariantResult, CliError> {
    let q = frame_q(cfg);
    let widen = cfg.tolerances.frame_margin;
    let mut min_slack = f64::INFINITY;
    let mut count = 0_usize;
    for bank in &ctx.banks {
        let a = bank.report.frame_lower;
        let b = bank.report.bessel_bound;
        let a_wide = a - widen * a.abs().max(1.0);
        let b_wide = b + widen * b.abs().max(1.0);
        let mut rng = rng_for(cfg.seed, "frame_inequality", bank.s.to_bits());
        let coeff_sets: Vec<Vec<ShiftCoeff>> = (0..cfg.oracle.frame_draws)
            .map(|_| random_coeffs(cfg.n, bank.specs.len(), &mut rng))
            .collect();
        let checks: Result<Vec<_>, Error> = coeff_sets
            .par_iter()
            .map(|coeffs| {
                frame_inequality_sample(&bank.specs, coeffs, a_wide, b_wide, &bank.w, &ctx.win, q)
            })
            .collect();
        for check in checks? {
            let slack = check.lower_margin.min(check.upper_margin) + check.tol;
            min_slack = min_slack.min(slack);
            count += 1;
        }
    }
    Ok(InvariantResult {
        name: "oracle_frame_inequality".into(),
        pass: min_slack >= 0.0,
        deviation: (-min_slack).max(0.0),
        tolerance: 0.0,
        margin: min_slack,
        detail: format!("{count} synthesized members at q={q}, bounds widened by {widen:.1e}"),
    })
}

/// A deliberately wrong lower frame bound must be rejected by a shift train
/// modulated to concentrate near the minimizing torus point.
fn inv_frame_inequality_canary(cfg: &RunConfig, ctx: &Ctx) -> Result<InvariantResult, CliError> {
    let bank = &ctx.banks[0];
    let single = std::slice::from_ref(&bank.fields[0]);
    let g1 = gramian_field(single)?;
    let rep1 = classify_system(&g1, cfg.eps_rank)?;
    let (a1, b1) = (rep1.frame_lower, rep1.bessel_bound);
    let a_wrong =
        if b1 - a1 < 0.1 * b1.abs() { 1.2 * b1 } else { a1 + 0.5 * (b1 - a1) };
    let argmin = (0..ctx.grid.len())
        .map(|j| (j, g1.matrix(j)[(0, 0)].re))
        .fold((0, f64::INFINITY), |acc, cur| if cur.1 < acc.1 { cur } else { acc })
        .0;
    let t0 = ctx.grid.point(argmin);
    let coeffs = modulated_coeffs(0, 8.min(cfg.k), &t0);
    let check = frame_inequality_sample(
        &bank.specs[..1],
        &coeffs,
        a_wrong,
        b1 + b1.abs().max(1.0),
        &bank.w,
        &ctx.win,
        frame_q(cfg),
    )?;
    let margin = -(check.lower_margin + check.tol);
    Ok(InvariantResult {
        name: "oracle_frame_inequality_canary".into(),
        pass: margin >= 0.0,
        deviation: (check.lower_margin + check.tol).max(0.0),
        tolerance: 0.0,
        margin,
        detail: format!(
            "lower bound misreported as {a_wrong:.4e} against true {a1:.4e} for {}",
            bank.specs[0].label
        ),
    })
}

/// A relative skew of 1e-3 injected into the leading Gramian entry must be
/// caught by the cross-validation tolerance at energetic grid points.
fn inv_perturbation_canary(cfg: &RunConfig, ctx: &Ctx) -> Result<InvariantResult, CliError> {
    let bank = &ctx.banks[0];
    let delta = 1e-3;
    let k_large = cfg.oracle.k_large_factor * cfg.k;
    let tol_cv = bank.gram.eps_tails[0] + cfg.tolerances.cross_validation_extra;
    let peak = (0..ctx.grid.len())
        .map(|j| bank.gram.matrix(j)[(0, 0)].re)
        .fold(0.0_f64, f64::max);
    let energetic: Vec<usize> = (0..ctx.grid.len())
        .filter(|&j| bank.gram.matrix(j)[(0, 0)].re >= 0.5 * peak)
        .collect();
    let stride = (energetic.len() / 4).max(1);
    let mut excess_min = f64::INFINITY;
    let mut points = 0_usize;
    for &j in energetic.iter().step_by(stride).take(4) {
        let t = ctx.grid.point(j);
        let skewed = bank.gram.matrix(j)[(0, 0)] * (1.0 + delta);
        let oracle = oracle_entry(&bank.specs[0], &bank.specs[0], &bank.w, &t, k_large, cfg.k)?;
        let dev = (skewed - oracle).norm();
        excess_min = excess_min.min(dev - tol_cv);
        points += 1;
    }
    Ok(InvariantResult {
        name: "gramian_perturbation_canary".into(),
        pass: excess_min >= 0.0,
        deviation: (-excess_min).max(0.0),
        tolerance: 0.0,
        margin: excess_min,
        detail: format!(
            "relative skew {delta:.1e} on the leading entry of {} at {points} energetic points",
            bank.specs[0].label
        ),
    })
}

/// Runs the full suite and returns the report plus the names of failing
/// invariants in order.
pub fn run_verify(cfg: &RunConfig) -> Result<(VerifyReport, Vec<String>), CliError> {
    let start = Instant::now();
    let ctx = build_ctx(cfg)?;
    let mut skips = ctx.skipped.clone();
    let mut invariants = Vec::new();
    invariants.push(inv_cross_validation(cfg, &ctx)?);
    invariants.push(inv_summation_order(cfg, &ctx)?);
    invariants.push(inv_isometry(cfg, &ctx)?);
    invariants.push(inv_s_transport(cfg, &ctx, &mut skips)?);
    invariants.push(inv_quadratic_form(cfg, &ctx, &mut skips)?);
    invariants.extend(inv_decomposition(cfg, &ctx)?);
    invariants.push(inv_shift_commutation(cfg, &ctx, &mut skips)?);
    invariants.push(inv_adjoint_duality(cfg, &ctx)?);
    invariants.push(inv_spectral_canaries(cfg, &ctx, &mut skips)?);
    invariants.push(inv_dim_after_map(cfg, &ctx)?);
    invariants.extend(inv_duality(cfg, &ctx, &mut skips)?);
    invariants.push(inv_frame_inequality(cfg, &ctx)?);
    invariants.push(inv_frame_inequality_canary(cfg, &ctx)?);
    invariants.push(inv_perturbation_canary(cfg, &ctx)?);
    let failing: Vec<String> =
        invariants.iter().filter(|i| !i.pass).map(|i| i.name.clone()).collect();
    let report = VerifyReport {
        all_pass: failing.is_empty(),
        invariants,
        wall_ms: start.elapsed().as_millis() as u64,
        certificates: ctx.certificates,
        skipped: skips,
    };
    Ok((report, failing))
}
