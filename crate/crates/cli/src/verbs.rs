//! Drivers of the CLI verbs: analyze, decompose, dualize, verify and export.
//!
//! Each driver writes its reports atomically into the configured output
//! directory and appends one progress line per system to the log buffer.
//! Every JSON file is an envelope `{meta, <verb key>}` matching the shipped
//! schema, where `meta` records enough to reproduce the run.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use sislab_core::decomp::{decompose_fsi, verify_dimension_identity, DecompositionResult};
use sislab_core::duality::dual_generators;
use sislab_core::fiber::{fiberize, FiberField};
use sislab_core::gramian::{classify_system, eigen_curves, gramian_field};
use sislab_core::persist::{atomic_write, save_field, write_json};
use sislab_core::{FreqWindow, TorusGrid, Weight, EPS_ABS};

use crate::config::{s_tag, RunConfig, Tolerances};
use crate::{report_schema, schema, CliError, ExportFormat};

/// Reproducibility block embedded in every report file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    /// SHA-256 of the canonical form of the effective configuration.
    pub config_hash: String,
    pub seed: u64,
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub offset: f64,
    /// Smoothness of this file's system; absent for run-wide reports.
    pub s: Option<f64>,
    pub generators: Vec<String>,
    pub eps_rank: f64,
    pub eps_abs: f64,
    /// Truncation certificates per generator; absent for run-wide reports,
    /// which carry them per smoothness instead.
    pub eps_tails: Option<Vec<f64>>,
    pub tolerances: Tolerances,
    pub threads: usize,
}

pub fn meta_for(cfg: &RunConfig, s: Option<f64>, eps_tails: Option<Vec<f64>>) -> RunMeta {
    RunMeta {
        config_hash: cfg.hash(),
        seed: cfg.seed,
        n: cfg.n,
        m: cfg.m,
        k: cfg.k,
        offset: cfg.offset,
        s,
        generators: cfg.generators.clone(),
        eps_rank: cfg.eps_rank,
        eps_abs: EPS_ABS,
        eps_tails,
        tolerances: cfg.tolerances.clone(),
        threads: cfg.threads,
    }
}

fn fields_at(
    cfg: &RunConfig,
    s: f64,
    grid: &TorusGrid,
    win: &FreqWindow,
) -> Result<Vec<FiberField>, CliError> {
    let specs = cfg.parse_generators()?;
    let w = Weight::new(s, cfg.n);
    Ok(specs
        .iter()
        .map(|sp| fiberize(sp, w, grid, win))
        .collect::<Result<Vec<_>, _>>()?)
}

/// Classifies every configured system and writes one report plus one
/// eigenvalue-curve CSV per smoothness index.
pub fn run_analyze(cfg: &RunConfig, log: &mut String) -> Result<(), CliError> {
    std::fs::create_dir_all(&cfg.output_dir)?;
    let grid = TorusGrid::with_offset(cfg.n, cfg.m, cfg.offset);
    let win = FreqWindow::new(cfg.n, cfg.k);
    for &s in &cfg.s_list {
        let fields = fields_at(cfg, s, &grid, &win)?;
        let g = gramian_field(&fields)?;
        let report = classify_system(&g, cfg.eps_rank)?;
        let curves = eigen_curves(&g);
        let meta = meta_for(cfg, Some(s), Some(g.eps_tails.clone()));
        let jpath = cfg.output_dir.join(format!("analysis_s{}.json", s_tag(s)));
        write_json(&jpath, &json!({ "meta": meta, "report": report }))?;
        let cpath = cfg.output_dir.join(format!("eigen_s{}.csv", s_tag(s)));
        sislab_core::persist::write_eigen_csv(&curves, &cpath)?;
        let _ = writeln!(
            log,
            "analyze s={s}: A={:.6e} B={:.6e} frame={} riesz={} -> {}",
            report.frame_lower,
            report.bessel_bound,
            report.is_frame,
            report.is_riesz,
            jpath.display()
        );
    }
    Ok(())
}

fn write_dimension_csv(
    grid: &TorusGrid,
    dec: &DecompositionResult,
    path: &Path,
) -> Result<(), CliError> {
    let n = grid.n;
    let r = dec.fields.len();
    let mut out = String::new();
    for ax in 0..n {
        let _ = write!(out, "t_{},", ax + 1);
    }
    out.push_str("dim");
    for i in 0..r {
        let _ = write!(out, ",spectrum_{}", i + 1);
    }
    out.push('\n');
    for j in 0..grid.len() {
        for c in grid.point(j) {
            let _ = write!(out, "{c:.16e},");
        }
        let _ = write!(out, "{}", dec.d[j]);
        for spec in &dec.spectra {
            let _ = write!(out, ",{}", u8::from(spec[j]));
        }
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())?;
    Ok(())
}

/// Orthonormalizes every configured system, writes the decomposition report,
/// the dimension-function CSV and each principal generator as a field file.
pub fn run_decompose(cfg: &RunConfig, log: &mut String) -> Result<(), CliError> {
    std::fs::create_dir_all(&cfg.output_dir)?;
    let grid = TorusGrid::with_offset(cfg.n, cfg.m, cfg.offset);
    let win = FreqWindow::new(cfg.n, cfg.k);
    for &s in &cfg.s_list {
        let fields = fields_at(cfg, s, &grid, &win)?;
        let g = gramian_field(&fields)?;
        let dec = decompose_fsi(&fields, cfg.eps_rank)?;
        let identity_deviation = verify_dimension_identity(&dec, &g);
        let meta = meta_for(cfg, Some(s), Some(g.eps_tails.clone()));
        let tag = s_tag(s);
        let body = json!({
            "meta": meta,
            "decomposition": {
                "labels": dec.fields.iter().map(|f| f.label.clone()).collect::<Vec<_>>(),
                "d": dec.d,
                "spectra": dec.spectra,
                "eps_rank": dec.eps_rank,
                "identity_deviation": identity_deviation,
                "eps_tails": dec.fields.iter().map(|f| f.eps_tail).collect::<Vec<_>>(),
            }
        });
        let jpath = cfg.output_dir.join(format!("decomposition_s{tag}.json"));
        write_json(&jpath, &body)?;
        write_dimension_csv(&grid, &dec, &cfg.output_dir.join(format!("dimension_s{tag}.csv")))?;
        for (i, f) in dec.fields.iter().enumerate() {
            save_field(f, cfg.output_dir.join(format!("qo{i}_s{tag}.sisf")))?;
        }
        let dmax = dec.d.iter().copied().max().unwrap_or(0);
        let _ = writeln!(
            log,
            "decompose s={s}: max dimension {dmax}, identity deviation {identity_deviation:.3e} -> {}",
            jpath.display()
        );
    }
    Ok(())
}

/// Builds the canonical dual of every configured system and writes the
/// duality report plus each dual generator as a field file.
pub fn run_dualize(cfg: &RunConfig, log: &mut String) -> Result<(), CliError> {
    std::fs::create_dir_all(&cfg.output_dir)?;
    let grid = TorusGrid::with_offset(cfg.n, cfg.m, cfg.offset);
    let win = FreqWindow::new(cfg.n, cfg.k);
    for &s in &cfg.s_list {
        let fields = fields_at(cfg, s, &grid, &win)?;
        let g = gramian_field(&fields)?;
        let dual = dual_generators(&fields, &g, cfg.eps_rank)?;
        let meta = meta_for(cfg, Some(s), Some(g.eps_tails.clone()));
        let tag = s_tag(s);
        let body = json!({
            "meta": meta,
            "duality": {
                "bound_quadruple": dual.bound_quadruple,
                "recon_residuals": dual.recon_residuals,
                "primal": dual.primal_report,
                "dual": dual.report,
            }
        });
        let jpath = cfg.output_dir.join(format!("duality_s{tag}.json"));
        write_json(&jpath, &body)?;
        for (i, f) in dual.fields.iter().enumerate() {
            save_field(f, cfg.output_dir.join(format!("dual{i}_s{tag}.sisf")))?;
        }
        let [a, b, ad, bd] = dual.bound_quadruple;
        let _ = writeln!(
            log,
            "dualize s={s}: primal [{a:.6e}, {b:.6e}], dual [{ad:.6e}, {bd:.6e}] -> {}",
            jpath.display()
        );
    }
    Ok(())
}

/// Runs the invariant suite, writes `verify.json`, and fails with the names
/// of any failing invariants.
pub fn run_verify_verb(cfg: &RunConfig, log: &mut String) -> Result<(), CliError> {
    let (report, failing) = crate::verify::run_verify(cfg)?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    let meta = meta_for(cfg, None, None);
    let jpath = cfg.output_dir.join("verify.json");
    write_json(&jpath, &json!({ "meta": meta, "verify": report }))?;
    for inv in &report.invariants {
        let _ = writeln!(
            log,
            "{} {}: deviation={:.3e} tolerance={:.3e} margin={:.3e}",
            if inv.pass { "PASS" } else { "FAIL" },
            inv.name,
            inv.deviation,
            inv.tolerance,
            inv.margin
        );
    }
    let passed = report.invariants.iter().filter(|i| i.pass).count();
    let _ = writeln!(
        log,
        "verify: {passed}/{} invariants pass in {} ms -> {}",
        report.invariants.len(),
        report.wall_ms,
        jpath.display()
    );
    if failing.is_empty() {
        Ok(())
    } else {
        Err(CliError::VerifyFailed(failing))
    }
}

fn listed(dir: &Path, keep: impl Fn(&str) -> bool) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    let entries = std::fs::read_dir(dir).map_err(|e| {
        CliError::Core(sislab_core::Error::InvalidArgument(format!(
            "cannot list output directory {}: {e}",
            dir.display()
        )))
    })?;
    for entry in entries {
        let entry = entry?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        if keep(name) {
            out.push(entry.path());
        }
    }
    out.sort();
    Ok(out)
}

fn rewrite_csv(path: &Path) -> Result<(), CliError> {
    let text = std::fs::read_to_string(path)?;
    let mut out = String::with_capacity(text.len());
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            out.push_str(line);
        } else {
            let mut first = true;
            for cell in line.split(',') {
                if !first {
                    out.push(',');
                }
                first = false;
                let float_like = cell.contains(['e', 'E', '.']);
                match cell.parse::<f64>() {
                    Ok(v) if float_like && v.is_finite() => {
                        let _ = write!(out, "{v:.16e}");
                    }
                    _ => out.push_str(cell),
                }
            }
        }
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())?;
    Ok(())
}

/// Re-emits existing reports in canonical form: JSON files are validated
/// against the shipped schema and rewritten with stable key order and fixed
/// float formatting; CSV files are reparsed and reformatted the same way.
/// Running export twice yields byte-identical files.
pub fn run_export(cfg: &RunConfig, format: ExportFormat, log: &mut String) -> Result<(), CliError> {
    match format {
        ExportFormat::Json => {
            let files = listed(&cfg.output_dir, |name| {
                name == "verify.json"
                    || (name.ends_with(".json")
                        && (name.starts_with("analysis_")
                            || name.starts_with("decomposition_")
                            || name.starts_with("duality_")))
            })?;
            if files.is_empty() {
                return Err(CliError::Core(sislab_core::Error::InvalidArgument(format!(
                    "no JSON reports in {}; run analyze/decompose/dualize/verify first",
                    cfg.output_dir.display()
                ))));
            }
            for path in files {
                let text = std::fs::read_to_string(&path)?;
                let value: serde_json::Value = serde_json::from_str(&text)?;
                schema::validate(report_schema(), &value).map_err(|msg| {
                    CliError::Core(sislab_core::Error::InvalidArgument(format!(
                        "{}: schema violation: {msg}",
                        path.display()
                    )))
                })?;
                write_json(&path, &value)?;
                let _ = writeln!(log, "exported {}", path.display());
            }
        }
        ExportFormat::Csv => {
            let files = listed(&cfg.output_dir, |name| {
                name.ends_with(".csv")
                    && (name.starts_with("eigen_") || name.starts_with("dimension_"))
            })?;
            if files.is_empty() {
                return Err(CliError::Core(sislab_core::Error::InvalidArgument(format!(
                    "no CSV curves in {}; run analyze or decompose first",
                    cfg.output_dir.display()
                ))));
            }
            for path in files {
                rewrite_csv(&path)?;
                let _ = writeln!(log, "exported {}", path.display());
            }
        }
    }
    Ok(())
}
