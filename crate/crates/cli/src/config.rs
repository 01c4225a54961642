//! Declarative run configuration.
//!
//! A run is described by a single JSON file; command-line flags only override
//! individual values, so the file doubles as the experiment record. The
//! effective configuration is hashed and the hash is embedded in every report.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sislab_core::generator::load_tabulated;
use sislab_core::persist::to_canonical_json;
use sislab_core::GeneratorSpec;

use crate::CliError;

/// Tolerances of the named verify invariants. All are absolute deviations
/// unless noted otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Allowance added to the tail certificates in the oracle
    /// cross-validation of Gramian entries.
    pub cross_validation_extra: f64,
    /// Relative disagreement between descending- and ascending-order sums.
    pub summation_order: f64,
    /// Relative allowance on the fiberization isometry beyond the reported
    /// quadrature error.
    pub isometry: f64,
    /// Bound deviation across the smoothness-linked family.
    pub s_transport: f64,
    /// Relative slack of quadratic forms against the frame bounds.
    pub quadratic_form: f64,
    /// Off-pattern Gramian entries of a decomposed system.
    pub orthonormality: f64,
    /// Relative residual of original fibers against the decomposed span.
    pub span_residual: f64,
    /// Pointwise defect of the dimension identity.
    pub dimension_identity: f64,
    /// Shift-commutation defect of range operators.
    pub commutation: f64,
    /// Adjoint pairing defect.
    pub adjoint: f64,
    /// Matrix-defect threshold of the spectral verdicts.
    pub spectral: f64,
    /// Deviation of dual bounds from exact reciprocals.
    pub bound_reciprocity: f64,
    /// Reconstruction residual through the dual pair, either order.
    pub reconstruction: f64,
    /// Deviation of shift pairings from the biorthogonality pattern.
    pub biorthogonality: f64,
    /// Relative distance between the dual of the dual and the primal.
    pub dual_of_dual: f64,
    /// Widening of the classified bounds in the direct frame-inequality
    /// checks.
    pub frame_margin: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            cross_validation_extra: 1e-8,
            summation_order: 1e-12,
            isometry: 1e-9,
            s_transport: 1e-10,
            quadratic_form: 1e-8,
            orthonormality: 1e-10,
            span_residual: 1e-9,
            dimension_identity: 1e-8,
            commutation: 1e-12,
            adjoint: 1e-12,
            spectral: 1e-10,
            bound_reciprocity: 1e-9,
            reconstruction: 1e-8,
            biorthogonality: 1e-6,
            dual_of_dual: 1e-10,
            frame_margin: 1e-6,
        }
    }
}

/// Settings of the brute-force verification path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    /// Midpoint nodes per unit interval; 0 selects the default `16·m`.
    pub q: usize,
    /// Brute-force sums run to `k_large_factor · k` shifts per axis.
    pub k_large_factor: usize,
    /// Cross-validate every `stride`-th grid point.
    pub stride: usize,
    /// Random draws for the fiber-side quadratic-form check.
    pub draws: usize,
    /// Random draws for the direct frame-inequality check.
    pub frame_draws: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { q: 0, k_large_factor: 10, stride: 1, draws: 50, frame_draws: 20 }
    }
}

/// One experiment: generator bank, discretization sizes, tolerances and
/// output destination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Generator descriptors; see [`parse_generator`] for the grammar.
    pub generators: Vec<String>,
    /// Smoothness indices to analyze at.
    pub s_list: Vec<f64>,
    /// Ambient dimension.
    pub n: usize,
    /// Grid resolution per axis.
    pub m: usize,
    /// Frequency-window cutoff per axis.
    pub k: usize,
    /// Grid offset in units of the cell width.
    pub offset: f64,
    /// Relative rank tolerance for eigenvalue counting.
    pub eps_rank: f64,
    pub tolerances: Tolerances,
    /// Verbs to run when the command line names none, e.g.
    /// `["analyze", "verify", "export:json"]`.
    pub commands: Vec<String>,
    pub output_dir: PathBuf,
    /// Seed of every randomized check; recorded in each report.
    pub seed: u64,
    /// Worker threads; 0 uses one per core.
    pub threads: usize,
    pub oracle: OracleConfig,
    /// Test hook: scales fiber-path Gramian entries by `1 + perturb_gramian`
    /// inside the oracle cross-validation, which must then flag the skew.
    pub perturb_gramian: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            generators: vec![
                "shannon".into(),
                "box".into(),
                "bspline(1)".into(),
                "gaussian(1)".into(),
            ],
            s_list: vec![-2.0, 0.0, 1.0, 3.0],
            n: 1,
            m: 512,
            k: 64,
            offset: 0.0,
            eps_rank: sislab_core::DEFAULT_EPS_RANK,
            tolerances: Tolerances::default(),
            commands: Vec::new(),
            output_dir: PathBuf::from("out"),
            seed: 0,
            threads: 0,
            oracle: OracleConfig::default(),
            perturb_gramian: 0.0,
        }
    }
}

/// Flag and environment overrides applied on top of the configuration file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub generators: Option<Vec<String>>,
    pub s_list: Option<Vec<f64>>,
    pub m: Option<usize>,
    pub k: Option<usize>,
    pub eps_rank: Option<f64>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    /// `--output-dir` flag; beats the environment variable.
    pub output_dir: Option<PathBuf>,
    /// `SISLAB_OUTPUT_DIR`; beats the configuration file.
    pub env_output_dir: Option<PathBuf>,
}

impl RunConfig {
    /// Reads a configuration file, or the defaults when no path is given.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Usage(format!("cannot read config {}: {e}", path.display()))
        })?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))
    }

    pub fn apply(&mut self, ov: &Overrides) {
        if let Some(v) = &ov.generators {
            self.generators = v.clone();
        }
        if let Some(v) = &ov.s_list {
            self.s_list = v.clone();
        }
        if let Some(v) = ov.m {
            self.m = v;
        }
        if let Some(v) = ov.k {
            self.k = v;
        }
        if let Some(v) = ov.eps_rank {
            self.eps_rank = v;
        }
        if let Some(v) = ov.seed {
            self.seed = v;
        }
        if let Some(v) = ov.threads {
            self.threads = v;
        }
        if let Some(v) = &ov.env_output_dir {
            self.output_dir = v.clone();
        }
        if let Some(v) = &ov.output_dir {
            self.output_dir = v.clone();
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        fn usage<T>(msg: impl Into<String>) -> Result<T, CliError> {
            Err(CliError::Usage(msg.into()))
        }
        if self.generators.is_empty() {
            return usage("config needs at least one generator");
        }
        if self.s_list.is_empty() {
            return usage("config needs at least one smoothness index");
        }
        if self.s_list.iter().any(|s| !s.is_finite()) {
            return usage("smoothness indices must be finite");
        }
        if self.n == 0 {
            return usage("dimension n must be at least 1");
        }
        if self.m < 2 {
            return usage(format!("grid resolution m must be at least 2, got {}", self.m));
        }
        if self.k < 1 {
            return usage(format!("window cutoff k must be at least 1, got {}", self.k));
        }
        if !(self.eps_rank > 0.0 && self.eps_rank < 1.0) {
            return usage(format!("eps_rank must lie in (0, 1), got {}", self.eps_rank));
        }
        if self.oracle.q != 0 && self.oracle.q % 2 != 0 {
            return usage(format!("oracle q must be even (or 0 for the default), got {}", self.oracle.q));
        }
        if self.oracle.stride == 0 {
            return usage("oracle stride must be at least 1");
        }
        if self.oracle.k_large_factor == 0 {
            return usage("oracle k_large_factor must be at least 1");
        }
        if !(self.perturb_gramian.is_finite() && self.perturb_gramian >= 0.0) {
            return usage("perturb_gramian must be a nonnegative number");
        }
        for d in &self.generators {
            parse_generator(d)?;
        }
        for c in &self.commands {
            crate::parse_command(c)?;
        }
        Ok(())
    }

    /// Oracle nodes per unit interval after resolving the 0 default.
    pub fn effective_q(&self) -> usize {
        if self.oracle.q == 0 {
            16 * self.m
        } else {
            self.oracle.q
        }
    }

    /// SHA-256 of the canonical JSON form of the effective configuration.
    pub fn hash(&self) -> String {
        let text = to_canonical_json(self).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        let mut out = String::with_capacity(64);
        for b in digest {
            out.push_str(&format!("{b:02x}"));
        }
        out
    }

    pub fn parse_generators(&self) -> Result<Vec<GeneratorSpec>, CliError> {
        self.generators.iter().map(|d| parse_generator(d)).collect()
    }
}

/// Parses a generator descriptor:
///
/// - `shannon`, `box`
/// - `bspline(m)` with integer degree `m ≥ 0`
/// - `gaussian(alpha)` with width `alpha > 0`
/// - `tabulated(path)` loading a sample table
/// - `lift(desc, sigma)` for the smoothness-shifted generator `τ_σ` applied
///   to an inner descriptor
pub fn parse_generator(desc: &str) -> Result<GeneratorSpec, CliError> {
    let d = desc.trim();
    match d {
        "shannon" => return Ok(GeneratorSpec::shannon()),
        "box" => return Ok(GeneratorSpec::unit_box()),
        _ => {}
    }
    let open = d
        .find('(')
        .ok_or_else(|| CliError::Usage(format!("unknown generator '{d}'")))?;
    let Some(args) = d[open + 1..].strip_suffix(')') else {
        return Err(CliError::Usage(format!("unbalanced parentheses in generator '{d}'")));
    };
    let name = &d[..open];
    match name {
        "bspline" => {
            let m: u32 = args
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("bspline degree must be a nonnegative integer, got '{args}'")))?;
            Ok(GeneratorSpec::bspline(m))
        }
        "gaussian" => {
            let alpha: f64 = args
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("gaussian width must be a number, got '{args}'")))?;
            if !(alpha > 0.0) {
                return Err(CliError::Usage(format!("gaussian width must be positive, got {alpha}")));
            }
            Ok(GeneratorSpec::gaussian(alpha))
        }
        "tabulated" => load_tabulated(args.trim()).map_err(CliError::Core),
        "lift" => {
            let split = args
                .rfind(',')
                .ok_or_else(|| CliError::Usage(format!("lift needs an inner generator and a shift: '{d}'")))?;
            let inner = parse_generator(&args[..split])?;
            let sigma: f64 = args[split + 1..]
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("lift shift must be a number in '{d}'")))?;
            if !sigma.is_finite() {
                return Err(CliError::Usage(format!("lift shift must be finite in '{d}'")));
            }
            Ok(GeneratorSpec::bessel_shift(inner, sigma))
        }
        _ => Err(CliError::Usage(format!("unknown generator '{d}'"))),
    }
}

/// File-name tag of a smoothness index: `-` becomes `m`, `.` becomes `p`,
/// so `-2 → m2` and `1.5 → 1p5`.
pub fn s_tag(s: f64) -> String {
    let plain = if s == s.trunc() && s.abs() < 1e15 {
        format!("{}", s as i64)
    } else {
        format!("{s}")
    };
    plain.replace('-', "m").replace('.', "p")
}
