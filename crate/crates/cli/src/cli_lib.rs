//! Command-line front end: configuration, verb drivers, the verify suite and
//! canonical exports.
//!
//! The binary in `main.rs` is a thin shell around [`run`]; everything here is
//! callable from tests without spawning a process. Output intended for stdout
//! is accumulated in a `String` so verbs stay deterministic under any thread
//! pool.

use std::fmt;
use std::sync::OnceLock;

use serde_json::{json, Value};

pub mod config;
pub mod schema;
pub mod verbs;
pub mod verify;

pub use config::{parse_generator, s_tag, Overrides, RunConfig, Tolerances};
pub use verbs::RunMeta;
pub use verify::{InvariantResult, VerifyReport};

/// The shipped report schema; `docs/report.schema.json` embedded at build
/// time so the binary can validate exports anywhere.
pub const REPORT_SCHEMA: &str = include_str!("../../../docs/report.schema.json");

/// Parsed form of [`REPORT_SCHEMA`].
pub fn report_schema() -> &'static Value {
    static SCHEMA: OnceLock<Value> = OnceLock::new();
    SCHEMA.get_or_init(|| serde_json::from_str(REPORT_SCHEMA).expect("shipped schema parses"))
}

/// Export formats of the `export` verb.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Json,
    Csv,
}

/// One verb of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Analyze,
    Decompose,
    Dualize,
    Verify,
    Export(ExportFormat),
}

/// Parses a verb name as it appears in a configuration's `commands` list;
/// export carries its format as `export:json` or `export:csv`.
pub fn parse_command(name: &str) -> Result<Command, CliError> {
    match name.trim() {
        "analyze" => Ok(Command::Analyze),
        "decompose" => Ok(Command::Decompose),
        "dualize" => Ok(Command::Dualize),
        "verify" => Ok(Command::Verify),
        "export" | "export:json" => Ok(Command::Export(ExportFormat::Json)),
        "export:csv" => Ok(Command::Export(ExportFormat::Csv)),
        other => Err(CliError::Usage(format!("unknown command '{other}'"))),
    }
}

/// Errors of the command-line layer, each mapped to a stable exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad invocation or malformed configuration; exit 64.
    Usage(String),
    /// Named verify invariants failed; exit 1.
    VerifyFailed(Vec<String>),
    /// Error propagated from the numerical core; exit 2 for classification
    /// refusals, 3 for unsound truncations, 1 otherwise.
    Core(sislab_core::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "usage: {msg}"),
            CliError::VerifyFailed(names) => {
                write!(f, "verification failed: {}", names.join(", "))
            }
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<sislab_core::Error> for CliError {
    fn from(e: sislab_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(sislab_core::Error::Io(e))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(sislab_core::Error::Json(e))
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use sislab_core::Error::*;
        match self {
            CliError::Usage(_) => 64,
            CliError::VerifyFailed(_) => 1,
            CliError::Core(e) => match e {
                DegenerateSystem | NotAFrame(_) | NotRiesz(_) => 2,
                UnsoundTruncation { .. } => 3,
                _ => 1,
            },
        }
    }

    pub fn kind(&self) -> &'static str {
        use sislab_core::Error::*;
        match self {
            CliError::Usage(_) => "usage",
            CliError::VerifyFailed(_) => "verify_failed",
            CliError::Core(e) => match e {
                IncompatibleSpace(_) => "incompatible_space",
                UnsoundTruncation { .. } => "unsound_truncation",
                TabulatedOutOfRange { .. } => "tabulated_out_of_range",
                Parse { .. } => "parse",
                DegenerateSystem => "degenerate_system",
                NotAFrame(_) => "not_a_frame",
                NotRiesz(_) => "not_riesz",
                DomainViolation { .. } => "domain_violation",
                InvalidArgument(_) => "invalid_argument",
                Io(_) => "io",
                Json(_) => "serialization",
            },
        }
    }

    /// Machine-readable error record for stderr.
    pub fn to_json(&self) -> Value {
        let mut body = json!({
            "kind": self.kind(),
            "message": self.to_string(),
            "exit_code": self.exit_code(),
        });
        if let CliError::VerifyFailed(names) = self {
            body["failing"] = json!(names);
        }
        json!({ "error": body })
    }
}

/// Runs a local thread pool of the requested width; 0 keeps the global pool
/// with its one-thread-per-core default.
pub fn with_pool<T: Send>(
    threads: usize,
    f: impl FnOnce() -> T + Send,
) -> Result<T, CliError> {
    if threads == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot build a {threads}-thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Runs the commands against a validated configuration, appending progress
/// lines to `log`. The configuration must have had overrides applied.
pub fn run(cfg: &RunConfig, commands: &[Command], log: &mut String) -> Result<(), CliError> {
    cfg.validate()?;
    if commands.is_empty() {
        return Err(CliError::Usage(
            "no command given and the config lists none; pick one of analyze, decompose, dualize, verify, export".into(),
        ));
    }
    with_pool(cfg.threads, || -> Result<(), CliError> {
        for &cmd in commands {
            match cmd {
                Command::Analyze => verbs::run_analyze(cfg, log)?,
                Command::Decompose => verbs::run_decompose(cfg, log)?,
                Command::Dualize => verbs::run_dualize(cfg, log)?,
                Command::Verify => verbs::run_verify_verb(cfg, log)?,
                Command::Export(fmt) => verbs::run_export(cfg, fmt, log)?,
            }
        }
        Ok(())
    })?
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_match_the_contract() {
        use sislab_core::Error;
        assert_eq!(CliError::Usage("x".into()).exit_code(), 64);
        assert_eq!(CliError::VerifyFailed(vec!["a".into()]).exit_code(), 1);
        assert_eq!(CliError::Core(Error::DegenerateSystem).exit_code(), 2);
        assert_eq!(CliError::Core(Error::NotAFrame("x".into())).exit_code(), 2);
        assert_eq!(
            CliError::Core(Error::UnsoundTruncation {
                label: "g".into(),
                required: "r".into(),
                actual: "a".into()
            })
            .exit_code(),
            3
        );
        assert_eq!(CliError::Core(Error::InvalidArgument("x".into())).exit_code(), 1);
    }

    #[test]
    fn error_json_names_failing_invariants() {
        let e = CliError::VerifyFailed(vec!["alpha".into(), "beta".into()]);
        let v = e.to_json();
        assert_eq!(v["error"]["kind"], "verify_failed");
        assert_eq!(v["error"]["exit_code"], 1);
        assert_eq!(v["error"]["failing"][1], "beta");
    }

    #[test]
    fn command_names_parse() {
        assert_eq!(parse_command("analyze").unwrap(), Command::Analyze);
        assert_eq!(parse_command("export:csv").unwrap(), Command::Export(ExportFormat::Csv));
        assert_eq!(parse_command("export").unwrap(), Command::Export(ExportFormat::Json));
        assert!(parse_command("render").is_err());
    }

    #[test]
    fn shipped_schema_parses() {
        let schema = report_schema();
        assert!(schema.get("oneOf").is_some());
        assert!(schema["$defs"].get("meta").is_some());
    }
}
