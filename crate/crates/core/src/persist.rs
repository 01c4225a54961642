//! On-disk formats: canonical JSON, fiber-field and operator binaries,
//! eigenvalue curves, and oracle baselines.
//!
//! JSON output is canonical: compact, struct-ordered keys, and every float
//! printed as `{:.16e}` (17 significant digits), so re-exporting a report
//! is byte-identical and diffs stay meaningful. Binary formats are
//! little-endian with explicit magic and version. All writes go through a
//! temp-file rename, so readers never observe a partial file.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fiber::FiberField;
use crate::gramian::EigenCurves;
use crate::grid::{FreqWindow, TorusGrid};
use crate::shift_ops::RangeOperatorField;
use crate::weights::{Weight, WeightedSeq};

struct CanonicalFormatter;

impl serde_json::ser::Formatter for CanonicalFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        write!(writer, "{value:.8e}")
    }
}

/// Serializes to canonical JSON (compact, fixed float formatting).
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, CanonicalFormatter);
    value.serialize(&mut ser)?;
    let mut s = String::from_utf8(out)
        .map_err(|e| Error::InvalidArgument(format!("non-UTF8 JSON output: {e}")))?;
    s.push('\n');
    Ok(s)
}

/// Writes bytes through a uniquely named temp file in the target directory,
/// then renames over the destination.
pub fn atomic_write(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let stem = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(
        ".{stem}.{}.{}.tmp",
        std::process::id(),
        COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    let result = (|| -> Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)?;
        Ok(())
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

/// Canonical JSON straight to disk.
pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    atomic_write(path, to_canonical_json(value)?.as_bytes())
}

const FIELD_MAGIC: &[u8; 4] = b"SISF";
const OPERATOR_MAGIC: &[u8; 4] = b"SIRO";
const FORMAT_VERSION: u32 = 1;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        if self.pos + len > self.bytes.len() {
            return Err(Error::Parse {
                line: 0,
                msg: format!(
                    "unexpected end of file at byte {} (wanted {} more)",
                    self.pos, len
                ),
            });
        }
        let out = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("length checked")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("length checked")))
    }

    fn complex(&mut self) -> Result<Complex64> {
        Ok(Complex64::new(self.f64()?, self.f64()?))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        String::from_utf8(self.take(len)?.to_vec())
            .map_err(|e| Error::Parse { line: 0, msg: format!("invalid UTF-8 string: {e}") })
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Parse {
                line: 0,
                msg: format!("{} trailing bytes after payload", self.bytes.len() - self.pos),
            });
        }
        Ok(())
    }
}

fn push_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn push_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn push_complex(out: &mut Vec<u8>, v: Complex64) {
    push_f64(out, v.re);
    push_f64(out, v.im);
}

fn push_string(out: &mut Vec<u8>, s: &str) {
    push_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

fn check_magic(r: &mut Reader, magic: &[u8; 4]) -> Result<()> {
    let got = r.take(4)?;
    if got != magic {
        return Err(Error::Parse {
            line: 0,
            msg: format!("bad magic {:?}, expected {:?}", got, magic),
        });
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Parse {
            line: 0,
            msg: format!("unsupported format version {version}"),
        });
    }
    Ok(())
}

/// Saves a fiber field: header, then plain fiber coordinates `c_k` in grid
/// order, window-lexicographic within each fiber.
pub fn save_field(field: &FiberField, path: impl AsRef<Path>) -> Result<()> {
    let mut out = Vec::with_capacity(64 + field.grid.len() * field.window.len() * 16);
    out.extend_from_slice(FIELD_MAGIC);
    push_u32(&mut out, FORMAT_VERSION);
    push_u32(&mut out, field.grid.n as u32);
    push_u32(&mut out, field.grid.m as u32);
    push_u32(&mut out, field.window.k as u32);
    push_f64(&mut out, field.grid.offset);
    push_f64(&mut out, field.weight.s);
    push_f64(&mut out, field.eps_tail);
    push_string(&mut out, &field.label);
    for fiber in field.fibers() {
        for v in fiber.plain() {
            push_complex(&mut out, v);
        }
    }
    atomic_write(path, &out)
}

/// Loads a fiber field saved by [`save_field`].
pub fn load_field(path: impl AsRef<Path>) -> Result<FiberField> {
    let bytes = fs::read(path)?;
    let mut r = Reader { bytes: &bytes, pos: 0 };
    check_magic(&mut r, FIELD_MAGIC)?;
    let n = r.u32()? as usize;
    let m = r.u32()? as usize;
    let k = r.u32()? as usize;
    let offset = r.f64()?;
    let s = r.f64()?;
    let eps_tail = r.f64()?;
    let label = r.string()?;
    let grid = TorusGrid::with_offset(n, m, offset);
    let window = FreqWindow::new(n, k);
    let weight = Weight::new(s, n);
    let win_len = window.len();
    let mut fibers = Vec::with_capacity(grid.len());
    for _ in 0..grid.len() {
        let mut plain = Vec::with_capacity(win_len);
        for _ in 0..win_len {
            plain.push(r.complex()?);
        }
        fibers.push(WeightedSeq::from_plain(window.clone(), weight, &plain));
    }
    r.finish()?;
    Ok(FiberField::new(grid, window, weight, label, eps_tail, fibers))
}

/// Saves a range-operator field: header, `d(t)` mask, then per grid point
/// the basis (window × dmax, row-major) and matrix (dmax × dmax, row-major)
/// in rescaled coordinates. Values restore bit-exactly.
pub fn save_operator(op: &RangeOperatorField, path: impl AsRef<Path>) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(OPERATOR_MAGIC);
    push_u32(&mut out, FORMAT_VERSION);
    push_u32(&mut out, op.grid.n as u32);
    push_u32(&mut out, op.grid.m as u32);
    push_u32(&mut out, op.window.k as u32);
    push_f64(&mut out, op.grid.offset);
    push_f64(&mut out, op.weight.s);
    push_u32(&mut out, op.dmax as u32);
    for &d in &op.dims {
        push_u32(&mut out, d as u32);
    }
    let win_len = op.window.len();
    for j in 0..op.grid.len() {
        let b = op.basis(j);
        for row in 0..win_len {
            for col in 0..op.dmax {
                push_complex(&mut out, b[(row, col)]);
            }
        }
        let m = op.matrix(j);
        for row in 0..op.dmax {
            for col in 0..op.dmax {
                push_complex(&mut out, m[(row, col)]);
            }
        }
    }
    atomic_write(path, &out)
}

/// Loads a range-operator field saved by [`save_operator`].
pub fn load_operator(path: impl AsRef<Path>) -> Result<RangeOperatorField> {
    let bytes = fs::read(path)?;
    let mut r = Reader { bytes: &bytes, pos: 0 };
    check_magic(&mut r, OPERATOR_MAGIC)?;
    let n = r.u32()? as usize;
    let m = r.u32()? as usize;
    let k = r.u32()? as usize;
    let offset = r.f64()?;
    let s = r.f64()?;
    let dmax = r.u32()? as usize;
    let grid = TorusGrid::with_offset(n, m, offset);
    let window = FreqWindow::new(n, k);
    let weight = Weight::new(s, n);
    let mut dims = Vec::with_capacity(grid.len());
    for _ in 0..grid.len() {
        dims.push(r.u32()? as usize);
    }
    let win_len = window.len();
    let mut basis = Vec::with_capacity(grid.len());
    let mut mats = Vec::with_capacity(grid.len());
    for _ in 0..grid.len() {
        let mut b = DMatrix::<Complex64>::zeros(win_len, dmax);
        for row in 0..win_len {
            for col in 0..dmax {
                b[(row, col)] = r.complex()?;
            }
        }
        basis.push(b);
        let mut mat = DMatrix::<Complex64>::zeros(dmax, dmax);
        for row in 0..dmax {
            for col in 0..dmax {
                mat[(row, col)] = r.complex()?;
            }
        }
        mats.push(mat);
    }
    r.finish()?;
    RangeOperatorField::from_raw_parts(grid, window, weight, dims, dmax, basis, mats)
}

/// Writes eigenvalue curves as CSV: `t_1,…,t_n,lambda_1,…,lambda_r`, one
/// row per grid point in grid order.
pub fn write_eigen_csv(curves: &EigenCurves, path: impl AsRef<Path>) -> Result<()> {
    let n = curves.t.first().map_or(0, Vec::len);
    let r = curves.lambda.first().map_or(0, Vec::len);
    let mut out = String::new();
    let mut header: Vec<String> = (1..=n).map(|i| format!("t_{i}")).collect();
    header.extend((1..=r).map(|i| format!("lambda_{i}")));
    out.push_str(&header.join(","));
    out.push('\n');
    for (t, lam) in curves.t.iter().zip(&curves.lambda) {
        let row: Vec<String> =
            t.iter().chain(lam).map(|v| format!("{v:.16e}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())
}

/// One oracle measurement, as stored in regression baselines.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleRow {
    pub f_label: String,
    pub g_label: String,
    /// Shift vector, `|`-separated in the file.
    pub shift: Vec<i64>,
    pub s: f64,
    pub value: Complex64,
    pub tail_bound: f64,
    pub quad_error: f64,
}

/// Writes oracle baselines: header then
/// `f,g,shift,s,re,im,tail_bound,quad_error` rows.
pub fn write_oracle_csv(rows: &[OracleRow], path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::from("f,g,shift,s,re,im,tail_bound,quad_error\n");
    for row in rows {
        let shift: Vec<String> = row.shift.iter().map(|v| v.to_string()).collect();
        out.push_str(&format!(
            "{},{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            row.f_label,
            row.g_label,
            shift.join("|"),
            row.s,
            row.value.re,
            row.value.im,
            row.tail_bound,
            row.quad_error
        ));
    }
    atomic_write(path, out.as_bytes())
}

/// Reads a baseline written by [`write_oracle_csv`].
pub fn read_oracle_csv(path: impl AsRef<Path>) -> Result<Vec<OracleRow>> {
    let text = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if idx == 0 {
            if line != "f,g,shift,s,re,im,tail_bound,quad_error" {
                return Err(Error::Parse { line: 1, msg: "bad oracle CSV header".into() });
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 8 {
            return Err(Error::Parse {
                line: idx + 1,
                msg: format!("expected 8 columns, found {}", parts.len()),
            });
        }
        let shift = parts[2]
            .split('|')
            .map(|p| {
                p.parse::<i64>().map_err(|e| Error::Parse {
                    line: idx + 1,
                    msg: format!("bad shift component '{p}': {e}"),
                })
            })
            .collect::<Result<Vec<i64>>>()?;
        let num = |col: usize| -> Result<f64> {
            parts[col].parse::<f64>().map_err(|e| Error::Parse {
                line: idx + 1,
                msg: format!("bad float '{}': {e}", parts[col]),
            })
        };
        rows.push(OracleRow {
            f_label: parts[0].to_string(),
            g_label: parts[1].to_string(),
            shift,
            s: num(3)?,
            value: Complex64::new(num(4)?, num(5)?),
            tail_bound: num(6)?,
            quad_error: num(7)?,
        });
    }
    Ok(rows)
}
