//! Numerical laboratory for shift-invariant subspaces of Sobolev spaces `H^s(R^n)`.
//!
//! The library works entirely on the Fourier side. A generator `phi` is known
//! through its Fourier transform; sampling that transform on the translates
//! `t + k`, `k` in `Z^n`, of a torus grid point `t` produces the *fiber* of
//! `phi` at `t`, a weighted `l^2` sequence. Frame, Riesz and Bessel properties
//! of the integer-shift system generated by a finite family are then read off
//! from the eigenvalues of the per-point Gram matrices of those fibers, spaces
//! decompose into principal parts via per-point orthonormalization, and
//! shift-preserving operators and canonical dual frames are realized as fields
//! of small matrices over the grid.
//!
//! Every fiber-side quantity can be cross-checked against the [`oracle`]
//! module, a brute-force quadrature path that shares nothing with the fiber
//! machinery except weight and Fourier-transform evaluation.

pub mod decomp;
pub mod duality;
pub mod error;
pub mod fiber;
pub mod generator;
pub mod gramian;
pub mod grid;
pub mod linalg;
pub mod oracle;
pub mod persist;
pub mod shift_ops;
pub mod weights;

pub use decomp::DecompositionResult;
pub use duality::DualSystem;
pub use error::{Error, Result};
pub use fiber::FiberField;
pub use generator::{Decay, GeneratorForm, GeneratorSpec};
pub use gramian::{AnalysisReport, GramianField};
pub use grid::{FreqWindow, TorusGrid};
pub use shift_ops::RangeOperatorField;
pub use weights::{Weight, WeightedSeq};

/// Absolute floor used by every relative rank/threshold decision.
pub const EPS_ABS: f64 = 1e-12;

/// Default relative rank tolerance.
pub const DEFAULT_EPS_RANK: f64 = 1e-8;
