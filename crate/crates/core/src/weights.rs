//! Sobolev weights and truncated weighted sequences.
//!
//! The weight `mu_s(x) = (1 + |x|^2)^(s/2)` turns plain `l^2` into the
//! weighted space `l^2_s` with inner product
//! `<c, d> = sum_k c_k conj(d_k) mu_s(k)^2`. Internally every sequence is
//! stored in *rescaled* coordinates `c_k * mu_s(k)`, which makes `l^2_s`
//! isometrically a plain `l^2`: inner products are ordinary complex dot
//! products and adjoints are conjugate transposes. The unrescaled ("plain")
//! coordinates are recovered on demand and are what the persistence layer
//! writes out.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::FreqWindow;

/// The weight `mu_s` on `R^n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weight {
    /// Smoothness index.
    pub s: f64,
    /// Ambient dimension.
    pub n: usize,
}

impl Weight {
    pub fn new(s: f64, n: usize) -> Self {
        assert!(n >= 1, "dimension must be at least 1");
        assert!(s.is_finite(), "smoothness index must be finite");
        Self { s, n }
    }

    /// Evaluates `mu_s(x) = (1 + |x|^2)^(s/2)`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.n);
        let r2: f64 = x.iter().map(|v| v * v).sum();
        (1.0 + r2).powf(self.s / 2.0)
    }

    /// Same weight with negated smoothness; `mu_s * mu_{-s} = 1`.
    pub fn reciprocal(&self) -> Self {
        Self { s: -self.s, n: self.n }
    }

    pub fn compatible(&self, other: &Weight) -> bool {
        self.n == other.n && self.s == other.s
    }
}

/// A finitely supported element of `l^2_s`, truncated to a frequency window.
///
/// `rescaled[i]` holds `c_k * mu_s(k)` for the `i`-th window index `k` in
/// lexicographic order.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSeq {
    pub window: FreqWindow,
    pub weight: Weight,
    rescaled: Vec<Complex64>,
}

impl WeightedSeq {
    /// Builds a sequence from rescaled coordinates `c_k * mu_s(k)`.
    pub fn from_rescaled(window: FreqWindow, weight: Weight, rescaled: Vec<Complex64>) -> Self {
        assert_eq!(window.n, weight.n);
        assert_eq!(rescaled.len(), window.len());
        assert!(rescaled.iter().all(|z| z.re.is_finite() && z.im.is_finite()));
        Self { window, weight, rescaled }
    }

    /// Builds a sequence from plain coordinates `c_k`.
    pub fn from_plain(window: FreqWindow, weight: Weight, plain: &[Complex64]) -> Self {
        assert_eq!(plain.len(), window.len());
        let rescaled = window
            .indices()
            .zip(plain)
            .map(|(k, &c)| {
                let kf: Vec<f64> = k.iter().map(|&v| v as f64).collect();
                c * weight.eval(&kf)
            })
            .collect();
        Self::from_rescaled(window, weight, rescaled)
    }

    pub fn zeros(window: FreqWindow, weight: Weight) -> Self {
        let len = window.len();
        Self::from_rescaled(window, weight, vec![Complex64::default(); len])
    }

    /// Rescaled coordinates (the internal representation).
    pub fn rescaled(&self) -> &[Complex64] {
        &self.rescaled
    }

    /// Plain coordinates `c_k = rescaled_k / mu_s(k)`.
    pub fn plain(&self) -> Vec<Complex64> {
        self.window
            .indices()
            .zip(&self.rescaled)
            .map(|(k, &c)| {
                let kf: Vec<f64> = k.iter().map(|&v| v as f64).collect();
                c / self.weight.eval(&kf)
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.rescaled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rescaled.is_empty()
    }

    fn check_compatible(&self, other: &WeightedSeq) -> Result<()> {
        if self.window != other.window {
            return Err(Error::IncompatibleSpace(format!(
                "frequency windows differ: K={} vs K={}",
                self.window.k, other.window.k
            )));
        }
        if !self.weight.compatible(&other.weight) {
            return Err(Error::IncompatibleSpace(format!(
                "weights differ: s={} vs s={}",
                self.weight.s, other.weight.s
            )));
        }
        Ok(())
    }

    /// The `l^2_s` inner product `sum_k a_k conj(b_k) mu_s(k)^2`, linear in
    /// `self`.
    pub fn inner(&self, other: &WeightedSeq) -> Result<Complex64> {
        self.check_compatible(other)?;
        Ok(self
            .rescaled
            .iter()
            .zip(&other.rescaled)
            .map(|(a, b)| a * b.conj())
            .sum())
    }

    pub fn norm_sqr(&self) -> f64 {
        self.rescaled.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self {
            window: self.window.clone(),
            weight: self.weight,
            rescaled: self.rescaled.iter().map(|z| z * c).collect(),
        }
    }

    pub fn sub(&self, other: &WeightedSeq) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(Self {
            window: self.window.clone(),
            weight: self.weight,
            rescaled: self
                .rescaled
                .iter()
                .zip(&other.rescaled)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }
}
