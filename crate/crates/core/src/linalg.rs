//! Small dense Hermitian linear algebra used by the fiber-field modules.
//!
//! All matrices here are tiny (generator count or fiber-basis dimension), so
//! everything is built on `nalgebra`'s dense decompositions with deterministic
//! post-processing: eigenvalues are always returned in ascending order with a
//! stable permutation, making downstream reports reproducible.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::EPS_ABS;

/// Eigendecomposition of a Hermitian matrix with deterministically sorted
/// (ascending) eigenvalues.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    /// Eigenvalues in ascending order.
    pub values: Vec<f64>,
    /// Unit eigenvectors, column `j` belongs to `values[j]`.
    pub vectors: DMatrix<Complex64>,
}

impl HermitianEigen {
    /// Decomposes `m`, which must be Hermitian. The strictly lower triangle
    /// is trusted; the matrix is symmetrized first so that tiny Hermiticity
    /// violations from accumulated rounding cannot leak into the result.
    pub fn new(m: &DMatrix<Complex64>) -> Self {
        let n = m.nrows();
        assert_eq!(n, m.ncols(), "eigendecomposition needs a square matrix");
        if n == 0 {
            return Self { values: Vec::new(), vectors: DMatrix::zeros(0, 0) };
        }
        let herm = (m + m.adjoint()).scale(0.5);
        let eig = herm.symmetric_eigen();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[a]
                .partial_cmp(&eig.eigenvalues[b])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let mut vectors = DMatrix::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            vectors.set_column(dst, &eig.eigenvectors.column(src));
        }
        Self { values, vectors }
    }

    pub fn max_value(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    /// Number of eigenvalues above the relative threshold
    /// `eps_rank * max(lambda_max, EPS_ABS)`.
    pub fn rank(&self, eps_rank: f64) -> usize {
        let thr = rank_threshold(self.max_value(), eps_rank);
        self.values.iter().filter(|&&v| v > thr).count()
    }

    /// Moore-Penrose pseudo-inverse with the same rank cutoff as [`rank`].
    ///
    /// [`rank`]: Self::rank
    pub fn pseudo_inverse(&self, eps_rank: f64) -> DMatrix<Complex64> {
        let n = self.values.len();
        let thr = rank_threshold(self.max_value(), eps_rank);
        let mut out = DMatrix::zeros(n, n);
        for (j, &v) in self.values.iter().enumerate() {
            if v > thr {
                let u = self.vectors.column(j);
                out += (u * u.adjoint()).scale(1.0 / v);
            }
        }
        out
    }
}

/// Shared rank-decision threshold: relative to the largest eigenvalue with an
/// absolute floor.
pub fn rank_threshold(lambda_max: f64, eps_rank: f64) -> f64 {
    eps_rank * lambda_max.max(EPS_ABS)
}

/// Frobenius norm.
pub fn fro_norm(m: &DMatrix<Complex64>) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Spectral (operator 2-) norm via the Gram matrix of `m`.
pub fn spectral_norm(m: &DMatrix<Complex64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    let gram = m.adjoint() * m;
    HermitianEigen::new(&gram).max_value().max(0.0).sqrt()
}

/// Rank of a general (not necessarily Hermitian) matrix, counting squared
/// singular values against the shared relative threshold.
pub fn general_rank(m: &DMatrix<Complex64>, eps_rank: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let gram = m.adjoint() * m;
    HermitianEigen::new(&gram).rank(eps_rank)
}

/// Deviation from Hermitian symmetry in Frobenius norm.
pub fn hermitian_defect(m: &DMatrix<Complex64>) -> f64 {
    fro_norm(&(m - m.adjoint()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use num_complex::Complex64 as C;

    fn c(re: f64, im: f64) -> C {
        C::new(re, im)
    }

    #[test]
    fn eigen_matches_closed_form_2x2() {
        // [[2, i], [-i, 2]] has eigenvalues 1 and 3.
        let m = DMatrix::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(2.0, 0.0)]);
        let e = HermitianEigen::new(&m);
        assert_abs_diff_eq!(e.values[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.values[1], 3.0, epsilon = 1e-12);
        // Residual ||A v - lambda v|| per eigenpair.
        for j in 0..2 {
            let v = e.vectors.column(j);
            let r = &m * v - v.scale(e.values[j]);
            assert!(r.norm() < 1e-12);
        }
    }

    #[test]
    fn eigen_reconstructs_random_hermitian() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for n in [1usize, 2, 3, 5] {
            let a = DMatrix::from_fn(n, n, |_, _| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
            let h = (&a + a.adjoint()).scale(0.5);
            let e = HermitianEigen::new(&h);
            let lam = DMatrix::from_fn(n, n, |i, j| if i == j { c(e.values[i], 0.0) } else { C::default() });
            let rec = &e.vectors * lam * e.vectors.adjoint();
            assert!(fro_norm(&(&rec - &h)) < 1e-12 * (1.0 + fro_norm(&h)));
            // Unitary eigenvector matrix.
            let vv = e.vectors.adjoint() * &e.vectors;
            let eye = DMatrix::identity(n, n);
            assert!(fro_norm(&(vv - eye)) < 1e-12);
            // Ascending order.
            for w in e.values.windows(2) {
                assert!(w[0] <= w[1]);
            }
        }
    }

    #[test]
    fn pseudo_inverse_of_rank_deficient_gram() {
        // Gram matrix of a duplicated vector: [[1,1],[1,1]], eigenvalues {0,2}.
        let m = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0); 4]);
        let e = HermitianEigen::new(&m);
        assert_eq!(e.rank(1e-8), 1);
        let p = e.pseudo_inverse(1e-8);
        // pinv([[1,1],[1,1]]) = [[1,1],[1,1]]/4.
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(p[(i, j)].re, 0.25, epsilon = 1e-12);
                assert_abs_diff_eq!(p[(i, j)].im, 0.0, epsilon = 1e-12);
            }
        }
        // A * pinv(A) * A = A.
        let back = &m * &p * &m;
        assert!(fro_norm(&(back - &m)) < 1e-12);
    }

    #[test]
    fn spectral_norm_and_rank_of_projector() {
        let p = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), C::default(), C::default(), C::default()]);
        assert_abs_diff_eq!(spectral_norm(&p), 1.0, epsilon = 1e-12);
        assert_eq!(general_rank(&p, 1e-8), 1);
        assert_eq!(general_rank(&DMatrix::<C>::zeros(3, 3), 1e-8), 0);
        assert_abs_diff_eq!(hermitian_defect(&p), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn empty_matrix_is_handled() {
        let e = HermitianEigen::new(&DMatrix::<C>::zeros(0, 0));
        assert!(e.values.is_empty());
        assert_eq!(e.rank(1e-8), 0);
    }
}
