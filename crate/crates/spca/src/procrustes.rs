//! Trace optimization over matrices with orthonormal columns.
//!
//! For a fixed `m x q` matrix `Y` (`m >= q`), the maximizer of `tr(Y^T X)`
//! over `X` with `X^T X = I` is `X = L R^T`, where `Y = L diag(s) R^T` is a
//! thin SVD; the optimal value is the nuclear norm `sum(s)`. Minimization is
//! the same problem on `-Y`. Both directions inherit determinism from the
//! canonical SVD in [`crate::matrix::thin_svd`].

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::matrix::thin_svd;

/// An `m x q` matrix with orthonormal columns (`max |U^T U - I| <= 1e-8`).
#[derive(Debug, Clone, PartialEq)]
pub struct StiefelFrame(DMatrix<f64>);

impl StiefelFrame {
    pub fn new(u: DMatrix<f64>) -> Result<Self> {
        let (m, q) = u.shape();
        if q == 0 || m < q {
            return Err(Error::dim("stiefel frame", "nrows >= ncols >= 1", format!("{m}x{q}")));
        }
        let gram = u.transpose() * &u;
        let dev = (gram - DMatrix::identity(q, q)).amax();
        if !dev.is_finite() || dev > 1e-8 {
            return Err(Error::Degenerate(format!(
                "columns are not orthonormal: max |U^T U - I| = {dev:.3e}"
            )));
        }
        Ok(StiefelFrame(u))
    }

    /// Uniformly random frame: Gaussian entries orthonormalized column by
    /// column with a second re-orthogonalization pass for stability.
    pub fn random<R: Rng>(m: usize, q: usize, rng: &mut R) -> Self {
        assert!(q >= 1 && m >= q, "need m >= q >= 1");
        let mut u = DMatrix::from_fn(m, q, |_, _| rng.sample::<f64, _>(StandardNormal));
        orthonormalize_columns(&mut u, 0).expect("Gaussian columns are full rank");
        StiefelFrame(u)
    }

    pub fn m(&self) -> usize {
        self.0.nrows()
    }

    pub fn q(&self) -> usize {
        self.0.ncols()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }
}

/// `argmax tr(Y^T X)` over frames `X`.
pub fn stiefel_trace_max(y: &DMatrix<f64>) -> Result<StiefelFrame> {
    let f = thin_svd(y)?;
    StiefelFrame::new(f.left * f.right.transpose())
}

/// `argmin tr(Y^T X)` over frames `X`; the maximizer for `-Y`.
pub fn stiefel_trace_min(y: &DMatrix<f64>) -> Result<StiefelFrame> {
    stiefel_trace_max(&(-y))
}

/// Orthonormalizes columns `start..` in place against all earlier columns
/// and each other (modified Gram-Schmidt, two passes). Fails if a column is
/// numerically in the span of its predecessors.
pub(crate) fn orthonormalize_columns(u: &mut DMatrix<f64>, start: usize) -> Result<()> {
    let (m, q) = u.shape();
    debug_assert!(q <= m);
    for j in start..q {
        for _pass in 0..2 {
            for k in 0..j {
                let proj = u.column(k).dot(&u.column(j));
                let prev = u.column(k).into_owned();
                u.column_mut(j).axpy(-proj, &prev, 1.0);
            }
        }
        let norm = u.column(j).norm();
        if norm < 1e-10 * (m as f64).sqrt() {
            return Err(Error::Degenerate(format!(
                "column {j} is linearly dependent on earlier columns"
            )));
        }
        u.column_mut(j).scale_mut(1.0 / norm);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn recovers_a_scaled_rotation() {
        let theta: f64 = 0.7;
        let r = DMatrix::from_row_slice(2, 2, &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()]);
        let y = &r * 3.5;
        let x = stiefel_trace_max(&y).unwrap();
        assert!((x.as_matrix() - &r).amax() < 1e-12);
    }

    #[test]
    fn maximizer_dominates_random_frames_and_equals_nuclear_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let m = rng.random_range(3..10);
            let q = rng.random_range(1..=m.min(4));
            let y = DMatrix::from_fn(m, q, |_, _| rng.random_range(-2.0..2.0));
            let best = stiefel_trace_max(&y).unwrap();
            let val = y.dot(best.as_matrix());
            let nuclear: f64 = crate::matrix::thin_svd(&y).unwrap().singular.iter().sum();
            assert!((val - nuclear).abs() <= 1e-10 * nuclear.max(1.0));
            for _ in 0..100 {
                let probe = StiefelFrame::random(m, q, &mut rng);
                assert!(y.dot(probe.as_matrix()) <= val + 1e-9);
            }
            let worst = stiefel_trace_min(&y).unwrap();
            let low = y.dot(worst.as_matrix());
            assert!((low + nuclear).abs() <= 1e-10 * nuclear.max(1.0));
            for _ in 0..100 {
                let probe = StiefelFrame::random(m, q, &mut rng);
                assert!(y.dot(probe.as_matrix()) >= low - 1e-9);
            }
        }
    }

    #[test]
    fn rank_deficient_input_is_deterministic_and_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let col = DMatrix::from_fn(6, 1, |_, _| rng.random_range(-1.0..1.0));
        let y = &col * DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 3.0]); // rank 1, q = 3
        let a = stiefel_trace_max(&y).unwrap();
        let b = stiefel_trace_max(&y).unwrap();
        assert_eq!(a, b);
        let gram = a.as_matrix().transpose() * a.as_matrix();
        assert!((gram - DMatrix::identity(3, 3)).amax() <= 1e-10);
    }

    #[test]
    fn frame_validation_rejects_non_orthonormal_columns() {
        let skew = DMatrix::from_row_slice(3, 2, &[1.0, 0.4, 0.0, 1.0, 0.0, 0.0]);
        assert!(StiefelFrame::new(skew).is_err());
        let wide = DMatrix::identity(2, 2).insert_column(2, 0.0);
        assert!(StiefelFrame::new(wide).is_err());
    }

    #[test]
    fn random_frames_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..30 {
            let m = rng.random_range(2..12);
            let q = rng.random_range(1..=m);
            let f = StiefelFrame::random(m, q, &mut rng);
            let gram = f.as_matrix().transpose() * f.as_matrix();
            assert!((gram - DMatrix::identity(q, q)).amax() <= 1e-12);
        }
    }
}
