//! Dense matrix substrate: validated data/covariance wrappers plus the
//! deterministic factorizations every solver in this crate builds on.
//!
//! All factorizations are canonicalized so that repeated calls on the same
//! input produce bit-identical output:
//!
//! - singular values and eigenvalues are sorted in descending order;
//! - each left singular vector (and eigenvector) is sign-flipped so that its
//!   largest-magnitude entry is nonnegative, taking the first index on ties,
//!   with the right factor flipped to match.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a covariance matrix is formed from an `n x m` data matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceMode {
    /// `A^T A`, the scaled Gram matrix. Standard choice for component
    /// extraction, where only eigenvector directions matter.
    ScaledGram,
    /// `(1/n) A^T A`, the second-moment matrix of rows assumed zero-mean.
    /// No centering is applied; see [`center_columns`] for real data.
    MeanNormalized,
}

/// An `n x m` data matrix (rows are observations) with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix(DMatrix<f64>);

impl DataMatrix {
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        if a.nrows() == 0 || a.ncols() == 0 {
            return Err(Error::Degenerate("empty data matrix".into()));
        }
        check_finite(&a)?;
        Ok(DataMatrix(a))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn m(&self) -> usize {
        self.0.ncols()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    /// Largest squared column norm, `max_j ||a_j||^2`. Used to normalize
    /// sparsity levels across data sets of different scale.
    pub fn max_col_norm_sq(&self) -> f64 {
        (0..self.m())
            .map(|j| self.0.column(j).norm_squared())
            .fold(0.0, f64::max)
    }
}

/// An `m x m` symmetric matrix; `s_ij == s_ji` holds exactly as stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix(DMatrix<f64>);

impl SymmetricMatrix {
    /// Wraps a square matrix, averaging `s_ij` and `s_ji` so the stored
    /// entries are exactly symmetric. Rejects matrices whose asymmetry
    /// exceeds `1e-8` times the largest entry magnitude, since that
    /// indicates a bug upstream rather than roundoff.
    pub fn new(s: DMatrix<f64>) -> Result<Self> {
        if s.nrows() != s.ncols() {
            return Err(Error::dim(
                "symmetric matrix",
                format!("{0}x{0}", s.nrows()),
                format!("{}x{}", s.nrows(), s.ncols()),
            ));
        }
        if s.nrows() == 0 {
            return Err(Error::Degenerate("empty symmetric matrix".into()));
        }
        check_finite(&s)?;
        let scale = s.amax().max(1e-300);
        let mut out = s;
        for i in 0..out.nrows() {
            for j in (i + 1)..out.ncols() {
                let d = (out[(i, j)] - out[(j, i)]).abs();
                if d > 1e-8 * scale {
                    return Err(Error::Degenerate(format!(
                        "matrix is not symmetric: |s[{i},{j}] - s[{j},{i}]| = {d:.3e}"
                    )));
                }
                let avg = 0.5 * (out[(i, j)] + out[(j, i)]);
                out[(i, j)] = avg;
                out[(j, i)] = avg;
            }
        }
        Ok(SymmetricMatrix(out))
    }

    pub fn m(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn diagonal(&self) -> DVector<f64> {
        self.0.diagonal()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }
}

/// Sample covariance of `a` under the given mode.
pub fn sample_covariance(a: &DataMatrix, mode: CovarianceMode) -> SymmetricMatrix {
    let gram = gram(a.as_matrix());
    let s = match mode {
        CovarianceMode::ScaledGram => gram,
        CovarianceMode::MeanNormalized => gram / (a.n() as f64),
    };
    SymmetricMatrix(s)
}

/// `A^T A` with the result made exactly symmetric.
fn gram(a: &DMatrix<f64>) -> DMatrix<f64> {
    let mut g = a.transpose() * a;
    for i in 0..g.nrows() {
        for j in (i + 1)..g.ncols() {
            let avg = 0.5 * (g[(i, j)] + g[(j, i)]);
            g[(i, j)] = avg;
            g[(j, i)] = avg;
        }
    }
    g
}

/// Shrinks a covariance toward the identity: `(1 - delta) * S + delta * I`.
///
/// For `delta` in `(0, 1]` the result is positive definite whenever `S` is
/// positive semidefinite, which is how rank-deficient sample covariances
/// (`n < m`) are made usable by the estimation solvers.
pub fn shrink(s: &SymmetricMatrix, delta: f64) -> Result<SymmetricMatrix> {
    if !(delta > 0.0 && delta <= 1.0) || !delta.is_finite() {
        return Err(Error::invalid(
            "delta",
            format!("shrinkage weight must lie in (0, 1], got {delta}"),
        ));
    }
    let m = s.m();
    let mut out = s.as_matrix() * (1.0 - delta);
    for i in 0..m {
        out[(i, i)] += delta;
    }
    Ok(SymmetricMatrix(out))
}

/// Subtracts the column mean from every column. Returns the centered matrix.
pub fn center_columns(a: &DataMatrix) -> DataMatrix {
    let mut out = a.as_matrix().clone();
    let n = out.nrows() as f64;
    for j in 0..out.ncols() {
        let mean = out.column(j).sum() / n;
        for i in 0..out.nrows() {
            out[(i, j)] -= mean;
        }
    }
    DataMatrix(out)
}

/// Thin SVD factors of an `m x q` matrix (`m >= q`): `Y = left * diag(singular) * right^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactors {
    /// `m x q`, orthonormal columns.
    pub left: DMatrix<f64>,
    /// Length `q`, nonnegative, descending.
    pub singular: DVector<f64>,
    /// `q x q`, orthogonal. Column `j` pairs with `left` column `j`.
    pub right: DMatrix<f64>,
}

/// Deterministic thin SVD. See the module docs for the sign convention.
///
/// The factors are produced by one-sided Jacobi orthogonalization, warm
/// started from the library SVD when it converges. The library
/// factorization alone can lose four or five digits on matrices with a
/// wide singular-value spread, and the trace optimizers built on top of
/// this function are only as exact as the factorization they use, so the
/// Jacobi pass is not optional.
pub fn thin_svd(y: &DMatrix<f64>) -> Result<SvdFactors> {
    let (m, q) = y.shape();
    if m < q {
        return Err(Error::dim("thin_svd", format!("nrows >= ncols ({q})"), m));
    }
    if q == 0 {
        return Err(Error::Degenerate("thin_svd of empty matrix".into()));
    }
    check_finite(y)?;

    // Warm start: with the library right factor the Jacobi loop below needs
    // only a sweep or two; from the identity it still converges, just slower.
    let mut right = match nalgebra::linalg::SVD::try_new(y.clone(), false, true, f64::EPSILON, 10_000)
    {
        Some(svd) => svd.v_t.expect("v_t requested").transpose(),
        None => DMatrix::identity(q, q),
    };
    let mut a = y * &right;
    // Every plane rotation applied to `a` is mirrored into `right`, so
    // `a * right^T == y` holds to roundoff throughout and the final
    // factorization is backward stable no matter how rough the warm start.
    jacobi_orthogonalize(&mut a, &mut right)?;

    // Column norms of the orthogonalized matrix are the singular values.
    // Sort descending; stable on ties so the result is reproducible.
    let norms: Vec<f64> = (0..q).map(|j| a.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..q).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).expect("finite norms"));

    let mut left = DMatrix::zeros(m, q);
    let mut right_sorted = DMatrix::zeros(q, q);
    let mut singular = DVector::zeros(q);
    for (dst, &src) in order.iter().enumerate() {
        singular[dst] = norms[src];
        left.set_column(dst, &a.column(src));
        right_sorted.set_column(dst, &right.column(src));
    }

    // Normalize the columns carrying signal; numerically null columns have
    // no usable direction of their own and are completed into an orthonormal
    // basis deterministically.
    let null_tol = singular[0] * (m.max(q) as f64) * f64::EPSILON;
    for j in 0..q {
        if singular[j] > null_tol {
            let inv = 1.0 / singular[j];
            left.column_mut(j).scale_mut(inv);
        } else {
            complete_column(&mut left, j)?;
        }
    }
    canonicalize_signs(&mut left, Some(&mut right_sorted));
    Ok(SvdFactors { left, singular, right: right_sorted })
}

/// Cyclic one-sided Jacobi orthogonalization: plane rotations on column
/// pairs of `a` until all pairs satisfy
/// `|a_i . a_j| <= 1e-14 * ||a_i|| * ||a_j||`, each rotation mirrored into
/// the square accumulator `v`.
fn jacobi_orthogonalize(a: &mut DMatrix<f64>, v: &mut DMatrix<f64>) -> Result<()> {
    let q = a.ncols();
    const TOL: f64 = 1e-14;
    const MAX_SWEEPS: usize = 60;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..q.saturating_sub(1) {
            for j in (i + 1)..q {
                let aii = a.column(i).norm_squared();
                let ajj = a.column(j).norm_squared();
                let aij = a.column(i).dot(&a.column(j));
                if aij.abs() <= TOL * (aii * ajj).sqrt() {
                    continue;
                }
                rotated = true;
                // Angle choice that zeroes the (i, j) Gram entry; the
                // smaller-magnitude root keeps rotations contractive.
                let zeta = (ajj - aii) / (2.0 * aij);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_pair(a, i, j, c, s);
                rotate_pair(v, i, j, c, s);
            }
        }
        if !rotated {
            return Ok(());
        }
    }
    Err(Error::Numerical("column orthogonalization did not converge".into()))
}

/// Applies the rotation `[c -s; s c]` to columns `i` and `j`.
fn rotate_pair(x: &mut DMatrix<f64>, i: usize, j: usize, c: f64, s: f64) {
    for r in 0..x.nrows() {
        let xi = x[(r, i)];
        let xj = x[(r, j)];
        x[(r, i)] = c * xi - s * xj;
        x[(r, j)] = s * xi + c * xj;
    }
}

/// Overwrites column `j` with a unit vector orthogonal to columns `0..j`:
/// the canonical basis vector with the largest residual after projection
/// (first index on ties), re-orthogonalized twice for stability.
fn complete_column(u: &mut DMatrix<f64>, j: usize) -> Result<()> {
    let m = u.nrows();
    let mut best_k = 0;
    let mut best_resid = f64::NEG_INFINITY;
    for k in 0..m {
        // Columns 0..j are orthonormal, so the squared residual of e_k is
        // one minus the squared norm of row k restricted to those columns.
        let mut resid = 1.0;
        for c in 0..j {
            resid -= u[(k, c)] * u[(k, c)];
        }
        if resid > best_resid {
            best_resid = resid;
            best_k = k;
        }
    }
    let mut col = DVector::zeros(m);
    col[best_k] = 1.0;
    for _ in 0..2 {
        for c in 0..j {
            let proj = u.column(c).dot(&col);
            col.axpy(-proj, &u.column(c).into_owned(), 1.0);
        }
    }
    let norm = col.norm();
    if norm < 1e-8 {
        return Err(Error::Degenerate(
            "cannot extend the left factor to an orthonormal basis".into(),
        ));
    }
    col.scale_mut(1.0 / norm);
    u.set_column(j, &col);
    Ok(())
}

impl SvdFactors {
    /// `left * diag(singular) * right^T`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut scaled = self.left.clone();
        for j in 0..scaled.ncols() {
            let s = self.singular[j];
            scaled.column_mut(j).scale_mut(s);
        }
        scaled * self.right.transpose()
    }
}

/// Eigendecomposition of a symmetric matrix, eigenvalues descending.
#[derive(Debug, Clone, PartialEq)]
pub struct SymEig {
    /// Descending.
    pub values: DVector<f64>,
    /// Column `j` is the eigenvector for `values[j]`, sign-canonicalized.
    pub vectors: DMatrix<f64>,
}

/// Deterministic symmetric eigendecomposition, eigenvalues descending.
pub fn sym_eig(s: &SymmetricMatrix) -> SymEig {
    let m = s.m();
    let eig = s.as_matrix().clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .expect("finite eigenvalues")
    });
    let mut values = DVector::zeros(m);
    let mut vectors = DMatrix::zeros(m, m);
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = eig.eigenvalues[src];
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    canonicalize_signs(&mut vectors, None);
    SymEig { values, vectors }
}

/// First `q` eigenvectors of `S` (leading eigenvalues), as an `m x q` matrix.
pub fn leading_eigenvectors(s: &SymmetricMatrix, q: usize) -> Result<DMatrix<f64>> {
    if q == 0 || q > s.m() {
        return Err(Error::invalid(
            "q",
            format!("must satisfy 1 <= q <= {}, got {q}", s.m()),
        ));
    }
    let eig = sym_eig(s);
    Ok(eig.vectors.columns(0, q).into_owned())
}

/// Flips column signs so each column's largest-magnitude entry (first index
/// on ties) is nonnegative. If `paired` is given, its matching column is
/// flipped too.
fn canonicalize_signs(cols: &mut DMatrix<f64>, mut paired: Option<&mut DMatrix<f64>>) {
    for j in 0..cols.ncols() {
        let col = cols.column(j);
        let mut idx = 0;
        let mut best = -1.0;
        for i in 0..col.nrows() {
            let a = col[i].abs();
            if a > best {
                best = a;
                idx = i;
            }
        }
        if col[idx] < 0.0 {
            cols.column_mut(j).neg_mut();
            if let Some(p) = paired.as_deref_mut() {
                p.column_mut(j).neg_mut();
            }
        }
    }
}

fn check_finite(a: &DMatrix<f64>) -> Result<()> {
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            if !a[(i, j)].is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize, m: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn scaled_gram_of_diagonal_data() {
        let a = DataMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0])).unwrap();
        let s = sample_covariance(&a, CovarianceMode::ScaledGram);
        assert_eq!(s.as_matrix(), &DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 4.0]));
        let s2 = sample_covariance(&a, CovarianceMode::MeanNormalized);
        assert_eq!(s2.as_matrix(), &DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 2.0]));
    }

    #[test]
    fn covariance_is_positive_semidefinite() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let a = DataMatrix::new(random_matrix(&mut rng, 6, 9)).unwrap();
            let s = sample_covariance(&a, CovarianceMode::MeanNormalized);
            let eig = sym_eig(&s);
            let floor = -1e-10 * (s.as_matrix().trace() / s.m() as f64).abs();
            for i in 0..s.m() {
                assert!(eig.values[i] >= floor, "eigenvalue {} below PSD floor", eig.values[i]);
            }
        }
    }

    #[test]
    fn shrink_maps_eigenvalues_affinely() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = DataMatrix::new(random_matrix(&mut rng, 8, 5)).unwrap();
        let s = sample_covariance(&a, CovarianceMode::MeanNormalized);
        let delta = 0.3;
        let sh = shrink(&s, delta).unwrap();
        let e1 = sym_eig(&s);
        let e2 = sym_eig(&sh);
        for i in 0..s.m() {
            let expected = (1.0 - delta) * e1.values[i] + delta;
            assert!((e2.values[i] - expected).abs() < 1e-10);
        }
    }

    #[test]
    fn shrink_with_unit_delta_gives_identity() {
        let s = SymmetricMatrix::new(DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0])).unwrap();
        let sh = shrink(&s, 1.0).unwrap();
        assert_eq!(sh.as_matrix(), &DMatrix::identity(2, 2));
        assert!(shrink(&s, 0.0).is_err());
        assert!(shrink(&s, 1.5).is_err());
        assert!(shrink(&s, f64::NAN).is_err());
    }

    #[test]
    fn thin_svd_of_rank_one() {
        let x = DVector::from_vec(vec![1.0, 2.0, -2.0]);
        let y = DVector::from_vec(vec![3.0, 4.0]);
        let m = &x * y.transpose();
        let f = thin_svd(&m).unwrap();
        assert!((f.singular[0] - x.norm() * y.norm()).abs() < 1e-12);
        assert!(f.singular[1].abs() < 1e-12);
        assert!((f.reconstruct() - &m).norm() <= 1e-8 * m.norm());
    }

    #[test]
    fn thin_svd_sign_convention_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..25 {
            let y = random_matrix(&mut rng, 7, 4);
            let f1 = thin_svd(&y).unwrap();
            let f2 = thin_svd(&y).unwrap();
            assert_eq!(f1, f2, "factors must be bit-identical across calls");
            for j in 0..4 {
                let col = f1.left.column(j);
                let mut idx = 0;
                let mut best = -1.0;
                for i in 0..col.nrows() {
                    if col[i].abs() > best {
                        best = col[i].abs();
                        idx = i;
                    }
                }
                assert!(col[idx] >= 0.0, "largest-magnitude entry must be nonnegative");
            }
            let gram = f1.left.transpose() * &f1.left;
            assert!((gram - DMatrix::identity(4, 4)).amax() <= 1e-10);
            for j in 0..3 {
                assert!(f1.singular[j] >= f1.singular[j + 1]);
            }
            assert!((f1.reconstruct() - &y).norm() <= 1e-8 * y.norm());
        }
    }

    #[test]
    fn thin_svd_rejects_wide_input() {
        let y = DMatrix::zeros(2, 3);
        assert!(thin_svd(&y).is_err());
    }

    #[test]
    fn sym_eig_residual_and_diag() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let a = random_matrix(&mut rng, 6, 6);
            let s = SymmetricMatrix::new(&a + a.transpose()).unwrap();
            let eig = sym_eig(&s);
            for j in 0..6 {
                let r = s.as_matrix() * eig.vectors.column(j) - eig.vectors.column(j) * eig.values[j];
                assert!(r.norm() <= 1e-8 * s.frobenius_norm());
            }
        }
        let d = SymmetricMatrix::new(DMatrix::from_diagonal(&DVector::from_vec(vec![
            1.0, 5.0, -2.0,
        ])))
        .unwrap();
        let eig = sym_eig(&d);
        assert_eq!(eig.values.as_slice(), &[5.0, 1.0, -2.0]);
        // Eigenvectors of a diagonal matrix are signed unit basis vectors;
        // the sign convention makes them exactly nonnegative.
        let expected = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(eig.vectors, expected);
    }

    #[test]
    fn symmetric_matrix_rejects_asymmetry_and_nonfinite() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert!(SymmetricMatrix::new(bad).is_err());
        let nan = DMatrix::from_row_slice(2, 2, &[1.0, f64::NAN, f64::NAN, 4.0]);
        assert!(SymmetricMatrix::new(nan).is_err());
        let rect = DMatrix::zeros(2, 3);
        assert!(SymmetricMatrix::new(rect).is_err());
    }

    #[test]
    fn center_columns_zeroes_means() {
        let a = DataMatrix::new(DMatrix::from_row_slice(3, 2, &[1.0, 10.0, 2.0, 20.0, 3.0, 30.0]))
            .unwrap();
        let c = center_columns(&a);
        for j in 0..2 {
            assert!(c.as_matrix().column(j).sum().abs() < 1e-12);
        }
    }

    #[test]
    fn leading_eigenvectors_shape_and_bounds() {
        let s = SymmetricMatrix::new(DMatrix::identity(4, 4)).unwrap();
        let u = leading_eigenvectors(&s, 2).unwrap();
        assert_eq!(u.shape(), (4, 2));
        assert!(leading_eigenvectors(&s, 0).is_err());
        assert!(leading_eigenvectors(&s, 5).is_err());
    }
}
