//! Evaluation metrics for sparse loadings and covariance estimates.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matrix::{leading_eigenvectors, DataMatrix, SymmetricMatrix};

/// Angles in degrees between all column pairs of `u`, folded into `[0, 90]`
/// (a direction and its negation count as the same). Diagonal is zero.
/// Errors on a zero column.
pub fn pairwise_angles(u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let q = u.ncols();
    let mut norms = vec![0.0; q];
    for (j, n) in norms.iter_mut().enumerate() {
        *n = u.column(j).norm();
        if *n == 0.0 {
            return Err(Error::Degenerate(format!("column {j} is identically zero")));
        }
    }
    let mut out = DMatrix::zeros(q, q);
    for i in 0..q {
        for j in (i + 1)..q {
            let cos = u.column(i).dot(&u.column(j)) / (norms[i] * norms[j]);
            let deg = cos.clamp(-1.0, 1.0).acos().to_degrees();
            let folded = deg.min(180.0 - deg);
            out[(i, j)] = folded;
            out[(j, i)] = folded;
        }
    }
    Ok(out)
}

/// Smallest angle between distinct columns, degrees. Needs `q >= 2`.
pub fn min_offdiag_angle(u: &DMatrix<f64>) -> Result<f64> {
    let q = u.ncols();
    if q < 2 {
        return Err(Error::invalid("u", "needs at least two columns to compare"));
    }
    let angles = pairwise_angles(u)?;
    let mut best = f64::INFINITY;
    for i in 0..q {
        for j in (i + 1)..q {
            best = best.min(angles[(i, j)]);
        }
    }
    Ok(best)
}

/// Whether every column of `targets` is matched by a distinct column of `u`
/// with normalized absolute inner product above 0.99. Matching is greedy on
/// the largest remaining overlap.
pub fn exact_recovery(u: &DMatrix<f64>, targets: &DMatrix<f64>) -> Result<bool> {
    if u.nrows() != targets.nrows() {
        return Err(Error::dim("recovery", targets.nrows(), u.nrows()));
    }
    let k = targets.ncols();
    let q = u.ncols();
    if k == 0 || q < k {
        return Err(Error::invalid(
            "targets",
            format!("needs 1 <= #targets <= #columns, got {k} targets and {q} columns"),
        ));
    }
    // Normalized |overlap| table; zero columns simply never match.
    let mut table = DMatrix::zeros(k, q);
    for t in 0..k {
        let tn = targets.column(t).norm();
        if tn == 0.0 {
            return Err(Error::Degenerate(format!("target column {t} is identically zero")));
        }
        for c in 0..q {
            let cn = u.column(c).norm();
            if cn > 0.0 {
                table[(t, c)] = targets.column(t).dot(&u.column(c)).abs() / (tn * cn);
            }
        }
    }
    let mut target_done = vec![false; k];
    let mut col_done = vec![false; q];
    for _ in 0..k {
        let mut best = (0usize, 0usize, -1.0f64);
        for t in 0..k {
            if target_done[t] {
                continue;
            }
            for c in 0..q {
                if !col_done[c] && table[(t, c)] > best.2 {
                    best = (t, c, table[(t, c)]);
                }
            }
        }
        if best.2 <= 0.99 {
            return Ok(false);
        }
        target_done[best.0] = true;
        col_done[best.1] = true;
    }
    Ok(true)
}

/// Cumulative proportion of explained variance: squared Frobenius norm of
/// the projection of the rows of `a` onto the column space of `u`, over the
/// total. Errors if the columns of `u` are linearly dependent.
pub fn cpev(a: &DataMatrix, u: &DMatrix<f64>) -> Result<f64> {
    if u.nrows() != a.m() {
        return Err(Error::dim("cpev", a.m(), u.nrows()));
    }
    if u.ncols() == 0 {
        return Err(Error::invalid("u", "needs at least one column"));
    }
    let gram = u.transpose() * u;
    let chol = gram.cholesky().ok_or_else(|| {
        Error::Degenerate("columns are linearly dependent; projection is undefined".into())
    })?;
    let p = a.as_matrix() * u;
    // ||A U (U^T U)^{-1} U^T||_F^2 = tr(P G^{-1} P^T) with P = A U.
    let solved = chol.solve(&p.transpose());
    let projected = p.dot(&solved.transpose());
    let total = a.as_matrix().norm_squared();
    if total == 0.0 {
        return Err(Error::Degenerate("data matrix is identically zero".into()));
    }
    Ok(projected / total)
}

/// [`cpev`] computed from a gram or covariance matrix instead of the data:
/// `tr((U^T U)^{-1} U^T S U) / tr(S)`. Agrees with the data form whenever
/// `s` is `A^T A` (any positive multiple gives the same ratio).
pub fn cpev_from_cov(s: &SymmetricMatrix, u: &DMatrix<f64>) -> Result<f64> {
    if u.nrows() != s.m() {
        return Err(Error::dim("cpev", s.m(), u.nrows()));
    }
    if u.ncols() == 0 {
        return Err(Error::invalid("u", "needs at least one column"));
    }
    let gram = u.transpose() * u;
    let chol = gram.cholesky().ok_or_else(|| {
        Error::Degenerate("columns are linearly dependent; projection is undefined".into())
    })?;
    let usu = u.transpose() * s.as_matrix() * u;
    let projected = chol.solve(&usu).trace();
    let total = s.as_matrix().trace();
    if total <= 0.0 {
        return Err(Error::Degenerate("covariance has nonpositive trace".into()));
    }
    Ok(projected / total)
}

/// How the overlap between correlated loading columns is discounted in
/// [`adjusted_variance`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdjustedVariance {
    /// `tr(R^2)`, the sum of squared diagonal entries of the triangular
    /// factor of `A U`. The reported form.
    TraceSquared,
    /// `||R||_F^2 = ||A U||_F^2`, which ignores column correlation.
    FrobeniusSquared,
}

/// Variance explained by the columns of `u` after removing the part already
/// captured by earlier columns, computed from the QR factor `R` of `A U`.
/// Needs at least as many rows as loading columns.
pub fn adjusted_variance(a: &DataMatrix, u: &DMatrix<f64>, kind: AdjustedVariance) -> Result<f64> {
    if u.nrows() != a.m() {
        return Err(Error::dim("adjusted variance", a.m(), u.nrows()));
    }
    if a.n() < u.ncols() {
        return Err(Error::invalid(
            "u",
            format!("needs at least {} samples for {} columns", u.ncols(), u.ncols()),
        ));
    }
    let au = a.as_matrix() * u;
    let r = au.qr().r();
    Ok(match kind {
        AdjustedVariance::TraceSquared => (0..r.nrows()).map(|i| r[(i, i)] * r[(i, i)]).sum(),
        AdjustedVariance::FrobeniusSquared => r.norm_squared(),
    })
}

/// Running maximum, making a variance curve nondecreasing in cardinality.
pub fn cpev_monotone(values: &[f64]) -> Vec<f64> {
    let mut best = f64::NEG_INFINITY;
    values
        .iter()
        .map(|&v| {
            best = best.max(v);
            best
        })
        .collect()
}

/// Relative accuracy gain of `sigma_hat` over the reference estimate
/// `s_ref`, against the true covariance: `1 - ||hat - true||_F^2 /
/// ||ref - true||_F^2`. Positive means the estimate improves on the
/// reference; errors if the reference is already exact.
pub fn rel_mse(
    sigma_hat: &SymmetricMatrix,
    s_ref: &SymmetricMatrix,
    sigma_true: &SymmetricMatrix,
) -> Result<f64> {
    let m = sigma_true.m();
    if sigma_hat.m() != m || s_ref.m() != m {
        return Err(Error::dim("rel mse", m, sigma_hat.m().max(s_ref.m())));
    }
    let denom = (s_ref.as_matrix() - sigma_true.as_matrix()).norm_squared();
    if denom == 0.0 {
        return Err(Error::Degenerate("reference estimate equals the truth; ratio undefined".into()));
    }
    let num = (sigma_hat.as_matrix() - sigma_true.as_matrix()).norm_squared();
    Ok(1.0 - num / denom)
}

/// Keeps the `cardinality` largest-magnitude entries of each column and
/// zeroes the rest, without renormalizing. Ties keep the lower index.
pub fn threshold_to_cardinality(u: &DMatrix<f64>, cardinality: usize) -> Result<DMatrix<f64>> {
    let m = u.nrows();
    if cardinality == 0 || cardinality > m {
        return Err(Error::invalid(
            "cardinality",
            format!("must satisfy 1 <= c <= {m}, got {cardinality}"),
        ));
    }
    let mut out = u.clone();
    let mut order: Vec<usize> = Vec::with_capacity(m);
    for j in 0..u.ncols() {
        order.clear();
        order.extend(0..m);
        order.sort_by(|&a, &b| {
            u[(b, j)]
                .abs()
                .total_cmp(&u[(a, j)].abs())
                .then(a.cmp(&b))
        });
        for &i in &order[cardinality..] {
            out[(i, j)] = 0.0;
        }
    }
    Ok(out)
}

/// Baseline sparse loadings: the `q` leading eigenvectors of `s`, each
/// truncated to its `cardinality` largest-magnitude entries.
pub fn simple_thresholding(
    s: &SymmetricMatrix,
    q: usize,
    cardinality: usize,
) -> Result<DMatrix<f64>> {
    let u = leading_eigenvectors(s, q)?;
    threshold_to_cardinality(&u, cardinality)
}

/// Number of nonzero entries in each column.
pub fn column_cardinality(u: &DMatrix<f64>) -> Vec<usize> {
    (0..u.ncols())
        .map(|j| u.column(j).iter().filter(|v| **v != 0.0).count())
        .collect()
}
