//! Smoothed cardinality penalty and its quadratic-then-linear majorization.
//!
//! The base surrogate for counting nonzeros is
//! `gp(x) = log(1 + |x|/p) / log(1 + 1/p)`, which tends to the 0/1 indicator
//! as `p -> 0` and satisfies `gp(0) = 0`, `gp(1) = 1`. Because its derivative
//! blows up at the origin, optimization uses the smoothed version `gp_eps`
//! that replaces the tip inside `|x| <= eps` with a quadratic matched in
//! value and slope at the junction.
//!
//! For a loading matrix `U` (columns weighted by `rho`), the penalty
//! `sum_j rho_j * sum_i gp_eps(u_ij)` is majorized at a point `U0` by
//! `2 * tr(H^T U) + c` on the set of matrices with orthonormal columns:
//! each entry is first bounded by a quadratic with weight `w`, and the
//! quadratic form is then linearized after subtracting the per-column
//! maximum weight, which is constant on that set. [`weights`] returns all
//! pieces of this construction.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of the column-weighted smoothed cardinality penalty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyParams {
    /// Per-column sparsity weights, all `>= 0`. Length fixes the number of
    /// penalized columns.
    pub rho: Vec<f64>,
    /// Shape of the log surrogate, in `(0, 1]`. Smaller is closer to the
    /// exact indicator.
    pub p: f64,
    /// Half-width of the quadratic smoothing region, `> 0`.
    pub eps: f64,
    /// Hard-threshold level applied to final loadings, `>= 0`.
    pub threshold: f64,
}

impl PenaltyParams {
    /// Uniform weights `rho` over `q` columns with the default shape
    /// parameters `p = 0.1`, `eps = 1e-6`, `threshold = 1e-12`.
    pub fn uniform(rho: f64, q: usize) -> Self {
        PenaltyParams {
            rho: vec![rho; q],
            p: 0.1,
            eps: 1e-6,
            threshold: 1e-12,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(Error::invalid("p", format!("must lie in (0, 1], got {}", self.p)));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::invalid("eps", format!("must be positive, got {}", self.eps)));
        }
        if !(self.threshold >= 0.0 && self.threshold.is_finite()) {
            return Err(Error::invalid(
                "threshold",
                format!("must be nonnegative, got {}", self.threshold),
            ));
        }
        if self.rho.is_empty() {
            return Err(Error::invalid("rho", "needs at least one column weight"));
        }
        for (j, &r) in self.rho.iter().enumerate() {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(Error::invalid(
                    "rho",
                    format!("column {j} weight must be nonnegative, got {r}"),
                ));
            }
        }
        Ok(())
    }

    pub fn q(&self) -> usize {
        self.rho.len()
    }

    /// `log(1 + 1/p)`, the normalizer shared by all formulas.
    fn log_norm(&self) -> f64 {
        (1.0 + 1.0 / self.p).ln()
    }
}

/// Unsmoothed surrogate `log(1 + |x|/p) / log(1 + 1/p)`.
pub fn gp(x: f64, p: f64) -> f64 {
    (1.0 + x.abs() / p).ln() / (1.0 + 1.0 / p).ln()
}

/// Smoothed surrogate: quadratic for `|x| <= eps`, shifted log beyond.
/// Continuous with continuous derivative at `|x| = eps`.
pub fn gp_eps(x: f64, p: f64, eps: f64) -> f64 {
    let a = x.abs();
    let ln = (1.0 + 1.0 / p).ln();
    if a <= eps {
        a * a / (2.0 * eps * (p + eps) * ln)
    } else {
        (((p + a) / (p + eps)).ln() + eps / (2.0 * (p + eps))) / ln
    }
}

/// Majorization pieces of the penalty at the point `u0`.
///
/// With `W = diag(w)` over the column-major entries of `U` and `W_m` the
/// per-column constant matrix of maxima, the majorizer is
/// `2 * tr(H^T U) + c` where `H` reshapes `(W - W_m) vec(u0)` and `c` makes
/// the bound exact at `u0`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightPack {
    /// Entrywise quadratic weights, same shape as `u0` (column-major).
    pub w: DMatrix<f64>,
    /// Per-column maximum of `w`.
    pub w_max: DVector<f64>,
    /// Linear term `m x q`.
    pub h: DMatrix<f64>,
    /// Constant making the majorizer equal the penalty at `u0`.
    pub c: f64,
    /// The expansion point.
    pub u0: DMatrix<f64>,
    /// Penalty value at `u0`.
    pub value0: f64,
}

/// Entrywise quadratic weight of the majorization at `u0_entry`, including
/// the column factor `rho`.
fn entry_weight(u0: f64, rho: f64, p: f64, eps: f64, ln: f64) -> f64 {
    let a = u0.abs();
    if a <= eps {
        rho / (2.0 * eps * (p + eps) * ln)
    } else {
        rho / (2.0 * ln * a * (a + p))
    }
}

/// Builds the majorization of the penalty at `u0`. `params.rho` must have
/// one weight per column of `u0`.
pub fn weights(u0: &DMatrix<f64>, params: &PenaltyParams) -> Result<WeightPack> {
    params.validate()?;
    let (m, q) = u0.shape();
    if params.rho.len() != q {
        return Err(Error::dim("penalty weights", params.rho.len(), q));
    }
    let ln = params.log_norm();
    let mut w = DMatrix::zeros(m, q);
    let mut w_max = DVector::zeros(q);
    for j in 0..q {
        let rho = params.rho[j];
        let mut col_max = 0.0f64;
        for i in 0..m {
            let wij = entry_weight(u0[(i, j)], rho, params.p, params.eps, ln);
            w[(i, j)] = wij;
            col_max = col_max.max(wij);
        }
        w_max[j] = col_max;
    }
    let mut h = DMatrix::zeros(m, q);
    for j in 0..q {
        for i in 0..m {
            h[(i, j)] = (w[(i, j)] - w_max[j]) * u0[(i, j)];
        }
    }
    let value0 = penalty_value(u0, params)?;
    let c = value0 - 2.0 * h.dot(u0);
    Ok(WeightPack {
        w,
        w_max,
        h,
        c,
        u0: u0.clone(),
        value0,
    })
}

/// `sum_j rho_j * sum_i gp_eps(u_ij)`.
pub fn penalty_value(u: &DMatrix<f64>, params: &PenaltyParams) -> Result<f64> {
    params.validate()?;
    if params.rho.len() != u.ncols() {
        return Err(Error::dim("penalty value", params.rho.len(), u.ncols()));
    }
    let mut total = 0.0;
    for j in 0..u.ncols() {
        let rho = params.rho[j];
        if rho == 0.0 {
            continue;
        }
        let mut col = 0.0;
        for i in 0..u.nrows() {
            col += gp_eps(u[(i, j)], params.p, params.eps);
        }
        total += rho * col;
    }
    Ok(total)
}

/// Value of the majorizer `2 * tr(H^T U) + c` built at some `u0`.
///
/// Evaluated in the equivalent difference form
/// `value0 + 2 * sum_ij h_ij (u_ij - u0_ij)`: entries of `H` grow like
/// `1/eps` when `u0` has entries inside the smoothing region, and the
/// difference form keeps the bound exact at `u = u0` instead of cancelling
/// two huge terms.
pub fn penalty_surrogate_value(u: &DMatrix<f64>, pack: &WeightPack) -> f64 {
    let mut acc = 0.0;
    for ((hv, uv), u0v) in pack.h.iter().zip(u.iter()).zip(pack.u0.iter()) {
        acc += hv * (uv - u0v);
    }
    pack.value0 + 2.0 * acc
}
