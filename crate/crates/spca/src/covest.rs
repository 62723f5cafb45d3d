//! Sparse-eigenvector covariance estimation.
//!
//! Both estimators minimize the penalized Gaussian loss
//! `f(U, lambda) = -sum_i log(lambda_i) + sum_i lambda_i * u_i^T S u_i + penalty(U)`
//! over full orthogonal frames `U` (m x m) and inverse variances `lambda`
//! constrained to the ordered cone of [`crate::spectrum::OrderedSpectrum`].
//! Only the first `q` columns are penalized; the estimate of the covariance
//! itself is `U diag(1/lambda) U^T`.
//!
//! [`aoce`] alternates an exact spectrum step (isotonic solve of the
//! separable `lambda` problem) with a Procrustes frame step obtained by
//! majorizing the concave map `U -> tr((S - s I) U Lambda U^T)`, where
//! `s` slightly exceeds the largest eigenvalue of `S` so the shifted matrix
//! is negative definite. The shift never forms a Kronecker product: the
//! gradient factor is assembled as `(S - s I) U Lambda` column by column.
//!
//! [`joce`] majorizes jointly in `(U, Xi)` with `Xi = diag(1/lambda)`,
//! producing one linear bound whose spectrum part is solved by
//! [`crate::spectrum::solve_phi`] and whose frame part is again a single
//! Procrustes alignment. Both produce nonincreasing objective sequences.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matrix::{sym_eig, SymmetricMatrix};
use crate::penalty::{penalty_value, weights, PenaltyParams};
use crate::procrustes::{stiefel_trace_min, StiefelFrame};
use crate::spectrum::{solve_lambda, solve_phi, OrderedSpectrum};

/// Relative margin by which the spectral shift exceeds the top eigenvalue.
const SHIFT_MARGIN: f64 = 1e-9;

/// Inputs whose smallest eigenvalue falls below this fraction of the largest
/// are rejected as effectively rank deficient.
const MIN_EIG_RATIO: f64 = 1e-10;

/// Estimation problem configuration.
#[derive(Debug, Clone)]
pub struct CovEstConfig {
    /// Number of penalized leading eigenvectors, `1 <= q <= m`.
    pub q: usize,
    /// Penalty on the first `q` columns; `penalty.rho` must have length `q`.
    pub penalty: PenaltyParams,
    /// Relative objective-change tolerance.
    pub tol: f64,
    /// Iteration cap.
    pub max_iter: usize,
}

impl CovEstConfig {
    /// Defaults: `p = 0.1`, `eps = 1e-6`, `threshold = 1e-12`, `tol = 1e-7`,
    /// `max_iter = 500`.
    pub fn new(q: usize, rho: Vec<f64>) -> Self {
        CovEstConfig {
            q,
            penalty: PenaltyParams {
                rho,
                p: 0.1,
                eps: 1e-6,
                threshold: 1e-12,
            },
            tol: 1e-7,
            max_iter: 500,
        }
    }

    /// Same as [`CovEstConfig::new`] with one shared `rho`.
    pub fn uniform(q: usize, rho: f64) -> Self {
        Self::new(q, vec![rho; q])
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        if self.q == 0 || self.q > m {
            return Err(Error::invalid("q", format!("must satisfy 1 <= q <= {m}, got {}", self.q)));
        }
        self.penalty.validate()?;
        if self.penalty.rho.len() != self.q {
            return Err(Error::dim("rho", self.q, self.penalty.rho.len()));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::invalid("tol", format!("must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter", "must be at least 1"));
        }
        Ok(())
    }

    /// Penalty parameters extended to all `m` columns: the trailing
    /// `m - q` columns get weight zero.
    pub fn extended_penalty(&self, m: usize) -> PenaltyParams {
        let mut rho = self.penalty.rho.clone();
        rho.resize(m, 0.0);
        PenaltyParams { rho, ..self.penalty.clone() }
    }
}

/// Result of a covariance fit.
#[derive(Debug, Clone)]
pub struct CovEstimate {
    /// Estimated eigenvector frame, `m x m`.
    pub u: StiefelFrame,
    /// Estimated inverse variances, on the ordered cone.
    pub lambda: OrderedSpectrum,
    /// `U diag(1/lambda) U^T`.
    pub sigma_hat: SymmetricMatrix,
}

impl CovEstimate {
    /// Estimated variances `1/lambda_i`, ordered like the columns of `u`.
    pub fn variances(&self) -> Vec<f64> {
        self.lambda.values().iter().map(|l| 1.0 / l).collect()
    }
}

/// Objective values along a run.
#[derive(Debug, Clone)]
pub struct CovTrace {
    /// `objective[k]` is the value after `k` full iterations; entry 0 is the
    /// value at the starting point. Nonincreasing up to roundoff.
    pub objective: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Penalized Gaussian loss at `(u, lambda)`; `lambda` pairs with the columns
/// of `u` and must have full length `m`.
pub fn cov_objective(
    u: &DMatrix<f64>,
    lambda: &[f64],
    s: &SymmetricMatrix,
    cfg: &CovEstConfig,
) -> Result<f64> {
    let m = s.m();
    if u.nrows() != m || u.ncols() != m {
        return Err(Error::dim("cov objective", format!("{m}x{m}"), format!("{}x{}", u.nrows(), u.ncols())));
    }
    if lambda.len() != m {
        return Err(Error::dim("lambda", m, lambda.len()));
    }
    let pen = cfg.extended_penalty(m);
    let su = s.as_matrix() * u;
    let mut val = 0.0;
    for i in 0..m {
        if lambda[i] <= 0.0 {
            return Err(Error::invalid("lambda", format!("entry {i} must be positive, got {}", lambda[i])));
        }
        val += -lambda[i].ln() + lambda[i] * u.column(i).dot(&su.column(i));
    }
    Ok(val + penalty_value(u, &pen)?)
}

/// Shared preparation: eigendecomposition, positive definiteness check and
/// the shifted matrix `M = S - s I` with `s = (1 + margin) * lambda_max(S)`.
struct Prep {
    vectors: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    shift: f64,
}

fn prepare(s: &SymmetricMatrix) -> Result<Prep> {
    let eig = sym_eig(s);
    let m = s.m();
    let smallest = eig.values[m - 1];
    let largest = eig.values[0];
    if !(largest > 0.0) || smallest < MIN_EIG_RATIO * largest {
        return Err(Error::Degenerate(format!(
            "covariance is rank deficient or nearly so (eigenvalue range \
             [{smallest:.3e}, {largest:.3e}]); shrink it toward the identity first"
        )));
    }
    let shift = largest * (1.0 + SHIFT_MARGIN);
    Ok(Prep {
        vectors: eig.vectors,
        eigenvalues: eig.values.as_slice().to_vec(),
        shift,
    })
}

/// Shift that makes `S - shift I` strictly negative definite, with the
/// conditioning check the solvers apply to their input.
pub fn spectral_shift(s: &SymmetricMatrix) -> Result<f64> {
    prepare(s).map(|p| p.shift)
}

/// `(S - shift I) U Lambda`: gradient factor of the alternating frame step,
/// assembled column by column, never as an `m^2 x m^2` product.
pub fn alt_gradient(
    s: &SymmetricMatrix,
    shift: f64,
    u: &DMatrix<f64>,
    lambda: &[f64],
) -> DMatrix<f64> {
    let mut g = s.as_matrix() * u;
    g -= u * shift;
    for (j, &l) in lambda.iter().enumerate() {
        g.column_mut(j).scale_mut(l);
    }
    g
}

/// Linear upper bound on `U -> tr(S U Lambda U^T)` at the frame `u0`, for
/// fixed `lambda` (valid on square orthogonal frames).
#[derive(Debug, Clone)]
pub struct AltLinearization {
    /// Gradient factor `(S - s I) u0 Lambda`.
    pub g: DMatrix<f64>,
    /// `tr(S u0 Lambda u0^T)` at the expansion point.
    pub value0: f64,
    u0: DMatrix<f64>,
}

impl AltLinearization {
    pub fn at(s: &SymmetricMatrix, shift: f64, u0: &StiefelFrame, lambda: &[f64]) -> Self {
        let m = s.m();
        let g = alt_gradient(s, shift, u0.as_matrix(), lambda);
        let su0 = s.as_matrix() * u0.as_matrix();
        let value0 = (0..m).map(|i| lambda[i] * u0.as_matrix().column(i).dot(&su0.column(i))).sum();
        AltLinearization { g, value0, u0: u0.as_matrix().clone() }
    }

    /// Bound value at `u`, exact at the expansion point.
    pub fn bound(&self, u: &DMatrix<f64>) -> f64 {
        self.value0 + 2.0 * self.g.dot(&(u - &self.u0))
    }
}

/// One alternating iteration: Procrustes frame step at the current spectrum,
/// then the exact spectrum step at the new frame. `shift` must come from
/// [`spectral_shift`] of the same `s`.
pub fn aoce_step(
    s: &SymmetricMatrix,
    shift: f64,
    u: &StiefelFrame,
    lambda: &OrderedSpectrum,
    cfg: &CovEstConfig,
) -> Result<(StiefelFrame, OrderedSpectrum)> {
    let m = s.m();
    let pen = cfg.extended_penalty(m);
    let pack = weights(u.as_matrix(), &pen)?;
    let g = alt_gradient(s, shift, u.as_matrix(), lambda.values());
    let u_next = stiefel_trace_min(&(g + pack.h))?;
    let su = s.as_matrix() * u_next.as_matrix();
    let z: Vec<f64> = (0..m).map(|i| u_next.as_matrix().column(i).dot(&su.column(i))).collect();
    let lambda_next = solve_lambda(&z, cfg.q)?;
    Ok((u_next, lambda_next))
}

/// Alternating estimator: exact spectrum step and one Procrustes frame step
/// per iteration. Starts from the eigenvectors of `S`.
pub fn aoce(s: &SymmetricMatrix, cfg: &CovEstConfig) -> Result<(CovEstimate, CovTrace)> {
    let m = s.m();
    cfg.validate(m)?;
    let prep = prepare(s)?;

    let mut u = StiefelFrame::new(prep.vectors.clone())?;
    // First spectrum half-step; at the eigenvector start the diagonal of
    // U^T S U is just the spectrum of S.
    let mut lambda = solve_lambda(&prep.eigenvalues, cfg.q)?;

    let mut objective = Vec::with_capacity(cfg.max_iter + 1);
    let mut f_prev = cov_objective(u.as_matrix(), lambda.values(), s, cfg)?;
    objective.push(f_prev);

    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..cfg.max_iter {
        let (u_next, lambda_next) = aoce_step(s, prep.shift, &u, &lambda, cfg)?;
        u = u_next;
        lambda = lambda_next;

        let f = cov_objective(u.as_matrix(), lambda.values(), s, cfg)?;
        if !f.is_finite() {
            return Err(Error::Numerical("objective became non-finite".into()));
        }
        objective.push(f);
        iterations += 1;
        if (f - f_prev).abs() <= cfg.tol * f.abs().max(1.0) {
            converged = true;
            break;
        }
        f_prev = f;
    }
    let est = build_estimate(u, lambda)?;
    Ok((est, CovTrace { objective, iterations, converged }))
}

/// Joint linear bound on the smooth loss
/// `(U, Xi) -> sum_i log(xi_i) + tr(S U Xi^{-1} U^T)` at `(u0, xi0)`,
/// valid on square orthogonal frames and positive `xi`.
#[derive(Debug, Clone)]
pub struct JointLinearization {
    /// Frame gradient factor `(S - s I) u0 Xi0^{-1}`.
    pub f: DMatrix<f64>,
    /// Spectrum curvature weights `-(u0^T (S - s I) u0)_ii / xi0_i^2`,
    /// nonnegative because the shifted matrix is negative definite.
    pub alpha: Vec<f64>,
    /// Spectral shift used.
    pub shift: f64,
    /// Smooth loss at the expansion point.
    pub value0: f64,
    u0: DMatrix<f64>,
    xi0: Vec<f64>,
}

impl JointLinearization {
    pub fn at(s: &SymmetricMatrix, shift: f64, u0: &StiefelFrame, xi0: &[f64]) -> Result<Self> {
        let m = s.m();
        if xi0.len() != m {
            return Err(Error::dim("xi0", m, xi0.len()));
        }
        let su0 = s.as_matrix() * u0.as_matrix();
        let mut f = DMatrix::zeros(m, m);
        let mut alpha = vec![0.0; m];
        let mut value0 = 0.0;
        let mut max_curv = 0.0f64;
        for i in 0..m {
            if xi0[i] <= 0.0 {
                return Err(Error::invalid("xi0", format!("entry {i} must be positive, got {}", xi0[i])));
            }
            let z = u0.as_matrix().column(i).dot(&su0.column(i));
            // (u0^T M u0)_ii with M = S - shift I, using u_i^T u_i = 1.
            let diag = z - shift;
            alpha[i] = -diag / (xi0[i] * xi0[i]);
            max_curv = max_curv.max(alpha[i].abs());
            value0 += xi0[i].ln() + z / xi0[i];
            let scale = 1.0 / xi0[i];
            for r in 0..m {
                f[(r, i)] = (su0[(r, i)] - shift * u0.as_matrix()[(r, i)]) * scale;
            }
        }
        // The shift makes every curvature strictly positive in exact
        // arithmetic; tolerate roundoff-size negatives only.
        for a in alpha.iter_mut() {
            if *a < 0.0 {
                if *a < -1e-9 * max_curv.max(1.0) {
                    return Err(Error::Numerical(format!(
                        "negative curvature {a:.3e} in the joint bound; the shift is too small"
                    )));
                }
                *a = 0.0;
            }
        }
        Ok(JointLinearization {
            f,
            alpha,
            shift,
            value0,
            u0: u0.as_matrix().clone(),
            xi0: xi0.to_vec(),
        })
    }

    /// Bound value at `(u, xi)`, exact at the expansion point:
    /// `sum_i [log(xi_i) + shift/xi_i + alpha_i xi_i] + 2 tr(F^T U) + const`.
    pub fn bound(&self, u: &DMatrix<f64>, xi: &[f64]) -> Result<f64> {
        if xi.len() != self.xi0.len() {
            return Err(Error::dim("xi", self.xi0.len(), xi.len()));
        }
        let mut val = self.value0 + 2.0 * self.f.dot(&(u - &self.u0));
        for i in 0..xi.len() {
            if xi[i] <= 0.0 {
                return Err(Error::invalid("xi", format!("entry {i} must be positive, got {}", xi[i])));
            }
            val += self.alpha[i] * (xi[i] - self.xi0[i])
                + (xi[i].ln() - self.xi0[i].ln())
                + self.shift * (1.0 / xi[i] - 1.0 / self.xi0[i]);
        }
        Ok(val)
    }
}

/// One joint iteration from `(u, xi)`: both block minimizers of the linear
/// bound built at that point. Returns the new frame and the new inverse
/// variances `phi` (so the next `xi` is `1/phi`). `shift` must come from
/// [`spectral_shift`] of the same `s`.
pub fn joce_step(
    s: &SymmetricMatrix,
    shift: f64,
    u: &StiefelFrame,
    xi: &[f64],
    cfg: &CovEstConfig,
) -> Result<(StiefelFrame, OrderedSpectrum)> {
    let lin = JointLinearization::at(s, shift, u, xi)?;
    let pen = cfg.extended_penalty(s.m());
    let pack = weights(u.as_matrix(), &pen)?;
    let phi = solve_phi(&lin.alpha, shift, cfg.q)?;
    let u_next = stiefel_trace_min(&(&lin.f + pack.h))?;
    Ok((u_next, phi))
}

/// Joint estimator: one linear bound in `(U, Xi)` per iteration, minimized
/// exactly in both blocks. Starts from the eigendecomposition of `S`.
pub fn joce(s: &SymmetricMatrix, cfg: &CovEstConfig) -> Result<(CovEstimate, CovTrace)> {
    let m = s.m();
    cfg.validate(m)?;
    let prep = prepare(s)?;

    let mut u = StiefelFrame::new(prep.vectors.clone())?;
    let mut xi = prep.eigenvalues.clone();
    let lambda0: Vec<f64> = xi.iter().map(|x| 1.0 / x).collect();

    let mut objective = Vec::with_capacity(cfg.max_iter + 1);
    let mut f_prev = cov_objective(u.as_matrix(), &lambda0, s, cfg)?;
    objective.push(f_prev);

    let mut lambda = OrderedSpectrum::new(lambda0, cfg.q)?;
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..cfg.max_iter {
        let (u_next, phi) = joce_step(s, prep.shift, &u, &xi, cfg)?;
        u = u_next;
        xi = phi.values().iter().map(|p| 1.0 / p).collect();
        lambda = phi;

        let f = cov_objective(u.as_matrix(), lambda.values(), s, cfg)?;
        if !f.is_finite() {
            return Err(Error::Numerical("objective became non-finite".into()));
        }
        objective.push(f);
        iterations += 1;
        if (f - f_prev).abs() <= cfg.tol * f.abs().max(1.0) {
            converged = true;
            break;
        }
        f_prev = f;
    }
    let est = build_estimate(u, lambda)?;
    Ok((est, CovTrace { objective, iterations, converged }))
}

fn build_estimate(u: StiefelFrame, lambda: OrderedSpectrum) -> Result<CovEstimate> {
    let m = u.m();
    let mut scaled = u.as_matrix().clone();
    for i in 0..m {
        scaled.column_mut(i).scale_mut(1.0 / lambda.values()[i]);
    }
    let sigma = &scaled * u.as_matrix().transpose();
    let sigma_hat = SymmetricMatrix::new(sigma)?;
    Ok(CovEstimate { u, lambda, sigma_hat })
}
