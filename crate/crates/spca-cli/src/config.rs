//! Experiment descriptions: what to run, on which grid, with which seeds.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use spca::Error;

/// Which study a spec describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Sweep the penalty level and record the worst pairwise loading angle.
    AngleSweep,
    /// Sweep the penalty level and record planted-support recovery.
    RecoverySweep,
    /// Fixed penalty level; sweep cardinality and record explained variance
    /// against a thresholded-eigenvector baseline.
    CpevCurve,
    /// Fixed penalty level; sweep the sample count and record the accuracy
    /// gain of each covariance estimator over the raw sample covariance.
    RelmseCurve,
    /// Single-configuration loading extraction on synthetic data.
    Extract,
    /// Single-configuration covariance estimation on synthetic data.
    Covest,
}

impl ExperimentKind {
    fn name(self) -> &'static str {
        match self {
            ExperimentKind::AngleSweep => "angle_sweep",
            ExperimentKind::RecoverySweep => "recovery_sweep",
            ExperimentKind::CpevCurve => "cpev_curve",
            ExperimentKind::RelmseCurve => "relmse_curve",
            ExperimentKind::Extract => "extract",
            ExperimentKind::Covest => "covest",
        }
    }
}

/// Which solver produces the rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Imrp,
    Aoce,
    Joce,
    Baseline,
}

/// A reproducible Monte Carlo study. Deserialized from JSON; unknown fields
/// are rejected so config typos fail loudly instead of being ignored.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    /// Ambient dimension of the synthetic model.
    pub m: usize,
    /// Samples per dataset. Ignored by `relmse_curve`, which sweeps `n_grid`.
    #[serde(default)]
    pub n: Option<usize>,
    /// Components extracted (or penalized leading eigenvectors).
    pub q: usize,
    /// Planted sparse directions in the angle model.
    #[serde(default)]
    pub k: Option<usize>,
    /// Penalty levels for the sweep kinds. Each level is multiplied by a
    /// data-dependent scale (the largest squared column norm, or for
    /// mean-normalized covariances the largest diagonal entry).
    #[serde(default)]
    pub gamma_grid: Vec<f64>,
    /// Single penalty level for the fixed-penalty kinds.
    #[serde(default)]
    pub gamma: Option<f64>,
    /// Sample counts for `relmse_curve`.
    #[serde(default)]
    pub n_grid: Vec<usize>,
    /// Cardinalities for `cpev_curve`. Empty means `1..=m`.
    #[serde(default)]
    pub cardinality_grid: Vec<usize>,
    pub trials: usize,
    pub seed_base: u64,
    /// Consecutive trials sharing one covariance model (fresh data each).
    /// Defaults to 1: every trial draws its own model.
    #[serde(default)]
    pub datasets_per_model: Option<usize>,
    /// Estimator for the `covest` kind.
    #[serde(default)]
    pub algorithm: Option<Algorithm>,
    /// Shrinkage weight toward the identity, in (0, 1].
    #[serde(default)]
    pub delta: Option<f64>,
    // Solver overrides; None keeps each solver's documented default.
    #[serde(default)]
    pub p: Option<f64>,
    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub max_iter: Option<usize>,
}

fn invalid(name: &'static str, message: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        message: message.into(),
    }
}

fn check_grid(name: &'static str, grid: &[f64]) -> Result<(), Error> {
    if grid.is_empty() {
        return Err(invalid(name, "must be nonempty"));
    }
    for &g in grid {
        if !(g.is_finite() && g >= 0.0) {
            return Err(invalid(name, format!("entries must be finite and >= 0, got {g}")));
        }
    }
    Ok(())
}

impl ExperimentSpec {
    /// Validates cross-field consistency; error messages name the offending
    /// field.
    pub fn validate(&self) -> Result<(), Error> {
        if self.trials == 0 {
            return Err(invalid("trials", "must be at least 1"));
        }
        if self.m == 0 {
            return Err(invalid("m", "must be at least 1"));
        }
        if self.q == 0 || self.q > self.m {
            return Err(invalid("q", format!("must satisfy 1 <= q <= {}, got {}", self.m, self.q)));
        }
        if let Some(0) = self.datasets_per_model {
            return Err(invalid("datasets_per_model", "must be at least 1"));
        }
        if let Some(d) = self.delta {
            if !(d > 0.0 && d <= 1.0) {
                return Err(invalid("delta", format!("must lie in (0, 1], got {d}")));
            }
        }
        let kind = self.kind.name();
        let need_n = || {
            self.n
                .filter(|&n| n > 0)
                .ok_or_else(|| invalid("n", format!("must be a positive sample count for {kind}")))
        };
        let need_k = || {
            self.k
                .filter(|&k| k > 0)
                .ok_or_else(|| invalid("k", format!("must be a positive planted count for {kind}")))
        };
        let need_gamma = || {
            self.gamma
                .filter(|g| g.is_finite() && *g >= 0.0)
                .ok_or_else(|| invalid("gamma", format!("must be a finite level >= 0 for {kind}")))
        };
        match self.kind {
            ExperimentKind::AngleSweep => {
                need_n()?;
                need_k()?;
                check_grid("gamma_grid", &self.gamma_grid)?;
                if self.q < 2 {
                    return Err(invalid("q", "angle sweep needs at least two components"));
                }
            }
            ExperimentKind::RecoverySweep => {
                need_n()?;
                check_grid("gamma_grid", &self.gamma_grid)?;
            }
            ExperimentKind::CpevCurve => {
                need_n()?;
                need_k()?;
                need_gamma()?;
                for &c in &self.cardinality_grid {
                    if c == 0 || c > self.m {
                        return Err(invalid(
                            "cardinality_grid",
                            format!("entries must lie in 1..={}, got {c}", self.m),
                        ));
                    }
                }
            }
            ExperimentKind::RelmseCurve => {
                need_k()?;
                need_gamma()?;
                if self.n_grid.is_empty() {
                    return Err(invalid("n_grid", "must be nonempty"));
                }
                if self.n_grid.iter().any(|&n| n == 0) {
                    return Err(invalid("n_grid", "entries must be positive"));
                }
                if self.delta.is_none() {
                    return Err(invalid("delta", "required: relmse_curve shrinks the sample covariance"));
                }
            }
            ExperimentKind::Extract => {
                need_n()?;
                need_k()?;
                need_gamma()?;
            }
            ExperimentKind::Covest => {
                let n = need_n()?;
                need_k()?;
                need_gamma()?;
                match self.algorithm {
                    Some(Algorithm::Aoce) | Some(Algorithm::Joce) => {}
                    _ => return Err(invalid("algorithm", "must be aoce or joce for covest")),
                }
                if n < self.m && self.delta.is_none() {
                    return Err(invalid(
                        "delta",
                        format!("required when n ({n}) < m ({}): shrink the sample covariance", self.m),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Short content hash identifying the spec in every output row.
    pub fn hash(&self) -> String {
        let canon = serde_json::to_string(self).expect("spec serializes");
        let digest = Sha256::digest(canon.as_bytes());
        let mut out = String::with_capacity(12);
        for byte in digest.iter().take(6) {
            out.push_str(&format!("{byte:02x}"));
        }
        out
    }

    pub fn datasets_per_model(&self) -> usize {
        self.datasets_per_model.unwrap_or(1)
    }

    /// Seed reported in a trial's rows.
    pub fn trial_seed(&self, trial: usize) -> u64 {
        self.seed_base.wrapping_add(trial as u64)
    }

    /// Seed of the covariance model a trial draws from. Trials in the same
    /// group (see `datasets_per_model`) share it.
    pub fn model_seed(&self, trial: usize) -> u64 {
        mix3(1, self.seed_base, (trial / self.datasets_per_model()) as u64)
    }

    /// Seed of one dataset. Distinct per (trial, sweep position), so kinds
    /// that redraw data along the sweep stay independent across the grid.
    pub fn data_seed(&self, trial: usize, grid_index: usize) -> u64 {
        mix3(2, self.trial_seed(trial), grid_index as u64)
    }
}

/// SplitMix64-style finalizer over a stream tag and two indices. Keeps the
/// derived model/data seed streams decorrelated from the raw trial seeds.
fn mix3(tag: u64, a: u64, b: u64) -> u64 {
    let mut x = tag
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(a)
        .rotate_left(23)
        .wrapping_mul(0xBF58_476D_1CE4_E5B9)
        .wrapping_add(b);
    x ^= x >> 30;
    x = x.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}
