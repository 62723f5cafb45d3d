//! Deterministic replay of an [`ExperimentSpec`] into result rows.
//!
//! Every trial's work is a pure function of (spec, trial index): the model,
//! dataset, and solver seeds are all derived from the spec, never from
//! shared mutable state. Truncating or reordering trials therefore leaves
//! each trial's rows unchanged.

use std::time::Instant;

use spca::covest::{aoce, joce, CovEstConfig, CovTrace};
use spca::imrp::{hard_threshold, imrp, ImrpConfig, Init};
use spca::matrix::{
    sample_covariance, shrink, thin_svd, CovarianceMode, DataMatrix, SymmetricMatrix,
};
use spca::metrics::{
    column_cardinality, cpev_from_cov, exact_recovery, min_offdiag_angle, rel_mse,
    simple_thresholding, threshold_to_cardinality,
};
use spca::procrustes::StiefelFrame;
use spca::synth::{make_angle_model, make_recovery_model, sample};
use spca::Result;

use crate::config::{Algorithm, ExperimentKind, ExperimentSpec};
use crate::records::ResultRecord;

/// Replays `spec` and returns its rows in deterministic order (trial-major,
/// then sweep position). `timings` fills the wall-time column; leaving it
/// off keeps output byte-identical across runs.
pub fn run(spec: &ExperimentSpec, timings: bool) -> Result<Vec<ResultRecord>> {
    spec.validate()?;
    let mut em = Emitter {
        hash: spec.hash(),
        timings,
        rows: Vec::new(),
    };
    match spec.kind {
        ExperimentKind::AngleSweep => run_angle_sweep(spec, &mut em)?,
        ExperimentKind::RecoverySweep => run_recovery_sweep(spec, &mut em)?,
        ExperimentKind::CpevCurve => run_cpev_curve(spec, &mut em)?,
        ExperimentKind::RelmseCurve => run_relmse_curve(spec, &mut em)?,
        ExperimentKind::Extract => run_extract(spec, &mut em)?,
        ExperimentKind::Covest => run_covest(spec, &mut em)?,
    }
    Ok(em.rows)
}

struct Emitter {
    hash: String,
    timings: bool,
    rows: Vec<ResultRecord>,
}

impl Emitter {
    fn push(
        &mut self,
        trial: usize,
        seed: u64,
        sweep: f64,
        metric: &str,
        value: f64,
        iterations: usize,
        wall_ms: Option<f64>,
    ) {
        self.rows.push(ResultRecord {
            spec_hash: self.hash.clone(),
            trial,
            seed,
            sweep,
            metric: metric.to_string(),
            value,
            iterations,
            wall_ms,
        });
    }

    fn wall(&self, clock: Instant) -> Option<f64> {
        self.timings
            .then(|| clock.elapsed().as_secs_f64() * 1e3)
    }
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Leading right singular vectors of the data: the same subspace as the
/// leading eigenvectors of A^T A, but computed from the thin side of A.
fn svd_init(a: &DataMatrix, q: usize) -> Result<StiefelFrame> {
    let am = a.as_matrix();
    let basis = if am.nrows() >= am.ncols() {
        thin_svd(am)?.right.columns(0, q).into_owned()
    } else {
        thin_svd(&am.transpose())?.left.columns(0, q).into_owned()
    };
    StiefelFrame::new(basis)
}

fn imrp_cfg(spec: &ExperimentSpec, rho: f64, init: Init) -> ImrpConfig {
    let mut cfg = ImrpConfig::uniform(spec.q, rho);
    if let Some(v) = spec.p {
        cfg.penalty.p = v;
    }
    if let Some(v) = spec.eps {
        cfg.penalty.eps = v;
    }
    if let Some(v) = spec.threshold {
        cfg.penalty.threshold = v;
    }
    if let Some(v) = spec.tol {
        cfg.tol = v;
    }
    if let Some(v) = spec.max_iter {
        cfg.max_iter = v;
    }
    cfg.init = init;
    cfg
}

fn covest_cfg(spec: &ExperimentSpec, rho: f64) -> CovEstConfig {
    let mut cfg = CovEstConfig::uniform(spec.q, rho);
    if let Some(v) = spec.p {
        cfg.penalty.p = v;
    }
    if let Some(v) = spec.eps {
        cfg.penalty.eps = v;
    }
    if let Some(v) = spec.threshold {
        cfg.penalty.threshold = v;
    }
    if let Some(v) = spec.tol {
        cfg.tol = v;
    }
    if let Some(v) = spec.max_iter {
        cfg.max_iter = v;
    }
    cfg
}

fn run_angle_sweep(spec: &ExperimentSpec, em: &mut Emitter) -> Result<()> {
    let (n, k) = (spec.n.expect("validated"), spec.k.expect("validated"));
    for t in 0..spec.trials {
        let model = make_angle_model(spec.m, k, spec.model_seed(t))?;
        let a = sample(&model, n, spec.data_seed(t, 0))?;
        let s = sample_covariance(&a, CovarianceMode::ScaledGram);
        let scale = a.max_col_norm_sq();
        let init = svd_init(&a, spec.q)?;
        let seed = spec.trial_seed(t);
        for &g in &spec.gamma_grid {
            let cfg = imrp_cfg(spec, g * scale, Init::Frame(init.clone()));
            let clock = Instant::now();
            let (u, trace) = imrp(&s, &cfg)?;
            let wall = em.wall(clock);
            let ut = hard_threshold(u.as_matrix(), cfg.penalty.threshold);
            let angle = min_offdiag_angle(&ut)?;
            em.push(t, seed, g, "min_offdiag_angle_degrees", angle, trace.iterations, wall);
            em.push(t, seed, g, "converged", flag(trace.converged), trace.iterations, wall);
        }
    }
    Ok(())
}

fn run_recovery_sweep(spec: &ExperimentSpec, em: &mut Emitter) -> Result<()> {
    let n = spec.n.expect("validated");
    for t in 0..spec.trials {
        let model = make_recovery_model(spec.m, spec.model_seed(t))?;
        let targets = model.planted();
        let a = sample(&model, n, spec.data_seed(t, 0))?;
        let s = sample_covariance(&a, CovarianceMode::ScaledGram);
        let scale = a.max_col_norm_sq();
        let init = svd_init(&a, spec.q)?;
        let seed = spec.trial_seed(t);
        for &g in &spec.gamma_grid {
            let cfg = imrp_cfg(spec, g * scale, Init::Frame(init.clone()));
            let clock = Instant::now();
            let (u, trace) = imrp(&s, &cfg)?;
            let wall = em.wall(clock);
            let ut = hard_threshold(u.as_matrix(), cfg.penalty.threshold);
            let hit = exact_recovery(&ut, &targets)?;
            em.push(t, seed, g, "recovered", flag(hit), trace.iterations, wall);
            em.push(t, seed, g, "converged", flag(trace.converged), trace.iterations, wall);
        }
    }
    Ok(())
}

fn run_cpev_curve(spec: &ExperimentSpec, em: &mut Emitter) -> Result<()> {
    let (n, k) = (spec.n.expect("validated"), spec.k.expect("validated"));
    let gamma = spec.gamma.expect("validated");
    let grid: Vec<usize> = if spec.cardinality_grid.is_empty() {
        (1..=spec.m).collect()
    } else {
        spec.cardinality_grid.clone()
    };
    for t in 0..spec.trials {
        let model = make_angle_model(spec.m, k, spec.model_seed(t))?;
        let a = sample(&model, n, spec.data_seed(t, 0))?;
        let s = sample_covariance(&a, CovarianceMode::ScaledGram);
        let scale = a.max_col_norm_sq();
        let init = svd_init(&a, spec.q)?;
        let seed = spec.trial_seed(t);

        let cfg = imrp_cfg(spec, gamma * scale, Init::Frame(init));
        let clock = Instant::now();
        let (u, trace) = imrp(&s, &cfg)?;
        let wall = em.wall(clock);
        let ut = hard_threshold(u.as_matrix(), cfg.penalty.threshold);

        // Curves are normalized by each method's own full-cardinality
        // explained variance, so both end at exactly 1.
        let full = cpev_from_cov(&s, &ut)?;
        let baseline_full = cpev_from_cov(&s, &simple_thresholding(&s, spec.q, spec.m)?)?;
        for &c in &grid {
            let uc = threshold_to_cardinality(&ut, c)?;
            let val = cpev_from_cov(&s, &uc).map_or(f64::NAN, |v| v / full);
            em.push(t, seed, c as f64, "cpev_ratio", val, trace.iterations, wall);
            let bc = simple_thresholding(&s, spec.q, c)?;
            let bval = cpev_from_cov(&s, &bc).map_or(f64::NAN, |v| v / baseline_full);
            em.push(t, seed, c as f64, "baseline_cpev_ratio", bval, 0, None);
        }
        em.push(
            t,
            seed,
            spec.m as f64,
            "converged",
            flag(trace.converged),
            trace.iterations,
            wall,
        );
    }
    Ok(())
}

fn run_relmse_curve(spec: &ExperimentSpec, em: &mut Emitter) -> Result<()> {
    let k = spec.k.expect("validated");
    let gamma = spec.gamma.expect("validated");
    let delta = spec.delta.expect("validated");
    for t in 0..spec.trials {
        let model = make_angle_model(spec.m, k, spec.model_seed(t))?;
        let sigma_true = model.sigma();
        let seed = spec.trial_seed(t);
        for (j, &n) in spec.n_grid.iter().enumerate() {
            let a = sample(&model, n, spec.data_seed(t, j))?;
            let s = sample_covariance(&a, CovarianceMode::MeanNormalized);
            // The solvers need a full-rank input, so the sample covariance
            // is shrunk toward the identity whenever it can be singular
            // (n <= m); with more samples than variables the raw matrix is
            // used directly. The shrunk matrix is always scored as the
            // reference row of the sweep.
            let s_sh = shrink(&s, delta)?;
            let solver_input = if n <= spec.m { &s_sh } else { &s };
            let rho = gamma * solver_input.diagonal().max();
            let cfg = covest_cfg(spec, rho);
            let sweep = n as f64;

            let clock = Instant::now();
            let (est_a, tr_a) = aoce(solver_input, &cfg)?;
            let wall_a = em.wall(clock);
            let clock = Instant::now();
            let (est_j, tr_j) = joce(solver_input, &cfg)?;
            let wall_j = em.wall(clock);

            // All three estimates are scored against the raw sample
            // covariance as the common reference.
            let r_a = rel_mse(&est_a.sigma_hat, &s, &sigma_true)?;
            let r_j = rel_mse(&est_j.sigma_hat, &s, &sigma_true)?;
            let r_sh = rel_mse(&s_sh, &s, &sigma_true)?;
            em.push(t, seed, sweep, "relmse_aoce", r_a, tr_a.iterations, wall_a);
            em.push(t, seed, sweep, "relmse_joce", r_j, tr_j.iterations, wall_j);
            em.push(t, seed, sweep, "relmse_shrunk", r_sh, 0, None);
            em.push(t, seed, sweep, "converged_aoce", flag(tr_a.converged), tr_a.iterations, wall_a);
            em.push(t, seed, sweep, "converged_joce", flag(tr_j.converged), tr_j.iterations, wall_j);
        }
    }
    Ok(())
}

fn run_extract(spec: &ExperimentSpec, em: &mut Emitter) -> Result<()> {
    let (n, k) = (spec.n.expect("validated"), spec.k.expect("validated"));
    let gamma = spec.gamma.expect("validated");
    for t in 0..spec.trials {
        let model = make_angle_model(spec.m, k, spec.model_seed(t))?;
        let a = sample(&model, n, spec.data_seed(t, 0))?;
        let s = sample_covariance(&a, CovarianceMode::ScaledGram);
        let scale = a.max_col_norm_sq();
        let init = svd_init(&a, spec.q)?;
        let seed = spec.trial_seed(t);

        let cfg = imrp_cfg(spec, gamma * scale, Init::Frame(init));
        let clock = Instant::now();
        let (u, trace) = imrp(&s, &cfg)?;
        let wall = em.wall(clock);
        let ut = hard_threshold(u.as_matrix(), cfg.penalty.threshold);

        em.push(t, seed, gamma, "cpev", cpev_from_cov(&s, &ut)?, trace.iterations, wall);
        let card = column_cardinality(&ut).into_iter().max().unwrap_or(0);
        em.push(t, seed, gamma, "max_cardinality", card as f64, trace.iterations, wall);
        if spec.q >= 2 {
            let angle = min_offdiag_angle(&ut)?;
            em.push(t, seed, gamma, "min_offdiag_angle_degrees", angle, trace.iterations, wall);
        }
        em.push(t, seed, gamma, "converged", flag(trace.converged), trace.iterations, wall);
    }
    Ok(())
}

fn run_covest(spec: &ExperimentSpec, em: &mut Emitter) -> Result<()> {
    let (n, k) = (spec.n.expect("validated"), spec.k.expect("validated"));
    let gamma = spec.gamma.expect("validated");
    let algorithm = spec.algorithm.expect("validated");
    for t in 0..spec.trials {
        let model = make_angle_model(spec.m, k, spec.model_seed(t))?;
        let sigma_true = model.sigma();
        let a = sample(&model, n, spec.data_seed(t, 0))?;
        let s = sample_covariance(&a, CovarianceMode::MeanNormalized);
        let input: SymmetricMatrix = match spec.delta {
            Some(d) => shrink(&s, d)?,
            None => s.clone(),
        };
        let rho = gamma * input.diagonal().max();
        let cfg = covest_cfg(spec, rho);
        let seed = spec.trial_seed(t);

        let clock = Instant::now();
        let (est, trace): (_, CovTrace) = match algorithm {
            Algorithm::Aoce => aoce(&input, &cfg)?,
            Algorithm::Joce => joce(&input, &cfg)?,
            _ => unreachable!("validated"),
        };
        let wall = em.wall(clock);
        let r = rel_mse(&est.sigma_hat, &s, &sigma_true)?;
        em.push(t, seed, n as f64, "relmse", r, trace.iterations, wall);
        em.push(t, seed, n as f64, "converged", flag(trace.converged), trace.iterations, wall);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentKind;

    fn angle_spec() -> ExperimentSpec {
        ExperimentSpec {
            kind: ExperimentKind::AngleSweep,
            m: 20,
            n: Some(15),
            q: 2,
            k: Some(3),
            gamma_grid: vec![0.0, 0.3],
            gamma: None,
            n_grid: vec![],
            cardinality_grid: vec![],
            trials: 2,
            seed_base: 11,
            datasets_per_model: None,
            algorithm: None,
            delta: None,
            p: None,
            eps: None,
            threshold: None,
            tol: None,
            max_iter: None,
        }
    }

    #[test]
    fn angle_sweep_rows_and_determinism() {
        let spec = angle_spec();
        let rows = run(&spec, false).unwrap();
        // 2 trials x 2 levels x 2 metrics.
        assert_eq!(rows.len(), 8);
        assert!(rows.iter().all(|r| r.wall_ms.is_none()));
        assert!(rows
            .iter()
            .filter(|r| r.metric == "min_offdiag_angle_degrees")
            .all(|r| r.value > 80.0));
        assert_eq!(rows, run(&spec, false).unwrap());

        let timed = run(&spec, true).unwrap();
        assert!(timed.iter().any(|r| r.wall_ms.is_some()));
    }

    #[test]
    fn trials_are_independent_blocks() {
        // Shrinking the trial count must not change surviving trials' rows
        // (the spec hash legitimately differs, so blank it out).
        let strip = |mut rows: Vec<ResultRecord>| {
            for r in &mut rows {
                r.spec_hash.clear();
            }
            rows
        };
        let mut spec = angle_spec();
        spec.trials = 3;
        let full = strip(run(&spec, false).unwrap());
        spec.trials = 2;
        let prefix = strip(run(&spec, false).unwrap());
        let head: Vec<_> = full.into_iter().filter(|r| r.trial < 2).collect();
        assert_eq!(head, prefix);
    }

    #[test]
    fn recovery_sweep_emits_rates() {
        let spec = ExperimentSpec {
            kind: ExperimentKind::RecoverySweep,
            m: 24,
            n: Some(30),
            q: 2,
            k: None,
            gamma_grid: vec![0.0],
            gamma: None,
            n_grid: vec![],
            cardinality_grid: vec![],
            trials: 2,
            seed_base: 5,
            datasets_per_model: None,
            algorithm: None,
            delta: None,
            p: None,
            eps: None,
            threshold: None,
            tol: None,
            max_iter: None,
        };
        let rows = run(&spec, false).unwrap();
        assert_eq!(rows.len(), 4);
        for r in rows.iter().filter(|r| r.metric == "recovered") {
            assert!(r.value == 0.0 || r.value == 1.0);
        }
    }

    #[test]
    fn cpev_curve_ends_at_one() {
        let spec = ExperimentSpec {
            kind: ExperimentKind::CpevCurve,
            m: 12,
            n: Some(40),
            q: 2,
            k: Some(2),
            gamma_grid: vec![],
            gamma: Some(0.05),
            n_grid: vec![],
            cardinality_grid: vec![],
            trials: 1,
            seed_base: 3,
            datasets_per_model: None,
            algorithm: None,
            delta: None,
            p: None,
            eps: None,
            threshold: None,
            tol: None,
            max_iter: None,
        };
        let rows = run(&spec, false).unwrap();
        let at_full = |metric: &str| {
            rows.iter()
                .find(|r| r.metric == metric && r.sweep == 12.0)
                .unwrap()
                .value
        };
        assert_eq!(at_full("cpev_ratio"), 1.0);
        assert_eq!(at_full("baseline_cpev_ratio"), 1.0);
    }

    #[test]
    fn relmse_curve_scores_all_estimators() {
        let spec = ExperimentSpec {
            kind: ExperimentKind::RelmseCurve,
            m: 10,
            n: None,
            q: 2,
            k: Some(2),
            gamma_grid: vec![],
            gamma: Some(0.0),
            n_grid: vec![8, 20],
            cardinality_grid: vec![],
            trials: 1,
            seed_base: 9,
            datasets_per_model: None,
            algorithm: None,
            delta: Some(0.2),
            p: None,
            eps: None,
            threshold: None,
            tol: None,
            max_iter: None,
        };
        let rows = run(&spec, false).unwrap();
        assert_eq!(rows.len(), 10);
        for metric in ["relmse_aoce", "relmse_joce", "relmse_shrunk"] {
            let vals: Vec<f64> = rows
                .iter()
                .filter(|r| r.metric == metric)
                .map(|r| r.value)
                .collect();
            assert_eq!(vals.len(), 2, "{metric}");
            assert!(vals.iter().all(|v| v.is_finite()), "{metric}");
        }
    }
}
