//! Brute-force reference solvers used to verify [`crate::spectrum`].
//!
//! These enumerate every order-respecting pooling partition instead of
//! running the round-based pooling procedure, so they share no code path
//! with the production solvers. A partition splits the leading `0..q`
//! indices into consecutive blocks and attaches any subset of tail indices
//! to the block containing `q - 1`; every block takes the arithmetic mean of
//! its members' parameters, mapped through the per-coordinate closed-form
//! minimizer. The feasible candidate with the smallest objective is the
//! optimum, because the optimum itself has this structure.
//!
//! Intended for small instances only (`m <= 20`); cost is `2^(m-1)`.

use crate::error::{Error, Result};

/// `sum_i (-log x[i] + z[i] * x[i])`.
pub fn objective_lambda(z: &[f64], x: &[f64]) -> f64 {
    z.iter().zip(x).map(|(&zi, &xi)| -xi.ln() + zi * xi).sum()
}

/// `sum_i (-log x[i] + alpha[i]/x[i] + lambda_max * x[i])`.
pub fn objective_phi(alpha: &[f64], lambda_max: f64, x: &[f64]) -> f64 {
    alpha
        .iter()
        .zip(x)
        .map(|(&ai, &xi)| -xi.ln() + ai / xi + lambda_max * xi)
        .sum()
}

/// Reference minimizer of the [`crate::spectrum::solve_lambda`] problem.
pub fn brute_force_lambda(z: &[f64], q: usize) -> Result<Vec<f64>> {
    let minimizer = |mean: f64| 1.0 / mean;
    enumerate(z, q, minimizer, |x| objective_lambda(z, x))
}

/// Reference minimizer of the [`crate::spectrum::solve_phi`] problem.
pub fn brute_force_phi(alpha: &[f64], lambda_max: f64, q: usize) -> Result<Vec<f64>> {
    let minimizer = move |mean: f64| (1.0 + (1.0 + 4.0 * lambda_max * mean).sqrt()) / (2.0 * lambda_max);
    enumerate(alpha, q, minimizer, |x| objective_phi(alpha, lambda_max, x))
}

fn enumerate(
    params: &[f64],
    q: usize,
    minimizer: impl Fn(f64) -> f64,
    objective: impl Fn(&[f64]) -> f64,
) -> Result<Vec<f64>> {
    let m = params.len();
    if m == 0 || q == 0 || q > m {
        return Err(Error::invalid("q", format!("need 1 <= q <= m, got q={q}, m={m}")));
    }
    if m > 20 {
        return Err(Error::invalid("m", "brute force is limited to m <= 20"));
    }
    let tail = m - q;
    let mut best: Option<(f64, Vec<f64>)> = None;

    for chain_mask in 0u32..(1 << (q - 1)) {
        // Bit i set = block boundary between leading indices i and i+1.
        let mut blocks: Vec<(usize, usize)> = Vec::new();
        let mut start = 0;
        for i in 0..q - 1 {
            if chain_mask & (1 << i) != 0 {
                blocks.push((start, i));
                start = i + 1;
            }
        }
        blocks.push((start, q - 1));

        for tail_mask in 0u32..(1 << tail) {
            let mut x = vec![0.0; m];
            for (bi, &(a, b)) in blocks.iter().enumerate() {
                let mut sum: f64 = params[a..=b].iter().sum();
                let mut count = b - a + 1;
                if bi == blocks.len() - 1 {
                    for t in 0..tail {
                        if tail_mask & (1 << t) != 0 {
                            sum += params[q + t];
                            count += 1;
                        }
                    }
                }
                let v = minimizer(sum / count as f64);
                for i in a..=b {
                    x[i] = v;
                }
                if bi == blocks.len() - 1 {
                    for t in 0..tail {
                        if tail_mask & (1 << t) != 0 {
                            x[q + t] = v;
                        }
                    }
                }
            }
            for t in 0..tail {
                if tail_mask & (1 << t) == 0 {
                    x[q + t] = minimizer(params[q + t]);
                }
            }
            if !is_feasible(&x, q) {
                continue;
            }
            let f = objective(&x);
            if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
                best = Some((f, x));
            }
        }
    }
    Ok(best.expect("pooling everything is always feasible").1)
}

fn is_feasible(x: &[f64], q: usize) -> bool {
    const SLACK: f64 = 1e-11;
    for i in 0..q - 1 {
        if x[i] > x[i + 1] + SLACK {
            return false;
        }
    }
    for j in q..x.len() {
        if x[q - 1] > x[j] + SLACK {
            return false;
        }
    }
    x.iter().all(|&v| v > 0.0)
}
