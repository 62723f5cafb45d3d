//! Ordered spectrum solvers.
//!
//! Both solvers minimize a sum of independent scalar terms subject to the
//! ordering cone of an inverse-covariance spectrum whose first `q` entries
//! are the ordered leading part:
//!
//! ```text
//! x[0] <= x[1] <= ... <= x[q-1],   x[q-1] <= x[j]  for all j >= q
//! ```
//!
//! - [`solve_lambda`]: terms `-log x + z x` (concentration eigenvalues given
//!   per-direction energies `z`); unconstrained minimizer `1/z`.
//! - [`solve_phi`]: terms `-log x + a/x + lambda_max * x`; unconstrained
//!   minimizer `(1 + sqrt(1 + 4 lambda_max a)) / (2 lambda_max)`.
//!
//! Since each per-term minimizer is monotone in its parameter, violations of
//! the cone appear as misordered parameter runs. The solver repeatedly pools
//! maximal violating runs into blocks that share the arithmetic mean of
//! their members' original parameters; tail indices (`>= q`) can only pool
//! with the block containing `q-1`, selected by a running-average test over
//! the sorted tail violators. Every round pools all disjoint violating runs
//! at once, each round removes at least one block, and at most `m - 1`
//! pooling rounds occur. KKT optimality of the result can be checked with
//! [`kkt_residual_lambda`] / [`kkt_residual_phi`], or independently against
//! the brute-force partition enumeration in [`crate::oracle`].

use crate::error::{Error, Result};

/// A positive spectrum satisfying the ordering cone above.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderedSpectrum {
    values: Vec<f64>,
    q: usize,
}

impl OrderedSpectrum {
    pub fn new(values: Vec<f64>, q: usize) -> Result<Self> {
        validate_q(values.len(), q)?;
        for (i, &v) in values.iter().enumerate() {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Degenerate(format!(
                    "spectrum value [{i}] = {v} must be positive and finite"
                )));
            }
        }
        let bad = cone_violations(&values, q);
        if !bad.is_empty() {
            return Err(Error::InfeasibleSpectrum {
                indices: bad,
                message: "ordered leading part must ascend and stay below the tail".into(),
            });
        }
        Ok(OrderedSpectrum { values, q })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Indices at which the cone is violated (index `i` flags the pair whose
/// left element is `i`; tail indices flag themselves).
fn cone_violations(values: &[f64], q: usize) -> Vec<usize> {
    let mut bad = Vec::new();
    for i in 0..q.saturating_sub(1) {
        if values[i] > values[i + 1] {
            bad.push(i);
        }
    }
    for j in q..values.len() {
        if values[q - 1] > values[j] {
            bad.push(j);
        }
    }
    bad
}

fn validate_q(m: usize, q: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::Degenerate("empty spectrum".into()));
    }
    if q == 0 || q > m {
        return Err(Error::invalid("q", format!("must satisfy 1 <= q <= {m}, got {q}")));
    }
    Ok(())
}

/// One pooled block: member indices (ascending) and the arithmetic mean of
/// their original parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolBlock {
    pub members: Vec<usize>,
    pub value: f64,
}

/// Final pooling partition and the number of pooling rounds taken.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolingState {
    /// Partition of `0..m`. Leading blocks in chain order, then untouched
    /// tail singletons by index. Any block containing an index `>= q` also
    /// contains `q - 1`.
    pub blocks: Vec<PoolBlock>,
    /// Rounds in which at least one pool happened; at most `m - 1`.
    pub rounds: usize,
}

/// Aggregate over original parameter entries.
#[derive(Debug, Clone)]
struct Agg {
    sum: f64,
    count: usize,
    members: Vec<usize>,
}

impl Agg {
    fn singleton(i: usize, v: f64) -> Self {
        Agg { sum: v, count: 1, members: vec![i] }
    }

    fn mean(&self) -> f64 {
        self.sum / self.count as f64
    }

    fn absorb(&mut self, other: Agg) {
        self.sum += other.sum;
        self.count += other.count;
        self.members.extend(other.members);
    }
}

/// Running-average admission over tail violator candidates sorted ascending
/// by (value, index). Scans from the largest candidate down; a candidate is
/// admitted while its value is `>=` the mean of the leading run plus all
/// already-admitted candidates (boundary equality admits). Returns how many
/// are admitted from the top.
fn admit_from_top(run_sum: f64, run_count: usize, cands: &[(f64, f64, usize)]) -> usize {
    let mut acc_sum = run_sum;
    let mut acc_count = run_count;
    let mut admitted = 0;
    for k in (0..cands.len()).rev() {
        let (value, sum, count) = cands[k];
        if value >= acc_sum / acc_count as f64 {
            admitted += 1;
            acc_sum += sum;
            acc_count += count;
        } else {
            break;
        }
    }
    admitted
}

/// Selected subset of tail violators pooled with the leading run, for the
/// feasibility orientation where `params` must descend along `0..q` and
/// dominate the tail.
///
/// `r` is the length (minus one) of the weakly ascending run ending at
/// `q - 1`, i.e. the run covers `q-1-r ..= q-1`. `violators` lists tail
/// indices (`>= q`) whose parameter strictly exceeds `params[q-1]`. Returns
/// the admitted indices in ascending index order.
pub fn active_set(params: &[f64], q: usize, r: usize, violators: &[usize]) -> Result<Vec<usize>> {
    validate_q(params.len(), q)?;
    if r >= q {
        return Err(Error::invalid("r", format!("run length must stay inside the chain, got {r} >= q = {q}")));
    }
    let mut cands: Vec<usize> = Vec::with_capacity(violators.len());
    for &j in violators {
        if j < q || j >= params.len() {
            return Err(Error::invalid("violators", format!("index {j} is not a tail index")));
        }
        cands.push(j);
    }
    cands.sort_by(|&a, &b| {
        params[a].partial_cmp(&params[b]).expect("finite params").then(a.cmp(&b))
    });
    let run_sum: f64 = (q - 1 - r..=q - 1).map(|i| params[i]).sum();
    let tuples: Vec<(f64, f64, usize)> = cands.iter().map(|&j| (params[j], params[j], 1)).collect();
    let admitted = admit_from_top(run_sum, r + 1, &tuples);
    let mut out: Vec<usize> = cands[cands.len() - admitted..].to_vec();
    out.sort_unstable();
    Ok(out)
}

/// Pools `params` under the descending orientation: feasible means chain
/// block means non-increasing and the `q`-block mean `>=` every tail value.
/// Returns (chain blocks, remaining tail singletons, rounds).
fn pool_descending(params: &[f64], q: usize) -> (Vec<Agg>, Vec<Agg>, usize) {
    let m = params.len();
    let mut chain: Vec<Agg> = (0..q).map(|i| Agg::singleton(i, params[i])).collect();
    let mut tail: Vec<Agg> = (q..m).map(|j| Agg::singleton(j, params[j])).collect();
    let mut rounds = 0usize;

    loop {
        let means: Vec<f64> = chain.iter().map(Agg::mean).collect();
        // Maximal weakly ascending segments, delimited by strict descents.
        let mut segments: Vec<(usize, usize)> = Vec::new();
        let mut start = 0;
        for i in 1..chain.len() {
            if means[i - 1] > means[i] {
                segments.push((start, i - 1));
                start = i;
            }
        }
        segments.push((start, chain.len() - 1));

        let q_mean = *means.last().expect("chain is never empty");
        // Strict tail violators, sorted ascending by (value, index).
        let mut violators: Vec<usize> = (0..tail.len())
            .filter(|&k| tail[k].mean() > q_mean)
            .collect();
        violators.sort_by(|&a, &b| {
            tail[a]
                .mean()
                .partial_cmp(&tail[b].mean())
                .expect("finite params")
                .then(tail[a].members[0].cmp(&tail[b].members[0]))
        });

        let mut pooled_any = false;
        let mut new_chain: Vec<Agg> = Vec::with_capacity(chain.len());
        let last_segment = segments.len() - 1;
        let mut absorbed: Vec<usize> = Vec::new();
        let mut it = chain.into_iter();
        for (si, &(a, b)) in segments.iter().enumerate() {
            let strict_ascent = (a..b).any(|i| means[i] < means[i + 1]);
            let ends_at_q = si == last_segment;
            if ends_at_q && !violators.is_empty() {
                // Pool the run ending at the q-block with the admitted tail
                // violators (running-average test).
                let mut merged = it.next().expect("segment nonempty");
                for _ in a..b {
                    merged.absorb(it.next().expect("segment member"));
                }
                let tuples: Vec<(f64, f64, usize)> = violators
                    .iter()
                    .map(|&k| (tail[k].mean(), tail[k].sum, tail[k].count))
                    .collect();
                let admitted = admit_from_top(merged.sum, merged.count, &tuples);
                debug_assert!(admitted >= 1, "largest violator is always admitted");
                absorbed = violators[violators.len() - admitted..].to_vec();
                absorbed.sort_unstable();
                for &k in &absorbed {
                    let t = &tail[k];
                    merged.absorb(Agg { sum: t.sum, count: t.count, members: t.members.clone() });
                }
                merged.members.sort_unstable();
                new_chain.push(merged);
                pooled_any = true;
            } else if strict_ascent {
                let mut merged = it.next().expect("segment nonempty");
                for _ in a..b {
                    merged.absorb(it.next().expect("segment member"));
                }
                merged.members.sort_unstable();
                new_chain.push(merged);
                pooled_any = true;
            } else {
                for _ in a..=b {
                    new_chain.push(it.next().expect("segment member"));
                }
            }
        }
        chain = new_chain;
        if !absorbed.is_empty() {
            let keep: Vec<bool> = (0..tail.len()).map(|k| !absorbed.contains(&k)).collect();
            tail = tail
                .into_iter()
                .zip(keep)
                .filter_map(|(t, k)| k.then_some(t))
                .collect();
        }
        if !pooled_any {
            break;
        }
        rounds += 1;
        debug_assert!(rounds < m.max(1), "pooling must terminate within m - 1 rounds");
    }
    (chain, tail, rounds)
}

fn assemble_state(chain: Vec<Agg>, tail: Vec<Agg>, rounds: usize, negate: bool) -> PoolingState {
    let sign = if negate { -1.0 } else { 1.0 };
    let blocks = chain
        .into_iter()
        .chain(tail)
        .map(|agg| PoolBlock { value: sign * agg.mean(), members: agg.members })
        .collect();
    PoolingState { blocks, rounds }
}

/// Minimizes `sum_i (-log x[i] + z[i] * x[i])` over the ordering cone.
///
/// `z` holds per-direction energies (diagonal of `U^T S U`); entries must be
/// strictly positive, which a shrunk covariance guarantees.
pub fn solve_lambda(z: &[f64], q: usize) -> Result<OrderedSpectrum> {
    solve_lambda_detailed(z, q).map(|(s, _)| s)
}

/// [`solve_lambda`] plus the pooling partition for inspection.
pub fn solve_lambda_detailed(z: &[f64], q: usize) -> Result<(OrderedSpectrum, PoolingState)> {
    validate_q(z.len(), q)?;
    for (i, &zi) in z.iter().enumerate() {
        if !(zi > 0.0 && zi.is_finite()) {
            return Err(Error::Degenerate(format!(
                "direction energy z[{i}] = {zi} is not positive; the covariance is rank \
                 deficient along it - shrink toward the identity (delta) before solving"
            )));
        }
    }
    let (chain, tail, rounds) = pool_descending(z, q);
    let state = assemble_state(chain, tail, rounds, false);
    let mut values = vec![0.0; z.len()];
    for block in &state.blocks {
        let lam = 1.0 / block.value;
        for &i in &block.members {
            values[i] = lam;
        }
    }
    let spectrum = OrderedSpectrum::new(values, q)?;
    Ok((spectrum, state))
}

/// Minimizes `sum_i (-log x[i] + alpha[i]/x[i] + lambda_max * x[i])` over
/// the ordering cone. `alpha` must be elementwise nonnegative.
pub fn solve_phi(alpha: &[f64], lambda_max: f64, q: usize) -> Result<OrderedSpectrum> {
    solve_phi_detailed(alpha, lambda_max, q).map(|(s, _)| s)
}

/// [`solve_phi`] plus the pooling partition for inspection.
pub fn solve_phi_detailed(
    alpha: &[f64],
    lambda_max: f64,
    q: usize,
) -> Result<(OrderedSpectrum, PoolingState)> {
    validate_q(alpha.len(), q)?;
    if !(lambda_max > 0.0 && lambda_max.is_finite()) {
        return Err(Error::invalid(
            "lambda_max",
            format!("must be positive and finite, got {lambda_max}"),
        ));
    }
    for (i, &ai) in alpha.iter().enumerate() {
        if !(ai >= 0.0 && ai.is_finite()) {
            return Err(Error::Degenerate(format!(
                "curvature parameter alpha[{i}] = {ai} must be nonnegative"
            )));
        }
    }
    // phi's per-term minimizer is increasing in alpha, so the feasible
    // orientation is alpha ascending: pool the negated parameters.
    let negated: Vec<f64> = alpha.iter().map(|&a| -a).collect();
    let (chain, tail, rounds) = pool_descending(&negated, q);
    let state = assemble_state(chain, tail, rounds, true);
    let mut values = vec![0.0; alpha.len()];
    for block in &state.blocks {
        let phi = phi_from_alpha(block.value, lambda_max);
        for &i in &block.members {
            values[i] = phi;
        }
    }
    let spectrum = OrderedSpectrum::new(values, q)?;
    Ok((spectrum, state))
}

/// Positive root of `lambda_max * phi^2 - phi - alpha = 0`.
pub fn phi_from_alpha(alpha: f64, lambda_max: f64) -> f64 {
    (1.0 + (1.0 + 4.0 * lambda_max * alpha).sqrt()) / (2.0 * lambda_max)
}

/// KKT residual of a spectrum for the [`solve_lambda`] problem.
pub fn kkt_residual_lambda(spectrum: &OrderedSpectrum, z: &[f64]) -> Result<f64> {
    if z.len() != spectrum.len() {
        return Err(Error::dim("kkt_residual_lambda", spectrum.len(), z.len()));
    }
    kkt_residual_core(spectrum, |i, x| -1.0 / x + z[i])
}

/// KKT residual of a spectrum for the [`solve_phi`] problem.
pub fn kkt_residual_phi(spectrum: &OrderedSpectrum, alpha: &[f64], lambda_max: f64) -> Result<f64> {
    if alpha.len() != spectrum.len() {
        return Err(Error::dim("kkt_residual_phi", spectrum.len(), alpha.len()));
    }
    kkt_residual_core(spectrum, |i, x| -1.0 / x - alpha[i] / (x * x) + lambda_max)
}

/// Reconstructs the ordering multipliers from the stationarity equations,
/// clips negatives, and returns the largest violation magnitude across
/// stationarity, complementary slackness, and dual feasibility.
fn kkt_residual_core(spectrum: &OrderedSpectrum, grad: impl Fn(usize, f64) -> f64) -> Result<f64> {
    let x = spectrum.values();
    let q = spectrum.q();
    let m = x.len();
    let bad = cone_violations(x, q);
    if !bad.is_empty() {
        return Err(Error::InfeasibleSpectrum {
            indices: bad,
            message: "cannot score an infeasible spectrum".into(),
        });
    }
    let g: Vec<f64> = (0..m).map(|i| grad(i, x[i])).collect();

    // Chain multipliers mu[i] for x[i] <= x[i+1], i in 0..q-1; tail
    // multipliers nu[j-q] for x[q-1] <= x[j].
    let mut mu = vec![0.0; q - 1];
    for i in 0..q.saturating_sub(1) {
        mu[i] = if i == 0 { -g[0] } else { mu[i - 1] - g[i] };
    }
    let nu: Vec<f64> = (q..m).map(|j| g[j]).collect();

    let mut residual = 0.0f64;
    for d in mu.iter().chain(nu.iter()) {
        residual = residual.max(-d);
    }
    let mu: Vec<f64> = mu.into_iter().map(|v| v.max(0.0)).collect();
    let nu: Vec<f64> = nu.into_iter().map(|v| v.max(0.0)).collect();
    let nu_sum: f64 = nu.iter().sum();

    for i in 0..m {
        let mut st = g[i];
        if i < q - 1 {
            st += mu[i];
        }
        if i >= 1 && i <= q - 1 {
            st -= mu[i - 1];
        }
        if i == q - 1 {
            st += nu_sum;
        }
        if i >= q {
            st -= nu[i - q];
        }
        residual = residual.max(st.abs());
    }
    for i in 0..q - 1 {
        residual = residual.max((mu[i] * (x[i] - x[i + 1])).abs());
    }
    for j in q..m {
        residual = residual.max((nu[j - q] * (x[q - 1] - x[j])).abs());
    }
    Ok(residual)
}
