//! Synthetic covariance models with planted sparse eigenvectors.
//!
//! Each model is a full eigendecomposition `Sigma = V diag(lambda) V^T`
//! whose leading eigenvectors are sparse by construction; the remaining
//! columns are a seeded random orthonormal completion. [`sample`] draws
//! mean-zero Gaussian rows with that exact covariance.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::matrix::{DataMatrix, SymmetricMatrix};
use crate::procrustes::{orthonormalize_columns, StiefelFrame};

/// Population covariance with known sparse leading eigenvectors.
#[derive(Debug, Clone)]
pub struct CovModel {
    /// Full orthonormal eigenvector frame, `m x m`.
    pub v: StiefelFrame,
    /// Eigenvalues in decreasing order, all positive.
    pub lambda: Vec<f64>,
    /// For each planted column: `(column index, support indices)`.
    pub sparse_support: Vec<(usize, Vec<usize>)>,
}

impl CovModel {
    pub fn m(&self) -> usize {
        self.v.m()
    }

    /// `V diag(lambda) V^T`.
    pub fn sigma(&self) -> SymmetricMatrix {
        let m = self.m();
        let mut scaled = self.v.as_matrix().clone();
        for j in 0..m {
            scaled.column_mut(j).scale_mut(self.lambda[j]);
        }
        SymmetricMatrix::new(&scaled * self.v.as_matrix().transpose())
            .expect("eigendecomposition product is symmetric")
    }

    /// The planted eigenvectors, one column per entry of `sparse_support`.
    pub fn planted(&self) -> DMatrix<f64> {
        let m = self.m();
        let k = self.sparse_support.len();
        let mut out = DMatrix::zeros(m, k);
        for (slot, (col, _)) in self.sparse_support.iter().enumerate() {
            out.set_column(slot, &self.v.as_matrix().column(*col));
        }
        out
    }
}

/// Fills columns `start..` with seeded Gaussian entries and orthonormalizes
/// them against the fixed leading block.
fn complete_frame(mut v: DMatrix<f64>, start: usize, seed: u64) -> Result<StiefelFrame> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for j in start..v.ncols() {
        for i in 0..v.nrows() {
            v[(i, j)] = rng.sample(StandardNormal);
        }
    }
    orthonormalize_columns(&mut v, start)?;
    StiefelFrame::new(v)
}

/// Two planted disjoint flat eigenvectors: `v1` uniform on coordinates
/// `0..10` with eigenvalue 400, `v2` uniform on `10..20` with eigenvalue
/// 300, all other eigenvalues 1. Requires `m >= 20`.
pub fn make_recovery_model(m: usize, seed: u64) -> Result<CovModel> {
    if m < 20 {
        return Err(Error::invalid("m", format!("needs m >= 20 for two disjoint supports, got {m}")));
    }
    let mut v = DMatrix::zeros(m, m);
    let amp = 1.0 / (10.0f64).sqrt();
    for i in 0..10 {
        v[(i, 0)] = amp;
        v[(10 + i, 1)] = amp;
    }
    let v = complete_frame(v, 2, seed)?;
    let mut lambda = vec![1.0; m];
    lambda[0] = 400.0;
    lambda[1] = 300.0;
    Ok(CovModel {
        v,
        lambda,
        sparse_support: vec![(0, (0..10).collect()), (1, (10..20).collect())],
    })
}

/// `k` planted eigenvectors supported on the first 10 coordinates, with
/// eigenvalues `100k, 100(k-1), ..., 100` and 1 elsewhere. Requires
/// `m >= 10` and `1 <= k <= 10`.
pub fn make_angle_model(m: usize, k: usize, seed: u64) -> Result<CovModel> {
    if m < 10 {
        return Err(Error::invalid("m", format!("needs m >= 10, got {m}")));
    }
    if k == 0 || k > 10 {
        return Err(Error::invalid("k", format!("must satisfy 1 <= k <= 10, got {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Planted block: a random 10 x k orthonormal basis of the support.
    let block = StiefelFrame::random(10, k, &mut rng);
    let mut v = DMatrix::zeros(m, m);
    for j in 0..k {
        for i in 0..10 {
            v[(i, j)] = block.as_matrix()[(i, j)];
        }
    }
    // Completion seed is derived so the block and the completion differ.
    let v = complete_frame(v, k, seed.wrapping_add(0x9e3779b97f4a7c15))?;
    let mut lambda = vec![1.0; m];
    for (j, l) in lambda.iter_mut().enumerate().take(k) {
        *l = 100.0 * (k - j) as f64;
    }
    Ok(CovModel {
        v,
        lambda,
        sparse_support: (0..k).map(|j| (j, (0..10).collect())).collect(),
    })
}

/// Draws `n` independent rows from `N(0, Sigma)` as `Z diag(sqrt(lambda)) V^T`
/// with `Z` standard normal filled row by row. Same seed, same bytes.
pub fn sample(model: &CovModel, n: usize, seed: u64) -> Result<DataMatrix> {
    if n == 0 {
        return Err(Error::invalid("n", "needs at least one sample"));
    }
    let m = model.m();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z: DMatrix<f64> = DMatrix::zeros(n, m);
    for i in 0..n {
        for j in 0..m {
            z[(i, j)] = rng.sample(StandardNormal);
        }
    }
    let sqrt_lambda = DVector::from_iterator(m, model.lambda.iter().map(|l| l.sqrt()));
    for j in 0..m {
        z.column_mut(j).scale_mut(sqrt_lambda[j]);
    }
    DataMatrix::new(z * model.v.as_matrix().transpose())
}
