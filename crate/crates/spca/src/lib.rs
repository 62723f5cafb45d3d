//! Orthogonal sparse eigenvector extraction and sparse-eigenvector
//! covariance estimation.
//!
//! The crate provides three solvers built on a common core:
//!
//! - [`imrp`]: extracts `q` mutually orthogonal sparse loading vectors from a
//!   covariance matrix by majorize-minimize steps whose inner problem is an
//!   orthogonal Procrustes alignment.
//! - [`covest::aoce`]: maximum-likelihood covariance estimation with sparse
//!   leading eigenvectors, alternating between an ordered-eigenvalue solve
//!   and a Procrustes update of the eigenvector frame.
//! - [`covest::joce`]: the same model solved by a joint majorizer that
//!   updates eigenvalues and eigenvectors from one linearization point.
//!
//! Supporting modules: [`matrix`] (validated wrappers and deterministic
//! factorizations), [`penalty`] (smoothed cardinality surrogate and its
//! reweighting), [`procrustes`] (Stiefel-constrained trace optimization),
//! [`spectrum`] (ordered spectrum solvers via block pooling), [`synth`]
//! (synthetic covariance models), [`metrics`] (evaluation criteria), and
//! [`oracle`] (independent brute-force reference solvers used for
//! verification).

pub mod covest;
pub mod error;
pub mod imrp;
pub mod io;
pub mod matrix;
pub mod metrics;
pub mod oracle;
pub mod penalty;
pub mod procrustes;
pub mod spectrum;
pub mod synth;

pub use error::{Error, Result};
