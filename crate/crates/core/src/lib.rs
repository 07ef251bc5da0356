//! Distributed adaptation and learning over networks under subspace constraints.
//!
//! A network of `N` agents holds per-agent parameter blocks whose stacked
//! vector is required to lie in the range of a tall semi-unitary matrix `U`
//! (consensus, coupled/overlapping variables, graph smoothness, and affine
//! constraint sets all reduce to this form). Instead of projecting onto
//! `R(U)` at a fusion center, each agent mixes neighbor estimates through a
//! sparse combination matrix `A` whose powers converge to the projector
//! `U U*`. This crate provides:
//!
//! - the network/topology model and block-sparse matrices ([`topology`]),
//! - constraint-subspace constructors and projectors ([`subspace`]),
//! - verification and alternating-projection design of combination
//!   matrices ([`combiner`]),
//! - quadratic risks, streaming sample models and gradient-noise
//!   validators ([`costs`]),
//! - the centralized and distributed stochastic-gradient recursions
//!   ([`engine`]),
//! - mean-square-deviation and SINR estimators over Monte Carlo
//!   ensembles ([`metrics`]),
//! - a distributed minimum-variance beamforming scenario for uniform
//!   linear arrays ([`beamformer`]),
//! - seeded synthetic instances for experiments and tests ([`synth`]).
//!
//! The crate is `no_std` (with `alloc`); IO, configuration files and the
//! command-line harness live in the companion `netspan-cli` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod beamformer;
pub mod combiner;
pub mod costs;
pub mod engine;
mod error;
pub mod linalg;
pub mod metrics;
pub mod rng;
pub mod subspace;
pub mod synth;
pub mod topology;

pub use error::{Error, Result};

/// Scalar type used throughout: double-precision complex.
pub type C64 = num_complex::Complex<f64>;
/// Dense dynamically-sized complex matrix.
pub type CMatrix = nalgebra::DMatrix<C64>;
/// Dense dynamically-sized complex column vector.
pub type CVector = nalgebra::DVector<C64>;

/// Shorthand for a real `C64` scalar.
#[inline]
pub fn cr(re: f64) -> C64 {
    C64::new(re, 0.0)
}
