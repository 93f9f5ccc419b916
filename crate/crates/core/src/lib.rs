//! Generalized SVD for nonlinear maps.
//!
//! A bounded-gain map `f: R^m -> R^n` factors as `f = U Σ v`, where `U` is a
//! permutation, `Σ = [diag(σ) | 0]` is rectangular-diagonal, and `v` is an
//! injective norm-preserving lift into `R^(m+n)`. This crate builds that
//! factorization from black-box queries, trains small norm-preserving
//! classifiers whose head exposes the same structure, and uses the
//! decomposition for validation, latent traversals, directional black-box
//! attacks, and head-spectrum bias analysis.

pub mod analysis;
pub mod attack;
pub mod blackbox;
pub mod config;
pub mod dataset;
pub mod demo;
pub mod error;
pub mod gsvd;
pub mod numerics;
pub mod pgm;
pub mod runner;
pub mod svdnet;
pub mod traversal;

pub use analysis::{BiasReport, ValidationReport};
pub use attack::{AttackConfig, AttackResult};
pub use blackbox::BlackBox;
pub use config::RunConfig;
pub use dataset::Dataset;
pub use error::{Error, Result};
pub use gsvd::{GsvdModel, LiftedPoint};
pub use numerics::{Matrix, SvdFactors};
pub use svdnet::{NetShape, SvdNet, TrainConfig};
