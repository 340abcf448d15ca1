//! Multidimensional item response theory (MIRT) engine.
//!
//! Provides the two classical MIRT model families (compensatory 2PL and
//! non-compensatory), marginal maximum likelihood estimation of the
//! compensatory model via EM with Gauss-Hermite quadrature, MAP skill
//! estimation, simulation designs for misspecification studies, and the
//! diagnostics built on top of them: gradient-based skill difference
//! analysis and sandwich asymptotic variances of item parameters.

pub mod bias;
pub mod datagen;
pub mod error;
pub mod estimation;
pub mod marginal;
pub mod model;
mod numeric;
pub mod quadrature;
pub mod variance;

pub use error::{Error, Result};
