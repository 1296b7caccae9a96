//! Estimation and lag-order identification of VAR models whose innovations
//! have a deterministic time-varying (unconditional) covariance.
//!
//! The library provides
//! - stable VAR process types and a simulator driven by a deterministic
//!   variance path `r -> Sigma(r)` on rescaled time ([`varproc`]),
//! - kernel smoothing of residual outer products with cross-validated
//!   bandwidth ([`kernel`]),
//! - OLS, GLS and adaptive (ALS) coefficient estimation together with the
//!   asymptotic covariance estimators for all three ([`estimation`]),
//! - Akaike-type order selection with heteroscedasticity-aware likelihoods
//!   ([`selection`]),
//! - partial autoregressive and partial cross-correlation matrices with
//!   standard, OLS-corrected, adaptive and oracle confidence bounds
//!   ([`partial`]),
//! - a replication harness producing selection-frequency and
//!   bounds-rejection tables ([`montecarlo`]).
//!
//! All numerics are generic over the scalar type through [`Scalar`];
//! `f64` aliases for the main entry points live at the crate root.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use nalgebra::RealField;
use num_traits::{Float, FromPrimitive, ToPrimitive};
use rand_distr::StandardNormal;

pub mod error;
pub mod estimation;
pub mod kernel;
pub mod linalg;
pub mod montecarlo;
pub mod partial;
pub mod selection;
pub mod varproc;

pub use error::{Error, Result};

/// Ability to draw standard normal variates of this type.
pub trait SampleStandardNormal: Sized {
    fn sample_standard_normal<R: rand::Rng + ?Sized>(rng: &mut R) -> Self;
}

impl SampleStandardNormal for f32 {
    fn sample_standard_normal<R: rand::Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample(StandardNormal)
    }
}

impl SampleStandardNormal for f64 {
    fn sample_standard_normal<R: rand::Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample(StandardNormal)
    }
}

/// Floating-point scalar usable throughout the library.
///
/// In practice this is `f32` or `f64`; the blanket impl picks up any type
/// with the required arithmetic, conversion and sampling support.
pub trait Scalar:
    RealField
    + Float
    + FromPrimitive
    + ToPrimitive
    + SampleStandardNormal
    + Copy
    + Default
    + Debug
    + Display
    + Sum<Self>
    + for<'a> Sum<&'a Self>
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`, for constants and tolerances.
    fn from_f64_lossy(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("f64 constant must convert")
    }

    /// Conversion from a count.
    fn from_usize_lossy(v: usize) -> Self {
        <Self as FromPrimitive>::from_usize(v).expect("usize must convert")
    }
}

impl<T> Scalar for T where
    T: RealField
        + Float
        + FromPrimitive
        + ToPrimitive
        + SampleStandardNormal
        + Copy
        + Default
        + Debug
        + Display
        + Sum<T>
        + for<'a> Sum<&'a T>
        + Send
        + Sync
        + 'static
{
}

/// `f64` aliases for the main entry types.
pub type VarModel64 = varproc::VarModel<f64>;
pub type VariancePath64 = varproc::VariancePath<f64>;
pub type TimeSeries64 = varproc::TimeSeries<f64>;
pub type EstimationResult64 = estimation::EstimationResult<f64>;
pub type SelectionReport64 = selection::SelectionReport<f64>;
pub type ExperimentSpec64 = montecarlo::ExperimentSpec<f64>;
