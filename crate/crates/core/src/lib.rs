//! Deterministic limiting spectra of Gram matrices `ΣΣᵀ` where `Σ = Y + Λ`,
//! `Y` has independent entries shaped by a variance profile `σ²(x, y)` and
//! `Λ` is a deterministic pseudo-diagonal mean.
//!
//! The crate is organised around the coupled kernel fixed point that
//! characterises the limit:
//!
//! | Module | Purpose |
//! |--------|---------|
//! | [`measures`] | variance profiles, the joint measure `H`, quadrature, complex kernels |
//! | [`master_solver`] | damped Picard iteration with imaginary-axis continuation |
//! | [`spectra`] | Stieltjes inversion, CDFs, mass and duality checks |
//! | [`closed_forms`] | Marchenko–Pastur, i.i.d. non-centred and centred-profile oracles |
//! | [`rmt_simulator`] | finite random matrices, resolvents, KS distances |
//! | [`capacity`] | normalised log-det (MIMO capacity) statistics |
//!
//! The deterministic side is generic over the real scalar `T: Real` (`f32`
//! or `f64`); the `*64` aliases at the crate root fix `T = f64`. The
//! simulator is `f64` only.

// `!(x > 0)` guards also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt::{Debug, Display};

pub mod capacity;
pub mod closed_forms;
pub mod error;
pub mod master_solver;
pub mod measures;
pub mod rmt_simulator;
pub mod spectra;

pub use error::{Error, Result};

/// Real scalar used throughout the deterministic side.
pub trait Real:
    num_traits::Float
    + num_traits::FloatConst
    + num_traits::FromPrimitive
    + num_traits::NumAssign
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal; exact for `f64`, rounded for `f32`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Real for T where
    T: num_traits::Float
        + num_traits::FloatConst
        + num_traits::FromPrimitive
        + num_traits::NumAssign
        + Debug
        + Display
        + Default
        + Send
        + Sync
        + 'static
{
}

pub type Complex64 = num_complex::Complex<f64>;

pub type VarianceProfile64 = measures::VarianceProfile<f64>;
pub type JointLimitMeasure64 = measures::JointLimitMeasure<f64>;
pub type QuadratureRule64 = measures::QuadratureRule<f64>;
pub type ComplexKernel64 = measures::ComplexKernel<f64>;
pub type MasterSystem64 = master_solver::MasterSystem<f64>;
pub type SolverOptions64 = master_solver::SolverOptions<f64>;
pub type SolveReport64 = master_solver::SolveReport<f64>;
pub type DensityCurve64 = spectra::DensityCurve<f64>;
pub type GridCdf64 = spectra::GridCdf<f64>;

pub type VarianceProfile32 = measures::VarianceProfile<f32>;
pub type JointLimitMeasure32 = measures::JointLimitMeasure<f32>;
pub type MasterSystem32 = master_solver::MasterSystem<f32>;
pub type SolverOptions32 = master_solver::SolverOptions<f32>;
