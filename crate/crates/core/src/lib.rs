//! Adiabatic dynamics in the U(1)-invariant adiabatic basis.
//!
//! The crate follows one pipeline:
//!
//! 1. a [`HamiltonianModel`] supplies a dimensionless Hermitian `h(τ)`,
//! 2. [`spectrum`] solves the instantaneous eigenproblem on a [`TimeGrid`],
//!    tracks level labels and fixes the gauge, then builds the nonadiabatic
//!    coupling `γ_nm = i⟨φ_n|∂τ φ_m⟩`,
//! 3. [`frame`] dresses the eigenvectors into the invariant basis and builds
//!    the coupling matrix `M(τ)`,
//! 4. [`propagate`] integrates both the Schrödinger equation and `ċ = iMc`,
//! 5. [`perturb`] and [`fourier`] evaluate the approximate survival
//!    probabilities and the adiabaticity conditions.
//!
//! [`pipeline`] wires steps 1-4 together for the common case.

pub mod fourier;
pub mod frame;
pub mod grid;
pub mod linalg;
pub mod model;
pub mod numeric;
pub mod perturb;
pub mod pipeline;
pub mod propagate;
pub mod spectrum;

pub use frame::InvariantFrame;
pub use grid::TimeGrid;
pub use linalg::{CMatrix, CVector};
pub use model::HamiltonianModel;
pub use num_complex::Complex64 as C64;
pub use pipeline::{Analysis, PipelineOptions};
pub use spectrum::{AdiabaticSpectrum, Gauge, GammaMatrix, GammaMethod};
