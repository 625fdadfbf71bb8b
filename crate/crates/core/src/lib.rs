//! Radical-pair spin dynamics.
//!
//! Two contending master equations for the spin density matrix of a
//! radical pair are provided: the traditional anticommutator form
//! ([`Theory::Haberkorn`]) and the measurement-based form with a dephasing
//! Lindblad term and coherence-weighted reaction terms
//! ([`Theory::Kominis`]). On top of the time integration sit
//!
//! * [`entropy`]: von Neumann entropies before and after the singlet/triplet
//!   "measurement" performed by recombination, and the Ozawa and
//!   Lanford-Robinson bound audits,
//! * [`groenewold`]: the time-integrated extracted information, reaction
//!   yields and magnetic-field sweeps,
//! * [`liouville`]: the superoperator of the non-reacting evolution law and
//!   its spectral decomposition.
//!
//! All energies and rates are measured in units of the reference hyperfine
//! constant `A` (so `A = 1`), and times in units of `1/A`.

pub mod entropy;
pub mod error;
pub mod groenewold;
pub mod integrator;
pub mod liouville;
pub mod master;
pub mod spin;

pub use error::{Error, Result};
pub use integrator::{integrate, IntegratorSettings, Quadrature, TrajectoryRecord};
pub use master::{DensityMatrix, MasterEquation, ReactionParams, StepStats, Theory};
pub use spin::{Operator, Projectors, SpinSystem};

/// Complex scalar used for every operator in the crate.
pub type C64 = num_complex::Complex64;
