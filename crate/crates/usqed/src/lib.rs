//! Numerical toolkit for ultrastrong-coupling (USC) cavity QED.
//!
//! The crate is organized around a small set of currencies:
//!
//! - [`qops::Operator`]: a dense complex matrix tagged with its
//!   truncated-Fock Hilbert-space layout.
//! - [`numkern::EigenSystem`]: the dressed basis consumed by every
//!   open-system operation.
//! - [`open::LindbladGenerator`]: effective Hamiltonian plus jump
//!   operators plus the superoperator they induce.
//!
//! Modules:
//!
//! - [`qops`]: truncated-Fock operator algebra and model Hamiltonians
//!   (quantum Rabi, Jaynes-Cummings, Hopfield, spin-boson).
//! - [`numkern`]: dense eigensolvers, linear solves, root finding,
//!   derivative-free minimization, adaptive ODE propagation.
//! - [`spectra`]: closed-system spectral methods (exact diagonalization
//!   with cutoff convergence, JC closed form, Bloch-Siegert, GRWA,
//!   variational polaron families, Braak G-function spectrum).
//! - [`open`]: dressed-basis Lindblad master equations, steady states,
//!   input-output fields, photodetection, correlation functions,
//!   Hopfield Langevin linear response.
//! - [`floquet`]: Floquet-Liouville and Floquet-Markov treatment of
//!   monochromatic drives.
//! - [`gauge`]: dipole- vs Coulomb-gauge Rabi Hamiltonians and
//!   Taylor-order break-down monitoring.
//! - [`cli`]: batch front door over JSON configs producing CSV/JSON.
//!
//! All frequencies are unitless (units of a reference frequency, hbar = 1).

pub mod cli;
pub mod error;
pub mod floquet;
pub mod gauge;
pub mod numkern;
pub mod open;
pub mod qops;
pub mod spectra;

pub use error::Error;

pub type Result<T> = std::result::Result<T, Error>;
