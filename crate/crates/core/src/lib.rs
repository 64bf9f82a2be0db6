//! Ensemble-averaged dynamics of finite quantum systems subject to static
//! diagonal noise.
//!
//! Two independent routes to the averaged density matrix are provided:
//!
//! * [`generator`]: a first-order (in the coupling strength) master equation
//!   with time-dependent decoherence rates built from the characteristic
//!   functions of pairwise eigenvalue differences ([`rates`], [`noise`]).
//! * [`oracle`]: brute-force Monte Carlo averaging of unitary trajectories,
//!   one Hermitian eigendecomposition per noise realization.
//!
//! [`models`] builds the qubit, tilted-lattice and Bose-Hubbard double-well
//! ensembles consumed by both; [`validation`] cross-checks the generator
//! against numerically estimated dynamical matrices.
//!
//! Units: `ħ = 1` and the reference frequency `ω0 = 1`, so energies are
//! multiples of `ħω0` and times are in units of `1/ω0`.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod ensemble;
pub mod error;
pub mod generator;
pub mod models;
pub mod noise;
pub mod ode;
pub mod oracle;
pub mod quantum;
pub mod rates;
pub mod validation;

pub use error::{Error, Result};
pub use quantum::{CMatrix, DensityMatrix, HermitianOperator, C64};
