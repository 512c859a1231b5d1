//! Hybrid Clifford measurement circuits and their classical plaquette-model
//! counterpart.
//!
//! The crate is organised bottom-up:
//!
//! * [`f2`]: bit-packed linear algebra over GF(2).
//! * [`stabilizer`]: Clifford tableaux for `2L`-qubit chains.
//! * [`circuit`]: the measurement circuit, its observables and the export of
//!   measurement patterns as classical disorder.
//! * [`plaquette`]: parity-check systems, symmetry groups and the cellular
//!   automaton.
//! * [`replica`]: Rényi-2 entropy from replica ground-state counting and from
//!   single-copy group data.
//! * [`kw`]: Kramers-Wannier duality and finite-temperature partition functions.
//! * [`glassy`]: rejection-free kinetic Monte Carlo on the plaquette model.
//! * [`experiment`]: configuration, seeded ensembles and artifact output.

pub mod f2;
pub mod stabilizer;
pub mod plaquette;
pub mod circuit;
pub mod seed;
pub mod stats;
pub mod replica;
pub mod kw;
pub mod glassy;
pub mod experiment;
