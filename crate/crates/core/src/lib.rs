//! Simulation and verification toolkit for weakly asymmetric long-range
//! exclusion processes and their stochastic Burgers limit.

pub mod dynamics;
pub mod farm;
pub mod fields;
pub mod kernel;
pub mod lattice;
pub mod rng;
pub mod sbe;
pub mod stats;
pub mod testfn;
pub mod verify;
