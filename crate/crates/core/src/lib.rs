//! Simulation of a transactive local energy market in which every building
//! plans its battery schedule against the others' through iterated best
//! responses, and a uniform-price double auction settles each step.

pub mod battery;
pub mod config;
pub mod domain;
pub mod equilibrium;
pub mod error;
pub mod ingest;
pub mod market;
pub mod mdp;
pub mod metrics;
pub mod report;
pub mod simulate;
pub mod solver;

pub use error::{Error, Result};
