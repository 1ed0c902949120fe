//! Numerical laboratory for the four-agent 2-cycles directed formation.
//!
//! Agent 1 follows agents 2 and 4, agents 2 and 4 follow agent 3, and agent 3
//! follows agent 1. The crate provides the closed-loop dynamics, its
//! linearization at equilibria, the determinant factorization of the reduced
//! Jacobian, equilibrium solving and continuation, and bifurcation checks.

pub mod control_laws;
pub mod dynamics;
pub mod equilibria;
pub mod factorization;
pub mod geometry;
pub mod linearization;

pub use control_laws::{ControlLaw, LocalGains, PerturbationSpec};
pub use geometry::{Framework, GaugeChart, TargetsSquared, Vec2};
