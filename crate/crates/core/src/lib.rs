//! Mean field games on finite state spaces whose transport geometry comes
//! from a reversible Markov chain.
//!
//! The crate builds the weighted graph of a reversible chain, evaluates
//! nonlinear activation functions on its edges, integrates the associated
//! gradient flows, and solves potential and general mean field games together
//! with their master equations. Two-state problems reduce to a scalar
//! Hamiltonian system with semi-analytic solutions, which double as oracles
//! for the general solvers.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod activation;
pub mod coupling;
pub mod error;
pub mod flow;
pub mod graph;
pub mod lagrangian;
pub mod master;
pub mod mfg;
pub mod quadrature;
pub mod twopoint;

pub use nalgebra::DMatrix;

pub use activation::{Activation, ActivationKind, DissipationPsiStar, GeneratorPhi};
pub use coupling::{Coupling, FnCoupling, QuadraticCoupling, TabulatedCoupling, ZeroCoupling};
pub use error::{Error, Result};
pub use flow::FlowTrajectory;
pub use graph::{Density, Edge, EdgeField, MarkovGraph, NodeFunction};
pub use lagrangian::{LagrangianPair, Lagrangians};
pub use mfg::{Diagnostics, FluxVariables, MfgProblem, MfgSolution, Terminal};
pub use twopoint::{GameGuess, GameSolution, ReducedTrajectory, TwoPointProblem};
pub use master::{MasterField, MasterOptions, NodeFailure, UGrid};
