//! Optimal strategies for online prediction with history-dependent experts.
//!
//! The library has five layers:
//!
//! - [`digraph`] — de Bruijn graphs and general labeled out-degree-2
//!   digraphs: successors, Eulerian circuits, simple-cycle enumeration.
//! - [`calculus`] — discrete gradient/Laplacian/mean and two independent
//!   solvers for the graph Poisson equation.
//! - [`corrector`] — the Poisson-based corrector and cycle-based
//!   linear-program indifference certificates.
//! - [`value`] — the closed-form / quadrature continuum value for two
//!   experts, with the optimal investor and market strategies built on it.
//! - [`game`] — the discrete N-step game: exact small-horizon minimax
//!   oracle, strategy-vs-strategy simulation, and convergence-rate
//!   experiments.

pub mod calculus;
pub mod corrector;
pub mod digraph;
pub mod error;
pub mod game;
pub mod selftest;
pub mod value;

pub use digraph::{Cycle, Edge, EdgeId, LabeledDigraph, MarketState, NodeId, Sign};
pub use error::{Error, Result};
