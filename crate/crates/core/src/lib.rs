//! Learned graph Q-heuristics and Monte-Carlo tree search for online
//! capacitated vehicle routing and parallel machine scheduling.

pub mod baselines;
pub mod bench;
pub mod cvrp;
pub mod dqn;
pub mod error;
pub mod graph;
pub mod heuristic;
pub mod io;
pub mod mcts;
pub mod mdp;
pub mod nn;
pub mod pmsp;
pub mod rng;

pub use error::{Error, Result};
pub use mdp::{Action, Environment, Transition};
