//! Finite-horizon MDP contracts shared by the simulators, the trainer and the
//! tree search.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::StateGraph;

/// An action is an edge of the current state graph or the explicit wait.
///
/// Edge endpoints are node indices of the graph produced by
/// [`Environment::graph`] for the state the action is applied to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    Edge(usize, usize),
    Noop,
}

impl std::fmt::Display for Action {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Action::Edge(s, t) => write!(f, "{s}>{t}"),
            Action::Noop => write!(f, "noop"),
        }
    }
}

impl std::str::FromStr for Action {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "noop" {
            return Ok(Action::Noop);
        }
        let (a, b) = s
            .split_once('>')
            .ok_or_else(|| Error::Parse(format!("bad action token {s:?}")))?;
        let parse = |t: &str| {
            t.parse::<usize>()
                .map_err(|_| Error::Parse(format!("bad action token {s:?}")))
        };
        Ok(Action::Edge(parse(a)?, parse(b)?))
    }
}

/// One environment step. `before`/`after` are canonical state keys.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub before: u64,
    pub action: Action,
    /// Negative objective increment, `f(after) - f(before)`.
    pub reward: f64,
    pub after: u64,
    pub terminal: bool,
    /// Simulation time that passed during the step.
    pub elapsed: f64,
}

/// Behavioural contract of a simulator.
///
/// Implementations are single-writer. Snapshots are plain values and may be
/// shared across threads.
pub trait Environment: Clone + Send + Sync {
    type Snapshot: Clone + Send + Sync;

    /// Returns to the initial state of the instance.
    fn reset(&mut self);
    fn graph(&self) -> StateGraph;
    fn feasible_actions(&self) -> Vec<Action>;
    fn step(&mut self, action: Action) -> Result<Transition>;
    fn snapshot(&self) -> Self::Snapshot;
    fn restore(&mut self, snapshot: &Self::Snapshot);
    /// Replaces every not-yet-revealed arrival with a fresh draw from the
    /// instance's arrival model. No effect on offline instances.
    fn set_seed(&mut self, seed: u64);
    /// Drops pending future arrivals later than `horizon`.
    fn suppress_arrivals_after(&mut self, horizon: f64);
    fn is_terminal(&self) -> bool;
    fn is_online(&self) -> bool;
    /// Objective of the current partial solution (a cost, so nonnegative).
    fn objective(&self) -> f64;
    fn clock(&self) -> f64;
    /// Hash of the canonical observable state.
    fn state_key(&self) -> u64;
}

/// `sum_i gamma^i * rewards[i]`.
pub fn discounted_return(rewards: &[f64], gamma: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&gamma));
    rewards.iter().rev().fold(0.0, |acc, r| r + gamma * acc)
}

/// Sums the rewards of one complete episode after checking that the
/// transitions chain together and that only the last one is terminal.
pub fn telescoping_check(transitions: &[Transition]) -> Result<f64> {
    for (i, pair) in transitions.windows(2).enumerate() {
        if pair[0].after != pair[1].before || pair[0].terminal {
            return Err(Error::NonContiguousEpisode(i + 1));
        }
    }
    Ok(transitions.iter().map(|t| t.reward).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tr(before: u64, after: u64, reward: f64, terminal: bool) -> Transition {
        Transition {
            before,
            action: Action::Noop,
            reward,
            after,
            terminal,
            elapsed: 0.0,
        }
    }

    #[test]
    fn discounted_return_examples() {
        assert_eq!(discounted_return(&[], 1.0), 0.0);
        assert_eq!(discounted_return(&[-1.0, -2.0, -3.0], 1.0), -6.0);
        assert!((discounted_return(&[-1.0, -2.0, -3.0], 0.9) - (-5.23)).abs() < 1e-12);
    }

    #[test]
    fn telescoping_single_step() {
        let sum = telescoping_check(&[tr(1, 2, -3.5, true)]).unwrap();
        assert_eq!(sum, -3.5);
    }

    #[test]
    fn telescoping_rejects_gaps() {
        let err = telescoping_check(&[tr(1, 2, -1.0, false), tr(3, 4, -1.0, true)]);
        assert!(matches!(err, Err(Error::NonContiguousEpisode(1))));
        let err = telescoping_check(&[tr(1, 2, -1.0, true), tr(2, 4, -1.0, true)]);
        assert!(err.is_err());
    }

    #[test]
    fn action_text_round_trip() {
        for a in [Action::Noop, Action::Edge(0, 7), Action::Edge(12, 3)] {
            assert_eq!(a.to_string().parse::<Action>().unwrap(), a);
        }
        assert!("3-4".parse::<Action>().is_err());
    }
}
