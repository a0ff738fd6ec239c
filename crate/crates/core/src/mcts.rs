//! Anytime UCT with top-k pruning and a heuristic out-of-tree policy.
//!
//! Each rollout starts from the root snapshot, re-draws the unseen future
//! (online only), descends the tree with UCB, and continues greedily with the
//! heuristic once it leaves the tree. At most one new state is added per
//! rollout.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heuristic::{best_index, Heuristic};
use crate::mdp::{Action, Environment};
use crate::rng::{self, streams, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub rollouts: usize,
    pub time_budget: Option<f64>,
    pub beta: f64,
    /// Number of highest-scoring actions searched; `None` keeps all.
    pub prune_k: Option<usize>,
    pub gamma: f64,
    /// Arrivals later than `root clock + preemption` are dropped in rollouts.
    pub preemption: f64,
    /// Multiply `beta` by the absolute return of the first rollout, which
    /// puts the exploration term on the scale of the objective.
    #[serde(default)]
    pub relative_beta: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            rollouts: 1000,
            time_budget: None,
            beta: 1.4,
            prune_k: None,
            gamma: 1.0,
            preemption: f64::INFINITY,
            relative_beta: false,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.prune_k == Some(0) {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if !(self.beta >= 0.0) || !(0.0..=1.0).contains(&self.gamma) || !(self.preemption >= 0.0) {
            return Err(Error::Config("beta, gamma or preemption window out of range".into()));
        }
        if self.rollouts == 0 || self.time_budget.is_some_and(|t| !(t > 0.0)) {
            return Err(Error::Config("budgets must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TreeNode {
    pub actions: Vec<Action>,
    pub qtilde: Vec<f64>,
    pub visits: u64,
    pub action_visits: Vec<u64>,
    pub q: Vec<f64>,
}

impl TreeNode {
    fn new(actions: Vec<Action>, qtilde: Vec<f64>) -> Self {
        let n = actions.len();
        TreeNode {
            actions,
            qtilde,
            visits: 0,
            action_visits: vec![0; n],
            q: vec![0.0; n],
        }
    }

    fn credit(&mut self, slot: usize, ret: f64) {
        self.visits += 1;
        self.action_visits[slot] += 1;
        let n = self.action_visits[slot] as f64;
        self.q[slot] = (n - 1.0) / n * self.q[slot] + ret / n;
    }
}

/// Visit statistics keyed by state.
#[derive(Debug, Clone, Default)]
pub struct SearchTree {
    pub nodes: HashMap<u64, TreeNode>,
}

/// Indices of the `k` highest finite scores, ties to the lower index, in
/// index order.
pub fn prune(scores: &[f64], k: Option<usize>) -> Vec<usize> {
    let mut open: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] > f64::NEG_INFINITY).collect();
    if let Some(k) = k {
        if k < open.len() {
            open.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
            open.truncate(k);
            open.sort_unstable();
        }
    }
    open
}

/// Unsampled actions first (highest score, then lowest slot); otherwise the
/// UCB maximiser.
pub fn ucb_select(node: &TreeNode, beta: f64) -> usize {
    let unsampled = (0..node.actions.len())
        .filter(|&i| node.action_visits[i] == 0)
        .fold(None, |best: Option<usize>, i| match best {
            Some(b) if node.qtilde[b] >= node.qtilde[i] => Some(b),
            _ => Some(i),
        });
    if let Some(i) = unsampled {
        return i;
    }
    let ln_n = (node.visits as f64).ln();
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for i in 0..node.actions.len() {
        let v = node.q[i] + beta * (ln_n / node.action_visits[i] as f64).sqrt();
        if v > best_val {
            best = i;
            best_val = v;
        }
    }
    best
}

/// Step of one rollout: the state key, the action slot chosen in the tree
/// node (or the out-of-tree pruned set) and the reward.
struct Step {
    key: u64,
    action: Action,
    reward: f64,
}

/// Folds the returns backwards and credits steps up to and including
/// `t_out`; the state at `t_out` is added with `fresh` as its action set.
fn update_tree(tree: &mut SearchTree, steps: &[Step], t_out: Option<(usize, Vec<Action>, Vec<f64>)>, gamma: f64) {
    let (limit, fresh) = match t_out {
        Some((t, actions, qt)) => (t, Some((actions, qt))),
        None => (steps.len().saturating_sub(1), None),
    };
    let mut fresh = fresh;
    let mut ret = 0.0;
    for (i, st) in steps.iter().enumerate().rev() {
        ret = st.reward + gamma * ret;
        if i > limit {
            continue;
        }
        let node = tree.nodes.entry(st.key).or_insert_with(|| {
            let (actions, qt) = fresh.take().expect("only the frontier state is new");
            TreeNode::new(actions, qt)
        });
        if let Some(slot) = node.actions.iter().position(|&a| a == st.action) {
            node.credit(slot, ret);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchStats {
    pub rollouts: usize,
    pub elapsed: Duration,
    pub tree_size: usize,
}

pub struct Mcts {
    pub config: SearchConfig,
    pub heuristic: Arc<dyn Heuristic>,
}

impl Mcts {
    pub fn new(config: SearchConfig, heuristic: Arc<dyn Heuristic>) -> Result<Self> {
        config.validate()?;
        Ok(Mcts { config, heuristic })
    }

    /// Runs one search from `root` and returns the chosen action along with
    /// the tree that produced it.
    pub fn search_with_tree<E: Environment>(&self, root: &E, seed: u64) -> Result<(Action, SearchTree, SearchStats)> {
        let start = Instant::now();
        let feasible = root.feasible_actions();
        let mut tree = SearchTree::default();
        match feasible.len() {
            0 => return Err(Error::MaskingViolation("search root has no feasible action".into())),
            1 => {
                let stats = SearchStats {
                    rollouts: 0,
                    elapsed: start.elapsed(),
                    tree_size: 0,
                };
                return Ok((feasible[0], tree, stats));
            }
            _ => {}
        }
        let mut rng = rng::stream(seed, streams::SEARCH);
        let root_key = root.state_key();
        let snapshot = root.snapshot();
        let horizon = root.clock() + self.config.preemption;
        let mut env = root.clone();
        let mut beta = self.config.beta;
        let mut done = 0;
        while done < self.config.rollouts {
            if let Some(limit) = self.config.time_budget {
                if done > 0 && start.elapsed().as_secs_f64() > limit {
                    break;
                }
            }
            env.restore(&snapshot);
            if env.is_online() {
                env.set_seed(rng::mix(seed, done as u64));
                env.suppress_arrivals_after(horizon);
            }
            match self.rollout(&mut env, &mut tree, beta, &mut rng) {
                Ok(ret) => {
                    if done == 0 && self.config.relative_beta && ret.abs() > 0.0 {
                        beta = self.config.beta * ret.abs();
                    }
                }
                Err(e) => log::warn!("rollout {done} discarded: {e}"),
            }
            done += 1;
        }
        let action = match tree.nodes.get(&root_key) {
            Some(node) => {
                let mut best: Option<usize> = None;
                for i in 0..node.actions.len() {
                    if node.action_visits[i] == 0 {
                        continue;
                    }
                    best = match best {
                        None => Some(i),
                        Some(b) => {
                            let better = node.q[i] > node.q[b] || (node.q[i] == node.q[b] && node.qtilde[i] > node.qtilde[b]);
                            Some(if better { i } else { b })
                        }
                    };
                }
                best.map(|i| node.actions[i])
            }
            None => None,
        };
        let action = match action {
            Some(a) => a,
            None => {
                // Every rollout failed; fall back to the heuristic.
                let g = root.graph();
                let s = self.heuristic.scores(&g, &mut rng)?;
                g.actions[best_index(&s).ok_or_else(|| Error::Internal("heuristic found no action".into()))?]
            }
        };
        let stats = SearchStats {
            rollouts: done,
            elapsed: start.elapsed(),
            tree_size: tree.nodes.len(),
        };
        Ok((action, tree, stats))
    }

    pub fn search<E: Environment>(&self, root: &E, seed: u64) -> Result<Action> {
        Ok(self.search_with_tree(root, seed)?.0)
    }

    fn rollout<E: Environment>(&self, env: &mut E, tree: &mut SearchTree, beta: f64, rng: &mut Rng) -> Result<f64> {
        let mut steps = Vec::new();
        let mut frontier: Option<(usize, Vec<Action>, Vec<f64>)> = None;
        while !env.is_terminal() {
            let key = env.state_key();
            let in_tree = if frontier.is_none() { tree.nodes.get(&key) } else { None };
            // Under a re-drawn future, waiting may be impossible in a state
            // whose stored action set offers it.
            let chosen = in_tree
                .map(|node| node.actions[ucb_select(node, beta)])
                .filter(|a| !env.is_online() || env.feasible_actions().contains(a));
            let action = match chosen {
                Some(a) => a,
                None => {
                    let g = env.graph();
                    let scores = self.heuristic.scores(&g, rng)?;
                    let best = best_index(&scores).ok_or_else(|| Error::Internal("heuristic found no action".into()))?;
                    if frontier.is_none() {
                        let kept = prune(&scores, self.config.prune_k);
                        frontier = Some((
                            steps.len(),
                            kept.iter().map(|&i| g.actions[i]).collect(),
                            kept.iter().map(|&i| scores[i]).collect(),
                        ));
                    }
                    g.actions[best]
                }
            };
            let tr = env.step(action)?;
            steps.push(Step {
                key,
                action,
                reward: tr.reward,
            });
        }
        let total = crate::mdp::discounted_return(&steps.iter().map(|s| s.reward).collect::<Vec<_>>(), self.config.gamma);
        if !steps.is_empty() {
            update_tree(tree, &steps, frontier, self.config.gamma);
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(q: &[f64], n: &[u64], qt: &[f64]) -> TreeNode {
        TreeNode {
            actions: (0..q.len()).map(|i| Action::Edge(0, i)).collect(),
            qtilde: qt.to_vec(),
            visits: n.iter().sum(),
            action_visits: n.to_vec(),
            q: q.to_vec(),
        }
    }

    #[test]
    fn prune_examples() {
        assert_eq!(prune(&[3.0, 9.0, 5.0], Some(2)), vec![1, 2]);
        assert_eq!(prune(&[3.0, 9.0, 5.0], Some(5)), vec![0, 1, 2]);
        assert_eq!(prune(&[1.0, 1.0, 1.0], Some(2)), vec![0, 1]);
        assert_eq!(prune(&[1.0, f64::NEG_INFINITY, 0.5], None), vec![0, 2]);
    }

    #[test]
    fn ucb_examples() {
        assert_eq!(ucb_select(&node(&[-1.0, -2.0], &[3, 3], &[0.0, 0.0]), 0.0), 0);
        // Bonus sqrt(ln 11 / 1) beats sqrt(ln 11 / 10).
        assert_eq!(ucb_select(&node(&[-1.0, -1.0], &[10, 1], &[0.0, 0.0]), 1.0), 1);
        assert_eq!(ucb_select(&node(&[5.0, 0.0, 0.0], &[4, 0, 0], &[0.0, 1.0, 2.0]), 1.0), 2);
        assert_eq!(ucb_select(&node(&[5.0, 0.0, 0.0], &[4, 0, 0], &[0.0, 1.0, 1.0]), 1.0), 1);
    }

    #[test]
    fn update_tree_means_and_discount() {
        let mut tree = SearchTree::default();
        let a = Action::Edge(0, 1);
        let steps = vec![Step { key: 7, action: a, reward: -2.0 }];
        update_tree(&mut tree, &steps, Some((0, vec![a], vec![0.0])), 1.0);
        assert_eq!(tree.nodes[&7].q[0], -2.0);
        let steps = vec![Step { key: 7, action: a, reward: -4.0 }];
        update_tree(&mut tree, &steps, None, 1.0);
        assert_eq!(tree.nodes[&7].q[0], -3.0);
        assert_eq!(tree.nodes[&7].visits, 2);

        let mut tree = SearchTree::default();
        let b = Action::Edge(0, 2);
        let steps = vec![
            Step { key: 1, action: a, reward: -1.0 },
            Step { key: 2, action: b, reward: -2.0 },
        ];
        update_tree(&mut tree, &steps, Some((0, vec![a], vec![0.0])), 0.5);
        assert_eq!(tree.nodes[&1].q[0], -2.0);
        assert!(!tree.nodes.contains_key(&2));
    }
}
