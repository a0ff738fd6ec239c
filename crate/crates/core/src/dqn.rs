//! Offline DQN over state graphs: replay (optionally prioritized), ε-greedy
//! exploration, periodic target sync, squared TD loss.

use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::StateGraph;
use crate::mdp::Environment;
use crate::nn::{clip_global_norm, Mat, Optimizer, OptimizerKind, QNet};
use crate::rng::{self, streams, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DqnConfig {
    pub total_steps: usize,
    pub target_update_freq: usize,
    pub initial_random_steps: usize,
    pub learning_starts: usize,
    pub train_frequency: usize,
    pub gamma: f64,
    pub batch_size: usize,
    pub buffer_size: usize,
    pub per_alpha: f64,
    pub per_beta0: f64,
    pub per_eps: f64,
    pub exploration_fraction: f64,
    pub final_epsilon: f64,
    pub learning_rate: f64,
    /// Multiplicative decay reached at the last step; 0 keeps the rate fixed.
    pub lr_decay: f64,
    pub grad_clip: f64,
    pub double_q: bool,
    pub n_step: usize,
    pub optimizer: OptimizerKind,
    /// Rewards are multiplied by this before entering the TD target.
    pub reward_scale: f64,
    pub eval_every: usize,
    pub eval_episodes: usize,
}

impl Default for DqnConfig {
    fn default() -> Self {
        DqnConfig {
            total_steps: 100_000,
            target_update_freq: 5_000,
            initial_random_steps: 5_000,
            learning_starts: 5_000,
            train_frequency: 1,
            gamma: 1.0,
            batch_size: 32,
            buffer_size: 5_000,
            per_alpha: 0.0,
            per_beta0: 0.4,
            per_eps: 1e-6,
            exploration_fraction: 0.3,
            final_epsilon: 0.1,
            learning_rate: 1e-3,
            lr_decay: 0.0,
            grad_clip: 200.0,
            double_q: false,
            n_step: 1,
            optimizer: OptimizerKind::Sgd,
            reward_scale: 1.0,
            eval_every: 1_000,
            eval_episodes: 10,
        }
    }
}

impl DqnConfig {
    pub fn cvrp() -> Self {
        DqnConfig {
            batch_size: 128,
            per_alpha: 0.025,
            exploration_fraction: 0.1,
            final_epsilon: 1e-4,
            ..Default::default()
        }
    }

    pub fn pmsp(online: bool) -> Self {
        DqnConfig {
            gamma: if online { 0.9 } else { 1.0 },
            reward_scale: 1e-3,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if self.batch_size == 0 || self.buffer_size == 0 || self.train_frequency == 0 || self.n_step == 0 {
            return bad("batch size, buffer size, train frequency and n-step must be positive");
        }
        if self.target_update_freq == 0 || self.eval_every == 0 {
            return bad("target update and evaluation intervals must be positive");
        }
        if !(0.0..=1.0).contains(&self.final_epsilon) || !(0.0..=1.0).contains(&self.exploration_fraction) {
            return bad("exploration parameters must lie in [0, 1]");
        }
        if !(self.learning_rate >= 0.0) || !(self.lr_decay >= 0.0) || !(self.grad_clip > 0.0) {
            return bad("learning rate, decay and clip must be nonnegative");
        }
        if !(self.per_alpha >= 0.0) || !(self.per_eps > 0.0) || !(0.0..=1.0).contains(&self.per_beta0) {
            return bad("invalid prioritized replay parameters");
        }
        if !(self.reward_scale > 0.0) {
            return bad("reward scale must be positive");
        }
        Ok(())
    }

    pub fn learning_rate_at(&self, step: usize) -> f64 {
        if self.lr_decay > 0.0 && self.total_steps > 0 {
            self.learning_rate * self.lr_decay.powf(step as f64 / self.total_steps as f64)
        } else {
            self.learning_rate
        }
    }
}

/// Linear decay from 1 to the final value over the exploration window.
pub fn epsilon(step: usize, config: &DqnConfig) -> f64 {
    let window = config.exploration_fraction * config.total_steps as f64;
    if window <= 0.0 || step as f64 >= window {
        return config.final_epsilon;
    }
    1.0 + (config.final_epsilon - 1.0) * step as f64 / window
}

/// `r + γ max_a' Q_target(s', a')` over unmasked `a'`, or `r` when terminal.
/// With `online_next` given, the maximizer is chosen by the online values.
pub fn td_target(
    reward: f64,
    gamma: f64,
    terminal: bool,
    target_next: &[f64],
    online_next: Option<&[f64]>,
    mask: &[bool],
) -> Result<f64> {
    if terminal || gamma == 0.0 {
        return Ok(reward);
    }
    let chooser = online_next.unwrap_or(target_next);
    let best = argmax_masked(chooser, mask)
        .ok_or_else(|| Error::Internal("nonterminal next state has no feasible action".into()))?;
    Ok(reward + gamma * target_next[best])
}

/// Index of the largest unmasked value; ties go to the lowest index.
pub fn argmax_masked(values: &[f64], mask: &[bool]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, (&v, &m)) in values.iter().zip(mask).enumerate() {
        if m && best.is_none_or(|b| v > values[b]) {
            best = Some(i);
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct Experience {
    pub graph: StateGraph,
    pub action: usize,
    /// Scaled, possibly multi-step discounted reward.
    pub reward: f64,
    pub next: StateGraph,
    pub terminal: bool,
    /// Discount applied to the bootstrap value.
    pub discount: f64,
}

/// Ring buffer with proportional prioritized sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    alpha: f64,
    items: Vec<Experience>,
    priorities: Vec<f64>,
    next: usize,
    max_priority: f64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, alpha: f64) -> Self {
        ReplayBuffer {
            capacity,
            alpha,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            priorities: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
            max_priority: 1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, i: usize) -> &Experience {
        &self.items[i]
    }

    pub fn push(&mut self, e: Experience) {
        if self.items.len() < self.capacity {
            self.items.push(e);
            self.priorities.push(self.max_priority);
        } else {
            self.items[self.next] = e;
            self.priorities[self.next] = self.max_priority;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Draws `n` indices with probability proportional to `priority^alpha`
    /// and returns them with importance weights normalised to max 1.
    pub fn sample(&self, n: usize, beta: f64, rng: &mut Rng) -> Vec<(usize, f64)> {
        let len = self.items.len();
        if self.alpha == 0.0 {
            return (0..n).map(|_| (rng.random_range(0..len), 1.0)).collect();
        }
        let mut cum = Vec::with_capacity(len);
        let mut total = 0.0;
        for p in &self.priorities {
            total += p.powf(self.alpha);
            cum.push(total);
        }
        let min_p = self
            .priorities
            .iter()
            .map(|p| p.powf(self.alpha) / total)
            .fold(f64::INFINITY, f64::min);
        let max_w = (len as f64 * min_p).powf(-beta);
        (0..n)
            .map(|_| {
                let u = rng.random_range(0.0..total);
                let i = cum.partition_point(|&c| c <= u).min(len - 1);
                let p = self.priorities[i].powf(self.alpha) / total;
                (i, (len as f64 * p).powf(-beta) / max_w)
            })
            .collect()
    }

    pub fn update_priority(&mut self, i: usize, priority: f64) {
        self.priorities[i] = priority;
        self.max_priority = self.max_priority.max(priority);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub step: usize,
    pub loss: f64,
    pub epsilon: f64,
    /// Mean undiscounted evaluation return, when evaluated at this step.
    pub eval_return: Option<f64>,
}

pub fn write_metrics(path: &Path, rows: &[MetricRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub struct TrainOutcome {
    /// Parameters with the best evaluation return seen.
    pub best: QNet,
    pub last: QNet,
    pub best_eval: Option<f64>,
    pub metrics: Vec<MetricRow>,
}

/// Episode seeds for evaluation are disjoint from training seeds.
fn eval_seed(seed: u64, i: usize) -> u64 {
    rng::mix(seed ^ 0x5eed_e7a1, i as u64)
}

fn train_seed(seed: u64, episode: usize) -> u64 {
    rng::mix(seed, episode as u64)
}

/// Mean return of the greedy policy over `episodes` fresh environments.
pub fn evaluate<E: Environment>(
    net: &QNet,
    make_env: &dyn Fn(u64) -> Result<E>,
    seeds: impl IntoIterator<Item = u64>,
) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0;
    for seed in seeds {
        let mut env = make_env(seed)?;
        while !env.is_terminal() {
            let g = env.graph();
            let q = net.q_values(&g)?;
            let i = argmax_masked(&q, &g.mask).ok_or_else(|| Error::Internal("no feasible action".into()))?;
            total += env.step(g.actions[i])?.reward;
        }
        count += 1;
    }
    Ok(total / count.max(1) as f64)
}

pub struct Trainer<'a, E: Environment> {
    config: DqnConfig,
    make_env: &'a dyn Fn(u64) -> Result<E>,
    seed: u64,
}

impl<'a, E: Environment> Trainer<'a, E> {
    pub fn new(config: DqnConfig, make_env: &'a dyn Fn(u64) -> Result<E>, seed: u64) -> Result<Self> {
        config.validate()?;
        Ok(Trainer { config, make_env, seed })
    }

    pub fn run(&self, mut net: QNet) -> Result<TrainOutcome> {
        let c = &self.config;
        let mut rng = rng::stream(self.seed, streams::TRAIN);
        let mut target = net.clone();
        let mut optimizer = Optimizer::new(c.optimizer, net.params());
        let mut buffer = ReplayBuffer::new(c.buffer_size, c.per_alpha);
        let mut metrics = Vec::new();
        let mut best: Option<(f64, QNet)> = None;
        let mut episode = 0;
        let mut env = (self.make_env)(train_seed(self.seed, episode))?;
        // Pending (graph, action, reward) awaiting their n-step successor.
        let mut window: Vec<(StateGraph, usize, f64)> = Vec::new();
        let mut last_loss = f64::NAN;
        let eval_seeds = |n| (0..n).map(|i| eval_seed(self.seed, i));

        for step in 0..c.total_steps {
            if env.is_terminal() {
                episode += 1;
                env = (self.make_env)(train_seed(self.seed, episode))?;
                window.clear();
                ensure_running(&env)?;
            }
            let eps = epsilon(step, c);
            let graph = env.graph();
            let explore = step < c.initial_random_steps || rng.random::<f64>() < eps;
            let action = if explore {
                let open: Vec<usize> = graph.feasible_indices().collect();
                if open.is_empty() {
                    return Err(Error::Internal("decision state without feasible action".into()));
                }
                open[rng.random_range(0..open.len())]
            } else {
                let q = net.q_values(&graph)?;
                argmax_masked(&q, &graph.mask).ok_or_else(|| Error::Internal("no feasible action".into()))?
            };
            let tr = env.step(graph.actions[action])?;
            window.push((graph, action, tr.reward * c.reward_scale));
            let next = env.graph();
            let flush_all = tr.terminal;
            while window.len() >= c.n_step || (flush_all && !window.is_empty()) {
                let (g, a, _) = window[0].clone();
                let mut ret = 0.0;
                let mut disc = 1.0;
                for (_, _, r) in &window {
                    ret += disc * r;
                    disc *= c.gamma;
                }
                buffer.push(Experience {
                    graph: g,
                    action: a,
                    reward: ret,
                    next: next.clone(),
                    terminal: tr.terminal,
                    discount: disc,
                });
                window.remove(0);
            }

            if step >= c.learning_starts && buffer.len() >= c.batch_size && step % c.train_frequency == 0 {
                let beta = c.per_beta0 + (1.0 - c.per_beta0) * step as f64 / c.total_steps as f64;
                last_loss = self.train_step(&mut net, &target, &mut optimizer, &mut buffer, beta, step, &mut rng)?;
            }
            if (step + 1) % c.target_update_freq == 0 {
                target = net.clone();
            }
            let mut eval_return = None;
            if (step + 1) % c.eval_every == 0 || step + 1 == c.total_steps {
                let r = evaluate(&net, self.make_env, eval_seeds(c.eval_episodes))?;
                log::info!("step {}: loss {last_loss:.5} epsilon {eps:.3} eval return {r:.4}", step + 1);
                if best.as_ref().is_none_or(|(b, _)| r > *b) {
                    best = Some((r, net.clone()));
                }
                eval_return = Some(r);
            }
            if eval_return.is_some() || step % 100 == 0 {
                metrics.push(MetricRow {
                    step: step + 1,
                    loss: last_loss,
                    epsilon: eps,
                    eval_return,
                });
            }
        }
        let (best_eval, best_net) = match best {
            Some((r, n)) => (Some(r), n),
            None => (None, net.clone()),
        };
        Ok(TrainOutcome {
            best: best_net,
            last: net,
            best_eval,
            metrics,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn train_step(
        &self,
        net: &mut QNet,
        target: &QNet,
        optimizer: &mut Optimizer,
        buffer: &mut ReplayBuffer,
        beta: f64,
        step: usize,
        rng: &mut Rng,
    ) -> Result<f64> {
        let c = &self.config;
        let picks = buffer.sample(c.batch_size, beta, rng);
        let exps: Vec<&Experience> = picks.iter().map(|&(i, _)| buffer.get(i)).collect();
        let next_graphs: Vec<&StateGraph> = exps.iter().filter(|e| !e.terminal).map(|e| &e.next).collect();
        let (target_q, online_q) = if next_graphs.is_empty() {
            (Vec::new(), Vec::new())
        } else {
            let t = target.forward(&next_graphs)?.into_q();
            let o = if c.double_q { net.forward(&next_graphs)?.into_q() } else { Vec::new() };
            (t, o)
        };
        let mut targets = Vec::with_capacity(exps.len());
        let mut k = 0;
        for e in &exps {
            if e.terminal {
                targets.push(e.reward);
            } else {
                let online = c.double_q.then(|| online_q[k].as_slice());
                targets.push(td_target(e.reward, e.discount, false, &target_q[k], online, &e.next.mask)?);
                k += 1;
            }
        }
        let graphs: Vec<&StateGraph> = exps.iter().map(|e| &e.graph).collect();
        let mut cache = net.forward(&graphs)?;
        let n = exps.len() as f64;
        let mut loss = 0.0;
        let mut grads_q = Vec::with_capacity(exps.len());
        let mut new_priorities = Vec::with_capacity(exps.len());
        for (((e, q), y), &(_, w)) in exps.iter().zip(cache.q()).zip(&targets).zip(&picks) {
            let td = q[e.action] - y;
            loss += w * td * td / n;
            let mut g = vec![0.0; q.len()];
            g[e.action] = 2.0 * w * td / n;
            grads_q.push(g);
            new_priorities.push(td.abs() + c.per_eps);
        }
        if !loss.is_finite() {
            return Err(Error::Divergence(format!("non-finite loss at step {step}")));
        }
        let mut grads: Vec<Mat> = cache.backward(&grads_q)?;
        drop(cache);
        clip_global_norm(&mut grads, c.grad_clip);
        optimizer.step(net.params_mut(), &grads, c.learning_rate_at(step));
        if c.per_alpha > 0.0 {
            for (&(i, _), p) in picks.iter().zip(new_priorities) {
                buffer.update_priority(i, p);
            }
        }
        Ok(loss)
    }
}

fn ensure_running<E: Environment>(env: &E) -> Result<()> {
    if env.is_terminal() {
        return Err(Error::Config("environment factory produced an already finished episode".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn td_target_examples() {
        assert_eq!(td_target(-5.0, 1.0, true, &[], None, &[]).unwrap(), -5.0);
        assert_eq!(td_target(-2.0, 0.0, false, &[1.0], None, &[true]).unwrap(), -2.0);
        assert_eq!(td_target(-2.0, 1.0, false, &[-1.0, -4.0], None, &[true, true]).unwrap(), -3.0);
        // Masked maximum is ignored.
        assert_eq!(td_target(-2.0, 1.0, false, &[9.0, -4.0], None, &[false, true]).unwrap(), -6.0);
        // Double Q: online picks index 1, target evaluates it.
        assert_eq!(
            td_target(0.0, 1.0, false, &[-1.0, -4.0], Some(&[0.0, 5.0]), &[true, true]).unwrap(),
            -4.0
        );
        assert!(td_target(0.0, 1.0, false, &[1.0], None, &[false]).is_err());
    }

    #[test]
    fn epsilon_schedule() {
        let c = DqnConfig {
            total_steps: 1000,
            exploration_fraction: 0.3,
            final_epsilon: 0.1,
            ..Default::default()
        };
        assert_eq!(epsilon(0, &c), 1.0);
        assert!((epsilon(150, &c) - 0.55).abs() < 1e-12);
        assert_eq!(epsilon(300, &c), 0.1);
        assert_eq!(epsilon(999, &c), 0.1);
    }

    fn dummy(reward: f64) -> Experience {
        let g = StateGraph {
            num_nodes: 0,
            node_width: 1,
            node_features: vec![],
            edges: vec![],
            edge_width: 1,
            edge_features: vec![],
            global: vec![0.0],
            node_scale: vec![1.0],
            edge_scale: vec![1.0],
            actions: vec![crate::Action::Noop],
            mask: vec![true],
        };
        Experience {
            graph: g.clone(),
            action: 0,
            reward,
            next: g,
            terminal: true,
            discount: 1.0,
        }
    }

    #[test]
    fn ring_buffer_overwrites_oldest() {
        let mut b = ReplayBuffer::new(3, 0.0);
        for r in 0..5 {
            b.push(dummy(r as f64));
        }
        let mut rewards: Vec<f64> = (0..b.len()).map(|i| b.get(i).reward).collect();
        rewards.sort_by(f64::total_cmp);
        assert_eq!(rewards, vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn uniform_sampling_when_alpha_is_zero() {
        let mut b = ReplayBuffer::new(4, 0.0);
        for r in 0..4 {
            b.push(dummy(r as f64));
        }
        b.update_priority(0, 100.0);
        let mut rng = rng::stream(1, 0);
        let mut counts = [0f64; 4];
        let n = 100_000;
        for (i, w) in b.sample(n, 0.4, &mut rng) {
            counts[i] += 1.0;
            assert_eq!(w, 1.0);
        }
        let expected = n as f64 / 4.0;
        let chi2: f64 = counts.iter().map(|c| (c - expected).powi(2) / expected).sum();
        // 3 degrees of freedom, 0.999 quantile.
        assert!(chi2 < 16.27, "{chi2}");
    }

    #[test]
    fn prioritized_sampling_follows_priorities() {
        let mut b = ReplayBuffer::new(2, 1.0);
        b.push(dummy(0.0));
        b.push(dummy(1.0));
        b.update_priority(0, 3.0);
        b.update_priority(1, 1.0);
        let mut rng = rng::stream(2, 0);
        let draws = b.sample(40_000, 1.0, &mut rng);
        let zeros = draws.iter().filter(|(i, _)| *i == 0).count() as f64 / 40_000.0;
        assert!((zeros - 0.75).abs() < 0.01, "{zeros}");
        // Full correction: weight ∝ 1/p, normalised to max 1.
        let w0 = draws.iter().find(|(i, _)| *i == 0).unwrap().1;
        let w1 = draws.iter().find(|(i, _)| *i == 1).unwrap().1;
        assert!((w0 - 1.0 / 3.0).abs() < 1e-12 && (w1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn learning_rate_decay() {
        let c = DqnConfig {
            total_steps: 100,
            learning_rate: 1e-3,
            lr_decay: 0.1,
            ..Default::default()
        };
        assert_eq!(c.learning_rate_at(0), 1e-3);
        assert!((c.learning_rate_at(100) - 1e-4).abs() < 1e-15);
        let fixed = DqnConfig { lr_decay: 0.0, ..c };
        assert_eq!(fixed.learning_rate_at(50), 1e-3);
    }
}
