//! Gradient and symmetry checks for the Q-network.

use combsearch::cvrp::{self, CvrpEnv};
use combsearch::graph::StateGraph;
use combsearch::nn::{QNet, QNetConfig};
use combsearch::pmsp::{self, PmspEnv};
use combsearch::{Action, Environment};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn small(mut c: QNetConfig, hidden: usize, dueling: bool) -> QNetConfig {
    c.hidden = hidden;
    c.dueling = dueling;
    c
}

pub fn random_walk<E: Environment>(env: &mut E, rng: &mut ChaCha8Rng, max_steps: usize) {
    let steps = rng.random_range(0..=max_steps);
    for _ in 0..steps {
        let acts = env.feasible_actions();
        if acts.is_empty() {
            break;
        }
        let a = acts[rng.random_range(0..acts.len())];
        env.step(a).unwrap();
    }
}

pub fn cvrp_graph(rng: &mut ChaCha8Rng) -> StateGraph {
    let n = rng.random_range(1..8);
    let mut env = CvrpEnv::new(cvrp::generate_offline(n, 15, rng.random()).unwrap()).unwrap();
    random_walk(&mut env, rng, n);
    env.graph()
}

pub fn pmsp_graph(rng: &mut ChaCha8Rng) -> StateGraph {
    let n = rng.random_range(1..7);
    let mut env = PmspEnv::new(pmsp::generate_offline(n, 2, 3, rng.random()).unwrap()).unwrap();
    random_walk(&mut env, rng, n);
    env.graph()
}

pub fn loss(net: &QNet, graphs: &[&StateGraph], coef: &[Vec<f64>]) -> f64 {
    let cache = net.forward(graphs).unwrap();
    cache
        .q()
        .iter()
        .zip(coef)
        .map(|(q, c)| q.iter().zip(c).map(|(a, b)| a * b).sum::<f64>())
        .sum()
}

/// Central differences with h = 1e-4 against the analytic gradient. Returns
/// the largest relative error over the sampled parameters.
pub fn gradient_check(config: QNetConfig, seed: u64, samples: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = QNet::new(config, seed).unwrap();
    let graphs: Vec<StateGraph> = (0..2)
        .map(|_| {
            if config.node_in == 8 {
                cvrp_graph(&mut rng)
            } else {
                pmsp_graph(&mut rng)
            }
        })
        .collect();
    let refs: Vec<&StateGraph> = graphs.iter().collect();
    let coef: Vec<Vec<f64>> = graphs
        .iter()
        .map(|g| (0..g.actions.len()).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let mut cache = net.forward(&refs).unwrap();
    let grads = cache.backward(&coef).unwrap();
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let pi = rng.random_range(0..net.params().len());
        let k = rng.random_range(0..net.params()[pi].len());
        let mut plus = net.clone();
        plus.params_mut()[pi].as_slice_mut().unwrap()[k] += h;
        let mut minus = net.clone();
        minus.params_mut()[pi].as_slice_mut().unwrap()[k] -= h;
        let fd = (loss(&plus, &refs, &coef) - loss(&minus, &refs, &coef)) / (2.0 * h);
        let an = grads[pi].as_slice().unwrap()[k];
        let scale = an.abs().max(fd.abs()).max(1e-6);
        worst = worst.max((an - fd).abs() / scale);
    }
    worst
}

pub fn permute(g: &StateGraph, rng: &mut ChaCha8Rng) -> (StateGraph, Vec<usize>) {
    let mut node_perm: Vec<usize> = (0..g.num_nodes).collect();
    node_perm.shuffle(rng);
    // new index of old node i is node_perm[i]
    let mut edge_order: Vec<usize> = (0..g.num_edges()).collect();
    edge_order.shuffle(rng);
    let mut out = g.clone();
    for i in 0..g.num_nodes {
        let row = g.node_row(i);
        let at = node_perm[i] * g.node_width;
        out.node_features[at..at + g.node_width].copy_from_slice(row);
    }
    out.edges = edge_order
        .iter()
        .map(|&k| (node_perm[g.edges[k].0], node_perm[g.edges[k].1]))
        .collect();
    out.edge_features = edge_order.iter().flat_map(|&k| g.edge_row(k).to_vec()).collect();
    out.actions = out.edges.iter().map(|&(s, t)| Action::Edge(s, t)).collect();
    out.actions.push(Action::Noop);
    out.mask = edge_order.iter().map(|&k| g.mask[k]).collect();
    out.mask.push(g.mask[g.noop_index()]);
    let mut action_order = edge_order;
    action_order.push(g.noop_index());
    (out, action_order)
}

/// Largest deviation between the Q-values of a graph and those of a randomly
/// relabelled copy, over `graphs` random routing and scheduling states.
pub fn equivariance_error(graphs: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cnet = QNet::new(small(QNetConfig::cvrp(), 16, true), 1).unwrap();
    let pnet = QNet::new(QNetConfig::pmsp(3), 2).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..graphs {
        let (net, g) = if i % 2 == 0 {
            (&cnet, cvrp_graph(&mut rng))
        } else {
            (&pnet, pmsp_graph(&mut rng))
        };
        let (pg, order) = permute(&g, &mut rng);
        let q = net.q_values(&g).unwrap();
        let pq = net.q_values(&pg).unwrap();
        for (new, &old) in order.iter().enumerate() {
            worst = worst.max((pq[new] - q[old]).abs());
        }
    }
    worst
}
