//! State graphs: the network input and the action map of a decision event.
//!
//! CVRP states become a star around the vehicle node (node 0) with pending
//! customers at nodes `1..=n_t` and the depot last. PMSP states become the
//! complete bipartite graph between pending jobs (first) and machines.
//! Infeasible edges stay in the graph and are masked.

use serde::{Deserialize, Serialize};

use crate::cvrp::{self, CvrpEnv};
use crate::error::{Error, Result};
use crate::mdp::{Action, Environment};
use crate::pmsp::{self, PmspEnv};

pub const CVRP_NODE_WIDTH: usize = 8;
pub const CVRP_EDGE_WIDTH: usize = 1;
pub const GLOBAL_WIDTH: usize = 1;
pub const PMSP_EDGE_WIDTH: usize = 1;

pub fn pmsp_node_width(classes: usize) -> usize {
    2 * classes + 7
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateGraph {
    pub num_nodes: usize,
    pub node_width: usize,
    /// Row-major `num_nodes x node_width`, raw units.
    pub node_features: Vec<f64>,
    pub edges: Vec<(usize, usize)>,
    pub edge_width: usize,
    /// Row-major `edges.len() x edge_width`, raw units.
    pub edge_features: Vec<f64>,
    pub global: Vec<f64>,
    /// Divisors applied column-wise before features enter the network.
    pub node_scale: Vec<f64>,
    pub edge_scale: Vec<f64>,
    /// One action per edge, then the noop slot.
    pub actions: Vec<Action>,
    pub mask: Vec<bool>,
}

impl StateGraph {
    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn noop_index(&self) -> usize {
        self.edges.len()
    }

    pub fn node_row(&self, v: usize) -> &[f64] {
        &self.node_features[v * self.node_width..(v + 1) * self.node_width]
    }

    pub fn edge_row(&self, e: usize) -> &[f64] {
        &self.edge_features[e * self.edge_width..(e + 1) * self.edge_width]
    }

    /// Node features divided by their scales.
    pub fn scaled_nodes(&self) -> Vec<f64> {
        scale_rows(&self.node_features, &self.node_scale)
    }

    pub fn scaled_edges(&self) -> Vec<f64> {
        scale_rows(&self.edge_features, &self.edge_scale)
    }

    pub fn feasible_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i)
    }

    pub fn index_of(&self, action: Action) -> Option<usize> {
        self.actions.iter().position(|&a| a == action)
    }
}

fn scale_rows(values: &[f64], scale: &[f64]) -> Vec<f64> {
    values
        .iter()
        .enumerate()
        .map(|(i, v)| v / scale[i % scale.len()])
        .collect()
}

pub fn decode_action(graph: &StateGraph, index: usize) -> Result<Action> {
    match graph.mask.get(index) {
        Some(true) => Ok(graph.actions[index]),
        Some(false) => Err(Error::MaskingViolation(format!(
            "action {} (index {index}) is masked",
            graph.actions[index]
        ))),
        None => Err(Error::MaskingViolation(format!(
            "index {index} outside the action map of size {}",
            graph.actions.len()
        ))),
    }
}

fn finish(
    num_nodes: usize,
    node_width: usize,
    node_features: Vec<f64>,
    node_scale: Vec<f64>,
    edges: Vec<(usize, usize)>,
    edge_features: Vec<f64>,
    edge_scale: Vec<f64>,
    feasible: &[Action],
) -> StateGraph {
    let edge_width = edge_scale.len();
    let mut actions: Vec<Action> = edges.iter().map(|&(s, t)| Action::Edge(s, t)).collect();
    actions.push(Action::Noop);
    let mask = actions.iter().map(|a| feasible.contains(a)).collect();
    StateGraph {
        num_nodes,
        node_width,
        node_features,
        edge_width,
        edges,
        edge_features,
        global: vec![0.0; GLOBAL_WIDTH],
        node_scale,
        edge_scale,
        actions,
        mask,
    }
}

pub fn encode_cvrp(env: &CvrpEnv) -> StateGraph {
    let s = env.state();
    let inst = env.instance();
    let n = s.pending.len();
    let cap = s.capacity_left as f64;
    let mut nodes = Vec::with_capacity((n + 2) * CVRP_NODE_WIDTH);
    // [x, y, capacity, demand, vehicle, customer, depot, reachable]
    nodes.extend_from_slice(&[s.position[0], s.position[1], cap, 0.0, 1.0, 0.0, 0.0, 0.0]);
    let mut edges = Vec::with_capacity(n + 1);
    let mut edge_features = Vec::with_capacity(n + 1);
    for (k, &id) in s.pending.iter().enumerate() {
        let c = &s.customers[id];
        let reach = if c.demand <= s.capacity_left { 1.0 } else { 0.0 };
        nodes.extend_from_slice(&[c.x, c.y, 0.0, c.demand as f64, 0.0, 1.0, 0.0, reach]);
        edges.push((0, k + 1));
        edge_features.push(cvrp::dist(s.position, c.pos()));
    }
    nodes.extend_from_slice(&[inst.depot[0], inst.depot[1], 0.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
    edges.push((0, n + 1));
    edge_features.push(cvrp::dist(s.position, inst.depot));
    let c = inst.capacity as f64;
    finish(
        n + 2,
        CVRP_NODE_WIDTH,
        nodes,
        vec![1.0, 1.0, c, c, 1.0, 1.0, 1.0, 1.0],
        edges,
        edge_features,
        vec![1.0],
        &env.feasible_actions(),
    )
}

pub fn encode_pmsp(env: &PmspEnv) -> StateGraph {
    let s = env.state();
    let inst = env.instance();
    let c = inst.c;
    let width = pmsp_node_width(c);
    let n = s.pending.len();
    let m = inst.m;
    let mut nodes = vec![0.0; (n + m) * width];
    // Job slots: [p, w, a, class one-hot (c), job]; machine slots follow:
    // [machine, remaining, last class one-hot (c + 1), slot 0 = none yet].
    let job_slots = 3 + c + 1;
    for (k, &id) in s.pending.iter().enumerate() {
        let j = env.job(id);
        let row = &mut nodes[k * width..(k + 1) * width];
        row[0] = j.p as f64;
        row[1] = j.w as f64;
        row[2] = if inst.online() { j.arrival } else { 0.0 };
        row[3 + j.class - 1] = 1.0;
        row[3 + c] = 1.0;
    }
    for (i, mach) in s.machines.iter().enumerate() {
        let row = &mut nodes[(n + i) * width..(n + i + 1) * width];
        row[job_slots] = 1.0;
        row[job_slots + 1] = mach.remaining;
        row[job_slots + 2 + mach.last_class] = 1.0;
    }
    let mut edges = Vec::with_capacity(n * m);
    let mut edge_features = Vec::with_capacity(n * m);
    for (k, &id) in s.pending.iter().enumerate() {
        let class = env.job(id).class;
        for (i, mach) in s.machines.iter().enumerate() {
            edges.push((k, n + i));
            edge_features.push(inst.setup_time(mach.last_class, class) as f64);
        }
    }
    let mut scale = vec![1.0; width];
    scale[0] = pmsp::PROCESSING_MAX as f64;
    scale[1] = pmsp::WEIGHT_MAX as f64;
    scale[2] = inst.arrival_scale();
    scale[job_slots + 1] = (pmsp::PROCESSING_MAX + pmsp::SETUP_MAX) as f64;
    finish(
        n + m,
        width,
        nodes,
        scale,
        edges,
        edge_features,
        vec![pmsp::SETUP_MAX as f64],
        &env.feasible_actions(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cvrp::{Customer, CvrpInstance};
    use crate::pmsp::{Job, PmspInstance};

    fn cvrp_env(customers: &[(f64, f64, u32)], capacity: u32) -> CvrpEnv {
        CvrpEnv::new(CvrpInstance {
            capacity,
            velocity: 1.0,
            depot: [0.0, 0.0],
            customers: customers
                .iter()
                .map(|&(x, y, demand)| Customer { x, y, demand, arrival: 0.0 })
                .collect(),
            online: false,
        })
        .unwrap()
    }

    #[test]
    fn star_sizes() {
        let env = cvrp_env(&[(0.1, 0.2, 1), (0.3, 0.4, 2), (0.5, 0.6, 3)], 10);
        let g = env.graph();
        assert_eq!((g.num_nodes, g.num_edges(), g.node_width), (5, 4, 8));
        assert_eq!(g.actions.len(), 5);
        // Depot edge masked at the depot; noop masked offline.
        assert_eq!(g.mask, vec![true, true, true, false, false]);
        assert_eq!(g.global, vec![0.0]);
    }

    #[test]
    fn unreachable_customer() {
        let mut env = cvrp_env(&[(0.3, 0.4, 5), (0.6, 0.8, 7)], 10);
        env.step(Action::Edge(0, 1)).unwrap();
        let g = env.graph();
        assert_eq!(g.node_row(0)[2], 5.0);
        assert_eq!(g.node_row(1), &[0.6, 0.8, 0.0, 7.0, 0.0, 1.0, 0.0, 0.0]);
        assert_eq!(g.mask, vec![false, true, false]);
        assert!(matches!(decode_action(&g, 0), Err(Error::MaskingViolation(_))));
        assert_eq!(decode_action(&g, 1).unwrap(), Action::Edge(0, 2));
        assert!((g.edge_row(0)[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn empty_star() {
        let mut env = cvrp_env(&[(0.3, 0.4, 5), (0.6, 0.8, 7)], 20);
        env.step(Action::Edge(0, 1)).unwrap();
        env.step(Action::Edge(0, 1)).unwrap();
        assert!(env.is_terminal());
        let g = env.graph();
        assert_eq!((g.num_nodes, g.num_edges()), (2, 1));
    }

    fn pmsp_env() -> PmspEnv {
        PmspEnv::new(PmspInstance {
            m: 3,
            c: 5,
            setup: (0..5).map(|a| (0..5).map(|b| if a == b { 0 } else { (10 * a + b) as u32 }).collect()).collect(),
            jobs: vec![
                Job { class: 2, p: 30, w: 4, arrival: 0.0 },
                Job { class: 5, p: 10, w: 1, arrival: 0.0 },
            ],
            arrivals: None,
        })
        .unwrap()
    }

    #[test]
    fn bipartite_sizes() {
        let env = pmsp_env();
        let g = env.graph();
        assert_eq!((g.num_nodes, g.num_edges(), g.node_width), (5, 6, 17));
        assert!(g.edge_features.iter().all(|&s| s == 0.0));
        assert_eq!(g.edges[0], (0, 2));
        assert_eq!(g.edges[5], (1, 4));
        for i in 0..3 {
            let row = g.node_row(2 + i);
            assert_eq!(row[9], 1.0);
            assert_eq!(row[11], 1.0, "fresh machine uses the empty-class slot");
        }
        let j = g.node_row(1);
        assert_eq!(&j[..9], &[10.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0]);
        assert!(j[9..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn busy_machines_masked_and_setups() {
        let mut env = pmsp_env();
        env.step(Action::Edge(1, 2)).unwrap();
        let g = env.graph();
        // One job (class 2) left, machine 0 busy with class 5.
        assert_eq!(g.num_nodes, 4);
        assert_eq!(g.mask, vec![false, true, true, false]);
        assert_eq!(g.edge_row(0)[0], 41.0);
        let m0 = g.node_row(1);
        assert_eq!(m0[10], 10.0);
        assert_eq!(m0[11 + 5], 1.0);
    }

    #[test]
    fn decoded_actions_are_feasible() {
        let mut env = crate::cvrp::CvrpEnv::new(crate::cvrp::generate_offline(8, 20, 3).unwrap()).unwrap();
        while !env.is_terminal() {
            let g = env.graph();
            let idx: Vec<usize> = g.feasible_indices().collect();
            assert_eq!(idx.len(), env.feasible_actions().len());
            for &i in &idx {
                let a = decode_action(&g, i).unwrap();
                env.clone().step(a).unwrap();
            }
            env.step(g.actions[idx[0]]).unwrap();
        }
    }
}
