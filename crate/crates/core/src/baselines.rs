//! Comparison policies: heuristic-greedy rules, Clarke-Wright savings and
//! sweep route planners (re-planned over visible customers when online),
//! and the search policy wrapper.

use std::collections::VecDeque;
use std::sync::Arc;

use crate::cvrp::{dist, CvrpEnv};
use crate::error::{Error, Result};
use crate::heuristic::{best_index, DistanceHeuristic, Heuristic, RandomHeuristic, WsptHeuristic};
use crate::mcts::{Mcts, SearchStats};
use crate::mdp::{Action, Environment};
use crate::rng::{self, streams, Rng};

pub trait Policy<E: Environment> {
    fn name(&self) -> String;
    fn decide(&mut self, env: &E) -> Result<Action>;
}

/// Always takes the highest-scoring action of a heuristic.
pub struct GreedyPolicy {
    heuristic: Arc<dyn Heuristic>,
    rng: Rng,
}

impl GreedyPolicy {
    pub fn new(heuristic: Arc<dyn Heuristic>, seed: u64) -> Self {
        GreedyPolicy {
            heuristic,
            rng: rng::stream(seed, streams::POLICY),
        }
    }

    pub fn uniform_random(seed: u64) -> Self {
        Self::new(Arc::new(RandomHeuristic), seed)
    }

    pub fn distance_proportional(seed: u64) -> Self {
        Self::new(Arc::new(DistanceHeuristic), seed)
    }

    pub fn wspt() -> Self {
        Self::new(Arc::new(WsptHeuristic), 0)
    }
}

impl<E: Environment> Policy<E> for GreedyPolicy {
    fn name(&self) -> String {
        self.heuristic.name()
    }

    fn decide(&mut self, env: &E) -> Result<Action> {
        let g = env.graph();
        let s = self.heuristic.scores(&g, &mut self.rng)?;
        let i = best_index(&s).ok_or_else(|| Error::MaskingViolation("no feasible action".into()))?;
        Ok(g.actions[i])
    }
}

/// One search per decision, seeded by the decision index.
pub struct SearchPolicy {
    pub mcts: Mcts,
    seed: u64,
    decisions: u64,
    pub last_stats: Option<SearchStats>,
}

impl SearchPolicy {
    pub fn new(mcts: Mcts, seed: u64) -> Self {
        SearchPolicy {
            mcts,
            seed,
            decisions: 0,
            last_stats: None,
        }
    }
}

impl<E: Environment> Policy<E> for SearchPolicy {
    fn name(&self) -> String {
        format!("mcts:{}", self.mcts.heuristic.name())
    }

    fn decide(&mut self, env: &E) -> Result<Action> {
        let seed = rng::mix(self.seed, self.decisions);
        self.decisions += 1;
        let (a, _, stats) = self.mcts.search_with_tree(env, seed)?;
        self.last_stats = Some(stats);
        Ok(a)
    }
}

/// A customer as seen by a route planner.
#[derive(Debug, Clone, Copy)]
pub struct Stop {
    pub id: usize,
    pub pos: [f64; 2],
    pub demand: u32,
}

/// Total length of depot-delimited routes.
pub fn routes_cost(depot: [f64; 2], stops: &[Stop], routes: &[Vec<usize>]) -> f64 {
    let pos = |id: usize| stops.iter().find(|s| s.id == id).expect("planned stop exists").pos;
    routes
        .iter()
        .filter(|r| !r.is_empty())
        .map(|r| {
            let mut d = dist(depot, pos(r[0])) + dist(pos(r[r.len() - 1]), depot);
            for w in r.windows(2) {
                d += dist(pos(w[0]), pos(w[1]));
            }
            d
        })
        .sum()
}

/// Parallel Clarke-Wright: start from one route per customer and merge route
/// ends in order of decreasing positive saving while capacity allows.
pub fn savings_routes(depot: [f64; 2], stops: &[Stop], capacity: u32) -> Vec<Vec<usize>> {
    let n = stops.len();
    let mut pairs = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let s = dist(depot, stops[i].pos) + dist(depot, stops[j].pos) - dist(stops[i].pos, stops[j].pos);
            if s > 0.0 {
                pairs.push((s, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut routes: Vec<Option<VecDeque<usize>>> = (0..n).map(|i| Some(VecDeque::from([i]))).collect();
    let mut load: Vec<u32> = stops.iter().map(|s| s.demand).collect();
    let mut owner: Vec<usize> = (0..n).collect();
    for (_, i, j) in pairs {
        let (ri, rj) = (owner[i], owner[j]);
        if ri == rj || load[ri] + load[rj] > capacity {
            continue;
        }
        let a = routes[ri].as_ref().expect("live route");
        let b = routes[rj].as_ref().expect("live route");
        let i_front = a.front() == Some(&i);
        let i_back = a.back() == Some(&i);
        let j_front = b.front() == Some(&j);
        let j_back = b.back() == Some(&j);
        if !(i_front || i_back) || !(j_front || j_back) {
            continue;
        }
        let mut a = routes[ri].take().expect("live route");
        let mut b = routes[rj].take().expect("live route");
        // Orient so that i ends route a and j starts route b.
        if !i_back {
            a.make_contiguous().reverse();
        }
        if !j_front {
            b.make_contiguous().reverse();
        }
        for &c in &b {
            owner[c] = ri;
        }
        a.extend(b);
        load[ri] += load[rj];
        routes[ri] = Some(a);
    }
    routes
        .into_iter()
        .flatten()
        .map(|r| r.into_iter().map(|k| stops[k].id).collect())
        .collect()
}

/// How a sweep group is sequenced once its members are fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepOrder {
    /// Angular order, ties (a shared ray) broken by distance to the depot.
    Angular,
    /// Nearest neighbour starting from the depot.
    Nearest,
}

/// Sweep: sort by polar angle around the depot (from angle 0,
/// counter-clockwise) and cut into capacity-feasible consecutive groups.
pub fn sweep_routes(depot: [f64; 2], stops: &[Stop], capacity: u32, order: SweepOrder) -> Vec<Vec<usize>> {
    let angle = |s: &Stop| {
        let a = (s.pos[1] - depot[1]).atan2(s.pos[0] - depot[0]);
        if a < 0.0 {
            a + std::f64::consts::TAU
        } else {
            a
        }
    };
    let mut sorted: Vec<usize> = (0..stops.len()).collect();
    sorted.sort_by(|&a, &b| {
        angle(&stops[a])
            .total_cmp(&angle(&stops[b]))
            .then(dist(depot, stops[a].pos).total_cmp(&dist(depot, stops[b].pos)))
            .then(a.cmp(&b))
    });
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut load = 0;
    for k in sorted {
        if groups.is_empty() || load + stops[k].demand > capacity {
            groups.push(Vec::new());
            load = 0;
        }
        groups.last_mut().expect("group exists").push(k);
        load += stops[k].demand;
    }
    groups
        .into_iter()
        .map(|group| match order {
            SweepOrder::Angular => group.into_iter().map(|k| stops[k].id).collect(),
            SweepOrder::Nearest => nearest_neighbour(depot, stops, group),
        })
        .collect()
}

fn nearest_neighbour(depot: [f64; 2], stops: &[Stop], mut group: Vec<usize>) -> Vec<usize> {
    let mut route = Vec::with_capacity(group.len());
    let mut at = depot;
    while !group.is_empty() {
        let (idx, _) = group
            .iter()
            .enumerate()
            .min_by(|a, b| dist(at, stops[*a.1].pos).total_cmp(&dist(at, stops[*b.1].pos)))
            .expect("group is nonempty");
        let k = group.remove(idx);
        at = stops[k].pos;
        route.push(stops[k].id);
    }
    route
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Planner {
    Savings,
    Sweep(SweepOrder),
}

impl Planner {
    pub fn plan(self, depot: [f64; 2], stops: &[Stop], capacity: u32) -> Vec<Vec<usize>> {
        match self {
            Planner::Savings => savings_routes(depot, stops, capacity),
            Planner::Sweep(order) => sweep_routes(depot, stops, capacity, order),
        }
    }
}

/// Executes a route plan over the currently visible customers, re-planning
/// at a depot visit whenever the visible set differs from what is planned.
/// On offline instances this is the plain offline planner.
pub struct RoutePolicy {
    planner: Planner,
    routes: VecDeque<Vec<usize>>,
    current: VecDeque<usize>,
}

impl RoutePolicy {
    pub fn new(planner: Planner) -> Self {
        RoutePolicy {
            planner,
            routes: VecDeque::new(),
            current: VecDeque::new(),
        }
    }

    fn plan_matches(&self, pending: &[usize]) -> bool {
        let mut planned: Vec<usize> = self.routes.iter().flatten().copied().collect();
        planned.sort_unstable();
        planned == pending
    }
}

impl Policy<CvrpEnv> for RoutePolicy {
    fn name(&self) -> String {
        match self.planner {
            Planner::Savings => "savings".into(),
            Planner::Sweep(SweepOrder::Angular) => "sweep".into(),
            Planner::Sweep(SweepOrder::Nearest) => "sweep-nn".into(),
        }
    }

    fn decide(&mut self, env: &CvrpEnv) -> Result<Action> {
        let s = env.state();
        if s.at_depot && self.current.is_empty() {
            if !self.plan_matches(&s.pending) {
                let stops: Vec<Stop> = s
                    .pending
                    .iter()
                    .map(|&id| {
                        let c = env.customer(id);
                        Stop {
                            id,
                            pos: c.pos(),
                            demand: c.demand,
                        }
                    })
                    .collect();
                self.routes = self.planner.plan(env.instance().depot, &stops, env.instance().capacity).into();
            }
            if let Some(route) = self.routes.pop_front() {
                self.current = route.into();
            }
        }
        if let Some(id) = self.current.pop_front() {
            let k = s
                .pending
                .iter()
                .position(|&p| p == id)
                .ok_or_else(|| Error::Internal(format!("planned customer {id} is not pending")))?;
            return Ok(Action::Edge(0, k + 1));
        }
        if !s.at_depot {
            return Ok(Action::Edge(0, env.depot_node()));
        }
        if env.feasible_actions().contains(&Action::Noop) {
            return Ok(Action::Noop);
        }
        Err(Error::Internal("route policy has nothing to do".into()))
    }
}

/// Runs `policy` to the end of the episode; returns the objective and the
/// executed actions.
pub fn run_episode<E: Environment, P: Policy<E> + ?Sized>(env: &mut E, policy: &mut P) -> Result<(f64, Vec<Action>)> {
    let mut actions = Vec::new();
    while !env.is_terminal() {
        let a = policy.decide(env)?;
        env.step(a)?;
        actions.push(a);
    }
    Ok((env.objective(), actions))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cvrp::{self, Customer, CvrpInstance};

    fn stops(points: &[(f64, f64, u32)]) -> Vec<Stop> {
        points
            .iter()
            .enumerate()
            .map(|(id, &(x, y, demand))| Stop { id, pos: [x, y], demand })
            .collect()
    }

    fn covers_once(routes: &[Vec<usize>], n: usize) -> bool {
        let mut all: Vec<usize> = routes.iter().flatten().copied().collect();
        all.sort_unstable();
        all == (0..n).collect::<Vec<_>>()
    }

    #[test]
    fn savings_single_customer() {
        let s = stops(&[(0.5, 0.5, 3)]);
        assert_eq!(savings_routes([0.0, 0.0], &s, 10), vec![vec![0]]);
    }

    #[test]
    fn savings_merges_iff_positive_and_fits() {
        let s = stops(&[(1.0, 0.0, 3), (1.0, 0.1, 3)]);
        assert_eq!(savings_routes([0.0, 0.0], &s, 10).len(), 1);
        assert_eq!(savings_routes([0.0, 0.0], &s, 5).len(), 2);
        // Opposite sides of the depot: zero saving, no merge.
        let s = stops(&[(1.0, 0.0, 3), (-1.0, 0.0, 3)]);
        assert_eq!(savings_routes([0.0, 0.0], &s, 10).len(), 2);
    }

    #[test]
    fn sweep_single_ray_is_radial() {
        let s = stops(&[(0.9, 0.9, 1), (0.1, 0.1, 1), (0.5, 0.5, 1)]);
        for order in [SweepOrder::Angular, SweepOrder::Nearest] {
            assert_eq!(sweep_routes([0.0, 0.0], &s, 10, order), vec![vec![1, 2, 0]]);
        }
    }

    #[test]
    fn sweep_splits_consecutive_angles() {
        // Angles 0, 90, 180, 270 degrees; capacity two stops per route.
        let s = stops(&[(0.0, -1.0, 5), (-1.0, 0.0, 5), (1.0, 0.0, 5), (0.0, 1.0, 5)]);
        let r = sweep_routes([0.0, 0.0], &s, 10, SweepOrder::Angular);
        assert_eq!(r.len(), 2);
        let mut a = r[0].clone();
        a.sort_unstable();
        assert_eq!(a, vec![2, 3]);
    }

    #[test]
    fn planners_respect_capacity() {
        for seed in 0..20 {
            let inst = cvrp::generate_offline(30, 30, seed).unwrap();
            let st: Vec<Stop> = inst
                .customers
                .iter()
                .enumerate()
                .map(|(id, c)| Stop { id, pos: c.pos(), demand: c.demand })
                .collect();
            for p in [Planner::Savings, Planner::Sweep(SweepOrder::Angular), Planner::Sweep(SweepOrder::Nearest)] {
                let routes = p.plan(inst.depot, &st, inst.capacity);
                assert!(covers_once(&routes, 30));
                for r in &routes {
                    assert!(r.iter().map(|&i| st[i].demand).sum::<u32>() <= inst.capacity);
                }
            }
        }
    }

    #[test]
    fn route_policy_cost_matches_plan() {
        let inst = cvrp::generate_offline(20, 30, 4).unwrap();
        let st: Vec<Stop> = inst
            .customers
            .iter()
            .enumerate()
            .map(|(id, c)| Stop { id, pos: c.pos(), demand: c.demand })
            .collect();
        for p in [Planner::Savings, Planner::Sweep(SweepOrder::Angular), Planner::Sweep(SweepOrder::Nearest)] {
            let expect = routes_cost(inst.depot, &st, &p.plan(inst.depot, &st, inst.capacity));
            let mut env = CvrpEnv::new(inst.clone()).unwrap();
            let (cost, _) = run_episode(&mut env, &mut RoutePolicy::new(p)).unwrap();
            assert!((cost - expect).abs() < 1e-9, "{cost} vs {expect}");
        }
    }

    #[test]
    fn quasi_offline_ignores_arrivals_until_depot() {
        let c = |x: f64, y: f64, arrival: f64| Customer { x, y, demand: 1, arrival };
        let inst = CvrpInstance {
            capacity: 10,
            velocity: 1.0,
            depot: [0.0, 0.0],
            customers: vec![c(1.0, 0.0, 0.0), c(0.0, 0.5, 0.5)],
            online: true,
        };
        let mut env = CvrpEnv::new(inst).unwrap();
        let mut policy = RoutePolicy::new(Planner::Savings);
        let (cost, actions) = run_episode(&mut env, &mut policy).unwrap();
        // Out to (1,0), back to the depot, then out to (0,0.5) and back.
        assert_eq!(actions[0], Action::Edge(0, 1));
        assert_eq!(actions[1], Action::Edge(0, 2));
        assert!((cost - 3.0).abs() < 1e-12, "{cost}");
    }
}
