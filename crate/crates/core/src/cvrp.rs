//! Single-vehicle capacitated routing simulator, offline and online.
//!
//! The vehicle starts at the depot with full capacity. A decision event is
//! reached when the vehicle arrives at its target and has something to
//! choose. Waiting at the depot with nothing pending is automatic, and once
//! the last customer is served the vehicle drives back to the depot as part
//! of that final step.

use std::collections::VecDeque;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{self, StateGraph};
use crate::mdp::{Action, Environment, Transition};
use crate::rng::{self, streams, Rng};

pub const DEMAND_MAX: u32 = 10;
/// Latest possible arrival under the online arrival model.
pub const ARRIVAL_HORIZON: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Customer {
    pub x: f64,
    pub y: f64,
    pub demand: u32,
    #[serde(default)]
    pub arrival: f64,
}

impl Customer {
    pub fn pos(&self) -> [f64; 2] {
        [self.x, self.y]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvrpInstance {
    pub capacity: u32,
    #[serde(default = "default_velocity")]
    pub velocity: f64,
    pub depot: [f64; 2],
    pub customers: Vec<Customer>,
    /// Online instances reveal customers at their arrival times and allow
    /// waiting.
    #[serde(default)]
    pub online: bool,
}

fn default_velocity() -> f64 {
    1.0
}

impl CvrpInstance {
    pub fn validate(&self) -> Result<()> {
        if self.capacity == 0 {
            return Err(Error::InvalidArgument("capacity must be positive".into()));
        }
        if !(self.velocity > 0.0) {
            return Err(Error::InvalidArgument("velocity must be positive".into()));
        }
        for (i, c) in self.customers.iter().enumerate() {
            if c.demand == 0 || c.demand > self.capacity {
                return Err(Error::InvalidArgument(format!(
                    "customer {i}: demand {} outside 1..={}",
                    c.demand, self.capacity
                )));
            }
            if !(c.arrival >= 0.0) {
                return Err(Error::InvalidArgument(format!("customer {i}: negative arrival")));
            }
            if !self.online && c.arrival != 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "customer {i}: offline instances need arrival 0"
                )));
            }
        }
        Ok(())
    }
}

pub fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Customers and depot uniform on the unit square, demands uniform on 1..=10.
pub fn generate_offline(n: usize, capacity: u32, seed: u64) -> Result<CvrpInstance> {
    if n < 1 {
        return Err(Error::InvalidArgument("need at least one customer".into()));
    }
    check_capacity(capacity)?;
    let mut rng = rng::stream(seed, streams::INSTANCE);
    let depot = [rng.random::<f64>(), rng.random::<f64>()];
    let customers = (0..n)
        .map(|_| Customer {
            x: rng.random(),
            y: rng.random(),
            demand: rng.random_range(1..=DEMAND_MAX),
            arrival: 0.0,
        })
        .collect();
    Ok(CvrpInstance {
        capacity,
        velocity: 1.0,
        depot,
        customers,
        online: false,
    })
}

/// Positions and arrival times from the truncated Gaussian mixtures of
/// [`ArrivalModel::tgmm`]. The depot sits at the centre of the square.
pub fn generate_online(n: usize, capacity: u32, seed: u64) -> Result<CvrpInstance> {
    if n < 1 {
        return Err(Error::InvalidArgument("need at least one customer".into()));
    }
    check_capacity(capacity)?;
    let model = ArrivalModel::tgmm();
    let mut rng = rng::stream(seed, streams::INSTANCE);
    let customers = (0..n).map(|_| model.sample_customer(&mut rng, 0.0)).collect();
    Ok(CvrpInstance {
        capacity,
        velocity: 1.0,
        depot: [0.5, 0.5],
        customers,
        online: true,
    })
}

fn check_capacity(capacity: u32) -> Result<()> {
    if capacity < DEMAND_MAX {
        return Err(Error::InvalidArgument(format!(
            "capacity {capacity} below the maximum demand {DEMAND_MAX}"
        )));
    }
    Ok(())
}

/// Normal distribution restricted to `[lo, hi]`, sampled by rejection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedNormal {
    pub mean: f64,
    pub sd: f64,
    pub lo: f64,
    pub hi: f64,
}

impl TruncatedNormal {
    pub fn sample(&self, rng: &mut Rng) -> f64 {
        self.sample_above(rng, self.lo)
            .expect("truncation interval has positive mass")
    }

    /// Samples conditioned on the value being at least `floor`. Gives up after
    /// a bounded number of rejections.
    pub fn sample_above(&self, rng: &mut Rng, floor: f64) -> Option<f64> {
        let lo = self.lo.max(floor);
        if lo > self.hi {
            return None;
        }
        let normal = Normal::new(self.mean, self.sd).expect("sd is positive");
        for _ in 0..100_000 {
            let v = normal.sample(rng);
            if (lo..=self.hi).contains(&v) {
                return Some(v);
            }
        }
        None
    }

    /// CDF of the truncated distribution.
    pub fn cdf(&self, x: f64) -> f64 {
        let phi = |v: f64| normal_cdf((v - self.mean) / self.sd);
        let (a, b) = (phi(self.lo), phi(self.hi));
        ((phi(x.clamp(self.lo, self.hi)) - a) / (b - a)).clamp(0.0, 1.0)
    }
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

// Numerical Recipes erfc, relative error below 1.2e-7.
fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let r = t * (-z * z - 1.265_512_23
        + t * (1.000_023_68
            + t * (0.374_091_96
                + t * (0.096_784_18
                    + t * (-0.186_288_06
                        + t * (0.278_868_07
                            + t * (-1.135_203_98
                                + t * (1.488_515_87 + t * (-0.822_152_23 + t * 0.170_872_77)))))))))
        .exp();
    if x >= 0.0 {
        r
    } else {
        2.0 - r
    }
}

/// Truncated Gaussian mixture for customer positions (2-D, axis aligned) and
/// arrival times.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalModel {
    pub positions: Vec<(f64, [TruncatedNormal; 2])>,
    pub times: Vec<(f64, TruncatedNormal)>,
}

impl ArrivalModel {
    pub fn tgmm() -> Self {
        let axis = |mean| TruncatedNormal {
            mean,
            sd: 0.1,
            lo: 0.0,
            hi: 1.0,
        };
        let time = |mean| TruncatedNormal {
            mean,
            sd: 3.0,
            lo: 0.0,
            hi: ARRIVAL_HORIZON,
        };
        ArrivalModel {
            positions: vec![(0.5, [axis(0.25), axis(0.25)]), (0.5, [axis(0.75), axis(0.75)])],
            times: vec![
                (1.0 / 3.0, time(5.0)),
                (1.0 / 3.0, time(20.0)),
                (1.0 / 3.0, time(40.0)),
            ],
        }
    }

    fn pick<T>(rng: &mut Rng, items: &[(f64, T)]) -> usize {
        let total: f64 = items.iter().map(|(w, _)| w).sum();
        let mut u = rng.random::<f64>() * total;
        for (i, (w, _)) in items.iter().enumerate() {
            if u < *w {
                return i;
            }
            u -= w;
        }
        items.len() - 1
    }

    pub fn sample_position(&self, rng: &mut Rng) -> [f64; 2] {
        let [dx, dy] = self.positions[Self::pick(rng, &self.positions)].1;
        [dx.sample(rng), dy.sample(rng)]
    }

    /// Arrival time drawn from the mixture conditioned on `t >= floor`.
    pub fn sample_time_after(&self, rng: &mut Rng, floor: f64) -> f64 {
        for _ in 0..10_000 {
            let comp = self.times[Self::pick(rng, &self.times)].1;
            let t = comp.sample(rng);
            if t >= floor {
                return t;
            }
        }
        // Only reachable when almost no mass remains above `floor`.
        let hi = self.times.iter().map(|(_, c)| c.hi).fold(floor, f64::max);
        rng.random_range(floor..=hi.max(floor))
    }

    pub fn time_cdf(&self, t: f64) -> f64 {
        let total: f64 = self.times.iter().map(|(w, _)| w).sum();
        self.times.iter().map(|(w, c)| w * c.cdf(t)).sum::<f64>() / total
    }

    pub fn sample_customer(&self, rng: &mut Rng, floor: f64) -> Customer {
        let [x, y] = self.sample_position(rng);
        Customer {
            x,
            y,
            demand: rng.random_range(1..=DEMAND_MAX),
            arrival: self.sample_time_after(rng, floor),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvrpState {
    /// Every customer the state may refer to; re-sampled futures are appended.
    pub customers: Arc<Vec<Customer>>,
    pub position: [f64; 2],
    pub at_depot: bool,
    pub capacity_left: u32,
    /// Revealed, unserved customers, sorted by id.
    pub pending: Vec<usize>,
    /// Unrevealed customers ordered by (arrival, id).
    pub future: VecDeque<usize>,
    pub clock: f64,
    pub distance: f64,
    pub served: usize,
    /// Customers that have become visible so far.
    pub revealed: usize,
}

#[derive(Debug, Clone)]
pub struct CvrpEnv {
    instance: Arc<CvrpInstance>,
    state: CvrpState,
}

impl CvrpEnv {
    pub fn new(instance: CvrpInstance) -> Result<Self> {
        instance.validate()?;
        let instance = Arc::new(instance);
        let state = Self::initial_state(&instance);
        let mut env = CvrpEnv { instance, state };
        env.settle(&mut 0.0);
        Ok(env)
    }

    fn initial_state(instance: &CvrpInstance) -> CvrpState {
        let mut order: Vec<usize> = (0..instance.customers.len()).collect();
        order.sort_by(|&a, &b| {
            instance.customers[a]
                .arrival
                .total_cmp(&instance.customers[b].arrival)
                .then(a.cmp(&b))
        });
        CvrpState {
            customers: Arc::new(instance.customers.clone()),
            position: instance.depot,
            at_depot: true,
            capacity_left: instance.capacity,
            pending: Vec::new(),
            future: order.into(),
            clock: 0.0,
            distance: 0.0,
            served: 0,
            revealed: 0,
        }
    }

    pub fn instance(&self) -> &CvrpInstance {
        &self.instance
    }

    pub fn state(&self) -> &CvrpState {
        &self.state
    }

    pub fn customer(&self, id: usize) -> &Customer {
        &self.state.customers[id]
    }

    fn reveal(&mut self) {
        let s = &mut self.state;
        while let Some(&id) = s.future.front() {
            if s.customers[id].arrival > s.clock {
                break;
            }
            s.future.pop_front();
            let at = s.pending.partition_point(|&p| p < id);
            s.pending.insert(at, id);
            s.revealed += 1;
        }
    }

    fn can_wait(&self) -> bool {
        self.instance.online && !self.state.future.is_empty()
    }

    /// Runs automatic moves until the next decision event or the end.
    /// Travel performed here is added to `traveled`.
    fn settle(&mut self, traveled: &mut f64) {
        self.reveal();
        loop {
            let s = &self.state;
            if s.pending.is_empty() && s.future.is_empty() {
                if !s.at_depot {
                    let d = dist(s.position, self.instance.depot);
                    *traveled += d;
                    self.move_to(self.instance.depot, d);
                    self.state.at_depot = true;
                    self.state.capacity_left = self.instance.capacity;
                }
                return;
            }
            if s.at_depot && s.pending.is_empty() {
                let next = s.customers[*s.future.front().expect("future nonempty")].arrival;
                self.state.clock = self.state.clock.max(next);
                self.reveal();
                continue;
            }
            return;
        }
    }

    fn move_to(&mut self, to: [f64; 2], d: f64) {
        let s = &mut self.state;
        s.position = to;
        s.clock += d / self.instance.velocity;
    }

    /// Index of the depot node in the state graph.
    pub fn depot_node(&self) -> usize {
        self.state.pending.len() + 1
    }

    fn check(&self, action: Action) -> Result<Option<Option<usize>>> {
        // Ok(Some(Some(id))) customer, Ok(Some(None)) depot, Ok(None) noop.
        let s = &self.state;
        match action {
            Action::Noop if self.can_wait() => Ok(None),
            Action::Noop => Err(Error::MaskingViolation("waiting is not allowed here".into())),
            Action::Edge(0, t) if (1..=s.pending.len()).contains(&t) => {
                let id = s.pending[t - 1];
                if s.customers[id].demand > s.capacity_left {
                    Err(Error::MaskingViolation(format!(
                        "customer {id} demand {} exceeds remaining capacity {}",
                        s.customers[id].demand, s.capacity_left
                    )))
                } else {
                    Ok(Some(Some(id)))
                }
            }
            Action::Edge(0, t) if t == self.depot_node() => {
                if s.at_depot {
                    Err(Error::MaskingViolation("vehicle is already at the depot".into()))
                } else {
                    Ok(Some(None))
                }
            }
            other => Err(Error::MaskingViolation(format!("{other} is not an edge of the state graph"))),
        }
    }
}

impl Environment for CvrpEnv {
    type Snapshot = CvrpState;

    fn reset(&mut self) {
        self.state = Self::initial_state(&self.instance);
        self.settle(&mut 0.0);
    }

    fn graph(&self) -> StateGraph {
        graph::encode_cvrp(self)
    }

    fn feasible_actions(&self) -> Vec<Action> {
        let s = &self.state;
        if self.is_terminal() {
            return Vec::new();
        }
        let mut out: Vec<Action> = s
            .pending
            .iter()
            .enumerate()
            .filter(|(_, &id)| s.customers[id].demand <= s.capacity_left)
            .map(|(k, _)| Action::Edge(0, k + 1))
            .collect();
        if !s.at_depot {
            out.push(Action::Edge(0, self.depot_node()));
        }
        if self.can_wait() {
            out.push(Action::Noop);
        }
        if out.is_empty() {
            log::error!("cvrp: decision state without feasible action");
        }
        out
    }

    fn step(&mut self, action: Action) -> Result<Transition> {
        if self.is_terminal() {
            return Err(Error::MaskingViolation("episode already finished".into()));
        }
        let before = self.state_key();
        let clock0 = self.state.clock;
        let target = self.check(action)?;
        let mut traveled = 0.0;
        match target {
            None => {
                let next = self.state.customers[*self.state.future.front().expect("can wait")].arrival;
                self.state.clock = self.state.clock.max(next);
                self.reveal();
            }
            Some(Some(id)) => {
                let c = self.state.customers[id];
                let d = dist(self.state.position, c.pos());
                traveled += d;
                self.move_to(c.pos(), d);
                let s = &mut self.state;
                s.at_depot = false;
                s.capacity_left -= c.demand;
                s.pending.retain(|&p| p != id);
                s.served += 1;
                self.reveal();
            }
            Some(None) => {
                let d = dist(self.state.position, self.instance.depot);
                traveled += d;
                self.move_to(self.instance.depot, d);
                self.state.at_depot = true;
                self.state.capacity_left = self.instance.capacity;
                self.reveal();
            }
        }
        self.settle(&mut traveled);
        self.state.distance += traveled;
        Ok(Transition {
            before,
            action,
            reward: -traveled,
            after: self.state_key(),
            terminal: self.is_terminal(),
            elapsed: self.state.clock - clock0,
        })
    }

    fn snapshot(&self) -> CvrpState {
        self.state.clone()
    }

    fn restore(&mut self, snapshot: &CvrpState) {
        self.state = snapshot.clone();
    }

    fn set_seed(&mut self, seed: u64) {
        if !self.instance.online {
            return;
        }
        let model = ArrivalModel::tgmm();
        let mut rng = rng::stream(seed, streams::FUTURE);
        let s = &mut self.state;
        let remaining = self.instance.customers.len().saturating_sub(s.revealed);
        let mut customers = (*s.customers).clone();
        let mut fresh: Vec<usize> = Vec::with_capacity(remaining);
        for _ in 0..remaining {
            let mut c = model.sample_customer(&mut rng, s.clock);
            c.demand = c.demand.min(self.instance.capacity);
            // Strictly after the present, otherwise it would already be visible.
            if c.arrival <= s.clock {
                c.arrival = next_after(s.clock);
            }
            fresh.push(customers.len());
            customers.push(c);
        }
        fresh.sort_by(|&a, &b| customers[a].arrival.total_cmp(&customers[b].arrival).then(a.cmp(&b)));
        s.customers = Arc::new(customers);
        s.future = fresh.into();
    }

    fn suppress_arrivals_after(&mut self, horizon: f64) {
        let s = &mut self.state;
        let customers = &s.customers;
        s.future.retain(|&id| customers[id].arrival <= horizon);
    }

    fn is_terminal(&self) -> bool {
        self.state.pending.is_empty() && self.state.future.is_empty()
    }

    fn is_online(&self) -> bool {
        self.instance.online
    }

    fn objective(&self) -> f64 {
        self.state.distance
    }

    fn clock(&self) -> f64 {
        self.state.clock
    }

    fn state_key(&self) -> u64 {
        let s = &self.state;
        let mut h = std::collections::hash_map::DefaultHasher::new();
        s.position[0].to_bits().hash(&mut h);
        s.position[1].to_bits().hash(&mut h);
        s.at_depot.hash(&mut h);
        s.capacity_left.hash(&mut h);
        quantize_clock(s.clock).hash(&mut h);
        s.served.hash(&mut h);
        s.revealed.hash(&mut h);
        for &id in &s.pending {
            let c = &s.customers[id];
            c.x.to_bits().hash(&mut h);
            c.y.to_bits().hash(&mut h);
            c.demand.hash(&mut h);
        }
        h.finish()
    }
}

pub(crate) fn quantize_clock(t: f64) -> i64 {
    (t * 1e9).round() as i64
}

fn next_after(t: f64) -> f64 {
    let bumped = t + t.abs().max(1.0) * 1e-9;
    if bumped > t {
        bumped
    } else {
        f64::from_bits(t.to_bits() + 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst(capacity: u32, customers: &[(f64, f64, u32, f64)], online: bool) -> CvrpInstance {
        CvrpInstance {
            capacity,
            velocity: 1.0,
            depot: [0.0, 0.0],
            customers: customers
                .iter()
                .map(|&(x, y, demand, arrival)| Customer { x, y, demand, arrival })
                .collect(),
            online,
        }
    }

    #[test]
    fn offline_generation_is_deterministic_and_in_range() {
        let a = generate_offline(20, 30, 7).unwrap();
        let b = generate_offline(20, 30, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate_offline(20, 30, 8).unwrap());
        let one = generate_offline(1, 30, 3).unwrap();
        assert_eq!(one.customers.len(), 1);
        assert!((1..=10).contains(&one.customers[0].demand));
        assert!(generate_offline(0, 30, 1).is_err());
    }

    #[test]
    fn offline_mean_demand() {
        let mut total = 0u64;
        let mut count = 0u64;
        for seed in 0..5000 {
            for c in generate_offline(20, 30, seed).unwrap().customers {
                total += c.demand as u64;
                count += 1;
            }
        }
        let mean = total as f64 / count as f64;
        assert!((mean - 5.5).abs() < 0.1, "mean demand {mean}");
    }

    #[test]
    fn online_generation_bounds() {
        for seed in 0..200 {
            let inst = generate_online(20, 30, seed).unwrap();
            assert!(inst.online);
            for c in &inst.customers {
                assert!((0.0..=1.0).contains(&c.x) && (0.0..=1.0).contains(&c.y));
                assert!((0.0..=ARRIVAL_HORIZON).contains(&c.arrival));
            }
        }
    }

    #[test]
    fn masking_by_capacity() {
        let mut env = CvrpEnv::new(inst(10, &[(0.1, 0.0, 8, 0.0), (0.2, 0.0, 5, 0.0), (0.3, 0.0, 7, 0.0)], false)).unwrap();
        // Serve the demand-8 customer, leaving c* = 2.
        env.step(Action::Edge(0, 1)).unwrap();
        assert_eq!(env.state().capacity_left, 2);
        assert_eq!(env.feasible_actions(), vec![Action::Edge(0, 3)]);
        assert!(matches!(env.step(Action::Edge(0, 1)), Err(Error::MaskingViolation(_))));
    }

    #[test]
    fn at_depot_no_depot_edge_and_offline_no_noop() {
        let env = CvrpEnv::new(inst(10, &[(0.1, 0.0, 5, 0.0), (0.2, 0.0, 7, 0.0)], false)).unwrap();
        assert_eq!(env.feasible_actions(), vec![Action::Edge(0, 1), Action::Edge(0, 2)]);
        let mut env2 = env.clone();
        assert!(env2.step(Action::Noop).is_err());
        assert!(env2.step(Action::Edge(0, 3)).is_err());
    }

    #[test]
    fn three_four_five_step() {
        let mut env = CvrpEnv::new(inst(10, &[(0.03, 0.04, 1, 0.0), (0.5, 0.5, 1, 0.0)], false)).unwrap();
        let t = env.step(Action::Edge(0, 1)).unwrap();
        assert!((t.reward + 0.05).abs() < 1e-15);
        assert!((t.elapsed - 0.05).abs() < 1e-15);
        assert!(!t.terminal);
    }

    #[test]
    fn two_customer_episode_includes_return() {
        let mut env = CvrpEnv::new(inst(10, &[(0.3, 0.0, 2, 0.0), (0.3, 0.4, 2, 0.0)], false)).unwrap();
        let mut total = 0.0;
        total += env.step(Action::Edge(0, 1)).unwrap().reward;
        let t = env.step(Action::Edge(0, 1)).unwrap();
        total += t.reward;
        assert!(t.terminal);
        // 0.3 + 0.4 + 0.5
        assert!((total + 1.2).abs() < 1e-12);
        assert_eq!(env.objective(), -total);
    }

    #[test]
    fn noop_waits_for_next_arrival() {
        let mut env = CvrpEnv::new(inst(10, &[(0.1, 0.0, 2, 0.0), (0.2, 0.0, 2, 5.0)], true)).unwrap();
        assert!(env.feasible_actions().contains(&Action::Noop));
        let t = env.step(Action::Noop).unwrap();
        assert_eq!(t.reward, 0.0);
        assert_eq!(env.clock(), 5.0);
        assert_eq!(env.state().pending.len(), 2);
    }

    #[test]
    fn online_depot_wait_is_automatic() {
        let env = CvrpEnv::new(inst(10, &[(0.1, 0.0, 2, 3.0)], true)).unwrap();
        assert_eq!(env.clock(), 3.0);
        assert_eq!(env.state().pending, vec![0]);
        // Nothing left to wait for.
        assert_eq!(env.feasible_actions(), vec![Action::Edge(0, 1)]);
    }

    #[test]
    fn customers_invisible_before_arrival() {
        let mut env = CvrpEnv::new(inst(10, &[(0.1, 0.0, 2, 0.0), (0.2, 0.0, 2, 0.15)], true)).unwrap();
        assert_eq!(env.state().pending, vec![0]);
        env.step(Action::Edge(0, 1)).unwrap();
        // Clock 0.1 < 0.15: still hidden, vehicle may go home or wait.
        assert!(env.state().pending.is_empty());
        assert_eq!(env.feasible_actions(), vec![Action::Edge(0, 1), Action::Noop]);
    }

    #[test]
    fn resampled_future_respects_clock_and_count() {
        let instance = generate_online(10, 30, 4).unwrap();
        let mut env = CvrpEnv::new(instance).unwrap();
        let snap = env.snapshot();
        env.set_seed(11);
        let s = env.state().clone();
        assert_eq!(s.future.len() + s.revealed, 10);
        for &id in &s.future {
            assert!(s.customers[id].arrival > s.clock);
        }
        env.restore(&snap);
        env.set_seed(11);
        assert_eq!(env.state(), &s);
    }

    #[test]
    fn truncated_normal_cdf_endpoints() {
        let tn = TruncatedNormal { mean: 5.0, sd: 3.0, lo: 0.0, hi: 40.0 };
        assert_eq!(tn.cdf(-1.0), 0.0);
        assert_eq!(tn.cdf(41.0), 1.0);
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-7);
        assert!((normal_cdf(1.96) - 0.975).abs() < 1e-4);
    }
}
