//! Identical parallel machines with sequence-dependent setup times and a
//! total weighted completion time objective.
//!
//! Classes are numbered `1..=c`; class `0` marks a machine that has never been
//! assigned a job, from which every setup is free. All times in generated
//! instances are integers, which keeps the reward arithmetic exact.
//!
//! Reward: between events the cost grows by the weight of every arrived,
//! unfinished job times the elapsed time; when a job arrives at time `a` the
//! lump `w * a` is charged at once. Summed over an episode this is exactly
//! `-sum_j w_j c_j` with completion times on the absolute clock.

use std::collections::VecDeque;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use rand::Rng as _;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{self, StateGraph};
use crate::mdp::{Action, Environment, Transition};
use crate::rng::{self, streams, Rng};

pub const PROCESSING_MAX: u32 = 100;
pub const SETUP_MAX: u32 = 50;
pub const WEIGHT_MAX: u32 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub class: usize,
    pub p: u32,
    pub w: u32,
    #[serde(default)]
    pub arrival: f64,
}

/// Poisson arrivals at the start of each interval. The expected number of
/// class-`i` jobs per interval is proportional to `1/i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OnlineArrivalConfig {
    pub intervals: usize,
    pub interval_length: f64,
    pub expected_total_jobs: f64,
    pub classes: usize,
}

impl OnlineArrivalConfig {
    /// 3-machine setting: 16 intervals of 130 time units, 80 jobs expected.
    pub fn three_machines() -> Self {
        OnlineArrivalConfig {
            intervals: 16,
            interval_length: 130.0,
            expected_total_jobs: 80.0,
            classes: 5,
        }
    }

    /// 10-machine setting: 60 intervals of 10 time units, 80 jobs expected.
    pub fn ten_machines() -> Self {
        OnlineArrivalConfig {
            intervals: 60,
            interval_length: 10.0,
            expected_total_jobs: 80.0,
            classes: 5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.intervals == 0 || self.classes == 0 {
            return Err(Error::InvalidArgument("intervals and classes must be positive".into()));
        }
        if !(self.interval_length > 0.0) || !(self.expected_total_jobs > 0.0) {
            return Err(Error::InvalidArgument(
                "interval length and expected job count must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Per-interval Poisson rate of class `class` (1-based).
    pub fn rate(&self, class: usize) -> f64 {
        let harmonic: f64 = (1..=self.classes).map(|j| 1.0 / j as f64).sum();
        self.expected_total_jobs * (1.0 / class as f64) / harmonic / self.intervals as f64
    }

    pub fn interval_start(&self, k: usize) -> f64 {
        k as f64 * self.interval_length
    }

    /// End of the last arrival interval.
    pub fn horizon(&self) -> f64 {
        self.intervals as f64 * self.interval_length
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmspInstance {
    pub m: usize,
    pub c: usize,
    /// `setup[a-1][b-1]`: setup time when class `b` follows class `a`.
    pub setup: Vec<Vec<u32>>,
    pub jobs: Vec<Job>,
    /// Present on online instances; drives re-sampling of unseen arrivals.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arrivals: Option<OnlineArrivalConfig>,
}

impl PmspInstance {
    pub fn online(&self) -> bool {
        self.arrivals.is_some()
    }

    /// Setup time on a machine whose last class is `last` (0 = fresh).
    pub fn setup_time(&self, last: usize, class: usize) -> u32 {
        if last == 0 {
            0
        } else {
            self.setup[last - 1][class - 1]
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.c == 0 {
            return Err(Error::InvalidArgument("need at least one machine and one class".into()));
        }
        if self.setup.len() != self.c || self.setup.iter().any(|r| r.len() != self.c) {
            return Err(Error::InvalidArgument(format!("setup matrix must be {0}x{0}", self.c)));
        }
        if (0..self.c).any(|i| self.setup[i][i] != 0) {
            return Err(Error::InvalidArgument("setup diagonal must be zero".into()));
        }
        for (i, j) in self.jobs.iter().enumerate() {
            if !(1..=self.c).contains(&j.class) {
                return Err(Error::InvalidArgument(format!("job {i}: class {} outside 1..={}", j.class, self.c)));
            }
            if !(j.arrival >= 0.0) {
                return Err(Error::InvalidArgument(format!("job {i}: negative arrival")));
            }
        }
        if let Some(cfg) = &self.arrivals {
            cfg.validate()?;
            if cfg.classes != self.c {
                return Err(Error::InvalidArgument("arrival config class count differs".into()));
            }
        }
        Ok(())
    }

    /// Horizon used to normalise arrival features; 1 offline.
    pub fn arrival_scale(&self) -> f64 {
        self.arrivals.map_or(1.0, |a| a.horizon())
    }
}

fn sample_setup(rng: &mut Rng, c: usize) -> Vec<Vec<u32>> {
    (0..c)
        .map(|a| {
            (0..c)
                .map(|b| if a == b { 0 } else { rng.random_range(1..=SETUP_MAX) })
                .collect()
        })
        .collect()
}

fn sample_job(rng: &mut Rng, class: usize, arrival: f64) -> Job {
    Job {
        class,
        p: rng.random_range(1..=PROCESSING_MAX),
        w: rng.random_range(1..=WEIGHT_MAX),
        arrival,
    }
}

pub fn generate_offline(n: usize, m: usize, c: usize, seed: u64) -> Result<PmspInstance> {
    if n < 1 || m < 1 || c < 1 {
        return Err(Error::InvalidArgument("n, m and c must be positive".into()));
    }
    let mut rng = rng::stream(seed, streams::INSTANCE);
    let setup = sample_setup(&mut rng, c);
    let jobs = (0..n)
        .map(|_| {
            let class = rng.random_range(1..=c);
            sample_job(&mut rng, class, 0.0)
        })
        .collect();
    Ok(PmspInstance {
        m,
        c,
        setup,
        jobs,
        arrivals: None,
    })
}

pub fn generate_online(config: OnlineArrivalConfig, m: usize, seed: u64) -> Result<PmspInstance> {
    config.validate()?;
    if m < 1 {
        return Err(Error::InvalidArgument("need at least one machine".into()));
    }
    let mut rng = rng::stream(seed, streams::INSTANCE);
    let setup = sample_setup(&mut rng, config.classes);
    let jobs = sample_arrivals(&config, &mut rng, 0..config.intervals);
    Ok(PmspInstance {
        m,
        c: config.classes,
        setup,
        jobs,
        arrivals: Some(config),
    })
}

fn sample_arrivals(
    config: &OnlineArrivalConfig,
    rng: &mut Rng,
    intervals: std::ops::Range<usize>,
) -> Vec<Job> {
    let poissons: Vec<Poisson<f64>> = (1..=config.classes)
        .map(|i| Poisson::new(config.rate(i)).expect("rate is positive"))
        .collect();
    let mut jobs = Vec::new();
    for k in intervals {
        let start = config.interval_start(k);
        for (i, dist) in poissons.iter().enumerate() {
            let count = dist.sample(rng) as usize;
            for _ in 0..count {
                jobs.push(sample_job(rng, i + 1, start));
            }
        }
    }
    jobs
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Machine {
    pub remaining: f64,
    pub last_class: usize,
    pub job: Option<usize>,
}

impl Machine {
    pub fn is_free(&self) -> bool {
        self.remaining == 0.0
    }
}

/// Record of one assignment, kept for independent schedule replay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Assignment {
    pub job: usize,
    pub machine: usize,
    pub start: f64,
    pub setup: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PmspState {
    pub jobs: Arc<Vec<Job>>,
    pub machines: Vec<Machine>,
    /// Arrived, unassigned jobs sorted by id.
    pub pending: Vec<usize>,
    /// Unrevealed jobs ordered by (arrival, id).
    pub future: VecDeque<usize>,
    pub clock: f64,
    pub completed_weighted: f64,
    /// Weight of arrived jobs that have not completed yet.
    pub open_weight: f64,
    pub completions: Vec<(usize, f64)>,
    pub assignments: Vec<Assignment>,
    /// Intervals whose arrivals have been revealed.
    pub intervals_revealed: usize,
}

#[derive(Debug, Clone)]
pub struct PmspEnv {
    instance: Arc<PmspInstance>,
    state: PmspState,
}

impl PmspEnv {
    pub fn new(instance: PmspInstance) -> Result<Self> {
        instance.validate()?;
        let instance = Arc::new(instance);
        let state = Self::initial_state(&instance);
        let mut env = PmspEnv { instance, state };
        env.reveal();
        Ok(env)
    }

    fn initial_state(instance: &PmspInstance) -> PmspState {
        let mut order: Vec<usize> = (0..instance.jobs.len()).collect();
        order.sort_by(|&a, &b| {
            instance.jobs[a].arrival.total_cmp(&instance.jobs[b].arrival).then(a.cmp(&b))
        });
        PmspState {
            jobs: Arc::new(instance.jobs.clone()),
            machines: vec![
                Machine {
                    remaining: 0.0,
                    last_class: 0,
                    job: None
                };
                instance.m
            ],
            pending: Vec::new(),
            future: order.into(),
            clock: 0.0,
            completed_weighted: 0.0,
            open_weight: 0.0,
            completions: Vec::new(),
            assignments: Vec::new(),
            intervals_revealed: 0,
        }
    }

    pub fn instance(&self) -> &PmspInstance {
        &self.instance
    }

    pub fn state(&self) -> &PmspState {
        &self.state
    }

    pub fn job(&self, id: usize) -> &Job {
        &self.state.jobs[id]
    }

    fn reveal(&mut self) {
        let s = &mut self.state;
        while let Some(&id) = s.future.front() {
            let job = s.jobs[id];
            if job.arrival > s.clock {
                break;
            }
            s.future.pop_front();
            let at = s.pending.partition_point(|&p| p < id);
            s.pending.insert(at, id);
            s.open_weight += job.w as f64;
            s.completed_weighted += job.w as f64 * job.arrival - job.w as f64 * s.clock;
        }
        if let Some(cfg) = &self.instance.arrivals {
            while s.intervals_revealed < cfg.intervals && cfg.interval_start(s.intervals_revealed) <= s.clock {
                s.intervals_revealed += 1;
            }
        }
    }

    fn next_event(&self) -> Option<f64> {
        let s = &self.state;
        let busy = s
            .machines
            .iter()
            .filter(|m| !m.is_free())
            .map(|m| s.clock + m.remaining)
            .fold(f64::INFINITY, f64::min);
        let arrival = s.future.front().map_or(f64::INFINITY, |&id| s.jobs[id].arrival);
        let t = busy.min(arrival);
        t.is_finite().then_some(t)
    }

    fn has_decision(&self) -> bool {
        let s = &self.state;
        !s.pending.is_empty() && s.machines.iter().any(Machine::is_free)
    }

    /// Moves the clock to the next decision event. With `skip` set, at least
    /// one event is processed first (the effect of waiting).
    fn advance(&mut self, mut skip: bool) {
        self.reveal();
        loop {
            if !skip && self.has_decision() {
                return;
            }
            let Some(t) = self.next_event() else {
                return;
            };
            skip = false;
            let s = &mut self.state;
            let dt = t - s.clock;
            s.clock = t;
            for m in s.machines.iter_mut() {
                if m.is_free() {
                    continue;
                }
                m.remaining -= dt;
                if m.remaining <= 0.0 {
                    m.remaining = 0.0;
                    let id = m.job.take().expect("busy machine has a job");
                    let w = s.jobs[id].w as f64;
                    s.open_weight -= w;
                    s.completed_weighted += w * t;
                    s.completions.push((id, t));
                }
            }
            self.reveal();
        }
    }

    fn can_wait(&self) -> bool {
        self.instance.online() && self.next_event().is_some()
    }

    /// Node index of machine `i` in the state graph.
    pub fn machine_node(&self, i: usize) -> usize {
        self.state.pending.len() + i
    }
}

impl Environment for PmspEnv {
    type Snapshot = PmspState;

    fn reset(&mut self) {
        self.state = Self::initial_state(&self.instance);
        // Arrivals after time zero are revealed by the first (wait) step so
        // that their cost shows up in a reward.
        self.reveal();
    }

    fn graph(&self) -> StateGraph {
        graph::encode_pmsp(self)
    }

    fn feasible_actions(&self) -> Vec<Action> {
        if self.is_terminal() {
            return Vec::new();
        }
        let s = &self.state;
        let n = s.pending.len();
        let mut out = Vec::new();
        for j in 0..n {
            for (i, m) in s.machines.iter().enumerate() {
                if m.is_free() {
                    out.push(Action::Edge(j, n + i));
                }
            }
        }
        if self.can_wait() {
            out.push(Action::Noop);
        }
        out
    }

    fn step(&mut self, action: Action) -> Result<Transition> {
        if self.is_terminal() {
            return Err(Error::MaskingViolation("episode already finished".into()));
        }
        let before = self.state_key();
        let objective0 = self.objective();
        let clock0 = self.state.clock;
        match action {
            Action::Noop => {
                if !self.can_wait() {
                    return Err(Error::MaskingViolation("waiting is not allowed here".into()));
                }
                self.advance(true);
            }
            Action::Edge(j, node) => {
                let n = self.state.pending.len();
                if j >= n || node < n || node >= n + self.instance.m {
                    return Err(Error::MaskingViolation(format!("{action} is not an edge of the state graph")));
                }
                let i = node - n;
                if !self.state.machines[i].is_free() {
                    return Err(Error::MaskingViolation(format!("machine {i} is busy")));
                }
                let id = self.state.pending[j];
                let job = self.state.jobs[id];
                let setup = self.instance.setup_time(self.state.machines[i].last_class, job.class);
                let s = &mut self.state;
                s.pending.remove(j);
                s.machines[i] = Machine {
                    remaining: (setup + job.p) as f64,
                    last_class: job.class,
                    job: Some(id),
                };
                s.assignments.push(Assignment {
                    job: id,
                    machine: i,
                    start: s.clock,
                    setup,
                });
                if setup + job.p == 0 {
                    // Zero-length job completes on the spot.
                    let w = job.w as f64;
                    s.machines[i].job = None;
                    s.open_weight -= w;
                    s.completed_weighted += w * s.clock;
                    s.completions.push((id, s.clock));
                }
                self.advance(false);
            }
        }
        Ok(Transition {
            before,
            action,
            reward: objective0 - self.objective(),
            after: self.state_key(),
            terminal: self.is_terminal(),
            elapsed: self.state.clock - clock0,
        })
    }

    fn snapshot(&self) -> PmspState {
        self.state.clone()
    }

    fn restore(&mut self, snapshot: &PmspState) {
        self.state = snapshot.clone();
    }

    fn set_seed(&mut self, seed: u64) {
        let Some(cfg) = self.instance.arrivals else {
            return;
        };
        let mut rng = rng::stream(seed, streams::FUTURE);
        let s = &mut self.state;
        let fresh = sample_arrivals(&cfg, &mut rng, s.intervals_revealed..cfg.intervals);
        let mut jobs = (*s.jobs).clone();
        let first = jobs.len();
        jobs.extend(fresh.into_iter().map(|mut j| {
            j.class = j.class.min(self.instance.c);
            j
        }));
        // Already ordered by interval, then class, then draw.
        s.future = (first..jobs.len()).collect();
        s.jobs = Arc::new(jobs);
    }

    fn suppress_arrivals_after(&mut self, horizon: f64) {
        let s = &mut self.state;
        let jobs = &s.jobs;
        s.future.retain(|&id| jobs[id].arrival <= horizon);
    }

    fn is_terminal(&self) -> bool {
        let s = &self.state;
        s.pending.is_empty() && s.future.is_empty() && s.machines.iter().all(Machine::is_free)
    }

    fn is_online(&self) -> bool {
        self.instance.online()
    }

    fn objective(&self) -> f64 {
        let s = &self.state;
        s.completed_weighted + s.open_weight * s.clock
    }

    fn clock(&self) -> f64 {
        self.state.clock
    }

    fn state_key(&self) -> u64 {
        let s = &self.state;
        let mut h = std::collections::hash_map::DefaultHasher::new();
        crate::cvrp::quantize_clock(s.clock).hash(&mut h);
        for m in &s.machines {
            m.remaining.to_bits().hash(&mut h);
            m.last_class.hash(&mut h);
            m.job.map(|id| {
                let j = s.jobs[id];
                (j.w, j.class)
            })
            .hash(&mut h);
        }
        s.intervals_revealed.hash(&mut h);
        s.completions.len().hash(&mut h);
        for &id in &s.pending {
            let j = &s.jobs[id];
            (j.class, j.p, j.w, j.arrival.to_bits()).hash(&mut h);
        }
        h.finish()
    }
}
