//! Paired benchmark runs: every policy sees the same instance for a seed.
//!
//! Results go to a long CSV (one row per suite, policy and seed) that holds
//! no timing data, so repeated runs with the same flags are byte-identical.
//! Wall times go to a separate file.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{GreedyPolicy, Planner, Policy, RoutePolicy, SearchPolicy, SweepOrder};
use crate::cvrp::{self, CvrpEnv};
use crate::error::{Error, Result};
use crate::heuristic::{self, Heuristic};
use crate::io::Instance;
use crate::mcts::{Mcts, SearchConfig};
use crate::mdp::{Action, Environment};
use crate::pmsp::{self, OnlineArrivalConfig, PmspEnv};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SuiteKind {
    CvrpOffline { n: usize, capacity: u32 },
    CvrpOnline { n: usize, capacity: u32 },
    PmspOffline { n: usize, m: usize, c: usize },
    PmspOnline { arrivals: OnlineArrivalConfig, m: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Suite {
    pub name: String,
    pub kind: SuiteKind,
}

impl Suite {
    /// Named suites, or `cvrp:N:CAP`, `cvrp-online:N:CAP`, `pmsp:N:M:C`.
    pub fn parse(spec: &str) -> Result<Suite> {
        let kind = match spec {
            "vrp20" => SuiteKind::CvrpOffline { n: 20, capacity: 30 },
            "vrp50" => SuiteKind::CvrpOffline { n: 50, capacity: 40 },
            "vrp100" => SuiteKind::CvrpOffline { n: 100, capacity: 50 },
            "vrp20-online" => SuiteKind::CvrpOnline { n: 20, capacity: 30 },
            "vrp50-online" => SuiteKind::CvrpOnline { n: 50, capacity: 40 },
            "vrp100-online" => SuiteKind::CvrpOnline { n: 100, capacity: 50 },
            "pmsp80" => SuiteKind::PmspOffline { n: 80, m: 3, c: 5 },
            "pmsp-online-3m" => SuiteKind::PmspOnline {
                arrivals: OnlineArrivalConfig::three_machines(),
                m: 3,
            },
            "pmsp-online-10m" => SuiteKind::PmspOnline {
                arrivals: OnlineArrivalConfig::ten_machines(),
                m: 10,
            },
            _ => {
                let parts: Vec<&str> = spec.split(':').collect();
                let num = |s: &str| -> Result<usize> {
                    s.parse()
                        .map_err(|_| Error::InvalidArgument(format!("bad number {s:?} in suite {spec:?}")))
                };
                match parts.as_slice() {
                    ["cvrp", n, cap] => SuiteKind::CvrpOffline {
                        n: num(n)?,
                        capacity: num(cap)? as u32,
                    },
                    ["cvrp-online", n, cap] => SuiteKind::CvrpOnline {
                        n: num(n)?,
                        capacity: num(cap)? as u32,
                    },
                    ["pmsp", n, m, c] => SuiteKind::PmspOffline {
                        n: num(n)?,
                        m: num(m)?,
                        c: num(c)?,
                    },
                    _ => return Err(Error::InvalidArgument(format!("unknown suite {spec:?}"))),
                }
            }
        };
        Ok(Suite {
            name: spec.to_string(),
            kind,
        })
    }

    pub fn defaults() -> Vec<Suite> {
        ["vrp20", "vrp50", "vrp100", "vrp20-online", "pmsp80", "pmsp-online-3m", "pmsp-online-10m"]
            .iter()
            .map(|s| Suite::parse(s).expect("built-in suite"))
            .collect()
    }

    pub fn problem(&self) -> &'static str {
        match self.kind {
            SuiteKind::CvrpOffline { .. } | SuiteKind::CvrpOnline { .. } => "cvrp",
            SuiteKind::PmspOffline { .. } | SuiteKind::PmspOnline { .. } => "pmsp",
        }
    }

    pub fn instance(&self, seed: u64) -> Result<Instance> {
        Ok(match self.kind {
            SuiteKind::CvrpOffline { n, capacity } => Instance::Cvrp(cvrp::generate_offline(n, capacity, seed)?),
            SuiteKind::CvrpOnline { n, capacity } => Instance::Cvrp(cvrp::generate_online(n, capacity, seed)?),
            SuiteKind::PmspOffline { n, m, c } => Instance::Pmsp(pmsp::generate_offline(n, m, c, seed)?),
            SuiteKind::PmspOnline { arrivals, m } => Instance::Pmsp(pmsp::generate_online(arrivals, m, seed)?),
        })
    }

    /// Upper bound on the number of decisions, used for worst-case runtime.
    pub fn decision_bound(&self) -> f64 {
        match self.kind {
            SuiteKind::CvrpOffline { n, .. } => 2.0 * n as f64,
            SuiteKind::CvrpOnline { n, .. } => 3.0 * n as f64,
            SuiteKind::PmspOffline { n, .. } => n as f64,
            SuiteKind::PmspOnline { arrivals, .. } => arrivals.expected_total_jobs,
        }
    }
}

/// Decision bound times the per-decision budget.
pub fn worst_case_runtime(suite: &Suite, budget_seconds: f64) -> f64 {
    suite.decision_bound() * budget_seconds
}

/// Mean of the paired relative differences `(a - ref) / ref`.
pub fn relative_advantage(values: &[f64], reference: &[f64]) -> Result<f64> {
    if values.len() != reference.len() || values.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "need equal nonempty lists, got {} and {}",
            values.len(),
            reference.len()
        )));
    }
    let mut total = 0.0;
    for (i, (&a, &r)) in values.iter().zip(reference).enumerate() {
        if r == 0.0 {
            return Err(Error::ZeroReference(i));
        }
        total += (a - r) / r;
    }
    Ok(total / values.len() as f64)
}

#[derive(Clone)]
pub enum PolicySpec {
    Greedy(Arc<dyn Heuristic>),
    Route(Planner),
    Search(Arc<dyn Heuristic>),
}

impl PolicySpec {
    /// `random`, `distance`, `nearness`, `nearest`, `wspt`, `savings`,
    /// `sweep`, `sweep-nn`, `greedy:<heuristic>` or `mcts:<heuristic>`.
    pub fn parse(spec: &str) -> Result<PolicySpec> {
        Ok(match spec {
            "savings" => PolicySpec::Route(Planner::Savings),
            "sweep" => PolicySpec::Route(Planner::Sweep(SweepOrder::Angular)),
            "sweep-nn" => PolicySpec::Route(Planner::Sweep(SweepOrder::Nearest)),
            _ => {
                if let Some(h) = spec.strip_prefix("mcts:") {
                    PolicySpec::Search(heuristic::from_spec(h)?)
                } else if let Some(h) = spec.strip_prefix("greedy:") {
                    PolicySpec::Greedy(heuristic::from_spec(h)?)
                } else {
                    PolicySpec::Greedy(heuristic::from_spec(spec)?)
                }
            }
        })
    }

    fn cvrp_policy(&self, seed: u64, search: &SearchConfig) -> Result<Box<dyn Policy<CvrpEnv>>> {
        Ok(match self {
            PolicySpec::Greedy(h) => Box::new(GreedyPolicy::new(h.clone(), seed)),
            PolicySpec::Route(p) => Box::new(RoutePolicy::new(*p)),
            PolicySpec::Search(h) => Box::new(SearchPolicy::new(Mcts::new(*search, h.clone())?, seed)),
        })
    }

    fn pmsp_policy(&self, seed: u64, search: &SearchConfig) -> Result<Box<dyn Policy<PmspEnv>>> {
        Ok(match self {
            PolicySpec::Greedy(h) => Box::new(GreedyPolicy::new(h.clone(), seed)),
            PolicySpec::Route(_) => {
                return Err(Error::InvalidArgument("route planners only apply to routing".into()));
            }
            PolicySpec::Search(h) => Box::new(SearchPolicy::new(Mcts::new(*search, h.clone())?, seed)),
        })
    }
}

/// Search settings used when none are given: all actions for routing,
/// the ten best for scheduling.
pub fn default_search(problem: &str) -> SearchConfig {
    SearchConfig {
        prune_k: if problem == "pmsp" { Some(10) } else { None },
        ..SearchConfig::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub suite: String,
    pub policy: String,
    pub seed: u64,
    pub status: String,
    pub objective: Option<f64>,
    pub decisions: usize,
    pub instance_hash: String,
    /// Space-separated actions as printed by `Action`'s `Display`.
    pub actions: String,
}

impl RunRecord {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }

    pub fn parsed_actions(&self) -> Result<Vec<Action>> {
        self.actions.split_whitespace().map(str::parse).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub suite: String,
    pub policy: String,
    pub seed: u64,
    pub wall_seconds: f64,
    pub seconds_per_decision: f64,
}

/// Replays `actions` on a fresh environment and returns the objective.
pub fn replay(instance: &Instance, actions: &[Action]) -> Result<f64> {
    fn go<E: Environment>(mut env: E, actions: &[Action]) -> Result<f64> {
        for &a in actions {
            env.step(a)?;
        }
        if !env.is_terminal() {
            return Err(Error::Internal("replayed episode did not terminate".into()));
        }
        Ok(env.objective())
    }
    match instance {
        Instance::Cvrp(_) => go(instance.cvrp_env()?, actions),
        Instance::Pmsp(_) => go(instance.pmsp_env()?, actions),
    }
}

fn timed_episode<E: Environment>(mut env: E, policy: &mut dyn Policy<E>) -> Result<(f64, Vec<Action>, f64)> {
    let mut actions = Vec::new();
    let mut thinking = 0.0;
    while !env.is_terminal() {
        let t = Instant::now();
        let a = policy.decide(&env)?;
        thinking += t.elapsed().as_secs_f64();
        env.step(a)?;
        actions.push(a);
    }
    Ok((env.objective(), actions, thinking))
}

pub struct BenchConfig {
    pub seeds: Vec<u64>,
    /// Search settings; `None` means [`default_search`] per problem.
    pub search: Option<SearchConfig>,
    pub workers: usize,
}

fn run_one(
    suite: &Suite,
    name: &str,
    spec: &PolicySpec,
    seed: u64,
    instance: &Instance,
    hash: &str,
    search: &SearchConfig,
) -> (RunRecord, Timing) {
    let start = Instant::now();
    let result = match instance {
        Instance::Cvrp(_) => instance
            .cvrp_env()
            .and_then(|env| timed_episode(env, spec.cvrp_policy(seed, search)?.as_mut())),
        Instance::Pmsp(_) => instance
            .pmsp_env()
            .and_then(|env| timed_episode(env, spec.pmsp_policy(seed, search)?.as_mut())),
    };
    let result = result.and_then(|(v, actions, thinking)| {
        let again = replay(instance, &actions)?;
        if (again - v).abs() > 1e-9 {
            return Err(Error::Internal(format!("replay gives {again}, run gave {v}")));
        }
        Ok((v, actions, thinking))
    });
    let wall = start.elapsed().as_secs_f64();
    let (record, per_decision) = match result {
        Ok((v, actions, thinking)) => (
            RunRecord {
                suite: suite.name.clone(),
                policy: name.to_string(),
                seed,
                status: "ok".into(),
                objective: Some(v),
                decisions: actions.len(),
                instance_hash: hash.to_string(),
                actions: actions.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(" "),
            },
            thinking / actions.len().max(1) as f64,
        ),
        Err(e) => {
            log::warn!("{} / {name} / seed {seed} failed: {e}", suite.name);
            (
                RunRecord {
                    suite: suite.name.clone(),
                    policy: name.to_string(),
                    seed,
                    status: format!("failed: {e}"),
                    objective: None,
                    decisions: 0,
                    instance_hash: hash.to_string(),
                    actions: String::new(),
                },
                0.0,
            )
        }
    };
    let timing = Timing {
        suite: suite.name.clone(),
        policy: name.to_string(),
        seed,
        wall_seconds: wall,
        seconds_per_decision: per_decision,
    };
    (record, timing)
}

/// Runs every policy on every seed of `suite`. Output order is by seed, then
/// by the order of `policies`, whatever the worker count.
pub fn run_suite(
    suite: &Suite,
    policies: &[(String, PolicySpec)],
    config: &BenchConfig,
) -> Result<(Vec<RunRecord>, Vec<Timing>)> {
    let search = config.search.unwrap_or_else(|| default_search(suite.problem()));
    search.validate()?;
    let instances = config
        .seeds
        .iter()
        .map(|&s| {
            let inst = suite.instance(s)?;
            let hash = inst.content_hash()?;
            Ok((s, inst, hash))
        })
        .collect::<Result<Vec<_>>>()?;
    let tasks: Vec<(usize, usize)> = (0..instances.len())
        .flat_map(|i| (0..policies.len()).map(move |p| (i, p)))
        .collect();
    let work = |&(i, p): &(usize, usize)| {
        let (seed, inst, hash) = &instances[i];
        let (name, spec) = &policies[p];
        run_one(suite, name, spec, *seed, inst, hash, &search)
    };
    let results: Vec<(RunRecord, Timing)> = if config.workers <= 1 {
        tasks.iter().map(work).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| Error::Internal(format!("worker pool: {e}")))?;
        pool.install(|| tasks.par_iter().map(work).collect())
    };
    Ok(results.into_iter().unzip())
}

pub fn write_records(path: &Path, records: &[RunRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<RunRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn write_timings(path: &Path, timings: &[Timing]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for t in timings {
        w.serialize(t)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub policy: String,
    pub instances: usize,
    pub failed: usize,
    pub mean_objective: Option<f64>,
    /// Against the reference policy over seeds where both succeeded.
    pub relative_advantage: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSummary {
    pub suite: String,
    pub reference: Option<String>,
    pub policies: Vec<PolicySummary>,
}

/// Per-suite means and relative advantage against `reference`. Policies keep
/// the order in which they first appear.
pub fn summarize(records: &[RunRecord], reference: Option<&str>) -> Vec<SuiteSummary> {
    let mut suites: Vec<String> = Vec::new();
    for r in records {
        if !suites.contains(&r.suite) {
            suites.push(r.suite.clone());
        }
    }
    suites
        .into_iter()
        .map(|suite| {
            let rows: Vec<&RunRecord> = records.iter().filter(|r| r.suite == suite).collect();
            let mut names: Vec<String> = Vec::new();
            for r in &rows {
                if !names.contains(&r.policy) {
                    names.push(r.policy.clone());
                }
            }
            let values = |name: &str| -> BTreeMap<u64, f64> {
                rows.iter()
                    .filter(|r| r.policy == name && r.ok())
                    .filter_map(|r| r.objective.map(|v| (r.seed, v)))
                    .collect()
            };
            let ref_values = reference.map(values);
            let policies = names
                .iter()
                .map(|name| {
                    let mine = values(name);
                    let total = rows.iter().filter(|r| &r.policy == name).count();
                    let mean = (!mine.is_empty()).then(|| mine.values().sum::<f64>() / mine.len() as f64);
                    let relative = ref_values.as_ref().and_then(|rv| {
                        let (a, b): (Vec<f64>, Vec<f64>) = mine
                            .iter()
                            .filter_map(|(s, &v)| rv.get(s).map(|&r| (v, r)))
                            .unzip();
                        match relative_advantage(&a, &b) {
                            Ok(x) => Some(x),
                            Err(e) => {
                                log::warn!("{suite}: no relative advantage for {name}: {e}");
                                None
                            }
                        }
                    });
                    PolicySummary {
                        policy: name.clone(),
                        instances: total,
                        failed: total - mine.len(),
                        mean_objective: mean,
                        relative_advantage: relative,
                    }
                })
                .collect();
            SuiteSummary {
                suite,
                reference: reference.map(str::to_string),
                policies,
            }
        })
        .collect()
}

/// Plain-text table of a summary.
pub fn render(summaries: &[SuiteSummary]) -> String {
    let mut out = String::new();
    for s in summaries {
        out.push_str(&format!("{}\n", s.suite));
        for p in &s.policies {
            let mean = p.mean_objective.map_or("-".to_string(), |v| format!("{v:.4}"));
            let rel = p.relative_advantage.map_or("-".to_string(), |v| format!("{:+.2}%", 100.0 * v));
            out.push_str(&format!(
                "  {:<24} mean {:>12}  vs ref {:>9}  ok {}/{}\n",
                p.policy,
                mean,
                rel,
                p.instances - p.failed,
                p.instances
            ));
        }
    }
    out
}
