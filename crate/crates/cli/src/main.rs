use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use combsearch::baselines::{run_episode, GreedyPolicy, Policy, RoutePolicy, SearchPolicy};
use combsearch::bench::{self, BenchConfig, PolicySpec, Suite};
use combsearch::cvrp::{self, CvrpEnv};
use combsearch::dqn::{self, DqnConfig, Trainer};
use combsearch::heuristic;
use combsearch::io::{self, Instance};
use combsearch::mcts::{Mcts, SearchConfig};
use combsearch::mdp::Environment;
use combsearch::nn::{QNet, QNetConfig};
use combsearch::pmsp::{self, OnlineArrivalConfig, PmspEnv};

#[derive(Parser)]
#[command(version, about = "Graph Q-heuristics and tree search for routing and scheduling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a random instance as JSON.
    Generate {
        #[command(subcommand)]
        problem: GenerateProblem,
    },
    /// Convert a scheduling text file to instance JSON.
    Import {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = io::LIAO_FORMAT)]
        format: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a Q-network with DQN.
    Train(TrainArgs),
    /// Run one policy on one instance.
    Solve(SolveArgs),
    /// Paired runs of several policies over seeded suites.
    Bench(BenchArgs),
    /// Summarise an existing results CSV.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        reference: Option<String>,
        /// Write the summary as JSON here as well.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq)]
enum Mode {
    Offline,
    Online,
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq)]
enum Problem {
    Cvrp,
    Pmsp,
}

#[derive(Subcommand)]
enum GenerateProblem {
    Cvrp {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 30)]
        capacity: u32,
        #[arg(long, value_enum, default_value_t = Mode::Offline)]
        mode: Mode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    Pmsp {
        /// Number of jobs (offline only).
        #[arg(long, default_value_t = 80)]
        n: usize,
        #[arg(long, default_value_t = 3)]
        m: usize,
        #[arg(long, default_value_t = 5)]
        c: usize,
        #[arg(long, value_enum, default_value_t = Mode::Offline)]
        mode: Mode,
        #[command(flatten)]
        arrivals: ArrivalArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Online scheduling arrivals. Defaults follow the machine count: the
/// 10-machine preset for `--m 10`, the 3-machine preset otherwise.
#[derive(Args, Clone)]
struct ArrivalArgs {
    #[arg(long)]
    intervals: Option<usize>,
    #[arg(long)]
    interval_length: Option<f64>,
    #[arg(long)]
    expected_jobs: Option<f64>,
}

impl ArrivalArgs {
    fn config(&self, m: usize, c: usize) -> OnlineArrivalConfig {
        let base = if m == 10 {
            OnlineArrivalConfig::ten_machines()
        } else {
            OnlineArrivalConfig::three_machines()
        };
        OnlineArrivalConfig {
            intervals: self.intervals.unwrap_or(base.intervals),
            interval_length: self.interval_length.unwrap_or(base.interval_length),
            expected_total_jobs: self.expected_jobs.unwrap_or(base.expected_total_jobs),
            classes: c,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_enum)]
    problem: Problem,
    #[arg(long, value_enum, default_value_t = Mode::Offline)]
    mode: Mode,
    /// JSON object overriding fields of the problem's default DQN settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Customers or jobs per training instance.
    #[arg(long, default_value_t = 20)]
    n: usize,
    #[arg(long, default_value_t = 30)]
    capacity: u32,
    #[arg(long, default_value_t = 3)]
    m: usize,
    #[arg(long, default_value_t = 5)]
    c: usize,
    #[command(flatten)]
    arrivals: ArrivalArgs,
    #[arg(long)]
    total_steps: Option<usize>,
    /// Hidden width of the network.
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Checkpoint of the best evaluated network.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    metrics: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct SearchArgs {
    /// Heuristic for search and greedy policies: random, distance,
    /// nearness, nearest, wspt or qnet:<checkpoint>.
    #[arg(long)]
    heuristic: Option<String>,
    /// Seconds per decision.
    #[arg(long, alias = "budget-seconds")]
    time_budget: Option<f64>,
    #[arg(long)]
    rollouts: Option<usize>,
    /// Actions kept after pruning; all when omitted.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    /// Scale beta by the magnitude of the first rollout's return.
    #[arg(long)]
    relative_beta: bool,
    #[arg(long)]
    gamma: Option<f64>,
    /// Ignore arrivals later than this many time units ahead in rollouts.
    #[arg(long)]
    preemption: Option<f64>,
}

impl SearchArgs {
    fn given(&self) -> bool {
        self.time_budget.is_some()
            || self.rollouts.is_some()
            || self.k.is_some()
            || self.beta.is_some()
            || self.relative_beta
            || self.gamma.is_some()
            || self.preemption.is_some()
    }

    fn config(&self, problem: &str) -> SearchConfig {
        let base = bench::default_search(problem);
        SearchConfig {
            // A time budget alone should not be cut short by the default
            // rollout count.
            rollouts: self
                .rollouts
                .unwrap_or(if self.time_budget.is_some() { usize::MAX } else { base.rollouts }),
            time_budget: self.time_budget.or(base.time_budget),
            beta: self.beta.unwrap_or(base.beta),
            prune_k: self.k.or(base.prune_k),
            gamma: self.gamma.unwrap_or(base.gamma),
            preemption: self.preemption.unwrap_or(base.preemption),
            relative_beta: self.relative_beta || base.relative_beta,
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    instance: PathBuf,
    /// mcts, greedy, mcts:<heuristic>, greedy:<heuristic>, savings, sweep,
    /// sweep-nn, or a heuristic name.
    #[arg(long, default_value = "mcts")]
    policy: String,
    #[command(flatten)]
    search: SearchArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write objective and actions as JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Suite names (vrp20, vrp50, vrp100, vrp20-online, pmsp80,
    /// pmsp-online-3m, pmsp-online-10m) or cvrp:N:CAP, cvrp-online:N:CAP,
    /// pmsp:N:M:C. Repeatable; all defaults when omitted.
    #[arg(long = "suite")]
    suites: Vec<String>,
    /// Policy specs; repeatable.
    #[arg(long = "policy", required = true)]
    policies: Vec<String>,
    #[arg(long, default_value_t = 50)]
    seeds: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    search: SearchArgs,
    /// Parallel workers.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Policy that relative advantages are measured against.
    #[arg(long)]
    reference: Option<String>,
    /// Output directory for results.csv, timings.csv and summary.json.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Generate { problem } => generate(problem)?,
        Command::Import { input, format, out } => {
            let text = fs::read_to_string(&input).with_context(|| format!("reading {}", input.display()))?;
            Instance::Pmsp(io::parse_liao(&text, &format)?).save(&out)?;
        }
        Command::Train(args) => train(args)?,
        Command::Solve(args) => solve(args)?,
        Command::Bench(args) => return bench_cmd(args),
        Command::Report { input, reference, out } => {
            let records = bench::read_records(&input)?;
            let summary = bench::summarize(&records, reference.as_deref());
            print!("{}", bench::render(&summary));
            if let Some(out) = out {
                fs::write(out, serde_json::to_string_pretty(&summary)? + "\n")?;
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn generate(problem: GenerateProblem) -> Result<()> {
    let (inst, out) = match problem {
        GenerateProblem::Cvrp {
            n,
            capacity,
            mode,
            seed,
            out,
        } => {
            let inst = match mode {
                Mode::Offline => cvrp::generate_offline(n, capacity, seed)?,
                Mode::Online => cvrp::generate_online(n, capacity, seed)?,
            };
            (Instance::Cvrp(inst), out)
        }
        GenerateProblem::Pmsp {
            n,
            m,
            c,
            mode,
            arrivals,
            seed,
            out,
        } => {
            let inst = match mode {
                Mode::Offline => pmsp::generate_offline(n, m, c, seed)?,
                Mode::Online => pmsp::generate_online(arrivals.config(m, c), m, seed)?,
            };
            (Instance::Pmsp(inst), out)
        }
    };
    inst.save(&out)?;
    log::info!("wrote {} instance to {}", inst.problem(), out.display());
    Ok(())
}

fn dqn_config(args: &TrainArgs) -> Result<DqnConfig> {
    let base = match args.problem {
        Problem::Cvrp => DqnConfig::cvrp(),
        Problem::Pmsp => DqnConfig::pmsp(args.mode == Mode::Online),
    };
    let mut value = serde_json::to_value(base)?;
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let overrides: serde_json::Value = serde_json::from_str(&text)?;
        let Some(fields) = overrides.as_object() else {
            bail!("{} must hold a JSON object", path.display());
        };
        for (k, v) in fields {
            if value.get(k).is_none() {
                bail!("unknown DQN setting {k:?}");
            }
            value[k] = v.clone();
        }
    }
    let mut config: DqnConfig = serde_json::from_value(value)?;
    if let Some(t) = args.total_steps {
        config.total_steps = t;
    }
    Ok(config)
}

fn train(args: TrainArgs) -> Result<()> {
    let config = dqn_config(&args)?;
    let online = args.mode == Mode::Online;
    let outcome = match args.problem {
        Problem::Cvrp => {
            let (n, cap) = (args.n, args.capacity);
            let make = move |s: u64| {
                CvrpEnv::new(if online {
                    cvrp::generate_online(n, cap, s)?
                } else {
                    cvrp::generate_offline(n, cap, s)?
                })
            };
            let mut net = QNetConfig::cvrp();
            net.hidden = args.hidden.unwrap_or(net.hidden);
            Trainer::new(config, &make, args.seed)?.run(QNet::new(net, args.seed)?)?
        }
        Problem::Pmsp => {
            let (n, m, c) = (args.n, args.m, args.c);
            let arrivals = args.arrivals.config(m, c);
            let make = move |s: u64| {
                PmspEnv::new(if online {
                    pmsp::generate_online(arrivals, m, s)?
                } else {
                    pmsp::generate_offline(n, m, c, s)?
                })
            };
            let mut net = QNetConfig::pmsp(c);
            net.hidden = args.hidden.unwrap_or(net.hidden);
            Trainer::new(config, &make, args.seed)?.run(QNet::new(net, args.seed)?)?
        }
    };
    outcome.best.save(&args.out)?;
    if let Some(path) = &args.metrics {
        dqn::write_metrics(path, &outcome.metrics)?;
    }
    match outcome.best_eval {
        Some(r) => log::info!("best evaluation return {r:.4}; saved {}", args.out.display()),
        None => log::info!("no evaluation ran; saved initial network to {}", args.out.display()),
    }
    Ok(())
}

fn solve_with<E: Environment>(
    env: E,
    policy: &str,
    search: &SearchArgs,
    problem: &str,
    seed: u64,
    planner: Option<Box<dyn Policy<E>>>,
) -> Result<(f64, Vec<combsearch::Action>)> {
    let mut env = env;
    let default_h = if problem == "cvrp" { "distance" } else { "wspt" };
    let (kind, named) = match policy.split_once(':') {
        Some((kind, h)) if kind == "mcts" || kind == "greedy" => (kind, Some(h)),
        _ => (policy, None),
    };
    let h = heuristic::from_spec(named.or(search.heuristic.as_deref()).unwrap_or(default_h))?;
    let mut policy: Box<dyn Policy<E>> = match (kind, planner) {
        (_, Some(p)) => p,
        ("mcts", None) => Box::new(SearchPolicy::new(Mcts::new(search.config(problem), h)?, seed)),
        ("greedy", None) => Box::new(GreedyPolicy::new(h, seed)),
        (name, None) => Box::new(GreedyPolicy::new(heuristic::from_spec(name)?, seed)),
    };
    Ok(run_episode(&mut env, policy.as_mut())?)
}

fn solve(args: SolveArgs) -> Result<()> {
    let inst = Instance::load(&args.instance).with_context(|| format!("loading {}", args.instance.display()))?;
    let problem = inst.problem();
    let (objective, actions) = match &inst {
        Instance::Cvrp(_) => {
            let planner: Option<Box<dyn Policy<CvrpEnv>>> = match PolicySpec::parse(&args.policy) {
                Ok(PolicySpec::Route(p)) => Some(Box::new(RoutePolicy::new(p))),
                _ => None,
            };
            solve_with(inst.cvrp_env()?, &args.policy, &args.search, problem, args.seed, planner)?
        }
        Instance::Pmsp(_) => solve_with(inst.pmsp_env()?, &args.policy, &args.search, problem, args.seed, None)?,
    };
    println!("objective {objective}");
    if let Some(out) = &args.out {
        let body = serde_json::json!({
            "problem": problem,
            "policy": args.policy,
            "objective": objective,
            "actions": actions.iter().map(|a| a.to_string()).collect::<Vec<_>>(),
        });
        fs::write(out, serde_json::to_string_pretty(&body)? + "\n")?;
    }
    Ok(())
}

fn bench_cmd(args: BenchArgs) -> Result<ExitCode> {
    let suites: Vec<Suite> = if args.suites.is_empty() {
        Suite::defaults()
    } else {
        args.suites.iter().map(|s| Suite::parse(s)).collect::<combsearch::Result<_>>()?
    };
    let policies: Vec<(String, PolicySpec)> = args
        .policies
        .iter()
        .map(|p| Ok((p.clone(), PolicySpec::parse(p)?)))
        .collect::<combsearch::Result<_>>()?;
    fs::create_dir_all(&args.out)?;
    let mut records = Vec::new();
    let mut timings = Vec::new();
    for suite in &suites {
        let config = BenchConfig {
            seeds: (args.seed..args.seed + args.seeds).collect(),
            search: args.search.given().then(|| args.search.config(suite.problem())),
            workers: args.jobs,
        };
        if let Some(t) = args.search.time_budget {
            log::info!(
                "{}: worst-case search time {:.0} s per instance",
                suite.name,
                bench::worst_case_runtime(suite, t)
            );
        }
        let (r, t) = bench::run_suite(suite, &policies, &config)?;
        records.extend(r);
        timings.extend(t);
    }
    write_outputs(&args.out, &records, &timings, args.reference.as_deref())?;
    let failed = records.iter().filter(|r| !r.ok()).count();
    if failed > 0 {
        log::error!("{failed} of {} runs failed", records.len());
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn write_outputs(
    dir: &Path,
    records: &[bench::RunRecord],
    timings: &[bench::Timing],
    reference: Option<&str>,
) -> Result<()> {
    bench::write_records(&dir.join("results.csv"), records)?;
    bench::write_timings(&dir.join("timings.csv"), timings)?;
    let summary = bench::summarize(records, reference);
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    print!("{}", bench::render(&summary));
    Ok(())
}
