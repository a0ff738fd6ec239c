//! Property checks over random episodes.

use combsearch::cvrp::{self, CvrpEnv};
use combsearch::mdp::{telescoping_check, Action, Environment};
use combsearch::pmsp::{self, OnlineArrivalConfig, PmspEnv};
use proptest::prelude::*;

/// Plays `choices` as indices into the feasible set, cycling when they run out.
fn play<E: Environment>(env: &mut E, choices: &[usize], mut check: impl FnMut(&E)) -> Vec<combsearch::mdp::Transition> {
    let mut out = Vec::new();
    let mut i = 0;
    while !env.is_terminal() {
        let acts = env.feasible_actions();
        assert!(!acts.is_empty(), "decision state without actions");
        let a = acts[choices[i % choices.len()] % acts.len()];
        i += 1;
        let before = env.clock();
        out.push(env.step(a).unwrap());
        assert!(env.clock() >= before, "clock went back");
        check(env);
        assert!(out.len() < 100_000);
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn routing_episodes(seed in 0u64..1000, n in 1usize..12, cap in 10u32..40, online in any::<bool>(),
                        choices in prop::collection::vec(0usize..64, 1..40)) {
        let inst = if online { cvrp::generate_online(n, cap, seed) } else { cvrp::generate_offline(n, cap, seed) }.unwrap();
        let total = inst.customers.len();
        let mut env = CvrpEnv::new(inst).unwrap();
        let trs = play(&mut env, &choices, |e: &CvrpEnv| {
            let s = e.state();
            assert!(s.capacity_left <= e.instance().capacity);
            assert_eq!(s.served + s.pending.len() + s.future.len(), total);
        });
        let sum = telescoping_check(&trs).unwrap();
        prop_assert!((sum + env.objective()).abs() <= 1e-9 * env.objective().max(1.0));
        prop_assert_eq!(env.state().served, total);
        prop_assert!(env.state().at_depot);
    }

    #[test]
    fn scheduling_episodes(seed in 0u64..1000, n in 1usize..15, m in 1usize..4, c in 1usize..4,
                           online in any::<bool>(), choices in prop::collection::vec(0usize..64, 1..40)) {
        let inst = if online {
            pmsp::generate_online(OnlineArrivalConfig { expected_total_jobs: n as f64, ..OnlineArrivalConfig::three_machines() }, m, seed)
        } else {
            pmsp::generate_offline(n, m, c, seed)
        }.unwrap();
        let jobs = inst.jobs.clone();
        let mut env = PmspEnv::new(inst).unwrap();
        let trs = play(&mut env, &choices, |e: &PmspEnv| {
            let busy = e.state().machines.iter().filter_map(|mc| mc.job).collect::<Vec<_>>();
            let mut dedup = busy.clone();
            dedup.sort_unstable();
            dedup.dedup();
            assert_eq!(busy.len(), dedup.len(), "job on two machines");
        });
        let completions = &env.state().completions;
        prop_assert_eq!(completions.len(), jobs.len());
        // Every job finishes after its arrival plus its processing time.
        let mut twct = 0.0;
        for &(j, t) in completions {
            prop_assert!(t >= jobs[j].arrival + f64::from(jobs[j].p) - 1e-9);
            twct += f64::from(jobs[j].w) * t;
        }
        let sum = telescoping_check(&trs).unwrap();
        prop_assert!((sum + twct).abs() <= 1e-9 * twct.max(1.0), "rewards {} vs twct {}", sum, twct);
    }

    #[test]
    fn snapshots_replay(seed in 0u64..1000, choices in prop::collection::vec(0usize..64, 1..20)) {
        let mut env = CvrpEnv::new(cvrp::generate_online(8, 30, seed).unwrap()).unwrap();
        let snap = env.snapshot();
        let first: Vec<(u64, Action)> = play(&mut env, &choices, |_: &CvrpEnv| {}).iter().map(|t| (t.after, t.action)).collect();
        env.restore(&snap);
        let again: Vec<(u64, Action)> = play(&mut env, &choices, |_: &CvrpEnv| {}).iter().map(|t| (t.after, t.action)).collect();
        prop_assert_eq!(first, again);
    }
}
