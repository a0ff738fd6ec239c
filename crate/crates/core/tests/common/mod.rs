//! Brute-force references that share no code with the environments.

#![allow(dead_code)]

pub mod netcheck;

fn d(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

/// Shortest single-vehicle tour set: every visiting order, each split into
/// consecutive depot-delimited trips by a shortest-path DP.
pub fn cvrp_optimum(depot: [f64; 2], points: &[[f64; 2]], demand: &[u32], capacity: u32) -> f64 {
    let n = points.len();
    let mut best = f64::INFINITY;
    for perm in permutations(n) {
        let mut cost = vec![f64::INFINITY; n + 1];
        cost[0] = 0.0;
        for i in 0..n {
            let mut load = 0;
            let mut inner = 0.0;
            for j in i..n {
                load += demand[perm[j]];
                if load > capacity {
                    break;
                }
                if j > i {
                    inner += d(points[perm[j - 1]], points[perm[j]]);
                }
                let trip = d(depot, points[perm[i]]) + inner + d(points[perm[j]], depot);
                cost[j + 1] = cost[j + 1].min(cost[i] + trip);
            }
        }
        best = best.min(cost[n]);
    }
    best
}

/// Job `(class, p, w)`, classes 1-based; a fresh machine pays no setup.
pub type RefJob = (usize, u64, u64);

/// Least weighted completion time over all non-delay schedules: whenever a
/// machine is free and work remains, some job starts on some free machine.
pub fn pmsp_optimum(m: usize, setup: &[Vec<u32>], jobs: &[RefJob]) -> u64 {
    fn go(avail: &mut [u64], last: &mut [usize], left: &mut Vec<usize>, setup: &[Vec<u32>], jobs: &[RefJob]) -> u64 {
        if left.is_empty() {
            return 0;
        }
        let t = *avail.iter().min().expect("at least one machine");
        let mut best = u64::MAX;
        for mi in 0..avail.len() {
            if avail[mi] != t {
                continue;
            }
            for li in 0..left.len() {
                let j = left.swap_remove(li);
                let (class, p, w) = jobs[j];
                let s = if last[mi] == 0 { 0 } else { setup[last[mi] - 1][class - 1] as u64 };
                let (a0, l0) = (avail[mi], last[mi]);
                avail[mi] = t + s + p;
                last[mi] = class;
                let v = w * avail[mi] + go(avail, last, left, setup, jobs);
                best = best.min(v);
                avail[mi] = a0;
                last[mi] = l0;
                left.push(j);
                let end = left.len() - 1;
                left.swap(li, end);
            }
        }
        best
    }
    let mut left: Vec<usize> = (0..jobs.len()).collect();
    go(&mut vec![0; m], &mut vec![0; m], &mut left, setup, jobs)
}

/// Single machine, no setups: the best order over all permutations.
pub fn single_machine_optimum(jobs: &[(u64, u64)]) -> u64 {
    permutations(jobs.len())
        .into_iter()
        .map(|perm| {
            let mut t = 0;
            perm.iter()
                .map(|&j| {
                    t += jobs[j].0;
                    jobs[j].1 * t
                })
                .sum()
        })
        .min()
        .expect("at least the empty order")
}
