//! Action scorers used greedily, as out-of-tree rollout policies and for
//! pruning. Masked slots always score `-inf`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::graph::StateGraph;
use crate::nn::QNet;
use crate::rng::{self, Rng};

pub trait Heuristic: Send + Sync {
    fn name(&self) -> String;
    /// One score per action slot of `graph`.
    fn scores(&self, graph: &StateGraph, rng: &mut Rng) -> Result<Vec<f64>>;
}

/// Index of the highest score; ties go to the lowest index.
pub fn best_index(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        if s > f64::NEG_INFINITY && best.is_none_or(|b| s > scores[b]) {
            best = Some(i);
        }
    }
    best
}

pub struct QNetHeuristic(pub Arc<QNet>);

impl Heuristic for QNetHeuristic {
    fn name(&self) -> String {
        "qnet".into()
    }

    fn scores(&self, graph: &StateGraph, _rng: &mut Rng) -> Result<Vec<f64>> {
        let q = self.0.q_values(graph)?;
        Ok(q.into_iter()
            .zip(&graph.mask)
            .map(|(q, &m)| if m { q } else { f64::NEG_INFINITY })
            .collect())
    }
}

/// Uniform choice among feasible actions via Gumbel noise.
pub struct RandomHeuristic;

impl Heuristic for RandomHeuristic {
    fn name(&self) -> String {
        "random".into()
    }

    fn scores(&self, graph: &StateGraph, rng: &mut Rng) -> Result<Vec<f64>> {
        Ok(graph
            .mask
            .iter()
            .map(|&m| if m { rng::gumbel(rng) } else { f64::NEG_INFINITY })
            .collect())
    }
}

/// CVRP: a feasible customer with probability proportional to its distance
/// from the vehicle; the depot only when no customer is feasible; waiting
/// only when neither is.
pub struct DistanceHeuristic;

const CUSTOMER_SLOT: usize = 5;
const DEPOT_SLOT: usize = 6;

impl Heuristic for DistanceHeuristic {
    fn name(&self) -> String {
        "distance".into()
    }

    fn scores(&self, graph: &StateGraph, rng: &mut Rng) -> Result<Vec<f64>> {
        if graph.node_width != crate::graph::CVRP_NODE_WIDTH {
            return Err(Error::InvalidArgument("distance heuristic needs a routing graph".into()));
        }
        let mut out = vec![f64::NEG_INFINITY; graph.actions.len()];
        let mut any_customer = false;
        for (k, &(_, t)) in graph.edges.iter().enumerate() {
            if graph.mask[k] && graph.node_row(t)[CUSTOMER_SLOT] == 1.0 {
                let d = graph.edge_row(k)[0].max(1e-12);
                out[k] = d.ln() + rng::gumbel(rng);
                any_customer = true;
            }
        }
        if !any_customer {
            let depot = graph
                .edges
                .iter()
                .enumerate()
                .find(|&(k, &(_, t))| graph.mask[k] && graph.node_row(t)[DEPOT_SLOT] == 1.0);
            if let Some((k, _)) = depot {
                out[k] = 0.0;
            } else if graph.mask[graph.noop_index()] {
                out[graph.noop_index()] = 0.0;
            }
        }
        Ok(out)
    }
}

/// CVRP: like [`DistanceHeuristic`] but with probability proportional to
/// the inverse distance, so nearby customers are favoured.
pub struct NearnessHeuristic;

impl Heuristic for NearnessHeuristic {
    fn name(&self) -> String {
        "nearness".into()
    }

    fn scores(&self, graph: &StateGraph, rng: &mut Rng) -> Result<Vec<f64>> {
        let mut out = DistanceHeuristic.scores(graph, rng)?;
        for (k, &(_, t)) in graph.edges.iter().enumerate() {
            if out[k].is_finite() && graph.node_row(t)[CUSTOMER_SLOT] == 1.0 {
                // ln d + G becomes -ln d + G with fresh noise.
                let d = graph.edge_row(k)[0].max(1e-12);
                out[k] = -d.ln() + rng::gumbel(rng);
            }
        }
        Ok(out)
    }
}

/// CVRP: the closest feasible customer, deterministically; the depot only
/// when no customer is feasible.
pub struct NearestHeuristic;

impl Heuristic for NearestHeuristic {
    fn name(&self) -> String {
        "nearest".into()
    }

    fn scores(&self, graph: &StateGraph, rng: &mut Rng) -> Result<Vec<f64>> {
        let mut out = DistanceHeuristic.scores(graph, rng)?;
        for (k, &(_, t)) in graph.edges.iter().enumerate() {
            if out[k].is_finite() && graph.node_row(t)[CUSTOMER_SLOT] == 1.0 {
                out[k] = -graph.edge_row(k)[0];
            }
        }
        Ok(out)
    }
}

/// PMSP: minimise `(setup + p) / w`, ties by machine then job. Scores are
/// negated ranks so that the argmax realises the tie rule.
pub struct WsptHeuristic;

impl Heuristic for WsptHeuristic {
    fn name(&self) -> String {
        "wspt".into()
    }

    fn scores(&self, graph: &StateGraph, _rng: &mut Rng) -> Result<Vec<f64>> {
        if graph.node_width < 7 || (graph.node_width - 7) % 2 != 0 {
            return Err(Error::InvalidArgument("wspt heuristic needs a scheduling graph".into()));
        }
        let mut keyed: Vec<(f64, usize, usize, usize)> = graph
            .edges
            .iter()
            .enumerate()
            .filter(|&(k, _)| graph.mask[k])
            .map(|(k, &(j, m))| {
                let row = graph.node_row(j);
                let (p, w) = (row[0], row[1]);
                let setup = graph.edge_row(k)[0];
                ((setup + p) / w, m, j, k)
            })
            .collect();
        keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut out = vec![f64::NEG_INFINITY; graph.actions.len()];
        for (rank, &(_, _, _, k)) in keyed.iter().enumerate() {
            out[k] = -(rank as f64);
        }
        let noop = graph.noop_index();
        if graph.mask[noop] {
            out[noop] = -(keyed.len() as f64) - 1.0;
        }
        Ok(out)
    }
}

/// Parses `random`, `distance`, `nearness`, `nearest`, `wspt` or `qnet:<checkpoint>`.
pub fn from_spec(spec: &str) -> Result<Arc<dyn Heuristic>> {
    match spec {
        "random" => Ok(Arc::new(RandomHeuristic)),
        "distance" => Ok(Arc::new(DistanceHeuristic)),
        "nearness" => Ok(Arc::new(NearnessHeuristic)),
        "nearest" => Ok(Arc::new(NearestHeuristic)),
        "wspt" => Ok(Arc::new(WsptHeuristic)),
        _ => match spec.strip_prefix("qnet:") {
            Some(path) => Ok(Arc::new(QNetHeuristic(Arc::new(QNet::load(std::path::Path::new(path))?)))),
            None => Err(Error::InvalidArgument(format!("unknown heuristic {spec:?}"))),
        },
    }
}
