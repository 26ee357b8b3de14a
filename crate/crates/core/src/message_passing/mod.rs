//! Message passing over a directed panorama graph.
//!
//! Each layer updates every edge state, computes one message per directed
//! edge `(i, j)` from the target `x_i` and the context `x_j ⊕ e'_ij`, and
//! replaces each node state by the mean of its incoming messages. All three
//! phases read only the pre-step states, and the mean is an exactly rounded
//! sum, so results do not depend on iteration order.
//!
//! The update functions are a trait; [`reference`] ships deterministic
//! implementations for testing and demos.

pub mod reference;

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::losses::PosePrediction;
use crate::solvers::{Diagnostics, Solution};
use crate::sum::exact_sum;

pub const DEFAULT_LAYERS: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    pub features: Vec<f64>,
    pub is_origin: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeState {
    pub features: Vec<f64>,
}

/// Decoded dense rows for one directed edge.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseRows {
    pub phi: Vec<f64>,
    pub alpha: Vec<f64>,
    /// Co-visibility probabilities in `[0, 1]`.
    pub covis: Vec<f64>,
}

/// Learnable pieces of the pipeline. Implementations must be pure.
pub trait UpdateFunctions {
    fn edge_update(&self, layer: usize, edge: &EdgeState) -> Result<EdgeState>;

    /// Message into `target`; `context` is the source features followed by
    /// the updated edge features.
    fn message(&self, layer: usize, target: &NodeState, context: &[f64]) -> Result<Vec<f64>>;

    fn decode_pose(&self, node: &NodeState) -> Result<PosePrediction>;

    fn decode_dense(&self, edge: &EdgeState) -> Result<DenseRows>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpGraph {
    pub nodes: Vec<NodeState>,
    /// Keyed by `(target, source)`: messages along `(i, j)` flow into `i`.
    pub edges: BTreeMap<(usize, usize), EdgeState>,
    pub layers: usize,
}

impl MpGraph {
    /// Complete digraph with `e_ij = x_i ⊕ x_j`.
    pub fn complete(features: Vec<Vec<f64>>, origin: usize, layers: usize) -> Result<MpGraph> {
        let n = features.len();
        if origin >= n {
            return Err(Error::Validation(format!(
                "origin index {origin} out of range for {n} nodes"
            )));
        }
        let mut edges = BTreeMap::new();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let mut e = features[i].clone();
                    e.extend_from_slice(&features[j]);
                    edges.insert((i, j), EdgeState { features: e });
                }
            }
        }
        let nodes = features
            .into_iter()
            .enumerate()
            .map(|(k, f)| NodeState {
                features: f,
                is_origin: k == origin,
            })
            .collect();
        let g = MpGraph {
            nodes,
            edges,
            layers,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn origin(&self) -> Option<usize> {
        self.nodes.iter().position(|n| n.is_origin)
    }

    /// Moves the origin flag to `k`.
    pub fn set_origin(&mut self, k: usize) {
        for (idx, n) in self.nodes.iter_mut().enumerate() {
            n.is_origin = idx == k;
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return Err(Error::Validation("layer count must be at least 1".into()));
        }
        let d = self.nodes.first().map_or(0, |n| n.features.len());
        for (k, n) in self.nodes.iter().enumerate() {
            if n.features.len() != d {
                return Err(Error::Dimension(format!(
                    "node {k} has {} features, expected {d}",
                    n.features.len()
                )));
            }
            if !n.features.iter().all(|v| v.is_finite()) {
                return Err(Error::Validation(format!(
                    "node {k} has non-finite features"
                )));
            }
        }
        let de = self.edges.values().next().map_or(0, |e| e.features.len());
        for (&(i, j), e) in &self.edges {
            if i >= self.nodes.len() || j >= self.nodes.len() || i == j {
                return Err(Error::Validation(format!("invalid edge ({i}, {j})")));
            }
            if !self.edges.contains_key(&(j, i)) {
                return Err(Error::Validation(format!("edge ({i}, {j}) has no reverse")));
            }
            if e.features.len() != de {
                return Err(Error::Dimension(format!(
                    "edge ({i}, {j}) has {} features, expected {de}",
                    e.features.len()
                )));
            }
        }
        Ok(())
    }
}

/// One synchronous layer, visiting edges and nodes in their natural order.
pub fn step(g: &MpGraph, fns: &dyn UpdateFunctions, layer: usize) -> Result<MpGraph> {
    let edge_order: Vec<(usize, usize)> = g.edges.keys().copied().collect();
    let node_order: Vec<usize> = (0..g.nodes.len()).collect();
    step_in_order(g, fns, layer, &edge_order, &node_order)
}

/// [`step`] with an explicit visiting order for edges and nodes. Both orders
/// must be permutations of the graph's edges and nodes; the result is the
/// same for every order.
pub fn step_in_order(
    g: &MpGraph,
    fns: &dyn UpdateFunctions,
    layer: usize,
    edge_order: &[(usize, usize)],
    node_order: &[usize],
) -> Result<MpGraph> {
    if edge_order.len() != g.edges.len() || node_order.len() != g.nodes.len() {
        return Err(Error::Validation(
            "visiting order does not cover the graph".into(),
        ));
    }

    let mut edges = BTreeMap::new();
    for key in edge_order {
        let e = g
            .edges
            .get(key)
            .ok_or_else(|| Error::Validation(format!("unknown edge {key:?}")))?;
        edges.insert(*key, fns.edge_update(layer, e)?);
    }
    if edges.len() != g.edges.len() {
        return Err(Error::Validation("visiting order repeats an edge".into()));
    }

    let mut inbox: Vec<Vec<Vec<f64>>> = vec![Vec::new(); g.nodes.len()];
    let mut dim: Option<usize> = None;
    for &(i, j) in edge_order {
        let mut ctx = g.nodes[j].features.clone();
        ctx.extend_from_slice(&edges[&(i, j)].features);
        let m = fns.message(layer, &g.nodes[i], &ctx)?;
        match dim {
            None => dim = Some(m.len()),
            Some(d) if d != m.len() => {
                return Err(Error::Dimension(format!(
                    "message along ({i}, {j}) has {} entries, expected {d}",
                    m.len()
                )))
            }
            _ => {}
        }
        inbox[i].push(m);
    }

    let mut nodes: Vec<Option<NodeState>> = vec![None; g.nodes.len()];
    for &k in node_order {
        let old = g
            .nodes
            .get(k)
            .ok_or_else(|| Error::Validation(format!("unknown node {k}")))?;
        let msgs = &inbox[k];
        let features = if msgs.is_empty() {
            old.features.clone()
        } else {
            let deg = msgs.len() as f64;
            (0..msgs[0].len())
                .map(|c| exact_sum(msgs.iter().map(|m| m[c])) / deg)
                .collect()
        };
        nodes[k] = Some(NodeState {
            features,
            is_origin: old.is_origin,
        });
    }
    let nodes = nodes
        .into_iter()
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| Error::Validation("visiting order repeats a node".into()))?;
    Ok(MpGraph {
        nodes,
        edges,
        layers: g.layers,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub graph: MpGraph,
    pub poses: Vec<PosePrediction>,
    pub dense: BTreeMap<(usize, usize), DenseRows>,
}

impl RunOutput {
    /// Mean predicted co-visibility over the outgoing edges of `k`.
    pub fn mean_outgoing_covis(&self, k: usize) -> f64 {
        let rows: Vec<f64> = self
            .dense
            .range((k, 0)..(k + 1, 0))
            .map(|(_, d)| {
                if d.covis.is_empty() {
                    0.0
                } else {
                    exact_sum(d.covis.iter().copied()) / d.covis.len() as f64
                }
            })
            .collect();
        if rows.is_empty() {
            0.0
        } else {
            exact_sum(rows.iter().copied()) / rows.len() as f64
        }
    }
}

/// Applies `g.layers` steps, then decodes every node and edge.
pub fn run(g: &MpGraph, fns: &dyn UpdateFunctions) -> Result<RunOutput> {
    g.validate()?;
    let mut cur = g.clone();
    for layer in 0..g.layers {
        cur = step(&cur, fns, layer)?;
    }
    let poses = cur
        .nodes
        .iter()
        .map(|n| fns.decode_pose(n))
        .collect::<Result<Vec<_>>>()?;
    let dense = cur
        .edges
        .iter()
        .map(|(k, e)| Ok((*k, fns.decode_dense(e)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    Ok(RunOutput {
        graph: cur,
        poses,
        dense,
    })
}

/// Index of the highest score; the lowest index wins ties.
pub fn select_origin(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (k, &s) in scores.iter().enumerate() {
        match best {
            Some(b) if !(s > scores[b]) => {}
            _ => best = Some(k),
        }
    }
    best
}

/// Runs the pipeline once per candidate origin and keeps the run whose origin
/// scores highest under `scorer` (by default the mean predicted outgoing
/// co-visibility). Poses are returned in the chosen origin's frame.
pub fn infer_with_origin_selection<S>(
    ids: &[String],
    features: Vec<Vec<f64>>,
    fns: &dyn UpdateFunctions,
    layers: usize,
    scorer: S,
) -> Result<Solution>
where
    S: Fn(&RunOutput, usize) -> f64,
{
    let n = ids.len();
    if n < 2 || features.len() != n {
        return Err(Error::Validation(format!(
            "need at least 2 nodes with features, got {n} ids and {} feature vectors",
            features.len()
        )));
    }
    let mut g = MpGraph::complete(features, 0, layers)?;
    let mut runs = Vec::with_capacity(n);
    for k in 0..n {
        g.set_origin(k);
        let out = run(&g, fns)?;
        let score = scorer(&out, k);
        runs.push((out, score));
    }
    let scores: Vec<f64> = runs.iter().map(|(_, s)| *s).collect();
    let origin = select_origin(&scores).expect("n >= 2");
    let (out, score) = runs.swap_remove(origin);
    let poses = out
        .poses
        .iter()
        .map(PosePrediction::to_pose)
        .collect::<Result<Vec<_>>>()?;
    let mut sol = Solution {
        node_ids: ids.to_vec(),
        origin_index: origin,
        poses,
        diagnostics: Diagnostics {
            iterations: layers,
            final_cost: score,
            converged: true,
            ..Diagnostics::default()
        },
    };
    sol.anchor_to_origin();
    Ok(sol)
}

/// Default scorer for [`infer_with_origin_selection`].
pub fn mean_covis_scorer(out: &RunOutput, k: usize) -> f64 {
    out.mean_outgoing_covis(k)
}
