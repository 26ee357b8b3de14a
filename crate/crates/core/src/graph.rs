//! Directed pose graphs with relative-pose observations.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cues::{correspondence_and_covis, edge_covis_score, ColumnGrid, CueSet};
use crate::error::{Error, Result};
use crate::pose::{Pose2, PoseRecord, Vec2};
use crate::scene::{Cluster, Scene};

pub const DEFAULT_CONNECTIVITY_THRESHOLD: f64 = 0.1;

/// Relative pose of `dst` expressed in `src`'s frame, plus its co-visibility.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeObservation {
    pub src: usize,
    pub dst: usize,
    pub rel_pose: Pose2,
    pub covis_score: f64,
    pub cues: Option<CueSet>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseGraph {
    nodes: Vec<String>,
    origin_index: usize,
    edges: BTreeMap<(usize, usize), EdgeObservation>,
}

impl PoseGraph {
    pub fn new(nodes: Vec<String>, origin_index: usize) -> Result<Self> {
        if origin_index >= nodes.len() {
            return Err(Error::Validation(format!(
                "origin index {origin_index} out of range for {} nodes",
                nodes.len()
            )));
        }
        let mut sorted = nodes.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != nodes.len() {
            return Err(Error::Validation("node ids must be distinct".into()));
        }
        Ok(PoseGraph {
            nodes,
            origin_index,
            edges: BTreeMap::new(),
        })
    }

    pub fn add_edge(&mut self, obs: EdgeObservation) -> Result<()> {
        let n = self.nodes.len();
        if obs.src >= n || obs.dst >= n {
            return Err(Error::Validation("edge endpoint out of range".into()));
        }
        if obs.src == obs.dst {
            return Err(Error::Validation("self edges are not allowed".into()));
        }
        if !(0.0..=1.0).contains(&obs.covis_score) {
            return Err(Error::Validation(format!(
                "covis score {} outside [0, 1]",
                obs.covis_score
            )));
        }
        if !obs.rel_pose.is_finite() {
            return Err(Error::Validation("non-finite relative pose".into()));
        }
        let key = (obs.src, obs.dst);
        if self.edges.contains_key(&key) {
            return Err(Error::Validation(format!(
                "duplicate edge {} -> {}",
                self.nodes[obs.src], self.nodes[obs.dst]
            )));
        }
        self.edges.insert(key, obs);
        Ok(())
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn origin_index(&self) -> usize {
        self.origin_index
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n == id)
    }

    pub fn edge(&self, src: usize, dst: usize) -> Option<&EdgeObservation> {
        self.edges.get(&(src, dst))
    }

    pub fn edges(&self) -> impl Iterator<Item = &EdgeObservation> {
        self.edges.values()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Co-visibility of the unordered pair: the larger of the two directions.
    pub fn pair_score(&self, a: usize, b: usize) -> f64 {
        let s = |i, j| self.edge(i, j).map_or(0.0, |e| e.covis_score);
        s(a, b).max(s(b, a))
    }

    /// The observation to use for an unordered pair: the direction with the
    /// higher co-visibility, `a -> b` on ties.
    pub fn best_direction(&self, a: usize, b: usize) -> Option<&EdgeObservation> {
        match (self.edge(a, b), self.edge(b, a)) {
            (Some(x), Some(y)) => Some(if y.covis_score > x.covis_score { y } else { x }),
            (x, y) => x.or(y),
        }
    }

    /// Unordered pairs that carry at least one observation, as `(i, j)` with
    /// `i < j`.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = self
            .edges
            .keys()
            .map(|&(a, b)| (a.min(b), a.max(b)))
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Pairs ordered from highest to lowest co-visibility, ties broken by the
    /// lexicographic order of the two node ids.
    pub fn pairs_by_score(&self) -> Vec<(usize, usize)> {
        let mut pairs = self.pairs();
        let key = |&(a, b): &(usize, usize)| {
            let (x, y) = (&self.nodes[a], &self.nodes[b]);
            if x <= y {
                (x.clone(), y.clone())
            } else {
                (y.clone(), x.clone())
            }
        };
        pairs.sort_by(|p, q| {
            self.pair_score(q.0, q.1)
                .total_cmp(&self.pair_score(p.0, p.1))
                .then_with(|| key(p).cmp(&key(q)))
        });
        pairs
    }

    pub fn to_json_string(&self) -> String {
        let file = GraphFile {
            nodes: self.nodes.clone(),
            origin: self.nodes[self.origin_index].clone(),
            edges: self
                .edges
                .values()
                .map(|e| EdgeRecord {
                    src: self.nodes[e.src].clone(),
                    dst: self.nodes[e.dst].clone(),
                    rel: PoseRecord::from(&e.rel_pose),
                    covis: e.covis_score,
                })
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("graph serializes");
        s.push('\n');
        s
    }

    pub fn from_json_str(text: &str) -> Result<PoseGraph> {
        let f: GraphFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let origin = f
            .nodes
            .iter()
            .position(|n| *n == f.origin)
            .ok_or_else(|| Error::Validation(format!("origin '{}' is not a node", f.origin)))?;
        let mut g = PoseGraph::new(f.nodes, origin)?;
        for e in f.edges {
            let idx = |id: &str| {
                g.node_index(id).ok_or_else(|| {
                    Error::Validation(format!("edge references unknown node '{id}'"))
                })
            };
            let (src, dst) = (idx(&e.src)?, idx(&e.dst)?);
            g.add_edge(EdgeObservation {
                src,
                dst,
                rel_pose: e.rel.into(),
                covis_score: e.covis,
                cues: None,
            })?;
        }
        Ok(g)
    }
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    nodes: Vec<String>,
    origin: String,
    edges: Vec<EdgeRecord>,
}

#[derive(Serialize, Deserialize)]
struct EdgeRecord {
    src: String,
    dst: String,
    rel: PoseRecord,
    covis: f64,
}

/// Gaussian perturbation applied to synthesized relative poses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    /// Std-dev per translation component, meters.
    pub sigma_t: f64,
    /// Std-dev of the yaw, radians.
    pub sigma_theta: f64,
    /// When set, both directions of the lowest-covisibility pair get their
    /// noise scaled by this factor.
    pub outlier_factor: Option<f64>,
}

/// Builds the complete directed graph of a cluster with ground-truth cues.
///
/// Noise draws are taken in a fixed order independent of the outlier
/// setting, so enabling the outlier changes only the outlier pair.
pub fn build_graph(
    cluster: &Cluster,
    scene: &Scene,
    grid: &ColumnGrid,
    noise: Option<&NoiseSpec>,
    seed: u64,
) -> Result<PoseGraph> {
    let n = cluster.len();
    let mut g = PoseGraph::new(cluster.pano_ids.clone(), cluster.origin_index)?;
    let poses = cluster.poses(scene)?;

    let mut cues = BTreeMap::new();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let cue = correspondence_and_covis(
                    scene,
                    &cluster.pano_ids[i],
                    &cluster.pano_ids[j],
                    grid,
                )?;
                cues.insert((i, j), cue);
            }
        }
    }

    let outlier_pair = noise.and_then(|ns| ns.outlier_factor).map(|f| {
        // Lowest pair score; ties go to the pair that sorts last by id, i.e.
        // the last one a greedy pass would consider.
        let score = |a: usize, b: usize| {
            edge_covis_score(&cues[&(a, b)]).max(edge_covis_score(&cues[&(b, a)]))
        };
        let mut pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|a| ((a + 1)..n).map(move |b| (a, b)))
            .collect();
        let ids = &cluster.pano_ids;
        let key = |&(a, b): &(usize, usize)| {
            let (x, y) = (&ids[a], &ids[b]);
            if x <= y {
                (x, y)
            } else {
                (y, x)
            }
        };
        pairs.sort_by(|p, q| {
            score(p.0, p.1)
                .total_cmp(&score(q.0, q.1))
                .then_with(|| key(q).cmp(&key(p)))
        });
        (pairs[0], f)
    });

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let truth = Pose2::relative(&poses[i], &poses[j]);
            let rel_pose = match noise {
                None => truth,
                Some(ns) => {
                    let z: [f64; 3] = [
                        StandardNormal.sample(&mut rng),
                        StandardNormal.sample(&mut rng),
                        StandardNormal.sample(&mut rng),
                    ];
                    let scale = match outlier_pair {
                        Some(((a, b), f)) if (i, j) == (a, b) || (j, i) == (a, b) => f,
                        _ => 1.0,
                    };
                    Pose2::from_angle(
                        truth.theta() + scale * ns.sigma_theta * z[0],
                        truth.translation() + scale * ns.sigma_t * Vec2::new(z[1], z[2]),
                    )
                }
            };
            let cue = cues.remove(&(i, j)).expect("cue computed");
            g.add_edge(EdgeObservation {
                src: i,
                dst: j,
                rel_pose,
                covis_score: edge_covis_score(&cue),
                cues: Some(cue),
            })?;
        }
    }
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ConnectivityLabel {
    Fully,
    Partially,
}

impl ConnectivityLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            ConnectivityLabel::Fully => "fully",
            ConnectivityLabel::Partially => "partially",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConnectivityClass {
    pub label: ConnectivityLabel,
    pub threshold: f64,
    /// Unordered pairs whose best-direction co-visibility is below threshold.
    pub weak_pairs: Vec<(usize, usize)>,
}

/// Fully connected iff every unordered pair reaches `threshold` (inclusive)
/// in at least one direction.
pub fn classify_connectivity(g: &PoseGraph, threshold: f64) -> ConnectivityClass {
    let n = g.len();
    let weak_pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|a| ((a + 1)..n).map(move |b| (a, b)))
        .filter(|&(a, b)| g.pair_score(a, b) < threshold)
        .collect();
    ConnectivityClass {
        label: if weak_pairs.is_empty() {
            ConnectivityLabel::Fully
        } else {
            ConnectivityLabel::Partially
        },
        threshold,
        weak_pairs,
    }
}
