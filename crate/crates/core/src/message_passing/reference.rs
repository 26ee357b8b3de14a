//! Deterministic update functions.
//!
//! [`LinearReference`] uses fixed seeded near-identity linear maps with a
//! `tanh` nonlinearity; the origin flag is appended to node features as one
//! extra coordinate. [`CueOracle`] keeps one-hot node features intact and
//! decodes ground-truth poses and cues, which exercises origin selection end
//! to end without a trained model.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DenseRows, EdgeState, NodeState, UpdateFunctions};
use crate::cues::{correspondence_and_covis, ColumnGrid, CueSet};
use crate::error::{Error, Result};
use crate::losses::PosePrediction;
use crate::pose::{Pose2, Vec2};
use crate::scene::{Cluster, Scene};

const PERTURBATION: f64 = 0.1;

struct LayerWeights {
    edge: DMatrix<f64>,
    message: DMatrix<f64>,
}

pub struct LinearReference {
    node_dim: usize,
    width: usize,
    layers: Vec<LayerWeights>,
    pose: DMatrix<f64>,
    dense: DMatrix<f64>,
}

fn noise(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    let scale = PERTURBATION / (cols as f64).sqrt();
    DMatrix::from_fn(rows, cols, |_, _| scale * rng.random_range(-1.0..1.0))
}

fn apply(m: &DMatrix<f64>, input: &[f64], what: &str) -> Result<DVector<f64>> {
    if input.len() != m.ncols() {
        return Err(Error::Dimension(format!(
            "{what} expects {} inputs, got {}",
            m.ncols(),
            input.len()
        )));
    }
    Ok(m * DVector::from_column_slice(input))
}

fn with_flag(features: &[f64], flag: bool) -> Vec<f64> {
    let mut v = features.to_vec();
    v.push(if flag { 1.0 } else { 0.0 });
    v
}

impl LinearReference {
    /// Weights for `layers` layers over node features of size `node_dim`
    /// (edge features are twice that) and dense rows of `width` columns.
    pub fn new(seed: u64, node_dim: usize, width: usize, layers: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = node_dim;
        let de = 2 * d;
        let layers = (0..layers)
            .map(|_| {
                let edge = DMatrix::identity(de, de) + noise(&mut rng, de, de);
                // input: target ⊕ source ⊕ edge ⊕ target flag
                let cols = d + d + de + 1;
                let mut message = noise(&mut rng, d, cols);
                for k in 0..d {
                    message[(k, k)] += 0.5;
                    message[(k, d + k)] += 0.5;
                }
                LayerWeights { edge, message }
            })
            .collect();
        let pose = noise(&mut rng, 4, d + 1) * 10.0;
        let dense = noise(&mut rng, 3 * width, de) * 10.0;
        LinearReference {
            node_dim,
            width,
            layers,
            pose,
            dense,
        }
    }

    pub fn node_dim(&self) -> usize {
        self.node_dim
    }

    fn layer(&self, layer: usize) -> Result<&LayerWeights> {
        self.layers.get(layer).ok_or_else(|| {
            Error::Validation(format!(
                "layer {layer} requested but only {} are defined",
                self.layers.len()
            ))
        })
    }
}

impl UpdateFunctions for LinearReference {
    fn edge_update(&self, layer: usize, edge: &EdgeState) -> Result<EdgeState> {
        let out = apply(&self.layer(layer)?.edge, &edge.features, "edge update")?;
        Ok(EdgeState {
            features: out.iter().map(|v| v.tanh()).collect(),
        })
    }

    fn message(&self, layer: usize, target: &NodeState, context: &[f64]) -> Result<Vec<f64>> {
        let mut input = target.features.clone();
        input.extend_from_slice(context);
        input.push(if target.is_origin { 1.0 } else { 0.0 });
        let out = apply(&self.layer(layer)?.message, &input, "message")?;
        Ok(out.iter().map(|v| v.tanh()).collect())
    }

    fn decode_pose(&self, node: &NodeState) -> Result<PosePrediction> {
        let out = apply(
            &self.pose,
            &with_flag(&node.features, node.is_origin),
            "pose decoder",
        )?;
        Ok(PosePrediction::new(
            Vec2::new(1.0 + out[0], out[1]),
            Vec2::new(out[2], out[3]),
        ))
    }

    fn decode_dense(&self, edge: &EdgeState) -> Result<DenseRows> {
        let out = apply(&self.dense, &edge.features, "dense decoder")?;
        let w = self.width;
        Ok(DenseRows {
            phi: (0..w).map(|k| 0.6 + 0.3 * out[k].tanh()).collect(),
            alpha: (0..w)
                .map(|k| std::f64::consts::PI * out[w + k].tanh())
                .collect(),
            covis: (0..w)
                .map(|k| 1.0 / (1.0 + (-out[2 * w + k]).exp()))
                .collect(),
        })
    }
}

/// Decodes ground truth for a cluster from one-hot node features.
pub struct CueOracle {
    poses: Vec<Pose2>,
    cues: BTreeMap<(usize, usize), CueSet>,
}

fn one_hot_index(v: &[f64]) -> Result<usize> {
    let hot: Vec<usize> = (0..v.len()).filter(|&k| v[k] == 1.0).collect();
    match hot.as_slice() {
        [k] if v.iter().filter(|x| **x != 0.0).count() == 1 => Ok(*k),
        _ => Err(Error::Validation("features are not one-hot".into())),
    }
}

impl CueOracle {
    pub fn new(scene: &Scene, cluster: &Cluster, grid: &ColumnGrid) -> Result<CueOracle> {
        let ids = &cluster.pano_ids;
        let poses = cluster.poses(scene)?;
        let mut cues = BTreeMap::new();
        for (i, a) in ids.iter().enumerate() {
            for (j, b) in ids.iter().enumerate() {
                if i != j {
                    cues.insert((i, j), correspondence_and_covis(scene, a, b, grid)?);
                }
            }
        }
        Ok(CueOracle { poses, cues })
    }

    /// One-hot identity features, one per cluster member.
    pub fn features(&self) -> Vec<Vec<f64>> {
        let n = self.poses.len();
        (0..n)
            .map(|i| (0..n).map(|k| if k == i { 1.0 } else { 0.0 }).collect())
            .collect()
    }

    pub fn cue(&self, src: usize, dst: usize) -> Option<&CueSet> {
        self.cues.get(&(src, dst))
    }
}

impl UpdateFunctions for CueOracle {
    fn edge_update(&self, _: usize, edge: &EdgeState) -> Result<EdgeState> {
        Ok(edge.clone())
    }

    fn message(&self, _: usize, target: &NodeState, _: &[f64]) -> Result<Vec<f64>> {
        Ok(target.features.clone())
    }

    fn decode_pose(&self, node: &NodeState) -> Result<PosePrediction> {
        let k = one_hot_index(&node.features)?;
        Ok(PosePrediction::from_pose(&self.poses[k]))
    }

    fn decode_dense(&self, edge: &EdgeState) -> Result<DenseRows> {
        let n = self.poses.len();
        if edge.features.len() != 2 * n {
            return Err(Error::Dimension(format!(
                "edge has {} features, expected {}",
                edge.features.len(),
                2 * n
            )));
        }
        let i = one_hot_index(&edge.features[..n])?;
        let j = one_hot_index(&edge.features[n..])?;
        let cue = self
            .cue(i, j)
            .ok_or_else(|| Error::Validation(format!("no cues for edge ({i}, {j})")))?;
        Ok(DenseRows {
            phi: cue.phi.clone(),
            alpha: cue.alpha_row(),
            covis: cue.covis_row(),
        })
    }
}
