//! Multi-view baselines built on pairwise relative poses.
//!
//! [`greedy_spanning_tree`] composes relative poses along a spanning tree
//! grown from the most co-visible pairs; [`pgo`] refines all poses jointly
//! with a Levenberg–Marquardt pose-graph optimizer.

mod greedy;
mod pgo;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::{Pose2, PoseRecord};

pub use greedy::{greedy_spanning_tree, spanning_tree};
pub use pgo::{
    between_jacobians, between_residual, pgo, BetweenFactor, NoiseModel, PgoConfig, PgoEdgeSet,
    PoseGraphProblem,
};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iterations: usize,
    pub final_cost: f64,
    pub converged: bool,
    /// Unordered pairs used, as node id pairs.
    pub edges: Vec<(String, String)>,
    /// Cost after initialization and after every accepted step.
    pub cost_trace: Vec<f64>,
}

/// Estimated poses in the origin's frame; the origin is exactly identity.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub node_ids: Vec<String>,
    pub origin_index: usize,
    pub poses: Vec<Pose2>,
    pub diagnostics: Diagnostics,
}

impl Solution {
    pub fn origin(&self) -> &str {
        &self.node_ids[self.origin_index]
    }

    pub fn pose_of(&self, id: &str) -> Option<&Pose2> {
        self.node_ids
            .iter()
            .position(|n| n == id)
            .map(|k| &self.poses[k])
    }

    /// Re-expresses every pose relative to the origin and sets the origin to
    /// exact identity.
    pub fn anchor_to_origin(&mut self) {
        let inv = self.poses[self.origin_index].inverse();
        for p in self.poses.iter_mut() {
            *p = inv.compose(p);
        }
        self.poses[self.origin_index] = Pose2::identity();
    }

    pub fn to_json_string(&self) -> String {
        let file = SolutionFile {
            origin: self.origin().to_string(),
            poses: self
                .node_ids
                .iter()
                .zip(&self.poses)
                .map(|(id, p)| (id.clone(), PoseRecord::from(p)))
                .collect(),
            node_order: Some(self.node_ids.clone()),
            diagnostics: self.diagnostics.clone(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("solution serializes");
        s.push('\n');
        s
    }

    pub fn from_json_str(text: &str) -> Result<Solution> {
        let f: SolutionFile =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let node_ids = match f.node_order {
            Some(order) => order,
            None => f.poses.keys().cloned().collect(),
        };
        let poses = node_ids
            .iter()
            .map(|id| {
                f.poses
                    .get(id)
                    .copied()
                    .map(Pose2::from)
                    .ok_or_else(|| Error::Validation(format!("no pose for node '{id}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        let origin_index = node_ids
            .iter()
            .position(|n| *n == f.origin)
            .ok_or_else(|| Error::Validation(format!("origin '{}' has no pose", f.origin)))?;
        Ok(Solution {
            node_ids,
            origin_index,
            poses,
            diagnostics: f.diagnostics,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct SolutionFile {
    origin: String,
    poses: BTreeMap<String, PoseRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    node_order: Option<Vec<String>>,
    #[serde(default)]
    diagnostics: Diagnostics,
}
