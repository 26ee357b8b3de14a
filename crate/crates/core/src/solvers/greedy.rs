use std::collections::VecDeque;

use super::{Diagnostics, Solution};
use crate::error::{Error, Result};
use crate::graph::PoseGraph;
use crate::pose::Pose2;

struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

/// Maximum-covisibility spanning tree (Kruskal over descending pair scores).
pub fn spanning_tree(g: &PoseGraph) -> Result<Vec<(usize, usize)>> {
    let n = g.len();
    let mut sets = DisjointSet::new(n);
    let mut tree = Vec::with_capacity(n.saturating_sub(1));
    for (a, b) in g.pairs_by_score() {
        if tree.len() + 1 == n {
            break;
        }
        if sets.union(a, b) {
            tree.push((a, b));
        }
    }
    if tree.len() + 1 != n {
        let root = sets.find(g.origin_index());
        let missing: Vec<&str> = (0..n)
            .filter(|&k| sets.find(k) != root)
            .map(|k| g.nodes()[k].as_str())
            .collect();
        return Err(Error::Disconnected(format!(
            "unreachable from origin: {}",
            missing.join(", ")
        )));
    }
    Ok(tree)
}

/// Places panoramas by composing relative poses along the spanning tree,
/// starting from the origin.
pub fn greedy_spanning_tree(g: &PoseGraph) -> Result<Solution> {
    let n = g.len();
    let tree = spanning_tree(g)?;
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(a, b) in &tree {
        adj[a].push(b);
        adj[b].push(a);
    }

    let mut poses: Vec<Option<Pose2>> = vec![None; n];
    poses[g.origin_index()] = Some(Pose2::identity());
    let mut queue = VecDeque::from([g.origin_index()]);
    while let Some(a) = queue.pop_front() {
        let pa = poses[a].expect("visited");
        for &b in &adj[a] {
            if poses[b].is_some() {
                continue;
            }
            let obs = g
                .best_direction(a, b)
                .expect("tree edge has an observation");
            let pb = if obs.src == a {
                pa.compose(&obs.rel_pose)
            } else {
                pa.compose(&obs.rel_pose.inverse())
            };
            poses[b] = Some(pb);
            queue.push_back(b);
        }
    }

    let ids = g.nodes();
    let mut sol = Solution {
        node_ids: ids.to_vec(),
        origin_index: g.origin_index(),
        poses: poses.into_iter().map(|p| p.expect("tree spans")).collect(),
        diagnostics: Diagnostics {
            converged: true,
            edges: tree
                .iter()
                .map(|&(a, b)| (ids[a].clone(), ids[b].clone()))
                .collect(),
            ..Diagnostics::default()
        },
    };
    sol.anchor_to_origin();
    Ok(sol)
}
