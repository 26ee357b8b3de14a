use std::ops::AddAssign;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use super::greedy::spanning_tree;
use super::{Diagnostics, Solution};
use crate::error::{Error, Result};
use crate::graph::PoseGraph;
use crate::pose::{wrap_angle, Pose2, Vec2};

/// Diagonal Gaussian noise: one sigma shared by both translation axes, one
/// for the yaw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub sigma_t: f64,
    pub sigma_theta: f64,
}

impl NoiseModel {
    pub fn new(sigma_t: f64, sigma_theta: f64) -> Result<Self> {
        let m = NoiseModel {
            sigma_t,
            sigma_theta,
        };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        if !(self.sigma_t > 0.0 && self.sigma_theta > 0.0) {
            return Err(Error::Validation("noise sigmas must be positive".into()));
        }
        Ok(())
    }

    fn weights(&self) -> Vector3<f64> {
        Vector3::new(
            1.0 / self.sigma_t,
            1.0 / self.sigma_t,
            1.0 / self.sigma_theta,
        )
    }
}

/// Which unordered pairs become between-factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PgoEdgeSet {
    /// Spanning-tree pairs plus the lowest-covisibility pair left out of it.
    TreePlusOne,
    /// Every pair with nonzero co-visibility.
    #[default]
    All,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PgoConfig {
    pub prior: NoiseModel,
    pub odometry: NoiseModel,
    pub max_iters: usize,
    /// Stop when the relative cost decrease of an accepted step falls below this.
    pub rel_tol: f64,
    /// Stop once the cost itself falls below this.
    pub abs_tol: f64,
    pub lambda_init: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    /// Give up increasing damping past this value.
    pub lambda_max: f64,
    pub edges: PgoEdgeSet,
}

impl Default for PgoConfig {
    fn default() -> Self {
        PgoConfig {
            prior: NoiseModel {
                sigma_t: 0.20,
                sigma_theta: 0.1,
            },
            odometry: NoiseModel {
                sigma_t: 0.30,
                sigma_theta: 0.3,
            },
            max_iters: 1000,
            rel_tol: 1e-5,
            abs_tol: 1e-20,
            lambda_init: 1e-4,
            lambda_up: 10.0,
            lambda_down: 10.0,
            lambda_max: 1e10,
            edges: PgoEdgeSet::All,
        }
    }
}

impl PgoConfig {
    fn validate(&self) -> Result<()> {
        self.prior.validate()?;
        self.odometry.validate()?;
        if self.max_iters == 0 {
            return Err(Error::Validation("max_iters must be at least 1".into()));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::Validation("rel_tol must be positive".into()));
        }
        if !(self.lambda_init > 0.0 && self.lambda_up > 1.0 && self.lambda_down > 1.0) {
            return Err(Error::Validation("invalid damping schedule".into()));
        }
        Ok(())
    }
}

/// Relative-pose constraint: `measured` is node `j` expressed in node `i`'s frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetweenFactor {
    pub i: usize,
    pub j: usize,
    pub measured: Pose2,
}

/// Residual `[ex, ey, eθ]` of a between-factor at states `[x, y, θ]`:
/// translation error `R_iᵀ(t_j - t_i) - t_ij` and wrapped yaw error.
pub fn between_residual(xi: &Vector3<f64>, xj: &Vector3<f64>, measured: &Pose2) -> Vector3<f64> {
    let (s, c) = xi.z.sin_cos();
    let dx = xj.x - xi.x;
    let dy = xj.y - xi.y;
    let t = measured.translation();
    Vector3::new(
        c * dx + s * dy - t.x,
        -s * dx + c * dy - t.y,
        wrap_angle(xj.z - xi.z - measured.theta()).radians(),
    )
}

/// Analytic Jacobians of [`between_residual`] w.r.t. both endpoint states.
pub fn between_jacobians(xi: &Vector3<f64>, xj: &Vector3<f64>) -> (Matrix3<f64>, Matrix3<f64>) {
    let (s, c) = xi.z.sin_cos();
    let dx = xj.x - xi.x;
    let dy = xj.y - xi.y;
    let ji = Matrix3::new(
        -c,
        -s,
        -s * dx + c * dy, //
        s,
        -c,
        -c * dx - s * dy, //
        0.0,
        0.0,
        -1.0,
    );
    let jj = Matrix3::new(
        c, s, 0.0, //
        -s, c, 0.0, //
        0.0, 0.0, 1.0,
    );
    (ji, jj)
}

fn state_of(p: &Pose2) -> Vector3<f64> {
    let t = p.translation();
    Vector3::new(t.x, t.y, p.theta())
}

fn pose_of(x: &Vector3<f64>) -> Pose2 {
    Pose2::from_angle(x.z, Vec2::new(x.x, x.y))
}

/// Whitened least-squares problem: a prior on the origin plus between-factors.
#[derive(Debug, Clone)]
pub struct PoseGraphProblem {
    pub nodes: usize,
    pub origin: usize,
    pub factors: Vec<BetweenFactor>,
    pub prior: NoiseModel,
    pub odometry: NoiseModel,
}

impl PoseGraphProblem {
    fn prior_residual(&self, states: &[Vector3<f64>]) -> Vector3<f64> {
        let x = &states[self.origin];
        Vector3::new(x.x, x.y, wrap_angle(x.z).radians())
    }

    /// `½ Σ ‖whitened residual‖²`.
    pub fn cost(&self, states: &[Vector3<f64>]) -> f64 {
        let wp = self.prior.weights();
        let wo = self.odometry.weights();
        let mut total = self
            .prior_residual(states)
            .component_mul(&wp)
            .norm_squared();
        for f in &self.factors {
            total += between_residual(&states[f.i], &states[f.j], &f.measured)
                .component_mul(&wo)
                .norm_squared();
        }
        0.5 * total
    }

    /// Gauss–Newton system `(JᵀJ, Jᵀr)`.
    fn normal_equations(&self, states: &[Vector3<f64>]) -> (DMatrix<f64>, DVector<f64>) {
        let dim = 3 * self.nodes;
        let mut h = DMatrix::zeros(dim, dim);
        let mut b = DVector::zeros(dim);

        let wp = Matrix3::from_diagonal(&self.prior.weights());
        let r = wp * self.prior_residual(states);
        let o = 3 * self.origin;
        let jt = wp; // prior Jacobian is the whitening matrix itself
        h.fixed_view_mut::<3, 3>(o, o)
            .add_assign(jt.transpose() * jt);
        b.fixed_rows_mut::<3>(o).add_assign(jt.transpose() * r);

        let wo = Matrix3::from_diagonal(&self.odometry.weights());
        for f in &self.factors {
            let (xi, xj) = (&states[f.i], &states[f.j]);
            let r = wo * between_residual(xi, xj, &f.measured);
            let (ji, jj) = between_jacobians(xi, xj);
            let (ji, jj) = (wo * ji, wo * jj);
            let (a, c) = (3 * f.i, 3 * f.j);
            h.fixed_view_mut::<3, 3>(a, a)
                .add_assign(ji.transpose() * ji);
            h.fixed_view_mut::<3, 3>(c, c)
                .add_assign(jj.transpose() * jj);
            let cross = ji.transpose() * jj;
            h.fixed_view_mut::<3, 3>(a, c).add_assign(cross);
            h.fixed_view_mut::<3, 3>(c, a).add_assign(cross.transpose());
            b.fixed_rows_mut::<3>(a).add_assign(ji.transpose() * r);
            b.fixed_rows_mut::<3>(c).add_assign(jj.transpose() * r);
        }
        (h, b)
    }
}

fn select_factors(g: &PoseGraph, cfg: &PgoConfig) -> Result<Vec<BetweenFactor>> {
    let tree = spanning_tree(g)?;
    let mut pairs = tree.clone();
    let norm = |(a, b): (usize, usize)| (a.min(b), a.max(b));
    let in_tree = |p: (usize, usize)| tree.iter().any(|&t| norm(t) == norm(p));
    match cfg.edges {
        PgoEdgeSet::All => {
            pairs.extend(
                g.pairs()
                    .into_iter()
                    .filter(|&p| !in_tree(p) && g.pair_score(p.0, p.1) > 0.0),
            );
        }
        PgoEdgeSet::TreePlusOne => {
            if let Some(last) = g.pairs_by_score().into_iter().rev().find(|&p| !in_tree(p)) {
                pairs.push(last);
            }
        }
    }
    Ok(pairs
        .into_iter()
        .map(|(a, b)| {
            let obs = g.best_direction(a, b).expect("pair has an observation");
            BetweenFactor {
                i: obs.src,
                j: obs.dst,
                measured: obs.rel_pose,
            }
        })
        .collect())
}

/// Pose-graph optimization initialized from `init` (normally the greedy
/// spanning-tree solution).
pub fn pgo(g: &PoseGraph, init: &Solution, cfg: &PgoConfig) -> Result<Solution> {
    cfg.validate()?;
    if init.node_ids != g.nodes() {
        return Err(Error::Validation(
            "initial solution does not cover the graph's nodes".into(),
        ));
    }
    let factors = select_factors(g, cfg)?;
    let problem = PoseGraphProblem {
        nodes: g.len(),
        origin: g.origin_index(),
        factors,
        prior: cfg.prior,
        odometry: cfg.odometry,
    };
    let mut states: Vec<Vector3<f64>> = init.poses.iter().map(state_of).collect();
    let mut cost = problem.cost(&states);
    if !cost.is_finite() {
        return Err(Error::Numerical("non-finite initial cost".into()));
    }

    let mut trace = vec![cost];
    let mut lambda = cfg.lambda_init;
    let mut iterations = 0;
    let mut converged = cost <= cfg.abs_tol;
    while !converged && iterations < cfg.max_iters {
        iterations += 1;
        let (h, b) = problem.normal_equations(&states);
        if h.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite Jacobian".into()));
        }
        let mut damped = h.clone();
        for k in 0..damped.nrows() {
            damped[(k, k)] += lambda;
        }
        let step = match damped.cholesky() {
            Some(chol) => chol.solve(&(-&b)),
            None => {
                lambda *= cfg.lambda_up;
                if lambda > cfg.lambda_max {
                    break;
                }
                continue;
            }
        };
        let candidate: Vec<Vector3<f64>> = states
            .iter()
            .enumerate()
            .map(|(k, x)| {
                let d = step.fixed_rows::<3>(3 * k);
                Vector3::new(x.x + d[0], x.y + d[1], wrap_angle(x.z + d[2]).radians())
            })
            .collect();
        let new_cost = problem.cost(&candidate);
        if !new_cost.is_finite() {
            return Err(Error::Numerical(
                "non-finite cost during optimization".into(),
            ));
        }
        if new_cost < cost {
            let rel = (cost - new_cost) / cost;
            states = candidate;
            cost = new_cost;
            trace.push(cost);
            lambda = (lambda / cfg.lambda_down).max(1e-12);
            if rel < cfg.rel_tol || cost <= cfg.abs_tol {
                converged = true;
            }
        } else {
            lambda *= cfg.lambda_up;
            if lambda > cfg.lambda_max {
                // No damping level improves the cost: a minimum at machine precision.
                converged = true;
            }
        }
    }

    let ids = g.nodes();
    let mut sol = Solution {
        node_ids: ids.to_vec(),
        origin_index: g.origin_index(),
        poses: states.iter().map(pose_of).collect(),
        diagnostics: Diagnostics {
            iterations,
            final_cost: cost,
            converged,
            edges: problem
                .factors
                .iter()
                .map(|f| (ids[f.i].clone(), ids[f.j].clone()))
                .collect(),
            cost_trace: trace,
        },
    };
    sol.anchor_to_origin();
    Ok(sol)
}
