//! Training losses for pose and dense edge predictions.
//!
//! Node losses compare raw decoder outputs (an unnormalized rotation vector
//! and a translation per panorama) against ground truth, globally and over
//! every ordered pair. Edge losses compare dense per-column rows. Every
//! differentiable loss returns its gradient with respect to the prediction;
//! [`gradcheck`] verifies them numerically.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::{Pose2, Vec2};

/// Clamp applied to predicted probabilities before the log in [`covis_loss`].
pub const BCE_EPS: f64 = 1e-7;

/// Minimum norm of a predicted rotation vector that can be normalized.
pub const MIN_ROTATION_NORM: f64 = 1e-9;

/// Raw pose decoder output for one panorama. `r` need not be unit length.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PosePrediction {
    pub r: Vec2,
    pub t: Vec2,
}

impl PosePrediction {
    pub fn new(r: Vec2, t: Vec2) -> Self {
        PosePrediction { r, t }
    }

    pub fn from_pose(p: &Pose2) -> Self {
        PosePrediction {
            r: p.rotation(),
            t: p.translation(),
        }
    }

    /// Normalizes `r` into a pose.
    pub fn to_pose(&self) -> Result<Pose2> {
        if !(self.r.norm() >= MIN_ROTATION_NORM) || !self.t.iter().all(|v| v.is_finite()) {
            return Err(Error::Degenerate(format!(
                "rotation vector ({}, {}) cannot be normalized",
                self.r.x, self.r.y
            )));
        }
        Pose2::from_rotation_vector(self.r, self.t)
            .ok_or_else(|| Error::Degenerate("rotation vector cannot be normalized".into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub beta_r: f64,
    pub beta_ac: f64,
    pub beta_b: f64,
    pub beta_cv: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            beta_r: 0.1,
            beta_ac: 1.0,
            beta_b: 1.0,
            beta_cv: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.beta_r, self.beta_ac, self.beta_b, self.beta_cv];
        if all.iter().all(|w| w.is_finite() && *w >= 0.0) {
            Ok(())
        } else {
            Err(Error::Validation(format!(
                "loss weights must be >= 0: {all:?}"
            )))
        }
    }
}

/// How dense losses combine per-column terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    #[default]
    Sum,
    /// Divides the sum by the number of contributing columns.
    Mean,
}

pub type Predictions = BTreeMap<String, PosePrediction>;
pub type GroundTruth = BTreeMap<String, Pose2>;

fn check_nodes(pred: &Predictions, gt: &GroundTruth, origin: &str) -> Result<()> {
    if pred.len() != gt.len() || pred.keys().zip(gt.keys()).any(|(a, b)| a != b) {
        return Err(Error::Shape(format!(
            "prediction nodes {:?} differ from ground truth nodes {:?}",
            pred.keys().collect::<Vec<_>>(),
            gt.keys().collect::<Vec<_>>()
        )));
    }
    if !gt.contains_key(origin) {
        return Err(Error::Shape(format!("origin '{origin}' is not a node")));
    }
    Ok(())
}

/// Ground truth re-expressed in the origin's frame.
fn gt_in_origin_frame<'a>(gt: &'a GroundTruth, origin: &str) -> BTreeMap<&'a str, Pose2> {
    let o = gt[origin];
    gt.iter()
        .map(|(k, p)| (k.as_str(), Pose2::relative(&o, p)))
        .collect()
}

fn zero_grad(pred: &Predictions) -> Predictions {
    pred.keys()
        .map(|k| (k.clone(), PosePrediction::default()))
        .collect()
}

/// Squared error of raw predictions against ground truth in the origin's
/// frame, summed over every node except the origin.
pub fn global_node_loss(
    pred: &Predictions,
    gt: &GroundTruth,
    origin: &str,
) -> Result<(f64, Predictions)> {
    check_nodes(pred, gt, origin)?;
    let gt = gt_in_origin_frame(gt, origin);
    let mut grad = zero_grad(pred);
    let mut value = 0.0;
    for (id, p) in pred {
        if id == origin {
            continue;
        }
        let g = &gt[id.as_str()];
        let er = p.r - g.rotation();
        let et = p.t - g.translation();
        value += er.norm_squared() + et.norm_squared();
        grad.insert(id.clone(), PosePrediction::new(2.0 * er, 2.0 * et));
    }
    Ok((value, grad))
}

fn cross(a: Vec2, b: Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Pulls a gradient with respect to `r / |r|` back to `r`.
fn normalize_backward(r: Vec2, g_unit: Vec2) -> Vec2 {
    let n = r.norm();
    let a = r / n;
    (g_unit - a * a.dot(&g_unit)) / n
}

/// Squared error of predicted relative poses over all ordered pairs. The
/// predicted rotations are normalized before the relative pose is formed.
pub fn relative_node_loss(
    pred: &Predictions,
    gt: &GroundTruth,
    origin: &str,
) -> Result<(f64, Predictions)> {
    check_nodes(pred, gt, origin)?;
    for (id, p) in pred {
        if !(p.r.norm() >= MIN_ROTATION_NORM) {
            return Err(Error::Degenerate(format!(
                "predicted rotation of '{id}' has norm {}",
                p.r.norm()
            )));
        }
    }
    let ids: Vec<&String> = pred.keys().collect();
    let preds: Vec<&PosePrediction> = pred.values().collect();
    let gts: Vec<&Pose2> = gt.values().collect();
    let units: Vec<Vec2> = preds.iter().map(|p| p.r.normalize()).collect();
    let n = ids.len();

    let mut g_unit = vec![Vec2::zeros(); n];
    let mut g_t = vec![Vec2::zeros(); n];
    let mut value = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let rel = Pose2::relative(gts[i], gts[j]);
            let (gr, gtr) = (rel.rotation(), rel.translation());
            let (a, b) = (units[i], units[j]);
            let d = preds[j].t - preds[i].t;
            let er = Vec2::new(a.dot(&b) - gr.x, cross(a, b) - gr.y);
            let et = Vec2::new(a.dot(&d) - gtr.x, cross(a, d) - gtr.y);
            value += er.norm_squared() + et.norm_squared();

            g_unit[i] += 2.0
                * (er.x * b + er.y * Vec2::new(b.y, -b.x) + et.x * d + et.y * Vec2::new(d.y, -d.x));
            g_unit[j] += 2.0 * (er.x * a + er.y * Vec2::new(-a.y, a.x));
            let g_d = 2.0 * (et.x * a + et.y * Vec2::new(-a.y, a.x));
            g_t[j] += g_d;
            g_t[i] -= g_d;
        }
    }
    let grad = (0..n)
        .map(|k| {
            (
                ids[k].clone(),
                PosePrediction::new(normalize_backward(preds[k].r, g_unit[k]), g_t[k]),
            )
        })
        .collect();
    Ok((value, grad))
}

/// Global loss plus `beta_r` times the relative loss.
pub fn node_loss(
    pred: &Predictions,
    gt: &GroundTruth,
    origin: &str,
    w: &LossWeights,
) -> Result<f64> {
    w.validate()?;
    let (ng, _) = global_node_loss(pred, gt, origin)?;
    let (nr, _) = relative_node_loss(pred, gt, origin)?;
    Ok(combine_node(ng, nr, w))
}

/// `ng + beta_r * nr`.
pub fn combine_node(ng: f64, nr: f64, w: &LossWeights) -> f64 {
    ng + w.beta_r * nr
}

fn check_rows<T, U>(pred: &[Vec<T>], gt: &[Vec<U>], what: &str) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::Shape(format!(
            "{what}: {} predicted rows vs {} target rows",
            pred.len(),
            gt.len()
        )));
    }
    for (k, (p, g)) in pred.iter().zip(gt).enumerate() {
        if p.len() != g.len() {
            return Err(Error::Shape(format!(
                "{what}: row {k} has width {} vs {}",
                p.len(),
                g.len()
            )));
        }
    }
    Ok(())
}

fn reduce(
    value: f64,
    mut grad: Vec<Vec<f64>>,
    count: usize,
    reduction: Reduction,
) -> (f64, Vec<Vec<f64>>) {
    match reduction {
        Reduction::Sum => (value, grad),
        Reduction::Mean if count == 0 => (0.0, grad),
        Reduction::Mean => {
            let c = count as f64;
            grad.iter_mut().flatten().for_each(|g| *g /= c);
            (value / c, grad)
        }
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// L1 distance between boundary-angle rows, one row per ordered pair.
pub fn boundary_loss(
    pred: &[Vec<f64>],
    gt: &[Vec<f64>],
    reduction: Reduction,
) -> Result<(f64, Vec<Vec<f64>>)> {
    check_rows(pred, gt, "boundary")?;
    let mut value = 0.0;
    let mut count = 0;
    let grad = pred
        .iter()
        .zip(gt)
        .map(|(p, g)| {
            p.iter()
                .zip(g)
                .map(|(a, b)| {
                    value += (a - b).abs();
                    count += 1;
                    sign(a - b)
                })
                .collect()
        })
        .collect();
    Ok(reduce(value, grad, count, reduction))
}

/// L1 distance between correspondence rows over columns where `mask` is set.
/// Angles are compared as plain numbers, without wrapping.
pub fn ac_loss(
    pred: &[Vec<f64>],
    gt: &[Vec<f64>],
    mask: &[Vec<bool>],
    reduction: Reduction,
) -> Result<(f64, Vec<Vec<f64>>)> {
    check_rows(pred, gt, "correspondence")?;
    check_rows(pred, mask, "correspondence mask")?;
    let mut value = 0.0;
    let mut count = 0;
    let grad = pred
        .iter()
        .zip(gt)
        .zip(mask)
        .map(|((p, g), m)| {
            p.iter()
                .zip(g)
                .zip(m)
                .map(|((a, b), &on)| {
                    if !on {
                        return 0.0;
                    }
                    value += (a - b).abs();
                    count += 1;
                    sign(a - b)
                })
                .collect()
        })
        .collect();
    Ok(reduce(value, grad, count, reduction))
}

/// Binary cross entropy between predicted and target co-visibility rows.
/// Predictions are clamped to `[BCE_EPS, 1 - BCE_EPS]`; the gradient is zero
/// where the clamp is active.
pub fn covis_loss(
    pred: &[Vec<f64>],
    gt: &[Vec<f64>],
    reduction: Reduction,
) -> Result<(f64, Vec<Vec<f64>>)> {
    check_rows(pred, gt, "co-visibility")?;
    let mut value = 0.0;
    let mut count = 0;
    let mut bad = None;
    let grad = pred
        .iter()
        .zip(gt)
        .map(|(p, g)| {
            p.iter()
                .zip(g)
                .map(|(&q, &y)| {
                    if !(0.0..=1.0).contains(&y) || q.is_nan() {
                        bad = Some((q, y));
                    }
                    let qc = q.clamp(BCE_EPS, 1.0 - BCE_EPS);
                    value -= y * qc.ln() + (1.0 - y) * (1.0 - qc).ln();
                    count += 1;
                    if q > BCE_EPS && q < 1.0 - BCE_EPS {
                        -y / q + (1.0 - y) / (1.0 - q)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    if let Some((q, y)) = bad {
        return Err(Error::Validation(format!(
            "co-visibility values out of range: prediction {q}, target {y}"
        )));
    }
    Ok(reduce(value, grad, count, reduction))
}

/// Unweighted dense loss terms for one cluster.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EdgeLossComponents {
    pub ac: f64,
    pub b: f64,
    pub cv: f64,
}

/// `beta_ac * ac + beta_b * b + beta_cv * cv`.
pub fn edge_loss(c: &EdgeLossComponents, w: &LossWeights) -> Result<f64> {
    w.validate()?;
    Ok(w.beta_ac * c.ac + w.beta_b * c.b + w.beta_cv * c.cv)
}

/// Central finite-difference verification of analytic gradients.
pub mod gradcheck {
    use serde::Serialize;

    use crate::error::{Error, Result};

    pub const DEFAULT_STEP: f64 = 1e-6;

    #[derive(Debug, Clone, PartialEq, Serialize)]
    pub struct GradReport {
        pub analytic: Vec<f64>,
        pub numeric: Vec<f64>,
        /// `|a - n| / max(|a|, |n|)`, zero when both vanish.
        pub rel_err: f64,
    }

    pub fn relative_error(a: &[f64], n: &[f64]) -> f64 {
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let diff: Vec<f64> = a.iter().zip(n).map(|(x, y)| x - y).collect();
        let scale = norm(a).max(norm(n));
        if scale == 0.0 {
            0.0
        } else {
            norm(&diff) / scale
        }
    }

    /// Compares the gradient returned by `f` at `x` with central differences
    /// of its value.
    pub fn check<F>(f: F, x: &[f64], step: f64) -> Result<GradReport>
    where
        F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
    {
        let (_, analytic) = f(x)?;
        if analytic.len() != x.len() {
            return Err(Error::Shape(format!(
                "gradient has {} entries for {} parameters",
                analytic.len(),
                x.len()
            )));
        }
        let mut probe = x.to_vec();
        let mut numeric = Vec::with_capacity(x.len());
        for k in 0..x.len() {
            probe[k] = x[k] + step;
            let up = f(&probe)?.0;
            probe[k] = x[k] - step;
            let down = f(&probe)?.0;
            probe[k] = x[k];
            numeric.push((up - down) / (2.0 * step));
        }
        let rel_err = relative_error(&analytic, &numeric);
        Ok(GradReport {
            analytic,
            numeric,
            rel_err,
        })
    }
}

/// Flattens predictions as `[r.x, r.y, t.x, t.y]` per node in key order.
pub fn flatten_predictions(pred: &Predictions) -> Vec<f64> {
    pred.values()
        .flat_map(|p| [p.r.x, p.r.y, p.t.x, p.t.y])
        .collect()
}

/// Inverse of [`flatten_predictions`] using the keys of `like`.
pub fn unflatten_predictions(like: &Predictions, x: &[f64]) -> Result<Predictions> {
    if x.len() != 4 * like.len() {
        return Err(Error::Shape(format!(
            "{} values for {} nodes",
            x.len(),
            like.len()
        )));
    }
    Ok(like
        .keys()
        .zip(x.chunks(4))
        .map(|(k, c)| {
            (
                k.clone(),
                PosePrediction::new(Vec2::new(c[0], c[1]), Vec2::new(c[2], c[3])),
            )
        })
        .collect())
}

/// One finite-difference check per differentiable loss on a single instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossCheck {
    pub name: &'static str,
    pub rel_err: f64,
}

/// Random instance for gradient checks: `n` nodes, `pairs` rows of width `w`.
#[derive(Debug, Clone)]
pub struct LossInstance {
    pub origin: String,
    pub pred: Predictions,
    pub gt: GroundTruth,
    pub phi: (Vec<Vec<f64>>, Vec<Vec<f64>>),
    pub alpha: (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Vec<bool>>),
    pub covis: (Vec<Vec<f64>>, Vec<Vec<f64>>),
}

impl LossInstance {
    pub fn random(seed: u64, n: usize, width: usize) -> LossInstance {
        use rand::{Rng, SeedableRng};
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ids: Vec<String> = (0..n).map(|k| format!("p{k}")).collect();
        let mut pred = Predictions::new();
        let mut gt = GroundTruth::new();
        for id in &ids {
            let th = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            let g = Pose2::from_parts(th, rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            // keep predicted rotations well away from zero norm
            let scale = rng.random_range(0.5..1.5);
            let dth = rng.random_range(-0.5..0.5);
            let r = scale * Vec2::new((th + dth).cos(), (th + dth).sin());
            let t = g.translation()
                + Vec2::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
            gt.insert(id.clone(), g);
            pred.insert(id.clone(), PosePrediction::new(r, t));
        }
        let pairs = n * (n - 1);
        let mut rows = |lo: f64, hi: f64| -> Vec<Vec<f64>> {
            (0..pairs)
                .map(|_| (0..width).map(|_| rng.random_range(lo..hi)).collect())
                .collect()
        };
        let phi = (rows(0.1, 1.4), rows(0.1, 1.4));
        let alpha_p = rows(-3.0, 3.0);
        let alpha_g = rows(-3.0, 3.0);
        let covis_p = rows(0.02, 0.98);
        let covis_g: Vec<Vec<f64>> = rows(0.0, 1.0)
            .into_iter()
            .map(|r| {
                r.into_iter()
                    .map(|v| if v < 0.5 { 0.0 } else { 1.0 })
                    .collect()
            })
            .collect();
        let mask = covis_g
            .iter()
            .map(|r| r.iter().map(|&v| v == 1.0).collect())
            .collect();
        LossInstance {
            origin: ids[0].clone(),
            pred,
            gt,
            phi,
            alpha: (alpha_p, alpha_g, mask),
            covis: (covis_p, covis_g),
        }
    }

    /// Runs the finite-difference check for every differentiable loss.
    pub fn check_all(&self, step: f64) -> Result<Vec<LossCheck>> {
        let x = flatten_predictions(&self.pred);
        let node = |f: fn(&Predictions, &GroundTruth, &str) -> Result<(f64, Predictions)>| {
            gradcheck::check(
                |x| {
                    let p = unflatten_predictions(&self.pred, x)?;
                    let (v, g) = f(&p, &self.gt, &self.origin)?;
                    Ok((v, flatten_predictions(&g)))
                },
                &x,
                step,
            )
        };
        let dense = |pred: &[Vec<f64>], f: &dyn Fn(&[Vec<f64>]) -> Result<(f64, Vec<Vec<f64>>)>| {
            let width = pred.first().map_or(0, |r| r.len());
            let flat: Vec<f64> = pred.iter().flatten().copied().collect();
            gradcheck::check(
                |x| {
                    let rows: Vec<Vec<f64>> = x.chunks(width.max(1)).map(<[f64]>::to_vec).collect();
                    let (v, g) = f(&rows)?;
                    Ok((v, g.into_iter().flatten().collect()))
                },
                &flat,
                step,
            )
        };
        Ok(vec![
            LossCheck {
                name: "global_node",
                rel_err: node(global_node_loss)?.rel_err,
            },
            LossCheck {
                name: "relative_node",
                rel_err: node(relative_node_loss)?.rel_err,
            },
            LossCheck {
                name: "boundary",
                rel_err: dense(&self.phi.0, &|p| {
                    boundary_loss(p, &self.phi.1, Reduction::Sum)
                })?
                .rel_err,
            },
            LossCheck {
                name: "correspondence",
                rel_err: dense(&self.alpha.0, &|p| {
                    ac_loss(p, &self.alpha.1, &self.alpha.2, Reduction::Sum)
                })?
                .rel_err,
            },
            LossCheck {
                name: "covisibility",
                rel_err: dense(&self.covis.0, &|p| {
                    covis_loss(p, &self.covis.1, Reduction::Sum)
                })?
                .rel_err,
            },
        ])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gt3() -> GroundTruth {
        [
            ("a", Pose2::from_parts(0.3, 1.0, -2.0)),
            ("b", Pose2::from_parts(-1.2, 0.5, 0.5)),
            ("c", Pose2::from_parts(2.9, -1.0, 1.5)),
        ]
        .into_iter()
        .map(|(k, p)| (k.to_string(), p))
        .collect()
    }

    fn exact(gt: &GroundTruth, origin: &str) -> Predictions {
        let o = gt[origin];
        gt.iter()
            .map(|(k, p)| {
                (
                    k.clone(),
                    PosePrediction::from_pose(&Pose2::relative(&o, p)),
                )
            })
            .collect()
    }

    #[test]
    fn zero_at_ground_truth() {
        let gt = gt3();
        let pred = exact(&gt, "b");
        let (ng, g) = global_node_loss(&pred, &gt, "b").unwrap();
        assert_eq!(ng, 0.0);
        assert!(flatten_predictions(&g).iter().all(|v| *v == 0.0));
        let (nr, g) = relative_node_loss(&pred, &gt, "b").unwrap();
        assert!(nr < 1e-28);
        assert!(flatten_predictions(&g).iter().all(|v| v.abs() < 1e-13));
        assert!(node_loss(&pred, &gt, "b", &LossWeights::default()).unwrap() < 1e-28);
    }

    #[test]
    fn global_single_node() {
        let gt: GroundTruth = [
            ("o".to_string(), Pose2::identity()),
            ("x".to_string(), Pose2::from_parts(0.7, 1.0, 2.0)),
        ]
        .into();
        let mut pred = exact(&gt, "o");
        pred.get_mut("x").unwrap().t += Vec2::new(0.3, 0.4);
        let (v, g) = global_node_loss(&pred, &gt, "o").unwrap();
        assert!((v - 0.25).abs() < 1e-15);
        assert!((g["x"].t - Vec2::new(0.6, 0.8)).norm() < 1e-15);
        assert_eq!(g["o"], PosePrediction::default());
    }

    #[test]
    fn origin_is_excluded_from_global() {
        let gt = gt3();
        let mut pred = exact(&gt, "a");
        pred.get_mut("a").unwrap().t = Vec2::new(5.0, 5.0);
        assert_eq!(global_node_loss(&pred, &gt, "a").unwrap().0, 0.0);
    }

    #[test]
    fn relative_two_nodes_is_symmetric_double() {
        let gt: GroundTruth = [
            ("a".to_string(), Pose2::from_parts(0.0, 0.0, 0.0)),
            ("b".to_string(), Pose2::from_parts(0.4, 2.0, 0.0)),
        ]
        .into();
        let pred: Predictions = [
            (
                "a".to_string(),
                PosePrediction::new(Vec2::new(1.0, 0.0), Vec2::zeros()),
            ),
            (
                "b".to_string(),
                PosePrediction::new(Vec2::new(1.0, 0.0), Vec2::new(1.5, 0.3)),
            ),
        ]
        .into();
        let (v, _) = relative_node_loss(&pred, &gt, "a").unwrap();
        // hand-built oracle: both directions through the matrix form
        let pose = |p: &PosePrediction| p.to_pose().unwrap();
        let term = |i: &str, j: &str| {
            let r = pose(&pred[i]).inverse().to_matrix() * pose(&pred[j]).to_matrix();
            let g = gt[i].inverse().to_matrix() * gt[j].to_matrix();
            let d = r - g;
            d[(0, 0)].powi(2) + d[(1, 0)].powi(2) + d[(0, 2)].powi(2) + d[(1, 2)].powi(2)
        };
        let ab = term("a", "b");
        let ba = term("b", "a");
        assert!((v - (ab + ba)).abs() < 1e-12);
        // identical rotations make the two directions equal in magnitude
        let same_rot: Predictions = [
            (
                "a".to_string(),
                PosePrediction::new(Vec2::new(1.0, 0.0), Vec2::zeros()),
            ),
            (
                "b".to_string(),
                PosePrediction::new(Vec2::new(1.0, 0.0), Vec2::new(1.5, 0.3)),
            ),
        ]
        .into();
        let gt0: GroundTruth = [
            ("a".to_string(), Pose2::identity()),
            ("b".to_string(), Pose2::from_parts(0.0, 2.0, 0.0)),
        ]
        .into();
        let (v, _) = relative_node_loss(&same_rot, &gt0, "a").unwrap();
        assert!((v - 2.0 * (0.5f64.powi(2) + 0.3f64.powi(2))).abs() < 1e-12);
    }

    #[test]
    fn degenerate_rotation() {
        let gt = gt3();
        let mut pred = exact(&gt, "a");
        pred.get_mut("c").unwrap().r = Vec2::new(1e-10, 0.0);
        assert!(matches!(
            relative_node_loss(&pred, &gt, "a"),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn shape_errors() {
        let gt = gt3();
        let mut pred = exact(&gt, "a");
        pred.remove("c");
        assert!(matches!(
            global_node_loss(&pred, &gt, "a"),
            Err(Error::Shape(_))
        ));
        let pred = exact(&gt, "a");
        assert!(matches!(
            global_node_loss(&pred, &gt, "zz"),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            boundary_loss(&[vec![0.0; 3]], &[vec![0.0; 4]], Reduction::Sum),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            covis_loss(&[vec![0.5]], &[], Reduction::Sum),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn node_loss_combination() {
        let w = LossWeights::default();
        assert!((combine_node(2.0, 3.0, &w) - 2.3).abs() < 1e-15);
        let w0 = LossWeights { beta_r: 0.0, ..w };
        let inst = LossInstance::random(3, 4, 1);
        let ng = global_node_loss(&inst.pred, &inst.gt, &inst.origin)
            .unwrap()
            .0;
        assert_eq!(
            node_loss(&inst.pred, &inst.gt, &inst.origin, &w0).unwrap(),
            ng
        );
        let bad = LossWeights { beta_b: -1.0, ..w };
        assert!(edge_loss(&EdgeLossComponents::default(), &bad).is_err());
    }

    #[test]
    fn boundary_examples() {
        let gt = vec![vec![0.3; 16], vec![0.7; 16]];
        assert_eq!(boundary_loss(&gt, &gt, Reduction::Sum).unwrap().0, 0.0);
        let shifted = vec![vec![0.3 + 0.25; 16], vec![0.7; 16]];
        let (v, _) = boundary_loss(&shifted, &gt, Reduction::Sum).unwrap();
        assert!((v - 16.0 * 0.25).abs() < 1e-12);
        let (m, g) = boundary_loss(&shifted, &gt, Reduction::Mean).unwrap();
        assert!((m - 16.0 * 0.25 / 32.0).abs() < 1e-15);
        assert_eq!(g[0][0], 1.0 / 32.0);
    }

    #[test]
    fn ac_and_covis_examples() {
        let p = vec![vec![1.0, -2.0, 0.5]];
        let g = vec![vec![0.0, 0.0, 0.0]];
        let none = vec![vec![false; 3]];
        assert_eq!(ac_loss(&p, &g, &none, Reduction::Sum).unwrap().0, 0.0);
        assert_eq!(ac_loss(&p, &g, &none, Reduction::Mean).unwrap().0, 0.0);
        let some = vec![vec![true, false, true]];
        assert_eq!(ac_loss(&p, &g, &some, Reduction::Sum).unwrap().0, 1.5);

        let w = 64;
        let half = vec![vec![0.5; w]; 3];
        let y: Vec<Vec<f64>> = (0..3)
            .map(|r| (0..w).map(|k| ((k + r) % 2) as f64).collect())
            .collect();
        let (v, _) = covis_loss(&half, &y, Reduction::Sum).unwrap();
        assert!((v - 3.0 * w as f64 * std::f64::consts::LN_2).abs() < 1e-10);
        let (floor, g) = covis_loss(&y, &y, Reduction::Sum).unwrap();
        assert!(floor <= 3.0 * w as f64 * -(1.0 - BCE_EPS).ln() + 1e-15);
        assert!(floor > 0.0);
        assert!(g.iter().flatten().all(|v| *v == 0.0));
        assert!(covis_loss(&[vec![0.5]], &[vec![2.0]], Reduction::Sum).is_err());
    }

    #[test]
    fn edge_loss_examples() {
        let w = LossWeights::default();
        assert_eq!(edge_loss(&EdgeLossComponents::default(), &w).unwrap(), 0.0);
        let unit = EdgeLossComponents {
            ac: 1.0,
            b: 1.0,
            cv: 1.0,
        };
        assert_eq!(edge_loss(&unit, &w).unwrap(), 3.0);
        let w2 = LossWeights {
            beta_ac: 2.0,
            beta_b: 0.5,
            beta_cv: 3.0,
            ..w
        };
        let c = EdgeLossComponents {
            ac: 0.25,
            b: 4.0,
            cv: 1.5,
        };
        let v = edge_loss(&c, &w2).unwrap();
        assert!((v - (0.5 + 2.0 + 4.5)).abs() < 1e-15);
        let w3 = LossWeights {
            beta_ac: 6.0,
            beta_b: 1.5,
            beta_cv: 9.0,
            ..w
        };
        assert!((edge_loss(&c, &w3).unwrap() - 3.0 * v).abs() < 1e-12);
    }

    #[test]
    fn dense_losses_match_elementwise_sums() {
        let inst = LossInstance::random(11, 3, 20);
        let mut b = 0.0;
        let mut ac = 0.0;
        let mut cv = 0.0;
        for r in 0..inst.phi.0.len() {
            for k in 0..20 {
                b += (inst.phi.0[r][k] - inst.phi.1[r][k]).abs();
                if inst.alpha.2[r][k] {
                    ac += (inst.alpha.0[r][k] - inst.alpha.1[r][k]).abs();
                }
                let (q, y) = (inst.covis.0[r][k], inst.covis.1[r][k]);
                cv += if y == 1.0 { -q.ln() } else { -(1.0 - q).ln() };
            }
        }
        let got_b = boundary_loss(&inst.phi.0, &inst.phi.1, Reduction::Sum)
            .unwrap()
            .0;
        let got_ac = ac_loss(&inst.alpha.0, &inst.alpha.1, &inst.alpha.2, Reduction::Sum)
            .unwrap()
            .0;
        let got_cv = covis_loss(&inst.covis.0, &inst.covis.1, Reduction::Sum)
            .unwrap()
            .0;
        assert!((got_b - b).abs() < 1e-10);
        assert!((got_ac - ac).abs() < 1e-10);
        assert!((got_cv - cv).abs() < 1e-10);
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..100 {
            let inst = LossInstance::random(seed, 2 + (seed as usize % 4), 8);
            for c in inst.check_all(gradcheck::DEFAULT_STEP).unwrap() {
                assert!(c.rel_err < 1e-6, "seed {seed} {}: {}", c.name, c.rel_err);
            }
        }
    }

    #[test]
    fn gradcheck_rejects_wrong_shape() {
        let r = gradcheck::check(|x| Ok((x[0], vec![1.0, 2.0])), &[0.0], 1e-6);
        assert!(matches!(r, Err(Error::Shape(_))));
        let r = gradcheck::check(|x| Ok((x[0] * x[0], vec![2.0 * x[0]])), &[1.5], 1e-6).unwrap();
        assert!(r.rel_err < 1e-9);
    }

    proptest! {
        #[test]
        fn node_loss_relabel_invariant(seed in 0u64..1000, n in 3usize..6) {
            let inst = LossInstance::random(seed, n, 1);
            let w = LossWeights::default();
            let v = node_loss(&inst.pred, &inst.gt, &inst.origin, &w).unwrap();
            // reverse the labels of the non-origin nodes
            let others: Vec<String> = inst.pred.keys().filter(|k| **k != inst.origin).cloned().collect();
            let rename = |k: &String| -> String {
                match others.iter().position(|o| o == k) {
                    Some(p) => format!("q{}", others.len() - p),
                    None => k.clone(),
                }
            };
            let pred: Predictions = inst.pred.iter().map(|(k, p)| (rename(k), *p)).collect();
            let gt: GroundTruth = inst.gt.iter().map(|(k, p)| (rename(k), *p)).collect();
            let v2 = node_loss(&pred, &gt, &inst.origin, &w).unwrap();
            prop_assert!((v - v2).abs() <= 1e-12 * v.max(1.0));
        }

        #[test]
        fn losses_nonnegative(seed in 0u64..1000) {
            let inst = LossInstance::random(seed, 3, 4);
            prop_assert!(global_node_loss(&inst.pred, &inst.gt, &inst.origin).unwrap().0 >= 0.0);
            prop_assert!(relative_node_loss(&inst.pred, &inst.gt, &inst.origin).unwrap().0 >= 0.0);
            prop_assert!(boundary_loss(&inst.phi.0, &inst.phi.1, Reduction::Sum).unwrap().0 >= 0.0);
            prop_assert!(covis_loss(&inst.covis.0, &inst.covis.1, Reduction::Mean).unwrap().0 >= 0.0);
        }
    }
}
