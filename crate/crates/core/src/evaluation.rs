//! Trajectory error after rigid alignment.
//!
//! Predicted positions are aligned to ground truth with the least-squares
//! rigid transform (rotation and translation, no scale). Per-panorama
//! translation and rotation errors are then pooled into summary statistics.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::{wrap_angle, Pose2, Vec2};
use crate::solvers::Solution;

pub const CSV_HEADER: &str =
    "group_size,connectivity,method,rot_mean_deg,rot_med_deg,rot_std_deg,tr_mean_m,tr_med_m,tr_std_m";

/// Minimum spread of the ground-truth points for a defined rotation.
const MIN_SPREAD: f64 = 1e-12;

/// Rigid transform `T` minimizing `Σ |T(pred_k) - gt_k|²`.
pub fn align_2d(pred: &[Vec2], gt: &[Vec2]) -> Result<Pose2> {
    if pred.len() != gt.len() {
        return Err(Error::Shape(format!(
            "{} predicted points vs {} ground-truth points",
            pred.len(),
            gt.len()
        )));
    }
    let n = pred.len();
    if n < 2 {
        return Err(Error::Degenerate(format!(
            "alignment needs 2 points, got {n}"
        )));
    }
    let centroid = |v: &[Vec2]| v.iter().sum::<Vec2>() / n as f64;
    let (cp, cg) = (centroid(pred), centroid(gt));
    let spread = gt.iter().map(|g| (g - cg).norm_squared()).sum::<f64>();
    if !(spread > MIN_SPREAD) {
        return Err(Error::Degenerate(
            "ground-truth points coincide; rotation is unidentifiable".into(),
        ));
    }
    let (mut dot, mut cross) = (0.0, 0.0);
    for (p, g) in pred.iter().zip(gt) {
        let (a, b) = (p - cp, g - cg);
        dot += a.dot(&b);
        cross += a.x * b.y - a.y * b.x;
    }
    if dot.abs() + cross.abs() <= MIN_SPREAD {
        return Err(Error::Degenerate(
            "predicted points coincide; rotation is unidentifiable".into(),
        ));
    }
    let rot = Pose2::from_angle(cross.atan2(dot), Vec2::zeros());
    Ok(Pose2::from_angle(rot.theta(), cg - rot.rotate(cp)))
}

/// Per-panorama errors of one aligned cluster, in solution node order.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedErrors {
    pub node_ids: Vec<String>,
    /// Meters.
    pub translation: Vec<f64>,
    /// Radians in `[0, π]`.
    pub rotation: Vec<f64>,
    pub alignment: Pose2,
}

impl AlignedErrors {
    pub fn mean_translation(&self) -> f64 {
        mean(&self.translation)
    }

    pub fn mean_rotation(&self) -> f64 {
        mean(&self.rotation)
    }
}

/// Aligns `pred` onto `gt` and measures per-panorama errors.
pub fn evaluate(pred: &Solution, gt: &BTreeMap<String, Pose2>) -> Result<AlignedErrors> {
    let gt_poses = pred
        .node_ids
        .iter()
        .map(|id| {
            gt.get(id)
                .copied()
                .ok_or_else(|| Error::Validation(format!("no ground truth for '{id}'")))
        })
        .collect::<Result<Vec<_>>>()?;
    let p: Vec<Vec2> = pred.poses.iter().map(Pose2::translation).collect();
    let g: Vec<Vec2> = gt_poses.iter().map(Pose2::translation).collect();
    let t = align_2d(&p, &g)?;
    let translation = p
        .iter()
        .zip(&g)
        .map(|(a, b)| (t.apply(*a) - b).norm())
        .collect();
    let rotation = pred
        .poses
        .iter()
        .zip(&gt_poses)
        .map(|(a, b)| {
            wrap_angle(a.theta() + t.theta() - b.theta())
                .radians()
                .abs()
        })
        .collect();
    Ok(AlignedErrors {
        node_ids: pred.node_ids.clone(),
        translation,
        rotation,
        alignment: t,
    })
}

/// How per-panorama errors enter the statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pooling {
    /// Every panorama counts once.
    #[default]
    PerPano,
    /// Each cluster contributes its mean error.
    PerCluster,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub group_size: usize,
    pub connectivity: String,
    pub method: String,
    pub rot_mean_deg: f64,
    pub rot_med_deg: f64,
    pub rot_std_deg: f64,
    pub tr_mean_m: f64,
    pub tr_med_m: f64,
    pub tr_std_m: f64,
    /// Number of pooled values.
    #[serde(default)]
    pub count: usize,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Midpoint median; `v` must be non-empty.
fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Population standard deviation.
fn std_dev(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

/// `(mean, median, std)` of a non-empty sample.
pub fn statistics(v: &[f64]) -> Result<(f64, f64, f64)> {
    if v.is_empty() {
        return Err(Error::Validation("no values to summarize".into()));
    }
    Ok((mean(v), median(v), std_dev(v)))
}

pub fn summarize(
    errors: &[AlignedErrors],
    group_size: usize,
    method: &str,
    connectivity: &str,
    pooling: Pooling,
) -> Result<MetricSummary> {
    let (rot, tr): (Vec<f64>, Vec<f64>) = match pooling {
        Pooling::PerPano => (
            errors
                .iter()
                .flat_map(|e| e.rotation.iter().copied())
                .collect(),
            errors
                .iter()
                .flat_map(|e| e.translation.iter().copied())
                .collect(),
        ),
        Pooling::PerCluster => errors
            .iter()
            .map(|e| (e.mean_rotation(), e.mean_translation()))
            .unzip(),
    };
    let rot_deg: Vec<f64> = rot.iter().map(|r| r.to_degrees()).collect();
    let (rm, rmed, rs) = statistics(&rot_deg)?;
    let (tm, tmed, ts) = statistics(&tr)?;
    Ok(MetricSummary {
        group_size,
        connectivity: connectivity.to_string(),
        method: method.to_string(),
        rot_mean_deg: rm,
        rot_med_deg: rmed,
        rot_std_deg: rs,
        tr_mean_m: tm,
        tr_med_m: tmed,
        tr_std_m: ts,
        count: rot.len(),
    })
}

impl MetricSummary {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            self.group_size,
            self.connectivity,
            self.method,
            self.rot_mean_deg,
            self.rot_med_deg,
            self.rot_std_deg,
            self.tr_mean_m,
            self.tr_med_m,
            self.tr_std_m
        )
    }
}

/// Header plus one line per summary.
pub fn to_csv(rows: &[MetricSummary]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{}", r.csv_row());
    }
    out
}
