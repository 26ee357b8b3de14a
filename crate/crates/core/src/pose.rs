//! Planar rigid motions.
//!
//! A [`Pose2`] maps camera-frame coordinates into the world frame
//! ("world-from-camera"). The rotation is stored as a unit vector
//! `(cos θ, sin θ)` and renormalized after every composition so long chains
//! do not drift off the unit circle.

use std::f64::consts::{PI, TAU};
use std::fmt;

use serde::{Deserialize, Serialize};

pub type Vec2 = nalgebra::Vector2<f64>;

/// An angle in radians, always wrapped to `(-π, π]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(into = "f64", from = "f64")]
pub struct Angle(f64);

impl Angle {
    pub fn new(radians: f64) -> Self {
        wrap_angle(radians)
    }

    pub fn radians(self) -> f64 {
        self.0
    }

    pub fn degrees(self) -> f64 {
        self.0.to_degrees()
    }
}

impl From<f64> for Angle {
    fn from(x: f64) -> Self {
        wrap_angle(x)
    }
}

impl From<Angle> for f64 {
    fn from(a: Angle) -> Self {
        a.0
    }
}

impl fmt::Display for Angle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Wraps `x` into `(-π, π]`; `-π` maps to `+π`.
pub fn wrap_angle(x: f64) -> Angle {
    if x > -PI && x <= PI {
        return Angle(x);
    }
    let mut r = (x + PI).rem_euclid(TAU) - PI;
    if r <= -PI {
        r += TAU;
    }
    if r > PI {
        r -= TAU;
    }
    Angle(r)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose2 {
    r: Vec2,
    t: Vec2,
}

impl Default for Pose2 {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose2 {
    pub fn identity() -> Self {
        Self {
            r: Vec2::new(1.0, 0.0),
            t: Vec2::zeros(),
        }
    }

    pub fn from_angle(theta: f64, t: Vec2) -> Self {
        let (s, c) = theta.sin_cos();
        Self {
            r: Vec2::new(c, s),
            t,
        }
    }

    pub fn from_parts(theta: f64, x: f64, y: f64) -> Self {
        Self::from_angle(theta, Vec2::new(x, y))
    }

    /// Builds a pose from a rotation vector of any nonzero length.
    ///
    /// Returns `None` when `r` is not finite or too short to normalize.
    pub fn from_rotation_vector(r: Vec2, t: Vec2) -> Option<Self> {
        let n = r.norm();
        if !n.is_finite() || n < 1e-12 || !t.iter().all(|v| v.is_finite()) {
            return None;
        }
        Some(Self { r: r / n, t })
    }

    /// Rotation vector `(cos θ, sin θ)`.
    pub fn rotation(&self) -> Vec2 {
        self.r
    }

    pub fn translation(&self) -> Vec2 {
        self.t
    }

    pub fn angle(&self) -> Angle {
        wrap_angle(self.r.y.atan2(self.r.x))
    }

    pub fn theta(&self) -> f64 {
        self.angle().radians()
    }

    /// Rigid map `self ∘ other`: apply `other`, then `self`.
    pub fn compose(&self, other: &Pose2) -> Pose2 {
        let (ca, sa) = (self.r.x, self.r.y);
        let r = Vec2::new(
            ca * other.r.x - sa * other.r.y,
            sa * other.r.x + ca * other.r.y,
        );
        let t = self.rotate(other.t) + self.t;
        Pose2 { r: r / r.norm(), t }
    }

    pub fn inverse(&self) -> Pose2 {
        let r = Vec2::new(self.r.x, -self.r.y);
        let t = -self.rotate_inverse(self.t);
        Pose2 { r, t }
    }

    /// Pose of `world_from_j` expressed in the frame of `world_from_i`.
    pub fn relative(world_from_i: &Pose2, world_from_j: &Pose2) -> Pose2 {
        world_from_i.inverse().compose(world_from_j)
    }

    pub fn apply(&self, p: Vec2) -> Vec2 {
        self.rotate(p) + self.t
    }

    /// Rotates `v` by this pose's rotation, ignoring the translation.
    pub fn rotate(&self, v: Vec2) -> Vec2 {
        Vec2::new(
            self.r.x * v.x - self.r.y * v.y,
            self.r.y * v.x + self.r.x * v.y,
        )
    }

    pub fn rotate_inverse(&self, v: Vec2) -> Vec2 {
        Vec2::new(
            self.r.x * v.x + self.r.y * v.y,
            -self.r.y * v.x + self.r.x * v.y,
        )
    }

    /// Homogeneous 3×3 matrix of the map.
    pub fn to_matrix(&self) -> nalgebra::Matrix3<f64> {
        nalgebra::Matrix3::new(
            self.r.x, -self.r.y, self.t.x, //
            self.r.y, self.r.x, self.t.y, //
            0.0, 0.0, 1.0,
        )
    }

    pub fn is_finite(&self) -> bool {
        self.r.iter().chain(self.t.iter()).all(|v| v.is_finite())
    }
}

impl fmt::Display for Pose2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "(θ={:.6}, t=({:.6}, {:.6}))",
            self.theta(),
            self.t.x,
            self.t.y
        )
    }
}

/// Serialized form used by graph and pose files: `{"theta": f, "t": [x, y]}`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PoseRecord {
    pub theta: f64,
    pub t: [f64; 2],
}

impl From<&Pose2> for PoseRecord {
    fn from(p: &Pose2) -> Self {
        PoseRecord {
            theta: p.theta(),
            t: [p.t.x, p.t.y],
        }
    }
}

impl From<PoseRecord> for Pose2 {
    fn from(r: PoseRecord) -> Self {
        Pose2::from_parts(r.theta, r.t[0], r.t[1])
    }
}
