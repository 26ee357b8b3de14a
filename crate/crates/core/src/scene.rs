//! Ground-truth world: room layouts, cameras and panorama clusters.
//!
//! Scenes are either loaded from `.scene.json` files (a minimal projection of
//! indoor-dataset annotations) or generated synthetically from a seed. The
//! seeded cluster sampling and augmentation helpers mirror what a training
//! pipeline does to a cluster before feeding it to a model.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::{PI, TAU};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cues::ColumnGrid;
use crate::error::{Error, Result};
use crate::pose::{wrap_angle, Angle, Pose2, Vec2};

/// Default upper bound on panoramas per cluster.
pub const MAX_CLUSTER_SIZE: usize = 5;

fn cross(a: Vec2, b: Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// A closed, simple, counter-clockwise room polygon.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    vertices: Vec<Vec2>,
}

impl Layout {
    pub fn new(vertices: Vec<Vec2>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::Validation(format!(
                "layout needs at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if vertices
            .iter()
            .any(|v| !v.x.is_finite() || !v.y.is_finite())
        {
            return Err(Error::Validation("layout has non-finite vertex".into()));
        }
        let layout = Layout { vertices };
        if layout.signed_area() <= 0.0 {
            return Err(Error::Validation(
                "layout must be counter-clockwise with positive area".into(),
            ));
        }
        if !layout.is_simple() {
            return Err(Error::Validation("layout polygon self-intersects".into()));
        }
        Ok(layout)
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    /// Edges as `(start, end)` pairs, including the closing edge.
    pub fn edges(&self) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn signed_area(&self) -> f64 {
        0.5 * self.edges().map(|(a, b)| cross(a, b)).sum::<f64>()
    }

    fn is_simple(&self) -> bool {
        let n = self.vertices.len();
        let edges: Vec<_> = self.edges().collect();
        for i in 0..n {
            let (a, b) = edges[i];
            if (b - a).norm() < 1e-12 {
                return false;
            }
            for j in (i + 1)..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                let (c, d) = edges[j];
                if adjacent {
                    // Adjacent edges may only share their common vertex.
                    let shared = if j == i + 1 { b } else { a };
                    let (p, q) = if j == i + 1 { (a, d) } else { (c, b) };
                    let u = p - shared;
                    let v = q - shared;
                    if cross(u, v).abs() < 1e-12 * u.norm() * v.norm() && u.dot(&v) > 0.0 {
                        return false;
                    }
                    continue;
                }
                if segments_intersect(a, b, c, d) {
                    return false;
                }
            }
        }
        true
    }

    /// Crossing-number point-in-polygon test (boundary points are unspecified).
    pub fn contains(&self, p: Vec2) -> bool {
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if p.x < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    pub fn distance_to_boundary(&self, p: Vec2) -> f64 {
        self.edges()
            .map(|(a, b)| point_segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }

    /// Inside and at least `margin` away from every wall.
    pub fn contains_with_margin(&self, p: Vec2, margin: f64) -> bool {
        self.contains(p) && self.distance_to_boundary(p) > margin
    }

    pub fn bounding_box(&self) -> (Vec2, Vec2) {
        let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = -lo;
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        (lo, hi)
    }
}

pub(crate) fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let s = if len2 > 0.0 {
        ((p - a).dot(&ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (a + ab * s - p).norm()
}

fn orient(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    cross(b - a, c - a)
}

fn on_segment(a: Vec2, b: Vec2, p: Vec2) -> bool {
    p.x >= a.x.min(b.x) - 1e-12
        && p.x <= a.x.max(b.x) + 1e-12
        && p.y >= a.y.min(b.y) - 1e-12
        && p.y <= a.y.max(b.y) + 1e-12
}

/// Closed-segment intersection test, touching counts.
fn segments_intersect(a: Vec2, b: Vec2, c: Vec2, d: Vec2) -> bool {
    let eps = 1e-12;
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > eps && d2 < -eps) || (d1 < -eps && d2 > eps))
        && ((d3 > eps && d4 < -eps) || (d3 < -eps && d4 > eps))
    {
        return true;
    }
    (d1.abs() <= eps && on_segment(c, d, a))
        || (d2.abs() <= eps && on_segment(c, d, b))
        || (d3.abs() <= eps && on_segment(a, b, c))
        || (d4.abs() <= eps && on_segment(a, b, d))
}

/// A panorama's extrinsics under planar motion.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub position: Vec2,
    pub yaw: Angle,
    /// Camera height above the floor, meters.
    pub height: f64,
    pub room_id: String,
}

impl Camera {
    /// World-from-camera pose.
    pub fn pose(&self) -> Pose2 {
        Pose2::from_angle(self.yaw.radians(), self.position)
    }

    /// The same camera with its panorama rotated by `shift` columns.
    pub fn rotated_by_columns(&self, shift: usize, grid: &ColumnGrid) -> Camera {
        Camera {
            yaw: grid.shifted_heading(self.yaw.radians(), shift as i64),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub rooms: BTreeMap<String, Layout>,
    pub panos: BTreeMap<String, Camera>,
    /// Groups of co-located panoramas ("spaces").
    pub clusters: Vec<Vec<String>>,
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        if self.rooms.is_empty() {
            return Err(Error::Validation("scene has no rooms".into()));
        }
        for (id, cam) in &self.panos {
            let room = self.rooms.get(&cam.room_id).ok_or_else(|| {
                Error::Validation(format!(
                    "pano '{id}' references unknown room '{}'",
                    cam.room_id
                ))
            })?;
            if !(cam.height > 0.0 && cam.height.is_finite()) {
                return Err(Error::Validation(format!(
                    "pano '{id}' has non-positive height"
                )));
            }
            if !cam.position.iter().all(|v| v.is_finite()) {
                return Err(Error::Validation(format!(
                    "pano '{id}' has non-finite position"
                )));
            }
            if !room.contains(cam.position) || room.distance_to_boundary(cam.position) < 1e-9 {
                return Err(Error::Validation(format!(
                    "pano '{id}' lies outside room '{}'",
                    cam.room_id
                )));
            }
        }
        for (k, cluster) in self.clusters.iter().enumerate() {
            let distinct: BTreeSet<&String> = cluster.iter().collect();
            if distinct.len() != cluster.len() {
                return Err(Error::Validation(format!("cluster {k} repeats a pano")));
            }
            if cluster.len() < 2 {
                return Err(Error::Validation(format!(
                    "cluster {k} has fewer than 2 panos"
                )));
            }
            if let Some(missing) = cluster.iter().find(|id| !self.panos.contains_key(*id)) {
                return Err(Error::Validation(format!(
                    "cluster {k} references unknown pano '{missing}'"
                )));
            }
        }
        Ok(())
    }

    pub fn camera(&self, id: &str) -> Result<&Camera> {
        self.panos
            .get(id)
            .ok_or_else(|| Error::Validation(format!("unknown pano '{id}'")))
    }

    pub fn room_of(&self, pano: &str) -> Result<&Layout> {
        let cam = self.camera(pano)?;
        self.rooms
            .get(&cam.room_id)
            .ok_or_else(|| Error::Validation(format!("unknown room '{}'", cam.room_id)))
    }

    /// Co-located panorama groups. Falls back to one group per room when the
    /// scene lists no clusters.
    pub fn spaces(&self) -> Vec<Vec<String>> {
        if !self.clusters.is_empty() {
            return self.clusters.clone();
        }
        let mut by_room: BTreeMap<&str, Vec<String>> = BTreeMap::new();
        for (id, cam) in &self.panos {
            by_room.entry(&cam.room_id).or_default().push(id.clone());
        }
        by_room.into_values().filter(|g| g.len() >= 2).collect()
    }

    /// Rooms whose walls occlude views between the given panoramas: every
    /// room hosting a panorama that shares a space with any of them.
    pub fn occluding_rooms(&self, panos: &[&str]) -> Result<Vec<&Layout>> {
        let mut room_ids = BTreeSet::new();
        for &p in panos {
            room_ids.insert(self.camera(p)?.room_id.as_str());
        }
        for space in self.spaces() {
            if space.iter().any(|id| panos.contains(&id.as_str())) {
                for id in &space {
                    room_ids.insert(self.camera(id)?.room_id.as_str());
                }
            }
        }
        Ok(room_ids.into_iter().map(|r| &self.rooms[r]).collect())
    }

    pub fn from_json_str(text: &str) -> Result<Scene> {
        let file: SceneFile =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        file.into_scene()
    }

    pub fn to_json_string(&self) -> String {
        let file = SceneFile::from_scene(self);
        let mut s = serde_json::to_string_pretty(&file).expect("scene serializes");
        s.push('\n');
        s
    }
}

/// Reads and validates a `.scene.json` file.
pub fn load_scene(path: impl AsRef<Path>) -> Result<Scene> {
    let text = std::fs::read_to_string(path)?;
    Scene::from_json_str(&text)
}

#[derive(Debug, Serialize, Deserialize)]
struct SceneFile {
    version: u32,
    rooms: Vec<RoomRecord>,
    panos: Vec<PanoRecord>,
    #[serde(default)]
    clusters: Vec<Vec<String>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RoomRecord {
    id: String,
    vertices: Vec<[f64; 2]>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PanoRecord {
    id: String,
    room_id: String,
    position: [f64; 2],
    yaw_rad: f64,
    height_m: f64,
}

impl SceneFile {
    fn into_scene(self) -> Result<Scene> {
        if self.version != 1 {
            return Err(Error::Parse(format!(
                "unsupported scene version {}",
                self.version
            )));
        }
        let mut rooms = BTreeMap::new();
        for r in self.rooms {
            let verts = r.vertices.iter().map(|v| Vec2::new(v[0], v[1])).collect();
            let layout = Layout::new(verts)
                .map_err(|e| Error::Validation(format!("room '{}': {e}", r.id)))?;
            if rooms.insert(r.id.clone(), layout).is_some() {
                return Err(Error::Validation(format!("duplicate room id '{}'", r.id)));
            }
        }
        let mut panos = BTreeMap::new();
        for p in self.panos {
            let cam = Camera {
                position: Vec2::new(p.position[0], p.position[1]),
                yaw: wrap_angle(p.yaw_rad),
                height: p.height_m,
                room_id: p.room_id,
            };
            if panos.insert(p.id.clone(), cam).is_some() {
                return Err(Error::Validation(format!("duplicate pano id '{}'", p.id)));
            }
        }
        let scene = Scene {
            rooms,
            panos,
            clusters: self.clusters,
        };
        scene.validate()?;
        Ok(scene)
    }

    fn from_scene(scene: &Scene) -> Self {
        SceneFile {
            version: 1,
            rooms: scene
                .rooms
                .iter()
                .map(|(id, l)| RoomRecord {
                    id: id.clone(),
                    vertices: l.vertices().iter().map(|v| [v.x, v.y]).collect(),
                })
                .collect(),
            panos: scene
                .panos
                .iter()
                .map(|(id, c)| PanoRecord {
                    id: id.clone(),
                    room_id: c.room_id.clone(),
                    position: [c.position.x, c.position.y],
                    yaw_rad: c.yaw.radians(),
                    height_m: c.height,
                })
                .collect(),
            clusters: scene.clusters.clone(),
        }
    }
}

/// An ordered group of panoramas; `pano_ids[origin_index]` is the origin.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cluster {
    pub pano_ids: Vec<String>,
    pub origin_index: usize,
}

impl Cluster {
    pub fn new(pano_ids: Vec<String>, origin_index: usize) -> Result<Self> {
        let distinct: BTreeSet<&String> = pano_ids.iter().collect();
        if distinct.len() != pano_ids.len() {
            return Err(Error::Validation("cluster ids must be distinct".into()));
        }
        if pano_ids.len() < 2 {
            return Err(Error::Validation(
                "cluster needs at least 2 panoramas".into(),
            ));
        }
        if origin_index >= pano_ids.len() {
            return Err(Error::Validation(format!(
                "origin index {origin_index} out of range for {} panoramas",
                pano_ids.len()
            )));
        }
        Ok(Cluster {
            pano_ids,
            origin_index,
        })
    }

    pub fn len(&self) -> usize {
        self.pano_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pano_ids.is_empty()
    }

    pub fn origin(&self) -> &str {
        &self.pano_ids[self.origin_index]
    }

    /// Ground-truth world poses in cluster order.
    pub fn poses(&self, scene: &Scene) -> Result<Vec<Pose2>> {
        self.pano_ids
            .iter()
            .map(|id| scene.camera(id).map(Camera::pose))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoomShape {
    /// Convex polygon with 4–8 vertices inscribed in an ellipse.
    Convex,
    /// Rectangle with one corner notched out (an L shape).
    Notched,
}

#[derive(Debug, Clone)]
pub struct SynthParams {
    pub rooms: usize,
    pub cameras_per_room: usize,
    /// Room extent range in meters.
    pub size_range: (f64, f64),
    pub shape: RoomShape,
    /// Minimum camera clearance to any wall, meters.
    pub margin: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            rooms: 1,
            cameras_per_room: 3,
            size_range: (3.0, 8.0),
            shape: RoomShape::Convex,
            margin: 0.2,
        }
    }
}

const GAP_BETWEEN_ROOMS: f64 = 1.0;
const MAX_PLACEMENT_TRIES: usize = 20_000;

/// Generates a deterministic synthetic scene. Each room is its own space and
/// is listed as one cluster.
pub fn synth_scene(seed: u64, params: &SynthParams) -> Result<Scene> {
    let (lo, hi) = params.size_range;
    if params.rooms == 0 || params.cameras_per_room == 0 {
        return Err(Error::Validation(
            "room and camera counts must be positive".into(),
        ));
    }
    if !(lo > 0.0 && hi >= lo && params.margin > 0.0) {
        return Err(Error::Validation("invalid size range or margin".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rooms = BTreeMap::new();
    let mut panos = BTreeMap::new();
    let mut clusters = Vec::new();
    let mut offset_x = 0.0;

    for r in 0..params.rooms {
        let room_id = format!("room{r:02}");
        let verts = match params.shape {
            RoomShape::Convex => convex_room(&mut rng, lo, hi),
            RoomShape::Notched => notched_room(&mut rng, lo, hi),
        };
        let min_x = verts.iter().map(|v| v.x).fold(f64::INFINITY, f64::min);
        let max_x = verts.iter().map(|v| v.x).fold(f64::NEG_INFINITY, f64::max);
        let shift = Vec2::new(offset_x - min_x, 0.0);
        offset_x += max_x - min_x + GAP_BETWEEN_ROOMS;
        let layout = Layout::new(verts.into_iter().map(|v| v + shift).collect())
            .map_err(|e| Error::Generation(format!("room {r}: {e}")))?;

        let (bmin, bmax) = layout.bounding_box();
        let mut placed: Vec<Vec2> = Vec::new();
        let mut group = Vec::new();
        for c in 0..params.cameras_per_room {
            let mut tries = 0;
            let position = loop {
                tries += 1;
                if tries > MAX_PLACEMENT_TRIES {
                    return Err(Error::Generation(format!(
                        "cannot place camera {c} in room {r} with margin {} m",
                        params.margin
                    )));
                }
                let p = Vec2::new(
                    rng.random_range(bmin.x..bmax.x),
                    rng.random_range(bmin.y..bmax.y),
                );
                if layout.contains_with_margin(p, params.margin)
                    && placed.iter().all(|q| (q - p).norm() > 2.0 * params.margin)
                {
                    break p;
                }
            };
            placed.push(position);
            let yaw = wrap_angle(rng.random_range(-PI..PI));
            let height = rng.random_range(1.4..1.7);
            let id = format!("{room_id}_pano{c:02}");
            group.push(id.clone());
            panos.insert(
                id,
                Camera {
                    position,
                    yaw,
                    height,
                    room_id: room_id.clone(),
                },
            );
        }
        if group.len() >= 2 {
            clusters.push(group);
        }
        rooms.insert(room_id, layout);
    }

    let scene = Scene {
        rooms,
        panos,
        clusters,
    };
    scene
        .validate()
        .map_err(|e| Error::Generation(e.to_string()))?;
    Ok(scene)
}

fn convex_room(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Vec<Vec2> {
    let n = rng.random_range(4..=8usize);
    let rx = 0.5 * rng.random_range(lo..=hi);
    let ry = 0.5 * rng.random_range(lo..=hi);
    let min_gap = 0.35 * TAU / n as f64;
    let angles = loop {
        let mut a: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..TAU)).collect();
        a.sort_by(f64::total_cmp);
        let ok = a.windows(2).all(|w| w[1] - w[0] >= min_gap) && a[0] + TAU - a[n - 1] >= min_gap;
        if ok {
            break a;
        }
    };
    angles
        .into_iter()
        .map(|t| Vec2::new(rx * (1.0 + t.cos()), ry * (1.0 + t.sin())))
        .collect()
}

fn notched_room(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Vec<Vec2> {
    let w = rng.random_range(lo..=hi);
    let h = rng.random_range(lo..=hi);
    let a = rng.random_range(0.4..0.6);
    let b = rng.random_range(0.4..0.6);
    vec![
        Vec2::new(0.0, 0.0),
        Vec2::new(w, 0.0),
        Vec2::new(w, a * h),
        Vec2::new(b * w, a * h),
        Vec2::new(b * w, h),
        Vec2::new(0.0, h),
    ]
}

/// How clusters are drawn from a space larger than the requested size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClusterSampling {
    /// Every cluster is an independent random subset; panoramas may recur
    /// across clusters.
    #[default]
    IndependentDraws,
    /// The space is shuffled and cut into disjoint clusters; leftovers dropped.
    DisjointPartition,
}

#[derive(Debug, Clone)]
pub struct SamplingOptions {
    pub sizes: Vec<usize>,
    pub max_size: usize,
    pub mode: ClusterSampling,
}

impl Default for SamplingOptions {
    fn default() -> Self {
        SamplingOptions {
            sizes: vec![3, 4, 5],
            max_size: MAX_CLUSTER_SIZE,
            mode: ClusterSampling::IndependentDraws,
        }
    }
}

/// Draws clusters of the requested sizes from every space of the scene.
///
/// A space with exactly `s` panoramas yields its unique cluster; larger
/// spaces yield `n / s` clusters. Spaces smaller than `s` are skipped, as are
/// sizes above `max_size`.
pub fn sample_clusters(scene: &Scene, seed: u64, opts: &SamplingOptions) -> Vec<Cluster> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sizes: Vec<usize> = opts
        .sizes
        .iter()
        .copied()
        .filter(|&s| s >= 2 && s <= opts.max_size)
        .collect();
    sizes.sort_unstable();
    sizes.dedup();

    let mut out = Vec::new();
    for space in scene.spaces() {
        let n = space.len();
        for &s in &sizes {
            if n < s {
                continue;
            }
            match opts.mode {
                ClusterSampling::IndependentDraws => {
                    for _ in 0..(n / s).max(1) {
                        let ids = rand::seq::index::sample(&mut rng, n, s)
                            .into_iter()
                            .map(|k| space[k].clone())
                            .collect();
                        out.push(Cluster {
                            pano_ids: ids,
                            origin_index: 0,
                        });
                    }
                }
                ClusterSampling::DisjointPartition => {
                    let mut shuffled = space.clone();
                    shuffled.shuffle(&mut rng);
                    for chunk in shuffled.chunks_exact(s) {
                        out.push(Cluster {
                            pano_ids: chunk.to_vec(),
                            origin_index: 0,
                        });
                    }
                }
            }
        }
    }
    out
}

/// Per-panorama result of rotation augmentation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationShift {
    /// Horizontal circular shift in columns, `0 <= shift < W`.
    pub shift: usize,
    /// Yaw after the shift (old yaw + 2π·shift/W, wrapped).
    pub yaw: Angle,
}

/// Random horizontal rotation augmentation for every panorama of a cluster.
pub fn rotate_augment(
    poses: &BTreeMap<String, Pose2>,
    width: usize,
    seed: u64,
) -> Result<BTreeMap<String, RotationShift>> {
    let grid = ColumnGrid::new(width)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shifts: BTreeMap<String, usize> = poses
        .keys()
        .map(|id| (id.clone(), rng.random_range(0..width)))
        .collect();
    Ok(apply_shifts(poses, &shifts, &grid))
}

/// Applies explicit column shifts. Panoramas without an entry are unshifted.
pub fn apply_shifts(
    poses: &BTreeMap<String, Pose2>,
    shifts: &BTreeMap<String, usize>,
    grid: &ColumnGrid,
) -> BTreeMap<String, RotationShift> {
    poses
        .iter()
        .map(|(id, pose)| {
            let shift = shifts.get(id).copied().unwrap_or(0) % grid.width();
            let yaw = grid.shifted_heading(pose.theta(), shift as i64);
            (id.clone(), RotationShift { shift, yaw })
        })
        .collect()
}

/// Randomly reorders the cluster and picks a uniformly random origin.
pub fn permute_origin(cluster: &Cluster, seed: u64) -> Result<Cluster> {
    if cluster.len() < 2 {
        return Err(Error::Validation(
            "cannot permute the origin of a cluster with fewer than 2 panoramas".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids = cluster.pano_ids.clone();
    ids.shuffle(&mut rng);
    let origin_index = rng.random_range(0..ids.len());
    Cluster::new(ids, origin_index)
}
