//! Column-wise geometric cues synthesized from room layouts.
//!
//! For an ordered panorama pair `(i, j)` and every image column `k` of `i`:
//!
//! - `phi[k]`: floor-wall boundary angle below the horizon,
//!   `atan2(camera height, horizontal distance to the wall)`.
//! - `covis[k]`: whether the floor-boundary point seen in column `k` is also
//!   visible from `j` (line of sight on the floor plane).
//! - `alpha[k]`: azimuth of that point in `j`'s camera frame, masked when
//!   not co-visible.
//!
//! Column `k` of a `W`-wide equirectangular panorama looks along the
//! camera-relative azimuth `ψ_k = -π + 2π(k + 0.5)/W` (CCW positive).
//!
//! Camera headings are handled in fixed point: a heading is stored as an
//! integer number of ticks, [`TICKS_PER_COLUMN`] per column. Column directions
//! are then integer sums, so rotating a panorama by whole columns permutes
//! its cue rows bit for bit.

use std::f64::consts::{PI, TAU};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::{wrap_angle, Angle, Vec2};
use crate::scene::{Camera, Layout, Scene};

pub const DEFAULT_WIDTH: usize = 512;
pub const TICKS_PER_COLUMN: i64 = 1 << 32;
/// Value stored for masked correspondences in the binary cue format.
pub const MASKED_SENTINEL: f64 = 4.0;
pub const BINARY_MAGIC: &[u8; 4] = b"PGCV";
pub const BINARY_VERSION: u32 = 1;

/// Grazing tolerance: segments passing within this distance of a wall
/// endpoint count as blocked.
const GRAZE_EPS: f64 = 1e-9;
/// Length of the segment end (near the target point) excluded from the
/// occlusion test, meters.
const END_EXCLUSION: f64 = 1e-7;

fn cross(a: Vec2, b: Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Equirectangular column model for a panorama `width` columns wide.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ColumnGrid {
    width: usize,
}

impl Default for ColumnGrid {
    fn default() -> Self {
        ColumnGrid {
            width: DEFAULT_WIDTH,
        }
    }
}

impl ColumnGrid {
    pub fn new(width: usize) -> Result<Self> {
        if width == 0 || width > (1 << 20) {
            return Err(Error::Validation(format!("invalid cue width {width}")));
        }
        Ok(ColumnGrid { width })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    fn total_ticks(&self) -> i64 {
        self.width as i64 * TICKS_PER_COLUMN
    }

    /// Heading quantized to ticks in `[0, W·TICKS_PER_COLUMN)`.
    pub fn heading_ticks(&self, yaw: f64) -> i64 {
        let total = self.total_ticks();
        ((yaw / TAU * total as f64).round() as i64).rem_euclid(total)
    }

    pub fn heading_from_ticks(&self, ticks: i64) -> Angle {
        let total = self.total_ticks();
        wrap_angle(TAU * (ticks.rem_euclid(total) as f64 / total as f64))
    }

    /// Heading after rotating the panorama by `shift` columns.
    pub fn shifted_heading(&self, yaw: f64, shift: i64) -> Angle {
        self.heading_from_ticks(self.heading_ticks(yaw) + shift * TICKS_PER_COLUMN)
    }

    fn angle_of_ticks(&self, ticks: i64) -> Angle {
        let total = self.total_ticks();
        wrap_angle(-PI + TAU * (ticks.rem_euclid(total) as f64 / total as f64))
    }

    /// Camera-relative azimuth of column `k`.
    pub fn column_azimuth(&self, k: usize) -> Angle {
        self.angle_of_ticks(k as i64 * TICKS_PER_COLUMN + TICKS_PER_COLUMN / 2)
    }

    /// World direction of column `k` for a camera with the given yaw.
    pub fn world_direction(&self, yaw: f64, k: usize) -> Angle {
        self.angle_of_ticks(
            k as i64 * TICKS_PER_COLUMN + TICKS_PER_COLUMN / 2 + self.heading_ticks(yaw),
        )
    }

    /// Column whose center azimuth is nearest to `azimuth`.
    pub fn nearest_column(&self, azimuth: f64) -> usize {
        let w = self.width as f64;
        let f = (wrap_angle(azimuth).radians() + PI) / TAU * w;
        (f.floor() as i64).rem_euclid(self.width as i64) as usize
    }

    pub fn column_width(&self) -> f64 {
        TAU / self.width as f64
    }
}

/// A column of a panorama and the azimuth it looks along.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnRay {
    pub column: usize,
    pub azimuth: Angle,
}

impl ColumnRay {
    pub fn new(column: usize, grid: &ColumnGrid) -> Self {
        ColumnRay {
            column,
            azimuth: grid.column_azimuth(column),
        }
    }
}

/// Ground-truth cues for the ordered pair `src → dst`.
#[derive(Debug, Clone, PartialEq)]
pub struct CueSet {
    pub src: String,
    pub dst: String,
    pub width: usize,
    pub phi: Vec<f64>,
    /// `None` where the column is not co-visible.
    pub alpha: Vec<Option<f64>>,
    pub covis: Vec<bool>,
}

impl CueSet {
    pub fn covis_row(&self) -> Vec<f64> {
        self.covis
            .iter()
            .map(|&c| if c { 1.0 } else { 0.0 })
            .collect()
    }

    /// Alpha row with masked entries replaced by [`MASKED_SENTINEL`].
    pub fn alpha_row(&self) -> Vec<f64> {
        self.alpha
            .iter()
            .map(|a| a.unwrap_or(MASKED_SENTINEL))
            .collect()
    }

    /// Correspondence at an arbitrary source azimuth, interpolated linearly
    /// between the two nearest column centers. `None` unless both are
    /// co-visible.
    pub fn sample_alpha(&self, azimuth: f64) -> Option<f64> {
        let w = self.width as i64;
        let f = (wrap_angle(azimuth).radians() + PI) / TAU * w as f64 - 0.5;
        let c0 = f.floor() as i64;
        let t = f - c0 as f64;
        let a = self.alpha[c0.rem_euclid(w) as usize]?;
        let b = self.alpha[(c0 + 1).rem_euclid(w) as usize]?;
        Some(wrap_angle(a + t * wrap_angle(b - a).radians()).radians())
    }

    /// Circularly shifts columns so that `out[k] = self[(k + shift) mod W]`.
    pub fn shift_columns(&self, shift: usize) -> CueSet {
        let w = self.width;
        let rot = |k: usize| (k + shift) % w;
        CueSet {
            src: self.src.clone(),
            dst: self.dst.clone(),
            width: w,
            phi: (0..w).map(|k| self.phi[rot(k)]).collect(),
            alpha: (0..w).map(|k| self.alpha[rot(k)]).collect(),
            covis: (0..w).map(|k| self.covis[rot(k)]).collect(),
        }
    }

    pub fn to_json_string(&self) -> String {
        let file = CueFile {
            src: self.src.clone(),
            dst: self.dst.clone(),
            width: self.width,
            phi: self.phi.clone(),
            alpha: self.alpha.clone(),
            covis: self.covis.iter().map(|&c| u8::from(c)).collect(),
        };
        let mut s = serde_json::to_string(&file).expect("cues serialize");
        s.push('\n');
        s
    }

    pub fn from_json_str(text: &str) -> Result<CueSet> {
        let f: CueFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if f.phi.len() != f.width || f.alpha.len() != f.width || f.covis.len() != f.width {
            return Err(Error::Validation("cue rows do not match width".into()));
        }
        let covis: Vec<bool> = f.covis.iter().map(|&c| c != 0).collect();
        if covis.iter().zip(&f.alpha).any(|(c, a)| *c != a.is_some()) {
            return Err(Error::Validation(
                "alpha must be null exactly where covis is 0".into(),
            ));
        }
        Ok(CueSet {
            src: f.src,
            dst: f.dst,
            width: f.width,
            phi: f.phi,
            alpha: f.alpha,
            covis,
        })
    }

    /// Flat little-endian binary: magic, version u32, W u32, then the phi,
    /// alpha (sentinel for masked) and covis rows as f64.
    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(BINARY_MAGIC)?;
        out.write_all(&BINARY_VERSION.to_le_bytes())?;
        out.write_all(&(self.width as u32).to_le_bytes())?;
        for row in [self.phi.clone(), self.alpha_row(), self.covis_row()] {
            for v in row {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Reads the binary form. Pair ids are not stored there and come back empty.
    pub fn read_binary<R: Read>(mut input: R) -> Result<CueSet> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != BINARY_MAGIC {
            return Err(Error::Parse("bad cue magic".into()));
        }
        let mut word = [0u8; 4];
        input.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != BINARY_VERSION {
            return Err(Error::Parse(format!("unsupported cue version {version}")));
        }
        input.read_exact(&mut word)?;
        let width = u32::from_le_bytes(word) as usize;
        let mut read_row = || -> Result<Vec<f64>> {
            let mut row = Vec::with_capacity(width);
            let mut buf = [0u8; 8];
            for _ in 0..width {
                input.read_exact(&mut buf)?;
                row.push(f64::from_le_bytes(buf));
            }
            Ok(row)
        };
        let phi = read_row()?;
        let alpha_raw = read_row()?;
        let covis_raw = read_row()?;
        let covis: Vec<bool> = covis_raw.iter().map(|&c| c != 0.0).collect();
        let alpha = alpha_raw
            .iter()
            .map(|&a| if a == MASKED_SENTINEL { None } else { Some(a) })
            .collect();
        Ok(CueSet {
            src: String::new(),
            dst: String::new(),
            width,
            phi,
            alpha,
            covis,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct CueFile {
    src: String,
    dst: String,
    width: usize,
    phi: Vec<f64>,
    alpha: Vec<Option<f64>>,
    covis: Vec<u8>,
}

/// Nearest intersection of a ray with the polygon boundary.
fn cast_ray(origin: Vec2, dir: Vec2, layout: &Layout) -> Option<(Vec2, f64)> {
    let mut best: Option<f64> = None;
    for (a, b) in layout.edges() {
        let e = b - a;
        let denom = cross(dir, e);
        if denom.abs() < 1e-300 {
            continue;
        }
        let ao = a - origin;
        let t = cross(ao, e) / denom;
        let u = cross(ao, dir) / denom;
        if t > 1e-12 && (-1e-12..=1.0 + 1e-12).contains(&u) && best.is_none_or(|bt| t < bt) {
            best = Some(t);
        }
    }
    best.map(|t| (origin + dir * t, t))
}

fn hit_along(camera: &Camera, layout: &Layout, world: Angle) -> Result<(Vec2, f64)> {
    let (s, c) = world.radians().sin_cos();
    cast_ray(camera.position, Vec2::new(c, s), layout).ok_or_else(|| {
        Error::Geometry(format!(
            "ray at {world} from {:?} misses the room boundary",
            camera.position
        ))
    })
}

/// Where the horizontal ray at camera-relative `azimuth` meets the walls.
pub fn boundary_hit(camera: &Camera, layout: &Layout, azimuth: Angle) -> Result<(Vec2, f64)> {
    hit_along(
        camera,
        layout,
        wrap_angle(camera.yaw.radians() + azimuth.radians()),
    )
}

fn column_hits(camera: &Camera, layout: &Layout, grid: &ColumnGrid) -> Result<Vec<(Vec2, f64)>> {
    (0..grid.width())
        .map(|k| {
            hit_along(
                camera,
                layout,
                grid.world_direction(camera.yaw.radians(), k),
            )
        })
        .collect()
}

/// Floor-wall boundary angle for every column of `camera`.
pub fn boundary_angle_row(camera: &Camera, layout: &Layout, grid: &ColumnGrid) -> Result<Vec<f64>> {
    Ok(column_hits(camera, layout, grid)?
        .into_iter()
        .map(|(_, d)| camera.height.atan2(d))
        .collect())
}

/// Whether the wall point `target` (lying on the boundary of `target_room`)
/// is visible from `viewer`, with all edges of `occluders` acting as walls.
pub fn point_visible(
    viewer: Vec2,
    target: Vec2,
    target_room: &Layout,
    occluders: &[&Layout],
) -> bool {
    let d = target - viewer;
    let len = d.norm();
    if len <= END_EXCLUSION {
        return true;
    }
    let s_max = 1.0 - END_EXCLUSION / len;
    for room in occluders {
        for (a, b) in room.edges() {
            if blocks(viewer, d, s_max, a, b) {
                return false;
            }
        }
    }
    // The viewer must face the wall from the room's interior side.
    let probe = target - d * (END_EXCLUSION / len);
    target_room.contains(probe)
}

fn blocks(p: Vec2, d: Vec2, s_max: f64, a: Vec2, b: Vec2) -> bool {
    let e = b - a;
    let elen = e.norm();
    let dlen = d.norm();
    let denom = cross(d, e);
    let ap = a - p;
    if denom.abs() <= 1e-12 * dlen * elen {
        // Parallel: only a collinear overlap blocks.
        if cross(ap, d).abs() / dlen > GRAZE_EPS {
            return false;
        }
        let d2 = d.norm_squared();
        let s0 = ap.dot(&d) / d2;
        let s1 = (b - p).dot(&d) / d2;
        let (lo, hi) = (s0.min(s1), s0.max(s1));
        return hi >= 0.0 && lo <= s_max;
    }
    let s = cross(ap, e) / denom;
    let u = cross(ap, d) / denom;
    let tol = GRAZE_EPS / elen;
    (0.0..=s_max).contains(&s) && u >= -tol && u <= 1.0 + tol
}

/// Boundary angle, correspondence and co-visibility for `src → dst`.
pub fn correspondence_and_covis(
    scene: &Scene,
    src: &str,
    dst: &str,
    grid: &ColumnGrid,
) -> Result<CueSet> {
    let cam_i = scene.camera(src)?;
    let cam_j = scene.camera(dst)?;
    let room_i = scene.room_of(src)?;
    let occluders = scene.occluding_rooms(&[src, dst])?;
    let heading_j = grid
        .heading_from_ticks(grid.heading_ticks(cam_j.yaw.radians()))
        .radians();

    let hits = column_hits(cam_i, room_i, grid)?;
    let w = grid.width();
    let mut phi = Vec::with_capacity(w);
    let mut alpha = Vec::with_capacity(w);
    let mut covis = Vec::with_capacity(w);
    for (q, dist) in hits {
        phi.push(cam_i.height.atan2(dist));
        if point_visible(cam_j.position, q, room_i, &occluders) {
            let v = q - cam_j.position;
            alpha.push(Some(wrap_angle(v.y.atan2(v.x) - heading_j).radians()));
            covis.push(true);
        } else {
            alpha.push(None);
            covis.push(false);
        }
    }
    Ok(CueSet {
        src: src.to_string(),
        dst: dst.to_string(),
        width: w,
        phi,
        alpha,
        covis,
    })
}

/// Mean co-visibility over the columns of a cue set.
pub fn edge_covis_score(cue: &CueSet) -> f64 {
    if cue.covis.is_empty() {
        return 0.0;
    }
    cue.covis.iter().filter(|&&c| c).count() as f64 / cue.covis.len() as f64
}
