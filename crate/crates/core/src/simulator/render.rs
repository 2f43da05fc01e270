//! Synthetic range-image sensor. Each column is an azimuth ray, each row an
//! elevation; returns come from the ground (road or verge) or from the
//! berm walls that line the road on both sides.

use alloc::vec;
use alloc::vec::Vec;

use super::{Track, VehicleState};
use crate::datalog::{Modality, SensorFrame, CHANNEL_AMBIENT, CHANNEL_DEPTH, CHANNEL_INTENSITY};
use crate::numerics::{Rng, Tensor};
use crate::preprocess::{encode_depth_with, DEPTH_MAX_M};

#[derive(Debug, Clone, PartialEq)]
pub struct SensorConfig {
    pub rows: usize,
    pub cols: usize,
    /// Horizontal field of view across all columns, degrees.
    pub hfov_deg: f64,
    /// Elevation step between rows, degrees.
    pub row_step_deg: f64,
    /// Row whose elevation is exactly 0°.
    pub horizon_row: usize,
    pub mount_height: f64,
    pub wall_height: f64,
    /// Gap between road edge and wall, meters.
    pub verge: f64,
    pub max_range: f64,
    pub depth_max: f64,
    pub depth_noise: f64,
    pub speckle: f64,
    pub ambient_level: f64,
    pub ambient_noise: f64,
    pub road_reflectance: f64,
    pub verge_reflectance: f64,
    pub wall_reflectance: f64,
}

impl Default for SensorConfig {
    /// 70×266 frame: the 66×258 network crop plus a two-row and four-column
    /// margin on each side, at the same angular resolution (90° over 258
    /// columns).
    fn default() -> Self {
        Self {
            rows: 70,
            cols: 266,
            hfov_deg: 90.0 * 266.0 / 258.0,
            row_step_deg: 0.35,
            horizon_row: 2,
            mount_height: 1.9,
            wall_height: 3.0,
            verge: 1.5,
            max_range: 120.0,
            depth_max: DEPTH_MAX_M,
            depth_noise: 0.02,
            speckle: 0.05,
            ambient_level: 0.35,
            ambient_noise: 0.25,
            road_reflectance: 0.6,
            verge_reflectance: 0.25,
            wall_reflectance: 0.45,
        }
    }
}

impl SensorConfig {
    /// Azimuth of a column relative to the heading, radians, left positive.
    pub fn azimuth(&self, col: usize) -> f64 {
        let half = self.hfov_deg / 2.0;
        (half - (col as f64 + 0.5) * self.hfov_deg / self.cols as f64).to_radians()
    }

    pub fn elevation(&self, row: usize) -> f64 {
        ((self.horizon_row as f64 - row as f64) * self.row_step_deg).to_radians()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Surface {
    Road,
    Verge,
    Wall,
    Nothing,
}

type Segment = ((f64, f64), (f64, f64));

/// Distance along a unit ray to a segment, if hit.
fn ray_hit(origin: (f64, f64), dir: (f64, f64), seg: &Segment) -> Option<f64> {
    let (a, b) = *seg;
    let e = (b.0 - a.0, b.1 - a.1);
    let denom = dir.0 * e.1 - dir.1 * e.0;
    if denom.abs() < 1e-12 {
        return None;
    }
    let w = (a.0 - origin.0, a.1 - origin.1);
    let t = (w.0 * e.1 - w.1 * e.0) / denom;
    let u = (w.0 * dir.1 - w.1 * dir.0) / denom;
    (t > 1e-9 && (0.0..=1.0).contains(&u)).then_some(t)
}

/// Polylines offset from the centerline around the vehicle.
struct Scene {
    edges: Vec<Segment>,
    walls: Vec<Segment>,
    on_road: bool,
}

fn build_scene(state: &VehicleState, track: &Track, cfg: &SensorConfig, hint: usize) -> Scene {
    let proj = track.project(state.x, state.y, hint);
    let back = (20.0 / track.spacing) as usize;
    let ahead = ((cfg.max_range.min(cfg.depth_max + 10.0) + 10.0) / track.spacing) as usize;
    let lo = proj.index.saturating_sub(back);
    let hi = (proj.index + ahead).min(track.points.len() - 1);
    let offset = |p: &super::TrackPoint, d: f64| (p.x - d * libm::sin(p.heading), p.y + d * libm::cos(p.heading));
    let half = track.width / 2.0;
    let wall = half + cfg.verge;
    let mut edges = Vec::with_capacity(2 * (hi - lo));
    let mut walls = Vec::with_capacity(2 * (hi - lo));
    for i in lo..hi {
        let (p, q) = (&track.points[i], &track.points[i + 1]);
        for side in [1.0, -1.0] {
            edges.push((offset(p, side * half), offset(q, side * half)));
            walls.push((offset(p, side * wall), offset(q, side * wall)));
        }
    }
    Scene {
        edges,
        walls,
        on_road: proj.lateral.abs() <= half,
    }
}

/// Renders one frame at `t`. `hint` is a centerline index near the vehicle.
pub fn render_sensor(
    state: &VehicleState,
    track: &Track,
    rng: &mut Rng,
    cfg: &SensorConfig,
    modality: Modality,
    t: f64,
    hint: usize,
) -> SensorFrame {
    let scene = build_scene(state, track, cfg, hint);
    let (rows, cols) = (cfg.rows, cfg.cols);
    let mut pixels = vec![0u8; rows * cols * 3];
    let origin = (state.x, state.y);
    let elevations: Vec<f64> = (0..rows).map(|r| cfg.elevation(r)).collect();
    let mut crossings = Vec::new();
    for c in 0..cols {
        let az = state.heading + cfg.azimuth(c);
        let dir = (libm::cos(az), libm::sin(az));
        let wall = scene
            .walls
            .iter()
            .filter_map(|s| ray_hit(origin, dir, s))
            .fold(f64::INFINITY, f64::min);
        crossings.clear();
        crossings.extend(scene.edges.iter().filter_map(|s| ray_hit(origin, dir, s)));
        crossings.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        for (r, &el) in elevations.iter().enumerate() {
            let ground = if el < 0.0 {
                cfg.mount_height / libm::tan(-el)
            } else {
                f64::INFINITY
            };
            let wall_z = cfg.mount_height + wall * libm::tan(el);
            let (surface, horizontal) = if wall.is_finite() && wall < ground && (0.0..=cfg.wall_height).contains(&wall_z) {
                (Surface::Wall, wall)
            } else if ground <= cfg.max_range && ground < wall {
                let flips = crossings.iter().take_while(|&&x| x < ground).count();
                let road = scene.on_road ^ (flips % 2 == 1);
                (if road { Surface::Road } else { Surface::Verge }, ground)
            } else {
                (Surface::Nothing, f64::INFINITY)
            };
            let range = horizontal / libm::cos(el);
            let px = &mut pixels[(r * cols + c) * 3..][..3];
            match modality {
                Modality::Lidar => shade_lidar(px, surface, range, rng, cfg),
                Modality::Camera => shade_camera(px, surface, rng, cfg),
            }
        }
    }
    let tensor = Tensor::from_vec(&[rows, cols, 3], pixels).expect("frame extents");
    SensorFrame::new(t, modality, tensor).expect("three channels")
}

fn to_u8(v: f64) -> u8 {
    libm::round(v.clamp(0.0, 1.0) * 255.0) as u8
}

fn shade_lidar(px: &mut [u8], surface: Surface, range: f64, rng: &mut Rng, cfg: &SensorConfig) {
    let reflectance = match surface {
        Surface::Road => cfg.road_reflectance,
        Surface::Verge => cfg.verge_reflectance,
        Surface::Wall => cfg.wall_reflectance,
        Surface::Nothing => 0.0,
    };
    if surface == Surface::Nothing {
        px[CHANNEL_INTENSITY] = 0;
        px[CHANNEL_DEPTH] = 0;
    } else {
        let falloff = 1.0 - 0.3 * (range / cfg.depth_max).min(1.0);
        px[CHANNEL_INTENSITY] = to_u8(reflectance * falloff + cfg.speckle * rng.normal());
        let noisy = (range + cfg.depth_noise * rng.normal()).max(0.0);
        px[CHANNEL_DEPTH] = encode_depth_with(noisy, cfg.depth_max).expect("non-negative range");
    }
    px[CHANNEL_AMBIENT] = to_u8(cfg.ambient_level + cfg.ambient_noise * rng.normal());
}

fn shade_camera(px: &mut [u8], surface: Surface, rng: &mut Rng, cfg: &SensorConfig) {
    let rgb = match surface {
        Surface::Road => [0.5, 0.47, 0.42],
        Surface::Verge => [0.25, 0.45, 0.2],
        Surface::Wall => [0.12, 0.28, 0.12],
        Surface::Nothing => [0.6, 0.72, 0.9],
    };
    for (ch, &v) in rgb.iter().enumerate() {
        px[ch] = to_u8(v + cfg.speckle * rng.normal());
    }
}
