use alloc::vec::Vec;
use core::f64::consts::PI;

use super::SimError;
use crate::numerics::Rng;

/// Extra centerline generated past the driving length so sensors near the
/// finish still see road ahead.
pub const RUNOUT_M: f64 = 60.0;

#[derive(Debug, Clone, PartialEq)]
pub struct TrackConfig {
    pub spacing: f64,
    pub width: f64,
    pub kappa_max: f64,
    /// Largest curvature change per meter, 1/m².
    pub kappa_rate_max: f64,
    /// Scales the random curvature; 0 gives a straight road.
    pub curviness: f64,
    pub wavelength_min: f64,
    pub wavelength_max: f64,
    pub components: usize,
    /// Straight lead-in before curvature ramps up, meters.
    pub lead_in: f64,
    pub speed_max: f64,
    pub speed_min: f64,
    pub lateral_accel: f64,
    /// Half-width of the window over which speed anticipates curves, meters.
    pub speed_window: f64,
}

impl Default for TrackConfig {
    fn default() -> Self {
        Self {
            spacing: 0.5,
            width: 5.0,
            kappa_max: 0.1,
            kappa_rate_max: 0.006,
            curviness: 1.0,
            wavelength_min: 40.0,
            wavelength_max: 250.0,
            components: 6,
            lead_in: 20.0,
            speed_max: 12.0,
            speed_min: 3.0,
            lateral_accel: 2.5,
            speed_window: 20.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackPoint {
    pub s: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub curvature: f64,
    pub ref_speed: f64,
}

/// Closest point of the centerline to a position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub index: usize,
    pub s: f64,
    /// Signed offset, positive to the left of the driving direction.
    pub lateral: f64,
    pub heading: f64,
    pub curvature: f64,
    pub ref_speed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub spacing: f64,
    pub width: f64,
    /// Drivable length; the centerline continues past it.
    pub length: f64,
    pub points: Vec<TrackPoint>,
}

pub fn wrap_angle(a: f64) -> f64 {
    let mut a = libm::fmod(a + PI, 2.0 * PI);
    if a < 0.0 {
        a += 2.0 * PI;
    }
    a - PI
}

impl Track {
    /// Builds a track from sampled centerline positions; headings and
    /// curvatures are derived from the positions so that generated and
    /// loaded tracks behave identically.
    pub fn from_points(
        spacing: f64,
        width: f64,
        length: f64,
        xy: &[(f64, f64)],
        ref_speed: &[f64],
    ) -> Result<Self, SimError> {
        let n = xy.len();
        if n < 3 || ref_speed.len() != n {
            return Err(SimError::Track("need at least three points with speeds"));
        }
        if !(spacing > 0.0 && width > 0.0 && length > 0.0) {
            return Err(SimError::Track("spacing, width and length must be positive"));
        }
        if (n - 1) as f64 * spacing + 1e-9 < length {
            return Err(SimError::Track("centerline shorter than the track length"));
        }
        let seg_heading: Vec<f64> = xy
            .windows(2)
            .map(|w| libm::atan2(w[1].1 - w[0].1, w[1].0 - w[0].0))
            .collect();
        let mut points = Vec::with_capacity(n);
        for i in 0..n {
            let heading = match i {
                0 => seg_heading[0],
                i if i == n - 1 => seg_heading[n - 2],
                i => seg_heading[i - 1] + wrap_angle(seg_heading[i] - seg_heading[i - 1]) / 2.0,
            };
            let curvature = if i == 0 || i == n - 1 {
                0.0
            } else {
                wrap_angle(seg_heading[i] - seg_heading[i - 1]) / spacing
            };
            points.push(TrackPoint {
                s: i as f64 * spacing,
                x: xy[i].0,
                y: xy[i].1,
                heading: wrap_angle(heading),
                curvature,
                ref_speed: ref_speed[i],
            });
        }
        points[0].curvature = points[1].curvature;
        points[n - 1].curvature = points[n - 2].curvature;
        Ok(Self {
            spacing,
            width,
            length,
            points,
        })
    }

    pub fn point_at(&self, s: f64) -> &TrackPoint {
        let i = libm::round(s / self.spacing).clamp(0.0, (self.points.len() - 1) as f64) as usize;
        &self.points[i]
    }

    /// Position on the centerline at arc length `s`, interpolated.
    pub fn position_at(&self, s: f64) -> (f64, f64) {
        let last = self.points.len() - 1;
        let f = (s / self.spacing).clamp(0.0, last as f64);
        let i = (f as usize).min(last - 1);
        let t = f - i as f64;
        let (a, b) = (&self.points[i], &self.points[i + 1]);
        (a.x + t * (b.x - a.x), a.y + t * (b.y - a.y))
    }

    fn nearest_in(&self, x: f64, y: f64, lo: usize, hi: usize) -> (usize, f64) {
        let mut best = (lo, f64::INFINITY);
        for (i, p) in self.points[lo..=hi].iter().enumerate() {
            let d = (p.x - x) * (p.x - x) + (p.y - y) * (p.y - y);
            if d < best.1 {
                best = (lo + i, d);
            }
        }
        best
    }

    /// Projects onto the centerline, searching near `hint` first.
    pub fn project(&self, x: f64, y: f64, hint: usize) -> Projection {
        let last = self.points.len() - 1;
        const WINDOW: usize = 40;
        let lo = hint.min(last).saturating_sub(WINDOW);
        let hi = (hint + WINDOW).min(last);
        let (mut index, _) = self.nearest_in(x, y, lo, hi);
        if (index == lo && lo > 0) || (index == hi && hi < last) {
            index = self.nearest_in(x, y, 0, last).0;
        }
        // refine on the two segments around the nearest point
        let mut best: Option<(f64, f64, usize, f64)> = None;
        for a in [index.saturating_sub(1), index.min(last - 1)] {
            let (p, q) = (&self.points[a], &self.points[a + 1]);
            let (dx, dy) = (q.x - p.x, q.y - p.y);
            let len2 = dx * dx + dy * dy;
            let t = (((x - p.x) * dx + (y - p.y) * dy) / len2).clamp(0.0, 1.0);
            let (cx, cy) = (p.x + t * dx, p.y + t * dy);
            let d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
            if best.is_none_or(|b| d2 < b.0) {
                best = Some((d2, t, a, libm::atan2(dy, dx)));
            }
        }
        let (_, t, a, seg_heading) = best.expect("at least one segment");
        let (p, q) = (&self.points[a], &self.points[a + 1]);
        let (ux, uy) = (libm::cos(seg_heading), libm::sin(seg_heading));
        let lateral = ux * (y - p.y) - uy * (x - p.x);
        let near = if t < 0.5 { p } else { q };
        Projection {
            index: if t < 0.5 { a } else { a + 1 },
            s: p.s + t * self.spacing,
            lateral,
            heading: seg_heading,
            curvature: near.curvature,
            ref_speed: near.ref_speed,
        }
    }

    /// Largest curvature from the circle through each run of three points.
    pub fn max_abs_curvature(&self) -> f64 {
        self.points
            .windows(3)
            .map(|w| menger_curvature((w[0].x, w[0].y), (w[1].x, w[1].y), (w[2].x, w[2].y)).abs())
            .fold(0.0, f64::max)
    }
}

pub fn menger_curvature(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    let cross = (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
    let ab = libm::hypot(b.0 - a.0, b.1 - a.1);
    let bc = libm::hypot(c.0 - b.0, c.1 - b.1);
    let ca = libm::hypot(a.0 - c.0, a.1 - c.1);
    2.0 * cross / (ab * bc * ca)
}

/// Random winding road of the given drivable length.
pub fn gen_track(seed: u64, length: f64) -> Result<Track, SimError> {
    gen_track_with(&TrackConfig::default(), seed, length)
}

pub fn gen_track_with(cfg: &TrackConfig, seed: u64, length: f64) -> Result<Track, SimError> {
    if !(length >= 100.0) || !length.is_finite() {
        return Err(SimError::Track("track length must be at least 100 m"));
    }
    if !(cfg.spacing > 0.0 && cfg.kappa_max > 0.0 && cfg.curviness >= 0.0 && cfg.wavelength_min > 0.0) {
        return Err(SimError::Track("invalid track config"));
    }
    let mut rng = Rng::new(seed);
    let n = libm::ceil((length + RUNOUT_M) / cfg.spacing) as usize + 1;
    let s: Vec<f64> = (0..n).map(|i| i as f64 * cfg.spacing).collect();

    // band-limited curvature: a few sinusoids with random wavelength and phase
    let mut kappa = alloc::vec![0.0; n];
    let mut dkappa = alloc::vec![0.0; n];
    for _ in 0..cfg.components {
        let wavelength = rng.uniform_range(cfg.wavelength_min, cfg.wavelength_max);
        let k = 2.0 * PI / wavelength;
        let phase = rng.uniform_range(0.0, 2.0 * PI);
        let amp = rng.normal();
        for i in 0..n {
            kappa[i] += amp * libm::sin(k * s[i] + phase);
            dkappa[i] += amp * k * libm::cos(k * s[i] + phase);
        }
    }
    // smooth ramp over the lead-in so the start is straight
    for i in 0..n {
        let u = ((s[i] - cfg.lead_in) / cfg.lead_in.max(1e-9)).clamp(0.0, 1.0);
        let ramp = u * u * (3.0 - 2.0 * u);
        let dramp = if u > 0.0 && u < 1.0 { 6.0 * u * (1.0 - u) / cfg.lead_in } else { 0.0 };
        dkappa[i] = dkappa[i] * ramp + kappa[i] * dramp;
        kappa[i] *= ramp;
    }
    let peak = kappa.iter().fold(0.0f64, |m, k| m.max(k.abs()));
    let peak_rate = dkappa.iter().fold(0.0f64, |m, k| m.max(k.abs()));
    let target = 0.95 * cfg.kappa_max * rng.uniform_range(0.5, 1.0) * cfg.curviness.min(1.0);
    let scale = if peak > 0.0 {
        (target / peak).min(cfg.kappa_rate_max * cfg.curviness.min(1.0) / peak_rate.max(1e-12))
    } else {
        0.0
    };
    for k in &mut kappa {
        *k *= scale;
    }

    // integrate positions at exact spacing with the midpoint heading
    let mut xy = Vec::with_capacity(n);
    let (mut x, mut y, mut h) = (0.0, 0.0, 0.0);
    xy.push((x, y));
    for i in 0..n - 1 {
        let mid = h + kappa[i] * cfg.spacing / 2.0;
        x += cfg.spacing * libm::cos(mid);
        y += cfg.spacing * libm::sin(mid);
        h += kappa[i] * cfg.spacing;
        xy.push((x, y));
    }

    let raw: Vec<f64> = kappa
        .iter()
        .map(|k| {
            if k.abs() < 1e-9 {
                cfg.speed_max
            } else {
                libm::sqrt(cfg.lateral_accel / k.abs()).min(cfg.speed_max)
            }
        })
        .collect();
    let w = libm::round(cfg.speed_window / cfg.spacing) as usize;
    let speed: Vec<f64> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(w);
            let hi = (i + w).min(n - 1);
            raw[lo..=hi].iter().fold(f64::INFINITY, |m, &v| m.min(v)).max(cfg.speed_min)
        })
        .collect();
    Track::from_points(cfg.spacing, cfg.width, length, &xy, &speed)
}
