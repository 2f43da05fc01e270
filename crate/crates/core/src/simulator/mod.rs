//! Closed-loop driving world: generated tracks, a kinematic bicycle, a
//! synthetic range sensor, a reference driver and the intervention protocol.

use alloc::string::String;

use thiserror::Error;

use crate::datalog::{
    InterventionCause, InterventionEvent, Modality, SensorFrame, SteeringSample, TrajectoryPoint, DriveLog,
    CAMERA_DT, LIDAR_DT, MAX_WHEEL_DEG,
};
use crate::numerics::Rng;

mod render;
mod track;
mod vehicle;

pub use render::{render_sensor, SensorConfig};
pub use track::{gen_track, gen_track_with, menger_curvature, wrap_angle, Projection, Track, TrackConfig, TrackPoint, RUNOUT_M};
pub use vehicle::{curvature_to_wheel, step, wheel_to_curvature, VehicleState};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("track: {0}")]
    Track(&'static str),
    #[error("simulation fault: non-finite steering command")]
    NonFinite,
    #[error("policy fault at t={t:.3}s: {message}")]
    PolicyFault { t: f64, message: String },
    #[error("vehicle lost: {lateral:.2} m from the centerline")]
    Lost { lateral: f64 },
    #[error("episode exceeded {limit:.0} s of simulated time")]
    Timeout { limit: f64 },
    #[error("invalid simulator config: {0}")]
    Config(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub wheelbase: f64,
    /// Steering-wheel degrees per road-wheel degree.
    pub steering_ratio: f64,
    /// Wheel slew limit, deg/s.
    pub actuator_rate_limit: f64,
    pub dt_sim: f64,
    pub dt_policy: f64,
    /// Driving speed as a fraction of the track's reference speed.
    pub speed_fraction: f64,
    pub intervention_lateral: f64,
    pub intervention_heading_deg: f64,
    pub modality: Modality,
    /// Keep rendered frames in the returned log.
    pub record_frames: bool,
    pub sensor: SensorConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            wheelbase: 2.79,
            steering_ratio: 14.7,
            actuator_rate_limit: 400.0,
            dt_sim: 0.01,
            dt_policy: LIDAR_DT,
            speed_fraction: 0.8,
            intervention_lateral: 1.5,
            intervention_heading_deg: 90.0,
            modality: Modality::Lidar,
            record_frames: false,
            sensor: SensorConfig::default(),
        }
    }
}

impl SimConfig {
    /// Camera timing: 30 Hz policy over three substeps.
    pub fn camera() -> Self {
        Self {
            dt_policy: CAMERA_DT,
            dt_sim: CAMERA_DT / 3.0,
            modality: Modality::Camera,
            ..Self::default()
        }
    }

    /// Simulation substeps per policy tick.
    pub fn substeps(&self) -> usize {
        libm::round(self.dt_policy / self.dt_sim) as usize
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.dt_sim > 0.0 && self.dt_policy >= self.dt_sim) {
            return Err(SimError::Config("need 0 < dt_sim ≤ dt_policy"));
        }
        let ratio = self.dt_policy / self.dt_sim;
        if (ratio - libm::round(ratio)).abs() > 1e-6 {
            return Err(SimError::Config("dt_policy must be an integer multiple of dt_sim"));
        }
        if !(self.speed_fraction > 0.0 && self.speed_fraction <= 1.0) {
            return Err(SimError::Config("speed_fraction must lie in (0, 1]"));
        }
        if !(self.wheelbase > 0.0 && self.steering_ratio > 0.0 && self.actuator_rate_limit > 0.0) {
            return Err(SimError::Config("vehicle constants must be positive"));
        }
        if !(self.intervention_lateral > 0.0 && self.intervention_heading_deg > 0.0) {
            return Err(SimError::Config("intervention thresholds must be positive"));
        }
        Ok(())
    }
}

/// What a policy sees at a decision tick.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    pub t: f64,
    /// Present when the policy asked for frames.
    pub frame: Option<&'a SensorFrame>,
    pub state: &'a VehicleState,
    pub track: &'a Track,
    /// Centerline index near the vehicle.
    pub hint: usize,
}

pub trait Policy {
    /// Whether `steer` needs a rendered frame.
    fn needs_frames(&self) -> bool;

    /// Steering-wheel command in degrees, left positive.
    fn steer(&mut self, obs: &Observation<'_>) -> Result<f64, String>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantPolicy(pub f64);

impl Policy for ConstantPolicy {
    fn needs_frames(&self) -> bool {
        false
    }

    fn steer(&mut self, _: &Observation<'_>) -> Result<f64, String> {
        Ok(self.0)
    }
}

/// Pure pursuit toward the centerline point one lookahead ahead.
pub fn reference_driver(state: &VehicleState, track: &Track, cfg: &SimConfig, hint: usize) -> Result<f64, SimError> {
    pursue(state, track, cfg, hint, |_| 0.0)
}

/// Pure pursuit toward a point displaced `offset(s)` meters to the left of
/// the centerline at the lookahead arc length `s`.
fn pursue(
    state: &VehicleState,
    track: &Track,
    cfg: &SimConfig,
    hint: usize,
    offset: impl Fn(f64) -> f64,
) -> Result<f64, SimError> {
    let proj = track.project(state.x, state.y, hint);
    if proj.lateral.abs() > 2.0 * track.width {
        return Err(SimError::Lost { lateral: proj.lateral });
    }
    let lookahead = (0.6 * state.speed).max(4.0);
    let s = proj.s + lookahead;
    let (cx, cy) = track.position_at(s);
    let heading = track.point_at(s).heading;
    let d = offset(s);
    let (tx, ty) = (cx - d * libm::sin(heading), cy + d * libm::cos(heading));
    let (dx, dy) = (tx - state.x, ty - state.y);
    let distance = libm::hypot(dx, dy);
    if distance < 1e-9 {
        return Ok(0.0);
    }
    let alpha = wrap_angle(libm::atan2(dy, dx) - state.heading);
    let delta = libm::atan(2.0 * cfg.wheelbase * libm::sin(alpha) / distance);
    Ok((delta.to_degrees() * cfg.steering_ratio).clamp(-MAX_WHEEL_DEG, MAX_WHEEL_DEG))
}

/// The demonstrator. With a nonzero weave it follows a sinusoidal path
/// around the centerline, which spreads the recorded poses across the lane.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceDriver {
    pub cfg: SimConfig,
    pub weave_amplitude: f64,
    pub weave_wavelength: f64,
}

impl ReferenceDriver {
    pub fn new(cfg: &SimConfig) -> Self {
        Self {
            cfg: cfg.clone(),
            weave_amplitude: 0.0,
            weave_wavelength: 80.0,
        }
    }

    pub fn weaving(cfg: &SimConfig, amplitude: f64, wavelength: f64) -> Self {
        Self {
            cfg: cfg.clone(),
            weave_amplitude: amplitude,
            weave_wavelength: wavelength,
        }
    }
}

impl Policy for ReferenceDriver {
    fn needs_frames(&self) -> bool {
        false
    }

    fn steer(&mut self, obs: &Observation<'_>) -> Result<f64, String> {
        let (a, l) = (self.weave_amplitude, self.weave_wavelength);
        let offset = |s: f64| a * libm::sin(2.0 * core::f64::consts::PI * s / l);
        pursue(obs.state, obs.track, &self.cfg, obs.hint, offset).map_err(|e| alloc::format!("{e}"))
    }
}

/// Vehicle at the start of the track, aligned with the centerline.
pub fn start_state(track: &Track, cfg: &SimConfig) -> VehicleState {
    let p = &track.points[0];
    VehicleState {
        x: p.x,
        y: p.y,
        heading: p.heading,
        steering_wheel: curvature_to_wheel(p.curvature, cfg),
        speed: cfg.speed_fraction * p.ref_speed,
        odometer: 0.0,
    }
}

/// Drives `track` from start to finish under `policy`.
///
/// Leaving the lateral or heading envelope records an intervention and puts
/// the vehicle back on the nearest centerline point, aligned with it. The
/// wheel is not teleported, so the actuator rate bound holds across resets.
/// The sensor noise stream is seeded from `seed`.
pub fn run_episode<P: Policy + ?Sized>(
    policy: &mut P,
    track: &Track,
    cfg: &SimConfig,
    seed: u64,
) -> Result<DriveLog, SimError> {
    cfg.validate()?;
    let substeps = cfg.substeps();
    let min_speed = track.points.iter().map(|p| p.ref_speed).fold(f64::INFINITY, f64::min);
    let time_limit = 2.0 * track.length / (cfg.speed_fraction * min_speed) + 10.0;
    let heading_limit = cfg.intervention_heading_deg.to_radians();
    let render = policy.needs_frames() || cfg.record_frames;
    let mut rng = Rng::derive(seed, 3);
    let mut log = DriveLog::empty(cfg.modality, cfg.dt_policy);
    let mut state = start_state(track, cfg);
    let mut hint = 0usize;
    log.trajectory.push(TrajectoryPoint {
        t: 0.0,
        x: state.x,
        y: state.y,
    });
    let mut tick = 0usize;
    loop {
        let t = tick as f64 * cfg.dt_policy;
        if t > time_limit {
            return Err(SimError::Timeout { limit: time_limit });
        }
        let frame = render.then(|| render_sensor(&state, track, &mut rng, &cfg.sensor, cfg.modality, t, hint));
        let obs = Observation {
            t,
            frame: frame.as_ref().filter(|_| policy.needs_frames()),
            state: &state,
            track,
            hint,
        };
        let cmd = policy.steer(&obs).map_err(|message| SimError::PolicyFault { t, message })?;
        if !cmd.is_finite() {
            return Err(SimError::PolicyFault {
                t,
                message: alloc::format!("non-finite steering command {cmd}"),
            });
        }
        let cmd = cmd.clamp(-MAX_WHEEL_DEG, MAX_WHEEL_DEG);
        log.steering_cmd.push(SteeringSample { t, angle: cmd });
        if cfg.record_frames {
            log.frames.extend(frame);
        }
        let mut finished = false;
        for j in 1..=substeps {
            let ts = (tick * substeps + j) as f64 * cfg.dt_sim;
            let proj = track.project(state.x, state.y, hint);
            state.speed = cfg.speed_fraction * proj.ref_speed;
            state = step(&state, cmd, cfg)?;
            let proj = track.project(state.x, state.y, proj.index);
            hint = proj.index;
            let lateral_exit = proj.lateral.abs() > cfg.intervention_lateral;
            let heading_exit = wrap_angle(state.heading - proj.heading).abs() > heading_limit;
            if lateral_exit || heading_exit {
                log.interventions.push(InterventionEvent {
                    t: ts,
                    odometer: state.odometer,
                    cause: if lateral_exit {
                        InterventionCause::LateralExit
                    } else {
                        InterventionCause::HeadingExit
                    },
                });
                let (x, y) = track.position_at(proj.s);
                state.x = x;
                state.y = y;
                state.heading = proj.heading;
            }
            log.trajectory.push(TrajectoryPoint {
                t: ts,
                x: state.x,
                y: state.y,
            });
            if proj.s >= track.length {
                finished = true;
            }
        }
        log.steering_eff.push(SteeringSample {
            t: (tick + 1) as f64 * cfg.dt_policy,
            angle: state.steering_wheel,
        });
        tick += 1;
        if finished {
            break;
        }
    }
    log.distance_m = state.odometer;
    Ok(log)
}
