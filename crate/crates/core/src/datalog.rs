//! In-memory data model for driving logs and deployment records.
//!
//! Conventions: steering angles are steering-wheel degrees with left
//! positive; positions are meters in a local planar frame; LiDAR frames store
//! channels in the order (intensity, depth, ambient).

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::numerics::Tensor;

pub const MAX_WHEEL_DEG: f64 = 720.0;
pub const MAX_TRAJECTORY_GAP_M: f64 = 5.0;
pub const DPI_CAP_M: f64 = 10_000.0;
pub const LIDAR_DT: f64 = 0.1;
pub const CAMERA_DT: f64 = 0.033;

pub const CHANNEL_INTENSITY: usize = 0;
pub const CHANNEL_DEPTH: usize = 1;
pub const CHANNEL_AMBIENT: usize = 2;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LogError {
    #[error("{series} row {row}: time {t} precedes previous time {previous}")]
    NonMonotoneTime {
        series: &'static str,
        row: usize,
        t: f64,
        previous: f64,
    },
    #[error("{series} row {row}: {message}")]
    InvalidValue {
        series: &'static str,
        row: usize,
        message: String,
    },
    #[error("frame must be H×W×C with C in {{1, 3}}, got dims {0:?}")]
    FrameShape(Vec<usize>),
    #[error("dt_policy must be positive and finite, got {0}")]
    BadDt(f64),
    #[error("unknown {kind} `{value}`")]
    UnknownName { kind: &'static str, value: String },
    #[error("record `{name}`: {message}")]
    Record { name: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modality {
    Lidar,
    Camera,
}

impl Modality {
    /// Decision interval of the recording pipeline for this sensor.
    pub fn default_dt(self) -> f64 {
        match self {
            Modality::Lidar => LIDAR_DT,
            Modality::Camera => CAMERA_DT,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Lidar => "lidar",
            Modality::Camera => "camera",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = LogError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lidar" => Ok(Modality::Lidar),
            "camera" => Ok(Modality::Camera),
            _ => Err(LogError::UnknownName {
                kind: "modality",
                value: s.into(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteeringSample {
    pub t: f64,
    pub angle: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorFrame {
    pub t: f64,
    pub modality: Modality,
    /// H×W×C, channels last.
    pub pixels: Tensor<u8>,
}

impl SensorFrame {
    pub fn new(t: f64, modality: Modality, pixels: Tensor<u8>) -> Result<Self, LogError> {
        match pixels.dims() {
            [_, _, 1] | [_, _, 3] => Ok(Self {
                t,
                modality,
                pixels,
            }),
            dims => Err(LogError::FrameShape(dims.to_vec())),
        }
    }

    pub fn height(&self) -> usize {
        self.pixels.dims()[0]
    }

    pub fn width(&self) -> usize {
        self.pixels.dims()[1]
    }

    pub fn channels(&self) -> usize {
        self.pixels.dims()[2]
    }

    pub fn pixel(&self, row: usize, col: usize, channel: usize) -> u8 {
        let (w, c) = (self.width(), self.channels());
        self.pixels.data()[(row * w + col) * c + channel]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterventionCause {
    LateralExit,
    HeadingExit,
    External,
}

impl InterventionCause {
    pub fn as_str(self) -> &'static str {
        match self {
            InterventionCause::LateralExit => "lateral_exit",
            InterventionCause::HeadingExit => "heading_exit",
            InterventionCause::External => "external",
        }
    }
}

impl fmt::Display for InterventionCause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InterventionCause {
    type Err = LogError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lateral_exit" => Ok(Self::LateralExit),
            "heading_exit" => Ok(Self::HeadingExit),
            "external" => Ok(Self::External),
            _ => Err(LogError::UnknownName {
                kind: "intervention cause",
                value: s.into(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterventionEvent {
    pub t: f64,
    /// Meters driven since the start of the episode.
    pub odometer: f64,
    pub cause: InterventionCause,
}

/// One deployment's synchronized record.
///
/// `steering_cmd` holds what the driver (model or reference) asked for;
/// `steering_eff` holds the wheel angle the actuator actually reached.
#[derive(Debug, Clone, PartialEq)]
pub struct DriveLog {
    pub modality: Modality,
    pub dt_policy: f64,
    /// Total distance driven; teleports after interventions do not count.
    pub distance_m: f64,
    pub frames: Vec<SensorFrame>,
    pub steering_cmd: Vec<SteeringSample>,
    pub steering_eff: Vec<SteeringSample>,
    pub trajectory: Vec<TrajectoryPoint>,
    pub interventions: Vec<InterventionEvent>,
}

fn check_monotone(
    series: &'static str,
    times: impl Iterator<Item = f64>,
) -> Result<(), LogError> {
    let mut previous = f64::NEG_INFINITY;
    for (row, t) in times.enumerate() {
        if !t.is_finite() {
            return Err(LogError::InvalidValue {
                series,
                row,
                message: alloc::format!("non-finite time {t}"),
            });
        }
        if t < previous {
            return Err(LogError::NonMonotoneTime {
                series,
                row,
                t,
                previous,
            });
        }
        previous = t;
    }
    Ok(())
}

pub fn validate_steering(series: &'static str, samples: &[SteeringSample]) -> Result<(), LogError> {
    check_monotone(series, samples.iter().map(|s| s.t))?;
    for (row, s) in samples.iter().enumerate() {
        if !s.angle.is_finite() || s.angle.abs() > MAX_WHEEL_DEG {
            return Err(LogError::InvalidValue {
                series,
                row,
                message: alloc::format!("steering angle {} outside ±{MAX_WHEEL_DEG}°", s.angle),
            });
        }
    }
    Ok(())
}

pub fn validate_trajectory(points: &[TrajectoryPoint]) -> Result<(), LogError> {
    check_monotone("trajectory", points.iter().map(|p| p.t))?;
    for (row, pair) in points.windows(2).enumerate() {
        let gap = libm::hypot(pair[1].x - pair[0].x, pair[1].y - pair[0].y);
        if !(gap <= MAX_TRAJECTORY_GAP_M) {
            return Err(LogError::InvalidValue {
                series: "trajectory",
                row: row + 1,
                message: alloc::format!("gap of {gap} m to previous point exceeds {MAX_TRAJECTORY_GAP_M} m"),
            });
        }
    }
    Ok(())
}

impl DriveLog {
    pub fn empty(modality: Modality, dt_policy: f64) -> Self {
        Self {
            modality,
            dt_policy,
            distance_m: 0.0,
            frames: Vec::new(),
            steering_cmd: Vec::new(),
            steering_eff: Vec::new(),
            trajectory: Vec::new(),
            interventions: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), LogError> {
        if !(self.dt_policy > 0.0 && self.dt_policy.is_finite()) {
            return Err(LogError::BadDt(self.dt_policy));
        }
        check_monotone("frames", self.frames.iter().map(|f| f.t))?;
        validate_steering("steering_cmd", &self.steering_cmd)?;
        validate_steering("steering_eff", &self.steering_eff)?;
        validate_trajectory(&self.trajectory)?;
        check_monotone("interventions", self.interventions.iter().map(|e| e.t))?;
        Ok(())
    }

    /// Ground-truth steering for every frame: the first `steering_eff` sample
    /// stamped strictly after the frame, i.e. the wheel angle the driver
    /// produced in response to what the frame showed. Frames past the last
    /// sample take the last sample. `None` when there are no samples.
    pub fn frame_labels(&self) -> Option<Vec<f64>> {
        let samples = &self.steering_eff;
        let last = samples.last()?;
        let mut cursor = 0;
        Some(
            self.frames
                .iter()
                .map(|frame| {
                    while cursor < samples.len() && samples[cursor].t <= frame.t {
                        cursor += 1;
                    }
                    samples.get(cursor).unwrap_or(last).angle
                })
                .collect(),
        )
    }
}

/// One row of the deployment table: on-policy metrics of a deployment and
/// the matched off-policy metrics of the same model.
#[derive(Debug, Clone, PartialEq)]
pub struct DeploymentRecord {
    pub name: String,
    pub dpi: f64,
    pub mae_trajectory: f64,
    /// Fraction in [0, 1].
    pub failure_rate: f64,
    pub w_effective: f64,
    pub w_on_policy: f64,
    pub mae_steer: f64,
    pub w_off_policy: f64,
    pub combined: f64,
}

impl DeploymentRecord {
    pub fn validate(&self) -> Result<(), LogError> {
        let bad = |message: &str| LogError::Record {
            name: self.name.clone(),
            message: message.into(),
        };
        let values = [
            self.dpi,
            self.mae_trajectory,
            self.failure_rate,
            self.w_effective,
            self.w_on_policy,
            self.mae_steer,
            self.w_off_policy,
            self.combined,
        ];
        if values.iter().any(|v| !v.is_finite()) {
            return Err(bad("non-finite metric"));
        }
        if !(0.0..=DPI_CAP_M).contains(&self.dpi) {
            return Err(bad("dpi outside [0, 10000] m"));
        }
        if !(0.0..=1.0).contains(&self.failure_rate) {
            return Err(bad("failure rate outside [0, 1]"));
        }
        if values[1..7].iter().any(|&v| v < 0.0) {
            return Err(bad("negative distance or rate metric"));
        }
        Ok(())
    }
}

/// Header of deployment tables, in column order.
pub const DEPLOYMENT_COLUMNS: [&str; 9] = [
    "name",
    "dpi_m",
    "mae_traj_m",
    "failure_rate",
    "w_eff",
    "w_on",
    "mae_steer_deg",
    "w_off",
    "combined",
];

/// The 17 published deployments; failure rates are stored as fractions.
pub const TABLE8_CSV: &str = include_str!("../data/table8.csv");

/// Parses a deployment table. Fields are plain comma-separated values
/// without quoting; every record is validated.
pub fn parse_deployments(text: &str) -> Result<Vec<DeploymentRecord>, LogError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let header = lines.next().map(|(_, l)| l.trim()).unwrap_or("");
    if header.split(',').map(str::trim).ne(DEPLOYMENT_COLUMNS.iter().copied()) {
        return Err(LogError::InvalidValue {
            series: "deployments",
            row: 0,
            message: alloc::format!("header must be `{}`", DEPLOYMENT_COLUMNS.join(",")),
        });
    }
    let mut records = Vec::new();
    for (row, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != DEPLOYMENT_COLUMNS.len() {
            return Err(LogError::InvalidValue {
                series: "deployments",
                row,
                message: alloc::format!("expected {} fields, found {}", DEPLOYMENT_COLUMNS.len(), fields.len()),
            });
        }
        let mut values = [0.0; 8];
        for (k, v) in values.iter_mut().enumerate() {
            *v = fields[k + 1].parse().map_err(|_| LogError::InvalidValue {
                series: "deployments",
                row,
                message: alloc::format!("column {}: `{}` is not a number", DEPLOYMENT_COLUMNS[k + 1], fields[k + 1]),
            })?;
        }
        let [dpi, mae_trajectory, failure_rate, w_effective, w_on_policy, mae_steer, w_off_policy, combined] = values;
        let record = DeploymentRecord {
            name: fields[0].into(),
            dpi,
            mae_trajectory,
            failure_rate,
            w_effective,
            w_on_policy,
            mae_steer,
            w_off_policy,
            combined,
        };
        record.validate()?;
        records.push(record);
    }
    Ok(records)
}

pub fn load_table8_fixture() -> Vec<DeploymentRecord> {
    parse_deployments(TABLE8_CSV).expect("embedded fixture is well formed")
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn steer(t: f64, angle: f64) -> SteeringSample {
        SteeringSample { t, angle }
    }

    fn frame(t: f64) -> SensorFrame {
        SensorFrame::new(t, Modality::Lidar, Tensor::full(&[2, 2, 3], 0)).unwrap()
    }

    #[test]
    fn frame_shape_must_be_hwc_with_one_or_three_channels() {
        assert!(SensorFrame::new(0.0, Modality::Lidar, Tensor::full(&[2, 2, 2], 0)).is_err());
        assert!(SensorFrame::new(0.0, Modality::Lidar, Tensor::full(&[2, 2], 0)).is_err());
        assert!(SensorFrame::new(0.0, Modality::Camera, Tensor::full(&[2, 2, 1], 0)).is_ok());
    }

    #[test]
    fn backwards_time_names_the_row() {
        let s = [steer(0.0, 1.0), steer(0.1, 2.0), steer(0.05, 3.0)];
        assert_eq!(
            validate_steering("steering_cmd", &s),
            Err(LogError::NonMonotoneTime {
                series: "steering_cmd",
                row: 2,
                t: 0.05,
                previous: 0.1
            })
        );
    }

    #[test]
    fn steering_beyond_lock_is_rejected() {
        assert!(validate_steering("x", &[steer(0.0, 721.0)]).is_err());
        assert!(validate_steering("x", &[steer(0.0, -720.0)]).is_ok());
    }

    #[test]
    fn trajectory_gap_limit() {
        let p = |t, x| TrajectoryPoint { t, x, y: 0.0 };
        assert!(validate_trajectory(&[p(0.0, 0.0), p(1.0, 5.0)]).is_ok());
        assert!(matches!(
            validate_trajectory(&[p(0.0, 0.0), p(1.0, 5.1)]),
            Err(LogError::InvalidValue { row: 1, .. })
        ));
    }

    #[test]
    fn labels_take_the_next_effective_sample() {
        let mut log = DriveLog::empty(Modality::Lidar, 0.1);
        log.frames = vec![frame(0.0), frame(0.1), frame(0.2)];
        log.steering_eff = vec![steer(0.1, 5.0), steer(0.2, 6.0), steer(0.3, 7.0)];
        assert_eq!(log.frame_labels().unwrap(), vec![5.0, 6.0, 7.0]);
        log.steering_eff.truncate(1);
        assert_eq!(log.frame_labels().unwrap(), vec![5.0, 5.0, 5.0]);
        log.steering_eff.clear();
        assert_eq!(log.frame_labels(), None);
    }

    #[test]
    fn record_invariants() {
        let mut r = DeploymentRecord {
            name: "x".into(),
            dpi: 10_000.0,
            mae_trajectory: 0.2,
            failure_rate: 0.01,
            w_effective: 30.0,
            w_on_policy: 20.0,
            mae_steer: 5.0,
            w_off_policy: 40.0,
            combined: -1.0,
        };
        assert!(r.validate().is_ok());
        r.dpi = 10_000.5;
        assert!(r.validate().is_err());
        r.dpi = 100.0;
        r.failure_rate = 1.2;
        assert!(r.validate().is_err());
    }

    #[test]
    fn names_round_trip() {
        for c in [
            InterventionCause::LateralExit,
            InterventionCause::HeadingExit,
            InterventionCause::External,
        ] {
            assert_eq!(c.as_str().parse::<InterventionCause>().unwrap(), c);
        }
        assert_eq!("camera".parse::<Modality>().unwrap(), Modality::Camera);
        assert!("radar".parse::<Modality>().is_err());
    }

    #[test]
    fn fixture_has_seventeen_valid_rows() {
        let rows = load_table8_fixture();
        assert_eq!(rows.len(), 17);
        let by_name = |n: &str| rows.iter().find(|r| r.name == n).unwrap().clone();
        let v1 = by_name("LiDAR v1 (Nov)");
        assert_eq!((v1.dpi, v1.mae_steer, v1.w_off_policy), (4221.26, 5.93, 52.40));
        assert_eq!(by_name("LiDAR overfit (Nov)").dpi, 10_000.0);
        assert_eq!(by_name("Camera v1 BGR (Nov)").combined, 3.703541);
        assert_eq!(by_name("Camera v1 BGR (Nov)").failure_rate, 0.0282);
    }

    #[test]
    fn deployment_parser_rejects_bad_tables() {
        assert!(parse_deployments("name,dpi_m\n").is_err());
        let header = DEPLOYMENT_COLUMNS.join(",");
        assert!(parse_deployments(&alloc::format!("{header}\nx,1,2\n")).is_err());
        assert!(parse_deployments(&alloc::format!("{header}\nx,1,0.2,0.1,1,1,1,1,oops\n")).is_err());
        assert!(parse_deployments(&alloc::format!("{header}\nx,20000,0.2,0.1,1,1,1,1,0\n")).is_err());
        assert_eq!(parse_deployments(&alloc::format!("{header}\n")).unwrap(), vec![]);
    }
}
