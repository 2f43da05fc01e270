//! On-disk formats: tensor files, drive-log directories, track files,
//! checkpoints and deployment tables.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};

use roadlab_core::datalog::{
    parse_deployments, DeploymentRecord, DriveLog, InterventionCause, InterventionEvent, LogError, Modality,
    SensorFrame, SteeringSample, TrajectoryPoint, DEPLOYMENT_COLUMNS,
};
use roadlab_core::numerics::tnsr::{self, Element};
use roadlab_core::numerics::{Rng, Tensor};
use roadlab_core::pilotnet::{ConvSpec, ModelParams, NetworkConfig};
use roadlab_core::simulator::Track;

use crate::error::LabError;

pub type Result<T> = std::result::Result<T, LabError>;

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| LabError::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| LabError::io(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        create_dir(parent)?;
    }
    fs::write(path, bytes).map_err(|e| LabError::io(path, e))
}

pub fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))
}

pub fn save_tensor<T: Element>(path: &Path, t: &Tensor<T>) -> Result<()> {
    write_bytes(path, &tnsr::encode(t))
}

pub fn load_tensor_u8(path: &Path) -> Result<Tensor<u8>> {
    tnsr::decode_u8(&read_bytes(path)?).map_err(|e| LabError::format(path, e))
}

pub fn load_tensor_f32(path: &Path) -> Result<Tensor<f32>> {
    tnsr::decode_f32(&read_bytes(path)?).map_err(|e| LabError::format(path, e))
}

/// `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_key_values(text: &str, path: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| LabError::format(path, format!("line {}: expected key=value", n + 1)))?;
        if out.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
            return Err(LabError::format(path, format!("line {}: duplicate key `{}`", n + 1, k.trim())));
        }
    }
    Ok(out)
}

pub fn write_key_values<K: Display, V: Display>(path: &Path, pairs: impl IntoIterator<Item = (K, V)>) -> Result<()> {
    let text: String = pairs.into_iter().map(|(k, v)| format!("{k}={v}\n")).collect();
    write_bytes(path, text.as_bytes())
}

fn required<'a>(map: &'a BTreeMap<String, String>, key: &str, path: &Path) -> Result<&'a str> {
    map.get(key)
        .map(String::as_str)
        .ok_or_else(|| LabError::format(path, format!("missing key `{key}`")))
}

fn parse_value<T: std::str::FromStr>(s: &str, what: &str, path: &Path) -> Result<T>
where
    T::Err: Display,
{
    s.parse().map_err(|e| LabError::format(path, format!("{what}: `{s}`: {e}")))
}

pub fn write_csv<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let fail = |e: csv::Error| LabError::format(path, e);
        w.write_record(header).map_err(fail)?;
        for row in rows {
            w.write_record(row).map_err(fail)?;
        }
        w.flush().map_err(|e| LabError::io(path, e))?;
    }
    write_bytes(path, &buf)
}

/// Rows of a CSV file whose header must equal `header`.
pub fn read_csv(path: &Path, header: &[&str]) -> Result<Vec<csv::StringRecord>> {
    let text = read_bytes(path)?;
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_slice());
    let found = r.headers().map_err(|e| LabError::format(path, e))?.clone();
    if found.iter().map(str::trim).ne(header.iter().copied()) {
        return Err(LabError::format(path, format!("header must be `{}`", header.join(","))));
    }
    r.records()
        .enumerate()
        .map(|(i, rec)| rec.map_err(|e| LabError::format(path, format!("row {}: {e}", i + 1))))
        .collect()
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, row: usize, col: usize, name: &str, path: &Path) -> Result<T> {
    let s = rec.get(col).unwrap_or("").trim();
    s.parse()
        .map_err(|_| LabError::format(path, format!("row {}: column `{name}`: cannot parse `{s}`", row + 1)))
}

fn float(v: f64) -> String {
    format!("{v}")
}

const STEERING_HEADER: [&str; 2] = ["t", "angle_deg"];
const TRAJECTORY_HEADER: [&str; 3] = ["t", "x", "y"];
const INTERVENTION_HEADER: [&str; 3] = ["t", "odometer_m", "cause"];
const FRAMES_HEADER: [&str; 2] = ["index", "t"];

fn write_steering(path: &Path, samples: &[SteeringSample]) -> Result<()> {
    write_csv(path, &STEERING_HEADER, samples.iter().map(|s| [float(s.t), float(s.angle)]))
}

fn read_steering(path: &Path) -> Result<Vec<SteeringSample>> {
    read_csv(path, &STEERING_HEADER)?
        .iter()
        .enumerate()
        .map(|(i, r)| {
            Ok(SteeringSample {
                t: field(r, i, 0, "t", path)?,
                angle: field(r, i, 1, "angle_deg", path)?,
            })
        })
        .collect()
}

pub fn frame_path(dir: &Path, index: usize) -> PathBuf {
    dir.join("frames").join(format!("{index:06}.tnsr"))
}

/// Writes a log as a directory; frames are written only when present.
pub fn save_drivelog(dir: &Path, log: &DriveLog) -> Result<()> {
    create_dir(dir)?;
    write_steering(&dir.join("steering_cmd.csv"), &log.steering_cmd)?;
    write_steering(&dir.join("steering_eff.csv"), &log.steering_eff)?;
    write_csv(
        &dir.join("trajectory.csv"),
        &TRAJECTORY_HEADER,
        log.trajectory.iter().map(|p| [float(p.t), float(p.x), float(p.y)]),
    )?;
    write_csv(
        &dir.join("interventions.csv"),
        &INTERVENTION_HEADER,
        log.interventions
            .iter()
            .map(|e| [float(e.t), float(e.odometer), e.cause.to_string()]),
    )?;
    write_csv(
        &dir.join("frames.csv"),
        &FRAMES_HEADER,
        log.frames.iter().enumerate().map(|(i, f)| [i.to_string(), float(f.t)]),
    )?;
    for (i, f) in log.frames.iter().enumerate() {
        save_tensor(&frame_path(dir, i), &f.pixels)?;
    }
    write_key_values(
        &dir.join("meta.txt"),
        [
            ("dt_policy", float(log.dt_policy)),
            ("modality", log.modality.to_string()),
            ("distance_m", float(log.distance_m)),
            ("frames", log.frames.len().to_string()),
        ],
    )
}

/// An opened log directory. Series are loaded eagerly, frames on demand;
/// each frame read is an independent file access, so a `LogDir` can be
/// shared between threads.
#[derive(Debug, Clone, PartialEq)]
pub struct LogDir {
    pub root: PathBuf,
    pub modality: Modality,
    pub dt_policy: f64,
    pub distance_m: f64,
    pub frame_times: Vec<f64>,
    /// The log with an empty frame list.
    pub series: DriveLog,
}

fn locate(dir: &Path, e: LogError) -> LabError {
    let (file, detail) = match &e {
        LogError::NonMonotoneTime { series, row, .. } | LogError::InvalidValue { series, row, .. } => {
            (format!("{series}.csv"), format!("row {}: {e}", row + 1))
        }
        _ => ("meta.txt".into(), e.to_string()),
    };
    LabError::format(&dir.join(file), detail)
}

impl LogDir {
    pub fn open(dir: &Path) -> Result<Self> {
        let meta_path = dir.join("meta.txt");
        let meta = parse_key_values(&read_text(&meta_path)?, &meta_path)?;
        let dt_policy: f64 = parse_value(required(&meta, "dt_policy", &meta_path)?, "dt_policy", &meta_path)?;
        let modality: Modality = parse_value(required(&meta, "modality", &meta_path)?, "modality", &meta_path)?;
        let distance_m: f64 = match meta.get("distance_m") {
            Some(v) => parse_value(v, "distance_m", &meta_path)?,
            None => 0.0,
        };
        let mut series = DriveLog::empty(modality, dt_policy);
        series.distance_m = distance_m;
        series.steering_cmd = read_steering(&dir.join("steering_cmd.csv"))?;
        series.steering_eff = read_steering(&dir.join("steering_eff.csv"))?;
        let path = dir.join("trajectory.csv");
        series.trajectory = read_csv(&path, &TRAJECTORY_HEADER)?
            .iter()
            .enumerate()
            .map(|(i, r)| {
                Ok(TrajectoryPoint {
                    t: field(r, i, 0, "t", &path)?,
                    x: field(r, i, 1, "x", &path)?,
                    y: field(r, i, 2, "y", &path)?,
                })
            })
            .collect::<Result<_>>()?;
        let path = dir.join("interventions.csv");
        series.interventions = read_csv(&path, &INTERVENTION_HEADER)?
            .iter()
            .enumerate()
            .map(|(i, r)| {
                Ok(InterventionEvent {
                    t: field(r, i, 0, "t", &path)?,
                    odometer: field(r, i, 1, "odometer_m", &path)?,
                    cause: field::<InterventionCause>(r, i, 2, "cause", &path)?,
                })
            })
            .collect::<Result<_>>()?;
        let path = dir.join("frames.csv");
        let frame_times = read_csv(&path, &FRAMES_HEADER)?
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let index: usize = field(r, i, 0, "index", &path)?;
                if index != i {
                    return Err(LabError::format(&path, format!("row {}: index {index} out of sequence", i + 1)));
                }
                field(r, i, 1, "t", &path)
            })
            .collect::<Result<Vec<f64>>>()?;
        series.validate().map_err(|e| locate(dir, e))?;
        if let Some(i) = frame_times.windows(2).position(|w| !(w[1] >= w[0])) {
            return Err(LabError::format(&path, format!("row {}: frame time goes backwards", i + 2)));
        }
        Ok(Self {
            root: dir.to_path_buf(),
            modality,
            dt_policy,
            distance_m,
            frame_times,
            series,
        })
    }

    pub fn frame_count(&self) -> usize {
        self.frame_times.len()
    }

    pub fn frame(&self, index: usize) -> Result<SensorFrame> {
        let path = frame_path(&self.root, index);
        let t = *self
            .frame_times
            .get(index)
            .ok_or_else(|| LabError::format(&self.root.join("frames.csv"), format!("no frame {index}")))?;
        let pixels = load_tensor_u8(&path)?;
        SensorFrame::new(t, self.modality, pixels).map_err(|e| LabError::format(&path, e))
    }

    /// The whole log with every frame loaded.
    pub fn load(&self) -> Result<DriveLog> {
        let mut log = self.series.clone();
        log.frames = (0..self.frame_count()).map(|i| self.frame(i)).collect::<Result<_>>()?;
        Ok(log)
    }
}

pub fn load_drivelog(dir: &Path) -> Result<DriveLog> {
    LogDir::open(dir)?.load()
}

const TRACK_HEADER: [&str; 4] = ["s", "x", "y", "ref_speed"];

/// `track.csv` plus `meta.txt` in `dir`.
pub fn save_track(dir: &Path, track: &Track, seed: Option<u64>) -> Result<()> {
    write_csv(
        &dir.join("track.csv"),
        &TRACK_HEADER,
        track
            .points
            .iter()
            .map(|p| [float(p.s), float(p.x), float(p.y), float(p.ref_speed)]),
    )?;
    let mut meta = vec![
        ("spacing", float(track.spacing)),
        ("width", float(track.width)),
        ("length", float(track.length)),
    ];
    if let Some(seed) = seed {
        meta.push(("seed", seed.to_string()));
    }
    write_key_values(&dir.join("meta.txt"), meta)
}

pub fn load_track(dir: &Path) -> Result<Track> {
    let meta_path = dir.join("meta.txt");
    let meta = parse_key_values(&read_text(&meta_path)?, &meta_path)?;
    let get = |k: &str| -> Result<f64> { parse_value(required(&meta, k, &meta_path)?, k, &meta_path) };
    let (spacing, width, length) = (get("spacing")?, get("width")?, get("length")?);
    let path = dir.join("track.csv");
    let rows = read_csv(&path, &TRACK_HEADER)?;
    let mut xy = Vec::with_capacity(rows.len());
    let mut speed = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        xy.push((field(r, i, 1, "x", &path)?, field(r, i, 2, "y", &path)?));
        speed.push(field(r, i, 3, "ref_speed", &path)?);
    }
    Track::from_points(spacing, width, length, &xy, &speed).map_err(|e| LabError::format(&path, e))
}

const CHECKPOINT_FORMAT: &str = "roadlab-checkpoint-1";

fn dims_text(dims: &[usize]) -> String {
    dims.iter().map(usize::to_string).collect::<Vec<_>>().join("x")
}

/// Writes `manifest.txt` and one tensor file per parameter. `extra` lands
/// in the manifest header as `# key=value` lines.
pub fn save_checkpoint(dir: &Path, params: &ModelParams<f32>, extra: &[(String, String)]) -> Result<()> {
    create_dir(dir)?;
    let c = &params.config;
    let convs: Vec<String> = c.convs.iter().map(|s| format!("{}:{}:{}", s.filters, s.kernel, s.stride)).collect();
    let dense: Vec<String> = c.dense.iter().map(usize::to_string).collect();
    let mut text = format!(
        "# format={CHECKPOINT_FORMAT}\n# input={}\n# convs={}\n# dense={}\n# leaky_slope={}\n# bn_momentum={}\n# bn_eps={}\n",
        dims_text(&[c.input_channels, c.input_height, c.input_width]),
        convs.join(","),
        dense.join(","),
        c.leaky_slope,
        c.bn_momentum,
        c.bn_eps
    );
    for (k, v) in extra {
        text.push_str(&format!("# {k}={v}\n"));
    }
    for (name, t) in params.named_tensors() {
        let file = format!("{name}.tnsr");
        save_tensor(&dir.join(&file), t)?;
        text.push_str(&format!("{name} {} {file}\n", dims_text(t.dims())));
    }
    write_bytes(&dir.join("manifest.txt"), text.as_bytes())
}

pub struct Checkpoint {
    pub params: ModelParams<f32>,
    /// Every `# key=value` header entry.
    pub meta: BTreeMap<String, String>,
}

fn parse_dims(s: &str, path: &Path) -> Result<Vec<usize>> {
    s.split('x').map(|d| parse_value(d, "extent", path)).collect()
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let path = dir.join("manifest.txt");
    let text = read_text(&path)?;
    let mut meta = BTreeMap::new();
    let mut entries = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if let Some(h) = line.strip_prefix('#') {
            let (k, v) = h
                .trim()
                .split_once('=')
                .ok_or_else(|| LabError::format(&path, format!("line {}: expected `# key=value`", n + 1)))?;
            meta.insert(k.trim().to_string(), v.trim().to_string());
        } else if !line.is_empty() {
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(LabError::format(&path, format!("line {}: expected `name extents file`", n + 1)));
            }
            entries.push((parts[0].to_string(), parse_dims(parts[1], &path)?, parts[2].to_string()));
        }
    }
    if meta.get("format").map(String::as_str) != Some(CHECKPOINT_FORMAT) {
        return Err(LabError::format(&path, format!("not a {CHECKPOINT_FORMAT} manifest")));
    }
    let input = parse_dims(required(&meta, "input", &path)?, &path)?;
    if input.len() != 3 {
        return Err(LabError::format(&path, "input must be CxHxW"));
    }
    let convs = required(&meta, "convs", &path)?
        .split(',')
        .map(|s| {
            let v: Vec<usize> = s.split(':').map(|p| parse_value(p, "conv spec", &path)).collect::<Result<_>>()?;
            match v[..] {
                [f, k, st] => Ok(ConvSpec::new(f, k, st)),
                _ => Err(LabError::format(&path, format!("conv spec `{s}` must be filters:kernel:stride"))),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let dense = required(&meta, "dense", &path)?
        .split(',')
        .map(|s| parse_value(s, "dense width", &path))
        .collect::<Result<Vec<usize>>>()?;
    let config = NetworkConfig {
        input_channels: input[0],
        input_height: input[1],
        input_width: input[2],
        convs,
        dense,
        leaky_slope: parse_value(required(&meta, "leaky_slope", &path)?, "leaky_slope", &path)?,
        bn_momentum: parse_value(required(&meta, "bn_momentum", &path)?, "bn_momentum", &path)?,
        bn_eps: parse_value(required(&meta, "bn_eps", &path)?, "bn_eps", &path)?,
    };
    let mut params = ModelParams::<f32>::init(&config, &mut Rng::new(0)).map_err(|e| LabError::format(&path, e))?;
    let names: Vec<(String, Vec<usize>)> =
        params.named_tensors().into_iter().map(|(n, t)| (n, t.dims().to_vec())).collect();
    if names.len() != entries.len() {
        return Err(LabError::format(&path, format!("expected {} tensors, found {}", names.len(), entries.len())));
    }
    for ((slot, (name, dims)), (ename, edims, file)) in params.tensors_mut().into_iter().zip(&names).zip(&entries) {
        if name != ename || dims != edims {
            return Err(LabError::format(&path, format!("expected {name} {}, found {ename} {}", dims_text(dims), dims_text(edims))));
        }
        let t = load_tensor_f32(&dir.join(file))?;
        if t.dims() != dims.as_slice() {
            return Err(LabError::format(&dir.join(file), format!("extents {} differ from manifest", dims_text(t.dims()))));
        }
        *slot = t;
    }
    meta.remove("format");
    Ok(Checkpoint { params, meta })
}

pub fn write_deployments(path: &Path, records: &[DeploymentRecord]) -> Result<()> {
    write_csv(
        path,
        &DEPLOYMENT_COLUMNS,
        records.iter().map(|r| {
            [
                r.name.clone(),
                float(r.dpi),
                float(r.mae_trajectory),
                float(r.failure_rate),
                float(r.w_effective),
                float(r.w_on_policy),
                float(r.mae_steer),
                float(r.w_off_policy),
                float(r.combined),
            ]
        }),
    )
}

pub fn read_deployments(path: &Path) -> Result<Vec<DeploymentRecord>> {
    parse_deployments(&read_text(path)?).map_err(|e| LabError::format(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use roadlab_core::pilotnet::NetworkConfig;
    use roadlab_core::simulator::{gen_track, run_episode, ReferenceDriver, SimConfig};

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    fn minimal_log() -> DriveLog {
        let mut log = DriveLog::empty(Modality::Lidar, 0.1);
        for i in 0..2 {
            let t = i as f64 * 0.1;
            log.frames
                .push(SensorFrame::new(t, Modality::Lidar, Tensor::full(&[2, 3, 3], i as u8)).unwrap());
            log.steering_cmd.push(SteeringSample { t, angle: 1.5 * i as f64 });
            log.steering_eff.push(SteeringSample { t: t + 0.1, angle: i as f64 });
            log.trajectory.push(TrajectoryPoint { t, x: i as f64, y: 0.0 });
        }
        log.distance_m = 1.0;
        log
    }

    #[test]
    fn minimal_log_loads_with_all_counts_two() {
        let dir = tmp();
        save_drivelog(dir.path(), &minimal_log()).unwrap();
        let log = load_drivelog(dir.path()).unwrap();
        assert_eq!(
            (log.frames.len(), log.steering_cmd.len(), log.steering_eff.len(), log.trajectory.len()),
            (2, 2, 2, 2)
        );
        assert_eq!(log, minimal_log());
    }

    #[test]
    fn backwards_steering_names_the_row() {
        let dir = tmp();
        save_drivelog(dir.path(), &minimal_log()).unwrap();
        fs::write(dir.path().join("steering_cmd.csv"), "t,angle_deg\n0.0,1\n0.2,1\n0.1,1\n").unwrap();
        let err = LogDir::open(dir.path()).unwrap_err().to_string();
        assert!(err.contains("steering_cmd.csv") && err.contains("row 3"), "{err}");
    }

    #[test]
    fn unparseable_and_missing_files_are_located() {
        let dir = tmp();
        save_drivelog(dir.path(), &minimal_log()).unwrap();
        fs::write(dir.path().join("trajectory.csv"), "t,x,y\n0,0,0\n0.1,oops,0\n").unwrap();
        let err = LogDir::open(dir.path()).unwrap_err().to_string();
        assert!(err.contains("trajectory.csv") && err.contains("row 2") && err.contains("oops"), "{err}");
        fs::remove_file(dir.path().join("interventions.csv")).unwrap();
        assert!(LogDir::open(dir.path()).is_err());
    }

    #[test]
    fn simulated_log_round_trips() {
        let mut cfg = SimConfig {
            record_frames: true,
            ..SimConfig::default()
        };
        cfg.sensor.rows = 10;
        cfg.sensor.cols = 20;
        let track = gen_track(4, 120.0).unwrap();
        let mut log = run_episode(&mut ReferenceDriver::new(&cfg), &track, &cfg, 1).unwrap();
        log.frames.truncate(100);
        assert_eq!(log.frames.len(), 100);
        let dir = tmp();
        save_drivelog(dir.path(), &log).unwrap();
        let opened = LogDir::open(dir.path()).unwrap();
        assert_eq!(opened.frame(17).unwrap(), log.frames[17]);
        assert_eq!(opened.load().unwrap(), log);
    }

    #[test]
    fn track_round_trip_is_exact() {
        let track = gen_track(9, 150.0).unwrap();
        let dir = tmp();
        save_track(dir.path(), &track, Some(9)).unwrap();
        assert_eq!(load_track(dir.path()).unwrap(), track);
    }

    #[test]
    fn checkpoint_round_trip() {
        let params = ModelParams::<f32>::init(&NetworkConfig::shrunken(3), &mut Rng::new(3)).unwrap();
        let dir = tmp();
        save_checkpoint(dir.path(), &params, &[("channels".into(), "three".into())]).unwrap();
        let ck = load_checkpoint(dir.path()).unwrap();
        assert_eq!(ck.params, params);
        assert_eq!(ck.meta.get("channels").map(String::as_str), Some("three"));
        let missing = load_checkpoint(&dir.path().join("nope")).err().unwrap();
        assert!(missing.to_string().contains("nope"));
    }

    #[test]
    fn deployments_round_trip() {
        let rows = roadlab_core::datalog::load_table8_fixture();
        let dir = tmp();
        let path = dir.path().join("deployments.csv");
        write_deployments(&path, &rows).unwrap();
        assert_eq!(read_deployments(&path).unwrap(), rows);
    }
}
