//! Correlation study: how well off-policy metrics predict closed-loop
//! distance per intervention.
//!
//! [`reproduce_table3`] recomputes the published correlations from the
//! embedded deployment table. [`run_study`] builds a fresh table in the
//! simulator: it trains models on reference-driver demonstrations, deploys
//! them under graded input corruption and scores each deployment both
//! closed-loop and on held-out demonstration logs.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::datalog::{load_table8_fixture, DeploymentRecord, DriveLog, TrajectoryPoint, DPI_CAP_M};
use crate::metrics::{
    combined_score, dpi, failure_rate, mae_trajectory, pearson, permutation_test_corr_diff, trajectory_offsets,
    whiteness, CorrDiffTest, MetricError, FAILURE_THRESHOLD_M,
};
use crate::numerics::{mix_seed, Rng, Tensor};
use crate::pilotnet::{predict, ModelParams, NetError, NetworkConfig};
use crate::preprocess::{add_input_noise, prepare_input, prepare_input_u8, ChannelMode, Degradation, PreprocConfig, PreprocError};
use crate::simulator::{gen_track, run_episode, Observation, Policy, ReferenceDriver, SensorConfig, SimConfig, SimError, Track};
use crate::trainer::{train, Dataset, TrainConfig, TrainError, TrainOutcome};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StudyError {
    #[error("study config: {0}")]
    Config(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Preproc(#[from] PreprocError),
    #[error(transparent)]
    Net(#[from] NetError),
}

/// Columns correlated against DpI, in table order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    MaeTrajectory,
    FailureRate,
    WOnPolicy,
    WEffective,
    WOffPolicy,
    MaeSteer,
    Combined,
}

impl Metric {
    pub const ALL: [Metric; 7] = [
        Metric::MaeTrajectory,
        Metric::FailureRate,
        Metric::WOnPolicy,
        Metric::WEffective,
        Metric::WOffPolicy,
        Metric::MaeSteer,
        Metric::Combined,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::MaeTrajectory => "mae_trajectory",
            Metric::FailureRate => "failure_rate",
            Metric::WOnPolicy => "w_on_policy",
            Metric::WEffective => "w_effective",
            Metric::WOffPolicy => "w_off_policy",
            Metric::MaeSteer => "mae_steer",
            Metric::Combined => "combined",
        }
    }

    pub fn of(self, r: &DeploymentRecord) -> f64 {
        match self {
            Metric::MaeTrajectory => r.mae_trajectory,
            Metric::FailureRate => r.failure_rate,
            Metric::WOnPolicy => r.w_on_policy,
            Metric::WEffective => r.w_effective,
            Metric::WOffPolicy => r.w_off_policy,
            Metric::MaeSteer => r.mae_steer,
            Metric::Combined => r.combined,
        }
    }
}

/// Pearson r of every metric column against DpI.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationTable {
    pub entries: [(Metric, f64); 7],
}

impl CorrelationTable {
    pub fn from_records(records: &[DeploymentRecord]) -> Result<Self, MetricError> {
        let dpi: Vec<f64> = records.iter().map(|r| r.dpi).collect();
        let mut entries = Metric::ALL.map(|m| (m, 0.0));
        for (metric, r) in entries.iter_mut() {
            let column: Vec<f64> = records.iter().map(|rec| metric.of(rec)).collect();
            *r = pearson(&dpi, &column)?;
        }
        Ok(Self { entries })
    }

    pub fn get(&self, metric: Metric) -> f64 {
        self.entries.iter().find(|(m, _)| *m == metric).map(|e| e.1).expect("every metric has an entry")
    }
}

/// Correlations of the embedded deployment table. The combined column is
/// taken as published.
pub fn reproduce_table3() -> CorrelationTable {
    CorrelationTable::from_records(&load_table8_fixture()).expect("fixture columns vary")
}

/// Sensor geometry, crop and network sized to each other.
#[derive(Debug, Clone, PartialEq)]
pub struct Rig {
    pub sensor: SensorConfig,
    pub preproc: PreprocConfig,
    pub network: NetworkConfig,
}

impl Rig {
    /// 70×266 LiDAR frames, 66×258 crop, full network.
    pub fn full(mode: ChannelMode) -> Result<Self, StudyError> {
        let sensor = SensorConfig::default();
        let preproc = PreprocConfig::centered((sensor.rows, sensor.cols), mode)?;
        Ok(Self {
            sensor,
            preproc,
            network: NetworkConfig::pilotnet(mode.channels()),
        })
    }

    /// 22×74 frames with coarse rows, 18×66 crop, reduced network.
    pub fn compact(mode: ChannelMode) -> Result<Self, StudyError> {
        let network = NetworkConfig::compact(mode.channels());
        let (h, w) = (network.input_height, network.input_width);
        let sensor = SensorConfig {
            rows: h + 4,
            cols: w + 8,
            hfov_deg: 90.0 * (w + 8) as f64 / w as f64,
            row_step_deg: 1.2,
            ..SensorConfig::default()
        };
        let preproc = PreprocConfig {
            out_height: h,
            out_width: w,
            crop_origin: (2, 4),
            source_size: (sensor.rows, sensor.cols),
            channel_mode: mode,
            ..PreprocConfig::centered((70, 266), mode)?
        };
        Ok(Self {
            sensor,
            preproc,
            network,
        })
    }

    pub fn check(&self) -> Result<(), StudyError> {
        let p = &self.preproc;
        let n = &self.network;
        if (p.channels(), p.out_height, p.out_width) != (n.input_channels, n.input_height, n.input_width) {
            return Err(StudyError::Config(format!(
                "crop {}×{}×{} does not match network input {}×{}×{}",
                p.channels(),
                p.out_height,
                p.out_width,
                n.input_channels,
                n.input_height,
                n.input_width
            )));
        }
        if p.source_size != (self.sensor.rows, self.sensor.cols) {
            return Err(StudyError::Config("crop source size differs from the sensor frame".into()));
        }
        Ok(())
    }
}

/// Frame → network input, with optional deployment-time corruption.
#[derive(Debug, Clone, PartialEq)]
pub struct InputPipeline {
    pub preproc: PreprocConfig,
    /// Standard deviation of Gaussian noise added to the `[0, 1]` input.
    pub noise: f64,
    pub noise_seed: u64,
}

impl InputPipeline {
    pub fn clean(preproc: PreprocConfig) -> Self {
        Self {
            preproc,
            noise: 0.0,
            noise_seed: 0,
        }
    }
}

fn check_compatible(params: &ModelParams<f32>, preproc: &PreprocConfig) -> Result<(), StudyError> {
    let n = &params.config;
    if (preproc.channels(), preproc.out_height, preproc.out_width) != (n.input_channels, n.input_height, n.input_width) {
        return Err(StudyError::Config(format!(
            "{} input {}×{} does not fit a model expecting {}×{}×{}",
            preproc.channel_mode, preproc.out_height, preproc.out_width, n.input_channels, n.input_height, n.input_width
        )));
    }
    Ok(())
}

/// Drives with a trained network.
pub struct NetworkPolicy {
    pub params: ModelParams<f32>,
    pub pipeline: InputPipeline,
    rng: Rng,
}

impl NetworkPolicy {
    pub fn new(params: ModelParams<f32>, pipeline: InputPipeline) -> Result<Self, StudyError> {
        check_compatible(&params, &pipeline.preproc)?;
        let rng = Rng::new(pipeline.noise_seed);
        Ok(Self { params, pipeline, rng })
    }
}

impl Policy for NetworkPolicy {
    fn needs_frames(&self) -> bool {
        true
    }

    fn steer(&mut self, obs: &Observation<'_>) -> Result<f64, String> {
        let frame = obs.frame.ok_or_else(|| String::from("no frame"))?;
        let mut x = prepare_input(frame, &self.pipeline.preproc).map_err(|e| format!("{e}"))?;
        add_input_noise(&mut x, self.pipeline.noise, &mut self.rng);
        let mut dims = vec![1];
        dims.extend_from_slice(x.dims());
        let x = x.reshape(&dims).map_err(|e| format!("{e}"))?;
        let y = predict(&self.params, &x).map_err(|e| format!("{e}"))?;
        Ok(y.data()[0] as f64)
    }
}

/// Frames of `log` prepared for training, labelled with the next effective
/// steering sample.
pub fn dataset_from_log(log: &DriveLog, preproc: &PreprocConfig) -> Result<Dataset, StudyError> {
    let labels = log
        .frame_labels()
        .ok_or_else(|| StudyError::Config("log has no effective steering samples".into()))?;
    let mut data = Dataset::new([preproc.channels(), preproc.out_height, preproc.out_width]);
    for (frame, &label) in log.frames.iter().zip(&labels) {
        let x = prepare_input_u8(frame, preproc)?;
        data.push(x.data(), label as f32)?;
    }
    Ok(data)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OffPolicyEval {
    pub mae_steer: f64,
    pub w_off_policy: f64,
    pub predictions: Vec<f64>,
}

/// Runs the model over every frame of a demonstration log and compares it
/// with the demonstrator's effective steering.
pub fn off_policy_eval(
    params: &ModelParams<f32>,
    log: &DriveLog,
    pipeline: &InputPipeline,
) -> Result<OffPolicyEval, StudyError> {
    const CHUNK: usize = 64;
    check_compatible(params, &pipeline.preproc)?;
    if pipeline.preproc.channel_mode.modality() != log.modality {
        return Err(StudyError::Config(format!(
            "{} model cannot score a {} log",
            pipeline.preproc.channel_mode, log.modality
        )));
    }
    let labels = log
        .frame_labels()
        .ok_or_else(|| StudyError::Config("log has no effective steering samples".into()))?;
    let mut rng = Rng::new(pipeline.noise_seed);
    let mut predictions = Vec::with_capacity(log.frames.len());
    for frames in log.frames.chunks(CHUNK) {
        let mut data = Vec::new();
        for frame in frames {
            let mut x = prepare_input(frame, &pipeline.preproc)?;
            add_input_noise(&mut x, pipeline.noise, &mut rng);
            data.extend_from_slice(x.data());
        }
        let x = Tensor::from_vec(&params.config.input_dims(frames.len()), data).expect("prepared extents");
        predictions.extend(predict(params, &x)?.data().iter().map(|&v| v as f64));
    }
    if predictions.is_empty() {
        return Err(StudyError::Config("log has no frames".into()));
    }
    let mae_steer = predictions.iter().zip(&labels).map(|(p, h)| (p - h).abs()).sum::<f64>() / predictions.len() as f64;
    Ok(OffPolicyEval {
        mae_steer,
        w_off_policy: whiteness(&predictions, log.dt_policy)?,
        predictions,
    })
}

/// One deployment of the study.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyCondition {
    pub id: String,
    /// Index of the trained model to deploy.
    pub policy: usize,
    pub degradation: Degradation,
    /// Input noise standard deviation on the `[0, 1]` scale.
    pub noise: f64,
    pub seed: u64,
    /// Seeds of the evaluation tracks.
    pub tracks: Vec<u64>,
}

impl StudyCondition {
    pub fn describe(&self) -> String {
        let degradation = match self.degradation {
            Degradation::None => String::from("none"),
            Degradation::ChannelPermute(p) => format!("permute:{},{},{}", p[0], p[1], p[2]),
            Degradation::CropShift { dx, dy } => format!("shift:{dx},{dy}"),
        };
        format!("model {} | {degradation} | noise {}", self.policy, self.noise)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub rig: Rig,
    pub sim: SimConfig,
    pub train: TrainConfig,
    /// Number of models, each trained from its own seed on the shared data.
    pub models: usize,
    pub train_tracks: usize,
    pub val_tracks: usize,
    pub track_length: f64,
    /// Demonstration weave used while collecting training data, meters.
    pub weave: f64,
    pub permutations: usize,
    pub seed: u64,
}

impl StudyConfig {
    pub fn compact(seed: u64) -> Result<Self, StudyError> {
        Ok(Self {
            rig: Rig::compact(ChannelMode::Three)?,
            sim: SimConfig::default(),
            train: TrainConfig {
                max_epochs: 30,
                patience: 5,
                seed,
                ..TrainConfig::default()
            },
            models: 1,
            train_tracks: 4,
            val_tracks: 1,
            track_length: 400.0,
            weave: 0.8,
            permutations: 10_000,
            seed,
        })
    }
}

/// Stream tags for seeds derived from the master seed.
const STREAM_TRAIN_TRACK: u64 = 0x100;
const STREAM_VAL_TRACK: u64 = 0x200;
const STREAM_EVAL_TRACK: u64 = 0x300;
const STREAM_RENDER: u64 = 0x400;
const STREAM_HELD_OUT: u64 = 0x500;
const STREAM_MODEL: u64 = 0x600;
const STREAM_PERMUTATION: u64 = 0x700;

pub fn eval_track_seeds(master: u64, count: usize) -> Vec<u64> {
    (0..count as u64).map(|i| mix_seed(master, STREAM_EVAL_TRACK + i)).collect()
}

/// Graded input-noise conditions on every model, all on the same tracks.
pub fn graded_conditions(master: u64, models: usize, noise_levels: &[f64], tracks: usize) -> Vec<StudyCondition> {
    let tracks = eval_track_seeds(master, tracks);
    let mut out = Vec::new();
    for policy in 0..models {
        for (k, &noise) in noise_levels.iter().enumerate() {
            out.push(StudyCondition {
                id: format!("m{policy}-noise{k}"),
                policy,
                degradation: Degradation::None,
                noise,
                seed: mix_seed(master, (policy * 1000 + k) as u64),
                tracks: tracks.clone(),
            });
        }
    }
    out
}

/// Demonstration drive used for training data (weaving) or as a held-out
/// reference (centered), always at the demonstrator's full speed.
pub fn demonstrate(track: &Track, cfg: &StudyConfig, weave: f64, render_seed: u64) -> Result<DriveLog, StudyError> {
    let sim = SimConfig {
        speed_fraction: 1.0,
        record_frames: true,
        sensor: cfg.rig.sensor.clone(),
        ..cfg.sim.clone()
    };
    let mut driver = ReferenceDriver::weaving(&sim, weave, 70.0);
    Ok(run_episode(&mut driver, track, &sim, render_seed)?)
}

/// Seeds of the training and validation demonstration tracks.
pub fn demonstration_track_seeds(cfg: &StudyConfig) -> (Vec<u64>, Vec<u64>) {
    let seeds = |stream: u64, count: usize| (0..count as u64).map(|i| mix_seed(cfg.seed, stream + i)).collect();
    (seeds(STREAM_TRAIN_TRACK, cfg.train_tracks), seeds(STREAM_VAL_TRACK, cfg.val_tracks))
}

/// Prepared frames of one weaving demonstration on the track of `seed`.
pub fn demonstration_data(cfg: &StudyConfig, seed: u64) -> Result<Dataset, StudyError> {
    let track = gen_track(seed, cfg.track_length)?;
    let log = demonstrate(&track, cfg, cfg.weave, mix_seed(seed, STREAM_RENDER))?;
    dataset_from_log(&log, &cfg.rig.preproc)
}

/// Concatenates per-track datasets in order.
pub fn merge_datasets(cfg: &StudyConfig, parts: Vec<Dataset>) -> Result<Dataset, StudyError> {
    let p = &cfg.rig.preproc;
    let mut data = Dataset::new([p.channels(), p.out_height, p.out_width]);
    for part in &parts {
        data.extend(part)?;
    }
    Ok(data)
}

/// Training and validation sets from weaving demonstrations.
pub fn collect_training_data(cfg: &StudyConfig) -> Result<(Dataset, Dataset), StudyError> {
    cfg.rig.check()?;
    let (train_seeds, val_seeds) = demonstration_track_seeds(cfg);
    let split = |seeds: Vec<u64>| -> Result<Dataset, StudyError> {
        let parts = seeds.iter().map(|&s| demonstration_data(cfg, s)).collect::<Result<Vec<_>, _>>()?;
        merge_datasets(cfg, parts)
    };
    Ok((split(train_seeds)?, split(val_seeds)?))
}

pub fn train_model(cfg: &StudyConfig, index: usize, train_set: &Dataset, val_set: &Dataset) -> Result<TrainOutcome, StudyError> {
    let tc = TrainConfig {
        seed: mix_seed(cfg.seed, STREAM_MODEL + index as u64),
        ..cfg.train.clone()
    };
    Ok(train(train_set, val_set, &cfg.rig.network, &tc)?)
}

/// An evaluation track with its centered demonstration: the reference
/// trajectory for on-policy scoring and the held-out log for off-policy
/// scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalTrack {
    pub seed: u64,
    pub track: Track,
    pub reference: DriveLog,
}

pub fn prepare_eval_track(cfg: &StudyConfig, seed: u64) -> Result<EvalTrack, StudyError> {
    let track = gen_track(seed, cfg.track_length)?;
    let reference = demonstrate(&track, cfg, 0.0, mix_seed(seed, STREAM_HELD_OUT))?;
    Ok(EvalTrack { seed, track, reference })
}

/// Outcome of one condition; `Err` holds the fault that excluded it.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionResult {
    pub condition: StudyCondition,
    pub record: Result<DeploymentRecord, String>,
}

fn deploy(
    condition: &StudyCondition,
    params: &ModelParams<f32>,
    tracks: &[&EvalTrack],
    cfg: &StudyConfig,
) -> Result<DeploymentRecord, StudyError> {
    let preproc = PreprocConfig {
        degradation: condition.degradation,
        ..cfg.rig.preproc
    };
    let sim = SimConfig {
        sensor: cfg.rig.sensor.clone(),
        record_frames: false,
        ..cfg.sim.clone()
    };
    let (mut distance, mut interventions) = (0.0, 0usize);
    let mut offsets = Vec::new();
    let (mut w_on, mut w_eff, mut w_off) = (0.0, 0.0, 0.0);
    let (mut abs_err, mut frames) = (0.0, 0usize);
    for (k, eval) in tracks.iter().enumerate() {
        let pipeline = InputPipeline {
            preproc,
            noise: condition.noise,
            noise_seed: mix_seed(condition.seed, 2 * k as u64),
        };
        let mut policy = NetworkPolicy::new(params.clone(), pipeline.clone())?;
        let log = run_episode(&mut policy, &eval.track, &sim, mix_seed(condition.seed, 2 * k as u64 + 1))?;
        distance += log.distance_m;
        interventions += log.interventions.len();
        let points = |t: &[TrajectoryPoint]| t.iter().map(|p| (p.x, p.y)).collect::<Vec<_>>();
        offsets.extend(trajectory_offsets(&points(&log.trajectory), &points(&eval.reference.trajectory))?);
        let angles = |s: &[crate::datalog::SteeringSample]| s.iter().map(|p| p.angle).collect::<Vec<_>>();
        w_on += whiteness(&angles(&log.steering_cmd), log.dt_policy)?;
        w_eff += whiteness(&angles(&log.steering_eff), log.dt_policy)?;

        let off = off_policy_eval(params, &eval.reference, &InputPipeline {
            noise_seed: mix_seed(condition.seed, 0x1000 + k as u64),
            ..pipeline
        })?;
        abs_err += off.mae_steer * off.predictions.len() as f64;
        frames += off.predictions.len();
        w_off += off.w_off_policy;
    }
    let n = tracks.len() as f64;
    let record = DeploymentRecord {
        name: condition.id.clone(),
        dpi: dpi(distance, interventions, DPI_CAP_M)?,
        mae_trajectory: mae_trajectory(&offsets)?,
        failure_rate: failure_rate(&offsets, FAILURE_THRESHOLD_M)?,
        w_effective: w_eff / n,
        w_on_policy: w_on / n,
        mae_steer: abs_err / frames as f64,
        w_off_policy: w_off / n,
        combined: 0.0,
    };
    record.validate().map_err(|e| StudyError::Config(format!("{e}")))?;
    Ok(record)
}

/// Deploys one condition; faults are captured in the result.
pub fn run_condition(
    condition: &StudyCondition,
    models: &[ModelParams<f32>],
    tracks: &[EvalTrack],
    cfg: &StudyConfig,
) -> ConditionResult {
    let record = (|| {
        let params = models
            .get(condition.policy)
            .ok_or_else(|| StudyError::Config(format!("no model {}", condition.policy)))?;
        let selected = condition
            .tracks
            .iter()
            .map(|s| {
                tracks
                    .iter()
                    .find(|t| t.seed == *s)
                    .ok_or_else(|| StudyError::Config(format!("track {s} was not prepared")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        deploy(condition, params, &selected, cfg)
    })()
    .map_err(|e| format!("{e}"));
    ConditionResult {
        condition: condition.clone(),
        record,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyReport {
    pub conditions: Vec<StudyCondition>,
    /// Completed deployments, in condition order, with the combined column
    /// filled in over this set.
    pub records: Vec<DeploymentRecord>,
    /// Excluded conditions and why.
    pub faulted: Vec<(String, String)>,
    pub correlations: CorrelationTable,
    /// Combined score vs `mae_steer` as the DpI predictor.
    pub combined_vs_mae: CorrDiffTest,
}

/// Orders results by condition, fills the combined column and computes the
/// correlations and the combined-vs-MAE test.
pub fn assemble(results: Vec<ConditionResult>, cfg: &StudyConfig) -> Result<StudyReport, StudyError> {
    let mut records = Vec::new();
    let mut faulted = Vec::new();
    let mut conditions = Vec::new();
    for r in results {
        match r.record {
            Ok(rec) => records.push(rec),
            Err(msg) => faulted.push((r.condition.id.clone(), msg)),
        }
        conditions.push(r.condition);
    }
    if records.len() < 3 {
        return Err(StudyError::Config(format!("only {} conditions completed", records.len())));
    }
    let mae: Vec<f64> = records.iter().map(|r| r.mae_steer).collect();
    let w_off: Vec<f64> = records.iter().map(|r| r.w_off_policy).collect();
    let combined = combined_score(&mae, &w_off)?;
    for (rec, c) in records.iter_mut().zip(&combined) {
        rec.combined = *c;
    }
    let correlations = CorrelationTable::from_records(&records)?;
    let dpi: Vec<f64> = records.iter().map(|r| r.dpi).collect();
    let combined_vs_mae =
        permutation_test_corr_diff(&combined, &mae, &dpi, cfg.permutations, mix_seed(cfg.seed, STREAM_PERMUTATION))?;
    Ok(StudyReport {
        conditions,
        records,
        faulted,
        correlations,
        combined_vs_mae,
    })
}

pub fn validate_conditions(conditions: &[StudyCondition]) -> Result<(), StudyError> {
    if conditions.len() < 8 {
        return Err(StudyError::Config(format!("need at least 8 conditions, got {}", conditions.len())));
    }
    for c in conditions {
        if c.tracks.len() < 2 {
            return Err(StudyError::Config(format!("condition {} needs at least 2 tracks", c.id)));
        }
        if !(c.noise.is_finite() && c.noise >= 0.0) {
            return Err(StudyError::Config(format!("condition {} has invalid noise {}", c.id, c.noise)));
        }
    }
    Ok(())
}

/// Sequential study: collect, train, prepare tracks, deploy, assemble.
pub fn run_study(conditions: &[StudyCondition], cfg: &StudyConfig) -> Result<StudyReport, StudyError> {
    validate_conditions(conditions)?;
    cfg.rig.check()?;
    let (train_set, val_set) = collect_training_data(cfg)?;
    let models = (0..cfg.models)
        .map(|i| train_model(cfg, i, &train_set, &val_set).map(|o| o.best))
        .collect::<Result<Vec<_>, _>>()?;
    let mut seeds: Vec<u64> = conditions.iter().flat_map(|c| c.tracks.iter().copied()).collect();
    seeds.sort_unstable();
    seeds.dedup();
    let tracks = seeds
        .iter()
        .map(|&s| prepare_eval_track(cfg, s))
        .collect::<Result<Vec<_>, _>>()?;
    let results = conditions.iter().map(|c| run_condition(c, &models, &tracks, cfg)).collect();
    assemble(results, cfg)
}
