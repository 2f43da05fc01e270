//! Flat `key=value` run configuration.
//!
//! Every key has a default; a config file may override any subset, command
//! line flags override the file. Unknown keys are errors. The fully resolved
//! configuration is written next to every run's outputs.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use roadlab_core::datalog::{Modality, CAMERA_DT, LIDAR_DT};
use roadlab_core::numerics::mix_seed;
use roadlab_core::preprocess::{ChannelMode, Degradation};
use roadlab_core::simulator::{SimConfig, TrackConfig};
use roadlab_core::study::{Rig, StudyConfig};
use roadlab_core::trainer::TrainConfig;

use crate::error::LabError;
use crate::formats::{parse_key_values, read_text, write_key_values, Result};

/// `(key, default, meaning)`.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("seed", "0", "master seed"),
    ("rig", "full", "full (70x266 frames, 66x258 crop) or compact (22x74, 18x66)"),
    ("channels", "three", "three|intensity|depth|ambient|rgb"),
    ("degrade", "none", "none|bgr|shift:dx,dy|noise:sigma"),
    ("track.count", "2", "tracks per run"),
    ("track.length", "1000", "drivable track length, m"),
    ("track.width", "5", "road width, m"),
    ("track.curviness", "1", "curvature amplitude scale"),
    ("train.lr", "0.001", "AdamW learning rate"),
    ("train.beta1", "0.9", "AdamW first-moment decay"),
    ("train.beta2", "0.999", "AdamW second-moment decay"),
    ("train.epsilon", "1e-8", "AdamW epsilon"),
    ("train.weight_decay", "0.01", "decoupled weight decay"),
    ("train.batch_size", "32", "minibatch size"),
    ("train.max_epochs", "100", "epoch limit"),
    ("train.patience", "10", "early-stopping patience, epochs"),
    ("train.val_logs", "1", "trailing logs held out for validation"),
    ("sim.wheelbase", "2.79", "m"),
    ("sim.steering_ratio", "14.7", "wheel degrees per road-wheel degree"),
    ("sim.actuator_rate_limit", "400", "deg/s at the wheel"),
    ("sim.dt_sim", "auto", "s; auto = 0.01 (lidar) or 0.011 (camera)"),
    ("sim.dt_policy", "auto", "s; auto = 0.1 (lidar) or 0.033 (camera)"),
    ("sim.speed_fraction", "0.8", "deployment speed relative to the demonstrator"),
    ("sim.intervention_lateral", "1.5", "m"),
    ("sim.intervention_heading_deg", "90", "deg"),
    ("sim.depth_noise", "0.02", "m"),
    ("sim.speckle", "0.05", "intensity noise"),
    ("sim.ambient_noise", "0.25", "ambient noise"),
    ("sim.record_frames", "false", "keep frames in drive logs"),
    ("collect.weave", "0.8", "demonstrator weave amplitude, m"),
    ("study.models", "1", "models trained per study"),
    ("study.train_tracks", "4", "demonstration tracks for training"),
    ("study.val_tracks", "1", "demonstration tracks for validation"),
    ("study.noise_levels", "0,0.05,0.1,0.15,0.2,0.3,0.4,0.5", "input-noise grades"),
    ("study.permutations", "10000", "resamples in the combined-vs-MAE test"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<&'static str, String>,
}

fn known(key: &str) -> Option<&'static str> {
    KEYS.iter().find(|(k, _, _)| *k == key).map(|(k, _, _)| *k)
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            values: KEYS.iter().map(|(k, v, _)| (*k, v.to_string())).collect(),
        }
    }
}

/// Seed of the `i`-th generated track of a run.
pub fn track_seed(master: u64, i: usize) -> u64 {
    mix_seed(master, 0x100 + i as u64)
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        for (k, v) in parse_key_values(&read_text(path)?, path)? {
            cfg.set(&k, &v).map_err(|e| LabError::Usage(format!("{}: {e}", path.display())))?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let k = known(key).ok_or_else(|| LabError::Usage(format!("unknown config key `{key}`")))?;
        self.values.insert(k, value.trim().to_string());
        Ok(())
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).expect("key is declared")
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.raw(key);
        raw.parse()
            .map_err(|e| LabError::Usage(format!("config `{key}`: cannot parse `{raw}`: {e}")))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_key_values(path, self.values.iter())
    }

    pub fn seed(&self) -> Result<u64> {
        self.get("seed")
    }

    pub fn channels(&self) -> Result<ChannelMode> {
        self.get("channels")
    }

    pub fn rig(&self) -> Result<Rig> {
        rig_named(self.raw("rig"), self.channels()?)
    }

    /// Deployment-time corruption: crop/channel degradation and noise level.
    pub fn degradation(&self) -> Result<(Degradation, f64)> {
        parse_degrade(self.raw("degrade"))
    }

    pub fn track_config(&self) -> Result<TrackConfig> {
        Ok(TrackConfig {
            width: self.get("track.width")?,
            curviness: self.get("track.curviness")?,
            ..TrackConfig::default()
        })
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            lr: self.get("train.lr")?,
            beta1: self.get("train.beta1")?,
            beta2: self.get("train.beta2")?,
            epsilon: self.get("train.epsilon")?,
            weight_decay: self.get("train.weight_decay")?,
            batch_size: self.get("train.batch_size")?,
            max_epochs: self.get("train.max_epochs")?,
            patience: self.get("train.patience")?,
            seed: self.seed()?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn timing(&self, key: &str, lidar: f64, camera: f64, modality: Modality) -> Result<f64> {
        match self.raw(key) {
            "auto" => Ok(if modality == Modality::Camera { camera } else { lidar }),
            _ => self.get(key),
        }
    }

    pub fn sim_config(&self) -> Result<SimConfig> {
        let modality = self.channels()?.modality();
        let mut sensor = self.rig()?.sensor;
        sensor.depth_noise = self.get("sim.depth_noise")?;
        sensor.speckle = self.get("sim.speckle")?;
        sensor.ambient_noise = self.get("sim.ambient_noise")?;
        let cfg = SimConfig {
            wheelbase: self.get("sim.wheelbase")?,
            steering_ratio: self.get("sim.steering_ratio")?,
            actuator_rate_limit: self.get("sim.actuator_rate_limit")?,
            dt_sim: self.timing("sim.dt_sim", 0.01, CAMERA_DT / 3.0, modality)?,
            dt_policy: self.timing("sim.dt_policy", LIDAR_DT, CAMERA_DT, modality)?,
            speed_fraction: self.get("sim.speed_fraction")?,
            intervention_lateral: self.get("sim.intervention_lateral")?,
            intervention_heading_deg: self.get("sim.intervention_heading_deg")?,
            modality,
            record_frames: self.get("sim.record_frames")?,
            sensor,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn noise_levels(&self) -> Result<Vec<f64>> {
        self.raw("study.noise_levels")
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite() && *v >= 0.0)
                    .ok_or_else(|| LabError::Usage(format!("study.noise_levels: bad level `{s}`")))
            })
            .collect()
    }

    pub fn study_config(&self) -> Result<StudyConfig> {
        let permutations: usize = self.get("study.permutations")?;
        if permutations < 1000 {
            return Err(LabError::Usage(format!("study.permutations = {permutations}; at least 1000 are required")));
        }
        Ok(StudyConfig {
            rig: self.rig()?,
            sim: self.sim_config()?,
            train: self.train_config()?,
            models: self.get("study.models")?,
            train_tracks: self.get("study.train_tracks")?,
            val_tracks: self.get("study.val_tracks")?,
            track_length: self.get("track.length")?,
            weave: self.get("collect.weave")?,
            permutations,
            seed: self.seed()?,
        })
    }
}

pub fn rig_named(name: &str, mode: ChannelMode) -> Result<Rig> {
    Ok(match name {
        "full" => Rig::full(mode)?,
        "compact" => Rig::compact(mode)?,
        other => return Err(LabError::Usage(format!("unknown rig `{other}` (full|compact)"))),
    })
}

/// `none`, `bgr`, `shift:dx,dy` or `noise:sigma`.
pub fn parse_degrade(s: &str) -> Result<(Degradation, f64)> {
    let bad = || LabError::Usage(format!("bad degradation `{s}` (none|bgr|shift:dx,dy|noise:sigma)"));
    let s = s.trim();
    if s == "none" {
        return Ok((Degradation::None, 0.0));
    }
    if s == "bgr" {
        return Ok((Degradation::ChannelPermute([2, 1, 0]), 0.0));
    }
    if let Some(rest) = s.strip_prefix("shift:") {
        let (dx, dy) = rest.split_once(',').ok_or_else(bad)?;
        let dx = dx.trim().parse().map_err(|_| bad())?;
        let dy = dy.trim().parse().map_err(|_| bad())?;
        return Ok((Degradation::CropShift { dx, dy }, 0.0));
    }
    if let Some(rest) = s.strip_prefix("noise:") {
        let sigma: f64 = rest.trim().parse().map_err(|_| bad())?;
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(bad());
        }
        return Ok((Degradation::None, sigma));
    }
    Err(bad())
}
