//! The `roadlab` command line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use roadlab_core::datalog::DriveLog;
use roadlab_core::metrics::{permutation_test_corr_diff, OnPolicySummary};
use roadlab_core::numerics::mix_seed;
use roadlab_core::simulator::{gen_track_with, run_episode, ConstantPolicy, Policy, ReferenceDriver, SimConfig, Track};
use roadlab_core::study::{
    dataset_from_log, graded_conditions, off_policy_eval, reproduce_table3, InputPipeline, NetworkPolicy, Rig,
};
use roadlab_core::trainer::{train_with, evaluate_mae, Dataset};

use crate::config::{rig_named, track_seed, RunConfig};
use crate::error::LabError;
use crate::formats::{
    create_dir, load_checkpoint, save_checkpoint, save_drivelog, save_track, write_csv, LogDir, Result,
};
use crate::parallel::par_map;
use crate::report::{describe_test, write_correlations, write_study, PUBLISHED_TABLE3};
use crate::runner;

#[derive(Debug, Parser)]
#[command(name = "roadlab", version, about = "Road-following lab: simulate, train, evaluate and correlate")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// key=value config file
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Master seed
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Output directory [default: runs/<subcommand>]
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate tracks and write track.csv/meta.txt for each
    GenTrack {
        #[command(flatten)]
        common: Common,
        /// Number of tracks
        #[arg(long, value_name = "N")]
        tracks: Option<usize>,
        /// Track length in meters
        #[arg(long, value_name = "M")]
        length: Option<f64>,
    },
    /// Record reference-driver demonstrations with frames
    Collect {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "N")]
        tracks: Option<usize>,
        #[arg(long, value_name = "M")]
        length: Option<f64>,
        /// three|intensity|depth|ambient|rgb
        #[arg(long, value_name = "MODE")]
        channels: Option<String>,
    },
    /// Train a model on collected demonstrations
    Train {
        #[command(flatten)]
        common: Common,
        /// Output directory of `collect`, or a directory of log directories
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        #[arg(long, value_name = "MODE")]
        channels: Option<String>,
    },
    /// Off-policy evaluation of a checkpoint on demonstration logs
    EvalOff {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "DIR")]
        checkpoint: PathBuf,
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        /// none|bgr|shift:dx,dy|noise:sigma
        #[arg(long, value_name = "SPEC")]
        degrade: Option<String>,
    },
    /// Closed-loop deployment on generated tracks
    Drive {
        #[command(flatten)]
        common: Common,
        /// Model checkpoint directory (required for --policy model)
        #[arg(long, value_name = "DIR")]
        checkpoint: Option<PathBuf>,
        /// model|reference|zero
        #[arg(long, value_name = "KIND", default_value = "model")]
        policy: String,
        #[arg(long, value_name = "N")]
        tracks: Option<usize>,
        #[arg(long, value_name = "M")]
        length: Option<f64>,
        #[arg(long, value_name = "SPEC")]
        degrade: Option<String>,
    },
    /// Synthetic correlation study over graded input corruption
    Study {
        #[command(flatten)]
        common: Common,
        /// Evaluation tracks per condition
        #[arg(long, value_name = "N")]
        tracks: Option<usize>,
        #[arg(long, value_name = "M")]
        length: Option<f64>,
        #[arg(long, value_name = "MODE")]
        channels: Option<String>,
        /// Extra corruption applied in every condition
        #[arg(long, value_name = "SPEC")]
        degrade: Option<String>,
    },
    /// Correlations of the published deployment table
    #[command(name = "reproduce-table3")]
    ReproduceTable3 {
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenTrack { .. } => "gen-track",
            Command::Collect { .. } => "collect",
            Command::Train { .. } => "train",
            Command::EvalOff { .. } => "eval-off",
            Command::Drive { .. } => "drive",
            Command::Study { .. } => "study",
            Command::ReproduceTable3 { .. } => "reproduce-table3",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::GenTrack { common, .. }
            | Command::Collect { common, .. }
            | Command::Train { common, .. }
            | Command::EvalOff { common, .. }
            | Command::Drive { common, .. }
            | Command::Study { common, .. }
            | Command::ReproduceTable3 { common } => common,
        }
    }
}

/// Parses `args` (program name first), runs and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn resolve(command: &Command) -> Result<RunConfig> {
    let common = command.common();
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let mut set = |key: &str, value: Option<String>| -> Result<()> {
        match value {
            Some(v) => cfg.set(key, &v),
            None => Ok(()),
        }
    };
    set("seed", common.seed.map(|s| s.to_string()))?;
    match command {
        Command::GenTrack { tracks, length, .. } => {
            set("track.count", tracks.map(|v| v.to_string()))?;
            set("track.length", length.map(|v| v.to_string()))?;
        }
        Command::Collect {
            tracks,
            length,
            channels,
            ..
        } => {
            set("track.count", tracks.map(|v| v.to_string()))?;
            set("track.length", length.map(|v| v.to_string()))?;
            set("channels", channels.clone())?;
        }
        Command::Train { channels, .. } => set("channels", channels.clone())?,
        Command::EvalOff { degrade, .. } => set("degrade", degrade.clone())?,
        Command::Drive {
            tracks, length, degrade, ..
        } => {
            set("track.count", tracks.map(|v| v.to_string()))?;
            set("track.length", length.map(|v| v.to_string()))?;
            set("degrade", degrade.clone())?;
        }
        Command::Study {
            tracks,
            length,
            channels,
            degrade,
            ..
        } => {
            set("track.count", tracks.map(|v| v.to_string()))?;
            set("track.length", length.map(|v| v.to_string()))?;
            set("channels", channels.clone())?;
            set("degrade", degrade.clone())?;
        }
        Command::ReproduceTable3 { .. } => {}
    }
    Ok(cfg)
}

pub fn execute(command: &Command) -> Result<()> {
    let cfg = resolve(command)?;
    let out = command
        .common()
        .out
        .clone()
        .unwrap_or_else(|| Path::new("runs").join(command.name()));
    create_dir(&out)?;
    cfg.write(&out.join("config.txt"))?;
    match command {
        Command::GenTrack { .. } => gen_track_cmd(&cfg, &out),
        Command::Collect { .. } => collect_cmd(&cfg, &out),
        Command::Train { data, .. } => train_cmd(&cfg, data, &out),
        Command::EvalOff { checkpoint, data, .. } => eval_off_cmd(&cfg, checkpoint, data, &out),
        Command::Drive { checkpoint, policy, .. } => drive_cmd(&cfg, checkpoint.as_deref(), policy, &out),
        Command::Study { .. } => study_cmd(&cfg, &out),
        Command::ReproduceTable3 { .. } => table3_cmd(&cfg, &out),
    }
}

fn collect_all<T>(results: Vec<Result<T>>) -> Result<Vec<T>> {
    results.into_iter().collect()
}

fn tracks_of(cfg: &RunConfig) -> Result<Vec<(usize, u64, Track)>> {
    let count: usize = cfg.get("track.count")?;
    let length: f64 = cfg.get("track.length")?;
    let tc = cfg.track_config()?;
    let master = cfg.seed()?;
    let indices: Vec<usize> = (0..count).collect();
    collect_all(par_map(&indices, |&i| {
        let seed = track_seed(master, i);
        Ok((i, seed, gen_track_with(&tc, seed, length)?))
    }))
}

fn gen_track_cmd(cfg: &RunConfig, out: &Path) -> Result<()> {
    let tracks = tracks_of(cfg)?;
    let mut rows = Vec::new();
    for (i, seed, track) in &tracks {
        save_track(&out.join("tracks").join(format!("{i:03}")), track, Some(*seed))?;
        rows.push([
            i.to_string(),
            seed.to_string(),
            track.length.to_string(),
            track.points.len().to_string(),
            track.max_abs_curvature().to_string(),
        ]);
    }
    write_csv(&out.join("summary.csv"), &["track", "seed", "length_m", "points", "max_abs_curvature"], rows)?;
    println!("wrote {} tracks to {}", tracks.len(), out.display());
    Ok(())
}

/// The demonstrator's drive: full speed, frames recorded.
fn demonstration(cfg: &RunConfig, track: &Track, seed: u64, weave: f64, frames: bool) -> Result<DriveLog> {
    let sim = SimConfig {
        speed_fraction: 1.0,
        record_frames: frames,
        ..cfg.sim_config()?
    };
    let mut driver = ReferenceDriver::weaving(&sim, weave, 70.0);
    Ok(run_episode(&mut driver, track, &sim, mix_seed(seed, 0x400))?)
}

fn collect_cmd(cfg: &RunConfig, out: &Path) -> Result<()> {
    let weave: f64 = cfg.get("collect.weave")?;
    let tracks = tracks_of(cfg)?;
    let logs = collect_all(par_map(&tracks, |(_, seed, track)| demonstration(cfg, track, *seed, weave, true)))?;
    let mut rows = Vec::new();
    for ((i, seed, track), log) in tracks.iter().zip(&logs) {
        let name = format!("{i:03}");
        save_track(&out.join("tracks").join(&name), track, Some(*seed))?;
        save_drivelog(&out.join("logs").join(&name), log)?;
        rows.push([
            name,
            seed.to_string(),
            log.frames.len().to_string(),
            log.distance_m.to_string(),
            log.interventions.len().to_string(),
        ]);
    }
    write_csv(&out.join("summary.csv"), &["log", "track_seed", "frames", "distance_m", "interventions"], rows)?;
    println!("recorded {} demonstrations in {}", logs.len(), out.display());
    Ok(())
}

/// Log directories under `dir`: `dir` itself, `dir/logs/*` or `dir/*`.
pub fn find_logs(dir: &Path) -> Result<Vec<PathBuf>> {
    if dir.join("meta.txt").is_file() && dir.join("steering_eff.csv").is_file() {
        return Ok(vec![dir.to_path_buf()]);
    }
    let base = if dir.join("logs").is_dir() { dir.join("logs") } else { dir.to_path_buf() };
    let entries = std::fs::read_dir(&base).map_err(|e| LabError::io(&base, e))?;
    let mut logs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("meta.txt").is_file())
        .collect();
    logs.sort();
    if logs.is_empty() {
        return Err(LabError::Data(format!("{}: no drive logs found", base.display())));
    }
    Ok(logs)
}

fn load_datasets(paths: &[PathBuf], rig: &Rig) -> Result<Vec<Dataset>> {
    collect_all(par_map(paths, |p| {
        let log = LogDir::open(p)?.load()?;
        dataset_from_log(&log, &rig.preproc).map_err(|e| LabError::format(p, e))
    }))
}

fn train_cmd(cfg: &RunConfig, data: &Path, out: &Path) -> Result<()> {
    let rig = cfg.rig()?;
    let tc = cfg.train_config()?;
    let val_logs: usize = cfg.get("train.val_logs")?;
    let logs = find_logs(data)?;
    if val_logs == 0 || logs.len() <= val_logs {
        return Err(LabError::Data(format!(
            "{} logs found; need more than train.val_logs = {val_logs}",
            logs.len()
        )));
    }
    let parts = load_datasets(&logs, &rig)?;
    let dims = [rig.preproc.channels(), rig.preproc.out_height, rig.preproc.out_width];
    let (mut train_set, mut val_set) = (Dataset::new(dims), Dataset::new(dims));
    for (k, part) in parts.iter().enumerate() {
        let target = if k + val_logs >= parts.len() { &mut val_set } else { &mut train_set };
        target.extend(part)?;
    }
    let mut history = Vec::new();
    let outcome = train_with(
        &train_set,
        &rig.network,
        &tc,
        |_, p| evaluate_mae(p, &val_set, 64),
        |r| {
            println!("epoch {:3}  train MAE {:8.4}  val MAE {:8.4}", r.epoch, r.train_mae, r.val_mae);
            history.push(*r);
        },
    )?;
    let best_val = outcome.history[outcome.best_epoch - 1].val_mae;
    save_checkpoint(
        &out.join("checkpoint"),
        &outcome.best,
        &[
            ("rig".into(), cfg.raw("rig").into()),
            ("channels".into(), cfg.raw("channels").into()),
            ("best_epoch".into(), outcome.best_epoch.to_string()),
            ("seed".into(), tc.seed.to_string()),
        ],
    )?;
    write_csv(
        &out.join("history.csv"),
        &["epoch", "train_mae", "val_mae"],
        history.iter().map(|r| [r.epoch.to_string(), r.train_mae.to_string(), r.val_mae.to_string()]),
    )?;
    write_csv(
        &out.join("summary.csv"),
        &["train_samples", "val_samples", "epochs", "best_epoch", "best_val_mae", "stopped_early"],
        [[
            train_set.len().to_string(),
            val_set.len().to_string(),
            outcome.history.len().to_string(),
            outcome.best_epoch.to_string(),
            best_val.to_string(),
            outcome.stopped_early.to_string(),
        ]],
    )?;
    println!("best epoch {} with validation MAE {best_val:.4}", outcome.best_epoch);
    Ok(())
}

/// Rig recorded in a checkpoint, falling back to the run config.
fn checkpoint_rig(meta: &std::collections::BTreeMap<String, String>, cfg: &RunConfig) -> Result<Rig> {
    let rig = meta.get("rig").map_or(cfg.raw("rig"), String::as_str);
    let channels = match meta.get("channels") {
        Some(c) => c.parse().map_err(|e| LabError::Data(format!("checkpoint channels: {e}")))?,
        None => cfg.channels()?,
    };
    rig_named(rig, channels)
}

fn eval_off_cmd(cfg: &RunConfig, checkpoint: &Path, data: &Path, out: &Path) -> Result<()> {
    let ck = load_checkpoint(checkpoint)?;
    let rig = checkpoint_rig(&ck.meta, cfg)?;
    let (degradation, noise) = cfg.degradation()?;
    let master = cfg.seed()?;
    let logs = find_logs(data)?;
    let indexed: Vec<(usize, PathBuf)> = logs.into_iter().enumerate().collect();
    let results = collect_all(par_map(&indexed, |(i, path)| {
        let log = LogDir::open(path)?.load()?;
        let pipeline = InputPipeline {
            preproc: roadlab_core::preprocess::PreprocConfig {
                degradation,
                ..rig.preproc
            },
            noise,
            noise_seed: mix_seed(master, *i as u64),
        };
        let labels = log.frame_labels().unwrap_or_default();
        let eval = off_policy_eval(&ck.params, &log, &pipeline).map_err(|e| LabError::format(path, e))?;
        Ok((path.clone(), log, labels, eval))
    }))?;
    let mut rows = Vec::new();
    let mut pred_rows = Vec::new();
    for (path, log, labels, eval) in &results {
        let name = path.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned());
        println!("{name}: MAE {:.4}°, whiteness {:.4}°/s", eval.mae_steer, eval.w_off_policy);
        rows.push([
            name.clone(),
            eval.predictions.len().to_string(),
            eval.mae_steer.to_string(),
            eval.w_off_policy.to_string(),
        ]);
        for (k, (p, f)) in eval.predictions.iter().zip(&log.frames).enumerate() {
            pred_rows.push([name.clone(), k.to_string(), f.t.to_string(), labels[k].to_string(), p.to_string()]);
        }
    }
    write_csv(&out.join("summary.csv"), &["log", "frames", "mae_steer_deg", "w_off_policy"], rows)?;
    write_csv(&out.join("predictions.csv"), &["log", "frame", "t", "label_deg", "prediction_deg"], pred_rows)
}

fn drive_cmd(cfg: &RunConfig, checkpoint: Option<&Path>, policy: &str, out: &Path) -> Result<()> {
    let (degradation, noise) = cfg.degradation()?;
    let master = cfg.seed()?;
    let model = match policy {
        "model" => {
            let path = checkpoint
                .ok_or_else(|| LabError::Usage("--policy model needs --checkpoint DIR".into()))?;
            let ck = load_checkpoint(path)?;
            let rig = checkpoint_rig(&ck.meta, cfg)?;
            Some((ck.params, rig))
        }
        "reference" | "zero" => None,
        other => return Err(LabError::Usage(format!("unknown policy `{other}` (model|reference|zero)"))),
    };
    let mut sim = cfg.sim_config()?;
    if let Some((_, rig)) = &model {
        sim.sensor = rig.sensor.clone();
    }
    let tracks = tracks_of(cfg)?;
    let results = collect_all(par_map(&tracks, |(i, seed, track)| {
        let human = demonstration(cfg, track, *seed, 0.0, false)?;
        let episode_seed = mix_seed(master, 0x800 + *i as u64);
        let mut policy: Box<dyn Policy> = match (&model, policy) {
            (Some((params, rig)), _) => {
                let pipeline = InputPipeline {
                    preproc: roadlab_core::preprocess::PreprocConfig {
                        degradation,
                        ..rig.preproc
                    },
                    noise,
                    noise_seed: mix_seed(episode_seed, 1),
                };
                Box::new(NetworkPolicy::new(params.clone(), pipeline)?)
            }
            (None, "reference") => Box::new(ReferenceDriver::new(&sim)),
            _ => Box::new(ConstantPolicy(0.0)),
        };
        let log = run_episode(policy.as_mut(), track, &sim, episode_seed)?;
        let summary = OnPolicySummary::from_log(&log, &human.trajectory)?;
        Ok((log, summary))
    }))?;
    let mut rows = Vec::new();
    let (mut distance, mut interventions) = (0.0, 0usize);
    for ((i, seed, track), (log, s)) in tracks.iter().zip(&results) {
        let name = format!("{i:03}");
        save_track(&out.join("tracks").join(&name), track, Some(*seed))?;
        save_drivelog(&out.join("logs").join(&name), log)?;
        distance += s.distance;
        interventions += s.interventions;
        println!(
            "track {name}: {:.1} m, {} interventions, MAE traj {:.3} m, W on {:.2}°/s",
            s.distance, s.interventions, s.mae_trajectory, s.w_on_policy
        );
        rows.push([
            name,
            s.distance.to_string(),
            s.interventions.to_string(),
            s.dpi.to_string(),
            s.mae_trajectory.to_string(),
            s.failure_rate.to_string(),
            s.w_on_policy.to_string(),
            s.w_effective.to_string(),
        ]);
    }
    let total_dpi = roadlab_core::metrics::dpi(distance, interventions, roadlab_core::datalog::DPI_CAP_M)?;
    println!("total: {distance:.1} m, {interventions} interventions, DpI {total_dpi:.1} m");
    write_csv(
        &out.join("summary.csv"),
        &[
            "track",
            "distance_m",
            "interventions",
            "dpi_m",
            "mae_traj_m",
            "failure_rate",
            "w_on_policy",
            "w_effective",
        ],
        rows,
    )
}

fn study_cmd(cfg: &RunConfig, out: &Path) -> Result<()> {
    let study = cfg.study_config()?;
    let (degradation, base_noise) = cfg.degradation()?;
    let eval_tracks: usize = cfg.get("track.count")?;
    let mut conditions = graded_conditions(study.seed, study.models, &cfg.noise_levels()?, eval_tracks);
    for c in &mut conditions {
        c.degradation = degradation;
        c.noise += base_noise;
    }
    let (report, outcomes) = runner::run_study(&conditions, &study)?;
    write_study(out, &report, study.permutations)?;
    for (i, o) in outcomes.iter().enumerate() {
        write_csv(
            &out.join("models").join(format!("m{i}")).join("history.csv"),
            &["epoch", "train_mae", "val_mae"],
            o.history.iter().map(|r| [r.epoch.to_string(), r.train_mae.to_string(), r.val_mae.to_string()]),
        )?;
    }
    let mut rows: Vec<[String; 2]> = report
        .correlations
        .entries
        .iter()
        .map(|(m, r)| [format!("r_{}", m.as_str()), r.to_string()])
        .collect();
    rows.push(["deployments".into(), report.records.len().to_string()]);
    rows.push(["faulted".into(), report.faulted.len().to_string()]);
    rows.push(["combined_vs_mae_mean_effect".into(), report.combined_vs_mae.mean_effect.to_string()]);
    rows.push(["combined_vs_mae_p".into(), report.combined_vs_mae.p_value.to_string()]);
    write_csv(&out.join("summary.csv"), &["quantity", "value"], rows)?;
    for (m, r) in report.correlations.entries {
        println!("{:<16} r = {r:+.3}", m.as_str());
    }
    println!("{}", describe_test(&report.combined_vs_mae, study.permutations));
    Ok(())
}

fn table3_cmd(cfg: &RunConfig, out: &Path) -> Result<()> {
    let table = reproduce_table3();
    let rows = roadlab_core::datalog::load_table8_fixture();
    let col = |f: fn(&roadlab_core::datalog::DeploymentRecord) -> f64| rows.iter().map(f).collect::<Vec<_>>();
    let permutations: usize = cfg.get("study.permutations")?;
    let test = permutation_test_corr_diff(
        &col(|r| r.combined),
        &col(|r| r.mae_steer),
        &col(|r| r.dpi),
        permutations,
        cfg.seed()?,
    )?;
    println!("{:<16} {:>8} {:>10}", "metric", "r", "published");
    let mut summary = Vec::new();
    for ((m, r), (_, published)) in table.entries.iter().zip(PUBLISHED_TABLE3) {
        println!("{:<16} {r:>8.3} {published:>10.2}", m.as_str());
        summary.push([m.as_str().to_string(), r.to_string(), published.to_string()]);
    }
    println!("{}", describe_test(&test, permutations));
    write_correlations(&out.join("correlations.csv"), &table)?;
    summary.push(["permutation_mean_effect".into(), test.mean_effect.to_string(), "-0.05".into()]);
    summary.push(["permutation_p".into(), test.p_value.to_string(), "0.16".into()]);
    write_csv(&out.join("summary.csv"), &["quantity", "value", "published"], summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn parser_is_well_formed() {
        Cli::command().debug_assert();
    }

    #[test]
    fn every_flag_appears_in_subcommand_help() {
        let mut cli = Cli::command();
        for sub in cli.get_subcommands_mut() {
            let help = sub.render_long_help().to_string();
            for arg in sub.get_arguments() {
                if let Some(long) = arg.get_long() {
                    assert!(help.contains(&format!("--{long}")), "{} help lacks --{long}", sub.get_name());
                }
            }
        }
    }
}
