//! Parallel drivers for the study and for batches of episodes.

use roadlab_core::study::{
    assemble, demonstration_data, demonstration_track_seeds, merge_datasets, prepare_eval_track, run_condition,
    train_model, validate_conditions, StudyCondition, StudyConfig, StudyReport,
};
use roadlab_core::trainer::TrainOutcome;

use crate::error::LabError;
use crate::formats::Result;
use crate::parallel::par_map;

/// Same result as the sequential core study, with demonstrations, models,
/// evaluation tracks and conditions each fanned out over the worker pool.
pub fn run_study(conditions: &[StudyCondition], cfg: &StudyConfig) -> Result<(StudyReport, Vec<TrainOutcome>)> {
    validate_conditions(conditions)?;
    cfg.rig.check()?;
    let (train_seeds, val_seeds) = demonstration_track_seeds(cfg);
    let seeds: Vec<u64> = train_seeds.iter().chain(&val_seeds).copied().collect();
    let mut parts = par_map(&seeds, |&s| demonstration_data(cfg, s))
        .into_iter()
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let val_parts = parts.split_off(train_seeds.len());
    let train_set = merge_datasets(cfg, parts)?;
    let val_set = merge_datasets(cfg, val_parts)?;

    let indices: Vec<usize> = (0..cfg.models).collect();
    let outcomes = par_map(&indices, |&i| train_model(cfg, i, &train_set, &val_set))
        .into_iter()
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let models: Vec<_> = outcomes.iter().map(|o| o.best.clone()).collect();

    let mut track_seeds: Vec<u64> = conditions.iter().flat_map(|c| c.tracks.iter().copied()).collect();
    track_seeds.sort_unstable();
    track_seeds.dedup();
    let tracks = par_map(&track_seeds, |&s| prepare_eval_track(cfg, s))
        .into_iter()
        .collect::<std::result::Result<Vec<_>, _>>()?;

    let results = par_map(conditions, |c| run_condition(c, &models, &tracks, cfg));
    let report = assemble(results, cfg).map_err(LabError::from)?;
    Ok((report, outcomes))
}
