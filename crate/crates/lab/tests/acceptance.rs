//! One line per acceptance criterion; exits non-zero if any fails.

mod common;

use std::time::{Duration, Instant};

use roadlab::runner;
use roadlab_core::datalog::{load_table8_fixture, DeploymentRecord, DPI_CAP_M};
use roadlab_core::metrics::{combined_score, dpi, permutation_test_corr_diff, whiteness};
use roadlab_core::numerics::Rng;
use roadlab_core::pilotnet::{gradient_check_seeded, NetworkConfig};
use roadlab_core::preprocess::encode_depth;
use roadlab_core::simulator::{gen_track_with, run_episode, ConstantPolicy, ReferenceDriver, SimConfig, Track, TrackConfig};
use roadlab_core::study::{graded_conditions, reproduce_table3, Metric, StudyConfig};
use roadlab_core::trainer::{train_with, Dataset, TrainConfig};

use common::{first_difference, quick_config, run_ok, s};

type Criterion = (&'static str, fn() -> Verdict);

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn column(rows: &[DeploymentRecord], f: fn(&DeploymentRecord) -> f64) -> Vec<f64> {
    rows.iter().map(f).collect()
}

fn table3() -> Verdict {
    let published = [
        (Metric::MaeTrajectory, -0.56),
        (Metric::FailureRate, -0.06),
        (Metric::WOnPolicy, -0.56),
        (Metric::WEffective, -0.67),
        (Metric::WOffPolicy, -0.72),
        (Metric::MaeSteer, -0.76),
        (Metric::Combined, -0.82),
    ];
    let start = Instant::now();
    let table = reproduce_table3();
    let elapsed = start.elapsed();
    let mut misses = Vec::new();
    for (metric, want) in published {
        let got = table.get(metric);
        if (got - want).abs() > 0.02 || got.is_nan() {
            misses.push(format!("{} {got:.3} vs {want:.2}", metric.as_str()));
        }
    }
    let fast = elapsed < Duration::from_secs(1);
    let detail = if misses.is_empty() {
        format!("all seven within 0.02 in {elapsed:.2?}")
    } else {
        format!("outside 0.02: {} ({elapsed:.2?})", misses.join(", "))
    };
    verdict(misses.is_empty() && fast, detail)
}

fn combined_calibration() -> Verdict {
    let rows = load_table8_fixture();
    let ours = combined_score(&column(&rows, |r| r.mae_steer), &column(&rows, |r| r.w_off_policy)).unwrap();
    let (mut worst, mut at) = (0.0f64, 0);
    for (i, (r, c)) in rows.iter().zip(&ours).enumerate() {
        let e = (r.combined - c).abs();
        if e > worst {
            worst = e;
            at = i;
        }
    }
    let bgr = rows.iter().position(|r| r.name == "Camera v1 BGR (Nov)").unwrap();
    verdict(
        worst <= 1e-3,
        format!(
            "max row error {worst:.4} at {} (tolerance 1e-3); Camera v1 BGR {:.6} vs fixture {:.6}",
            rows[at].name, ours[bgr], rows[bgr].combined
        ),
    )
}

fn permutation() -> Verdict {
    let rows = load_table8_fixture();
    let test = permutation_test_corr_diff(
        &column(&rows, |r| r.combined),
        &column(&rows, |r| r.mae_steer),
        &column(&rows, |r| r.dpi),
        10_000,
        0,
    )
    .unwrap();
    let pass = (test.mean_effect + 0.05).abs() <= 0.03 && (test.p_value - 0.16).abs() <= 0.07;
    verdict(pass, format!("mean effect {:.4}, p {:.4}", test.mean_effect, test.p_value))
}

fn gradients() -> Verdict {
    let start = Instant::now();
    let cfg = NetworkConfig::shrunken(3);
    let (mut worst, mut checked, mut skipped, mut at) = (0.0f64, 0, 0, String::new());
    for seed in 0..20 {
        let r = gradient_check_seeded(&cfg, 8, seed).unwrap();
        checked += r.checked;
        skipped += r.skipped;
        if r.max_error >= worst {
            worst = r.max_error;
            at = format!("seed {seed} {}", r.worst);
        }
    }
    let elapsed = start.elapsed();
    verdict(
        worst < 1e-4 && elapsed < Duration::from_secs(30) && skipped < checked,
        format!("20 seeds, {checked} scalars, max relative error {worst:.2e} ({at}), {elapsed:.1?}"),
    )
}

fn shapes() -> Verdict {
    let cfg = NetworkConfig::pilotnet(3);
    let chain: Vec<(usize, usize)> = cfg.geometry().unwrap().iter().map(|g| (g.out_height, g.out_width)).collect();
    let width = cfg.flatten_width().unwrap();
    let pass = chain == [(31, 127), (14, 62), (5, 29), (1, 13), (1, 11)] && width == 704;
    let shown: Vec<String> = chain.iter().map(|(h, w)| format!("{h}x{w}")).collect();
    verdict(pass, format!("{} -> flatten {width}", shown.join(" -> ")))
}

fn tiny_set(n: usize, rng: &mut Rng) -> Dataset {
    let mut d = Dataset::new([1, 12, 20]);
    for _ in 0..n {
        let level = rng.below(256) as u8;
        let px: Vec<u8> = (0..240).map(|i| level.wrapping_add((i % 7) as u8 * 3)).collect();
        d.push(&px, (f32::from(level) / 255.0 - 0.5) * 10.0).unwrap();
    }
    d
}

fn training() -> Verdict {
    let net = NetworkConfig::shrunken(1);
    let data = tiny_set(32, &mut Rng::new(7));
    // One full-batch step per epoch.
    let overfit_cfg = TrainConfig {
        batch_size: 32,
        max_epochs: 200,
        patience: 199,
        ..TrainConfig::default()
    };
    let overfit = train_with(&data, &net, &overfit_cfg, |_, _| Ok(0.0), |_| {}).unwrap();
    let final_mae = overfit.history.last().unwrap().train_mae;

    let plateau_cfg = TrainConfig {
        batch_size: 8,
        ..TrainConfig::default()
    };
    let forced = |epoch: usize| if epoch < 4 { 10.0 - epoch as f64 } else { 7.0 };
    let stop = train_with(&data, &net, &plateau_cfg, |e, _| Ok(forced(e)), |_| {}).unwrap();
    let window = stop.history.len() + 1 - stop.best_epoch;
    let pass = final_mae < 0.5 && stop.stopped_early && window == plateau_cfg.patience + 1;
    verdict(
        pass,
        format!(
            "train MAE {final_mae:.3} after 200 steps; plateau run best epoch {}, stopped at epoch {} ({window} epochs from best through stop, patience {})",
            stop.best_epoch,
            stop.history.len(),
            plateau_cfg.patience
        ),
    )
}

/// Largest distance of the centerline from the starting tangent line.
fn bend(track: &Track) -> f64 {
    let p0 = &track.points[0];
    let (s, c) = p0.heading.sin_cos();
    track.points.iter().map(|p| ((p.y - p0.y) * c - (p.x - p0.x) * s).abs()).fold(0.0, f64::max)
}

fn closed_loop() -> Verdict {
    let start = Instant::now();
    let cfg = SimConfig {
        speed_fraction: 1.0,
        ..SimConfig::default()
    };
    let (mut interventions, mut worst, mut zero_clean, mut curved) = (0, 0.0f64, 0, 0);
    for i in 0..50u64 {
        let track = gen_track_with(&TrackConfig::default(), 1000 + i, 1000.0).unwrap();
        let log = run_episode(&mut ReferenceDriver::new(&cfg), &track, &cfg, i).unwrap();
        interventions += log.interventions.len();
        let mut hint = 0;
        for p in &log.trajectory {
            let proj = track.project(p.x, p.y, hint);
            hint = proj.index;
            worst = worst.max(proj.lateral.abs());
        }
        if bend(&track) > cfg.intervention_lateral {
            curved += 1;
            let zero = run_episode(&mut ConstantPolicy(0.0), &track, &cfg, i).unwrap();
            if zero.interventions.is_empty() {
                zero_clean += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    verdict(
        interventions == 0 && worst < 0.3 && zero_clean == 0 && elapsed < Duration::from_secs(120),
        format!(
            "reference: {interventions} interventions, max offset {worst:.3} m on 50 x 1 km; constant zero clean on {zero_clean} of {curved} curved tracks; {elapsed:.1?}"
        ),
    )
}

fn study_signs() -> Verdict {
    let cfg = StudyConfig::compact(0).unwrap();
    let levels = [0.0, 0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5];
    let conditions = graded_conditions(cfg.seed, cfg.models, &levels, 2);
    match runner::run_study(&conditions, &cfg) {
        Ok((report, _)) => {
            let steer = report.correlations.get(Metric::MaeSteer);
            let w_off = report.correlations.get(Metric::WOffPolicy);
            verdict(
                steer < 0.0 && w_off < 0.0,
                format!(
                    "{} deployments: r(DpI, mae_steer) {steer:.3}, r(DpI, w_off_policy) {w_off:.3}",
                    report.records.len()
                ),
            )
        }
        Err(e) => verdict(false, format!("study failed: {e}")),
    }
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path());
    let d = |run: &str, rep: usize| dir.path().join(format!("{run}{rep}"));
    for (rep, threads) in [(0, 1), (1, 2)] {
        run_ok(&["collect", "--config", s(&cfg), "--tracks", "3", "--out", s(&d("collect", rep))], threads);
        run_ok(&["train", "--config", s(&cfg), "--data", s(&d("collect", rep)), "--out", s(&d("train", rep))], threads);
        let ck = d("train", rep).join("checkpoint");
        run_ok(&["drive", "--config", s(&cfg), "--checkpoint", s(&ck), "--out", s(&d("drive", rep))], threads);
        run_ok(&["study", "--config", s(&cfg), "--out", s(&d("study", rep))], threads);
    }
    let diffs: Vec<String> = ["collect", "train", "drive", "study"]
        .iter()
        .filter_map(|run| first_difference(&d(run, 0), &d(run, 1)).map(|f| format!("{run}: {f}")))
        .collect();
    let detail = if diffs.is_empty() {
        "collect, train, drive, study byte-identical across two runs".into()
    } else {
        diffs.join("; ")
    };
    verdict(diffs.is_empty(), detail)
}

fn unit_oracles() -> Verdict {
    let w = whiteness(&[0.0, 1.0, 2.0, 3.0], 0.1).unwrap();
    let depth = encode_depth(10.0).unwrap();
    let d = dpi(8442.5, 2, DPI_CAP_M).unwrap();
    verdict(
        w == 10.0 && depth == 204 && d == 4221.25,
        format!("whiteness {w}, encode_depth(10) {depth}, dpi {d}"),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("published correlation reproduction", table3),
        ("combined-column calibration", combined_calibration),
        ("permutation test", permutation),
        ("gradient correctness", gradients),
        ("shape contract", shapes),
        ("training sanity", training),
        ("closed-loop oracle", closed_loop),
        ("synthetic correlation signs", study_signs),
        ("determinism", determinism),
        ("metric unit oracles", unit_oracles),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let v = check();
        if !v.pass {
            failed += 1;
        }
        println!("{} {:>2} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, i + 1, v.detail);
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
