mod common;

use clap::CommandFactory;
use common::{first_difference, quick_config, run, run_ok, s};
use roadlab::cli::Cli;

#[test]
fn reproduce_table3_prints_seven_correlations() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_ok(&["reproduce-table3", "--out", s(dir.path())], 1);
    let stdout = String::from_utf8(out.stdout).unwrap();
    for metric in [
        "mae_trajectory",
        "failure_rate",
        "w_on_policy",
        "w_effective",
        "w_off_policy",
        "mae_steer",
        "combined",
    ] {
        let rows = stdout.lines().filter(|l| {
            let mut words = l.split_whitespace();
            words.next() == Some(metric) && words.next().is_some_and(|r| r.parse::<f64>().is_ok())
        });
        assert_eq!(rows.count(), 1, "{metric}\n{stdout}");
    }
    assert!(stdout.contains("-0.760"), "{stdout}");
    assert!(dir.path().join("summary.csv").is_file());
    assert!(dir.path().join("config.txt").is_file());
    assert_eq!(std::fs::read_to_string(dir.path().join("correlations.csv")).unwrap().lines().count(), 8);
}

#[test]
fn drive_with_missing_checkpoint_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("no-such-checkpoint");
    let out = run(&["drive", "--checkpoint", s(&missing), "--out", s(&dir.path().join("run"))], 1);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains(s(&missing)));
}

#[test]
fn collect_twice_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_ok(&["collect", "--config", s(&cfg), "--seed", "7", "--out", s(&a)], 1);
    run_ok(&["collect", "--config", s(&cfg), "--seed", "7", "--out", s(&b)], 2);
    assert_eq!(first_difference(&a, &b), None);
    assert!(a.join("logs/000/frames/000000.tnsr").is_file());
    assert!(a.join("tracks/001/track.csv").is_file());
    let c = dir.path().join("c");
    run_ok(&["collect", "--config", s(&cfg), "--seed", "8", "--out", s(&c)], 1);
    assert!(first_difference(&a, &c).is_some());
}

#[test]
fn help_lists_every_flag_of_every_subcommand() {
    let cli = Cli::command();
    let subcommands: Vec<_> = cli.get_subcommands().collect();
    assert_eq!(subcommands.len(), 7);
    for sub in subcommands {
        let out = run_ok(&[sub.get_name(), "--help"], 1);
        let help = String::from_utf8(out.stdout).unwrap();
        for arg in sub.get_arguments() {
            if let Some(long) = arg.get_long() {
                assert!(help.contains(&format!("--{long}")), "{} --help lacks --{long}", sub.get_name());
            }
        }
        for common in ["--config", "--seed", "--out"] {
            assert!(help.contains(common), "{} --help lacks {common}", sub.get_name());
        }
    }
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["no-such-subcommand"], 1).status.code(), Some(1));
    assert_eq!(run(&["gen-track", "--tracks", "many"], 1).status.code(), Some(1));
    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "train.learning_rate = 1\n").unwrap();
    let out = run(&["gen-track", "--config", s(&bad), "--out", s(&dir.path().join("x"))], 1);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("train.learning_rate"));
    let out = run(&["drive", "--policy", "autopilot", "--out", s(&dir.path().join("y"))], 1);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(run(&["--help"], 1).status.code(), Some(0));
}

#[test]
fn train_on_a_missing_dataset_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &["train", "--data", s(&dir.path().join("nothing")), "--out", s(&dir.path().join("t"))],
        1,
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path());
    let out = dir.path().join("g");
    run_ok(
        &["gen-track", "--config", s(&cfg), "--tracks", "3", "--length", "150", "--seed", "5", "--out", s(&out)],
        1,
    );
    let resolved = std::fs::read_to_string(out.join("config.txt")).unwrap();
    for line in ["track.count=3", "track.length=150", "seed=5", "rig=compact"] {
        assert!(resolved.lines().any(|l| l.replace(' ', "") == line), "{line} missing from\n{resolved}");
    }
    assert_eq!(std::fs::read_to_string(out.join("summary.csv")).unwrap().lines().count(), 4);
    assert!(out.join("tracks/002/track.csv").is_file());
}

#[test]
fn every_subcommand_writes_config_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(dir.path());
    let p = |name: &str| dir.path().join(name);
    run_ok(&["gen-track", "--config", s(&cfg), "--out", s(&p("gen"))], 1);
    run_ok(&["collect", "--config", s(&cfg), "--tracks", "3", "--out", s(&p("col"))], 1);
    run_ok(&["train", "--config", s(&cfg), "--data", s(&p("col")), "--out", s(&p("tr"))], 1);
    let ck = p("tr").join("checkpoint");
    run_ok(
        &["eval-off", "--config", s(&cfg), "--checkpoint", s(&ck), "--data", s(&p("col")), "--out", s(&p("ev"))],
        1,
    );
    run_ok(&["drive", "--config", s(&cfg), "--checkpoint", s(&ck), "--out", s(&p("dr"))], 1);
    run_ok(&["drive", "--config", s(&cfg), "--policy", "zero", "--out", s(&p("zero"))], 1);
    run_ok(&["reproduce-table3", "--out", s(&p("t3"))], 1);
    for run in ["gen", "col", "tr", "ev", "dr", "zero", "t3"] {
        assert!(p(run).join("config.txt").is_file(), "{run}");
        assert!(p(run).join("summary.csv").is_file(), "{run}");
    }
    // The checkpoint remembers its rig, so evaluation needs no config.
    run_ok(&["eval-off", "--checkpoint", s(&ck), "--data", s(&p("col")), "--out", s(&p("ev2"))], 1);
    assert_eq!(
        std::fs::read(p("ev").join("summary.csv")).unwrap(),
        std::fs::read(p("ev2").join("summary.csv")).unwrap()
    );
    let zero = std::fs::read_to_string(p("zero").join("summary.csv")).unwrap();
    let interventions: usize = zero.lines().nth(1).unwrap().split(',').nth(2).unwrap().parse().unwrap();
    assert!(interventions > 0, "{zero}");
}
