//! Human- and machine-readable study outputs.

use std::fmt::Write as _;
use std::path::Path;

use roadlab_core::metrics::CorrDiffTest;
use roadlab_core::study::{CorrelationTable, Metric, StudyReport};

use crate::formats::{write_bytes, write_csv, write_deployments, Result};

/// Published correlations with DpI, in [`Metric::ALL`] order.
pub const PUBLISHED_TABLE3: [(Metric, f64); 7] = [
    (Metric::MaeTrajectory, -0.56),
    (Metric::FailureRate, -0.06),
    (Metric::WOnPolicy, -0.56),
    (Metric::WEffective, -0.67),
    (Metric::WOffPolicy, -0.72),
    (Metric::MaeSteer, -0.76),
    (Metric::Combined, -0.82),
];

pub fn write_correlations(path: &Path, table: &CorrelationTable) -> Result<()> {
    write_csv(
        path,
        &["metric", "pearson_r"],
        table.entries.iter().map(|(m, r)| [m.as_str().to_string(), format!("{r}")]),
    )
}

pub fn describe_test(t: &CorrDiffTest, n: usize) -> String {
    format!(
        "combined vs mae_steer: observed difference {:.4}, mean effect {:.4}, p = {:.4} ({n} bootstrap resamples of deployments)",
        t.observed, t.mean_effect, t.p_value
    )
}

pub fn study_markdown(report: &StudyReport, permutations: usize) -> String {
    let mut s = String::from("# Synthetic correlation study\n\n## Conditions\n\n| id | condition | status |\n|---|---|---|\n");
    for c in &report.conditions {
        let status = report
            .faulted
            .iter()
            .find(|(id, _)| *id == c.id)
            .map_or_else(|| "ok".to_string(), |(_, m)| format!("faulted: {m}"));
        let _ = writeln!(s, "| {} | {} | {status} |", c.id, c.describe());
    }
    s.push_str("\n## Deployments\n\n| name | DpI (m) | MAE traj (m) | failure | W eff | W on | MAE steer | W off | combined |\n|---|---|---|---|---|---|---|---|---|\n");
    for r in &report.records {
        let _ = writeln!(
            s,
            "| {} | {:.2} | {:.4} | {:.2}% | {:.2} | {:.2} | {:.2} | {:.2} | {:.6} |",
            r.name,
            r.dpi,
            r.mae_trajectory,
            100.0 * r.failure_rate,
            r.w_effective,
            r.w_on_policy,
            r.mae_steer,
            r.w_off_policy,
            r.combined
        );
    }
    s.push_str("\n## Pearson correlation with DpI\n\n| metric | r |\n|---|---|\n");
    for (m, r) in report.correlations.entries {
        let _ = writeln!(s, "| {} | {r:.3} |", m.as_str());
    }
    let _ = writeln!(
        s,
        "\n## Combined score vs MAE\n\n{}\n\nThe resampling scheme is a reconstruction: deployments are bootstrapped and the signed difference of the two correlations is recomputed on each draw.",
        describe_test(&report.combined_vs_mae, permutations)
    );
    if !report.faulted.is_empty() {
        s.push_str("\n## Excluded conditions\n\n");
        for (id, m) in &report.faulted {
            let _ = writeln!(s, "- {id}: {m}");
        }
    }
    s
}

/// `study_report.md`, `deployments.csv` and `correlations.csv` in `dir`.
pub fn write_study(dir: &Path, report: &StudyReport, permutations: usize) -> Result<()> {
    write_bytes(&dir.join("study_report.md"), study_markdown(report, permutations).as_bytes())?;
    write_deployments(&dir.join("deployments.csv"), &report.records)?;
    write_correlations(&dir.join("correlations.csv"), &report.correlations)
}
