//! Report persistence: a JSON round-trip format plus tab-separated exports
//! ready for plotting tools.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::Error;
use crate::harness::eval::{EpisodeResult, MetricsReport};
use crate::Result;

pub fn reports_to_json(reports: &[MetricsReport]) -> Result<String> {
    serde_json::to_string_pretty(reports)
        .map_err(|e| Error::config(format!("report serialization: {e}")))
}

pub fn reports_from_json(text: &str) -> Result<Vec<MetricsReport>> {
    serde_json::from_str(text).map_err(|e| Error::config(format!("report parse: {e}")))
}

pub fn save_reports(reports: &[MetricsReport], path: &Path) -> Result<()> {
    fs::write(path, reports_to_json(reports)?)?;
    Ok(())
}

pub fn load_reports(path: &Path) -> Result<Vec<MetricsReport>> {
    reports_from_json(&fs::read_to_string(path)?)
}

fn header(prefix: &str, reports: &[MetricsReport]) -> String {
    let mut line = String::from(prefix);
    for r in reports {
        line.push('\t');
        line.push_str(&r.policy);
    }
    line.push('\n');
    line
}

/// One row per step count; one column per policy. Policies with a shorter
/// step limit leave trailing cells empty.
pub fn completion_cdf_tsv(reports: &[MetricsReport]) -> String {
    let rows = reports
        .iter()
        .map(|r| r.completion_cdf.len())
        .max()
        .unwrap_or(0);
    let mut out = header("step", reports);
    for s in 0..rows {
        let _ = write!(out, "{s}");
        for r in reports {
            match r.completion_cdf.get(s) {
                Some(v) => {
                    let _ = write!(out, "\t{v}");
                }
                None => out.push('\t'),
            }
        }
        out.push('\n');
    }
    out
}

/// One row per on-target count at mission end; one column per policy.
pub fn on_target_pmf_tsv(reports: &[MetricsReport]) -> String {
    let rows = reports
        .iter()
        .map(|r| r.on_target_pmf.len())
        .max()
        .unwrap_or(0);
    let mut out = header("on_target", reports);
    for c in 0..rows {
        let _ = write!(out, "{c}");
        for r in reports {
            match r.on_target_pmf.get(c) {
                Some(v) => {
                    let _ = write!(out, "\t{v}");
                }
                None => out.push('\t'),
            }
        }
        out.push('\n');
    }
    out
}

/// One row per policy with the headline numbers.
pub fn summary_tsv(reports: &[MetricsReport]) -> String {
    let mut out = String::from(
        "policy\tepisodes\tsuccesses\tsuccess\tci_low\tci_high\tmean_completion_step\t\
         mean_on_target\tmean_drone_return\tmean_decision_micros\n",
    );
    for r in reports {
        let completion = r
            .mean_completion_step
            .map_or(String::new(), |v| v.to_string());
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.policy,
            r.episodes,
            r.successes,
            r.success,
            r.success_ci_low,
            r.success_ci_high,
            completion,
            r.mean_on_target,
            r.mean_drone_return,
            r.mean_decision_micros,
        );
    }
    out
}

/// Flat per-step rollout log: one row per episode, step, and drone.
/// Positions are those after the step's move; `step` is 1-based.
pub fn traces_tsv(results: &[EpisodeResult]) -> String {
    let mut out = String::from("episode\tstep\tdrone\tx\ty\treward\ton_target\n");
    for (e, result) in results.iter().enumerate() {
        for (s, record) in result.steps.iter().enumerate() {
            for (d, (pos, reward)) in record.positions.iter().zip(&record.rewards).enumerate() {
                let _ = writeln!(
                    out,
                    "{e}\t{}\t{d}\t{}\t{}\t{reward}\t{}",
                    s + 1,
                    pos.x,
                    pos.y,
                    record.on_target,
                );
            }
        }
    }
    out
}

/// Writes `summary.tsv`, `completion_cdf.tsv`, and `on_target.tsv` into
/// `dir`, creating it if needed.
pub fn write_plot_exports(reports: &[MetricsReport], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("summary.tsv"), summary_tsv(reports))?;
    fs::write(dir.join("completion_cdf.tsv"), completion_cdf_tsv(reports))?;
    fs::write(dir.join("on_target.tsv"), on_target_pmf_tsv(reports))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::eval::{compare, evaluate};
    use crate::harness::policy::PolicySpec;
    use crate::harness::Scenario;

    fn sample_reports() -> Vec<MetricsReport> {
        let mut sc = Scenario::default();
        sc.map.m = 10;
        sc.map.k = 2;
        sc.window = 10;
        sc.step_limit = 12;
        sc.seed = 5;
        compare(
            &[
                PolicySpec::Lookahead { horizon: 1 },
                PolicySpec::Lookahead { horizon: 3 },
            ],
            &sc,
            6,
        )
        .unwrap()
    }

    #[test]
    fn json_round_trips() {
        let reports = sample_reports();
        let text = reports_to_json(&reports).unwrap();
        let back = reports_from_json(&text).unwrap();
        assert_eq!(reports, back);
    }

    #[test]
    fn files_round_trip() {
        let reports = sample_reports();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        save_reports(&reports, &path).unwrap();
        assert_eq!(load_reports(&path).unwrap(), reports);
    }

    #[test]
    fn tsv_exports_have_the_right_shape() {
        let reports = sample_reports();
        let cdf = completion_cdf_tsv(&reports);
        let lines: Vec<&str> = cdf.lines().collect();
        assert_eq!(lines[0], "step\tla(1)\tla(3)");
        assert_eq!(lines.len(), 1 + reports[0].completion_cdf.len());
        for line in &lines {
            assert_eq!(line.matches('\t').count(), 2);
        }

        let pmf = on_target_pmf_tsv(&reports);
        assert_eq!(pmf.lines().count(), 1 + reports[0].on_target_pmf.len());

        let summary = summary_tsv(&reports);
        assert_eq!(summary.lines().count(), 3);
        assert!(summary.starts_with("policy\t"));
    }

    #[test]
    fn plot_exports_land_on_disk() {
        let reports = sample_reports();
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("plots");
        write_plot_exports(&reports, &out).unwrap();
        for name in ["summary.tsv", "completion_cdf.tsv", "on_target.tsv"] {
            assert!(out.join(name).is_file(), "{name} missing");
        }
    }

    #[test]
    fn traces_carry_one_row_per_drone_step() {
        let mut sc = Scenario::default();
        sc.map.m = 10;
        sc.map.k = 2;
        sc.window = 10;
        sc.step_limit = 6;
        let policy = PolicySpec::Lookahead { horizon: 2 }.load(&sc).unwrap();
        let (_, results) = evaluate(&policy, &sc, 3).unwrap();
        let text = traces_tsv(&results);
        let rows: usize = results.iter().map(|r| r.steps.len() * sc.u).sum();
        assert_eq!(text.lines().count(), rows + 1);
        assert!(text.starts_with("episode\tstep\tdrone\tx\ty\treward\ton_target\n"));
        let first = text.lines().nth(1).unwrap();
        assert_eq!(first.split('\t').count(), 7);
    }

    #[test]
    fn malformed_json_is_a_config_error() {
        assert!(reports_from_json("{not json").is_err());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("missing.json");
        assert!(load_reports(&path).is_err());
    }

    #[test]
    fn evaluate_report_survives_the_full_loop() {
        let mut sc = Scenario::default();
        sc.map.m = 10;
        sc.map.k = 2;
        sc.window = 10;
        sc.step_limit = 8;
        let policy = PolicySpec::Lookahead { horizon: 2 }.load(&sc).unwrap();
        let (report, _) = evaluate(&policy, &sc, 4).unwrap();
        let text = reports_to_json(std::slice::from_ref(&report)).unwrap();
        let back = reports_from_json(&text).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0], report);
    }
}
