//! Result aggregation: per-cell mean/std tables and long-form plot data.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::experiment::runner::ResultRecord;

pub const SUMMARY_HEADER: &str = "victim_spec,victim_mode,thief_spec,thief_mode,strategy,\
budget,n_seeds,mean_victim_accuracy,std_victim_accuracy,mean_thief_accuracy,\
std_thief_accuracy,mean_agreement,std_agreement,mean_silhouette,std_silhouette";

pub const PLOTDATA_HEADER: &str =
    "victim_spec,victim_mode,thief_spec,thief_mode,strategy,budget,seed,metric,value";

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation; 0 for a single observation.
fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

type GroupKey = (String, String, String, String, String, usize);

fn group(records: &[ResultRecord]) -> BTreeMap<GroupKey, Vec<&ResultRecord>> {
    let mut groups: BTreeMap<GroupKey, Vec<&ResultRecord>> = BTreeMap::new();
    for r in records {
        groups
            .entry((
                r.victim_spec.clone(),
                r.victim_mode.clone(),
                r.thief_spec.clone(),
                r.thief_mode.clone(),
                r.strategy.clone(),
                r.budget,
            ))
            .or_default()
            .push(r);
    }
    groups
}

/// Mean +- std per grid cell over seeds, as CSV text.
pub fn summarize(records: &[ResultRecord]) -> Result<String> {
    if records.is_empty() {
        return Err(Error::Data("no records to summarize".into()));
    }
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for ((vs, vm, ts, tm, strat, budget), rows) in group(records) {
        let col = |f: fn(&ResultRecord) -> f64| -> Vec<f64> { rows.iter().map(|r| f(r)).collect() };
        let va = col(|r| r.victim_accuracy);
        let ta = col(|r| r.thief_accuracy);
        let ag = col(|r| r.thief_agreement);
        let si = col(|r| r.backbone_silhouette);
        let _ = writeln!(
            out,
            "{vs},{vm},{ts},{tm},{strat},{budget},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            rows.len(),
            mean(&va),
            std_dev(&va),
            mean(&ta),
            std_dev(&ta),
            mean(&ag),
            std_dev(&ag),
            mean(&si),
            std_dev(&si),
        );
    }
    Ok(out)
}

/// Long-form per-seed metric rows for external plotting tools.
pub fn plotdata(records: &[ResultRecord]) -> Result<String> {
    if records.is_empty() {
        return Err(Error::Data("no records to export".into()));
    }
    let mut sorted: Vec<&ResultRecord> = records.iter().collect();
    sorted.sort_by_key(|r| {
        (
            r.victim_spec.clone(),
            r.victim_mode.clone(),
            r.thief_spec.clone(),
            r.thief_mode.clone(),
            r.strategy.clone(),
            r.budget,
            r.seed,
        )
    });
    let mut out = String::from(PLOTDATA_HEADER);
    out.push('\n');
    for r in sorted {
        for (metric, value) in [
            ("victim_accuracy", r.victim_accuracy),
            ("thief_accuracy", r.thief_accuracy),
            ("agreement", r.thief_agreement),
            ("silhouette", r.backbone_silhouette),
        ] {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{metric},{value:.6}",
                r.victim_spec, r.victim_mode, r.thief_spec, r.thief_mode, r.strategy, r.budget,
                r.seed,
            );
        }
    }
    Ok(out)
}

pub fn write_summary(records: &[ResultRecord], path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, summarize(records)?)?;
    Ok(())
}

pub fn write_plotdata(records: &[ResultRecord], path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, plotdata(records)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(vs: &str, seed: u64, agreement: f64) -> ResultRecord {
        ResultRecord {
            victim_spec: vs.into(),
            victim_mode: "probe".into(),
            thief_spec: "strong".into(),
            thief_mode: "probe".into(),
            strategy: "random".into(),
            budget: 500,
            seed,
            victim_accuracy: 0.9,
            thief_accuracy: 0.8,
            thief_agreement: agreement,
            backbone_silhouette: 0.4,
        }
    }

    #[test]
    fn twelve_records_over_three_seeds_give_four_rows() {
        let mut records = Vec::new();
        for vs in ["shallow", "mid", "strong", "extra"] {
            for seed in 1..=3 {
                records.push(record(vs, seed, 0.5));
            }
        }
        let text = summarize(&records).unwrap();
        assert_eq!(text.lines().count(), 5); // header + 4 groups
    }

    #[test]
    fn summary_mean_matches_hand_computation() {
        let records = vec![record("strong", 1, 0.5), record("strong", 2, 0.7)];
        let text = summarize(&records).unwrap();
        let row = text.lines().nth(1).unwrap();
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields[6], "2"); // n_seeds
        assert_eq!(fields[11], "0.600000"); // mean agreement of {0.5, 0.7}
        // std = sqrt(((0.5-0.6)^2 + (0.7-0.6)^2) / 1) = 0.141421...
        assert_eq!(fields[12], "0.141421");
    }

    #[test]
    fn summary_matches_independent_spreadsheet_style_recomputation() {
        // Fixture with uneven values, recomputed by independent loops.
        let agreements = [0.41, 0.52, 0.63, 0.49, 0.55];
        let records: Vec<ResultRecord> = agreements
            .iter()
            .enumerate()
            .map(|(i, &a)| record("mid", i as u64, a))
            .collect();

        let n = agreements.len() as f64;
        let hand_mean = agreements.iter().sum::<f64>() / n;
        let hand_var = agreements
            .iter()
            .map(|a| (a - hand_mean) * (a - hand_mean))
            .sum::<f64>()
            / (n - 1.0);

        let text = summarize(&records).unwrap();
        let fields: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(fields[11], format!("{hand_mean:.6}"));
        assert_eq!(fields[12], format!("{:.6}", hand_var.sqrt()));
    }

    #[test]
    fn plotdata_is_long_form() {
        let records = vec![record("strong", 1, 0.5), record("strong", 2, 0.7)];
        let text = plotdata(&records).unwrap();
        // header + 2 records x 4 metrics
        assert_eq!(text.lines().count(), 9);
        assert!(text.lines().nth(1).unwrap().contains("victim_accuracy"));
    }

    #[test]
    fn empty_records_are_a_usage_error() {
        assert!(summarize(&[]).is_err());
        assert!(plotdata(&[]).is_err());
    }

    #[test]
    fn single_seed_std_is_zero() {
        let text = summarize(&[record("strong", 1, 0.5)]).unwrap();
        let fields: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(fields[12], "0.000000");
    }
}
