//! Directional trend checks over result records.
//!
//! These encode the lab's expected findings with pinned thresholds; the CLI
//! `check` subcommand exits nonzero when any of them fails, and the
//! acceptance suite asserts them directly.

use crate::error::{Error, Result};
use crate::evalkit::spearman;
use crate::experiment::runner::ResultRecord;

/// Minimum mean-agreement gap, in probability points.
pub const AGREEMENT_GAP: f64 = 0.05;
/// A budget sweep may contain at most one inversion, no deeper than this.
pub const BUDGET_INVERSION_TOLERANCE: f64 = 0.01;

/// Outcome of one trend check.
#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn agreements<'a>(
    records: &'a [ResultRecord],
    victim: (&str, &str),
    thief: (&str, &str),
    budget: usize,
) -> Vec<&'a ResultRecord> {
    records
        .iter()
        .filter(|r| {
            r.victim_spec == victim.0
                && r.victim_mode == victim.1
                && r.thief_spec == thief.0
                && r.thief_mode == thief.1
                && r.budget == budget
        })
        .collect()
}

fn mean_agreement(
    records: &[ResultRecord],
    victim: (&str, &str),
    thief: (&str, &str),
    budget: usize,
) -> Result<f64> {
    let rows = agreements(records, victim, thief, budget);
    if rows.is_empty() {
        return Err(Error::Data(format!(
            "no records for victim {victim:?} thief {thief:?} budget {budget}"
        )));
    }
    Ok(mean(
        &rows.iter().map(|r| r.thief_agreement).collect::<Vec<_>>(),
    ))
}

/// Victims sharing a strong backbone with the attacker are extracted with
/// higher agreement: the strong linear-probed victim must beat the shallow
/// fully-fine-tuned victim by [`AGREEMENT_GAP`] under the strong probe
/// thief, and agreement must rise with victim backbone strength.
pub fn check_victim_side(records: &[ResultRecord], budget: usize) -> Result<CheckOutcome> {
    let thief = ("strong", "probe");
    let strong_lp = mean_agreement(records, ("strong", "probe"), thief, budget)?;
    let shallow_ft = mean_agreement(records, ("shallow", "finetune"), thief, budget)?;
    let shallow_lp = mean_agreement(records, ("shallow", "probe"), thief, budget)?;
    let mid_lp = mean_agreement(records, ("mid", "probe"), thief, budget)?;

    let gap_ok = strong_lp - shallow_ft >= AGREEMENT_GAP;
    let ordering_ok = shallow_lp <= mid_lp && mid_lp <= strong_lp;
    Ok(CheckOutcome {
        name: "victim-side trend",
        pass: gap_ok && ordering_ok,
        detail: format!(
            "strong-probe {strong_lp:.4} vs shallow-finetune {shallow_ft:.4} (gap {:.4}, need >= {AGREEMENT_GAP}); \
             probe ordering shallow {shallow_lp:.4} <= mid {mid_lp:.4} <= strong {strong_lp:.4}: {ordering_ok}",
            strong_lp - shallow_ft
        ),
    })
}

/// Against the strong victim, the strong-backbone thief must beat the
/// shallow-backbone thief by [`AGREEMENT_GAP`].
pub fn check_thief_side(records: &[ResultRecord], budget: usize) -> Result<CheckOutcome> {
    let victim = ("strong", "probe");
    let strong = mean_agreement(records, victim, ("strong", "probe"), budget)?;
    let shallow = mean_agreement(records, victim, ("shallow", "probe"), budget)?;
    let pass = strong - shallow >= AGREEMENT_GAP;
    Ok(CheckOutcome {
        name: "thief-side trend",
        pass,
        detail: format!(
            "strong thief {strong:.4} vs shallow thief {shallow:.4} (gap {:.4}, need >= {AGREEMENT_GAP})",
            strong - shallow
        ),
    })
}

/// Backbones whose features separate the victim classes better are stolen
/// with higher agreement: Spearman correlation between backbone silhouette
/// and agreement across the probe-victim tiers and seeds must be positive.
pub fn check_separability(records: &[ResultRecord], budget: usize) -> Result<CheckOutcome> {
    let thief = ("strong", "probe");
    let mut sil = Vec::new();
    let mut agr = Vec::new();
    for tier in ["shallow", "mid", "strong"] {
        let rows = agreements(records, (tier, "probe"), thief, budget);
        if rows.is_empty() {
            return Err(Error::Data(format!(
                "no probe records for tier {tier} at budget {budget}"
            )));
        }
        for r in rows {
            sil.push(r.backbone_silhouette);
            agr.push(r.thief_agreement);
        }
    }
    let rho = spearman(&sil, &agr)?;
    Ok(CheckOutcome {
        name: "separability correlation",
        pass: rho > 0.0,
        detail: format!("spearman(silhouette, agreement) = {rho:.4} over {} points", sil.len()),
    })
}

/// Mean agreement for the strong-victim/strong-thief cell must be
/// non-decreasing in the budget, allowing one inversion of at most
/// [`BUDGET_INVERSION_TOLERANCE`].
pub fn check_budget_monotonic(records: &[ResultRecord]) -> Result<CheckOutcome> {
    let mut budgets: Vec<usize> = records
        .iter()
        .filter(|r| {
            r.victim_spec == "strong"
                && r.victim_mode == "probe"
                && r.thief_spec == "strong"
                && r.thief_mode == "probe"
        })
        .map(|r| r.budget)
        .collect();
    budgets.sort_unstable();
    budgets.dedup();
    if budgets.len() < 2 {
        return Err(Error::Data(
            "budget check needs records at two or more budgets".into(),
        ));
    }
    let means: Vec<f64> = budgets
        .iter()
        .map(|&b| mean_agreement(records, ("strong", "probe"), ("strong", "probe"), b))
        .collect::<Result<_>>()?;

    let mut inversions = 0usize;
    let mut worst: f64 = 0.0;
    for w in means.windows(2) {
        if w[1] < w[0] {
            inversions += 1;
            worst = worst.max(w[0] - w[1]);
        }
    }
    let pass = inversions == 0 || (inversions == 1 && worst <= BUDGET_INVERSION_TOLERANCE);
    Ok(CheckOutcome {
        name: "budget monotonicity",
        pass,
        detail: format!(
            "means over budgets {budgets:?}: {:?} ({inversions} inversions, worst {worst:.4})",
            means.iter().map(|m| (m * 1e4).round() / 1e4).collect::<Vec<_>>()
        ),
    })
}

/// Runs every check that the given records can support.
pub fn run_all(records: &[ResultRecord], budget: usize) -> Vec<CheckOutcome> {
    let mut outcomes = Vec::new();
    for result in [
        check_victim_side(records, budget),
        check_thief_side(records, budget),
        check_separability(records, budget),
    ] {
        match result {
            Ok(outcome) => outcomes.push(outcome),
            Err(e) => outcomes.push(CheckOutcome {
                name: "missing data",
                pass: false,
                detail: e.to_string(),
            }),
        }
    }
    // Budget monotonicity only applies when several budgets are present.
    let distinct_budgets: std::collections::HashSet<usize> =
        records.iter().map(|r| r.budget).collect();
    if distinct_budgets.len() > 1 {
        match check_budget_monotonic(records) {
            Ok(outcome) => outcomes.push(outcome),
            Err(e) => outcomes.push(CheckOutcome {
                name: "budget monotonicity",
                pass: false,
                detail: e.to_string(),
            }),
        }
    }
    outcomes
}
