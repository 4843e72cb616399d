//! Label-sequence metrics.

use crate::error::{Error, Result};

fn matched_fraction(a: &[usize], b: &[usize], what: &str) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "{what}: sequence lengths {} and {} differ",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::Shape(format!("{what}: empty sequences")));
    }
    let hits = a.iter().zip(b).filter(|(x, y)| x == y).count();
    Ok(hits as f64 / a.len() as f64)
}

/// Fraction of positions where `predictions` equals `truth`.
pub fn accuracy(predictions: &[usize], truth: &[usize]) -> Result<f64> {
    matched_fraction(predictions, truth, "accuracy")
}

/// Fraction of positions where the two prediction sequences match. Ground
/// truth is not involved; both sequences must be computed on the same test
/// samples in the same order.
pub fn agreement(thief_predictions: &[usize], victim_predictions: &[usize]) -> Result<f64> {
    matched_fraction(thief_predictions, victim_predictions, "agreement")
}

/// Spearman rank correlation with midrank tie handling.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::Shape(format!(
            "spearman: lengths {} and {} differ",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(Error::UndefinedMetric(
            "spearman needs at least 2 observations".into(),
        ));
    }
    let rx = midranks(xs)?;
    let ry = midranks(ys)?;
    pearson(&rx, &ry)
}

fn midranks(vs: &[f64]) -> Result<Vec<f64>> {
    if vs.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericInput("spearman input not finite".into()));
    }
    let mut order: Vec<usize> = (0..vs.len()).collect();
    order.sort_by(|&a, &b| vs[a].partial_cmp(&vs[b]).unwrap());
    let mut ranks = vec![0.0; vs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && vs[order[j + 1]] == vs[order[i]] {
            j += 1;
        }
        // Tied block [i, j] shares the average rank (1-based).
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    Ok(ranks)
}

fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedMetric(
            "correlation undefined for constant sequence".into(),
        ));
    }
    Ok(sxy / (sxx * syy).sqrt())
}
