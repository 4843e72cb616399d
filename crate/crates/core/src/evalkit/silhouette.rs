//! Silhouette separability score.

use crate::error::{Error, Result};
use crate::numcore::{Matrix, RngStream};

/// Silhouette cost is O(n^2); larger inputs are subsampled (seeded, so the
/// score stays deterministic).
pub const SILHOUETTE_SUBSAMPLE_CAP: usize = 2000;

const SUBSAMPLE_SEED: u64 = 0x5117;

/// Mean silhouette score `(b - a) / max(a, b)` over all samples with
/// Euclidean distances. Samples whose class is a singleton score 0.
pub fn silhouette(features: &Matrix, labels: &[usize]) -> Result<f64> {
    if features.rows() != labels.len() {
        return Err(Error::Shape(format!(
            "{} feature rows vs {} labels",
            features.rows(),
            labels.len()
        )));
    }
    if features.rows() < 2 {
        return Err(Error::UndefinedMetric(
            "silhouette needs at least 2 samples".into(),
        ));
    }

    let (features, labels) = if features.rows() > SILHOUETTE_SUBSAMPLE_CAP {
        let mut rng = RngStream::new(SUBSAMPLE_SEED).derive("silhouette-subsample");
        let mut keep = rng.sample_indices(features.rows(), SILHOUETTE_SUBSAMPLE_CAP);
        keep.sort_unstable();
        let f = features.gather_rows(&keep);
        let l: Vec<usize> = keep.iter().map(|&i| labels[i]).collect();
        (f, l)
    } else {
        (features.clone(), labels.to_vec())
    };

    let n = features.rows();
    let classes: usize = labels.iter().copied().max().unwrap_or(0) + 1;
    let mut class_sizes = vec![0usize; classes];
    for &l in &labels {
        class_sizes[l] += 1;
    }
    if class_sizes.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::UndefinedMetric(
            "silhouette needs at least 2 distinct classes".into(),
        ));
    }

    // Full pairwise distances, accumulated per class for each sample.
    let mut total = 0.0;
    let mut class_dist = vec![0.0f64; classes];
    for i in 0..n {
        class_dist.iter_mut().for_each(|d| *d = 0.0);
        let row_i = features.row(i);
        for j in 0..n {
            if i == j {
                continue;
            }
            class_dist[labels[j]] += Matrix::sq_dist(row_i, features.row(j)).sqrt();
        }
        let own = labels[i];
        if class_sizes[own] == 1 {
            // Singleton cluster: scored 0 by convention.
            continue;
        }
        let a = class_dist[own] / (class_sizes[own] - 1) as f64;
        let mut b = f64::INFINITY;
        for c in 0..classes {
            if c != own && class_sizes[c] > 0 {
                b = b.min(class_dist[c] / class_sizes[c] as f64);
            }
        }
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::RngStream;
    use approx::assert_abs_diff_eq;

    #[test]
    fn two_tight_far_clusters_score_high() {
        let mut rng = RngStream::new(4);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..40 {
            let center = if i < 20 { 0.0 } else { 100.0 };
            rows.push(vec![center + 0.01 * rng.normal_f64(), 0.01 * rng.normal_f64()]);
            labels.push(usize::from(i >= 20));
        }
        let m = Matrix::from_rows(&rows).unwrap();
        assert!(silhouette(&m, &labels).unwrap() > 0.9);
    }

    #[test]
    fn random_labels_on_one_blob_score_near_zero() {
        let mut rng = RngStream::new(8);
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|_| (0..3).map(|_| rng.normal_f64()).collect())
            .collect();
        let labels: Vec<usize> = (0..200).map(|_| rng.range_usize(4)).collect();
        let m = Matrix::from_rows(&rows).unwrap();
        let s = silhouette(&m, &labels).unwrap();
        assert!(s.abs() < 0.1, "score {s}");
    }

    #[test]
    fn six_point_case_matches_brute_force() {
        // Hand case: two triangles of 3 points each on a line.
        let coords = [0.0, 1.0, 2.0, 10.0, 11.0, 12.5];
        let labels = [0usize, 0, 0, 1, 1, 1];
        let rows: Vec<Vec<f64>> = coords.iter().map(|&x| vec![x]).collect();
        let m = Matrix::from_rows(&rows).unwrap();

        // Exhaustive oracle: direct double loop over pairwise distances.
        let dist = |a: f64, b: f64| (a - b).abs();
        let mut expected = 0.0;
        for i in 0..6 {
            let (mut same, mut other) = (0.0, 0.0);
            for j in 0..6 {
                if j == i {
                    continue;
                }
                if labels[j] == labels[i] {
                    same += dist(coords[i], coords[j]);
                } else {
                    other += dist(coords[i], coords[j]);
                }
            }
            let a = same / 2.0;
            let b = other / 3.0;
            expected += (b - a) / a.max(b);
        }
        expected /= 6.0;

        assert_abs_diff_eq!(silhouette(&m, &labels).unwrap(), expected, epsilon = 1e-15);
    }

    #[test]
    fn invariant_under_rotation_and_translation() {
        let mut rng = RngStream::new(15);
        let rows: Vec<Vec<f64>> = (0..60)
            .map(|i| {
                let c = (i % 3) as f64 * 5.0;
                vec![
                    c + rng.normal_f64(),
                    rng.normal_f64(),
                    c * 0.5 + rng.normal_f64(),
                ]
            })
            .collect();
        let labels: Vec<usize> = (0..60).map(|i| i % 3).collect();
        let m = Matrix::from_rows(&rows).unwrap();
        let base = silhouette(&m, &labels).unwrap();

        // Rotation in the (0, 1) plane plus a translation.
        let theta = 0.73f64;
        let (c, s) = (theta.cos(), theta.sin());
        let moved: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| {
                vec![
                    c * r[0] - s * r[1] + 11.0,
                    s * r[0] + c * r[1] - 4.0,
                    r[2] + 2.0,
                ]
            })
            .collect();
        let m2 = Matrix::from_rows(&moved).unwrap();
        let rotated = silhouette(&m2, &labels).unwrap();
        assert_abs_diff_eq!(base, rotated, epsilon = 1e-9);
    }

    #[test]
    fn singleton_class_scores_zero_and_single_class_errors() {
        let m = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![10.0]]).unwrap();
        // Class 1 is a singleton; its sample contributes 0.
        let s = silhouette(&m, &[0, 0, 1]).unwrap();
        assert!(s.is_finite());

        assert!(matches!(
            silhouette(&m, &[0, 0, 0]),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn subsampling_is_deterministic() {
        let mut rng = RngStream::new(16);
        let n = SILHOUETTE_SUBSAMPLE_CAP + 500;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| vec![(i % 2) as f64 * 4.0 + rng.normal_f64() * 0.2])
            .collect();
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let m = Matrix::from_rows(&rows).unwrap();
        let a = silhouette(&m, &labels).unwrap();
        let b = silhouette(&m, &labels).unwrap();
        assert_eq!(a, b);
        assert!(a > 0.8);
    }
}
