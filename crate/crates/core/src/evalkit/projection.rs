//! 2-D principal-component projection via power iteration with deflation.

use std::path::Path;

use crate::error::{Error, Result};
use crate::numcore::{write_f64_17, Matrix, RngStream};

const MAX_ITERS: usize = 1000;
const TOLERANCE: f64 = 1e-9;
const INIT_SEED: u64 = 0x9CA;

/// Projects rows onto the top-2 principal directions of the mean-centered
/// data. Directions are sign-normalized so their largest-magnitude
/// coordinate is positive. If the data has rank 1 the second coordinate is
/// all zeros; rank-0 input is rejected.
pub fn project_2d(features: &Matrix) -> Result<Matrix> {
    let n = features.rows();
    let d = features.cols();
    if n < 2 {
        return Err(Error::DegenerateInput(
            "projection needs at least 2 rows".into(),
        ));
    }

    // Mean-center.
    let mut means = vec![0.0; d];
    for row in features.iter_rows() {
        for (m, &v) in means.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut means {
        *m /= n as f64;
    }
    let mut centered = features.clone();
    for i in 0..n {
        for (v, &m) in centered.row_mut(i).iter_mut().zip(&means) {
            *v -= m;
        }
    }

    let total_var: f64 = centered.as_slice().iter().map(|v| v * v).sum();
    if total_var == 0.0 {
        return Err(Error::DegenerateInput(
            "all rows identical (rank 0 after centering)".into(),
        ));
    }

    // Covariance action without materializing the d x d matrix.
    let denom = (n - 1) as f64;
    let cov_apply = |v: &[f64]| -> Vec<f64> {
        let xv = mat_vec(&centered, v);
        let mut out = mat_t_vec(&centered, &xv);
        for o in &mut out {
            *o /= denom;
        }
        out
    };

    let (lambda1, v1) = power_iteration(&cov_apply, d);
    let deflated = |v: &[f64]| -> Vec<f64> {
        let mut out = cov_apply(v);
        let coef = lambda1 * dot(&v1, v);
        for (o, &u) in out.iter_mut().zip(&v1) {
            *o -= coef * u;
        }
        out
    };
    let (lambda2, v2) = power_iteration(&deflated, d);
    // Rank-1 data: the deflated operator is numerically zero and the second
    // direction is meaningless; emit zero coordinates instead.
    let rank1 = lambda2 <= lambda1 * 1e-12;

    let mut out = Matrix::zeros(n, 2);
    for i in 0..n {
        let row = centered.row(i);
        out.set(i, 0, dot(row, &v1));
        out.set(i, 1, if rank1 { 0.0 } else { dot(row, &v2) });
    }
    Ok(out)
}

fn power_iteration(apply: &dyn Fn(&[f64]) -> Vec<f64>, dim: usize) -> (f64, Vec<f64>) {
    let mut rng = RngStream::new(INIT_SEED).derive("pca-init");
    let mut v: Vec<f64> = (0..dim).map(|_| rng.normal_f64()).collect();
    normalize(&mut v);

    let mut lambda = 0.0;
    for _ in 0..MAX_ITERS {
        let mut w = apply(&v);
        lambda = dot(&v, &w);
        let norm = dot(&w, &w).sqrt();
        if norm == 0.0 {
            return (0.0, sign_normalize(v));
        }
        for x in &mut w {
            *x /= norm;
        }
        let mut diff = 0.0;
        let mut sum = 0.0;
        for (&a, &b) in w.iter().zip(&v) {
            diff += (a - b) * (a - b);
            sum += (a + b) * (a + b);
        }
        v = w;
        // Converged when the direction stabilizes (either sign).
        if diff.sqrt() <= TOLERANCE || sum.sqrt() <= TOLERANCE {
            break;
        }
    }
    (lambda.abs(), sign_normalize(v))
}

/// Flips the vector so its largest-magnitude coordinate is positive; ties
/// resolve to the lowest index.
fn sign_normalize(mut v: Vec<f64>) -> Vec<f64> {
    let mut best = 0;
    for (i, x) in v.iter().enumerate().skip(1) {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        for x in &mut v {
            *x = -*x;
        }
    }
    v
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

fn normalize(v: &mut [f64]) {
    let norm = dot(v, v).sqrt();
    if norm > 0.0 {
        for x in v {
            *x /= norm;
        }
    }
}

fn mat_vec(m: &Matrix, v: &[f64]) -> Vec<f64> {
    m.iter_rows().map(|row| dot(row, v)).collect()
}

fn mat_t_vec(m: &Matrix, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m.cols()];
    for (row, &coef) in m.iter_rows().zip(v) {
        for (o, &x) in out.iter_mut().zip(row) {
            *o += coef * x;
        }
    }
    out
}

/// Writes a projection as `x,y,label` CSV for external plotting tools.
pub fn export_projection_csv(
    projection: &Matrix,
    labels: &[usize],
    path: impl AsRef<Path>,
) -> Result<()> {
    if projection.cols() != 2 {
        return Err(Error::Shape(format!(
            "projection must have 2 columns, has {}",
            projection.cols()
        )));
    }
    if projection.rows() != labels.len() {
        return Err(Error::Shape(format!(
            "{} projection rows vs {} labels",
            projection.rows(),
            labels.len()
        )));
    }
    let mut out = String::from("x,y,label\n");
    for (i, &label) in labels.iter().enumerate() {
        write_f64_17(&mut out, projection.get(i, 0));
        out.push(',');
        write_f64_17(&mut out, projection.get(i, 1));
        out.push(',');
        out.push_str(&label.to_string());
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::RngStream;

    /// Test-only oracle: full symmetric eigendecomposition by cyclic Jacobi
    /// rotations, independent of the power-iteration path.
    fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> Vec<(f64, Vec<f64>)> {
        let d = a.len();
        let mut v = vec![vec![0.0; d]; d];
        for (i, row) in v.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        for _ in 0..100 {
            let mut off = 0.0;
            for i in 0..d {
                for j in (i + 1)..d {
                    off += a[i][j] * a[i][j];
                }
            }
            if off < 1e-24 {
                break;
            }
            for p in 0..d {
                for q in (p + 1)..d {
                    if a[p][q].abs() < 1e-18 {
                        continue;
                    }
                    let theta = 0.5 * (2.0 * a[p][q]).atan2(a[q][q] - a[p][p]);
                    let (s, c) = theta.sin_cos();
                    for k in 0..d {
                        let (akp, akq) = (a[k][p], a[k][q]);
                        a[k][p] = c * akp - s * akq;
                        a[k][q] = s * akp + c * akq;
                    }
                    for k in 0..d {
                        let (apk, aqk) = (a[p][k], a[q][k]);
                        a[p][k] = c * apk - s * aqk;
                        a[q][k] = s * apk + c * aqk;
                    }
                    for k in 0..d {
                        let (vkp, vkq) = (v[k][p], v[k][q]);
                        v[k][p] = c * vkp - s * vkq;
                        v[k][q] = s * vkp + c * vkq;
                    }
                }
            }
        }
        let mut pairs: Vec<(f64, Vec<f64>)> = (0..d)
            .map(|j| (a[j][j], (0..d).map(|i| v[i][j]).collect()))
            .collect();
        pairs.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap());
        pairs
    }

    #[test]
    fn planar_data_reconstructs_exactly() {
        // Points living in a 2-D plane embedded in 32-D.
        let mut rng = RngStream::new(21);
        let d = 32;
        let u: Vec<f64> = (0..d).map(|_| rng.normal_f64()).collect();
        let w: Vec<f64> = (0..d).map(|_| rng.normal_f64()).collect();
        let mut rows = Vec::new();
        let mut coords = Vec::new();
        for _ in 0..50 {
            let (s, t) = (3.0 * rng.normal_f64(), rng.normal_f64());
            coords.push((s, t));
            rows.push((0..d).map(|j| s * u[j] + t * w[j] + 5.0).collect::<Vec<_>>());
        }
        let m = Matrix::from_rows(&rows).unwrap();
        let proj = project_2d(&m).unwrap();

        // Reconstruction error: distances between projected points must match
        // distances between original points (both live in the same plane).
        for i in 0..50 {
            for j in (i + 1)..50 {
                let orig = Matrix::sq_dist(m.row(i), m.row(j)).sqrt();
                let low = Matrix::sq_dist(proj.row(i), proj.row(j)).sqrt();
                assert!(
                    (orig - low).abs() <= 1e-6,
                    "pair ({i},{j}): {orig} vs {low}"
                );
            }
        }
    }

    #[test]
    fn first_component_carries_most_variance() {
        let mut rng = RngStream::new(22);
        let rows: Vec<Vec<f64>> = (0..100)
            .map(|_| {
                vec![
                    10.0 * rng.normal_f64(),
                    2.0 * rng.normal_f64(),
                    rng.normal_f64(),
                ]
            })
            .collect();
        let m = Matrix::from_rows(&rows).unwrap();
        let proj = project_2d(&m).unwrap();
        let var = |c: usize| {
            let mean: f64 = (0..100).map(|i| proj.get(i, c)).sum::<f64>() / 100.0;
            (0..100)
                .map(|i| (proj.get(i, c) - mean).powi(2))
                .sum::<f64>()
        };
        assert!(var(0) >= var(1));
    }

    #[test]
    fn matches_dense_eigensolver_oracle() {
        // 5 x 3 case checked against a full Jacobi eigendecomposition.
        let rows = vec![
            vec![1.0, 2.0, 0.5],
            vec![-1.0, 0.3, 2.0],
            vec![0.7, -0.2, 1.1],
            vec![2.2, 1.8, -0.4],
            vec![-0.5, 0.9, 0.3],
        ];
        let m = Matrix::from_rows(&rows).unwrap();
        let proj = project_2d(&m).unwrap();

        // Oracle covariance.
        let n = 5usize;
        let d = 3usize;
        let mut means = vec![0.0; d];
        for r in &rows {
            for (mu, &v) in means.iter_mut().zip(r) {
                *mu += v / n as f64;
            }
        }
        let mut cov = vec![vec![0.0; d]; d];
        for r in &rows {
            for i in 0..d {
                for j in 0..d {
                    cov[i][j] += (r[i] - means[i]) * (r[j] - means[j]) / (n - 1) as f64;
                }
            }
        }
        let eig = jacobi_eigen(cov);

        for (c, (_, evec)) in eig.iter().take(2).enumerate() {
            // Compare |projection| since the oracle's sign is arbitrary.
            for (i, r) in rows.iter().enumerate() {
                let mut oracle = 0.0;
                for j in 0..d {
                    oracle += (r[j] - means[j]) * evec[j];
                }
                assert!(
                    (proj.get(i, c).abs() - oracle.abs()).abs() < 1e-7,
                    "component {c} row {i}: {} vs {oracle}",
                    proj.get(i, c)
                );
            }
        }
    }

    #[test]
    fn rank0_rejected_and_rank1_zeroes_second_column() {
        let m = Matrix::from_rows(&[vec![3.0, 1.0], vec![3.0, 1.0], vec![3.0, 1.0]]).unwrap();
        assert!(matches!(project_2d(&m), Err(Error::DegenerateInput(_))));

        let line = Matrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        let proj = project_2d(&line).unwrap();
        for i in 0..3 {
            assert_eq!(proj.get(i, 1), 0.0);
        }
    }

    #[test]
    fn export_writes_plottable_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("proj.csv");
        let proj = Matrix::from_rows(&[vec![1.0, 2.0], vec![-0.5, 0.25]]).unwrap();
        export_projection_csv(&proj, &[0, 1], &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "x,y,label");
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().nth(1).unwrap().ends_with(",0"));
    }
}
