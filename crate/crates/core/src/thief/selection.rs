//! Query-selection strategies: uniform random, maximum prediction entropy,
//! and greedy k-center (farthest-first) coverage.

use std::collections::HashSet;

use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::modelzoo::{predict, ComposedModel, LabelMode, Prediction};
use crate::numcore::{Matrix, RngStream};

/// Anything that can produce soft class probabilities for a batch; the
/// substitute model during an attack, or a table-backed stub in tests.
pub trait SoftPredictor {
    fn soft_probs(&self, inputs: &Matrix) -> Result<Matrix>;
}

impl SoftPredictor for ComposedModel {
    fn soft_probs(&self, inputs: &Matrix) -> Result<Matrix> {
        match predict(self, inputs, LabelMode::Soft)? {
            Prediction::Soft(p) => Ok(p),
            Prediction::Hard(_) => unreachable!("soft mode returns probabilities"),
        }
    }
}

/// Uniform sample of `n` distinct pool indices, deterministic in `rng`.
pub fn select_random(pool: &Dataset, n: usize, rng: &mut RngStream) -> Result<Vec<usize>> {
    if n > pool.len() {
        return Err(Error::Config(format!(
            "cannot select {n} from a pool of {}",
            pool.len()
        )));
    }
    Ok(rng.sample_indices(pool.len(), n))
}

/// Shannon entropy of one probability row, in nats.
fn row_entropy(row: &[f64]) -> f64 {
    let mut h = 0.0;
    for &p in row {
        if p > 0.0 {
            h -= p * p.ln();
        }
    }
    h
}

/// The `n` unqueried pool indices on which the substitute is most
/// uncertain (maximal prediction entropy); ties break toward the lower
/// index.
pub fn select_entropy<P: SoftPredictor>(
    pool: &Dataset,
    substitute: &P,
    n: usize,
    already: &HashSet<usize>,
) -> Result<Vec<usize>> {
    let candidates: Vec<usize> = (0..pool.len()).filter(|i| !already.contains(i)).collect();
    if n > candidates.len() {
        return Err(Error::Config(format!(
            "cannot select {n} from {} unqueried pool samples",
            candidates.len()
        )));
    }
    let probs = substitute.soft_probs(&pool.features.gather_rows(&candidates))?;
    let mut scored: Vec<(usize, f64)> = candidates
        .iter()
        .enumerate()
        .map(|(pos, &idx)| (idx, row_entropy(probs.row(pos))))
        .collect();
    scored.sort_unstable_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("entropies are finite")
            .then(a.0.cmp(&b.0))
    });
    Ok(scored.into_iter().take(n).map(|(idx, _)| idx).collect())
}

/// Greedy farthest-first selection: repeatedly picks the candidate row
/// maximizing the Euclidean distance to its nearest already-selected row.
/// Returns indices into `pool_features`, in pick order; ties break toward
/// the lower index.
pub fn select_kcenter(
    pool_features: &Matrix,
    selected_features: &Matrix,
    n: usize,
) -> Result<Vec<usize>> {
    if selected_features.rows() == 0 {
        return Err(Error::State(
            "k-center needs a non-empty seed selection".into(),
        ));
    }
    if pool_features.cols() != selected_features.cols() {
        return Err(Error::Shape(format!(
            "pool features have {} columns, selected have {}",
            pool_features.cols(),
            selected_features.cols()
        )));
    }
    if n > pool_features.rows() {
        return Err(Error::Config(format!(
            "cannot select {n} from {} pool rows",
            pool_features.rows()
        )));
    }

    // Squared distances order identically to Euclidean ones.
    let mut min_d: Vec<f64> = (0..pool_features.rows())
        .map(|i| {
            let row = pool_features.row(i);
            let mut best = f64::INFINITY;
            for j in 0..selected_features.rows() {
                best = best.min(Matrix::sq_dist(row, selected_features.row(j)));
            }
            best
        })
        .collect();

    let mut picks = Vec::with_capacity(n);
    for _ in 0..n {
        let mut best = 0;
        for (i, &d) in min_d.iter().enumerate().skip(1) {
            if d > min_d[best] {
                best = i;
            }
        }
        picks.push(best);
        let center = pool_features.row(best).to_vec();
        for (i, d) in min_d.iter_mut().enumerate() {
            *d = d.min(Matrix::sq_dist(pool_features.row(i), &center));
        }
    }
    Ok(picks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::SplitTag;
    use proptest::prelude::*;

    /// Table-backed predictor for selection tests.
    struct TablePredictor {
        rows: Matrix,
    }

    impl SoftPredictor for TablePredictor {
        fn soft_probs(&self, inputs: &Matrix) -> Result<Matrix> {
            // Inputs carry the row id in their first coordinate.
            let indices: Vec<usize> = (0..inputs.rows())
                .map(|i| inputs.get(i, 0) as usize)
                .collect();
            Ok(self.rows.gather_rows(&indices))
        }
    }

    /// Pool whose single feature is the row index, so the table predictor
    /// can look rows up.
    fn index_pool(n: usize) -> Dataset {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
        Dataset::new(Matrix::from_rows(&rows).unwrap(), None, 0, SplitTag::Pool).unwrap()
    }

    fn normalize_rows(mut m: Matrix) -> Matrix {
        for i in 0..m.rows() {
            let sum: f64 = m.row(i).iter().sum();
            for v in m.row_mut(i) {
                *v /= sum;
            }
        }
        m
    }

    #[test]
    fn random_selects_everything_when_n_equals_pool() {
        let pool = index_pool(10);
        let mut rng = RngStream::new(1);
        let mut all = select_random(&pool, 10, &mut rng).unwrap();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert!(select_random(&pool, 11, &mut rng).is_err());
    }

    #[test]
    fn random_is_deterministic_in_seed() {
        let pool = index_pool(100);
        let a = select_random(&pool, 7, &mut RngStream::new(5)).unwrap();
        let b = select_random(&pool, 7, &mut RngStream::new(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn random_single_draws_are_uniform() {
        let pool = index_pool(4);
        let mut rng = RngStream::new(6);
        let mut counts = [0usize; 4];
        for _ in 0..100_000 {
            counts[select_random(&pool, 1, &mut rng).unwrap()[0]] += 1;
        }
        for &c in &counts {
            let freq = c as f64 / 100_000.0;
            assert!((freq - 0.25).abs() < 0.01, "freq {freq}");
        }
    }

    #[test]
    fn entropy_prefers_uniform_rows_and_shuns_one_hot() {
        // Row 3 is uniform (entropy ln K, maximal); row 1 is one-hot
        // (entropy 0); the rest are in between.
        let table = Matrix::from_rows(&[
            vec![0.7, 0.2, 0.1],
            vec![1.0, 0.0, 0.0],
            vec![0.6, 0.3, 0.1],
            vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
            vec![0.5, 0.4, 0.1],
        ])
        .unwrap();
        let predictor = TablePredictor { rows: table };
        let pool = index_pool(5);

        let first = select_entropy(&pool, &predictor, 1, &HashSet::new()).unwrap();
        assert_eq!(first, vec![3]);

        let all = select_entropy(&pool, &predictor, 5, &HashSet::new()).unwrap();
        assert_eq!(*all.last().unwrap(), 1, "one-hot row chosen last");
    }

    #[test]
    fn entropy_matches_full_sort_oracle_on_50_sample_pools() {
        for seed in 0..10u64 {
            let mut rng = RngStream::new(1000 + seed);
            let mut raw = Vec::new();
            for _ in 0..50 {
                raw.push((0..4).map(|_| rng.unit_f64() + 1e-3).collect::<Vec<f64>>());
            }
            let table = normalize_rows(Matrix::from_rows(&raw).unwrap());
            let predictor = TablePredictor {
                rows: table.clone(),
            };
            let pool = index_pool(50);

            // Independent oracle: compute entropies directly and sort all.
            let mut oracle: Vec<(usize, f64)> = (0..50)
                .map(|i| {
                    let mut h = 0.0;
                    for &p in table.row(i) {
                        if p > 0.0 {
                            h -= p * p.ln();
                        }
                    }
                    (i, h)
                })
                .collect();
            oracle.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));

            for n in [1usize, 5, 17, 50] {
                let got = select_entropy(&pool, &predictor, n, &HashSet::new()).unwrap();
                let want: Vec<usize> = oracle.iter().take(n).map(|&(i, _)| i).collect();
                assert_eq!(got, want, "seed {seed} n {n}");
            }
        }
    }

    #[test]
    fn entropy_breaks_ties_toward_lower_index() {
        let table = Matrix::from_rows(&[
            vec![0.5, 0.5],
            vec![0.9, 0.1],
            vec![0.5, 0.5],
        ])
        .unwrap();
        let predictor = TablePredictor { rows: table };
        let pool = index_pool(3);
        let got = select_entropy(&pool, &predictor, 2, &HashSet::new()).unwrap();
        assert_eq!(got, vec![0, 2]);
    }

    #[test]
    fn entropy_skips_already_queried() {
        let table = normalize_rows(
            Matrix::from_rows(&[vec![1.0, 1.0], vec![3.0, 1.0], vec![1.0, 3.0]]).unwrap(),
        );
        let predictor = TablePredictor { rows: table };
        let pool = index_pool(3);
        let already: HashSet<usize> = [0].into_iter().collect();
        let got = select_entropy(&pool, &predictor, 2, &already).unwrap();
        assert!(!got.contains(&0));
        assert!(select_entropy(&pool, &predictor, 3, &already).is_err());
    }

    #[test]
    fn kcenter_picks_farthest_point_on_a_line() {
        let pool = Matrix::from_rows(&[vec![0.0], vec![10.0]]).unwrap();
        let selected = Matrix::from_rows(&[vec![0.0]]).unwrap();
        assert_eq!(select_kcenter(&pool, &selected, 1).unwrap(), vec![1]);
    }

    #[test]
    fn kcenter_hand_trace_on_collinear_points() {
        let pool = Matrix::from_rows(&[vec![0.0], vec![4.0], vec![10.0]]).unwrap();
        let selected = Matrix::from_rows(&[vec![0.0]]).unwrap();
        // Picks 10 first (distance 10), then 4 (distance min(4, 6) = 4).
        assert_eq!(select_kcenter(&pool, &selected, 2).unwrap(), vec![2, 1]);
    }

    #[test]
    fn kcenter_requires_seed_selection() {
        let pool = Matrix::from_rows(&[vec![0.0]]).unwrap();
        let empty = Matrix::zeros(0, 1);
        assert!(matches!(
            select_kcenter(&pool, &empty, 1),
            Err(Error::State(_))
        ));
    }

    /// Covering radius of `centers` over all points.
    fn covering_radius(points: &Matrix, centers: &[usize]) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..points.rows() {
            let mut best = f64::INFINITY;
            for &c in centers {
                best = best.min(Matrix::sq_dist(points.row(i), points.row(c)).sqrt());
            }
            worst = worst.max(best);
        }
        worst
    }

    #[test]
    fn greedy_kcenter_is_within_twice_the_exhaustive_optimum() {
        // Classic 2-approximation, checked exhaustively on small instances.
        for seed in 0..15u64 {
            let mut rng = RngStream::new(2000 + seed);
            let n = 4 + (seed as usize % 9); // 4..=12
            let dim = 1 + (seed as usize % 3);
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..dim).map(|_| rng.normal_f64() * 3.0).collect())
                .collect();
            let points = Matrix::from_rows(&rows).unwrap();

            for k in 1..=3usize.min(n) {
                // Greedy: seed with point 0, add k - 1 farthest-first picks.
                let selected = points.gather_rows(&[0]);
                let picks = select_kcenter(&points, &selected, k - 1).unwrap();
                let mut centers = vec![0usize];
                centers.extend(picks);
                let greedy_radius = covering_radius(&points, &centers);

                // Brute force over all k-subsets.
                fn next_combination(subset: &mut [usize], n: usize) -> bool {
                    let k = subset.len();
                    for i in (0..k).rev() {
                        if subset[i] < n - k + i {
                            subset[i] += 1;
                            for j in i + 1..k {
                                subset[j] = subset[j - 1] + 1;
                            }
                            return true;
                        }
                    }
                    false
                }
                let mut best = f64::INFINITY;
                let mut subset: Vec<usize> = (0..k).collect();
                loop {
                    best = best.min(covering_radius(&points, &subset));
                    if !next_combination(&mut subset, n) {
                        break;
                    }
                }

                assert!(
                    greedy_radius <= 2.0 * best + 1e-9,
                    "seed {seed} n {n} k {k}: greedy {greedy_radius} vs opt {best}"
                );
            }
        }
    }

    proptest! {
        #[test]
        fn entropy_selection_is_permutation_equivariant(
            seed in any::<u64>(),
            n_sel in 1usize..8,
        ) {
            let m = 12usize;
            let mut rng = RngStream::new(seed);
            let raw: Vec<Vec<f64>> = (0..m)
                .map(|_| (0..3).map(|_| rng.unit_f64() + 1e-6).collect())
                .collect();
            let table = normalize_rows(Matrix::from_rows(&raw).unwrap());

            let mut perm: Vec<usize> = (0..m).collect();
            rng.shuffle(&mut perm);
            let permuted = table.gather_rows(&perm);

            let base = select_entropy(
                &index_pool(m),
                &TablePredictor { rows: table },
                n_sel,
                &HashSet::new(),
            )
            .unwrap();
            let shuffled = select_entropy(
                &index_pool(m),
                &TablePredictor { rows: permuted },
                n_sel,
                &HashSet::new(),
            )
            .unwrap();

            // Map the permuted selection back to original row identities.
            let mut mapped: Vec<usize> = shuffled.iter().map(|&i| perm[i]).collect();
            let mut base_sorted = base.clone();
            base_sorted.sort_unstable();
            mapped.sort_unstable();
            prop_assert_eq!(base_sorted, mapped);
        }

        #[test]
        fn kcenter_selection_is_permutation_equivariant(
            seed in any::<u64>(),
            n_sel in 1usize..6,
        ) {
            let m = 10usize;
            let mut rng = RngStream::new(seed);
            let rows: Vec<Vec<f64>> = (0..m)
                .map(|_| (0..2).map(|_| rng.normal_f64()).collect())
                .collect();
            let points = Matrix::from_rows(&rows).unwrap();
            let seed_selection = Matrix::from_rows(&[rows[0].clone()]).unwrap();

            let mut perm: Vec<usize> = (0..m).collect();
            rng.shuffle(&mut perm);
            let permuted = points.gather_rows(&perm);

            let base = select_kcenter(&points, &seed_selection, n_sel).unwrap();
            let shuffled = select_kcenter(&permuted, &seed_selection, n_sel).unwrap();
            let mut mapped: Vec<usize> = shuffled.iter().map(|&i| perm[i]).collect();
            let mut base_sorted = base.clone();
            base_sorted.sort_unstable();
            mapped.sort_unstable();
            prop_assert_eq!(base_sorted, mapped);
        }
    }
}
