//! Nearest-neighbour and boosted-tree classifiers over dense feature rows.

mod gbt;
mod knn;

pub use gbt::{gbt_train, logistic_loss, train_with_history, GbtModel, GbtParams, Node, LEAF_L2, MIN_SAMPLES_LEAF};
pub use knn::{Distance, KnnModel, DEFAULT_K};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::macro_f1;

/// Discretized hyperparameter grid for boosting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbtGrid {
    pub estimators: Vec<usize>,
    pub depths: Vec<usize>,
    pub learning_rates: Vec<f64>,
}

impl Default for GbtGrid {
    fn default() -> Self {
        GbtGrid {
            estimators: vec![2, 3, 5, 10, 20, 30],
            depths: vec![3, 5, 7, 10],
            learning_rates: vec![1e-5, 1e-4, 1e-3, 1e-2, 1e-1],
        }
    }
}

impl GbtGrid {
    pub fn single(params: GbtParams) -> Self {
        GbtGrid {
            estimators: vec![params.n_estimators],
            depths: vec![params.max_depth],
            learning_rates: vec![params.learning_rate],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.estimators.is_empty() || self.depths.is_empty() || self.learning_rates.is_empty() {
            return Err(Error::config("every grid axis needs at least one value"));
        }
        for &n in &self.estimators {
            for &d in &self.depths {
                for &lr in &self.learning_rates {
                    GbtParams {
                        n_estimators: n,
                        max_depth: d,
                        learning_rate: lr,
                    }
                    .validate()?;
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.estimators.len() * self.depths.len() * self.learning_rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridScore {
    pub params: GbtParams,
    pub validation_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub model: GbtModel,
    pub best: GridScore,
    /// Every grid point, sorted by (estimators, depth, learning rate).
    pub scores: Vec<GridScore>,
}

fn key(p: &GbtParams) -> (usize, usize, f64) {
    (p.n_estimators, p.max_depth, p.learning_rate)
}

/// Exhaustive search maximizing validation macro-F1 at threshold 0.5.
///
/// One model per (depth, learning rate) is trained with the largest
/// estimator count and scored at each prefix. Ties go to fewer estimators,
/// then shallower trees, then the smaller learning rate.
pub fn grid_search(
    x_train: &[Vec<f64>],
    y_train: &[bool],
    x_val: &[Vec<f64>],
    y_val: &[bool],
    grid: &GbtGrid,
) -> Result<GridSearchResult> {
    grid.validate()?;
    if x_val.is_empty() {
        return Err(Error::invalid("grid search needs a nonempty validation set"));
    }
    crate::error::check_dim(x_val.len(), y_val.len())?;
    let max_n = *grid.estimators.iter().max().expect("validated nonempty");
    let mut estimators = grid.estimators.clone();
    estimators.sort_unstable();
    estimators.dedup();
    let pairs: Vec<(usize, f64)> = grid
        .depths
        .iter()
        .flat_map(|&d| grid.learning_rates.iter().map(move |&lr| (d, lr)))
        .collect();
    let per_pair: Vec<(GbtModel, Vec<GridScore>)> = pairs
        .par_iter()
        .map(|&(depth, lr)| {
            let full = gbt_train(
                x_train,
                y_train,
                &GbtParams {
                    n_estimators: max_n,
                    max_depth: depth,
                    learning_rate: lr,
                },
            )?;
            let mut raw: Vec<f64> = vec![full.base_score; x_val.len()];
            let mut done = 0;
            let mut scores = Vec::new();
            for &n in &estimators {
                for tree in &full.trees[done..n] {
                    for (r, row) in raw.iter_mut().zip(x_val) {
                        *r += lr * tree.eval(row);
                    }
                }
                done = n;
                // sigmoid(r) >= 0.5 exactly when r >= 0
                let pred: Vec<bool> = raw.iter().map(|&r| r >= 0.0).collect();
                scores.push(GridScore {
                    params: GbtParams {
                        n_estimators: n,
                        max_depth: depth,
                        learning_rate: lr,
                    },
                    validation_f1: macro_f1(y_val, &pred)?,
                });
            }
            Ok((full, scores))
        })
        .collect::<Result<_>>()?;
    let mut scores: Vec<GridScore> = per_pair.iter().flat_map(|(_, s)| s.iter().copied()).collect();
    scores.sort_by(|a, b| {
        let (ka, kb) = (key(&a.params), key(&b.params));
        ka.0.cmp(&kb.0).then(ka.1.cmp(&kb.1)).then(ka.2.total_cmp(&kb.2))
    });
    scores.dedup_by(|a, b| a.params == b.params);
    let best = scores
        .iter()
        .copied()
        .reduce(|best, s| if s.validation_f1 > best.validation_f1 { s } else { best })
        .expect("grid is nonempty");
    let (full, _) = per_pair
        .iter()
        .find(|(m, _)| m.params.max_depth == best.params.max_depth && m.params.learning_rate == best.params.learning_rate)
        .expect("best point comes from a trained pair");
    Ok(GridSearchResult {
        model: full.truncated(best.params.n_estimators),
        best,
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_data(n: usize, offset: f64) -> (Vec<Vec<f64>>, Vec<bool>) {
        (0..n)
            .map(|i| {
                let v = i as f64 / n as f64 + offset;
                (vec![v, (i % 7) as f64], v >= 0.5 + offset)
            })
            .unzip()
    }

    #[test]
    fn default_grid_contains_reference_point() {
        let g = GbtGrid::default();
        assert!(g.estimators.contains(&3) && g.depths.contains(&5) && g.learning_rates.contains(&1e-3));
        assert_eq!(g.len(), 6 * 4 * 5);
    }

    #[test]
    fn single_point_grid() {
        let (x, y) = line_data(40, 0.0);
        let p = GbtParams {
            n_estimators: 4,
            max_depth: 2,
            learning_rate: 0.1,
        };
        let r = grid_search(&x, &y, &x, &y, &GbtGrid::single(p)).unwrap();
        assert_eq!(r.best.params, p);
        assert_eq!(r.model, gbt_train(&x, &y, &p).unwrap());
    }

    #[test]
    fn ties_pick_smallest_point() {
        // Separable data: every grid point classifies perfectly.
        let (x, y) = line_data(40, 0.0);
        let grid = GbtGrid {
            estimators: vec![5, 2, 3],
            depths: vec![4, 3],
            learning_rates: vec![0.1, 0.01],
        };
        let r = grid_search(&x, &y, &x, &y, &grid).unwrap();
        assert!(r.scores.iter().all(|s| s.validation_f1 == 1.0));
        assert_eq!(
            r.best.params,
            GbtParams {
                n_estimators: 2,
                max_depth: 3,
                learning_rate: 0.01
            }
        );
        assert_eq!(r.scores.len(), 12);
    }

    #[test]
    fn prefix_scores_match_separate_training() {
        let (x, y) = line_data(50, 0.0);
        let (xv, yv) = line_data(17, 0.03);
        let grid = GbtGrid {
            estimators: vec![1, 4],
            depths: vec![2],
            learning_rates: vec![0.05],
        };
        let r = grid_search(&x, &y, &xv, &yv, &grid).unwrap();
        for s in &r.scores {
            let m = gbt_train(&x, &y, &s.params).unwrap();
            let pred: Vec<bool> = xv.iter().map(|row| m.predict_proba(row).unwrap() >= 0.5).collect();
            assert_eq!(s.validation_f1, macro_f1(&yv, &pred).unwrap());
        }
    }
}
