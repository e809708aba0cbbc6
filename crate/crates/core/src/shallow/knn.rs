use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

pub const DEFAULT_K: usize = 10;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distance {
    #[default]
    Euclidean,
}

/// Stores the training points; prediction is the generated fraction among
/// the `k` nearest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub distance: Distance,
    points: Vec<Vec<f64>>,
    labels: Vec<bool>,
}

impl KnnModel {
    pub fn fit(points: Vec<Vec<f64>>, labels: Vec<bool>, k: usize) -> Result<Self> {
        check_dim(points.len(), labels.len())?;
        if points.is_empty() {
            return Err(Error::invalid("kNN needs at least one stored point"));
        }
        if k == 0 || k > points.len() {
            return Err(Error::invalid(format!("k = {k} must lie in 1..={}", points.len())));
        }
        let width = points[0].len();
        for p in &points {
            check_dim(width, p.len())?;
        }
        Ok(KnnModel {
            k,
            distance: Distance::Euclidean,
            points,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn width(&self) -> usize {
        self.points[0].len()
    }

    /// Checks invariants after deserialization.
    pub fn validate(&self) -> Result<()> {
        KnnModel::fit(self.points.clone(), self.labels.clone(), self.k).map(|_| ())
    }

    /// Indices of the `k` nearest stored points; equal distances go to the
    /// lower index.
    pub fn neighbors(&self, x: &[f64]) -> Result<Vec<usize>> {
        check_dim(self.width(), x.len())?;
        let mut d: Vec<(f64, usize)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| (squared_distance(p, x), i))
            .collect();
        let by_key = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < d.len() {
            d.select_nth_unstable_by(self.k - 1, by_key);
            d.truncate(self.k);
        }
        d.sort_unstable_by(by_key);
        Ok(d.into_iter().map(|(_, i)| i).collect())
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        let hits = self.neighbors(x)?.into_iter().filter(|&i| self.labels[i]).count();
        Ok(hits as f64 / self.k as f64)
    }

    pub fn predict_proba_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
        xs.par_iter().map(|x| self.predict_proba(x)).collect()
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_match_with_k1() {
        let m = KnnModel::fit(vec![vec![0.0, 0.0], vec![5.0, 5.0]], vec![false, true], 1).unwrap();
        assert_eq!(m.predict_proba(&[5.0, 5.0]).unwrap(), 1.0);
        assert_eq!(m.predict_proba(&[0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn seven_of_ten() {
        let points: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let labels: Vec<bool> = (0..20).map(|i| i < 7).collect();
        let m = KnnModel::fit(points, labels, 10).unwrap();
        assert_eq!(m.predict_proba(&[0.0]).unwrap(), 0.7);
    }

    #[test]
    fn distance_ties_prefer_lower_index() {
        let m = KnnModel::fit(vec![vec![1.0], vec![-1.0], vec![1.0]], vec![true, false, false], 1).unwrap();
        assert_eq!(m.neighbors(&[0.0]).unwrap(), vec![0]);
        assert_eq!(m.predict_proba(&[0.0]).unwrap(), 1.0);
    }

    #[test]
    fn k_larger_than_store() {
        assert!(KnnModel::fit(vec![vec![0.0]; 3], vec![true; 3], 4).is_err());
        assert!(KnnModel::fit(vec![vec![0.0]; 3], vec![true; 3], 0).is_err());
    }

    proptest! {
        #[test]
        fn matches_full_sort(
            pts in prop::collection::vec(prop::collection::vec(-3i32..3, 3), 12..40),
            q in prop::collection::vec(-3i32..3, 3),
            k in 1usize..12,
        ) {
            // small integer grid forces many distance ties
            let points: Vec<Vec<f64>> = pts.iter().map(|p| p.iter().map(|&v| v as f64).collect()).collect();
            let labels: Vec<bool> = (0..points.len()).map(|i| i % 3 == 0).collect();
            let q: Vec<f64> = q.iter().map(|&v| v as f64).collect();
            let m = KnnModel::fit(points.clone(), labels.clone(), k).unwrap();
            let mut order: Vec<usize> = (0..points.len()).collect();
            order.sort_by(|&a, &b| squared_distance(&points[a], &q).total_cmp(&squared_distance(&points[b], &q)).then(a.cmp(&b)));
            order.truncate(k);
            prop_assert_eq!(m.neighbors(&q).unwrap(), order);
        }
    }
}
