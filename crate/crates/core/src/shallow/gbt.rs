//! Second-order gradient boosting of regression trees on logistic loss.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::util::sigmoid;

/// L2 penalty added to the hessian sum of every leaf.
pub const LEAF_L2: f64 = 1.0;
pub const MIN_SAMPLES_LEAF: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbtParams {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
}

impl Default for GbtParams {
    fn default() -> Self {
        GbtParams {
            n_estimators: 3,
            max_depth: 5,
            learning_rate: 1e-3,
        }
    }
}

impl GbtParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_estimators == 0 {
            return Err(Error::config("boosting needs at least one estimator"));
        }
        if self.max_depth == 0 {
            return Err(Error::config("tree depth must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!("invalid learning rate {}", self.learning_rate)));
        }
        Ok(())
    }
}

/// A sample goes left when `x[feature] < threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

impl Node {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if x[*feature] < *threshold { left } else { right },
            }
        }
    }

    /// Number of split levels on the longest path.
    pub fn depth(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    /// `(feature, threshold)` of every split, preorder.
    pub fn splits(&self) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(n) = stack.pop() {
            if let Node::Split {
                feature,
                threshold,
                left,
                right,
            } = n
            {
                out.push((*feature, *threshold));
                stack.push(right);
                stack.push(left);
            }
        }
        out
    }

    fn max_feature(&self) -> Option<usize> {
        self.splits().into_iter().map(|(f, _)| f).max()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub params: GbtParams,
    pub base_score: f64,
    pub n_features: usize,
    pub trees: Vec<Node>,
}

impl GbtModel {
    pub fn raw_score(&self, x: &[f64]) -> f64 {
        self.base_score + self.trees.iter().map(|t| self.params.learning_rate * t.eval(x)).sum::<f64>()
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.n_features, x.len())?;
        Ok(sigmoid(self.raw_score(x)))
    }

    /// The model made of the first `n` trees; identical to training with
    /// `n` estimators because each round only sees earlier trees.
    pub fn truncated(&self, n: usize) -> GbtModel {
        let mut m = self.clone();
        m.trees.truncate(n);
        m.params.n_estimators = m.trees.len();
        m
    }

    pub fn validate(&self) -> Result<()> {
        if !self.base_score.is_finite() {
            return Err(Error::Checkpoint("non-finite base score".into()));
        }
        for t in &self.trees {
            if t.max_feature().is_some_and(|f| f >= self.n_features) {
                return Err(Error::Checkpoint("tree splits on a feature out of range".into()));
            }
        }
        Ok(())
    }
}

pub fn logistic_loss(raw: &[f64], y: &[bool]) -> f64 {
    raw.iter()
        .zip(y)
        .map(|(&f, &yi)| {
            // ln(1 + e^{-f}) for y = 1, ln(1 + e^{f}) for y = 0
            let m = if yi { -f } else { f };
            m.max(0.0) + (-m.abs()).exp().ln_1p()
        })
        .sum::<f64>()
        / raw.len() as f64
}

struct TreeBuilder<'a> {
    x: &'a [Vec<f64>],
    grad: &'a [f64],
    hess: &'a [f64],
    max_depth: usize,
    /// Distinct sorted training values per feature, for snapping thresholds.
    grid: &'a [Vec<f64>],
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl TreeBuilder<'_> {
    fn leaf(&self, idx: &[usize]) -> Node {
        let g: f64 = idx.iter().map(|&i| self.grad[i]).sum();
        let h: f64 = idx.iter().map(|&i| self.hess[i]).sum();
        Node::Leaf { value: g / (h + LEAF_L2) }
    }

    /// Midpoint between `hi` and the largest training value below it.
    fn snap(&self, feature: usize, hi: f64) -> f64 {
        let vals = &self.grid[feature];
        let pos = vals.partition_point(|&v| v < hi);
        let lo = vals[pos - 1];
        lo + (hi - lo) / 2.0
    }

    fn best_split(&self, idx: &[usize]) -> Option<BestSplit> {
        let n = idx.len();
        let total: f64 = idx.iter().map(|&i| self.grad[i]).sum();
        let parent = total * total / n as f64;
        let mut best: Option<BestSplit> = None;
        let mut sorted = idx.to_vec();
        for f in 0..self.x[0].len() {
            sorted.sort_by(|&a, &b| self.x[a][f].total_cmp(&self.x[b][f]).then(a.cmp(&b)));
            let mut left = 0.0;
            for k in 1..n {
                left += self.grad[sorted[k - 1]];
                let (lo, hi) = (self.x[sorted[k - 1]][f], self.x[sorted[k]][f]);
                if k < MIN_SAMPLES_LEAF || n - k < MIN_SAMPLES_LEAF || lo == hi {
                    continue;
                }
                let right = total - left;
                let gain = left * left / k as f64 + right * right / (n - k) as f64 - parent;
                if gain > 1e-12 && best.as_ref().is_none_or(|b| gain > b.gain) {
                    best = Some(BestSplit {
                        feature: f,
                        threshold: self.snap(f, hi),
                        gain,
                    });
                }
            }
        }
        best
    }

    fn build(&self, idx: &[usize], depth: usize) -> Node {
        if depth >= self.max_depth || idx.len() < 2 * MIN_SAMPLES_LEAF {
            return self.leaf(idx);
        }
        let Some(split) = self.best_split(idx) else {
            return self.leaf(idx);
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.x[i][split.feature] < split.threshold);
        Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: Box::new(self.build(&l, depth + 1)),
            right: Box::new(self.build(&r, depth + 1)),
        }
    }
}

fn check_training_data(x: &[Vec<f64>], y: &[bool]) -> Result<usize> {
    check_dim(x.len(), y.len())?;
    if x.is_empty() {
        return Err(Error::invalid("no training rows"));
    }
    if y.iter().all(|&v| v) || y.iter().all(|&v| !v) {
        return Err(Error::invalid("boosting needs both classes in the training labels"));
    }
    let width = x[0].len();
    if width == 0 {
        return Err(Error::invalid("feature rows are empty"));
    }
    for row in x {
        check_dim(width, row.len())?;
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite feature value"));
        }
    }
    Ok(width)
}

/// Trains and also returns the mean training log loss before the first
/// round and after every round.
pub fn train_with_history(x: &[Vec<f64>], y: &[bool], params: &GbtParams) -> Result<(GbtModel, Vec<f64>)> {
    params.validate()?;
    let width = check_training_data(x, y)?;
    let prior = y.iter().filter(|&&v| v).count() as f64 / y.len() as f64;
    let base_score = (prior / (1.0 - prior)).ln();
    let grid: Vec<Vec<f64>> = (0..width)
        .map(|f| {
            let mut v: Vec<f64> = x.iter().map(|r| r[f]).collect();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        })
        .collect();
    let target: Vec<f64> = y.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect();
    let mut raw = vec![base_score; x.len()];
    let mut history = vec![logistic_loss(&raw, y)];
    let idx: Vec<usize> = (0..x.len()).collect();
    let mut trees = Vec::with_capacity(params.n_estimators);
    for _ in 0..params.n_estimators {
        let p: Vec<f64> = raw.iter().map(|&f| sigmoid(f)).collect();
        let grad: Vec<f64> = target.iter().zip(&p).map(|(t, p)| t - p).collect();
        let hess: Vec<f64> = p.iter().map(|p| p * (1.0 - p)).collect();
        let tree = TreeBuilder {
            x,
            grad: &grad,
            hess: &hess,
            max_depth: params.max_depth,
            grid: &grid,
        }
        .build(&idx, 0);
        for (r, row) in raw.iter_mut().zip(x) {
            *r += params.learning_rate * tree.eval(row);
        }
        history.push(logistic_loss(&raw, y));
        trees.push(tree);
    }
    Ok((
        GbtModel {
            params: *params,
            base_score,
            n_features: width,
            trees,
        },
        history,
    ))
}

pub fn gbt_train(x: &[Vec<f64>], y: &[bool], params: &GbtParams) -> Result<GbtModel> {
    train_with_history(x, y, params).map(|(m, _)| m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util;
    use rand::Rng;

    fn blobs(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<bool>) {
        let mut rng = util::rng(seed);
        (0..n)
            .map(|i| {
                let y = i % 2 == 1;
                let c = if y { 1.5 } else { -1.5 };
                let g = |rng: &mut util::Rng| c + rng.sample::<f64, _>(rand_distr::StandardNormal);
                (vec![g(&mut rng), g(&mut rng)], y)
            })
            .unzip()
    }

    #[test]
    fn fits_blobs() {
        let (x, y) = blobs(200, 1);
        let params = GbtParams {
            n_estimators: 30,
            max_depth: 3,
            learning_rate: 0.3,
        };
        let (m, hist) = train_with_history(&x, &y, &params).unwrap();
        let correct = x.iter().zip(&y).filter(|(r, &t)| (m.predict_proba(r).unwrap() >= 0.5) == t).count();
        assert!(correct as f64 / 200.0 >= 0.95);
        assert!(hist.windows(2).all(|w| w[1] <= w[0]));
        assert!(m.trees.iter().all(|t| t.depth() <= 3));
    }

    #[test]
    fn recovers_stump_threshold() {
        let mut rng = util::rng(3);
        let mut xs: Vec<f64> = (0..60).map(|_| rng.random_range(0.0..10.0)).collect();
        xs.sort_by(f64::total_cmp);
        let truth = 6.3;
        let x: Vec<Vec<f64>> = xs.iter().map(|&v| vec![v]).collect();
        let y: Vec<bool> = xs.iter().map(|&v| v > truth).collect();
        let params = GbtParams {
            n_estimators: 1,
            max_depth: 1,
            learning_rate: 0.1,
        };
        let m = gbt_train(&x, &y, &params).unwrap();
        let (_, t) = m.trees[0].splits()[0];
        let below = xs.iter().copied().filter(|&v| v <= truth).fold(f64::MIN, f64::max);
        let above = xs.iter().copied().find(|&v| v > truth).unwrap();
        assert!(below < t && t <= above, "{below} < {t} <= {above}");
    }

    #[test]
    fn thresholds_are_training_midpoints() {
        let (x, y) = blobs(80, 2);
        let m = gbt_train(&x, &y, &GbtParams {
            n_estimators: 5,
            max_depth: 4,
            learning_rate: 0.1,
        })
        .unwrap();
        for tree in &m.trees {
            for (f, t) in tree.splits() {
                let mut v: Vec<f64> = x.iter().map(|r| r[f]).collect();
                v.sort_by(f64::total_cmp);
                v.dedup();
                assert!(v.windows(2).any(|w| w[0] + (w[1] - w[0]) / 2.0 == t));
            }
        }
    }

    #[test]
    fn zero_trees_give_prior() {
        let (x, y) = blobs(40, 4);
        let m = gbt_train(&x, &y, &GbtParams::default()).unwrap().truncated(0);
        assert!((m.predict_proba(&[0.0, 0.0]).unwrap() - 0.5).abs() < 1e-15);
        let y3: Vec<bool> = (0..40).map(|i| i % 4 == 0).collect();
        let m = gbt_train(&x, &y3, &GbtParams::default()).unwrap().truncated(0);
        assert!((m.predict_proba(&[0.0, 0.0]).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn positive_tree_raises_probabilities() {
        let (x, y) = blobs(40, 5);
        let m = gbt_train(&x, &y, &GbtParams::default()).unwrap();
        let mut bigger = m.clone();
        bigger.trees.push(Node::Leaf { value: 1.0 });
        for r in &x {
            assert!(bigger.predict_proba(r).unwrap() > m.predict_proba(r).unwrap());
        }
    }

    #[test]
    fn errors_and_determinism() {
        let (x, y) = blobs(30, 6);
        let bad = GbtParams {
            n_estimators: 0,
            ..Default::default()
        };
        assert!(gbt_train(&x, &y, &bad).is_err());
        assert!(gbt_train(&x, &[true; 30], &GbtParams::default()).is_err());
        let p = GbtParams {
            n_estimators: 10,
            max_depth: 3,
            learning_rate: 0.2,
        };
        assert_eq!(gbt_train(&x, &y, &p).unwrap(), gbt_train(&x, &y, &p).unwrap());
        let m = gbt_train(&x, &y, &p).unwrap();
        let back: GbtModel = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
