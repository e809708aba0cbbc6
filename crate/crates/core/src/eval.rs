//! Confusion counts, macro-F1, ROC points and the threshold rules built on them.
//!
//! The positive class is always "generated". A score `s` is predicted
//! positive at threshold `t` iff `s >= t`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionMatrix {
    pub fn from_predictions(y_true: &[bool], y_pred: &[bool]) -> Result<Self> {
        check_dim(y_true.len(), y_pred.len())?;
        let mut m = ConfusionMatrix::default();
        for (&t, &p) in y_true.iter().zip(y_pred) {
            match (t, p) {
                (true, true) => m.tp += 1,
                (false, true) => m.fp += 1,
                (false, false) => m.tn += 1,
                (true, false) => m.fn_ += 1,
            }
        }
        Ok(m)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// F1 of the generated class; 0 when it has no true or predicted members.
    pub fn f1_generated(&self) -> f64 {
        f1(self.tp, self.fp, self.fn_)
    }

    /// F1 of the human class, i.e. with the roles of the classes swapped.
    pub fn f1_human(&self) -> f64 {
        f1(self.tn, self.fn_, self.fp)
    }

    pub fn macro_f1(&self) -> f64 {
        (self.f1_generated() + self.f1_human()) / 2.0
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.total() as f64
    }
}

fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        (2 * tp) as f64 / denom as f64
    }
}

pub fn macro_f1(y_true: &[bool], y_pred: &[bool]) -> Result<f64> {
    if y_true.is_empty() {
        return Err(Error::invalid("macro-F1 of an empty label set"));
    }
    Ok(ConfusionMatrix::from_predictions(y_true, y_pred)?.macro_f1())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub tpr: f64,
    pub fpr: f64,
}

/// Ascending candidate thresholds for `scores`: 0, the midpoints between
/// consecutive distinct scores, and a top value that no score reaches
/// (1, or the next float above the maximum when some score is >= 1).
pub fn candidate_thresholds(scores: &[f64]) -> Vec<f64> {
    let mut sorted: Vec<f64> = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let mut out = vec![0.0];
    out.extend(sorted.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0));
    let max = sorted.last().copied().unwrap_or(0.0);
    out.push(if max >= 1.0 { max.next_up() } else { 1.0 });
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

/// Scores split by class and sorted, for counting `score >= t` in O(log n).
struct ClassScores {
    pos: Vec<f64>,
    neg: Vec<f64>,
}

impl ClassScores {
    fn new(scores: &[f64], labels: &[bool]) -> Result<Self> {
        check_dim(scores.len(), labels.len())?;
        if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
            return Err(Error::invalid(format!("non-finite score {bad}")));
        }
        let mut pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l).map(|(s, _)| *s).collect();
        let mut neg: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| !l).map(|(s, _)| *s).collect();
        if pos.is_empty() || neg.is_empty() {
            return Err(Error::invalid("ROC analysis needs both classes present"));
        }
        pos.sort_by(f64::total_cmp);
        neg.sort_by(f64::total_cmp);
        Ok(ClassScores { pos, neg })
    }

    /// `(tp, fp)` at threshold `t`.
    fn counts(&self, t: f64) -> (usize, usize) {
        let above = |v: &[f64]| v.len() - v.partition_point(|&s| s < t);
        (above(&self.pos), above(&self.neg))
    }
}

pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<RocPoint>> {
    let cs = ClassScores::new(scores, labels)?;
    let (p, n) = (cs.pos.len() as f64, cs.neg.len() as f64);
    Ok(candidate_thresholds(scores)
        .into_iter()
        .map(|t| {
            let (tp, fp) = cs.counts(t);
            RocPoint {
                threshold: t,
                tpr: tp as f64 / p,
                fpr: fp as f64 / n,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdRule {
    /// Minimize `|TPR + FPR - 1|`.
    #[default]
    SumClosestToOne,
    /// Maximize `TPR - FPR`.
    Youden,
}

/// Picks a candidate threshold by `rule`; ties go to the larger threshold.
///
/// Comparisons use integer counts (`|tp*N + fp*P - P*N|` and `tp*N - fp*P`),
/// so the result is exact.
pub fn select_threshold(scores: &[f64], labels: &[bool], rule: ThresholdRule) -> Result<f64> {
    let cs = ClassScores::new(scores, labels)?;
    let (p, n) = (cs.pos.len() as i128, cs.neg.len() as i128);
    let cost = |t: f64| {
        let (tp, fp) = cs.counts(t);
        let (tp, fp) = (tp as i128, fp as i128);
        match rule {
            ThresholdRule::SumClosestToOne => (tp * n + fp * p - p * n).abs(),
            ThresholdRule::Youden => -(tp * n - fp * p),
        }
    };
    let mut best = (i128::MAX, f64::NEG_INFINITY);
    for t in candidate_thresholds(scores) {
        let c = cost(t);
        // candidates ascend, so `<=` keeps the larger threshold on ties
        if c <= best.0 {
            best = (c, t);
        }
    }
    Ok(best.1)
}

pub fn binarize(scores: &[f64], threshold: f64) -> Vec<bool> {
    scores.iter().map(|&s| s >= threshold).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    /// Decision threshold, when the binary calls came from one.
    pub threshold: Option<f64>,
    pub macro_f1: f64,
    pub f1_per_class: BTreeMap<String, f64>,
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
    /// Empty when the labels contain a single class.
    pub roc: Vec<RocPoint>,
}

pub fn evaluate(scores: &[f64], labels: &[bool], threshold: f64) -> Result<EvalReport> {
    let mut report = evaluate_calls(scores, labels, &binarize(scores, threshold))?;
    report.threshold = Some(threshold);
    Ok(report)
}

/// Report for precomputed binary calls; `scores` only feed the ROC curve.
pub fn evaluate_calls(scores: &[f64], labels: &[bool], calls: &[bool]) -> Result<EvalReport> {
    if scores.is_empty() {
        return Err(Error::invalid("nothing to evaluate"));
    }
    check_dim(scores.len(), calls.len())?;
    let confusion = ConfusionMatrix::from_predictions(labels, calls)?;
    let roc = if labels.iter().any(|&l| l) && labels.iter().any(|&l| !l) {
        roc_curve(scores, labels)?
    } else {
        Vec::new()
    };
    let f1_per_class = BTreeMap::from([
        ("generated".to_string(), confusion.f1_generated()),
        ("human".to_string(), confusion.f1_human()),
    ]);
    Ok(EvalReport {
        n: scores.len(),
        threshold: None,
        macro_f1: confusion.macro_f1(),
        f1_per_class,
        accuracy: confusion.accuracy(),
        confusion,
        roc,
    })
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Short plain-text summary: headline metrics and the confusion matrix.
    pub fn to_table(&self) -> String {
        let c = &self.confusion;
        let mut out = format!("documents     {}\n", self.n);
        if let Some(t) = self.threshold {
            out.push_str(&format!("threshold     {t:.6}\n"));
        }
        out.push_str(&format!("macro F1      {:.2}\n", 100.0 * self.macro_f1));
        for (class, f1) in &self.f1_per_class {
            out.push_str(&format!("F1 {class:<11}{:.2}\n", 100.0 * f1));
        }
        out.push_str(&format!("accuracy      {:.2}\n\n", 100.0 * self.accuracy));
        out.push_str("gold \\ predicted  generated  human\n");
        out.push_str(&format!("generated         {:>9}  {:>5}\n", c.tp, c.fn_));
        out.push_str(&format!("human             {:>9}  {:>5}\n", c.fp, c.tn));
        out
    }
}

/// One line of a results table: a model and its F1 on each split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub model: String,
    pub validation_f1: Option<f64>,
    pub test_f1: Option<f64>,
}

/// Plain-text table with F1 shown as percentages, `-` for missing values.
pub fn results_table(rows: &[ResultRow]) -> String {
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{:.2}", 100.0 * x));
    let header = ["model", "validation F1", "test F1"];
    let cells: Vec<[String; 3]> = rows
        .iter()
        .map(|r| [r.model.clone(), fmt(r.validation_f1), fmt(r.test_f1)])
        .collect();
    let mut widths = header.map(str::len);
    for c in &cells {
        for (w, s) in widths.iter_mut().zip(c) {
            *w = (*w).max(s.chars().count());
        }
    }
    let line = |c: [&str; 3]| format!("{:<w0$}  {:>w1$}  {:>w2$}\n", c[0], c[1], c[2], w0 = widths[0], w1 = widths[1], w2 = widths[2]);
    let mut out = line(header);
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 4));
    out.push('\n');
    for c in &cells {
        out.push_str(&line([&c[0], &c[1], &c[2]]));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(v: &[u8]) -> Vec<bool> {
        v.iter().map(|&x| x == 1).collect()
    }

    #[test]
    fn macro_f1_hand_computed() {
        let m = macro_f1(&b(&[1, 1, 0, 0]), &b(&[1, 0, 0, 0])).unwrap();
        assert!((m - (2.0 / 3.0 + 0.8) / 2.0).abs() < 1e-15);
        assert_eq!(macro_f1(&b(&[1, 0, 1]), &b(&[1, 0, 1])).unwrap(), 1.0);
        assert_eq!(macro_f1(&b(&[1, 1, 0, 0]), &b(&[0, 0, 1, 1])).unwrap(), 0.0);
        assert!(macro_f1(&b(&[1]), &b(&[1, 0])).is_err());
        // single-class corpus predicted perfectly: the absent class scores 0
        assert_eq!(macro_f1(&b(&[1, 1]), &b(&[1, 1])).unwrap(), 0.5);
    }

    #[test]
    fn roc_examples() {
        let roc = roc_curve(&[0.2, 0.8], &b(&[0, 1])).unwrap();
        assert_eq!(roc.iter().map(|p| p.threshold).collect::<Vec<_>>(), vec![0.0, 0.5, 1.0]);
        assert_eq!((roc[0].tpr, roc[0].fpr), (1.0, 1.0));
        assert_eq!((roc[1].tpr, roc[1].fpr), (1.0, 0.0));
        assert_eq!((roc[2].tpr, roc[2].fpr), (0.0, 0.0));
        assert!(roc_curve(&[0.1, 0.2], &b(&[1, 1])).is_err());
    }

    #[test]
    fn top_candidate_clears_scores_of_one() {
        let c = candidate_thresholds(&[0.0, 1.0]);
        assert_eq!(c[0], 0.0);
        assert!(*c.last().unwrap() > 1.0);
        let roc = roc_curve(&[0.0, 1.0], &b(&[0, 1])).unwrap();
        assert_eq!(roc.last().map(|p| (p.tpr, p.fpr)), Some((0.0, 0.0)));
    }

    #[test]
    fn threshold_examples() {
        let t = select_threshold(&[0.1, 0.9], &b(&[0, 1]), ThresholdRule::SumClosestToOne).unwrap();
        assert_eq!(t, 0.5);
        // inverted scores: t=0 and t=1 both give |1+1-1| = |0+0-1| = 1 and
        // 0.5 gives |0 + 1 - 1| = 0
        let t = select_threshold(&[0.9, 0.1], &b(&[0, 1]), ThresholdRule::SumClosestToOne).unwrap();
        assert_eq!(t, 0.5);
        assert!(select_threshold(&[0.1], &b(&[1]), ThresholdRule::Youden).is_err());
    }

    #[test]
    fn ties_go_to_larger_threshold() {
        // Constant scores leave two candidates, 0 (TPR = FPR = 1) and 1
        // (TPR = FPR = 0), which tie under both rules.
        let t = select_threshold(&[0.4, 0.4, 0.4, 0.4], &b(&[0, 1, 0, 1]), ThresholdRule::Youden).unwrap();
        assert_eq!(t, 1.0);
        let t = select_threshold(&[0.4, 0.4, 0.4, 0.4], &b(&[0, 1, 0, 1]), ThresholdRule::SumClosestToOne).unwrap();
        assert_eq!(t, 1.0);
    }

    #[test]
    fn table_layout() {
        let t = results_table(&[
            ResultRow {
                model: "ensemble".into(),
                validation_f1: Some(0.9330),
                test_f1: Some(0.6663),
            },
            ResultRow {
                model: "knn".into(),
                validation_f1: None,
                test_f1: Some(0.5),
            },
        ]);
        let lines: Vec<&str> = t.lines().collect();
        assert!(lines[2].contains("93.30") && lines[2].contains("66.63"));
        assert!(lines[3].contains('-'));
        assert!(lines.iter().skip(2).all(|l| l.len() == lines[2].len()));
    }

    proptest! {
        #[test]
        fn macro_f1_matches_naive_and_is_swap_symmetric(v in prop::collection::vec((any::<bool>(), any::<bool>()), 1..60)) {
            let (t, p): (Vec<bool>, Vec<bool>) = v.into_iter().unzip();
            let naive = |cls: bool| {
                let tp = t.iter().zip(&p).filter(|(a, b)| **a == cls && **b == cls).count();
                let pred = p.iter().filter(|&&b| b == cls).count();
                let act = t.iter().filter(|&&a| a == cls).count();
                if pred + act == 0 { 0.0 } else { 2.0 * tp as f64 / (pred + act) as f64 }
            };
            let m = macro_f1(&t, &p).unwrap();
            prop_assert_eq!(m, (naive(true) + naive(false)) / 2.0);
            let nt: Vec<bool> = t.iter().map(|x| !x).collect();
            let np: Vec<bool> = p.iter().map(|x| !x).collect();
            prop_assert_eq!(macro_f1(&nt, &np).unwrap(), m);
        }

        #[test]
        fn roc_endpoints_and_monotone(v in prop::collection::vec((0.0f64..1.0, any::<bool>()), 2..50)) {
            let (s, l): (Vec<f64>, Vec<bool>) = v.into_iter().unzip();
            prop_assume!(l.iter().any(|&x| x) && l.iter().any(|&x| !x));
            let roc = roc_curve(&s, &l).unwrap();
            prop_assert_eq!((roc[0].tpr, roc[0].fpr), (1.0, 1.0));
            let last = roc.last().unwrap();
            prop_assert_eq!((last.tpr, last.fpr), (0.0, 0.0));
            for w in roc.windows(2) {
                prop_assert!(w[1].threshold > w[0].threshold);
                prop_assert!(w[1].tpr <= w[0].tpr && w[1].fpr <= w[0].fpr);
            }
        }
    }
}
