//! ROC points and the two threshold rules on a small score set.

use mgt_detect::eval::{evaluate, roc_curve, select_threshold, ThresholdRule};

fn main() -> mgt_detect::error::Result<()> {
    let scores = [0.95, 0.85, 0.8, 0.7, 0.62, 0.55, 0.5, 0.4, 0.3, 0.2, 0.15, 0.05];
    let labels = [true, true, false, true, true, false, true, false, false, true, false, false];

    println!("{:>9} {:>6} {:>6}", "threshold", "tpr", "fpr");
    for p in roc_curve(&scores, &labels)? {
        println!("{:>9.3} {:>6.3} {:>6.3}", p.threshold, p.tpr, p.fpr);
    }
    for rule in [ThresholdRule::SumClosestToOne, ThresholdRule::Youden] {
        let t = select_threshold(&scores, &labels, rule)?;
        let report = evaluate(&scores, &labels, t)?;
        println!("\n{rule:?}:\n{}", report.to_table());
    }
    Ok(())
}
