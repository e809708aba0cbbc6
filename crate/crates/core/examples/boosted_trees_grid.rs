//! Gradient-boosted trees on readability features, with the training loss
//! per round and a small hyperparameter grid search.

use mgt_detect::corpus::{split, Language, SplitSpec};
use mgt_detect::readability::{fit_scaler, readability_features, transform};
use mgt_detect::shallow::{grid_search, train_with_history, GbtGrid, GbtParams};
use mgt_detect::synth::{synth_corpus, SynthConfig};

fn main() -> mgt_detect::error::Result<()> {
    let corpus = synth_corpus(Language::Es, &SynthConfig { docs_per_class: 300, seed: 3, ..Default::default() })?;
    let (tr, va) = split(&corpus, &SplitSpec { train_fraction: 0.7, seed: 3, stratify_by_label: true })?;
    let rows = |c: &mgt_detect::corpus::Corpus| -> mgt_detect::error::Result<Vec<Vec<f64>>> {
        c.iter().map(|d| readability_features(d).map(|f| f.to_vec())).collect()
    };
    let (raw_tr, raw_va) = (rows(&tr)?, rows(&va)?);
    let scaler = fit_scaler(&raw_tr)?;
    let (x_tr, x_va) = (transform(&raw_tr, &scaler)?, transform(&raw_va, &scaler)?);
    let (y_tr, y_va) = (tr.labels()?, va.labels()?);

    let params = GbtParams { n_estimators: 20, max_depth: 3, learning_rate: 0.3 };
    let (_, history) = train_with_history(&x_tr, &y_tr, &params)?;
    let shown: Vec<String> = history.iter().step_by(5).map(|l| format!("{l:.4}")).collect();
    println!("training loss every 5 rounds: {}", shown.join(" "));

    let grid = GbtGrid { estimators: vec![5, 10, 20, 30], depths: vec![3, 5], learning_rates: vec![1e-2, 1e-1] };
    let result = grid_search(&x_tr, &y_tr, &x_va, &y_va, &grid)?;
    println!("{} grid points; best {:?} with validation macro-F1 {:.4}", result.scores.len(), result.best.params, result.best.validation_f1);
    Ok(())
}
