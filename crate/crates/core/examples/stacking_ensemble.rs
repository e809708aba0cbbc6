//! Stacked detector: base models trained on one split, a boosted-tree
//! meta-learner on their outputs over a disjoint holdout. The bundle is
//! saved, reloaded and used to score new text.

use mgt_detect::config::ModelKind;
use mgt_detect::corpus::{merge_bilingual, Document, Language};
use mgt_detect::eval::results_table;
use mgt_detect::pipeline::{benchmark_config, train_stacked, Detector};
use mgt_detect::synth::{synth_bilingual, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (en, es) = synth_bilingual(&SynthConfig { docs_per_class: 300, seed: 4, ..Default::default() })?;
    let corpus = merge_bilingual(&en, &es);
    let mut cfg = benchmark_config(4);
    cfg.ensemble.members = vec![ModelKind::Neural, ModelKind::Knn, ModelKind::Svm, ModelKind::Gbt];
    let outcome = train_stacked(&corpus, &cfg, None)?;
    println!("holdout macro-F1 per model:\n{}", results_table(&outcome.holdout_rows));

    let dir = std::env::temp_dir().join("mgt-detect-stacking-example");
    outcome.detector.save(&dir)?;
    let detector = Detector::load(&dir)?;
    let docs = [
        Document::new("q1", "My sister always says that a good movie should be cozy. We went to the park.", Language::En),
        Document::new("q2", "the with my sistened the near the should meet is week offee lister", Language::En),
    ];
    for p in detector.predict_documents(&docs, None)? {
        println!("{}: meta probability {:.6}, generated = {}", p.id, p.probability, p.generated);
    }
    println!("bundle written to {}", dir.display());
    Ok(())
}
