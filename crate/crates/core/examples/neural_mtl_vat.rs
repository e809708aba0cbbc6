//! Feed-forward classifier over fallback embeddings, trained three ways:
//! bot head only, with the language head, and with adversarial smoothing.

use mgt_detect::corpus::{merge_bilingual, split, SplitSpec};
use mgt_detect::embeddings::{fallback_embed, FallbackEmbedderConfig};
use mgt_detect::neural::{evaluate_bot, train, LabeledInput, NeuralConfig};
use mgt_detect::synth::{synth_bilingual, SynthConfig};

fn main() -> mgt_detect::error::Result<()> {
    let (en, es) = synth_bilingual(&SynthConfig { docs_per_class: 150, seed: 2, ..Default::default() })?;
    let corpus = merge_bilingual(&en, &es);
    let (tr, va) = split(&corpus, &SplitSpec { train_fraction: 0.8, seed: 2, stratify_by_label: true })?;
    let emb = FallbackEmbedderConfig { dim: 128, ..Default::default() };
    let inputs = |c: &mgt_detect::corpus::Corpus| -> Vec<LabeledInput> {
        c.iter()
            .map(|d| LabeledInput {
                x: fallback_embed(d, &emb),
                bot: if d.label.unwrap().is_generated() { 1.0 } else { 0.0 },
                lang: d.language.as_target(),
            })
            .collect()
    };
    let (train_set, val_set) = (inputs(&tr), inputs(&va));

    for (name, mtl, vat) in [("plain", false, false), ("mtl", true, false), ("mtl+vat", true, true)] {
        let mut cfg = NeuralConfig::default();
        cfg.mtl.enabled = mtl;
        cfg.vat.enabled = vat;
        cfg.train.learning_rate = 1e-3;
        cfg.train.epochs = 15;
        cfg.train.early_stopping_patience = 3;
        let (params, log) = train(&train_set, &val_set, &cfg)?;
        let (loss, acc) = evaluate_bot(&params, &val_set)?;
        println!(
            "{name:<8} epochs {:>2} (best {}), validation loss {loss:.4}, accuracy {acc:.3}",
            log.epochs.len(),
            log.best_epoch
        );
    }
    Ok(())
}
