//! Writes a synthetic bilingual corpus to TSV, reads it back and prints its
//! label balance and length statistics.

use mgt_detect::corpus::{load_tsv, merge_bilingual, summarize, write_tsv, Language};
use mgt_detect::synth::{synth_bilingual, SynthConfig};

fn main() -> mgt_detect::error::Result<()> {
    let (en, es) = synth_bilingual(&SynthConfig { docs_per_class: 50, seed: 6, ..Default::default() })?;
    let dir = std::env::temp_dir().join("mgt-detect-corpus-example");
    std::fs::create_dir_all(&dir).map_err(|e| mgt_detect::error::Error::Io { path: dir.clone(), source: e })?;
    write_tsv(&en, dir.join("en.tsv"))?;
    write_tsv(&es, dir.join("es.tsv"))?;

    let corpus = merge_bilingual(&load_tsv(dir.join("en.tsv"), Language::En)?, &load_tsv(dir.join("es.tsv"), Language::Es)?);
    let summary = summarize(&corpus);
    for (group, s) in &summary.by_language_and_label {
        let mean_len = corpus
            .iter()
            .filter(|d| format!("{}/{}", d.language, d.label.map_or("unlabeled", |l| l.as_str())) == *group)
            .map(|d| d.text.chars().count())
            .sum::<usize>() as f64
            / s.documents as f64;
        println!("{group:<14} {:>4} documents, mean length {mean_len:.0} chars", s.documents);
    }
    println!("generated ratio: {:?}", summary.overall.generated_ratio);
    Ok(())
}
