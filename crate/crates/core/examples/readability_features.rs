//! Readability scores for a few English and Spanish sentences, then the
//! standardized feature matrix the classifiers consume.

use mgt_detect::corpus::{Document, Language};
use mgt_detect::readability::{feature_matrix_tsv, fit_scaler, readability_features, transform, FEATURE_NAMES};

fn main() -> mgt_detect::error::Result<()> {
    let docs = [
        Document::new("en-1", "The cat sat on the mat.", Language::En),
        Document::new("en-2", "Comprehensive institutional documentation necessitates considerable deliberation.", Language::En),
        Document::new("es-1", "El perro come carne. La canción es bonita.", Language::Es),
        Document::new("es-2", "La administración pública necesita una organización eficiente.", Language::Es),
    ];
    println!("{:<6} {:>6} {:>9} {:>8} {:>8} {:>7}", "id", "words", "syllables", "flesch", "fog", "smog");
    let mut rows = Vec::new();
    for d in &docs {
        let f = readability_features(d)?;
        println!(
            "{:<6} {:>6} {:>9} {:>8.2} {:>8.2} {:>7.2}",
            d.id, f.words, f.syllables, f.flesch, f.gunning_fog, f.smog
        );
        rows.push(f.to_vec());
    }

    let scaler = fit_scaler(&rows)?;
    let scaled = transform(&rows, &scaler)?;
    let names: Vec<String> = FEATURE_NAMES.iter().map(|s| s.to_string()).collect();
    let ids: Vec<&str> = docs.iter().map(|d| d.id.as_str()).collect();
    println!("\nstandardized:\n{}", feature_matrix_tsv(&ids, &names, &scaled)?);
    Ok(())
}
