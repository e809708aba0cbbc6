//! Readability scores, their count ingredients, and column standardization.
//!
//! The feature set is fixed at ten columns, in this order:
//! `words, sentences, syllables, complex_words, polysyllables,
//! chars_per_word, words_per_sentence, flesch, gunning_fog, smog`.
//! Complex words and polysyllables both mean words of three or more
//! syllables (the Gunning-Fog and SMOG definitions coincide here).
//! The same formulas are used for English and Spanish; only the syllable
//! heuristic is language-specific.

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Language};
use crate::error::{check_dim, Error, Result};
use crate::textprep::{count_syllables, TokenizedDoc};
use crate::util::sig9;

pub const FEATURE_NAMES: [&str; 10] = [
    "words",
    "sentences",
    "syllables",
    "complex_words",
    "polysyllables",
    "chars_per_word",
    "words_per_sentence",
    "flesch",
    "gunning_fog",
    "smog",
];

pub const NUM_FEATURES: usize = FEATURE_NAMES.len();

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReadabilityFeatures {
    pub words: usize,
    pub sentences: usize,
    pub syllables: usize,
    pub complex_words: usize,
    pub polysyllables: usize,
    pub chars_per_word: f64,
    pub words_per_sentence: f64,
    pub flesch: f64,
    pub gunning_fog: f64,
    pub smog: f64,
}

impl ReadabilityFeatures {
    pub fn to_vec(&self) -> Vec<f64> {
        vec![
            self.words as f64,
            self.sentences as f64,
            self.syllables as f64,
            self.complex_words as f64,
            self.polysyllables as f64,
            self.chars_per_word,
            self.words_per_sentence,
            self.flesch,
            self.gunning_fog,
            self.smog,
        ]
    }
}

pub fn flesch_reading_ease(words: f64, sentences: f64, syllables: f64) -> f64 {
    206.835 - 1.015 * (words / sentences) - 84.6 * (syllables / words)
}

pub fn gunning_fog(words: f64, sentences: f64, complex_words: f64) -> f64 {
    0.4 * ((words / sentences) + 100.0 * (complex_words / words))
}

pub fn smog(polysyllables: f64, sentences: f64) -> f64 {
    1.0430 * (polysyllables * 30.0 / sentences).sqrt() + 3.1291
}

pub fn readability_features(doc: &Document) -> Result<ReadabilityFeatures> {
    text_features(&doc.text, doc.language)
        .map_err(|e| Error::invalid(format!("document `{}`: {e}", doc.id)))
}

/// Errors on text with no word tokens, where every score is undefined.
pub fn text_features(text: &str, language: Language) -> Result<ReadabilityFeatures> {
    if text.trim().is_empty() {
        return Err(Error::invalid("empty text has no readability scores"));
    }
    let tok = TokenizedDoc::new(text);
    let mut words = 0;
    let mut syllables = 0;
    let mut complex = 0;
    let mut chars = 0;
    for w in tok.words() {
        let s = count_syllables(w, language);
        words += 1;
        syllables += s;
        chars += w.chars().count();
        if s >= 3 {
            complex += 1;
        }
    }
    if words == 0 {
        return Err(Error::invalid("text contains no words"));
    }
    let sentences = tok.sentences.len();
    let (w, s) = (words as f64, sentences as f64);
    Ok(ReadabilityFeatures {
        words,
        sentences,
        syllables,
        complex_words: complex,
        polysyllables: complex,
        chars_per_word: chars as f64 / w,
        words_per_sentence: w / s,
        flesch: flesch_reading_ease(w, s, syllables as f64),
        gunning_fog: gunning_fog(w, s, complex as f64),
        smog: smog(complex as f64, s),
    })
}

/// Per-column mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub means: Vec<f64>,
    pub stddevs: Vec<f64>,
}

/// Columns whose deviation falls below this are left unscaled (stddev 1).
pub const MIN_STDDEV: f64 = 1e-12;

/// Two-pass fit: the result does not depend on how rows are chunked.
pub fn fit_scaler(rows: &[Vec<f64>]) -> Result<ScalerParams> {
    if rows.len() < 2 {
        return Err(Error::invalid(format!(
            "scaler needs at least 2 rows, got {}",
            rows.len()
        )));
    }
    let width = rows[0].len();
    for r in rows {
        check_dim(width, r.len())?;
    }
    let n = rows.len() as f64;
    let mut means = vec![0.0; width];
    for r in rows {
        for (m, x) in means.iter_mut().zip(r) {
            *m += x;
        }
    }
    means.iter_mut().for_each(|m| *m /= n);
    let mut vars = vec![0.0; width];
    for r in rows {
        for ((v, x), m) in vars.iter_mut().zip(r).zip(&means) {
            *v += (x - m) * (x - m);
        }
    }
    let stddevs = vars
        .into_iter()
        .map(|v| {
            let sd = (v / n).sqrt();
            if sd < MIN_STDDEV {
                1.0
            } else {
                sd
            }
        })
        .collect();
    Ok(ScalerParams { means, stddevs })
}

impl ScalerParams {
    pub fn width(&self) -> usize {
        self.means.len()
    }

    pub fn transform_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.width(), row.len())?;
        Ok(row
            .iter()
            .zip(&self.means)
            .zip(&self.stddevs)
            .map(|((x, m), s)| (x - m) / s)
            .collect())
    }
}

pub fn transform(rows: &[Vec<f64>], params: &ScalerParams) -> Result<Vec<Vec<f64>>> {
    rows.iter().map(|r| params.transform_row(r)).collect()
}

/// Feature matrix as TSV: `id` column, then one column per feature name.
pub fn feature_matrix_tsv<S: AsRef<str>>(ids: &[S], names: &[String], rows: &[Vec<f64>]) -> Result<String> {
    check_dim(ids.len(), rows.len())?;
    let mut out = String::from("id");
    for n in names {
        out.push('\t');
        out.push_str(n);
    }
    out.push('\n');
    for (id, row) in ids.iter().zip(rows) {
        check_dim(names.len(), row.len())?;
        out.push_str(id.as_ref());
        for x in row {
            out.push('\t');
            out.push_str(&sig9(*x));
        }
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn en(text: &str) -> ReadabilityFeatures {
        text_features(text, Language::En).unwrap()
    }

    #[test]
    fn cat_sat_on_the_mat() {
        let f = en("The cat sat on the mat.");
        assert_eq!((f.words, f.sentences, f.syllables), (6, 1, 6));
        assert!((f.flesch - 116.145).abs() < 1e-9);
        assert!((f.gunning_fog - 0.4 * 6.0).abs() < 1e-12);
    }

    #[test]
    fn smog_for_thirty_polysyllables() {
        // 30 sentences, each with one 3-syllable word ("beautiful").
        let text = "A beautiful day. ".repeat(30);
        let f = en(&text);
        assert_eq!((f.sentences, f.polysyllables), (30, 30));
        assert!((f.smog - (1.0430 * 30f64.sqrt() + 3.1291)).abs() < 1e-9);
    }

    #[test]
    fn empty_text_is_an_error() {
        assert!(text_features("", Language::En).is_err());
        assert!(text_features("?!", Language::En).is_err());
    }

    #[test]
    fn scaler_population_convention() {
        let rows = vec![vec![1.0, 5.0], vec![2.0, 5.0], vec![3.0, 5.0]];
        let p = fit_scaler(&rows).unwrap();
        assert_eq!(p.means, vec![2.0, 5.0]);
        assert!((p.stddevs[0] - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(p.stddevs[1], 1.0);
        let t = transform(&rows, &p).unwrap();
        for (got, want) in t.iter().map(|r| r[0]).zip([-1.224_744_871_391_589, 0.0, 1.224_744_871_391_589]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert_eq!(p.transform_row(&p.means).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn scaler_errors() {
        assert!(fit_scaler(&[vec![1.0]]).is_err());
        let p = fit_scaler(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert!(matches!(p.transform_row(&[1.0]), Err(Error::Dimension { .. })));
        // parameters from another corpus only check width
        assert!(p.transform_row(&[1e9, -1e9]).is_ok());
    }

    #[test]
    fn standardized_column_is_a_fixed_point() {
        let rows = vec![vec![-1.0], vec![1.0], vec![-1.0], vec![1.0]];
        let p = fit_scaler(&rows).unwrap();
        assert!(p.means[0].abs() < 1e-15 && (p.stddevs[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn feature_tsv_layout() {
        let names: Vec<String> = FEATURE_NAMES.iter().map(|s| s.to_string()).collect();
        let row = en("The cat sat on the mat.").to_vec();
        let tsv = feature_matrix_tsv(&["d1"], &names, &[row]).unwrap();
        let mut lines = tsv.lines();
        assert!(lines.next().unwrap().starts_with("id\twords\tsentences"));
        assert!(lines.next().unwrap().starts_with("d1\t6.00000000e0\t1.00000000e0"));
    }

    proptest! {
        #[test]
        fn flesch_decreases_with_syllables_per_word(
            words in 1.0f64..500.0, sentences in 1.0f64..50.0, spw in 1.0f64..4.0, bump in 1e-3f64..2.0,
        ) {
            let a = flesch_reading_ease(words, sentences, spw * words);
            let b = flesch_reading_ease(words, sentences, (spw + bump) * words);
            prop_assert!(b < a);
        }

        #[test]
        fn duplication_leaves_ratios_unchanged(text in "([A-Za-z]{1,12} ){1,15}[A-Za-z]{1,12}[.!?]") {
            let once = en(&text);
            let twice = en(&format!("{text} {text}"));
            prop_assert!((once.flesch - twice.flesch).abs() < 1e-9);
            prop_assert!((once.gunning_fog - twice.gunning_fog).abs() < 1e-9);
            prop_assert!((once.smog - twice.smog).abs() < 1e-9);
        }

        #[test]
        fn fit_transform_standardizes(
            rows in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 4), 2..40)
        ) {
            let p = fit_scaler(&rows).unwrap();
            let t = transform(&rows, &p).unwrap();
            let n = t.len() as f64;
            for c in 0..4 {
                if rows.iter().all(|r| r[c] == rows[0][c]) {
                    continue;
                }
                let mean = t.iter().map(|r| r[c]).sum::<f64>() / n;
                let var = t.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / n;
                prop_assert!(mean.abs() < 1e-10, "mean {}", mean);
                prop_assert!((var - 1.0).abs() < 1e-10, "var {}", var);
            }
        }
    }
}
