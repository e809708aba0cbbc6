//! Fixed document embeddings.
//!
//! Vectors are either read from a text file (`id<TAB>v1 v2 ... vd`, one
//! record per line, values written with 9 significant digits) or produced by
//! a seeded feature-hashing fallback over character n-grams. The fallback
//! keeps everything runnable offline; detection quality on real data needs
//! real pre-trained embeddings supplied through a file.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use xxhash_rust::xxh64::xxh64;

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::readability::{FEATURE_NAMES, NUM_FEATURES};
use crate::textprep::{preprocess, PrepConfig};
use crate::util::{l2_norm, sig9};

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    ids: Vec<String>,
    vectors: Vec<Vec<f64>>,
    index: HashMap<String, usize>,
}

impl EmbeddingTable {
    pub fn new(entries: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let dim = entries
            .first()
            .map(|(_, v)| v.len())
            .ok_or_else(|| Error::invalid("no vectors"))?;
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        let mut table = EmbeddingTable {
            dim,
            ids: Vec::with_capacity(entries.len()),
            vectors: Vec::with_capacity(entries.len()),
            index: HashMap::with_capacity(entries.len()),
        };
        for (id, v) in entries {
            if v.len() != dim {
                return Err(Error::invalid(format!(
                    "ragged embedding for `{id}`: expected {dim} values, got {}",
                    v.len()
                )));
            }
            if table.index.insert(id.clone(), table.ids.len()).is_some() {
                return Err(Error::DuplicateId(id));
            }
            table.ids.push(id);
            table.vectors.push(v);
        }
        Ok(table)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.index.get(id).map(|&i| self.vectors[i].as_slice())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.ids.iter().map(String::as_str).zip(self.vectors.iter().map(Vec::as_slice))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (id, v) in self.iter() {
            out.push_str(id);
            out.push('\t');
            let vals: Vec<String> = v.iter().map(|x| sig9(*x)).collect();
            out.push_str(&vals.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn parse(content: &str, path: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in content.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |msg: String| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg,
            };
            let (id, values) = line
                .split_once('\t')
                .ok_or_else(|| parse_err("expected `id<TAB>values`".into()))?;
            let v = values
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .ok_or_else(|| parse_err(format!("non-numeric value `{tok}`")))
                })
                .collect::<Result<Vec<f64>>>()?;
            entries.push((id.to_string(), v));
        }
        EmbeddingTable::new(entries)
    }
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    EmbeddingTable::parse(&content, path)
}

pub fn save_embeddings(table: &EmbeddingTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, table.to_text()).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FallbackEmbedderConfig {
    pub dim: usize,
    pub ngram_min: usize,
    pub ngram_max: usize,
    pub seed: u64,
}

impl Default for FallbackEmbedderConfig {
    fn default() -> Self {
        FallbackEmbedderConfig {
            dim: 300,
            ngram_min: 3,
            ngram_max: 5,
            seed: 0,
        }
    }
}

impl FallbackEmbedderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::config("embedding dim must be positive"));
        }
        if self.ngram_min == 0 || self.ngram_min > self.ngram_max {
            return Err(Error::config(format!(
                "invalid n-gram range {}..={}",
                self.ngram_min, self.ngram_max
            )));
        }
        Ok(())
    }
}

const SIGN_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// Signed feature hashing of character n-grams, L2-normalized.
///
/// The text is lowercased and stripped of punctuation first (no stopword
/// removal or stemming), which also normalizes whitespace. Texts shorter than
/// `ngram_min` characters hash as a single feature. The result is the zero
/// vector only if every bucket cancels exactly.
pub fn fallback_embed_text(text: &str, language: crate::corpus::Language, cfg: &FallbackEmbedderConfig) -> Vec<f64> {
    let prep = PrepConfig {
        remove_punctuation: true,
        remove_stopwords: false,
        lowercase: true,
        stem: false,
        language,
    };
    let mut cleaned = preprocess(text, &prep);
    if cleaned.is_empty() {
        cleaned = text.trim().to_string();
    }
    let chars: Vec<(usize, char)> = cleaned.char_indices().collect();
    let mut v = vec![0.0; cfg.dim];
    let sign_seed = cfg.seed ^ SIGN_SEED_SALT;
    let mut add = |gram: &str| {
        let bytes = gram.as_bytes();
        let bucket = (xxh64(bytes, cfg.seed) % cfg.dim as u64) as usize;
        let sign = if xxh64(bytes, sign_seed) & 1 == 0 { 1.0 } else { -1.0 };
        v[bucket] += sign;
    };
    let mut any = false;
    for n in cfg.ngram_min..=cfg.ngram_max {
        if chars.len() < n {
            break;
        }
        for start in 0..=chars.len() - n {
            let from = chars[start].0;
            let to = chars.get(start + n).map_or(cleaned.len(), |&(i, _)| i);
            add(&cleaned[from..to]);
            any = true;
        }
    }
    if !any {
        add(&cleaned);
    }
    let norm = l2_norm(&v);
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

pub fn fallback_embed(doc: &Document, cfg: &FallbackEmbedderConfig) -> Vec<f64> {
    fallback_embed_text(&doc.text, doc.language, cfg)
}

/// Named feature row: scaled readability block first, then embedding dims.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub names: Vec<String>,
    pub values: Vec<f64>,
}

pub fn embedding_feature_names(dim: usize) -> Vec<String> {
    (0..dim).map(|i| format!("emb_{i}")).collect()
}

pub fn concat_features(readability: &[f64], embedding: &[f64]) -> Result<FeatureVector> {
    crate::error::check_dim(NUM_FEATURES, readability.len())?;
    if embedding.is_empty() {
        return Err(Error::invalid("embedding must be nonempty"));
    }
    let mut names: Vec<String> = FEATURE_NAMES.iter().map(|s| s.to_string()).collect();
    names.extend(embedding_feature_names(embedding.len()));
    let mut values = readability.to_vec();
    values.extend_from_slice(embedding);
    Ok(FeatureVector { names, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Language;
    use proptest::prelude::*;
    use rand::Rng;

    fn table_text(rows: &[(&str, usize)]) -> String {
        rows.iter()
            .map(|(id, d)| format!("{id}\t{}\n", vec!["0.5"; *d].join(" ")))
            .collect()
    }

    #[test]
    fn parses_table() {
        let t = EmbeddingTable::parse(&table_text(&[("a", 300), ("b", 300), ("c", 300)]), Path::new("e")).unwrap();
        assert_eq!((t.dim(), t.len()), (300, 3));
        assert_eq!(t.get("b").unwrap()[299], 0.5);
    }

    #[test]
    fn ragged_and_bad_tokens() {
        let err = EmbeddingTable::parse(&table_text(&[("a", 300), ("b", 299)]), Path::new("e")).unwrap_err();
        assert!(err.to_string().contains("`b`"), "{err}");
        let err = EmbeddingTable::parse("a\t1 2\nb\t1 x\n", Path::new("e")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = EmbeddingTable::parse("", Path::new("e")).unwrap_err();
        assert!(err.to_string().contains("no vectors"));
    }

    #[test]
    fn fallback_is_deterministic_and_unit_norm() {
        let cfg = FallbackEmbedderConfig::default();
        let a = fallback_embed_text("The quick brown fox.", Language::En, &cfg);
        let b = fallback_embed_text("The quick brown fox.", Language::En, &cfg);
        assert_eq!(a, b);
        assert!((l2_norm(&a) - 1.0).abs() < 1e-9);
        let short = fallback_embed_text("!", Language::En, &cfg);
        assert!((l2_norm(&short) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn fallback_ignores_trailing_whitespace() {
        let cfg = FallbackEmbedderConfig::default();
        assert_eq!(
            fallback_embed_text("hola mundo", Language::Es, &cfg),
            fallback_embed_text("hola mundo  \n\t", Language::Es, &cfg)
        );
    }

    #[test]
    fn unrelated_texts_are_nearly_orthogonal() {
        // 100 pairs of random 600-char texts; the worst |cosine| observed with
        // this seed is well below the 0.2 bound.
        let cfg = FallbackEmbedderConfig::default();
        let mut rng = crate::util::rng(99);
        let random_text = |rng: &mut crate::util::Rng| -> String {
            (0..600)
                .map(|_| {
                    if rng.random_bool(0.18) {
                        ' '
                    } else {
                        rng.random_range(b'a'..=b'z') as char
                    }
                })
                .collect()
        };
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let a = fallback_embed_text(&random_text(&mut rng), Language::En, &cfg);
            let b = fallback_embed_text(&random_text(&mut rng), Language::En, &cfg);
            worst = worst.max(crate::util::dot(&a, &b).abs());
        }
        assert!(worst < 0.2, "worst cosine {worst}");
    }

    #[test]
    fn concat_layout() {
        let r: Vec<f64> = (0..10).map(f64::from).collect();
        let fv = concat_features(&r, &vec![0.0; 300]).unwrap();
        assert_eq!(fv.values.len(), 310);
        assert_eq!(&fv.values[..10], r.as_slice());
        assert!(fv.values[10..].iter().all(|&x| x == 0.0));
        assert_eq!(fv.names[10], "emb_0");
        assert!(concat_features(&r, &[]).is_err());
    }

    proptest! {
        #[test]
        fn save_load_round_trip(
            rows in prop::collection::vec(prop::collection::vec(-1e6f64..1e6, 5), 1..20)
        ) {
            let entries: Vec<_> = rows.into_iter().enumerate().map(|(i, v)| (format!("id{i}"), v)).collect();
            // Quantize once through the 9-digit text format; from then on the
            // table round-trips bit-exactly.
            let t = EmbeddingTable::parse(&EmbeddingTable::new(entries).unwrap().to_text(), Path::new("m")).unwrap();
            let back = EmbeddingTable::parse(&t.to_text(), Path::new("m")).unwrap();
            prop_assert_eq!(back, t);
        }
    }
}
