//! Spectrum string kernels and a kernel SVM over them.
//!
//! The spectrum kernel counts the *distinct* n-grams two strings share,
//! summed over every n in `nmin..=nmax`. N-grams are taken over characters
//! by default, or over whitespace-separated words. Normalized values divide
//! by the geometric mean of the two self-similarities.
//!
//! Kernel matrices cost O(n²) pairs; keep the training slice to a few
//! thousand texts.

mod svm;

pub use svm::{svm_predict_proba, svm_train, SvmModel, SvmParams, SvmSolution};

use std::collections::{HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::sig9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NgramUnit {
    Char,
    Word,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub nmin: usize,
    pub nmax: usize,
    pub unit: NgramUnit,
    pub normalize: bool,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            nmin: 3,
            nmax: 5,
            unit: NgramUnit::Char,
            normalize: true,
        }
    }
}

impl KernelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nmin == 0 || self.nmin > self.nmax {
            return Err(Error::config(format!(
                "kernel n-gram range must satisfy 1 <= nmin <= nmax, got {}..={}",
                self.nmin, self.nmax
            )));
        }
        Ok(())
    }
}

/// Word n-grams are joined with U+001F so they cannot collide with text.
const WORD_JOINER: char = '\u{1f}';

/// Every distinct n-gram of `text` over the configured range.
///
/// For a fixed unit, n-grams of different sizes are different strings, so
/// the union over sizes is a disjoint union.
pub fn distinct_ngrams(text: &str, cfg: &KernelConfig) -> HashSet<String> {
    let mut set = HashSet::new();
    match cfg.unit {
        NgramUnit::Char => {
            let bounds: Vec<usize> = text
                .char_indices()
                .map(|(i, _)| i)
                .chain(std::iter::once(text.len()))
                .collect();
            let n_chars = bounds.len() - 1;
            for n in cfg.nmin..=cfg.nmax.min(n_chars) {
                for start in 0..=n_chars - n {
                    set.insert(text[bounds[start]..bounds[start + n]].to_string());
                }
            }
        }
        NgramUnit::Word => {
            let words: Vec<&str> = text.split_whitespace().collect();
            let mut joiner = [0u8; 4];
            let joiner: &str = WORD_JOINER.encode_utf8(&mut joiner);
            for n in cfg.nmin..=cfg.nmax.min(words.len()) {
                for w in words.windows(n) {
                    set.insert(w.join(joiner));
                }
            }
        }
    }
    set
}

fn normalize_value(k: f64, kxx: f64, kyy: f64) -> f64 {
    if kxx == 0.0 || kyy == 0.0 {
        0.0
    } else {
        k / (kxx * kyy).sqrt()
    }
}

/// Unnormalized (exact integer) spectrum kernel.
pub fn spectrum_count(x: &str, y: &str, cfg: &KernelConfig) -> u64 {
    let a = distinct_ngrams(x, cfg);
    let b = distinct_ngrams(y, cfg);
    let (small, large) = if a.len() <= b.len() { (&a, &b) } else { (&b, &a) };
    small.iter().filter(|g| large.contains(*g)).count() as u64
}

pub fn spectrum_kernel(x: &str, y: &str, cfg: &KernelConfig) -> f64 {
    let k = spectrum_count(x, y, cfg) as f64;
    if !cfg.normalize {
        return k;
    }
    let kxx = distinct_ngrams(x, cfg).len() as f64;
    let kyy = distinct_ngrams(y, cfg).len() as f64;
    normalize_value(k, kxx, kyy)
}

/// Sorted interned n-gram ids of one text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct NgramProfile {
    ids: Vec<u32>,
}

impl NgramProfile {
    pub(crate) fn self_count(&self) -> u64 {
        self.ids.len() as u64
    }

    /// Size of the intersection of two sorted id lists.
    pub(crate) fn shared(&self, other: &NgramProfile) -> u64 {
        let (a, b) = (&self.ids, &other.ids);
        let (mut i, mut j, mut n) = (0, 0, 0u64);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }
}

/// Builds each text's n-gram set exactly once against a shared vocabulary.
pub(crate) fn build_profiles(texts: &[&str], cfg: &KernelConfig) -> Vec<NgramProfile> {
    interned_profiles(texts, cfg).1
}

/// Profiles plus the vocabulary that maps n-grams to their ids.
pub(crate) fn interned_profiles(texts: &[&str], cfg: &KernelConfig) -> (HashMap<String, u32>, Vec<NgramProfile>) {
    let sets: Vec<HashSet<String>> = texts.par_iter().map(|t| distinct_ngrams(t, cfg)).collect();
    let mut vocab: HashMap<String, u32> = HashMap::new();
    let profiles = sets
        .into_iter()
        .map(|set| {
            // Sorting the strings first makes id assignment independent of
            // hash iteration order.
            let mut grams: Vec<String> = set.into_iter().collect();
            grams.sort_unstable();
            let mut ids: Vec<u32> = grams
                .into_iter()
                .map(|g| {
                    let next = vocab.len() as u32;
                    *vocab.entry(g).or_insert(next)
                })
                .collect();
            ids.sort_unstable();
            NgramProfile { ids }
        })
        .collect();
    (vocab, profiles)
}

/// Symmetric Gram matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    n: usize,
    values: Vec<f64>,
    pub ids: Vec<String>,
}

impl KernelMatrix {
    pub fn from_values(n: usize, values: Vec<f64>) -> Result<Self> {
        crate::error::check_dim(n * n, values.len())?;
        Ok(KernelMatrix {
            n,
            values,
            ids: (0..n).map(|i| i.to_string()).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// TSV export: row id, then the row's values (9 significant digits).
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (i, id) in self.ids.iter().enumerate() {
            out.push_str(id);
            for x in self.row(i) {
                out.push('\t');
                out.push_str(&sig9(*x));
            }
            out.push('\n');
        }
        out
    }
}

/// Fills the Gram matrix in parallel; every entry is computed from the same
/// precomputed profiles, so the result does not depend on scheduling.
///
/// Normalized diagonals are exactly 1 for texts with at least one n-gram and
/// 0 for texts with none.
pub fn kernel_matrix(texts: &[&str], cfg: &KernelConfig) -> Result<KernelMatrix> {
    cfg.validate()?;
    if texts.is_empty() {
        return Err(Error::invalid("kernel matrix needs at least one text"));
    }
    let profiles = build_profiles(texts, cfg);
    let n = texts.len();
    let upper: Vec<Vec<u64>> = (0..n)
        .into_par_iter()
        .map(|i| (i..n).map(|j| profiles[i].shared(&profiles[j])).collect())
        .collect();
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for (off, &k) in upper[i].iter().enumerate() {
            let j = i + off;
            let v = if !cfg.normalize {
                k as f64
            } else if i == j {
                if k > 0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                normalize_value(k as f64, profiles[i].self_count() as f64, profiles[j].self_count() as f64)
            };
            values[i * n + j] = v;
            values[j * n + i] = v;
        }
    }
    Ok(KernelMatrix {
        n,
        values,
        ids: (0..n).map(|i| i.to_string()).collect(),
    })
}
