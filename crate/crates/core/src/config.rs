//! Run configuration: a TOML file with one table per pipeline stage.
//!
//! Every key is optional and defaults to the values below; unknown keys are
//! rejected. The top-level `seed` drives splitting, shuffling and every
//! model's randomness.
//!
//! ```toml
//! seed = 42
//!
//! [split]
//! train_fraction = 0.7
//! stratify = true
//!
//! [features]
//! embeddings = "fallback"   # or "file" or "none"
//! embedding_dim = 300
//!
//! [neural]
//! mtl = true
//! vat = true
//!
//! [ensemble]
//! members = ["neural", "knn", "svm"]
//! ```

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::SplitSpec;
use crate::embeddings::FallbackEmbedderConfig;
use crate::ensemble::EnsembleConfig;
use crate::error::{Error, Result};
use crate::eval::ThresholdRule;
use crate::kernels::{KernelConfig, NgramUnit, SvmParams};
use crate::neural::{MtlConfig, NeuralConfig, TrainConfig, VatConfig};
use crate::shallow::{GbtGrid, GbtParams};

pub const SEED_ENV: &str = "MGT_SEED";
pub const THREADS_ENV: &str = "MGT_THREADS";

/// Base model families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Knn,
    Gbt,
    Svm,
    Neural,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Knn, ModelKind::Gbt, ModelKind::Svm, ModelKind::Neural];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Knn => "knn",
            ModelKind::Gbt => "gbt",
            ModelKind::Svm => "svm",
            ModelKind::Neural => "neural",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config(format!("unknown model kind `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingMode {
    /// Hashed character n-gram vectors computed on the fly.
    Fallback,
    /// Precomputed vectors supplied as a file at run time.
    File,
    /// Readability features only.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub train_fraction: f64,
    pub stratify: bool,
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection {
            train_fraction: 0.7,
            stratify: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturesSection {
    pub embeddings: EmbeddingMode,
    pub embedding_dim: usize,
    pub ngram_min: usize,
    pub ngram_max: usize,
    /// Hash seed of the fallback embedding; part of the feature definition,
    /// so it is independent of the run seed.
    pub hash_seed: u64,
}

impl Default for FeaturesSection {
    fn default() -> Self {
        let f = FallbackEmbedderConfig::default();
        FeaturesSection {
            embeddings: EmbeddingMode::Fallback,
            embedding_dim: f.dim,
            ngram_min: f.ngram_min,
            ngram_max: f.ngram_max,
            hash_seed: f.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnnSection {
    pub k: usize,
}

impl Default for KnnSection {
    fn default() -> Self {
        KnnSection {
            k: crate::shallow::DEFAULT_K,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbtSection {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    /// Search the grid on the validation split instead of using the fixed
    /// hyperparameters above.
    pub grid_search: bool,
    pub grid: GbtGrid,
}

impl Default for GbtSection {
    fn default() -> Self {
        let p = GbtParams::default();
        GbtSection {
            n_estimators: p.n_estimators,
            max_depth: p.max_depth,
            learning_rate: p.learning_rate,
            grid_search: false,
            grid: GbtGrid::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmSection {
    pub nmin: usize,
    pub nmax: usize,
    pub unit: NgramUnit,
    pub normalize: bool,
    pub c: f64,
    pub tol: f64,
    pub max_passes: usize,
    /// Larger training sets are subsampled (stratified) to this size.
    pub max_train_texts: usize,
    pub remove_punctuation: bool,
    pub remove_stopwords: bool,
    pub lowercase: bool,
    pub stem: bool,
}

/// Training sets above this size get a scale warning.
pub const SVM_WARN_TEXTS: usize = 5000;

impl Default for SvmSection {
    fn default() -> Self {
        let k = KernelConfig::default();
        let p = SvmParams::default();
        SvmSection {
            nmin: k.nmin,
            nmax: k.nmax,
            unit: k.unit,
            normalize: k.normalize,
            c: p.c,
            tol: p.tol,
            max_passes: p.max_passes,
            max_train_texts: SVM_WARN_TEXTS,
            remove_punctuation: true,
            remove_stopwords: true,
            lowercase: true,
            stem: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NeuralSection {
    pub hidden: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub dropout: f64,
    pub weight_decay: f64,
    pub patience: usize,
    pub mtl: bool,
    pub mtl_alpha: f64,
    pub vat: bool,
    pub vat_alpha: f64,
    pub vat_epsilon: f64,
    pub vat_xi: f64,
    pub vat_power_iterations: usize,
}

impl Default for NeuralSection {
    fn default() -> Self {
        let n = NeuralConfig::default();
        NeuralSection {
            hidden: n.hidden,
            learning_rate: n.train.learning_rate,
            epochs: n.train.epochs,
            batch_size: n.train.batch_size,
            dropout: n.train.dropout,
            weight_decay: n.train.weight_decay,
            patience: n.train.early_stopping_patience,
            mtl: n.mtl.enabled,
            mtl_alpha: n.mtl.alpha,
            vat: n.vat.enabled,
            vat_alpha: n.vat.alpha,
            vat_epsilon: n.vat.epsilon,
            vat_xi: n.vat.xi,
            vat_power_iterations: n.vat.power_iterations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleSection {
    pub members: Vec<ModelKind>,
    /// Share of the training documents held out for the meta-learner.
    pub holdout_fraction: f64,
    pub meta_val_fraction: f64,
    pub threshold_rule: ThresholdRule,
    pub grid: GbtGrid,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        EnsembleSection {
            members: vec![ModelKind::Neural, ModelKind::Knn, ModelKind::Svm],
            holdout_fraction: 0.3,
            meta_val_fraction: EnsembleConfig::default().meta_val_fraction,
            threshold_rule: ThresholdRule::SumClosestToOne,
            grid: GbtGrid::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub split: SplitSection,
    pub features: FeaturesSection,
    pub knn: KnnSection,
    pub gbt: GbtSection,
    pub svm: SvmSection,
    pub neural: NeuralSection,
    pub ensemble: EnsembleSection,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        RunConfig::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks every stage's invariants.
    pub fn validate(&self) -> Result<()> {
        self.split_spec().validate()?;
        if self.features.embeddings == EmbeddingMode::Fallback {
            self.fallback_embedder().validate()?;
        }
        if self.knn.k == 0 {
            return Err(Error::config("knn.k must be at least 1"));
        }
        self.gbt_params().validate()?;
        if self.gbt.grid_search {
            self.gbt.grid.validate()?;
        }
        self.kernel().validate()?;
        self.svm_params().validate()?;
        if self.svm.max_train_texts < 2 {
            return Err(Error::config("svm.max_train_texts must be at least 2"));
        }
        self.neural_config().validate()?;
        let e = &self.ensemble;
        if e.members.len() < 2 {
            return Err(Error::config("ensemble.members needs at least two models"));
        }
        let mut seen = e.members.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != e.members.len() {
            return Err(Error::config("ensemble.members lists a model twice"));
        }
        if !(0.0 < e.holdout_fraction && e.holdout_fraction < 1.0) {
            return Err(Error::config("ensemble.holdout_fraction must lie in (0, 1)"));
        }
        if !(0.0 < e.meta_val_fraction && e.meta_val_fraction < 1.0) {
            return Err(Error::config("ensemble.meta_val_fraction must lie in (0, 1)"));
        }
        e.grid.validate()
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            train_fraction: self.split.train_fraction,
            seed: self.seed,
            stratify_by_label: self.split.stratify,
        }
    }

    pub fn fallback_embedder(&self) -> FallbackEmbedderConfig {
        FallbackEmbedderConfig {
            dim: self.features.embedding_dim,
            ngram_min: self.features.ngram_min,
            ngram_max: self.features.ngram_max,
            seed: self.features.hash_seed,
        }
    }

    pub fn gbt_params(&self) -> GbtParams {
        GbtParams {
            n_estimators: self.gbt.n_estimators,
            max_depth: self.gbt.max_depth,
            learning_rate: self.gbt.learning_rate,
        }
    }

    pub fn kernel(&self) -> KernelConfig {
        KernelConfig {
            nmin: self.svm.nmin,
            nmax: self.svm.nmax,
            unit: self.svm.unit,
            normalize: self.svm.normalize,
        }
    }

    pub fn svm_params(&self) -> SvmParams {
        SvmParams {
            c: self.svm.c,
            tol: self.svm.tol,
            max_passes: self.svm.max_passes,
            seed: self.seed,
        }
    }

    pub fn neural_config(&self) -> NeuralConfig {
        let n = &self.neural;
        NeuralConfig {
            hidden: n.hidden,
            mtl: MtlConfig {
                enabled: n.mtl,
                alpha: n.mtl_alpha,
            },
            vat: VatConfig {
                enabled: n.vat,
                alpha: n.vat_alpha,
                epsilon: n.vat_epsilon,
                xi: n.vat_xi,
                power_iterations: n.vat_power_iterations,
            },
            train: TrainConfig {
                learning_rate: n.learning_rate,
                epochs: n.epochs,
                batch_size: n.batch_size,
                dropout: n.dropout,
                weight_decay: n.weight_decay,
                early_stopping_patience: n.patience,
                seed: self.seed,
            },
        }
    }

    pub fn ensemble_config(&self) -> EnsembleConfig {
        EnsembleConfig {
            grid: self.ensemble.grid.clone(),
            rule: self.ensemble.threshold_rule,
            meta_val_fraction: self.ensemble.meta_val_fraction,
            seed: self.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_hyperparameters() {
        let c = RunConfig::default();
        c.validate().unwrap();
        let n = c.neural_config();
        assert_eq!(n.hidden, 64);
        assert_eq!(n.train.dropout, 0.2);
        assert_eq!(n.train.learning_rate, 1e-5);
        assert_eq!(n.mtl.alpha, 0.5);
        assert_eq!((n.vat.alpha, n.vat.epsilon, n.vat.xi), (1.0, 1.0, 10.0));
        assert_eq!(c.knn.k, 10);
        assert_eq!(c.gbt_params(), GbtParams { n_estimators: 3, max_depth: 5, learning_rate: 1e-3 });
    }

    #[test]
    fn parses_partial_file() {
        let c = RunConfig::parse("seed = 7\n[neural]\nmtl = true\nepochs = 3\n[ensemble]\nmembers = [\"knn\", \"gbt\"]\n").unwrap();
        assert_eq!(c.seed, 7);
        assert!(c.neural.mtl);
        assert_eq!(c.neural.epochs, 3);
        assert_eq!(c.neural.hidden, 64);
        assert_eq!(c.ensemble.members, vec![ModelKind::Knn, ModelKind::Gbt]);
        assert_eq!(RunConfig::parse(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(matches!(RunConfig::parse("sed = 1"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::parse("[neural]\nhiden = 3"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::parse("[neural]\nbatch_size = 64"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::parse("[neural]\ndropout = 1.0"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::parse("[ensemble]\nmembers = [\"knn\", \"knn\"]"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::parse("[svm]\nc = 0.0"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::parse("[knn]\nk = 0"), Err(Error::Config(_))));
    }
}
