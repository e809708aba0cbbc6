//! End-to-end plumbing: features, heterogeneous classifiers, checkpoints,
//! stacked training and prediction files.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{EmbeddingMode, ModelKind, RunConfig, SVM_WARN_TEXTS};
use crate::corpus::{merge_bilingual, split, Corpus, Document, Label, Language, SplitSpec};
use crate::embeddings::{embedding_feature_names, fallback_embed, EmbeddingTable, FallbackEmbedderConfig};
use crate::ensemble::{train_ensemble, BaseModel, EnsembleModel};
use crate::error::{check_dim, Error, Result};
use crate::eval::{binarize, evaluate_calls, macro_f1, select_threshold, EvalReport, ResultRow};
use crate::kernels::{svm_predict_proba, SvmModel};
use crate::neural::{LabeledInput, NeuralClassifier};
use crate::readability::{fit_scaler, text_features, ScalerParams, FEATURE_NAMES, NUM_FEATURES};
use crate::shallow::{gbt_train, grid_search, GbtModel, KnnModel};
use crate::synth::{synth_bilingual, SynthConfig};
use crate::textprep::{preprocess, PrepConfig};
use crate::util::{self, sig9};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Where the embedding block of a feature row comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum EmbeddingSpec {
    None,
    Fallback { config: FallbackEmbedderConfig },
    File { dim: usize },
}

impl EmbeddingSpec {
    pub fn from_config(cfg: &RunConfig, table: Option<&EmbeddingTable>) -> Result<Self> {
        match (cfg.features.embeddings, table) {
            (EmbeddingMode::File, Some(t)) => Ok(EmbeddingSpec::File { dim: t.dim() }),
            (EmbeddingMode::File, None) => Err(Error::config("features.embeddings = \"file\" needs an embeddings file")),
            (EmbeddingMode::Fallback, _) => Ok(EmbeddingSpec::Fallback {
                config: cfg.fallback_embedder(),
            }),
            (EmbeddingMode::None, _) => Ok(EmbeddingSpec::None),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            EmbeddingSpec::None => 0,
            EmbeddingSpec::Fallback { config } => config.dim,
            EmbeddingSpec::File { dim } => *dim,
        }
    }
}

/// Standardized readability block followed by the embedding block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Featurizer {
    pub scaler: ScalerParams,
    pub embedding: EmbeddingSpec,
}

/// A document with its feature row.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub text: String,
    pub language: Language,
    pub label: Option<Label>,
    pub features: Vec<f64>,
}

impl Sample {
    pub fn is_generated(&self) -> Result<bool> {
        self.label
            .map(Label::is_generated)
            .ok_or_else(|| Error::invalid(format!("document `{}` is unlabeled", self.id)))
    }
}

pub fn labels_of(samples: &[Sample]) -> Result<Vec<bool>> {
    samples.iter().map(Sample::is_generated).collect()
}

fn readability_rows(docs: &[Document]) -> Result<Vec<Vec<f64>>> {
    docs.par_iter()
        .map(|d| {
            text_features(&d.text, d.language)
                .map(|f| f.to_vec())
                .map_err(|e| Error::invalid(format!("document `{}`: {e}", d.id)))
        })
        .collect()
}

impl Featurizer {
    /// Fits the readability scaler on `docs`.
    pub fn fit(docs: &[Document], embedding: EmbeddingSpec) -> Result<Self> {
        if let EmbeddingSpec::Fallback { config } = &embedding {
            config.validate()?;
        }
        let scaler = fit_scaler(&readability_rows(docs)?)?;
        Ok(Featurizer { scaler, embedding })
    }

    pub fn width(&self) -> usize {
        NUM_FEATURES + self.embedding.dim()
    }

    pub fn has_embeddings(&self) -> bool {
        self.embedding.dim() > 0
    }

    pub fn feature_names(&self) -> Vec<String> {
        let mut names: Vec<String> = FEATURE_NAMES.iter().map(|s| s.to_string()).collect();
        names.extend(embedding_feature_names(self.embedding.dim()));
        names
    }

    fn check_table(&self, table: Option<&EmbeddingTable>) -> Result<()> {
        if let EmbeddingSpec::File { dim } = self.embedding {
            let t = table.ok_or_else(|| Error::config("this model was trained on file embeddings; pass an embeddings file"))?;
            check_dim(dim, t.dim())?;
        }
        Ok(())
    }

    fn embed(&self, doc: &Document, table: Option<&EmbeddingTable>) -> Result<Vec<f64>> {
        match &self.embedding {
            EmbeddingSpec::None => Ok(Vec::new()),
            EmbeddingSpec::Fallback { config } => Ok(fallback_embed(doc, config)),
            EmbeddingSpec::File { .. } => table
                .and_then(|t| t.get(&doc.id))
                .map(<[f64]>::to_vec)
                .ok_or_else(|| Error::invalid(format!("no embedding for document `{}`", doc.id))),
        }
    }

    pub fn features(&self, doc: &Document, table: Option<&EmbeddingTable>) -> Result<Vec<f64>> {
        self.check_table(table)?;
        let raw = text_features(&doc.text, doc.language).map_err(|e| Error::invalid(format!("document `{}`: {e}", doc.id)))?;
        let mut row = self.scaler.transform_row(&raw.to_vec())?;
        row.extend(self.embed(doc, table)?);
        Ok(row)
    }

    pub fn samples(&self, docs: &[Document], table: Option<&EmbeddingTable>) -> Result<Vec<Sample>> {
        self.check_table(table)?;
        docs.par_iter()
            .map(|d| {
                Ok(Sample {
                    id: d.id.clone(),
                    text: d.text.clone(),
                    language: d.language,
                    label: d.label,
                    features: self.features(d, table)?,
                })
            })
            .collect()
    }
}

/// Per-language cleanup applied before the string kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextPrep {
    pub remove_punctuation: bool,
    pub remove_stopwords: bool,
    pub lowercase: bool,
    pub stem: bool,
}

impl TextPrep {
    pub fn from_config(cfg: &RunConfig) -> Self {
        TextPrep {
            remove_punctuation: cfg.svm.remove_punctuation,
            remove_stopwords: cfg.svm.remove_stopwords,
            lowercase: cfg.svm.lowercase,
            stem: cfg.svm.stem,
        }
    }

    pub fn apply(&self, text: &str, language: Language) -> String {
        preprocess(
            text,
            &PrepConfig {
                remove_punctuation: self.remove_punctuation,
                remove_stopwords: self.remove_stopwords,
                lowercase: self.lowercase,
                stem: self.stem,
                language,
            },
        )
    }
}

/// Spectrum-kernel SVM over cleaned text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StringKernelClassifier {
    pub prep: TextPrep,
    pub svm: SvmModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Classifier {
    Knn(KnnModel),
    Gbt(GbtModel),
    Svm(StringKernelClassifier),
    Neural(NeuralClassifier),
}

impl Classifier {
    pub fn kind(&self) -> ModelKind {
        match self {
            Classifier::Knn(_) => ModelKind::Knn,
            Classifier::Gbt(_) => ModelKind::Gbt,
            Classifier::Svm(_) => ModelKind::Svm,
            Classifier::Neural(_) => ModelKind::Neural,
        }
    }

    /// Feature width the model expects; `None` for text-only models.
    pub fn input_width(&self) -> Option<usize> {
        match self {
            Classifier::Knn(m) => Some(m.width()),
            Classifier::Gbt(m) => Some(m.n_features),
            Classifier::Svm(_) => None,
            Classifier::Neural(m) => Some(m.params.input_dim),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Classifier::Knn(m) => m.validate(),
            Classifier::Gbt(m) => m.validate(),
            Classifier::Svm(m) => m.svm.kernel.validate(),
            Classifier::Neural(m) => m.params.validate(),
        }
    }
}

impl BaseModel for Classifier {
    type Input = Sample;

    fn predict_proba(&self, s: &Sample) -> Result<f64> {
        match self {
            Classifier::Knn(m) => m.predict_proba(&s.features),
            Classifier::Gbt(m) => m.predict_proba(&s.features),
            Classifier::Svm(m) => Ok(svm_predict_proba(&m.svm, &m.prep.apply(&s.text, s.language))),
            Classifier::Neural(m) => m.predict_proba(&s.features),
        }
    }
}

/// Result of fitting one base model.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: Classifier,
    /// Calibrated on the validation split.
    pub threshold: f64,
    pub validation_f1: f64,
    /// One JSON object per line of the training log.
    pub log: Vec<Value>,
    pub warnings: Vec<String>,
}

/// Stratified subsample of at most `max` indices, in ascending order.
fn subsample(labels: &[bool], max: usize, seed: u64) -> Vec<usize> {
    if labels.len() <= max {
        return (0..labels.len()).collect();
    }
    let mut rng = util::rng(seed);
    let mut keep = Vec::with_capacity(max);
    let pos = labels.iter().filter(|&&l| l).count();
    for class in [true, false] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        let share = if class { pos } else { labels.len() - pos };
        let k = ((share as f64 / labels.len() as f64) * max as f64).round() as usize;
        keep.extend_from_slice(&idx[..k.min(idx.len())]);
    }
    keep.sort_unstable();
    keep
}

fn predict_all(model: &Classifier, samples: &[Sample]) -> Result<Vec<f64>> {
    samples.par_iter().map(|s| model.predict_proba(s)).collect()
}

/// Fits one base model on `train`, using `val` for early stopping, grid
/// search and threshold calibration.
pub fn train_classifier(kind: ModelKind, featurizer: &Featurizer, train: &[Sample], val: &[Sample], cfg: &RunConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::invalid("training and validation splits must be nonempty"));
    }
    let y_train = labels_of(train)?;
    let y_val = labels_of(val)?;
    let x_train: Vec<Vec<f64>> = train.iter().map(|s| s.features.clone()).collect();
    let mut log = Vec::new();
    let mut warnings = Vec::new();
    let model = match kind {
        ModelKind::Knn => Classifier::Knn(KnnModel::fit(x_train, y_train, cfg.knn.k)?),
        ModelKind::Gbt => {
            if cfg.gbt.grid_search {
                let x_val: Vec<Vec<f64>> = val.iter().map(|s| s.features.clone()).collect();
                let r = grid_search(&x_train, &y_train, &x_val, &y_val, &cfg.gbt.grid)?;
                log.extend(r.scores.iter().map(|s| json!({"event": "grid", "params": s.params, "validation_f1": s.validation_f1})));
                Classifier::Gbt(r.model)
            } else {
                Classifier::Gbt(gbt_train(&x_train, &y_train, &cfg.gbt_params())?)
            }
        }
        ModelKind::Svm => {
            if train.len() > SVM_WARN_TEXTS {
                warnings.push(format!(
                    "string-kernel SVM on {} texts: the kernel matrix grows quadratically; consider fewer than {SVM_WARN_TEXTS}",
                    train.len()
                ));
            }
            let keep = subsample(&y_train, cfg.svm.max_train_texts, cfg.seed);
            if keep.len() < train.len() {
                warnings.push(format!("string-kernel SVM trained on a stratified subsample of {} texts", keep.len()));
            }
            let prep = TextPrep::from_config(cfg);
            let texts: Vec<String> = keep.par_iter().map(|&i| prep.apply(&train[i].text, train[i].language)).collect();
            let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
            let labels: Vec<bool> = keep.iter().map(|&i| y_train[i]).collect();
            let svm = SvmModel::fit(&refs, &labels, cfg.kernel(), &cfg.svm_params())?;
            log.push(json!({"event": "svm", "train_texts": refs.len(), "support_vectors": svm.support.len()}));
            Classifier::Svm(StringKernelClassifier { prep, svm })
        }
        ModelKind::Neural => {
            if !featurizer.has_embeddings() {
                return Err(Error::config("the neural model needs embeddings (features.embeddings = \"fallback\" or \"file\")"));
            }
            let to_inputs = |samples: &[Sample], y: &[bool]| -> Vec<LabeledInput> {
                samples
                    .iter()
                    .zip(y)
                    .map(|(s, &g)| LabeledInput {
                        x: s.features.clone(),
                        bot: if g { 1.0 } else { 0.0 },
                        lang: s.language.as_target(),
                    })
                    .collect()
            };
            let (m, tlog) = NeuralClassifier::fit(&to_inputs(train, &y_train), &to_inputs(val, &y_val), &cfg.neural_config())?;
            log.extend(tlog.epochs.iter().map(|e| {
                let mut v = serde_json::to_value(e).expect("epoch log serializes");
                v["event"] = json!("epoch");
                v
            }));
            Classifier::Neural(m)
        }
    };
    let val_probs = predict_all(&model, val)?;
    let threshold = if y_val.iter().any(|&y| y) && y_val.iter().any(|&y| !y) {
        select_threshold(&val_probs, &y_val, cfg.ensemble.threshold_rule)?
    } else {
        0.5
    };
    let validation_f1 = macro_f1(&y_val, &binarize(&val_probs, threshold))?;
    log.push(json!({
        "event": "done",
        "model": kind.name(),
        "train_size": train.len(),
        "validation_size": val.len(),
        "threshold": threshold,
        "validation_f1": validation_f1,
    }));
    Ok(TrainOutcome {
        model,
        threshold,
        validation_f1,
        log,
        warnings,
    })
}

/// A single trained model with its featurizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCheckpoint {
    pub version: u32,
    pub featurizer: Featurizer,
    pub threshold: f64,
    pub model: Classifier,
}

fn check_version(value: &Value, what: &str) -> Result<()> {
    match value.get("version").and_then(Value::as_u64) {
        Some(v) if v == CHECKPOINT_VERSION as u64 => Ok(()),
        Some(v) => Err(Error::Checkpoint(format!(
            "{what} has format version {v}; this build reads version {CHECKPOINT_VERSION}"
        ))),
        None => Err(Error::Checkpoint(format!(
            "{what} has no format version; expected a version {CHECKPOINT_VERSION} file"
        ))),
    }
}

fn read_versioned<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let what = path.display().to_string();
    let value: Value = serde_json::from_str(&text).map_err(|e| {
        Error::Checkpoint(format!("{what} is not a valid version {CHECKPOINT_VERSION} checkpoint: {e}"))
    })?;
    check_version(&value, &what)?;
    serde_json::from_value(value).map_err(|e| Error::Checkpoint(format!("{what}: {e}")))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").map_err(|e| Error::io(path, e))
}

fn check_compatible(featurizer: &Featurizer, model: &Classifier) -> Result<()> {
    model.validate()?;
    if let Some(w) = model.input_width() {
        check_dim(featurizer.width(), w)?;
    }
    Ok(())
}

impl ModelCheckpoint {
    pub fn new(featurizer: Featurizer, outcome: &TrainOutcome) -> Self {
        ModelCheckpoint {
            version: CHECKPOINT_VERSION,
            featurizer,
            threshold: outcome.threshold,
            model: outcome.model.clone(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let c: ModelCheckpoint = read_versioned(path)?;
        check_compatible(&c.featurizer, &c.model)?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FeaturizerFile {
    version: u32,
    featurizer: Featurizer,
}

/// Binary call and probability for one document.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub id: String,
    pub probability: f64,
    pub generated: bool,
}

/// A trained single model or stacked ensemble, ready to score documents.
#[derive(Debug, Clone, PartialEq)]
pub enum Detector {
    Single(ModelCheckpoint),
    Stacked {
        featurizer: Featurizer,
        ensemble: EnsembleModel<Classifier>,
    },
}

impl Detector {
    pub fn featurizer(&self) -> &Featurizer {
        match self {
            Detector::Single(c) => &c.featurizer,
            Detector::Stacked { featurizer, .. } => featurizer,
        }
    }

    /// Single models are JSON files; ensembles are bundle directories.
    pub fn save(&self, path: &Path) -> Result<()> {
        match self {
            Detector::Single(c) => c.save(path),
            Detector::Stacked { featurizer, ensemble } => {
                ensemble.save_bundle(path)?;
                write_json(
                    &path.join("featurizer.json"),
                    &FeaturizerFile {
                        version: CHECKPOINT_VERSION,
                        featurizer: featurizer.clone(),
                    },
                )
            }
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        if path.is_dir() {
            let f: FeaturizerFile = read_versioned(&path.join("featurizer.json"))?;
            let ensemble = EnsembleModel::<Classifier>::load_bundle(path)?;
            for m in &ensemble.members {
                check_compatible(&f.featurizer, &m.model)?;
            }
            Ok(Detector::Stacked {
                featurizer: f.featurizer,
                ensemble,
            })
        } else {
            ModelCheckpoint::load(path).map(Detector::Single)
        }
    }

    pub fn predict(&self, samples: &[Sample]) -> Result<Vec<Prediction>> {
        let scored: Vec<(f64, bool)> = match self {
            Detector::Single(c) => samples
                .par_iter()
                .map(|s| c.model.predict_proba(s).map(|p| (p, p >= c.threshold)))
                .collect::<Result<_>>()?,
            Detector::Stacked { ensemble, .. } => ensemble.predict_batch(samples)?,
        };
        Ok(samples
            .iter()
            .zip(scored)
            .map(|(s, (probability, generated))| Prediction {
                id: s.id.clone(),
                probability,
                generated,
            })
            .collect())
    }

    /// Featurizes `docs` and scores them.
    pub fn predict_documents(&self, docs: &[Document], table: Option<&EmbeddingTable>) -> Result<Vec<Prediction>> {
        self.predict(&self.featurizer().samples(docs, table)?)
    }
}

/// Everything produced by stacked training.
#[derive(Debug, Clone)]
pub struct StackedOutcome {
    pub detector: Detector,
    /// Base models in registry order, with their validation results.
    pub members: Vec<(ModelKind, TrainOutcome)>,
    /// Macro-F1 of every member and of the ensemble on the holdout.
    pub holdout_rows: Vec<ResultRow>,
    pub log: Vec<Value>,
}

/// Trains the configured base models on one part of `corpus` and the
/// meta-learner on a disjoint holdout.
///
/// The corpus is split (stratified) into base and holdout parts; the base
/// part is split again into train and validation with `cfg.split`.
pub fn train_stacked(corpus: &Corpus, cfg: &RunConfig, table: Option<&EmbeddingTable>) -> Result<StackedOutcome> {
    cfg.validate()?;
    if !corpus.is_fully_labeled() {
        return Err(Error::invalid("ensemble training needs a fully labeled corpus"));
    }
    let (base, holdout) = split(
        corpus,
        &SplitSpec {
            train_fraction: 1.0 - cfg.ensemble.holdout_fraction,
            seed: cfg.seed,
            stratify_by_label: true,
        },
    )?;
    let (train_docs, val_docs) = split(&base, &cfg.split_spec())?;
    let featurizer = Featurizer::fit(train_docs.documents(), EmbeddingSpec::from_config(cfg, table)?)?;
    let train = featurizer.samples(train_docs.documents(), table)?;
    let val = featurizer.samples(val_docs.documents(), table)?;
    let hold = featurizer.samples(holdout.documents(), table)?;
    let y_hold = labels_of(&hold)?;

    let mut log = Vec::new();
    let mut members = Vec::new();
    for &kind in &cfg.ensemble.members {
        let outcome = train_classifier(kind, &featurizer, &train, &val, cfg)?;
        log.extend(outcome.log.iter().cloned().map(|mut v| {
            v["member"] = json!(kind.name());
            v
        }));
        members.push((kind, outcome));
    }
    let registry: Vec<(String, Classifier)> = members.iter().map(|(k, o)| (k.name().to_string(), o.model.clone())).collect();
    let ensemble = train_ensemble(registry, &hold, &y_hold, &cfg.ensemble_config())?;

    let mut holdout_rows = Vec::new();
    for m in &ensemble.members {
        let p = predict_all(&m.model, &hold)?;
        holdout_rows.push(ResultRow {
            model: m.name.clone(),
            validation_f1: Some(macro_f1(&y_hold, &binarize(&p, m.threshold))?),
            test_f1: None,
        });
    }
    let calls: Vec<bool> = ensemble.predict_batch(&hold)?.into_iter().map(|(_, b)| b).collect();
    let ens_f1 = macro_f1(&y_hold, &calls)?;
    holdout_rows.push(ResultRow {
        model: "ensemble".into(),
        validation_f1: Some(ens_f1),
        test_f1: None,
    });
    log.push(json!({
        "event": "ensemble",
        "members": cfg.ensemble.members,
        "meta_params": ensemble.grid_best.params,
        "meta_grid_f1": ensemble.grid_best.validation_f1,
        "threshold": ensemble.threshold,
        "holdout_size": hold.len(),
        "holdout_f1": ens_f1,
    }));
    Ok(StackedOutcome {
        detector: Detector::Stacked { featurizer, ensemble },
        members,
        holdout_rows,
        log,
    })
}

/// Trains one base model on `corpus` (split into train and validation).
pub fn train_single(kind: ModelKind, corpus: &Corpus, cfg: &RunConfig, table: Option<&EmbeddingTable>) -> Result<(ModelCheckpoint, TrainOutcome)> {
    cfg.validate()?;
    if kind == ModelKind::Neural && cfg.features.embeddings == EmbeddingMode::None {
        return Err(Error::config("the neural model needs embeddings (features.embeddings = \"fallback\" or \"file\")"));
    }
    if !corpus.is_fully_labeled() {
        return Err(Error::invalid("training needs a fully labeled corpus"));
    }
    let (train_docs, val_docs) = split(corpus, &cfg.split_spec())?;
    let featurizer = Featurizer::fit(train_docs.documents(), EmbeddingSpec::from_config(cfg, table)?)?;
    let train = featurizer.samples(train_docs.documents(), table)?;
    let val = featurizer.samples(val_docs.documents(), table)?;
    let outcome = train_classifier(kind, &featurizer, &train, &val, cfg)?;
    Ok((ModelCheckpoint::new(featurizer, &outcome), outcome))
}

pub fn log_lines(log: &[Value]) -> String {
    log.iter().map(|v| v.to_string() + "\n").collect()
}

pub fn predictions_tsv(preds: &[Prediction]) -> String {
    let mut out = String::from("id\tprobability\tlabel\n");
    for p in preds {
        out.push_str(&format!(
            "{}\t{}\t{}\n",
            p.id,
            sig9(p.probability),
            Label::from_generated(p.generated).as_str()
        ));
    }
    out
}

pub fn parse_predictions_tsv(content: &str, path: &Path) -> Result<Vec<Prediction>> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = content.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == "id\tprobability\tlabel" => {}
        _ => return Err(err(1, "expected header `id<TAB>probability<TAB>label`".into())),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.trim_end_matches('\r').split('\t').collect();
        if cells.len() != 3 {
            return Err(err(i + 1, format!("expected 3 columns, found {}", cells.len())));
        }
        let probability: f64 = cells[1].parse().map_err(|_| err(i + 1, format!("bad probability `{}`", cells[1])))?;
        let label: Label = cells[2].parse().map_err(|e: Error| err(i + 1, e.to_string()))?;
        out.push(Prediction {
            id: cells[0].to_string(),
            probability,
            generated: label.is_generated(),
        });
    }
    Ok(out)
}

/// Scores predictions against gold labels; every predicted id must exist
/// in `gold` and carry a label.
pub fn evaluate_predictions(preds: &[Prediction], gold: &[Document]) -> Result<EvalReport> {
    let by_id: std::collections::HashMap<&str, &Document> = gold.iter().map(|d| (d.id.as_str(), d)).collect();
    let unknown: Vec<&str> = preds.iter().map(|p| p.id.as_str()).filter(|id| !by_id.contains_key(id)).collect();
    if !unknown.is_empty() {
        let shown: Vec<&str> = unknown.iter().take(10).copied().collect();
        return Err(Error::invalid(format!(
            "{} predicted id(s) missing from the gold corpus: {}",
            unknown.len(),
            shown.join(", ")
        )));
    }
    let labels: Vec<bool> = preds
        .iter()
        .map(|p| {
            by_id[p.id.as_str()]
                .label
                .map(Label::is_generated)
                .ok_or_else(|| Error::invalid(format!("gold document `{}` is unlabeled", p.id)))
        })
        .collect::<Result<_>>()?;
    let scores: Vec<f64> = preds.iter().map(|p| p.probability).collect();
    let calls: Vec<bool> = preds.iter().map(|p| p.generated).collect();
    evaluate_calls(&scores, &labels, &calls)
}

/// Settings for the synthetic bilingual benchmark.
///
/// The fixed embedding inputs here are far weaker than fine-tuned
/// transformers, so the neural member trains with a larger step size and
/// more epochs than the library defaults.
pub fn benchmark_config(seed: u64) -> RunConfig {
    let mut cfg = RunConfig {
        seed,
        ..Default::default()
    };
    cfg.split.stratify = true;
    cfg.neural.learning_rate = 1e-3;
    cfg.neural.epochs = 20;
    cfg.neural.patience = 3;
    cfg.neural.mtl = true;
    cfg.svm.max_train_texts = 1200;
    cfg
}

#[derive(Debug, Clone)]
pub struct BenchmarkReport {
    pub test: EvalReport,
    /// Holdout and test macro-F1 of every member and of the ensemble.
    pub rows: Vec<ResultRow>,
    pub stacked: StackedOutcome,
    pub test_predictions: Vec<Prediction>,
}

/// Generates a bilingual corpus, holds out a stratified test split, trains
/// the stacked detector on the rest and scores the test split.
pub fn run_synthetic_benchmark(synth: &SynthConfig, cfg: &RunConfig) -> Result<BenchmarkReport> {
    let (en, es) = synth_bilingual(synth)?;
    let corpus = merge_bilingual(&en, &es);
    let (train, test) = split(
        &corpus,
        &SplitSpec {
            train_fraction: 0.7,
            seed: cfg.seed ^ 0x7e57,
            stratify_by_label: true,
        },
    )?;
    let stacked = train_stacked(&train, cfg, None)?;
    let Detector::Stacked { featurizer, ensemble } = &stacked.detector else {
        unreachable!("train_stacked returns an ensemble")
    };
    let samples = featurizer.samples(test.documents(), None)?;
    let y_test = labels_of(&samples)?;
    let test_predictions = stacked.detector.predict(&samples)?;
    let test = evaluate_predictions(&test_predictions, test.documents())?;
    let mut rows = stacked.holdout_rows.clone();
    for (row, m) in rows.iter_mut().zip(&ensemble.members) {
        let p = predict_all(&m.model, &samples)?;
        row.test_f1 = Some(macro_f1(&y_test, &binarize(&p, m.threshold))?);
    }
    if let Some(last) = rows.last_mut() {
        last.test_f1 = Some(test.macro_f1);
    }
    Ok(BenchmarkReport {
        test,
        rows,
        stacked,
        test_predictions,
    })
}
