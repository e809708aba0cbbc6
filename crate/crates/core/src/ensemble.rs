//! Stacking: base-model probabilities and binary calls feed a boosted-tree
//! meta-learner whose decision threshold is calibrated on a holdout set.
//!
//! Base models must be trained on data disjoint from the holdout passed to
//! [`train_ensemble`]; the meta-learner is only ever fit on the holdout.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::eval::{select_threshold, ThresholdRule};
use crate::shallow::{gbt_train, grid_search, GbtGrid, GbtModel, GridScore};
use crate::util;

pub use crate::eval::RocPoint;

pub const MIN_HOLDOUT: usize = 20;
pub const BUNDLE_VERSION: u32 = 1;

/// Anything that scores an input with a probability of being generated.
pub trait BaseModel: Send + Sync {
    type Input: Sync;

    fn predict_proba(&self, input: &Self::Input) -> Result<f64>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasePrediction {
    pub model_name: String,
    pub probability: f64,
    pub binary: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetaField {
    Probability,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetaFeature {
    pub model: String,
    pub field: MetaField,
}

/// `[p1, b1, p2, b2, ...]` following `registry` order.
pub fn meta_feature_order(registry: &[String]) -> Vec<MetaFeature> {
    registry
        .iter()
        .flat_map(|m| {
            [MetaField::Probability, MetaField::Binary].map(|field| MetaFeature {
                model: m.clone(),
                field,
            })
        })
        .collect()
}

/// Lays out one prediction per registered model, in registry order.
pub fn meta_features(registry: &[String], preds: &[BasePrediction]) -> Result<Vec<f64>> {
    let by_name: HashMap<&str, &BasePrediction> = preds.iter().map(|p| (p.model_name.as_str(), p)).collect();
    if by_name.len() != preds.len() {
        return Err(Error::invalid("duplicate base prediction"));
    }
    if let Some(extra) = preds.iter().find(|p| !registry.contains(&p.model_name)) {
        return Err(Error::invalid(format!("prediction from unregistered model `{}`", extra.model_name)));
    }
    registry
        .iter()
        .map(|name| {
            let p = by_name
                .get(name.as_str())
                .ok_or_else(|| Error::invalid(format!("missing prediction from model `{name}`")))?;
            Ok([p.probability, if p.binary { 1.0 } else { 0.0 }])
        })
        .collect::<Result<Vec<_>>>()
        .map(|v| v.concat())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Member<M> {
    pub name: String,
    pub model: M,
    /// Cut-off for this member's binary meta-feature.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub grid: GbtGrid,
    pub rule: ThresholdRule,
    /// Share of the holdout used to score grid points; the chosen
    /// configuration is then refit on the whole holdout.
    pub meta_val_fraction: f64,
    pub seed: u64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            grid: GbtGrid::default(),
            rule: ThresholdRule::SumClosestToOne,
            meta_val_fraction: 0.3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel<M> {
    pub members: Vec<Member<M>>,
    pub meta: GbtModel,
    pub meta_feature_order: Vec<MetaFeature>,
    pub threshold: f64,
    pub rule: ThresholdRule,
    pub grid_best: GridScore,
}

fn check_name(name: &str) -> Result<()> {
    let ok = !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
    if ok {
        Ok(())
    } else {
        Err(Error::invalid(format!("model name `{name}` must be nonempty [A-Za-z0-9_-]")))
    }
}

/// Per-model probabilities on `inputs`, models in parallel.
fn score_members<M: BaseModel>(models: &[(String, M)], inputs: &[M::Input]) -> Result<Vec<Vec<f64>>> {
    models
        .par_iter()
        .map(|(_, m)| inputs.iter().map(|x| m.predict_proba(x)).collect())
        .collect()
}

/// Stratified index split: roughly `fraction` of each class goes to the
/// second part, at least one of each class on both sides.
fn stratified_split(labels: &[bool], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = util::rng(seed);
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for class in [false, true] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        let k = ((idx.len() as f64 * fraction).round() as usize).clamp(1, idx.len().saturating_sub(1).max(1));
        b.extend_from_slice(&idx[..k]);
        a.extend_from_slice(&idx[k..]);
    }
    a.sort_unstable();
    b.sort_unstable();
    (a, b)
}

pub fn train_ensemble<M: BaseModel>(
    models: Vec<(String, M)>,
    holdout: &[M::Input],
    labels: &[bool],
    cfg: &EnsembleConfig,
) -> Result<EnsembleModel<M>> {
    if models.len() < 2 {
        return Err(Error::invalid("stacking needs at least two base models"));
    }
    let mut seen = HashSet::new();
    for (name, _) in &models {
        check_name(name)?;
        if !seen.insert(name.as_str()) {
            return Err(Error::invalid(format!("duplicate base model name `{name}`")));
        }
    }
    check_dim(holdout.len(), labels.len())?;
    if holdout.len() < MIN_HOLDOUT {
        return Err(Error::invalid(format!(
            "holdout has {} samples, at least {MIN_HOLDOUT} required",
            holdout.len()
        )));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    if pos < 2 || labels.len() - pos < 2 {
        return Err(Error::invalid("holdout needs at least two samples of each class"));
    }
    if !(0.0 < cfg.meta_val_fraction && cfg.meta_val_fraction < 1.0) {
        return Err(Error::config("meta validation fraction must lie in (0, 1)"));
    }
    cfg.grid.validate()?;

    let probs = score_members(&models, holdout)?;
    let thresholds: Vec<f64> = probs
        .iter()
        .map(|p| select_threshold(p, labels, cfg.rule))
        .collect::<Result<_>>()?;
    let registry: Vec<String> = models.iter().map(|(n, _)| n.clone()).collect();
    let rows: Vec<Vec<f64>> = (0..holdout.len())
        .map(|i| {
            probs
                .iter()
                .zip(&thresholds)
                .flat_map(|(p, &t)| [p[i], if p[i] >= t { 1.0 } else { 0.0 }])
                .collect()
        })
        .collect();

    let (fit_idx, val_idx) = stratified_split(labels, cfg.meta_val_fraction, cfg.seed);
    let pick = |idx: &[usize]| -> (Vec<Vec<f64>>, Vec<bool>) { idx.iter().map(|&i| (rows[i].clone(), labels[i])).unzip() };
    let (x_fit, y_fit) = pick(&fit_idx);
    let (x_val, y_val) = pick(&val_idx);
    let search = grid_search(&x_fit, &y_fit, &x_val, &y_val, &cfg.grid)?;
    let meta = gbt_train(&rows, labels, &search.best.params)?;
    let meta_probs: Vec<f64> = rows.iter().map(|r| meta.predict_proba(r)).collect::<Result<_>>()?;
    let threshold = select_threshold(&meta_probs, labels, cfg.rule)?;

    Ok(EnsembleModel {
        members: models
            .into_iter()
            .zip(thresholds)
            .map(|((name, model), threshold)| Member { name, model, threshold })
            .collect(),
        meta,
        meta_feature_order: meta_feature_order(&registry),
        threshold,
        rule: cfg.rule,
        grid_best: search.best,
    })
}

impl<M: BaseModel> EnsembleModel<M> {
    pub fn registry(&self) -> Vec<String> {
        self.members.iter().map(|m| m.name.clone()).collect()
    }

    pub fn base_predictions(&self, input: &M::Input) -> Result<Vec<BasePrediction>> {
        self.members
            .iter()
            .map(|m| {
                let p = m.model.predict_proba(input)?;
                Ok(BasePrediction {
                    model_name: m.name.clone(),
                    probability: p,
                    binary: p >= m.threshold,
                })
            })
            .collect()
    }

    /// Meta probability and the binary call (`probability >= threshold`).
    pub fn predict(&self, input: &M::Input) -> Result<(f64, bool)> {
        let feats = meta_features(&self.registry(), &self.base_predictions(input)?)?;
        check_dim(self.meta_feature_order.len(), feats.len())?;
        let p = self.meta.predict_proba(&feats)?;
        Ok((p, p >= self.threshold))
    }

    pub fn predict_batch(&self, inputs: &[M::Input]) -> Result<Vec<(f64, bool)>> {
        inputs.par_iter().map(|x| self.predict(x)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestMember {
    pub name: String,
    pub file: String,
    pub threshold: f64,
}

/// `manifest.json` of an ensemble bundle directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub version: u32,
    pub members: Vec<ManifestMember>,
    pub meta_file: String,
    pub meta_feature_order: Vec<MetaFeature>,
    pub threshold: f64,
    pub rule: ThresholdRule,
    pub grid_best: GridScore,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
}

impl<M: BaseModel + Serialize + DeserializeOwned> EnsembleModel<M> {
    /// Writes `manifest.json`, `meta.json` and `members/<name>.json`.
    pub fn save_bundle(&self, dir: &Path) -> Result<()> {
        let members_dir = dir.join("members");
        fs::create_dir_all(&members_dir).map_err(|e| Error::io(&members_dir, e))?;
        let mut entries = Vec::new();
        for m in &self.members {
            let file = format!("members/{}.json", m.name);
            write_json(&dir.join(&file), &m.model)?;
            entries.push(ManifestMember {
                name: m.name.clone(),
                file,
                threshold: m.threshold,
            });
        }
        write_json(&dir.join("meta.json"), &self.meta)?;
        write_json(
            &dir.join("manifest.json"),
            &BundleManifest {
                version: BUNDLE_VERSION,
                members: entries,
                meta_file: "meta.json".into(),
                meta_feature_order: self.meta_feature_order.clone(),
                threshold: self.threshold,
                rule: self.rule,
                grid_best: self.grid_best,
            },
        )
    }

    pub fn load_bundle(dir: &Path) -> Result<Self> {
        let manifest: BundleManifest = read_json(&dir.join("manifest.json"))?;
        if manifest.version != BUNDLE_VERSION {
            return Err(Error::Checkpoint(format!("unsupported bundle version {}", manifest.version)));
        }
        let mut members = Vec::new();
        for m in &manifest.members {
            check_name(&m.name)?;
            members.push(Member {
                name: m.name.clone(),
                model: read_json(&dir.join(&m.file))?,
                threshold: m.threshold,
            });
        }
        let registry: Vec<String> = members.iter().map(|m: &Member<M>| m.name.clone()).collect();
        if meta_feature_order(&registry) != manifest.meta_feature_order {
            return Err(Error::Checkpoint("meta feature layout does not match the member registry".into()));
        }
        let meta: GbtModel = read_json(&dir.join(&manifest.meta_file))?;
        meta.validate()?;
        check_dim(manifest.meta_feature_order.len(), meta.n_features)?;
        Ok(EnsembleModel {
            members,
            meta,
            meta_feature_order: manifest.meta_feature_order,
            threshold: manifest.threshold,
            rule: manifest.rule,
            grid_best: manifest.grid_best,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::macro_f1;

    /// Returns a fixed score per sample index.
    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    struct Lookup(Vec<f64>);

    impl BaseModel for Lookup {
        type Input = usize;

        fn predict_proba(&self, i: &usize) -> Result<f64> {
            self.0.get(*i).copied().ok_or_else(|| Error::invalid("unknown sample"))
        }
    }

    fn labels(n: usize) -> Vec<bool> {
        (0..n).map(|i| i % 2 == 0).collect()
    }

    fn small_grid() -> EnsembleConfig {
        EnsembleConfig {
            grid: GbtGrid {
                estimators: vec![2, 5, 10],
                depths: vec![3],
                learning_rates: vec![0.1, 0.3],
            },
            ..Default::default()
        }
    }

    #[test]
    fn feature_layout() {
        let reg: Vec<String> = ["a", "b", "c"].map(String::from).to_vec();
        let preds: Vec<BasePrediction> = reg
            .iter()
            .rev()
            .map(|n| BasePrediction {
                model_name: n.clone(),
                probability: 0.5,
                binary: false,
            })
            .collect();
        assert_eq!(meta_features(&reg, &preds).unwrap(), vec![0.5, 0.0, 0.5, 0.0, 0.5, 0.0]);
        assert_eq!(meta_features(&reg[..2], &preds[1..]).unwrap().len(), 4);
        assert!(meta_features(&reg, &preds[1..]).is_err());
        assert!(meta_features(&reg[..2], &preds).is_err());
    }

    #[test]
    fn oracle_member_gives_perfect_holdout() {
        let n = 60;
        let y = labels(n);
        let oracle = Lookup(y.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect());
        let noise = Lookup((0..n).map(|i| ((i * 37) % 11) as f64 / 11.0).collect());
        let ens = train_ensemble(vec![("oracle".into(), oracle), ("noise".into(), noise)], &(0..n).collect::<Vec<_>>(), &y, &small_grid()).unwrap();
        let pred: Vec<bool> = (0..n).map(|i| ens.predict(&i).unwrap().1).collect();
        assert_eq!(macro_f1(&y, &pred).unwrap(), 1.0);
    }

    #[test]
    fn complementary_errors_beat_each_member() {
        // A errs (with low confidence) on the first quarter, B on the second.
        let n = 80;
        let y = labels(n);
        let scores = |bad: std::ops::Range<usize>| {
            Lookup(
                (0..n)
                    .map(|i| match (y[i], bad.contains(&i)) {
                        (true, false) => 0.9,
                        (false, false) => 0.1,
                        (true, true) => 0.4,
                        (false, true) => 0.6,
                    })
                    .collect(),
            )
        };
        let (a, b) = (scores(0..20), scores(20..40));
        let idx: Vec<usize> = (0..n).collect();
        let member_f1 = |m: &Lookup| {
            let p: Vec<f64> = idx.iter().map(|i| m.predict_proba(i).unwrap()).collect();
            let t = select_threshold(&p, &y, ThresholdRule::SumClosestToOne).unwrap();
            macro_f1(&y, &crate::eval::binarize(&p, t)).unwrap()
        };
        let (fa, fb) = (member_f1(&a), member_f1(&b));
        let ens = train_ensemble(vec![("a".into(), a), ("b".into(), b)], &idx, &y, &small_grid()).unwrap();
        let pred: Vec<bool> = idx.iter().map(|i| ens.predict(i).unwrap().1).collect();
        let fe = macro_f1(&y, &pred).unwrap();
        assert!(fe > fa && fe > fb, "ensemble {fe} vs {fa}, {fb}");
    }

    #[test]
    fn registry_errors() {
        let y = labels(30);
        let idx: Vec<usize> = (0..30).collect();
        let m = || Lookup(vec![0.5; 30]);
        assert!(train_ensemble(vec![("a".into(), m()), ("a".into(), m())], &idx, &y, &small_grid()).is_err());
        assert!(train_ensemble(vec![("a".into(), m())], &idx, &y, &small_grid()).is_err());
        assert!(train_ensemble(vec![("a".into(), m()), ("b".into(), m())], &idx[..10], &y[..10], &small_grid()).is_err());
        assert!(train_ensemble(vec![("a/b".into(), m()), ("b".into(), m())], &idx, &y, &small_grid()).is_err());
    }

    #[test]
    fn bundle_round_trip() {
        let n = 40;
        let y = labels(n);
        let a = Lookup((0..n).map(|i| if y[i] { 0.8 } else { 0.3 } + (i % 5) as f64 * 0.01).collect());
        let b = Lookup((0..n).map(|i| ((i * 7) % 13) as f64 / 13.0).collect());
        let idx: Vec<usize> = (0..n).collect();
        let ens = train_ensemble(vec![("a".into(), a), ("b".into(), b)], &idx, &y, &small_grid()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        ens.save_bundle(dir.path()).unwrap();
        let back = EnsembleModel::<Lookup>::load_bundle(dir.path()).unwrap();
        assert_eq!(back, ens);
        for i in 0..n {
            assert_eq!(back.predict(&i).unwrap(), ens.predict(&i).unwrap());
        }
    }
}
