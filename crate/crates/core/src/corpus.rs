//! Document collections: TSV loading, deterministic splits, bilingual merges
//! and length/label summaries.
//!
//! The TSV format has a header row naming the columns `id`, `text` and
//! optionally `label`, in any order. Text cells escape newlines as `\n`,
//! tabs as `\t` and backslashes as `\\`. Labels are `human` or `generated`
//! (any case); an empty label cell means unlabeled.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    En,
    Es,
}

impl Language {
    pub fn code(self) -> &'static str {
        match self {
            Language::En => "en",
            Language::Es => "es",
        }
    }

    /// Target for the auxiliary language head: EN = 0, ES = 1.
    pub fn as_target(self) -> f64 {
        match self {
            Language::En => 0.0,
            Language::Es => 1.0,
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Language {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "en" => Ok(Language::En),
            "es" => Ok(Language::Es),
            other => Err(Error::invalid(format!("unknown language `{other}`"))),
        }
    }
}

/// Gold label. `Generated` is the positive class everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Human,
    Generated,
}

impl Label {
    pub fn is_generated(self) -> bool {
        self == Label::Generated
    }

    pub fn from_generated(generated: bool) -> Self {
        if generated {
            Label::Generated
        } else {
            Label::Human
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Human => "human",
            Label::Generated => "generated",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("human") {
            Ok(Label::Human)
        } else if s.eq_ignore_ascii_case("generated") {
            Ok(Label::Generated)
        } else {
            Err(Error::invalid(format!("unknown label `{s}`")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub language: Language,
    pub label: Option<Label>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>, language: Language) -> Self {
        Document {
            id: id.into(),
            text: text.into(),
            language,
            label: None,
        }
    }

    pub fn with_label(mut self, label: Label) -> Self {
        self.label = Some(label);
        self
    }
}

/// An ordered collection of documents with distinct, nonempty ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    name: String,
    documents: Vec<Document>,
}

impl Corpus {
    pub fn new(name: impl Into<String>, documents: Vec<Document>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(documents.len());
        for doc in &documents {
            if doc.id.is_empty() {
                return Err(Error::invalid("document id must be nonempty"));
            }
            if doc.text.is_empty() {
                return Err(Error::invalid(format!("document `{}` has empty text", doc.id)));
            }
            if !seen.insert(doc.id.as_str()) {
                return Err(Error::DuplicateId(doc.id.clone()));
            }
        }
        Ok(Corpus {
            name: name.into(),
            documents,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn into_documents(self) -> Vec<Document> {
        self.documents
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Document> {
        self.documents.iter()
    }

    pub fn is_fully_labeled(&self) -> bool {
        self.documents.iter().all(|d| d.label.is_some())
    }

    /// Gold labels as booleans (`true` = generated). Errors on unlabeled docs.
    pub fn labels(&self) -> Result<Vec<bool>> {
        self.documents
            .iter()
            .map(|d| {
                d.label
                    .map(Label::is_generated)
                    .ok_or_else(|| Error::invalid(format!("document `{}` is unlabeled", d.id)))
            })
            .collect()
    }

    fn subset(&self, name: String, mut indices: Vec<usize>) -> Corpus {
        indices.sort_unstable();
        Corpus {
            name,
            documents: indices.into_iter().map(|i| self.documents[i].clone()).collect(),
        }
    }
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a Document;
    type IntoIter = std::slice::Iter<'a, Document>;

    fn into_iter(self) -> Self::IntoIter {
        self.documents.iter()
    }
}

fn unescape(cell: &str) -> String {
    let mut out = String::with_capacity(cell.len());
    let mut chars = cell.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('n') => out.push('\n'),
            Some('t') => out.push('\t'),
            Some('r') => out.push('\r'),
            Some('\\') => out.push('\\'),
            Some(other) => {
                out.push('\\');
                out.push(other);
            }
            None => out.push('\\'),
        }
    }
    out
}

pub(crate) fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            '\\' => out.push_str("\\\\"),
            c => out.push(c),
        }
    }
    out
}

/// Loads a corpus TSV; every document is tagged with `language`.
pub fn load_tsv(path: impl AsRef<Path>, language: Language) -> Result<Corpus> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_tsv(&content, path, &name, language)
}

pub(crate) fn parse_tsv(content: &str, path: &Path, name: &str, language: Language) -> Result<Corpus> {
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = content.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "missing header row".into()))?;
    let columns: Vec<&str> = header.trim_end_matches('\r').split('\t').collect();
    let find = |name: &str| columns.iter().position(|c| c.trim().eq_ignore_ascii_case(name));
    let id_col = find("id").ok_or_else(|| parse_err(1, "header lacks an `id` column".into()))?;
    let text_col = find("text").ok_or_else(|| parse_err(1, "header lacks a `text` column".into()))?;
    let label_col = find("label");

    let mut documents = Vec::new();
    let mut seen = HashSet::new();
    for (idx, raw) in lines {
        let line_no = idx + 1;
        let raw = raw.trim_end_matches('\r');
        if raw.is_empty() {
            continue;
        }
        let cells: Vec<&str> = raw.split('\t').collect();
        if cells.len() != columns.len() {
            return Err(parse_err(
                line_no,
                format!("expected {} columns, found {}", columns.len(), cells.len()),
            ));
        }
        let id = cells[id_col].to_string();
        if id.is_empty() {
            return Err(parse_err(line_no, "empty id".into()));
        }
        let text = unescape(cells[text_col]);
        if text.is_empty() {
            return Err(parse_err(line_no, format!("empty text for id `{id}`")));
        }
        let label = match label_col.map(|c| cells[c].trim()) {
            None | Some("") => None,
            Some(s) => Some(s.parse::<Label>().map_err(|e| parse_err(line_no, e.to_string()))?),
        };
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateId(id));
        }
        documents.push(Document {
            id,
            text,
            language,
            label,
        });
    }
    Corpus::new(name, documents)
}

/// Writes `id`, `text`, `label` columns; the label column is omitted when no
/// document carries a label.
pub fn write_tsv(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_tsv(corpus)).map_err(|e| Error::io(path, e))
}

pub fn to_tsv(corpus: &Corpus) -> String {
    let labeled = corpus.iter().any(|d| d.label.is_some());
    let mut out = String::from(if labeled { "id\ttext\tlabel\n" } else { "id\ttext\n" });
    for doc in corpus {
        out.push_str(&doc.id);
        out.push('\t');
        out.push_str(&escape(&doc.text));
        if labeled {
            out.push('\t');
            if let Some(l) = doc.label {
                out.push_str(l.as_str());
            }
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    pub stratify_by_label: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.7,
            seed: 42,
            stratify_by_label: false,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::config(format!(
                "train_fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        Ok(())
    }
}

/// Splits into (train, validation). Both halves keep the input order.
pub fn split(corpus: &Corpus, spec: &SplitSpec) -> Result<(Corpus, Corpus)> {
    spec.validate()?;
    if corpus.is_empty() {
        return Err(Error::invalid("cannot split an empty corpus"));
    }
    let mut rng = util::rng(spec.seed);
    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut take = |mut group: Vec<usize>, rng: &mut util::Rng| {
        group.shuffle(rng);
        let n_train = (group.len() as f64 * spec.train_fraction).round() as usize;
        val.extend_from_slice(&group[n_train..]);
        group.truncate(n_train);
        train.extend(group);
    };
    if spec.stratify_by_label {
        let mut by_label: BTreeMap<Label, Vec<usize>> = BTreeMap::new();
        for (i, doc) in corpus.iter().enumerate() {
            let label = doc.label.ok_or_else(|| {
                Error::invalid(format!(
                    "stratified split requires labels; document `{}` is unlabeled",
                    doc.id
                ))
            })?;
            by_label.entry(label).or_default().push(i);
        }
        for group in by_label.into_values() {
            take(group, &mut rng);
        }
    } else {
        take((0..corpus.len()).collect(), &mut rng);
    }
    Ok((
        corpus.subset(format!("{}.train", corpus.name), train),
        corpus.subset(format!("{}.val", corpus.name), val),
    ))
}

/// Unions an English and a Spanish corpus, prefixing ids with `en:` / `es:`.
pub fn merge_bilingual(en: &Corpus, es: &Corpus) -> Corpus {
    let documents = en
        .iter()
        .map(|d| (Language::En, d))
        .chain(es.iter().map(|d| (Language::Es, d)))
        .map(|(lang, d)| Document {
            id: format!("{}:{}", lang.code(), d.id),
            ..d.clone()
        })
        .collect();
    Corpus {
        name: format!("{}+{}", en.name, es.name),
        documents,
    }
}

pub const HISTOGRAM_BIN_WIDTH: usize = 100;
pub const HISTOGRAM_MAX: usize = 2000;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LengthHistogram {
    pub bin_width: usize,
    pub max: usize,
    /// `counts[i]` covers character lengths `[i*bin_width, (i+1)*bin_width)`.
    pub counts: Vec<usize>,
    /// Lengths `>= max`.
    pub overflow: usize,
}

impl LengthHistogram {
    fn new() -> Self {
        LengthHistogram {
            bin_width: HISTOGRAM_BIN_WIDTH,
            max: HISTOGRAM_MAX,
            counts: vec![0; HISTOGRAM_MAX / HISTOGRAM_BIN_WIDTH],
            overflow: 0,
        }
    }

    fn add(&mut self, len: usize) {
        if len >= self.max {
            self.overflow += 1;
        } else {
            self.counts[len / self.bin_width] += 1;
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub documents: usize,
    pub human: usize,
    pub generated: usize,
    pub unlabeled: usize,
    /// generated / labeled; `None` without labels.
    pub generated_ratio: Option<f64>,
    pub length_histogram: LengthHistogram,
}

impl GroupSummary {
    fn new() -> Self {
        GroupSummary {
            length_histogram: LengthHistogram::new(),
            ..Default::default()
        }
    }

    fn add(&mut self, doc: &Document) {
        self.documents += 1;
        match doc.label {
            Some(Label::Human) => self.human += 1,
            Some(Label::Generated) => self.generated += 1,
            None => self.unlabeled += 1,
        }
        self.length_histogram.add(doc.text.chars().count());
    }

    fn finish(&mut self) {
        let labeled = self.human + self.generated;
        self.generated_ratio = (labeled > 0).then(|| self.generated as f64 / labeled as f64);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub name: String,
    pub overall: GroupSummary,
    pub by_language: BTreeMap<Language, GroupSummary>,
    /// Keyed `"<language>/<label>"`, e.g. `en/human`, `es/unlabeled`.
    pub by_language_and_label: BTreeMap<String, GroupSummary>,
}

impl CorpusSummary {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

pub fn summarize(corpus: &Corpus) -> CorpusSummary {
    let mut overall = GroupSummary::new();
    let mut by_language: BTreeMap<Language, GroupSummary> = BTreeMap::new();
    let mut by_group: BTreeMap<String, GroupSummary> = BTreeMap::new();
    for doc in corpus {
        overall.add(doc);
        by_language.entry(doc.language).or_insert_with(GroupSummary::new).add(doc);
        let label = doc.label.map(Label::as_str).unwrap_or("unlabeled");
        by_group
            .entry(format!("{}/{label}", doc.language))
            .or_insert_with(GroupSummary::new)
            .add(doc);
    }
    overall.finish();
    by_language.values_mut().for_each(GroupSummary::finish);
    by_group.values_mut().for_each(GroupSummary::finish);
    CorpusSummary {
        name: corpus.name.clone(),
        overall,
        by_language,
        by_language_and_label: by_group,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn labeled(n_human: usize, n_gen: usize) -> Corpus {
        let docs = (0..n_human + n_gen)
            .map(|i| {
                let label = Label::from_generated(i >= n_human);
                Document::new(format!("d{i}"), format!("text number {i}"), Language::En).with_label(label)
            })
            .collect();
        Corpus::new("t", docs).unwrap()
    }

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_three_rows() {
        let f = write_tmp("id\ttext\tlabel\na\tHello there.\thuman\nb\tline\\nbreak\tgenerated\nc\tNo label\t\n");
        let c = load_tsv(f.path(), Language::Es).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.documents()[1].text, "line\nbreak");
        assert_eq!(c.documents()[2].label, None);
        assert!(c.iter().all(|d| d.language == Language::Es));
    }

    #[test]
    fn label_parse_is_case_insensitive() {
        for (raw, want) in [
            ("human", Label::Human),
            ("Human", Label::Human),
            ("HUMAN", Label::Human),
            ("hUmAn", Label::Human),
            ("generated", Label::Generated),
            ("Generated", Label::Generated),
            ("GENERATED", Label::Generated),
        ] {
            assert_eq!(raw.parse::<Label>().unwrap(), want, "{raw}");
        }
        assert!("bot".parse::<Label>().is_err());
    }

    #[test]
    fn load_errors() {
        let dup = write_tmp("id\ttext\nd1\ta\nd1\tb\n");
        match load_tsv(dup.path(), Language::En) {
            Err(Error::DuplicateId(id)) => assert_eq!(id, "d1"),
            other => panic!("{other:?}"),
        }
        let ragged = write_tmp("id\ttext\nd1\ta\textra\n");
        match load_tsv(ragged.path(), Language::En) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        let bad_label = write_tmp("id\ttext\tlabel\nd1\ta\tbot\n");
        assert!(matches!(load_tsv(bad_label.path(), Language::En), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn tsv_round_trip() {
        let docs = vec![
            Document::new("a", "tab\there\nand \\ slash", Language::En).with_label(Label::Human),
            Document::new("b", "plain", Language::En),
        ];
        let c = Corpus::new("x", docs).unwrap();
        let back = parse_tsv(&to_tsv(&c), Path::new("mem"), "x", Language::En).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn split_is_deterministic() {
        let c = labeled(50, 50);
        let spec = SplitSpec {
            train_fraction: 0.7,
            seed: 42,
            stratify_by_label: false,
        };
        assert_eq!(split(&c, &spec).unwrap(), split(&c, &spec).unwrap());
    }

    #[test]
    fn stratified_split_preserves_class_fractions() {
        let c = labeled(50, 50);
        let spec = SplitSpec {
            train_fraction: 0.7,
            seed: 7,
            stratify_by_label: true,
        };
        let (train, _) = split(&c, &spec).unwrap();
        let gen = train.labels().unwrap().iter().filter(|&&g| g).count();
        let hum = train.len() - gen;
        assert!((34..=36).contains(&gen) && (34..=36).contains(&hum), "{hum} {gen}");
    }

    #[test]
    fn stratify_requires_labels() {
        let c = Corpus::new("u", vec![Document::new("a", "x", Language::En)]).unwrap();
        let spec = SplitSpec {
            stratify_by_label: true,
            ..Default::default()
        };
        assert!(split(&c, &spec).is_err());
    }

    #[test]
    fn final_retraining_validation_slice_size() {
        let docs = (0..65_907)
            .map(|i| Document::new(format!("{i}"), "t", Language::En))
            .collect();
        let c = Corpus::new("big", docs).unwrap();
        let spec = SplitSpec {
            train_fraction: 0.98,
            seed: 1,
            stratify_by_label: false,
        };
        let (_, val) = split(&c, &spec).unwrap();
        assert!((1318..=1320).contains(&val.len()), "{}", val.len());
    }

    #[test]
    fn merge_namespaces_ids() {
        let en = Corpus::new("en", vec![Document::new("x", "hello", Language::En)]).unwrap();
        let es = Corpus::new("es", vec![Document::new("x", "hola", Language::Es)]).unwrap();
        let m = merge_bilingual(&en, &es);
        let ids: Vec<_> = m.iter().map(|d| d.id.as_str()).collect();
        assert_eq!(ids, ["en:x", "es:x"]);

        let empty = Corpus::new("es", vec![]).unwrap();
        let only_en = merge_bilingual(&en, &empty);
        assert_eq!(only_en.len(), 1);
        assert_eq!(only_en.documents()[0].id, "en:x");
    }

    #[test]
    fn merge_counts() {
        let en = Corpus::new(
            "en",
            (0..10).map(|i| Document::new(format!("{i}"), "a", Language::En)).collect(),
        )
        .unwrap();
        let es = Corpus::new(
            "es",
            (0..12).map(|i| Document::new(format!("{i}"), "b", Language::Es)).collect(),
        )
        .unwrap();
        let m = merge_bilingual(&en, &es);
        assert_eq!(m.len(), 22);
        assert_eq!(m.iter().filter(|d| d.language == Language::En).count(), 10);
    }

    #[test]
    fn summary_ratio_and_bins() {
        let mut docs: Vec<Document> = labeled(50, 50).into_documents();
        docs.push(Document::new("long", "x".repeat(150), Language::Es));
        docs.push(Document::new("huge", "y".repeat(2500), Language::Es));
        let s = summarize(&Corpus::new("s", docs).unwrap());
        assert_eq!(s.overall.generated_ratio, Some(0.5));
        assert_eq!(s.by_language[&Language::Es].length_histogram.counts[1], 1);
        assert_eq!(s.overall.length_histogram.overflow, 1);
        assert_eq!(s.by_language_and_label["es/unlabeled"].documents, 2);
        let json = s.to_json();
        assert!(json.find("\"name\"").unwrap() < json.find("\"overall\"").unwrap());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn split_is_a_partition(n in 1usize..200, frac in 0.05f64..0.95, seed in any::<u64>(), strat in any::<bool>()) {
            let c = labeled(n / 2, n - n / 2);
            let spec = SplitSpec { train_fraction: frac, seed, stratify_by_label: strat };
            let (train, val) = split(&c, &spec).unwrap();
            let mut ids: Vec<&str> = train.iter().chain(val.iter()).map(|d| d.id.as_str()).collect();
            prop_assert_eq!(ids.len(), c.len());
            ids.sort_unstable();
            ids.dedup();
            prop_assert_eq!(ids.len(), c.len());
        }

        #[test]
        fn merge_preserves_texts_and_labels(n_en in 0usize..20, n_es in 0usize..20) {
            let en = labeled(n_en, n_en / 2);
            let es = labeled(n_es / 3, n_es);
            let m = merge_bilingual(&en, &es);
            let mut want: Vec<_> = en.iter().chain(es.iter()).map(|d| (d.text.clone(), d.label)).collect();
            let mut got: Vec<_> = m.iter().map(|d| (d.text.clone(), d.label)).collect();
            want.sort();
            got.sort();
            prop_assert_eq!(got, want);
        }
    }
}
