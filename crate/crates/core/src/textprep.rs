//! Sentence splitting, tokenization, syllable counting and the cleanup
//! pipeline applied before string kernels.
//!
//! Stopword lists and stemmer rules live in `data/` as plain UTF-8 files
//! (one entry per line, `#` comments) and are compiled into the binary.
//! Custom lists can be parsed with [`StopwordList::parse`] and
//! [`Stemmer::parse`].

use std::collections::HashSet;
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};

use crate::corpus::Language;
use crate::error::{Error, Result};

const STOPWORDS_EN: &str = include_str!("../data/stopwords_en.txt");
const STOPWORDS_ES: &str = include_str!("../data/stopwords_es.txt");
const STEM_RULES_EN: &str = include_str!("../data/stem_en.txt");
const STEM_RULES_ES: &str = include_str!("../data/stem_es.txt");

static STOP_EN: LazyLock<StopwordList> =
    LazyLock::new(|| StopwordList::parse(STOPWORDS_EN).expect("bundled EN stopwords"));
static STOP_ES: LazyLock<StopwordList> =
    LazyLock::new(|| StopwordList::parse(STOPWORDS_ES).expect("bundled ES stopwords"));
static STEM_EN: LazyLock<Stemmer> =
    LazyLock::new(|| Stemmer::parse(STEM_RULES_EN).expect("bundled EN stemmer rules"));
static STEM_ES: LazyLock<Stemmer> =
    LazyLock::new(|| Stemmer::parse(STEM_RULES_ES).expect("bundled ES stemmer rules"));

pub fn stopwords(language: Language) -> &'static StopwordList {
    match language {
        Language::En => &STOP_EN,
        Language::Es => &STOP_ES,
    }
}

pub fn stemmer(language: Language) -> &'static Stemmer {
    match language {
        Language::En => &STEM_EN,
        Language::Es => &STEM_ES,
    }
}

fn data_lines(content: &str) -> impl Iterator<Item = (usize, &str)> {
    content
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

#[derive(Debug, Clone, Default)]
pub struct StopwordList {
    words: HashSet<String>,
}

impl StopwordList {
    pub fn parse(content: &str) -> Result<Self> {
        let mut words = HashSet::new();
        for (line, word) in data_lines(content) {
            if word.contains(char::is_whitespace) {
                return Err(Error::invalid(format!("stopword line {line}: `{word}` contains whitespace")));
            }
            words.insert(word.to_lowercase());
        }
        Ok(StopwordList { words })
    }

    /// Case-insensitive membership.
    pub fn contains(&self, token: &str) -> bool {
        self.words.contains(&token.to_lowercase())
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
enum StemAction {
    Replace(String),
    Protect,
}

#[derive(Debug, Clone)]
struct StemRule {
    suffix: String,
    suffix_chars: usize,
    action: StemAction,
    min_stem: usize,
    undouble: bool,
}

/// Data-driven longest-suffix stemmer, iterated to a fixed point.
#[derive(Debug, Clone)]
pub struct Stemmer {
    rules: Vec<StemRule>,
}

fn is_vowel(c: char) -> bool {
    matches!(
        c,
        'a' | 'e' | 'i' | 'o' | 'u' | 'y' | 'á' | 'é' | 'í' | 'ó' | 'ú' | 'ü' | 'à' | 'è' | 'ï'
    )
}

impl Stemmer {
    pub fn parse(content: &str) -> Result<Self> {
        let mut rules = Vec::new();
        for (line, entry) in data_lines(content) {
            let bad = |msg: &str| Error::invalid(format!("stemmer rule line {line}: {msg}"));
            let fields: Vec<&str> = entry.split_whitespace().collect();
            if !(3..=4).contains(&fields.len()) {
                return Err(bad("expected `<suffix> <replacement> <min_stem> [undouble]`"));
            }
            let suffix = fields[0].to_string();
            let action = match fields[1] {
                "=" => StemAction::Protect,
                "-" => StemAction::Replace(String::new()),
                r => StemAction::Replace(r.to_string()),
            };
            if let StemAction::Replace(r) = &action {
                if r.chars().count() >= suffix.chars().count() {
                    return Err(bad("replacement must be shorter than the suffix"));
                }
            }
            let min_stem = fields[2].parse().map_err(|_| bad("min_stem must be an integer"))?;
            let undouble = match fields.get(3) {
                None => false,
                Some(&"undouble") => true,
                Some(_) => return Err(bad("unknown flag")),
            };
            rules.push(StemRule {
                suffix_chars: suffix.chars().count(),
                suffix,
                action,
                min_stem,
                undouble,
            });
        }
        // Longest suffix first; stable sort keeps file order among equals.
        rules.sort_by_key(|r| std::cmp::Reverse(r.suffix_chars));
        Ok(Stemmer { rules })
    }

    fn step(&self, word: &str) -> Option<String> {
        for rule in &self.rules {
            let Some(stem) = word.strip_suffix(rule.suffix.as_str()) else {
                continue;
            };
            let stem_ok = stem.chars().count() >= rule.min_stem
                && stem.chars().any(is_vowel)
                && stem.chars().last().is_some_and(char::is_alphanumeric);
            if !stem_ok {
                continue;
            }
            return match &rule.action {
                StemAction::Protect => None,
                StemAction::Replace(rep) => {
                    let mut out = format!("{stem}{rep}");
                    if rule.undouble {
                        undouble(&mut out);
                    }
                    Some(out)
                }
            };
        }
        None
    }

    /// Applies the rule table until no rule fires.
    pub fn stem(&self, word: &str) -> String {
        let mut current = word.to_string();
        while let Some(next) = self.step(&current) {
            current = next;
        }
        current
    }
}

fn undouble(word: &mut String) {
    let mut tail = word.chars().rev();
    if let (Some(a), Some(b)) = (tail.next(), tail.next()) {
        if a == b && a.is_alphabetic() && !is_vowel(a) && !matches!(a, 'l' | 's' | 'z') {
            word.pop();
        }
    }
}

/// Splits on `.`, `!` or `?` followed by whitespace or end of text.
///
/// The rule is deliberately naive: abbreviations such as "Mr." also end a
/// sentence, so `"e.g. Mr. Smith went."` yields three sentences. Readability
/// scores tolerate this noise.
pub fn sentence_split(text: &str) -> Vec<String> {
    let mut sentences = Vec::new();
    let mut start = 0;
    let mut iter = text.char_indices().peekable();
    while let Some((i, c)) = iter.next() {
        if matches!(c, '.' | '!' | '?') {
            let boundary = match iter.peek() {
                None => true,
                Some(&(_, next)) => next.is_whitespace(),
            };
            if boundary {
                let end = i + c.len_utf8();
                let s = text[start..end].trim();
                if !s.is_empty() {
                    sentences.push(s.to_string());
                }
                start = end;
            }
        }
    }
    let rest = text[start..].trim();
    if !rest.is_empty() {
        sentences.push(rest.to_string());
    }
    sentences
}

fn is_joiner(c: char) -> bool {
    matches!(c, '\'' | '’' | '-')
}

/// Unicode-aware word tokenizer: runs of alphanumeric characters, with
/// apostrophes and hyphens kept only when both neighbours are alphanumeric.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        let joins = is_joiner(c) && !current.is_empty() && chars.peek().is_some_and(|n| n.is_alphanumeric());
        if c.is_alphanumeric() || joins {
            current.push(c);
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Vowel-group syllable estimate, never below 1.
///
/// English: each run of vowels (`y` included) is one syllable, minus one for
/// a trailing `e` unless the word ends in `le`. Spanish: vowel runs where a
/// weak vowel (i, u, ü, final y) next to any vowel forms a diphthong, while
/// two adjacent strong vowels (a, e, o, accented vowels) are in hiatus and
/// count separately.
pub fn count_syllables(word: &str, language: Language) -> usize {
    let lower: Vec<char> = word.to_lowercase().chars().collect();
    let count = match language {
        Language::En => {
            let mut runs: usize = 0;
            let mut prev_vowel = false;
            for &c in &lower {
                let v = is_vowel(c);
                if v && !prev_vowel {
                    runs += 1;
                }
                prev_vowel = v;
            }
            let ends_e = lower.last() == Some(&'e');
            let ends_le = lower.len() >= 2 && lower[lower.len() - 2..] == ['l', 'e'];
            if ends_e && !ends_le {
                runs.saturating_sub(1)
            } else {
                runs
            }
        }
        Language::Es => {
            let strong = |c: char| matches!(c, 'a' | 'e' | 'o' | 'á' | 'é' | 'í' | 'ó' | 'ú');
            let n = lower.len();
            let vowel_at = |i: usize| {
                let c = lower[i];
                strong(c) || matches!(c, 'i' | 'u' | 'ü') || (c == 'y' && i + 1 == n && i > 0)
            };
            let mut count = 0;
            let mut i = 0;
            while i < n {
                if !vowel_at(i) {
                    i += 1;
                    continue;
                }
                count += 1;
                let mut j = i + 1;
                while j < n && vowel_at(j) {
                    if strong(lower[j]) && strong(lower[j - 1]) {
                        count += 1;
                    }
                    j += 1;
                }
                i = j;
            }
            count
        }
    };
    count.max(1)
}

/// Cleanup steps for string-kernel input, applied in this order:
/// punctuation removal, stopword removal, lowercasing, stemming.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrepConfig {
    pub remove_punctuation: bool,
    pub remove_stopwords: bool,
    pub lowercase: bool,
    pub stem: bool,
    pub language: Language,
}

impl PrepConfig {
    pub fn all(language: Language) -> Self {
        PrepConfig {
            remove_punctuation: true,
            remove_stopwords: true,
            lowercase: true,
            stem: true,
            language,
        }
    }

    pub fn none(language: Language) -> Self {
        PrepConfig {
            remove_punctuation: false,
            remove_stopwords: false,
            lowercase: false,
            stem: false,
            language,
        }
    }
}

/// Runs the cleanup pipeline and rejoins tokens with single spaces.
///
/// Idempotent: stemming runs to a fixed point, and stopwords are filtered a
/// second time after stemming so a stem that happens to be a stopword does
/// not survive into the output.
pub fn preprocess(text: &str, cfg: &PrepConfig) -> String {
    let split = |s: &str| -> Vec<String> {
        if cfg.remove_punctuation {
            tokenize(s)
        } else {
            s.split_whitespace().map(str::to_string).collect()
        }
    };
    let stop = stopwords(cfg.language);
    let mut tokens = split(text);
    if cfg.remove_stopwords {
        tokens.retain(|t| !stop.contains(t));
    }
    if cfg.lowercase {
        tokens = tokens.iter().flat_map(|t| split(&t.to_lowercase())).collect();
    }
    if cfg.stem {
        let stemmer = stemmer(cfg.language);
        for t in &mut tokens {
            *t = stemmer.stem(t);
        }
    }
    if cfg.remove_stopwords {
        tokens.retain(|t| !stop.contains(t));
    }
    tokens.join(" ")
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenizedDoc {
    pub sentences: Vec<Vec<String>>,
    pub raw_char_len: usize,
}

impl TokenizedDoc {
    pub fn new(text: &str) -> Self {
        let sentences = sentence_split(text)
            .iter()
            .map(|s| tokenize(s))
            .filter(|t| !t.is_empty())
            .collect();
        TokenizedDoc {
            sentences,
            raw_char_len: text.chars().count(),
        }
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.sentences.iter().flatten().map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn splits_sentences() {
        assert_eq!(sentence_split("A. B? C!"), ["A.", "B?", "C!"]);
        assert_eq!(sentence_split("no terminator"), ["no terminator"]);
        assert_eq!(sentence_split("e.g. Mr. Smith went."), ["e.g.", "Mr.", "Smith went."]);
        assert_eq!(sentence_split("Wait!!! What?"), ["Wait!!!", "What?"]);
        assert!(sentence_split("   ").is_empty());
    }

    #[test]
    fn tokenizes() {
        assert_eq!(tokenize("don't stop-me"), ["don't", "stop-me"]);
        assert_eq!(tokenize("¡Hola, señor!"), ["Hola", "señor"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("'quoted' -dash- end-"), ["quoted", "dash", "end"]);
    }

    #[test]
    fn english_syllables() {
        for (w, n) in [
            ("cat", 1),
            ("beautiful", 3),
            ("table", 2),
            ("the", 1),
            ("running", 2),
            ("Readability", 5),
            ("rhythm", 1),
            ("2023", 1),
        ] {
            assert_eq!(count_syllables(w, Language::En), n, "{w}");
        }
    }

    #[test]
    fn spanish_syllables() {
        for (w, n) in [
            ("gato", 2),
            ("poeta", 3),
            ("ciudad", 2),
            ("tío", 2),
            ("hoy", 1),
            ("murciélago", 4),
            ("Andalucía", 5),
        ] {
            assert_eq!(count_syllables(w, Language::Es), n, "{w}");
        }
    }

    #[test]
    fn preprocess_english_all_steps() {
        assert_eq!(preprocess("The CATS are running!", &PrepConfig::all(Language::En)), "cat run");
    }

    #[test]
    fn preprocess_spanish_all_steps() {
        assert_eq!(preprocess("Los gatos corren.", &PrepConfig::all(Language::Es)), "gat corr");
    }

    #[test]
    fn preprocess_near_identity() {
        assert_eq!(
            preprocess("  Keep   THIS, exactly!\n", &PrepConfig::none(Language::En)),
            "Keep THIS, exactly!"
        );
    }

    #[test]
    fn stemmer_rules() {
        let s = stemmer(Language::En);
        for (w, want) in [
            ("cats", "cat"),
            ("running", "run"),
            ("classes", "class"),
            ("falling", "fall"),
            ("ponies", "pony"),
            ("bus", "bus"),
            ("sing", "sing"),
        ] {
            assert_eq!(s.stem(w), want, "{w}");
        }
    }

    #[test]
    fn bundled_list_sizes() {
        assert_eq!(stopwords(Language::En).len(), 127);
        assert_eq!(stopwords(Language::Es).len(), 149);
    }

    #[test]
    fn rule_file_errors() {
        assert!(Stemmer::parse("ing ings 3").is_err());
        assert!(Stemmer::parse("ing - x").is_err());
        assert!(Stemmer::parse("ing - 3 sideways").is_err());
        assert!(StopwordList::parse("# only a comment\n").unwrap().is_empty());
    }

    proptest! {
        #[test]
        fn preprocess_is_idempotent(
            text in "[a-zA-ZñÁéİ'\\-.,!? ]{0,60}",
            lang in prop_oneof![Just(Language::En), Just(Language::Es)],
            flags in any::<[bool; 4]>(),
        ) {
            let cfg = PrepConfig {
                remove_punctuation: flags[0],
                remove_stopwords: flags[1],
                lowercase: flags[2],
                stem: flags[3],
                language: lang,
            };
            let once = preprocess(&text, &cfg);
            prop_assert_eq!(preprocess(&once, &cfg), once);
        }

        #[test]
        fn syllables_at_least_one(word in "[a-zA-Záéíóúü]{1,20}") {
            prop_assert!(count_syllables(&word, Language::En) >= 1);
            prop_assert!(count_syllables(&word, Language::Es) >= 1);
        }

        #[test]
        fn tokenize_join_is_stable(text in "\\PC{0,80}") {
            let tokens = tokenize(&text);
            prop_assert_eq!(tokenize(&tokens.join(" ")), tokens);
        }
    }
}
