//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error
//! (bad input files, checkpoints, dimensions), 3 internal error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{EmbeddingMode, ModelKind, RunConfig, SEED_ENV, THREADS_ENV};
use crate::corpus::{load_tsv, merge_bilingual, summarize, to_tsv, Corpus, Language};
use crate::embeddings::{load_embeddings, EmbeddingTable};
use crate::error::{Error, Result};
use crate::eval::{results_table, ThresholdRule};
use crate::pipeline::{
    evaluate_predictions, log_lines, parse_predictions_tsv, predictions_tsv, train_single, train_stacked, Detector,
    EmbeddingSpec, Featurizer,
};
use crate::readability::{feature_matrix_tsv, readability_features};
use crate::synth::{synth_bilingual, SynthConfig};

#[derive(Debug, Parser)]
#[command(name = "mgt-detect", version, about = "Detect machine-generated text in English and Spanish corpora")]
pub struct Cli {
    /// TOML run configuration; unknown keys are rejected.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Random seed; overrides the `seed` key of the configuration.
    #[arg(long, global = true, env = SEED_ENV)]
    pub seed: Option<u64>,

    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true, env = THREADS_ENV)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    /// Corpus TSV as LANG=PATH with LANG in {en, es}. Repeat once per
    /// language; two languages are merged and ids get an `en:`/`es:` prefix.
    #[arg(long = "corpus", value_name = "LANG=PATH", required = true)]
    pub corpora: Vec<String>,

    /// Precomputed embeddings (`id<TAB>v1 v2 ...`). Switches the embedding
    /// source to this file.
    #[arg(long, value_name = "FILE")]
    pub embeddings: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TrainKind {
    Knn,
    Gbt,
    Svm,
    Neural,
    Ensemble,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the readability (+ embedding) feature matrix as TSV.
    Featurize {
        #[command(flatten)]
        input: CorpusArgs,
        /// Write raw readability values instead of standardized ones.
        #[arg(long)]
        raw: bool,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Train a base model (JSON checkpoint) or a stacked ensemble (bundle
    /// directory).
    Train {
        #[arg(value_enum)]
        kind: TrainKind,
        #[command(flatten)]
        input: CorpusArgs,
        /// Checkpoint file, or bundle directory for `ensemble`.
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
        /// Training log (JSON lines). Defaults to OUT with a `.log.jsonl`
        /// extension.
        #[arg(long, value_name = "FILE")]
        log: Option<PathBuf>,
        /// Neural: add the language-identification head.
        #[arg(long)]
        mtl: bool,
        /// Neural: add virtual adversarial training.
        #[arg(long)]
        vat: bool,
        /// Calibrate thresholds with Youden's J instead of TPR + FPR closest to 1.
        #[arg(long)]
        youden: bool,
        /// Boosted trees: pick hyperparameters by grid search on the validation split.
        #[arg(long)]
        grid_search: bool,
        /// Fraction of training documents held out for validation.
        #[arg(long, value_name = "FRACTION")]
        val_fraction: Option<f64>,
        /// Ensemble members, comma separated (e.g. neural,knn,svm).
        #[arg(long, value_delimiter = ',', value_name = "KINDS")]
        members: Option<Vec<String>>,
    },
    /// Score a corpus with a checkpoint or bundle.
    Predict {
        #[arg(long, value_name = "PATH")]
        model: PathBuf,
        #[command(flatten)]
        input: CorpusArgs,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Compare a predictions TSV against gold labels.
    Evaluate {
        #[arg(long, value_name = "FILE")]
        predictions: PathBuf,
        /// Gold corpus as LANG=PATH, as for `--corpus`.
        #[arg(long = "gold", value_name = "LANG=PATH", required = true)]
        gold: Vec<String>,
        /// Write the JSON report here instead of standard output.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Corpus statistics: label balance and length histograms, as JSON.
    Summarize {
        #[arg(long = "corpus", value_name = "LANG=PATH", required = true)]
        corpora: Vec<String>,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic bilingual corpus (`en.tsv`, `es.tsv`).
    Synth {
        #[arg(long, value_name = "DIR")]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 1000)]
        docs_per_class: usize,
    },
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::config("--threads must be at least 1"));
        }
        // A global pool can only be installed once per process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    match cli.command {
        Command::Featurize { input, raw, out } => {
            use_embeddings(&input, &mut cfg)?;
            cfg.validate()?;
            let table = load_table(&input)?;
            let corpus = load_corpora(&input.corpora)?;
            featurize(&corpus, &cfg, table.as_ref(), raw, &out)
        }
        Command::Train {
            kind,
            input,
            out,
            log,
            mtl,
            vat,
            youden,
            grid_search,
            val_fraction,
            members,
        } => {
            use_embeddings(&input, &mut cfg)?;
            cfg.neural.mtl |= mtl;
            cfg.neural.vat |= vat;
            cfg.gbt.grid_search |= grid_search;
            if youden {
                cfg.ensemble.threshold_rule = ThresholdRule::Youden;
            }
            if let Some(f) = val_fraction {
                cfg.split.train_fraction = 1.0 - f;
            }
            if let Some(m) = members {
                cfg.ensemble.members = m.iter().map(|s| s.parse()).collect::<Result<_>>()?;
            }
            cfg.validate()?;
            let table = load_table(&input)?;
            let corpus = load_corpora(&input.corpora)?;
            let log_path = log.unwrap_or_else(|| out.with_extension("log.jsonl"));
            train(kind, &corpus, &cfg, table.as_ref(), &out, &log_path)
        }
        Command::Predict { model, input, out } => {
            let detector = Detector::load(&model)?;
            let table = load_table(&input)?;
            let corpus = load_corpora(&input.corpora)?;
            let preds = detector.predict_documents(corpus.documents(), table.as_ref())?;
            write_atomic(&out, predictions_tsv(&preds).as_bytes())
        }
        Command::Evaluate { predictions, gold, out } => {
            let gold = load_corpora(&gold)?;
            let text = fs::read_to_string(&predictions).map_err(|e| Error::Io {
                path: predictions.clone(),
                source: e,
            })?;
            let preds = parse_predictions_tsv(&text, &predictions)?;
            let report = evaluate_predictions(&preds, gold.documents())?;
            let json = report.to_json() + "\n";
            print!("{}", report.to_table());
            match out {
                Some(p) => write_atomic(&p, json.as_bytes()),
                None => {
                    print!("\n{json}");
                    Ok(())
                }
            }
        }
        Command::Summarize { corpora, out } => {
            let json = summarize(&load_corpora(&corpora)?).to_json() + "\n";
            match out {
                Some(p) => write_atomic(&p, json.as_bytes()),
                None => {
                    print!("{json}");
                    Ok(())
                }
            }
        }
        Command::Synth { out_dir, docs_per_class } => {
            let synth = SynthConfig {
                docs_per_class,
                seed: cfg.seed,
                ..Default::default()
            };
            let (en, es) = synth_bilingual(&synth)?;
            fs::create_dir_all(&out_dir).map_err(|e| Error::Io {
                path: out_dir.clone(),
                source: e,
            })?;
            write_atomic(&out_dir.join("en.tsv"), to_tsv(&en).as_bytes())?;
            write_atomic(&out_dir.join("es.tsv"), to_tsv(&es).as_bytes())
        }
    }
}

/// Points the configuration at `--embeddings` when it is given.
fn use_embeddings(input: &CorpusArgs, cfg: &mut RunConfig) -> Result<()> {
    if input.embeddings.is_some() {
        cfg.features.embeddings = EmbeddingMode::File;
    } else if cfg.features.embeddings == EmbeddingMode::File {
        return Err(Error::config("features.embeddings = \"file\" needs --embeddings"));
    }
    Ok(())
}

fn load_table(input: &CorpusArgs) -> Result<Option<EmbeddingTable>> {
    input.embeddings.as_deref().map(load_embeddings).transpose()
}

fn parse_corpus_arg(arg: &str) -> Result<(Language, PathBuf)> {
    let (lang, path) = arg
        .split_once('=')
        .ok_or_else(|| Error::config(format!("corpus `{arg}` must look like LANG=PATH")))?;
    let lang: Language = lang.parse().map_err(|e: Error| Error::config(e.to_string()))?;
    Ok((lang, PathBuf::from(path)))
}

/// Loads one corpus per language and merges two languages into one.
pub fn load_corpora(args: &[String]) -> Result<Corpus> {
    let specs: Vec<(Language, PathBuf)> = args.iter().map(|a| parse_corpus_arg(a)).collect::<Result<_>>()?;
    match specs.as_slice() {
        [(lang, path)] => load_tsv(path, *lang),
        [(l1, p1), (l2, p2)] if l1 != l2 => {
            let a = load_tsv(p1, *l1)?;
            let b = load_tsv(p2, *l2)?;
            Ok(if *l1 == Language::En { merge_bilingual(&a, &b) } else { merge_bilingual(&b, &a) })
        }
        _ => Err(Error::config("give one corpus, or one English and one Spanish corpus")),
    }
}

fn featurize(corpus: &Corpus, cfg: &RunConfig, table: Option<&EmbeddingTable>, raw: bool, out: &Path) -> Result<()> {
    let featurizer = Featurizer::fit(corpus.documents(), EmbeddingSpec::from_config(cfg, table)?)?;
    let samples = featurizer.samples(corpus.documents(), table)?;
    let width = featurizer.scaler.width();
    let rows: Vec<Vec<f64>> = if raw {
        corpus
            .iter()
            .zip(&samples)
            .map(|(doc, s)| {
                let mut row = readability_features(doc)?.to_vec();
                row.extend_from_slice(&s.features[width..]);
                Ok(row)
            })
            .collect::<Result<_>>()?
    } else {
        samples.iter().map(|s| s.features.clone()).collect()
    };
    let ids: Vec<&str> = samples.iter().map(|s| s.id.as_str()).collect();
    write_atomic(out, feature_matrix_tsv(&ids, &featurizer.feature_names(), &rows)?.as_bytes())
}

fn train(kind: TrainKind, corpus: &Corpus, cfg: &RunConfig, table: Option<&EmbeddingTable>, out: &Path, log_path: &Path) -> Result<()> {
    let (detector, log, extra) = match kind {
        TrainKind::Ensemble => {
            let outcome = train_stacked(corpus, cfg, table)?;
            for (_, m) in &outcome.members {
                m.warnings.iter().for_each(|w| eprintln!("warning: {w}"));
            }
            (outcome.detector, outcome.log, Some(results_table(&outcome.holdout_rows)))
        }
        single => {
            let kind = match single {
                TrainKind::Knn => ModelKind::Knn,
                TrainKind::Gbt => ModelKind::Gbt,
                TrainKind::Svm => ModelKind::Svm,
                TrainKind::Neural => ModelKind::Neural,
                TrainKind::Ensemble => unreachable!(),
            };
            let (ckpt, outcome) = train_single(kind, corpus, cfg, table)?;
            outcome.warnings.iter().for_each(|w| eprintln!("warning: {w}"));
            (Detector::Single(ckpt), outcome.log, None)
        }
    };
    match &detector {
        Detector::Single(c) => write_atomic(out, (serde_json::to_string_pretty(c)? + "\n").as_bytes())?,
        Detector::Stacked { .. } => {
            let tmp = partial_path(out);
            let _ = fs::remove_dir_all(&tmp);
            detector.save(&tmp)?;
            replace_dir(&tmp, out)?;
        }
    }
    write_atomic(log_path, log_lines(&log).as_bytes())?;
    if let Some(table) = extra {
        print!("{table}");
    }
    Ok(())
}

fn partial_path(path: &Path) -> PathBuf {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!(".{name}.partial"))
}

/// Writes through a sibling temporary file so readers never see a
/// truncated output.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = partial_path(path);
    fs::write(&tmp, bytes).map_err(|e| Error::Io {
        path: tmp.clone(),
        source: e,
    })?;
    fs::rename(&tmp, path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Moves a finished bundle into place. An existing target is only replaced
/// when it is empty or itself a bundle.
fn replace_dir(tmp: &Path, target: &Path) -> Result<()> {
    let io = |e| Error::Io {
        path: target.to_path_buf(),
        source: e,
    };
    if target.is_dir() {
        let empty = fs::read_dir(target).map_err(io)?.next().is_none();
        if !empty && !target.join("manifest.json").is_file() {
            let _ = fs::remove_dir_all(tmp);
            return Err(Error::invalid(format!(
                "{} exists and is not a model bundle; refusing to overwrite",
                target.display()
            )));
        }
        fs::remove_dir_all(target).map_err(io)?;
    } else if target.exists() {
        let _ = fs::remove_dir_all(tmp);
        return Err(Error::invalid(format!("{} exists and is not a directory", target.display())));
    }
    fs::rename(tmp, target).map_err(io)
}
