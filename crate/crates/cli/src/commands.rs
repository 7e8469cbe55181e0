use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};
use serde_json::json;

use weam::aligner::{
    read_pharaoh, train_aligner, viterbi_align, write_pharaoh, AlignerConfig, WordAlignment,
};
use weam::corpus::{
    build_vocabulary, load_parallel_corpus, write_parallel_corpus, SentencePair, Vocabulary,
};
use weam::eval::{
    default_stopwords, export_embeddings, extract_frequent_pairs, plot_pairs, project_2d,
    retrieval_precision, write_embedding_tsv,
};
use weam::model::{load_checkpoint, save_checkpoint, ModelConfig, ModelParams};
use weam::synth::{bijective_corpus, SynthConfig};
use weam::training::{prepare_corpus, write_step_log, Mode, Preset};

use crate::manifest::{sidecar, RunManifest};
use crate::{ModeArg, PresetArg};

/// Number of most frequent words per side used as stopwords by default.
const DEFAULT_STOPWORDS_PER_SIDE: usize = 20;

#[derive(Debug)]
pub enum Failure {
    /// Unreadable or malformed input, or an output that cannot be written.
    Input(String),
    /// Arguments that parse but are invalid together.
    Usage(String),
    Diverged(String),
}

impl Failure {
    pub fn io(path: &Path, err: impl fmt::Display) -> Self {
        Failure::Input(format!("{}: {err}", path.display()))
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Input(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Diverged(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Input(msg) | Failure::Usage(msg) | Failure::Diverged(msg) => f.write_str(msg),
        }
    }
}

impl From<weam::Error> for Failure {
    fn from(err: weam::Error) -> Self {
        match err {
            weam::Error::Diverged { .. } => Failure::Diverged(err.to_string()),
            other => Failure::Input(other.to_string()),
        }
    }
}

fn at(path: &Path) -> impl Fn(weam::Error) -> Failure + '_ {
    move |e| Failure::io(path, e)
}

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::io(path, e))
}

fn read_corpus(path: &Path) -> Result<Vec<SentencePair>, Failure> {
    load_parallel_corpus(open(path)?).map_err(at(path))
}

fn read_alignments(path: &Path) -> Result<Vec<WordAlignment>, Failure> {
    read_pharaoh(open(path)?).map_err(at(path))
}

fn load_model(
    ckpt: &Path,
    vocab: Option<&Path>,
) -> Result<(ModelConfig, ModelParams, Vocabulary), Failure> {
    let (config, params) = load_checkpoint(ckpt).map_err(at(ckpt))?;
    let vocab_path = vocab
        .map(Path::to_path_buf)
        .unwrap_or_else(|| sidecar(ckpt, ".vocab"));
    let vocab = Vocabulary::read(open(&vocab_path)?).map_err(at(&vocab_path))?;
    if vocab.len() != config.vocab_size {
        return Err(Failure::Input(format!(
            "{}: {} tokens, but the checkpoint has {} embedding rows",
            vocab_path.display(),
            vocab.len(),
            config.vocab_size
        )));
    }
    Ok((config, params, vocab))
}

pub fn align(
    corpus_path: &Path,
    out: &Path,
    iters: usize,
    tension: f64,
    null_prob: f64,
) -> Result<(), Failure> {
    let config = AlignerConfig {
        iterations: iters,
        tension,
        null_prob,
    };
    config
        .validate()
        .map_err(|e| Failure::Usage(e.to_string()))?;
    let mut manifest = RunManifest::new("align");
    let corpus = read_corpus(corpus_path)?;
    manifest.input("corpus", corpus_path)?;
    let vocab = build_vocabulary(&corpus, 1, usize::MAX);
    manifest.lap("load");

    let (table, history) = train_aligner(&corpus, &vocab, &config)?;
    for (k, ll) in history.iter().enumerate() {
        eprintln!("# iteration {} log-likelihood {ll:.6}", k + 1);
    }
    let alignments: Vec<WordAlignment> = corpus
        .iter()
        .map(|pair| viterbi_align(pair, &vocab, &table, &config))
        .collect();
    manifest.lap("align");

    let mut writer = create(out)?;
    write_pharaoh(&mut writer, &alignments).map_err(at(out))?;
    writer.flush().map_err(|e| Failure::io(out, e))?;
    drop(writer);
    manifest.output("alignments", out)?;
    manifest.config = json!({
        "iterations": iters,
        "tension": tension,
        "null_prob": null_prob,
        "pairs": corpus.len(),
        "log_likelihood": history,
    });
    manifest.write_next_to(out)?;
    Ok(())
}

pub struct TrainArgs {
    pub corpus: PathBuf,
    pub alignments: Option<PathBuf>,
    pub mode: ModeArg,
    pub lambda: Option<f64>,
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub seed: u64,
    pub preset: PresetArg,
    pub max_vocab: usize,
    pub out: PathBuf,
}

pub fn train(args: TrainArgs) -> Result<(), Failure> {
    let mode = match args.mode {
        ModeArg::Weam => Mode::Weam,
        ModeArg::Tlm => Mode::Tlm,
    };
    let preset_name = match args.preset {
        PresetArg::Desk => "desk",
        PresetArg::Paper => "paper",
    };
    let preset = Preset::by_name(preset_name)?.with_seed(args.seed);
    let mut training = preset.training;
    training.mode = mode;
    training.lambda = args.lambda.unwrap_or(1.0);
    if let Some(epochs) = args.epochs {
        training.epochs = epochs;
    }
    if let Some(lr) = args.learning_rate {
        training.learning_rate = lr;
    }
    if let Some(batch) = args.batch_size {
        training.batch_size = batch;
    }
    if mode == Mode::Tlm && args.lambda.is_some() {
        warn!("--lambda is ignored in tlm mode; training with lambda = 0");
    }
    training
        .validate()
        .map_err(|e| Failure::Usage(e.to_string()))?;
    if args.max_vocab <= weam::corpus::NUM_RESERVED {
        return Err(Failure::Usage(format!(
            "--max-vocab must exceed the {} reserved tokens",
            weam::corpus::NUM_RESERVED
        )));
    }

    let mut manifest = RunManifest::new("train");
    manifest.seed = Some(args.seed);
    let corpus = read_corpus(&args.corpus)?;
    manifest.input("corpus", &args.corpus)?;
    let alignments = match &args.alignments {
        Some(path) => {
            manifest.input("alignments", path)?;
            read_alignments(path)?
        }
        None if mode == Mode::Tlm => vec![WordAlignment::default(); corpus.len()],
        None => {
            return Err(Failure::Usage(
                "--alignments is required in weam mode".into(),
            ))
        }
    };
    let vocab = build_vocabulary(&corpus, 1, args.max_vocab);
    let model = preset.model_config(vocab.len(), args.seed);
    let data = prepare_corpus(&corpus, &alignments, &vocab, model.m_max).map_err(|e| match e {
        weam::Error::Config(msg) => Failure::Input(msg),
        other => other.into(),
    })?;
    manifest.lap("prepare");

    let outcome = weam::training::train(&data, &model, &training, &preset.masking)?;
    manifest.lap("train");
    if let Some(last) = outcome.log.last() {
        eprintln!(
            "# {} steps, final batch loss {:.6} (l_mp {:.6}, l_cp {:.6})",
            last.step, last.loss.total, last.loss.l_mp, last.loss.l_cp
        );
    }

    save_checkpoint(&args.out, &model, &outcome.params).map_err(at(&args.out))?;
    let vocab_path = sidecar(&args.out, ".vocab");
    let mut writer = create(&vocab_path)?;
    vocab.write(&mut writer).map_err(at(&vocab_path))?;
    writer.flush().map_err(|e| Failure::io(&vocab_path, e))?;
    let log_path = sidecar(&args.out, ".log.tsv");
    let mut writer = create(&log_path)?;
    write_step_log(&mut writer, &outcome.log).map_err(at(&log_path))?;
    writer.flush().map_err(|e| Failure::io(&log_path, e))?;
    manifest.output("checkpoint", &args.out)?;
    manifest.output("vocabulary", &vocab_path)?;
    manifest.output("step_log", &log_path)?;

    let masking = preset.masking;
    manifest.config = json!({
        "preset": preset.name,
        "mode": mode.to_string(),
        "lambda": training.effective_lambda(),
        "learning_rate": training.learning_rate,
        "batch_size": training.batch_size,
        "epochs": training.epochs,
        "beta1": training.beta1,
        "beta2": training.beta2,
        "eps": training.eps,
        "shuffle_seed": training.seed,
        "masking": {
            "mask_prob": masking.mask_prob,
            "replace_mask": masking.replace_mask,
            "replace_random": masking.replace_random,
            "keep": masking.keep,
            "seed": masking.seed,
        },
        "model": {
            "vocab_size": model.vocab_size,
            "hidden": model.hidden,
            "layers": model.layers,
            "heads": model.heads,
            "ff_mult": model.ff_mult,
            "m_max": model.m_max,
            "init_std": model.init_std,
            "identity_heads": model.identity_heads,
            "seed": model.seed,
        },
        "max_vocab": args.max_vocab,
        "pairs": data.instances.len(),
        "skipped_pairs": data.skipped,
        "steps": outcome.log.len(),
    });
    manifest.write_next_to(&args.out)?;
    Ok(())
}

/// JSON written by `eval` and read back by `plot` and `export`.
#[derive(Debug, Serialize, Deserialize)]
pub struct EvalReport {
    pub p_at_1: f64,
    pub direction: String,
    pub top_k: usize,
    pub lexicon: Vec<ReportPair>,
    pub ranks: Vec<ReportRank>,
    /// Target-side words ranked for every source word.
    pub candidates: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ReportPair {
    pub source: String,
    pub target: String,
    pub frequency: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ReportRank {
    pub source: String,
    pub target: String,
    pub rank: usize,
    pub hit: bool,
    pub degenerate: bool,
}

pub struct EvalArgs {
    pub ckpt: PathBuf,
    pub vocab: Option<PathBuf>,
    pub corpus: PathBuf,
    pub alignments: PathBuf,
    pub top_k: usize,
    pub stopwords: Option<PathBuf>,
    pub report: PathBuf,
}

fn read_stopwords(path: &Path, vocab: &Vocabulary) -> Result<HashSet<u32>, Failure> {
    let mut out = HashSet::new();
    for line in open(path)?.lines() {
        let line = line.map_err(|e| Failure::io(path, e))?;
        if let Some(id) = vocab.id(line.trim()) {
            out.insert(id);
        }
    }
    Ok(out)
}

pub fn eval(args: EvalArgs) -> Result<(), Failure> {
    let mut manifest = RunManifest::new("eval");
    let (_, params, vocab) = load_model(&args.ckpt, args.vocab.as_deref())?;
    manifest.input("checkpoint", &args.ckpt)?;
    let corpus = read_corpus(&args.corpus)?;
    manifest.input("corpus", &args.corpus)?;
    let alignments = read_alignments(&args.alignments)?;
    manifest.input("alignments", &args.alignments)?;
    let stopwords = match &args.stopwords {
        Some(path) => {
            manifest.input("stopwords", path)?;
            read_stopwords(path, &vocab)?
        }
        None => default_stopwords(&corpus, &vocab, DEFAULT_STOPWORDS_PER_SIDE),
    };
    manifest.lap("load");

    let lexicon = extract_frequent_pairs(&alignments, &corpus, &vocab, args.top_k, &stopwords)?;
    if lexicon.is_empty() {
        return Err(Failure::Input(
            "no aligned word pairs remain after stopword filtering".into(),
        ));
    }
    let candidates: Vec<u32> = corpus
        .iter()
        .flat_map(|pair| pair.target.iter())
        .filter_map(|w| vocab.id(w))
        .filter(|&id| !Vocabulary::is_reserved(id))
        .collect::<BTreeSet<u32>>()
        .into_iter()
        .collect();
    let retrieval = retrieval_precision(&params, &lexicon, &candidates)?;
    manifest.lap("evaluate");

    let name = |id: u32| vocab.token(id).unwrap_or("[UNK]").to_string();
    let report = EvalReport {
        p_at_1: retrieval.p_at_1,
        direction: "source->target".into(),
        top_k: args.top_k,
        lexicon: lexicon
            .iter()
            .map(|p| ReportPair {
                source: name(p.source),
                target: name(p.target),
                frequency: p.frequency,
            })
            .collect(),
        ranks: retrieval
            .ranks
            .iter()
            .map(|r| ReportRank {
                source: name(r.pair.source),
                target: name(r.pair.target),
                rank: r.rank,
                hit: r.is_hit(),
                degenerate: r.degenerate,
            })
            .collect(),
        candidates: candidates.iter().map(|&id| name(id)).collect(),
    };
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    std::fs::write(&args.report, json + "\n").map_err(|e| Failure::io(&args.report, e))?;
    eprintln!(
        "# P@1 {:.4} over {} pairs",
        report.p_at_1,
        report.lexicon.len()
    );

    manifest.output("report", &args.report)?;
    manifest.config = json!({
        "top_k": args.top_k,
        "stopwords": if args.stopwords.is_some() { "file".to_string() } else {
            format!("top {DEFAULT_STOPWORDS_PER_SIDE} per side")
        },
        "stopword_count": stopwords.len(),
        "candidates": candidates.len(),
    });
    manifest.write_next_to(&args.report)?;
    Ok(())
}

fn read_report(path: &Path) -> Result<EvalReport, Failure> {
    serde_json::from_reader(open(path)?).map_err(|e| Failure::io(path, e))
}

/// Distinct lexicon tokens in first-appearance order, and each pair's row
/// indices into that list.
fn lexicon_tokens(report: &EvalReport) -> (Vec<String>, Vec<(usize, usize)>) {
    fn index(tok: &str, tokens: &mut Vec<String>) -> usize {
        tokens.iter().position(|t| t == tok).unwrap_or_else(|| {
            tokens.push(tok.to_string());
            tokens.len() - 1
        })
    }
    let mut tokens = Vec::new();
    let links = report
        .lexicon
        .iter()
        .map(|p| (index(&p.source, &mut tokens), index(&p.target, &mut tokens)))
        .collect();
    (tokens, links)
}

pub fn plot(ckpt: &Path, vocab: Option<&Path>, lexicon: &Path, out: &Path) -> Result<(), Failure> {
    let mut manifest = RunManifest::new("plot");
    let (_, params, vocab) = load_model(ckpt, vocab)?;
    manifest.input("checkpoint", ckpt)?;
    let report = read_report(lexicon)?;
    manifest.input("lexicon", lexicon)?;
    let (tokens, links) = lexicon_tokens(&report);
    if tokens.len() < 2 {
        return Err(Failure::Input(format!(
            "{}: need at least 2 tokens to plot, found {}",
            lexicon.display(),
            tokens.len()
        )));
    }
    let table = export_embeddings(&params, &vocab, &tokens)?;
    let projection = project_2d(table.rows.view())?;
    if projection.degenerate {
        warn!("embeddings of the lexicon tokens are identical; all points coincide");
    }
    let mut writer = create(out)?;
    plot_pairs(projection.coords.view(), &tokens, &links, &mut writer).map_err(at(out))?;
    writer.flush().map_err(|e| Failure::io(out, e))?;
    drop(writer);
    manifest.lap("plot");
    manifest.output("svg", out)?;
    manifest.config = json!({ "tokens": tokens.len(), "pairs": links.len(), "projection": "pca" });
    manifest.write_next_to(out)?;
    Ok(())
}

pub fn export(
    ckpt: &Path,
    vocab: Option<&Path>,
    lexicon: Option<&Path>,
    out: &Path,
) -> Result<(), Failure> {
    let mut manifest = RunManifest::new("export");
    let (_, params, vocab) = load_model(ckpt, vocab)?;
    manifest.input("checkpoint", ckpt)?;
    let tokens: Vec<String> = match lexicon {
        Some(path) => {
            manifest.input("lexicon", path)?;
            lexicon_tokens(&read_report(path)?).0
        }
        None => vocab.tokens()[weam::corpus::NUM_RESERVED..].to_vec(),
    };
    let table = export_embeddings(&params, &vocab, &tokens)?;
    let mut writer = create(out)?;
    write_embedding_tsv(&mut writer, &table).map_err(at(out))?;
    writer.flush().map_err(|e| Failure::io(out, e))?;
    drop(writer);
    manifest.lap("export");
    manifest.output("embeddings", out)?;
    manifest.config = json!({
        "tokens": tokens.len(),
        "selection": if lexicon.is_some() { "lexicon" } else { "vocabulary" },
    });
    manifest.write_next_to(out)?;
    Ok(())
}

pub fn synth(
    out: &Path,
    types: usize,
    pairs: usize,
    min_len: usize,
    max_len: usize,
    seed: u64,
) -> Result<(), Failure> {
    if types == 0 || pairs == 0 || min_len == 0 || min_len > max_len {
        return Err(Failure::Usage(
            "--types, --pairs and --min-len must be positive and --min-len <= --max-len".into(),
        ));
    }
    let mut manifest = RunManifest::new("synth");
    manifest.seed = Some(seed);
    let config = SynthConfig {
        types,
        pairs,
        min_len,
        max_len,
    };
    let corpus = bijective_corpus(&config, seed);

    let mut writer = create(out)?;
    write_parallel_corpus(&mut writer, &corpus.pairs).map_err(at(out))?;
    writer.flush().map_err(|e| Failure::io(out, e))?;
    let gold = sidecar(out, ".gold");
    let mut writer = create(&gold)?;
    write_pharaoh(&mut writer, &corpus.gold).map_err(at(&gold))?;
    writer.flush().map_err(|e| Failure::io(&gold, e))?;
    let dict = sidecar(out, ".dict.tsv");
    let mut writer = create(&dict)?;
    for (s, t) in &corpus.dictionary {
        writeln!(writer, "{s}\t{t}").map_err(|e| Failure::io(&dict, e))?;
    }
    writer.flush().map_err(|e| Failure::io(&dict, e))?;
    drop(writer);
    manifest.lap("generate");

    manifest.output("corpus", out)?;
    manifest.output("gold_alignments", &gold)?;
    manifest.output("dictionary", &dict)?;
    manifest.config =
        json!({ "types": types, "pairs": pairs, "min_len": min_len, "max_len": max_len });
    manifest.write_next_to(out)?;
    Ok(())
}
