//! `weam`: align a parallel corpus, train the encoder, evaluate and plot the
//! resulting embedding alignment.

mod commands;
mod manifest;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use commands::Failure;

#[derive(Debug, Parser)]
#[command(
    name = "weam",
    version,
    about = "Word-exchange aligning model laboratory"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Weam,
    Tlm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PresetArg {
    Desk,
    Paper,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Word-align a parallel corpus with the EM aligner; writes Pharaoh links.
    Align {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// EM iterations.
        #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
        iters: u64,
        /// Strength of the diagonal prior.
        #[arg(long, default_value_t = 4.0)]
        tension: f64,
        /// Probability mass of the NULL source word.
        #[arg(long = "null", default_value_t = 0.08)]
        null_prob: f64,
    },
    /// Train the encoder; writes a checkpoint plus `.vocab`, `.log.tsv` and
    /// `.manifest.json` files next to it.
    Train {
        #[arg(long)]
        corpus: PathBuf,
        /// Pharaoh alignments, one line per corpus pair. Required for weam.
        #[arg(long)]
        alignments: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = ModeArg::Weam)]
        mode: ModeArg,
        /// Weight of the cross-lingual loss [default: 1.0]. Ignored by tlm.
        #[arg(long)]
        lambda: Option<f64>,
        /// Overrides the preset's epoch count.
        #[arg(long)]
        epochs: Option<usize>,
        /// Overrides the preset's learning rate.
        #[arg(long)]
        learning_rate: Option<f64>,
        /// Overrides the preset's batch size.
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = PresetArg::Desk)]
        preset: PresetArg,
        /// Largest vocabulary size, reserved tokens included.
        #[arg(long, default_value_t = 2000)]
        max_vocab: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract frequent aligned word pairs and measure retrieval P@1.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        /// Defaults to `<ckpt>.vocab`.
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        alignments: PathBuf,
        #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
        top_k: u64,
        /// One stopword per line. Defaults to the 20 most frequent words of
        /// each side.
        #[arg(long)]
        stopwords: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
    },
    /// Project the lexicon's embeddings to 2-D and draw them as SVG.
    Plot {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// Report written by `eval`.
        #[arg(long)]
        lexicon: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write embedding rows as TSV: the lexicon's tokens, or every word.
    Export {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic corpus from a random bijective dictionary, with
    /// its gold alignments (`.gold`) and dictionary (`.dict.tsv`).
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 50)]
        types: usize,
        #[arg(long, default_value_t = 200)]
        pairs: usize,
        #[arg(long, default_value_t = 3)]
        min_len: usize,
        #[arg(long, default_value_t = 8)]
        max_len: usize,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
    },
}

fn init_logging() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format(|buf, record| {
            let level = record.level().as_str().to_lowercase();
            writeln!(buf, "# {level}: {}", record.args())
        })
        .init();
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Align {
            corpus,
            out,
            iters,
            tension,
            null_prob,
        } => commands::align(&corpus, &out, iters as usize, tension, null_prob),
        Command::Train {
            corpus,
            alignments,
            mode,
            lambda,
            epochs,
            learning_rate,
            batch_size,
            seed,
            preset,
            max_vocab,
            out,
        } => commands::train(commands::TrainArgs {
            corpus,
            alignments,
            mode,
            lambda,
            epochs,
            learning_rate,
            batch_size,
            seed,
            preset,
            max_vocab,
            out,
        }),
        Command::Eval {
            ckpt,
            vocab,
            corpus,
            alignments,
            top_k,
            stopwords,
            report,
        } => commands::eval(commands::EvalArgs {
            ckpt,
            vocab,
            corpus,
            alignments,
            top_k: top_k as usize,
            stopwords,
            report,
        }),
        Command::Plot {
            ckpt,
            vocab,
            lexicon,
            out,
        } => commands::plot(&ckpt, vocab.as_deref(), &lexicon, &out),
        Command::Export {
            ckpt,
            vocab,
            lexicon,
            out,
        } => commands::export(&ckpt, vocab.as_deref(), lexicon.as_deref(), &out),
        Command::Synth {
            out,
            types,
            pairs,
            min_len,
            max_len,
            seed,
        } => commands::synth(&out, types, pairs, min_len, max_len, seed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {failure}");
            ExitCode::from(failure.exit_code())
        }
    }
}
