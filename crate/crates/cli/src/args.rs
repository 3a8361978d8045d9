use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use slab_core::augment::Language;

use crate::config::Preset;

#[derive(Debug, Parser)]
#[command(
    name = "slab",
    version,
    about = "Statute retrieval lab: lexical and attentive ranking, negation augmentation, knowledge injection and embedding metrics",
    arg_required_else_help = true,
    propagate_version = true
)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// JSON run configuration; flags override its keys.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Seed for every random draw; required by randomized commands.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Run directory for outputs, the config echo and the manifest.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Encoder size preset.
    #[arg(long, global = true, value_enum)]
    pub preset: Option<Preset>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Corpus statistics and statement chunking.
    #[command(subcommand)]
    Corpus(CorpusCmd),
    /// Lawfulness records, negation and bilingual pair generation.
    #[command(subcommand)]
    Augment(AugmentCmd),
    /// BM25 inverted index.
    #[command(subcommand)]
    Index(IndexCmd),
    /// Neural re-rankers and lexical/semantic ensembling.
    #[command(subcommand)]
    Rank(RankCmd),
    /// Lawfulness classifier.
    #[command(subcommand)]
    Classify(ClassifyCmd),
    /// HYDRA heads and TRE injection needles.
    #[command(subcommand)]
    Inject(InjectCmd),
    /// Legal vocabulary coverage, centroid distance and projection export.
    #[command(subcommand)]
    Embed(EmbedCmd),
    /// Retrieval and classification metrics.
    #[command(subcommand)]
    Eval(EvalCmd),
    /// Gradient checks and kernel properties.
    #[command(subcommand)]
    Selftest(SelftestCmd),
}

#[derive(Debug, Subcommand)]
pub enum CorpusCmd {
    /// Word-count statistics of articles and their statements.
    Stats {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Split articles into numbered statements (`chunks.jsonl`).
    Chunk {
        #[arg(long)]
        corpus: PathBuf,
    },
}

fn parse_language(s: &str) -> Result<Language, String> {
    s.parse().map_err(|e: slab_core::Error| e.to_string())
}

#[derive(Debug, Subcommand)]
pub enum AugmentCmd {
    /// Append label-flipped negations (`augmented.jsonl`).
    Negate {
        /// Lawfulness records (JSONL).
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_parser = parse_language)]
        lang: Language,
        /// Rule table (TSV); the built-in tables by default.
        #[arg(long)]
        rules: Option<PathBuf>,
    },
    /// Lawfulness records from chunked articles and labelled queries.
    Lawfulness {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        queries: PathBuf,
    },
    /// Next-foreign-sentence pairs (`pairs.jsonl`).
    Nfsp {
        /// Aligned bilingual documents (JSONL).
        #[arg(long)]
        input: PathBuf,
    },
    /// Neighbour-multilingual-sentence pairs (`pairs.jsonl`).
    Nmsp {
        #[arg(long)]
        input: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum IndexCmd {
    /// Build and serialize the index (`index.bin`).
    Build {
        #[arg(long)]
        corpus: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum RankCmd {
    /// Train a ranker with negative sampling (`model/`, `loss.json`).
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        queries: PathBuf,
    },
    /// Rank queries and write `run.jsonl`.
    Run {
        /// Ranker directory written by `rank train`.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        /// Prebuilt index; built from the corpus otherwise.
        #[arg(long)]
        index: Option<PathBuf>,
        /// Validation queries for `"alpha": "grid"`.
        #[arg(long)]
        val: Option<PathBuf>,
    },
    /// Grid-search the mixing weight on validation queries.
    GridAlpha {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        queries: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum ClassifyCmd {
    /// Train on lawfulness records (`model/`, `loss.json`).
    Train {
        #[arg(long)]
        input: PathBuf,
    },
    /// Classify statements (JSONL with `text`, optional `lawful`).
    Run {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum InjectCmd {
    /// Pretrain HYDRA heads against SDOI targets on a frozen body.
    HydraPretrain {
        /// SDOI records (JSONL).
        #[arg(long)]
        sdoi: PathBuf,
        /// Body directory; a fresh body over the SDOI vocabulary otherwise.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Append pretrained heads to a body (`model/`).
    HydraAttach {
        #[arg(long)]
        model: PathBuf,
        /// `heads.bin` written by `hydra-pretrain`.
        #[arg(long)]
        heads: PathBuf,
    },
    /// Train a token model with injection needles on BIOE data.
    TreTrain {
        /// BIOE training data (TSV).
        #[arg(long)]
        data: PathBuf,
        /// Held-out BIOE data for the metrics report.
        #[arg(long)]
        val: Option<PathBuf>,
    },
    /// Tag counts over all levels of a BIOE file.
    TagStats {
        #[arg(long)]
        data: PathBuf,
    },
    /// Per-layer, per-head attention matrices for one input.
    AttnReport {
        #[arg(long)]
        model: PathBuf,
        /// Whitespace-separated tokens.
        #[arg(long)]
        text: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum EmbedCmd {
    /// Fraction of legal terms present in the embedding vocabulary.
    Lvc {
        /// Embeddings in `word v1 .. vd` text format.
        #[arg(long)]
        embeddings: PathBuf,
        /// Legal terms, one per line.
        #[arg(long)]
        terms: PathBuf,
    },
    /// Mean cosine distance of corpus tokens to the legal-term centroid.
    Leca {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        terms: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Projection-ready TSV of labelled vectors (`projection.tsv`).
    Project {
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        terms: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum EvalCmd {
    /// Precision, recall and F2 of one ranking, or macro averages over a
    /// judgments file.
    Prf2 {
        /// Comma-separated gold ids.
        #[arg(
            long,
            value_delimiter = ',',
            requires = "retrieved",
            conflicts_with = "judgments"
        )]
        gold: Option<Vec<String>>,
        /// Comma-separated retrieved ids, best first.
        #[arg(long, value_delimiter = ',', requires = "gold")]
        retrieved: Option<Vec<String>>,
        /// JSONL `{"qid","gold","retrieved"}`.
        #[arg(long, required_unless_present = "gold")]
        judgments: Option<PathBuf>,
    },
    /// Accuracy of predicted against gold labels (one `true`/`false`/`1`/`0`
    /// per line).
    Accuracy {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: PathBuf,
    },
    /// Mean per-evaluator positive rate.
    Human {
        /// Comma-separated positive counts, one per evaluator.
        #[arg(long, value_delimiter = ',', required = true)]
        positives: Vec<u32>,
        /// Samples each evaluator judged.
        #[arg(long)]
        samples: u32,
    },
}

#[derive(Debug, Subcommand)]
pub enum SelftestCmd {
    /// Finite-difference gradient checks of every kernel and encoder.
    Gradcheck {
        #[arg(long, default_value_t = 100)]
        instances: usize,
    },
    /// Seeded property checks of sparsemax, BM25 and negation.
    Properties {
        #[arg(long, default_value_t = 200)]
        cases: usize,
    },
}
