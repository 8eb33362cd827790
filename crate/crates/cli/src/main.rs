//! Command-line front end: graph extraction and optimization, dataset
//! preparation, training, indexing, search, evaluation and the HTTP
//! service.

mod commands;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "vfg-search", version, about = "Semantic code search over LLVM IR flow graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the flow graph of one function in an IR file.
    Extract {
        #[arg(long)]
        ir: PathBuf,
        /// Function to extract; defaults to the first one defined.
        #[arg(long)]
        function: Option<String>,
        #[arg(long)]
        out: PathBuf,
        /// Also write a Graphviz rendering.
        #[arg(long)]
        dot: Option<PathBuf>,
    },
    /// Shrink an extracted graph.
    Optimize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        stats: Option<PathBuf>,
        /// Trivial-opcode set file replacing the default set.
        #[arg(long)]
        trivial_opcodes: Option<PathBuf>,
    },
    /// Corpus preparation.
    Dataset {
        #[command(subcommand)]
        command: DatasetCommand,
    },
    /// Train the encoders on a prepared corpus.
    Train {
        /// Corpus directory (reads train.jsonl) or a JSONL file.
        #[arg(long)]
        corpus: PathBuf,
        /// TOML training config; missing keys take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for checkpoints, vocabularies and the loss curve.
        #[arg(long)]
        out: PathBuf,
    },
    /// Search index management.
    Index {
        #[command(subcommand)]
        command: IndexCommand,
    },
    /// Run one query against an index.
    Search {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        query: String,
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Score test queries and/or exported UI sessions.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        index: Option<PathBuf>,
        /// JSONL pairs whose descriptions are used as queries.
        #[arg(long, requires_all = ["checkpoint", "index"])]
        test: Option<PathBuf>,
        /// Bucket edges (TOML); defaults are used otherwise.
        #[arg(long)]
        buckets: Option<PathBuf>,
        /// Session export(s) from the web UI.
        #[arg(long)]
        session: Vec<PathBuf>,
        /// Also write the full report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Serve the HTTP API (and optionally the UI bundle).
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        index: PathBuf,
        /// Directory with the built UI to serve at `/`.
        #[arg(long = "static")]
        static_dir: Option<PathBuf>,
        /// Append-only feedback log.
        #[arg(long, default_value = "feedback.jsonl")]
        feedback: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
enum DatasetCommand {
    /// Filter raw records, split them and write vocabularies.
    Build {
        #[arg(long)]
        raw: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 17)]
        seed: u64,
        #[arg(long, default_value_t = 0.05)]
        test_fraction: f64,
        /// Regular expressions (one per line) for comments to drop.
        #[arg(long)]
        reject_patterns: Option<PathBuf>,
        #[arg(long, default_value_t = 15_000)]
        ir_vocab_size: usize,
        #[arg(long, default_value_t = 10_000)]
        query_vocab_size: usize,
    },
}

#[derive(Debug, Subcommand)]
enum IndexCommand {
    /// Embed every pair's graph and write the index.
    Build {
        #[arg(long)]
        checkpoint: PathBuf,
        /// JSONL pair files (or corpus directories) to index.
        #[arg(long = "pairs", required = true)]
        pairs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Extract { ir, function, out, dot } => commands::extract(&ir, function.as_deref(), &out, dot.as_deref()),
        Command::Optimize {
            input,
            out,
            stats,
            trivial_opcodes,
        } => commands::optimize(&input, &out, stats.as_deref(), trivial_opcodes.as_deref()),
        Command::Dataset {
            command:
                DatasetCommand::Build {
                    raw,
                    out,
                    seed,
                    test_fraction,
                    reject_patterns,
                    ir_vocab_size,
                    query_vocab_size,
                },
        } => commands::dataset_build(&commands::DatasetArgs {
            raw,
            out,
            seed,
            test_fraction,
            reject_patterns,
            ir_vocab_size,
            query_vocab_size,
        }),
        Command::Train { corpus, config, out } => commands::train(&corpus, config.as_deref(), &out),
        Command::Index {
            command: IndexCommand::Build { checkpoint, pairs, out },
        } => commands::index_build(&checkpoint, &pairs, &out),
        Command::Search {
            checkpoint,
            index,
            query,
            k,
            json,
        } => commands::search(&checkpoint, &index, &query, k, json),
        Command::Eval {
            checkpoint,
            index,
            test,
            buckets,
            session,
            json,
        } => commands::eval(&commands::EvalArgs {
            checkpoint,
            index,
            test,
            buckets,
            sessions: session,
            json,
        }),
        Command::Serve {
            bind,
            checkpoint,
            index,
            static_dir,
            feedback,
        } => commands::serve(&bind, checkpoint, index, static_dir, feedback),
    }
}
