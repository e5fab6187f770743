use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dominance_core::aggregate::Combo;
use dominance_core::pipeline::Strategy;
use dominance_core::Source;

/// Decide which of two entity classes has more instances.
#[derive(Parser, Debug)]
#[command(name = "dominance", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Subcommand, Debug, Clone, PartialEq)]
pub enum Command {
    /// Collect KB/SE/LM signals for every class into a signal table.
    Fetch,
    /// Compare two classes and print the per-source breakdown.
    Predict {
        class_a: String,
        class_b: String,
        /// Plural phrase for a class that is not in the dataset.
        #[arg(long)]
        phrase_a: Option<String>,
        #[arg(long)]
        phrase_b: Option<String>,
    },
    /// Score every strategy and write the report tables.
    Evaluate,
    /// Fit one weighted-vote model per combo with cross-validated λ.
    Train,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeArg {
    Live,
    Replay,
}

#[derive(Args, Debug, Clone, Default)]
pub struct CommonArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Class CSV (id,label_singular,label_plural,domain,kb_entity_id,gt_cardinality).
    #[arg(long, global = true)]
    pub dataset: Option<PathBuf>,

    /// Signal-table JSON: written by `fetch`, read by the other commands.
    #[arg(long, global = true)]
    pub signals: Option<PathBuf>,

    /// Response cache directory.
    #[arg(long, global = true)]
    pub cache: Option<PathBuf>,

    /// Fetch manifest path (default: next to the signal table).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,

    /// Snippet fixture directory used instead of the live search API.
    #[arg(long, global = true)]
    pub snippets: Option<PathBuf>,

    #[arg(long, value_enum, global = true)]
    pub mode: Option<ModeArg>,

    /// Shorthand for `--mode live`.
    #[arg(long, global = true, conflicts_with = "mode")]
    pub live: bool,

    /// Sources to use, e.g. `kb,lm`.
    #[arg(long, value_delimiter = ',', global = true)]
    pub sources: Option<Vec<Source>>,

    /// Aggregation combo(s): root, maj, ttest, root+maj, root+ttest, all.
    #[arg(long, value_delimiter = ',', global = true)]
    pub combo: Option<Vec<Combo>>,

    /// per-source, majority-vote or weighted-vote (comma-separated for evaluate).
    #[arg(long, value_delimiter = ',', global = true)]
    pub strategy: Option<Vec<Strategy>>,

    /// Model directory holding `{combo}.json` files.
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,

    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Report directory for report.txt / report.csv / report.json.
    #[arg(long, global = true)]
    pub report: Option<PathBuf>,

    /// Machine-readable output on stdout.
    #[arg(long, global = true)]
    pub json: bool,
}
