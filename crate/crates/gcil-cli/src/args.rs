//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "gcil", version, about = "Graph contrastive invariant learning experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ingest a dataset into the canonical directory format.
    Convert(ConvertArgs),
    /// Train one run: checkpoints plus a metrics stream.
    Train(RunArgs),
    /// Multi-seed train-and-probe evaluation: report.json.
    Eval(RunArgs),
    /// Four-variant ablation grid: CSV and JSON tables.
    Ablate(RunArgs),
    /// Correlation matrix of a trained run: corr.csv, optional PNG heatmap.
    VizCorr(VizCorrArgs),
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    /// Source directory.
    #[arg(long)]
    pub source: PathBuf,

    /// Source format: `content-cites` (public citation-network distribution)
    /// or `canonical` (validating copy).
    #[arg(long)]
    pub format: String,

    /// Dataset name, e.g. `cora` (locates `<source>/<name>.content` for
    /// content-cites input).
    #[arg(long)]
    pub name: String,

    /// Output dataset directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Experiment config TOML. Defaults to the named dataset's preset.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Dotted-key config override, repeatable (e.g. --override loss.gamma=0).
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,

    /// Directory for run artifacts. Defaults to
    /// `runs/<command>-<dataset>-<hash prefix>`.
    #[arg(long)]
    pub run_dir: Option<PathBuf>,

    /// Comma-separated seed list. `eval` defaults to 0,1,2,3,4; `ablate` to
    /// 0,1; `train` accepts exactly one seed (otherwise set train.seed).
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,

    /// Dataset name; overrides the config's `dataset` field.
    #[arg(long)]
    pub dataset: Option<String>,
}

#[derive(Debug, Args)]
pub struct VizCorrArgs {
    /// Run directory holding config-resolved.json and checkpoints/.
    #[arg(long)]
    pub run_dir: PathBuf,

    /// Checkpoint to analyze; defaults to `<run-dir>/checkpoints/last.ckpt`,
    /// the end-of-training parameters.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,

    /// Also render `corr.png`.
    #[arg(long)]
    pub png: bool,
}
