//! Command implementations and artifact writing.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use gcil::config::ExperimentConfig;
use gcil::dataset::{self, LoadOptions, SplitSpec};
use gcil::eval;
use gcil::graph::Graph;
use gcil::train::{self, EpochRecord, TrainConfig};

use crate::args::{Cli, Command, ConvertArgs, RunArgs, VizCorrArgs};
use crate::heatmap;

/// Anything that stops a command from producing its artifacts.
#[derive(Debug)]
pub enum CliError {
    Lib(gcil::Error),
    Io { path: PathBuf, source: std::io::Error },
    Usage(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Lib(e) => write!(f, "{e}"),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            CliError::Usage(msg) => write!(f, "{msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<gcil::Error> for CliError {
    fn from(e: gcil::Error) -> Self {
        CliError::Lib(e)
    }
}

pub fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Convert(args) => cmd_convert(&args),
        Command::Train(args) => cmd_train(&args),
        Command::Eval(args) => cmd_eval(&args),
        Command::Ablate(args) => cmd_ablate(&args),
        Command::VizCorr(args) => cmd_viz_corr(&args),
    }
}

/// `GCIL_DATA_ROOT`, defaulting to `data` under the working directory.
fn data_root() -> PathBuf {
    std::env::var_os("GCIL_DATA_ROOT")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data"))
}

fn resolve_config(args: &RunArgs) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::from_toml_file(path)?,
        None => ExperimentConfig::preset(args.dataset.as_deref().unwrap_or("cora"))?,
    };
    if let Some(dataset) = &args.dataset {
        cfg.dataset = dataset.clone();
    }
    if !args.overrides.is_empty() {
        cfg = cfg.with_overrides(&args.overrides)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_graph(cfg: &ExperimentConfig) -> Result<Graph, CliError> {
    let opts = LoadOptions {
        row_normalize_features: cfg.row_normalize_features,
    };
    Ok(dataset::load_dataset_with(&data_root(), &cfg.dataset, opts)?)
}

fn run_dir(args: &RunArgs, cfg: &ExperimentConfig, command: &str) -> PathBuf {
    args.run_dir.clone().unwrap_or_else(|| {
        PathBuf::from("runs").join(format!("{command}-{}-{}", cfg.dataset, &cfg.hash()[..8]))
    })
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_resolved_config(dir: &Path, cfg: &ExperimentConfig) -> Result<(), CliError> {
    write_text(&dir.join("config-resolved.json"), &format!("{}\n", cfg.resolved_json()))
}

fn cmd_convert(args: &ConvertArgs) -> Result<(), CliError> {
    let g = match args.format.as_str() {
        "content-cites" => {
            let g = dataset::convert_content_cites(&args.source, &args.name, SplitSpec::default())?;
            dataset::save_canonical(&g, &args.out)?;
            g
        }
        "canonical" => dataset::copy_canonical(&args.source, &args.name, &args.out)?,
        other => {
            return Err(CliError::Usage(format!(
                "unknown source format '{other}'; expected content-cites or canonical"
            )));
        }
    };
    println!(
        "{}: {} nodes, {} edges, {} classes, {} features -> {}",
        g.name(),
        g.num_nodes(),
        g.num_edges(),
        g.num_classes().unwrap_or(0),
        g.num_features(),
        args.out.display()
    );
    Ok(())
}

/// One serialized metrics line: the epoch record under a schema marker.
#[derive(serde::Serialize)]
struct MetricsLine<'a> {
    schema: u32,
    #[serde(flatten)]
    record: &'a EpochRecord,
}

fn cmd_train(args: &RunArgs) -> Result<(), CliError> {
    let mut cfg = resolve_config(args)?;
    if let Some(seeds) = &args.seeds {
        match seeds.as_slice() {
            [seed] => cfg.train.seed = *seed,
            _ => {
                return Err(CliError::Usage(format!(
                    "train takes exactly one seed, got {}",
                    seeds.len()
                )));
            }
        }
    }
    let g = load_graph(&cfg)?;
    let dir = run_dir(args, &cfg, "train");
    let ckpt_dir = dir.join("checkpoints");
    ensure_dir(&ckpt_dir)?;
    write_resolved_config(&dir, &cfg)?;

    let tc = TrainConfig::from_experiment(&cfg, g.num_edges())?;
    let outcome = train::train(&g, &tc)?;

    let metrics_path = dir.join("metrics.jsonl");
    let mut buf = Vec::new();
    for record in &outcome.history.epochs {
        let line = serde_json::to_string(&MetricsLine { schema: 1, record })
            .expect("epoch record serializes");
        writeln!(buf, "{line}").expect("vec write");
    }
    fs::write(&metrics_path, &buf).map_err(|source| CliError::Io {
        path: metrics_path,
        source,
    })?;

    let hash = cfg.hash();
    train::save_checkpoint(&ckpt_dir.join("best.ckpt"), &outcome.selected, &hash)?;
    train::save_checkpoint(&ckpt_dir.join("last.ckpt"), &outcome.last, &hash)?;

    match outcome.history.best {
        Some(best) => println!(
            "trained {}: best val Micro-F1 {:.4} at epoch {} -> {}",
            cfg.dataset,
            best.val_micro_f1,
            best.epoch,
            dir.display()
        ),
        None => println!(
            "trained {} ({} epochs, no probe splits) -> {}",
            cfg.dataset,
            outcome.history.epochs.len(),
            dir.display()
        ),
    }
    Ok(())
}

fn cmd_eval(args: &RunArgs) -> Result<(), CliError> {
    let cfg = resolve_config(args)?;
    let g = load_graph(&cfg)?;
    let seeds = args.seeds.clone().unwrap_or_else(|| vec![0, 1, 2, 3, 4]);
    let dir = run_dir(args, &cfg, "eval");
    ensure_dir(&dir)?;
    write_resolved_config(&dir, &cfg)?;

    let report = eval::multi_seed_eval(&g, &cfg, &seeds)?;
    let json = serde_json::json!({
        "schema": 1,
        "dataset": cfg.dataset,
        "config_hash": cfg.hash(),
        "seeds": seeds,
        "macro_f1": { "mean": report.macro_f1_mean, "std": report.macro_f1_std },
        "micro_f1": { "mean": report.micro_f1_mean, "std": report.micro_f1_std },
        "per_seed": report.per_seed,
    });
    write_text(
        &dir.join("report.json"),
        &format!("{}\n", serde_json::to_string_pretty(&json).expect("report serializes")),
    )?;
    println!(
        "{} over {} seeds: Macro-F1 {:.2} ± {:.2}, Micro-F1 {:.2} ± {:.2} -> {}",
        cfg.dataset,
        report.num_seeds,
        100.0 * report.macro_f1_mean,
        100.0 * report.macro_f1_std,
        100.0 * report.micro_f1_mean,
        100.0 * report.micro_f1_std,
        dir.display()
    );
    Ok(())
}

fn cmd_ablate(args: &RunArgs) -> Result<(), CliError> {
    let cfg = resolve_config(args)?;
    let g = load_graph(&cfg)?;
    let seeds = args.seeds.clone().unwrap_or_else(|| vec![0, 1]);
    let dir = run_dir(args, &cfg, "ablate");
    ensure_dir(&dir)?;
    write_resolved_config(&dir, &cfg)?;

    let rows = eval::ablation_suite(&g, &cfg, &seeds)?;

    let mut csv = String::from(
        "variant,macro_f1_mean,macro_f1_std,micro_f1_mean,micro_f1_std,num_seeds\n",
    );
    for row in &rows {
        let r = &row.report;
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.variant,
            r.macro_f1_mean,
            r.macro_f1_std,
            r.micro_f1_mean,
            r.micro_f1_std,
            r.num_seeds
        ));
    }
    write_text(&dir.join("ablation.csv"), &csv)?;

    let json = serde_json::json!({
        "schema": 1,
        "dataset": cfg.dataset,
        "config_hash": cfg.hash(),
        "seeds": seeds,
        "rows": rows,
    });
    write_text(
        &dir.join("ablation.json"),
        &format!("{}\n", serde_json::to_string_pretty(&json).expect("table serializes")),
    )?;

    for row in &rows {
        println!(
            "{:<16} Macro-F1 {:.2} ± {:.2}  Micro-F1 {:.2} ± {:.2}",
            row.variant,
            100.0 * row.report.macro_f1_mean,
            100.0 * row.report.macro_f1_std,
            100.0 * row.report.micro_f1_mean,
            100.0 * row.report.micro_f1_std,
        );
    }
    println!("-> {}", dir.display());
    Ok(())
}

fn cmd_viz_corr(args: &VizCorrArgs) -> Result<(), CliError> {
    let resolved_path = args.run_dir.join("config-resolved.json");
    let text = fs::read_to_string(&resolved_path).map_err(|source| CliError::Io {
        path: resolved_path,
        source,
    })?;
    let mut value: serde_json::Value =
        serde_json::from_str(&text).map_err(gcil::Error::from)?;
    if let Some(obj) = value.as_object_mut() {
        obj.remove("schema");
        obj.remove("config_hash");
    }
    let cfg: ExperimentConfig =
        serde_json::from_value(value).map_err(gcil::Error::from)?;

    let ckpt_path = args
        .checkpoint
        .clone()
        .unwrap_or_else(|| args.run_dir.join("checkpoints").join("last.ckpt"));
    let (params, stored_hash) = train::load_checkpoint(&ckpt_path)?;
    if stored_hash != cfg.hash() {
        return Err(CliError::Usage(format!(
            "checkpoint {} was written under config {}, run directory resolves to {}",
            ckpt_path.display(),
            stored_hash,
            cfg.hash()
        )));
    }

    let g = load_graph(&cfg)?;
    let z = train::final_embed(&g, &params)?;
    let corr = eval::correlation_matrix(&z)?;
    write_text(&args.run_dir.join("corr.csv"), &corr.to_csv())?;
    if args.png {
        let png_path = args.run_dir.join("corr.png");
        heatmap::render(&corr.values, &png_path).map_err(|source| CliError::Io {
            path: png_path,
            source,
        })?;
    }
    println!(
        "{}: mean |off-diagonal| correlation {:.4} -> {}",
        cfg.dataset,
        corr.mean_abs_off_diagonal(),
        args.run_dir.join("corr.csv").display()
    );
    Ok(())
}
