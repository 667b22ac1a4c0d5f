use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use bnnbench_core::datasets::{write_bundle, TaskId};
use bnnbench_core::harness::report::{
    matrices_from_entries, picp_mcp_comparison, read_csv, write_csv, write_mds, CcpRow, MatrixEntry, ResultRow,
};
use bnnbench_core::harness::{run_benchmark, task_bundle, write_outputs, ExperimentConfig, Scale};
use bnnbench_core::metrics::mds_embed;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    version,
    about = "Posterior approximation benchmark for Bayesian neural network regression"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the replicate datasets of every configured task.
    Generate(Common),
    /// Run the full sweep and write the result tables.
    Run(Common),
    /// Build PICP-versus-MCP tables from an existing run directory.
    Compare(Common),
    /// Recompute similarity embeddings from the discrepancy matrices of a run directory.
    Mds(Common),
}

#[derive(Args)]
struct Common {
    /// JSON config layered over the scale preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Preset used for anything the config file leaves out.
    #[arg(long, value_parser = parse_scale)]
    scale: Option<Scale>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn parse_scale(s: &str) -> std::result::Result<Scale, String> {
    s.parse().map_err(|e: bnnbench_core::Error| e.to_string())
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let scale = self.scale.unwrap_or_default();
        let mut cfg = match &self.config {
            Some(path) => {
                let mut text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                if let Some(s) = self.scale {
                    let mut value: serde_json::Value = serde_json::from_str(&text)?;
                    if let Some(obj) = value.as_object_mut() {
                        obj.insert("scale".into(), serde_json::to_value(s)?);
                    }
                    text = value.to_string();
                }
                ExperimentConfig::from_json_str(&text, scale)
                    .with_context(|| format!("loading config {}", path.display()))?
            }
            None => ExperimentConfig::preset(scale),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if self.workers.is_some() {
            cfg.workers = self.workers;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn cmd_generate(args: &Common) -> Result<()> {
    let cfg = args.config()?;
    let dir = args.out.join("datasets");
    for &task in &cfg.tasks {
        let bundle = task_bundle(&cfg, task)?;
        write_bundle(&bundle, &dir)?;
        log::info!(
            "{task}: {} training sets written to {}",
            cfg.n_replicates,
            dir.display()
        );
    }
    Ok(())
}

fn cmd_run(args: &Common) -> Result<()> {
    let cfg = args.config()?;
    fs::create_dir_all(&args.out)?;
    fs::write(args.out.join("config.json"), serde_json::to_string_pretty(&cfg)?)?;
    let output = run_benchmark(&cfg, &args.out)?;
    write_outputs(&output, &args.out)?;
    let diverged = output
        .rows
        .iter()
        .filter(|r| r.status != bnnbench_core::harness::report::Status::Ok)
        .count();
    log::info!(
        "{} runs written to {} ({diverged} diverged)",
        output.rows.len(),
        args.out.display()
    );
    Ok(())
}

fn tasks_in(rows: &[ResultRow]) -> BTreeSet<TaskId> {
    rows.iter().map(|r| r.task).collect()
}

fn cmd_compare(args: &Common) -> Result<()> {
    let cfg = args.config()?;
    let results: Vec<ResultRow> = read_csv(&args.out.join("results.csv")).context("reading results.csv")?;
    let mut summaries = Vec::new();
    for task in tasks_in(&results) {
        let ccp_path = args.out.join(format!("ccp_{task}.csv"));
        let ccp: Vec<CcpRow> = if ccp_path.exists() {
            read_csv(&ccp_path)?
        } else {
            Vec::new()
        };
        let task_rows: Vec<ResultRow> = results.iter().filter(|r| r.task == task).cloned().collect();
        let (rows, summary) = picp_mcp_comparison(&task_rows, &ccp, cfg.primary_level);
        write_csv(&args.out.join(format!("comparison_{task}.csv")), &rows)?;
        summaries.extend(summary);
    }
    write_csv(&args.out.join("comparison_summary.csv"), &summaries)?;
    log::info!("{} cells compared", summaries.len());
    Ok(())
}

fn matrix_files(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut found = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if let Some(task) = name.strip_prefix("mmd_matrix_").and_then(|n| n.strip_suffix(".csv")) {
            found.push((task.to_string(), path.clone()));
        }
    }
    found.sort();
    Ok(found)
}

fn cmd_mds(args: &Common) -> Result<()> {
    let cfg = args.config()?;
    let files = matrix_files(&args.out)?;
    if files.is_empty() {
        bail!("no mmd_matrix_<task>.csv files in {}", args.out.display());
    }
    for (task, path) in files {
        let entries: Vec<MatrixEntry> = read_csv(&path)?;
        let mut embedded = Vec::new();
        for (space, matrix) in matrices_from_entries(&entries)? {
            if matrix.len() >= 2 {
                let e = mds_embed(&matrix, cfg.mds_dim)?;
                embedded.push((space, matrix, e));
            }
        }
        write_mds(&args.out.join(format!("mds_{task}.csv")), &embedded)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Run(a) => cmd_run(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Mds(a) => cmd_mds(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::FAILURE
        }
    }
}
