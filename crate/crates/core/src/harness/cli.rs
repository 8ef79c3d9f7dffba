use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use super::ablation::{run_ablation, summarize, write_suite_outputs, write_summary_csv, RunRecord, Suite};
use super::config::ExperimentConfig;
use super::metrics::MetricsReport;
use super::train::{embed_split, evaluate_grids, train_with_observer};
use crate::data::{generate_synthetic, load_samples, synthetic_samples, Sample, Split};
use crate::encoder::{load_checkpoint, save_checkpoint};
use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "sspe-vit", version, about = "Toy ViT with selective shuffled position embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON experiment config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config field, e.g. `--set loss.alpha=0.5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset: manifest, images and generator sidecar.
    GenData(Common),
    /// Train one model and write its report, checkpoint and epoch log.
    Train(Common),
    /// Evaluate a checkpoint on one split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// train, val or test.
        #[arg(long, default_value = "test")]
        split: Split,
    },
    /// Run an ablation suite over the configured seeds.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// pe-compare, key-select, mask-select, hyper-grid, n-sweep or pe-dropout.
        #[arg(long)]
        suite: Suite,
    },
    /// Summarise per-run CSVs and report JSON files found in a directory.
    Report {
        /// Directory holding earlier outputs.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    for o in &common.overrides {
        cfg.apply_override(o)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn samples_for(cfg: &ExperimentConfig) -> Result<Vec<Sample>> {
    match &cfg.dataset_dir {
        Some(dir) => Ok(load_samples(dir)?.1),
        None => synthetic_samples(&cfg.data),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn write_report(report: &MetricsReport, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn gen_data(common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    let manifest = generate_synthetic(&cfg.data, &common.out)?;
    println!("wrote {} images to {}", manifest.entries.len(), common.out.display());
    Ok(())
}

fn run_train(common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    let samples = samples_for(&cfg)?;
    create_dir(&common.out)?;
    let seed = cfg.seed;
    let log_path = common.out.join(format!("train_log_seed{seed}.jsonl"));
    let mut log = Vec::new();
    let outcome = train_with_observer(&cfg, &samples, |entry| {
        let line = serde_json::to_string(entry).expect("epoch log serialises");
        log.extend_from_slice(line.as_bytes());
        log.push(b'\n');
    })?;
    write_file(&log_path, &log)?;
    write_file(
        &common.out.join(format!("config_seed{seed}.json")),
        cfg.to_json().as_bytes(),
    )?;
    save_checkpoint(&outcome.params, &common.out.join(format!("model_seed{seed}.ckpt")))?;
    let report_path = common.out.join(format!("report_seed{seed}.json"));
    write_report(&outcome.report, &report_path)?;
    println!(
        "seed {seed}: accuracy {:.4} f1 {:.4} best epoch {} ({:.1}s); report {}",
        outcome.report.accuracy,
        outcome.report.f1,
        outcome.report.best_epoch.unwrap_or(0),
        outcome.report.runtime_seconds,
        report_path.display()
    );
    Ok(())
}

fn run_eval(common: &Common, checkpoint: &Path, split: Split) -> Result<()> {
    let mut cfg = load_config(common)?;
    let params = load_checkpoint(checkpoint)?;
    cfg.model = params.config.clone();
    let samples = samples_for(&cfg)?;
    let grids = embed_split(&cfg, &samples, split)?;
    if grids.is_empty() {
        return Err(Error::Config(format!("split {split} is empty")));
    }
    let report = evaluate_grids(&params, &grids)?;
    create_dir(&common.out)?;
    let stem = checkpoint.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
    let path = common.out.join(format!("eval_{stem}_{split}.json"));
    write_report(&report, &path)?;
    println!("{split}: accuracy {:.4} f1 {:.4}; report {}", report.accuracy, report.f1, path.display());
    Ok(())
}

fn run_ablate(common: &Common, suite: Suite) -> Result<()> {
    let cfg = load_config(common)?;
    let samples = samples_for(&cfg)?;
    let records = run_ablation(suite, &cfg, &samples)?;
    for path in write_suite_outputs(suite, &records, &common.out)? {
        println!("wrote {}", path.display());
    }
    for s in summarize(&records) {
        println!("{:<24} {:.4} ± {:.4}", s.condition, s.accuracy_mean, s.accuracy_sd);
    }
    Ok(())
}

#[derive(serde::Deserialize)]
struct RunRow {
    condition: String,
    seed: u64,
    accuracy: f64,
    f1: f64,
    epochs_to_90pct: String,
}

fn read_runs_csv(path: &Path) -> Result<Option<Vec<RunRecord>>> {
    let mut reader = csv::Reader::from_path(path)?;
    if reader.headers()? != vec!["condition", "seed", "accuracy", "f1", "epochs_to_90pct"] {
        return Ok(None);
    }
    let mut out = Vec::new();
    for row in reader.deserialize() {
        let row: RunRow = row?;
        out.push(RunRecord {
            condition: row.condition,
            seed: row.seed,
            report: MetricsReport {
                accuracy: row.accuracy,
                f1: row.f1,
                epochs_to_90pct: row.epochs_to_90pct.parse().ok(),
                ..MetricsReport::default()
            },
        });
    }
    Ok(Some(out))
}

fn run_report(input: &Path, out: &Path) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(input)
        .map_err(|e| Error::io(input, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    create_dir(out)?;
    let mut reports = Vec::new();
    let stdout = std::io::stdout();
    let mut stdout = stdout.lock();
    for path in &entries {
        let name = path.file_name().and_then(|s| s.to_str()).unwrap_or_default();
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        if name.ends_with(".csv") {
            if let Some(records) = read_runs_csv(path)? {
                let summaries = summarize(&records);
                write_summary_csv(&summaries, &out.join(format!("{stem}_summary.csv")))?;
                let _ = writeln!(stdout, "{name}");
                for s in summaries {
                    let _ = writeln!(
                        stdout,
                        "  {:<24} n={} accuracy {:.4} ± {:.4} f1 {:.4}",
                        s.condition, s.runs, s.accuracy_mean, s.accuracy_sd, s.f1_mean
                    );
                }
            }
        } else if name.starts_with("report") && name.ends_with(".json") {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let report: MetricsReport = serde_json::from_str(&text)?;
            reports.push((stem.to_string(), report));
        }
    }
    if !reports.is_empty() {
        let path = out.join("reports.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["report", "accuracy", "f1", "best_epoch", "epochs_to_90pct"])?;
        for (stem, r) in &reports {
            let _ = writeln!(stdout, "{stem}: accuracy {:.4} f1 {:.4}", r.accuracy, r.f1);
            w.write_record([
                stem.clone(),
                format!("{:.6}", r.accuracy),
                format!("{:.6}", r.f1),
                r.best_epoch.map_or("NA".into(), |e| e.to_string()),
                r.epochs_to_90pct.map_or("NA".into(), |e| e.to_string()),
            ])?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Runs the command line and returns the process exit code: 0 on success,
/// 1 for usage or configuration errors, 2 for failures during a run.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::GenData(c) => gen_data(c),
        Command::Train(c) => run_train(c),
        Command::Eval {
            common,
            checkpoint,
            split,
        } => run_eval(common, checkpoint, *split),
        Command::Ablate { common, suite } => run_ablate(common, *suite),
        Command::Report { input, out } => run_report(input, out),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                1
            } else {
                2
            }
        }
    }
}
