use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use eki_learn::harness::{
    emit_report, read_metrics, run_experiment, ExperimentConfig, HarnessError, MetricsWriter, RunSummary,
};

#[derive(Parser, Debug)]
#[command(name = "eki", version, about = "Train models with ensemble Kalman inversion")]
struct Cli {
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Worker threads for the per-particle forward passes (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Mini-batch training of a feed-forward network.
    TrainSupervised,
    /// Graph-based semi-supervised classification.
    TrainSsl,
    /// One online pass of a recurrent network over a series.
    TrainOnline,
    /// Re-emit a metrics file as a table plus SVG plots in the output directory.
    Report {
        /// Metrics CSV to read (default: <out-dir>/metrics.csv).
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
}

#[derive(Debug)]
struct CliError {
    kind: &'static str,
    message: String,
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        let kind = match &e {
            HarnessError::Config(_) => "config",
            HarnessError::Io { .. } | HarnessError::Csv(_) => "io",
            HarnessError::Data(_) => "data",
            HarnessError::Shape(_) | HarnessError::Metric(_) => "metrics",
            _ => "run",
        };
        CliError {
            kind,
            message: e.to_string(),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError {
        kind: "io",
        message: format!("{}: {e}", path.display()),
    }
}

fn train(cli: &Cli, task: &str) -> Result<(), CliError> {
    let config_path = cli.config.as_deref().ok_or_else(|| CliError {
        kind: "usage",
        message: "--config is required for training".into(),
    })?;
    let mut cfg = ExperimentConfig::load(config_path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if cfg.task.name() != task {
        return Err(CliError {
            kind: "config",
            message: format!("config describes a {} task, not {task}", cfg.task.name()),
        });
    }
    std::fs::create_dir_all(&cli.out_dir).map_err(io_err(&cli.out_dir))?;
    let metrics_path = cli.out_dir.join(&cfg.metrics_file);
    let file = File::create(&metrics_path).map_err(io_err(&metrics_path))?;
    let mut writer = MetricsWriter::new(BufWriter::new(file))?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    let summary = run_experiment(&cfg, base, &mut |r| writer.write(r))?;
    writer.into_inner()?;

    if cfg.plots {
        emit_report(&summary.records, &metrics_path, Some(&cli.out_dir))?;
    }
    write_params(&cli.out_dir.join("params.txt"), &summary)?;
    std::fs::write(cli.out_dir.join("config.json"), cfg.to_json()).map_err(io_err(&cli.out_dir))?;
    if let Some(last) = summary.records.last() {
        println!(
            "final: epoch {} train {:.6} test {:.6} J={}",
            last.epoch, last.train_metric, last.test_metric, last.ensemble_size
        );
    }
    if let Some(b) = summary.baseline {
        println!("fiedler baseline accuracy: {b:.4}");
    }
    Ok(())
}

fn write_params(path: &Path, summary: &RunSummary) -> Result<(), CliError> {
    let mut out = BufWriter::new(File::create(path).map_err(io_err(path))?);
    for v in &summary.params {
        writeln!(out, "{v}").map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

fn report(cli: &Cli, metrics: Option<&Path>) -> Result<(), CliError> {
    let input = metrics.map_or_else(|| cli.out_dir.join("metrics.csv"), Path::to_path_buf);
    let records = read_metrics(File::open(&input).map_err(io_err(&input))?)?;
    std::fs::create_dir_all(&cli.out_dir).map_err(io_err(&cli.out_dir))?;
    let files = emit_report(&records, &cli.out_dir.join("report.csv"), Some(&cli.out_dir))?;
    println!("{:>8} {:>12} {:>12} {:>10} {:>6}", "epoch", "train", "test", "time_s", "J");
    for r in &records {
        println!(
            "{:>8} {:>12.6} {:>12.6} {:>10.2} {:>6}",
            r.epoch, r.train_metric, r.test_metric, r.wall_time, r.ensemble_size
        );
    }
    for p in std::iter::once(&files.table).chain(&files.plots) {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError {
                kind: "usage",
                message: format!("thread pool: {e}"),
            })?;
    }
    match &cli.command {
        Command::TrainSupervised => train(cli, "supervised"),
        Command::TrainSsl => train(cli, "semi_supervised"),
        Command::TrainOnline => train(cli, "online"),
        Command::Report { metrics } => report(cli, metrics.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({ "error": e.kind, "message": e.message });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}
