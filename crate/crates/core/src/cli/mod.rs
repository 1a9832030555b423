//! Experiment runner behind the `vir` binary.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 invalid config,
//! 3 dataset missing, 4 checkpoint does not match the config.

mod config;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use config::{
    dataset_dir, load_dataset, sweep_reservoir, DatasetConfig, DatasetKind, Diagnostic, ExperimentConfig, SweepGrid,
    DATA_DIR_ENV,
};

use crate::error::{Error, Result};
use crate::metrics::{
    evaluate_robustness, reservoir_small_worldness, sweep, write_sweep_csv, CorruptionReport, SmallWorldReport,
    SweepPoint,
};
use crate::numerics::RngStream;
use crate::topology::{export_matrices, ReservoirMatrices};
use crate::training::{
    count_parameters, read_checkpoint, train_with_progress, write_checkpoint, write_log_csv, ParameterCounts,
    ViRModel,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INVALID_CONFIG: i32 = 2;
pub const EXIT_DATASET_MISSING: i32 = 3;
pub const EXIT_CHECKPOINT_MISMATCH: i32 = 4;

pub const CHECKPOINT_FILE: &str = "model.ckpt";

#[derive(Debug, Parser)]
#[command(name = "vir", version, about = "Reservoir image classifier and reservoir diagnostics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Common {
    /// Experiment config (TOML, or JSON with a .json extension).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for parallel stages.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a classifier; writes report.json, log.csv and model.ckpt.
    Train(Common),
    /// Run the configured diagnostics; writes sweep CSVs and report tables.
    Diagnose(Common),
    /// Score a trained checkpoint on corrupted test sets.
    Robustness {
        #[command(flatten)]
        common: Common,
        /// Checkpoint to evaluate; `<out>/model.ckpt` when omitted.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Write the reservoir matrices of the configured model.
    ExportMatrices(Common),
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_INVALID_CONFIG,
        Error::DatasetMissing(_) => EXIT_DATASET_MISSING,
        Error::CheckpointMismatch(_) => EXIT_CHECKPOINT_MISMATCH,
        _ => EXIT_FAILURE,
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID_CONFIG } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(out) => {
            eprintln!("wrote {}", out.display());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Runs a parsed command and returns its output directory.
pub fn execute(cli: &Cli) -> Result<PathBuf> {
    let common = match &cli.command {
        Command::Train(c) | Command::Diagnose(c) | Command::ExportMatrices(c) => c,
        Command::Robustness { common, .. } => common,
    };
    if let Some(t) = common.threads {
        if t == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        // the global pool can only be set once per process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let cfg = ExperimentConfig::load(&common.config, common.seed)?;
    let out = output_dir(&cfg, common.out.as_deref());
    match &cli.command {
        Command::Train(_) => {
            train_experiment(&cfg, &out)?;
        }
        Command::Diagnose(_) => {
            diagnose(&cfg, &out)?;
        }
        Command::Robustness { checkpoint, .. } => {
            let ckpt = checkpoint.clone().unwrap_or_else(|| out.join(CHECKPOINT_FILE));
            robustness(&cfg, &ckpt, &out)?;
        }
        Command::ExportMatrices(_) => {
            export(&cfg, &out)?;
        }
    }
    Ok(out)
}

fn output_dir(cfg: &ExperimentConfig, flag: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("vir-out"))
}

/// Hex SHA-256 of the config's canonical JSON form.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let json = serde_json::to_string(cfg).expect("config serializes");
    Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub kind: DatasetKind,
    pub train_images: usize,
    pub test_images: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub train: f64,
    pub test: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub epoch: usize,
    pub loss: f64,
    pub train_acc: f64,
    pub test_acc: Option<f64>,
}

/// Wall-clock figures; the only part of a report that varies between reruns.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub total_seconds: f64,
    pub epoch_seconds: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DiagnosticOutput {
    SmallWorld { report: SmallWorldReport },
    LyapunovSweep { csv: String, points: Vec<SweepPoint> },
    McSweep { csv: String, points: Vec<SweepPoint> },
    Robustness { csv: String, report: CorruptionReport },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub toolkit: String,
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    /// The resolved config; running it again reproduces this report.
    pub config: ExperimentConfig,
    pub dataset: Option<DatasetSummary>,
    pub accuracy: Option<Accuracy>,
    pub parameters: Option<ParameterCounts>,
    pub history: Vec<EpochSummary>,
    pub diagnostics: Vec<DiagnosticOutput>,
    pub timing: Timing,
}

impl RunReport {
    fn new(command: &str, cfg: &ExperimentConfig) -> Self {
        Self {
            toolkit: format!("vir {}", env!("CARGO_PKG_VERSION")),
            command: command.into(),
            config_hash: config_hash(cfg),
            seed: cfg.seed,
            config: cfg.clone(),
            dataset: None,
            accuracy: None,
            parameters: None,
            history: Vec::new(),
            diagnostics: Vec::new(),
            timing: Timing::default(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Trains the configured model and writes `report.json`, `log.csv` and the checkpoint.
pub fn train_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<RunReport> {
    std::fs::create_dir_all(out)?;
    let start = Instant::now();
    let (train_set, test_set) = load_dataset(&cfg.dataset)?;
    let mut report = RunReport::new("train", cfg);
    report.dataset = Some(DatasetSummary {
        kind: cfg.dataset.kind,
        train_images: train_set.len(),
        test_images: test_set.len(),
    });
    let mut model = ViRModel::for_batch(cfg.model.clone(), &train_set)?;
    report.parameters = Some(count_parameters(&model));
    let outcome = train_with_progress(&mut model, &train_set, Some(&test_set), &cfg.train, &mut |r| {
        eprintln!(
            "epoch {:>3}  loss {:.5}  train {:.4}  test {}  {:.1}s",
            r.epoch,
            r.loss,
            r.train_acc,
            r.test_acc.map_or("-".into(), |a| format!("{a:.4}")),
            r.seconds
        );
    })?;
    write_log_csv(&out.join("log.csv"), &outcome.log)?;
    write_checkpoint(&out.join(CHECKPOINT_FILE), &model)?;
    report.accuracy = Some(Accuracy {
        train: outcome.train_accuracy,
        test: outcome.test_accuracy,
    });
    report.history = outcome
        .log
        .iter()
        .map(|r| EpochSummary {
            epoch: r.epoch,
            loss: r.loss,
            train_acc: r.train_acc,
            test_acc: r.test_acc,
        })
        .collect();
    report.timing = Timing {
        total_seconds: start.elapsed().as_secs_f64(),
        epoch_seconds: outcome.log.iter().map(|r| r.seconds).collect(),
    };
    report.write(&out.join("report.json"))?;
    Ok(report)
}

/// Runs every diagnostic except robustness (see [`robustness`]).
pub fn diagnose(cfg: &ExperimentConfig, out: &Path) -> Result<RunReport> {
    std::fs::create_dir_all(out)?;
    let start = Instant::now();
    let todo: Vec<&Diagnostic> =
        cfg.diagnostics.iter().filter(|d| !matches!(d, Diagnostic::Robustness { .. })).collect();
    if todo.is_empty() {
        return Err(Error::Config("no small_world, lyapunov_sweep or mc_sweep entries under [[diagnostics]]".into()));
    }
    let mut report = RunReport::new("diagnose", cfg);
    for d in todo {
        let output = match d {
            Diagnostic::SmallWorld { reservoir } => {
                let spec = reservoir.clone().unwrap_or_else(|| cfg.model.reservoir.clone());
                let m = ReservoirMatrices::build(&spec)?;
                let sw = reservoir_small_worldness(&m, &RngStream::new(cfg.seed, "random-graph"))?;
                std::fs::write(out.join("small_world.json"), serde_json::to_string_pretty(&sw)?)?;
                std::fs::write(out.join("small_world.md"), sw.to_markdown())?;
                DiagnosticOutput::SmallWorld { report: sw }
            }
            Diagnostic::LyapunovSweep { grid, settings } => {
                let spec = grid.reservoir.clone().unwrap_or_else(|| sweep_reservoir(cfg.seed));
                let points = sweep(&spec, &grid.rhos, &grid.input_scalings, Some(settings), None)?;
                write_sweep_csv(&out.join("lyapunov_sweep.csv"), &points)?;
                DiagnosticOutput::LyapunovSweep {
                    csv: "lyapunov_sweep.csv".into(),
                    points,
                }
            }
            Diagnostic::McSweep { grid, settings } => {
                let spec = grid.reservoir.clone().unwrap_or_else(|| sweep_reservoir(cfg.seed));
                let points = sweep(&spec, &grid.rhos, &grid.input_scalings, None, Some(settings))?;
                write_sweep_csv(&out.join("mc_sweep.csv"), &points)?;
                DiagnosticOutput::McSweep {
                    csv: "mc_sweep.csv".into(),
                    points,
                }
            }
            Diagnostic::Robustness { .. } => unreachable!("filtered above"),
        };
        report.diagnostics.push(output);
    }
    report.timing.total_seconds = start.elapsed().as_secs_f64();
    report.write(&out.join("diagnostics.json"))?;
    Ok(report)
}

/// Scores a checkpoint on the clean and corrupted test sets; writes
/// `robustness.csv` and `robustness.json`.
pub fn robustness(cfg: &ExperimentConfig, checkpoint: &Path, out: &Path) -> Result<RunReport> {
    std::fs::create_dir_all(out)?;
    let start = Instant::now();
    if !checkpoint.is_file() {
        return Err(Error::CheckpointMismatch(format!("checkpoint {} does not exist", checkpoint.display())));
    }
    let model = read_checkpoint(checkpoint, Some(&cfg.model))?;
    let (limit, kinds) = cfg.robustness_settings();
    let (_, test) = load_dataset(&cfg.dataset)?;
    let test = match limit {
        Some(n) if n < test.len() => test.take(n),
        _ => test,
    };
    model.check_data(&test).map_err(|e| Error::CheckpointMismatch(e.to_string()))?;
    let ce = evaluate_robustness(&model, &test, &kinds, &RngStream::new(cfg.seed, "corruption"), cfg.train.chunk)?;
    ce.write_csv(&out.join("robustness.csv"))?;
    let mut report = RunReport::new("robustness", cfg);
    report.dataset = Some(DatasetSummary {
        kind: cfg.dataset.kind,
        train_images: 0,
        test_images: test.len(),
    });
    report.parameters = Some(count_parameters(&model));
    report.diagnostics.push(DiagnosticOutput::Robustness {
        csv: "robustness.csv".into(),
        report: ce,
    });
    report.timing.total_seconds = start.elapsed().as_secs_f64();
    report.write(&out.join("robustness.json"))?;
    Ok(report)
}

/// Writes `W.bin`, `V.bin` and `reservoir.json` per reservoir layer.
pub fn export(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out)?;
    let deep = cfg.model.deep_config();
    let single = deep.layers.len() == 1;
    let mut written = Vec::new();
    for (i, spec) in deep.layers.iter().enumerate() {
        let dir = if single { out.to_path_buf() } else { out.join(format!("layer{i}")) };
        std::fs::create_dir_all(&dir)?;
        let m = ReservoirMatrices::build(spec)?;
        written.push(export_matrices(&dir, spec, &m)?);
    }
    Ok(written)
}
