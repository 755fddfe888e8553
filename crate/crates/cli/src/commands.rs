//! Subcommands of the `qrnn` binary.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use sample::uniform_inputs;

use qrnn_core::copy_task::{CopyTaskSpec, INPUT_CHANNELS, OUTPUT_CLASSES};
use qrnn_core::features::pack_features;
use qrnn_core::training::{
    grad_check, redraw_uniform, CopyObjective, GradCheckReport, MetricsRecord, TrainConfig, Trainer,
};
use qrnn_core::{CopyModel, ModelKind};

use crate::arch::{count, ArchDescriptor, CountOptions};
use crate::checkpoint::Checkpoint;
use crate::error::{exit, CliError};
use crate::features_io::{read_energy_csv, FeatureMatrix};
use crate::metrics::{read_metrics, MetricsWriter};

#[derive(Debug, Parser)]
#[command(name = "qrnn", version, about = "Quaternion LSTM experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a QLSTM or LSTM on the memory copy-task.
    CopyTrain(CopyTrainArgs),
    /// Compare analytic gradients with central finite differences.
    GradCheck(GradCheckArgs),
    /// Print exact parameter counts for architecture descriptors.
    Params(ParamsArgs),
    /// Pack a filter-bank energy CSV into acoustic quaternion features.
    PackFeatures(PackFeaturesArgs),
    /// Convert a binary feature file back to CSV.
    FeaturesToCsv(FeaturesToCsvArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Qlstm,
    Lstm,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Qlstm => ModelKind::Qlstm,
            ModelArg::Lstm => ModelKind::Lstm,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct CopyTrainArgs {
    #[arg(long, value_enum)]
    pub model: Option<ModelArg>,
    /// Hidden units: quaternions for qlstm, reals for lstm.
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub seq_len: usize,
    #[arg(long)]
    pub blank_len: Option<usize>,
    #[arg(long, default_value_t = 2000)]
    pub epochs: usize,
    #[arg(long, default_value_t = 5e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 10)]
    pub batch: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Comma-separated seeds; outputs get a `.seed<N>` suffix per seed.
    #[arg(long, value_delimiter = ',', conflicts_with = "seed")]
    pub seeds: Option<Vec<u64>>,
    /// Global gradient-norm clip (off by default).
    #[arg(long)]
    pub clip: Option<f64>,
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Continue a run from a checkpoint up to `--epochs`.
    #[arg(long, conflicts_with = "seeds")]
    pub resume: Option<PathBuf>,
    /// Print progress to stderr every N epochs (0 = quiet).
    #[arg(long, default_value_t = 0)]
    pub log_every: usize,
}

#[derive(Debug, Clone, Args)]
pub struct GradCheckArgs {
    #[arg(long, value_enum)]
    pub model: ModelArg,
    #[arg(long)]
    pub hidden: usize,
    #[arg(long, default_value_t = 3)]
    pub timesteps: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub tolerance: f64,
    /// Finite-difference step.
    #[arg(long, default_value_t = 1e-5)]
    pub step: f64,
    #[arg(long, default_value_t = 2)]
    pub batch: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Parameters are redrawn uniform on [-s, s) before checking; 0 keeps the initializer's values.
    #[arg(long, default_value_t = 1.0)]
    pub param_scale: f64,
}

#[derive(Debug, Clone, Args)]
pub struct ParamsArgs {
    /// `<kind>:<layers>x<width>`; kinds: linear, qlinear, lstm, qlstm, blstm, bqlstm, copy-lstm, copy-qlstm.
    #[arg(long = "arch", required = true)]
    pub archs: Vec<String>,
    /// First-layer input width (reals); defaults to the layer width.
    #[arg(long)]
    pub input: Option<usize>,
    /// Include biases on linear/qlinear layers.
    #[arg(long)]
    pub bias: bool,
    /// Dense layer width after recurrent stacks.
    #[arg(long)]
    pub dense: Option<usize>,
    #[arg(long)]
    pub dense_quaternion: bool,
    /// Output layer width after recurrent stacks.
    #[arg(long)]
    pub outputs: Option<usize>,
    /// Print the ratio of the first total to the second.
    #[arg(long)]
    pub compare: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FeatureFormat {
    Csv,
    Bin,
}

#[derive(Debug, Clone, Args)]
pub struct PackFeaturesArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub window: usize,
    #[arg(long, value_enum, default_value_t = FeatureFormat::Csv)]
    pub format: FeatureFormat,
}

#[derive(Debug, Clone, Args)]
pub struct FeaturesToCsvArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// Runs a parsed command, writing human-readable output to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<i32, CliError> {
    match cli.command {
        Command::CopyTrain(a) => copy_train(&a, out),
        Command::GradCheck(a) => grad_check_cmd(&a, out),
        Command::Params(a) => params(&a, out),
        Command::PackFeatures(a) => pack_features_cmd(&a, out),
        Command::FeaturesToCsv(a) => features_to_csv(&a),
    }
}

/// `path` with `.seed<N>` inserted before the extension.
pub fn seeded_path(path: &Path, seed: u64) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}.seed{seed}.{}", ext.to_string_lossy()),
        None => format!("{stem}.seed{seed}"),
    };
    path.with_file_name(name)
}

struct RunOutcome {
    seed: u64,
    last: Option<MetricsRecord>,
    best_recall: f64,
    error: Option<CliError>,
}

fn copy_train(a: &CopyTrainArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    if a.resume.is_some() {
        return resume_run(a, out);
    }
    let model = a.model.ok_or_else(|| CliError::Usage("--model is required".into()))?;
    let hidden = a.hidden.ok_or_else(|| CliError::Usage("--hidden is required".into()))?;
    let blank_len = a.blank_len.ok_or_else(|| CliError::Usage("--blank-len is required".into()))?;
    if hidden == 0 {
        return Err(CliError::Usage("--hidden must be positive".into()));
    }
    let spec = CopyTaskSpec::new(a.seq_len, blank_len).map_err(|e| CliError::Usage(e.to_string()))?;
    let base = TrainConfig {
        learning_rate: a.lr,
        epochs: a.epochs,
        batch_size: a.batch,
        seed: a.seed,
        clip: a.clip,
        ..TrainConfig::default()
    };
    base.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let outcomes: Vec<RunOutcome> = match &a.seeds {
        None => vec![train_one(model.into(), hidden, spec, base, a.metrics.clone(), a.checkpoint.clone(), a.log_every)],
        Some(seeds) => std::thread::scope(|s| {
            let handles: Vec<_> = seeds
                .iter()
                .map(|&seed| {
                    let cfg = TrainConfig { seed, ..base };
                    let metrics = a.metrics.as_deref().map(|p| seeded_path(p, seed));
                    let ckpt = a.checkpoint.as_deref().map(|p| seeded_path(p, seed));
                    s.spawn(move || train_one(model.into(), hidden, spec, cfg, metrics, ckpt, a.log_every))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("training thread panicked")).collect()
        }),
    };
    report_outcomes(outcomes, out)
}

fn report_outcomes(outcomes: Vec<RunOutcome>, out: &mut dyn Write) -> Result<i32, CliError> {
    let mut code = exit::SUCCESS;
    for o in outcomes {
        if let Some(r) = o.last {
            writeln!(
                out,
                "seed={} epoch={} loss={:.6} accuracy_recall={:.4} accuracy_full={:.4} best_recall={:.4}",
                o.seed, r.epoch, r.loss, r.accuracy_recall, r.accuracy_full, o.best_recall
            )?;
        }
        if let Some(e) = o.error {
            writeln!(out, "seed={} error: {e}", o.seed)?;
            code = code.max(e.exit_code());
        }
    }
    Ok(code)
}

fn train_one(
    kind: ModelKind,
    hidden: usize,
    spec: CopyTaskSpec,
    cfg: TrainConfig,
    metrics: Option<PathBuf>,
    checkpoint: Option<PathBuf>,
    log_every: usize,
) -> RunOutcome {
    let seed = cfg.seed;
    match Trainer::new(kind, hidden, spec, cfg) {
        Ok(trainer) => drive(trainer, Vec::new(), metrics, checkpoint, log_every),
        Err(e) => RunOutcome { seed, last: None, best_recall: 0.0, error: Some(e.into()) },
    }
}

/// Trains to completion, streaming metrics and writing the final (or last
/// finite) checkpoint.
fn drive(
    mut trainer: Trainer,
    previous: Vec<MetricsRecord>,
    metrics: Option<PathBuf>,
    checkpoint: Option<PathBuf>,
    log_every: usize,
) -> RunOutcome {
    let seed = trainer.config.seed;
    let mut outcome = RunOutcome { seed, last: previous.last().copied(), best_recall: 0.0, error: None };
    outcome.best_recall = previous.iter().map(|r| r.accuracy_recall).fold(0.0, f64::max);
    let result = (|| -> Result<(), CliError> {
        let mut writer = match &metrics {
            Some(p) => Some(MetricsWriter::new(BufWriter::new(File::create(p)?))?),
            None => None,
        };
        if let Some(w) = writer.as_mut() {
            for r in &previous {
                w.write(r)?;
            }
        }
        let mut io_err = None;
        let train_result = trainer.run(|r| {
            outcome.last = Some(*r);
            outcome.best_recall = outcome.best_recall.max(r.accuracy_recall);
            if log_every > 0 && r.epoch % log_every == 0 {
                eprintln!(
                    "seed={seed} epoch={} loss={:.5} recall={:.3} full={:.3}",
                    r.epoch, r.loss, r.accuracy_recall, r.accuracy_full
                );
            }
            if let Some(w) = writer.as_mut() {
                if let Err(e) = w.write(r) {
                    io_err.get_or_insert(e);
                }
            }
        });
        if let Some(w) = writer {
            w.finish()?;
        }
        if let Some(e) = io_err {
            return Err(e);
        }
        if let Some(p) = &checkpoint {
            Checkpoint::from_trainer(&trainer).save(p)?;
        }
        train_result.map(|_| ()).map_err(CliError::from)
    })();
    outcome.error = result.err();
    outcome
}

fn resume_run(a: &CopyTrainArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let path = a.resume.as_ref().expect("checked by caller");
    let trainer = Checkpoint::load(path)?.into_trainer(a.epochs)?;
    if let Some(m) = a.model {
        if ModelKind::from(m) != trainer.model.kind() {
            return Err(CliError::Usage("--model differs from the checkpoint".into()));
        }
    }
    let done = trainer.epoch();
    let previous = match &a.metrics {
        Some(p) if p.exists() => {
            let mut recs = read_metrics(BufReader::new(File::open(p)?))?;
            recs.retain(|r| r.epoch <= done);
            recs
        }
        _ => Vec::new(),
    };
    let outcome = drive(trainer, previous, a.metrics.clone(), a.checkpoint.clone(), a.log_every);
    report_outcomes(vec![outcome], out)
}

/// Deterministic random sample for gradient checks.
mod sample {
    use qrnn_core::recurrent::SeedStream;
    use qrnn_core::Tensor;

    /// Inputs uniform on `[-1, 1)` and targets uniform over `classes`.
    pub fn uniform_inputs(
        batch: usize,
        steps: usize,
        channels: usize,
        classes: usize,
        seed: u64,
    ) -> (Tensor, Vec<usize>) {
        let mut s = SeedStream::new(seed);
        let mut unit = || (s.next() >> 11) as f64 / (1u64 << 53) as f64;
        let inputs = Tensor::from_fn(&[batch, steps, channels], |_| 2.0 * unit() - 1.0);
        let targets = (0..batch * steps).map(|_| ((unit() * classes as f64) as usize).min(classes - 1)).collect();
        (inputs, targets)
    }
}

pub fn grad_check_report(a: &GradCheckArgs) -> Result<GradCheckReport, CliError> {
    if a.hidden == 0 || a.timesteps == 0 || a.batch == 0 {
        return Err(CliError::Usage("--hidden, --timesteps and --batch must be positive".into()));
    }
    if !(a.param_scale >= 0.0 && a.param_scale.is_finite()) {
        return Err(CliError::Usage("--param-scale must be finite and non-negative".into()));
    }
    let mut model = CopyModel::new(a.model.into(), a.hidden, a.seed);
    if a.param_scale > 0.0 {
        redraw_uniform(&mut model.params_mut(), a.param_scale, a.seed ^ 0x5A5A);
    }
    let (inputs, targets) = uniform_inputs(a.batch, a.timesteps, INPUT_CHANNELS, OUTPUT_CLASSES, a.seed ^ 0xA5A5);
    let mut objective = CopyObjective { model, inputs, targets };
    Ok(grad_check(&mut objective, a.tolerance, a.step)?)
}

fn grad_check_cmd(a: &GradCheckArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let report = grad_check_report(a)?;
    writeln!(out, "{:<16} {:>6} {:>14} {:>14}  status", "parameter", "count", "max_rel_error", "max_abs_error")?;
    for r in &report.rows {
        writeln!(
            out,
            "{:<16} {:>6} {:>14.3e} {:>14.3e}  {}",
            r.name,
            r.count,
            r.max_rel_error,
            r.max_abs_error,
            if r.flagged { "FAIL" } else { "ok" }
        )?;
    }
    writeln!(out, "max_rel_error={:e} tolerance={:e}", report.max_rel_error, report.tolerance)?;
    Ok(if report.passed() { exit::SUCCESS } else { exit::CHECK_FAILED })
}

fn params(a: &ParamsArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let opts = CountOptions {
        input: a.input,
        bias: a.bias,
        dense: a.dense,
        dense_quaternion: a.dense_quaternion,
        outputs: a.outputs,
    };
    let mut totals = Vec::new();
    for s in &a.archs {
        let desc: ArchDescriptor = s.parse()?;
        let table = count(&desc, &opts)?;
        writeln!(out, "{desc}")?;
        for c in &table.components {
            writeln!(out, "  {:<48} {:>12}", c.label, c.params)?;
        }
        writeln!(out, "  {:<48} {:>12}", "total", table.total())?;
        totals.push(table.total());
    }
    if a.compare {
        if totals.len() != 2 {
            return Err(CliError::Usage("--compare needs exactly two --arch descriptors".into()));
        }
        writeln!(out, "ratio {:.6}", totals[0] as f64 / totals[1] as f64)?;
    }
    Ok(exit::SUCCESS)
}

fn pack_features_cmd(a: &PackFeaturesArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    if a.window == 0 {
        return Err(CliError::Usage("--window must be at least 1".into()));
    }
    let energies = read_energy_csv(BufReader::new(File::open(&a.input)?))?;
    let packed = FeatureMatrix::from_frames(&pack_features(&energies, a.window)?, a.window);
    let w = BufWriter::new(File::create(&a.out)?);
    match a.format {
        FeatureFormat::Csv => packed.write_csv(w)?,
        FeatureFormat::Bin => packed.write_bin(w)?,
    }
    writeln!(out, "frames={} quaternions={} columns={}", packed.header.frames, packed.header.bands, packed.columns())?;
    Ok(exit::SUCCESS)
}

fn features_to_csv(a: &FeaturesToCsvArgs) -> Result<i32, CliError> {
    let packed = FeatureMatrix::read_bin(BufReader::new(File::open(&a.input)?))?;
    packed.write_csv(BufWriter::new(File::create(&a.out)?))?;
    Ok(exit::SUCCESS)
}
