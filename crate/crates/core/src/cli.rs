//! Command-line entry point.
//!
//! Settings come from flags, then from an optional JSON file given with
//! `--config`, then from built-in defaults; flags always win.
//!
//! Exit codes: 0 success, 1 usage, 2 data error, 3 backend error.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::backend::Backend;
use crate::codec::{PromptTemplate, DEFAULT_DECIMALS, DEFAULT_TEMPLATE};
use crate::data::{
    ingest_csv, make_windows, write_csv, DatasetSplit, LoadSeries, MonthSplit, WindowSpec,
    DEFAULT_MAX_GAP_HOURS,
};
use crate::eval::{
    evaluate_building, horizon_sweep, zeroshot_matrix, BackendFactory, EvalConfig, EvalReport,
    ModelKey, DEFAULT_HORIZONS, DEFAULT_STRIDE,
};
use crate::experiment::{prepare_splits, synth_dataset, BackendSpec, RemoteOptions, SynthDatasetConfig};
use crate::export::{export_eval_windows, export_pairs};
use crate::rollout::{forecast, ContextMode, RolloutConfig, DEFAULT_M, DEFAULT_N, DEFAULT_RETRY_LIMIT};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_BACKEND: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Backend(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => EXIT_USAGE,
            Self::Data(_) => EXIT_DATA,
            Self::Backend(_) => EXIT_BACKEND,
        }
    }

    fn message(&self) -> &str {
        match self {
            Self::Usage(m) | Self::Data(m) | Self::Backend(m) => m,
        }
    }
}

fn data_err(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

fn backend_err(e: impl std::fmt::Display) -> CliError {
    CliError::Backend(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "loadprompt", version, about = "Energy load forecasting through template sentences")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic multi-building load CSV.
    Synth(SynthArgs),
    /// Write next-sentence fine-tuning pairs (JSONL) from a training split.
    ExportFinetune(ExportArgs),
    /// Evaluate a backend on each building's test month.
    Evaluate(EvaluateArgs),
    /// Evaluate backends tied to a source building on every other building.
    Zeroshot(ZeroshotArgs),
    /// Evaluate one rollout per window at several horizons.
    Sweep(SweepArgs),
    /// Print the audit record of a single forecast window as JSON.
    Forecast(ForecastArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 90)]
    pub days: usize,
    #[arg(long, default_value_t = 6)]
    pub buildings: usize,
    /// Noise standard deviation as a fraction of base load.
    #[arg(long, default_value_t = 0.03)]
    pub noise_frac: f64,
    /// Weekly amplitude as a fraction of base load.
    #[arg(long, default_value_t = 0.1)]
    pub weekly_frac: f64,
    /// Output CSV path; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Data source and sentence settings shared by the analysis commands.
#[derive(Debug, Args, Default)]
pub struct CommonArgs {
    /// JSON file with default settings; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Load CSV (`timestamp,building_id,consumption_kwh`).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Generate this many days of synthetic data instead of reading --data.
    #[arg(long)]
    pub synth_days: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub buildings: Option<usize>,
    #[arg(long)]
    pub noise_frac: Option<f64>,
    #[arg(long)]
    pub weekly_frac: Option<f64>,
    /// Sentence template with {Time} and {Usage} placeholders.
    #[arg(long)]
    pub template: Option<String>,
    #[arg(long)]
    pub decimals: Option<u32>,
    /// Calendar months for train,val,test.
    #[arg(long)]
    pub split: Option<MonthSplit>,
    /// Largest gap (hours) repaired by interpolation.
    #[arg(long)]
    pub max_gap: Option<usize>,
    /// Observation length.
    #[arg(long)]
    pub n: Option<usize>,
    /// Directory that relative output paths are resolved against.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

/// Rollout and backend settings shared by the evaluation commands.
#[derive(Debug, Args, Default)]
pub struct RolloutArgs {
    /// Forecast horizon.
    #[arg(long)]
    pub m: Option<usize>,
    /// Hours between test windows.
    #[arg(long)]
    pub stride: Option<usize>,
    /// sliding | growing
    #[arg(long)]
    pub context_mode: Option<ContextMode>,
    /// Backend calls per step before falling back.
    #[arg(long)]
    pub retry_limit: Option<u32>,
    /// Request timeout for remote backends, in seconds.
    #[arg(long)]
    pub timeout_secs: Option<f64>,
    /// Tries per remote request.
    #[arg(long)]
    pub attempts: Option<u32>,
    /// First retry delay for remote requests, in milliseconds.
    #[arg(long)]
    pub backoff_ms: Option<u64>,
    #[arg(long)]
    pub max_new_tokens: Option<u32>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub building: String,
    /// JSONL output for fine-tuning pairs.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write evaluation windows from the test split to this JSONL file.
    #[arg(long)]
    pub eval_windows: Option<PathBuf>,
    #[command(flatten)]
    pub rollout: RolloutArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub rollout: RolloutArgs,
    /// Building to evaluate; every building when omitted.
    #[arg(long)]
    pub building: Option<String>,
    /// oracle | persistence | seasonal:PERIOD | linear-ar:P:LAMBDA | remote:URL
    #[arg(long)]
    pub backend: Option<String>,
    /// CSV report path.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ZeroshotArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub rollout: RolloutArgs,
    /// JSON manifest `[{"model", "source", "backend"}]`, or a single backend
    /// spec applied to every source building.
    #[arg(long)]
    pub backends: String,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub rollout: RolloutArgs,
    #[arg(long)]
    pub building: Option<String>,
    #[arg(long)]
    pub backend: Option<String>,
    /// Comma-separated horizons.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_HORIZONS)]
    pub horizons: Vec<usize>,
    /// Plot-ready `horizon,rmse,mae` CSV; one file per building when several are swept.
    #[arg(long)]
    pub plot_csv: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ForecastArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub rollout: RolloutArgs,
    #[arg(long)]
    pub building: String,
    #[arg(long)]
    pub backend: Option<String>,
    /// Index of the test window to forecast.
    #[arg(long, default_value_t = 0)]
    pub window: usize,
}

/// Settings file contents; every field optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: Option<PathBuf>,
    pub synth: Option<SynthSection>,
    pub template: Option<String>,
    pub decimals: Option<u32>,
    pub split: Option<String>,
    pub max_gap: Option<usize>,
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub stride: Option<usize>,
    pub context_mode: Option<ContextMode>,
    pub retry_limit: Option<u32>,
    pub backend: Option<String>,
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub days: Option<usize>,
    pub buildings: Option<usize>,
    pub noise_frac: Option<f64>,
    pub weekly_frac: Option<f64>,
}

/// Fully resolved settings for one run.
struct Resolved {
    splits: BTreeMap<String, DatasetSplit>,
    template: PromptTemplate,
    eval: EvalConfig,
    remote: RemoteOptions,
    backend: Option<String>,
    out_dir: Option<PathBuf>,
}

impl Resolved {
    fn output(&self, path: &Path) -> PathBuf {
        match &self.out_dir {
            Some(dir) if path.is_relative() => dir.join(path),
            _ => path.to_path_buf(),
        }
    }

    fn backend_spec(&self) -> Result<BackendSpec, CliError> {
        let text = self
            .backend
            .as_deref()
            .ok_or_else(|| CliError::Usage("--backend is required".into()))?;
        text.parse().map_err(CliError::Usage)
    }

    fn buildings(&self) -> Vec<&DatasetSplit> {
        self.splits.values().collect()
    }

    fn split(&self, id: &str) -> Result<&DatasetSplit, CliError> {
        self.splits
            .get(id)
            .ok_or_else(|| CliError::Data(format!("building {id:?} was not loaded")))
    }
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, CliError> {
    let Some(path) = path else {
        return Ok(ExperimentConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("reading config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
}

fn positive(value: usize, flag: &str) -> Result<usize, CliError> {
    if value == 0 {
        return Err(CliError::Usage(format!("--{flag} must be positive")));
    }
    Ok(value)
}

/// Loads the data and settings. With `only`, just that building is split.
fn resolve(
    common: &CommonArgs,
    rollout: &RolloutArgs,
    backend: Option<&str>,
    only: Option<&str>,
) -> Result<Resolved, CliError> {
    let cfg = load_config(common.config.as_deref())?;
    let synth_cfg = cfg.synth.unwrap_or_default();

    let template = PromptTemplate::new(
        common
            .template
            .clone()
            .or(cfg.template)
            .unwrap_or_else(|| DEFAULT_TEMPLATE.to_string()),
        common.decimals.or(cfg.decimals).unwrap_or(DEFAULT_DECIMALS),
    )
    .map_err(|e| CliError::Usage(e.to_string()))?;

    let months = match (common.split, cfg.split) {
        (Some(s), _) => s,
        (None, Some(text)) => text.parse().map_err(CliError::Usage)?,
        (None, None) => MonthSplit::default(),
    };
    let max_gap = common.max_gap.or(cfg.max_gap).unwrap_or(DEFAULT_MAX_GAP_HOURS);

    let context_mode = rollout.context_mode.or(cfg.context_mode).unwrap_or_default();
    let rollout_cfg = RolloutConfig {
        n: positive(common.n.or(cfg.n).unwrap_or(DEFAULT_N), "n")?,
        m: positive(rollout.m.or(cfg.m).unwrap_or(DEFAULT_M), "m")?,
        context_mode,
        retry_limit: rollout.retry_limit.or(cfg.retry_limit).unwrap_or(DEFAULT_RETRY_LIMIT),
        ..RolloutConfig::default()
    };
    rollout_cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let eval = EvalConfig {
        rollout: rollout_cfg,
        stride: positive(rollout.stride.or(cfg.stride).unwrap_or(DEFAULT_STRIDE), "stride")?,
    };

    let mut remote = RemoteOptions::default();
    if let Some(secs) = rollout.timeout_secs {
        remote.timeout = Duration::try_from_secs_f64(secs)
            .ok()
            .filter(|d| !d.is_zero())
            .ok_or_else(|| CliError::Usage("--timeout-secs must be positive".into()))?;
    }
    if let Some(attempts) = rollout.attempts {
        remote.attempts = positive(attempts as usize, "attempts")? as u32;
    }
    if let Some(ms) = rollout.backoff_ms {
        remote.backoff = Duration::from_millis(ms);
    }
    if let Some(tokens) = rollout.max_new_tokens {
        remote.max_new_tokens = tokens;
    }

    let synth_days = common.synth_days.or(synth_cfg.days);
    let data_path = common.data.clone().or(cfg.data);
    // An explicit --synth-days beats a data path from the config file.
    let data_path = data_path.filter(|_| common.synth_days.is_none());
    let data = match (data_path, synth_days) {
        (Some(path), _) => {
            let file = File::open(&path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            ingest_csv(io::BufReader::new(file)).map_err(data_err)?
        }
        (_, Some(days)) => {
            let synth = SynthDatasetConfig {
                seed: common.seed.or(cfg.seed).unwrap_or(SynthDatasetConfig::default().seed),
                days: positive(days, "synth-days")?,
                buildings: positive(
                    common.buildings.or(synth_cfg.buildings).unwrap_or(SynthDatasetConfig::default().buildings),
                    "buildings",
                )?,
                noise_frac: common
                    .noise_frac
                    .or(synth_cfg.noise_frac)
                    .unwrap_or(SynthDatasetConfig::default().noise_frac),
                weekly_frac: common
                    .weekly_frac
                    .or(synth_cfg.weekly_frac)
                    .unwrap_or(SynthDatasetConfig::default().weekly_frac),
            };
            synth_dataset(&synth).map_err(|e| CliError::Usage(e.to_string()))?
        }
        (None, None) => return Err(CliError::Usage("one of --data or --synth-days is required".into())),
    };
    let mut data = data;
    if let Some(id) = only {
        if !data.contains_key(id) {
            let known: Vec<&str> = data.keys().map(String::as_str).collect();
            return Err(CliError::Data(format!(
                "unknown building {id:?}; available: {}",
                known.join(", ")
            )));
        }
        data.retain(|k, _| k == id);
    }
    let splits = prepare_splits(&data, max_gap, months)
        .map_err(|e| CliError::Data(format!("{e} (choose train,val,test months with --split)")))?;

    Ok(Resolved {
        splits,
        template,
        eval,
        remote,
        backend: backend.map(str::to_string).or(cfg.backend),
        out_dir: common.out_dir.clone().or(cfg.output_dir),
    })
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::Data(format!("{}: {e}", parent.display())))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    let mut file = create(path)?;
    file.write_all(contents.as_bytes())
        .and_then(|_| file.flush())
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Fails fast when a remote service is unreachable.
fn preflight(spec: &BackendSpec, remote: &RemoteOptions) -> Result<(), CliError> {
    if let Some(client) = spec.remote_client(remote).map_err(backend_err)? {
        client.health().map_err(backend_err)?;
    }
    Ok(())
}

fn build_backend(resolved: &Resolved, spec: &BackendSpec, split: &DatasetSplit) -> Result<Box<dyn Backend>, CliError> {
    spec.build(&resolved.template, split, split, &resolved.remote)
        .map_err(backend_err)
}

fn emit_report(report: &EvalReport, path: Option<&Path>, resolved: &Resolved, out: &mut dyn Write) -> Result<(), CliError> {
    let text = report.render_text().map_err(data_err)?;
    out.write_all(text.as_bytes()).map_err(data_err)?;
    if let Some(path) = path {
        write_file(&resolved.output(path), &report.render_csv().map_err(data_err)?)?;
    }
    Ok(())
}

fn cmd_synth(args: &SynthArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let config = SynthDatasetConfig {
        seed: args.seed,
        days: positive(args.days, "days")?,
        buildings: positive(args.buildings, "buildings")?,
        noise_frac: args.noise_frac,
        weekly_frac: args.weekly_frac,
    };
    let data = synth_dataset(&config).map_err(|e| CliError::Usage(e.to_string()))?;
    match &args.out {
        Some(path) => {
            let mut file = create(path)?;
            write_csv(&mut file, data.values()).map_err(data_err)?;
            file.flush().map_err(data_err)?;
            let rows: usize = data.values().map(LoadSeries::len).sum();
            writeln!(out, "wrote {rows} rows for {} buildings to {}", data.len(), path.display()).map_err(data_err)?;
        }
        None => write_csv(out, data.values()).map_err(data_err)?,
    }
    Ok(())
}

fn cmd_export(args: &ExportArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let resolved = resolve(&args.common, &args.rollout, None, Some(&args.building))?;
    let split = resolved.split(&args.building)?;
    let n = resolved.eval.rollout.n;
    let pairs_path = resolved.output(&args.out);
    let mut sink = create(&pairs_path)?;
    let count = export_pairs(&split.train, &resolved.template, n, &mut sink).map_err(data_err)?;
    writeln!(out, "{count} fine-tuning pairs written to {}", pairs_path.display()).map_err(data_err)?;

    if let Some(path) = &args.eval_windows {
        let spec = WindowSpec::new(n, resolved.eval.rollout.m, resolved.eval.stride).map_err(|e| CliError::Usage(e.to_string()))?;
        let path = resolved.output(path);
        let count = export_eval_windows(&split.test, &resolved.template, spec, create(&path)?).map_err(data_err)?;
        writeln!(out, "{count} evaluation windows written to {}", path.display()).map_err(data_err)?;
    }
    Ok(())
}

fn cmd_evaluate(args: &EvaluateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let resolved = resolve(&args.common, &args.rollout, args.backend.as_deref(), args.building.as_deref())?;
    let spec = resolved.backend_spec()?;
    preflight(&spec, &resolved.remote)?;
    let mut rows = Vec::new();
    for split in resolved.buildings() {
        let backend = build_backend(&resolved, &spec, split)?;
        rows.push(
            evaluate_building(&spec.to_string(), split, backend.as_ref(), &resolved.template, &resolved.eval)
                .map_err(data_err)?,
        );
    }
    let report = EvalReport::new(rows, resolved.eval.notes(&resolved.template));
    emit_report(&report, args.report.as_deref(), &resolved, out)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestEntry {
    model: String,
    source: String,
    backend: String,
}

fn load_manifest(text: &str, resolved: &Resolved) -> Result<Vec<ManifestEntry>, CliError> {
    let path = Path::new(text);
    if path.is_file() {
        let body = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        return serde_json::from_str(&body).map_err(|e| CliError::Usage(format!("manifest {}: {e}", path.display())));
    }
    let spec: BackendSpec = text
        .parse()
        .map_err(|e| CliError::Usage(format!("--backends is neither a manifest file nor a backend spec: {e}")))?;
    Ok(resolved
        .splits
        .keys()
        .map(|source| ManifestEntry {
            model: spec.to_string(),
            source: source.clone(),
            backend: text.to_string(),
        })
        .collect())
}

fn cmd_zeroshot(args: &ZeroshotArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let resolved = resolve(&args.common, &args.rollout, None, None)?;
    let entries = load_manifest(&args.backends, &resolved)?;

    let mut factories: BTreeMap<ModelKey, Box<dyn BackendFactory>> = BTreeMap::new();
    for entry in entries {
        let spec: BackendSpec = entry.backend.parse().map_err(CliError::Usage)?;
        let key = (entry.model.clone(), entry.source.clone());
        let source_split = resolved.splits.get(&entry.source).cloned();
        let template = resolved.template.clone();
        let remote = resolved.remote.clone();
        // An unreachable service fails its cells without stopping the matrix.
        let health = preflight(&spec, &remote).err().map(|e| e.message().to_string());
        let factory = move |target: &DatasetSplit| -> Result<Box<dyn Backend>, String> {
            if let Some(reason) = &health {
                return Err(reason.clone());
            }
            let source = source_split.as_ref().unwrap_or(target);
            spec.build(&template, source, target, &remote).map_err(|e| e.to_string())
        };
        if factories.insert(key, Box::new(factory)).is_some() {
            return Err(CliError::Usage(format!(
                "duplicate manifest entry for model {:?} and source {:?}",
                entry.model, entry.source
            )));
        }
    }

    let report = zeroshot_matrix(&resolved.splits, &factories, &resolved.template, &resolved.eval).map_err(data_err)?;
    for row in report.failed_rows() {
        if let crate::eval::CellOutcome::Failed(reason) = &row.outcome {
            let _ = writeln!(
                err,
                "warning: {} {} -> {} failed: {reason}",
                row.model, row.source_building, row.target_building
            );
        }
    }
    emit_report(&report, args.report.as_deref(), &resolved, out)
}

fn plot_path(base: &Path, building: &str, several: bool) -> PathBuf {
    if !several {
        return base.to_path_buf();
    }
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("sweep");
    let name = match base.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}_{building}.{ext}"),
        None => format!("{stem}_{building}"),
    };
    base.with_file_name(name)
}

fn cmd_sweep(args: &SweepArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let horizons: BTreeSet<usize> = args.horizons.iter().copied().collect();
    if horizons.is_empty() || horizons.contains(&0) {
        return Err(CliError::Usage("--horizons must be positive integers".into()));
    }
    let resolved = resolve(&args.common, &args.rollout, args.backend.as_deref(), args.building.as_deref())?;
    let spec = resolved.backend_spec()?;
    preflight(&spec, &resolved.remote)?;
    let model = spec.to_string();
    let buildings = resolved.buildings();
    let several = buildings.len() > 1;

    let mut report: Option<EvalReport> = None;
    for split in buildings {
        let backend = build_backend(&resolved, &spec, split)?;
        let part = horizon_sweep(&model, split, backend.as_ref(), &resolved.template, &resolved.eval, &horizons)
            .map_err(data_err)?;
        if let Some(path) = &args.plot_csv {
            let building = split.test.building_id();
            write_file(
                &resolved.output(&plot_path(path, building, several)),
                &part.render_plot_csv(&model, building),
            )?;
        }
        match &mut report {
            Some(r) => r.extend(part),
            None => report = Some(part),
        }
    }
    let report = report.ok_or_else(|| CliError::Data("no buildings to sweep".into()))?;
    emit_report(&report, args.report.as_deref(), &resolved, out)
}

fn cmd_forecast(args: &ForecastArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let resolved = resolve(&args.common, &args.rollout, args.backend.as_deref(), Some(&args.building))?;
    let spec = resolved.backend_spec()?;
    preflight(&spec, &resolved.remote)?;
    let split = resolved.split(&args.building)?;
    let config = &resolved.eval.rollout;
    let windows = make_windows(
        &split.test,
        WindowSpec::new(config.n, config.m, resolved.eval.stride).map_err(|e| CliError::Usage(e.to_string()))?,
    );
    let window = windows.get(args.window).ok_or_else(|| {
        CliError::Usage(format!("window {} out of range ({} windows)", args.window, windows.len()))
    })?;
    let backend = build_backend(&resolved, &spec, split)?;
    let result = forecast(split.test.building_id(), window.observation, backend.as_ref(), &resolved.template, config)
        .map_err(data_err)?;
    writeln!(out, "{}", result.to_json()).map_err(data_err)
}

/// Runs a parsed command, writing results to `out` and warnings to `err`.
pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Synth(args) => cmd_synth(args, out),
        Command::ExportFinetune(args) => cmd_export(args, out),
        Command::Evaluate(args) => cmd_evaluate(args, out),
        Command::Zeroshot(args) => cmd_zeroshot(args, out, err),
        Command::Sweep(args) => cmd_sweep(args, out),
        Command::Forecast(args) => cmd_forecast(args, out),
    }
}

/// Process entry point; returns the exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let mut err = io::stderr();
    match run(cli, &mut out, &mut err) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message());
            e.exit_code()
        }
    }
}
