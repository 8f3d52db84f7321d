//! `coinlab`: synthesize, calibrate, analyze and plot two-station event streams.
//!
//! Exit codes: 0 success, 1 unexpected failure, 2 configuration error,
//! 3 I/O or file-format error, 4 not enough data for the requested statistic
//! (no timing peak, too few coincidences, an empty setting class).

mod config;

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use coinlab_core::calibrate::{calibrate, CalibrationError};
use coinlab_core::{
    analyze, generate_run, histogram_grid, plot, read_events, run_pipeline, write_coincidences_csv, write_events,
    AdjustmentSet, ArtifactConfig, BellError, EventStream, Format, IoError, PipelineError, PipelineRun, ReadOptions,
    Side, SynthError,
};

use config::RunConfig;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn config(e: impl Display) -> Self {
        CliError { code: 2, message: e.to_string() }
    }

    pub fn io(e: impl Display) -> Self {
        CliError { code: 3, message: e.to_string() }
    }

    pub fn data(e: impl Display) -> Self {
        CliError { code: 4, message: e.to_string() }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError::io(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::io(e)
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        CliError::config(e)
    }
}

impl From<CalibrationError> for CliError {
    fn from(e: CalibrationError) -> Self {
        CliError::data(e)
    }
}

impl From<BellError> for CliError {
    fn from(e: BellError) -> Self {
        CliError::data(e)
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Synth(e) => e.into(),
            PipelineError::Calibration(e) => e.into(),
            PipelineError::Bell(e) => e.into(),
            PipelineError::Io(e) => e.into(),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "coinlab", version, about = "Coincidence timing analysis for two-station event streams")]
struct Cli {
    /// More log output (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic pair of event files and a ground-truth report.
    Synth(SynthArgs),
    /// Estimate offset, drift and detector delays; prints an adjustments report.
    Calibrate(CalibrateArgs),
    /// Correlation table and CHSH value over mutual coincidences.
    Analyze(AnalyzeArgs),
    /// Scatter and histogram-grid figures.
    Plot(PlotArgs),
    /// Synthesize, calibrate, analyze and plot; compares raw and adjusted S.
    Pipeline(PipelineArgs),
}

/// Run configuration sources, lowest precedence first.
#[derive(Args, Debug, Default)]
struct ConfigArgs {
    /// `key = value` config file; defaults to $COINLAB_CONFIG.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from the long-distance artifact preset (offset, drift, delays, broadening).
    #[arg(long)]
    longdist: bool,
    /// Override any config key, e.g. `--set visibility=0.6`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    window_ps: Option<i64>,
    /// Output event format: text or binary.
    #[arg(long)]
    format: Option<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig, CliError> {
        let mut sets = Vec::new();
        if let Some(s) = self.seed {
            sets.push(format!("seed={s}"));
        }
        if let Some(w) = self.window_ps {
            sets.push(format!("window_ps={w}"));
        }
        if let Some(f) = &self.format {
            sets.push(format!("format={f}"));
        }
        sets.extend(self.sets.iter().cloned());
        let mut base = RunConfig::default();
        if self.longdist {
            base.artifacts = ArtifactConfig::longdist();
        }
        config::load(base, self.config.as_deref(), &sets)
    }
}

/// Two input event files.
#[derive(Args, Debug)]
struct InputArgs {
    /// Alice's event file.
    in_a: PathBuf,
    /// Bob's event file.
    in_b: PathBuf,
    /// Input format: text, binary or auto.
    #[arg(long, default_value = "auto")]
    input_format: Format,
    /// Sort out-of-order input instead of failing.
    #[arg(long)]
    allow_unsorted: bool,
}

impl InputArgs {
    fn read(&self) -> Result<(EventStream, EventStream), CliError> {
        Ok((
            read_side(&self.in_a, Side::Alice, self)?,
            read_side(&self.in_b, Side::Bob, self)?,
        ))
    }
}

fn read_side(path: &Path, side: Side, args: &InputArgs) -> Result<EventStream, CliError> {
    let opts = ReadOptions {
        allow_unsorted: args.allow_unsorted,
        side: Some(side),
    };
    let stream = read_events(path, args.input_format, opts).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    if stream.side() != side {
        log::warn!("{} declares side {}; treating it as {side}", path.display(), stream.side());
        return Ok(stream.with_side(side));
    }
    Ok(stream)
}

/// Timing corrections applied before matching.
#[derive(Args, Debug)]
struct AdjustArgs {
    /// Adjustments report, e.g. the output of `calibrate`.
    #[arg(long)]
    adjustments: Option<PathBuf>,
    /// Clock offset of Bob relative to Alice; overrides the adjustments file.
    #[arg(long, allow_hyphen_values = true)]
    offset_ps: Option<f64>,
    #[arg(long, default_value_t = coinlab_core::DEFAULT_WINDOW_PS)]
    window_ps: i64,
}

impl AdjustArgs {
    fn load(&self) -> Result<AdjustmentSet, CliError> {
        if self.window_ps <= 0 {
            return Err(CliError::config("window_ps must be positive"));
        }
        let mut adj = match &self.adjustments {
            Some(p) => config::load_adjustments(p)?,
            None => AdjustmentSet::default(),
        };
        if let Some(o) = self.offset_ps {
            if !o.is_finite() {
                return Err(CliError::config("offset_ps must be finite"));
            }
            adj.offset_ps = o;
        }
        Ok(adj)
    }
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    out_a: PathBuf,
    #[arg(long)]
    out_b: PathBuf,
    /// Ground-truth report path.
    #[arg(long)]
    out_truth: PathBuf,
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value_t = coinlab_core::DEFAULT_WINDOW_PS)]
    window_ps: i64,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    adjust: AdjustArgs,
    /// Coincidence CSV (Alice's perspective).
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Per-class correlation CSV.
    #[arg(long)]
    bell_csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PlotArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    adjust: AdjustArgs,
    /// Scatter SVG output.
    #[arg(long)]
    scatter: Option<PathBuf>,
    /// Histogram-grid SVG output.
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Histogram-grid CSV output.
    #[arg(long)]
    grid_csv: Option<PathBuf>,
    /// Scatter time axis in seconds: `END` or `START,END`.
    #[arg(long, default_value = "2")]
    t_range: String,
    /// Scatter delta axis half-height in nanoseconds.
    #[arg(long, default_value_t = 3.0)]
    delta_range: f64,
    /// Histogram half-width in picoseconds.
    #[arg(long, default_value_t = 1500)]
    hist_half_width_ps: i64,
    #[arg(long, default_value_t = 60)]
    hist_bin_ps: i64,
}

#[derive(Args, Debug)]
struct PipelineArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Output directory; one subdirectory per run when `--runs` > 1.
    #[arg(long)]
    out: PathBuf,
    /// Number of runs, seeded `seed`, `seed + 1`, ...
    #[arg(long, default_value_t = 1)]
    runs: u64,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    jobs: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    let result = match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Plot(a) => cmd_plot(a),
        Command::Pipeline(a) => cmd_pipeline(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("coinlab: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

fn cmd_synth(args: SynthArgs) -> Result<(), CliError> {
    let cfg = args.config.load()?;
    let (alice, bob, truth) = generate_run(&cfg.synth, &cfg.artifacts)?;
    let format = cfg.pipeline.format;
    write_events(&alice, &args.out_a, format).map_err(|e| CliError::io(format!("{}: {e}", args.out_a.display())))?;
    write_events(&bob, &args.out_b, format).map_err(|e| CliError::io(format!("{}: {e}", args.out_b.display())))?;
    let mut report = cfg.to_kv();
    report.extend(&truth.to_kv());
    write_text(&args.out_truth, &report.render())?;
    log::info!("wrote {} + {} events", alice.len(), bob.len());
    Ok(())
}

fn cmd_calibrate(args: CalibrateArgs) -> Result<(), CliError> {
    if args.window_ps <= 0 {
        return Err(CliError::config("window_ps must be positive"));
    }
    let (alice, bob) = args.input.read()?;
    let opts = coinlab_core::CalibrationOptions {
        window_ps: args.window_ps,
        ..Default::default()
    };
    let cal = calibrate(&alice, &bob, &opts)?;
    let report = cal.to_kv().render();
    match &args.out {
        Some(p) => write_text(p, &report)?,
        None => print!("{report}"),
    }
    Ok(())
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<(), CliError> {
    let adj = args.adjust.load()?;
    let (alice, bob) = args.input.read()?;
    let a = analyze(&alice, &bob, &adj, args.adjust.window_ps);
    if let Some(p) = &args.csv {
        write_coincidences_csv(&a.matched.from_alice, p).map_err(|e| CliError::io(format!("{}: {e}", p.display())))?;
    }
    println!("multiple coincidences: {}", a.multiples());
    let report = a.report?;
    print!("{}", report.table());
    if let Some(p) = &args.bell_csv {
        write_text(p, &report.to_csv())?;
    }
    Ok(())
}

fn parse_t_range(s: &str) -> Result<(f64, f64), CliError> {
    let parse = |v: &str| {
        v.trim()
            .parse::<f64>()
            .map_err(|e| CliError::config(format!("--t-range `{s}`: {e}")))
    };
    match s.split_once(',') {
        Some((lo, hi)) => Ok((parse(lo)?, parse(hi)?)),
        None => Ok((0.0, parse(s)?)),
    }
}

fn cmd_plot(args: PlotArgs) -> Result<(), CliError> {
    let adj = args.adjust.load()?;
    let spec = coinlab_core::ScatterSpec {
        t_range_s: parse_t_range(&args.t_range)?,
        delta_range_ns: args.delta_range,
    };
    if !spec.is_valid() {
        return Err(CliError::config("t-range must be increasing and delta-range positive"));
    }
    let window = coinlab_core::HistogramWindow {
        half_width_ps: args.hist_half_width_ps,
        bin_ps: args.hist_bin_ps,
    };
    if window.bin_ps <= 0 || window.half_width_ps <= 0 || window.half_width_ps % window.bin_ps != 0 {
        return Err(CliError::config("hist-half-width-ps must be a positive multiple of hist-bin-ps"));
    }
    if args.scatter.is_none() && args.grid.is_none() && args.grid_csv.is_none() {
        return Err(CliError::config("nothing to do: pass --scatter, --grid and/or --grid-csv"));
    }
    let (alice, bob) = args.input.read()?;
    let a = analyze(&alice, &bob, &adj, args.adjust.window_ps);
    if let Some(p) = &args.scatter {
        plot::scatter_svg(&a.matched.from_alice, &spec, p).map_err(|e| CliError::io(format!("{}: {e}", p.display())))?;
    }
    if args.grid.is_some() || args.grid_csv.is_some() {
        let grid = histogram_grid(&a.matched.from_alice, &a.pairs, window);
        if let Some(p) = &args.grid {
            write_text(p, &plot::render_grid_svg(&grid))?;
        }
        if let Some(p) = &args.grid_csv {
            write_text(p, &plot::render_grid_csv(&grid))?;
        }
    }
    Ok(())
}

fn summary_line(seed: u64, run: &PipelineRun) -> String {
    let s = |a: &coinlab_core::Analysis| match &a.report {
        Ok(r) => format!("{:.4} +/- {:.4}", r.s, r.s_err),
        Err(e) => format!("n/a ({e})"),
    };
    let diff = match (&run.raw.report, &run.adjusted.report) {
        (Ok(r), Ok(a)) => format!("{:+.4}", a.s - r.s),
        _ => "n/a".into(),
    };
    format!(
        "seed {seed}: S raw {} ({} pairs), S adjusted {} ({} pairs), difference {diff}",
        s(&run.raw),
        run.raw.pairs.len(),
        s(&run.adjusted),
        run.adjusted.pairs.len()
    )
}

fn run_one(cfg: &RunConfig, seed: u64, dir: &Path) -> Result<String, CliError> {
    let mut cfg = cfg.clone();
    cfg.synth.seed = seed;
    fs::create_dir_all(dir).map_err(|e| CliError::io(format!("{}: {e}", dir.display())))?;
    let run = run_pipeline(&cfg.synth, &cfg.artifacts, &cfg.pipeline)?;
    write_text(&dir.join("config.txt"), &cfg.to_kv().render())?;
    run.write_outputs(dir, &cfg.pipeline)?;
    Ok(summary_line(seed, &run))
}

fn cmd_pipeline(args: PipelineArgs) -> Result<(), CliError> {
    let cfg = args.config.load()?;
    if args.runs == 0 {
        return Err(CliError::config("--runs must be at least 1"));
    }
    let seeds: Vec<u64> = (0..args.runs).map(|i| cfg.synth.seed.wrapping_add(i)).collect();
    let dir_of = |seed: u64| {
        if args.runs == 1 {
            args.out.clone()
        } else {
            args.out.join(format!("run-{seed}"))
        }
    };
    let jobs = args
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .clamp(1, seeds.len());
    let mut results: Vec<Option<Result<String, CliError>>> = (0..seeds.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        for (chunk_seeds, chunk_out) in seeds.chunks(seeds.len().div_ceil(jobs)).zip(results.chunks_mut(seeds.len().div_ceil(jobs))) {
            let cfg = &cfg;
            let dir_of = &dir_of;
            scope.spawn(move || {
                for (seed, slot) in chunk_seeds.iter().zip(chunk_out) {
                    *slot = Some(run_one(cfg, *seed, &dir_of(*seed)));
                }
            });
        }
    });
    let mut lines = Vec::new();
    let mut first_err = None;
    for r in results.into_iter().map(|r| r.expect("every run reports")) {
        match r {
            Ok(line) => lines.push(line),
            Err(e) => {
                eprintln!("coinlab: {}", e.message);
                first_err.get_or_insert(e);
            }
        }
    }
    for l in &lines {
        println!("{l}");
    }
    if args.runs > 1 {
        fs::create_dir_all(&args.out)?;
        let mut text = lines.join("\n");
        text.push('\n');
        write_text(&args.out.join("runs.txt"), &text)?;
    }
    match first_err {
        Some(e) => Err(e),
        None => Ok(()),
    }
}
