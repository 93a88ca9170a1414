use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use wavetrack::evaluation::{self, default_thresholds};
use wavetrack::io::{self, DetectionWriter, EventFormat, Output};
use wavetrack::{Error, Params, Pipeline, Scalar, SceneSpec};

/// Event-camera vessel detector.
#[derive(Parser, Debug)]
#[command(name = "wavetrack", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the pipeline over an event stream and write detections.
    Run(RunArgs),
    /// Generate a synthetic event stream and its annotations.
    Synth(SynthArgs),
    /// Score detections against annotations; prints `auc=<value>`.
    Eval(EvalArgs),
    /// Run and score the pipeline for a range of angle scales.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Precision {
    F32,
    F64,
}

/// Pipeline parameters. Precedence: built-in defaults, then `--params`,
/// then individual flags.
#[derive(Args, Debug, Default)]
struct ParamArgs {
    /// TOML parameter file (`key = value` per line).
    #[arg(long, value_name = "FILE")]
    params: Option<PathBuf>,
    /// Sensor width in pixels [default: 346]
    #[arg(long)]
    sensor_width: Option<u16>,
    /// Sensor height in pixels [default: 260]
    #[arg(long)]
    sensor_height: Option<u16>,
    /// Horizontal partitions [default: 4]
    #[arg(long)]
    partitions_x: Option<u16>,
    /// Vertical partitions [default: 4]
    #[arg(long)]
    partitions_y: Option<u16>,
    /// Per-partition busy time after an admitted event, µs [default: 50]
    #[arg(long)]
    event_budget_us: Option<u64>,
    /// Per-pixel refractory window, µs [default: 100000]
    #[arg(long)]
    refractory_us: Option<u64>,
    /// Neighbor counting window, µs [default: 200000]
    #[arg(long)]
    filter_window_us: Option<u64>,
    /// Neighbor cluster window, µs [default: 200000]
    #[arg(long)]
    cluster_window_us: Option<u64>,
    /// Max Manhattan distance to a joined centroid, px [default: 30]
    #[arg(long)]
    max_centroid_distance: Option<u32>,
    /// Long velocity window, µs [default: 3000000]
    #[arg(long)]
    long_window_us: Option<u64>,
    /// Short velocity window, µs [default: 2000000]
    #[arg(long)]
    short_window_us: Option<u64>,
    /// Angle penalty scale [default: 460]
    #[arg(long = "ca")]
    angle_scale: Option<f64>,
    /// Difference-ratio denominator guard [default: 1e-9]
    #[arg(long)]
    epsilon: Option<f64>,
    /// Events kept per pixel [default: 8]
    #[arg(long)]
    pixel_depth: Option<u8>,
    /// Cluster pool size [default: 1024]
    #[arg(long)]
    cluster_capacity: Option<u32>,
    /// Concurrent tracks [default: 8]
    #[arg(long)]
    tracker_slots: Option<u32>,
    /// Flush period, µs [default: 10000]
    #[arg(long)]
    flush_period_us: Option<u64>,
    /// Tick period, µs [default: 100000]
    #[arg(long)]
    tick_period_us: Option<u64>,
    /// Adjacent events required to exceed for clustering [default: 4]
    #[arg(long)]
    min_adjacent: Option<u32>,
}

impl ParamArgs {
    fn resolve(&self) -> wavetrack::Result<Params> {
        let mut p = match &self.params {
            Some(path) => Params::parse_config(&std::fs::read_to_string(path)?)?,
            None => Params::default(),
        };
        macro_rules! apply {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { p.$f = v; } )* };
        }
        apply!(
            sensor_width,
            sensor_height,
            partitions_x,
            partitions_y,
            event_budget_us,
            refractory_us,
            filter_window_us,
            cluster_window_us,
            max_centroid_distance,
            long_window_us,
            short_window_us,
            angle_scale,
            epsilon,
            pixel_depth,
            cluster_capacity,
            tracker_slots,
            flush_period_us,
            tick_period_us,
            min_adjacent
        );
        p.validate()?;
        Ok(p)
    }
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Event stream (`-` for stdin; `.gz` is decompressed).
    #[arg(long)]
    events: PathBuf,
    /// Event format [default: from extension]
    #[arg(long)]
    format: Option<EventFormat>,
    /// Detections CSV (`-` for stdout).
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    params: ParamArgs,
    /// Worker threads [default: available cores]
    #[arg(long)]
    threads: Option<usize>,
    /// Print run statistics to stderr.
    #[arg(long)]
    stats: bool,
    #[arg(long, value_enum, default_value = "f64")]
    precision: Precision,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Scene description (TOML).
    #[arg(long)]
    scene: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    events_out: PathBuf,
    #[arg(long)]
    annot_out: PathBuf,
    /// Event format [default: from extension]
    #[arg(long)]
    format: Option<EventFormat>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    detections: PathBuf,
    #[arg(long)]
    annotations: PathBuf,
    /// ROC table CSV.
    #[arg(long)]
    out: PathBuf,
    /// Detection-to-frame association window, µs [default: tick period]
    #[arg(long)]
    window_us: Option<u64>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long)]
    events: PathBuf,
    #[arg(long)]
    format: Option<EventFormat>,
    #[arg(long)]
    annotations: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    ca_min: f64,
    #[arg(long, default_value_t = 1000.0)]
    ca_max: f64,
    #[arg(long, default_value_t = 20.0)]
    ca_step: f64,
    /// Sweep CSV (`c_a,auc`).
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    params: ParamArgs,
    /// Worker threads [default: available cores]
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_enum, default_value = "f64")]
    precision: Precision,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidParams(_) | Error::InvalidScene(_) => 2,
        e if e.is_stream_error() => 4,
        _ => 3,
    }
}

fn threads(requested: Option<usize>) -> usize {
    requested
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1)
}

fn cmd_run(a: &RunArgs) -> wavetrack::Result<()> {
    let params = a.params.resolve()?;
    match a.precision {
        Precision::F64 => run_with::<f64>(a, params),
        Precision::F32 => run_with::<f32>(a, params),
    }
}

fn run_with<F: Scalar>(a: &RunArgs, mut params: Params) -> wavetrack::Result<()> {
    let reader = io::read_events(&a.events, a.format, (params.sensor_width, params.sensor_height))?;
    // BIN streams carry their own geometry.
    let (w, h) = reader.dims();
    if (w, h) != (params.sensor_width, params.sensor_height) {
        params.sensor_width = w;
        params.sensor_height = h;
        params.validate()?;
    }
    let mut pipeline = Pipeline::<F>::with_threads(params, threads(a.threads))?;
    let mut sink = DetectionWriter::new(Output::create(&a.out)?)?;
    let stats = pipeline.run(reader, &mut sink)?;
    sink.into_inner().finish()?;
    if a.stats {
        eprint!("{}", stats.report());
    }
    Ok(())
}

fn cmd_synth(a: &SynthArgs) -> wavetrack::Result<()> {
    let scene = SceneSpec::from_config_file(&a.scene).map_err(|e| match e {
        Error::Io(io) => Error::InvalidScene(format!("{}: {io}", a.scene.display())),
        other => other,
    })?;
    io::write_events(&a.events_out, a.format, (scene.width, scene.height), scene.events(a.seed)?)?;
    let mut out = Output::create(&a.annot_out)?;
    io::write_annotations(&mut out, &scene.annotations())?;
    out.finish()?;
    Ok(())
}

fn read_frames(path: &Path) -> wavetrack::Result<Vec<io::Frame>> {
    io::read_annotations(io::open_input(path)?)
}

fn cmd_eval(a: &EvalArgs) -> wavetrack::Result<()> {
    let detections = io::read_detections(io::open_input(&a.detections)?)?;
    let frames = read_frames(&a.annotations)?;
    let window = a.window_us.unwrap_or(Params::default().tick_period_us);
    let roc = evaluation::evaluate(&detections, &frames, window, &default_thresholds());
    let mut out = Output::create(&a.out)?;
    evaluation::write_roc_csv(&mut out, &roc)?;
    out.finish()?;
    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "auc={:.6}", roc.auc)?;
    Ok(())
}

fn cmd_sweep(a: &SweepArgs) -> wavetrack::Result<()> {
    let mut params = a.params.resolve()?;
    let reader = io::read_events(&a.events, a.format, (params.sensor_width, params.sensor_height))?;
    (params.sensor_width, params.sensor_height) = reader.dims();
    params.validate()?;
    let events = reader.collect::<wavetrack::Result<Vec<_>>>()?;
    let frames = read_frames(&a.annotations)?;
    let grid = evaluation::scaling_grid(a.ca_min, a.ca_max, a.ca_step);
    let pool = rayon_pool(threads(a.threads))?;
    let rows = pool.install(|| match a.precision {
        Precision::F64 => evaluation::sweep_scaling::<f64>(&events, &frames, &params, &grid),
        Precision::F32 => evaluation::sweep_scaling::<f32>(&events, &frames, &params, &grid),
    })?;
    let mut out = Output::create(&a.out)?;
    evaluation::write_sweep_csv(&mut out, &rows)?;
    out.finish()?;
    Ok(())
}

fn rayon_pool(n: usize) -> wavetrack::Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| Error::Io(std::io::Error::other(e)))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("wavetrack: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
