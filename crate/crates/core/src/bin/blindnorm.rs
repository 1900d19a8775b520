//! Command-line front end. Exit codes: 0 success, 2 configuration error,
//! 3 stage failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use blindnorm::baselines::{cmn, cmn_ss, ss_cepstra, SsOptions};
use blindnorm::channel::{apply_channel, image_source_ir, load_ir, save_ir, ChannelSpec, IrMetadata, RoomSpec};
use blindnorm::convert::{channel_convert, ConversionSummary, ConvertOptions};
use blindnorm::dsp::{AudioSignal, CepstralTrajectory, Frontend, FrontendConfig, GappedTrajectory};
use blindnorm::eval::{distance_distribution_gapped, emit_plots, table_report, HistogramSpec};
use blindnorm::geometry::{
    christoffel, estimate_metric_multi, smooth_and_fill, FillPolicy, GridSpec, MetricField, MetricOptions,
};
use blindnorm::pca::{fit_pca, PcaModel};
use blindnorm::pipeline::{run_pipeline, PipelineConfig};
use blindnorm::scale::{
    build_scale, derive_reference, extrapolate, isocline_svg, ReferenceFrame, ScaleField, ScaleParams, SegmentSpec,
};
use blindnorm::synth::SynthSpec;
use blindnorm::{Error, Result};

#[derive(Parser)]
#[command(name = "blindnorm", version, about = "Blind channel normalization of speech cepstra")]
struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute MFCC trajectories from a WAV file.
    Frontend(FrontendArgs),
    /// Pass audio through a simulated room and additive noise.
    Simulate(SimulateArgs),
    /// Fit PCA to a trajectory and project it.
    Reduce(ReduceArgs),
    /// Estimate the metric and its connection on a grid.
    Metric(MetricArgs),
    /// Build or draw a scale field.
    #[command(subcommand)]
    Scale(ScaleCommand),
    /// Convert a trajectory between channels through two scales.
    Convert(ConvertArgs),
    /// Baseline normalizations.
    #[command(subcommand)]
    Baseline(BaselineCommand),
    /// Distance distributions of candidates against a clean trajectory.
    Evaluate(EvaluateArgs),
    /// Run every stage from a JSON configuration.
    Pipeline(PipelineArgs),
    /// Render synthetic utterances to WAV.
    Synth(SynthArgs),
}

#[derive(Args)]
struct FrontendArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// `.csv` for text, anything else for the binary container.
    #[arg(long)]
    out: PathBuf,
    /// Front-end parameters as JSON; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Room size `WxLxH` in metres.
    #[arg(long, default_value = "3x4x2.5")]
    room: String,
    #[arg(long, default_value_t = 0.9)]
    reflectivity: f64,
    /// Source position `x,y,z`.
    #[arg(long, default_value = "1,1.5,1.2")]
    src: String,
    /// Microphone position `x,y,z`.
    #[arg(long, default_value = "1.25,1.5,1.2")]
    mic: String,
    #[arg(long, default_value_t = 64.0)]
    max_echo_ms: f64,
    /// Load this impulse response instead of simulating a room.
    #[arg(long, conflicts_with_all = ["room", "reflectivity", "src", "mic"])]
    ir: Option<PathBuf>,
    /// Omit for a noiseless channel.
    #[arg(long)]
    snr_db: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the impulse response (WAV plus JSON sidecar).
    #[arg(long)]
    ir_out: Option<PathBuf>,
}

#[derive(Args)]
struct ReduceArgs {
    /// One or more trajectories pooled for fitting.
    #[arg(long = "in", required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    #[arg(long, default_value_t = 2)]
    components: usize,
    /// Apply an existing model instead of fitting one.
    #[arg(long)]
    model_in: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    /// Projected trajectory of the first input.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MetricArgs {
    #[arg(long = "in", required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    /// Cells per axis, comma separated.
    #[arg(long, default_value = "32,32")]
    cells: String,
    #[arg(long, default_value_t = 0.05)]
    margin: f64,
    #[arg(long, default_value_t = MetricOptions::default().min_count)]
    min_count: usize,
    #[arg(long)]
    exclude_high_curvature: bool,
    /// Gaussian smoothing width in cells.
    #[arg(long)]
    smooth_sigma: Option<f64>,
    #[arg(long)]
    no_fill: bool,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    connection: Option<PathBuf>,
    /// Per-cell eigenvalues as CSV.
    #[arg(long)]
    eigen_csv: Option<PathBuf>,
}

#[derive(Subcommand)]
enum ScaleCommand {
    Build(ScaleBuildArgs),
    Plot(ScalePlotArgs),
}

#[derive(Args)]
struct ScaleBuildArgs {
    #[arg(long)]
    connection: PathBuf,
    /// Reference frame as JSON.
    #[arg(long, conflicts_with = "segments", required_unless_present = "segments")]
    reference: Option<PathBuf>,
    /// Reference segments as JSON, read from `--traj`.
    #[arg(long, requires = "traj")]
    segments: Option<PathBuf>,
    #[arg(long, num_args = 1..)]
    traj: Vec<PathBuf>,
    #[arg(long, default_value_t = ScaleParams::default().step)]
    step: f64,
    /// Fail on lattice fold-over instead of stopping the sweep.
    #[arg(long)]
    strict: bool,
    /// Rings of nodes added by extrapolation.
    #[arg(long, default_value_t = 3)]
    extrapolate: usize,
    #[arg(long)]
    out: PathBuf,
    /// Write the derived reference frame as JSON.
    #[arg(long)]
    reference_out: Option<PathBuf>,
}

#[derive(Args)]
struct ScalePlotArgs {
    #[arg(long)]
    scale: PathBuf,
    /// Trajectory drawn underneath the isoclines.
    #[arg(long)]
    background: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ConvertArgs {
    #[arg(long)]
    scale_from: PathBuf,
    #[arg(long)]
    scale_to: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
    /// Clamp out-of-range frames to the nearest lattice node.
    #[arg(long)]
    nearest_s: bool,
    /// Reconstruct converted frames through this PCA model.
    #[arg(long)]
    lift: Option<PathBuf>,
}

#[derive(Subcommand)]
enum BaselineCommand {
    /// Cepstral mean normalization of a trajectory.
    Cmn {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Spectral subtraction of a known white-noise variance, from audio.
    Ss(SsArgs),
    /// Spectral subtraction followed by CMN.
    CmnSs(SsArgs),
}

#[derive(Args)]
struct SsArgs {
    /// Corrupted audio.
    #[arg(long = "in")]
    input: PathBuf,
    /// Per-sample noise variance, or the JSON written by `simulate`.
    #[arg(long, conflicts_with = "noise_json", required_unless_present = "noise_json")]
    noise_variance: Option<f64>,
    #[arg(long)]
    noise_json: Option<PathBuf>,
    #[arg(long, default_value_t = SsOptions::default().floor_ratio)]
    floor_ratio: f64,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    clean: PathBuf,
    /// `name=path` pairs, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    candidates: Vec<String>,
    /// Conversion report whose validity mask applies to every candidate.
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long, default_value_t = 40)]
    bins: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SynthArgs {
    /// Generator spec as JSON; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Utterance indices; all of them by default.
    #[arg(long, value_delimiter = ',')]
    indices: Vec<usize>,
    #[arg(long)]
    out: PathBuf,
}

/// What `simulate` records about the realized channel.
#[derive(serde::Serialize, serde::Deserialize)]
struct NoiseInfo {
    noise_variance: f64,
    realized_snr_db: Option<f64>,
}

fn config_error(path: &str, message: impl Into<String>) -> Error {
    Error::ConfigInvalid {
        path: path.to_string(),
        message: message.into(),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::IoFailure {
        path: path.to_path_buf(),
        source: e,
    })?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| config_error(&e.path().to_string(), e.inner().to_string()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::IoFailure {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    std::fs::write(path, text).map_err(|e| Error::IoFailure {
        path: path.to_path_buf(),
        source: e,
    })
}

fn triple(flag: &str, text: &str, sep: char) -> Result<[f64; 3]> {
    let parts: Vec<f64> = text
        .split(sep)
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| config_error(flag, e.to_string()))?;
    parts
        .try_into()
        .map_err(|_| config_error(flag, format!("expected three values separated by `{sep}`")))
}

fn frontend(config: Option<&Path>) -> Result<Frontend> {
    let cfg = match config {
        Some(p) => read_json(p)?,
        None => FrontendConfig::default(),
    };
    Frontend::new(cfg)
}

fn load_trajs(paths: &[PathBuf]) -> Result<Vec<CepstralTrajectory>> {
    paths.iter().map(|p| CepstralTrajectory::load_any(p)).collect()
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Frontend(a) => {
            let signal = AudioSignal::read_wav(&a.input)?;
            frontend(a.config.as_deref())?.process(&signal)?.save_any(&a.out)
        }
        Command::Simulate(a) => simulate(a),
        Command::Reduce(a) => {
            let trajs = load_trajs(&a.input)?;
            let model = match &a.model_in {
                Some(p) => PcaModel::load_json(p)?,
                None => fit_pca(&CepstralTrajectory::concat(&trajs)?, a.components)?,
            };
            if let Some(p) = &a.model {
                model.save_json(p)?;
            }
            log::info!("retained variance {:.4}", model.cumulative_ratio());
            model.project(&trajs[0])?.save_any(&a.out)
        }
        Command::Metric(a) => metric(a),
        Command::Scale(ScaleCommand::Build(a)) => scale_build(a),
        Command::Scale(ScaleCommand::Plot(a)) => {
            let field = ScaleField::load(&a.scale)?;
            let background = match &a.background {
                Some(p) => CepstralTrajectory::load_any(p)?.into_frames(),
                None => Vec::new(),
            };
            write_text(&a.out, &isocline_svg(&field, &background))
        }
        Command::Convert(a) => {
            let from = ScaleField::load(&a.scale_from)?;
            let to = ScaleField::load(&a.scale_to)?;
            let traj = CepstralTrajectory::load_any(&a.input)?;
            let report = channel_convert(&traj, &from, &to, &ConvertOptions { nearest_s: a.nearest_s })?;
            log::info!("{} of {} frames out of range", report.n_out_of_range, report.total());
            match &a.lift {
                Some(p) => blindnorm::convert::lift_to_full_dim(&report, &PcaModel::load_json(p)?)?.write_csv(&a.out)?,
                None => report.converted.write_csv(&a.out)?,
            }
            match &a.report {
                Some(p) => report.write_json(p),
                None => Ok(()),
            }
        }
        Command::Baseline(BaselineCommand::Cmn { input, out }) => cmn(&CepstralTrajectory::load_any(&input)?)?.save_any(&out),
        Command::Baseline(BaselineCommand::Ss(a)) => baseline_ss(a, false),
        Command::Baseline(BaselineCommand::CmnSs(a)) => baseline_ss(a, true),
        Command::Evaluate(a) => evaluate(a),
        Command::Pipeline(a) => {
            let mut cfg = match &a.config {
                Some(p) => PipelineConfig::load(p)?,
                None => PipelineConfig::default(),
            };
            if let Some(seed) = a.seed {
                cfg.seed = seed;
            }
            let outcome = run_pipeline(&cfg, &a.out)?;
            print!("{}", outcome.summary.reduced.to_text());
            Ok(())
        }
        Command::Synth(a) => {
            let mut spec: SynthSpec = match &a.config {
                Some(p) => read_json(p)?,
                None => SynthSpec::default(),
            };
            if let Some(seed) = a.seed {
                spec.seed = seed;
            }
            spec.validate().map_err(|e| config_error("synth", e.to_string()))?;
            let indices = if a.indices.is_empty() {
                (0..spec.n_utterances).collect()
            } else {
                a.indices
            };
            std::fs::create_dir_all(&a.out).map_err(|e| Error::IoFailure {
                path: a.out.clone(),
                source: e,
            })?;
            let rate = 1.0 / FrontendConfig::default().frame.hop;
            for (i, u) in indices.iter().zip(spec.corpus(&indices, rate)?) {
                u.signal.write_wav(&a.out.join(format!("utt{i:03}.wav")))?;
                let control: Vec<String> = u.control.iter().map(|c| format!("{},{}", c[0], c[1])).collect();
                write_text(
                    &a.out.join(format!("utt{i:03}_control.csv")),
                    &format!("c0,c1\n{}\n", control.join("\n")),
                )?;
            }
            Ok(())
        }
    }
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let room = RoomSpec {
        dimensions: triple("--room", &a.room, 'x')?,
        reflectivity: a.reflectivity,
        source_pos: triple("--src", &a.src, ',')?,
        mic_pos: triple("--mic", &a.mic, ',')?,
        ..RoomSpec::nominal(a.reflectivity, 0.25)
    };
    room.validate().map_err(|e| config_error("--room", e.to_string()))?;
    let signal = AudioSignal::read_wav(&a.input)?;
    let fs = signal.sample_rate();
    let impulse = match &a.ir {
        Some(p) => load_ir(p)?,
        None => {
            let (ir, meta): (_, IrMetadata) = image_source_ir(&room, a.max_echo_ms / 1000.0, fs)?;
            if let Some(p) = &a.ir_out {
                save_ir(&ir, &meta, p)?;
            }
            ir
        }
    };
    let channel = ChannelSpec {
        impulse,
        target_snr_db: a.snr_db,
        noise_seed: a.seed,
    };
    let out = apply_channel(&signal, &channel, 0)?;
    out.signal.write_wav(&a.out)?;
    let info = NoiseInfo {
        noise_variance: out.noise_variance,
        realized_snr_db: (out.noise_variance > 0.0).then(|| out.realized_snr_db()),
    };
    write_text(&a.out.with_extension("json"), &serde_json::to_string_pretty(&info)?)
}

fn metric(a: MetricArgs) -> Result<()> {
    let trajs = load_trajs(&a.input)?;
    let cells: Vec<usize> = a
        .cells
        .split(',')
        .map(|c| c.trim().parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e: std::num::ParseIntError| config_error("--cells", e.to_string()))?;
    let grid = GridSpec::covering(
        trajs.iter().flat_map(|t| t.frames().iter().map(|f| f.as_slice())),
        &cells,
        a.margin,
    )?;
    let options = MetricOptions {
        min_count: a.min_count,
        exclude_high_curvature: a.exclude_high_curvature,
        ..MetricOptions::default()
    };
    let raw = estimate_metric_multi(&trajs, &grid, &options)?;
    let policy = FillPolicy {
        fill: !a.no_fill,
        smooth_sigma: a.smooth_sigma,
        ..FillPolicy::default()
    };
    let metric: MetricField = smooth_and_fill(&raw, &policy)?;
    log::info!("{} of {} cells valid", metric.n_valid(), grid.n_cells());
    metric.save(&a.out)?;
    if let Some(p) = &a.eigen_csv {
        metric.write_eigen_csv(p)?;
    }
    if let Some(p) = &a.connection {
        christoffel(&metric)?.save(p)?;
    }
    Ok(())
}

fn scale_build(a: ScaleBuildArgs) -> Result<()> {
    let conn = blindnorm::geometry::ConnectionField::load(&a.connection)?;
    let reference: ReferenceFrame = match (&a.reference, &a.segments) {
        (Some(p), _) => read_json(p)?,
        (None, Some(p)) => {
            let spec: SegmentSpec = read_json(p)?;
            derive_reference(&load_trajs(&a.traj)?, &spec)?
        }
        (None, None) => return Err(config_error("--reference", "a reference or segments file is required")),
    };
    if let Some(p) = &a.reference_out {
        write_text(p, &serde_json::to_string_pretty(&reference)?)?;
    }
    let params = ScaleParams {
        step: a.step,
        prune_folds: !a.strict,
        ..ScaleParams::default()
    };
    let field = build_scale(&conn, &reference, &params)?;
    log::info!("{} lattice nodes valid", field.n_valid());
    extrapolate(&field, a.extrapolate).save(&a.out)
}

fn baseline_ss(a: SsArgs, with_cmn: bool) -> Result<()> {
    let signal = AudioSignal::read_wav(&a.input)?;
    let fe = frontend(a.config.as_deref())?;
    let noise_variance = match (a.noise_variance, &a.noise_json) {
        (Some(v), _) => v,
        (None, Some(p)) => read_json::<NoiseInfo>(p)?.noise_variance,
        (None, None) => return Err(config_error("--noise-variance", "a noise estimate is required")),
    };
    let options = SsOptions {
        floor_ratio: a.floor_ratio,
        ..SsOptions::default()
    };
    let traj = if with_cmn {
        cmn_ss(&fe, &signal, noise_variance, &options)?
    } else {
        ss_cepstra(&fe, &signal, noise_variance, &options)?
    };
    traj.save_any(&a.out)
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let clean = CepstralTrajectory::load_any(&a.clean)?;
    let mask = match &a.mask {
        Some(p) => Some(ConversionSummary::read_json(p)?.valid),
        None => None,
    };
    let hist = HistogramSpec {
        bins: a.bins,
        ..HistogramSpec::default()
    };
    let mut reports = Vec::new();
    for pair in &a.candidates {
        let (name, path) = pair
            .split_once('=')
            .ok_or_else(|| config_error("--candidates", format!("`{pair}` is not name=path")))?;
        let path = Path::new(path);
        let frames: GappedTrajectory = if path.extension().is_some_and(|e| e == "csv") {
            GappedTrajectory::read_csv(path)?
        } else {
            let t = CepstralTrajectory::load(path)?;
            GappedTrajectory {
                hop: t.hop(),
                dim: t.dim(),
                frames: t.into_frames().into_iter().map(Some).collect(),
            }
        };
        let rows: Vec<Option<&[f64]>> = frames.frames.iter().map(|f| f.as_deref()).collect();
        let report = distance_distribution_gapped(&rows, clean.frames(), mask.as_deref(), &hist)?;
        reports.push((name.to_string(), report));
    }
    let table = table_report(&reports);
    write_text(&a.out.join("table.json"), &table.to_json()?)?;
    write_text(&a.out.join("table.txt"), &table.to_text())?;
    emit_plots(&a.out, &reports, &[], a.bins)?;
    print!("{}", table.to_text());
    Ok(())
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::ConfigInvalid { .. } => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.verbose {
            log::LevelFilter::Info
        } else {
            log::LevelFilter::Warn
        })
        .init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
