use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use submap_align::bundle::{count_submaps, load_bundle, submap_dir, MANIFEST};
use submap_align::evaluation::{geometry_metrics, trajectory_length, trajectory_metrics, AlignmentReport};
use submap_align::export::{export_ply, read_ply, read_trajectory, submap_color, ColoredCloud};
use submap_align::pipeline::{run_pipeline, PipelineConfig, Strategy};
use submap_align::synth::{generate_scene_with, write_stream, DistortionSpec};
use submap_align::Error;

#[derive(Parser)]
#[command(version, about = "Align overlapping submap predictions into one trajectory and point cloud")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic stream of prediction bundles plus ground truth.
    Synth(SynthArgs),
    /// Align a stream (bundles or synthesized) and report metrics.
    ///
    /// Prints a table and a CSV row with columns strategy, ate_rmse,
    /// rte_rmse, rre_rmse, accuracy, completeness, chamfer, gt_length,
    /// failed. Exits 3 when alignment fails or drifts beyond 5% of the
    /// ground-truth path length.
    Run(RunArgs),
    /// Score trajectory and cloud files against ground truth.
    Eval(EvalArgs),
    /// Merge the valid points of a stream's bundles into a PLY cloud.
    Export(ExportArgs),
}

#[derive(Args)]
struct Shared {
    /// Pipeline configuration JSON; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// New frames per submap.
    #[arg(long = "L")]
    l: Option<usize>,
    /// Overlapping frames shared with the previous submap.
    #[arg(long = "O")]
    o: Option<usize>,
}

impl Shared {
    fn config(&self) -> Result<PipelineConfig, Error> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::from_json_file(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.l {
            cfg.new_frames = v;
        }
        if let Some(v) = self.o {
            cfg.overlap = v;
        }
        Ok(cfg)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum RegimeArg {
    None,
    Case1,
    Case2,
    Case3,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    shared: Shared,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    cameras: Option<usize>,
    /// Replaces the configured distortion with a randomly drawn one.
    #[arg(long, value_enum)]
    regime: Option<RegimeArg>,
    /// Case 1: depth scales drawn log-uniformly from [scale-min, scale-max].
    #[arg(long, default_value_t = 0.5)]
    scale_min: f64,
    #[arg(long, default_value_t = 2.0)]
    scale_max: f64,
    /// Case 2: relative focal-length perturbation.
    #[arg(long, default_value_t = 0.05)]
    focal_delta: f64,
    /// Case 3: amplitude and frequency of the depth wave.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = std::f64::consts::PI)]
    beta: f64,
    /// Random rigid motion per submap frame (degrees, meters).
    #[arg(long)]
    jitter_rot: Option<f64>,
    #[arg(long)]
    jitter_trans: Option<f64>,
    /// Ground plane only.
    #[arg(long)]
    flat: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    shared: Shared,
    #[arg(long)]
    strategy: Option<Strategy>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    voxel_ratio: Option<f64>,
    /// Smoothing neighbourhood size.
    #[arg(long)]
    q: Option<usize>,
    /// Confidence percentile below which points are dropped.
    #[arg(long)]
    conf_pct: Option<f64>,
    /// Depth is metric: skip scale estimation.
    #[arg(long)]
    metric_scale: bool,
    /// Refit deformations as submaps complete.
    #[arg(long)]
    streaming: bool,
    /// Use only the first C cameras.
    #[arg(long)]
    cameras: Option<usize>,
    /// Stream directory; a synthetic stream is generated when omitted.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Directory for the report, trajectories, cloud and control points.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Predicted trajectory, one per camera, paired in order with --gt.
    #[arg(long, required = true)]
    pred: Vec<PathBuf>,
    #[arg(long, required = true)]
    gt: Vec<PathBuf>,
    #[arg(long)]
    pred_cloud: PathBuf,
    #[arg(long)]
    gt_cloud: PathBuf,
    #[arg(long, default_value_t = 10.0)]
    clamp: f64,
    #[arg(long, default_value_t = 1)]
    gap: usize,
}

#[derive(Args)]
struct ExportArgs {
    /// A stream directory or a single bundle.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn synth(args: SynthArgs) -> Result<ExitCode, Error> {
    let mut cfg = args.shared.config()?;
    let scene_cfg = &mut cfg.synth.scene;
    if let Some(v) = args.frames {
        scene_cfg.n_frames = v;
    }
    if let Some(v) = args.cameras {
        scene_cfg.n_cameras = v;
    }
    scene_cfg.flat |= args.flat;
    let submaps = scene_cfg.n_frames.div_ceil(cfg.new_frames.max(1));
    let seed = cfg.seed;
    let mut spec = match args.regime {
        None => cfg.synth.distortion.clone(),
        Some(RegimeArg::None) => DistortionSpec::none(),
        Some(RegimeArg::Case1) => DistortionSpec::random_scales(seed, submaps, args.scale_min, args.scale_max),
        Some(RegimeArg::Case2) => DistortionSpec::random_intrinsics(seed, submaps, args.focal_delta),
        Some(RegimeArg::Case3) => DistortionSpec::random_wave(seed, submaps, args.alpha, args.beta),
    };
    if args.regime.is_some() {
        spec.jitter_rotation_deg = cfg.synth.distortion.jitter_rotation_deg;
        spec.jitter_translation = cfg.synth.distortion.jitter_translation;
        spec.jitter_seed = seed;
    }
    if let Some(v) = args.jitter_rot {
        spec.jitter_rotation_deg = v;
    }
    if let Some(v) = args.jitter_trans {
        spec.jitter_translation = v;
    }
    cfg.synth.distortion = spec;
    cfg.validate()?;
    let scene = generate_scene_with(&cfg.scene_config())?;
    let stream = cfg.stream_config(&scene)?;
    write_stream(&scene, &stream, &cfg.synth.distortion, &args.out)?;
    println!(
        "wrote {} submaps ({} frames × {} cameras) to {}",
        stream.submap_count(),
        stream.total_frames,
        stream.cameras,
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn run(args: RunArgs) -> Result<ExitCode, Error> {
    let mut cfg = args.shared.config()?;
    if let Some(v) = args.strategy {
        cfg.strategy = v;
    }
    if let Some(v) = args.lambda {
        cfg.lambda = Some(v);
    }
    if let Some(v) = args.voxel_ratio {
        cfg.voxel_ratio = v;
    }
    if let Some(v) = args.q {
        cfg.neighbors = v;
    }
    if let Some(v) = args.conf_pct {
        cfg.confidence_percentile = v;
    }
    if let Some(v) = args.cameras {
        cfg.cameras = Some(v);
    }
    cfg.metric_scale |= args.metric_scale;
    cfg.streaming |= args.streaming;
    if args.input.is_some() {
        cfg.input = args.input;
    }
    if args.out.is_some() {
        cfg.output = args.out;
    }

    let start = std::time::Instant::now();
    let out = run_pipeline(&cfg)?;
    eprintln!(
        "aligned {} submaps in {:.2} s",
        out.alignment.submaps.len(),
        start.elapsed().as_secs_f64()
    );
    if let Some(f) = &out.alignment.failure {
        eprintln!("alignment failed at submap {} ({}): {}", f.submap, f.stage, f.reason);
        return Ok(ExitCode::from(3));
    }
    if let Some(r) = &out.report {
        println!("{r}");
        println!("{}", AlignmentReport::csv_header());
        println!("{}", r.csv_row(cfg.strategy.name()));
    }
    Ok(if out.failed() { ExitCode::from(3) } else { ExitCode::SUCCESS })
}

fn eval(args: EvalArgs) -> Result<ExitCode, Error> {
    if args.pred.len() != args.gt.len() {
        return Err(Error::InvalidConfig(format!(
            "{} --pred files but {} --gt files",
            args.pred.len(),
            args.gt.len()
        )));
    }
    let load = |paths: &[PathBuf]| -> Result<Vec<_>, Error> {
        paths
            .iter()
            .map(|p| Ok(read_trajectory(p)?.into_iter().map(|(_, pose)| pose).collect()))
            .collect()
    };
    let pred = load(&args.pred)?;
    let gt = load(&args.gt)?;
    let (s, ate, rte, rre) = trajectory_metrics(&pred, &gt, args.gap)?;
    let cloud: Vec<_> = read_ply(&args.pred_cloud)?
        .points
        .iter()
        .map(|p| s.transform_point(p))
        .collect();
    let geo = geometry_metrics(&cloud, &read_ply(&args.gt_cloud)?.points, args.clamp)?;
    let report = AlignmentReport::new(ate, rte, rre, geo, trajectory_length(&gt[0]));
    println!("{report}");
    println!("{}", AlignmentReport::csv_header());
    println!("{}", report.csv_row("eval"));
    Ok(if report.failed { ExitCode::from(3) } else { ExitCode::SUCCESS })
}

fn export(args: ExportArgs) -> Result<ExitCode, Error> {
    let dirs = if args.input.join(MANIFEST).is_file() {
        vec![args.input.clone()]
    } else {
        (0..count_submaps(&args.input)?).map(|k| submap_dir(&args.input, k)).collect()
    };
    let mut cloud = ColoredCloud::default();
    for dir in &dirs {
        let sp = load_bundle(dir)?;
        let color = submap_color(sp.index);
        for p in sp.valid_points() {
            cloud.points.push(p);
            cloud.colors.push(color);
        }
    }
    export_ply(&cloud, &args.out)?;
    println!("wrote {} points to {}", cloud.points.len(), args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn is_validation(e: &Error) -> bool {
    match e {
        Error::Stage { source, .. } => is_validation(source),
        Error::InvalidConfig(_)
        | Error::InvalidIntrinsics(_)
        | Error::InvalidFrame { .. }
        | Error::ShapeMismatch { .. }
        | Error::ReadLength { .. }
        | Error::LengthMismatch { .. }
        | Error::Parse(_)
        | Error::Json { .. }
        | Error::Io { .. } => true,
        _ => false,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Run(a) => run(a),
        Command::Eval(a) => eval(a),
        Command::Export(a) => export(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if is_validation(&e) { 2 } else { 1 })
        }
    }
}
