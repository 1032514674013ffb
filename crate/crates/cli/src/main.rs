//! `bodybench`: command-line front end for ranking, sampling, evaluation and
//! adapter fitting.
//!
//! Exit codes: 0 on success, 2 on invalid input, 3 on I/O failure.

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bodybench::adapter::{fit_adapter, AdapterError, AdapterTrainConfig, GaussianPoseSampler, MlpAdapter};
use bodybench::benchmark::{rank_datasets, select_top_n, BenchmarkError, InDomainMask, ResultsMatrix};
use bodybench::body_model::{
    load_model, toy_model, write_model, BodyModelDef, BodyModelError, FullPose, KeypointSource, ToyModelConfig,
};
use bodybench::geometry::{layout, unpack_params, GeometryError};
use bodybench::io::report::{render_parts, render_plan, render_ranking, render_summary};
use bodybench::io::{
    load_coco, load_humandata, read_npz_file, CocoError, ContainerError, HumanDataError, NpzArchive, Precision,
    ReportFormat,
};
use bodybench::metrics::{evaluate, DetectionScore, EvalOptions, FrameSet, MetricsError, PaScope, PointSet};
use bodybench::sampling::{load_specs, plan, realize_schedule, SamplingError, Strategy};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "bodybench",
    version,
    about = "Whole-body pose and shape evaluation and data curation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rank training datasets by mean primary error over benchmark columns.
    Rank(RankArgs),
    /// Print the top-N datasets of a ranking, one per line.
    Select {
        #[command(flatten)]
        input: ResultsInput,
        #[arg(long)]
        top: usize,
    },
    /// Compute per-dataset training quotas.
    Plan(PlanArgs),
    /// Score predicted meshes/joints against ground truth.
    Eval(EvalArgs),
    /// Shape adapters between body models.
    #[command(subcommand)]
    Adapter(AdapterCommand),
    /// NumPy archive utilities.
    #[command(subcommand)]
    Npz(NpzCommand),
    /// COCO keypoint annotation utilities.
    #[command(subcommand)]
    Coco(CocoCommand),
    /// Body model files.
    #[command(subcommand)]
    Model(ModelCommand),
}

#[derive(Args)]
struct ResultsInput {
    /// Results CSV: a `dataset` column, then one error column per benchmark.
    #[arg(long)]
    results: PathBuf,
    /// In-domain mask JSON; defaults to the built-in pairs present in the matrix.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Use no exclusions at all.
    #[arg(long, conflicts_with = "mask")]
    no_mask: bool,
}

#[derive(Args)]
struct OutputArgs {
    #[arg(long, default_value = "text")]
    format: ReportFormat,
    /// `default` (one decimal) or `full`.
    #[arg(long, default_value = "default")]
    precision: Precision,
}

#[derive(Args)]
struct RankArgs {
    #[command(flatten)]
    input: ResultsInput,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct PlanArgs {
    /// balanced, weighted or concat.
    #[arg(long)]
    strategy: Strategy,
    /// Dataset spec JSON: `[{"name", "native_length", "rank"}, ...]`.
    #[arg(long)]
    specs: PathBuf,
    /// Total sample budget; required for balanced and weighted, ignored by concat.
    #[arg(long)]
    total: Option<u64>,
    /// Write the plan as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write a realized index schedule as JSON (requires --seed).
    #[arg(long, requires = "seed")]
    schedule: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "text")]
    format: ReportFormat,
}

#[derive(Clone, Copy, ValueEnum)]
enum Keypoints {
    Kinematic,
    Mesh,
}

#[derive(Args)]
struct EvalArgs {
    /// Archive with `vertices` (F×V×3) and/or `joints` (F×J×3), or packed `params` (F×188).
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth archive with the same members as --pred.
    #[arg(long)]
    gt: PathBuf,
    /// Body model JSON; needed for packed parameters and per-part reports.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Also report Procrustes-aligned errors.
    #[arg(long)]
    pa: bool,
    /// Rigid alignment without scale.
    #[arg(long)]
    no_scale: bool,
    /// Per-part error report (needs --model).
    #[arg(long, requires = "model")]
    parts: bool,
    /// Align each hand on its own vertices (default).
    #[arg(long, conflicts_with = "whole_body_pa")]
    per_hand_pa: bool,
    /// Align once over the whole mesh and read part errors off that fit.
    #[arg(long)]
    whole_body_pa: bool,
    /// Detection F1 for normalized errors; overrides an `f1` array in --pred.
    #[arg(long)]
    f1: Option<f64>,
    /// Comma-separated source joint index for each evaluated joint.
    #[arg(long, value_delimiter = ',')]
    joint_remap: Option<Vec<usize>>,
    /// Keypoint definition used when joints come from packed parameters.
    #[arg(long, value_enum, default_value = "kinematic")]
    keypoints: Keypoints,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Subcommand)]
enum AdapterCommand {
    /// Fit a shape adapter mapping --src shape coefficients to --dst ones.
    Fit {
        /// Source body model JSON.
        #[arg(long)]
        src: PathBuf,
        /// Target body model JSON.
        #[arg(long)]
        dst: PathBuf,
        /// Std-dev of sampled axis-angle poses, in radians.
        #[arg(long, default_value_t = 0.3)]
        sigma: f64,
        #[arg(long, default_value_t = 2000)]
        iters: usize,
        #[arg(long, default_value_t = 5e-7)]
        step: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 8)]
        batch: usize,
        /// Write the fitted adapter as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum NpzCommand {
    /// List members with dtype and shape.
    Inspect {
        file: PathBuf,
        /// Also validate the archive as a HumanData container.
        #[arg(long)]
        humandata: bool,
    },
}

#[derive(Subcommand)]
enum CocoCommand {
    /// Validate an annotation document and summarize it.
    Check { file: PathBuf },
}

#[derive(Subcommand)]
enum ModelCommand {
    /// Summarize a body model JSON.
    Info { file: PathBuf },
    /// Write a synthetic body model.
    Toy {
        #[arg(long)]
        out: PathBuf,
        /// Use the 55-joint whole-body layout instead of a random tree.
        #[arg(long)]
        smplx: bool,
        #[arg(long, default_value_t = 10)]
        joints: usize,
        /// Multiply the shape basis by this factor.
        #[arg(long, default_value_t = 1.0)]
        shape_scale: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug)]
enum CliError {
    Invalid(String),
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Invalid(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

fn classify(io: bool, message: String) -> CliError {
    if io {
        CliError::Io(message)
    } else {
        CliError::Invalid(message)
    }
}

impl From<BenchmarkError> for CliError {
    fn from(e: BenchmarkError) -> Self {
        classify(matches!(e, BenchmarkError::Io(_)), e.to_string())
    }
}

impl From<SamplingError> for CliError {
    fn from(e: SamplingError) -> Self {
        classify(matches!(e, SamplingError::Io(_)), e.to_string())
    }
}

impl From<ContainerError> for CliError {
    fn from(e: ContainerError) -> Self {
        classify(e.is_io(), format!("{} [{}]", e, e.code()))
    }
}

impl From<HumanDataError> for CliError {
    fn from(e: HumanDataError) -> Self {
        let io = matches!(&e, HumanDataError::Container(c) if c.is_io());
        classify(io, format!("{} [{}]", e, e.code()))
    }
}

impl From<CocoError> for CliError {
    fn from(e: CocoError) -> Self {
        classify(matches!(e, CocoError::Io(_)), format!("{} [{}]", e, e.code()))
    }
}

impl From<BodyModelError> for CliError {
    fn from(e: BodyModelError) -> Self {
        classify(e.is_io(), e.to_string())
    }
}

impl From<AdapterError> for CliError {
    fn from(e: AdapterError) -> Self {
        let io = match &e {
            AdapterError::Io(_) => true,
            AdapterError::Model(m) => m.is_io(),
            _ => false,
        };
        classify(io, e.to_string())
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

impl From<GeometryError> for CliError {
    fn from(e: GeometryError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn load_ranking_inputs(input: &ResultsInput) -> Result<(ResultsMatrix, InDomainMask), CliError> {
    let matrix = ResultsMatrix::load_csv(&input.results)?;
    let mask = match (&input.mask, input.no_mask) {
        (Some(path), _) => InDomainMask::load_json(path)?,
        (None, true) => InDomainMask::empty(),
        (None, false) => InDomainMask::default_for(&matrix),
    };
    Ok((matrix, mask))
}

fn run_rank(args: &RankArgs) -> Result<(), CliError> {
    let (matrix, mask) = load_ranking_inputs(&args.input)?;
    let table = rank_datasets(&matrix, &mask)?;
    print!("{}", render_ranking(&table, args.output.format, args.output.precision));
    Ok(())
}

fn run_select(input: &ResultsInput, top: usize) -> Result<(), CliError> {
    let (matrix, mask) = load_ranking_inputs(input)?;
    let table = rank_datasets(&matrix, &mask)?;
    for name in select_top_n(&table, top)? {
        println!("{name}");
    }
    Ok(())
}

fn run_plan(args: &PlanArgs) -> Result<(), CliError> {
    let specs = load_specs(&args.specs)?;
    let plan = plan(args.strategy, &specs, args.total)?;
    print!("{}", render_plan(&plan, args.format));
    println!("total: {}", plan.total);
    if let Some(out) = &args.out {
        write_file(out, &plan.to_json())?;
    }
    if let (Some(path), Some(seed)) = (&args.schedule, args.seed) {
        let schedule: serde_json::Map<String, serde_json::Value> = realize_schedule(&plan, seed)
            .into_iter()
            .map(|s| (s.name, serde_json::json!(s.indices)))
            .collect();
        write_file(path, &serde_json::to_string(&schedule).expect("schedule serializes"))?;
    }
    Ok(())
}

/// Meshes and keypoints from an `F × 188` packed-parameter array.
fn frames_from_params(
    archive: &NpzArchive,
    model: &BodyModelDef,
    keypoints: KeypointSource,
) -> Result<FrameSet, CliError> {
    let rec = &archive["params"];
    let shape = rec.shape();
    if shape.len() != 2 || shape[1] != layout::LEN {
        return Err(CliError::Invalid(format!(
            "'params' must have shape F×{}, found {shape:?}",
            layout::LEN
        )));
    }
    let values = rec.to_f64();
    let mut vertices = Vec::with_capacity(shape[0]);
    let mut joints = Vec::with_capacity(shape[0]);
    for row in values.chunks_exact(layout::LEN) {
        let p = unpack_params(row)?;
        let pose = FullPose::from_flat(&p.pose)?;
        let offset = nalgebra::Vector3::new(p.camera[0], p.camera[1], p.camera[2]);
        let shift = |points: Vec<nalgebra::Vector3<f64>>| -> Result<PointSet, CliError> {
            Ok(PointSet::new(points.into_iter().map(|q| q + offset).collect())?)
        };
        vertices.push(shift(model.skin(&pose, &p.betas, &p.expression)?)?);
        joints.push(shift(model.keypoints(keypoints, &pose, &p.betas, &p.expression)?)?);
    }
    let f1 = archive.get("f1").filter(|r| r.len() == 1).map(|r| r.to_f64()[0]);
    Ok(FrameSet {
        vertices: Some(vertices),
        joints: Some(joints),
        f1,
    })
}

fn load_frames(path: &Path, model: Option<&BodyModelDef>, keypoints: KeypointSource) -> Result<FrameSet, CliError> {
    let archive = read_npz_file(path)?;
    if archive.contains_key("params") && !archive.contains_key("vertices") && !archive.contains_key("joints") {
        let model =
            model.ok_or_else(|| CliError::Invalid(format!("{}: packed parameters need --model", path.display())))?;
        return frames_from_params(&archive, model, keypoints);
    }
    Ok(FrameSet::from_archive(&archive)?)
}

fn run_eval(args: &EvalArgs) -> Result<(), CliError> {
    let model = args.model.as_deref().map(load_model).transpose()?;
    let keypoints = match args.keypoints {
        Keypoints::Kinematic => KeypointSource::Kinematic,
        Keypoints::Mesh => KeypointSource::Mesh,
    };
    let pred = load_frames(&args.pred, model.as_ref(), keypoints)?;
    let gt = load_frames(&args.gt, model.as_ref(), keypoints)?;
    let opts = EvalOptions {
        procrustes: args.pa,
        with_scale: !args.no_scale,
        parts: args.parts.then_some(if args.whole_body_pa {
            PaScope::WholeBody
        } else {
            PaScope::PerPart
        }),
        part_masks: model.as_ref().map(|m| m.part_masks().clone()).unwrap_or_default(),
        joint_remap: args.joint_remap.clone(),
        f1: args.f1.map(DetectionScore::new).transpose()?,
    };
    let summary = evaluate(&pred, &gt, &opts)?;
    let (format, precision) = (args.output.format, args.output.precision);
    print!("{}", render_summary(&summary, format, precision));
    if let Some(parts) = &summary.parts {
        println!();
        print!("{}", render_parts(parts, format, precision));
    }
    Ok(())
}

fn run_adapter(cmd: &AdapterCommand) -> Result<(), CliError> {
    let AdapterCommand::Fit {
        src,
        dst,
        sigma,
        iters,
        step,
        seed,
        batch,
        out,
    } = cmd;
    let source = load_model(src)?;
    let target = load_model(dst)?;
    let mut widths = MlpAdapter::DEFAULT_WIDTHS.to_vec();
    widths[0] = source.num_shape();
    *widths.last_mut().expect("nonempty widths") = target.num_shape();
    let hidden = 2 * source.num_shape();
    for w in &mut widths[1..3] {
        *w = (*w).max(hidden);
    }
    let config = AdapterTrainConfig {
        widths,
        iterations: *iters,
        step: *step,
        batch_size: *batch,
        sigma: *sigma,
        seed: *seed,
        ..AdapterTrainConfig::default()
    };
    let sampler = GaussianPoseSampler::for_model(&source, *sigma)?;
    let report = fit_adapter(&source, &target, &sampler, &config)?;
    println!("iterations: {}", report.iterations);
    println!("initial_error_mm: {}", report.initial_error);
    println!("final_error_mm: {}", report.final_error);
    if let Some(path) = out {
        write_file(path, &report.adapter.to_json())?;
    }
    Ok(())
}

fn run_npz(cmd: &NpzCommand) -> Result<(), CliError> {
    let NpzCommand::Inspect { file, humandata } = cmd;
    if *humandata {
        let doc = load_humandata(file)?;
        println!("param_space: {}", doc.param_space());
        println!("instances: {}", doc.len());
        if let Some(name) = doc.name() {
            println!("name: {name}");
        }
    }
    let archive = read_npz_file(file)?;
    for (name, rec) in &archive {
        println!("{name}\t{}\t{:?}", rec.dtype().name(), rec.shape());
    }
    Ok(())
}

fn run_coco(cmd: &CocoCommand) -> Result<(), CliError> {
    let CocoCommand::Check { file } = cmd;
    let doc = load_coco(file)?;
    let with_params = doc.annotations.iter().filter(|a| a.body_annotation().is_some()).count();
    println!("images: {}", doc.images.len());
    println!("annotations: {}", doc.annotations.len());
    println!("with_body_params: {with_params}");
    Ok(())
}

fn run_model(cmd: &ModelCommand) -> Result<(), CliError> {
    match cmd {
        ModelCommand::Info { file } => {
            let model = load_model(file)?;
            println!("joints: {}", model.joint_count());
            println!("vertices: {}", model.vertex_count());
            println!("shape_coefficients: {}", model.num_shape());
            println!("expression_coefficients: {}", model.num_expression());
            println!("pose_correctives: {}", model.pose_correctives_enabled());
            for (name, mask) in model.part_masks() {
                println!("part {name}: {} vertices", mask.len());
            }
            Ok(())
        }
        ModelCommand::Toy {
            out,
            smplx,
            joints,
            shape_scale,
            seed,
        } => {
            let config = if *smplx {
                ToyModelConfig::smplx_layout(*seed)
            } else {
                if *joints == 0 {
                    return Err(CliError::Invalid("--joints must be positive".into()));
                }
                ToyModelConfig::random_tree(*joints, *seed)
            };
            let model = toy_model(&config)?.with_scaled_shape_basis(*shape_scale);
            write_model(out, &model)?;
            Ok(())
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Rank(args) => run_rank(args),
        Command::Select { input, top } => run_select(input, *top),
        Command::Plan(args) => run_plan(args),
        Command::Eval(args) => run_eval(args),
        Command::Adapter(cmd) => run_adapter(cmd),
        Command::Npz(cmd) => run_npz(cmd),
        Command::Coco(cmd) => run_coco(cmd),
        Command::Model(cmd) => run_model(cmd),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
