//! Command-line front end. Exit codes: 0 success, 1 usage or invalid
//! parameters, 2 runtime failure (I/O, malformed input files).

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::aggregate::{patchwise_accuracy, predictions_csv, render_heatmap_file};
use crate::bound::{bound_envelope, image_bound, BoundParams, DEFAULT_ALPHA, DEFAULT_C4, DEFAULT_C6, DEFAULT_MIN_PATCH};
use crate::error::Error;
use crate::fmt::sig;
use crate::logits::{read_logits_file, write_logits_file};
use crate::mesh::{fit_csv, fit_scaling_exponent, trials_csv, MeshExperiment, Norm};
use crate::sweep::{builtin_fixtures, compare_csv, compare_dataset, envelope_csv, fixtures_csv, run_sweep, sweep_csv, Preset, SweepAxis, SweepSpec};
use crate::toy::{evaluate, export_logits, generate_dataset, loss_csv, train, SyntheticTask, TrainConfig};

#[derive(Debug, Parser)]
#[command(name = "patchbound", version, about = "Generalization bounds and patch-logit tooling for patch-trained classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate the bound for one configuration and print it as CSV.
    Bound(BoundArgs),
    /// Sweep one parameter against patch size and write a CSV table.
    Sweep(SweepArgs),
    /// Running minimum of the bound over square patch sizes.
    Envelope(EnvelopeArgs),
    /// Compare published patch-trained test errors with the bound envelope.
    Compare(CompareArgs),
    /// Export the built-in published accuracy records as CSV.
    Fixtures(FixturesArgs),
    /// Monte-Carlo mesh-norm experiment and log-log exponent fit.
    Meshnorm(MeshArgs),
    /// Train the linear patch classifier on the synthetic task.
    TrainToy(TrainToyArgs),
    /// Patch-averaged predictions and accuracy from a PLG1 file.
    Aggregate(AggregateArgs),
    /// Render one class's heat map from a PLG1 file as a PGM image.
    Heatmap(HeatmapArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DatasetArg {
    Cifar10,
    Cifar100,
    Stl10,
    Imagenet1k,
}

impl From<DatasetArg> for Preset {
    fn from(d: DatasetArg) -> Preset {
        match d {
            DatasetArg::Cifar10 => Preset::Cifar10,
            DatasetArg::Cifar100 => Preset::Cifar100,
            DatasetArg::Stl10 => Preset::Stl10,
            DatasetArg::Imagenet1k => Preset::Imagenet1k,
        }
    }
}

/// Accepts plain integers and integral scientific notation such as `1.2e6`.
fn parse_count(s: &str) -> Result<u64, String> {
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    let v: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if v.fract() != 0.0 || v < 0.0 || v > u64::MAX as f64 {
        return Err(format!("{s:?} is not a non-negative integer"));
    }
    Ok(v as u64)
}

#[derive(Debug, Clone)]
struct Sizes(Vec<u32>);

/// `a..b` (inclusive) or a comma list.
fn parse_sizes(s: &str) -> Result<Sizes, String> {
    if let Some((a, b)) = s.split_once("..") {
        let a: u32 = a.trim().parse().map_err(|_| format!("bad range start in {s:?}"))?;
        let b: u32 = b.trim().trim_start_matches('=').parse().map_err(|_| format!("bad range end in {s:?}"))?;
        return Ok(Sizes((a..=b).collect()));
    }
    s.split(',')
        .map(|t| t.trim().parse::<u32>().map_err(|_| format!("{t:?} is not a size")))
        .collect::<Result<_, _>>()
        .map(Sizes)
}

#[derive(Debug, Args)]
struct ConstArgs {
    /// Effective-dimension divisor alpha
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    /// Label-noise coefficient
    #[arg(long, default_value_t = DEFAULT_C4)]
    c4: f64,
    /// Mesh coefficient
    #[arg(long, default_value_t = DEFAULT_C6)]
    c6: f64,
    /// Significant digits in CSV output
    #[arg(long, default_value_t = 9)]
    digits: usize,
}

#[derive(Debug, Args)]
struct BoundArgs {
    /// Data set supplying N, K, H, W, C unless overridden
    #[arg(long, value_enum, default_value = "cifar10")]
    preset: DatasetArg,
    /// Training images N [default: preset]
    #[arg(long, value_parser = parse_count)]
    n: Option<u64>,
    /// Classes K [default: preset]
    #[arg(long)]
    k: Option<u32>,
    /// Image height H [default: preset]
    #[arg(long)]
    h: Option<u32>,
    /// Image width W [default: preset]
    #[arg(long)]
    w: Option<u32>,
    /// Channels C [default: preset]
    #[arg(long)]
    c: Option<u32>,
    /// Patch height [default: image height]
    #[arg(long)]
    ht: Option<u32>,
    /// Patch width [default: image width]
    #[arg(long)]
    wt: Option<u32>,
    /// Stride for both axes
    #[arg(long, default_value_t = 4)]
    stride: u32,
    #[command(flatten)]
    consts: ConstArgs,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Parameter to vary
    #[arg(long, value_enum, default_value = "n-classes")]
    vary: AxisArg,
    /// Comma-separated, strictly increasing values of the varied parameter
    #[arg(long, value_delimiter = ',', default_value = "10,100,1000")]
    values: Vec<f64>,
    /// Square patch sizes, `a..b` or a comma list [default: 3..min(H,W)]
    #[arg(long, value_parser = parse_sizes)]
    patches: Option<Sizes>,
    /// Training images N
    #[arg(long, value_parser = parse_count, default_value = "1200000")]
    n: u64,
    /// Classes K
    #[arg(long, default_value_t = 1000)]
    k: u32,
    /// Square image resolution H = W
    #[arg(long, default_value_t = 256)]
    resolution: u32,
    /// Channels C
    #[arg(long, default_value_t = 3)]
    c: u32,
    /// Stride for both axes
    #[arg(long, default_value_t = 4)]
    stride: u32,
    #[command(flatten)]
    consts: ConstArgs,
    /// Output CSV path
    #[arg(long, default_value = "sweep.csv")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AxisArg {
    PatchSize,
    NClasses,
    Stride,
    NTrain,
    Resolution,
}

impl From<AxisArg> for SweepAxis {
    fn from(a: AxisArg) -> SweepAxis {
        match a {
            AxisArg::PatchSize => SweepAxis::PatchSize,
            AxisArg::NClasses => SweepAxis::NClasses,
            AxisArg::Stride => SweepAxis::Stride,
            AxisArg::NTrain => SweepAxis::NTrain,
            AxisArg::Resolution => SweepAxis::Resolution,
        }
    }
}

#[derive(Debug, Args)]
struct EnvelopeArgs {
    /// Data set
    #[arg(long, value_enum, default_value = "cifar10")]
    preset: DatasetArg,
    /// Stride for both axes
    #[arg(long, default_value_t = 4)]
    stride: u32,
    /// Smallest patch size considered
    #[arg(long, default_value_t = DEFAULT_MIN_PATCH)]
    min_patch: u32,
    /// Largest patch size [default: min(H, W)]
    #[arg(long)]
    max_patch: Option<u32>,
    #[command(flatten)]
    consts: ConstArgs,
    /// Output CSV path
    #[arg(long, default_value = "envelope.csv")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// Data set whose published records are compared
    #[arg(long, value_enum, default_value = "cifar10")]
    dataset: DatasetArg,
    /// Stride for both axes
    #[arg(long, default_value_t = 4)]
    stride: u32,
    /// Significant digits in CSV output
    #[arg(long, default_value_t = 9)]
    digits: usize,
    /// Output CSV path
    #[arg(long, default_value = "compare.csv")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct FixturesArgs {
    /// Output CSV path
    #[arg(long, default_value = "fixtures.csv")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum NormArg {
    Euclidean,
    Manhattan,
    Chebyshev,
}

#[derive(Debug, Args)]
struct MeshArgs {
    /// Dimension of the unit cube
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// Comma-separated, strictly increasing sample counts
    #[arg(long, value_delimiter = ',', value_parser = parse_count, default_value = "100,1000,10000")]
    ns: Vec<u64>,
    /// Query points per trial
    #[arg(long, default_value_t = 100)]
    queries: usize,
    /// Independent trials
    #[arg(long, default_value_t = 20)]
    trials: usize,
    /// Master seed
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Distance norm
    #[arg(long, value_enum, default_value = "euclidean")]
    norm: NormArg,
    /// Significant digits in CSV output
    #[arg(long, default_value_t = 9)]
    digits: usize,
    /// Per-trial CSV path
    #[arg(long, default_value = "mesh_trials.csv")]
    out: PathBuf,
    /// Fit summary CSV path
    #[arg(long, default_value = "mesh_fit.csv")]
    fit_out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainToyArgs {
    /// Classes K
    #[arg(long, default_value_t = 4)]
    classes: u32,
    /// Square image size
    #[arg(long, default_value_t = 32)]
    size: u32,
    /// Channels
    #[arg(long, default_value_t = 1)]
    channels: u32,
    /// Fraction of image area carrying the class texture
    #[arg(long, default_value_t = 0.3)]
    rho: f64,
    /// Square patch size
    #[arg(long, default_value_t = 4)]
    patch: u32,
    /// Training images
    #[arg(long, default_value_t = 5000)]
    train: usize,
    /// Test images
    #[arg(long, default_value_t = 1000)]
    test: usize,
    /// SGD steps
    #[arg(long, default_value_t = 20_000)]
    steps: usize,
    /// Learning rate
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    /// Mini-batch size
    #[arg(long, default_value_t = 64)]
    batch: usize,
    /// Seed for data, training and evaluation
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Stride of the exported test-set logits
    #[arg(long, default_value_t = 1)]
    stride: u32,
    /// Model checkpoint path
    #[arg(long, default_value = "toy_model.bin")]
    model_out: PathBuf,
    /// Training loss CSV path
    #[arg(long, default_value = "toy_train_log.csv")]
    log_out: PathBuf,
    /// Test-set PLG1 logits path
    #[arg(long, default_value = "toy_test.plg")]
    logits_out: PathBuf,
}

#[derive(Debug, Args)]
struct AggregateArgs {
    /// Input PLG1 file
    #[arg(long, default_value = "logits.plg")]
    logits: PathBuf,
    /// Predictions CSV path
    #[arg(long, default_value = "predictions.csv")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct HeatmapArgs {
    /// Input PLG1 file
    #[arg(long, default_value = "logits.plg")]
    logits: PathBuf,
    /// Image id within the file
    #[arg(long, default_value_t = 0)]
    image: u32,
    /// Class index
    #[arg(long, default_value_t = 0)]
    class: usize,
    /// Output PGM path
    #[arg(long, default_value = "heatmap.pgm")]
    out: PathBuf,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParams(_)
            | Error::EmptyRange { .. }
            | Error::InvalidSweepRow { .. }
            | Error::PatchExceedsImage { .. }
            | Error::UnknownDataset(_)
            | Error::ClassOutOfRange { .. } => Failure::Usage(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

type CmdResult = std::result::Result<(), Failure>;

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CmdResult {
    fs::write(path, contents).map_err(|e| Failure::from(Error::io(path, e)))
}

fn emit(out: &mut dyn Write, text: &str) -> CmdResult {
    out.write_all(text.as_bytes()).map_err(|e| Failure::Runtime(format!("stdout: {e}")))
}

/// Run the CLI on `args` (including the program name). Returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let rendered = e.render().to_string();
            let _ = if code == 0 { out.write_all(rendered.as_bytes()) } else { err.write_all(rendered.as_bytes()) };
            return code;
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            1
        }
        Err(Failure::Runtime(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            2
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    match command {
        Command::Bound(a) => cmd_bound(a, out, err),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Envelope(a) => cmd_envelope(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Fixtures(a) => write_file(&a.out, fixtures_csv(&builtin_fixtures())),
        Command::Meshnorm(a) => cmd_mesh(a, out),
        Command::TrainToy(a) => cmd_train_toy(a, out),
        Command::Aggregate(a) => cmd_aggregate(a, out),
        Command::Heatmap(a) => cmd_heatmap(a),
    }
}

fn apply_consts(mut p: BoundParams, c: &ConstArgs) -> BoundParams {
    p.alpha = c.alpha;
    p.c4 = c.c4;
    p.c6 = c.c6;
    p
}

pub const BOUND_HEADER: &str = "t_eff,d_t,mesh_term,roughness,noise_term,total";

fn cmd_bound(a: BoundArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let mut p = Preset::from(a.preset).params();
    p.n_train = a.n.unwrap_or(p.n_train);
    p.n_classes = a.k.unwrap_or(p.n_classes);
    p.height = a.h.unwrap_or(p.height);
    p.width = a.w.unwrap_or(p.width);
    p.channels = a.c.unwrap_or(p.channels);
    let p = apply_consts(p.with_patch(a.ht.unwrap_or(p.height), a.wt.unwrap_or(p.width)).with_stride(a.stride), &a.consts);
    let b = image_bound(&p)?;
    if p.n_classes == 1 {
        let _ = writeln!(err, "warning: K = 1 makes classification vacuous");
    }
    let d = a.consts.digits;
    emit(
        out,
        &format!(
            "{BOUND_HEADER}\n{},{},{},{},{},{}\n",
            sig(b.t_eff, d),
            sig(b.d_t, d),
            sig(b.mesh_term, d),
            sig(b.roughness, d),
            sig(b.noise_term, d),
            sig(b.total, d)
        ),
    )
}

fn cmd_sweep(a: SweepArgs) -> CmdResult {
    let base = apply_consts(
        BoundParams::full_image(a.n, a.k, a.resolution, a.resolution, a.c).with_stride(a.stride),
        &a.consts,
    );
    let patch_grid = a.patches.map(|s| s.0).unwrap_or_else(|| (DEFAULT_MIN_PATCH..=a.resolution).collect());
    let spec = SweepSpec { base, vary: a.vary.into(), values: a.values, patch_grid };
    let rows = run_sweep(&spec)?;
    write_file(&a.out, sweep_csv(&rows, a.consts.digits))
}

fn cmd_envelope(a: EnvelopeArgs) -> CmdResult {
    let p = apply_consts(Preset::from(a.preset).params().with_stride(a.stride), &a.consts);
    let max = a.max_patch.unwrap_or(p.height.min(p.width));
    let env = bound_envelope(&p, max, a.min_patch)?;
    write_file(&a.out, envelope_csv(&env, a.consts.digits))
}

fn cmd_compare(a: CompareArgs) -> CmdResult {
    let rows = compare_dataset(Preset::from(a.dataset).name(), a.stride)?;
    write_file(&a.out, compare_csv(&rows, a.digits))
}

fn cmd_mesh(a: MeshArgs, out: &mut dyn Write) -> CmdResult {
    let exp = MeshExperiment {
        dim: a.dim,
        sample_counts: a.ns.iter().map(|&n| n as usize).collect(),
        queries: a.queries,
        trials: a.trials,
        seed: a.seed,
        norm: match a.norm {
            NormArg::Euclidean => Norm::Euclidean,
            NormArg::Manhattan => Norm::Manhattan,
            NormArg::Chebyshev => Norm::Chebyshev,
        },
    };
    let fit = fit_scaling_exponent(&exp)?;
    let fits = [fit];
    write_file(&a.out, trials_csv(&fits, a.digits))?;
    let summary = fit_csv(&fits, a.digits);
    write_file(&a.fit_out, &summary)?;
    emit(out, &summary)
}

fn cmd_train_toy(a: TrainToyArgs, out: &mut dyn Write) -> CmdResult {
    let task = SyntheticTask::new(a.classes, a.size, a.size, a.channels, a.rho, a.seed);
    task.validate()?;
    if a.train == 0 {
        return Err(Failure::Usage("training set is empty (--train 0)".into()));
    }
    let (train_set, test_set) = generate_dataset(&task, a.train, a.test)?;
    let config = TrainConfig {
        patch_height: a.patch,
        patch_width: a.patch,
        learning_rate: a.lr,
        steps: a.steps,
        batch_size: a.batch,
        seed: a.seed,
    };
    let outcome = train(config, a.classes, &train_set)?;
    outcome.model.save(&a.model_out).map_err(Failure::from)?;
    write_file(&a.log_out, loss_csv(&outcome.losses))?;
    let eval = evaluate(&outcome.model, &test_set, a.seed)?;
    let logits = export_logits(&outcome.model, &test_set, a.stride, a.stride)?;
    write_logits_file(&logits, &a.logits_out)?;
    emit(
        out,
        &format!(
            "patch_avg_accuracy,single_patch_accuracy\n{},{}\n",
            sig(eval.patch_avg_accuracy, 9),
            sig(eval.single_patch_accuracy, 9)
        ),
    )
}

fn cmd_aggregate(a: AggregateArgs, out: &mut dyn Write) -> CmdResult {
    let set = read_logits_file(&a.logits)?;
    write_file(&a.out, predictions_csv(&set)?)?;
    if set.images.iter().all(|im| im.label.is_some()) && !set.images.is_empty() {
        emit(out, &format!("patchwise_accuracy\n{}\n", sig(patchwise_accuracy(&set)?, 9)))?;
    }
    Ok(())
}

fn cmd_heatmap(a: HeatmapArgs) -> CmdResult {
    let set = read_logits_file(&a.logits)?;
    let map = set.heatmap(a.image, a.class)?;
    render_heatmap_file(&map, &a.out).map_err(Failure::from)
}
