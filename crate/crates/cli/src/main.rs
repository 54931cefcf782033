mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use aberrex::blur::{self, AffineBlurModel};
use aberrex::deblur::{deblur_patch, InversePolynomial};
use aberrex::degrade::{self, DegradeConfig};
use aberrex::image::{read_image, write_image_with_depth, write_pfm, BitDepth, PlanarImage};
use aberrex::metrics::{image_energy, ssim_image, ssim_ratio_image, SsimConfig};
use aberrex::pipeline::{FringeMethod, Pipeline, PipelineConfig};
use aberrex::psf::{self, read_epsf};

use config::ConfigFile;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] aberrex::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) if e.is_io() => 2,
            CliError::Core(_) => 3,
        }
    }
}

fn io_error(path: &Path, e: impl ToString) -> CliError {
    CliError::Core(aberrex::Error::Io {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

#[derive(Parser)]
#[command(name = "aberrex", version, about = "Blind optical aberration correction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Deblur and remove chromatic fringes.
    Correct(ImageJob),
    /// Blind deblurring only.
    Deblur(ImageJob),
    /// Fringe removal only.
    Defringe(ImageJob),
    /// Print the blur estimate of one patch.
    EstimateKernel(EstimateArgs),
    /// Generate a synthetic training/evaluation dataset.
    Degrade(DegradeArgs),
    /// Fit the affine blur rule on a calibration corpus.
    Calibrate(CalibrateArgs),
    /// Score a generated dataset; writes TSV.
    Eval(EvalArgs),
    /// Fit Gaussians to measured PSF grids.
    FitPsf(FitPsfArgs),
}

/// Options shared by the processing commands. Unset options fall back to
/// the `--config` file, then to defaults.
#[derive(Args, Clone, Default)]
struct ProcessOpts {
    /// key = value file with defaults for these options.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Patch side in pixels.
    #[arg(long)]
    patch: Option<usize>,
    /// Patch overlap fraction (0, 0.25 or 0.5).
    #[arg(long)]
    overlap: Option<f32>,
    /// Affine blur rule: linear, jpeg, or a model file written by `calibrate`.
    #[arg(long)]
    model: Option<String>,
    /// Custom affine rule coefficients `C,sigma_b`.
    #[arg(long)]
    coeffs: Option<String>,
    /// Inverse polynomial coefficients `a0,a1,a2[,a3]`.
    #[arg(long)]
    poly: Option<String>,
    /// cnn, radial, phasecorr, plk-t or plk-s.
    #[arg(long = "fringe-method")]
    fringe_method: Option<String>,
    /// Fringe network weights (FTBW); the embedded ones by default.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Input is gamma-encoded (JPEG-like): decode, process, re-encode.
    #[arg(long)]
    jpeg: bool,
    /// Worker threads (default: ABERREX_THREADS, then all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Dataset seed for `degrade`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ImageJob {
    input: PathBuf,
    output: PathBuf,
    /// Bits per sample for PNG/PPM output.
    #[arg(long)]
    bits: Option<u8>,
    #[command(flatten)]
    opts: ProcessOpts,
}

#[derive(Args)]
struct EstimateArgs {
    input: PathBuf,
    /// Top-left corner `row,col` of the patch.
    #[arg(long = "patch-origin", default_value = "0,0")]
    patch_origin: String,
    /// Write the rasterized kernels as `<prefix>_{r,g,b}.pfm`.
    #[arg(long = "kernels")]
    kernels: Option<PathBuf>,
    #[command(flatten)]
    opts: ProcessOpts,
}

#[derive(Args)]
struct DegradeArgs {
    /// Source image or directory of images (display-referred).
    clean: PathBuf,
    out_dir: PathBuf,
    #[arg(long, default_value_t = 100)]
    count: usize,
    /// Crop side of each sample.
    #[arg(long, default_value_t = 128)]
    crop: usize,
    #[command(flatten)]
    opts: ProcessOpts,
}

#[derive(Args)]
struct CalibrateArgs {
    corpus_dir: PathBuf,
    /// Model file to write (default `<corpus-dir>/model.txt`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    pairs_dir: PathBuf,
    /// Write the TSV here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    opts: ProcessOpts,
}

#[derive(Args)]
struct FitPsfArgs {
    epsf: PathBuf,
}

/// Command-line values over config-file values over defaults.
fn pipeline_config(opts: &ProcessOpts) -> Result<PipelineConfig, CliError> {
    let file = match &opts.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let mut cfg = PipelineConfig::default();
    if let Some(p) = opts.patch.or(file.parsed("patch")?) {
        cfg.patch_size = p;
    }
    if let Some(o) = opts.overlap.or(file.parsed("overlap")?) {
        cfg.overlap = o;
    }
    cfg.jpeg = opts.jpeg || file.flag("jpeg")?;
    let model = opts.model.clone().or(file.get("model").map(String::from));
    let coeffs = opts.coeffs.clone().or(file.get("coeffs").map(String::from));
    cfg.model = match (model.as_deref(), coeffs) {
        (_, Some(c)) => Some(parse_coeffs(&c)?),
        (Some("linear"), None) => Some(AffineBlurModel::LINEAR),
        (Some("jpeg"), None) => Some(AffineBlurModel::JPEG),
        (Some("custom"), None) => {
            return Err(CliError::Usage("--model custom needs --coeffs C,sigma_b".into()))
        }
        (Some(path), None) => Some(AffineBlurModel::load(path)?),
        (None, None) => None,
    };
    if let Some(p) = opts.poly.clone().or(file.get("poly").map(String::from)) {
        cfg.poly = p.parse::<InversePolynomial>()?;
    }
    if let Some(m) = opts
        .fringe_method
        .clone()
        .or(file.get("fringe-method").map(String::from))
    {
        cfg.fringe = m
            .parse::<FringeMethod>()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    cfg.weights = opts
        .weights
        .clone()
        .or(file.get("weights").map(PathBuf::from));
    cfg.threads = opts.threads.or(file.parsed("threads")?);
    if let Some(s) = opts.seed.or(file.parsed("seed")?) {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_coeffs(text: &str) -> Result<AffineBlurModel, CliError> {
    let v: Vec<f64> = text
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Usage(format!("--coeffs expects C,sigma_b, got '{text}'")))?;
    match v[..] {
        [c, sb] => Ok(AffineBlurModel::new(c, sb)?),
        _ => Err(CliError::Usage(format!("--coeffs expects C,sigma_b, got '{text}'"))),
    }
}

fn bit_depth(bits: Option<u8>) -> Result<BitDepth, CliError> {
    match bits.unwrap_or(8) {
        8 => Ok(BitDepth::Eight),
        16 => Ok(BitDepth::Sixteen),
        b => Err(CliError::Usage(format!("--bits must be 8 or 16, got {b}"))),
    }
}

fn read_rgb(path: &Path) -> Result<PlanarImage, CliError> {
    let img = read_image(path)?;
    if img.channels() != 3 {
        return Err(aberrex::Error::InvalidInput(format!(
            "{}: expected an RGB image, got {} channel(s)",
            path.display(),
            img.channels()
        ))
        .into());
    }
    Ok(img)
}

fn run_image_job(job: &ImageJob, which: &str) -> Result<(), CliError> {
    let cfg = pipeline_config(&job.opts)?;
    let depth = bit_depth(job.bits)?;
    let img = read_rgb(&job.input)?;
    let pipeline = Pipeline::new(cfg)?;
    let out = match which {
        "correct" => pipeline.correct(&img)?,
        "deblur" => pipeline.deblur(&img)?,
        _ => pipeline.defringe(&img)?,
    };
    write_image_with_depth(&out, &job.output, depth)?;
    Ok(())
}

fn parse_origin(text: &str) -> Result<(usize, usize), CliError> {
    let bad = || CliError::Usage(format!("--patch-origin expects row,col, got '{text}'"));
    let (r, c) = text.split_once(',').ok_or_else(bad)?;
    Ok((
        r.trim().parse().map_err(|_| bad())?,
        c.trim().parse().map_err(|_| bad())?,
    ))
}

fn estimate_kernel(args: &EstimateArgs) -> Result<(), CliError> {
    let cfg = pipeline_config(&args.opts)?;
    let (r0, c0) = parse_origin(&args.patch_origin)?;
    let mut img = read_rgb(&args.input)?;
    if cfg.jpeg {
        img = aberrex::image::gamma_decode(&img, aberrex::image::GAMMA);
    }
    if r0 >= img.height() || c0 >= img.width() {
        return Err(aberrex::Error::InvalidInput(format!(
            "patch origin ({r0}, {c0}) outside the {}x{} image",
            img.height(),
            img.width()
        ))
        .into());
    }
    let h = cfg.patch_size.min(img.height() - r0);
    let w = cfg.patch_size.min(img.width() - c0);
    let patch = img.crop(r0, c0, h, w);
    let est = blur::estimate(&patch, &cfg.effective_model())?;
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "theta\t{:.6}\t({:.2} deg)", est.theta, est.theta.to_degrees());
    for (c, name) in ["R", "G", "B"].iter().enumerate() {
        let _ = writeln!(out, "{name}\tsigma={:.4}\trho={:.4}", est.sigma[c], est.rho[c]);
    }
    if let Some(prefix) = &args.kernels {
        let psf = est.psf();
        for (c, name) in ["r", "g", "b"].iter().enumerate() {
            let k = psf.kernel(c).to_plane();
            let img = PlanarImage::from_planes(&[k])?;
            let mut file = prefix.as_os_str().to_owned();
            file.push(format!("_{name}.pfm"));
            write_pfm(&img, PathBuf::from(file))?;
        }
    }
    Ok(())
}

fn run_degrade(args: &DegradeArgs) -> Result<(), CliError> {
    let pcfg = pipeline_config(&args.opts)?;
    let sources = if args.clean.is_dir() {
        degrade::load_sources(&args.clean, args.crop)?
    } else {
        vec![read_rgb(&args.clean)?]
    };
    let cfg = DegradeConfig {
        crop: args.crop,
        model: pcfg.effective_model(),
        poly: pcfg.poly.clone(),
        ..Default::default()
    };
    std::fs::create_dir_all(&args.out_dir).map_err(|e| io_error(&args.out_dir, e))?;
    degrade::generate_dataset(&sources, args.count, &args.out_dir, &cfg, pcfg.seed)?;
    eprintln!(
        "wrote {} samples to {}",
        args.count,
        args.out_dir.display()
    );
    Ok(())
}

fn run_calibrate(args: &CalibrateArgs) -> Result<(), CliError> {
    let corpus = blur::read_corpus(&args.corpus_dir)?;
    let samples = blur::corpus_samples(&corpus);
    let model = blur::calibrate(&samples)?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| args.corpus_dir.join("model.txt"));
    model.save(&out)?;
    print!("{}", model.to_text());
    Ok(())
}

pub const EVAL_HEADER: &str = "id\tR\tE_before\tE_after\tssim_blurry\tssim_deblurred";

fn run_eval(args: &EvalArgs) -> Result<(), CliError> {
    let cfg = pipeline_config(&args.opts)?;
    let rows = degrade::read_manifest(&args.pairs_dir)?;
    let pipeline = Pipeline::new(cfg.clone())?;
    let model = cfg.effective_model();
    let ssim_cfg = SsimConfig::default();
    let dir = &args.pairs_dir;
    let lines: Vec<String> = rows
        .par_iter()
        .map(|row| -> Result<String, CliError> {
            let clean = read_rgb(&dir.join(&row.clean))?;
            let blurry = read_rgb(&dir.join(&row.aberrated))?;
            let est = blur::estimate(&blurry, &model)?;
            let deblurred = deblur_patch(&blurry, &est, &cfg.poly)?;
            let corrected = pipeline.defringe_patch(&deblurred)?;
            let r = ssim_ratio_image(&blurry, &clean, &row.params.psf, &est.psf(), &cfg.poly)?;
            Ok(format!(
                "{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
                row.id,
                r,
                image_energy(&deblurred)?,
                image_energy(&corrected)?,
                ssim_image(&blurry, &clean, &ssim_cfg)?,
                ssim_image(&corrected, &clean, &ssim_cfg)?,
            ))
        })
        .collect::<Result<_, _>>()?;
    let mut text = String::from(EVAL_HEADER);
    text.push('\n');
    for l in lines {
        text.push_str(&l);
        text.push('\n');
    }
    match &args.out {
        Some(p) => std::fs::write(p, text).map_err(|e| io_error(p, e))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn run_fit_psf(args: &FitPsfArgs) -> Result<(), CliError> {
    let psfs = read_epsf(&args.epsf)?;
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "index\tchannel\ttheta\tsigma\trho\tclamped");
    for (i, p) in psfs.iter().enumerate() {
        for (c, grid) in p.channels.iter().enumerate() {
            let f = psf::fit_gaussian(grid)?;
            let _ = writeln!(
                out,
                "{i}\t{c}\t{:.6}\t{:.6}\t{:.6}\t{}",
                f.theta, f.sigma, f.rho, f.clamped
            );
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Correct(j) => run_image_job(j, "correct"),
        Command::Deblur(j) => run_image_job(j, "deblur"),
        Command::Defringe(j) => run_image_job(j, "defringe"),
        Command::EstimateKernel(a) => estimate_kernel(a),
        Command::Degrade(a) => run_degrade(a),
        Command::Calibrate(a) => run_calibrate(a),
        Command::Eval(a) => run_eval(a),
        Command::FitPsf(a) => run_fit_psf(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("aberrex: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
