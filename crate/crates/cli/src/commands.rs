//! Argument definitions and the subcommand implementations.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use emreduce_core::diagram::{self, CropWindow, DiagramOptions, DiagramSpec};
use emreduce_core::io::{self, fmt_real, Interleave};
use emreduce_core::reduction::{brute_force_subsets, DEFAULT_ALPHA, DEFAULT_BRUTE_FORCE_CAP};
use emreduce_core::synth::{synthesize, SynthSpec};
use emreduce_core::{
    extract, reduce_full, rmse, unmix, Algorithm, Error, ExtractionConfig, ReductionConfig, Result, SolverConfig,
    UnmixMode,
};

use crate::config::{PipelineConfig, PipelineFile};
use crate::datasets::REGISTRY;
use crate::files::{self, ImageFormat};
use crate::pipeline;

#[derive(Debug, Parser)]
#[command(name = "emreduce", version, about = "Condition-residuum analysis of hyperspectral endmember sets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract an endmember set from an image.
    Extract(ExtractArgs),
    /// Unmix an image with a given endmember set.
    Unmix(UnmixArgs),
    /// Greedily reduce an endmember set down to one member.
    Reduce(ReduceArgs),
    /// Evaluate every k-subset of an endmember set.
    Bruteforce(BruteArgs),
    /// Render a condition-residuum diagram from CSV outputs.
    Diagram(DiagramArgs),
    /// Generate a synthetic scene with known endmembers.
    Synth(SynthArgs),
    /// Run the full analysis and write traces, diagram and report.
    Pipeline(PipelineArgs),
    /// List the built-in dataset registry.
    Datasets,
}

#[derive(Debug, Args)]
pub struct ImageArgs {
    /// Image: ENVI header or data file, or CSV with one pixel per row.
    #[arg(long)]
    pub image: PathBuf,
    /// `envi` or `csv`; detected from the extension when omitted.
    #[arg(long)]
    pub format: Option<String>,
}

impl ImageArgs {
    fn load(&self) -> Result<emreduce_core::SpectralImage> {
        let format = self.format.as_deref().map(str::parse::<ImageFormat>).transpose()?;
        files::load_image(&self.image, format)
    }
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    /// `fcls` (fully constrained) or `ucls` (unconstrained).
    #[arg(long, default_value = "fcls")]
    pub mode: String,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long = "max-iter")]
    pub max_iter: Option<usize>,
}

impl SolverArgs {
    fn config(&self) -> Result<SolverConfig> {
        let mut c = SolverConfig {
            mode: self.mode.parse::<UnmixMode>()?,
            max_iterations: self.max_iter,
            ..SolverConfig::default()
        };
        if let Some(t) = self.tol {
            c.tolerance = t;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[command(flatten)]
    pub image: ImageArgs,
    /// osp, nfindr or vca.
    #[arg(long)]
    pub algo: String,
    /// Number of endmembers.
    #[arg(long)]
    pub m: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Repetitions with seeds seed..seed+runs-1.
    #[arg(long)]
    pub runs: Option<usize>,
    /// VCA only: use the SNR-dependent projection.
    #[arg(long)]
    pub snr_projection: bool,
    /// Endmember CSV; with several runs `<stem>_run<r>.csv` is written.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct UnmixArgs {
    #[command(flatten)]
    pub image: ImageArgs,
    /// Endmember CSV.
    #[arg(long)]
    pub endmembers: PathBuf,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Abundance CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReduceArgs {
    /// Endmember CSV to reduce.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[command(flatten)]
    pub image: ImageArgs,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub trace_out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BruteArgs {
    /// Endmember CSV.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[command(flatten)]
    pub image: ImageArgs,
    /// Subset size.
    #[arg(long)]
    pub k: usize,
    /// Largest number of subsets evaluated without `--force`.
    #[arg(long, default_value_t = DEFAULT_BRUTE_FORCE_CAP)]
    pub cap: u128,
    #[arg(long)]
    pub force: bool,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DiagramArgs {
    /// Diagram, trace or brute-force CSV files.
    #[arg(long = "input", required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub csv_out: Option<PathBuf>,
    #[arg(long)]
    pub svg_out: Option<PathBuf>,
    /// `kappa_min,kappa_max,rmse_min,rmse_max`
    #[arg(long, value_delimiter = ',', num_args = 4)]
    pub crop: Option<Vec<f64>>,
    #[arg(long)]
    pub linear_kappa: bool,
    #[arg(long)]
    pub no_sizes: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub bands: usize,
    /// Number of true endmembers.
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub pixels: usize,
    /// Standard deviation of additive Gaussian noise.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Pure pixels inserted per endmember.
    #[arg(long)]
    pub pure_copies: Option<usize>,
    #[arg(long)]
    pub max_condition: Option<f64>,
    /// Image format: `envi` or `csv`.
    #[arg(long, default_value = "envi")]
    pub out: String,
    /// Output directory.
    #[arg(long)]
    pub dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// JSON file with pipeline settings; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub format: Option<String>,
    /// Registry entry, e.g. `salinas-a`.
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long)]
    pub algo: Option<String>,
    #[arg(long)]
    pub m_ref: Option<usize>,
    #[arg(long)]
    pub m_over: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub alphas: Option<Vec<f64>>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// `kappa_min,kappa_max,rmse_min,rmse_max`
    #[arg(long, value_delimiter = ',', num_args = 4)]
    pub crop: Option<Vec<f64>>,
    /// Also evaluate every subset of this size of the first over-complete set.
    #[arg(long)]
    pub brute_k: Option<usize>,
    #[arg(long)]
    pub brute_cap: Option<u128>,
    #[arg(long)]
    pub force: bool,
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long = "max-iter")]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub linear_kappa: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl PipelineArgs {
    pub fn overrides(&self) -> Result<PipelineFile> {
        Ok(PipelineFile {
            dataset: self.dataset.clone(),
            format: self.format.clone(),
            name: self.name.clone(),
            algo: self.algo.clone(),
            m_ref: self.m_ref,
            m_over: self.m_over,
            alphas: self.alphas.clone(),
            runs: self.runs,
            seed: self.seed,
            crop: self.crop.as_deref().map(crop_values).transpose()?,
            brute_k: self.brute_k,
            brute_cap: self.brute_cap,
            force: self.force.then_some(true),
            mode: self.mode.clone(),
            tolerance: self.tol,
            max_iterations: self.max_iter,
            linear_kappa: self.linear_kappa.then_some(true),
            out: self.out.clone(),
        })
    }
}

fn crop_values(v: &[f64]) -> Result<[f64; 4]> {
    v.try_into()
        .map_err(|_| Error::InvalidConfig(format!("crop needs 4 values, got {}", v.len())))
}

fn warn(message: &str) {
    eprintln!("warning: {message}");
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Extract(a) => cmd_extract(&a),
        Command::Unmix(a) => cmd_unmix(&a),
        Command::Reduce(a) => cmd_reduce(&a),
        Command::Bruteforce(a) => cmd_bruteforce(&a),
        Command::Diagram(a) => cmd_diagram(&a),
        Command::Synth(a) => cmd_synth(&a),
        Command::Pipeline(a) => cmd_pipeline(&a),
        Command::Datasets => {
            cmd_datasets();
            Ok(())
        }
    }
}

fn run_path(out: &Path, run: usize) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = out.extension().map(|e| e.to_string_lossy().into_owned()).unwrap_or_else(|| "csv".into());
    out.with_file_name(format!("{stem}_run{run}.{ext}"))
}

pub fn cmd_extract(a: &ExtractArgs) -> Result<()> {
    let algo: Algorithm = a.algo.parse()?;
    let image = a.image.load()?;
    let mut runs = a.runs.unwrap_or(1);
    if runs == 0 {
        return Err(Error::InvalidConfig("runs must be positive".into()));
    }
    if algo.is_deterministic() && runs > 1 {
        warn(&format!("{algo} is deterministic; runs coerced from {runs} to 1"));
        runs = 1;
    }
    for run in 0..runs {
        let seed = a.seed.wrapping_add(run as u64);
        let mut config = ExtractionConfig::new(a.m, seed);
        config.vca_snr_projection = a.snr_projection;
        let set = extract(algo, &image, &config)?;
        let path = if runs == 1 { a.out.clone() } else { run_path(&a.out, run) };
        io::save_endmembers(&set, &path)?;
        let kappa = emreduce_core::condition_number(&set)?;
        println!(
            "run {run} seed {seed}: pixels {:?}, kappa {} -> {}",
            set.pixel_indices(),
            fmt_real(kappa),
            path.display()
        );
    }
    Ok(())
}

pub fn cmd_unmix(a: &UnmixArgs) -> Result<()> {
    let image = a.image.load()?;
    let set = io::load_endmembers(&a.endmembers)?;
    let solver = a.solver.config()?;
    let map = unmix(&set, &image, &solver)?;
    io::save_abundances(&map, &a.out)?;
    println!(
        "{} pixels, {} endmembers, mode {}: kappa {}, rmse {}",
        map.pixels(),
        map.endmembers(),
        solver.mode,
        fmt_real(emreduce_core::condition_number(&set)?),
        fmt_real(rmse(&set, &map, &image)?)
    );
    Ok(())
}

pub fn cmd_reduce(a: &ReduceArgs) -> Result<()> {
    let image = a.image.load()?;
    let set = io::load_endmembers(&a.input)?;
    let config = ReductionConfig {
        alpha: a.alpha,
        solver: a.solver.config()?,
        ..ReductionConfig::default()
    };
    let trace = reduce_full(&set, &image, &config)?;
    files::write(&a.trace_out, &files::trace_csv([(0, 0, &trace)]))?;
    println!("{:>5} {:>24} {:>24} removed", "size", "kappa", "rmse");
    let q = trace.initial_quality;
    println!("{:>5} {:>24} {:>24} -", q.set_size, fmt_real(q.kappa), fmt_real(q.rmse));
    for step in &trace.steps {
        let q = step.after;
        println!(
            "{:>5} {:>24} {:>24} {}",
            q.set_size,
            fmt_real(q.kappa),
            fmt_real(q.rmse),
            step.removed.name()
        );
    }
    println!("unmixings: {}", trace.total_unmixings());
    Ok(())
}

pub fn cmd_bruteforce(a: &BruteArgs) -> Result<()> {
    let image = a.image.load()?;
    let set = io::load_endmembers(&a.input)?;
    let solver = a.solver.config()?;
    let subsets = brute_force_subsets(&set, &image, a.k, &solver, a.cap, a.force)?;
    files::write(&a.out, &files::brute_csv(&set, &subsets))?;
    if let Some((mask, q)) = subsets.iter().min_by(|x, y| x.1.rmse.total_cmp(&y.1.rmse)) {
        println!(
            "{} subsets; lowest rmse {mask:#x}: kappa {}, rmse {}",
            subsets.len(),
            fmt_real(q.kappa),
            fmt_real(q.rmse)
        );
    }
    Ok(())
}

pub fn cmd_diagram(a: &DiagramArgs) -> Result<()> {
    if a.csv_out.is_none() && a.svg_out.is_none() {
        return Err(Error::InvalidConfig("give --csv-out and/or --svg-out".into()));
    }
    let mut points = Vec::new();
    for input in &a.inputs {
        points.extend(files::load_points(input)?);
    }
    if points.is_empty() {
        return Err(Error::EmptyInput("no diagram points in the inputs".into()));
    }
    let crop = a
        .crop
        .as_deref()
        .map(crop_values)
        .transpose()?
        .map(|[k0, k1, r0, r1]| CropWindow::new((k0, k1), (r0, r1)))
        .transpose()?;
    let spec = DiagramSpec::new(
        points,
        DiagramOptions {
            crop,
            kappa_log_scale: !a.linear_kappa,
            annotate_sizes: !a.no_sizes,
        },
    );
    if let Some(p) = &a.csv_out {
        diagram::export_csv(&spec, p)?;
    }
    if let Some(p) = &a.svg_out {
        diagram::export_svg(&spec, p)?;
    }
    println!("{} points", spec.points.len());
    Ok(())
}

pub fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let format: ImageFormat = a.out.parse()?;
    let mut spec = SynthSpec::new(a.bands, a.k, a.pixels, a.seed).with_noise(a.noise);
    if let Some(c) = a.pure_copies {
        spec.pure_pixel_copies = c;
    }
    if let Some(c) = a.max_condition {
        spec.max_condition = c;
    }
    let scene = synthesize(&spec)?;
    fs::create_dir_all(&a.dir).map_err(|e| Error::Io {
        path: a.dir.clone(),
        source: e,
    })?;
    let image_path = match format {
        ImageFormat::Envi => {
            let hdr = a.dir.join("scene.hdr");
            io::save_envi(&scene.image, &hdr, &a.dir.join("scene.img"), Interleave::Bsq)?;
            hdr
        }
        ImageFormat::Csv => {
            let p = a.dir.join("scene.csv");
            io::save_csv_image(&scene.image, &p)?;
            p
        }
    };
    io::save_endmembers(&scene.endmembers, &a.dir.join("endmembers.csv"))?;
    io::save_abundances(&scene.abundances, &a.dir.join("abundances.csv"))?;
    let pure: Vec<usize> = scene.pure_pixels.iter().filter_map(|p| p.first().copied()).collect();
    println!(
        "{} pixels, {} bands, {} endmembers (first pure pixels {pure:?}) -> {}",
        scene.image.pixels(),
        scene.image.bands(),
        scene.endmembers.len(),
        image_path.display()
    );
    Ok(())
}

pub fn cmd_pipeline(a: &PipelineArgs) -> Result<()> {
    let file = match &a.config {
        Some(p) => PipelineFile::load(p)?,
        None => PipelineFile::default(),
    };
    let (config, warnings) = PipelineConfig::resolve(file.overlay(a.overrides()?))?;
    for w in &warnings {
        warn(w);
    }
    let outcome = pipeline::run_pipeline(&config)?;
    for t in &outcome.traces {
        let points = t.trace.points();
        let last = points.last().expect("trace has points");
        println!(
            "alpha {} run {}: {} levels, {} unmixings, final kappa {} rmse {}",
            fmt_real(t.alpha),
            t.run_index,
            points.len(),
            t.trace.total_unmixings(),
            fmt_real(last.kappa),
            fmt_real(last.rmse)
        );
    }
    for f in &outcome.files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

pub fn cmd_datasets() {
    println!(
        "{:<22} {:<22} {:>9} {:>6} {:>6} {:>7} {:>7}",
        "key", "name", "size", "bands", "m_ref", "m_over", "HySime"
    );
    for d in &REGISTRY {
        println!(
            "{:<22} {:<22} {:>9} {:>6} {:>6} {:>7} {:>7}",
            d.key,
            d.name,
            format!("{}x{}", d.width, d.height),
            d.bands,
            d.m_ref,
            d.m_over(),
            d.hysime
        );
    }
}

