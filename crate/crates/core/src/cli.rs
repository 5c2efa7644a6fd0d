//! Command-line front end: one subcommand per experiment, all outputs under `--out`.
//!
//! Every run writes `manifest.json` with the resolved arguments, the seed and the
//! SHA-256 of each artifact. Randomized subcommands refuse to run without a seed.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::infer::{self, McmcConfig};
use crate::leaves::{self, LeavesConfig};
use crate::quality;
use crate::raster::ImageGrid;
use crate::recon::{self, ReconstructionMatrix, ReconstructionMethod, Reconstructor};
use crate::scan::{self, RosettePattern, SampleGrid};
use crate::search::{self, CoverageConfig, ProbeScanConfig};
use crate::sense::{self, MeasurementMatrix};

#[derive(Debug, Parser)]
#[command(name = "rosette", version, about = "Rosette-scan compressive imaging experiments")]
pub struct Cli {
    /// TOML experiment file; unknown keys are rejected.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (default `out`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for parallel sections.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a rosette locus and its discretized samples.
    Pattern(PatternArgs),
    /// Measure and reconstruct a corpus through one sampling layout.
    Simulate(SimulateArgs),
    /// Rank (n, m) patterns by probe coverage.
    Search(SearchArgs),
    /// Mean PSNR over probe radius and random sample fraction.
    ProbeScan(ProbeScanArgs),
    /// Write dead-leaves images.
    Leaves(LeavesArgs),
    /// PSNR between two images or two directories of images.
    Psnr(PsnrArgs),
    /// PSNR after DCT sparsification, Gaussian blur or FPA simulation.
    Sparsity(SparsityArgs),
    /// Bayesian comparison of two PSNR groups.
    Best(BestArgs),
    /// Probability that a focal-plane array beats the rosette imager, per array size.
    FpaSweep(FpaSweepArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PatternSpec {
    #[arg(long)]
    pub n: Option<u32>,
    #[arg(long)]
    pub m: Option<u32>,
    /// Detector sample rate in Hz.
    #[arg(long)]
    pub rate: Option<f64>,
    /// Pattern repeat period in seconds.
    #[arg(long = "T", visible_alias = "period")]
    pub period: Option<f64>,
    #[arg(long)]
    pub grid: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PatternArgs {
    #[command(flatten)]
    pub pattern: PatternSpec,
    /// Outer pixel rings kept free of sample centres.
    #[arg(long, default_value_t = scan::DEFAULT_BORDER)]
    pub border: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CorpusArgs {
    /// Directory of images; otherwise a dead-leaves corpus is generated.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Number of dead-leaves images.
    #[arg(long)]
    pub count: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampling {
    Rosette,
    Random,
    Full,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReconArgs {
    #[arg(long)]
    pub method: Option<String>,
    /// Relative singular-value cutoff.
    #[arg(long)]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = Sampling::Rosette)]
    pub sampling: Sampling,
    #[command(flatten)]
    pub pattern: PatternSpec,
    #[arg(long)]
    pub radius: Option<f64>,
    /// Sample fraction for random sampling.
    #[arg(long, default_value_t = 0.197)]
    pub fraction: f64,
    #[arg(long)]
    pub without_replacement: bool,
    #[command(flatten)]
    pub recon: ReconArgs,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Reconstruction-matrix cache (default `<out>/cache`).
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// Skip writing reconstructed images.
    #[arg(long)]
    pub no_images: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SearchArgs {
    #[arg(long, default_value_t = 1)]
    pub nmin: u32,
    #[arg(long, default_value_t = 100)]
    pub nmax: u32,
    #[arg(long, default_value_t = 1)]
    pub mmin: u32,
    #[arg(long, default_value_t = 100)]
    pub mmax: u32,
    /// Search the full 0..=1000 range in both integers.
    #[arg(long)]
    pub wide: bool,
    #[arg(long)]
    pub radius: Option<f64>,
    /// Rotation-frequency bound for the ranked list.
    #[arg(long, default_value_t = 2500.0)]
    pub max_hz: f64,
    #[command(flatten)]
    pub pattern: PatternSpec,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ProbeScanArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.0, 1.5, 2.0, 2.25, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0])]
    pub radii: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.197])]
    pub fractions: Vec<f64>,
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub replicates: usize,
    #[arg(long)]
    pub without_replacement: bool,
    #[command(flatten)]
    pub recon: ReconArgs,
    #[command(flatten)]
    pub corpus: CorpusArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct LeavesArgs {
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub r_min: Option<f64>,
    #[arg(long)]
    pub r_max: Option<f64>,
    #[arg(long)]
    pub exponent: Option<f64>,
    #[arg(long)]
    pub bit_depth: Option<u8>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PsnrArgs {
    /// Test image, or a directory of PGM files.
    #[arg(long)]
    pub test: PathBuf,
    /// Reference image, or a directory paired with `--test` by sorted file name.
    #[arg(long)]
    pub reference: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Sweep {
    Keep,
    Sigma,
    Fpa,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SparsityArgs {
    #[arg(long, value_enum, default_value_t = Sweep::Keep)]
    pub sweep: Sweep,
    /// Swept values (defaults depend on the sweep).
    #[arg(long, value_delimiter = ',')]
    pub values: Vec<f64>,
    /// Also write the kept fraction needed to reach the PSNR cap, per image.
    #[arg(long)]
    pub to_cap: bool,
    #[arg(long)]
    pub grid: Option<usize>,
    #[command(flatten)]
    pub corpus: CorpusArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct McmcArgs {
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// HDI mass.
    #[arg(long, default_value_t = 0.95)]
    pub mass: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BestArgs {
    /// CSV holding group 1 (a `psnr_db` column, else the first column).
    #[arg(long)]
    pub group1: PathBuf,
    #[arg(long)]
    pub group2: PathBuf,
    #[command(flatten)]
    pub mcmc: McmcArgs,
    #[arg(long, default_value_t = 40)]
    pub bins: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FpaSweepArgs {
    /// CSV of rosette PSNRs, as written by `simulate`.
    #[arg(long)]
    pub rosette: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    pub sizes: Vec<usize>,
    #[arg(long)]
    pub grid: Option<usize>,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub mcmc: McmcArgs,
}

/// Experiment file. Every key is optional; command-line flags take precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid_size: Option<usize>,
    pub period: Option<f64>,
    pub sample_rate: Option<f64>,
    pub probe_radius: Option<f64>,
    pub pattern: Option<(u32, u32)>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub corpus_dir: Option<PathBuf>,
    pub method: Option<String>,
    pub tolerance: Option<f64>,
    pub leaves: Option<LeavesSection>,
    pub mcmc: Option<McmcSection>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeavesSection {
    pub count: Option<usize>,
    pub r_min: Option<f64>,
    pub r_max: Option<f64>,
    pub exponent: Option<f64>,
    pub bit_depth: Option<u8>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McmcSection {
    pub chains: Option<usize>,
    pub draws: Option<usize>,
    pub burn_in: Option<usize>,
    pub r_hat_threshold: Option<f64>,
    pub max_extensions: Option<usize>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::File { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: Option<f64>| match v {
            Some(x) if !(x > 0.0 && x.is_finite()) => Err(Error::Config(format!("{name} must be positive, got {x}"))),
            _ => Ok(()),
        };
        positive("period", self.period)?;
        positive("sample_rate", self.sample_rate)?;
        positive("probe_radius", self.probe_radius)?;
        if self.grid_size == Some(0) {
            return Err(Error::Config("grid_size must be positive".into()));
        }
        if let Some((n, m)) = self.pattern {
            scan::frequencies_from_nm(n, m, self.period.unwrap_or(DEFAULT_PERIOD))?;
        }
        if let Some(dir) = &self.corpus_dir {
            if !dir.is_dir() {
                return Err(Error::Config(format!("corpus_dir {} does not exist", dir.display())));
            }
        }
        if let Some(method) = &self.method {
            method.parse::<ReconstructionMethod>()?;
        }
        Ok(())
    }
}

const DEFAULT_PERIOD: f64 = 0.04;
const DEFAULT_RATE: f64 = 510_000.0;
const DEFAULT_GRID: usize = 256;
const DEFAULT_RADIUS: f64 = 2.25;
const DEFAULT_PATTERN: (u32, u32) = (8, 99);

/// Parses the process arguments, runs the subcommand and maps errors to a one-line diagnostic.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", one_line(&e));
            ExitCode::FAILURE
        }
    }
}

fn one_line(e: &Error) -> String {
    e.to_string().replace('\n', " ")
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(Error::Config("--threads must be positive".into()));
        }
        // a second call in one process keeps the existing pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    let config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let out = cli.out.clone().or_else(|| config.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&out).map_err(|source| Error::File { path: out.clone(), source })?;
    let mut ctx = Context { out, seed: cli.seed.or(config.seed), config, artifacts: BTreeMap::new() };

    let (name, echo) = match &cli.command {
        Command::Pattern(a) => ("pattern", cmd_pattern(&mut ctx, a).map(|_| json(a))?),
        Command::Simulate(a) => ("simulate", cmd_simulate(&mut ctx, a).map(|_| json(a))?),
        Command::Search(a) => ("search", cmd_search(&mut ctx, a).map(|_| json(a))?),
        Command::ProbeScan(a) => ("probe-scan", cmd_probe_scan(&mut ctx, a).map(|_| json(a))?),
        Command::Leaves(a) => ("leaves", cmd_leaves(&mut ctx, a).map(|_| json(a))?),
        Command::Psnr(a) => ("psnr", cmd_psnr(&mut ctx, a).map(|_| json(a))?),
        Command::Sparsity(a) => ("sparsity", cmd_sparsity(&mut ctx, a).map(|_| json(a))?),
        Command::Best(a) => ("best", cmd_best(&mut ctx, a).map(|_| json(a))?),
        Command::FpaSweep(a) => ("fpa-sweep", cmd_fpa_sweep(&mut ctx, a).map(|_| json(a))?),
    };
    ctx.write_manifest(name, echo)
}

fn json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("argument structs serialize")
}

struct Context {
    out: PathBuf,
    seed: Option<u64>,
    config: ExperimentConfig,
    artifacts: BTreeMap<String, String>,
}

impl Context {
    fn require_seed(&self, what: &str) -> Result<u64> {
        self.seed.ok_or_else(|| Error::Config(format!("{what} is randomized: pass --seed or set seed in the config")))
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.out.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|source| Error::File { path: parent.to_path_buf(), source })?;
        }
        let mut file = BufWriter::new(fs::File::create(&path).map_err(|source| Error::File { path: path.clone(), source })?);
        file.write_all(bytes)?;
        file.flush()?;
        self.artifacts.insert(name.to_string(), hex::encode(Sha256::digest(bytes)));
        Ok(())
    }

    fn write_pgm(&mut self, name: &str, image: &ImageGrid) -> Result<()> {
        let mut bytes = Vec::new();
        image.write_pgm(&mut bytes)?;
        self.write(name, &bytes)
    }

    fn write_manifest(&self, command: &str, args: serde_json::Value) -> Result<()> {
        let manifest = serde_json::json!({
            "command": command,
            "args": args,
            "config": self.config,
            "seed": self.seed,
            "artifacts": self.artifacts,
        });
        let path = self.out.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        fs::write(&path, text).map_err(|source| Error::File { path, source })
    }

    fn grid(&self, arg: Option<usize>, default: usize) -> usize {
        arg.or(self.config.grid_size).unwrap_or(default)
    }

    fn rosette(&self, spec: &PatternSpec) -> Result<(RosettePattern, usize)> {
        let (n0, m0) = self.config.pattern.unwrap_or(DEFAULT_PATTERN);
        let pattern = RosettePattern::new(
            spec.n.unwrap_or(n0),
            spec.m.unwrap_or(m0),
            spec.period.or(self.config.period).unwrap_or(DEFAULT_PERIOD),
            spec.rate.or(self.config.sample_rate).unwrap_or(DEFAULT_RATE),
        )?;
        Ok((pattern, self.grid(spec.grid, DEFAULT_GRID)))
    }

    fn method(&self, args: &ReconArgs) -> Result<(ReconstructionMethod, f64)> {
        let method = match args.method.as_ref().or(self.config.method.as_ref()) {
            Some(m) => m.parse()?,
            None => ReconstructionMethod::PlainPseudoinverse,
        };
        Ok((method, args.tolerance.or(self.config.tolerance).unwrap_or(recon::DEFAULT_TOLERANCE)))
    }

    fn leaves_config(&self, size: usize) -> Result<LeavesConfig> {
        let seed = self.require_seed("dead-leaves generation")?;
        let mut cfg = LeavesConfig::new(size, seed);
        if let Some(s) = &self.config.leaves {
            cfg.r_min = s.r_min.unwrap_or(cfg.r_min);
            cfg.r_max = s.r_max.unwrap_or(cfg.r_max);
            cfg.exponent = s.exponent.unwrap_or(cfg.exponent);
            cfg.bit_depth = s.bit_depth.unwrap_or(cfg.bit_depth);
        }
        Ok(cfg)
    }

    fn corpus(&self, args: &CorpusArgs, size: usize) -> Result<Vec<ImageGrid>> {
        match args.corpus.as_ref().or(self.config.corpus_dir.as_ref()) {
            Some(dir) => leaves::load_image_corpus(dir, size, 16),
            None => {
                let count = args.count.or(self.config.leaves.as_ref().and_then(|l| l.count)).unwrap_or(20);
                leaves::generate_corpus(&self.leaves_config(size)?, count)
            }
        }
    }

    fn mcmc(&self, args: &McmcArgs) -> Result<McmcConfig> {
        let mut cfg = McmcConfig::with_seed(self.require_seed("MCMC sampling")?);
        let section = self.config.mcmc.clone().unwrap_or_default();
        cfg.chains = args.chains.or(section.chains).unwrap_or(cfg.chains);
        cfg.draws = args.draws.or(section.draws).unwrap_or(cfg.draws);
        cfg.burn_in = args.burn_in.or(section.burn_in).unwrap_or(cfg.burn_in);
        cfg.r_hat_threshold = section.r_hat_threshold.unwrap_or(cfg.r_hat_threshold);
        cfg.max_extensions = section.max_extensions.unwrap_or(cfg.max_extensions);
        Ok(cfg)
    }
}

fn cmd_pattern(ctx: &mut Context, args: &PatternArgs) -> Result<()> {
    let (pattern, grid) = ctx.rosette(&args.pattern)?;
    let locus = scan::rosette_locus(&pattern);
    let samples = scan::discretize_pattern_with(&locus, grid, args.border)?;
    let mut csv = String::from("t,x,y\n");
    for (t, (x, y)) in locus.timestamps.iter().zip(&locus.points) {
        csv.push_str(&format!("{t},{x},{y}\n"));
    }
    ctx.write("locus.csv", csv.as_bytes())?;
    let mut csv = String::from("row,col\n");
    for (r, c) in &samples.positions {
        csv.push_str(&format!("{r},{c}\n"));
    }
    ctx.write("samples.csv", csv.as_bytes())?;
    ctx.write_pgm("pattern.pgm", &samples.density_image())?;
    println!(
        "({}, {}): f1 = {} Hz, f2 = {} Hz, {} locus samples, {} inside the image",
        pattern.n,
        pattern.m,
        pattern.f1,
        pattern.f2,
        locus.len(),
        samples.in_bounds_count
    );
    Ok(())
}

fn cmd_simulate(ctx: &mut Context, args: &SimulateArgs) -> Result<()> {
    let (method, tolerance) = ctx.method(&args.recon)?;
    let radius = args.radius.or(ctx.config.probe_radius).unwrap_or(DEFAULT_RADIUS);
    let (samples, grid) = match args.sampling {
        Sampling::Rosette => {
            let (pattern, grid) = ctx.rosette(&args.pattern)?;
            (scan::discretize_pattern(&scan::rosette_locus(&pattern), grid)?, grid)
        }
        Sampling::Random => {
            let grid = ctx.grid(args.pattern.grid, DEFAULT_GRID);
            let mut rng = leaves::stream_rng(ctx.require_seed("random sampling")?, u64::MAX - 1);
            let positions = search::random_positions(&mut rng, grid, args.fraction, !args.without_replacement)?;
            (SampleGrid::from_positions(grid, positions)?, grid)
        }
        Sampling::Full => {
            let grid = ctx.grid(args.pattern.grid, DEFAULT_GRID);
            (SampleGrid::full(grid)?, grid)
        }
    };
    let probe = sense::rasterize_probe(radius)?;
    let matrix = sense::build_measurement_matrix(&samples, &probe)?;
    let cache = args.cache.clone().unwrap_or_else(|| ctx.out.join("cache"));
    let dense_bytes = 8 * matrix.rows() * matrix.cols();
    let p = if dense_bytes > recon::DENSE_LIMIT_BYTES {
        // too large to store densely; the Gram form is rebuilt each run
        Reconstructor::Gram(recon::GramReconstruction::build_with(&matrix, method, tolerance)?)
    } else {
        Reconstructor::Dense(cached_reconstruction(&cache, &matrix, method, tolerance)?)
    };
    let corpus = ctx.corpus(&args.corpus, grid)?;

    let mut csv = String::from("image_id,psnr_db,mse\n");
    let mut values = Vec::with_capacity(corpus.len());
    for (i, img) in corpus.iter().enumerate() {
        let rec = p.reconstruct(&sense::measure(&matrix, img)?, img.bit_depth())?;
        let q = quality::psnr(&rec, img)?;
        csv.push_str(&format!("{i},{},{}\n", q.psnr_db, q.mse));
        values.push(q.psnr_db);
        if !args.no_images {
            ctx.write_pgm(&format!("recon/{i:04}.pgm"), &rec)?;
        }
    }
    ctx.write("psnr.csv", csv.as_bytes())?;
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    println!("{} samples, {} images: mean PSNR {mean:.2} dB (sd {sd:.2})", matrix.rows(), corpus.len());
    Ok(())
}

/// Loads the reconstruction operator for `matrix` from `dir`, or builds and stores it.
///
/// Entries are keyed by the measurement-matrix hash, method and tolerance. A sidecar
/// digest guards the stored bytes; any mismatch triggers a rebuild with a warning.
pub fn cached_reconstruction(
    dir: &Path,
    matrix: &MeasurementMatrix,
    method: ReconstructionMethod,
    tolerance: f64,
) -> Result<ReconstructionMatrix> {
    let key = format!("{}-{}-{:e}", matrix.content_hash(), method.name(), tolerance);
    let data_path = dir.join(format!("{key}.rcsp"));
    let digest_path = dir.join(format!("{key}.sha256"));
    if data_path.exists() {
        match load_cached(&data_path, &digest_path, matrix, method, tolerance) {
            Ok(p) => {
                log::info!("reconstruction matrix loaded from {}", data_path.display());
                return Ok(p);
            }
            Err(reason) => log::warn!("ignoring cached reconstruction matrix {}: {reason}; rebuilding", data_path.display()),
        }
    }
    log::info!("building reconstruction matrix for {} samples x {} pixels", matrix.rows(), matrix.cols());
    let p = recon::build_reconstruction_matrix(matrix, method, tolerance)?;
    let mut bytes = Vec::new();
    p.write_to(&mut bytes)?;
    fs::create_dir_all(dir).map_err(|source| Error::File { path: dir.to_path_buf(), source })?;
    fs::write(&data_path, &bytes).map_err(|source| Error::File { path: data_path.clone(), source })?;
    fs::write(&digest_path, hex::encode(Sha256::digest(&bytes))).map_err(|source| Error::File { path: digest_path, source })?;
    Ok(p)
}

fn load_cached(
    data_path: &Path,
    digest_path: &Path,
    matrix: &MeasurementMatrix,
    method: ReconstructionMethod,
    tolerance: f64,
) -> std::result::Result<ReconstructionMatrix, String> {
    let bytes = fs::read(data_path).map_err(|e| e.to_string())?;
    let expected = fs::read_to_string(digest_path).map_err(|e| format!("missing digest: {e}"))?;
    if hex::encode(Sha256::digest(&bytes)) != expected.trim() {
        return Err("content hash mismatch".into());
    }
    let p = ReconstructionMatrix::read_from(&bytes[..]).map_err(|e| e.to_string())?;
    if p.pixels() != matrix.cols() || p.samples() != matrix.rows() || p.method() != method || p.tolerance() != tolerance {
        return Err("shape or settings differ from the measurement matrix".into());
    }
    Ok(p)
}

fn cmd_search(ctx: &mut Context, args: &SearchArgs) -> Result<()> {
    let (n_range, m_range) = if args.wide { (0..=1000, 0..=1000) } else { (args.nmin..=args.nmax, args.mmin..=args.mmax) };
    let config = CoverageConfig {
        grid_size: ctx.grid(args.pattern.grid, DEFAULT_GRID),
        period: args.pattern.period.or(ctx.config.period).unwrap_or(DEFAULT_PERIOD),
        sample_rate: args.pattern.rate.or(ctx.config.sample_rate).unwrap_or(DEFAULT_RATE),
    };
    let radius = args.radius.or(ctx.config.probe_radius).unwrap_or(DEFAULT_RADIUS);
    let result = search::pattern_coverage_search(n_range, m_range, radius, &config)?;
    ctx.write("coverage.csv", result.to_csv().as_bytes())?;
    ctx.write_pgm("coverage_map.pgm", &result.coverage_map()?)?;
    let mut invalid = String::from("n,m\n");
    for (n, m) in &result.invalid {
        invalid.push_str(&format!("{n},{m}\n"));
    }
    ctx.write("invalid.csv", invalid.as_bytes())?;
    let ranked = search::filter_patterns(&result, args.max_hz)?;
    let mut csv = String::from("rank,n,m,f1,f2,in_bounds,nonzero_bins,mean_bin_mass\n");
    for (i, e) in ranked.iter().enumerate() {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            i + 1,
            e.n,
            e.m,
            e.f1,
            e.f2,
            e.in_bounds,
            e.nonzero_bins,
            e.mean_bin_mass
        ));
    }
    ctx.write("ranked.csv", csv.as_bytes())?;
    for e in ranked.iter().take(3) {
        println!("({}, {}): f = ({}, {}) Hz, {} nonzero bins", e.n, e.m, e.f1, e.f2, e.nonzero_bins);
    }
    Ok(())
}

fn cmd_probe_scan(ctx: &mut Context, args: &ProbeScanArgs) -> Result<()> {
    let grid = ctx.grid(args.grid, 64);
    let seed = ctx.require_seed("probe-size scan")?;
    let corpus = ctx.corpus(&args.corpus, grid)?;
    let (method, tolerance) = ctx.method(&args.recon)?;
    let mut config = ProbeScanConfig::new(args.radii.clone(), args.fractions.clone(), grid, seed);
    config.replicates = args.replicates;
    config.with_replacement = !args.without_replacement;
    config.method = method;
    config.tolerance = tolerance;
    config.corpus_id = args.corpus.corpus.as_ref().map_or_else(|| "dead_leaves".into(), |p| p.display().to_string());
    let result = search::probe_size_scan(&config, &corpus)?;
    ctx.write("probe_scan.csv", result.to_csv().as_bytes())?;
    // rows are fractions, columns radii; bright is high PSNR
    let flat: Vec<f64> = result.mean_psnr.concat();
    let (lo, hi) = flat.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let scaled: Vec<f64> = flat.iter().map(|v| if hi > lo { 65535.0 * (v - lo) / (hi - lo) } else { 0.0 }).collect();
    ctx.write_pgm("probe_scan.pgm", &ImageGrid::from_real(result.radii.len(), result.fractions.len(), 16, &scaled)?)?;
    for (f, fraction) in result.fractions.iter().enumerate() {
        println!("fraction {fraction}: best radius {}", result.best_radius(f));
    }
    Ok(())
}

fn cmd_leaves(ctx: &mut Context, args: &LeavesArgs) -> Result<()> {
    let size = args.size.or(ctx.config.grid_size).unwrap_or(DEFAULT_GRID);
    let mut cfg = ctx.leaves_config(size)?;
    cfg.r_min = args.r_min.unwrap_or(cfg.r_min);
    cfg.r_max = args.r_max.unwrap_or(cfg.r_max);
    cfg.exponent = args.exponent.unwrap_or(cfg.exponent);
    cfg.bit_depth = args.bit_depth.unwrap_or(cfg.bit_depth);
    let count = args.count.or(ctx.config.leaves.as_ref().and_then(|l| l.count)).unwrap_or(1);
    for (i, img) in leaves::generate_corpus(&cfg, count)?.iter().enumerate() {
        ctx.write_pgm(&format!("leaves_{i:04}.pgm"), img)?;
    }
    println!("{count} dead-leaves images of {size}x{size}");
    Ok(())
}

fn pgm_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|source| Error::File { path: dir.to_path_buf(), source })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("pgm")))
        .collect();
    files.sort();
    Ok(files)
}

fn cmd_psnr(ctx: &mut Context, args: &PsnrArgs) -> Result<()> {
    let pairs: Vec<(PathBuf, PathBuf)> = if args.test.is_dir() && args.reference.is_dir() {
        let (t, r) = (pgm_files(&args.test)?, pgm_files(&args.reference)?);
        if t.len() != r.len() {
            return Err(crate::error::shape(format!("{} reference images", r.len()), format!("{} test images", t.len())));
        }
        t.into_iter().zip(r).collect()
    } else {
        vec![(args.test.clone(), args.reference.clone())]
    };
    let mut csv = String::from("image_id,test,reference,psnr_db,mse\n");
    for (i, (t, r)) in pairs.iter().enumerate() {
        let q = quality::psnr(&ImageGrid::load_pgm(t)?, &ImageGrid::load_pgm(r)?)?;
        csv.push_str(&format!(
            "{i},{},{},{},{}\n",
            csv_field(&t.display().to_string()),
            csv_field(&r.display().to_string()),
            q.psnr_db,
            q.mse
        ));
        println!("{}: {:.4} dB", t.display(), q.psnr_db);
    }
    ctx.write("psnr.csv", csv.as_bytes())
}

/// Quotes a CSV field when it holds a delimiter, quote or line break.
fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn cmd_sparsity(ctx: &mut Context, args: &SparsityArgs) -> Result<()> {
    let grid = ctx.grid(args.grid, DEFAULT_GRID);
    let corpus = ctx.corpus(&args.corpus, grid)?;
    let values = if args.values.is_empty() {
        match args.sweep {
            Sweep::Keep => vec![0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0],
            Sweep::Sigma => vec![0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0],
            Sweep::Fpa => [0.25, 0.375, 0.5, 0.625, 0.75, 0.875, 1.0].iter().map(|f| (f * grid as f64).round()).collect(),
        }
    } else {
        args.values.clone()
    };
    let column = match args.sweep {
        Sweep::Keep => "keep_fraction",
        Sweep::Sigma => "sigma",
        Sweep::Fpa => "fpa_size",
    };
    let rows: Vec<Vec<(f64, quality::PsnrResult)>> = {
        use rayon::prelude::*;
        corpus
            .par_iter()
            .map(|img| {
                let sparse = if args.sweep == Sweep::Keep { Some(quality::DctSparsifier::new(img)?) } else { None };
                values
                    .iter()
                    .map(|&v| {
                        let degraded = match args.sweep {
                            Sweep::Keep => sparse.as_ref().unwrap().at_fraction(v)?,
                            Sweep::Sigma => quality::gaussian_filter(img, v)?,
                            Sweep::Fpa => quality::fpa_simulate(img, v as usize)?,
                        };
                        Ok((v, quality::psnr(&degraded, img)?))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?
    };
    let mut csv = format!("image_id,{column},psnr_db,mse\n");
    for (i, row) in rows.iter().enumerate() {
        for (v, q) in row {
            csv.push_str(&format!("{i},{v},{},{}\n", q.psnr_db, q.mse));
        }
    }
    ctx.write("sweep.csv", csv.as_bytes())?;
    for (j, v) in values.iter().enumerate() {
        let mean = rows.iter().map(|r| r[j].1.psnr_db).sum::<f64>() / rows.len() as f64;
        println!("{column} {v}: mean PSNR {mean:.2} dB");
    }
    if args.to_cap {
        let mut csv = String::from("image_id,keep_fraction_to_cap\n");
        for (i, img) in corpus.iter().enumerate() {
            csv.push_str(&format!("{i},{}\n", quality::keep_fraction_to_cap(img)?));
        }
        ctx.write("sparsity.csv", csv.as_bytes())?;
    }
    Ok(())
}

/// Reads one numeric column: `psnr_db` when the header names it, else the first column.
pub fn read_value_column(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|source| Error::File { path: path.to_path_buf(), source })?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty()).peekable();
    let bad = |reason: String| Error::Format { kind: "CSV", reason: format!("{}: {reason}", path.display()) };
    let first = *lines.peek().ok_or_else(|| bad("no rows".into()))?;
    let cells: Vec<&str> = first.split(',').map(str::trim).collect();
    let mut column = 0;
    if cells.iter().any(|c| c.parse::<f64>().is_err()) {
        column = cells.iter().position(|c| *c == "psnr_db").unwrap_or(0);
        lines.next();
    }
    lines
        .enumerate()
        .map(|(i, l)| {
            let cell = l.split(',').nth(column).ok_or_else(|| bad(format!("row {} has no column {column}", i + 1)))?;
            cell.trim().parse::<f64>().map_err(|e| bad(format!("row {}: {e}", i + 1)))
        })
        .collect()
}

fn cmd_best(ctx: &mut Context, args: &BestArgs) -> Result<()> {
    let g1 = read_value_column(&args.group1)?;
    let g2 = read_value_column(&args.group2)?;
    let config = ctx.mcmc(&args.mcmc)?;
    let post = infer::best_fit(&g1, &g2, &config)?;
    ctx.write("summary.csv", infer::summary_csv(&post, args.mcmc.mass)?.as_bytes())?;
    let effect = infer::effect_size(&post);
    for (k, name) in infer::PARAMETERS.iter().enumerate() {
        ctx.write(&format!("hist_{name}.csv"), infer::histogram_csv(post.parameter(k), args.bins).as_bytes())?;
    }
    ctx.write("hist_effect_size.csv", infer::histogram_csv(&effect, args.bins).as_bytes())?;
    let h = infer::hdi(&effect, args.mcmc.mass)?;
    println!("effect size {:.0}% HDI [{:.4}, {:.4}], max R-hat {:.4}", 100.0 * h.mass, h.low, h.high, post.max_r_hat());
    if !post.converged {
        eprintln!("warning: chains did not converge (R-hat {:?})", post.r_hat);
    }
    Ok(())
}

fn cmd_fpa_sweep(ctx: &mut Context, args: &FpaSweepArgs) -> Result<()> {
    let rosette = read_value_column(&args.rosette)?;
    let grid = ctx.grid(args.grid, DEFAULT_GRID);
    let corpus = ctx.corpus(&args.corpus, grid)?;
    let config = ctx.mcmc(&args.mcmc)?;
    let points = infer::fpa_outperform_sweep(&rosette, &corpus, &args.sizes, &config)?;
    let mut csv = String::from("fpa_size,probability,mean_fpa_psnr,converged\n");
    for p in &points {
        csv.push_str(&format!("{},{},{},{}\n", p.fpa_size, p.probability, p.mean_fpa_psnr, p.converged));
        println!("fpa {0}x{0}: P(FPA better) = {1:.3}", p.fpa_size, p.probability);
    }
    ctx.write("fpa_sweep.csv", csv.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_rejects_unknown_keys() {
        assert!(ExperimentConfig::parse("grid_size = 64\nbogus = 1\n").is_err());
        assert!(ExperimentConfig::parse("[mcmc]\nchain = 4\n").is_err());
        let c = ExperimentConfig::parse("grid_size = 64\npattern = [8, 99]\n[mcmc]\ndraws = 100\n").unwrap();
        assert_eq!(c.grid_size, Some(64));
        assert_eq!(c.pattern, Some((8, 99)));
        assert_eq!(c.mcmc.unwrap().draws, Some(100));
    }

    #[test]
    fn config_validates_values() {
        assert!(ExperimentConfig::parse("pattern = [5, 5]\n").is_err());
        assert!(ExperimentConfig::parse("period = -1.0\n").is_err());
        assert!(ExperimentConfig::parse("corpus_dir = \"/definitely/not/here\"\n").is_err());
        assert!(ExperimentConfig::parse("method = \"magic\"\n").is_err());
    }

    #[test]
    fn csv_quoting() {
        assert_eq!(csv_field("plain"), "plain");
        assert_eq!(csv_field("a,b"), "\"a,b\"");
        assert_eq!(csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
    }

    #[test]
    fn value_column_reading() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.csv");
        fs::write(&a, "image_id,psnr_db,mse\n0,17.5,3\n1,18.25,2\n").unwrap();
        assert_eq!(read_value_column(&a).unwrap(), vec![17.5, 18.25]);
        fs::write(&a, "1.5\n2.5\n").unwrap();
        assert_eq!(read_value_column(&a).unwrap(), vec![1.5, 2.5]);
        fs::write(&a, "x\nnope\n").unwrap();
        assert!(read_value_column(&a).is_err());
    }

    #[test]
    fn cache_round_trip_and_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let samples = SampleGrid::full(6).unwrap();
        let m = sense::build_measurement_matrix(&samples, &sense::rasterize_probe(0.8).unwrap()).unwrap();
        let method = ReconstructionMethod::PlainPseudoinverse;
        let a = cached_reconstruction(dir.path(), &m, method, 1e-10).unwrap();
        let b = cached_reconstruction(dir.path(), &m, method, 1e-10).unwrap();
        assert_eq!(a, b);
        let stored = pgm_like(dir.path(), "rcsp");
        let mut bytes = fs::read(&stored).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 0xff;
        fs::write(&stored, bytes).unwrap();
        let c = cached_reconstruction(dir.path(), &m, method, 1e-10).unwrap();
        assert_eq!(a, c);
    }

    fn pgm_like(dir: &Path, ext: &str) -> PathBuf {
        fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).find(|p| p.extension().is_some_and(|x| x == ext)).unwrap()
    }
}
