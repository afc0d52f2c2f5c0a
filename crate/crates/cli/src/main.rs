use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use meshband::analysis::SignificanceMode;
use meshband::data::{save_dataset, DataFormat};
use meshband::learn::{ClassifierKind, MetaKind};
use meshband::mesh::FeatureKind;
use meshband::pipeline::{run_pipeline, verify, PipelineConfig, Stage};
use meshband::synth::{generate, SynthConfig};
use meshband::wavelet::{DecompositionScope, Subband, WaveletKind};
use meshband::Error;

#[derive(Parser)]
#[command(name = "meshband", version, about = "Multi-resolution mesh networks for task decoding")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with planted subband connectivity.
    Synth(SynthArgs),
    /// Wavelet subband decomposition of every region series.
    Decompose(RunArgs),
    /// Per-session feature tables (mesh arcs, correlations or raw series).
    Mesh(RunArgs),
    /// Degree, strength, betweenness and efficiency of the mesh networks.
    Metrics(RunArgs),
    /// Per-subband base classifiers and their fusion.
    Train(RunArgs),
    /// Diversity of the base classifiers.
    Diversity(RunArgs),
    /// One-vs-rest significance of the class memberships.
    Significance(RunArgs),
    /// Every stage listed in the configuration (all by default).
    Report(RunArgs),
    /// Cross-check fast implementations against slow reference ones.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// TOML file with generator settings; defaults otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (csv) or file (bin).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "csv")]
    format: DataFormat,
    #[arg(long)]
    seed: Option<u64>,
    /// Measurement noise standard deviation.
    #[arg(long)]
    noise: Option<f64>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Print the results as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct RunArgs {
    /// Pipeline configuration (TOML). Flags override its values.
    #[arg(long, conflicts_with = "benchmark")]
    config: Option<PathBuf>,
    /// Start from the desk-scale synthetic benchmark instead of the defaults.
    #[arg(long)]
    benchmark: bool,
    /// Dataset directory (csv) or file (bin).
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    format: Option<DataFormat>,
    /// Generate the dataset in memory from this generator config.
    #[arg(long)]
    synth_config: Option<PathBuf>,
    #[arg(long)]
    family: Option<WaveletKind>,
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long)]
    scope: Option<DecompositionScope>,
    /// Comma-separated base subbands, e.g. `A0,A1,D2`.
    #[arg(long, value_delimiter = ',')]
    subbands: Option<Vec<Subband>>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Regress on the raw session windows instead of z-scored ones.
    #[arg(long)]
    no_standardize: bool,
    /// mesh, corr or raw.
    #[arg(long)]
    features: Option<FeatureKind>,
    #[arg(long)]
    t_fix: Option<usize>,
    /// logistic or maxmargin.
    #[arg(long)]
    base: Option<ClassifierKind>,
    /// Comma-separated fusion methods: logistic, maxmargin, mv, wmv.
    #[arg(long, value_delimiter = ',')]
    meta: Option<Vec<MetaKind>>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reg_base: Option<f64>,
    #[arg(long)]
    reg_meta: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    /// pooled or as_printed.
    #[arg(long)]
    significance: Option<SignificanceMode>,
    /// Shorthand for `--significance as_printed`.
    #[arg(long, conflicts_with = "significance")]
    as_printed: bool,
    /// Output directory for the report, tables and cache.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    no_cache: bool,
    /// Print the JSON report instead of the text summary.
    #[arg(long)]
    json: bool,
}

impl RunArgs {
    /// Defaults, then the config file or benchmark preset, then flags.
    fn config(&self, stages: Option<&[Stage]>) -> meshband::Result<PipelineConfig> {
        let mut c = match (&self.config, self.benchmark) {
            (Some(path), _) => PipelineConfig::load(path)?,
            (None, true) => PipelineConfig::synthetic_benchmark(self.seed.unwrap_or(7)),
            (None, false) => PipelineConfig::default(),
        };
        if let Some(path) = &self.synth_config {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            c.synth = Some(SynthConfig::from_toml(&text)?);
        }
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = &self.$field {
                    c.$field = v.clone();
                }
            )*};
        }
        set!(format, family, levels, scope, p, lambda, features, t_fix, base, meta, folds, seed, reg_base, reg_meta, max_iter, tol, significance);
        if self.data.is_some() {
            c.data = self.data.clone();
        }
        if self.subbands.is_some() {
            c.subbands = self.subbands.clone();
        }
        if self.out.is_some() {
            c.out = self.out.clone();
        }
        if self.no_standardize {
            c.standardize = false;
        }
        if self.as_printed {
            c.significance = SignificanceMode::AsPrinted;
        }
        if self.no_cache {
            c.cache = false;
        }
        if let Some(stages) = stages {
            c.stages = stages.iter().copied().collect();
        }
        Ok(c)
    }
}

fn run_stages(args: &RunArgs, stages: Option<&[Stage]>) -> meshband::Result<()> {
    let config = args.config(stages).map_err(|e| e.in_stage("config"))?;
    let outcome = run_pipeline(&config)?;
    log::info!(
        "cache: {} hits, {} misses; {} files written",
        outcome.cache_hits,
        outcome.cache_misses,
        outcome.written.len()
    );
    if args.json {
        println!("{}", outcome.report.to_json());
    } else {
        print!("{}", outcome.report.summary_text());
        if let Some(out) = &config.out {
            println!("\noutputs in {}", out.display());
        }
    }
    Ok(())
}

fn synth(args: &SynthArgs) -> meshband::Result<()> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            SynthConfig::from_toml(&text)?
        }
        None => SynthConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(noise) = args.noise {
        cfg.noise = noise;
    }
    let ds = generate(&cfg).map_err(|e| e.in_stage("synth"))?;
    save_dataset(&ds, &args.out, args.format).map_err(|e| e.in_stage("synth"))?;
    let plans = cfg.plans()?;
    let plans_path = match args.format {
        DataFormat::Csv => args.out.join("plans.json"),
        DataFormat::Bin => args.out.with_extension("plans.json"),
    };
    std::fs::write(&plans_path, serde_json::to_string_pretty(&plans)?)?;
    println!(
        "{} subjects, {} sessions, {} regions, {} tasks -> {}",
        ds.subjects.len(),
        ds.n_sessions(),
        ds.n_regions(),
        ds.n_classes,
        args.out.display()
    );
    Ok(())
}

fn verify_all(args: &VerifyArgs) -> meshband::Result<bool> {
    let checks = verify::run_all(args.seed);
    if args.json {
        println!("{}", serde_json::to_string_pretty(&checks)?);
    } else {
        for c in &checks {
            println!("{c}");
        }
    }
    Ok(checks.iter().all(|c| c.passed))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match &cli.command {
        Command::Synth(a) => synth(a).map(|_| true),
        Command::Decompose(a) => run_stages(a, Some(&[Stage::Decompose])).map(|_| true),
        Command::Mesh(a) => run_stages(a, Some(&[Stage::Features])).map(|_| true),
        Command::Metrics(a) => run_stages(a, Some(&[Stage::Metrics])).map(|_| true),
        Command::Train(a) => run_stages(a, Some(&[Stage::Single, Stage::Fusion])).map(|_| true),
        Command::Diversity(a) => run_stages(a, Some(&[Stage::Diversity])).map(|_| true),
        Command::Significance(a) => run_stages(a, Some(&[Stage::Significance])).map(|_| true),
        Command::Report(a) => run_stages(a, None).map(|_| true),
        Command::Verify(a) => verify_all(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("meshband: verification failed");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("meshband: {e}");
            ExitCode::FAILURE
        }
    }
}
