//! `presam`: run preconditioned-SAM experiments from the command line.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use presam_core::harness::{
    amd_case_study, amd_samples_csv, export_record, rate_check, run_training, valley_case_study,
    valley_trajectories_csv, write_json, write_text, AmdConfig, ExportFormat, RateCheckConfig,
    RunConfig, ValleyConfig, VarianceSource, Variant,
};
use presam_core::oracles::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for ExportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => ExportFormat::Csv,
            FormatArg::Json => ExportFormat::Json,
        }
    }
}

#[derive(Parser)]
#[command(name = "presam", version, about = "Preconditioned sharpness-aware minimization experiments")]
struct Cli {
    /// Verbosity (-v info, -vv debug)
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    /// Output file. Defaults to `<out-dir>/<command>.<ext>` when an output
    /// directory is set, otherwise stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Default output directory
    #[arg(long, env = "PRESAM_OUTPUT_DIR", global = true)]
    out_dir: Option<PathBuf>,

    /// Output format
    #[arg(long, value_enum, global = true)]
    format: Option<FormatArg>,

    /// Overrides the configured seed
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one training configuration
    Run {
        /// TOML run configuration
        #[arg(long)]
        config: PathBuf,
    },
    /// Check the O(1/sqrt(T)) stationarity rate on a noisy quadratic
    RateCheck(RateArgs),
    /// Perturbation directions under low-SNR gradient noise
    Amd(AmdArgs),
    /// SGD against noise-free and noisy SAM on an asymmetric valley
    Valley(ValleyArgs),
    /// Write a synthetic Gaussian-blob dataset as CSV
    Dataset(DatasetArgs),
}

#[derive(Args)]
struct RateArgs {
    #[arg(long, default_value = "sam")]
    variant: String,
    /// Comma-separated horizons
    #[arg(long, value_delimiter = ',', default_value = "100,1000,10000,100000")]
    grid: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    seeds: usize,
    #[arg(long, value_delimiter = ',', default_value = "1,0.5,0.25")]
    curvatures: Vec<f64>,
    #[arg(long, default_value_t = 0.1)]
    noise_variance: f64,
    #[arg(long, default_value_t = 0.5)]
    rho0: f64,
    #[arg(long, default_value_t = 1.0)]
    eta0: f64,
    /// Support size for nsupp
    #[arg(long)]
    support: Option<usize>,
    /// Kept fraction for ssam-mod
    #[arg(long)]
    keep_ratio: Option<f64>,
    /// Period for lazy
    #[arg(long)]
    period: Option<usize>,
}

#[derive(Args)]
struct AmdArgs {
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 0.1)]
    snr: f64,
    /// Use the EMA noise estimate with this coefficient instead of the true variances
    #[arg(long)]
    ema_alpha: Option<f64>,
}

#[derive(Args)]
struct ValleyArgs {
    #[arg(long, default_value_t = 5000)]
    iterations: usize,
    #[arg(long, default_value_t = 20)]
    seeds: usize,
    #[arg(long, default_value_t = 0.5)]
    rho: f64,
    #[arg(long, default_value_t = 0.01)]
    eta: f64,
    #[arg(long, default_value_t = 9.0)]
    noise_variance: f64,
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    x0: f64,
}

#[derive(Args)]
struct DatasetArgs {
    #[arg(long, default_value_t = 200)]
    samples: usize,
    #[arg(long, default_value_t = 2)]
    features: usize,
    #[arg(long, default_value_t = 2)]
    classes: usize,
    #[arg(long, default_value_t = 2.0)]
    separation: f64,
    #[arg(long, default_value_t = 0.0)]
    flip_rate: f64,
}

struct Output {
    path: Option<PathBuf>,
    format: ExportFormat,
}

impl Output {
    /// Flags override the configured path and format, which override the
    /// output directory and `default_format`.
    fn resolve(
        cli: &Cli,
        name: &str,
        default_format: ExportFormat,
        configured_path: Option<&Path>,
        configured_format: Option<ExportFormat>,
    ) -> Self {
        let format = cli
            .format
            .map(ExportFormat::from)
            .or(configured_format)
            .unwrap_or(default_format);
        let path = cli
            .out
            .clone()
            .or_else(|| configured_path.map(Path::to_path_buf))
            .or_else(|| {
                cli.out_dir
                    .as_ref()
                    .map(|d| d.join(format!("{name}.{}", format.extension())))
            });
        Self { path, format }
    }

    fn emit_text(&self, text: &str) -> Result<()> {
        match &self.path {
            Some(p) => {
                write_text(text, p)?;
                info!("wrote {}", p.display());
            }
            None => print!("{text}"),
        }
        Ok(())
    }

    fn emit_json<T: serde::Serialize>(&self, value: &T) -> Result<()> {
        match &self.path {
            Some(p) => {
                write_json(value, p)?;
                info!("wrote {}", p.display());
            }
            None => println!("{}", serde_json::to_string_pretty(value)?),
        }
        Ok(())
    }
}

fn cmd_run(cli: &Cli, config: &Path) -> Result<bool> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let record = run_training(&cfg)?;
    let s = &record.summary;
    eprintln!(
        "{}: {} / {} iterations, {} oracle calls, final loss {}, mean ||grad||^2 {:.6e}",
        s.variant,
        s.iterations_completed,
        s.iterations_requested,
        s.oracle_calls,
        s.final_loss.map_or("non-finite".into(), |l| format!("{l:.6e}")),
        s.mean_grad_norm_sq
    );
    if let Some(reason) = &s.divergence_reason {
        warn!("diverged: {reason}");
    }
    let out = Output::resolve(cli, "run", ExportFormat::Csv, cfg.output.as_deref(), cfg.format);
    match &out.path {
        Some(p) => {
            export_record(&record, p, out.format)?;
            info!("wrote {}", p.display());
        }
        None => match out.format {
            ExportFormat::Csv => {
                print!("{}", presam_core::harness::rows_to_csv_string(&record.rows))
            }
            ExportFormat::Json => println!("{}", serde_json::to_string_pretty(&record)?),
        },
    }
    Ok(true)
}

fn cmd_rate(cli: &Cli, args: &RateArgs) -> Result<bool> {
    let variant: Variant = args.variant.parse()?;
    let mut cfg = RateCheckConfig {
        variant,
        curvatures: args.curvatures.clone(),
        noise_variance: args.noise_variance,
        rho0: args.rho0,
        eta0: args.eta0,
        grid: args.grid.clone(),
        seeds: args.seeds,
        base_seed: cli.seed.unwrap_or(0),
        ..Default::default()
    };
    cfg.hyper.support = args.support;
    cfg.hyper.keep_ratio = args.keep_ratio;
    cfg.hyper.period = args.period;
    let probe = cfg.run_config(cfg.grid.first().copied().unwrap_or(1), 0);
    probe.validate()?;
    let report = rate_check(&cfg)?;
    for p in &report.points {
        eprintln!(
            "T={:>7}  mean ||grad||^2 {:.4e}  mean adv {:.4e}  bound {}",
            p.horizon,
            p.mean_grad_norm_sq,
            p.mean_adv_grad_norm_sq,
            p.adv_bound.map_or("skipped".into(), |b| format!("{b:.4e}"))
        );
    }
    eprintln!(
        "slope {:.4} (threshold {}), adversarial bound {}",
        report.slope,
        report.slope_threshold,
        match report.adv_bound_pass {
            Some(true) => "holds",
            Some(false) => "VIOLATED",
            None => "skipped (unknown smoothness)",
        }
    );
    for v in &report.violations {
        eprintln!("violation: {v}");
    }
    eprintln!("{}", if report.passed { "PASS" } else { "FAIL" });
    Output::resolve(cli, "rate-check", ExportFormat::Json, None, None).emit_json(&report)?;
    Ok(report.passed)
}

fn cmd_amd(cli: &Cli, args: &AmdArgs) -> Result<bool> {
    let out = Output::resolve(cli, "amd", ExportFormat::Json, None, None);
    let cfg = AmdConfig {
        samples: args.samples,
        snr: args.snr,
        seed: cli.seed.unwrap_or(0),
        variance_source: args
            .ema_alpha
            .map_or(VarianceSource::True, |alpha| VarianceSource::Ema { alpha }),
        keep_samples: out.format == ExportFormat::Csv,
        ..Default::default()
    };
    let report = amd_case_study(&cfg)?;
    eprintln!(
        "SNR {} (covariance scale {:.6}), {} samples",
        report.snr, report.covariance_scale, report.samples
    );
    for (name, m) in [("SAM", &report.sam), ("infoSAM", &report.infosam)] {
        eprintln!(
            "{name:>8}: |eps_x|/rho < 0.5 in {:.4} of samples, mean cosine to e_x {:.4}",
            m.small_x_fraction, m.mean_cosine
        );
    }
    let passed = report.sam.small_x_fraction > 0.5 && report.cosine_gap > 0.0;
    eprintln!("{}", if passed { "PASS" } else { "FAIL" });
    match out.format {
        ExportFormat::Csv => out.emit_text(&amd_samples_csv(&report))?,
        ExportFormat::Json => out.emit_json(&report)?,
    }
    Ok(passed)
}

fn cmd_valley(cli: &Cli, args: &ValleyArgs) -> Result<bool> {
    let cfg = ValleyConfig {
        iterations: args.iterations,
        seeds: args.seeds,
        rho: args.rho,
        eta: args.eta,
        noise_variance: args.noise_variance,
        x0: args.x0,
        base_seed: cli.seed.unwrap_or(0),
        keep_trajectories: true,
        ..Default::default()
    };
    let report = valley_case_study(&cfg)?;
    let show = |c: Option<usize>| c.map_or("never".to_string(), |c| c.to_string());
    eprintln!(
        "first crossing to the flat side: SGD {}, SAM {}, noisy SAM median {} over {} seeds",
        show(report.sgd.crossing),
        show(report.sam.crossing),
        show(report.noisy_median_crossing),
        report.noisy_sam.len()
    );
    eprintln!(
        "final |x|: SGD {:.4}, SAM {:.4}; rho=0 SAM matches SGD bitwise: {}",
        report.sgd.final_distance, report.sam.final_distance, report.rho_zero_matches_sgd
    );
    let passed = report.sam_not_slower_than_sgd && report.rho_zero_matches_sgd;
    eprintln!("{}", if passed { "PASS" } else { "FAIL" });
    let out = Output::resolve(cli, "valley", ExportFormat::Json, None, None);
    match out.format {
        ExportFormat::Csv => out.emit_text(&valley_trajectories_csv(&report))?,
        ExportFormat::Json => out.emit_json(&report)?,
    }
    Ok(passed)
}

fn cmd_dataset(cli: &Cli, args: &DatasetArgs) -> Result<bool> {
    let seed = cli.seed.unwrap_or(0);
    let mut data = Dataset::gaussian_blobs(
        args.samples,
        args.features,
        args.classes,
        args.separation,
        seed,
    )?;
    if args.flip_rate > 0.0 {
        let flipped = data.flip_labels(args.flip_rate, args.classes, seed)?;
        eprintln!("flipped {flipped} labels");
    }
    let out = Output::resolve(cli, "dataset", ExportFormat::Csv, None, None);
    let Some(path) = out.path else {
        bail!("dataset needs --out or an output directory");
    };
    data.write_csv(&path)
        .with_context(|| format!("writing {}", path.display()))?;
    eprintln!("wrote {} rows to {}", data.len(), path.display());
    Ok(true)
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
        Command::Run { config } => cmd_run(&cli, config),
        Command::RateCheck(a) => cmd_rate(&cli, a),
        Command::Amd(a) => cmd_amd(&cli, a),
        Command::Valley(a) => cmd_valley(&cli, a),
        Command::Dataset(a) => cmd_dataset(&cli, a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
