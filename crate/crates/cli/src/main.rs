//! `keyrate` command-line tool.
//!
//! Exit codes: 0 success, 1 validation error, 2 I/O error, 3 statistical
//! agreement failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use keyrate::config::{parse_intensity_list, DARK_COUNT_NOTICE};
use keyrate::decoy::{bounds_bracket_check, estimate_vacuum_weak, IntensityMeasurement};
use keyrate::montecarlo::{compare_to_analytic, simulate_decoy_session, simulate_run, RNG_ALGORITHM};
use keyrate::report::{self, SweepMetadata};
use keyrate::sweep::{distance_limit, distance_sweep, evaluate, OptimizerSettings};
use keyrate::{build_yield_table, DeviceConfig, EstimationMode, Probability, RateVariant};
use serde_json::json;

#[derive(Debug, Parser)]
#[command(
    name = "keyrate",
    version,
    about = "Decoy-state BB84 key rates for weak coherent pulses and threshold detectors"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON configuration document; GYS defaults when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output file.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    #[arg(long, global = true, value_name = "U64")]
    pulses: Option<u64>,
    #[arg(long = "length-km", global = true, value_name = "F")]
    length_km: Option<f64>,
    #[arg(long, global = true, value_name = "F")]
    mu: Option<f64>,
    #[arg(long, global = true, value_parser = ["oracle", "decoy"])]
    mode: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Rate breakdown of all four variants at one length and intensity.
    Rate,
    /// Optimized rate versus distance, written as CSV plus a JSON sidecar.
    Sweep {
        #[arg(long = "l-min", default_value_t = 0.0)]
        l_min: f64,
        #[arg(long = "l-max", default_value_t = 180.0)]
        l_max: f64,
        #[arg(long, default_value_t = 2.0)]
        step: f64,
    },
    /// Monte Carlo tally compared against the analytic channel model.
    Simulate {
        /// z-score threshold for agreement.
        #[arg(long, default_value_t = 4.0)]
        sigma: f64,
        /// Misalignment used for the analytic reference only.
        #[arg(long = "reference-e-mis", value_name = "F")]
        reference_e_mis: Option<f64>,
    },
    /// Decoy bounds versus true single-photon parameters.
    DecoyCheck {
        /// Signal, weak and vacuum intensities.
        #[arg(long, default_value = "0.5,0.05,0")]
        intensities: String,
        /// Use noiseless analytic measurements instead of simulation.
        #[arg(long)]
        analytic: bool,
    },
    /// Distance limit of each variant.
    Maxdist {
        #[arg(long = "l-max", default_value_t = 500.0)]
        l_max: f64,
        #[arg(long = "tol-km", default_value_t = 0.1)]
        tol_km: f64,
    },
}

#[derive(Debug)]
enum CliError {
    Validation(String),
    Io { path: PathBuf, source: std::io::Error },
    Statistical(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Io { .. } => 2,
            CliError::Statistical(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "error: {m}"),
            CliError::Io { path, source } => write!(f, "error: {}: {source}", path.display()),
            CliError::Statistical(m) => write!(f, "statistical check failed: {m}"),
        }
    }
}

impl From<keyrate::Error> for CliError {
    fn from(e: keyrate::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

fn load_config(common: &Common) -> CliResult<DeviceConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let bytes = fs::read(path).map_err(|source| CliError::Io {
                path: path.clone(),
                source,
            })?;
            DeviceConfig::from_json_slice(&bytes)
                .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?
        }
        None => DeviceConfig::default(),
    };
    if cfg.dark_count.is_none() && cfg.detector_dark_counts.is_none() {
        eprintln!("{DARK_COUNT_NOTICE}");
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(pulses) = common.pulses {
        cfg.pulses = pulses;
    }
    if let Some(length) = common.length_km {
        cfg.length_km = length;
    }
    if let Some(mu) = common.mu {
        cfg.mu = mu;
    }
    if let Some(mode) = &common.mode {
        cfg.mode = mode.parse::<EstimationMode>()?;
    }
    if cfg.pulses > cfg.max_pulses {
        return Err(CliError::Validation(format!(
            "pulses: {} exceeds max_pulses = {}",
            cfg.pulses, cfg.max_pulses
        )));
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_rate(cfg: &DeviceConfig) -> CliResult<()> {
    let rows = RateVariant::ALL
        .into_iter()
        .map(|v| evaluate(cfg, v, cfg.mu).map(|e| (v, e)))
        .collect::<Result<Vec<_>, _>>()?;
    print!("{}", report::rate_table(cfg, cfg.mu, &rows));
    Ok(())
}

fn cmd_sweep(cfg: &DeviceConfig, out: &Path, l_min: f64, l_max: f64, step: f64) -> CliResult<()> {
    if !(l_min >= 0.0 && l_min <= l_max && l_max.is_finite()) {
        return Err(CliError::Validation(format!(
            "need 0 <= l-min <= l-max, got [{l_min}, {l_max}]"
        )));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(CliError::Validation(format!("step must be > 0, got {step}")));
    }
    let settings = OptimizerSettings::default();
    let lengths = report::length_grid(l_min, l_max, step);
    let result = distance_sweep(cfg, &lengths, &RateVariant::ALL, &settings)?;
    write_file(out, &report::sweep_csv(&result))?;
    let meta = SweepMetadata::new(cfg, (l_min, l_max, step), &settings, &result);
    write_file(&sidecar(out, ".meta.json"), &meta.to_json())?;
    println!(
        "wrote {} rows to {} ({})",
        result.points.len(),
        out.display(),
        report::RATE_UNITS
    );
    Ok(())
}

fn cmd_simulate(cfg: &DeviceConfig, out: &Path, sigma: f64, reference_e_mis: Option<f64>) -> CliResult<()> {
    let tally = simulate_run(cfg, cfg.pulses, cfg.seed)?;
    let mut reference = cfg.clone();
    if let Some(e) = reference_e_mis {
        reference.e_mis = e;
        reference.validate()?;
    }
    let table = build_yield_table(&reference.source(), &reference.link(), &reference.detector());
    let comparison = compare_to_analytic(&tally, &table, sigma);
    let doc = json!({
        "tool": report::TOOL_NAME,
        "version": report::TOOL_VERSION,
        "rng": RNG_ALGORITHM,
        "seed": cfg.seed,
        "config": cfg,
        "reference_e_mis": reference.e_mis,
        "tally": serde_json::from_str::<serde_json::Value>(&tally.to_json()).expect("tally json"),
        "comparison": comparison,
    });
    write_file(out, &serde_json::to_string_pretty(&doc).expect("document serializes"))?;
    print!("{}", report::deviation_table(&comparison));
    if comparison.pass {
        Ok(())
    } else {
        let failed: Vec<&str> = comparison.failures().map(|d| d.quantity.as_str()).collect();
        Err(CliError::Statistical(if comparison.insufficient_statistics {
            "insufficient statistics".into()
        } else {
            format!("exceeds {sigma} sigma on {}", failed.join(", "))
        }))
    }
}

fn cmd_decoy_check(cfg: &DeviceConfig, intensities: &str, analytic: bool) -> CliResult<()> {
    let [mu, nu, vac] = parse_intensity_list(intensities)?;
    let sift = Probability::new(cfg.sift_factor)?;
    let measurements: Vec<IntensityMeasurement> = if analytic {
        [mu, nu, vac]
            .iter()
            .map(|&m| IntensityMeasurement::analytic(m, sift, &cfg.link(), &cfg.detector()))
            .collect()
    } else {
        println!(
            "# {} pulses per intensity, seed {}, rng {}",
            cfg.pulses, cfg.seed, RNG_ALGORITHM
        );
        simulate_decoy_session(cfg, &[mu, nu, vac], cfg.pulses, cfg.seed)?
    };
    let est = estimate_vacuum_weak(&measurements[0], &measurements[1], &measurements[2], sift.get())?;
    let truth = build_yield_table(&cfg.source().with_mu(mu), &cfg.link(), &cfg.detector());
    let bracket = bounds_bracket_check(&est, &truth);
    print!("{}", report::decoy_report(cfg, &est, &bracket));
    if bracket.all_pass() {
        Ok(())
    } else {
        Err(CliError::Statistical(
            "decoy bounds do not bracket the true values".into(),
        ))
    }
}

fn cmd_maxdist(cfg: &DeviceConfig, l_max: f64, tol_km: f64) -> CliResult<()> {
    if !(l_max > 0.0 && tol_km > 0.0) {
        return Err(CliError::Validation("l-max and tol-km must be positive".into()));
    }
    let settings = OptimizerSettings::default();
    let limits = RateVariant::ALL
        .into_iter()
        .map(|v| distance_limit(cfg, v, (0.0, l_max), tol_km, &settings).map(|l| (v, l)))
        .collect::<Result<Vec<_>, _>>()?;
    print!("{}", report::max_distance_table(&limits));
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    let cfg = load_config(&cli.common)?;
    let out = |default: &str| cli.common.out.clone().unwrap_or_else(|| PathBuf::from(default));
    match cli.command {
        Command::Rate => cmd_rate(&cfg),
        Command::Sweep { l_min, l_max, step } => cmd_sweep(&cfg, &out("sweep.csv"), l_min, l_max, step),
        Command::Simulate { sigma, reference_e_mis } => cmd_simulate(&cfg, &out("tally.json"), sigma, reference_e_mis),
        Command::DecoyCheck { intensities, analytic } => cmd_decoy_check(&cfg, &intensities, analytic),
        Command::Maxdist { l_max, tol_km } => cmd_maxdist(&cfg, l_max, tol_km),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
