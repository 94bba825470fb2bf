use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use repcn_cli::config::{self, ExperimentKind, Preset, RunConfig, Suite};
use repcn_cli::{diagnose_trace, parse_config_str, run_experiment, run_suites, Manifest};

#[derive(Parser)]
#[command(name = "repcn", version, about = "Replica-exchange pCN Langevin sampling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Gradient,
    Swap,
    StrongError,
    All,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        /// TOML configuration file.
        #[arg(required_unless_present = "from_manifest", conflicts_with = "from_manifest")]
        config: Option<PathBuf>,
        /// Reproduce the run recorded in a manifest.json.
        #[arg(long)]
        from_manifest: Option<PathBuf>,
        /// Output directory; overrides the config and REPCNLD_OUTPUT_DIR.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Run the self-check suites; exits nonzero if any fails.
    Verify {
        #[arg(long, value_enum, default_value = "all")]
        suite: SuiteArg,
        /// Optional verify config overriding the suite defaults.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Recompute chain diagnostics from a trace.csv.
    Diagnose {
        trace: PathBuf,
        #[arg(long, default_value_t = 0)]
        burn_in: usize,
        #[arg(long, default_value_t = 200)]
        max_lag: usize,
        /// Directory for acf.csv, ess.csv and kde_grid.csv; defaults to the
        /// trace's directory.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
}

fn load_run_config(config: Option<PathBuf>, from_manifest: Option<PathBuf>) -> Result<(RunConfig, Option<String>)> {
    if let Some(path) = from_manifest {
        let m = Manifest::read(&path)?;
        let mut c = m.config;
        if let Ok(dir) = std::env::var(config::OUTPUT_DIR_ENV) {
            c.output_dir = dir.into();
        }
        let errors = c.violations();
        anyhow::ensure!(errors.is_empty(), config::ConfigError::Invalid(errors));
        return Ok((c, m.config_source));
    }
    let path = config.context("a config path is required")?;
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    Ok((parse_config_str(&text)?, Some(text)))
}

fn real_main(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run { config, from_manifest, output_dir } => {
            let (mut cfg, source) = load_run_config(config, from_manifest)?;
            if let Some(d) = output_dir {
                cfg.output_dir = d;
            }
            let outcome = run_experiment(&cfg, source)?;
            println!("{}", serde_json::to_string_pretty(&outcome.summary)?);
            eprintln!("artifacts written to {}", outcome.dir.display());
            Ok(outcome.summary.passed)
        }
        Command::Verify { suite, config } => {
            let mut settings = match config {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
                    parse_config_str(&text)?.verify
                }
                None => RunConfig::preset(ExperimentKind::Verify, Preset::Full).verify,
            };
            settings.suites = match suite {
                SuiteArg::Gradient => vec![Suite::Gradient],
                SuiteArg::Swap => vec![Suite::Swap],
                SuiteArg::StrongError => vec![Suite::StrongError],
                SuiteArg::All => settings.suites,
            };
            let reports = run_suites(&settings)?;
            for r in &reports {
                println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.summary);
            }
            Ok(reports.iter().all(|r| r.passed))
        }
        Command::Diagnose { trace, burn_in, max_lag, output_dir } => {
            let out = output_dir.unwrap_or_else(|| trace.parent().map(PathBuf::from).unwrap_or_default());
            let d = diagnose_trace(&trace, burn_in, max_lag, &out)?;
            println!("{}", serde_json::to_string_pretty(&d)?);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match real_main(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
