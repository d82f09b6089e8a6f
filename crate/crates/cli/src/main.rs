use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use selfnorm::experiments::{
    self, run_bound_report, run_concentration_suite, run_decompose, run_kernel_check, run_ratio_curve, run_tail,
    to_csv, with_workers, ExperimentConfig, Report, StatisticKind,
};
use selfnorm::Error;

#[derive(Parser, Debug)]
#[command(
    name = "selfnorm",
    version,
    about = "Self-normalized and Studentized U-statistic experiments"
)]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed; overrides SELFNORM_SEED and the config.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Worker threads; overrides the config.
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,
    /// Write `<subcommand>.<format>` into DIR instead of stdout.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<OutFormat>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Tail ratios P(T_n ≥ x)/(1 − Φ(x)) with intervals and envelopes.
    RatioCurve,
    /// δ, L, I, side conditions, envelopes and fitted constants per (n, x).
    Bounds,
    /// Raw plain and tilted tail estimates.
    Tail,
    /// The concentration-inequality suite; exits 3 if any verdict fails.
    Concentration,
    /// Kernel moments and domination-condition certificate.
    KernelCheck,
    /// Hoeffding decomposition of one sample.
    Decompose,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::RatioCurve => "ratio-curve",
            Command::Bounds => "bounds",
            Command::Tail => "tail",
            Command::Concentration => "concentration",
            Command::KernelCheck => "kernel-check",
            Command::Decompose => "decompose",
        }
    }

    fn supports_csv(self) -> bool {
        matches!(self, Command::RatioCurve | Command::Tail)
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum OutFormat {
    Csv,
    Json,
}

enum Failure {
    Config(String),
    Verdict(String),
    Other(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Config(e.to_string()),
            other => Failure::Other(other.to_string()),
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None if cli.command == Command::Concentration => {
            ExperimentConfig::new(StatisticKind::SelfNormalizedSum, "normal", None, vec![10], vec![1.0])
        }
        None => return Err(Failure::Config(format!("`{}` needs --config PATH", cli.command.name()))),
    };
    cfg.apply_seed_env()?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn resolve_format(cli: &Cli, cfg: &ExperimentConfig) -> Result<OutFormat, Failure> {
    let from_cfg = cfg.output.format.map(|f| match f {
        experiments::Format::Csv => OutFormat::Csv,
        experiments::Format::Json => OutFormat::Json,
    });
    let default = if cli.command.supports_csv() {
        OutFormat::Csv
    } else {
        OutFormat::Json
    };
    let format = cli.format.or(from_cfg).unwrap_or(default);
    if format == OutFormat::Csv && !cli.command.supports_csv() {
        return Err(Failure::Config(format!("`{}` writes JSON only", cli.command.name())));
    }
    Ok(format)
}

/// Output text and whether every verdict held.
fn execute(cli: &Cli, cfg: &ExperimentConfig, format: OutFormat) -> Result<(String, bool), Error> {
    let started = Instant::now();
    let none = BTreeMap::new;
    Ok(match cli.command {
        Command::RatioCurve => {
            let curve = run_ratio_curve(cfg)?;
            match format {
                OutFormat::Csv => (curve.to_csv()?, true),
                OutFormat::Json => {
                    let (fitted, verdicts) = (curve.fitted.clone(), curve.verdicts());
                    (Report::new(cfg, curve, fitted, verdicts, started).to_json()?, true)
                }
            }
        }
        Command::Tail => {
            let rows = run_tail(cfg)?;
            match format {
                OutFormat::Csv => (to_csv(&rows)?, true),
                OutFormat::Json => (Report::new(cfg, rows, vec![], none(), started).to_json()?, true),
            }
        }
        Command::Bounds => {
            let set = run_bound_report(cfg)?;
            let verdicts = set.verdicts();
            (
                Report::new(cfg, &set.rows, set.fitted.clone(), verdicts, started).to_json()?,
                true,
            )
        }
        Command::Concentration => {
            let suite = run_concentration_suite(cfg)?;
            let mut verdicts: BTreeMap<String, bool> =
                suite.suite.iter().map(|r| (r.label.clone(), r.verdict)).collect();
            verdicts.insert("empty_band".into(), suite.empty_band.verdict);
            let ok = suite.all_hold;
            (Report::new(cfg, suite, vec![], verdicts, started).to_json()?, ok)
        }
        Command::KernelCheck => {
            let r = run_kernel_check(cfg)?;
            let mut verdicts = none();
            if let Some(c) = &r.certificate {
                verdicts.insert("no_violations".into(), c.violations == 0);
            }
            (Report::new(cfg, r, vec![], verdicts, started).to_json()?, true)
        }
        Command::Decompose => {
            let r = run_decompose(cfg)?;
            let mut verdicts = none();
            verdicts.insert("identities_hold".into(), r.residuals.iter().all(|&v| v < 1e-9));
            (Report::new(cfg, r, vec![], verdicts, started).to_json()?, true)
        }
    })
}

fn write_output(dir: Option<&Path>, name: &str, format: OutFormat, text: &str) -> Result<(), Failure> {
    match dir {
        Some(dir) => {
            let ext = if format == OutFormat::Csv { "csv" } else { "json" };
            std::fs::create_dir_all(dir).map_err(|e| Failure::Other(format!("{}: {e}", dir.display())))?;
            let path = dir.join(format!("{name}.{ext}"));
            std::fs::write(&path, text).map_err(|e| Failure::Other(format!("{}: {e}", path.display())))?;
            eprintln!("wrote {}", path.display());
        }
        None => {
            print!("{text}");
            if !text.ends_with('\n') {
                println!();
            }
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let cfg = load_config(cli)?;
    let format = resolve_format(cli, &cfg)?;
    let (text, ok) = with_workers(cfg.workers, || execute(cli, &cfg, format))??;
    let dir = cli.out.as_deref().or(cfg.output.dir.as_deref());
    write_output(dir, cli.command.name(), format, &text)?;
    if !ok {
        return Err(Failure::Verdict(format!(
            "`{}`: at least one verdict failed",
            cli.command.name()
        )));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Verdict(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Other(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
