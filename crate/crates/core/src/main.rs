use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use singular_lab::experiment::{
    run_convergence_study, run_green_verify, run_smallness, run_solve, run_uniqueness, write_artifacts, Diagnostic,
    ExperimentConfig, RunArtifacts, RunReport, RunStatus,
};
use singular_lab::Result;

#[derive(Parser, Debug)]
#[command(name = "singular-lab", version, about = "Experiments for singular semilinear Dirichlet problems")]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output-dir` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Grid spacing; overrides `domain.h` from the config.
    #[arg(long, global = true, value_name = "H")]
    resolution_override: Option<f64>,
    /// Seed for randomized corpora; overrides `seed` from the config.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Print the available diagnostics and exit.
    #[arg(long, global = true)]
    list_diagnostics: bool,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Regularized scheme plus the diagnostics named in the config.
    #[command(alias = "run")]
    Solve,
    /// Discrete Green function identities and two-sided bounds.
    GreenVerify,
    /// Manufactured solution at h and h/2 with the observed order.
    ConvergenceStudy,
    /// Limits from several starts and schedules.
    UniquenessProbe,
    /// Smallness condition in both variants.
    SmallnessCheck,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::GreenVerify => "green-verify",
            Command::ConvergenceStudy => "convergence-study",
            Command::UniquenessProbe => "uniqueness-probe",
            Command::SmallnessCheck => "smallness-check",
        }
    }
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| singular_lab::Error::Config { field: "--config".into(), message: "a config file is required".into() })?;
    let mut config = ExperimentConfig::from_path(path)?;
    if let Some(h) = common.resolution_override {
        config.domain.h = h;
    }
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = &common.out {
        config.output_dir = out.clone();
    }
    config.validate()?;
    Ok(config)
}

fn execute(command: Command, config: &ExperimentConfig, report: &mut RunReport) -> Result<RunArtifacts> {
    let h = config.domain.h;
    match command {
        Command::Solve => run_solve(config, h, report),
        Command::GreenVerify => run_green_verify(config, h, report),
        Command::ConvergenceStudy => run_convergence_study(config, h, report),
        Command::UniquenessProbe => run_uniqueness(config, h, report),
        Command::SmallnessCheck => run_smallness(config, h, report),
    }
}

fn print_summary(report: &RunReport) {
    if let Some(s) = &report.scheme {
        let last = s.last();
        println!(
            "scheme: {} levels, n = {}, min u = {:.6e}, max u = {:.6e}, monotone = {}, positive = {}",
            s.levels.len(),
            last.n,
            last.min_u,
            last.max_u,
            s.monotone,
            s.positive
        );
    }
    for (key, value) in &report.summary {
        println!("{key}: {value}");
    }
    for (name, cert) in &report.diagnostics.entries {
        println!("{name}: {}", if cert.passed { "PASS" } else { "FAIL" });
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if cli.common.list_diagnostics {
        for d in Diagnostic::ALL {
            println!("{:<24} {}", d.name(), d.description());
        }
        return ExitCode::SUCCESS;
    }
    let command = cli.command.unwrap_or(Command::Solve);
    let fallback_dir = cli.common.out.clone().unwrap_or_else(|| PathBuf::from("out"));

    let config = match load(&cli.common) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            let mut report = RunReport::new(command.name(), None);
            report.fail(&e);
            if let Err(w) = report.write_json(&fallback_dir) {
                eprintln!("could not write report: {w}");
            }
            return ExitCode::from(report.status.exit_code() as u8);
        }
    };

    let dir = config.output_dir.clone();
    let mut report = RunReport::new(command.name(), Some(config.clone()));
    info!("{} at h = {}", command.name(), config.domain.h);
    match execute(command, &config, &mut report) {
        Ok(artifacts) => {
            report.finish_certifications();
            if let Err(e) = write_artifacts(&dir, &artifacts) {
                eprintln!("could not write artifacts: {e}");
                report.fail(&e);
            }
        }
        Err(e) => {
            eprintln!("{} failed: {e}", command.name());
            report.fail(&e);
        }
    }
    print_summary(&report);
    if let Err(e) = report.write_json(&dir) {
        eprintln!("could not write report: {e}");
        return ExitCode::from(RunStatus::SolverFailure.exit_code() as u8);
    }
    ExitCode::from(report.status.exit_code() as u8)
}
