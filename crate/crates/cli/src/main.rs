use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ncnum::baselines::{brute_force_nonconvex, centralized_solve, relaxation_gap, BaselineError};
use ncnum::harness::{
    builtin_fig2_scenario, certify, load_config, run_experiment, validate_only, write_config,
    ConfigError, ExperimentConfig, ExperimentError, Summary,
};

/// Eigenvalues above `-CERT_TOL` count as non-negative.
const CERT_TOL: f64 = 1e-8;

#[derive(Parser)]
#[command(
    name = "ncnum",
    version,
    about = "Distributed non-concave network utility maximization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the distributed algorithm and write trace.csv and run.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Number of rounds; overrides the config.
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Check the network and step sizes, then stop.
        #[arg(long)]
        validate_only: bool,
    },
    /// Check that the step sizes make the saddle-point matrix positive semidefinite.
    Certify {
        #[arg(long)]
        config: PathBuf,
    },
    /// Solve the relaxation centrally and, on tiny instances, by grid search.
    Baseline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        grid_step: f64,
    },
    /// Write a built-in scenario as a config file.
    Scenario {
        name: ScenarioName,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ScenarioName {
    Fig2,
}

enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Failure {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Failure {
        ExperimentError::from(e).into()
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            iters,
            out,
            seed,
            validate_only,
        } => cmd_run(&config, iters, out, seed, validate_only),
        Command::Certify { config } => cmd_certify(&config),
        Command::Baseline { config, grid_step } => cmd_baseline(&config, grid_step),
        Command::Scenario { name, out } => cmd_scenario(name, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn cmd_run(
    path: &Path,
    iters: Option<usize>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    only_validate: bool,
) -> Result<(), Failure> {
    let mut cfg = load_config(path)?;
    if let Some(k) = iters {
        if k == 0 {
            return Err(Failure::Validation("--iters must be at least 1".into()));
        }
        cfg.run.iterations = k;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }

    if only_validate {
        let report = validate_only(&cfg)?;
        println!(
            "network: {} sources, {} forwarding nodes, {} links, {} variables",
            report.sources, report.forwarders, report.links, report.dimension
        );
        if report.is_valid() {
            println!("step sizes: ok");
            return Ok(());
        }
        for v in &report.violations {
            println!(
                "violation: {:?}[{}]: {} < {}",
                v.condition, v.index, v.lhs, v.rhs
            );
        }
        return Err(Failure::Validation(format!(
            "{} step-size condition(s) violated",
            report.violations.len()
        )));
    }

    let out = out
        .or_else(|| cfg.run.output.clone().map(|o| cfg.base_dir.join(o)))
        .ok_or_else(|| {
            Failure::Validation("no output directory: pass --out or set run.output".into())
        })?;
    let summary = run_experiment(&cfg, &out)?;
    print_summary(&summary);
    println!("wrote {}", out.display());
    Ok(())
}

fn print_summary(s: &Summary) {
    println!("rounds: {}", s.iterations);
    println!("utility: {}", s.final_utility);
    println!("conservation residual: {:e}", s.final_conservation);
    println!("capacity distance: {:e}", s.final_capacity);
    match (s.rate_exponent, &s.rate_note) {
        (Some(e), _) => println!("rate exponent: {e:.3}"),
        (None, Some(note)) => println!("rate exponent: n/a ({note})"),
        (None, None) => {}
    }
    if s.rate_window_violations > 0 {
        println!("rate window violations: {}", s.rate_window_violations);
    }
    if let Some(n) = s.nonlocal_reads {
        println!("non-neighbor reads: {n}");
    }
    if s.projection_warnings > 0 {
        println!("projection warnings: {}", s.projection_warnings);
    }
    if let Some(r) = &s.reference {
        let status = if r.converged { "" } else { " (not converged)" };
        println!("reference objective: {}{status}", r.objective);
        println!("relative gap: {:e}", r.relative_gap);
    }
}

fn cmd_certify(path: &Path) -> Result<(), Failure> {
    let cfg = load_config(path)?;
    let cert = certify(&cfg)?;
    println!("dimension: {}", cert.dimension);
    println!("min eigenvalue: {:e}", cert.min_eigenvalue);
    println!("schur min eigenvalue: {:e}", cert.schur_min_eigenvalue);
    if cert.is_psd(CERT_TOL) {
        println!("certificate: positive semidefinite");
        Ok(())
    } else {
        println!("certificate: indefinite");
        Err(Failure::Validation(
            "step sizes do not certify convergence".into(),
        ))
    }
}

fn cmd_baseline(path: &Path, h: f64) -> Result<(), Failure> {
    let cfg: ExperimentConfig = load_config(path)?;
    let inst = cfg.instance()?;
    let reference = match centralized_solve(&inst, &cfg.tolerances.central) {
        Ok(r) => r,
        Err(BaselineError::NotConverged { partial, .. }) => {
            println!("warning: centralized solver did not converge");
            *partial
        }
        Err(e) => return Err(ExperimentError::from(e).into()),
    };
    println!("relaxation objective: {}", reference.objective);
    println!("relaxation iterations: {}", reference.iterations);
    match brute_force_nonconvex(&inst, h) {
        Ok(oracle) => {
            let gap = relaxation_gap(&reference, &oracle, 1e-6);
            println!(
                "grid objective: {} (h = {h}, {} points)",
                oracle.objective, oracle.evaluated
            );
            println!("grid rates: {:?}", oracle.rates);
            println!("gap: {}", gap.gap);
            println!("upper bound holds: {}", gap.upper_bound_holds);
            Ok(())
        }
        Err(BaselineError::TooLarge(why)) => {
            println!("grid search skipped: {why}");
            Ok(())
        }
        Err(e) => Err(ExperimentError::from(e).into()),
    }
}

fn cmd_scenario(name: ScenarioName, out: &Path) -> Result<(), Failure> {
    let cfg = match name {
        ScenarioName::Fig2 => builtin_fig2_scenario(),
    };
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)
            .map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))?;
    }
    write_config(&cfg, out).map_err(|e| Failure::Runtime(format!("{}: {e}", out.display())))?;
    println!("wrote {}", out.display());
    Ok(())
}
