//! Running a configured experiment end to end and writing its artifacts.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::config::{to_toml_string, ConfigError, ExperimentConfig};
use super::fit::fit_rate;
use super::trace::{TraceError, TraceFile};
use crate::baselines::{centralized_solve, BaselineError};
use crate::dpda::{
    q_certificate, residuals, run, validate_step_sizes, Certificate, CertificateError, RunError,
    RunOptions, StepSizes, Violation,
};
use crate::problem::Instance;

pub const TRACE_FILE: &str = "trace.csv";
pub const METADATA_FILE: &str = "run.json";

/// Slack allowed on `ξ ≤ r̄ ≤ ζ`.
pub const RATE_WINDOW_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("step sizes violate {} condition(s): {}", .0.len(), describe(.0))]
    StepSizes(Vec<Violation>),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Certificate(#[from] CertificateError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ExperimentError {
    /// Whether the failure is a problem with the input rather than with
    /// the computation.
    pub fn is_validation(&self) -> bool {
        match self {
            ExperimentError::Config(ConfigError::Io { .. }) => false,
            ExperimentError::Config(_) | ExperimentError::StepSizes(_) => true,
            ExperimentError::Run(RunError::StepSizeInvalid(_)) => true,
            ExperimentError::Certificate(CertificateError::TooLarge { .. }) => true,
            ExperimentError::Baseline(
                BaselineError::TooLarge(_) | BaselineError::BadGridStep(_),
            ) => true,
            _ => false,
        }
    }
}

fn describe(v: &[Violation]) -> String {
    v.iter()
        .take(5)
        .map(|v| format!("{:?}[{}]: {} < {}", v.condition, v.index, v.lhs, v.rhs))
        .collect::<Vec<_>>()
        .join("; ")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Instance and step sizes ready to run.
pub struct Prepared {
    pub instance: Instance,
    pub steps: StepSizes,
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared, ExperimentError> {
    let instance = cfg.instance()?;
    let steps = cfg.step_sizes(&instance);
    Ok(Prepared { instance, steps })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub sources: usize,
    pub forwarders: usize,
    pub links: usize,
    pub dimension: usize,
    pub steps: StepSizes,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Network and step-size checks without running anything.
pub fn validate_only(cfg: &ExperimentConfig) -> Result<ValidationReport, ExperimentError> {
    let p = prepare(cfg)?;
    let net = &p.instance.net;
    Ok(ValidationReport {
        sources: net.sources().len(),
        forwarders: net.forwarders().len(),
        links: net.link_count(),
        dimension: p.instance.dim(),
        violations: validate_step_sizes(&p.instance, &p.steps)
            .err()
            .unwrap_or_default(),
        steps: p.steps,
    })
}

pub fn certify(cfg: &ExperimentConfig) -> Result<Certificate, ExperimentError> {
    let p = prepare(cfg)?;
    Ok(q_certificate(
        &p.instance,
        &p.steps,
        cfg.tolerances.certificate_max_dim,
    )?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSummary {
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `|utility - objective| / max(|objective|, 1)` at the last round.
    pub relative_gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub iterations: usize,
    pub final_utility: f64,
    pub final_conservation: f64,
    pub final_capacity: f64,
    pub final_rbar: Vec<f64>,
    /// Log-log slope of conservation residual plus capacity distance.
    pub rate_exponent: Option<f64>,
    /// Why no exponent was fitted.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate_note: Option<String>,
    /// Recorded rows after burn-in with some `r̄_s` outside `[ξ_s, ζ_s]`.
    pub rate_window_violations: usize,
    pub nonlocal_reads: Option<usize>,
    pub projection_warnings: usize,
    pub reference: Option<ReferenceSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub config_sha256: String,
    pub seed: u64,
    pub version: String,
    pub metadata: std::collections::BTreeMap<String, String>,
    pub steps: StepSizes,
    pub summary: Summary,
}

pub struct ExperimentOutput {
    pub trace: TraceFile,
    pub summary: Summary,
    pub metadata: RunMetadata,
}

pub fn config_hash(cfg: &ExperimentConfig) -> String {
    hex::encode(Sha256::digest(to_toml_string(cfg).as_bytes()))
}

/// Runs the experiment in memory.
pub fn execute(cfg: &ExperimentConfig) -> Result<ExperimentOutput, ExperimentError> {
    let p = prepare(cfg)?;
    if let Err(v) = validate_step_sizes(&p.instance, &p.steps) {
        return Err(ExperimentError::StepSizes(v));
    }
    let inst = &p.instance;
    let opts = RunOptions {
        order: cfg.run.order,
        record_messages: cfg.run.audit_messages,
        record_every: cfg.run.record_every,
        dykstra: cfg.tolerances.dykstra,
        ..RunOptions::default()
    };
    let (trace, log) = run(inst, &p.steps, None, cfg.run.iterations, &opts)?;
    let last = trace
        .rows
        .last()
        .expect("the final round is always recorded");

    let reference = if cfg.run.reference {
        let (sol, converged) = match centralized_solve(inst, &cfg.tolerances.central) {
            Ok(s) => (s, true),
            Err(BaselineError::NotConverged { partial, .. }) => (*partial, false),
            Err(e) => return Err(e.into()),
        };
        let rows = residuals(inst, &trace, &sol.x).map_err(RunError::from)?;
        let gap = rows.last().map_or(f64::NAN, |r| r.utility_gap);
        Some(ReferenceSummary {
            objective: sol.objective,
            iterations: sol.iterations,
            converged,
            relative_gap: gap / sol.objective.abs().max(1.0),
        })
    } else {
        None
    };

    let file = TraceFile::from_rows(inst, &trace.rows);
    let burn = cfg.tolerances.burn_in;
    let (rate_exponent, rate_note) = match fit_rate(&file.ks(), &file.residuals(), burn) {
        Ok(s) => (Some(s), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let skip = ((file.records.len() as f64) * burn).ceil() as usize;
    let rate_window_violations = file
        .records
        .iter()
        .skip(skip)
        .filter(|r| {
            r.rbar
                .iter()
                .zip(&inst.utilities)
                .any(|(&v, u)| v < u.xi - RATE_WINDOW_TOL || v > u.zeta + RATE_WINDOW_TOL)
        })
        .count();

    let summary = Summary {
        iterations: cfg.run.iterations,
        final_utility: last.utility,
        final_conservation: last.conservation,
        final_capacity: last.capacity,
        final_rbar: last.rbar.clone(),
        rate_exponent,
        rate_note,
        rate_window_violations,
        nonlocal_reads: cfg.run.audit_messages.then_some(log.nonlocal),
        projection_warnings: trace.projection_warnings,
        reference,
    };
    let metadata = RunMetadata {
        config_sha256: config_hash(cfg),
        seed: cfg.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        metadata: cfg.metadata.clone(),
        steps: p.steps.clone(),
        summary: summary.clone(),
    };
    Ok(ExperimentOutput {
        trace: file,
        summary,
        metadata,
    })
}

/// Runs the experiment and writes `trace.csv` and `run.json` into `out`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<Summary, ExperimentError> {
    let result = execute(cfg)?;
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    let trace_path = out.join(TRACE_FILE);
    let f = File::create(&trace_path).map_err(io_err(&trace_path))?;
    result.trace.write(BufWriter::new(f))?;
    let meta_path = out.join(METADATA_FILE);
    let json = serde_json::to_string_pretty(&result.metadata).expect("metadata serializes");
    std::fs::write(&meta_path, json + "\n").map_err(io_err(&meta_path))?;
    Ok(result.summary)
}
