//! Subcommand execution and run-directory layout.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nonlocal_spde::bounds::{compute_bounds, BoundsInputs, BoundsReport};
use nonlocal_spde::ensemble::{run_ensemble, write_jsonl, write_stats_csv, EnsembleConfig, EnsembleStats};
use nonlocal_spde::integrator::{integrate_path, PathRecord, StepperConfig};
use nonlocal_spde::noise::NoiseModel;
use nonlocal_spde::problem::validate_growth_conditions;
use nonlocal_spde::spectral::DEFAULT_TOLERANCE;
use nonlocal_spde::verify::{
    check_boundary_ratio, check_comparison_positivity, check_hopf_sign, check_max_principle, check_psi_identity,
    check_theta_inequality, render_table, CheckReport,
};
use nonlocal_spde::Setup;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ConfigError, Psi0Source, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Eigen,
    Sim,
    Ensemble,
    Bounds,
    Verify,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Self::Eigen => "eigen",
            Self::Sim => "sim",
            Self::Ensemble => "ensemble",
            Self::Bounds => "bounds",
            Self::Verify => "verify",
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Run(nonlocal_spde::Error),
    Io(String),
    /// Names of the failing checks and the rendered table.
    ChecksFailed(Vec<String>, String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(e) => write!(f, "{e}"),
            Self::Run(e) => write!(f, "{e}"),
            Self::Io(e) => write!(f, "{e}"),
            Self::ChecksFailed(names, _) => write!(f, "checks failed: {}", names.join(", ")),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        Self::Config(e)
    }
}

impl From<nonlocal_spde::Error> for CliError {
    fn from(e: nonlocal_spde::Error) -> Self {
        Self::Run(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

impl CliError {
    /// Machine-readable form printed on stderr.
    pub fn to_json(&self) -> Value {
        let (kind, key) = match self {
            Self::Config(e) => ("config", Some(e.key.clone()).filter(|k| !k.is_empty())),
            Self::Run(_) => ("run", None),
            Self::Io(_) => ("io", None),
            Self::ChecksFailed(..) => ("checks_failed", None),
        };
        let mut err = json!({ "kind": kind, "message": self.to_string() });
        if let Some(k) = key {
            err["key"] = json!(k);
        }
        if let Self::ChecksFailed(names, _) = self {
            err["checks"] = json!(names);
        }
        json!({ "error": err })
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            _ => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Outcome of a successful subcommand.
pub struct RunOutput {
    pub dir: PathBuf,
    /// Human-readable summary for stdout.
    pub summary: String,
}

struct RunDir {
    path: PathBuf,
    files: Vec<String>,
}

impl RunDir {
    fn create(cfg: &RunConfig) -> CliResult<Self> {
        let path = Path::new(&cfg.output.dir).join(cfg.run_id());
        fs::create_dir_all(&path)?;
        Ok(Self { path, files: Vec::new() })
    }

    fn writer(&mut self, name: &str) -> CliResult<BufWriter<File>> {
        self.files.push(name.to_string());
        Ok(BufWriter::new(File::create(self.path.join(name))?))
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let mut w = self.writer(name)?;
        serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Io(e.to_string()))?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    fn finish(mut self, cfg: &RunConfig, command: Command, setup: &Setup, summary: Value) -> CliResult<PathBuf> {
        let mut files = self.files.clone();
        files.push("manifest.json".into());
        let noise = match &setup.noise {
            NoiseModel::Kl(kl) => json!({
                "model": "kl",
                "truncation": kl.truncation(),
                "trace": kl.trace,
                "captured": kl.captured,
                "clipped_mass": kl.clipped_mass,
            }),
            NoiseModel::Coordinate { coefficients } => json!({ "model": "coordinate", "coefficients": coefficients }),
            NoiseModel::Off => json!({ "model": "off" }),
        };
        let manifest = json!({
            "tool": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "command": command.name(),
            "run_id": cfg.run_id(),
            "config": cfg.canonical(),
            "eigen": {
                "lambda1": setup.eigen.value,
                "iterations": setup.eigen.iterations,
                "residual": setup.eigen.residual,
            },
            "noise": noise,
            "files": files,
            "summary": summary,
        });
        self.json("manifest.json", &manifest)?;
        Ok(self.path)
    }
}

fn setup(cfg: &RunConfig) -> CliResult<Setup> {
    Ok(Setup::new(cfg.problem.clone(), &cfg.noise, DEFAULT_TOLERANCE)?)
}

fn ensemble_config(cfg: &RunConfig) -> EnsembleConfig {
    EnsembleConfig {
        n_paths: cfg.ensemble.n_paths,
        master_seed: cfg.ensemble.master_seed,
        workers: cfg.ensemble.workers,
        checkpoints: cfg.checkpoints(),
    }
}

fn write_records(dir: &mut RunDir, records: &[PathRecord]) -> CliResult<()> {
    let mut w = dir.writer("paths.jsonl")?;
    write_jsonl(records, &mut w)?;
    w.flush()?;
    Ok(())
}

fn write_stats(dir: &mut RunDir, stats: &EnsembleStats) -> CliResult<()> {
    let mut w = dir.writer("stats.csv")?;
    write_stats_csv(stats, &mut w)?;
    w.flush()?;
    Ok(())
}

fn stats_summary(stats: &EnsembleStats) -> Value {
    json!({
        "n_paths": stats.n_paths,
        "n_blown_up": stats.n_blown_up,
        "n_failed": stats.n_failed,
        "t_obs_quantiles": stats.t_obs_quantiles,
    })
}

pub fn bounds_report(cfg: &RunConfig, s: &Setup) -> CliResult<BoundsReport> {
    let psi0 = match cfg.bounds.psi0 {
        Psi0Source::Initial => s.psi0()?,
        Psi0Source::Value(v) => v,
    };
    let q1 = match &s.noise {
        NoiseModel::Kl(_) => Some(s.noise.estimate_q1(&s.grid)?),
        _ => None,
    };
    let inputs = BoundsInputs {
        psi0,
        delta: cfg.bounds.delta,
        ell: cfg.bounds.ell,
        theta0: Some(cfg.bounds.theta0.unwrap_or(psi0 * psi0)),
        q1,
    };
    let p = &cfg.problem;
    Ok(compute_bounds(&p.f, p.lambda, p.q, p.envelope.as_ref(), &s.grid, &s.eigen, &inputs)?)
}

fn failed_report(name: &str, err: nonlocal_spde::Error) -> CheckReport {
    CheckReport {
        name: name.into(),
        passed: false,
        worst_margin: f64::NAN,
        tolerance: f64::NAN,
        location: None,
        evaluations: 0,
        note: err.to_string(),
    }
}

fn run_checks(cfg: &RunConfig, s: &Setup, dir: &mut RunDir) -> CliResult<(Vec<CheckReport>, EnsembleStats)> {
    let stepper = StepperConfig { keep_fields: true, ..cfg.stepper.clone() };
    let (stats, records) = run_ensemble(s, &stepper, &ensemble_config(cfg))?;
    write_stats(dir, &stats)?;
    let v = &cfg.verify;
    let h = s.grid.h_min();
    let dt0 = cfg.stepper.dt0;
    let t_eval = v.t_eval.unwrap_or(0.5 * cfg.problem.t_max);
    let mut reports = Vec::new();
    for name in &v.checks {
        let r = match name.as_str() {
            "max_principle" => check_max_principle(&records, &s.grid, v.c_tol * (h * h + dt0)),
            "hopf_sign" => check_hopf_sign(&records, &s.grid, t_eval, v.tol_h),
            "comparison_positivity" => check_comparison_positivity(
                s,
                &cfg.stepper,
                &cfg.checkpoints(),
                cfg.ensemble.master_seed,
                v.n_pairs,
                v.shift,
            ),
            "boundary_ratio" => {
                check_boundary_ratio(&records, &s.grid, &cfg.problem.f, cfg.bounds.delta, cfg.bounds.ell)
            }
            "psi_identity" => check_psi_identity(&stats, v.allowance_dt * dt0),
            "theta_inequality" => check_theta_inequality(&stats, 0.0),
            other => unreachable!("check {other} passed validation"),
        };
        reports.push(r.unwrap_or_else(|e| failed_report(name, e)));
    }
    Ok((reports, stats))
}

pub fn dispatch(command: Command, cfg: &RunConfig, path_index: u64) -> CliResult<RunOutput> {
    let s = setup(cfg)?;
    let mut dir = RunDir::create(cfg)?;
    let (summary_json, summary) = match command {
        Command::Eigen => {
            let mut w = dir.writer("eigen.csv")?;
            s.eigen.write_csv(&mut w, &s.grid)?;
            w.flush()?;
            if let NoiseModel::Kl(kl) = &s.noise {
                let mut w = dir.writer("spectrum.csv")?;
                kl.write_spectrum_csv(&mut w)?;
                w.flush()?;
            }
            (
                json!({ "lambda1": s.eigen.value }),
                format!("lambda1 = {:.10e} ({} iterations)", s.eigen.value, s.eigen.iterations),
            )
        }
        Command::Sim => {
            let rec = integrate_path(&s, &cfg.stepper, &cfg.checkpoints(), path_index, cfg.ensemble.master_seed)?;
            write_records(&mut dir, std::slice::from_ref(&rec))?;
            (
                json!({ "path_index": path_index, "termination": rec.termination, "t_obs": rec.t_obs }),
                format!(
                    "path {path_index}: {:?} at t = {}, steps = {}, T_obs = {:?}",
                    rec.termination, rec.final_t, rec.steps, rec.t_obs
                ),
            )
        }
        Command::Ensemble => {
            let (stats, records) = run_ensemble(&s, &cfg.stepper, &ensemble_config(cfg))?;
            write_stats(&mut dir, &stats)?;
            write_records(&mut dir, &records)?;
            let summary = format!(
                "{} paths, {} blown up, {} failed",
                stats.n_paths, stats.n_blown_up, stats.n_failed
            );
            (stats_summary(&stats), summary)
        }
        Command::Bounds => {
            let report = bounds_report(cfg, &s)?;
            let [lo, hi] = cfg.bounds.growth_range;
            let growth = validate_growth_conditions(&cfg.problem, lo, hi, 400)?;
            dir.json("bounds.json", &report)?;
            dir.json("growth.json", &growth)?;
            (json!({ "growth_conditions_passed": growth.all_passed() }), report.to_table())
        }
        Command::Verify => {
            let (reports, stats) = run_checks(cfg, &s, &mut dir)?;
            dir.json("checks.json", &reports)?;
            let failed: Vec<String> = reports.iter().filter(|r| !r.passed).map(|r| r.name.clone()).collect();
            let mut summary = stats_summary(&stats);
            summary["failed_checks"] = json!(failed);
            let table = render_table(&reports);
            let path = dir.finish(cfg, command, &s, summary)?;
            if !failed.is_empty() {
                return Err(CliError::ChecksFailed(failed, table));
            }
            return Ok(RunOutput { dir: path, summary: table });
        }
    };
    let path = dir.finish(cfg, command, &s, summary_json)?;
    Ok(RunOutput { dir: path, summary })
}
