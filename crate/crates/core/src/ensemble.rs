//! Monte Carlo over independent paths and censored moment estimation.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::integrator::{integrate_path, validate_checkpoints, PathRecord, StepperConfig, Termination};
use crate::setup::Setup;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub n_paths: usize,
    pub master_seed: u64,
    pub workers: usize,
    pub checkpoints: Vec<f64>,
}

/// Estimates at one checkpoint. Means and standard errors run over the paths
/// still alive there.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckpointStats {
    pub t: f64,
    pub alive: usize,
    pub blown_up: usize,
    pub blown_up_fraction: f64,
    /// No path alive: every estimate below is absent.
    pub censored: bool,
    pub psi: Option<f64>,
    pub psi_se: Option<f64>,
    pub theta: Option<f64>,
    pub theta_se: Option<f64>,
    pub l2_mean: Option<f64>,
    pub l2_se: Option<f64>,
    pub sup_mean: Option<f64>,
    pub sup_se: Option<f64>,
    pub kf_phi_mean: Option<f64>,
    pub kf_phi_se: Option<f64>,
    /// Mean over `[t_{k−1}, t_{k+1}]` of `(Δû + λ₁∫û − λ∫K∫fφ₁) / Δt`.
    pub psi_residual: Option<f64>,
    pub psi_residual_se: Option<f64>,
    /// Mean over `[t_{k−1}, t_{k+1}]` of `(Δ(û²) + 2λ₁∫û²) / Δt`.
    pub theta_residual: Option<f64>,
    pub theta_residual_se: Option<f64>,
    /// Paths entering the residual windows (alive at `t_{k+1}`).
    pub residual_paths: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleStats {
    pub n_paths: usize,
    pub n_blown_up: usize,
    pub n_failed: usize,
    /// Min, lower quartile, median, upper quartile and max of `T_obs`.
    pub t_obs_quantiles: Option<[f64; 5]>,
    pub checkpoints: Vec<CheckpointStats>,
}

/// Sample mean and its standard error (`0` for a single sample).
pub fn mean_se(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return Some((mean, 0.0));
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some((mean, (var / n).sqrt()))
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Censored cross-path moments; `records` must be in path-index order for
/// a reproducible reduction.
pub fn estimate_moments(records: &[PathRecord], checkpoints: &[f64], lambda1: f64, lambda: f64) -> EnsembleStats {
    let failed = |r: &PathRecord| r.termination == Termination::NumericalFailure;
    let split = |xs: Vec<f64>| mean_se(&xs).map_or((None, None), |(m, s)| (Some(m), Some(s)));
    let mut rows = Vec::with_capacity(checkpoints.len());
    for (k, &t) in checkpoints.iter().enumerate() {
        let alive: Vec<&PathRecord> = records.iter().filter(|r| r.len() > k).collect();
        let blown_up = records.iter().filter(|r| r.blow_up && r.len() <= k).count();
        let (psi, psi_se) = split(alive.iter().map(|r| r.uhat[k]).collect());
        let (theta, theta_se) = split(alive.iter().map(|r| r.uhat[k] * r.uhat[k]).collect());
        let (l2_mean, l2_se) = split(alive.iter().map(|r| r.l2_norm[k]).collect());
        let (sup_mean, sup_se) = split(alive.iter().map(|r| r.sup_norm[k]).collect());
        let (kf_phi_mean, kf_phi_se) = split(alive.iter().map(|r| r.kf_phi[k]).collect());

        let window: Vec<&PathRecord> = if k >= 1 && k + 1 < checkpoints.len() {
            records.iter().filter(|r| r.len() > k + 1).collect()
        } else {
            Vec::new()
        };
        let psi_r: Vec<f64> = window
            .iter()
            .map(|r| {
                let dt = r.times[k + 1] - r.times[k - 1];
                (r.uhat[k + 1] - r.uhat[k - 1] + lambda1 * (r.int_uhat[k + 1] - r.int_uhat[k - 1])
                    - lambda * (r.int_kf_phi[k + 1] - r.int_kf_phi[k - 1]))
                    / dt
            })
            .collect();
        let theta_r: Vec<f64> = window
            .iter()
            .map(|r| {
                let dt = r.times[k + 1] - r.times[k - 1];
                (r.uhat[k + 1].powi(2) - r.uhat[k - 1].powi(2)
                    + 2.0 * lambda1 * (r.int_uhat_sq[k + 1] - r.int_uhat_sq[k - 1]))
                    / dt
            })
            .collect();
        let (psi_residual, psi_residual_se) = split(psi_r);
        let (theta_residual, theta_residual_se) = split(theta_r);
        let counted = records.iter().filter(|r| !failed(r)).count();
        rows.push(CheckpointStats {
            t,
            alive: alive.len(),
            blown_up,
            blown_up_fraction: if counted == 0 { 0.0 } else { blown_up as f64 / counted as f64 },
            censored: alive.is_empty(),
            psi,
            psi_se,
            theta,
            theta_se,
            l2_mean,
            l2_se,
            sup_mean,
            sup_se,
            kf_phi_mean,
            kf_phi_se,
            psi_residual,
            psi_residual_se,
            theta_residual,
            theta_residual_se,
            residual_paths: window.len(),
        });
    }
    let mut t_obs: Vec<f64> = records.iter().filter(|r| r.blow_up).filter_map(|r| r.t_obs).collect();
    t_obs.sort_by(f64::total_cmp);
    let t_obs_quantiles = (!t_obs.is_empty()).then(|| {
        [0.0, 0.25, 0.5, 0.75, 1.0].map(|p| quantile(&t_obs, p))
    });
    EnsembleStats {
        n_paths: records.len(),
        n_blown_up: records.iter().filter(|r| r.blow_up).count(),
        n_failed: records.iter().filter(|r| failed(r)).count(),
        t_obs_quantiles,
        checkpoints: rows,
    }
}

/// Runs `n_paths` paths on a pool of `workers` threads. Records come back in
/// path-index order whatever the scheduling.
pub fn run_ensemble(
    setup: &Setup,
    stepper: &StepperConfig,
    cfg: &EnsembleConfig,
) -> Result<(EnsembleStats, Vec<PathRecord>)> {
    if cfg.n_paths == 0 {
        return Err(Error::Config("n_paths must be >= 1".into()));
    }
    if cfg.workers == 0 {
        return Err(Error::Config("workers must be >= 1".into()));
    }
    validate_checkpoints(&cfg.checkpoints, setup.spec.t_max)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Ensemble(e.to_string()))?;
    let results: Vec<Result<PathRecord>> = pool.install(|| {
        (0..cfg.n_paths as u64)
            .into_par_iter()
            .map(|i| integrate_path(setup, stepper, &cfg.checkpoints, i, cfg.master_seed))
            .collect()
    });
    let records = results.into_iter().collect::<Result<Vec<_>>>()?;
    if records.iter().all(|r| r.termination == Termination::NumericalFailure) {
        let reasons: Vec<String> = records
            .iter()
            .map(|r| format!("path {}: numerical failure at t = {}", r.path_index, r.final_t))
            .collect();
        return Err(Error::Ensemble(reasons.join("; ")));
    }
    let stats = estimate_moments(&records, &cfg.checkpoints, setup.eigen.value, setup.spec.lambda);
    Ok((stats, records))
}

pub fn write_stats_csv<W: Write>(stats: &EnsembleStats, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in &stats.checkpoints {
        w.serialize(row).map_err(|e| Error::Ensemble(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Ensemble(e.to_string()))?;
    Ok(())
}

pub fn write_jsonl<W: Write>(records: &[PathRecord], mut out: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(|e| Error::Ensemble(e.to_string()))?;
        out.write_all(b"\n").map_err(|e| Error::Ensemble(e.to_string()))?;
    }
    Ok(())
}
