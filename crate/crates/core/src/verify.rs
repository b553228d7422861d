//! Falsification checks run on simulated paths and ensemble statistics.

use std::fmt::Write as _;

use serde::Serialize;

use crate::ensemble::EnsembleStats;
use crate::geometry::{normal_derivative, Grid};
use crate::integrator::{PairedRun, PathRecord, StepperConfig};
use crate::noise::path_rng;
use crate::problem::{log_sum_exp, Nonlinearity};
use crate::setup::Setup;
use crate::{Error, Result};

pub const DEFAULT_C_TOL: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Location {
    pub path: u64,
    pub t: f64,
    pub x: Vec<f64>,
}

/// Outcome of one check. `worst_margin` is the most adverse value of the
/// checked quantity; the check fails when it exceeds `tolerance`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    pub worst_margin: f64,
    pub tolerance: f64,
    pub location: Option<Location>,
    pub evaluations: usize,
    pub note: String,
}

impl CheckReport {
    fn new(name: &str, worst: f64, tolerance: f64, location: Option<Location>, evaluations: usize, note: String) -> Self {
        Self {
            name: name.into(),
            passed: !(worst > tolerance),
            worst_margin: worst,
            tolerance,
            location,
            evaluations,
            note,
        }
    }
}

pub fn render_table(reports: &[CheckReport]) -> String {
    let width = reports.iter().map(|r| r.name.len()).max().unwrap_or(4).max(4);
    let mut out = String::new();
    let _ = writeln!(out, "{:<width$}  {:<6}  {:>14}  {:>14}  note", "name", "status", "worst", "tolerance");
    for r in reports {
        let _ = writeln!(
            out,
            "{:<width$}  {:<6}  {:>14.6e}  {:>14.6e}  {}",
            r.name,
            if r.passed { "PASS" } else { "FAIL" },
            r.worst_margin,
            r.tolerance,
            r.note
        );
    }
    out
}

fn fields(rec: &PathRecord) -> Result<&Vec<Vec<f64>>> {
    rec.fields.as_ref().ok_or_else(|| {
        Error::InsufficientData(format!("path {} was recorded without fields", rec.path_index))
    })
}

/// `max_x u(x, t) − M_t` over every recorded field, against `C_tol·(h² + dt)`.
pub fn check_max_principle(records: &[PathRecord], grid: &Grid, tolerance: f64) -> Result<CheckReport> {
    let mut worst = f64::NEG_INFINITY;
    let mut loc = None;
    let mut count = 0;
    for rec in records {
        for (k, u) in fields(rec)?.iter().enumerate() {
            let (i, umax) = u
                .iter()
                .copied()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |a, (i, v)| if v > a.1 { (i, v) } else { a });
            let margin = umax - rec.envelope[k];
            count += 1;
            if margin > worst {
                worst = margin;
                loc = Some(Location { path: rec.path_index, t: rec.times[k], x: grid.coord(i).to_vec() });
            }
        }
    }
    if count == 0 {
        return Err(Error::InsufficientData("no recorded fields".into()));
    }
    Ok(CheckReport::new("max_principle", worst, tolerance, loc, count, "max u - M_t".into()))
}

/// Largest outward normal derivative over all face boundary nodes at the
/// first checkpoint at or after `t_eval`; passes when it is below `−tol_h`.
pub fn check_hopf_sign(records: &[PathRecord], grid: &Grid, t_eval: f64, tol_h: f64) -> Result<CheckReport> {
    let mut worst = f64::NEG_INFINITY;
    let mut loc = None;
    let mut count = 0;
    for rec in records {
        let Some(k) = rec.times.iter().position(|&t| t >= t_eval * (1.0 - 1e-12)) else {
            continue;
        };
        let u = &fields(rec)?[k];
        for (b, node) in grid.boundary().iter().enumerate() {
            let d = normal_derivative(u, grid, b)?;
            count += 1;
            if d > worst {
                worst = d;
                loc = Some(Location { path: rec.path_index, t: rec.times[k], x: node.position.clone() });
            }
        }
    }
    if count == 0 {
        return Err(Error::InsufficientData(format!("no path alive at t_eval = {t_eval}")));
    }
    let mut r = CheckReport::new("hopf_sign", worst, 0.0 - tol_h, loc, count, "max outward normal derivative".into());
    r.passed = worst < -tol_h;
    Ok(r)
}

/// Runs `n_pairs` pairs from `ξ` and `ξ + δ` with shared step sizes and
/// increments. The margin is the larger of the ordering violation
/// `(u − u_δ)/max(1, ‖u_δ‖_∞)` and the positivity violation `−min u/max(1, ‖u‖_∞)`.
pub fn check_comparison_positivity(
    setup: &Setup,
    stepper: &StepperConfig,
    checkpoints: &[f64],
    master_seed: u64,
    n_pairs: usize,
    delta: f64,
) -> Result<CheckReport> {
    let cfg = StepperConfig { keep_fields: true, ..stepper.clone() };
    let u0 = setup.initial()?;
    let u0d: Vec<f64> = u0.iter().map(|v| v + delta).collect();
    let mut worst = f64::NEG_INFINITY;
    let mut loc = None;
    let mut count = 0;
    for p in 0..n_pairs as u64 {
        let mut a = PairedRun::new(setup, &cfg, checkpoints, u0.clone(), p, master_seed)?;
        let mut b = PairedRun::new(setup, &cfg, checkpoints, u0d.clone(), p, master_seed)?;
        let (mut ra, mut rb) = (path_rng(master_seed, p), path_rng(master_seed, p));
        loop {
            let (pa, pb) = (a.proposed_dt()?, b.proposed_dt()?);
            let (Some((da, ea)), Some((db, eb))) = (pa, pb) else { break };
            let dt = da.min(db);
            let go_a = a.advance(&mut ra, Some((dt, ea)))?;
            let go_b = b.advance(&mut rb, Some((dt, eb)))?;
            if !(go_a && go_b) {
                break;
            }
        }
        let (ra, rb) = (a.finish(), b.finish());
        let (fa, fb) = (fields(&ra)?, fields(&rb)?);
        for k in 0..fa.len().min(fb.len()) {
            let (u, v) = (&fa[k], &fb[k]);
            let su = u.iter().fold(1.0f64, |m, x| m.max(x.abs()));
            let sv = v.iter().fold(1.0f64, |m, x| m.max(x.abs()));
            for i in 0..u.len() {
                let order = (u[i] - v[i]) / sv;
                let pos = -u[i] / su;
                let m = order.max(pos);
                count += 1;
                if m > worst {
                    worst = m;
                    loc = Some(Location { path: p, t: ra.times[k], x: setup.grid.coord(i).to_vec() });
                }
            }
        }
    }
    if count == 0 {
        return Err(Error::InsufficientData("no paired checkpoints".into()));
    }
    Ok(CheckReport::new(
        "comparison_positivity",
        worst,
        1e-8,
        loc,
        count,
        format!("xi vs xi + {delta}, shared increments"),
    ))
}

/// `∫_D f(u) / ∫_{D₀} f(u)` with `D₀ = {dist(x, ∂D) ≥ δ}`, in log form.
pub fn boundary_ratio(field: &[f64], grid: &Grid, inner: &[usize], f: &Nonlinearity) -> Result<f64> {
    grid.check_shape(field)?;
    let w = grid.weights();
    let all = log_sum_exp(field.iter().zip(w).map(|(&u, w)| f.ln_eval(u) + w.ln()));
    let sub = log_sum_exp(inner.iter().map(|&i| f.ln_eval(field[i]) + w[i].ln()));
    Ok((all - sub).exp())
}

/// Supremum of the boundary ratio over every recorded field against `ℓ + 1`.
pub fn check_boundary_ratio(
    records: &[PathRecord],
    grid: &Grid,
    f: &Nonlinearity,
    delta: f64,
    ell: usize,
) -> Result<CheckReport> {
    let inner = grid.inner_nodes(delta)?;
    let mut worst = f64::NEG_INFINITY;
    let mut loc = None;
    let mut count = 0;
    for rec in records {
        for (k, u) in fields(rec)?.iter().enumerate() {
            let r = boundary_ratio(u, grid, &inner, f)?;
            count += 1;
            if r > worst {
                worst = r;
                loc = Some(Location { path: rec.path_index, t: rec.times[k], x: Vec::new() });
            }
        }
    }
    if count == 0 {
        return Err(Error::InsufficientData("no recorded fields".into()));
    }
    Ok(CheckReport::new(
        "boundary_ratio",
        worst,
        ell as f64 + 1.0,
        loc,
        count,
        format!("sup ratio; ell_eff = {:.6}", worst - 1.0),
    ))
}

/// Checkpoints whose residual window `[t_{k−1}, t_{k+1}]` contains no
/// blow-up, so that the censored means at both ends average the same paths.
fn pre_blowup_rows(stats: &EnsembleStats) -> Vec<usize> {
    let c = &stats.checkpoints;
    (1..c.len().saturating_sub(1))
        .filter(|&k| c[k].psi_residual.is_some() && c[k + 1].blown_up == c[k - 1].blown_up)
        .collect()
}

/// The projected identity `dΨ/dt = −λ₁Ψ + λ E[K ∫ f(u) φ₁]` over windows of
/// two checkpoint intervals. Passes when at least 95% of pre-blow-up
/// residuals lie within `3·se + allowance`; the margin is `0.95` minus the
/// fraction inside the band.
pub fn check_psi_identity(stats: &EnsembleStats, allowance: f64) -> Result<CheckReport> {
    let rows = pre_blowup_rows(stats);
    if rows.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} pre-blow-up checkpoints with residuals, need 3",
            rows.len()
        )));
    }
    let mut inside = 0;
    let mut worst = (0.0, 0);
    for &k in &rows {
        let c = &stats.checkpoints[k];
        let (r, se) = (c.psi_residual.unwrap_or(f64::NAN), c.psi_residual_se.unwrap_or(0.0));
        let band = 3.0 * se + allowance;
        if r.abs() <= band {
            inside += 1;
        }
        let ratio = r.abs() / band.max(f64::MIN_POSITIVE);
        if !(ratio <= worst.0) {
            worst = (ratio, k);
        }
    }
    let frac = inside as f64 / rows.len() as f64;
    let t = stats.checkpoints[worst.1].t;
    Ok(CheckReport::new(
        "psi_identity",
        0.95 - frac,
        0.0,
        Some(Location { path: 0, t, x: Vec::new() }),
        rows.len(),
        format!("{inside}/{} checkpoints inside band; worst |r|/band = {:.3} at t = {t}", rows.len(), worst.0),
    ))
}

/// `dθ/dt + 2λ₁θ ≥ −(3·se + allowance)` at every pre-blow-up checkpoint.
pub fn check_theta_inequality(stats: &EnsembleStats, allowance: f64) -> Result<CheckReport> {
    let rows = pre_blowup_rows(stats);
    if rows.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} pre-blow-up checkpoints with residuals, need 3",
            rows.len()
        )));
    }
    let mut worst = f64::NEG_INFINITY;
    let mut loc = None;
    for &k in &rows {
        let c = &stats.checkpoints[k];
        let (r, se) = (c.theta_residual.unwrap_or(f64::NAN), c.theta_residual_se.unwrap_or(0.0));
        let m = -r - 3.0 * se - allowance;
        if !(m <= worst) {
            worst = m;
            loc = Some(Location { path: 0, t: c.t, x: Vec::new() });
        }
    }
    Ok(CheckReport::new(
        "theta_inequality",
        worst,
        0.0,
        loc,
        rows.len(),
        "-(d theta/dt + 2 lambda1 theta) - 3 se - allowance".into(),
    ))
}
