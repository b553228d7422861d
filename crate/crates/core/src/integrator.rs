//! Semi-implicit time stepping of one sample path:
//!
//! ```text
//!     (I + dt·A) u_{n+1} = u_n + dt·F(u_n) + σ(u_n) ⊙ ΔW_n
//! ```
//!
//! with a drift-limited step, exact landing on checkpoint times and
//! blow-up detection by reciprocal extrapolation of `‖u‖_∞`.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::noise::path_rng;
use crate::operator::BandedCholesky;
use crate::problem::{log_sum_exp, nonlocal_drift_ln};
use crate::setup::Setup;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepperConfig {
    pub dt0: f64,
    pub c_adapt: f64,
    pub u_max: f64,
    pub max_steps: usize,
    /// Steps between samples of `‖u‖_∞` used for blow-up extrapolation.
    pub stride: usize,
    pub fit_window: usize,
    /// The path stalls once the drift-limited step falls below `dt0 · dt_min_factor`.
    pub dt_min_factor: f64,
    /// Store full fields at checkpoints.
    pub keep_fields: bool,
}

impl Default for StepperConfig {
    fn default() -> Self {
        Self {
            dt0: 1e-4,
            c_adapt: 0.1,
            u_max: 1e6,
            max_steps: 50_000_000,
            stride: 1,
            fit_window: 8,
            dt_min_factor: 1e-8,
            keep_fields: false,
        }
    }
}

impl StepperConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt0 > 0.0 && self.dt0.is_finite()) {
            return Err(Error::Config(format!("dt0 must be > 0, got {}", self.dt0)));
        }
        if !(self.c_adapt > 0.0) {
            return Err(Error::Config(format!("c_adapt must be > 0, got {}", self.c_adapt)));
        }
        if !(self.u_max > 1.0) {
            return Err(Error::Config(format!("u_max must be > 1, got {}", self.u_max)));
        }
        if self.stride == 0 || self.fit_window < 2 || self.max_steps == 0 {
            return Err(Error::Config("stride, max_steps must be >= 1 and fit_window >= 2".into()));
        }
        if !(self.dt_min_factor > 0.0 && self.dt_min_factor < 1.0) {
            return Err(Error::Config("dt_min_factor must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Horizon,
    BlowUp,
    /// Step size collapsed; counts as blow-up when `‖u‖_∞ > U_max/10`.
    Stalled,
    NumericalFailure,
    MaxSteps,
}

/// Functionals of one path at the checkpoints it reached. Field order is
/// the serialized order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub path_index: u64,
    pub seed: u64,
    pub termination: Termination,
    pub blow_up: bool,
    pub t_obs: Option<f64>,
    pub final_t: f64,
    pub final_sup_norm: f64,
    pub steps: u64,
    /// Node-steps at which `u < 0` was fed to the `s₊` clamps.
    pub negative_clamps: u64,
    pub times: Vec<f64>,
    /// `û = ∫ u φ₁ dx`
    pub uhat: Vec<f64>,
    pub sup_norm: Vec<f64>,
    pub l2_norm: Vec<f64>,
    /// `K = (∫ f(u) dx)^{−q}`
    pub k_factor: Vec<f64>,
    /// `∫ f(u) φ₁ dx`
    pub f_phi: Vec<f64>,
    /// `K ∫ f(u) φ₁ dx`
    pub kf_phi: Vec<f64>,
    /// Right-point sum `Σ dt·û_{n+1}`.
    pub int_uhat: Vec<f64>,
    /// Left-point sum `Σ dt·K_n ∫ f(u_n) φ₁`.
    pub int_kf_phi: Vec<f64>,
    /// Right-point sum `Σ dt·(1 + λ₁dt/2)·û²_{n+1}`; the factor makes
    /// `2λ₁·int_uhat_sq` the exact implicit-Euler damping of `û²`.
    pub int_uhat_sq: Vec<f64>,
    /// Comparison envelope `M_t` driven by the same increments.
    pub envelope: Vec<f64>,
    pub min_value: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fields: Option<Vec<Vec<f64>>>,
}

impl PathRecord {
    fn new(path_index: u64, seed: u64) -> Self {
        Self {
            path_index,
            seed,
            termination: Termination::Horizon,
            blow_up: false,
            t_obs: None,
            final_t: 0.0,
            final_sup_norm: 0.0,
            steps: 0,
            negative_clamps: 0,
            times: Vec::new(),
            uhat: Vec::new(),
            sup_norm: Vec::new(),
            l2_norm: Vec::new(),
            k_factor: Vec::new(),
            f_phi: Vec::new(),
            kf_phi: Vec::new(),
            int_uhat: Vec::new(),
            int_kf_phi: Vec::new(),
            int_uhat_sq: Vec::new(),
            envelope: Vec::new(),
            min_value: Vec::new(),
            fields: None,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Current time, field, and the running sums carried between checkpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub t: f64,
    pub u: Vec<f64>,
    pub int_uhat: f64,
    pub int_kf_phi: f64,
    pub int_uhat_sq: f64,
    pub envelope: f64,
}

/// Drift and scalar functionals evaluated at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub drift: Vec<f64>,
    pub k: f64,
    pub f_phi: f64,
    pub kf_phi: f64,
    pub drift_sup: f64,
}

/// Reusable workspace for one path: resolvent factor cache and scratch buffers.
pub struct Stepper<'a> {
    setup: &'a Setup,
    factor: Option<(u64, BandedCholesky)>,
    ln_f: Vec<f64>,
    dw: Vec<f64>,
    ln_w_phi: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub fn new(setup: &'a Setup) -> Self {
        let ln_w_phi = setup
            .grid
            .weights()
            .iter()
            .zip(&setup.eigen.vector)
            .map(|(w, p)| (w * p).ln())
            .collect();
        let n = setup.grid.len();
        Self { setup, factor: None, ln_f: vec![0.0; n], dw: vec![0.0; n], ln_w_phi }
    }

    pub fn evaluate(&mut self, u: &[f64]) -> Result<Evaluation> {
        let spec = &self.setup.spec;
        if let Some(i) = u.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("u[{i}] = {}", u[i])));
        }
        for (l, &s) in self.ln_f.iter_mut().zip(u) {
            *l = spec.f.ln_eval(s);
        }
        let mut drift = vec![0.0; u.len()];
        let ln_mass = nonlocal_drift_ln(&self.ln_f, self.setup.grid.weights(), spec.lambda, spec.q, &mut drift)?;
        let ln_f_phi = log_sum_exp(self.ln_f.iter().zip(&self.ln_w_phi).map(|(a, b)| a + b));
        let drift_sup = drift.iter().copied().fold(0.0, f64::max);
        if !drift_sup.is_finite() {
            return Err(Error::NonFinite("drift overflow".into()));
        }
        Ok(Evaluation {
            drift,
            k: (-spec.q * ln_mass).exp(),
            f_phi: ln_f_phi.exp(),
            kf_phi: (ln_f_phi - spec.q * ln_mass).exp(),
            drift_sup,
        })
    }

    fn resolvent(&mut self, dt: f64) -> Result<&BandedCholesky> {
        let key = dt.to_bits();
        if self.factor.as_ref().map(|(k, _)| *k) != Some(key) {
            self.factor = Some((key, self.setup.op.factor_shifted(1.0, dt)?));
        }
        Ok(&self.factor.as_ref().expect("just set").1)
    }

    /// One IMEX step of length `dt` from `state`, using the drift in `eval`
    /// (which must belong to `state.u`). Returns the number of negative nodes
    /// in the new field.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        state: &mut State,
        eval: &Evaluation,
        dt: f64,
        rng: &mut R,
    ) -> Result<u64> {
        if !(dt > 0.0) {
            return Err(Error::Config(format!("time step must be > 0, got {dt}")));
        }
        let setup = self.setup;
        let spec = &setup.spec;
        let noisy = !spec.sigma.is_zero() && !setup.noise.is_off();
        if noisy {
            setup.noise.sample_increment(dt, rng, &mut self.dw);
        }
        let mut rhs: Vec<f64> = state.u.iter().zip(&eval.drift).map(|(u, f)| u + dt * f).collect();
        let mut dw_mean = 0.0;
        if noisy {
            for ((r, u), w) in rhs.iter_mut().zip(&state.u).zip(&self.dw) {
                *r += spec.sigma.eval(*u) * w;
            }
            let w = setup.grid.weights();
            dw_mean = w.iter().zip(&self.dw).map(|(a, b)| a * b).sum::<f64>() / w.iter().sum::<f64>();
        }
        self.resolvent(dt)?.solve_in_place(&mut rhs);
        let m = state.envelope;
        state.envelope = m + dt * spec.lambda * eval.k * spec.f.eval(m) + spec.sigma.eval(m) * dw_mean;
        state.int_kf_phi += dt * eval.kf_phi;
        state.u = rhs;
        state.t += dt;
        let uhat = setup.grid.inner(&state.u, &setup.eigen.vector);
        state.int_uhat += dt * uhat;
        state.int_uhat_sq += dt * (1.0 + 0.5 * setup.eigen.value * dt) * uhat * uhat;
        Ok(state.u.iter().filter(|v| **v < 0.0).count() as u64)
    }
}

/// `‖u‖_∞`, NaN if any entry is NaN.
fn sup_norm(u: &[f64]) -> f64 {
    u.iter().fold(0.0, |a: f64, v| if v.is_nan() || a.is_nan() { f64::NAN } else { a.max(v.abs()) })
}

/// Extrapolated blow-up time from samples `(t_i, ‖u‖_∞)`.
///
/// At the first sample at or above `u_max`, fits `1/‖u‖_∞` linearly in `t`
/// over the last `fit_window` samples and returns the root, clamped to
/// `[t_k, t_k + (t_k − t_{k−1})·fit_window]`.
pub fn detect_blowup(series: &[(f64, f64)], u_max: f64, fit_window: usize) -> Option<f64> {
    let k = series.iter().position(|&(_, v)| v >= u_max || v.is_nan())?;
    let tk = series[k].0;
    if k == 0 {
        return Some(tk);
    }
    let lo = (k + 1).saturating_sub(fit_window.max(2));
    let pts: Vec<(f64, f64)> = series[lo..=k]
        .iter()
        .filter(|(_, v)| v.is_finite() && *v > 0.0)
        .map(|&(t, v)| (t, 1.0 / v))
        .collect();
    if pts.len() < 2 {
        return Some(tk);
    }
    let n = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - tm).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - tm) * (p.1 - ym)).sum();
    if sxx == 0.0 {
        return Some(tk);
    }
    let slope = sxy / sxx;
    if slope >= 0.0 {
        return Some(tk);
    }
    let root = tm - ym / slope;
    let reach = (tk - series[k - 1].0) * fit_window as f64;
    Some(root.clamp(tk, tk + reach))
}

/// Checkpoints must be sorted, distinct and inside `[0, t_max]`.
pub fn validate_checkpoints(checkpoints: &[f64], t_max: f64) -> Result<()> {
    if checkpoints.is_empty() {
        return Err(Error::Config("at least one checkpoint is required".into()));
    }
    if checkpoints.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Config("checkpoints must be strictly increasing".into()));
    }
    if checkpoints[0] < 0.0 || checkpoints[checkpoints.len() - 1] > t_max * (1.0 + 1e-12) {
        return Err(Error::Config(format!("checkpoints must lie in [0, {t_max}]")));
    }
    Ok(())
}

/// `n + 1` equally spaced checkpoints on `[0, t_max]`.
pub fn uniform_checkpoints(t_max: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|k| t_max * k as f64 / n as f64).collect()
}

fn record_checkpoint(rec: &mut PathRecord, setup: &Setup, state: &State, eval: &Evaluation, keep: bool) {
    rec.times.push(state.t);
    rec.uhat.push(setup.grid.inner(&state.u, &setup.eigen.vector));
    rec.sup_norm.push(sup_norm(&state.u));
    rec.l2_norm.push(setup.grid.l2_norm(&state.u));
    rec.k_factor.push(eval.k);
    rec.f_phi.push(eval.f_phi);
    rec.kf_phi.push(eval.kf_phi);
    rec.int_uhat.push(state.int_uhat);
    rec.int_kf_phi.push(state.int_kf_phi);
    rec.int_uhat_sq.push(state.int_uhat_sq);
    rec.envelope.push(state.envelope);
    rec.min_value.push(state.u.iter().copied().fold(f64::INFINITY, f64::min));
    if keep {
        rec.fields.get_or_insert_with(Vec::new).push(state.u.clone());
    }
}

/// Integrates one path from `ξ` and records functionals at `checkpoints`.
pub fn integrate_path(
    setup: &Setup,
    cfg: &StepperConfig,
    checkpoints: &[f64],
    path_index: u64,
    master_seed: u64,
) -> Result<PathRecord> {
    let u0 = setup.initial()?;
    let mut rng = path_rng(master_seed, path_index);
    integrate_from(setup, cfg, checkpoints, u0, path_index, master_seed, &mut rng)
}

/// Same as [`integrate_path`] but from an explicit initial field and generator.
pub fn integrate_from<R: Rng + ?Sized>(
    setup: &Setup,
    cfg: &StepperConfig,
    checkpoints: &[f64],
    u0: Vec<f64>,
    path_index: u64,
    master_seed: u64,
    rng: &mut R,
) -> Result<PathRecord> {
    let mut run = PairedRun::new(setup, cfg, checkpoints, u0, path_index, master_seed)?;
    while run.advance(rng, None)? {}
    Ok(run.finish())
}

/// Incremental driver of one path. Exposed so that two paths can be stepped
/// in lockstep with shared increments.
pub struct PairedRun<'a> {
    setup: &'a Setup,
    cfg: &'a StepperConfig,
    checkpoints: &'a [f64],
    stepper: Stepper<'a>,
    state: State,
    rec: PathRecord,
    next_cp: usize,
    history: VecDeque<(f64, f64)>,
    last_sup: f64,
    done: bool,
}

impl<'a> PairedRun<'a> {
    pub fn new(
        setup: &'a Setup,
        cfg: &'a StepperConfig,
        checkpoints: &'a [f64],
        u0: Vec<f64>,
        path_index: u64,
        master_seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        setup.grid.check_shape(&u0)?;
        validate_checkpoints(checkpoints, setup.spec.t_max)?;
        let envelope = u0.iter().copied().fold(0.0, f64::max);
        let last_sup = sup_norm(&u0);
        let mut history = VecDeque::with_capacity(cfg.fit_window + 1);
        history.push_back((0.0, last_sup));
        Ok(Self {
            setup,
            cfg,
            checkpoints,
            stepper: Stepper::new(setup),
            state: State { t: 0.0, u: u0, int_uhat: 0.0, int_kf_phi: 0.0, int_uhat_sq: 0.0, envelope },
            rec: PathRecord::new(path_index, master_seed),
            next_cp: 0,
            history,
            last_sup,
            done: false,
        })
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    fn terminate(&mut self, reason: Termination, blow_up: bool, t_obs: Option<f64>) {
        self.rec.termination = reason;
        self.rec.blow_up = blow_up;
        self.rec.t_obs = t_obs.map(|t| t.min(self.setup.spec.t_max));
        self.done = true;
    }

    fn fail_non_finite(&mut self) {
        if self.last_sup > self.cfg.u_max / 10.0 {
            let t = self.state.t;
            self.terminate(Termination::BlowUp, true, Some(t));
        } else {
            self.terminate(Termination::NumericalFailure, false, None);
        }
    }

    /// Step size the path would take now, before any pairing. `None` once done.
    pub fn proposed_dt(&mut self) -> Result<Option<(f64, Evaluation)>> {
        if self.done {
            return Ok(None);
        }
        let eval = match self.stepper.evaluate(&self.state.u) {
            Ok(e) => e,
            Err(Error::NonFinite(_)) => {
                self.fail_non_finite();
                return Ok(None);
            }
            Err(e) => return Err(e),
        };
        while self.next_cp < self.checkpoints.len()
            && self.checkpoints[self.next_cp] <= self.state.t * (1.0 + 1e-14)
        {
            record_checkpoint(&mut self.rec, self.setup, &self.state, &eval, self.cfg.keep_fields);
            self.next_cp += 1;
        }
        let t_max = self.setup.spec.t_max;
        if self.state.t >= t_max * (1.0 - 1e-14) {
            self.terminate(Termination::Horizon, false, None);
            return Ok(None);
        }
        if self.rec.steps >= self.cfg.max_steps as u64 {
            self.terminate(Termination::MaxSteps, false, None);
            return Ok(None);
        }
        let dt_adapt = self.cfg.dt0.min(self.cfg.c_adapt / (1.0 + eval.drift_sup));
        if dt_adapt < self.cfg.dt0 * self.cfg.dt_min_factor {
            let blown = self.last_sup > self.cfg.u_max / 10.0;
            let t = self.state.t;
            self.terminate(Termination::Stalled, blown, blown.then_some(t));
            return Ok(None);
        }
        let target = self.checkpoints.get(self.next_cp).copied().unwrap_or(t_max).min(t_max);
        let mut dt = dt_adapt;
        let remaining = target - self.state.t;
        // Land exactly on the target; avoid leaving a sliver smaller than 1e-9·dt.
        if remaining <= dt * (1.0 + 1e-9) {
            dt = remaining;
        }
        Ok(Some((dt, eval)))
    }

    /// Advances one step. With `forced`, uses the given step size and
    /// evaluation (from [`Self::proposed_dt`]); the step is truncated to the
    /// proposal otherwise. Returns `false` once the path has ended.
    pub fn advance<R: Rng + ?Sized>(&mut self, rng: &mut R, forced: Option<(f64, Evaluation)>) -> Result<bool> {
        let (dt, eval) = match forced {
            Some(p) => p,
            None => match self.proposed_dt()? {
                Some(p) => p,
                None => return Ok(false),
            },
        };
        let negatives = match self.stepper.step(&mut self.state, &eval, dt, rng) {
            Ok(n) => n,
            Err(Error::LinearSolve(_)) => {
                self.terminate(Termination::NumericalFailure, false, None);
                return Ok(false);
            }
            Err(e) => return Err(e),
        };
        self.rec.steps += 1;
        self.rec.negative_clamps += negatives;
        let sup = sup_norm(&self.state.u);
        if !sup.is_finite() {
            self.fail_non_finite();
            return Ok(false);
        }
        self.last_sup = sup;
        let crossed = sup >= self.cfg.u_max;
        if crossed || self.rec.steps.is_multiple_of(self.cfg.stride as u64) {
            if self.history.len() > self.cfg.fit_window {
                self.history.pop_front();
            }
            self.history.push_back((self.state.t, sup));
        }
        if crossed {
            let series: Vec<(f64, f64)> = self.history.iter().copied().collect();
            let t_obs = detect_blowup(&series, self.cfg.u_max, self.cfg.fit_window);
            self.terminate(Termination::BlowUp, true, t_obs);
            return Ok(false);
        }
        Ok(true)
    }

    pub fn finish(mut self) -> PathRecord {
        self.rec.final_t = self.state.t;
        self.rec.final_sup_norm = sup_norm(&self.state.u);
        self.rec
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DomainSpec;
    use crate::problem::{DiffusionCoefficient, InitialData, Nonlinearity, ProblemSpec};
    use crate::setup::NoiseSpec;
    use crate::spectral::DEFAULT_TOLERANCE;

    fn heat(n: usize, initial: InitialData, t_max: f64) -> Setup {
        let spec = ProblemSpec {
            lambda: 0.0,
            q: 1.0,
            f: Nonlinearity::Exp,
            sigma: DiffusionCoefficient::off(),
            envelope: None,
            initial,
            t_max,
            domain: DomainSpec::interval(1.0, n),
        };
        Setup::new(spec, &NoiseSpec::Off, DEFAULT_TOLERANCE).unwrap()
    }

    #[test]
    fn reciprocal_fit_recovers_quadratic_blowup() {
        let dt = 1e-7;
        let series: Vec<(f64, f64)> =
            (0..10_000_000).map(|k| k as f64 * dt).take_while(|t| *t < 1.0).map(|t| (t, 1.0 / (1.0 - t))).collect();
        let t = detect_blowup(&series, 1e6, 8).unwrap();
        assert!((t - 1.0).abs() < 1e-2);
        assert_eq!(detect_blowup(&[(0.0, 1.0), (1.0, 5.0), (2.0, 3.0)], 1e6, 8), None);
        assert_eq!(detect_blowup(&[(0.5, 1e7), (1.0, 1e7)], 1e6, 8), Some(0.5));
    }

    #[test]
    fn one_step_on_eigenmode() {
        let s = heat(63, InitialData::Eigenfunction { scale: 1.0 }, 1.0);
        let mut stepper = Stepper::new(&s);
        let u0 = s.initial().unwrap();
        let uhat0 = s.grid.inner(&u0, &s.eigen.vector);
        let mut state = State { t: 0.0, u: u0, int_uhat: 0.0, int_kf_phi: 0.0, int_uhat_sq: 0.0, envelope: 0.0 };
        let eval = stepper.evaluate(&state.u).unwrap();
        let dt = 1e-3;
        stepper.step(&mut state, &eval, dt, &mut path_rng(0, 0)).unwrap();
        let uhat1 = s.grid.inner(&state.u, &s.eigen.vector);
        assert!((uhat1 / uhat0 - 1.0 / (1.0 + s.eigen.value * dt)).abs() < 1e-9);
        assert!(stepper.step(&mut state, &eval, 0.0, &mut path_rng(0, 0)).is_err());
    }

    #[test]
    fn single_node_constant_state_gains_lambda_dt() {
        let spec = ProblemSpec {
            lambda: 2.0,
            q: 1.0,
            f: Nonlinearity::Exp,
            sigma: DiffusionCoefficient::off(),
            envelope: None,
            initial: InitialData::Constant { value: 0.3 },
            t_max: 1.0,
            domain: DomainSpec::interval(1.0, 1),
        };
        let s = Setup::new(spec, &NoiseSpec::Off, DEFAULT_TOLERANCE).unwrap();
        let mut stepper = Stepper::new(&s);
        let mut state = State { t: 0.0, u: vec![0.3], int_uhat: 0.0, int_kf_phi: 0.0, int_uhat_sq: 0.0, envelope: 0.3 };
        let eval = stepper.evaluate(&state.u).unwrap();
        // Single node: the weight is h = 1/2, so F = λ/h.
        assert!((eval.drift[0] - 2.0 / 0.5).abs() < 1e-12);
        let dt = 1e-4;
        stepper.step(&mut state, &eval, dt, &mut path_rng(0, 0)).unwrap();
        let expected = (0.3 + dt * 4.0) / (1.0 + 8.0 * dt);
        assert!((state.u[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn heat_decay_of_eigenmode() {
        let s = heat(63, InitialData::Eigenfunction { scale: 1.0 }, 0.1);
        let cfg = StepperConfig::default();
        let rec = integrate_path(&s, &cfg, &[0.0, 0.1], 0, 1).unwrap();
        assert_eq!(rec.termination, Termination::Horizon);
        let ratio = rec.uhat[1] / rec.uhat[0];
        let discrete = (1.0 + s.eigen.value * 1e-4f64).powi(-1000);
        assert!((ratio / discrete - 1.0).abs() < 1e-9);
        assert!((ratio / (-std::f64::consts::PI.powi(2) * 0.1).exp() - 1.0).abs() < 0.01);
        assert!((rec.times[1] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn deterministic_paths_ignore_seed() {
        let mut spec = heat(31, InitialData::Sine { amplitude: 1.0 }, 0.05).spec;
        spec.lambda = 5.0;
        spec.q = 0.5;
        let s = Setup::new(spec, &NoiseSpec::Off, DEFAULT_TOLERANCE).unwrap();
        let cps = uniform_checkpoints(0.05, 5);
        let a = integrate_path(&s, &StepperConfig::default(), &cps, 0, 1).unwrap();
        let mut b = integrate_path(&s, &StepperConfig::default(), &cps, 0, 99).unwrap();
        b.seed = a.seed;
        assert_eq!(a, b);
    }

    #[test]
    fn stochastic_path_is_reproducible() {
        let mut spec = heat(31, InitialData::Sine { amplitude: 1.0 }, 0.05).spec;
        spec.lambda = 5.0;
        spec.sigma = DiffusionCoefficient::Linear { c: 0.5 };
        let noise = NoiseSpec::Kl {
            kernel: crate::noise::CovarianceKernel::Gaussian { amplitude: 1.0, length: 0.1 },
            eps_tail: 1e-6,
        };
        let s = Setup::new(spec, &noise, DEFAULT_TOLERANCE).unwrap();
        let cps = uniform_checkpoints(0.05, 5);
        let a = integrate_path(&s, &StepperConfig::default(), &cps, 3, 7).unwrap();
        let b = integrate_path(&s, &StepperConfig::default(), &cps, 3, 7).unwrap();
        let c = integrate_path(&s, &StepperConfig::default(), &cps, 4, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.uhat, c.uhat);
        assert_eq!(a.len(), 6);
    }

    #[test]
    fn exponential_nonlinearity_blows_up() {
        let spec = ProblemSpec {
            lambda: 40.0,
            q: 0.5,
            f: Nonlinearity::Exp,
            sigma: DiffusionCoefficient::off(),
            envelope: None,
            initial: InitialData::Constant { value: 1.0 },
            t_max: 2.0,
            domain: DomainSpec::interval(1.0, 31),
        };
        let s = Setup::new(spec, &NoiseSpec::Off, DEFAULT_TOLERANCE).unwrap();
        let cfg = StepperConfig { u_max: 100.0, dt_min_factor: 1e-12, ..Default::default() };
        let rec = integrate_path(&s, &cfg, &uniform_checkpoints(2.0, 200), 0, 0).unwrap();
        assert!(rec.blow_up, "{:?}", rec.termination);
        let t = rec.t_obs.unwrap();
        assert!(t >= rec.final_t - 1e-12 && t < 2.0);
        assert!(rec.times.iter().all(|&c| c <= rec.final_t));
    }

    #[test]
    fn sup_norm_propagates_nan() {
        assert_eq!(sup_norm(&[1.0, -3.0, 2.0]), 3.0);
        assert!(sup_norm(&[1.0, f64::NAN, 2.0]).is_nan());
    }
}
