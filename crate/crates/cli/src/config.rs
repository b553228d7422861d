//! Run configuration: a TOML document with one table per pipeline stage.

use std::fmt;
use std::path::Path;

use nonlocal_spde::bounds::{default_delta, default_ell};
use nonlocal_spde::geometry::{build_grid, DomainSpec};
use nonlocal_spde::integrator::{uniform_checkpoints, validate_checkpoints, StepperConfig};
use nonlocal_spde::problem::{DiffusionCoefficient, InitialData, Nonlinearity, ProblemSpec, SuperlinearEnvelope};
use nonlocal_spde::setup::NoiseSpec;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// A configuration problem, tied to the offending key.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    fn new(key: &str, message: impl Into<String>) -> Self {
        Self { key: key.into(), message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.key.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.key, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

type ConfigResult<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    domain: DomainSpec,
    problem: RawProblem,
    noise: Option<toml::Value>,
    #[serde(default)]
    stepper: StepperConfig,
    #[serde(default)]
    ensemble: EnsembleSection,
    #[serde(default)]
    bounds: RawBounds,
    #[serde(default)]
    verify: VerifySection,
    #[serde(default)]
    output: OutputSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    lambda: f64,
    q: f64,
    t_max: f64,
    f: toml::Value,
    sigma: Option<toml::Value>,
    envelope: Option<toml::Value>,
    initial: Option<toml::Value>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBounds {
    delta: Option<f64>,
    ell: Option<usize>,
    psi0: Option<toml::Value>,
    theta0: Option<f64>,
    growth_range: Option<[f64; 2]>,
}

/// Checkpoint times: a count of uniform intervals over `[0, t_max]`, or explicit times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Checkpoints {
    Count(usize),
    Times(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleSection {
    pub n_paths: usize,
    pub master_seed: u64,
    pub workers: usize,
    pub checkpoints: Checkpoints,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        Self {
            n_paths: 100,
            master_seed: 0,
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            checkpoints: Checkpoints::Count(20),
        }
    }
}

/// Where `Ψ₀` comes from: the configured initial datum, or a given value.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Psi0Source {
    Initial,
    Value(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsSection {
    pub delta: f64,
    pub ell: usize,
    pub psi0: Psi0Source,
    /// `None` means `Ψ₀²`.
    pub theta0: Option<f64>,
    pub growth_range: [f64; 2],
}

pub const CHECKS: [&str; 6] = [
    "max_principle",
    "hopf_sign",
    "comparison_positivity",
    "boundary_ratio",
    "psi_identity",
    "theta_inequality",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    pub checks: Vec<String>,
    pub c_tol: f64,
    pub t_eval: Option<f64>,
    pub tol_h: f64,
    pub n_pairs: usize,
    pub shift: f64,
    /// The identity check allows `allowance_dt · dt₀` on top of `3·se`.
    pub allowance_dt: f64,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            checks: CHECKS.iter().map(|s| s.to_string()).collect(),
            c_tol: nonlocal_spde::verify::DEFAULT_C_TOL,
            t_eval: None,
            tol_h: 0.0,
            n_pairs: 10,
            shift: 0.1,
            allowance_dt: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

/// A fully validated configuration with every default filled in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    pub noise: NoiseSpec,
    pub stepper: StepperConfig,
    pub ensemble: EnsembleSection,
    pub bounds: BoundsSection,
    pub verify: VerifySection,
    pub output: OutputSection,
}

/// Command-line overrides applied before validation.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<String>,
}

/// Parses a registry-backed value written either as a bare name or as a table with `kind`.
fn named<T: DeserializeOwned>(key: &str, tag: &str, value: toml::Value, registry: &[&str]) -> ConfigResult<T> {
    let value = match value {
        toml::Value::String(name) => {
            let mut t = toml::Table::new();
            t.insert(tag.into(), toml::Value::String(name));
            toml::Value::Table(t)
        }
        v => v,
    };
    let name = value.get(tag).and_then(|v| v.as_str()).map(str::to_owned);
    if let Some(name) = &name {
        if !registry.contains(&name.as_str()) {
            return Err(ConfigError::new(
                key,
                format!("unknown name \"{name}\"; available: {}", registry.join(", ")),
            ));
        }
    }
    T::deserialize(value).map_err(|e| ConfigError::new(key, e.to_string().trim().to_string()))
}

fn check(key: &str, ok: bool, message: impl Into<String>) -> ConfigResult<()> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError::new(key, message))
    }
}

fn core(key: &str, r: nonlocal_spde::Result<()>) -> ConfigResult<()> {
    r.map_err(|e| {
        let msg = match e {
            nonlocal_spde::Error::Config(m) => m,
            other => other.to_string(),
        };
        ConfigError::new(key, msg)
    })
}

pub fn parse_config(text: &str, overrides: &Overrides) -> ConfigResult<RunConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::new("", e.to_string().trim().to_string()))?;
    let p = raw.problem;
    check("problem.lambda", p.lambda.is_finite() && p.lambda >= 0.0, "lambda must be finite and >= 0")?;
    check("problem.q", p.q > 0.0 && p.q.is_finite(), "q must be > 0")?;
    check("problem.t_max", p.t_max > 0.0 && p.t_max.is_finite(), "t_max must be > 0")?;

    let f: Nonlinearity = named("problem.f", "kind", p.f, &Nonlinearity::REGISTRY)?;
    core("problem.f", f.validate())?;
    let sigma: DiffusionCoefficient = match p.sigma {
        Some(v) => named("problem.sigma", "kind", v, &DiffusionCoefficient::REGISTRY)?,
        None => DiffusionCoefficient::off(),
    };
    core("problem.sigma", sigma.validate())?;
    let envelope: Option<SuperlinearEnvelope> = match p.envelope {
        Some(v) => Some(named("problem.envelope", "kind", v, &SuperlinearEnvelope::REGISTRY)?),
        None => None,
    };
    if let Some(g) = &envelope {
        core("problem.envelope", g.validate())?;
    }
    let initial: InitialData = match p.initial {
        Some(v) => named("problem.initial", "kind", v, &InitialData::REGISTRY)?,
        None => InitialData::Eigenfunction { scale: 1.0 },
    };
    let grid = build_grid(&raw.domain).map_err(|e| ConfigError::new("domain", e.to_string()))?;
    if let InitialData::Nodal { values } = &initial {
        check(
            "problem.initial",
            values.len() == grid.len(),
            format!("nodal values need {} entries, got {}", grid.len(), values.len()),
        )?;
    }
    let problem = ProblemSpec {
        lambda: p.lambda,
        q: p.q,
        f,
        sigma,
        envelope,
        initial,
        t_max: p.t_max,
        domain: raw.domain,
    };
    core("problem", problem.validate())?;

    let noise: NoiseSpec = match raw.noise {
        Some(v) => named("noise", "kind", v, &NoiseSpec::REGISTRY)?,
        None => NoiseSpec::Off,
    };
    match &noise {
        NoiseSpec::Kl { kernel, eps_tail } => {
            core("noise.kernel", kernel.validate())?;
            check("noise.eps_tail", *eps_tail > 0.0 && *eps_tail < 1.0, "eps_tail must lie in (0, 1)")?;
        }
        NoiseSpec::Coordinate { coefficients } => check(
            "noise.coefficients",
            !coefficients.is_empty() && coefficients.iter().all(|c| c.is_finite()),
            "coefficients must be a non-empty list of finite numbers",
        )?,
        NoiseSpec::Off => {}
    }

    core("stepper", raw.stepper.validate())?;

    let mut ensemble = raw.ensemble;
    if let Some(seed) = overrides.seed {
        ensemble.master_seed = seed;
    }
    if let Some(w) = overrides.workers {
        ensemble.workers = w;
    }
    check("ensemble.n_paths", ensemble.n_paths >= 1, "n_paths must be >= 1")?;
    check("ensemble.workers", ensemble.workers >= 1, "workers must be >= 1")?;
    match &ensemble.checkpoints {
        Checkpoints::Count(n) => check("ensemble.checkpoints", *n >= 1, "need at least one checkpoint interval")?,
        Checkpoints::Times(t) => core("ensemble.checkpoints", validate_checkpoints(t, problem.t_max))?,
    }

    let rb = raw.bounds;
    let delta = rb.delta.unwrap_or_else(|| default_delta(&grid));
    check("bounds.delta", delta > 0.0 && delta.is_finite(), "delta must be > 0")?;
    let ell = rb.ell.unwrap_or_else(|| default_ell(grid.dimension()));
    check("bounds.ell", ell >= 1, "ell must be >= 1")?;
    let psi0 = match rb.psi0 {
        None => Psi0Source::Initial,
        Some(toml::Value::String(s)) if s == "initial" => Psi0Source::Initial,
        Some(toml::Value::Float(x)) => Psi0Source::Value(x),
        Some(toml::Value::Integer(x)) => Psi0Source::Value(x as f64),
        Some(_) => return Err(ConfigError::new("bounds.psi0", "expected \"initial\" or a number")),
    };
    if let Psi0Source::Value(x) = psi0 {
        check("bounds.psi0", x.is_finite() && x >= 0.0, "psi0 must be finite and >= 0")?;
    }
    if let Some(t) = rb.theta0 {
        check("bounds.theta0", t.is_finite() && t > 0.0, "theta0 must be > 0")?;
    }
    let growth_range = rb.growth_range.unwrap_or([0.0, 50.0]);
    check(
        "bounds.growth_range",
        growth_range[0].is_finite() && growth_range[1].is_finite() && growth_range[0] < growth_range[1],
        "growth_range must be [lo, hi] with lo < hi",
    )?;
    let bounds = BoundsSection { delta, ell, psi0, theta0: rb.theta0, growth_range };

    let v = raw.verify;
    for name in &v.checks {
        check(
            "verify.checks",
            CHECKS.contains(&name.as_str()),
            format!("unknown check \"{name}\"; available: {}", CHECKS.join(", ")),
        )?;
    }
    check("verify.c_tol", v.c_tol > 0.0, "c_tol must be > 0")?;
    check("verify.tol_h", v.tol_h >= 0.0, "tol_h must be >= 0")?;
    check("verify.n_pairs", v.n_pairs >= 1, "n_pairs must be >= 1")?;
    check("verify.shift", v.shift > 0.0, "shift must be > 0")?;
    check("verify.allowance_dt", v.allowance_dt >= 0.0, "allowance_dt must be >= 0")?;
    if let Some(t) = v.t_eval {
        check("verify.t_eval", t > 0.0 && t <= problem.t_max, "t_eval must lie in (0, t_max]")?;
    }

    let mut output = raw.output;
    if let Some(out) = &overrides.out {
        output.dir = out.clone();
    }

    Ok(RunConfig { problem, noise, stepper: raw.stepper, ensemble, bounds, verify: v, output })
}

pub fn load_config(path: &Path, overrides: &Overrides) -> ConfigResult<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new("", format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text, overrides)
}

impl RunConfig {
    pub fn checkpoints(&self) -> Vec<f64> {
        match &self.ensemble.checkpoints {
            Checkpoints::Count(n) => uniform_checkpoints(self.problem.t_max, *n),
            Checkpoints::Times(t) => t.clone(),
        }
    }

    /// Hash of everything that affects results. The worker count and the
    /// output directory are excluded since they do not.
    /// The configuration with execution-only settings (workers, output dir) cleared.
    pub fn canonical(&self) -> RunConfig {
        let mut c = self.clone();
        c.ensemble.workers = 0;
        c.output.dir.clear();
        c
    }

    pub fn run_id(&self) -> String {
        let bytes = serde_json::to_vec(&self.canonical()).expect("config serializes");
        hex::encode(&Sha256::digest(&bytes)[..8])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[domain]
extents = [1.0]
nodes = [63]

[problem]
lambda = 50.0
q = 0.5
t_max = 0.1
f = "exp"
"#;

    #[test]
    fn minimal_fills_defaults() {
        let c = parse_config(MINIMAL, &Overrides::default()).unwrap();
        assert_eq!(c.noise, NoiseSpec::Off);
        assert_eq!(c.problem.f, Nonlinearity::Exp);
        assert!(c.problem.sigma.is_zero());
        assert_eq!(c.stepper, StepperConfig::default());
        assert_eq!(c.bounds.ell, 2);
        assert!((c.bounds.delta - 0.1).abs() < 1e-15);
        assert_eq!(c.checkpoints().len(), 21);
    }

    #[test]
    fn run_id_ignores_workers_but_not_seed() {
        let a = parse_config(MINIMAL, &Overrides { workers: Some(1), ..Default::default() }).unwrap();
        let b = parse_config(MINIMAL, &Overrides { workers: Some(8), ..Default::default() }).unwrap();
        let c = parse_config(MINIMAL, &Overrides { seed: Some(5), ..Default::default() }).unwrap();
        assert_eq!(a.run_id(), b.run_id());
        assert_ne!(a.run_id(), c.run_id());
        assert_eq!(a.run_id().len(), 16);
    }

    #[test]
    fn negative_q_names_the_key() {
        let e = parse_config(&MINIMAL.replace("q = 0.5", "q = -1.0"), &Overrides::default()).unwrap_err();
        assert_eq!(e.key, "problem.q");
        assert_eq!(e.message, "q must be > 0");
    }

    #[test]
    fn unknown_names_list_the_registry() {
        let e = parse_config(&MINIMAL.replace("\"exp\"", "\"exp2\""), &Overrides::default()).unwrap_err();
        assert_eq!(e.key, "problem.f");
        for name in Nonlinearity::REGISTRY {
            assert!(e.message.contains(name), "{e}");
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = parse_config(&MINIMAL.replace("q = 0.5", "q = 0.5\nqq = 1.0"), &Overrides::default()).unwrap_err();
        assert!(e.message.contains("qq"), "{e}");
        let e = parse_config(&format!("{MINIMAL}\n[stepper]\ndt = 1e-3\n"), &Overrides::default()).unwrap_err();
        assert!(e.message.contains("dt"), "{e}");
    }

    #[test]
    fn parameterized_entries_use_tables() {
        let text = format!(
            "{}\nsigma = {{ kind = \"linear\", c = 0.2 }}\ninitial = {{ kind = \"constant\", value = 1.0 }}\n\n[noise]\nkind = \"kl\"\neps_tail = 1e-6\nkernel = {{ form = \"gaussian\", amplitude = 1.0, length = 0.1 }}\n",
            MINIMAL.trim_end()
        );
        let c = parse_config(&text, &Overrides::default()).unwrap();
        assert_eq!(c.problem.sigma, DiffusionCoefficient::Linear { c: 0.2 });
        assert!(matches!(c.noise, NoiseSpec::Kl { .. }));
    }

    #[test]
    fn missing_parameter_is_reported() {
        let text = MINIMAL.replace("f = \"exp\"", "f = \"shifted_power\"");
        let e = parse_config(&text, &Overrides::default()).unwrap_err();
        assert_eq!(e.key, "problem.f");
        assert!(e.message.contains('p'), "{e}");
    }

    #[test]
    fn psi0_accepts_a_number() {
        let text = format!("{MINIMAL}\n[bounds]\npsi0 = 0\n");
        let c = parse_config(&text, &Overrides::default()).unwrap();
        assert_eq!(c.bounds.psi0, Psi0Source::Value(0.0));
    }
}
