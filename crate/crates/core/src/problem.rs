//! Nonlinearities, diffusion coefficients, the superlinear envelope and the
//! non-local drift `F(u) = λ f(u) / (∫_D f(u) dx)^q`.

use serde::{Deserialize, Serialize};

use crate::bounds::{improper_integral, Integral};
use crate::geometry::{DomainSpec, Grid};
use crate::spectral::EigenPair;
use crate::{Error, Result};

/// Reaction nonlinearity `f`. Power laws act on `s₊ = max(s, 0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Nonlinearity {
    /// `e^s`
    Exp,
    /// `(1 + s₊)^p`, `p > 1`
    ShiftedPower { p: f64 },
    /// `m + s₊²`, `m > 0`
    ConstantPlus { m: f64 },
    /// Piecewise-linear through `(s[k], values[k])`; constant to the left of
    /// the table and continued with the last non-negative slope to the right.
    Tabulated { s: Vec<f64>, values: Vec<f64> },
}

impl Nonlinearity {
    pub const REGISTRY: [&'static str; 4] = ["exp", "shifted_power", "constant_plus", "tabulated"];

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Exp => Ok(()),
            Self::ShiftedPower { p } if !(*p > 1.0 && p.is_finite()) => {
                Err(Error::Config(format!("shifted_power exponent p must be > 1, got {p}")))
            }
            Self::ConstantPlus { m } if !(*m > 0.0 && m.is_finite()) => {
                Err(Error::Config(format!("constant_plus offset m must be > 0, got {m}")))
            }
            Self::Tabulated { s, values } => {
                if s.len() < 2 || s.len() != values.len() {
                    return Err(Error::Config(
                        "tabulated f needs at least two abscissae and one value per abscissa".into(),
                    ));
                }
                if s.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::Config("tabulated abscissae must be strictly increasing".into()));
                }
                if values.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                    return Err(Error::Config("tabulated values must be positive and finite".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn segment(s: &[f64], x: f64) -> usize {
        s.partition_point(|&v| v <= x).clamp(1, s.len() - 1) - 1
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Self::Exp => x.exp(),
            Self::ShiftedPower { p } => (1.0 + x.max(0.0)).powf(*p),
            Self::ConstantPlus { m } => m + x.max(0.0).powi(2),
            Self::Tabulated { s, values } => {
                if x <= s[0] {
                    return values[0];
                }
                let k = Self::segment(s, x);
                let slope = (values[k + 1] - values[k]) / (s[k + 1] - s[k]);
                if x >= s[s.len() - 1] {
                    return values[k + 1] + slope.max(0.0) * (x - s[k + 1]);
                }
                values[k] + slope * (x - s[k])
            }
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            Self::Exp => x.exp(),
            Self::ShiftedPower { p } if x > 0.0 => p * (1.0 + x).powf(p - 1.0),
            Self::ShiftedPower { .. } => 0.0,
            Self::ConstantPlus { .. } => 2.0 * x.max(0.0),
            Self::Tabulated { s, values } => {
                if x <= s[0] {
                    return 0.0;
                }
                let k = Self::segment(s, x);
                let slope = (values[k + 1] - values[k]) / (s[k + 1] - s[k]);
                if x >= s[s.len() - 1] {
                    slope.max(0.0)
                } else {
                    slope
                }
            }
        }
    }

    /// `ln f(s)`, finite well past the point where `f(s)` itself overflows.
    pub fn ln_eval(&self, x: f64) -> f64 {
        match self {
            Self::Exp => x,
            Self::ShiftedPower { p } => p * x.max(0.0).ln_1p(),
            _ => self.eval(x).ln(),
        }
    }

    /// `f(s)^{1−q}` via the log form.
    pub fn pow_one_minus_q(&self, x: f64, q: f64) -> f64 {
        ((1.0 - q) * self.ln_eval(x)).exp()
    }
}

/// Diffusion coefficient `σ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DiffusionCoefficient {
    /// `c·s`
    Linear { c: f64 },
    /// `c·s₊^{1+ε}`
    Power { c: f64, eps: f64 },
    /// `c`
    Constant { c: f64 },
}

impl DiffusionCoefficient {
    pub const REGISTRY: [&'static str; 3] = ["linear", "power", "constant"];

    pub fn off() -> Self {
        Self::Constant { c: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Power { eps, .. } if !(*eps > 0.0) => {
                Err(Error::Config(format!("power diffusion exponent eps must be > 0, got {eps}")))
            }
            Self::Linear { c } | Self::Power { c, .. } | Self::Constant { c } if !c.is_finite() => {
                Err(Error::Config("diffusion coefficient c must be finite".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, s: f64) -> f64 {
        match self {
            Self::Linear { c } => c * s,
            Self::Power { c, eps } => c * s.max(0.0).powf(1.0 + eps),
            Self::Constant { c } => *c,
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Self::Linear { c } | Self::Power { c, .. } | Self::Constant { c } => *c == 0.0,
        }
    }

    /// Global Lipschitz constant, when one exists.
    pub fn global_lipschitz(&self) -> Option<f64> {
        match self {
            Self::Linear { c } => Some(c.abs()),
            Self::Constant { .. } => Some(0.0),
            Self::Power { c, .. } => (*c == 0.0).then_some(0.0),
        }
    }
}

/// Superlinear envelope `G` dominating the noise: `σ²(s) ≥ 2G(s²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SuperlinearEnvelope {
    /// `c·s^{1+ε}` on `s > 0`
    Power { c: f64, eps: f64 },
}

impl SuperlinearEnvelope {
    pub const REGISTRY: [&'static str; 1] = ["power"];

    pub fn validate(&self) -> Result<()> {
        let Self::Power { c, eps } = self;
        if !(*c > 0.0 && c.is_finite()) {
            return Err(Error::Config(format!("envelope coefficient c must be > 0, got {c}")));
        }
        if !(*eps > 0.0 && eps.is_finite()) {
            return Err(Error::Config(format!("envelope exponent eps must be > 0, got {eps}")));
        }
        Ok(())
    }

    pub fn eval(&self, s: f64) -> f64 {
        let Self::Power { c, eps } = self;
        c * s.max(0.0).powf(1.0 + eps)
    }
}

/// Initial datum `ξ ≥ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialData {
    Constant { value: f64 },
    /// `scale·φ₁`
    Eigenfunction { scale: f64 },
    /// `amplitude·Π_k sin(π x_k / L_k)`
    Sine { amplitude: f64 },
    /// One value per interior node.
    Nodal { values: Vec<f64> },
}

impl InitialData {
    pub const REGISTRY: [&'static str; 4] = ["constant", "eigenfunction", "sine", "nodal"];
    pub fn sample(&self, grid: &Grid, eigen: &EigenPair) -> Result<Vec<f64>> {
        let u: Vec<f64> = match self {
            Self::Constant { value } => vec![*value; grid.len()],
            Self::Eigenfunction { scale } => eigen.vector.iter().map(|v| scale * v).collect(),
            Self::Sine { amplitude } => {
                let ext = grid.extents().to_vec();
                grid.sample(|x| {
                    amplitude
                        * x.iter()
                            .zip(&ext)
                            .map(|(xi, l)| (std::f64::consts::PI * xi / l).sin())
                            .product::<f64>()
                })
            }
            Self::Nodal { values } => {
                grid.check_shape(values)?;
                values.clone()
            }
        };
        if let Some(i) = u.iter().position(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::Config(format!(
                "initial data must be finite and non-negative; node {i} has {}",
                u[i]
            )));
        }
        Ok(u)
    }
}

/// Everything that defines the continuous problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub lambda: f64,
    pub q: f64,
    pub f: Nonlinearity,
    pub sigma: DiffusionCoefficient,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub envelope: Option<SuperlinearEnvelope>,
    pub initial: InitialData,
    pub t_max: f64,
    pub domain: DomainSpec,
}

impl ProblemSpec {
    /// Range checks. `λ = 0` is accepted so the linear heat flow can serve as a
    /// reference problem.
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.q > 0.0 && self.q.is_finite()) {
            return Err(Error::Config(format!("q must be > 0, got {}", self.q)));
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(Error::Config(format!("t_max must be > 0, got {}", self.t_max)));
        }
        self.f.validate()?;
        self.sigma.validate()?;
        if let Some(g) = &self.envelope {
            g.validate()?;
        }
        Ok(())
    }
}

/// Writes `F(u)` into `out` given `ln f(uᵢ)` and returns `ln ∫_D f(u) dx`.
///
/// The mass is accumulated as a log-sum-exp so that `f(u)` may overflow while
/// the ratio stays representable.
pub fn nonlocal_drift_ln(
    ln_f: &[f64],
    weights: &[f64],
    lambda: f64,
    q: f64,
    out: &mut [f64],
) -> Result<f64> {
    if ln_f.len() != weights.len() || out.len() != ln_f.len() {
        return Err(Error::Shape { expected: weights.len(), got: ln_f.len().min(out.len()) });
    }
    let ln_mass = log_sum_exp(ln_f.iter().zip(weights).map(|(l, w)| l + w.ln()));
    if ln_mass.is_nan() {
        return Err(Error::NonFinite("NaN in f(u)".into()));
    }
    if ln_mass == f64::NEG_INFINITY {
        return Err(Error::Model("quadrature of f(u) is not positive".into()));
    }
    for (o, l) in out.iter_mut().zip(ln_f) {
        *o = if lambda == 0.0 { 0.0 } else { lambda * (l - q * ln_mass).exp() };
    }
    Ok(ln_mass)
}

pub fn log_sum_exp(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + terms.map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// The non-local drift together with `K = (∫_D f(u) dx)^{−q}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Drift {
    pub values: Vec<f64>,
    pub k: f64,
}

pub fn nonlocal_drift(u: &[f64], spec: &ProblemSpec, grid: &Grid) -> Result<Drift> {
    grid.check_shape(u)?;
    if let Some(i) = u.iter().position(|v| v.is_nan()) {
        return Err(Error::NonFinite(format!("NaN in u at node {i}")));
    }
    let ln_f: Vec<f64> = u.iter().map(|&s| spec.f.ln_eval(s)).collect();
    let mut values = vec![0.0; u.len()];
    let ln_mass = nonlocal_drift_ln(&ln_f, grid.weights(), spec.lambda, spec.q, &mut values)?;
    Ok(Drift { values, k: (-spec.q * ln_mass).exp() })
}

/// One line of a growth-condition report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionEntry {
    pub name: String,
    pub passed: bool,
    /// Most adverse sampled value of the tested quantity.
    pub worst: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthReport {
    pub s_lo: f64,
    pub s_hi: f64,
    pub samples: usize,
    pub entries: Vec<ConditionEntry>,
}

impl GrowthReport {
    pub fn passed(&self, name: &str) -> Option<bool> {
        self.entries.iter().find(|e| e.name == name).map(|e| e.passed)
    }

    pub fn all_passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed)
    }
}

fn entry(name: &str, passed: bool, worst: f64, detail: String) -> ConditionEntry {
    ConditionEntry { name: name.into(), passed, worst, detail }
}

/// Smallest normalized second difference of `g` on the sample grid; negative
/// values beyond rounding indicate non-convexity.
fn convexity_margin(g: &dyn Fn(f64) -> f64, s: &[f64]) -> f64 {
    s.windows(3)
        .map(|w| {
            let (a, b, c) = (g(w[0]), g(w[1]), g(w[2]));
            let (h1, h2) = (w[1] - w[0], w[2] - w[1]);
            let second = (c - b) / h2 - (b - a) / h1;
            let scale = a.abs() / h1 + 2.0 * b.abs() / (h1 + h2) + c.abs() / h2;
            if scale == 0.0 {
                0.0
            } else {
                second / scale
            }
        })
        .fold(f64::INFINITY, f64::min)
}

fn monotonicity_margin(g: &dyn Fn(f64) -> f64, s: &[f64]) -> f64 {
    s.windows(2)
        .map(|w| {
            let (a, b) = (g(w[0]), g(w[1]));
            let scale = a.abs() + b.abs();
            if scale == 0.0 {
                0.0
            } else {
                (b - a) / scale
            }
        })
        .fold(f64::INFINITY, f64::min)
}

fn lipschitz_quotient(g: &dyn Fn(f64) -> f64, s: &[f64]) -> f64 {
    s.windows(2).map(|w| ((g(w[1]) - g(w[0])) / (w[1] - w[0])).abs()).fold(0.0, f64::max)
}

const ROUNDING: f64 = 1e-10;

/// Samples the structural hypotheses on `f`, `σ` and `G` over `[s_lo, s_hi]`.
pub fn validate_growth_conditions(
    spec: &ProblemSpec,
    s_lo: f64,
    s_hi: f64,
    samples: usize,
) -> Result<GrowthReport> {
    if !(s_lo < s_hi) || samples < 3 {
        return Err(Error::Config("growth check needs s_lo < s_hi and at least 3 samples".into()));
    }
    let s: Vec<f64> = (0..samples)
        .map(|k| s_lo + (s_hi - s_lo) * k as f64 / (samples - 1) as f64)
        .collect();
    let f = |x: f64| spec.f.eval(x);
    let q = spec.q;
    let fq = |x: f64| spec.f.pow_one_minus_q(x, q);
    let mut entries = Vec::new();

    let fmin = s.iter().map(|&x| f(x)).fold(f64::INFINITY, f64::min);
    entries.push(entry("f_positive", fmin > 0.0, fmin, "min f".into()));
    let m = monotonicity_margin(&f, &s);
    entries.push(entry("f_increasing", m >= -ROUNDING, m, "min relative increment of f".into()));
    let c = convexity_margin(&f, &s);
    entries.push(entry("f_convex", c >= -ROUNDING, c, "min normalized second difference of f".into()));
    let c = convexity_margin(&fq, &s);
    entries.push(entry(
        "f_pow_convex",
        c >= -ROUNDING,
        c,
        "min normalized second difference of f^(1-q)".into(),
    ));
    let tail = improper_integral(&fq, s_lo, 1e-8);
    let (ok, worst, detail) = match tail {
        Ok(Integral::Converged { value, .. }) => (true, value, format!("integral from {s_lo}")),
        Ok(Integral::Divergent) => (false, f64::INFINITY, "divergent tail".into()),
        Err(e) => (false, f64::NAN, e.to_string()),
    };
    entries.push(entry("f_pow_tail_integrable", ok, worst, detail));

    let sigma = |x: f64| spec.sigma.eval(x);
    let c = convexity_margin(&sigma, &s);
    entries.push(entry("sigma_convex", c >= -ROUNDING, c, "min normalized second difference of sigma".into()));

    if let Some(g) = &spec.envelope {
        let gp: Vec<f64> = s.iter().copied().filter(|&x| x > 0.0).collect();
        let worst = gp
            .iter()
            .map(|&x| {
                let lhs = sigma(x).powi(2);
                let rhs = 2.0 * g.eval(x * x);
                (lhs - rhs) / lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE)
            })
            .fold(f64::INFINITY, f64::min);
        entries.push(entry(
            "sigma_dominates_envelope",
            gp.is_empty() || worst >= -1e-12,
            worst,
            "min relative gap sigma^2(s) - 2G(s^2) over s > 0".into(),
        ));
        let ge = |x: f64| g.eval(x);
        let gmin = gp.iter().map(|&x| ge(x)).fold(f64::INFINITY, f64::min);
        entries.push(entry("envelope_positive", gmin > 0.0, gmin, "min G over s > 0".into()));
        let m = monotonicity_margin(&ge, &gp);
        entries.push(entry("envelope_increasing", m > 0.0, m, "min relative increment of G".into()));
        let c = convexity_margin(&ge, &gp);
        entries.push(entry("envelope_convex", c >= -ROUNDING, c, "min normalized second difference of G".into()));
        let b = if s_lo > 0.0 { s_lo } else { 1.0 };
        let (ok, worst, detail) = match improper_integral(&ge, b, 1e-8) {
            Ok(Integral::Converged { value, .. }) => (true, value, format!("integral of 1/G from {b}")),
            Ok(Integral::Divergent) => (false, f64::INFINITY, "divergent tail".into()),
            Err(e) => (false, f64::NAN, e.to_string()),
        };
        entries.push(entry("envelope_tail_integrable", ok, worst, detail));
    }

    // Local Lipschitz moduli are reported, never gated.
    let lf = lipschitz_quotient(&f, &s);
    entries.push(entry("f_lipschitz_modulus", lf.is_finite(), lf, "max difference quotient".into()));
    let ls = lipschitz_quotient(&sigma, &s);
    entries.push(entry("sigma_lipschitz_modulus", ls.is_finite(), ls, "max difference quotient".into()));

    Ok(GrowthReport { s_lo, s_hi, samples, entries })
}
