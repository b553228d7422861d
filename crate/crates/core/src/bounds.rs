//! Blow-up thresholds and blow-up-time upper bounds with explicit constants.

use std::collections::BinaryHeap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::geometry::Grid;
use crate::problem::{Nonlinearity, SuperlinearEnvelope};
use crate::spectral::EigenPair;
use crate::{Error, Result};

/// Outcome of `∫_b^∞ ds / g(s)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Integral {
    Converged { value: f64, error: f64 },
    Divergent,
}

impl Integral {
    pub fn value(self) -> Option<f64> {
        match self {
            Self::Converged { value, .. } => Some(value),
            Self::Divergent => None,
        }
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// 15-point Kronrod estimate and its difference from the embedded 7-point Gauss rule.
fn gk15(f: &mut dyn FnMut(f64) -> Result<f64>, a: f64, b: f64) -> Result<(f64, f64)> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c)?;
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for k in 0..7 {
        let x = h * XGK[k];
        let pair = f(c - x)? + f(c + x)?;
        kronrod += WGK[k] * pair;
        if k % 2 == 1 {
            gauss += WG[k / 2] * pair;
        }
    }
    Ok((kronrod * h, ((kronrod - gauss) * h).abs()))
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

const MAX_PIECES: usize = 5000;

/// Globally adaptive Gauss–Kronrod on `[a, b]`; stops when the summed error
/// estimate is below `tol · max(1, |I|)`.
pub fn adaptive_integral(
    f: &mut dyn FnMut(f64) -> Result<f64>,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<(f64, f64)> {
    let (value, error) = gk15(f, a, b)?;
    let mut heap = BinaryHeap::new();
    heap.push(Piece { a, b, value, error });
    let (mut total, mut err) = (value, error);
    while err > tol * total.abs().max(1.0) {
        if heap.len() >= MAX_PIECES {
            return Err(Error::Quadrature(format!(
                "error estimate {err:e} above tolerance after {MAX_PIECES} subintervals"
            )));
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        let (v1, e1) = gk15(f, worst.a, mid)?;
        let (v2, e2) = gk15(f, mid, worst.b)?;
        total += v1 + v2 - worst.value;
        err += e1 + e2 - worst.error;
        heap.push(Piece { a: worst.a, b: mid, value: v1, error: e1 });
        heap.push(Piece { a: mid, b: worst.b, value: v2, error: e2 });
    }
    // Re-sum to shed the drift of the running totals.
    let value = heap.iter().map(|p| p.value).sum();
    let error = heap.iter().map(|p| p.error).sum();
    Ok((value, error))
}

/// Power-law decay exponent of `1/g` far out in the tail; `∞` if `g` overflows.
fn tail_exponent(g: &dyn Fn(f64) -> f64, b: f64) -> Result<f64> {
    let s1 = b.abs() + 1e4;
    let s2 = b.abs() + 1e8;
    let (g1, g2) = (g(s1), g(s2));
    if g1.is_nan() || g2.is_nan() || g1 < 0.0 || g2 < 0.0 {
        return Err(Error::Domain(format!("g must be positive on the tail, got g({s2:e}) = {g2}")));
    }
    if g1.is_infinite() || g2.is_infinite() {
        return Ok(f64::INFINITY);
    }
    // Underflow to zero: 1/g grows without bound.
    if g1 == 0.0 || g2 == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok((g2 / g1).ln() / (s2 / s1).ln())
}

/// `∫_b^∞ ds / g(s)` via `s = b + r/(1−r)`.
///
/// The tail is declared divergent when `1/g` decays no faster than `1/s`.
pub fn improper_integral(g: &dyn Fn(f64) -> f64, b: f64, tol: f64) -> Result<Integral> {
    if tail_exponent(g, b)? <= 1.0 + 1e-3 {
        return Ok(Integral::Divergent);
    }
    let mut integrand = |r: f64| -> Result<f64> {
        let t = 1.0 - r;
        let s = b + r / t;
        let gs = g(s);
        if gs.is_nan() || gs <= 0.0 {
            return Err(Error::Domain(format!("g({s}) = {gs} is not positive")));
        }
        Ok(1.0 / (gs * t * t))
    };
    let (value, error) = adaptive_integral(&mut integrand, 0.0, 1.0, tol)?;
    Ok(Integral::Converged { value, error })
}

const SCAN_POINTS: usize = 2000;

/// Largest root of `h` on `(0, search_hi]`, assuming `h(search_hi) > 0`.
///
/// Scans downward on a uniform grid for the first sign change, then bisects
/// to `1e−12` relative width. `None` means `h > 0` on every scanned point.
pub fn largest_root(h: &dyn Fn(f64) -> f64, search_hi: f64) -> Result<Option<f64>> {
    if !(search_hi > 0.0 && search_hi.is_finite()) {
        return Err(Error::Domain(format!("search_hi must be positive and finite, got {search_hi}")));
    }
    let eval = |s: f64| -> Result<f64> {
        let v = h(s);
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("h({s}) = {v}")));
        }
        Ok(v)
    };
    if eval(search_hi)? <= 0.0 {
        return Err(Error::Domain(format!("h is not positive at search_hi = {search_hi}")));
    }
    let step = search_hi / SCAN_POINTS as f64;
    let mut hi = search_hi;
    for k in (1..SCAN_POINTS).rev() {
        let lo = step * k as f64;
        let v = eval(lo)?;
        if v == 0.0 {
            return Ok(Some(lo));
        }
        if v < 0.0 {
            let (mut a, mut b) = (lo, hi);
            while b - a > 1e-12 * b {
                let mid = 0.5 * (a + b);
                if eval(mid)? > 0.0 {
                    b = mid;
                } else {
                    a = mid;
                }
            }
            return Ok(Some(0.5 * (a + b)));
        }
        hi = lo;
    }
    Ok(None)
}

/// Maximizer and maximum of `ratio` on `(lo, ∞)` for a function that rises
/// then decays. Fails if no decay shows up within 200 doublings.
fn sup_on_half_line(ratio: &dyn Fn(f64) -> f64, lo: f64) -> Result<(f64, f64)> {
    let mut s_hi = lo.max(0.0) * 2.0 + 1.0;
    let mut prev = ratio(s_hi);
    let mut decreasing = 0;
    let mut doublings = 0;
    while decreasing < 3 {
        doublings += 1;
        if doublings > 200 {
            return Err(Error::NotApplicable(
                "s / f^(1-q)(s) does not decay; f^(1-q) is not superlinear".into(),
            ));
        }
        s_hi *= 2.0;
        let v = ratio(s_hi);
        if v.is_nan() {
            return Err(Error::NonFinite(format!("objective at s = {s_hi}")));
        }
        decreasing = if v < prev { decreasing + 1 } else { 0 };
        prev = v;
    }
    let n = 1000;
    let grid: Vec<f64> = (0..=n).map(|k| lo + (s_hi - lo) * k as f64 / n as f64).collect();
    let (k, _) = grid
        .iter()
        .enumerate()
        .map(|(k, &s)| (k, ratio(s)))
        .fold((0, f64::NEG_INFINITY), |acc, (k, v)| if v > acc.1 { (k, v) } else { acc });
    let (mut a, mut b) = (grid[k.saturating_sub(1)], grid[(k + 1).min(n)]);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let (mut f1, mut f2) = (ratio(x1), ratio(x2));
    while b - a > 1e-12 * b.abs().max(1.0) {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = ratio(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = ratio(x1);
        }
    }
    let s = 0.5 * (a + b);
    let v = ratio(s).max(ratio(lo));
    let arg = if ratio(lo) > ratio(s) { lo } else { s };
    Ok((arg, v))
}

/// Doubles from `start` until `h` turns positive.
fn positive_bracket(h: &dyn Fn(f64) -> f64, start: f64) -> Result<f64> {
    let mut s = start.max(1.0);
    for _ in 0..200 {
        let v = h(s);
        if v > 0.0 && v.is_finite() {
            return Ok(s);
        }
        if v == f64::INFINITY {
            // Overflow past the root: back off to the last finite point.
            return Ok(s);
        }
        s *= 2.0;
    }
    Err(Error::NotApplicable("function never becomes positive".into()))
}

/// Constants of the large-λ blow-up theorem.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NonlocalLambdaBound {
    pub m: f64,
    pub r: f64,
    pub b: f64,
    pub b_argmax: f64,
    pub lambda_min: f64,
    /// `λR − λ₁B`, the largest admissible `Λ`; `None` when `λ ≤ λ_min`.
    pub big_lambda: Option<f64>,
    pub t_star: Option<f64>,
    /// `∫_{Ψ₀}^∞ ds / (λR f^{1−q}(s) − λ₁ s)`, the blow-up time of the comparison ODE.
    pub t_star_ode: Option<f64>,
}

/// `min φ₁` over `D₀ = {x : dist(x, ∂D) ≥ δ}`.
pub fn inner_minimum(grid: &Grid, eigen: &EigenPair, delta: f64) -> Result<f64> {
    Ok(eigen.min_over(&grid.inner_nodes(delta)?))
}

/// `R = (m / (ℓ+1))^q`.
pub fn cover_constant(m: f64, ell: usize, q: f64) -> Result<f64> {
    let r = (m / (ell as f64 + 1.0)).powf(q);
    if !(r > 0.0 && r <= 1.0) {
        return Err(Error::Model(format!("R = {r} is outside (0, 1]; m = {m}, ell = {ell}")));
    }
    Ok(r)
}

#[allow(clippy::too_many_arguments)]
pub fn bound_nonlocal_lambda(
    f: &Nonlinearity,
    lambda: f64,
    q: f64,
    grid: &Grid,
    eigen: &EigenPair,
    psi0: f64,
    delta: f64,
    ell: usize,
) -> Result<NonlocalLambdaBound> {
    if !(psi0 >= 0.0) {
        return Err(Error::Domain(format!("psi0 must be >= 0, got {psi0}")));
    }
    let m = inner_minimum(grid, eigen, delta)?;
    let r = cover_constant(m, ell, q)?;
    let fq = |s: f64| f.pow_one_minus_q(s, q);
    let (b_argmax, b) = sup_on_half_line(&|s: f64| s / fq(s), psi0)?;
    let lambda1 = eigen.value;
    let lambda_min = lambda1 * b / r;
    let mut out = NonlocalLambdaBound {
        m,
        r,
        b,
        b_argmax,
        lambda_min,
        big_lambda: None,
        t_star: None,
        t_star_ode: None,
    };
    if lambda > lambda_min {
        let big = lambda * r - lambda1 * b;
        out.big_lambda = Some(big);
        out.t_star = improper_integral(&fq, psi0, 1e-10)?.value().map(|v| v / big);
        let rhs = |s: f64| lambda * r * fq(s) - lambda1 * s;
        out.t_star_ode = improper_integral(&rhs, psi0, 1e-10)?.value();
    }
    Ok(out)
}

/// Constants of the large-data blow-up theorem.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NonlocalDataBound {
    /// Largest root of `α(s) = λR f^{1−q}(s) − λ₁ s`, `0` when `α > 0` throughout.
    pub zeta: f64,
    /// `inf_{s ≥ Ψ₀} α(s)/f^{1−q}(s)`, present when `Ψ₀ > ζ`.
    pub big_lambda_1: Option<f64>,
    pub t_star: Option<f64>,
}

pub fn bound_nonlocal_data(
    f: &Nonlinearity,
    lambda: f64,
    q: f64,
    lambda1: f64,
    r: f64,
    psi0: f64,
) -> Result<NonlocalDataBound> {
    let fq = |s: f64| f.pow_one_minus_q(s, q);
    let alpha = |s: f64| lambda * r * fq(s) - lambda1 * s;
    let hi = positive_bracket(&alpha, psi0)?;
    let hi = finite_upper(&alpha, hi);
    let zeta = largest_root(&alpha, hi)?.unwrap_or(0.0);
    let mut out = NonlocalDataBound { zeta, big_lambda_1: None, t_star: None };
    if psi0 > zeta {
        let (_, sup) = sup_on_half_line(&|s: f64| s / fq(s), psi0)?;
        let l1 = lambda * r - lambda1 * sup;
        if l1 > 0.0 {
            out.big_lambda_1 = Some(l1);
            out.t_star = improper_integral(&fq, psi0, 1e-10)?.value().map(|v| v / l1);
        }
    }
    Ok(out)
}

/// Steps back from an overflowing `search_hi` to a point where `h` is finite and positive.
fn finite_upper(h: &dyn Fn(f64) -> f64, mut hi: f64) -> f64 {
    while !h(hi).is_finite() && hi > 1e-300 {
        hi *= 0.5;
    }
    hi
}

/// Constants of the noise-induced blow-up theorem.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseBound {
    /// Largest root of `β(s) = 2q̂₁G(s) − 2λ₁s`.
    pub gamma: f64,
    /// `∫_{θ₀}^∞ ds / G(s)` when `θ₀ > γ`.
    pub t_star: Option<f64>,
    /// `∫_{θ₀}^∞ ds / β(s)` when `θ₀ > γ`.
    pub t_star_ode: Option<f64>,
}

pub fn bound_noise(
    theta0: f64,
    envelope: &SuperlinearEnvelope,
    qhat1: f64,
    lambda1: f64,
) -> Result<NoiseBound> {
    if !(qhat1 > 0.0) {
        return Err(Error::NotApplicable(format!(
            "coercivity constant q1_hat = {qhat1} is not positive; the covariance is not certified"
        )));
    }
    let g = |s: f64| envelope.eval(s);
    let beta = |s: f64| 2.0 * qhat1 * g(s) - 2.0 * lambda1 * s;
    let hi = finite_upper(&beta, positive_bracket(&beta, theta0)?);
    let gamma = largest_root(&beta, hi)?.unwrap_or(0.0);
    let mut out = NoiseBound { gamma, t_star: None, t_star_ode: None };
    if theta0 > gamma {
        out.t_star = improper_integral(&g, theta0, 1e-10)?.value();
        out.t_star_ode = improper_integral(&beta, theta0, 1e-10)?.value();
    }
    Ok(out)
}

/// Flat summary of every bound with the inputs that produced it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsReport {
    pub lambda: f64,
    pub q: f64,
    pub lambda1: f64,
    pub measure: f64,
    pub psi0: f64,
    pub delta: f64,
    pub ell: usize,
    pub m: Option<f64>,
    pub r: Option<f64>,
    pub b: Option<f64>,
    pub b_argmax: Option<f64>,
    pub lambda_min: Option<f64>,
    pub big_lambda: Option<f64>,
    pub t_star_nonlocal: Option<f64>,
    pub t_star_nonlocal_ode: Option<f64>,
    pub zeta: Option<f64>,
    pub big_lambda_1: Option<f64>,
    pub t_star_data: Option<f64>,
    pub theta0: Option<f64>,
    pub q1: Option<f64>,
    pub qhat1: Option<f64>,
    pub gamma: Option<f64>,
    pub t_star_noise: Option<f64>,
    pub t_star_noise_ode: Option<f64>,
    pub notes: Vec<String>,
}

/// Default number of boundary patches in the convexity cover.
pub fn default_ell(dimension: usize) -> usize {
    if dimension == 1 {
        2
    } else {
        8
    }
}

/// Default `D₀` margin: a tenth of the shortest extent.
pub fn default_delta(grid: &Grid) -> f64 {
    0.1 * grid.extents().iter().copied().fold(f64::INFINITY, f64::min)
}

/// Inputs to [`compute_bounds`] beyond the problem itself.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundsInputs {
    pub psi0: f64,
    pub delta: f64,
    pub ell: usize,
    pub theta0: Option<f64>,
    /// Smallest eigenvalue of the discretized covariance operator, when available.
    pub q1: Option<f64>,
}

#[allow(clippy::too_many_arguments)]
pub fn compute_bounds(
    f: &Nonlinearity,
    lambda: f64,
    q: f64,
    envelope: Option<&SuperlinearEnvelope>,
    grid: &Grid,
    eigen: &EigenPair,
    inputs: &BoundsInputs,
) -> Result<BoundsReport> {
    let mut rep = BoundsReport {
        lambda,
        q,
        lambda1: eigen.value,
        measure: grid.measure(),
        psi0: inputs.psi0,
        delta: inputs.delta,
        ell: inputs.ell,
        m: None,
        r: None,
        b: None,
        b_argmax: None,
        lambda_min: None,
        big_lambda: None,
        t_star_nonlocal: None,
        t_star_nonlocal_ode: None,
        zeta: None,
        big_lambda_1: None,
        t_star_data: None,
        theta0: inputs.theta0,
        q1: inputs.q1,
        qhat1: inputs.q1.map(|q1| q1 / grid.measure()),
        gamma: None,
        t_star_noise: None,
        t_star_noise_ode: None,
        notes: vec!["Lambda is taken as lambda*R - lambda1*B, the largest admissible value".into()],
    };
    match bound_nonlocal_lambda(f, lambda, q, grid, eigen, inputs.psi0, inputs.delta, inputs.ell) {
        Ok(b) => {
            rep.m = Some(b.m);
            rep.r = Some(b.r);
            rep.b = Some(b.b);
            rep.b_argmax = Some(b.b_argmax);
            rep.lambda_min = Some(b.lambda_min);
            rep.big_lambda = b.big_lambda;
            rep.t_star_nonlocal = b.t_star;
            rep.t_star_nonlocal_ode = b.t_star_ode;
            if b.big_lambda.is_none() {
                rep.notes.push(format!("large-lambda bound not applicable: lambda <= lambda_min = {}", b.lambda_min));
            }
            match bound_nonlocal_data(f, lambda, q, eigen.value, b.r, inputs.psi0) {
                Ok(d) => {
                    rep.zeta = Some(d.zeta);
                    rep.big_lambda_1 = d.big_lambda_1;
                    rep.t_star_data = d.t_star;
                    if d.big_lambda_1.is_none() {
                        rep.notes.push(format!("large-data bound: no conclusion, psi0 <= zeta = {}", d.zeta));
                    }
                }
                Err(e) => rep.notes.push(format!("large-data bound: {e}")),
            }
        }
        Err(e @ Error::Config(_)) => return Err(e),
        Err(e) => rep.notes.push(format!("non-local bounds: {e}")),
    }
    match (envelope, rep.qhat1, inputs.theta0) {
        (Some(g), Some(qhat1), Some(theta0)) => {
            rep.notes.push("q1_hat is q1 / |D|".into());
            match bound_noise(theta0, g, qhat1, eigen.value) {
                Ok(n) => {
                    rep.gamma = Some(n.gamma);
                    rep.t_star_noise = n.t_star;
                    rep.t_star_noise_ode = n.t_star_ode;
                    if n.t_star.is_none() {
                        rep.notes.push(format!("noise bound: no conclusion, theta0 <= gamma = {}", n.gamma));
                    }
                }
                Err(e) => rep.notes.push(format!("noise bound: {e}")),
            }
        }
        (None, ..) => rep.notes.push("noise bound skipped: no envelope G configured".into()),
        (_, None, _) => rep.notes.push("noise bound skipped: q1 unavailable for this noise model".into()),
        (_, _, None) => rep.notes.push("noise bound skipped: theta0 unavailable".into()),
    }
    Ok(rep)
}

impl BoundsReport {
    /// Two aligned columns, one quantity per line.
    pub fn to_table(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.6e}"));
        let rows: Vec<(&str, String)> = vec![
            ("lambda", format!("{:.6e}", self.lambda)),
            ("q", format!("{:.6e}", self.q)),
            ("lambda1", format!("{:.6e}", self.lambda1)),
            ("|D|", format!("{:.6e}", self.measure)),
            ("psi0", format!("{:.6e}", self.psi0)),
            ("delta", format!("{:.6e}", self.delta)),
            ("ell", self.ell.to_string()),
            ("m", opt(self.m)),
            ("R", opt(self.r)),
            ("B", opt(self.b)),
            ("argmax B", opt(self.b_argmax)),
            ("lambda_min", opt(self.lambda_min)),
            ("Lambda", opt(self.big_lambda)),
            ("T* nonlocal", opt(self.t_star_nonlocal)),
            ("T* nonlocal (ode)", opt(self.t_star_nonlocal_ode)),
            ("zeta", opt(self.zeta)),
            ("Lambda_1", opt(self.big_lambda_1)),
            ("T* data", opt(self.t_star_data)),
            ("theta0", opt(self.theta0)),
            ("q1", opt(self.q1)),
            ("q1_hat", opt(self.qhat1)),
            ("gamma", opt(self.gamma)),
            ("T* noise", opt(self.t_star_noise)),
            ("T* noise (ode)", opt(self.t_star_noise_ode)),
        ];
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k:<width$}  {v}");
        }
        for n in &self.notes {
            let _ = writeln!(out, "note: {n}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, DomainSpec};
    use crate::operator::assemble_laplacian;
    use crate::spectral::{principal_eigenpair, DEFAULT_TOLERANCE};
    use std::f64::consts::{E, PI};

    fn converged(i: Integral) -> f64 {
        i.value().expect("convergent")
    }

    #[test]
    fn exponential_tails() {
        assert!((converged(improper_integral(&|s: f64| s.exp(), 0.0, 1e-10).unwrap()) - 1.0).abs() < 1e-9);
        assert!((converged(improper_integral(&|s: f64| (s / 2.0).exp(), 0.0, 1e-10).unwrap()) - 2.0).abs() < 1e-9);
        let v = converged(improper_integral(&|s: f64| 0.5 * s * s, 4.0, 1e-10).unwrap());
        assert!((v - 0.5).abs() < 1e-9);
    }

    #[test]
    fn harmonic_tail_diverges() {
        assert_eq!(improper_integral(&|s: f64| 1.0 + s, 0.0, 1e-8).unwrap(), Integral::Divergent);
        assert_eq!(improper_integral(&|s: f64| (-s).exp(), 0.0, 1e-8).unwrap(), Integral::Divergent);
    }

    #[test]
    fn non_positive_integrand_is_domain_error() {
        let r = improper_integral(&|s: f64| s * s - 1.0, 0.0, 1e-8);
        assert!(matches!(r, Err(Error::Domain(_))));
    }

    #[test]
    fn halving_tolerance_is_stable() {
        let g = |s: f64| (1.0 + s).powf(1.5);
        let a = converged(improper_integral(&g, 0.0, 1e-6).unwrap());
        let b = converged(improper_integral(&g, 0.0, 5e-7).unwrap());
        assert!((a - b).abs() < 1e-6 * a.max(1.0));
        assert!((b - 2.0).abs() < 1e-6);
    }

    #[test]
    fn roots() {
        let beta = |s: f64| s * s - 2.0 * PI * PI * s;
        let g = largest_root(&beta, 1000.0).unwrap().unwrap();
        assert!((g - 2.0 * PI * PI).abs() < 1e-9 * g);
        let r = largest_root(&|s: f64| s - 1.0, 10.0).unwrap().unwrap();
        assert!((r - 1.0).abs() < 1e-11);
        let alpha = |s: f64| 100.0 * (s / 2.0).exp() - PI * PI * s;
        assert_eq!(largest_root(&alpha, 50.0).unwrap(), None);
        assert!(largest_root(&|s: f64| 1.0 - s, 10.0).is_err());
        assert!(largest_root(&|_| f64::NAN, 10.0).is_err());
    }

    #[test]
    fn linear_toy_alpha() {
        let r = largest_root(&|s: f64| s - 1.0, 30.0).unwrap().unwrap();
        assert!((r - 1.0).abs() < 1e-11);
    }

    #[test]
    fn b_constant_for_exp_half() {
        let (arg, b) = sup_on_half_line(&|s: f64| s * (-s / 2.0).exp(), 0.0).unwrap();
        assert!((b - 2.0 / E).abs() < 1e-12);
        assert!((arg - 2.0).abs() < 1e-5);
        let (arg, b) = sup_on_half_line(&|s: f64| s * (-s / 2.0).exp(), 5.0).unwrap();
        assert_eq!(arg, 5.0);
        assert!((b - 5.0 * (-2.5f64).exp()).abs() < 1e-14);
    }

    fn unit_interval() -> (Grid, EigenPair) {
        let g = build_grid(&DomainSpec::interval(1.0, 255)).unwrap();
        let e = principal_eigenpair(&assemble_laplacian(&g), &g, DEFAULT_TOLERANCE).unwrap();
        (g, e)
    }

    #[test]
    fn nonlocal_lambda_constants() {
        let (g, e) = unit_interval();
        let b = bound_nonlocal_lambda(&Nonlinearity::Exp, 100.0, 0.5, &g, &e, 0.0, 0.1, 2).unwrap();
        // The first node past the margin sits at 26/256, slightly inside D₀.
        let x0 = 26.0 / 256.0;
        assert!((b.m - 0.5 * PI * (PI * x0).sin()).abs() < 1e-4);
        assert!((b.m - 0.4854).abs() < 1e-2);
        assert!((b.b - 2.0 / E).abs() < 1e-10);
        let big = b.big_lambda.unwrap();
        assert!((big - (100.0 * b.r - e.value * b.b)).abs() < 1e-12);
        assert!((b.t_star.unwrap() - 2.0 / big).abs() < 1e-8);
        assert!(b.t_star_ode.unwrap() <= b.t_star.unwrap());
        let low = bound_nonlocal_lambda(&Nonlinearity::Exp, 0.5 * b.lambda_min, 0.5, &g, &e, 0.0, 0.1, 2).unwrap();
        assert!(low.t_star.is_none());
        assert!(matches!(
            bound_nonlocal_lambda(&Nonlinearity::Exp, 1.0, 0.5, &g, &e, 0.0, 0.6, 2),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn t_star_nonincreasing_in_lambda() {
        let (g, e) = unit_interval();
        let base = bound_nonlocal_lambda(&Nonlinearity::Exp, 1.0, 0.5, &g, &e, 0.0, 0.1, 2).unwrap();
        let mut prev = f64::INFINITY;
        for k in 1..20 {
            let lambda = base.lambda_min * (1.0 + 0.25 * k as f64);
            let t = bound_nonlocal_lambda(&Nonlinearity::Exp, lambda, 0.5, &g, &e, 0.0, 0.1, 2)
                .unwrap()
                .t_star
                .unwrap();
            assert!(t <= prev);
            prev = t;
        }
    }

    #[test]
    fn data_bound_root_is_consistent() {
        let d = bound_nonlocal_data(&Nonlinearity::Exp, 1.0, 0.5, PI * PI, 1.0, 0.0).unwrap();
        let alpha = |s: f64| (s / 2.0).exp() - PI * PI * s;
        assert!(d.zeta > 0.0);
        assert!(alpha(d.zeta).abs() < 1e-10 * (d.zeta / 2.0).exp());
        assert!(d.t_star.is_none());
        let above = bound_nonlocal_data(&Nonlinearity::Exp, 1.0, 0.5, PI * PI, 1.0, d.zeta + 1.0).unwrap();
        let l1 = above.big_lambda_1.unwrap();
        assert!(l1 > 0.0);
        let expect = 2.0 * (-(d.zeta + 1.0) / 2.0).exp() / l1;
        assert!((above.t_star.unwrap() - expect).abs() < 1e-8 * expect);
        let none = bound_nonlocal_data(&Nonlinearity::Exp, 100.0, 0.5, PI * PI, 1.0, 0.5).unwrap();
        assert_eq!(none.zeta, 0.0);
    }

    #[test]
    fn noise_bound_quadratic_envelope() {
        let g = SuperlinearEnvelope::Power { c: 0.5, eps: 1.0 };
        let (qhat1, lambda1) = (1.0, PI * PI);
        let gamma = 2.0 * lambda1 / qhat1;
        let n = bound_noise(3.0 * gamma, &g, qhat1, lambda1).unwrap();
        assert!((n.gamma - gamma).abs() < 1e-9 * gamma);
        assert!((n.t_star.unwrap() - 2.0 / (3.0 * gamma)).abs() < 1e-10);
        let half = bound_noise(gamma / 2.0, &g, qhat1, lambda1).unwrap();
        assert!(half.t_star.is_none());
        assert!(matches!(bound_noise(1.0, &g, 0.0, lambda1), Err(Error::NotApplicable(_))));
    }

    #[test]
    fn report_table_lists_every_quantity() {
        let (g, e) = unit_interval();
        let inputs = BoundsInputs { psi0: 0.0, delta: 0.1, ell: 2, theta0: None, q1: None };
        let rep = compute_bounds(&Nonlinearity::Exp, 50.0, 0.5, None, &g, &e, &inputs).unwrap();
        assert!((rep.b.unwrap() - 0.7358).abs() < 1e-4);
        let table = rep.to_table();
        assert!(table.contains("lambda_min"));
        assert!(table.contains("noise bound skipped"));
        let json = serde_json::to_value(&rep).unwrap();
        assert!(json["gamma"].is_null());
    }
}
