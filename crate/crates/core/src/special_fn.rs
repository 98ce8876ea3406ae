//! Mittag-Leffler functions, the normal CDF, the fractional resolvent
//! kernel and the explicit Gronwall-type solutions built from it.

use std::f64::consts::{PI, SQRT_2};

use libm::{erfc, lgamma as ln_gamma, tgamma as gamma};

use crate::error::{Error, Result};
use crate::quadrature;

/// Switch from the power series to the exponential asymptotic once
/// `|z|^(1/a)` exceeds this value.
pub const ASYMPTOTIC_SWITCH: f64 = 30.0;

/// `|z|^(1/a)` beyond which `exp(z^(1/a))` no longer fits in an f64.
pub const OVERFLOW_GUARD: f64 = 700.0;

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Upper tail `1 - Φ(x)` without cancellation.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

/// `1/Γ(x)`, zero at the poles of Γ.
pub fn recip_gamma(x: f64) -> f64 {
    if x <= 0.0 && x == x.floor() {
        return 0.0;
    }
    1.0 / gamma(x)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MittagParams {
    pub a: f64,
    pub b: f64,
    pub series_tol: f64,
    pub max_terms: usize,
}

impl MittagParams {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        Self::with_tolerance(a, b, 1e-16, 20_000)
    }

    pub fn with_tolerance(a: f64, b: f64, series_tol: f64, max_terms: usize) -> Result<Self> {
        if !(a > 0.0 && b > 0.0 && series_tol > 0.0) || !a.is_finite() || !b.is_finite() {
            return Err(Error::Parameter(format!(
                "Mittag-Leffler indices need a > 0, b > 0, tol > 0 (got a={a}, b={b}, tol={series_tol})"
            )));
        }
        Ok(Self {
            a,
            b,
            series_tol,
            max_terms,
        })
    }
}

/// Two-parameter Mittag-Leffler function `E_{a,b}(z)` for real `z`.
///
/// Positive arguments with `a <= 1` and `z^(1/a) > 30` use the exponential
/// asymptotic; negative arguments with `a < 1` and `|z| > 1` use the
/// integral representation on the negative axis, which avoids the
/// cancellation of the alternating series. Everything else sums the series.
pub fn mittag_leffler(p: &MittagParams, z: f64) -> Result<f64> {
    if !z.is_finite() {
        return Err(Error::Domain(format!("non-finite Mittag-Leffler argument {z}")));
    }
    if z == 0.0 {
        return Ok(recip_gamma(p.b));
    }
    let scale = z.abs().powf(1.0 / p.a);
    if z > 0.0 {
        if scale > OVERFLOW_GUARD {
            return Err(Error::Overflow(format!(
                "E_{{{},{}}}({z}): z^(1/a) = {scale:.1} exceeds {OVERFLOW_GUARD}",
                p.a, p.b
            )));
        }
        if p.a <= 1.0 && scale > ASYMPTOTIC_SWITCH {
            return Ok(mittag_leffler_asymptotic(p, z));
        }
        return mittag_leffler_series(p, z);
    }
    if p.a < 1.0 && z < -1.0 {
        return mittag_leffler_negative(p, z);
    }
    if p.a == 1.0 && z < -1.0 {
        return Ok(mittag_leffler_kummer(p.b, z));
    }
    mittag_leffler_series(p, z)
}

/// `E_{1,b}(z) = e^z 1F1(b-1; b; -z) / Γ(b)`; for `z < 0` the
/// hypergeometric terms `(b-1)/(b-1+k) |z|^k / k!` share one sign past `k = 0`.
fn mittag_leffler_kummer(b: f64, z: f64) -> f64 {
    let x = -z;
    let mut power = 1.0;
    let mut sum = 1.0;
    if b != 1.0 {
        for k in 1..10_000 {
            power *= x / k as f64;
            let term = (b - 1.0) / (b - 1.0 + k as f64) * power;
            sum += term;
            if term.abs() <= 1e-17 * sum.abs() && k as f64 > x {
                break;
            }
        }
    }
    z.exp() * sum * recip_gamma(b)
}

/// Direct power series `Σ z^k / Γ(ak + b)` in log space.
pub fn mittag_leffler_series(p: &MittagParams, z: f64) -> Result<f64> {
    if z == 0.0 {
        return Ok(recip_gamma(p.b));
    }
    let ln_abs = z.abs().ln();
    let negative = z < 0.0;
    let mut sum = 0.0;
    let mut comp = 0.0;
    let mut abs_sum = 0.0f64;
    let mut prev = f64::INFINITY;
    for k in 0..p.max_terms {
        let arg = p.a * k as f64 + p.b;
        let magnitude = if arg <= 0.0 && arg == arg.floor() {
            0.0
        } else {
            let lg = ln_gamma(arg);
            let sign_g = if arg > 0.0 || (arg.floor() as i64) % 2 == 0 { 1.0 } else { -1.0 };
            sign_g * (k as f64 * ln_abs - lg).exp()
        };
        if !magnitude.is_finite() {
            return Err(Error::Overflow(format!(
                "series term {k} of E_{{{},{}}}({z}) overflows",
                p.a, p.b
            )));
        }
        let term = if negative && k % 2 == 1 { -magnitude } else { magnitude };
        // Kahan–Neumaier summation.
        let t = sum + term;
        if sum.abs() >= term.abs() {
            comp += (sum - t) + term;
        } else {
            comp += (term - t) + sum;
        }
        sum = t;
        abs_sum += magnitude.abs();
        let total = sum + comp;
        if k > 0 && magnitude.abs() <= prev && magnitude.abs() <= p.series_tol * total.abs() {
            let cancellation = abs_sum * f64::EPSILON / total.abs().max(f64::MIN_POSITIVE);
            if cancellation > 1e-6 {
                return Err(Error::Accuracy {
                    detail: format!(
                        "alternating series for E_{{{},{}}}({z}) cancels catastrophically",
                        p.a, p.b
                    ),
                    achieved: cancellation,
                });
            }
            return Ok(total);
        }
        prev = magnitude.abs();
    }
    Err(Error::Accuracy {
        detail: format!(
            "E_{{{},{}}}({z}) series not converged in {} terms",
            p.a, p.b, p.max_terms
        ),
        achieved: prev / (sum + comp).abs().max(f64::MIN_POSITIVE),
    })
}

/// Leading exponential asymptotic for large positive `z` and `0 < a < 2`:
/// `(1/a) z^((1-b)/a) exp(z^(1/a)) - Σ_{k=1}^{10} z^-k / Γ(b - ak)`.
pub fn mittag_leffler_asymptotic(p: &MittagParams, z: f64) -> f64 {
    let root = z.powf(1.0 / p.a);
    let lead = (root + ((1.0 - p.b) / p.a) * z.ln()).exp() / p.a;
    let mut correction = 0.0;
    let mut zk = 1.0;
    for k in 1..=10 {
        zk /= z;
        correction += zk * recip_gamma(p.b - p.a * k as f64);
    }
    lead - correction
}

/// Negative real axis, `0 < a < 1`: integral representation valid for
/// `b < 1 + a`, with the recurrence `E_{a,b} = (E_{a,b-a} - 1/Γ(b-a)) / z`
/// to reach larger `b`.
fn mittag_leffler_negative(p: &MittagParams, z: f64) -> Result<f64> {
    let a = p.a;
    if p.b >= 1.0 + a {
        let lower = MittagParams { b: p.b - a, ..*p };
        let e = mittag_leffler_negative(&lower, z)?;
        return Ok((e - recip_gamma(p.b - a)) / z);
    }
    let b = p.b;
    let s1 = (PI * (1.0 - b)).sin();
    let s2 = (PI * (1.0 - b + a)).sin();
    let ca = (a * PI).cos();
    let norm = 1.0 / (a * PI);
    let power = (1.0 - b) / a;
    // Integrand without the χ^power factor.
    let core = |c: f64| {
        let num = c * s1 - z * s2;
        let den = c * c - 2.0 * c * z * ca + z * z;
        norm * (-c.powf(1.0 / a)).exp() * num / den
    };
    let head = quadrature::integrate_power_singular(core, power + 1.0, 1.0, 1e-17, 1e-15);
    let upper = 745f64.powf(a).max(1.0);
    let tail = quadrature::integrate(|c| core(c) * c.powf(power), 1.0, upper, 1e-17, 1e-15);
    Ok(head.value + tail.value)
}

/// Parameters of the resolvent kernel of `f = β + λ ∫ (t-s)^(-1/α) f(s) ds`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolventSpec {
    pub alpha: f64,
    pub lambda: f64,
}

impl ResolventSpec {
    pub fn new(alpha: f64, lambda: f64) -> Result<Self> {
        if !(alpha > 1.0 && alpha <= 2.0) {
            return Err(Error::Parameter(format!("alpha must lie in (1,2], got {alpha}")));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Parameter(format!("lambda must be positive, got {lambda}")));
        }
        Ok(Self { alpha, lambda })
    }

    /// `b = 1 - 1/α`.
    pub fn b(&self) -> f64 {
        1.0 - 1.0 / self.alpha
    }

    fn rate(&self) -> f64 {
        self.lambda * gamma(self.b())
    }

    /// Argument `λΓ(b) t^b` of the Mittag-Leffler functions.
    fn argument(&self, t: f64) -> f64 {
        self.rate() * t.powf(self.b())
    }

    fn mittag(&self, second: f64, z: f64) -> Result<f64> {
        mittag_leffler(&MittagParams::new(self.b(), second)?, z)
    }

    /// `∫_0^r K_λ(u) du = z E_{b,b+1}(z)`.
    pub fn primitive(&self, r: f64) -> Result<f64> {
        if r <= 0.0 {
            return Ok(0.0);
        }
        let z = self.argument(r);
        Ok(z * self.mittag(self.b() + 1.0, z)?)
    }

    /// `∫_0^r ∫_0^u K_λ(v) dv du = r z E_{b,b+2}(z)`.
    pub fn second_primitive(&self, r: f64) -> Result<f64> {
        if r <= 0.0 {
            return Ok(0.0);
        }
        let z = self.argument(r);
        Ok(r * z * self.mittag(self.b() + 2.0, z)?)
    }
}

/// `K_λ(t) = t^(-1/α) λΓ(b) E_{b,b}(t^b λΓ(b))`.
pub fn resolvent_kernel(spec: &ResolventSpec, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("resolvent kernel needs t > 0, got {t}")));
    }
    let z = spec.argument(t);
    Ok(t.powf(-1.0 / spec.alpha) * spec.rate() * spec.mittag(spec.b(), z)?)
}

/// Samples `values[k]` of a function at `t_k = k * dt`, `k = 0..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformSamples {
    pub dt: f64,
    pub values: Vec<f64>,
}

impl UniformSamples {
    pub fn from_fn(dt: f64, n_intervals: usize, f: impl Fn(f64) -> f64) -> Self {
        Self {
            dt,
            values: (0..=n_intervals).map(|k| f(k as f64 * dt)).collect(),
        }
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(|k| self.time(k))
    }

    /// Linear interpolation inside the sampled range.
    pub fn interpolate(&self, t: f64) -> f64 {
        let pos = (t / self.dt).clamp(0.0, (self.values.len() - 1) as f64);
        let j = (pos.floor() as usize).min(self.values.len().saturating_sub(2));
        let frac = pos - j as f64;
        self.values[j] * (1.0 - frac) + self.values[j + 1] * frac
    }
}

/// Exact integrals of `K(t_k - s) * hat_j(s)` for a piecewise-linear
/// interpolant, from primitives evaluated at the cell lags.
struct LagWeights {
    m0: Vec<f64>,
    m2: Vec<f64>,
    dt: f64,
}

impl LagWeights {
    fn new(spec: &ResolventSpec, dt: f64, n: usize) -> Result<Self> {
        let mut m0 = Vec::with_capacity(n + 1);
        let mut m2 = Vec::with_capacity(n + 1);
        for m in 0..=n {
            let r = m as f64 * dt;
            m0.push(spec.primitive(r)?);
            m2.push(spec.second_primitive(r)?);
        }
        Ok(Self { m0, m2, dt })
    }

    /// Weights on the (earlier, later) node of the cell whose lag range is
    /// `[m dt, (m+1) dt]`.
    fn cell(&self, m: usize) -> (f64, f64) {
        let r_lo = m as f64 * self.dt;
        let r_hi = r_lo + self.dt;
        segment_weights(
            r_lo,
            r_hi,
            (self.m0[m], self.m2[m]),
            (self.m0[m + 1], self.m2[m + 1]),
        )
    }
}

/// For a cell with lag range `[r_lo, r_hi]`, returns the weights applied to
/// the node at lag `r_hi` (earlier time) and at lag `r_lo` (later time).
fn segment_weights(r_lo: f64, r_hi: f64, lo: (f64, f64), hi: (f64, f64)) -> (f64, f64) {
    let width = r_hi - r_lo;
    let i0 = hi.0 - lo.0;
    let i1 = (r_hi * hi.0 - hi.1) - (r_lo * lo.0 - lo.1);
    let early = (i1 - r_lo * i0) / width;
    let late = (r_hi * i0 - i1) / width;
    (early, late)
}

/// Solves `f = β + λ ∫_0^t (t-s)^(-1/α) f(s) ds` through its resolvent,
/// `f(t) = β(t) + ∫_0^t K_λ(t-s) β(s) ds`, integrating the kernel exactly
/// against the piecewise-linear interpolant of `β`.
pub fn gronwall_solve(spec: &ResolventSpec, beta: &UniformSamples) -> Result<UniformSamples> {
    let n = beta.values.len();
    if n == 0 {
        return Ok(beta.clone());
    }
    if beta.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Contract("beta must be finite on the grid".into()));
    }
    let weights = LagWeights::new(spec, beta.dt, n - 1)?;
    let cells: Vec<(f64, f64)> = (0..n.saturating_sub(1)).map(|m| weights.cell(m)).collect();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let mut acc = 0.0;
        for j in 0..k {
            let (early, late) = cells[k - j - 1];
            acc += early * beta.values[j] + late * beta.values[j + 1];
        }
        out.push(beta.values[k] + acc);
    }
    Ok(UniformSamples {
        dt: beta.dt,
        values: out,
    })
}

/// Localized resolvent: `f = β` on `t <= T - ε`, and on `(T-ε, T]`
/// `f(t) = β(t) + ∫_{T-ε}^t K_{λ ε^{-(1-1/α)}}(t-s) β(s) ds`.
pub fn contraction_solve(
    spec: &ResolventSpec,
    horizon: f64,
    epsilon: f64,
    beta: &UniformSamples,
) -> Result<UniformSamples> {
    if !(epsilon > 0.0 && epsilon < horizon) {
        return Err(Error::Contract(format!(
            "need 0 < epsilon < T, got epsilon={epsilon}, T={horizon}"
        )));
    }
    let scaled = ResolventSpec {
        alpha: spec.alpha,
        lambda: spec.lambda * epsilon.powf(-spec.b()),
    };
    let start = horizon - epsilon;
    let dt = beta.dt;
    let n = beta.values.len();
    // First node strictly after the start of the window.
    let first = ((start / dt).floor() as usize + 1).min(n);
    // Lags never exceed the window, where the rescaled kernel stays finite.
    let weights = LagWeights::new(&scaled, dt, (n + 1 - first).min(n.saturating_sub(1)))?;
    let snapped = (start / dt - (first - 1) as f64).abs() < 1e-9;
    let mut out = beta.values.clone();
    for k in first..n {
        let tk = beta.time(k);
        let mut acc = 0.0;
        // Whole cells [s_j, s_{j+1}] inside [start, t_k].
        let j_begin = if snapped { first - 1 } else { first };
        for j in j_begin..k {
            let (early, late) = weights.cell(k - j - 1);
            acc += early * beta.values[j] + late * beta.values[j + 1];
        }
        if !snapped {
            // Partial cell [start, s_first].
            let s_hi = beta.time(first);
            let r_lo = tk - s_hi;
            let r_hi = tk - start;
            let lo = (scaled.primitive(r_lo)?, scaled.second_primitive(r_lo)?);
            let hi = (scaled.primitive(r_hi)?, scaled.second_primitive(r_hi)?);
            let (early, late) = segment_weights(r_lo, r_hi, lo, hi);
            acc += early * beta.interpolate(start) + late * beta.values[first];
        }
        out[k] += acc;
    }
    Ok(UniformSamples { dt, values: out })
}

/// Closed form of `f` for constant `β`: `β E_{b,1}(λΓ(b) t^b)`.
pub fn gronwall_constant(spec: &ResolventSpec, beta: f64, t: f64) -> Result<f64> {
    Ok(beta + beta * spec.primitive(t)?)
}

/// The displayed constant-β expression
/// `β Γ(b) λ t^b E_{b,1+b}(Γ(b) λ t^b)`, which equals `∫_0^t K_λ(t-s) β ds`.
pub fn gronwall_constant_integral_part(spec: &ResolventSpec, beta: f64, t: f64) -> Result<f64> {
    let z = spec.argument(t);
    Ok(beta * z * spec.mittag(1.0 + spec.b(), z)?)
}

/// Envelope `f(t) <= β C exp(γ λ^{α/(α-1)} t)` fitted to a computed solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentialBound {
    pub c: f64,
    pub gamma: f64,
}

/// Fits the exponential envelope with `γ = (1 + margin) Γ(b)^(1/b)` and the
/// smallest `C` valid at every sample.
pub fn fit_exponential_bound(
    spec: &ResolventSpec,
    beta: f64,
    f: &UniformSamples,
    margin: f64,
) -> ExponentialBound {
    let b = spec.b();
    let gamma_rate = (1.0 + margin) * gamma(b).powf(1.0 / b);
    let speed = spec.lambda.powf(spec.alpha / (spec.alpha - 1.0));
    let c = f
        .times()
        .zip(&f.values)
        .map(|(t, v)| v / (beta * (gamma_rate * speed * t).exp()))
        .fold(0.0, f64::max);
    ExponentialBound {
        c,
        gamma: gamma_rate,
    }
}

/// `∫_0^t ∫_{-t}^t (2πνs)^(-1/2) exp(-y²/(2νs)) dy ds` in closed form.
pub fn heat_double_integral(nu: f64, t: f64) -> Result<f64> {
    if !(nu > 0.0 && t > 0.0) {
        return Err(Error::Domain(format!(
            "heat double integral needs nu > 0 and t > 0 (got nu={nu}, t={t})"
        )));
    }
    let r = t / nu;
    let sr = r.sqrt();
    Ok(t * (2.0 * (r + 1.0) * normal_cdf(sr) - 2.0 * r + (2.0 / PI).sqrt() * (-r / 2.0).exp() * sr - 1.0))
}
