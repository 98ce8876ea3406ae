//! Localization family: normalizers `c_n`, bumps `Ψ_n^i` and the bound
//! checks around them.
//!
//! `Ψ_n^i(t, x) = c_n ∫_0^τ D(r) dr` with `τ = 2^{-n} - (T - t)` and
//! `D(r) = ∫_{a-h}^{a+h} G(r, y) dy`, `a = x - xᵢ`, `h = 2^{-n}`; `D` is a
//! CDF difference so only the time integral is numerical.

use crate::error::{Error, Result};
use crate::quadrature::integrate;
use crate::special_fn::heat_double_integral;
use crate::stable_kernel::Kernel;

const ABS_TOL: f64 = 1e-300;
const REL_TOL: f64 = 1e-13;

/// `∫_0^τ w(r) D(r) dr` with a breakpoint at the scale `r = h^α` where `D`
/// bends from 1 to its tail.
fn window_time_integral(kernel: &dyn Kernel, a: f64, h: f64, tau: f64, w: impl Fn(f64) -> f64) -> f64 {
    if tau <= 0.0 {
        return 0.0;
    }
    let d = |r: f64| kernel.mass_between(r, a - h, a + h);
    let alpha = kernel.params().alpha;
    let bend = h.powf(alpha).min(tau);
    let mut f = |r: f64| w(r) * d(r);
    let mut total = integrate(&mut f, 0.0, bend, ABS_TOL, REL_TOL).value;
    if bend < tau {
        total += integrate(&mut f, bend, tau, ABS_TOL, REL_TOL).value;
    }
    total
}

/// `∫_0^t ∫_{-t}^t G(s, y) dy ds`.
pub fn low_g_integral(kernel: &dyn Kernel, t: f64) -> Result<f64> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::Domain(format!("t must lie in (0, 1], got {t}")));
    }
    if kernel.params().is_gaussian() {
        return heat_double_integral(2.0, t);
    }
    Ok(window_time_integral(kernel, 0.0, t, t, |_| 1.0))
}

/// Same integral by quadrature only, for any `α`.
pub fn low_g_integral_quadrature(kernel: &dyn Kernel, t: f64) -> f64 {
    window_time_integral(kernel, 0.0, t, t, |_| 1.0)
}

/// `c_n = 1 / ∫_0^{2^{-n}} ∫_{-2^{-n}}^{2^{-n}} G(s, y) dy ds`.
pub fn c_norm(kernel: &dyn Kernel, n: u32) -> Result<f64> {
    if n < 1 {
        return Err(Error::Parameter("n must be at least 1".into()));
    }
    Ok(1.0 / low_g_integral(kernel, 0.5f64.powi(n as i32))?)
}

/// Bumps around `points` at level `n` up to time `T`.
#[derive(Clone, Copy)]
pub struct PsiSpec<'a> {
    pub kernel: &'a dyn Kernel,
    pub n: u32,
    pub t_final: f64,
    pub points: &'a [f64],
    pub c_n: f64,
}

impl<'a> PsiSpec<'a> {
    pub fn new(kernel: &'a dyn Kernel, n: u32, t_final: f64, points: &'a [f64]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Parameter("need at least one point".into()));
        }
        let h = 0.5f64.powi(n as i32);
        for w in points.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::Parameter("points must be strictly increasing".into()));
            }
            if w[1] - w[0] < 2.0 * h {
                return Err(Error::Parameter(format!(
                    "windows around {} and {} overlap at level {n}",
                    w[0], w[1]
                )));
            }
        }
        if !(t_final > 0.0) {
            return Err(Error::Parameter(format!("T must be positive, got {t_final}")));
        }
        Ok(Self {
            kernel,
            n,
            t_final,
            points,
            c_n: c_norm(kernel, n)?,
        })
    }

    pub fn h(&self) -> f64 {
        0.5f64.powi(self.n as i32)
    }

    fn check(&self, i: usize, t: f64) -> Result<()> {
        if i >= self.points.len() {
            return Err(Error::Contract(format!("point index {i} out of range")));
        }
        if !(t > 0.0 && t <= self.t_final * (1.0 + 1e-12)) {
            return Err(Error::Domain(format!("t = {t} outside (0, T]")));
        }
        Ok(())
    }

    /// `Ψ_n^i(t, x)`.
    pub fn psi(&self, i: usize, t: f64, x: f64) -> Result<f64> {
        self.check(i, t)?;
        let tau = self.h() - (self.t_final - t);
        Ok(self.c_n * window_time_integral(self.kernel, x - self.points[i], self.h(), tau, |_| 1.0))
    }

    /// `Σᵢ Ψ_n^i(t, x)`.
    pub fn psi_sum(&self, t: f64, x: f64) -> Result<f64> {
        (0..self.points.len()).map(|i| self.psi(i, t, x)).sum()
    }

    /// `∫_0^t ∫ (t-s)^{-1/α} G(t-s, x-y) Ψ_n^i(s, y) dy ds`, which collapses
    /// by the semigroup property to `(c_n / b) ∫_0^τ r^b D(r) dr`.
    pub fn smoothed(&self, i: usize, t: f64, x: f64) -> Result<f64> {
        self.check(i, t)?;
        let b = 1.0 - 1.0 / self.kernel.params().alpha;
        let tau = self.h() - (self.t_final - t);
        let integral = window_time_integral(self.kernel, x - self.points[i], self.h(), tau, |r| r.powf(b));
        Ok(self.c_n / b * integral)
    }

    /// `(t, x, Σᵢ Ψ_n^i)` on a product grid, `t` outer.
    pub fn surface(&self, ts: &[f64], xs: &[f64]) -> Result<Vec<(f64, f64, f64)>> {
        let mut out = Vec::with_capacity(ts.len() * xs.len());
        for &t in ts {
            for &x in xs {
                out.push((t, x, self.psi_sum(t, x)?));
            }
        }
        Ok(out)
    }
}

/// A fitted constant with the individual ratios it was taken over.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedConstant {
    pub constant: f64,
    pub ratios: Vec<f64>,
}

impl FittedConstant {
    fn max_of(ratios: Vec<f64>) -> Self {
        Self {
            constant: ratios.iter().copied().fold(0.0, f64::max),
            ratios,
        }
    }

    fn min_of(ratios: Vec<f64>) -> Self {
        Self {
            constant: ratios.iter().copied().fold(f64::INFINITY, f64::min),
            ratios,
        }
    }
}

/// `max_n c_n / 2^{n(2 - 1/α)}`.
pub fn fit_c_norm_bound(kernel: &dyn Kernel, ns: &[u32]) -> Result<FittedConstant> {
    let e = 2.0 - 1.0 / kernel.params().alpha;
    let ratios = ns
        .iter()
        .map(|&n| Ok(c_norm(kernel, n)? / 2f64.powf(n as f64 * e)))
        .collect::<Result<_>>()?;
    Ok(FittedConstant::max_of(ratios))
}

/// `min_k low_g(t)/t^{2 - 1/α}` over `t = 2^{-k}`.
pub fn fit_low_g_lower(kernel: &dyn Kernel, ks: &[u32]) -> Result<FittedConstant> {
    let e = 2.0 - 1.0 / kernel.params().alpha;
    let ratios = ks
        .iter()
        .map(|&k| {
            let t = 0.5f64.powi(k as i32);
            Ok(low_g_integral(kernel, t)? / t.powf(e))
        })
        .collect::<Result<_>>()?;
    Ok(FittedConstant::min_of(ratios))
}

/// `max Ψ_n^i(t, x) / (1 - min((T-t) 2^n, 1))^{1-1/α}` over the samples
/// with a positive envelope.
pub fn fit_psi_envelope(spec: &PsiSpec, i: usize, ts: &[f64], xs: &[f64]) -> Result<FittedConstant> {
    let b = 1.0 - 1.0 / spec.kernel.params().alpha;
    let scale = 2f64.powi(spec.n as i32);
    let mut ratios = Vec::new();
    for &t in ts {
        let env = (1.0 - ((spec.t_final - t) * scale).min(1.0)).powf(b);
        for &x in xs {
            let v = spec.psi(i, t, x)?;
            if env > 0.0 {
                ratios.push(v / env);
            } else if v != 0.0 {
                ratios.push(f64::INFINITY);
            }
        }
    }
    Ok(FittedConstant::max_of(ratios))
}

/// `Ψ_n(T, xᵢ + offset) 2^{n(1+1/α)}` for each `n`, for one point.
pub fn off_point_scaled(kernel: &dyn Kernel, ns: &[u32], t_final: f64, offset: f64) -> Result<FittedConstant> {
    let e = 1.0 + 1.0 / kernel.params().alpha;
    let points = [0.0];
    let ratios = ns
        .iter()
        .map(|&n| {
            let spec = PsiSpec::new(kernel, n, t_final, &points)?;
            Ok(spec.psi(0, t_final, offset)? * 2f64.powf(n as f64 * e))
        })
        .collect::<Result<_>>()?;
    Ok(FittedConstant::max_of(ratios))
}

/// `max over (t, x) of smoothed(t, x) 2^{n(1-1/α)}` for each `n`.
pub fn fit_convolution_bound(
    kernel: &dyn Kernel,
    ns: &[u32],
    t_final: f64,
    ts: &[f64],
    xs: &[f64],
) -> Result<FittedConstant> {
    let e = 1.0 - 1.0 / kernel.params().alpha;
    let points = [0.0];
    let mut ratios = Vec::new();
    for &n in ns {
        let spec = PsiSpec::new(kernel, n, t_final, &points)?;
        let mut worst = 0.0f64;
        for &t in ts {
            for &x in xs {
                worst = worst.max(spec.smoothed(0, t, x)?);
            }
        }
        ratios.push(worst * 2f64.powf(n as f64 * e));
    }
    Ok(FittedConstant::max_of(ratios))
}
