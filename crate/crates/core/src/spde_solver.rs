//! One-step mild scheme for `u = J₀ + ∫∫ G ρ(u) W`, coupled runs, Picard
//! iterates, the Malliavin derivative of the discrete scheme and Malliavin
//! matrices.
//!
//! The field is stored as `u = J₀ + v` with `J₀` analytic, so measure-valued
//! data never touch the grid. Per step `k → k+1`:
//!
//! ```text
//! v^{k+1} = P (v^k + Δt ρ(u^k) drift_k) + N (ρ(u^k) ΔW_k)
//! ```
//!
//! where `P` is the `Δx`-weighted convolution with `G(Δt)` and `N` the plain
//! convolution with `G(θΔt)`. The lag fraction `θ ∈ (0, 1)` is chosen so
//! that the lags `(m + θ)Δt` seen by the injected noise reproduce
//! `∫_0^T s^{-1/α} ds` exactly, which removes the leading `O(√Δt)` variance
//! bias of evaluating the kernel at the right end of each cell.

use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::{SpaceTimeField, SpaceTimeGrid};
use crate::moment_kernel::lagged_convolution;
use crate::noise_initial::{check_admissible, j0_field, DriftField, InitialMeasure, NoisePath};
use crate::stable_kernel::Kernel;

type Rho = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

/// `ρ(t, x, z)` with its Lipschitz data.
#[derive(Clone)]
pub struct DiffusionCoefficient {
    eval: Rho,
    deriv: Option<Rho>,
    /// `Lip_ρ`.
    pub lip: f64,
    /// `ϛ` in `|ρ(t,x,z)| <= Lip_ρ (ϛ + |z|)`.
    pub growth: f64,
    /// `Some(λ)` for `ρ(z) = λz`.
    pub pam: Option<f64>,
    pub name: String,
}

impl fmt::Debug for DiffusionCoefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiffusionCoefficient")
            .field("name", &self.name)
            .field("lip", &self.lip)
            .field("growth", &self.growth)
            .field("pam", &self.pam)
            .finish()
    }
}

impl DiffusionCoefficient {
    pub fn custom(
        name: &str,
        eval: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
        deriv: Option<Rho>,
        lip: f64,
        growth: f64,
    ) -> Self {
        Self {
            eval: Arc::new(eval),
            deriv,
            lip,
            growth,
            pam: None,
            name: name.to_string(),
        }
    }

    /// `ρ(u) = λu`.
    pub fn pam(lambda: f64) -> Self {
        Self {
            eval: Arc::new(move |_, _, z| lambda * z),
            deriv: Some(Arc::new(move |_, _, _| lambda)),
            lip: lambda.abs(),
            growth: 0.0,
            pam: Some(lambda),
            name: format!("pam({lambda})"),
        }
    }

    pub fn constant(c: f64) -> Self {
        Self {
            eval: Arc::new(move |_, _, _| c),
            deriv: Some(Arc::new(|_, _, _| 0.0)),
            lip: c.abs(),
            growth: 1.0,
            pam: None,
            name: format!("const({c})"),
        }
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    /// `ρ(z) = a + b sin z`.
    pub fn sine(a: f64, b: f64) -> Self {
        Self {
            eval: Arc::new(move |_, _, z| a + b * z.sin()),
            deriv: Some(Arc::new(move |_, _, z| b * z.cos())),
            lip: b.abs().max(a.abs()),
            growth: 1.0,
            pam: None,
            name: format!("sine({a},{b})"),
        }
    }

    /// `ρ(z) = |sin z|`: nonnegative, bounded, vanishing at zero.
    pub fn abs_sine() -> Self {
        Self {
            eval: Arc::new(|_, _, z| z.sin().abs()),
            deriv: Some(Arc::new(|_, _, z| z.sin().signum() * z.cos())),
            lip: 1.0,
            growth: 0.0,
            pam: None,
            name: "abs_sine".into(),
        }
    }

    /// `ρ(t, x, z) = max(t - t_on, 0)`.
    pub fn delayed(t_on: f64) -> Self {
        Self {
            eval: Arc::new(move |t, _, _| (t - t_on).max(0.0)),
            deriv: Some(Arc::new(|_, _, _| 0.0)),
            lip: 1.0,
            growth: 1.0 + t_on.abs(),
            pam: None,
            name: format!("delayed({t_on})"),
        }
    }

    pub fn eval(&self, t: f64, x: f64, z: f64) -> f64 {
        (self.eval)(t, x, z)
    }

    pub fn deriv(&self, t: f64, x: f64, z: f64) -> Option<f64> {
        self.deriv.as_ref().map(|d| d(t, x, z))
    }

    pub fn has_deriv(&self) -> bool {
        self.deriv.is_some()
    }

    /// Spot-checks linear growth and the Lipschitz bound on a sample of
    /// `(t, x, z)`; returns the worst violation ratio (<= 1 when both hold).
    pub fn spot_check(&self, ts: &[f64], xs: &[f64], zs: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for &t in ts {
            for &x in xs {
                for (a, &z1) in zs.iter().enumerate() {
                    let r1 = self.eval(t, x, z1);
                    let bound = self.lip * (self.growth + z1.abs());
                    if r1.abs() > 0.0 {
                        worst = worst.max(r1.abs() / bound.max(f64::MIN_POSITIVE));
                    }
                    for &z2 in &zs[a + 1..] {
                        let diff = (r1 - self.eval(t, x, z2)).abs();
                        if diff > 0.0 {
                            let b = self.lip * (z1 - z2).abs();
                            worst = worst.max(diff / b.max(f64::MIN_POSITIVE));
                        }
                    }
                }
            }
        }
        worst
    }
}

/// How injected noise is propagated over its first step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseLag {
    /// Lag fraction fixed by the variance-matching rule.
    Calibrated,
    /// Kernel `G(θΔt)` with the given θ; `Fixed(1.0)` is the plain
    /// right-endpoint rule.
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeOptions {
    /// Floors `u` at zero after every step; PAM with nonnegative data only.
    pub positivity_clip: bool,
    pub noise_lag: NoiseLag,
}

impl Default for SchemeOptions {
    fn default() -> Self {
        Self {
            positivity_clip: false,
            noise_lag: NoiseLag::Calibrated,
        }
    }
}

/// Root `θ ∈ (0,1)` of `Σ_{m=0}^{N-2} (m+θ)^{-1/α} = N^b / b`, `b = 1 - 1/α`.
pub fn calibrated_lag(alpha: f64, n_t: usize) -> f64 {
    if n_t < 2 {
        return 1.0;
    }
    let b = 1.0 - 1.0 / alpha;
    let target = (n_t as f64).powf(b) / b;
    let sum = |theta: f64| (0..n_t - 1).map(|m| (m as f64 + theta).powf(-1.0 / alpha)).sum::<f64>();
    let (mut lo, mut hi) = (1e-12, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if sum(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Taps whose weight is below this fraction of the peak are dropped.
const TAP_FLOOR: f64 = 1e-18;
/// Direct convolution up to this many taps, FFT beyond.
const MAX_DIRECT_TAPS: usize = 129;

/// Dot product with four independent accumulators.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, ra) = (a.chunks_exact(4), a.chunks_exact(4).remainder());
    let rb = b.chunks_exact(4).remainder();
    for (x, y) in ca.zip(b.chunks_exact(4)) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Linear convolution `out_i = Σ_j w(i - j) in_j` restricted to the grid.
#[derive(Clone)]
enum Convolution {
    /// Weights for offsets `hi, hi-1, ..., hi-len+1`, so each output is a
    /// contiguous dot product with the input.
    Direct {
        hi: i64,
        reversed: Vec<f64>,
    },
    Fft {
        spectrum: Vec<Complex64>,
        forward: Arc<dyn Fft<f64>>,
        inverse: Arc<dyn Fft<f64>>,
    },
}

impl Convolution {
    fn new(n_x: usize, w: impl Fn(i64) -> f64) -> Self {
        let reach = n_x as i64 - 1;
        let all: Vec<f64> = (-reach..=reach).map(&w).collect();
        let peak = all.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let keep = |v: &f64| v.abs() > TAP_FLOOR * peak;
        let first = all.iter().position(keep).unwrap_or(reach as usize);
        let last = all.iter().rposition(keep).unwrap_or(reach as usize);
        if last + 1 - first <= MAX_DIRECT_TAPS {
            return Self::Direct {
                hi: last as i64 - reach,
                reversed: all[first..=last].iter().rev().copied().collect(),
            };
        }
        let size = (3 * n_x).next_power_of_two();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(size);
        let inverse = planner.plan_fft_inverse(size);
        // Offset d sits at index d mod size.
        let mut spectrum = vec![Complex64::new(0.0, 0.0); size];
        for (idx, v) in all.iter().enumerate() {
            let d = idx as i64 - reach;
            spectrum[d.rem_euclid(size as i64) as usize].re = *v;
        }
        forward.process(&mut spectrum);
        Self::Fft {
            spectrum,
            forward,
            inverse,
        }
    }

    fn apply(&self, input: &[f64], out: &mut [f64]) {
        let n = input.len() as i64;
        match self {
            Self::Direct { hi, reversed } => {
                let lo = hi - reversed.len() as i64 + 1;
                for (i, o) in out.iter_mut().enumerate() {
                    let i = i as i64;
                    // Input j pairs with offset i - j, stored at hi - i + j.
                    let j_lo = (i - hi).max(0);
                    let j_hi = (i - lo).min(n - 1);
                    if j_hi < j_lo {
                        *o = 0.0;
                        continue;
                    }
                    let w0 = (hi - i + j_lo) as usize;
                    let len = (j_hi - j_lo + 1) as usize;
                    *o = dot(&reversed[w0..w0 + len], &input[j_lo as usize..j_lo as usize + len]);
                }
            }
            Self::Fft {
                spectrum,
                forward,
                inverse,
            } => {
                let size = spectrum.len();
                let mut buf = vec![Complex64::new(0.0, 0.0); size];
                for (b, v) in buf.iter_mut().zip(input) {
                    b.re = *v;
                }
                forward.process(&mut buf);
                for (b, s) in buf.iter_mut().zip(spectrum) {
                    *b *= s;
                }
                inverse.process(&mut buf);
                let norm = 1.0 / size as f64;
                for (o, b) in out.iter_mut().zip(&buf) {
                    *o = b.re * norm;
                }
            }
        }
    }

    fn is_direct(&self) -> bool {
        matches!(self, Self::Direct { .. })
    }
}

/// Precomputed propagators for one kernel and grid.
#[derive(Clone)]
pub struct Scheme<'a> {
    kernel: &'a dyn Kernel,
    grid: SpaceTimeGrid,
    options: SchemeOptions,
    theta: f64,
    step: Convolution,
    noise: Convolution,
}

/// One realization on the grid.
#[derive(Debug, Clone)]
pub struct SolutionField {
    pub u: SpaceTimeField,
    pub j0: SpaceTimeField,
    pub seed: (u64, u64),
    pub options: SchemeOptions,
    pub theta: f64,
    /// Mass removed by the positivity clip, `Σ max(-u, 0) Δx` over all steps.
    pub clipped_mass: f64,
    pub negative_cells: usize,
}

impl SolutionField {
    pub fn grid(&self) -> SpaceTimeGrid {
        self.u.grid
    }

    /// `u - J₀`.
    pub fn stochastic_part(&self) -> SpaceTimeField {
        let mut v = self.u.clone();
        for (a, b) in v.values.iter_mut().zip(&self.j0.values) {
            *a -= b;
        }
        v
    }

    /// `Σ u(T, x_i) Δx`.
    pub fn final_mass(&self) -> f64 {
        let g = self.grid();
        self.u.row(g.n_t - 1).iter().sum::<f64>() * g.dx
    }
}

/// `D_{θ,ξ} u` for one noise cell.
#[derive(Debug, Clone)]
pub struct MalliavinField {
    /// Noise row (step) index of the source cell.
    pub step: usize,
    /// Space index of the source cell.
    pub space: usize,
    /// Zero on rows `0..=step`.
    pub values: SpaceTimeField,
}

impl<'a> Scheme<'a> {
    pub fn new(kernel: &'a dyn Kernel, grid: SpaceTimeGrid, options: SchemeOptions) -> Result<Self> {
        let alpha = kernel.params().alpha;
        let theta = match options.noise_lag {
            NoiseLag::Calibrated => calibrated_lag(alpha, grid.n_t),
            NoiseLag::Fixed(t) if t > 0.0 && t <= 1.0 => t,
            NoiseLag::Fixed(t) => {
                return Err(Error::Parameter(format!("noise lag must lie in (0,1], got {t}")))
            }
        };
        if grid.dx > grid.t(0).powf(1.0 / alpha) {
            return Err(Error::Parameter(format!(
                "dx = {} does not resolve the kernel at t_1 = {} (need dx <= t_1^(1/alpha))",
                grid.dx,
                grid.t(0)
            )));
        }
        let (dt, dx) = (grid.dt, grid.dx);
        let n_x = grid.n_x();
        let step = Convolution::new(n_x, |d| kernel.density(dt, d as f64 * dx) * dx);
        let noise = Convolution::new(n_x, |d| kernel.density(theta * dt, d as f64 * dx));
        Ok(Self {
            kernel,
            grid,
            options,
            theta,
            step,
            noise,
        })
    }

    pub fn grid(&self) -> SpaceTimeGrid {
        self.grid
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn kernel(&self) -> &dyn Kernel {
        self.kernel
    }

    pub fn options(&self) -> SchemeOptions {
        self.options
    }

    /// Whether both propagators use direct (exactly nonnegative) sums.
    pub fn uses_direct_convolution(&self) -> bool {
        self.step.is_direct() && self.noise.is_direct()
    }

    /// `J₀` on the grid after the admissibility check.
    pub fn initial_field(&self, mu: &InitialMeasure) -> Result<SpaceTimeField> {
        let probes: Vec<f64> = (0..self.grid.n_x()).step_by(8).map(|i| self.grid.x(i)).collect();
        let adm = check_admissible(mu, self.kernel.params(), &probes);
        if !adm.admissible {
            return Err(Error::Contract(format!(
                "initial measure is not admissible (diagnostic {:e})",
                adm.value
            )));
        }
        Ok(j0_field(mu, self.kernel, &self.grid))
    }

    fn check_inputs(&self, j0: &SpaceTimeField, noise: &NoisePath, drift: Option<&DriftField>) -> Result<()> {
        if j0.grid != self.grid {
            return Err(Error::Contract("J0 field is on a different grid".into()));
        }
        if !noise.matches_grid(&self.grid) {
            return Err(Error::Contract("noise path does not match the grid".into()));
        }
        if let Some(d) = drift {
            if d.n_steps != noise.n_steps || d.n_x != noise.n_x {
                return Err(Error::Contract("drift field does not match the grid".into()));
            }
        }
        Ok(())
    }

    /// Runs the scheme from a precomputed `J₀`.
    pub fn run(
        &self,
        rho: &DiffusionCoefficient,
        j0: &SpaceTimeField,
        noise: &NoisePath,
        drift: Option<&DriftField>,
    ) -> Result<SolutionField> {
        self.check_inputs(j0, noise, drift)?;
        let g = self.grid;
        let n_x = g.n_x();
        let xs = g.xs();
        let mut u = SpaceTimeField::zeros(g);
        u.row_mut(0).copy_from_slice(j0.row(0));
        let mut v = vec![0.0; n_x];
        let mut carried = vec![0.0; n_x];
        let mut forcing = vec![0.0; n_x];
        let mut propagated = vec![0.0; n_x];
        let mut injected = vec![0.0; n_x];
        let mut clipped_mass = 0.0;
        let mut negative_cells = 0;
        for k in 0..g.n_t - 1 {
            let t = g.t(k);
            let uk = u.row(k);
            let dw = noise.row(k);
            for j in 0..n_x {
                let r = rho.eval(t, xs[j], uk[j]);
                forcing[j] = r * dw[j];
                carried[j] = v[j];
                if let Some(d) = drift {
                    carried[j] += g.dt * r * d.get(k, j);
                }
            }
            self.step.apply(&carried, &mut propagated);
            self.noise.apply(&forcing, &mut injected);
            let j0_next = j0.row(k + 1);
            let row = u.row_mut(k + 1);
            for i in 0..n_x {
                let mut next = j0_next[i] + propagated[i] + injected[i];
                if !next.is_finite() {
                    return Err(Error::Divergence {
                        time_index: k + 1,
                        space_index: i,
                        value: next,
                    });
                }
                if next < 0.0 {
                    negative_cells += 1;
                    if self.options.positivity_clip {
                        clipped_mass += -next * g.dx;
                        next = 0.0;
                    }
                }
                row[i] = next;
                v[i] = next - j0_next[i];
            }
        }
        Ok(SolutionField {
            u,
            j0: j0.clone(),
            seed: (noise.master_seed, noise.path_index),
            options: self.options,
            theta: self.theta,
            clipped_mass,
            negative_cells,
        })
    }

    /// Derivative of the discrete solution with respect to `ΔW(step, space)`.
    pub fn malliavin(
        &self,
        base: &SolutionField,
        rho: &DiffusionCoefficient,
        noise: &NoisePath,
        step: usize,
        space: usize,
    ) -> Result<MalliavinField> {
        self.malliavin_with_drift(base, rho, noise, None, step, space)
    }

    pub fn malliavin_with_drift(
        &self,
        base: &SolutionField,
        rho: &DiffusionCoefficient,
        noise: &NoisePath,
        drift: Option<&DriftField>,
        step: usize,
        space: usize,
    ) -> Result<MalliavinField> {
        if !rho.has_deriv() {
            return Err(Error::Contract(format!("coefficient {} has no derivative", rho.name)));
        }
        if base.seed != (noise.master_seed, noise.path_index) {
            return Err(Error::Contract("noise path is not the one that produced the base field".into()));
        }
        let g = self.grid;
        if step + 1 >= g.n_t || space >= g.n_x() {
            return Err(Error::Contract(format!("noise cell ({step}, {space}) outside the grid")));
        }
        if base.options.positivity_clip {
            return Err(Error::Contract("the clipped scheme is not differentiable".into()));
        }
        let n_x = g.n_x();
        let xs = g.xs();
        let mut values = SpaceTimeField::zeros(g);
        let mut source = vec![0.0; n_x];
        source[space] = rho.eval(g.t(step), xs[space], base.u.get(step, space));
        let mut row = vec![0.0; n_x];
        self.noise.apply(&source, &mut row);
        values.row_mut(step + 1).copy_from_slice(&row);
        let mut carried = vec![0.0; n_x];
        let mut forcing = vec![0.0; n_x];
        let mut propagated = vec![0.0; n_x];
        let mut injected = vec![0.0; n_x];
        for k in step + 1..g.n_t - 1 {
            let t = g.t(k);
            let uk = base.u.row(k);
            let dk = values.row(k).to_vec();
            let dw = noise.row(k);
            for j in 0..n_x {
                let r1 = rho.deriv(t, xs[j], uk[j]).unwrap_or(0.0) * dk[j];
                forcing[j] = r1 * dw[j];
                carried[j] = dk[j];
                if let Some(d) = drift {
                    carried[j] += g.dt * r1 * d.get(k, j);
                }
            }
            self.step.apply(&carried, &mut propagated);
            self.noise.apply(&forcing, &mut injected);
            let next = values.row_mut(k + 1);
            for i in 0..n_x {
                next[i] = propagated[i] + injected[i];
                if !next[i].is_finite() {
                    return Err(Error::Divergence {
                        time_index: k + 1,
                        space_index: i,
                        value: next[i],
                    });
                }
            }
        }
        Ok(MalliavinField { step, space, values })
    }

    /// Picard iterates `u_0 = J₀`,
    /// `u_{m+1}(t_k) = J₀(t_k) + Σ_{l<k} G((k-l-1+θ)Δt) ⊛ ρ(u_m(t_l)) ΔW_l`,
    /// with the lag kernels evaluated exactly. Returns `u_m` and the last gap
    /// `sup |u_m - u_{m-1}|` (zero for `m = 0`).
    pub fn picard(
        &self,
        rho: &DiffusionCoefficient,
        j0: &SpaceTimeField,
        noise: &NoisePath,
        m_iterations: usize,
    ) -> Result<(SpaceTimeField, Vec<f64>)> {
        self.check_inputs(j0, noise, None)?;
        let g = self.grid;
        let lags: Vec<Vec<f64>> = (0..g.n_t)
            .map(|r| {
                let tau = (r as f64 + self.theta) * g.dt;
                (0..g.n_x()).map(|i| self.kernel.density(tau, g.x(i))).collect()
            })
            .collect();
        let mut current = j0.clone();
        let mut gaps = Vec::with_capacity(m_iterations);
        for _ in 0..m_iterations {
            let mut source = SpaceTimeField::zeros(g);
            for k in 0..g.n_t - 1 {
                let t = g.t(k);
                for i in 0..g.n_x() {
                    source.set(k, i, rho.eval(t, g.x(i), current.get(k, i)) * noise.get(k, i));
                }
            }
            let stochastic = lagged_convolution(&source, &lags, 1, 1.0);
            let mut next = j0.clone();
            for (a, b) in next.values.iter_mut().zip(&stochastic.values) {
                *a += b;
            }
            if !next.is_finite() {
                return Err(Error::Accuracy {
                    detail: "Picard iterate is not finite".into(),
                    achieved: f64::INFINITY,
                });
            }
            gaps.push(next.sup_distance(&current));
            current = next;
        }
        Ok((current, gaps))
    }
}

/// Runs one path, building the propagators on the fly.
#[allow(clippy::too_many_arguments)]
pub fn simulate_path(
    kernel: &dyn Kernel,
    rho: &DiffusionCoefficient,
    mu: &InitialMeasure,
    grid: &SpaceTimeGrid,
    noise: &NoisePath,
    drift: Option<&DriftField>,
    options: SchemeOptions,
) -> Result<SolutionField> {
    if options.positivity_clip && (rho.pam.is_none() || !mu.is_nonnegative()) {
        return Err(Error::Contract(
            "positivity clip is only defined for PAM with nonnegative data".into(),
        ));
    }
    let scheme = Scheme::new(kernel, *grid, options)?;
    let j0 = scheme.initial_field(mu)?;
    scheme.run(rho, &j0, noise, drift)
}

/// `Some(true)` when `mu1 - mu2` is a nonnegative measure, `Some(false)` when
/// it is not, `None` when the kinds are too different to decide.
pub fn dominates(mu1: &InitialMeasure, mu2: &InitialMeasure) -> Option<bool> {
    use InitialMeasure::*;
    if mu1 == mu2 {
        return Some(true);
    }
    match (mu1, mu2) {
        (Dirac(a), Dirac(b)) => {
            let mut net: Vec<(f64, f64)> = a.clone();
            for (x, m) in b {
                match net.iter_mut().find(|(y, _)| y == x) {
                    Some(e) => e.1 -= m,
                    None => net.push((*x, -m)),
                }
            }
            Some(net.iter().all(|(_, m)| *m >= 0.0))
        }
        (Lebesgue { level: a }, Lebesgue { level: b }) => Some(a >= b),
        (Combination(parts), other) => {
            let pos = parts.iter().position(|p| p == other)?;
            Some(
                parts
                    .iter()
                    .enumerate()
                    .all(|(i, p)| i == pos || p.is_nonnegative()),
            )
        }
        (_, Dirac(b)) if b.iter().all(|(_, m)| *m == 0.0) => Some(mu1.is_nonnegative()),
        _ => None,
    }
}

/// Two runs driven by the same increments.
pub fn simulate_coupled_pair(
    scheme: &Scheme,
    rho: &DiffusionCoefficient,
    mu1: &InitialMeasure,
    mu2: &InitialMeasure,
    noise: &NoisePath,
) -> Result<(SolutionField, SolutionField)> {
    match dominates(mu1, mu2) {
        Some(true) if mu2.is_nonnegative() => {}
        Some(_) => return Err(Error::Contract("need mu1 >= mu2 >= 0".into())),
        None => return Err(Error::Contract("cannot verify mu1 >= mu2 for these kinds".into())),
    }
    let a = scheme.run(rho, &scheme.initial_field(mu1)?, noise, None)?;
    let b = scheme.run(rho, &scheme.initial_field(mu2)?, noise, None)?;
    Ok((a, b))
}

/// Where and how densely to sample `D_{r,z}` for a Malliavin matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MalliavinWindow {
    pub t_from: f64,
    pub t_to: f64,
    pub x_from: f64,
    pub x_to: f64,
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MalliavinMatrix {
    pub sigma: Vec<Vec<f64>>,
    pub det: f64,
    /// Number of noise cells sampled.
    pub cells: usize,
}

impl MalliavinMatrix {
    pub fn is_symmetric(&self, tol: f64) -> bool {
        let d = self.sigma.len();
        (0..d).all(|i| (0..d).all(|j| (self.sigma[i][j] - self.sigma[j][i]).abs() <= tol))
    }

    /// Positive semidefinite up to `tol`, by pivoted Cholesky.
    pub fn is_psd(&self, tol: f64) -> bool {
        let d = self.sigma.len();
        let scale = (0..d).map(|i| self.sigma[i][i].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let mut a = self.sigma.clone();
        for k in 0..d {
            if a[k][k] < -tol * scale {
                return false;
            }
            let pivot = a[k][k].max(0.0);
            for i in k + 1..d {
                let l = if pivot > tol * scale { a[i][k] / pivot } else { 0.0 };
                if pivot <= tol * scale && a[i][k].abs() > tol.sqrt() * scale {
                    return false;
                }
                for j in k + 1..d {
                    a[i][j] -= l * a[k][j];
                }
            }
        }
        true
    }
}

/// Determinant by Gaussian elimination with partial pivoting.
pub fn determinant(m: &[Vec<f64>]) -> f64 {
    let n = m.len();
    let mut a = m.to_vec();
    let mut det = 1.0;
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))
            .unwrap();
        if a[p][k] == 0.0 {
            return 0.0;
        }
        if p != k {
            a.swap(p, k);
            det = -det;
        }
        det *= a[k][k];
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
        }
    }
    det
}

/// `σ_{ij} = Σ_{cells (r,z) ∈ S} D_{r,z}u(t, xᵢ) D_{r,z}u(t, x_j) Δr Δz` with
/// cells on a lattice of the given stride, each standing for a
/// `stride × stride` block.
pub fn malliavin_matrix(
    scheme: &Scheme,
    base: &SolutionField,
    rho: &DiffusionCoefficient,
    noise: &NoisePath,
    t: f64,
    points: &[f64],
    window: &MalliavinWindow,
) -> Result<MalliavinMatrix> {
    let g = scheme.grid();
    let k_t = g.time_index(t)?;
    let idx: Vec<usize> = points.iter().map(|&x| g.space_index(x)).collect::<Result<_>>()?;
    let stride = window.stride.max(1);
    // Noise row l covers [t_l, t_{l+1}].
    let steps: Vec<usize> = (0..k_t)
        .filter(|&l| g.t(l) >= window.t_from - 1e-12 && g.t(l + 1) <= window.t_to + 1e-12)
        .step_by(stride)
        .collect();
    let spaces: Vec<usize> = (0..g.n_x())
        .filter(|&j| g.x(j) >= window.x_from - 1e-12 && g.x(j) <= window.x_to + 1e-12)
        .step_by(stride)
        .collect();
    if steps.is_empty() || spaces.is_empty() {
        return Err(Error::Contract("Malliavin window contains no noise cells".into()));
    }
    let d = points.len();
    let mut sigma = vec![vec![0.0; d]; d];
    let weight = (stride as f64 * g.dt) * (stride as f64 * g.dx);
    for &l in &steps {
        for &j in &spaces {
            let field = scheme.malliavin(base, rho, noise, l, j)?;
            let vals: Vec<f64> = idx.iter().map(|&i| field.values.get(k_t, i)).collect();
            for a in 0..d {
                for b in 0..d {
                    sigma[a][b] += vals[a] * vals[b] * weight;
                }
            }
        }
    }
    let det = determinant(&sigma);
    Ok(MalliavinMatrix {
        sigma,
        det,
        cells: steps.len() * spaces.len(),
    })
}

/// Half-width `L` (a multiple of `dx`) such that the mass of `G(T, ·)`
/// outside `[-L/2, L/2]` is below `tol`.
pub fn recommended_half_width(kernel: &dyn Kernel, t_final: f64, dx: f64, tol: f64) -> f64 {
    let mut half = dx;
    while kernel.mass_between(t_final, -half, half) < 1.0 - tol && half < 1e6 {
        half *= 1.25;
    }
    ((2.0 * half) / dx).ceil() * dx
}
