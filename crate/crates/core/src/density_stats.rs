//! Monte Carlo ensembles and the statistics run on them.

use std::f64::consts::PI;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::noise_initial::{j0_value, sample_noise, DriftField, InitialMeasure};
use crate::spde_solver::{malliavin_matrix, DiffusionCoefficient, MalliavinWindow, Scheme, SolutionField};
use crate::stable_kernel::Kernel;

/// What is recorded from each path.
#[derive(Debug, Clone, PartialEq)]
pub enum Observable {
    /// `u(t, x)` at each `(t, x)`.
    PointValues(Vec<(f64, f64)>),
    /// `min_{x ∈ [x_from, x_to]} u(t, x)` over grid nodes.
    Infimum { t: f64, x_from: f64, x_to: f64 },
    /// `det σ` of the Malliavin matrix at `(t, points)`.
    DetSigma {
        t: f64,
        points: Vec<f64>,
        window: MalliavinWindow,
    },
    /// `u(t + h, x) - u(t, x)` for each lag `h`.
    Increments { t: f64, x: f64, lags: Vec<f64> },
    /// `[negative cell fraction, clipped mass, final mass]`.
    SchemeDiagnostics,
}

/// Everything a path run depends on.
#[derive(Clone, Copy)]
pub struct EnsembleSpec<'a> {
    pub scheme: &'a Scheme<'a>,
    pub rho: &'a DiffusionCoefficient,
    pub mu: &'a InitialMeasure,
    pub drift: Option<&'a DriftField>,
    pub master_seed: u64,
}

impl EnsembleSpec<'_> {
    fn canonical(&self, observable: &Observable, m: usize) -> String {
        format!(
            "params={:?};grid={:?};options={:?};theta={:e};rho={}/{:e}/{:e};mu={:?};drift={:?};observable={:?};seed={};paths={}",
            self.scheme.kernel().params(),
            self.scheme.grid(),
            self.scheme.options(),
            self.scheme.theta(),
            self.rho.name,
            self.rho.lip,
            self.rho.growth,
            self.mu,
            self.drift.map(|d| (d.n_steps, d.n_x, d.values.iter().map(|v| v.to_bits()).fold(0u64, |a, b| a.rotate_left(7) ^ b))),
            observable,
            self.master_seed,
            m
        )
    }
}

/// SHA-256 of `text` as lowercase hex.
pub fn digest_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Samples from `M` paths; failed paths keep a NaN row and their error text.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub observable: Observable,
    pub samples: Vec<Vec<f64>>,
    pub failures: Vec<Option<String>>,
    pub master_seed: u64,
    pub digest: String,
}

impl Ensemble {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn failure_count(&self) -> usize {
        self.failures.iter().filter(|f| f.is_some()).count()
    }

    /// Component `j` over the paths that did not fail.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.samples
            .iter()
            .zip(&self.failures)
            .filter(|(_, f)| f.is_none())
            .map(|(s, _)| s[j])
            .collect()
    }
}

fn width(observable: &Observable) -> usize {
    match observable {
        Observable::PointValues(p) => p.len(),
        Observable::Increments { lags, .. } => lags.len(),
        Observable::SchemeDiagnostics => 3,
        _ => 1,
    }
}

fn extract(
    spec: &EnsembleSpec,
    observable: &Observable,
    sol: &SolutionField,
    noise: &crate::noise_initial::NoisePath,
) -> Result<Vec<f64>> {
    let g = sol.grid();
    match observable {
        Observable::PointValues(probes) => probes
            .iter()
            .map(|&(t, x)| Ok(sol.u.get(g.time_index(t)?, g.space_index(x)?)))
            .collect(),
        Observable::Infimum { t, x_from, x_to } => {
            let k = g.time_index(*t)?;
            let (a, b) = (g.space_index(*x_from)?, g.space_index(*x_to)?);
            Ok(vec![sol.u.row(k)[a..=b].iter().copied().fold(f64::INFINITY, f64::min)])
        }
        Observable::DetSigma { t, points, window } => {
            let m = malliavin_matrix(spec.scheme, sol, spec.rho, noise, *t, points, window)?;
            Ok(vec![m.det])
        }
        Observable::Increments { t, x, lags } => {
            let i = g.space_index(*x)?;
            let base = sol.u.get(g.time_index(*t)?, i);
            lags.iter()
                .map(|&h| Ok(sol.u.get(g.time_index(t + h)?, i) - base))
                .collect()
        }
        Observable::SchemeDiagnostics => Ok(vec![
            sol.negative_cells as f64 / ((g.n_t - 1) * g.n_x()) as f64,
            sol.clipped_mass,
            sol.final_mass(),
        ]),
    }
}

/// Runs paths `0..m` in parallel; the result is independent of the thread
/// count.
pub fn run_ensemble(spec: &EnsembleSpec, observable: &Observable, m: usize) -> Result<Ensemble> {
    if m < 2 {
        return Err(Error::Parameter(format!("need at least 2 paths, got {m}")));
    }
    let grid = spec.scheme.grid();
    let j0 = spec.scheme.initial_field(spec.mu)?;
    let w = width(observable);
    let rows: Vec<Result<Vec<f64>>> = (0..m as u64)
        .into_par_iter()
        .map(|p| {
            let noise = sample_noise(spec.master_seed, p, &grid);
            let sol = spec.scheme.run(spec.rho, &j0, &noise, spec.drift)?;
            extract(spec, observable, &sol, &noise)
        })
        .collect();
    // A contract error is the caller's fault, not a per-path failure.
    if let Some(Err(e)) = rows.iter().find(|r| matches!(r, Err(Error::Contract(_)))) {
        return Err(e.clone());
    }
    let mut samples = Vec::with_capacity(m);
    let mut failures = Vec::with_capacity(m);
    for r in rows {
        match r {
            Ok(v) => {
                samples.push(v);
                failures.push(None);
            }
            Err(e) => {
                samples.push(vec![f64::NAN; w]);
                failures.push(Some(e.to_string()));
            }
        }
    }
    Ok(Ensemble {
        observable: observable.clone(),
        samples,
        failures,
        master_seed: spec.master_seed,
        digest: digest_hex(&spec.canonical(observable, m)),
    })
}

/// A statistic with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

pub fn mean_estimate(xs: &[f64]) -> Estimate {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Estimate {
        value: mean,
        se: (var / n).sqrt(),
    }
}

/// Unbiased sample variance with the standard error `√((m₄ - s⁴)/n)`.
pub fn variance_estimate(xs: &[f64]) -> Estimate {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    Estimate {
        value: m2 * n / (n - 1.0),
        se: ((m4 - m2 * m2) / n).max(0.0).sqrt(),
    }
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    /// `0.9 min(s, IQR/1.34) n^{-1/5}`.
    Silverman,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityEstimate {
    pub points: Vec<f64>,
    pub values: Vec<f64>,
    pub bandwidth: f64,
    pub kernel_id: &'static str,
}

impl DensityEstimate {
    /// Trapezoidal mass on the evaluation grid.
    pub fn mass(&self) -> f64 {
        self.points
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(x, v)| 0.5 * (x[1] - x[0]) * (v[0] + v[1]))
            .sum()
    }

    /// Linear interpolation on the grid, zero outside.
    pub fn value_at(&self, x: f64) -> f64 {
        let n = self.points.len();
        if x < self.points[0] || x > self.points[n - 1] {
            return 0.0;
        }
        let step = self.points[1] - self.points[0];
        let i = (((x - self.points[0]) / step) as usize).min(n - 2);
        let w = (x - self.points[i]) / step;
        (1.0 - w) * self.values[i] + w * self.values[i + 1]
    }
}

fn silverman(xs: &[f64]) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let s = variance_estimate(xs).value.sqrt();
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { s.min(iqr / 1.34) } else { s };
    0.9 * spread * (xs.len() as f64).powf(-0.2)
}

/// Gaussian kernel density at `x`.
pub fn kde_at(xs: &[f64], h: f64, x: f64) -> f64 {
    let norm = 1.0 / (xs.len() as f64 * h * (2.0 * PI).sqrt());
    norm * xs.iter().map(|s| (-0.5 * ((x - s) / h).powi(2)).exp()).sum::<f64>()
}

/// Gaussian KDE on a grid spanning the sample range plus six bandwidths
/// either side, with spacing at most `h/4`.
pub fn kde(xs: &[f64], bandwidth: Bandwidth) -> Result<DensityEstimate> {
    if xs.len() < 100 {
        return Err(Error::Contract(format!("KDE needs at least 100 samples, got {}", xs.len())));
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::Contract("KDE samples must be finite".into()));
    }
    let (lo, hi) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    if hi <= lo {
        return Err(Error::Contract("degenerate sample: zero variance".into()));
    }
    let h = match bandwidth {
        Bandwidth::Silverman => silverman(xs),
        Bandwidth::Fixed(h) if h > 0.0 => h,
        Bandwidth::Fixed(h) => return Err(Error::Parameter(format!("bandwidth must be positive, got {h}"))),
    };
    let (a, b) = (lo - 6.0 * h, hi + 6.0 * h);
    let n = (((b - a) / (0.25 * h)).ceil() as usize + 1).clamp(257, 20001);
    let step = (b - a) / (n - 1) as f64;
    let points: Vec<f64> = (0..n).map(|i| a + i as f64 * step).collect();
    let values = points.par_iter().map(|&x| kde_at(xs, h, x)).collect();
    Ok(DensityEstimate {
        points,
        values,
        bandwidth: h,
        kernel_id: "gaussian",
    })
}

/// Product-Gaussian KDE of `d ≤ 3` dimensional samples at `at`, with
/// Scott's bandwidth `s_j n^{-1/(d+4)}` per coordinate.
pub fn kde_joint(samples: &[Vec<f64>], at: &[Vec<f64>]) -> Result<Vec<f64>> {
    let d = samples.first().map_or(0, |s| s.len());
    if !(1..=3).contains(&d) || samples.iter().any(|s| s.len() != d) {
        return Err(Error::Contract("joint KDE needs samples of a common dimension 1..=3".into()));
    }
    if samples.len() < 100 {
        return Err(Error::Contract("KDE needs at least 100 samples".into()));
    }
    let n = samples.len() as f64;
    let hs: Vec<f64> = (0..d)
        .map(|j| {
            let col: Vec<f64> = samples.iter().map(|s| s[j]).collect();
            variance_estimate(&col).value.sqrt() * n.powf(-1.0 / (d as f64 + 4.0))
        })
        .collect();
    if hs.iter().any(|h| !(*h > 0.0)) {
        return Err(Error::Contract("degenerate sample: zero variance".into()));
    }
    let norm = 1.0 / (n * hs.iter().product::<f64>() * (2.0 * PI).powf(d as f64 / 2.0));
    Ok(at
        .iter()
        .map(|p| {
            norm * samples
                .iter()
                .map(|s| {
                    let q: f64 = (0..d).map(|j| ((p[j] - s[j]) / hs[j]).powi(2)).sum();
                    (-0.5 * q).exp()
                })
                .sum::<f64>()
        })
        .collect())
}

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959963984540054;

/// `P(X < ε)` with its Wilson interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmallBall {
    pub eps: f64,
    pub count: usize,
    pub n: usize,
    pub p: f64,
    pub lo: f64,
    pub hi: f64,
}

pub fn wilson_interval(count: usize, n: usize) -> (f64, f64) {
    let n_f = n as f64;
    let p = count as f64 / n_f;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n_f;
    let centre = (p + z2 / (2.0 * n_f)) / denom;
    let half = Z95 * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    let lo = if count == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if count == n { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

/// Empirical `P(X < ε)` for each `ε`; non-finite samples are dropped.
pub fn small_ball(xs: &[f64], eps_list: &[f64]) -> Vec<SmallBall> {
    let finite: Vec<f64> = xs.iter().copied().filter(|x| x.is_finite()).collect();
    let n = finite.len();
    eps_list
        .iter()
        .map(|&eps| {
            let count = finite.iter().filter(|&&x| x < eps).count();
            let (lo, hi) = if n > 0 { wilson_interval(count, n) } else { (0.0, 1.0) };
            SmallBall {
                eps,
                count,
                n,
                p: if n > 0 { count as f64 / n as f64 } else { f64::NAN },
                lo,
                hi,
            }
        })
        .collect()
}

/// Small-ball curve of `det σ` samples.
pub fn det_sigma_smallball(dets: &[f64], eps_list: &[f64]) -> Vec<SmallBall> {
    small_ball(dets, eps_list)
}

/// Shape of `log P` against `|log ε|`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeReport {
    /// `(|log ε|, log P, standard error of log P)`; empty bins are skipped.
    pub curve: Vec<(f64, f64, f64)>,
    /// Consecutive slopes of the curve.
    pub slopes: Vec<f64>,
    pub decreasing: bool,
    /// Every slope is at most the previous one plus `z` standard errors.
    pub concave: bool,
    /// Largest slope increase measured in standard errors.
    pub worst_concavity_z: f64,
}

/// Checks that `log P(X < ε)` is decreasing and concave in `|log ε|`
/// (`eps_list` decreasing). Bins with zero count are left out of the
/// curve; the standard error of `log P` is `√((1-p)/(np))`.
pub fn log_probability_shape(balls: &[SmallBall], z: f64) -> ShapeReport {
    let curve: Vec<(f64, f64, f64)> = balls
        .iter()
        .filter(|b| b.count > 0)
        .map(|b| {
            let se = ((1.0 - b.p) / (b.n as f64 * b.p)).sqrt();
            (b.eps.ln().abs(), b.p.ln(), se)
        })
        .collect();
    let slopes: Vec<f64> = curve.windows(2).map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0)).collect();
    let slope_se: Vec<f64> = curve
        .windows(2)
        .map(|w| (w[0].2.powi(2) + w[1].2.powi(2)).sqrt() / (w[1].0 - w[0].0))
        .collect();
    let decreasing = curve.windows(2).all(|w| w[1].1 <= w[0].1);
    let mut worst = f64::NEG_INFINITY;
    for i in 1..slopes.len() {
        let se = (slope_se[i].powi(2) + slope_se[i - 1].powi(2)).sqrt();
        worst = worst.max((slopes[i] - slopes[i - 1]) / se.max(f64::MIN_POSITIVE));
    }
    ShapeReport {
        concave: worst <= z,
        decreasing,
        worst_concavity_z: worst,
        slopes,
        curve,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NegativeMoment {
    pub p: f64,
    pub value: f64,
    /// Jackknife standard error.
    pub se: f64,
    /// The largest 1% of `X^{-p}` carries more than half the sum.
    pub unstable: bool,
    /// Fraction of samples that were not strictly positive and so excluded.
    pub nonpositive_fraction: f64,
}

/// `E[X^{-p}]` over the strictly positive samples.
pub fn negative_moment(xs: &[f64], p_list: &[f64]) -> Vec<NegativeMoment> {
    let pos: Vec<f64> = xs.iter().copied().filter(|x| *x > 0.0 && x.is_finite()).collect();
    let nonpositive_fraction = 1.0 - pos.len() as f64 / xs.len().max(1) as f64;
    p_list
        .iter()
        .map(|&p| {
            let mut ys: Vec<f64> = pos.iter().map(|x| x.powf(-p)).collect();
            let n = ys.len() as f64;
            let total: f64 = ys.iter().sum();
            let mean = total / n;
            // Leave-one-out means are (total - y)/(n - 1).
            let jk: f64 = ys.iter().map(|y| ((total - y) / (n - 1.0) - mean).powi(2)).sum();
            let se = ((n - 1.0) / n * jk).sqrt();
            ys.sort_by(|a, b| b.total_cmp(a));
            let top = ((0.01 * n).ceil() as usize).max(1).min(ys.len());
            let top_sum: f64 = ys[..top].iter().sum();
            NegativeMoment {
                p,
                value: mean,
                se,
                unstable: top_sum > 0.5 * total,
                nonpositive_fraction,
            }
        })
        .collect()
}

/// Absolute tolerance on `|ρ|` below which it counts as zero.
pub const T0_ZERO_TOL: f64 = 1e-12;

/// First `s` with `max_y |ρ(s, y, J₀(s, y))| > zero_tol`, or `+∞`.
pub fn estimate_t0(
    kernel: &dyn Kernel,
    rho: &DiffusionCoefficient,
    mu: &InitialMeasure,
    s_grid: &[f64],
    y_grid: &[f64],
    zero_tol: f64,
) -> f64 {
    for &s in s_grid {
        let hit = y_grid
            .iter()
            .any(|&y| rho.eval(s, y, j0_value(mu, kernel, s, y)).abs() > zero_tol);
        if hit {
            return s;
        }
    }
    f64::INFINITY
}

#[derive(Debug, Clone, PartialEq)]
pub struct HolderFit {
    pub slope: f64,
    /// Grouped-jackknife standard error of the slope.
    pub se: f64,
    pub ci: (f64, f64),
    /// `‖u(t+h, x) - u(t, x)‖₂` per lag.
    pub norms: Vec<f64>,
}

fn log_log_slope(lags: &[f64], norms: &[f64]) -> f64 {
    let xs: Vec<f64> = lags.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = norms.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Log-log slope of the `L²` increment norms in the lag, from an
/// `Increments` ensemble, with a 20-group jackknife interval.
pub fn holder_fit(ensemble: &Ensemble) -> Result<HolderFit> {
    let Observable::Increments { lags, .. } = &ensemble.observable else {
        return Err(Error::Contract("Hölder fit needs an increments ensemble".into()));
    };
    if lags.len() < 3 {
        return Err(Error::Contract(format!("need at least 3 lags, got {}", lags.len())));
    }
    let rows: Vec<&Vec<f64>> = ensemble
        .samples
        .iter()
        .zip(&ensemble.failures)
        .filter(|(_, f)| f.is_none())
        .map(|(s, _)| s)
        .collect();
    let n = rows.len();
    if n < 20 {
        return Err(Error::Contract("need at least 20 successful paths".into()));
    }
    let norms_of = |skip: Option<(usize, usize)>| -> Vec<f64> {
        (0..lags.len())
            .map(|j| {
                let (sum, count) = rows
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| skip.is_none_or(|(a, b)| *i < a || *i >= b))
                    .fold((0.0, 0usize), |(s, c), (_, r)| (s + r[j] * r[j], c + 1));
                (sum / count as f64).sqrt()
            })
            .collect()
    };
    let norms = norms_of(None);
    let slope = log_log_slope(lags, &norms);
    let groups = 20;
    let partial: Vec<f64> = (0..groups)
        .map(|g| log_log_slope(lags, &norms_of(Some((g * n / groups, (g + 1) * n / groups)))))
        .collect();
    let mean = partial.iter().sum::<f64>() / groups as f64;
    let g = groups as f64;
    let se = ((g - 1.0) / g * partial.iter().map(|s| (s - mean).powi(2)).sum::<f64>()).sqrt();
    Ok(HolderFit {
        slope,
        se,
        ci: (slope - Z95 * se, slope + Z95 * se),
        norms,
    })
}

/// Runs an increments ensemble at `(t, x)` and fits the exponent.
pub fn holder_exponent(spec: &EnsembleSpec, t: f64, x: f64, lags: &[f64], m: usize) -> Result<HolderFit> {
    if lags.len() < 3 {
        return Err(Error::Contract(format!("need at least 3 lags, got {}", lags.len())));
    }
    let obs = Observable::Increments {
        t,
        x,
        lags: lags.to_vec(),
    };
    holder_fit(&run_ensemble(spec, &obs, m)?)
}
