//! Space-time convolution on the grid and the moment kernel
//! `𝒦_λ = Σ_{n≥1} λ^{2n} (G²)^{⋆n}`.
//!
//! The series is built from exact space-time cell averages of `G²`. The
//! convolution of two piecewise-constant cell representations has exact
//! cell averages given by a two-point stencil in time (½, ½) and the
//! quadratic B-spline stencil in space (⅛, ¾, ⅛), so the `s^(-1/α)`
//! singularity of `∫ G(s, y)² dy` never meets a point rule.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::{SpaceTimeField, SpaceTimeGrid};
use crate::quadrature;
use crate::special_fn::{normal_cdf, normal_sf};
use crate::stable_kernel::Kernel;

/// Linear (zero-padded) convolution of grid rows by FFT. A kernel row holds
/// offsets `-c..=c`, and outputs are cut back to the grid.
pub(crate) struct RowConvolver {
    n_x: usize,
    half_n: usize,
    size: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl RowConvolver {
    pub(crate) fn new(n_x: usize) -> Self {
        let size = (2 * n_x).next_power_of_two();
        let mut planner = FftPlanner::new();
        Self {
            n_x,
            half_n: n_x / 2,
            size,
            forward: planner.plan_fft_forward(size),
            inverse: planner.plan_fft_inverse(size),
        }
    }

    pub(crate) fn spectrum(&self, row: &[f64]) -> Vec<Complex64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); self.size];
        for (b, v) in buf.iter_mut().zip(row) {
            b.re = *v;
        }
        self.forward.process(&mut buf);
        buf
    }

    /// Back to a grid row: entry `i` is `Σ_m f[m] g[i - m + c]`.
    pub(crate) fn row(&self, mut spectrum: Vec<Complex64>, scale: f64) -> Vec<f64> {
        self.inverse.process(&mut spectrum);
        let norm = scale / self.size as f64;
        spectrum[self.half_n..self.half_n + self.n_x]
            .iter()
            .map(|c| c.re * norm)
            .collect()
    }
}

/// Sums `Σ_j f_j ⊛ w_{k-j-shift}` over admissible `j` for every output row.
pub(crate) fn lagged_convolution(
    f: &SpaceTimeField,
    weights: &[Vec<f64>],
    shift: usize,
    scale: f64,
) -> SpaceTimeField {
    let grid = f.grid;
    let conv = RowConvolver::new(grid.n_x());
    let fs: Vec<Vec<Complex64>> = (0..grid.n_t).map(|k| conv.spectrum(f.row(k))).collect();
    let ws: Vec<Vec<Complex64>> = weights.iter().map(|w| conv.spectrum(w)).collect();
    let mut out = SpaceTimeField::zeros(grid);
    for k in shift..grid.n_t {
        let mut acc = vec![Complex64::new(0.0, 0.0); conv.size];
        for j in 0..=(k - shift) {
            let lag = k - j - shift;
            if lag >= ws.len() {
                continue;
            }
            for ((a, x), y) in acc.iter_mut().zip(&fs[j]).zip(&ws[lag]) {
                *a += x * y;
            }
        }
        out.row_mut(k).copy_from_slice(&conv.row(acc, scale));
    }
    out
}

/// `(f⋆g)(t_k, x_i) = Σ_{j<k} Σ_m f(t_j, x_m) g(t_k - t_j, x_i - x_m) Δt Δx`,
/// where `g` at lag `(k-j)Δt` is its row `k-j-1` and vanishes off the grid.
pub fn spacetime_convolve(f: &SpaceTimeField, g: &SpaceTimeField) -> Result<SpaceTimeField> {
    f.check_same_grid(g)?;
    let grid = f.grid;
    let rows: Vec<Vec<f64>> = (0..grid.n_t).map(|k| g.row(k).to_vec()).collect();
    Ok(lagged_convolution(f, &rows, 1, grid.dt * grid.dx))
}

/// A moment kernel on a grid.
#[derive(Debug, Clone)]
pub struct MomentKernel {
    /// Values at the grid nodes `(t_k, x_i)`.
    pub point: SpaceTimeField,
    /// Integrals over `[kΔt, (k+1)Δt] × [x_i - Δx/2, x_i + Δx/2]`; row `k`
    /// is the cell whose right time edge is `t_k`.
    pub cells: SpaceTimeField,
    /// Ratio of sup norms of the last two series terms (0 for closed forms).
    pub truncation_ratio: f64,
    pub terms: usize,
}

/// Space-time cell averages of `G²`, rows `0..n_cells`.
fn square_cell_averages(kernel: &dyn Kernel, grid: &SpaceTimeGrid, n_cells: usize) -> Vec<Vec<f64>> {
    let alpha = kernel.params().alpha;
    let symmetric = kernel.params().delta == 0.0;
    let (dt, dx) = (grid.dt, grid.dx);
    let n_x = grid.n_x();
    let c = grid.half_n;
    // lim_{s→0} s^{1/α} ∫ G(s, y)² dy over a cell containing 0.
    let total_square = kernel.unit_square_cdf(f64::MAX);
    let mut rows = Vec::with_capacity(n_cells);
    for l in 0..n_cells {
        let mut row = vec![0.0; n_x];
        for i in 0..n_x {
            if symmetric && i < c {
                continue;
            }
            let (a, b) = (grid.x(i) - 0.5 * dx, grid.x(i) + 0.5 * dx);
            let integral = if l == 0 {
                // s^(-1/α) singularity: integrate s^{1/α} ∫G² dy against s^{-1/α}.
                let p = 1.0 - 1.0 / alpha;
                quadrature::integrate_power_singular(
                    |s| {
                        if s <= 0.0 {
                            return if a < 0.0 && b > 0.0 { total_square } else { 0.0 };
                        }
                        s.powf(1.0 / alpha) * kernel.square_mass_between(s, a, b)
                    },
                    p,
                    dt,
                    1e-15,
                    1e-11,
                )
                .value
            } else {
                quadrature::integrate(
                    |s| kernel.square_mass_between(s, a, b),
                    l as f64 * dt,
                    (l + 1) as f64 * dt,
                    1e-15,
                    1e-11,
                )
                .value
            };
            row[i] = integral / (dt * dx);
        }
        if symmetric {
            for i in 0..c {
                row[i] = row[2 * c - i];
            }
        }
        rows.push(row);
    }
    rows
}

/// Space-time stencil that turns two cell representations into the cell
/// averages of their convolution.
fn smooth_for_convolution(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n_x = rows[0].len();
    (0..rows.len())
        .map(|l| {
            let time: Vec<f64> = (0..n_x)
                .map(|i| 0.5 * (rows[l][i] + if l > 0 { rows[l - 1][i] } else { 0.0 }))
                .collect();
            (0..n_x)
                .map(|i| {
                    let left = if i > 0 { time[i - 1] } else { 0.0 };
                    let right = if i + 1 < n_x { time[i + 1] } else { 0.0 };
                    0.125 * left + 0.75 * time[i] + 0.125 * right
                })
                .collect()
        })
        .collect()
}

/// Partial sums `Σ_{n=1}^{n_terms} λ^{2n} (G²)^{⋆n}` on the grid.
pub fn k_lambda_series(
    kernel: &dyn Kernel,
    lambda: f64,
    grid: &SpaceTimeGrid,
    n_terms: usize,
) -> Result<MomentKernel> {
    if n_terms == 0 {
        return Err(Error::Parameter("n_terms must be at least 1".into()));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Parameter(format!("lambda must be nonnegative, got {lambda}")));
    }
    let n_cells = grid.n_t + 1;
    let n_x = grid.n_x();
    let lam2 = lambda * lambda;
    let averages = square_cell_averages(kernel, grid, n_cells);
    let stencil = smooth_for_convolution(&averages);
    let conv = RowConvolver::new(n_x);
    let stencil_spectra: Vec<Vec<Complex64>> = stencil.iter().map(|r| conv.spectrum(r)).collect();

    let mut term: Vec<Vec<f64>> = averages.iter().map(|r| r.iter().map(|v| lam2 * v).collect()).collect();
    let mut total = term.clone();
    let sup = |rows: &[Vec<f64>]| rows.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut previous_sup = sup(&term);
    let mut ratio = 0.0;
    for _ in 1..n_terms {
        let spectra: Vec<Vec<Complex64>> = term.iter().map(|r| conv.spectrum(r)).collect();
        let mut next = Vec::with_capacity(n_cells);
        for m in 0..n_cells {
            let mut acc = vec![Complex64::new(0.0, 0.0); conv.size];
            for j in 0..=m {
                for ((a, x), y) in acc.iter_mut().zip(&spectra[j]).zip(&stencil_spectra[m - j]) {
                    *a += x * y;
                }
            }
            next.push(conv.row(acc, lam2 * grid.dt * grid.dx));
        }
        let s = sup(&next);
        if !s.is_finite() {
            return Err(Error::Accuracy {
                detail: "moment kernel series overflowed".into(),
                achieved: s,
            });
        }
        ratio = if previous_sup > 0.0 { s / previous_sup } else { 0.0 };
        previous_sup = s;
        for (t, n) in total.iter_mut().zip(&next) {
            for (a, b) in t.iter_mut().zip(n) {
                *a += b;
            }
        }
        term = next;
    }

    let mut point = SpaceTimeField::zeros(*grid);
    let mut cells = SpaceTimeField::zeros(*grid);
    let area = grid.dt * grid.dx;
    for k in 0..grid.n_t {
        let t = grid.t(k);
        for i in 0..n_x {
            let g = kernel.density(t, grid.x(i));
            let first = |l: usize| lam2 * averages[l][i];
            let remainder = 0.5 * ((total[k][i] - first(k)) + (total[k + 1][i] - first(k + 1)));
            point.set(k, i, lam2 * g * g + remainder);
            cells.set(k, i, total[k][i] * area);
        }
    }
    Ok(MomentKernel {
        point,
        cells,
        truncation_ratio: ratio,
        terms: n_terms,
    })
}

/// Spatial-integral amplitude of the α = 2 kernel:
/// `𝒦_λ(t, x) = amplitude(t) (2πt)^(-1/2) exp(-x²/(2t))`.
fn heat_amplitude(lambda: f64, t: f64) -> f64 {
    let l2 = lambda * lambda;
    let l4 = l2 * l2;
    l2 / (8.0 * PI * t).sqrt() + 0.25 * l4 * (l4 * t / 8.0).exp() * normal_cdf(l2 * t.sqrt() / 2.0)
}

/// Closed form of `𝒦_λ` for α = 2:
/// `(2πt)^(-1/2) (λ²(8πt)^(-1/2) + (λ⁴/4) e^{λ⁴t/8} Φ(λ²√t/2)) e^{-x²/(2t)}`.
pub fn k_lambda_heat_closed(lambda: f64, t: f64, x: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("moment kernel needs t > 0, got {t}")));
    }
    Ok(heat_amplitude(lambda, t) * (-x * x / (2.0 * t)).exp() / (2.0 * PI * t).sqrt())
}

/// The α = 2 closed form on a grid, with exact cell integrals.
pub fn k_lambda_heat_field(lambda: f64, grid: &SpaceTimeGrid) -> Result<MomentKernel> {
    let point = SpaceTimeField::from_fn(*grid, |t, x| {
        heat_amplitude(lambda, t) * (-x * x / (2.0 * t)).exp() / (2.0 * PI * t).sqrt()
    });
    let mut cells = SpaceTimeField::zeros(*grid);
    let (dt, dx) = (grid.dt, grid.dx);
    let c = grid.half_n;
    for k in 0..grid.n_t {
        for i in c..grid.n_x() {
            let (a, b) = (grid.x(i) - 0.5 * dx, grid.x(i) + 0.5 * dx);
            let mass = |s: f64| {
                let r = s.sqrt();
                if a >= 0.0 {
                    normal_sf(a / r) - normal_sf(b / r)
                } else {
                    normal_cdf(b / r) - normal_cdf(a / r)
                }
            };
            let v = if k == 0 {
                quadrature::integrate_power_singular(
                    |s| {
                        let m = if s <= 0.0 { if a < 0.0 { 1.0 } else { 0.0 } } else { mass(s) };
                        s.sqrt() * heat_amplitude(lambda, s.max(1e-300)) * m
                    },
                    0.5,
                    dt,
                    1e-16,
                    1e-11,
                )
                .value
            } else {
                quadrature::integrate(
                    |s| heat_amplitude(lambda, s) * mass(s),
                    k as f64 * dt,
                    (k + 1) as f64 * dt,
                    1e-16,
                    1e-11,
                )
                .value
            };
            cells.set(k, i, v);
            cells.set(k, 2 * c - i, v);
        }
    }
    Ok(MomentKernel {
        point,
        cells,
        truncation_ratio: 0.0,
        terms: usize::MAX,
    })
}

/// `∫_0^{t_k} Σ f(s, y) 𝒦(t_k - s, x_i - y)` with `f` held at the right end
/// of each time cell and `𝒦` integrated exactly over cells.
pub fn convolve_with_moment_kernel(f: &SpaceTimeField, k: &MomentKernel) -> Result<SpaceTimeField> {
    f.check_same_grid(&k.cells)?;
    let grid = f.grid;
    let rows: Vec<Vec<f64>> = (0..grid.n_t).map(|l| k.cells.row(l).to_vec()).collect();
    Ok(lagged_convolution(f, &rows, 0, 1.0))
}

/// `2J₀² + ([ς² + 2J₀²] ⋆ 𝒦_λ)`, the second-moment envelope for a
/// coefficient with `|ρ(u)| <= Lip (ς + |u|)` when `λ = 2√2 Lip`.
///
/// Uses the closed form for α = 2 and the series otherwise.
pub fn second_moment_bound(
    j0: &SpaceTimeField,
    kernel: &dyn Kernel,
    lambda: f64,
    varsigma: f64,
    n_terms: usize,
) -> Result<SpaceTimeField> {
    if !j0.is_finite() {
        return Err(Error::Contract("J0 must be finite".into()));
    }
    let grid = j0.grid;
    let mk = if kernel.params().is_gaussian() {
        k_lambda_heat_field(lambda, &grid)?
    } else {
        k_lambda_series(kernel, lambda, &grid, n_terms)?
    };
    let source = j0.map(|v| varsigma * varsigma + 2.0 * v * v);
    let conv = convolve_with_moment_kernel(&source, &mk)?;
    let mut out = j0.map(|v| 2.0 * v * v);
    for (o, c) in out.values.iter_mut().zip(&conv.values) {
        *o += c;
    }
    Ok(out)
}

/// Smallest `C` with `𝒦(t,x) <= C 𝒢(t,x) (1 + t^{1/α} e^{Ct})` at every grid
/// node where `𝒢 = t^{-1/α} G` is above `floor` times its maximum.
pub fn fit_moment_bound(k: &MomentKernel, kernel: &dyn Kernel, floor: f64) -> f64 {
    let grid = k.point.grid;
    let alpha: f64 = kernel.params().alpha;
    let mut samples = Vec::new();
    let mut g_max = 0.0f64;
    for kk in 0..grid.n_t {
        let t = grid.t(kk);
        for i in 0..grid.n_x() {
            let g = t.powf(-1.0 / alpha) * kernel.density(t, grid.x(i));
            g_max = g_max.max(g);
            samples.push((t, g, k.point.get(kk, i)));
        }
    }
    let holds = |c: f64| {
        samples.iter().all(|&(t, g, v)| {
            g < floor * g_max || v <= c * g * (1.0 + t.powf(1.0 / alpha) * (c * t).exp())
        })
    };
    let mut hi = 1.0;
    while !holds(hi) {
        hi *= 2.0;
        if hi > 1e6 {
            return f64::INFINITY;
        }
    }
    let mut lo = 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if holds(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}
