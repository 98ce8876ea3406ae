//! Initial measures, the homogeneous solution `J₀`, counter-based white
//! noise and the localized drift fields used for shifted runs.

use std::f64::consts::PI;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::grid::{SpaceTimeField, SpaceTimeGrid};
use crate::stable_kernel::{Kernel, StableParams};

/// Signed initial data.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialMeasure {
    /// Point masses `(location, mass)`.
    Dirac(Vec<(f64, f64)>),
    /// Bounded density sampled at `start + j * spacing`, zero outside.
    Density {
        start: f64,
        spacing: f64,
        samples: Vec<f64>,
    },
    /// Constant density on the whole line.
    Lebesgue { level: f64 },
    Combination(Vec<InitialMeasure>),
}

impl InitialMeasure {
    pub fn dirac(location: f64) -> Self {
        Self::Dirac(vec![(location, 1.0)])
    }

    pub fn lebesgue() -> Self {
        Self::Lebesgue { level: 1.0 }
    }

    pub fn zero() -> Self {
        Self::Dirac(Vec::new())
    }

    /// Samples `f` on `[a, b]` with `n` points.
    pub fn density_from_fn(a: f64, b: f64, n: usize, f: impl Fn(f64) -> f64) -> Self {
        let spacing = (b - a) / (n - 1) as f64;
        Self::Density {
            start: a,
            spacing,
            samples: (0..n).map(|j| f(a + j as f64 * spacing)).collect(),
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        match self {
            Self::Dirac(atoms) => Self::Dirac(atoms.iter().map(|(x, m)| (*x, c * m)).collect()),
            Self::Density {
                start,
                spacing,
                samples,
            } => Self::Density {
                start: *start,
                spacing: *spacing,
                samples: samples.iter().map(|v| c * v).collect(),
            },
            Self::Lebesgue { level } => Self::Lebesgue { level: c * level },
            Self::Combination(parts) => Self::Combination(parts.iter().map(|p| p.scaled(c)).collect()),
        }
    }

    /// Total variation measure `|μ|`, computed part by part.
    pub fn abs(&self) -> Self {
        match self {
            Self::Dirac(atoms) => Self::Dirac(atoms.iter().map(|(x, m)| (*x, m.abs())).collect()),
            Self::Density {
                start,
                spacing,
                samples,
            } => Self::Density {
                start: *start,
                spacing: *spacing,
                samples: samples.iter().map(|v| v.abs()).collect(),
            },
            Self::Lebesgue { level } => Self::Lebesgue { level: level.abs() },
            Self::Combination(parts) => Self::Combination(parts.iter().map(|p| p.abs()).collect()),
        }
    }

    /// Whether every part carries nonnegative mass.
    pub fn is_nonnegative(&self) -> bool {
        match self {
            Self::Dirac(atoms) => atoms.iter().all(|(_, m)| *m >= 0.0),
            Self::Density { samples, .. } => samples.iter().all(|v| *v >= 0.0),
            Self::Lebesgue { level } => *level >= 0.0,
            Self::Combination(parts) => parts.iter().all(|p| p.is_nonnegative()),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Self::Dirac(atoms) => atoms.iter().all(|(_, m)| *m == 0.0),
            Self::Density { samples, .. } => samples.iter().all(|v| *v == 0.0),
            Self::Lebesgue { level } => *level == 0.0,
            Self::Combination(parts) => parts.iter().all(|p| p.is_zero()),
        }
    }

    /// `∫ w(x) μ(dx)` for a weight with a closed-form Lebesgue integral.
    fn integrate(&self, w: &dyn Fn(f64) -> f64, lebesgue_integral: f64) -> f64 {
        match self {
            Self::Dirac(atoms) => atoms.iter().map(|(x, m)| m * w(*x)).sum(),
            Self::Density {
                start,
                spacing,
                samples,
            } => {
                let n = samples.len();
                samples
                    .iter()
                    .enumerate()
                    .map(|(j, v)| {
                        let end = if j == 0 || j + 1 == n { 0.5 } else { 1.0 };
                        end * v * w(start + j as f64 * spacing)
                    })
                    .sum::<f64>()
                    * spacing
            }
            Self::Lebesgue { level } => level * lebesgue_integral,
            Self::Combination(parts) => parts.iter().map(|p| p.integrate(w, lebesgue_integral)).sum(),
        }
    }
}

/// Outcome of [`check_admissible`].
#[derive(Debug, Clone, PartialEq)]
pub struct Admissibility {
    pub admissible: bool,
    /// Largest diagnostic integral found.
    pub value: f64,
    /// `(probe or c, integral)` pairs behind `value`.
    pub evaluations: Vec<(f64, f64)>,
}

/// Diagnostics above this count as infinite.
pub const ADMISSIBILITY_CAP: f64 = 1e12;

/// For α < 2, `sup_y ∫ |μ|(dx) / (1 + |y - x|^{1+α})` over the probes; for
/// α = 2, `∫ e^{-cx²} |μ|(dx)` for `c ∈ {1, 0.1, 0.01}`. A finite probe set
/// only bounds the supremum from below.
pub fn check_admissible(mu: &InitialMeasure, params: StableParams, probe_grid: &[f64]) -> Admissibility {
    let abs = mu.abs();
    let evaluations: Vec<(f64, f64)> = if params.is_gaussian() {
        [1.0, 0.1, 0.01]
            .iter()
            .map(|&c| {
                let w = move |x: f64| (-c * x * x).exp();
                (c, abs.integrate(&w, (PI / c).sqrt()))
            })
            .collect()
    } else {
        let p = params.tail_power();
        let lebesgue = 2.0 * (PI / p) / (PI / p).sin();
        probe_grid
            .iter()
            .map(|&y| {
                let w = move |x: f64| 1.0 / (1.0 + (y - x).abs().powf(p));
                (y, abs.integrate(&w, lebesgue))
            })
            .collect()
    };
    let value = evaluations.iter().map(|e| e.1).fold(0.0, f64::max);
    Admissibility {
        admissible: value.is_finite() && value < ADMISSIBILITY_CAP,
        value,
        evaluations,
    }
}

/// `J₀(t, x) = ∫ G(t, x - y) μ(dy)`; densities are treated as constant on
/// the cell around each sample, integrated exactly against the kernel.
pub fn j0_value(mu: &InitialMeasure, kernel: &dyn Kernel, t: f64, x: f64) -> f64 {
    match mu {
        InitialMeasure::Dirac(atoms) => atoms.iter().map(|(a, m)| m * kernel.density(t, x - a)).sum(),
        InitialMeasure::Density {
            start,
            spacing,
            samples,
        } => {
            let n = samples.len();
            samples
                .iter()
                .enumerate()
                .map(|(j, v)| {
                    let y = start + j as f64 * spacing;
                    let lo = if j == 0 { y } else { y - 0.5 * spacing };
                    let hi = if j + 1 == n { y } else { y + 0.5 * spacing };
                    v * kernel.mass_between(t, x - hi, x - lo)
                })
                .sum()
        }
        InitialMeasure::Lebesgue { level } => *level,
        InitialMeasure::Combination(parts) => parts.iter().map(|p| j0_value(p, kernel, t, x)).sum(),
    }
}

/// `J₀` on every grid node.
pub fn j0_field(mu: &InitialMeasure, kernel: &dyn Kernel, grid: &SpaceTimeGrid) -> SpaceTimeField {
    SpaceTimeField::from_fn(*grid, |t, x| j0_value(mu, kernel, t, x))
}

/// White-noise increments `ΔW(k, j)` for the `n_t - 1` time steps.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    pub master_seed: u64,
    pub path_index: u64,
    pub n_steps: usize,
    pub n_x: usize,
    pub scale: f64,
    pub increments: Vec<f64>,
}

/// Uniform in the open interval (0, 1) from the top 53 bits.
fn open_unit(bits: u64) -> f64 {
    ((bits >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

fn keyed_generator(master_seed: u64, path_index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(master_seed);
    rng.set_stream(path_index);
    rng
}

fn box_muller(rng: &mut ChaCha20Rng) -> f64 {
    let u1 = open_unit(rng.next_u64());
    let u2 = open_unit(rng.next_u64());
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// Standard normal for one cell, recomputed from its key alone.
pub fn standard_normal_at(master_seed: u64, path_index: u64, cell: u64) -> f64 {
    let mut rng = keyed_generator(master_seed, path_index);
    rng.set_word_pos(4 * cell as u128);
    box_muller(&mut rng)
}

/// Increments `N(0, Δt Δx)` keyed on `(seed, path, k, j)`.
pub fn sample_noise(master_seed: u64, path_index: u64, grid: &SpaceTimeGrid) -> NoisePath {
    let n_steps = grid.n_t.saturating_sub(1);
    let n_x = grid.n_x();
    let scale = (grid.dt * grid.dx).sqrt();
    let mut rng = keyed_generator(master_seed, path_index);
    let increments = (0..n_steps * n_x).map(|_| scale * box_muller(&mut rng)).collect();
    NoisePath {
        master_seed,
        path_index,
        n_steps,
        n_x,
        scale,
        increments,
    }
}

impl NoisePath {
    pub fn zeros(grid: &SpaceTimeGrid) -> Self {
        let n_steps = grid.n_t.saturating_sub(1);
        Self {
            master_seed: 0,
            path_index: 0,
            n_steps,
            n_x: grid.n_x(),
            scale: (grid.dt * grid.dx).sqrt(),
            increments: vec![0.0; n_steps * grid.n_x()],
        }
    }

    pub fn get(&self, k: usize, j: usize) -> f64 {
        self.increments[k * self.n_x + j]
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.increments[k * self.n_x..(k + 1) * self.n_x]
    }

    /// Recomputes one increment from the key, without the stored array.
    pub fn recompute(&self, k: usize, j: usize) -> f64 {
        self.scale * standard_normal_at(self.master_seed, self.path_index, (k * self.n_x + j) as u64)
    }

    /// Copy with `ΔW(k, j)` shifted by `eps`.
    pub fn perturbed(&self, k: usize, j: usize, eps: f64) -> Self {
        let mut out = self.clone();
        out.increments[k * self.n_x + j] += eps;
        out
    }

    pub fn matches_grid(&self, grid: &SpaceTimeGrid) -> bool {
        self.n_steps == grid.n_t.saturating_sub(1) && self.n_x == grid.n_x()
    }
}

/// `⟨z, h(s, y)⟩` per step `k` (time cell `[t_k, t_{k+1}]`) and space cell.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftField {
    pub n_steps: usize,
    pub n_x: usize,
    pub values: Vec<f64>,
}

impl DriftField {
    pub fn get(&self, k: usize, j: usize) -> f64 {
        self.values[k * self.n_x + j]
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.n_x..(k + 1) * self.n_x]
    }

    /// `Σ value Δt Δx` over all cells.
    pub fn integral(&self, grid: &SpaceTimeGrid) -> f64 {
        self.values.iter().sum::<f64>() * grid.dt * grid.dx
    }
}

fn overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (a1.min(b1) - a0.max(b0)).max(0.0)
}

/// `Σᵢ zᵢ c_n 1[T - 2^{-n} <= s <= T] 1[|y - xᵢ| <= 2^{-n}]` with each
/// cell weighted by the fraction of its area inside the rectangle.
pub fn drift_field(
    n: u32,
    points: &[f64],
    z: &[f64],
    t_final: f64,
    grid: &SpaceTimeGrid,
    c_n: f64,
) -> Result<DriftField> {
    if n == 0 {
        return Err(Error::Parameter("localization level n must be >= 1".into()));
    }
    if points.len() != z.len() {
        return Err(Error::Contract(format!(
            "{} points but {} drift weights",
            points.len(),
            z.len()
        )));
    }
    if points.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Contract("points must be strictly increasing".into()));
    }
    let h = 0.5f64.powi(n as i32);
    if points.windows(2).any(|w| 2.0 * h >= w[1] - w[0]) {
        return Err(Error::Contract(format!(
            "windows of half-width 2^-{n} overlap for the given points"
        )));
    }
    let n_steps = grid.n_t.saturating_sub(1);
    let n_x = grid.n_x();
    let mut values = vec![0.0; n_steps * n_x];
    for k in 0..n_steps {
        let time_frac = overlap(grid.t(k), grid.t(k + 1), t_final - h, t_final) / grid.dt;
        if time_frac == 0.0 {
            continue;
        }
        for j in 0..n_x {
            let (c0, c1) = (grid.x(j) - 0.5 * grid.dx, grid.x(j) + 0.5 * grid.dx);
            let mut v = 0.0;
            for (x, zi) in points.iter().zip(z) {
                v += zi * overlap(c0, c1, x - h, x + h) / grid.dx;
            }
            values[k * n_x + j] = c_n * time_frac * v;
        }
    }
    Ok(DriftField {
        n_steps,
        n_x,
        values,
    })
}
