//! The Riesz–Feller fundamental solution: an exact Gaussian for α = 2 and an
//! FFT-built table of the unit-time profile for general (α, δ).
//!
//! Everything away from t = 1 goes through the scaling law
//! `G(t, x) = t^(-1/α) G(1, t^(-1/α) x)`.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::quadrature;
use crate::special_fn::{normal_cdf, normal_sf};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StableParams {
    pub alpha: f64,
    pub delta: f64,
}

impl StableParams {
    pub fn new(alpha: f64, delta: f64) -> Result<Self> {
        if !(alpha > 1.0 && alpha <= 2.0) {
            return Err(Error::Parameter(format!("alpha must lie in (1,2], got {alpha}")));
        }
        if !(delta.abs() <= 2.0 - alpha + 1e-15) {
            return Err(Error::Parameter(format!(
                "|delta| must not exceed 2 - alpha = {} (got delta={delta})",
                2.0 - alpha
            )));
        }
        Ok(Self { alpha, delta })
    }

    pub fn heat() -> Self {
        Self {
            alpha: 2.0,
            delta: 0.0,
        }
    }

    pub fn is_gaussian(&self) -> bool {
        self.alpha == 2.0
    }

    /// Symmetric kernel with the same α.
    pub fn symmetric(&self) -> Self {
        Self {
            alpha: self.alpha,
            delta: 0.0,
        }
    }

    /// Tail exponent `1 + α` of the envelope.
    pub fn tail_power(&self) -> f64 {
        1.0 + self.alpha
    }
}

/// Heat kernel `(4πt)^(-1/2) exp(-x²/(4t))`.
pub fn gaussian_kernel(t: f64, x: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("heat kernel needs t > 0, got {t}")));
    }
    Ok((-x * x / (4.0 * t)).exp() / (4.0 * PI * t).sqrt())
}

/// Common interface of the exact Gaussian kernel and tabulated stable kernels.
///
/// The `unit_*` methods describe `G(1, ·)`; the rest follow by scaling.
pub trait Kernel: Send + Sync {
    fn params(&self) -> StableParams;

    /// `K₀` with `G(1, y) <= K₀ / (1 + |y|^(1+α))`.
    fn tail_constant(&self) -> f64;

    fn unit_density(&self, y: f64) -> f64;

    fn unit_cdf(&self, y: f64) -> f64;

    /// `1 - Φ(y)` computed without cancellation.
    fn unit_sf(&self, y: f64) -> f64;

    /// `∫_{-∞}^y G(1, u)² du`.
    fn unit_square_cdf(&self, y: f64) -> f64;

    /// `∫_a^b G(1, u) du` for `a <= b`, using whichever tail keeps precision.
    fn unit_mass_between(&self, a: f64, b: f64) -> f64 {
        if a >= 0.0 {
            (self.unit_sf(a) - self.unit_sf(b)).max(0.0)
        } else {
            (self.unit_cdf(b) - self.unit_cdf(a)).max(0.0)
        }
    }

    /// `G(t, x)` for `t > 0`.
    fn density(&self, t: f64, x: f64) -> f64 {
        let s = t.powf(-1.0 / self.params().alpha);
        s * self.unit_density(s * x)
    }

    /// `∫_a^b G(t, y) dy`.
    fn mass_between(&self, t: f64, a: f64, b: f64) -> f64 {
        let s = t.powf(-1.0 / self.params().alpha);
        self.unit_mass_between(s * a, s * b)
    }

    /// `∫_a^b G(t, y)² dy`.
    fn square_mass_between(&self, t: f64, a: f64, b: f64) -> f64 {
        let s = t.powf(-1.0 / self.params().alpha);
        s * (self.unit_square_cdf(s * b) - self.unit_square_cdf(s * a)).max(0.0)
    }
}

/// `G(t, x)` with the domain check.
pub fn kernel_value(kernel: &dyn Kernel, t: f64, x: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("kernel needs t > 0, got {t}")));
    }
    Ok(kernel.density(t, x))
}

/// `Φ_α(x) = ∫_{-∞}^x G(1, y) dy`.
pub fn stable_cdf(kernel: &dyn Kernel, x: f64) -> f64 {
    kernel.unit_cdf(x).clamp(0.0, 1.0)
}

/// `K₀ t / (t^(1+1/α) + |x|^(1+α))`.
pub fn tail_envelope(kernel: &dyn Kernel, t: f64, x: f64) -> f64 {
    let a = kernel.params().alpha;
    kernel.tail_constant() * t / (t.powf(1.0 + 1.0 / a) + x.abs().powf(1.0 + a))
}

/// Exact α = 2 kernel.
#[derive(Debug, Clone, Copy)]
pub struct GaussianKernel {
    tail_constant: f64,
}

impl GaussianKernel {
    pub fn new() -> Self {
        // max_y G(1,y)(1+|y|³), located by a fine scan plus golden refinement.
        let f = |y: f64| (-y * y / 4.0).exp() / (4.0 * PI).sqrt() * (1.0 + y.powi(3));
        let (mut lo, mut hi) = (0.0, 10.0);
        let mut best = 0.0;
        for i in 0..=1000 {
            let y = i as f64 * 0.01;
            if f(y) > f(best) {
                best = y;
            }
        }
        lo = (best - 0.01f64).max(lo);
        hi = (best + 0.01f64).min(hi);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..100 {
            let a = hi - g * (hi - lo);
            let b = lo + g * (hi - lo);
            if f(a) < f(b) {
                lo = a;
            } else {
                hi = b;
            }
        }
        Self {
            tail_constant: f(0.5 * (lo + hi)).max(f(0.0)) * (1.0 + 1e-12),
        }
    }
}

impl Default for GaussianKernel {
    fn default() -> Self {
        Self::new()
    }
}

impl Kernel for GaussianKernel {
    fn params(&self) -> StableParams {
        StableParams::heat()
    }

    fn tail_constant(&self) -> f64 {
        self.tail_constant
    }

    fn unit_density(&self, y: f64) -> f64 {
        (-y * y / 4.0).exp() / (4.0 * PI).sqrt()
    }

    fn unit_cdf(&self, y: f64) -> f64 {
        normal_cdf(y / std::f64::consts::SQRT_2)
    }

    fn unit_sf(&self, y: f64) -> f64 {
        normal_sf(y / std::f64::consts::SQRT_2)
    }

    fn unit_square_cdf(&self, y: f64) -> f64 {
        normal_cdf(y) / (8.0 * PI).sqrt()
    }

    fn density(&self, t: f64, x: f64) -> f64 {
        (-x * x / (4.0 * t)).exp() / (4.0 * PI * t).sqrt()
    }
}

/// Grid and tolerances for [`build_kernel_table`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableSpec {
    pub half_width: f64,
    pub n_points: usize,
    pub fft_size: usize,
    pub mass_tol: f64,
    pub imag_tol: f64,
}

impl TableSpec {
    /// Default grid: wide enough that the polynomial tail mass outside is a
    /// quarter of `mass_tol`, with a spacing near 0.015.
    pub fn for_params(params: StableParams) -> Self {
        let mass_tol = 1e-4;
        let half_width = if params.is_gaussian() {
            10.0
        } else {
            let a = params.alpha;
            let skew = [a + params.delta, a - params.delta]
                .iter()
                .map(|v| (PI * v / 2.0).sin().abs())
                .fold(0.0, f64::max);
            let coeff = libm::tgamma(1.0 + a) / PI * skew.max(0.05);
            (2.0 * coeff / (a * 0.25 * mass_tol)).powf(1.0 / a).max(12.0)
        };
        let target = if params.is_gaussian() { 0.005 } else { 0.015 };
        let cells = ((2.0 * half_width / target).ceil() as usize)
            .next_power_of_two()
            .clamp(4096, 1 << 20);
        let n_points = cells + 1;
        Self {
            half_width,
            n_points,
            fft_size: (4 * n_points).next_power_of_two(),
            mass_tol,
            imag_tol: 1e-8,
        }
    }
}

/// Tabulated `G(1, ·)` on `x_j = -W + j dx`.
#[derive(Debug, Clone)]
pub struct KernelTable {
    params: StableParams,
    half_width: f64,
    dx: f64,
    profile: Vec<f64>,
    log_profile: Vec<f64>,
    tail_constant: f64,
    mass: f64,
    clipped_mass: f64,
    max_imag: f64,
    left_scale: f64,
    right_scale: f64,
    left_tail: f64,
    right_tail: f64,
    cum_left: Vec<f64>,
    cum_right: Vec<f64>,
    cum_square: Vec<f64>,
}

const LOG_FLOOR: f64 = 1e-300;

pub const INTERPOLATION_ORDER: usize = 3;

/// `∫_w^∞ dy / (1 + y^p)` for `w >= 1`, by the alternating series in `y^-p`.
fn envelope_tail_integral(w: f64, p: f64) -> f64 {
    if w < 1.5 {
        let upper = 50.0f64.max(w + 1.0);
        let head = quadrature::integrate(|y| 1.0 / (1.0 + y.powf(p)), w, upper, 1e-16, 1e-13).value;
        return head + envelope_tail_integral(upper, p);
    }
    let mut sum = 0.0;
    for k in 0..200 {
        let e = p * (k + 1) as f64 - 1.0;
        let term = w.powf(-e) / e;
        sum += if k % 2 == 0 { term } else { -term };
        if term < 1e-18 * sum.abs() {
            break;
        }
    }
    sum
}

/// Builds the unit-time profile with default tolerances.
pub fn build_kernel_table(
    params: StableParams,
    x_half_width: f64,
    n_points: usize,
    fft_size: usize,
) -> Result<KernelTable> {
    build_kernel_table_with(
        params,
        &TableSpec {
            half_width: x_half_width,
            n_points,
            fft_size,
            mass_tol: 1e-4,
            imag_tol: 1e-8,
        },
    )
}

pub fn build_kernel_table_with(params: StableParams, spec: &TableSpec) -> Result<KernelTable> {
    let StableParams { alpha, delta } = StableParams::new(params.alpha, params.delta)?;
    if spec.n_points < 256 {
        return Err(Error::Parameter(format!("n_points must be >= 256, got {}", spec.n_points)));
    }
    if !spec.fft_size.is_power_of_two() || spec.fft_size < 4 * spec.n_points {
        return Err(Error::Parameter(format!(
            "fft_size must be a power of two >= 4 n_points, got {}",
            spec.fft_size
        )));
    }
    if !(spec.half_width > 0.0) {
        return Err(Error::Parameter("half width must be positive".into()));
    }
    let n = spec.fft_size;
    let dx = 2.0 * spec.half_width / (spec.n_points - 1) as f64;
    let x0 = -spec.half_width;
    let dxi = 2.0 * PI / (n as f64 * dx);
    let rot = Complex64::from_polar(1.0, -PI * delta / 2.0);
    let mut buf: Vec<Complex64> = (0..n)
        .map(|k| {
            let kk = if k < n / 2 { k as f64 } else { k as f64 - n as f64 };
            let xi = kk * dxi;
            let phase = if xi >= 0.0 { rot } else { rot.conj() };
            let exponent = Complex64::new(0.0, xi * x0) - phase * xi.abs().powf(alpha);
            exponent.exp() * (dxi / (2.0 * PI))
        })
        .collect();
    FftPlanner::new().plan_fft_inverse(n).process(&mut buf);

    let mut profile = Vec::with_capacity(spec.n_points);
    let mut clipped_mass = 0.0;
    let mut max_imag = 0.0f64;
    for value in &buf[..spec.n_points] {
        max_imag = max_imag.max(value.im.abs());
        if value.re < 0.0 {
            clipped_mass += -value.re * dx;
            profile.push(0.0);
        } else {
            profile.push(value.re);
        }
    }
    if max_imag > spec.imag_tol {
        return Err(Error::Accuracy {
            detail: format!("imaginary residue of the Fourier inversion exceeds {}", spec.imag_tol),
            achieved: max_imag,
        });
    }
    let mass = dx
        * (profile.iter().sum::<f64>() - 0.5 * (profile[0] + profile[spec.n_points - 1]));
    let tail_power = 1.0 + alpha;
    let node = |j: usize| x0 + j as f64 * dx;
    let tail_constant = profile
        .iter()
        .enumerate()
        .map(|(j, p)| p * (1.0 + node(j).abs().powf(tail_power)))
        .fold(0.0, f64::max);
    let outside = 2.0 * tail_constant * envelope_tail_integral(spec.half_width, tail_power);
    if outside >= spec.mass_tol && !params.is_gaussian() {
        return Err(Error::Resolution {
            achieved_mass: mass,
            mass_tol: spec.mass_tol,
            detail: format!(
                "tail envelope mass outside ±{} is {outside:e}; widen the grid",
                spec.half_width
            ),
        });
    }
    if !(mass >= 1.0 - spec.mass_tol && mass <= 1.0 + 1e-12) {
        return Err(Error::Resolution {
            achieved_mass: mass,
            mass_tol: spec.mass_tol,
            detail: format!("trapezoid mass {mass} outside [1 - tol, 1]"),
        });
    }
    let envelope_at = |y: f64| tail_constant / (1.0 + y.abs().powf(tail_power));
    let last = spec.n_points - 1;
    let left_scale = (profile[0] / envelope_at(node(0))).min(1.0);
    let right_scale = (profile[last] / envelope_at(node(last))).min(1.0);
    let unit_tail = tail_constant * envelope_tail_integral(spec.half_width, tail_power);
    let log_profile = profile.iter().map(|p| (p + LOG_FLOOR).ln()).collect();

    let mut table = KernelTable {
        params: StableParams { alpha, delta },
        half_width: spec.half_width,
        dx,
        profile,
        log_profile,
        tail_constant,
        mass,
        clipped_mass,
        max_imag,
        left_scale,
        right_scale,
        left_tail: left_scale * unit_tail,
        right_tail: right_scale * unit_tail,
        cum_left: Vec::new(),
        cum_right: Vec::new(),
        cum_square: Vec::new(),
    };
    table.raise_tail_constant_to_interpolant();
    table.build_cumulatives();
    Ok(table)
}

/// Cell integrals from the four-point rule `(-f₋₁ + 13f₀ + 13f₁ - f₂) dx / 24`,
/// falling back to the trapezoid on the two boundary cells.
fn cell_integrals(values: &[f64], dx: f64) -> Vec<f64> {
    let n = values.len();
    (0..n - 1)
        .map(|j| {
            let v = if j == 0 || j + 2 >= n {
                0.5 * (values[j] + values[j + 1])
            } else {
                (-values[j - 1] + 13.0 * values[j] + 13.0 * values[j + 1] - values[j + 2]) / 24.0
            };
            v.max(0.0) * dx
        })
        .collect()
}

impl KernelTable {
    fn build_cumulatives(&mut self) {
        let cells = cell_integrals(&self.profile, self.dx);
        let squares: Vec<f64> = self.profile.iter().map(|p| p * p).collect();
        let square_cells = cell_integrals(&squares, self.dx);
        let n = self.profile.len();
        let mut left = vec![0.0; n];
        let mut sq = vec![0.0; n];
        for j in 1..n {
            left[j] = left[j - 1] + cells[j - 1];
            sq[j] = sq[j - 1] + square_cells[j - 1];
        }
        let mut right = vec![0.0; n];
        for j in (0..n - 1).rev() {
            right[j] = right[j + 1] + cells[j];
        }
        self.cum_left = left;
        self.cum_right = right;
        self.cum_square = sq;
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn profile(&self) -> &[f64] {
        &self.profile
    }

    pub fn node(&self, j: usize) -> f64 {
        -self.half_width + j as f64 * self.dx
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.profile.len()).map(|j| self.node(j))
    }

    /// Trapezoid mass of the profile over the grid.
    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// Mass removed when clipping negative round-off.
    pub fn clipped_mass(&self) -> f64 {
        self.clipped_mass
    }

    pub fn max_imag_residue(&self) -> f64 {
        self.max_imag
    }

    pub fn interpolation_order(&self) -> usize {
        INTERPOLATION_ORDER
    }

    /// Total mass including the analytic tails.
    fn total_mass(&self) -> f64 {
        self.left_tail + self.cum_left[self.cum_left.len() - 1] + self.right_tail
    }

    /// Lifts `K₀` from the node maximum to the maximum of the interpolant,
    /// sampled inside every cell, so the envelope holds off the nodes too.
    fn raise_tail_constant_to_interpolant(&mut self) {
        const SUBSAMPLES: usize = 16;
        let p = self.params.tail_power();
        let mut k0 = self.tail_constant;
        for j in 0..self.profile.len() - 1 {
            for s in 1..SUBSAMPLES {
                let y = self.node(j) + self.dx * s as f64 / SUBSAMPLES as f64;
                k0 = k0.max(self.interpolate(y) * (1.0 + y.abs().powf(p)));
            }
        }
        let unit_tail = k0 * envelope_tail_integral(self.half_width, p);
        self.left_scale *= self.tail_constant / k0;
        self.right_scale *= self.tail_constant / k0;
        self.left_tail = self.left_scale * unit_tail;
        self.right_tail = self.right_scale * unit_tail;
        self.tail_constant = k0;
    }

    fn envelope_unit(&self, y: f64) -> f64 {
        self.tail_constant / (1.0 + y.abs().powf(self.params.tail_power()))
    }

    /// Log-cubic Lagrange interpolation; node values are returned exactly.
    fn interpolate(&self, y: f64) -> f64 {
        let pos = (y + self.half_width) / self.dx;
        let n = self.profile.len();
        let j = pos.floor();
        let frac = pos - j;
        let j = j as usize;
        if frac < 1e-12 {
            return self.profile[j.min(n - 1)];
        }
        if frac > 1.0 - 1e-12 {
            return self.profile[(j + 1).min(n - 1)];
        }
        let start = j.saturating_sub(1).min(n - 4);
        let u = pos - start as f64;
        let l = &self.log_profile[start..start + 4];
        // Lagrange basis on nodes 0, 1, 2, 3.
        let w0 = -(u - 1.0) * (u - 2.0) * (u - 3.0) / 6.0;
        let w1 = u * (u - 2.0) * (u - 3.0) / 2.0;
        let w2 = -u * (u - 1.0) * (u - 3.0) / 2.0;
        let w3 = u * (u - 1.0) * (u - 2.0) / 6.0;
        ((w0 * l[0] + w1 * l[1] + w2 * l[2] + w3 * l[3]).exp() - LOG_FLOOR).max(0.0)
    }

    /// Integral of the interpolant from node `j` to `y` inside cell `j`.
    fn partial_cell(&self, j: usize, y: f64, square: bool) -> f64 {
        let a = self.node(j);
        if y <= a {
            return 0.0;
        }
        quadrature::kronrod15(
            |u| {
                let v = self.interpolate(u);
                if square {
                    v * v
                } else {
                    v
                }
            },
            a,
            y,
        )
    }

    fn locate(&self, y: f64) -> usize {
        (((y + self.half_width) / self.dx).floor() as usize).min(self.profile.len() - 2)
    }

    /// Writes the table to a versioned little-endian binary file.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::with_capacity(80 + 8 * self.profile.len());
        out.extend_from_slice(CACHE_MAGIC);
        out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
        for v in [self.params.alpha, self.params.delta, self.half_width] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(self.profile.len() as u64).to_le_bytes());
        for v in [self.tail_constant, self.mass, self.clipped_mass, self.max_imag] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.profile {
            out.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::File::create(path)?.write_all(&out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        let bad = |what: &str| Error::Io(format!("{}: {what}", path.display()));
        if bytes.len() < 68 || &bytes[..4] != CACHE_MAGIC {
            return Err(bad("not a kernel table cache"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        if u32_at(4) != CACHE_VERSION {
            return Err(bad("unsupported cache version"));
        }
        let params = StableParams::new(f64_at(8), f64_at(16))?;
        let half_width = f64_at(24);
        let n = u64::from_le_bytes(bytes[32..40].try_into().unwrap()) as usize;
        let header = 72;
        if n < 4 || bytes.len() != header + 8 * n {
            return Err(bad("payload length does not match header"));
        }
        let profile: Vec<f64> = (0..n).map(|j| f64_at(header + 8 * j)).collect();
        let tail_constant = f64_at(40);
        let dx = 2.0 * half_width / (n - 1) as f64;
        let tail_power = params.tail_power();
        let envelope_at = |y: f64| tail_constant / (1.0 + y.abs().powf(tail_power));
        let left_scale = (profile[0] / envelope_at(-half_width)).min(1.0);
        let right_scale = (profile[n - 1] / envelope_at(half_width)).min(1.0);
        let unit_tail = tail_constant * envelope_tail_integral(half_width, tail_power);
        let mut table = KernelTable {
            params,
            half_width,
            dx,
            log_profile: profile.iter().map(|p| (p + LOG_FLOOR).ln()).collect(),
            profile,
            tail_constant,
            mass: f64_at(48),
            clipped_mass: f64_at(56),
            max_imag: f64_at(64),
            left_scale,
            right_scale,
            left_tail: left_scale * unit_tail,
            right_tail: right_scale * unit_tail,
            cum_left: Vec::new(),
            cum_right: Vec::new(),
            cum_square: Vec::new(),
        };
        table.build_cumulatives();
        Ok(table)
    }
}

const CACHE_MAGIC: &[u8; 4] = b"FHKT";
const CACHE_VERSION: u32 = 1;

impl Kernel for KernelTable {
    fn params(&self) -> StableParams {
        self.params
    }

    fn tail_constant(&self) -> f64 {
        self.tail_constant
    }

    fn unit_density(&self, y: f64) -> f64 {
        if y < -self.half_width {
            self.left_scale * self.envelope_unit(y)
        } else if y > self.half_width {
            self.right_scale * self.envelope_unit(y)
        } else {
            self.interpolate(y)
        }
    }

    fn unit_cdf(&self, y: f64) -> f64 {
        let p = self.params.tail_power();
        let total = self.total_mass();
        if y <= -self.half_width {
            return self.left_scale * self.tail_constant * envelope_tail_integral(-y, p) / total;
        }
        if y >= self.half_width {
            return 1.0 - self.unit_sf(y);
        }
        let j = self.locate(y);
        (self.left_tail + self.cum_left[j] + self.partial_cell(j, y, false)) / total
    }

    fn unit_sf(&self, y: f64) -> f64 {
        let p = self.params.tail_power();
        let total = self.total_mass();
        if y >= self.half_width {
            return self.right_scale * self.tail_constant * envelope_tail_integral(y, p) / total;
        }
        if y <= -self.half_width {
            return 1.0 - self.unit_cdf(y);
        }
        let j = self.locate(y);
        let cell = self.cum_left[j + 1] - self.cum_left[j];
        let inside = (cell - self.partial_cell(j, y, false)).max(0.0);
        (self.right_tail + self.cum_right[j + 1] + inside) / total
    }

    fn unit_square_cdf(&self, y: f64) -> f64 {
        if y <= -self.half_width {
            return 0.0;
        }
        let y = y.min(self.half_width);
        let j = self.locate(y);
        self.cum_square[j] + self.partial_cell(j, y, true)
    }
}

/// Envelope constants `(C′, C)` with `C′ G̃ <= G <= C G̃` on the common
/// grid, where `G̃` is the symmetric kernel with the same α.
pub fn symmetric_comparison(
    skewed: &dyn Kernel,
    symmetric: &dyn Kernel,
    points: &[f64],
) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for &y in points {
        let s = symmetric.unit_density(y);
        if s <= 0.0 {
            continue;
        }
        let r = skewed.unit_density(y) / s;
        lo = lo.min(r);
        hi = hi.max(r);
    }
    (lo, hi)
}
