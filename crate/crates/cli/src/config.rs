//! Run configuration: TOML text with every field defaulted, unknown keys
//! rejected, and value checks that run before any computation.

use std::path::PathBuf;

use fracheat::density_stats::digest_hex;
use serde::{Deserialize, Serialize};

pub const DEFAULT_DT: f64 = 1.0 / 256.0;
pub const DEFAULT_DX: f64 = 1.0 / 64.0;
pub const DEFAULT_HALF_WIDTH: f64 = 8.0;

/// Evenly spaced values `from..=to`, `n` of them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Span {
    pub from: f64,
    pub to: f64,
    pub n: usize,
}

impl Span {
    pub fn values(&self) -> Vec<f64> {
        if self.n == 1 {
            return vec![self.from];
        }
        let last = (self.n - 1) as f64;
        (0..self.n)
            .map(|i| self.from + (self.to - self.from) * i as f64 / last)
            .collect()
    }

    fn check(&self, path: &str, errors: &mut Vec<String>) {
        if self.n == 0 || !(self.from.is_finite() && self.to.is_finite()) || self.to < self.from {
            errors.push(format!("{path}: need finite from <= to and n >= 1"));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RhoConfig {
    Pam { lambda: f64 },
    Constant { value: f64 },
    Zero,
    Sine { a: f64, b: f64 },
    AbsSine,
    Delayed { t_on: f64 },
}

impl Default for RhoConfig {
    fn default() -> Self {
        RhoConfig::Pam { lambda: 1.0 }
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MuConfig {
    Dirac {
        #[serde(default)]
        location: f64,
        #[serde(default = "one")]
        mass: f64,
    },
    Lebesgue {
        #[serde(default = "one")]
        level: f64,
    },
    /// `δ_location + level · Lebesgue`.
    DiracPlusLebesgue {
        #[serde(default)]
        location: f64,
        #[serde(default = "one")]
        level: f64,
    },
    Zero,
}

impl Default for MuConfig {
    fn default() -> Self {
        MuConfig::Dirac { location: 0.0, mass: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelSection {
    pub t: Vec<f64>,
    pub x: Span,
}

impl Default for KernelSection {
    fn default() -> Self {
        Self {
            t: vec![0.1, 0.5, 1.0],
            x: Span { from: -5.0, to: 5.0, n: 201 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MittagSection {
    pub a: f64,
    pub b: f64,
    pub z: Span,
}

impl Default for MittagSection {
    fn default() -> Self {
        Self {
            a: 0.5,
            b: 1.0,
            z: Span { from: -5.0, to: 20.0, n: 51 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GronwallSection {
    pub lambda: f64,
    pub beta: f64,
    pub n_intervals: usize,
    /// Window widths for the localized equation; each must be below `t_final`.
    pub epsilons: Vec<f64>,
}

impl Default for GronwallSection {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            beta: 1.0,
            n_intervals: 1024,
            epsilons: (1..=8).map(|n| 0.5f64.powi(n)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MomentsSection {
    pub lambda: f64,
    pub n_terms: usize,
    pub probes: Vec<(f64, f64)>,
}

impl Default for MomentsSection {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            n_terms: 12,
            probes: vec![(0.25, 0.0), (0.5, 0.0), (0.5, 0.5)],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    /// `(t, x)` points; empty means `(t_final, 0)`.
    pub probes: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsiSection {
    pub levels: Vec<u32>,
    pub points: Vec<f64>,
    pub t: Span,
    pub x: Span,
}

impl Default for PsiSection {
    fn default() -> Self {
        Self {
            levels: vec![1, 2, 3],
            points: vec![0.0],
            t: Span { from: 0.45, to: 1.0, n: 56 },
            x: Span { from: -2.0, to: 2.0, n: 81 },
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensitySection {
    /// Defaults to `t_final`.
    pub t: Option<f64>,
    pub x: f64,
    /// Fixed bandwidth; Silverman's rule when absent.
    pub bandwidth: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmallBallSection {
    pub t: Option<f64>,
    pub x_from: f64,
    pub x_to: f64,
    pub eps: Vec<f64>,
    /// Standard errors a slope may rise before the curve counts as not concave.
    pub concavity_z: f64,
    pub negative_moments: Vec<f64>,
}

impl Default for SmallBallSection {
    fn default() -> Self {
        Self {
            t: None,
            x_from: -0.5,
            x_to: 0.5,
            eps: (0..=8).map(|i| 10f64.powf(-1.0 - 0.25 * i as f64)).collect(),
            concavity_z: 2.0,
            negative_moments: vec![1.0, 2.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct T0Section {
    /// Each entry `c` probes `s = t_final · i / c`, `i = 1..=c`.
    pub s_cells: Vec<usize>,
    pub y: Span,
    pub zero_tol: f64,
}

impl Default for T0Section {
    fn default() -> Self {
        Self {
            s_cells: vec![16, 64, 256],
            y: Span { from: -4.0, to: 4.0, n: 81 },
            zero_tol: fracheat::density_stats::T0_ZERO_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HolderSection {
    pub t: f64,
    pub x: f64,
    pub lags: Vec<f64>,
}

impl Default for HolderSection {
    fn default() -> Self {
        Self {
            t: 0.25,
            x: 0.0,
            lags: (4..=8).rev().map(|e| 0.5f64.powi(e)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub alpha: f64,
    pub delta: f64,
    pub t_final: f64,
    pub dt: f64,
    pub dx: f64,
    pub half_width: f64,
    pub paths: usize,
    pub seed: u64,
    pub positivity_clip: bool,
    pub rho: RhoConfig,
    pub mu: MuConfig,
    pub kernel: KernelSection,
    pub mittag: MittagSection,
    pub gronwall: GronwallSection,
    pub moments: MomentsSection,
    pub simulate: SimulateSection,
    pub psi: PsiSection,
    pub density: DensitySection,
    pub smallball: SmallBallSection,
    pub t0: T0Section,
    pub holder: HolderSection,
    /// Thread budget; `--threads` and `FRACHEAT_THREADS` take precedence.
    #[serde(skip_serializing)]
    pub threads: Option<usize>,
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            alpha: 2.0,
            delta: 0.0,
            t_final: 1.0,
            dt: DEFAULT_DT,
            dx: DEFAULT_DX,
            half_width: DEFAULT_HALF_WIDTH,
            paths: 1000,
            seed: 0,
            positivity_clip: false,
            rho: RhoConfig::default(),
            mu: MuConfig::default(),
            kernel: KernelSection::default(),
            mittag: MittagSection::default(),
            gronwall: GronwallSection::default(),
            moments: MomentsSection::default(),
            simulate: SimulateSection::default(),
            psi: PsiSection::default(),
            density: DensitySection::default(),
            smallball: SmallBallSection::default(),
            t0: T0Section::default(),
            holder: HolderSection::default(),
            threads: None,
            out: None,
        }
    }
}

fn positive(v: f64) -> bool {
    v > 0.0 && v.is_finite()
}

impl RunConfig {
    /// Every violated model or grid constraint, each prefixed with its key path.
    pub fn validate(&self) -> Vec<String> {
        let mut e = Vec::new();
        if !(self.alpha > 1.0 && self.alpha <= 2.0) {
            e.push(format!("alpha: alpha must lie in (1,2], got {}", self.alpha));
        } else if !(self.delta.abs() <= 2.0 - self.alpha + 1e-15) {
            e.push(format!(
                "delta: |delta| must not exceed 2 - alpha = {:.6}, got {}",
                2.0 - self.alpha,
                self.delta
            ));
        }
        for (key, v) in [
            ("t_final", self.t_final),
            ("dt", self.dt),
            ("dx", self.dx),
            ("half_width", self.half_width),
        ] {
            if !positive(v) {
                e.push(format!("{key}: must be positive and finite, got {v}"));
            }
        }
        if positive(self.dt) && positive(self.t_final) {
            let steps = self.t_final / self.dt;
            if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
                e.push(format!("dt: must divide t_final, got {} steps", steps));
            }
            if self.alpha > 1.0 && positive(self.dx) && self.dx > self.dt.powf(1.0 / self.alpha) {
                e.push(format!(
                    "dx: must not exceed dt^(1/alpha) = {}, got {}",
                    self.dt.powf(1.0 / self.alpha),
                    self.dx
                ));
            }
        }
        if self.paths < 2 {
            e.push(format!("paths: need at least 2, got {}", self.paths));
        }
        match self.rho {
            RhoConfig::Pam { lambda } if !lambda.is_finite() => e.push("rho.lambda: must be finite".into()),
            RhoConfig::Sine { a, b } if !(a.is_finite() && b.is_finite()) => {
                e.push("rho: a and b must be finite".into())
            }
            _ => {}
        }
        e
    }

    /// Checks for the section a subcommand reads.
    pub fn validate_section(&self, subcommand: &str) -> Vec<String> {
        let mut e = Vec::new();
        let in_time = |t: f64| t > 0.0 && t <= self.t_final * (1.0 + 1e-12);
        let in_space = |x: f64| x.abs() <= self.half_width;
        match subcommand {
            "kernel" => {
                self.kernel.x.check("kernel.x", &mut e);
                if self.kernel.t.iter().any(|t| !positive(*t)) {
                    e.push("kernel.t: times must be positive".into());
                }
            }
            "mittag" => {
                self.mittag.z.check("mittag.z", &mut e);
                if !(positive(self.mittag.a) && positive(self.mittag.b)) {
                    e.push("mittag: a and b must be positive".into());
                }
            }
            "gronwall" => {
                if self.gronwall.n_intervals == 0 {
                    e.push("gronwall.n_intervals: must be at least 1".into());
                }
                if self.gronwall.epsilons.iter().any(|&x| !(x > 0.0 && x < self.t_final)) {
                    e.push("gronwall.epsilons: each must lie in (0, t_final)".into());
                }
            }
            "moments" | "simulate" => {
                let (key, probes) = if subcommand == "moments" {
                    if self.moments.n_terms == 0 {
                        e.push("moments.n_terms: must be at least 1".into());
                    }
                    ("moments.probes", &self.moments.probes)
                } else {
                    ("simulate.probes", &self.simulate.probes)
                };
                if probes.iter().any(|&(t, x)| !(in_time(t) && in_space(x))) {
                    e.push(format!("{key}: every (t, x) must satisfy 0 < t <= t_final, |x| <= half_width"));
                }
            }
            "psi" => {
                if self.psi.levels.is_empty() || self.psi.levels.contains(&0) {
                    e.push("psi.levels: need levels >= 1".into());
                }
                if self.psi.points.is_empty() {
                    e.push("psi.points: need at least one point".into());
                }
                self.psi.t.check("psi.t", &mut e);
                self.psi.x.check("psi.x", &mut e);
                if !(self.psi.t.from > 0.0 && self.psi.t.to <= self.t_final) {
                    e.push("psi.t: must lie in (0, t_final]".into());
                }
            }
            "density" => {
                if self.density.t.is_some_and(|t| !in_time(t)) {
                    e.push("density.t: must lie in (0, t_final]".into());
                }
                if self.density.bandwidth.is_some_and(|h| !positive(h)) {
                    e.push("density.bandwidth: must be positive".into());
                }
            }
            "smallball" => {
                if self.smallball.t.is_some_and(|t| !in_time(t)) {
                    e.push("smallball.t: must lie in (0, t_final]".into());
                }
                if !(self.smallball.x_from <= self.smallball.x_to) {
                    e.push("smallball: need x_from <= x_to".into());
                }
                if self.smallball.eps.is_empty() || self.smallball.eps.iter().any(|x| !positive(*x)) {
                    e.push("smallball.eps: need positive values".into());
                }
            }
            "t0" => {
                if self.t0.s_cells.is_empty() || self.t0.s_cells.contains(&0) {
                    e.push("t0.s_cells: need cell counts >= 1".into());
                }
                self.t0.y.check("t0.y", &mut e);
            }
            "holder" => {
                if self.holder.lags.len() < 3 || self.holder.lags.iter().any(|h| !positive(*h)) {
                    e.push("holder.lags: need at least 3 positive lags".into());
                }
                let on_grid = |v: f64| {
                    let steps = v / self.dt;
                    (steps - steps.round()).abs() < 1e-9 * steps.max(1.0)
                };
                if !on_grid(self.holder.t) || self.holder.lags.iter().any(|h| !on_grid(*h)) {
                    e.push("holder: t and every lag must be multiples of dt".into());
                }
                let longest = self.holder.lags.iter().copied().fold(0.0, f64::max);
                if !(self.holder.t > 0.0 && self.holder.t + longest <= self.t_final * (1.0 + 1e-12)) {
                    e.push("holder.t: need 0 < t and t + max lag <= t_final".into());
                }
            }
            _ => {}
        }
        e
    }

    /// SHA-256 of the subcommand and the resolved settings; the thread
    /// budget and output path do not change results and are left out.
    pub fn digest(&self, subcommand: &str) -> String {
        let settings = serde_json::to_string(self).expect("config serializes");
        digest_hex(&format!("{subcommand}:{settings}"))
    }
}

/// Parses and checks the model and grid; all problems are returned together.
pub fn parse_config(text: &str) -> Result<RunConfig, Vec<String>> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| vec![e.to_string()])?;
    let errors = cfg.validate();
    if errors.is_empty() {
        Ok(cfg)
    } else {
        Err(errors)
    }
}
