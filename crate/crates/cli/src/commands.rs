use clap::Subcommand;
use serde_json::{json, Map, Value};

use fracheat::density_stats::*;
use fracheat::grid::SpaceTimeGrid;
use fracheat::localization::PsiSpec;
use fracheat::moment_kernel::{k_lambda_heat_closed, k_lambda_series, second_moment_bound};
use fracheat::noise_initial::InitialMeasure;
use fracheat::special_fn::*;
use fracheat::spde_solver::{DiffusionCoefficient, Scheme, SchemeOptions};
use fracheat::stable_kernel::*;

use crate::config::{MuConfig, RhoConfig, RunConfig};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Tabulate G(t, x) and its tail envelope.
    Kernel,
    /// Evaluate E_{a,b}(z) along a range of z.
    Mittag,
    /// Solve the fractional Gronwall equation for constant β.
    Gronwall,
    /// Moment kernel series and the second-moment envelope at probes.
    Moments,
    /// Ensemble of u(t, x) at probe points.
    Simulate,
    /// Localization bumps on a (t, x) grid.
    Psi,
    /// Kernel density estimate of u(t, x).
    Density,
    /// Small-ball probabilities of the infimum over a window.
    Smallball,
    /// First time the coefficient sees nonzero data.
    T0,
    /// Time Hölder exponent fit.
    Holder,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Kernel => "kernel",
            Command::Mittag => "mittag",
            Command::Gronwall => "gronwall",
            Command::Moments => "moments",
            Command::Simulate => "simulate",
            Command::Psi => "psi",
            Command::Density => "density",
            Command::Smallball => "smallball",
            Command::T0 => "t0",
            Command::Holder => "holder",
        }
    }
}

/// Numeric table plus a free-form summary.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<f64>>,
    pub summary: Map<String, Value>,
}

impl Report {
    fn new(columns: &[&'static str]) -> Self {
        Self {
            columns: columns.to_vec(),
            rows: Vec::new(),
            summary: Map::new(),
        }
    }

    fn note(&mut self, key: &str, value: Value) {
        self.summary.insert(key.to_string(), value);
    }
}

impl From<fracheat::Error> for CliError {
    fn from(e: fracheat::Error) -> Self {
        CliError::Compute(e.to_string())
    }
}

pub fn build_kernel(cfg: &RunConfig) -> Result<Box<dyn Kernel>, CliError> {
    let params = StableParams::new(cfg.alpha, cfg.delta)?;
    if params.is_gaussian() {
        return Ok(Box::new(GaussianKernel::new()));
    }
    Ok(Box::new(build_kernel_table_with(params, &TableSpec::for_params(params))?))
}

pub fn coefficient(cfg: &RunConfig) -> DiffusionCoefficient {
    match cfg.rho {
        RhoConfig::Pam { lambda } => DiffusionCoefficient::pam(lambda),
        RhoConfig::Constant { value } => DiffusionCoefficient::constant(value),
        RhoConfig::Zero => DiffusionCoefficient::zero(),
        RhoConfig::Sine { a, b } => DiffusionCoefficient::sine(a, b),
        RhoConfig::AbsSine => DiffusionCoefficient::abs_sine(),
        RhoConfig::Delayed { t_on } => DiffusionCoefficient::delayed(t_on),
    }
}

pub fn initial_measure(cfg: &RunConfig) -> InitialMeasure {
    match cfg.mu {
        MuConfig::Dirac { location, mass } => InitialMeasure::dirac(location).scaled(mass),
        MuConfig::Lebesgue { level } => InitialMeasure::Lebesgue { level },
        MuConfig::DiracPlusLebesgue { location, level } => {
            InitialMeasure::Combination(vec![InitialMeasure::dirac(location), InitialMeasure::Lebesgue { level }])
        }
        MuConfig::Zero => InitialMeasure::zero(),
    }
}

fn grid(cfg: &RunConfig) -> Result<SpaceTimeGrid, CliError> {
    Ok(SpaceTimeGrid::new(cfg.t_final, cfg.dt, cfg.half_width, cfg.dx)?)
}

/// Runs one subcommand; all randomness flows from `cfg.seed`.
pub fn run(command: Command, cfg: &RunConfig) -> Result<Report, CliError> {
    match command {
        Command::Kernel => kernel(cfg),
        Command::Mittag => mittag(cfg),
        Command::Gronwall => gronwall(cfg),
        Command::Moments => moments(cfg),
        Command::Psi => psi(cfg),
        Command::T0 => t0(cfg),
        Command::Simulate | Command::Density | Command::Smallball | Command::Holder => ensemble_command(command, cfg),
    }
}

fn kernel(cfg: &RunConfig) -> Result<Report, CliError> {
    let k = build_kernel(cfg)?;
    let mut r = Report::new(&["t", "x", "G", "envelope"]);
    for &t in &cfg.kernel.t {
        for x in cfg.kernel.x.values() {
            r.rows.push(vec![t, x, kernel_value(k.as_ref(), t, x)?, tail_envelope(k.as_ref(), t, x)]);
        }
    }
    r.note("tail_constant", json!(k.tail_constant()));
    r.note("closed_form", json!(k.params().is_gaussian()));
    Ok(r)
}

fn mittag(cfg: &RunConfig) -> Result<Report, CliError> {
    let s = &cfg.mittag;
    let p = MittagParams::new(s.a, s.b)?;
    let mut r = Report::new(&["a", "b", "z", "value"]);
    for z in s.z.values() {
        r.rows.push(vec![s.a, s.b, z, mittag_leffler(&p, z)?]);
    }
    Ok(r)
}

fn gronwall(cfg: &RunConfig) -> Result<Report, CliError> {
    let s = &cfg.gronwall;
    let spec = ResolventSpec::new(cfg.alpha, s.lambda)?;
    let dt = cfg.t_final / s.n_intervals as f64;
    let beta = UniformSamples::from_fn(dt, s.n_intervals, |_| s.beta);
    let f = gronwall_solve(&spec, &beta)?;
    let mut r = Report::new(&["t", "f", "closed_form"]);
    let mut worst = 0.0f64;
    for (t, v) in f.times().zip(&f.values) {
        let closed = gronwall_constant(&spec, s.beta, t)?;
        if t > 0.0 {
            worst = worst.max((v / closed - 1.0).abs());
        }
        r.rows.push(vec![t, *v, closed]);
    }
    r.note("max_relative_gap", json!(worst));
    let mut localized = Vec::new();
    for &eps in &s.epsilons {
        let g = contraction_solve(&spec, cfg.t_final, eps, &beta)?;
        localized.push(json!({"epsilon": eps, "max_f": g.values.iter().copied().fold(0.0, f64::max)}));
    }
    r.note("localized", Value::Array(localized));
    Ok(r)
}

fn moments(cfg: &RunConfig) -> Result<Report, CliError> {
    let k = build_kernel(cfg)?;
    let g = grid(cfg)?;
    let s = &cfg.moments;
    let series = k_lambda_series(k.as_ref(), s.lambda, &g, s.n_terms)?;
    let rho = coefficient(cfg);
    let j0 = Scheme::new(k.as_ref(), g, SchemeOptions::default())?.initial_field(&initial_measure(cfg))?;
    let bound_lambda = 2.0 * 2f64.sqrt() * rho.lip;
    let bound = second_moment_bound(&j0, k.as_ref(), bound_lambda, rho.growth, s.n_terms)?;
    let mut r = Report::new(&["t", "x", "k_series", "k_closed", "second_moment_bound"]);
    for &(t, x) in &s.probes {
        let (kt, kx) = (g.time_index(t)?, g.space_index(x)?);
        let closed = if k.params().is_gaussian() {
            k_lambda_heat_closed(s.lambda, t, x)?
        } else {
            f64::NAN
        };
        r.rows.push(vec![t, x, series.point.get(kt, kx), closed, bound.get(kt, kx)]);
    }
    r.note("truncation_ratio", json!(series.truncation_ratio));
    r.note("bound_lambda", json!(bound_lambda));
    Ok(r)
}

fn psi(cfg: &RunConfig) -> Result<Report, CliError> {
    let k = build_kernel(cfg)?;
    let s = &cfg.psi;
    let (ts, xs) = (s.t.values(), s.x.values());
    let mut r = Report::new(&["n", "t", "x", "psi"]);
    let mut c = Vec::new();
    for &n in &s.levels {
        let spec = PsiSpec::new(k.as_ref(), n, cfg.t_final, &s.points)?;
        c.push(json!({"n": n, "c_n": spec.c_n}));
        for (t, x, v) in spec.surface(&ts, &xs)? {
            r.rows.push(vec![n as f64, t, x, v]);
        }
    }
    r.note("normalizers", Value::Array(c));
    Ok(r)
}

fn t0(cfg: &RunConfig) -> Result<Report, CliError> {
    let k = build_kernel(cfg)?;
    let rho = coefficient(cfg);
    let mu = initial_measure(cfg);
    let ys = cfg.t0.y.values();
    let mut r = Report::new(&["cells", "t0"]);
    for &cells in &cfg.t0.s_cells {
        let s: Vec<f64> = (1..=cells).map(|i| cfg.t_final * i as f64 / cells as f64).collect();
        r.rows.push(vec![cells as f64, estimate_t0(k.as_ref(), &rho, &mu, &s, &ys, cfg.t0.zero_tol)]);
    }
    r.note("zero_tol", json!(cfg.t0.zero_tol));
    Ok(r)
}

fn ensemble_command(command: Command, cfg: &RunConfig) -> Result<Report, CliError> {
    let k = build_kernel(cfg)?;
    let options = SchemeOptions {
        positivity_clip: cfg.positivity_clip,
        ..Default::default()
    };
    let scheme = Scheme::new(k.as_ref(), grid(cfg)?, options)?;
    let rho = coefficient(cfg);
    let mu = initial_measure(cfg);
    let spec = EnsembleSpec {
        scheme: &scheme,
        rho: &rho,
        mu: &mu,
        drift: None,
        master_seed: cfg.seed,
    };
    match command {
        Command::Simulate => simulate(cfg, &spec),
        Command::Density => density(cfg, &spec),
        Command::Smallball => smallball(cfg, &spec),
        _ => holder(cfg, &spec),
    }
}

fn simulate(cfg: &RunConfig, spec: &EnsembleSpec) -> Result<Report, CliError> {
    let probes = if cfg.simulate.probes.is_empty() {
        vec![(cfg.t_final, 0.0)]
    } else {
        cfg.simulate.probes.clone()
    };
    let e = run_ensemble(spec, &Observable::PointValues(probes.clone()), cfg.paths)?;
    let mut r = Report::new(&["path", "t", "x", "u"]);
    for (p, row) in e.samples.iter().enumerate() {
        for (&(t, x), u) in probes.iter().zip(row) {
            r.rows.push(vec![p as f64, t, x, *u]);
        }
    }
    let stats: Vec<Value> = probes
        .iter()
        .enumerate()
        .map(|(j, &(t, x))| {
            let col = e.column(j);
            let m = mean_estimate(&col);
            let v = variance_estimate(&col);
            json!({"t": t, "x": x, "mean": m.value, "mean_se": m.se, "variance": v.value, "variance_se": v.se})
        })
        .collect();
    r.note("probes", Value::Array(stats));
    r.note("failed_paths", json!(e.failure_count()));
    r.note("ensemble_digest", json!(e.digest));
    Ok(r)
}

fn density(cfg: &RunConfig, spec: &EnsembleSpec) -> Result<Report, CliError> {
    let t = cfg.density.t.unwrap_or(cfg.t_final);
    let e = run_ensemble(spec, &Observable::PointValues(vec![(t, cfg.density.x)]), cfg.paths)?;
    let bw = cfg.density.bandwidth.map_or(Bandwidth::Silverman, Bandwidth::Fixed);
    let est = kde(&e.column(0), bw)?;
    let mut r = Report::new(&["u", "density"]);
    for (u, d) in est.points.iter().zip(&est.values) {
        r.rows.push(vec![*u, *d]);
    }
    r.note("bandwidth", json!(est.bandwidth));
    r.note("mass", json!(est.mass()));
    r.note("ensemble_digest", json!(e.digest));
    Ok(r)
}

fn smallball(cfg: &RunConfig, spec: &EnsembleSpec) -> Result<Report, CliError> {
    let s = &cfg.smallball;
    let obs = Observable::Infimum {
        t: s.t.unwrap_or(cfg.t_final),
        x_from: s.x_from,
        x_to: s.x_to,
    };
    let e = run_ensemble(spec, &obs, cfg.paths)?;
    let inf = e.column(0);
    let balls = small_ball(&inf, &s.eps);
    let shape = log_probability_shape(&balls, s.concavity_z);
    let mut r = Report::new(&["eps", "count", "n", "p", "lo", "hi"]);
    for b in &balls {
        r.rows.push(vec![b.eps, b.count as f64, b.n as f64, b.p, b.lo, b.hi]);
    }
    r.note("decreasing", json!(shape.decreasing));
    r.note("concave", json!(shape.concave));
    r.note("slopes", json!(shape.slopes));
    r.note("worst_concavity_z", json!(shape.worst_concavity_z));
    let neg: Vec<Value> = negative_moment(&inf, &s.negative_moments)
        .iter()
        .map(|m| {
            json!({"p": m.p, "value": m.value, "se": m.se, "unstable": m.unstable,
                   "nonpositive_fraction": m.nonpositive_fraction})
        })
        .collect();
    r.note("negative_moments", Value::Array(neg));
    r.note("ensemble_digest", json!(e.digest));
    Ok(r)
}

fn holder(cfg: &RunConfig, spec: &EnsembleSpec) -> Result<Report, CliError> {
    let s = &cfg.holder;
    let fit = holder_exponent(spec, s.t, s.x, &s.lags, cfg.paths)?;
    let mut r = Report::new(&["lag", "l2_increment"]);
    for (h, n) in s.lags.iter().zip(&fit.norms) {
        r.rows.push(vec![*h, *n]);
    }
    r.note("slope", json!(fit.slope));
    r.note("slope_se", json!(fit.se));
    r.note("ci95", json!([fit.ci.0, fit.ci.1]));
    Ok(r)
}
