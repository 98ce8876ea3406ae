//! Acceptance checks, one line per criterion. Runs without the libtest
//! harness so every line is printed; exits nonzero if any check fails.

use std::f64::consts::{E, PI};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use fracheat::density_stats::*;
use fracheat::grid::SpaceTimeGrid;
use fracheat::localization::*;
use fracheat::moment_kernel::*;
use fracheat::noise_initial::*;
use fracheat::quadrature::integrate;
use fracheat::special_fn::*;
use fracheat::spde_solver::*;
use fracheat::stable_kernel::*;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_runtime(start: Instant, limit: Duration, what: &str) -> std::result::Result<(), String> {
    let took = start.elapsed();
    ensure(took < limit, || format!("{what} took {took:?}, limit {limit:?}"))
}

fn ml(a: f64, b: f64, z: f64) -> f64 {
    mittag_leffler(&MittagParams::new(a, b).unwrap(), z).unwrap()
}

// Tolerances.
const ML_IDENTITY_TOL: f64 = 1e-10;
const ML_BRANCH_REL_TOL: f64 = 1e-6;
const GAUSS_TABLE_ABS_TOL: f64 = 1e-6;
const MASS_TOL: f64 = 1e-4;
const SEMIGROUP_TOL: f64 = 1e-4;
const STABLE_CENTRE_REL_TOL: f64 = 1e-5;
const HEAT_INTEGRAL_REL_TOL: f64 = 1e-8;
const MOMENT_KERNEL_REL_TOL: f64 = 1e-2;
const SE_MULTIPLE: f64 = 3.0;
const COMPARISON_MAX_FRACTION: f64 = 1e-3;
const NEGATIVE_MAX_FRACTION: f64 = 1e-2;
const CLIPPED_MAX_FRACTION: f64 = 1e-3;
const CONCAVITY_Z: f64 = 2.0;
const HOLDER_TARGET: f64 = 0.25;
const HOLDER_TOL: f64 = 0.10;
const MALLIAVIN_REL_TOL: f64 = 0.05;
const MALLIAVIN_CONST_TOL: f64 = 1e-12;
const PSI_MONOTONE_TOL: f64 = 1e-10;
const PSI_UNIT_TOL: f64 = 1e-6;
const PSI_RATIO_SLACK: f64 = 1.15;
const GRONWALL_REL_TOL: f64 = 1e-4;
const CONTRACTION_SPREAD_TOL: f64 = 1e-4;

fn mittag_leffler_identities() -> Outcome {
    let start = Instant::now();
    let e11 = ml(1.0, 1.0, 1.0);
    let e12 = ml(1.0, 2.0, 1.0);
    ensure((e11 - E).abs() < ML_IDENTITY_TOL, || format!("E_11(1) = {e11}"))?;
    ensure((e12 - (E - 1.0)).abs() < ML_IDENTITY_TOL, || format!("E_12(1) = {e12}"))?;
    let p = MittagParams::new(0.5, 1.0).unwrap();
    let series = mittag_leffler_series(&p, 20.0).map_err(|e| e.to_string())?;
    let asym = mittag_leffler_asymptotic(&p, 20.0);
    let rel = ((series - asym) / series).abs();
    ensure(rel < ML_BRANCH_REL_TOL, || format!("series/asymptotic rel diff {rel:e}"))?;
    within_runtime(start, Duration::from_secs(1), "Mittag-Leffler checks")?;
    Ok(format!("E_11(1)-e={:.1e}, series vs asymptotic at z=20 rel {rel:.1e}", e11 - E))
}

/// `∫ G(s, x-y) G(t, y) dy` by the trapezoid rule on `[-15, 15]`.
fn semigroup_convolution(kernel: &dyn Kernel, s: f64, t: f64, x: f64) -> f64 {
    let dy = 0.002;
    let n = (30.0 / dy) as usize;
    (0..=n)
        .map(|j| {
            let y = -15.0 + j as f64 * dy;
            let w = if j == 0 || j == n { 0.5 } else { 1.0 };
            w * kernel.density(s, x - y) * kernel.density(t, y)
        })
        .sum::<f64>()
        * dy
}

fn gaussian_kernel_table() -> Outcome {
    let start = Instant::now();
    let params = StableParams::heat();
    let table = build_kernel_table_with(params, &TableSpec::for_params(params)).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for &t in &[0.1, 0.5, 1.0] {
        for j in 0..=1000 {
            let x = -5.0 + 0.01 * j as f64;
            let exact = gaussian_kernel(t, x).unwrap();
            worst = worst.max((table.density(t, x) - exact).abs());
        }
    }
    ensure(worst < GAUSS_TABLE_ABS_TOL, || format!("max abs error {worst:e}"))?;
    ensure((table.mass() - 1.0).abs() < MASS_TOL, || format!("mass {}", table.mass()))?;
    let mut semigroup = 0.0f64;
    for &x in &[0.0, 0.5, 1.3, -2.0] {
        let lhs = semigroup_convolution(&table, 0.2, 0.3, x);
        semigroup = semigroup.max((lhs - table.density(0.5, x)).abs());
    }
    ensure(semigroup < SEMIGROUP_TOL, || format!("semigroup defect {semigroup:e}"))?;
    within_runtime(start, Duration::from_secs(10), "Gaussian table")?;
    Ok(format!("max abs err {worst:.1e}, mass-1 {:.1e}, semigroup {semigroup:.1e}", table.mass() - 1.0))
}

fn stable_kernel_tables() -> Outcome {
    let start = Instant::now();
    // G(1, 0) = (1/π) ∫_0^∞ exp(-ξ^α cos(πδ/2)) cos(ξ^α sin(πδ/2)) dξ.
    let oracle = [(0.0, 0.287352751452164445), (0.4, 0.262509800830228114)];
    let mut notes = Vec::new();
    for (delta, centre) in oracle {
        let params = StableParams::new(1.5, delta).map_err(|e| e.to_string())?;
        let table = build_kernel_table_with(params, &TableSpec::for_params(params)).map_err(|e| e.to_string())?;
        ensure((table.mass() - 1.0).abs() < MASS_TOL, || format!("delta={delta}: mass {}", table.mass()))?;
        let rel = (table.density(1.0, 0.0) / centre - 1.0).abs();
        ensure(rel < STABLE_CENTRE_REL_TOL, || format!("delta={delta}: centre rel err {rel:e}"))?;
        let mut worst = 0.0f64;
        for x in table.nodes() {
            for &t in &[0.25, 1.0] {
                let ratio = table.density(t, x) / tail_envelope(&table, t, x);
                worst = worst.max(ratio);
            }
        }
        ensure(worst <= 1.0, || format!("delta={delta}: envelope ratio {worst}"))?;
        notes.push(format!("δ={delta}: rel {rel:.1e}, max G/env {worst:.3}"));
    }
    within_runtime(start, Duration::from_secs(30), "stable tables")?;
    Ok(notes.join("; "))
}

/// `∫_0^t ∫_{-t}^t (2πνs)^{-1/2} exp(-y²/(2νs)) dy ds` by nested adaptive
/// quadrature, the inner range split at ten standard deviations.
fn heat_integral_2d(nu: f64, t: f64) -> f64 {
    let inner = |s: f64| {
        let sd = (nu * s).sqrt();
        let f = |y: f64| (-y * y / (2.0 * nu * s)).exp() / (2.0 * PI * nu * s).sqrt();
        let cut = (10.0 * sd).min(t);
        let mut v = integrate(f, 0.0, cut, 1e-300, 1e-14).value;
        if cut < t {
            v += integrate(f, cut, t, 1e-300, 1e-14).value;
        }
        2.0 * v
    };
    integrate(inner, 0.0, t, 1e-300, 1e-13).value
}

fn heat_double_integral_check() -> Outcome {
    let mut worst = 0.0f64;
    for &nu in &[0.5, 1.0, 2.0, 3.0, 5.0] {
        for &t in &[0.01, 0.1, 0.5, 1.0, 2.0] {
            let closed = heat_double_integral(nu, t).unwrap();
            let quad = heat_integral_2d(nu, t);
            worst = worst.max(((closed - quad) / quad).abs());
        }
    }
    ensure(worst < HEAT_INTEGRAL_REL_TOL, || format!("closed vs 2-D rel {worst:e}"))?;
    let k = GaussianKernel::new();
    let mut worst_c = 0.0f64;
    for n in 1..=10 {
        let c = c_norm(&k, n).unwrap();
        let quad = 1.0 / heat_integral_2d(2.0, 0.5f64.powi(n as i32));
        worst_c = worst_c.max((c / quad - 1.0).abs());
    }
    ensure(worst_c < HEAT_INTEGRAL_REL_TOL, || format!("c_n rel {worst_c:e}"))?;
    Ok(format!("5x5 rel {worst:.1e}, c_1..10 rel {worst_c:.1e}"))
}

fn moment_kernel_series() -> Outcome {
    let start = Instant::now();
    let k = GaussianKernel::new();
    let grid = SpaceTimeGrid::new(0.5, 1.0 / 256.0, 4.0, 1.0 / 32.0).unwrap();
    let mk = k_lambda_series(&k, 1.0, &grid, 12).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for &(t, x) in &[(0.25, 0.0), (0.5, 0.0), (0.5, 0.5)] {
        let got = mk.point.get(grid.time_index(t).unwrap(), grid.space_index(x).unwrap());
        let exact = k_lambda_heat_closed(1.0, t, x).unwrap();
        worst = worst.max((got / exact - 1.0).abs());
    }
    ensure(worst < MOMENT_KERNEL_REL_TOL, || format!("rel err {worst:e}"))?;
    within_runtime(start, Duration::from_secs(120), "moment kernel")?;
    Ok(format!("12 terms, dt=1/256: max rel err {worst:.1e}"))
}

fn additive_noise_variance() -> Outcome {
    let start = Instant::now();
    let k = GaussianKernel::new();
    let grid = SpaceTimeGrid::new(1.0, 1.0 / 128.0, 4.0, 1.0 / 32.0).unwrap();
    let scheme = Scheme::new(&k, grid, SchemeOptions::default()).map_err(|e| e.to_string())?;
    let rho = DiffusionCoefficient::constant(1.0);
    let mu = InitialMeasure::zero();
    let spec = EnsembleSpec {
        scheme: &scheme,
        rho: &rho,
        mu: &mu,
        drift: None,
        master_seed: 6,
    };
    let ens = run_ensemble(&spec, &Observable::PointValues(vec![(1.0, 0.0)]), 10_000).map_err(|e| e.to_string())?;
    ensure(ens.failure_count() == 0, || "failed paths".into())?;
    let var = variance_estimate(&ens.column(0));
    let exact = (1.0 / (2.0 * PI)).sqrt();
    let z = (var.value - exact) / var.se;
    ensure(z.abs() < SE_MULTIPLE, || format!("Var {} vs {exact}, z = {z}", var.value))?;
    within_runtime(start, Duration::from_secs(300), "additive noise ensemble")?;
    Ok(format!("Var u(1,0) = {:.5} ± {:.5} (z = {z:.2})", var.value, var.se))
}

struct PamDeltaRun {
    grid: SpaceTimeGrid,
    probes: Vec<(f64, f64)>,
    ensemble: Ensemble,
}

fn pam_delta_run() -> PamDeltaRun {
    let k = GaussianKernel::new();
    let grid = SpaceTimeGrid::new(1.0, 1.0 / 128.0, 4.0, 1.0 / 32.0).unwrap();
    let scheme = Scheme::new(&k, grid, SchemeOptions::default()).unwrap();
    let rho = DiffusionCoefficient::pam(1.0);
    let mu = InitialMeasure::dirac(0.0);
    let spec = EnsembleSpec {
        scheme: &scheme,
        rho: &rho,
        mu: &mu,
        drift: None,
        master_seed: 7,
    };
    let mut probes = Vec::new();
    for &t in &[0.25, 0.5, 1.0] {
        for &x in &[-1.0, -0.5, 0.0, 0.5, 1.0] {
            probes.push((t, x));
        }
    }
    let ensemble = run_ensemble(&spec, &Observable::PointValues(probes.clone()), 10_000).unwrap();
    PamDeltaRun { grid, probes, ensemble }
}

fn mean_preservation(run: &PamDeltaRun) -> Outcome {
    let mut worst = 0.0f64;
    for (j, &(t, x)) in run.probes.iter().enumerate() {
        if t != 0.5 {
            continue;
        }
        let m = mean_estimate(&run.ensemble.column(j));
        let z = (m.value - gaussian_kernel(t, x).unwrap()) / m.se;
        ensure(z.abs() < SE_MULTIPLE, || format!("x={x}: mean {} z {z}", m.value))?;
        worst = worst.max(z.abs());
    }
    Ok(format!("5 probes at t=0.5, max |z| = {worst:.2}"))
}

fn second_moment_envelope(run: &PamDeltaRun) -> Outcome {
    let k = GaussianKernel::new();
    let j0 = j0_field(&InitialMeasure::dirac(0.0), &k, &run.grid);
    let lambda = 2.0 * 2f64.sqrt();
    let bound = second_moment_bound(&j0, &k, lambda, 0.0, 12).map_err(|e| e.to_string())?;
    let mut violations = 0;
    let mut tightest = f64::INFINITY;
    for (j, &(t, x)) in run.probes.iter().enumerate() {
        let sq: Vec<f64> = run.ensemble.column(j).iter().map(|v| v * v).collect();
        let m2 = mean_estimate(&sq).value;
        let b = bound.get(run.grid.time_index(t).unwrap(), run.grid.space_index(x).unwrap());
        if m2 > b {
            violations += 1;
        }
        tightest = tightest.min(b / m2);
    }
    ensure(violations == 0, || format!("{violations} probes above the bound"))?;
    Ok(format!("{} probes, 0 violations, min bound/E[u²] = {tightest:.2}", run.probes.len()))
}

fn comparison_fraction(dt: f64, dx: f64, pairs: u64) -> f64 {
    let k = GaussianKernel::new();
    let grid = SpaceTimeGrid::new(0.5, dt, 3.0, dx).unwrap();
    let scheme = Scheme::new(&k, grid, SchemeOptions::default()).unwrap();
    let rho = DiffusionCoefficient::abs_sine();
    let mu1 = InitialMeasure::Combination(vec![InitialMeasure::dirac(0.0), InitialMeasure::lebesgue()]);
    let mu2 = InitialMeasure::dirac(0.0);
    let (mut bad, mut total) = (0usize, 0usize);
    for p in 0..pairs {
        let noise = sample_noise(9, p, &grid);
        let (a, b) = simulate_coupled_pair(&scheme, &rho, &mu1, &mu2, &noise).unwrap();
        for (u1, u2) in a.u.values.iter().zip(&b.u.values) {
            total += 1;
            if *u1 < u2 - 1e-10 * (1.0 + u2.abs()) {
                bad += 1;
            }
        }
    }
    bad as f64 / total as f64
}

fn comparison_principle() -> Outcome {
    let coarse = comparison_fraction(1.0 / 64.0, 1.0 / 16.0, 1000);
    let fine = comparison_fraction(1.0 / 256.0, 1.0 / 32.0, 1000);
    ensure(fine < COMPARISON_MAX_FRACTION, || format!("fine fraction {fine:e}"))?;
    ensure(fine <= coarse, || format!("fraction rose from {coarse:e} to {fine:e}"))?;
    Ok(format!("violating cells: coarse {coarse:e}, fine {fine:e}"))
}

fn diagnostics(dt: f64, clip: bool) -> (f64, f64, f64) {
    let k = GaussianKernel::new();
    let grid = SpaceTimeGrid::new(0.5, dt, 3.0, 1.0 / 32.0).unwrap();
    let options = SchemeOptions {
        positivity_clip: clip,
        ..Default::default()
    };
    let scheme = Scheme::new(&k, grid, options).unwrap();
    let rho = DiffusionCoefficient::pam(1.0);
    let mu = InitialMeasure::dirac(0.0);
    let spec = EnsembleSpec {
        scheme: &scheme,
        rho: &rho,
        mu: &mu,
        drift: None,
        master_seed: 10,
    };
    let e = run_ensemble(&spec, &Observable::SchemeDiagnostics, 1000).unwrap();
    let neg = mean_estimate(&e.column(0)).value;
    let clipped: f64 = e.column(1).iter().sum();
    let mass: f64 = e.column(2).iter().sum();
    (neg, clipped, mass)
}

fn positivity_probe() -> Outcome {
    let (neg_coarse, _, _) = diagnostics(1.0 / 256.0, false);
    let (neg_fine, _, _) = diagnostics(1.0 / 512.0, false);
    ensure(neg_fine < NEGATIVE_MAX_FRACTION, || format!("negative fraction {neg_fine:e}"))?;
    ensure(neg_fine <= neg_coarse, || format!("negative fraction rose {neg_coarse:e} -> {neg_fine:e}"))?;
    let (_, clipped, mass) = diagnostics(1.0 / 512.0, true);
    ensure(clipped < CLIPPED_MAX_FRACTION * mass, || format!("clipped {clipped:e} of {mass}"))?;
    Ok(format!(
        "negative cells: dt=1/256 {neg_coarse:e}, dt=1/512 {neg_fine:e}; clipped/total mass {:e}",
        clipped / mass
    ))
}

fn small_ball_shape() -> Outcome {
    // λ = 2 puts the probabilities for ε in [1e-3, 1e-1] within reach of
    // 10⁴ paths; the fine grid keeps the explicit scheme from undershooting.
    let k = GaussianKernel::new();
    let grid = SpaceTimeGrid::new(0.5, 1.0 / 2048.0, 2.0, 1.0 / 64.0).unwrap();
    let scheme = Scheme::new(&k, grid, SchemeOptions::default()).unwrap();
    let rho = DiffusionCoefficient::pam(2.0);
    let mu = InitialMeasure::lebesgue();
    let spec = EnsembleSpec {
        scheme: &scheme,
        rho: &rho,
        mu: &mu,
        drift: None,
        master_seed: 11,
    };
    let obs = Observable::Infimum {
        t: 0.5,
        x_from: -0.5,
        x_to: 0.5,
    };
    let e = run_ensemble(&spec, &obs, 10_000).map_err(|e| e.to_string())?;
    let inf = e.column(0);
    let negative = inf.iter().filter(|v| **v < 0.0).count();
    let eps: Vec<f64> = (0..=8).map(|i| 10f64.powf(-1.0 - 0.25 * i as f64)).collect();
    let balls = small_ball(&inf, &eps);
    let shape = log_probability_shape(&balls, CONCAVITY_Z);
    ensure(shape.curve.len() >= 4, || format!("only {} populated bins", shape.curve.len()))?;
    ensure(shape.decreasing, || format!("log P not decreasing: {:?}", shape.curve))?;
    ensure(shape.concave, || format!("slope rises by {:.2} SE: {:?}", shape.worst_concavity_z, shape.slopes))?;
    let counts: Vec<usize> = balls.iter().map(|b| b.count).collect();
    Ok(format!(
        "counts {counts:?}, slopes {:?}, worst rise {:.2} SE, negative infima {negative}",
        shape.slopes.iter().map(|s| (s * 100.0).round() / 100.0).collect::<Vec<_>>(),
        shape.worst_concavity_z
    ))
}

fn holder_exponent_check() -> Outcome {
    let start = Instant::now();
    let k = GaussianKernel::new();
    let t = 0.25;
    let lags: Vec<f64> = (5..=9).rev().map(|e| 0.5f64.powi(e)).collect();
    let grid = SpaceTimeGrid::new(t + 0.5f64.powi(5), 1.0 / 1024.0, 2.0, 1.0 / 32.0).unwrap();
    let scheme = Scheme::new(&k, grid, SchemeOptions::default()).unwrap();
    let rho = DiffusionCoefficient::pam(1.0);
    let mu = InitialMeasure::lebesgue();
    let spec = EnsembleSpec {
        scheme: &scheme,
        rho: &rho,
        mu: &mu,
        drift: None,
        master_seed: 12,
    };
    let fit = holder_exponent(&spec, t, 0.0, &lags, 4000).map_err(|e| e.to_string())?;
    ensure((fit.slope - HOLDER_TARGET).abs() <= HOLDER_TOL, || format!("slope {}", fit.slope))?;
    within_runtime(start, Duration::from_secs(900), "Hölder ensemble")?;
    Ok(format!("slope {:.3} (95% CI {:.3}..{:.3})", fit.slope, fit.ci.0, fit.ci.1))
}

/// Largest `|FD - D| / sup|D|` over the cells, for each `eps`.
fn malliavin_errors(rho: &DiffusionCoefficient, mu: &InitialMeasure, eps_list: &[f64]) -> Vec<f64> {
    let k = GaussianKernel::new();
    let grid = SpaceTimeGrid::new(0.25, 1.0 / 128.0, 2.0, 1.0 / 32.0).unwrap();
    let scheme = Scheme::new(&k, grid, SchemeOptions::default()).unwrap();
    let j0 = scheme.initial_field(mu).unwrap();
    let noise = sample_noise(13, 0, &grid);
    let base = scheme.run(rho, &j0, &noise, None).unwrap();
    let cells: Vec<(usize, usize)> = (0..10).map(|c| (2 + 2 * c, 44 + 4 * c)).collect();
    eps_list
        .iter()
        .map(|&eps| {
            let mut worst = 0.0f64;
            for &(step, space) in &cells {
                let d = scheme.malliavin(&base, rho, &noise, step, space).unwrap();
                let up = scheme.run(rho, &j0, &noise.perturbed(step, space, eps), None).unwrap();
                let down = scheme.run(rho, &j0, &noise.perturbed(step, space, -eps), None).unwrap();
                let scale = d.values.sup_abs();
                for ((a, b), dv) in up.u.values.iter().zip(&down.u.values).zip(&d.values.values) {
                    worst = worst.max(((a - b) / (2.0 * eps) - dv).abs() / scale);
                }
            }
            worst
        })
        .collect()
}

fn malliavin_consistency() -> Outcome {
    let eps_list = [1e-2, 1e-3, 1e-4];
    let errs = malliavin_errors(&DiffusionCoefficient::sine(1.0, 0.5), &InitialMeasure::dirac(0.0), &eps_list);
    ensure(errs[2] < MALLIAVIN_REL_TOL, || format!("rel err at 1e-4: {:e}", errs[2]))?;
    ensure(errs.windows(2).all(|w| w[1] < w[0]), || format!("not improving: {errs:?}"))?;
    let flat = malliavin_errors(&DiffusionCoefficient::constant(0.7), &InitialMeasure::dirac(0.0), &[1e-4]);
    ensure(flat[0] < MALLIAVIN_CONST_TOL, || format!("constant case {:e}", flat[0]))?;
    Ok(format!(
        "sine coefficient rel err {:.1e}/{:.1e}/{:.1e} at eps 1e-2/1e-3/1e-4; constant {:.1e}",
        errs[0], errs[1], errs[2], flat[0]
    ))
}

fn malliavin_matrix_check() -> Outcome {
    let k = GaussianKernel::new();
    let grid = SpaceTimeGrid::new(0.5, 1.0 / 64.0, 3.0, 1.0 / 16.0).unwrap();
    let scheme = Scheme::new(&k, grid, SchemeOptions::default()).unwrap();
    let rho = DiffusionCoefficient::pam(1.0);
    let j0 = scheme.initial_field(&InitialMeasure::lebesgue()).unwrap();
    let (x1, x2, t) = (-0.5, 0.5, 0.5);
    let window = MalliavinWindow {
        t_from: t / 2.0,
        t_to: t,
        x_from: x1 - 0.5,
        x_to: x2 + 0.5,
        stride: 4,
    };
    let mut dets = Vec::new();
    for p in 0..500 {
        let noise = sample_noise(14, p, &grid);
        let base = scheme.run(&rho, &j0, &noise, None).unwrap();
        let m = malliavin_matrix(&scheme, &base, &rho, &noise, t, &[x1, x2], &window).map_err(|e| e.to_string())?;
        let scale = m.sigma[0][0].abs().max(m.sigma[1][1].abs());
        ensure(m.is_symmetric(1e-14 * scale), || format!("path {p}: not symmetric"))?;
        ensure(m.is_psd(1e-12), || format!("path {p}: not PSD"))?;
        ensure(m.det > 0.0, || format!("path {p}: det {}", m.det))?;
        dets.push(m.det);
    }
    let mut sorted = dets.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let eps: Vec<f64> = (0..=8).map(|i| median * 10f64.powf(-0.25 * i as f64)).collect();
    let shape = log_probability_shape(&det_sigma_smallball(&dets, &eps), CONCAVITY_Z);
    ensure(shape.curve.len() >= 3, || format!("only {} populated bins", shape.curve.len()))?;
    ensure(shape.decreasing, || format!("not decreasing: {:?}", shape.curve))?;
    ensure(shape.concave, || format!("slope rises by {:.2} SE", shape.worst_concavity_z))?;
    Ok(format!(
        "500 paths symmetric PSD, min det {:.3e}, median {median:.3e}, {} populated bins, worst rise {:.2} SE",
        sorted[0],
        shape.curve.len(),
        shape.worst_concavity_z
    ))
}

fn psi_properties() -> Outcome {
    let k = GaussianKernel::new();
    let pts = [0.0];
    let mut monotone_violations = 0;
    for n in 1..=3 {
        let spec = PsiSpec::new(&k, n, 1.0, &pts).unwrap();
        for j in 0..20 {
            let x = -2.0 + 4.0 * j as f64 / 19.0;
            let mut prev = 0.0;
            for i in 0..=60 {
                let t = 0.45 + 0.55 * i as f64 / 60.0;
                let v = spec.psi(0, t, x).unwrap();
                if v < prev - PSI_MONOTONE_TOL {
                    monotone_violations += 1;
                }
                prev = v;
            }
        }
    }
    ensure(monotone_violations == 0, || format!("{monotone_violations} monotonicity violations"))?;
    let mut unit = 0.0f64;
    for n in 1..=6 {
        let spec = PsiSpec::new(&k, n, 1.0, &pts).unwrap();
        unit = unit.max((spec.psi(0, 1.0, 0.0).unwrap() - 1.0).abs());
    }
    ensure(unit < PSI_UNIT_TOL, || format!("Ψ(T, x_i) off by {unit:e}"))?;
    let limit = 2f64.powf(-1.5) * PSI_RATIO_SLACK;
    let mut worst_ratio = 0.0f64;
    for n in 4..=8 {
        let a = PsiSpec::new(&k, n, 1.0, &pts).unwrap();
        let b = PsiSpec::new(&k, n + 1, 1.0, &pts).unwrap();
        for &x in &[-0.5, 0.5] {
            worst_ratio = worst_ratio.max(b.psi(0, 1.0, x).unwrap() / a.psi(0, 1.0, x).unwrap());
        }
    }
    ensure(worst_ratio <= limit, || format!("off-point ratio {worst_ratio} > {limit}"))?;
    let dir = std::path::Path::new(env!("CARGO_TARGET_TMPDIR"));
    let ts: Vec<f64> = (0..=55).map(|i| 0.45 + 0.01 * i as f64).collect();
    let xs: Vec<f64> = (0..=80).map(|i| -2.0 + 0.05 * i as f64).collect();
    for n in 1..=3 {
        let spec = PsiSpec::new(&k, n, 1.0, &pts).unwrap();
        let surface = spec.surface(&ts, &xs).unwrap();
        let peak = surface.iter().copied().fold((0.0, 0.0, f64::MIN), |a, b| if b.2 > a.2 { b } else { a });
        ensure(peak.0 == 1.0 && peak.1.abs() < 1e-12, || format!("n={n}: peak at {peak:?}"))?;
        let mut csv = String::from("t,x,psi\n");
        for (t, x, v) in surface {
            csv.push_str(&format!("{t},{x},{v:e}\n"));
        }
        std::fs::write(dir.join(format!("psi_surface_n{n}.csv")), csv).map_err(|e| e.to_string())?;
    }
    Ok(format!(
        "0 monotonicity violations, max |Ψ(T,x_i)-1| {unit:.1e}, max off-point ratio {worst_ratio:.4} (limit {limit:.4}), surfaces in {}",
        dir.display()
    ))
}

fn t0_criterion() -> Outcome {
    let k = GaussianKernel::new();
    let ys: Vec<f64> = (-40..=40).map(|i| i as f64 * 0.1).collect();
    let mut first = Vec::new();
    for cells in [16, 64, 256] {
        let s: Vec<f64> = (1..=cells).map(|i| i as f64 / cells as f64).collect();
        first.push(estimate_t0(&k, &DiffusionCoefficient::pam(1.0), &InitialMeasure::dirac(0.0), &s, &ys, T0_ZERO_TOL));
        ensure(first.last() == Some(&s[0]), || format!("PAM δ₀: {first:?}"))?;
    }
    ensure(first.windows(2).all(|w| w[1] < w[0]), || format!("not shrinking: {first:?}"))?;
    let s: Vec<f64> = (1..=100).map(|i| i as f64 / 100.0).collect();
    let never = estimate_t0(&k, &DiffusionCoefficient::pam(1.0), &InitialMeasure::zero(), &s, &ys, T0_ZERO_TOL);
    ensure(never.is_infinite(), || format!("zero data gave {never}"))?;
    let delayed = estimate_t0(&k, &DiffusionCoefficient::delayed(0.5), &InitialMeasure::dirac(0.0), &s, &ys, T0_ZERO_TOL);
    ensure((delayed - 0.5).abs() <= 0.01 + 1e-12, || format!("delayed gave {delayed}"))?;
    Ok(format!("PAM δ₀ → {first:?}; μ = 0 → {never}; delayed → {delayed}"))
}

fn gronwall_solutions() -> Outcome {
    let mut worst = 0.0f64;
    for &(alpha, lambda) in &[(2.0, 1.0), (1.5, 0.7), (1.25, 0.3)] {
        let spec = ResolventSpec::new(alpha, lambda).unwrap();
        let beta = UniformSamples::from_fn(1.0 / 1024.0, 1024, |_| 1.0);
        let f = gronwall_solve(&spec, &beta).map_err(|e| e.to_string())?;
        for (t, v) in f.times().zip(&f.values).skip(1) {
            let exact = gronwall_constant(&spec, 1.0, t).unwrap();
            worst = worst.max((v / exact - 1.0).abs());
        }
    }
    ensure(worst < GRONWALL_REL_TOL, || format!("Volterra vs closed form rel {worst:e}"))?;
    let spec = ResolventSpec::new(2.0, 1.0).unwrap();
    let beta = UniformSamples::from_fn(1.0 / 4096.0, 4096, |_| 1.0);
    let mut maxima = Vec::new();
    for n in 1..=8 {
        let f = contraction_solve(&spec, 1.0, 0.5f64.powi(n), &beta).map_err(|e| e.to_string())?;
        maxima.push(f.values.iter().copied().fold(0.0, f64::max));
    }
    // With β ≡ 1 the window rescaling makes max f = E_{b,1}(λ Γ(b)) for every ε.
    let expected = gronwall_constant(&spec, 1.0, 1.0).unwrap();
    let spread = maxima.iter().map(|m| (m / expected - 1.0).abs()).fold(0.0, f64::max);
    ensure(spread < CONTRACTION_SPREAD_TOL, || format!("maxima {maxima:?} vs {expected}"))?;
    Ok(format!("Volterra rel {worst:.1e}; contraction max f = {expected:.6} across ε=2^-1..2^-8 (spread {spread:.1e})"))
}

fn main() {
    let mut failures = 0;
    // ACCEPTANCE_ONLY=3,17 runs a subset.
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let selected = |id: usize| only.as_ref().is_none_or(|o| o.contains(&id));
    let mut report = |id: usize, name: &str, f: &mut dyn FnMut() -> Outcome| {
        if !selected(id) {
            return;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into()))
        });
        let took = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {id:>2} {name} [{took:.1}s]: {detail}"),
            Err(detail) => {
                failures += 1;
                println!("FAIL {id:>2} {name} [{took:.1}s]: {detail}");
            }
        }
    };
    report(1, "Mittag-Leffler identities", &mut mittag_leffler_identities);
    report(2, "Gaussian kernel table", &mut gaussian_kernel_table);
    report(3, "stable kernel tables", &mut stable_kernel_tables);
    report(4, "heat double integral", &mut heat_double_integral_check);
    report(5, "moment kernel series", &mut moment_kernel_series);
    report(6, "additive-noise variance", &mut additive_noise_variance);
    if selected(7) || selected(8) {
        let pam = pam_delta_run();
        report(7, "mean preservation", &mut || mean_preservation(&pam));
        report(8, "second-moment envelope", &mut || second_moment_envelope(&pam));
    }
    report(9, "comparison principle", &mut comparison_principle);
    report(10, "positivity probe", &mut positivity_probe);
    report(11, "small-ball shape", &mut small_ball_shape);
    report(12, "Hölder exponent", &mut holder_exponent_check);
    report(13, "Malliavin consistency", &mut malliavin_consistency);
    report(14, "Malliavin matrix", &mut malliavin_matrix_check);
    report(15, "localization bumps", &mut psi_properties);
    report(16, "t0 criterion", &mut t0_criterion);
    report(17, "Gronwall solutions", &mut gronwall_solutions);
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
