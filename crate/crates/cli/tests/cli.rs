use std::path::Path;
use std::process::Command;

use fracheat::stable_kernel::gaussian_kernel;
use fracheat_cli::config::{parse_config, MuConfig, RhoConfig};

const SMALL_RUN: &str = r#"
t_final = 0.25
dt = 0.015625
dx = 0.0625
half_width = 2.0
paths = 40
seed = 9

[rho]
kind = "pam"
lambda = 1.0

[simulate]
probes = [[0.25, 0.0], [0.125, 0.5]]
"#;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_fracheat"));
    c.env_remove("FRACHEAT_THREADS");
    c
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

#[test]
fn minimal_config_fills_defaults() {
    let cfg = parse_config("[rho]\nkind = \"pam\"\nlambda = 1.0\n").unwrap();
    assert_eq!(cfg.dt, 1.0 / 256.0);
    assert_eq!(cfg.dx, 1.0 / 64.0);
    assert_eq!(cfg.half_width, 8.0);
    assert_eq!(cfg.rho, RhoConfig::Pam { lambda: 1.0 });
    assert_eq!(cfg.mu, MuConfig::Dirac { location: 0.0, mass: 1.0 });
}

#[test]
fn invalid_parameters_are_rejected() {
    let e = parse_config("alpha = 2.5").unwrap_err();
    assert!(e.iter().any(|m| m.contains("alpha must lie in (1,2]")), "{e:?}");
    let e = parse_config("alpha = 1.8\ndelta = 0.3").unwrap_err();
    assert!(e.iter().any(|m| m.starts_with("delta:")), "{e:?}");
    assert!(parse_config("alpha = 1.8\ndelta = 0.2").is_ok());
    let e = parse_config("speed = 3").unwrap_err();
    assert!(e[0].contains("unknown field"));
    let e = parse_config("[rho]\nkind = \"pam\"\nlambda = 1.0\nmu = 2.0").unwrap_err();
    assert!(e[0].contains("unknown field"));
    let e = parse_config("paths = 1\ndt = 0.3").unwrap_err();
    assert!(e.len() >= 2, "every problem reported: {e:?}");
}

#[test]
fn kernel_output_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("kernel.csv");
    let status = bin().args(["kernel", "--out"]).arg(&out).status().unwrap();
    assert!(status.success());
    let (header, rows) = read_csv(&out);
    assert_eq!(header, ["t", "x", "G", "envelope", "config_digest", "version"]);
    assert_eq!(rows.len(), 3 * 201);
    for row in &rows {
        let (t, x, g): (f64, f64, f64) = (row[0].parse().unwrap(), row[1].parse().unwrap(), row[2].parse().unwrap());
        assert_eq!(g, gaussian_kernel(t, x).unwrap());
        assert_eq!(row[5], env!("CARGO_PKG_VERSION"));
    }
    let summary = std::fs::read_to_string(dir.path().join("kernel.csv.summary.json")).unwrap();
    let summary: serde_json::Value = serde_json::from_str(&summary).unwrap();
    assert_eq!(summary["config_digest"].as_str().unwrap(), rows[0][4]);
}

#[test]
fn psi_surface_peaks_at_the_point_at_the_final_time() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("psi.csv");
    assert!(bin().args(["psi", "--out"]).arg(&out).status().unwrap().success());
    let (_, rows) = read_csv(&out);
    let vals: Vec<[f64; 4]> = rows
        .iter()
        .map(|r| [0, 1, 2, 3].map(|i| r[i].parse::<f64>().unwrap()))
        .collect();
    for n in 1..=3 {
        let level: Vec<&[f64; 4]> = vals.iter().filter(|v| v[0] == n as f64).collect();
        let peak = level.iter().max_by(|a, b| a[3].total_cmp(&b[3])).unwrap();
        assert_eq!(peak[1], 1.0);
        assert!(peak[2].abs() < 1e-12 && (peak[3] - 1.0).abs() < 1e-6);
        // Rows run over x fastest, so the same x recurs every 81 rows.
        for i in 81..level.len() {
            assert!(level[i][3] >= level[i - 81][3] - 1e-10);
        }
    }
}

#[test]
fn reruns_are_byte_identical_across_thread_budgets() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, SMALL_RUN).unwrap();
    let run = |name: &str, threads: &str| {
        let out = dir.path().join(name);
        let status = bin()
            .args(["simulate", "--threads", threads, "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read(&out).unwrap()
    };
    let a = run("a.csv", "1");
    let b = run("b.csv", "1");
    let c = run("c.csv", "3");
    assert_eq!(a, b);
    assert_eq!(a, c);
    let other = bin()
        .args(["simulate", "--seed", "10", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(other.status.success());
    assert_ne!(other.stdout, a);
}

#[test]
fn threads_flag_wins_over_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, SMALL_RUN).unwrap();
    let with_env = |flag: bool| {
        let mut c = bin();
        c.env("FRACHEAT_THREADS", "many").arg("simulate").arg("--config").arg(&cfg);
        if flag {
            c.args(["--threads", "2"]);
        }
        c.output().unwrap().status.code()
    };
    assert_eq!(with_env(false), Some(2));
    assert_eq!(with_env(true), Some(0));
}

#[test]
fn exit_codes_separate_config_and_compute_failures() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "alpha = 2.5\n").unwrap();
    let code = bin().args(["kernel", "--config"]).arg(&bad).output().unwrap().status.code();
    assert_eq!(code, Some(2));
    // Too few samples for a density estimate is a runtime failure.
    let few = dir.path().join("few.toml");
    std::fs::write(&few, SMALL_RUN).unwrap();
    let out = bin().args(["density", "--config"]).arg(&few).output().unwrap();
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    let missing = bin().args(["kernel", "--config", "/nonexistent/run.toml"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn digest_is_echoed_and_tracks_the_seed() {
    let a = bin().args(["t0", "--seed", "1"]).output().unwrap();
    let b = bin().args(["t0", "--seed", "2"]).output().unwrap();
    let digest = |o: &std::process::Output| String::from_utf8_lossy(&o.stderr).trim().to_string();
    assert!(digest(&a).starts_with("config_digest="));
    assert_ne!(digest(&a), digest(&b));
}
