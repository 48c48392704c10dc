//! Acceptance suite: one printed PASS/FAIL line per criterion, then a single verdict.
//!
//! Lines go straight to stderr, so a plain `cargo test` shows them.

use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use shks_cli::config::{self, parse_str, RunConfig};
use shks_core::dynamics::{drift, drift_divergence_form, helmholtz_solve};
use shks_core::experiments::{
    gbm_moment_check, monte_carlo_survival, spectral_convergence, temporal_convergence,
    threshold_scan, transform_refinement, ScanParameter,
};
use shks_core::integrator::{default_decay, random_sobolev_field, run_path, transform_compare};
use shks_core::rng::{self, Purpose};
use shks_core::{InitialCondition, NoiseModel, PathStatus, SolverConfig, TorusGrid};

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(id: u32, name: &str, limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = f();
    let elapsed = start.elapsed();
    let in_time = limit.is_none_or(|l| elapsed < l);
    let pass = out.pass && in_time;
    let budget = limit.map(|l| format!(" / limit {:.0} s", l.as_secs_f64())).unwrap_or_default();
    report(format_args!(
        "[{}] criterion {id:>2} {name}: {} ({:.2} s{budget})",
        if pass { "PASS" } else { "FAIL" },
        out.detail,
        elapsed.as_secs_f64()
    ));
    pass
}

/// Written to the raw stderr handle so the lines survive libtest's output capture.
fn report(line: std::fmt::Arguments) {
    let _ = writeln!(std::io::stderr().lock(), "{line}");
}

fn sci(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn secs(s: u64) -> Option<Duration> {
    Some(Duration::from_secs(s))
}

fn single_mode(offset: f64, amplitude: f64) -> InitialCondition {
    InitialCondition::SingleMode {
        offset,
        amplitude,
        wavevector: vec![1],
    }
}

/// (1 - Δ) applied coefficient by coefficient must undo the Helmholtz solve.
fn c1_multiplier_exactness() -> Outcome {
    let mut worst: f64 = 0.0;
    for (dim, m) in [(1, 128), (2, 64)] {
        let grid = TorusGrid::new(dim, m).unwrap();
        for i in 0..100 {
            let mut rng = rng::stream(101, i, Purpose::InitialCondition);
            let amp = [0.1, 1.0, 10.0][i as usize % 3];
            let u = random_sobolev_field(&grid, 2.0, amp, default_decay(2.0, dim), &mut rng);
            let s = helmholtz_solve(&u);
            for (k, (sk, uk)) in s.coeffs().iter().zip(u.coeffs()).enumerate() {
                let lhs = *sk * (1.0 + grid.k_squared(k));
                worst = worst.max((lhs - *uk).norm());
            }
        }
    }
    Outcome {
        pass: worst <= 1e-12,
        detail: format!("max coefficient residual {worst:.3e} (tol 1e-12)"),
    }
}

fn c2_drift_forms() -> Outcome {
    let grid = TorusGrid::new(1, 128).unwrap();
    let mut worst_ratio: f64 = 0.0;
    for i in 0..100 {
        let mut rng = rng::stream(202, i, Purpose::InitialCondition);
        let amp = [0.1, 1.0, 5.0, 20.0][i as usize % 4];
        let u = random_sobolev_field(&grid, 2.0, amp, default_decay(2.0, 1), &mut rng).dealias();
        let a = drift(&u).unwrap();
        let b = drift_divergence_form(&u).unwrap();
        let mut diff = a;
        diff.add_scaled(&b, -1.0).unwrap();
        let linf = diff
            .inverse_transform()
            .unwrap()
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let tol = 1e-8 * (1.0 + u.w1inf_norm().powi(3));
        worst_ratio = worst_ratio.max(linf / tol);
    }
    Outcome {
        pass: worst_ratio <= 1.0,
        detail: format!("max ‖difference‖_inf / tolerance = {worst_ratio:.3e} (must be <= 1)"),
    }
}

fn c3_mass_conservation() -> Outcome {
    let grid = TorusGrid::new(1, 128).unwrap();
    let initials = [
        single_mode(0.3, 0.1),
        single_mode(0.0, 0.2),
        InitialCondition::RandomSobolev {
            target_norm: 0.1,
            decay: None,
            seed: Some(5),
        },
    ];
    let mut worst: f64 = 0.0;
    let mut all_survived = true;
    for ic in initials {
        let mut cfg = SolverConfig::new(grid.clone(), ic);
        cfg.dt = 1e-3;
        cfg.t_final = 1.0;
        cfg.noise = NoiseModel::Zero;
        let u0 = cfg.initial_field(0, 0).unwrap();
        let out = run_path(&cfg, 0, 0).unwrap();
        all_survived &= out.record.status == PathStatus::Survived;
        worst = worst.max((out.final_field.mean() - u0.mean()).abs());
    }
    Outcome {
        pass: all_survived && worst <= 1e-9,
        detail: format!("max |mean(u_T) - mean(u_0)| = {worst:.3e} (tol 1e-9), all survived: {all_survived}"),
    }
}

fn c4_strong_order() -> Outcome {
    let mut cfg = SolverConfig::new(TorusGrid::new(1, 64).unwrap(), single_mode(0.0, 0.1));
    cfg.noise = NoiseModel::Linear { lambda: 1.0 };
    cfg.t_final = 1.0;
    let ladder = [1e-2, 5e-3, 2.5e-3, 1.25e-3, 1.25e-3 / 32.0];
    match temporal_convergence(&cfg, &ladder, 32, 2) {
        Ok(study) => {
            let slope = study.slope.unwrap_or(f64::NAN);
            Outcome {
                pass: (0.35..=0.65).contains(&slope),
                detail: format!("errors {}, slope {slope:.3} (want [0.35, 0.65])", sci(&study.errors)),
            }
        }
        Err(e) => Outcome {
            pass: false,
            detail: format!("study failed: {e}"),
        },
    }
}

fn c5_doss_sussmann() -> Outcome {
    let mut cfg = SolverConfig::new(TorusGrid::new(1, 64).unwrap(), single_mode(0.0, 0.1));
    cfg.noise = NoiseModel::Linear { lambda: 0.5 };
    cfg.t_final = 1.0;
    let ladder: Vec<f64> = (0..5).map(|i| 1e-2 / f64::powi(2.0, i)).collect();
    let study = match transform_refinement(&cfg, &ladder, 64, 5) {
        Ok(s) => s,
        Err(e) => {
            return Outcome {
                pass: false,
                detail: format!("refinement failed: {e}"),
            }
        }
    };
    let slope = study.slope.unwrap_or(f64::NAN);

    let mut zero = cfg.clone();
    zero.noise = NoiseModel::Linear { lambda: 0.0 };
    let mut zero_worst: f64 = 0.0;
    for dt in &ladder {
        zero.dt = *dt;
        zero.record_every = 1;
        let cmp = transform_compare(&zero, 5, 0).unwrap();
        zero_worst = zero_worst.max(cmp.max_discrepancy);
    }
    Outcome {
        pass: (0.4..=1.1).contains(&slope) && zero_worst <= 1e-12,
        detail: format!(
            "final discrepancies {}, slope {slope:.3} (want [0.4, 1.1]); lambda=0 max {zero_worst:.1e} (tol 1e-12)",
            sci(&study.final_discrepancy)
        ),
    }
}

fn c6_gbm_moment() -> Outcome {
    let m = gbm_moment_check(1.0, 4.0, 1.0, 100_000, 6, None).unwrap();
    let z = (m.empirical_moment - 1.0).abs() / m.stderr;
    Outcome {
        pass: m.exponent == 0.375 && z <= 4.0,
        detail: format!(
            "mean of Phi^{} = {:.6} ± {:.2e}, {z:.2} standard errors from 1 (limit 4)",
            m.exponent, m.empirical_moment, m.stderr
        ),
    }
}

fn c7_projection_decay() -> Outcome {
    // Coefficients (1+k²)^{-(3 + 1/2 + 0.01)/2}: just inside H³ in one dimension.
    let grid = TorusGrid::new(1, 256).unwrap();
    let profile = InitialCondition::PowerLaw {
        amplitude: 1.0,
        decay: 3.51,
    };
    let study = spectral_convergence(&grid, &profile, 3.0, 1.0, &[4, 8, 16, 32]).unwrap();
    let slope = study.slope.unwrap_or(f64::NAN);
    Outcome {
        pass: slope <= -1.7,
        detail: format!("errors {}, slope {slope:.3} (want <= -1.7, theory {})", sci(&study.errors), study.theory_slope),
    }
}

fn scan_config() -> SolverConfig {
    // Steepening datum 2cos(x): the deterministic flow crosses the threshold near t = 0.2.
    let mut cfg = SolverConfig::new(TorusGrid::new(1, 64).unwrap(), single_mode(0.0, 2.0));
    cfg.dt = 1e-4;
    cfg.t_final = 0.5;
    cfg.stop_threshold = 20.0;
    cfg.record_every = 1000;
    cfg.noise = NoiseModel::Nonlinear {
        delta: 1.0,
        c_eff: 1.0,
    };
    cfg
}

fn c8_regularization() -> Outcome {
    let cfg = scan_config();
    let mut deterministic = cfg.clone();
    deterministic.noise = NoiseModel::Zero;
    let det = run_path(&deterministic, 0, 0).unwrap().record.status;
    let stops = matches!(det, PathStatus::Stopped { .. });
    let rows = threshold_scan(&cfg, ScanParameter::NonlinearC, &[0.0, 1.0, 2.0, 4.0, 8.0], 64, 42, None).unwrap();
    let p0 = &rows[0].report;
    let p8 = &rows[4].report;
    let margin = p0.ci_half_width() + p8.ci_half_width();
    let gap = p8.p_hat - p0.p_hat;
    let table: Vec<String> = rows.iter().map(|r| format!("c={}:{:.3}", r.value, r.report.p_hat)).collect();
    Outcome {
        pass: stops && gap > margin,
        detail: format!(
            "deterministic run {:?}; p_hat [{}]; gap {gap:.3} vs half-widths {margin:.3}",
            det,
            table.join(" ")
        ),
    }
}

const SMALL_DATA_CONFIG: &str = r#"
seed = 9
s = 2.0
dt = 1e-3
t_final = 5.0
stop_threshold = 100.0
record_every = 1000
grid.m = 64
noise.type = "linear"
noise.lambda = 1.0
ic.kind = "single_mode"
ic.amplitude = 1.0
ic.bound_fraction = 0.1
theory.r = 100.0
theory.rho = 4.0
mc.paths = 256
"#;

fn c9_small_data() -> Outcome {
    // 1 - 100^{-3/8} = 1 - 10^{-3/4}
    let bound = 1.0 - 10f64.powf(-0.75);
    let cfg = RunConfig::from_flat(&parse_str(SMALL_DATA_CONFIG).unwrap()).unwrap();
    let theory = config::resolve_theory(&cfg).unwrap().unwrap();
    let solver = config::effective_solver(&cfg, Some(&theory)).unwrap();
    let (report, _) = monte_carlo_survival(&solver, cfg.mc_paths, cfg.seed, Some(theory.params)).unwrap();
    let bound_ok = report
        .theory_bound
        .is_some_and(|b| (b - bound).abs() < 1e-15);
    let need = bound - report.ci_half_width();
    Outcome {
        pass: bound_ok && report.p_hat >= need,
        detail: format!(
            "C~ = {:.4}, ‖u0‖_Hs = {:.3e} (bound {:.3e}); p_hat {:.4} >= {bound:.4} - {:.4}: {}",
            theory.params.c_tilde,
            report.initial_hs.unwrap_or(f64::NAN),
            report.data_bound.unwrap_or(f64::NAN),
            report.p_hat,
            report.ci_half_width(),
            report.p_hat >= need
        ),
    }
}

const DETERMINISM_CONFIG: &str = r#"
grid.m = 32
dt = 1e-3
t_final = 0.3
stop_threshold = 8.0
noise.type = "nonlinear"
noise.c_eff = 2.0
ic.kind = "random_sobolev"
ic.target_norm = 1.5
"#;

fn run_montecarlo(cfg: &Path, out: &Path, workers: &str) -> Result<Vec<u8>, String> {
    let status = Command::new(env!("CARGO_BIN_EXE_shks"))
        .args(["montecarlo", "--paths", "24", "--seed", "77", "--config"])
        .arg(cfg)
        .arg("--out-dir")
        .arg(out)
        .env("SHKS_WORKERS", workers)
        .output()
        .map_err(|e| e.to_string())?;
    if !status.status.success() {
        return Err(String::from_utf8_lossy(&status.stderr).into_owned());
    }
    std::fs::read(out.join("ensemble.csv")).map_err(|e| e.to_string())
}

fn c10_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, DETERMINISM_CONFIG).unwrap();
    let runs: Result<Vec<Vec<u8>>, String> = [("a", "4"), ("b", "4"), ("c", "1")]
        .iter()
        .map(|(name, workers)| run_montecarlo(&cfg, &dir.path().join(name), workers))
        .collect();
    match runs {
        Ok(runs) => {
            let same = runs.windows(2).all(|w| w[0] == w[1]);
            let rows = runs[0].iter().filter(|b| **b == b'\n').count();
            Outcome {
                pass: same && rows == 25,
                detail: format!("three runs (4, 4, 1 workers), {rows} lines each, byte-identical: {same}"),
            }
        }
        Err(e) => Outcome {
            pass: false,
            detail: format!("montecarlo failed: {e}"),
        },
    }
}

#[test]
fn acceptance() {
    let results = [
        check(1, "multiplier exactness", secs(5), c1_multiplier_exactness),
        check(2, "drift-form equivalence", secs(10), c2_drift_forms),
        check(3, "mass conservation", secs(10), c3_mass_conservation),
        check(4, "strong EM order", secs(120), c4_strong_order),
        check(5, "transformed-equation equivalence", secs(60), c5_doss_sussmann),
        check(6, "GBM moment identity", secs(5), c6_gbm_moment),
        check(7, "spectral projection decay", secs(5), c7_projection_decay),
        check(8, "regularization direction", secs(600), c8_regularization),
        check(9, "small-data linear-noise bound", secs(600), c9_small_data),
        check(10, "determinism", None, c10_determinism),
    ];
    let failed: Vec<usize> = results
        .iter()
        .enumerate()
        .filter(|(_, ok)| !**ok)
        .map(|(i, _)| i + 1)
        .collect();
    report(format_args!(
        "acceptance: {} of {} criteria passed",
        results.len() - failed.len(),
        results.len()
    ));
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
