//! Acceptance suite: one pass/fail line per criterion, run sequentially.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the table.

use graphflow::flow::{self, DtPolicy, FlowConfig, Scheme, Termination};
use graphflow::scenario::{self, GridConfig, InitialMap, ScenarioConfig, SpaceSpec};
use graphflow::{report, verify};
use std::f64::consts::PI;
use std::time::Instant;

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
    seconds: f64,
}

fn check(name: &'static str, f: impl FnOnce() -> (bool, String)) -> Outcome {
    let t0 = Instant::now();
    let (pass, detail) = f();
    Outcome {
        name,
        pass,
        detail,
        seconds: t0.elapsed().as_secs_f64(),
    }
}

fn torus_spec(dim: usize) -> SpaceSpec {
    SpaceSpec::FlatTorus {
        periods: vec![2.0 * PI; dim],
    }
}

fn sphere_scenario(rho: f64, res: usize, flow: FlowConfig) -> ScenarioConfig {
    ScenarioConfig {
        domain: SpaceSpec::RoundSphere { radius: 1.0 },
        target: SpaceSpec::RoundSphere { radius: 1.0 },
        grid: GridConfig {
            resolution: vec![res, res],
        },
        initial_map: InitialMap::ContractedIdentity { rho },
        flow,
        output_dir: None,
        seed: 7,
        force: false,
        snapshot_every: 0,
    }
}

fn flow_config(scheme: Scheme, c: f64, t_end: f64, cadence: usize, stop_lambda: f64, stop_rhs: f64) -> FlowConfig {
    FlowConfig {
        scheme,
        dt: DtPolicy::Cfl { c },
        t_end,
        max_steps: 50_000_000,
        cadence,
        stop_max_lambda: stop_lambda,
        stop_rhs_norm: stop_rhs,
        allow_unstable_dt: false,
    }
}

const SEED: u64 = 20_260_809;

fn criterion_1() -> (bool, String) {
    let t0 = Instant::now();
    let rows = verify::core_identity_rows(10_000, SEED);
    let elapsed = t0.elapsed().as_secs_f64();
    let worst = rows
        .iter()
        .map(|r| r.max_violation)
        .fold(0.0f64, f64::max);
    let pass = rows.iter().all(|r| r.pass) && elapsed <= 30.0;
    (
        pass,
        format!("6 identities x 1e4 draws, worst violation {worst:.2e}, {elapsed:.1}s (budget 30s)"),
    )
}

fn criterion_2() -> (bool, String) {
    let rows = verify::inequality_rows(10_000, SEED);
    let pin = rows
        .iter()
        .find(|r| r.name == "curvature_contraction_pin")
        .expect("pin row");
    (
        pin.pass,
        format!(
            "{} samples, worst relative violation {:.2e} (tol 1e-10)",
            pin.samples, pin.max_violation
        ),
    )
}

fn criterion_3() -> (bool, String) {
    let rows = verify::inequality_rows(10_000, SEED ^ 0xbeef);
    let names = [
        "null_eigenvector_nonnegativity",
        "critical_point_lower_bound",
        "gradient_pair_inequality",
        "quadratic_term_lower_bound",
    ];
    let mut detail = String::new();
    let mut pass = true;
    for name in names {
        let row = rows.iter().find(|r| r.name == name).expect("row");
        pass &= row.pass;
        detail.push_str(&format!("{}={:.1e} ", name, row.max_violation));
    }
    (pass, detail.trim_end().to_string())
}

fn criterion_4() -> (bool, String) {
    let matrices: Vec<Vec<Vec<f64>>> = vec![
        vec![vec![0.0, 0.0], vec![0.0, 0.0]],
        vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        vec![vec![1.0, 0.0], vec![2.0, 1.0]],
        vec![vec![2.0, 1.0], vec![1.0, 1.0]],
        vec![vec![3.0, -1.0], vec![1.0, 2.0]],
    ];
    let mut worst_ratio: f64 = 0.0;
    for res in [32usize, 64] {
        for matrix in &matrices {
            let config = ScenarioConfig {
                domain: torus_spec(2),
                target: torus_spec(2),
                grid: GridConfig {
                    resolution: vec![res, res],
                },
                initial_map: InitialMap::Linear {
                    matrix: matrix.clone(),
                },
                flow: flow_config(Scheme::Rk4, 0.2, 1.0, 10, 0.01, 1e-6),
                output_dir: None,
                seed: 0,
                force: true,
                snapshot_every: 0,
            };
            let state = scenario::build_initial_map(&config).expect("build");
            let df_sq: f64 = matrix.iter().flatten().map(|v| v * v).sum();
            let budget = 1e-10 * (1.0 + df_sq);
            let mut stepper = flow::Stepper::new(&state).expect("stepper");
            let stats = stepper.sweep(&state).expect("sweep");
            worst_ratio = worst_ratio.max(stats.max_rhs / budget);
        }
    }
    (
        worst_ratio <= 1.0,
        format!("max |rhs| over budget ratio {worst_ratio:.3e} (<= 1 required)"),
    )
}

fn criterion_5() -> (bool, String) {
    let t0 = Instant::now();
    let config = ScenarioConfig {
        domain: SpaceSpec::FlatTorus {
            periods: vec![2.0 * PI],
        },
        target: SpaceSpec::FlatTorus {
            periods: vec![2.0 * PI],
        },
        grid: GridConfig {
            resolution: vec![64],
        },
        initial_map: InitialMap::Sinusoid { amplitude: 1e-3 },
        flow: flow_config(Scheme::Rk4, 0.2, 0.5, 1, 1e-9, 1e-12),
        output_dir: None,
        seed: 0,
        force: false,
        snapshot_every: 0,
    };
    let mut state = scenario::build_initial_map(&config).expect("build");
    let amplitude = |s: &graphflow::grid::MapState| -> f64 {
        s.values.iter().fold(0.0f64, |a, b| a.max(b.abs()))
    };
    let mut series: Vec<(f64, f64)> = vec![(0.0, amplitude(&state).ln())];
    while state.time < 0.5 {
        let dt = flow::cfl_dt(&state, 0.2).expect("cfl").min(0.5 - state.time);
        state = flow::step(&state, dt, Scheme::Rk4).expect("step");
        series.push((state.time, amplitude(&state).ln()));
    }
    // Least-squares slope of ln A against t.
    let n = series.len() as f64;
    let sx: f64 = series.iter().map(|(t, _)| t).sum();
    let sy: f64 = series.iter().map(|(_, y)| y).sum();
    let sxx: f64 = series.iter().map(|(t, _)| t * t).sum();
    let sxy: f64 = series.iter().map(|(t, y)| t * y).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let exponent = -slope;
    let elapsed = t0.elapsed().as_secs_f64();
    let pass = (exponent - 1.0).abs() <= 0.005 && elapsed <= 60.0;
    (
        pass,
        format!("fitted decay exponent {exponent:.5} (target 1 +- 0.5%), {elapsed:.1}s (budget 60s)"),
    )
}

struct Scenario6 {
    csv: Vec<u8>,
    pass: bool,
    detail: String,
}

fn run_scenario_6() -> Scenario6 {
    let t0 = Instant::now();
    let config = sphere_scenario(
        0.8,
        64,
        flow_config(Scheme::ForwardEuler, 0.5, 6.0, 5000, 5e-3, 2e-2),
    );
    let (state, hyp) = scenario::prepare(&config, false).expect("prepare");
    let outcome = flow::run_flow(&state, &config.flow).expect("run");
    let elapsed = t0.elapsed().as_secs_f64();

    let records = &outcome.records;
    let initial_margin = hyp.initial_area_margin.expect("margin");

    // (a) min *Ω nondecreasing up to cumulative drift 1e-6.
    let mut drift = 0.0f64;
    for w in records.windows(2) {
        drift += (w[0].min_star_omega - w[1].min_star_omega).max(0.0);
    }
    let a_ok = drift <= 1e-6;

    // (b) the area margin never drops below its initial value - 1e-6.
    let min_margin = records
        .iter()
        .map(|r| r.min_area_margin)
        .fold(f64::INFINITY, f64::min);
    let b_ok = min_margin >= initial_margin - 1e-6;

    // (c) max λ falls below 0.01 and the final map is near one point.
    let lambda_ok = records.iter().any(|r| r.max_lambda < 0.01);
    let radius = report::spread_radius(&outcome.final_state);
    let c_ok = lambda_ok && radius <= 1e-2;

    let converged = matches!(outcome.termination, Termination::Converged);
    let budget_ok = elapsed <= 600.0;
    let pass = a_ok && b_ok && c_ok && converged && budget_ok;

    let csv = {
        let dir = tempfile::tempdir().expect("tempdir");
        let path = dir.path().join("diagnostics.csv");
        report::write_diagnostics_csv(&path, records).expect("csv");
        std::fs::read(&path).expect("read csv")
    };
    Scenario6 {
        csv,
        pass,
        detail: format!(
            "drift {drift:.2e} (a:{a_ok}), margin {min_margin:.6} >= {:.6}-1e-6 (b:{b_ok}), \
             final radius {radius:.2e} (c:{c_ok}), {} after {} steps, {elapsed:.0}s (budget 600s)",
            initial_margin,
            if converged { "Converged" } else { "NOT converged" },
            outcome.steps
        ),
    }
}

fn criterion_7() -> (bool, String) {
    let config = sphere_scenario(
        0.9,
        64,
        flow_config(Scheme::ForwardEuler, 0.5, 0.5, 2500, 1e-6, 1e-9),
    );
    let (state, _) = scenario::prepare(&config, false).expect("prepare");
    let outcome = flow::run_flow(&state, &config.flow).expect("run");
    let initial = outcome.records.first().expect("records").min_s_diag;
    let min_over_run = outcome
        .records
        .iter()
        .map(|r| r.min_s_diag)
        .fold(f64::INFINITY, f64::min);
    let pass = min_over_run >= initial - 1e-6;
    (
        pass,
        format!("min S-diagonal {min_over_run:.6} vs initial {initial:.6} (tolerance 1e-6), {} ticks", outcome.records.len()),
    )
}

fn criterion_8() -> (bool, String) {
    let rows = verify::convergence_suite().expect("battery");
    let pass = rows.iter().all(|r| r.pass);
    let detail = rows
        .iter()
        .map(|r| format!("{} out-of-band {:.2e}", r.name, r.max_violation))
        .collect::<Vec<_>>()
        .join(", ");
    (pass, detail)
}

fn criterion_9() -> (bool, String) {
    let bin = env!("CARGO_BIN_EXE_graphflow");
    let dir = tempfile::tempdir().expect("tempdir");
    let write_config = |name: &str, config: &ScenarioConfig| -> std::path::PathBuf {
        let path = dir.path().join(name);
        std::fs::write(&path, serde_json::to_string_pretty(config).unwrap()).unwrap();
        path
    };

    // Borderline run: the identity between flat tori has zero margin.
    let borderline = ScenarioConfig {
        domain: torus_spec(2),
        target: torus_spec(2),
        grid: GridConfig {
            resolution: vec![32, 32],
        },
        initial_map: InitialMap::Linear {
            matrix: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        },
        flow: FlowConfig {
            scheme: Scheme::ForwardEuler,
            dt: DtPolicy::Fixed { dt: 1e300 },
            t_end: 1e306,
            max_steps: 2_000,
            cadence: 100,
            stop_max_lambda: 1e-12,
            stop_rhs_norm: 1e-15,
            allow_unstable_dt: false,
        },
        output_dir: None,
        seed: 0,
        force: false,
        snapshot_every: 0,
    };
    let borderline_path = write_config("borderline.json", &borderline);

    // Unforced: refused with the documented ConfigError exit code.
    let out_dir = dir.path().join("out_borderline_refused");
    let refused = std::process::Command::new(bin)
        .args(["run", "--config"])
        .arg(&borderline_path)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .expect("spawn");
    let refused_ok = refused.status.code() == Some(2)
        && String::from_utf8_lossy(&refused.stderr).contains("error[ConfigError]");

    // Forced with the oversized step: terminates with a failure report.
    let out_dir = dir.path().join("out_borderline_forced");
    let forced = std::process::Command::new(bin)
        .args(["run", "--force", "--config"])
        .arg(&borderline_path)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .expect("spawn");
    let forced_code = forced.status.code();
    let summary: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out_dir.join("summary.json")).unwrap_or_default(),
    )
    .unwrap_or(serde_json::Value::Null);
    let forced_reason = summary["termination"]["reason"].as_str().unwrap_or("").to_string();
    let forced_ok = matches!(forced_code, Some(3) | Some(4))
        && (forced_reason == "GraphLost" || forced_reason == "Instability");

    // Oversized-dt run on smooth data: same failure contract.
    let mut oversized = borderline.clone();
    oversized.initial_map = InitialMap::Sinusoid { amplitude: 1e-3 };
    let oversized_path = write_config("oversized.json", &oversized);
    let out_dir = dir.path().join("out_oversized");
    let blown = std::process::Command::new(bin)
        .args(["run", "--force", "--config"])
        .arg(&oversized_path)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .expect("spawn");
    let blown_code = blown.status.code();
    let blown_summary: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out_dir.join("summary.json")).unwrap_or_default(),
    )
    .unwrap_or(serde_json::Value::Null);
    let blown_reason = blown_summary["termination"]["reason"].as_str().unwrap_or("").to_string();
    let blown_ok = matches!(blown_code, Some(3) | Some(4))
        && (blown_reason == "GraphLost" || blown_reason == "Instability");

    (
        refused_ok && forced_ok && blown_ok,
        format!(
            "unforced exit {:?} ({refused_ok}), forced exit {forced_code:?} {forced_reason} ({forced_ok}), oversized exit {blown_code:?} {blown_reason} ({blown_ok})",
            refused.status.code()
        ),
    )
}

fn criterion_10(first_csv: &[u8]) -> (bool, String) {
    let rerun = run_scenario_6();
    let identical = rerun.csv == first_csv;
    (
        identical && rerun.pass,
        format!(
            "diagnostics byte-identical: {identical} ({} bytes)",
            first_csv.len()
        ),
    )
}

#[test]
fn acceptance() {
    let mut results: Vec<Outcome> = Vec::new();
    results.push(check("1 identity suite", criterion_1));
    results.push(check("2 curvature-convention pin", criterion_2));
    results.push(check("3 maximum-principle inequalities", criterion_3));
    results.push(check("4 stationary linear maps", criterion_4));
    results.push(check("5 heat-equation limit", criterion_5));

    let t0 = Instant::now();
    let s6 = run_scenario_6();
    results.push(Outcome {
        name: "6 area-decreasing sphere scenario",
        pass: s6.pass,
        detail: s6.detail.clone(),
        seconds: t0.elapsed().as_secs_f64(),
    });

    results.push(check("7 distance-decreasing scenario", criterion_7));
    results.push(check("8 convergence-order battery", criterion_8));
    results.push(check("9 failure-path contract", criterion_9));

    let t0 = Instant::now();
    let (pass10, detail10) = criterion_10(&s6.csv);
    results.push(Outcome {
        name: "10 determinism",
        pass: pass10,
        detail: detail10,
        seconds: t0.elapsed().as_secs_f64(),
    });

    let mut all_ok = true;
    println!("\n================ acceptance =================");
    for r in &results {
        println!(
            "criterion {:<36} {} ({:.1}s)\n    {}",
            r.name,
            if r.pass { "PASS" } else { "FAIL" },
            r.seconds,
            r.detail
        );
        all_ok &= r.pass;
    }
    println!("=============================================");
    assert!(all_ok, "some acceptance criteria failed");
}
