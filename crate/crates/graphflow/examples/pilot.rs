//! Development pilot: sweep throughput and decay-rate calibration.

use graphflow::flow::{self, DtPolicy, FlowConfig, Scheme};
use graphflow::scenario::{self, GridConfig, InitialMap, ScenarioConfig, SpaceSpec};
use std::time::Instant;

fn sphere_config(res: usize, rho: f64, t_end: f64, cadence: usize) -> ScenarioConfig {
    ScenarioConfig {
        domain: SpaceSpec::RoundSphere { radius: 1.0 },
        target: SpaceSpec::RoundSphere { radius: 1.0 },
        grid: GridConfig { resolution: vec![res, res] },
        initial_map: InitialMap::ContractedIdentity { rho },
        flow: FlowConfig {
            scheme: Scheme::ForwardEuler,
            dt: DtPolicy::Cfl { c: 0.5 },
            t_end,
            max_steps: 100_000_000,
            cadence,
            stop_max_lambda: 5e-3,
            stop_rhs_norm: 2e-2,
            allow_unstable_dt: false,
        },
        output_dir: None,
        seed: 0,
        force: false,
        snapshot_every: 0,
    }
}

fn main() {
    let mode = std::env::args().nth(1).unwrap_or_else(|| "bench".into());
    match mode.as_str() {
        "bench" => {
            // Raw sweep throughput on the criterion-6 grid.
            let config = sphere_config(64, 0.8, 1.0, 1000);
            let (state, _) = scenario::prepare(&config, false).unwrap();
            let mut stepper = flow::Stepper::new(&state).unwrap();
            let t0 = Instant::now();
            let reps = 200;
            let mut acc = 0.0;
            for _ in 0..reps {
                let stats = stepper.sweep(&state).unwrap();
                acc += stats.max_rhs;
            }
            let dt = t0.elapsed().as_secs_f64();
            let nodes = state.node_count();
            println!(
                "sweep: {:.3} ms/sweep, {:.0} ns/node ({} nodes, checksum {acc:.3})",
                1e3 * dt / reps as f64,
                1e9 * dt / (reps * nodes) as f64,
                nodes
            );
            let stats = stepper.sweep(&state).unwrap();
            let dt_step = 0.5 * (std::f64::consts::PI / 64.0_f64).powi(2) / (2.0 * stats.max_stiffness);
            println!("cfl dt at c=0.5: {dt_step:.4e}; steps for t=2.5: {:.0}", 2.5 / dt_step);
        }
        "decay" => {
            // Low-resolution decay pilot: watch max lambda vs t.
            let res: usize = std::env::args().nth(2).map(|v| v.parse().unwrap()).unwrap_or(24);
            let t_end: f64 = std::env::args().nth(3).map(|v| v.parse().unwrap()).unwrap_or(3.0);
            let config = sphere_config(res, 0.8, t_end, 2000);
            let (state, hyp) = scenario::prepare(&config, false).unwrap();
            println!("initial max lambda {:.4}, margin {:.4}", hyp.initial_max_lambda, hyp.initial_area_margin.unwrap());
            let t0 = Instant::now();
            let out = flow::run_flow(&state, &config.flow).unwrap();
            println!("termination {:?} after {} steps, wall {:.1}s", out.termination, out.steps, t0.elapsed().as_secs_f64());
            for r in out.records.iter().step_by(out.records.len().max(20) / 20) {
                println!("t={:.4} maxl={:.5e} minomega={:.6} margin={:.6} rhs_resid={:?}", r.t, r.max_lambda, r.min_star_omega, r.min_area_margin, r.max_residual_34);
            }
            if let Some(last) = out.records.last() {
                println!("final: t={:.4} maxl={:.5e}", last.t, last.max_lambda);
            }
            println!("spread radius: {:.5e}", graphflow::report::spread_radius(&out.final_state));
        }
        "conv" => {
            for res in [16usize, 24, 32, 48, 64] {
                let config = sphere_config(res, 0.8, 1.0, 1000);
                let state = scenario::build_initial_map(&config).unwrap();
                let dt = 1e-7;
                let next = flow::step(&state, dt, Scheme::Rk4).unwrap();
                let resid = graphflow::curvature::residual_34(&state, &next, dt).unwrap();
                let r = resid.iter().fold(0.0f64, |a, b| a.max(b.abs()));
                let mut stepper = flow::Stepper::new(&state).unwrap();
                stepper.sweep(&state).unwrap();
                let rhs = stepper.rhs().to_vec();
                let mut defect: f64 = 0.0;
                for node in 0..state.node_count() {
                    let d = graphflow::flow::normal_defect(&state, node).unwrap();
                    defect = defect.max(d);
                }
                let w = graphflow::curvature::log_star_omega_field(&state).unwrap();
                let mut grad: f64 = 0.0;
                for node in 0..state.node_count() {
                    let (fd, f) = graphflow::curvature::grad_log_omega_check(&state, node, &w).unwrap();
                    for (a, b) in fd.iter().zip(&f) {
                        grad = grad.max((a - b).abs());
                    }
                }
                let _ = rhs;
                println!("res {res}: residual {r:.5e} defect {defect:.5e} grad {grad:.5e}");
            }
        }
        "conv2" => {
            let res: usize = std::env::args().nth(2).map(|v| v.parse().unwrap()).unwrap_or(32);
            let config = sphere_config(res, 0.8, 1.0, 1000);
            let state = scenario::build_initial_map(&config).unwrap();
            let dt = 1e-7;
            let next = flow::step(&state, dt, Scheme::Rk4).unwrap();
            let resid = graphflow::curvature::residual_34(&state, &next, dt).unwrap();
            let mut worst = (0usize, 0.0f64);
            for (i, r) in resid.iter().enumerate() {
                if r.abs() > worst.1 { worst = (i, r.abs()); }
            }
            let mut idx = [0usize; 2];
            state.grid.axis_indices(worst.0, &mut idx);
            println!("residual worst {:.4e} at node {:?} (rows 0..{})", worst.1, idx, res);
            // Row profile of residual maxima.
            for i in 0..res {
                let mut m = 0.0f64;
                for j in 0..res {
                    let v = resid[state.grid.node_id(&[i, j])].abs();
                    if v > m { m = v; }
                }
                if i < 4 || i >= res - 4 || i == res/2 { println!("  residual row {i}: {m:.4e}"); }
            }
            let w = graphflow::curvature::log_star_omega_field(&state).unwrap();
            let mut worstg = (0usize, 0.0f64);
            for node in 0..state.node_count() {
                let (fd, f) = graphflow::curvature::grad_log_omega_check(&state, node, &w).unwrap();
                let mut d = 0.0f64;
                for (a, b) in fd.iter().zip(&f) { d = d.max((a - b).abs()); }
                if d > worstg.1 { worstg = (node, d); }
            }
            state.grid.axis_indices(worstg.0, &mut idx);
            println!("grad worst {:.4e} at node {:?}", worstg.1, idx);
            for i in [0usize, 1, 2, res/2, res-2, res-1] {
                let mut m = 0.0f64;
                for j in 0..res {
                    let node = state.grid.node_id(&[i, j]);
                    let (fd, f) = graphflow::curvature::grad_log_omega_check(&state, node, &w).unwrap();
                    for (a, b) in fd.iter().zip(&f) { m = m.max((a - b).abs()); }
                }
                println!("  grad row {i}: {m:.4e}");
            }
        }
        "lbtest" => {
            use graphflow::grid::{GridSpec, MapState};
            use graphflow::spaceform::SpaceForm;
            for res in [16usize, 32] {
                let sph = SpaceForm::round_sphere(1.0).unwrap();
                let tar = SpaceForm::flat_torus(vec![6.283185307179586]).unwrap();
                let grid = GridSpec::for_space(&sph, &[res, res]).unwrap();
                let state = MapState::from_fn(sph, tar, grid, |_| vec![0.0]);
                // u = sinθ cosφ is an eigenfunction: Δu = -2u.
                let field: Vec<f64> = (0..state.node_count())
                    .map(|n| { let x = state.grid.point_of(n); x[0].sin() * x[1].cos() })
                    .collect();
                let lb = graphflow::curvature::laplace_beltrami_field(&field, &state).unwrap();
                for i in [0usize, 1, res/2] {
                    let mut worst = 0.0f64;
                    for j in 0..res {
                        let node = state.grid.node_id(&[i, j]);
                        worst = worst.max((lb[node] + 2.0 * field[node]).abs());
                    }
                    println!("res {res} row {i}: lb err {worst:.4e}");
                }
            }
        }
        "stationary_resid" => {
            use graphflow::grid::{GridSpec, MapState};
            use graphflow::spaceform::SpaceForm;
            for res in [16usize, 32] {
                let sph = SpaceForm::round_sphere(1.0).unwrap();
                let grid = GridSpec::for_space(&sph, &[res, res]).unwrap();
                let state = MapState::from_fn(sph.clone(), sph.clone(), grid, |x| vec![std::f64::consts::PI / 2.0, 2.0 * x[1]]);
                let dt = 1e-7;
                let next = flow::step(&state, dt, Scheme::Rk4).unwrap();
                let resid = graphflow::curvature::residual_34(&state, &next, dt).unwrap();
                for i in [0usize, 1, res/2] {
                    let mut worst = 0.0f64;
                    for j in 0..res {
                        let node = state.grid.node_id(&[i, j]);
                        worst = worst.max(resid[node].abs());
                    }
                    println!("res {res} row {i}: residual {worst:.4e}");
                }
            }
        }
        "residparts" => {
            for res in [16usize, 32, 64] {
                let config = sphere_config(res, 0.8, 1.0, 1000);
                let state = scenario::build_initial_map(&config).unwrap();
                let dt = 1e-7;
                let next = flow::step(&state, dt, Scheme::Rk4).unwrap();
                let w_prev = graphflow::curvature::log_star_omega_field(&state).unwrap();
                let w_next = graphflow::curvature::log_star_omega_field(&next).unwrap();
                let lb = graphflow::curvature::laplace_beltrami_field(&w_prev, &state).unwrap();
                let mut stepper = flow::Stepper::new(&state).unwrap();
                stepper.sweep(&state).unwrap();
                let rhs = stepper.rhs().to_vec();
                // worst pole-row node
                let mut worst = (0usize, 0.0f64);
                let resid = graphflow::curvature::residual_34_with_rhs(&state, &next, dt, &rhs).unwrap();
                for j in 0..res {
                    let node = state.grid.node_id(&[res - 1, j]);
                    if resid[node].abs() > worst.1 { worst = (node, resid[node].abs()); }
                }
                let node = worst.0;
                let nf = graphflow::curvature::node_frames_pub(&state, node).unwrap();
                let sff = graphflow::curvature::second_fundamental_form(&state, node).unwrap();
                let q = graphflow::curvature::quadratic_terms_34(&sff, &nf.0);
                let c = graphflow::curvature::curvature_term_34(&nf.0, 1.0, 1.0, 2);
                let dwdt = (w_next[node] - w_prev[node]) / dt;
                let (grad_fd, grad_formula) = graphflow::curvature::grad_log_omega_check(&state, node, &w_prev).unwrap();
                let vel = &rhs[node * 2..node * 2 + 2];
                println!("res {res} node {node}: resid {:.4e} | dwdt {dwdt:.6} lb {:.6} q {q:.6} c {c:.6} grad_fd {grad_fd:?} grad_f {grad_formula:?} vel {vel:?}", resid[node], lb[node]);
            }
        }
        _ => eprintln!("unknown mode"),
    }
}
