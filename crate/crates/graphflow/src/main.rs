//! Command line for running, verifying, resuming and reporting flows.
//!
//! Exit codes: 0 on success (including `Converged` and `TimeBudget` runs),
//! 2 for configuration errors, 3 when a run ends in `GraphLost`, 4 when it
//! ends in `Instability`, 1 for any other error. Failures print a single
//! machine-parsable line `error[Class]: message` to stderr.

use clap::{Parser, Subcommand};
use graphflow::error::Error;
use graphflow::flow::Termination;
use graphflow::{flow, grid, report, scenario, verify};
use std::path::PathBuf;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "graphflow", about = "Graphical mean curvature flow laboratory")]
struct Cli {
    /// Worker threads for the per-node sweeps (default: GRAPHFLOW_THREADS
    /// or all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario to completion and persist diagnostics, snapshots,
    /// summary and plots.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Allow borderline initial data and unstable fixed steps.
        #[arg(long)]
        force: bool,
    },
    /// Run the identity and grid-convergence verification suites.
    Verify {
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 20_260_809)]
        seed: u64,
    },
    /// Continue a run from a snapshot.
    Resume {
        #[arg(long)]
        config: PathBuf,
        /// Snapshot CSV written by a previous run.
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Regenerate plots and a summary from an existing diagnostics CSV.
    Report {
        #[arg(long)]
        from: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    configure_threads(cli.threads);
    let code = match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.class());
            match e {
                Error::Config { .. } => 2,
                Error::GraphLost { .. } => 3,
                Error::Instability { .. } => 4,
                _ => 1,
            }
        }
    };
    std::process::exit(code);
}

fn configure_threads(flag: Option<usize>) {
    let threads = flag.or_else(|| {
        std::env::var("GRAPHFLOW_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(t) = threads {
        if t >= 1 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
        }
    }
}

fn dispatch(command: Command) -> Result<i32, Error> {
    match command {
        Command::Run { config, out, force } => run_command(&config, &out, force, None),
        Command::Resume {
            config,
            snapshot,
            out,
            force,
        } => run_command(&config, &out, force, Some(snapshot)),
        Command::Verify { samples, seed } => {
            let (rows, ok) = verify::run_verify(samples, seed)?;
            print!("{}", verify::format_table(&rows));
            Ok(if ok { 0 } else { 1 })
        }
        Command::Report { from } => {
            let records = report::read_diagnostics_csv(&from.join("diagnostics.csv"))?;
            report::write_all_plots(&from, &records)?;
            if let Some(last) = records.last() {
                println!(
                    "report: {} rows, final t = {:.6e}, max λ = {:.6e}, min *Ω = {:.6e}",
                    records.len(),
                    last.t,
                    last.max_lambda,
                    last.min_star_omega
                );
            }
            Ok(0)
        }
    }
}

fn run_command(
    config_path: &std::path::Path,
    out: &std::path::Path,
    force: bool,
    snapshot: Option<PathBuf>,
) -> Result<i32, Error> {
    let config = scenario::load_config(config_path)?;
    let (mut state, hyp) = scenario::prepare(&config, force)?;
    let mut start_step = 0usize;

    if let Some(snap) = &snapshot {
        let meta_path = snap
            .to_str()
            .map(|s| PathBuf::from(s.replace(".csv", "_meta.json")))
            .ok_or_else(|| Error::config("snapshot", "non-utf8 snapshot path"))?;
        let meta = report::read_snapshot_meta(&meta_path)?;
        let values =
            grid::read_snapshot_values(snap, state.n(), state.m(), state.node_count())?;
        state.values = values;
        state.time = meta.t;
        start_step = meta.step;
        println!("resuming from step {} (t = {:.6e})", meta.step, meta.t);
    }

    println!(
        "hypotheses: k1 = {}, k2 = {}, k1 >= |k2|: {}, k1 + k2 > 0: {}, dim >= 2: {}, initial max lambda = {:.6e}, initial area margin = {}",
        hyp.k1,
        hyp.k2,
        hyp.k1_ge_abs_k2,
        hyp.k1_plus_k2_positive,
        hyp.dim_at_least_2,
        hyp.initial_max_lambda,
        hyp.initial_area_margin
            .map(|v| format!("{v:.6e}"))
            .unwrap_or_else(|| "n/a".into()),
    );

    std::fs::create_dir_all(out)?;
    let snapshots_dir = out.join("snapshots");
    let snapshot_every = config.snapshot_every;

    let mut flow_config = config.flow.clone();
    if force {
        flow_config.allow_unstable_dt = true;
    }

    let started = Instant::now();
    let outcome = flow::run_flow_with(&state, &flow_config, start_step, |s, step| {
        if snapshot_every > 0 && step % snapshot_every == 0 {
            report::write_snapshot_with_meta(&snapshots_dir, s, step)?;
        }
        Ok(())
    })?;
    let wall = started.elapsed().as_secs_f64();

    report::write_diagnostics_csv(&out.join("diagnostics.csv"), &outcome.records)?;
    report::write_snapshot_with_meta(&snapshots_dir, &outcome.final_state, outcome.steps)?;
    grid::write_snapshot(&outcome.final_state, &out.join("final_state.csv"))?;
    report::write_all_plots(out, &outcome.records)?;

    let last = outcome.records.last();
    let summary = report::RunSummary {
        termination: outcome.termination,
        steps: outcome.steps,
        t_final: outcome.final_state.time,
        final_max_lambda: last.map(|r| r.max_lambda).unwrap_or(f64::NAN),
        final_min_star_omega: last.map(|r| r.min_star_omega).unwrap_or(f64::NAN),
        wall_seconds: wall,
        recenter_steps: outcome.recenter_steps.clone(),
        convergence_radius: Some(report::spread_radius(&outcome.final_state)),
        hypotheses: hyp,
    };
    report::write_summary(&out.join("summary.json"), &summary)?;

    let reason = match outcome.termination {
        Termination::Converged => "Converged",
        Termination::TimeBudget => "TimeBudget",
        Termination::GraphLost { .. } => "GraphLost",
        Termination::Instability { .. } => "Instability",
    };
    println!(
        "run finished: {reason} after {} steps, t = {:.6e}, wall = {wall:.1}s",
        outcome.steps, outcome.final_state.time
    );
    Ok(termination_code(outcome.termination))
}

fn termination_code(t: Termination) -> i32 {
    match t {
        Termination::Converged | Termination::TimeBudget => 0,
        Termination::GraphLost { .. } => 3,
        Termination::Instability { .. } => 4,
    }
}
