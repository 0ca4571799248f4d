//! `gbsde solve`: one backward solve per config, CSV surface plus report.

use std::path::Path;

use gbsde::grid::{SpaceGrid, TimeGrid};
use gbsde::lattice;
use gbsde::paths::VolatilityControl;
use gbsde::pde;
use gbsde::rbsde::{self, PenalizationLadder};
use gbsde::surface::{Mode, Surface};
use gbsde::Error;

use crate::artifacts::{self, ConvergenceRow, Report};
use crate::config::{self, RunConfig, SolveInputs};
use crate::CliError;

const MC_PATHS: usize = 4096;

enum SolveMode {
    Lattice(Mode),
    Pde(Mode),
    Ladder,
}

fn parse_mode(config: &RunConfig) -> Result<SolveMode, CliError> {
    let run = config
        .run
        .as_ref()
        .ok_or_else(|| CliError::config("missing [run] section"))?;
    let penalty = || -> Result<u64, CliError> {
        match run.penalty {
            Some(n) if n >= 1 => Ok(n),
            Some(n) => Err(CliError::config(format!("penalty must be >= 1, got {n}"))),
            None => Err(CliError::config("penalized modes need a penalty level")),
        }
    };
    match run.mode.as_str() {
        "plain" => Ok(SolveMode::Lattice(Mode::Plain)),
        "projected" => Ok(SolveMode::Lattice(Mode::Projected)),
        "penalized" => Ok(SolveMode::Lattice(Mode::Penalized(penalty()?))),
        "pde-plain" => Ok(SolveMode::Pde(Mode::Plain)),
        "pde-obstacle" => Ok(SolveMode::Pde(Mode::Projected)),
        "pde-penalized" => Ok(SolveMode::Pde(Mode::Penalized(penalty()?))),
        "ladder" => Ok(SolveMode::Ladder),
        other => Err(CliError::config(format!(
            "unknown mode '{other}' (known: plain, projected, penalized, ladder, \
             pde-plain, pde-obstacle, pde-penalized)"
        ))),
    }
}

fn run_mode(
    mode: &SolveMode,
    config: &RunConfig,
    inputs: &SolveInputs,
    tg: &TimeGrid,
    sg: &SpaceGrid,
) -> Result<(Surface, Option<PenalizationLadder>), CliError> {
    match mode {
        SolveMode::Lattice(m) => Ok((lattice::rollback(&inputs.problem, tg, sg, *m)?, None)),
        SolveMode::Pde(Mode::Plain) => Ok((pde::solve_plain_pde(&inputs.problem, tg, sg)?, None)),
        SolveMode::Pde(Mode::Projected) => {
            Ok((pde::solve_obstacle_pde(&inputs.problem, tg, sg)?, None))
        }
        SolveMode::Pde(Mode::Penalized(n)) => {
            Ok((pde::solve_penalized_pde(&inputs.problem, tg, sg, *n)?, None))
        }
        SolveMode::Ladder => {
            let ladder_config = config::ladder_config(config)?;
            let (surface, ladder) = rbsde::run_ladder(&inputs.problem, tg, sg, &ladder_config)?;
            Ok((surface, Some(ladder)))
        }
    }
}

pub fn run(config: &RunConfig, out: &Path, seed: u64, grid_refine: u32) -> Result<(), CliError> {
    let inputs = config::build_problem(config)?;
    let mode = parse_mode(config)?;
    let (tg, sg) = config::build_solve_grids(config, &inputs)?;
    let (surface, ladder) = run_mode(&mode, config, &inputs, &tg, &sg)?;

    let mut report = Report::new("solve");
    report.push("label", surface.meta.label.clone());
    report.push("mode", surface.meta.mode.clone());
    report.push("steps", tg.steps());
    report.push("intervals", sg.intervals());
    report.push_f("t0", tg.t0());
    report.push_f("maturity", tg.t_end());
    report.push_f("x-min", sg.x_min());
    report.push_f("x-max", sg.x_max());
    report.push_f("dt", tg.dt());
    report.push_f("dx", sg.dx());
    report.push_f("band-low", inputs.problem.band().sigma_low());
    report.push_f("band-high", inputs.problem.band().sigma_high());
    report.push("seed", seed);
    report.push_f("x0", inputs.x0);
    report.push_f("y-start", surface.value_at_start(inputs.x0));
    let j0 = surface.space.nearest_node(inputs.x0);
    report.push_f("reflection-mass-at-x0", surface.total_reflection_at(j0));
    let max_mass = (0..surface.y.cols())
        .map(|j| surface.total_reflection_at(j))
        .fold(0.0f64, f64::max);
    report.push_f("max-reflection-mass", max_mass);
    if let Some(ladder) = &ladder {
        if let Some(n) = ladder.converged_at {
            report.push("converged-at", n);
        }
        report.push("ladder-levels", ladder.levels.len());
        artifacts::emit(out, "ladder.csv", &artifacts::ladder_csv(ladder))?;
    }
    push_mc_bound(&mut report, &inputs, &tg, seed)?;
    report.push("fingerprint", surface.meta.fingerprint);

    artifacts::emit(out, "surface.csv", &artifacts::surface_csv(&surface))?;

    if grid_refine > 0 {
        let rows = refine(&mode, config, &inputs, &tg, &sg, grid_refine)?;
        artifacts::emit(out, "convergence.csv", &artifacts::convergence_csv(&rows))?;
        report.push("refine-levels", grid_refine + 1);
    }
    artifacts::emit(out, "report.txt", &report.render())?;
    Ok(())
}

/// Re-solves on parabolically refined grids: each level multiplies the step
/// count by 4 and the interval count by 2, which halves `dx` while keeping
/// the stencil budget `sigma^2 dt/dx^2` constant.
fn refine(
    mode: &SolveMode,
    config: &RunConfig,
    inputs: &SolveInputs,
    tg: &TimeGrid,
    sg: &SpaceGrid,
    levels: u32,
) -> Result<Vec<ConvergenceRow>, CliError> {
    if levels > 5 {
        return Err(CliError::config(format!(
            "grid-refine is capped at 5 levels (4^k step growth), got {levels}"
        )));
    }
    let mut rows = Vec::new();
    let mut previous: Option<f64> = None;
    for level in 0..=levels {
        let steps = tg.steps() * 4usize.pow(level);
        let intervals = sg.intervals() * 2usize.pow(level);
        let tgl = TimeGrid::new(tg.t0(), tg.t_end(), steps)?;
        let sgl = SpaceGrid::new(sg.x_min(), sg.x_max(), intervals)?;
        let (surface, _) = run_mode(mode, config, inputs, &tgl, &sgl)?;
        let value = surface.value_at_start(inputs.x0);
        rows.push(ConvergenceRow {
            level,
            steps,
            intervals,
            dt: tgl.dt(),
            dx: sgl.dx(),
            value,
            change: previous.map(|p| value - p),
        });
        previous = Some(value);
    }
    Ok(rows)
}

/// For plain problems with state-only drivers, a fixed-volatility simulation
/// lower-bounds the worst-case value; skipped (not an error) elsewhere.
fn push_mc_bound(
    report: &mut Report,
    inputs: &SolveInputs,
    tg: &TimeGrid,
    seed: u64,
) -> Result<(), CliError> {
    let band = inputs.problem.band();
    let control = VolatilityControl::constant(band.sigma_high(), tg.steps(), band)?;
    match lattice::monte_carlo_lower_bound(&inputs.problem, tg, inputs.x0, &control, MC_PATHS, seed)
    {
        Ok(mc) => {
            report.push_f("mc-lower-bound", mc.mean);
            report.push_f("mc-std-error", mc.std_error);
            report.push("mc-paths", mc.n_paths);
            report.push_f("mc-sigma", band.sigma_high());
            Ok(())
        }
        Err(Error::Unsupported(_)) => Ok(()),
        Err(e) => Err(e.into()),
    }
}
