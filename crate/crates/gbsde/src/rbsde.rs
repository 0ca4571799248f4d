//! Penalization ladder: drives the penalized solver along an increasing
//! penalty schedule until consecutive levels agree, certifying the reflected
//! limit.
//!
//! Along the ladder the per-level statistics (sup norms of the value, the
//! accumulated penalty mass and the discrete gradient norm) stay uniformly
//! bounded — the discrete counterpart of the a-priori estimates that make the
//! penalized values converge — and the values increase nodewise in `n`.
//! Convergence is declared when `sup |Y^n - Y^prev| < stop_tol`; the final
//! surface is then relabeled as the reflected solution with `dA := dL`.

use crate::error::{Error, Result};
use crate::grid::{SpaceGrid, TimeGrid};
use crate::lattice::rollback;
use crate::problem::MarkovianProblem;
use crate::surface::{Mode, Surface};

/// Penalty schedule and stopping rule of the ladder.
#[derive(Debug, Clone, PartialEq)]
pub struct LadderConfig {
    /// Strictly increasing penalty levels.
    pub penalties: Vec<u64>,
    /// Sup-norm gap between consecutive levels that certifies convergence.
    pub stop_tol: f64,
}

impl Default for LadderConfig {
    /// Powers of two `1, 2, ..., 1024` with stop tolerance `1e-3`.
    fn default() -> Self {
        Self {
            penalties: (0..=10).map(|k| 1u64 << k).collect(),
            stop_tol: 1e-3,
        }
    }
}

/// Statistics of one ladder level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LadderLevel {
    pub n: u64,
    /// `sup_{i,j} |Y^n - Y^prev|`; `None` on the first level.
    pub gap_from_previous: Option<f64>,
    /// `sup_{i,j} (Y^n - h)^-`: how far the level still dips below the obstacle.
    pub obstacle_deficit: f64,
    /// `max_j sum_i dL[i][j]`: largest accumulated penalty mass over paths of
    /// constant space node.
    pub penalty_mass_sup: f64,
    /// `sup_{i,j} |Y^n|`.
    pub y_sup: f64,
    /// `max_j sqrt(sum_i Z[i][j]^2 dt)`: discrete time-L2, space-sup gradient norm.
    pub z_norm: f64,
}

/// The full ladder run: one row of statistics per completed level.
#[derive(Debug, Clone, PartialEq)]
pub struct PenalizationLadder {
    pub levels: Vec<LadderLevel>,
    pub stop_tol: f64,
    /// Penalty level at which the stop rule fired, if it did.
    pub converged_at: Option<u64>,
}

fn level_stats(surface: &Surface, problem: &MarkovianProblem, gap: Option<f64>) -> Result<LadderLevel> {
    let layers = surface
        .penalty
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("ladder level lacks penalty layers".into()))?;
    let dt = surface.time.dt();
    let mut penalty_mass_sup: f64 = 0.0;
    let mut z_norm: f64 = 0.0;
    for j in 0..surface.y.cols() {
        let mass: f64 = (0..surface.y.rows()).map(|i| layers.dl.at(i, j)).sum();
        penalty_mass_sup = penalty_mass_sup.max(mass);
        let zz: f64 = (0..surface.y.rows()).map(|i| surface.z.at(i, j).powi(2) * dt).sum();
        z_norm = z_norm.max(zz.sqrt());
    }
    Ok(LadderLevel {
        n: layers.n,
        gap_from_previous: gap,
        obstacle_deficit: obstacle_deficit(surface, problem)?,
        penalty_mass_sup,
        y_sup: surface.y.max_abs(),
        z_norm,
    })
}

/// Largest shortfall below the obstacle, `sup_{i,j} (Y - h)^-`.
pub fn obstacle_deficit(surface: &Surface, problem: &MarkovianProblem) -> Result<f64> {
    if !problem.has_obstacle() {
        return Err(Error::InvalidInput("obstacle deficit needs an obstacle".into()));
    }
    let mut worst: f64 = 0.0;
    for i in 0..surface.y.rows() {
        let t = surface.time.node(i);
        for j in 0..surface.y.cols() {
            let h = problem.obstacle(t, surface.space.node(j))?;
            worst = worst.max(h - surface.y.at(i, j));
        }
    }
    Ok(worst)
}

/// Runs the ladder. On convergence returns the final surface — relabeled as
/// the reflected solution, its `da` rows being the last level's penalty
/// increments — together with the per-level statistics.
///
/// # Errors
///
/// [`Error::LadderExhausted`] with the collected statistics when the schedule
/// runs out before the stop rule fires; [`Error::InvalidInput`] for an empty
/// or non-increasing schedule, a nonpositive tolerance, or a nodewise
/// monotonicity violation between levels (which would indicate a solver
/// defect and makes the limit certificate worthless).
pub fn run_ladder(
    problem: &MarkovianProblem,
    tg: &TimeGrid,
    sg: &SpaceGrid,
    config: &LadderConfig,
) -> Result<(Surface, PenalizationLadder)> {
    if config.penalties.is_empty() {
        return Err(Error::InvalidInput("ladder needs a non-empty penalty schedule".into()));
    }
    if config.penalties.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput(format!(
            "ladder penalties must be strictly increasing, got {:?}",
            config.penalties
        )));
    }
    if !config.stop_tol.is_finite() || config.stop_tol <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "ladder stop_tol must be positive and finite, got {}",
            config.stop_tol
        )));
    }

    let mut levels: Vec<LadderLevel> = Vec::with_capacity(config.penalties.len());
    let mut previous: Option<Surface> = None;
    for &n in &config.penalties {
        let surface = rollback(problem, tg, sg, Mode::Penalized(n))?;
        let gap = previous.as_ref().map(|p| p.y.max_abs_diff(&surface.y));
        if let Some(prev) = previous.as_ref() {
            let decrease = prev.y.max_decrease_to(&surface.y);
            if decrease > 1e-12 {
                return Err(Error::InvalidInput(format!(
                    "penalized values decreased by {decrease} from n={} to n={n}; \
                     monotonicity in the penalty is a scheme invariant",
                    levels.last().map_or(0, |l| l.n)
                )));
            }
        }
        levels.push(level_stats(&surface, problem, gap)?);
        if let Some(g) = gap {
            if g < config.stop_tol {
                let ladder = PenalizationLadder {
                    levels,
                    stop_tol: config.stop_tol,
                    converged_at: Some(n),
                };
                let mut converged = surface;
                converged.meta.mode = format!("ladder-converged(n={n})");
                return Ok((converged, ladder));
            }
        }
        previous = Some(surface);
    }
    let last_gap = levels.last().and_then(|l| l.gap_from_previous);
    Err(Error::LadderExhausted {
        ladder: PenalizationLadder {
            levels,
            stop_tol: config.stop_tol,
            converged_at: None,
        },
        last_gap,
        stop_tol: config.stop_tol,
    })
}

/// Uniform-boundedness report over a completed ladder.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub levels: Vec<LadderLevel>,
    pub y_sup_overall: f64,
    pub penalty_mass_overall: f64,
    pub z_norm_overall: f64,
    /// Quantities that still grew by more than 5% between the last two
    /// levels — empty when the bounds have visibly saturated.
    pub growth_flags: Vec<String>,
}

impl std::fmt::Display for BoundReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "level    n      sup|Y|        sup L_T       ||Z||")?;
        for (k, l) in self.levels.iter().enumerate() {
            writeln!(
                f,
                "{k:>5} {n:>6} {y:>13.6e} {m:>13.6e} {z:>13.6e}",
                n = l.n,
                y = l.y_sup,
                m = l.penalty_mass_sup,
                z = l.z_norm
            )?;
        }
        if self.growth_flags.is_empty() {
            writeln!(f, "bounds saturated (no >5% growth on the last step)")
        } else {
            writeln!(f, "still growing >5%: {}", self.growth_flags.join(", "))
        }
    }
}

/// Summarizes the per-level sup-norms and flags any quantity still growing by
/// more than 5% between the last two levels.
///
/// # Errors
///
/// [`Error::InvalidInput`] when fewer than 3 levels were run (too little data
/// to speak of uniform bounds).
pub fn uniform_bound_report(ladder: &PenalizationLadder) -> Result<BoundReport> {
    if ladder.levels.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "uniform-bound report needs at least 3 ladder levels, got {}",
            ladder.levels.len()
        )));
    }
    let mut flags = Vec::new();
    let last = &ladder.levels[ladder.levels.len() - 1];
    let prev = &ladder.levels[ladder.levels.len() - 2];
    let mut check = |name: &str, previous: f64, current: f64| {
        if current > previous * 1.05 + 1e-300 {
            flags.push(name.to_string());
        }
    };
    check("sup|Y|", prev.y_sup, last.y_sup);
    check("sup L_T", prev.penalty_mass_sup, last.penalty_mass_sup);
    check("||Z||", prev.z_norm, last.z_norm);
    Ok(BoundReport {
        levels: ladder.levels.clone(),
        y_sup_overall: ladder.levels.iter().map(|l| l.y_sup).fold(0.0, f64::max),
        penalty_mass_overall: ladder.levels.iter().map(|l| l.penalty_mass_sup).fold(0.0, f64::max),
        z_norm_overall: ladder.levels.iter().map(|l| l.z_norm).fold(0.0, f64::max),
        growth_flags: flags,
    })
}
