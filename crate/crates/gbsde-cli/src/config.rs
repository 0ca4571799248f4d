//! Configuration file schema and assembly of solver inputs.
//!
//! One TOML file per run, with sections `[problem]`, `[band]`, `[grid]`,
//! `[run]`, `[ladder]`, `[market]`, `[claim]`, `[validate]`. Every command
//! reads the same schema and demands the sections it needs; unknown keys are
//! rejected so typos surface as configuration errors.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;

use gbsde::band::VolatilityBand;
use gbsde::grid::{SpaceGrid, TimeGrid};
use gbsde::market::{ClaimSpec, MarketModel, PricingMethod};
use gbsde::problem::{DriverFn, MarkovianProblem};
use gbsde::rbsde::LadderConfig;

use crate::CliError;

/// One-variable coefficient produced from a [`CoefSpec`].
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Stencil-weight budget targeted by the automatic space grid, matching the
/// pricing grids: `sigma_high^2 dt/dx^2 + |drift| dt/dx <= 0.45` leaves half
/// the monotonicity budget as slack.
const CFL_TARGET: f64 = 0.45;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct RunConfig {
    pub problem: Option<ProblemSection>,
    pub band: Option<BandSection>,
    pub grid: Option<GridSection>,
    pub run: Option<RunSection>,
    pub ladder: Option<LadderSection>,
    pub market: Option<MarketSection>,
    pub claim: Option<ClaimSection>,
    pub validate: Option<ValidateSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ProblemSection {
    /// Named shorthand for a complete data set; mutually exclusive with the
    /// coefficient fields below. Known presets: `flat-obstacle-drain`.
    pub preset: Option<String>,
    pub label: Option<String>,
    /// Report point in state space (defaults to 0).
    pub x0: Option<f64>,
    pub t0: Option<f64>,
    pub maturity: Option<f64>,
    pub drift: Option<CoefSpec>,
    pub qv_drift: Option<CoefSpec>,
    pub terminal: Option<CoefSpec>,
    pub obstacle: Option<CoefSpec>,
    pub driver_f: Option<DriverSpec>,
    pub driver_g: Option<DriverSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct BandSection {
    pub low: f64,
    pub high: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct GridSection {
    pub steps: usize,
    /// Space intervals; derived from the stencil budget when omitted.
    pub intervals: Option<usize>,
    pub x_min: Option<f64>,
    pub x_max: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct RunSection {
    /// One of: plain, projected, penalized, ladder, pde-plain, pde-obstacle,
    /// pde-penalized.
    pub mode: String,
    /// Penalty level for the penalized modes.
    pub penalty: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct LadderSection {
    pub penalties: Vec<u64>,
    pub stop_tol: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct MarketSection {
    pub rate: f64,
    pub spot: f64,
    pub maturity: f64,
    /// lattice (default), pde, or stopping.
    pub method: Option<String>,
    /// american (default) or european.
    pub style: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ClaimSection {
    /// put or call.
    pub kind: String,
    pub strike: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ValidateSection {
    /// Any of: axioms, comparison, comparison-disordered, complementarity,
    /// oracle, cross.
    pub suites: Vec<String>,
}

/// A coefficient of the state variable, given as a named built-in.
///
/// `put-payoff` and `call-payoff` treat the state as a log-price
/// (`payoff(exp(x))`), matching the pricing coordinate. `table` is
/// piecewise-linear between its knots with constant extrapolation outside.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields, rename_all = "kebab-case")]
pub enum CoefSpec {
    Constant { value: f64 },
    Linear { slope: f64, intercept: f64 },
    PutPayoff { strike: f64 },
    CallPayoff { strike: f64 },
    /// Constant dt-drift of a log price earning `rate`; pair it with
    /// `qv-drift = -0.5`, which multiplies the quadratic variation, to get
    /// full log-price dynamics under an uncertain volatility.
    LogPriceDrift { rate: f64 },
    Table { xs: Vec<f64>, values: Vec<f64> },
}

impl CoefSpec {
    pub fn to_fn(&self) -> Result<ScalarFn, CliError> {
        match self {
            CoefSpec::Constant { value } => {
                let v = require_finite("constant value", *value)?;
                Ok(Arc::new(move |_| v))
            }
            CoefSpec::Linear { slope, intercept } => {
                let a = require_finite("linear slope", *slope)?;
                let b = require_finite("linear intercept", *intercept)?;
                Ok(Arc::new(move |x| a * x + b))
            }
            CoefSpec::PutPayoff { strike } => {
                let k = require_strike(*strike)?;
                Ok(Arc::new(move |x| (k - x.exp()).max(0.0)))
            }
            CoefSpec::CallPayoff { strike } => {
                let k = require_strike(*strike)?;
                Ok(Arc::new(move |x| (x.exp() - k).max(0.0)))
            }
            CoefSpec::LogPriceDrift { rate } => {
                let r = require_finite("log-price-drift rate", *rate)?;
                Ok(Arc::new(move |_| r))
            }
            CoefSpec::Table { xs, values } => {
                if xs.len() != values.len() {
                    return Err(CliError::config(format!(
                        "table has {} knots but {} values",
                        xs.len(),
                        values.len()
                    )));
                }
                if xs.len() < 2 {
                    return Err(CliError::config("table needs at least 2 knots"));
                }
                if xs.iter().chain(values.iter()).any(|v| !v.is_finite()) {
                    return Err(CliError::config("table entries must be finite"));
                }
                if xs.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(CliError::config("table knots must be strictly increasing"));
                }
                let xs = xs.clone();
                let values = values.clone();
                Ok(Arc::new(move |x| {
                    if x <= xs[0] {
                        return values[0];
                    }
                    if x >= xs[xs.len() - 1] {
                        return values[values.len() - 1];
                    }
                    let k = xs.partition_point(|&t| t <= x) - 1;
                    let w = (x - xs[k]) / (xs[k + 1] - xs[k]);
                    values[k] + w * (values[k + 1] - values[k])
                }))
            }
        }
    }
}

/// Driver of the backward equation: `c0(x) + cy*y + cz*z`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct DriverSpec {
    pub c0: Option<CoefSpec>,
    pub cy: Option<f64>,
    pub cz: Option<f64>,
}

impl DriverSpec {
    fn assemble(&self) -> Result<(DriverFn, f64), CliError> {
        let c0 = match &self.c0 {
            Some(spec) => spec.to_fn()?,
            None => Arc::new(|_| 0.0) as ScalarFn,
        };
        let cy = require_finite("driver cy", self.cy.unwrap_or(0.0))?;
        let cz = require_finite("driver cz", self.cz.unwrap_or(0.0))?;
        let f = Arc::new(move |_t: f64, x: f64, y: f64, z: f64| c0(x) + cy * y + cz * z);
        Ok((f, cy.abs() + cz.abs()))
    }
}

fn require_finite(what: &str, v: f64) -> Result<f64, CliError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::config(format!("{what} must be finite, got {v}")))
    }
}

fn require_strike(k: f64) -> Result<f64, CliError> {
    if k.is_finite() && k >= 0.0 {
        Ok(k)
    } else {
        Err(CliError::config(format!(
            "payoff strike must be finite and nonnegative, got {k}"
        )))
    }
}

pub fn load(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| {
        CliError::config(format!("cannot read config {}: {e}", path.display()))
    })?;
    toml::from_str(&text)
        .map_err(|e| CliError::config(format!("config {}: {e}", path.display())))
}

pub fn band(config: &RunConfig) -> Result<VolatilityBand, CliError> {
    let section = config
        .band
        .as_ref()
        .ok_or_else(|| CliError::config("missing [band] section"))?;
    Ok(VolatilityBand::new(section.low, section.high)?)
}

/// Fully assembled solver inputs for the solve command.
pub struct SolveInputs {
    pub problem: MarkovianProblem,
    pub t0: f64,
    pub maturity: f64,
    pub x0: f64,
}

pub fn build_problem(config: &RunConfig) -> Result<SolveInputs, CliError> {
    let section = config
        .problem
        .as_ref()
        .ok_or_else(|| CliError::config("missing [problem] section"))?;
    let band = band(config)?;
    let t0 = section.t0.unwrap_or(0.0);
    let maturity = section.maturity.unwrap_or(1.0);
    if !(t0.is_finite() && maturity.is_finite() && maturity > t0) {
        return Err(CliError::config(format!(
            "need t0 < maturity, got t0={t0}, maturity={maturity}"
        )));
    }
    let x0 = require_finite("x0", section.x0.unwrap_or(0.0))?;

    if let Some(name) = &section.preset {
        let explicit = section.drift.is_some()
            || section.qv_drift.is_some()
            || section.terminal.is_some()
            || section.obstacle.is_some()
            || section.driver_f.is_some()
            || section.driver_g.is_some();
        if explicit {
            return Err(CliError::config(
                "preset and explicit coefficients are mutually exclusive",
            ));
        }
        let problem = match name.as_str() {
            "flat-obstacle-drain" => MarkovianProblem::new(
                section.label.clone().unwrap_or_else(|| name.clone()),
                band,
            )
            .with_driver_f(|_, _, _, _| -1.0)
            .with_obstacle(|_, _| 0.0),
            other => {
                return Err(CliError::config(format!(
                    "unknown preset '{other}' (known: flat-obstacle-drain)"
                )))
            }
        };
        return Ok(SolveInputs {
            problem,
            t0,
            maturity,
            x0,
        });
    }

    let mut problem =
        MarkovianProblem::new(section.label.clone().unwrap_or_else(|| "config".into()), band);
    let mut lipschitz = 0.0;
    if let Some(spec) = &section.drift {
        let f = spec.to_fn()?;
        problem = problem.with_drift(move |_, x| f(x));
    }
    if let Some(spec) = &section.qv_drift {
        let f = spec.to_fn()?;
        problem = problem.with_qv_drift(move |_, x| f(x));
    }
    if let Some(spec) = &section.terminal {
        let f = spec.to_fn()?;
        problem = problem.with_terminal(move |x| f(x));
    }
    if let Some(spec) = &section.obstacle {
        let f = spec.to_fn()?;
        problem = problem.with_obstacle(move |_, x| f(x));
    }
    if let Some(spec) = &section.driver_f {
        let (f, lip) = spec.assemble()?;
        lipschitz += lip;
        problem = problem.with_driver_f(move |t, x, y, z| f(t, x, y, z));
    }
    if let Some(spec) = &section.driver_g {
        let (g, lip) = spec.assemble()?;
        lipschitz += lip;
        problem = problem.with_driver_g(move |t, x, y, z| g(t, x, y, z));
    }
    if lipschitz > 0.0 {
        problem = problem.with_lipschitz(lipschitz);
    }
    Ok(SolveInputs {
        problem,
        t0,
        maturity,
        x0,
    })
}

/// Builds the time/space grids for a generic solve.
///
/// Explicit `x-min`/`x-max`/`intervals` are honored as given; omitted parts
/// follow the automatic rule: half-width `6*sigma_high*sqrt(duration) +
/// drift_max*duration` around `x0`, and a space step that keeps the stencil
/// budget at `CFL_TARGET` (rounded to an even interval count so `x0`-centered
/// domains keep a node at the center).
pub fn build_solve_grids(
    config: &RunConfig,
    inputs: &SolveInputs,
) -> Result<(TimeGrid, SpaceGrid), CliError> {
    let grid = config
        .grid
        .as_ref()
        .ok_or_else(|| CliError::config("missing [grid] section"))?;
    let tg = TimeGrid::new(inputs.t0, inputs.maturity, grid.steps)?;
    let band = inputs.problem.band();
    let duration = inputs.maturity - inputs.t0;

    let (x_min, x_max) = match (grid.x_min, grid.x_max) {
        (Some(lo), Some(hi)) => (lo, hi),
        (None, None) => {
            let probe_half = 6.0 * band.sigma_high() * duration.sqrt();
            let drift_max = sampled_drift_bound(&inputs.problem, inputs.x0, probe_half, inputs.t0);
            let half = probe_half + drift_max * duration;
            (inputs.x0 - half, inputs.x0 + half)
        }
        _ => {
            return Err(CliError::config(
                "x-min and x-max must be given together or both omitted",
            ))
        }
    };
    let intervals = match grid.intervals {
        Some(m) => m,
        None => {
            let drift_max =
                sampled_drift_bound(&inputs.problem, 0.5 * (x_min + x_max), 0.5 * (x_max - x_min), inputs.t0);
            auto_intervals(band.sigma_high(), drift_max, tg.dt(), x_max - x_min)
        }
    };
    Ok((tg, SpaceGrid::new(x_min, x_max, intervals)?))
}

/// Largest `|b + l*sigma^2|` over a coarse probe of the domain and the band
/// endpoints; used only to size automatic grids.
fn sampled_drift_bound(problem: &MarkovianProblem, center: f64, half: f64, t0: f64) -> f64 {
    let band = problem.band();
    let mut worst: f64 = 0.0;
    for k in 0..=64 {
        let x = center - half + 2.0 * half * k as f64 / 64.0;
        let b = problem.drift(t0, x);
        let l = problem.qv_drift(t0, x);
        for sigma in [band.sigma_low(), band.sigma_high()] {
            worst = worst.max((b + l * sigma * sigma).abs());
        }
    }
    worst
}

/// Space-interval count that realizes the stencil budget: solve
/// `a/dx^2 + b/dx = CFL_TARGET` for dx and round the count down to even so
/// the realized spacing is at least the target.
fn auto_intervals(sigma_high: f64, drift_max: f64, dt: f64, width: f64) -> usize {
    let a = sigma_high * sigma_high * dt;
    let b = drift_max * dt;
    let mut dx = (b + (b * b + 4.0 * CFL_TARGET * a).sqrt()) / (2.0 * CFL_TARGET);
    if drift_max > 0.0 {
        // Side weights need sigma_eff^2 >= |drift|*dx; cap dx with a margin.
        dx = dx.min(0.8 * sigma_high * sigma_high / drift_max);
    }
    (2 * ((width / 2.0) / dx).floor() as usize).max(2)
}

pub fn ladder_config(config: &RunConfig) -> Result<LadderConfig, CliError> {
    let section = config
        .ladder
        .as_ref()
        .ok_or_else(|| CliError::config("missing [ladder] section for ladder mode"))?;
    Ok(LadderConfig {
        penalties: section.penalties.clone(),
        stop_tol: section.stop_tol,
    })
}

pub fn market_model(config: &RunConfig) -> Result<MarketModel, CliError> {
    let section = config
        .market
        .as_ref()
        .ok_or_else(|| CliError::config("missing [market] section"))?;
    Ok(MarketModel::new(
        section.rate,
        section.spot,
        band(config)?,
        section.maturity,
    )?)
}

pub fn claim_spec(config: &RunConfig) -> Result<ClaimSpec, CliError> {
    let section = config
        .claim
        .as_ref()
        .ok_or_else(|| CliError::config("missing [claim] section"))?;
    match section.kind.as_str() {
        "put" => Ok(ClaimSpec::put(section.strike)?),
        "call" => Ok(ClaimSpec::call(section.strike)?),
        other => Err(CliError::config(format!(
            "unknown claim kind '{other}' (known: put, call)"
        ))),
    }
}

pub fn pricing_method(config: &RunConfig) -> Result<PricingMethod, CliError> {
    let name = config
        .market
        .as_ref()
        .and_then(|m| m.method.as_deref())
        .unwrap_or("lattice");
    match name {
        "lattice" => Ok(PricingMethod::Lattice),
        "pde" => Ok(PricingMethod::Pde),
        "stopping" => Ok(PricingMethod::Stopping),
        other => Err(CliError::config(format!(
            "unknown pricing method '{other}' (known: lattice, pde, stopping)"
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClaimStyle {
    American,
    European,
}

pub fn claim_style(config: &RunConfig) -> Result<ClaimStyle, CliError> {
    let name = config
        .market
        .as_ref()
        .and_then(|m| m.style.as_deref())
        .unwrap_or("american");
    match name {
        "american" => Ok(ClaimStyle::American),
        "european" => Ok(ClaimStyle::European),
        other => Err(CliError::config(format!(
            "unknown claim style '{other}' (known: american, european)"
        ))),
    }
}

pub fn grid_steps(config: &RunConfig, default: usize) -> usize {
    config.grid.as_ref().map_or(default, |g| g.steps)
}

pub fn grid_intervals(config: &RunConfig) -> Option<usize> {
    config.grid.as_ref().and_then(|g| g.intervals)
}
