//! `gbsde price`: American superhedging price (or European reference price)
//! for a put/call under the configured volatility band.

use std::path::Path;

use gbsde::grid::TimeGrid;
use gbsde::lattice;
use gbsde::market::{
    self, bs_closed_form, crr_american_oracle, extract_hedge, ClaimSpec, MarketModel,
    PricingMethod,
};
use gbsde::paths::VolatilityControl;
use gbsde::surface::Surface;

use crate::artifacts::{self, ConvergenceRow, PriceRow, Report};
use crate::config::{self, ClaimStyle, RunConfig};
use crate::CliError;

const MC_PATHS: usize = 4096;
const DEFAULT_STEPS: usize = 200;

fn method_name(method: PricingMethod) -> &'static str {
    match method {
        PricingMethod::Lattice => "lattice",
        PricingMethod::Pde => "pde",
        PricingMethod::Stopping => "stopping",
    }
}

fn style_name(style: ClaimStyle) -> &'static str {
    match style {
        ClaimStyle::American => "american",
        ClaimStyle::European => "european",
    }
}

fn price_once(
    model: &MarketModel,
    claim: &ClaimSpec,
    steps: usize,
    intervals: Option<usize>,
    method: PricingMethod,
    style: ClaimStyle,
) -> Result<(f64, Surface), CliError> {
    match style {
        ClaimStyle::American => {
            let result = market::price_american(model, claim, steps, intervals, method)?;
            Ok((result.h_up, result.surface))
        }
        ClaimStyle::European => Ok(market::price_european(model, claim, steps, intervals, method)?),
    }
}

/// The reference oracle co-emitted when the band is degenerate: the
/// same-step-count binomial for American claims, the closed form for
/// European ones.
fn degenerate_oracle(
    model: &MarketModel,
    claim: &ClaimSpec,
    steps: usize,
    style: ClaimStyle,
) -> Result<Option<(f64, &'static str)>, CliError> {
    let band = model.band();
    if band.sigma_low() < band.sigma_high() {
        return Ok(None);
    }
    let sigma = band.sigma_high();
    Ok(Some(match style {
        ClaimStyle::American => (crr_american_oracle(sigma, model, claim, steps)?, "crr"),
        ClaimStyle::European => (bs_closed_form(sigma, model, claim)?, "bs"),
    }))
}

pub fn run(config: &RunConfig, out: &Path, seed: u64, grid_refine: u32) -> Result<(), CliError> {
    let model = config::market_model(config)?;
    let claim = config::claim_spec(config)?;
    let method = config::pricing_method(config)?;
    let style = config::claim_style(config)?;
    let steps = config::grid_steps(config, DEFAULT_STEPS);
    let intervals = config::grid_intervals(config);

    let (h_up, surface) = price_once(&model, &claim, steps, intervals, method, style)?;
    let oracle = degenerate_oracle(&model, &claim, steps, style)?;

    let kind = claim.kind_label().to_string();
    let row = PriceRow {
        method: method_name(method).into(),
        style: style_name(style).into(),
        kind,
        strike: claim.strike(),
        steps: surface.time.steps(),
        intervals: surface.space.intervals(),
        x_min: surface.space.x_min(),
        x_max: surface.space.x_max(),
        dt: surface.time.dt(),
        dx: surface.space.dx(),
        h_up,
        oracle: oracle.map(|(v, _)| v),
        oracle_kind: oracle.map(|(_, k)| k),
    };

    let mut report = Report::new("price");
    report.push("label", surface.meta.label.clone());
    report.push("method", row.method.clone());
    report.push("style", row.style.clone());
    report.push("kind", row.kind.clone());
    report.push_f("strike", claim.strike());
    report.push_f("rate", model.rate());
    report.push_f("spot", model.spot());
    report.push_f("maturity", model.maturity());
    report.push_f("band-low", model.band().sigma_low());
    report.push_f("band-high", model.band().sigma_high());
    report.push("steps", row.steps);
    report.push("intervals", row.intervals);
    report.push_f("dt", row.dt);
    report.push_f("dx", row.dx);
    report.push("seed", seed);
    report.push_f("h-up", h_up);
    if let Some((value, kind)) = oracle {
        report.push_f("oracle", value);
        report.push("oracle-kind", kind);
    }

    // A fixed-volatility European simulation lower-bounds the worst-case
    // European value, which the American price dominates in turn.
    let problem = market::european_problem(&model, &claim);
    let tg = TimeGrid::new(0.0, model.maturity(), steps)?;
    let control = VolatilityControl::constant(model.band().sigma_high(), steps, &model.band())?;
    let mc = lattice::monte_carlo_lower_bound(
        &problem,
        &tg,
        model.spot().ln(),
        &control,
        MC_PATHS,
        seed,
    )?;
    report.push_f("mc-european-lower-bound", mc.mean);
    report.push_f("mc-std-error", mc.std_error);
    report.push("mc-paths", mc.n_paths);

    let hedge = extract_hedge(&surface, &claim);
    report.push_f("hedge-eps", hedge.eps_used);
    report.push("hedge-undefined-nodes", hedge.undefined_nodes);
    report.push("fingerprint", surface.meta.fingerprint);

    artifacts::emit(out, "surface.csv", &artifacts::surface_csv(&surface))?;
    artifacts::emit(out, "price.csv", &artifacts::price_csv(&row))?;
    if style == ClaimStyle::American {
        artifacts::emit(out, "boundary.csv", &artifacts::boundary_csv(&surface))?;
    }
    if grid_refine > 0 {
        if grid_refine > 5 {
            return Err(CliError::config(format!(
                "grid-refine is capped at 5 levels (4^k step growth), got {grid_refine}"
            )));
        }
        let base_intervals = surface.space.intervals();
        let mut rows = Vec::new();
        let mut previous: Option<f64> = None;
        for level in 0..=grid_refine {
            let steps_l = steps * 4usize.pow(level);
            let intervals_l = base_intervals * 2usize.pow(level);
            let (value, s) = price_once(&model, &claim, steps_l, Some(intervals_l), method, style)?;
            rows.push(ConvergenceRow {
                level,
                steps: s.time.steps(),
                intervals: s.space.intervals(),
                dt: s.time.dt(),
                dx: s.space.dx(),
                value,
                change: previous.map(|p| value - p),
            });
            previous = Some(value);
        }
        artifacts::emit(out, "convergence.csv", &artifacts::convergence_csv(&rows))?;
        report.push("refine-levels", grid_refine + 1);
    }
    artifacts::emit(out, "report.txt", &report.render())?;
    Ok(())
}
