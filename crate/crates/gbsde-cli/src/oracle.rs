//! `gbsde oracle`: classical single-volatility reference values for the
//! configured claim — closed forms at the band endpoints and, for American
//! claims, the binomial value at the same step count the solvers would use.

use std::path::Path;

use gbsde::market::{bs_closed_form, crr_american_oracle};

use crate::artifacts::{self, OracleRow, Report};
use crate::config::{self, RunConfig};
use crate::CliError;

const DEFAULT_STEPS: usize = 500;

pub fn run(config: &RunConfig, out: &Path, seed: u64) -> Result<(), CliError> {
    let model = config::market_model(config)?;
    let claim = config::claim_spec(config)?;
    let steps = config::grid_steps(config, DEFAULT_STEPS);
    let band = model.band();
    let degenerate = band.sigma_low() == band.sigma_high();

    let mut rows = Vec::new();
    if degenerate {
        let sigma = band.sigma_high();
        rows.push(OracleRow {
            name: "bs",
            sigma,
            steps: None,
            value: bs_closed_form(sigma, &model, &claim)?,
        });
        rows.push(OracleRow {
            name: "crr",
            sigma,
            steps: Some(steps),
            value: crr_american_oracle(sigma, &model, &claim, steps)?,
        });
    } else {
        for (name, crr_name, sigma) in [
            ("bs-low", "crr-low", band.sigma_low()),
            ("bs-high", "crr-high", band.sigma_high()),
        ] {
            rows.push(OracleRow {
                name,
                sigma,
                steps: None,
                value: bs_closed_form(sigma, &model, &claim)?,
            });
            if sigma > 0.0 {
                rows.push(OracleRow {
                    name: crr_name,
                    sigma,
                    steps: Some(steps),
                    value: crr_american_oracle(sigma, &model, &claim, steps)?,
                });
            }
        }
    }

    let mut report = Report::new("oracle");
    report.push("kind", claim.kind_label());
    report.push_f("strike", claim.strike());
    report.push_f("rate", model.rate());
    report.push_f("spot", model.spot());
    report.push_f("maturity", model.maturity());
    report.push_f("band-low", band.sigma_low());
    report.push_f("band-high", band.sigma_high());
    report.push("steps", steps);
    report.push("seed", seed);
    for row in &rows {
        report.push_f(row.name, row.value);
    }

    artifacts::emit(out, "oracle.csv", &artifacts::oracle_csv(&rows))?;
    artifacts::emit(out, "report.txt", &report.render())?;
    Ok(())
}
