//! Deterministic artifact emission: CSV surfaces, ladders, prices,
//! boundaries, convergence tables, and key=value reports.
//!
//! Every file is built in memory and written atomically (temp file + rename)
//! so a crashed run never leaves a half-written artifact. Floats use Rust's
//! shortest round-trip formatting, which is deterministic and parses back to
//! the identical bit pattern.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use gbsde::rbsde::PenalizationLadder;
use gbsde::surface::Surface;

use crate::CliError;

/// Columns at each side of the space grid governed by the far-field closure
/// rather than the equation; boundary extraction skips them.
const CLOSURE_COLS: usize = 2;

/// Relative scale of the contact threshold `dA/dt > eps * (1 + max|Y|)`.
const CONTACT_RATE_EPS: f64 = 1e-3;

pub fn fmt_f(v: f64) -> String {
    if v == 0.0 {
        "0".into() // normalizes -0.0 so byte-compares are stable
    } else {
        format!("{v}")
    }
}

fn write_atomic(path: &Path, content: &str) -> io::Result<()> {
    let mut tmp = path.as_os_str().to_os_string();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, content)?;
    fs::rename(&tmp, path)
}

pub fn emit(dir: &Path, name: &str, content: &str) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::config(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    write_atomic(&path, content)
        .map_err(|e| CliError::config(format!("cannot write {}: {e}", path.display())))
}

pub fn surface_csv(surface: &Surface) -> String {
    let rows = surface.y.rows();
    let cols = surface.y.cols();
    let mut out = String::with_capacity(rows * cols * 48);
    out.push_str("i,t,j,x,Y,Z,dA,sigma_star\n");
    for i in 0..rows {
        let t = fmt_f(surface.time.node(i));
        for j in 0..cols {
            out.push_str(&format!(
                "{i},{t},{j},{x},{y},{z},{da},{s}\n",
                x = fmt_f(surface.space.node(j)),
                y = fmt_f(surface.y.at(i, j)),
                z = fmt_f(surface.z.at(i, j)),
                da = fmt_f(surface.da.at(i, j)),
                s = fmt_f(surface.sigma_star.at(i, j)),
            ));
        }
    }
    out
}

pub fn ladder_csv(ladder: &PenalizationLadder) -> String {
    let mut out = String::new();
    out.push_str("level,n,gap_from_previous,obstacle_deficit,penalty_mass_sup,y_sup,z_norm\n");
    for (k, level) in ladder.levels.iter().enumerate() {
        out.push_str(&format!(
            "{k},{n},{gap},{deficit},{mass},{y},{z}\n",
            n = level.n,
            gap = level.gap_from_previous.map(fmt_f).unwrap_or_default(),
            deficit = fmt_f(level.obstacle_deficit),
            mass = fmt_f(level.penalty_mass_sup),
            y = fmt_f(level.y_sup),
            z = fmt_f(level.z_norm),
        ));
    }
    out
}

/// Contact rows per time step, in price units (`s = exp(x)`).
///
/// A node is in contact when its booked reflection *rate* exceeds
/// `1e-3 * (1 + max|Y|)`, i.e. `dA(i, j) > dt * tol`. Thresholding the rate
/// rather than the raw increment matters: the one-step scheme loses
/// `exp(x) * sigma^2 * dt * dx^2 / 24` on exponential payoffs (its second
/// difference of `exp` undershoots the true convexity), so smooth regions
/// book a spurious increment at an `O(dx^2)` rate that vanishes under
/// refinement, while a genuine exercise region books reflection at an `O(1)`
/// rate set by the driver and obstacle. The outermost `CLOSURE_COLS` columns
/// per side follow the linear far-field closure rather than the equation and
/// are excluded, so closure clipping never masquerades as an exercise region.
pub fn boundary_csv(surface: &Surface) -> String {
    let rows = surface.y.rows();
    let cols = surface.y.cols();
    let scale = surface.y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let tol = surface.time.dt() * CONTACT_RATE_EPS * (1.0 + scale);
    let mut out = String::new();
    out.push_str("i,t,s_low,s_high,contact_nodes\n");
    if cols <= 2 * CLOSURE_COLS {
        return out;
    }
    for i in 0..rows.saturating_sub(1) {
        let mut lo: Option<usize> = None;
        let mut hi = 0usize;
        let mut count = 0usize;
        for j in CLOSURE_COLS..cols - CLOSURE_COLS {
            if surface.da.at(i, j) > tol {
                lo.get_or_insert(j);
                hi = j;
                count += 1;
            }
        }
        if let Some(lo) = lo {
            out.push_str(&format!(
                "{i},{t},{sl},{sh},{count}\n",
                t = fmt_f(surface.time.node(i)),
                sl = fmt_f(surface.space.node(lo).exp()),
                sh = fmt_f(surface.space.node(hi).exp()),
            ));
        }
    }
    out
}

pub struct ConvergenceRow {
    pub level: u32,
    pub steps: usize,
    pub intervals: usize,
    pub dt: f64,
    pub dx: f64,
    pub value: f64,
    pub change: Option<f64>,
}

pub fn convergence_csv(rows: &[ConvergenceRow]) -> String {
    let mut out = String::new();
    out.push_str("level,steps,intervals,dt,dx,value,change\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.level,
            r.steps,
            r.intervals,
            fmt_f(r.dt),
            fmt_f(r.dx),
            fmt_f(r.value),
            r.change.map(fmt_f).unwrap_or_default(),
        ));
    }
    out
}

pub struct PriceRow {
    pub method: String,
    pub style: String,
    pub kind: String,
    pub strike: f64,
    pub steps: usize,
    pub intervals: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub dt: f64,
    pub dx: f64,
    pub h_up: f64,
    pub oracle: Option<f64>,
    pub oracle_kind: Option<&'static str>,
}

pub fn price_csv(row: &PriceRow) -> String {
    format!(
        "method,style,kind,strike,steps,intervals,x_min,x_max,dt,dx,h_up,oracle,oracle_kind\n\
         {},{},{},{},{},{},{},{},{},{},{},{},{}\n",
        row.method,
        row.style,
        row.kind,
        fmt_f(row.strike),
        row.steps,
        row.intervals,
        fmt_f(row.x_min),
        fmt_f(row.x_max),
        fmt_f(row.dt),
        fmt_f(row.dx),
        fmt_f(row.h_up),
        row.oracle.map(fmt_f).unwrap_or_default(),
        row.oracle_kind.unwrap_or_default(),
    )
}

pub struct OracleRow {
    pub name: &'static str,
    pub sigma: f64,
    pub steps: Option<usize>,
    pub value: f64,
}

pub fn oracle_csv(rows: &[OracleRow]) -> String {
    let mut out = String::new();
    out.push_str("name,sigma,steps,value\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.name,
            fmt_f(r.sigma),
            r.steps.map(|s| s.to_string()).unwrap_or_default(),
            fmt_f(r.value),
        ));
    }
    out
}

/// A key=value report in insertion order, one pair per line.
#[derive(Default)]
pub struct Report {
    lines: Vec<(String, String)>,
}

impl Report {
    pub fn new(command: &str) -> Self {
        let mut report = Self::default();
        report.push("command", command);
        report
    }

    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.lines.push((key.to_string(), value.to_string()));
    }

    pub fn push_f(&mut self, key: &str, value: f64) {
        self.lines.push((key.to_string(), fmt_f(value)));
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.lines {
            out.push_str(k);
            out.push('=');
            out.push_str(v);
            out.push('\n');
        }
        out
    }
}
