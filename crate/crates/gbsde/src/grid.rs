//! Uniform time and space grids for the backward schemes.

use crate::error::{Error, Result};

/// Uniform partition of `[t0, t_end]` into `steps` intervals (`steps + 1` nodes).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t0: f64,
    t_end: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t_end: f64, steps: usize) -> Result<Self> {
        if !t0.is_finite() || !t_end.is_finite() || t_end <= t0 {
            return Err(Error::InvalidInput(format!(
                "time grid requires finite t0 < t_end, got [{t0}, {t_end}]"
            )));
        }
        if steps == 0 {
            return Err(Error::InvalidInput("time grid requires at least 1 step".into()));
        }
        Ok(Self { t0, t_end, steps })
    }

    #[must_use]
    pub fn t0(&self) -> f64 {
        self.t0
    }

    #[must_use]
    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    /// Number of time intervals N; the grid has `N + 1` nodes.
    #[must_use]
    pub fn steps(&self) -> usize {
        self.steps
    }

    #[must_use]
    pub fn dt(&self) -> f64 {
        (self.t_end - self.t0) / self.steps as f64
    }

    /// The i-th time node, `t0 + i*dt`, exact at both ends.
    #[must_use]
    pub fn node(&self, i: usize) -> f64 {
        debug_assert!(i <= self.steps);
        if i == self.steps {
            self.t_end
        } else {
            self.t0 + self.dt() * i as f64
        }
    }
}

/// Uniform partition of `[x_min, x_max]` into `intervals` cells (`intervals + 1` nodes).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceGrid {
    x_min: f64,
    x_max: f64,
    intervals: usize,
}

impl SpaceGrid {
    pub fn new(x_min: f64, x_max: f64, intervals: usize) -> Result<Self> {
        if !x_min.is_finite() || !x_max.is_finite() || x_max <= x_min {
            return Err(Error::InvalidInput(format!(
                "space grid requires finite x_min < x_max, got [{x_min}, {x_max}]"
            )));
        }
        if intervals < 2 {
            return Err(Error::InvalidInput(
                "space grid requires at least 2 intervals (3 nodes) for a second difference".into(),
            ));
        }
        Ok(Self {
            x_min,
            x_max,
            intervals,
        })
    }

    /// Grid of `intervals` cells centered at `x0` with half-width `half_width`.
    pub fn centered(x0: f64, half_width: f64, intervals: usize) -> Result<Self> {
        if !half_width.is_finite() || half_width <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "centered grid requires positive finite half-width, got {half_width}"
            )));
        }
        Self::new(x0 - half_width, x0 + half_width, intervals)
    }

    #[must_use]
    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    #[must_use]
    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    /// Number of space intervals M; the grid has `M + 1` nodes.
    #[must_use]
    pub fn intervals(&self) -> usize {
        self.intervals
    }

    /// Number of nodes, `M + 1`.
    #[must_use]
    pub fn nodes(&self) -> usize {
        self.intervals + 1
    }

    #[must_use]
    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.intervals as f64
    }

    /// The j-th space node, exact at both ends.
    #[must_use]
    pub fn node(&self, j: usize) -> f64 {
        debug_assert!(j <= self.intervals);
        if j == self.intervals {
            self.x_max
        } else {
            self.x_min + self.dx() * j as f64
        }
    }

    /// Index of the grid node closest to `x`.
    #[must_use]
    pub fn nearest_node(&self, x: f64) -> usize {
        let j = ((x - self.x_min) / self.dx()).round();
        (j.max(0.0) as usize).min(self.intervals)
    }
}
