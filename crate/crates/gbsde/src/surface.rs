//! Solution surfaces: dense `(time node) x (space node)` fields produced by
//! the backward solvers.

use crate::grid::{SpaceGrid, TimeGrid};

/// Dense row-major matrix over `(N+1) x (M+1)` grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Field {
    #[must_use]
    pub fn new(rows: usize, cols: usize, fill: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![fill; rows * cols],
        }
    }

    #[must_use]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[must_use]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    #[must_use]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] = v;
    }

    /// Row `i` as a slice (one time layer).
    #[must_use]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Maximum of `|self - other|` over all nodes.
    #[must_use]
    pub fn max_abs_diff(&self, other: &Field) -> f64 {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Most negative value of `other - self` over all nodes (0 when
    /// `other >= self` everywhere); measures ordering violations.
    #[must_use]
    pub fn max_decrease_to(&self, other: &Field) -> f64 {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .fold(0.0, f64::max)
    }

    /// Maximum absolute value over all nodes.
    #[must_use]
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.data.iter().copied()
    }
}

/// How the backward recursion treats the obstacle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// No obstacle: plain backward recursion.
    Plain,
    /// Penalty term `n * (y - h)^- ` added to the driver (approximating
    /// reflection from below as the penalty grows).
    Penalized(u64),
    /// Exact nodewise projection `Y = max(continuation, h)`.
    Projected,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mode::Plain => write!(f, "plain"),
            Mode::Penalized(n) => write!(f, "penalized({n})"),
            Mode::Projected => write!(f, "projected"),
        }
    }
}

/// Identification attached to an emitted surface.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceMeta {
    pub label: String,
    pub mode: String,
    pub fingerprint: u64,
}

/// Penalty-mode diagnostics: the penalty increments `dL` and the one-step
/// identity residual `dK` (see `lattice::rollback`).
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyLayers {
    pub n: u64,
    pub dl: Field,
    pub dk: Field,
}

/// Output of a backward solve.
///
/// Index convention: `[i][j]` is time node `i` (0 = today, N = maturity) and
/// space node `j`. `da[i][j]` is the reflection increment booked over
/// `[t_i, t_{i+1}]` (row N is identically 0); `z` is the diffusion-scaled
/// space gradient of the solved layer; `sigma_star` is the maximizing
/// endpoint volatility of the step taken *from* layer `i` (row N carries the
/// tie convention `sigma_high`).
#[derive(Debug, Clone)]
pub struct Surface {
    pub y: Field,
    pub z: Field,
    pub da: Field,
    pub sigma_star: Field,
    pub penalty: Option<PenaltyLayers>,
    pub time: TimeGrid,
    pub space: SpaceGrid,
    pub meta: SurfaceMeta,
}

impl Surface {
    /// Value at time node 0 and the space node nearest to `x0`.
    #[must_use]
    pub fn value_at_start(&self, x0: f64) -> f64 {
        self.y.at(0, self.space.nearest_node(x0))
    }

    /// Total reflection mass along one space node: `sum_i da[i][j]`.
    #[must_use]
    pub fn total_reflection_at(&self, j: usize) -> f64 {
        (0..self.y.rows()).map(|i| self.da.at(i, j)).sum()
    }
}
