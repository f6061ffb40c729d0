//! Named pass/fail checks and grid-refinement order estimates.

use std::fmt;

use crate::error::{Error, Result};
use crate::numgrid::{Grid1D, TimeGrid};
use crate::scalar::Real;

/// Acceptance band for a checked value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bound<T> {
    /// `value <= limit`.
    Below(T),
    /// `value > limit`.
    Above(T),
    /// `lo <= value <= hi`.
    Between(T, T),
}

impl<T: Real> Bound<T> {
    pub fn admits(&self, value: T) -> bool {
        match *self {
            Bound::Below(limit) => value <= limit,
            Bound::Above(limit) => value > limit,
            Bound::Between(lo, hi) => lo <= value && value <= hi,
        }
    }
}

impl<T: Real> fmt::Display for Bound<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bound::Below(limit) => write!(f, "<= {limit:e}"),
            Bound::Above(limit) => write!(f, "> {limit:e}"),
            Bound::Between(lo, hi) => write!(f, "in [{lo}, {hi}]"),
        }
    }
}

/// One measured quantity against its bound.
#[derive(Debug, Clone, PartialEq)]
pub struct Check<T> {
    pub name: String,
    pub value: T,
    pub bound: Bound<T>,
    pub passed: bool,
}

impl<T: Real> Check<T> {
    pub fn new(name: impl Into<String>, value: T, bound: Bound<T>) -> Self {
        Self {
            name: name.into(),
            value,
            passed: value.is_finite() && bound.admits(value),
            bound,
        }
    }
}

impl<T: Real> fmt::Display for Check<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(
            f,
            "{verdict} {}: {:.6e} ({})",
            self.name, self.value, self.bound
        )
    }
}

/// Ordered list of checks produced by one suite.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport<T> {
    pub suite: String,
    pub checks: Vec<Check<T>>,
}

impl<T: Real> SuiteReport<T> {
    pub fn new(suite: impl Into<String>) -> Self {
        Self {
            suite: suite.into(),
            checks: Vec::new(),
        }
    }

    pub fn push(&mut self, check: Check<T>) {
        log::debug!("{}: {check}", self.suite);
        self.checks.push(check);
    }

    pub fn below(&mut self, name: impl Into<String>, value: T, limit: f64) {
        self.push(Check::new(name, value, Bound::Below(T::lit(limit))));
    }

    pub fn above(&mut self, name: impl Into<String>, value: T, limit: f64) {
        self.push(Check::new(name, value, Bound::Above(T::lit(limit))));
    }

    /// Records the refinement ratio of an [`OrderCheck`] against `[3.5, 4.5]`.
    pub fn second_order(&mut self, name: impl Into<String>, order: OrderCheck<T>) {
        self.push(Check::new(
            name,
            order.ratio(),
            Bound::Between(T::lit(SECOND_ORDER_BAND.0), T::lit(SECOND_ORDER_BAND.1)),
        ));
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check<T>> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check<T>> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// The report itself, or [`Error::CheckFailed`] naming every failed check.
    pub fn ensure_passed(self) -> Result<Self> {
        if self.passed() {
            return Ok(self);
        }
        let checks = self
            .failures()
            .map(|c| c.name.clone())
            .collect::<Vec<_>>()
            .join(", ");
        Err(Error::CheckFailed {
            suite: self.suite,
            checks,
        })
    }
}

impl<T: Real> fmt::Display for SuiteReport<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "suite {}", self.suite)?;
        for c in &self.checks {
            writeln!(f, "  {c}")?;
        }
        let failed = self.failures().count();
        write!(
            f,
            "{} of {} checks passed",
            self.checks.len() - failed,
            self.checks.len()
        )
    }
}

/// Band accepted for the coarse/fine residual ratio of a second-order scheme.
pub const SECOND_ORDER_BAND: (f64, f64) = (3.5, 4.5);

/// A residual measured on a lattice and on its refinement in both `h` and `dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderCheck<T> {
    pub coarse: T,
    pub fine: T,
}

impl<T: Real> OrderCheck<T> {
    /// `coarse / fine`: about 4 for a second-order residual.
    pub fn ratio(&self) -> T {
        self.coarse / self.fine
    }

    /// Empirical order `log2(coarse / fine)`.
    pub fn order(&self) -> T {
        self.ratio().log2()
    }
}

/// Evaluates `residual` on `(grid, times)` and on `(grid.refined(), times.refined())`.
pub fn convergence_order<T: Real>(
    grid: &Grid1D<T>,
    times: &TimeGrid<T>,
    residual: impl Fn(&Grid1D<T>, &TimeGrid<T>) -> Result<T>,
) -> Result<OrderCheck<T>> {
    Ok(OrderCheck {
        coarse: residual(grid, times)?,
        fine: residual(&grid.refined(), &times.refined())?,
    })
}
