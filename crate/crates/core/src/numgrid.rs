//! Uniform 1-D grids, scalar fields on them, quadrature and difference stencils.
//!
//! Everything downstream (kernels, bridge factors, drifts, residuals) is a
//! [`ScalarField`] or a time-indexed [`FieldSeries`] on a [`Grid1D`].

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Density floor below which nodes are excluded from residual norms.
pub const TAIL_THRESHOLD: f64 = 1e-12;

/// Floor applied before logarithms and divisions.
pub const DIVISION_FLOOR: f64 = 1e-300;

/// Uniform grid `x_min + i h`, `i = 0..n_points`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid1D<T> {
    x_min: T,
    x_max: T,
    n_points: usize,
}

impl<T: Real> Grid1D<T> {
    pub fn new(x_min: T, x_max: T, n_points: usize) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite()) || x_min >= x_max {
            return Err(Error::InvalidGrid(format!(
                "need finite x_min < x_max, got [{x_min}, {x_max}]"
            )));
        }
        if n_points < 3 {
            return Err(Error::InvalidGrid(format!(
                "need at least 3 points, got {n_points}"
            )));
        }
        Ok(Self {
            x_min,
            x_max,
            n_points,
        })
    }

    /// `[-10, 10]` with 513 nodes.
    pub fn default_domain() -> Self {
        Self::new(T::lit(-10.0), T::lit(10.0), 513).expect("default grid is valid")
    }

    pub fn x_min(&self) -> T {
        self.x_min
    }

    pub fn x_max(&self) -> T {
        self.x_max
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> T {
        (self.x_max - self.x_min) / T::from_count(self.n_points - 1)
    }

    #[inline]
    pub fn node(&self, i: usize) -> T {
        self.x_min + T::from_count(i) * self.spacing()
    }

    pub fn nodes(&self) -> Vec<T> {
        let h = self.spacing();
        (0..self.n_points)
            .map(|i| self.x_min + T::from_count(i) * h)
            .collect()
    }

    /// Trapezoid weight of node `i`.
    #[inline]
    pub fn weight(&self, i: usize) -> T {
        let h = self.spacing();
        if i == 0 || i + 1 == self.n_points {
            h / T::lit(2.0)
        } else {
            h
        }
    }

    pub fn weights(&self) -> Vec<T> {
        (0..self.n_points).map(|i| self.weight(i)).collect()
    }

    pub fn center_index(&self) -> usize {
        (self.n_points - 1) / 2
    }

    /// Grid with every cell halved (`2n - 1` nodes); old node `i` is new node `2i`.
    pub fn refined(&self) -> Self {
        Self {
            n_points: 2 * self.n_points - 1,
            ..*self
        }
    }

    pub fn refined_by(&self, factor: usize) -> Self {
        Self {
            n_points: factor.max(1) * (self.n_points - 1) + 1,
            ..*self
        }
    }

    pub fn contains(&self, x: T) -> bool {
        x >= self.x_min && x <= self.x_max
    }

    /// Cell index `i` and fraction `f` with `x = node(i) + f h`, clamped to the grid.
    pub fn locate(&self, x: T) -> (usize, T) {
        let h = self.spacing();
        let pos = ((x - self.x_min) / h).max(T::zero());
        let last = self.n_points - 2;
        let i = pos.floor().to_usize().unwrap_or(last).min(last);
        let frac = (pos - T::from_count(i)).min(T::one());
        (i, frac)
    }

    /// Index of the node nearest to `x` (clamped).
    pub fn nearest(&self, x: T) -> usize {
        let (i, f) = self.locate(x);
        if f > T::lit(0.5) {
            i + 1
        } else {
            i
        }
    }
}

/// Uniform time lattice `t_start + k dt`, `k = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid<T> {
    t_start: T,
    t_end: T,
    n_steps: usize,
}

impl<T: Real> TimeGrid<T> {
    pub fn new(t_start: T, t_end: T, n_steps: usize) -> Result<Self> {
        if !(t_start.is_finite() && t_end.is_finite()) || t_start < T::zero() || t_start >= t_end {
            return Err(Error::InvalidGrid(format!(
                "need 0 <= t_start < t_end, got [{t_start}, {t_end}]"
            )));
        }
        if n_steps == 0 {
            return Err(Error::InvalidGrid("need at least one time step".into()));
        }
        Ok(Self {
            t_start,
            t_end,
            n_steps,
        })
    }

    /// 101 slices of `[0, t_end]`.
    pub fn default_lattice(t_end: T) -> Result<Self> {
        Self::new(T::zero(), t_end, 100)
    }

    pub fn t_start(&self) -> T {
        self.t_start
    }

    pub fn t_end(&self) -> T {
        self.t_end
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_slices(&self) -> usize {
        self.n_steps + 1
    }

    pub fn dt(&self) -> T {
        (self.t_end - self.t_start) / T::from_count(self.n_steps)
    }

    #[inline]
    pub fn time(&self, k: usize) -> T {
        if k == self.n_steps {
            self.t_end
        } else {
            self.t_start + T::from_count(k) * self.dt()
        }
    }

    pub fn times(&self) -> Vec<T> {
        (0..self.n_slices()).map(|k| self.time(k)).collect()
    }

    /// Halved time step; old slice `k` is new slice `2k`.
    pub fn refined(&self) -> Self {
        Self {
            n_steps: 2 * self.n_steps,
            ..*self
        }
    }

    /// Slice index `k` and fraction `f` with `t = time(k) + f dt`, clamped.
    pub fn locate(&self, t: T) -> (usize, T) {
        let pos = ((t - self.t_start) / self.dt()).max(T::zero());
        let last = self.n_steps - 1;
        let k = pos.floor().to_usize().unwrap_or(last).min(last);
        let frac = (pos - T::from_count(k)).min(T::one());
        (k, frac)
    }
}

/// Values of a real function on a grid at a time label.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField<T> {
    grid: Grid1D<T>,
    values: Vec<T>,
    time_label: T,
}

impl<T: Real> ScalarField<T> {
    pub fn new(grid: Grid1D<T>, values: Vec<T>, time_label: T) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        check_finite(&values)?;
        Ok(Self {
            grid,
            values,
            time_label,
        })
    }

    pub fn from_fn(grid: Grid1D<T>, time_label: T, f: impl Fn(T) -> T) -> Result<Self> {
        let values = grid.nodes().into_iter().map(f).collect();
        Self::new(grid, values, time_label)
    }

    pub fn constant(grid: Grid1D<T>, time_label: T, value: T) -> Result<Self> {
        Self::new(grid, vec![value; grid.len()], time_label)
    }

    pub fn grid(&self) -> &Grid1D<T> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn time_label(&self) -> T {
        self.time_label
    }

    pub fn with_time_label(mut self, t: T) -> Self {
        self.time_label = t;
        self
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Result<Self> {
        Self::new(
            self.grid,
            self.values.iter().map(|&v| f(v)).collect(),
            self.time_label,
        )
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Self::new(
            self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            self.time_label,
        )
    }

    pub fn scale(&self, a: T) -> Result<Self> {
        self.map(|v| a * v)
    }

    pub fn integrate(&self) -> Result<T> {
        integrate(self)
    }

    pub fn max_abs(&self) -> T {
        self.values
            .iter()
            .fold(T::zero(), |acc, &v| acc.max(v.abs()))
    }

    /// Linear interpolation, clamped to the end values outside the grid.
    pub fn interpolate(&self, x: T) -> T {
        interpolate_linear(&self.grid, &self.values, x)
    }
}

fn check_finite<T: Real>(values: &[T]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

/// Composite trapezoid rule over the whole grid.
pub fn integrate<T: Real>(f: &ScalarField<T>) -> Result<T> {
    check_finite(f.values())?;
    Ok(trapezoid(f.grid(), f.values()))
}

pub(crate) fn trapezoid<T: Real>(grid: &Grid1D<T>, values: &[T]) -> T {
    let n = values.len();
    let interior: T = values[1..n - 1].iter().copied().sum();
    grid.spacing() * (interior + (values[0] + values[n - 1]) / T::lit(2.0))
}

/// Second-order central differences inside, second-order one-sided at the ends.
pub fn gradient<T: Real>(f: &ScalarField<T>) -> Result<ScalarField<T>> {
    check_finite(f.values())?;
    let out = gradient_values(f.grid(), f.values());
    ScalarField::new(*f.grid(), out, f.time_label())
}

pub(crate) fn gradient_values<T: Real>(grid: &Grid1D<T>, v: &[T]) -> Vec<T> {
    let n = v.len();
    let two_h = T::lit(2.0) * grid.spacing();
    let mut out = vec![T::zero(); n];
    for i in 1..n - 1 {
        out[i] = (v[i + 1] - v[i - 1]) / two_h;
    }
    let (three, four) = (T::lit(3.0), T::lit(4.0));
    out[0] = (-three * v[0] + four * v[1] - v[2]) / two_h;
    out[n - 1] = (three * v[n - 1] - four * v[n - 2] + v[n - 3]) / two_h;
    out
}

/// Three-point second difference; boundary nodes copy their interior neighbour.
pub fn laplacian<T: Real>(f: &ScalarField<T>) -> Result<ScalarField<T>> {
    check_finite(f.values())?;
    let out = laplacian_values(f.grid(), f.values());
    ScalarField::new(*f.grid(), out, f.time_label())
}

pub(crate) fn laplacian_values<T: Real>(grid: &Grid1D<T>, v: &[T]) -> Vec<T> {
    let n = v.len();
    let h = grid.spacing();
    let h2 = h * h;
    let mut out = vec![T::zero(); n];
    for i in 1..n - 1 {
        out[i] = (v[i + 1] - T::lit(2.0) * v[i] + v[i - 1]) / h2;
    }
    out[0] = out[1];
    out[n - 1] = out[n - 2];
    out
}

/// Rescales a non-negative field to unit trapezoid mass.
pub fn normalize<T: Real>(f: &ScalarField<T>) -> Result<ScalarField<T>> {
    let mass = integrate(f)?;
    if !(mass > T::zero()) {
        return Err(Error::Normalization {
            mass: mass.as_f64(),
        });
    }
    f.map(|v| v / mass)
}

/// Cumulative trapezoid integral measured from node `anchor` (zero there).
///
/// Changing the anchor shifts the result by a constant.
pub fn cumulative_trapezoid<T: Real>(grid: &Grid1D<T>, v: &[T], anchor: usize) -> Vec<T> {
    let n = v.len();
    let half_h = grid.spacing() / T::lit(2.0);
    let mut from_left = vec![T::zero(); n];
    for i in 1..n {
        from_left[i] = from_left[i - 1] + half_h * (v[i - 1] + v[i]);
    }
    let offset = from_left[anchor.min(n - 1)];
    from_left.into_iter().map(|c| c - offset).collect()
}

/// Discrete antiderivative whose central difference reproduces `v` exactly at
/// interior nodes: one trapezoid step off the anchor, then leapfrog outwards.
pub fn central_antiderivative<T: Real>(grid: &Grid1D<T>, v: &[T], anchor: usize) -> Vec<T> {
    let n = v.len();
    let a = anchor.min(n - 2);
    let h = grid.spacing();
    let two_h = T::lit(2.0) * h;
    let mut out = vec![T::zero(); n];
    out[a + 1] = h * (v[a] + v[a + 1]) / T::lit(2.0);
    for i in a + 1..n - 1 {
        out[i + 1] = out[i - 1] + two_h * v[i];
    }
    for i in (1..=a).rev() {
        out[i - 1] = out[i + 1] - two_h * v[i];
    }
    out
}

/// Piecewise-linear interpolation of node values, clamped outside the grid.
pub fn interpolate_linear<T: Real>(grid: &Grid1D<T>, v: &[T], x: T) -> T {
    if x <= grid.x_min() {
        return v[0];
    }
    if x >= grid.x_max() {
        return v[v.len() - 1];
    }
    let (i, f) = grid.locate(x);
    v[i] + f * (v[i + 1] - v[i])
}

/// Four-point Lagrange interpolation of `ln v` for strictly positive node values.
///
/// Exact for Gaussian profiles, whose logarithm is quadratic.
pub fn interpolate_log_cubic<T: Real>(grid: &Grid1D<T>, log_v: &[T], x: T) -> T {
    let n = log_v.len();
    let (i, f) = grid.locate(x);
    let start = i.saturating_sub(1).min(n - 4);
    // local coordinate measured in cells from node `start`
    let s = T::from_count(i - start) + f;
    let mut acc = T::zero();
    for j in 0..4 {
        let mut basis = T::one();
        for m in 0..4 {
            if m != j {
                basis = basis * (s - T::from_count(m)) / (T::from_count(j) - T::from_count(m));
            }
        }
        acc = acc + basis * log_v[start + j];
    }
    acc.exp()
}

/// Time-indexed family of fields on one grid and one uniform time lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSeries<T> {
    grid: Grid1D<T>,
    times: TimeGrid<T>,
    data: Vec<Vec<T>>,
}

impl<T: Real> FieldSeries<T> {
    pub fn new(grid: Grid1D<T>, times: TimeGrid<T>, data: Vec<Vec<T>>) -> Result<Self> {
        if data.len() != times.n_slices() {
            return Err(Error::LengthMismatch {
                expected: times.n_slices(),
                got: data.len(),
            });
        }
        for row in &data {
            if row.len() != grid.len() {
                return Err(Error::LengthMismatch {
                    expected: grid.len(),
                    got: row.len(),
                });
            }
            check_finite(row)?;
        }
        Ok(Self { grid, times, data })
    }

    pub fn from_fn(grid: Grid1D<T>, times: TimeGrid<T>, f: impl Fn(T, T) -> T) -> Result<Self> {
        let nodes = grid.nodes();
        let data = times
            .times()
            .into_iter()
            .map(|t| nodes.iter().map(|&x| f(x, t)).collect())
            .collect();
        Self::new(grid, times, data)
    }

    pub fn from_slices(times: TimeGrid<T>, slices: Vec<ScalarField<T>>) -> Result<Self> {
        let grid = match slices.first() {
            Some(s) => *s.grid(),
            None => return Err(Error::InvalidArgument("no slices".into())),
        };
        if slices.iter().any(|s| *s.grid() != grid) {
            return Err(Error::GridMismatch);
        }
        Self::new(
            grid,
            times,
            slices.into_iter().map(ScalarField::into_values).collect(),
        )
    }

    pub fn grid(&self) -> &Grid1D<T> {
        &self.grid
    }

    pub fn times(&self) -> &TimeGrid<T> {
        &self.times
    }

    pub fn n_slices(&self) -> usize {
        self.data.len()
    }

    pub fn values(&self, k: usize) -> &[T] {
        &self.data[k]
    }

    #[inline]
    pub fn at(&self, k: usize, i: usize) -> T {
        self.data[k][i]
    }

    pub fn slice(&self, k: usize) -> ScalarField<T> {
        ScalarField {
            grid: self.grid,
            values: self.data[k].clone(),
            time_label: self.times.time(k),
        }
    }

    pub fn slices(&self) -> impl Iterator<Item = ScalarField<T>> + '_ {
        (0..self.n_slices()).map(|k| self.slice(k))
    }

    pub fn map_slices(
        &self,
        f: impl Fn(&ScalarField<T>) -> Result<ScalarField<T>>,
    ) -> Result<Self> {
        let slices = self.slices().map(|s| f(&s)).collect::<Result<Vec<_>>>()?;
        Self::from_slices(self.times, slices)
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.check_same_lattice(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect())
            .collect();
        Self::new(self.grid, self.times, data)
    }

    pub fn check_same_lattice(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid || self.times != other.times {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// Bilinear interpolation in `(x, t)`, clamped to the lattice.
    pub fn interpolate(&self, x: T, t: T) -> T {
        let (k, f) = self.times.locate(t);
        let a = interpolate_linear(&self.grid, &self.data[k], x);
        let b = interpolate_linear(&self.grid, &self.data[k + 1], x);
        a + f * (b - a)
    }

    /// Second-order time derivative: central inside, one-sided at the ends.
    #[allow(clippy::needless_range_loop)]
    pub fn time_derivative(&self) -> Result<Self> {
        let n = self.n_slices();
        if n < 3 {
            return Err(Error::InvalidArgument(
                "time derivative needs at least 3 slices".into(),
            ));
        }
        let dt = self.times.dt();
        let two_dt = T::lit(2.0) * dt;
        let (three, four) = (T::lit(3.0), T::lit(4.0));
        let m = self.grid.len();
        let mut out = vec![vec![T::zero(); m]; n];
        for i in 0..m {
            for k in 1..n - 1 {
                out[k][i] = (self.data[k + 1][i] - self.data[k - 1][i]) / two_dt;
            }
            out[0][i] =
                (-three * self.data[0][i] + four * self.data[1][i] - self.data[2][i]) / two_dt;
            out[n - 1][i] = (three * self.data[n - 1][i] - four * self.data[n - 2][i]
                + self.data[n - 3][i])
                / two_dt;
        }
        Self::new(self.grid, self.times, out)
    }

    /// Fourth-order time derivative: five-point central inside, five-point one-sided
    /// on the two slices at each end.
    #[allow(clippy::needless_range_loop)]
    pub fn time_derivative_fourth_order(&self) -> Result<Self> {
        let n = self.n_slices();
        if n < 5 {
            return Err(Error::InvalidArgument(
                "fourth-order time derivative needs at least 5 slices".into(),
            ));
        }
        let denom = T::lit(12.0) * self.times.dt();
        let c = |v: f64| T::lit(v);
        let m = self.grid.len();
        let mut out = vec![vec![T::zero(); m]; n];
        for i in 0..m {
            let f = |k: usize| self.data[k][i];
            for k in 2..n - 2 {
                out[k][i] = (f(k - 2) - c(8.0) * f(k - 1) + c(8.0) * f(k + 1) - f(k + 2)) / denom;
            }
            out[0][i] = (c(-25.0) * f(0) + c(48.0) * f(1) - c(36.0) * f(2) + c(16.0) * f(3)
                - c(3.0) * f(4))
                / denom;
            out[1][i] =
                (c(-3.0) * f(0) - c(10.0) * f(1) + c(18.0) * f(2) - c(6.0) * f(3) + f(4)) / denom;
            let l = n - 1;
            out[l][i] = (c(25.0) * f(l) - c(48.0) * f(l - 1) + c(36.0) * f(l - 2)
                - c(16.0) * f(l - 3)
                + c(3.0) * f(l - 4))
                / denom;
            out[l - 1][i] = (c(3.0) * f(l) + c(10.0) * f(l - 1) - c(18.0) * f(l - 2)
                + c(6.0) * f(l - 3)
                - f(l - 4))
                / denom;
        }
        Self::new(self.grid, self.times, out)
    }

    pub fn max_abs(&self) -> T {
        self.data
            .iter()
            .flatten()
            .fold(T::zero(), |acc, &v| acc.max(v.abs()))
    }
}

/// Which lattice nodes enter a residual norm.
#[derive(Debug, Clone, Copy)]
pub enum TailMask<'a, T> {
    All,
    /// Keep nodes where this density is at least the threshold.
    Density(&'a FieldSeries<T>, T),
}

impl<'a, T: Real> TailMask<'a, T> {
    pub fn density(rho: &'a FieldSeries<T>) -> Self {
        TailMask::Density(rho, T::lit(TAIL_THRESHOLD))
    }

    #[inline]
    pub fn keeps(&self, k: usize, i: usize) -> bool {
        match self {
            TailMask::All => true,
            TailMask::Density(rho, floor) => rho.at(k, i) >= *floor,
        }
    }
}

/// Maximum of `|r(k, i)|` over interior slices and interior nodes kept by the mask.
pub(crate) fn interior_max<T: Real>(
    grid: &Grid1D<T>,
    times: &TimeGrid<T>,
    mask: TailMask<'_, T>,
    r: impl Fn(usize, usize) -> T,
) -> T {
    let mut worst = T::zero();
    for k in 1..times.n_slices() - 1 {
        for i in 1..grid.len() - 1 {
            if mask.keeps(k, i) {
                worst = worst.max(r(k, i).abs());
            }
        }
    }
    worst
}

/// Solves a tridiagonal system in place (Thomas algorithm).
///
/// `lower[i]` multiplies `x[i-1]` and `upper[i]` multiplies `x[i+1]` in row `i`.
pub(crate) fn solve_tridiagonal<T: Real>(
    lower: &[T],
    diag: &[T],
    upper: &[T],
    rhs: &mut [T],
    scratch: &mut [T],
) {
    let n = diag.len();
    scratch[0] = upper[0] / diag[0];
    rhs[0] = rhs[0] / diag[0];
    for i in 1..n {
        let denom = diag[i] - lower[i] * scratch[i - 1];
        scratch[i] = if i + 1 < n {
            upper[i] / denom
        } else {
            T::zero()
        };
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        rhs[i] = rhs[i] - scratch[i] * rhs[i + 1];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::function::erf::erf;

    fn grid(a: f64, b: f64, n: usize) -> Grid1D<f64> {
        Grid1D::new(a, b, n).unwrap()
    }

    #[test]
    fn fourth_order_time_derivative_is_exact_on_quartics() {
        let g = grid(-1.0, 1.0, 5);
        let times = TimeGrid::new(0.0, 1.0, 8).unwrap();
        let f = FieldSeries::from_fn(g, times, |x, t| x * t.powi(4) - 2.0 * t.powi(3)).unwrap();
        let d = f.time_derivative_fourth_order().unwrap();
        for k in 0..times.n_slices() {
            let t = times.time(k);
            for (i, &x) in g.nodes().iter().enumerate() {
                let exact = 4.0 * x * t.powi(3) - 6.0 * t * t;
                assert!((d.at(k, i) - exact).abs() < 1e-11, "{k} {i}");
            }
        }
        let short = FieldSeries::from_fn(g, TimeGrid::new(0.0, 1.0, 3).unwrap(), |x, _| x).unwrap();
        assert!(short.time_derivative_fourth_order().is_err());
    }

    #[test]
    fn grid_invariants() {
        assert!(Grid1D::new(1.0, 1.0, 10).is_err());
        assert!(Grid1D::new(0.0, 1.0, 2).is_err());
        let g = grid(-1.0, 1.0, 5);
        assert_eq!(g.spacing(), 0.5);
        assert_eq!(g.nodes(), vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert_eq!(g.center_index(), 2);
        assert_eq!(g.refined().len(), 9);
        assert_eq!(g.refined().node(2), g.node(1));
    }

    #[test]
    fn time_grid_invariants() {
        assert!(TimeGrid::new(-0.1, 1.0, 10).is_err());
        assert!(TimeGrid::new(1.0, 1.0, 10).is_err());
        let t = TimeGrid::default_lattice(1.0).unwrap();
        assert_eq!(t.n_slices(), 101);
        assert_eq!(t.time(100), 1.0);
        assert!((t.time(1) - 0.01f64).abs() < 1e-15);
    }

    #[test]
    fn integrate_constant_is_exact() {
        for n in [3, 4, 17, 100] {
            let f = ScalarField::constant(grid(0.0, 1.0, n), 0.0, 1.0).unwrap();
            assert_eq!(integrate(&f).unwrap(), 1.0);
        }
    }

    #[test]
    fn integrate_gaussian_against_erf() {
        let g = grid(-10.0, 10.0, 2001);
        let f = ScalarField::from_fn(g, 0.0, |x| {
            (-x * x / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt()
        })
        .unwrap();
        let oracle = erf(10.0 / 2f64.sqrt());
        assert!((integrate(&f).unwrap() - oracle).abs() < 1e-8);
        assert!((integrate(&f).unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn integrate_odd_function_vanishes() {
        let f = ScalarField::from_fn(grid(-3.0, 3.0, 101), 0.0, |x| x).unwrap();
        assert!(integrate(&f).unwrap().abs() < 1e-12);
    }

    #[test]
    fn integrate_rejects_non_finite() {
        let g = grid(0.0, 1.0, 3);
        assert_eq!(
            ScalarField::new(g, vec![0.0, f64::NAN, 1.0], 0.0),
            Err(Error::NonFinite { index: 1 })
        );
    }

    #[test]
    fn gradient_of_quadratic_is_exact() {
        let g = grid(-2.0, 3.0, 41);
        let f = ScalarField::from_fn(g, 0.0, |x| x * x).unwrap();
        let d = gradient(&f).unwrap();
        for (x, v) in g.nodes().iter().zip(d.values()) {
            assert!((v - 2.0 * x).abs() < 1e-12);
        }
        let c = ScalarField::constant(g, 0.0, 4.2).unwrap();
        assert!(gradient(&c).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn gradient_converges_at_second_order() {
        let err = |n| {
            let g = grid(0.0, 3.0, n);
            let d = gradient(&ScalarField::from_fn(g, 0.0, f64::sin).unwrap()).unwrap();
            g.nodes()
                .iter()
                .zip(d.values())
                .map(|(x, v)| (v - x.cos()).abs())
                .fold(0.0, f64::max)
        };
        let ratio = err(101) / err(201);
        assert!((ratio - 4.0).abs() < 0.2, "ratio {ratio}");
        assert!(ratio.log2() >= 1.9);
    }

    #[test]
    fn laplacian_stencil() {
        let g = grid(-2.0, 2.0, 41);
        let f = ScalarField::from_fn(g, 0.0, |x| x * x).unwrap();
        let l = laplacian(&f).unwrap();
        assert!(l.values()[1..40].iter().all(|v| (v - 2.0).abs() < 1e-10));
        assert_eq!(l.values()[0], l.values()[1]);

        let err = |n| {
            let g = grid(-6.0, 6.0, n);
            let f = ScalarField::from_fn(g, 0.0, |x| (-x * x / 2.0).exp()).unwrap();
            let l = laplacian(&f).unwrap();
            g.nodes()
                .iter()
                .zip(l.values())
                .skip(1)
                .take(n - 2)
                .map(|(x, v)| (v - (x * x - 1.0) * (-x * x / 2.0).exp()).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(121), err(241));
        assert!(e1 < 0.01);
        assert!((e1 / e2).log2() >= 1.9);
    }

    #[test]
    fn normalize_behaviour() {
        let g = grid(0.0, 1.0, 11);
        let f = ScalarField::constant(g, 0.0, 2.0).unwrap();
        let n = normalize(&f).unwrap();
        assert!(n.values().iter().all(|v| (v - 1.0).abs() < 1e-12));

        let g = grid(-10.0, 10.0, 513);
        let f = ScalarField::from_fn(g, 0.0, |x| (-x * x / 2.0).exp()).unwrap();
        let n = normalize(&f).unwrap();
        assert!((integrate(&n).unwrap() - 1.0).abs() < 1e-12);
        let peak = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        assert!((n.values()[256] - peak).abs() < 1e-10);

        let z = ScalarField::constant(g, 0.0, 0.0).unwrap();
        assert!(matches!(normalize(&z), Err(Error::Normalization { .. })));
    }

    #[test]
    fn antiderivatives() {
        let g = grid(-5.0, 5.0, 101);
        let v: Vec<f64> = g.nodes().iter().map(|x| x.sin() + 0.3 * x).collect();
        let phi = central_antiderivative(&g, &v, g.center_index());
        let back = gradient_values(&g, &phi);
        for i in 1..100 {
            assert!((back[i] - v[i]).abs() < 1e-12);
        }
        let c1 = cumulative_trapezoid(&g, &v, 10);
        let c2 = cumulative_trapezoid(&g, &v, 70);
        let shift = c1[0] - c2[0];
        assert!(c1
            .iter()
            .zip(&c2)
            .all(|(a, b)| (a - b - shift).abs() < 1e-12));
    }

    #[test]
    fn log_cubic_interpolation_is_exact_for_gaussians() {
        let g = grid(-4.0, 4.0, 33);
        let logs: Vec<f64> = g.nodes().iter().map(|x| -0.3 * x * x + 0.1 * x).collect();
        for x in [-3.99, -1.234, 0.0, 2.5, 3.99] {
            let exact: f64 = -0.3 * x * x + 0.1 * x;
            let got = interpolate_log_cubic(&g, &logs, x);
            assert!((got / exact.exp() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn tridiagonal_matches_dense_product() {
        let lower = [0.0, -1.0, -1.0, -1.0];
        let diag = [4.0, 4.0, 4.0, 4.0];
        let upper = [-1.0, -1.0, -1.0, 0.0];
        let x = [1.0, 2.0, -1.0, 0.5];
        let mut rhs: Vec<f64> = (0..4)
            .map(|i| {
                diag[i] * x[i]
                    + if i > 0 { lower[i] * x[i - 1] } else { 0.0 }
                    + if i < 3 { upper[i] * x[i + 1] } else { 0.0 }
            })
            .collect();
        let mut scratch = [0.0; 4];
        solve_tridiagonal(&lower, &diag, &upper, &mut rhs, &mut scratch);
        for i in 0..4 {
            assert!((rhs[i] - x[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn series_time_derivative() {
        let g = grid(0.0, 1.0, 5);
        let t = TimeGrid::new(0.0, 1.0, 10).unwrap();
        let s = FieldSeries::from_fn(g, t, |x, t| x + t * t).unwrap();
        let d = s.time_derivative().unwrap();
        for k in 0..11 {
            assert!((d.at(k, 2) - 2.0 * t.time(k)).abs() < 1e-12);
        }
        assert!((s.interpolate(0.5, 0.55) - (0.5 + 0.5 * (0.25 + 0.36))).abs() < 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn integrate_is_linear(a in -5.0..5.0f64, b in -5.0..5.0f64, p in 0.1..3.0f64) {
                let g = grid(-4.0, 4.0, 129);
                let f = ScalarField::from_fn(g, 0.0, |x| (p * x).sin() + 1.0).unwrap();
                let h = ScalarField::from_fn(g, 0.0, |x| (-x * x * p).exp()).unwrap();
                let combo = ScalarField::from_fn(g, 0.0, |x| a * ((p * x).sin() + 1.0) + b * (-x * x * p).exp()).unwrap();
                let lhs = integrate(&combo).unwrap();
                let rhs = a * integrate(&f).unwrap() + b * integrate(&h).unwrap();
                prop_assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()));
            }

            #[test]
            fn stencils_respect_parity(p in 0.2..2.0f64) {
                let g = grid(-3.0, 3.0, 61);
                let odd = ScalarField::from_fn(g, 0.0, |x| (p * x).sin() * (-x * x).exp()).unwrap();
                let d = gradient(&odd).unwrap();
                let l = laplacian(&odd).unwrap();
                let n = g.len();
                for i in 0..n {
                    prop_assert!((d.values()[i] - d.values()[n - 1 - i]).abs() < 1e-12);
                    prop_assert!((l.values()[i] + l.values()[n - 1 - i]).abs() < 1e-10);
                }
            }
        }
    }
}
