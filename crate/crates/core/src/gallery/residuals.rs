//! Finite-difference residuals of the evolution equations on the closed-form
//! fields. Each function samples its fields on `(grid, times)`, or on a time
//! window with the step of `times`, and returns the tail-masked interior maximum.

use crate::burgers::burgers_residual;
use crate::dynamics::{
    acceleration_residual_with, backward_kolmogorov_residual, fokker_planck_residual,
    transport_residual, Direction,
};
use crate::error::Result;
use crate::kernel::Kernel;
use crate::numgrid::{interior_max, laplacian_values, FieldSeries, Grid1D, TailMask, TimeGrid};
use crate::scalar::Real;

use super::packet::{pinned_coefficient_dt, QuantumFreePacket as P};

/// Source point of the Example 1 forward-equation check.
pub const EXAMPLE1_SOURCE: (f64, f64) = (0.3, 0.2);
/// Target point of the Example 1 backward-equation check.
pub const EXAMPLE1_TARGET: (f64, f64) = (0.2, 1.0);
/// Source point of the pinned-kernel forward-equation check.
pub const PINNED_SOURCE: (f64, f64) = (1.0, 0.2);

/// Lattice on `[a, b]` whose step matches that of `times`.
pub fn time_window<T: Real>(times: &TimeGrid<T>, a: T, b: T) -> Result<TimeGrid<T>> {
    let n = ((b - a) / times.dt())
        .round()
        .to_usize()
        .unwrap_or(4)
        .max(4);
    TimeGrid::new(a, b, n)
}

fn packet_series<T: Real>(
    grid: &Grid1D<T>,
    times: &TimeGrid<T>,
    f: impl Fn(T, T) -> T,
) -> Result<FieldSeries<T>> {
    FieldSeries::from_fn(*grid, *times, f)
}

/// Forward Fokker-Planck residual of the packet density with drift `b`.
pub fn packet_forward_transport<T: Real>(grid: &Grid1D<T>, times: &TimeGrid<T>) -> Result<T> {
    let rho = packet_series(grid, times, P::rho)?;
    let b = packet_series(grid, times, P::drift)?;
    fokker_planck_residual(&rho, &b, T::one(), Direction::Forward)
}

/// Backward Fokker-Planck residual of the packet density with drift `b*`.
pub fn packet_backward_transport<T: Real>(grid: &Grid1D<T>, times: &TimeGrid<T>) -> Result<T> {
    let rho = packet_series(grid, times, P::rho)?;
    let b_star = packet_series(grid, times, P::drift_star)?;
    fokker_planck_residual(&rho, &b_star, T::one(), Direction::Backward)
}

/// Residuals of `dtheta/dt = -theta'' + c theta` and `dtheta*/dt = theta*'' - c theta*`
/// with `c` half the packet potential.
pub fn packet_parabolic_pair<T: Real>(grid: &Grid1D<T>, times: &TimeGrid<T>) -> Result<(T, T)> {
    let rho = packet_series(grid, times, P::rho)?;
    let c = packet_series(grid, times, P::omega_half)?;
    let theta = packet_series(grid, times, P::theta)?;
    let theta_star = packet_series(grid, times, P::theta_star)?;
    let one_sided = |f: &FieldSeries<T>, sign: T| -> Result<T> {
        let df = f.time_derivative()?;
        let lap: Vec<Vec<T>> = (0..f.n_slices())
            .map(|k| laplacian_values(grid, f.values(k)))
            .collect();
        Ok(interior_max(
            grid,
            times,
            TailMask::density(&rho),
            |k, i| df.at(k, i) + sign * (lap[k][i] - c.at(k, i) * f.at(k, i)),
        ))
    };
    Ok((
        one_sided(&theta, T::one())?,
        one_sided(&theta_star, -T::one())?,
    ))
}

/// `|2 (sqrt rho)'' / sqrt rho - c|` against half the packet potential.
pub fn packet_quantum_potential<T: Real>(grid: &Grid1D<T>, times: &TimeGrid<T>) -> Result<T> {
    let rho = packet_series(grid, times, P::rho)?;
    let c = packet_series(grid, times, P::omega_half)?;
    let amp: Vec<Vec<T>> = (0..rho.n_slices())
        .map(|k| rho.values(k).iter().map(|r| r.sqrt()).collect())
        .collect();
    let lap: Vec<Vec<T>> = amp.iter().map(|a| laplacian_values(grid, a)).collect();
    let two = T::lit(2.0);
    let mut worst = T::zero();
    for k in 0..rho.n_slices() {
        for i in 1..grid.len() - 1 {
            if TailMask::density(&rho).keeps(k, i) {
                worst = worst.max((two * lap[k][i] / amp[k][i] - c.at(k, i)).abs());
            }
        }
    }
    Ok(worst)
}

/// Forced Burgers residual of `b*` with force `F = 2 c'`.
pub fn packet_forced_burgers<T: Real>(grid: &Grid1D<T>, times: &TimeGrid<T>) -> Result<T> {
    let rho = packet_series(grid, times, P::rho)?;
    let b_star = packet_series(grid, times, P::drift_star)?;
    let force = packet_series(grid, times, P::force)?;
    burgers_residual(&b_star, T::one(), &force, TailMask::density(&rho))
}

/// Larger of `|D+ b - F|` and `|D- b* - F|` for the packet drifts.
pub fn packet_acceleration<T: Real>(grid: &Grid1D<T>, times: &TimeGrid<T>) -> Result<T> {
    let rho = packet_series(grid, times, P::rho)?;
    let b = packet_series(grid, times, P::drift)?;
    let b_star = packet_series(grid, times, P::drift_star)?;
    let force = packet_series(grid, times, P::force)?;
    let (f, g) =
        acceleration_residual_with(&b, &b_star, T::one(), &force, TailMask::density(&rho))?;
    Ok(f.max(g))
}

/// Unforced Burgers residual of `v = -2 (ln theta)'` with the heat solution
/// `theta = 1 + N(x; 0, 1 + 2t)`, `nu = 1`.
pub fn heat_burgers<T: Real>(grid: &Grid1D<T>, times: &TimeGrid<T>) -> Result<T> {
    let two = T::lit(2.0);
    let v = FieldSeries::from_fn(*grid, *times, |x, t| {
        let var = T::one() + two * t;
        let bump = (-x * x / (two * var)).exp() / (two * T::PI() * var).sqrt();
        two * x * bump / (var * (T::one() + bump))
    })?;
    let zero = FieldSeries::from_fn(*grid, *times, |_, _| T::zero())?;
    burgers_residual(&v, T::one(), &zero, TailMask::All)
}

/// Forward equation `dp/dt = t p''` of the Example 1 kernel out of a fixed source,
/// on the window `t in [0.5, 1]`.
pub fn example1_forward<T: Real>(grid: &Grid1D<T>, times: &TimeGrid<T>) -> Result<T> {
    let (y, s) = (T::lit(EXAMPLE1_SOURCE.0), T::lit(EXAMPLE1_SOURCE.1));
    let window = time_window(times, T::lit(0.5), T::one())?;
    let k = Kernel::Example1;
    let p = FieldSeries::from_fn(*grid, window, |x, t| {
        k.log_evaluate_unchecked(y, s, x, t).exp()
    })?;
    let zero = FieldSeries::from_fn(*grid, window, |_, _| T::zero())?;
    transport_residual(&p, &zero, |t| t, Direction::Forward, TailMask::density(&p))
}

/// Backward equation `dp/ds + s p'' = 0` of the Example 1 kernel into a fixed
/// target, on the window `s in [0, 0.5]`.
pub fn example1_backward<T: Real>(grid: &Grid1D<T>, times: &TimeGrid<T>) -> Result<T> {
    let (x, t) = (T::lit(EXAMPLE1_TARGET.0), T::lit(EXAMPLE1_TARGET.1));
    let window = time_window(times, T::zero(), T::lit(0.5))?;
    let k = Kernel::Example1;
    let p = FieldSeries::from_fn(*grid, window, |y, s| {
        k.log_evaluate_unchecked(y, s, x, t).exp()
    })?;
    let zero = FieldSeries::from_fn(*grid, window, |_, _| T::zero())?;
    backward_kolmogorov_residual(&p, &zero, |s| s, TailMask::density(&p))
}

/// Forward equation `dp/dt = p'' - (b p)'` of the pinned kernel with the
/// space-independent drift `b(t) = y dc_{t,s}/dt`, on the window `t in [0.5, 1]`.
pub fn pinned_forward<T: Real>(grid: &Grid1D<T>, times: &TimeGrid<T>) -> Result<T> {
    let (y, s) = (T::lit(PINNED_SOURCE.0), T::lit(PINNED_SOURCE.1));
    let window = time_window(times, T::lit(0.5), T::one())?;
    let k = Kernel::PinnedExample2;
    let p = FieldSeries::from_fn(*grid, window, |x, t| {
        k.log_evaluate_unchecked(y, s, x, t).exp()
    })?;
    let b = FieldSeries::from_fn(*grid, window, |_, t| y * pinned_coefficient_dt(t, s))?;
    transport_residual(
        &p,
        &b,
        |_| T::one(),
        Direction::Forward,
        TailMask::density(&p),
    )
}
