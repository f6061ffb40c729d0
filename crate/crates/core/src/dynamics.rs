//! Euler-Maruyama simulation of the interpolating diffusions, empirical
//! densities, and residuals of the transport and Kolmogorov equations.

use std::io::{self, Write};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::bridge::BridgeSolution;
use crate::error::{Error, Result};
use crate::numgrid::{
    gradient_values, interior_max, laplacian_values, FieldSeries, Grid1D, ScalarField, TailMask,
    TimeGrid,
};
use crate::scalar::Real;

/// Minimum fraction of paths that must stay on the grid under absorption.
pub const MIN_LIVE_FRACTION: f64 = 0.9;

/// What happens to a path that leaves the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundaryPolicy {
    /// Mirror the position back into the domain.
    #[default]
    Reflect,
    /// Drop the path from every statistic.
    AbsorbAndDiscard,
}

impl FromStr for BoundaryPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reflect" => Ok(Self::Reflect),
            "absorb" | "absorb-and-discard" => Ok(Self::AbsorbAndDiscard),
            other => Err(Error::InvalidArgument(format!(
                "unknown boundary policy {other:?} (expected reflect or absorb-and-discard)"
            ))),
        }
    }
}

/// Simulation settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdeConfig<T> {
    pub nu: T,
    pub n_paths: usize,
    /// Upper bound on the Euler-Maruyama step; the step actually used divides the
    /// horizon evenly.
    pub dt: T,
    pub seed: u64,
    pub boundary_policy: BoundaryPolicy,
    /// Number of equal intervals between recorded slices.
    pub record_intervals: usize,
}

impl<T: Real> SdeConfig<T> {
    /// `dt = 1e-3`, reflecting edges, ten recorded intervals.
    pub fn new(nu: T, n_paths: usize, seed: u64) -> Self {
        Self {
            nu,
            n_paths,
            dt: T::lit(1e-3),
            seed,
            boundary_policy: BoundaryPolicy::Reflect,
            record_intervals: 10,
        }
    }

    /// Checks the settings against a horizon and returns the number of steps.
    fn steps(&self, t_end: T) -> Result<usize> {
        if !(self.nu > T::zero()) {
            return Err(Error::InvalidArgument(format!(
                "nu must be positive, got {}",
                self.nu
            )));
        }
        if self.n_paths == 0 || self.record_intervals == 0 {
            return Err(Error::InvalidArgument(
                "need at least one path and one recorded interval".into(),
            ));
        }
        if !(t_end > T::zero()) {
            return Err(Error::InvalidArgument(format!(
                "horizon must be positive, got {t_end}"
            )));
        }
        if !(self.dt > T::zero()) || self.dt > t_end / T::lit(100.0) {
            return Err(Error::InvalidArgument(format!(
                "dt must lie in (0, T/100], got {} for T = {t_end}",
                self.dt
            )));
        }
        let raw = (t_end / self.dt).ceil().to_usize().unwrap_or(usize::MAX);
        let r = self.record_intervals;
        Ok(raw.div_ceil(r) * r)
    }
}

/// Drift `b(x, t)` read by the simulator.
pub trait DriftField<T>: Sync {
    fn drift(&self, x: T, t: T) -> T;
}

/// Bilinear interpolation of lattice values.
impl<T: Real> DriftField<T> for FieldSeries<T> {
    fn drift(&self, x: T, t: T) -> T {
        self.interpolate(x, t)
    }
}

/// Drift given by a closure.
pub struct AnalyticDrift<F>(pub F);

impl<T: Real, F: Fn(T, T) -> T + Sync> DriftField<T> for AnalyticDrift<F> {
    fn drift(&self, x: T, t: T) -> T {
        (self.0)(x, t)
    }
}

/// `b = 0`.
pub struct ZeroDrift;

impl<T: Real> DriftField<T> for ZeroDrift {
    fn drift(&self, _x: T, _t: T) -> T {
        T::zero()
    }
}

/// Recorded positions of a set of sample paths.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble<T> {
    times: TimeGrid<T>,
    grid: Grid1D<T>,
    /// Row `p` holds the recorded positions of path `p`.
    positions: Vec<T>,
    alive: Vec<bool>,
    config: SdeConfig<T>,
}

impl<T: Real> PathEnsemble<T> {
    pub fn times(&self) -> &TimeGrid<T> {
        &self.times
    }

    pub fn grid(&self) -> &Grid1D<T> {
        &self.grid
    }

    pub fn config(&self) -> &SdeConfig<T> {
        &self.config
    }

    pub fn n_paths(&self) -> usize {
        self.alive.len()
    }

    pub fn live_count(&self) -> usize {
        self.alive.iter().filter(|&&a| a).count()
    }

    pub fn is_alive(&self, path: usize) -> bool {
        self.alive[path]
    }

    pub fn position(&self, path: usize, k: usize) -> T {
        self.positions[path * self.times.n_slices() + k]
    }

    /// Positions of the live paths at recorded slice `k`.
    pub fn slice(&self, k: usize) -> Vec<T> {
        (0..self.n_paths())
            .filter(|&p| self.alive[p])
            .map(|p| self.position(p, k))
            .collect()
    }

    /// CSV with header `path_id,t,x`, one row per live path and recorded slice.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "path_id,t,x")?;
        for p in (0..self.n_paths()).filter(|&p| self.alive[p]) {
            for k in 0..self.times.n_slices() {
                writeln!(
                    w,
                    "{p},{:.17e},{:.17e}",
                    self.times.time(k),
                    self.position(p, k)
                )?;
            }
        }
        Ok(())
    }
}

/// Inverse-CDF sampler of a grid density whose CDF is the cumulative trapezoid,
/// linear between nodes.
struct GridSampler<T> {
    grid: Grid1D<T>,
    cdf: Vec<T>,
}

impl<T: Real> GridSampler<T> {
    fn new(rho: &ScalarField<T>) -> Result<Self> {
        let grid = *rho.grid();
        if rho.values().iter().any(|&v| v < T::zero()) {
            return Err(Error::InvalidArgument(
                "initial density has negative values".into(),
            ));
        }
        let cdf = cumulative_cdf(&grid, rho.values());
        if !(cdf[cdf.len() - 1] > T::zero()) {
            return Err(Error::Normalization { mass: 0.0 });
        }
        let total = cdf[cdf.len() - 1];
        Ok(Self {
            grid,
            cdf: cdf.into_iter().map(|c| c / total).collect(),
        })
    }

    fn sample(&self, u: T) -> T {
        let n = self.cdf.len();
        let j = self.cdf.partition_point(|&c| c <= u).clamp(1, n - 1);
        let (lo, hi) = (self.cdf[j - 1], self.cdf[j]);
        let frac = if hi > lo {
            (u - lo) / (hi - lo)
        } else {
            T::zero()
        };
        self.grid.node(j - 1) + frac * self.grid.spacing()
    }
}

fn cumulative_cdf<T: Real>(grid: &Grid1D<T>, v: &[T]) -> Vec<T> {
    let half_h = grid.spacing() / T::lit(2.0);
    let mut out = vec![T::zero(); v.len()];
    for i in 1..v.len() {
        out[i] = out[i - 1] + half_h * (v[i - 1] + v[i]);
    }
    out
}

/// Clock direction of a simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Clock {
    Forward,
    Reversed,
}

fn simulate<T: Real>(
    drift: &impl DriftField<T>,
    start: &ScalarField<T>,
    cfg: &SdeConfig<T>,
    t_end: T,
    clock: Clock,
) -> Result<PathEnsemble<T>> {
    let n_steps = cfg.steps(t_end)?;
    let times = TimeGrid::new(T::zero(), t_end, cfg.record_intervals)?;
    let every = n_steps / cfg.record_intervals;
    let dt = t_end / T::from_count(n_steps);
    let noise = (T::lit(2.0) * cfg.nu * dt).sqrt();
    let grid = *start.grid();
    let sampler = GridSampler::new(start)?;
    let n_rec = times.n_slices();
    let (a, b) = (grid.x_min(), grid.x_max());
    let policy = cfg.boundary_policy;

    let run = |path: usize| -> (Vec<T>, bool) {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(path as u64);
        let mut x = sampler.sample(T::lit(rng.random::<f64>()));
        let mut rec = vec![T::nan(); n_rec];
        let slot = |j: usize| match clock {
            Clock::Forward => j,
            Clock::Reversed => n_rec - 1 - j,
        };
        rec[slot(0)] = x;
        for step in 0..n_steps {
            let tau = T::from_count(step) * dt;
            let increment = match clock {
                Clock::Forward => drift.drift(x, tau) * dt,
                Clock::Reversed => -drift.drift(x, t_end - tau) * dt,
            };
            let xi: f64 = rng.sample(StandardNormal);
            x = x + increment + noise * T::lit(xi);
            if x < a || x > b {
                match policy {
                    BoundaryPolicy::Reflect => {
                        if x < a {
                            x = a + a - x;
                        }
                        if x > b {
                            x = b + b - x;
                        }
                        x = x.max(a).min(b);
                    }
                    BoundaryPolicy::AbsorbAndDiscard => return (rec, false),
                }
            }
            if (step + 1) % every == 0 {
                rec[slot((step + 1) / every)] = x;
            }
        }
        (rec, true)
    };

    let results: Vec<(Vec<T>, bool)> = (0..cfg.n_paths).into_par_iter().map(run).collect();
    let mut positions = Vec::with_capacity(cfg.n_paths * n_rec);
    let mut alive = Vec::with_capacity(cfg.n_paths);
    for (rec, ok) in results {
        positions.extend(rec);
        alive.push(ok);
    }
    let live = alive.iter().filter(|&&a| a).count();
    if (live as f64) < MIN_LIVE_FRACTION * cfg.n_paths as f64 {
        return Err(Error::BoundaryLeak {
            live,
            total: cfg.n_paths,
        });
    }
    Ok(PathEnsemble {
        times,
        grid,
        positions,
        alive,
        config: *cfg,
    })
}

/// `X <- X + b(X, t) dt + sqrt(2 nu dt) xi`, starting from samples of `rho0`.
pub fn simulate_forward<T: Real>(
    b: &impl DriftField<T>,
    rho0: &ScalarField<T>,
    cfg: &SdeConfig<T>,
    t_end: T,
) -> Result<PathEnsemble<T>> {
    simulate(b, rho0, cfg, t_end, Clock::Forward)
}

/// Reversed clock `tau = T - t`: `Y <- Y - b*(Y, T - tau) dtau + sqrt(2 nu dtau) xi`,
/// starting from samples of `rhoT`; slices are recorded in forward time.
pub fn simulate_backward<T: Real>(
    b_star: &impl DriftField<T>,
    rho_t: &ScalarField<T>,
    cfg: &SdeConfig<T>,
    t_end: T,
) -> Result<PathEnsemble<T>> {
    simulate(b_star, rho_t, cfg, t_end, Clock::Reversed)
}

/// Nearest-node histogram of recorded slice `k`, scaled to unit trapezoid mass.
pub fn empirical_density<T: Real>(
    ens: &PathEnsemble<T>,
    k: usize,
    grid: &Grid1D<T>,
) -> Result<ScalarField<T>> {
    if k >= ens.times().n_slices() {
        return Err(Error::InvalidArgument(format!(
            "slice {k} was not recorded"
        )));
    }
    let samples = ens.slice(k);
    let mut counts = vec![0usize; grid.len()];
    for &x in &samples {
        counts[grid.nearest(x)] += 1;
    }
    let n = T::from_count(samples.len().max(1));
    let values = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| T::from_count(c) / (n * grid.weight(i)))
        .collect();
    ScalarField::new(*grid, values, ens.times().time(k))
}

/// Kolmogorov-Smirnov distance between samples and a CDF.
pub fn ks_statistic<T: Real>(samples: &[T], cdf: impl Fn(T) -> T) -> T {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    let n = T::from_count(sorted.len());
    sorted.iter().enumerate().fold(T::zero(), |worst, (i, &x)| {
        let f = cdf(x);
        let below = (f - T::from_count(i) / n).abs();
        let above = (T::from_count(i + 1) / n - f).abs();
        worst.max(below).max(above)
    })
}

/// CDF of a grid density: cumulative trapezoid, normalized, linear between nodes.
pub fn grid_cdf<T: Real>(rho: &ScalarField<T>) -> impl Fn(T) -> T + '_ {
    let grid = *rho.grid();
    let cdf = cumulative_cdf(&grid, rho.values());
    let total = cdf[cdf.len() - 1];
    move |x| crate::numgrid::interpolate_linear(&grid, &cdf, x) / total
}

/// Sign of the diffusion term in the transport equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `drho/dt = nu rho'' - (b rho)'`.
    Forward,
    /// `drho/dt = -nu rho'' - (b* rho)'`.
    Backward,
}

/// Max interior residual of the Fokker-Planck equation in `direction`, masked where `rho < 1e-12`.
pub fn fokker_planck_residual<T: Real>(
    rho: &FieldSeries<T>,
    b: &FieldSeries<T>,
    nu: T,
    direction: Direction,
) -> Result<T> {
    transport_residual(rho, b, |_| nu, direction, TailMask::density(rho))
}

/// [`fokker_planck_residual`] with a time-dependent diffusion coefficient `a(t)` and
/// an explicit mask: `drho/dt -+ a(t) rho'' + (b rho)'`.
pub fn transport_residual<T: Real>(
    rho: &FieldSeries<T>,
    b: &FieldSeries<T>,
    diffusion: impl Fn(T) -> T,
    direction: Direction,
    mask: TailMask<'_, T>,
) -> Result<T> {
    rho.check_same_lattice(b)?;
    let grid = *rho.grid();
    let times = *rho.times();
    let drho = rho.time_derivative()?;
    let sign = match direction {
        Direction::Forward => T::one(),
        Direction::Backward => -T::one(),
    };
    let n = rho.n_slices();
    let (lap, flux): (Vec<Vec<T>>, Vec<Vec<T>>) = (0..n)
        .map(|k| {
            let prod: Vec<T> = rho
                .values(k)
                .iter()
                .zip(b.values(k))
                .map(|(&r, &v)| r * v)
                .collect();
            (
                laplacian_values(&grid, rho.values(k)),
                gradient_values(&grid, &prod),
            )
        })
        .unzip();
    Ok(interior_max(&grid, &times, mask, |k, i| {
        drho.at(k, i) - sign * diffusion(times.time(k)) * lap[k][i] + flux[k][i]
    }))
}

/// Max interior residual of the backward Kolmogorov equation in `(y, s)`:
/// `df/ds + a(s) f'' + b f'`.
pub fn backward_kolmogorov_residual<T: Real>(
    f: &FieldSeries<T>,
    b: &FieldSeries<T>,
    diffusion: impl Fn(T) -> T,
    mask: TailMask<'_, T>,
) -> Result<T> {
    f.check_same_lattice(b)?;
    let grid = *f.grid();
    let times = *f.times();
    let df = f.time_derivative()?;
    let n = f.n_slices();
    let (lap, grad): (Vec<Vec<T>>, Vec<Vec<T>>) = (0..n)
        .map(|k| {
            (
                laplacian_values(&grid, f.values(k)),
                gradient_values(&grid, f.values(k)),
            )
        })
        .unzip();
    Ok(interior_max(&grid, &times, mask, |k, i| {
        df.at(k, i) + diffusion(times.time(k)) * lap[k][i] + b.at(k, i) * grad[k][i]
    }))
}

/// `(D+ f, D- f)` with `D+ = d/dt + b d/dx + nu d2/dx2` and `D- = d/dt + b* d/dx - nu d2/dx2`.
pub fn conditional_derivatives_with<T: Real>(
    b: &FieldSeries<T>,
    b_star: &FieldSeries<T>,
    nu: T,
    f: &FieldSeries<T>,
) -> Result<(FieldSeries<T>, FieldSeries<T>)> {
    f.check_same_lattice(b)?;
    f.check_same_lattice(b_star)?;
    let grid = *f.grid();
    let df = f.time_derivative()?;
    let n = f.n_slices();
    let mut plus = Vec::with_capacity(n);
    let mut minus = Vec::with_capacity(n);
    for k in 0..n {
        let g = gradient_values(&grid, f.values(k));
        let l = laplacian_values(&grid, f.values(k));
        plus.push(
            (0..grid.len())
                .map(|i| df.at(k, i) + b.at(k, i) * g[i] + nu * l[i])
                .collect(),
        );
        minus.push(
            (0..grid.len())
                .map(|i| df.at(k, i) + b_star.at(k, i) * g[i] - nu * l[i])
                .collect(),
        );
    }
    Ok((
        FieldSeries::new(grid, *f.times(), plus)?,
        FieldSeries::new(grid, *f.times(), minus)?,
    ))
}

/// [`conditional_derivatives_with`] using the drifts of a bridge solution.
pub fn conditional_derivatives<T: Real>(
    sol: &BridgeSolution<T>,
    f: &FieldSeries<T>,
) -> Result<(FieldSeries<T>, FieldSeries<T>)> {
    conditional_derivatives_with(sol.drift(), sol.drift_star(), sol.nu(), f)
}

/// Larger of the interior residuals `|D+ b - F|` and `|D- b* - F|` over nodes kept by `mask`.
pub fn acceleration_residual_with<T: Real>(
    b: &FieldSeries<T>,
    b_star: &FieldSeries<T>,
    nu: T,
    force: &FieldSeries<T>,
    mask: TailMask<'_, T>,
) -> Result<(T, T)> {
    let (d_plus_b, _) = conditional_derivatives_with(b, b_star, nu, b)?;
    let (_, d_minus_b_star) = conditional_derivatives_with(b, b_star, nu, b_star)?;
    let grid = *b.grid();
    let times = *b.times();
    let forward = interior_max(&grid, &times, mask, |k, i| {
        d_plus_b.at(k, i) - force.at(k, i)
    });
    let backward = interior_max(&grid, &times, mask, |k, i| {
        d_minus_b_star.at(k, i) - force.at(k, i)
    });
    Ok((forward, backward))
}

/// Acceleration residual of a bridge solution, tail-masked by its density.
pub fn acceleration_residual<T: Real>(
    sol: &BridgeSolution<T>,
    force: &FieldSeries<T>,
) -> Result<T> {
    let (f, b) = acceleration_residual_with(
        sol.drift(),
        sol.drift_star(),
        sol.nu(),
        force,
        TailMask::density(sol.rho()),
    )?;
    Ok(f.max(b))
}
