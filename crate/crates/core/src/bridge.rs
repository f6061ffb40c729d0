//! Schrödinger boundary-data problem: factor pair by proportional fitting,
//! propagated factors, density, drifts and transition densities.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gallery::QuantumFreePacket;
use crate::kernel::{FkPropagator, Kernel, KernelMatrix};
use crate::numgrid::{
    gradient_values, integrate, interpolate_log_cubic, trapezoid, FieldSeries, Grid1D, ScalarField,
    TimeGrid, DIVISION_FLOOR,
};
use crate::scalar::Real;

/// Boundary densities must integrate to one within this tolerance.
pub const BOUNDARY_MASS_TOLERANCE: f64 = 1e-8;

/// Propagated densities may drift from unit mass by at most this much.
pub const PROPAGATION_MASS_TOLERANCE: f64 = 1e-4;

/// Largest quadrature refinement used for narrow kernels.
const MAX_REFINEMENT: usize = 256;

/// Pair of strictly positive unit-mass densities at times `0` and `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryData<T> {
    rho0: ScalarField<T>,
    rho_t: ScalarField<T>,
    t_end: T,
}

impl<T: Real> BoundaryData<T> {
    /// Validates positivity and unit mass (within 1e-8), then removes the residual mass error.
    pub fn new(rho0: ScalarField<T>, rho_t: ScalarField<T>, t_end: T) -> Result<Self> {
        if rho0.grid() != rho_t.grid() {
            return Err(Error::GridMismatch);
        }
        if !(t_end > T::zero()) || !t_end.is_finite() {
            return Err(Error::InvalidBoundary(format!(
                "terminal time must be positive, got {t_end}"
            )));
        }
        let rho0 = checked_density("rho0", rho0)?;
        let rho_t = checked_density("rhoT", rho_t)?;
        Ok(Self {
            rho0: rho0.with_time_label(T::zero()),
            rho_t: rho_t.with_time_label(t_end),
            t_end,
        })
    }

    /// Normalizes both (positive) profiles before validating.
    pub fn normalized(rho0: ScalarField<T>, rho_t: ScalarField<T>, t_end: T) -> Result<Self> {
        let rho0 = crate::numgrid::normalize(&rho0)?;
        let rho_t = crate::numgrid::normalize(&rho_t)?;
        Self::new(rho0, rho_t, t_end)
    }

    /// Samples and normalizes two density profiles.
    pub fn from_fns(
        grid: Grid1D<T>,
        t_end: T,
        rho0: impl Fn(T) -> T,
        rho_t: impl Fn(T) -> T,
    ) -> Result<Self> {
        Self::normalized(
            ScalarField::from_fn(grid, T::zero(), rho0)?,
            ScalarField::from_fn(grid, t_end, rho_t)?,
            t_end,
        )
    }

    pub fn rho0(&self) -> &ScalarField<T> {
        &self.rho0
    }

    pub fn rho_t(&self) -> &ScalarField<T> {
        &self.rho_t
    }

    pub fn t_end(&self) -> T {
        self.t_end
    }

    pub fn grid(&self) -> &Grid1D<T> {
        self.rho0.grid()
    }
}

fn checked_density<T: Real>(label: &str, f: ScalarField<T>) -> Result<ScalarField<T>> {
    if let Some(i) = f.values().iter().position(|&v| !(v > T::zero())) {
        return Err(Error::InvalidBoundary(format!(
            "{label} is not strictly positive at node {i} (value {})",
            f.values()[i]
        )));
    }
    let mass = integrate(&f)?;
    if (mass - T::one()).abs() > T::lit(BOUNDARY_MASS_TOLERANCE) {
        return Err(Error::InvalidBoundary(format!(
            "{label} has mass {mass}, expected 1 within {BOUNDARY_MASS_TOLERANCE:e}"
        )));
    }
    f.map(|v| v / mass)
}

/// Stopping rule of the proportional fitting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IpfOptions<T> {
    /// Bound on the L1 marginal residual.
    pub tol: T,
    pub max_iter: usize,
}

impl<T: Real> Default for IpfOptions<T> {
    fn default() -> Self {
        Self {
            tol: T::lit(1e-12),
            max_iter: 500,
        }
    }
}

/// Gauge-fixed factor pair `(u0, vT)` with `int u0 dx = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct BridgeFactors<T> {
    u0: ScalarField<T>,
    v_t: ScalarField<T>,
    /// Scalar applied to the raw fitted `u0` (and removed from `vT`) to fix the gauge.
    gauge: T,
    t_end: T,
    residual_history: Vec<T>,
}

impl<T: Real> BridgeFactors<T> {
    /// Wraps a known factor pair and fixes the gauge.
    pub fn from_pair(u0: ScalarField<T>, v_t: ScalarField<T>, t_end: T) -> Result<Self> {
        if u0.grid() != v_t.grid() {
            return Err(Error::GridMismatch);
        }
        for (label, f) in [("u0", &u0), ("vT", &v_t)] {
            if f.values().iter().any(|&v| !(v > T::zero())) {
                return Err(Error::Incompatible(format!(
                    "{label} is not strictly positive"
                )));
            }
        }
        let gauge = T::one() / integrate(&u0)?;
        Ok(Self {
            u0: u0.scale(gauge)?.with_time_label(T::zero()),
            v_t: v_t.scale(T::one() / gauge)?.with_time_label(t_end),
            gauge,
            t_end,
            residual_history: Vec::new(),
        })
    }

    pub fn u0(&self) -> &ScalarField<T> {
        &self.u0
    }

    pub fn v_t(&self) -> &ScalarField<T> {
        &self.v_t
    }

    pub fn gauge(&self) -> T {
        self.gauge
    }

    pub fn t_end(&self) -> T {
        self.t_end
    }

    pub fn grid(&self) -> &Grid1D<T> {
        self.u0.grid()
    }

    /// L1 marginal residual after each fitting sweep.
    pub fn residual_history(&self) -> &[T] {
        &self.residual_history
    }

    pub fn iterations(&self) -> usize {
        self.residual_history.len()
    }

    /// `(lambda u0, vT / lambda)`; the gauge is left unfixed.
    pub fn rescaled(&self, lambda: T) -> Result<Self> {
        Ok(Self {
            u0: self.u0.scale(lambda)?,
            v_t: self.v_t.scale(T::one() / lambda)?,
            gauge: self.gauge * lambda,
            t_end: self.t_end,
            residual_history: self.residual_history.clone(),
        })
    }

    /// Joint density `u0(x_i) K[i][j] vT(x_j)` of the endpoints.
    pub fn joint(&self, k: &KernelMatrix<T>, i: usize, j: usize) -> T {
        self.u0.values()[i] * k.get(i, j) * self.v_t.values()[j]
    }

    /// Marginals `(u0 K W vT, vT K^T W u0)` of the joint density.
    pub fn marginals(&self, k: &KernelMatrix<T>) -> (Vec<T>, Vec<T>) {
        let left = k.pull_back(self.v_t.values());
        let right = k.push_forward(self.u0.values());
        (
            left.iter()
                .zip(self.u0.values())
                .map(|(&a, &u)| a * u)
                .collect(),
            right
                .iter()
                .zip(self.v_t.values())
                .map(|(&b, &v)| b * v)
                .collect(),
        )
    }
}

fn divide_positive<T: Real>(num: &[T], den: &[T], label: &str) -> Result<Vec<T>> {
    num.iter()
        .zip(den)
        .enumerate()
        .map(|(i, (&a, &b))| {
            let q = a / b;
            if b > T::zero() && q.is_finite() && q > T::zero() {
                Ok(q)
            } else {
                Err(Error::Incompatible(format!(
                    "{label} update is not positive at node {i} (denominator {b:e})"
                )))
            }
        })
        .collect()
}

fn l1_distance<T: Real>(grid: &Grid1D<T>, a: &[T], b: &[T]) -> T {
    let d: Vec<T> = a.iter().zip(b).map(|(&x, &y)| (x - y).abs()).collect();
    trapezoid(grid, &d)
}

/// Iterative proportional fitting of `rho0 = u0 K W vT`, `rhoT = vT K^T W u0`.
///
/// Each sweep rescales `u0` against `rho0` and then `vT` against `rhoT`; the
/// `rhoT` marginal is then exact and the L1 error of the `rho0` marginal is the
/// recorded residual.
pub fn solve_boundary_system<T: Real>(
    k: &KernelMatrix<T>,
    bd: &BoundaryData<T>,
    opts: IpfOptions<T>,
) -> Result<BridgeFactors<T>> {
    let grid = bd.grid();
    if k.source() != grid || k.target() != grid {
        return Err(Error::GridMismatch);
    }
    let tol_t = T::epsilon() * T::lit(64.0) * bd.t_end().max(T::one());
    if k.s().abs() > tol_t || (k.t() - bd.t_end()).abs() > tol_t {
        return Err(Error::Incompatible(format!(
            "kernel spans [{}, {}] but boundary data span [0, {}]",
            k.s(),
            k.t(),
            bd.t_end()
        )));
    }
    if opts.max_iter == 0 {
        return Err(Error::InvalidArgument("max_iter must be positive".into()));
    }
    let rho0 = bd.rho0().values();
    let rho_t = bd.rho_t().values();
    let mut v = vec![T::one(); grid.len()];
    let mut kv = k.pull_back(&v);
    let mut history = Vec::new();
    loop {
        let u = divide_positive(rho0, &kv, "u0")?;
        v = divide_positive(rho_t, &k.push_forward(&u), "vT")?;
        kv = k.pull_back(&v);
        let marginal: Vec<T> = u.iter().zip(&kv).map(|(&a, &b)| a * b).collect();
        let residual = l1_distance(grid, &marginal, rho0);
        history.push(residual);
        log::debug!("ipf sweep {}: residual {residual:e}", history.len());
        if residual < opts.tol {
            let mut factors = BridgeFactors::from_pair(
                ScalarField::new(*grid, u, T::zero())?,
                ScalarField::new(*grid, v, bd.t_end())?,
                bd.t_end(),
            )?;
            factors.residual_history = history;
            return Ok(factors);
        }
        if history.len() >= opts.max_iter {
            return Err(Error::NonConvergence {
                iterations: history.len(),
                residual: residual.as_f64(),
            });
        }
    }
}

/// Propagated factors, density and drifts on a space-time lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct BridgeSolution<T> {
    factors: BridgeFactors<T>,
    nu: T,
    u: FieldSeries<T>,
    v: FieldSeries<T>,
    rho: FieldSeries<T>,
    drift: FieldSeries<T>,
    drift_star: FieldSeries<T>,
}

impl<T: Real> BridgeSolution<T> {
    pub fn factors(&self) -> &BridgeFactors<T> {
        &self.factors
    }

    pub fn nu(&self) -> T {
        self.nu
    }

    pub fn grid(&self) -> &Grid1D<T> {
        self.u.grid()
    }

    pub fn times(&self) -> &TimeGrid<T> {
        self.u.times()
    }

    /// `u(x, t) = int u0(y) k(y, 0, x, t) dy`.
    pub fn u(&self) -> &FieldSeries<T> {
        &self.u
    }

    /// `v(y, s) = int k(y, s, x, T) vT(x) dx`.
    pub fn v(&self) -> &FieldSeries<T> {
        &self.v
    }

    /// `rho = u v`.
    pub fn rho(&self) -> &FieldSeries<T> {
        &self.rho
    }

    /// Forward drift `b = 2 nu d/dx ln v`.
    pub fn drift(&self) -> &FieldSeries<T> {
        &self.drift
    }

    /// Backward drift `b* = -2 nu d/dx ln u`.
    pub fn drift_star(&self) -> &FieldSeries<T> {
        &self.drift_star
    }
}

fn refinement_for<T: Real>(grid: &Grid1D<T>, width: T) -> usize {
    let r = (T::lit(3.0) * grid.spacing() / width).ceil();
    r.to_usize()
        .unwrap_or(MAX_REFINEMENT)
        .clamp(1, MAX_REFINEMENT)
}

fn clipped_log<T: Real>(v: &[T]) -> Vec<T> {
    let floor = T::lit(DIVISION_FLOOR);
    v.iter().map(|&x| x.max(floor).ln()).collect()
}

/// `ln f` on the grid refined `r` times: exact at coarse nodes, log-cubic in between.
fn refined_log<T: Real>(grid: &Grid1D<T>, log_f: &[T], r: usize) -> (Grid1D<T>, Vec<T>) {
    let fine = grid.refined_by(r);
    let values = (0..fine.len())
        .map(|m| {
            if m % r == 0 {
                log_f[m / r]
            } else {
                interpolate_log_cubic(grid, log_f, fine.node(m)).ln()
            }
        })
        .collect();
    (fine, values)
}

fn log_theta_on<T: Real>(nodes: &[T], t: T, dressed: bool) -> Vec<T> {
    nodes
        .iter()
        .map(|&x| {
            if dressed {
                QuantumFreePacket::log_theta(x, t)
            } else {
                T::zero()
            }
        })
        .collect()
}

/// `int f(y) k(y, s, x_j, t) dy` for every node `x_j`, refining the `y` quadrature for narrow kernels.
fn push_analytic<T: Real>(kernel: &Kernel<T>, grid: &Grid1D<T>, log_f: &[T], s: T, t: T) -> Vec<T> {
    let form = kernel.gaussian_form(s, t).expect("analytic kernel");
    let r = refinement_for(grid, form.var.sqrt());
    let (fine, log_ff) = refined_log(grid, log_f, r);
    let ys = fine.nodes();
    let src = log_theta_on(&ys, s, form.dressed);
    let xs = grid.nodes();
    let dst = log_theta_on(&xs, t, form.dressed);
    xs.par_iter()
        .enumerate()
        .map(|(j, &x)| {
            ys.iter()
                .enumerate()
                .map(|(m, &y)| {
                    fine.weight(m) * (log_ff[m] + src[m] + form.log_density(y, x) - dst[j]).exp()
                })
                .sum()
        })
        .collect()
}

/// `int k(y_i, s, x, t) f(x) dx` for every node `y_i`, refining the `x` quadrature for narrow kernels.
fn pull_analytic<T: Real>(kernel: &Kernel<T>, grid: &Grid1D<T>, log_f: &[T], s: T, t: T) -> Vec<T> {
    let form = kernel.gaussian_form(s, t).expect("analytic kernel");
    let r = refinement_for(grid, form.var.sqrt());
    let (fine, log_ff) = refined_log(grid, log_f, r);
    let xs = fine.nodes();
    let dst = log_theta_on(&xs, t, form.dressed);
    let ys = grid.nodes();
    let src = log_theta_on(&ys, s, form.dressed);
    ys.par_iter()
        .enumerate()
        .map(|(i, &y)| {
            xs.iter()
                .enumerate()
                .map(|(m, &x)| {
                    fine.weight(m) * (log_ff[m] - dst[m] + src[i] + form.log_density(y, x)).exp()
                })
                .sum()
        })
        .collect()
}

/// Propagates the factors over `times` (which must span `[0, T]`) and derives density and drifts.
pub fn propagate_factors<T: Real>(
    factors: &BridgeFactors<T>,
    kernel: &Kernel<T>,
    times: &TimeGrid<T>,
) -> Result<BridgeSolution<T>> {
    let grid = *factors.grid();
    let t_end = factors.t_end();
    let tol_t = T::epsilon() * T::lit(64.0) * t_end.max(T::one());
    if times.t_start().abs() > tol_t || (times.t_end() - t_end).abs() > tol_t {
        return Err(Error::InvalidArgument(format!(
            "time lattice [{}, {}] does not span [0, {t_end}]",
            times.t_start(),
            times.t_end()
        )));
    }
    let n = times.n_slices();
    let u0 = factors.u0().values().to_vec();
    let v_t = factors.v_t().values().to_vec();
    let mut u = vec![u0.clone(); 1];
    let mut v = vec![v_t.clone(); 1];
    match kernel {
        Kernel::NumericFk(fk) => {
            if fk.grid != grid {
                return Err(Error::GridMismatch);
            }
            let prop = FkPropagator::new(fk.potential.clone(), grid);
            for k in 1..n {
                let (a, b) = (times.time(k - 1), times.time(k));
                let next = prop.forward(&u[k - 1], a, b, prop.default_substeps(a, b))?;
                u.push(next);
            }
            for k in (0..n - 1).rev() {
                let (a, b) = (times.time(k), times.time(k + 1));
                let next = prop.adjoint(
                    v.last().expect("nonempty"),
                    a,
                    b,
                    prop.default_substeps(a, b),
                )?;
                v.push(next);
            }
        }
        _ => {
            let log_u0 = clipped_log(&u0);
            let log_vt = clipped_log(&v_t);
            for k in 1..n {
                u.push(push_analytic(
                    kernel,
                    &grid,
                    &log_u0,
                    T::zero(),
                    times.time(k),
                ));
            }
            for k in (0..n - 1).rev() {
                v.push(pull_analytic(kernel, &grid, &log_vt, times.time(k), t_end));
            }
        }
    }
    v.reverse();
    let u = FieldSeries::new(grid, *times, u)?;
    let v = FieldSeries::new(grid, *times, v)?;
    let rho = u.zip_with(&v, |a, b| a * b)?;
    for k in 0..n {
        let mass = trapezoid(&grid, rho.values(k));
        if (mass - T::one()).abs() > T::lit(PROPAGATION_MASS_TOLERANCE) {
            return Err(Error::PropagationConsistency {
                t: times.time(k).as_f64(),
                mass: mass.as_f64(),
            });
        }
    }
    let nu = kernel.nu();
    let two_nu = T::lit(2.0) * nu;
    let log_gradient = |f: &FieldSeries<T>, scale: T| -> Result<FieldSeries<T>> {
        let data = (0..n)
            .map(|k| {
                gradient_values(&grid, &clipped_log(f.values(k)))
                    .into_iter()
                    .map(|g| scale * g)
                    .collect()
            })
            .collect();
        FieldSeries::new(grid, *times, data)
    };
    let drift = log_gradient(&v, two_nu)?;
    let drift_star = log_gradient(&u, -two_nu)?;
    Ok(BridgeSolution {
        factors: factors.clone(),
        nu,
        u,
        v,
        rho,
        drift,
        drift_star,
    })
}

/// Builds the kernel matrix over `[0, T]`, fits the factors and propagates them.
pub fn solve_bridge<T: Real>(
    kernel: &Kernel<T>,
    bd: &BoundaryData<T>,
    times: &TimeGrid<T>,
    opts: IpfOptions<T>,
) -> Result<BridgeSolution<T>> {
    let k = kernel.matrix(bd.grid(), T::zero(), bd.t_end())?;
    let factors = solve_boundary_system(&k, bd, opts)?;
    propagate_factors(&factors, kernel, times)
}

fn guarded<T: Real>(value: T, label: &str) -> Result<T> {
    if value < T::lit(DIVISION_FLOOR) {
        Err(Error::DivisionGuard(format!(
            "{label} = {value:e} is below the division floor"
        )))
    } else {
        Ok(value)
    }
}

fn lattice_kernel<T: Real>(
    sol: &BridgeSolution<T>,
    kernel: &Kernel<T>,
    (iy, ks): (usize, usize),
    (ix, kt): (usize, usize),
) -> Result<T> {
    let g = sol.grid();
    let times = sol.times();
    kernel.evaluate(g.node(iy), times.time(ks), g.node(ix), times.time(kt))
}

/// Forward transition density `p(y, s, x, t) = k(y,s,x,t) v(x,t) / v(y,s)` at lattice
/// points given as `(node, slice)` pairs.
pub fn forward_transition<T: Real>(
    sol: &BridgeSolution<T>,
    kernel: &Kernel<T>,
    source: (usize, usize),
    target: (usize, usize),
) -> Result<T> {
    let k = lattice_kernel(sol, kernel, source, target)?;
    let denom = guarded(sol.v.at(source.1, source.0), "v(y, s)")?;
    Ok(k * sol.v.at(target.1, target.0) / denom)
}

/// Backward transition density `p*(y, s, x, t) = k(y,s,x,t) u(y,s) / u(x,t)` at lattice
/// points given as `(node, slice)` pairs.
pub fn backward_transition<T: Real>(
    sol: &BridgeSolution<T>,
    kernel: &Kernel<T>,
    source: (usize, usize),
    target: (usize, usize),
) -> Result<T> {
    let k = lattice_kernel(sol, kernel, source, target)?;
    let denom = guarded(sol.u.at(target.1, target.0), "u(x, t)")?;
    Ok(k * sol.u.at(source.1, source.0) / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gallery::QuantumFreePacket as P;
    use crate::numgrid::Grid1D;

    fn gaussian(var: f64) -> impl Fn(f64) -> f64 {
        move |x: f64| (-x * x / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
    }

    /// Plain dense Sinkhorn with its own loops, used as an independent oracle.
    fn brute_force_ipf(
        g: &Grid1D<f64>,
        nu: f64,
        t: f64,
        r0: &[f64],
        rt: &[f64],
    ) -> (Vec<f64>, Vec<f64>) {
        let n = g.len();
        let h = g.spacing();
        let w: Vec<f64> = (0..n)
            .map(|i| if i == 0 || i == n - 1 { h / 2.0 } else { h })
            .collect();
        let x: Vec<f64> = (0..n).map(|i| g.x_min() + i as f64 * h).collect();
        let k = |a: f64, b: f64| {
            (-(b - a) * (b - a) / (4.0 * nu * t)).exp()
                / (4.0 * std::f64::consts::PI * nu * t).sqrt()
        };
        let mut u = vec![1.0; n];
        let mut v = vec![1.0; n];
        for _ in 0..2000 {
            for i in 0..n {
                let s: f64 = (0..n).map(|j| k(x[i], x[j]) * w[j] * v[j]).sum();
                u[i] = r0[i] / s;
            }
            for j in 0..n {
                let s: f64 = (0..n).map(|i| w[i] * u[i] * k(x[i], x[j])).sum();
                v[j] = rt[j] / s;
            }
        }
        let mass: f64 = (0..n).map(|i| w[i] * u[i]).sum();
        (
            u.iter().map(|a| a / mass).collect(),
            v.iter().map(|b| b * mass).collect(),
        )
    }

    #[test]
    fn boundary_data_validation() {
        let g = Grid1D::new(-8.0, 8.0, 65).unwrap();
        let good = ScalarField::from_fn(g, 0.0, gaussian(1.0)).unwrap();
        assert!(BoundaryData::new(good.clone(), good.clone(), 1.0).is_ok());
        let doubled = good.scale(2.0).unwrap();
        assert!(matches!(
            BoundaryData::new(doubled.clone(), good.clone(), 1.0),
            Err(Error::InvalidBoundary(_))
        ));
        assert!(BoundaryData::normalized(doubled, good.clone(), 1.0).is_ok());
        let mut vals = good.values().to_vec();
        vals[3] = 0.0;
        let holed = ScalarField::new(g, vals, 0.0).unwrap();
        assert!(BoundaryData::new(holed, good.clone(), 1.0).is_err());
        assert!(BoundaryData::new(good.clone(), good, 0.0).is_err());
    }

    #[test]
    fn matches_brute_force_oracle_on_coarse_grid() {
        let g = Grid1D::new(-8.0, 8.0, 65).unwrap();
        let bd = BoundaryData::from_fns(g, 1.0, gaussian(1.0), gaussian(1.0)).unwrap();
        let kernel = Kernel::Heat { nu: 1.0 };
        let k = kernel.matrix(&g, 0.0, 1.0).unwrap();
        let f = solve_boundary_system(&k, &bd, IpfOptions::default()).unwrap();
        let (m0, mt) = f.marginals(&k);
        assert!(l1_distance(&g, &m0, bd.rho0().values()) < 1e-8);
        assert!(l1_distance(&g, &mt, bd.rho_t().values()) < 1e-8);
        let (u, v) = brute_force_ipf(&g, 1.0, 1.0, bd.rho0().values(), bd.rho_t().values());
        for i in 0..g.len() {
            assert!((f.u0().values()[i] / u[i] - 1.0).abs() < 1e-8);
            assert!((f.v_t().values()[i] / v[i] - 1.0).abs() < 1e-8);
        }
        assert!((f.u0().integrate().unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn residual_history_is_non_increasing() {
        let g = Grid1D::new(-10.0, 10.0, 129).unwrap();
        let bd = BoundaryData::from_fns(g, 1.0, gaussian(0.5), |x| gaussian(2.0)(x - 1.0)).unwrap();
        let k = Kernel::Heat { nu: 0.5 }.matrix(&g, 0.0, 1.0).unwrap();
        let f = solve_boundary_system(&k, &bd, IpfOptions::default()).unwrap();
        let h = f.residual_history();
        assert!(h.len() > 2);
        for w in h.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-9) + 1e-15, "{w:?}");
        }
    }

    #[test]
    fn non_convergence_is_reported() {
        let g = Grid1D::new(-10.0, 10.0, 129).unwrap();
        let bd = BoundaryData::from_fns(g, 1.0, gaussian(0.5), |x| gaussian(2.0)(x - 1.0)).unwrap();
        let k = Kernel::Heat { nu: 0.5 }.matrix(&g, 0.0, 1.0).unwrap();
        let opts = IpfOptions {
            tol: 1e-12,
            max_iter: 2,
        };
        assert!(matches!(
            solve_boundary_system(&k, &bd, opts),
            Err(Error::NonConvergence { iterations: 2, .. })
        ));
        let wrong_time = Kernel::Heat { nu: 0.5 }.matrix(&g, 0.0, 0.5).unwrap();
        assert!(matches!(
            solve_boundary_system(&wrong_time, &bd, IpfOptions::default()),
            Err(Error::Incompatible(_))
        ));
    }

    #[test]
    fn quantum_factors_and_drifts() {
        // same spacing as the default grid; wide enough that kernel mass does not
        // leave the domain where rho >= 1e-12
        let g = Grid1D::new(-16.0, 16.0, 821).unwrap();
        let bd = BoundaryData::from_fns(g, 1.0, |x| P::rho(x, 0.0), |x| P::rho(x, 1.0)).unwrap();
        let times = TimeGrid::new(0.0, 1.0, 20).unwrap();
        let sol = solve_bridge(&Kernel::QuantumK1, &bd, &times, IpfOptions::default()).unwrap();
        let u0 = sol.factors().u0().values();
        let ts = P::theta_star(0.0, 0.0) / u0[g.center_index()];
        let peak = u0.iter().fold(0.0f64, |a, &b| a.max(b));
        for (i, &x) in g.nodes().iter().enumerate() {
            assert!((u0[i] * ts - P::theta_star(x, 0.0)).abs() / (peak * ts) < 1e-6);
        }
        for k in 0..times.n_slices() {
            let t = times.time(k);
            for (i, &x) in g.nodes().iter().enumerate() {
                if sol.rho().at(k, i) >= 1e-12 && i > 0 && i + 1 < g.len() {
                    assert!((sol.drift().at(k, i) - P::drift(x, t)).abs() < 1e-4);
                    assert!((sol.drift_star().at(k, i) - P::drift_star(x, t)).abs() < 1e-4);
                }
            }
        }
        assert!((sol.drift_star().interpolate(1.0, 0.0) - 1.0).abs() < 1e-4);
    }

    #[test]
    fn transitions_obey_time_reversal_and_normalization() {
        let g = Grid1D::new(-10.0, 10.0, 257).unwrap();
        let bd = BoundaryData::from_fns(g, 1.0, gaussian(1.0), |x| gaussian(1.5)(x - 0.5)).unwrap();
        let kernel = Kernel::Heat { nu: 1.0 };
        let times = TimeGrid::new(0.0, 1.0, 10).unwrap();
        let sol = solve_bridge(&kernel, &bd, &times, IpfOptions::default()).unwrap();
        let (ks, kt) = (2, 7);
        let iy = g.nearest(0.3);
        let p: Vec<f64> = (0..g.len())
            .map(|ix| forward_transition(&sol, &kernel, (iy, ks), (ix, kt)).unwrap())
            .collect();
        assert!((trapezoid(&g, &p) - 1.0).abs() < 1e-6);
        let ix = g.nearest(-0.4);
        let flowed: Vec<f64> = (0..g.len())
            .map(|j| {
                sol.rho().at(ks, j) * forward_transition(&sol, &kernel, (j, ks), (ix, kt)).unwrap()
            })
            .collect();
        assert!((trapezoid(&g, &flowed) - sol.rho().at(kt, ix)).abs() < 1e-6);
        let back: Vec<f64> = (0..g.len())
            .map(|j| {
                sol.rho().at(kt, j) * backward_transition(&sol, &kernel, (iy, ks), (j, kt)).unwrap()
            })
            .collect();
        assert!((trapezoid(&g, &back) - sol.rho().at(ks, iy)).abs() < 1e-6);
        for &(a, b) in &[(100, 140), (128, 128), (90, 200)] {
            let lhs =
                sol.rho().at(kt, b) * backward_transition(&sol, &kernel, (a, ks), (b, kt)).unwrap();
            let rhs =
                forward_transition(&sol, &kernel, (a, ks), (b, kt)).unwrap() * sol.rho().at(ks, a);
            assert!((lhs / rhs - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn free_case_transition_is_the_kernel() {
        let g = Grid1D::new(-10.0, 10.0, 257).unwrap();
        let u0 = ScalarField::from_fn(g, 0.0, gaussian(1.0)).unwrap();
        let one = ScalarField::constant(g, 1.0, 1.0).unwrap();
        let f = BridgeFactors::from_pair(u0, one, 1.0).unwrap();
        let kernel = Kernel::Heat { nu: 1.0 };
        let times = TimeGrid::new(0.0, 1.0, 4).unwrap();
        let sol = propagate_factors(&f, &kernel, &times).unwrap();
        let c = g.center_index();
        let p = forward_transition(&sol, &kernel, (c, 0), (c + 3, 2)).unwrap();
        let k = kernel.evaluate(0.0, 0.0, g.node(c + 3), 0.5).unwrap();
        assert!((p / k - 1.0).abs() < 1e-9);
    }

    #[test]
    fn division_guard() {
        assert!(matches!(
            guarded(1e-310f64, "v"),
            Err(Error::DivisionGuard(_))
        ));
        assert_eq!(guarded(2.0f64, "v").unwrap(), 2.0);
    }
}
