//! Verification suites for the free packet and the two counter-example kernels.

use crate::bridge::{solve_boundary_system, solve_bridge, BoundaryData, BridgeFactors, IpfOptions};
use crate::burgers::{compatibility_potential, deviation_from_constant};
use crate::error::Result;
use crate::kernel::{check_chapman_kolmogorov, extract_forward_drift, short_time_moments, Kernel};
use crate::numgrid::{trapezoid, FieldSeries, Grid1D, ScalarField, TailMask, TimeGrid};
use crate::scalar::Real;

use super::packet::QuantumFreePacket as P;
use super::report::{convergence_order, SuiteReport};
use super::residuals::{
    example1_backward, example1_forward, heat_burgers, packet_acceleration,
    packet_backward_transport, packet_forced_burgers, packet_forward_transport,
    packet_parabolic_pair, packet_quantum_potential, pinned_forward,
};

/// Terminal time of every gallery scenario.
pub const GALLERY_T_END: f64 = 1.0;

/// Scenario names understood by [`run_suite`].
pub const SCENARIOS: [&str; 3] = ["quantum-free", "example1", "example2"];

/// Fewest time steps on `[0, 1]` used when recovering a potential from a drift.
pub const COMPATIBILITY_MIN_STEPS: usize = 400;

/// Domain stretch applied when bridge factors and drifts are compared with the
/// closed forms; the spacing is kept.
pub const DRIFT_DOMAIN_STRETCH: f64 = 1.6;

/// Runs the suite registered under `name`.
pub fn run_suite<T: Real>(
    name: &str,
    grid: &Grid1D<T>,
    times: &TimeGrid<T>,
) -> Result<SuiteReport<T>> {
    match name {
        "quantum-free" => quantum_free_suite(grid, times),
        "example1" => example1_suite(grid, times),
        "example2" => example2_suite(grid, times),
        other => Err(crate::Error::InvalidArgument(format!(
            "unknown scenario {other:?} (expected one of {})",
            SCENARIOS.join(", ")
        ))),
    }
}

/// Residuals of the pair of parabolic equations solved by `theta` and `theta*`.
pub fn verify_parabolic_system<T: Real>(grid: &Grid1D<T>, times: &TimeGrid<T>) -> Result<(T, T)> {
    packet_parabolic_pair(grid, times)
}

/// `max |a - lambda b| / max |a|` with the least-squares `lambda`.
pub fn gauge_aligned_error<T: Real>(a: &[T], b: &[T]) -> T {
    let (ab, bb) = a
        .iter()
        .zip(b)
        .fold((T::zero(), T::zero()), |(ab, bb), (&x, &y)| {
            (ab + x * y, bb + y * y)
        });
    let lambda = ab / bb;
    let scale = a.iter().fold(T::zero(), |m, &x| m.max(x.abs()));
    a.iter()
        .zip(b)
        .fold(T::zero(), |m, (&x, &y)| m.max((x - lambda * y).abs()))
        / scale
}

/// Same spacing as `grid` on a domain stretched by [`DRIFT_DOMAIN_STRETCH`].
pub fn stretched_grid<T: Real>(grid: &Grid1D<T>) -> Result<Grid1D<T>> {
    let stretch = T::lit(DRIFT_DOMAIN_STRETCH);
    let cells = (T::from_count(grid.len() - 1) * stretch)
        .ceil()
        .to_usize()
        .unwrap_or(1);
    Grid1D::new(grid.x_min() * stretch, grid.x_max() * stretch, cells + 1)
}

/// Packet boundary densities at `0` and `T = 1`.
pub fn packet_boundary<T: Real>(grid: &Grid1D<T>) -> Result<BoundaryData<T>> {
    let t_end = T::lit(GALLERY_T_END);
    BoundaryData::from_fns(*grid, t_end, |x| P::rho(x, T::zero()), |x| P::rho(x, t_end))
}

/// Factor pair fitted with `kernel` to the packet boundary densities.
pub fn packet_factors<T: Real>(kernel: &Kernel<T>, grid: &Grid1D<T>) -> Result<BridgeFactors<T>> {
    let bd = packet_boundary(grid)?;
    let k = kernel.matrix(grid, T::zero(), bd.t_end())?;
    solve_boundary_system(&k, &bd, IpfOptions::default())
}

/// Gauge-aligned errors of fitted factors against `theta*(., 0)` and `theta(., T)`.
pub fn packet_factor_errors<T: Real>(f: &BridgeFactors<T>) -> (T, T) {
    let t_end = T::lit(GALLERY_T_END);
    let nodes = f.grid().nodes();
    let u0: Vec<T> = nodes.iter().map(|&x| P::theta_star(x, T::zero())).collect();
    let vt: Vec<T> = nodes.iter().map(|&x| P::theta(x, t_end)).collect();
    (
        gauge_aligned_error(&u0, f.u0().values()),
        gauge_aligned_error(&vt, f.v_t().values()),
    )
}

fn l1_distance<T: Real>(grid: &Grid1D<T>, a: &[T], b: &[T]) -> T {
    let d: Vec<T> = a.iter().zip(b).map(|(&x, &y)| (x - y).abs()).collect();
    trapezoid(grid, &d)
}

/// L1 error of `rho(., t) = int rho(y, s) k(y, s, ., t) dy` for the packet density.
fn propagation_error<T: Real>(kernel: &Kernel<T>, grid: &Grid1D<T>, s: T, t: T) -> Result<T> {
    let m = kernel.matrix(grid, s, t)?;
    let nodes = grid.nodes();
    let rho_s: Vec<T> = nodes.iter().map(|&x| P::rho(x, s)).collect();
    let rho_t: Vec<T> = nodes.iter().map(|&x| P::rho(x, t)).collect();
    Ok(l1_distance(grid, &m.push_forward(&rho_s), &rho_t))
}

const PROPAGATION_PAIRS: [(f64, f64); 4] = [(0.0, 0.5), (0.0, 1.0), (0.5, 1.0), (0.9, 1.0)];

fn propagation_checks<T: Real>(
    report: &mut SuiteReport<T>,
    kernel: &Kernel<T>,
    grid: &Grid1D<T>,
) -> Result<()> {
    let mut worst = T::zero();
    for (s, t) in PROPAGATION_PAIRS {
        worst = worst.max(propagation_error(kernel, grid, T::lit(s), T::lit(t))?);
    }
    report.below("density propagation (L1)", worst, 1e-6);
    Ok(())
}

/// L1 errors of both marginal identities of the factor pair `(theta*(., 0), theta(., T))`.
fn schrodinger_system_errors<T: Real>(kernel: &Kernel<T>, grid: &Grid1D<T>) -> Result<(T, T)> {
    let t_end = T::lit(GALLERY_T_END);
    let m = kernel.matrix(grid, T::zero(), t_end)?;
    let nodes = grid.nodes();
    let u0: Vec<T> = nodes.iter().map(|&x| P::theta_star(x, T::zero())).collect();
    let vt: Vec<T> = nodes.iter().map(|&x| P::theta(x, t_end)).collect();
    let rho0: Vec<T> = nodes.iter().map(|&x| P::rho(x, T::zero())).collect();
    let rhot: Vec<T> = nodes.iter().map(|&x| P::rho(x, t_end)).collect();
    let left: Vec<T> = m
        .pull_back(&vt)
        .iter()
        .zip(&u0)
        .map(|(&a, &b)| a * b)
        .collect();
    let right: Vec<T> = m
        .push_forward(&u0)
        .iter()
        .zip(&vt)
        .map(|(&a, &b)| a * b)
        .collect();
    Ok((
        l1_distance(grid, &left, &rho0),
        l1_distance(grid, &right, &rhot),
    ))
}

/// Max over the central half of the grid of `|int k(x,s,y,t) f(y,t) dy - f(x,s)|`
/// (`backward`) or `|int f(y,s) k(y,s,x,t) dy - f(x,t)|` (forward).
fn weighted_identity_error<T: Real>(
    kernel: &Kernel<T>,
    grid: &Grid1D<T>,
    s: T,
    t: T,
    f: impl Fn(T, T) -> T,
    backward: bool,
) -> Result<T> {
    let m = kernel.matrix(grid, s, t)?;
    let nodes = grid.nodes();
    let (got, want): (Vec<T>, Vec<T>) = if backward {
        let ft: Vec<T> = nodes.iter().map(|&x| f(x, t)).collect();
        (m.pull_back(&ft), nodes.iter().map(|&x| f(x, s)).collect())
    } else {
        let fs: Vec<T> = nodes.iter().map(|&x| f(x, s)).collect();
        (
            m.push_forward(&fs),
            nodes.iter().map(|&x| f(x, t)).collect(),
        )
    };
    let n = grid.len();
    Ok((n / 4..=n - 1 - n / 4).fold(T::zero(), |w, i| w.max((got[i] - want[i]).abs())))
}

/// Suite for the free Gaussian packet and its bridge.
pub fn quantum_free_suite<T: Real>(
    grid: &Grid1D<T>,
    times: &TimeGrid<T>,
) -> Result<SuiteReport<T>> {
    let mut r = SuiteReport::new("quantum-free");
    let mut identity = T::zero();
    for t in times.times() {
        for x in grid.nodes() {
            let rho = P::rho(x, t);
            identity = identity
                .max((P::theta(x, t) * P::theta_star(x, t) - rho).abs() / rho)
                .max((P::psi(x, t).norm_sqr() - rho).abs() / rho);
        }
    }
    r.below("factor and wave-function products", identity, 1e-12);

    r.second_order(
        "quantum potential",
        convergence_order(grid, times, packet_quantum_potential)?,
    );
    r.second_order(
        "theta equation",
        convergence_order(grid, times, |g, ts| Ok(verify_parabolic_system(g, ts)?.0))?,
    );
    r.second_order(
        "theta* equation",
        convergence_order(grid, times, |g, ts| Ok(verify_parabolic_system(g, ts)?.1))?,
    );
    r.second_order(
        "forward Fokker-Planck",
        convergence_order(grid, times, packet_forward_transport)?,
    );
    r.second_order(
        "backward Fokker-Planck",
        convergence_order(grid, times, packet_backward_transport)?,
    );
    r.second_order(
        "forced Burgers for b*",
        convergence_order(grid, times, packet_forced_burgers)?,
    );
    r.second_order(
        "unforced Burgers",
        convergence_order(grid, times, heat_burgers)?,
    );
    r.second_order(
        "acceleration constraint",
        convergence_order(grid, times, packet_acceleration)?,
    );

    let steps = times.n_steps().max(COMPATIBILITY_MIN_STEPS);
    let dense = TimeGrid::new(T::zero(), T::lit(GALLERY_T_END), steps)?;
    let b = FieldSeries::from_fn(*grid, dense, P::drift)?;
    let rho = FieldSeries::from_fn(*grid, dense, P::rho)?;
    let omega_half = FieldSeries::from_fn(*grid, dense, P::omega_half)?;
    let recovered = compatibility_potential(&b, T::one())?;
    r.below(
        "compatibility potential",
        deviation_from_constant(&recovered.c, &omega_half, TailMask::density(&rho))?,
        1e-6,
    );

    let wide = stretched_grid(grid)?;
    let (eu, ev) = packet_factor_errors(&packet_factors(&Kernel::QuantumK1, &wide)?);
    r.below("bridge factor u0", eu, 1e-6);
    r.below("bridge factor vT", ev, 1e-6);

    let (db, db_star) = bridge_drift_errors(grid, times)?;
    r.below("bridge forward drift", db, 1e-4);
    r.below("bridge backward drift", db_star, 1e-4);
    Ok(r)
}

/// Tail-masked max errors of the bridge drifts against the closed forms, solved
/// with the first dressed kernel on [`stretched_grid`].
pub fn bridge_drift_errors<T: Real>(grid: &Grid1D<T>, times: &TimeGrid<T>) -> Result<(T, T)> {
    let wide = stretched_grid(grid)?;
    let sol = solve_bridge(
        &Kernel::QuantumK1,
        &packet_boundary(&wide)?,
        times,
        IpfOptions::default(),
    )?;
    let exact_b = FieldSeries::from_fn(wide, *times, P::drift)?;
    let exact_b_star = FieldSeries::from_fn(wide, *times, P::drift_star)?;
    let mask = TailMask::density(sol.rho());
    let worst = |a: &FieldSeries<T>, b: &FieldSeries<T>| {
        let mut w = T::zero();
        for k in 0..a.n_slices() {
            for i in 1..wide.len() - 1 {
                if mask.keeps(k, i) {
                    w = w.max((a.at(k, i) - b.at(k, i)).abs());
                }
            }
        }
        w
    };
    Ok((
        worst(sol.drift(), &exact_b),
        worst(sol.drift_star(), &exact_b_star),
    ))
}

/// Suite for the zero-drift Gaussian kernel with variance `t^2 - s^2` and its
/// dressed version.
pub fn example1_suite<T: Real>(grid: &Grid1D<T>, times: &TimeGrid<T>) -> Result<SuiteReport<T>> {
    let mut r = SuiteReport::new("example1");
    propagation_checks(&mut r, &Kernel::Example1, grid)?;
    r.second_order(
        "forward equation in (x, t)",
        convergence_order(grid, times, example1_forward)?,
    );
    r.second_order(
        "backward equation in (y, s)",
        convergence_order(grid, times, example1_backward)?,
    );
    let (s, tau, t) = (T::zero(), T::lit(0.5), T::one());
    r.below(
        "Chapman-Kolmogorov (plain)",
        check_chapman_kolmogorov(&Kernel::Example1, s, tau, t, grid)?,
        1e-6,
    );
    r.below(
        "Chapman-Kolmogorov (dressed)",
        check_chapman_kolmogorov(&Kernel::QuantumK1, s, tau, t, grid)?,
        1e-6,
    );
    let mut theta_id = T::zero();
    let mut theta_star_id = T::zero();
    for (s, t) in [(0.0, 1.0), (0.5, 1.0)] {
        let (s, t) = (T::lit(s), T::lit(t));
        theta_id = theta_id.max(weighted_identity_error(
            &Kernel::QuantumK1,
            grid,
            s,
            t,
            P::theta,
            true,
        )?);
        theta_star_id = theta_star_id.max(weighted_identity_error(
            &Kernel::QuantumK1,
            grid,
            s,
            t,
            P::theta_star,
            false,
        )?);
    }
    r.below("theta is harmonic for the dressed kernel", theta_id, 1e-6);
    r.below(
        "theta* is co-harmonic for the dressed kernel",
        theta_star_id,
        1e-6,
    );
    let (left, right) = schrodinger_system_errors(&Kernel::QuantumK1, grid)?;
    r.below("Schrodinger system, initial marginal", left, 1e-6);
    r.below("Schrodinger system, final marginal", right, 1e-6);

    let dts: Vec<T> = crate::kernel::DEFAULT_DT_LIST
        .iter()
        .map(|&d| T::lit(d))
        .collect();
    for t in [0.5, 1.0] {
        let m = short_time_moments(&Kernel::Example1, T::lit(0.5), T::lit(t), &dts)?;
        r.below(
            format!("diffusion coefficient at t = {t}"),
            (m.second.value / T::lit(2.0 * t) - T::one()).abs(),
            0.02,
        );
        r.below(format!("drift rate at t = {t}"), m.first.value.abs(), 1e-3);
        r.below(format!("leak rate at t = {t}"), m.leak.value.abs(), 1e-3);
    }
    let (x, t) = (T::one(), T::lit(0.5));
    r.below(
        "kernel drift vanishes",
        extract_forward_drift(&Kernel::Example1, x, t, &dts)?
            .value
            .abs(),
        1e-3,
    );
    r.above("bridge drift differs", P::drift(x, t).abs(), 0.1);
    Ok(r)
}

/// `|int k(x1, t1, x, t1 + delta) f(x) dx - f(x1)|` on a local grid around the kernel peak.
fn delta_limit_error<T: Real>(
    kernel: &Kernel<T>,
    x1: T,
    t1: T,
    delta: T,
    f: impl Fn(T) -> T,
) -> Result<T> {
    let t2 = t1 + delta;
    let (centre, width) = kernel
        .spread(x1, t1, t2)
        .expect("analytic kernels report a spread");
    let half = T::lit(12.0) * width;
    let local = Grid1D::new(centre - half, centre + half, 4001)?;
    let values = ScalarField::from_fn(local, t2, |x| {
        kernel.log_evaluate_unchecked(x1, t1, x, t2).exp() * f(x)
    })?;
    Ok((values.integrate()? - f(x1)).abs())
}

/// Suite for the pinned non-Markovian kernel, its dressed version and the
/// Markov family that shares its one-time marginals.
pub fn example2_suite<T: Real>(grid: &Grid1D<T>, times: &TimeGrid<T>) -> Result<SuiteReport<T>> {
    let mut r = SuiteReport::new("example2");
    propagation_checks(&mut r, &Kernel::PinnedExample2, grid)?;
    let (s, tau, t) = (T::zero(), T::lit(0.5), T::one());
    r.above(
        "Chapman-Kolmogorov violation",
        check_chapman_kolmogorov(&Kernel::PinnedExample2, s, tau, t, grid)?,
        0.01,
    );
    let (left, right) = schrodinger_system_errors(&Kernel::QuantumK2, grid)?;
    r.below("Schrodinger system, initial marginal", left, 1e-6);
    r.below("Schrodinger system, final marginal", right, 1e-6);

    let dts: Vec<T> = crate::kernel::DEFAULT_DT_LIST
        .iter()
        .map(|&d| T::lit(d))
        .collect();
    let mut drift_err = T::zero();
    for (x, t) in [(2.0, 0.0), (1.0, 0.5), (1.0, 1.0)] {
        let (x, t) = (T::lit(x), T::lit(t));
        let got = extract_forward_drift(&Kernel::PinnedExample2, x, t, &dts)?.value;
        drift_err = drift_err.max((got - P::drift(x, t)).abs());
    }
    r.below("extracted drift", drift_err, 1e-3);
    r.second_order(
        "forward equation with pinned drift",
        convergence_order(grid, times, pinned_forward)?,
    );

    let (y0, s0) = (T::one(), T::zero());
    let family = Kernel::MarkovFamily { y: y0, s: s0 };
    let probe = |x: T| (-(x - T::lit(0.3)) * (x - T::lit(0.3)) / T::lit(2.0)).exp();
    let mut delta = T::zero();
    for (x1, t1) in [(0.0, 0.2), (1.5, 0.5), (-1.0, 0.9)] {
        delta = delta.max(delta_limit_error(
            &family,
            T::lit(x1),
            T::lit(t1),
            T::lit(1e-8),
            probe,
        )?);
    }
    r.below("family delta limit", delta, 1e-6);

    let pinned = Kernel::PinnedExample2;
    let (t1, t2) = (T::lit(0.5), T::one());
    let m = family.matrix(grid, t1, t2)?;
    let nodes = grid.nodes();
    let p1: Vec<T> = nodes
        .iter()
        .map(|&x| pinned.log_evaluate_unchecked(y0, s0, x, t1).exp())
        .collect();
    let flow = m.push_forward(&p1);
    let flow_err = nodes.iter().zip(&flow).fold(T::zero(), |w, (&x, &got)| {
        w.max((got - pinned.log_evaluate_unchecked(y0, s0, x, t2).exp()).abs())
    });
    r.below("family marginal flow", flow_err, 1e-6);
    r.below(
        "family Chapman-Kolmogorov",
        check_chapman_kolmogorov(&family, T::lit(0.25), T::lit(0.5), T::one(), grid)?,
        1e-6,
    );

    let wide = stretched_grid(grid)?;
    let k1 = packet_factors(&Kernel::QuantumK1, &wide)?;
    let k2 = packet_factors(&Kernel::QuantumK2, &wide)?;
    r.below(
        "same factor pair as the first kernel",
        gauge_aligned_error(k1.u0().values(), k2.u0().values())
            .max(gauge_aligned_error(k1.v_t().values(), k2.v_t().values())),
        1e-6,
    );
    let (eu, ev) = packet_factor_errors(&k2);
    r.below("factor pair matches theta*, theta", eu.max(ev), 1e-6);
    Ok(r)
}
