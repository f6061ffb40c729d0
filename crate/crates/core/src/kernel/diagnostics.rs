use super::Kernel;
use crate::error::{Error, Result};
use crate::numgrid::Grid1D;
use crate::scalar::Real;

/// Default `dt` ladder for short-time limits.
pub const DEFAULT_DT_LIST: [f64; 3] = [1e-2, 5e-3, 2.5e-3];

/// Radius `epsilon` of the leak check.
pub const LEAK_RADIUS: f64 = 1.0;

/// Points of the local quadrature grid used for short-time moments.
const LOCAL_POINTS: usize = 4001;

/// Maximum over `(y, x)` of `|int k(y,s,z,tau) k(z,tau,x,t) dz - k(y,s,x,t)|`.
///
/// `z` runs over the whole grid; `y` and `x` run over its central half so that
/// the intermediate integrand is not cut off by the finite domain.
pub fn check_chapman_kolmogorov<T: Real>(
    kernel: &Kernel<T>,
    s: T,
    tau: T,
    t: T,
    grid: &Grid1D<T>,
) -> Result<T> {
    if !(s < tau && tau < t) {
        return Err(Error::InvalidArgument(format!(
            "need s < tau < t, got ({s}, {tau}, {t})"
        )));
    }
    let first = kernel.matrix(grid, s, tau)?;
    let second = kernel.matrix(grid, tau, t)?;
    let direct = kernel.matrix(grid, s, t)?;
    let composed = first.compose(&second)?;
    let (lo, hi) = central_half(grid);
    let mut worst = T::zero();
    for i in lo..=hi {
        for j in lo..=hi {
            worst = worst.max((composed.get(i, j) - direct.get(i, j)).abs());
        }
    }
    Ok(worst)
}

fn central_half<T: Real>(grid: &Grid1D<T>) -> (usize, usize) {
    let n = grid.len();
    (n / 4, n - 1 - n / 4)
}

/// Richardson-extrapolated `dt -> 0` limit of a sequence of finite-`dt` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Extrapolated<T> {
    pub value: T,
    /// `(dt, raw value)` pairs the limit was built from.
    pub raw: Vec<(T, T)>,
    /// Whether the raw values approach the limit monotonically.
    pub monotone: bool,
}

impl<T: Real> Extrapolated<T> {
    /// Neville extrapolation of the polynomial through `(dt_i, f_i)` to `dt = 0`.
    pub fn from_samples(raw: Vec<(T, T)>) -> Self {
        let n = raw.len();
        let mut p: Vec<T> = raw.iter().map(|&(_, f)| f).collect();
        for level in 1..n {
            for i in 0..n - level {
                let (hi, hj) = (raw[i].0, raw[i + level].0);
                p[i] = (hi * p[i + 1] - hj * p[i]) / (hi - hj);
            }
        }
        let value = p[0];
        let monotone = raw.windows(2).all(|w| {
            let (a, b) = ((w[0].1 - value).abs(), (w[1].1 - value).abs());
            b <= a || a <= T::epsilon() * value.abs().max(T::one()) * T::lit(16.0)
        });
        Self {
            value,
            raw,
            monotone,
        }
    }
}

/// Short-time rates of the displacement law out of `(y, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentRates<T> {
    /// `(1/dt) P(|X - y| > epsilon)`.
    pub leak: Extrapolated<T>,
    /// `(1/dt) E[X - y]`: the forward drift.
    pub first: Extrapolated<T>,
    /// `(1/dt) E[(X - y)^2]`: twice the diffusion coefficient.
    pub second: Extrapolated<T>,
}

impl<T: Real> MomentRates<T> {
    pub fn monotone(&self) -> bool {
        self.leak.monotone && self.first.monotone && self.second.monotone
    }
}

fn validate_dt_list<T: Real>(dt_list: &[T]) -> Result<()> {
    if dt_list.len() < 2 {
        return Err(Error::InvalidArgument(
            "need at least two dt values to extrapolate".into(),
        ));
    }
    if dt_list.iter().any(|&d| !(d > T::zero())) || dt_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument(
            "dt values must be positive and strictly decreasing".into(),
        ));
    }
    Ok(())
}

/// Quadrature nodes and values of `x -> k(y, t, x, t + dt)`.
fn displacement_profile<T: Real>(
    kernel: &Kernel<T>,
    y: T,
    t: T,
    dt: T,
) -> Result<(Grid1D<T>, Vec<T>)> {
    let grid = match (kernel, kernel.spread(y, t, t + dt)) {
        (_, Some((center, width))) => {
            let eps = T::lit(LEAK_RADIUS);
            let half = (T::lit(12.0) * width + (center - y).abs()).max(T::lit(2.0) * eps);
            Grid1D::new(y - half, y + half, LOCAL_POINTS)?
        }
        (Kernel::NumericFk(fk), None) => fk.grid,
        _ => unreachable!("analytic kernels always report a spread"),
    };
    let values = grid
        .nodes()
        .iter()
        .map(|&x| kernel.evaluate(y, t, x, t + dt))
        .collect::<Result<Vec<_>>>()?;
    Ok((grid, values))
}

/// Leak, first- and second-moment rates of `k(y, t, ., t + dt)` as `dt -> 0`.
pub fn short_time_moments<T: Real>(
    kernel: &Kernel<T>,
    y: T,
    t: T,
    dt_list: &[T],
) -> Result<MomentRates<T>> {
    validate_dt_list(dt_list)?;
    let eps = T::lit(LEAK_RADIUS);
    let mut leak = Vec::with_capacity(dt_list.len());
    let mut first = Vec::with_capacity(dt_list.len());
    let mut second = Vec::with_capacity(dt_list.len());
    for &dt in dt_list {
        let (grid, p) = displacement_profile(kernel, y, t, dt)?;
        let (mut m_out, mut m1, mut m2) = (T::zero(), T::zero(), T::zero());
        for (i, (&x, &pi)) in grid.nodes().iter().zip(&p).enumerate() {
            let w = grid.weight(i) * pi;
            let d = x - y;
            if d.abs() > eps {
                m_out = m_out + w;
            }
            m1 = m1 + w * d;
            m2 = m2 + w * d * d;
        }
        leak.push((dt, m_out / dt));
        first.push((dt, m1 / dt));
        second.push((dt, m2 / dt));
    }
    let rates = MomentRates {
        leak: Extrapolated::from_samples(leak),
        first: Extrapolated::from_samples(first),
        second: Extrapolated::from_samples(second),
    };
    if !rates.monotone() {
        log::warn!(
            "non-monotone short-time extrapolation for {} kernel at y = {y}, t = {t}",
            kernel.tag()
        );
    }
    Ok(rates)
}

/// Forward drift `lim (1/dt) [int x' k(x, t, x', t + dt) dx' - x]`.
pub fn extract_forward_drift<T: Real>(
    kernel: &Kernel<T>,
    x: T,
    t: T,
    dt_list: &[T],
) -> Result<Extrapolated<T>> {
    Ok(short_time_moments(kernel, x, t, dt_list)?.first)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dts() -> Vec<f64> {
        DEFAULT_DT_LIST.to_vec()
    }

    #[test]
    fn neville_recovers_polynomial_limits() {
        let raw = vec![
            (0.01, 2.0 + 3.0 * 0.01 - 7.0 * 1e-4),
            (0.005, 2.0 + 0.015 - 7.0 * 2.5e-5),
            (0.0025, 2.0 + 0.0075 - 7.0 * 6.25e-6),
        ];
        let e = Extrapolated::from_samples(raw);
        assert!((e.value - 2.0f64).abs() < 1e-12);
        assert!(e.monotone);
        let zigzag = Extrapolated::from_samples(vec![(0.01, 1.0), (0.005, 3.0), (0.0025, 1.5)]);
        assert!(!zigzag.monotone);
    }

    #[test]
    fn heat_kernel_moments() {
        let k = Kernel::Heat { nu: 1.0 };
        for &(y, t) in &[(0.0, 0.3), (2.5, 1.0)] {
            let r = short_time_moments(&k, y, t, &dts()).unwrap();
            assert!(r.leak.value.abs() < 1e-3);
            assert!(r.first.value.abs() < 1e-3);
            assert!((r.second.value - 2.0).abs() < 0.04);
        }
    }

    #[test]
    fn example1_second_moment_rate_is_twice_the_time() {
        for &t in &[0.5, 1.0] {
            let r = short_time_moments(&Kernel::Example1, 0.7, t, &dts()).unwrap();
            assert!((r.second.value - 2.0 * t).abs() < 0.02 * 2.0 * t);
            assert!(r.first.value.abs() < 1e-3);
            assert!(r.leak.value.abs() < 1e-3);
        }
    }

    #[test]
    fn leak_with_halved_radius() {
        // epsilon/2 still far beyond the O(sqrt(dt)) spread
        let r = short_time_moments(&Kernel::Heat { nu: 1.0 }, 0.0, 0.5, &dts()).unwrap();
        let (_, sd) = Kernel::Heat { nu: 1.0 }.spread(0.0, 0.5, 0.51).unwrap();
        assert!(0.5 * LEAK_RADIUS > 3.0 * sd);
        assert!(r.leak.value < 1e-3);
    }

    #[test]
    fn pinned_drift() {
        let k = Kernel::PinnedExample2;
        let d = extract_forward_drift(&k, 2.0, 0.0, &dts()).unwrap();
        assert!((d.value + 2.0).abs() < 1e-3, "{}", d.value);
        let d = extract_forward_drift(&k, 1.3, 1.0, &dts()).unwrap();
        assert!(d.value.abs() < 1e-3);
        let d = extract_forward_drift(&Kernel::Heat { nu: 1.0 }, 0.4, 0.2, &dts()).unwrap();
        assert!(d.value.abs() < 1e-3);
    }

    #[test]
    fn rejects_bad_dt_lists() {
        let k = Kernel::Heat { nu: 1.0 };
        assert!(short_time_moments(&k, 0.0, 0.0, &[0.01]).is_err());
        assert!(short_time_moments(&k, 0.0, 0.0, &[0.01, 0.02]).is_err());
        assert!(short_time_moments(&k, 0.0, 0.0, &[0.01, -0.02]).is_err());
    }

    #[test]
    fn chapman_kolmogorov_discriminates() {
        let g = Grid1D::new(-10.0, 10.0, 257).unwrap();
        let heat = check_chapman_kolmogorov(&Kernel::Heat { nu: 1.0 }, 0.0, 0.5, 1.0, &g).unwrap();
        assert!(heat < 1e-6, "{heat}");
        let pinned = check_chapman_kolmogorov(&Kernel::PinnedExample2, 0.0, 0.5, 1.0, &g).unwrap();
        assert!(pinned > 0.01, "{pinned}");
        assert!(check_chapman_kolmogorov(&Kernel::Example1, 0.5, 0.5, 1.0, &g).is_err());
    }
}
