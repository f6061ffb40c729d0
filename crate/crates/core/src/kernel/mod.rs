//! Two-time integral kernels `k(y, s, x, t)`, `0 <= s < t`.
//!
//! Analytic kernels are evaluated pointwise. Feynman-Kac kernels of a
//! potential are generated numerically as fundamental solutions of
//! `du/dt = nu u'' - c u` (see [`feynman_kac`]).

mod diagnostics;
pub mod feynman_kac;
mod matrix;

use std::fmt;
use std::sync::Arc;

pub use diagnostics::{
    check_chapman_kolmogorov, extract_forward_drift, short_time_moments, Extrapolated, MomentRates,
    DEFAULT_DT_LIST, LEAK_RADIUS,
};
pub use feynman_kac::{solve_feynman_kac, FkPropagator, Potential};
pub use matrix::KernelMatrix;

use crate::error::{Error, Result};
use crate::gallery::{pinned_coefficient, QuantumFreePacket};
use crate::numgrid::Grid1D;
use crate::scalar::Real;

/// Numerically generated Feynman-Kac kernel bound to a grid.
#[derive(Clone)]
pub struct NumericFk<T> {
    pub potential: Potential<T>,
    pub grid: Grid1D<T>,
}

impl<T: fmt::Debug> fmt::Debug for NumericFk<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NumericFk")
            .field("potential", &self.potential)
            .field("grid", &self.grid)
            .finish()
    }
}

/// The kernel families the toolkit knows about.
#[derive(Debug, Clone)]
pub enum Kernel<T> {
    /// Free heat kernel with diffusion constant `nu`.
    Heat { nu: T },
    /// Gaussian law with variance `t^2 - s^2`: zero drift, diffusion coefficient `t`.
    Example1,
    /// `Example1` dressed by the ratio `theta(y,s) / theta(x,t)` of the packet factor.
    QuantumK1,
    /// Pinned propagator `N(c_{t,s} y, 2(t-s))`; reproduces the packet density but
    /// is not a semigroup.
    PinnedExample2,
    /// `PinnedExample2` dressed by `theta(y,s) / theta(x,t)`.
    QuantumK2,
    /// Markov family labelled by `(y, s)`: `N(x1 + (c_{t2,s} - c_{t1,s}) y, 2(t2-t1))`.
    MarkovFamily { y: T, s: T },
    /// Fundamental solution of the parabolic equation with a potential.
    NumericFk(Arc<NumericFk<T>>),
}

impl<T: Real> Kernel<T> {
    pub fn numeric_fk(potential: Potential<T>, grid: Grid1D<T>) -> Self {
        Kernel::NumericFk(Arc::new(NumericFk { potential, grid }))
    }

    /// Tag used in scenario files.
    pub fn tag(&self) -> &'static str {
        match self {
            Kernel::Heat { .. } => "heat",
            Kernel::Example1 => "example1",
            Kernel::QuantumK1 => "quantum-k1",
            Kernel::PinnedExample2 => "pinned-example2",
            Kernel::QuantumK2 => "quantum-k2",
            Kernel::MarkovFamily { .. } => "markov-family",
            Kernel::NumericFk(_) => "numeric-fk",
        }
    }

    /// Diffusion constant entering the drift formulas; rescaled units use 1.
    pub fn nu(&self) -> T {
        match self {
            Kernel::Heat { nu } => *nu,
            Kernel::NumericFk(fk) => fk.potential.nu(),
            _ => T::one(),
        }
    }

    /// Whether `x -> k(y, s, x, t)` is a probability density.
    pub fn is_stochastic(&self) -> bool {
        match self {
            Kernel::Heat { .. }
            | Kernel::Example1
            | Kernel::PinnedExample2
            | Kernel::MarkovFamily { .. } => true,
            Kernel::NumericFk(fk) => fk.potential.is_zero(),
            Kernel::QuantumK1 | Kernel::QuantumK2 => false,
        }
    }

    pub(crate) fn check_times(&self, s: T, t: T) -> Result<()> {
        if !(s.is_finite() && t.is_finite()) || s < T::zero() {
            return Err(Error::InvalidArgument(format!(
                "kernel times must be finite and non-negative, got s = {s}, t = {t}"
            )));
        }
        if s >= t {
            return Err(Error::TimeOrdering {
                s: s.as_f64(),
                t: t.as_f64(),
            });
        }
        if let Kernel::MarkovFamily { s: s0, .. } = self {
            if s < *s0 {
                return Err(Error::InvalidArgument(format!(
                    "markov family labelled at s = {s0} is defined for times >= {s0}, got {s}"
                )));
            }
        }
        Ok(())
    }

    /// `k(y, s, x, t)`.
    pub fn evaluate(&self, y: T, s: T, x: T, t: T) -> Result<T> {
        self.check_times(s, t)?;
        Ok(match self {
            Kernel::NumericFk(fk) => fk.evaluate(y, s, x, t)?,
            _ => self.log_evaluate_unchecked(y, s, x, t).exp(),
        })
    }

    /// `ln k` for the analytic kinds; assumes checked times.
    pub(crate) fn log_evaluate_unchecked(&self, y: T, s: T, x: T, t: T) -> T {
        let form = self
            .gaussian_form(s, t)
            .expect("numeric kernels have no closed form");
        let dressing = if form.dressed {
            QuantumFreePacket::log_theta(y, s) - QuantumFreePacket::log_theta(x, t)
        } else {
            T::zero()
        };
        form.log_density(y, x) + dressing
    }

    /// Closed-form structure of the analytic kinds between `s` and `t`.
    pub(crate) fn gaussian_form(&self, s: T, t: T) -> Option<GaussianForm<T>> {
        let two = T::lit(2.0);
        let plain = |scale: T, shift: T, var: T, dressed: bool| GaussianForm {
            scale,
            shift,
            var,
            dressed,
        };
        let one = T::one();
        let zero = T::zero();
        Some(match self {
            Kernel::Heat { nu } => plain(one, zero, two * *nu * (t - s), false),
            Kernel::Example1 => plain(one, zero, t * t - s * s, false),
            Kernel::QuantumK1 => plain(one, zero, t * t - s * s, true),
            Kernel::PinnedExample2 => plain(pinned_coefficient(t, s), zero, two * (t - s), false),
            Kernel::QuantumK2 => plain(pinned_coefficient(t, s), zero, two * (t - s), true),
            Kernel::MarkovFamily { y: y0, s: s0 } => {
                let shift = (pinned_coefficient(t, *s0) - pinned_coefficient(s, *s0)) * *y0;
                plain(one, shift, two * (t - s), false)
            }
            Kernel::NumericFk(_) => return None,
        })
    }

    /// Centre and width of `x -> k(y, s, x, t)` for the analytic kinds.
    pub fn spread(&self, y: T, s: T, t: T) -> Option<(T, T)> {
        self.gaussian_form(s, t)
            .map(|f| (f.scale * y + f.shift, f.var.sqrt()))
    }

    /// `M[i][j] = k(y_i, s, x_j, t)` on a common source/target grid.
    pub fn matrix(&self, grid: &Grid1D<T>, s: T, t: T) -> Result<KernelMatrix<T>> {
        self.check_times(s, t)?;
        match self {
            Kernel::NumericFk(fk) => {
                if fk.grid != *grid {
                    return Err(Error::GridMismatch);
                }
                let n = FkPropagator::new(fk.potential.clone(), fk.grid).default_substeps(s, t);
                solve_feynman_kac(&fk.potential, grid, s, t, n)
            }
            _ => {
                let form = self.gaussian_form(s, t).expect("analytic kernel");
                let (src, dst) = dressings(&form, grid, s, t);
                let xs = grid.nodes();
                KernelMatrix::from_index_fn(*grid, *grid, s, t, |i, j| {
                    (form.log_density(xs[i], xs[j]) + src[i] - dst[j]).exp()
                })
            }
        }
    }
}

/// `k = N(x; scale y + shift, var)`, optionally times `theta(y,s) / theta(x,t)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct GaussianForm<T> {
    pub scale: T,
    pub shift: T,
    pub var: T,
    pub dressed: bool,
}

impl<T: Real> GaussianForm<T> {
    #[inline]
    pub fn log_density(&self, y: T, x: T) -> T {
        let two = T::lit(2.0);
        let d = x - self.scale * y - self.shift;
        -d * d / (two * self.var) - (two * T::PI() * self.var).ln() / two
    }
}

/// `ln theta` at the source and target times on every node, or zeros when undressed.
pub(crate) fn dressings<T: Real>(
    form: &GaussianForm<T>,
    grid: &Grid1D<T>,
    s: T,
    t: T,
) -> (Vec<T>, Vec<T>) {
    let nodes = grid.nodes();
    if !form.dressed {
        return (vec![T::zero(); nodes.len()], vec![T::zero(); nodes.len()]);
    }
    let at = |time: T| {
        nodes
            .iter()
            .map(|&x| QuantumFreePacket::log_theta(x, time))
            .collect()
    };
    (at(s), at(t))
}

impl<T: Real> NumericFk<T> {
    /// Propagates a hat-shaped unit mass at `y` and reads the result at `x`.
    fn evaluate(&self, y: T, s: T, x: T, t: T) -> Result<T> {
        let g = &self.grid;
        if !g.contains(y) || !g.contains(x) {
            return Err(Error::InvalidArgument(format!(
                "numeric kernel is defined on [{}, {}]",
                g.x_min(),
                g.x_max()
            )));
        }
        let (i, f) = g.locate(y);
        let mut init = vec![T::zero(); g.len()];
        init[i] = (T::one() - f) / g.weight(i);
        init[i + 1] = init[i + 1] + f / g.weight(i + 1);
        let prop = FkPropagator::new(self.potential.clone(), *g);
        let out = prop.forward(&init, s, t, prop.default_substeps(s, t))?;
        Ok(crate::numgrid::interpolate_linear(g, &out, x))
    }
}
