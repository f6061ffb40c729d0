//! Hopf-Cole transforms, the forced Burgers residual and the drift-potential
//! compatibility condition `c = dPhi/dt + (b^2 / (2 nu) + b') / 2`.

use crate::bridge::BridgeSolution;
use crate::error::{Error, Result};
use crate::numgrid::{
    central_antiderivative, cumulative_trapezoid, gradient_values, interior_max, laplacian_values,
    FieldSeries, ScalarField, TailMask, DIVISION_FLOOR,
};
use crate::scalar::Real;

/// Factor fields of a bridge in Hopf-Cole variables: `theta = v`, `theta* = u`,
/// `Phi = ln v`, `Phi* = ln u`.
#[derive(Debug, Clone, PartialEq)]
pub struct HopfColeFields<T> {
    pub theta: FieldSeries<T>,
    pub theta_star: FieldSeries<T>,
    pub phi: FieldSeries<T>,
    pub phi_star: FieldSeries<T>,
    pub nu: T,
}

impl<T: Real> HopfColeFields<T> {
    pub fn new(theta: FieldSeries<T>, theta_star: FieldSeries<T>, nu: T) -> Result<Self> {
        theta.check_same_lattice(&theta_star)?;
        let floor = T::lit(DIVISION_FLOOR);
        let log = |f: &FieldSeries<T>| f.zip_with(f, |a, _| a.max(floor).ln());
        Ok(Self {
            phi: log(&theta)?,
            phi_star: log(&theta_star)?,
            theta,
            theta_star,
            nu,
        })
    }

    pub fn from_solution(sol: &BridgeSolution<T>) -> Result<Self> {
        Self::new(sol.v().clone(), sol.u().clone(), sol.nu())
    }

    /// Madelung amplitude `R = (Phi + Phi*) / 2 = ln(rho) / 2`.
    pub fn madelung_r(&self) -> Result<FieldSeries<T>> {
        let half = T::lit(0.5);
        self.phi.zip_with(&self.phi_star, |a, b| half * (a + b))
    }

    /// Madelung phase `S = (Phi - Phi*) / 2`.
    pub fn madelung_s(&self) -> Result<FieldSeries<T>> {
        let half = T::lit(0.5);
        self.phi.zip_with(&self.phi_star, |a, b| half * (a - b))
    }

    /// Current velocity `2 nu dS/dx = (b + b*) / 2`.
    pub fn current_velocity(&self) -> Result<FieldSeries<T>> {
        let s = self.madelung_s()?;
        let two_nu = T::lit(2.0) * self.nu;
        s.map_slices(|f| {
            let g = gradient_values(f.grid(), f.values());
            ScalarField::new(
                *f.grid(),
                g.into_iter().map(|x| two_nu * x).collect(),
                f.time_label(),
            )
        })
    }
}

/// `v = -2 nu d/dx ln theta`.
pub fn hopf_cole_forward<T: Real>(theta: &ScalarField<T>, nu: T) -> Result<ScalarField<T>> {
    if let Some(i) = theta.values().iter().position(|&v| !(v > T::zero())) {
        return Err(Error::DivisionGuard(format!(
            "theta must be strictly positive, got {} at node {i}",
            theta.values()[i]
        )));
    }
    let log: Vec<T> = theta.values().iter().map(|&v| v.ln()).collect();
    let scale = -T::lit(2.0) * nu;
    let v = gradient_values(theta.grid(), &log)
        .into_iter()
        .map(|g| scale * g)
        .collect();
    ScalarField::new(*theta.grid(), v, theta.time_label())
}

/// Slice-wise [`hopf_cole_forward`].
pub fn hopf_cole_forward_series<T: Real>(theta: &FieldSeries<T>, nu: T) -> Result<FieldSeries<T>> {
    theta.map_slices(|f| hopf_cole_forward(f, nu))
}

/// `theta = exp(-Phi / (2 nu))` with `Phi' = v` and `theta(anchor) = 1`.
///
/// `Phi` is the leapfrog antiderivative, so the central-difference
/// [`hopf_cole_forward`] returns `v` exactly at interior nodes.
pub fn hopf_cole_inverse<T: Real>(
    v: &ScalarField<T>,
    nu: T,
    anchor: usize,
) -> Result<ScalarField<T>> {
    let grid = v.grid();
    if anchor >= grid.len() {
        return Err(Error::InvalidArgument(format!(
            "anchor {anchor} outside grid of {} nodes",
            grid.len()
        )));
    }
    let phi = central_antiderivative(grid, v.values(), anchor);
    let base = phi[anchor];
    let scale = T::lit(2.0) * nu;
    let theta = phi
        .into_iter()
        .map(|p| (-(p - base) / scale).exp())
        .collect();
    ScalarField::new(*grid, theta, v.time_label())
}

/// Max over interior nodes kept by `mask` of `|dv/dt + v v' - nu v'' - F|`.
pub fn burgers_residual<T: Real>(
    v: &FieldSeries<T>,
    nu: T,
    force: &FieldSeries<T>,
    mask: TailMask<'_, T>,
) -> Result<T> {
    v.check_same_lattice(force)?;
    let dv = v.time_derivative()?;
    let grid = *v.grid();
    let n = v.n_slices();
    let (grad, lap): (Vec<Vec<T>>, Vec<Vec<T>>) = (0..n)
        .map(|k| {
            (
                gradient_values(&grid, v.values(k)),
                laplacian_values(&grid, v.values(k)),
            )
        })
        .unzip();
    Ok(interior_max(&grid, v.times(), mask, |k, i| {
        dv.at(k, i) + v.at(k, i) * grad[k][i] - nu * lap[k][i] - force.at(k, i)
    }))
}

/// Potential recovered from a drift together with the node where `Phi` vanishes.
#[derive(Debug, Clone, PartialEq)]
pub struct CompatibilityPotential<T> {
    pub c: FieldSeries<T>,
    pub anchor: usize,
}

/// [`compatibility_potential_anchored`] with `Phi` anchored at the central node.
pub fn compatibility_potential<T: Real>(
    b: &FieldSeries<T>,
    nu: T,
) -> Result<CompatibilityPotential<T>> {
    compatibility_potential_anchored(b, nu, b.grid().center_index())
}

/// `c = dPhi/dt + (b^2 / (2 nu) + b') / 2` with `Phi` the cumulative trapezoid of
/// `b / (2 nu)` from `anchor`, slice by slice.
///
/// Moving the anchor adds a function of time only to `c`. The time derivative
/// uses the fourth-order stencil, so at least five slices are required.
pub fn compatibility_potential_anchored<T: Real>(
    b: &FieldSeries<T>,
    nu: T,
    anchor: usize,
) -> Result<CompatibilityPotential<T>> {
    let grid = *b.grid();
    if anchor >= grid.len() {
        return Err(Error::InvalidArgument(format!(
            "anchor {anchor} outside grid of {} nodes",
            grid.len()
        )));
    }
    let two_nu = T::lit(2.0) * nu;
    let half = T::lit(0.5);
    let n = b.n_slices();
    let phi_data = (0..n)
        .map(|k| {
            let scaled: Vec<T> = b.values(k).iter().map(|&x| x / two_nu).collect();
            cumulative_trapezoid(&grid, &scaled, anchor)
        })
        .collect();
    let phi = FieldSeries::new(grid, *b.times(), phi_data)?;
    let dphi = phi.time_derivative_fourth_order()?;
    let data = (0..n)
        .map(|k| {
            let bk = b.values(k);
            let db = gradient_values(&grid, bk);
            (0..grid.len())
                .map(|i| dphi.at(k, i) + half * (bk[i] * bk[i] / two_nu + db[i]))
                .collect()
        })
        .collect();
    Ok(CompatibilityPotential {
        c: FieldSeries::new(grid, *b.times(), data)?,
        anchor,
    })
}

/// `F = 2 nu c'`.
pub fn force_from_potential<T: Real>(c: &FieldSeries<T>, nu: T) -> Result<FieldSeries<T>> {
    let two_nu = T::lit(2.0) * nu;
    c.map_slices(|f| {
        let g = gradient_values(f.grid(), f.values());
        ScalarField::new(
            *f.grid(),
            g.into_iter().map(|x| two_nu * x).collect(),
            f.time_label(),
        )
    })
}

/// Largest distance, over slices, of `a - b` from a spatially constant function:
/// half the range of `a - b` over the interior nodes kept by `mask`.
pub fn deviation_from_constant<T: Real>(
    a: &FieldSeries<T>,
    b: &FieldSeries<T>,
    mask: TailMask<'_, T>,
) -> Result<T> {
    a.check_same_lattice(b)?;
    let m = a.grid().len();
    let mut worst = T::zero();
    for k in 0..a.n_slices() {
        let (mut lo, mut hi) = (T::infinity(), T::neg_infinity());
        for i in 1..m - 1 {
            if mask.keeps(k, i) {
                let d = a.at(k, i) - b.at(k, i);
                lo = lo.min(d);
                hi = hi.max(d);
            }
        }
        if hi >= lo {
            worst = worst.max((hi - lo) / T::lit(2.0));
        }
    }
    Ok(worst)
}
