//! Feynman-Kac kernels as fundamental solutions of `du/dt = nu u'' - c(x, t) u`.
//!
//! Time stepping is Crank-Nicolson with a Rannacher start (the first step is
//! replaced by two backward-Euler half steps, which damps the grid-scale modes
//! excited by delta initial data). The homogeneous edge condition sits on ghost
//! nodes one cell outside the grid, so every grid node carries an unknown.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use super::KernelMatrix;
use crate::error::{Error, Result};
use crate::gallery::QuantumFreePacket;
use crate::numgrid::{solve_tridiagonal, Grid1D};
use crate::scalar::Real;

/// Largest admissible `nu dt / h^2` for a Crank-Nicolson substep.
pub const MAX_DIFFUSION_NUMBER: f64 = 10.0;

/// Diffusion number used when the caller does not choose the substep count.
const DEFAULT_DIFFUSION_NUMBER: f64 = 0.5;

/// Entries below this are reported as positivity violations.
const NEGATIVITY_TOLERANCE: f64 = -1e-12;

type PotentialFn<T> = Arc<dyn Fn(T, T) -> T + Send + Sync>;

#[derive(Clone)]
enum PotentialKind<T> {
    Zero,
    Constant(T),
    QuantumPacket,
    Custom(PotentialFn<T>),
}

/// Potential `c(x, t)` together with the diffusion constant `nu`.
#[derive(Clone)]
pub struct Potential<T> {
    nu: T,
    kind: PotentialKind<T>,
}

impl<T: fmt::Debug> fmt::Debug for Potential<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.kind {
            PotentialKind::Zero => "zero".to_string(),
            PotentialKind::Constant(c) => format!("constant({c:?})"),
            PotentialKind::QuantumPacket => "quantum-packet".to_string(),
            PotentialKind::Custom(_) => "custom".to_string(),
        };
        f.debug_struct("Potential")
            .field("nu", &self.nu)
            .field("kind", &kind)
            .finish()
    }
}

impl<T: Real> Potential<T> {
    pub fn zero(nu: T) -> Self {
        Self {
            nu,
            kind: PotentialKind::Zero,
        }
    }

    pub fn constant(value: T, nu: T) -> Self {
        Self {
            nu,
            kind: PotentialKind::Constant(value),
        }
    }

    /// `Omega / 2` of the free Gaussian packet, `nu = 1`.
    pub fn quantum_packet() -> Self {
        Self {
            nu: T::one(),
            kind: PotentialKind::QuantumPacket,
        }
    }

    pub fn from_fn(f: impl Fn(T, T) -> T + Send + Sync + 'static, nu: T) -> Self {
        Self {
            nu,
            kind: PotentialKind::Custom(Arc::new(f)),
        }
    }

    pub fn nu(&self) -> T {
        self.nu
    }

    pub fn is_zero(&self) -> bool {
        match self.kind {
            PotentialKind::Zero => true,
            PotentialKind::Constant(c) => c == T::zero(),
            _ => false,
        }
    }

    #[inline]
    pub fn eval(&self, x: T, t: T) -> T {
        match &self.kind {
            PotentialKind::Zero => T::zero(),
            PotentialKind::Constant(c) => *c,
            PotentialKind::QuantumPacket => QuantumFreePacket::omega_half(x, t),
            PotentialKind::Custom(f) => f(x, t),
        }
    }
}

#[derive(Clone, Copy)]
enum Step<T> {
    /// Two backward-Euler half steps starting at `t0`.
    Rannacher { t0: T },
    /// Crank-Nicolson step with the potential frozen at `t_mid`.
    CrankNicolson { t_mid: T },
}

/// Propagates fields with the discretized parabolic operator on one grid.
#[derive(Debug, Clone)]
pub struct FkPropagator<T> {
    potential: Potential<T>,
    grid: Grid1D<T>,
}

struct Workspace<T> {
    lower: Vec<T>,
    diag: Vec<T>,
    upper: Vec<T>,
    scratch: Vec<T>,
    tmp: Vec<T>,
}

impl<T: Real> FkPropagator<T> {
    pub fn new(potential: Potential<T>, grid: Grid1D<T>) -> Self {
        Self { potential, grid }
    }

    pub fn grid(&self) -> &Grid1D<T> {
        &self.grid
    }

    /// Substeps keeping `nu dt / h^2` at or below one half.
    pub fn default_substeps(&self, s: T, t: T) -> usize {
        let h = self.grid.spacing();
        let steps = (self.potential.nu() * (t - s) / (T::lit(DEFAULT_DIFFUSION_NUMBER) * h * h))
            .ceil()
            .to_usize()
            .unwrap_or(1);
        steps.max(4)
    }

    fn plan(&self, s: T, t: T, n_substeps: usize) -> Result<(T, Vec<Step<T>>)> {
        if s >= t {
            return Err(Error::TimeOrdering {
                s: s.as_f64(),
                t: t.as_f64(),
            });
        }
        if n_substeps == 0 {
            return Err(Error::InvalidArgument("need at least one substep".into()));
        }
        let dt = (t - s) / T::from_count(n_substeps);
        let h = self.grid.spacing();
        let number = self.potential.nu() * dt / (h * h);
        if number > T::lit(MAX_DIFFUSION_NUMBER) {
            return Err(Error::InvalidArgument(format!(
                "diffusion number nu dt / h^2 = {number} exceeds {MAX_DIFFUSION_NUMBER}; use more substeps"
            )));
        }
        let half = T::lit(0.5);
        let steps = (0..n_substeps)
            .map(|k| {
                let t0 = s + T::from_count(k) * dt;
                if k == 0 {
                    Step::Rannacher { t0 }
                } else {
                    Step::CrankNicolson {
                        t_mid: t0 + half * dt,
                    }
                }
            })
            .collect();
        Ok((dt, steps))
    }

    fn workspace(&self) -> Workspace<T> {
        let n = self.grid.len();
        Workspace {
            lower: vec![T::zero(); n],
            diag: vec![T::zero(); n],
            upper: vec![T::zero(); n],
            scratch: vec![T::zero(); n],
            tmp: vec![T::zero(); n],
        }
    }

    /// Loads `I - a L(time)` into the workspace.
    fn load_implicit(&self, ws: &mut Workspace<T>, a: T, time: T) {
        let h = self.grid.spacing();
        let coupling = a * self.potential.nu() / (h * h);
        let n = self.grid.len();
        for i in 0..n {
            let x = self.grid.node(i);
            ws.diag[i] = T::one() + T::lit(2.0) * coupling + a * self.potential.eval(x, time);
            ws.lower[i] = if i > 0 { -coupling } else { T::zero() };
            ws.upper[i] = if i + 1 < n { -coupling } else { T::zero() };
        }
    }

    /// `out = (I + a L(time)) u`.
    fn apply_explicit(&self, u: &[T], out: &mut [T], a: T, time: T) {
        let h = self.grid.spacing();
        let coupling = a * self.potential.nu() / (h * h);
        let n = u.len();
        for i in 0..n {
            let left = if i > 0 { u[i - 1] } else { T::zero() };
            let right = if i + 1 < n { u[i + 1] } else { T::zero() };
            let x = self.grid.node(i);
            out[i] = u[i] * (T::one() - T::lit(2.0) * coupling - a * self.potential.eval(x, time))
                + coupling * (left + right);
        }
    }

    fn solve_in_place(ws: &mut Workspace<T>, u: &mut [T]) {
        solve_tridiagonal(&ws.lower, &ws.diag, &ws.upper, u, &mut ws.scratch);
    }

    /// Evolves `u(., s)` to `u(., t)`.
    pub fn forward(&self, u: &[T], s: T, t: T, n_substeps: usize) -> Result<Vec<T>> {
        self.check_len(u)?;
        let (dt, steps) = self.plan(s, t, n_substeps)?;
        let half = T::lit(0.5);
        let mut ws = self.workspace();
        let mut state = u.to_vec();
        for step in steps {
            match step {
                Step::Rannacher { t0 } => {
                    self.load_implicit(&mut ws, half * dt, t0 + half * dt);
                    Self::solve_in_place(&mut ws, &mut state);
                    self.load_implicit(&mut ws, half * dt, t0 + dt);
                    Self::solve_in_place(&mut ws, &mut state);
                }
                Step::CrankNicolson { t_mid } => {
                    self.apply_explicit(&state, &mut ws.tmp, half * dt, t_mid);
                    std::mem::swap(&mut state, &mut ws.tmp);
                    self.load_implicit(&mut ws, half * dt, t_mid);
                    Self::solve_in_place(&mut ws, &mut state);
                }
            }
        }
        Ok(state)
    }

    /// Evolves a terminal field `v(., t)` back to `v(., s)` with the transpose of
    /// the forward scheme: `v_s = W^-1 P^T W v_t`.
    ///
    /// This is the discrete counterpart of `v(y, s) = int k(y, s, x, t) v(x, t) dx`
    /// for the kernel returned by [`solve_feynman_kac`].
    pub fn adjoint(&self, v: &[T], s: T, t: T, n_substeps: usize) -> Result<Vec<T>> {
        self.check_len(v)?;
        let (dt, steps) = self.plan(s, t, n_substeps)?;
        let half = T::lit(0.5);
        let mut ws = self.workspace();
        let mut state: Vec<T> = v
            .iter()
            .enumerate()
            .map(|(i, &vi)| vi * self.grid.weight(i))
            .collect();
        for step in steps.into_iter().rev() {
            match step {
                Step::Rannacher { t0 } => {
                    self.load_implicit(&mut ws, half * dt, t0 + dt);
                    Self::solve_in_place(&mut ws, &mut state);
                    self.load_implicit(&mut ws, half * dt, t0 + half * dt);
                    Self::solve_in_place(&mut ws, &mut state);
                }
                Step::CrankNicolson { t_mid } => {
                    self.load_implicit(&mut ws, half * dt, t_mid);
                    Self::solve_in_place(&mut ws, &mut state);
                    self.apply_explicit(&state, &mut ws.tmp, half * dt, t_mid);
                    std::mem::swap(&mut state, &mut ws.tmp);
                }
            }
        }
        Ok(state
            .into_iter()
            .enumerate()
            .map(|(i, vi)| vi / self.grid.weight(i))
            .collect())
    }

    fn check_len(&self, u: &[T]) -> Result<()> {
        if u.len() != self.grid.len() {
            return Err(Error::LengthMismatch {
                expected: self.grid.len(),
                got: u.len(),
            });
        }
        Ok(())
    }
}

/// Kernel matrix of the potential between times `s < t`: row `i` is the solution at
/// `t` started from the grid delta `1 / w_i` at node `i` at time `s`.
pub fn solve_feynman_kac<T: Real>(
    pot: &Potential<T>,
    grid: &Grid1D<T>,
    s: T,
    t: T,
    n_substeps: usize,
) -> Result<KernelMatrix<T>> {
    let prop = FkPropagator::new(pot.clone(), *grid);
    // validate before spawning work
    prop.plan(s, t, n_substeps)?;
    let n = grid.len();
    let mut entries = vec![T::zero(); n * n];
    entries
        .par_chunks_mut(n)
        .enumerate()
        .try_for_each(|(i, row)| -> Result<()> {
            let mut delta = vec![T::zero(); n];
            delta[i] = T::one() / grid.weight(i);
            let out = prop.forward(&delta, s, t, n_substeps)?;
            row.copy_from_slice(&out);
            Ok(())
        })?;
    let floor = T::lit(NEGATIVITY_TOLERANCE);
    if let Some(index) = entries.iter().position(|&v| v < floor) {
        return Err(Error::PositivityViolation {
            source_node: index / n,
            target_node: index % n,
            value: entries[index].as_f64(),
        });
    }
    KernelMatrix::new(*grid, *grid, s, t, entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::Kernel;

    fn relative_error(num: &KernelMatrix<f64>, exact: &KernelMatrix<f64>) -> f64 {
        let g = num.source();
        let n = g.len();
        let (lo, hi) = (n / 4, 3 * n / 4);
        let mut worst: f64 = 0.0;
        let mut peak: f64 = 0.0;
        for i in lo..=hi {
            for j in 0..n {
                worst = worst.max((num.get(i, j) - exact.get(i, j)).abs());
                peak = peak.max(exact.get(i, j).abs());
            }
        }
        worst / peak
    }

    #[test]
    fn free_potential_reproduces_heat_kernel() {
        let g = Grid1D::new(-10.0, 10.0, 257).unwrap();
        let pot = Potential::zero(1.0);
        let prop = FkPropagator::new(pot.clone(), g);
        let m = solve_feynman_kac(&pot, &g, 0.0, 0.5, prop.default_substeps(0.0, 0.5)).unwrap();
        let exact = Kernel::Heat { nu: 1.0 }.matrix(&g, 0.0, 0.5).unwrap();
        let err = relative_error(&m, &exact);
        assert!(err < 5e-3, "relative error {err}");
    }

    #[test]
    fn constant_potential_factorizes() {
        let g = Grid1D::new(-8.0, 8.0, 161).unwrap();
        let lambda = 0.7;
        let zero = Potential::zero(1.0);
        let cst = Potential::constant(lambda, 1.0);
        let n = FkPropagator::new(zero.clone(), g).default_substeps(0.1, 0.6);
        let a = solve_feynman_kac(&zero, &g, 0.1, 0.6, n).unwrap();
        let b = solve_feynman_kac(&cst, &g, 0.1, 0.6, n).unwrap();
        let factor = (-lambda * 0.5f64).exp();
        let mut worst: f64 = 0.0;
        for i in 0..g.len() {
            for j in 0..g.len() {
                worst = worst.max((b.get(i, j) - factor * a.get(i, j)).abs());
            }
        }
        // Crank-Nicolson damps the constant mode by a rational approximant of exp(-lambda dt)
        assert!(worst < 1e-5, "{worst}");
    }

    #[test]
    fn adjoint_is_the_transpose_of_the_kernel_matrix() {
        let g = Grid1D::new(-5.0, 5.0, 41).unwrap();
        let pot = Potential::from_fn(|x: f64, t: f64| 0.1 * x * x + t, 0.8);
        let prop = FkPropagator::new(pot.clone(), g);
        let n = prop.default_substeps(0.0, 0.4);
        let m = solve_feynman_kac(&pot, &g, 0.0, 0.4, n).unwrap();
        let v: Vec<f64> = g.nodes().iter().map(|x| (x * 0.3).cos() + 2.0).collect();
        let via_matrix = m.pull_back(&v);
        let via_adjoint = prop.adjoint(&v, 0.0, 0.4, n).unwrap();
        for (a, b) in via_matrix.iter().zip(&via_adjoint) {
            assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
        }
        let u: Vec<f64> = g.nodes().iter().map(|x| (-x * x).exp()).collect();
        let pushed = m.push_forward(&u);
        let fwd = prop.forward(&u, 0.0, 0.4, n).unwrap();
        for (a, b) in pushed.iter().zip(&fwd) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_coarse_substeps_and_bad_ordering() {
        let g = Grid1D::new(-10.0, 10.0, 513).unwrap();
        let pot = Potential::zero(1.0);
        assert!(matches!(
            solve_feynman_kac(&pot, &g, 0.0, 0.5, 2),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            solve_feynman_kac(&pot, &g, 0.5, 0.5, 100),
            Err(Error::TimeOrdering { .. })
        ));
    }

    #[test]
    fn strongly_negative_potential_still_positive() {
        let g = Grid1D::new(-4.0, 4.0, 41).unwrap();
        let pot = Potential::constant(-3.0, 1.0);
        let n = FkPropagator::new(pot.clone(), g).default_substeps(0.0, 0.2);
        let m = solve_feynman_kac(&pot, &g, 0.0, 0.2, n).unwrap();
        assert!(m.min_entry() > 0.0);
    }
}
