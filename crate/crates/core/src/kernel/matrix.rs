use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numgrid::Grid1D;
use crate::scalar::Real;

/// Kernel sampled on a source × target lattice, `M[i][j] = k(y_i, s, x_j, t)`.
///
/// Products against fields use trapezoid weights of the summed-over grid.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix<T> {
    source: Grid1D<T>,
    target: Grid1D<T>,
    s: T,
    t: T,
    entries: Vec<T>,
}

impl<T: Real> KernelMatrix<T> {
    pub fn new(source: Grid1D<T>, target: Grid1D<T>, s: T, t: T, entries: Vec<T>) -> Result<Self> {
        let expected = source.len() * target.len();
        if entries.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                got: entries.len(),
            });
        }
        if let Some(index) = entries.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            source,
            target,
            s,
            t,
            entries,
        })
    }

    /// Fills the matrix from `f(y, x)`, rows in parallel.
    pub fn from_fn(
        source: Grid1D<T>,
        target: Grid1D<T>,
        s: T,
        t: T,
        f: impl Fn(T, T) -> T + Sync,
    ) -> Result<Self> {
        let xs = target.nodes();
        let ys = source.nodes();
        Self::from_index_fn(source, target, s, t, |i, j| f(ys[i], xs[j]))
    }

    /// Fills the matrix from `f(i, j)` over source and target node indices, rows in parallel.
    pub fn from_index_fn(
        source: Grid1D<T>,
        target: Grid1D<T>,
        s: T,
        t: T,
        f: impl Fn(usize, usize) -> T + Sync,
    ) -> Result<Self> {
        let m = target.len();
        let mut entries = vec![T::zero(); source.len() * m];
        entries.par_chunks_mut(m).enumerate().for_each(|(i, row)| {
            for (j, e) in row.iter_mut().enumerate() {
                *e = f(i, j);
            }
        });
        Self::new(source, target, s, t, entries)
    }

    pub fn source(&self) -> &Grid1D<T> {
        &self.source
    }

    pub fn target(&self) -> &Grid1D<T> {
        &self.target
    }

    pub fn s(&self) -> T {
        self.s
    }

    pub fn t(&self) -> T {
        self.t
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.entries[i * self.target.len() + j]
    }

    pub fn row(&self, i: usize) -> &[T] {
        let m = self.target.len();
        &self.entries[i * m..(i + 1) * m]
    }

    pub fn min_entry(&self) -> T {
        self.entries
            .iter()
            .fold(T::infinity(), |acc, &v| acc.min(v))
    }

    /// `out(x_j) = sum_i w_i u(y_i) M[i][j]`, the forward propagation of a source field.
    pub fn push_forward(&self, u: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.target.len()];
        for (i, &ui) in u.iter().enumerate() {
            let a = self.source.weight(i) * ui;
            for (o, &m) in out.iter_mut().zip(self.row(i)) {
                *o = *o + a * m;
            }
        }
        out
    }

    /// `out(y_i) = sum_j M[i][j] w_j v(x_j)`, the backward propagation of a target field.
    pub fn pull_back(&self, v: &[T]) -> Vec<T> {
        let wv: Vec<T> = v
            .iter()
            .enumerate()
            .map(|(j, &vj)| self.target.weight(j) * vj)
            .collect();
        (0..self.source.len())
            .into_par_iter()
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(&wv)
                    .fold(T::zero(), |acc, (&m, &w)| acc + m * w)
            })
            .collect()
    }

    /// `(A W B)[i][l] = sum_z A[i][z] w_z B[z][l]`, the quadrature composition `s -> tau -> t`.
    pub fn compose(&self, next: &Self) -> Result<Self> {
        if self.target != next.source {
            return Err(Error::GridMismatch);
        }
        let m = next.target.len();
        let mut entries = vec![T::zero(); self.source.len() * m];
        entries.par_chunks_mut(m).enumerate().for_each(|(i, acc)| {
            for (z, &a) in self.row(i).iter().enumerate() {
                let coeff = a * self.target.weight(z);
                for (o, &b) in acc.iter_mut().zip(next.row(z)) {
                    *o = *o + coeff * b;
                }
            }
        });
        Self::new(self.source, next.target, self.s, next.t, entries)
    }
}
