//! Stencil-storage sparse operators on a [`Grid`] with homogeneous
//! Dirichlet data, and the Krylov solvers used by the time steppers.
//!
//! Vectors always span the full grid; boundary entries stay zero.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::grid::Grid;

const NOT_INTERIOR: u32 = u32::MAX;

#[derive(Clone, Debug)]
pub struct StencilOperator {
    grid: Grid,
    /// Offsets as per-axis steps in `{-1, 0, 1}`.
    offsets: Vec<Vec<i32>>,
    deltas: Vec<isize>,
    /// `interior.len() * offsets.len()` coefficients, one row per interior node.
    coeffs: Vec<f64>,
    interior: Vec<usize>,
    row_of: Vec<u32>,
}

impl StencilOperator {
    /// Zero operator whose rows may use `offsets` (closed under negation
    /// and containing the zero offset is the caller's business).
    pub fn new(grid: Grid, offsets: Vec<Vec<i32>>) -> Result<Self> {
        if grid.shape.iter().any(|&s| s < 3) {
            return Err(Error::DegenerateGrid("every axis needs at least one interior node".into()));
        }
        let strides = grid.strides();
        let deltas = offsets
            .iter()
            .map(|o| o.iter().zip(&strides).map(|(&a, &s)| a as isize * s as isize).sum())
            .collect();
        let mut row_of = vec![NOT_INTERIOR; grid.len()];
        let interior: Vec<usize> = (0..grid.len()).filter(|&k| grid.is_interior(k, 1)).collect();
        for (r, &k) in interior.iter().enumerate() {
            row_of[k] = r as u32;
        }
        let coeffs = vec![0.0; interior.len() * offsets.len()];
        Ok(Self {
            grid,
            offsets,
            deltas,
            coeffs,
            interior,
            row_of,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn offsets(&self) -> &[Vec<i32>] {
        &self.offsets
    }

    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    pub fn is_interior(&self, k: usize) -> bool {
        self.row_of[k] != NOT_INTERIOR
    }

    fn slot(&self, offset: &[i32]) -> Option<usize> {
        self.offsets.iter().position(|o| o.as_slice() == offset)
    }

    /// Adds `c` to the entry `(p, q)` when both nodes are interior; `q - p`
    /// must be one of the offsets.
    pub fn add(&mut self, p: usize, q: usize, c: f64) {
        let (rp, rq) = (self.row_of[p], self.row_of[q]);
        if rp == NOT_INTERIOR || rq == NOT_INTERIOR {
            return;
        }
        let d = q as isize - p as isize;
        let k = self
            .deltas
            .iter()
            .position(|&x| x == d)
            .expect("entry outside the declared stencil");
        self.coeffs[rp as usize * self.deltas.len() + k] += c;
    }

    /// Entry lookup by offset, for tests and diagnostics.
    pub fn entry(&self, p: usize, offset: &[i32]) -> f64 {
        match (self.row_of[p], self.slot(offset)) {
            (r, Some(s)) if r != NOT_INTERIOR => self.coeffs[r as usize * self.deltas.len() + s],
            _ => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let z = self.slot(&vec![0; self.grid.dim()]).expect("stencil has a center");
        let k = self.deltas.len();
        let mut d = vec![0.0; self.grid.len()];
        for (r, &p) in self.interior.iter().enumerate() {
            d[p] = self.coeffs[r * k + z];
        }
        d
    }

    /// `y = L x` on interior nodes.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let k = self.deltas.len();
        for (r, &p) in self.interior.iter().enumerate() {
            let row = &self.coeffs[r * k..(r + 1) * k];
            let mut acc = 0.0;
            for (c, &d) in row.iter().zip(&self.deltas) {
                acc += c * x[(p as isize + d) as usize];
            }
            y[p] = acc;
        }
    }

    /// `y = x - a L x`.
    pub fn apply_shifted(&self, a: f64, x: &[f64], y: &mut [f64]) {
        self.apply(x, y);
        for &p in &self.interior {
            y[p] = x[p] - a * y[p];
        }
    }

    pub fn transpose(&self) -> Self {
        let mut out = self.clone();
        out.coeffs.iter_mut().for_each(|c| *c = 0.0);
        let k = self.deltas.len();
        for (r, &p) in self.interior.iter().enumerate() {
            for s in 0..k {
                let c = self.coeffs[r * k + s];
                if c != 0.0 {
                    let q = (p as isize + self.deltas[s]) as usize;
                    out.add(q, p, c);
                }
            }
        }
        out
    }

    /// Largest absolute asymmetry `|L_pq - L_qp|`.
    pub fn asymmetry(&self) -> f64 {
        let t = self.transpose();
        self.coeffs
            .iter()
            .zip(&t.coeffs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Gershgorin bound on the largest eigenvalue of the symmetric part of
    /// `L`.
    pub fn symmetric_part_bound(&self) -> f64 {
        let t = self.transpose();
        let k = self.deltas.len();
        let z = self.slot(&vec![0; self.grid.dim()]).expect("stencil has a center");
        let mut best = f64::NEG_INFINITY;
        for r in 0..self.interior.len() {
            let mut acc = self.coeffs[r * k + z];
            for s in 0..k {
                if s != z {
                    acc += 0.5 * (self.coeffs[r * k + s] + t.coeffs[r * k + s]).abs();
                }
            }
            best = best.max(acc);
        }
        best
    }

    /// Stencil offsets that carry a nonzero coefficient somewhere.
    pub fn used_offsets(&self) -> BTreeMap<Vec<i32>, usize> {
        let k = self.deltas.len();
        let mut out = BTreeMap::new();
        for r in 0..self.interior.len() {
            for s in 0..k {
                if self.coeffs[r * k + s] != 0.0 {
                    *out.entry(self.offsets[s].clone()).or_insert(0) += 1;
                }
            }
        }
        out
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solver statistics for one linear solve.
#[derive(Clone, Copy, Debug, Default)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
}

/// Solves `(I - a L) x = b` by Jacobi-preconditioned conjugate gradients.
/// Requires `I - a L` symmetric positive definite. `x` holds the initial
/// guess on entry.
pub fn solve_cg(op: &StencilOperator, a: f64, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> Result<SolveStats> {
    let n = b.len();
    let diag: Vec<f64> = op.diagonal().iter().map(|d| 1.0 - a * d).collect();
    let mut r = vec![0.0; n];
    op.apply_shifted(a, x, &mut r);
    for &p in op.interior() {
        r[p] = b[p] - r[p];
    }
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats::default());
    }
    let mut z = vec![0.0; n];
    for &p in op.interior() {
        z[p] = r[p] / diag[p];
    }
    let mut pvec = z.clone();
    let mut q = vec![0.0; n];
    let mut rz = dot(&r, &z);
    for it in 0..max_iter {
        let res = dot(&r, &r).sqrt();
        if res <= tol * bnorm {
            return Ok(SolveStats {
                iterations: it,
                residual: res / bnorm,
            });
        }
        op.apply_shifted(a, &pvec, &mut q);
        let pq = dot(&pvec, &q);
        if !(pq > 0.0) {
            return Err(Error::Numerical("conjugate gradients lost positive definiteness".into()));
        }
        let alpha = rz / pq;
        for &p in op.interior() {
            x[p] += alpha * pvec[p];
            r[p] -= alpha * q[p];
            z[p] = r[p] / diag[p];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for &p in op.interior() {
            pvec[p] = z[p] + beta * pvec[p];
        }
    }
    Err(Error::Numerical(format!("conjugate gradients did not converge in {max_iter} iterations")))
}

/// Solves `(I - a L) x = b` by Jacobi-preconditioned BiCGSTAB.
pub fn solve_bicgstab(
    op: &StencilOperator,
    a: f64,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<SolveStats> {
    let n = b.len();
    let inv: Vec<f64> = op.diagonal().iter().map(|d| 1.0 / (1.0 - a * d)).collect();
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats::default());
    }
    let mut r = vec![0.0; n];
    op.apply_shifted(a, x, &mut r);
    for &p in op.interior() {
        r[p] = b[p] - r[p];
    }
    let r0 = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut pv = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut zv = vec![0.0; n];
    let mut t = vec![0.0; n];
    for it in 0..max_iter {
        let res = dot(&r, &r).sqrt();
        if res <= tol * bnorm {
            return Ok(SolveStats {
                iterations: it,
                residual: res / bnorm,
            });
        }
        let rho_new = dot(&r0, &r);
        if rho_new == 0.0 || omega == 0.0 {
            return Err(Error::Numerical("BiCGSTAB breakdown".into()));
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for &p in op.interior() {
            pv[p] = r[p] + beta * (pv[p] - omega * v[p]);
            y[p] = inv[p] * pv[p];
        }
        op.apply_shifted(a, &y, &mut v);
        alpha = rho / dot(&r0, &v);
        for &p in op.interior() {
            s[p] = r[p] - alpha * v[p];
            zv[p] = inv[p] * s[p];
        }
        op.apply_shifted(a, &zv, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for &p in op.interior() {
            x[p] += alpha * y[p] + omega * zv[p];
            r[p] = s[p] - omega * t[p];
        }
    }
    Err(Error::Numerical(format!("BiCGSTAB did not converge in {max_iter} iterations")))
}
