//! Finite-difference heat kernels on a box with homogeneous Dirichlet data.
//!
//! Each square `X_i^2` is discretized as `-(D_+^T D_+ + D_-^T D_-)/2`,
//! where `D_s f(x) = sum_j s a_ij(x) (f(x + s h_j e_j) - f(x)) / h_j` is a
//! one-sided difference along every active axis at once. The averaged form
//! is second order, has a compact stencil (offsets `e_j` and `e_j - e_k`),
//! and is symmetric negative semidefinite for every field. What remains of
//! `sum_i X_i^2 + X_0 - V` after the Lebesgue adjoint is taken out,
//! `(a_0 - sum_i div(a_i) a_i) . grad - V`, uses centered differences.
//!
//! Time stepping is Crank-Nicolson after a Rannacher start of implicit
//! Euler half steps, which damps the high modes of the Dirac datum.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::stencil::{solve_bicgstab, solve_cg, StencilOperator};
use super::{Diagnostics, HeatModel, KernelEstimate, Method};
use crate::error::{Error, Result};
use crate::field::{CompiledField, PolyVectorField};
use crate::grid::Grid;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdConfig {
    /// Grid spacing per axis.
    pub spacing: Vec<f64>,
    pub dt: f64,
    /// Implicit Euler half steps before Crank-Nicolson; must be even.
    #[serde(default = "default_rannacher")]
    pub rannacher_steps: usize,
    /// Relative residual target of the linear solves.
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Repeat the run at twice the spacing and report `|e_h - e_2h|/3`.
    #[serde(default = "default_true")]
    pub error_estimate: bool,
}

fn default_rannacher() -> usize {
    4
}

fn default_tol() -> f64 {
    1e-11
}

fn default_true() -> bool {
    true
}

impl FdConfig {
    pub fn new(spacing: Vec<f64>, dt: f64) -> Self {
        Self {
            spacing,
            dt,
            rannacher_steps: default_rannacher(),
            tol: default_tol(),
            error_estimate: true,
        }
    }

    pub fn coarsened(&self) -> Self {
        Self {
            spacing: self.spacing.iter().map(|h| 2.0 * h).collect(),
            ..self.clone()
        }
    }
}

/// Which argument of the kernel the nodal solution represents.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// `u(t, y) = e(t, source, y)`: the transition density, evolved by the
    /// discrete adjoint.
    Forward,
    /// `u(t, y) = e(t, y, source)`: the semigroup applied to a Dirac mass.
    Backward,
}

const MAX_ITER: usize = 20_000;

/// Assembled evolution operator on a grid anchored at a chosen node.
#[derive(Clone, Debug)]
pub struct FdSolver {
    op: StencilOperator,
    symmetric: bool,
    /// Gershgorin bound on the symmetric part of the non-dissipative terms.
    omega: f64,
    tol: f64,
}

/// Grid with spacing exactly `h`, having `anchor` as a node and fitting
/// inside `[lo, hi]`.
pub fn anchored_grid(lo: &[f64], hi: &[f64], h: &[f64], anchor: &[f64]) -> Result<Grid> {
    let n = lo.len();
    if hi.len() != n || h.len() != n || anchor.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: h.len().min(hi.len()).min(anchor.len()),
        });
    }
    let mut lower = Vec::with_capacity(n);
    let mut shape = Vec::with_capacity(n);
    for i in 0..n {
        if !(h[i] > 0.0) {
            return Err(Error::DegenerateGrid(format!("spacing on axis {i} must be positive")));
        }
        let down = ((anchor[i] - lo[i]) / h[i] + 1e-9).floor();
        let up = ((hi[i] - anchor[i]) / h[i] + 1e-9).floor();
        if down < 1.0 || up < 1.0 {
            return Err(Error::InvalidParameter(format!(
                "anchor must lie at least one spacing inside the box on axis {i}"
            )));
        }
        lower.push(anchor[i] - down * h[i]);
        shape.push((down + up) as usize + 1);
    }
    Grid::new(lower, h.to_vec(), shape)
}

fn active_axes(x: &PolyVectorField) -> Vec<usize> {
    (0..x.dim()).filter(|&j| !x.component(j).is_zero()).collect()
}

fn unit(n: usize, j: usize, s: i32) -> Vec<i32> {
    let mut e = vec![0; n];
    e[j] = s;
    e
}

impl FdSolver {
    pub fn new(model: &HeatModel, lo: &[f64], hi: &[f64], spacing: &[f64], anchor: &[f64], orientation: Orientation) -> Result<Self> {
        let grid = anchored_grid(lo, hi, spacing, anchor)?;
        Self::on_grid(model, grid, orientation)
    }

    pub fn on_grid(model: &HeatModel, grid: Grid, orientation: Orientation) -> Result<Self> {
        let n = model.dim;
        if grid.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: grid.dim(),
            });
        }
        // first-order remainder a_0 - sum_i div(a_i) a_i
        let mut first = model.drift.clone().unwrap_or_else(|| PolyVectorField::zero(n));
        for x in &model.fields {
            first = first.sub(&x.mul_poly(&x.divergence()))?;
        }
        let mut offsets: BTreeSet<Vec<i32>> = BTreeSet::new();
        offsets.insert(vec![0; n]);
        for x in &model.fields {
            let act = active_axes(x);
            for &j in &act {
                offsets.insert(unit(n, j, 1));
                offsets.insert(unit(n, j, -1));
                for &k in &act {
                    if k != j {
                        let mut d = unit(n, j, 1);
                        d[k] = -1;
                        offsets.insert(d);
                    }
                }
            }
        }
        for j in active_axes(&first) {
            offsets.insert(unit(n, j, 1));
            offsets.insert(unit(n, j, -1));
        }
        let offsets: Vec<Vec<i32>> = offsets.into_iter().collect();
        let mut op = StencilOperator::new(grid.clone(), offsets.clone())?;
        let mut lower = StencilOperator::new(grid.clone(), offsets)?;
        let strides = grid.strides();
        let h = grid.spacing.clone();

        let fields: Vec<(CompiledField, Vec<usize>)> =
            model.fields.iter().map(|x| (x.compile(), active_axes(x))).collect();
        let mut a = vec![0.0; n];
        let mut row: Vec<(usize, f64)> = Vec::with_capacity(n + 1);
        for k in 0..grid.len() {
            let idx = grid.multi(k);
            let x = grid.coord(&idx);
            for (f, act) in &fields {
                f.eval_into(&x, &mut a);
                for s in [1i32, -1] {
                    row.clear();
                    let mut center = 0.0;
                    for &j in act {
                        let c = s as f64 * a[j] / h[j];
                        if c == 0.0 {
                            continue;
                        }
                        center -= c;
                        let inside = if s > 0 { idx[j] + 1 < grid.shape[j] } else { idx[j] > 0 };
                        if inside {
                            let q = if s > 0 { k + strides[j] } else { k - strides[j] };
                            row.push((q, c));
                        }
                    }
                    if center == 0.0 && row.is_empty() {
                        continue;
                    }
                    row.push((k, center));
                    for &(p, cp) in &row {
                        if !op.is_interior(p) {
                            continue;
                        }
                        for &(q, cq) in &row {
                            op.add(p, q, -0.5 * cp * cq);
                        }
                    }
                }
            }
        }
        let first_c = first.compile();
        let potential = model.potential.as_ref().map(|v| v.compile());
        let mut b = vec![0.0; n];
        for &p in op.interior().to_vec().iter() {
            let x = grid.node_coord(p);
            if !first_c.is_zero() {
                first_c.eval_into(&x, &mut b);
                for j in 0..n {
                    if b[j] != 0.0 {
                        let c = b[j] / (2.0 * h[j]);
                        for o in [&mut op, &mut lower] {
                            o.add(p, p + strides[j], c);
                            o.add(p, p - strides[j], -c);
                        }
                    }
                }
            }
            if let Some(v) = &potential {
                let c = -v.eval(&x);
                op.add(p, p, c);
                lower.add(p, p, c);
            }
        }
        let omega = lower.symmetric_part_bound();
        let op = match orientation {
            Orientation::Backward => op,
            Orientation::Forward => op.transpose(),
        };
        Ok(Self {
            op,
            symmetric: first.is_zero(),
            omega,
            tol: 1e-11,
        })
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn grid(&self) -> &Grid {
        self.op.grid()
    }

    pub fn operator(&self) -> &StencilOperator {
        &self.op
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Largest stable step, `None` when every step is stable.
    pub fn max_stable_dt(&self) -> Option<f64> {
        (self.omega > 0.0).then(|| 1.0 / self.omega)
    }

    pub fn check_stability(&self, dt: f64) -> Result<()> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter("time step must be positive".into()));
        }
        match self.max_stable_dt() {
            Some(req) if dt > req => Err(Error::Stability { dt, required: req }),
            _ => Ok(()),
        }
    }

    /// Discrete Dirac mass `1/cell_volume` at a grid node.
    pub fn dirac(&self, source: &[f64]) -> Result<Vec<f64>> {
        let g = self.grid();
        let k = g
            .node_at(source, 1e-6)
            .ok_or_else(|| Error::InvalidParameter("source is not a grid node".into()))?;
        if !self.op.is_interior(k) {
            return Err(Error::InvalidParameter("source lies on the Dirichlet boundary".into()));
        }
        let mut u = vec![0.0; g.len()];
        u[k] = 1.0 / g.cell_volume();
        Ok(u)
    }

    fn solve(&self, a: f64, rhs: &[f64], u: &mut [f64]) -> Result<()> {
        if self.symmetric {
            solve_cg(&self.op, a, rhs, u, self.tol, MAX_ITER)?;
        } else {
            solve_bicgstab(&self.op, a, rhs, u, self.tol, MAX_ITER)?;
        }
        Ok(())
    }

    fn implicit_euler(&self, u: &mut [f64], tau: f64) -> Result<()> {
        let rhs = u.to_vec();
        self.solve(tau, &rhs, u)
    }

    fn crank_nicolson(&self, u: &mut [f64], tau: f64, scratch: &mut [f64]) -> Result<()> {
        self.op.apply(u, scratch);
        let mut rhs = vec![0.0; u.len()];
        for &p in self.op.interior() {
            rhs[p] = u[p] + 0.5 * tau * scratch[p];
        }
        self.solve(0.5 * tau, &rhs, u)
    }

    /// Evolves `u` by `duration` in equal steps of at most `dt`, starting
    /// with `rannacher` implicit Euler half steps. Returns the step count.
    pub fn evolve(&self, u: &mut [f64], duration: f64, dt: f64, rannacher: usize) -> Result<usize> {
        self.check_stability(dt)?;
        if !rannacher.is_multiple_of(2) {
            return Err(Error::InvalidParameter("Rannacher half steps must come in pairs".into()));
        }
        if duration <= 0.0 {
            return Ok(0);
        }
        let n = ((duration / dt - 1e-9).ceil() as usize).max(1).max(rannacher / 2);
        let tau = duration / n as f64;
        let mut scratch = vec![0.0; u.len()];
        for _ in 0..rannacher {
            self.implicit_euler(u, 0.5 * tau)?;
        }
        for _ in rannacher / 2..n {
            self.crank_nicolson(u, tau, &mut scratch)?;
        }
        Ok(n)
    }

    /// Snapshots of the evolution of `u0` at increasing `times`; the
    /// Rannacher start is applied once, at time zero.
    pub fn run(&self, u0: Vec<f64>, times: &[f64], dt: f64, rannacher: usize) -> Result<(Vec<Vec<f64>>, usize)> {
        let mut u = u0;
        let mut now = 0.0;
        let mut out = Vec::with_capacity(times.len());
        let mut steps = 0;
        for (k, &t) in times.iter().enumerate() {
            if t < now {
                return Err(Error::InvalidParameter("snapshot times must be nondecreasing".into()));
            }
            steps += self.evolve(&mut u, t - now, dt, if k == 0 { rannacher } else { 0 })?;
            out.push(u.clone());
            now = t;
        }
        Ok((out, steps))
    }
}

fn interpolate_all(grid: &Grid, u: &[f64], targets: &[Vec<f64>]) -> Result<Vec<f64>> {
    targets
        .iter()
        .map(|y| {
            grid.interpolate(u, y)
                .ok_or_else(|| Error::InvalidParameter(format!("target {y:?} outside the Dirichlet box")))
        })
        .collect()
}

fn validate(times: &[f64], source: &[f64], model: &HeatModel, cfg: &FdConfig) -> Result<()> {
    if times.is_empty() || times.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::InvalidParameter("times must be positive".into()));
    }
    if source.len() != model.dim || cfg.spacing.len() != model.dim {
        return Err(Error::DimensionMismatch {
            expected: model.dim,
            found: source.len(),
        });
    }
    Ok(())
}

/// Transition densities `e(t, source, y)` against Lebesgue measure at
/// every time in `times`, on the box `[lo, hi]` with Dirichlet data.
pub fn fd_kernel_times(
    model: &HeatModel,
    times: &[f64],
    cfg: &FdConfig,
    source: &[f64],
    lo: &[f64],
    hi: &[f64],
    targets: &[Vec<f64>],
) -> Result<Vec<KernelEstimate>> {
    validate(times, source, model, cfg)?;
    let mut sorted = times.to_vec();
    sorted.sort_by(f64::total_cmp);
    let fine = FdSolver::new(model, lo, hi, &cfg.spacing, source, Orientation::Forward)?.with_tolerance(cfg.tol);
    let (snaps, steps) = fine.run(fine.dirac(source)?, &sorted, cfg.dt, cfg.rannacher_steps)?;
    let coarse = if cfg.error_estimate {
        let c = cfg.coarsened();
        let solver = FdSolver::new(model, lo, hi, &c.spacing, source, Orientation::Forward)?.with_tolerance(cfg.tol);
        let (s, _) = solver.run(solver.dirac(source)?, &sorted, cfg.dt, cfg.rannacher_steps)?;
        Some((solver, s))
    } else {
        None
    };
    let grid = fine.grid();
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let i = sorted.iter().position(|&s| s == t).expect("time present");
        let u = &snaps[i];
        let values = interpolate_all(grid, u, targets)?;
        let bias = match &coarse {
            Some((solver, s)) => {
                let v2 = interpolate_all(solver.grid(), &s[i], targets)?;
                Some(values.iter().zip(&v2).map(|(a, b)| (a - b).abs() / 3.0).collect())
            }
            None => None,
        };
        let peak = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let negative = u.iter().filter(|&&v| v < -1e-8 * peak).count();
        let mass = u.iter().sum::<f64>() * grid.cell_volume();
        out.push(KernelEstimate {
            method: Method::Fd,
            t,
            source: source.to_vec(),
            targets: targets.to_vec(),
            values,
            stderr: None,
            bias,
            measure_tag: "lebesgue".into(),
            diagnostics: Diagnostics {
                grid_shape: Some(grid.shape.clone()),
                negative_nodes: Some(negative),
                mass: Some(mass),
                solver_floor: Some(10.0 * cfg.tol * steps.max(1) as f64),
                ..Diagnostics::default()
            },
        });
    }
    Ok(out)
}

/// Single-time form of [`fd_kernel_times`].
pub fn fd_kernel(
    model: &HeatModel,
    t: f64,
    cfg: &FdConfig,
    source: &[f64],
    lo: &[f64],
    hi: &[f64],
    targets: &[Vec<f64>],
) -> Result<KernelEstimate> {
    Ok(fd_kernel_times(model, &[t], cfg, source, lo, hi, targets)?.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::{int, MultiPoly};
    use std::f64::consts::PI;

    fn euclid1() -> HeatModel {
        HeatModel::from_fields(vec![PolyVectorField::coordinate(1, 0)], vec![-5.0], vec![5.0]).unwrap()
    }

    fn heisenberg(r: f64) -> HeatModel {
        let x = MultiPoly::var(3, 0);
        let y = MultiPoly::var(3, 1);
        let one = MultiPoly::one(3);
        let x1 = PolyVectorField::new(vec![one.clone(), MultiPoly::zero(3), y.scale(&crate::poly::rat(-1, 2))]).unwrap();
        let x2 = PolyVectorField::new(vec![MultiPoly::zero(3), one, x.scale(&crate::poly::rat(1, 2))]).unwrap();
        HeatModel::from_fields(vec![x1, x2], vec![-r; 3], vec![r; 3]).unwrap()
    }

    #[test]
    fn one_dimensional_stencil_is_the_three_point_laplacian() {
        let s = FdSolver::new(&euclid1(), &[-1.0], &[1.0], &[0.25], &[0.0], Orientation::Backward).unwrap();
        let p = s.grid().node_at(&[0.0], 1e-9).unwrap();
        let op = s.operator();
        assert!((op.entry(p, &[0]) + 32.0).abs() < 1e-12);
        assert!((op.entry(p, &[1]) - 16.0).abs() < 1e-12);
        assert!((op.entry(p, &[-1]) - 16.0).abs() < 1e-12);
        assert!(s.is_symmetric());
        assert_eq!(s.max_stable_dt(), None);
    }

    #[test]
    fn euclidean_diagonal_matches_gaussian() {
        let cfg = FdConfig::new(vec![0.01], 0.0025);
        let est = fd_kernel(&euclid1(), 0.25, &cfg, &[0.0], &[-5.0], &[5.0], &[vec![0.0], vec![1.0]]).unwrap();
        let exact = 1.0 / PI.sqrt();
        assert!((est.values[0] - exact).abs() < 0.01 * exact, "{}", est.values[0]);
        let exact1 = (-1.0f64).exp() / PI.sqrt();
        assert!((est.values[1] - exact1).abs() < 0.01 * exact1);
        assert!(est.diagnostics.mass.unwrap() <= 1.0 + 1e-9);
        assert_eq!(est.diagnostics.negative_nodes, Some(0));
        let b = est.bias.as_ref().unwrap()[0];
        assert!((est.values[0] - exact).abs() < 3.0 * b + 1e-6);
    }

    #[test]
    fn heisenberg_stencil_is_symmetric_and_dissipative() {
        let s = FdSolver::new(&heisenberg(1.0), &[-1.0; 3], &[1.0; 3], &[0.25; 3], &[0.0; 3], Orientation::Backward).unwrap();
        let op = s.operator();
        assert!(op.asymmetry() < 1e-12);
        // X1 uses axes x, z and X2 uses y, z; there is no x-y coupling
        let used = op.used_offsets();
        assert!(!used.contains_key(&vec![1, -1, 0]));
        assert!(used.contains_key(&vec![1, 0, -1]));
        // energy of a random vector is nonpositive
        let g = s.grid().clone();
        let v: Vec<f64> = (0..g.len())
            .map(|k| if op.is_interior(k) { ((k * 7919) % 13) as f64 - 6.0 } else { 0.0 })
            .collect();
        let mut lv = vec![0.0; g.len()];
        op.apply(&v, &mut lv);
        assert!(v.iter().zip(&lv).map(|(a, b)| a * b).sum::<f64>() <= 1e-9);
    }

    #[test]
    fn constant_potential_scales_by_exponential() {
        let v = MultiPoly::constant(1, int(2));
        let m = euclid1().with_potential(Some(v)).unwrap();
        let cfg = FdConfig {
            error_estimate: false,
            ..FdConfig::new(vec![0.05], 0.01)
        };
        let a = fd_kernel(&euclid1(), 0.5, &cfg, &[0.0], &[-5.0], &[5.0], &[vec![0.3]]).unwrap();
        let b = fd_kernel(&m, 0.5, &cfg, &[0.0], &[-5.0], &[5.0], &[vec![0.3]]).unwrap();
        let ratio = b.values[0] / a.values[0];
        assert!((ratio - (-1.0f64).exp()).abs() < 1e-4, "{ratio}");
    }

    #[test]
    fn negative_potential_imposes_a_step_bound() {
        let v = MultiPoly::constant(1, int(-4));
        let m = euclid1().with_potential(Some(v)).unwrap();
        let s = FdSolver::new(&m, &[-1.0], &[1.0], &[0.1], &[0.0], Orientation::Forward).unwrap();
        assert!((s.max_stable_dt().unwrap() - 0.25).abs() < 1e-12);
        let err = s.check_stability(0.5).unwrap_err();
        assert!(matches!(err, Error::Stability { required, .. } if (required - 0.25).abs() < 1e-12));
    }

    #[test]
    fn drift_orientations_are_adjoint() {
        // dx = sqrt(2) dw + c dt: the transition density moves right
        let x = PolyVectorField::coordinate(1, 0);
        let drift = x.scale(&int(1));
        let m = HeatModel::new(vec![x], Some(drift), None, None, vec![-6.0], vec![6.0]).unwrap();
        let cfg = FdConfig {
            error_estimate: false,
            ..FdConfig::new(vec![0.02], 0.005)
        };
        let est = fd_kernel(&m, 0.5, &cfg, &[0.0], &[-6.0], &[6.0], &[vec![0.5], vec![-0.5]]).unwrap();
        let g = |y: f64| (-(y - 0.5f64).powi(2) / 2.0).exp() / (2.0 * PI).sqrt();
        assert!((est.values[0] - g(0.5)).abs() < 2e-3);
        assert!((est.values[1] - g(-0.5)).abs() < 2e-3);
        let back = FdSolver::new(&m, &[-6.0], &[6.0], &[0.02], &[0.0], Orientation::Backward).unwrap();
        let (u, _) = back.run(back.dirac(&[0.0]).unwrap(), &[0.5], 0.005, 4).unwrap();
        // e(t, y, 0) is the density of 0 reached from y: peaks at y = -0.5
        let v = back.grid().interpolate(&u[0], &[-0.5]).unwrap();
        assert!((v - g(0.5)).abs() < 2e-3);
    }
}
