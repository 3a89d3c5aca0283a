//! First Duhamel correction
//! `C_1(t) = int_0^t e^{(t-s) Delta_hat} A_1 e^{s Delta_hat} ds`
//! as a kernel `C_1(t, y, source)`.
//!
//! The integrand is singular at both ends, so the time integral uses the
//! open midpoint rule on `N` nodes `s_k = (k + 1/2) t / N`. The sum is
//! accumulated Horner-style, `w <- P(t/N) w + A_1 u(s_k)`, with the same
//! step partition as the propagation of `u`, so `A_1 = 1` reproduces
//! `t e^{t Delta_hat}` up to the linear-solver tolerance.

use serde::Serialize;

use super::symbols::DiffOperator;
use crate::error::{Error, Result};
use crate::heat::{FdConfig, FdSolver, HeatModel, Orientation};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DuhamelReport {
    pub t: f64,
    pub source: Vec<f64>,
    pub targets: Vec<Vec<f64>>,
    pub nodes: usize,
    pub values: Vec<f64>,
    /// `e_hat(t, y, source)` from the same propagation.
    pub semigroup: Vec<f64>,
    /// `|Q_N - Q_{N/2}| / 3` per target; includes the time-stepping
    /// difference between the two step partitions.
    pub quadrature_error: Vec<f64>,
    /// `|C_h - C_2h| / 3` per target, when requested.
    pub spatial_error: Option<Vec<f64>>,
    /// Relative linear-solver floor.
    pub solver_floor: f64,
}

impl DuhamelReport {
    pub fn combined_error(&self) -> Vec<f64> {
        (0..self.values.len())
            .map(|k| {
                let s = self.spatial_error.as_ref().map_or(0.0, |e| e[k]);
                (self.quadrature_error[k].powi(2) + s * s).sqrt()
            })
            .collect()
    }
}

struct Accumulated {
    c1: Vec<f64>,
    u: Vec<f64>,
    steps: usize,
}

fn accumulate(solver: &FdSolver, a1: &DiffOperator, source: &[f64], t: f64, nodes: usize, cfg: &FdConfig) -> Result<Accumulated> {
    let grid = solver.grid().clone();
    let op = a1.compile();
    let mut u = solver.dirac(source)?;
    let h = t / nodes as f64;
    let mut steps = solver.evolve(&mut u, 0.5 * h, cfg.dt, cfg.rannacher_steps)?;
    let mut w = vec![0.0; u.len()];
    op.apply_grid(&grid, &u, &mut w);
    let mut au = vec![0.0; u.len()];
    for _ in 1..nodes {
        steps += solver.evolve(&mut u, h, cfg.dt, 0)?;
        solver.evolve(&mut w, h, cfg.dt, 0)?;
        op.apply_grid(&grid, &u, &mut au);
        w.iter_mut().zip(&au).for_each(|(a, b)| *a += b);
    }
    steps += solver.evolve(&mut u, 0.5 * h, cfg.dt, 0)?;
    solver.evolve(&mut w, 0.5 * h, cfg.dt, 0)?;
    w.iter_mut().for_each(|v| *v *= h);
    Ok(Accumulated { c1: w, u, steps })
}

fn at_targets(solver: &FdSolver, u: &[f64], targets: &[Vec<f64>]) -> Result<Vec<f64>> {
    targets
        .iter()
        .map(|y| {
            solver
                .grid()
                .interpolate(u, y)
                .ok_or_else(|| Error::InvalidParameter(format!("target {y:?} outside the Dirichlet box")))
        })
        .collect()
}

/// `C_1(t, y, source)` at each target for the nilpotent model `hat`, on
/// the box `[lo, hi]` with Dirichlet data. `nodes` must be even and at
/// least 2; the half rule supplies the quadrature error.
pub fn duhamel_c1_kernel(
    hat: &HeatModel,
    a1: &DiffOperator,
    t: f64,
    cfg: &FdConfig,
    lo: &[f64],
    hi: &[f64],
    source: &[f64],
    targets: &[Vec<f64>],
    nodes: usize,
) -> Result<DuhamelReport> {
    if !(t > 0.0) {
        return Err(Error::InvalidParameter("time must be positive".into()));
    }
    if nodes < 2 || !nodes.is_multiple_of(2) {
        return Err(Error::InvalidParameter("quadrature nodes must be even and at least 2".into()));
    }
    if a1.dim != hat.dim {
        return Err(Error::DimensionMismatch {
            expected: hat.dim,
            found: a1.dim,
        });
    }
    let solver = FdSolver::new(hat, lo, hi, &cfg.spacing, source, Orientation::Backward)?.with_tolerance(cfg.tol);
    let full = accumulate(&solver, a1, source, t, nodes, cfg)?;
    let half = accumulate(&solver, a1, source, t, nodes / 2, cfg)?;
    let values = at_targets(&solver, &full.c1, targets)?;
    let semigroup = at_targets(&solver, &full.u, targets)?;
    let coarse_vals = at_targets(&solver, &half.c1, targets)?;
    let quadrature_error = values.iter().zip(&coarse_vals).map(|(a, b)| (a - b).abs() / 3.0).collect();
    let spatial_error = if cfg.error_estimate {
        let c = cfg.coarsened();
        let cs = FdSolver::new(hat, lo, hi, &c.spacing, source, Orientation::Backward)?.with_tolerance(c.tol);
        let acc = accumulate(&cs, a1, source, t, nodes, &c)?;
        let v2 = at_targets(&cs, &acc.c1, targets)?;
        Some(values.iter().zip(&v2).map(|(a, b)| (a - b).abs() / 3.0).collect())
    } else {
        None
    };
    Ok(DuhamelReport {
        t,
        source: source.to_vec(),
        targets: targets.to_vec(),
        nodes,
        values,
        semigroup,
        quadrature_error,
        spatial_error,
        solver_floor: 10.0 * cfg.tol * full.steps as f64 * nodes as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::PolyVectorField;
    use crate::poly::MultiPoly;

    fn grushin_hat() -> HeatModel {
        let x1 = MultiPoly::var(2, 0);
        HeatModel::from_fields(
            vec![PolyVectorField::coordinate(2, 0), PolyVectorField::along(1, x1)],
            vec![-3.0, -3.0],
            vec![3.0, 3.0],
        )
        .unwrap()
    }

    fn cfg() -> FdConfig {
        FdConfig {
            error_estimate: false,
            ..FdConfig::new(vec![0.1, 0.1], 0.01)
        }
    }

    #[test]
    fn zero_symbol_gives_zero() {
        let m = grushin_hat();
        let r = duhamel_c1_kernel(&m, &DiffOperator::zero(2), 0.5, &cfg(), &m.box_lo, &m.box_hi, &[0.0, 0.0], &[vec![0.0, 0.0]], 4).unwrap();
        assert_eq!(r.values, vec![0.0]);
    }

    #[test]
    fn unit_symbol_gives_t_times_the_semigroup() {
        let m = grushin_hat();
        let one = DiffOperator::multiplication(MultiPoly::one(2));
        let targets = vec![vec![0.0, 0.0], vec![0.5, 0.2]];
        let t = 0.5;
        let r = duhamel_c1_kernel(&m, &one, t, &cfg(), &m.box_lo, &m.box_hi, &[0.0, 0.0], &targets, 8).unwrap();
        for (v, s) in r.values.iter().zip(&r.semigroup) {
            assert!((v - t * s).abs() <= r.solver_floor * t * s.abs().max(1.0), "{v} vs {}", t * s);
        }
        // the half rule steps time on a different partition, so its gap is
        // time-stepping error only
        assert!(r.quadrature_error.iter().zip(&r.values).all(|(e, v)| *e <= 1e-3 * v.abs()));
    }

    #[test]
    fn odd_symbol_vanishes_on_the_symmetric_diagonal() {
        let m = grushin_hat();
        let mut a1 = DiffOperator::zero(2);
        a1.second.insert((1, 1), MultiPoly::var(2, 0).pow(3).scale(&crate::poly::int(2)));
        let r = duhamel_c1_kernel(&m, &a1, 0.5, &cfg(), &m.box_lo, &m.box_hi, &[0.0, 0.0], &[vec![0.0, 0.0], vec![0.4, 0.1]], 8).unwrap();
        assert!(r.values[0].abs() < 1e-10, "{}", r.values[0]);
        assert!(r.values[1].abs() > 1e-4, "{}", r.values[1]);
        assert!(matches!(duhamel_c1_kernel(&m, &a1, 0.5, &cfg(), &m.box_lo, &m.box_hi, &[0.0, 0.0], &[], 3), Err(Error::InvalidParameter(_))));
    }
}
