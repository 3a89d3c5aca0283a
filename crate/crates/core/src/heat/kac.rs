//! Locality of small-time kernels: Dirichlet solutions on nested boxes agree
//! at interior points up to a discrepancy that vanishes faster than any
//! power of `t`.

use serde::Serialize;

use super::fd::{fd_kernel_times, FdConfig};
use super::HeatModel;
use crate::error::{Error, Result};
use crate::nilpotent::linear_fit;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KacReport {
    pub t: Vec<f64>,
    /// `sup_x |e_small(t, s, x) - e_large(t, s, x)|` over the interior points.
    pub discrepancy: Vec<f64>,
    /// Linear-solver error floor per time.
    pub floor: Vec<f64>,
    /// Log-log slope over the times above the floor.
    pub slope: Option<f64>,
    pub pass: bool,
    pub warnings: Vec<String>,
}

/// Runs the finite-difference kernel from `source` on both boxes and
/// compares at `interior_points`. Passes when the log-log slope of the
/// discrepancy exceeds `3`, or when fewer than two times rise above the
/// solver floor.
pub fn kac_check(
    model: &HeatModel,
    t_grid: &[f64],
    cfg: &FdConfig,
    source: &[f64],
    box_small: (&[f64], &[f64]),
    box_large: (&[f64], &[f64]),
    interior_points: &[Vec<f64>],
) -> Result<KacReport> {
    let (slo, shi) = box_small;
    let (llo, lhi) = box_large;
    let n = model.dim;
    if slo.len() != n || llo.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: slo.len(),
        });
    }
    for i in 0..n {
        if slo[i] < llo[i] || shi[i] > lhi[i] {
            return Err(Error::InvalidParameter("small box must lie inside the large box".into()));
        }
    }
    let mut warnings = Vec::new();
    let mut points = interior_points.to_vec();
    points.push(source.to_vec());
    for p in &points {
        let margin = (0..n)
            .map(|i| ((p[i] - slo[i]) / cfg.spacing[i]).min((shi[i] - p[i]) / cfg.spacing[i]))
            .fold(f64::INFINITY, f64::min);
        if margin < 0.0 {
            return Err(Error::InvalidParameter(format!("point {p:?} is outside the small box")));
        }
        if margin < 4.0 {
            warnings.push(format!("point {p:?} is only {margin:.1} spacings from the small box boundary"));
        }
    }
    let cfg = FdConfig {
        error_estimate: false,
        ..cfg.clone()
    };
    let small = fd_kernel_times(model, t_grid, &cfg, source, slo, shi, interior_points)?;
    let large = fd_kernel_times(model, t_grid, &cfg, source, llo, lhi, interior_points)?;
    let mut discrepancy = Vec::with_capacity(t_grid.len());
    let mut floor = Vec::with_capacity(t_grid.len());
    for (a, b) in small.iter().zip(&large) {
        let d = a
            .values
            .iter()
            .zip(&b.values)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        let peak = a.values.iter().chain(&b.values).fold(0.0f64, |m, v| m.max(v.abs()));
        let rel = a.diagnostics.solver_floor.unwrap_or(0.0).max(b.diagnostics.solver_floor.unwrap_or(0.0));
        discrepancy.push(d);
        floor.push(rel * peak);
    }
    let above: Vec<(f64, f64)> = t_grid
        .iter()
        .zip(discrepancy.iter().zip(&floor))
        .filter(|(_, (d, f))| **d > **f && **d > 0.0)
        .map(|(t, (d, _))| (t.ln(), d.ln()))
        .collect();
    let slope = (above.len() >= 2).then(|| linear_fit(&above).0);
    let pass = slope.is_none_or(|s| s > 3.0);
    Ok(KacReport {
        t: t_grid.to_vec(),
        discrepancy,
        floor,
        slope,
        pass,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::PolyVectorField;

    fn euclid1() -> HeatModel {
        HeatModel::from_fields(vec![PolyVectorField::coordinate(1, 0)], vec![-4.0], vec![4.0]).unwrap()
    }

    #[test]
    fn identical_boxes_agree_exactly() {
        let cfg = FdConfig::new(vec![0.05], 0.002);
        let r = kac_check(
            &euclid1(),
            &[0.01, 0.05, 0.1],
            &cfg,
            &[0.0],
            (&[-2.0], &[2.0]),
            (&[-2.0], &[2.0]),
            &[vec![0.0], vec![0.5]],
        )
        .unwrap();
        assert!(r.discrepancy.iter().all(|&d| d == 0.0));
        assert!(r.pass);
    }

    #[test]
    fn nested_boxes_obey_the_image_bound() {
        let cfg = FdConfig::new(vec![0.02], 0.001);
        let ts = [0.1, 0.2, 0.3, 0.4, 0.5];
        let r = kac_check(&euclid1(), &ts, &cfg, &[0.0], (&[-2.0], &[2.0]), (&[-4.0], &[4.0]), &[vec![0.0]]).unwrap();
        for (t, d) in ts.iter().zip(&r.discrepancy) {
            // two image charges at distance 4 from the source
            let bound = 2.0 * (-4.0 / t).exp() / (4.0 * std::f64::consts::PI * t).sqrt();
            assert!(*d <= 1.5 * bound + r.floor[0], "t={t} d={d} bound={bound}");
        }
        assert!(r.pass, "{r:?}");
        assert!(r.slope.unwrap() > 3.0);
    }
}
