//! Heat kernels of `Delta = sum_i X_i^2 + X_0 - V`: a Monte Carlo estimator
//! built on the Stratonovich diffusion, a Crank-Nicolson finite-difference
//! estimator with Dirichlet data, and the bookkeeping that moves kernels
//! between measures and coordinates.
//!
//! Both estimators report densities against Lebesgue measure in the
//! model's coordinates. [`kernel_change_measure`] converts to the model
//! measure `mu = h dx`.

pub mod fd;
pub mod kac;
pub mod mc;
pub mod stencil;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::chart::dilate;
use crate::error::{Error, Result};
use crate::field::{dilate_pullback, PolyVectorField, Weights};
use crate::nilpotent::linear_fit;
use crate::poly::{MultiPoly, Rational};

pub use fd::{fd_kernel, fd_kernel_times, FdConfig, FdSolver, Orientation};
pub use kac::{kac_check, KacReport};
pub use mc::{mc_kernel, McConfig};

/// Points per axis of the box scan behind the model invariants.
const SCAN_POINTS: usize = 17;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HeatModel {
    pub dim: usize,
    pub fields: Vec<PolyVectorField>,
    pub drift: Option<PolyVectorField>,
    pub potential: Option<MultiPoly>,
    /// Density `h` of the measure against Lebesgue measure; `None` is `h = 1`.
    pub density: Option<MultiPoly>,
    pub box_lo: Vec<f64>,
    pub box_hi: Vec<f64>,
    /// Smallest value of `V` found by the box scan.
    pub potential_min: f64,
}

impl HeatModel {
    pub fn new(
        fields: Vec<PolyVectorField>,
        drift: Option<PolyVectorField>,
        potential: Option<MultiPoly>,
        density: Option<MultiPoly>,
        box_lo: Vec<f64>,
        box_hi: Vec<f64>,
    ) -> Result<Self> {
        let dim = box_lo.len();
        if fields.is_empty() {
            return Err(Error::InvalidParameter("a heat model needs at least one field".into()));
        }
        if box_hi.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: box_hi.len(),
            });
        }
        if box_lo.iter().zip(&box_hi).any(|(a, b)| !(a < b)) {
            return Err(Error::DegenerateGrid("working box must have positive extent".into()));
        }
        for x in fields.iter().chain(drift.iter()) {
            if x.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: x.dim(),
                });
            }
        }
        for p in potential.iter().chain(density.iter()) {
            if p.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: p.dim(),
                });
            }
        }
        let mut model = Self {
            dim,
            fields,
            drift,
            potential,
            density,
            box_lo,
            box_hi,
            potential_min: 0.0,
        };
        model.scan()?;
        Ok(model)
    }

    /// Model with only generating fields, on the given box.
    pub fn from_fields(fields: Vec<PolyVectorField>, box_lo: Vec<f64>, box_hi: Vec<f64>) -> Result<Self> {
        Self::new(fields, None, None, None, box_lo, box_hi)
    }

    pub fn with_box(&self, lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        Self::new(
            self.fields.clone(),
            self.drift.clone(),
            self.potential.clone(),
            self.density.clone(),
            lo,
            hi,
        )
    }

    pub fn with_potential(&self, v: Option<MultiPoly>) -> Result<Self> {
        Self::new(
            self.fields.clone(),
            self.drift.clone(),
            v,
            self.density.clone(),
            self.box_lo.clone(),
            self.box_hi.clone(),
        )
    }

    /// Tensor scan of the box: records `min V` and rejects `h <= 0`.
    fn scan(&mut self) -> Result<()> {
        let n = self.dim;
        let per_axis = if n <= 4 { SCAN_POINTS } else { 5 };
        let total = per_axis.pow(n as u32);
        let v = self.potential.as_ref().map(MultiPoly::compile);
        let h = self.density.as_ref().map(MultiPoly::compile);
        let mut vmin = f64::INFINITY;
        let mut x = vec![0.0; n];
        for k in 0..total {
            let mut m = k;
            for i in 0..n {
                let j = m % per_axis;
                m /= per_axis;
                let s = j as f64 / (per_axis - 1) as f64;
                x[i] = self.box_lo[i] + s * (self.box_hi[i] - self.box_lo[i]);
            }
            if let Some(v) = &v {
                vmin = vmin.min(v.eval(&x));
            }
            if let Some(h) = &h {
                let hv = h.eval(&x);
                if !(hv > 0.0) {
                    return Err(Error::NonpositiveDensity { value: hv });
                }
            }
        }
        self.potential_min = if v.is_some() { vmin } else { 0.0 };
        if !self.potential_min.is_finite() {
            return Err(Error::Numerical("potential is not finite on the box".into()));
        }
        Ok(())
    }

    pub fn density_at(&self, x: &[f64]) -> f64 {
        self.density.as_ref().map_or(1.0, |h| h.eval_f64(x))
    }

    /// `eps^2 delta_eps^* Delta`: fields `eps delta_eps^* X_i`, drift
    /// `eps^2 delta_eps^* X_0`, potential `eps^2 V o delta_eps`, and density
    /// `h o delta_eps`, on the same box.
    pub fn dilated(&self, w: &Weights, eps: &Rational) -> Result<Self> {
        let fields = self
            .fields
            .iter()
            .map(|x| dilate_pullback(x, w, eps, 1))
            .collect::<Result<Vec<_>>>()?;
        let drift = self.drift.as_ref().map(|x| dilate_pullback(x, w, eps, 2)).transpose()?;
        let e2 = eps * eps;
        let potential = self.potential.as_ref().map(|v| v.dilate(w.as_slice(), eps).scale(&e2));
        let density = self.density.as_ref().map(|h| h.dilate(w.as_slice(), eps));
        Self::new(fields, drift, potential, density, self.box_lo.clone(), self.box_hi.clone())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    Mc,
    Fd,
}

/// Kernel values `e(t, source, target)` at a list of targets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelEstimate {
    pub method: Method,
    pub t: f64,
    pub source: Vec<f64>,
    pub targets: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    /// Batch-means standard error (Monte Carlo only).
    pub stderr: Option<Vec<f64>>,
    /// Estimated systematic error: kernel-density bias for Monte Carlo,
    /// grid-refinement estimate for finite differences.
    pub bias: Option<Vec<f64>>,
    pub measure_tag: String,
    pub diagnostics: Diagnostics,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub paths: Option<u64>,
    pub killed: Option<u64>,
    pub bandwidth: Option<Vec<f64>>,
    pub grid_shape: Option<Vec<usize>>,
    /// Nodes below `-1e-8 max` at the reported time.
    pub negative_nodes: Option<usize>,
    /// Integral of the nodal solution over the grid.
    pub mass: Option<f64>,
    /// Bound on the accumulated linear-solver error, relative to the peak.
    pub solver_floor: Option<f64>,
}

impl KernelEstimate {
    /// Per-target error combining statistical and systematic parts.
    pub fn combined_error(&self) -> Vec<f64> {
        (0..self.values.len())
            .map(|i| {
                let s = self.stderr.as_ref().map_or(0.0, |v| v[i]);
                let b = self.bias.as_ref().map_or(0.0, |v| v[i]);
                (s * s + b * b).sqrt()
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("estimates serialize")
    }

    /// `x1,..,xn,value,stderr,bias` rows with a header.
    pub fn to_csv(&self) -> String {
        let n = self.source.len();
        let mut s = String::new();
        let head: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
        let _ = writeln!(s, "{},value,stderr,bias", head.join(","));
        for (i, y) in self.targets.iter().enumerate() {
            let coords: Vec<String> = y.iter().map(|v| format!("{v:.17e}")).collect();
            let se = self.stderr.as_ref().map_or(String::new(), |v| format!("{:.17e}", v[i]));
            let b = self.bias.as_ref().map_or(String::new(), |v| format!("{:.17e}", v[i]));
            let _ = writeln!(s, "{},{:.17e},{},{}", coords.join(","), self.values[i], se, b);
        }
        s
    }
}

/// Converts a density against Lebesgue measure into one against
/// `h dx` by dividing by `h(target)`.
pub fn kernel_change_measure(est: &KernelEstimate, h: &MultiPoly) -> Result<KernelEstimate> {
    let mut out = est.clone();
    let scale: Vec<f64> = est
        .targets
        .iter()
        .map(|y| {
            let v = h.eval_f64(y);
            if v > 0.0 {
                Ok(1.0 / v)
            } else {
                Err(Error::NonpositiveDensity { value: v })
            }
        })
        .collect::<Result<_>>()?;
    let rescale = |v: &mut Vec<f64>| v.iter_mut().zip(&scale).for_each(|(a, s)| *a *= s);
    rescale(&mut out.values);
    if let Some(v) = out.stderr.as_mut() {
        rescale(v);
    }
    if let Some(v) = out.bias.as_mut() {
        rescale(v);
    }
    out.measure_tag = format!("({}) / ({h})", est.measure_tag);
    Ok(out)
}

/// Relabels an estimate of `e_A(t', phi(q), phi(q'))` as the kernel of
/// `phi^* A phi_*` at `(t, q, q')`: values are multiplied by
/// `|J(phi)(q')|`, points are mapped through `phi_inverse`, and the time
/// is divided by `time_scale` (1 for a plain change of variables).
pub fn kernel_diffeo_transform(
    est: &KernelEstimate,
    phi_inverse: &dyn Fn(&[f64]) -> Vec<f64>,
    jacobian: &dyn Fn(&[f64]) -> f64,
    time_scale: f64,
) -> KernelEstimate {
    let mut out = est.clone();
    out.source = phi_inverse(&est.source);
    out.targets = est.targets.iter().map(|y| phi_inverse(y)).collect();
    let jac: Vec<f64> = out.targets.iter().map(|q| jacobian(q).abs()).collect();
    let rescale = |v: &mut Vec<f64>| v.iter_mut().zip(&jac).for_each(|(a, j)| *a *= j);
    rescale(&mut out.values);
    if let Some(v) = out.stderr.as_mut() {
        rescale(v);
    }
    if let Some(v) = out.bias.as_mut() {
        rescale(v);
    }
    out.t = est.t / time_scale;
    out
}

/// [`kernel_diffeo_transform`] for `phi = delta_eps` with the operator
/// rescaled by `eps^2`: `|eps|^Q e(eps^2 t, delta_eps x, delta_eps x')`.
pub fn kernel_dilation_transform(est: &KernelEstimate, w: &Weights, eps: f64) -> Result<KernelEstimate> {
    if eps == 0.0 {
        return Err(Error::ZeroDilation);
    }
    let jac = eps.abs().powi(w.homogeneous_dim() as i32);
    Ok(kernel_diffeo_transform(
        est,
        &|x: &[f64]| dilate(x, w, 1.0 / eps),
        &|_: &[f64]| jac,
        eps * eps,
    ))
}

/// One kernel value for the off-diagonal decay fit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecaySample {
    pub t: f64,
    pub distance: f64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayReport {
    pub pass: bool,
    /// Slope of the upper envelope of `log(t^{Q/2} e)` against `d^2/t`.
    pub envelope_slope: f64,
    /// Least-squares slope over all samples.
    pub fitted_slope: f64,
    pub threshold: f64,
    pub bins: usize,
}

/// Gaussian-tail check: the upper envelope of `log(t^{Q/2} e(t,x,y))`
/// against `d(x,y)^2/t` must fall at least as fast as
/// `-1/(4(1 + eps_slack))`. Needs one decade of values and a unit spread in
/// `d^2/t`; otherwise `Inconclusive`.
pub fn exp_decay_check(samples: &[DecaySample], q: f64, eps_slack: f64) -> Result<DecayReport> {
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|s| s.value > 0.0 && s.t > 0.0)
        .map(|s| (s.distance * s.distance / s.t, s.value.ln() + 0.5 * q * s.t.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::Inconclusive("fewer than three positive kernel values".into()));
    }
    let (xlo, xhi) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let (ylo, yhi) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
    if xhi - xlo < 1.0 || yhi - ylo < std::f64::consts::LN_10 {
        return Err(Error::Inconclusive(format!(
            "insufficient dynamic range: d^2/t spans {:.3}, log values span {:.3}",
            xhi - xlo,
            yhi - ylo
        )));
    }
    let bins = (pts.len() / 3).clamp(3, 12);
    let width = (xhi - xlo) / bins as f64;
    let mut env = Vec::new();
    for b in 0..bins {
        let (a, c) = (xlo + b as f64 * width, xlo + (b + 1) as f64 * width);
        let best = pts
            .iter()
            .filter(|p| p.0 >= a && (p.0 < c || (b + 1 == bins && p.0 <= c)))
            .fold(None, |acc: Option<(f64, f64)>, p| match acc {
                Some(q) if q.1 >= p.1 => Some(q),
                _ => Some(*p),
            });
        env.extend(best);
    }
    if env.len() < 2 {
        return Err(Error::Inconclusive("envelope has fewer than two bins".into()));
    }
    let (envelope_slope, _) = linear_fit(&env);
    let (fitted_slope, _) = linear_fit(&pts);
    let threshold = -0.25 / (1.0 + eps_slack);
    Ok(DecayReport {
        pass: envelope_slope <= threshold,
        envelope_slope,
        fitted_slope,
        threshold,
        bins: env.len(),
    })
}
