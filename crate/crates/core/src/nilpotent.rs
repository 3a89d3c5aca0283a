//! Nilpotent approximation at a point, the damped fields interpolating
//! between `X^eps` and its limit, and the polynomial Hörmander coercivity
//! scan.

use nalgebra::{DMatrix, SymmetricEigen};
use num_traits::Zero;
use rayon::prelude::*;
use serde::Serialize;

use crate::chart::{push_field_to_degree, PrivilegedChart};
use crate::error::{Error, Result};
use crate::field::{dilate_pullback, graded_parts, lie_bracket, CompiledField, PolyVectorField, Weights};
use crate::flag::sr_pseudo_norm;
use crate::grid::Grid;
use crate::poly::{from_f64, to_f64, MultiPoly, Rational};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HatDrift {
    pub field: PolyVectorField,
    /// `-1` for a drift in `D`, `-2` for a drift in `D^2`.
    pub degree: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NilpotentStructure {
    pub dim: usize,
    pub weights: Weights,
    /// Degree of nonholonomy at the base point.
    pub r: usize,
    pub hat_fields: Vec<PolyVectorField>,
    pub hat_drift: Option<HatDrift>,
    /// Density of the nilpotentized measure against Lebesgue measure in the
    /// chart: `h(q) |det D phi(0)|`.
    pub measure_constant: f64,
}

/// Degree-`-1` parts of the generating fields (and the drift's lowest part)
/// in the chart.
pub fn nilpotentize(
    fields: &[PolyVectorField],
    drift: Option<&PolyVectorField>,
    chart: &PrivilegedChart,
    drift_in_d2: bool,
    density: Option<&MultiPoly>,
) -> Result<NilpotentStructure> {
    let w = &chart.weights;
    let mut hat_fields = Vec::with_capacity(fields.len());
    for (i, x) in fields.iter().enumerate() {
        let pushed = push_field_to_degree(chart, x, -1)?;
        let parts = graded_parts(&pushed, w, -(w.max() as i64), -1);
        if parts.keys().any(|&k| k < -1) {
            return Err(Error::InvalidParameter(format!(
                "field {i} is not a section of the distribution at the base point"
            )));
        }
        match parts.get(&-1) {
            Some(p) => hat_fields.push(p.clone()),
            None => return Err(Error::EmptyLowestPart { index: i }),
        }
    }
    let hat_drift = match drift {
        None => None,
        Some(x0) => {
            let degree = if drift_in_d2 { -2 } else { -1 };
            let pushed = push_field_to_degree(chart, x0, degree)?;
            let parts = graded_parts(&pushed, w, -(w.max() as i64), degree);
            if parts.keys().any(|&k| k < degree) {
                return Err(Error::InvalidParameter(format!(
                    "drift has terms below degree {degree}; declare it as a section of D^2"
                )));
            }
            Some(HatDrift {
                field: parts.get(&degree).cloned().unwrap_or_else(|| PolyVectorField::zero(chart.dim())),
                degree,
            })
        }
    };
    let h = match density {
        Some(d) => nilpotentize_measure(d, &chart.base_point)?,
        None => 1.0,
    };
    let jac = to_f64(&chart.jacobian_determinant(0)?.constant_term());
    Ok(NilpotentStructure {
        dim: chart.dim(),
        weights: w.clone(),
        r: w.max() as usize,
        hat_fields,
        hat_drift,
        measure_constant: h * jac,
    })
}

/// `h(q)`: the nilpotentized measure is `h(q)` times the nilpotentized
/// Lebesgue measure.
pub fn nilpotentize_measure(density: &MultiPoly, point: &[Rational]) -> Result<f64> {
    let v = density.eval(point);
    if v <= Rational::zero() {
        return Err(Error::NonpositiveDensity { value: to_f64(&v) });
    }
    Ok(to_f64(&v))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DivergenceReport {
    pub divergence_free: bool,
    /// Euclidean divergence of each hat field (and the drift last, if any).
    pub residuals: Vec<MultiPoly>,
}

pub fn check_divergence_free(s: &NilpotentStructure) -> DivergenceReport {
    let mut residuals: Vec<MultiPoly> = s.hat_fields.iter().map(PolyVectorField::divergence).collect();
    if let Some(d) = &s.hat_drift {
        residuals.push(d.field.divergence());
    }
    DivergenceReport {
        divergence_free: residuals.iter().all(MultiPoly::is_zero),
        residuals,
    }
}

/// Whether every bracket of the hat fields of depth `r + 1` vanishes.
pub fn check_nilpotent_step(s: &NilpotentStructure) -> Result<bool> {
    let mut level: Vec<PolyVectorField> = s.hat_fields.clone();
    for _ in 1..=s.r {
        let mut next = Vec::new();
        for x in &s.hat_fields {
            for b in &level {
                let br = lie_bracket(x, b)?;
                if !br.is_zero() {
                    next.push(br);
                }
            }
        }
        level = next;
    }
    Ok(level.is_empty())
}

/// `sum_i X_i^2 f (+ X_0 f)` exactly.
pub fn hat_operator_apply(s: &NilpotentStructure, f: &MultiPoly) -> MultiPoly {
    let mut out = MultiPoly::zero(f.dim());
    for x in &s.hat_fields {
        out = &out + &x.apply(&x.apply(f));
    }
    if let Some(d) = &s.hat_drift {
        out = &out + &d.field.apply(f);
    }
    out
}

/// Centered-difference version of [`hat_operator_apply`] at the listed
/// nodes. Each node needs a halo of two nodes on every axis.
pub fn hat_operator_apply_grid(s: &NilpotentStructure, grid: &Grid, values: &[f64], nodes: &[usize]) -> Result<Vec<f64>> {
    if grid.dim() != s.dim || values.len() != grid.len() {
        return Err(Error::DimensionMismatch {
            expected: grid.len(),
            found: values.len(),
        });
    }
    let fields: Vec<CompiledField> = s.hat_fields.iter().map(PolyVectorField::compile).collect();
    let drift = s.hat_drift.as_ref().map(|d| d.field.compile());
    let strides = grid.strides();
    let n = s.dim;
    // X f at node k by centered differences
    let apply_once = |x: &CompiledField, f: &dyn Fn(usize) -> f64, k: usize| -> f64 {
        let a = x.eval(&grid.node_coord(k));
        let mut acc = 0.0;
        for j in 0..n {
            if a[j] != 0.0 {
                let d = (f(k + strides[j]) - f(k - strides[j])) / (2.0 * grid.spacing[j]);
                acc += a[j] * d;
            }
        }
        acc
    };
    let mut out = Vec::with_capacity(nodes.len());
    for &k in nodes {
        if k >= grid.len() || !grid.is_interior(k, 2) {
            return Err(Error::StencilOverflow { node: k });
        }
        let direct = |i: usize| values[i];
        let mut acc = 0.0;
        for x in &fields {
            let inner = |i: usize| apply_once(x, &direct, i);
            acc += apply_once(x, &inner, k);
        }
        if let Some(d) = &drift {
            acc += apply_once(d, &direct, k);
        }
        out.push(acc);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CutoffProfile {
    /// `exp(1 - 1/(1 - s^2))` on the transition variable `s in [0, 1)`.
    #[default]
    Bump,
    /// `g(1-s) / (g(1-s) + g(s))` with `g(t) = exp(-1/t)`.
    SmoothStep,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct CutoffSpec {
    pub r1: f64,
    pub r2: f64,
    #[serde(default)]
    pub profile: CutoffProfile,
}

impl Default for CutoffSpec {
    fn default() -> Self {
        Self {
            r1: 1.0,
            r2: 2.0,
            profile: CutoffProfile::Bump,
        }
    }
}

impl CutoffSpec {
    pub fn new(r1: f64, r2: f64, profile: CutoffProfile) -> Result<Self> {
        if !(r1 > 0.0 && r2 > r1) {
            return Err(Error::InvalidParameter(format!("cutoff radii must satisfy 0 < R1 < R2, got {r1}, {r2}")));
        }
        Ok(Self { r1, r2, profile })
    }

    /// Profile value at sR pseudo-norm `rho`.
    pub fn at_norm(&self, rho: f64) -> f64 {
        if rho <= self.r1 {
            return 1.0;
        }
        if rho >= self.r2 {
            return 0.0;
        }
        let s = (rho - self.r1) / (self.r2 - self.r1);
        match self.profile {
            CutoffProfile::Bump => (1.0 - 1.0 / (1.0 - s * s)).exp(),
            CutoffProfile::SmoothStep => {
                let g = |t: f64| if t <= 0.0 { 0.0 } else { (-1.0 / t).exp() };
                let a = g(1.0 - s);
                a / (a + g(s))
            }
        }
    }

    pub fn eval(&self, x: &[f64], w: &Weights) -> f64 {
        self.at_norm(sr_pseudo_norm(x, w))
    }
}

/// `Y^{eps,gamma} = X_hat + chi(delta_{|eps|^gamma} x) (Y^eps - X_hat)`, kept
/// as the exact hat part plus a cutoff-weighted polynomial correction.
#[derive(Clone, Debug)]
pub struct DampedField {
    pub gamma: f64,
    pub eps: f64,
    /// `1` for fields in `D`, `2` for a drift in `D^2`.
    pub power: i64,
    pub weights: Weights,
    pub cutoff: CutoffSpec,
    pub hat: PolyVectorField,
    /// `Y^eps - X_hat`, exact for the (rational) value of `eps`.
    pub correction: PolyVectorField,
    hat_c: CompiledField,
    corr_c: CompiledField,
}

impl DampedField {
    /// Scale of the dilation inside the cutoff: `|eps|^gamma`.
    pub fn cutoff_scale(&self) -> f64 {
        self.eps.abs().powf(self.gamma)
    }

    pub fn cutoff_at(&self, x: &[f64]) -> f64 {
        let s = self.cutoff_scale();
        let dx: Vec<f64> = x
            .iter()
            .zip(self.weights.as_slice())
            .map(|(&v, &wi)| s.powi(wi as i32) * v)
            .collect();
        self.cutoff.eval(&dx, &self.weights)
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.hat_c.eval(x);
        let chi = self.cutoff_at(x);
        if chi != 0.0 {
            for (o, c) in out.iter_mut().zip(self.corr_c.eval(x)) {
                *o += chi * c;
            }
        }
        out
    }

    /// `Y^{eps,gamma}(x) - X_hat(x)`.
    pub fn deviation(&self, x: &[f64]) -> Vec<f64> {
        let chi = self.cutoff_at(x);
        if chi == 0.0 {
            return vec![0.0; x.len()];
        }
        self.corr_c.eval(x).into_iter().map(|c| chi * c).collect()
    }

    /// The undamped field `Y^eps(x)`.
    pub fn undamped(&self, x: &[f64]) -> Vec<f64> {
        self.hat_c
            .eval(x)
            .into_iter()
            .zip(self.corr_c.eval(x))
            .map(|(a, b)| a + b)
            .collect()
    }
}

/// Damped version of the chart field `x` around its limit `hat`.
pub fn damped_field(
    x: &PolyVectorField,
    hat: &PolyVectorField,
    w: &Weights,
    gamma: f64,
    eps: f64,
    cutoff: CutoffSpec,
    power: i64,
) -> Result<DampedField> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidParameter(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    if eps == 0.0 || !eps.is_finite() {
        return Err(Error::ZeroDilation);
    }
    let eps_q = from_f64(eps)?;
    let scaled = dilate_pullback(x, w, &eps_q, power)?;
    let correction = scaled.sub(hat)?;
    Ok(DampedField {
        gamma,
        eps,
        power,
        weights: w.clone(),
        cutoff,
        hat_c: hat.compile(),
        corr_c: correction.compile(),
        hat: hat.clone(),
        correction,
    })
}

/// Default damping: half of the admissibility threshold `1/(r(r+1))`.
pub fn default_gamma(r: usize) -> f64 {
    1.0 / (2.0 * (r * (r + 1)) as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateFit {
    pub eps: Vec<f64>,
    pub sup_errors: Vec<f64>,
    /// Least-squares slope of `log sup_error` against `log |eps|`; `None`
    /// when every error is exactly zero.
    pub exponent: Option<f64>,
    pub intercept: Option<f64>,
    /// Largest absolute residual of the log-log fit.
    pub max_residual: f64,
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

/// Log-log slope of `sup_x |Y^{eps,gamma}(x) - X_hat(x)|` over `eps_grid`.
/// Sample points are given in normalized form `u` and placed at
/// `x = delta_{|eps|^{-gamma}} u`, so they cover the transition region at
/// every scale.
pub fn damping_rate_fit(
    x: &PolyVectorField,
    hat: &PolyVectorField,
    w: &Weights,
    gamma: f64,
    cutoff: CutoffSpec,
    power: i64,
    eps_grid: &[f64],
    normalized_points: &[Vec<f64>],
) -> Result<RateFit> {
    check_decades(eps_grid)?;
    let mut sup = Vec::with_capacity(eps_grid.len());
    for &eps in eps_grid {
        let d = damped_field(x, hat, w, gamma, eps, cutoff, power)?;
        let s = eps.abs().powf(-gamma);
        let m = normalized_points
            .par_iter()
            .map(|u| {
                let xx: Vec<f64> = u.iter().zip(w.as_slice()).map(|(&v, &wi)| s.powi(wi as i32) * v).collect();
                sup_norm(&d.deviation(&xx))
            })
            .collect::<Vec<f64>>()
            .into_iter()
            .fold(0.0, f64::max);
        sup.push(m);
    }
    Ok(loglog_fit(eps_grid, sup))
}

/// Same scan for the undamped `Y^eps` on a fixed point set.
pub fn undamped_rate_fit(
    x: &PolyVectorField,
    hat: &PolyVectorField,
    w: &Weights,
    power: i64,
    eps_grid: &[f64],
    points: &[Vec<f64>],
) -> Result<RateFit> {
    check_decades(eps_grid)?;
    let mut sup = Vec::with_capacity(eps_grid.len());
    for &eps in eps_grid {
        let d = damped_field(x, hat, w, 0.5, eps, CutoffSpec::default(), power)?;
        let m = points
            .iter()
            .map(|p| {
                let full = d.undamped(p);
                let h = d.hat_c.eval(p);
                let diff: Vec<f64> = full.iter().zip(&h).map(|(a, b)| a - b).collect();
                sup_norm(&diff)
            })
            .fold(0.0, f64::max);
        sup.push(m);
    }
    Ok(loglog_fit(eps_grid, sup))
}

fn check_decades(eps_grid: &[f64]) -> Result<()> {
    if eps_grid.len() < 2 || eps_grid.iter().any(|e| *e == 0.0 || !e.is_finite()) {
        return Err(Error::DegenerateGrid("need at least two nonzero eps values".into()));
    }
    let lo = eps_grid.iter().map(|e| e.abs()).fold(f64::INFINITY, f64::min);
    let hi = eps_grid.iter().map(|e| e.abs()).fold(0.0, f64::max);
    if (hi / lo).log10() < 4.0 - 1e-9 {
        return Err(Error::DegenerateGrid(format!(
            "eps grid spans {:.2} decades, at least 4 are required",
            (hi / lo).log10()
        )));
    }
    Ok(())
}

fn loglog_fit(eps: &[f64], sup: Vec<f64>) -> RateFit {
    let pts: Vec<(f64, f64)> = eps
        .iter()
        .zip(&sup)
        .filter(|(_, s)| **s > 0.0)
        .map(|(e, s)| (e.abs().ln(), s.ln()))
        .collect();
    if pts.len() < 2 {
        return RateFit {
            eps: eps.to_vec(),
            sup_errors: sup,
            exponent: None,
            intercept: None,
            max_residual: 0.0,
        };
    }
    let (slope, icpt) = linear_fit(&pts);
    let max_residual = pts
        .iter()
        .map(|(a, b)| (b - (icpt + slope * a)).abs())
        .fold(0.0, f64::max);
    RateFit {
        eps: eps.to_vec(),
        sup_errors: sup,
        exponent: Some(slope),
        intercept: Some(icpt),
        max_residual,
    }
}

/// Ordinary least-squares line `(slope, intercept)`.
pub fn linear_fit(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// The fields completed with their right-normed brackets up to depth `r`,
/// dropping zero brackets and repeats up to sign.
pub fn bracket_completion(fields: &[PolyVectorField], r: usize) -> Result<Vec<(PolyVectorField, usize)>> {
    let mut out: Vec<(PolyVectorField, usize)> = Vec::new();
    let mut level: Vec<PolyVectorField> = fields.to_vec();
    for depth in 1..=r {
        if depth > 1 {
            let mut next = Vec::new();
            for x in fields {
                for b in &level {
                    let br = lie_bracket(x, b)?;
                    if !br.is_zero() {
                        next.push(br);
                    }
                }
            }
            level = next;
        }
        for f in &level {
            let neg = f.scale(&-Rational::from_integer(1.into()));
            if f.is_zero() || out.iter().any(|(g, _)| g == f || *g == neg) {
                continue;
            }
            out.push((f.clone(), depth));
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoercivityReport {
    pub c: f64,
    pub argmin: Vec<f64>,
}

/// `min_x <x>^{2r} lambda_min(P(x) P(x)^T)` where the columns of `P(x)` are
/// the frame fields at `x` and `<x> = (1 + |x|^2)^{1/2}`.
pub fn hormander_coercivity(frame: &[PolyVectorField], r: usize, points: &[Vec<f64>]) -> Result<CoercivityReport> {
    let first = frame
        .first()
        .ok_or_else(|| Error::InvalidParameter("coercivity needs a nonempty frame".into()))?;
    if points.is_empty() {
        return Err(Error::DegenerateGrid("no sample points".into()));
    }
    let n = first.dim();
    let compiled: Vec<CompiledField> = frame.iter().map(PolyVectorField::compile).collect();
    let values: Vec<f64> = points
        .par_iter()
        .map(|x| {
            let mut g = DMatrix::<f64>::zeros(n, n);
            for f in &compiled {
                let v = f.eval(x);
                for a in 0..n {
                    for b in 0..n {
                        g[(a, b)] += v[a] * v[b];
                    }
                }
            }
            let lam = SymmetricEigen::new(g).eigenvalues.min().max(0.0);
            let jb = 1.0 + x.iter().map(|v| v * v).sum::<f64>();
            jb.powi(r as i32) * lam
        })
        .collect();
    let (k, c) = values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bk, bv), (k, &v)| if v < bv { (k, v) } else { (bk, bv) });
    // rounding noise in a rank-deficient Gram matrix is reported as zero
    let c = if c < 1e-12 { 0.0 } else { c };
    Ok(CoercivityReport {
        c,
        argmin: points[k].clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::build_exponential_chart;
    use crate::flag::{compute_flag, DEFAULT_MAX_DEPTH};
    use crate::poly::{int, rat};
    use crate::sampling::sr_ball_points;
    use proptest::prelude::*;

    fn var(n: usize, i: usize) -> MultiPoly {
        MultiPoly::var(n, i)
    }

    fn heisenberg() -> Vec<PolyVectorField> {
        let h = rat(1, 2);
        vec![
            PolyVectorField::new(vec![MultiPoly::one(3), MultiPoly::zero(3), var(3, 1).scale(&-h.clone())]).unwrap(),
            PolyVectorField::new(vec![MultiPoly::zero(3), MultiPoly::one(3), var(3, 0).scale(&h)]).unwrap(),
        ]
    }

    fn grushin_with(f: MultiPoly) -> Vec<PolyVectorField> {
        vec![PolyVectorField::coordinate(2, 0), PolyVectorField::along(1, f)]
    }

    fn structure(fields: &[PolyVectorField], n: usize) -> (NilpotentStructure, PrivilegedChart) {
        let p = vec![int(0); n];
        let flag = compute_flag(fields, &p, DEFAULT_MAX_DEPTH).unwrap();
        let chart = build_exponential_chart(fields, &flag, &p, 2 * flag.r as i64 + 2).unwrap();
        (nilpotentize(fields, None, &chart, false, None).unwrap(), chart)
    }

    #[test]
    fn grushin_perturbation_nilpotentizes_to_x1() {
        let f = grushin_with(&var(2, 0) + &var(2, 1).pow(2));
        let (s, _) = structure(&f, 2);
        assert_eq!(s.hat_fields[1], PolyVectorField::along(1, var(2, 0)));
        assert_eq!(s.hat_fields[0], PolyVectorField::coordinate(2, 0));
        assert!(check_divergence_free(&s).divergence_free);
        assert!(check_nilpotent_step(&s).unwrap());
    }

    #[test]
    fn euclidean_and_heisenberg_are_fixed() {
        let e: Vec<_> = (0..2).map(|i| PolyVectorField::coordinate(2, i)).collect();
        assert_eq!(structure(&e, 2).0.hat_fields, e);
        let h = heisenberg();
        let (s, _) = structure(&h, 3);
        for (a, b) in s.hat_fields.iter().zip(&h) {
            let parts = graded_parts(b, &s.weights, -2, 4);
            assert_eq!(parts.len(), 1);
            assert_eq!(a, &parts[&-1]);
        }
        assert!(check_divergence_free(&s).divergence_free);
        assert!(check_nilpotent_step(&s).unwrap());
        assert_eq!(s.measure_constant, 1.0);
    }

    #[test]
    fn field_outside_distribution_is_rejected() {
        // x1 d1 vanishes at the origin: no degree -1 part
        let f = vec![PolyVectorField::along(0, var(2, 0)), PolyVectorField::coordinate(2, 1)];
        let chart = crate::chart::chart_from_inverse(
            &[int(0), int(0)],
            Weights::new(vec![1, 1]).unwrap(),
            vec![PolyVectorField::coordinate(2, 0), PolyVectorField::coordinate(2, 1)],
            vec![var(2, 0), var(2, 1)],
            4,
        )
        .unwrap();
        assert_eq!(nilpotentize(&f, None, &chart, false, None), Err(Error::EmptyLowestPart { index: 0 }));
    }

    #[test]
    fn measure_examples() {
        assert_eq!(nilpotentize_measure(&MultiPoly::one(2), &[int(0), int(0)]).unwrap(), 1.0);
        let d = &MultiPoly::one(2) + &var(2, 0).pow(2);
        assert_eq!(nilpotentize_measure(&d, &[int(0), int(0)]).unwrap(), 1.0);
        let d = &MultiPoly::constant(2, int(2)) + &var(2, 0);
        assert_eq!(nilpotentize_measure(&d, &[int(3), int(0)]).unwrap(), 5.0);
        let bad = &MultiPoly::one(2) - &var(2, 0);
        assert!(matches!(nilpotentize_measure(&bad, &[int(2), int(0)]), Err(Error::NonpositiveDensity { .. })));
    }

    #[test]
    fn broken_field_has_unit_divergence() {
        let s = NilpotentStructure {
            dim: 2,
            weights: Weights::new(vec![1, 1]).unwrap(),
            r: 1,
            hat_fields: vec![PolyVectorField::along(0, var(2, 0))],
            hat_drift: None,
            measure_constant: 1.0,
        };
        let rep = check_divergence_free(&s);
        assert!(!rep.divergence_free);
        assert_eq!(rep.residuals[0], MultiPoly::one(2));
    }

    #[test]
    fn hat_operator_on_polynomials() {
        let (s, _) = structure(&grushin_with(var(2, 0)), 2);
        assert_eq!(hat_operator_apply(&s, &var(2, 1).pow(2)), var(2, 0).pow(2).scale(&int(2)));
        assert!(hat_operator_apply(&s, &MultiPoly::constant(2, int(7))).is_zero());
        assert_eq!(hat_operator_apply(&s, &var(2, 0).pow(2)), MultiPoly::constant(2, int(2)));
    }

    #[test]
    fn hat_operator_on_grid_matches_polynomial_form() {
        let (s, _) = structure(&heisenberg(), 3);
        let g = Grid::from_box(&[-1.0, -1.0, -1.0], &[1.0, 1.0, 1.0], &[0.1, 0.1, 0.1]).unwrap();
        // a quadratic is differentiated exactly by centered differences
        let f = &(&var(3, 0).pow(2) + &var(3, 2).pow(2)) + &(&var(3, 0) * &var(3, 1));
        let vals: Vec<f64> = (0..g.len()).map(|k| f.eval_f64(&g.node_coord(k))).collect();
        let exact = hat_operator_apply(&s, &f);
        let node = g.flat(&[12, 7, 9]);
        let got = hat_operator_apply_grid(&s, &g, &vals, &[node]).unwrap()[0];
        let want = exact.eval_f64(&g.node_coord(node));
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        assert!(matches!(
            hat_operator_apply_grid(&s, &g, &vals, &[g.flat(&[1, 5, 5])]),
            Err(Error::StencilOverflow { .. })
        ));
    }

    fn pert() -> (PolyVectorField, PolyVectorField, Weights) {
        let x = PolyVectorField::along(1, &var(2, 0) + &var(2, 0).pow(2));
        let hat = PolyVectorField::along(1, var(2, 0));
        (x, hat, Weights::new(vec![1, 2]).unwrap())
    }

    #[test]
    fn damped_field_plateaus() {
        let (x, hat, w) = pert();
        let d = damped_field(&x, &hat, &w, 0.1, 1e-3, CutoffSpec::default(), 1).unwrap();
        let far = vec![2.5 / d.cutoff_scale(), 0.0];
        assert_eq!(d.eval(&far), hat.evaluate(&far));
        let at0 = d.eval(&[0.0, 0.0]);
        assert_eq!(at0, d.undamped(&[0.0, 0.0]));
        let inside = [0.5 / d.cutoff_scale(), 0.0];
        assert_eq!(d.eval(&inside), d.undamped(&inside));
        assert!(damped_field(&x, &hat, &w, 1.0, 1e-3, CutoffSpec::default(), 1).is_err());
        assert!(damped_field(&x, &hat, &w, 0.1, 0.0, CutoffSpec::default(), 1).is_err());
    }

    #[test]
    fn grushin_damping_rate() {
        let (x, hat, w) = pert();
        let eps: Vec<f64> = (0..9).map(|k| 10f64.powf(-1.0 - 0.5 * k as f64)).collect();
        let u = sr_ball_points(&w, 2.2, 4000);
        let fit = damping_rate_fit(&x, &hat, &w, 0.1, CutoffSpec::default(), 1, &eps, &u).unwrap();
        let e = fit.exponent.unwrap();
        assert!((e - 0.8).abs() < 0.1, "exponent {e}");
        let pts = sr_ball_points(&w, 3.0, 500);
        let und = undamped_rate_fit(&x, &hat, &w, 1, &eps, &pts).unwrap();
        assert!((und.exponent.unwrap() - 1.0).abs() < 0.05);
    }

    #[test]
    fn homogeneous_field_has_no_deviation() {
        let h = heisenberg();
        let w = Weights::new(vec![1, 1, 2]).unwrap();
        let eps: Vec<f64> = (0..5).map(|k| 10f64.powi(-k)).collect();
        let u = sr_ball_points(&w, 2.0, 200);
        let fit = damping_rate_fit(&h[0], &h[0], &w, 0.1, CutoffSpec::default(), 1, &eps, &u).unwrap();
        assert!(fit.sup_errors.iter().all(|&s| s == 0.0));
        assert_eq!(fit.exponent, None);
        assert!(damping_rate_fit(&h[0], &h[0], &w, 0.1, CutoffSpec::default(), 1, &eps[..3], &u).is_err());
    }

    #[test]
    fn damped_homogeneity_relation() {
        // eps^b delta_{eps^b}^* Y^{eps,g} = Y^{eps^{1+b}, (g+b)/(1+b)}
        let (x, hat, w) = pert();
        let (eps, g, b): (f64, f64, f64) = (0.01, 0.1, 0.3);
        let lhs_field = damped_field(&x, &hat, &w, g, eps, CutoffSpec::default(), 1).unwrap();
        let g2 = (g + b) / (1.0 + b);
        let rhs_field = damped_field(&x, &hat, &w, g2, eps.powf(1.0 + b), CutoffSpec::default(), 1).unwrap();
        let lam = eps.powf(b);
        for u in sr_ball_points(&w, 8.0, 300) {
            let du = vec![lam * u[0], lam * lam * u[1]];
            let y = lhs_field.eval(&du);
            let lhs = [lam * y[0] / lam, lam * y[1] / (lam * lam)];
            let rhs = rhs_field.eval(&u);
            for k in 0..2 {
                assert!((lhs[k] - rhs[k]).abs() <= 1e-9 * (1.0 + rhs[k].abs()));
            }
        }
    }

    #[test]
    fn coercivity_examples() {
        let (s, _) = structure(&heisenberg(), 3);
        let frame: Vec<_> = bracket_completion(&s.hat_fields, s.r).unwrap().into_iter().map(|p| p.0).collect();
        assert_eq!(frame.len(), 3);
        let at0 = hormander_coercivity(&frame, s.r, &[vec![0.0; 3]]).unwrap();
        assert!((at0.c - 1.0).abs() < 1e-12);

        let (g, _) = structure(&grushin_with(var(2, 0)), 2);
        let frame: Vec<_> = bracket_completion(&g.hat_fields, g.r).unwrap().into_iter().map(|p| p.0).collect();
        assert_eq!(frame.len(), 3);
        let pts = sr_ball_points(&g.weights, 10.0, 2000);
        assert!(hormander_coercivity(&frame, g.r, &pts).unwrap().c >= 1.0 - 1e-12);

        let single = vec![PolyVectorField::coordinate(2, 0)];
        assert_eq!(hormander_coercivity(&single, 1, &pts).unwrap().c, 0.0);
    }

    #[test]
    fn cutoff_profiles() {
        for p in [CutoffProfile::Bump, CutoffProfile::SmoothStep] {
            let c = CutoffSpec::new(1.0, 2.0, p).unwrap();
            assert_eq!(c.at_norm(0.5), 1.0);
            assert_eq!(c.at_norm(2.0), 0.0);
            let mut prev = 1.0;
            for k in 0..=100 {
                let v = c.at_norm(1.0 + k as f64 / 100.0);
                assert!((0.0..=1.0).contains(&v) && v <= prev + 1e-15);
                prev = v;
            }
        }
        assert!(CutoffSpec::new(2.0, 1.0, CutoffProfile::Bump).is_err());
    }

    fn small_q() -> impl Strategy<Value = Rational> {
        (prop_oneof![-5i64..=-1, 1i64..=5], 1i64..=4).prop_map(|(a, b)| rat(a, b))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn hat_fields_are_homogeneous(eps in small_q(), a in -2i64..=2, c in -2i64..=2) {
            // Martinet-like fields with a perturbation: d1, d2 + (x1^2 + a x1^3 + c x2) d3
            let f3 = &(&var(3, 0).pow(2) + &var(3, 0).pow(3).scale(&int(a))) + &var(3, 1).scale(&int(c));
            let fields = vec![
                PolyVectorField::coordinate(3, 0),
                PolyVectorField::new(vec![MultiPoly::zero(3), MultiPoly::one(3), f3]).unwrap(),
            ];
            let p = vec![int(0); 3];
            let Ok(flag) = compute_flag(&fields, &p, DEFAULT_MAX_DEPTH) else { return Ok(()); };
            let chart = build_exponential_chart(&fields, &flag, &p, 2 * flag.r as i64 + 2).unwrap();
            let s = nilpotentize(&fields, None, &chart, false, None).unwrap();
            for h in &s.hat_fields {
                prop_assert_eq!(&dilate_pullback(h, &s.weights, &eps, 1).unwrap(), h);
            }
            prop_assert!(check_divergence_free(&s).divergence_free);
            prop_assert!(check_nilpotent_step(&s).unwrap());
        }
    }
}
