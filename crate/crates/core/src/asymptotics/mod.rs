//! Small-time structure of heat kernels at a base point: the rescaled
//! kernels `|eps|^Q e(eps^2 tau, delta_eps x, delta_eps x')`, their
//! polynomial fit in `eps`, the homogeneity identities of the limit and of
//! the correction terms, the diagonal power law, and the first Duhamel
//! correction.

pub mod duhamel;
pub mod symbols;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::chart::{dilate, push_field, PrivilegedChart};
use crate::error::{Error, Result};
use crate::field::Weights;
use crate::flag::sr_pseudo_norm;
use crate::heat::{fd_kernel, fd_kernel_times, kernel_change_measure, mc_kernel, FdConfig, HeatModel, McConfig};
use crate::nilpotent::linear_fit;
use crate::poly::{from_f64, MultiPoly};

pub use duhamel::{duhamel_c1_kernel, DuhamelReport};
pub use symbols::{perturbation_symbols, DiffOperator, PerturbationSymbols, SymbolInputs};

/// Default radius of the ball, in the sR pseudo-norm, where chart jets are
/// trusted.
pub const DEFAULT_TRUST_RADIUS: f64 = 1.0;

/// Largest Vandermonde condition number accepted by [`fit_expansion`].
pub const MAX_CONDITION: f64 = 1e8;

/// `{+-eps0 2^{-j}}` for `j < count`, positive values first.
pub fn sign_symmetric_grid(eps0: f64, count: usize) -> Vec<f64> {
    let pos: Vec<f64> = (0..count).map(|j| eps0 * 0.5f64.powi(j as i32)).collect();
    pos.iter().copied().chain(pos.iter().map(|e| -e)).collect()
}

/// The model written in chart coordinates: fields and drift pushed forward
/// to the chart's exact degree, `V o phi`, and the measure density
/// `(h o phi) |det D phi|`, on the given chart box.
pub fn model_in_chart(model: &HeatModel, chart: &PrivilegedChart, lo: Vec<f64>, hi: Vec<f64>) -> Result<HeatModel> {
    let fields = model
        .fields
        .iter()
        .map(|x| push_field(chart, x))
        .collect::<Result<Vec<_>>>()?;
    let drift = model.drift.as_ref().map(|x| push_field(chart, x)).transpose()?;
    let top = chart.trunc_order;
    let potential = model.potential.as_ref().map(|v| chart.pull_function(v, top)).transpose()?;
    let jac = chart.jacobian_determinant(top)?;
    let density = match &model.density {
        Some(h) => {
            let w = chart.weights.as_slice().to_vec();
            (&chart.pull_function(h, top)? * &jac).truncate_weighted(&w, top)
        }
        None => jac,
    };
    let density = if density == MultiPoly::one(density.dim()) { None } else { Some(density) };
    HeatModel::new(fields, drift, potential, density, lo, hi)
}

/// Estimator behind [`rescaled_kernel`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum RescaledEstimator {
    /// Simulate the original diffusion for time `eps^2 tau` from
    /// `phi(delta_eps x')` and estimate the density at `phi(delta_eps x)`.
    /// A configured bandwidth is in rescaled units and is multiplied by
    /// `|eps|`.
    Mc(McConfig),
    /// Solve for the kernel of `eps^2 delta_eps^* Delta` in chart
    /// coordinates on a fixed box, which equals the rescaled kernel.
    Fd { config: FdConfig, box_lo: Vec<f64>, box_hi: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RescaledValues {
    pub eps: f64,
    pub tau: f64,
    pub pairs: Vec<(Vec<f64>, Vec<f64>)>,
    pub values: Vec<f64>,
    pub errors: Vec<f64>,
    pub killed: u64,
}

fn check_trust(pairs: &[(Vec<f64>, Vec<f64>)], w: &Weights, eps: f64, radius: f64) -> Result<()> {
    for (x, xp) in pairs {
        for p in [x, xp] {
            let norm = sr_pseudo_norm(&dilate(p, w, eps), w);
            if norm > radius {
                return Err(Error::ChartValidity { norm, radius });
            }
        }
    }
    Ok(())
}

/// `|eps|^Q e(eps^2 tau, delta_eps x, delta_eps x')` for each pair
/// `(x, x')`, with `e` the kernel against the model measure and points in
/// chart coordinates. Every dilated point must lie within `trust_radius`.
pub fn rescaled_kernel(
    model: &HeatModel,
    chart: &PrivilegedChart,
    eps: f64,
    tau: f64,
    pairs: &[(Vec<f64>, Vec<f64>)],
    estimator: &RescaledEstimator,
    trust_radius: f64,
) -> Result<RescaledValues> {
    if eps == 0.0 {
        return Err(Error::ZeroDilation);
    }
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter("tau must be positive".into()));
    }
    let w = &chart.weights;
    check_trust(pairs, w, eps, trust_radius)?;
    let mut values = vec![0.0; pairs.len()];
    let mut errors = vec![0.0; pairs.len()];
    let mut killed = 0;
    let mut sources: Vec<&Vec<f64>> = Vec::new();
    for (_, xp) in pairs {
        if !sources.contains(&xp) {
            sources.push(xp);
        }
    }
    match estimator {
        RescaledEstimator::Mc(cfg) => {
            let cc = chart.compile();
            let jac = eps.abs().powi(w.homogeneous_dim() as i32);
            let cfg = McConfig {
                bandwidth: cfg.bandwidth.map(|b| b * eps.abs()),
                weights: Some(w.clone()),
                ..cfg.clone()
            };
            for src in sources {
                let idx: Vec<usize> = (0..pairs.len()).filter(|&i| &pairs[i].1 == src).collect();
                let q0 = cc.to_manifold(&dilate(src, w, eps));
                let targets: Vec<Vec<f64>> = idx.iter().map(|&i| cc.to_manifold(&dilate(&pairs[i].0, w, eps))).collect();
                let est = mc_kernel(model, eps * eps * tau, &q0, &targets, &cfg)?;
                let err = est.combined_error();
                killed += est.diagnostics.killed.unwrap_or(0);
                for (k, &i) in idx.iter().enumerate() {
                    let h = model.density_at(&targets[k]);
                    values[i] = jac * est.values[k] / h;
                    errors[i] = jac * err[k] / h;
                }
            }
        }
        RescaledEstimator::Fd { config, box_lo, box_hi } => {
            let local = model_in_chart(model, chart, box_lo.clone(), box_hi.clone())?;
            let scaled = local.dilated(w, &from_f64(eps)?)?;
            for src in sources {
                let idx: Vec<usize> = (0..pairs.len()).filter(|&i| &pairs[i].1 == src).collect();
                let targets: Vec<Vec<f64>> = idx.iter().map(|&i| pairs[i].0.clone()).collect();
                let mut est = fd_kernel(&scaled, tau, config, src, box_lo, box_hi, &targets)?;
                if let Some(h) = &scaled.density {
                    est = kernel_change_measure(&est, h)?;
                }
                let err = est.combined_error();
                for (k, &i) in idx.iter().enumerate() {
                    values[i] = est.values[k];
                    errors[i] = err[k];
                }
            }
        }
    }
    Ok(RescaledValues {
        eps,
        tau,
        pairs: pairs.to_vec(),
        values,
        errors,
        killed,
    })
}

/// How residuals are weighted in [`fit_expansion`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// `1/stderr^2`, for Monte Carlo inputs.
    InverseVariance,
    /// Equal weights, for finite-difference inputs.
    Uniform,
}

/// Rescaled values at one `(tau, x, x')` across an `eps` grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpansionInput {
    pub tau: f64,
    pub x: Vec<f64>,
    pub x_prime: Vec<f64>,
    pub eps: Vec<f64>,
    pub values: Vec<f64>,
    pub errors: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleFit {
    pub tau: f64,
    pub x: Vec<f64>,
    pub x_prime: Vec<f64>,
    pub values: Vec<f64>,
    pub errors: Vec<f64>,
    /// `c_0 .. c_N`; `c_0` estimates the limit kernel.
    pub coefficients: Vec<f64>,
    pub coefficient_stderr: Vec<f64>,
    /// `sqrt(chi^2 / dof)` with the input errors as scales.
    pub residual_norm: f64,
    pub condition: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OddnessReport {
    pub c1: f64,
    pub stderr: f64,
    /// `|c1| / stderr`.
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpansionReport {
    pub eps_grid: Vec<f64>,
    pub order: usize,
    pub weighting: Weighting,
    pub tolerance: f64,
    pub samples: Vec<SampleFit>,
    /// Worst `|c1|` among samples with `x = x' = 0`.
    pub oddness: Option<OddnessReport>,
    pub pass: bool,
    pub noise_warning: Option<String>,
}

/// Weighted least squares of the rescaled values in powers
/// `eps^0 .. eps^order`, one fit per `(tau, x, x')`. Each grid needs both
/// signs and at least `order + 3` points. Coefficient errors are the larger
/// of the propagated input errors and the residual scatter. `pass` holds
/// when every residual norm is within `tolerance`.
pub fn fit_expansion(inputs: &[ExpansionInput], order: usize, weighting: Weighting, tolerance: f64) -> Result<ExpansionReport> {
    if inputs.is_empty() {
        return Err(Error::InvalidParameter("no samples to fit".into()));
    }
    let mut samples = Vec::with_capacity(inputs.len());
    for inp in inputs {
        let m = inp.eps.len();
        if inp.values.len() != m || inp.errors.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: inp.values.len(),
            });
        }
        if m < order + 3 {
            return Err(Error::DegenerateGrid(format!("{m} eps values cannot support order {order}; need {}", order + 3)));
        }
        if !(inp.eps.iter().any(|&e| e > 0.0) && inp.eps.iter().any(|&e| e < 0.0)) || inp.eps.contains(&0.0) {
            return Err(Error::DegenerateGrid("eps grid must contain both signs and no zero".into()));
        }
        samples.push(fit_one(inp, order, weighting)?);
    }
    let mut oddness: Option<OddnessReport> = None;
    if order >= 1 {
        for s in &samples {
            if s.x.iter().chain(&s.x_prime).all(|&v| v == 0.0) {
                let r = OddnessReport {
                    c1: s.coefficients[1],
                    stderr: s.coefficient_stderr[1],
                    ratio: if s.coefficient_stderr[1] > 0.0 {
                        s.coefficients[1].abs() / s.coefficient_stderr[1]
                    } else if s.coefficients[1] == 0.0 {
                        0.0
                    } else {
                        f64::INFINITY
                    },
                };
                if oddness.as_ref().is_none_or(|o| r.ratio > o.ratio) {
                    oddness = Some(r);
                }
            }
        }
    }
    let pass = samples.iter().all(|s| s.residual_norm <= tolerance);
    let noise_warning = (order > 2 && weighting == Weighting::InverseVariance)
        .then(|| format!("order {order} on Monte Carlo input: coefficients beyond c_2 are noise-dominated"));
    Ok(ExpansionReport {
        eps_grid: inputs[0].eps.clone(),
        order,
        weighting,
        tolerance,
        samples,
        oddness,
        pass,
        noise_warning,
    })
}

fn fit_one(inp: &ExpansionInput, order: usize, weighting: Weighting) -> Result<SampleFit> {
    let m = inp.eps.len();
    let k = order + 1;
    let scale: Vec<f64> = inp
        .errors
        .iter()
        .map(|&e| match weighting {
            Weighting::InverseVariance => {
                if e > 0.0 {
                    1.0 / e
                } else {
                    f64::NAN
                }
            }
            Weighting::Uniform => 1.0,
        })
        .collect();
    if scale.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidParameter("inverse-variance weights need positive errors".into()));
    }
    let a = DMatrix::from_fn(m, k, |i, j| inp.eps[i].powi(j as i32));
    let aw = DMatrix::from_fn(m, k, |i, j| a[(i, j)] * scale[i]);
    let yw = DVector::from_fn(m, |i, _| inp.values[i] * scale[i]);
    let svd = aw.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if condition > MAX_CONDITION {
        return Err(Error::IllConditioned {
            condition,
            suggestion: "use a sign-symmetric geometric grid {+-eps0 2^-j} with eps0 <= 1 and fewer levels".into(),
        });
    }
    let c = svd
        .solve(&yw, 1e-300)
        .map_err(|e| Error::Numerical(format!("least squares failed: {e}")))?;
    let normal = aw.transpose() * &aw;
    let inv = normal
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular normal matrix".into()))?;
    // propagated covariance inv * Aw^T diag((scale*err)^2) Aw * inv
    let se: Vec<f64> = (0..m).map(|i| (scale[i] * inp.errors[i]).powi(2)).collect();
    let mid = DMatrix::from_fn(k, k, |p, q| (0..m).map(|i| aw[(i, p)] * se[i] * aw[(i, q)]).sum());
    let prop = &inv * mid * &inv;
    let fitted = &a * &c;
    let dof = (m - k) as f64;
    let mut chi2 = 0.0;
    let mut chi2_err = 0.0;
    for i in 0..m {
        let r = inp.values[i] - fitted[i];
        chi2 += (r * scale[i]).powi(2);
        if inp.errors[i] > 0.0 {
            chi2_err += (r / inp.errors[i]).powi(2);
        } else if r != 0.0 {
            chi2_err = f64::INFINITY;
        }
    }
    let s2 = chi2 / dof;
    let coefficient_stderr = (0..k).map(|j| prop[(j, j)].max(s2 * inv[(j, j)]).sqrt()).collect();
    Ok(SampleFit {
        tau: inp.tau,
        x: inp.x.clone(),
        x_prime: inp.x_prime.clone(),
        values: inp.values.clone(),
        errors: inp.errors.clone(),
        coefficients: c.iter().copied().collect(),
        coefficient_stderr,
        residual_norm: (chi2_err / dof).sqrt(),
        condition,
    })
}

/// Kernel sampler `(t, x, x') -> (value, error)`; `None` where the
/// estimate is unavailable.
pub type KernelSampler<'a> = dyn Fn(f64, &[f64], &[f64]) -> Option<(f64, f64)> + 'a;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HomogeneityEntry {
    pub t: f64,
    pub x: Vec<f64>,
    pub x_prime: Vec<f64>,
    pub lambda: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// `|lhs - rhs| / |lhs|`.
    pub residual: f64,
    /// Combined relative error of both sides.
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HomogeneityReport {
    pub entries: Vec<HomogeneityEntry>,
    pub max_residual: f64,
    /// Largest `residual / error`.
    pub max_ratio: f64,
    pub skipped: usize,
}

fn homogeneity_scan(
    sampler: &KernelSampler<'_>,
    samples: &[(f64, Vec<f64>, Vec<f64>)],
    w: &Weights,
    lambdas: &[f64],
    index: i32,
) -> Result<HomogeneityReport> {
    let q = w.homogeneous_dim() as i32;
    let mut entries = Vec::new();
    let mut skipped = 0;
    for (t, x, xp) in samples {
        for &l in lambdas {
            if l == 0.0 {
                return Err(Error::ZeroDilation);
            }
            let factor = l.powi(-index) * l.abs().powi(q);
            let (Some((a, ea)), Some((b, eb))) = (sampler(*t, x, xp), sampler(l * l * t, &dilate(x, w, l), &dilate(xp, w, l)))
            else {
                skipped += 1;
                continue;
            };
            let rhs = factor * b;
            let diff = (a - rhs).abs();
            let denom = a.abs().max(rhs.abs());
            let residual = if diff == 0.0 { 0.0 } else { diff / denom };
            let error = if denom > 0.0 { (ea + factor.abs() * eb) / denom } else { 0.0 };
            entries.push(HomogeneityEntry {
                t: *t,
                x: x.clone(),
                x_prime: xp.clone(),
                lambda: l,
                lhs: a,
                rhs,
                residual,
                error,
            });
        }
    }
    let max_residual = entries.iter().map(|e| e.residual).fold(0.0, f64::max);
    let max_ratio = entries
        .iter()
        .map(|e| {
            if e.residual == 0.0 {
                0.0
            } else if e.error > 0.0 {
                e.residual / e.error
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max);
    Ok(HomogeneityReport {
        entries,
        max_residual,
        max_ratio,
        skipped,
    })
}

/// Residuals of `e(t, x, x') = |l|^Q e(l^2 t, delta_l x, delta_l x')` over
/// the samples and every `l` in `lambdas`. Pairs where the sampler has no
/// estimate are skipped and counted.
pub fn check_hat_homogeneity(
    sampler: &KernelSampler<'_>,
    samples: &[(f64, Vec<f64>, Vec<f64>)],
    w: &Weights,
    lambdas: &[f64],
) -> Result<HomogeneityReport> {
    homogeneity_scan(sampler, samples, w, lambdas, 0)
}

/// Residuals of `f_i(t, x, x') = l^{-i} |l|^Q f_i(l^2 t, delta_l x, delta_l x')`;
/// negative `l` is allowed.
pub fn check_fi_homogeneity(
    sampler: &KernelSampler<'_>,
    index: i32,
    samples: &[(f64, Vec<f64>, Vec<f64>)],
    w: &Weights,
    lambdas: &[f64],
) -> Result<HomogeneityReport> {
    homogeneity_scan(sampler, samples, w, lambdas, index)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeylSample {
    pub t: f64,
    /// `int e(t, q, q) f(q) dmu(q)` or a pointwise diagonal value.
    pub value: f64,
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeylReport {
    pub samples: Vec<WeylSample>,
    pub slope: f64,
    pub expected: f64,
    pub tolerance: f64,
    /// `exp(mean(log value + (Q/2) log t))`, the limit constant estimate.
    pub constant: f64,
    pub pass: bool,
}

/// Log-log slope of the diagonal against `t`, compared with `-Q/2`.
pub fn weyl_fit(samples: &[WeylSample], q: f64, tolerance: f64) -> Result<WeylReport> {
    if samples.len() < 3 {
        return Err(Error::DegenerateGrid("at least three times are needed".into()));
    }
    let tmin = samples.iter().map(|s| s.t).fold(f64::INFINITY, f64::min);
    let tmax = samples.iter().map(|s| s.t).fold(0.0, f64::max);
    if tmax / tmin < 2.0 {
        return Err(Error::DegenerateGrid("times must span at least a factor of two".into()));
    }
    if samples.iter().any(|s| !(s.value > 0.0)) {
        return Err(Error::Numerical("diagonal values must be positive".into()));
    }
    let pts: Vec<(f64, f64)> = samples.iter().map(|s| (s.t.ln(), s.value.ln())).collect();
    let (slope, _) = linear_fit(&pts);
    let expected = -0.5 * q;
    let constant = (pts.iter().map(|(lt, lv)| lv - expected * lt).sum::<f64>() / pts.len() as f64).exp();
    Ok(WeylReport {
        samples: samples.to_vec(),
        slope,
        expected,
        tolerance,
        constant,
        pass: (slope - expected).abs() <= tolerance,
    })
}

/// Local Weyl check with finite differences: `int e(t, q, q) f(q) dmu(q)`
/// by the quadrature `(nodes, weights)`, one Dirichlet run per node on the
/// box, then [`weyl_fit`].
pub fn diagonal_weyl_check(
    model: &HeatModel,
    t_grid: &[f64],
    f: &MultiPoly,
    nodes: &[Vec<f64>],
    weights: &[f64],
    config: &FdConfig,
    q: f64,
    tolerance: f64,
) -> Result<WeylReport> {
    if nodes.len() != weights.len() || nodes.is_empty() {
        return Err(Error::InvalidParameter("quadrature nodes and weights must match".into()));
    }
    let mut value = vec![0.0; t_grid.len()];
    let mut error = vec![0.0; t_grid.len()];
    for (node, &wq) in nodes.iter().zip(weights) {
        let est = fd_kernel_times(model, t_grid, config, node, &model.box_lo, &model.box_hi, std::slice::from_ref(node))?;
        // kernel against mu is p / h(q); the measure contributes h(q)
        let fw = f.eval_f64(node) * wq;
        for (k, e) in est.iter().enumerate() {
            value[k] += fw * e.values[0];
            error[k] += fw.abs() * e.combined_error()[0];
        }
    }
    let samples: Vec<WeylSample> = t_grid
        .iter()
        .enumerate()
        .map(|(k, &t)| WeylSample {
            t,
            value: value[k],
            error: error[k],
        })
        .collect();
    weyl_fit(&samples, q, tolerance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::PolyVectorField;
    use std::f64::consts::PI;

    fn gaussian(t: f64, x: &[f64], y: &[f64]) -> f64 {
        (-(x[0] - y[0]).powi(2) / (4.0 * t)).exp() / (4.0 * PI * t).sqrt()
    }

    #[test]
    fn synthetic_quadratic_is_recovered() {
        let eps = sign_symmetric_grid(1.0, 3);
        let values: Vec<f64> = eps.iter().map(|e| 2.0 - 0.5 * e + 3.0 * e * e).collect();
        let inp = ExpansionInput {
            tau: 1.0,
            x: vec![0.0],
            x_prime: vec![0.0],
            eps: eps.clone(),
            errors: vec![1e-3; eps.len()],
            values,
        };
        let r = fit_expansion(&[inp], 2, Weighting::Uniform, 3.0).unwrap();
        let c = &r.samples[0].coefficients;
        assert!((c[0] - 2.0).abs() < 1e-12 && (c[1] + 0.5).abs() < 1e-12 && (c[2] - 3.0).abs() < 1e-12);
        assert!(r.pass);
        assert!(r.oddness.unwrap().ratio > 100.0);
    }

    #[test]
    fn one_sided_or_short_grids_are_refused() {
        let inp = ExpansionInput {
            tau: 1.0,
            x: vec![0.0],
            x_prime: vec![0.0],
            eps: vec![1.0, 0.5, 0.25, 0.125, 0.0625],
            values: vec![1.0; 5],
            errors: vec![0.1; 5],
        };
        assert!(matches!(fit_expansion(std::slice::from_ref(&inp), 2, Weighting::Uniform, 3.0), Err(Error::DegenerateGrid(_))));
        let short = ExpansionInput {
            eps: vec![1.0, -1.0, 0.5, -0.5],
            values: vec![1.0; 4],
            errors: vec![0.1; 4],
            ..inp.clone()
        };
        assert!(matches!(fit_expansion(&[short], 2, Weighting::Uniform, 3.0), Err(Error::DegenerateGrid(_))));
        let wide = ExpansionInput {
            eps: sign_symmetric_grid(0.01, 5),
            values: vec![1.0; 10],
            errors: vec![0.1; 10],
            ..inp
        };
        assert!(matches!(fit_expansion(&[wide], 6, Weighting::Uniform, 3.0), Err(Error::IllConditioned { .. })));
    }

    #[test]
    fn even_data_has_no_odd_coefficient() {
        let eps = sign_symmetric_grid(0.5, 4);
        let values: Vec<f64> = eps.iter().map(|e| 1.0 + e * e + 0.3 * e.powi(4)).collect();
        let inp = ExpansionInput {
            tau: 1.0,
            x: vec![0.0, 0.0],
            x_prime: vec![0.0, 0.0],
            eps: eps.clone(),
            errors: vec![1e-4; eps.len()],
            values,
        };
        let r = fit_expansion(&[inp], 2, Weighting::InverseVariance, 10.0).unwrap();
        let o = r.oddness.unwrap();
        assert!(o.c1.abs() < 1e-12, "{o:?}");
        assert!(o.ratio <= 3.0);
    }

    #[test]
    fn symmetric_pairs_average_to_c0_at_rate_eps_squared() {
        let c = [1.5, 0.7, -0.4, 0.2];
        let f = |e: f64| c[0] + c[1] * e + c[2] * e * e + c[3] * e.powi(3);
        let mut prev = f64::INFINITY;
        for j in 0..6 {
            let e = 0.5f64.powi(j);
            let dev = (0.5 * (f(e) + f(-e)) - c[0]).abs();
            assert!((dev / (e * e) - 0.4).abs() < 1e-12);
            assert!(dev < prev);
            prev = dev;
        }
    }

    #[test]
    fn gaussian_homogeneity_is_exact() {
        let w = Weights::uniform(1);
        let sampler = |t: f64, x: &[f64], y: &[f64]| Some((gaussian(t, x, y), 0.0));
        let samples = vec![(1.0, vec![0.3], vec![-0.2]), (0.5, vec![0.0], vec![0.0])];
        let r = check_hat_homogeneity(&sampler, &samples, &w, &[0.5, 2.0, 1.0]).unwrap();
        assert!(r.max_residual < 1e-14);
        let unit = check_hat_homogeneity(&sampler, &samples, &w, &[1.0]).unwrap();
        assert_eq!(unit.max_residual, 0.0);
    }

    #[test]
    fn odd_index_forces_zero_on_the_diagonal_origin() {
        let w = Weights::new(vec![1, 2]).unwrap();
        // f(t, x, x') = t^{-Q/2} (x1 + x1') is homogeneous of index 1
        let good = |t: f64, x: &[f64], y: &[f64]| Some(((x[0] + y[0]) * t.powf(-1.5), 0.0));
        let samples = vec![(1.0, vec![0.3, 0.1], vec![0.2, -0.4]), (0.7, vec![0.0, 0.0], vec![0.0, 0.0])];
        let r = check_fi_homogeneity(&good, 1, &samples, &w, &[-1.0, 0.5, 2.0]).unwrap();
        assert!(r.max_residual < 1e-14, "{r:?}");
        // a nonzero value at the origin breaks the eps = -1 identity
        let bad = |t: f64, x: &[f64], y: &[f64]| Some(((1.0 + x[0] + y[0]) * t.powf(-1.5), 0.0));
        let origin = vec![(1.0, vec![0.0, 0.0], vec![0.0, 0.0])];
        let r = check_fi_homogeneity(&bad, 1, &origin, &w, &[-1.0]).unwrap();
        assert!((r.max_residual - 2.0).abs() < 1e-12);
    }

    #[test]
    fn euclidean_weyl_constant() {
        let m = HeatModel::from_fields(vec![PolyVectorField::coordinate(1, 0)], vec![-6.0], vec![6.0]).unwrap();
        let nodes: Vec<Vec<f64>> = (0..=10).map(|k| vec![-1.0 + 0.2 * k as f64]).collect();
        let weights: Vec<f64> = (0..=10).map(|k| if k == 0 || k == 10 { 0.1 } else { 0.2 }).collect();
        let cfg = FdConfig::new(vec![0.02], 0.002);
        let r = diagonal_weyl_check(&m, &[0.05, 0.1, 0.2], &MultiPoly::one(1), &nodes, &weights, &cfg, 1.0, 0.02).unwrap();
        assert!(r.pass, "{r:?}");
        let exact = 2.0 / (4.0 * PI).sqrt();
        assert!((r.constant - exact).abs() < 0.01 * exact, "{} vs {exact}", r.constant);
        let flat = [WeylSample { t: 1.0, value: 1.0, error: 0.0 }; 2];
        assert!(weyl_fit(&flat, 1.0, 0.1).is_err());
    }
}
