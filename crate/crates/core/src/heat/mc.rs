//! Monte Carlo transition densities from the diffusion
//! `dx = sqrt(2) sum_i X_i(x) o dw_i + X_0(x) dt` in the Stratonovich sense,
//! whose generator is `sum_i X_i^2 + X_0`.
//!
//! Paths are advanced by the Euler-Heun predictor-corrector, which converges
//! to the Stratonovich solution; the equivalent Ito equation has drift
//! `X_0 + sum_i (D a_i) a_i`, which the scheme never forms. A potential
//! enters as the Feynman-Kac weight `exp(-int V ds)` (trapezoidal in time).
//! Densities come from a Gaussian product kernel with bandwidth `b^{w_j}`
//! on axis `j`.
//!
//! Batch `k` draws from the ChaCha8 stream `k` of the seed, and batches are
//! reduced in index order, so results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Diagnostics, HeatModel, KernelEstimate, Method};
use crate::error::{Error, Result};
use crate::field::{CompiledField, Weights};

pub const MIN_PATHS: usize = 1000;
pub const MIN_BATCHES: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub n_paths: usize,
    /// Absolute time step; takes precedence over `steps`.
    #[serde(default)]
    pub dt: Option<f64>,
    /// Steps per path, `dt = t / steps`; with neither set, 500.
    #[serde(default)]
    pub steps: Option<usize>,
    /// Base bandwidth `b`; defaults to a Silverman pilot on the weight-one
    /// axes.
    #[serde(default)]
    pub bandwidth: Option<f64>,
    pub seed: u64,
    #[serde(default = "default_batches")]
    pub batches: usize,
    /// Dilation weights of the coordinates; defaults to all ones.
    #[serde(default)]
    pub weights: Option<Weights>,
}

fn default_batches() -> usize {
    MIN_BATCHES
}

impl McConfig {
    pub fn new(n_paths: usize, seed: u64) -> Self {
        Self {
            n_paths,
            dt: None,
            steps: None,
            bandwidth: None,
            seed,
            batches: MIN_BATCHES,
            weights: None,
        }
    }
}

struct Batch {
    /// Endpoints of surviving paths, row-major.
    ends: Vec<f64>,
    weights: Vec<f64>,
    paths: usize,
    killed: u64,
}

struct Integrator<'a> {
    fields: &'a [CompiledField],
    drift: Option<&'a CompiledField>,
    potential: Option<&'a crate::poly::CompiledPoly>,
    center: Vec<f64>,
    reach: Vec<f64>,
}

impl Integrator<'_> {
    fn outside(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.center.iter().zip(&self.reach))
            .any(|(v, (c, r))| !((v - c).abs() <= *r))
    }

    fn run_batch(&self, source: &[f64], t: f64, steps: usize, paths: usize, seed: u64, stream: u64) -> Batch {
        let n = source.len();
        let m = self.fields.len();
        let dt = t / steps as f64;
        let sq = (2.0 * dt).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let mut ends = Vec::with_capacity(paths * n);
        let mut weights = Vec::with_capacity(paths);
        let mut killed = 0;
        let mut x = vec![0.0; n];
        let mut xp = vec![0.0; n];
        let mut incr = vec![0.0; n];
        let mut a = vec![vec![0.0; n]; m];
        let mut b = vec![0.0; n];
        let mut dw = vec![0.0; m];
        for _ in 0..paths {
            x.copy_from_slice(source);
            let mut int_v = 0.0;
            let mut v_prev = self.potential.map_or(0.0, |v| v.eval(&x));
            let mut alive = true;
            for _ in 0..steps {
                for d in dw.iter_mut() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *d = sq * z;
                }
                // predictor
                incr.iter_mut().for_each(|v| *v = 0.0);
                for (f, ai) in self.fields.iter().zip(a.iter_mut()) {
                    f.eval_into(&x, ai);
                }
                for (ai, &d) in a.iter().zip(&dw) {
                    for j in 0..n {
                        incr[j] += ai[j] * d;
                    }
                }
                if let Some(f) = self.drift {
                    f.eval_into(&x, &mut b);
                    for j in 0..n {
                        incr[j] += b[j] * dt;
                    }
                }
                for j in 0..n {
                    xp[j] = x[j] + incr[j];
                }
                // corrector: average the predictor increment with the one at xp
                for (f, ai) in self.fields.iter().zip(a.iter_mut()) {
                    f.eval_into(&xp, ai);
                }
                for (ai, &d) in a.iter().zip(&dw) {
                    for j in 0..n {
                        incr[j] += ai[j] * d;
                    }
                }
                if let Some(f) = self.drift {
                    f.eval_into(&xp, &mut b);
                    for j in 0..n {
                        incr[j] += b[j] * dt;
                    }
                }
                for j in 0..n {
                    x[j] += 0.5 * incr[j];
                }
                if self.outside(&x) {
                    alive = false;
                    break;
                }
                if let Some(v) = self.potential {
                    let vn = v.eval(&x);
                    int_v += 0.5 * (v_prev + vn) * dt;
                    v_prev = vn;
                }
            }
            if alive {
                ends.extend_from_slice(&x);
                weights.push((-int_v).exp());
            } else {
                killed += 1;
            }
        }
        Batch {
            ends,
            weights,
            paths,
            killed,
        }
    }
}

/// Weighted Gaussian product-kernel density at `y`, divided by `paths`.
fn kde(batch: &Batch, y: &[f64], bw: &[f64]) -> f64 {
    let n = y.len();
    let norm: f64 = bw.iter().map(|b| (2.0 * std::f64::consts::PI).sqrt() * b).product();
    let mut acc = 0.0;
    'paths: for (p, w) in batch.ends.chunks_exact(n).zip(&batch.weights) {
        let mut e = 0.0;
        for j in 0..n {
            let u = (p[j] - y[j]) / bw[j];
            if u.abs() > 8.0 {
                continue 'paths;
            }
            e += u * u;
        }
        acc += w * (-0.5 * e).exp();
    }
    acc / (norm * batch.paths as f64)
}

fn axis_bandwidths(b: f64, w: &Weights) -> Vec<f64> {
    w.as_slice().iter().map(|&wi| b.powi(wi as i32)).collect()
}

/// Silverman's rule in effective dimension `Q` on the weight-one axes.
fn pilot_bandwidth(batches: &[Batch], w: &Weights, total: usize) -> f64 {
    let n = w.len();
    let axes: Vec<usize> = (0..n).filter(|&j| w[j] == 1).collect();
    let mut sd = 0.0;
    for &j in &axes {
        let (mut s, mut s2, mut c) = (0.0, 0.0, 0.0);
        for b in batches {
            for p in b.ends.chunks_exact(n) {
                s += p[j];
                s2 += p[j] * p[j];
                c += 1.0;
            }
        }
        let mean = s / c;
        sd += ((s2 / c - mean * mean).max(0.0)).sqrt();
    }
    let sd = sd / axes.len() as f64;
    let q = w.homogeneous_dim() as f64;
    sd * (4.0 / ((q + 2.0) * total as f64)).powf(1.0 / (q + 4.0))
}

/// Transition density `e(t, source, y)` against Lebesgue measure at every
/// target. Paths leaving the box enlarged tenfold about its center are
/// killed and contribute zero.
pub fn mc_kernel(model: &HeatModel, t: f64, source: &[f64], targets: &[Vec<f64>], cfg: &McConfig) -> Result<KernelEstimate> {
    let n = model.dim;
    if !(t > 0.0) {
        return Err(Error::InvalidParameter("time must be positive".into()));
    }
    if cfg.n_paths < MIN_PATHS {
        return Err(Error::InvalidParameter(format!("need at least {MIN_PATHS} paths")));
    }
    if cfg.batches < MIN_BATCHES || cfg.batches > cfg.n_paths {
        return Err(Error::InvalidParameter(format!("need at least {MIN_BATCHES} batches")));
    }
    let dt = cfg.dt.or(cfg.steps.map(|s| t / s as f64)).unwrap_or(t / 500.0);
    if !(dt > 0.0) || dt > t / 50.0 * (1.0 + 1e-12) {
        return Err(Error::InvalidParameter("time step must satisfy 0 < dt <= t/50".into()));
    }
    if source.len() != n || targets.iter().any(|y| y.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: source.len(),
        });
    }
    let w = cfg.weights.clone().unwrap_or_else(|| Weights::uniform(n));
    if w.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: w.len(),
        });
    }
    let steps = (t / dt - 1e-9).ceil() as usize;
    let fields: Vec<CompiledField> = model.fields.iter().map(|x| x.compile()).collect();
    let drift = model.drift.as_ref().map(|x| x.compile());
    let potential = model.potential.as_ref().map(|v| v.compile());
    let integ = Integrator {
        fields: &fields,
        drift: drift.as_ref(),
        potential: potential.as_ref(),
        center: (0..n).map(|i| 0.5 * (model.box_lo[i] + model.box_hi[i])).collect(),
        reach: (0..n).map(|i| 5.0 * (model.box_hi[i] - model.box_lo[i])).collect(),
    };
    let nb = cfg.batches;
    let sizes: Vec<usize> = (0..nb).map(|k| cfg.n_paths / nb + usize::from(k < cfg.n_paths % nb)).collect();
    let batches: Vec<Batch> = (0..nb)
        .into_par_iter()
        .map(|k| integ.run_batch(source, t, steps, sizes[k], cfg.seed, k as u64))
        .collect();
    let b = match cfg.bandwidth {
        Some(b) if b > 0.0 => b,
        Some(_) => return Err(Error::InvalidParameter("bandwidth must be positive".into())),
        None => pilot_bandwidth(&batches, &w, cfg.n_paths),
    };
    if !(b > 0.0) {
        return Err(Error::Numerical("every path was killed; no bandwidth can be chosen".into()));
    }
    let bw = axis_bandwidths(b, &w);
    let bw_wide = axis_bandwidths(b * std::f64::consts::SQRT_2, &w);
    let per_target: Vec<(f64, f64, f64)> = targets
        .par_iter()
        .map(|y| {
            let est: Vec<f64> = batches.iter().map(|bt| kde(bt, y, &bw)).collect();
            let wide: f64 = batches.iter().map(|bt| kde(bt, y, &bw_wide) * bt.paths as f64).sum::<f64>() / cfg.n_paths as f64;
            let mean = est.iter().zip(&batches).map(|(e, bt)| e * bt.paths as f64).sum::<f64>() / cfg.n_paths as f64;
            let var = est.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (nb - 1) as f64;
            (mean, (var / nb as f64).sqrt(), (wide - mean).abs())
        })
        .collect();
    let killed = batches.iter().map(|b| b.killed).sum();
    Ok(KernelEstimate {
        method: Method::Mc,
        t,
        source: source.to_vec(),
        targets: targets.to_vec(),
        values: per_target.iter().map(|v| v.0).collect(),
        stderr: Some(per_target.iter().map(|v| v.1).collect()),
        bias: Some(per_target.iter().map(|v| v.2).collect()),
        measure_tag: "lebesgue".into(),
        diagnostics: Diagnostics {
            paths: Some(cfg.n_paths as u64),
            killed: Some(killed),
            bandwidth: Some(bw),
            ..Diagnostics::default()
        },
    })
}
