//! Run configuration: one JSON document, every field defaulted. The
//! resolved configuration, defaults included, is echoed into the manifest.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Mandatory for any Monte Carlo estimate.
    pub seed: Option<u64>,
    /// Worker threads; `SRHEAT_THREADS` overrides.
    pub threads: Option<usize>,
    /// Where reports go; recorded in the manifest, not echoed with the
    /// configuration, so reports do not depend on it.
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
    /// Multiplies error-multiple and +- tolerances; rate thresholds (the
    /// Cauchy shrink factor, the Kac slope) are unaffected.
    pub tolerance_scale: f64,
    pub mc: McSettings,
    pub fd: FdSettings,
    pub limit: LimitSettings,
    pub expansion: ExpansionSettings,
    pub homogeneity: HomogeneitySettings,
    pub kac: KacSettings,
    pub weyl: WeylSettings,
    pub damping: DampingSettings,
    pub coercivity: CoercivitySettings,
    pub duhamel: DuhamelSettings,
    pub simulate: SimulateSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            threads: None,
            out: None,
            tolerance_scale: 1.0,
            mc: McSettings::default(),
            fd: FdSettings::default(),
            limit: LimitSettings::default(),
            expansion: ExpansionSettings::default(),
            homogeneity: HomogeneitySettings::default(),
            kac: KacSettings::default(),
            weyl: WeylSettings::default(),
            damping: DampingSettings::default(),
            coercivity: CoercivitySettings::default(),
            duhamel: DuhamelSettings::default(),
            simulate: SimulateSettings::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McSettings {
    pub n_paths: usize,
    /// Steps per path; the time step is `t / steps`.
    pub steps: usize,
    pub bandwidth: Option<f64>,
    pub batches: usize,
}

impl Default for McSettings {
    fn default() -> Self {
        Self {
            n_paths: 200_000,
            steps: 500,
            bandwidth: None,
            batches: 20,
        }
    }
}

/// Finite-difference settings; unset entries fall back to the model's
/// numerics hints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FdSettings {
    pub spacing: Option<Vec<f64>>,
    pub dt: Option<f64>,
    pub box_lo: Option<Vec<f64>>,
    pub box_hi: Option<Vec<f64>>,
    pub tol: f64,
    pub error_estimate: bool,
}

impl Default for FdSettings {
    fn default() -> Self {
        Self {
            spacing: None,
            dt: None,
            box_lo: None,
            box_hi: None,
            tol: 1e-11,
            error_estimate: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodName {
    Mc,
    Fd,
}

pub type Pair = (Vec<f64>, Vec<f64>);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitSettings {
    pub eps_grid: Vec<f64>,
    pub tau: f64,
    /// Chart-coordinate pairs `(x, x')`; defaults to the origin pair.
    pub pairs: Option<Vec<Pair>>,
    pub methods: Vec<MethodName>,
    /// Required shrink factor of successive differences.
    pub shrink: f64,
    /// Cross-method agreement, in combined errors.
    pub agreement: f64,
}

impl Default for LimitSettings {
    fn default() -> Self {
        Self {
            eps_grid: vec![1.0, 0.5, 0.25, 0.125],
            tau: 1.0,
            pairs: None,
            methods: vec![MethodName::Mc, MethodName::Fd],
            shrink: 1.5,
            agreement: 3.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpansionSettings {
    /// Grid `{+-eps0 2^-j, j < levels}`.
    pub eps0: f64,
    pub levels: usize,
    pub order: usize,
    pub tau: f64,
    pub pairs: Option<Vec<Pair>>,
    pub method: MethodName,
    /// `|c1| <= oddness * stderr` at the origin pair.
    pub oddness: f64,
    /// Fit residual norm bound.
    pub residual: f64,
}

impl Default for ExpansionSettings {
    fn default() -> Self {
        Self {
            eps0: 0.5,
            levels: 3,
            order: 2,
            tau: 1.0,
            pairs: None,
            method: MethodName::Fd,
            oddness: 3.0,
            residual: 3.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HomogeneitySettings {
    /// Snapshot times of the single finite-difference run.
    pub times: Vec<f64>,
    pub lambdas: Vec<f64>,
    /// Chart points `x` paired with the origin; each is used at every time.
    pub points: Vec<Vec<f64>>,
    /// Residual bound in combined errors.
    pub tolerance: f64,
}

impl Default for HomogeneitySettings {
    fn default() -> Self {
        Self {
            times: vec![0.25, 1.0],
            lambdas: vec![0.5, 2.0],
            points: Vec::new(),
            tolerance: 5.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KacSettings {
    pub t_grid: Vec<f64>,
    /// Half-widths of the boxes around the base point.
    pub half_small: Option<Vec<f64>>,
    pub half_large: Option<Vec<f64>>,
    pub spacing: Option<Vec<f64>>,
    pub dt: Option<f64>,
    /// Offsets from the base point where the kernels are compared.
    pub offsets: Option<Vec<Vec<f64>>>,
    pub min_slope: f64,
}

impl Default for KacSettings {
    fn default() -> Self {
        Self {
            t_grid: vec![0.005, 0.01, 0.02, 0.03, 0.05],
            half_small: None,
            half_large: None,
            spacing: None,
            dt: None,
            offsets: None,
            min_slope: 3.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum WeylMode {
    /// `e(t, q, q)` at the base point.
    Pointwise,
    /// `int e(t, q, q) dmu(q)` over the cube of the given half-width around
    /// the base point, trapezoidal with `nodes` points per axis.
    Integrated { half_width: f64, nodes: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeylSettings {
    pub t_grid: Vec<f64>,
    pub mode: WeylMode,
    pub tolerance: f64,
}

impl Default for WeylSettings {
    fn default() -> Self {
        Self {
            t_grid: vec![0.5, 0.7, 1.0, 1.4, 2.0],
            mode: WeylMode::Pointwise,
            tolerance: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DampingSettings {
    pub gamma: f64,
    pub eps_grid: Vec<f64>,
    pub points: usize,
    /// Radius of the normalized sample ball; should exceed the cutoff's
    /// outer radius.
    pub radius: f64,
    /// Expected exponent; defaults to `1 - r gamma`.
    pub expected: Option<f64>,
    pub tolerance: f64,
}

impl Default for DampingSettings {
    fn default() -> Self {
        Self {
            gamma: 0.1,
            eps_grid: (0..9).map(|k| 10f64.powf(-1.0 - 0.5 * k as f64)).collect(),
            points: 4000,
            radius: 2.2,
            expected: None,
            tolerance: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoercivitySettings {
    pub points: usize,
    pub radius: f64,
    /// Optional known lower bound to confirm.
    pub expected_min: Option<f64>,
}

impl Default for CoercivitySettings {
    fn default() -> Self {
        Self {
            points: 10_000,
            radius: 10.0,
            expected_min: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DuhamelSettings {
    pub t: f64,
    pub nodes: usize,
    /// Chart targets; the origin is always included first.
    pub targets: Vec<Vec<f64>>,
    /// Unit-symbol agreement, in solver floors.
    pub unit_tolerance: f64,
    /// Origin-diagonal bound, in combined errors.
    pub origin_tolerance: f64,
}

impl Default for DuhamelSettings {
    fn default() -> Self {
        Self {
            t: 0.5,
            nodes: 16,
            targets: Vec::new(),
            unit_tolerance: 2.0,
            origin_tolerance: 3.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSettings {
    pub method: MethodName,
    pub times: Vec<f64>,
    /// Defaults to the base point.
    pub source: Option<Vec<f64>>,
    /// Defaults to the source.
    pub targets: Vec<Vec<f64>>,
}

impl Default for SimulateSettings {
    fn default() -> Self {
        Self {
            method: MethodName::Fd,
            times: vec![1.0],
            source: None,
            targets: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        let tols = [
            self.tolerance_scale,
            self.fd.tol,
            self.limit.shrink,
            self.limit.agreement,
            self.expansion.oddness,
            self.expansion.residual,
            self.homogeneity.tolerance,
            self.kac.min_slope,
            self.weyl.tolerance,
            self.damping.tolerance,
            self.duhamel.unit_tolerance,
            self.duhamel.origin_tolerance,
        ];
        if tols.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
            return Err(CliError::Usage("all tolerances must be positive and finite".into()));
        }
        Ok(())
    }

    /// The seed, or a usage error naming the estimator that needs it.
    pub fn require_seed(&self, what: &str) -> CliResult<u64> {
        self.seed
            .ok_or_else(|| CliError::Usage(format!("{what} uses Monte Carlo and needs a seed (--seed or \"seed\")")))
    }

    pub fn to_pretty_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configs serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = RunConfig::from_json("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
        let echoed = RunConfig::from_json(&cfg.to_pretty_json()).unwrap();
        assert_eq!(echoed, cfg);
    }

    #[test]
    fn bad_documents_are_usage_errors() {
        assert!(matches!(RunConfig::from_json("{\"sed\": 1}"), Err(CliError::Usage(_))));
        assert!(matches!(RunConfig::from_json("{\"tolerance_scale\": 0}"), Err(CliError::Usage(_))));
        assert!(RunConfig::default().require_seed("limit").is_err());
    }

    #[test]
    fn weyl_modes_parse() {
        let cfg = RunConfig::from_json(r#"{"weyl": {"mode": {"kind": "integrated", "half_width": 1.0, "nodes": 11}}}"#).unwrap();
        assert_eq!(cfg.weyl.mode, WeylMode::Integrated { half_width: 1.0, nodes: 11 });
    }
}
