//! Model specifications and the built-in corpus.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use srheat_core::chart::build_exponential_chart;
use srheat_core::flag::DEFAULT_MAX_DEPTH;
use srheat_core::poly::{rational_vec, to_f64};
use srheat_core::{compute_flag, identity_chart, FlagData, HeatModel, MultiPoly, PolyVectorField, PrivilegedChart, Rational};

use crate::{CliError, CliResult};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum DriftClass {
    #[default]
    #[serde(rename = "none")]
    None,
    /// Drift is a section of the distribution.
    D,
    /// Drift is a section of `D^2`.
    D2,
}

/// Model-specific numerical hints used when the run configuration leaves
/// them unset.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Numerics {
    #[serde(default)]
    pub box_lo: Option<Vec<f64>>,
    #[serde(default)]
    pub box_hi: Option<Vec<f64>>,
    #[serde(default)]
    pub fd_spacing: Option<Vec<f64>>,
    #[serde(default)]
    pub fd_dt: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub dim: usize,
    pub fields: Vec<PolyVectorField>,
    #[serde(default)]
    pub drift: Option<PolyVectorField>,
    #[serde(default)]
    pub potential: Option<MultiPoly>,
    #[serde(default)]
    pub density: Option<MultiPoly>,
    #[serde(with = "rational_vec")]
    pub base_point: Vec<Rational>,
    #[serde(default)]
    pub drift_class: DriftClass,
    #[serde(default)]
    pub tags: Vec<String>,
    #[serde(default)]
    pub numerics: Numerics,
}

const CORPUS: &[(&str, &str)] = &[
    ("euclidean1", include_str!("../corpus/euclidean1.json")),
    ("euclidean2", include_str!("../corpus/euclidean2.json")),
    ("heisenberg", include_str!("../corpus/heisenberg.json")),
    ("grushin_k1", include_str!("../corpus/grushin_k1.json")),
    ("grushin_k2", include_str!("../corpus/grushin_k2.json")),
    ("grushin_pert", include_str!("../corpus/grushin_pert.json")),
    ("grushin_pert_x2", include_str!("../corpus/grushin_pert_x2.json")),
    ("grushin_quadratic", include_str!("../corpus/grushin_quadratic.json")),
    ("martinet", include_str!("../corpus/martinet.json")),
];

pub fn corpus_names() -> Vec<&'static str> {
    CORPUS.iter().map(|(n, _)| *n).collect()
}

/// Raw JSON text of a corpus model.
pub fn corpus_source(name: &str) -> CliResult<&'static str> {
    CORPUS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, s)| *s)
        .ok_or_else(|| CliError::Usage(format!("unknown corpus model {name:?}; try `srheat corpus`")))
}

pub fn load_corpus(name: &str) -> CliResult<ModelSpec> {
    ModelSpec::from_json(corpus_source(name)?)
}

/// The chart used for the asymptotic checks and the flag data behind it.
pub struct ChartData {
    pub flag: FlagData,
    pub chart: PrivilegedChart,
    /// Whether the model coordinates were privileged and used as they are.
    pub identity: bool,
}

impl ModelSpec {
    pub fn from_json(text: &str) -> CliResult<Self> {
        let spec: ModelSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> CliResult<()> {
        let n = self.dim;
        let bad = |what: &str| Err(CliError::Usage(format!("model {:?}: {what}", self.name)));
        if n == 0 || self.fields.is_empty() {
            return bad("needs a positive dimension and at least one field");
        }
        if self.fields.iter().chain(&self.drift).any(|x| x.dim() != n) {
            return bad("field dimension differs from dim");
        }
        if self.potential.iter().chain(&self.density).any(|p| p.dim() != n) {
            return bad("polynomial dimension differs from dim");
        }
        if self.base_point.len() != n {
            return bad("base point has the wrong length");
        }
        if (self.drift_class == DriftClass::None) != self.drift.is_none() {
            return bad("drift_class must be none exactly when no drift is given");
        }
        let nm = &self.numerics;
        for v in [&nm.box_lo, &nm.box_hi, &nm.fd_spacing].into_iter().flatten() {
            if v.len() != n {
                return bad("numerics vectors must have length dim");
            }
        }
        Ok(())
    }

    /// Canonical JSON, which is also what the model hash covers.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("model specs serialize")
    }

    pub fn sha256(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn base_point_f64(&self) -> Vec<f64> {
        self.base_point.iter().map(to_f64).collect()
    }

    pub fn default_box(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.dim;
        (
            self.numerics.box_lo.clone().unwrap_or_else(|| vec![-4.0; n]),
            self.numerics.box_hi.clone().unwrap_or_else(|| vec![4.0; n]),
        )
    }

    pub fn heat_model(&self, lo: Vec<f64>, hi: Vec<f64>) -> CliResult<HeatModel> {
        Ok(HeatModel::new(
            self.fields.clone(),
            self.drift.clone(),
            self.potential.clone(),
            self.density.clone(),
            lo,
            hi,
        )?)
    }

    pub fn flag(&self) -> CliResult<FlagData> {
        Ok(compute_flag(&self.fields, &self.base_point, DEFAULT_MAX_DEPTH)?)
    }

    /// The model coordinates when they are privileged at the base point,
    /// the exponential chart otherwise; jets are exact to degree `2r + 2`.
    pub fn chart(&self) -> CliResult<ChartData> {
        let flag = self.flag()?;
        let trunc = 2 * flag.r as i64 + 2;
        match identity_chart(&self.fields, &flag, &self.base_point, trunc) {
            Ok(chart) => Ok(ChartData { flag, chart, identity: true }),
            Err(_) => {
                let chart = build_exponential_chart(&self.fields, &flag, &self.base_point, trunc)?;
                Ok(ChartData {
                    flag,
                    chart,
                    identity: false,
                })
            }
        }
    }
}
