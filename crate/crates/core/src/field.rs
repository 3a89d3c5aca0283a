//! Polynomial vector fields: brackets, anisotropic dilations and the
//! weighted-graded splitting.
//!
//! A monomial `x^a d_j` has weighted degree `<a, w> - w_j`. Pulling back by
//! the dilation `delta_eps` multiplies it by `eps^{<a,w> - w_j}`, so a part of
//! degree `k` satisfies `eps^{-k} delta_eps^* X = X`.

use std::collections::BTreeMap;
use std::fmt;

use num_traits::Zero;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::poly::{rational_powi, to_f64, weighted_degree, CompiledPoly, MultiPoly, Rational, TermJson};

/// Nondecreasing positive integer weights of the coordinates.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(transparent)]
pub struct Weights(Vec<u32>);

impl Weights {
    pub fn new(w: Vec<u32>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::InvalidParameter("weights must be nonempty".into()));
        }
        if w.contains(&0) {
            return Err(Error::InvalidParameter("weights must be positive".into()));
        }
        if w.windows(2).any(|p| p[0] > p[1]) {
            return Err(Error::InvalidParameter("weights must be nondecreasing".into()));
        }
        Ok(Self(w))
    }

    /// All weights equal to one.
    pub fn uniform(n: usize) -> Self {
        Self(vec![1; n])
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max(&self) -> u32 {
        *self.0.last().expect("weights are nonempty")
    }

    /// Homogeneous dimension, the sum of the weights.
    pub fn homogeneous_dim(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&x| x as f64).collect()
    }
}

impl<'de> Deserialize<'de> for Weights {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Weights::new(Vec::<u32>::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

impl std::ops::Index<usize> for Weights {
    type Output = u32;
    fn index(&self, i: usize) -> &u32 {
        &self.0[i]
    }
}

/// `sum_j a_j(x) d_{x_j}` with polynomial coefficients.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct PolyVectorField {
    dim: usize,
    components: Vec<MultiPoly>,
}

impl PolyVectorField {
    pub fn new(components: Vec<MultiPoly>) -> Result<Self> {
        let dim = components.len();
        if dim == 0 {
            return Err(Error::InvalidParameter("vector field needs at least one component".into()));
        }
        for c in &components {
            if c.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: c.dim(),
                });
            }
        }
        Ok(Self { dim, components })
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            components: vec![MultiPoly::zero(dim); dim],
        }
    }

    /// The coordinate field `d_{x_i}`.
    pub fn coordinate(dim: usize, i: usize) -> Self {
        let mut f = Self::zero(dim);
        f.components[i] = MultiPoly::one(dim);
        f
    }

    /// `p * d_{x_i}`.
    pub fn along(i: usize, p: MultiPoly) -> Self {
        let dim = p.dim();
        let mut f = Self::zero(dim);
        f.components[i] = p;
        f
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[MultiPoly] {
        &self.components
    }

    pub fn component(&self, j: usize) -> &MultiPoly {
        &self.components[j]
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(MultiPoly::is_zero)
    }

    /// Directional derivative `X f`.
    pub fn apply(&self, f: &MultiPoly) -> MultiPoly {
        let mut out = MultiPoly::zero(self.dim);
        for (j, a) in self.components.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            let d = f.derivative(j);
            if !d.is_zero() {
                out = &out + &(a * &d);
            }
        }
        out
    }

    /// Euclidean divergence `sum_j d_j a_j`.
    pub fn divergence(&self) -> MultiPoly {
        let mut out = MultiPoly::zero(self.dim);
        for (j, a) in self.components.iter().enumerate() {
            out = &out + &a.derivative(j);
        }
        out
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        Ok(Self {
            dim: self.dim,
            components: self.components.iter().zip(&other.components).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        Ok(Self {
            dim: self.dim,
            components: self.components.iter().zip(&other.components).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn scale(&self, c: &Rational) -> Self {
        self.map_components(|p| p.scale(c))
    }

    /// `f X` for a polynomial `f`.
    pub fn mul_poly(&self, f: &MultiPoly) -> Self {
        self.map_components(|p| p * f)
    }

    pub fn map_components<F: Fn(&MultiPoly) -> MultiPoly>(&self, f: F) -> Self {
        Self {
            dim: self.dim,
            components: self.components.iter().map(f).collect(),
        }
    }

    fn check_dim(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        Ok(())
    }

    /// Keeps only monomials whose weighted degree lies in `[lo, hi]`.
    pub fn degree_window(&self, w: &Weights, lo: i64, hi: i64) -> Self {
        let w = w.as_slice();
        Self {
            dim: self.dim,
            components: self
                .components
                .iter()
                .enumerate()
                .map(|(j, p)| {
                    p.filter(|e| {
                        let k = weighted_degree(e, w) - w[j] as i64;
                        lo <= k && k <= hi
                    })
                })
                .collect(),
        }
    }

    /// Weighted degrees present in the field, ascending.
    pub fn degrees(&self, w: &Weights) -> Vec<i64> {
        let ws = w.as_slice();
        let mut ds: Vec<i64> = self
            .components
            .iter()
            .enumerate()
            .flat_map(|(j, p)| p.terms().map(move |(e, _)| weighted_degree(e, ws) - ws[j] as i64))
            .collect();
        ds.sort_unstable();
        ds.dedup();
        ds
    }

    pub fn evaluate_exact(&self, x: &[Rational]) -> Vec<Rational> {
        self.components.iter().map(|p| p.eval(x)).collect()
    }

    pub fn evaluate(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim, "point dimension mismatch");
        self.components.iter().map(|p| p.eval_f64(x)).collect()
    }

    pub fn compile(&self) -> CompiledField {
        CompiledField {
            components: self.components.iter().map(MultiPoly::compile).collect(),
        }
    }
}

/// `[X, Y] = XY - YX`, with components `X(b_j) - Y(a_j)`.
pub fn lie_bracket(x: &PolyVectorField, y: &PolyVectorField) -> Result<PolyVectorField> {
    x.check_dim(y)?;
    let components = (0..x.dim)
        .map(|j| &x.apply(&y.components[j]) - &y.apply(&x.components[j]))
        .collect();
    Ok(PolyVectorField { dim: x.dim, components })
}

/// `eps^power * delta_eps^* X`. A monomial of weighted degree `k` is
/// multiplied by `eps^{k + power}`.
pub fn dilate_pullback(x: &PolyVectorField, w: &Weights, eps: &Rational, power: i64) -> Result<PolyVectorField> {
    if eps.is_zero() {
        return Err(Error::ZeroDilation);
    }
    if w.len() != x.dim {
        return Err(Error::DimensionMismatch {
            expected: x.dim,
            found: w.len(),
        });
    }
    let ws = w.as_slice();
    let components = x
        .components
        .iter()
        .enumerate()
        .map(|(j, p)| {
            let mut out = MultiPoly::zero(x.dim);
            for (e, c) in p.terms() {
                let k = weighted_degree(e, ws) - ws[j] as i64;
                out.add_term(e.clone(), c * rational_powi(eps, k + power));
            }
            out
        })
        .collect();
    Ok(PolyVectorField { dim: x.dim, components })
}

/// Splits `X` into homogeneous parts of weighted degree `min_deg..=max_deg`.
/// Empty parts are omitted; anything of degree above `max_deg` is dropped.
pub fn graded_parts(x: &PolyVectorField, w: &Weights, min_deg: i64, max_deg: i64) -> BTreeMap<i64, PolyVectorField> {
    let ws = w.as_slice();
    let mut parts: BTreeMap<i64, PolyVectorField> = BTreeMap::new();
    for (j, p) in x.components.iter().enumerate() {
        for (e, c) in p.terms() {
            let k = weighted_degree(e, ws) - ws[j] as i64;
            if k < min_deg || k > max_deg {
                continue;
            }
            parts
                .entry(k)
                .or_insert_with(|| PolyVectorField::zero(x.dim))
                .components[j]
                .add_term(e.clone(), c.clone());
        }
    }
    parts
}

pub fn evaluate(x: &PolyVectorField, point: &[f64]) -> Vec<f64> {
    x.evaluate(point)
}

/// Floating-point evaluation form of a [`PolyVectorField`].
#[derive(Clone, Debug)]
pub struct CompiledField {
    components: Vec<CompiledPoly>,
}

impl CompiledField {
    pub fn dim(&self) -> usize {
        self.components.len()
    }

    #[inline]
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, p) in out.iter_mut().zip(&self.components) {
            *o = p.eval(x);
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.components.len()];
        self.eval_into(x, &mut out);
        out
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(CompiledPoly::is_zero)
    }
}

impl fmt::Display for PolyVectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (j, p) in self.components.iter().enumerate() {
            if p.is_zero() {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "({p}) d{}", j + 1)?;
        }
        if first {
            write!(f, "0")?;
        }
        Ok(())
    }
}

impl fmt::Debug for PolyVectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

#[derive(Serialize, Deserialize)]
struct FieldJson {
    dim: usize,
    components: Vec<Vec<TermJson>>,
}

impl Serialize for PolyVectorField {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        FieldJson {
            dim: self.dim,
            components: self.components.iter().map(MultiPoly::to_term_json).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PolyVectorField {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = FieldJson::deserialize(d)?;
        if raw.components.len() != raw.dim {
            return Err(D::Error::custom(format!(
                "field has {} components but dim {}",
                raw.components.len(),
                raw.dim
            )));
        }
        let comps = raw
            .components
            .iter()
            .map(|t| MultiPoly::from_term_json(raw.dim, t))
            .collect::<Result<Vec<_>>>()
            .map_err(D::Error::custom)?;
        PolyVectorField::new(comps).map_err(D::Error::custom)
    }
}

/// Largest absolute coefficient, used only for diagnostics.
pub fn max_abs_coefficient(x: &PolyVectorField) -> f64 {
    x.components
        .iter()
        .flat_map(|p| p.terms().map(|(_, c)| to_f64(c).abs()))
        .fold(0.0, f64::max)
}
